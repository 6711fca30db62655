use thiserror::Error;

pub const DEFAULT_TEMPLATE: &str = "final-v1";

const GRAMMAR_1: &str = "{{GRAMMAR_1}}";
const GRAMMAR_2: &str = "{{GRAMMAR_2}}";
const INSTANCE_1: &str = "{{INSTANCE_1}}";

const FINAL_V1: &str = "<GRAMMAR_1> is the initial grammar of the DSL. We evolved it to get <GRAMMAR_2>. \
<INSTANCE_1> was originally a text instance that followed <GRAMMAR_1>. Now I want you to analyze the \
differences between the two versions of the grammar and, based on these differences, modify <INSTANCE_1> \
and get <INSTANCE_2>, which will follow <GRAMMAR_2>. Please address the following things:
1. When evolving the instance, please do not omit any mandatory elements, such as characters enclosed by single quotes.
2. If <GRAMMAR_2> adds a new grammar rule or a new attribute that is optional or in an \"OR\" relationship (i.e., |), then please do not instantiate it.
3. Do not miss or add any auxiliary information in the instance, e.g., comments, formats (white space, indents, tabs, empty lines, etc.).

<GRAMMAR_1>
{{GRAMMAR_1}}
</GRAMMAR_1>

<GRAMMAR_2>
{{GRAMMAR_2}}
</GRAMMAR_2>

<INSTANCE_1>
{{INSTANCE_1}}
</INSTANCE_1>
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub grammar1: String,
    pub grammar2: String,
    pub instance1: String,
    pub template: String,
}

impl PromptBundle {
    pub fn new(grammar1: impl Into<String>, grammar2: impl Into<String>, instance1: impl Into<String>) -> Self {
        PromptBundle {
            grammar1: grammar1.into(),
            grammar2: grammar2.into(),
            instance1: instance1.into(),
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
}

pub fn template_text(name: &str) -> Option<&'static str> {
    (name == DEFAULT_TEMPLATE).then_some(FINAL_V1)
}

/// Substitutes the three inputs into the template in a single pass, so
/// placeholder-like text inside the inputs is left alone.
pub fn build_prompt(bundle: &PromptBundle) -> Result<String, PromptError> {
    for (name, text) in [
        ("grammar1", &bundle.grammar1),
        ("grammar2", &bundle.grammar2),
        ("instance1", &bundle.instance1),
    ] {
        if text.is_empty() {
            return Err(PromptError::EmptyInput(name));
        }
    }
    let template = template_text(&bundle.template).ok_or_else(|| PromptError::UnknownTemplate(bundle.template.clone()))?;
    let mut out = String::with_capacity(template.len() + bundle.grammar1.len() + bundle.grammar2.len() + bundle.instance1.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let (marker, value) = [
            (GRAMMAR_1, &bundle.grammar1),
            (GRAMMAR_2, &bundle.grammar2),
            (INSTANCE_1, &bundle.instance1),
        ]
        .into_iter()
        .find(|(m, _)| tail.starts_with(m))
        .expect("template placeholders are known");
        out.push_str(value);
        rest = &tail[marker.len()..];
    }
    out.push_str(rest);
    Ok(out)
}
