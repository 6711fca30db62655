//! Prompting an LLM to migrate an instance, and pulling the result out of
//! its answer.

mod extract;
mod prompt;
mod provider;

use serde::Serialize;

pub use extract::{extract_instance, ExtractContext, Extraction};
pub use prompt::{build_prompt, template_text, PromptBundle, PromptError, DEFAULT_TEMPLATE};
pub use provider::{HttpProvider, MockProvider, Provider, ProviderConfig, ProviderError, ProviderKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunFailure {
    NoInstanceFound,
    /// The partial text is still evaluated.
    Truncated { partial: String },
    ProviderError { message: String },
}

impl RunFailure {
    pub fn kind(&self) -> &'static str {
        match self {
            RunFailure::NoInstanceFound => "no_instance_found",
            RunFailure::Truncated { .. } => "truncated",
            RunFailure::ProviderError { .. } => "provider_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LlmRunRecord {
    /// 1-based.
    pub run_index: usize,
    pub raw_response: String,
    pub extracted: Option<String>,
    pub failure: Option<RunFailure>,
}

impl LlmRunRecord {
    /// The text to score: the extracted instance, or the partial text of a
    /// truncated one.
    pub fn candidate(&self) -> Option<&str> {
        match (&self.extracted, &self.failure) {
            (Some(text), _) => Some(text),
            (None, Some(RunFailure::Truncated { partial })) => Some(partial),
            _ => None,
        }
    }
}

/// One prompt, completion and extraction.
pub fn run_once(provider: &dyn Provider, prompt: &str, context: &ExtractContext<'_>, run_index: usize) -> LlmRunRecord {
    let raw_response = match provider.complete(prompt) {
        Ok(raw) => raw,
        Err(e) => {
            return LlmRunRecord {
                run_index,
                raw_response: String::new(),
                extracted: None,
                failure: Some(RunFailure::ProviderError { message: e.to_string() }),
            }
        }
    };
    let (extracted, failure) = match extract_instance(&raw_response, context) {
        Extraction::Instance { text } => (Some(text), None),
        Extraction::Truncated { partial } => (None, Some(RunFailure::Truncated { partial })),
        Extraction::NoInstanceFound => (None, Some(RunFailure::NoInstanceFound)),
    };
    LlmRunRecord { run_index, raw_response, extracted, failure }
}
