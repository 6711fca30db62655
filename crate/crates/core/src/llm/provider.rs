use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("{status} {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Transport(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub api_key_env_var: Option<String>,
    pub timeout_secs: u64,
    pub temperature: f64,
    pub script_path: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn mock(script_path: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint_url: None,
            model_name: "mock".into(),
            api_key_env_var: None,
            timeout_secs: 120,
            temperature: 0.0,
            script_path: Some(script_path.into()),
        }
    }

    pub fn http(endpoint_url: impl Into<String>, model_name: impl Into<String>, api_key_env_var: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: model_name.into(),
            api_key_env_var: Some(api_key_env_var.into()),
            timeout_secs: 120,
            temperature: 0.0,
            script_path: None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Provider>, ProviderError> {
        match self.kind {
            ProviderKind::Mock => {
                let dir = self.script_path.as_ref().ok_or_else(|| ProviderError::Config("mock provider needs a script directory".into()))?;
                Ok(Box::new(MockProvider::from_dir(dir)?))
            }
            ProviderKind::Http => {
                let endpoint = self.endpoint_url.clone().ok_or_else(|| ProviderError::Config("http provider needs an endpoint".into()))?;
                let key_var = self.api_key_env_var.clone().ok_or_else(|| ProviderError::Config("http provider needs an API key variable".into()))?;
                Ok(Box::new(HttpProvider {
                    endpoint,
                    model: self.model_name.clone(),
                    key_var,
                    temperature: self.temperature,
                    timeout: Duration::from_secs(self.timeout_secs),
                }))
            }
        }
    }
}

/// Replays scripted responses in order, wrapping around when exhausted.
pub struct MockProvider {
    responses: Vec<String>,
    cursor: Mutex<usize>,
}

impl MockProvider {
    pub fn new(responses: Vec<String>) -> Self {
        MockProvider { responses, cursor: Mutex::new(0) }
    }

    /// Loads every `*.txt` file of `dir`, sorted by file name.
    pub fn from_dir(dir: &Path) -> Result<Self, ProviderError> {
        let read_err = |e: std::io::Error| ProviderError::Config(format!("{}: {e}", dir.display()));
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(read_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(ProviderError::Config(format!("no response files in {}", dir.display())));
        }
        let responses = files.iter().map(std::fs::read_to_string).collect::<Result<_, _>>().map_err(read_err)?;
        Ok(MockProvider::new(responses))
    }
}

impl Provider for MockProvider {
    fn complete(&self, _prompt: &str) -> Result<String, ProviderError> {
        if self.responses.is_empty() {
            return Err(ProviderError::Config("mock provider has no responses".into()));
        }
        let mut cursor = self.cursor.lock().expect("mock cursor lock");
        let response = self.responses[*cursor % self.responses.len()].clone();
        *cursor += 1;
        Ok(response)
    }
}

/// Chat-completion style endpoint: one user message, bearer auth.
pub struct HttpProvider {
    endpoint: String,
    model: String,
    key_var: String,
    temperature: f64,
    timeout: Duration,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl Provider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let key = std::env::var(&self.key_var).map_err(|_| ProviderError::MissingApiKey(self.key_var.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let response = client.post(&self.endpoint).bearer_auth(key).json(&body).send().map_err(transport)?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(ProviderError::Status { status: status.as_u16(), body });
        }
        let parsed: ChatResponse = response.json().map_err(transport)?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Transport("response has no choices".into()))
    }
}

fn transport(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Transport(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_wraps() {
        let m = MockProvider::new(vec!["a".into(), "b".into()]);
        let got: Vec<_> = (0..3).map(|_| m.complete("p").unwrap()).collect();
        assert_eq!(got, ["a", "b", "a"]);
    }

    #[test]
    fn missing_key_fails_before_network() {
        let config = ProviderConfig::http("http://127.0.0.1:9/never", "m", "COEVO_TEST_UNSET_KEY_VAR");
        let provider = config.build().unwrap();
        assert_eq!(
            provider.complete("p"),
            Err(ProviderError::MissingApiKey("COEVO_TEST_UNSET_KEY_VAR".into()))
        );
    }
}
