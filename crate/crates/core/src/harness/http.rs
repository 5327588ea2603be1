//! Generic HTTP JSON provider: templated request bodies, path-based
//! response extraction, and retry with exponential backoff for transient
//! failures.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::harness::providers::{GenerationParams, GenerationRecord, Generator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSpec {
    pub endpoint: String,
    /// JSON body template with {prompt}, {temperature}, {top_p},
    /// {max_tokens} placeholders. {prompt} is substituted JSON-escaped.
    pub template: String,
    /// Dot path into the response body, e.g. "choices.0.text".
    pub text_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs_path: Option<String>,
    /// Name of the env var holding the bearer token; the secret itself is
    /// never stored in config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    250
}

impl HttpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint.is_empty() {
            return Err(EvalError::InvalidConfig("http provider needs an endpoint".into()));
        }
        if self.template.is_empty() {
            return Err(EvalError::InvalidConfig("http provider needs a request template".into()));
        }
        if self.text_path.is_empty() {
            return Err(EvalError::InvalidConfig("http provider needs a text path".into()));
        }
        Ok(())
    }
}

/// Walk a dot path ("choices.0.text"); numeric segments index arrays.
pub fn extract_path<'a>(
    body: &'a serde_json::Value,
    path: &str,
) -> std::result::Result<&'a serde_json::Value, String> {
    let mut cur = body;
    for seg in path.split('.') {
        cur = match (cur, seg.parse::<usize>()) {
            (serde_json::Value::Array(a), Ok(i)) => {
                a.get(i).ok_or_else(|| format!("index {i} out of bounds"))?
            }
            (serde_json::Value::Object(o), _) => {
                o.get(seg).ok_or_else(|| format!("missing key {seg:?}"))?
            }
            _ => return Err(format!("cannot descend into {seg:?}")),
        };
    }
    Ok(cur)
}

fn json_escape(s: &str) -> String {
    let quoted = serde_json::Value::String(s.to_string()).to_string();
    quoted[1..quoted.len() - 1].to_string()
}

fn render_body(template: &str, prompt: &str, params: &GenerationParams) -> String {
    template
        .replace("{prompt}", &json_escape(prompt))
        .replace("{temperature}", &format!("{}", params.temperature))
        .replace("{top_p}", &format!("{}", params.top_p))
        .replace("{max_tokens}", &format!("{}", params.max_tokens))
}

fn excerpt(s: &str) -> String {
    s.chars().take(200).collect()
}

pub struct HttpProvider {
    spec: HttpSpec,
    agent: ureq::Agent,
    auth: Option<String>,
}

impl HttpProvider {
    pub fn new(spec: HttpSpec) -> Result<Self> {
        spec.validate()?;
        let auth = match &spec.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                EvalError::InvalidConfig(format!("auth env var {var:?} not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(spec.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpProvider { spec, agent, auth })
    }

    fn attempt(&self, body: &str) -> Result<(u16, String)> {
        let mut req = self
            .agent
            .post(&self.spec.endpoint)
            .header("content-type", "application/json");
        if let Some(token) = &self.auth {
            req = req.header("authorization", &format!("Bearer {token}"));
        }
        let mut res = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(t) => EvalError::ProviderTimeout(t.to_string()),
            other => EvalError::Provider(other.to_string()),
        })?;
        let status = res.status().as_u16();
        let text = res
            .body_mut()
            .read_to_string()
            .map_err(|e| EvalError::Provider(e.to_string()))?;
        Ok((status, text))
    }

    fn parse_record(&self, body: &str, retries: u32) -> Result<GenerationRecord> {
        let value: serde_json::Value = serde_json::from_str(body).map_err(|_| {
            EvalError::Extraction {
                path: self.spec.text_path.clone(),
                excerpt: excerpt(body),
            }
        })?;
        let text = extract_path(&value, &self.spec.text_path)
            .ok()
            .and_then(|v| v.as_str())
            .ok_or_else(|| EvalError::Extraction {
                path: self.spec.text_path.clone(),
                excerpt: excerpt(body),
            })?
            .to_string();
        let token_logprobs = match &self.spec.logprobs_path {
            Some(path) => {
                let arr = extract_path(&value, path)
                    .ok()
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| EvalError::Extraction {
                        path: path.clone(),
                        excerpt: excerpt(body),
                    })?;
                Some(
                    arr.iter()
                        .map(|v| {
                            v.as_f64().ok_or_else(|| EvalError::Extraction {
                                path: path.clone(),
                                excerpt: excerpt(body),
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            None => None,
        };
        Ok(GenerationRecord {
            text,
            token_logprobs,
            provider: "http".into(),
            retries,
        })
    }
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl Generator for HttpProvider {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord> {
        params.validate()?;
        let body = render_body(&self.spec.template, prompt, params);
        let mut last: Option<EvalError> = None;
        for attempt in 0..=self.spec.max_retries {
            if attempt > 0 {
                // non-decreasing exponential backoff
                let delay = self.spec.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok((status, text)) if (200..300).contains(&status) => {
                    return self.parse_record(&text, attempt);
                }
                Ok((status, text)) => {
                    let err = EvalError::HttpStatus {
                        status,
                        body: excerpt(&text),
                    };
                    if !retryable_status(status) {
                        return Err(err);
                    }
                    last = Some(err);
                }
                Err(EvalError::ProviderTimeout(t)) => last = Some(EvalError::ProviderTimeout(t)),
                Err(other) => return Err(other),
            }
        }
        Err(EvalError::RetryExhausted {
            attempts: self.spec.max_retries + 1,
            last: last
                .map(|e| e.to_string())
                .unwrap_or_else(|| "no attempt recorded".into()),
        })
    }
}
