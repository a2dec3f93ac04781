use serde::Serialize;

/// A rejected request: unknown plugin, run, job or parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{message}")]
pub struct RequestError {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl RequestError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            message: message.into(),
            field: None,
        }
    }

    pub fn field(mut self, field: &str) -> Self {
        self.field = Some(field.to_string());
        self
    }

    pub fn is_not_found(&self) -> bool {
        self.code.starts_with("unknown_run")
            || self.code == "unknown_job"
            || self.code == "unknown_config"
            || self.code == "unknown_route"
    }
}

impl From<hpolens_core::Error> for RequestError {
    fn from(e: hpolens_core::Error) -> Self {
        RequestError::new(e.code(), e.to_string())
    }
}
