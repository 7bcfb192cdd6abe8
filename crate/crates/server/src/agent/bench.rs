//! Timing records posted by the benchmark pages.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRecord {
    /// 1 = content present at load, 2 = content inserted after load.
    pub stage: u8,
    pub n: u32,
    pub per_element_ms: f64,
    pub total_ms: f64,
    pub browser_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<u32>,
}

impl BenchRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !matches!(self.stage, 1 | 2) {
            return Err(format!("stage must be 1 or 2, got {}", self.stage));
        }
        if self.n == 0 {
            return Err("n must be positive".into());
        }
        for (name, v) in [("per_element_ms", self.per_element_ms), ("total_ms", self.total_ms)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be a finite non-negative number"));
            }
        }
        let label = self.browser_label.trim();
        if label.is_empty() || label.len() > 128 || label.chars().any(char::is_control) {
            return Err("browser_label must be 1-128 printable characters".into());
        }
        Ok(())
    }
}
