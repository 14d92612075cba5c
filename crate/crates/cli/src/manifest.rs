//! Run manifest written next to the result files.

use serde::{Deserialize, Serialize};

/// Record of one `simulate` invocation: the config it ran, when, with which
/// effective seed and thread count, which files it produced, and per-cell
/// degenerate-evaluation counters. Every listed output exists on successful
/// exit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub success: bool,
    pub started_at: String,
    pub finished_at: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub diagnostics: Vec<DiagnosticsEntry>,
}

/// Degenerate evaluations for one (scheme, test, adjustment, n, N) cell,
/// summed over populations. Degenerate draws count as non-rejections; this
/// is where they remain visible.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticsEntry {
    pub scheme: String,
    pub test: String,
    pub adjustment: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub degenerate_count: u64,
}
