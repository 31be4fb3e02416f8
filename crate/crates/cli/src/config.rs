use std::path::Path;

use pntag_core::modem::{GmskParams, TimingRecoveryParams};
use pntag_core::rx::{SquelchParams, XlatingFirParams};
use pntag_core::sim::{BurstShape, Impairments};
use pntag_core::{AntennaPattern, LinkBudget};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Optional settings file. Every field may be omitted; explicit flags win
/// over anything set here.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub budget: Option<LinkBudget>,
    pub pattern: Option<AntennaPattern>,
    pub noise_floor_dbfs: Option<f64>,
    pub burst: Option<BurstShape>,
    pub impairments: Option<Impairments>,
    pub squelch: Option<SquelchParams>,
    pub fir: Option<XlatingFirParams>,
    pub gmsk: Option<GmskParams>,
    pub timing: Option<TimingRecoveryParams>,
    pub dc_window: Option<usize>,
    pub smoothing_samples: Option<usize>,
    pub threshold: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}
