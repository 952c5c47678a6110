use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::MAX_SAMPLES;
use crate::error::{Error, Result};
use crate::solver::SolverParams;
use crate::superpixels::BINS_PER_CHANNEL;

/// Every tunable of the pipeline. Missing keys take defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Target superpixel counts, one layer each, strictly decreasing.
    pub granularities: Vec<usize>,
    pub compactness: f64,
    pub slic_iters: usize,
    pub beta: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub pi: f64,
    pub psi: f64,
    pub tol: f64,
    pub max_iters: Option<usize>,
    /// Fixed at 16.
    pub histogram_bins: usize,
    /// Fixed at 256.
    pub kde_max_samples: usize,
    /// Seed for synthetic scene generation.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let solver = SolverParams::default();
        PipelineConfig {
            granularities: vec![400, 100],
            compactness: 10.0,
            slic_iters: 10,
            beta: solver.beta,
            lambda_x: solver.lambda_x,
            lambda_y: solver.lambda_y,
            pi: solver.pi,
            psi: solver.psi,
            tol: solver.tol,
            max_iters: solver.max_iters,
            histogram_bins: BINS_PER_CHANNEL,
            kde_max_samples: MAX_SAMPLES,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("config json: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            lambda_x: self.lambda_x,
            lambda_y: self.lambda_y,
            pi: self.pi,
            psi: self.psi,
            beta: self.beta,
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.granularities.is_empty() {
            return Err(Error::Parameter("granularities must not be empty".into()));
        }
        if self.granularities.contains(&0) || self.granularities.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter(format!(
                "granularities must be positive and strictly decreasing, got {:?}",
                self.granularities
            )));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(Error::Parameter(format!("compactness must be positive, got {}", self.compactness)));
        }
        if self.slic_iters == 0 {
            return Err(Error::Parameter("slic_iters must be at least 1".into()));
        }
        if self.histogram_bins != BINS_PER_CHANNEL {
            return Err(Error::Parameter(format!("histogram_bins is fixed at {BINS_PER_CHANNEL}")));
        }
        if self.kde_max_samples != MAX_SAMPLES {
            return Err(Error::Parameter(format!("kde_max_samples is fixed at {MAX_SAMPLES}")));
        }
        self.solver_params().validate()
    }
}
