//! Experiment configuration files (JSON).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generators::Generator;
use crate::adversaries::ContaminationRecipe;
use crate::error::{Error, Result};
use crate::types::AlgoConstants;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    FilterMean,
    LearnDist { k_prime: usize },
    RobustPca {
        #[serde(default)]
        gamma: Option<f64>,
    },
    SampleMean,
    CoordinateMedian,
    GeometricMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2MeanError,
    SlicedW1Bounds,
    SlicedW2Bounds,
    PcaError,
    RuntimeMs,
    RemovedInlierFraction,
}

impl Metric {
    /// Names of the CSV rows this metric produces.
    pub fn row_names(self) -> &'static [&'static str] {
        match self {
            Metric::L2MeanError => &["l2_mean_error"],
            Metric::SlicedW1Bounds => &["sliced_w1_lower", "sliced_w1_upper"],
            Metric::SlicedW2Bounds => &["sliced_w2_lower", "sliced_w2_upper"],
            Metric::PcaError => &["pca_error"],
            Metric::RuntimeMs => &["runtime_ms"],
            Metric::RemovedInlierFraction => &["removed_inlier_fraction"],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub json: Option<String>,
}

fn default_tau() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: Generator,
    pub n: usize,
    pub recipe: ContaminationRecipe,
    pub estimator: Estimator,
    pub metrics: Vec<Metric>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    /// Failure probability used when delta comes from the rate formula.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Overrides the rate-formula delta.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub constants: AlgoConstants,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

/// Parses JSON, reporting the line and column of syntax and schema errors.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Malformed {
        line: e.line(),
        msg: format!("column {}: {e}", e.column()),
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.constants.validate()?;
        let d = self.generator.dim();
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        self.recipe.validate(d)?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("at least one metric is required"));
        }
        if let Estimator::LearnDist { k_prime } = self.estimator {
            if k_prime == 0 || k_prime > d {
                return Err(Error::InvalidRank { k: k_prime, d });
            }
        }
        if let Some(g) = &self.sweep {
            for &e in g.epsilon.iter().flatten() {
                if !(0.0..0.5).contains(&e) {
                    return Err(Error::invalid(format!("sweep epsilon {e} outside [0, 1/2)")));
                }
            }
            for &r in g.rho.iter().flatten() {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::invalid(format!("sweep rho {r} must be nonnegative")));
                }
            }
        }
        Ok(())
    }

    /// Concrete configurations for every grid point, in (epsilon, rho) order.
    pub fn grid(&self) -> Vec<ExperimentConfig> {
        let grid = self.sweep.clone().unwrap_or_default();
        let eps = grid.epsilon.unwrap_or_else(|| vec![self.recipe.epsilon]);
        let rho = grid.rho.unwrap_or_else(|| vec![self.recipe.rho]);
        let mut out = Vec::new();
        for &e in &eps {
            for &r in &rho {
                let mut c = self.clone();
                c.recipe.epsilon = e;
                c.recipe.rho = r;
                c.sweep = None;
                c.output = None;
                out.push(c);
            }
        }
        out
    }

    /// Stable identifier of a concrete configuration (seeds excluded).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..16].to_string()
    }
}
