//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "decoder": "spatiotemporal",
//!   "m": 40,
//!   "tau": 40,
//!   "delta": 9.0,
//!   "distribution": "crdsa2",
//!   "g_grid": { "start": 0.025, "stop": 1.0, "step": 0.025 },
//!   "mc_trials": 300,
//!   "seed": 1
//! }
//! ```
//!
//! `distribution` is a name or a list of `[degree, probability]` pairs;
//! `g_grid` is a list or a range. Give either `delta` or `r`; with a `phy`
//! block and neither, the radius is calibrated.

use serde::{Deserialize, Serialize};

use super::experiment::{DecoderTag, ExperimentSpec};
use crate::error::{Error, Result};
use crate::geometry::radius_for_delta;
use crate::phy::{self, PhyConfig};
use crate::traffic::{DegreeDistribution, NamedDistribution, DEFAULT_MAX_DEGREE};

pub const DEFAULT_G_STEP: f64 = 0.025;
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionSpec {
    Named(NamedDistribution),
    Pairs(Vec<(usize, f64)>),
}

impl DistributionSpec {
    pub fn resolve(&self) -> Result<DegreeDistribution> {
        match self {
            Self::Named(n) => Ok(DegreeDistribution::named(*n)),
            Self::Pairs(p) => DegreeDistribution::from_pairs(p, DEFAULT_MAX_DEGREE),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    DEFAULT_G_STEP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range(GridRange),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::Range(GridRange {
            start: DEFAULT_G_STEP,
            stop: 1.0,
            step: DEFAULT_G_STEP,
        })
    }
}

impl GridSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            Self::List(v) => Ok(v.clone()),
            Self::Range(r) => load_range(r.start, r.stop, r.step),
        }
    }
}

/// `start, start + step, ...` up to `stop` inclusive, snapped to 1e-12.
pub fn load_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start {
        return Err(Error::config("load range needs step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyBlock {
    pub alpha: f64,
    pub theta: f64,
    pub noise: f64,
    #[serde(default)]
    pub snr_reading: phy::SnrReading,
    #[serde(default = "default_true")]
    pub self_cancel: bool,
    #[serde(default = "default_calibration")]
    pub calibration_samples: usize,
}

fn default_true() -> bool {
    true
}

fn default_calibration() -> usize {
    DEFAULT_CALIBRATION_SAMPLES
}

impl PhyBlock {
    pub fn config(&self) -> PhyConfig {
        PhyConfig {
            alpha: self.alpha,
            theta: self.theta,
            noise: self.noise,
            snr_reading: self.snr_reading,
            self_cancel: self.self_cancel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub decoder: DecoderTag,
    pub m: usize,
    pub tau: usize,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub g_grid: GridSpec,
    #[serde(default)]
    pub mc_trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phy: Option<PhyBlock>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Resolves names, grids and the radius into a runnable spec.
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        let r = match (self.r, self.delta, &self.phy) {
            (Some(_), Some(_), _) => return Err(Error::config("give either r or delta, not both")),
            (Some(r), None, _) => r,
            (None, Some(d), _) => {
                if !(d > 0.0) || self.m == 0 {
                    return Err(Error::config("delta must be positive with at least one station"));
                }
                radius_for_delta(d, self.m)
            }
            (None, None, Some(p)) => {
                phy::calibrate_radius(&p.config(), self.m, p.calibration_samples, 1e-5, self.seed)?.r
            }
            (None, None, None) => return Err(Error::config("need r or delta")),
        };
        let spec = ExperimentSpec {
            decoder: self.decoder,
            m: self.m,
            tau: self.tau,
            r,
            phy: self.phy.as_ref().map(PhyBlock::config),
            dist: self.distribution.resolve()?,
            g_grid: self.g_grid.resolve()?,
            mc_trials: self.mc_trials.unwrap_or(self.decoder.default_trials()),
            master_seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}
