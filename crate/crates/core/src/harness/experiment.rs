use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{DecodeOutcome, DecoderKind};
use crate::error::{Error, Result};
use crate::geometry::{sample_instance, Coverage, PlacementConfig, SystemInstance};
use crate::phy::{self, PhyConfig};
use crate::rng;
use crate::traffic::DegreeDistribution;

/// Decoder selector for experiments, including the SINR decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DecoderTag {
    Mac(DecoderKind),
    Phy,
}

impl DecoderTag {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mac(k) => k.name(),
            Self::Phy => "phy",
        }
    }

    /// Trials per grid point when the config does not say.
    pub fn default_trials(self) -> usize {
        match self {
            Self::Mac(DecoderKind::SpatioTemporal) | Self::Phy => 300,
            Self::Mac(_) => 30,
        }
    }
}

impl fmt::Display for DecoderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("phy") {
            Ok(Self::Phy)
        } else {
            s.parse().map(Self::Mac)
        }
    }
}

impl TryFrom<String> for DecoderTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DecoderTag> for String {
    fn from(t: DecoderTag) -> Self {
        t.name().to_string()
    }
}

/// A Monte Carlo sweep over loads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub decoder: DecoderTag,
    pub m: usize,
    pub tau: usize,
    pub r: f64,
    pub phy: Option<PhyConfig>,
    pub dist: DegreeDistribution,
    pub g_grid: Vec<f64>,
    pub mc_trials: usize,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn delta(&self) -> f64 {
        self.m as f64 * self.r * self.r * std::f64::consts::PI
    }

    /// Users for load `g`: `round(g tau m)`.
    pub fn users_for(&self, g: f64) -> usize {
        (g * (self.tau * self.m) as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_trials == 0 {
            return Err(Error::config("mc_trials must be at least 1"));
        }
        if self.g_grid.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::config("loads must be finite and non-negative"));
        }
        if self.g_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("load grid must be strictly increasing"));
        }
        if self.decoder == DecoderTag::Phy && self.phy.is_none() {
            return Err(Error::config("the phy decoder needs physical layer parameters"));
        }
        if let Some(p) = &self.phy {
            p.validate()?;
        }
        self.placement(1, 0).validate()?;
        if self.dist.support_max() > self.tau {
            return Err(Error::config("maximal degree exceeds the frame length"));
        }
        Ok(())
    }

    fn placement(&self, n: usize, seed: u64) -> PlacementConfig {
        PlacementConfig {
            n,
            m: self.m,
            tau: self.tau,
            r: self.r,
            seed,
        }
    }

    /// Seed of trial `trial` at grid point `g_index`.
    pub fn trial_seed(&self, g_index: usize, trial: usize) -> u64 {
        rng::derive_seed(self.master_seed, &[g_index as u64, trial as u64])
    }

    /// The instance decoded in a given trial. Every decoder run on the same
    /// spec sees the same instances.
    pub fn trial_instance(&self, g_index: usize, trial: usize) -> Result<SystemInstance> {
        let n = self.users_for(self.g_grid[g_index]);
        sample_instance(&self.placement(n, self.trial_seed(g_index, trial)), &self.dist)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Realized load `n / (tau m)`.
    pub g: f64,
    pub g_requested: f64,
    pub n: usize,
    pub p_coll: f64,
    pub plr: f64,
    pub throughput: f64,
    /// Standard error of `p_coll` across trials.
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub decoder: DecoderTag,
    pub rows: Vec<MetricRow>,
    /// Requested loads that round to zero users.
    pub skipped: Vec<f64>,
}

impl ExperimentResult {
    /// Row with the largest throughput.
    pub fn peak(&self) -> Option<&MetricRow> {
        self.rows.iter().max_by(|a, b| a.throughput.total_cmp(&b.throughput))
    }
}

fn decode_with(
    tag: DecoderTag,
    spec: &ExperimentSpec,
    inst: &SystemInstance,
    cov: &Coverage,
    seed: u64,
) -> Result<DecodeOutcome> {
    match tag {
        DecoderTag::Mac(k) => Ok(k.decode(inst, cov)),
        DecoderTag::Phy => {
            let cfg = spec
                .phy
                .as_ref()
                .ok_or_else(|| Error::config("the phy decoder needs physical layer parameters"))?;
            let chan = phy::sample_channel(inst, cfg, seed)?;
            Ok(phy::decode_phy_detailed(inst, &chan, cfg, cov, false).0)
        }
    }
}

fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs several decoders on shared instances. The result for each decoder is
/// identical to running it alone with the same spec.
pub fn run_comparison(spec: &ExperimentSpec, decoders: &[DecoderTag]) -> Result<Vec<ExperimentResult>> {
    spec.validate()?;
    let mut results: Vec<ExperimentResult> = decoders
        .iter()
        .map(|&d| ExperimentResult {
            decoder: d,
            rows: Vec::new(),
            skipped: Vec::new(),
        })
        .collect();
    for (gi, &g) in spec.g_grid.iter().enumerate() {
        let n = spec.users_for(g);
        if n == 0 {
            for r in &mut results {
                r.skipped.push(g);
            }
            continue;
        }
        let fractions: Vec<Vec<f64>> = (0..spec.mc_trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<f64>> {
                let inst = spec.trial_instance(gi, t)?;
                let cov = Coverage::new(&inst, spec.r);
                let seed = spec.trial_seed(gi, t);
                decoders
                    .iter()
                    .map(|&d| Ok(decode_with(d, spec, &inst, &cov, seed)?.n_collected() as f64 / n as f64))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (di, res) in results.iter_mut().enumerate() {
            let per_trial: Vec<f64> = fractions.iter().map(|f| f[di]).collect();
            let (p, se) = mean_and_stderr(&per_trial);
            let g_real = n as f64 / (spec.tau * spec.m) as f64;
            res.rows.push(MetricRow {
                g: g_real,
                g_requested: g,
                n,
                p_coll: p,
                plr: 1.0 - p,
                throughput: g_real * p,
                stderr: se,
                trials: spec.mc_trials,
            });
        }
    }
    Ok(results)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    Ok(run_comparison(spec, &[spec.decoder])?.remove(0))
}

/// Decodes one trial with each decoder on the same instance.
pub fn paired_trial(spec: &ExperimentSpec, g_index: usize, trial: usize, decoders: &[DecoderTag]) -> Result<Vec<DecodeOutcome>> {
    let inst = spec.trial_instance(g_index, trial)?;
    let cov = Coverage::new(&inst, spec.r);
    let seed = spec.trial_seed(g_index, trial);
    decoders.iter().map(|&d| decode_with(d, spec, &inst, &cov, seed)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxLoadFlag {
    /// Even the smallest load misses the target.
    NeverMet,
    /// No load in the grid exceeds the target.
    NeverExceeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxLoad {
    /// Last grid load before the packet loss ratio first exceeds the target.
    pub grid: f64,
    /// Linear interpolation of the crossing between that load and the next.
    pub interpolated: f64,
    pub flag: Option<MaxLoadFlag>,
}

/// Maximal load meeting a packet loss target. Rows must be sorted by load.
pub fn max_load_at_plr(rows: &[MetricRow], target: f64) -> MaxLoad {
    let Some(first_bad) = rows.iter().position(|r| r.plr > target) else {
        let g = rows.last().map_or(0.0, |r| r.g);
        return MaxLoad {
            grid: g,
            interpolated: g,
            flag: Some(MaxLoadFlag::NeverExceeded),
        };
    };
    if first_bad == 0 {
        return MaxLoad {
            grid: 0.0,
            interpolated: 0.0,
            flag: Some(MaxLoadFlag::NeverMet),
        };
    }
    let (a, b) = (&rows[first_bad - 1], &rows[first_bad]);
    let w = (target - a.plr) / (b.plr - a.plr);
    MaxLoad {
        grid: a.g,
        interpolated: a.g + w * (b.g - a.g),
        flag: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityPoint {
    pub m: usize,
    pub r: f64,
    pub peak_g: f64,
    pub peak_throughput: f64,
    /// `m` times the normalized peak: decoded users per slot over all stations.
    pub unnormalized_peak: f64,
}

/// Peak throughput as the number of stations grows. With a physical layer
/// the radius is recalibrated for every `m`.
pub fn linearity_study(spec: &ExperimentSpec, m_grid: &[usize], calibration_samples: usize) -> Result<Vec<LinearityPoint>> {
    if m_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("station counts must be increasing"));
    }
    m_grid
        .iter()
        .map(|&m| {
            let mut s = spec.clone();
            s.m = m;
            if let Some(p) = &spec.phy {
                s.r = phy::calibrate_radius(p, m, calibration_samples, 1e-5, spec.master_seed)?.r;
            }
            let res = run_experiment(&s)?;
            let peak = *res.peak().ok_or_else(|| Error::config("empty load grid"))?;
            Ok(LinearityPoint {
                m,
                r: s.r,
                peak_g: peak.g,
                peak_throughput: peak.throughput,
                unnormalized_peak: m as f64 * peak.throughput,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit { slope, intercept, r2 }
}

pub const CSV_HEADER: &str = "decoder,delta,g_realized,p_coll,plr,throughput,stderr,trials,seed";

/// Writes rows in the fixed CSV layout, header included.
pub fn write_csv<W: Write>(mut w: W, result: &ExperimentResult, delta: f64, seed: u64) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            result.decoder, delta, r.g, r.p_coll, r.plr, r.throughput, r.stderr, r.trials, seed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::NamedDistribution;

    fn row(g: f64, plr: f64) -> MetricRow {
        MetricRow {
            g,
            g_requested: g,
            n: 1,
            p_coll: 1.0 - plr,
            plr,
            throughput: g * (1.0 - plr),
            stderr: 0.0,
            trials: 1,
        }
    }

    #[test]
    fn max_load_on_synthetic_rows() {
        let rows: Vec<MetricRow> = (1..=20).map(|i| row(i as f64 * 0.05 - 0.025, i as f64 * 0.05 - 0.025)).collect();
        let m = max_load_at_plr(&rows, 0.1);
        assert!((m.interpolated - 0.1).abs() < 1e-12);
        assert!((m.grid - 0.075).abs() < 1e-12);
        assert_eq!(max_load_at_plr(&rows, 0.01).flag, Some(MaxLoadFlag::NeverMet));
        assert_eq!(max_load_at_plr(&rows, 2.0).flag, Some(MaxLoadFlag::NeverExceeded));
    }

    #[test]
    fn linear_fit_exact_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    fn spec(decoder: DecoderTag, grid: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec {
            decoder,
            m: 4,
            tau: 5,
            r: 0.3,
            phy: None,
            dist: DegreeDistribution::named(NamedDistribution::Crdsa2),
            g_grid: grid,
            mc_trials: 8,
            master_seed: 3,
        }
    }

    #[test]
    fn zero_users_are_skipped() {
        let s = spec(DecoderTag::Mac(DecoderKind::Temporal), vec![0.0, 0.5]);
        let r = run_experiment(&s).unwrap();
        assert_eq!(r.skipped, vec![0.0]);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].n, 10);
        assert_eq!(r.rows[0].throughput, r.rows[0].g * r.rows[0].p_coll);
    }

    #[test]
    fn spec_validation() {
        assert!(spec(DecoderTag::Phy, vec![0.1]).validate().is_err());
        assert!(spec(DecoderTag::Mac(DecoderKind::Spatial), vec![0.2, 0.1]).validate().is_err());
        let mut s = spec(DecoderTag::Mac(DecoderKind::Spatial), vec![0.1]);
        s.mc_trials = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn comparison_matches_single_runs() {
        let s = spec(DecoderTag::Mac(DecoderKind::Spatial), vec![0.2, 0.6]);
        let tags = [DecoderTag::Mac(DecoderKind::Spatial), DecoderTag::Mac(DecoderKind::SpatioTemporal)];
        let both = run_comparison(&s, &tags).unwrap();
        for (t, res) in tags.iter().zip(&both) {
            let single = run_experiment(&ExperimentSpec { decoder: *t, ..s.clone() }).unwrap();
            assert_eq!(&single, res);
        }
    }

    #[test]
    fn csv_layout() {
        let s = spec(DecoderTag::Mac(DecoderKind::Temporal), vec![0.5]);
        let r = run_experiment(&s).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &r, s.delta(), s.master_seed).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("temporal,"));
        assert_eq!(lines[1].split(',').count(), 9);
    }

    #[test]
    fn decoder_tags_parse() {
        assert_eq!("phy".parse::<DecoderTag>().unwrap(), DecoderTag::Phy);
        assert_eq!(
            "spatio-temporal".parse::<DecoderTag>().unwrap(),
            DecoderTag::Mac(DecoderKind::SpatioTemporal)
        );
        assert!("x".parse::<DecoderTag>().is_err());
    }
}
