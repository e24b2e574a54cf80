//! Closed-form collection probabilities and bounds.
//!
//! Inclusion-exclusion over the covering stations of a user gives alternating
//! sums whose terms grow like `e^δ`. Evaluating them with Monte Carlo
//! estimates of the integrals multiplies the sampling error by the same
//! factor, which is harmless for small `δ` and fatal for `δ ≈ 9`. The
//! [`AsymptoticMode::Mixture`] route draws the station configuration first and
//! sums the inclusion-exclusion terms for that configuration exactly; each
//! draw is then a probability in `[0, 1]` and the estimate is stable.

use std::f64::consts::PI;

use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::area::{uniform_in_disk, unit_area_radius, AreaSamples, DiskArrangement};
use crate::error::{Error, Result};
use crate::evolution::{self, ThresholdFlag};
use crate::geometry::{PlacementConfig, Point};
use crate::rng::{self, purpose};
use crate::traffic::DegreeDistribution;

/// Tolerance for flagging probabilities outside `[0, 1]`.
pub const RANGE_TOL: f64 = 1e-6;

/// Station sets larger than this are handled by sampling interferers.
const MAX_ENUMERATED: usize = 10;
const INTERFERER_DRAWS: usize = 64;

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// A probability estimate with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormulaValue {
    pub value: f64,
    pub std_error: f64,
    /// Set when the value lies outside `[0, 1]` by more than [`RANGE_TOL`].
    pub out_of_range: bool,
}

impl FormulaValue {
    fn new(value: f64, std_error: f64) -> Self {
        Self {
            value,
            std_error,
            out_of_range: !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&value),
        }
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for i in 1..=n {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// `ζ_k = Σ_{d=k}^{m} C(d, k) Δ_d` with `Δ_d` the Binomial(m, p) law, for
/// `k = 1..=k_max`, evaluated in log space.
pub fn zeta(m: usize, p: f64, k_max: usize) -> Vec<f64> {
    let lf = ln_factorials(m);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    (1..=k_max.min(m))
        .map(|k| {
            let logs: Vec<f64> = (k..=m)
                .map(|d| {
                    let ln_choose_dk = lf[d] - lf[k] - lf[d - k];
                    let ln_delta = lf[m] - lf[d] - lf[m - d] + d as f64 * lp
                        + if m > d { (m - d) as f64 * lq } else { 0.0 };
                    ln_choose_dk + ln_delta
                })
                .collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                0.0
            } else {
                top.exp() * logs.iter().map(|l| (l - top).exp()).sum::<f64>()
            }
        })
        .collect()
}

/// Theorem-style exact non-cooperative probability and its boundary bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoncoopExact {
    /// Collection probability of a nominal user.
    pub nominal: FormulaValue,
    /// `nominal · (1 - 4r)^2`.
    pub lower: f64,
    /// `nominal · (1 - 4r)^2 + 8r - 16r^2`.
    pub upper: f64,
}

impl NoncoopExact {
    fn from_nominal(nominal: FormulaValue, r: f64) -> Self {
        let inner = (1.0 - 4.0 * r).powi(2);
        Self {
            nominal,
            lower: nominal.value * inner,
            upper: nominal.value * inner + 8.0 * r - 16.0 * r * r,
        }
    }
}

/// Smallest `K` beyond which `ζ_k` is negligible.
fn zeta_truncation(z: &[f64]) -> usize {
    z.iter().rposition(|&v| v > 1e-17).map_or(1, |i| i + 1)
}

fn check_exact_cfg(cfg: &PlacementConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.r > 0.25 {
        return Err(Error::config(format!(
            "exact non-cooperative formula needs r <= 1/4, got {}",
            cfg.r
        )));
    }
    if cfg.n == 0 {
        return Err(Error::config("exact formula needs at least one user"));
    }
    Ok(())
}

/// Finite-size non-cooperative collection probability with the integrals
/// replaced by averages over `areas`.
pub fn noncoop_exact(cfg: &PlacementConfig, areas: &AreaSamples) -> Result<NoncoopExact> {
    check_exact_cfg(cfg)?;
    let p = cfg.r * cfg.r * PI;
    let z = zeta(cfg.m, p, cfg.m);
    let k_needed = zeta_truncation(&z);
    if areas.k_max < k_needed {
        return Err(Error::config(format!(
            "area samples reach k = {}, need {}",
            areas.k_max, k_needed
        )));
    }
    let mut sum = KahanSum::default();
    let mut var = 0.0;
    for k in 1..=k_needed {
        let s = areas.samples_of(k);
        let vals: Vec<f64> = s
            .iter()
            .map(|&a| (1.0 - p * a / cfg.tau as f64).max(0.0).powi(cfg.n as i32 - 1))
            .collect();
        let (mean, v) = mean_var(&vals);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum.add(sign * z[k - 1] * mean);
        var += z[k - 1].powi(2) * v / vals.len() as f64;
    }
    let nominal = FormulaValue::new(sum.value(), var.sqrt());
    Ok(NoncoopExact::from_nominal(nominal, cfg.r))
}

/// Same quantity through the configuration mixture; see the module docs.
pub fn noncoop_exact_mixture(cfg: &PlacementConfig, configs: usize, seed: u64) -> Result<NoncoopExact> {
    check_exact_cfg(cfg)?;
    let p = cfg.r * cfg.r * PI;
    let others = cfg.n - 1;
    let tau = cfg.tau as f64;
    let stations = Binomial::new(cfg.m as u64, p).map_err(|e| Error::config(e.to_string()))?;
    let hits = Binomial::new(others as u64, (4.0 * p / tau).min(1.0))
        .map_err(|e| Error::config(e.to_string()))?;
    let law = MixtureLaw {
        term: &|a: f64| (1.0 - p * a / tau).max(0.0).powi(others as i32),
        stations: &|rng: &mut rng::StreamRng| stations.sample(rng) as usize,
        interferers: &|rng: &mut rng::StreamRng| hits.sample(rng) as usize,
    };
    let nominal = mixture_estimate(&law, configs, seed);
    Ok(NoncoopExact::from_nominal(nominal, cfg.r))
}

/// How the asymptotic alternating sum is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsymptoticMode {
    /// `Σ (-1)^{k-1} δ^k/k! · exp(-ᾱ_k δ G)`.
    Fast,
    /// `Σ (-1)^{k-1} δ^k/k! · mean(exp(-α_k δ G))` over the stored samples.
    Integral,
    /// Poisson configuration mixture with `configs` draws.
    Mixture { configs: usize, seed: u64 },
}

/// Asymptotic non-cooperative collection probability at spatial degree
/// `delta` and load `g`.
pub fn noncoop_asymptotic(delta: f64, g: f64, areas: &AreaSamples, mode: AsymptoticMode) -> Result<FormulaValue> {
    if !(delta > 0.0) || !(g >= 0.0) {
        return Err(Error::config("need delta > 0 and G >= 0"));
    }
    if let AsymptoticMode::Mixture { configs, seed } = mode {
        return Ok(noncoop_asymptotic_mixture(delta, &[g], configs, seed)[0]);
    }
    let k_needed = (5.0 * delta).ceil() as usize;
    if areas.k_max < k_needed {
        return Err(Error::config(format!(
            "area samples reach k = {}, need at least 5 delta = {}",
            areas.k_max, k_needed
        )));
    }
    let mut sum = KahanSum::default();
    let mut var = 0.0;
    let mut coef = 1.0;
    for k in 1..=areas.k_max {
        coef *= delta / k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let (mean, v) = match mode {
            AsymptoticMode::Fast => ((-areas.mean(k) * delta * g).exp(), 0.0),
            _ => {
                let vals: Vec<f64> = areas.samples_of(k).iter().map(|&a| (-a * delta * g).exp()).collect();
                mean_var(&vals)
            }
        };
        sum.add(sign * coef * mean);
        var += coef * coef * v / areas.n_samples().max(1) as f64;
    }
    Ok(FormulaValue::new(sum.value(), var.sqrt()))
}

/// Mixture evaluation over a whole load grid, sharing the station draws.
pub fn noncoop_asymptotic_mixture(delta: f64, g_grid: &[f64], configs: usize, seed: u64) -> Vec<FormulaValue> {
    let stations = Poisson::new(delta).ok();
    g_grid
        .iter()
        .map(|&g| {
            let mean_hits = 4.0 * delta * g;
            let hits = Poisson::new(mean_hits).ok();
            let law = MixtureLaw {
                term: &|a: f64| (-delta * g * a).exp(),
                stations: &|rng: &mut rng::StreamRng| stations.map_or(0, |d| d.sample(rng) as usize),
                interferers: &|rng: &mut rng::StreamRng| hits.map_or(0, |d| d.sample(rng) as usize),
            };
            mixture_estimate(&law, configs, seed)
        })
        .collect()
}

struct MixtureLaw<'a> {
    /// Probability that the union of the selected disks (area in units of
    /// one disk) holds no interferer.
    term: &'a (dyn Fn(f64) -> f64 + Sync),
    stations: &'a (dyn Fn(&mut rng::StreamRng) -> usize + Sync),
    /// Interferers inside the disk of twice the radius.
    interferers: &'a (dyn Fn(&mut rng::StreamRng) -> usize + Sync),
}

fn mixture_estimate(law: &MixtureLaw<'_>, configs: usize, seed: u64) -> FormulaValue {
    let radius = unit_area_radius();
    let vals: Vec<f64> = (0..configs)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[purpose::MIXTURE, c as u64]);
            let d = (law.stations)(&mut rng);
            let centers: Vec<Point> = (0..d).map(|_| uniform_in_disk(&mut rng, radius)).collect();
            if d == 0 {
                0.0
            } else if d <= MAX_ENUMERATED {
                enumerate_subsets(&centers, radius, law.term)
            } else {
                sample_interferers(&centers, radius, law.interferers, &mut rng)
            }
        })
        .collect();
    let (mean, var) = mean_var(&vals);
    FormulaValue::new(mean, (var / configs.max(1) as f64).sqrt())
}

fn enumerate_subsets(centers: &[Point], radius: f64, term: &dyn Fn(f64) -> f64) -> f64 {
    let arr = DiskArrangement::new(centers, radius);
    let mut sum = KahanSum::default();
    for mask in 1u64..(1u64 << centers.len()) {
        let a = arr.union_area_mask(mask);
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        sum.add(sign * term(a));
    }
    sum.value().clamp(0.0, 1.0)
}

fn sample_interferers(
    centers: &[Point],
    radius: f64,
    count: &dyn Fn(&mut rng::StreamRng) -> usize,
    rng: &mut rng::StreamRng,
) -> f64 {
    let r2 = radius * radius;
    let mut free = 0usize;
    let mut pts = Vec::new();
    for _ in 0..INTERFERER_DRAWS {
        let k = count(rng);
        pts.clear();
        pts.extend((0..k).map(|_| uniform_in_disk(rng, 2.0 * radius)));
        if centers.iter().any(|c| pts.iter().all(|p| p.dist2(c) > r2)) {
            free += 1;
        }
    }
    free as f64 / INTERFERER_DRAWS as f64
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Asymptotic upper bound for spatial cooperation:
/// `1 - e^{-δ} - (1 - e^{-δ/4}) e^{-2δ} (1 - e^{-Gδ/4})`.
pub fn spatial_upper_bound(delta: f64, g: f64) -> f64 {
    1.0 - (-delta).exp() + (-delta / 4.0).exp_m1() * (-2.0 * delta).exp() * -(-g * delta / 4.0).exp_m1()
}

/// Magnitude of the slope of [`spatial_upper_bound`] at `G = 0`.
pub fn spatial_slope(delta: f64) -> f64 {
    0.25 * delta * (-2.0 * delta).exp() * -(-delta / 4.0).exp_m1()
}

/// `δ Σ (-1)^{k-1} ᾱ_k δ^k / k!`, slope of the fast formula at `G = 0`.
/// Reported for inspection only.
pub fn noncoop_slope_diagnostic(delta: f64, areas: &AreaSamples) -> f64 {
    let mut sum = KahanSum::default();
    let mut coef = 1.0;
    for k in 1..=areas.k_max {
        coef *= delta / k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum.add(sign * coef * areas.mean(k));
    }
    delta * sum.value()
}

/// Lower bound for temporal cooperation: `(1 - e^{-δ}) ρ((1 + ε) 4 δ G)`.
pub fn temporal_lower_bound(delta: f64, g: f64, dist: &DegreeDistribution, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::config("epsilon must be positive"));
    }
    let h = (1.0 + eps) * 4.0 * delta * g;
    let rho = evolution::single_bs_rho(h, dist, 1_000_000, 1e-13);
    Ok(-(-delta).exp_m1() * rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBounds {
    pub temporal_lb: f64,
    pub noncoop: f64,
    pub spatial: f64,
    pub hstar_flag: Option<ThresholdFlag>,
}

/// `H*(Λ)/(4δ)` for temporal cooperation; the other two thresholds are zero.
pub fn threshold_bounds(delta: f64, dist: &DegreeDistribution) -> ThresholdBounds {
    let h = evolution::single_bs_hstar(dist, 1e-6);
    ThresholdBounds {
        temporal_lb: h.value / (4.0 * delta),
        noncoop: 0.0,
        spatial: 0.0,
        hstar_flag: h.flag,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakBounds {
    pub noncoop_lb: f64,
    pub temporal_lb: f64,
}

/// Peak throughput lower bounds at coverage `1 - ε`:
/// `(1/e)(1-ε)/ln(1/ε)` and `(H*/4)(1-ε)/ln(1/ε)`.
pub fn peak_throughput_bounds(eps_cov: f64, h_star: f64) -> Result<PeakBounds> {
    if !(eps_cov > 0.0 && eps_cov < 0.999) {
        return Err(Error::config(format!("coverage epsilon {eps_cov} outside (0, 0.999)")));
    }
    let f = (1.0 - eps_cov) / (1.0 / eps_cov).ln();
    Ok(PeakBounds {
        noncoop_lb: f / std::f64::consts::E,
        temporal_lb: h_star / 4.0 * f,
    })
}
