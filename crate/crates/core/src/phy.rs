//! SINR physical layer: path loss, fading, power control and threshold
//! decoding with interference cancellation.
//!
//! A user `j` transmitting at power `P_j` is received at station `l` with
//! power `P_j g / r_jl^α`, where `g` is the product of an Exp(1) and a
//! LogNormal(0, 1) variable drawn independently per (user, station, slot).
//! Power control sets `P_j = (r_j^min)^α`, so every user arrives at its
//! nearest station with mean power `E[g]`.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, LogNormal};
use serde::{Deserialize, Serialize};

use crate::decode::DecodeOutcome;
use crate::error::{Error, Result};
use crate::geometry::{Coverage, Point, SystemInstance};
use crate::rng::{self, purpose};

/// How the calibration expectation applies path loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReading {
    /// `E[P_jl / N]` with `P_jl` the received power.
    #[default]
    ReceivedPower,
    /// `E[P_jl / r_jl^α / N]`, applying the path loss a second time.
    DoublePathLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyConfig {
    pub alpha: f64,
    pub theta: f64,
    pub noise: f64,
    #[serde(default)]
    pub snr_reading: SnrReading,
    /// A station that decodes a user also cancels it from its own signal,
    /// even when the user lies outside radius `r` of that station.
    #[serde(default = "default_true")]
    pub self_cancel: bool,
}

fn default_true() -> bool {
    true
}

impl PhyConfig {
    pub fn new(alpha: f64, theta: f64, noise: f64) -> Self {
        Self {
            alpha,
            theta,
            noise,
            snr_reading: SnrReading::ReceivedPower,
            self_cancel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::config("path loss exponent must be non-negative"));
        }
        if !(self.theta > 0.0) {
            return Err(Error::config("SINR threshold must be positive"));
        }
        if !(self.noise > 0.0) {
            return Err(Error::config("noise power must be positive"));
        }
        Ok(())
    }
}

/// Fading gains and transmit powers for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    m: usize,
    offsets: Vec<usize>,
    gains: Vec<f64>,
    pub tx_power: Vec<f64>,
    /// Distance from each user to its nearest station.
    pub r_min: Vec<f64>,
}

impl ChannelRealization {
    /// Gain of `user` at `station` in the `k`-th of its active slots.
    pub fn gain(&self, user: usize, station: usize, k: usize) -> f64 {
        self.gains[self.offsets[user] + k * self.m + station]
    }

    /// Gain of `user` at `station` in `slot`, if the user is active there.
    pub fn gain_at_slot(&self, inst: &SystemInstance, user: usize, station: usize, slot: usize) -> Option<f64> {
        inst.activations[user]
            .binary_search(&slot)
            .ok()
            .map(|k| self.gain(user, station, k))
    }

    /// Received power `P_j g / r_jl^α`, written as `g (r_min / r_jl)^α`.
    pub fn received_power(&self, inst: &SystemInstance, alpha: f64, user: usize, station: usize, k: usize) -> f64 {
        let d = inst.users[user].distance(&inst.stations[station]);
        let ratio = if d > 0.0 { self.r_min[user] / d } else { 1.0 };
        self.gain(user, station, k) * ratio.powf(alpha)
    }
}

fn nearest_distance(p: &Point, stations: &[Point]) -> f64 {
    stations
        .iter()
        .map(|b| p.dist2(b))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// One fading draw: Exp(1) times LogNormal(0, 1).
pub fn sample_gain<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    let ln = LogNormal::new(0.0, 1.0).expect("valid lognormal");
    e * ln.sample(rng)
}

pub fn sample_channel(inst: &SystemInstance, cfg: &PhyConfig, seed: u64) -> Result<ChannelRealization> {
    let mut rng = rng::stream(seed, &[purpose::CHANNEL]);
    build_channel(inst, cfg, || sample_gain(&mut rng))
}

impl ChannelRealization {
    /// Channel with every gain equal to one.
    pub fn without_fading(inst: &SystemInstance, cfg: &PhyConfig) -> Result<Self> {
        build_channel(inst, cfg, || 1.0)
    }
}

fn build_channel(inst: &SystemInstance, cfg: &PhyConfig, mut gain: impl FnMut() -> f64) -> Result<ChannelRealization> {
    if inst.stations.is_empty() && !inst.users.is_empty() {
        return Err(Error::config("no base station to attach users to"));
    }
    let m = inst.m();
    let mut offsets = Vec::with_capacity(inst.n() + 1);
    let mut gains = Vec::new();
    for act in &inst.activations {
        offsets.push(gains.len());
        for _ in 0..act.len() * m {
            gains.push(gain());
        }
    }
    offsets.push(gains.len());
    let r_min: Vec<f64> = inst.users.iter().map(|u| nearest_distance(u, &inst.stations)).collect();
    let tx_power = r_min.iter().map(|d| d.powf(cfg.alpha)).collect();
    Ok(ChannelRealization {
        m,
        offsets,
        gains,
        tx_power,
        r_min,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusCalibration {
    pub r: f64,
    /// Estimated mean SNR at the returned radius.
    pub snr: f64,
    /// Standard error of that estimate.
    pub snr_std_error: f64,
}

/// Largest radius at which the mean SNR of a power-controlled user still
/// reaches `theta`.
///
/// The expectation runs over fading and over the nearest-station distance of
/// a uniform user among `m` uniform stations. The same draws serve every
/// candidate radius, so the estimated SNR is exactly monotone in the radius.
pub fn calibrate_radius(cfg: &PhyConfig, m: usize, n_samples: usize, tol: f64, seed: u64) -> Result<RadiusCalibration> {
    cfg.validate()?;
    if m == 0 || n_samples == 0 {
        return Err(Error::config("calibration needs stations and samples"));
    }
    let mut rng = rng::stream(seed, &[purpose::CALIBRATION]);
    let mut stations = vec![Point::new(0.0, 0.0); m];
    let xs: Vec<f64> = (0..n_samples)
        .map(|_| {
            let u = Point::uniform(&mut rng);
            for s in stations.iter_mut() {
                *s = Point::uniform(&mut rng);
            }
            sample_gain(&mut rng) * nearest_distance(&u, &stations).powf(cfg.alpha)
        })
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let path_exp = match cfg.snr_reading {
        SnrReading::ReceivedPower => cfg.alpha,
        SnrReading::DoublePathLoss => 2.0 * cfg.alpha,
    };
    let snr = |r: f64| mean / (r.powf(path_exp) * cfg.noise);
    let result = |r: f64| RadiusCalibration {
        r,
        snr: snr(r),
        snr_std_error: sd / n.sqrt() / (r.powf(path_exp) * cfg.noise),
    };
    if path_exp == 0.0 {
        return if snr(1.0) >= cfg.theta {
            Ok(result(SQRT_2))
        } else {
            Err(Error::numerical("SNR threshold unreachable at any radius"))
        };
    }
    if snr(SQRT_2) >= cfg.theta {
        return Ok(result(SQRT_2));
    }
    let (mut lo, mut hi) = (0.0, SQRT_2);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if snr(mid) >= cfg.theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::numerical("SNR threshold unreachable at any radius"));
    }
    Ok(result(lo))
}

/// Per-sweep record of the interference at every check, for inspection.
pub type InterferenceHistory = Vec<Vec<f64>>;

/// Iterative SINR decoding over the frame.
///
/// In each sweep every station-slot pair looks at its strongest remaining
/// user and decodes it when `P / (N + I) ≥ θ`, where `I` sums all other
/// active users not yet cancelled at that pair, regardless of distance. A
/// decoded user is cancelled at every pair within radius `r` where it is
/// active, and at the decoding pair itself when `self_cancel` is set.
/// Decisions use the state at the start of the sweep.
pub fn decode_phy_spatiotemporal(inst: &SystemInstance, chan: &ChannelRealization, cfg: &PhyConfig, r: f64) -> DecodeOutcome {
    decode_phy_detailed(inst, chan, cfg, &Coverage::new(inst, r), false).0
}

pub fn decode_phy_detailed(
    inst: &SystemInstance,
    chan: &ChannelRealization,
    cfg: &PhyConfig,
    cov: &Coverage,
    record: bool,
) -> (DecodeOutcome, InterferenceHistory) {
    let (n, m, tau) = (inst.n(), inst.m(), inst.tau);
    let slot_users = inst.slot_lists();
    // Position of user j within slot_users[activations[j][k]].
    let mut slot_pos: Vec<Vec<u32>> = inst.activations.iter().map(|a| vec![0; a.len()]).collect();
    let mut next_pos = vec![0u32; tau];
    for j in 0..n {
        for (k, &t) in inst.activations[j].iter().enumerate() {
            slot_pos[j][k] = next_pos[t];
            next_pos[t] += 1;
        }
    }
    let n_checks = m * tau;
    let mut base = vec![0usize; n_checks + 1];
    for l in 0..m {
        for t in 0..tau {
            let c = l * tau + t;
            base[c + 1] = base[c] + slot_users[t].len();
        }
    }
    let mut power = vec![0.0; base[n_checks]];
    for j in 0..n {
        for (k, &t) in inst.activations[j].iter().enumerate() {
            for l in 0..m {
                power[base[l * tau + t] + slot_pos[j][k] as usize] = chan.received_power(inst, cfg.alpha, j, l, k);
            }
        }
    }
    let mut removed = vec![false; power.len()];
    let mut total: Vec<f64> = (0..n_checks).map(|c| power[base[c]..base[c + 1]].iter().sum()).collect();
    let mut dirty = vec![true; n_checks];
    let mut first = vec![0u32; n];
    let mut history = Vec::new();
    if record {
        history.push(total.clone());
    }
    let mut events: Vec<(usize, usize)> = Vec::new();
    let mut sweep = 0u32;
    loop {
        events.clear();
        for c in 0..n_checks {
            if !dirty[c] {
                continue;
            }
            dirty[c] = false;
            let mut best: Option<usize> = None;
            for e in base[c]..base[c + 1] {
                // Ties keep the earlier entry, which is the lower user index.
                if !removed[e] && best.is_none_or(|b| power[e] > power[b]) {
                    best = Some(e);
                }
            }
            if let Some(e) = best {
                let interference = (total[c] - power[e]).max(0.0);
                if power[e] >= cfg.theta * (cfg.noise + interference) {
                    events.push((c, e - base[c]));
                }
            }
        }
        if events.is_empty() {
            break;
        }
        sweep += 1;
        let mut changed = false;
        for &(c, p) in &events {
            let t = c % tau;
            let j = slot_users[t][p];
            if first[j] == 0 {
                first[j] = sweep;
                changed = true;
            }
            let mut cancel = |cc: usize, e: usize| {
                if !removed[e] {
                    removed[e] = true;
                    total[cc] = (total[cc] - power[e]).max(0.0);
                    dirty[cc] = true;
                    true
                } else {
                    false
                }
            };
            for &l in &cov.user_stations[j] {
                for (k, &tt) in inst.activations[j].iter().enumerate() {
                    let cc = l as usize * tau + tt;
                    changed |= cancel(cc, base[cc] + slot_pos[j][k] as usize);
                }
            }
            if cfg.self_cancel {
                changed |= cancel(c, base[c] + p);
            }
        }
        if record {
            history.push(total.clone());
        }
        if !changed {
            break;
        }
    }
    let mut out = DecodeOutcome::from_first_sweep(&first);
    out.iterations_used = sweep as usize;
    out.per_iteration_collected.resize(sweep as usize, 0);
    (out, history)
}
