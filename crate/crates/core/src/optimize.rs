//! Random search over temporal degree distributions maximizing the
//! density-evolution threshold.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolution::{threshold_inverse, QResolution};
use crate::rng::{self, purpose};
use crate::traffic::{DegreeDistribution, DEFAULT_MAX_DEGREE};

/// Resolution of the `q` grid used while optimizing.
///
/// Coarser grids hide the small violation near `q = 0` caused by weight on
/// degree one and let such distributions win spuriously.
pub const DEFAULT_SEARCH_RESOLUTION: QResolution = QResolution::Grid(20_000);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub s_max: usize,
    pub delta: f64,
    pub iterations: usize,
    pub step_scale: f64,
    pub restarts: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Rejections in a row before the step shrinks.
    pub decay_after: usize,
    pub decay: f64,
    pub resolution: QResolution,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            s_max: DEFAULT_MAX_DEGREE,
            delta: 1.0,
            iterations: 2000,
            step_scale: 0.3,
            restarts: 5,
            seed: 0,
            grid_points: 101,
            decay_after: 20,
            decay: 0.98,
            resolution: DEFAULT_SEARCH_RESOLUTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedDistribution {
    pub dist: DegreeDistribution,
    pub g_star: f64,
    /// Best threshold after each iteration of the winning restart.
    pub trace: Vec<f64>,
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Remove the rounding residue so the sum is 1 to machine precision.
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        for x in &mut w {
            *x /= sum;
        }
    }
    w
}

fn objective(delta: f64, probs: &[f64], res: QResolution) -> f64 {
    match DegreeDistribution::new(probs.to_vec()) {
        Ok(d) => threshold_inverse(delta, &d, res).value,
        Err(_) => 0.0,
    }
}

struct Run {
    x: Vec<f64>,
    fx: f64,
    trace: Vec<f64>,
}

fn single_restart(cfg: &OptimizerConfig, restart: usize) -> Run {
    let mut rng = rng::stream(cfg.seed, &[purpose::SEARCH, restart as u64]);
    let n = cfg.s_max;
    let start: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = start.iter().sum();
    let mut x: Vec<f64> = start.iter().map(|v| v / total).collect();
    let mut fx = objective(cfg.delta, &x, cfg.resolution);
    let mut step = cfg.step_scale;
    let mut streak = 0;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let scale = 1.0 / (n as f64).sqrt();
    for _ in 0..cfg.iterations {
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| {
                let z: f64 = rng.sample(StandardNormal);
                xi + step * scale * z
            })
            .collect();
        let y = project_to_simplex(&y);
        let fy = objective(cfg.delta, &y, cfg.resolution);
        if fy > fx {
            x = y;
            fx = fy;
            streak = 0;
        } else {
            streak += 1;
            if streak >= cfg.decay_after {
                step *= cfg.decay;
                streak = 0;
            }
        }
        trace.push(fx);
    }
    Run { x, fx, trace }
}

/// Random search with restarts. Deterministic for a given config.
pub fn optimize_lambda(cfg: &OptimizerConfig) -> OptimizedDistribution {
    let runs: Vec<Run> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| single_restart(cfg, r))
        .collect();
    // First restart wins ties.
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.fx > a.fx { b } else { a })
        .expect("at least one restart");
    let dist = DegreeDistribution::new(best.x).expect("projection yields a distribution");
    OptimizedDistribution {
        dist,
        g_star: best.fx,
        trace: best.trace,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoMass {
    pub lambda1: f64,
    pub g_star: f64,
}

/// Grid search over `(Λ₁, 1 - Λ₁)`; ties go to the smaller `Λ₁`.
pub fn finetune_two_mass(delta: f64, grid_points: usize, res: QResolution) -> TwoMass {
    let grid_points = grid_points.max(2);
    let mut best = TwoMass {
        lambda1: 0.0,
        g_star: f64::NEG_INFINITY,
    };
    for i in 0..grid_points {
        let l1 = i as f64 / (grid_points - 1) as f64;
        let g = objective(delta, &[l1, 1.0 - l1], res);
        if g > best.g_star {
            best = TwoMass { lambda1: l1, g_star: g };
        }
    }
    best
}
