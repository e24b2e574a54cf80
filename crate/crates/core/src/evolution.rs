//! And-or tree density evolution for spatio-temporal peeling.
//!
//! With spatial degree `delta`, load `g` and temporal distribution `Λ` of mean
//! `λ`, the erasure probabilities evolve as
//!
//! ```text
//! q_s = γ(p_{s-1}),   p_s = 1 - χ(1 - q_s),   p_0 = q_0 = 1
//! Γ(x) = Σ Λ_s exp(-δ (1 - x^s))
//! γ(x) = Σ (s Λ_s / λ) x^(s-1) exp(-δ (1 - x^s))
//! χ(x) = exp(-g δ λ (1 - x))
//! ```
//!
//! and a user is collected with probability `1 - Γ(p_∞)`.

use serde::{Deserialize, Serialize};

use crate::traffic::DegreeDistribution;

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_FP_TOL: f64 = 1e-10;
pub const DEFAULT_J_GRID: usize = 1000;
pub const DEFAULT_BISECT_TOL: f64 = 1e-4;

/// Margin below which the threshold condition counts as satisfied.
const STRICT_MARGIN: f64 = 1e-12;

/// `ρ(H) = 1` is read as `ρ(H) ≥ 1 - RHO_ONE_TOL`.
pub const RHO_ONE_TOL: f64 = 1e-9;

/// Node-perspective generating function `Γ`.
pub fn gamma_node(x: f64, delta: f64, dist: &DegreeDistribution) -> f64 {
    dist.support()
        .map(|(s, p)| p * (-delta * (1.0 - x.powi(s as i32))).exp())
        .sum()
}

/// Edge-perspective generating function `γ`.
pub fn gamma_edge(x: f64, delta: f64, dist: &DegreeDistribution) -> f64 {
    let lambda = dist.mean();
    dist.support()
        .map(|(s, p)| {
            let xs1 = x.powi(s as i32 - 1);
            (s as f64 * p / lambda) * xs1 * (-delta * (1.0 - xs1 * x)).exp()
        })
        .sum()
}

/// Check-node function `χ`.
pub fn chi_check(x: f64, delta: f64, g: f64, lambda_mean: f64) -> f64 {
    (-g * delta * lambda_mean * (1.0 - x)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionParams {
    pub delta: f64,
    pub g: f64,
    pub dist: DegreeDistribution,
    pub max_iters: usize,
    pub fp_tol: f64,
}

impl EvolutionParams {
    pub fn new(delta: f64, g: f64, dist: DegreeDistribution) -> Self {
        Self {
            delta,
            g,
            dist,
            max_iters: DEFAULT_MAX_ITERS,
            fp_tol: DEFAULT_FP_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub p_final: f64,
    pub q_final: f64,
    pub iters: usize,
    /// `p_0, p_1, ...`, starting at 1.
    pub p_trace: Vec<f64>,
}

pub fn evolve(params: &EvolutionParams) -> Evolution {
    let lambda = params.dist.mean();
    let mut p = 1.0;
    let mut q = 1.0;
    let mut trace = vec![1.0];
    let mut iters = 0;
    while iters < params.max_iters {
        q = gamma_edge(p, params.delta, &params.dist);
        let next = 1.0 - chi_check(1.0 - q, params.delta, params.g, lambda);
        iters += 1;
        trace.push(next);
        let step = (next - p).abs();
        p = next;
        if step < params.fp_tol {
            break;
        }
    }
    Evolution {
        p_final: p,
        q_final: q,
        iters,
        p_trace: trace,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_coll: f64,
    pub throughput: f64,
}

/// Heuristic collection probability `1 - Γ(p_S)` and throughput `g (1 - Γ(p_S))`.
pub fn predict(params: &EvolutionParams) -> Prediction {
    let ev = evolve(params);
    let p_coll = 1.0 - gamma_node(ev.p_final, params.delta, &params.dist);
    Prediction {
        p_coll,
        throughput: params.g * p_coll,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdFlag {
    /// The condition already fails for vanishing load.
    FailsAtZero,
    /// The condition still holds at the upper end of the search interval.
    UpperLimitReached,
    /// No degree above one, so interference cancellation cannot help.
    NoSicGain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub value: f64,
    pub flag: Option<ThresholdFlag>,
}

/// `f(G; q) = γ(1 - exp(-G δ λ q))`.
pub fn threshold_map(g: f64, q: f64, delta: f64, dist: &DegreeDistribution) -> f64 {
    gamma_edge(-(-g * delta * dist.mean() * q).exp_m1(), delta, dist)
}

fn below_threshold(g: f64, delta: f64, dist: &DegreeDistribution, j_grid: usize) -> bool {
    (1..=j_grid).all(|j| {
        let q = j as f64 / j_grid as f64;
        threshold_map(g, q, delta, dist) - q < -STRICT_MARGIN
    })
}

/// Largest `G` with `f(G; q_j) < q_j` on the grid `q_j = j / J`, by bisection.
pub fn threshold_estimate(
    delta: f64,
    dist: &DegreeDistribution,
    j_grid: usize,
    g_hi: f64,
    bisect_tol: f64,
) -> ThresholdEstimate {
    if !below_threshold(0.0, delta, dist, j_grid) {
        return ThresholdEstimate {
            value: 0.0,
            flag: Some(ThresholdFlag::FailsAtZero),
        };
    }
    if below_threshold(g_hi, delta, dist, j_grid) {
        return ThresholdEstimate {
            value: g_hi,
            flag: Some(ThresholdFlag::UpperLimitReached),
        };
    }
    let (mut lo, mut hi) = (0.0, g_hi);
    while hi - lo > bisect_tol {
        let mid = 0.5 * (lo + hi);
        if below_threshold(mid, delta, dist, j_grid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ThresholdEstimate {
        value: lo,
        flag: None,
    }
}

/// Search ceiling for [`threshold_estimate`]: just above the stability bound
/// when it exists.
pub fn default_g_hi(delta: f64, dist: &DegreeDistribution) -> f64 {
    match stability_bound(delta, dist) {
        Some(b) => b * 1.01 + 1e-3,
        None => 10.0 * delta.exp() / delta,
    }
}

/// Resolution of the `q` grid used by [`threshold_inverse`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QResolution {
    /// Grid `q_j = j / J`.
    Grid(usize),
    /// All of `(0, 1]`.
    Continuum,
}

const INVERSE_SCAN: usize = 2000;

/// Threshold through the change of variables `x = 1 - exp(-G δ λ q)`.
///
/// The condition `f(G; q) < q` becomes `G < h(x) = -ln(1 - x) / (δ λ γ(x))`,
/// so the threshold is the infimum of `h`. With a grid of resolution `J` only
/// the `x` where `γ(x) ≥ 1/J` can violate the condition; in the continuum any
/// weight on degree one makes the threshold zero.
///
/// Agrees with [`threshold_estimate`] to about `1e-5` for the same `J` and is
/// much cheaper, which is what the optimizer needs.
pub fn threshold_inverse(delta: f64, dist: &DegreeDistribution, res: QResolution) -> ThresholdEstimate {
    let lambda = dist.mean();
    let g0 = gamma_edge(0.0, delta, dist);
    let x_lo = match res {
        QResolution::Grid(j) => {
            let qmin = 1.0 / j as f64;
            if g0 >= qmin {
                return ThresholdEstimate {
                    value: 0.0,
                    flag: Some(ThresholdFlag::FailsAtZero),
                };
            }
            invert_gamma_edge(qmin, delta, dist)
        }
        QResolution::Continuum => {
            if g0 > 0.0 {
                return ThresholdEstimate {
                    value: 0.0,
                    flag: Some(ThresholdFlag::FailsAtZero),
                };
            }
            0.0
        }
    };
    let h = |x: f64| -(-x).ln_1p() / (delta * lambda * gamma_edge(x, delta, dist));
    let at = |u: f64| x_lo + (1.0 - x_lo) * u * u;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..INVERSE_SCAN {
        let x = at(i as f64 / INVERSE_SCAN as f64);
        if x <= 0.0 {
            continue;
        }
        let v = h(x);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    // Golden-section refinement inside the bracketing scan cells.
    let (mut a, mut b) = (
        best_i.saturating_sub(1) as f64 / INVERSE_SCAN as f64,
        (best_i + 1) as f64 / INVERSE_SCAN as f64,
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |u: f64| {
        let x = at(u);
        if x <= 0.0 {
            f64::INFINITY
        } else {
            h(x)
        }
    };
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if eval(c) < eval(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best = best.min(eval(0.5 * (a + b)));
    if res == QResolution::Continuum {
        // Limit of h as x -> 0 when γ(0) = 0.
        let slope = (-delta).exp() * 2.0 * dist.prob(2) / lambda;
        if slope > 0.0 {
            best = best.min(1.0 / (delta * lambda * slope));
        }
    }
    ThresholdEstimate {
        value: best,
        flag: None,
    }
}

fn invert_gamma_edge(target: f64, delta: f64, dist: &DegreeDistribution) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if gamma_edge(mid, delta, dist) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Upper bound on the threshold from the slope of `f` at `q = 0`:
/// `e^δ / δ · 1/(2Λ₂) · 1/(1 + δΛ₁/(2Λ₂))`. `None` when `Λ₂ = 0`.
pub fn stability_bound(delta: f64, dist: &DegreeDistribution) -> Option<f64> {
    let l2 = dist.prob(2);
    if l2 <= 0.0 {
        return None;
    }
    let l1 = dist.prob(1);
    Some(delta.exp() / delta / (2.0 * l2) / (1.0 + delta * l1 / (2.0 * l2)))
}

/// Asymptotic single-station SIC decoding probability `ρ(H)`.
pub fn single_bs_rho(h: f64, dist: &DegreeDistribution, max_iters: usize, fp_tol: f64) -> f64 {
    let lambda = dist.mean();
    let edge = |x: f64| -> f64 {
        dist.support()
            .map(|(s, p)| s as f64 * p / lambda * x.powi(s as i32 - 1))
            .sum()
    };
    let mut p = 1.0f64;
    for _ in 0..max_iters {
        let next = -(-h * lambda * edge(p)).exp_m1();
        let step = (next - p).abs();
        p = next;
        if step < fp_tol {
            break;
        }
    }
    1.0 - dist.support().map(|(s, l)| l * p.powi(s as i32)).sum::<f64>()
}

/// Largest `H` with `ρ(H) = 1`, by bisection on `[0, 1]`.
pub fn single_bs_hstar(dist: &DegreeDistribution, tol: f64) -> ThresholdEstimate {
    if dist.prob(1) >= 1.0 {
        return ThresholdEstimate {
            value: 0.0,
            flag: Some(ThresholdFlag::NoSicGain),
        };
    }
    let full = |h: f64| single_bs_rho(h, dist, 1_000_000, 1e-13) >= 1.0 - RHO_ONE_TOL;
    if full(1.0) {
        return ThresholdEstimate {
            value: 1.0,
            flag: Some(ThresholdFlag::UpperLimitReached),
        };
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if full(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ThresholdEstimate {
        value: lo,
        flag: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::NamedDistribution;
    use approx::assert_relative_eq;

    fn named(n: NamedDistribution) -> DegreeDistribution {
        DegreeDistribution::named(n)
    }

    #[test]
    fn generating_function_endpoints() {
        for n in [NamedDistribution::Aloha, NamedDistribution::Crdsa2, NamedDistribution::Irsa] {
            let d = named(n);
            assert_relative_eq!(gamma_node(1.0, 3.0, &d), 1.0, epsilon = 1e-15);
            assert_relative_eq!(gamma_node(0.0, 3.0, &d), (-3.0f64).exp(), epsilon = 1e-15);
            assert_relative_eq!(gamma_edge(1.0, 3.0, &d), 1.0, epsilon = 1e-15);
        }
        let a = named(NamedDistribution::Aloha);
        for x in [0.0, 0.3, 0.8] {
            let e = (-2.0f64 * (1.0 - x)).exp();
            assert_relative_eq!(gamma_node(x, 2.0, &a), e, epsilon = 1e-15);
            assert_relative_eq!(gamma_edge(x, 2.0, &a), e, epsilon = 1e-15);
        }
    }

    #[test]
    fn edge_function_is_normalized_derivative() {
        let d = named(NamedDistribution::Irsa);
        let delta = 1.7;
        let h = 1e-6;
        let deriv = |x: f64| (gamma_node(x + h, delta, &d) - gamma_node(x - h, delta, &d)) / (2.0 * h);
        let at_one = (gamma_node(1.0, delta, &d) - gamma_node(1.0 - h, delta, &d)) / h;
        // One-sided difference at 1 has O(h) error; use the exact Γ'(1) = δλ.
        assert!((at_one - delta * d.mean()).abs() < 1e-4);
        for i in 1..10 {
            let x = i as f64 / 10.0;
            let fd = deriv(x) / (delta * d.mean());
            assert!((fd - gamma_edge(x, delta, &d)).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi_check(1.0, 9.0, 0.3, 2.0), 1.0);
        assert_eq!(chi_check(0.2, 9.0, 0.0, 2.0), 1.0);
        assert_relative_eq!(chi_check(0.0, 9.0, 0.3, 2.0), 4.5165809426126665e-3, max_relative = 1e-12);
    }

    #[test]
    fn zero_load_evolution() {
        let p = EvolutionParams::new(9.0, 0.0, named(NamedDistribution::Crdsa2));
        let ev = evolve(&p);
        assert_eq!(ev.p_trace[1], 0.0);
        let pr = predict(&p);
        assert_relative_eq!(pr.p_coll, 1.0 - (-9.0f64).exp(), epsilon = 1e-15);
        assert_eq!(pr.throughput, 0.0);
    }

    #[test]
    fn below_threshold_reaches_coverage() {
        let p = EvolutionParams::new(9.0, 0.2, named(NamedDistribution::Crdsa2));
        let pr = predict(&p);
        assert!((pr.p_coll - (1.0 - (-9.0f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn crdsa2_peak_prediction() {
        let d = named(NamedDistribution::Crdsa2);
        let peak = (1..=80)
            .map(|i| predict(&EvolutionParams::new(9.0, i as f64 * 0.01, d.clone())).throughput)
            .fold(0.0, f64::max);
        assert!((peak - 0.34).abs() < 0.05, "peak {peak}");
    }

    #[test]
    fn stability_bound_values() {
        let d = named(NamedDistribution::Crdsa2);
        assert_relative_eq!(stability_bound(1.0, &d).unwrap(), std::f64::consts::E / 2.0, epsilon = 1e-12);
        let mixed = DegreeDistribution::new(vec![0.1, 0.9]).unwrap();
        let loose = 3f64.exp() / 3.0 / (2.0 * 0.9);
        assert!(stability_bound(3.0, &mixed).unwrap() < loose);
        assert!(stability_bound(3.0, &DegreeDistribution::new(vec![0.0, 0.0, 1.0]).unwrap()).is_none());
    }

    #[test]
    fn slope_at_origin_is_one_at_stability_bound() {
        let d = DegreeDistribution::new(vec![0.05, 0.7, 0.25]).unwrap();
        let delta = 2.5;
        let g = stability_bound(delta, &d).unwrap();
        let h = 1e-7;
        let slope = (threshold_map(g, h, delta, &d) - threshold_map(g, 0.0, delta, &d)) / h;
        assert!((slope - 1.0).abs() < 1e-5, "slope {slope}");
    }

    #[test]
    fn threshold_orders_and_bounds() {
        let crdsa = named(NamedDistribution::Crdsa2);
        let irsa = named(NamedDistribution::Irsa);
        let tol = 1e-4;
        let a = threshold_estimate(2.0, &crdsa, 1000, default_g_hi(2.0, &crdsa), tol);
        let b = threshold_estimate(2.0, &irsa, 1000, default_g_hi(2.0, &irsa), tol);
        assert!(a.flag.is_none() && b.flag.is_none());
        assert!(a.value > b.value);
        assert!(a.value <= stability_bound(2.0, &crdsa).unwrap() + tol);
        assert!(b.value <= stability_bound(2.0, &irsa).unwrap() + tol);
    }

    #[test]
    fn threshold_grid_convergence() {
        let irsa = named(NamedDistribution::Irsa);
        let tol = 1e-4;
        let a = threshold_estimate(1.0, &irsa, 1000, default_g_hi(1.0, &irsa), tol).value;
        let b = threshold_estimate(1.0, &irsa, 2000, default_g_hi(1.0, &irsa), tol).value;
        assert!((a - b).abs() < 2.0 * tol, "{a} vs {b}");
    }

    #[test]
    fn degree_one_mass_fails_at_zero() {
        let aloha = named(NamedDistribution::Aloha);
        let t = threshold_estimate(0.5, &aloha, 1000, 10.0, 1e-4);
        assert_eq!(t, ThresholdEstimate { value: 0.0, flag: Some(ThresholdFlag::FailsAtZero) });
        let t = threshold_inverse(0.5, &aloha, QResolution::Continuum);
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn inverse_route_matches_bisection() {
        let cases = [
            (0.1, vec![0.0, 0.54, 0.26, 0.01, 0.0, 0.01, 0.0, 0.18]),
            (1.0, vec![0.0, 0.91, 0.0, 0.0, 0.0, 0.0, 0.0, 0.09]),
            (2.0, vec![0.0, 1.0]),
            (5.0, vec![0.01, 0.99]),
            (3.0, vec![0.0, 0.5, 0.28, 0.0, 0.0, 0.0, 0.0, 0.22]),
        ];
        for (delta, probs) in cases {
            let d = DegreeDistribution::new(probs).unwrap();
            let j = 2000;
            let slow = threshold_estimate(delta, &d, j, default_g_hi(delta, &d), 1e-6).value;
            let fast = threshold_inverse(delta, &d, QResolution::Grid(j)).value;
            assert!((slow - fast).abs() < 2e-4 * slow.max(1e-3), "delta {delta}: {slow} vs {fast}");
        }
    }

    #[test]
    fn continuum_limit_is_stability_bound_for_crdsa2() {
        let d = named(NamedDistribution::Crdsa2);
        for delta in [1.0, 2.0, 4.0] {
            let c = threshold_inverse(delta, &d, QResolution::Continuum).value;
            assert!(c <= stability_bound(delta, &d).unwrap() * (1.0 + 1e-12));
            let g = threshold_inverse(delta, &d, QResolution::Grid(20_000)).value;
            assert!((c - g).abs() / c < 1e-3);
        }
    }

    #[test]
    fn rho_values() {
        let aloha = named(NamedDistribution::Aloha);
        assert_eq!(single_bs_rho(0.0, &aloha, 100, 1e-12), 1.0);
        assert_relative_eq!(single_bs_rho(0.7, &aloha, 100, 1e-12), (-0.7f64).exp(), epsilon = 1e-12);
        let crdsa = named(NamedDistribution::Crdsa2);
        assert!(single_bs_rho(0.5, &crdsa, 1_000_000, 1e-13) >= 1.0 - RHO_ONE_TOL);
        // Above H* the erasure fixed point solves p = 1 - exp(-2 H p).
        let rho = single_bs_rho(0.55, &crdsa, 1_000_000, 1e-13);
        let p = (1.0 - rho).sqrt();
        assert!(p > 0.1, "{rho}");
        assert!((p - (1.0 - (-1.1 * p).exp())).abs() < 1e-9);
    }

    #[test]
    fn hstar_values() {
        let aloha = named(NamedDistribution::Aloha);
        assert_eq!(single_bs_hstar(&aloha, 1e-4).flag, Some(ThresholdFlag::NoSicGain));
        let c = single_bs_hstar(&named(NamedDistribution::Crdsa2), 1e-4);
        assert!(c.value <= 0.5 && c.value > 0.49, "{c:?}");
        let i = single_bs_hstar(&named(NamedDistribution::Irsa), 1e-4);
        assert!(i.value > c.value, "{i:?}");
    }
}
