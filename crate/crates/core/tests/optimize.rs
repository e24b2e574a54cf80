use coop_aloha::evolution::{threshold_inverse, QResolution};
use coop_aloha::DegreeDistribution;
use coop_aloha::optimize::{finetune_two_mass, optimize_lambda, project_to_simplex, OptimizerConfig};
use proptest::prelude::*;

fn quick(delta: f64, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        delta,
        iterations: 150,
        restarts: 2,
        seed,
        resolution: QResolution::Grid(2000),
        ..OptimizerConfig::default()
    }
}

#[test]
fn search_is_reproducible_and_trace_is_monotone() {
    let a = optimize_lambda(&quick(2.0, 9));
    let b = optimize_lambda(&quick(2.0, 9));
    assert_eq!(a, b);
    assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(a.trace.last().copied(), Some(a.g_star));
    let c = optimize_lambda(&quick(2.0, 10));
    assert_ne!(a.trace, c.trace);
}

#[test]
fn finetune_picks_the_best_grid_point() {
    let res = QResolution::Grid(2000);
    let t = finetune_two_mass(1.0, 21, res);
    for i in 0..21 {
        let l1 = i as f64 / 20.0;
        let d = DegreeDistribution::new(vec![l1, 1.0 - l1]).unwrap();
        assert!(threshold_inverse(1.0, &d, res).value <= t.g_star + 1e-15, "{l1}");
    }
    let d = DegreeDistribution::new(vec![t.lambda1, 1.0 - t.lambda1]).unwrap();
    assert_eq!(threshold_inverse(1.0, &d, res).value, t.g_star);
}

proptest! {
    #[test]
    fn projection_lands_on_the_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let p = project_to_simplex(&v);
        prop_assert_eq!(p.len(), v.len());
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_nearest(v in prop::collection::vec(-2.0f64..2.0, 2..8), w in prop::collection::vec(0.0f64..1.0, 8)) {
        let p = project_to_simplex(&v);
        let again = project_to_simplex(&p);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // Any other simplex point is at least as far from v.
        let w = &w[..v.len()];
        let total: f64 = w.iter().sum();
        if total > 1e-9 {
            let q: Vec<f64> = w.iter().map(|x| x / total).collect();
            let d = |x: &[f64]| x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            prop_assert!(d(&p) <= d(&q) + 1e-10);
        }
    }
}
