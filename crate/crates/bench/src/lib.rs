//! Shared inputs for the criterion benches.

use coop_aloha::geometry::{sample_instance, PlacementConfig};
use coop_aloha::{DegreeDistribution, NamedDistribution, SystemInstance};

/// Instance at the reference operating point `m = tau = 40`, with its radius.
pub fn reference_instance(delta: f64, g: f64, dist: NamedDistribution, seed: u64) -> (SystemInstance, f64) {
    let m = 40;
    let tau = 40;
    let n = (g * (m * tau) as f64).round() as usize;
    let cfg = PlacementConfig::from_delta(n, m, tau, delta, seed);
    let inst = sample_instance(&cfg, &DegreeDistribution::named(dist)).expect("reference config is valid");
    (inst, cfg.r)
}
