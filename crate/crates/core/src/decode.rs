//! Peeling decoders with perfect interference cancellation.
//!
//! All four decoders peel a bipartite graph: a check node with exactly one
//! remaining neighbour reveals that variable, which is then removed together
//! with all its edges. They differ only in the graph that is peeled:
//!
//! | decoder          | variables             | checks          | sweep cap |
//! |------------------|-----------------------|-----------------|-----------|
//! | non-cooperative  | (user, slot)          | (station, slot) | 1         |
//! | spatial          | (user, slot)          | (station, slot) | m         |
//! | temporal         | (user, station)       | (station, slot) | tau       |
//! | spatio-temporal  | user                  | (station, slot) | tau * m   |
//!
//! Sweeps are synchronous: every check of degree one at the start of a sweep
//! fires, and the removals take effect before the next sweep.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{self, Coverage, DecodingGraph, SystemInstance};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub collected: Vec<bool>,
    pub iterations_used: usize,
    /// Users first collected in each sweep.
    pub per_iteration_collected: Vec<usize>,
}

impl DecodeOutcome {
    pub fn n_collected(&self) -> usize {
        self.collected.iter().filter(|&&c| c).count()
    }

    /// Builds the outcome from the sweep (1-based) at which each user was
    /// first collected, zero meaning never.
    pub fn from_first_sweep(first: &[u32]) -> Self {
        let iterations_used = first.iter().copied().max().unwrap_or(0) as usize;
        let mut per_iteration_collected = vec![0; iterations_used];
        for &s in first {
            if s > 0 {
                per_iteration_collected[s as usize - 1] += 1;
            }
        }
        Self {
            collected: first.iter().map(|&s| s > 0).collect(),
            iterations_used,
            per_iteration_collected,
        }
    }
}

/// Sweep index (1-based) at which every variable was removed, zero if never.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeelTrace {
    pub removed_at: Vec<u32>,
    pub sweeps: usize,
}

impl PeelTrace {
    pub fn removed(&self) -> Vec<bool> {
        self.removed_at.iter().map(|&s| s > 0).collect()
    }
}

struct PeelState {
    degree: Vec<u32>,
    // XOR of the indices of the remaining neighbours; equals the last
    // neighbour once the degree drops to one.
    xor: Vec<u32>,
}

impl PeelState {
    fn new(graph: &DecodingGraph) -> Self {
        let n = graph.n_checks();
        let mut degree = vec![0u32; n];
        let mut xor = vec![0u32; n];
        for c in 0..n {
            let nb = graph.check_neighbors(c);
            degree[c] = nb.len() as u32;
            xor[c] = nb.iter().fold(0, |a, &v| a ^ v);
        }
        Self { degree, xor }
    }

    fn remove(&mut self, graph: &DecodingGraph, v: u32, newly_singleton: &mut Vec<u32>) {
        for &c in graph.var_neighbors(v as usize) {
            let c = c as usize;
            self.degree[c] -= 1;
            self.xor[c] ^= v;
            if self.degree[c] == 1 {
                newly_singleton.push(c as u32);
            }
        }
    }
}

/// Synchronous peeling for at most `max_sweeps` sweeps.
pub fn peel(graph: &DecodingGraph, max_sweeps: usize) -> PeelTrace {
    let mut state = PeelState::new(graph);
    let mut removed_at = vec![0u32; graph.n_vars()];
    let mut work: Vec<u32> = (0..graph.n_checks() as u32)
        .filter(|&c| state.degree[c as usize] == 1)
        .collect();
    let mut batch = Vec::new();
    let mut next = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        batch.clear();
        for &c in &work {
            if state.degree[c as usize] == 1 {
                let v = state.xor[c as usize];
                if removed_at[v as usize] == 0 {
                    removed_at[v as usize] = u32::MAX;
                    batch.push(v);
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        sweeps += 1;
        next.clear();
        for &v in &batch {
            removed_at[v as usize] = sweeps as u32;
            state.remove(graph, v, &mut next);
        }
        std::mem::swap(&mut work, &mut next);
    }
    PeelTrace { removed_at, sweeps }
}

/// Peels one degree-one check at a time, chosen uniformly among the current
/// singletons. Used to check that the final removed set does not depend on
/// the schedule.
pub fn peel_random_schedule<R: Rng + ?Sized>(graph: &DecodingGraph, rng: &mut R) -> Vec<bool> {
    let mut state = PeelState::new(graph);
    let mut removed = vec![false; graph.n_vars()];
    let mut pool: Vec<u32> = (0..graph.n_checks() as u32)
        .filter(|&c| state.degree[c as usize] == 1)
        .collect();
    let mut fresh = Vec::new();
    while !pool.is_empty() {
        let c = pool.swap_remove(rng.random_range(0..pool.len())) as usize;
        if state.degree[c] != 1 {
            continue;
        }
        let v = state.xor[c];
        removed[v as usize] = true;
        fresh.clear();
        state.remove(graph, v, &mut fresh);
        pool.extend_from_slice(&fresh);
    }
    removed
}

/// Maps a variable-level trace to users through the graph's variable labels.
pub fn outcome_from_trace(graph: &DecodingGraph, trace: &PeelTrace, n_users: usize) -> DecodeOutcome {
    let mut first = vec![0u32; n_users];
    for (v, &s) in trace.removed_at.iter().enumerate() {
        if s > 0 {
            let u = graph.var_user(v);
            if first[u] == 0 || s < first[u] {
                first[u] = s;
            }
        }
    }
    DecodeOutcome::from_first_sweep(&first)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    #[serde(alias = "noncoop")]
    NonCooperative,
    Spatial,
    Temporal,
    #[serde(alias = "spatio-temporal")]
    SpatioTemporal,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 4] = [
        DecoderKind::NonCooperative,
        DecoderKind::Spatial,
        DecoderKind::Temporal,
        DecoderKind::SpatioTemporal,
    ];

    /// Graph peeled by this decoder.
    pub fn graph(self, inst: &SystemInstance, cov: &Coverage) -> DecodingGraph {
        match self {
            Self::NonCooperative | Self::Spatial => geometry::build_spatial_frame(inst, cov),
            Self::Temporal => geometry::build_per_station(inst, cov),
            Self::SpatioTemporal => geometry::build_h0_from(inst, cov),
        }
    }

    /// Sweep cap for an instance with `m` stations and `tau` slots.
    pub fn sweep_cap(self, m: usize, tau: usize) -> usize {
        match self {
            Self::NonCooperative => 1,
            Self::Spatial => m,
            Self::Temporal => tau,
            Self::SpatioTemporal => tau * m,
        }
    }

    pub fn decode(self, inst: &SystemInstance, cov: &Coverage) -> DecodeOutcome {
        let graph = self.graph(inst, cov);
        let trace = peel(&graph, self.sweep_cap(inst.m(), inst.tau));
        let mut out = outcome_from_trace(&graph, &trace, inst.n());
        if self == Self::NonCooperative {
            out.iterations_used = 1;
            out.per_iteration_collected.resize(1, 0);
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NonCooperative => "noncoop",
            Self::Spatial => "spatial",
            Self::Temporal => "temporal",
            Self::SpatioTemporal => "spatiotemporal",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "noncoop" | "noncooperative" => Ok(Self::NonCooperative),
            "spatial" => Ok(Self::Spatial),
            "temporal" => Ok(Self::Temporal),
            "spatiotemporal" | "st" => Ok(Self::SpatioTemporal),
            other => Err(Error::config(format!("unknown decoder '{other}'"))),
        }
    }
}

/// A user is collected iff it is alone among the active users of some
/// covering station in one of its slots.
pub fn decode_noncooperative(inst: &SystemInstance, r: f64) -> DecodeOutcome {
    DecoderKind::NonCooperative.decode(inst, &Coverage::new(inst, r))
}

/// Peels each slot's graph independently across stations.
pub fn decode_spatial(inst: &SystemInstance, r: f64) -> DecodeOutcome {
    DecoderKind::Spatial.decode(inst, &Coverage::new(inst, r))
}

/// Runs single-station SIC over the frame at each station independently.
pub fn decode_temporal(inst: &SystemInstance, r: f64) -> DecodeOutcome {
    DecoderKind::Temporal.decode(inst, &Coverage::new(inst, r))
}

/// Peels the frame graph, cancelling across both slots and stations.
pub fn decode_spatiotemporal(inst: &SystemInstance, r: f64) -> DecodeOutcome {
    DecoderKind::SpatioTemporal.decode(inst, &Coverage::new(inst, r))
}
