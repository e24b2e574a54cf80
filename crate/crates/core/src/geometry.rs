//! Placement on the unit square and the bipartite decoding graphs.
//!
//! Slots are zero-based throughout the crate: a frame has slots `0..tau`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::traffic::DegreeDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    /// Uniform point on `[-1/2, 1/2]^2`.
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            x: rng.random::<f64>() - 0.5,
            y: rng.random::<f64>() - 0.5,
        }
    }

    /// True when the disk of radius `2r` around the point lies inside the square.
    pub fn is_nominal(&self, r: f64) -> bool {
        let lim = 0.5 - 2.0 * r;
        self.x.abs() <= lim && self.y.abs() <= lim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub n: usize,
    pub m: usize,
    pub tau: usize,
    pub r: f64,
    pub seed: u64,
}

impl PlacementConfig {
    /// Config whose radius gives spatial degree `delta` for `m` stations.
    pub fn from_delta(n: usize, m: usize, tau: usize, delta: f64, seed: u64) -> Self {
        Self {
            n,
            m,
            tau,
            r: radius_for_delta(delta, m),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("need at least one base station"));
        }
        if self.tau == 0 {
            return Err(Error::config("need at least one slot per frame"));
        }
        if !(self.r > 0.0 && self.r <= std::f64::consts::SQRT_2) {
            return Err(Error::config(format!(
                "radius {} outside (0, sqrt 2]",
                self.r
            )));
        }
        Ok(())
    }

    /// Average spatial degree `m r^2 pi`.
    pub fn delta(&self) -> f64 {
        self.m as f64 * self.r * self.r * std::f64::consts::PI
    }

    /// Normalized load `n / (tau m)`.
    pub fn load(&self) -> f64 {
        self.n as f64 / (self.tau * self.m) as f64
    }
}

/// Radius giving spatial degree `delta` with `m` stations.
pub fn radius_for_delta(delta: f64, m: usize) -> f64 {
    (delta / (m as f64 * std::f64::consts::PI)).sqrt()
}

/// One realization of positions and activation patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemInstance {
    pub users: Vec<Point>,
    pub stations: Vec<Point>,
    /// Sorted, distinct, zero-based slots for each user.
    pub activations: Vec<Vec<usize>>,
    pub tau: usize,
}

impl SystemInstance {
    /// Assembles an instance from explicit parts, checking the activation sets.
    pub fn from_parts(
        users: Vec<Point>,
        stations: Vec<Point>,
        mut activations: Vec<Vec<usize>>,
        tau: usize,
    ) -> Result<Self> {
        if activations.len() != users.len() {
            return Err(Error::config("one activation set per user required"));
        }
        for (i, a) in activations.iter_mut().enumerate() {
            a.sort_unstable();
            a.dedup();
            if a.is_empty() || a.last().is_some_and(|&t| t >= tau) {
                return Err(Error::config(format!(
                    "user {i} has an empty or out-of-range activation set"
                )));
            }
        }
        Ok(Self {
            users,
            stations,
            activations,
            tau,
        })
    }

    pub fn n(&self) -> usize {
        self.users.len()
    }

    pub fn m(&self) -> usize {
        self.stations.len()
    }

    /// Users active in `slot`, in index order.
    pub fn active_in(&self, slot: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.activations[i].binary_search(&slot).is_ok())
            .collect()
    }

    /// Users active in each slot.
    pub fn slot_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.tau];
        for (i, act) in self.activations.iter().enumerate() {
            for &t in act {
                lists[t].push(i);
            }
        }
        lists
    }
}

/// Samples positions and activation sets, driven by `cfg.seed`.
///
/// Placement and activation use separate streams, so two instances with the
/// same seed and different degree distributions share their positions.
pub fn sample_instance(cfg: &PlacementConfig, dist: &DegreeDistribution) -> Result<SystemInstance> {
    cfg.validate()?;
    if dist.support_max() > cfg.tau {
        return Err(Error::config(format!(
            "maximal degree {} exceeds the {} slots of a frame",
            dist.support_max(),
            cfg.tau
        )));
    }
    let mut place = rng::stream(cfg.seed, &[purpose::PLACEMENT]);
    let mut act = rng::stream(cfg.seed, &[purpose::ACTIVATION]);
    let (users, stations) = sample_placement(cfg.n, cfg.m, &mut place);
    let activations = sample_activations(cfg.n, cfg.tau, dist, &mut act);
    Ok(SystemInstance {
        users,
        stations,
        activations,
        tau: cfg.tau,
    })
}

pub fn sample_placement<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> (Vec<Point>, Vec<Point>) {
    let users = (0..n).map(|_| Point::uniform(rng)).collect();
    let stations = (0..m).map(|_| Point::uniform(rng)).collect();
    (users, stations)
}

/// Degree from `dist`, then that many distinct slots uniformly at random.
pub fn sample_activations<R: Rng + ?Sized>(
    n: usize,
    tau: usize,
    dist: &DegreeDistribution,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| {
            let s = dist.sample(rng);
            let mut slots = index::sample(rng, tau, s).into_vec();
            slots.sort_unstable();
            slots
        })
        .collect()
}

/// Number of stations within distance `r` of `user`.
pub fn spatial_degree(inst: &SystemInstance, user: usize, r: f64) -> usize {
    let u = inst.users[user];
    let r2 = r * r;
    inst.stations.iter().filter(|b| u.dist2(b) <= r2).count()
}

/// User-to-station adjacency at a fixed radius.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coverage {
    /// Sorted station indices within range of each user.
    pub user_stations: Vec<Vec<u32>>,
    /// Sorted user indices within range of each station.
    pub station_users: Vec<Vec<u32>>,
}

const GRID_MIN_PAIRS: usize = 20_000;

impl Coverage {
    /// Picks brute force or grid hashing by problem size.
    pub fn new(inst: &SystemInstance, r: f64) -> Self {
        if inst.n() * inst.m() >= GRID_MIN_PAIRS && r < 0.2 {
            Self::grid(inst, r)
        } else {
            Self::brute_force(inst, r)
        }
    }

    pub fn brute_force(inst: &SystemInstance, r: f64) -> Self {
        let r2 = r * r;
        let user_stations = inst
            .users
            .iter()
            .map(|u| {
                inst.stations
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| u.dist2(b) <= r2)
                    .map(|(l, _)| l as u32)
                    .collect()
            })
            .collect();
        Self::from_user_lists(user_stations, inst.m())
    }

    /// Uniform grid with cell side at least `r`; each user scans a 3x3 block.
    pub fn grid(inst: &SystemInstance, r: f64) -> Self {
        let cells = ((1.0 / r).floor() as usize).clamp(1, 1024);
        let cell_of = |v: f64| (((v + 0.5) * cells as f64) as usize).min(cells - 1);
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); cells * cells];
        for (l, b) in inst.stations.iter().enumerate() {
            buckets[cell_of(b.y) * cells + cell_of(b.x)].push(l as u32);
        }
        let r2 = r * r;
        let user_stations = inst
            .users
            .iter()
            .map(|u| {
                let (cx, cy) = (cell_of(u.x), cell_of(u.y));
                let mut found = Vec::new();
                for gy in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
                    for gx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                        for &l in &buckets[gy * cells + gx] {
                            if u.dist2(&inst.stations[l as usize]) <= r2 {
                                found.push(l);
                            }
                        }
                    }
                }
                found.sort_unstable();
                found
            })
            .collect();
        Self::from_user_lists(user_stations, inst.m())
    }

    fn from_user_lists(user_stations: Vec<Vec<u32>>, m: usize) -> Self {
        let mut station_users = vec![Vec::new(); m];
        for (i, ls) in user_stations.iter().enumerate() {
            for &l in ls {
                station_users[l as usize].push(i as u32);
            }
        }
        Self {
            user_stations,
            station_users,
        }
    }
}

/// Which graph a [`DecodingGraph`] encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    /// Active users of one slot against all stations.
    SpatialSlot { slot: usize },
    /// All users against station-slot pairs; check `l * tau + t` is `(l, t)`.
    SpatioTemporal { tau: usize },
    /// Disjoint union of the per-slot graphs; a variable is a (user, slot) pair
    /// and check `l * tau + t` is `(l, t)`.
    SpatialFrame { tau: usize },
    /// Disjoint union of the per-station graphs; a variable is a (user, station)
    /// pair and check `l * tau + t` is `(l, t)`.
    PerStation { tau: usize },
}

/// Bipartite graph in compressed adjacency form.
///
/// Variable nodes carry the index of the user they stand for, so graphs whose
/// variables are replicas of a user (see [`GraphKind`]) map back to users.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodingGraph {
    pub kind: GraphKind,
    var_user: Vec<u32>,
    var_offsets: Vec<usize>,
    var_edges: Vec<u32>,
    check_offsets: Vec<usize>,
    check_edges: Vec<u32>,
}

impl DecodingGraph {
    /// Builds both adjacency directions from an edge list of `(variable, check)`.
    pub fn from_edges(
        kind: GraphKind,
        var_user: Vec<u32>,
        n_checks: usize,
        edges: &[(u32, u32)],
    ) -> Self {
        let n_vars = var_user.len();
        let (var_offsets, var_edges) = csr(n_vars, edges.iter().map(|&(v, c)| (v, c)));
        let (check_offsets, check_edges) = csr(n_checks, edges.iter().map(|&(v, c)| (c, v)));
        Self {
            kind,
            var_user,
            var_offsets,
            var_edges,
            check_offsets,
            check_edges,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.var_user.len()
    }

    pub fn n_checks(&self) -> usize {
        self.check_offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.var_edges.len()
    }

    pub fn var_user(&self, v: usize) -> usize {
        self.var_user[v] as usize
    }

    pub fn var_neighbors(&self, v: usize) -> &[u32] {
        &self.var_edges[self.var_offsets[v]..self.var_offsets[v + 1]]
    }

    pub fn check_neighbors(&self, c: usize) -> &[u32] {
        &self.check_edges[self.check_offsets[c]..self.check_offsets[c + 1]]
    }

    pub fn var_degree(&self, v: usize) -> usize {
        self.var_offsets[v + 1] - self.var_offsets[v]
    }

    pub fn check_degree(&self, c: usize) -> usize {
        self.check_offsets[c + 1] - self.check_offsets[c]
    }
}

fn csr(rows: usize, pairs: impl Iterator<Item = (u32, u32)> + Clone) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; rows + 1];
    for (a, _) in pairs.clone() {
        offsets[a as usize + 1] += 1;
    }
    for i in 0..rows {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut edges = vec![0u32; offsets[rows]];
    for (a, b) in pairs {
        edges[fill[a as usize]] = b;
        fill[a as usize] += 1;
    }
    for i in 0..rows {
        edges[offsets[i]..offsets[i + 1]].sort_unstable();
    }
    (offsets, edges)
}

/// Per-slot graph: active users of `slot` against the `m` stations.
pub fn build_g0(inst: &SystemInstance, slot: usize, r: f64) -> DecodingGraph {
    build_g0_from(inst, &Coverage::new(inst, r), slot)
}

pub fn build_g0_from(inst: &SystemInstance, cov: &Coverage, slot: usize) -> DecodingGraph {
    let active = inst.active_in(slot);
    let mut edges = Vec::new();
    for (v, &i) in active.iter().enumerate() {
        for &l in &cov.user_stations[i] {
            edges.push((v as u32, l));
        }
    }
    let var_user = active.iter().map(|&i| i as u32).collect();
    DecodingGraph::from_edges(GraphKind::SpatialSlot { slot }, var_user, inst.m(), &edges)
}

/// Frame graph: every user against every station-slot pair.
pub fn build_h0(inst: &SystemInstance, r: f64) -> DecodingGraph {
    build_h0_from(inst, &Coverage::new(inst, r))
}

pub fn build_h0_from(inst: &SystemInstance, cov: &Coverage) -> DecodingGraph {
    let tau = inst.tau;
    let mut edges = Vec::new();
    for i in 0..inst.n() {
        for &l in &cov.user_stations[i] {
            for &t in &inst.activations[i] {
                edges.push((i as u32, (l as usize * tau + t) as u32));
            }
        }
    }
    let var_user = (0..inst.n() as u32).collect();
    DecodingGraph::from_edges(GraphKind::SpatioTemporal { tau }, var_user, inst.m() * tau, &edges)
}

/// Union of the per-slot graphs of a frame, one variable per (user, active slot).
pub fn build_spatial_frame(inst: &SystemInstance, cov: &Coverage) -> DecodingGraph {
    let tau = inst.tau;
    let mut var_user = Vec::new();
    let mut edges = Vec::new();
    for i in 0..inst.n() {
        if cov.user_stations[i].is_empty() {
            continue;
        }
        for &t in &inst.activations[i] {
            let v = var_user.len() as u32;
            var_user.push(i as u32);
            for &l in &cov.user_stations[i] {
                edges.push((v, (l as usize * tau + t) as u32));
            }
        }
    }
    DecodingGraph::from_edges(GraphKind::SpatialFrame { tau }, var_user, inst.m() * tau, &edges)
}

/// Union of the per-station graphs, one variable per (user, covering station).
pub fn build_per_station(inst: &SystemInstance, cov: &Coverage) -> DecodingGraph {
    let tau = inst.tau;
    let mut var_user = Vec::new();
    let mut edges = Vec::new();
    for i in 0..inst.n() {
        for &l in &cov.user_stations[i] {
            let v = var_user.len() as u32;
            var_user.push(i as u32);
            for &t in &inst.activations[i] {
                edges.push((v, (l as usize * tau + t) as u32));
            }
        }
    }
    DecodingGraph::from_edges(GraphKind::PerStation { tau }, var_user, inst.m() * tau, &edges)
}
