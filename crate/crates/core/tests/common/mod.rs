#![allow(dead_code)]

use std::collections::BTreeSet;

use coop_aloha::{DecoderKind, Point, SystemInstance};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

pub fn instance(users: &[(f64, f64)], stations: &[(f64, f64)], acts: &[&[usize]], tau: usize) -> SystemInstance {
    SystemInstance::from_parts(
        users.iter().map(|&(x, y)| pt(x, y)).collect(),
        stations.iter().map(|&(x, y)| pt(x, y)).collect(),
        acts.iter().map(|a| a.to_vec()).collect(),
        tau,
    )
    .unwrap()
}

/// Small instance packed into a corner so that coverage is dense.
pub fn small_random_instance<R: Rng>(rng: &mut R, max_users: usize, max_stations: usize, max_slots: usize) -> (SystemInstance, f64) {
    let n = rng.random_range(1..=max_users);
    let m = rng.random_range(1..=max_stations);
    let tau = rng.random_range(1..=max_slots);
    let side = 0.3;
    let mut p = || pt(rng.random_range(-side..side), rng.random_range(-side..side));
    let users: Vec<Point> = (0..n).map(|_| p()).collect();
    let stations: Vec<Point> = (0..m).map(|_| p()).collect();
    let acts = (0..n)
        .map(|_| {
            let s = rng.random_range(1..=tau);
            let mut slots: Vec<usize> = (0..tau).collect();
            for i in 0..s {
                let j = rng.random_range(i..tau);
                slots.swap(i, j);
            }
            slots.truncate(s);
            slots
        })
        .collect();
    let r = rng.random_range(0.1..0.5);
    (SystemInstance::from_parts(users, stations, acts, tau).unwrap(), r)
}

fn covers(inst: &SystemInstance, l: usize, i: usize, r: f64) -> bool {
    let (u, b) = (inst.users[i], inst.stations[l]);
    (u.x - b.x).powi(2) + (u.y - b.y).powi(2) <= r * r
}

fn active(inst: &SystemInstance, i: usize, t: usize) -> bool {
    inst.activations[i].contains(&t)
}

/// Remaining users heard at station `l` in slot `t`.
fn heard(inst: &SystemInstance, pool: &BTreeSet<usize>, l: usize, t: usize, r: f64) -> Vec<usize> {
    pool.iter().copied().filter(|&i| active(inst, i, t) && covers(inst, l, i, r)).collect()
}

/// Removes singletons one at a time over the given check set until none is left.
fn peel_sets(
    inst: &SystemInstance,
    mut pool: BTreeSet<usize>,
    checks: &[(usize, usize)],
    r: f64,
) -> BTreeSet<usize> {
    let mut got = BTreeSet::new();
    loop {
        let hit = checks.iter().find_map(|&(l, t)| match heard(inst, &pool, l, t, r).as_slice() {
            [i] => Some(*i),
            _ => None,
        });
        match hit {
            Some(i) => {
                pool.remove(&i);
                got.insert(i);
            }
            None => return got,
        }
    }
}

/// Set-based reference decoders, written without any graph machinery.
pub fn oracle(kind: DecoderKind, inst: &SystemInstance, r: f64) -> Vec<bool> {
    let (n, m, tau) = (inst.users.len(), inst.stations.len(), inst.tau);
    let all: BTreeSet<usize> = (0..n).collect();
    let mut got = BTreeSet::new();
    match kind {
        DecoderKind::NonCooperative => {
            for l in 0..m {
                for t in 0..tau {
                    if let [i] = heard(inst, &all, l, t, r).as_slice() {
                        got.insert(*i);
                    }
                }
            }
        }
        DecoderKind::Spatial => {
            for t in 0..tau {
                let checks: Vec<_> = (0..m).map(|l| (l, t)).collect();
                got.extend(peel_sets(inst, all.clone(), &checks, r));
            }
        }
        DecoderKind::Temporal => {
            for l in 0..m {
                let checks: Vec<_> = (0..tau).map(|t| (l, t)).collect();
                got.extend(peel_sets(inst, all.clone(), &checks, r));
            }
        }
        DecoderKind::SpatioTemporal => {
            let checks: Vec<_> = (0..m).flat_map(|l| (0..tau).map(move |t| (l, t))).collect();
            got = peel_sets(inst, all, &checks, r);
        }
    }
    (0..n).map(|i| got.contains(&i)).collect()
}

pub fn subset(a: &[bool], b: &[bool]) -> bool {
    a.iter().zip(b).all(|(&x, &y)| !x || y)
}

/// Union area of equal disks by midpoint rule on a `res × res` grid over the
/// bounding box.
pub fn grid_union_area(centers: &[Point], radius: f64, res: usize) -> f64 {
    let x0 = centers.iter().map(|c| c.x).fold(f64::INFINITY, f64::min) - radius;
    let x1 = centers.iter().map(|c| c.x).fold(f64::NEG_INFINITY, f64::max) + radius;
    let y0 = centers.iter().map(|c| c.y).fold(f64::INFINITY, f64::min) - radius;
    let y1 = centers.iter().map(|c| c.y).fold(f64::NEG_INFINITY, f64::max) + radius;
    let (hx, hy) = ((x1 - x0) / res as f64, (y1 - y0) / res as f64);
    let r2 = radius * radius;
    let mut hits = 0usize;
    for a in 0..res {
        let x = x0 + (a as f64 + 0.5) * hx;
        for b in 0..res {
            let y = y0 + (b as f64 + 0.5) * hy;
            if centers.iter().any(|c| (c.x - x).powi(2) + (c.y - y).powi(2) <= r2) {
                hits += 1;
            }
        }
    }
    hits as f64 * hx * hy
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(stat: f64, dof: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}
