//! Areas of unions of equal disks, and the samples `α_k`.
//!
//! `α_k` is the area of the union of `k` unit-area disks whose centres are
//! uniform in a unit-area disk. Areas are computed exactly by integrating
//! along the uncovered boundary arcs (Green's theorem), so the only Monte Carlo
//! error comes from the random centres.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rng::{self, purpose};

/// Radius of a disk of unit area.
pub fn unit_area_radius() -> f64 {
    1.0 / PI.sqrt()
}

/// Covered angular interval of one circle by a neighbour.
#[derive(Clone, Copy, Debug)]
struct Arc {
    mid: f64,
    half: f64,
}

/// Pairwise overlap data for a fixed set of equal disks, so that the union
/// area of any subset is cheap to evaluate.
#[derive(Clone, Debug)]
pub struct DiskArrangement {
    centers: Vec<Point>,
    radius: f64,
    // arcs[i * k + j]: part of circle i inside disk j.
    arcs: Vec<Option<Arc>>,
    // Circle i coincides with some j < i and contributes no boundary.
    shadowed: Vec<Vec<bool>>,
}

const COINCIDENT: f64 = 1e-12;

impl DiskArrangement {
    pub fn new(centers: &[Point], radius: f64) -> Self {
        let k = centers.len();
        let mut arcs = vec![None; k * k];
        let mut shadowed = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let dx = centers[j].x - centers[i].x;
                let dy = centers[j].y - centers[i].y;
                let d = (dx * dx + dy * dy).sqrt();
                if d < COINCIDENT * radius {
                    if j < i {
                        shadowed[i][j] = true;
                    }
                } else if d < 2.0 * radius {
                    arcs[i * k + j] = Some(Arc {
                        mid: dy.atan2(dx),
                        half: (d / (2.0 * radius)).acos(),
                    });
                }
            }
        }
        Self {
            centers: centers.to_vec(),
            radius,
            arcs,
            shadowed,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Area of the union of the disks selected by the bit mask.
    pub fn union_area_mask(&self, mask: u64) -> f64 {
        let k = self.len();
        let members: Vec<usize> = (0..k).filter(|&i| mask >> i & 1 == 1).collect();
        self.union_area_of(&members)
    }

    /// Area of the union of the listed disks.
    pub fn union_area_of(&self, members: &[usize]) -> f64 {
        let k = self.len();
        let r = self.radius;
        let mut total = 0.0;
        let mut spans: Vec<(f64, f64)> = Vec::with_capacity(2 * members.len());
        for &i in members {
            if members.iter().any(|&j| self.shadowed[i][j]) {
                continue;
            }
            spans.clear();
            for &j in members {
                if let Some(a) = self.arcs[i * k + j] {
                    let s = (a.mid - a.half).rem_euclid(TAU);
                    let e = s + 2.0 * a.half;
                    if e > TAU {
                        spans.push((s, TAU));
                        spans.push((0.0, e - TAU));
                    } else {
                        spans.push((s, e));
                    }
                }
            }
            let c = self.centers[i];
            let arc_term = |t1: f64, t2: f64| {
                0.5 * (r * r * (t2 - t1) + r * c.x * (t2.sin() - t1.sin())
                    - r * c.y * (t2.cos() - t1.cos()))
            };
            if spans.is_empty() {
                total += PI * r * r;
                continue;
            }
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cursor = 0.0;
            for &(s, e) in spans.iter() {
                if s > cursor {
                    total += arc_term(cursor, s);
                }
                cursor = f64::max(cursor, e);
            }
            if cursor < TAU {
                total += arc_term(cursor, TAU);
            }
        }
        total
    }
}

/// Exact area of a union of disks of equal `radius`.
pub fn union_area(centers: &[Point], radius: f64) -> f64 {
    let arr = DiskArrangement::new(centers, radius);
    let all: Vec<usize> = (0..centers.len()).collect();
    arr.union_area_of(&all)
}

/// Uniform point in the disk of the given radius around the origin.
pub fn uniform_in_disk<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Point {
    let rho = radius * rng.random::<f64>().sqrt();
    let phi = TAU * rng.random::<f64>();
    Point::new(rho * phi.cos(), rho * phi.sin())
}

/// Samples of `α_1, ..., α_kmax`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaSamples {
    pub k_max: usize,
    /// `samples[k - 1]` holds the draws of `α_k`.
    pub samples: Vec<Vec<f64>>,
    /// `means[k - 1]` is `ᾱ_k`.
    pub means: Vec<f64>,
}

const CACHE_MAGIC: &str = "# coop-aloha area samples v1";

impl AreaSamples {
    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.means[k - 1]
    }

    pub fn samples_of(&self, k: usize) -> &[f64] {
        &self.samples[k - 1]
    }

    fn from_samples(samples: Vec<Vec<f64>>) -> Self {
        let means = samples
            .iter()
            .map(|s| s.iter().sum::<f64>() / s.len().max(1) as f64)
            .collect();
        Self {
            k_max: samples.len(),
            samples,
            means,
        }
    }

    /// Writes the cache file through a temporary file and a rename.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let tmp = tempfile::NamedTempFile::new_in(dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            writeln!(w, "{CACHE_MAGIC}")?;
            writeln!(w, "# k_max={} n_samples={} seed={}", self.k_max, self.n_samples(), seed)?;
            writeln!(w, "k,sample_index,area")?;
            for (k, s) in self.samples.iter().enumerate() {
                for (i, a) in s.iter().enumerate() {
                    writeln!(w, "{},{},{}", k + 1, i, a)?;
                }
            }
            w.flush()?;
        }
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    /// Reads a cache file, checking it was produced with the given key.
    pub fn load(path: &Path, k_max: usize, n_samples: usize, seed: u64) -> Result<Self> {
        let f = BufReader::new(fs::File::open(path)?);
        let mut lines = f.lines();
        let bad = |what: &str| Error::config(format!("{}: {what}", path.display()));
        if lines.next().transpose()?.as_deref() != Some(CACHE_MAGIC) {
            return Err(bad("not an area sample cache"));
        }
        let key = format!("# k_max={k_max} n_samples={n_samples} seed={seed}");
        if lines.next().transpose()?.as_deref() != Some(key.as_str()) {
            return Err(bad("cache key mismatch"));
        }
        lines.next().transpose()?;
        let mut samples = vec![vec![0.0; n_samples]; k_max];
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            let mut it = line.split(',');
            let mut field = || it.next().ok_or_else(|| bad("short row"));
            let k: usize = field()?.parse().map_err(|_| bad("bad k"))?;
            let i: usize = field()?.parse().map_err(|_| bad("bad index"))?;
            let a: f64 = field()?.parse().map_err(|_| bad("bad area"))?;
            if k == 0 || k > k_max || i >= n_samples {
                return Err(bad("row out of range"));
            }
            samples[k - 1][i] = a;
            seen += 1;
        }
        if seen != k_max * n_samples {
            return Err(bad("truncated cache"));
        }
        Ok(Self::from_samples(samples))
    }

    /// Loads the cache when it matches, otherwise samples and writes it.
    pub fn load_or_generate(path: &Path, k_max: usize, n_samples: usize, seed: u64) -> Result<Self> {
        if let Ok(s) = Self::load(path, k_max, n_samples, seed) {
            return Ok(s);
        }
        let s = sample_alphas(k_max, n_samples, seed);
        s.save(path, seed)?;
        Ok(s)
    }

    /// `k,mean` table.
    pub fn write_means_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,alpha_mean")?;
        for (k, m) in self.means.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, m)?;
        }
        Ok(())
    }
}

/// Draws `n_samples` paths of `k_max` centres and records the union area of
/// every prefix. Sharing centres across `k` makes each path, and therefore the
/// means, non-decreasing in `k`.
pub fn sample_alphas(k_max: usize, n_samples: usize, seed: u64) -> AreaSamples {
    let paths: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[purpose::AREA, i as u64]);
            // Unit radius; areas are divided by pi afterwards.
            let centers: Vec<Point> = (0..k_max).map(|_| uniform_in_disk(&mut rng, 1.0)).collect();
            let arr = DiskArrangement::new(&centers, 1.0);
            let mut members = Vec::with_capacity(k_max);
            let mut prev = 1.0f64;
            (0..k_max)
                .map(|k| {
                    members.push(k);
                    let a = if k == 0 {
                        1.0
                    } else {
                        (arr.union_area_of(&members) / PI).clamp(1.0, 4.0)
                    };
                    // Adding a disk cannot shrink the union; remove rounding noise.
                    prev = prev.max(a);
                    prev
                })
                .collect()
        })
        .collect();
    let mut samples = vec![Vec::with_capacity(n_samples); k_max];
    for path in paths {
        for (k, a) in path.into_iter().enumerate() {
            samples[k].push(a);
        }
    }
    AreaSamples::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lens(d: f64, r: f64) -> f64 {
        2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
    }

    #[test]
    fn single_and_disjoint_disks() {
        assert_relative_eq!(union_area(&[Point::new(0.3, 0.1)], 2.0), 4.0 * PI, epsilon = 1e-12);
        let two = [Point::new(0.0, 0.0), Point::new(5.0, 0.0)];
        assert_relative_eq!(union_area(&two, 1.0), 2.0 * PI, epsilon = 1e-12);
        assert_eq!(union_area(&[], 1.0), 0.0);
    }

    #[test]
    fn two_disk_lens() {
        for d in [0.1, 0.7, 1.3, 1.99] {
            let a = union_area(&[Point::new(0.0, 0.0), Point::new(d, 0.0)], 1.0);
            assert_relative_eq!(a, 2.0 * PI - lens(d, 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn coincident_and_nested_disks() {
        let same = [Point::new(0.1, 0.1), Point::new(0.1, 0.1), Point::new(0.1, 0.1)];
        assert_relative_eq!(union_area(&same, 1.0), PI, epsilon = 1e-12);
    }

    #[test]
    fn arrangement_subsets() {
        let c = [Point::new(0.0, 0.0), Point::new(0.5, 0.0), Point::new(0.0, 3.0)];
        let arr = DiskArrangement::new(&c, 1.0);
        assert_relative_eq!(arr.union_area_mask(0b001), PI, epsilon = 1e-12);
        assert_relative_eq!(arr.union_area_mask(0b011), 2.0 * PI - lens(0.5, 1.0), epsilon = 1e-12);
        assert_relative_eq!(arr.union_area_mask(0b101), 2.0 * PI, epsilon = 1e-12);
        assert_relative_eq!(
            arr.union_area_mask(0b111),
            3.0 * PI - lens(0.5, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn alpha_samples_in_range_and_monotone() {
        let s = sample_alphas(12, 300, 5);
        assert_eq!(s.k_max, 12);
        assert!(s.samples_of(1).iter().all(|&a| a == 1.0));
        assert_eq!(s.mean(1), 1.0);
        for k in 1..=12 {
            assert!(s.samples_of(k).iter().all(|&a| (1.0..=4.0).contains(&a)));
        }
        assert!(s.means.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alphas.csv");
        let s = AreaSamples::load_or_generate(&path, 4, 50, 9).unwrap();
        let back = AreaSamples::load(&path, 4, 50, 9).unwrap();
        assert_eq!(s, back);
        assert!(AreaSamples::load(&path, 4, 50, 10).is_err());
        let mut buf = Vec::new();
        s.write_means_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("k,alpha_mean\n1,1\n"));
    }
}
