//! Temporal degree distributions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximal temporal degree.
pub const DEFAULT_MAX_DEGREE: usize = 8;

const SUM_TOL: f64 = 1e-9;

/// Probability vector over temporal degrees `1..=s_max`.
///
/// `probs()[s - 1]` is the probability that a user transmits `s` replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DegreeDistribution {
    probs: Vec<f64>,
}

impl DegreeDistribution {
    /// Validates a dense probability vector. No renormalization is applied.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::config("degree distribution is empty"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(Error::config(format!(
                    "probability of degree {} is {p}, outside [0, 1]",
                    i + 1
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::config(format!(
                "degree probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Builds a dense distribution over `1..=s_max` from `(degree, probability)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)], s_max: usize) -> Result<Self> {
        let mut probs = vec![0.0; s_max];
        for &(s, p) in pairs {
            if s == 0 || s > s_max {
                return Err(Error::config(format!(
                    "degree {s} outside 1..={s_max}"
                )));
            }
            probs[s - 1] += p;
        }
        Self::new(probs)
    }

    /// All mass on degree `s`.
    pub fn point_mass(s: usize, s_max: usize) -> Result<Self> {
        Self::from_pairs(&[(s, 1.0)], s_max)
    }

    pub fn named(name: NamedDistribution) -> Self {
        let pairs: &[(usize, f64)] = match name {
            NamedDistribution::Aloha => &[(1, 1.0)],
            NamedDistribution::Crdsa2 => &[(2, 1.0)],
            NamedDistribution::Irsa => &[(2, 0.5), (3, 0.28), (8, 0.22)],
        };
        Self::from_pairs(pairs, DEFAULT_MAX_DEGREE).expect("named distributions are valid")
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `Λ_s`, zero outside the stored range.
    pub fn prob(&self, s: usize) -> f64 {
        if s == 0 {
            0.0
        } else {
            self.probs.get(s - 1).copied().unwrap_or(0.0)
        }
    }

    /// Length of the dense representation.
    pub fn max_degree(&self) -> usize {
        self.probs.len()
    }

    /// Largest degree with positive probability.
    pub fn support_max(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).map_or(0, |i| i + 1)
    }

    pub fn mean(&self) -> f64 {
        mean_degree(self)
    }

    /// Iterator over `(s, Λ_s)` with `Λ_s > 0`.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i + 1, p))
    }

    /// Draws a degree.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, p) in self.support() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.support_max()
    }

    /// Total variation distance, padding the shorter vector with zeros.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (1..=len)
            .map(|s| (self.prob(s) - other.prob(s)).abs())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for DegreeDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<DegreeDistribution> for Vec<f64> {
    fn from(d: DegreeDistribution) -> Self {
        d.probs
    }
}

/// Mean temporal degree `λ = Σ s Λ_s`.
pub fn mean_degree(dist: &DegreeDistribution) -> f64 {
    dist.support().map(|(s, p)| s as f64 * p).sum()
}

/// Distributions referred to by name in configs and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedDistribution {
    /// Single transmission per frame.
    Aloha,
    /// Two replicas per frame.
    Crdsa2,
    /// Irregular repetition optimized for a single base station.
    Irsa,
}

impl FromStr for NamedDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aloha" => Ok(Self::Aloha),
            "crdsa2" | "crdsa" => Ok(Self::Crdsa2),
            "irsa" => Ok(Self::Irsa),
            other => Err(Error::config(format!("unknown distribution '{other}'"))),
        }
    }
}

impl fmt::Display for NamedDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Aloha => "aloha",
            Self::Crdsa2 => "crdsa2",
            Self::Irsa => "irsa",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn named_means() {
        assert_eq!(DegreeDistribution::named(NamedDistribution::Aloha).mean(), 1.0);
        assert_eq!(DegreeDistribution::named(NamedDistribution::Crdsa2).mean(), 2.0);
        let irsa = DegreeDistribution::named(NamedDistribution::Irsa);
        assert!((irsa.mean() - 3.60).abs() < 1e-12);
        assert_eq!(
            irsa.probs(),
            &[0.0, 0.5, 0.28, 0.0, 0.0, 0.0, 0.0, 0.22]
        );
        assert_eq!(
            DegreeDistribution::named(NamedDistribution::Aloha).probs(),
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(DegreeDistribution::new(vec![]).is_err());
        assert!(DegreeDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(DegreeDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(DegreeDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(DegreeDistribution::from_pairs(&[(0, 1.0)], 8).is_err());
        assert!(DegreeDistribution::from_pairs(&[(9, 1.0)], 8).is_err());
        assert!(DegreeDistribution::new(vec![0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn unknown_name() {
        assert!("foo".parse::<NamedDistribution>().is_err());
        assert_eq!("IRSA".parse::<NamedDistribution>().unwrap(), NamedDistribution::Irsa);
    }

    #[test]
    fn support_max_ignores_trailing_zeros() {
        let d = DegreeDistribution::named(NamedDistribution::Crdsa2);
        assert_eq!(d.max_degree(), 8);
        assert_eq!(d.support_max(), 2);
    }

    #[test]
    fn serde_round_trip() {
        let d = DegreeDistribution::named(NamedDistribution::Irsa);
        let s = serde_json::to_string(&d).unwrap();
        let back: DegreeDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        assert!(serde_json::from_str::<DegreeDistribution>("[0.3, 0.3]").is_err());
    }

    #[test]
    fn empirical_frequencies_match() {
        let d = DegreeDistribution::named(NamedDistribution::Irsa);
        let mut r = rng::stream(11, &[]);
        let n = 100_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            counts[d.sample(&mut r)] += 1;
        }
        // Chi-square with 2 degrees of freedom; 13.8 is the 0.999 quantile.
        let chi2: f64 = d
            .support()
            .map(|(s, p)| {
                let e = p * n as f64;
                (counts[s] as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 13.8, "chi2 = {chi2}");
        assert_eq!(counts.iter().sum::<usize>(), n);
        assert_eq!(counts[1] + counts[4] + counts[5] + counts[6], 0);
    }

    #[test]
    fn total_variation_basics() {
        let a = DegreeDistribution::named(NamedDistribution::Crdsa2);
        let b = DegreeDistribution::new(vec![0.02, 0.98]).unwrap();
        assert!((a.total_variation(&b) - 0.02).abs() < 1e-12);
        assert_eq!(a.total_variation(&a), 0.0);
    }
}
