use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantity stored per coupling in a [`Series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    ChiF,
    SPrime,
    Entropy,
    Infidelity,
    Energy,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::ChiF => "chi-f",
            Observable::SPrime => "s-prime",
            Observable::Entropy => "entropy",
            Observable::Infidelity => "infidelity",
            Observable::Energy => "energy",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "chi-f" | "chi_f" | "chif" => Observable::ChiF,
            "s-prime" | "s_prime" | "sprime" => Observable::SPrime,
            "entropy" => Observable::Entropy,
            "infidelity" => Observable::Infidelity,
            "energy" => Observable::Energy,
            other => return Err(Error::InvalidInput(format!("unknown observable '{other}'"))),
        })
    }
}

/// `(D, y)` samples for one system size, strictly increasing in `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub length: usize,
    pub observable: Observable,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(length: usize, observable: Observable, mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidInput("series contains non-finite values".into()));
        }
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("series has duplicate couplings".into()));
        }
        Ok(Series { length, observable, points })
    }

    /// Series from a closure sampled on `lo + k * step`, `k = 0..=n`.
    pub fn sample(length: usize, observable: Observable, lo: f64, step: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let points = (0..=n).map(|k| {
            let d = lo + k as f64 * step;
            (d, f(d))
        });
        Series { length, observable, points: points.collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Samples with `lo <= D <= hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Series {
        Series {
            length: self.length,
            observable: self.observable,
            points: self.points.iter().copied().filter(|p| p.0 >= lo && p.0 <= hi).collect(),
        }
    }
}
