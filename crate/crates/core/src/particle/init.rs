use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Built-in initial laws. All have finite moments of every order and are
/// sub-Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    PointMass { z: Vec<f64> },
    /// Independent coordinates `N(center_j, std_j^2)`.
    Gaussian { center: Vec<f64>, std: Vec<f64> },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialLaw {
    pub fn zero(dim: usize) -> Self {
        InitialLaw::PointMass { z: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::PointMass { z } => z.len(),
            InitialLaw::Gaussian { center, .. } => center.len(),
            InitialLaw::UniformBox { lo, .. } => lo.len(),
        }
    }

    /// `E exp(a |X_0|^2) < inf` for some `a > 0`.
    pub fn sub_gaussian(&self) -> bool {
        true
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidParameter {
                name: "init",
                reason: reason.into(),
            })
        };
        match self {
            InitialLaw::PointMass { z } if z.iter().any(|v| !v.is_finite()) => bad("non-finite point"),
            InitialLaw::Gaussian { center, std } => {
                if center.len() != std.len() {
                    bad("center and std lengths differ")
                } else if std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    bad("std must be finite and nonnegative")
                } else {
                    Ok(())
                }
            }
            InitialLaw::UniformBox { lo, hi } => {
                if lo.len() != hi.len() {
                    bad("lo and hi lengths differ")
                } else if lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
                    bad("box bounds must be finite with lo <= hi")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Draw sample `particle` from stream family `domain` into `out`.
    pub fn sample(&self, seed: u64, domain: u64, particle: usize, out: &mut [f64]) {
        let mut rng = StreamRng::new(seed, domain, particle as u64, 0);
        match self {
            InitialLaw::PointMass { z } => out.copy_from_slice(z),
            InitialLaw::Gaussian { center, std } => {
                for ((o, c), s) in out.iter_mut().zip(center).zip(std) {
                    *o = c + s * rng.normal();
                }
            }
            InitialLaw::UniformBox { lo, hi } => {
                for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
                    *o = a + (b - a) * rng.uniform();
                }
            }
        }
    }
}
