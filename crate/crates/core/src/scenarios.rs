//! Built-in coefficient fields and a registry keyed by string id.
//!
//! | id           | b0   | b1                                   | sigma1                    |
//! |--------------|------|--------------------------------------|---------------------------|
//! | `brownian`   | -    | 0                                    | I                         |
//! | `kinetic`    | x1   | 0                                    | I                         |
//! | `langevin`   | x1   | -kappa (x1 - y1)                     | I                         |
//! | `rough`      | x1   | -sign(x1 - y1) - x0 / 4              | (1 + H(x1 - y1) / 2) I    |
//! | `uniqueness` | x1   | (y1 - x1) / abs(y1 - x1)             | I                         |
//!
//! `brownian` has no degenerate block (`N = d`); the rest use `N = 2d`.
//! In `rough` the Heaviside `H` acts on the first velocity component.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, Dims};
use crate::error::{Error, Result};

#[inline]
pub fn sign(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn identity(out: &mut [f64], d: usize) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Noise dimension `d`.
    pub dim: usize,
    /// Interaction strength for `langevin`.
    pub kappa: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { dim: 1, kappa: 0.5 }
    }
}

pub fn brownian(d: usize) -> Result<CoefficientField> {
    let dims = Dims::new(d, d)?;
    Ok(CoefficientField::new(
        "brownian",
        dims,
        |_, _, _, _: &mut [f64]| {},
        |_, _, _, o: &mut [f64]| o.fill(0.0),
        move |_, _, _, o: &mut [f64]| identity(o, d),
    )
    .with_growth((d as f64).sqrt())
    .with_ellipticity(1.0)
    .with_measure_free(true, true, true))
}

/// Integrated Brownian motion: `dx0 = x1 dt`, `dx1 = dW`.
pub fn kinetic(d: usize) -> Result<CoefficientField> {
    let dims = Dims::new(2 * d, d)?;
    Ok(CoefficientField::new(
        "kinetic",
        dims,
        move |_, x, _, o: &mut [f64]| o.copy_from_slice(&x[d..]),
        |_, _, _, o: &mut [f64]| o.fill(0.0),
        move |_, _, _, o: &mut [f64]| identity(o, d),
    )
    .with_growth((d as f64).sqrt().max(1.0))
    .with_ellipticity(1.0)
    .with_measure_free(true, true, true))
}

/// Velocity relaxes toward the velocities of the other particles.
pub fn langevin(d: usize, kappa: f64) -> Result<CoefficientField> {
    let dims = Dims::new(2 * d, d)?;
    Ok(CoefficientField::new(
        "langevin",
        dims,
        move |_, x, _, o: &mut [f64]| o.copy_from_slice(&x[d..]),
        move |_, x, y, o: &mut [f64]| {
            for i in 0..d {
                o[i] = -kappa * (x[d + i] - y[d + i]);
            }
        },
        move |_, _, _, o: &mut [f64]| identity(o, d),
    )
    .with_growth((d as f64).sqrt().max(1.0 + kappa.abs()))
    .with_ellipticity(1.0)
    .with_measure_free(true, kappa == 0.0, true))
}

/// Discontinuous in the velocity variables, continuous in the positions.
pub fn rough(d: usize) -> Result<CoefficientField> {
    let dims = Dims::new(2 * d, d)?;
    let rd = (d as f64).sqrt();
    Ok(CoefficientField::new(
        "rough",
        dims,
        move |_, x, _, o: &mut [f64]| o.copy_from_slice(&x[d..]),
        move |_, x, y, o: &mut [f64]| {
            for i in 0..d {
                o[i] = -sign(x[d + i] - y[d + i]) - 0.25 * x[i];
            }
        },
        move |_, x, y, o: &mut [f64]| {
            identity(o, d);
            if x[d] > y[d] {
                for i in 0..d {
                    o[i * d + i] = 1.5;
                }
            }
        },
    )
    .with_growth((2.5 * rd).max(2f64.sqrt()))
    .with_ellipticity(1.0)
    .with_measure_free(true, false, false))
}

/// Law-independent `b0` and `sigma1`, bounded `b1` with `|sigma1^-1 b1| = 1`
/// whenever `y1 != x1`.
pub fn uniqueness(d: usize) -> Result<CoefficientField> {
    let dims = Dims::new(2 * d, d)?;
    Ok(CoefficientField::new(
        "uniqueness",
        dims,
        move |_, x, _, o: &mut [f64]| o.copy_from_slice(&x[d..]),
        move |_, x, y, o: &mut [f64]| {
            if d == 1 {
                o[0] = sign(y[1] - x[1]);
                return;
            }
            let mut n2 = 0.0;
            for i in 0..d {
                o[i] = y[d + i] - x[d + i];
                n2 += o[i] * o[i];
            }
            if n2 > 0.0 {
                let inv = 1.0 / n2.sqrt();
                o.iter_mut().for_each(|v| *v *= inv);
            }
        },
        move |_, _, _, o: &mut [f64]| identity(o, d),
    )
    .with_growth(1.0 + (d as f64).sqrt())
    .with_ellipticity(1.0)
    .with_measure_free(true, false, true))
}

pub type ScenarioBuilder = Arc<dyn Fn(&ScenarioParams) -> Result<CoefficientField> + Send + Sync>;

/// String-keyed scenario table. Custom fields are added with [`register`].
///
/// [`register`]: ScenarioRegistry::register
#[derive(Clone)]
pub struct ScenarioRegistry {
    builders: BTreeMap<String, ScenarioBuilder>,
}

impl ScenarioRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("brownian", |p| brownian(p.dim));
        reg.register("kinetic", |p| kinetic(p.dim));
        reg.register("langevin", |p| langevin(p.dim, p.kappa));
        reg.register("rough", |p| rough(p.dim));
        reg.register("uniqueness", |p| uniqueness(p.dim));
        reg
    }

    pub fn register<F>(&mut self, id: impl Into<String>, builder: F)
    where
        F: Fn(&ScenarioParams) -> Result<CoefficientField> + Send + Sync + 'static,
    {
        self.builders.insert(id.into(), Arc::new(builder));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.builders.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, id: &str, params: &ScenarioParams) -> Result<CoefficientField> {
        let builder = self
            .builders
            .get(id)
            .ok_or_else(|| Error::UnknownScenario(id.to_string()))?;
        builder(params)
    }
}

impl Default for ScenarioRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{check_ellipticity, check_linear_growth, SampleSpec};

    #[test]
    fn builtins_satisfy_declared_constants() {
        let reg = ScenarioRegistry::builtin();
        for d in 1..=2 {
            let params = ScenarioParams { dim: d, kappa: 0.5 };
            for id in ["brownian", "kinetic", "langevin", "rough", "uniqueness"] {
                let f = reg.build(id, &params).unwrap();
                let spec = SampleSpec::new(400, -4.0, 4.0);
                let g = check_linear_growth(&f, &spec).unwrap();
                assert!(g.passed(), "{id} d={d}: growth {:?}", g.max_growth_ratio);
                let e = check_ellipticity(&f, &spec, 1e-12).unwrap();
                assert!(e.passed(), "{id} d={d}");
                let gram = e.min_gram_eigenvalue.unwrap();
                let lam = e.min_sym_eigenvalue.unwrap();
                assert!(gram >= lam * lam - 1e-12, "{id}: {gram} < {lam}^2");
            }
        }
    }

    #[test]
    fn unknown_id() {
        let reg = ScenarioRegistry::builtin();
        assert!(matches!(
            reg.build("nope", &ScenarioParams::default()),
            Err(Error::UnknownScenario(_))
        ));
        assert!(reg.contains("rough"));
    }

    #[test]
    fn uniqueness_drift_has_unit_norm() {
        let f = uniqueness(1).unwrap();
        let mut o = [0.0];
        f.b1(0.0, &[0.0, 0.3], &[1.0, -2.0], &mut o);
        assert_eq!(o[0], -1.0);
        assert_eq!(f.law_independence_violation(), None);
        assert_eq!(rough(1).unwrap().law_independence_violation(), Some("sigma1"));
    }
}
