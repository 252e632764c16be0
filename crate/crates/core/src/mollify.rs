//! Regularization of rough coefficients: radial truncation per variable
//! block, extension to negative times, and smoothing against a compactly
//! supported bump kernel.
//!
//! The convolution runs over `(t, x, y)` in dimension `1 + 2N`. It is
//! approximated by averaging over a fixed table of kernel-distributed offsets
//! drawn once per [`MollifierSpec`]. The same offsets are reused at every
//! evaluation point, so the regularized field is a deterministic function of
//! its arguments. Offsets come in `+/-` pairs, which makes the average exact
//! on affine functions away from the truncation radius.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::coefficients::{CoefficientField, Dims, Evaluator};
use crate::error::{Error, Result};
use crate::rng::{domain, StreamRng};

type Buf = SmallVec<[f64; 16]>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifierSpec {
    /// Regularization level: kernel radius `1/n`, truncation radius `n`.
    pub n: u32,
    /// Offset count `M` (rounded up to even).
    pub samples: usize,
    pub seed: u64,
}

impl MollifierSpec {
    pub fn new(n: u32, samples: usize, seed: u64) -> Self {
        Self { n, samples, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter {
                name: "mollify.n",
                reason: "regularization level must be at least 1".into(),
            });
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter {
                name: "mollify.samples",
                reason: "at least one smoothing offset is required".into(),
            });
        }
        Ok(())
    }
}

/// `chi_n`: identity on the closed ball of radius `n`, radial projection onto
/// its boundary outside.
pub fn chi(n: f64, block: &mut [f64]) {
    let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > n {
        let s = n / norm;
        block.iter_mut().for_each(|v| *v *= s);
    }
}

fn chi_blocks(n: f64, dims: Dims, z: &mut [f64]) {
    let (z0, z1) = z.split_at_mut(dims.degenerate());
    chi(n, z0);
    chi(n, z1);
}

/// The field `(t, x, y) -> f(t, chi_n(x0), chi_n(x1), chi_n(y0), chi_n(y1))`.
pub fn truncate(field: &CoefficientField, n: u32) -> CoefficientField {
    let dims = field.dims();
    let radius = n as f64;
    let wrap = |e: &Evaluator| -> Evaluator {
        let e = e.clone();
        Arc::new(move |t, x, y, out: &mut [f64]| {
            let mut xs: Buf = SmallVec::from_slice(x);
            let mut ys: Buf = SmallVec::from_slice(y);
            chi_blocks(radius, dims, &mut xs);
            chi_blocks(radius, dims, &mut ys);
            e(t, &xs, &ys, out)
        })
    };
    let mut out = field.clone();
    out.name = format!("truncate({}, {n})", field.name);
    out = CoefficientField::from_evaluators(
        out.name.clone(),
        dims,
        wrap(field.b0_evaluator()),
        wrap(field.b1_evaluator()),
        wrap(field.sigma1_evaluator()),
    )
    .with_growth(field.growth_c)
    .with_ellipticity(field.ellipticity_lambda)
    .with_measure_free(field.measure_free_b0, field.measure_free_b1, field.measure_free_sigma);
    out
}

fn identity(out: &mut [f64], d: usize) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

/// Same field for `t >= 0`; zero drift and identity diffusion for `t < 0`.
pub fn extend_time(field: &CoefficientField) -> CoefficientField {
    let d = field.dims().noise();
    let drift = |e: &Evaluator| -> Evaluator {
        let e = e.clone();
        Arc::new(move |t, x, y, out: &mut [f64]| {
            if t < 0.0 {
                out.fill(0.0)
            } else {
                e(t, x, y, out)
            }
        })
    };
    let s = field.sigma1_evaluator().clone();
    let sigma: Evaluator = Arc::new(move |t, x, y, out: &mut [f64]| {
        if t < 0.0 {
            identity(out, d)
        } else {
            s(t, x, y, out)
        }
    });
    CoefficientField::from_evaluators(
        format!("extend_time({})", field.name),
        field.dims(),
        drift(field.b0_evaluator()),
        drift(field.b1_evaluator()),
        sigma,
    )
    .with_growth(field.growth_c)
    .with_ellipticity(field.ellipticity_lambda.min(1.0))
    .with_measure_free(field.measure_free_b0, field.measure_free_b1, field.measure_free_sigma)
}

/// Surface area of the unit sphere in `R^dim`.
fn sphere_area(dim: usize) -> f64 {
    // 2 pi^(D/2) / Gamma(D/2)
    let half = dim as f64 / 2.0;
    let gamma = if dim % 2 == 0 {
        (1..dim / 2).map(|k| k as f64).product::<f64>()
    } else {
        // Gamma(k + 1/2) = sqrt(pi) * prod_{j=1..k} (j - 1/2)
        PI.sqrt() * (1..=dim / 2).map(|j| j as f64 - 0.5).product::<f64>()
    };
    2.0 * PI.powf(half) / gamma
}

fn bump(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

fn radial_integral(dim: usize, intervals: usize) -> f64 {
    // composite Simpson on [0, 1] of bump(s^2) s^(dim-1)
    let h = 1.0 / intervals as f64;
    let f = |s: f64| bump(s * s) * s.powi(dim as i32 - 1);
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// `psi(u) ∝ exp(-1 / (1 - |u/r|^2))` on the ball of radius `r` in `R^dim`.
#[derive(Debug, Clone)]
pub struct BumpKernel {
    pub dim: usize,
    pub radius: f64,
    normalizer: f64,
}

impl BumpKernel {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        let coarse = sphere_area(dim) * radial_integral(dim, 4000);
        let kernel = Self {
            dim,
            radius,
            normalizer: coarse * radius.powi(dim as i32),
        };
        let mass = kernel.mass(8000);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter {
                name: "mollifier",
                reason: format!("kernel mass {mass} is not 1 to 1e-6"),
            });
        }
        Ok(kernel)
    }

    pub fn density(&self, u: &[f64]) -> f64 {
        let s2 = u.iter().map(|v| v * v).sum::<f64>() / (self.radius * self.radius);
        bump(s2) / self.normalizer
    }

    /// Total mass by radial quadrature with `intervals` Simpson panels.
    pub fn mass(&self, intervals: usize) -> f64 {
        let r = self.radius;
        sphere_area(self.dim) * r.powi(self.dim as i32) * radial_integral(self.dim, intervals)
            / self.normalizer
    }

    /// Rejection sample from the kernel.
    pub fn sample(&self, rng: &mut StreamRng, out: &mut [f64]) {
        loop {
            let mut n2 = 0.0;
            for v in out.iter_mut() {
                *v = rng.normal();
                n2 += *v * *v;
            }
            if n2 == 0.0 {
                continue;
            }
            let s = rng.uniform().powf(1.0 / self.dim as f64);
            // accept with probability bump(s^2) / bump(0)
            if rng.uniform() < bump(s * s) * std::f64::consts::E {
                let scale = self.radius * s / n2.sqrt();
                out.iter_mut().for_each(|v| *v *= scale);
                return;
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Drift,
    Diffusion(usize),
}

/// A mollified field together with the offset table it was built from.
#[derive(Clone)]
pub struct RegularizedField {
    pub base: CoefficientField,
    pub spec: MollifierSpec,
    offsets: Arc<Vec<f64>>,
    field: CoefficientField,
}

impl RegularizedField {
    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn into_field(self) -> CoefficientField {
        self.field
    }

    /// Offsets, one row of `1 + 2N` per sample: `(tau, xi, zeta)`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn offset_count(&self) -> usize {
        self.offsets.len() / (1 + 2 * self.base.dims().state())
    }
}

fn smoothed(
    e: &Evaluator,
    kind: Kind,
    dims: Dims,
    radius: f64,
    offsets: Arc<Vec<f64>>,
) -> Evaluator {
    let e = e.clone();
    let n = dims.state();
    let row = 1 + 2 * n;
    let count = offsets.len() / row;
    Arc::new(move |t, x, y, out: &mut [f64]| {
        let mut xs: Buf = SmallVec::from_elem(0.0, n);
        let mut ys: Buf = SmallVec::from_elem(0.0, n);
        let mut tmp: Buf = SmallVec::from_elem(0.0, out.len());
        out.fill(0.0);
        for o in offsets.chunks_exact(row) {
            let ts = t - o[0];
            if ts < 0.0 {
                match kind {
                    Kind::Drift => tmp.fill(0.0),
                    Kind::Diffusion(d) => identity(&mut tmp, d),
                }
            } else {
                for i in 0..n {
                    xs[i] = x[i] - o[1 + i];
                    ys[i] = y[i] - o[1 + n + i];
                }
                chi_blocks(radius, dims, &mut xs);
                chi_blocks(radius, dims, &mut ys);
                e(ts, &xs, &ys, &mut tmp);
            }
            for (a, b) in out.iter_mut().zip(tmp.iter()) {
                *a += b;
            }
        }
        let inv = 1.0 / count as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    })
}

/// `f^n = (truncate(f, n), extended to t < 0) * psi_n`, approximated on a
/// symmetric table of `M` kernel offsets.
pub fn mollify(field: &CoefficientField, spec: &MollifierSpec) -> Result<RegularizedField> {
    spec.validate()?;
    let dims = field.dims();
    let row = 1 + 2 * dims.state();
    let kernel = BumpKernel::new(row, 1.0 / spec.n as f64)?;
    let pairs = spec.samples.div_ceil(2);
    let mut offsets = vec![0.0; 2 * pairs * row];
    for j in 0..pairs {
        let mut rng = StreamRng::new(spec.seed, domain::MOLLIFIER, j as u64, spec.n as u64);
        let (plus, minus) = offsets[2 * j * row..(2 * j + 2) * row].split_at_mut(row);
        kernel.sample(&mut rng, plus);
        for (m, p) in minus.iter_mut().zip(plus.iter()) {
            *m = -p;
        }
    }
    let offsets = Arc::new(offsets);
    let radius = spec.n as f64;
    let d = dims.noise();
    let regularized = CoefficientField::from_evaluators(
        format!("mollify({}, n={})", field.name, spec.n),
        dims,
        smoothed(field.b0_evaluator(), Kind::Drift, dims, radius, offsets.clone()),
        smoothed(field.b1_evaluator(), Kind::Drift, dims, radius, offsets.clone()),
        smoothed(field.sigma1_evaluator(), Kind::Diffusion(d), dims, radius, offsets.clone()),
    )
    .with_growth(field.growth_c.max((d as f64).sqrt()) * (1.0 + 2.0 / spec.n as f64))
    .with_ellipticity(field.ellipticity_lambda.min(1.0))
    .with_measure_free(field.measure_free_b0, field.measure_free_b1, field.measure_free_sigma);
    Ok(RegularizedField {
        base: field.clone(),
        spec: spec.clone(),
        offsets,
        field: regularized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{self, sign};

    fn scalar_field(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> CoefficientField {
        // N = 2, d = 1; b1 = f(t, x), everything else trivial
        let dims = Dims::new(2, 1).unwrap();
        CoefficientField::new(
            "scalar",
            dims,
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            move |t, x, _, o: &mut [f64]| o[0] = f(t, x),
            |_, _, _, o: &mut [f64]| o[0] = 1.0,
        )
        .with_measure_free(true, true, true)
    }

    #[test]
    fn chi_projects_outside_ball() {
        let mut a = [3.0, 4.0];
        chi(5.0, &mut a);
        assert_eq!(a, [3.0, 4.0]);
        let mut b = [6.0, 8.0];
        chi(5.0, &mut b);
        assert_eq!(b, [3.0, 4.0]);
    }

    #[test]
    fn truncation_agrees_inside_cube() {
        let f = scalar_field(|_, x| x[0] * x[0] + x[1]);
        let tf = truncate(&f, 5);
        let mut a = [0.0];
        let mut b = [0.0];
        f.b1(0.2, &[1.0, -4.0], &[0.0, 2.0], &mut a);
        tf.b1(0.2, &[1.0, -4.0], &[0.0, 2.0], &mut b);
        assert_eq!(a, b);
        tf.b1(0.2, &[0.0, 10.0], &[0.0, 0.0], &mut b);
        assert_eq!(b[0], 5.0);
    }

    #[test]
    fn time_extension() {
        let f = scenarios::rough(2).unwrap();
        let ext = extend_time(&f);
        let x = [0.3, -0.2, 1.0, 0.5];
        let y = [0.0, 0.1, -1.0, 0.4];
        let mut s = [9.0; 4];
        ext.sigma1(-0.5, &x, &y, &mut s);
        assert_eq!(s, [1.0, 0.0, 0.0, 1.0]);
        let mut b = [9.0; 2];
        ext.b1(-0.1, &x, &y, &mut b);
        assert_eq!(b, [0.0, 0.0]);
        ext.b0(-0.1, &x, &y, &mut b);
        assert_eq!(b, [0.0, 0.0]);
        let mut base = [0.0; 4];
        f.sigma1(0.3, &x, &y, &mut base);
        ext.sigma1(0.3, &x, &y, &mut s);
        assert_eq!(s, base);
    }

    #[test]
    fn kernel_is_a_probability_density() {
        for dim in [3, 5, 9] {
            let k = BumpKernel::new(dim, 0.25).unwrap();
            assert!((k.mass(10_000) - 1.0).abs() < 1e-6);
            assert_eq!(k.density(&vec![0.25; dim]), 0.0);
            assert!(k.density(&vec![0.0; dim]) > 0.0);
        }
        let k = BumpKernel::new(5, 0.5).unwrap();
        let mut rng = StreamRng::new(1, 0, 0, 0);
        let mut u = [0.0; 5];
        for _ in 0..500 {
            k.sample(&mut rng, &mut u);
            assert!(u.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.5);
        }
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constants_are_reproduced() {
        let f = scalar_field(|_, _| 2.5);
        let r = mollify(&f, &MollifierSpec::new(3, 64, 1)).unwrap();
        let mut o = [0.0];
        r.field().b1(0.5, &[0.1, 0.2], &[0.0, 0.0], &mut o);
        assert!((o[0] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn linear_functions_are_reproduced() {
        let f = scalar_field(|_, x| x[1]);
        for n in [2, 4, 8] {
            let r = mollify(&f, &MollifierSpec::new(n, 64, 3)).unwrap();
            let mut o = [0.0];
            for &v in &[-0.7, 0.0, 0.4, (n as f64) - 1.0 / n as f64 - 0.01] {
                r.field().b1(0.5, &[0.0, v], &[0.0, 0.0], &mut o);
                assert!((o[0] - v).abs() < 1e-12, "n={n} v={v} got {}", o[0]);
            }
        }
    }

    #[test]
    fn sign_is_zero_at_origin() {
        let f = scalar_field(|_, x| sign(x[1]));
        let r = mollify(&f, &MollifierSpec::new(4, 64, 9)).unwrap();
        let mut o = [1.0];
        r.field().b1(0.5, &[0.0, 0.0], &[0.0, 0.0], &mut o);
        assert_eq!(o[0], 0.0);
        r.field().b1(0.5, &[0.0, 1.0], &[0.0, 0.0], &mut o);
        assert_eq!(o[0], 1.0);
    }

    #[test]
    fn odd_sample_count_rounds_up() {
        let f = scalar_field(|_, _| 1.0);
        let r = mollify(&f, &MollifierSpec::new(2, 5, 0)).unwrap();
        assert_eq!(r.offset_count(), 6);
        assert!(mollify(&f, &MollifierSpec::new(2, 0, 0)).is_err());
    }

    #[test]
    fn lipschitz_error_shrinks_like_one_over_n() {
        // Lip(f) = 1 in (t, x) jointly, so |f^n - f| <= 1/n
        let f = scalar_field(|t, x| (x[0] + x[1]).sin() + 0.5 * t.cos());
        let mut exact = [0.0];
        let (t, x) = (0.5, [0.3, -0.4]);
        f.b1(t, &x, &[0.0, 0.0], &mut exact);
        let mut prev = f64::INFINITY;
        for n in [2u32, 4, 8, 16, 32] {
            let r = mollify(&f, &MollifierSpec::new(n, 64, 5)).unwrap();
            let mut o = [0.0];
            r.field().b1(t, &x, &[0.0, 0.0], &mut o);
            let err = (o[0] - exact[0]).abs();
            assert!(err <= 1.0 / n as f64, "n={n}: {err}");
            assert!(err <= prev + 1e-3);
            prev = err;
        }
    }
}
