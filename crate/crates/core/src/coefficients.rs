//! Coefficient fields of mean-field form and sampling-based checks of the
//! standing structural assumptions.
//!
//! A field is given by pointwise kernels `b0(t, x, y)`, `b1(t, x, y)` and
//! `sigma1(t, x, y)`. The drift and diffusion seen by a particle at `x` are
//! the averages of these kernels over the interaction measure; for particle
//! systems that measure is the empirical measure of a cloud, and the average
//! is taken over every atom (no subsampling here).
//!
//! The state splits as `x = (x0, x1)` with `x0` in `R^(N-d)` (degenerate, no
//! noise) and `x1` in `R^d`. `sigma1` is a `d x d` block stored row-major.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::particle::ParticleCloud;
use crate::rng::{domain, StreamRng};

/// State dimension `N` and noise dimension `d`, with `0 <= d <= N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    state: usize,
    noise: usize,
}

impl Dims {
    pub fn new(state: usize, noise: usize) -> Result<Self> {
        if state == 0 {
            return Err(Error::Dims("state dimension must be positive".into()));
        }
        if noise > state {
            return Err(Error::Dims(format!(
                "noise dimension {noise} exceeds state dimension {state}"
            )));
        }
        Ok(Self { state, noise })
    }

    /// `N`
    pub fn state(&self) -> usize {
        self.state
    }

    /// `d`
    pub fn noise(&self) -> usize {
        self.noise
    }

    /// `N - d`
    pub fn degenerate(&self) -> usize {
        self.state - self.noise
    }

    pub fn sigma_len(&self) -> usize {
        self.noise * self.noise
    }

    /// Splits a state into its degenerate and non-degenerate components.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.degenerate())
    }
}

/// Pointwise kernel `(t, x, y) -> out`. Implementations must overwrite all of
/// `out` and must not hold mutable shared state.
pub type Evaluator = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct CoefficientField {
    pub name: String,
    dims: Dims,
    b0: Evaluator,
    b1: Evaluator,
    sigma1: Evaluator,
    /// Declared constant of the linear growth bound.
    pub growth_c: f64,
    /// Declared lower bound on the symmetric part of `sigma1`.
    pub ellipticity_lambda: f64,
    pub measure_free_b0: bool,
    /// Not part of the structural flags proper; lets the engine skip the
    /// mean-field sum for drifts that ignore the measure.
    pub measure_free_b1: bool,
    pub measure_free_sigma: bool,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("growth_c", &self.growth_c)
            .field("ellipticity_lambda", &self.ellipticity_lambda)
            .field("measure_free_b0", &self.measure_free_b0)
            .field("measure_free_b1", &self.measure_free_b1)
            .field("measure_free_sigma", &self.measure_free_sigma)
            .finish()
    }
}

impl CoefficientField {
    pub fn new<B0, B1, S>(name: impl Into<String>, dims: Dims, b0: B0, b1: B1, sigma1: S) -> Self
    where
        B0: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        B1: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::from_evaluators(name, dims, Arc::new(b0), Arc::new(b1), Arc::new(sigma1))
    }

    pub fn from_evaluators(
        name: impl Into<String>,
        dims: Dims,
        b0: Evaluator,
        b1: Evaluator,
        sigma1: Evaluator,
    ) -> Self {
        Self {
            name: name.into(),
            dims,
            b0,
            b1,
            sigma1,
            growth_c: 1.0,
            ellipticity_lambda: 1.0,
            measure_free_b0: false,
            measure_free_b1: false,
            measure_free_sigma: false,
        }
    }

    pub fn with_growth(mut self, c: f64) -> Self {
        self.growth_c = c;
        self
    }

    pub fn with_ellipticity(mut self, lambda: f64) -> Self {
        self.ellipticity_lambda = lambda;
        self
    }

    pub fn with_measure_free(mut self, b0: bool, b1: bool, sigma: bool) -> Self {
        self.measure_free_b0 = b0;
        self.measure_free_b1 = b1;
        self.measure_free_sigma = sigma;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn b0_evaluator(&self) -> &Evaluator {
        &self.b0
    }

    pub fn b1_evaluator(&self) -> &Evaluator {
        &self.b1
    }

    pub fn sigma1_evaluator(&self) -> &Evaluator {
        &self.sigma1
    }

    #[inline]
    pub fn b0(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.b0)(t, x, y, out)
    }

    #[inline]
    pub fn b1(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.b1)(t, x, y, out)
    }

    #[inline]
    pub fn sigma1(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.sigma1)(t, x, y, out)
    }

    /// Whether the law-independence structure (`b0` and `sigma1` ignore the
    /// measure) holds. Returns the name of the first offending coefficient.
    pub fn law_independence_violation(&self) -> Option<&'static str> {
        if !self.measure_free_b0 {
            Some("b0")
        } else if !self.measure_free_sigma {
            Some("sigma1")
        } else {
            None
        }
    }
}

/// `alpha * a + beta * b`, coefficient by coefficient.
pub fn linear_combination(
    a: &CoefficientField,
    alpha: f64,
    b: &CoefficientField,
    beta: f64,
) -> Result<CoefficientField> {
    if a.dims != b.dims {
        return Err(Error::Dims("linear combination of fields with different dimensions".into()));
    }
    let combine = |ea: &Evaluator, eb: &Evaluator| -> Evaluator {
        let (ea, eb) = (ea.clone(), eb.clone());
        Arc::new(move |t, x, y, out: &mut [f64]| {
            let mut tmp: SmallVec<[f64; 16]> = SmallVec::from_elem(0.0, out.len());
            ea(t, x, y, out);
            eb(t, x, y, &mut tmp);
            for (o, v) in out.iter_mut().zip(tmp.iter()) {
                *o = alpha * *o + beta * v;
            }
        })
    };
    let mut field = CoefficientField::from_evaluators(
        format!("{}*{}+{}*{}", alpha, a.name, beta, b.name),
        a.dims,
        combine(&a.b0, &b.b0),
        combine(&a.b1, &b.b1),
        combine(&a.sigma1, &b.sigma1),
    );
    field.growth_c = alpha.abs() * a.growth_c + beta.abs() * b.growth_c;
    field.ellipticity_lambda = alpha * a.ellipticity_lambda + beta * b.ellipticity_lambda;
    field.measure_free_b0 = a.measure_free_b0 && b.measure_free_b0;
    field.measure_free_b1 = a.measure_free_b1 && b.measure_free_b1;
    field.measure_free_sigma = a.measure_free_sigma && b.measure_free_sigma;
    Ok(field)
}

/// Averaged coefficients `(B0, B1, Sigma1)` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanField {
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major `d x d`.
    pub sigma1: Vec<f64>,
}

impl MeanField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            b0: vec![0.0; dims.degenerate()],
            b1: vec![0.0; dims.noise()],
            sigma1: vec![0.0; dims.sigma_len()],
        }
    }
}

/// Sums `count` rows of `width` in place with a fixed binary tree
/// (stride 1, 2, 4, ...). The total ends up in row 0.
pub(crate) fn pairwise_sum_rows(rows: &mut [f64], width: usize, count: usize) {
    let mut stride = 1;
    while stride < count {
        let mut i = 0;
        while i + stride < count {
            let (head, tail) = rows.split_at_mut((i + stride) * width);
            let dst = &mut head[i * width..(i + 1) * width];
            let src = &tail[..width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
            i += 2 * stride;
        }
        stride *= 2;
    }
}

/// Pairwise mean of a slice of scalars.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut buf = values.to_vec();
    pairwise_sum_rows(&mut buf, 1, values.len());
    buf[0] / values.len() as f64
}

/// Scratch space for repeated mean-field evaluations.
#[derive(Debug, Default, Clone)]
pub struct MeanFieldWorkspace {
    rows: Vec<f64>,
}

impl MeanFieldWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn average<'a, I>(
        &mut self,
        eval: &Evaluator,
        measure_free: bool,
        t: f64,
        x: &[f64],
        ys: I,
        count: usize,
        out: &mut [f64],
    ) where
        I: Iterator<Item = &'a [f64]>,
    {
        let width = out.len();
        if width == 0 {
            return;
        }
        if measure_free {
            let mut ys = ys;
            let y = ys.next().expect("non-empty interaction");
            eval(t, x, y, out);
            return;
        }
        self.rows.resize(count * width, 0.0);
        for (k, y) in ys.enumerate() {
            eval(t, x, y, &mut self.rows[k * width..(k + 1) * width]);
        }
        pairwise_sum_rows(&mut self.rows, width, count);
        let inv = count as f64;
        for (o, r) in out.iter_mut().zip(&self.rows[..width]) {
            *o = r / inv;
        }
    }

    /// Mean field against the atoms yielded by `ys` (exactly `count` of them).
    pub fn evaluate<'a, I>(
        &mut self,
        field: &CoefficientField,
        t: f64,
        x: &[f64],
        ys: I,
        count: usize,
        out: &mut MeanField,
    ) where
        I: Iterator<Item = &'a [f64]> + Clone,
    {
        self.average(&field.b0, field.measure_free_b0, t, x, ys.clone(), count, &mut out.b0);
        self.average(&field.b1, field.measure_free_b1, t, x, ys.clone(), count, &mut out.b1);
        self.average(&field.sigma1, field.measure_free_sigma, t, x, ys, count, &mut out.sigma1);
    }
}

/// Averages `b0`, `b1`, `sigma1` over every particle of `cloud` with equal
/// weights. Coefficients flagged measure-free are evaluated once, against the
/// first atom.
pub fn eval_mean_field(
    field: &CoefficientField,
    t: f64,
    x: &[f64],
    cloud: &ParticleCloud,
) -> Result<MeanField> {
    let dims = field.dims();
    if x.len() != dims.state() {
        return Err(Error::DimensionMismatch {
            expected: dims.state(),
            got: x.len(),
            context: "evaluation point",
        });
    }
    if cloud.dim() != dims.state() {
        return Err(Error::DimensionMismatch {
            expected: dims.state(),
            got: cloud.dim(),
            context: "interaction cloud",
        });
    }
    if cloud.is_empty() {
        return Err(Error::Empty("interaction cloud"));
    }
    let mut out = MeanField::zeros(dims);
    MeanFieldWorkspace::new().evaluate(field, t, x, cloud.iter(), cloud.len(), &mut out);
    Ok(out)
}

/// Quasi-random sampling box for structural checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSpec {
    pub count: usize,
    pub t_range: (f64, f64),
    /// Every coordinate of `x` and `y` is drawn from `[lo, hi]`.
    pub lo: f64,
    pub hi: f64,
    /// Interaction atoms per point, used for the averaged-matrix check.
    pub atoms: usize,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(count: usize, lo: f64, hi: f64) -> Self {
        Self {
            count,
            t_range: (0.0, 1.0),
            lo,
            hi,
            atoms: 4,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParameter {
                name: "count",
                reason: "at least one sample point is required".into(),
            });
        }
        if self.atoms == 0 {
            return Err(Error::InvalidParameter {
                name: "atoms",
                reason: "at least one interaction atom is required".into(),
            });
        }
        if !(self.hi >= self.lo) || !(self.t_range.1 >= self.t_range.0) {
            return Err(Error::InvalidParameter {
                name: "box",
                reason: "empty sampling box".into(),
            });
        }
        Ok(())
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Randomly shifted Halton points in `[0,1)^dim`.
struct Halton {
    primes: Vec<u64>,
    shift: Vec<f64>,
}

impl Halton {
    fn new(dim: usize, seed: u64) -> Self {
        let mut rng = StreamRng::new(seed, domain::STRUCTURE, 0, 0);
        Self {
            primes: first_primes(dim),
            shift: (0..dim).map(|_| rng.uniform()).collect(),
        }
    }

    fn point(&self, index: u64, out: &mut [f64]) {
        for ((o, &p), s) in out.iter_mut().zip(&self.primes).zip(&self.shift) {
            let v = radical_inverse(index + 1, p) + s;
            *o = v - v.floor();
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuralReport {
    /// Smallest eigenvalue of the symmetric part of `sigma1` seen (empirical lambda).
    pub min_sym_eigenvalue: Option<f64>,
    /// Smallest eigenvalue of `Sigma1 Sigma1^T` at averaged points.
    pub min_gram_eigenvalue: Option<f64>,
    /// Largest `(|b| + |sigma1|) / (1 + |x| + |y|)` seen (empirical c).
    pub max_growth_ratio: Option<f64>,
    pub samples_checked: usize,
    pub violations: Vec<Violation>,
    pub tolerance: f64,
}

impl StructuralReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sample_point(
    halton: &Halton,
    spec: &SampleSpec,
    index: u64,
    n: usize,
    buf: &mut [f64],
    x: &mut [f64],
    ys: &mut [f64],
) -> f64 {
    halton.point(index, buf);
    let scale = |u: f64| spec.lo + (spec.hi - spec.lo) * u;
    let t = spec.t_range.0 + (spec.t_range.1 - spec.t_range.0) * buf[0];
    for (xi, u) in x.iter_mut().zip(&buf[1..1 + n]) {
        *xi = scale(*u);
    }
    for (yi, u) in ys.iter_mut().zip(&buf[1 + n..]) {
        *yi = scale(*u);
    }
    t
}

fn min_sym_eigenvalue(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0],
        2 => {
            let (a, b, c) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + c);
            let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mean - r
        }
        _ => {
            let mat = DMatrix::from_row_slice(d, d, m);
            let sym = (&mat + mat.transpose()) * 0.5;
            sym.symmetric_eigen().eigenvalues.min()
        }
    }
}

fn min_gram_eigenvalue(m: &[f64], d: usize) -> f64 {
    let mat = DMatrix::from_row_slice(d, d, m);
    let gram = &mat * mat.transpose();
    gram.symmetric_eigen().eigenvalues.min()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Smallest eigenvalue of `(sigma1 + sigma1^T) / 2` over the sampling box, and
/// of `Sigma1 Sigma1^T` where `Sigma1` averages `sigma1` over the sampled
/// interaction atoms. A violation is recorded wherever the former drops below
/// `ellipticity_lambda - tol`.
pub fn check_ellipticity(
    field: &CoefficientField,
    spec: &SampleSpec,
    tol: f64,
) -> Result<StructuralReport> {
    spec.validate()?;
    let dims = field.dims();
    let (n, d) = (dims.state(), dims.noise());
    if d == 0 {
        return Err(Error::NoDiffusionBlock);
    }
    let halton = Halton::new(1 + n * (1 + spec.atoms), spec.seed);
    let mut buf = vec![0.0; 1 + n * (1 + spec.atoms)];
    let mut x = vec![0.0; n];
    let mut ys = vec![0.0; n * spec.atoms];
    let mut sig = vec![0.0; d * d];
    let mut rows = vec![0.0; d * d * spec.atoms];
    let mut min_sym = f64::INFINITY;
    let mut min_gram = f64::INFINITY;
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in 0..spec.count as u64 {
        let t = sample_point(&halton, spec, i, n, &mut buf, &mut x, &mut ys);
        for (k, y) in ys.chunks_exact(n).enumerate() {
            field.sigma1(t, &x, y, &mut sig);
            rows[k * d * d..(k + 1) * d * d].copy_from_slice(&sig);
            let ev = min_sym_eigenvalue(&sig, d);
            checked += 1;
            min_sym = min_sym.min(ev);
            if ev < field.ellipticity_lambda - tol || !ev.is_finite() {
                violations.push(Violation {
                    t,
                    x: x.clone(),
                    y: y.to_vec(),
                    value: ev,
                });
            }
        }
        pairwise_sum_rows(&mut rows, d * d, spec.atoms);
        let mean: Vec<f64> = rows[..d * d].iter().map(|v| v / spec.atoms as f64).collect();
        min_gram = min_gram.min(min_gram_eigenvalue(&mean, d));
    }
    Ok(StructuralReport {
        min_sym_eigenvalue: Some(min_sym),
        min_gram_eigenvalue: Some(min_gram),
        max_growth_ratio: None,
        samples_checked: checked,
        violations,
        tolerance: tol,
    })
}

/// Largest `(|(b0, b1)| + |sigma1|_F) / (1 + |x| + |y|)` over the sampling box;
/// a violation is recorded wherever it exceeds `growth_c`.
pub fn check_linear_growth(field: &CoefficientField, spec: &SampleSpec) -> Result<StructuralReport> {
    spec.validate()?;
    let dims = field.dims();
    let n = dims.state();
    let halton = Halton::new(1 + n * (1 + spec.atoms), spec.seed);
    let mut buf = vec![0.0; 1 + n * (1 + spec.atoms)];
    let mut x = vec![0.0; n];
    let mut ys = vec![0.0; n * spec.atoms];
    let mut b = vec![0.0; n];
    let mut sig = vec![0.0; dims.sigma_len()];
    let mut max_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in 0..spec.count as u64 {
        let t = sample_point(&halton, spec, i, n, &mut buf, &mut x, &mut ys);
        for y in ys.chunks_exact(n) {
            let (b0, b1) = b.split_at_mut(dims.degenerate());
            field.b0(t, &x, y, b0);
            field.b1(t, &x, y, b1);
            field.sigma1(t, &x, y, &mut sig);
            let ratio = (norm(&b) + norm(&sig)) / (1.0 + norm(&x) + norm(y));
            checked += 1;
            max_ratio = max_ratio.max(ratio);
            if ratio > field.growth_c || !ratio.is_finite() {
                violations.push(Violation {
                    t,
                    x: x.clone(),
                    y: y.to_vec(),
                    value: ratio,
                });
            }
        }
    }
    Ok(StructuralReport {
        min_sym_eigenvalue: None,
        min_gram_eigenvalue: None,
        max_growth_ratio: Some(max_ratio),
        samples_checked: checked,
        violations,
        tolerance: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_sigma(m: Vec<f64>, d: usize) -> CoefficientField {
        let dims = Dims::new(d, d).unwrap();
        CoefficientField::new(
            "const-sigma",
            dims,
            |_, _, _, _: &mut [f64]| {},
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            move |_, _, _, o: &mut [f64]| o.copy_from_slice(&m),
        )
    }

    #[test]
    fn dims_validation() {
        assert!(Dims::new(0, 0).is_err());
        assert!(Dims::new(2, 3).is_err());
        let d = Dims::new(3, 1).unwrap();
        assert_eq!(d.degenerate(), 2);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(d.split(&x), (&x[..2], &x[2..]));
    }

    #[test]
    fn ellipticity_identity() {
        let f = constant_sigma(vec![1.0, 0.0, 0.0, 1.0], 2).with_ellipticity(1.0);
        let r = check_ellipticity(&f, &SampleSpec::new(50, -2.0, 2.0), 1e-12).unwrap();
        assert_eq!(r.min_sym_eigenvalue, Some(1.0));
        assert!(r.passed());
    }

    #[test]
    fn ellipticity_diagonal() {
        let f = constant_sigma(vec![2.0, 0.0, 0.0, 3.0], 2).with_ellipticity(2.0);
        let r = check_ellipticity(&f, &SampleSpec::new(20, -1.0, 1.0), 0.0).unwrap();
        assert_eq!(r.min_sym_eigenvalue, Some(2.0));
        assert!(r.passed());
        // Gram matrix diag(4, 9)
        assert!((r.min_gram_eigenvalue.unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ellipticity_shear_has_half_eigenvalue() {
        // symmetric part [[1, .5], [.5, 1]]: char. poly (1-l)^2 - 1/4 -> l = 1/2
        let f = constant_sigma(vec![1.0, 1.0, 0.0, 1.0], 2).with_ellipticity(1.0);
        let r = check_ellipticity(&f, &SampleSpec::new(10, -1.0, 1.0), 1e-9).unwrap();
        assert!((r.min_sym_eigenvalue.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.violations.len(), r.samples_checked);
        let r3 = check_ellipticity(
            &constant_sigma(vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 3),
            &SampleSpec::new(3, -1.0, 1.0),
            0.0,
        )
        .unwrap();
        assert!((r3.min_sym_eigenvalue.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ellipticity_requires_noise() {
        let dims = Dims::new(2, 0).unwrap();
        let f = CoefficientField::new(
            "det",
            dims,
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            |_, _, _, _: &mut [f64]| {},
            |_, _, _, _: &mut [f64]| {},
        );
        assert!(matches!(
            check_ellipticity(&f, &SampleSpec::new(1, 0.0, 1.0), 0.0),
            Err(Error::NoDiffusionBlock)
        ));
    }

    #[test]
    fn growth_of_zero_and_linear_fields() {
        let dims = Dims::new(2, 1).unwrap();
        let zero = CoefficientField::new(
            "zero",
            dims,
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            |_, _, _, o: &mut [f64]| o.fill(0.0),
        );
        let r = check_linear_growth(&zero, &SampleSpec::new(100, -5.0, 5.0)).unwrap();
        assert_eq!(r.max_growth_ratio, Some(0.0));

        let linear = CoefficientField::new(
            "linear",
            dims,
            |_, x, _, o: &mut [f64]| o[0] = x[0],
            |_, x, _, o: &mut [f64]| o[0] = x[1],
            |_, _, _, o: &mut [f64]| o.fill(0.0),
        )
        .with_growth(1.0);
        let r = check_linear_growth(&linear, &SampleSpec::new(500, -10.0, 10.0)).unwrap();
        assert!(r.max_growth_ratio.unwrap() <= 1.0);
        assert!(r.passed());

        let sign = CoefficientField::new(
            "sign",
            dims,
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            |_, x, _, o: &mut [f64]| o[0] = crate::scenarios::sign(x[1]),
            |_, _, _, o: &mut [f64]| o.fill(0.0),
        )
        .with_growth(1.0);
        let r = check_linear_growth(&sign, &SampleSpec::new(500, -3.0, 3.0)).unwrap();
        assert!(r.max_growth_ratio.unwrap() <= 1.0);
    }

    #[test]
    fn growth_violations_recorded() {
        let dims = Dims::new(1, 1).unwrap();
        let f = CoefficientField::new(
            "steep",
            dims,
            |_, _, _, _: &mut [f64]| {},
            |_, x, _, o: &mut [f64]| o[0] = 10.0 * x[0],
            |_, _, _, o: &mut [f64]| o[0] = 1.0,
        )
        .with_growth(1.0);
        let r = check_linear_growth(&f, &SampleSpec::new(50, -3.0, 3.0)).unwrap();
        assert!(!r.passed());
        assert!(r.max_growth_ratio.unwrap() > 1.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let vals: Vec<f64> = (0..37).map(|i| (i * i % 11) as f64).collect();
        let naive: f64 = vals.iter().sum();
        let mut rows = vals.clone();
        pairwise_sum_rows(&mut rows, 1, vals.len());
        assert_eq!(rows[0], naive);
        assert_eq!(pairwise_mean(&[4.0]), 4.0);
    }
}
