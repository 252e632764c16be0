//! Distances and functionals of equally weighted empirical measures.
//!
//! Total variation uses the factor-2 convention, so it ranges over `[0, 2]`.
//! It is estimated on a [`HistogramGrid`]: raw empirical atoms of two
//! continuous laws are almost surely disjoint, which would pin the distance
//! at 2.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::coefficients::{pairwise_mean, pairwise_sum_rows};
use crate::error::{Error, Result};
use crate::particle::ParticleCloud;
use crate::rng::{domain, StreamRng};

/// Sliced Wasserstein default.
pub const DEFAULT_PROJECTIONS: usize = 32;

/// Equally weighted atoms in `R^dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<'a> {
    dim: usize,
    samples: Cow<'a, [f64]>,
}

impl<'a> EmpiricalMeasure<'a> {
    pub fn new(dim: usize, samples: Vec<f64>) -> Result<EmpiricalMeasure<'static>> {
        EmpiricalMeasure::build(dim, Cow::Owned(samples))
    }

    pub fn borrowed(dim: usize, samples: &'a [f64]) -> Result<Self> {
        Self::build(dim, Cow::Borrowed(samples))
    }

    pub fn scalars(samples: Vec<f64>) -> Result<EmpiricalMeasure<'static>> {
        EmpiricalMeasure::new(1, samples)
    }

    pub fn from_cloud(cloud: &'a ParticleCloud) -> Result<Self> {
        Self::borrowed(cloud.dim(), cloud.states())
    }

    fn build(dim: usize, samples: Cow<'a, [f64]>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dims("measure dimension must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Empty("empirical measure"));
        }
        if samples.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: samples.len() % dim,
                context: "sample storage is not a whole number of rows",
            });
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(self.dim)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Scalar projection `<x, u>` of every atom.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.iter().map(|x| x.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Axis-aligned bins given by strictly increasing edges per dimension.
/// The last bin in each dimension is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    edges: Vec<Vec<f64>>,
}

impl HistogramGrid {
    pub fn new(edges: Vec<Vec<f64>>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Dims("histogram grid needs at least one dimension".into()));
        }
        for (j, e) in edges.iter().enumerate() {
            if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) || e.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "histogram edges",
                    reason: format!("dimension {j}: need at least two finite, strictly increasing edges"),
                });
            }
        }
        Ok(Self { edges })
    }

    /// Uniform bins of `[lo_j, hi_j]`.
    pub fn uniform(lo: &[f64], hi: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParameter {
                name: "histogram bins",
                reason: "must be positive".into(),
            });
        }
        let edges = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| {
                let (a, b) = if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
                let mut e: Vec<f64> = (0..=bins).map(|i| a + (b - a) * i as f64 / bins as f64).collect();
                e[bins] = b;
                e
            })
            .collect();
        Self::new(edges)
    }

    /// `ceil(n^(1 / (dim + 2)))` bins per dimension, `n` the larger sample count.
    pub fn default_bins(n: usize, dim: usize) -> usize {
        ((n as f64).powf(1.0 / (dim as f64 + 2.0)).ceil() as usize).max(1)
    }

    /// Uniform grid over the pooled range of all inputs.
    pub fn covering(measures: &[&EmpiricalMeasure<'_>], bins: Option<usize>) -> Result<Self> {
        let first = measures.first().ok_or(Error::Empty("measure list"))?;
        let dim = first.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut n = 0;
        for m in measures {
            if m.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                    context: "pooled measures",
                });
            }
            n = n.max(m.len());
            for x in m.iter() {
                for j in 0..dim {
                    lo[j] = lo[j].min(x[j]);
                    hi[j] = hi[j].max(x[j]);
                }
            }
        }
        Self::uniform(&lo, &hi, bins.unwrap_or_else(|| Self::default_bins(n, dim)))
    }

    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self, j: usize) -> &[f64] {
        &self.edges[j]
    }

    pub fn bin_count(&self, j: usize) -> usize {
        self.edges[j].len() - 1
    }

    /// Grid with bins `i` and `i + 1` of dimension `j` merged.
    pub fn merge_bins(&self, j: usize, i: usize) -> Result<Self> {
        if j >= self.dim() || i + 1 >= self.bin_count(j) {
            return Err(Error::InvalidParameter {
                name: "merge_bins",
                reason: format!("no adjacent bin pair ({i}, {}) in dimension {j}", i + 1),
            });
        }
        let mut edges = self.edges.clone();
        edges[j].remove(i + 1);
        Self::new(edges)
    }

    /// Bin multi-index of `x`.
    pub fn locate(&self, x: &[f64]) -> Result<Vec<u32>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
                context: "histogram sample",
            });
        }
        x.iter()
            .zip(&self.edges)
            .enumerate()
            .map(|(j, (&v, e))| {
                let last = e.len() - 1;
                if !(v >= e[0] && v <= e[last]) {
                    return Err(Error::OutsideGrid { dim: j, value: v });
                }
                let idx = e.partition_point(|&edge| edge <= v).saturating_sub(1).min(last - 1);
                Ok(idx as u32)
            })
            .collect()
    }

    /// Bin masses; `weights` default to uniform and are normalized to sum 1.
    pub fn frequencies(
        &self,
        mu: &EmpiricalMeasure<'_>,
        weights: Option<&[f64]>,
    ) -> Result<BTreeMap<Vec<u32>, f64>> {
        if let Some(w) = weights {
            if w.len() != mu.len() {
                return Err(Error::DimensionMismatch {
                    expected: mu.len(),
                    got: w.len(),
                    context: "sample weights",
                });
            }
        }
        let total = match weights {
            Some(w) => {
                let mut buf = w.to_vec();
                pairwise_sum_rows(&mut buf, 1, w.len());
                buf[0]
            }
            None => mu.len() as f64,
        };
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sample weights",
                reason: format!("total weight {total} is not positive and finite"),
            });
        }
        let mut bins = BTreeMap::new();
        for (i, x) in mu.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            *bins.entry(self.locate(x)?).or_insert(0.0) += w;
        }
        bins.values_mut().for_each(|v| *v /= total);
        Ok(bins)
    }
}

/// Sums over the sorted union of occupied bins, so the result is symmetric
/// in `p` and `q` bit for bit.
fn binned_l1(p: &BTreeMap<Vec<u32>, f64>, q: &BTreeMap<Vec<u32>, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&Vec<u32>> = p.keys().chain(q.keys()).collect();
    let mut acc = 0.0;
    for k in keys {
        let a = p.get(k).copied().unwrap_or(0.0);
        let b = q.get(k).copied().unwrap_or(0.0);
        acc += (a - b).abs();
    }
    acc.min(2.0)
}

/// `sum_bins |p - q|` of binned frequencies.
pub fn tv_distance(mu: &EmpiricalMeasure<'_>, nu: &EmpiricalMeasure<'_>, grid: &HistogramGrid) -> Result<f64> {
    weighted_tv_distance(mu, None, nu, None, grid)
}

/// Binned TV between two weighted empirical measures.
pub fn weighted_tv_distance(
    mu: &EmpiricalMeasure<'_>,
    mu_weights: Option<&[f64]>,
    nu: &EmpiricalMeasure<'_>,
    nu_weights: Option<&[f64]>,
    grid: &HistogramGrid,
) -> Result<f64> {
    if mu.dim() != nu.dim() || mu.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: if mu.dim() != grid.dim() { mu.dim() } else { nu.dim() },
            context: "tv_distance",
        });
    }
    let p = grid.frequencies(mu, mu_weights)?;
    let q = grid.frequencies(nu, nu_weights)?;
    Ok(binned_l1(&p, &q))
}

/// TV on the default covering grid of the two inputs.
pub fn tv_default(mu: &EmpiricalMeasure<'_>, nu: &EmpiricalMeasure<'_>) -> Result<f64> {
    let grid = HistogramGrid::covering(&[mu, nu], None)?;
    tv_distance(mu, nu, &grid)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Exact 1-D `W1` of two scalar samples.
///
/// Equal counts use the sorted coupling `mean |x_(i) - y_(i)|`. Unequal
/// counts integrate `|F - G|` between the two empirical CDFs exactly.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("w1 input"));
    }
    let x = sorted(a.to_vec());
    let y = sorted(b.to_vec());
    if x.len() == y.len() {
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).collect();
        return Ok(pairwise_mean(&diffs));
    }
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = x[0].min(y[0]);
    let mut acc = 0.0;
    while i < x.len() || j < y.len() {
        let next = match (x.get(i), y.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        acc += (i as f64 / n - j as f64 / m).abs() * (next - prev);
        while i < x.len() && x[i] <= next {
            i += 1;
        }
        while j < y.len() && y[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(acc)
}

/// Unit directions for sliced distances, fixed by `seed`.
pub fn projection_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|j| {
            let mut rng = StreamRng::new(seed, domain::PROJECTIONS, j as u64, dim as u64);
            loop {
                let mut u = vec![0.0; dim];
                rng.fill_normal(&mut u, 1.0);
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    u.iter_mut().for_each(|v| *v /= norm);
                    break u;
                }
            }
        })
        .collect()
}

/// `W1` in dimension 1, sliced `W1` over `projections` directions otherwise.
pub fn w1_distance(
    mu: &EmpiricalMeasure<'_>,
    nu: &EmpiricalMeasure<'_>,
    projections: usize,
    seed: u64,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
            context: "w1_distance",
        });
    }
    if mu.dim() == 1 {
        return w1_1d(mu.samples(), nu.samples());
    }
    if projections == 0 {
        return Err(Error::InvalidParameter {
            name: "projections",
            reason: "must be positive".into(),
        });
    }
    let per: Result<Vec<f64>> = projection_directions(mu.dim(), projections, seed)
        .iter()
        .map(|u| w1_1d(&mu.project(u), &nu.project(u)))
        .collect();
    Ok(pairwise_mean(&per?))
}

/// `mean |x|^p` with the Euclidean norm.
pub fn moment(mu: &EmpiricalMeasure<'_>, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("moment order must be positive, got {p}"),
        });
    }
    let vals: Vec<f64> = mu
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p))
        .collect();
    Ok(pairwise_mean(&vals))
}
