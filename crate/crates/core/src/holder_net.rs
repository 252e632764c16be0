//! Explicit epsilon-nets of Holder balls
//! `C^alpha_h = { phi : |phi(t)| <= h, |phi(t) - phi(s)| <= h |t - s|^alpha }`
//! on `[0, T]` with values in `R^k`.
//!
//! Elements are piecewise linear on a uniform node grid with node values on
//! the lattice `eta Z`, `|value| <= h`, and adjacent nodes at most `band`
//! lattice steps apart. Elements are ordered lexicographically by their node
//! levels (coordinate 0 first, then time), which fixes the index of every
//! element. Nets are never materialized: counting and ranking run a dynamic
//! program over levels, and classification searches a layered graph for the
//! lexicographically first admissible level sequence.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::PathEnsemble;

/// Default cap on `log10` of the net size.
pub const DEFAULT_MAX_LOG10_SIZE: f64 = 10_000.0;

/// Dynamic-program table limit for [`EpsNet::element`].
const TABLE_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderBallSpec {
    pub alpha: f64,
    pub h: f64,
    pub horizon: f64,
    pub dim: usize,
}

impl HolderBallSpec {
    pub fn new(alpha: f64, h: f64, horizon: f64, dim: usize) -> Self {
        Self { alpha, h, horizon, dim }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("holder.alpha", format!("must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("holder.h", format!("must be positive, got {}", self.h));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("holder.horizon", format!("must be positive, got {}", self.horizon));
        }
        if self.dim == 0 {
            return bad("holder.dim", "must be positive".into());
        }
        Ok(())
    }
}

/// `(sup_t |phi(t)|, max_{s != t} |phi(t) - phi(s)| / |t - s|^alpha)` over a
/// uniform grid. `values` holds `n` rows of `dim`.
pub fn holder_seminorm(values: &[f64], dim: usize, dt: f64, alpha: f64) -> (f64, f64) {
    let n = values.len() / dim;
    let row = |i: usize| &values[i * dim..(i + 1) * dim];
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let sup = (0..n).map(|i| row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    if n < 2 {
        return (sup, 0.0);
    }
    let mut diam2 = 0.0;
    for c in 0..dim {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = values[i * dim + c];
            (lo.min(v), hi.max(v))
        });
        diam2 += (hi - lo) * (hi - lo);
    }
    let diam = diam2.sqrt();
    let mut best: f64 = 0.0;
    for lag in 1..n {
        let denom = (lag as f64 * dt).powf(alpha);
        // no pair at this lag or beyond can beat `best`
        if diam / denom <= best {
            break;
        }
        for s in 0..n - lag {
            best = best.max(dist(row(s), row(s + lag)) / denom);
        }
    }
    (sup, best)
}

/// Every grid pair, no pruning.
pub fn holder_seminorm_brute(values: &[f64], dim: usize, dt: f64, alpha: f64) -> (f64, f64) {
    let n = values.len() / dim;
    let row = |i: usize| &values[i * dim..(i + 1) * dim];
    let mut sup: f64 = 0.0;
    let mut best: f64 = 0.0;
    for i in 0..n {
        sup = sup.max(row(i).iter().map(|v| v * v).sum::<f64>().sqrt());
        for j in i + 1..n {
            let d: f64 = row(i).iter().zip(row(j)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            best = best.max(d / ((j - i) as f64 * dt).powf(alpha));
        }
    }
    (sup, best)
}

/// Smallest `h` with the grid path in `C^alpha_h`.
pub fn ball_constant(values: &[f64], dim: usize, dt: f64, alpha: f64) -> f64 {
    let (sup, hol) = holder_seminorm(values, dim, dt, alpha);
    sup.max(hol)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsNet {
    pub spec: HolderBallSpec,
    pub epsilon: f64,
    /// Node spacing `T / intervals`.
    pub delta: f64,
    pub intervals: usize,
    /// Lattice step for node values.
    pub eta: f64,
    /// Node levels range over `-levels..=levels`.
    pub levels: i32,
    /// Maximal level jump between adjacent nodes.
    pub band: i32,
    /// Per-coordinate sup-norm tolerance used for membership.
    pub tolerance: f64,
    /// The net is the zero function alone.
    pub zero_only: bool,
    /// Elements per coordinate.
    #[serde(with = "biguint_string")]
    pub count_per_coordinate: BigUint,
    #[serde(with = "biguint_string")]
    pub count: BigUint,
    pub log10_count: f64,
}

mod biguint_string {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| serde::de::Error::custom("invalid integer"))
    }
}

fn log10_big(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 64 {
        return (v.iter_u64_digits().next().unwrap_or(0) as f64).log10();
    }
    let shift = bits - 64;
    let top = (v >> shift).iter_u64_digits().next().unwrap_or(0) as f64;
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

struct Params {
    delta: f64,
    intervals: usize,
    eta: f64,
    levels: i32,
    band: i32,
    tolerance: f64,
}

fn params(spec: &HolderBallSpec, eps: f64) -> Result<Params> {
    let rk = (spec.dim as f64).sqrt();
    let q = eps / (4.0 * rk);
    let target = (q / spec.h).powf(1.0 / spec.alpha).min(spec.horizon);
    let ratio = spec.horizon / target;
    if !(ratio.is_finite() && ratio < 1e9) {
        return Err(Error::NetTooLarge {
            log10_size: f64::INFINITY,
            cap: f64::NAN,
            suggested_epsilon: eps * 2.0,
        });
    }
    let intervals = ((ratio - 1e-9).ceil() as usize).max(1);
    let delta = spec.horizon / intervals as f64;
    let eta = q;
    let levels = (spec.h / eta + 1e-9).floor() as i32;
    let band = ((spec.h * delta.powf(spec.alpha) + 2.0 * eta) / eta + 1e-9).floor() as i32;
    Ok(Params {
        delta,
        intervals,
        eta,
        levels,
        band,
        tolerance: eps / rk,
    })
}

/// `log10` of the per-coordinate count without big integers.
fn log10_count_1d(p: &Params) -> f64 {
    let w = (2 * p.levels + 1) as usize;
    let mut v = vec![1.0f64; w];
    let mut scale = 0.0;
    let mut next = vec![0.0; w];
    for _ in 0..p.intervals {
        for (j, slot) in next.iter_mut().enumerate() {
            let lo = (j as i32 - p.band).max(0) as usize;
            let hi = ((j as i32 + p.band) as usize).min(w - 1);
            *slot = v[lo..=hi].iter().sum();
        }
        let m = next.iter().copied().fold(0.0, f64::max);
        next.iter_mut().for_each(|x| *x /= m);
        scale += m.log10();
        std::mem::swap(&mut v, &mut next);
    }
    scale + v.iter().sum::<f64>().log10()
}

/// Next layer of completion counts: `c_i(j) = sum_{|j' - j| <= band} c_{i+1}(j')`.
fn step_counts(c: &[BigUint], band: i32) -> Vec<BigUint> {
    let w = c.len();
    // sliding window sum
    let mut out = Vec::with_capacity(w);
    let mut window = BigUint::default();
    let hi0 = (band as usize).min(w - 1);
    for v in &c[..=hi0] {
        window += v;
    }
    for j in 0..w {
        out.push(window.clone());
        let add = j + band as usize + 1;
        if add < w {
            window += &c[add];
        }
        if j >= band as usize {
            window -= &c[j - band as usize];
        }
    }
    out
}

fn prefix(c: &[BigUint]) -> Vec<BigUint> {
    let mut p = Vec::with_capacity(c.len() + 1);
    p.push(BigUint::default());
    for v in c {
        let next = p.last().unwrap() + v;
        p.push(next);
    }
    p
}

/// Builds the net. Fails when `log10` of its size exceeds `max_log10_size`,
/// suggesting the smallest `epsilon * 2^m` that fits.
pub fn build_net(spec: &HolderBallSpec, epsilon: f64, max_log10_size: f64) -> Result<EpsNet> {
    spec.validate()?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "holder.epsilon",
            reason: format!("must be positive, got {epsilon}"),
        });
    }
    if epsilon > spec.h {
        return Ok(EpsNet {
            spec: *spec,
            epsilon,
            delta: spec.horizon,
            intervals: 1,
            eta: epsilon,
            levels: 0,
            band: 0,
            tolerance: epsilon,
            zero_only: true,
            count_per_coordinate: BigUint::from(1u32),
            count: BigUint::from(1u32),
            log10_count: 0.0,
        });
    }
    let estimate = |eps: f64| -> f64 {
        match params(spec, eps) {
            Ok(p) => {
                let lower = p.intervals as f64 * ((p.band + 1) as f64).log10();
                if lower > max_log10_size {
                    lower
                } else {
                    spec.dim as f64 * log10_count_1d(&p)
                }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let log10 = estimate(epsilon);
    if log10 > max_log10_size {
        let mut e = epsilon;
        for _ in 0..64 {
            e *= 2.0;
            if e > spec.h || estimate(e) <= max_log10_size {
                break;
            }
        }
        return Err(Error::NetTooLarge {
            log10_size: log10,
            cap: max_log10_size,
            suggested_epsilon: e,
        });
    }
    let p = params(spec, epsilon)?;
    let w = (2 * p.levels + 1) as usize;
    let mut c = vec![BigUint::from(1u32); w];
    for _ in 0..p.intervals {
        c = step_counts(&c, p.band);
    }
    let count1: BigUint = c.iter().sum();
    let count = count1.pow(spec.dim as u32);
    Ok(EpsNet {
        spec: *spec,
        epsilon,
        delta: p.delta,
        intervals: p.intervals,
        eta: p.eta,
        levels: p.levels,
        band: p.band,
        tolerance: p.tolerance,
        zero_only: false,
        log10_count: log10_big(&count),
        count_per_coordinate: count1,
        count,
    })
}

/// Node levels of one element, `[coordinate][node]`.
pub type Levels = Vec<Vec<i32>>;

impl EpsNet {
    pub fn node_times(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| i as f64 * self.delta).collect()
    }

    /// Node values `[node][coordinate]` of an element.
    pub fn node_values(&self, levels: &Levels) -> Vec<f64> {
        let nodes = self.intervals + 1;
        let mut out = vec![0.0; nodes * self.spec.dim];
        if self.zero_only {
            return out;
        }
        for (c, seq) in levels.iter().enumerate() {
            for (i, &j) in seq.iter().enumerate() {
                out[i * self.spec.dim + c] = j as f64 * self.eta;
            }
        }
        out
    }

    /// Bound on `|phi(t_{i+1}) - phi(t_i)| / delta^alpha` for every element.
    pub fn adjacent_ratio_bound(&self) -> f64 {
        self.band as f64 * self.eta / self.delta.powf(self.spec.alpha)
    }

    fn table(&self) -> Result<Vec<Vec<BigUint>>> {
        let w = (2 * self.levels + 1) as usize;
        if (self.intervals + 1) * w > TABLE_LIMIT {
            return Err(Error::Precondition(format!(
                "net with {} nodes and {w} levels is too large to unrank",
                self.intervals + 1
            )));
        }
        let mut layers = vec![vec![BigUint::from(1u32); w]];
        for _ in 0..self.intervals {
            let next = step_counts(layers.last().unwrap(), self.band);
            layers.push(next);
        }
        layers.reverse();
        Ok(layers)
    }

    /// Element at lexicographic position `index`.
    pub fn element(&self, index: &BigUint) -> Result<Levels> {
        if index >= &self.count {
            return Err(Error::InvalidParameter {
                name: "index",
                reason: format!("{index} is not below the net size {}", self.count),
            });
        }
        if self.zero_only {
            return Ok(vec![vec![0; self.intervals + 1]; self.spec.dim]);
        }
        let table = self.table()?;
        let mut rest = index.clone();
        let mut digits = Vec::with_capacity(self.spec.dim);
        for _ in 0..self.spec.dim {
            digits.push(&rest % &self.count_per_coordinate);
            rest /= &self.count_per_coordinate;
        }
        digits.reverse();
        Ok(digits.iter().map(|d| self.unrank_1d(&table, d.clone())).collect())
    }

    fn unrank_1d(&self, table: &[Vec<BigUint>], mut r: BigUint) -> Vec<i32> {
        let (jl, band) = (self.levels, self.band);
        let mut seq: Vec<i32> = Vec::with_capacity(self.intervals + 1);
        for layer in table {
            let (lo, hi) = match seq.last() {
                None => (-jl, jl),
                Some(&p) => ((p - band).max(-jl), (p + band).min(jl)),
            };
            let mut chosen = hi;
            for j in lo..=hi {
                let c = &layer[(j + jl) as usize];
                if &r < c {
                    chosen = j;
                    break;
                }
                r -= c;
            }
            seq.push(chosen);
        }
        seq
    }

    /// Lexicographic ranks of level sequences for one coordinate, computed in
    /// a single backward sweep over the nodes.
    pub fn rank_1d(&self, seqs: &[&[i32]]) -> Vec<BigUint> {
        let mut ranks = vec![BigUint::default(); seqs.len()];
        if self.zero_only {
            return ranks;
        }
        let (jl, band) = (self.levels, self.band);
        let w = (2 * jl + 1) as usize;
        let mut c = vec![BigUint::from(1u32); w];
        for i in (0..=self.intervals).rev() {
            if i < self.intervals {
                c = step_counts(&c, band);
            }
            let p = prefix(&c);
            for (rank, seq) in ranks.iter_mut().zip(seqs) {
                let lo = if i == 0 { -jl } else { (seq[i - 1] - band).max(-jl) };
                let j = seq[i];
                if j > lo {
                    *rank += &p[(j + jl) as usize] - &p[(lo + jl) as usize];
                }
            }
        }
        ranks
    }

    /// Index of an element given by its levels.
    pub fn rank(&self, levels: &[Levels]) -> Vec<BigUint> {
        let mut out = vec![BigUint::default(); levels.len()];
        for c in 0..self.spec.dim {
            let seqs: Vec<&[i32]> = levels.iter().map(|l| l[c].as_slice()).collect();
            let r = self.rank_1d(&seqs);
            for (o, r) in out.iter_mut().zip(r) {
                *o = &*o * &self.count_per_coordinate + r;
            }
        }
        out
    }

    /// All level sequences of one coordinate in lexicographic order.
    pub fn iter_levels_1d(&self) -> impl Iterator<Item = Vec<i32>> + '_ {
        let (jl, band, n) = (self.levels, self.band, self.intervals + 1);
        let mut cur: Option<Vec<i32>> = None;
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let min_from = |seq: &mut Vec<i32>, start: usize| {
                for i in start..n {
                    let v = if i == 0 { -jl } else { (seq[i - 1] - band).max(-jl) };
                    seq[i] = v;
                }
            };
            match cur.as_mut() {
                None => {
                    let mut s = vec![0; n];
                    min_from(&mut s, 0);
                    cur = Some(s);
                }
                Some(s) => {
                    let mut i = n;
                    loop {
                        if i == 0 {
                            done = true;
                            return None;
                        }
                        i -= 1;
                        let hi = if i == 0 { jl } else { (s[i - 1] + band).min(jl) };
                        if s[i] < hi {
                            s[i] += 1;
                            min_from(s, i + 1);
                            break;
                        }
                    }
                }
            }
            cur.clone()
        })
    }

    /// Lexicographically first level sequence for one coordinate within the
    /// per-coordinate tolerance at every fine grid point, where `values`
    /// holds `intervals * refine + 1` samples.
    fn first_levels_1d(&self, values: &[f64], refine: usize) -> Option<Vec<i32>> {
        let (jl, band, eta, tol) = (self.levels, self.band, self.eta, self.tolerance);
        let k = self.intervals;
        let node = |i: usize| values[i * refine];
        let range = |i: usize| -> (i32, i32) {
            let v = node(i);
            let lo = ((v - tol) / eta).floor() as i64;
            let hi = ((v + tol) / eta).ceil() as i64;
            (lo.max(-jl as i64) as i32, hi.min(jl as i64) as i32)
        };
        let near = |i: usize, j: i32| (j as f64 * eta - node(i)).abs() < tol;
        let fits = |i: usize, a: i32, b: i32| {
            let (va, vb) = (a as f64 * eta, b as f64 * eta);
            (1..refine).all(|s| {
                let l = va + (vb - va) * (s as f64 / refine as f64);
                (l - values[i * refine + s]).abs() < tol
            })
        };
        let ranges: Vec<(i32, i32)> = (0..=k).map(range).collect();
        let mut reach: Vec<Vec<bool>> = ranges
            .iter()
            .map(|&(lo, hi)| vec![false; (hi - lo + 1).max(0) as usize])
            .collect();
        let (lo_k, hi_k) = ranges[k];
        for j in lo_k..=hi_k {
            reach[k][(j - lo_k) as usize] = near(k, j);
        }
        for i in (0..k).rev() {
            let (lo, hi) = ranges[i];
            let (nlo, nhi) = ranges[i + 1];
            for j in lo..=hi {
                if !near(i, j) {
                    continue;
                }
                let ok = ((j - band).max(nlo)..=(j + band).min(nhi))
                    .any(|b| reach[i + 1][(b - nlo) as usize] && fits(i, j, b));
                reach[i][(j - lo) as usize] = ok;
            }
        }
        let (lo0, hi0) = ranges[0];
        let mut cur = (lo0..=hi0).find(|&j| reach[0][(j - lo0) as usize])?;
        let mut seq = Vec::with_capacity(k + 1);
        seq.push(cur);
        for i in 0..k {
            let (nlo, nhi) = ranges[i + 1];
            cur = ((cur - band).max(nlo)..=(cur + band).min(nhi))
                .find(|&b| reach[i + 1][(b - nlo) as usize] && fits(i, cur, b))
                .expect("reachable node has a reachable successor");
            seq.push(cur);
        }
        Some(seq)
    }

    /// Levels of the first element within the net tolerance of `path`, a
    /// `[point][coordinate]` array on a uniform grid of `[0, T]`.
    pub fn classify_levels(&self, path: &[f64]) -> Result<Option<Levels>> {
        let k = self.spec.dim;
        if path.is_empty() || path.len() % k != 0 {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: path.len() % k.max(1),
                context: "path rows",
            });
        }
        let points = path.len() / k;
        if self.zero_only {
            let inside = path
                .chunks_exact(k)
                .all(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt() < self.epsilon);
            return Ok(inside.then(|| vec![vec![0; self.intervals + 1]; k]));
        }
        if points < 2 || (points - 1) % self.intervals != 0 {
            return Err(Error::GridMismatch(format!(
                "path has {} intervals, which does not refine the {} net intervals",
                points - 1,
                self.intervals
            )));
        }
        let refine = (points - 1) / self.intervals;
        let mut out = Vec::with_capacity(k);
        for c in 0..k {
            let coord: Vec<f64> = path.chunks_exact(k).map(|x| x[c]).collect();
            match self.first_levels_1d(&coord, refine) {
                Some(seq) => out.push(seq),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }
}

/// Index of the first net element within the net tolerance of `path`.
pub fn classify_path(path: &[f64], net: &EpsNet) -> Result<Option<BigUint>> {
    Ok(net
        .classify_levels(path)?
        .map(|levels| net.rank(std::slice::from_ref(&levels)).remove(0)))
}

/// Linear interpolation of a uniform-grid path onto `points` uniform points.
pub fn resample(values: &[f64], dim: usize, points: usize) -> Vec<f64> {
    let n = values.len() / dim;
    let mut out = Vec::with_capacity(points * dim);
    for m in 0..points {
        let s = if points == 1 { 0.0 } else { m as f64 * (n - 1) as f64 / (points - 1) as f64 };
        let i = (s.floor() as usize).min(n - 2);
        let w = s - i as f64;
        for c in 0..dim {
            let a = values[i * dim + c];
            let b = values[(i + 1) * dim + c];
            out.push(a + (b - a) * w);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageOptions {
    /// Fine points per net interval when a path grid does not refine the net.
    pub refine: usize,
    /// Quantile of per-path ball constants reported as `suggested_h`.
    pub h_quantile: f64,
    pub max_log10_size: f64,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            refine: 2,
            h_quantile: 0.995,
            max_log10_size: DEFAULT_MAX_LOG10_SIZE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub paths_tested: usize,
    pub covered: usize,
    pub covered_fraction: f64,
    /// `1 - epsilon / 2`.
    pub target_fraction: f64,
    /// Fraction of paths whose ball constant is at most `h`.
    pub in_ball_fraction: f64,
    /// Empirical `(1 - epsilon / 2)`-quantile of path sup norms.
    pub sup_norm_radius: f64,
    pub max_sup_norm: f64,
    /// Requested quantile of per-path ball constants `max(sup, seminorm)`.
    pub suggested_h: f64,
    pub net_log10_size: f64,
    /// Paths per net element index (decimal).
    pub cell_histogram: BTreeMap<String, usize>,
}

/// Empirical quantile by the nearest-rank rule.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Ball constants of every path in an ensemble.
pub fn ball_constants(ensemble: &PathEnsemble, alpha: f64) -> Vec<f64> {
    let k = ensemble.dims.state();
    (0..ensemble.paths)
        .into_par_iter()
        .map(|i| ball_constant(ensemble.path(i), k, ensemble.dt, alpha))
        .collect()
}

/// `quantile` of per-path ball constants.
pub fn suggest_h(ensemble: &PathEnsemble, alpha: f64, q: f64) -> f64 {
    quantile(&ball_constants(ensemble, alpha), q)
}

/// Classifies every path of `ensemble` (already restricted to the
/// coordinates of interest) into the net for `spec` and `epsilon`.
pub fn coverage_test(
    ensemble: &PathEnsemble,
    spec: &HolderBallSpec,
    epsilon: f64,
    opts: &CoverageOptions,
) -> Result<CoverageReport> {
    if !(spec.alpha < 0.5) {
        return Err(Error::Precondition(format!(
            "coverage needs alpha < 1/2, got {}",
            spec.alpha
        )));
    }
    if ensemble.is_empty() {
        return Err(Error::Empty("path ensemble"));
    }
    if ensemble.dims.state() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: ensemble.dims.state(),
            context: "path coordinates",
        });
    }
    if (ensemble.horizon() - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(Error::GridMismatch(format!(
            "paths span {} but the ball is on [0, {}]",
            ensemble.horizon(),
            spec.horizon
        )));
    }
    if opts.refine == 0 {
        return Err(Error::InvalidParameter {
            name: "holder.refine",
            reason: "must be positive".into(),
        });
    }
    let net = build_net(spec, epsilon, opts.max_log10_size)?;
    let k = spec.dim;
    let points = if net.zero_only || ensemble.steps % net.intervals == 0 {
        ensemble.steps + 1
    } else {
        net.intervals * opts.refine + 1
    };
    let results: Result<Vec<(f64, f64, Option<Levels>)>> = (0..ensemble.paths)
        .into_par_iter()
        .map(|i| {
            let raw = ensemble.path(i);
            let (sup, hol) = holder_seminorm(raw, k, ensemble.dt, spec.alpha);
            let path = if points == ensemble.steps + 1 {
                raw.to_vec()
            } else {
                resample(raw, k, points)
            };
            Ok((sup, sup.max(hol), net.classify_levels(&path)?))
        })
        .collect();
    let results = results?;
    let sups: Vec<f64> = results.iter().map(|r| r.0).collect();
    let constants: Vec<f64> = results.iter().map(|r| r.1).collect();
    let found: Vec<Levels> = results.iter().filter_map(|r| r.2.clone()).collect();
    let mut cell_histogram = BTreeMap::new();
    for idx in net.rank(&found) {
        *cell_histogram.entry(idx.to_str_radix(10)).or_insert(0) += 1;
    }
    let n = ensemble.paths;
    Ok(CoverageReport {
        paths_tested: n,
        covered: found.len(),
        covered_fraction: found.len() as f64 / n as f64,
        target_fraction: 1.0 - epsilon / 2.0,
        in_ball_fraction: constants.iter().filter(|c| **c <= spec.h).count() as f64 / n as f64,
        sup_norm_radius: quantile(&sups, (1.0 - epsilon / 2.0).clamp(0.0, 1.0)),
        max_sup_norm: sups.iter().copied().fold(0.0, f64::max),
        suggested_h: quantile(&constants, opts.h_quantile),
        net_log10_size: net.log10_count,
        cell_histogram,
    })
}
