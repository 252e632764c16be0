use serde::{Deserialize, Serialize};

use crate::coefficients::Dims;
use crate::error::{Error, Result};

/// `N_p` states in `R^N` at one time, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub t: f64,
    dim: usize,
    states: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(t: f64, dim: usize, states: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dims("cloud dimension must be positive".into()));
        }
        if states.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: states.len() % dim,
                context: "cloud storage is not a whole number of rows",
            });
        }
        if let Some(i) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: 0,
                particle: i / dim,
            });
        }
        Ok(Self { t, dim, states })
    }

    pub(crate) fn from_parts(t: f64, dim: usize, states: Vec<f64>) -> Self {
        Self { t, dim, states }
    }

    pub fn from_rows(t: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::Empty("cloud"))?;
        let mut states = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                    context: "cloud row",
                });
            }
            states.extend_from_slice(r);
        }
        Self::new(t, dim, states)
    }

    pub fn point_mass(t: f64, z: &[f64], count: usize) -> Self {
        Self {
            t,
            dim: z.len(),
            states: z.repeat(count),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.states.chunks_exact(self.dim)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Coordinate `j` of every particle.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter().map(|x| x[j]).collect()
    }

    /// The cloud with particles reordered: row `i` of the result is row
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut states = Vec::with_capacity(self.states.len());
        for &p in perm {
            states.extend_from_slice(self.get(p));
        }
        Self::from_parts(self.t, self.dim, states)
    }
}

/// Clouds on the uniform grid `t_j = j * stride * dt`, `j = 0..=steps/stride`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOfMarginals {
    pub dt: f64,
    pub stride: usize,
    pub clouds: Vec<ParticleCloud>,
}

impl FlowOfMarginals {
    /// `cloud` held constant on every step of `0..=steps`.
    pub fn constant(cloud: &ParticleCloud, dt: f64, steps: usize) -> Self {
        let clouds = (0..=steps)
            .map(|k| {
                let mut c = cloud.clone();
                c.t = k as f64 * dt;
                c
            })
            .collect();
        Self {
            dt,
            stride: 1,
            clouds,
        }
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    /// Number of Euler steps spanned by the flow.
    pub fn steps(&self) -> usize {
        self.clouds.len().saturating_sub(1) * self.stride
    }

    pub fn times(&self) -> Vec<f64> {
        self.clouds.iter().map(|c| c.t).collect()
    }

    pub fn first(&self) -> &ParticleCloud {
        &self.clouds[0]
    }

    pub fn last(&self) -> &ParticleCloud {
        self.clouds.last().expect("flow has at least one cloud")
    }

    /// Cloud recorded at Euler step `k`, if `k` lies on the flow grid.
    pub fn at_step(&self, k: usize) -> Option<&ParticleCloud> {
        if k % self.stride != 0 {
            return None;
        }
        self.clouds.get(k / self.stride)
    }

    pub fn particles(&self) -> usize {
        self.clouds.first().map_or(0, ParticleCloud::len)
    }
}

/// Stored trajectories and their driving Brownian increments.
///
/// `trajectories` is `[path][step 0..=steps][N]`, `increments` is
/// `[path][step 0..steps][d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub dims: Dims,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub paths: usize,
    pub trajectories: Vec<f64>,
    pub increments: Vec<f64>,
}

impl PathEnsemble {
    pub fn new(dims: Dims, dt: f64, steps: usize, seed: u64, paths: usize) -> Self {
        Self {
            dims,
            dt,
            steps,
            seed,
            paths,
            trajectories: vec![0.0; paths * (steps + 1) * dims.state()],
            increments: vec![0.0; paths * steps * dims.noise()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.paths == 0
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// The whole trajectory of path `i`, `(steps + 1) * N` values.
    pub fn path(&self, i: usize) -> &[f64] {
        let len = (self.steps + 1) * self.dims.state();
        &self.trajectories[i * len..(i + 1) * len]
    }

    pub fn state(&self, i: usize, k: usize) -> &[f64] {
        let n = self.dims.state();
        let start = (i * (self.steps + 1) + k) * n;
        &self.trajectories[start..start + n]
    }

    pub fn increment(&self, i: usize, k: usize) -> &[f64] {
        let d = self.dims.noise();
        let start = (i * self.steps + k) * d;
        &self.increments[start..start + d]
    }

    pub(crate) fn state_mut(&mut self, i: usize, k: usize) -> &mut [f64] {
        let n = self.dims.state();
        let start = (i * (self.steps + 1) + k) * n;
        &mut self.trajectories[start..start + n]
    }

    pub(crate) fn increment_mut(&mut self, i: usize, k: usize) -> &mut [f64] {
        let d = self.dims.noise();
        let start = (i * self.steps + k) * d;
        &mut self.increments[start..start + d]
    }

    /// Coordinates `coords` of path `i` as a `(steps + 1) x coords.len()`
    /// row-major array.
    pub fn select(&self, i: usize, coords: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.steps + 1) * coords.len());
        for k in 0..=self.steps {
            let x = self.state(i, k);
            out.extend(coords.iter().map(|&c| x[c]));
        }
        out
    }

    /// Ensemble restricted to coordinates `coords`. Increments are kept.
    pub fn restrict(&self, coords: &[usize]) -> Result<PathEnsemble> {
        let n = self.dims.state();
        if coords.is_empty() || coords.iter().any(|&c| c >= n) {
            return Err(Error::Dims(format!("invalid coordinate selection {coords:?} for N = {n}")));
        }
        let noise = self.dims.noise().min(coords.len());
        let dims = Dims::new(coords.len(), noise)?;
        let mut trajectories = Vec::with_capacity(self.paths * (self.steps + 1) * coords.len());
        for i in 0..self.paths {
            trajectories.extend(self.select(i, coords));
        }
        let increments = if noise == self.dims.noise() {
            self.increments.clone()
        } else {
            let mut inc = Vec::with_capacity(self.paths * self.steps * noise);
            for i in 0..self.paths {
                for k in 0..self.steps {
                    inc.extend_from_slice(&self.increment(i, k)[..noise]);
                }
            }
            inc
        };
        Ok(PathEnsemble {
            dims,
            dt: self.dt,
            steps: self.steps,
            seed: self.seed,
            paths: self.paths,
            trajectories,
            increments,
        })
    }

    /// Terminal states as a cloud.
    pub fn terminal_cloud(&self) -> ParticleCloud {
        let n = self.dims.state();
        let mut states = Vec::with_capacity(self.paths * n);
        for i in 0..self.paths {
            states.extend_from_slice(self.state(i, self.steps));
        }
        ParticleCloud::from_parts(self.horizon(), n, states)
    }

    /// Initial states as a cloud.
    pub fn initial_cloud(&self) -> ParticleCloud {
        let n = self.dims.state();
        let mut states = Vec::with_capacity(self.paths * n);
        for i in 0..self.paths {
            states.extend_from_slice(self.state(i, 0));
        }
        ParticleCloud::from_parts(0.0, n, states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_rejects_bad_storage() {
        assert!(ParticleCloud::new(0.0, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            ParticleCloud::new(0.0, 1, vec![1.0, f64::NAN]),
            Err(Error::BlowUp { particle: 1, .. })
        ));
        let c = ParticleCloud::from_rows(0.5, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(1), &[3.0, 4.0]);
        assert_eq!(c.column(0), vec![1.0, 3.0]);
        assert_eq!(c.permuted(&[1, 0]).get(0), &[3.0, 4.0]);
    }

    #[test]
    fn flow_grid() {
        let c = ParticleCloud::point_mass(0.0, &[1.0], 3);
        let f = FlowOfMarginals::constant(&c, 0.1, 4);
        assert_eq!(f.len(), 5);
        assert_eq!(f.steps(), 4);
        assert!((f.last().t - 0.4).abs() < 1e-15);
        assert!(f.at_step(4).is_some());
        assert!(f.at_step(5).is_none());
    }

    #[test]
    fn ensemble_restrict() {
        let dims = Dims::new(2, 1).unwrap();
        let mut e = PathEnsemble::new(dims, 0.5, 2, 0, 1);
        for k in 0..=2 {
            e.state_mut(0, k).copy_from_slice(&[k as f64, -(k as f64)]);
        }
        let r = e.restrict(&[0]).unwrap();
        assert_eq!(r.path(0), &[0.0, 1.0, 2.0]);
        assert_eq!(e.terminal_cloud().get(0), &[2.0, -2.0]);
    }
}
