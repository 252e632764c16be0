//! CSV export and a binary cache for flows and path ensembles.
//!
//! CSV schemas:
//! - trajectories: `run_id,path_id,step,t,x0,...,x{N-1}`, one row per
//!   particle and time, particles outermost.
//! - distances: `t,tv,w1`.
//!
//! Floats are written in shortest round-trip scientific notation, so CSV
//! output is a deterministic function of the values.
//!
//! Cache layout, little-endian: magic `MKVC`, `u16` version, `u8` kind,
//! `u8` reserved, 32-byte config hash, then the payload. The reader rejects
//! any header mismatch before touching the payload.

use std::io::{Read, Write};

use crate::coefficients::Dims;
use crate::error::{Error, Result};
use crate::particle::{FlowOfMarginals, ParticleCloud, PathEnsemble};

pub const CACHE_MAGIC: [u8; 4] = *b"MKVC";
pub const CACHE_VERSION: u16 = 1;

/// Payload stored in a cache file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CacheKind {
    Flow = 1,
    Paths = 2,
}

pub type ConfigHash = [u8; 32];

fn header(line: &mut String, dim: usize) {
    line.push_str("run_id,path_id,step,t");
    for c in 0..dim {
        line.push_str(&format!(",x{c}"));
    }
    line.push('\n');
}

fn row(line: &mut String, run_id: &str, path: usize, step: usize, t: f64, x: &[f64]) {
    use std::fmt::Write as _;
    let _ = write!(line, "{run_id},{path},{step},{t:e}");
    for v in x {
        let _ = write!(line, ",{v:e}");
    }
    line.push('\n');
}

/// Trajectory CSV for every path of an ensemble.
pub fn write_paths_csv<W: Write>(mut w: W, run_id: &str, ensemble: &PathEnsemble) -> Result<()> {
    let mut line = String::new();
    header(&mut line, ensemble.dims.state());
    w.write_all(line.as_bytes())?;
    for i in 0..ensemble.paths {
        line.clear();
        for k in 0..=ensemble.steps {
            row(&mut line, run_id, i, k, k as f64 * ensemble.dt, ensemble.state(i, k));
        }
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Trajectory CSV for a flow of marginals; `path_id` is the particle index
/// and `step` the Euler step of each stored marginal.
pub fn write_flow_csv<W: Write>(mut w: W, run_id: &str, flow: &FlowOfMarginals) -> Result<()> {
    let mut line = String::new();
    let dim = flow.first().dim();
    header(&mut line, dim);
    w.write_all(line.as_bytes())?;
    for i in 0..flow.particles() {
        line.clear();
        for (m, cloud) in flow.clouds.iter().enumerate() {
            row(&mut line, run_id, i, m * flow.stride, cloud.t, cloud.get(i));
        }
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Distance CSV with columns `t,tv,w1`.
pub fn write_distance_csv<W: Write>(mut w: W, times: &[f64], tv: &[f64], w1: &[f64]) -> Result<()> {
    if tv.len() != times.len() || w1.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: tv.len().max(w1.len()),
            context: "distance columns",
        });
    }
    let mut out = String::from("t,tv,w1\n");
    for ((t, a), b) in times.iter().zip(tv).zip(w1) {
        out.push_str(&format!("{t:e},{a:e},{b:e}\n"));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

struct Sink<W: Write>(W);

impl<W: Write> Sink<W> {
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }

    fn floats(&mut self, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        Ok(self.0.write_all(&buf)?)
    }
}

struct Source<R: Read>(R);

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Artifact("cache file is truncated".into())
    } else {
        Error::Io(e)
    }
}

impl<R: Read> Source<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self, limit: u64, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > limit {
            return Err(Error::Artifact(format!("implausible {what} {v} in cache")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        self.0.read_exact(&mut buf).map_err(truncated)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    fn end(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.0.read(&mut b)? {
            0 => Ok(()),
            _ => Err(Error::Artifact("trailing bytes after cache payload".into())),
        }
    }
}

fn write_header<W: Write>(s: &mut Sink<W>, kind: CacheKind, hash: &ConfigHash) -> Result<()> {
    s.0.write_all(&CACHE_MAGIC)?;
    s.0.write_all(&CACHE_VERSION.to_le_bytes())?;
    s.0.write_all(&[kind as u8, 0])?;
    s.0.write_all(hash)?;
    Ok(())
}

fn read_header<R: Read>(s: &mut Source<R>, kind: CacheKind, hash: &ConfigHash) -> Result<()> {
    let magic: [u8; 4] = s.bytes()?;
    if magic != CACHE_MAGIC {
        return Err(Error::Artifact("bad cache magic".into()));
    }
    let version = u16::from_le_bytes(s.bytes()?);
    if version != CACHE_VERSION {
        return Err(Error::Artifact(format!(
            "cache version {version}, expected {CACHE_VERSION}"
        )));
    }
    let [k, _]: [u8; 2] = s.bytes()?;
    if k != kind as u8 {
        return Err(Error::Artifact(format!("cache kind {k}, expected {}", kind as u8)));
    }
    let stored: ConfigHash = s.bytes()?;
    if &stored != hash {
        return Err(Error::Artifact("cache was written for a different configuration".into()));
    }
    Ok(())
}

const MAX_COUNT: u64 = 1 << 40;

pub fn write_flow_cache<W: Write>(w: W, hash: &ConfigHash, flow: &FlowOfMarginals) -> Result<()> {
    let mut s = Sink(w);
    write_header(&mut s, CacheKind::Flow, hash)?;
    s.f64(flow.dt)?;
    s.u64(flow.stride as u64)?;
    s.u64(flow.len() as u64)?;
    s.u64(flow.first().dim() as u64)?;
    s.u64(flow.particles() as u64)?;
    for c in &flow.clouds {
        s.f64(c.t)?;
        s.floats(c.states())?;
    }
    Ok(s.0.flush()?)
}

pub fn read_flow_cache<R: Read>(r: R, hash: &ConfigHash) -> Result<FlowOfMarginals> {
    let mut s = Source(r);
    read_header(&mut s, CacheKind::Flow, hash)?;
    let dt = s.f64()?;
    let stride = s.usize(MAX_COUNT, "stride")?;
    let count = s.usize(MAX_COUNT, "marginal count")?;
    let dim = s.usize(1 << 20, "dimension")?;
    let particles = s.usize(MAX_COUNT, "particle count")?;
    if count == 0 || dim == 0 || stride == 0 {
        return Err(Error::Artifact("empty flow in cache".into()));
    }
    let mut clouds = Vec::with_capacity(count);
    for _ in 0..count {
        let t = s.f64()?;
        let states = s.floats(particles * dim)?;
        clouds.push(ParticleCloud::new(t, dim, states).map_err(|e| Error::Artifact(e.to_string()))?);
    }
    s.end()?;
    Ok(FlowOfMarginals { dt, stride, clouds })
}

pub fn write_paths_cache<W: Write>(w: W, hash: &ConfigHash, e: &PathEnsemble) -> Result<()> {
    let mut s = Sink(w);
    write_header(&mut s, CacheKind::Paths, hash)?;
    s.u64(e.dims.state() as u64)?;
    s.u64(e.dims.noise() as u64)?;
    s.f64(e.dt)?;
    s.u64(e.steps as u64)?;
    s.u64(e.seed)?;
    s.u64(e.paths as u64)?;
    s.floats(&e.trajectories)?;
    s.floats(&e.increments)?;
    Ok(s.0.flush()?)
}

pub fn read_paths_cache<R: Read>(r: R, hash: &ConfigHash) -> Result<PathEnsemble> {
    let mut s = Source(r);
    read_header(&mut s, CacheKind::Paths, hash)?;
    let state = s.usize(1 << 20, "dimension")?;
    let noise = s.usize(1 << 20, "noise dimension")?;
    let dims = Dims::new(state, noise).map_err(|e| Error::Artifact(e.to_string()))?;
    let dt = s.f64()?;
    let steps = s.usize(MAX_COUNT, "step count")?;
    let seed = s.u64()?;
    let paths = s.usize(MAX_COUNT, "path count")?;
    let trajectories = s.floats(paths * (steps + 1) * state)?;
    let increments = s.floats(paths * steps * noise)?;
    s.end()?;
    Ok(PathEnsemble {
        dims,
        dt,
        steps,
        seed,
        paths,
        trajectories,
        increments,
    })
}
