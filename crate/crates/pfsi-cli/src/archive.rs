//! Binary state archive ("PFSI1" format).
//!
//! Layout, all little-endian:
//!   bytes 0..8   magic "PFSI1\0\0\0"
//!   u32          format version (currently 1)
//!   u32          reserved (0)
//!   u64 + bytes  canonical config JSON
//!   u64 + bytes  stage tag (UTF-8)
//!   f64 eps, f64 delta
//!   u64 m, u64 n_beam, u64 n_fluid, u64 iterations, u64 converged (0/1)
//!   u64 dims[3] + f64 data   density coefficients, index (x, z, t)
//!   u64 dims[2] + f64 data   velocity coefficients, index (mode, time)
//!   u64 dims[2] + f64 data   beam displacement coefficients
//!   u64 dims[2] + f64 data   beam velocity coefficients
//!
//! Loading and saving round-trip bit-identically; coefficient bytes are the
//! IEEE-754 bit patterns. There is deliberately no checksum: integrity of
//! the physics content is checked by recomputing diagnostics.

use std::io::{Read as _, Write as _};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array2, Array3};

pub const MAGIC: &[u8; 8] = b"PFSI1\0\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StateArchive {
    pub version: u32,
    pub config_json: String,
    pub stage_tag: String,
    pub eps: f64,
    pub delta: f64,
    pub m: usize,
    pub n_beam: usize,
    pub n_fluid: usize,
    pub iterations: usize,
    pub converged: bool,
    pub rho: Array3<f64>,
    pub u: Array2<f64>,
    pub eta: Array2<f64>,
    pub eta_t: Array2<f64>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            bail!("archive truncated: integrity error");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len_prefixed(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }
    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl StateArchive {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u32(self.version);
        w.u32(0);
        w.bytes(self.config_json.as_bytes());
        w.bytes(self.stage_tag.as_bytes());
        w.f64(self.eps);
        w.f64(self.delta);
        w.u64(self.m as u64);
        w.u64(self.n_beam as u64);
        w.u64(self.n_fluid as u64);
        w.u64(self.iterations as u64);
        w.u64(self.converged as u64);

        let (dx, dz, dt) = self.rho.dim();
        w.u64(dx as u64);
        w.u64(dz as u64);
        w.u64(dt as u64);
        for &v in self.rho.iter() {
            w.f64(v);
        }
        for a in [&self.u, &self.eta, &self.eta_t] {
            let (r, c) = a.dim();
            w.u64(r as u64);
            w.u64(c as u64);
            for &v in a.iter() {
                w.f64(v);
            }
        }

        let mut f = std::fs::File::create(path)
            .with_context(|| format!("cannot create archive {}", path.display()))?;
        f.write_all(&w.buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .with_context(|| format!("cannot open archive {}", path.display()))?
            .read_to_end(&mut buf)?;
        let mut r = Reader { buf: &buf, pos: 0 };

        let magic = r.take(8)?;
        if magic != MAGIC {
            bail!("not a PFSI1 archive (bad magic): integrity error");
        }
        let version = r.u32()?;
        if version != VERSION {
            bail!(
                "archive format version mismatch: file has version {version}, this build reads version {VERSION}"
            );
        }
        let _reserved = r.u32()?;
        let config_json = String::from_utf8(r.len_prefixed()?.to_vec())
            .context("config echo is not valid UTF-8: integrity error")?;
        let stage_tag = String::from_utf8(r.len_prefixed()?.to_vec())
            .context("stage tag is not valid UTF-8: integrity error")?;
        let eps = r.f64()?;
        let delta = r.f64()?;
        let m = r.u64()? as usize;
        let n_beam = r.u64()? as usize;
        let n_fluid = r.u64()? as usize;
        let iterations = r.u64()? as usize;
        let converged = r.u64()? != 0;

        let dx = r.u64()? as usize;
        let dz = r.u64()? as usize;
        let dt = r.u64()? as usize;
        if dx.saturating_mul(dz).saturating_mul(dt) > 1 << 28 {
            bail!("density array dimensions implausibly large: integrity error");
        }
        let rho = Array3::from_shape_vec((dx, dz, dt), r.f64_vec(dx * dz * dt)?)
            .context("density array shape: integrity error")?;
        let mut mats = Vec::new();
        for _ in 0..3 {
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            if rows.saturating_mul(cols) > 1 << 28 {
                bail!("coefficient array dimensions implausibly large: integrity error");
            }
            mats.push(
                Array2::from_shape_vec((rows, cols), r.f64_vec(rows * cols)?)
                    .context("coefficient array shape: integrity error")?,
            );
        }
        if r.pos != buf.len() {
            bail!("trailing bytes after archive payload: integrity error");
        }
        let eta_t = mats.pop().unwrap();
        let eta = mats.pop().unwrap();
        let u = mats.pop().unwrap();
        Ok(Self {
            version,
            config_json,
            stage_tag,
            eps,
            delta,
            m,
            n_beam,
            n_fluid,
            iterations,
            converged,
            rho,
            u,
            eta,
            eta_t,
        })
    }
}
