//! Binary cache of built process tensors.
//!
//! Layout (little endian): 8-byte magic, `u32` format version, 32-byte
//! parameter fingerprint, `u64` symbol count, `u64` bond dimension (twice),
//! `u64` memory steps, `f64` step, `f64` threshold, `u64` cap (0 = none),
//! `u64` covered steps, then complex `(re, im)` pairs: the site matrices in
//! symbol-major row-major order, the left closure and the right closure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use super::{CompressionConfig, ProcessTensor, N_SYMBOLS};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"PTWORKPT";
pub const CACHE_VERSION: u32 = 1;

/// Fingerprint of everything the tensor depends on. The covered step count is
/// deliberately excluded: the tensor is the same for every length.
pub fn cache_key(bath: &str, dtau: f64, cfg: &CompressionConfig, quadrature_tol: f64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(format!("v{CACHE_VERSION};"));
    h.update(bath.as_bytes());
    h.update(format!(
        ";dtau={:016x};K={};thr={:016x};cap={};quad={:016x}",
        dtau.to_bits(),
        cfg.memory_steps,
        cfg.svd_threshold.to_bits(),
        cfg.max_bond.unwrap_or(0),
        quadrature_tol.to_bits()
    ));
    h.finalize().into()
}

fn push_u64(buf: &mut Vec<u8>, x: u64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn push_c64(buf: &mut Vec<u8>, z: C64) {
    buf.extend_from_slice(&z.re.to_le_bytes());
    buf.extend_from_slice(&z.im.to_le_bytes());
}

pub fn encode(pt: &ProcessTensor, key: &[u8; 32]) -> Vec<u8> {
    let d = pt.bond_dim();
    let mut buf = Vec::with_capacity(128 + 16 * (N_SYMBOLS * d * d + 2 * d));
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(key);
    push_u64(&mut buf, N_SYMBOLS as u64);
    push_u64(&mut buf, d as u64);
    push_u64(&mut buf, d as u64);
    push_u64(&mut buf, pt.config.memory_steps as u64);
    buf.extend_from_slice(&pt.dtau.to_le_bytes());
    buf.extend_from_slice(&pt.config.svd_threshold.to_le_bytes());
    push_u64(&mut buf, pt.config.max_bond.unwrap_or(0) as u64);
    push_u64(&mut buf, pt.n_steps as u64);
    for q in &pt.sites {
        q.iter().for_each(|&z| push_c64(&mut buf, z));
    }
    pt.left.iter().for_each(|&z| push_c64(&mut buf, z));
    pt.right.iter().for_each(|&z| push_c64(&mut buf, z));
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Cache("truncated file".into())),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn c64(&mut self) -> Result<C64> {
        Ok(C64::new(self.f64()?, self.f64()?))
    }
}

pub fn decode(buf: &[u8], key: &[u8; 32]) -> Result<ProcessTensor> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("format version {version}, expected {CACHE_VERSION}")));
    }
    if r.take(32)? != key {
        return Err(Error::Cache("parameter fingerprint mismatch".into()));
    }
    let symbols = r.u64()? as usize;
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    if symbols != N_SYMBOLS || rows != cols || rows == 0 || rows > 1 << 16 {
        return Err(Error::Cache(format!("implausible dimensions {symbols}x{rows}x{cols}")));
    }
    let memory_steps = r.u64()? as usize;
    let dtau = r.f64()?;
    let svd_threshold = r.f64()?;
    let cap = r.u64()? as usize;
    let n_steps = r.u64()? as usize;
    let config = CompressionConfig {
        svd_threshold,
        max_bond: (cap > 0).then_some(cap),
        memory_steps,
    };
    let mut sites = Vec::with_capacity(N_SYMBOLS);
    for _ in 0..N_SYMBOLS {
        let data = (0..rows * cols).map(|_| r.c64()).collect::<Result<Vec<_>>>()?;
        sites.push(Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Cache(e.to_string()))?);
    }
    let left = Array1::from((0..rows).map(|_| r.c64()).collect::<Result<Vec<_>>>()?);
    let right = Array1::from((0..rows).map(|_| r.c64()).collect::<Result<Vec<_>>>()?);
    if r.pos != buf.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    ProcessTensor::from_parts(sites, left, right, config, dtau, n_steps)
}

/// Cache directory handle.
#[derive(Debug, Clone)]
pub struct PtCache {
    pub dir: PathBuf,
}

impl PtCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, key: &[u8; 32]) -> PathBuf {
        self.dir.join(format!("pt-{}.bin", hex::encode(key)))
    }

    /// Loads a cached tensor; a corrupt file is reported and treated as a miss.
    pub fn get(&self, key: &[u8; 32]) -> Option<ProcessTensor> {
        let path = self.path_for(key);
        if !path.exists() {
            return None;
        }
        match load(&path, key) {
            Ok(pt) => Some(pt),
            Err(e) => {
                warn!("ignoring unusable cache file {}: {e}; rebuilding", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &[u8; 32], pt: &ProcessTensor) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(key);
        save(&path, pt, key)?;
        Ok(path)
    }
}

pub fn save(path: &Path, pt: &ProcessTensor, key: &[u8; 32]) -> Result<()> {
    // write then rename so a crash never leaves a half-written cache entry
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&encode(pt, key))?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path, key: &[u8; 32]) -> Result<ProcessTensor> {
    decode(&fs::read(path)?, key)
}
