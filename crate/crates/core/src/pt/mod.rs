//! Process tensor of the influence functional and its contraction with the
//! system propagators.
//!
//! Path variables live in Liouville space: `α = 2a + b` where `a` is the ket
//! (forward) and `b` the bra (backward) σz index, with σz eigenvalue `+1` for
//! index 0 and `−1` for index 1. A fifth, inert symbol marks "no step" and is
//! used to close the tensor network outside the simulated window.

mod build;
mod cache;
mod contract;

pub use build::build_process_tensor;
pub use cache::{cache_key, load, save, PtCache, CACHE_MAGIC, CACHE_VERSION};
pub use contract::{contract, Contraction, ContractionState};

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{influence_coefficients, BathCorrelation, BathSpectrum};

/// Liouville path symbols plus the inert closure symbol.
pub const N_SYMBOLS: usize = 5;
pub const NULL_SYMBOL: usize = 4;

/// σz eigenvalues `(z⁺, z⁻)` on the forward and backward branch.
pub fn branch_values(symbol: usize) -> (f64, f64) {
    match symbol {
        0 => (1.0, 1.0),
        1 => (1.0, -1.0),
        2 => (-1.0, 1.0),
        3 => (-1.0, -1.0),
        _ => (0.0, 0.0),
    }
}

/// Pair weight `exp[−(z⁺_j − z⁻_j)(η z⁺_k − η* z⁻_k)]` between the later
/// symbol `j` and the earlier symbol `k`.
pub fn influence_factor(eta: C64, later: usize, earlier: usize) -> C64 {
    let (jp, jm) = branch_values(later);
    let (kp, km) = branch_values(earlier);
    (-(jp - jm) * (eta * kp - eta.conj() * km)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    /// Singular values below `svd_threshold × largest` are discarded.
    pub svd_threshold: f64,
    pub max_bond: Option<usize>,
    pub memory_steps: usize,
}

impl CompressionConfig {
    pub fn new(svd_threshold: f64, max_bond: Option<usize>, memory_steps: usize) -> Result<Self> {
        let cfg = Self { svd_threshold, max_bond, memory_steps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.svd_threshold > 0.0 && self.svd_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "svd threshold must lie in (0, 1), got {}",
                self.svd_threshold
            )));
        }
        if self.memory_steps == 0 {
            return Err(Error::InvalidInput("memory must span at least one step".into()));
        }
        if self.max_bond == Some(0) {
            return Err(Error::InvalidInput("max_bond must be positive".into()));
        }
        Ok(())
    }
}

/// Per-layer record of the construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    /// Bond dimension after absorbing each memory layer, from the longest
    /// separation down to the same-step term.
    pub layer_bonds: Vec<usize>,
    /// Gauge-fixing iterations used per layer.
    pub iterations: Vec<usize>,
    /// Largest discarded singular value relative to the largest kept one.
    pub truncation: Vec<f64>,
}

/// Translation-invariant matrix-product representation of the discretised
/// influence functional: `F(α_1..α_N) = vₗ · Q[α_1] ⋯ Q[α_N] · c_R`.
///
/// Every site carries the same tensor, so one instance serves any number of
/// steps and shorter runs simply use a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessTensor {
    pub(crate) sites: Vec<Array2<C64>>,
    pub(crate) left: Array1<C64>,
    pub(crate) right: Array1<C64>,
    pub config: CompressionConfig,
    pub dtau: f64,
    pub n_steps: usize,
    pub diagnostics: BuildDiagnostics,
}

impl ProcessTensor {
    /// Exact tensor of a decoupled environment.
    pub fn trivial(config: CompressionConfig, dtau: f64, n_steps: usize) -> Self {
        Self {
            sites: vec![Array2::eye(1); N_SYMBOLS],
            left: Array1::ones(1),
            right: Array1::ones(1),
            config,
            dtau,
            n_steps,
            diagnostics: BuildDiagnostics {
                layer_bonds: vec![1],
                iterations: vec![0],
                truncation: vec![0.0],
            },
        }
    }

    pub fn from_parts(
        sites: Vec<Array2<C64>>,
        left: Array1<C64>,
        right: Array1<C64>,
        config: CompressionConfig,
        dtau: f64,
        n_steps: usize,
    ) -> Result<Self> {
        let d = left.len();
        if sites.len() != N_SYMBOLS || right.len() != d || sites.iter().any(|q| q.dim() != (d, d)) {
            return Err(Error::Structure("process tensor parts have inconsistent dimensions".into()));
        }
        Ok(Self {
            sites,
            left,
            right,
            config,
            dtau,
            n_steps,
            diagnostics: BuildDiagnostics::default(),
        })
    }

    pub fn bond_dim(&self) -> usize {
        self.left.len()
    }

    /// Dimensions of the bonds around the `N` sites, closures included.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.bond_dim(); self.n_steps + 1];
        dims[0] = 1;
        dims[self.n_steps] = 1;
        dims
    }

    /// The same tensor viewed as covering `n_steps` sites.
    pub fn with_steps(&self, n_steps: usize) -> Self {
        Self { n_steps, ..self.clone() }
    }

    /// Site matrix for one Liouville symbol.
    pub fn site(&self, symbol: usize) -> &Array2<C64> {
        &self.sites[symbol]
    }

    pub fn left_closure(&self) -> &Array1<C64> {
        &self.left
    }

    pub fn right_closure(&self) -> &Array1<C64> {
        &self.right
    }

    /// Influence-functional value of one explicit path.
    pub fn path_weight(&self, path: &[usize]) -> C64 {
        let mut v = self.left.clone();
        for &a in path {
            v = v.dot(&self.sites[a]);
        }
        v.dot(&self.right)
    }
}

/// Loads the process tensor for `bc` from `cache`, building and storing it
/// on a miss. The returned tensor covers `K` sites; use
/// [`ProcessTensor::with_steps`] for longer contractions.
pub fn process_tensor_for<B: BathSpectrum>(
    bc: &BathCorrelation<B>,
    dtau: f64,
    cfg: &CompressionConfig,
    cache: Option<&PtCache>,
) -> Result<ProcessTensor> {
    Ok(cached_process_tensor(bc, dtau, cfg, cache)?.0)
}

/// [`process_tensor_for`], also reporting whether the cache was hit.
pub fn cached_process_tensor<B: BathSpectrum>(
    bc: &BathCorrelation<B>,
    dtau: f64,
    cfg: &CompressionConfig,
    cache: Option<&PtCache>,
) -> Result<(ProcessTensor, bool)> {
    cfg.validate()?;
    let key = cache_key(&bc.source.describe(), dtau, cfg, bc.quadrature);
    if let Some(pt) = cache.and_then(|c| c.get(&key)) {
        log::info!("process tensor loaded from cache (bond {})", pt.bond_dim());
        return Ok((pt, true));
    }
    let k = cfg.memory_steps;
    let eta = influence_coefficients(bc, dtau, k, k)?;
    let pt = build_process_tensor(&eta, cfg, k)?;
    log::info!("process tensor built (bond {})", pt.bond_dim());
    if let Some(c) = cache {
        c.put(&key, &pt)?;
    }
    Ok((pt, false))
}
