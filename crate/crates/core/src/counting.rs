//! Counting-field sweeps of the work characteristic function `Φ(χ) = ⟨e^{iχW}⟩`
//! and work moments from central finite differences.

use log::warn;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contour::{assign_branches_signed, step_propagator, CountingSign, GeneralizedTimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::model::{BathCorrelation, BathSpectrum, DrivingProtocol};
use crate::pt::{process_tensor_for, CompressionConfig, ContractionState, ProcessTensor, PtCache};

/// Allowed `|Φ(0) − 1|`.
pub const PHI_TOLERANCE: f64 = 1e-4;
/// Allowed excess of `|Φ(χ)|` over one.
pub const BOUND_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_STENCIL: usize = 10;

/// Hex SHA-256 of a description string.
pub fn fingerprint(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub grid: String,
    pub bath: String,
    pub protocol: String,
    pub compression: String,
}

impl SampleMetadata {
    pub fn describe<B: BathSpectrum>(
        bath: &BathCorrelation<B>,
        protocol: &DrivingProtocol,
        grid_base: &GeneralizedTimeGrid,
        m_max: usize,
        c: &CompressionConfig,
    ) -> Self {
        Self {
            grid: fingerprint(&format!(
                "dtau={:016x};s={};f={};m_max={m_max}",
                grid_base.dtau_bits, grid_base.s, grid_base.f
            )),
            bath: fingerprint(&format!("{};quad={:e}", bath.source.describe(), bath.quadrature)),
            protocol: fingerprint(&format!("{protocol:?}")),
            compression: fingerprint(&format!("thr={:e};cap={:?};K={}", c.svd_threshold, c.max_bond, c.memory_steps)),
        }
    }
}

/// `Φ(χ_k)` on `χ_k = kΔτ`, `k = 0..=m_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct WcfSamples {
    pub dtau: f64,
    pub chi_values: Vec<f64>,
    pub phi: Vec<C64>,
    /// Per-sample flag: finite and within the characteristic-function bound.
    pub converged: Vec<bool>,
    pub metadata: SampleMetadata,
}

impl WcfSamples {
    pub fn new(dtau: f64, phi: Vec<C64>, metadata: SampleMetadata) -> Self {
        let chi_values = (0..phi.len()).map(|k| k as f64 * dtau).collect();
        let converged = phi
            .iter()
            .map(|z| z.re.is_finite() && z.im.is_finite() && z.norm() <= 1.0 + BOUND_TOLERANCE)
            .collect();
        Self {
            dtau,
            chi_values,
            phi,
            converged,
            metadata,
        }
    }

    pub fn m_max(&self) -> usize {
        self.phi.len().saturating_sub(1)
    }

    pub fn chi_max(&self) -> f64 {
        self.chi_values.last().copied().unwrap_or(0.0)
    }

    pub fn is_uniform(&self) -> bool {
        self.chi_values
            .iter()
            .enumerate()
            .all(|(k, &c)| (c - k as f64 * self.dtau).abs() <= 1e-9 * self.dtau.max(c))
    }

    /// `Φ(kΔτ)` for `k` of either sign, with `Φ(−χ) = Φ(χ)*`.
    pub fn at(&self, k: isize) -> C64 {
        let z = self.phi[k.unsigned_abs()];
        if k < 0 {
            z.conj()
        } else {
            z
        }
    }

    /// Checks `|Φ(0) − 1| < tol` and the bound `|Φ| ≤ 1 + BOUND_TOLERANCE`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let phi0 = *self
            .phi
            .first()
            .ok_or_else(|| Error::InvalidInput("no samples".into()))?;
        if !((phi0 - 1.0).norm() < tol) {
            return Err(Error::Invariant(format!("|Φ(0) − 1| = {:e} exceeds {tol:e}", (phi0 - 1.0).norm())));
        }
        if let Some(k) = self.converged.iter().position(|ok| !ok) {
            return Err(Error::Invariant(format!(
                "sample {k} violates |Φ| <= 1: Φ = {}",
                self.phi[k]
            )));
        }
        Ok(())
    }
}

pub fn maximally_mixed() -> Mat2 {
    linalg::scale2(&linalg::identity2(), C64::new(0.5, 0.0))
}

fn check_step(pt: &ProcessTensor, grid: &GeneralizedTimeGrid) -> Result<()> {
    if (pt.dtau - grid.dtau()).abs() > 1e-12 * grid.dtau() {
        return Err(Error::InvalidInput(format!(
            "process tensor step {} differs from grid step {}",
            pt.dtau,
            grid.dtau()
        )));
    }
    Ok(())
}

/// One contraction for the grid `(s, m, f)` with the counting segments
/// attached as `sign` prescribes.
pub fn phi_direct(
    pt: &ProcessTensor,
    protocol: &DrivingProtocol,
    grid: &GeneralizedTimeGrid,
    sign: CountingSign,
    rho0: &Mat2,
) -> Result<C64> {
    check_step(pt, grid)?;
    let pt = pt.with_steps(grid.n_steps());
    let steps = assign_branches_signed(grid, protocol, sign)?;
    let mut state = ContractionState::new(&pt, rho0)?;
    for step in &steps {
        state.advance(&step_propagator(step, grid.dtau()))?;
    }
    Ok(state.phi())
}

/// `Φ(mΔτ)` for `m = 0..=m_max` against one process tensor. The common
/// equilibration prefix is contracted once; the samples run in parallel.
pub fn sweep_with(
    pt: &ProcessTensor,
    protocol: &DrivingProtocol,
    grid_base: &GeneralizedTimeGrid,
    m_max: usize,
    rho0: &Mat2,
) -> Result<Vec<C64>> {
    check_step(pt, grid_base)?;
    let dtau = grid_base.dtau();
    let s = grid_base.s;
    let pt = pt.with_steps(s + m_max + grid_base.f);
    let mut prefix = ContractionState::new(&pt, rho0)?;
    let equilibration = step_propagator(
        &assign_branches_signed(&grid_base.with_counting_steps(0), protocol, CountingSign::Positive)?[0],
        dtau,
    );
    for _ in 0..s {
        prefix.advance(&equilibration)?;
    }
    (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let steps = assign_branches_signed(&grid_base.with_counting_steps(m), protocol, CountingSign::Positive)?;
            let mut state = prefix.clone();
            for step in &steps[s..] {
                state.advance(&step_propagator(step, dtau))?;
            }
            Ok(state.phi())
        })
        .collect()
}

/// Settings of a sweep beyond the grid.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub compression: CompressionConfig,
    pub cache: Option<PtCache>,
    pub rho0: Mat2,
}

impl SweepSettings {
    pub fn new(compression: CompressionConfig) -> Self {
        Self {
            compression,
            cache: None,
            rho0: maximally_mixed(),
        }
    }
}

/// Builds (or loads) the process tensor and sweeps the counting field.
pub fn wcf_sweep<B: BathSpectrum>(
    bath: &BathCorrelation<B>,
    protocol: &DrivingProtocol,
    grid_base: &GeneralizedTimeGrid,
    m_max: usize,
    settings: &SweepSettings,
) -> Result<WcfSamples> {
    let pt = process_tensor_for(bath, grid_base.dtau(), &settings.compression, settings.cache.as_ref())?;
    let phi = sweep_with(&pt, protocol, grid_base, m_max, &settings.rho0)?;
    let metadata = SampleMetadata::describe(bath, protocol, grid_base, m_max, &settings.compression);
    let samples = WcfSamples::new(grid_base.dtau(), phi, metadata);
    if let Err(e) = samples.check(PHI_TOLERANCE) {
        warn!("{e}");
    }
    Ok(samples)
}

/// Finite-difference weights for the `order`-th derivative at zero on the
/// given nodes (Fornberg's recursion).
pub fn fd_weights(order: usize, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Half-width of the central stencil of accuracy `stencil` for derivative `order`.
pub fn stencil_half_width(order: usize, stencil: usize) -> usize {
    order.div_ceil(2) - 1 + stencil / 2
}

/// `⟨Wⁿ⟩ = (−i)ⁿ ∂ⁿ_χ Φ|₀` from central differences on the symmetric extension.
pub fn moments_fd(samples: &WcfSamples, order: usize, stencil: usize) -> Result<f64> {
    if order == 0 {
        return Ok(samples.phi.first().map_or(0.0, |z| z.re));
    }
    if stencil < 2 || !stencil.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("stencil order must be even and >= 2, got {stencil}")));
    }
    if !samples.is_uniform() || samples.phi.is_empty() {
        return Err(Error::InvalidInput("finite differences need the uniform grid χ_k = kΔτ".into()));
    }
    let p = stencil_half_width(order, stencil);
    if samples.m_max() < p {
        return Err(Error::InsufficientSamples {
            required: p,
            available: samples.m_max(),
        });
    }
    let nodes: Vec<f64> = (-(p as isize)..=p as isize).map(|k| k as f64).collect();
    let w = fd_weights(order, &nodes);
    let d: C64 = nodes
        .iter()
        .zip(&w)
        .map(|(&k, &wk)| samples.at(k as isize) * wk)
        .sum::<C64>()
        / samples.dtau.powi(order as i32);
    Ok((C64::new(0.0, -1.0).powu(order as u32) * d).re)
}

/// `⟨W²⟩ − ⟨W⟩²` from finite differences.
pub fn variance_fd(samples: &WcfSamples, stencil: usize) -> Result<f64> {
    let m1 = moments_fd(samples, 1, stencil)?;
    Ok(moments_fd(samples, 2, stencil)? - m1 * m1)
}
