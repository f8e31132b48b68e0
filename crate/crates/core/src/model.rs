//! Driven spin-boson model: spectral density, bath correlation function,
//! discretised influence coefficients and the erasure drive.
//!
//! Units are fixed by the inverse temperature: times in units of β, energies
//! in units of 1/β. The bath correlation function is
//! `C(t) = ∫ J(ω) [coth(βω/2) cos ωt − i sin ωt] dω` (optionally with a
//! prefactor 1/π, see [`Normalization`]), which is written internally as an
//! integral against the measure `dν = J(ω)/ω dω` so that the removable
//! singularity at ω → 0 never appears explicitly.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::quadrature::{self, QuadratureOptions};

/// Default absolute quadrature tolerance for bath integrals.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Prefactor relating `J(ω)` to the bath correlation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `C(t) = ∫ J(ω)[…] dω`, i.e. `J(ω) = Σ_k g_k² δ(ω − ω_k)`.
    #[default]
    Plain,
    /// `C(t) = (1/π) ∫ J(ω)[…] dω`.
    OverPi,
}

impl Normalization {
    pub fn factor(self) -> f64 {
        match self {
            Self::Plain => 1.0,
            Self::OverPi => 1.0 / PI,
        }
    }
}

/// Under-damped Drude–Lorentz spectral density
/// `J(ω) = αΓΩ²ω / [(Ω²−ω²)² + (Γω)²]` with a hard cutoff at `omega_cut`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub alpha: f64,
    pub gamma: f64,
    pub omega0: f64,
    pub omega_cut: f64,
    pub beta: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

impl SpectralDensity {
    /// Validating constructor. `omega_cut = None` selects `10·omega0`.
    pub fn new(alpha: f64, gamma: f64, omega0: f64, omega_cut: Option<f64>, beta: f64) -> Result<Self> {
        let sd = Self {
            alpha,
            gamma,
            omega0,
            omega_cut: omega_cut.unwrap_or(10.0 * omega0),
            beta,
            normalization: Normalization::Plain,
        };
        sd.validate()?;
        Ok(sd)
    }

    pub fn with_normalization(self, normalization: Normalization) -> Self {
        Self { normalization, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.gamma > 0.0
            && self.omega0 > 0.0
            && self.omega_cut > self.omega0
            && self.beta > 0.0
            && [self.alpha, self.gamma, self.omega0, self.omega_cut, self.beta]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid spectral density {self:?}")))
        }
    }

    /// Evaluates J(ω).
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::Domain(format!("spectral density needs omega >= 0, got {omega}")));
        }
        Ok(omega * self.j_over_omega(omega))
    }

    fn j_over_omega(&self, omega: f64) -> f64 {
        let w2 = self.omega0 * self.omega0;
        let detuning = w2 - omega * omega;
        self.alpha * self.gamma * w2 / (detuning * detuning + (self.gamma * omega).powi(2))
    }
}

/// Free function form of [`SpectralDensity::eval`].
pub fn eval_spectral_density(sd: &SpectralDensity, omega: f64) -> Result<f64> {
    sd.eval(omega)
}

/// A bosonic environment seen through the measure `dν`, with
/// `C(t) = ∫ [ω coth(βω/2) cos ωt − iω sin ωt] dν(ω)`.
pub trait BathSpectrum: Sync {
    fn beta(&self) -> f64;

    /// `∫ f(ω) dν(ω)` to absolute accuracy `abs_tol`.
    fn integrate(&self, f: &dyn Fn(f64) -> C64, abs_tol: f64) -> Result<C64>;

    /// Stable byte description used for cache keys and fingerprints.
    fn describe(&self) -> String;
}

impl BathSpectrum for SpectralDensity {
    fn beta(&self) -> f64 {
        self.beta
    }

    fn integrate(&self, f: &dyn Fn(f64) -> C64, abs_tol: f64) -> Result<C64> {
        if self.alpha == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        let (w, g) = (self.omega0, self.gamma);
        let breakpoints = [w - g, w - 0.5 * g, w, w + 0.5 * g, w + g, 2.0 * w];
        let opts = QuadratureOptions {
            abs_tol,
            rel_tol: 0.0,
            max_intervals: 20_000,
        };
        let scale = self.normalization.factor();
        let integrand = |omega: f64| f(omega) * (self.j_over_omega(omega) * scale);
        Ok(quadrature::integrate(integrand, 0.0, self.omega_cut, &breakpoints, &opts)?.value)
    }

    fn describe(&self) -> String {
        format!(
            "drude-lorentz alpha={:e} gamma={:e} omega0={:e} omega_cut={:e} beta={:e} norm={:?}",
            self.alpha, self.gamma, self.omega0, self.omega_cut, self.beta, self.normalization
        )
    }
}

/// `ω·coth(βω/2)`, continuous at ω = 0.
pub fn omega_coth(omega: f64, beta: f64) -> f64 {
    let x = 0.5 * beta * omega;
    if x.abs() < 1e-4 {
        (2.0 / beta) * (1.0 + x * x / 3.0)
    } else {
        omega / x.tanh()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `(x − sin x)/x³`, continuous at x = 0.
fn x_minus_sin_over_x3(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0
    } else {
        (x - x.sin()) / (x * x * x)
    }
}

/// Bath autocorrelation `C(t) = ⟨B(t)B(0)⟩`.
#[derive(Debug, Clone)]
pub struct BathCorrelation<B> {
    pub source: B,
    pub quadrature: f64,
}

impl<B: BathSpectrum> BathCorrelation<B> {
    pub fn new(source: B) -> Self {
        Self {
            source,
            quadrature: DEFAULT_QUAD_TOL,
        }
    }

    pub fn with_tolerance(source: B, quadrature: f64) -> Self {
        Self { source, quadrature }
    }

    /// `C(t)` for `t ≥ 0`; use `C(−t) = C(t)*` for negative times.
    pub fn eval(&self, t: f64) -> Result<C64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("bath correlation evaluated at t = {t} < 0")));
        }
        let beta = self.source.beta();
        let f = |w: f64| C64::new(omega_coth(w, beta) * (w * t).cos(), -w * (w * t).sin());
        self.source.integrate(&f, self.quadrature)
    }
}

/// Free function form of [`BathCorrelation::eval`].
pub fn bath_correlation<B: BathSpectrum>(bc: &BathCorrelation<B>, t: f64) -> Result<C64> {
    bc.eval(t)
}

/// Cell-integrated influence coefficients. Because the path variable of step
/// `j` sits at the end of the cell `[jΔτ, (j+1)Δτ]`, every coefficient depends
/// only on `d = j − k`, so the table is stored as the kernel `η_d`, `0 ≤ d ≤ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCoefficients {
    kernel: Vec<C64>,
    pub dtau: f64,
    pub memory_steps: usize,
    pub n_steps: usize,
}

impl InfluenceCoefficients {
    pub fn from_kernel(kernel: Vec<C64>, dtau: f64, n_steps: usize) -> Result<Self> {
        if kernel.is_empty() || !(dtau > 0.0) {
            return Err(Error::InvalidInput("empty influence kernel or non-positive step".into()));
        }
        if kernel.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("non-finite influence coefficient".into()));
        }
        Ok(Self {
            memory_steps: kernel.len() - 1,
            kernel,
            dtau,
            n_steps,
        })
    }

    /// Zero coupling.
    pub fn zero(dtau: f64, n_steps: usize, memory_steps: usize) -> Self {
        Self {
            kernel: vec![C64::new(0.0, 0.0); memory_steps + 1],
            dtau,
            memory_steps,
            n_steps,
        }
    }

    /// `η_d`, zero beyond the memory cutoff.
    pub fn eta(&self, d: usize) -> C64 {
        self.kernel.get(d).copied().unwrap_or_default()
    }

    /// Table entry `η[j][k]` for `0 ≤ k ≤ j`.
    pub fn get(&self, j: usize, k: usize) -> C64 {
        assert!(k <= j, "influence table is lower triangular");
        self.eta(j - k)
    }

    pub fn kernel(&self) -> &[C64] {
        &self.kernel
    }

    pub fn is_zero(&self) -> bool {
        self.kernel.iter().all(|z| *z == C64::new(0.0, 0.0))
    }
}

/// Exact cell double integrals of `C`, evaluated in the frequency domain:
/// for `d ≥ 1`, `η_d = ∫dν Δ² sinc²(ωΔ/2) [ω coth(βω/2) cos(ωdΔ) − iω sin(ωdΔ)]`,
/// and the same-cell term `η_0 = ∫dν [ω coth (Δ²/2) sinc²(ωΔ/2) − iΔ(ωΔ − sin ωΔ)/(ωΔ)]`.
pub fn influence_coefficients<B: BathSpectrum>(
    bc: &BathCorrelation<B>,
    dtau: f64,
    n_steps: usize,
    memory_steps: usize,
) -> Result<InfluenceCoefficients> {
    if !(dtau > 0.0) || n_steps == 0 || memory_steps == 0 || memory_steps > n_steps {
        return Err(Error::InvalidInput(format!(
            "influence coefficients need dtau > 0 and 1 <= K <= N (dtau={dtau}, N={n_steps}, K={memory_steps})"
        )));
    }
    let beta = bc.source.beta();
    let tol = bc.quadrature * dtau * dtau;
    let mut kernel = Vec::with_capacity(memory_steps + 1);
    let same_cell = |w: f64| {
        let x = w * dtau;
        let s = sinc(0.5 * x);
        C64::new(
            omega_coth(w, beta) * 0.5 * dtau * dtau * s * s,
            -dtau * x * x * x_minus_sin_over_x3(x),
        )
    };
    kernel.push(bc.source.integrate(&same_cell, tol)?);
    for d in 1..=memory_steps {
        let shift = d as f64 * dtau;
        let cell = |w: f64| {
            let s = sinc(0.5 * w * dtau);
            let weight = dtau * dtau * s * s;
            C64::new(
                weight * omega_coth(w, beta) * (w * shift).cos(),
                -weight * w * (w * shift).sin(),
            )
        };
        kernel.push(bc.source.integrate(&cell, tol)?);
    }
    InfluenceCoefficients::from_kernel(kernel, dtau, n_steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Splitting ramp `ε(t)` with the rotating quantisation axis `θ(t)`.
    #[default]
    Erasure,
    /// `ε ≡ ε₀`, `θ ≡ −π`: the Hamiltonian never changes.
    Static,
}

/// Erasure drive `H_S(t) = (ε(t)/2)[cos θ σz + sin θ σx]`, optionally with the
/// counterdiabatic term `(π/(2t_f)) σy` and the ground-energy shift `(ε/2)·1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingProtocol {
    pub kind: ProtocolKind,
    pub eps0: f64,
    pub eps_max: f64,
    pub t_f: f64,
    pub sta: bool,
    pub ground_shift: bool,
}

pub const DEFAULT_EPS_MAX: f64 = 25.0;
pub const DEFAULT_EPS0: f64 = 0.02 * DEFAULT_EPS_MAX;

impl DrivingProtocol {
    /// Erasure protocol with the default splittings and the shift enabled.
    pub fn erasure(t_f: f64, sta: bool) -> Self {
        Self {
            kind: ProtocolKind::Erasure,
            eps0: DEFAULT_EPS0,
            eps_max: DEFAULT_EPS_MAX,
            t_f,
            sta,
            ground_shift: true,
        }
    }

    pub fn static_hamiltonian(t_f: f64) -> Self {
        Self {
            kind: ProtocolKind::Static,
            ..Self::erasure(t_f, false)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_f > 0.0) || !(self.eps0 >= 0.0) || !(self.eps_max >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid protocol {self:?}")));
        }
        Ok(())
    }

    pub fn epsilon(&self, t: f64) -> f64 {
        match self.kind {
            ProtocolKind::Static => self.eps0,
            ProtocolKind::Erasure => {
                let s = (PI * t / self.t_f).sin();
                self.eps0 + (self.eps_max - self.eps0) * s * s
            }
        }
    }

    pub fn theta(&self, t: f64) -> f64 {
        match self.kind {
            ProtocolKind::Static => -PI,
            ProtocolKind::Erasure => PI * (t / self.t_f - 1.0),
        }
    }

    /// Counterdiabatic amplitude `θ̇/2`.
    pub fn sta_coefficient(&self) -> f64 {
        match self.kind {
            ProtocolKind::Static => 0.0,
            ProtocolKind::Erasure => PI / (2.0 * self.t_f),
        }
    }

    /// `H_S(t)` for `0 ≤ t ≤ t_f`; the STA term is absent exactly at the two
    /// endpoints.
    pub fn hamiltonian(&self, t: f64) -> Result<Mat2> {
        if !(0.0..=self.t_f).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.t_f)));
        }
        let eps = self.epsilon(t);
        let theta = self.theta(t);
        let half = 0.5 * eps;
        let mut h = linalg::add2(
            &linalg::scale2(&linalg::sigma_z(), C64::new(half * theta.cos(), 0.0)),
            &linalg::scale2(&linalg::sigma_x(), C64::new(half * theta.sin(), 0.0)),
        );
        if self.ground_shift {
            h = linalg::add2(&h, &linalg::scale2(&linalg::identity2(), C64::new(half, 0.0)));
        }
        if self.sta && t > 0.0 && t < self.t_f {
            h = linalg::add2(
                &h,
                &linalg::scale2(&linalg::sigma_y(), C64::new(self.sta_coefficient(), 0.0)),
            );
        }
        Ok(h)
    }

    pub fn h_initial(&self) -> Mat2 {
        self.hamiltonian(0.0).expect("t = 0 is always in range")
    }

    pub fn h_final(&self) -> Mat2 {
        self.hamiltonian(self.t_f).expect("t = t_f is always in range")
    }
}

/// Free function form of [`DrivingProtocol::hamiltonian`].
pub fn system_hamiltonian(p: &DrivingProtocol, t: f64) -> Result<Mat2> {
    p.hamiltonian(t)
}
