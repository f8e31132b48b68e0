//! Generalized-time contour: equilibration, counting and drive segments laid
//! out on one step grid, with separate forward (ket) and backward (bra)
//! Hamiltonians at every step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Mat4};
use crate::model::DrivingProtocol;

/// Relative tolerance for a duration to count as an integer number of steps.
pub const STEP_TOLERANCE: f64 = 1e-9;

/// Converts a duration to a whole number of steps of size `dtau`.
pub fn steps_for(duration: f64, dtau: f64, what: &str) -> Result<usize> {
    if !(dtau > 0.0) || !(duration >= 0.0) {
        return Err(Error::InvalidInput(format!("{what}: need duration >= 0 and dtau > 0")));
    }
    let n = (duration / dtau).round();
    if (n * dtau - duration).abs() > STEP_TOLERANCE * duration.max(dtau) {
        return Err(Error::InvalidInput(format!(
            "{what} = {duration} is not an integer multiple of dtau = {dtau}"
        )));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralizedTimeGrid {
    pub dtau_bits: u64,
    /// Equilibration steps.
    pub s: usize,
    /// Counting steps.
    pub m: usize,
    /// Drive steps.
    pub f: usize,
}

impl GeneralizedTimeGrid {
    pub fn new(dtau: f64, s: usize, m: usize, f: usize) -> Result<Self> {
        if !(dtau > 0.0) || !dtau.is_finite() {
            return Err(Error::InvalidInput(format!("dtau must be positive, got {dtau}")));
        }
        if s == 0 || f == 0 {
            return Err(Error::InvalidInput("equilibration and drive segments need at least one step".into()));
        }
        Ok(Self { dtau_bits: dtau.to_bits(), s, m, f })
    }

    /// Grid from durations `t_e`, `chi`, `t_f`, each a whole number of steps.
    pub fn from_durations(dtau: f64, t_e: f64, chi: f64, t_f: f64) -> Result<Self> {
        Self::new(
            dtau,
            steps_for(t_e, dtau, "t_e")?,
            steps_for(chi, dtau, "chi")?,
            steps_for(t_f, dtau, "t_f")?,
        )
    }

    pub fn dtau(&self) -> f64 {
        f64::from_bits(self.dtau_bits)
    }

    pub fn n_steps(&self) -> usize {
        self.s + self.m + self.f
    }

    pub fn t_e(&self) -> f64 {
        self.s as f64 * self.dtau()
    }

    pub fn chi(&self) -> f64 {
        self.m as f64 * self.dtau()
    }

    pub fn t_f(&self) -> f64 {
        self.f as f64 * self.dtau()
    }

    pub fn with_counting_steps(&self, m: usize) -> Self {
        Self { m, ..*self }
    }
}

/// Forward and backward system Hamiltonians for one step `j ∈ 1..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchStep {
    pub index: usize,
    pub h_forward: Mat2,
    pub h_backward: Mat2,
}

/// Which way the counting segments are attached to the two branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountingSign {
    /// Counting on `H(0)` before the drive on the forward branch and on
    /// `H(t_f)` after the drive on the backward branch: yields `Φ(+χ)`.
    #[default]
    Positive,
    /// Branch roles exchanged: yields `Φ(−χ)`.
    Negative,
}

fn midpoint(p: &DrivingProtocol, grid: &GeneralizedTimeGrid, k: usize) -> Result<Mat2> {
    // k counts drive steps from 1
    p.hamiltonian((k as f64 - 0.5) * grid.dtau())
}

/// Drive-first branch: `[s: H0][f: drive][m: H_f]`.
fn drive_first(p: &DrivingProtocol, grid: &GeneralizedTimeGrid, j: usize) -> Result<Mat2> {
    if j <= grid.s {
        Ok(p.h_initial())
    } else if j <= grid.s + grid.f {
        midpoint(p, grid, j - grid.s)
    } else {
        Ok(p.h_final())
    }
}

/// Counting-first branch: `[s: H0][m: H0][f: drive]`.
fn count_first(p: &DrivingProtocol, grid: &GeneralizedTimeGrid, j: usize) -> Result<Mat2> {
    if j <= grid.s + grid.m {
        Ok(p.h_initial())
    } else {
        midpoint(p, grid, j - grid.s - grid.m)
    }
}

fn check_protocol(grid: &GeneralizedTimeGrid, p: &DrivingProtocol) -> Result<()> {
    p.validate()?;
    let t_f = grid.t_f();
    if (t_f - p.t_f).abs() > STEP_TOLERANCE * p.t_f.max(grid.dtau()) {
        return Err(Error::InvalidInput(format!(
            "protocol duration {} does not match f·dtau = {t_f}",
            p.t_f
        )));
    }
    Ok(())
}

/// Per-step forward/backward Hamiltonians for `Φ(+χ)` with `χ = mΔτ`.
pub fn assign_branches(grid: &GeneralizedTimeGrid, p: &DrivingProtocol) -> Result<Vec<BranchStep>> {
    assign_branches_signed(grid, p, CountingSign::Positive)
}

pub fn assign_branches_signed(
    grid: &GeneralizedTimeGrid,
    p: &DrivingProtocol,
    sign: CountingSign,
) -> Result<Vec<BranchStep>> {
    check_protocol(grid, p)?;
    (1..=grid.n_steps())
        .map(|j| {
            let (fw, bw) = (count_first(p, grid, j)?, drive_first(p, grid, j)?);
            let (h_forward, h_backward) = match sign {
                CountingSign::Positive => (fw, bw),
                CountingSign::Negative => (bw, fw),
            };
            Ok(BranchStep { index: j, h_forward, h_backward })
        })
        .collect()
}

/// `M = exp(−iΔτH_f) ⊗ (exp(+iΔτH_b))ᵀ`, the Liouville-space propagator of
/// one step under the row-major vectorisation.
pub fn step_propagator(step: &BranchStep, dtau: f64) -> Mat4 {
    let forward = linalg::expm_herm2(&step.h_forward, dtau);
    let backward = linalg::expm_herm2(&step.h_backward, -dtau);
    linalg::kron2(&forward, &linalg::transpose2(&backward))
}

pub fn propagators(steps: &[BranchStep], dtau: f64) -> Vec<Mat4> {
    steps.iter().map(|s| step_propagator(s, dtau)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{apply4, mat4_to_array, unvectorize, vectorize};
    use crate::model::ProtocolKind;
    use num_complex::Complex64 as C64;
    use proptest::prelude::*;

    fn labels(steps: &[BranchStep], p: &DrivingProtocol) -> (Vec<&'static str>, Vec<&'static str>) {
        let name = |h: &Mat2| {
            if *h == p.h_initial() {
                "H0"
            } else if *h == p.h_final() {
                "Hf"
            } else {
                "drive"
            }
        };
        (
            steps.iter().map(|s| name(&s.h_forward)).collect(),
            steps.iter().map(|s| name(&s.h_backward)).collect(),
        )
    }

    #[test]
    fn segment_bookkeeping() {
        let p = DrivingProtocol::erasure(0.3, true);
        let grid = GeneralizedTimeGrid::new(0.1, 2, 1, 3).unwrap();
        let steps = assign_branches(&grid, &p).unwrap();
        let (fw, bw) = labels(&steps, &p);
        assert_eq!(fw, ["H0", "H0", "H0", "drive", "drive", "drive"]);
        assert_eq!(bw, ["H0", "H0", "drive", "drive", "drive", "Hf"]);
        assert_eq!(steps[3].h_forward, steps[2].h_backward);
        assert_eq!(steps[3].h_forward, p.hamiltonian(0.05).unwrap());
    }

    #[test]
    fn zero_counting_aligns_branches() {
        let p = DrivingProtocol::erasure(0.5, false);
        let grid = GeneralizedTimeGrid::new(0.1, 3, 0, 5).unwrap();
        for s in assign_branches(&grid, &p).unwrap() {
            assert_eq!(s.h_forward, s.h_backward);
        }
    }

    #[test]
    fn static_protocol_is_uniform() {
        let p = DrivingProtocol::static_hamiltonian(0.4);
        assert_eq!(p.kind, ProtocolKind::Static);
        let grid = GeneralizedTimeGrid::new(0.1, 2, 3, 4).unwrap();
        for s in assign_branches(&grid, &p).unwrap() {
            assert_eq!(s.h_forward, p.h_initial());
            assert_eq!(s.h_backward, p.h_final());
        }
        assert_eq!(p.h_initial(), p.h_final());
    }

    #[test]
    fn mismatched_duration_rejected() {
        let p = DrivingProtocol::erasure(0.35, false);
        let grid = GeneralizedTimeGrid::new(0.1, 2, 0, 3).unwrap();
        assert!(assign_branches(&grid, &p).is_err());
        assert!(GeneralizedTimeGrid::from_durations(0.1, 0.25, 0.0, 0.3).is_err());
        let g = GeneralizedTimeGrid::from_durations(0.05, 2.0, 0.35, 4.5).unwrap();
        assert_eq!((g.s, g.m, g.f), (40, 7, 90));
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let z = linalg::zeros2();
        let m = step_propagator(&BranchStep { index: 1, h_forward: z, h_backward: z }, 0.1);
        assert_eq!(m, linalg::identity4());
    }

    #[test]
    fn propagator_against_liouvillian_eigendecomposition() {
        let p = DrivingProtocol::erasure(1.0, true);
        let step = BranchStep {
            index: 1,
            h_forward: p.h_initial(),
            h_backward: p.hamiltonian(0.3).unwrap(),
        };
        let dtau = 0.07;
        // L = −i H_f ⊗ 1 + i 1 ⊗ H_bᵀ is anti-Hermitian, so i·L is Hermitian
        let hf = linalg::mat2_to_array(&step.h_forward);
        let hb = linalg::mat2_to_array(&step.h_backward);
        let id = ndarray::Array2::<C64>::eye(2);
        let generator = &linalg::kron(&hf, &id) - &linalg::kron(&id, &hb.t().to_owned());
        let dense = linalg::expm_herm(&generator, dtau).unwrap();
        let closed = mat4_to_array(&step_propagator(&step, dtau));
        let err = (&dense - &closed).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err:e}");

        // counting step on diag(0, ε0): only the ket index picks up a phase
        let h0 = p.h_initial();
        let count = BranchStep { index: 1, h_forward: h0, h_backward: linalg::zeros2() };
        let m = step_propagator(&count, dtau);
        let rho = [[C64::new(0.5, 0.0), C64::new(0.1, 0.2)], [C64::new(0.1, -0.2), C64::new(0.5, 0.0)]];
        let out = unvectorize(&apply4(&m, &vectorize(&rho)));
        assert!((out[0][1] - rho[0][1]).norm() < 1e-15);
        let phase = C64::cis(-dtau * p.eps0);
        assert!((out[1][0] - rho[1][0] * phase).norm() < 1e-15);
    }

    #[test]
    fn negative_sign_exchanges_branches() {
        let p = DrivingProtocol::erasure(0.3, false);
        let grid = GeneralizedTimeGrid::new(0.1, 1, 2, 3).unwrap();
        let pos = assign_branches(&grid, &p).unwrap();
        let neg = assign_branches_signed(&grid, &p, CountingSign::Negative).unwrap();
        for (a, b) in pos.iter().zip(&neg) {
            assert_eq!(a.h_forward, b.h_backward);
            assert_eq!(a.h_backward, b.h_forward);
        }
    }

    proptest! {
        #[test]
        fn closed_evolution_preserves_trace(t_f in 0.2f64..5.0, sta: bool, f in 1usize..40) {
            let dtau = t_f / f as f64;
            let p = DrivingProtocol::erasure(t_f, sta);
            let grid = GeneralizedTimeGrid::new(dtau, 2, 0, f).unwrap();
            let mut v = vectorize(&[[C64::new(0.7, 0.0), C64::new(0.1, 0.3)], [C64::new(0.1, -0.3), C64::new(0.3, 0.0)]]);
            for m in propagators(&assign_branches(&grid, &p).unwrap(), dtau) {
                v = apply4(&m, &v);
            }
            prop_assert!((v[0] + v[3] - C64::new(1.0, 0.0)).norm() < 1e-12);
        }

        #[test]
        fn propagator_singular_values_are_one(t in 0.0f64..1.0, dtau in 0.001f64..0.5) {
            let p = DrivingProtocol::erasure(1.0, true);
            let step = BranchStep { index: 1, h_forward: p.h_initial(), h_backward: p.hamiltonian(t).unwrap() };
            let m = mat4_to_array(&step_propagator(&step, dtau));
            let mm = linalg::dagger(&m).dot(&m);
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((mm[[i, j]] - C64::new(want, 0.0)).norm() < 1e-13);
                }
            }
        }
    }
}
