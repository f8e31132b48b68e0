use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use super::ProcessTensor;
use crate::contour::{step_propagator, BranchStep};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Mat4};

/// Result of one contraction.
#[derive(Debug, Clone)]
pub struct Contraction {
    pub phi: C64,
    /// Reduced operator after every step, if requested.
    pub trajectory: Option<Vec<Mat2>>,
}

/// Running contraction: a bond vector for each Liouville component of the
/// reduced operator.
#[derive(Debug, Clone)]
pub struct ContractionState<'a> {
    pt: &'a ProcessTensor,
    rows: Array2<C64>,
    steps: usize,
}

fn check_density(rho: &Mat2) -> Result<()> {
    let tr = linalg::trace2(rho);
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 || !linalg::is_hermitian2(rho, 1e-10) {
        return Err(Error::InvalidInput("initial state must be Hermitian with unit trace".into()));
    }
    let (vals, _) = linalg::eigh2(rho);
    if vals[0] < -1e-10 {
        return Err(Error::InvalidInput("initial state is not positive semidefinite".into()));
    }
    Ok(())
}

impl<'a> ContractionState<'a> {
    pub fn new(pt: &'a ProcessTensor, rho0: &Mat2) -> Result<Self> {
        check_density(rho0)?;
        let v = linalg::vectorize(rho0);
        let left = pt.left_closure();
        let mut rows = Array2::zeros((4, left.len()));
        for (alpha, mut row) in rows.outer_iter_mut().enumerate() {
            row.assign(&left.mapv(|z| z * v[alpha]));
        }
        Ok(Self { pt, rows, steps: 0 })
    }

    /// Applies the system propagator of one step followed by its process
    /// tensor site.
    pub fn advance(&mut self, m: &Mat4) -> Result<()> {
        if self.steps >= self.pt.n_steps {
            return Err(Error::Structure(format!(
                "process tensor covers {} steps, contraction needs more",
                self.pt.n_steps
            )));
        }
        let d = self.rows.ncols();
        let mut next = Array2::zeros((4, d));
        for alpha in 0..4 {
            let mut mixed = Array1::<C64>::zeros(d);
            for beta in 0..4 {
                if m[alpha][beta] != C64::new(0.0, 0.0) {
                    mixed.scaled_add(m[alpha][beta], &self.rows.row(beta));
                }
            }
            next.row_mut(alpha).assign(&mixed.dot(self.pt.site(alpha)));
        }
        self.rows = next;
        self.steps += 1;
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Reduced operator after the steps taken so far.
    pub fn reduced(&self) -> Mat2 {
        let closed = self.rows.dot(self.pt.right_closure());
        linalg::unvectorize(&[closed[0], closed[1], closed[2], closed[3]])
    }

    /// Trace of the reduced operator.
    pub fn phi(&self) -> C64 {
        linalg::trace2(&self.reduced())
    }
}

/// Contracts the process tensor with the branch steps starting from `rho0`.
pub fn contract(pt: &ProcessTensor, steps: &[BranchStep], rho0: &Mat2, keep_trajectory: bool) -> Result<Contraction> {
    if steps.len() > pt.n_steps {
        return Err(Error::Structure(format!(
            "{} steps given, process tensor covers {}",
            steps.len(),
            pt.n_steps
        )));
    }
    if steps.iter().enumerate().any(|(i, s)| s.index != i + 1) {
        return Err(Error::Structure("branch steps must be numbered consecutively from 1".into()));
    }
    let mut state = ContractionState::new(pt, rho0)?;
    let mut trajectory = keep_trajectory.then(|| Vec::with_capacity(steps.len()));
    for step in steps {
        state.advance(&step_propagator(step, pt.dtau))?;
        if let Some(t) = trajectory.as_mut() {
            t.push(state.reduced());
        }
    }
    Ok(Contraction { phi: state.phi(), trajectory })
}
