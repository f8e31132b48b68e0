//! Brute-force references: exhaustive path sums, closed two-level work
//! statistics and exact diagonalisation of a small explicit bath.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::contour::{steps_for, step_propagator, BranchStep};
use crate::counting::{fingerprint, SampleMetadata, WcfSamples};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::model::{BathSpectrum, DrivingProtocol, InfluenceCoefficients};

/// Explicit bosonic modes `(ω_k, g_k)` coupled through σz, each truncated to
/// `fock_cutoff[k]` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBath {
    pub modes: Vec<(f64, f64)>,
    pub fock_cutoff: Vec<usize>,
    pub beta: f64,
}

/// Thermal occupation of the highest retained level above which a cutoff is
/// considered inadequate.
pub const CUTOFF_OCCUPATION_LIMIT: f64 = 1e-6;

impl DiscreteBath {
    pub fn single_mode(omega: f64, coupling: f64, fock_cutoff: usize, beta: f64) -> Self {
        Self {
            modes: vec![(omega, coupling)],
            fock_cutoff: vec![fock_cutoff],
            beta,
        }
    }

    /// Reorganisation energy `Σ g_k²/ω_k`.
    pub fn reorganization_energy(&self) -> f64 {
        self.modes.iter().map(|(w, g)| g * g / w).sum()
    }

    /// Thermal population of the top retained level of every mode.
    pub fn top_level_occupations(&self) -> Vec<f64> {
        self.modes
            .iter()
            .zip(&self.fock_cutoff)
            .map(|(&(w, _), &n)| {
                let x = (-self.beta * w).exp();
                (1.0 - x) * x.powi(n as i32 - 1)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.len() != self.fock_cutoff.len() || self.modes.is_empty() {
            return Err(Error::InvalidInput("one Fock cutoff per mode required".into()));
        }
        if self.modes.iter().any(|&(w, _)| !(w > 0.0)) || self.fock_cutoff.iter().any(|&n| n < 2) || !(self.beta > 0.0) {
            return Err(Error::InvalidInput("modes need positive frequencies and cutoffs >= 2".into()));
        }
        if let Some(p) = self.top_level_occupations().into_iter().find(|&p| p >= CUTOFF_OCCUPATION_LIMIT) {
            return Err(Error::Invariant(format!(
                "Fock cutoff inadequate: top level thermal occupation {p:e} >= {CUTOFF_OCCUPATION_LIMIT:e}"
            )));
        }
        Ok(())
    }
}

impl BathSpectrum for DiscreteBath {
    fn beta(&self) -> f64 {
        self.beta
    }

    fn integrate(&self, f: &dyn Fn(f64) -> C64, _abs_tol: f64) -> Result<C64> {
        Ok(self.modes.iter().map(|&(w, g)| f(w) * (g * g / w)).sum())
    }

    fn describe(&self) -> String {
        let modes: Vec<String> = self.modes.iter().map(|(w, g)| format!("({w:e},{g:e})")).collect();
        format!("discrete modes={} beta={:e}", modes.join(","), self.beta)
    }
}

/// Largest number of steps accepted by [`path_sum_wcf`].
pub const PATH_SUM_MAX_STEPS: usize = 10;

fn sigma_z_pair(alpha: usize) -> (f64, f64) {
    let z = |i: usize| if i == 0 { 1.0 } else { -1.0 };
    (z(alpha / 2), z(alpha % 2))
}

/// Sums every Liouville-space path of the discretised influence functional
/// explicitly (cost `4^N`).
pub fn path_sum_wcf(eta: &InfluenceCoefficients, steps: &[BranchStep], rho0: &Mat2) -> Result<C64> {
    let n = steps.len();
    if n > PATH_SUM_MAX_STEPS {
        return Err(Error::InvalidInput(format!(
            "path sum limited to {PATH_SUM_MAX_STEPS} steps, got {n}"
        )));
    }
    if n == 0 {
        return Ok(linalg::trace2(rho0));
    }
    let dtau = eta.dtau;
    let props: Vec<_> = steps.iter().map(|s| step_propagator(s, dtau)).collect();
    let k = eta.memory_steps;
    // pair weights, indexed [d][later][earlier]
    let weight: Vec<[[C64; 4]; 4]> = (0..=k.min(n))
        .map(|d| {
            let e = eta.eta(d);
            let mut w = [[C64::new(0.0, 0.0); 4]; 4];
            for (j, row) in w.iter_mut().enumerate() {
                for (i, v) in row.iter_mut().enumerate() {
                    let (jp, jm) = sigma_z_pair(j);
                    let (ip, im) = sigma_z_pair(i);
                    *v = (-(jp - jm) * (e * ip - e.conj() * im)).exp();
                }
            }
            w
        })
        .collect();
    let first = linalg::apply4(&props[0], &linalg::vectorize(rho0));
    let mut path = vec![0usize; n];
    let mut total = C64::new(0.0, 0.0);

    fn recurse(
        j: usize,
        amp: C64,
        path: &mut Vec<usize>,
        props: &[linalg::Mat4],
        weight: &[[[C64; 4]; 4]],
        k: usize,
        total: &mut C64,
    ) {
        let n = path.len();
        if j == n {
            let last = path[n - 1];
            if last == 0 || last == 3 {
                *total += amp;
            }
            return;
        }
        for a in 0..4 {
            let step = props[j][a][path[j - 1]];
            if step == C64::new(0.0, 0.0) {
                continue;
            }
            path[j] = a;
            let mut w = amp * step;
            for i in j.saturating_sub(k)..=j {
                w *= weight[j - i][a][path[i]];
            }
            recurse(j + 1, w, path, props, weight, k, total);
        }
    }

    for a in 0..4 {
        path[0] = a;
        let amp = first[a] * weight[0][a][a];
        recurse(1, amp, &mut path, &props, &weight, k, &mut total);
    }
    Ok(total)
}

/// Closed-system propagator over the drive, `∏ exp(−iΔτ H_S(t_k))` with
/// midpoint times `t_k = (k − ½)Δτ`.
pub fn drive_propagator(protocol: &DrivingProtocol, dtau: f64) -> Result<Mat2> {
    protocol.validate()?;
    let f = steps_for(protocol.t_f, dtau, "t_f")?;
    let mut u = linalg::identity2();
    for k in 1..=f {
        let h = protocol.hamiltonian((k as f64 - 0.5) * dtau)?;
        u = linalg::mul2(&linalg::expm_herm2(&h, dtau), &u);
    }
    Ok(u)
}

/// Outcomes below this probability are rounding noise and are dropped.
pub const NEGLIGIBLE_PROBABILITY: f64 = 1e-15;

/// Exact two-point-measurement work statistics of the isolated two-level
/// system started maximally mixed: `(W, P(W))` sorted by `W`, equal work
/// values merged.
pub fn closed_tpmp(protocol: &DrivingProtocol, dtau: f64) -> Result<Vec<(f64, f64)>> {
    let u = drive_propagator(protocol, dtau)?;
    let (e0, v0) = linalg::eigh2(&protocol.h_initial());
    let (ef, vf) = linalg::eigh2(&protocol.h_final());
    let mut outcomes: Vec<(f64, f64)> = Vec::with_capacity(4);
    for (n, vn) in v0.iter().enumerate() {
        let un = [u[0][0] * vn[0] + u[0][1] * vn[1], u[1][0] * vn[0] + u[1][1] * vn[1]];
        for (m, vm) in vf.iter().enumerate() {
            let amp = vm[0].conj() * un[0] + vm[1].conj() * un[1];
            let p = 0.5 * amp.norm_sqr();
            let w = ef[m] - e0[n];
            match outcomes.iter_mut().find(|(x, _)| (x - w).abs() <= 1e-12 * w.abs().max(1.0)) {
                Some(o) => o.1 += p,
                None => outcomes.push((w, p)),
            }
        }
    }
    outcomes.retain(|&(_, p)| p > NEGLIGIBLE_PROBABILITY);
    outcomes.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(outcomes)
}

/// Largest joint Hilbert-space dimension accepted by the dense oracle.
pub const ED_MAX_DIMENSION: usize = 4096;

/// Dense model of the two-level system coupled to a [`DiscreteBath`],
/// ordered system ⊗ mode 1 ⊗ mode 2 ⊗ ….
struct JointSpace {
    bath_dim: usize,
    h_bath: Array2<C64>,
    coupling: Array2<C64>,
}

impl JointSpace {
    fn new(db: &DiscreteBath) -> Result<Self> {
        db.validate()?;
        let bath_dim: usize = db.fock_cutoff.iter().product();
        if 2 * bath_dim > ED_MAX_DIMENSION {
            return Err(Error::InvalidInput(format!(
                "joint dimension {} exceeds {ED_MAX_DIMENSION}",
                2 * bath_dim
            )));
        }
        let mut h_bath = Array2::zeros((bath_dim, bath_dim));
        let mut x = Array2::zeros((bath_dim, bath_dim));
        for (i, (&(w, g), &n)) in db.modes.iter().zip(&db.fock_cutoff).enumerate() {
            let before: usize = db.fock_cutoff[..i].iter().product();
            let after: usize = db.fock_cutoff[i + 1..].iter().product();
            let embed = |op: Array2<C64>| {
                linalg::kron(&linalg::kron(&Array2::eye(before), &op), &Array2::eye(after))
            };
            let number = Array2::from_shape_fn((n, n), |(r, c)| C64::new(if r == c { r as f64 } else { 0.0 }, 0.0));
            let position = Array2::from_shape_fn((n, n), |(r, c)| {
                if r + 1 == c || c + 1 == r {
                    C64::new((r.max(c) as f64).sqrt(), 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            h_bath = h_bath + embed(number) * C64::new(w, 0.0);
            x = x + embed(position) * C64::new(g, 0.0);
        }
        let coupling = linalg::kron(&linalg::mat2_to_array(&linalg::sigma_z()), &x);
        Ok(Self { bath_dim, h_bath, coupling })
    }

    fn hamiltonian(&self, h_s: &Mat2) -> Array2<C64> {
        linalg::kron(&linalg::mat2_to_array(h_s), &Array2::eye(self.bath_dim))
            + &self.coupling
            + linalg::kron(&Array2::eye(2), &self.h_bath)
    }

    fn drive(&self, protocol: &DrivingProtocol, dtau: f64) -> Result<Array2<C64>> {
        let f = steps_for(protocol.t_f, dtau, "t_f")?;
        let mut u = Array2::eye(2 * self.bath_dim);
        for k in 1..=f {
            let h = self.hamiltonian(&protocol.hamiltonian((k as f64 - 0.5) * dtau)?);
            u = linalg::expm_herm(&h, dtau)?.dot(&u);
        }
        Ok(u)
    }
}

fn thermal(h: &Array2<C64>, beta: f64) -> Result<(Array2<C64>, f64)> {
    let (e, v) = linalg::eigh(h)?;
    let e_min = e[0];
    let weights = e.mapv(|x| (-beta * (x - e_min)).exp());
    let z = weights.sum();
    let scaled = &v * &weights.mapv(|w| C64::new(w / z, 0.0)).insert_axis(ndarray::Axis(0));
    Ok((scaled.dot(&linalg::dagger(&v)), z * (-beta * e_min).exp()))
}

/// Samples of `Φ(χ) = Tr[e^{iχH_f} U e^{−iχH₀} ρ̄₀ U†]` for the joint system,
/// starting from the maximally mixed system and the thermal bath, with
/// `ρ̄₀` the state after free evolution for `t_e` under `H₀`.
pub fn ed_wcf(db: &DiscreteBath, protocol: &DrivingProtocol, t_e: f64, chi_grid: &[f64], dtau: f64) -> Result<WcfSamples> {
    let space = JointSpace::new(db)?;
    let h0 = space.hamiltonian(&protocol.h_initial());
    let hf = space.hamiltonian(&protocol.h_final());
    let (rho_bath, _) = thermal(&space.h_bath, db.beta)?;
    let rho = linalg::kron(&linalg::mat2_to_array(&crate::counting::maximally_mixed()), &rho_bath);
    let free = linalg::expm_herm(&h0, t_e)?;
    let rho = free.dot(&rho).dot(&linalg::dagger(&free));
    let u = space.drive(protocol, dtau)?;
    let (e0, v0) = linalg::eigh(&h0)?;
    let (ef, vf) = linalg::eigh(&hf)?;
    // Φ(χ) = Σ_{mn} e^{iχ(E_f,m − E_0,n)} L[m,n] R[n,m]
    let left = linalg::dagger(&vf).dot(&u).dot(&v0);
    let right = linalg::dagger(&v0).dot(&rho).dot(&linalg::dagger(&u)).dot(&vf);
    let pairs = &left * &right.t();
    let phi = chi_grid
        .iter()
        .map(|&chi| {
            let out_phase: Array1<C64> = ef.mapv(|e| C64::from_polar(1.0, chi * e));
            let in_phase: Array1<C64> = e0.mapv(|e| C64::from_polar(1.0, -chi * e));
            out_phase.dot(&pairs.dot(&in_phase))
        })
        .collect();
    let metadata = SampleMetadata {
        grid: fingerprint(&format!("ed;dtau={dtau:e};t_e={t_e:e};chi={chi_grid:?}")),
        bath: fingerprint(&db.describe()),
        protocol: fingerprint(&format!("{protocol:?}")),
        compression: String::new(),
    };
    Ok(WcfSamples {
        dtau,
        chi_values: chi_grid.to_vec(),
        converged: vec![true; chi_grid.len()],
        phi,
        metadata,
    })
}

/// Jarzynski self-check from the joint Gibbs state of `H₀`: returns
/// `(⟨e^{−βW}⟩, Z_f/Z₀)`, the first summed over the exact two-point
/// measurement distribution, the second from the partition functions.
pub fn jarzynski_check(db: &DiscreteBath, protocol: &DrivingProtocol, dtau: f64) -> Result<(f64, f64)> {
    let space = JointSpace::new(db)?;
    let beta = db.beta;
    let h0 = space.hamiltonian(&protocol.h_initial());
    let hf = space.hamiltonian(&protocol.h_final());
    let u = space.drive(protocol, dtau)?;
    let (e0, v0) = linalg::eigh(&h0)?;
    let (ef, vf) = linalg::eigh(&hf)?;
    let z0: f64 = e0.iter().map(|e| (-beta * e).exp()).sum();
    let zf: f64 = ef.iter().map(|e| (-beta * e).exp()).sum();
    let amp = linalg::dagger(&vf).dot(&u).dot(&v0);
    let mut average = 0.0;
    for (n, en) in e0.iter().enumerate() {
        let p = (-beta * en).exp() / z0;
        for (m, em) in ef.iter().enumerate() {
            average += p * amp[[m, n]].norm_sqr() * (-beta * (em - en)).exp();
        }
    }
    Ok((average, zf / z0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{assign_branches, GeneralizedTimeGrid};
    use crate::counting::maximally_mixed;

    fn mode() -> DiscreteBath {
        DiscreteBath::single_mode(25.0, 10f64.sqrt(), 8, 1.0)
    }

    fn weight_at(outcomes: &[(f64, f64)], w: f64) -> f64 {
        outcomes.iter().filter(|(x, _)| (x - w).abs() < 1e-9).map(|(_, p)| p).sum()
    }

    #[test]
    fn static_drive_does_no_work() {
        let out = closed_tpmp(&DrivingProtocol::static_hamiltonian(2.0), 0.05).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].0.abs() < 1e-12 && (out[0].1 - 1.0).abs() < 1e-13, "{out:?}");
    }

    #[test]
    fn sudden_quench_follows_eigenbasis_overlap() {
        let p = DrivingProtocol::erasure(1e-6, false);
        let out = closed_tpmp(&p, 1e-6).unwrap();
        let eps0 = p.eps0;
        assert!((weight_at(&out, eps0) - 0.5).abs() < 1e-9);
        assert!((weight_at(&out, -eps0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn erasure_probabilities_sum_to_one_and_sta_suppresses_transitions() {
        let eps0 = DrivingProtocol::erasure(4.5, false).eps0;
        for sta in [false, true] {
            let out = closed_tpmp(&DrivingProtocol::erasure(4.5, sta), 0.01).unwrap();
            assert!((out.iter().map(|o| o.1).sum::<f64>() - 1.0).abs() < 1e-13);
            let off = weight_at(&out, eps0) + weight_at(&out, -eps0);
            if sta {
                assert!(off < 1e-4, "STA transitions {off}");
            } else {
                assert!(off > 1e-3, "plain drive transitions {off}");
            }
        }
    }

    #[test]
    fn path_sum_without_bath_is_plain_propagation() {
        let dtau = 0.1;
        let p = DrivingProtocol::erasure(0.5, false);
        let grid = GeneralizedTimeGrid::new(dtau, 1, 2, 5).unwrap();
        let steps = assign_branches(&grid, &p).unwrap();
        let rho = maximally_mixed();
        let mut v = linalg::vectorize(&rho);
        for s in &steps {
            v = linalg::apply4(&step_propagator(s, dtau), &v);
        }
        let eta = InfluenceCoefficients::zero(dtau, steps.len(), steps.len());
        let phi = path_sum_wcf(&eta, &steps, &rho).unwrap();
        assert!((phi - (v[0] + v[3])).norm() < 1e-13);
    }

    #[test]
    fn single_step_path_sum_by_hand() {
        let dtau = 0.3;
        let eta0 = C64::new(0.02, -0.05);
        let eta = InfluenceCoefficients::from_kernel(vec![eta0, C64::new(0.0, 0.0)], dtau, 1).unwrap();
        let h = [[C64::new(0.4, 0.0), C64::new(0.2, 0.1)], [C64::new(0.2, -0.1), C64::new(-0.3, 0.0)]];
        let step = BranchStep { index: 1, h_forward: h, h_backward: linalg::sigma_x() };
        let rho = [[C64::new(0.7, 0.0), C64::new(0.1, 0.2)], [C64::new(0.1, -0.2), C64::new(0.3, 0.0)]];
        let v = linalg::apply4(&step_propagator(&step, dtau), &linalg::vectorize(&rho));
        // only diagonal Liouville indices survive the trace, and there z⁺ = z⁻
        // so the same-step factor is exp(0) = 1
        let expect = v[0] + v[3];
        assert!((path_sum_wcf(&eta, &[step], &rho).unwrap() - expect).norm() < 1e-14);
    }

    #[test]
    fn decoupled_mode_reproduces_closed_statistics() {
        let p = DrivingProtocol::erasure(4.5, false);
        let db = DiscreteBath::single_mode(25.0, 0.0, 4, 1.0);
        let chis: Vec<f64> = (0..30).map(|k| 0.37 * k as f64).collect();
        let s = ed_wcf(&db, &p, 1.0, &chis, 0.05).unwrap();
        let outcomes = closed_tpmp(&p, 0.05).unwrap();
        for (chi, z) in chis.iter().zip(&s.phi) {
            let expect: C64 = outcomes.iter().map(|&(w, pr)| C64::new(0.0, chi * w).exp() * pr).sum();
            assert!((z - expect).norm() < 1e-11, "χ={chi}: {z} vs {expect}");
        }
    }

    #[test]
    fn ed_normalisation_and_bound() {
        let p = DrivingProtocol::erasure(2.0, true);
        let s = ed_wcf(&mode(), &p, 0.5, &[0.0, 0.5, 1.0, 5.0], 0.01).unwrap();
        assert!((s.phi[0] - 1.0).norm() < 1e-12);
        assert!(s.phi.iter().all(|z| z.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn jarzynski_equality_holds_for_the_joint_system() {
        for sta in [false, true] {
            let (lhs, rhs) = jarzynski_check(&mode(), &DrivingProtocol::erasure(2.0, sta), 0.01).unwrap();
            assert!((lhs - rhs).abs() < 1e-6 * rhs.max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn inadequate_cutoff_is_rejected() {
        let hot = DiscreteBath::single_mode(1.0, 0.5, 4, 0.1);
        assert!(matches!(ed_wcf(&hot, &DrivingProtocol::erasure(1.0, false), 0.0, &[0.0], 0.1), Err(Error::Invariant(_))));
        let huge = DiscreteBath { modes: vec![(25.0, 1.0); 3], fock_cutoff: vec![16; 3], beta: 1.0 };
        assert!(matches!(ed_wcf(&huge, &DrivingProtocol::erasure(1.0, false), 0.0, &[0.0], 0.1), Err(Error::InvalidInput(_))));
    }
}
