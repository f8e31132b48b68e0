use std::sync::OnceLock;

use proptest::prelude::*;
use ptwork::contour::{CountingSign, GeneralizedTimeGrid};
use ptwork::counting::{maximally_mixed, moments_fd, phi_direct, sweep_with, variance_fd, WcfSamples};
use ptwork::model::{BathCorrelation, DrivingProtocol, SpectralDensity};
use ptwork::oracle::closed_tpmp;
use ptwork::pt::{process_tensor_for, CompressionConfig, ProcessTensor};
use ptwork::C64;

const DTAU: f64 = 0.1;

fn weak_bath_tensor() -> &'static ProcessTensor {
    static PT: OnceLock<ProcessTensor> = OnceLock::new();
    PT.get_or_init(|| {
        let sd = SpectralDensity::new(0.05, 10.0, 25.0, None, 1.0).unwrap();
        let cfg = CompressionConfig::new(1e-8, None, 8).unwrap();
        process_tensor_for(&BathCorrelation::new(sd), DTAU, &cfg, None).unwrap()
    })
}

fn protocol(f: usize, sta: bool, eps_max: f64) -> DrivingProtocol {
    DrivingProtocol {
        eps_max,
        ..DrivingProtocol::erasure(f as f64 * DTAU, sta)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn characteristic_function_is_normalised_bounded_and_hermitian(
        f in 2usize..30, sta: bool, eps_max in 1.0f64..25.0, m in 1usize..15,
    ) {
        let pt = weak_bath_tensor();
        let p = protocol(f, sta, eps_max);
        let base = GeneralizedTimeGrid::new(DTAU, 5, 0, f).unwrap();
        let phi = sweep_with(pt, &p, &base, m, &maximally_mixed()).unwrap();
        prop_assert!((phi[0] - C64::new(1.0, 0.0)).norm() < 1e-6);
        prop_assert!(phi.iter().all(|z| z.norm() <= 1.0 + 1e-6));
        let grid = base.with_counting_steps(m);
        let neg = phi_direct(&pt.with_steps(grid.n_steps()), &p, &grid, CountingSign::Negative, &maximally_mixed()).unwrap();
        prop_assert!((neg - phi[m].conj()).norm() < 1e-6, "{} vs {}", neg, phi[m]);
    }

    #[test]
    fn decoupled_sweep_is_the_closed_transition_sum(f in 2usize..40, sta: bool, m in 1usize..40) {
        let p = protocol(f, sta, 25.0);
        let base = GeneralizedTimeGrid::new(DTAU, 3, 0, f).unwrap();
        let pt = ProcessTensor::trivial(CompressionConfig::new(1e-10, None, 1).unwrap(), DTAU, 0);
        let phi = sweep_with(&pt, &p, &base, m, &maximally_mixed()).unwrap();
        let outcomes = closed_tpmp(&p, DTAU).unwrap();
        for (k, z) in phi.iter().enumerate() {
            let chi = k as f64 * DTAU;
            let want: C64 = outcomes.iter().map(|&(w, q)| C64::from_polar(q, chi * w)).sum();
            prop_assert!((z - want).norm() < 1e-11);
        }
    }

    #[test]
    fn moments_do_not_depend_on_samples_beyond_the_stencil(f in 2usize..30, sta: bool) {
        let pt = weak_bath_tensor();
        let p = protocol(f, sta, 25.0);
        let base = GeneralizedTimeGrid::new(DTAU, 5, 0, f).unwrap();
        let short = WcfSamples::new(DTAU, sweep_with(pt, &p, &base, 6, &maximally_mixed()).unwrap(), Default::default());
        let long = WcfSamples::new(DTAU, sweep_with(pt, &p, &base, 12, &maximally_mixed()).unwrap(), Default::default());
        prop_assert_eq!(moments_fd(&short, 1, 10).unwrap(), moments_fd(&long, 1, 10).unwrap());
        prop_assert_eq!(variance_fd(&short, 10).unwrap(), variance_fd(&long, 10).unwrap());
    }
}
