//! Process-tensor results against exact diagonalisation of a single explicit
//! bath mode, where the Gaussian influence functional is exact and only the
//! Trotter splitting separates the two.

use ptwork::contour::{steps_for, GeneralizedTimeGrid};
use ptwork::counting::{maximally_mixed, sweep_with};
use ptwork::model::{influence_coefficients, BathCorrelation, DrivingProtocol};
use ptwork::oracle::{ed_wcf, path_sum_wcf, DiscreteBath};
use ptwork::pt::{build_process_tensor, CompressionConfig};

const T_E: f64 = 0.1;
const T_F: f64 = 0.2;
const CHI_MAX: f64 = 0.1;

fn mode() -> DiscreteBath {
    DiscreteBath::single_mode(25.0, 0.3, 8, 1.0)
}

fn gentle_erasure() -> DrivingProtocol {
    DrivingProtocol {
        eps_max: 2.0,
        ..DrivingProtocol::erasure(T_F, false)
    }
}

fn max_deviation_from_ed(dtau: f64) -> f64 {
    let db = mode();
    let p = gentle_erasure();
    let grid = GeneralizedTimeGrid::from_durations(dtau, T_E, 0.0, T_F).unwrap();
    let m_max = steps_for(CHI_MAX, dtau, "chi").unwrap();
    let k = grid.s + grid.f + m_max;
    let eta = influence_coefficients(&BathCorrelation::new(db.clone()), dtau, k, k).unwrap();
    let pt = build_process_tensor(&eta, &CompressionConfig::new(1e-9, None, k).unwrap(), k).unwrap();
    let phi = sweep_with(&pt, &p, &grid, m_max, &maximally_mixed()).unwrap();
    let chis: Vec<f64> = (0..=m_max).map(|m| m as f64 * dtau).collect();
    let ed = ed_wcf(&db, &p, T_E, &chis, dtau).unwrap();
    phi.iter().zip(&ed.phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

#[test]
fn single_mode_agrees_with_exact_diagonalisation() {
    let coarse = max_deviation_from_ed(0.1);
    let fine = max_deviation_from_ed(0.05);
    assert!(coarse < 5e-6, "coarse residual {coarse:e}");
    assert!(fine < 0.8 * coarse, "residual did not shrink: {coarse:e} -> {fine:e}");
}

#[test]
fn path_sum_over_the_mode_matches_the_tensor() {
    let dtau = 0.1;
    let db = mode();
    let p = gentle_erasure();
    let grid = GeneralizedTimeGrid::from_durations(dtau, T_E, CHI_MAX, T_F).unwrap();
    let n = grid.n_steps();
    let eta = influence_coefficients(&BathCorrelation::new(db), dtau, n, n).unwrap();
    let steps = ptwork::contour::assign_branches(&grid, &p).unwrap();
    let exact = path_sum_wcf(&eta, &steps, &maximally_mixed()).unwrap();
    let pt = build_process_tensor(&eta, &CompressionConfig::new(1e-12, None, n).unwrap(), n).unwrap();
    let phi = ptwork::pt::contract(&pt, &steps, &maximally_mixed(), false).unwrap().phi;
    assert!((phi - exact).norm() < 1e-10, "{phi} vs {exact}");
}
