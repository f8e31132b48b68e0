//! Layer-by-layer construction of the uniform process tensor.
//!
//! The influence functional is a product of pair factors `b_d(α_j, α_{j−d})`
//! for `0 ≤ d ≤ K`. Starting from the layer `d = K` (a product state), each
//! lower layer is absorbed by carrying the previous site's path variable
//! through the bond, which multiplies the bond dimension by the alphabet size.
//! The enlarged translation-invariant tensor is then brought to its left and
//! right canonical gauges by iterated QR/LQ factorisations and truncated by an
//! SVD of the bond matrix.

use log::{debug, warn};
use ndarray::{s, Array1, Array2, Axis};
use num_complex::Complex64 as C64;

use super::{influence_factor, BuildDiagnostics, CompressionConfig, ProcessTensor, NULL_SYMBOL, N_SYMBOLS};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::InfluenceCoefficients;

const GAUGE_TOL: f64 = 1e-11;
const GAUGE_MAX_ITER: usize = 20_000;
const CLOSURE_TOL: f64 = 1e-14;

type Pair = [[C64; N_SYMBOLS]; N_SYMBOLS];

/// Tensor of one layer: `tensors[a * N_SYMBOLS + e]` is the bond matrix for
/// current symbol `a` and carried symbol `e`.
struct Layer {
    tensors: Vec<Array2<C64>>,
    bond: usize,
}

impl Layer {
    fn get(&self, a: usize, e: usize) -> &Array2<C64> {
        &self.tensors[a * N_SYMBOLS + e]
    }
}

struct Truncated {
    layer: Layer,
    kept: Array1<f64>,
    iterations: usize,
    truncation: f64,
}

fn pair_table(eta: C64) -> Pair {
    let mut b = [[C64::new(0.0, 0.0); N_SYMBOLS]; N_SYMBOLS];
    for (a, row) in b.iter_mut().enumerate() {
        for (y, v) in row.iter_mut().enumerate() {
            *v = influence_factor(eta, a, y);
        }
    }
    b
}

fn same_step_table(eta: C64) -> Pair {
    let mut b = [[C64::new(0.0, 0.0); N_SYMBOLS]; N_SYMBOLS];
    for (a, row) in b.iter_mut().enumerate() {
        row[a] = influence_factor(eta, a, a);
    }
    b
}

fn frob(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn block_diag_from(blocks: &[Array2<C64>]) -> Array2<C64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Array2::zeros((n, n));
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.slice_mut(s![off..off + k, off..off + k]).assign(b);
        off += k;
    }
    out
}

/// `𝒜_a`: the matrices `A[a, x]` stacked vertically over the carried symbol.
fn stacked(layer: &Layer, a: usize) -> Array2<C64> {
    let d = layer.bond;
    let mut out = Array2::zeros((N_SYMBOLS * d, d));
    for x in 0..N_SYMBOLS {
        out.slice_mut(s![x * d..(x + 1) * d, ..]).assign(layer.get(a, x));
    }
    out
}

/// Left gauge of the shifted tensor: block-diagonal `L` with
/// `L A'[a, y] = A_L[a, y] L` and `Σ A_L† A_L = 1`, up to normalisation.
fn left_gauge(layer: &Layer, pairs: &Pair, start: Vec<Array2<C64>>) -> Result<(Vec<Array2<C64>>, usize, bool)> {
    let d = layer.bond;
    let mut blocks = start;
    for it in 1..=GAUGE_MAX_ITER {
        let la: Vec<Array2<C64>> = (0..N_SYMBOLS)
            .map(|a| {
                let mut out = Array2::zeros((N_SYMBOLS * d, d));
                for x in 0..N_SYMBOLS {
                    out.slice_mut(s![x * d..(x + 1) * d, ..]).assign(&blocks[x].dot(layer.get(a, x)));
                }
                out
            })
            .collect();
        let mut next = Vec::with_capacity(N_SYMBOLS);
        for y in 0..N_SYMBOLS {
            let active: Vec<usize> = (0..N_SYMBOLS).filter(|&a| pairs[a][y] != C64::new(0.0, 0.0)).collect();
            let mut stack = Array2::zeros((active.len() * N_SYMBOLS * d, d));
            for (i, &a) in active.iter().enumerate() {
                let rows = N_SYMBOLS * d;
                stack
                    .slice_mut(s![i * rows..(i + 1) * rows, ..])
                    .assign(&la[a].mapv(|z| z * pairs[a][y]));
            }
            next.push(linalg::qr(&stack)?.1);
        }
        let norm = next.iter().map(|b| frob(b).powi(2)).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical("left gauge collapsed".into()));
        }
        next.iter_mut().for_each(|b| b.mapv_inplace(|z| z / norm));
        let change = next
            .iter()
            .zip(&blocks)
            .map(|(n, o)| frob(&(n - o)).powi(2))
            .sum::<f64>()
            .sqrt();
        blocks = next;
        if change < GAUGE_TOL {
            return Ok((blocks, it, true));
        }
    }
    Ok((blocks, GAUGE_MAX_ITER, false))
}

/// Right gauge of the shifted tensor: `R` with `A'[a, y] R = R A_R[a, y]` and
/// `Σ A_R A_R† = 1`, up to normalisation.
fn right_gauge(layer: &Layer, pairs: &Pair, start: Array2<C64>) -> Result<(Array2<C64>, usize, bool)> {
    let d = layer.bond;
    let big = N_SYMBOLS * d;
    let stacks: Vec<Array2<C64>> = (0..N_SYMBOLS).map(|a| stacked(layer, a)).collect();
    let mut r = start;
    for it in 1..=GAUGE_MAX_ITER {
        let mut g = Array2::zeros((big, N_SYMBOLS * d));
        for a in 0..N_SYMBOLS {
            let active: Vec<usize> = (0..N_SYMBOLS).filter(|&y| pairs[a][y] != C64::new(0.0, 0.0)).collect();
            let mut z = Array2::zeros((d, active.len() * big));
            for (i, &y) in active.iter().enumerate() {
                z.slice_mut(s![.., i * big..(i + 1) * big])
                    .assign(&r.slice(s![y * d..(y + 1) * d, ..]).mapv(|v| v * pairs[a][y]));
            }
            let ell = if z.ncols() >= d {
                linalg::lq(&z)?.0
            } else {
                // fewer columns than rows: pad with zeros so the factor is square
                let mut padded = Array2::zeros((d, d));
                padded.slice_mut(s![.., ..z.ncols()]).assign(&z);
                linalg::lq(&padded)?.0
            };
            g.slice_mut(s![.., a * d..(a + 1) * d]).assign(&stacks[a].dot(&ell));
        }
        let mut next = linalg::lq(&g)?.0;
        let norm = frob(&next);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical("right gauge collapsed".into()));
        }
        next.mapv_inplace(|z| z / norm);
        let change = frob(&(&next - &r));
        r = next;
        if change < GAUGE_TOL {
            return Ok((r, it, true));
        }
    }
    Ok((r, GAUGE_MAX_ITER, false))
}

/// Absorbs one memory layer with pair table `pairs` and truncates the bond.
fn absorb(layer: &Layer, pairs: &Pair, warm: Option<&Array1<f64>>, cfg: &CompressionConfig, step: usize) -> Result<Truncated> {
    let d = layer.bond;
    let big = N_SYMBOLS * d;
    let seed = match warm {
        Some(s) if s.len() == d => Array2::from_diag(&s.mapv(|x| C64::new(x.sqrt(), 0.0))),
        _ => Array2::eye(d),
    };
    let (l_blocks, it_l, ok_l) = left_gauge(layer, pairs, vec![seed.clone(); N_SYMBOLS])?;
    let (r, it_r, ok_r) = right_gauge(layer, pairs, block_diag_from(&vec![seed; N_SYMBOLS]))?;
    if !(ok_l && ok_r) {
        warn!("gauge iteration did not settle at memory layer {step}; truncation may be suboptimal");
    }

    // bond matrix C = L R and its singular values
    let mut c = Array2::zeros((big, big));
    for y in 0..N_SYMBOLS {
        c.slice_mut(s![y * d..(y + 1) * d, ..])
            .assign(&l_blocks[y].dot(&r.slice(s![y * d..(y + 1) * d, ..])));
    }
    let (u, sv, vt) = linalg::svd(&c)?;
    let top = sv[0];
    if !(top > 0.0) {
        return Err(Error::Numerical(format!("vanishing bond matrix at memory layer {step}")));
    }
    let keep = sv.iter().take_while(|&&x| x > cfg.svd_threshold * top).count().max(1);
    if let Some(cap) = cfg.max_bond {
        if keep > cap {
            return Err(Error::BondCap { step, requested: keep, cap });
        }
    }
    let truncation = if keep < sv.len() { sv[keep] / top } else { 0.0 };
    let kept = sv.slice(s![..keep]).to_owned();
    let inv_sqrt = kept.mapv(|x| C64::new(1.0 / x.sqrt(), 0.0));

    // projectors P_L = R V S^{-1/2} (right bond) and P_R = S^{-1/2} U† L (left bond)
    let v = linalg::dagger(&vt.slice(s![..keep, ..]).to_owned());
    let p_l = r.dot(&v) * inv_sqrt.view().insert_axis(Axis(0));
    let u_k = linalg::dagger(&u.slice(s![.., ..keep]).to_owned()) * inv_sqrt.view().insert_axis(Axis(1));

    let mut tensors = Vec::with_capacity(N_SYMBOLS * N_SYMBOLS);
    for a in 0..N_SYMBOLS {
        let mut ca = Array2::<C64>::zeros((keep, d));
        for x in 0..N_SYMBOLS {
            let px = u_k.slice(s![.., x * d..(x + 1) * d]).dot(&l_blocks[x]);
            ca = ca + px.dot(layer.get(a, x));
        }
        for y in 0..N_SYMBOLS {
            let b = pairs[a][y];
            if b == C64::new(0.0, 0.0) {
                tensors.push(Array2::zeros((keep, keep)));
            } else {
                tensors.push(ca.dot(&p_l.slice(s![y * d..(y + 1) * d, ..])).mapv(|z| z * b));
            }
        }
    }

    // keep entries of order one
    let scale = tensors.iter().map(|t| frob(t).powi(2)).sum::<f64>().sqrt() / (keep as f64).sqrt();
    if scale > 0.0 && scale.is_finite() {
        tensors.iter_mut().for_each(|t| t.mapv_inplace(|z| z / scale));
    }

    debug!("memory layer {step}: bond {d} -> {keep}, gauge iterations {it_l}/{it_r}");
    Ok(Truncated {
        layer: Layer { tensors, bond: keep },
        kept,
        iterations: it_l.max(it_r),
        truncation,
    })
}

/// Dominant right eigenvector of `q` and its eigenvalue by power iteration.
fn dominant(q: &Array2<C64>) -> Result<(C64, Array1<C64>)> {
    let n = q.nrows();
    let mut v = Array1::from_elem(n, C64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mut lambda = C64::new(0.0, 0.0);
    for _ in 0..100_000 {
        let w = q.dot(&v);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical("closure vector collapsed".into()));
        }
        // fix the phase on the largest component so successive iterates compare
        let pivot = w.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        let phase = pivot / pivot.norm();
        let next = w.mapv(|z| z / (norm * phase));
        lambda = v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum::<C64>();
        let change = next.iter().zip(v.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        v = next;
        if change < CLOSURE_TOL {
            return Ok((lambda, v));
        }
    }
    warn!("closure power iteration did not converge");
    Ok((lambda, v))
}

/// Builds the process tensor for influence coefficients `eta` with memory
/// `cfg.memory_steps`; the result covers `n_steps` sites but is valid for
/// any length.
pub fn build_process_tensor(eta: &InfluenceCoefficients, cfg: &CompressionConfig, n_steps: usize) -> Result<ProcessTensor> {
    cfg.validate()?;
    let k = cfg.memory_steps;
    if eta.kernel().len() < k + 1 {
        return Err(Error::Structure(format!(
            "influence kernel covers {} separations, memory needs {}",
            eta.kernel().len() - 1,
            k
        )));
    }
    if eta.kernel()[..=k].iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(ProcessTensor::trivial(*cfg, eta.dtau, n_steps));
    }

    // d = K: product of single-site factors
    let top = pair_table(eta.eta(k));
    let mut layer = Layer {
        tensors: top.iter().flatten().map(|&b| Array2::from_elem((1, 1), b)).collect(),
        bond: 1,
    };
    let mut warm: Option<Array1<f64>> = None;
    let mut diagnostics = BuildDiagnostics::default();
    for d in (0..k).rev() {
        let pairs = if d == 0 { same_step_table(eta.eta(0)) } else { pair_table(eta.eta(d)) };
        let next = absorb(&layer, &pairs, warm.as_ref(), cfg, d)?;
        diagnostics.layer_bonds.push(next.layer.bond);
        diagnostics.iterations.push(next.iterations);
        diagnostics.truncation.push(next.truncation);
        warm = Some(next.kept);
        layer = next.layer;
    }

    let mut sites: Vec<Array2<C64>> = (0..N_SYMBOLS).map(|a| layer.get(a, a).clone()).collect();
    let (lambda, right) = dominant(&sites[NULL_SYMBOL])?;
    let (lambda_left, left) = dominant(&sites[NULL_SYMBOL].t().to_owned())?;
    if (lambda - lambda_left).norm() > 1e-8 * lambda.norm() {
        warn!("left and right closure eigenvalues differ: {lambda} vs {lambda_left}");
    }
    if !(lambda.norm() > 0.0) {
        return Err(Error::Numerical("inert-symbol transfer matrix has vanishing spectral radius".into()));
    }
    sites.iter_mut().for_each(|q| q.mapv_inplace(|z| z / lambda));
    let overlap = left.dot(&right);
    if overlap.norm() < 1e-300 {
        return Err(Error::Numerical("closure vectors are orthogonal".into()));
    }
    let left = left.mapv(|z| z / overlap);

    let mut pt = ProcessTensor::from_parts(sites, left, right, *cfg, eta.dtau, n_steps)?;
    pt.diagnostics = diagnostics;
    Ok(pt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{influence_coefficients, BathCorrelation, SpectralDensity};
    use crate::pt::branch_values;

    fn paper_eta(dtau: f64, k: usize) -> InfluenceCoefficients {
        let sd = SpectralDensity::new(0.16, 10.0, 25.0, None, 1.0).unwrap();
        influence_coefficients(&BathCorrelation::new(sd), dtau, k, k).unwrap()
    }

    /// Influence functional of one explicit path, straight from the pair factors.
    fn direct_weight(eta: &InfluenceCoefficients, k: usize, path: &[usize]) -> C64 {
        let mut w = C64::new(1.0, 0.0);
        for j in 0..path.len() {
            for i in j.saturating_sub(k)..=j {
                w *= influence_factor(eta.eta(j - i), path[j], path[i]);
            }
        }
        w
    }

    #[test]
    fn reproduces_pair_products_on_explicit_paths() {
        let k = 4;
        let eta = paper_eta(0.2, k);
        let cfg = CompressionConfig::new(1e-12, None, k).unwrap();
        let pt = build_process_tensor(&eta, &cfg, 8).unwrap();
        let mut seed = 7u64;
        for _ in 0..50 {
            let path: Vec<usize> = (0..7)
                .map(|_| {
                    seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((seed >> 33) % 4) as usize
                })
                .collect();
            let want = direct_weight(&eta, k, &path);
            let got = pt.path_weight(&path);
            assert!((got - want).norm() < 1e-8 * want.norm().max(1.0), "{path:?}: {got} vs {want}");
        }
        assert!((pt.path_weight(&[]) - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zero_coupling_is_trivial() {
        let eta = InfluenceCoefficients::zero(0.1, 10, 5);
        let pt = build_process_tensor(&eta, &CompressionConfig::new(1e-10, None, 5).unwrap(), 10).unwrap();
        assert_eq!(pt.bond_dims(), vec![1; 11]);
        for a in 0..N_SYMBOLS {
            assert_eq!(pt.site(a)[[0, 0]], C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn bond_cap_is_reported() {
        let eta = paper_eta(0.2, 4);
        let err = build_process_tensor(&eta, &CompressionConfig::new(1e-12, Some(2), 4).unwrap(), 4).unwrap_err();
        assert!(matches!(err, Error::BondCap { cap: 2, .. }), "{err}");
    }

    #[test]
    fn inert_symbol_has_no_branch_values() {
        assert_eq!(branch_values(NULL_SYMBOL), (0.0, 0.0));
        assert_eq!(influence_factor(C64::new(0.3, -0.2), NULL_SYMBOL, 1), C64::new(1.0, 0.0));
    }
}
