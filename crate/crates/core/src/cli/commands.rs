use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};

use super::config::RunConfig;
use super::output::{write_manifest, DataFile};
use crate::analysis::{
    auto_envelope, coherence, dynamics_with, erasure_fidelity, wpd_from_wcf, wpd_moments, WorkDistribution,
    DEFAULT_ENVELOPE_RATE,
};
use crate::contour::GeneralizedTimeGrid;
use crate::counting::{
    maximally_mixed, moments_fd, stencil_half_width, sweep_with, variance_fd, SampleMetadata, WcfSamples,
    PHI_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::model::DrivingProtocol;
use crate::pt::{cached_process_tensor, ProcessTensor};

/// Files written by one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub data: Vec<PathBuf>,
    pub manifest: PathBuf,
}

struct Tensor {
    pt: ProcessTensor,
    cache_hit: bool,
}

impl Tensor {
    fn stats(&self) -> Value {
        let d = &self.pt.diagnostics;
        json!({
            "bond_dim": self.pt.bond_dim(),
            "memory_steps": self.pt.config.memory_steps,
            "layer_bonds": d.layer_bonds,
            "max_layer_bond": d.layer_bonds.iter().max(),
            "max_discarded": d.truncation.iter().cloned().fold(0.0, f64::max),
            "cache_hit": self.cache_hit,
        })
    }
}

fn tensor_for(cfg: &RunConfig, alpha: f64) -> Result<Tensor> {
    let bc = cfg.bath_correlation(alpha)?;
    if alpha == 0.0 {
        warn!("alpha = 0: the environment decouples and the process tensor is trivial");
    }
    let (pt, cache_hit) = cached_process_tensor(&bc, cfg.numerics.dtau, &cfg.compression()?, cfg.cache().as_ref())?;
    Ok(Tensor { pt, cache_hit })
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.run.out_dir)?;
    Ok(&cfg.run.out_dir)
}

fn finish(cfg: &RunConfig, command: &str, started: Instant, data: Vec<PathBuf>, extra: Value) -> Result<Outcome> {
    let manifest = cfg.run.out_dir.join(format!("{command}.manifest.json"));
    let names: Vec<String> = data
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let mut doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "fingerprint": cfg.fingerprint(),
        "config": cfg,
        "outputs": names,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut doc, extra) {
        m.extend(e);
    }
    write_manifest(&manifest, &doc)?;
    Ok(Outcome { data, manifest })
}

/// Counting-field sweep `m = 0..=m_max` on the configured grid.
fn sweep(cfg: &RunConfig, tensor: &Tensor, m_max: usize) -> Result<WcfSamples> {
    let protocol = cfg.protocol();
    let grid = cfg.base_grid()?;
    let phi = sweep_with(&tensor.pt, &protocol, &grid, m_max, &maximally_mixed())?;
    let bc = cfg.bath_correlation(cfg.bath.alpha)?;
    let metadata = SampleMetadata::describe(&bc, &protocol, &grid, m_max, &cfg.compression()?);
    let samples = WcfSamples::new(cfg.numerics.dtau, phi, metadata);
    samples.check(PHI_TOLERANCE)?;
    Ok(samples)
}

fn sample_quality(samples: &WcfSamples) -> Value {
    json!({
        "phi0_error": (samples.phi[0] - C64::new(1.0, 0.0)).norm(),
        "max_abs_phi": samples.phi.iter().map(|z| z.norm()).fold(0.0, f64::max),
        "abs_phi_at_chi_max": samples.phi.last().map(|z| z.norm()),
        "phi_tolerance": PHI_TOLERANCE,
    })
}

fn wcf_file(cfg: &RunConfig, samples: &WcfSamples) -> DataFile {
    let m = &samples.metadata;
    let mut f = DataFile::new("wcf", &cfg.fingerprint(), &["chi", "re_phi", "im_phi", "converged"])
        .meta("dtau", format!("{:.17e}", samples.dtau))
        .meta("grid", &m.grid)
        .meta("bath", &m.bath)
        .meta("protocol", &m.protocol)
        .meta("compression", &m.compression);
    for ((chi, z), ok) in samples.chi_values.iter().zip(&samples.phi).zip(&samples.converged) {
        f.push(vec![*chi, z.re, z.im, if *ok { 1.0 } else { 0.0 }]);
    }
    f
}

/// Reads characteristic-function samples written by [`cmd_wcf`] under the
/// same configuration.
pub fn read_wcf(cfg: &RunConfig, path: &Path) -> Result<WcfSamples> {
    let f = DataFile::read(path)?;
    f.expect_fingerprint(&cfg.fingerprint(), path)?;
    if f.kind != "wcf" {
        return Err(Error::Config(format!("{}: expected a wcf file, found {}", path.display(), f.kind)));
    }
    let col = |name: &str| {
        f.column(name)
            .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let (re, im) = (col("re_phi")?, col("im_phi")?);
    let meta = |k: &str| f.get_meta(k).unwrap_or_default().to_string();
    let dtau: f64 = meta("dtau")
        .parse()
        .map_err(|_| Error::Config(format!("{}: bad dtau header", path.display())))?;
    let metadata = SampleMetadata {
        grid: meta("grid"),
        bath: meta("bath"),
        protocol: meta("protocol"),
        compression: meta("compression"),
    };
    let phi = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
    Ok(WcfSamples::new(dtau, phi, metadata))
}

pub fn cmd_build_pt(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    out_dir(cfg)?;
    if cfg.run.cache_dir.is_none() {
        warn!("no cache directory configured; the tensor is built but not stored");
    }
    let tensor = tensor_for(cfg, cfg.bath.alpha)?;
    let grid = cfg.base_grid()?;
    let n_max = grid.s + cfg.m_max()? + grid.f;
    if tensor.cache_hit {
        info!("cache hit");
    }
    info!("bond dimension profile: {:?}", tensor.pt.diagnostics.layer_bonds);
    finish(
        cfg,
        "build-pt",
        started,
        Vec::new(),
        json!({ "process_tensor": tensor.stats(), "n_max": n_max }),
    )
}

pub fn cmd_wcf(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let dir = out_dir(cfg)?;
    let tensor = tensor_for(cfg, cfg.bath.alpha)?;
    let samples = sweep(cfg, &tensor, cfg.m_max()?)?;
    let path = dir.join("wcf.dat");
    wcf_file(cfg, &samples).write(&path)?;
    let extra = json!({ "process_tensor": tensor.stats(), "samples": sample_quality(&samples) });
    finish(cfg, "wcf", started, vec![path], extra)
}

fn reconstruct(cfg: &RunConfig, samples: &WcfSamples) -> Result<WorkDistribution> {
    let rate = cfg
        .numerics
        .envelope_rate
        .unwrap_or_else(|| auto_envelope(samples, DEFAULT_ENVELOPE_RATE));
    wpd_from_wcf(samples, rate, cfg.numerics.bin_width)
}

/// Work distribution from fresh samples, or from a `wcf` file of the same
/// configuration.
pub fn cmd_wpd(cfg: &RunConfig, from: Option<&Path>) -> Result<Outcome> {
    let started = Instant::now();
    let dir = out_dir(cfg)?;
    let (samples, tensor) = match from {
        Some(p) => (read_wcf(cfg, p)?, None),
        None => {
            let t = tensor_for(cfg, cfg.bath.alpha)?;
            (sweep(cfg, &t, cfg.m_max()?)?, Some(t))
        }
    };
    let wpd = reconstruct(cfg, &samples)?;
    let mut f = DataFile::new("wpd", &cfg.fingerprint(), &["w", "p", "p_raw"])
        .meta("bin_width", format!("{:.17e}", wpd.bin_width))
        .meta("envelope_rate", format!("{:.17e}", wpd.envelope_rate))
        .meta("provenance", &wpd.provenance);
    for ((w, p), r) in wpd.centers.iter().zip(&wpd.prob).zip(&wpd.raw) {
        f.push(vec![*w, *p, *r]);
    }
    let path = dir.join("wpd.dat");
    f.write(&path)?;
    let extra = json!({
        "process_tensor": tensor.as_ref().map(Tensor::stats),
        "samples": sample_quality(&samples),
        "distribution": {
            "bin_width": wpd.bin_width,
            "envelope_rate": wpd.envelope_rate,
            "total_mass": wpd.total_mass(),
            "clipped_mass": wpd.clipped_mass,
            "max_imag": wpd.max_imag,
        },
    });
    finish(cfg, "wpd", started, vec![path], extra)
}

/// Mean and variance by finite differences, with the change from the next
/// lower stencil as an error estimate.
fn fd_moments(samples: &WcfSamples, stencil: usize) -> Result<[f64; 4]> {
    let mean = moments_fd(samples, 1, stencil)?;
    let var = variance_fd(samples, stencil)?;
    let (mean_err, var_err) = if stencil > 2 {
        (
            (mean - moments_fd(samples, 1, stencil - 2)?).abs(),
            (var - variance_fd(samples, stencil - 2)?).abs(),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok([mean, var, mean_err, var_err])
}

fn moment_samples_needed(stencil: usize) -> usize {
    stencil_half_width(1, stencil).max(stencil_half_width(2, stencil))
}

/// Finite-difference moments; with `from`, also the moments of the
/// reconstructed distribution.
pub fn cmd_moments(cfg: &RunConfig, from: Option<&Path>) -> Result<Outcome> {
    let started = Instant::now();
    let dir = out_dir(cfg)?;
    let stencil = cfg.numerics.fd_order;
    let (samples, tensor) = match from {
        Some(p) => (read_wcf(cfg, p)?, None),
        None => {
            let t = tensor_for(cfg, cfg.bath.alpha)?;
            (sweep(cfg, &t, moment_samples_needed(stencil))?, Some(t))
        }
    };
    let [mean, var, mean_err, var_err] = fd_moments(&samples, stencil)?;
    let (mean_wpd, var_wpd) = match from {
        Some(_) => {
            let wpd = reconstruct(cfg, &samples)?;
            wpd_moments(&wpd)
        }
        None => (f64::NAN, f64::NAN),
    };
    let mut f = DataFile::new(
        "moments",
        &cfg.fingerprint(),
        &["mean_fd", "var_fd", "mean_fd_err", "var_fd_err", "mean_wpd", "var_wpd"],
    )
    .meta("stencil", stencil);
    f.push(vec![mean, var, mean_err, var_err, mean_wpd, var_wpd]);
    let path = dir.join("moments.dat");
    f.write(&path)?;
    let extra = json!({
        "process_tensor": tensor.as_ref().map(Tensor::stats),
        "samples": sample_quality(&samples),
        "tolerances": { "mean_fd": mean_err, "var_fd": var_err },
    });
    finish(cfg, "moments", started, vec![path], extra)
}

/// Final fidelity and coherence of one protocol.
fn end_state(pt: &ProcessTensor, protocol: &DrivingProtocol, grid: &GeneralizedTimeGrid) -> Result<(Vec<[C64; 4]>, f64, f64)> {
    let states = dynamics_with(pt, protocol, grid)?;
    let last = states.last().ok_or_else(|| Error::Structure("empty trajectory".into()))?;
    let fid = erasure_fidelity(last, protocol)?;
    let coh = coherence(last);
    let flat = states.iter().map(|r| [r[0][0], r[1][1], r[0][1], r[1][0]]).collect();
    Ok((flat, fid, coh))
}

pub fn cmd_dynamics(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let dir = out_dir(cfg)?;
    let tensor = tensor_for(cfg, cfg.bath.alpha)?;
    let grid = cfg.base_grid()?;
    let (states, fidelity, coh) = end_state(&tensor.pt, &cfg.protocol(), &grid)?;
    let mut f = DataFile::new("dynamics", &cfg.fingerprint(), &["t", "rho_00", "rho_11", "re_rho_01", "im_rho_01"])
        .meta("fidelity", format!("{fidelity:.17e}"))
        .meta("coherence", format!("{coh:.17e}"));
    for (j, r) in states.iter().enumerate() {
        f.push(vec![(j + 1) as f64 * grid.dtau(), r[0].re, r[1].re, r[2].re, r[2].im]);
    }
    let path = dir.join("dynamics.dat");
    f.write(&path)?;
    let extra = json!({
        "process_tensor": tensor.stats(),
        "fidelity": fidelity,
        "coherence": coh,
    });
    finish(cfg, "dynamics", started, vec![path], extra)
}

/// One row per `(t_f, α, sta)` point: fidelity, coherence, mean and
/// variance of the work.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let dir = out_dir(cfg)?;
    if cfg.sweep.points.is_empty() {
        return Err(Error::Config("sweep.points is empty".into()));
    }
    let stencil = cfg.numerics.fd_order;
    let mut tensors: BTreeMap<u64, Tensor> = BTreeMap::new();
    let mut f = DataFile::new(
        "sweep",
        &cfg.fingerprint(),
        &["t_f", "alpha", "sta", "fidelity", "coherence", "mean", "variance"],
    )
    .meta("stencil", stencil);
    let mut stats = Vec::new();
    for p in &cfg.sweep.points {
        let mut point = cfg.clone();
        point.bath.alpha = p.alpha;
        point.protocol.t_f = p.t_f;
        point.protocol.sta = p.sta;
        point.validate()?;
        if let Entry::Vacant(e) = tensors.entry(p.alpha.to_bits()) {
            let t = tensor_for(&point, p.alpha)?;
            stats.push(json!({ "alpha": p.alpha, "process_tensor": t.stats() }));
            e.insert(t);
        }
        let tensor = &tensors[&p.alpha.to_bits()];
        let (_, fidelity, coh) = end_state(&tensor.pt, &point.protocol(), &point.base_grid()?)?;
        let samples = sweep(&point, tensor, moment_samples_needed(stencil))?;
        let [mean, var, ..] = fd_moments(&samples, stencil)?;
        info!("t_f = {}, alpha = {}, sta = {}: fidelity {fidelity:.6}", p.t_f, p.alpha, p.sta);
        f.push(vec![p.t_f, p.alpha, if p.sta { 1.0 } else { 0.0 }, fidelity, coh, mean, var]);
    }
    let path = dir.join("sweep.dat");
    f.write(&path)?;
    finish(cfg, "sweep", started, vec![path], json!({ "tensors": stats }))
}
