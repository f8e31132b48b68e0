//! Run configuration: a TOML document with `bath`, `protocol`, `numerics`,
//! `run` and optional `sweep` tables. Missing keys take the values of the
//! paper-scale run; `--set table.key=value` overrides any key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::{steps_for, GeneralizedTimeGrid};
use crate::counting::{fingerprint, DEFAULT_STENCIL};
use crate::error::{Error, Result};
use crate::model::{
    BathCorrelation, DrivingProtocol, Normalization, ProtocolKind, SpectralDensity, DEFAULT_EPS0, DEFAULT_EPS_MAX,
    DEFAULT_QUAD_TOL,
};
use crate::pt::{CompressionConfig, PtCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathBlock {
    pub alpha: f64,
    pub gamma: f64,
    pub omega: f64,
    pub beta: f64,
    /// Upper integration limit; ten times `omega` when absent.
    pub omega_cut: Option<f64>,
    pub normalization: Normalization,
    pub quadrature_tol: f64,
}

impl Default for BathBlock {
    fn default() -> Self {
        Self {
            alpha: 0.16,
            gamma: 10.0,
            omega: 25.0,
            beta: 1.0,
            omega_cut: None,
            normalization: Normalization::Plain,
            quadrature_tol: DEFAULT_QUAD_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolBlock {
    pub kind: ProtocolKind,
    pub eps0: f64,
    pub eps_max: f64,
    pub t_f: f64,
    pub sta: bool,
    pub shift: bool,
}

impl Default for ProtocolBlock {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Erasure,
            eps0: DEFAULT_EPS0,
            eps_max: DEFAULT_EPS_MAX,
            t_f: 4.5,
            sta: false,
            shift: true,
        }
    }
}

pub const DEFAULT_CHI_MAX: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    pub dtau: f64,
    pub t_e: f64,
    pub t_mem: f64,
    pub svd_threshold: f64,
    pub max_bond: Option<usize>,
    /// Give either `chi_max` or `m_max`; both must agree when both are set.
    /// [`DEFAULT_CHI_MAX`] applies when neither is.
    pub chi_max: Option<f64>,
    pub m_max: Option<usize>,
    /// Damping rate of the reconstruction envelope; chosen from the decay of
    /// the samples when absent.
    pub envelope_rate: Option<f64>,
    pub bin_width: f64,
    pub fd_order: usize,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            dtau: 0.01,
            t_e: 5.0,
            t_mem: 5.0,
            svd_threshold: 1e-10,
            max_bond: None,
            chi_max: None,
            m_max: None,
            envelope_rate: None,
            bin_width: 0.002,
            fd_order: DEFAULT_STENCIL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            workers: None,
        }
    }
}

/// One protocol of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub t_f: f64,
    pub alpha: f64,
    pub sta: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bath: BathBlock,
    pub protocol: ProtocolBlock,
    pub numerics: NumericsBlock,
    pub run: RunBlock,
    pub sweep: SweepBlock,
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.spectral_density()?;
        self.protocol().validate()?;
        self.compression()?;
        self.base_grid()?;
        self.m_max()?;
        let n = &self.numerics;
        if !(n.bin_width > 0.0) {
            return Err(Error::Config(format!("bin_width must be positive, got {}", n.bin_width)));
        }
        if let Some(r) = n.envelope_rate {
            if !(r >= 0.0) {
                return Err(Error::Config(format!("envelope_rate must be non-negative, got {r}")));
            }
        }
        if n.fd_order == 0 || !n.fd_order.is_multiple_of(2) {
            return Err(Error::Config(format!("fd_order must be a positive even number, got {}", n.fd_order)));
        }
        if self.run.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn spectral_density(&self) -> Result<SpectralDensity> {
        self.spectral_density_with(self.bath.alpha)
    }

    pub fn spectral_density_with(&self, alpha: f64) -> Result<SpectralDensity> {
        let b = &self.bath;
        Ok(SpectralDensity::new(alpha, b.gamma, b.omega, b.omega_cut, b.beta)?.with_normalization(b.normalization))
    }

    pub fn bath_correlation(&self, alpha: f64) -> Result<BathCorrelation<SpectralDensity>> {
        Ok(BathCorrelation::with_tolerance(self.spectral_density_with(alpha)?, self.bath.quadrature_tol))
    }

    pub fn protocol(&self) -> DrivingProtocol {
        let p = &self.protocol;
        DrivingProtocol {
            kind: p.kind,
            eps0: p.eps0,
            eps_max: p.eps_max,
            t_f: p.t_f,
            sta: p.sta,
            ground_shift: p.shift,
        }
    }

    pub fn compression(&self) -> Result<CompressionConfig> {
        let n = &self.numerics;
        CompressionConfig::new(n.svd_threshold, n.max_bond, steps_for(n.t_mem, n.dtau, "t_mem")?)
    }

    /// Grid without counting steps.
    pub fn base_grid(&self) -> Result<GeneralizedTimeGrid> {
        let n = &self.numerics;
        GeneralizedTimeGrid::from_durations(n.dtau, n.t_e, 0.0, self.protocol.t_f)
    }

    pub fn m_max(&self) -> Result<usize> {
        let n = &self.numerics;
        match (n.chi_max, n.m_max) {
            (None, None) => steps_for(DEFAULT_CHI_MAX, n.dtau, "chi_max"),
            (Some(c), None) => steps_for(c, n.dtau, "chi_max"),
            (None, Some(m)) => Ok(m),
            (Some(c), Some(m)) => {
                let from_chi = steps_for(c, n.dtau, "chi_max")?;
                if from_chi != m {
                    return Err(Error::Config(format!(
                        "chi_max = {c} is {from_chi} steps but m_max = {m}; give only one"
                    )));
                }
                Ok(m)
            }
        }
    }

    pub fn cache(&self) -> Option<PtCache> {
        self.run.cache_dir.as_ref().map(PtCache::new)
    }

    /// SHA-256 of the physics and numerics blocks. Output locations, worker
    /// count and sweep list do not enter.
    pub fn fingerprint(&self) -> String {
        let physics = serde_json::json!({
            "bath": self.bath,
            "protocol": self.protocol,
            "numerics": self.numerics,
        });
        fingerprint(&physics.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
[bath]
alpha = 0.16

[protocol]
t_f = 4.5
sta = true

[numerics]
dtau = 0.05
t_e = 2.0
t_mem = 2.0
svd_threshold = 1e-8
chi_max = 20.0
"#;

    #[test]
    fn parses_with_defaults_and_step_counts() {
        let cfg = RunConfig::from_toml(DESK, &[]).unwrap();
        assert_eq!(cfg.bath.gamma, 10.0);
        assert_eq!(cfg.m_max().unwrap(), 400);
        let g = cfg.base_grid().unwrap();
        assert_eq!((g.s, g.m, g.f), (40, 0, 90));
        assert_eq!(g.t_e(), 2.0);
        assert_eq!(cfg.compression().unwrap().memory_steps, 40);
        assert!(cfg.protocol().sta);
    }

    #[test]
    fn overrides_replace_keys() {
        let cfg = RunConfig::from_toml(
            DESK,
            &["bath.alpha=0.05".into(), "protocol.sta=false".into(), "run.out_dir=elsewhere".into()],
        )
        .unwrap();
        assert_eq!(cfg.bath.alpha, 0.05);
        assert!(!cfg.protocol.sta);
        assert_eq!(cfg.run.out_dir, PathBuf::from("elsewhere"));
        assert!(RunConfig::from_toml(DESK, &["bath.alpah=1".into()]).is_err());
        assert!(RunConfig::from_toml(DESK, &["noequals".into()]).is_err());
    }

    #[test]
    fn rejects_inconsistent_numerics() {
        assert!(RunConfig::from_toml(DESK, &["numerics.m_max=10".into()]).is_err());
        assert!(RunConfig::from_toml(DESK, &["numerics.t_e=2.01".into()]).is_err());
        assert!(RunConfig::from_toml(DESK, &["numerics.fd_order=7".into()]).is_err());
        assert!(RunConfig::from_toml(DESK, &["bath.gamma=-1".into()]).is_err());
    }

    #[test]
    fn fingerprint_tracks_physics_only() {
        let a = RunConfig::from_toml(DESK, &[]).unwrap();
        let b = RunConfig::from_toml(DESK, &["run.workers=3".into()]).unwrap();
        let c = RunConfig::from_toml(DESK, &["numerics.svd_threshold=1e-9".into()]).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
