//! Columnar text files and JSON manifests.
//!
//! A data file starts with `#` header lines: the file kind, the config
//! fingerprint, free `key: value` metadata and the column names. Values are
//! written with `{:.17e}` so they parse back bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub kind: String,
    pub fingerprint: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DataFile {
    pub fn new(kind: &str, fingerprint: &str, columns: &[&str]) -> Self {
        Self {
            kind: kind.into(),
            fingerprint: fingerprint.into(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# ptwork {}", self.kind);
        let _ = writeln!(s, "# fingerprint: {}", self.fingerprint);
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        let _ = writeln!(s, "# columns: {}", self.columns.join(" "));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("{origin}: {msg}"));
        let mut lines = text.lines();
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("# ptwork "))
            .ok_or_else(|| bad("not a ptwork data file".into()))?
            .to_string();
        let mut fingerprint = None;
        let mut meta = Vec::new();
        let mut columns = None;
        let mut rows = Vec::new();
        for line in lines {
            if let Some(h) = line.strip_prefix("# ") {
                let (k, v) = h.split_once(": ").ok_or_else(|| bad(format!("bad header line `{line}`")))?;
                match k {
                    "fingerprint" => fingerprint = Some(v.to_string()),
                    "columns" => columns = Some(v.split(' ').map(str::to_string).collect::<Vec<_>>()),
                    _ => meta.push((k.to_string(), v.to_string())),
                }
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| bad(format!("bad number `{x}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let columns = columns.ok_or_else(|| bad("missing column header".into()))?;
        if rows.iter().any(|r| r.len() != columns.len()) {
            return Err(bad("row length differs from the column header".into()));
        }
        Ok(Self {
            kind,
            fingerprint: fingerprint.ok_or_else(|| bad("missing fingerprint".into()))?,
            meta,
            columns,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, &path.display().to_string())
    }

    /// Refuses data produced under a different configuration.
    pub fn expect_fingerprint(&self, expected: &str, path: &Path) -> Result<()> {
        if self.fingerprint != expected {
            return Err(Error::Fingerprint {
                path: path.display().to_string(),
                expected: expected.into(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }
}

pub fn write_manifest(path: &Path, manifest: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_survive_render_and_parse() {
        let mut f = DataFile::new("wcf", "abc", &["chi", "re"]).meta("dtau", 0.05);
        f.push(vec![0.0, 1.0]);
        f.push(vec![0.1, std::f64::consts::PI / 7.0]);
        f.push(vec![0.2, f64::NAN]);
        let back = DataFile::parse(&f.render(), "mem").unwrap();
        assert_eq!(back.kind, "wcf");
        assert_eq!(back.get_meta("dtau"), Some("0.05"));
        assert_eq!(back.rows[1][1].to_bits(), (std::f64::consts::PI / 7.0).to_bits());
        assert!(back.rows[2][1].is_nan());
        assert!(back.expect_fingerprint("abd", Path::new("x")).is_err());
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(DataFile::parse("hello\n", "mem").is_err());
        assert!(DataFile::parse("# ptwork wcf\n# columns: a\n1\n", "mem").is_err());
        assert!(DataFile::parse("# ptwork wcf\n# fingerprint: x\n# columns: a b\n1\n", "mem").is_err());
    }
}
