//! CSV formatting and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Significant digits printed for every floating-point field.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` with [`SIGNIFICANT_DIGITS`] significant digits, plain notation
/// for moderate magnitudes and exponent notation otherwise. Trailing zeros
/// are trimmed.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Tracks files written by a subcommand so the manifest can list them.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes `manifest.json`; must be the last file written.
    pub fn finish(self, manifest: RunManifest) -> Result<PathBuf, CliError> {
        let path = self.root.join("manifest.json");
        let manifest = RunManifest {
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
            ..manifest
        };
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: String,
    pub config_text: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub parameters: serde_json::Value,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formatting() {
        assert_eq!(fmt_f64(0.7934920000001), "0.793492");
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(21.0), "21");
        assert_eq!(fmt_f64(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_f64(1.5e-9), "1.5e-9");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_opt(None), "");
    }

    proptest! {
        #[test]
        fn twelve_digits_round_trip(x in -1e20f64..1e20) {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            let tol = x.abs() * 1e-11;
            prop_assert!((back - x).abs() <= tol, "{x} -> {s}");
            prop_assert_eq!(fmt_f64(back), s);
        }
    }
}
