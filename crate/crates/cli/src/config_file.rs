//! TOML system configuration.
//!
//! ```toml
//! topology = "one_bs"
//! p = 0.8
//! alpha = 0.5
//!
//! [mu]
//! 1 = 0.5
//! # ... one entry per queue
//!
//! [m]
//! 1 = 10
//! # ...
//! ```
//!
//! A two-station file uses `p1`, `p2`, `alpha1`, `alpha2` and queues `1..=11`.
//! Setting `core_infinite = true` (one station only) removes `m.6`.

use std::collections::BTreeMap;
use std::path::Path;

use chainq::config::{CoreParams, QueueId, StationParams, SystemConfig, CORE_QUEUE};
use chainq::subsystems::Buffer;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyName {
    OneBs,
    TwoBs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub topology: TopologyName,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub mu: BTreeMap<String, f64>,
    pub m: BTreeMap<String, usize>,
    #[serde(default)]
    pub core_infinite: bool,
    pub n_cpus: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn required(name: &str, v: Option<f64>) -> Result<f64, CliError> {
    v.ok_or_else(|| config_err(format!("missing key `{name}`")))
}

fn forbid(topology: &str, keys: &[(&str, bool)]) -> Result<(), CliError> {
    for (name, present) in keys {
        if *present {
            return Err(config_err(format!("key `{name}` is not used by topology {topology}")));
        }
    }
    Ok(())
}

/// Reads a table keyed by queue number, rejecting missing and unknown keys.
fn per_queue<T: Copy>(table: &BTreeMap<String, T>, section: &str, expected: &[u8]) -> Result<BTreeMap<u8, T>, CliError> {
    let mut out = BTreeMap::new();
    for (key, &v) in table {
        let q: u8 = key
            .parse()
            .ok()
            .filter(|q| expected.contains(q))
            .ok_or_else(|| config_err(format!("unknown key `{section}.{key}`; expected queue numbers {expected:?}")))?;
        out.insert(q, v);
    }
    if let Some(missing) = expected.iter().find(|q| !out.contains_key(q)) {
        return Err(config_err(format!("missing key `{section}.{missing}`")));
    }
    Ok(out)
}

fn station(s: usize, p: f64, alpha: f64, mu: &BTreeMap<u8, f64>, m: &BTreeMap<u8, usize>) -> StationParams {
    let q = |k: u8| QueueId::local(s, k).0;
    StationParams {
        p,
        alpha,
        mu: std::array::from_fn(|k| mu[&q(k as u8 + 1)]),
        buffers: std::array::from_fn(|k| m[&q(k as u8 + 1)]),
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(String, Self), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok((text, cfg))
    }

    pub fn to_system(&self) -> Result<SystemConfig, CliError> {
        let system = match self.topology {
            TopologyName::OneBs => {
                forbid(
                    "one_bs",
                    &[
                        ("p1", self.p1.is_some()),
                        ("p2", self.p2.is_some()),
                        ("alpha1", self.alpha1.is_some()),
                        ("alpha2", self.alpha2.is_some()),
                    ],
                )?;
                let mu = per_queue(&self.mu, "mu", &[1, 2, 3, 4, 5, 6])?;
                let m_keys: &[u8] = if self.core_infinite { &[1, 2, 3, 4, 5] } else { &[1, 2, 3, 4, 5, 6] };
                let m = per_queue(&self.m, "m", m_keys)?;
                SystemConfig {
                    stations: vec![station(0, required("p", self.p)?, required("alpha", self.alpha)?, &mu, &m)],
                    core: CoreParams {
                        mu: mu[&CORE_QUEUE.0],
                        buffer: if self.core_infinite {
                            Buffer::Infinite
                        } else {
                            Buffer::Finite(m[&CORE_QUEUE.0])
                        },
                        n_cpus: self.n_cpus.unwrap_or(1),
                    },
                }
            }
            TopologyName::TwoBs => {
                forbid("two_bs", &[("p", self.p.is_some()), ("alpha", self.alpha.is_some())])?;
                if self.core_infinite {
                    return Err(config_err("core_infinite is only supported with topology one_bs"));
                }
                let all: Vec<u8> = (1..=11).collect();
                let mu = per_queue(&self.mu, "mu", &all)?;
                let m = per_queue(&self.m, "m", &all)?;
                SystemConfig {
                    stations: vec![
                        station(0, required("p1", self.p1)?, required("alpha1", self.alpha1)?, &mu, &m),
                        station(1, required("p2", self.p2)?, required("alpha2", self.alpha2)?, &mu, &m),
                    ],
                    core: CoreParams {
                        mu: mu[&CORE_QUEUE.0],
                        buffer: Buffer::Finite(m[&CORE_QUEUE.0]),
                        n_cpus: self.n_cpus.unwrap_or(2),
                    },
                }
            }
        };
        system.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(system)
    }
}

pub fn load_system(path: &Path) -> Result<(String, SystemConfig), CliError> {
    let (text, file) = ConfigFile::load(path)?;
    let system = file
        .to_system()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok((text, system))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"
topology = "one_bs"
p = 0.8
alpha = 0.5
[mu]
1 = 0.5
2 = 0.5
3 = 0.5
4 = 0.5
5 = 0.5
6 = 1.0
[m]
1 = 10
2 = 10
3 = 10
4 = 10
5 = 10
6 = 100
"#;

    #[test]
    fn parses_one_station() {
        let sys = ConfigFile::parse(ONE).unwrap().to_system().unwrap();
        assert_eq!(sys, SystemConfig::one_bs(0.8, 0.5, [0.5, 0.5, 0.5, 0.5, 0.5, 1.0], [10, 10, 10, 10, 10, 100]));
    }

    #[test]
    fn unknown_keys_rejected() {
        let typo = ONE.replace("alpha = 0.5", "alpah = 0.5");
        let err = ConfigFile::parse(&typo).unwrap_err().to_string();
        assert!(err.contains("alpah"), "{err}");
        let extra = ONE.replace("6 = 1.0", "6 = 1.0\n7 = 0.5");
        assert!(ConfigFile::parse(&extra).unwrap().to_system().is_err());
        let missing = ONE.replace("3 = 0.5\n", "");
        assert!(ConfigFile::parse(&missing).unwrap().to_system().is_err());
    }

    #[test]
    fn parse_errors_carry_line() {
        let bad = ONE.replace("p = 0.8", "p = ");
        let err = ConfigFile::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3") || err.contains("3 |"), "{err}");
    }

    #[test]
    fn infinite_core() {
        let inf = ONE
            .replace("6 = 100\n", "")
            .replace("alpha = 0.5", "alpha = 0.5\ncore_infinite = true");
        let sys = ConfigFile::parse(&inf).unwrap().to_system().unwrap();
        assert_eq!(sys.core.buffer, Buffer::Infinite);
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = ONE.replace("p = 0.8", "p = 1.5");
        assert!(ConfigFile::parse(&bad).unwrap().to_system().is_err());
    }
}
