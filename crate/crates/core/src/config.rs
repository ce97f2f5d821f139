//! System parameters and queue numbering.
//!
//! Station `s` (0-based) owns five local queues numbered `6s+1 ..= 6s+5`;
//! the shared core queue is number 6. For one station this gives
//! `Q1..Q6`, for two stations `Q1..Q11` with the core at `Q6`.
//!
//! Within a station the local queues are: processing at the primary edge
//! server (`+1`), uplink to the core (`+2`), transfer to the secondary edge
//! server (`+3`), processing there (`+4`) and its uplink to the core (`+5`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_prob, check_service, Error, Result};
use crate::subsystems::Buffer;

pub const CORE_QUEUE: QueueId = QueueId(6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueueId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Processing,
    Transmission,
}

impl QueueId {
    /// Queue `local` (1..=5) of station `station`.
    pub fn local(station: usize, local: u8) -> Self {
        debug_assert!((1..=5).contains(&local));
        QueueId(6 * station as u8 + local)
    }

    pub fn is_core(self) -> bool {
        self == CORE_QUEUE
    }

    /// `(station, local index 1..=5)`, or `None` for the core.
    pub fn station(self) -> Option<(usize, u8)> {
        if self.is_core() || self.0 == 0 {
            return None;
        }
        Some((((self.0 - 1) / 6) as usize, (self.0 - 1) % 6 + 1))
    }

    pub fn role(self) -> Role {
        match self.station() {
            None => Role::Processing,
            Some((_, 1 | 4)) => Role::Processing,
            Some(_) => Role::Transmission,
        }
    }

    /// Next hop of a task leaving this queue; `None` means it leaves the system.
    pub fn downstream(self) -> Option<QueueId> {
        let (station, local) = self.station()?;
        Some(match local {
            1 => QueueId::local(station, 2),
            3 => QueueId::local(station, 4),
            4 => QueueId::local(station, 5),
            _ => CORE_QUEUE,
        })
    }
}

impl fmt::Display for QueueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    OneBs,
    TwoBs,
}

/// One base station with its two edge servers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationParams {
    /// Probability that a task reaches the base station in a slot.
    pub p: f64,
    /// Probability of routing a task through the primary edge server.
    pub alpha: f64,
    /// Service probabilities of the five local queues.
    pub mu: [f64; 5],
    pub buffers: [usize; 5],
}

impl StationParams {
    pub fn validate(&self, station: usize) -> Result<()> {
        check_prob(&format!("p of station {}", station + 1), self.p)?;
        check_prob(&format!("alpha of station {}", station + 1), self.alpha)?;
        for k in 0..5 {
            let q = QueueId::local(station, k as u8 + 1);
            check_service(&format!("mu of {q}"), self.mu[k])?;
            if self.buffers[k] == 0 {
                return Err(Error::invalid(format!("buffer of {q} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreParams {
    /// Per-CPU service probability.
    pub mu: f64,
    pub buffer: Buffer,
    pub n_cpus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub stations: Vec<StationParams>,
    pub core: CoreParams,
}

impl SystemConfig {
    /// One-station system from per-queue vectors indexed `Q1..Q6`.
    pub fn one_bs(p: f64, alpha: f64, mu: [f64; 6], buffers: [usize; 6]) -> Self {
        SystemConfig {
            stations: vec![StationParams {
                p,
                alpha,
                mu: [mu[0], mu[1], mu[2], mu[3], mu[4]],
                buffers: [buffers[0], buffers[1], buffers[2], buffers[3], buffers[4]],
            }],
            core: CoreParams {
                mu: mu[5],
                buffer: Buffer::Finite(buffers[5]),
                n_cpus: 1,
            },
        }
    }

    /// Two-station system with a two-CPU core.
    pub fn two_bs(first: StationParams, second: StationParams, core_mu: f64, core_buffer: usize) -> Self {
        SystemConfig {
            stations: vec![first, second],
            core: CoreParams {
                mu: core_mu,
                buffer: Buffer::Finite(core_buffer),
                n_cpus: 2,
            },
        }
    }

    pub fn topology(&self) -> Topology {
        if self.stations.len() == 2 {
            Topology::TwoBs
        } else {
            Topology::OneBs
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.stations.len(), self.core.n_cpus) {
            (1, 1) => {}
            (2, 2) => {
                if self.core.buffer == Buffer::Infinite {
                    return Err(Error::invalid("an infinite core buffer is only supported with one station"));
                }
            }
            (1 | 2, n) => {
                return Err(Error::invalid(format!(
                    "{} station(s) need {} core CPU(s), got {n}",
                    self.stations.len(),
                    self.stations.len()
                )))
            }
            (k, _) => return Err(Error::invalid(format!("expected 1 or 2 stations, got {k}"))),
        }
        for (s, st) in self.stations.iter().enumerate() {
            st.validate(s)?;
        }
        check_service("core mu", self.core.mu)?;
        match self.core.buffer {
            Buffer::Finite(0) => return Err(Error::invalid("core buffer must be at least 1")),
            Buffer::Finite(m) if self.core.n_cpus == 2 && m < 4 => {
                return Err(Error::invalid("a two-CPU core needs a buffer of at least 4"))
            }
            _ => {}
        }
        Ok(())
    }

    /// All queues of the topology in ascending order.
    pub fn queues(&self) -> Vec<QueueId> {
        let mut out: Vec<QueueId> = (0..self.stations.len())
            .flat_map(|s| (1..=5).map(move |k| QueueId::local(s, k)))
            .chain(std::iter::once(CORE_QUEUE))
            .collect();
        out.sort();
        out
    }

    pub fn mu(&self, q: QueueId) -> f64 {
        match q.station() {
            None => self.core.mu,
            Some((s, k)) => self.stations[s].mu[k as usize - 1],
        }
    }

    pub fn buffer(&self, q: QueueId) -> Buffer {
        match q.station() {
            None => self.core.buffer,
            Some((s, k)) => Buffer::Finite(self.stations[s].buffers[k as usize - 1]),
        }
    }

    pub fn set_mu(&mut self, q: QueueId, mu: f64) -> Result<()> {
        match q.station() {
            None => self.core.mu = mu,
            Some((s, k)) => self.station_mut(s)?.mu[k as usize - 1] = mu,
        }
        Ok(())
    }

    pub fn set_buffer(&mut self, q: QueueId, m: usize) -> Result<()> {
        match q.station() {
            None => self.core.buffer = Buffer::Finite(m),
            Some((s, k)) => self.station_mut(s)?.buffers[k as usize - 1] = m,
        }
        Ok(())
    }

    pub fn station_mut(&mut self, s: usize) -> Result<&mut StationParams> {
        let n = self.stations.len();
        self.stations
            .get_mut(s)
            .ok_or_else(|| Error::invalid(format!("station {} does not exist ({n} configured)", s + 1)))
    }

    /// Swaps the parameters of the two stations.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.stations.reverse();
        out
    }
}
