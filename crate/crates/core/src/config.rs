//! Experiment description and its TOML document form.
//!
//! ```toml
//! preset = "beskow"          # optional: pal | seapearl | beskow
//! seed = 7
//! clock_hz = 2300000000
//!
//! [topology]
//! ranks = 256
//! cores_per_socket = 16
//! sockets_per_node = 2
//!
//! [network]                  # all optional, cycles
//! latency_intra_socket = 500
//!
//! [noise]
//! jitter_sigma = 0.02
//! [[noise.speed_groups]]
//! first = 64
//! last = 73
//! factor = 10.0
//!
//! [app]
//! cycles = 1000
//! boundary = "non-periodic"
//! ```
//!
//! A preset overrides `cores_per_socket`, `sockets_per_node` and `clock_hz`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::app::AppConfig;
use crate::network::{NetworkParams, Topology};
use crate::noise::NoiseConfig;
use crate::trace::fingerprint;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Pal,
    Seapearl,
    Beskow,
}

impl Preset {
    /// `(cores_per_socket, sockets_per_node, clock_hz)`
    pub fn machine(self) -> (u32, u32, u64) {
        match self {
            Preset::Pal => (16, 2, 2_100_000_000),
            Preset::Seapearl => (10, 2, 2_800_000_000),
            Preset::Beskow => (16, 2, 2_300_000_000),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pal" => Ok(Preset::Pal),
            "seapearl" => Ok(Preset::Seapearl),
            "beskow" => Ok(Preset::Beskow),
            other => Err(format!("unknown preset {other:?} (expected pal, seapearl or beskow)")),
        }
    }
}

fn default_clock_hz() -> u64 {
    2_100_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub seed: u64,
    #[serde(default = "default_clock_hz")]
    pub clock_hz: u64,
    pub topology: Topology,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub app: AppConfig,
}

impl SimConfig {
    /// A balanced, noiseless configuration on a single socket.
    pub fn new(ranks: u32, cycles: u64, seed: u64) -> Self {
        Self {
            preset: None,
            seed,
            clock_hz: default_clock_hz(),
            topology: Topology::new(ranks, ranks.max(1), 1),
            network: NetworkParams::default(),
            noise: NoiseConfig::default(),
            app: AppConfig {
                cycles,
                ..AppConfig::default()
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_toml(&text).map_err(|message| LoadError::Parse { path: display, message })
    }

    /// Applies the preset (if any) to topology and clock rate.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let Some(p) = self.preset {
            let (cps, spn, hz) = p.machine();
            out.topology.cores_per_socket = cps;
            out.topology.sockets_per_node = spn;
            out.clock_hz = hz;
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self.resolved().to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = self.resolved();
        let t = &c.topology;
        if t.ranks < 2 {
            return Err(ConfigError::new("topology.ranks", "need at least 2 ranks"));
        }
        if t.cores_per_socket == 0 {
            return Err(ConfigError::new("topology.cores_per_socket", "must be positive"));
        }
        if t.sockets_per_node == 0 {
            return Err(ConfigError::new("topology.sockets_per_node", "must be positive"));
        }
        if c.clock_hz == 0 {
            return Err(ConfigError::new("clock_hz", "must be positive"));
        }

        let n = &c.network;
        for (field, v) in [
            ("network.latency_intra_socket", n.latency_intra_socket),
            ("network.latency_inter_socket", n.latency_inter_socket),
            ("network.latency_inter_node", n.latency_inter_node),
        ] {
            if v == 0 {
                return Err(ConfigError::new(field, "latency must be at least 1 cycle"));
            }
        }
        if n.latency_inter_socket < n.latency_intra_socket {
            return Err(ConfigError::new(
                "network.latency_inter_socket",
                "must not be below latency_intra_socket",
            ));
        }
        if n.latency_inter_node < n.latency_inter_socket {
            return Err(ConfigError::new(
                "network.latency_inter_node",
                "must not be below latency_inter_socket",
            ));
        }

        let a = &c.app;
        if a.cycles == 0 {
            return Err(ConfigError::new("app.cycles", "need at least 1 cycle"));
        }
        if a.grid_points_per_rank == 0 {
            return Err(ConfigError::new("app.grid_points_per_rank", "must be positive"));
        }
        if a.cost_per_point == 0 {
            return Err(ConfigError::new("app.cost_per_point", "must be positive"));
        }
        if a.nonblocking_overlap {
            return Err(ConfigError::new(
                "app.nonblocking_overlap",
                "overlapping communication with computation is not implemented",
            ));
        }

        let z = &c.noise;
        if !(z.jitter_sigma.is_finite() && z.jitter_sigma >= 0.0) {
            return Err(ConfigError::new("noise.jitter_sigma", "must be finite and non-negative"));
        }
        for (i, g) in z.speed_groups.iter().enumerate() {
            let field = format!("noise.speed_groups[{i}]");
            if !(g.factor.is_finite() && g.factor >= 0.01) {
                return Err(ConfigError::new(field, "factor must be at least 0.01"));
            }
            if g.first > g.last || g.last >= t.ranks {
                return Err(ConfigError::new(field, "rank range empty or out of range"));
            }
        }
        for (i, class) in z.os_noise.iter().enumerate() {
            let field = format!("noise.os_noise[{i}]");
            if class.period == 0 {
                return Err(ConfigError::new(field, "period must be positive"));
            }
            if !(0.0..=1.0).contains(&class.jitter_fraction) {
                return Err(ConfigError::new(field, "jitter_fraction must lie in [0, 1]"));
            }
            if let Some(r) = class.affected_ranks.iter().flatten().find(|&&r| r >= t.ranks) {
                return Err(ConfigError::new(field, format!("affected rank {r} out of range")));
            }
        }
        for (i, d) in z.injected_delays.iter().enumerate() {
            if d.rank >= t.ranks || d.cycle >= a.cycles {
                return Err(ConfigError::new(
                    format!("noise.injected_delays[{i}]"),
                    "rank or cycle out of range",
                ));
            }
        }
        Ok(())
    }
}
