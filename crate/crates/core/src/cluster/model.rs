use std::path::Path;

use crate::config::{get_parsed, parse_key_values};
use crate::error::{Error, Result};

/// Hardware and deployment parameters. Rates are per node; `f64::INFINITY`
/// is accepted for any rate and means "free".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterModel {
    pub node_count: usize,
    pub rtt_us: f64,
    pub disk_read_latency_us: f64,
    /// Partition reads per second.
    pub disk_iops: f64,
    /// Bytes per second.
    pub disk_bandwidth: f64,
    /// Bytes per second, requests in plus responses out.
    pub net_bandwidth: f64,
    /// Distance computations per second.
    pub cpu_rate: f64,
    /// Hottest-node load over mean load.
    pub beta: f64,
}

impl ClusterModel {
    /// Storage-optimized VM with local NVMe: 400K IOPS, 2 GB/s disk,
    /// 12.5 Gbit/s network, 8 cores.
    pub fn lsv3_like(node_count: usize) -> Self {
        ClusterModel {
            node_count,
            rtt_us: 60.0,
            disk_read_latency_us: 80.0,
            disk_iops: 400_000.0,
            disk_bandwidth: 2.0e9,
            net_bandwidth: 1.5625e9,
            cpu_rate: 1.2e8,
            beta: 1.0,
        }
    }

    /// Small general-purpose nodes: 2 cores, network-attached SSD, 5 Gbit/s.
    pub fn small_general(node_count: usize) -> Self {
        ClusterModel {
            node_count,
            rtt_us: 120.0,
            disk_read_latency_us: 500.0,
            disk_iops: 60_000.0,
            disk_bandwidth: 250.0e6,
            net_bandwidth: 625.0e6,
            cpu_rate: 3.0e7,
            beta: 1.0,
        }
    }

    /// Zero latency and unlimited rates.
    pub fn ideal(node_count: usize) -> Self {
        let inf = f64::INFINITY;
        ClusterModel {
            node_count,
            rtt_us: 0.0,
            disk_read_latency_us: 0.0,
            disk_iops: inf,
            disk_bandwidth: inf,
            net_bandwidth: inf,
            cpu_rate: inf,
            beta: 1.0,
        }
    }

    pub fn preset(name: &str, node_count: usize) -> Result<Self> {
        match name {
            "lsv3" | "lsv3-like" => Ok(Self::lsv3_like(node_count)),
            "small" | "small-general" => Ok(Self::small_general(node_count)),
            "ideal" => Ok(Self::ideal(node_count)),
            other => Err(Error::usage(format!("unknown cluster preset {other:?}"))),
        }
    }

    pub fn with_nodes(mut self, node_count: usize) -> Self {
        self.node_count = node_count;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::usage("node_count must be at least 1"));
        }
        for (name, v) in [("rtt_us", self.rtt_us), ("disk_read_latency_us", self.disk_read_latency_us)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("disk_iops", self.disk_iops),
            ("disk_bandwidth", self.disk_bandwidth),
            ("net_bandwidth", self.net_bandwidth),
            ("cpu_rate", self.cpu_rate),
        ] {
            if !(v > 0.0) {
                return Err(Error::usage(format!("{name} must be positive")));
            }
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::usage("beta must be >= 1"));
        }
        Ok(())
    }

    /// Parse a `key=value` profile. An optional `preset` key supplies
    /// defaults that the other keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        for key in kv.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::usage(format!("unknown cluster model key {key:?}")));
            }
        }
        let nodes = get_parsed(&kv, "node_count")?;
        let mut m = match kv.get("preset") {
            Some(p) => Self::preset(p, nodes.unwrap_or(1))?,
            None => {
                let missing: Vec<&str> = REQUIRED.iter().filter(|k| !kv.contains_key(**k)).copied().collect();
                if nodes.is_none() || !missing.is_empty() {
                    return Err(Error::usage(format!("cluster model without preset is missing keys: node_count {missing:?}")));
                }
                Self::ideal(1)
            }
        };
        if let Some(n) = nodes {
            m.node_count = n;
        }
        let fields: [(&str, &mut f64); 7] = [
            ("rtt_us", &mut m.rtt_us),
            ("disk_read_latency_us", &mut m.disk_read_latency_us),
            ("disk_iops", &mut m.disk_iops),
            ("disk_bandwidth", &mut m.disk_bandwidth),
            ("net_bandwidth", &mut m.net_bandwidth),
            ("cpu_rate", &mut m.cpu_rate),
            ("beta", &mut m.beta),
        ];
        for (key, slot) in fields {
            if let Some(v) = get_parsed(&kv, key)? {
                *slot = v;
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Profile text that [`ClusterModel::parse`] reads back to `self`.
    pub fn to_text(&self) -> String {
        format!(
            "node_count={}\nrtt_us={}\ndisk_read_latency_us={}\ndisk_iops={}\ndisk_bandwidth={}\nnet_bandwidth={}\ncpu_rate={}\nbeta={}\n",
            self.node_count,
            self.rtt_us,
            self.disk_read_latency_us,
            self.disk_iops,
            self.disk_bandwidth,
            self.net_bandwidth,
            self.cpu_rate,
            self.beta
        )
    }
}

const REQUIRED: [&str; 6] = ["rtt_us", "disk_read_latency_us", "disk_iops", "disk_bandwidth", "net_bandwidth", "cpu_rate"];

const KEYS: [&str; 10] = [
    "preset",
    "node_count",
    "rtt_us",
    "disk_read_latency_us",
    "disk_iops",
    "disk_bandwidth",
    "net_bandwidth",
    "cpu_rate",
    "beta",
    "name",
];
