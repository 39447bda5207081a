use super::CliError;
use flexseg::grid::{bundled_network, load_network, network_to_json, Network, UnitId};
use flexseg::segmentation::{CONTAINMENT_TOL, DEFAULT_MAX_SEGMENTS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Epsilon,
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    Count,
    Prob,
}

/// Effective settings of one run. Every field has a default so a config file
/// may set any subset of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled network name or path to a network file.
    pub network: String,
    pub out_dir: PathBuf,
    pub k: usize,
    pub method: Method,
    pub direction: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<UnitId>>,
    /// Reliability overrides keyed by unit id.
    pub reliability: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub max_segments: usize,
    pub seed: u64,
    pub workers: usize,
    /// Monte Carlo samples drawn by `area` (0 disables sampling).
    pub samples: usize,
    pub repeats: usize,
    pub bench_mode: BenchMode,
    pub layout_iterations: usize,
    pub containment_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: String::new(),
            out_dir: PathBuf::from("out"),
            k: 50,
            method: Method::Epsilon,
            direction: "-p".into(),
            cardinality: None,
            subset: None,
            reliability: BTreeMap::new(),
            threshold: None,
            max_segments: DEFAULT_MAX_SEGMENTS,
            seed: 42,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            samples: 0,
            repeats: 5,
            bench_mode: BenchMode::Count,
            layout_iterations: 5000,
            containment_tol: CONTAINMENT_TOL,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.network.is_empty() {
            return bad("no network given (use --network or the config file)".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("threshold {t} outside (0, 1]"));
            }
        }
        if self.workers < 1 {
            return bad("workers must be at least 1".into());
        }
        if self.repeats < 1 {
            return bad("repeats must be at least 1".into());
        }
        if self.max_segments < 1 {
            return bad("max_segments must be at least 1".into());
        }
        if !(self.containment_tol >= 0.0) {
            return bad("containment_tol must be non-negative".into());
        }
        if self.cardinality.is_some() && self.subset.is_some() {
            return bad("cardinality and subset are mutually exclusive".into());
        }
        for (id, r) in &self.reliability {
            if id.parse::<UnitId>().is_err() {
                return bad(format!("reliability key {id:?} is not a unit id"));
            }
            if !(0.0..=1.0).contains(r) {
                return bad(format!("reliability {r} of unit {id} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Loads the network and applies the reliability overrides.
    pub fn load_network(&self) -> Result<Network, CliError> {
        let mut net = match bundled_network(&self.network) {
            Some(n) => n,
            None => load_network(&self.network)?,
        };
        for (id, &r) in &self.reliability {
            let id: UnitId = id.parse().expect("validated");
            net = net.with_reliability(id, r)?;
        }
        Ok(net)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Digest of everything that influences results: the subcommand, the
    /// config without output location and worker count, and the network.
    pub fn hash(&self, net: &Network, mode: &str) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = 0;
        let mut h = Sha256::new();
        h.update(mode.as_bytes());
        h.update(b"\n");
        h.update(c.to_toml().as_bytes());
        h.update(network_to_json(net).as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig {
            network: "case33".into(),
            ..Default::default()
        };
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let ok = RunConfig {
            network: "case33".into(),
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
        for bad in [
            RunConfig { k: 0, ..ok.clone() },
            RunConfig {
                threshold: Some(0.0),
                ..ok.clone()
            },
            RunConfig {
                workers: 0,
                ..ok.clone()
            },
            RunConfig {
                network: String::new(),
                ..ok.clone()
            },
            RunConfig {
                reliability: BTreeMap::from([("x".into(), 0.5)]),
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(CliError::Validation(_))));
        }
    }

    #[test]
    fn hash_ignores_output_location_and_workers() {
        let net = flexseg::grid::case33();
        let a = RunConfig {
            network: "case33".into(),
            ..Default::default()
        };
        let b = RunConfig {
            out_dir: "elsewhere".into(),
            workers: 7,
            ..a.clone()
        };
        assert_eq!(a.hash(&net, "area"), b.hash(&net, "area"));
        assert_ne!(
            a.hash(&net, "area"),
            RunConfig { k: 3, ..a.clone() }.hash(&net, "area")
        );
        assert_ne!(a.hash(&net, "area"), a.hash(&net, "opf"));
    }
}
