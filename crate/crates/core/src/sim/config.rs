use std::path::Path;

use crate::embedders::AgentConfig;
use crate::error::{Result, VneError};

/// Parameters of a generated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub substrate_nodes: usize,
    pub waxman_alpha: f64,
    pub waxman_beta: f64,
    pub cpu_capacity: (f64, f64),
    pub bw_capacity: (f64, f64),
    pub request_count: usize,
    /// When positive, requests are generated up to this arrival time and
    /// `request_count` is ignored.
    pub horizon: f64,
    /// Requests per time unit.
    pub arrival_rate: f64,
    pub mean_lifetime: f64,
    pub vnr_nodes: (usize, usize),
    pub vnr_link_prob: f64,
    pub cpu_demand: (f64, f64),
    pub bw_demand: (f64, f64),
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            substrate_nodes: 50,
            waxman_alpha: 0.2,
            waxman_beta: 0.5,
            cpu_capacity: (50.0, 100.0),
            bw_capacity: (50.0, 100.0),
            request_count: 500,
            horizon: 0.0,
            arrival_rate: 0.04,
            mean_lifetime: 500.0,
            vnr_nodes: (2, 6),
            vnr_link_prob: 0.5,
            cpu_demand: (1.0, 25.0),
            bw_demand: (1.0, 25.0),
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VneError::Config(m));
        let real_range = |name: &str, (lo, hi): (f64, f64)| -> Result<()> {
            if lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi {
                Ok(())
            } else {
                Err(VneError::Config(format!("{name} range [{lo}, {hi}] must satisfy 0 < min <= max")))
            }
        };
        if self.substrate_nodes < 2 {
            return bad(format!("substrate_nodes = {} (need at least 2)", self.substrate_nodes));
        }
        if !(self.waxman_alpha > 0.0) || !(self.waxman_beta > 0.0 && self.waxman_beta <= 1.0) {
            return bad("waxman_alpha must be > 0 and waxman_beta in (0, 1]".into());
        }
        real_range("cpu_capacity", self.cpu_capacity)?;
        real_range("bw_capacity", self.bw_capacity)?;
        real_range("cpu_demand", self.cpu_demand)?;
        real_range("bw_demand", self.bw_demand)?;
        if !(self.arrival_rate > 0.0 && self.arrival_rate.is_finite()) {
            return bad(format!("arrival_rate = {} must be positive", self.arrival_rate));
        }
        if !(self.mean_lifetime > 0.0 && self.mean_lifetime.is_finite()) {
            return bad(format!("mean_lifetime = {} must be positive", self.mean_lifetime));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be non-negative", self.horizon));
        }
        let (lo, hi) = self.vnr_nodes;
        if lo < 1 || lo > hi {
            return bad(format!("vnr_nodes range [{lo}, {hi}] must satisfy 1 <= min <= max"));
        }
        if !(self.vnr_link_prob > 0.0 && self.vnr_link_prob <= 1.0) {
            return bad(format!("vnr_link_prob = {} must lie in (0, 1]", self.vnr_link_prob));
        }
        Ok(())
    }
}

/// Everything a config file can set: the scenario, agent
/// hyperparameters and training plumbing.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    /// Seed of the training scenario; must differ from the evaluation seed.
    pub train_seed: u64,
    /// Route virtual links with splittable flows unless overridden.
    pub split_links: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioConfig::default(),
            agent: AgentConfig::default(),
            train_seed: 1001,
            split_links: false,
        }
    }
}

impl ExperimentConfig {
    /// Scenario used for training: the evaluation scenario re-seeded with
    /// `train_seed`.
    pub fn training_scenario(&self) -> Result<ScenarioConfig> {
        if self.train_seed == self.scenario.seed {
            return Err(VneError::Config(format!(
                "train_seed equals seed ({}); training and evaluation scenarios must differ",
                self.train_seed
            )));
        }
        Ok(ScenarioConfig {
            seed: self.train_seed,
            ..self.scenario.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let a = &self.agent;
        if a.hidden_size == 0 {
            return Err(VneError::Config("hidden_size must be positive".into()));
        }
        if let Some(lr) = a.learning_rate {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(VneError::Config(format!("learning_rate = {lr} must be >= 0")));
            }
        }
        if a.spectral_k == 0 {
            return Err(VneError::Config("spectral_k must be positive".into()));
        }
        if let Some(p) = a.fail_penalty {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(VneError::Config(format!("fail_penalty = {p} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Parses flat `key = value` lines; `#` starts a comment. Unknown keys
    /// and repeated keys are errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| VneError::parse(origin, line_no, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(VneError::parse(origin, line_no, format!("duplicate key `{key}`")));
            }
            cfg.set(key, value)
                .map_err(|msg| VneError::parse(origin, line_no, msg))?;
        }
        cfg.validate().map_err(|e| match e {
            VneError::Config(m) => VneError::parse(origin, 0, m),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VneError::io(path, e))?;
        Self::parse(&text, path)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad value `{value}` for `{key}`"))
        }
        let s = &mut self.scenario;
        let a = &mut self.agent;
        match key {
            "substrate_nodes" => s.substrate_nodes = num(key, value)?,
            "waxman_alpha" => s.waxman_alpha = num(key, value)?,
            "waxman_beta" => s.waxman_beta = num(key, value)?,
            "cpu_capacity_min" => s.cpu_capacity.0 = num(key, value)?,
            "cpu_capacity_max" => s.cpu_capacity.1 = num(key, value)?,
            "bw_capacity_min" => s.bw_capacity.0 = num(key, value)?,
            "bw_capacity_max" => s.bw_capacity.1 = num(key, value)?,
            "request_count" => s.request_count = num(key, value)?,
            "horizon" => s.horizon = num(key, value)?,
            "arrival_rate" => s.arrival_rate = num(key, value)?,
            "mean_lifetime" => s.mean_lifetime = num(key, value)?,
            "vnr_nodes_min" => s.vnr_nodes.0 = num(key, value)?,
            "vnr_nodes_max" => s.vnr_nodes.1 = num(key, value)?,
            "vnr_link_prob" => s.vnr_link_prob = num(key, value)?,
            "cpu_demand_min" => s.cpu_demand.0 = num(key, value)?,
            "cpu_demand_max" => s.cpu_demand.1 = num(key, value)?,
            "bw_demand_min" => s.bw_demand.0 = num(key, value)?,
            "bw_demand_max" => s.bw_demand.1 = num(key, value)?,
            "seed" => s.seed = num(key, value)?,
            "train_seed" => self.train_seed = num(key, value)?,
            "split_links" => self.split_links = num(key, value)?,
            "hidden_size" => a.hidden_size = num(key, value)?,
            "learning_rate" => a.learning_rate = Some(num(key, value)?),
            "epochs" => a.epochs = num(key, value)?,
            "active_search_iters" => a.active_search_iters = num(key, value)?,
            "online_active_search" => a.online_active_search = num(key, value)?,
            "fail_penalty" => a.fail_penalty = Some(num(key, value)?),
            "cell" => a.cell = value.parse().map_err(|e: VneError| e.to_string())?,
            "spectral_k" => a.spectral_k = num(key, value)?,
            "baseline_decay" => a.baseline_decay = num(key, value)?,
            "init_scale" => a.init_scale = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::CellKind;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("c.cfg"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn keys_are_applied() {
        let c = parse("substrate_nodes = 20\narrival_rate=0.1 # busy\ncell = lstm\nfail_penalty = 7\n").unwrap();
        assert_eq!(c.scenario.substrate_nodes, 20);
        assert_eq!(c.scenario.arrival_rate, 0.1);
        assert_eq!(c.agent.cell, CellKind::Lstm);
        assert_eq!(c.agent.fail_penalty, Some(7.0));
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = parse("seed = 3\nlambda = 2\n").unwrap_err().to_string();
        assert_eq!(err, "c.cfg:2: unknown key `lambda`");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse("arrival_rate = 0").is_err());
        assert!(parse("substrate_nodes = 1").is_err());
        assert!(parse("seed = x").is_err());
        assert!(parse("seed = 1\nseed = 2").is_err());
        assert!(parse("cpu_demand_min = 30").is_err());
    }

    #[test]
    fn training_seed_must_differ() {
        let c = parse("seed = 5\ntrain_seed = 5").unwrap();
        assert!(c.training_scenario().is_err());
        let c = parse("seed = 5\ntrain_seed = 6").unwrap();
        assert_eq!(c.training_scenario().unwrap().seed, 6);
    }
}
