//! Run configuration: one merged view of dataset, cost-model, solver and
//! training settings, loadable from a plain-text `key = value` file with
//! command-line overrides applied on top. Unknown keys are rejected.

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::solver::SolverKind;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: SyntheticConfig,
    pub train: TrainConfig,
    /// Embedding dimension of the cost head.
    pub embed_dim: usize,
    /// Assignment offset of the cost head.
    pub c_hat: f64,
    /// Seed for parameter initialization (sub-stream of the master seed).
    pub init_seed: u64,
    /// Worker cap for batch parallelism (0 = library default).
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: SyntheticConfig::default(),
            train: TrainConfig::default(),
            embed_dim: 8,
            c_hat: 0.5,
            init_seed: derive_seed(0, STREAM_INIT),
            threads: 0,
        }
    }
}

const STREAM_DATASET: u64 = 1;
const STREAM_SAMPLING: u64 = 2;
const STREAM_RESTARTS: u64 = 3;
const STREAM_INIT: u64 = 4;

/// Named sub-stream seeds so that one master seed drives dataset
/// generation, triple sampling, restarts and initialization independently.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RunConfig {
    /// Routes a master seed to all random sub-streams.
    pub fn set_master_seed(&mut self, seed: u64) {
        self.dataset.rng_seed = derive_seed(seed, STREAM_DATASET);
        self.train.rng_seed = derive_seed(seed, STREAM_SAMPLING);
        self.train.solver.local_search.rng_seed = derive_seed(seed, STREAM_RESTARTS);
        self.init_seed = derive_seed(seed, STREAM_INIT);
    }

    /// Applies one `key = value` assignment. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid {what} '{value}' for key '{key}'"));
        macro_rules! parse {
            ($ty:ty, $what:expr) => {
                value.parse::<$ty>().map_err(|_| bad($what))?
            };
        }
        match key {
            "universe_size" => self.dataset.universe_size = parse!(usize, "integer"),
            "sets" | "num_sets" => self.dataset.num_sets = parse!(usize, "integer"),
            "coord_noise_sigma" => self.dataset.coord_noise_sigma = parse!(f64, "number"),
            "feature_dim" => self.dataset.feature_dim = parse!(usize, "integer"),
            "feature_noise_sigma" => self.dataset.feature_noise_sigma = parse!(f64, "number"),
            "distractor_ratio" => self.dataset.distractor_ratio = parse!(f64, "number"),
            "occlusion_rate" => self.dataset.occlusion_rate = parse!(f64, "number"),
            "outlier_rate" => self.dataset.outlier_rate = parse!(f64, "number"),
            "visible_per_set" => {
                self.dataset.visible_per_set = if value == "none" {
                    None
                } else {
                    Some(parse!(usize, "integer"))
                }
            }
            "seed" => self.set_master_seed(parse!(u64, "integer")),
            "dataset_seed" => self.dataset.rng_seed = parse!(u64, "integer"),
            "sampling_seed" => self.train.rng_seed = parse!(u64, "integer"),
            "restart_seed" => {
                self.train.solver.local_search.rng_seed = parse!(u64, "integer")
            }
            "init_seed" => self.init_seed = parse!(u64, "integer"),
            "batch_triples" => self.train.batch_triples = parse!(usize, "integer"),
            "lambda" => self.train.lambda = parse!(f64, "number"),
            "steps" => self.train.steps = parse!(usize, "integer"),
            "lr" => self.train.adam.lr = parse!(f64, "number"),
            "lr_halving_period" => self.train.adam.lr_halving_period = parse!(usize, "integer"),
            "update_c_hat" => self.train.adam.update_c_hat = parse!(bool, "boolean"),
            "eval_every" => self.train.eval_every = parse!(usize, "integer"),
            "complete" => self.train.complete = parse!(bool, "boolean"),
            "pairwise_gradients" => self.train.pairwise_gradients = parse!(bool, "boolean"),
            "solver" => self.train.solver.kind = value.parse::<SolverKind>()?,
            "node_limit" => self.train.solver.node_limit = parse!(usize, "integer"),
            "tolerance" => self.train.solver.tolerance = parse!(f64, "number"),
            "max_passes" => self.train.solver.local_search.max_passes = parse!(usize, "integer"),
            "restarts" => self.train.solver.local_search.restarts = parse!(usize, "integer"),
            "embed_dim" => self.embed_dim = parse!(usize, "integer"),
            "c_hat" => self.c_hat = parse!(f64, "number"),
            "threads" => self.threads = parse!(usize, "integer"),
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses a config file: `key = value` per line, `#` comments, blank
    /// lines ignored.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file_text(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        if !self.c_hat.is_finite() {
            return Err(Error::Config("c_hat must be finite".into()));
        }
        Ok(())
    }

    /// Fully resolved configuration as `(key, value)` lines for report
    /// provenance headers.
    pub fn resolved_lines(&self) -> Vec<(String, String)> {
        let d = &self.dataset;
        let t = &self.train;
        let mut out: Vec<(String, String)> = vec![
            ("universe_size".into(), d.universe_size.to_string()),
            ("sets".into(), d.num_sets.to_string()),
            ("coord_noise_sigma".into(), d.coord_noise_sigma.to_string()),
            ("feature_dim".into(), d.feature_dim.to_string()),
            ("feature_noise_sigma".into(), d.feature_noise_sigma.to_string()),
            ("distractor_ratio".into(), d.distractor_ratio.to_string()),
            ("occlusion_rate".into(), d.occlusion_rate.to_string()),
            ("outlier_rate".into(), d.outlier_rate.to_string()),
            (
                "visible_per_set".into(),
                d.visible_per_set.map_or("none".into(), |v| v.to_string()),
            ),
            ("dataset_seed".into(), d.rng_seed.to_string()),
            ("batch_triples".into(), t.batch_triples.to_string()),
            ("lambda".into(), t.lambda.to_string()),
            ("steps".into(), t.steps.to_string()),
            ("lr".into(), t.adam.lr.to_string()),
            ("lr_halving_period".into(), t.adam.lr_halving_period.to_string()),
            ("update_c_hat".into(), t.adam.update_c_hat.to_string()),
            ("eval_every".into(), t.eval_every.to_string()),
            ("complete".into(), t.complete.to_string()),
            ("pairwise_gradients".into(), t.pairwise_gradients.to_string()),
            ("solver".into(), t.solver.kind.to_string()),
            ("node_limit".into(), t.solver.node_limit.to_string()),
            ("tolerance".into(), t.solver.tolerance.to_string()),
            ("max_passes".into(), t.solver.local_search.max_passes.to_string()),
            ("restarts".into(), t.solver.local_search.restarts.to_string()),
            ("sampling_seed".into(), t.rng_seed.to_string()),
            ("restart_seed".into(), t.solver.local_search.rng_seed.to_string()),
            ("init_seed".into(), self.init_seed.to_string()),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("c_hat".into(), self.c_hat.to_string()),
            ("threads".into(), self.threads.to_string()),
        ];
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let text = "\n# a comment\nuniverse_size = 7\nlambda=40\nsolver = qap_local\n";
        let cfg = RunConfig::from_file_text(text).unwrap();
        assert_eq!(cfg.dataset.universe_size, 7);
        assert_eq!(cfg.train.lambda, 40.0);
        assert_eq!(cfg.train.solver.kind, SolverKind::QapLocal);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_file_text("no_such_key = 1").unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = RunConfig::from_file_text("universe_size = 5\nbogus line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn master_seed_fans_out_to_distinct_streams() {
        let mut cfg = RunConfig::default();
        cfg.set_master_seed(42);
        let seeds = [
            cfg.dataset.rng_seed,
            cfg.train.rng_seed,
            cfg.train.solver.local_search.rng_seed,
            cfg.init_seed,
        ];
        for i in 0..seeds.len() {
            for j in (i + 1)..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        let mut again = RunConfig::default();
        again.set_master_seed(42);
        assert_eq!(cfg, again);
    }

    #[test]
    fn resolved_lines_cover_overridden_values() {
        let mut cfg = RunConfig::default();
        cfg.set("lambda", "80").unwrap();
        let lines = cfg.resolved_lines();
        assert!(lines.contains(&("lambda".to_string(), "80".to_string())));
    }
}
