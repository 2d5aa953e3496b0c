use std::fmt::Write as _;
use std::path::Path;

use crate::chibar::{DEFAULT_SCREEN_DRAWS, MIN_DRAWS};
use crate::error::{PlrsError, Result};
use crate::knots::KnotMethod;
use crate::selection::Criterion;

/// Screening settings. Read from a flat `key = value` file, then overridden
/// key by key.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub knot_method: KnotMethod,
    pub criterion: Criterion,
    pub min_obs_per_state_model: usize,
    pub min_obs_per_state_test: usize,
    pub alpha: f64,
    pub fdr_threshold: f64,
    pub mc_draws: usize,
    pub seed: u64,
    /// Worker threads; `0` lets the pool decide.
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            knot_method: KnotMethod::Midpoint,
            criterion: Criterion::Osaic,
            min_obs_per_state_model: 3,
            min_obs_per_state_test: 5,
            alpha: 0.05,
            fdr_threshold: 0.1,
            mc_draws: DEFAULT_SCREEN_DRAWS,
            seed: 0,
            threads: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 9] = [
    "knot_method",
    "criterion",
    "min_obs_per_state_model",
    "min_obs_per_state_test",
    "alpha",
    "fdr_threshold",
    "mc_draws",
    "seed",
    "threads",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| PlrsError::Config(format!("{key}: cannot parse {value:?}")))
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: PlrsError| PlrsError::Config(format!("{key}: {e}"));
        match key.trim() {
            "knot_method" => self.knot_method = value.parse().map_err(bad)?,
            "criterion" => self.criterion = value.parse().map_err(bad)?,
            "min_obs_per_state_model" => self.min_obs_per_state_model = parse_num(key, value)?,
            "min_obs_per_state_test" => self.min_obs_per_state_test = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "fdr_threshold" => self.fdr_threshold = parse_num(key, value)?,
            "mc_draws" => self.mc_draws = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            other => return Err(PlrsError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PlrsError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.fdr_threshold > 0.0 && self.fdr_threshold <= 1.0) {
            return Err(PlrsError::Config(format!("fdr_threshold must lie in (0, 1], got {}", self.fdr_threshold)));
        }
        if self.mc_draws < MIN_DRAWS {
            return Err(PlrsError::Config(format!("mc_draws must be at least {MIN_DRAWS}")));
        }
        if self.min_obs_per_state_model == 0 || self.min_obs_per_state_test == 0 {
            return Err(PlrsError::Config("minimum observations per state must be positive".into()));
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PlrsError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlrsError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut cfg = Config::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "knot_method = {}", self.knot_method);
        let _ = writeln!(out, "criterion = {}", self.criterion);
        let _ = writeln!(out, "min_obs_per_state_model = {}", self.min_obs_per_state_model);
        let _ = writeln!(out, "min_obs_per_state_test = {}", self.min_obs_per_state_test);
        let _ = writeln!(out, "alpha = {}", self.alpha);
        let _ = writeln!(out, "fdr_threshold = {}", self.fdr_threshold);
        let _ = writeln!(out, "mc_draws = {}", self.mc_draws);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "threads = {}", self.threads);
        out
    }
}
