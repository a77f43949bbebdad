//! Flat `key = value` experiment configuration.

use std::ops::RangeInclusive;
use std::path::PathBuf;

use rashomon_core::cloning::TrainConfig;
use rashomon_core::prop::{parse_property, PropertyQuery};
use rashomon_core::taxi::{success_property, TaxiParams};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub taxi: TaxiParams,
    /// Property text; `None` means completing all `num_jobs` jobs.
    pub property: Option<String>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub shift_jobs: RangeInclusive<i64>,
    pub output_dir: PathBuf,
    /// Worker threads for training and verification; 0 = logical cores.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            taxi: TaxiParams::default(),
            property: None,
            seeds: (1..=20).collect(),
            train: TrainConfig::default(),
            shift_jobs: 5..=10,
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> CliError {
    CliError::Config(format!("{key} = {value}: {why}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(key, value, "not a valid number"))
}

fn parse_pair(key: &str, value: &str) -> Result<(i64, i64), CliError> {
    let (a, b) = value.split_once(',').ok_or_else(|| bad(key, value, "expected `a,b`"))?;
    Ok((parse_num(key, a.trim())?, parse_num(key, b.trim())?))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

pub fn parse_job_range(value: &str) -> Result<RangeInclusive<i64>, CliError> {
    let (lo, hi) = value
        .split_once("..")
        .ok_or_else(|| bad("shift_jobs", value, "expected `min..max`"))?;
    let lo: i64 = parse_num("shift_jobs", lo.trim())?;
    let hi: i64 = parse_num("shift_jobs", hi.trim())?;
    if lo > hi {
        return Err(bad("shift_jobs", value, "empty range"));
    }
    Ok(lo..=hi)
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .map(|v| parse_num(key, v))
        .collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seed_count: Option<u64> = None;
        let mut base_seed: u64 = 1;
        let mut explicit_depots = false;
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "width" => cfg.taxi.width = parse_num(key, value)?,
                "height" => cfg.taxi.height = parse_num(key, value)?,
                "fuel_capacity" => cfg.taxi.fuel_capacity = parse_num(key, value)?,
                "num_jobs" => cfg.taxi.num_jobs = parse_num(key, value)?,
                "depots" => {
                    let pairs = value
                        .split_whitespace()
                        .map(|p| parse_pair(key, p))
                        .collect::<Result<Vec<_>, _>>()?;
                    cfg.taxi.depots = pairs
                        .try_into()
                        .map_err(|_| bad(key, value, "expected exactly 4 `x,y` pairs"))?;
                    explicit_depots = true;
                }
                "first_passenger" => {
                    let (l, d) = parse_pair(key, value)?;
                    if l < 0 || d < 0 {
                        return Err(bad(key, value, "depot indices are nonnegative"));
                    }
                    cfg.taxi.first_passenger = (l as usize, d as usize);
                }
                "taxi_start" => cfg.taxi.taxi_start = parse_pair(key, value)?,
                "refuel_per_job" => cfg.taxi.refuel_per_job = parse_bool(key, value)?,
                "state_cap" => cfg.taxi.state_cap = parse_num(key, value)?,
                "property" => cfg.property = Some(value.to_string()),
                "seeds" => seed_count = Some(parse_num(key, value)?),
                "base_seed" => base_seed = parse_num(key, value)?,
                "seed_list" => cfg.seeds = parse_list(key, value)?,
                "epochs" => cfg.train.epochs = parse_num(key, value)?,
                "learning_rate" => cfg.train.learning_rate = parse_num(key, value)?,
                "batch_size" => cfg.train.batch_size = parse_num(key, value)?,
                "hidden" => cfg.train.hidden = parse_list(key, value)?,
                "early_stop" => cfg.train.early_stop = parse_bool(key, value)?,
                "shift_jobs" => cfg.shift_jobs = parse_job_range(value)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "workers" => cfg.workers = parse_num(key, value)?,
                _ => return Err(CliError::Config(format!("line {}: unknown key {key:?}", n + 1))),
            }
        }
        if !explicit_depots && (cfg.taxi.width, cfg.taxi.height) != (4, 4) {
            cfg.taxi.depots = TaxiParams::corner_depots(cfg.taxi.width, cfg.taxi.height);
        }
        if let Some(count) = seed_count {
            cfg.seeds = (base_seed..base_seed + count).collect();
        } else if base_seed != 1 && !text.contains("seed_list") {
            let count = cfg.seeds.len() as u64;
            cfg.seeds = (base_seed..base_seed + count).collect();
        }
        if !text.lines().any(|l| l.trim_start().starts_with("shift_jobs")) {
            cfg.shift_jobs = cfg.taxi.num_jobs..=cfg.taxi.num_jobs + 5;
        }
        Ok(cfg)
    }

    pub fn set_seed_count(&mut self, n: u64) {
        let base = self.seeds.first().copied().unwrap_or(1);
        self.seeds = (base..base + n).collect();
    }

    pub fn property_text(&self) -> String {
        self.property.clone().unwrap_or_else(|| success_property(self.taxi.num_jobs))
    }

    pub fn property(&self) -> Result<PropertyQuery, CliError> {
        parse_property(&self.property_text()).map_err(|e| CliError::Config(format!("property: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.taxi.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.train.hidden.len() != 2 {
            return Err(CliError::Config(format!(
                "hidden must list two layer sizes, got {:?}",
                self.train.hidden
            )));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seed list has duplicates".into()));
        }
        if *self.shift_jobs.start() != self.taxi.num_jobs {
            return Err(CliError::Config(format!(
                "shift job range must start at num_jobs = {}, got {}..{}",
                self.taxi.num_jobs,
                self.shift_jobs.start(),
                self.shift_jobs.end()
            )));
        }
        self.property()?;
        Ok(())
    }

    /// Canonical text of every setting that affects results. Output
    /// directory and worker count are excluded.
    pub fn canonical(&self) -> String {
        let t = &self.taxi;
        let depots: Vec<String> = t.depots.iter().map(|(x, y)| format!("{x},{y}")).collect();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let hidden: Vec<String> = self.train.hidden.iter().map(usize::to_string).collect();
        [
            format!("width = {}", t.width),
            format!("height = {}", t.height),
            format!("fuel_capacity = {}", t.fuel_capacity),
            format!("num_jobs = {}", t.num_jobs),
            format!("depots = {}", depots.join(" ")),
            format!("first_passenger = {},{}", t.first_passenger.0, t.first_passenger.1),
            format!("taxi_start = {},{}", t.taxi_start.0, t.taxi_start.1),
            format!("refuel_per_job = {}", t.refuel_per_job),
            format!("state_cap = {}", t.state_cap),
            format!("property = {}", self.property_text()),
            format!("seed_list = {}", seeds.join(",")),
            format!("epochs = {}", self.train.epochs),
            format!("learning_rate = {:e}", self.train.learning_rate),
            format!("batch_size = {}", self.train.batch_size),
            format!("hidden = {}", hidden.join(",")),
            format!("early_stop = {}", self.train.early_stop),
            format!("shift_jobs = {}..{}", self.shift_jobs.start(), self.shift_jobs.end()),
        ]
        .join("\n")
            + "\n"
    }

    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.property_text(), "P=? [ F jobs_done=5 & done=1 ]");
        assert_eq!(cfg.seeds.len(), 20);
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# small run\nwidth = 3\nheight = 3 # inline\nnum_jobs = 2\nseeds = 4\nbase_seed = 10\nhidden = 16, 16\nproperty = P>=1 [ F done=1 ]\n",
        )
        .unwrap();
        assert_eq!(cfg.taxi.depots, [(0, 0), (2, 0), (0, 2), (2, 2)]);
        assert_eq!(cfg.seeds, vec![10, 11, 12, 13]);
        assert_eq!(cfg.train.hidden, vec![16, 16]);
        assert_eq!(cfg.shift_jobs, 2..=7);
        assert_eq!(cfg.property_text(), "P>=1 [ F done=1 ]");
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("width").is_err());
        assert!(ExperimentConfig::parse("epochs = many").is_err());
        let cfg = ExperimentConfig::parse("shift_jobs = 6..8").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::parse("seed_list = 1,1").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checksum_ignores_output_dir() {
        let a = ExperimentConfig::parse("output_dir = a").unwrap();
        let b = ExperimentConfig::parse("output_dir = b\nworkers = 3").unwrap();
        assert_eq!(a.checksum(), b.checksum());
        let c = ExperimentConfig::parse("epochs = 10").unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }
}
