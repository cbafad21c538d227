//! The TOML configuration file shared by every command.
//!
//! Every section and key of [`AppConfig::default`] must be present in a
//! file. Any key may be overridden from the environment as
//! `BESTEFFORT_<SECTION>__<KEY>=<toml value>`, for example
//! `BESTEFFORT_TRAINING__TOTAL_ITERATIONS=5000`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::eval::scenario_names;
use crate::policy::StateEncoding;
use crate::reward::RewardSpec;
use crate::rng::RNG_ALGORITHM;
use crate::sim::ClusterSpec;
use crate::trainer::{TrainConfig, TrainEnv};
use crate::workload::{EstimatorSpec, TaskMix};

pub const ENV_PREFIX: &str = "BESTEFFORT_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    /// Independent evaluation trials, each on its own derived seed.
    pub trials: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { name: "stable-sweep".to_string(), trials: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub rng: String,
    pub out_dir: PathBuf,
    pub cluster: ClusterSpec,
    pub reward: RewardSpec,
    pub encoding: StateEncoding,
    pub estimator: EstimatorSpec,
    pub training: TrainConfig,
    pub scenario: ScenarioSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        let cluster = ClusterSpec::default();
        Self {
            rng: RNG_ALGORITHM.to_string(),
            out_dir: PathBuf::from("out"),
            encoding: StateEncoding::for_cluster(&cluster),
            cluster,
            reward: RewardSpec::default(),
            estimator: EstimatorSpec::default(),
            training: TrainConfig::default(),
            scenario: ScenarioSection::default(),
        }
    }
}

/// A validated configuration plus non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub config: AppConfig,
    pub warnings: Vec<String>,
}

impl AppConfig {
    pub fn train_env(&self) -> TrainEnv {
        TrainEnv {
            cluster: self.cluster.clone(),
            reward: self.reward.clone(),
            encoding: self.encoding.clone(),
            tasks: TaskMix::uniform(self.reward.num_tasks()),
            estimator: self.estimator,
        }
    }

    /// Every violation, plus warnings.
    pub fn check(&self) -> (Vec<String>, Vec<String>) {
        let mut errs = Vec::new();
        if self.rng != RNG_ALGORITHM {
            errs.push(format!("rng must be \"{RNG_ALGORITHM}\", got \"{}\"", self.rng));
        }
        errs.extend(self.cluster.validation_errors());
        let (reward_errs, warnings) = self.reward.check(self.cluster.num_tiers());
        errs.extend(reward_errs);
        errs.extend(self.encoding.validation_errors());
        if self.encoding.num_tiers() != self.cluster.num_tiers() {
            errs.push(format!(
                "encoding.batch_scale has {} entries for {} tiers",
                self.encoding.num_tiers(),
                self.cluster.num_tiers()
            ));
        }
        if self.estimator.window == 0 {
            errs.push("estimator.window must be >= 1".to_string());
        }
        if !(self.estimator.prior_rate > 0.0 && self.estimator.prior_rate.is_finite()) {
            errs.push("estimator.prior_rate must be positive".to_string());
        }
        errs.extend(self.training.validation_errors());
        if !scenario_names(&self.reward).contains(&self.scenario.name) && self.scenario.name != "stable" {
            errs.push(format!("scenario.name \"{}\" is not a known scenario", self.scenario.name));
        }
        if self.scenario.trials == 0 {
            errs.push("scenario.trials must be >= 1".to_string());
        }
        errs.dedup();
        (errs, warnings)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// Keys present in `reference` but absent from `table`, as dotted paths.
/// Arrays are compared as leaves.
fn missing_keys(reference: &Table, table: &Table, prefix: &str, out: &mut Vec<String>) {
    for (key, want) in reference {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (want, table.get(key)) {
            (_, None) => out.push(format!("missing key {path}")),
            (Value::Table(w), Some(Value::Table(got))) => missing_keys(w, got, &path, out),
            _ => {}
        }
    }
}

/// A bare word that is not valid TOML is taken as a string.
fn parse_override(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(node: &mut Table, path: &[String], value: Value) -> std::result::Result<(), String> {
    let (first, rest) = path.split_first().ok_or("empty key")?;
    if rest.is_empty() {
        node.insert(first.clone(), value);
        return Ok(());
    }
    match node.entry(first.clone()).or_insert_with(|| Value::Table(Table::new())) {
        Value::Table(t) => set_path(t, rest, value),
        _ => Err(format!("{first} is not a section")),
    }
}

/// Applies `BESTEFFORT_*` variables from `vars` to a raw table.
pub fn apply_overrides<I>(table: &mut Table, vars: I) -> Vec<String>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut errs = Vec::new();
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (name, raw) in vars {
        let path: Vec<String> = name[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if let Err(e) = set_path(table, &path, parse_override(&raw)) {
            errs.push(format!("{name}: {e}"));
        }
    }
    errs
}

/// Parses and validates configuration text with explicit overrides.
pub fn parse_config_str<I>(text: &str, origin: &str, vars: I) -> Result<Loaded>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![format!("{origin}: {e}")]))?;
    let mut errs = apply_overrides(&mut table, vars);
    let reference: Table = toml::from_str(&AppConfig::default().to_toml()?).map_err(|e| Error::Format(e.to_string()))?;
    missing_keys(&reference, &table, "", &mut errs);
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let config: AppConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("{origin}: {}", e.message())]))?;
    let (errs, warnings) = config.check();
    if errs.is_empty() {
        Ok(Loaded { config, warnings })
    } else {
        Err(Error::Config(errs))
    }
}

/// Loads a config file, or the built-in defaults for the name `default`,
/// applying overrides from the process environment.
pub fn parse_config(path: &Path) -> Result<Loaded> {
    let text = if path == Path::new("default") {
        AppConfig::default().to_toml()?
    } else {
        std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?
    };
    parse_config_str(&text, &path.display().to_string(), std::env::vars())
}
