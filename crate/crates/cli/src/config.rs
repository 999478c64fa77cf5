use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use xfolio_core::env::EnvConfig;
use xfolio_core::explain::ExplainConfig;
use xfolio_core::market_data::{DateRange, FillPolicy};
use xfolio_core::policy::NetConfig;
use xfolio_core::ppo::PpoConfig;
use xfolio_core::seed::derive_seed;

use crate::CliError;

pub const SEED_ENV: &str = "XFOLIO_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            hidden: NetConfig::default().hidden,
        }
    }
}

/// One run of the pipeline. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub tickers: Vec<String>,
    #[serde(default)]
    pub fill: FillPolicy,
    pub train: DateRange,
    pub trade: DateRange,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// Sets `path` (dot separated) in a JSON object tree, creating
/// intermediate objects. The value is parsed as JSON when possible and
/// taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--set expects key=value, got `{assignment}`")))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(CliError::Input(format!("--set: bad key `{path}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = match node {
            Value::Object(map) => map,
            _ => return Err(CliError::Input(format!("--set: `{path}` descends into a non-object"))),
        };
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

impl RunConfig {
    /// Reads the config file, applies `--set` overrides in order, then the
    /// seed environment variable.
    pub fn load(path: &Path, overrides: &[String], env_seed: Option<&str>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_json(&text, overrides, env_seed, base)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn from_json(
        text: &str,
        overrides: &[String],
        env_seed: Option<&str>,
        base: &Path,
    ) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
        if !value.is_object() {
            return Err(CliError::Input("config must be a JSON object".into()));
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Input(e.to_string()))?;
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|e| CliError::Input(format!("{SEED_ENV}={s}: {e}")))?;
        }
        cfg.data_dir = base.join(&cfg.data_dir);
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.tickers.is_empty() {
            return Err(CliError::Input("no tickers configured".into()));
        }
        let mut sorted = self.tickers.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.tickers.len() {
            return Err(CliError::Input("duplicate ticker".into()));
        }
        for t in &self.tickers {
            if t.is_empty() || t.contains(['/', '\\', '_']) || t.starts_with('.') {
                return Err(CliError::Input(format!("invalid ticker `{t}`")));
            }
        }
        for (name, r) in [("train", &self.train), ("trade", &self.trade)] {
            if r.start > r.end {
                return Err(CliError::Input(format!("{name} range starts after it ends")));
            }
        }
        if self.train.end >= self.trade.start {
            return Err(CliError::Input("train and trade ranges overlap".into()));
        }
        self.env.validate().map_err(|e| CliError::Input(e.to_string()))?;
        self.ppo.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(())
    }

    /// Seed for one pipeline stage, derived from the root seed.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        derive_seed(self.seed, &[stage as u64])
    }

    pub fn csv_path(&self, ticker: &str) -> PathBuf {
        self.data_dir.join(format!("{ticker}.csv"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    NetInit = 1,
    Ppo = 2,
    Explain = 3,
}
