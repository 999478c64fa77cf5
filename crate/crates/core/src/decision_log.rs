//! Trading-time decision capture and its JSONL persistence.
//!
//! The deterministic allocation (Dirichlet mean) is recorded at every step,
//! so later explanations attach to a replayable prediction function.

use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError, PortfolioEnv};
use crate::policy::{NetError, PolicyNet};

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error("invalid log metadata: {0}")]
    InvalidMeta(String),
}

pub type Result<T, E = LogError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub date: NaiveDate,
    pub state: Vec<f64>,
    pub action: Action,
    pub value: f64,
    pub feature_names: Arc<[String]>,
}

/// Sidecar `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogMeta {
    pub feature_names: Vec<String>,
    pub tickers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionLog {
    pub tickers: Vec<String>,
    pub feature_names: Arc<[String]>,
    pub records: Vec<DecisionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub final_value: f64,
    pub cumulative_log_return: f64,
    pub max_drawdown: f64,
    pub rewards: Vec<f64>,
}

impl BacktestSummary {
    pub fn from_rewards(rewards: Vec<f64>) -> Self {
        let mut value: f64 = 1.0;
        let mut peak: f64 = 1.0;
        let mut max_drawdown: f64 = 0.0;
        for r in &rewards {
            value *= r.exp();
            peak = peak.max(value);
            max_drawdown = max_drawdown.max((peak - value) / peak);
        }
        let cumulative_log_return = rewards.iter().sum();
        Self {
            final_value: value,
            cumulative_log_return,
            max_drawdown,
            rewards,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    date: NaiveDate,
    state: Vec<f64>,
    action: Vec<f64>,
    value: f64,
}

impl DecisionLog {
    pub fn new(meta: LogMeta) -> Result<Self> {
        if meta.feature_names.is_empty() {
            return Err(LogError::InvalidMeta("no feature names".into()));
        }
        if meta.tickers.is_empty() {
            return Err(LogError::InvalidMeta("no tickers".into()));
        }
        Ok(Self {
            tickers: meta.tickers,
            feature_names: meta.feature_names.into(),
            records: Vec::new(),
        })
    }

    pub fn meta(&self) -> LogMeta {
        LogMeta {
            feature_names: self.feature_names.to_vec(),
            tickers: self.tickers.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record after checking dimensions and date order.
    pub fn push(&mut self, date: NaiveDate, state: Vec<f64>, action: Action, value: f64) -> Result<(), String> {
        if state.len() != self.feature_names.len() {
            return Err(format!(
                "state has {} features, expected {}",
                state.len(),
                self.feature_names.len()
            ));
        }
        if action.weights().len() != self.tickers.len() + 1 {
            return Err(format!(
                "action has {} weights, expected {}",
                action.weights().len(),
                self.tickers.len() + 1
            ));
        }
        if let Some(last) = self.records.last() {
            if last.date >= date {
                return Err(format!("date {date} does not follow {}", last.date));
            }
        }
        if !value.is_finite() || state.iter().any(|v| !v.is_finite()) {
            return Err("non-finite state or value".into());
        }
        self.records.push(DecisionRecord {
            date,
            state,
            action,
            value,
            feature_names: Arc::clone(&self.feature_names),
        });
        Ok(())
    }

    /// Replays every record through `net`; returns the first mismatching date.
    pub fn replay_mismatch(&self, net: &PolicyNet, tol: f64) -> Result<Option<NaiveDate>> {
        for rec in &self.records {
            let out = net.forward(&rec.state)?;
            let off = out
                .mean_weights
                .iter()
                .zip(rec.action.weights())
                .any(|(a, b)| (a - b).abs() > tol);
            if off || (out.value - rec.value).abs() > tol {
                return Ok(Some(rec.date));
            }
        }
        Ok(None)
    }

    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            let line = RecordLine {
                date: rec.date,
                state: rec.state.clone(),
                action: rec.action.weights().to_vec(),
                value: rec.value,
            };
            out.push_str(&serde_json::to_string(&line).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn import_jsonl(text: &str, meta: LogMeta) -> Result<Self> {
        let mut log = Self::new(meta)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: RecordLine = serde_json::from_str(raw).map_err(|e| LogError::SchemaViolation {
                line,
                reason: e.to_string(),
            })?;
            let action =
                Action::new(rec.action).map_err(|e| LogError::SchemaViolation {
                    line,
                    reason: e.to_string(),
                })?;
            log.push(rec.date, rec.state, action, rec.value)
                .map_err(|reason| LogError::SchemaViolation { line, reason })?;
        }
        Ok(log)
    }
}

/// Plays the trained net deterministically over `env`, recording each
/// decision before executing it.
pub fn run_trading(env: &mut PortfolioEnv<'_>, net: &PolicyNet) -> Result<(DecisionLog, BacktestSummary)> {
    run_trading_with(env, net, false)
}

/// As [`run_trading`]; with `force_cash` the recorded and executed action
/// is all cash (a debugging aid for accounting checks).
pub fn run_trading_with(
    env: &mut PortfolioEnv<'_>,
    net: &PolicyNet,
    force_cash: bool,
) -> Result<(DecisionLog, BacktestSummary)> {
    let features = env.features();
    let mut log = DecisionLog::new(LogMeta {
        feature_names: features.feature_names.clone(),
        tickers: features.tickers.clone(),
    })?;
    let mut rewards = Vec::with_capacity(env.episode_len());
    let mut state = env.reset();
    loop {
        let out = net.forward(&state.features)?;
        let action = if force_cash {
            Action::all_cash(env.n_outputs())
        } else {
            Action::new(out.mean_weights).map_err(LogError::Env)?
        };
        let date = features.dates[state.t];
        let step = env.step(&action)?;
        log.push(date, state.features, action, out.value)
            .map_err(LogError::InvalidMeta)?;
        rewards.push(step.reward);
        match step.next_state {
            Some(next) => state = next,
            None => break,
        }
    }
    Ok((log, BacktestSummary::from_rewards(rewards)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> LogMeta {
        LogMeta {
            feature_names: vec!["A_open_L1".into(), "A_close_L1".into()],
            tickers: vec!["A".into()],
        }
    }

    fn line(date: &str) -> String {
        format!(r#"{{"date":"{date}","state":[0.9,1.0],"action":[0.25,0.75],"value":0.1}}"#)
    }

    #[test]
    fn empty_file_is_empty_log() {
        let log = DecisionLog::import_jsonl("", meta()).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn missing_action_is_schema_violation() {
        let text = format!(
            "{}\n{}\n",
            line("2017-01-03"),
            r#"{"date":"2017-01-04","state":[0.9,1.0],"value":0.1}"#
        );
        assert!(matches!(
            DecisionLog::import_jsonl(&text, meta()),
            Err(LogError::SchemaViolation { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_unordered_dates_and_bad_dimensions() {
        let text = format!("{}\n{}\n", line("2017-01-04"), line("2017-01-03"));
        assert!(DecisionLog::import_jsonl(&text, meta()).is_err());
        let bad = r#"{"date":"2017-01-03","state":[1.0],"action":[0.25,0.75],"value":0.1}"#;
        assert!(DecisionLog::import_jsonl(bad, meta()).is_err());
        let off_simplex = r#"{"date":"2017-01-03","state":[1.0,1.0],"action":[0.5,0.75],"value":0.1}"#;
        assert!(DecisionLog::import_jsonl(off_simplex, meta()).is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut log = DecisionLog::new(meta()).unwrap();
        let d = NaiveDate::from_ymd_opt(2017, 1, 3).unwrap();
        let w = 1.0 / 3.0;
        log.push(d, vec![0.1 + 0.2, 1.0 / 7.0], Action::new(vec![w, 1.0 - w]).unwrap(), 1e-300)
            .unwrap();
        let back = DecisionLog::import_jsonl(&log.export_jsonl(), log.meta()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn summary_drawdown() {
        let s = BacktestSummary::from_rewards(vec![0.1f64.ln_1p(), 0.5f64.ln(), 1.2f64.ln()]);
        assert!((s.max_drawdown - 0.5).abs() < 1e-12);
        assert!((s.final_value - 1.1 * 0.5 * 1.2).abs() < 1e-12);
    }
}
