//! Explanation of a whole decision log and its directory layout:
//!
//! ```text
//! importance_<k>.csv               feature,importance
//! importance_<k>_by_asset.csv      group,importance
//! importance_<k>_by_indicator.csv  group,importance
//! shap_<k>_<date>.json
//! force_<k>_<date>.json
//! lime_<k>_<date>.json
//! provenance.json
//! ```

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    aggregate_importance, kernel_shap, lime_explain, permutation_importance, Background,
    BackgroundSpec, ExplainError, FeatureStats, ForcePlotData, GroupBy, ImportanceVector, KernelSamples,
    LimeConfig, LimeExplanation, PredictFn, Result, ShapValues,
};
use crate::decision_log::DecisionLog;
use crate::market_data::FeatureMatrix;
use crate::policy::PolicyNet;
use crate::seed::derive_seed;

/// Tolerance for replaying logged actions through the model.
pub const REPLAY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSelection {
    All,
    /// This many records evenly spaced over the log, first and last included.
    Spread(usize),
    Dates(Vec<NaiveDate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Output indices to explain; `None` explains cash and every asset.
    pub outputs: Option<Vec<usize>>,
    pub instances: InstanceSelection,
    pub background_size: usize,
    pub importance_repeats: usize,
    pub shap_samples: KernelSamples,
    pub lime: LimeConfig,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            outputs: None,
            instances: InstanceSelection::Spread(3),
            background_size: 100,
            importance_repeats: 10,
            shap_samples: KernelSamples::Sampled(2048),
            lime: LimeConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceExplanation {
    pub date: NaiveDate,
    pub shap: ShapValues,
    pub shap_seed: u64,
    pub lime: LimeExplanation,
    pub lime_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputExplanations {
    pub output: usize,
    /// `CASH` or the asset's ticker.
    pub label: String,
    pub importance: ImportanceVector,
    pub importance_seed: u64,
    pub by_asset: Vec<(String, f64)>,
    pub by_indicator: Vec<(String, f64)>,
    pub instances: Vec<InstanceExplanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub root_seed: u64,
    pub feature_names: Vec<String>,
    pub tickers: Vec<String>,
    pub outputs: Vec<usize>,
    pub instance_dates: Vec<NaiveDate>,
    pub n_log_records: usize,
    pub background: BackgroundSpec,
    pub shap_samples: KernelSamples,
    pub importance_repeats: usize,
    pub importance_metric: String,
    pub lime: LimeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationBundle {
    pub feature_names: Vec<String>,
    pub tickers: Vec<String>,
    pub outputs: Vec<OutputExplanations>,
    pub provenance: Provenance,
}

fn select_instances(log: &DecisionLog, sel: &InstanceSelection) -> Result<Vec<usize>> {
    let m = log.len();
    Ok(match sel {
        InstanceSelection::All => (0..m).collect(),
        InstanceSelection::Spread(0) => Vec::new(),
        InstanceSelection::Spread(1) => vec![m - 1],
        InstanceSelection::Spread(c) => {
            let c = (*c).min(m);
            let mut idx: Vec<usize> = (0..c)
                .map(|i| ((i * (m - 1)) as f64 / (c - 1).max(1) as f64).round() as usize)
                .collect();
            idx.dedup();
            idx
        }
        InstanceSelection::Dates(dates) => dates
            .iter()
            .map(|d| {
                log.records
                    .iter()
                    .position(|r| r.date == *d)
                    .ok_or_else(|| ExplainError::InvalidInput(format!("no decision on {d}")))
            })
            .collect::<Result<Vec<_>>>()?,
    })
}

/// Explains the logged decisions of `net`: global permutation importance
/// per output with asset/indicator aggregation, plus Kernel SHAP and LIME
/// for the selected instances. Background rows and LIME scales come from
/// the training split.
pub fn explain_log(
    log: &DecisionLog,
    net: &PolicyNet,
    train: &FeatureMatrix,
    cfg: &ExplainConfig,
) -> Result<ExplanationBundle> {
    if log.is_empty() {
        return Err(ExplainError::InvalidInput("decision log is empty".into()));
    }
    let d = log.feature_names.len();
    if net.input_dim() != d || train.n_features() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: if net.input_dim() != d {
                net.input_dim()
            } else {
                train.n_features()
            },
        });
    }
    if net.n_outputs() != log.tickers.len() + 1 {
        return Err(ExplainError::DimensionMismatch {
            expected: log.tickers.len() + 1,
            got: net.n_outputs(),
        });
    }
    if let Some(date) = log
        .replay_mismatch(net, REPLAY_TOL)
        .map_err(|e| ExplainError::LogModelMismatch(e.to_string()))?
    {
        return Err(ExplainError::LogModelMismatch(date.to_string()));
    }

    let outputs: Vec<usize> = cfg
        .outputs
        .clone()
        .unwrap_or_else(|| (0..net.n_outputs()).collect());
    for &k in &outputs {
        PredictFn::new(net, k)?;
    }
    let instances = select_instances(log, &cfg.instances)?;

    let train_rows: Vec<Vec<f64>> = (0..train.n_rows()).map(|t| train.row(t).to_vec()).collect();
    let bg_seed = derive_seed(cfg.seed, &[0xb0]);
    let background = Background::sample(&train_rows, cfg.background_size, bg_seed, "training split")?;
    let (mean, std) = train.column_stats();
    let stats = FeatureStats { mean, std };
    let states: Vec<Vec<f64>> = log.records.iter().map(|r| r.state.clone()).collect();
    let mut lime_cfg = cfg.lime.clone();
    lime_cfg.kernel_width = Some(lime_cfg.kernel_width.unwrap_or(0.75 * (d as f64).sqrt()));

    let tasks: Vec<(usize, usize)> = outputs
        .iter()
        .flat_map(|&k| instances.iter().map(move |&i| (k, i)))
        .collect();
    let local: Vec<InstanceExplanation> = tasks
        .par_iter()
        .map(|&(k, i)| {
            let f = PredictFn::new(net, k)?;
            let x = &log.records[i].state;
            let shap_seed = derive_seed(cfg.seed, &[1, k as u64, i as u64]);
            let lime_seed = derive_seed(cfg.seed, &[2, k as u64, i as u64]);
            let shap = kernel_shap(
                &f,
                x,
                &background,
                cfg.shap_samples,
                &mut crate::seed::rng_for(shap_seed, &[]),
            )?;
            let lime = lime_explain(&f, x, &stats, &lime_cfg, &mut crate::seed::rng_for(lime_seed, &[]))?;
            Ok(InstanceExplanation {
                date: log.records[i].date,
                shap,
                shap_seed,
                lime,
                lime_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut local = local.into_iter();
    let mut groups = Vec::with_capacity(outputs.len());
    for &k in &outputs {
        let f = PredictFn::new(net, k)?;
        let importance_seed = derive_seed(cfg.seed, &[3, k as u64]);
        let importance = permutation_importance(&f, &states, cfg.importance_repeats, importance_seed)?;
        let names = log.feature_names.to_vec();
        groups.push(OutputExplanations {
            output: k,
            label: if k == 0 {
                "CASH".to_string()
            } else {
                log.tickers[k - 1].clone()
            },
            by_asset: aggregate_importance(&importance, &names, GroupBy::Asset)?,
            by_indicator: aggregate_importance(&importance, &names, GroupBy::Indicator)?,
            importance,
            importance_seed,
            instances: local.by_ref().take(instances.len()).collect(),
        });
    }

    Ok(ExplanationBundle {
        feature_names: log.feature_names.to_vec(),
        tickers: log.tickers.clone(),
        provenance: Provenance {
            root_seed: cfg.seed,
            feature_names: log.feature_names.to_vec(),
            tickers: log.tickers.clone(),
            outputs,
            instance_dates: instances.iter().map(|&i| log.records[i].date).collect(),
            n_log_records: log.len(),
            background: background.spec.clone(),
            shap_samples: cfg.shap_samples,
            importance_repeats: cfg.importance_repeats,
            importance_metric: super::IMPORTANCE_METRIC.to_string(),
            lime: lime_cfg,
        },
        outputs: groups,
    })
}

fn named(names: &[String], values: &[f64]) -> Value {
    Value::Object(
        names
            .iter()
            .zip(values)
            .map(|(n, v)| (n.clone(), json!(v)))
            .collect::<Map<_, _>>(),
    )
}

fn csv_pairs(header: &str, rows: impl Iterator<Item = (String, f64)>) -> String {
    let mut out = format!("{header}\n");
    for (name, v) in rows {
        let _ = writeln!(out, "{name},{v}");
    }
    out
}

pub fn shap_json(shap: &ShapValues, names: &[String], seed: u64) -> Value {
    json!({
        "base": shap.base_value,
        "fx": shap.fx,
        "phi": named(names, &shap.phi),
        "method": shap.method,
        "seed": seed,
        "n_samples": shap.n_samples,
    })
}

pub fn lime_json(lime: &LimeExplanation, names: &[String], seed: u64) -> Value {
    json!({
        "intercept": lime.intercept,
        "coefficients": named(names, &lime.coefficients),
        "fidelity": lime.local_fidelity,
        "top_k": lime.top_k.iter().map(|(j, w)| json!({"feature": names[*j], "weight": w})).collect::<Vec<_>>(),
        "kernel_width": lime.kernel_width,
        "n_samples": lime.n_samples,
        "seed": seed,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(name), contents)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Writes the bundle into `dir` (created if missing).
pub fn write_bundle(bundle: &ExplanationBundle, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let names = &bundle.feature_names;
    for g in &bundle.outputs {
        let k = g.output;
        write(
            dir,
            &format!("importance_{k}.csv"),
            &csv_pairs(
                "feature,importance",
                names.iter().cloned().zip(g.importance.values.iter().copied()),
            ),
        )?;
        write(
            dir,
            &format!("importance_{k}_by_asset.csv"),
            &csv_pairs("group,importance", g.by_asset.iter().cloned()),
        )?;
        write(
            dir,
            &format!("importance_{k}_by_indicator.csv"),
            &csv_pairs("group,importance", g.by_indicator.iter().cloned()),
        )?;
        for inst in &g.instances {
            let date = inst.date.format("%Y-%m-%d");
            write(
                dir,
                &format!("shap_{k}_{date}.json"),
                &pretty(&shap_json(&inst.shap, names, inst.shap_seed)),
            )?;
            let force = ForcePlotData::new(names, &inst.shap.phi, inst.shap.base_value, inst.shap.fx, None)
                .expect("phi matches feature names");
            write(
                dir,
                &format!("force_{k}_{date}.json"),
                &pretty(&serde_json::to_value(&force).expect("force plot serializes")),
            )?;
            write(
                dir,
                &format!("lime_{k}_{date}.json"),
                &pretty(&lime_json(&inst.lime, names, inst.lime_seed)),
            )?;
        }
    }
    write(
        dir,
        "provenance.json",
        &pretty(&serde_json::to_value(&bundle.provenance).expect("provenance serializes")),
    )
}
