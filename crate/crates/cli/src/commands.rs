use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use xfolio_core::decision_log::{run_trading_with, DecisionLog, LogError, LogMeta};
use xfolio_core::env::PortfolioEnv;
use xfolio_core::explain::{
    explain_log, write_bundle, ExplainError, ExplanationBundle, ForcePlotData, InstanceSelection,
};
use xfolio_core::market_data::{
    align_panel, build_features, decode_panel_cache, encode_panel_cache, parse_ohlcv_csv,
    split_by_date, write_features_csv, FeatureMatrix,
};
use xfolio_core::policy::{NetConfig, NetError, PolicyNet};
use xfolio_core::ppo::{train_with, PpoError};
use xfolio_core::report::{read_bundle, render_report};

use crate::config::{RunConfig, Stage};
use crate::CliError;

pub const PANEL_FILE: &str = "panel.bin";
pub const FEATURES_FILE: &str = "features.csv";
pub const CHECKPOINT_FILE: &str = "policy.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const META_FILE: &str = "meta.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EXPLAIN_DIR: &str = "explain";
pub const REPORT_DIR: &str = "report";
pub const LOCK_FILE: &str = ".xfolio.lock";

type Result<T> = std::result::Result<T, CliError>;

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_at(path))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) {
    let _ = out.write_fmt(line);
    let _ = out.write_all(b"\n");
}

/// Advisory lock on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(output_dir: &Path) -> Result<Self> {
        fs::create_dir_all(output_dir).map_err(io_at(output_dir))?;
        let path = output_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Input(format!(
                "{} is locked by another run (delete {} if stale)",
                output_dir.display(),
                path.display()
            ))),
            Err(e) => Err(io_at(&path)(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn replace_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_at(dir))?;
    }
    fs::create_dir_all(dir).map_err(io_at(dir))
}

/// Reads vendor CSVs, aligns them and writes the panel cache and feature table.
pub fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut series = Vec::with_capacity(cfg.tickers.len());
    let mut dropped = Vec::with_capacity(cfg.tickers.len());
    for ticker in &cfg.tickers {
        let path = cfg.csv_path(ticker);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read data file {}: {e}", path.display())))?;
        let parsed = parse_ohlcv_csv(&text, ticker)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        dropped.push(format!("{ticker}={}", parsed.dropped_rows));
        series.push(parsed.series);
    }
    let panel = align_panel(&series, cfg.fill).map_err(input)?;
    let features = build_features(&panel).map_err(input)?;
    let (train, trade) = split_by_date(&features, cfg.train, cfg.trade).map_err(input)?;

    let panel_path = cfg.out(PANEL_FILE);
    write_file(&panel_path, encode_panel_cache(&panel).map_err(input)?)?;
    write_file(&cfg.out(FEATURES_FILE), write_features_csv(&features))?;
    say(
        out,
        format_args!(
            "ingested {} tickers: {} aligned dates, {} feature rows x {} features",
            panel.n_assets(),
            panel.n_dates(),
            features.n_rows(),
            features.n_features()
        ),
    );
    say(out, format_args!("dropped rows: {}", dropped.join(", ")));
    say(
        out,
        format_args!("training rows {}, trading rows {}", train.n_rows(), trade.n_rows()),
    );
    Ok(())
}

/// Training and trading splits rebuilt from the panel cache.
pub fn load_split(cfg: &RunConfig) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let path = cfg.out(PANEL_FILE);
    let bytes = fs::read(&path)
        .map_err(|e| CliError::Input(format!("{}: {e} (run `xfolio ingest` first)", path.display())))?;
    let panel = decode_panel_cache(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if panel.tickers != cfg.tickers {
        return Err(CliError::Input(format!(
            "{} holds tickers {:?} but the config lists {:?}; rerun ingest",
            path.display(),
            panel.tickers,
            cfg.tickers
        )));
    }
    let features = build_features(&panel).map_err(input)?;
    split_by_date(&features, cfg.train, cfg.trade).map_err(input)
}

fn ppo_error(e: PpoError) -> CliError {
    match e {
        PpoError::InvalidConfig(_) | PpoError::Env(_) => CliError::Input(e.to_string()),
        _ => CliError::Training(e.to_string()),
    }
}

/// Trains the policy on the training split.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (train, _) = load_split(cfg)?;
    let env = PortfolioEnv::new(&train, cfg.env).map_err(input)?;
    let net_cfg = NetConfig {
        input_dim: train.n_features(),
        hidden: cfg.net.hidden.clone(),
        n_outputs: train.n_assets() + 1,
        seed: cfg.stage_seed(Stage::NetInit),
    };
    let net = PolicyNet::init(&net_cfg).map_err(input)?;
    let mut ppo = cfg.ppo.clone();
    ppo.seed = cfg.stage_seed(Stage::Ppo);

    let checkpoint = cfg.out(CHECKPOINT_FILE);
    let log_path = cfg.out(TRAIN_LOG_FILE);
    if checkpoint.exists() {
        fs::remove_file(&checkpoint).map_err(io_at(&checkpoint))?;
    }
    let mut log = String::new();
    let result = train_with(&env, net, &ppo, |stats| {
        log.push_str(&serde_json::to_string(stats).expect("stats serialize"));
        log.push('\n');
    });
    write_file(&log_path, &log)?;
    let (net, history) = result.map_err(ppo_error)?;
    net.save(&checkpoint)
        .map_err(|e| CliError::Checkpoint(format!("{}: {e}", checkpoint.display())))?;

    match (history.first(), history.last()) {
        (Some(first), Some(last)) => say(
            out,
            format_args!(
                "trained {} updates ({} parameters): mean reward {:.6e} -> {:.6e}",
                history.len(),
                net.n_params(),
                first.mean_reward,
                last.mean_reward
            ),
        ),
        _ => say(
            out,
            format_args!("0 updates: wrote the initial policy ({} parameters)", net.n_params()),
        ),
    }
    Ok(())
}

fn load_net(cfg: &RunConfig, features: &FeatureMatrix) -> Result<PolicyNet> {
    let path = cfg.out(CHECKPOINT_FILE);
    let net = PolicyNet::load(&path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    if net.input_dim() != features.n_features() || net.n_outputs() != features.n_assets() + 1 {
        return Err(CliError::Checkpoint(format!(
            "{} expects {} features and {} outputs; data has {} and {}",
            path.display(),
            net.input_dim(),
            net.n_outputs(),
            features.n_features(),
            features.n_assets() + 1
        )));
    }
    Ok(net)
}

fn log_error(e: LogError) -> CliError {
    match e {
        LogError::Net(e) => CliError::Checkpoint(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

/// Runs the trained policy over the trading split.
pub fn cmd_trade(cfg: &RunConfig, force_cash: bool, out: &mut dyn Write) -> Result<()> {
    let (_, trade) = load_split(cfg)?;
    let net = load_net(cfg, &trade)?;
    let mut env = PortfolioEnv::new(&trade, cfg.env).map_err(input)?;
    let (log, summary) = run_trading_with(&mut env, &net, force_cash).map_err(log_error)?;
    write_file(&cfg.out(DECISIONS_FILE), log.export_jsonl())?;
    write_file(&cfg.out(META_FILE), pretty(&log.meta()))?;
    write_file(&cfg.out(SUMMARY_FILE), pretty(&summary))?;
    say(
        out,
        format_args!(
            "traded {} days{}: final value {:.6}, cumulative log return {:.6}, max drawdown {:.4}",
            log.len(),
            if force_cash { " (all cash)" } else { "" },
            summary.final_value,
            summary.cumulative_log_return,
            summary.max_drawdown
        ),
    );
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExplainFlags {
    pub instances: Option<Vec<NaiveDate>>,
    pub output: Option<usize>,
    pub feature: Option<String>,
    pub force_plot: bool,
}

fn explain_error(e: ExplainError) -> CliError {
    match e {
        ExplainError::LogModelMismatch(_) | ExplainError::DimensionMismatch { .. } => {
            CliError::Consistency(e.to_string())
        }
        ExplainError::Net(NetError::CorruptCheckpoint(_)) => CliError::Checkpoint(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

pub fn load_log(cfg: &RunConfig) -> Result<DecisionLog> {
    let meta_path = cfg.out(META_FILE);
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| CliError::Input(format!("{}: {e} (run `xfolio trade` first)", meta_path.display())))?;
    let meta: LogMeta =
        serde_json::from_str(&meta_text).map_err(|e| CliError::Input(format!("{}: {e}", meta_path.display())))?;
    let path = cfg.out(DECISIONS_FILE);
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    DecisionLog::import_jsonl(&text, meta).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn print_force(out: &mut dyn Write, label: &str, date: NaiveDate, fp: &ForcePlotData) {
    let top = |v: &[(String, f64)]| {
        v.iter()
            .take(3)
            .map(|(n, p)| format!("{n} {p:+.5}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    say(
        out,
        format_args!(
            "{label} {date}: base {:.5}, f(x) {:.5}; up: [{}]; down: [{}]; rest {:+.5}",
            fp.base_value,
            fp.fx,
            top(&fp.positive),
            top(&fp.negative),
            fp.rest
        ),
    );
}

/// Explains the logged decisions and writes the bundle directory.
pub fn cmd_explain(cfg: &RunConfig, flags: &ExplainFlags, out: &mut dyn Write) -> Result<ExplanationBundle> {
    let (train, _) = load_split(cfg)?;
    let net = load_net(cfg, &train)?;
    let log = load_log(cfg)?;
    if let Some(f) = &flags.feature {
        if !log.feature_names.contains(f) {
            return Err(CliError::Input(format!("unknown feature `{f}`")));
        }
    }
    let mut ecfg = cfg.explain.clone();
    ecfg.seed = cfg.stage_seed(Stage::Explain);
    if let Some(dates) = &flags.instances {
        ecfg.instances = InstanceSelection::Dates(dates.clone());
    }
    if let Some(k) = flags.output {
        ecfg.outputs = Some(vec![k]);
    }
    let bundle = explain_log(&log, &net, &train, &ecfg).map_err(explain_error)?;

    let dir = cfg.out(EXPLAIN_DIR);
    replace_dir(&dir)?;
    write_bundle(&bundle, &dir).map_err(io_at(&dir))?;
    let mut extra = 0;
    for group in &bundle.outputs {
        for inst in &group.instances {
            if !flags.force_plot {
                continue;
            }
            let fp = ForcePlotData::new(
                &bundle.feature_names,
                &inst.shap.phi,
                inst.shap.base_value,
                inst.shap.fx,
                flags.feature.as_deref(),
            )
            .map_err(input)?;
            if let Some(f) = &flags.feature {
                let path = dir.join(format!("force_{}_{}_{f}.json", group.output, inst.date));
                write_file(&path, pretty(&fp))?;
                extra += 1;
            }
            print_force(out, &group.label, inst.date, &fp);
        }
    }
    let n_instances = bundle.provenance.instance_dates.len();
    say(
        out,
        format_args!(
            "explained {} outputs x {} instances over {} features into {}{}",
            bundle.outputs.len(),
            n_instances,
            bundle.feature_names.len(),
            dir.display(),
            if extra > 0 {
                format!(" (+{extra} single-feature force plots)")
            } else {
                String::new()
            }
        ),
    );
    Ok(bundle)
}

/// Renders SVG charts from the explanation bundle.
pub fn cmd_report(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let bundle = read_bundle(&cfg.out(EXPLAIN_DIR)).map_err(input)?;
    let dir = cfg.out(REPORT_DIR);
    replace_dir(&dir)?;
    let outcome = render_report(&bundle, &dir).map_err(input)?;
    for notice in &outcome.notices {
        say(out, format_args!("note: {notice}"));
    }
    say(
        out,
        format_args!("wrote {} charts into {}", outcome.written.len(), dir.display()),
    );
    Ok(())
}
