#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use xfolio_core::market_data::{write_ohlcv_csv, AssetSeries};
use xfolio_core::synthetic::{drift_market, signal_market, weekdays_between};

pub const TICKERS: [&str; 5] = ["AAPL", "V", "BABA", "ADBE", "SNE"];

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn write_market(dir: &Path, series: &[AssetSeries]) {
    std::fs::create_dir_all(dir).unwrap();
    for s in series {
        std::fs::write(dir.join(format!("{}.csv", s.ticker)), write_ohlcv_csv(s)).unwrap();
    }
}

/// Five tickers, training 2015-2016, trading 2017-2018; the first ticker's
/// open-to-close move predicts its return. Returns the config path.
pub fn signal_setup(root: &Path, n_updates: usize) -> PathBuf {
    let dates = weekdays_between(date(2015, 1, 1), date(2018, 12, 31));
    write_market(&root.join("data"), &signal_market(&TICKERS, &dates, 0.01, 11));
    let config = serde_json::json!({
        "data_dir": "data",
        "tickers": TICKERS,
        "train": {"start": "2015-01-01", "end": "2016-12-31"},
        "trade": {"start": "2017-01-01", "end": "2018-12-31"},
        "env": {"cost_rate": 0.0},
        "ppo": {"gamma": 0.9, "gae_lambda": 0.9, "n_updates": n_updates},
        "output_dir": "out",
        "seed": 42
    });
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// UP drifts +0.1%/day and DOWN -0.1%/day with zero costs.
pub fn drift_setup(root: &Path, n_updates: usize) -> PathBuf {
    let dates = weekdays_between(date(2015, 1, 1), date(2016, 12, 31));
    write_market(&root.join("data"), &drift_market(&["UP", "DOWN"], &[0.001, -0.001], &dates));
    let config = serde_json::json!({
        "data_dir": "data",
        "tickers": ["UP", "DOWN"],
        "train": {"start": "2015-01-01", "end": "2015-12-31"},
        "trade": {"start": "2016-01-01", "end": "2016-12-31"},
        "env": {"cost_rate": 0.0},
        "ppo": {"gamma": 0.9, "gae_lambda": 0.9, "n_updates": n_updates},
        "output_dir": "out",
        "seed": 42
    });
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

pub fn xfolio(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xfolio"))
        .args(&args[..1])
        .arg("--config")
        .arg(config)
        .args(&args[1..])
        .env_remove("XFOLIO_SEED")
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn read_pairs(path: &Path) -> Vec<(String, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (n, v) = l.rsplit_once(',').unwrap();
            (n.to_string(), v.parse().unwrap())
        })
        .collect()
}
