//! On-disk layout shared by the pipeline stages. Every stage writes its
//! outputs plus a small JSON descriptor so the next stage is reproducible
//! from the directory alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use imu_auth::pipeline::FinalTestResult;
use imu_auth::types::{SensorKind, UserId};

use crate::config::CliError;

/// Descriptor of a preprocessed or featurized directory: which users it
/// holds, the window grid rate, and the sensor channel order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageIndex {
    pub rate_hz: f64,
    pub kinds: Vec<String>,
    pub users: Vec<UserId>,
}

impl StageIndex {
    pub fn sensor_kinds(&self) -> Result<Vec<SensorKind>, CliError> {
        self.kinds
            .iter()
            .map(|name| {
                SensorKind::from_name(name)
                    .ok_or_else(|| CliError::Data(format!("unknown sensor kind {name:?} in index")))
            })
            .collect()
    }
}

/// Pattern-model training record: which epoch won and how well it ranked
/// the validation windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternSummary {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub best_epoch: u32,
    pub best_val_auc: f64,
}

/// Settings of a trained baseline that later stages must agree on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub crop_len: usize,
    pub tar: f64,
}

/// Fine-tune provenance: the target user plus where the baseline and the
/// feature files live.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FineTuneSummary {
    pub target: UserId,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub crop_len: usize,
    pub tar: f64,
    pub baseline_dir: PathBuf,
    pub features_dir: PathBuf,
}

/// One final-test outcome with enough context to tabulate it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalTestRecord {
    pub target: UserId,
    pub tar: f64,
    pub draws: usize,
    pub seed: u64,
    pub result: FinalTestResult,
}

pub const INDEX_FILE: &str = "index.json";
pub const PATTERN_CKPT: &str = "pattern.ckpt";
pub const PATTERN_STATS: &str = "pattern_stats.json";
pub const BASELINE_CKPT: &str = "baseline.ckpt";
pub const STATS_FILE: &str = "stats.json";
pub const PLAN_FILE: &str = "plan.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TARGET_SPLIT_FILE: &str = "target_split.json";
pub const SELECTED_FILE: &str = "selected.json";
pub const FINAL_TEST_FILE: &str = "final_test.json";

pub fn windows_file(user: &UserId) -> String {
    format!("{}.windows", user.0)
}

pub fn attempts_file(user: &UserId) -> String {
    format!("{}.attempts", user.0)
}

pub fn epoch_ckpt(epoch_index: usize) -> String {
    format!("epoch{:02}.ckpt", epoch_index + 1)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)?;
    Ok(())
}
