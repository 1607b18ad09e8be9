//! Training orchestration: user/attempt splits, feature standardization,
//! metric logging, and the three training procedures (pattern detector,
//! verification baseline, per-user fine-tune with epoch selection and the
//! bootstrap final test).

pub mod baseline;
pub mod finetune;
pub mod pattern;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::features::{eval_crop, FeatureError, FeatureTensor, FEATURE_ROWS};
use crate::nn::checkpoint::CheckpointError;
use crate::nn::losses::LossError;
use crate::nn::VerificationModel;
use crate::num::Real;
use crate::preprocess::{read_tensor_file, write_tensor_file, PreprocessError, TensorFile};
use crate::types::{Grid, UserId, WindowLabel};

pub use baseline::{train_baseline, train_baseline_repeated, BaselineOutcome, BaselineTrainConfig};
pub use finetune::{
    final_test, final_test_from_scores, finetune_user, select_epoch, FinalTestConfig,
    FinalTestResult, FineTuneConfig, FineTuneOutcome, SelectedEpoch,
};
pub use pattern::{train_pattern_model, PatternTrainConfig, PatternTrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("user {0} is not in the held-out set")]
    UserNotHeldOut(String),
    #[error("no validation users or attempts")]
    EmptyValidation,
    #[error("need {needed} attempts, have {got}")]
    InsufficientAttempts { needed: usize, got: usize },
    #[error("split plan: {0}")]
    BadPlan(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("plan serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Container(#[from] PreprocessError),
}

/// Which users train the baseline (one classifier class each), which serve
/// as never-touched impostors for epoch selection, and which are fully held
/// out for fine-tuning. Attempt splits use the two fractions; the
/// remainder is the test share.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitPlan {
    pub base: Vec<UserId>,
    pub val_add: Vec<UserId>,
    pub test_final: Vec<UserId>,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl SplitPlan {
    pub fn new(
        base: Vec<UserId>,
        val_add: Vec<UserId>,
        test_final: Vec<UserId>,
        train_fraction: f64,
        val_fraction: f64,
    ) -> Result<Self, PipelineError> {
        let plan = SplitPlan { base, val_add, test_final, train_fraction, val_fraction };
        plan.validate()?;
        Ok(plan)
    }

    /// Deal users out in order: the first `n_base` become classifier
    /// classes, the next `n_val_add` the validation impostors, the rest are
    /// held out.
    pub fn from_users(
        users: &[UserId],
        n_base: usize,
        n_val_add: usize,
        train_fraction: f64,
        val_fraction: f64,
    ) -> Result<Self, PipelineError> {
        if users.len() <= n_base + n_val_add {
            return Err(PipelineError::BadPlan(format!(
                "{} users cannot cover base {n_base} + val_add {n_val_add} + a held-out set",
                users.len()
            )));
        }
        Self::new(
            users[..n_base].to_vec(),
            users[n_base..n_base + n_val_add].to_vec(),
            users[n_base + n_val_add..].to_vec(),
            train_fraction,
            val_fraction,
        )
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.base.len() < 2 {
            return Err(PipelineError::BadPlan(format!(
                "baseline needs at least 2 classes, got {}",
                self.base.len()
            )));
        }
        let total = self.base.len() + self.val_add.len() + self.test_final.len();
        let unique: BTreeSet<&UserId> =
            self.base.iter().chain(&self.val_add).chain(&self.test_final).collect();
        if unique.len() != total {
            return Err(PipelineError::BadPlan("user sets overlap".into()));
        }
        if !(self.train_fraction > 0.0 && self.val_fraction > 0.0)
            || self.train_fraction + self.val_fraction >= 1.0
        {
            return Err(PipelineError::BadPlan(format!(
                "fractions train {} + val {} must each be positive and sum below 1",
                self.train_fraction, self.val_fraction
            )));
        }
        Ok(())
    }

    /// Classifier class index of a base user.
    pub fn class_of(&self, user: &UserId) -> Option<usize> {
        self.base.iter().position(|u| u == user)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let plan: SplitPlan = serde_json::from_str(&fs::read_to_string(path)?)?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Per-user attempt indices for train/val/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `n` attempt indices by fraction. With a seed the order is
/// shuffled first, otherwise the split is chronological. Every part gets at
/// least one attempt.
pub fn split_attempt_indices(
    n: usize,
    train_fraction: f64,
    val_fraction: f64,
    shuffle_seed: Option<u64>,
) -> Result<AttemptSplit, PipelineError> {
    if n < 3 {
        return Err(PipelineError::InsufficientData(format!(
            "{n} attempts cannot fill train/val/test"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - n_train - 1);
    Ok(AttemptSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

/// Per-row standardization parameters, fitted on training data only.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit<F: Real>(grids: &[&Grid<F>]) -> Self {
        assert!(!grids.is_empty(), "no grids to fit");
        let rows = grids[0].rows();
        let mut mean = vec![0.0f64; rows];
        let mut m2 = vec![0.0f64; rows];
        let mut count = 0usize;
        for g in grids {
            assert_eq!(g.rows(), rows, "row count mismatch while fitting stats");
            count += g.steps();
            for r in 0..rows {
                for v in g.row(r) {
                    mean[r] += v.to_f64c();
                    m2[r] += v.to_f64c() * v.to_f64c();
                }
            }
        }
        let n = count as f64;
        let std = mean
            .iter()
            .zip(&m2)
            .map(|(&s, &sq)| {
                let mu = s / n;
                (sq / n - mu * mu).max(0.0).sqrt()
            })
            .collect();
        for v in &mut mean {
            *v /= n;
        }
        FeatureStats { mean, std }
    }

    /// In-place `(x - mean) / std`, with a floor keeping constant rows
    /// finite.
    pub fn apply<F: Real>(&self, grid: &mut Grid<F>) {
        assert_eq!(grid.rows(), self.mean.len(), "row count mismatch applying stats");
        for r in 0..self.mean.len() {
            let mu = crate::num::real::<F>(self.mean[r]);
            let inv = crate::num::real::<F>(1.0 / self.std[r].max(1e-6));
            for v in grid.row_mut(r) {
                *v = (*v - mu) * inv;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let mut json = serde_json::to_string(self)?;
        json.push('\n');
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// One metrics-log row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub epoch: u32,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(epoch: u32, split: &str, metric: &str, value: f64) -> Self {
        MetricRecord { epoch, split: split.into(), metric: metric.into(), value }
    }
}

pub fn metrics_to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from("epoch,split,metric,value\n");
    for r in records {
        assert!(
            !r.split.contains(',') && !r.metric.contains(','),
            "metric labels must not contain commas"
        );
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.split, r.metric, r.value));
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[MetricRecord]) -> Result<(), PipelineError> {
    fs::write(path, metrics_to_csv(records))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRecord>, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "epoch,split,metric,value" {
        return Err(PipelineError::Config(format!("unexpected metrics header {header:?}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(PipelineError::Config(format!("metrics line {} malformed", i + 2)));
        }
        records.push(MetricRecord {
            epoch: parts[0]
                .parse()
                .map_err(|_| PipelineError::Config(format!("bad epoch on line {}", i + 2)))?,
            split: parts[1].to_string(),
            metric: parts[2].to_string(),
            value: parts[3]
                .parse()
                .map_err(|_| PipelineError::Config(format!("bad value on line {}", i + 2)))?,
        });
    }
    Ok(records)
}

/// All verification-attempt feature tensors of one user, attempt order
/// preserved, with the collection-cluster label of each attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub user_id: UserId,
    pub tensors: Vec<FeatureTensor<f32>>,
    pub clusters: Vec<u8>,
}

/// File name of one user's packed feature tensors inside a features
/// directory.
pub fn feature_file_name(user: &UserId) -> String {
    format!("{}.features", user.0)
}

pub fn save_user_features(dir: &Path, uf: &UserFeatures) -> Result<(), PipelineError> {
    if uf.tensors.len() != uf.clusters.len() {
        return Err(PipelineError::Config(format!(
            "{} tensors but {} cluster labels",
            uf.tensors.len(),
            uf.clusters.len()
        )));
    }
    let steps = uf.tensors.first().map(|t| t.grid.steps()).unwrap_or(0);
    let mut labels = Vec::with_capacity(uf.tensors.len());
    let mut data = Vec::with_capacity(uf.tensors.len() * FEATURE_ROWS * steps);
    for (t, &c) in uf.tensors.iter().zip(&uf.clusters) {
        if t.grid.rows() != FEATURE_ROWS || t.grid.steps() != steps {
            return Err(PipelineError::Config("mixed feature tensor shapes".into()));
        }
        labels.push(WindowLabel::Cluster(c).code());
        data.extend_from_slice(t.grid.data());
    }
    let tf = TensorFile {
        channels: FEATURE_ROWS as u32,
        timesteps: steps as u32,
        labels,
        data,
    };
    write_tensor_file(&dir.join(feature_file_name(&uf.user_id)), &tf)?;
    Ok(())
}

pub fn load_user_features(dir: &Path, user: &UserId) -> Result<UserFeatures, PipelineError> {
    let tf = read_tensor_file(&dir.join(feature_file_name(user)))?;
    if tf.channels as usize != FEATURE_ROWS {
        return Err(PipelineError::Config(format!(
            "feature file has {} rows, expected {FEATURE_ROWS}",
            tf.channels
        )));
    }
    let mut tensors = Vec::with_capacity(tf.count());
    let mut clusters = Vec::with_capacity(tf.count());
    for i in 0..tf.count() {
        let cluster = match WindowLabel::from_code(tf.labels[i]) {
            Some(WindowLabel::Cluster(c)) => c,
            _ => {
                return Err(PipelineError::Config(format!(
                    "feature label {} is not a cluster code",
                    tf.labels[i]
                )))
            }
        };
        tensors.push(FeatureTensor {
            grid: Grid::new(FEATURE_ROWS, tf.timesteps as usize, tf.sample(i).to_vec()),
        });
        clusters.push(cluster);
    }
    Ok(UserFeatures { user_id: user.clone(), tensors, clusters })
}

pub fn find_user<'a>(
    features: &'a [UserFeatures],
    user: &UserId,
) -> Result<&'a UserFeatures, PipelineError> {
    features
        .iter()
        .find(|f| &f.user_id == user)
        .ok_or_else(|| PipelineError::InsufficientData(format!("no features for user {}", user.0)))
}

/// Deterministic network input: trailing crop, standardized, flattened.
pub fn eval_input(
    tensor: &FeatureTensor<f32>,
    stats: &FeatureStats,
    crop_len: usize,
) -> Result<Vec<f32>, PipelineError> {
    let mut cropped = eval_crop(tensor, crop_len)?;
    stats.apply(&mut cropped.grid);
    Ok(cropped.grid.data().to_vec())
}

/// Softmax rows for a batch of attempts under the deterministic eval crop.
pub fn softmax_rows(
    model: &VerificationModel<f32>,
    stats: &FeatureStats,
    tensors: &[FeatureTensor<f32>],
    crop_len: usize,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    tensors
        .iter()
        .map(|t| {
            let x = eval_input(t, stats, crop_len)?;
            let probs = crate::nn::layers::softmax(&model.forward(&x).logits);
            Ok(probs.into_iter().map(|p| p as f64).collect())
        })
        .collect()
}

/// Probability each attempt belongs to `class`.
pub fn class_scores(
    model: &VerificationModel<f32>,
    stats: &FeatureStats,
    tensors: &[FeatureTensor<f32>],
    crop_len: usize,
    class: usize,
) -> Result<Vec<f64>, PipelineError> {
    Ok(softmax_rows(model, stats, tensors, crop_len)?.into_iter().map(|r| r[class]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(names: &[&str]) -> Vec<UserId> {
        names.iter().map(|n| UserId::from(*n)).collect()
    }

    #[test]
    fn plan_rejects_overlap_and_degenerate_base() {
        let err = SplitPlan::new(
            users(&["a", "b"]),
            users(&["b"]),
            users(&["c"]),
            0.6,
            0.2,
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::BadPlan(_)));
        let err = SplitPlan::new(users(&["a"]), users(&["b"]), users(&["c"]), 0.6, 0.2).unwrap_err();
        assert!(matches!(err, PipelineError::BadPlan(_)));
    }

    #[test]
    fn plan_from_users_deals_in_order() {
        let all = users(&["u0", "u1", "u2", "u3", "u4", "u5"]);
        let plan = SplitPlan::from_users(&all, 3, 2, 0.6, 0.2).unwrap();
        assert_eq!(plan.base, users(&["u0", "u1", "u2"]));
        assert_eq!(plan.val_add, users(&["u3", "u4"]));
        assert_eq!(plan.test_final, users(&["u5"]));
        assert_eq!(plan.class_of(&UserId::from("u2")), Some(2));
        assert_eq!(plan.class_of(&UserId::from("u5")), None);
    }

    #[test]
    fn plan_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        let plan =
            SplitPlan::from_users(&users(&["a", "b", "c", "d"]), 2, 1, 0.5, 0.25).unwrap();
        plan.save(&path).unwrap();
        assert_eq!(SplitPlan::load(&path).unwrap(), plan);
    }

    #[test]
    fn attempt_split_covers_all_indices_once() {
        let s = split_attempt_indices(300, 0.6, 0.2, None).unwrap();
        assert_eq!(s.train.len(), 180);
        assert_eq!(s.val.len(), 60);
        assert_eq!(s.test.len(), 60);
        let mut all: Vec<usize> =
            s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..300).collect::<Vec<_>>());
        // Chronological without a seed.
        assert_eq!(s.train[0], 0);
        assert_eq!(s.test[59], 299);
    }

    #[test]
    fn attempt_split_shuffle_is_seeded() {
        let a = split_attempt_indices(50, 0.6, 0.2, Some(9)).unwrap();
        let b = split_attempt_indices(50, 0.6, 0.2, Some(9)).unwrap();
        let c = split_attempt_indices(50, 0.6, 0.2, Some(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn attempt_split_needs_three() {
        assert!(split_attempt_indices(2, 0.6, 0.2, None).is_err());
        let s = split_attempt_indices(3, 0.6, 0.2, None).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 1, 1));
    }

    #[test]
    fn stats_standardize_to_zero_mean_unit_std() {
        let g = Grid::new(2, 4, vec![1.0f64, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0]);
        let stats = FeatureStats::fit(&[&g]);
        assert!((stats.mean[0] - 2.5).abs() < 1e-12);
        assert!((stats.mean[1] - 10.0).abs() < 1e-12);
        assert!(stats.std[1].abs() < 1e-12);
        let mut h = g.clone();
        stats.apply(&mut h);
        let m: f64 = h.row(0).iter().sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        // Constant row maps to zero, not infinity.
        assert!(h.row(1).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn metrics_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = vec![
            MetricRecord::new(1, "train", "loss", 0.75),
            MetricRecord::new(1, "val", "roc_auc", 0.9825),
            MetricRecord::new(2, "val", "far_at_tar90", 0.012345678901234567),
        ];
        write_metrics_csv(&path, &records).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), records);
    }

    #[test]
    fn user_features_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let uf = UserFeatures {
            user_id: UserId::from("u7"),
            tensors: (0..3)
                .map(|i| FeatureTensor {
                    grid: Grid::new(FEATURE_ROWS, 5, vec![i as f32 * 0.5; FEATURE_ROWS * 5]),
                })
                .collect(),
            clusters: vec![1, 4, 6],
        };
        save_user_features(dir.path(), &uf).unwrap();
        let back = load_user_features(dir.path(), &uf.user_id).unwrap();
        assert_eq!(back, uf);
    }

    #[test]
    fn mismatched_cluster_labels_cannot_be_saved() {
        let dir = tempfile::tempdir().unwrap();
        let uf = UserFeatures {
            user_id: UserId::from("u"),
            tensors: vec![FeatureTensor { grid: Grid::zeros(FEATURE_ROWS, 4) }],
            clusters: vec![],
        };
        assert!(matches!(
            save_user_features(dir.path(), &uf),
            Err(PipelineError::Config(_))
        ));
    }
}
