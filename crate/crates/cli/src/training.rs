//! Model-producing stages and the held-out evaluation: pattern training,
//! baseline training, per-user fine-tuning, epoch selection, and the
//! bootstrap final test. Each writes its artifacts plus a summary that the
//! next stage reads back, so runs chain through directories, not process
//! state.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use imu_auth::features::FeatureTensor;
use imu_auth::nn::checkpoint::{load_verification, save_pattern, save_verification};
use imu_auth::pipeline::{
    final_test, finetune_user, load_user_features, select_epoch, train_baseline,
    train_pattern_model, write_metrics_csv, AttemptSplit, BaselineTrainConfig, FeatureStats,
    FinalTestConfig, FineTuneConfig, MetricRecord, PatternTrainConfig, SelectedEpoch, SplitPlan,
    UserFeatures,
};
use imu_auth::preprocess::{read_tensor_file, windows_from_tensor_file, PatternWindowSet};
use imu_auth::types::{UserId, WindowLabel};

use crate::config::CliError;
use crate::layout::{
    self, BaselineSummary, FinalTestRecord, FineTuneSummary, PatternSummary, StageIndex,
};

fn last_metric(metrics: &[MetricRecord], split: &str, name: &str) -> Option<f64> {
    metrics.iter().rev().find(|m| m.split == split && m.metric == name).map(|m| m.value)
}

fn load_all_features(dir: &Path, users: &[UserId]) -> Result<Vec<UserFeatures>, CliError> {
    users.iter().map(|u| Ok(load_user_features(dir, u)?)).collect()
}

pub fn train_patterns(
    windows_dir: &Path,
    out: &Path,
    cfg: PatternTrainConfig,
) -> Result<(), CliError> {
    let index: StageIndex = layout::read_json(&windows_dir.join(layout::INDEX_FILE))?;
    let kinds = index.sensor_kinds()?;
    let mut sets = Vec::with_capacity(index.users.len());
    for user in &index.users {
        let tf = read_tensor_file(&windows_dir.join(layout::windows_file(user)))?;
        let windows = windows_from_tensor_file(user, index.rate_hz, &kinds, &tf)?;
        let mut set = PatternWindowSet { user_id: user.clone(), positives: Vec::new(), negatives: Vec::new() };
        for w in windows {
            match w.label {
                WindowLabel::UnlockPositive => set.positives.push(w),
                WindowLabel::UnlockNegative => set.negatives.push(w),
                WindowLabel::Cluster(_) => {
                    return Err(CliError::Data(format!(
                        "{}: cluster labels do not belong in a pattern window file",
                        user.0
                    )))
                }
            }
        }
        sets.push(set);
    }
    let outcome = train_pattern_model(&sets, &cfg)?;
    layout::ensure_dir(out)?;
    save_pattern(&out.join(layout::PATTERN_CKPT), &outcome.model)?;
    outcome.stats.save(&out.join(layout::PATTERN_STATS))?;
    write_metrics_csv(&out.join(layout::METRICS_FILE), &outcome.metrics)?;
    let summary = PatternSummary {
        seed: cfg.seed,
        epochs: cfg.epochs,
        lr: cfg.lr,
        best_epoch: outcome.best_epoch,
        best_val_auc: outcome.best_val_auc,
    };
    layout::write_json(&out.join(layout::SUMMARY_FILE), &summary)?;
    println!(
        "pattern model: kept epoch {} of {} at val ROC-AUC {:.3}; artifacts in {}",
        outcome.best_epoch,
        cfg.epochs,
        outcome.best_val_auc,
        out.display()
    );
    Ok(())
}

pub struct BaselinePlanArgs {
    pub base: usize,
    pub val_add: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

pub fn run_train_baseline(
    features_dir: &Path,
    out: &Path,
    plan_args: &BaselinePlanArgs,
    cfg: BaselineTrainConfig,
) -> Result<(), CliError> {
    let users = crate::stages::feature_users(features_dir)?;
    let plan = SplitPlan::from_users(
        &users,
        plan_args.base,
        plan_args.val_add,
        plan_args.train_fraction,
        plan_args.val_fraction,
    )?;
    let features = load_all_features(features_dir, &users)?;
    let outcome = train_baseline(&features, &plan, &cfg)?;
    layout::ensure_dir(out)?;
    save_verification(&out.join(layout::BASELINE_CKPT), &outcome.model)?;
    outcome.stats.save(&out.join(layout::STATS_FILE))?;
    plan.save(&out.join(layout::PLAN_FILE))?;
    layout::write_json(&out.join(layout::SPLITS_FILE), &outcome.splits)?;
    write_metrics_csv(&out.join(layout::METRICS_FILE), &outcome.metrics)?;
    let summary = BaselineSummary {
        seed: cfg.seed,
        epochs: cfg.epochs,
        lr: cfg.lr,
        crop_len: cfg.crop_len,
        tar: cfg.tar,
    };
    layout::write_json(&out.join(layout::SUMMARY_FILE), &summary)?;
    let far_name = format!("far_at_tar{:02}", (cfg.tar * 100.0).round() as u32);
    let acc = last_metric(&outcome.metrics, "val", "accuracy").unwrap_or(f64::NAN);
    let far = last_metric(&outcome.metrics, "val", &far_name).unwrap_or(f64::NAN);
    println!(
        "baseline over {} users: val accuracy {:.3}, val FAR(@TAR={:.0}%) {:.3}; artifacts in {}",
        plan.base.len(),
        acc,
        cfg.tar * 100.0,
        far,
        out.display()
    );
    Ok(())
}

/// Baseline artifacts that fine-tuning and the final test both need.
pub struct BaselineArtifacts {
    pub model: imu_auth::nn::VerificationModel<f32>,
    pub stats: FeatureStats,
    pub plan: SplitPlan,
    pub splits: BTreeMap<UserId, AttemptSplit>,
    pub summary: BaselineSummary,
}

pub fn load_baseline(dir: &Path) -> Result<BaselineArtifacts, CliError> {
    Ok(BaselineArtifacts {
        model: load_verification(&dir.join(layout::BASELINE_CKPT))?,
        stats: FeatureStats::load(&dir.join(layout::STATS_FILE))?,
        plan: SplitPlan::load(&dir.join(layout::PLAN_FILE))?,
        splits: layout::read_json(&dir.join(layout::SPLITS_FILE))?,
        summary: layout::read_json(&dir.join(layout::SUMMARY_FILE))?,
    })
}

pub fn run_finetune(
    baseline_dir: &Path,
    features_dir: &Path,
    target: &UserId,
    out: &Path,
    cfg: FineTuneConfig,
) -> Result<(), CliError> {
    let base = load_baseline(baseline_dir)?;
    // The extractor is frozen, so crops must match the baseline's length.
    let mut cfg = cfg;
    cfg.crop_len = base.summary.crop_len;
    let users = crate::stages::feature_users(features_dir)?;
    let features = load_all_features(features_dir, &users)?;
    let outcome = finetune_user(
        &base.model,
        &base.stats,
        &features,
        &base.plan,
        &base.splits,
        target,
        &cfg,
        base.summary.lr,
    )?;
    layout::ensure_dir(out)?;
    for (i, model) in outcome.checkpoints.iter().enumerate() {
        save_verification(&out.join(layout::epoch_ckpt(i)), model)?;
    }
    layout::write_json(&out.join(layout::TARGET_SPLIT_FILE), &outcome.target_split)?;
    write_metrics_csv(&out.join(layout::METRICS_FILE), &outcome.metrics)?;
    let summary = FineTuneSummary {
        target: target.clone(),
        seed: cfg.seed,
        epochs: outcome.checkpoints.len(),
        lr: cfg.lr,
        crop_len: cfg.crop_len,
        tar: base.summary.tar,
        baseline_dir: baseline_dir.to_path_buf(),
        features_dir: features_dir.to_path_buf(),
    };
    layout::write_json(&out.join(layout::SUMMARY_FILE), &summary)?;
    let bal = last_metric(&outcome.metrics, "train", "balanced_accuracy").unwrap_or(f64::NAN);
    println!(
        "fine-tuned {} for {} epochs (final balanced accuracy {:.3}); checkpoints in {}",
        target.0,
        outcome.checkpoints.len(),
        bal,
        out.display()
    );
    Ok(())
}

fn pick_tensors(uf: &UserFeatures, indices: &[usize]) -> Result<Vec<FeatureTensor<f32>>, CliError> {
    indices
        .iter()
        .map(|&i| {
            uf.tensors.get(i).cloned().ok_or_else(|| {
                CliError::Data(format!(
                    "{}: split index {i} out of range, user has {} attempts",
                    uf.user_id.0,
                    uf.tensors.len()
                ))
            })
        })
        .collect()
}

/// The fine-tune directory plus everything it references.
pub struct FineTuneArtifacts {
    pub summary: FineTuneSummary,
    pub baseline: BaselineArtifacts,
    pub target_split: AttemptSplit,
    pub target: UserFeatures,
}

pub fn load_finetune(dir: &Path) -> Result<FineTuneArtifacts, CliError> {
    let summary: FineTuneSummary = layout::read_json(&dir.join(layout::SUMMARY_FILE))?;
    let baseline = load_baseline(&summary.baseline_dir)?;
    let target_split: AttemptSplit = layout::read_json(&dir.join(layout::TARGET_SPLIT_FILE))?;
    let target = load_user_features(&summary.features_dir, &summary.target)?;
    Ok(FineTuneArtifacts { summary, baseline, target_split, target })
}

fn load_epoch_checkpoints(
    dir: &Path,
    epochs: usize,
) -> Result<Vec<imu_auth::nn::VerificationModel<f32>>, CliError> {
    (0..epochs).map(|i| Ok(load_verification(&dir.join(layout::epoch_ckpt(i)))?)).collect()
}

pub fn run_select_epoch(finetune_dir: &Path) -> Result<SelectedEpoch, CliError> {
    let art = load_finetune(finetune_dir)?;
    let checkpoints = load_epoch_checkpoints(finetune_dir, art.summary.epochs)?;
    let target_val = pick_tensors(&art.target, &art.target_split.val)?;
    let val_add = load_all_features(&art.summary.features_dir, &art.baseline.plan.val_add)?;
    let selected = select_epoch(
        &checkpoints,
        &art.baseline.stats,
        &target_val,
        &val_add,
        art.summary.crop_len,
        art.summary.tar,
    )?;
    layout::write_json(&finetune_dir.join(layout::SELECTED_FILE), &selected)?;
    println!(
        "selected epoch {} of {} for {}: validation FAR {:.4} at TAR {:.0}%",
        selected.index + 1,
        checkpoints.len(),
        art.summary.target.0,
        selected.far,
        art.summary.tar * 100.0
    );
    Ok(selected)
}

pub fn run_final_test(
    finetune_dir: &Path,
    epoch: Option<usize>,
    cfg_seed: u64,
    iterations: usize,
    draws: usize,
    out_file: Option<PathBuf>,
) -> Result<FinalTestRecord, CliError> {
    let art = load_finetune(finetune_dir)?;
    let index = match epoch {
        Some(e) => {
            if e < 1 || e > art.summary.epochs {
                return Err(CliError::Usage(format!(
                    "--epoch {e} out of range; this run has epochs 1..={}",
                    art.summary.epochs
                )));
            }
            e - 1
        }
        None => {
            let selected: SelectedEpoch =
                layout::read_json(&finetune_dir.join(layout::SELECTED_FILE))?;
            selected.index
        }
    };
    let model = load_verification(&finetune_dir.join(layout::epoch_ckpt(index)))?;
    let target_test = pick_tensors(&art.target, &art.target_split.test)?;
    let impostor_users: Vec<UserId> = art
        .baseline
        .plan
        .test_final
        .iter()
        .filter(|u| **u != art.summary.target)
        .cloned()
        .collect();
    if impostor_users.is_empty() {
        return Err(CliError::Data(
            "no other held-out users to act as impostors; synthesize more users".into(),
        ));
    }
    let impostors = load_all_features(&art.summary.features_dir, &impostor_users)?;
    let sets: Vec<&[FeatureTensor<f32>]> = impostors.iter().map(|u| u.tensors.as_slice()).collect();
    let cfg = FinalTestConfig {
        iterations,
        draws,
        tar: art.summary.tar,
        crop_len: art.summary.crop_len,
        seed: cfg_seed,
    };
    let result = final_test(&model, &art.baseline.stats, &target_test, &sets, &cfg)?;
    let record = FinalTestRecord {
        target: art.summary.target.clone(),
        tar: cfg.tar,
        draws: cfg.draws,
        seed: cfg.seed,
        result,
    };
    let out_path =
        out_file.unwrap_or_else(|| finetune_dir.join(layout::FINAL_TEST_FILE));
    layout::write_json(&out_path, &record)?;
    println!(
        "{} epoch {}: FAR(@TAR={:.0}%) = {} over {} bootstrap iterations (threshold {:.4}, impostor pool {})",
        record.target.0,
        index + 1,
        record.tar * 100.0,
        imu_auth::eval::report::mean_sigma_label(record.result.far_mean, record.result.far_std),
        record.result.iterations,
        record.result.threshold,
        record.result.pool_size
    );
    Ok(record)
}
