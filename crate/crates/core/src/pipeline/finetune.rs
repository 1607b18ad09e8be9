//! Per-user adaptation of the trained baseline: freeze the extractor, swap
//! in a fresh 2-class head (class 0 = enrolled cohort, class 1 = target
//! user), train with cross-entropy on balanced batches, checkpoint every
//! epoch, select the epoch by validation FAR, and bootstrap the final FAR.
//!
//! With the extractor frozen, only the classifier head has trainable
//! parameters, so the embedding losses have no gradient to contribute and
//! cross-entropy is the whole objective.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{bootstrap_far_at_tar, far_at_tar, threshold_at_tar, ScoreSet};
use crate::features::FeatureTensor;
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::losses::cross_entropy;
use crate::nn::VerificationModel;
use crate::types::UserId;

use super::{
    class_scores, eval_input, find_user, split_attempt_indices, AttemptSplit, FeatureStats,
    MetricRecord, PipelineError, SplitPlan, UserFeatures,
};

#[derive(Debug, Clone)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// Learning rate; must stay below the baseline rate.
    pub lr: f64,
    /// Attempt-split fractions for the target user; the remainder feeds the
    /// final test and must keep at least the bootstrap draw count.
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub crop_len: usize,
    pub seed: u64,
}

impl FineTuneConfig {
    pub fn new(seed: u64) -> Self {
        FineTuneConfig {
            epochs: 5,
            steps_per_epoch: 100,
            batch_size: 32,
            lr: 5e-4,
            train_fraction: 0.4,
            val_fraction: 0.2,
            crop_len: 50,
            seed,
        }
    }
}

#[derive(Debug)]
pub struct FineTuneOutcome {
    /// One model per epoch, in epoch order.
    pub checkpoints: Vec<VerificationModel<f32>>,
    pub target_split: AttemptSplit,
    pub metrics: Vec<MetricRecord>,
}

/// Fine-tunes the baseline for one held-out user. The feature extractor and
/// embedding heads stay untouched; only the new 2-class head trains, on
/// batches balanced 1:1 between the target user and the enrolled cohort.
pub fn finetune_user(
    base: &VerificationModel<f32>,
    stats: &FeatureStats,
    features: &[UserFeatures],
    plan: &SplitPlan,
    base_splits: &BTreeMap<UserId, AttemptSplit>,
    target: &UserId,
    cfg: &FineTuneConfig,
    base_lr: f64,
) -> Result<FineTuneOutcome, PipelineError> {
    if !plan.test_final.contains(target) {
        return Err(PipelineError::UserNotHeldOut(target.0.clone()));
    }
    if cfg.lr >= base_lr {
        return Err(PipelineError::Config(format!(
            "fine-tune lr {} must be below the baseline lr {base_lr}",
            cfg.lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target_features = find_user(features, target)?;
    let target_split = split_attempt_indices(
        target_features.tensors.len(),
        cfg.train_fraction,
        cfg.val_fraction,
        Some(rng.random()),
    )?;

    let mut model = base.clone();
    model.replace_classifier(2, &mut rng);

    // The extractor is frozen, so each attempt's trunk vector never
    // changes; computing them once turns every epoch into cheap
    // head-only passes.
    let trunk = |tensor: &FeatureTensor<f32>| -> Result<Vec<f32>, PipelineError> {
        let x = eval_input(tensor, stats, cfg.crop_len)?;
        Ok(model.forward(&x).trunk)
    };
    let mut target_trunks = Vec::new();
    for &i in &target_split.train {
        target_trunks.push(trunk(&target_features.tensors[i])?);
    }
    let mut cohort_trunks = Vec::new();
    for user in &plan.base {
        let uf = find_user(features, user)?;
        let split = base_splits.get(user).ok_or_else(|| {
            PipelineError::Config(format!("no baseline attempt split for user {}", user.0))
        })?;
        for &i in &split.train {
            cohort_trunks.push(trunk(&uf.tensors[i])?);
        }
    }
    if target_trunks.is_empty() || cohort_trunks.is_empty() {
        return Err(PipelineError::InsufficientData("empty fine-tune pools".into()));
    }

    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let half = (cfg.batch_size / 2).max(1);
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs as u32 {
        let mut epoch_loss = 0.0f64;
        for _ in 0..cfg.steps_per_epoch {
            model.classifier.zero_grads();
            let inv = 1.0 / (2 * half) as f32;
            for k in 0..2 * half {
                // Alternating draws keep the two classes balanced 1:1.
                let (pool, label) = if k % 2 == 0 {
                    (&cohort_trunks, 0usize)
                } else {
                    (&target_trunks, 1usize)
                };
                let t = &pool[rng.random_range(0..pool.len())];
                let logits = model.classifier.forward(t);
                let (loss, mut dlogits) = cross_entropy(&logits, label)?;
                epoch_loss += loss as f64 * inv as f64 / cfg.steps_per_epoch as f64;
                for g in &mut dlogits {
                    *g *= inv;
                }
                model.classifier.backward(t, &dlogits);
            }
            opt.begin_step();
            let head = &mut model.classifier;
            opt.update("classifier.w", &mut head.w, &head.dw);
            opt.update("classifier.b", &mut head.b, &head.db);
        }
        let acc = |pool: &[Vec<f32>], label: usize| -> f64 {
            let hits = pool
                .iter()
                .filter(|t| {
                    let logits = model.classifier.forward(t);
                    (logits[1] > logits[0]) == (label == 1)
                })
                .count();
            hits as f64 / pool.len() as f64
        };
        metrics.push(MetricRecord::new(epoch, "train", "loss", epoch_loss));
        metrics.push(MetricRecord::new(
            epoch,
            "train",
            "balanced_accuracy",
            0.5 * (acc(&target_trunks, 1) + acc(&cohort_trunks, 0)),
        ));
        checkpoints.push(model.clone());
    }
    Ok(FineTuneOutcome { checkpoints, target_split, metrics })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SelectedEpoch {
    /// Index into the checkpoint list (epoch - 1).
    pub index: usize,
    pub far: f64,
    pub per_epoch_far: Vec<f64>,
}

/// Picks the checkpoint minimizing FAR at the TAR threshold, scoring the
/// target's validation attempts as genuine and every attempt of the
/// never-used validation users as impostor. Ties go to the earliest epoch.
pub fn select_epoch(
    checkpoints: &[VerificationModel<f32>],
    stats: &FeatureStats,
    target_val: &[FeatureTensor<f32>],
    val_add: &[UserFeatures],
    crop_len: usize,
    tar: f64,
) -> Result<SelectedEpoch, PipelineError> {
    if checkpoints.is_empty() {
        return Err(PipelineError::Config("no checkpoints to select from".into()));
    }
    if target_val.is_empty() || val_add.iter().all(|u| u.tensors.is_empty()) {
        return Err(PipelineError::EmptyValidation);
    }
    let mut per_epoch_far = Vec::with_capacity(checkpoints.len());
    for model in checkpoints {
        let genuine = class_scores(model, stats, target_val, crop_len, 1)?;
        let mut impostor = Vec::new();
        for user in val_add {
            impostor.extend(class_scores(model, stats, &user.tensors, crop_len, 1)?);
        }
        per_epoch_far.push(far_at_tar(&ScoreSet::new(genuine, impostor)?, tar)?);
    }
    let mut index = 0;
    for (i, &far) in per_epoch_far.iter().enumerate() {
        if far < per_epoch_far[index] {
            index = i;
        }
    }
    Ok(SelectedEpoch { index, far: per_epoch_far[index], per_epoch_far })
}

#[derive(Debug, Clone)]
pub struct FinalTestConfig {
    pub iterations: usize,
    /// Fixed genuine attempts and impostor draw count per iteration.
    pub draws: usize,
    pub tar: f64,
    pub crop_len: usize,
    pub seed: u64,
}

impl FinalTestConfig {
    pub fn new(seed: u64) -> Self {
        FinalTestConfig { iterations: 5000, draws: 90, tar: 0.9, crop_len: 50, seed }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FinalTestResult {
    pub far_mean: f64,
    pub far_std: f64,
    pub threshold: f64,
    pub genuine_count: usize,
    pub pool_size: usize,
    pub iterations: usize,
}

/// Statistical core of the final test, exposed for score-level callers:
/// fixed genuine scores set the TAR threshold; each iteration resamples
/// `draws` impostor scores from the pool with replacement.
pub fn final_test_from_scores(
    genuine: &[f64],
    impostor_pool: &[f64],
    cfg: &FinalTestConfig,
) -> Result<FinalTestResult, PipelineError> {
    if genuine.len() < cfg.draws {
        return Err(PipelineError::InsufficientAttempts {
            needed: cfg.draws,
            got: genuine.len(),
        });
    }
    let fixed = &genuine[..cfg.draws];
    let threshold = threshold_at_tar(fixed, cfg.tar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b = bootstrap_far_at_tar(fixed, impostor_pool, cfg.tar, cfg.draws, cfg.iterations, &mut rng)?;
    Ok(FinalTestResult {
        far_mean: b.mean,
        far_std: b.std_dev,
        threshold,
        genuine_count: fixed.len(),
        pool_size: impostor_pool.len(),
        iterations: cfg.iterations,
    })
}

/// Scores the target's held-out test attempts (genuine, class 1) and the
/// impostor users' attempts, then bootstraps FAR at the TAR threshold.
pub fn final_test(
    model: &VerificationModel<f32>,
    stats: &FeatureStats,
    target_test: &[FeatureTensor<f32>],
    impostor_sets: &[&[FeatureTensor<f32>]],
    cfg: &FinalTestConfig,
) -> Result<FinalTestResult, PipelineError> {
    let genuine = class_scores(model, stats, target_test, cfg.crop_len, 1)?;
    let mut pool = Vec::new();
    for set in impostor_sets {
        pool.extend(class_scores(model, stats, set, cfg.crop_len, 1)?);
    }
    final_test_from_scores(&genuine, &pool, cfg)
}
