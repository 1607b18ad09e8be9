//! Stage-two baseline: one classifier class per enrolled user, trained with
//! the combined cross-entropy + triplet + contrastive objective on
//! twice-augmented batches.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{far_at_tar, ScoreSet};
use crate::features::{augment, AugmentConfig, FeatureTensor};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::losses::{
    cross_entropy_batch, supervised_contrastive, total_loss, triplet_batch, LossConfig,
};
use crate::nn::{VerificationConfig, VerificationModel};
use crate::num::real;
use crate::types::UserId;

use super::{
    find_user, split_attempt_indices, AttemptSplit, FeatureStats, MetricRecord, PipelineError,
    SplitPlan, UserFeatures,
};

#[derive(Debug, Clone)]
pub struct BaselineTrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Users drawn into each batch; every drawn attempt contributes two
    /// augmented views, so the batch holds users x attempts x 2 samples.
    pub users_per_batch: usize,
    pub attempts_per_user: usize,
    pub lr: f64,
    pub loss: LossConfig,
    pub noise_fraction: f64,
    pub crop_len: usize,
    pub tar: f64,
    pub seed: u64,
}

impl BaselineTrainConfig {
    pub fn new(seed: u64) -> Self {
        BaselineTrainConfig {
            epochs: 10,
            steps_per_epoch: 12,
            users_per_batch: 6,
            attempts_per_user: 2,
            lr: 1e-3,
            loss: LossConfig::default(),
            noise_fraction: 0.05,
            crop_len: 50,
            tar: 0.9,
            seed,
        }
    }
}

#[derive(Debug)]
pub struct BaselineOutcome {
    pub model: VerificationModel<f32>,
    pub stats: FeatureStats,
    pub splits: BTreeMap<UserId, AttemptSplit>,
    pub metrics: Vec<MetricRecord>,
}

/// Accuracy and FAR over one attempt split of the base users. Genuine
/// scores are each attempt's probability under its own class; impostor
/// scores come from claiming every other base identity.
fn evaluate_split(
    model: &VerificationModel<f32>,
    stats: &FeatureStats,
    features: &[UserFeatures],
    plan: &SplitPlan,
    splits: &BTreeMap<UserId, AttemptSplit>,
    part: impl Fn(&AttemptSplit) -> &[usize],
    crop_len: usize,
    tar: f64,
) -> Result<(f64, f64), PipelineError> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    let mut correct = 0usize;
    let mut total = 0usize;
    for user in &plan.base {
        let class = plan.class_of(user).expect("base user has a class");
        let uf = find_user(features, user)?;
        let split = &splits[user];
        let tensors: Vec<FeatureTensor<f32>> =
            part(split).iter().map(|&i| uf.tensors[i].clone()).collect();
        for probs in super::softmax_rows(model, stats, &tensors, crop_len)? {
            let argmax = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if argmax == class {
                correct += 1;
            }
            total += 1;
            for (c, &p) in probs.iter().enumerate() {
                if c == class {
                    genuine.push(p);
                } else {
                    impostor.push(p);
                }
            }
        }
    }
    if total == 0 {
        return Err(PipelineError::InsufficientData("empty evaluation split".into()));
    }
    let far = far_at_tar(&ScoreSet::new(genuine, impostor)?, tar)?;
    Ok((correct as f64 / total as f64, far))
}

/// Trains the n-class baseline. Attempt splits are resampled from the
/// config seed; pass a different seed per repeat for resampled repetitions.
pub fn train_baseline(
    features: &[UserFeatures],
    plan: &SplitPlan,
    cfg: &BaselineTrainConfig,
) -> Result<BaselineOutcome, PipelineError> {
    plan.validate()?;
    if cfg.users_per_batch < 2 || plan.base.len() < 2 {
        return Err(PipelineError::InsufficientData(
            "contrastive batches need at least two users".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut splits = BTreeMap::new();
    for user in &plan.base {
        let uf = find_user(features, user)?;
        let split = split_attempt_indices(
            uf.tensors.len(),
            plan.train_fraction,
            plan.val_fraction,
            Some(rng.random()),
        )?;
        splits.insert(user.clone(), split);
    }

    let mut train_grids = Vec::new();
    for user in &plan.base {
        let uf = find_user(features, user)?;
        for &i in &splits[user].train {
            train_grids.push(&uf.tensors[i].grid);
        }
    }
    let stats = FeatureStats::fit(&train_grids);

    let steps = features[0].tensors[0].grid.steps();
    if cfg.crop_len > steps {
        return Err(PipelineError::Config(format!(
            "crop {} longer than stored attempts ({steps} steps)",
            cfg.crop_len
        )));
    }
    let rows = features[0].tensors[0].grid.rows();
    let mut net = VerificationConfig::new(plan.base.len());
    net.branches = rows / 3;
    net.steps = cfg.crop_len;
    let mut model = VerificationModel::<f32>::new(net, &mut rng);
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });

    let margin = real::<f32>(cfg.loss.triplet_margin);
    let p_norm = real::<f32>(cfg.loss.triplet_p);
    let tau = real::<f32>(cfg.loss.supcon_tau);
    let alpha = real::<f32>(cfg.loss.alpha_tm);

    let mut metrics = Vec::new();
    let mut base_order: Vec<usize> = (0..plan.base.len()).collect();
    for epoch in 1..=cfg.epochs as u32 {
        let mut sums = [0.0f64; 4];
        for _ in 0..cfg.steps_per_epoch {
            base_order.shuffle(&mut rng);
            let chosen = &base_order[..cfg.users_per_batch.min(base_order.len())];

            // Two augmented views per drawn attempt: the label appears at
            // least twice, which the contrastive losses require.
            let mut inputs: Vec<Vec<f32>> = Vec::new();
            let mut labels: Vec<usize> = Vec::new();
            for &class in chosen {
                let user = &plan.base[class];
                let uf = find_user(features, user)?;
                let train_idx = &splits[user].train;
                for _ in 0..cfg.attempts_per_user {
                    let attempt = &uf.tensors[train_idx[rng.random_range(0..train_idx.len())]];
                    for _ in 0..2 {
                        let view = augment(
                            attempt,
                            &AugmentConfig {
                                crop_len: cfg.crop_len,
                                noise_fraction: cfg.noise_fraction,
                                seed: rng.random(),
                            },
                        )?;
                        let mut grid = view.grid;
                        stats.apply(&mut grid);
                        inputs.push(grid.data().to_vec());
                        labels.push(class);
                    }
                }
            }

            let caches: Vec<_> = inputs.iter().map(|x| model.forward(x)).collect();
            let logits: Vec<Vec<f32>> = caches.iter().map(|c| c.logits.clone()).collect();
            let embeds: Vec<Vec<f32>> = caches.iter().map(|c| c.embed.clone()).collect();
            let zs: Vec<Vec<f32>> = caches.iter().map(|c| c.z.clone()).collect();

            let (ce, dlogits) = cross_entropy_batch(&logits, &labels)?;
            let (tm, dembeds) = triplet_batch(&embeds, &labels, margin, p_norm)?;
            let (sc, dzs) = supervised_contrastive(&zs, &labels, tau)?;
            let total = total_loss(ce, tm, sc, &cfg.loss);
            sums[0] += ce as f64;
            sums[1] += tm as f64;
            sums[2] += sc as f64;
            sums[3] += total as f64;

            model.zero_grads();
            for (i, cache) in caches.iter().enumerate() {
                let dembed: Vec<f32> = dembeds[i].iter().map(|&g| alpha * g).collect();
                model.backward(cache, &dlogits[i], &dembed, &dzs[i]);
            }
            opt.begin_step();
            model.for_each_param(|name, p, g| opt.update(name, p, g));
        }

        let n = cfg.steps_per_epoch as f64;
        metrics.push(MetricRecord::new(epoch, "train", "loss_ce", sums[0] / n));
        metrics.push(MetricRecord::new(epoch, "train", "loss_tm", sums[1] / n));
        metrics.push(MetricRecord::new(epoch, "train", "loss_sc", sums[2] / n));
        metrics.push(MetricRecord::new(epoch, "train", "loss_total", sums[3] / n));
        let far_name = format!("far_at_tar{:02}", (cfg.tar * 100.0).round() as u32);
        let (acc_val, far_val) = evaluate_split(
            &model, &stats, features, plan, &splits, |s| &s.val, cfg.crop_len, cfg.tar,
        )?;
        let (acc_test, far_test) = evaluate_split(
            &model, &stats, features, plan, &splits, |s| &s.test, cfg.crop_len, cfg.tar,
        )?;
        metrics.push(MetricRecord::new(epoch, "val", "accuracy", acc_val));
        metrics.push(MetricRecord::new(epoch, "val", &far_name, far_val));
        metrics.push(MetricRecord::new(epoch, "test", "accuracy", acc_test));
        metrics.push(MetricRecord::new(epoch, "test", &far_name, far_test));
    }

    Ok(BaselineOutcome { model, stats, splits, metrics })
}

/// Repeated training with resampled attempt splits; repeat r uses seed
/// `cfg.seed + r`.
pub fn train_baseline_repeated(
    features: &[UserFeatures],
    plan: &SplitPlan,
    cfg: &BaselineTrainConfig,
    repeats: usize,
) -> Result<Vec<BaselineOutcome>, PipelineError> {
    assert!(repeats >= 1, "need at least one repeat");
    (0..repeats)
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = cfg.seed + r as u64;
            train_baseline(features, plan, &c)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::features::FEATURE_ROWS;

    /// Synthetic per-user feature tensors. Each user gets a distinct level
    /// on every feature row; levels survive average pooling, so the users
    /// stay separable through the network, unlike pure phase or frequency
    /// differences which pooling washes out.
    pub(crate) fn toy_features(
        users: usize,
        attempts: usize,
        steps: usize,
        seed: u64,
    ) -> Vec<UserFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..users)
            .map(|u| {
                let tensors = (0..attempts)
                    .map(|_| {
                        let mut data = vec![0.0f32; FEATURE_ROWS * steps];
                        for (i, v) in data.iter_mut().enumerate() {
                            let row = (i / steps) as f32;
                            let t = (i % steps) as f32;
                            let level = (u as f32 * 2.39 + row * 0.67).sin() * 2.0;
                            *v = level
                                + 0.4 * (0.21 * t + row * 0.13).sin()
                                + 0.1 * rng.random_range(-1.0f32..1.0);
                        }
                        FeatureTensor {
                            grid: crate::types::Grid::new(FEATURE_ROWS, steps, data),
                        }
                    })
                    .collect();
                UserFeatures {
                    user_id: UserId::from(format!("user{u:02}").as_str()),
                    tensors,
                    clusters: vec![1; attempts],
                }
            })
            .collect()
    }

    fn toy_plan(features: &[UserFeatures], n_base: usize, n_val: usize) -> SplitPlan {
        let users: Vec<UserId> = features.iter().map(|f| f.user_id.clone()).collect();
        SplitPlan::from_users(&users, n_base, n_val, 0.6, 0.2).unwrap()
    }

    fn quick_cfg(seed: u64) -> BaselineTrainConfig {
        let mut cfg = BaselineTrainConfig::new(seed);
        cfg.epochs = 2;
        cfg.steps_per_epoch = 4;
        cfg.users_per_batch = 3;
        cfg.attempts_per_user = 1;
        cfg
    }

    #[test]
    fn baseline_learns_separable_toy_users() {
        let features = toy_features(5, 12, 75, 3);
        let plan = toy_plan(&features, 3, 1);
        let mut cfg = quick_cfg(4);
        cfg.epochs = 6;
        cfg.steps_per_epoch = 8;
        let out = train_baseline(&features, &plan, &cfg).unwrap();
        let acc_test = out
            .metrics
            .iter()
            .rev()
            .find(|m| m.split == "test" && m.metric == "accuracy")
            .unwrap()
            .value;
        assert!(acc_test > 0.9, "test accuracy {acc_test}");
    }

    #[test]
    fn metrics_rows_per_epoch_are_fixed() {
        let features = toy_features(4, 10, 75, 1);
        let plan = toy_plan(&features, 3, 0);
        let out = train_baseline(&features, &plan, &quick_cfg(2)).unwrap();
        // 4 train losses + (accuracy, far) for val and test per epoch.
        assert_eq!(out.metrics.len(), 2 * 8);
        assert_eq!(out.splits.len(), 3);
    }

    #[test]
    fn degenerate_single_class_plan_is_rejected() {
        let features = toy_features(3, 10, 75, 1);
        let users: Vec<UserId> = features.iter().map(|f| f.user_id.clone()).collect();
        assert!(matches!(
            SplitPlan::from_users(&users, 1, 1, 0.6, 0.2),
            Err(PipelineError::BadPlan(_))
        ));
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let features = toy_features(4, 10, 75, 9);
        let plan = toy_plan(&features, 3, 0);
        let cfg = quick_cfg(11);
        let a = train_baseline(&features, &plan, &cfg).unwrap();
        let b = train_baseline(&features, &plan, &cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.model, b.model);
        assert_eq!(a.splits, b.splits);
    }

    #[test]
    fn repeats_resample_attempt_splits() {
        let features = toy_features(4, 10, 75, 9);
        let plan = toy_plan(&features, 3, 0);
        let outs = train_baseline_repeated(&features, &plan, &quick_cfg(5), 2).unwrap();
        assert_eq!(outs.len(), 2);
        assert_ne!(outs[0].splits, outs[1].splits);
    }
}
