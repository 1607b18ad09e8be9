//! Stage-one training: does a window of motion precede an unlock?

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::{roc_auc, ScoreSet};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::losses::cross_entropy;
use crate::nn::{PatternModel, PatternNetConfig};
use crate::preprocess::PatternWindowSet;
use crate::types::Grid;

use super::{FeatureStats, MetricRecord, PipelineError};

#[derive(Debug, Clone)]
pub struct PatternTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Share of each class held out for validation.
    pub val_fraction: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl PatternTrainConfig {
    pub fn new(seed: u64) -> Self {
        PatternTrainConfig {
            epochs: 15,
            lr: 1e-3,
            batch_size: 16,
            val_fraction: 0.3,
            hidden: vec![32, 32],
            seed,
        }
    }
}

#[derive(Debug)]
pub struct PatternTrainOutcome {
    /// Weights of the epoch with the best validation ROC-AUC.
    pub model: PatternModel<f32>,
    pub stats: FeatureStats,
    pub best_epoch: u32,
    pub best_val_auc: f64,
    pub metrics: Vec<MetricRecord>,
}

struct Sample {
    x: Vec<f32>,
    label: usize,
}

/// Pools windows from every user, splits each class into train/val, and
/// trains with cross-entropy. Returns the epoch maximizing validation
/// ROC-AUC (ties go to the earlier epoch).
pub fn train_pattern_model(
    sets: &[PatternWindowSet<f32>],
    cfg: &PatternTrainConfig,
) -> Result<PatternTrainOutcome, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positives: Vec<&Grid<f32>> = Vec::new();
    let mut negatives: Vec<&Grid<f32>> = Vec::new();
    for set in sets {
        positives.extend(set.positives.iter().map(|w| &w.grid));
        negatives.extend(set.negatives.iter().map(|w| &w.grid));
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(PipelineError::InsufficientData(format!(
            "{} positive / {} negative windows",
            positives.len(),
            negatives.len()
        )));
    }
    let rows = positives[0].rows();
    let steps = positives[0].steps();

    let mut split_class = |grids: &[&Grid<f32>]| -> (Vec<usize>, Vec<usize>) {
        let mut order: Vec<usize> = (0..grids.len()).collect();
        order.shuffle(&mut rng);
        let n_val = ((cfg.val_fraction * grids.len() as f64).round() as usize)
            .clamp(1, grids.len().saturating_sub(1).max(1));
        (order[n_val..].to_vec(), order[..n_val].to_vec())
    };
    let (pos_train, pos_val) = split_class(&positives);
    let (neg_train, neg_val) = split_class(&negatives);
    for (name, part) in [
        ("train positives", pos_train.len()),
        ("val positives", pos_val.len()),
        ("train negatives", neg_train.len()),
        ("val negatives", neg_val.len()),
    ] {
        if part < 2 {
            return Err(PipelineError::InsufficientData(format!("only {part} {name}")));
        }
    }

    let train_grids: Vec<&Grid<f32>> = pos_train
        .iter()
        .map(|&i| positives[i])
        .chain(neg_train.iter().map(|&i| negatives[i]))
        .collect();
    let stats = FeatureStats::fit(&train_grids);
    let prepare = |grid: &Grid<f32>, label: usize| -> Sample {
        let mut g = grid.clone();
        stats.apply(&mut g);
        Sample { x: g.data().to_vec(), label }
    };
    let train: Vec<Sample> = pos_train
        .iter()
        .map(|&i| prepare(positives[i], 1))
        .chain(neg_train.iter().map(|&i| prepare(negatives[i], 0)))
        .collect();
    let val: Vec<Sample> = pos_val
        .iter()
        .map(|&i| prepare(positives[i], 1))
        .chain(neg_val.iter().map(|&i| prepare(negatives[i], 0)))
        .collect();

    let net = PatternNetConfig {
        in_channels: rows,
        steps,
        hidden: cfg.hidden.clone(),
        classes: 2,
    };
    let mut model = PatternModel::<f32>::new(net, &mut rng);
    let mut opt = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });

    let accuracy = |model: &PatternModel<f32>, samples: &[Sample]| -> f64 {
        let correct = samples
            .iter()
            .filter(|s| {
                let logits = model.forward(&s.x).logits;
                let predicted = if logits[1] > logits[0] { 1 } else { 0 };
                predicted == s.label
            })
            .count();
        correct as f64 / samples.len() as f64
    };

    let mut metrics = Vec::new();
    let mut best: Option<(f64, u32, PatternModel<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs as u32 {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            model.zero_grads();
            let inv = 1.0 / chunk.len() as f32;
            for &i in chunk {
                let s = &train[i];
                let cache = model.forward(&s.x);
                let (loss, mut dlogits) = cross_entropy(&cache.logits, s.label)?;
                epoch_loss += loss as f64 / chunk.len() as f64;
                for g in &mut dlogits {
                    *g *= inv;
                }
                model.backward(&cache, &dlogits);
            }
            opt.begin_step();
            model.for_each_param(|name, p, g| opt.update(name, p, g));
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        let (genuine, impostor): (Vec<f64>, Vec<f64>) = {
            let mut g = Vec::new();
            let mut i = Vec::new();
            for s in &val {
                let p = model.unlock_probability(&s.x) as f64;
                if s.label == 1 {
                    g.push(p);
                } else {
                    i.push(p);
                }
            }
            (g, i)
        };
        let auc = roc_auc(&ScoreSet::new(genuine, impostor)?)?;
        metrics.push(MetricRecord::new(epoch, "train", "loss", train_loss));
        metrics.push(MetricRecord::new(epoch, "train", "accuracy", accuracy(&model, &train)));
        metrics.push(MetricRecord::new(epoch, "val", "accuracy", accuracy(&model, &val)));
        metrics.push(MetricRecord::new(epoch, "val", "roc_auc", auc));
        if best.as_ref().map_or(true, |(b, _, _)| auc > *b) {
            best = Some((auc, epoch, model.clone()));
        }
    }
    let (best_val_auc, best_epoch, model) = best.expect("at least one epoch");
    Ok(PatternTrainOutcome { model, stats, best_epoch, best_val_auc, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{PATTERN_STEPS, WINDOW_RATE_HZ};
    use rand::Rng;
    use crate::types::{SensorKind, UserId, Window, WindowLabel};

    /// Positives carry a raised oscillation on the accelerometer rows,
    /// negatives stay at baseline noise. The class difference includes a
    /// mean shift so it survives the network's average pooling.
    fn separable_sets(per_class: usize, noisy_labels: bool, seed: u64) -> Vec<PatternWindowSet<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kinds = SensorKind::ALL.to_vec();
        let rows: usize = kinds.iter().map(|k| k.component_count()).sum();
        let make = |label: WindowLabel, active: bool, rng: &mut ChaCha8Rng| -> Window<f32> {
            let mut data = vec![0.0f32; rows * PATTERN_STEPS];
            for (i, v) in data.iter_mut().enumerate() {
                let t = (i % PATTERN_STEPS) as f32;
                *v = 0.05 * rng.random_range(-1.0f32..1.0);
                if active && i < 3 * PATTERN_STEPS {
                    *v += 1.5 + (0.3 * t).sin();
                }
            }
            Window::new(
                UserId::from("u"),
                label,
                WINDOW_RATE_HZ,
                0,
                kinds.clone(),
                Grid::new(rows, PATTERN_STEPS, data),
            )
        };
        let mut set = PatternWindowSet {
            user_id: UserId::from("u"),
            positives: Vec::new(),
            negatives: Vec::new(),
        };
        for i in 0..per_class {
            // Label shuffling keeps the data but breaks the signal/label tie.
            let (pos_active, neg_active) = if noisy_labels { (i % 2 == 0, i % 2 == 1) } else { (true, false) };
            set.positives.push(make(WindowLabel::UnlockPositive, pos_active, &mut rng));
            set.negatives.push(make(WindowLabel::UnlockNegative, neg_active, &mut rng));
        }
        vec![set]
    }

    #[test]
    fn separable_windows_reach_high_auc() {
        let sets = separable_sets(20, false, 5);
        let mut cfg = PatternTrainConfig::new(7);
        cfg.epochs = 12;
        let out = train_pattern_model(&sets, &cfg).unwrap();
        assert!(out.best_val_auc >= 0.99, "auc {}", out.best_val_auc);
        assert_eq!(out.metrics.len(), 12 * 4);
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        let sets = separable_sets(30, true, 6);
        let mut cfg = PatternTrainConfig::new(8);
        cfg.epochs = 6;
        let out = train_pattern_model(&sets, &cfg).unwrap();
        assert!(
            (out.best_val_auc - 0.5).abs() <= 0.35,
            "label-free data should hover near chance, got {}",
            out.best_val_auc
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let sets = separable_sets(10, false, 5);
        let mut cfg = PatternTrainConfig::new(42);
        cfg.epochs = 3;
        let a = train_pattern_model(&sets, &cfg).unwrap();
        let b = train_pattern_model(&sets, &cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.best_epoch, b.best_epoch);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn too_few_windows_is_rejected() {
        let sets = separable_sets(2, false, 5);
        // 2 per class with val fraction 0.3 leaves 1 val window per class.
        let cfg = PatternTrainConfig::new(1);
        assert!(matches!(
            train_pattern_model(&sets, &cfg),
            Err(PipelineError::InsufficientData(_))
        ));
    }
}
