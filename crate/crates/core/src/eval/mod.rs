//! Biometric verification statistics.
//!
//! Score polarity is fixed across the crate: higher means more genuine.
//! Acceptance at a threshold tau is score >= tau on both sides, which makes
//! reported FAR conservative (never understated).

pub mod report;

use rand::Rng;
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no genuine scores")]
    EmptyGenuine,
    #[error("no impostor scores")]
    EmptyImpostor,
    #[error("score is not finite")]
    NonFinite,
    #[error("rate {0} outside the valid range")]
    BadRate(f64),
}

/// Genuine and impostor score lists for one verification experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet<F> {
    genuine: Vec<F>,
    impostor: Vec<F>,
}

impl<F: Real> ScoreSet<F> {
    pub fn new(genuine: Vec<F>, impostor: Vec<F>) -> Result<Self, EvalError> {
        if genuine.iter().chain(&impostor).any(|s| !s.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(ScoreSet { genuine, impostor })
    }

    pub fn genuine(&self) -> &[F] {
        &self.genuine
    }

    pub fn impostor(&self) -> &[F] {
        &self.impostor
    }
}

/// Ceiling that first snaps values within 1e-9 relative distance of an
/// integer. Rates like 1/50000 are not exactly representable, so a plain
/// ceil would overshoot quotients that are integers mathematically.
pub fn snap_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Rank-based (Mann-Whitney) ROC-AUC with half credit for ties.
pub fn roc_auc<F: Real>(s: &ScoreSet<F>) -> Result<f64, EvalError> {
    if s.genuine.is_empty() {
        return Err(EvalError::EmptyGenuine);
    }
    if s.impostor.is_empty() {
        return Err(EvalError::EmptyImpostor);
    }
    let mut all: Vec<(F, bool)> = s
        .genuine
        .iter()
        .map(|&v| (v, true))
        .chain(s.impostor.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = all.len();
    let mut rank_sum_genuine = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the average.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_genuine += avg_rank;
            }
        }
        i = j + 1;
    }
    let ng = s.genuine.len() as f64;
    let ni = s.impostor.len() as f64;
    Ok((rank_sum_genuine - ng * (ng + 1.0) / 2.0) / (ng * ni))
}

/// The highest threshold accepting at least `tar` of the genuine scores:
/// the k-th largest genuine value with k = ceil(tar * n).
pub fn threshold_at_tar<F: Real>(genuine: &[F], tar: f64) -> Result<F, EvalError> {
    if genuine.is_empty() {
        return Err(EvalError::EmptyGenuine);
    }
    if !(tar > 0.0 && tar <= 1.0) {
        return Err(EvalError::BadRate(tar));
    }
    let k = (snap_ceil(tar * genuine.len() as f64) as usize).clamp(1, genuine.len());
    let mut sorted = genuine.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sorted[k - 1])
}

/// Fraction of scores accepted (>= tau).
pub fn fraction_accepted<F: Real>(scores: &[F], tau: F) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&v| v >= tau).count() as f64 / scores.len() as f64
}

/// FAR at the threshold where `tar` of genuine attempts are accepted.
pub fn far_at_tar<F: Real>(s: &ScoreSet<F>, tar: f64) -> Result<f64, EvalError> {
    if s.impostor.is_empty() {
        return Err(EvalError::EmptyImpostor);
    }
    let tau = threshold_at_tar(&s.genuine, tar)?;
    Ok(fraction_accepted(&s.impostor, tau))
}

/// TAR at the loosest threshold keeping FAR at or below `far`. Returns 0
/// when no threshold over the observed scores satisfies the budget.
pub fn tar_at_far<F: Real>(s: &ScoreSet<F>, far: f64) -> Result<f64, EvalError> {
    if s.genuine.is_empty() {
        return Err(EvalError::EmptyGenuine);
    }
    if s.impostor.is_empty() {
        return Err(EvalError::EmptyImpostor);
    }
    if !(0.0..=1.0).contains(&far) {
        return Err(EvalError::BadRate(far));
    }
    let mut candidates: Vec<F> = s.genuine.iter().chain(&s.impostor).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut imp_sorted = s.impostor.clone();
    imp_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ni = imp_sorted.len() as f64;
    for &tau in &candidates {
        let below = imp_sorted.partition_point(|&v| v < tau);
        let far_here = (imp_sorted.len() - below) as f64 / ni;
        if far_here <= far {
            return Ok(fraction_accepted(&s.genuine, tau));
        }
    }
    Ok(0.0)
}

/// Comparisons needed so that the target error rate would produce at least
/// 30 errors: ceil(30 / rate). Input must lie strictly inside (0, 1).
pub fn rule_of_30(target_error_rate: f64) -> u64 {
    assert!(
        target_error_rate > 0.0 && target_error_rate < 1.0,
        "error rate must be in (0,1), got {target_error_rate}"
    );
    snap_ceil(30.0 / target_error_rate) as u64
}

/// Exact-fraction variant for rates given as num/den.
pub fn rule_of_30_fraction(num: u64, den: u64) -> u64 {
    assert!(num > 0 && num < den, "rate {num}/{den} must be in (0,1)");
    (30 * den).div_ceil(num)
}

/// Attempts per user needed for an impostor-comparison budget under full
/// cross-comparison of n users: ceil(target / (n * (n - 1))).
pub fn attempts_for_budget(n_users: u64, impostor_target: u64) -> u64 {
    assert!(n_users >= 2, "cross-comparison needs at least 2 users");
    impostor_target.div_ceil(n_users * (n_users - 1))
}

/// Denominator of the smallest nonzero FAR resolvable by cross-comparing n
/// users with m test attempts each: n * (n - 1) * m.
pub fn theoretical_far_denominator(n_users: u64, m: u64) -> u64 {
    assert!(n_users >= 2, "cross-comparison needs at least 2 users");
    assert!(m >= 1, "need at least one attempt per user");
    n_users * (n_users - 1) * m
}

pub fn theoretical_far(n_users: u64, m: u64) -> f64 {
    1.0 / theoretical_far_denominator(n_users, m) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapFar {
    pub mean: f64,
    pub std_dev: f64,
    pub iterations: usize,
}

/// Bootstrap FAR at a fixed TAR threshold: the threshold comes from the
/// fixed genuine scores once; each iteration resamples `draws` impostor
/// scores from the pool with replacement. Returns mean and population
/// standard deviation over iterations.
pub fn bootstrap_far_at_tar<F: Real>(
    genuine: &[F],
    impostor_pool: &[F],
    tar: f64,
    draws: usize,
    iterations: usize,
    rng: &mut impl Rng,
) -> Result<BootstrapFar, EvalError> {
    if impostor_pool.is_empty() {
        return Err(EvalError::EmptyImpostor);
    }
    assert!(draws > 0 && iterations > 0, "empty bootstrap");
    let tau = threshold_at_tar(genuine, tar)?;
    let mut fars = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut accepted = 0usize;
        for _ in 0..draws {
            let v = impostor_pool[rng.random_range(0..impostor_pool.len())];
            if v >= tau {
                accepted += 1;
            }
        }
        fars.push(accepted as f64 / draws as f64);
    }
    let mean = fars.iter().sum::<f64>() / iterations as f64;
    let var = fars.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / iterations as f64;
    Ok(BootstrapFar { mean, std_dev: var.sqrt(), iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(genuine: &[f64], impostor: &[f64]) -> ScoreSet<f64> {
        ScoreSet::new(genuine.to_vec(), impostor.to_vec()).unwrap()
    }

    #[test]
    fn auc_perfect_separation_is_one() {
        let s = set(&[0.8, 0.9, 1.0], &[0.1, 0.2]);
        assert_eq!(roc_auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn auc_identical_lists_is_half() {
        let s = set(&[0.3, 0.7], &[0.3, 0.7]);
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn auc_hand_pairwise_count() {
        // Pairs: (0.9 vs 0.5) wins, (0.4 vs 0.5) loses -> (1 + 0)/2.
        let s = set(&[0.9, 0.4], &[0.5]);
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn auc_requires_both_sides() {
        assert_eq!(roc_auc(&set(&[], &[0.1])).unwrap_err(), EvalError::EmptyGenuine);
        assert_eq!(roc_auc(&set(&[0.1], &[])).unwrap_err(), EvalError::EmptyImpostor);
    }

    #[test]
    fn far_zero_when_impostors_below_all_genuine() {
        let s = set(&[0.5, 0.6, 0.7], &[0.1, 0.2]);
        assert_eq!(far_at_tar(&s, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn far_hand_threshold() {
        let genuine: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let s = set(&genuine, &[0.15]);
        assert_eq!(threshold_at_tar(s.genuine(), 0.9).unwrap(), 0.2);
        assert_eq!(far_at_tar(&s, 0.9).unwrap(), 0.0);
        let s2 = set(&genuine, &[0.25]);
        assert_eq!(far_at_tar(&s2, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn far_matches_tar_on_identical_distributions() {
        // Same acceptance rule on both sides: at the TAR=90% threshold an
        // identically distributed impostor set is accepted at ~90% too.
        let vals: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let s = set(&vals, &vals);
        let far = far_at_tar(&s, 0.9).unwrap();
        assert!((far - 0.9).abs() < 2e-3, "far {far}");
    }

    #[test]
    fn tar_at_far_hand_cases() {
        let s = set(&[0.5, 0.6, 0.7], &[0.1, 0.2]);
        assert_eq!(tar_at_far(&s, 0.4).unwrap(), 1.0);
        // Single impostor at the top: far budget 0 forces rejecting all.
        let s2 = set(&[0.15], &(1..=10).map(|i| i as f64 / 10.0).collect::<Vec<_>>());
        assert_eq!(tar_at_far(&s2, 0.0).unwrap(), 0.0);
        assert_eq!(tar_at_far(&s2, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn tar_at_far_identical_distributions() {
        let vals: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let s = set(&vals, &vals);
        let tar = tar_at_far(&s, 0.1).unwrap();
        assert!((tar - 0.1).abs() < 2e-3, "tar {tar}");
    }

    #[test]
    fn rule_of_30_reproduces_planning_numbers() {
        assert_eq!(rule_of_30(1.0 / 50000.0), 1_500_000);
        assert_eq!(rule_of_30(0.1), 300);
        assert_eq!(rule_of_30(0.5), 60);
        assert_eq!(rule_of_30_fraction(1, 50000), 1_500_000);
        assert_eq!(rule_of_30_fraction(1, 10), 300);
    }

    #[test]
    fn budget_attempts_match_hand_arithmetic() {
        assert_eq!(attempts_for_budget(90, 1_500_000), 188);
        assert_eq!(attempts_for_budget(2, 2), 1);
        assert_eq!(attempts_for_budget(101, 1_500_000), 149);
    }

    #[test]
    fn theoretical_far_table_values() {
        let expected = [(60, 10620), (65, 12480), (70, 14490), (75, 16650), (80, 18960), (85, 21420)];
        for (n, den) in expected {
            assert_eq!(theoretical_far_denominator(n, 3), den);
            assert_eq!(theoretical_far(n, 3), 1.0 / den as f64);
        }
        assert_eq!(theoretical_far(2, 1), 0.5);
    }

    #[test]
    fn bootstrap_recovers_analytic_far() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // All genuine at 0.7 puts the threshold exactly there; impostors on
        // a uniform grid in (0,1) have 0.3 of their mass at or above it.
        let genuine = vec![0.7f64; 90];
        let pool: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 10_000.0).collect();
        let b = bootstrap_far_at_tar(&genuine, &pool, 0.9, 90, 2000, &mut rng).unwrap();
        assert!((b.mean - 0.3).abs() < 2.0 * b.std_dev + 1e-3, "mean {} sd {}", b.mean, b.std_dev);
        assert!(b.std_dev > 0.0);
    }
}
