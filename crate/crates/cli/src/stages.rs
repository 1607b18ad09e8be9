//! Data-producing stages: dataset synthesis, window/attempt extraction,
//! and feature generation. Per-user work is independent, so these stages
//! fan out across the configured worker threads; outputs are one file per
//! user and do not depend on scheduling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imu_auth::features::attempt_features;
use imu_auth::ingest::{
    synth_all_motions, synth_specific_motion, AllMotionsConfig, DatasetManifest,
    SpecificMotionConfig, SynthUserProfile,
};
use imu_auth::pipeline::{save_user_features, UserFeatures};
use imu_auth::preprocess::{
    attempts_from_tensor_file, attempts_to_tensor_file, cluster_attempts,
    extract_pattern_windows, extract_verification_attempts, read_tensor_file, write_tensor_file,
    PatternConfig, VerifyConfig, WINDOW_RATE_HZ,
};
use imu_auth::types::UserId;

use crate::config::CliError;
use crate::layout::{self, StageIndex};

/// Run `f` over the items on up to `threads` workers, preserving item
/// order in the result. Errors surface after all workers finish.
fn run_per_user<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync,
{
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut slots: Vec<Option<Result<R, CliError>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    std::thread::scope(|scope| {
        for (part, out) in items.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(|| {
                for (item, slot) in part.iter().zip(out.iter_mut()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("worker filled every slot")).collect()
}

pub enum SynthKind {
    Specific { lifts_per_location: usize },
    AllMotions { days: usize, unlocks_per_day: usize },
}

pub fn synth(
    out: &Path,
    kind: SynthKind,
    users: usize,
    rate_hz: f64,
    seed: u64,
) -> Result<(), CliError> {
    if users == 0 {
        return Err(CliError::Usage("--users must be at least 1".into()));
    }
    layout::ensure_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<SynthUserProfile> = (0..users)
        .map(|i| SynthUserProfile::generate(format!("user{i:02}").as_str().into(), rng.random()))
        .collect();
    let manifest = match kind {
        SynthKind::Specific { lifts_per_location } => {
            let cfg = SpecificMotionConfig {
                lifts_per_location,
                rate_hz,
                rest_range_s: (31.5, 36.0),
                ..SpecificMotionConfig::default()
            };
            synth_specific_motion(out, &profiles, &cfg)?
        }
        SynthKind::AllMotions { days, unlocks_per_day } => {
            let cfg = AllMotionsConfig { days, unlocks_per_day, rate_hz, ..AllMotionsConfig::default() };
            synth_all_motions(out, &profiles, &cfg)?
        }
    };
    println!(
        "synthesized {} recordings at {rate_hz} Hz into {}",
        manifest.entries.len(),
        out.display()
    );
    Ok(())
}

fn load_manifest(data: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(&data.join("manifest.json"))?)
}

/// Shared driver for both preprocess stages: maps each recording to a
/// tensor file, then writes the directory index.
fn preprocess_common<F>(data: &Path, out: &Path, threads: usize, stage: F) -> Result<StageIndex, CliError>
where
    F: Fn(&imu_auth::types::SensorRecording) -> Result<(String, imu_auth::preprocess::TensorFile), CliError>
        + Sync,
{
    let manifest = load_manifest(data)?;
    if manifest.entries.is_empty() {
        return Err(CliError::Data("dataset manifest lists no users".into()));
    }
    layout::ensure_dir(out)?;
    let kind_lists = run_per_user(&manifest.entries, threads, |entry| {
        let rec = manifest.load_recording(entry)?;
        let kinds: Vec<String> = rec.kinds().iter().map(|k| k.name().to_string()).collect();
        let (file_name, tf) = stage(&rec)?;
        write_tensor_file(&out.join(file_name), &tf)?;
        Ok(kinds)
    })?;
    if kind_lists.iter().any(|k| *k != kind_lists[0]) {
        return Err(CliError::Data("recordings disagree on their sensor sets".into()));
    }
    let index = StageIndex {
        rate_hz: WINDOW_RATE_HZ,
        kinds: kind_lists[0].clone(),
        users: manifest.entries.iter().map(|e| e.user_id.clone()).collect(),
    };
    layout::write_json(&out.join(layout::INDEX_FILE), &index)?;
    Ok(index)
}

pub fn preprocess_patterns(data: &Path, out: &Path, threads: usize) -> Result<(), CliError> {
    let index = preprocess_common(data, out, threads, |rec| {
        let set = extract_pattern_windows::<f32>(rec, &PatternConfig::default())?;
        if set.positives.is_empty() || set.negatives.is_empty() {
            return Err(CliError::Data(format!(
                "user {}: need both positive and negative windows, got {}/{}",
                rec.user_id().0,
                set.positives.len(),
                set.negatives.len()
            )));
        }
        let mut windows = set.positives;
        windows.extend(set.negatives);
        let tf = imu_auth::preprocess::windows_to_tensor_file(&windows)?;
        Ok((layout::windows_file(rec.user_id()), tf))
    })?;
    println!("extracted pattern windows for {} users into {}", index.users.len(), out.display());
    Ok(())
}

pub fn preprocess_verify(data: &Path, out: &Path, threads: usize) -> Result<(), CliError> {
    let manifest = load_manifest(data)?;
    let nominal = manifest.rate_hint_hz;
    let index = preprocess_common(data, out, threads, |rec| {
        let attempts = extract_verification_attempts::<f32>(rec, &VerifyConfig::new(nominal));
        let clustered = cluster_attempts(attempts, rec.events())?;
        let tf = attempts_to_tensor_file(&clustered)?;
        Ok((layout::attempts_file(rec.user_id()), tf))
    })?;
    println!(
        "extracted clustered attempts for {} users into {}",
        index.users.len(),
        out.display()
    );
    Ok(())
}

pub fn features(attempts_dir: &Path, out: &Path, threads: usize) -> Result<(), CliError> {
    let index: StageIndex = layout::read_json(&attempts_dir.join(layout::INDEX_FILE))?;
    let kinds = index.sensor_kinds()?;
    layout::ensure_dir(out)?;
    let counts = run_per_user(&index.users, threads, |user| {
        let tf = read_tensor_file(&attempts_dir.join(layout::attempts_file(user)))?;
        let attempts = attempts_from_tensor_file(user, index.rate_hz, &kinds, &tf)?;
        let mut tensors = Vec::with_capacity(attempts.len());
        let mut clusters = Vec::with_capacity(attempts.len());
        for a in &attempts {
            tensors.push(attempt_features(a)?);
            clusters.push(a.cluster.expect("container stores only clustered attempts"));
        }
        let uf = UserFeatures { user_id: user.clone(), tensors, clusters };
        save_user_features(out, &uf)?;
        Ok(uf.tensors.len())
    })?;
    layout::write_json(&out.join(layout::INDEX_FILE), &index)?;
    let total: usize = counts.iter().sum();
    println!(
        "built {total} feature tensors for {} users into {}",
        index.users.len(),
        out.display()
    );
    Ok(())
}

/// Users listed in a features directory, in index order.
pub fn feature_users(features_dir: &Path) -> Result<Vec<UserId>, CliError> {
    let index: StageIndex = layout::read_json(&features_dir.join(layout::INDEX_FILE))?;
    Ok(index.users)
}
