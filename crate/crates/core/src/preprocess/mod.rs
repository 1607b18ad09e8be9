//! Window extraction for the two training stages.
//!
//! Stage one consumes 3 s pattern windows: positives end at each unlock,
//! negatives tile the screen-off stretches. Stage two consumes 1.5 s
//! verification attempts ending at each unlock, grouped into six collection
//! clusters. Both stages regrid raw samples to a fixed 50 Hz clock.

mod container;

pub use container::{
    attempts_from_tensor_file, attempts_to_tensor_file, read_tensor_file, windows_from_tensor_file,
    windows_to_tensor_file, write_tensor_file, TensorFile, TENSOR_MAGIC, TENSOR_VERSION,
};

use thiserror::Error;

use crate::num::Real;
use crate::types::{
    resample_to_grid, DeviceEvent, EventKind, Grid, SensorKind, SensorRecording, UserId, Window,
    WindowLabel, NS_PER_SEC,
};

/// Output grid rate for both window kinds.
pub const WINDOW_RATE_HZ: f64 = 50.0;
/// 3 s pattern window length on the 50 Hz grid.
pub const PATTERN_STEPS: usize = 150;
/// 1.5 s verification window length on the 50 Hz grid.
pub const VERIFY_STEPS: usize = 75;

const PATTERN_SPAN_NS: i64 = 3 * NS_PER_SEC;
const VERIFY_SPAN_NS: i64 = 3 * NS_PER_SEC / 2;
const CLUSTER_GAP_NS: i64 = 30 * NS_PER_SEC;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("recording has no events")]
    NoEvents,
    #[error("need at least 6 attempts to cluster, got {got}")]
    TooFewAttempts { got: usize },
    #[error("tensor container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct PatternConfig {
    pub rate_hz: f64,
    /// Raw readings each sensor must have inside a 3 s window.
    pub min_readings: usize,
    /// A window is motionless when every linear-acceleration reading in it
    /// stays below this on all three axes (m/s²).
    pub motionless_eps: f64,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            rate_hz: WINDOW_RATE_HZ,
            min_readings: 100,
            motionless_eps: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub rate_hz: f64,
    /// Nominal raw sampling rate, used to size the expected reading count.
    pub nominal_rate_hz: f64,
    /// Minimum fraction of expected raw readings a segment must retain.
    pub min_fraction: f64,
}

impl VerifyConfig {
    pub fn new(nominal_rate_hz: f64) -> Self {
        VerifyConfig {
            rate_hz: WINDOW_RATE_HZ,
            nominal_rate_hz,
            min_fraction: 2.0 / 3.0,
        }
    }
}

/// 3 s windows for unlock-pattern training, all sensors stacked.
#[derive(Debug, Clone)]
pub struct PatternWindowSet<F> {
    pub user_id: UserId,
    pub positives: Vec<Window<F>>,
    pub negatives: Vec<Window<F>>,
}

/// The trailing 1.5 s of one unlock, regridded; cluster set later.
#[derive(Debug, Clone)]
pub struct VerificationAttempt<F> {
    pub user_id: UserId,
    pub cluster: Option<u8>,
    pub rate_hz: f64,
    pub end_ts: i64,
    pub kinds: Vec<SensorKind>,
    pub grid: Grid<F>,
}

impl<F> VerificationAttempt<F> {
    /// Row offset of the first component of `kind`, if present.
    pub fn kind_offset(&self, kind: SensorKind) -> Option<usize> {
        let mut off = 0;
        for &k in &self.kinds {
            if k == kind {
                return Some(off);
            }
            off += k.component_count();
        }
        None
    }
}

/// Resample every present sensor onto the grid ending at `end_ts`. The grid
/// starts one step after `end_ts - span_ns` so a 3 s span yields exactly 150
/// points, the last one at `end_ts`.
fn regrid<F: Real>(
    rec: &SensorRecording,
    kinds: &[SensorKind],
    rate_hz: f64,
    end_ts: i64,
    span_ns: i64,
) -> Option<Grid<F>> {
    let step_ns = (NS_PER_SEC as f64 / rate_hz).round() as i64;
    let t0 = end_ts - span_ns + step_ns;
    let mut rows = Vec::new();
    for &kind in kinds {
        let r = resample_to_grid::<F>(rec.samples(kind), rate_hz, (t0, end_ts)).ok()?;
        rows.extend(r);
    }
    Some(Grid::from_rows(rows))
}

fn counts_ok(rec: &SensorRecording, kinds: &[SensorKind], end_ts: i64, span_ns: i64, min: usize) -> bool {
    kinds
        .iter()
        .all(|&k| rec.count_in_span(k, end_ts - span_ns, end_ts) >= min)
}

/// True when every raw linear-acceleration reading in the span is below eps
/// on all axes. Absent or empty linear acceleration counts as moving.
fn is_motionless(rec: &SensorRecording, end_ts: i64, span_ns: i64, eps: f64) -> bool {
    let series = rec.samples(SensorKind::LinearAcceleration);
    let lo = series.partition_point(|s| s.timestamp_ns <= end_ts - span_ns);
    let hi = series.partition_point(|s| s.timestamp_ns <= end_ts);
    if lo == hi {
        return false;
    }
    series[lo..hi]
        .iter()
        .all(|s| s.values().iter().all(|v| v.abs() < eps))
}

/// Cut pattern-training windows from one recording.
///
/// Positives: the 3 s ending at each unlock, kept when every sensor has at
/// least `min_readings` raw readings inside. Negatives: within each interval
/// from a screen-off to the next screen-on or unlock, drop the final 3 s,
/// tile the rest with non-overlapping 3 s windows, and discard motionless
/// tiles; the reading-count rule applies identically.
pub fn extract_pattern_windows<F: Real>(
    rec: &SensorRecording,
    cfg: &PatternConfig,
) -> Result<PatternWindowSet<F>, PreprocessError> {
    if rec.events().is_empty() {
        return Err(PreprocessError::NoEvents);
    }
    let kinds = rec.kinds();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();

    for ev in rec.events() {
        if ev.kind != EventKind::UserPresent {
            continue;
        }
        let end = ev.timestamp_ns;
        if !counts_ok(rec, &kinds, end, PATTERN_SPAN_NS, cfg.min_readings) {
            continue;
        }
        if let Some(grid) = regrid::<F>(rec, &kinds, cfg.rate_hz, end, PATTERN_SPAN_NS) {
            positives.push(Window::new(
                rec.user_id().clone(),
                WindowLabel::UnlockPositive,
                cfg.rate_hz,
                end,
                kinds.clone(),
                grid,
            ));
        }
    }

    // Screen-off intervals: from the first screen-off after activity to the
    // next screen-on or unlock. A trailing screen-off with no terminator
    // yields nothing.
    let mut open_off: Option<i64> = None;
    for ev in rec.events() {
        match ev.kind {
            EventKind::ScreenOff => {
                if open_off.is_none() {
                    open_off = Some(ev.timestamp_ns);
                }
            }
            EventKind::ScreenOn | EventKind::UserPresent => {
                if let Some(t_off) = open_off.take() {
                    let usable_end = ev.timestamp_ns - PATTERN_SPAN_NS;
                    let mut end = t_off + PATTERN_SPAN_NS;
                    while end <= usable_end {
                        if counts_ok(rec, &kinds, end, PATTERN_SPAN_NS, cfg.min_readings)
                            && !is_motionless(rec, end, PATTERN_SPAN_NS, cfg.motionless_eps)
                        {
                            if let Some(grid) = regrid::<F>(rec, &kinds, cfg.rate_hz, end, PATTERN_SPAN_NS)
                            {
                                negatives.push(Window::new(
                                    rec.user_id().clone(),
                                    WindowLabel::UnlockNegative,
                                    cfg.rate_hz,
                                    end,
                                    kinds.clone(),
                                    grid,
                                ));
                            }
                        }
                        end += PATTERN_SPAN_NS;
                    }
                }
            }
        }
    }

    Ok(PatternWindowSet {
        user_id: rec.user_id().clone(),
        positives,
        negatives,
    })
}

/// Cut the trailing 1.5 s before each unlock, regridded to 75 steps.
/// Attempts with fewer than `min_fraction` of the expected raw readings on
/// any sensor are dropped.
pub fn extract_verification_attempts<F: Real>(
    rec: &SensorRecording,
    cfg: &VerifyConfig,
) -> Vec<VerificationAttempt<F>> {
    let kinds = rec.kinds();
    let expected = cfg.nominal_rate_hz * (VERIFY_SPAN_NS as f64 / NS_PER_SEC as f64);
    let min_count = (expected * cfg.min_fraction).ceil() as usize;
    let mut out = Vec::new();
    for ev in rec.events() {
        if ev.kind != EventKind::UserPresent {
            continue;
        }
        let end = ev.timestamp_ns;
        if !counts_ok(rec, &kinds, end, VERIFY_SPAN_NS, min_count) {
            continue;
        }
        if let Some(grid) = regrid::<F>(rec, &kinds, cfg.rate_hz, end, VERIFY_SPAN_NS) {
            out.push(VerificationAttempt {
                user_id: rec.user_id().clone(),
                cluster: None,
                rate_hz: cfg.rate_hz,
                end_ts: end,
                kinds: kinds.clone(),
                grid,
            });
        }
    }
    out
}

/// Assign each attempt a cluster index in 1..=6.
///
/// Primary rule: a gap of more than 30 s between consecutive unlock events
/// starts a new cluster. When that does not yield exactly six groups, fall
/// back to six equal consecutive blocks (sizes differing by at most one so
/// every cluster is populated).
pub fn cluster_attempts<F: Real>(
    mut attempts: Vec<VerificationAttempt<F>>,
    events: &[DeviceEvent],
) -> Result<Vec<VerificationAttempt<F>>, PreprocessError> {
    let n = attempts.len();
    if n < 6 {
        return Err(PreprocessError::TooFewAttempts { got: n });
    }
    debug_assert!(attempts.windows(2).all(|w| w[0].end_ts <= w[1].end_ts));

    let unlocks: Vec<i64> = events
        .iter()
        .filter(|e| e.kind == EventKind::UserPresent)
        .map(|e| e.timestamp_ns)
        .collect();
    let bounds: Vec<i64> = unlocks
        .windows(2)
        .filter(|w| w[1] - w[0] > CLUSTER_GAP_NS)
        .map(|w| w[1])
        .collect();

    if bounds.len() + 1 == 6 {
        for a in &mut attempts {
            let seg = bounds.partition_point(|&b| b <= a.end_ts);
            a.cluster = Some(seg as u8 + 1);
        }
    } else {
        let base = n / 6;
        let rem = n % 6;
        let mut idx = 0usize;
        for c in 0..6u8 {
            let size = base + usize::from((c as usize) < rem);
            for a in &mut attempts[idx..idx + size] {
                a.cluster = Some(c + 1);
            }
            idx += size;
        }
        debug_assert_eq!(idx, n);
    }
    Ok(attempts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use crate::types::SensorSample;

    /// Uniform samples of one kind over [t0, t1) seconds at `rate` Hz with a
    /// constant value.
    fn series(kind: SensorKind, t0: f64, t1: f64, rate: f64, value: [f64; 4]) -> Vec<SensorSample> {
        let step = 1.0 / rate;
        let mut out = Vec::new();
        let mut t = t0;
        while t < t1 - 1e-12 {
            let ts = (t * NS_PER_SEC as f64).round() as i64;
            out.push(SensorSample::new(ts, kind, &value[..kind.component_count()]).unwrap());
            t += step;
        }
        out
    }

    fn merge(into: &mut BTreeMap<SensorKind, Vec<SensorSample>>, more: Vec<SensorSample>) {
        for s in more {
            into.entry(s.kind).or_default().push(s);
        }
    }

    /// Recording with all six sensors at `rate` over [0, dur) s. Linear
    /// acceleration is `linacc` throughout; other channels constant.
    fn flat_recording(dur: f64, rate: f64, linacc: f64, events: Vec<DeviceEvent>) -> SensorRecording {
        let mut m = BTreeMap::new();
        for kind in SensorKind::ALL {
            let v = match kind {
                SensorKind::LinearAcceleration => [linacc, linacc, linacc, 0.0],
                SensorKind::RotationVector => [0.0, 0.0, 0.0, 1.0],
                _ => [1.0, 2.0, 3.0, 0.0],
            };
            merge(&mut m, series(kind, 0.0, dur, rate, v));
        }
        SensorRecording::new("u".into(), "d".into(), m, events).unwrap()
    }

    fn ev(t: f64, kind: EventKind) -> DeviceEvent {
        DeviceEvent {
            timestamp_ns: (t * NS_PER_SEC as f64).round() as i64,
            kind,
        }
    }

    #[test]
    fn positive_window_shape_and_count() {
        let rec = flat_recording(20.0, 100.0, 0.5, vec![ev(5.0, EventKind::UserPresent), ev(15.0, EventKind::UserPresent)]);
        let set = extract_pattern_windows::<f64>(&rec, &PatternConfig::default()).unwrap();
        assert_eq!(set.positives.len(), 2);
        for w in &set.positives {
            assert_eq!(w.grid.rows(), 19);
            assert_eq!(w.grid.steps(), PATTERN_STEPS);
            assert_eq!(w.label, WindowLabel::UnlockPositive);
        }
    }

    #[test]
    fn sparse_sensor_drops_positive() {
        // Gyroscope at 26 Hz gives 78 readings in 3 s, below the 100 floor.
        let mut m = BTreeMap::new();
        for kind in SensorKind::ALL {
            let rate = if kind == SensorKind::Gyroscope { 26.0 } else { 100.0 };
            let v = if kind == SensorKind::RotationVector {
                [0.0, 0.0, 0.0, 1.0]
            } else {
                [0.1, 0.1, 0.1, 0.0]
            };
            merge(&mut m, series(kind, 0.0, 10.0, rate, v));
        }
        let rec = SensorRecording::new("u".into(), "d".into(), m, vec![ev(8.0, EventKind::UserPresent)]).unwrap();
        let set = extract_pattern_windows::<f64>(&rec, &PatternConfig::default()).unwrap();
        assert!(set.positives.is_empty());
    }

    #[test]
    fn three_second_interval_yields_no_negatives() {
        let rec = flat_recording(
            20.0,
            100.0,
            0.5,
            vec![ev(4.0, EventKind::ScreenOff), ev(7.0, EventKind::ScreenOn)],
        );
        let set = extract_pattern_windows::<f64>(&rec, &PatternConfig::default()).unwrap();
        assert!(set.negatives.is_empty());
    }

    #[test]
    fn nine_and_a_half_second_interval_yields_two_negatives() {
        let rec = flat_recording(
            20.0,
            100.0,
            0.5,
            vec![ev(2.0, EventKind::ScreenOff), ev(11.5, EventKind::ScreenOn)],
        );
        let set = extract_pattern_windows::<f64>(&rec, &PatternConfig::default()).unwrap();
        assert_eq!(set.negatives.len(), 2);
        assert_eq!(set.negatives[0].end_ts, 5 * NS_PER_SEC);
        assert_eq!(set.negatives[1].end_ts, 8 * NS_PER_SEC);
    }

    #[test]
    fn motionless_tiles_are_eliminated() {
        let rec = flat_recording(
            20.0,
            100.0,
            5e-4,
            vec![ev(2.0, EventKind::ScreenOff), ev(11.5, EventKind::ScreenOn)],
        );
        let set = extract_pattern_windows::<f64>(&rec, &PatternConfig::default()).unwrap();
        assert!(set.negatives.is_empty());
    }

    #[test]
    fn no_events_is_an_error() {
        let rec = flat_recording(5.0, 100.0, 0.5, vec![]);
        assert!(matches!(
            extract_pattern_windows::<f64>(&rec, &PatternConfig::default()),
            Err(PreprocessError::NoEvents)
        ));
    }

    #[test]
    fn verification_attempt_is_75_steps() {
        let rec = flat_recording(10.0, 100.0, 0.5, vec![ev(8.0, EventKind::UserPresent)]);
        let attempts = extract_verification_attempts::<f64>(&rec, &VerifyConfig::new(100.0));
        assert_eq!(attempts.len(), 1);
        assert_eq!(attempts[0].grid.steps(), VERIFY_STEPS);
        assert_eq!(attempts[0].grid.rows(), 19);
        assert_eq!(attempts[0].cluster, None);
    }

    #[test]
    fn empty_segment_drops_attempt() {
        // Samples stop at 5 s; the unlock at 9 s has nothing in its last 1.5 s.
        let rec = flat_recording(5.0, 100.0, 0.5, vec![ev(9.0, EventKind::UserPresent)]);
        let attempts = extract_verification_attempts::<f64>(&rec, &VerifyConfig::new(100.0));
        assert!(attempts.is_empty());
    }

    #[test]
    fn low_reading_count_drops_attempt() {
        // 60 Hz raw against a 100 Hz nominal rate: 90 readings < 100 floor.
        let mut m = BTreeMap::new();
        for kind in SensorKind::ALL {
            let v = if kind == SensorKind::RotationVector {
                [0.0, 0.0, 0.0, 1.0]
            } else {
                [0.1, 0.1, 0.1, 0.0]
            };
            merge(&mut m, series(kind, 0.0, 10.0, 60.0, v));
        }
        let rec = SensorRecording::new("u".into(), "d".into(), m, vec![ev(8.0, EventKind::UserPresent)]).unwrap();
        let attempts = extract_verification_attempts::<f64>(&rec, &VerifyConfig::new(100.0));
        assert!(attempts.is_empty());
    }

    fn dummy_attempt(t_s: f64) -> VerificationAttempt<f64> {
        VerificationAttempt {
            user_id: "u".into(),
            cluster: None,
            rate_hz: 50.0,
            end_ts: (t_s * NS_PER_SEC as f64).round() as i64,
            kinds: vec![SensorKind::Accelerometer],
            grid: Grid::zeros(3, VERIFY_STEPS),
        }
    }

    #[test]
    fn gap_rule_clusters_two_per_location() {
        // 12 unlocks, a 60 s rest after every second one.
        let mut times = Vec::new();
        let mut t = 10.0;
        for i in 0..12 {
            times.push(t);
            t += if i % 2 == 1 { 60.0 } else { 5.0 };
        }
        let events: Vec<DeviceEvent> = times.iter().map(|&t| ev(t, EventKind::UserPresent)).collect();
        let attempts: Vec<_> = times.iter().map(|&t| dummy_attempt(t)).collect();
        let out = cluster_attempts(attempts, &events).unwrap();
        let clusters: Vec<u8> = out.iter().map(|a| a.cluster.unwrap()).collect();
        assert_eq!(clusters, vec![1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6]);
    }

    #[test]
    fn no_gaps_falls_back_to_equal_blocks() {
        let times: Vec<f64> = (0..30).map(|i| 5.0 + i as f64 * 4.0).collect();
        let events: Vec<DeviceEvent> = times.iter().map(|&t| ev(t, EventKind::UserPresent)).collect();
        let attempts: Vec<_> = times.iter().map(|&t| dummy_attempt(t)).collect();
        let out = cluster_attempts(attempts, &events).unwrap();
        for c in 1..=6u8 {
            assert_eq!(out.iter().filter(|a| a.cluster == Some(c)).count(), 5);
        }
        // Cluster indices never decrease over time.
        assert!(out.windows(2).all(|w| w[0].cluster <= w[1].cluster));
    }

    #[test]
    fn wrong_gap_count_falls_back() {
        // Two rests only: the gap rule would make 3 clusters, so blocks win.
        let mut times = Vec::new();
        let mut t = 5.0;
        for i in 0..12 {
            times.push(t);
            t += if i == 3 || i == 7 { 45.0 } else { 4.0 };
        }
        let events: Vec<DeviceEvent> = times.iter().map(|&t| ev(t, EventKind::UserPresent)).collect();
        let attempts: Vec<_> = times.iter().map(|&t| dummy_attempt(t)).collect();
        let out = cluster_attempts(attempts, &events).unwrap();
        for c in 1..=6u8 {
            assert_eq!(out.iter().filter(|a| a.cluster == Some(c)).count(), 2);
        }
    }

    #[test]
    fn too_few_attempts_is_an_error() {
        let attempts: Vec<_> = (0..5).map(|i| dummy_attempt(i as f64)).collect();
        let events: Vec<DeviceEvent> = (0..5).map(|i| ev(i as f64, EventKind::UserPresent)).collect();
        assert!(matches!(
            cluster_attempts(attempts, &events),
            Err(PreprocessError::TooFewAttempts { got: 5 })
        ));
    }
}
