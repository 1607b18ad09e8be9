//! The 22-channel feature stack derived from a verification attempt, and the
//! crop-plus-noise augmentation applied during training.
//!
//! Each feature is a 3-component series, 66 scalar rows total: raw sensor
//! channels, Earth-frame rotations of them, derived linear acceleration, and
//! first differences and running integrals of the motion channels. The
//! roster is versioned and published as JSON next to serialized tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::num::{real, Real};
use crate::preprocess::VerificationAttempt;
use crate::types::{quat_rotate, Grid, QuatError, Quaternion, SensorKind};

pub const FEATURE_COUNT: usize = 22;
pub const FEATURE_ROWS: usize = FEATURE_COUNT * 3;
pub const ROSTER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("series lengths differ: {a} vs {b}")]
    GridMismatch { a: usize, b: usize },
    #[error("series of length {0} is too short to difference")]
    TooShort(usize),
    #[error("crop of {want} steps exceeds input of {have}")]
    CropTooLong { want: usize, have: usize },
    #[error("attempt lacks {0} samples")]
    MissingKind(SensorKind),
    #[error(transparent)]
    Quat(#[from] QuatError),
}

/// 66 x T feature stack for one attempt. Row layout follows `roster()`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<F> {
    pub grid: Grid<F>,
}

impl<F: Real> FeatureTensor<F> {
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// Scalar row for feature `f`, component `c`.
    pub fn row(&self, f: usize, c: usize) -> &[F] {
        self.grid.row(f * 3 + c)
    }
}

/// How one roster entry is produced from its source sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    None,
    RotateEarth,
    MinusGravity,
    Diff,
    RotateEarthDiff,
    Integral,
    RotateEarthIntegral,
    MinusGravityRotate,
    MinusGravityDiff,
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub sensor: SensorKind,
    pub transform: Transform,
}

/// The canonical feature list. Order is load-bearing: tensors index rows as
/// `feature * 3 + component`.
pub fn roster() -> [FeatureSpec; FEATURE_COUNT] {
    use SensorKind::*;
    use Transform::*;
    [
        FeatureSpec { name: "acc", sensor: Accelerometer, transform: None },
        FeatureSpec { name: "gyro", sensor: Gyroscope, transform: None },
        FeatureSpec { name: "mag", sensor: Magnetometer, transform: None },
        FeatureSpec { name: "rotvec_xyz", sensor: RotationVector, transform: None },
        FeatureSpec { name: "acc_earth", sensor: Accelerometer, transform: RotateEarth },
        FeatureSpec { name: "gyro_earth", sensor: Gyroscope, transform: RotateEarth },
        FeatureSpec { name: "mag_earth", sensor: Magnetometer, transform: RotateEarth },
        FeatureSpec { name: "linacc", sensor: Accelerometer, transform: MinusGravity },
        FeatureSpec { name: "linacc_earth", sensor: Accelerometer, transform: MinusGravityRotate },
        FeatureSpec { name: "acc_diff", sensor: Accelerometer, transform: Diff },
        FeatureSpec { name: "gyro_diff", sensor: Gyroscope, transform: Diff },
        FeatureSpec { name: "mag_diff", sensor: Magnetometer, transform: Diff },
        FeatureSpec { name: "acc_earth_diff", sensor: Accelerometer, transform: RotateEarthDiff },
        FeatureSpec { name: "gyro_earth_diff", sensor: Gyroscope, transform: RotateEarthDiff },
        FeatureSpec { name: "mag_earth_diff", sensor: Magnetometer, transform: RotateEarthDiff },
        FeatureSpec { name: "acc_int", sensor: Accelerometer, transform: Integral },
        FeatureSpec { name: "gyro_int", sensor: Gyroscope, transform: Integral },
        FeatureSpec { name: "mag_int", sensor: Magnetometer, transform: Integral },
        FeatureSpec { name: "acc_earth_int", sensor: Accelerometer, transform: RotateEarthIntegral },
        FeatureSpec { name: "gyro_earth_int", sensor: Gyroscope, transform: RotateEarthIntegral },
        FeatureSpec { name: "mag_earth_int", sensor: Magnetometer, transform: RotateEarthIntegral },
        FeatureSpec { name: "linacc_diff", sensor: Accelerometer, transform: MinusGravityDiff },
    ]
}

/// Machine-readable roster table (index, name, source sensor, transform
/// chain), for writing alongside serialized feature tensors.
pub fn roster_json() -> String {
    let chain = |t: Transform| -> Vec<&'static str> {
        match t {
            Transform::None => vec![],
            Transform::RotateEarth => vec!["rotate_earth"],
            Transform::MinusGravity => vec!["minus_gravity"],
            Transform::Diff => vec!["diff"],
            Transform::RotateEarthDiff => vec!["rotate_earth", "diff"],
            Transform::Integral => vec!["integral"],
            Transform::RotateEarthIntegral => vec!["rotate_earth", "integral"],
            Transform::MinusGravityRotate => vec!["minus_gravity", "rotate_earth"],
            Transform::MinusGravityDiff => vec!["minus_gravity", "diff"],
        }
    };
    let entries: Vec<serde_json::Value> = roster()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            serde_json::json!({
                "index": i,
                "name": f.name,
                "sensor": f.sensor.name(),
                "transforms": chain(f.transform),
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "roster_version": ROSTER_VERSION,
        "features": entries,
    }))
    .expect("static json")
}

// ---------------------------------------------------------------------------
// Elementary series transforms
// ---------------------------------------------------------------------------

/// Remove gravity from the accelerometer channels. When no gravity stream is
/// given it is estimated with an exponential moving average of the
/// accelerometer itself (alpha = 0.8, seeded with the first reading).
pub fn derive_linear_acceleration<F: Real>(
    acc: [&[F]; 3],
    gravity: Option<[&[F]; 3]>,
) -> Result<[Vec<F>; 3], FeatureError> {
    let len = acc[0].len();
    if acc.iter().any(|r| r.len() != len) {
        return Err(FeatureError::GridMismatch { a: len, b: acc[1].len() });
    }
    match gravity {
        Some(g) => {
            if g.iter().any(|r| r.len() != len) {
                return Err(FeatureError::GridMismatch { a: len, b: g[0].len() });
            }
            Ok([0, 1, 2].map(|c| acc[c].iter().zip(g[c]).map(|(&a, &b)| a - b).collect()))
        }
        None => {
            let alpha = real::<F>(0.8);
            Ok([0, 1, 2].map(|c| {
                let mut est = acc[c].first().copied().unwrap_or_else(F::zero);
                acc[c]
                    .iter()
                    .map(|&a| {
                        est = alpha * est + (F::one() - alpha) * a;
                        a - est
                    })
                    .collect()
            }))
        }
    }
}

/// First difference with the final element repeated, preserving length.
pub fn diff_feature<F: Real>(x: &[F]) -> Result<Vec<F>, FeatureError> {
    if x.len() < 2 {
        return Err(FeatureError::TooShort(x.len()));
    }
    let mut out: Vec<F> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let last = *out.last().expect("len >= 2");
    out.push(last);
    Ok(out)
}

/// Cumulative trapezoidal integral starting at zero.
pub fn integral_feature<F: Real>(x: &[F], dt: F) -> Vec<F> {
    let half = dt / real::<F>(2.0);
    let mut acc = F::zero();
    let mut out = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        if i > 0 {
            acc += half * (x[i - 1] + v);
        }
        out.push(acc);
        let _ = v;
    }
    out
}

// ---------------------------------------------------------------------------
// Tensor assembly
// ---------------------------------------------------------------------------

fn rotate_series<F: Real>(
    rows: [&[F]; 3],
    rotations: &[Quaternion<F>],
) -> Result<[Vec<F>; 3], FeatureError> {
    let len = rows[0].len();
    if rotations.len() != len {
        return Err(FeatureError::GridMismatch { a: len, b: rotations.len() });
    }
    let mut out = [Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)];
    for t in 0..len {
        let v = quat_rotate(&rotations[t], [rows[0][t], rows[1][t], rows[2][t]])?;
        for c in 0..3 {
            out[c].push(v[c]);
        }
    }
    Ok(out)
}

/// The per-timestep device-to-Earth rotations carried by an attempt's
/// rotation-vector channel.
pub fn attempt_rotations<F: Real>(
    attempt: &VerificationAttempt<F>,
) -> Result<Vec<Quaternion<F>>, FeatureError> {
    let off = attempt
        .kind_offset(SensorKind::RotationVector)
        .ok_or(FeatureError::MissingKind(SensorKind::RotationVector))?;
    let (x, y, z, w) = (
        attempt.grid.row(off),
        attempt.grid.row(off + 1),
        attempt.grid.row(off + 2),
        attempt.grid.row(off + 3),
    );
    Ok((0..attempt.grid.steps())
        .map(|t| Quaternion::new(x[t], y[t], z[t], w[t]))
        .collect())
}

fn sensor_rows<'a, F: Real>(
    attempt: &'a VerificationAttempt<F>,
    kind: SensorKind,
) -> Result<[&'a [F]; 3], FeatureError> {
    let off = attempt.kind_offset(kind).ok_or(FeatureError::MissingKind(kind))?;
    Ok([
        attempt.grid.row(off),
        attempt.grid.row(off + 1),
        attempt.grid.row(off + 2),
    ])
}

/// Assemble the 22-feature stack for one attempt. `rotations` must align
/// with the attempt grid, one quaternion per timestep.
pub fn build_feature_tensor<F: Real>(
    attempt: &VerificationAttempt<F>,
    rotations: &[Quaternion<F>],
) -> Result<FeatureTensor<F>, FeatureError> {
    let steps = attempt.grid.steps();
    if rotations.len() != steps {
        return Err(FeatureError::GridMismatch { a: steps, b: rotations.len() });
    }
    let dt = real::<F>(1.0 / attempt.rate_hz);

    let acc = sensor_rows(attempt, SensorKind::Accelerometer)?;
    let gyro = sensor_rows(attempt, SensorKind::Gyroscope)?;
    let mag = sensor_rows(attempt, SensorKind::Magnetometer)?;
    let gravity = attempt
        .kind_offset(SensorKind::Gravity)
        .map(|_| sensor_rows(attempt, SensorKind::Gravity))
        .transpose()?;
    let rot_off = attempt
        .kind_offset(SensorKind::RotationVector)
        .ok_or(FeatureError::MissingKind(SensorKind::RotationVector))?;

    let acc_earth = rotate_series(acc, rotations)?;
    let gyro_earth = rotate_series(gyro, rotations)?;
    let mag_earth = rotate_series(mag, rotations)?;
    let linacc = derive_linear_acceleration(acc, gravity)?;
    let linacc_earth = rotate_series([&linacc[0], &linacc[1], &linacc[2]], rotations)?;

    let as_refs = |v: &[Vec<F>; 3], c: usize| -> Vec<F> { v[c].clone() };
    let mut rows: Vec<Vec<F>> = Vec::with_capacity(FEATURE_ROWS);
    let mut push3 = |make: &mut dyn FnMut(usize) -> Result<Vec<F>, FeatureError>| -> Result<(), FeatureError> {
        for c in 0..3 {
            rows.push(make(c)?);
        }
        Ok(())
    };

    // Raw sensor channels, then the quaternion vector part.
    push3(&mut |c| Ok(acc[c].to_vec()))?;
    push3(&mut |c| Ok(gyro[c].to_vec()))?;
    push3(&mut |c| Ok(mag[c].to_vec()))?;
    push3(&mut |c| Ok(attempt.grid.row(rot_off + c).to_vec()))?;
    // Earth-frame rotations.
    push3(&mut |c| Ok(as_refs(&acc_earth, c)))?;
    push3(&mut |c| Ok(as_refs(&gyro_earth, c)))?;
    push3(&mut |c| Ok(as_refs(&mag_earth, c)))?;
    // Linear acceleration, device and Earth frame.
    push3(&mut |c| Ok(as_refs(&linacc, c)))?;
    push3(&mut |c| Ok(as_refs(&linacc_earth, c)))?;
    // First differences.
    push3(&mut |c| diff_feature(acc[c]))?;
    push3(&mut |c| diff_feature(gyro[c]))?;
    push3(&mut |c| diff_feature(mag[c]))?;
    push3(&mut |c| diff_feature(&acc_earth[c]))?;
    push3(&mut |c| diff_feature(&gyro_earth[c]))?;
    push3(&mut |c| diff_feature(&mag_earth[c]))?;
    // Running integrals.
    push3(&mut |c| Ok(integral_feature(acc[c], dt)))?;
    push3(&mut |c| Ok(integral_feature(gyro[c], dt)))?;
    push3(&mut |c| Ok(integral_feature(mag[c], dt)))?;
    push3(&mut |c| Ok(integral_feature(&acc_earth[c], dt)))?;
    push3(&mut |c| Ok(integral_feature(&gyro_earth[c], dt)))?;
    push3(&mut |c| Ok(integral_feature(&mag_earth[c], dt)))?;
    // Difference of linear acceleration.
    push3(&mut |c| diff_feature(&linacc[c]))?;

    debug_assert_eq!(rows.len(), FEATURE_ROWS);
    Ok(FeatureTensor { grid: Grid::from_rows(rows) })
}

/// Convenience: rotations taken from the attempt's own rotation-vector rows.
pub fn attempt_features<F: Real>(
    attempt: &VerificationAttempt<F>,
) -> Result<FeatureTensor<F>, FeatureError> {
    let rotations = attempt_rotations(attempt)?;
    build_feature_tensor(attempt, &rotations)
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    /// Output length in timesteps; 1 s at the 50 Hz grid.
    pub crop_len: usize,
    /// Per-row noise sigma as a fraction of that row's standard deviation.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl AugmentConfig {
    pub fn new(seed: u64) -> Self {
        AugmentConfig {
            crop_len: 50,
            noise_fraction: 0.05,
            seed,
        }
    }
}

fn row_std<F: Real>(row: &[F]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().map(|v| v.to_f64c()).sum::<f64>() / n;
    let var = row.iter().map(|v| (v.to_f64c() - mean).powi(2)).sum::<f64>() / n;
    var.sqrt()
}

/// Random contiguous crop plus per-row Gaussian noise scaled by the input
/// row's standard deviation. With `noise_fraction` 0 the output is an exact
/// slice of the input. Deterministic per seed.
pub fn augment<F: Real>(t: &FeatureTensor<F>, cfg: &AugmentConfig) -> Result<FeatureTensor<F>, FeatureError> {
    let steps = t.grid.steps();
    if cfg.crop_len > steps {
        return Err(FeatureError::CropTooLong { want: cfg.crop_len, have: steps });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offset = rng.random_range(0..=steps - cfg.crop_len);
    let mut grid = t.grid.crop(offset, cfg.crop_len);
    if cfg.noise_fraction > 0.0 {
        for r in 0..grid.rows() {
            let sigma = cfg.noise_fraction * row_std(t.grid.row(r));
            if sigma > 0.0 {
                let dist = Normal::new(0.0, sigma).expect("finite sigma");
                for v in grid.row_mut(r) {
                    *v = *v + real::<F>(dist.sample(&mut rng));
                }
            }
        }
    }
    Ok(FeatureTensor { grid })
}

/// Deterministic evaluation crop: the trailing `crop_len` steps, no noise.
/// Idempotent once the input is already that short.
pub fn eval_crop<F: Real>(t: &FeatureTensor<F>, crop_len: usize) -> Result<FeatureTensor<F>, FeatureError> {
    let steps = t.grid.steps();
    if crop_len > steps {
        return Err(FeatureError::CropTooLong { want: crop_len, have: steps });
    }
    Ok(FeatureTensor { grid: t.grid.crop(steps - crop_len, crop_len) })
}
