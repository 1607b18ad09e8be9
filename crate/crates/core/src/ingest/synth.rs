//! Synthetic multi-user IMU datasets.
//!
//! Two generators mirror the two collection protocols: scripted table lifts
//! grouped into locations (specific motion) and free-living streams of idle,
//! carry, and unlock episodes (all motions). Signals come from a smooth lift
//! trajectory (quintic displacement profile, zero velocity and acceleration
//! at both ends) plus user-specific tremor harmonics and white sensor noise.
//! Users differ in lift duration, amplitude, direction, tremor spectrum, and
//! hold pose; nothing label-bearing is injected per user into the magnetic
//! environment, which is keyed to locations shared by everyone.
//!
//! Generation is a pure function of the profiles and config: same inputs,
//! same bytes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{
    write_recording_files, DatasetKind, DatasetManifest, IngestError, ManifestEntry,
};
use crate::types::{
    quat_rotate, DeviceEvent, EventKind, Quaternion, SensorKind, SensorRecording, SensorSample,
    UserId, NS_PER_SEC,
};

use super::csv::quantize9;

const T0_NS: i64 = NS_PER_SEC;
const GRAVITY: f64 = 9.81;
/// Geomagnetic field in the Earth frame, µT.
const B_EARTH: [f64; 3] = [22.0, 1.5, -43.0];

const ACC_SIGMA: f64 = 0.05;
const LINACC_SIGMA: f64 = 0.03;
const GYRO_SIGMA: f64 = 0.01;
const MAG_SIGMA: f64 = 0.5;
const ROTVEC_SIGMA: f64 = 0.002;
/// Sample timestamp jitter, +-1 ms at any nominal rate up to 250 Hz.
const JITTER_NS: i64 = 1_000_000;
/// Below 34 Hz a 3 s span cannot hold 100 readings.
const MIN_RATE_HZ: f64 = 34.0;

/// Per-user generation parameters. `generate` draws a plausible profile from
/// a seed; fields stay public so tests can pin exact values.
#[derive(Debug, Clone)]
pub struct SynthUserProfile {
    pub user_id: UserId,
    pub seed: u64,
    pub amplitude_scale: f64,
    pub lift_duration_mean_s: f64,
    pub lift_duration_sigma_s: f64,
    pub axis_phase: [f64; 3],
    /// Tremor harmonics, (frequency Hz, acceleration amplitude m/s²).
    pub tremor: Vec<(f64, f64)>,
    /// Unlock hold pose, intrinsic z-x-y angles.
    pub hold_yaw_rad: f64,
    pub hold_pitch_rad: f64,
    pub hold_roll_rad: f64,
    /// Earth-frame lift direction, normalized at use.
    pub lift_direction: [f64; 3],
}

impl SynthUserProfile {
    pub fn generate(user_id: UserId, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tremor = (0..3)
            .map(|_| (rng.random_range(2.0..8.0), rng.random_range(0.03..0.10)))
            .collect();
        SynthUserProfile {
            user_id,
            seed,
            amplitude_scale: rng.random_range(0.7..1.3),
            lift_duration_mean_s: rng.random_range(0.9..1.6),
            lift_duration_sigma_s: rng.random_range(0.05..0.12),
            axis_phase: [
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            ],
            tremor,
            hold_yaw_rad: rng.random_range(-PI..PI),
            hold_pitch_rad: rng.random_range(0.6..1.1),
            hold_roll_rad: rng.random_range(-0.2..0.2),
            lift_direction: [
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
                1.0,
            ],
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(0.5..=3.0).contains(&self.lift_duration_mean_s) {
            return Err(IngestError::Profile(format!(
                "lift duration mean {} outside [0.5, 3.0] s",
                self.lift_duration_mean_s
            )));
        }
        if self.lift_duration_sigma_s < 0.0 {
            return Err(IngestError::Profile("negative duration sigma".into()));
        }
        if self.amplitude_scale <= 0.0 {
            return Err(IngestError::Profile("amplitude scale must be positive".into()));
        }
        if self.tremor.iter().any(|&(f, w)| !(2.0..=8.0).contains(&f) || w < 0.0) {
            return Err(IngestError::Profile(
                "tremor harmonics must lie in 2..8 Hz with nonnegative weight".into(),
            ));
        }
        Ok(())
    }

    fn hold_pose(&self) -> Quaternion<f64> {
        let qz = Quaternion::from_axis_angle([0.0, 0.0, 1.0], self.hold_yaw_rad);
        let qx = Quaternion::from_axis_angle([1.0, 0.0, 0.0], self.hold_pitch_rad);
        let qy = Quaternion::from_axis_angle([0.0, 1.0, 0.0], self.hold_roll_rad);
        qz.mul(&qx).mul(&qy)
    }

    fn tremor_at(&self, offset: f64) -> Tremor {
        Tremor {
            harmonics: self.tremor.clone(),
            phase: self.axis_phase,
            offset,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpecificMotionConfig {
    pub locations: usize,
    pub lifts_per_location: usize,
    pub rate_hz: f64,
    /// Idle on the table between lifts, seconds.
    pub idle_range_s: (f64, f64),
    /// Rest between locations; the minimum must exceed the 30 s cluster gap.
    pub rest_range_s: (f64, f64),
}

impl Default for SpecificMotionConfig {
    fn default() -> Self {
        SpecificMotionConfig {
            locations: 6,
            lifts_per_location: 50,
            rate_hz: 100.0,
            idle_range_s: (2.0, 3.0),
            rest_range_s: (35.0, 110.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AllMotionsConfig {
    pub days: usize,
    pub unlocks_per_day: usize,
    pub rate_hz: f64,
    /// Idle before each carry segment, seconds.
    pub idle_range_s: (f64, f64),
    /// Carry (motion without unlock) before each lift, seconds.
    pub carry_range_s: (f64, f64),
    /// Screen-on usage after each unlock, seconds.
    pub usage_range_s: (f64, f64),
}

impl Default for AllMotionsConfig {
    fn default() -> Self {
        AllMotionsConfig {
            days: 1,
            unlocks_per_day: 10,
            rate_hz: 100.0,
            idle_range_s: (5.0, 9.0),
            carry_range_s: (9.0, 16.0),
            usage_range_s: (4.0, 7.0),
        }
    }
}

fn check_rate(rate_hz: f64) -> Result<(), IngestError> {
    if rate_hz < MIN_RATE_HZ {
        return Err(IngestError::Profile(format!(
            "sampling rate {rate_hz} Hz is below {MIN_RATE_HZ} Hz; 3 s windows would fall under 100 readings"
        )));
    }
    Ok(())
}

/// Hard-iron magnetic offset and table heading for a collection location.
/// Keyed only to the location index so every user sees the same environment.
fn location_environment(loc: usize) -> ([f64; 3], f64) {
    let mut rng =
        ChaCha8Rng::seed_from_u64(0xB0F1_E1D0 ^ (loc as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let off = [
        rng.random_range(-8.0..8.0),
        rng.random_range(-8.0..8.0),
        rng.random_range(-8.0..8.0),
    ];
    let yaw = rng.random_range(-PI..PI);
    (off, yaw)
}

// ---------------------------------------------------------------------------
// Continuous-time segment signals
// ---------------------------------------------------------------------------

/// Tremor harmonics evaluated per axis with fixed per-user phases.
#[derive(Clone)]
struct Tremor {
    harmonics: Vec<(f64, f64)>,
    phase: [f64; 3],
    offset: f64,
}

impl Tremor {
    fn eval(&self, t: f64) -> [f64; 3] {
        let mut a = [0.0; 3];
        for (ax, out) in a.iter_mut().enumerate() {
            for &(f, w) in &self.harmonics {
                *out += w * (2.0 * PI * f * (t + self.offset) + self.phase[ax]).sin();
            }
        }
        a
    }
}

/// Normalized displacement profile with zero velocity and acceleration at
/// both endpoints.
fn quintic_pos(tau: f64) -> f64 {
    tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

/// Second derivative of `quintic_pos` (per unit tau²).
fn quintic_acc(tau: f64) -> f64 {
    60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Ramp in and out over `ramp` seconds at the segment edges.
fn edge_env(t: f64, dur: f64, ramp: f64) -> f64 {
    smoothstep(t / ramp) * smoothstep((dur - t) / ramp)
}

type Pose = ([f64; 3], Quaternion<f64>);

fn idle_signal(q: Quaternion<f64>) -> impl Fn(f64) -> Pose {
    move |_t| ([0.0; 3], q)
}

/// Translation along `dir` (already scaled to path length, m) with the
/// quintic profile, orientation slerping `q_from` to `q_to` along it.
fn lift_signal(
    dir: [f64; 3],
    dur: f64,
    q_from: Quaternion<f64>,
    q_to: Quaternion<f64>,
    tremor: Tremor,
) -> impl Fn(f64) -> Pose {
    move |t| {
        let tau = (t / dur).clamp(0.0, 1.0);
        let s2 = quintic_acc(tau) / (dur * dur);
        let env = (PI * tau).sin().powi(2);
        let tr = tremor.eval(t);
        let a = [
            dir[0] * s2 + tr[0] * env,
            dir[1] * s2 + tr[1] * env,
            dir[2] * s2 + tr[2] * env,
        ];
        (a, q_from.slerp(&q_to, quintic_pos(tau)))
    }
}

/// Stationary hold with tremor and a small orientation wobble; both vanish
/// at the segment edges so neighbors join smoothly.
fn hold_signal(
    q_base: Quaternion<f64>,
    dur: f64,
    tremor: Tremor,
    wob_axis: [f64; 3],
    wob_amp: f64,
    wob_freq: f64,
) -> impl Fn(f64) -> Pose {
    move |t| {
        let env = (PI * (t / dur).clamp(0.0, 1.0)).sin().powi(2);
        let tr = tremor.eval(t);
        let a = [tr[0] * env, tr[1] * env, tr[2] * env];
        let theta = wob_amp * (2.0 * PI * wob_freq * t).sin() * env;
        (a, q_base.mul(&Quaternion::from_axis_angle(wob_axis, theta)))
    }
}

/// Carried-around motion: per-axis low-frequency sway plus orientation
/// wobble, ramped at the edges.
#[derive(Clone)]
struct CarryParams {
    amp: [f64; 3],
    freq: [f64; 3],
    phase: [f64; 3],
    wob_axis: [f64; 3],
    wob_amp: f64,
    wob_freq: f64,
}

impl CarryParams {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let mut amp = [0.0; 3];
        let mut freq = [0.0; 3];
        let mut phase = [0.0; 3];
        for ax in 0..3 {
            amp[ax] = rng.random_range(0.4..1.0);
            freq[ax] = rng.random_range(0.8..2.5);
            phase[ax] = rng.random_range(0.0..2.0 * PI);
        }
        CarryParams {
            amp,
            freq,
            phase,
            wob_axis: unit_vec(rng),
            wob_amp: rng.random_range(0.05..0.12),
            wob_freq: rng.random_range(0.5..1.2),
        }
    }
}

fn carry_signal(q_base: Quaternion<f64>, dur: f64, p: CarryParams) -> impl Fn(f64) -> Pose {
    move |t| {
        let env = edge_env(t, dur, 0.4);
        let mut a = [0.0; 3];
        for ax in 0..3 {
            a[ax] = p.amp[ax] * (2.0 * PI * p.freq[ax] * t + p.phase[ax]).sin() * env;
        }
        let theta = p.wob_amp * (2.0 * PI * p.wob_freq * t).sin() * env;
        (a, q_base.mul(&Quaternion::from_axis_angle(p.wob_axis, theta)))
    }
}

fn unit_vec(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn small_rot(rng: &mut ChaCha8Rng, sigma: f64) -> Quaternion<f64> {
    let n = Normal::new(0.0, sigma).unwrap();
    let d = [n.sample(rng), n.sample(rng), n.sample(rng)];
    let angle = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if angle < 1e-12 {
        return Quaternion::identity();
    }
    Quaternion::from_axis_angle(d, angle)
}

/// Device-frame angular velocity by central difference of the segment's
/// orientation track.
fn angular_velocity<S: Fn(f64) -> Pose>(signal: &S, t: f64, dur: f64) -> [f64; 3] {
    let h = (dur * 0.25).min(2e-3).max(1e-5);
    let t0 = (t - h).max(0.0);
    let t1 = (t + h).min(dur);
    if t1 <= t0 {
        return [0.0; 3];
    }
    let (_, qm) = signal(t);
    let (_, q0) = signal(t0);
    let (_, mut q1) = signal(t1);
    if q0.dot(&q1) < 0.0 {
        q1 = Quaternion::new(-q1.x, -q1.y, -q1.z, -q1.w);
    }
    let dt = t1 - t0;
    let dq = Quaternion::new(
        (q1.x - q0.x) / dt,
        (q1.y - q0.y) / dt,
        (q1.z - q0.z) / dt,
        (q1.w - q0.w) / dt,
    );
    // q' = q/2 * (0, w) in the device frame, so w = 2 vec(q^-1 q')
    let w = qm.conjugate().mul(&dq);
    [2.0 * w.x, 2.0 * w.y, 2.0 * w.z]
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

fn ns(seconds: f64) -> i64 {
    (seconds * NS_PER_SEC as f64).round() as i64
}

fn to_device(q: &Quaternion<f64>, v: [f64; 3]) -> [f64; 3] {
    // q maps device to Earth; its conjugate maps back.
    quat_rotate(&q.conjugate(), v).expect("unit quaternion")
}

struct SensorStream {
    kind: SensorKind,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    next_t: i64,
    period_ns: i64,
    samples: Vec<SensorSample>,
    /// Previous rotation-vector sample, for hemisphere continuity.
    last_quat: Option<[f64; 4]>,
}

struct Emitter {
    streams: Vec<SensorStream>,
    events: Vec<DeviceEvent>,
    cursor_ns: i64,
}

impl Emitter {
    fn new(rate_hz: f64, seed: u64) -> Self {
        let period_ns = (NS_PER_SEC as f64 / rate_hz).round() as i64;
        let streams = SensorKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &kind)| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (i as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
                );
                let sigma = match kind {
                    SensorKind::Accelerometer => ACC_SIGMA,
                    SensorKind::LinearAcceleration => LINACC_SIGMA,
                    SensorKind::Gravity => 0.0,
                    SensorKind::Gyroscope => GYRO_SIGMA,
                    SensorKind::Magnetometer => MAG_SIGMA,
                    SensorKind::RotationVector => 0.0,
                };
                let next_t = T0_NS + rng.random_range(0..period_ns.max(1));
                SensorStream {
                    kind,
                    noise: Normal::new(0.0, sigma).unwrap(),
                    rng,
                    next_t,
                    period_ns,
                    samples: Vec::new(),
                    last_quat: None,
                }
            })
            .collect();
        Emitter {
            streams,
            events: Vec::new(),
            cursor_ns: T0_NS,
        }
    }

    fn push_event(&mut self, timestamp_ns: i64, kind: EventKind) {
        debug_assert!(self
            .events
            .last()
            .map(|e| e.timestamp_ns < timestamp_ns)
            .unwrap_or(true));
        self.events.push(DeviceEvent { timestamp_ns, kind });
    }

    /// Sample every sensor through one segment. `motion` gates the linear
    /// acceleration channel: idle segments emit exact zeros on it.
    fn advance<S: Fn(f64) -> Pose>(&mut self, dur_s: f64, motion: bool, mag_off: [f64; 3], signal: S) {
        let start = self.cursor_ns;
        let end = start + ns(dur_s);
        for st in &mut self.streams {
            while st.next_t < end {
                let t_loc = (st.next_t - start) as f64 / NS_PER_SEC as f64;
                let (a_e, q) = signal(t_loc);
                let mut vals = [0.0f64; 4];
                let n_comp = st.kind.component_count();
                match st.kind {
                    SensorKind::Accelerometer => {
                        let f = to_device(&q, [a_e[0], a_e[1], a_e[2] + GRAVITY]);
                        for c in 0..3 {
                            vals[c] = f[c] + st.noise.sample(&mut st.rng);
                        }
                    }
                    SensorKind::LinearAcceleration => {
                        if motion {
                            let f = to_device(&q, a_e);
                            for c in 0..3 {
                                vals[c] = f[c] + st.noise.sample(&mut st.rng);
                            }
                        }
                    }
                    SensorKind::Gravity => {
                        let g = to_device(&q, [0.0, 0.0, GRAVITY]);
                        vals[..3].copy_from_slice(&g);
                    }
                    SensorKind::Gyroscope => {
                        let w = angular_velocity(&signal, t_loc, dur_s);
                        for c in 0..3 {
                            vals[c] = w[c] + st.noise.sample(&mut st.rng);
                        }
                    }
                    SensorKind::Magnetometer => {
                        let b = to_device(&q, B_EARTH);
                        for c in 0..3 {
                            vals[c] = b[c] + mag_off[c] + st.noise.sample(&mut st.rng);
                        }
                    }
                    SensorKind::RotationVector => {
                        let qn = q.mul(&small_rot(&mut st.rng, ROTVEC_SIGMA));
                        let qn = qn.normalized().expect("unit quaternion");
                        let mut v = [qn.x, qn.y, qn.z, qn.w];
                        // Keep consecutive samples in one hemisphere so that
                        // later linear interpolation stays valid.
                        let flip = match st.last_quat {
                            Some(prev) => (0..4).map(|c| v[c] * prev[c]).sum::<f64>() < 0.0,
                            None => v[3] < 0.0,
                        };
                        if flip {
                            for c in &mut v {
                                *c = -*c;
                            }
                        }
                        st.last_quat = Some(v);
                        vals = v;
                    }
                }
                for v in &mut vals[..n_comp] {
                    *v = quantize9(*v);
                }
                st.samples.push(
                    SensorSample::new(st.next_t, st.kind, &vals[..n_comp]).expect("finite synth value"),
                );
                let jitter = st.rng.random_range(-JITTER_NS..=JITTER_NS);
                st.next_t += st.period_ns + jitter;
            }
        }
        self.cursor_ns = end;
    }

    fn finish(self, user_id: UserId, device_id: String) -> Result<SensorRecording, IngestError> {
        let mut map = BTreeMap::new();
        for st in self.streams {
            map.insert(st.kind, st.samples);
        }
        SensorRecording::new(user_id, device_id, map, self.events).map_err(IngestError::Order)
    }
}

// ---------------------------------------------------------------------------
// Protocol timelines
// ---------------------------------------------------------------------------

fn range(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    rng.random_range(r.0..r.1)
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-9);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// One lift, unlock, brief use, and put-down; events pushed along the way.
#[allow(clippy::too_many_arguments)]
fn unlock_episode(
    em: &mut Emitter,
    plan: &mut ChaCha8Rng,
    profile: &SynthUserProfile,
    dur_dist: &Normal<f64>,
    mag_off: [f64; 3],
    q_table: Quaternion<f64>,
    usage_s: f64,
) {
    let dir_n = normalize3(profile.lift_direction);
    let lift_len = 0.35 * profile.amplitude_scale * plan.random_range(0.92..1.08);
    let dir = [dir_n[0] * lift_len, dir_n[1] * lift_len, dir_n[2] * lift_len];
    let dur = dur_dist.sample(plan).clamp(0.35, 3.0);
    let q_hold = profile.hold_pose().mul(&small_rot(plan, 0.04));
    let tremor = profile.tremor_at(plan.random_range(0.0..100.0));

    em.advance(dur, true, mag_off, lift_signal(dir, dur, q_table, q_hold, tremor.clone()));

    let hold = plan.random_range(0.25..0.4);
    em.push_event(em.cursor_ns + ns(0.05), EventKind::ScreenOn);
    let wob = (unit_vec(plan), plan.random_range(0.01..0.03), plan.random_range(3.0..6.0));
    em.advance(
        hold,
        true,
        mag_off,
        hold_signal(q_hold, hold, tremor.clone(), wob.0, wob.1, wob.2),
    );
    em.push_event(em.cursor_ns, EventKind::UserPresent);

    let tremor2 = profile.tremor_at(plan.random_range(0.0..100.0));
    em.advance(
        usage_s,
        true,
        mag_off,
        hold_signal(q_hold, usage_s, tremor2.clone(), wob.0, wob.1, wob.2),
    );
    em.push_event(em.cursor_ns, EventKind::ScreenOff);

    let down = plan.random_range(0.6..0.9);
    let ndir = [-dir[0], -dir[1], -dir[2]];
    em.advance(down, true, mag_off, lift_signal(ndir, down, q_hold, q_table, tremor2));
}

fn generate_specific_user(
    profile: &SynthUserProfile,
    cfg: &SpecificMotionConfig,
) -> Result<SensorRecording, IngestError> {
    profile.validate()?;
    check_rate(cfg.rate_hz)?;
    if cfg.rest_range_s.0 <= 31.0 {
        return Err(IngestError::Profile(
            "rest range must stay above the 30 s cluster gap".into(),
        ));
    }
    let mut plan = ChaCha8Rng::seed_from_u64(profile.seed ^ 0x5EC1_F1C0);
    let mut em = Emitter::new(cfg.rate_hz, profile.seed);
    let dur_dist = Normal::new(profile.lift_duration_mean_s, profile.lift_duration_sigma_s)
        .expect("finite duration parameters");

    let mut last_env = location_environment(0);
    for loc in 0..cfg.locations {
        let (mag_off, table_yaw) = location_environment(loc);
        last_env = (mag_off, table_yaw);
        let q_table = Quaternion::from_axis_angle([0.0, 0.0, 1.0], table_yaw);
        for _ in 0..cfg.lifts_per_location {
            em.advance(range(&mut plan, cfg.idle_range_s), false, mag_off, idle_signal(q_table));
            let usage = plan.random_range(0.5..0.8);
            unlock_episode(&mut em, &mut plan, profile, &dur_dist, mag_off, q_table, usage);
        }
        if loc + 1 < cfg.locations {
            em.advance(range(&mut plan, cfg.rest_range_s), false, mag_off, idle_signal(q_table));
        }
    }
    let q_table = Quaternion::from_axis_angle([0.0, 0.0, 1.0], last_env.1);
    em.advance(2.0, false, last_env.0, idle_signal(q_table));
    em.finish(profile.user_id.clone(), format!("dev-{}", profile.user_id))
}

fn generate_all_motions_user(
    profile: &SynthUserProfile,
    cfg: &AllMotionsConfig,
) -> Result<SensorRecording, IngestError> {
    profile.validate()?;
    check_rate(cfg.rate_hz)?;
    let mut plan = ChaCha8Rng::seed_from_u64(profile.seed ^ 0xA117_0D0D);
    let mut em = Emitter::new(cfg.rate_hz, profile.seed ^ 0x77);
    let dur_dist = Normal::new(profile.lift_duration_mean_s, profile.lift_duration_sigma_s)
        .expect("finite duration parameters");
    let mag_off = [0.0; 3];

    let q_rest = Quaternion::from_axis_angle([0.0, 0.0, 1.0], plan.random_range(-PI..PI));
    em.advance(0.5, false, mag_off, idle_signal(q_rest));
    em.push_event(em.cursor_ns, EventKind::ScreenOff);

    for day in 0..cfg.days {
        if day > 0 {
            em.advance(range(&mut plan, (15.0, 25.0)), false, mag_off, idle_signal(q_rest));
        }
        for _ in 0..cfg.unlocks_per_day {
            em.advance(range(&mut plan, cfg.idle_range_s), false, mag_off, idle_signal(q_rest));
            // Carry ends 2.4 s of guaranteed motion before the lift begins,
            // so each unlock is preceded by more than 3 s of movement.
            let carry = range(&mut plan, cfg.carry_range_s) + 2.4;
            let params = CarryParams::draw(&mut plan);
            em.advance(carry, true, mag_off, carry_signal(q_rest, carry, params));
            let usage = range(&mut plan, cfg.usage_range_s);
            unlock_episode(&mut em, &mut plan, profile, &dur_dist, mag_off, q_rest, usage);
        }
    }
    em.advance(2.0, false, mag_off, idle_signal(q_rest));
    em.finish(profile.user_id.clone(), format!("dev-{}", profile.user_id))
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

fn check_unique_users(profiles: &[SynthUserProfile]) -> Result<(), IngestError> {
    let mut seen = std::collections::BTreeSet::new();
    for p in profiles {
        if !seen.insert(&p.user_id) {
            return Err(IngestError::Profile(format!("duplicate user id {}", p.user_id)));
        }
    }
    Ok(())
}

/// Generate the scripted-lift dataset: per user, `locations` blocks of
/// `lifts_per_location` unlock episodes separated by long rests. Writes one
/// recording per user plus `manifest.json` under `out_dir`.
pub fn synth_specific_motion(
    out_dir: &Path,
    profiles: &[SynthUserProfile],
    cfg: &SpecificMotionConfig,
) -> Result<DatasetManifest, IngestError> {
    check_unique_users(profiles)?;
    let mut entries: Vec<ManifestEntry> = Vec::with_capacity(profiles.len());
    for p in profiles {
        let rec = generate_specific_user(p, cfg)?;
        entries.push(write_recording_files(out_dir, &rec)?);
    }
    let manifest = DatasetManifest::new(
        DatasetKind::SpecificMotion,
        cfg.rate_hz,
        entries,
        out_dir.to_owned(),
    );
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Generate the free-living dataset: per user, `days` blocks of
/// `unlocks_per_day` unlock episodes with idle and carry segments between
/// them. Writes one recording per user plus `manifest.json` under `out_dir`.
pub fn synth_all_motions(
    out_dir: &Path,
    profiles: &[SynthUserProfile],
    cfg: &AllMotionsConfig,
) -> Result<DatasetManifest, IngestError> {
    check_unique_users(profiles)?;
    let mut entries: Vec<ManifestEntry> = Vec::with_capacity(profiles.len());
    for p in profiles {
        let rec = generate_all_motions_user(p, cfg)?;
        entries.push(write_recording_files(out_dir, &rec)?);
    }
    let manifest = DatasetManifest::new(
        DatasetKind::AllMotions,
        cfg.rate_hz,
        entries,
        out_dir.to_owned(),
    );
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
