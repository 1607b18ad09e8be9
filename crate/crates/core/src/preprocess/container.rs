//! Binary tensor container for windows, attempts, and feature batches.
//!
//! Layout, all little-endian: magic `IMUT`, version u32, channels u32,
//! timesteps u32, count u32, then `count` i32 labels, then
//! `count * channels * timesteps` f32 values. Label codes follow
//! `WindowLabel::code` (0 negative, 1 positive, 100+c for cluster c).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::num::Real;
use crate::preprocess::{PreprocessError, VerificationAttempt};
use crate::types::{Grid, SensorKind, UserId, Window, WindowLabel};

pub const TENSOR_MAGIC: [u8; 4] = *b"IMUT";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub channels: u32,
    pub timesteps: u32,
    pub labels: Vec<i32>,
    /// Row-major, sample-major: `[count][channels][timesteps]`.
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let stride = (self.channels * self.timesteps) as usize;
        &self.data[i * stride..(i + 1) * stride]
    }

    fn validate(&self) -> Result<(), PreprocessError> {
        let expect = self.labels.len() * (self.channels * self.timesteps) as usize;
        if self.data.len() != expect {
            return Err(PreprocessError::Container(format!(
                "data length {} does not match {} samples of {}x{}",
                self.data.len(),
                self.labels.len(),
                self.channels,
                self.timesteps
            )));
        }
        Ok(())
    }
}

pub fn write_tensor_file(path: &Path, tf: &TensorFile) -> Result<(), PreprocessError> {
    tf.validate()?;
    let mut buf = Vec::with_capacity(20 + tf.labels.len() * 4 + tf.data.len() * 4);
    buf.extend_from_slice(&TENSOR_MAGIC);
    buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    buf.extend_from_slice(&tf.channels.to_le_bytes());
    buf.extend_from_slice(&tf.timesteps.to_le_bytes());
    buf.extend_from_slice(&(tf.labels.len() as u32).to_le_bytes());
    for l in &tf.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for v in &tf.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor_file(path: &Path) -> Result<TensorFile, PreprocessError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 20 {
        return Err(PreprocessError::Container("file shorter than header".into()));
    }
    if bytes[..4] != TENSOR_MAGIC {
        return Err(PreprocessError::Container("bad magic".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != TENSOR_VERSION {
        return Err(PreprocessError::Container(format!("unsupported version {version}")));
    }
    let channels = u32_at(8);
    let timesteps = u32_at(12);
    let count = u32_at(16) as usize;
    let label_bytes = count * 4;
    let data_len = count * channels as usize * timesteps as usize;
    let expect = 20 + label_bytes + data_len * 4;
    if bytes.len() != expect {
        return Err(PreprocessError::Container(format!(
            "expected {expect} bytes, found {}",
            bytes.len()
        )));
    }
    let labels = bytes[20..20 + label_bytes]
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = bytes[20 + label_bytes..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(TensorFile {
        channels,
        timesteps,
        labels,
        data,
    })
}

fn grids_to_file<F: Real>(
    grids: &[(&Grid<F>, i32)],
) -> Result<TensorFile, PreprocessError> {
    let (rows, steps) = match grids.first() {
        Some((g, _)) => (g.rows(), g.steps()),
        None => (0, 0),
    };
    let mut labels = Vec::with_capacity(grids.len());
    let mut data = Vec::with_capacity(grids.len() * rows * steps);
    for (g, label) in grids {
        if g.rows() != rows || g.steps() != steps {
            return Err(PreprocessError::Container("mixed grid shapes".into()));
        }
        labels.push(*label);
        data.extend(g.data().iter().map(|v| v.to_f64c() as f32));
    }
    Ok(TensorFile {
        channels: rows as u32,
        timesteps: steps as u32,
        labels,
        data,
    })
}

/// Pack pattern windows (positives and negatives may be mixed; labels carry
/// the distinction).
pub fn windows_to_tensor_file<F: Real>(windows: &[Window<F>]) -> Result<TensorFile, PreprocessError> {
    let grids: Vec<(&Grid<F>, i32)> = windows.iter().map(|w| (&w.grid, w.label.code())).collect();
    grids_to_file(&grids)
}

/// Unpack pattern windows; `kinds` restores the channel layout.
pub fn windows_from_tensor_file(
    user_id: &UserId,
    rate_hz: f64,
    kinds: &[SensorKind],
    tf: &TensorFile,
) -> Result<Vec<Window<f32>>, PreprocessError> {
    tf.validate()?;
    let expected: usize = kinds.iter().map(|k| k.component_count()).sum();
    if expected != tf.channels as usize {
        return Err(PreprocessError::Container(format!(
            "kind list implies {expected} channels, file has {}",
            tf.channels
        )));
    }
    (0..tf.count())
        .map(|i| {
            let label = WindowLabel::from_code(tf.labels[i]).ok_or_else(|| {
                PreprocessError::Container(format!("unknown label code {}", tf.labels[i]))
            })?;
            Ok(Window::new(
                user_id.clone(),
                label,
                rate_hz,
                0,
                kinds.to_vec(),
                Grid::new(
                    tf.channels as usize,
                    tf.timesteps as usize,
                    tf.sample(i).to_vec(),
                ),
            ))
        })
        .collect()
}

/// Pack clustered attempts; requires every cluster assigned.
pub fn attempts_to_tensor_file<F: Real>(
    attempts: &[VerificationAttempt<F>],
) -> Result<TensorFile, PreprocessError> {
    let grids: Vec<(&Grid<F>, i32)> = attempts
        .iter()
        .map(|a| {
            let c = a
                .cluster
                .ok_or_else(|| PreprocessError::Container("attempt missing cluster".into()))?;
            Ok((&a.grid, WindowLabel::Cluster(c).code()))
        })
        .collect::<Result<_, PreprocessError>>()?;
    grids_to_file(&grids)
}

/// Unpack attempts. Timestamps are not stored; clustering happens before
/// packing, so `end_ts` is zeroed.
pub fn attempts_from_tensor_file(
    user_id: &UserId,
    rate_hz: f64,
    kinds: &[SensorKind],
    tf: &TensorFile,
) -> Result<Vec<VerificationAttempt<f32>>, PreprocessError> {
    tf.validate()?;
    let expected: usize = kinds.iter().map(|k| k.component_count()).sum();
    if expected != tf.channels as usize {
        return Err(PreprocessError::Container(format!(
            "kind list implies {expected} channels, file has {}",
            tf.channels
        )));
    }
    (0..tf.count())
        .map(|i| {
            let cluster = match WindowLabel::from_code(tf.labels[i]) {
                Some(WindowLabel::Cluster(c)) => c,
                _ => {
                    return Err(PreprocessError::Container(format!(
                        "label code {} is not a cluster",
                        tf.labels[i]
                    )))
                }
            };
            Ok(VerificationAttempt {
                user_id: user_id.clone(),
                cluster: Some(cluster),
                rate_hz,
                end_ts: 0,
                kinds: kinds.to_vec(),
                grid: Grid::new(
                    tf.channels as usize,
                    tf.timesteps as usize,
                    tf.sample(i).to_vec(),
                ),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::VERIFY_STEPS;

    #[test]
    fn tensor_file_round_trips_bit_exact() {
        let tf = TensorFile {
            channels: 3,
            timesteps: 4,
            labels: vec![1, 0, 105],
            data: (0..36).map(|i| (i as f32) * 0.25 - 1.0).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_tensor_file(&path, &tf).unwrap();
        let back = read_tensor_file(&path).unwrap();
        assert_eq!(back, tf);
        // Bytes are stable across writes.
        let b1 = fs::read(&path).unwrap();
        write_tensor_file(&path, &back).unwrap();
        assert_eq!(b1, fs::read(&path).unwrap());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let tf = TensorFile {
            channels: 2,
            timesteps: 2,
            labels: vec![1],
            data: vec![0.0; 4],
        };
        write_tensor_file(&path, &tf).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_tensor_file(&path), Err(PreprocessError::Container(_))));
    }

    #[test]
    fn attempts_round_trip_through_container() {
        let kinds = vec![SensorKind::Accelerometer, SensorKind::RotationVector];
        let mk = |cluster: u8, fill: f32| VerificationAttempt::<f32> {
            user_id: "u".into(),
            cluster: Some(cluster),
            rate_hz: 50.0,
            end_ts: 0,
            kinds: kinds.clone(),
            grid: Grid::new(7, VERIFY_STEPS, vec![fill; 7 * VERIFY_STEPS]),
        };
        let attempts = vec![mk(1, 0.5), mk(6, -2.0)];
        let tf = attempts_to_tensor_file(&attempts).unwrap();
        let back = attempts_from_tensor_file(&"u".into(), 50.0, &kinds, &tf).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].cluster, Some(1));
        assert_eq!(back[1].cluster, Some(6));
        assert_eq!(back[1].grid.data(), attempts[1].grid.data());
    }

    #[test]
    fn unclustered_attempt_cannot_be_packed() {
        let a = VerificationAttempt::<f32> {
            user_id: "u".into(),
            cluster: None,
            rate_hz: 50.0,
            end_ts: 0,
            kinds: vec![SensorKind::Gyroscope],
            grid: Grid::zeros(3, VERIFY_STEPS),
        };
        assert!(attempts_to_tensor_file(&[a]).is_err());
    }
}
