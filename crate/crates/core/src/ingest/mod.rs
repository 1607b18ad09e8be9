//! Recording ingestion: the on-disk CSV format, dataset manifests, and the
//! synthetic dataset generators used for desk-scale experiments.

mod csv;
mod synth;

pub use csv::{parse_recording, quantize9, write_recording, EVENTS_HEADER, SAMPLES_HEADER};
pub use synth::{synth_all_motions, synth_specific_motion, AllMotionsConfig, SpecificMotionConfig, SynthUserProfile};

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::types::{RecordingError, SensorRecording, UserId};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: bad header {got:?}, expected {expected:?}")]
    Schema {
        file: &'static str,
        expected: &'static str,
        got: String,
    },
    #[error("{file} line {line}: {msg}")]
    Row {
        file: &'static str,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Order(RecordingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("synth profile: {0}")]
    Profile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DatasetKind {
    /// Free-living streams: idle, carry, and unlock episodes interleaved.
    AllMotions,
    /// Scripted table lifts grouped into six collection locations.
    SpecificMotion,
}

/// One user's recording files, relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub user_id: UserId,
    pub device_id: String,
    pub samples: PathBuf,
    pub events: PathBuf,
}

/// Index of a dataset on disk: which users it holds, where their recordings
/// live, and the nominal per-sensor sampling rate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub rate_hint_hz: f64,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(kind: DatasetKind, rate_hint_hz: f64, entries: Vec<ManifestEntry>, base_dir: PathBuf) -> Self {
        DatasetManifest {
            kind,
            rate_hint_hz,
            entries,
            base_dir,
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| IngestError::Manifest(e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    /// Load and validate: user ids unique, every referenced file present.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path)?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        m.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_owned();
        let mut seen = std::collections::BTreeSet::new();
        for e in &m.entries {
            if !seen.insert(&e.user_id) {
                return Err(IngestError::Manifest(format!("duplicate user id {}", e.user_id)));
            }
            for p in [&e.samples, &e.events] {
                let full = m.base_dir.join(p);
                if !full.is_file() {
                    return Err(IngestError::Manifest(format!("missing file {}", full.display())));
                }
            }
        }
        Ok(m)
    }

    pub fn entry(&self, user_id: &UserId) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| &e.user_id == user_id)
    }

    pub fn load_recording(&self, entry: &ManifestEntry) -> Result<SensorRecording, IngestError> {
        let samples = BufReader::new(fs::File::open(self.base_dir.join(&entry.samples))?);
        let events = BufReader::new(fs::File::open(self.base_dir.join(&entry.events))?);
        parse_recording(entry.user_id.clone(), entry.device_id.clone(), samples, events)
    }
}

/// Write one recording under `dir/<user_id>/{samples,events}.csv` and return
/// the manifest entry for it.
pub fn write_recording_files(dir: &Path, rec: &SensorRecording) -> Result<ManifestEntry, IngestError> {
    let sub = dir.join(rec.user_id().as_str());
    fs::create_dir_all(&sub)?;
    let samples_path = sub.join("samples.csv");
    let events_path = sub.join("events.csv");
    let mut s = BufWriter::new(fs::File::create(&samples_path)?);
    let mut e = BufWriter::new(fs::File::create(&events_path)?);
    write_recording(rec, &mut s, &mut e)?;
    Ok(ManifestEntry {
        user_id: rec.user_id().clone(),
        device_id: rec.device_id().to_owned(),
        samples: PathBuf::from(rec.user_id().as_str()).join("samples.csv"),
        events: PathBuf::from(rec.user_id().as_str()).join("events.csv"),
    })
}
