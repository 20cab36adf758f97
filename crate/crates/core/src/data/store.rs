//! Directory stores: a JSON manifest next to one f32 payload per entry.

use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::binio::{read_matrix, write_matrix};
use super::{BrainResponse, Epoch};
use crate::error::{Error, Result};

pub const EPOCH_MANIFEST: &str = "epochs.json";
pub const RESPONSE_MANIFEST: &str = "responses.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    sentence_id: String,
    position: usize,
    repetition: u32,
    payload: String,
    rows: usize,
    cols: usize,
}

impl Entry {
    fn label(&self) -> String {
        format!(
            "epoch (sentence {}, position {}, repetition {})",
            self.sentence_id, self.position, self.repetition
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EpochManifest {
    subject_id: String,
    sample_rate: f64,
    sensors: usize,
    entries: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResponseManifest {
    subject_id: String,
    sensors: usize,
    windows: usize,
    entries: Vec<Entry>,
}

fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("manifest {}", path.display()), e.to_string()))
}

fn dir_is_empty(dir: &Path) -> Result<bool> {
    let mut it = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    Ok(it.next().is_none())
}

fn payload_name(prefix: &str, e: &Entry) -> String {
    format!("{prefix}_{}_{:03}_{:02}.f32", e.sentence_id, e.position, e.repetition)
}

/// Load and validate every epoch in `dir`, sorted by
/// (subject, sentence, position, repetition).
pub fn load_epochs(dir: &Path) -> Result<Vec<Epoch>> {
    let manifest_path = dir.join(EPOCH_MANIFEST);
    if !manifest_path.exists() {
        if dir_is_empty(dir)? {
            warn!("{} is empty; no epochs loaded", dir.display());
            return Ok(Vec::new());
        }
        return Err(Error::format(
            "epoch store",
            format!("{} has files but no {EPOCH_MANIFEST}", dir.display()),
        ));
    }
    let manifest: EpochManifest = read_manifest(&manifest_path)?;
    if !(manifest.sample_rate > 0.0 && manifest.sample_rate.is_finite()) {
        return Err(Error::format("epoch manifest", "sample_rate must be positive"));
    }
    let cols = manifest.entries.first().map(|e| e.cols);
    let mut epochs = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        if entry.rows != manifest.sensors {
            return Err(Error::shape(
                entry.label(),
                format!("{} sensor rows", manifest.sensors),
                format!("{} rows", entry.rows),
            ));
        }
        if Some(entry.cols) != cols {
            return Err(Error::shape(
                entry.label(),
                format!("{} samples", cols.unwrap_or(0)),
                format!("{} samples", entry.cols),
            ));
        }
        if entry.repetition < 1 {
            return Err(Error::invalid(format!("{}: repetitions are 1-based", entry.label())));
        }
        let samples = read_matrix(&dir.join(&entry.payload), entry.rows, entry.cols)
            .map_err(|e| Error::format(entry.label(), e.to_string()))?;
        epochs.push(Epoch {
            subject_id: manifest.subject_id.clone(),
            sentence_id: entry.sentence_id.clone(),
            position: entry.position,
            repetition: entry.repetition,
            samples,
            sample_rate: manifest.sample_rate,
        });
    }
    epochs.sort_by_key(Epoch::sort_key);
    for pair in epochs.windows(2) {
        if pair[0].sort_key() == pair[1].sort_key() {
            return Err(Error::invalid(format!(
                "duplicate epoch (sentence {}, position {}, repetition {})",
                pair[0].sentence_id, pair[0].position, pair[0].repetition
            )));
        }
    }
    Ok(epochs)
}

/// Write epochs of a single subject and sample rate.
pub fn write_epochs(dir: &Path, epochs: &[Epoch]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let Some(first) = epochs.first() else {
        return Err(Error::invalid("no epochs to write"));
    };
    let mut entries = Vec::with_capacity(epochs.len());
    let mut sorted: Vec<&Epoch> = epochs.iter().collect();
    sorted.sort_by_key(|e| e.sort_key());
    for ep in sorted {
        if ep.subject_id != first.subject_id || ep.sample_rate != first.sample_rate {
            return Err(Error::invalid("an epoch store holds one subject at one sample rate"));
        }
        let mut entry = Entry {
            sentence_id: ep.sentence_id.clone(),
            position: ep.position,
            repetition: ep.repetition,
            payload: String::new(),
            rows: ep.samples.nrows(),
            cols: ep.samples.ncols(),
        };
        entry.payload = payload_name("epoch", &entry);
        write_matrix(&dir.join(&entry.payload), &ep.samples)?;
        entries.push(entry);
    }
    let manifest = EpochManifest {
        subject_id: first.subject_id.clone(),
        sample_rate: first.sample_rate,
        sensors: first.sensors(),
        entries,
    };
    let path = dir.join(EPOCH_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_responses(dir: &Path) -> Result<Vec<BrainResponse>> {
    let manifest: ResponseManifest = read_manifest(&dir.join(RESPONSE_MANIFEST))?;
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        if entry.rows != manifest.sensors || entry.cols != manifest.windows {
            return Err(Error::shape(
                format!("response ({}, {})", entry.sentence_id, entry.position),
                format!("{}x{}", manifest.sensors, manifest.windows),
                format!("{}x{}", entry.rows, entry.cols),
            ));
        }
        let values = read_matrix(&dir.join(&entry.payload), entry.rows, entry.cols)?;
        out.push(BrainResponse {
            subject_id: manifest.subject_id.clone(),
            sentence_id: entry.sentence_id.clone(),
            position: entry.position,
            repetition: entry.repetition,
            values,
        });
    }
    out.sort_by(|a, b| (&a.sentence_id, a.position, a.repetition).cmp(&(&b.sentence_id, b.position, b.repetition)));
    Ok(out)
}

pub fn write_responses(dir: &Path, responses: &[BrainResponse]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let Some(first) = responses.first() else {
        return Err(Error::invalid("no responses to write"));
    };
    let mut sorted: Vec<&BrainResponse> = responses.iter().collect();
    sorted.sort_by(|a, b| (&a.sentence_id, a.position, a.repetition).cmp(&(&b.sentence_id, b.position, b.repetition)));
    let mut entries = Vec::with_capacity(responses.len());
    for r in sorted {
        if r.values.shape() != first.values.shape() || r.subject_id != first.subject_id {
            return Err(Error::invalid(
                "a response store holds one subject with one response shape",
            ));
        }
        let mut entry = Entry {
            sentence_id: r.sentence_id.clone(),
            position: r.position,
            repetition: r.repetition,
            payload: String::new(),
            rows: r.sensors(),
            cols: r.windows(),
        };
        entry.payload = payload_name("resp", &entry);
        write_matrix(&dir.join(&entry.payload), &r.values)?;
        entries.push(entry);
    }
    let manifest = ResponseManifest {
        subject_id: first.subject_id.clone(),
        sensors: first.sensors(),
        windows: first.windows(),
        entries,
    };
    let path = dir.join(RESPONSE_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn epoch(sentence: usize, position: usize, repetition: u32, sensors: usize) -> Epoch {
        Epoch {
            subject_id: "S1".into(),
            sentence_id: format!("s{sentence:02}"),
            position,
            repetition,
            samples: DMatrix::from_fn(sensors, 10, |i, j| (i + j + position) as f64 * 0.5),
            sample_rate: 500.0,
        }
    }

    #[test]
    fn full_grid_count_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut eps = Vec::new();
        for s in 0..32 {
            for p in 0..4 {
                for r in 1..=10 {
                    eps.push(epoch(s, p, r, 3));
                }
            }
        }
        // write in reverse to check loader ordering
        eps.reverse();
        write_epochs(dir.path(), &eps).unwrap();
        let loaded = load_epochs(dir.path()).unwrap();
        assert_eq!(loaded.len(), 32 * 4 * 10);
        assert!(loaded.windows(2).all(|w| w[0].sort_key() < w[1].sort_key()));
        assert_eq!(loaded[0].samples, eps.last().unwrap().samples);
    }

    #[test]
    fn empty_directory_is_empty_collection() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_epochs(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn row_count_mismatch_names_epoch() {
        let dir = tempfile::tempdir().unwrap();
        write_epochs(dir.path(), &[epoch(0, 0, 1, 305)]).unwrap();
        let path = dir.path().join(EPOCH_MANIFEST);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("\"sensors\": 305", "\"sensors\": 306")).unwrap();
        let err = load_epochs(dir.path()).unwrap_err().to_string();
        assert!(err.contains("sentence s00"), "{err}");
        assert!(err.contains("306"), "{err}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_epochs(dir.path(), &[epoch(0, 0, 1, 4)]).unwrap();
        let payload = dir.path().join("epoch_s00_000_01.f32");
        let bytes = fs::read(&payload).unwrap();
        fs::write(&payload, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_epochs(dir.path()).is_err());
    }

    #[test]
    fn responses_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rs: Vec<BrainResponse> = (0..3)
            .map(|i| BrainResponse {
                subject_id: "S1".into(),
                sentence_id: format!("s{i}"),
                position: i,
                repetition: 0,
                values: DMatrix::from_fn(4, 5, |a, b| (a * 5 + b + i) as f64 * 0.25),
            })
            .collect();
        write_responses(dir.path(), &rs).unwrap();
        assert_eq!(load_responses(dir.path()).unwrap(), rs);
    }
}
