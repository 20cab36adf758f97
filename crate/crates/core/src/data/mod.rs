//! Stimuli, MEG epochs, windowed brain responses and the sensor atlas.

mod atlas;
pub mod binio;
mod stimuli;
mod store;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use atlas::{Hemisphere, Lobe, RegionAtlas, RegionSelector};
pub use stimuli::{builtin, load_stimuli, parse_tagged, save_stimuli};
pub use store::{load_epochs, load_responses, write_epochs, write_responses, EPOCH_MANIFEST, RESPONSE_MANIFEST};

use crate::error::{Error, Result};

pub const DEFAULT_SENSORS: usize = 306;
pub const DEFAULT_EPOCH_MS: u32 = 500;
pub const DEFAULT_WINDOW_MS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voice {
    Active,
    Passive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    PassAct2,
    Krns2,
    Krns5,
    #[serde(rename = "generated")]
    Generated,
    #[serde(rename = "simulated")]
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordToken {
    pub text: String,
    pub pos: String,
    pub sentence_id: String,
    pub position: usize,
}

impl WordToken {
    pub fn is_noun(&self) -> bool {
        self.pos.starts_with("NN")
    }

    pub fn is_verb(&self) -> bool {
        self.pos.starts_with("VB")
    }

    /// Verb that is not a form of "be".
    pub fn is_main_verb(&self) -> bool {
        self.is_verb()
            && !matches!(
                self.text.as_str(),
                "be" | "is" | "are" | "was" | "were" | "been" | "being" | "am"
            )
    }

    pub fn is_determiner(&self) -> bool {
        self.pos == "DT"
    }

    pub fn is_adjective(&self) -> bool {
        self.pos.starts_with("JJ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceStimulus {
    pub sentence_id: String,
    pub tokens: Vec<WordToken>,
    pub voice: Voice,
    pub dataset_id: DatasetId,
}

impl SentenceStimulus {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::invalid(format!("sentence {} has no tokens", self.sentence_id)));
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.text.is_empty() {
                return Err(Error::invalid(format!(
                    "sentence {} token {i} is empty",
                    self.sentence_id
                )));
            }
            if tok.text.chars().any(char::is_uppercase) {
                return Err(Error::invalid(format!(
                    "sentence {} token {i} ({}) is not lowercase",
                    self.sentence_id, tok.text
                )));
            }
            if tok.position != i || tok.sentence_id != self.sentence_id {
                return Err(Error::invalid(format!(
                    "sentence {} token {i} carries binding ({}, {})",
                    self.sentence_id, tok.sentence_id, tok.position
                )));
            }
        }
        Ok(())
    }
}

/// (sentence, position) binding shared by features and responses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StimulusKey {
    pub sentence_id: String,
    pub position: usize,
}

impl StimulusKey {
    pub fn new(sentence_id: impl Into<String>, position: usize) -> Self {
        Self {
            sentence_id: sentence_id.into(),
            position,
        }
    }
}

/// One word's sensor x time recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub subject_id: String,
    pub sentence_id: String,
    pub position: usize,
    /// 1-based; 0 marks a repetition average.
    pub repetition: u32,
    pub samples: DMatrix<f64>,
    pub sample_rate: f64,
}

impl Epoch {
    pub fn sensors(&self) -> usize {
        self.samples.nrows()
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.ncols() as f64 * 1000.0 / self.sample_rate
    }

    pub fn key(&self) -> StimulusKey {
        StimulusKey::new(self.sentence_id.clone(), self.position)
    }

    pub(crate) fn sort_key(&self) -> (String, String, usize, u32) {
        (
            self.subject_id.clone(),
            self.sentence_id.clone(),
            self.position,
            self.repetition,
        )
    }
}

/// Sensor x window response; flattened sensor-major (`s * windows + w`).
#[derive(Debug, Clone, PartialEq)]
pub struct BrainResponse {
    pub subject_id: String,
    pub sentence_id: String,
    pub position: usize,
    pub repetition: u32,
    pub values: DMatrix<f64>,
}

impl BrainResponse {
    pub fn sensors(&self) -> usize {
        self.values.nrows()
    }

    pub fn windows(&self) -> usize {
        self.values.ncols()
    }

    pub fn key(&self) -> StimulusKey {
        StimulusKey::new(self.sentence_id.clone(), self.position)
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_row_major(&self.values)
    }

    pub fn from_flat(template: &BrainResponse, flat: &[f64], sensors: usize, windows: usize) -> Result<BrainResponse> {
        if flat.len() != sensors * windows {
            return Err(Error::shape("flattened response", sensors * windows, flat.len()));
        }
        Ok(BrainResponse {
            values: DMatrix::from_row_slice(sensors, windows, flat),
            ..template.clone()
        })
    }
}

pub(crate) fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Stack flattened responses into an n x (sensors*windows) matrix.
pub fn response_matrix(responses: &[&BrainResponse]) -> Result<DMatrix<f64>> {
    let Some(first) = responses.first() else {
        return Ok(DMatrix::zeros(0, 0));
    };
    let shape = first.values.shape();
    let width = shape.0 * shape.1;
    let mut out = DMatrix::zeros(responses.len(), width);
    for (i, r) in responses.iter().enumerate() {
        if r.values.shape() != shape {
            return Err(Error::shape(
                format!("response ({}, {})", r.sentence_id, r.position),
                format!("{shape:?}"),
                format!("{:?}", r.values.shape()),
            ));
        }
        for (j, v) in r.flatten().into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_is_sensor_major() {
        let r = BrainResponse {
            subject_id: "s".into(),
            sentence_id: "a".into(),
            position: 0,
            repetition: 0,
            values: DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]),
        };
        assert_eq!(r.flatten(), vec![1., 2., 3., 4., 5., 6.]);
        let back = BrainResponse::from_flat(&r, &r.flatten(), 2, 3).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn default_shape_flattens_to_1530() {
        assert_eq!(DEFAULT_SENSORS * (DEFAULT_EPOCH_MS / DEFAULT_WINDOW_MS) as usize, 1530);
    }

    #[test]
    fn main_verb_excludes_auxiliary() {
        let tok = |t: &str, p: &str| WordToken {
            text: t.into(),
            pos: p.into(),
            sentence_id: "x".into(),
            position: 0,
        };
        assert!(!tok("was", "VBD").is_main_verb());
        assert!(tok("liked", "VBN").is_main_verb());
    }
}
