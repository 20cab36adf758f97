//! Word-in-context feature vectors: random baseline, GloVe additive context,
//! and activations extracted by external language models.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::binio::{decode_f32le, write_matrix};
use crate::data::{SentenceStimulus, StimulusKey};
use crate::error::{Error, Result};
use crate::rng::{hash_str, keyed_rng, tag};

pub const RANDOM_DIM: usize = 300;

/// One (model, layer) activation table with one row per bound stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub model_id: String,
    pub layer_id: String,
    pub rows: DMatrix<f64>,
    pub row_index: Vec<StimulusKey>,
    /// Token text of each row, when known.
    pub tokens: Vec<String>,
    /// Whether each row was computed from its sentence prefix only.
    pub prefix_causal: bool,
    lookup: BTreeMap<StimulusKey, usize>,
}

impl FeatureMatrix {
    pub fn new(
        model_id: impl Into<String>,
        layer_id: impl Into<String>,
        rows: DMatrix<f64>,
        row_index: Vec<StimulusKey>,
        tokens: Vec<String>,
        prefix_causal: bool,
    ) -> Result<Self> {
        if rows.nrows() != row_index.len() {
            return Err(Error::shape("feature bindings", rows.nrows(), row_index.len()));
        }
        if !tokens.is_empty() && tokens.len() != row_index.len() {
            return Err(Error::shape("feature tokens", row_index.len(), tokens.len()));
        }
        if let Some(i) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "feature matrix has a non-finite entry at column-major index {i}"
            )));
        }
        let mut lookup = BTreeMap::new();
        for (i, key) in row_index.iter().enumerate() {
            if lookup.insert(key.clone(), i).is_some() {
                return Err(Error::invalid(format!(
                    "feature row ({}, {}) bound twice",
                    key.sentence_id, key.position
                )));
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            layer_id: layer_id.into(),
            rows,
            row_index,
            tokens,
            prefix_causal,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn row_of(&self, key: &StimulusKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    /// Rows for `keys`, in that order.
    pub fn select(&self, keys: &[StimulusKey]) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = keys
            .iter()
            .map(|k| {
                self.row_of(k).ok_or_else(|| {
                    Error::invalid(format!(
                        "no {}/{} feature row for ({}, {})",
                        self.model_id, self.layer_id, k.sentence_id, k.position
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(self.rows.select_rows(idx.iter()))
    }

    /// Keep only the rows whose key passes `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&StimulusKey) -> bool) -> Result<FeatureMatrix> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.row_index[i])).collect();
        FeatureMatrix::new(
            self.model_id.clone(),
            self.layer_id.clone(),
            self.rows.select_rows(idx.iter()),
            idx.iter().map(|&i| self.row_index[i].clone()).collect(),
            if self.tokens.is_empty() {
                Vec::new()
            } else {
                idx.iter().map(|&i| self.tokens[i].clone()).collect()
            },
            self.prefix_causal,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RandomMode {
    /// One vector per word type, keyed on (seed, word text).
    #[default]
    PerType,
    /// A fresh vector for every (sentence, position).
    PerOccurrence,
}

/// Uniform [0, 1) vectors of dimension 300 for every token of every stimulus.
pub fn random_embedding(stimuli: &[SentenceStimulus], seed: u64, mode: RandomMode) -> FeatureMatrix {
    random_embedding_dim(stimuli, seed, mode, RANDOM_DIM)
}

pub fn random_embedding_dim(stimuli: &[SentenceStimulus], seed: u64, mode: RandomMode, dim: usize) -> FeatureMatrix {
    let tokens: Vec<_> = stimuli.iter().flat_map(|s| s.tokens.iter()).collect();
    let mut rows = DMatrix::zeros(tokens.len(), dim);
    for (i, tok) in tokens.iter().enumerate() {
        let mut rng = match mode {
            RandomMode::PerType => keyed_rng(seed, &[tag::RANDOM_EMBEDDING, hash_str(&tok.text)]),
            RandomMode::PerOccurrence => keyed_rng(
                seed,
                &[tag::RANDOM_EMBEDDING, hash_str(&tok.sentence_id), tok.position as u64],
            ),
        };
        for j in 0..dim {
            rows[(i, j)] = rng.random::<f64>();
        }
    }
    FeatureMatrix::new(
        "random",
        match mode {
            RandomMode::PerType => "per-type",
            RandomMode::PerOccurrence => "per-occurrence",
        },
        rows,
        tokens
            .iter()
            .map(|t| StimulusKey::new(t.sentence_id.clone(), t.position))
            .collect(),
        tokens.iter().map(|t| t.text.clone()).collect(),
        true,
    )
    .expect("random features are well formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    #[default]
    Reject,
    Zero,
}

/// Word -> vector table with uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveLexicon {
    dim: usize,
    vectors: HashMap<String, DVector<f64>>,
    pub oov: OovPolicy,
}

impl GloveLexicon {
    pub fn new(dim: usize, vectors: HashMap<String, DVector<f64>>) -> Result<Self> {
        if let Some((w, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::shape(format!("lexicon vector `{w}`"), dim, v.len()));
        }
        Ok(Self {
            dim,
            vectors,
            oov: OovPolicy::Reject,
        })
    }

    /// Whitespace text format: `word v1 v2 ... vd` per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("glove text", format!("line {}: {e}", lineno + 1)))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(
                    "glove text",
                    format!("line {}: non-finite value", lineno + 1),
                ));
            }
            let d = *dim.get_or_insert(values.len());
            if values.len() != d || d == 0 {
                return Err(Error::format(
                    "glove text",
                    format!("line {}: {} values, expected {d}", lineno + 1, values.len()),
                ));
            }
            vectors.insert(word.to_string(), DVector::from_vec(values));
        }
        let dim = dim.ok_or_else(|| Error::format("glove text", "no vectors"))?;
        Self::new(dim, vectors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let words: BTreeSet<&String> = self.vectors.keys().collect();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            for v in self.vectors[w].iter() {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Standard-normal vectors per word, keyed on (seed, word). Stands in for
    /// GloVe in simulations.
    pub fn synthetic<'a>(words: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Self {
        let vectors = words
            .into_iter()
            .map(|w| {
                let mut rng = keyed_rng(seed, &[tag::LEXICON, hash_str(w)]);
                let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                (w.to_string(), v)
            })
            .collect();
        Self {
            dim,
            vectors,
            oov: OovPolicy::Reject,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&DVector<f64>> {
        self.vectors.get(word)
    }

    fn resolve(&self, word: &str) -> Option<DVector<f64>> {
        match (self.vectors.get(word), self.oov) {
            (Some(v), _) => Some(v.clone()),
            (None, OovPolicy::Zero) => Some(DVector::zeros(self.dim)),
            (None, OovPolicy::Reject) => None,
        }
    }

    fn missing<'a>(&self, stimuli: impl IntoIterator<Item = &'a SentenceStimulus>) -> Vec<String> {
        let mut missing = BTreeSet::new();
        for s in stimuli {
            for t in &s.tokens {
                if self.resolve(&t.text).is_none() {
                    missing.insert(t.text.clone());
                }
            }
        }
        missing.into_iter().collect()
    }
}

fn oov_error(missing: &[String]) -> Error {
    Error::invalid(format!("words missing from lexicon: {}", missing.join(", ")))
}

/// Context vectors `c_1 = g(w_1)`, `c_t = (g(w_t) + c_{t-1}) / 2`.
pub fn glove_additive(sentence: &SentenceStimulus, lexicon: &GloveLexicon) -> Result<Vec<DVector<f64>>> {
    let missing = lexicon.missing([sentence]);
    if !missing.is_empty() {
        return Err(oov_error(&missing));
    }
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(sentence.len());
    for tok in &sentence.tokens {
        let g = lexicon.resolve(&tok.text).expect("checked above");
        let c = match out.last() {
            None => g,
            Some(prev) => (g + prev) * 0.5,
        };
        out.push(c);
    }
    Ok(out)
}

fn stack(
    model_id: &str,
    layer_id: &str,
    stimuli: &[SentenceStimulus],
    lexicon: &GloveLexicon,
    per_sentence: impl Fn(&SentenceStimulus) -> Result<Vec<DVector<f64>>>,
) -> Result<FeatureMatrix> {
    let missing = lexicon.missing(stimuli);
    if !missing.is_empty() {
        return Err(oov_error(&missing));
    }
    let n: usize = stimuli.iter().map(SentenceStimulus::len).sum();
    let mut rows = DMatrix::zeros(n, lexicon.dim());
    let mut keys = Vec::with_capacity(n);
    let mut tokens = Vec::with_capacity(n);
    let mut r = 0;
    for s in stimuli {
        for (tok, v) in s.tokens.iter().zip(per_sentence(s)?) {
            rows.row_mut(r).copy_from(&v.transpose());
            keys.push(StimulusKey::new(s.sentence_id.clone(), tok.position));
            tokens.push(tok.text.clone());
            r += 1;
        }
    }
    FeatureMatrix::new(model_id, layer_id, rows, keys, tokens, true)
}

/// Additive context vectors for every token of every stimulus.
pub fn glove_additive_matrix(stimuli: &[SentenceStimulus], lexicon: &GloveLexicon) -> Result<FeatureMatrix> {
    stack("glove-additive", "context", stimuli, lexicon, |s| {
        glove_additive(s, lexicon)
    })
}

/// Plain (out-of-context) word vectors for every token.
pub fn glove_word_matrix(stimuli: &[SentenceStimulus], lexicon: &GloveLexicon) -> Result<FeatureMatrix> {
    stack("glove", "word", stimuli, lexicon, |s| {
        Ok(s.tokens
            .iter()
            .map(|t| lexicon.resolve(&t.text).expect("checked by stack"))
            .collect())
    })
}

/// Binding of one activation row to its stimulus token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub sentence_id: String,
    pub position: usize,
    pub token: String,
}

/// `features.json` entry of the activation interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub model_id: String,
    pub layer_id: String,
    pub dim: usize,
    pub rows: usize,
    pub dtype: String,
    pub layout: String,
    pub prefix_causal: bool,
    pub bindings: Vec<Binding>,
    pub data: String,
    /// Extra fields written by the extractor (subword pooling policy,
    /// checkpoint name, determinism flag, ...).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Many(Vec<FeatureManifest>),
    One(FeatureManifest),
}

fn validate_manifest(m: &FeatureManifest) -> Result<()> {
    let what = format!("feature manifest {}/{}", m.model_id, m.layer_id);
    if m.dtype != "f32le" {
        return Err(Error::format(what, format!("dtype `{}` is not f32le", m.dtype)));
    }
    if m.layout != "row-major" {
        return Err(Error::format(what, format!("layout `{}` is not row-major", m.layout)));
    }
    if m.bindings.len() != m.rows {
        return Err(Error::shape(what, format!("{} bindings", m.rows), m.bindings.len()));
    }
    if m.dim == 0 {
        return Err(Error::format(what, "dim is 0"));
    }
    Ok(())
}

fn check_bindings(m: &FeatureManifest, stimuli: &[SentenceStimulus]) -> Result<()> {
    let by_id: HashMap<&str, &SentenceStimulus> = stimuli.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    for b in &m.bindings {
        let tok = by_id
            .get(b.sentence_id.as_str())
            .and_then(|s| s.tokens.get(b.position))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "{}/{} row ({}, {}) is not a stimulus token",
                    m.model_id, m.layer_id, b.sentence_id, b.position
                ))
            })?;
        if tok.text != b.token {
            return Err(Error::invalid(format!(
                "{}/{} row ({}, {}) binds `{}` but the stimulus has `{}`",
                m.model_id, m.layer_id, b.sentence_id, b.position, b.token, tok.text
            )));
        }
    }
    Ok(())
}

/// Read a `features.json` (one manifest or a list) and its payloads.
/// With `stimuli`, every row binding must name an existing token with the
/// same text.
pub fn load_activations(manifest_path: &Path, stimuli: Option<&[SentenceStimulus]>) -> Result<Vec<FeatureMatrix>> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let parsed: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("feature manifest {}", manifest_path.display()), e.to_string()))?;
    let manifests = match parsed {
        ManifestFile::Many(v) => v,
        ManifestFile::One(m) => vec![m],
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(manifests.len());
    for m in manifests {
        validate_manifest(&m)?;
        if !seen.insert((m.model_id.clone(), m.layer_id.clone())) {
            return Err(Error::invalid(format!(
                "duplicate feature matrix {}/{}",
                m.model_id, m.layer_id
            )));
        }
        if let Some(stimuli) = stimuli {
            check_bindings(&m, stimuli)?;
        }
        let path: PathBuf = base.join(&m.data);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let rows = decode_f32le(&bytes, m.rows, m.dim)
            .map_err(|e| Error::format(format!("feature payload {}", path.display()), e.to_string()))?;
        out.push(FeatureMatrix::new(
            m.model_id.clone(),
            m.layer_id.clone(),
            rows,
            m.bindings
                .iter()
                .map(|b| StimulusKey::new(b.sentence_id.clone(), b.position))
                .collect(),
            m.bindings.iter().map(|b| b.token.clone()).collect(),
            m.prefix_causal,
        )?);
    }
    Ok(out)
}

/// Write matrices in the interchange format: one payload per matrix and a
/// single `features.json` listing them all.
pub fn write_activations(dir: &Path, matrices: &[FeatureMatrix]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifests = Vec::with_capacity(matrices.len());
    for fm in matrices {
        if fm.tokens.len() != fm.len() {
            return Err(Error::invalid(format!(
                "{}/{} has no token text for its bindings",
                fm.model_id, fm.layer_id
            )));
        }
        let data = format!("{}__{}.f32", sanitize(&fm.model_id), sanitize(&fm.layer_id));
        write_matrix(&dir.join(&data), &fm.rows)?;
        manifests.push(FeatureManifest {
            model_id: fm.model_id.clone(),
            layer_id: fm.layer_id.clone(),
            dim: fm.dim(),
            rows: fm.len(),
            dtype: "f32le".into(),
            layout: "row-major".into(),
            prefix_causal: fm.prefix_causal,
            bindings: fm
                .row_index
                .iter()
                .zip(&fm.tokens)
                .map(|(k, t)| Binding {
                    sentence_id: k.sentence_id.clone(),
                    position: k.position,
                    token: t.clone(),
                })
                .collect(),
            data,
            extra: BTreeMap::new(),
        });
    }
    let path = dir.join("features.json");
    let text = serde_json::to_string_pretty(&manifests).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
