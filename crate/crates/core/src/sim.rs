//! Linear-Gaussian ground truth: responses are `x·W + b + ε` for known `W`,
//! `b` and noise level.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{builtin, BrainResponse, Epoch, SentenceStimulus};
use crate::error::{Error, Result};
use crate::features::{glove_additive_matrix, FeatureMatrix, GloveLexicon};
use crate::rng::{hash_str, keyed_rng, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    #[serde(skip)]
    pub weights: DMatrix<f64>,
    pub intercept: Vec<f64>,
    pub sensors: usize,
    pub windows: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GroundTruthModel {
    pub fn d_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.sensors * self.windows
    }

    /// Noiseless responses, one row per feature row.
    pub fn signal(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.d_in() {
            return Err(Error::shape("simulator features", self.d_in(), x.ncols()));
        }
        let mut out = x * &self.weights;
        for mut row in out.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += self.intercept[j];
            }
        }
        Ok(out)
    }
}

/// Standard-normal weights (`d_in × sensors·windows`) and intercept.
pub fn make_truth(d_in: usize, sensors: usize, windows: usize, seed: u64) -> Result<GroundTruthModel> {
    if d_in == 0 || sensors == 0 || windows == 0 {
        return Err(Error::invalid(format!(
            "simulator dimensions must be positive, got d_in={d_in} sensors={sensors} windows={windows}"
        )));
    }
    let d_out = sensors * windows;
    let mut rng = keyed_rng(seed, &[tag::TRUTH_WEIGHTS]);
    let weights = DMatrix::from_fn(d_in, d_out, |_, _| StandardNormal.sample(&mut rng));
    let mut rng = keyed_rng(seed, &[tag::TRUTH_INTERCEPT]);
    let intercept = (0..d_out).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(GroundTruthModel {
        weights,
        intercept,
        sensors,
        windows,
        noise_sigma: 0.0,
        seed,
    })
}

/// `repetitions` noisy copies of every feature row's response, numbered
/// from one. Noise is keyed on (seed, sentence, position, repetition), so a row's
/// responses do not depend on which other rows are simulated.
pub fn simulate(
    truth: &GroundTruthModel,
    features: &FeatureMatrix,
    repetitions: u32,
    noise_sigma: f64,
    subject_id: &str,
) -> Result<Vec<BrainResponse>> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    if repetitions == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let signal = truth.signal(&features.rows)?;
    let normal = Normal::new(0.0, noise_sigma).expect("sigma validated");
    let mut out = Vec::with_capacity(features.len() * repetitions as usize);
    for (i, key) in features.row_index.iter().enumerate() {
        for rep in 1..=repetitions {
            let mut rng = keyed_rng(
                truth.seed,
                &[tag::NOISE, hash_str(&key.sentence_id), key.position as u64, rep as u64],
            );
            let values = DMatrix::from_fn(truth.sensors, truth.windows, |s, w| {
                let v = signal[(i, s * truth.windows + w)];
                if noise_sigma > 0.0 {
                    v + normal.sample(&mut rng)
                } else {
                    v
                }
            });
            out.push(BrainResponse {
                subject_id: subject_id.to_string(),
                sentence_id: key.sentence_id.clone(),
                position: key.position,
                repetition: rep,
                values,
            });
        }
    }
    Ok(out)
}

/// Expand windowed responses into epochs by holding each window value for
/// `samples_per_window` samples.
pub fn to_epochs(responses: &[BrainResponse], samples_per_window: usize, sample_rate: f64) -> Vec<Epoch> {
    responses
        .iter()
        .map(|r| Epoch {
            subject_id: r.subject_id.clone(),
            sentence_id: r.sentence_id.clone(),
            position: r.position,
            repetition: r.repetition,
            samples: DMatrix::from_fn(r.sensors(), r.windows() * samples_per_window, |s, t| {
                r.values[(s, t / samples_per_window)]
            }),
            sample_rate,
        })
        .collect()
}

/// Parameters of a complete simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sensors: usize,
    pub windows: usize,
    pub lexicon_dim: usize,
    pub noise_sigma: f64,
    pub repetitions: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sensors: 6,
            windows: 5,
            lexicon_dim: 8,
            noise_sigma: 0.0,
            repetitions: 1,
            seed: 0,
        }
    }
}

/// Shipped stimuli, a synthetic lexicon covering them, additive-context
/// features and simulated responses for the real (PassAct2) sentences.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub config: SimConfig,
    pub stimuli: Vec<SentenceStimulus>,
    pub generated: Vec<SentenceStimulus>,
    pub lexicon: GloveLexicon,
    pub features: FeatureMatrix,
    pub truth: GroundTruthModel,
    /// Repetitions 1..=r, per stimulus token.
    pub responses: Vec<BrainResponse>,
}

impl SimWorld {
    pub fn build(config: SimConfig) -> Result<Self> {
        Self::build_with(config, builtin::passact2(), builtin::passact2_generated())
    }

    pub fn build_with(
        config: SimConfig,
        stimuli: Vec<SentenceStimulus>,
        generated: Vec<SentenceStimulus>,
    ) -> Result<Self> {
        let words: BTreeSet<&str> = stimuli
            .iter()
            .chain(&generated)
            .flat_map(|s| s.tokens.iter().map(|t| t.text.as_str()))
            .collect();
        let lexicon = GloveLexicon::synthetic(words, config.lexicon_dim, config.seed);
        let features = glove_additive_matrix(&stimuli, &lexicon)?;
        let truth = make_truth(config.lexicon_dim, config.sensors, config.windows, config.seed)?;
        let truth = GroundTruthModel {
            noise_sigma: config.noise_sigma,
            ..truth
        };
        let responses = simulate(&truth, &features, config.repetitions, config.noise_sigma, "sim")?;
        Ok(Self {
            config,
            stimuli,
            generated,
            lexicon,
            features,
            truth,
            responses,
        })
    }

    /// Repetition-averaged responses (repetition 0).
    pub fn averaged(&self) -> Vec<BrainResponse> {
        let r = self.config.repetitions as usize;
        self.responses
            .chunks(r)
            .map(|group| {
                let mut acc = DMatrix::zeros(self.truth.sensors, self.truth.windows);
                for g in group {
                    acc += &g.values;
                }
                BrainResponse {
                    repetition: 0,
                    values: acc / r as f64,
                    ..group[0].clone()
                }
            })
            .collect()
    }

    pub fn first_repetition(&self) -> Vec<BrainResponse> {
        self.responses.iter().filter(|r| r.repetition == 1).cloned().collect()
    }
}
