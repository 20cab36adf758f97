//! Synthetic brain data: an encoder trained on real responses predicts
//! responses for generated sentences, which then augment the training set of
//! a word-vector decoder.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{BrainResponse, SentenceStimulus, StimulusKey, WordToken};
use crate::error::{Error, Result};
use crate::eval::{make_folds, pairwise_accuracy, EvalReport, FoldSpec, PermutationReport};
use crate::features::{FeatureMatrix, GloveLexicon};
use crate::prep::NormalizationStats;
use crate::ridge::{predict, LambdaGrid, RidgeModel, RidgeOptions, RidgeSolver};
use crate::rng::{keyed_rng, tag};
use rand::seq::SliceRandom;

/// Synthetic responses carry repetition 0, like averaged real ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub sentence_id: String,
    pub position: usize,
    pub response: BrainResponse,
    pub encoder_model_id: String,
    pub encoder_layer_id: String,
}

/// Fit a z-scored ridge encoder from features to responses, penalty by GCV.
/// The returned model maps raw features to raw-scale responses.
pub fn train_encoder(features: &FeatureMatrix, responses: &[BrainResponse], grid: &LambdaGrid) -> Result<RidgeModel> {
    let keys: Vec<StimulusKey> = responses.iter().map(BrainResponse::key).collect();
    let x = features.select(&keys)?;
    let refs: Vec<&BrainResponse> = responses.iter().collect();
    let y = crate::data::response_matrix(&refs)?;
    let xs = NormalizationStats::fit(&x)?;
    let ys = NormalizationStats::fit(&y)?;
    let solver = RidgeSolver::new(&xs.apply(&x)?, RidgeOptions::default())?;
    let yz = ys.apply(&y)?;
    let gcv = solver.select(&yz, grid)?;
    Ok(solver.solve(&yz, gcv.selected)?.with_normalization(Some(xs), Some(ys)))
}

/// One synthetic response per feature row.
pub fn synthesize(
    encoder: &RidgeModel,
    features: &FeatureMatrix,
    sensors: usize,
    windows: usize,
    subject_id: &str,
) -> Result<Vec<SyntheticSample>> {
    if features.dim() != encoder.d_in() {
        return Err(Error::shape("encoder input", encoder.d_in(), features.dim()));
    }
    if sensors * windows != encoder.d_out() {
        return Err(Error::shape("encoder output", encoder.d_out(), sensors * windows));
    }
    let pred = predict(encoder, &features.rows)?;
    features
        .row_index
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let flat: Vec<f64> = pred.row(i).iter().copied().collect();
            Ok(SyntheticSample {
                sentence_id: key.sentence_id.clone(),
                position: key.position,
                response: BrainResponse {
                    subject_id: subject_id.to_string(),
                    sentence_id: key.sentence_id.clone(),
                    position: key.position,
                    repetition: 0,
                    values: DMatrix::from_row_slice(sensors, windows, &flat),
                },
                encoder_model_id: features.model_id.clone(),
                encoder_layer_id: features.layer_id.clone(),
            })
        })
        .collect()
}

/// Order (model, layer) pairs by macro accuracy, best first; ties by name.
pub fn rank_layers(reports: &[EvalReport]) -> Vec<(String, String, f64)> {
    let mut out: Vec<(String, String, f64)> = reports
        .iter()
        .map(|r| (r.model_id.clone(), r.layer_id.clone(), r.accuracy))
        .collect();
    out.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    });
    out
}

/// Word category decoded in the augmentation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    /// The last noun of each sentence.
    Noun,
    /// The main verb of each sentence.
    Verb,
    /// Both of the above, with pairs across categories.
    Both,
}

impl Category {
    pub fn candidates(self, s: &SentenceStimulus) -> Vec<usize> {
        let noun = s.tokens.iter().rposition(WordToken::is_noun);
        let verb = s.tokens.iter().position(WordToken::is_main_verb);
        let mut out: Vec<usize> = match self {
            Category::Noun => noun.into_iter().collect(),
            Category::Verb => verb.into_iter().collect(),
            Category::Both => noun.into_iter().chain(verb).collect(),
        };
        out.sort_unstable();
        out
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Noun => "noun",
            Category::Verb => "verb",
            Category::Both => "both",
        })
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noun" => Ok(Category::Noun),
            "verb" => Ok(Category::Verb),
            "both" => Ok(Category::Both),
            _ => Err(Error::invalid(format!("unknown category `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentOptions {
    pub category: Category,
    pub k: usize,
    pub n_perm: usize,
    pub seed: u64,
    /// Training weight of each synthetic sample relative to a real one.
    pub synthetic_weight: f64,
    pub grid: LambdaGrid,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            category: Category::Noun,
            k: 4,
            n_perm: 400,
            seed: 0,
            synthetic_weight: 1.0,
            grid: LambdaGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentFold {
    pub fold: usize,
    pub n_real_train: usize,
    pub n_synthetic: usize,
    pub n_test: usize,
    pub lambda_baseline: f64,
    pub lambda_augmented: f64,
    pub baseline_correct: u64,
    pub augmented_correct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub category: Category,
    pub baseline: f64,
    pub augmented: f64,
    pub baseline_correct: u64,
    pub augmented_correct: u64,
    pub total: u64,
    pub chance: Option<PermutationReport>,
    pub synthetic_weight: f64,
    pub folds: Vec<AugmentFold>,
}

impl AugmentationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,accuracy,std\n");
        out.push_str(&format!("baseline,{},\n", self.baseline));
        out.push_str(&format!("augmented,{},\n", self.augmented));
        if let Some(c) = &self.chance {
            out.push_str(&format!("chance,{},{}\n", c.mean, c.std));
        }
        out
    }
}

/// Real and synthetic decoder rows: word vector in, response out.
struct Rows {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    sentence: Vec<String>,
}

fn real_rows(
    stimuli: &[SentenceStimulus],
    responses: &[BrainResponse],
    lexicon: &GloveLexicon,
    category: Category,
) -> Result<Rows> {
    let by_key: HashMap<StimulusKey, &BrainResponse> = responses.iter().map(|r| (r.key(), r)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sentence = Vec::new();
    for s in stimuli {
        for pos in category.candidates(s) {
            let key = StimulusKey::new(s.sentence_id.clone(), pos);
            let r = by_key
                .get(&key)
                .ok_or_else(|| Error::invalid(format!("no response for ({}, {pos})", s.sentence_id)))?;
            xs.push(word_vector(lexicon, &s.tokens[pos].text)?);
            ys.push(r.flatten());
            sentence.push(s.sentence_id.clone());
        }
    }
    stack(xs, ys, sentence)
}

fn synthetic_rows(
    generated: &[SentenceStimulus],
    samples: &[SyntheticSample],
    lexicon: &GloveLexicon,
    category: Category,
) -> Result<Rows> {
    let by_id: HashMap<&str, &SentenceStimulus> = generated.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sentence = Vec::new();
    for sample in samples {
        let s = by_id
            .get(sample.sentence_id.as_str())
            .ok_or_else(|| Error::invalid(format!("synthetic sample for unknown sentence {}", sample.sentence_id)))?;
        if !category.candidates(s).contains(&sample.position) {
            continue;
        }
        xs.push(word_vector(lexicon, &s.tokens[sample.position].text)?);
        ys.push(sample.response.flatten());
        sentence.push(s.text());
    }
    stack(xs, ys, sentence)
}

fn word_vector(lexicon: &GloveLexicon, word: &str) -> Result<Vec<f64>> {
    lexicon
        .get(word)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::invalid(format!("word missing from lexicon: {word}")))
}

fn stack(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, sentence: Vec<String>) -> Result<Rows> {
    let n = xs.len();
    let dx = xs.first().map_or(0, Vec::len);
    let dy = ys.first().map_or(0, Vec::len);
    if let Some(bad) = ys.iter().find(|y| y.len() != dy) {
        return Err(Error::shape("response width", dy, bad.len()));
    }
    Ok(Rows {
        x: DMatrix::from_row_iterator(n, dx, xs.into_iter().flatten()),
        y: DMatrix::from_row_iterator(n, dy, ys.into_iter().flatten()),
        sentence,
    })
}

struct Decoded {
    lambda: f64,
    /// Test predictions in the real training rows' normalized space.
    pred: DMatrix<f64>,
}

/// Fit a z-scored decoder on `x`, `y` (optionally weighted) and predict `x_test`,
/// mapped into the space normalized by `y_ref`.
fn decode(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    weights: Option<&[f64]>,
    x_test: &DMatrix<f64>,
    y_ref: &NormalizationStats,
    grid: &LambdaGrid,
) -> Result<Decoded> {
    let xs = NormalizationStats::fit(x)?;
    let ys = NormalizationStats::fit(y)?;
    let xz = xs.apply(x)?;
    let solver = match weights {
        Some(w) => RidgeSolver::weighted(&xz, w, RidgeOptions::default())?,
        None => RidgeSolver::new(&xz, RidgeOptions::default())?,
    };
    let yz = ys.apply(y)?;
    let gcv = solver.select(&yz, grid)?;
    let model = solver.solve(&yz, gcv.selected)?.with_normalization(Some(xs), Some(ys));
    let raw = predict(&model, x_test)?;
    Ok(Decoded {
        lambda: gcv.selected,
        pred: y_ref.apply(&raw)?,
    })
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
}

/// Baseline (real only) versus augmented (real + synthetic) decoders, both
/// scored on held-out real responses with the 2v2 test. Chance comes from
/// permuting the baseline's training responses.
pub fn augmentation_experiment(
    stimuli: &[SentenceStimulus],
    responses: &[BrainResponse],
    generated: &[SentenceStimulus],
    synthetic: &[SyntheticSample],
    lexicon: &GloveLexicon,
    opts: &AugmentOptions,
) -> Result<AugmentationReport> {
    if !(opts.synthetic_weight > 0.0 && opts.synthetic_weight.is_finite()) {
        return Err(Error::invalid("synthetic weight must be positive"));
    }
    let folds = make_folds(stimuli, opts.k, opts.seed)?;
    let real = real_rows(stimuli, responses, lexicon, opts.category)?;
    let syn = synthetic_rows(generated, synthetic, lexicon, opts.category)?;
    if syn.x.nrows() > 0 && (syn.x.ncols(), syn.y.ncols()) != (real.x.ncols(), real.y.ncols()) {
        return Err(Error::shape(
            "synthetic rows",
            format!("{:?}", (real.x.ncols(), real.y.ncols())),
            format!("{:?}", (syn.x.ncols(), syn.y.ncols())),
        ));
    }
    let texts: HashMap<&str, String> = stimuli.iter().map(|s| (s.sentence_id.as_str(), s.text())).collect();
    let fold_of = |i: usize| folds.fold_of(&real.sentence[i]).expect("folds cover stimuli");

    let mut fold_results = Vec::with_capacity(opts.k);
    for f in 0..opts.k {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..real.x.nrows()).partition(|&i| fold_of(i) != f);
        if test.len() < 2 {
            return Err(Error::invalid(format!(
                "fold {f} has {} {} stimuli; at least 2 are needed",
                test.len(),
                opts.category
            )));
        }
        check_leakage(&folds, f, &texts, &syn.sentence)?;
        let x_train = real.x.select_rows(train.iter());
        let y_train = real.y.select_rows(train.iter());
        let x_test = real.x.select_rows(test.iter());
        let y_stats = NormalizationStats::fit(&y_train)?;
        let truth = y_stats.apply(&real.y.select_rows(test.iter()))?;
        let pairs = all_pairs(test.len());

        let base = decode(&x_train, &y_train, None, &x_test, &y_stats, &opts.grid)?;
        let aug = if syn.x.nrows() == 0 {
            decode(&x_train, &y_train, None, &x_test, &y_stats, &opts.grid)?
        } else {
            let x_aug = vstack(&x_train, &syn.x);
            let y_aug = vstack(&y_train, &syn.y);
            let weights = if opts.synthetic_weight == 1.0 {
                None
            } else {
                let mut w = vec![1.0; train.len()];
                w.extend(std::iter::repeat_n(opts.synthetic_weight, syn.x.nrows()));
                Some(w)
            };
            decode(&x_aug, &y_aug, weights.as_deref(), &x_test, &y_stats, &opts.grid)?
        };
        let b = pairwise_accuracy(&base.pred, &truth, &pairs)?;
        let a = pairwise_accuracy(&aug.pred, &truth, &pairs)?;
        fold_results.push(AugmentFold {
            fold: f,
            n_real_train: train.len(),
            n_synthetic: syn.x.nrows(),
            n_test: test.len(),
            lambda_baseline: base.lambda,
            lambda_augmented: aug.lambda,
            baseline_correct: b.correct,
            augmented_correct: a.correct,
            total: b.total,
        });
    }

    let chance = if opts.n_perm > 0 {
        Some(chance(&real, &folds, opts)?)
    } else {
        None
    };
    let total: u64 = fold_results.iter().map(|f| f.total).sum();
    let baseline_correct: u64 = fold_results.iter().map(|f| f.baseline_correct).sum();
    let augmented_correct: u64 = fold_results.iter().map(|f| f.augmented_correct).sum();
    Ok(AugmentationReport {
        category: opts.category,
        baseline: baseline_correct as f64 / total as f64,
        augmented: augmented_correct as f64 / total as f64,
        baseline_correct,
        augmented_correct,
        total,
        chance,
        synthetic_weight: opts.synthetic_weight,
        folds: fold_results,
    })
}

/// Synthetic sentences must not repeat the text of a held-out real sentence.
fn check_leakage(
    folds: &FoldSpec,
    fold: usize,
    texts: &HashMap<&str, String>,
    synthetic_texts: &[String],
) -> Result<()> {
    let held_out: BTreeSet<&str> = folds
        .assignment
        .iter()
        .filter(|(_, &f)| f == fold)
        .filter_map(|(id, _)| texts.get(id.as_str()).map(String::as_str))
        .collect();
    if let Some(t) = synthetic_texts.iter().find(|t| held_out.contains(t.as_str())) {
        return Err(Error::invalid(format!(
            "synthetic sentence \"{t}\" repeats a held-out real sentence in fold {fold}"
        )));
    }
    Ok(())
}

fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn chance(real: &Rows, folds: &FoldSpec, opts: &AugmentOptions) -> Result<PermutationReport> {
    let perms: Vec<u64> = (0..opts.n_perm as u64).collect();
    let accs = crate::par::map(&perms, |&p| -> Result<f64> {
        let mut correct = 0;
        let mut total = 0;
        for f in 0..opts.k {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..real.x.nrows()).partition(|&i| folds.fold_of(&real.sentence[i]) != Some(f));
            let mut shuffled = train.clone();
            shuffled.shuffle(&mut keyed_rng(opts.seed, &[tag::PERMUTATION, p, f as u64]));
            let x_train = real.x.select_rows(train.iter());
            let y_train = real.y.select_rows(shuffled.iter());
            let y_stats = NormalizationStats::fit(&y_train)?;
            let truth = y_stats.apply(&real.y.select_rows(test.iter()))?;
            let x_test = real.x.select_rows(test.iter());
            let d = decode(&x_train, &y_train, None, &x_test, &y_stats, &opts.grid)?;
            let r = pairwise_accuracy(&d.pred, &truth, &all_pairs(test.len()))?;
            correct += r.correct;
            total += r.total;
        }
        Ok(correct as f64 / total as f64)
    });
    Ok(PermutationReport::from_accuracies(
        opts.seed,
        accs.into_iter().collect::<Result<_>>()?,
    ))
}
