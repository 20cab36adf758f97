//! The 2v2 pairwise test, sentence-level folds and cross-validated scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{BrainResponse, RegionAtlas, RegionSelector, SentenceStimulus, StimulusKey, Voice, WordToken};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::prep::NormalizationStats;
use crate::ridge::{LambdaGrid, LambdaSelection, RidgeOptions, RidgeSolver};
use crate::rng::{keyed_rng, tag};

fn euclid(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        acc += d * d;
    }
    acc.sqrt()
}

/// Whether pair `(i, j)` is matched correctly: the true assignment is at
/// least as close as the swapped one. Ties count as correct.
pub fn pair_correct(pred: &DMatrix<f64>, truth: &DMatrix<f64>, i: usize, j: usize) -> bool {
    let same = euclid(pred, i, truth, i) + euclid(pred, j, truth, j);
    let swapped = euclid(pred, i, truth, j) + euclid(pred, j, truth, i);
    same <= swapped
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub correct: u64,
    pub total: u64,
    pub outcomes: Vec<bool>,
}

impl PairwiseResult {
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.total)
    }
}

fn ratio(correct: u64, total: u64) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        correct as f64 / total as f64
    }
}

/// Score every listed pair of row indices.
pub fn pairwise_accuracy(
    pred: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    pairs: &[(usize, usize)],
) -> Result<PairwiseResult> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "predicted vs true responses",
            format!("{:?}", truth.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("pairwise test needs at least one pair"));
    }
    let n = pred.nrows();
    let mut outcomes = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i == j || i >= n || j >= n {
            return Err(Error::invalid(format!(
                "pair ({i}, {j}) is not two distinct rows of {n}"
            )));
        }
        outcomes.push(pair_correct(pred, truth, i, j));
    }
    let correct = outcomes.iter().filter(|&&c| c).count() as u64;
    Ok(PairwiseResult {
        correct,
        total: pairs.len() as u64,
        outcomes,
    })
}

/// Sentence-level fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSpec {
    pub fn fold_of(&self, sentence_id: &str) -> Option<usize> {
        self.assignment.get(sentence_id).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffle each voice group with a keyed RNG, concatenate the groups
/// (active first) and deal sentences round-robin into `k` folds.
pub fn make_folds(stimuli: &[SentenceStimulus], k: usize, seed: u64) -> Result<FoldSpec> {
    if k < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    if stimuli.len() < k {
        return Err(Error::invalid(format!(
            "{} sentences cannot fill {k} folds",
            stimuli.len()
        )));
    }
    let mut order = Vec::with_capacity(stimuli.len());
    for (vi, voice) in [Voice::Active, Voice::Passive].into_iter().enumerate() {
        let mut ids: Vec<&str> = stimuli
            .iter()
            .filter(|s| s.voice == voice)
            .map(|s| s.sentence_id.as_str())
            .collect();
        ids.sort_unstable();
        ids.shuffle(&mut keyed_rng(seed, &[tag::FOLDS, vi as u64]));
        order.extend(ids);
    }
    let mut assignment = BTreeMap::new();
    for (i, id) in order.into_iter().enumerate() {
        if assignment.insert(id.to_string(), i % k).is_some() {
            return Err(Error::invalid(format!("duplicate sentence id {id}")));
        }
    }
    Ok(FoldSpec { k, seed, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosClass {
    Noun,
    /// Main verbs; forms of "be" are excluded.
    Verb,
    Determiner,
    Adjective,
}

impl PosClass {
    pub fn matches(self, token: &WordToken) -> bool {
        match self {
            PosClass::Noun => token.is_noun(),
            PosClass::Verb => token.is_main_verb(),
            PosClass::Determiner => token.is_determiner(),
            PosClass::Adjective => token.is_adjective(),
        }
    }

    fn plural(self) -> &'static str {
        match self {
            PosClass::Noun => "nouns",
            PosClass::Verb => "verbs",
            PosClass::Determiner => "determiners",
            PosClass::Adjective => "adjectives",
        }
    }
}

/// Stimulus restriction by voice and/or part of speech. Written as `all`,
/// `active`, `nouns` or `passive-verbs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset {
    pub voice: Option<Voice>,
    pub pos: Option<PosClass>,
}

impl Subset {
    pub const ALL: Subset = Subset { voice: None, pos: None };

    pub fn contains(&self, token: &WordToken, voice: Voice) -> bool {
        self.voice.is_none_or(|v| v == voice) && self.pos.is_none_or(|p| p.matches(token))
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let voice = self.voice.map(|v| match v {
            Voice::Active => "active",
            Voice::Passive => "passive",
        });
        match (voice, self.pos.map(PosClass::plural)) {
            (None, None) => f.write_str("all"),
            (Some(v), None) => f.write_str(v),
            (None, Some(p)) => f.write_str(p),
            (Some(v), Some(p)) => write!(f, "{v}-{p}"),
        }
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Subset::ALL;
        if s == "all" {
            return Ok(out);
        }
        for part in s.split('-') {
            match part {
                "active" if out.voice.is_none() => out.voice = Some(Voice::Active),
                "passive" if out.voice.is_none() => out.voice = Some(Voice::Passive),
                "nouns" if out.pos.is_none() => out.pos = Some(PosClass::Noun),
                "verbs" if out.pos.is_none() => out.pos = Some(PosClass::Verb),
                "determiners" if out.pos.is_none() => out.pos = Some(PosClass::Determiner),
                "adjectives" if out.pos.is_none() => out.pos = Some(PosClass::Adjective),
                _ => return Err(Error::invalid(format!("unknown subset `{s}`"))),
            }
        }
        Ok(out)
    }
}

impl Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which stimuli a subset restricts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetScope {
    /// Train and test on the subset only.
    #[default]
    TrainAndTest,
    /// Train on every stimulus, restrict only the scored pairs.
    TestOnly,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub grid: LambdaGrid,
    pub lambda_selection: LambdaSelection,
    pub subset_scope: SubsetScope,
    /// Skip pairs whose two stimuli are the same word.
    pub exclude_same_word: bool,
    /// Score at most this many pairs per fold, drawn with `seed`.
    pub pair_cap: Option<usize>,
    pub seed: u64,
}

/// Features and responses aligned row by row, with fold and token metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub model_id: String,
    pub layer_id: String,
    pub region: RegionSelector,
    pub keys: Vec<StimulusKey>,
    pub tokens: Vec<WordToken>,
    pub voices: Vec<Voice>,
    pub fold: Vec<usize>,
    pub k: usize,
    /// Windows per sensor in each response row.
    pub windows: usize,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Dataset {
    /// One row per response. Every response must be unique per stimulus and
    /// have a feature row and a stimulus token. With a region, only the
    /// columns of its sensors are kept.
    pub fn build(
        features: &FeatureMatrix,
        responses: &[BrainResponse],
        stimuli: &[SentenceStimulus],
        folds: &FoldSpec,
        region: Option<(&RegionAtlas, RegionSelector)>,
    ) -> Result<Self> {
        let by_id: HashMap<&str, &SentenceStimulus> = stimuli.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
        let mut sorted: Vec<&BrainResponse> = responses.iter().collect();
        sorted.sort_by_key(|r| r.key());
        for w in sorted.windows(2) {
            if w[0].key() == w[1].key() {
                return Err(Error::invalid(format!(
                    "several responses for ({}, {}); average or select repetitions first",
                    w[0].sentence_id, w[0].position
                )));
            }
        }
        let Some(first) = sorted.first() else {
            return Err(Error::invalid("no responses to evaluate"));
        };
        let (sensors, windows) = first.values.shape();
        let cols: Vec<usize> = match region {
            Some((atlas, sel)) => {
                if atlas.sensors() != sensors {
                    return Err(Error::shape("atlas sensor count", sensors, atlas.sensors()));
                }
                let s = atlas.sensors_in(&sel);
                if s.is_empty() {
                    return Err(Error::invalid(format!("region {sel} has no sensors")));
                }
                s.iter().flat_map(|&s| s * windows..(s + 1) * windows).collect()
            }
            None => (0..sensors * windows).collect(),
        };
        let n = sorted.len();
        let mut keys = Vec::with_capacity(n);
        let mut tokens = Vec::with_capacity(n);
        let mut voices = Vec::with_capacity(n);
        let mut fold = Vec::with_capacity(n);
        let mut feature_rows = Vec::with_capacity(n);
        let mut y = DMatrix::zeros(n, cols.len());
        for (i, r) in sorted.iter().enumerate() {
            let key = r.key();
            if r.values.shape() != (sensors, windows) {
                return Err(Error::shape(
                    format!("response ({}, {})", key.sentence_id, key.position),
                    format!("{:?}", (sensors, windows)),
                    format!("{:?}", r.values.shape()),
                ));
            }
            let stim = by_id
                .get(key.sentence_id.as_str())
                .ok_or_else(|| Error::invalid(format!("response for unknown sentence {}", key.sentence_id)))?;
            let token = stim.tokens.get(key.position).ok_or_else(|| {
                Error::invalid(format!(
                    "response position {} beyond sentence {}",
                    key.position, key.sentence_id
                ))
            })?;
            let f = folds
                .fold_of(&key.sentence_id)
                .ok_or_else(|| Error::invalid(format!("sentence {} has no fold", key.sentence_id)))?;
            let row = features.row_of(&key).ok_or_else(|| {
                Error::invalid(format!(
                    "{}/{} has no row for ({}, {})",
                    features.model_id, features.layer_id, key.sentence_id, key.position
                ))
            })?;
            for (c, &src) in cols.iter().enumerate() {
                y[(i, c)] = r.values[(src / windows, src % windows)];
            }
            keys.push(key);
            tokens.push(token.clone());
            voices.push(stim.voice);
            fold.push(f);
            feature_rows.push(row);
        }
        Ok(Self {
            model_id: features.model_id.clone(),
            layer_id: features.layer_id.clone(),
            region: region.map(|(_, s)| s).unwrap_or(RegionSelector::ALL),
            keys,
            tokens,
            voices,
            fold,
            k: folds.k,
            windows,
            x: features.rows.select_rows(feature_rows.iter()),
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Sensors kept in each response row.
    pub fn sensors(&self) -> usize {
        self.y.ncols() / self.windows
    }

    pub fn in_subset(&self, row: usize, subset: &Subset) -> bool {
        subset.contains(&self.tokens[row], self.voices[row])
    }
}

/// One fold's held-out predictions in the training fold's normalized
/// response space.
#[derive(Debug, Clone)]
pub struct FoldFit {
    pub fold: usize,
    pub lambda: f64,
    pub n_train: usize,
    /// Dataset rows of the held-out stimuli, in prediction order.
    pub test_rows: Vec<usize>,
    pub pred: DMatrix<f64>,
    pub truth: DMatrix<f64>,
}

/// Normalize on the training rows, select λ by GCV (shared or per output
/// column; the reported λ is then the mean), fit and predict the test
/// rows. With `permutation = Some(p)`, training responses are shuffled by an
/// RNG keyed on (seed, p, fold) before fitting.
pub fn fit_fold(
    ds: &Dataset,
    fold: usize,
    train_rows: &[usize],
    test_rows: &[usize],
    grid: &LambdaGrid,
    selection: LambdaSelection,
    permutation: Option<(u64, u64)>,
) -> Result<FoldFit> {
    let x_train = ds.x.select_rows(train_rows.iter());
    let mut y_rows = train_rows.to_vec();
    if let Some((seed, p)) = permutation {
        y_rows.shuffle(&mut keyed_rng(seed, &[tag::PERMUTATION, p, fold as u64]));
    }
    let y_train = ds.y.select_rows(y_rows.iter());
    let x_stats = NormalizationStats::fit(&x_train)?;
    let y_stats = NormalizationStats::fit(&y_train)?;
    let xz = x_stats.apply(&x_train)?;
    let yz = y_stats.apply(&y_train)?;
    let solver = RidgeSolver::new(&xz, RidgeOptions::default())?;
    let (model, _) = solver.fit_selected(&yz, grid, selection)?;
    let x_test = x_stats.apply(&ds.x.select_rows(test_rows.iter()))?;
    let mut pred = x_test * &model.weights;
    for mut row in pred.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += model.intercept[j];
        }
    }
    let truth = y_stats.apply(&ds.y.select_rows(test_rows.iter()))?;
    Ok(FoldFit {
        fold,
        lambda: model.lambda,
        n_train: train_rows.len(),
        test_rows: test_rows.to_vec(),
        pred,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub lambda: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub correct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub layer_id: String,
    pub region: RegionSelector,
    pub subset: Subset,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
    pub folds: Vec<FoldResult>,
}

impl EvalReport {
    pub(crate) fn pool(ds: &Dataset, subset: Subset, folds: Vec<FoldResult>) -> Result<Self> {
        let correct = folds.iter().map(|f| f.correct).sum();
        let total = folds.iter().map(|f| f.total).sum();
        if total == 0 {
            return Err(Error::invalid("no scoreable pairs in any fold"));
        }
        Ok(Self {
            model_id: ds.model_id.clone(),
            layer_id: ds.layer_id.clone(),
            region: ds.region,
            subset,
            correct,
            total,
            accuracy: ratio(correct, total),
            folds,
        })
    }
}

/// All unordered pairs of distinct local indices, optionally skipping
/// same-word pairs and capped by a keyed draw. Pairs come back sorted.
fn test_pairs(ds: &Dataset, rows: &[usize], opts: &EvalOptions, fold: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            if opts.exclude_same_word && ds.tokens[rows[a]].text == ds.tokens[rows[b]].text {
                continue;
            }
            pairs.push((a, b));
        }
    }
    if let Some(cap) = opts.pair_cap {
        if pairs.len() > cap {
            let mut rng = keyed_rng(opts.seed, &[tag::PAIR_CAP, fold as u64]);
            let mut idx = rand::seq::index::sample(&mut rng, pairs.len(), cap).into_vec();
            idx.sort_unstable();
            pairs = idx.into_iter().map(|i| pairs[i]).collect();
        }
    }
    pairs
}

fn fold_rows(ds: &Dataset, fold: usize, subset: &Subset, scope: SubsetScope) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..ds.len() {
        let inside = ds.in_subset(i, subset);
        if ds.fold[i] == fold {
            if inside {
                test.push(i);
            }
        } else if inside || scope == SubsetScope::TestOnly {
            train.push(i);
        }
    }
    (train, test)
}

fn eval_fold(
    ds: &Dataset,
    fold: usize,
    subset: &Subset,
    opts: &EvalOptions,
    permutation: Option<(u64, u64)>,
) -> Result<FoldResult> {
    let (train, test) = fold_rows(ds, fold, subset, opts.subset_scope);
    if test.len() < 2 {
        return Err(Error::invalid(format!(
            "fold {fold} has {} test stimuli in subset {subset}; at least 2 are needed",
            test.len()
        )));
    }
    let fit = fit_fold(ds, fold, &train, &test, &opts.grid, opts.lambda_selection, permutation)?;
    let pairs = test_pairs(ds, &test, opts, fold);
    let (correct, total) = if pairs.is_empty() {
        (0, 0)
    } else {
        let r = pairwise_accuracy(&fit.pred, &fit.truth, &pairs)?;
        (r.correct, r.total)
    };
    Ok(FoldResult {
        fold,
        lambda: fit.lambda,
        n_train: train.len(),
        n_test: test.len(),
        correct,
        total,
    })
}

/// Pooled cross-validated 2v2 accuracy of one dataset on one subset.
pub fn evaluate(ds: &Dataset, subset: Subset, opts: &EvalOptions) -> Result<EvalReport> {
    let folds: Vec<usize> = (0..ds.k).collect();
    let results = crate::par::map(&folds, |&f| eval_fold(ds, f, &subset, opts, None));
    EvalReport::pool(ds, subset, results.into_iter().collect::<Result<_>>()?)
}

/// Build the aligned dataset and evaluate it.
pub fn cross_validated_eval(
    features: &FeatureMatrix,
    responses: &[BrainResponse],
    stimuli: &[SentenceStimulus],
    folds: &FoldSpec,
    subset: Subset,
    region: Option<(&RegionAtlas, RegionSelector)>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let ds = Dataset::build(features, responses, stimuli, folds, region)?;
    evaluate(&ds, subset, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub n_perm: usize,
    pub seed: u64,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for one permutation.
    pub std: f64,
}

impl PermutationReport {
    pub fn from_accuracies(seed: u64, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len();
        let mean = accuracies.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n_perm: n,
            seed,
            accuracies,
            mean,
            std,
        }
    }
}

/// Chance distribution: rerun the pipeline with training responses shuffled
/// among training stimuli; test bindings stay true.
pub fn permutation_test(
    ds: &Dataset,
    subset: Subset,
    opts: &EvalOptions,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationReport> {
    if n_perm == 0 {
        return Err(Error::invalid("permutation count must be at least 1"));
    }
    let jobs: Vec<(u64, usize)> = (0..n_perm as u64)
        .flat_map(|p| (0..ds.k).map(move |f| (p, f)))
        .collect();
    let results = crate::par::map(&jobs, |&(p, f)| eval_fold(ds, f, &subset, opts, Some((seed, p))));
    let mut accuracies = Vec::with_capacity(n_perm);
    let mut it = results.into_iter();
    for _ in 0..n_perm {
        let folds: Vec<FoldResult> = it.by_ref().take(ds.k).collect::<Result<_>>()?;
        accuracies.push(EvalReport::pool(ds, subset, folds)?.accuracy);
    }
    Ok(PermutationReport::from_accuracies(seed, accuracies))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::builtin;
    use crate::sim::{SimConfig, SimWorld};

    fn m(rows: &[[f64; 2]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
    }

    #[test]
    fn perfect_swapped_and_tied_pairs() {
        let truth = m(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(pairwise_accuracy(&truth, &truth, &[(0, 1)]).unwrap().outcomes[0]);
        let swapped = m(&[[1.0, 1.0], [0.0, 0.0]]);
        assert!(!pairwise_accuracy(&swapped, &truth, &[(0, 1)]).unwrap().outcomes[0]);
        let same = m(&[[0.3, 0.3], [0.3, 0.3]]);
        assert!(pairwise_accuracy(&same, &same, &[(0, 1)]).unwrap().outcomes[0]);
        assert!(pairwise_accuracy(&truth, &truth, &[]).is_err());
        assert!(pairwise_accuracy(&truth, &truth, &[(1, 1)]).is_err());
    }

    #[test]
    fn folds_balanced_and_stratified() {
        let stimuli = builtin::passact2();
        let folds = make_folds(&stimuli, 5, 1).unwrap();
        let mut sizes = folds.sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![7, 7, 6, 6, 6]);
        for f in 0..5 {
            let active = stimuli
                .iter()
                .filter(|s| s.voice == Voice::Active && folds.fold_of(&s.sentence_id) == Some(f))
                .count();
            assert!((3..=4).contains(&active));
        }
        assert_eq!(folds, make_folds(&stimuli, 5, 1).unwrap());
        assert_ne!(folds, make_folds(&stimuli, 5, 2).unwrap());
        assert!(make_folds(&stimuli, 1, 1).is_err());
        assert!(make_folds(&stimuli[..3], 4, 1).is_err());
    }

    #[test]
    fn subset_names_round_trip() {
        for s in [
            "all",
            "active",
            "passive",
            "nouns",
            "verbs",
            "determiners",
            "passive-nouns",
        ] {
            assert_eq!(s.parse::<Subset>().unwrap().to_string(), s);
        }
        assert!("nouns-verbs".parse::<Subset>().is_err());
        assert!("birds".parse::<Subset>().is_err());
    }

    fn world(noise: f64) -> SimWorld {
        SimWorld::build(SimConfig {
            noise_sigma: noise,
            seed: 4,
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn noiseless_world_scores_one() {
        let w = world(0.0);
        let folds = make_folds(&w.stimuli, 5, 0).unwrap();
        let report = cross_validated_eval(
            &w.features,
            &w.averaged(),
            &w.stimuli,
            &folds,
            Subset::ALL,
            None,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(report.correct, report.total);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.folds.len(), 5);
    }

    #[test]
    fn noun_subset_pairs_match_enumeration() {
        let w = world(0.5);
        let folds = make_folds(&w.stimuli, 5, 0).unwrap();
        let subset: Subset = "nouns".parse().unwrap();
        let report = cross_validated_eval(
            &w.features,
            &w.averaged(),
            &w.stimuli,
            &folds,
            subset,
            None,
            &EvalOptions::default(),
        )
        .unwrap();
        let mut expected = 0;
        for f in 0..5 {
            let nouns = w
                .stimuli
                .iter()
                .filter(|s| folds.fold_of(&s.sentence_id) == Some(f))
                .flat_map(|s| s.tokens.iter())
                .filter(|t| t.is_noun())
                .count() as u64;
            expected += nouns * (nouns - 1) / 2;
        }
        assert_eq!(report.total, expected);
    }

    #[test]
    fn pair_cap_limits_and_is_deterministic() {
        let w = world(1.0);
        let folds = make_folds(&w.stimuli, 4, 0).unwrap();
        let ds = Dataset::build(&w.features, &w.averaged(), &w.stimuli, &folds, None).unwrap();
        let opts = EvalOptions {
            pair_cap: Some(50),
            seed: 9,
            ..EvalOptions::default()
        };
        let a = evaluate(&ds, Subset::ALL, &opts).unwrap();
        assert_eq!(a.total, 200);
        assert_eq!(a, evaluate(&ds, Subset::ALL, &opts).unwrap());
    }

    #[test]
    fn duplicate_responses_rejected() {
        let w = SimWorld::build(SimConfig {
            repetitions: 2,
            ..SimConfig::default()
        })
        .unwrap();
        let folds = make_folds(&w.stimuli, 5, 0).unwrap();
        assert!(Dataset::build(&w.features, &w.responses, &w.stimuli, &folds, None).is_err());
    }

    #[test]
    fn permutation_reproducible() {
        let w = world(0.5);
        let folds = make_folds(&w.stimuli, 5, 0).unwrap();
        let ds = Dataset::build(&w.features, &w.averaged(), &w.stimuli, &folds, None).unwrap();
        let opts = EvalOptions::default();
        let a = permutation_test(&ds, Subset::ALL, &opts, 1, 17).unwrap();
        let b = permutation_test(&ds, Subset::ALL, &opts, 1, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_perm, 1);
        let c = permutation_test(&ds, Subset::ALL, &opts, 5, 17).unwrap();
        assert!(c.std > 0.0);
        assert!(permutation_test(&ds, Subset::ALL, &opts, 0, 17).is_err());
    }
}
