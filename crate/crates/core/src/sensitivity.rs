//! Micro-context tests: pairs of sentences that differ in one earlier word,
//! scored on a later word they share, plus sign-agreement maps.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{BrainResponse, SentenceStimulus, StimulusKey, WordToken};
use crate::error::{Error, Result};
use crate::eval::{fit_fold, pairwise_accuracy, Dataset, EvalReport, FoldResult, FoldSpec, Subset};
use crate::features::FeatureMatrix;
use crate::ridge::{LambdaGrid, LambdaSelection};

/// Part of speech of the word that differs between the two sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariedPos {
    Noun,
    Verb,
    #[serde(rename = "det")]
    Determiner,
    #[serde(rename = "adj")]
    Adjective,
}

impl VariedPos {
    pub const ALL: [VariedPos; 4] = [
        VariedPos::Noun,
        VariedPos::Verb,
        VariedPos::Determiner,
        VariedPos::Adjective,
    ];

    fn matches(self, t: &WordToken) -> bool {
        match self {
            VariedPos::Noun => t.is_noun(),
            VariedPos::Verb => t.is_main_verb(),
            VariedPos::Determiner => t.is_determiner(),
            VariedPos::Adjective => t.is_adjective(),
        }
    }
}

impl fmt::Display for VariedPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariedPos::Noun => "noun",
            VariedPos::Verb => "verb",
            VariedPos::Determiner => "det",
            VariedPos::Adjective => "adj",
        })
    }
}

impl FromStr for VariedPos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noun" => Ok(VariedPos::Noun),
            "verb" => Ok(VariedPos::Verb),
            "det" | "determiner" => Ok(VariedPos::Determiner),
            "adj" | "adjective" => Ok(VariedPos::Adjective),
            _ => Err(Error::invalid(format!(
                "unknown sensitivity type `{s}` (expected noun, verb, det or adj)"
            ))),
        }
    }
}

/// Which later token of each sentence is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateRule {
    /// The first determiner after the sentence's first verb.
    DeterminerAfterVerb,
    /// The first noun after the varied (or inserted) word.
    NounAfterVaried,
}

impl CandidateRule {
    fn locate(self, tokens: &[WordToken], varied: usize) -> Option<usize> {
        let after =
            |start: usize, pred: fn(&WordToken) -> bool| tokens.iter().skip(start).position(pred).map(|i| i + start);
        match self {
            CandidateRule::DeterminerAfterVerb => {
                let verb = tokens.iter().position(WordToken::is_verb)?;
                after(verb + 1, WordToken::is_determiner)
            }
            CandidateRule::NounAfterVaried => after(varied + 1, WordToken::is_noun),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub varied: VariedPos,
    pub candidate: CandidateRule,
}

impl SensitivitySpec {
    /// Default candidate rule for each test: the determiner after the verb for
    /// noun and verb tests, the following noun otherwise.
    pub fn new(varied: VariedPos) -> Self {
        let candidate = match varied {
            VariedPos::Noun | VariedPos::Verb => CandidateRule::DeterminerAfterVerb,
            VariedPos::Determiner | VariedPos::Adjective => CandidateRule::NounAfterVaried,
        };
        Self { varied, candidate }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SensitivityPair {
    pub sentence_a: String,
    pub sentence_b: String,
    /// Position of the varied word in sentence a (for insertions, in the
    /// sentence that carries the extra word).
    pub varied_position: usize,
    pub candidate_a: usize,
    pub candidate_b: usize,
}

impl SensitivityPair {
    pub fn key_a(&self) -> StimulusKey {
        StimulusKey::new(self.sentence_a.clone(), self.candidate_a)
    }

    pub fn key_b(&self) -> StimulusKey {
        StimulusKey::new(self.sentence_b.clone(), self.candidate_b)
    }
}

fn same_text(a: &[WordToken], b: &[WordToken]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.text == y.text)
}

fn first_difference(a: &[WordToken], b: &[WordToken]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x.text != y.text)
}

/// One substituted word of the varied word class; everything else up to and
/// including the candidate is identical.
fn substitution(a: &SentenceStimulus, b: &SentenceStimulus, spec: &SensitivitySpec) -> Option<SensitivityPair> {
    let (ta, tb) = (&a.tokens, &b.tokens);
    let p = first_difference(ta, tb)?;
    if !(spec.varied.matches(&ta[p]) && spec.varied.matches(&tb[p])) {
        return None;
    }
    let ca = spec.candidate.locate(ta, p)?;
    let cb = spec.candidate.locate(tb, p)?;
    if ca != cb || ca <= p || !same_text(&ta[p + 1..=ca], &tb[p + 1..=ca]) {
        return None;
    }
    Some(SensitivityPair {
        sentence_a: a.sentence_id.clone(),
        sentence_b: b.sentence_id.clone(),
        varied_position: p,
        candidate_a: ca,
        candidate_b: cb,
    })
}

/// The longer sentence carries one extra word of the varied word class; the rest
/// aligns after shifting by one, up to and including the candidate.
fn insertion(a: &SentenceStimulus, b: &SentenceStimulus, spec: &SensitivitySpec) -> Option<SensitivityPair> {
    let a_longer = a.len() > b.len();
    let (long, short) = if a_longer { (a, b) } else { (b, a) };
    let (tl, ts) = (&long.tokens, &short.tokens);
    let p = first_difference(tl, ts).unwrap_or(ts.len());
    if p >= tl.len() || !spec.varied.matches(&tl[p]) {
        return None;
    }
    let cl = spec.candidate.locate(tl, p)?;
    let cs = cl - 1;
    if cs >= ts.len() || !same_text(&tl[p + 1..=cl], &ts[p..=cs]) {
        return None;
    }
    let (candidate_a, candidate_b) = if a_longer { (cl, cs) } else { (cs, cl) };
    Some(SensitivityPair {
        sentence_a: a.sentence_id.clone(),
        sentence_b: b.sentence_id.clone(),
        varied_position: p,
        candidate_a,
        candidate_b,
    })
}

/// Every pair of stimuli meeting `spec`, ordered by sentence ids.
pub fn enumerate_pairs(stimuli: &[SentenceStimulus], spec: &SensitivitySpec) -> Vec<SensitivityPair> {
    let mut sorted: Vec<&SentenceStimulus> = stimuli.iter().collect();
    sorted.sort_by(|a, b| a.sentence_id.cmp(&b.sentence_id));
    let mut out = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            let pair = if spec.varied == VariedPos::Adjective {
                insertion(a, b, spec)
            } else {
                substitution(a, b, spec)
            };
            out.extend(pair);
        }
    }
    out
}

/// Mean sign agreement per response column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMap {
    pub values: Vec<f64>,
    pub n_examples: usize,
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Per element: the true sign where predicted and true signs agree, else 0;
/// averaged over rows. Zero counts as positive.
pub fn agreement_map(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<AgreementMap> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "agreement map inputs",
            format!("{:?}", truth.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let (n, q) = pred.shape();
    if n == 0 || q == 0 {
        return Err(Error::invalid("agreement map needs at least one row"));
    }
    let values = (0..q)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..n {
                let s = sign(truth[(i, j)]);
                if sign(pred[(i, j)]) == s {
                    acc += s;
                }
            }
            acc / n as f64
        })
        .collect();
    Ok(AgreementMap { values, n_examples: n })
}

impl AgreementMap {
    /// Example-weighted mean of several maps.
    pub fn pool(maps: &[AgreementMap]) -> Result<AgreementMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("no agreement maps to pool"))?;
        let q = first.values.len();
        let mut acc = vec![0.0; q];
        let mut n = 0;
        for m in maps {
            if m.values.len() != q {
                return Err(Error::shape("agreement map width", q, m.values.len()));
            }
            for (a, v) in acc.iter_mut().zip(&m.values) {
                *a += v * m.n_examples as f64;
            }
            n += m.n_examples;
        }
        Ok(AgreementMap {
            values: acc.into_iter().map(|a| a / n as f64).collect(),
            n_examples: n,
        })
    }

    /// Sensors × windows view of the flattened (sensor-major) values.
    pub fn grid(&self, sensors: usize, windows: usize) -> Result<DMatrix<f64>> {
        if sensors * windows != self.values.len() {
            return Err(Error::shape("agreement map grid", self.values.len(), sensors * windows));
        }
        Ok(DMatrix::from_row_slice(sensors, windows, &self.values))
    }

    pub fn to_csv(&self, sensors: usize, windows: usize) -> Result<String> {
        let g = self.grid(sensors, windows)?;
        let mut out = String::from("sensor");
        for w in 0..windows {
            out.push_str(&format!(",w{w}"));
        }
        out.push('\n');
        for s in 0..sensors {
            out.push_str(&s.to_string());
            for w in 0..windows {
                out.push_str(&format!(",{}", g[(s, w)]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub spec: SensitivitySpec,
    pub n_pairs: usize,
    pub eval: EvalReport,
    pub sensors: usize,
    pub windows: usize,
    pub agreement: AgreementMap,
    pub fold_agreement: Vec<Option<AgreementMap>>,
}

/// Train on every word of the training folds; score only the listed pairs
/// whose two sentences both fall in the test fold. Responses must all be
/// first repetitions.
pub fn run_sensitivity(
    features: &FeatureMatrix,
    responses: &[BrainResponse],
    stimuli: &[SentenceStimulus],
    spec: SensitivitySpec,
    pairs: &[SensitivityPair],
    folds: &FoldSpec,
    grid: &LambdaGrid,
) -> Result<SensitivityReport> {
    if let Some(r) = responses.iter().find(|r| r.repetition != 1) {
        return Err(Error::invalid(format!(
            "sensitivity tests use first-repetition responses only; ({}, {}) has repetition {}",
            r.sentence_id, r.position, r.repetition
        )));
    }
    if pairs.is_empty() {
        return Err(Error::invalid("no sensitivity pairs to score"));
    }
    let ds = Dataset::build(features, responses, stimuli, folds, None)?;
    let row_of: HashMap<&StimulusKey, usize> = ds.keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut by_fold: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ds.k];
    for p in pairs {
        let (ka, kb) = (p.key_a(), p.key_b());
        let (Some(&ra), Some(&rb)) = (row_of.get(&ka), row_of.get(&kb)) else {
            return Err(Error::invalid(format!(
                "no response for pair ({}, {})",
                p.sentence_a, p.sentence_b
            )));
        };
        if ds.fold[ra] == ds.fold[rb] {
            by_fold[ds.fold[ra]].push((ra, rb));
        }
    }
    let folds_idx: Vec<usize> = (0..ds.k).collect();
    let results = crate::par::map(&folds_idx, |&f| -> Result<Option<(FoldResult, AgreementMap)>> {
        let fold_pairs = &by_fold[f];
        if fold_pairs.is_empty() {
            return Ok(None);
        }
        let mut test: Vec<usize> = fold_pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        test.sort_unstable();
        test.dedup();
        let train: Vec<usize> = (0..ds.len()).filter(|&i| ds.fold[i] != f).collect();
        let fit = fit_fold(&ds, f, &train, &test, grid, LambdaSelection::Shared, None)?;
        let local: HashMap<usize, usize> = test.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let lp: Vec<(usize, usize)> = fold_pairs.iter().map(|(a, b)| (local[a], local[b])).collect();
        let r = pairwise_accuracy(&fit.pred, &fit.truth, &lp)?;
        let map = agreement_map(&fit.pred, &fit.truth)?;
        Ok(Some((
            FoldResult {
                fold: f,
                lambda: fit.lambda,
                n_train: train.len(),
                n_test: test.len(),
                correct: r.correct,
                total: r.total,
            },
            map,
        )))
    });
    let mut fold_results = Vec::new();
    let mut fold_agreement = Vec::new();
    for r in results {
        match r? {
            Some((fr, map)) => {
                fold_results.push(fr);
                fold_agreement.push(Some(map));
            }
            None => fold_agreement.push(None),
        }
    }
    let eval = EvalReport::pool(&ds, Subset::ALL, fold_results)?;
    let maps: Vec<AgreementMap> = fold_agreement.iter().flatten().cloned().collect();
    Ok(SensitivityReport {
        spec,
        n_pairs: pairs.len(),
        eval,
        sensors: ds.sensors(),
        windows: ds.windows,
        agreement: AgreementMap::pool(&maps)?,
        fold_agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{builtin, parse_tagged, DatasetId};
    use crate::eval::make_folds;
    use crate::features::{random_embedding_dim, RandomMode};
    use crate::sim::{SimConfig, SimWorld};

    fn s(tagged: &str, id: &str) -> SentenceStimulus {
        parse_tagged(tagged, id, DatasetId::Simulated).unwrap()
    }

    #[test]
    fn noun_pair_at_determiner() {
        let stim = [
            s("the/DT dog/NN ate/VBD the/DT biscuit/NN", "a"),
            s("the/DT girl/NN ate/VBD the/DT biscuit/NN", "b"),
        ];
        let pairs = enumerate_pairs(&stim, &SensitivitySpec::new(VariedPos::Noun));
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].candidate_a, pairs[0].candidate_b), (3, 3));
        assert_eq!(pairs[0].varied_position, 1);
        assert!(enumerate_pairs(&stim, &SensitivitySpec::new(VariedPos::Verb)).is_empty());
    }

    #[test]
    fn determiner_pair_at_noun() {
        let stim = [s("a/DT dog/NN ran/VBD", "a"), s("the/DT dog/NN ran/VBD", "b")];
        let pairs = enumerate_pairs(&stim, &SensitivitySpec::new(VariedPos::Determiner));
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].candidate_a, pairs[0].candidate_b), (1, 1));
    }

    #[test]
    fn adjective_insertion_shifts_candidate() {
        let stim = [
            s("the/DT happy/JJ child/NN ran/VBD", "a"),
            s("the/DT child/NN ran/VBD", "b"),
        ];
        let pairs = enumerate_pairs(&stim, &SensitivitySpec::new(VariedPos::Adjective));
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].candidate_a, pairs[0].candidate_b), (2, 1));
        assert_eq!(pairs[0].varied_position, 1);
        let swapped = [stim[1].clone(), stim[0].clone()];
        assert_eq!(
            enumerate_pairs(&swapped, &SensitivitySpec::new(VariedPos::Adjective)),
            pairs
        );
    }

    #[test]
    fn verb_pairs_on_passact2() {
        let pairs = enumerate_pairs(&builtin::passact2(), &SensitivitySpec::new(VariedPos::Verb));
        assert!(!pairs.is_empty());
        for p in &pairs {
            assert!(p.candidate_a > p.varied_position);
            assert!(p.sentence_a < p.sentence_b);
        }
    }

    #[test]
    fn agreement_rule_examples() {
        let pred = DMatrix::from_row_slice(1, 2, &[0.5, -0.2]);
        let truth = DMatrix::from_row_slice(1, 2, &[1.0, 0.3]);
        assert_eq!(agreement_map(&pred, &truth).unwrap().values, vec![1.0, 0.0]);
        let t = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.1, -3.0, 4.0]);
        let perfect = agreement_map(&t, &t).unwrap();
        assert_eq!(perfect.values, vec![1.0, -1.0, 1.0]);
        let negated = agreement_map(&(-&t), &t).unwrap();
        assert!(negated.values.iter().all(|v| *v == 0.0));
        assert!(agreement_map(&DMatrix::zeros(0, 2), &DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn pooling_weights_by_examples() {
        let a = AgreementMap {
            values: vec![1.0],
            n_examples: 3,
        };
        let b = AgreementMap {
            values: vec![0.0],
            n_examples: 1,
        };
        assert_eq!(AgreementMap::pool(&[a, b]).unwrap().values, vec![0.75]);
    }

    fn run(world: &SimWorld, features: &FeatureMatrix, varied: VariedPos) -> SensitivityReport {
        let spec = SensitivitySpec::new(varied);
        let pairs = enumerate_pairs(&world.stimuli, &spec);
        let folds = make_folds(&world.stimuli, 4, 0).unwrap();
        run_sensitivity(
            features,
            &world.first_repetition(),
            &world.stimuli,
            spec,
            &pairs,
            &folds,
            &LambdaGrid::default(),
        )
        .unwrap()
    }

    #[test]
    fn additive_world_is_fully_sensitive() {
        let world = SimWorld::build(SimConfig::default()).unwrap();
        for varied in [VariedPos::Noun, VariedPos::Verb] {
            let r = run(&world, &world.features, varied);
            assert_eq!(r.eval.accuracy, 1.0, "{varied}");
            assert!(r.agreement.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn averaged_responses_rejected() {
        let world = SimWorld::build(SimConfig::default()).unwrap();
        let spec = SensitivitySpec::new(VariedPos::Noun);
        let pairs = enumerate_pairs(&world.stimuli, &spec);
        let folds = make_folds(&world.stimuli, 4, 0).unwrap();
        let grid = LambdaGrid::default();
        let avg = world.averaged();
        assert!(run_sensitivity(&world.features, &avg, &world.stimuli, spec, &pairs, &folds, &grid).is_err());
        let reps = world.first_repetition();
        assert!(run_sensitivity(&world.features, &reps, &world.stimuli, spec, &[], &folds, &grid).is_err());
    }

    #[test]
    fn memoryless_features_sit_at_chance() {
        let mut accs = Vec::new();
        for seed in 0..10 {
            let world = SimWorld::build(SimConfig {
                seed,
                ..SimConfig::default()
            })
            .unwrap();
            let memoryless = random_embedding_dim(&world.stimuli, seed, RandomMode::PerOccurrence, 8);
            accs.push(run(&world, &memoryless, VariedPos::Noun).eval.accuracy);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 0.1, "mean {mean} from {accs:?}");
    }
}
