//! Browser bindings over a small simulated experiment. Every export returns a
//! JSON string; errors come back as a JS exception carrying the message.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use megalign::data::{builtin, response_matrix, SentenceStimulus};
use megalign::eval::{cross_validated_eval, make_folds, EvalOptions, Subset};
use megalign::prep::NormalizationStats;
use megalign::ridge::{LambdaGrid, RidgeOptions, RidgeSolver};
use megalign::sensitivity::{enumerate_pairs, SensitivitySpec, VariedPos};
use megalign::sim::{SimConfig, SimWorld};

fn js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js)
}

fn world(noise: f64, repetitions: u32, seed: u64) -> Result<SimWorld, JsValue> {
    SimWorld::build(SimConfig {
        noise_sigma: noise,
        repetitions: repetitions.max(1),
        seed,
        ..SimConfig::default()
    })
    .map_err(js)
}

#[derive(Serialize)]
struct GcvCurve {
    lambdas: Vec<f64>,
    scores: Vec<f64>,
    effective_df: Vec<f64>,
    selected: f64,
}

/// Mean GCV over a log-spaced penalty range for the z-scored simulated
/// responses at the given single-trial noise level.
#[wasm_bindgen]
pub fn gcv_curve(noise: f64, seed: u64) -> Result<String, JsValue> {
    let w = world(noise, 1, seed)?;
    let refs: Vec<_> = w.responses.iter().collect();
    let y = response_matrix(&refs).map_err(js)?;
    let x = NormalizationStats::fit(&w.features.rows)
        .and_then(|s| s.apply(&w.features.rows))
        .map_err(js)?;
    let y = NormalizationStats::fit(&y).and_then(|s| s.apply(&y)).map_err(js)?;
    let lambdas: Vec<f64> = (0..29).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect();
    let grid = LambdaGrid::new(lambdas).map_err(js)?;
    let report = RidgeSolver::new(&x, RidgeOptions::default())
        .and_then(|s| s.select(&y, &grid))
        .map_err(js)?;
    to_json(&GcvCurve {
        lambdas: report.lambdas,
        scores: report.scores,
        effective_df: report.effective_df,
        selected: report.selected,
    })
}

#[derive(Serialize)]
struct SimEval {
    accuracy: f64,
    correct: u64,
    total: u64,
    fold_lambdas: Vec<f64>,
}

/// Cross-validated 2v2 accuracy on repetition-averaged simulated responses.
#[wasm_bindgen]
pub fn sim_eval(noise: f64, repetitions: u32, subset: &str, seed: u64) -> Result<String, JsValue> {
    let w = world(noise, repetitions, seed)?;
    let subset: Subset = subset.parse().map_err(js)?;
    let folds = make_folds(&w.stimuli, 4, seed).map_err(js)?;
    let opts = EvalOptions {
        seed,
        ..EvalOptions::default()
    };
    let r = cross_validated_eval(&w.features, &w.averaged(), &w.stimuli, &folds, subset, None, &opts).map_err(js)?;
    to_json(&SimEval {
        accuracy: r.accuracy,
        correct: r.correct,
        total: r.total,
        fold_lambdas: r.folds.iter().map(|f| f.lambda).collect(),
    })
}

#[derive(Serialize)]
struct PairView {
    a: String,
    b: String,
    varied: usize,
    candidate_a: String,
    candidate_b: String,
}

/// Sentence pairs for one context test (`noun`, `verb`, `det`, `adj`) on a
/// shipped list (`passact2` or `krns2`).
#[wasm_bindgen]
pub fn context_pairs(list: &str, test: &str) -> Result<String, JsValue> {
    let stimuli: Vec<SentenceStimulus> = match list {
        "passact2" => builtin::passact2(),
        "krns2" => builtin::krns2(),
        other => return Err(js(format!("unknown list `{other}`"))),
    };
    let varied: VariedPos = test.parse().map_err(js)?;
    let find = |id: &str| {
        stimuli
            .iter()
            .find(|s| s.sentence_id == id)
            .expect("pair ids come from the list")
    };
    let pairs: Vec<PairView> = enumerate_pairs(&stimuli, &SensitivitySpec::new(varied))
        .into_iter()
        .map(|p| {
            let (a, b) = (find(&p.sentence_a), find(&p.sentence_b));
            PairView {
                a: a.text(),
                b: b.text(),
                varied: p.varied_position,
                candidate_a: a.tokens[p.candidate_a].text.clone(),
                candidate_b: b.tokens[p.candidate_b].text.clone(),
            }
        })
        .collect();
    to_json(&pairs)
}
