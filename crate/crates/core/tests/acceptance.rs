//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use megalign::augment::{augmentation_experiment, synthesize, train_encoder, AugmentOptions, Category};
use megalign::corpus::{extract_patterns, generate, past_participle, past_tense, SvoTriple};
use megalign::data::{builtin, Epoch, SentenceStimulus, StimulusKey, Voice, WordToken};
use megalign::eval::{evaluate, make_folds, pairwise_accuracy, permutation_test, Dataset, EvalOptions, Subset};
use megalign::features::glove_additive_matrix;
use megalign::prep::window_average;
use megalign::ridge::{fit, LambdaGrid, RidgeOptions, RidgeSolver};
use megalign::sensitivity::{
    agreement_map, enumerate_pairs, run_sensitivity, AgreementMap, SensitivitySpec, VariedPos,
};
use megalign::sim::{SimConfig, SimWorld};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = DVector::from_fn(m.ncols(), |j, _| m.column(j).mean());
    let c = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j]);
    (c, mean)
}

/// Dense normal equations with an unpenalized intercept, solved by LU.
fn normal_equations(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let (xc, xm) = centered(x);
    let (yc, ym) = centered(y);
    let gram = xc.transpose() * &xc + DMatrix::identity(x.ncols(), x.ncols()) * lambda;
    let w = gram.lu().solve(&(xc.transpose() * yc)).expect("gram is invertible");
    let b = ym - w.transpose() * xm;
    (w, b)
}

fn stacked(w: &DMatrix<f64>, b: &[f64]) -> DMatrix<f64> {
    let mut out = w.clone().insert_row(w.nrows(), 0.0);
    for (j, v) in b.iter().enumerate() {
        out[(w.nrows(), j)] = *v;
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grid = LambdaGrid::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = gaussian(&mut rng, 20, 8);
        let y = gaussian(&mut rng, 20, 3);
        for &lambda in grid.values() {
            let m = fit(&x, &y, lambda).map_err(|e| e.to_string())?;
            let (w, b) = normal_equations(&x, &y, lambda);
            let err = rel_err(&stacked(&m.weights, &m.intercept), &stacked(&w, b.as_slice()));
            worst = worst.max(err);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-8, || format!("max relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max relative error {worst:.2e} in {:.0} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = gaussian(&mut rng, 60, 8);
        let y = gaussian(&mut rng, 60, 3);
        let m = fit(&x, &y, 1e-12).map_err(|e| e.to_string())?;
        let design = x.clone().insert_column(8, 1.0);
        let qr = design.qr();
        let rhs = qr.q().transpose() * &y;
        let beta = qr.r().solve_upper_triangular(&rhs).expect("full rank");
        let ours = stacked(&m.weights, &m.intercept);
        worst = worst.max(rel_err(&ours, &beta));
    }
    ensure(worst < 1e-6, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

/// GCV of every column through the explicit n x n hat matrix.
fn dense_gcv(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Vec<f64> {
    let n = x.nrows();
    let (xc, _) = centered(x);
    let gram = xc.transpose() * &xc + DMatrix::identity(x.ncols(), x.ncols()) * lambda;
    let inv = gram.try_inverse().expect("invertible");
    let hat = DMatrix::from_element(n, n, 1.0 / n as f64) + &xc * inv * xc.transpose();
    let resid_op = DMatrix::identity(n, n) - &hat;
    let tr = resid_op.trace();
    let r = &resid_op * y;
    (0..y.ncols())
        .map(|j| (r.column(j).norm_squared() / n as f64) / (tr / n as f64).powi(2))
        .collect()
}

fn criterion_3() -> Outcome {
    let sigmas = [0.0, 0.1, 1.0, 10.0];
    let grid = LambdaGrid::default();
    let mut monotone = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let x = gaussian(&mut rng, 40, 8);
        let w = gaussian(&mut rng, 8, 3);
        let eps = gaussian(&mut rng, 40, 3);
        let solver = RidgeSolver::new(&x, RidgeOptions::default()).map_err(|e| e.to_string())?;
        let mut chosen = Vec::new();
        for sigma in sigmas {
            let y = &x * &w + &eps * sigma;
            chosen.push(solver.select(&y, &grid).map_err(|e| e.to_string())?.selected);
            let ours = solver.gcv_columns(&y, grid.values()).map_err(|e| e.to_string())?;
            for (i, &lambda) in grid.values().iter().enumerate() {
                for (a, b) in ours[i].iter().zip(dense_gcv(&x, &y, lambda)) {
                    worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
                }
            }
        }
        if chosen.windows(2).all(|p| p[0] <= p[1]) {
            monotone += 1;
        }
    }
    ensure(monotone >= 40, || format!("non-decreasing in {monotone}/50 trials"))?;
    ensure(worst < 1e-10, || format!("SVD vs dense GCV relative gap {worst:e}"))?;
    Ok(format!("non-decreasing in {monotone}/50 trials, GCV gap {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let world = SimWorld::build(SimConfig {
        noise_sigma: 0.0,
        seed: 41,
        ..SimConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let folds = make_folds(&world.stimuli, 5, 41).map_err(|e| e.to_string())?;
    let ds =
        Dataset::build(&world.features, &world.averaged(), &world.stimuli, &folds, None).map_err(|e| e.to_string())?;
    ensure(ds.y.ncols() == 30 && world.stimuli.len() == 32, || {
        "unexpected sim scale".into()
    })?;
    let report = evaluate(&ds, Subset::ALL, &EvalOptions::default()).map_err(|e| e.to_string())?;
    ensure(report.accuracy == 1.0, || {
        format!("noiseless accuracy {}", report.accuracy)
    })?;
    let opts = EvalOptions {
        exclude_same_word: true,
        ..EvalOptions::default()
    };
    let perm = permutation_test(&ds, Subset::ALL, &opts, 400, 41).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure((0.45..=0.55).contains(&perm.mean), || {
        format!("chance mean {}", perm.mean)
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "accuracy {} over {} pairs, chance {:.4} ± {:.4} in {:.1} s",
        report.accuracy,
        report.total,
        perm.mean,
        perm.std,
        elapsed.as_secs_f64()
    ))
}

fn epoch(samples: DMatrix<f64>) -> Epoch {
    Epoch {
        subject_id: "s".into(),
        sentence_id: "x".into(),
        position: 0,
        repetition: 1,
        samples,
        sample_rate: 500.0,
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let samples = gaussian(&mut rng, 306, 250);
    let r = window_average(&epoch(samples.clone()), 100.0).map_err(|e| e.to_string())?;
    ensure(r.values.shape() == (306, 5), || format!("shape {:?}", r.values.shape()))?;
    for s in 0..306 {
        for w in 0..5 {
            let mut sum = 0.0;
            for t in 0..50 {
                sum += samples[(s, w * 50 + t)];
            }
            let expected = sum / 50.0;
            ensure(r.values[(s, w)] == expected, || {
                format!("sensor {s} window {w} differs")
            })?;
        }
    }
    let odd = window_average(&epoch(gaussian(&mut rng, 306, 251)), 100.0);
    ensure(odd.is_err(), || "251 samples accepted".into())?;
    let uneven = window_average(&epoch(gaussian(&mut rng, 306, 250)), 30.0);
    ensure(uneven.is_err(), || "30 ms windows accepted on 250 samples".into())?;
    Ok("306x250 -> 306x5 exact; 251 samples and 30 ms windows rejected".into())
}

fn class_of(v: VariedPos, t: &WordToken) -> bool {
    match v {
        VariedPos::Noun => t.pos.starts_with("NN"),
        VariedPos::Verb => {
            t.pos.starts_with("VB") && !["was", "were", "is", "are", "be", "been"].contains(&t.text.as_str())
        }
        VariedPos::Determiner => t.pos == "DT",
        VariedPos::Adjective => t.pos.starts_with("JJ"),
    }
}

fn candidate(v: VariedPos, tokens: &[WordToken], varied: usize) -> Option<usize> {
    match v {
        VariedPos::Noun | VariedPos::Verb => {
            let verb = tokens.iter().position(|t| t.pos.starts_with("VB"))?;
            (verb + 1..tokens.len()).find(|&i| tokens[i].pos == "DT")
        }
        _ => (varied + 1..tokens.len()).find(|&i| tokens[i].pos.starts_with("NN")),
    }
}

/// Count unordered sentence pairs meeting a test, checking every candidate
/// alignment directly.
fn brute_force_pairs(stimuli: &[SentenceStimulus], v: VariedPos) -> usize {
    let texts = |s: &SentenceStimulus| s.tokens.iter().map(|t| t.text.clone()).collect::<Vec<_>>();
    let mut count = 0;
    for i in 0..stimuli.len() {
        for j in 0..stimuli.len() {
            if i >= j {
                continue;
            }
            let (a, b) = (&stimuli[i], &stimuli[j]);
            let (ta, tb) = (texts(a), texts(b));
            let hit = if v == VariedPos::Adjective {
                let (long, short, lt) = if a.len() > b.len() {
                    (&ta, &tb, &a.tokens)
                } else {
                    (&tb, &ta, &b.tokens)
                };
                (0..long.len()).any(|p| {
                    if !class_of(v, &lt[p]) {
                        return false;
                    }
                    let Some(c) = candidate(v, lt, p) else { return false };
                    let mut removed = long.clone();
                    removed.remove(p);
                    c <= short.len() && removed[..c] == short[..c] && long[..p] == short[..p]
                })
            } else {
                let diffs: Vec<usize> = (0..ta.len().min(tb.len())).filter(|&k| ta[k] != tb[k]).collect();
                match diffs.first() {
                    Some(&p) if class_of(v, &a.tokens[p]) && class_of(v, &b.tokens[p]) => {
                        match (candidate(v, &a.tokens, p), candidate(v, &b.tokens, p)) {
                            (Some(ca), Some(cb)) if ca == cb && ca > p => {
                                diffs.iter().filter(|&&k| k <= ca).count() == 1
                            }
                            _ => false,
                        }
                    }
                    _ => false,
                }
            };
            if hit {
                count += 1;
            }
        }
    }
    count
}

fn criterion_6() -> Outcome {
    let mut lines = Vec::new();
    for (name, list) in [("PassAct2", builtin::passact2()), ("Krns2", builtin::krns2())] {
        let mut counts = Vec::new();
        for v in VariedPos::ALL {
            let ours = enumerate_pairs(&list, &SensitivitySpec::new(v)).len();
            let oracle = brute_force_pairs(&list, v);
            ensure(ours == oracle, || format!("{name} {v}: {ours} pairs, oracle {oracle}"))?;
            counts.push(format!("{v}={ours}"));
        }
        lines.push(format!("{name} {}", counts.join(" ")));
    }
    ensure(builtin::passact2().len() == 32, || {
        "PassAct2 list is not 32 sentences".into()
    })?;
    Ok(lines.join("; "))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (n, q) = (60, 30);
    let truth = gaussian(&mut rng, n, q);
    let pred = &truth * 0.3 + gaussian(&mut rng, n, q);
    let rot = gaussian(&mut rng, q, q).qr().q();
    let shift = gaussian(&mut rng, 1, q) * 5.0;
    let transform = |m: &DMatrix<f64>| {
        let mut out = m * rot.transpose();
        for mut row in out.row_iter_mut() {
            row += &shift;
        }
        out
    };
    let pairs: Vec<(usize, usize)> = (0..1000)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    let before = pairwise_accuracy(&pred, &truth, &pairs).map_err(|e| e.to_string())?;
    let after = pairwise_accuracy(&transform(&pred), &transform(&truth), &pairs).map_err(|e| e.to_string())?;
    let changed = before
        .outcomes
        .iter()
        .zip(&after.outcomes)
        .filter(|(a, b)| a != b)
        .count();
    ensure(changed == 0, || format!("{changed} of 1000 outcomes changed"))?;
    Ok(format!(
        "0 of 1000 outcomes changed (accuracy {:.3})",
        before.accuracy()
    ))
}

fn synthetic_for(world: &SimWorld, category: Category) -> Result<Vec<megalign::augment::SyntheticSample>, String> {
    let enc = train_encoder(&world.features, &world.averaged(), &LambdaGrid::default()).map_err(|e| e.to_string())?;
    let all = glove_additive_matrix(&world.generated, &world.lexicon).map_err(|e| e.to_string())?;
    let keep: BTreeSet<StimulusKey> = world
        .generated
        .iter()
        .flat_map(|s| {
            category
                .candidates(s)
                .into_iter()
                .map(|p| StimulusKey::new(s.sentence_id.clone(), p))
        })
        .collect();
    let feats = all.filter(|k| keep.contains(k)).map_err(|e| e.to_string())?;
    synthesize(&enc, &feats, world.truth.sensors, world.truth.windows, "sim").map_err(|e| e.to_string())
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    for category in [Category::Noun, Category::Verb] {
        let mut wins = 0;
        let (mut base_sum, mut aug_sum) = (0.0, 0.0);
        for seed in 0..20u64 {
            let world = SimWorld::build(SimConfig {
                noise_sigma: 3.0,
                repetitions: 1,
                seed,
                ..SimConfig::default()
            })
            .map_err(|e| e.to_string())?;
            let synthetic = synthetic_for(&world, category)?;
            ensure(world.stimuli.len() == 32 && synthetic.len() == 160, || {
                format!("{} real, {} synthetic", world.stimuli.len(), synthetic.len())
            })?;
            let opts = AugmentOptions {
                category,
                n_perm: 0,
                seed,
                ..AugmentOptions::default()
            };
            let avg = world.averaged();
            let r = augmentation_experiment(
                &world.stimuli,
                &avg,
                &world.generated,
                &synthetic,
                &world.lexicon,
                &opts,
            )
            .map_err(|e| e.to_string())?;
            if r.augmented >= r.baseline {
                wins += 1;
            }
            base_sum += r.baseline;
            aug_sum += r.augmented;
            if seed == 0 {
                let empty = augmentation_experiment(&world.stimuli, &avg, &world.generated, &[], &world.lexicon, &opts)
                    .map_err(|e| e.to_string())?;
                ensure(
                    empty.augmented == empty.baseline && empty.augmented_correct == empty.baseline_correct,
                    || {
                        format!(
                            "{category}: empty synthetic set gives {} vs {}",
                            empty.augmented, empty.baseline
                        )
                    },
                )?;
            }
        }
        ensure(wins >= 16, || {
            format!("{category}: augmented >= baseline in {wins}/20 seeds")
        })?;
        lines.push(format!(
            "{category} {wins}/20 seeds (mean {:.4} vs {:.4})",
            aug_sum / 20.0,
            base_sum / 20.0
        ));
    }
    Ok(format!(
        "augmented >= baseline: {}; empty set identical",
        lines.join(", ")
    ))
}

fn criterion_9() -> Outcome {
    let nouns = [
        "dog", "man", "woman", "girl", "boy", "doctor", "student", "bone", "car", "teacher", "horse", "city", "lawyer",
        "river", "bird", "baby", "soldier", "judge",
    ];
    let verbs = [
        "eat",
        "see",
        "watch",
        "kick",
        "find",
        "encourage",
        "carry",
        "stop",
        "bite",
        "help",
        "give",
        "take",
        "hit",
        "study",
        "admire",
        "write",
        "beat",
        "drive",
        "grab",
        "know",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for i in 0..1000 {
        let mut np = || {
            let head = nouns.choose(&mut rng).unwrap().to_string();
            if rng.random_bool(0.2) {
                format!("{} {head}", nouns.choose(&mut rng).unwrap())
            } else {
                head
            }
        };
        let (subject, object) = (np(), np());
        let verb = verbs.choose(&mut rng).unwrap().to_string();
        let triple = SvoTriple {
            subject,
            verb,
            object,
            frequency: rng.random_range(1..100),
        };
        for voice in [Voice::Active, Voice::Passive] {
            let g = generate(&triple, voice, &format!("t{i}")).map_err(|e| e.to_string())?;
            let m = extract_patterns(std::slice::from_ref(&g.stimulus));
            ensure(m.len() == 1, || {
                format!("{:?} produced {} matches", g.stimulus.text(), m.len())
            })?;
            let m = &m[0];
            let verb_form = match voice {
                Voice::Active => past_tense(&triple.verb),
                Voice::Passive => past_participle(&triple.verb),
            }
            .map_err(|e| e.to_string())?;
            ensure(
                m.voice == voice && m.subject == triple.subject && m.object == triple.object && m.verb == verb_form,
                || {
                    format!(
                        "{:?} -> {:?}/{}/{}/{}",
                        g.stimulus.text(),
                        m.voice,
                        m.subject,
                        m.verb,
                        m.object
                    )
                },
            )?;
        }
    }
    let quoted = [
        (("dog", "eat", "bone"), Voice::Passive, "the bone was eaten by the dog"),
        (
            ("woman", "encourage", "girl"),
            Voice::Active,
            "the woman encouraged the girl",
        ),
    ];
    for ((s, v, o), voice, text) in quoted {
        let triple = SvoTriple {
            subject: s.into(),
            verb: v.into(),
            object: o.into(),
            frequency: 1,
        };
        let got = generate(&triple, voice, "q")
            .map_err(|e| e.to_string())?
            .stimulus
            .text();
        ensure(got == text, || format!("expected {text:?}, got {got:?}"))?;
    }
    Ok("2000 sentences round-trip; both quoted sentences verbatim".into())
}

const CLI_CONFIG: &str = r#"
seed = 11
threads = 1

[simulate]
noise_sigma = 1.0
repetitions = 4

[eval]
k = 4

[augment]
n_perm = 8
"#;

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, base, out);
        } else {
            let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
            out.push((rel, fs::read(&p).unwrap()));
        }
    }
}

fn run_pipeline(dir: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    fs::write(dir.join("megalign.toml"), CLI_CONFIG).map_err(|e| e.to_string())?;
    let config = dir.join("megalign.toml");
    let stages: [&[&str]; 8] = [
        &["simulate"],
        &["prep"],
        &["fit"],
        &["eval", "--permute", "3"],
        &["sensitivity", "--type", "noun"],
        &["synth"],
        &["augment"],
        &["report"],
    ];
    for stage in stages {
        let mut args = vec![
            "megalign".to_string(),
            "--config".into(),
            config.to_string_lossy().into_owned(),
            "--threads".into(),
            threads.to_string(),
            "--emit-plots".into(),
        ];
        args.extend(stage.iter().map(|s| s.to_string()));
        let code = megalign::cli::main_with_args(args);
        ensure(code == 0, || format!("{stage:?} exited with {code}"))?;
    }
    let mut files = Vec::new();
    collect_files(&dir.join("out"), &dir.join("out"), &mut files);
    Ok(files)
}

fn criterion_10() -> Outcome {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = run_pipeline(dirs[0].path(), 1)?;
    let b = run_pipeline(dirs[1].path(), 1)?;
    let c = run_pipeline(dirs[2].path(), 4)?;
    for (name, other) in [("rerun", &b), ("4 threads", &c)] {
        ensure(a.len() == other.len(), || {
            format!("{name}: {} vs {} files", a.len(), other.len())
        })?;
        for ((pa, da), (pb, db)) in a.iter().zip(other.iter()) {
            ensure(pa == pb && da == db, || format!("{name}: {pa} differs"))?;
        }
    }
    Ok(format!(
        "{} artifacts byte-identical across reruns and 1 vs 4 threads",
        a.len()
    ))
}

fn criterion_11() -> Outcome {
    let world = SimWorld::build(SimConfig {
        noise_sigma: 0.0,
        seed: 111,
        ..SimConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let truth = DMatrix::from_fn(world.responses.len(), 30, |i, j| world.responses[i].flatten()[j]);
    let mut per_example = Vec::new();
    for i in 0..truth.nrows() {
        let row = truth.rows(i, 1).into_owned();
        let m = agreement_map(&row, &row).map_err(|e| e.to_string())?;
        ensure(m.values.iter().all(|v| *v != 0.0 && v.abs() <= 1.0), || {
            format!("row {i}: {:?}", m.values)
        })?;
        let neg = agreement_map(&(-&row), &row).map_err(|e| e.to_string())?;
        ensure(neg.values.iter().all(|v| *v == 0.0), || {
            format!("negated row {i}: {:?}", neg.values)
        })?;
        per_example.push(m);
    }
    let pooled = AgreementMap::pool(&per_example).map_err(|e| e.to_string())?;
    ensure(pooled.values.iter().all(|v| (-1.0..=1.0).contains(v)), || {
        "pooled map out of range".into()
    })?;
    let negated = agreement_map(&(-&truth), &truth).map_err(|e| e.to_string())?;
    ensure(negated.values.iter().all(|v| *v == 0.0), || {
        "negated map has nonzero entries".into()
    })?;

    let folds = make_folds(&world.stimuli, 5, 111).map_err(|e| e.to_string())?;
    let spec = SensitivitySpec::new(VariedPos::Noun);
    let pairs = enumerate_pairs(&world.stimuli, &spec);
    let report = run_sensitivity(
        &world.features,
        &world.first_repetition(),
        &world.stimuli,
        spec,
        &pairs,
        &folds,
        &LambdaGrid::default(),
    )
    .map_err(|e| e.to_string())?;
    let in_range = report
        .fold_agreement
        .iter()
        .flatten()
        .chain(std::iter::once(&report.agreement))
        .all(|m| m.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    ensure(in_range, || "sensitivity agreement map out of range".into())?;
    Ok(format!(
        "{} per-example maps nonzero, negated maps zero, pooled and sensitivity maps in [-1, 1]",
        per_example.len()
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("ridge matches dense normal equations", criterion_1),
        ("ridge OLS limit matches QR least squares", criterion_2),
        ("GCV penalty grows with noise; SVD GCV matches dense", criterion_3),
        ("2v2 noiseless accuracy and permutation chance", criterion_4),
        ("window averaging matches brute force", criterion_5),
        ("sensitivity pair counts match brute force", criterion_6),
        ("2v2 outcomes invariant under isometries", criterion_7),
        ("augmentation does not hurt decoding", criterion_8),
        ("corpus generate/extract round trip", criterion_9),
        ("CLI artifacts deterministic", criterion_10),
        ("agreement map bounds", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
