use std::collections::BTreeMap;
use std::fs;

use nalgebra::DMatrix;
use proptest::prelude::*;

use megalign::data::{builtin, load_responses, write_responses, BrainResponse, SentenceStimulus};
use megalign::eval::{fit_fold, make_folds, pair_correct, Dataset, Subset};
use megalign::features::{glove_additive, GloveLexicon};
use megalign::ridge::{LambdaGrid, LambdaSelection};
use megalign::sensitivity::{agreement_map, AgreementMap};
use megalign::sim::{SimConfig, SimWorld};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn pred_truth() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2usize..12, 1usize..8).prop_flat_map(|(n, q)| (matrix(n, q), matrix(n, q)))
}

/// Matched minus mismatched distance sum; positive means incorrect.
fn margin(p: &DMatrix<f64>, t: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let d = |a: usize, b: usize| (p.row(a) - t.row(b)).norm();
    d(i, i) + d(j, j) - d(i, j) - d(j, i)
}

proptest! {
    #[test]
    fn pair_outcome_is_symmetric((p, t) in pred_truth(), i in 0usize..12, j in 0usize..12) {
        let n = p.nrows();
        let (i, j) = (i % n, j % n);
        prop_assume!(i != j);
        prop_assert_eq!(pair_correct(&p, &t, i, j), pair_correct(&p, &t, j, i));
    }

    #[test]
    fn pair_outcome_survives_isometry(
        (p, t) in pred_truth(),
        perm_seed in any::<u64>(),
        signs in prop::collection::vec(any::<bool>(), 8),
        shift in prop::collection::vec(-100.0f64..100.0, 8),
    ) {
        let (n, q) = p.shape();
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by_key(|&c| (c as u64).wrapping_mul(perm_seed | 1).rotate_left(17));
        let map = |m: &DMatrix<f64>| {
            DMatrix::from_fn(n, q, |r, c| {
                let v = m[(r, order[c])];
                (if signs[c] { -v } else { v }) + shift[c]
            })
        };
        let (p2, t2) = (map(&p), map(&t));
        for i in 0..n {
            for j in i + 1..n {
                if margin(&p, &t, i, j).abs() > 1e-6 {
                    prop_assert_eq!(pair_correct(&p, &t, i, j), pair_correct(&p2, &t2, i, j));
                }
            }
        }
    }

    #[test]
    fn agreement_ignores_positive_scaling((p, t) in pred_truth(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let base = agreement_map(&p, &t).unwrap();
        let scaled = agreement_map(&(&p * a), &(&t * b)).unwrap();
        prop_assert_eq!(&base, &scaled);
        prop_assert!(base.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn pooled_agreement_ignores_order(
        maps in prop::collection::vec((pred_truth(), 0usize..3), 1..6),
        rot in 0usize..6,
    ) {
        let q = 3;
        let built: Vec<AgreementMap> = maps
            .iter()
            .map(|((p, t), _)| {
                let p = DMatrix::from_fn(p.nrows(), q, |r, c| p[(r, c % p.ncols())]);
                let t = DMatrix::from_fn(t.nrows(), q, |r, c| t[(r, c % t.ncols())]);
                agreement_map(&p, &t).unwrap()
            })
            .collect();
        let mut rotated = built.clone();
        rotated.rotate_left(rot % built.len());
        let a = AgreementMap::pool(&built).unwrap();
        let b = AgreementMap::pool(&rotated).unwrap();
        prop_assert_eq!(a.n_examples, b.n_examples);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_context_norm_is_bounded(seed in any::<u64>(), dim in 1usize..16, pick in 0usize..32) {
        let stimuli = builtin::passact2();
        let s = &stimuli[pick % stimuli.len()];
        let lex = GloveLexicon::synthetic(s.tokens.iter().map(|t| t.text.as_str()), dim, seed);
        let bound = s.tokens.iter().map(|t| lex.get(&t.text).unwrap().norm()).fold(0.0, f64::max);
        for c in glove_additive(s, &lex).unwrap() {
            prop_assert!(c.norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn folds_partition_the_sentences(k in 2usize..9, seed in any::<u64>()) {
        let stimuli = builtin::passact2();
        let folds = make_folds(&stimuli, k, seed).unwrap();
        let sizes = folds.sizes();
        prop_assert_eq!(sizes.len(), k);
        prop_assert_eq!(sizes.iter().sum::<usize>(), stimuli.len());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for s in &stimuli {
            prop_assert!(folds.fold_of(&s.sentence_id).is_some_and(|f| f < k));
        }
    }
}

fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut keyed: Vec<(u64, T)> = items
        .iter()
        .enumerate()
        .map(|(i, x)| ((i as u64 + 1).wrapping_mul(seed | 1).rotate_left(23), x.clone()))
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, x)| x).collect()
}

fn dir_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn response_store_ignores_input_order(seed in any::<u64>()) {
        let world = SimWorld::build(SimConfig { noise_sigma: 1.0, seed: 3, ..SimConfig::default() }).unwrap();
        let responses: Vec<BrainResponse> = world.responses.clone();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_responses(a.path(), &responses).unwrap();
        write_responses(b.path(), &shuffled(&responses, seed)).unwrap();
        prop_assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
        prop_assert_eq!(load_responses(a.path()).unwrap(), load_responses(b.path()).unwrap());
    }

    #[test]
    fn test_only_subset_keeps_surviving_outcomes(fold in 0usize..5, subset_idx in 0usize..6, seed in 0u64..4) {
        let world = SimWorld::build(SimConfig { noise_sigma: 2.0, seed, ..SimConfig::default() }).unwrap();
        let stimuli: &[SentenceStimulus] = &world.stimuli;
        let folds = make_folds(stimuli, 5, seed).unwrap();
        let ds = Dataset::build(&world.features, &world.averaged(), stimuli, &folds, None).unwrap();
        let subset: Subset = ["active", "passive", "nouns", "verbs", "determiners", "passive-nouns"][subset_idx]
            .parse()
            .unwrap();
        let train: Vec<usize> = (0..ds.len()).filter(|&i| ds.fold[i] != fold).collect();
        let test: Vec<usize> = (0..ds.len()).filter(|&i| ds.fold[i] == fold).collect();
        let kept: Vec<usize> = test.iter().copied().filter(|&i| ds.in_subset(i, &subset)).collect();
        prop_assume!(kept.len() >= 2);
        let grid = LambdaGrid::default();
        let full = fit_fold(&ds, fold, &train, &test, &grid, LambdaSelection::Shared, None).unwrap();
        let filtered = fit_fold(&ds, fold, &train, &kept, &grid, LambdaSelection::Shared, None).unwrap();
        let local = |row: usize| test.iter().position(|&r| r == row).unwrap();
        for a in 0..kept.len() {
            for b in a + 1..kept.len() {
                let (fa, fb) = (local(kept[a]), local(kept[b]));
                prop_assert_eq!(
                    pair_correct(&filtered.pred, &filtered.truth, a, b),
                    pair_correct(&full.pred, &full.truth, fa, fb)
                );
            }
        }
    }
}
