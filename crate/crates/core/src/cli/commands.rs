use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{builtin_stimuli, sha256_file, Loaded};
use super::{Cli, Command, CorpusAction};
use crate::augment::{
    augmentation_experiment, rank_layers, synthesize, train_encoder, AugmentOptions, SyntheticSample,
};
use crate::corpus::{corpus_stats, extract_patterns, generate_corpus, load_allowlist, load_triples, subsample};
use crate::data::{
    load_epochs, load_responses, load_stimuli, parse_tagged, save_stimuli, write_epochs, write_responses,
    BrainResponse, DatasetId, RegionSelector, SentenceStimulus,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, make_folds, permutation_test, Dataset, EvalOptions, EvalReport, Subset};
use crate::features::{glove_additive_matrix, load_activations, write_activations, FeatureMatrix, GloveLexicon};
use crate::plot::{bar_chart_svg, heatmap_svg, Palette};
use crate::prep::{average_all, window_average};
use crate::ridge::{LambdaGrid, RidgeModel};
use crate::sensitivity::{enumerate_pairs, run_sensitivity, SensitivitySpec, VariedPos};
use crate::sim::{to_epochs, SimConfig, SimWorld};

/// Output directory of one command, tracking inputs for the provenance record.
struct Stage<'a> {
    loaded: &'a Loaded,
    name: String,
    dir: PathBuf,
    plots: bool,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl<'a> Stage<'a> {
    fn new(loaded: &'a Loaded, name: &str, plots: bool) -> Result<Self> {
        let dir = loaded.stage_dir(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            loaded,
            name: name.to_string(),
            dir,
            plots,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    fn hash(&self) -> &str {
        &self.loaded.hash
    }

    /// Record an input file, or every file directly inside an input directory.
    fn input(&mut self, path: &Path) -> Result<()> {
        let files: Vec<PathBuf> = if path.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            v.sort();
            v
        } else {
            vec![path.to_path_buf()]
        };
        for f in files {
            let label = f
                .strip_prefix(&self.loaded.base)
                .unwrap_or(&f)
                .to_string_lossy()
                .replace('\\', "/");
            self.inputs.insert(label, sha256_file(&f)?);
        }
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<()> {
        let doc = json!({
            "config_hash": self.hash(),
            "command": self.name,
            "data": data,
        });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
        self.write(name, &text)
    }

    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config_hash={}\n{body}", self.hash());
        self.write(name, &text)
    }

    fn svg(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("<!-- config_hash={} -->\n{body}", self.hash());
        self.write(name, &text)
    }

    fn finish(self) -> Result<()> {
        let c = &self.loaded.config;
        let record = json!({
            "tool": "megalign",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.name,
            "config_hash": self.loaded.hash,
            "seed": c.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        let text = serde_json::to_string_pretty(&record).expect("provenance serializes") + "\n";
        let path = self.dir.join("provenance.json");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        info!("{} wrote {}", self.name, self.dir.display());
        Ok(())
    }
}

pub(super) fn dispatch(loaded: &Loaded, cli: &Cli) -> Result<()> {
    let plots = cli.emit_plots;
    match &cli.command {
        Command::Simulate => simulate(loaded),
        Command::Prep => prep(loaded),
        Command::Fit => fit(loaded),
        Command::Eval { permute } => eval(loaded, *permute, plots),
        Command::Sensitivity { varied } => {
            let varied = varied
                .map(VariedPos::from)
                .or(loaded.config.sensitivity.varied)
                .ok_or_else(|| Error::config("sensitivity.type", "set it or pass --type"))?;
            sensitivity(loaded, varied, plots)
        }
        Command::Synth => synth(loaded),
        Command::Augment => augment(loaded, plots),
        Command::Corpus { action } => corpus(loaded, action),
        Command::Report => report(loaded),
    }
}

fn stimuli_list(loaded: &Loaded, stage: &mut Stage, field: &str, spec: &str) -> Result<Vec<SentenceStimulus>> {
    match spec.strip_prefix("builtin:") {
        Some(name) => {
            builtin_stimuli(name).ok_or_else(|| Error::config(field, format!("unknown builtin list `{name}`")))
        }
        None => {
            let path = loaded.base.join(spec);
            if !path.exists() {
                return Err(Error::config(field, format!("{} does not exist", path.display())));
            }
            stage.input(&path)?;
            load_stimuli(&path)
        }
    }
}

fn simulate(loaded: &Loaded) -> Result<()> {
    let c = &loaded.config;
    let s = &c.simulate;
    let mut st = Stage::new(loaded, "simulate", false)?;
    let stimuli = stimuli_list(loaded, &mut st, "simulate.stimuli", &s.stimuli)?;
    let generated = stimuli_list(loaded, &mut st, "simulate.generated", &s.generated)?;
    let world = SimWorld::build_with(
        SimConfig {
            sensors: s.sensors,
            windows: s.windows,
            lexicon_dim: s.lexicon_dim,
            noise_sigma: s.noise_sigma,
            repetitions: s.repetitions,
            seed: c.seed,
        },
        stimuli,
        generated,
    )?;
    let epochs = to_epochs(&world.responses, s.samples_per_window, s.sample_rate);
    write_epochs(&st.path("epochs"), &epochs)?;
    save_stimuli(&st.path("stimuli.json"), &world.stimuli)?;
    save_stimuli(&st.path("generated.json"), &world.generated)?;
    let glove = world.lexicon.to_text();
    st.write("glove.txt", &glove)?;
    let all: Vec<SentenceStimulus> = world.stimuli.iter().chain(&world.generated).cloned().collect();
    let features = glove_additive_matrix(&all, &world.lexicon)?;
    write_activations(&st.path("features"), &[features])?;
    st.json(
        "truth.json",
        &json!({
            "d_in": world.truth.d_in(),
            "sensors": world.truth.sensors,
            "windows": world.truth.windows,
            "noise_sigma": world.truth.noise_sigma,
            "intercept": world.truth.intercept,
            "weights": rows(&world.truth.weights),
        }),
    )?;
    st.finish()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn prep(loaded: &Loaded) -> Result<()> {
    let c = &loaded.config;
    let mut st = Stage::new(loaded, "prep", false)?;
    let dir = loaded.input("epochs", &c.paths.epochs, Some("simulate/epochs"))?;
    st.input(&dir)?;
    let epochs = load_epochs(&dir)?;
    if epochs.is_empty() {
        return Err(Error::invalid(format!("no epochs in {}", dir.display())));
    }
    let averaged: Vec<BrainResponse> = average_all(&epochs)?
        .iter()
        .map(|e| window_average(e, c.prep.window_ms))
        .collect::<Result<_>>()?;
    let first: Vec<BrainResponse> = epochs
        .iter()
        .filter(|e| e.repetition == 1)
        .map(|e| window_average(e, c.prep.window_ms))
        .collect::<Result<_>>()?;
    write_responses(&st.path("responses"), &averaged)?;
    if !first.is_empty() {
        write_responses(&st.path("responses_rep1"), &first)?;
    }
    st.json(
        "summary.json",
        &json!({
            "epochs": epochs.len(),
            "stimuli": averaged.len(),
            "first_repetition": first.len(),
            "sensors": averaged[0].sensors(),
            "windows": averaged[0].windows(),
            "window_ms": c.prep.window_ms,
        }),
    )?;
    st.finish()
}

/// Load a stimulus list (file or `builtin:` name) and record it as an input.
fn stimuli_input(
    loaded: &Loaded,
    st: &mut Stage,
    field: &str,
    value: &Option<String>,
    fallback: &str,
) -> Result<Vec<SentenceStimulus>> {
    let list = loaded.stimuli(field, value, fallback)?;
    if value.as_deref().is_none_or(|v| !v.starts_with("builtin:")) {
        st.input(&loaded.input(field, value, Some(fallback))?)?;
    }
    Ok(list)
}

struct Inputs {
    stimuli: Vec<SentenceStimulus>,
    features: Vec<FeatureMatrix>,
}

fn common_inputs(loaded: &Loaded, st: &mut Stage, extra: &[SentenceStimulus]) -> Result<Inputs> {
    let p = &loaded.config.paths;
    let stimuli = stimuli_input(loaded, st, "stimuli", &p.stimuli, "simulate/stimuli.json")?;
    let fpath = loaded.input("features", &p.features, Some("simulate/features/features.json"))?;
    st.input(&fpath)?;
    if let Some(dir) = fpath.parent() {
        st.input(dir)?;
    }
    let generated = if extra.is_empty() {
        optional_generated(loaded, st)?
    } else {
        Vec::new()
    };
    let all: Vec<SentenceStimulus> = stimuli.iter().chain(extra).chain(&generated).cloned().collect();
    let features = load_activations(&fpath, Some(&all))?;
    if features.is_empty() {
        return Err(Error::config("paths.features", "manifest lists no feature matrices"));
    }
    Ok(Inputs { stimuli, features })
}

/// Generated sentences, when configured or left by `simulate`, so that
/// feature manifests covering them validate.
fn optional_generated(loaded: &Loaded, st: &mut Stage) -> Result<Vec<SentenceStimulus>> {
    let value = &loaded.config.paths.generated;
    if value.is_none() && !loaded.out().join("simulate/generated.json").exists() {
        return Ok(Vec::new());
    }
    stimuli_input(loaded, st, "generated", value, "simulate/generated.json")
}

fn responses(
    loaded: &Loaded,
    st: &mut Stage,
    field: &str,
    value: &Option<String>,
    fallback: &str,
) -> Result<Vec<BrainResponse>> {
    let dir = loaded.input(field, value, Some(fallback))?;
    st.input(&dir)?;
    load_responses(&dir)
}

/// Restrict a feature matrix to rows of the given sentences.
fn rows_of(fm: &FeatureMatrix, stimuli: &[SentenceStimulus]) -> Result<FeatureMatrix> {
    let ids: BTreeSet<&str> = stimuli.iter().map(|s| s.sentence_id.as_str()).collect();
    fm.filter(|k| ids.contains(k.sentence_id.as_str()))
}

#[derive(Serialize)]
struct ModelRecord<'a> {
    model_id: &'a str,
    layer_id: &'a str,
    lambda: f64,
    intercept: &'a [f64],
    weights: Vec<Vec<f64>>,
    input_norm: &'a Option<crate::prep::NormalizationStats>,
    output_norm: &'a Option<crate::prep::NormalizationStats>,
}

fn model_record<'a>(fm: &'a FeatureMatrix, m: &'a RidgeModel) -> ModelRecord<'a> {
    ModelRecord {
        model_id: &fm.model_id,
        layer_id: &fm.layer_id,
        lambda: m.lambda,
        intercept: &m.intercept,
        weights: rows(&m.weights),
        input_norm: &m.input_norm,
        output_norm: &m.output_norm,
    }
}

fn grid(loaded: &Loaded) -> Result<LambdaGrid> {
    LambdaGrid::new(loaded.config.eval.lambdas.clone())
}

fn fit(loaded: &Loaded) -> Result<()> {
    let p = &loaded.config.paths;
    let mut st = Stage::new(loaded, "fit", false)?;
    let inputs = common_inputs(loaded, &mut st, &[])?;
    let resp = responses(loaded, &mut st, "responses", &p.responses, "prep/responses")?;
    let grid = grid(loaded)?;
    let models: Vec<(FeatureMatrix, RidgeModel)> = inputs
        .features
        .iter()
        .map(|fm| Ok((fm.clone(), train_encoder(fm, &resp, &grid)?)))
        .collect::<Result<_>>()?;
    let records: Vec<ModelRecord> = models.iter().map(|(fm, m)| model_record(fm, m)).collect();
    st.json("models.json", &records)?;
    st.finish()
}

fn eval_options(loaded: &Loaded) -> Result<EvalOptions> {
    let e = &loaded.config.eval;
    Ok(EvalOptions {
        grid: grid(loaded)?,
        lambda_selection: e.lambda_selection,
        subset_scope: e.subset_scope,
        exclude_same_word: e.exclude_same_word,
        pair_cap: e.pair_cap,
        seed: loaded.config.seed,
    })
}

fn eval(loaded: &Loaded, permute: Option<usize>, plots: bool) -> Result<()> {
    let c = &loaded.config;
    let mut st = Stage::new(loaded, "eval", plots)?;
    let inputs = common_inputs(loaded, &mut st, &[])?;
    let resp = responses(loaded, &mut st, "responses", &c.paths.responses, "prep/responses")?;
    let folds = make_folds(&inputs.stimuli, c.eval.k, c.seed)?;
    let opts = eval_options(loaded)?;
    let subsets: Vec<Subset> = c.eval.subsets.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let regions: Vec<RegionSelector> = c.eval.regions.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let sensors = resp.first().map_or(0, BrainResponse::sensors);
    let atlas = if regions.iter().any(|r| *r != RegionSelector::ALL) {
        let atlas = loaded.atlas(sensors)?;
        if let Some(path) = c.paths.atlas.as_deref().filter(|a| !a.starts_with("builtin:")) {
            st.input(&loaded.base.join(path))?;
        }
        Some(atlas)
    } else {
        None
    };
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut perms = Vec::new();
    for fm in &inputs.features {
        let fm = rows_of(fm, &inputs.stimuli)?;
        for region in &regions {
            let sel = atlas.as_ref().map(|a| (a, *region));
            let ds = Dataset::build(&fm, &resp, &inputs.stimuli, &folds, sel)?;
            for subset in &subsets {
                reports.push(evaluate(&ds, *subset, &opts)?);
                if let Some(n) = permute {
                    let p = permutation_test(&ds, *subset, &opts, n, c.seed)?;
                    perms.push(json!({
                        "model_id": fm.model_id,
                        "layer_id": fm.layer_id,
                        "region": region.to_string(),
                        "subset": subset.to_string(),
                        "permutation": p,
                    }));
                }
            }
        }
    }
    st.json("report.json", &json!({ "folds": folds, "reports": reports }))?;
    let mut csv = String::from("model_id,layer_id,region,subset,correct,total,accuracy\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model_id, r.layer_id, r.region, r.subset, r.correct, r.total, r.accuracy
        ));
    }
    st.csv("accuracy.csv", &csv)?;
    if permute.is_some() {
        st.json("permutation.json", &perms)?;
    }
    if st.plots {
        plot_eval(&mut st, &reports, &regions, &subsets)?;
    }
    st.finish()
}

fn plot_eval(st: &mut Stage, reports: &[EvalReport], regions: &[RegionSelector], subsets: &[Subset]) -> Result<()> {
    let models: BTreeSet<&str> = reports.iter().map(|r| r.model_id.as_str()).collect();
    for model in models {
        let mut layers: Vec<&str> = Vec::new();
        for r in reports.iter().filter(|r| r.model_id == model) {
            if !layers.contains(&r.layer_id.as_str()) {
                layers.push(&r.layer_id);
            }
        }
        for subset in subsets {
            let m = DMatrix::from_fn(layers.len(), regions.len(), |i, j| {
                reports
                    .iter()
                    .find(|r| {
                        r.model_id == model && r.layer_id == layers[i] && r.region == regions[j] && r.subset == *subset
                    })
                    .map_or(f64::NAN, |r| r.accuracy)
            });
            let svg = heatmap_svg(
                &format!("{model} 2v2 accuracy ({subset})"),
                &layers.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
                &regions.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                &m,
                (0.5, 1.0),
                Palette::Sequential,
            );
            st.svg(&format!("heatmap_{}_{subset}.svg", sanitize(model)), &svg)?;
        }
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn sensitivity(loaded: &Loaded, varied: VariedPos, plots: bool) -> Result<()> {
    let c = &loaded.config;
    let mut st = Stage::new(loaded, &format!("sensitivity/{varied}"), plots)?;
    let inputs = common_inputs(loaded, &mut st, &[])?;
    let resp = responses(
        loaded,
        &mut st,
        "responses_rep1",
        &c.paths.responses_rep1,
        "prep/responses_rep1",
    )?;
    let spec = SensitivitySpec::new(varied);
    let pairs = enumerate_pairs(&inputs.stimuli, &spec);
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "the stimulus list has no {varied} sensitivity pairs"
        )));
    }
    let folds = make_folds(&inputs.stimuli, c.sensitivity.k, c.seed)?;
    let grid = grid(loaded)?;
    st.json("pairs.json", &pairs)?;
    let mut reports = Vec::new();
    for fm in &inputs.features {
        let fm = rows_of(fm, &inputs.stimuli)?;
        let r = run_sensitivity(&fm, &resp, &inputs.stimuli, spec, &pairs, &folds, &grid)?;
        let tag = format!("{}__{}", sanitize(&fm.model_id), sanitize(&fm.layer_id));
        st.csv(
            &format!("agreement_{tag}.csv"),
            &r.agreement.to_csv(r.sensors, r.windows)?,
        )?;
        if st.plots {
            let g = r.agreement.grid(r.sensors, r.windows)?;
            let svg = heatmap_svg(
                &format!("{} {} sign agreement ({varied})", fm.model_id, fm.layer_id),
                &(0..r.sensors).map(|s| s.to_string()).collect::<Vec<_>>(),
                &(0..r.windows).map(|w| format!("w{w}")).collect::<Vec<_>>(),
                &g,
                (-1.0, 1.0),
                Palette::Diverging,
            );
            st.svg(&format!("agreement_{tag}.svg"), &svg)?;
        }
        reports.push(r);
    }
    st.json("report.json", &reports)?;
    st.finish()
}

fn pick_encoder<'f>(loaded: &Loaded, inputs: &'f Inputs, resp: &[BrainResponse]) -> Result<&'f FeatureMatrix> {
    let a = &loaded.config.augment;
    let candidates: Vec<&FeatureMatrix> = inputs
        .features
        .iter()
        .filter(|f| a.encoder_model.as_ref().is_none_or(|m| *m == f.model_id))
        .collect();
    match a.encoder_layer.as_deref() {
        Some("best") => {
            let folds = make_folds(&inputs.stimuli, loaded.config.eval.k, loaded.config.seed)?;
            let opts = eval_options(loaded)?;
            let mut reports = Vec::new();
            for fm in &candidates {
                let fm = rows_of(fm, &inputs.stimuli)?;
                let ds = Dataset::build(&fm, resp, &inputs.stimuli, &folds, None)?;
                reports.push(evaluate(&ds, Subset::ALL, &opts)?);
            }
            let best = rank_layers(&reports)
                .into_iter()
                .next()
                .ok_or_else(|| Error::config("augment.encoder_model", "matches no feature matrix"))?;
            Ok(candidates
                .into_iter()
                .find(|f| f.model_id == best.0 && f.layer_id == best.1)
                .expect("ranked from candidates"))
        }
        Some(layer) => candidates
            .into_iter()
            .find(|f| f.layer_id == layer)
            .ok_or_else(|| Error::config("augment.encoder_layer", format!("no matrix with layer `{layer}`"))),
        None if candidates.len() == 1 => Ok(candidates[0]),
        None => Err(Error::config(
            "augment.encoder_layer",
            format!("{} feature matrices match; choose a layer or `best`", candidates.len()),
        )),
    }
}

fn synth(loaded: &Loaded) -> Result<()> {
    let c = &loaded.config;
    let mut st = Stage::new(loaded, "synth", false)?;
    let generated = stimuli_input(
        loaded,
        &mut st,
        "generated",
        &c.paths.generated,
        "simulate/generated.json",
    )?;
    let inputs = common_inputs(loaded, &mut st, &generated)?;
    let resp = responses(loaded, &mut st, "responses", &c.paths.responses, "prep/responses")?;
    let encoder_fm = pick_encoder(loaded, &inputs, &resp)?;
    let real = rows_of(encoder_fm, &inputs.stimuli)?;
    let encoder = train_encoder(&real, &resp, &grid(loaded)?)?;
    let gen_rows = rows_of(encoder_fm, &generated)?;
    if gen_rows.is_empty() {
        return Err(Error::config(
            "paths.features",
            format!(
                "{}/{} has no rows for the generated sentences",
                encoder_fm.model_id, encoder_fm.layer_id
            ),
        ));
    }
    let (sensors, windows) = resp[0].values.shape();
    let samples = synthesize(&encoder, &gen_rows, sensors, windows, &resp[0].subject_id)?;
    let store: Vec<BrainResponse> = samples.iter().map(|s| s.response.clone()).collect();
    write_responses(&st.path("synthetic"), &store)?;
    let encoder_info = json!({ "model_id": encoder_fm.model_id, "layer_id": encoder_fm.layer_id });
    let text = serde_json::to_string_pretty(&encoder_info).expect("json") + "\n";
    let path = st.dir.join("synthetic").join("encoder.json");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    st.json("encoder.json", &model_record(encoder_fm, &encoder))?;
    st.json(
        "summary.json",
        &json!({ "samples": samples.len(), "encoder": encoder_info }),
    )?;
    st.finish()
}

fn augment(loaded: &Loaded, plots: bool) -> Result<()> {
    let c = &loaded.config;
    let mut st = Stage::new(loaded, "augment", plots)?;
    let stimuli = stimuli_input(loaded, &mut st, "stimuli", &c.paths.stimuli, "simulate/stimuli.json")?;
    let generated = stimuli_input(
        loaded,
        &mut st,
        "generated",
        &c.paths.generated,
        "simulate/generated.json",
    )?;
    let resp = responses(loaded, &mut st, "responses", &c.paths.responses, "prep/responses")?;
    let syn_dir = loaded.input("synthetic", &c.paths.synthetic, Some("synth/synthetic"))?;
    st.input(&syn_dir)?;
    let encoder: Value = {
        let path = syn_dir.join("encoder.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format("encoder.json", e.to_string()))?
    };
    let field = |k: &str| encoder.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    let synthetic: Vec<SyntheticSample> = load_responses(&syn_dir)?
        .into_iter()
        .map(|r| SyntheticSample {
            sentence_id: r.sentence_id.clone(),
            position: r.position,
            response: r,
            encoder_model_id: field("model_id"),
            encoder_layer_id: field("layer_id"),
        })
        .collect();
    let glove_path = loaded.input("glove", &c.paths.glove, Some("simulate/glove.txt"))?;
    st.input(&glove_path)?;
    let lexicon = GloveLexicon::load(&glove_path)?;
    let opts = AugmentOptions {
        category: c.augment.category,
        k: c.augment.k,
        n_perm: c.augment.n_perm,
        seed: c.seed,
        synthetic_weight: c.augment.synthetic_weight,
        grid: grid(loaded)?,
    };
    let report = augmentation_experiment(&stimuli, &resp, &generated, &synthetic, &lexicon, &opts)?;
    st.json("report.json", &report)?;
    st.csv("bars.csv", &report.to_csv())?;
    if st.plots {
        let mut labels = vec!["real".to_string(), "real+synthetic".to_string()];
        let mut values = vec![report.baseline, report.augmented];
        let mut errors = vec![None, None];
        if let Some(ch) = &report.chance {
            labels.push("chance".into());
            values.push(ch.mean);
            errors.push(Some(ch.std));
        }
        let svg = bar_chart_svg(
            &format!("{} decoding accuracy", report.category),
            &labels,
            &values,
            &errors,
        );
        st.svg("bars.svg", &svg)?;
    }
    st.finish()
}

fn read_tagged(path: &Path) -> Result<Vec<SentenceStimulus>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| parse_tagged(l, &format!("tagged-{i:06}"), DatasetId::Generated))
        .collect()
}

fn corpus(loaded: &Loaded, action: &CorpusAction) -> Result<()> {
    let c = &loaded.config;
    let p = &c.paths;
    match action {
        CorpusAction::Gen => {
            let mut st = Stage::new(loaded, "corpus/gen", false)?;
            let triples_path = loaded.input("triples", &p.triples, None)?;
            let verbs_path = loaded.input("verbs", &p.verbs, None)?;
            let entities_path = loaded.input("entities", &p.entities, None)?;
            for path in [&triples_path, &verbs_path, &entities_path] {
                st.input(path)?;
            }
            let triples = load_triples(&triples_path)?;
            let kept = subsample(
                &triples,
                c.corpus.freq_threshold,
                &load_allowlist(&verbs_path)?,
                &load_allowlist(&entities_path)?,
            );
            let generated = generate_corpus(&kept, &c.corpus.prefix)?;
            let stimuli: Vec<SentenceStimulus> = generated.iter().map(|g| g.stimulus.clone()).collect();
            save_stimuli(&st.path("sentences.json"), &stimuli)?;
            let text: String = stimuli.iter().map(|s| s.text() + "\n").collect();
            st.write("sentences.txt", &text)?;
            st.json(
                "summary.json",
                &json!({ "triples": triples.len(), "kept": kept.len(), "sentences": stimuli.len() }),
            )?;
            st.finish()
        }
        CorpusAction::Extract | CorpusAction::Stats => {
            let name = if matches!(action, CorpusAction::Extract) {
                "corpus/extract"
            } else {
                "corpus/stats"
            };
            let mut st = Stage::new(loaded, name, false)?;
            let path = loaded.input("tagged", &p.tagged, None)?;
            st.input(&path)?;
            let matches = extract_patterns(&read_tagged(&path)?);
            if matches!(action, CorpusAction::Extract) {
                st.json("matches.json", &matches)?;
                let text: String = matches.iter().map(|m| m.stimulus.text() + "\n").collect();
                st.write("matches.txt", &text)?;
            } else {
                st.json("stats.json", &corpus_stats(&matches))?;
            }
            st.finish()
        }
    }
}

fn read_data(path: &Path) -> Option<Value> {
    let text = fs::read_to_string(path).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v.get("data").cloned()
}

fn report(loaded: &Loaded) -> Result<()> {
    let out = loaded.out();
    let mut st = Stage::new(loaded, "report", false)?;
    let mut md = String::from("# megalign report\n\n");
    md.push_str(&format!("config hash `{}`\n\n", loaded.hash));
    if let Some(eval) = read_data(&out.join("eval/report.json")) {
        st.input(&out.join("eval/report.json"))?;
        md.push_str(
            "## 2v2 accuracy\n\n| model | layer | region | subset | pairs | accuracy |\n|---|---|---|---|---|---|\n",
        );
        for r in eval["reports"].as_array().into_iter().flatten() {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {:.4} |\n",
                r["model_id"].as_str().unwrap_or(""),
                r["layer_id"].as_str().unwrap_or(""),
                r["region"].as_str().unwrap_or(""),
                r["subset"].as_str().unwrap_or(""),
                r["total"],
                r["accuracy"].as_f64().unwrap_or(f64::NAN)
            ));
        }
        md.push('\n');
    }
    let mut sens = Vec::new();
    for v in VariedPos::ALL {
        let path = out.join(format!("sensitivity/{v}/report.json"));
        if let Some(data) = read_data(&path) {
            st.input(&path)?;
            sens.push((v, data));
        }
    }
    if !sens.is_empty() {
        md.push_str("## Sensitivity\n\n| test | model | layer | pairs | accuracy |\n|---|---|---|---|---|\n");
        for (v, data) in &sens {
            for r in data.as_array().into_iter().flatten() {
                md.push_str(&format!(
                    "| {v} | {} | {} | {} | {:.4} |\n",
                    r["eval"]["model_id"].as_str().unwrap_or(""),
                    r["eval"]["layer_id"].as_str().unwrap_or(""),
                    r["n_pairs"],
                    r["eval"]["accuracy"].as_f64().unwrap_or(f64::NAN)
                ));
            }
        }
        md.push('\n');
    }
    if let Some(a) = read_data(&out.join("augment/report.json")) {
        st.input(&out.join("augment/report.json"))?;
        md.push_str(&format!(
            "## Augmentation ({})\n\n| condition | accuracy |\n|---|---|\n| real | {:.4} |\n| real+synthetic | {:.4} |\n",
            a["category"].as_str().unwrap_or(""),
            a["baseline"].as_f64().unwrap_or(f64::NAN),
            a["augmented"].as_f64().unwrap_or(f64::NAN)
        ));
        if let Some(m) = a["chance"]["mean"].as_f64() {
            md.push_str(&format!("| chance | {m:.4} |\n"));
        }
        md.push('\n');
    }
    st.write("summary.md", &md)?;
    st.finish()
}
