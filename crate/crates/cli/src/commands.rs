use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use saloss_core::attribution::{
    attribute, write_attributions_jsonl, AttributionMethod, AttributionOptions, AttributionScores,
};
use saloss_core::data::{
    load_jsonl, make_synthetic_corpus, save_jsonl, BasicTokenizer, Document, Splits, SyntheticSpec,
};
use saloss_core::evaluation::{
    compare_reports, decision_flip_fraction, fresh_run, pos_importance, ErasureResult, ErasureSummary, EvalReport,
    Extractor, FreshSummary, TestKind, Thresholder,
};
use saloss_core::model::TextClassifier;
use saloss_core::salience::{
    compute_salience, read_salience_jsonl, write_salience_jsonl, SalienceContext, SalienceMethod,
};
use saloss_core::training::{select_lambda, train_from_scratch, EpochMetrics, LambdaCandidate, TrainConfig};
use saloss_core::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{write_json, RunManifest};

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

fn ensure_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn load_split(dataset: &Path, split: &str, num_classes: usize) -> Result<Vec<Document>> {
    load_jsonl(
        dataset.join(format!("{split}.jsonl")),
        &BasicTokenizer,
        Some(num_classes),
    )
}

/// A dataset is a directory holding `train.jsonl`, `dev.jsonl` and `test.jsonl`.
pub fn load_dataset(dataset: &Path, num_classes: usize) -> Result<Splits> {
    Ok(Splits {
        train: load_split(dataset, "train", num_classes)?,
        dev: load_split(dataset, "dev", num_classes)?,
        test: load_split(dataset, "test", num_classes)?,
    })
}

fn dataset_name(dataset: &Path) -> String {
    dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dataset.display().to_string())
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub seed: Option<u64>,
}

pub fn synth(args: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let seed = args.seed.unwrap_or(0);
    let spec = match &cfg.synthetic {
        Some(spec) => SyntheticSpec {
            seed: args.seed.unwrap_or(spec.seed),
            ..spec.clone()
        },
        None => SyntheticSpec::benchmark(seed),
    };
    let splits = make_synthetic_corpus(&spec)?;
    ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new("synth", &spec, vec![spec.seed])?;
    for (name, docs) in SPLITS.iter().zip([&splits.train, &splits.dev, &splits.test]) {
        let file = format!("{name}.jsonl");
        save_jsonl(args.out.join(&file), docs)?;
        manifest.add(*name, file);
    }
    log::info!(
        "wrote {}/{}/{} documents to {}",
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        args.out.display()
    );
    manifest.write(&args.out)?;
    Ok(())
}

pub struct SalienceArgs {
    pub dataset: PathBuf,
    pub method: SalienceMethod,
    pub max_tokens: Option<usize>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SalienceSettings<'a> {
    method: SalienceMethod,
    max_tokens: usize,
    num_classes: usize,
    textrank: &'a saloss_core::salience::TextRankConfig,
}

/// Salience for every document of every split. Table statistics come from
/// the training split; documents are cut to what the model will see.
pub fn salience(args: &SalienceArgs, cfg: &RunConfig) -> Result<()> {
    let max_tokens = args.max_tokens.unwrap_or(cfg.model.max_len.saturating_sub(2));
    if max_tokens == 0 {
        return Err(Error::config("max_tokens must be positive"));
    }
    cfg.textrank.validate()?;
    let num_classes = cfg.model.num_classes;
    let splits = load_dataset(&args.dataset, num_classes)?;
    let cut = |docs: &[Document]| docs.iter().map(|d| d.truncated(max_tokens)).collect::<Vec<_>>();
    let train = cut(&splits.train);
    let mut ctx = SalienceContext::fit(args.method, &train, num_classes)?;
    ctx.textrank = cfg.textrank;
    if args.method == SalienceMethod::TextRank {
        let t = &cfg.textrank;
        log::info!(
            "textrank: damping {}, window {}, max_iters {}, tol {}",
            t.damping,
            t.window,
            t.max_iters,
            t.tol
        );
    }
    let docs: Vec<Document> = train
        .into_iter()
        .chain(cut(&splits.dev))
        .chain(cut(&splits.test))
        .collect();
    let maps = docs
        .par_iter()
        .map(|d| compute_salience(d, args.method, &ctx))
        .collect::<Result<Vec<_>>>()?;

    ensure_dir(&args.out)?;
    let settings = SalienceSettings {
        method: args.method,
        max_tokens,
        num_classes,
        textrank: &cfg.textrank,
    };
    let mut manifest = RunManifest::new("salience", &settings, vec![])?;
    let file = format!("salience_{}.jsonl", args.method);
    write_salience_jsonl(args.out.join(&file), &maps)?;
    manifest.add("salience", file);
    log::info!("wrote {} salience maps", maps.len());
    manifest.write(&args.out)?;
    Ok(())
}

pub struct TrainArgs {
    pub dataset: PathBuf,
    pub salience: Option<PathBuf>,
    pub lambdas: Vec<f64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct TrainLog<'a> {
    lambda: f64,
    best_epoch: usize,
    epochs: &'a [EpochMetrics],
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<&'a [LambdaCandidate]>,
}

#[derive(Serialize)]
struct TrainSettings<'a> {
    model: &'a saloss_core::model::ModelConfig,
    train: &'a TrainConfig,
    lambda_candidates: &'a [f64],
}

pub fn train(args: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let mut train_cfg = cfg.train.clone();
    if let Some(seed) = args.seed {
        train_cfg.seed = seed;
    }
    if let [lambda] = args.lambdas.as_slice() {
        train_cfg.lambda = *lambda;
    }
    let splits = load_dataset(&args.dataset, cfg.model.num_classes)?;
    let maps = args.salience.as_deref().map(read_salience_jsonl).transpose()?;
    let selecting = args.lambdas.len() > 1;

    let (fit, candidates) = if selecting {
        let sel = select_lambda(
            &args.lambdas,
            &splits.train,
            &splits.dev,
            maps.as_deref(),
            &cfg.model,
            &train_cfg,
        )?;
        log::info!("selected lambda {}", sel.chosen);
        train_cfg.lambda = sel.chosen;
        (sel.fit, Some(sel.candidates))
    } else {
        (
            train_from_scratch(&splits.train, &splits.dev, maps.as_deref(), &cfg.model, &train_cfg)?,
            None,
        )
    };

    ensure_dir(&args.out)?;
    let settings = TrainSettings {
        model: &cfg.model,
        train: &train_cfg,
        lambda_candidates: &args.lambdas,
    };
    let mut manifest = RunManifest::new("train", &settings, vec![train_cfg.seed])?;
    fit.classifier.save(args.out.join("checkpoint.json"))?;
    manifest.add("checkpoint", "checkpoint.json");
    let log = TrainLog {
        lambda: train_cfg.lambda,
        best_epoch: fit.best_epoch,
        epochs: &fit.metrics,
        candidates: candidates.as_deref(),
    };
    write_json(&args.out.join("metrics.json"), &log)?;
    manifest.add("metrics", "metrics.json");
    manifest.write(&args.out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Erase,
    Fresh,
    Pos,
}

pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub methods: Vec<AttributionMethod>,
    pub modes: Vec<Mode>,
    pub thresholder: Option<Thresholder>,
    pub ratio: Option<f64>,
    pub step: f64,
    pub seed: u64,
    pub fresh_runs: usize,
    pub abs_rank: bool,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct EvaluateSettings<'a> {
    methods: &'a [AttributionMethod],
    modes: &'a [Mode],
    thresholder: Option<Thresholder>,
    ratio: Option<f64>,
    step: f64,
    seed: u64,
    fresh_runs: usize,
    abs_rank: bool,
    ig_steps: usize,
    fresh_train: Option<&'a TrainConfig>,
}

/// Methods in the order given, with the seeded random ranking appended as a
/// reference row.
fn with_random_baseline(methods: &[AttributionMethod]) -> Vec<AttributionMethod> {
    let mut out = Vec::new();
    for &m in methods.iter().chain(&[AttributionMethod::Random]) {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn attributions(
    model: &TextClassifier,
    docs: &[Document],
    method: AttributionMethod,
    opts: &AttributionOptions,
    abs_rank: bool,
) -> Result<Vec<AttributionScores>> {
    docs.par_iter()
        .map(|d| {
            let a = attribute(model, method, &d.id, &d.tokens, opts)?;
            Ok(if abs_rank { a.absolute() } else { a })
        })
        .collect()
}

pub fn evaluate(args: &EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    if !(args.step > 0.0 && args.step <= 1.0) {
        return Err(Error::config(format!("step {} outside (0, 1]", args.step)));
    }
    let fresh = args.modes.contains(&Mode::Fresh);
    let extractor_parts = if fresh {
        let thresholder = args
            .thresholder
            .ok_or_else(|| Error::config("fresh mode needs --thresholder"))?;
        let ratio = args.ratio.ok_or_else(|| Error::config("fresh mode needs --ratio"))?;
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::config(format!("ratio {ratio} outside (0, 1]")));
        }
        if args.fresh_runs == 0 {
            return Err(Error::config("fresh mode needs at least one run"));
        }
        Some((thresholder, ratio))
    } else {
        None
    };

    let model = TextClassifier::load(&args.checkpoint)?;
    let arch = *model.model.config();
    let splits = load_dataset(&args.dataset, arch.num_classes)?;
    if args.modes.contains(&Mode::Pos) {
        if let Some(d) = splits.test.iter().find(|d| d.pos_tags.is_none()) {
            return Err(Error::data(format!(
                "pos mode needs pos_tags; document {} has none",
                d.id
            )));
        }
    }
    let opts = AttributionOptions {
        ig_steps: cfg.attribution.ig_steps,
        seed: args.seed,
    };
    let methods = with_random_baseline(&args.methods);
    ensure_dir(&args.out)?;

    let mut report = EvalReport::new(dataset_name(&args.dataset), args.step, args.seed);
    let mut artifacts = BTreeMap::new();
    let mut pos = BTreeMap::new();
    if args.modes.iter().any(|m| matches!(m, Mode::Erase | Mode::Pos)) {
        for &method in &methods {
            let scores = attributions(&model, &splits.test, method, &opts, args.abs_rank)?;
            let file = format!("attributions_{method}.jsonl");
            write_attributions_jsonl(args.out.join(&file), &scores)?;
            artifacts.insert(format!("attributions_{method}"), file);
            if args.modes.contains(&Mode::Erase) {
                let results = splits
                    .test
                    .par_iter()
                    .zip(&scores)
                    .map(|(d, s)| decision_flip_fraction(&model, &d.tokens, s, args.step))
                    .collect::<Result<Vec<ErasureResult>>>()?;
                let summary = ErasureSummary::from_results(method, &results)?;
                log::info!("{method}: mean flip fraction {:.4}", summary.mean_fraction);
                report.erasure.push(summary);
            }
            if args.modes.contains(&Mode::Pos) {
                pos.insert(method.to_string(), pos_importance(&splits.test, &scores)?);
            }
        }
    }
    if args.modes.contains(&Mode::Pos) {
        report.pos = Some(pos);
    }
    let fresh_train = TrainConfig {
        lambda: 0.0,
        ..cfg.train.clone()
    };
    if let Some((thresholder, ratio)) = extractor_parts {
        for &method in &methods {
            let extractor = Extractor {
                method,
                thresholder,
                ratio,
            };
            let f1s = (0..args.fresh_runs as u64)
                .map(|r| {
                    let run = TrainConfig {
                        seed: args.seed + r,
                        ..fresh_train.clone()
                    };
                    Ok(fresh_run(&model, &extractor, &arch, &run, &splits, &opts)?.test_f1)
                })
                .collect::<Result<Vec<f64>>>()?;
            let summary = FreshSummary::from_runs(extractor, f1s)?;
            log::info!("FRESH {method}: macro-F1 {:.4}", summary.mean_f1);
            report.fresh.push(summary);
        }
    }

    let settings = EvaluateSettings {
        methods: &methods,
        modes: &args.modes,
        thresholder: args.thresholder,
        ratio: args.ratio,
        step: args.step,
        seed: args.seed,
        fresh_runs: args.fresh_runs,
        abs_rank: args.abs_rank,
        ig_steps: opts.ig_steps,
        fresh_train: fresh.then_some(&fresh_train),
    };
    let seeds = (0..if fresh { args.fresh_runs as u64 } else { 1 })
        .map(|r| args.seed + r)
        .collect();
    let mut manifest = RunManifest::new("evaluate", &settings, seeds)?;
    for (k, v) in artifacts {
        manifest.add(k, v);
    }
    write_json(&args.out.join("report.json"), &report)?;
    manifest.add("report", "report.json");
    let rendered = report.render();
    fs::write(args.out.join("report.txt"), &rendered).map_err(|e| Error::io(args.out.join("report.txt"), e))?;
    manifest.add("tables", "report.txt");
    manifest.write(&args.out)?;
    print!("{rendered}");
    Ok(())
}

pub struct CompareArgs {
    pub report_a: PathBuf,
    pub report_b: PathBuf,
    pub test: TestKind,
    pub out: Option<PathBuf>,
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let a = read_report(&args.report_a)?;
    let b = read_report(&args.report_b)?;
    let comparison = compare_reports(&a, &b, args.test)?;
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_dir(parent)?;
        }
        write_json(out, &comparison)?;
    }
    print!("{}", comparison.render());
    Ok(())
}
