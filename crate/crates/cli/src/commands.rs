use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use jere_core::data::{
    generate_synthetic, load_dataset, load_word_vectors, read_tuple_sets, split_examples, write_dataset,
    write_predictions, CorpusStats, Example, LoadOptions, Sentence, SurfaceTuple, SynthConfig, TupleSetLine,
};
use jere_core::evaluation::{component_scores, ensemble, error_breakdown, score};
use jere_core::model::Model;
use jere_core::trainer::{self, load_checkpoint, parse_config, save_checkpoint, RunConfig, TrainOutcome};
use rayon::prelude::*;
use serde_json::json;

use crate::artifacts::{flat_config, write_json, write_text, RunManifest, Staged};
use crate::error::CliError;

pub struct TrainArgs {
    pub model: Option<String>,
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub ensemble: usize,
    pub vectors: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(parse_config(&text)?)
}

/// Loads a dataset, refusing files with invalid lines.
fn load_examples(path: &Path) -> Result<Vec<Example>, CliError> {
    let report = load_dataset(path, &LoadOptions::default())?;
    if let Some(first) = report.errors.first() {
        return Err(CliError::InvalidLines {
            path: path.to_path_buf(),
            count: report.errors.len(),
            first: first.to_string(),
        });
    }
    if report.separator_rejections > 0 {
        log::warn!("{}: {} lines dropped for separator characters in entities", path.display(), report.separator_rejections);
    }
    Ok(report.examples)
}

fn resolved_run_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut rc = RunConfig::default();
    if let Some(path) = &args.config {
        for (k, v) in read_config(path)? {
            rc.set(&k, &v)?;
        }
    }
    if let Some(m) = &args.model {
        rc.set("model", m)?;
    }
    if let Some(s) = args.seed {
        rc.train.seed = s;
    }
    rc.model.validate()?;
    rc.train.validate()?;
    Ok(rc)
}

fn run_config_json(rc: &RunConfig) -> (serde_json::Value, String) {
    let model = serde_json::to_value(&rc.model).expect("serializable");
    let train = serde_json::to_value(&rc.train).expect("serializable");
    let flat = flat_config(&[&model, &train]);
    (json!({ "model": model, "train": train }), flat)
}

fn tuple_lines(examples: &[Example], sets: Vec<BTreeSet<SurfaceTuple>>) -> Vec<(Vec<String>, BTreeSet<SurfaceTuple>)> {
    examples.iter().map(|e| e.sentence.tokens.clone()).zip(sets).collect()
}

fn write_prediction_file(path: &Path, lines: &[(Vec<String>, BTreeSet<SurfaceTuple>)]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, lines).map_err(CliError::io(path))?;
    fs::write(path, buf).map_err(CliError::io(path))
}

struct RunSummary {
    seed: u64,
    outcome: TrainOutcome,
    test: Option<Vec<BTreeSet<SurfaceTuple>>>,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    if args.ensemble == 0 {
        return Err(CliError::Usage("--ensemble must be at least 1".into()));
    }
    let rc = resolved_run_config(&args)?;
    let train_set = load_examples(&args.data.join("train.jsonl"))?;
    let valid_set = load_examples(&args.data.join("valid.jsonl"))?;
    let test_path = args.data.join("test.jsonl");
    let test_set = if test_path.exists() { Some(load_examples(&test_path)?) } else { None };
    let vectors = args.vectors.as_deref().map(load_word_vectors).transpose()?;

    let mut staged = Staged::new();
    let root = staged.dir(&args.out)?;
    let seeds: Vec<u64> = (0..args.ensemble as u64).map(|i| rc.train.seed + i).collect();
    let runs: Vec<RunSummary> = seeds
        .par_iter()
        .map(|&seed| -> Result<RunSummary, CliError> {
            let mut cfg = rc.train.clone();
            cfg.seed = seed;
            let outcome = trainer::train(&train_set, &valid_set, &rc.model, &cfg, vectors.as_ref(), |m| {
                log::info!("seed {seed} epoch {} loss {:.4} valid F1 {:.4}", m.epoch, m.train_loss, m.valid_f1);
            })?;
            let test = match &test_set {
                Some(t) => {
                    let model = outcome.checkpoint.model()?;
                    Some(trainer::predict_all(&model, &outcome.checkpoint.params, t)?.0)
                }
                None => None,
            };
            Ok(RunSummary { seed, outcome, test })
        })
        .collect::<Result<_, _>>()?;

    let mut summaries = Vec::new();
    for run in &runs {
        let dir = if runs.len() == 1 { root.clone() } else { root.join(format!("run{}", run.seed - rc.train.seed)) };
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        save_checkpoint(&run.outcome.checkpoint, dir.join("model.bin"))?;
        let log: String = run
            .outcome
            .metrics
            .iter()
            .map(|m| serde_json::to_string(m).expect("serializable") + "\n")
            .collect();
        write_text(&dir.join("metrics.jsonl"), &log)?;
        let mut run_rc = rc.clone();
        run_rc.train.seed = run.seed;
        let (config, flat) = run_config_json(&run_rc);
        write_text(&dir.join("config.resolved"), &flat)?;
        let mut artifacts = vec!["model.bin", "model.bin.meta.json", "model.bin.vocab.json", "metrics.jsonl", "config.resolved"];
        let mut test_f1 = None;
        if let (Some(pred), Some(gold_set)) = (&run.test, &test_set) {
            write_prediction_file(&dir.join("test_predictions.jsonl"), &tuple_lines(gold_set, pred.clone()))?;
            let gold: Vec<_> = gold_set.iter().map(Example::surface_set).collect();
            let report = score(pred, &gold)?;
            test_f1 = Some(report.overall.f1);
            write_json(&dir.join("test_report.json"), &report)?;
            artifacts.extend(["test_predictions.jsonl", "test_report.json"]);
        }
        let mut manifest = RunManifest::new("train", Some(run.seed), config).input("data", &args.data);
        if let Some(c) = &args.config {
            manifest = manifest.input("config", c);
        }
        if let Some(v) = &args.vectors {
            manifest = manifest.input("vectors", v);
        }
        manifest.artifacts = artifacts.into_iter().map(String::from).collect();
        manifest.write(&dir.join("manifest.json"))?;
        let ckpt = &run.outcome.checkpoint;
        summaries.push(json!({
            "seed": run.seed,
            "best_epoch": ckpt.meta.epoch,
            "valid_f1": ckpt.meta.valid_f1,
            "epochs_run": run.outcome.metrics.len(),
            "test_f1": test_f1,
        }));
    }

    let mut ensemble_f1 = None;
    if runs.len() > 1 {
        let (config, _) = run_config_json(&rc);
        let mut manifest = RunManifest::new("train", Some(rc.train.seed), config).input("data", &args.data);
        manifest.artifacts = (0..runs.len()).map(|i| format!("run{i}")).collect();
        if let Some(gold_set) = &test_set {
            let preds: Vec<Vec<_>> = runs.iter().filter_map(|r| r.test.clone()).collect();
            let threshold = runs.len() / 2 + 1;
            let combined = ensemble(&preds, threshold);
            let gold: Vec<_> = gold_set.iter().map(Example::surface_set).collect();
            let report = score(&combined, &gold)?;
            ensemble_f1 = Some(report.overall.f1);
            write_prediction_file(&root.join("ensemble_test_predictions.jsonl"), &tuple_lines(gold_set, combined))?;
            write_json(&root.join("ensemble_test_report.json"), &json!({ "threshold": threshold, "report": report }))?;
            manifest.artifacts.extend(["ensemble_test_predictions.jsonl".into(), "ensemble_test_report.json".into()]);
        }
        manifest.write(&root.join("manifest.json"))?;
    }
    staged.commit()?;
    println!("{}", json!({ "out": args.out.display().to_string(), "runs": summaries, "ensemble_test_f1": ensemble_f1 }));
    Ok(())
}

pub fn predict(checkpoint: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let model: Model = ckpt.model()?;
    let lines = read_tuple_sets(input)?;
    let preds = lines
        .par_iter()
        .map(|l| model.predict(&ckpt.params, &Sentence::new(l.tokens.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut diagnostics = jere_core::word_decoder::GenerationDiagnostics::default();
    let mut rows = Vec::with_capacity(lines.len());
    let mut tuples = 0;
    for (l, p) in lines.iter().zip(preds) {
        diagnostics.add(&p.diagnostics);
        tuples += p.tuples.len();
        rows.push((l.tokens.clone(), p.tuples));
    }

    let mut staged = Staged::new();
    let pred_path = staged.file(out)?;
    let manifest_target = jere_core::trainer::sidecar(out, ".manifest.json");
    let manifest_path = staged.file(&manifest_target)?;
    write_prediction_file(&pred_path, &rows)?;
    let config = serde_json::to_value(&ckpt.meta).expect("serializable");
    let mut manifest = RunManifest::new("predict", Some(ckpt.meta.seed), config)
        .input("checkpoint", checkpoint)
        .input("input", input);
    manifest.artifacts = vec![out.display().to_string()];
    manifest.write(&manifest_path)?;
    staged.commit()?;
    println!("{}", json!({ "sentences": rows.len(), "tuples": tuples, "diagnostics": diagnostics }));
    Ok(())
}

fn aligned(path: &Path, lines: &[TupleSetLine], gold: &[TupleSetLine]) -> Result<Vec<BTreeSet<SurfaceTuple>>, CliError> {
    if lines.len() != gold.len() {
        return Err(CliError::Mismatch(format!(
            "{} has {} sentences, gold has {}",
            path.display(),
            lines.len(),
            gold.len()
        )));
    }
    if let Some(i) = lines.iter().zip(gold).position(|(a, b)| a.tokens != b.tokens) {
        return Err(CliError::Mismatch(format!("{} line {}: tokens differ from gold", path.display(), i + 1)));
    }
    Ok(lines.iter().map(|l| l.tuples.clone()).collect())
}

pub fn eval(pred: &Path, gold: &Path, runs: &[PathBuf], threshold: usize) -> Result<(), CliError> {
    if threshold == 0 {
        return Err(CliError::Usage("--ensemble-threshold must be at least 1".into()));
    }
    let gold_lines = read_tuple_sets(gold)?;
    let gold_sets: Vec<_> = gold_lines.iter().map(|l| l.tuples.clone()).collect();
    let pred_sets = aligned(pred, &read_tuple_sets(pred)?, &gold_lines)?;
    let report = score(&pred_sets, &gold_sets)?;
    let components = component_scores(&pred_sets, &gold_sets)?;
    let errors = error_breakdown(&pred_sets, &gold_sets)?;
    println!("F1 {:.3}", report.overall.f1);
    println!("{report}");
    println!("{components}");
    println!("{errors}");
    let mut doc = json!({ "tuples": report, "components": components, "errors": errors });
    if !runs.is_empty() {
        let run_sets = runs
            .iter()
            .map(|p| aligned(p, &read_tuple_sets(p)?, &gold_lines))
            .collect::<Result<Vec<_>, _>>()?;
        let combined = ensemble(&run_sets, threshold);
        let ens = score(&combined, &gold_sets)?;
        println!("ensemble of {} runs, threshold {threshold}", runs.len());
        println!("F1 {:.3}", ens.overall.f1);
        println!("{ens}");
        doc["ensemble"] = json!({ "runs": runs.len(), "threshold": threshold, "tuples": ens });
    }
    println!("{doc}");
    Ok(())
}

pub fn gen_synth(config: Option<&Path>, seed: u64, out: &Path) -> Result<(), CliError> {
    let mut cfg = SynthConfig::default();
    if let Some(path) = config {
        for (k, v) in read_config(path)? {
            cfg.set(&k, &v).map_err(CliError::Config)?;
        }
    }
    let examples = generate_synthetic(&cfg, seed)?;
    let (train, valid, test) = split_examples(&examples, cfg.train_fraction, cfg.valid_fraction, seed);
    let mut staged = Staged::new();
    let dir = staged.dir(out)?;
    for (name, split) in [("train.jsonl", &train), ("valid.jsonl", &valid), ("test.jsonl", &test)] {
        write_dataset(dir.join(name), split)?;
    }
    let value = serde_json::to_value(&cfg).expect("serializable");
    write_text(&dir.join("config.resolved"), &flat_config(&[&value]))?;
    let mut manifest = RunManifest::new("gen-synth", Some(seed), value);
    if let Some(c) = config {
        manifest = manifest.input("config", c);
    }
    manifest.artifacts = ["train.jsonl", "valid.jsonl", "test.jsonl", "config.resolved"].map(String::from).to_vec();
    manifest.write(&dir.join("manifest.json"))?;
    staged.commit()?;
    println!("{}", json!({ "out": out.display().to_string(), "train": train.len(), "valid": valid.len(), "test": test.len() }));
    Ok(())
}

pub fn inspect(data: &Path) -> Result<(), CliError> {
    let report = load_dataset(data, &LoadOptions::default())?;
    let stats = CorpusStats::from_examples(&report.examples);
    print!("{stats}");
    for e in &report.errors {
        log::warn!("{}: {e}", data.display());
    }
    println!(
        "{}",
        json!({
            "stats": stats,
            "invalid_lines": report.errors.len(),
            "separator_rejections": report.separator_rejections,
        })
    );
    Ok(())
}
