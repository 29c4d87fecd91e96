use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use cpod_core::ensemble::{load_ensemble, Ensemble};
use cpod_core::pipeline::{self, Evaluation, PipelineConfig, Split, Timings, TrainArtifacts};
use cpod_core::pod::write_spectrum_csv;
use cpod_core::rom::{write_error_table_csv, ErrorRow};
use cpod_core::tgcvt::{write_assignments_csv, write_cluster_spectra_csv};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::Common;

pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_SET: &str = "train.cpod";
pub const TEST_SET: &str = "test.cpod";
pub const ARTIFACTS: &str = "artifacts.json";
pub const EVALUATION: &str = "evaluation.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
const TRAIN_TIMINGS: &str = "train_timings.json";
const EVALUATE_TIMINGS: &str = "evaluate_timings.json";
const TIMINGS: &str = "timings.json";

#[derive(Debug, Serialize, Deserialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

/// Run-directory manifest. Lists every deterministic output with its hash;
/// wall-time files are left out so reruns produce identical manifests.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    master_seed: u64,
    config: PipelineConfig,
    stages: BTreeMap<String, Vec<FileEntry>>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_config(args: &Common) -> Result<PipelineConfig> {
    let mut config: PipelineConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn config_hash(config: &PipelineConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

fn write_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileEntry { name: name.to_string(), sha256: sha256_hex(bytes) })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<FileEntry> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_bytes(dir, name, &bytes)
}

fn write_csv<F>(dir: &Path, name: &str, body: F) -> Result<FileEntry>
where
    F: FnOnce(&mut Vec<u8>) -> cpod_core::Result<()>,
{
    let mut bytes = Vec::new();
    body(&mut bytes)?;
    write_bytes(dir, name, &bytes)
}

fn write_untracked<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json { path: path.clone(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
}

/// Loads the manifest and refuses to continue under a different config.
fn open_run(dir: &Path, config: &PipelineConfig) -> Result<Manifest> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let found = config_hash(config);
    if manifest.config_hash != found {
        return Err(CliError::ConfigMismatch { expected: manifest.config_hash, found });
    }
    Ok(manifest)
}

fn record(dir: &Path, mut manifest: Manifest, stage: &str, files: Vec<FileEntry>) -> Result<()> {
    manifest.stages.insert(stage.to_string(), files);
    write_json(dir, MANIFEST, &manifest).map(|_| ())
}

fn load_set(dir: &Path, name: &str) -> Result<Ensemble> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(CliError::Missing(path));
    }
    Ok(load_ensemble(&path)?)
}

pub fn generate(args: &Common) -> Result<()> {
    let config = load_config(args)?;
    let dir = &args.out;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let train = pipeline::generate_ensemble(&config, Split::Train)?;
    let test = pipeline::generate_ensemble(&config, Split::Test)?;
    let files = vec![
        write_bytes(dir, TRAIN_SET, &train.to_bytes())?,
        write_bytes(dir, TEST_SET, &test.to_bytes())?,
        write_csv(dir, "train_inputs.csv", |w| inputs_csv(&train, w))?,
        write_csv(dir, "test_inputs.csv", |w| inputs_csv(&test, w))?,
    ];
    let manifest = Manifest {
        config_hash: config_hash(&config),
        master_seed: config.master_seed,
        config,
        stages: BTreeMap::new(),
    };
    record(dir, manifest, "generate", files)
}

/// `sample,seed,param,j,t,strength` for every recorded instant.
fn inputs_csv(e: &Ensemble, w: &mut Vec<u8>) -> cpod_core::Result<()> {
    writeln!(w, "sample,seed,param,j,t,strength")?;
    let dt = e.time.dt();
    for (i, t) in e.trajectories.iter().enumerate() {
        let stride = t.stride()?;
        for j in 0..=t.len() {
            let a = t.input.at_snapshot(j, stride);
            writeln!(w, "{i},{},{},{j},{},{a}", t.input.meta.seed, t.input.meta.param, j as f64 * dt)?;
        }
    }
    Ok(())
}

pub fn train(args: &Common) -> Result<()> {
    let config = load_config(args)?;
    let dir = &args.out;
    let manifest = open_run(dir, &config)?;
    let train = load_set(dir, TRAIN_SET)?;
    let (artifacts, timings) = pipeline::train(&config, &train)?;
    let modified = pipeline::modified_training_set(&train, &artifacts)?;
    let mut files = vec![
        write_json(dir, ARTIFACTS, &artifacts)?,
        write_csv(dir, "spectrum.csv", |w| write_spectrum_csv(w, &artifacts.spectrum))?,
    ];
    for m in &artifacts.models {
        let k = m.k;
        if let Some(tess) = &m.tessellation {
            files.push(write_csv(dir, &format!("assignments_k{k}.csv"), |w| write_assignments_csv(w, &modified, tess))?);
            files.push(write_csv(dir, &format!("cluster_spectra_k{k}.csv"), |w| write_cluster_spectra_csv(w, tess))?);
        }
        if let Some(c) = &m.classifier {
            files.push(write_csv(dir, &format!("classifier_k{k}.csv"), |w| c.write_csv(w))?);
        }
    }
    write_untracked(dir, TRAIN_TIMINGS, &timings)?;
    record(dir, manifest, "train", files)
}

pub fn evaluate(args: &Common) -> Result<()> {
    let config = load_config(args)?;
    let dir = &args.out;
    let manifest = open_run(dir, &config)?;
    let artifacts: TrainArtifacts = read_json(&dir.join(ARTIFACTS))?;
    let test = load_set(dir, TEST_SET)?;
    let (evaluation, timings) = pipeline::evaluate(&config, &artifacts, &test)?;
    let mut files = vec![write_json(dir, EVALUATION, &evaluation)?];
    let rows = |true_labels: bool| -> Vec<ErrorRow> {
        evaluation
            .per_k
            .iter()
            .filter_map(|e| {
                let v = if true_labels { &e.true_errors } else { &e.predicted_errors };
                v.stats.as_ref().map(|s| ErrorRow::from((e.k, s)))
            })
            .collect()
    };
    let (on_true, on_pred) = (rows(true), rows(false));
    files.push(write_csv(dir, "errors_true.csv", |w| write_error_table_csv(&on_true, w))?);
    files.push(write_csv(dir, "errors_predicted.csv", |w| write_error_table_csv(&on_pred, w))?);
    for e in &evaluation.per_k {
        let k = e.k;
        files.push(write_csv(dir, &format!("confusion_k{k}.csv"), |w| e.confusion.write_csv(w))?);
        files.push(write_csv(dir, &format!("labels_k{k}.csv"), |w| {
            writeln!(w, "sample,true_label,predicted_label")?;
            for (i, (t, p)) in e.true_labels.iter().zip(&e.predicted_labels).enumerate() {
                writeln!(w, "{i},{},{}", t + 1, p + 1)?;
            }
            Ok(())
        })?);
    }
    write_untracked(dir, EVALUATE_TIMINGS, &timings)?;
    record(dir, manifest, "evaluate", files)
}

#[derive(Debug, Serialize)]
struct AllTimings {
    train: Option<Timings>,
    evaluate: Option<Timings>,
}

pub fn report(args: &Common) -> Result<()> {
    let config = load_config(args)?;
    let dir = &args.out;
    let manifest = open_run(dir, &config)?;
    let artifacts: TrainArtifacts = read_json(&dir.join(ARTIFACTS))?;
    let evaluation: Evaluation = read_json(&dir.join(EVALUATION))?;
    let dt = config.fom.time_grid()?.dt();
    let summary = pipeline::summarize(&config, &artifacts, &evaluation, dt);
    let files = vec![
        write_json(dir, SUMMARY_JSON, &summary)?,
        write_csv(dir, SUMMARY_CSV, |w| summary.write_csv(w))?,
    ];
    let timings = AllTimings {
        train: read_json(&dir.join(TRAIN_TIMINGS)).ok(),
        evaluate: read_json(&dir.join(EVALUATE_TIMINGS)).ok(),
    };
    write_untracked(dir, TIMINGS, &timings)?;
    record(dir, manifest, "report", files)
}
