//! Running a configured experiment and writing its artifacts.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataConfig, ExperimentConfig, Precision};
use super::data::{generate_synthetic, load_csv, load_csv_with_stats, Dataset, Task};
use crate::engine::{evaluate, Checkpoint, EventCounts, EventKind, Metric, TraceEvent, Trainer};
use crate::error::{Error, Result};
use crate::models::{loss, ModelKind, ModelShape};
use crate::scalar::Scalar;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RESULT_FILE: &str = "result.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Column order of `trajectory.csv`.
pub const TRAJECTORY_COLUMNS: [&str; 4] = ["accepted_update_index", "train_loss", "test_metric", "epsilon"];

/// JSON Schema every `trace.jsonl` record satisfies.
pub const TRACE_SCHEMA: &str = include_str!("trace.schema.json");

/// Summary written to `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub final_metric: Metric,
    /// Mean loss of the final model over the whole training split.
    pub final_train_loss: f64,
    pub counts: EventCounts,
    pub iterations: u64,
    #[serde(with = "crate::engine::infinite_as_null")]
    pub epsilon: f64,
    pub delta: f64,
    /// Accepted-update cap after budget calibration.
    pub update_limit: u64,
    /// Divisor used for the noisy mean gradient.
    pub mean_divisor: String,
    pub trace: PathBuf,
    pub trajectory: PathBuf,
    pub checkpoint: PathBuf,
    pub elapsed_secs: f64,
}

/// Train and test splits for a config.
pub fn load_data<T: Scalar>(config: &DataConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    match config {
        DataConfig::Synthetic(spec) => {
            let data = generate_synthetic(spec)?;
            Ok((data.train, data.test))
        }
        DataConfig::Csv(c) => {
            let train: Dataset<T> = load_csv(&c.train_path, &c.schema, c.normalization)?;
            let test = load_csv_with_stats(&c.test_path, &c.schema, train.normalization.as_ref())?;
            Ok((train, test))
        }
    }
}

/// Model shape implied by the model section and the data.
pub fn model_shape(config: &ExperimentConfig, task: Task, input_dim: usize) -> Result<ModelShape> {
    let shape = match (config.model.kind, task) {
        (ModelKind::Linear, Task::Regression) => ModelShape::linear(input_dim),
        (ModelKind::Logistic, Task::Classification { n_classes }) => ModelShape::logistic(input_dim, n_classes),
        (ModelKind::Mlp1, Task::Classification { n_classes }) => {
            ModelShape::mlp1(input_dim, config.model.hidden, n_classes)
        }
        (kind, task) => {
            return Err(Error::Config(vec![format!(
                "model kind {kind:?} cannot be trained on a {task:?} dataset"
            )]))
        }
    };
    shape.validate()?;
    Ok(shape)
}

/// Run `config` and write the artifacts into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    match config.model.precision {
        Precision::F64 => run_typed::<f64>(config, out_dir, None),
        Precision::F32 => run_typed::<f32>(config, out_dir, None),
    }
}

/// Continue a run from `out_dir/checkpoint.bin`, appending to its trace.
pub fn resume_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let ckpt = Checkpoint::load(&out_dir.join(CHECKPOINT_FILE))?;
    match config.model.precision {
        Precision::F64 => run_typed::<f64>(config, out_dir, Some(ckpt)),
        Precision::F32 => run_typed::<f32>(config, out_dir, Some(ckpt)),
    }
}

fn run_typed<T: Scalar>(config: &ExperimentConfig, out_dir: &Path, resume: Option<Checkpoint>) -> Result<ExperimentResult> {
    let started = Instant::now();
    let config = config.resolved()?;
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let (train, test) = load_data::<T>(&config.data)?;
    let shape = model_shape(&config, train.task, train.input_dim)?;
    let mut problems = config.train.problems(train.len());
    if test.is_empty() {
        problems.push("test split is empty".into());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }

    let resuming = resume.is_some();
    let mut trainer = match resume {
        None => Trainer::new(&train.examples, Some(&test.examples), shape, config.train.clone())?,
        Some(ckpt) => {
            if ckpt.config != config.train || ckpt.shape != shape {
                return Err(Error::Checkpoint("checkpoint was written by a different configuration".into()));
            }
            Trainer::resume(&train.examples, Some(&test.examples), ckpt)?
        }
    };

    fs::create_dir_all(out_dir)?;
    let trace_path = out_dir.join(TRACE_FILE);
    let trajectory_path = out_dir.join(TRAJECTORY_FILE);
    let checkpoint_path = out_dir.join(CHECKPOINT_FILE);
    let open = |path: &Path| -> Result<File> {
        Ok(OpenOptions::new()
            .create(true)
            .write(true)
            .append(resuming)
            .truncate(!resuming)
            .open(path)?)
    };
    let mut trace = BufWriter::new(open(&trace_path)?);
    let trajectory_file = open(&trajectory_path)?;
    let write_header = !resuming || trajectory_file.metadata()?.len() == 0;
    let mut trajectory = csv::WriterBuilder::new().has_headers(false).from_writer(trajectory_file);
    if write_header {
        trajectory.write_record(TRAJECTORY_COLUMNS)?;
        trajectory.flush()?;
    }

    let every = config.checkpoint_every;
    while !trainer.is_finished() {
        let event = trainer.step()?;
        write_trace_line(&mut trace, &event)?;
        if event.event == EventKind::Accepted {
            trajectory.write_record(trajectory_row(&event))?;
            trajectory.flush()?;
        }
        if every > 0 && trainer.iteration() % every == 0 {
            trainer.checkpoint().save(&checkpoint_path)?;
        }
    }
    trace.flush()?;
    trainer.checkpoint().save(&checkpoint_path)?;

    let final_metric = evaluate(trainer.params(), &test.examples)?;
    let final_train_loss = loss(trainer.params(), &train.examples)?.to_f64_lossy();
    let result = ExperimentResult {
        dataset: train.name.clone(),
        n_train: train.len(),
        n_test: test.len(),
        final_metric,
        final_train_loss,
        counts: trainer.counts(),
        iterations: trainer.iteration(),
        epsilon: trainer.epsilon(),
        delta: config.train.delta,
        update_limit: trainer.update_limit(),
        mean_divisor: "realized_batch_size".into(),
        trace: trace_path,
        trajectory: trajectory_path,
        checkpoint: checkpoint_path,
        elapsed_secs: started.elapsed().as_secs_f64(),
        config,
    };
    fs::write(out_dir.join(RESULT_FILE), serde_json::to_string_pretty(&result)?)?;
    Ok(result)
}

fn write_trace_line(w: &mut impl Write, event: &TraceEvent) -> Result<()> {
    serde_json::to_writer(&mut *w, event)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn trajectory_row(event: &TraceEvent) -> [String; 4] {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    [
        event.t.to_string(),
        opt(event.loss),
        opt(event.test_metric),
        event.epsilon.to_string(),
    ]
}
