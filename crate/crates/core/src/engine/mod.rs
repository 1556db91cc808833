//! Training loops: DPSGD and its selective-update variant.
//!
//! A run draws from five seeded streams (initialisation, training sampling,
//! gradient noise, validation sampling, validation noise). Each iteration
//! Poisson-samples a training batch, forms a clipped noisy gradient step
//! and, under DPSUR, accepts that candidate only if a noisy comparison of
//! validation losses passes. Privacy is charged for accepted updates only.

mod checkpoint;
mod config;
mod sampling;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Algorithm, TrainConfig, DEFAULT_MAX_ITERATIONS};
pub use sampling::{poisson_sample, RngStreams, Stream, StreamState};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_max_updates, PrivacyLedger};
use crate::error::{Error, Result};
use crate::mechanisms::{noisy_threshold_test, ValidationMechanismSpec};
use crate::models::{
    clip_per_sample, loss_at, noisy_mean_gradient, per_sample_gradients_at, sgd_momentum_step,
    Example, Label, ModelParams, ModelShape,
};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Accepted,
    Rejected,
    /// An empty Poisson batch: no candidate, no charge.
    Skipped,
}

/// One loop iteration as recorded in the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event: EventKind,
    pub iteration: u64,
    /// Accepted updates so far, including this one.
    pub t: u64,
    pub train_batch: usize,
    pub valid_batch: Option<usize>,
    /// Candidate loss on the validation batch (the training batch for DPSGD).
    pub loss: Option<f64>,
    /// Cumulative ε after this event; infinite (`null` in JSON) for
    /// non-private runs.
    #[serde(with = "infinite_as_null")]
    pub epsilon: f64,
    pub delta: f64,
    pub test_metric: Option<f64>,
    pub elapsed_secs: f64,
}

/// Serde adapter writing `+∞` as `null`, which JSON can represent.
pub mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub events: Vec<TraceEvent>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub accepted: u64,
    pub rejected: u64,
    pub skipped: u64,
}

impl TrainTrace {
    pub fn counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for e in &self.events {
            match e.event {
                EventKind::Accepted => c.accepted += 1,
                EventKind::Rejected => c.rejected += 1,
                EventKind::Skipped => c.skipped += 1,
            }
        }
        c
    }
}

/// Test-set metric: accuracy for classifiers, mean loss for regression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Metric {
    Accuracy(f64),
    MeanLoss(f64),
}

impl Metric {
    pub fn value(&self) -> f64 {
        match *self {
            Metric::Accuracy(v) | Metric::MeanLoss(v) => v,
        }
    }

    /// Whether `self` is at least as good as `other` (same kind required).
    pub fn at_least_as_good_as(&self, other: &Metric) -> bool {
        match (self, other) {
            (Metric::Accuracy(a), Metric::Accuracy(b)) => a >= b,
            (Metric::MeanLoss(a), Metric::MeanLoss(b)) => a <= b,
            _ => false,
        }
    }
}

pub fn evaluate<T: Scalar>(params: &ModelParams<T>, test: &[Example<T>]) -> Result<Metric> {
    if test.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for ex in test {
        params.check_example(ex)?;
    }
    if params.shape().is_classifier() {
        let hits = test
            .iter()
            .filter(|ex| matches!(ex.label, Label::Class(c) if params.predict_class(&ex.features) == Some(c)))
            .count();
        Ok(Metric::Accuracy(hits as f64 / test.len() as f64))
    } else {
        Ok(Metric::MeanLoss(crate::models::loss(params, test)?.to_f64_lossy()))
    }
}

/// A resumable training run.
pub struct Trainer<'a, T: Scalar> {
    config: TrainConfig,
    train: &'a [Example<T>],
    test: Option<&'a [Example<T>]>,
    params: ModelParams<T>,
    ledger: Option<PrivacyLedger>,
    validation: ValidationMechanismSpec,
    streams: RngStreams,
    iteration: u64,
    counts: EventCounts,
    update_limit: u64,
    epsilon: f64,
    started: Instant,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(
        train: &'a [Example<T>],
        test: Option<&'a [Example<T>]>,
        shape: ModelShape,
        config: TrainConfig,
    ) -> Result<Self> {
        let mut streams = RngStreams::from_seed(config.seed);
        let params = ModelParams::init_uniform(shape, streams.get(Stream::Init))?;
        Self::assemble(train, test, config, params, streams, 0, EventCounts::default())
    }

    pub fn resume(
        train: &'a [Example<T>],
        test: Option<&'a [Example<T>]>,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        let params = checkpoint.params()?;
        let streams = RngStreams::from_states(&checkpoint.streams)?;
        let mut trainer = Self::assemble(
            train,
            test,
            checkpoint.config,
            params,
            streams,
            checkpoint.iteration,
            checkpoint.counts,
        )?;
        if let (Some(ledger), Some(saved)) = (&trainer.ledger, &checkpoint.ledger) {
            if ledger.train != saved.train || ledger.valid != saved.valid || ledger.delta != saved.delta {
                return Err(Error::Checkpoint("ledger does not match the configuration".into()));
            }
        }
        trainer.refresh_epsilon()?;
        Ok(trainer)
    }

    fn assemble(
        train: &'a [Example<T>],
        test: Option<&'a [Example<T>]>,
        config: TrainConfig,
        params: ModelParams<T>,
        streams: RngStreams,
        iteration: u64,
        counts: EventCounts,
    ) -> Result<Self> {
        let problems = config.problems(train.len());
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        for ex in train.iter().chain(test.into_iter().flatten()) {
            params.check_example(ex)?;
        }
        let mut ledger = config.ledger(train.len())?;
        if let Some(l) = ledger.as_mut() {
            l.accepted_updates = counts.accepted;
        }
        let update_limit = match (config.target_epsilon, &ledger) {
            (Some(target), Some(l)) => {
                let t_max = calibrate_max_updates(l.train, l.valid, target, l.delta)?;
                if t_max == 0 {
                    return Err(Error::InfeasibleBudget(format!(
                        "a single update already exceeds epsilon = {target}"
                    )));
                }
                t_max.min(config.max_updates)
            }
            _ => config.max_updates,
        };
        let validation = config.validation_spec()?;
        let mut trainer = Self {
            config,
            train,
            test,
            params,
            ledger,
            validation,
            streams,
            iteration,
            counts,
            update_limit,
            epsilon: f64::INFINITY,
            started: Instant::now(),
        };
        trainer.refresh_epsilon()?;
        Ok(trainer)
    }

    fn refresh_epsilon(&mut self) -> Result<()> {
        self.epsilon = match &self.ledger {
            Some(l) => l.epsilon()?,
            None => f64::INFINITY,
        };
        Ok(())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    pub fn ledger(&self) -> Option<&PrivacyLedger> {
        self.ledger.as_ref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Accepted updates allowed by `max_updates` and the privacy budget.
    pub fn update_limit(&self) -> u64 {
        self.update_limit
    }

    pub fn is_finished(&self) -> bool {
        self.counts.accepted >= self.update_limit || self.iteration >= self.config.max_iterations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            &self.config,
            &self.params,
            self.ledger.clone(),
            self.iteration,
            self.counts,
            self.streams.states(),
        )
    }

    /// Run to completion, handing each event to `on_event` as it happens.
    pub fn run(&mut self, mut on_event: impl FnMut(&TraceEvent) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let event = self.step()?;
            on_event(&event)?;
        }
        Ok(())
    }

    /// Run to completion and collect the trace.
    pub fn run_collect(&mut self) -> Result<TrainTrace> {
        let mut trace = TrainTrace::default();
        self.run(|e| {
            trace.events.push(e.clone());
            Ok(())
        })?;
        Ok(trace)
    }

    /// One loop iteration.
    pub fn step(&mut self) -> Result<TraceEvent> {
        self.iteration += 1;
        let n = self.train.len();
        let batch = poisson_sample(
            n,
            self.config.train_rate(n),
            self.streams.get(Stream::TrainSampling),
        );
        if batch.is_empty() {
            return Ok(self.record(EventKind::Skipped, 0, None, None));
        }
        let grads = per_sample_gradients_at(&self.params, self.train, &batch)?;
        let clipped = clip_per_sample(&grads, T::from_f64_lossy(self.config.clip_train))?;
        let noisy = noisy_mean_gradient(
            &clipped,
            self.config.sigma_train,
            self.streams.get(Stream::GradientNoise),
        )?
        .expect("batch is non-empty");
        let candidate = sgd_momentum_step(&self.params, &noisy, self.config.eta, self.config.momentum)?;
        if candidate.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!(
                "candidate weights at iteration {}; lower eta or clip_train",
                self.iteration
            )));
        }

        match self.config.algorithm {
            Algorithm::Dpsgd => {
                let loss = finite_loss(loss_at(&candidate, self.train, &batch)?, self.iteration)?;
                self.accept(candidate)?;
                Ok(self.record(EventKind::Accepted, batch.len(), None, Some(loss)))
            }
            Algorithm::Dpsur => {
                let valid = poisson_sample(
                    n,
                    self.config.valid_rate(n),
                    self.streams.get(Stream::ValidSampling),
                );
                if valid.is_empty() {
                    return Ok(self.record(EventKind::Skipped, batch.len(), Some(0), None));
                }
                let new_loss = finite_loss(loss_at(&candidate, self.train, &valid)?, self.iteration)?;
                let old_loss = finite_loss(loss_at(&self.params, self.train, &valid)?, self.iteration)?;
                let outcome = noisy_threshold_test(
                    new_loss - old_loss,
                    &self.validation,
                    self.config.clip_mode,
                    self.streams.get(Stream::ValidNoise),
                )?;
                let kind = if outcome.accepted {
                    self.accept(candidate)?;
                    EventKind::Accepted
                } else {
                    EventKind::Rejected
                };
                Ok(self.record(kind, batch.len(), Some(valid.len()), Some(new_loss)))
            }
        }
    }

    fn accept(&mut self, candidate: ModelParams<T>) -> Result<()> {
        self.params = candidate;
        self.counts.accepted += 1;
        if let Some(l) = self.ledger.as_mut() {
            l.record_accepted();
        }
        self.refresh_epsilon()
    }

    fn record(
        &mut self,
        event: EventKind,
        train_batch: usize,
        valid_batch: Option<usize>,
        loss: Option<f64>,
    ) -> TraceEvent {
        match event {
            EventKind::Accepted => {}
            EventKind::Rejected => self.counts.rejected += 1,
            EventKind::Skipped => self.counts.skipped += 1,
        }
        let every = self.config.eval_every;
        let test_metric = match (event, self.test) {
            (EventKind::Accepted, Some(test)) if every > 0 && self.counts.accepted.is_multiple_of(every) => {
                evaluate(&self.params, test).ok().map(|m| m.value())
            }
            _ => None,
        };
        TraceEvent {
            event,
            iteration: self.iteration,
            t: self.counts.accepted,
            train_batch,
            valid_batch,
            loss,
            epsilon: self.epsilon,
            delta: self.config.delta,
            test_metric,
            elapsed_secs: self.started.elapsed().as_secs_f64(),
        }
    }
}

fn finite_loss<T: Scalar>(loss: T, iteration: u64) -> Result<f64> {
    let v = loss.to_f64_lossy();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("loss at iteration {iteration}")))
    }
}

/// Selective-update training. Requires `config.algorithm == Dpsur`.
pub fn dpsur_train<T: Scalar>(
    train: &[Example<T>],
    test: Option<&[Example<T>]>,
    shape: ModelShape,
    config: TrainConfig,
) -> Result<(ModelParams<T>, TrainTrace)> {
    run_algorithm(train, test, shape, config, Algorithm::Dpsur)
}

/// Plain DPSGD: every candidate is applied and charged.
pub fn dpsgd_train<T: Scalar>(
    train: &[Example<T>],
    test: Option<&[Example<T>]>,
    shape: ModelShape,
    config: TrainConfig,
) -> Result<(ModelParams<T>, TrainTrace)> {
    run_algorithm(train, test, shape, config, Algorithm::Dpsgd)
}

fn run_algorithm<T: Scalar>(
    train: &[Example<T>],
    test: Option<&[Example<T>]>,
    shape: ModelShape,
    config: TrainConfig,
    algorithm: Algorithm,
) -> Result<(ModelParams<T>, TrainTrace)> {
    let config = TrainConfig { algorithm, ..config };
    let mut trainer = Trainer::new(train, test, shape, config)?;
    let trace = trainer.run_collect()?;
    Ok((trainer.into_params(), trace))
}
