//! The training loop: shuffled mini-batches, negative sampling, sparse Adam,
//! periodic validation feeding the plateau scheduler.
//!
//! The loop is single-threaded and fully determined by the seed, the
//! configuration and the store. Side effects such as logging and checkpoints
//! are delegated to a [`TrainObserver`].

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{evaluate_split, RankReport};
use crate::model::{init_tables, EmbeddingTables, ModelConfig};
use crate::objective::{batch_loss, loss_and_gradients, sample_negatives, LossParams, NegativeBatch};
use crate::optimizer::{AdamState, PlateauScheduler};
use crate::store::{Split, Triple, TripleStore};

/// Mixed into the seed of the validation negatives so they differ from the
/// training stream while staying identical across validation events.
const VALIDATION_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossParams,
    pub batch_size: usize,
    pub lr: f64,
    pub max_steps: u64,
    /// Steps between validation events.
    pub valid_every: u64,
    /// Validation events without improvement before the rate is halved.
    pub patience: usize,
    pub seed: u64,
    /// Training stops once the rate falls below this.
    pub min_lr: f64,
    /// Also compute filtered validation MRR at each event.
    pub valid_mrr: bool,
    /// Steps between snapshot callbacks; 0 disables them.
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            model,
            loss: LossParams {
                temperature: 1.0,
                n_neg: 256,
            },
            batch_size: 1024,
            lr: 1e-4,
            max_steps: 100_000,
            valid_every: 1000,
            patience: 3,
            seed: 0,
            min_lr: 1e-8,
            valid_mrr: true,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.valid_every == 0 {
            return Err(Error::Config("valid_every must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationEvent {
    pub step: u64,
    /// Mean training loss since the previous event; `None` at step 0.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub lr: f64,
    pub mrr: Option<f64>,
}

impl fmt::Display for ValidationEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={}", self.step)?;
        match self.train_loss {
            Some(l) => write!(f, " train_loss={l:.9}")?,
            None => write!(f, " train_loss=na")?,
        }
        write!(f, " val_loss={:.9} lr={:e}", self.val_loss, self.lr)?;
        match self.mrr {
            Some(m) => write!(f, " mrr={m:.6}"),
            None => write!(f, " mrr=na"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    LearningRateUnderflow,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tables: EmbeddingTables,
    pub events: Vec<ValidationEvent>,
    pub steps: u64,
    pub stop: StopReason,
}

/// Receives validation events and snapshots during [`Trainer::run`].
pub trait TrainObserver {
    type Error: From<Error>;

    /// Called after every validation; `improved` is set when the validation
    /// loss is the best seen so far.
    fn on_validation(
        &mut self,
        event: &ValidationEvent,
        tables: &EmbeddingTables,
        improved: bool,
    ) -> core::result::Result<(), Self::Error>;

    fn on_snapshot(&mut self, _step: u64, _tables: &EmbeddingTables) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

/// Discards every event.
impl TrainObserver for () {
    type Error = Error;

    fn on_validation(&mut self, _: &ValidationEvent, _: &EmbeddingTables, _: bool) -> Result<()> {
        Ok(())
    }
}

pub struct Trainer<'a> {
    config: TrainConfig,
    store: &'a TripleStore,
    tables: EmbeddingTables,
    adam: AdamState,
    scheduler: PlateauScheduler,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    step: u64,
}

impl<'a> Trainer<'a> {
    /// Starts from existing tables (fresh or restored); optimizer moments
    /// always start at zero.
    pub fn new(config: TrainConfig, store: &'a TripleStore, tables: EmbeddingTables) -> Result<Self> {
        config.validate()?;
        if tables.kind() != config.model.kind || tables.n_blocks() != config.model.n_blocks {
            return Err(Error::Config(format!(
                "tables ({} x{}) do not match the model config ({} x{})",
                tables.kind(),
                tables.n_blocks(),
                config.model.kind,
                config.model.n_blocks
            )));
        }
        if tables.n_entities() != store.n_entities() || tables.n_relations() != store.n_relations() {
            return Err(Error::Config(format!(
                "tables hold {} entities / {} relations but the store has {} / {}",
                tables.n_entities(),
                tables.n_relations(),
                store.n_entities(),
                store.n_relations()
            )));
        }
        if store.train().is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        if store.valid().is_empty() {
            return Err(Error::Config("validation split is empty".into()));
        }
        if store.n_entities() < 2 {
            return Err(Error::Config("need at least two entities".into()));
        }
        Ok(Self {
            adam: AdamState::new(config.lr),
            scheduler: PlateauScheduler::new(config.patience),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            order: Vec::new(),
            cursor: 0,
            step: 0,
            config,
            store,
            tables,
        })
    }

    /// Starts from tables initialized with the configured seed.
    pub fn from_scratch(config: TrainConfig, store: &'a TripleStore) -> Result<Self> {
        let tables = init_tables(&config.model, store.n_entities(), store.n_relations(), config.seed)?;
        Self::new(config, store, tables)
    }

    pub fn tables(&self) -> &EmbeddingTables {
        &self.tables
    }

    pub fn into_tables(self) -> EmbeddingTables {
        self.tables
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.adam.lr
    }

    fn next_batch(&mut self) -> Vec<Triple> {
        let train = self.store.train();
        let size = self.config.batch_size.min(train.len());
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order = (0..train.len()).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(train[self.order[self.cursor]]);
            self.cursor += 1;
        }
        batch
    }

    /// One optimizer step on the next mini-batch; returns its mean loss.
    pub fn step(&mut self) -> Result<f64> {
        let positives = self.next_batch();
        let n = self.store.n_entities();
        let batch = positives
            .into_iter()
            .map(|t| sample_negatives(&mut self.rng, t, self.config.loss.n_neg, n))
            .collect::<Result<Vec<_>>>()?;
        let (loss, grads) = loss_and_gradients(&self.config.model, &self.tables, &batch, &self.config.loss)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite training loss at step {}",
                self.step + 1
            )));
        }
        self.adam.step(&mut self.tables, &grads)?;
        self.step += 1;
        Ok(loss)
    }

    /// Mean loss over the validation split with negatives drawn from a fixed
    /// stream, so successive calls are comparable.
    pub fn validation_loss(&self) -> Result<f64> {
        validation_loss(&self.config, self.store, &self.tables)
    }

    fn validation_event(&self, train_loss: Option<f64>) -> Result<ValidationEvent> {
        let val_loss = self.validation_loss()?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite validation loss at step {}",
                self.step
            )));
        }
        let mrr = if self.config.valid_mrr {
            Some(self.validation_report()?.metrics.mrr)
        } else {
            None
        };
        Ok(ValidationEvent {
            step: self.step,
            train_loss,
            val_loss,
            lr: self.adam.lr,
            mrr,
        })
    }

    pub fn validation_report(&self) -> Result<RankReport> {
        evaluate_split(&self.config.model, &self.tables, self.store, Split::Valid)
    }

    fn observe<O: TrainObserver>(
        &mut self,
        obs: &mut O,
        events: &mut Vec<ValidationEvent>,
        train_loss: Option<f64>,
    ) -> core::result::Result<(), O::Error> {
        let event = self.validation_event(train_loss)?;
        let improved = event.val_loss < self.scheduler.best();
        self.adam.lr = self.scheduler.observe(event.val_loss, self.adam.lr);
        obs.on_validation(&event, &self.tables, improved)?;
        events.push(event);
        Ok(())
    }

    /// Trains until `max_steps` or until the rate underflows `min_lr`,
    /// validating at step 0, every `valid_every` steps and at the end.
    pub fn run<O: TrainObserver>(mut self, obs: &mut O) -> core::result::Result<TrainOutcome, O::Error> {
        let mut events = Vec::new();
        self.observe(obs, &mut events, None)?;
        let mut loss_sum = 0.0;
        let mut loss_count = 0u64;
        let mut stop = StopReason::MaxSteps;
        let mut last_validated = self.step;
        while self.step < self.config.max_steps {
            loss_sum += self.step()?;
            loss_count += 1;
            if self.config.checkpoint_every > 0 && self.step % self.config.checkpoint_every == 0 {
                obs.on_snapshot(self.step, &self.tables)?;
            }
            if self.step % self.config.valid_every == 0 || self.step == self.config.max_steps {
                let mean = loss_sum / loss_count as f64;
                self.observe(obs, &mut events, Some(mean))?;
                last_validated = self.step;
                loss_sum = 0.0;
                loss_count = 0;
                if self.adam.lr < self.config.min_lr {
                    stop = StopReason::LearningRateUnderflow;
                    break;
                }
            }
        }
        debug_assert_eq!(last_validated, self.step);
        Ok(TrainOutcome {
            steps: self.step,
            tables: self.tables,
            events,
            stop,
        })
    }
}

/// Validation loss of arbitrary tables under `config`.
pub fn validation_loss(config: &TrainConfig, store: &TripleStore, tables: &EmbeddingTables) -> Result<f64> {
    let valid = store.valid();
    if valid.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ VALIDATION_SALT);
    let n = store.n_entities();
    let mut total = 0.0;
    for chunk in valid.chunks(config.batch_size) {
        let batch: Vec<NegativeBatch> = chunk
            .iter()
            .map(|t| sample_negatives(&mut rng, *t, config.loss.n_neg, n))
            .collect::<Result<_>>()?;
        total += batch_loss(&config.model, tables, &batch, &config.loss)? * chunk.len() as f64;
    }
    Ok(total / valid.len() as f64)
}

/// Trains from freshly initialized tables without an observer.
pub fn train(config: TrainConfig, store: &TripleStore) -> Result<TrainOutcome> {
    Trainer::from_scratch(config, store)?.run(&mut ())
}
