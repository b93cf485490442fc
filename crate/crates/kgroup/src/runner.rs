//! Subcommand implementations behind the `kgroup` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use kgroup_core::axioms::{check_group_axioms, check_group_axioms_with, AxiomReport};
use kgroup_core::eval::{candidate_plausibility, rank_query, Direction, QueryRank, RankReport};
use kgroup_core::group::{build_block, BlockMatrix, GroupKind};
use kgroup_core::model::{EmbeddingTables, ModelConfig, Similarity};
use kgroup_core::store::{Split, Triple, TripleStore};
use kgroup_core::synthetic::{generate_synthetic, SyntheticDataset, SyntheticSpec};
use kgroup_core::train::{StopReason, TrainObserver, Trainer, ValidationEvent};

use crate::checkpoint::{self, Header};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::tsv;

/// Writes the training log and keeps the best-validation checkpoint.
struct RunObserver {
    log: BufWriter<File>,
    log_path: PathBuf,
    checkpoint: PathBuf,
    best: Option<ValidationEvent>,
}

impl RunObserver {
    fn snapshot_path(&self) -> PathBuf {
        let mut name = self.checkpoint.file_name().unwrap_or_default().to_os_string();
        name.push(".latest");
        self.checkpoint.with_file_name(name)
    }
}

impl TrainObserver for RunObserver {
    type Error = Error;

    fn on_validation(&mut self, event: &ValidationEvent, tables: &EmbeddingTables, improved: bool) -> Result<()> {
        writeln!(self.log, "{event}").map_err(|e| Error::io(&self.log_path, e))?;
        self.log.flush().map_err(|e| Error::io(&self.log_path, e))?;
        log::info!("{event}");
        if improved {
            checkpoint::save(&self.checkpoint, tables)?;
            self.best = Some(*event);
        }
        Ok(())
    }

    fn on_snapshot(&mut self, _step: u64, tables: &EmbeddingTables) -> Result<()> {
        checkpoint::save(&self.snapshot_path(), tables)
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: u64,
    pub stop: StopReason,
    pub events: Vec<ValidationEvent>,
    /// Event at which the saved checkpoint was taken.
    pub best: Option<ValidationEvent>,
    /// Tables at the end of training (not necessarily the saved ones).
    pub final_tables: EmbeddingTables,
}

/// Trains (or resumes) according to `cfg`, writing the log and checkpoint.
/// On a numerical failure the last checkpoint written stays in place.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate_paths()?;
    let train_cfg = cfg.train_config()?;
    let store = tsv::load_dir(cfg.data.as_deref().expect("validated"))?;
    let expected = Header {
        kind: cfg.group,
        n_blocks: cfg.n_blocks,
        n_entities: store.n_entities(),
        n_relations: store.n_relations(),
    };
    let trainer = match &cfg.resume {
        Some(path) => Trainer::new(train_cfg, &store, checkpoint::load_compatible(path, &expected)?)?,
        None => Trainer::from_scratch(train_cfg, &store)?,
    };
    let file = File::create(&cfg.log).map_err(|e| Error::io(&cfg.log, e))?;
    let mut obs = RunObserver {
        log: BufWriter::new(file),
        log_path: cfg.log.clone(),
        checkpoint: cfg.checkpoint.clone(),
        best: None,
    };
    let out = trainer.run(&mut obs)?;
    Ok(TrainSummary {
        steps: out.steps,
        stop: out.stop,
        events: out.events,
        best: obs.best,
        final_tables: out.tables,
    })
}

/// A checkpoint paired with the dataset it was trained on.
pub struct Loaded {
    pub store: TripleStore,
    pub tables: EmbeddingTables,
    pub model: ModelConfig,
}

/// Loads a dataset and a checkpoint whose sizes must match it. The model
/// kind and block count come from the checkpoint header.
pub fn load_model(checkpoint_path: &Path, data: &Path, similarity: Option<Similarity>) -> Result<Loaded> {
    let store = tsv::load_dir(data)?;
    let header = checkpoint::read_header(checkpoint_path)?;
    header.check_compatible(&Header {
        n_entities: store.n_entities(),
        n_relations: store.n_relations(),
        ..header
    })?;
    let tables = checkpoint::load(checkpoint_path)?;
    let mut model = ModelConfig::new(header.kind, header.n_blocks);
    if let Some(s) = similarity {
        model.similarity = s;
    }
    model.validate()?;
    Ok(Loaded { store, tables, model })
}

/// Filtered evaluation of one split, ranking queries in parallel. Results are
/// collected in split order so reports do not depend on the thread count.
pub fn evaluate(model: &ModelConfig, tables: &EmbeddingTables, store: &TripleStore, split: Split) -> Result<RankReport> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(Error::Config(format!("{} split is empty", split.name())));
    }
    let queries: Vec<QueryRank> = triples
        .par_iter()
        .flat_map_iter(|t| [Direction::Tail, Direction::Head].map(|d| (*t, d)))
        .map(|(triple, direction)| {
            rank_query(model, tables, store, &triple, direction).map(|rank| QueryRank {
                triple,
                direction,
                rank,
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(RankReport::from_queries(queries)?)
}

/// Human-readable table followed by `key=value` lines.
pub fn format_report(report: &RankReport, split: Split) -> String {
    let m = &report.metrics;
    let mut s = String::new();
    s.push_str(&format!("split    {}\nqueries  {}\n", split.name(), m.queries));
    s.push_str("metric   value\n");
    for (name, v) in [("MRR", m.mrr), ("MR", m.mr), ("Hits@1", m.hits1), ("Hits@3", m.hits3), ("Hits@10", m.hits10)] {
        s.push_str(&format!("{name:<8} {v:.6}\n"));
    }
    s.push_str(&format!(
        "mrr={:.6}\nmr={:.6}\nh1={:.6}\nh3={:.6}\nh10={:.6}\n",
        m.mrr, m.mr, m.hits1, m.hits3, m.hits10
    ));
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub entity: String,
    pub plausibility: f64,
}

/// Top-`k` tails for `(head, relation, ?)`, most plausible first, ties by id.
/// With `filter`, tails already known for the pair are skipped.
pub fn predict(loaded: &Loaded, head: &str, relation: &str, k: usize, filter: bool) -> Result<Vec<Prediction>> {
    let store = &loaded.store;
    let h = store.entities().id(head).ok_or_else(|| Error::UnknownName {
        kind: "entity",
        name: head.to_string(),
    })?;
    let r = store.relations().id(relation).ok_or_else(|| Error::UnknownName {
        kind: "relation",
        name: relation.to_string(),
    })?;
    let query = Triple::new(h, r, 0);
    let scores = candidate_plausibility(&loaded.model, &loaded.tables, &query, Direction::Tail)?;
    let known = if filter { store.known_tails(h, r) } else { None };
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|c| !known.is_some_and(|s| s.contains(c)))
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|c| Prediction {
            entity: store.entity_name(c).unwrap_or_default().to_string(),
            plausibility: scores[c],
        })
        .collect())
}

/// Generates a synthetic dataset and writes it as a dataset directory.
pub fn synth(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<SyntheticDataset> {
    let data = generate_synthetic(spec, seed)?;
    tsv::write_dir(&data.store, out)?;
    Ok(data)
}

/// Runs the axiom suite. `inject_fault` scales every block by 1.01 (and
/// shifts translations by 0.01) to exercise the failure path.
pub fn check(kind: GroupKind, samples: usize, seed: u64, inject_fault: bool) -> AxiomReport {
    if !inject_fault {
        return check_group_axioms(kind, samples, seed);
    }
    check_group_axioms_with(kind, samples, seed, |p| {
        let m = build_block(kind, p)?;
        let shift = if kind == GroupKind::Translation { 0.01 } else { 0.0 };
        let scaled: Vec<f64> = m.entries().iter().map(|v| v * 1.01 + shift).collect();
        BlockMatrix::from_entries(kind, &scaled)
    })
}

pub fn format_axiom_report(r: &AxiomReport) -> String {
    let mut s = format!(
        "group        {}\nsamples      {}\nidentity     {:.3e}\ninverse      {:.3e}\nassociative  {:.3e}\naction       {:.3e}\ncommutator   {:.3e}\ncommutativity {}\n",
        r.kind,
        r.samples,
        r.max_identity_error,
        r.max_inverse_error,
        r.max_associativity_error,
        r.max_action_error,
        r.max_commutator,
        r.commutativity
    );
    for f in r.failures.iter().take(10) {
        s.push_str(&format!("FAIL {}: {} params={:?}\n", f.property, f.detail, f.params));
    }
    if r.failures.len() > 10 {
        s.push_str(&format!("... {} more failures\n", r.failures.len() - 10));
    }
    s.push_str(if r.passed() { "result PASS\n" } else { "result FAIL\n" });
    s
}
