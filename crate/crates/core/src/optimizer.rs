//! Sparse ("lazy") Adam and a plateau learning-rate scheduler.
//!
//! Only rows present in a [`GradientBuffer`] are updated, and only their
//! moments advance. Rows absent from a step keep their moments frozen rather
//! than decaying towards zero as dense Adam would. Bias correction uses the
//! global step count.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::group::canonicalize;
use crate::math::sqrt;
use crate::model::EmbeddingTables;
use crate::objective::GradientBuffer;

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(d: usize) -> Self {
        Self {
            m: vec![0.0; d],
            v: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    entity_moments: Vec<Option<Moments>>,
    relation_moments: Vec<Option<Moments>>,
}

impl AdamState {
    /// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            entity_moments: Vec::new(),
            relation_moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moments of an entity row, if it was ever touched.
    pub fn entity_moments(&self, id: usize) -> Option<(&[f64], &[f64])> {
        self.entity_moments
            .get(id)
            .and_then(Option::as_ref)
            .map(|m| (m.m.as_slice(), m.v.as_slice()))
    }

    pub fn relation_moments(&self, id: usize) -> Option<(&[f64], &[f64])> {
        self.relation_moments
            .get(id)
            .and_then(Option::as_ref)
            .map(|m| (m.m.as_slice(), m.v.as_slice()))
    }

    /// Number of rows with allocated moments.
    pub fn touched_rows(&self) -> usize {
        self.entity_moments
            .iter()
            .chain(&self.relation_moments)
            .filter(|m| m.is_some())
            .count()
    }

    /// Applies one update. Relation rows are re-canonicalized afterwards.
    pub fn step(&mut self, tables: &mut EmbeddingTables, grads: &GradientBuffer) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient at step {}",
                self.step + 1
            )));
        }
        self.entity_moments.resize(tables.n_entities(), None);
        self.relation_moments.resize(tables.n_relations(), None);
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        let hyper = (self.lr, self.beta1, self.beta2, self.eps, bc1, bc2);

        for (id, g) in grads.entity_rows() {
            let row = tables.entity_mut(id)?;
            let mom = self.entity_moments[id].get_or_insert_with(|| Moments::zeros(g.len()));
            update_row(row, g, mom, hyper);
        }
        let kind = tables.kind();
        let q = kind.param_count();
        for (id, g) in grads.relation_rows() {
            let row = tables.relation_mut(id)?;
            let mom = self.relation_moments[id].get_or_insert_with(|| Moments::zeros(g.len()));
            update_row(row, g, mom, hyper);
            for block in row.chunks_exact_mut(q) {
                canonicalize(kind, block);
            }
        }
        Ok(())
    }
}

fn update_row(row: &mut [f64], g: &[f64], mom: &mut Moments, hyper: (f64, f64, f64, f64, f64, f64)) {
    let (lr, b1, b2, eps, bc1, bc2) = hyper;
    for (((x, gi), m), v) in row.iter_mut().zip(g).zip(&mut mom.m).zip(&mut mom.v) {
        *m = b1 * *m + (1.0 - b1) * gi;
        *v = b2 * *v + (1.0 - b2) * gi * gi;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *x -= lr * m_hat / (sqrt(v_hat) + eps);
    }
}

/// Halves the learning rate once validation loss has failed to improve for
/// more than `patience` consecutive observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    best: f64,
    since_improvement: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            factor: 0.5,
            best: f64::INFINITY,
            since_improvement: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn since_improvement(&self) -> usize {
        self.since_improvement
    }

    /// Records a validation loss and returns the (possibly reduced) rate.
    pub fn observe(&mut self, val_loss: f64, lr: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_improvement = 0;
            return lr;
        }
        self.since_improvement += 1;
        if self.since_improvement > self.patience {
            self.since_improvement = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}
