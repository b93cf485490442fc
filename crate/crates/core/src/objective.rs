//! Self-adversarial margin loss and its analytic gradients.
//!
//! For a positive triple with energy `s⁺` and corrupted triples with energies
//! `s⁻_i` the loss is
//!
//! ```text
//! L = −ln σ(γ − s⁺) − Σ_i w_i ln σ(s⁻_i − γ),   w = softmax(α (γ − s⁻))
//! ```
//!
//! The weights `w` are treated as constants when differentiating. A batch
//! loss is the mean over its positives.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::group::{derivatives_unchecked, BlockMatrix, GroupKind, MAX_PARAMS};
use crate::math::{exp, neg_log_sigmoid, sigmoid, sqrt};
use crate::model::{compare, EmbeddingTables, ModelConfig, RelationAction, Similarity};
use crate::store::Triple;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    /// Adversarial temperature `α`.
    pub temperature: f64,
    /// Corrupted triples per positive.
    pub n_neg: usize,
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(alloc::format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.n_neg == 0 {
            return Err(Error::Config("n_neg must be positive".into()));
        }
        Ok(())
    }
}

/// One positive triple with its corrupted counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeBatch {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
    /// Whether each negative replaced the head (otherwise the tail).
    pub head_corrupted: Vec<bool>,
    /// Energies of the negatives, filled by [`score_negatives`].
    pub scores: Vec<f64>,
    /// Adversarial weights, filled by [`score_negatives`].
    pub weights: Vec<f64>,
}

/// Corrupts head or tail (each with probability 1/2) with an entity drawn
/// uniformly from all entities except the one being replaced.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    triple: Triple,
    n_neg: usize,
    n_entities: usize,
) -> Result<NegativeBatch> {
    if n_entities < 2 {
        return Err(Error::Config("negative sampling needs at least two entities".into()));
    }
    let mut negatives = Vec::with_capacity(n_neg);
    let mut head_corrupted = Vec::with_capacity(n_neg);
    for _ in 0..n_neg {
        let corrupt_head = rng.gen_bool(0.5);
        let original = if corrupt_head { triple.head } else { triple.tail };
        let mut e = rng.gen_range(0..n_entities - 1);
        if e >= original {
            e += 1;
        }
        let mut neg = triple;
        if corrupt_head {
            neg.head = e;
        } else {
            neg.tail = e;
        }
        negatives.push(neg);
        head_corrupted.push(corrupt_head);
    }
    Ok(NegativeBatch {
        positive: triple,
        negatives,
        head_corrupted,
        scores: Vec::new(),
        weights: Vec::new(),
    })
}

/// `softmax(α (γ − s_i))` over the negatives' energies. The margin cancels, so
/// only `α` is needed. Max-subtracted for stability.
pub fn adversarial_weights(neg_scores: &[f64], temperature: f64) -> Vec<f64> {
    if neg_scores.is_empty() {
        return Vec::new();
    }
    let logits: Vec<f64> = neg_scores.iter().map(|s| -temperature * s).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| exp(l - max)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `−ln σ(γ − s⁺) − Σ w_i ln σ(s⁻_i − γ)`.
pub fn triple_loss(pos_score: f64, neg_scores: &[f64], weights: &[f64], margin: f64) -> f64 {
    let neg: f64 = neg_scores
        .iter()
        .zip(weights)
        .map(|(s, w)| w * neg_log_sigmoid(s - margin))
        .sum();
    neg_log_sigmoid(margin - pos_score) + neg
}

/// Fills `scores` and `weights` of a batch from the current tables.
pub fn score_negatives(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    batch: &mut NegativeBatch,
    temperature: f64,
) -> Result<()> {
    let action = tables.relation_action(batch.positive.relation)?;
    let mut u = vec![0.0; tables.entity_dim()];
    batch.scores = batch
        .negatives
        .iter()
        .map(|n| {
            action.apply_into(tables.entity(n.head)?, &mut u);
            Ok(config.energy_of(compare(config.similarity, &u, tables.entity(n.tail)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    batch.weights = adversarial_weights(&batch.scores, temperature);
    Ok(())
}

/// Sparse gradient rows keyed by entity and relation id.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    entity_dim: usize,
    relation_dim: usize,
    entities: BTreeMap<usize, Vec<f64>>,
    relations: BTreeMap<usize, Vec<f64>>,
}

impl GradientBuffer {
    pub fn new(entity_dim: usize, relation_dim: usize) -> Self {
        Self {
            entity_dim,
            relation_dim,
            entities: BTreeMap::new(),
            relations: BTreeMap::new(),
        }
    }

    pub fn for_tables(tables: &EmbeddingTables) -> Self {
        Self::new(tables.entity_dim(), tables.relation_dim())
    }

    pub fn entity(&self, id: usize) -> Option<&[f64]> {
        self.entities.get(&id).map(Vec::as_slice)
    }

    pub fn relation(&self, id: usize) -> Option<&[f64]> {
        self.relations.get(&id).map(Vec::as_slice)
    }

    pub fn entity_rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.entities.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn relation_rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.relations.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Row for `id`, created as zeros on first touch.
    pub fn entity_row_mut(&mut self, id: usize) -> &mut [f64] {
        let d = self.entity_dim;
        self.entities.entry(id).or_insert_with(|| vec![0.0; d])
    }

    pub fn relation_row_mut(&mut self, id: usize) -> &mut [f64] {
        let d = self.relation_dim;
        self.relations.entry(id).or_insert_with(|| vec![0.0; d])
    }

    /// `self += scale · other`, row by row in id order.
    pub fn add_scaled(&mut self, other: &GradientBuffer, scale: f64) {
        for (id, row) in other.entity_rows() {
            axpy(self.entity_row_mut(id), row, scale);
        }
        for (id, row) in other.relation_rows() {
            axpy(self.relation_row_mut(id), row, scale);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entities
            .values()
            .chain(self.relations.values())
            .flatten()
            .all(|v| v.is_finite())
    }

    /// Euclidean norm over all stored rows.
    pub fn norm(&self) -> f64 {
        sqrt(
            self.entities
                .values()
                .chain(self.relations.values())
                .flatten()
                .map(|v| v * v)
                .sum(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }
}

fn axpy(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Relation blocks plus their parameter derivatives, built once per positive.
struct RelationJet {
    kind: GroupKind,
    rel: usize,
    action: RelationAction,
    derivs: Vec<[BlockMatrix; MAX_PARAMS]>,
}

impl RelationJet {
    fn new(tables: &EmbeddingTables, rel: usize) -> Result<Self> {
        let kind = tables.kind();
        let params = tables.relation(rel)?;
        let action = RelationAction::new(kind, params)?;
        let derivs = params
            .chunks_exact(kind.param_count())
            .map(|b| derivatives_unchecked(kind, b))
            .collect();
        Ok(Self {
            kind,
            rel,
            action,
            derivs,
        })
    }

    /// Energy of `(h, t)` and, when `coef != 0`, accumulation of
    /// `coef · ∂energy` into `grads`.
    #[allow(clippy::too_many_arguments)]
    fn energy_and_grad(
        &self,
        config: &ModelConfig,
        tables: &EmbeddingTables,
        head: usize,
        tail: usize,
        u: &mut [f64],
        g: &mut [f64],
        coef: Option<f64>,
        grads: &mut GradientBuffer,
    ) -> Result<f64> {
        let h = tables.entity(head)?;
        let t = tables.entity(tail)?;
        self.action.apply_into(h, u);
        let raw = compare(config.similarity, u, t);
        let Some(c) = coef else {
            return Ok(config.energy_of(raw));
        };

        // g = ∂energy/∂u; ∂energy/∂t is −g for distances and −u for cos.
        match config.similarity {
            Similarity::L2 => {
                let inv = if raw > 0.0 { 1.0 / raw } else { 0.0 };
                for ((gi, ui), ti) in g.iter_mut().zip(u.iter()).zip(t) {
                    *gi = (ui - ti) * inv;
                }
            }
            Similarity::L1 => {
                for ((gi, ui), ti) in g.iter_mut().zip(u.iter()).zip(t) {
                    let d = ui - ti;
                    *gi = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            Similarity::Cos => {
                for (gi, ti) in g.iter_mut().zip(t) {
                    *gi = -ti;
                }
            }
        }

        {
            let gt = grads.entity_row_mut(tail);
            if config.similarity == Similarity::Cos {
                for (d, ui) in gt.iter_mut().zip(u.iter()) {
                    *d -= c * ui;
                }
            } else {
                for (d, gi) in gt.iter_mut().zip(g.iter()) {
                    *d -= c * gi;
                }
            }
        }

        let p = self.kind.rep_dim();
        let q = self.kind.param_count();
        let linear = self.kind != GroupKind::Translation;
        {
            let gh = grads.entity_row_mut(head);
            for (b, m) in self.action.blocks().iter().enumerate() {
                let gb = &g[b * p..(b + 1) * p];
                let out = &mut gh[b * p..(b + 1) * p];
                if linear {
                    let mut pulled = [0.0; 4];
                    m.apply_transpose_unchecked(gb, &mut pulled[..p]);
                    axpy(out, &pulled[..p], c);
                } else {
                    axpy(out, gb, c);
                }
            }
        }
        {
            let gr = grads.relation_row_mut(self.rel);
            for (b, dm) in self.derivs.iter().enumerate() {
                let gb = &g[b * p..(b + 1) * p];
                let hb = &h[b * p..(b + 1) * p];
                for k in 0..q {
                    let v = if linear {
                        let e = dm[k].entries();
                        (0..p)
                            .map(|i| gb[i] * (0..p).map(|j| e[i * p + j] * hb[j]).sum::<f64>())
                            .sum()
                    } else {
                        gb[0]
                    };
                    gr[b * q + k] += c * v;
                }
            }
        }
        Ok(config.energy_of(raw))
    }
}

/// Loss of one positive and, if `grads` is given, its gradient (unscaled).
fn positive_loss(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    batch: &NegativeBatch,
    params: &LossParams,
    grads: Option<&mut GradientBuffer>,
) -> Result<f64> {
    let jet = RelationJet::new(tables, batch.positive.relation)?;
    let d = tables.entity_dim();
    let (mut u, mut g) = (vec![0.0; d], vec![0.0; d]);
    let mut scratch = GradientBuffer::new(0, 0);
    let margin = config.margin;

    let pos = batch.positive;
    let s_pos = jet.energy_and_grad(config, tables, pos.head, pos.tail, &mut u, &mut g, None, &mut scratch)?;
    let scores = batch
        .negatives
        .iter()
        .map(|n| {
            if n.relation != pos.relation {
                return Err(Error::InvalidParameter("negative changes the relation".into()));
            }
            jet.energy_and_grad(config, tables, n.head, n.tail, &mut u, &mut g, None, &mut scratch)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = adversarial_weights(&scores, params.temperature);
    let loss = triple_loss(s_pos, &scores, &weights, margin);

    if let Some(grads) = grads {
        let c_pos = sigmoid(s_pos - margin);
        jet.energy_and_grad(config, tables, pos.head, pos.tail, &mut u, &mut g, Some(c_pos), grads)?;
        for ((n, s), w) in batch.negatives.iter().zip(&scores).zip(&weights) {
            let c = -w * sigmoid(margin - s);
            jet.energy_and_grad(config, tables, n.head, n.tail, &mut u, &mut g, Some(c), grads)?;
        }
    }
    Ok(loss)
}

/// Mean loss of a batch without gradients.
pub fn batch_loss(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    batch: &[NegativeBatch],
    params: &LossParams,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut total = 0.0;
    for b in batch {
        total += positive_loss(config, tables, b, params, None)?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss of a batch and its gradient with respect to every touched
/// entity row and relation row. Each positive's contribution is computed in a
/// private buffer and merged in batch order with weight `1 / batch.len()`.
pub fn loss_and_gradients(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    batch: &[NegativeBatch],
    params: &LossParams,
) -> Result<(f64, GradientBuffer)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = GradientBuffer::for_tables(tables);
    let mut loss = 0.0;
    for b in batch {
        let mut local = GradientBuffer::for_tables(tables);
        loss += positive_loss(config, tables, b, params, Some(&mut local))?;
        total.add_scaled(&local, scale);
    }
    Ok((loss * scale, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_tables;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_examples() {
        assert_eq!(adversarial_weights(&[3.0, 3.0], 1.0), [0.5, 0.5]);
        let w = adversarial_weights(&[1.0, 5.0, -2.0], 0.0);
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        // scores (γ − 1, γ) with α = 1 → (e/(e+1), 1/(e+1))
        let g = 12.0;
        let w = adversarial_weights(&[g - 1.0, g], 1.0);
        let e = core::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((w[0] - 0.7311).abs() < 1e-4 && (w[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn weights_are_stable_for_huge_scores() {
        let w = adversarial_weights(&[1e6, 1e6 + 1.0, -1e6], 2.0);
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let g = 6.0;
        let l = triple_loss(g, &[g], &[1.0], g);
        assert!((l - 2.0 * core::f64::consts::LN_2).abs() < 1e-15);
        assert!((l - 1.3863).abs() < 1e-4);
        let l = triple_loss(g - 2.0, &[g + 2.0], &[1.0], g);
        let expected = 2.0 * libm::log1p(libm::exp(-2.0));
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.2539).abs() < 1e-4);
        let l = triple_loss(-1e4, &[1e4], &[1.0], g);
        assert!(l >= 0.0 && l < 1e-300);
    }

    #[test]
    fn sampling_with_two_entities_always_picks_the_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Triple::new(0, 0, 1);
        let b = sample_negatives(&mut rng, t, 200, 2).unwrap();
        for (n, head) in b.negatives.iter().zip(&b.head_corrupted) {
            if *head {
                assert_eq!((n.head, n.tail), (1, 1));
            } else {
                assert_eq!((n.head, n.tail), (0, 0));
            }
        }
        assert!(sample_negatives(&mut rng, t, 1, 1).is_err());
    }

    #[test]
    fn head_corruption_rate_is_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Triple::new(3, 1, 7);
        let b = sample_negatives(&mut rng, t, 100_000, 10).unwrap();
        let rate = b.head_corrupted.iter().filter(|h| **h).count() as f64 / 1e5;
        assert!((rate - 0.5).abs() < 0.01, "{rate}");
        for (n, head) in b.negatives.iter().zip(&b.head_corrupted) {
            if *head {
                assert_ne!(n.head, t.head);
                assert_eq!(n.tail, t.tail);
            } else {
                assert_ne!(n.tail, t.tail);
                assert_eq!(n.head, t.head);
            }
            assert_eq!(n.relation, t.relation);
        }
    }

    #[test]
    fn saturated_batch_has_vanishing_gradient() {
        // positive far inside the margin, negatives far outside
        let mut cfg = ModelConfig::new(GroupKind::Translation, 1);
        cfg.margin = 30.0;
        let tables =
            EmbeddingTables::from_parts(GroupKind::Translation, 1, 3, 1, vec![0.0, 0.0, 100.0], vec![0.0])
                .unwrap();
        let batch = NegativeBatch {
            positive: Triple::new(0, 0, 1),
            negatives: vec![Triple::new(0, 0, 2), Triple::new(2, 0, 1)],
            head_corrupted: vec![false, true],
            scores: vec![],
            weights: vec![],
        };
        let params = LossParams {
            temperature: 1.0,
            n_neg: 2,
        };
        let (loss, grads) = loss_and_gradients(&cfg, &tables, &[batch], &params).unwrap();
        assert!(loss < 1e-12);
        assert!(grads.norm() < 1e-6);
    }

    #[test]
    fn duplicated_positive_gives_identical_mean_gradient() {
        let cfg = ModelConfig::new(GroupKind::So3, 2);
        let tables = init_tables(&cfg, 6, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = sample_negatives(&mut rng, Triple::new(1, 1, 4), 4, 6).unwrap();
        let params = LossParams {
            temperature: 0.5,
            n_neg: 4,
        };
        let (l1, g1) = loss_and_gradients(&cfg, &tables, &[b.clone()], &params).unwrap();
        let (l2, g2) = loss_and_gradients(&cfg, &tables, &[b.clone(), b], &params).unwrap();
        assert_eq!(l1, l2);
        // the sum over the batch is exactly twice the single contribution
        assert_eq!(g1, g2);
    }

    #[test]
    fn score_negatives_fills_weights() {
        let cfg = ModelConfig::new(GroupKind::U1, 2);
        let tables = init_tables(&cfg, 5, 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut b = sample_negatives(&mut rng, Triple::new(0, 0, 1), 6, 5).unwrap();
        score_negatives(&cfg, &tables, &mut b, 1.0).unwrap();
        assert_eq!(b.scores.len(), 6);
        assert!((b.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
