//! Embedding tables and triple scoring.
//!
//! A relation with parameters `v_r` acts on an entity vector `v_e` through the
//! block-diagonal matrix `R_r` whose `i`-th block is built from the `i`-th
//! group of `q` parameters and acts on the `i`-th group of `p` components.
//!
//! Two similarity families are supported. Distance similarities (`L1`, `L2`)
//! score `‖R_r v_h − v_t‖_p`, lower meaning more plausible. The `Cos`
//! similarity scores the trilinear product `⟨R_r v_h, v_t⟩`, which for complex
//! components equals `Σ re(r_i h_i conj(t_i))`; higher is more plausible.
//! Ranking and the loss both use the *energy*, which is the distance or the
//! negated similarity, so that lower is always more plausible.

use core::fmt;
use core::str::FromStr;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{build_block, BlockMatrix, GroupKind, MAX_PARAMS};
use crate::math::{abs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    L1,
    L2,
    Cos,
}

impl Similarity {
    /// `L2` for the distance-based groups, `Cos` for the scalings.
    pub fn default_for(kind: GroupKind) -> Self {
        match kind {
            GroupKind::Gl1R | GroupKind::Gl1C => Similarity::Cos,
            _ => Similarity::L2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Similarity::L1 => "l1",
            Similarity::L2 => "l2",
            Similarity::Cos => "cos",
        }
    }

    pub fn is_distance(self) -> bool {
        self != Similarity::Cos
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(Similarity::L1),
            "l2" => Ok(Similarity::L2),
            "cos" => Ok(Similarity::Cos),
            other => Err(Error::Config(format!(
                "unknown similarity `{other}` (expected l1, l2 or cos)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: GroupKind,
    /// Number of copies of the block representation.
    pub n_blocks: usize,
    pub similarity: Similarity,
    /// Margin `γ` of the loss; also sets the initialization scale.
    pub margin: f64,
}

impl ModelConfig {
    pub fn new(kind: GroupKind, n_blocks: usize) -> Self {
        Self {
            kind,
            n_blocks,
            similarity: Similarity::default_for(kind),
            margin: 12.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be positive".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Config(format!(
                "margin must be finite and non-negative, got {}",
                self.margin
            )));
        }
        if self.similarity == Similarity::Cos
            && !matches!(self.kind, GroupKind::Gl1R | GroupKind::Gl1C)
        {
            return Err(Error::Config(format!(
                "cos similarity is only defined for gl1r and gl1c, not {}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Real components per entity (`n_blocks · p`).
    pub fn entity_dim(&self) -> usize {
        self.n_blocks * self.kind.rep_dim()
    }

    /// Real parameters per relation (`n_blocks · q`).
    pub fn relation_dim(&self) -> usize {
        self.n_blocks * self.kind.param_count()
    }

    /// Converts a raw score into an energy (lower = more plausible).
    #[inline]
    pub fn energy_of(&self, raw: f64) -> f64 {
        if self.similarity.is_distance() {
            raw
        } else {
            -raw
        }
    }
}

/// Entity and relation parameters, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTables {
    kind: GroupKind,
    n_blocks: usize,
    n_entities: usize,
    n_relations: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingTables {
    /// Assembles tables from flat row-major arrays, validating every
    /// relation block.
    pub fn from_parts(
        kind: GroupKind,
        n_blocks: usize,
        n_entities: usize,
        n_relations: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        if n_blocks == 0 || n_entities == 0 || n_relations == 0 {
            return Err(Error::Config(format!(
                "tables need positive sizes (n_blocks={n_blocks}, entities={n_entities}, relations={n_relations})"
            )));
        }
        let (p, q) = (kind.rep_dim(), kind.param_count());
        if entities.len() != n_entities * n_blocks * p {
            return Err(Error::Shape {
                expected: n_entities * n_blocks * p,
                actual: entities.len(),
            });
        }
        if relations.len() != n_relations * n_blocks * q {
            return Err(Error::Shape {
                expected: n_relations * n_blocks * q,
                actual: relations.len(),
            });
        }
        if entities.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entity component".into()));
        }
        for block in relations.chunks_exact(q) {
            build_block(kind, block)?;
        }
        Ok(Self {
            kind,
            n_blocks,
            n_entities,
            n_relations,
            entities,
            relations,
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn entity_dim(&self) -> usize {
        self.n_blocks * self.kind.rep_dim()
    }

    pub fn relation_dim(&self) -> usize {
        self.n_blocks * self.kind.param_count()
    }

    pub fn entity_data(&self) -> &[f64] {
        &self.entities
    }

    pub fn relation_data(&self) -> &[f64] {
        &self.relations
    }

    pub fn entity(&self, id: usize) -> Result<&[f64]> {
        check_id("entity", id, self.n_entities)?;
        let d = self.entity_dim();
        Ok(&self.entities[id * d..(id + 1) * d])
    }

    pub fn relation(&self, id: usize) -> Result<&[f64]> {
        check_id("relation", id, self.n_relations)?;
        let d = self.relation_dim();
        Ok(&self.relations[id * d..(id + 1) * d])
    }

    /// Mutable entity row. Callers must keep components finite.
    pub fn entity_mut(&mut self, id: usize) -> Result<&mut [f64]> {
        check_id("entity", id, self.n_entities)?;
        let d = self.entity_dim();
        Ok(&mut self.entities[id * d..(id + 1) * d])
    }

    /// Mutable relation row. Callers must keep every block a valid element.
    pub fn relation_mut(&mut self, id: usize) -> Result<&mut [f64]> {
        check_id("relation", id, self.n_relations)?;
        let d = self.relation_dim();
        Ok(&mut self.relations[id * d..(id + 1) * d])
    }

    /// The block-diagonal action of relation `id`.
    pub fn relation_action(&self, id: usize) -> Result<RelationAction> {
        RelationAction::new(self.kind, self.relation(id)?)
    }

    fn check_config(&self, config: &ModelConfig) -> Result<()> {
        if config.kind != self.kind || config.n_blocks != self.n_blocks {
            return Err(Error::Config(format!(
                "model config ({} x{}) does not match tables ({} x{})",
                config.kind, config.n_blocks, self.kind, self.n_blocks
            )));
        }
        Ok(())
    }
}

fn check_id(kind: &'static str, id: usize, size: usize) -> Result<()> {
    if id >= size {
        Err(Error::Lookup { kind, id, size })
    } else {
        Ok(())
    }
}

/// Random tables: entity components uniform in `±γ/√(n_blocks·p)` (`γ`
/// replaced by 1 when the margin is zero) and relation parameters drawn as in
/// [`crate::group::sample_params`] with the same scale for translations.
pub fn init_tables(
    config: &ModelConfig,
    n_entities: usize,
    n_relations: usize,
    seed: u64,
) -> Result<EmbeddingTables> {
    config.validate()?;
    if n_entities == 0 || n_relations == 0 {
        return Err(Error::Config(format!(
            "need at least one entity and one relation (got {n_entities}, {n_relations})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = init_scale(config);
    let entities: Vec<f64> = (0..n_entities * config.entity_dim())
        .map(|_| rng.gen_range(-scale..=scale))
        .collect();
    let q = config.kind.param_count();
    let mut relations = vec![0.0; n_relations * config.relation_dim()];
    let mut buf = [0.0; MAX_PARAMS];
    for block in relations.chunks_exact_mut(q) {
        crate::group::sample_params(config.kind, scale, &mut rng, &mut buf);
        block.copy_from_slice(&buf[..q]);
    }
    EmbeddingTables::from_parts(
        config.kind,
        config.n_blocks,
        n_entities,
        n_relations,
        entities,
        relations,
    )
}

pub(crate) fn init_scale(config: &ModelConfig) -> f64 {
    let gamma = if config.margin > 0.0 { config.margin } else { 1.0 };
    gamma / sqrt(config.entity_dim() as f64)
}

/// The full block-diagonal action of one relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationAction {
    kind: GroupKind,
    blocks: Vec<BlockMatrix>,
}

impl RelationAction {
    pub fn new(kind: GroupKind, params: &[f64]) -> Result<Self> {
        let q = kind.param_count();
        if params.is_empty() || params.len() % q != 0 {
            return Err(Error::Shape {
                expected: q * (params.len() / q).max(1),
                actual: params.len(),
            });
        }
        let blocks = params
            .chunks_exact(q)
            .map(|b| build_block(kind, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, blocks })
    }

    pub fn from_blocks(kind: GroupKind, blocks: Vec<BlockMatrix>) -> Result<Self> {
        if blocks.iter().any(|b| b.kind() != kind) {
            return Err(Error::InvalidParameter("mixed block kinds".into()));
        }
        Ok(Self { kind, blocks })
    }

    pub fn identity(kind: GroupKind, n_blocks: usize) -> Self {
        Self {
            kind,
            blocks: vec![BlockMatrix::identity(kind); n_blocks],
        }
    }

    pub fn blocks(&self) -> &[BlockMatrix] {
        &self.blocks
    }

    /// Block-wise product `self · other`.
    pub fn compose(&self, other: &RelationAction) -> Result<RelationAction> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::Shape {
                expected: self.blocks.len(),
                actual: other.blocks.len(),
            });
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.compose(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: self.kind,
            blocks,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.blocks.len() * self.kind.rep_dim();
        if x.len() != d {
            return Err(Error::Shape {
                expected: d,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; d];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.kind.rep_dim();
        for ((m, xb), ob) in self
            .blocks
            .iter()
            .zip(x.chunks_exact(p))
            .zip(out.chunks_exact_mut(p))
        {
            m.apply_unchecked(xb, ob);
        }
    }
}

/// Raw comparison of a transformed head `u` with a tail `t`.
#[inline]
pub(crate) fn compare(similarity: Similarity, u: &[f64], t: &[f64]) -> f64 {
    match similarity {
        Similarity::L1 => u.iter().zip(t).map(|(a, b)| abs(a - b)).sum(),
        Similarity::L2 => sqrt(u.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum()),
        Similarity::Cos => u.iter().zip(t).map(|(a, b)| a * b).sum(),
    }
}

/// Raw score of `(head, rel, tail)`: the distance for `L1`/`L2`, the
/// trilinear similarity for `Cos`.
pub fn score(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    head: usize,
    rel: usize,
    tail: usize,
) -> Result<f64> {
    tables.check_config(config)?;
    let action = tables.relation_action(rel)?;
    let h = tables.entity(head)?;
    let t = tables.entity(tail)?;
    let mut u = vec![0.0; h.len()];
    action.apply_into(h, &mut u);
    Ok(compare(config.similarity, &u, t))
}

/// Energy of a triple; lower is more plausible.
pub fn energy(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    head: usize,
    rel: usize,
    tail: usize,
) -> Result<f64> {
    score(config, tables, head, rel, tail).map(|s| config.energy_of(s))
}

/// Raw scores of `(head, rel, j)` for every entity `j`, transforming the head
/// once.
pub fn score_batch_all_tails(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    head: usize,
    rel: usize,
) -> Result<Vec<f64>> {
    tables.check_config(config)?;
    let action = tables.relation_action(rel)?;
    let h = tables.entity(head)?;
    let mut u = vec![0.0; h.len()];
    action.apply_into(h, &mut u);
    let d = tables.entity_dim();
    Ok(tables
        .entities
        .chunks_exact(d)
        .map(|t| compare(config.similarity, &u, t))
        .collect())
}

/// Raw scores of `(j, rel, tail)` for every entity `j`.
pub fn score_batch_all_heads(
    config: &ModelConfig,
    tables: &EmbeddingTables,
    rel: usize,
    tail: usize,
) -> Result<Vec<f64>> {
    tables.check_config(config)?;
    let action = tables.relation_action(rel)?;
    let t = tables.entity(tail)?;
    let d = tables.entity_dim();
    let mut u = vec![0.0; d];
    Ok(tables
        .entities
        .chunks_exact(d)
        .map(|h| {
            action.apply_into(h, &mut u);
            compare(config.similarity, &u, t)
        })
        .collect())
}
