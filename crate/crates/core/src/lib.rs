//! Knowledge-graph embeddings where every relation is an element of a
//! continuous group and every entity lives in a representation space of
//! that group.
//!
//! Relations are stored as `n_blocks` copies of a small group parametrization
//! (translations, phases, real or complex scalings, Euler-angle rotations or
//! SU(2) axis-angle elements). A relation acts on an entity vector through the
//! block-diagonal matrix built from those parameters, and a triple is scored by
//! comparing the transformed head with the tail.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the training
//! runner with checkpoints and the command-line front end live in the `kgroup`
//! companion crate.
#![no_std]

extern crate alloc;

pub mod axioms;
pub mod error;
pub mod eval;
pub mod group;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod store;
pub mod synthetic;
pub mod train;

mod math;

pub use error::{Error, Result};
pub use group::{BlockMatrix, GroupKind};
pub use model::{EmbeddingTables, ModelConfig, Similarity};
pub use store::{Split, Triple, TripleStore};
