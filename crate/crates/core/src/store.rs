//! Id-level triple storage with name dictionaries and the filter index used
//! by filtered ranking.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected train, valid or test)"
            ))),
        }
    }
}

/// Bidirectional name <-> dense id map; ids follow first-insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, assigning the next free id if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Immutable collection of train/valid/test triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleStore {
    entities: Dictionary,
    relations: Dictionary,
    splits: [Vec<Triple>; 3],
    tails: BTreeMap<(usize, usize), BTreeSet<usize>>,
    heads: BTreeMap<(usize, usize), BTreeSet<usize>>,
    duplicates: [usize; 3],
}

impl TripleStore {
    pub fn entities(&self) -> &Dictionary {
        &self.entities
    }

    pub fn relations(&self) -> &Dictionary {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        &self.splits[split.index()]
    }

    pub fn train(&self) -> &[Triple] {
        self.split(Split::Train)
    }

    pub fn valid(&self) -> &[Triple] {
        self.split(Split::Valid)
    }

    pub fn test(&self) -> &[Triple] {
        self.split(Split::Test)
    }

    /// Duplicate lines dropped while building `split`.
    pub fn duplicates_dropped(&self, split: Split) -> usize {
        self.duplicates[split.index()]
    }

    /// Whether the triple appears in any split.
    pub fn is_known(&self, t: &Triple) -> bool {
        self.tails
            .get(&(t.head, t.relation))
            .is_some_and(|s| s.contains(&t.tail))
    }

    /// All tails `x` with `(head, relation, x)` in some split.
    pub fn known_tails(&self, head: usize, relation: usize) -> Option<&BTreeSet<usize>> {
        self.tails.get(&(head, relation))
    }

    /// All heads `x` with `(x, relation, tail)` in some split.
    pub fn known_heads(&self, relation: usize, tail: usize) -> Option<&BTreeSet<usize>> {
        self.heads.get(&(relation, tail))
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.name(id)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relations.name(id)
    }
}

/// Accumulates named triples and builds a [`TripleStore`].
#[derive(Debug, Clone, Default)]
pub struct TripleStoreBuilder {
    entities: Dictionary,
    relations: Dictionary,
    splits: [Vec<Triple>; 3],
    seen: [BTreeSet<Triple>; 3],
    duplicates: [usize; 3],
}

impl TripleStoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an entity name ahead of the triples that use it.
    pub fn intern_entity(&mut self, name: &str) -> usize {
        self.entities.intern(name)
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        self.relations.intern(name)
    }

    /// Adds a triple by name. Returns `false` (and counts it) when the triple
    /// is already present in the same split.
    pub fn add(&mut self, split: Split, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entities.intern(head);
        let r = self.relations.intern(relation);
        let t = self.entities.intern(tail);
        self.add_ids(split, Triple::new(h, r, t))
    }

    /// Adds a triple whose ids were obtained from `intern_*`.
    pub fn add_ids(&mut self, split: Split, triple: Triple) -> bool {
        let i = split.index();
        debug_assert!(triple.head < self.entities.len() && triple.tail < self.entities.len());
        debug_assert!(triple.relation < self.relations.len());
        if self.seen[i].insert(triple) {
            self.splits[i].push(triple);
            true
        } else {
            self.duplicates[i] += 1;
            false
        }
    }

    pub fn build(self) -> Result<TripleStore> {
        if self.splits[Split::Train.index()].is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        let mut tails: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        let mut heads: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for t in self.splits.iter().flatten() {
            tails.entry((t.head, t.relation)).or_default().insert(t.tail);
            heads.entry((t.relation, t.tail)).or_default().insert(t.head);
        }
        Ok(TripleStore {
            entities: self.entities,
            relations: self.relations,
            splits: self.splits,
            tails,
            heads,
            duplicates: self.duplicates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_first_seen_ids() {
        let mut b = TripleStoreBuilder::new();
        b.add(Split::Train, "b", "r", "a");
        b.add(Split::Train, "a", "r", "b");
        b.add(Split::Train, "b", "s", "b");
        let s = b.build().unwrap();
        assert_eq!(s.n_entities(), 2);
        assert_eq!(s.entities().id("b"), Some(0));
        assert_eq!(s.entities().id("a"), Some(1));
        assert_eq!(s.relations().id("s"), Some(1));
        assert_eq!(s.train()[1], Triple::new(1, 0, 0));
    }

    #[test]
    fn duplicates_are_counted_per_split() {
        let mut b = TripleStoreBuilder::new();
        assert!(b.add(Split::Train, "a", "r", "b"));
        assert!(!b.add(Split::Train, "a", "r", "b"));
        assert!(b.add(Split::Test, "a", "r", "b"));
        let s = b.build().unwrap();
        assert_eq!(s.train().len(), 1);
        assert_eq!(s.duplicates_dropped(Split::Train), 1);
        assert_eq!(s.duplicates_dropped(Split::Test), 0);
    }

    #[test]
    fn test_only_entity_gets_an_id_and_filter_covers_all_splits() {
        let mut b = TripleStoreBuilder::new();
        b.add(Split::Train, "a", "r", "b");
        b.add(Split::Valid, "a", "r", "c");
        b.add(Split::Test, "d", "r", "b");
        let s = b.build().unwrap();
        assert_eq!(s.entities().id("d"), Some(3));
        let tails: Vec<_> = s.known_tails(0, 0).unwrap().iter().copied().collect();
        assert_eq!(tails, [1, 2]);
        let heads: Vec<_> = s.known_heads(0, 1).unwrap().iter().copied().collect();
        assert_eq!(heads, [0, 3]);
        assert!(s.is_known(&Triple::new(3, 0, 1)));
        assert!(!s.is_known(&Triple::new(1, 0, 3)));
    }

    #[test]
    fn empty_train_is_rejected() {
        let mut b = TripleStoreBuilder::new();
        b.add(Split::Test, "a", "r", "b");
        assert!(matches!(b.build(), Err(Error::Config(_))));
    }
}
