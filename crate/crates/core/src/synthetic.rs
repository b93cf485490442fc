//! Synthetic knowledge graphs with planted group structure.
//!
//! Entities are arranged in disjoint orbits, each a copy of the group's
//! regular action: entity `(o, x)` sits at element `x` of orbit `o`. Every
//! selected group element `g` becomes a relation with triples
//! `((o, x), g, (o, g·x))`. Composition and inversion of relations therefore
//! mirror the group: the edge set of `g1·g2` is exactly the path set "first
//! `g2`, then `g1`", and `g⁻¹` reverses the edges of `g`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::store::{Split, Triple, TripleStore, TripleStoreBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticGroup {
    /// The cyclic group `ℤ_k`.
    Cyclic(usize),
    /// The symmetric group on three letters (order 6, non-Abelian).
    S3,
}

impl core::str::FromStr for SyntheticGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "s3" {
            return Ok(SyntheticGroup::S3);
        }
        s.strip_prefix('c')
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(SyntheticGroup::Cyclic)
            .ok_or_else(|| Error::Config(format!("unknown synthetic group `{s}` (expected cK or s3)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub group: SyntheticGroup,
    /// Must be a positive multiple of the group order.
    pub n_entities: usize,
    /// Plant a relation for every group element; otherwise only generators.
    pub closed_under_composition: bool,
    /// With generators only, also plant their inverses.
    pub closed_under_inversion: bool,
}

impl SyntheticSpec {
    pub fn new(group: SyntheticGroup, n_entities: usize) -> Self {
        Self {
            group,
            n_entities,
            closed_under_composition: true,
            closed_under_inversion: true,
        }
    }
}

/// A finite group given by its multiplication table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    order: usize,
    table: Vec<usize>,
    names: Vec<String>,
    generators: Vec<usize>,
}

impl FiniteGroup {
    pub fn cyclic(k: usize) -> Self {
        let table = (0..k * k).map(|i| (i / k + i % k) % k).collect();
        let names = (0..k).map(|g| format!("rot{g}")).collect();
        Self {
            order: k,
            table,
            names,
            generators: alloc::vec![if k > 1 { 1 } else { 0 }],
        }
    }

    /// Permutations of `{0, 1, 2}` in lexicographic order; the product
    /// `a·b` applies `b` first.
    pub fn symmetric3() -> Self {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let find = |p: [usize; 3]| PERMS.iter().position(|q| *q == p).unwrap();
        let mut table = Vec::with_capacity(36);
        for a in PERMS {
            for b in PERMS {
                table.push(find([a[b[0]], a[b[1]], a[b[2]]]));
            }
        }
        let names = PERMS
            .iter()
            .map(|p| format!("perm{}{}{}", p[0], p[1], p[2]))
            .collect();
        Self {
            order: 6,
            table,
            names,
            // a 3-cycle and a transposition
            generators: alloc::vec![3, 1],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a * self.order + b]
    }

    pub fn identity(&self) -> usize {
        (0..self.order)
            .find(|&e| (0..self.order).all(|x| self.mul(e, x) == x))
            .unwrap()
    }

    pub fn inverse(&self, a: usize) -> usize {
        let e = self.identity();
        (0..self.order).find(|&b| self.mul(a, b) == e).unwrap()
    }

    pub fn name(&self, a: usize) -> &str {
        &self.names[a]
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.order).all(|a| (0..self.order).all(|b| self.mul(a, b) == self.mul(b, a)))
    }
}

/// A generated store together with the planted structure.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub store: TripleStore,
    pub group: FiniteGroup,
    /// Group element planted for each relation id.
    pub relation_elements: Vec<usize>,
    pub n_orbits: usize,
}

impl SyntheticDataset {
    /// `(orbit, element)` of an entity id.
    pub fn position(&self, entity: usize) -> (usize, usize) {
        (entity / self.group.order(), entity % self.group.order())
    }

    pub fn entity_at(&self, orbit: usize, element: usize) -> usize {
        orbit * self.group.order() + element
    }

    pub fn relation_of(&self, element: usize) -> Option<usize> {
        self.relation_elements.iter().position(|&g| g == element)
    }

    /// The planted image of `entity` under relation `rel`.
    pub fn apply(&self, rel: usize, entity: usize) -> usize {
        let (o, x) = self.position(entity);
        self.entity_at(o, self.group.mul(self.relation_elements[rel], x))
    }
}

/// Plants the orbit structure and splits triples 80/10/10 at random.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    let group = match spec.group {
        SyntheticGroup::Cyclic(0) => {
            return Err(Error::Config("cyclic group order must be positive".into()))
        }
        SyntheticGroup::Cyclic(k) => FiniteGroup::cyclic(k),
        SyntheticGroup::S3 => FiniteGroup::symmetric3(),
    };
    let order = group.order();
    if spec.n_entities < order || spec.n_entities % order != 0 {
        return Err(Error::Config(format!(
            "n_entities must be a positive multiple of the group order {order}, got {}",
            spec.n_entities
        )));
    }
    let n_orbits = spec.n_entities / order;

    let elements: Vec<usize> = if spec.closed_under_composition {
        (0..order).collect()
    } else {
        let mut els = group.generators().to_vec();
        if spec.closed_under_inversion {
            for g in group.generators() {
                let inv = group.inverse(*g);
                if !els.contains(&inv) {
                    els.push(inv);
                }
            }
        }
        els
    };

    let mut builder = TripleStoreBuilder::new();
    for o in 0..n_orbits {
        for x in 0..order {
            builder.intern_entity(&format!("o{o}_{}", group.name(x)));
        }
    }
    for &g in &elements {
        builder.intern_relation(group.name(g));
    }

    let mut triples = Vec::with_capacity(n_orbits * order * elements.len());
    for o in 0..n_orbits {
        for (r, &g) in elements.iter().enumerate() {
            for x in 0..order {
                triples.push(Triple::new(o * order + x, r, o * order + group.mul(g, x)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    let n = triples.len();
    let n_train = (n * 8 / 10).max(1);
    let n_valid = n / 10;
    for (i, t) in triples.into_iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
        builder.add_ids(split, t);
    }

    Ok(SyntheticDataset {
        store: builder.build()?,
        group,
        relation_elements: elements,
        n_orbits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_triples(s: &TripleStore) -> Vec<Triple> {
        Split::ALL.iter().flat_map(|sp| s.split(*sp).iter().copied()).collect()
    }

    #[test]
    fn s3_table_by_enumeration() {
        let g = FiniteGroup::symmetric3();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for (a, pa) in perms.iter().enumerate() {
            for (b, pb) in perms.iter().enumerate() {
                let composed: [usize; 3] = core::array::from_fn(|i| pa[pb[i]]);
                assert_eq!(perms[g.mul(a, b)], composed);
            }
        }
        assert!(!g.is_abelian());
        assert_eq!(g.identity(), 0);
        assert_eq!(g.inverse(3), 4);
        assert!(FiniteGroup::cyclic(4).is_abelian());
    }

    #[test]
    fn symmetric_relation_in_c2() {
        let d = generate_synthetic(&SyntheticSpec::new(SyntheticGroup::Cyclic(2), 8), 1).unwrap();
        let r = d.relation_of(1).unwrap();
        for t in all_triples(&d.store).iter().filter(|t| t.relation == r) {
            assert_ne!(t.head, t.tail);
            assert!(d.store.is_known(&Triple::new(t.tail, r, t.head)));
        }
    }

    #[test]
    fn identity_relation_is_self_loops() {
        let d = generate_synthetic(&SyntheticSpec::new(SyntheticGroup::S3, 12), 2).unwrap();
        let r = d.relation_of(d.group.identity()).unwrap();
        let loops: Vec<_> = all_triples(&d.store).into_iter().filter(|t| t.relation == r).collect();
        assert_eq!(loops.len(), 12);
        assert!(loops.iter().all(|t| t.head == t.tail));
    }

    #[test]
    fn s3_compositions_differ_by_order() {
        let d = generate_synthetic(&SyntheticSpec::new(SyntheticGroup::S3, 18), 3).unwrap();
        let (a, b) = (3, 1);
        let g = &d.group;
        assert_ne!(g.mul(a, b), g.mul(b, a));
        let edges = |first: usize, second: usize| -> Vec<(usize, usize)> {
            let r1 = d.relation_of(first).unwrap();
            let r2 = d.relation_of(second).unwrap();
            (0..18).map(|e| (e, d.apply(r2, d.apply(r1, e)))).collect()
        };
        assert_ne!(edges(b, a), edges(a, b));
        // the composed path set equals the planted product relation
        let ab = d.relation_of(g.mul(a, b)).unwrap();
        for (e, end) in edges(b, a) {
            assert!(d.store.is_known(&Triple::new(e, ab, end)));
        }
    }

    #[test]
    fn relational_paths_hold_for_every_chain() {
        let d = generate_synthetic(&SyntheticSpec::new(SyntheticGroup::S3, 30), 4).unwrap();
        let g = &d.group;
        for r1 in 0..6 {
            for r2 in 0..6 {
                let r3 = d.relation_of(g.mul(d.relation_elements[r1], d.relation_elements[r2])).unwrap();
                for e1 in 0..30 {
                    let e2 = d.apply(r2, e1);
                    let e3 = d.apply(r1, e2);
                    assert!(d.store.is_known(&Triple::new(e1, r2, e2)));
                    assert!(d.store.is_known(&Triple::new(e2, r1, e3)));
                    assert!(d.store.is_known(&Triple::new(e1, r3, e3)));
                }
            }
        }
    }

    #[test]
    fn splits_and_determinism() {
        let spec = SyntheticSpec::new(SyntheticGroup::Cyclic(4), 40);
        let a = generate_synthetic(&spec, 9).unwrap();
        let b = generate_synthetic(&spec, 9).unwrap();
        let c = generate_synthetic(&spec, 10).unwrap();
        assert_eq!(a.store, b.store);
        assert_ne!(a.store.train(), c.store.train());
        assert_eq!(a.store.train().len(), 128);
        assert_eq!(a.store.valid().len(), 16);
        assert_eq!(a.store.test().len(), 16);
    }

    #[test]
    fn generators_only() {
        let mut spec = SyntheticSpec::new(SyntheticGroup::S3, 6);
        spec.closed_under_composition = false;
        let d = generate_synthetic(&spec, 0).unwrap();
        assert_eq!(d.relation_elements, [3, 1, 4]);
        spec.closed_under_inversion = false;
        let d = generate_synthetic(&spec, 0).unwrap();
        assert_eq!(d.relation_elements, [3, 1]);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_synthetic(&SyntheticSpec::new(SyntheticGroup::S3, 4), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(SyntheticGroup::S3, 13), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(SyntheticGroup::Cyclic(0), 4), 0).is_err());
        assert_eq!("c4".parse::<SyntheticGroup>().unwrap(), SyntheticGroup::Cyclic(4));
        assert!("x3".parse::<SyntheticGroup>().is_err());
    }
}
