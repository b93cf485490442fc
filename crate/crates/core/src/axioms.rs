//! Randomized check of the group axioms for a [`GroupKind`]: closure,
//! identity, inverse, associativity, compatibility of the action with
//! composition, and a commutativity classification.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::group::{build_block, identity_params, sample_params, BlockMatrix, GroupKind, MAX_PARAMS};

/// Tolerance for every equality in the suite.
pub const AXIOM_TOL: f64 = 1e-9;
/// A sampled commutator above this witnesses a non-Abelian group.
pub const NON_ABELIAN_WITNESS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Commutativity {
    Abelian,
    NonAbelian,
    /// Commutators neither vanish nor exceed the witness threshold.
    Inconclusive,
}

impl core::fmt::Display for Commutativity {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Commutativity::Abelian => "Abelian",
            Commutativity::NonAbelian => "non-Abelian",
            Commutativity::Inconclusive => "inconclusive",
        })
    }
}

/// One violated property with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomFailure {
    pub property: &'static str,
    pub params: Vec<Vec<f64>>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub kind: GroupKind,
    pub samples: usize,
    pub max_identity_error: f64,
    pub max_inverse_error: f64,
    pub max_associativity_error: f64,
    pub max_action_error: f64,
    pub max_commutator: f64,
    pub commutativity: Commutativity,
    pub failures: Vec<AxiomFailure>,
}

impl AxiomReport {
    /// All axioms held and the commutativity label matches the group.
    pub fn passed(&self) -> bool {
        let expected = if self.kind.is_abelian() {
            Commutativity::Abelian
        } else {
            Commutativity::NonAbelian
        };
        self.failures.is_empty() && self.commutativity == expected
    }
}

/// Runs the suite on `samples` random triples `(a, b, c)` of elements.
pub fn check_group_axioms(kind: GroupKind, samples: usize, seed: u64) -> AxiomReport {
    check_group_axioms_with(kind, samples, seed, |p| build_block(kind, p))
}

/// Same as [`check_group_axioms`] with a caller-supplied element builder,
/// which lets tests inject a faulty parametrization.
pub fn check_group_axioms_with<F>(kind: GroupKind, samples: usize, seed: u64, build: F) -> AxiomReport
where
    F: Fn(&[f64]) -> Result<BlockMatrix>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = kind.param_count();
    let p = kind.rep_dim();
    let identity = BlockMatrix::identity(kind);

    let mut report = AxiomReport {
        kind,
        samples,
        max_identity_error: 0.0,
        max_inverse_error: 0.0,
        max_associativity_error: 0.0,
        max_action_error: 0.0,
        max_commutator: 0.0,
        commutativity: Commutativity::Inconclusive,
        failures: Vec::new(),
    };
    let fail = |report: &mut AxiomReport, property, params: &[[f64; MAX_PARAMS]; 3], detail| {
        // keep the first few; the rest add nothing to the diagnosis
        if report.failures.len() < 16 {
            report.failures.push(AxiomFailure {
                property,
                params: params.iter().map(|x| x[..q].to_vec()).collect(),
                detail,
            });
        }
    };

    let id_params = identity_params(kind);
    match build(&id_params[..q]) {
        Ok(m) => {
            let e = m.max_abs_diff(&identity);
            if !(e <= AXIOM_TOL) {
                fail(&mut report, "identity parameters", &[id_params; 3], format!("error {e:e}"));
            }
        }
        Err(e) => fail(&mut report, "identity parameters", &[id_params; 3], format!("builder rejected them: {e}")),
    }

    for _ in 0..samples {
        let mut params = [[0.0; MAX_PARAMS]; 3];
        for ps in params.iter_mut() {
            sample_params(kind, 1.0, &mut rng, ps);
        }
        let mut x = [0.0; 4];
        for v in x.iter_mut().take(p) {
            *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        }
        let x = &x[..p];

        let built: Result<Vec<BlockMatrix>> = params.iter().map(|ps| build(&ps[..q])).collect();
        let [a, b, c] = match built.as_deref() {
            Ok([a, b, c]) => [*a, *b, *c],
            _ => {
                fail(&mut report, "construction", &params, String::from("builder rejected parameters"));
                continue;
            }
        };

        for (label, m) in [("a", &a), ("a·b", &a.compose(&b).unwrap())] {
            if let Err(e) = m.check_invariants(AXIOM_TOL) {
                fail(&mut report, "closure", &params, format!("{label}: {e}"));
            }
        }

        let e_id = a
            .compose(&identity)
            .unwrap()
            .max_abs_diff(&a)
            .max(identity.compose(&a).unwrap().max_abs_diff(&a));
        report.max_identity_error = report.max_identity_error.max(e_id);
        if !(e_id <= AXIOM_TOL) {
            fail(&mut report, "identity", &params, format!("error {e_id:e}"));
        }

        let inv = a.inverse();
        let e_inv = a
            .compose(&inv)
            .unwrap()
            .max_abs_diff(&identity)
            .max(inv.compose(&a).unwrap().max_abs_diff(&identity));
        report.max_inverse_error = report.max_inverse_error.max(e_inv);
        if !(e_inv <= AXIOM_TOL) {
            fail(&mut report, "inverse", &params, format!("error {e_inv:e}"));
        }

        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        let e_assoc = left.max_abs_diff(&right);
        report.max_associativity_error = report.max_associativity_error.max(e_assoc);
        if !(e_assoc <= AXIOM_TOL) {
            fail(&mut report, "associativity", &params, format!("error {e_assoc:e}"));
        }

        let ab = a.compose(&b).unwrap();
        let direct = ab.apply(x).unwrap();
        let staged = a.apply(&b.apply(x).unwrap()).unwrap();
        let e_act = direct
            .iter()
            .zip(&staged)
            .fold(0.0, |acc: f64, (u, v)| acc.max((u - v).abs()));
        report.max_action_error = report.max_action_error.max(e_act);
        if !(e_act <= AXIOM_TOL) {
            fail(&mut report, "action", &params, format!("error {e_act:e}"));
        }

        let comm = a.commutator_norm(&b).unwrap();
        if comm.is_finite() {
            report.max_commutator = report.max_commutator.max(comm);
        }
    }

    report.commutativity = if report.max_commutator > NON_ABELIAN_WITNESS {
        Commutativity::NonAbelian
    } else if report.max_commutator < AXIOM_TOL {
        Commutativity::Abelian
    } else {
        Commutativity::Inconclusive
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_passes_and_is_classified() {
        for kind in GroupKind::ALL {
            let r = check_group_axioms(kind, 300, 1);
            assert!(r.passed(), "{kind}: {r:?}");
            let expected = if kind.is_abelian() {
                Commutativity::Abelian
            } else {
                Commutativity::NonAbelian
            };
            assert_eq!(r.commutativity, expected);
        }
    }

    #[test]
    fn injected_fault_is_reported() {
        let kind = GroupKind::So3;
        let r = check_group_axioms_with(kind, 50, 3, |p| {
            let m = build_block(kind, p)?;
            let scaled: Vec<f64> = m.entries().iter().map(|v| v * 1.01).collect();
            BlockMatrix::from_entries(kind, &scaled)
        });
        assert!(!r.passed());
        assert_eq!(r.failures[0].property, "identity parameters");
        let f = r.failures.iter().find(|f| f.property == "closure").unwrap();
        assert_eq!(f.params.len(), 3);
        assert_eq!(f.params[0].len(), 3);
    }

    #[test]
    fn scaled_parametrization_fails_for_every_kind() {
        for kind in GroupKind::ALL {
            let r = check_group_axioms_with(kind, 5, 0, |p| {
                let m = build_block(kind, p)?;
                let shift = if kind == GroupKind::Translation { 0.01 } else { 0.0 };
                let e: Vec<f64> = m.entries().iter().map(|v| v * 1.01 + shift).collect();
                BlockMatrix::from_entries(kind, &e)
            });
            assert!(!r.passed(), "{kind}");
        }
    }
}
