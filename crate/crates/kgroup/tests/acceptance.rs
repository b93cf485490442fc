//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! gating criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use kgroup::kgroup_core::axioms::{check_group_axioms, Commutativity};
use kgroup::kgroup_core::eval::{rank_query, Direction, Metrics};
use kgroup::kgroup_core::group::{build_block, sample_params, GroupKind, MAX_PARAMS};
use kgroup::kgroup_core::model::{energy, init_tables, EmbeddingTables, ModelConfig};
use kgroup::kgroup_core::objective::{
    loss_and_gradients, sample_negatives, score_negatives, triple_loss, LossParams, NegativeBatch,
};
use kgroup::kgroup_core::store::{Split, Triple, TripleStore};
use kgroup::kgroup_core::synthetic::{generate_synthetic, SyntheticGroup, SyntheticSpec};
use kgroup::kgroup_core::train::{train, TrainConfig};
use kgroup::runner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for kind in GroupKind::ALL {
        let r = check_group_axioms(kind, 1000, 1);
        if !r.passed() {
            return Err(format!("{kind}: {:?}", r.failures.first()));
        }
        let want = if kind.is_abelian() {
            Commutativity::Abelian
        } else {
            Commutativity::NonAbelian
        };
        if r.commutativity != want {
            return Err(format!("{kind} classified {} (max commutator {:e})", r.commutativity, r.max_commutator));
        }
        notes.push(format!("{kind}={}", r.commutativity));
    }
    let t = start.elapsed();
    if t >= Duration::from_secs(10) {
        return Err(format!("took {t:?}"));
    }
    Ok(format!("{} in {t:.2?}", notes.join(" ")))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 4];
    for kind in [GroupKind::So3, GroupKind::Su2] {
        for _ in 0..10_000 {
            let mut p = [0.0; MAX_PARAMS];
            sample_params(kind, 1.0, &mut rng, &mut p);
            // also exercise angles outside the canonical ranges
            if rng.gen_bool(0.5) {
                p.iter_mut().for_each(|x| *x += rng.gen_range(-20.0..20.0));
            }
            let m = build_block(kind, &p).unwrap();
            let orth = m.orthogonality_error();
            let (re, im) = m.determinant();
            let det = (re - 1.0).abs().max(im.abs());
            let i = if kind == GroupKind::So3 { 0 } else { 2 };
            worst[i] = worst[i].max(orth);
            worst[i + 1] = worst[i + 1].max(det);
            if !(orth < 1e-9 && det < 1e-9) {
                return Err(format!("{kind} params {p:?}: orthogonality {orth:e}, det error {det:e}"));
            }
        }
    }
    Ok(format!(
        "so3 max |MMt-I| {:.1e}, |det-1| {:.1e}; su2 max |UU*-I| {:.1e}, |det-1| {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn frozen_loss(config: &ModelConfig, tables: &EmbeddingTables, batch: &[NegativeBatch]) -> f64 {
    batch
        .iter()
        .map(|b| {
            let p = b.positive;
            let pos = energy(config, tables, p.head, p.relation, p.tail).unwrap();
            let negs: Vec<f64> = b
                .negatives
                .iter()
                .map(|n| energy(config, tables, n.head, n.relation, n.tail).unwrap())
                .collect();
            triple_loss(pos, &negs, &b.weights, config.margin)
        })
        .sum::<f64>()
        / batch.len() as f64
}

fn max_gradient_error(kind: GroupKind, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    let mut config = ModelConfig::new(kind, 2);
    config.margin = if kind.is_isometric() { 2.0 } else { 0.5 };
    let params = LossParams {
        temperature: 1.0,
        n_neg: 4,
    };
    let mut tables = init_tables(&config, 5, 3, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch: Vec<NegativeBatch> = (0..6)
        .map(|i| {
            let t = Triple::new(rng.gen_range(0..5), i % 3, rng.gen_range(0..5));
            sample_negatives(&mut rng, t, params.n_neg, 5).unwrap()
        })
        .collect();
    for b in &mut batch {
        score_negatives(&config, &tables, b, params.temperature).unwrap();
    }
    let (_, grads) = loss_and_gradients(&config, &tables, &batch, &params).unwrap();
    let mut worst: f64 = 0.0;
    let mut record = |analytic: f64, up: f64, down: f64| {
        let numeric = (up - down) / (2.0 * H);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    };
    for e in 0..5 {
        for i in 0..tables.entity_dim() {
            let x = tables.entity(e).unwrap()[i];
            tables.entity_mut(e).unwrap()[i] = x + H;
            let up = frozen_loss(&config, &tables, &batch);
            tables.entity_mut(e).unwrap()[i] = x - H;
            let down = frozen_loss(&config, &tables, &batch);
            tables.entity_mut(e).unwrap()[i] = x;
            record(grads.entity(e).map_or(0.0, |g| g[i]), up, down);
        }
    }
    for r in 0..3 {
        for i in 0..tables.relation_dim() {
            let x = tables.relation(r).unwrap()[i];
            tables.relation_mut(r).unwrap()[i] = x + H;
            let up = frozen_loss(&config, &tables, &batch);
            tables.relation_mut(r).unwrap()[i] = x - H;
            let down = frozen_loss(&config, &tables, &batch);
            tables.relation_mut(r).unwrap()[i] = x;
            record(grads.relation(r).map_or(0.0, |g| g[i]), up, down);
        }
    }
    worst
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    for kind in GroupKind::ALL {
        let worst = (0..5).map(|s| max_gradient_error(kind, s)).fold(0.0, f64::max);
        if !(worst < 1e-4) {
            return Err(format!("{kind}: max relative error {worst:e}"));
        }
        notes.push(format!("{kind}={worst:.1e}"));
    }
    let t = start.elapsed();
    if t >= Duration::from_secs(60) {
        return Err(format!("took {t:?}"));
    }
    Ok(format!("max rel err {} in {t:.2?}", notes.join(" ")))
}

fn brute_rank(energies: &[f64], gold: usize, known: &BTreeSet<usize>) -> f64 {
    let mut kept: Vec<f64> = energies
        .iter()
        .enumerate()
        .filter(|(c, _)| *c == gold || !known.contains(c))
        .map(|(_, e)| *e)
        .collect();
    kept.sort_by(f64::total_cmp);
    let g = energies[gold];
    let first = kept.iter().position(|e| *e == g).unwrap() + 1;
    let last = kept.iter().rposition(|e| *e == g).unwrap() + 1;
    (first + last) as f64 / 2.0
}

fn all_triples(store: &TripleStore) -> Vec<Triple> {
    Split::ALL.iter().flat_map(|s| store.split(*s).iter().copied()).collect()
}

fn criterion_4() -> Outcome {
    let mut queries = 0;
    let mut tied = 0;
    for (spec, n) in [(SyntheticGroup::S3, 48), (SyntheticGroup::Cyclic(4), 48), (SyntheticGroup::Cyclic(2), 10)] {
        let d = generate_synthetic(&SyntheticSpec::new(spec, n), 4).unwrap();
        let store = &d.store;
        let every = all_triples(store);
        for kind in GroupKind::ALL {
            let model = ModelConfig::new(kind, 2);
            let random = init_tables(&model, n, store.n_relations(), 6).unwrap();
            // coarse entity coordinates force many exact ties
            let coarse: Vec<f64> = random.entity_data().iter().map(|v| v.signum()).collect();
            let quantized = EmbeddingTables::from_parts(
                kind,
                2,
                n,
                store.n_relations(),
                coarse,
                random.relation_data().to_vec(),
            )
            .unwrap();
            for tables in [&random, &quantized] {
                for t in store.test().iter().chain(store.valid()) {
                    let tails: Vec<f64> =
                        (0..n).map(|c| energy(&model, tables, t.head, t.relation, c).unwrap()).collect();
                    let known: BTreeSet<usize> = every
                        .iter()
                        .filter(|x| x.head == t.head && x.relation == t.relation)
                        .map(|x| x.tail)
                        .collect();
                    let want = brute_rank(&tails, t.tail, &known);
                    let got = rank_query(&model, tables, store, t, Direction::Tail).unwrap();
                    if got != want {
                        return Err(format!("{kind} tail {t:?}: {got} vs {want}"));
                    }
                    let heads: Vec<f64> =
                        (0..n).map(|c| energy(&model, tables, c, t.relation, t.tail).unwrap()).collect();
                    let known: BTreeSet<usize> = every
                        .iter()
                        .filter(|x| x.tail == t.tail && x.relation == t.relation)
                        .map(|x| x.head)
                        .collect();
                    let want = brute_rank(&heads, t.head, &known);
                    let got = rank_query(&model, tables, store, t, Direction::Head).unwrap();
                    if got != want {
                        return Err(format!("{kind} head {t:?}: {got} vs {want}"));
                    }
                    queries += 2;
                    tied += usize::from(got.fract() != 0.0);
                }
            }
        }
    }
    let m = Metrics::from_ranks(&[1.0, 2.0, 4.0]).unwrap();
    if (m.mrr - 0.583_333_333_333_333_4).abs() > 1e-12 {
        return Err(format!("MRR of ranks 1,2,4 is {}", m.mrr));
    }
    Ok(format!("{queries} queries exact ({tied} with tie-averaged ranks); ranks 1,2,4 give MRR {:.4}", m.mrr))
}

fn toy_config(kind: GroupKind, max_steps: u64) -> TrainConfig {
    let mut model = ModelConfig::new(kind, 4);
    model.margin = 6.0;
    let mut c = TrainConfig::new(model);
    c.batch_size = 64;
    c.loss.n_neg = 32;
    c.lr = 0.01;
    c.max_steps = max_steps;
    c.valid_every = 1000;
    c.valid_mrr = false;
    c
}

fn test_mrr(group: SyntheticGroup, n: usize, kind: GroupKind, steps: u64) -> f64 {
    let d = generate_synthetic(&SyntheticSpec::new(group, n), 0).unwrap();
    let c = toy_config(kind, steps);
    let out = train(c, &d.store).unwrap();
    runner::evaluate(&c.model, &out.tables, &d.store, Split::Test).unwrap().metrics.mrr
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let so3 = test_mrr(SyntheticGroup::S3, 60, GroupKind::So3, 20_000);
    let su2 = test_mrr(SyntheticGroup::S3, 60, GroupKind::Su2, 20_000);
    let t = test_mrr(SyntheticGroup::S3, 60, GroupKind::Translation, 20_000);
    let elapsed = start.elapsed();
    let detail = format!("S3 test MRR: so3 {so3:.4} (>= 0.95), su2 {su2:.4} (>= 0.95), t {t:.4} (<= 0.7) in {elapsed:.1?}");
    if so3 >= 0.95 && su2 >= 0.95 && t <= 0.7 && elapsed < Duration::from_secs(600) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6() -> Outcome {
    let mrr = test_mrr(SyntheticGroup::Cyclic(4), 40, GroupKind::U1, 10_000);
    let detail = format!("C4 test MRR: u1 {mrr:.4} (>= 0.95) after 10000 steps");
    if mrr >= 0.95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_train(dir: &Path, tag: &str, data: &Path) -> (Vec<u8>, Vec<u8>) {
    let ckpt = dir.join(format!("{tag}.ckpt"));
    let log = dir.join(format!("{tag}.log"));
    let status = Command::new(env!("CARGO_BIN_EXE_kgroup"))
        .args(["train", "--data"])
        .arg(data)
        .args(["--group", "so3", "--n-blocks", "3", "--margin", "6", "--lr", "0.01", "--n-neg", "16"])
        .args(["--batch-size", "32", "--max-steps", "600", "--valid-every", "100", "--seed", "42"])
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--log")
        .arg(&log)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    (std::fs::read(ckpt).unwrap(), std::fs::read(log).unwrap())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s3");
    runner::synth(&SyntheticSpec::new(SyntheticGroup::S3, 36), 9, &data).map_err(|e| e.to_string())?;
    let (ca, la) = run_train(dir.path(), "a", &data);
    let (cb, lb) = run_train(dir.path(), "b", &data);
    if ca != cb {
        return Err("checkpoints differ".into());
    }
    if la != lb {
        return Err("logs differ".into());
    }
    Ok(format!("checkpoints ({} bytes) and logs ({} lines) byte-identical", ca.len(), la.split(|b| *b == b'\n').count() - 1))
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 7] = [
        ("1", "group axioms", criterion_1),
        ("2", "parametrization validity", criterion_2),
        ("3", "gradient oracle", criterion_3),
        ("4", "ranking oracle", criterion_4),
        ("5", "hyper-relation separation", criterion_5),
        ("6", "abelian sanity", criterion_6),
        ("8", "determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        match run() {
            Ok(detail) => println!("criterion {id} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL: {detail}");
            }
        }
    }
    println!("criterion 7 (extended benchmark run): SKIP: optional and not gating");
    if failed > 0 {
        println!("{failed} acceptance criterion/criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
