use std::path::Path;

use kgroup::checkpoint::{self, Header};
use kgroup::config::RunConfig;
use kgroup::kgroup_core::eval::evaluate_split;
use kgroup::kgroup_core::group::GroupKind;
use kgroup::kgroup_core::model::{energy, init_tables, EmbeddingTables, ModelConfig};
use kgroup::kgroup_core::store::Split;
use kgroup::kgroup_core::synthetic::{SyntheticGroup, SyntheticSpec};
use kgroup::kgroup_core::train::validation_loss;
use kgroup::{runner, tsv, Error};

fn setup(dir: &Path, group: SyntheticGroup, n: usize) -> RunConfig {
    let data = dir.join("data");
    runner::synth(&SyntheticSpec::new(group, n), 5, &data).unwrap();
    let mut cfg = RunConfig::default();
    cfg.data = Some(data);
    cfg.checkpoint = dir.join("best.ckpt");
    cfg.log = dir.join("train.log");
    cfg.group = GroupKind::U1;
    cfg.n_blocks = 3;
    cfg.margin = 6.0;
    cfg.n_neg = 8;
    cfg.batch_size = 16;
    cfg.lr = 0.01;
    cfg.max_steps = 200;
    cfg.valid_every = 50;
    cfg
}

#[test]
fn resume_with_zero_steps_keeps_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), SyntheticGroup::Cyclic(4), 20);
    runner::train(&cfg).unwrap();
    let saved = checkpoint::load(&cfg.checkpoint).unwrap();

    cfg.resume = Some(dir.path().join("resume.ckpt"));
    std::fs::copy(&cfg.checkpoint, cfg.resume.as_ref().unwrap()).unwrap();
    cfg.checkpoint = dir.path().join("again.ckpt");
    cfg.max_steps = 0;
    let out = runner::train(&cfg).unwrap();
    assert_eq!(out.final_tables, saved);
    assert_eq!(checkpoint::load(&cfg.checkpoint).unwrap(), saved);

    // the first logged validation loss is a plain evaluation of the checkpoint
    let store = tsv::load_dir(cfg.data.as_deref().unwrap()).unwrap();
    let fresh = validation_loss(&cfg.train_config().unwrap(), &store, &saved).unwrap();
    assert_eq!(out.events[0].val_loss, fresh);
}

#[test]
fn resume_rejects_mismatched_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), SyntheticGroup::Cyclic(4), 20);
    cfg.max_steps = 10;
    runner::train(&cfg).unwrap();
    let before = std::fs::read(&cfg.checkpoint).unwrap();
    cfg.resume = Some(cfg.checkpoint.clone());
    cfg.n_blocks = 5;
    let err = runner::train(&cfg).unwrap_err();
    assert!(matches!(err, Error::Incompatible(_)), "{err}");
    assert_eq!(std::fs::read(&cfg.checkpoint).unwrap(), before);
}

#[test]
fn divergence_keeps_the_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), SyntheticGroup::Cyclic(4), 20);
    cfg.group = GroupKind::Translation;
    cfg.max_steps = 20;
    runner::train(&cfg).unwrap();
    let good = std::fs::read(&cfg.checkpoint).unwrap();

    // entity coordinates whose squared distances overflow
    let store = tsv::load_dir(cfg.data.as_deref().unwrap()).unwrap();
    let t = init_tables(&cfg.model_config(), store.n_entities(), store.n_relations(), 0).unwrap();
    let huge: Vec<f64> = t.entity_data().iter().map(|v| v.signum() * 1e300).collect();
    let bad = EmbeddingTables::from_parts(
        t.kind(),
        t.n_blocks(),
        t.n_entities(),
        t.n_relations(),
        huge,
        t.relation_data().to_vec(),
    )
    .unwrap();
    let bad_path = dir.path().join("bad.ckpt");
    checkpoint::save(&bad_path, &bad).unwrap();
    cfg.resume = Some(bad_path);
    let err = runner::train(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
    assert_eq!(std::fs::read(&cfg.checkpoint).unwrap(), good);
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), SyntheticGroup::S3, 12);
    for kind in GroupKind::ALL {
        let model = ModelConfig::new(kind, 2);
        let t = init_tables(&model, 12, 6, 4).unwrap();
        let p = dir.path().join("rt.ckpt");
        checkpoint::save(&p, &t).unwrap();
        let back = checkpoint::load_compatible(&p, &Header::of(&t)).unwrap();
        for h in 0..12 {
            for r in 0..6 {
                for tl in 0..12 {
                    assert_eq!(energy(&model, &t, h, r, tl).unwrap(), energy(&model, &back, h, r, tl).unwrap());
                }
            }
        }
    }
    drop(cfg);
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), SyntheticGroup::S3, 36);
    let store = tsv::load_dir(cfg.data.as_deref().unwrap()).unwrap();
    let model = ModelConfig::new(GroupKind::So3, 2);
    let t = init_tables(&model, store.n_entities(), store.n_relations(), 8).unwrap();
    for split in [Split::Train, Split::Test] {
        let par = runner::evaluate(&model, &t, &store, split).unwrap();
        let seq = evaluate_split(&model, &t, &store, split).unwrap();
        assert_eq!(par, seq);
    }
}

#[test]
fn tsv_round_trip_keeps_id_triples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), SyntheticGroup::S3, 18);
    let a = tsv::load_dir(cfg.data.as_deref().unwrap()).unwrap();
    let out = dir.path().join("copy");
    tsv::write_dir(&a, &out).unwrap();
    let b = tsv::load_dir(&out).unwrap();
    for split in Split::ALL {
        assert_eq!(a.split(split), b.split(split));
    }
    assert_eq!(a.entities(), b.entities());
}
