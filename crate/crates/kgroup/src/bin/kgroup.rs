use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kgroup::config::{parse_override_args, RunConfig};
use kgroup::kgroup_core::group::GroupKind;
use kgroup::kgroup_core::model::Similarity;
use kgroup::kgroup_core::store::Split;
use kgroup::kgroup_core::synthetic::{SyntheticGroup, SyntheticSpec};
use kgroup::runner;
use kgroup::Error;

#[derive(Parser)]
#[command(name = "kgroup", version, about = "Group-element knowledge-graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; any config key can be overridden with `--key value`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Filtered link-prediction metrics on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Defaults to the group kind's usual similarity.
        #[arg(long)]
        similarity: Option<Similarity>,
    },
    /// Most plausible tails for a (head, relation) pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        head: String,
        #[arg(long)]
        rel: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        /// Skip tails already known for the pair.
        #[arg(long)]
        filter: bool,
        #[arg(long)]
        similarity: Option<Similarity>,
    },
    /// Write a synthetic dataset with group-structured relations.
    Synth {
        /// c<k> (cyclic group of order k) or s3.
        #[arg(long)]
        spec: SyntheticGroup,
        #[arg(long)]
        entities: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the group axioms of a parametrization on random draws.
    Check {
        #[arg(long)]
        group: GroupKind,
        #[arg(short = 'n', default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Train { config, overrides } => {
            let pairs = parse_override_args(&overrides)?;
            let cfg = RunConfig::resolve(config.as_deref(), &pairs)?;
            let summary = runner::train(&cfg)?;
            println!("steps={} stop={:?}", summary.steps, summary.stop);
            if let Some(best) = summary.best {
                println!("best {best}");
            }
            println!("checkpoint={}", cfg.checkpoint.display());
            println!("log={}", cfg.log.display());
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            similarity,
        } => {
            let loaded = runner::load_model(&checkpoint, &data, similarity)?;
            let report = runner::evaluate(&loaded.model, &loaded.tables, &loaded.store, split)?;
            print!("{}", runner::format_report(&report, split));
        }
        Command::Predict {
            checkpoint,
            data,
            head,
            rel,
            k,
            filter,
            similarity,
        } => {
            let loaded = runner::load_model(&checkpoint, &data, similarity)?;
            for (i, p) in runner::predict(&loaded, &head, &rel, k, filter)?.iter().enumerate() {
                println!("{}\t{}\t{:.6}", i + 1, p.entity, p.plausibility);
            }
        }
        Command::Synth {
            spec,
            entities,
            out,
            seed,
        } => {
            let data = runner::synth(&SyntheticSpec::new(spec, entities), seed, &out)?;
            let s = &data.store;
            println!(
                "entities={} relations={} train={} valid={} test={} out={}",
                s.n_entities(),
                s.n_relations(),
                s.train().len(),
                s.valid().len(),
                s.test().len(),
                out.display()
            );
        }
        Command::Check {
            group,
            samples,
            seed,
            inject_fault,
        } => {
            let report = runner::check(group, samples, seed, inject_fault);
            print!("{}", runner::format_axiom_report(&report));
            if !report.passed() {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
