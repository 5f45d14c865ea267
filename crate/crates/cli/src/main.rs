use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use centrobind::evalsuite::{evaluate, export_embeddings};
use centrobind::experiment::{
    self, bind, derived_seed, load_encoders, make_dataset, pretrained_backbones, random_backbones,
    run_experiment, save_encoders, streams, summarize, Backbone, ExperimentConfig, Method,
};
use centrobind::synthgen::MultiModalDataset;
use centrobind::theory;
use centrobind::Error;

/// Exit code for failed theory checks.
const EXIT_PROPERTY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "centrobind", version, about = "Multimodal binding experiments on synthetic data")]
struct Cli {
    /// Experiment configuration (TOML). Defaults to the built-in M=4 grid.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for single-cell commands; defaults to the first configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for grid runs; overrides the configuration.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    GenData,
    /// Pretrain one backbone per modality with augmentation-pair InfoNCE.
    Pretrain {
        /// Existing dataset directory; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Bind backbones with one method.
    Bind {
        /// none | fabind:<i> | centrobind | wavg:<w,..> | random | random-intra | median
        #[arg(long)]
        method: String,
        /// `random`, `pretrained`, or a directory of encoder checkpoints.
        #[arg(long, default_value = "pretrained")]
        backbone: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Probe and retrieval evaluation of trained encoders.
    Eval {
        /// Directory holding encoder_<i>.cbm checkpoints.
        #[arg(long)]
        encoders: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Label stored in the report.
        #[arg(long, default_value = "custom")]
        method: String,
        #[arg(long, default_value = "custom")]
        backbone: String,
        /// Also write all embeddings as CSV to this path.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Numerical bound and information checks; exits 3 if any check fails.
    TheoryCheck,
    /// Aggregate the reports of a run directory.
    Summarize,
    /// Run the full seed × backbone × method grid of the configuration.
    Run,
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml(experiment::DEFAULT_CONFIG)?,
    };
    if let Some(t) = cli.threads {
        cfg.run.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset(ctx: &Ctx, data: Option<&Path>) -> Result<MultiModalDataset> {
    Ok(match data {
        Some(d) => MultiModalDataset::load(d).with_context(|| format!("loading dataset {}", d.display()))?,
        None => make_dataset(&ctx.cfg, ctx.seed)?,
    })
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = load_config(&cli)?;
    let seed = cli.seed.unwrap_or(cfg.run.seeds[0]);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs/default"));
    let ctx = Ctx { cfg, seed, out };
    match cli.command {
        Command::GenData => {
            let ds = make_dataset(&ctx.cfg, ctx.seed)?;
            ds.save(&ctx.out)?;
            println!("wrote {} pairs × {} modalities to {}", ds.len(), ds.modality_count(), ctx.out.display());
        }
        Command::Pretrain { data } => {
            let ds = dataset(&ctx, data.as_deref())?;
            let init = random_backbones(&ds, ctx.seed)?;
            let (set, curves) = pretrained_backbones(&ctx.cfg, &ds, &init, ctx.seed)?;
            save_encoders(&set, &ctx.out)?;
            let mut csv = String::from("epoch,modality,loss\n");
            for (i, c) in curves.iter().enumerate() {
                for (e, l) in c.iter().enumerate() {
                    csv.push_str(&format!("{},{},{}\n", e + 1, i + 1, l));
                }
            }
            std::fs::write(ctx.out.join("pretrain_loss.csv"), csv)?;
            println!("wrote {} pretrained encoders to {}", set.len(), ctx.out.display());
        }
        Command::Bind { method, backbone, data } => {
            let ds = dataset(&ctx, data.as_deref())?;
            let method: Method = method.parse()?;
            method.validate(ds.modality_count())?;
            let init = match backbone.parse::<Backbone>() {
                Ok(Backbone::Random) => random_backbones(&ds, ctx.seed)?,
                Ok(Backbone::Pretrained) => {
                    pretrained_backbones(&ctx.cfg, &ds, &random_backbones(&ds, ctx.seed)?, ctx.seed)?.0
                }
                Err(_) => load_encoders(Path::new(&backbone), ds.modality_count())?,
            };
            let bind_cfg = ctx.cfg.bind_config(derived_seed(ctx.seed, streams::BIND))?;
            let (set, trace) = bind(&method, &ds, &init, &bind_cfg)?;
            save_encoders(&set, &ctx.out)?;
            if let Some(t) = trace {
                std::fs::write(ctx.out.join("trace.csv"), t.to_csv())?;
                println!(
                    "{method}: {} epochs in {:.1}s, final mean loss {:.4}",
                    t.epochs(),
                    t.wall_clock_secs,
                    t.mean_losses().last().copied().unwrap_or(f64::NAN)
                );
            }
            println!("wrote encoders to {}", ctx.out.display());
        }
        Command::Eval {
            encoders,
            data,
            method,
            backbone,
            export,
        } => {
            let ds = dataset(&ctx, data.as_deref())?;
            let set = load_encoders(&encoders, ds.modality_count())?;
            let report = evaluate(&set, &ds, &method, &backbone, &ctx.cfg.eval_config(ctx.seed))?;
            std::fs::create_dir_all(&ctx.out)?;
            std::fs::write(ctx.out.join("report.json"), report.to_json()?)?;
            std::fs::write(ctx.out.join("report.csv"), report.to_csv())?;
            if let Some(p) = export {
                export_embeddings(&set, &ds, &p)?;
            }
            for (i, a) in report.modality_accuracy.iter().enumerate() {
                println!("acc(Z_{}) = {a:.4}", i + 1);
            }
            println!("acc(All) = {:.4}", report.fused_accuracy);
        }
        Command::TheoryCheck => {
            let rows = theory::all_checks()?;
            std::fs::create_dir_all(&ctx.out)?;
            let path = ctx.out.join("theory.csv");
            std::fs::write(&path, theory::checks_to_csv(&rows))?;
            let mut failed = false;
            for check in ["bound", "reverse_holder", "prop1", "prop2"] {
                let of: Vec<_> = rows.iter().filter(|r| r.check == check).collect();
                let bad = of.iter().filter(|r| !r.pass).count();
                failed |= bad > 0;
                let worst = of.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
                println!(
                    "{check:15} {:>5} instances  {:>4} failed  min slack {worst:.3e}",
                    of.len(),
                    bad
                );
            }
            println!("wrote {}", path.display());
            if failed {
                return Ok(EXIT_PROPERTY);
            }
        }
        Command::Summarize => {
            let s = summarize(&ctx.out)?;
            print!("{}", s.to_table());
        }
        Command::Run => {
            let outcome = run_experiment(&ctx.cfg, &ctx.out)?;
            let fresh = outcome.cells.iter().filter(|c| !c.reused).count();
            println!(
                "{} cells ({} computed, {} reused) in {:.1}s",
                outcome.cells.len(),
                fresh,
                outcome.cells.len() - fresh,
                outcome.seconds
            );
            print!("{}", summarize(&ctx.out)?.to_table());
        }
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Numeric(_)) | Some(Error::Diverged { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

