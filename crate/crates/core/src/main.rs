use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fedsched::config::ExperimentConfig;
use fedsched::orchestrator::run_simulation;
use fedsched::selection::SelectionPolicy;

/// Deterministic federated-scheduling simulator.
#[derive(Debug, Parser)]
#[command(name = "fedsched", version, about)]
struct Cli {
    /// Experiment config file (TOML); mutually exclusive with --preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in preset to start from.
    #[arg(long, value_parser = ["paper", "desk"], default_value = "desk")]
    preset: String,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Selection policy override.
    #[arg(long)]
    policy: Option<SelectionPolicy>,

    /// Round count override.
    #[arg(long)]
    rounds: Option<u64>,

    /// Output directory for rewards.csv, participants.csv, selection.csv,
    /// summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for the per-round edge loop (1 = single-threaded,
    /// 0 = one per core). Output is identical either way.
    #[arg(long)]
    threads: Option<usize>,

    /// Also dump the final central parameters, one text snapshot per task.
    #[arg(long)]
    dump_params: bool,

    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn build_config(cli: &Cli) -> fedsched::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match cli.preset.as_str() {
            "paper" => ExperimentConfig::paper_preset(),
            _ => ExperimentConfig::desk_preset(),
        },
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(policy) = cli.policy {
        cfg.policy = policy;
    }
    if let Some(rounds) = cli.rounds {
        cfg.rounds = rounds;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cli.dump_params {
        cfg.dump_params = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> fedsched::Result<()> {
    let cfg = build_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }

    let log = run_simulation(&cfg)?;

    println!(
        "ran {} rounds x {} slots, policy {}, seed {}",
        cfg.rounds,
        cfg.slots_per_round,
        cfg.policy.label(),
        cfg.master_seed
    );
    for row in &log.summary {
        println!(
            "task {}: avg participants {:.3}, avg normalized reward {:.4}, learning speed {} rounds",
            row.task, row.avg_participants, row.avg_normalized_reward, row.learning_speed
        );
    }
    let inv = &log.invariants;
    println!(
        "invariants: {} transitions, {} violations",
        inv.env.transitions,
        inv.violations()
    );
    if let Some(dir) = &cfg.out_dir {
        println!("csv outputs in {}", dir.display());
    } else if cfg.dump_params {
        eprintln!("note: --dump-params needs --out; no snapshots written");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
