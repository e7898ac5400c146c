//! Runs the desk preset under each selection policy and prints the
//! final-quartile mean of the per-round sum of normalized task rewards.
//!
//! ```sh
//! cargo run --release -p fedsched --example compare_policies [seed...]
//! ```

use fedsched::config::ExperimentConfig;
use fedsched::orchestrator::run_simulation;
use fedsched::selection::SelectionPolicy;

fn main() {
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("seed"))
        .collect();
    let seeds = if seeds.is_empty() { vec![1] } else { seeds };

    for &seed in &seeds {
        println!("seed {seed}:");
        for policy in [
            SelectionPolicy::Bench,
            SelectionPolicy::FlPf,
            SelectionPolicy::FlGreedy,
            SelectionPolicy::FlRr,
            SelectionPolicy::NoFl,
        ] {
            let mut cfg = ExperimentConfig::desk_preset();
            cfg.master_seed = seed;
            cfg.policy = policy;
            cfg.threads = 0;
            let started = std::time::Instant::now();
            let log = run_simulation(&cfg).expect("simulation");
            let sums = log.round_sum_reward();
            let quartile = sums.len() / 4;
            let final_quartile: f64 =
                sums[sums.len() - quartile..].iter().sum::<f64>() / quartile as f64;
            let participants: f64 = log.summary.iter().map(|row| row.avg_participants).sum();
            println!(
                "  {:>9}: final-quartile sum reward {final_quartile:.4}, avg participants {participants:5.2}  [{:.1?}]",
                policy.label(),
                started.elapsed()
            );
        }
    }
}
