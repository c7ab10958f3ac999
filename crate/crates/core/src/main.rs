use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use aggregate_hints::adversary::run_attack_experiment;
use aggregate_hints::dp::{
    epsilon_audit, neighboring_datasets, AuditOptions, CountMechanism, Mechanism, SumMechanism,
};
use aggregate_hints::market::{grid_search_arb, optimal_arb_amount, CanonicalPair, PoolState, ProtocolId, Token};
use aggregate_hints::sim::{emit_reports, load_scenario, run_scenario};

#[derive(Parser)]
#[command(name = "aggregate-hints", version, about = "Private aggregate hints for backrun auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Count,
    Sum,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Empirical epsilon of a mechanism on neighbouring and identical datasets.
    AuditDp {
        #[arg(long, value_enum)]
        mechanism: MechanismArg,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        bins: usize,
        /// Subsampling rate.
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Clamp cap for sums; also the value of the differing record.
        #[arg(long, default_value_t = 1.0)]
        cap: f64,
        /// Opted-out records shared by both datasets.
        #[arg(long, default_value_t = 99)]
        background: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sybil attack on the victim's value at each subsampling rate.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form and exhaustive arbitrage between two pools.
    Oracle {
        #[arg(long, value_delimiter = ',', num_args = 1)]
        pool_a: Vec<u128>,
        #[arg(long, value_delimiter = ',', num_args = 1)]
        pool_b: Vec<u128>,
        #[arg(long, default_value_t = 3000)]
        fee: u32,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn run(cmd: Command) -> Result<bool, Box<dyn std::error::Error>> {
    match cmd {
        Command::Simulate {
            config,
            out,
            seed,
            rounds,
        } => {
            let mut cfg = load_scenario(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            let metrics = run_scenario(&cfg)?;
            let summary = emit_reports(&cfg, &metrics, &out)?;
            let within_cap = summary.budget.spent <= summary.budget.global_cap;
            print(&json!({
                "rounds": summary.rounds,
                "gross": summary.totals.gross,
                "conserved": summary.totals.conserved,
                "epsilon_spent": summary.budget.spent,
                "epsilon_cap": summary.budget.global_cap,
                "out": out.display().to_string(),
            }));
            if !summary.totals.conserved {
                eprintln!("conservation check failed");
            }
            if !within_cap {
                eprintln!("privacy budget exceeded its cap");
            }
            Ok(summary.totals.conserved && within_cap)
        }
        Command::AuditDp {
            mechanism,
            epsilon,
            trials,
            bins,
            q,
            cap,
            background,
            seed,
        } => {
            let m: Box<dyn Mechanism> = match mechanism {
                MechanismArg::Count => Box::new(CountMechanism::subsampled(epsilon, q)),
                MechanismArg::Sum => Box::new(SumMechanism::subsampled(epsilon, cap, q)),
            };
            let value = match mechanism {
                MechanismArg::Count => 1.0,
                MechanismArg::Sum => cap,
            };
            let (x, x_prime) = neighboring_datasets(background, value)?;
            let opts = AuditOptions::new(trials, bins).with_seed(seed);
            let neighbors = epsilon_audit(m.as_ref(), &x, &x_prime, opts)?;
            let identical = epsilon_audit(m.as_ref(), &x, &x, opts)?;
            let ok = neighbors.within_claim() && identical.epsilon_hat <= identical.slack;
            print(&json!({ "neighbors": neighbors, "identical": identical, "pass": ok }));
            Ok(ok)
        }
        Command::Attack { config, q, trials, seed } => {
            let cfg = load_scenario(&config)?;
            let Some(attack) = cfg.attack.as_ref() else {
                return Err(format!("{}: no [attack] section", config.display()).into());
            };
            let outcomes = run_attack_experiment(attack, &q, trials, seed.unwrap_or(cfg.seed))?;
            print(&json!({ "outcomes": outcomes }));
            Ok(true)
        }
        Command::Oracle { pool_a, pool_b, fee } => {
            let pool = |name: &str, r: &[u128]| -> Result<PoolState, Box<dyn std::error::Error>> {
                let [l1, l2] = r else {
                    return Err(format!("pool {name} needs two reserves, got {r:?}").into());
                };
                let pair = CanonicalPair::new(Token::new("T1"), Token::new("T2"))?;
                Ok(PoolState::new(ProtocolId::new(name), pair, *l1, *l2, fee)?)
            };
            let (a, b) = (pool("a", &pool_a)?, pool("b", &pool_b)?);
            let plan = optimal_arb_amount(&a, &b)?;
            let grid = grid_search_arb(&a, &b)?;
            let ok = plan.expected_profit.abs_diff(grid.expected_profit) <= 1;
            print(&json!({ "closed_form": plan, "grid": grid, "agree": ok }));
            Ok(ok)
        }
    }
}
