use std::path::PathBuf;
use std::process::ExitCode;

use abc_prc::experiment::{
    load_schedule, run_experiment, Algorithm, ExperimentConfig, OUT_DIR_ENV,
};
use clap::Parser;

/// Run rejection ABC, ABC-MCMC or ABC-PRC on the Gaussian-mean problem and
/// write per-seed trace, particle and histogram CSVs.
#[derive(Parser, Debug)]
#[command(name = "abc-prc", version, about)]
struct Args {
    /// rejection, mcmc, prc or prc-corrected
    #[arg(long, default_value = "prc")]
    algorithm: Algorithm,

    /// Observed sample mean.
    #[arg(long, default_value_t = 4.786624)]
    ybar: f64,

    /// Sample size behind the observed mean.
    #[arg(long, default_value_t = 10)]
    n: usize,

    /// Known data variance.
    #[arg(long, default_value_t = 9.0)]
    sigma2: f64,

    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    prior_lo: f64,

    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    prior_hi: f64,

    /// Perturbation kernel variance.
    #[arg(long, default_value_t = 0.1)]
    kernel_var: f64,

    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    kernel_mean: f64,

    /// Preset name (paper-2007) or path to a schedule file.
    #[arg(long, default_value = "paper-2007")]
    schedule: String,

    /// Tolerance for rejection and mcmc (accepts `inf`).
    #[arg(long, default_value_t = 0.01)]
    eps: f64,

    #[arg(long, default_value_t = 1000)]
    particles: usize,

    /// MCMC steps kept after burn-in.
    #[arg(long, default_value_t = 200_000)]
    chain_len: usize,

    #[arg(long, default_value_t = 10_000)]
    burn_in: usize,

    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,

    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out_dir: PathBuf,

    /// Simulator-call budget per iteration (per run for rejection).
    #[arg(long, default_value_t = 10_000_000)]
    max_sim_calls: u64,

    /// Checkpoints recorded per PRC run.
    #[arg(long, default_value_t = 20)]
    checkpoints: usize,

    #[arg(long)]
    threads: Option<usize>,

    /// Also write an SVG histogram with the oracle density per seed.
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    let schedule = match load_schedule(&args.schedule) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let config = ExperimentConfig {
        algorithm: args.algorithm,
        ybar: args.ybar,
        n: args.n,
        sigma2: args.sigma2,
        prior_lo: args.prior_lo,
        prior_hi: args.prior_hi,
        kernel_var: args.kernel_var,
        kernel_mean: args.kernel_mean,
        schedule,
        eps: args.eps,
        particles: args.particles,
        chain_len: args.chain_len,
        burn_in: args.burn_in,
        seeds: args.seeds,
        out_dir: args.out_dir,
        max_sim_calls: args.max_sim_calls,
        checkpoint_count: args.checkpoints,
        threads: args.threads,
        plot: args.plot,
    };

    match run_experiment(&config) {
        Ok(summary) => {
            println!("{}", summary.summary_line());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
