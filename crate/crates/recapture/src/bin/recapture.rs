//! Command-line driver for the abundance samplers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use recapture::cli::{load_config, run, ModelKind, SamplerKind};

/// Bayesian abundance estimation for closed populations with individual
/// heterogeneity: semi-complete data likelihood samplers and
/// super-population baselines for non-spatial (mh) and spatial (secr)
/// detection models.
#[derive(Debug, Parser)]
#[command(name = "recapture", version, about, long_about = None)]
struct Args {
    /// JSON run configuration; relative data paths resolve against its
    /// directory
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Override the model family: mh | secr
    #[arg(long)]
    model: Option<String>,

    /// Override the sampler: scd1 | scd2 | cdr | cdde
    #[arg(long)]
    sampler: Option<String>,

    /// Override total MCMC iterations per chain [config default: 10000]
    #[arg(long)]
    iterations: Option<usize>,

    /// Override burn-in iterations per chain [config default: 1000]
    #[arg(long)]
    burn_in: Option<usize>,

    /// Override thinning stride for stored samples [config default: 1]
    #[arg(long)]
    thin: Option<usize>,

    /// Override number of chains [config default: 3]
    #[arg(long)]
    chains: Option<usize>,

    /// Override the RNG seed [config default: 0]
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory for traces and the summary report
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the Gauss-Hermite quadrature order [config default: 100]
    #[arg(long)]
    quadrature_order: Option<usize>,

    /// Override the super-population bound / prior truncation point M
    /// [config default: 1000]
    #[arg(long)]
    upper_bound_m: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn execute(args: Args) -> recapture::Result<()> {
    let (mut config, base) = load_config(&args.config)?;
    if let Some(model) = &args.model {
        config.model = model.parse::<ModelKind>()?;
    }
    if let Some(sampler) = &args.sampler {
        config.sampler = sampler.parse::<SamplerKind>()?;
    }
    if let Some(v) = args.iterations {
        config.sampler_config.iterations = v;
    }
    if let Some(v) = args.burn_in {
        config.sampler_config.burn_in = v;
    }
    if let Some(v) = args.thin {
        config.sampler_config.thin = v;
    }
    if let Some(v) = args.chains {
        config.sampler_config.chains = v;
    }
    if let Some(v) = args.seed {
        config.sampler_config.seed = v;
    }
    if let Some(v) = args.quadrature_order {
        config.sampler_config.quadrature_order = v;
    }
    if let Some(v) = args.upper_bound_m {
        config.set_upper_bound_m(v);
    }
    if let Some(out) = args.out {
        config.out_dir = Some(out);
    }

    let report = run(&config, &base)?;
    print!("{}", report.render_table());
    println!("wall time: {:.2} s", report.wall_seconds);
    if !report.written.is_empty() {
        println!(
            "outputs written to {}",
            report.written[0].parent().unwrap().display()
        );
    }
    Ok(())
}
