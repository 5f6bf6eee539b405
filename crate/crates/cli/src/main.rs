//! `macrospin`: command-line front end for the driven dissipative macrospin.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Axis, ConfigFile, Counts, Floats, Init, ModelArgs, Range, Resolver};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "macrospin",
    version,
    about = "Driven dissipative macrospin simulator"
)]
struct Cli {
    /// TOML file with [params], [integrator], [task] and [output] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one classical trajectory
    Classical {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Keep every n-th step (0 keeps only period boundaries)
        #[arg(long)]
        every: Option<usize>,
    },
    /// Evolve the finite-N density matrix
    Quantum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        #[arg(long)]
        every: Option<usize>,
        /// Times at which to dump |rho| next to the output file
        #[arg(long)]
        snapshots: Option<Floats>,
    },
    /// Quantum-classical error for a list of N
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        #[arg(long)]
        every: Option<usize>,
        /// Spin counts, increasing
        #[arg(long = "n-list")]
        n_list: Option<Counts>,
    },
    /// Lyapunov spectrum at one parameter point
    Mle {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        #[arg(long = "t-total")]
        t_total: Option<f64>,
        #[arg(long)]
        transient: Option<f64>,
        #[arg(long)]
        renorm: Option<f64>,
    },
    /// Largest Lyapunov exponent over a (Γ, κ) grid
    MleMap {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        /// Γ axis as lo,hi,n
        #[arg(long)]
        gammas: Option<Axis>,
        /// κ axis as lo,hi,n
        #[arg(long)]
        kappas: Option<Axis>,
        #[arg(long = "t-total")]
        t_total: Option<f64>,
        #[arg(long)]
        transient: Option<f64>,
        #[arg(long)]
        renorm: Option<f64>,
        /// csv (long format) or grid
        #[arg(long)]
        format: Option<String>,
    },
    /// Stroboscopic bifurcation scan
    Bifurcation {
        #[command(flatten)]
        model: ModelArgs,
        /// kappa or gamma
        #[arg(long)]
        control: Option<String>,
        /// Control axis as lo,hi,n
        #[arg(long)]
        axis: Option<Axis>,
        /// fixed or global
        #[arg(long)]
        policy: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        /// Initial states for the global policy
        #[arg(long = "global-count")]
        global_count: Option<usize>,
        #[arg(long)]
        transient: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Basin-of-attraction map on the sphere
    Basin {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "n-theta")]
        n_theta: Option<usize>,
        #[arg(long = "n-phi")]
        n_phi: Option<usize>,
        #[arg(long = "theta-range")]
        theta_range: Option<Range>,
        #[arg(long = "phi-range")]
        phi_range: Option<Range>,
        /// Seed directions used to find attractors
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long = "seed-periods")]
        seed_periods: Option<usize>,
    },
    /// Fourier spectrum of stroboscopic m^x
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        /// Analysis window as start,end in periods
        #[arg(long)]
        window: Option<Range>,
        #[arg(long = "samples-per-period")]
        samples_per_period: Option<usize>,
    },
    /// Period-doubling cascade and Feigenbaum ratio
    Feigenbaum {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        init: Option<Init>,
        /// Control bracket as lo,hi
        #[arg(long)]
        bracket: Option<Range>,
        #[arg(long = "max-doublings")]
        max_doublings: Option<usize>,
        #[arg(long)]
        resolution: Option<f64>,
        /// Run the logistic-map control instead of the macrospin
        #[arg(long)]
        logistic: bool,
    },
    /// Glide-symmetry and Schur-Weyl self-checks
    SymmetryCheck {
        #[command(flatten)]
        model: ModelArgs,
        /// Random glide-family members to test
        #[arg(long)]
        members: Option<usize>,
    },
    /// Schur-Weyl sector table for N spins
    SchurWeyl {
        #[arg(long)]
        n: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let model = match &cli.command {
        Command::Classical { model, .. }
        | Command::Quantum { model, .. }
        | Command::Compare { model, .. }
        | Command::Mle { model, .. }
        | Command::MleMap { model, .. }
        | Command::Bifurcation { model, .. }
        | Command::Basin { model, .. }
        | Command::Spectrum { model, .. }
        | Command::Feigenbaum { model, .. }
        | Command::SymmetryCheck { model, .. } => model.clone(),
        Command::SchurWeyl { .. } => ModelArgs::default(),
    };
    let mut r = Resolver::new(file, &model, cli.output.clone())?;
    let seed = cli.seed;
    match cli.command {
        Command::Classical {
            init, t_end, every, ..
        } => commands::classical(&mut r, init, t_end, every),
        Command::Quantum {
            init,
            t_end,
            every,
            snapshots,
            ..
        } => commands::quantum(&mut r, init, t_end, every, snapshots),
        Command::Compare {
            init,
            t_end,
            every,
            n_list,
            ..
        } => commands::compare(&mut r, init, t_end, every, n_list),
        Command::Mle {
            init,
            t_total,
            transient,
            renorm,
            ..
        } => commands::mle(
            &mut r,
            init,
            commands::LyapunovFlags {
                t_total,
                transient,
                renorm,
            },
        ),
        Command::MleMap {
            init,
            gammas,
            kappas,
            t_total,
            transient,
            renorm,
            format,
            ..
        } => commands::mle_map(
            &mut r,
            init,
            gammas,
            kappas,
            commands::LyapunovFlags {
                t_total,
                transient,
                renorm,
            },
            format,
        ),
        Command::Bifurcation {
            control,
            axis,
            policy,
            init,
            global_count,
            transient,
            samples,
            ..
        } => commands::bifurcation(
            &mut r,
            commands::ScanFlags {
                control,
                axis,
                policy,
                init,
                global_count,
                transient,
                samples,
            },
        ),
        Command::Basin {
            n_theta,
            n_phi,
            theta_range,
            phi_range,
            seeds,
            seed_periods,
            ..
        } => commands::basin(
            &mut r,
            commands::BasinFlags {
                n_theta,
                n_phi,
                theta_range,
                phi_range,
                seeds,
                seed_periods,
            },
        ),
        Command::Spectrum {
            init,
            window,
            samples_per_period,
            ..
        } => commands::spectrum(&mut r, init, window, samples_per_period),
        Command::Feigenbaum {
            init,
            bracket,
            max_doublings,
            resolution,
            logistic,
            ..
        } => commands::feigenbaum(&mut r, init, bracket, max_doublings, resolution, logistic),
        Command::SymmetryCheck { members, .. } => commands::symmetry_check(&mut r, members, seed),
        Command::SchurWeyl { n } => commands::schur_weyl(&mut r, n),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
