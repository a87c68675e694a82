use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use heteroclinic::geodesic::RefineOptions;
use heteroclinic::pipeline::{
    run_pipeline, Resolution, RunConfig, DEFAULT_EQUIP_TOL, DEFAULT_YOUNG_TOL,
};
use heteroclinic::reparam::ReparamOptions;
use heteroclinic::Error;

#[derive(Parser)]
#[command(
    name = "heteroclinic",
    version,
    about = "Heteroclinic connections by weighted geodesics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file (JSON, or TOML by extension).
    Solve(SolveArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    problem: PathBuf,
    /// Grid nodes per axis: one number for all axes or a comma list.
    #[arg(long, value_delimiter = ',')]
    resolution: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps_well: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Solve the direct pair even when the triangle inequality is not strict.
    #[arg(long)]
    no_decompose: bool,
    /// Well indices to connect (default: first and last).
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    pair: Option<Vec<usize>>,
    /// Stop after geodesic refinement.
    #[arg(long)]
    seed_only: bool,
    /// Vertices of the refined geodesic.
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long)]
    sti_tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_YOUNG_TOL)]
    young_tol: f64,
    #[arg(long, default_value_t = DEFAULT_EQUIP_TOL)]
    equip_tol: f64,
}

fn main() -> ExitCode {
    let Command::Solve(args) = Cli::parse().command;
    let cfg = RunConfig {
        pair: args.pair.map(|p| (p[0], p[1])),
        resolution: args.resolution.map(|r| match r.as_slice() {
            [one] => Resolution::Uniform(*one),
            _ => Resolution::PerAxis(r),
        }),
        refine: RefineOptions {
            m: args.m,
            max_iters: args.max_iters,
            ..Default::default()
        },
        reparam: ReparamOptions {
            dt: args.dt,
            eps_well: args.eps_well,
            ..Default::default()
        },
        decompose: !args.no_decompose,
        seed_only: args.seed_only,
        sti_tol: args.sti_tol,
        young_tol: args.young_tol,
        equip_tol: args.equip_tol,
        out_dir: Some(args.out.clone()),
        ..Default::default()
    };
    match run_pipeline(&args.problem, &cfg) {
        Ok(out) => {
            let r = &out.report;
            for s in &r.segments {
                let mut line = format!(
                    "pair {}-{}: d_K grid {:.9} in [{:.6}, {:.6}], refined L_K {:.9}",
                    s.pair.0, s.pair.1, s.dk_grid, s.dk_lower, s.dk_upper, s.refined_lk
                );
                if let Some(o) = &s.orbit {
                    line += &format!(
                        ", energy {:.9}, tail {:.3e}, young gap {:.3e}, equipartition {:.3e}",
                        o.energy, o.tail_bound, o.young_gap, o.equip_residual
                    );
                }
                println!("{line}");
            }
            for c in r.checks.iter().filter(|c| !c.passed) {
                println!("check failed: {}", c.name);
            }
            eprintln!(
                "grid {:.2?}, sti {:.2?}, total {:.2?}; output in {}",
                r.timings.grid,
                r.timings.sti,
                r.timings.total,
                args.out.display()
            );
            if r.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e.root(), Error::StiViolationAlongPath { .. }) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
