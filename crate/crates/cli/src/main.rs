use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use monochain_cli::config::{Format, RunConfig, Stage, OUTPUT_DIR_ENV};
use monochain_cli::run;

/// Symmetric SU(2) monopole chains: spectral classification, Toda solve and
/// numerical Nahm transform.
#[derive(Parser, Debug)]
#[command(name = "monochain", version)]
struct Args {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the effective configuration (TOML) to this file and exit.
    #[arg(long)]
    dump_config: Option<PathBuf>,
    #[arg(long)]
    k: Option<i64>,
    #[arg(long)]
    l: Option<i64>,
    #[arg(long)]
    c_abs: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_phase: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Cylinder half-length L.
    #[arg(long = "domain-L")]
    domain_l: Option<f64>,
    #[arg(long)]
    grid_nr: Option<usize>,
    #[arg(long)]
    grid_nt: Option<usize>,
    /// Toda sup-residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Half-width of the (y1, y2) square.
    #[arg(long)]
    y_extent: Option<f64>,
    /// Lattice points per transverse axis.
    #[arg(long)]
    y_points: Option<usize>,
    /// Lattice points per y3 period.
    #[arg(long)]
    y3_points: Option<usize>,
    /// Comma-separated subset of spectral,toda,nahm.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    /// Comma-separated subset of csv,vtk,json.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the Toda solution as a text checkpoint.
    #[arg(long)]
    checkpoint: bool,
}

fn build(args: &Args) -> Result<RunConfig, monochain_cli::CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($src:expr, $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    set!(args.k, cfg.params.k);
    set!(args.l, cfg.params.l);
    set!(args.c_abs, cfg.params.c_abs);
    set!(args.c_phase, cfg.params.c_phase);
    set!(args.beta, cfg.params.beta);
    if args.domain_l.is_some() {
        cfg.grid.half_length = args.domain_l;
    }
    set!(args.grid_nr, cfg.grid.n_r);
    set!(args.grid_nt, cfg.grid.n_t);
    set!(args.tol, cfg.toda.tol);
    set!(args.max_steps, cfg.toda.max_steps);
    if args.y_extent.is_some() {
        cfg.scan.half_width = args.y_extent;
    }
    set!(args.y_points, cfg.scan.n12);
    set!(args.y3_points, cfg.scan.n3);
    set!(args.stages, cfg.stages);
    set!(args.output_dir, cfg.output.directory);
    set!(args.format, cfg.output.formats);
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    set!(args.seed, cfg.seed);
    cfg.output.checkpoint |= args.checkpoint;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match build(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("monochain: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(path) = &args.dump_config {
        let text = cfg.to_toml().and_then(|t| std::fs::write(path, t).map_err(Into::into));
        return match text {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("monochain: {e}");
                ExitCode::FAILURE
            }
        };
    }
    match run(&cfg) {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if let Some(t) = &out.report.toda {
                println!("toda: residual {:.3e}, converged {}", t.residual_sup, t.converged);
            }
            if let Some(n) = &out.report.nahm {
                println!(
                    "nahm: {} points, gap fraction {:.4}, {} maxima per period",
                    n.points, n.gap_fraction, n.maxima_per_period
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("monochain: {e}");
            ExitCode::FAILURE
        }
    }
}
