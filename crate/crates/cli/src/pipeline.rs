use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use monochain::ansatz::{
    default_half_length, product_identity_residual, shift_identity_residual, spectral_curve_check, twist_s_dependence,
    CylinderGrid,
};
use monochain::eigen::EigenOptions;
use monochain::nahm::{
    log_slope, radial_profile, scan, MonopoleGrid, NahmContext, ScanOptions, SymmetryDefect, YLattice,
};
use monochain::spectral::{build_params, classify, ChainParams, ClassificationReport};
use monochain::toda::{assemble_hitchin, heat_flow, symmetry_check, write_checkpoint, TodaConfig, TodaSolution};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig, Stage};
use crate::export::{summarize, write_csv, write_vtk, EnergySummary};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub c_abs: f64,
    pub c_phase: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostics {
    pub group_order: u64,
    pub distinct_fixed_points: usize,
    pub odd_groups_empty: bool,
    pub max_fixed_point_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzDiagnostics {
    /// Residuals relative to |2cosh(βs)| (times |c| for the curve).
    pub product_identity: f64,
    pub shift_identity: f64,
    pub spectral_curve: f64,
    pub twist_s_dependence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TodaDiagnostics {
    pub half_length: f64,
    pub n_r: usize,
    pub n_t: usize,
    pub residual_sup: f64,
    pub converged: bool,
    pub flow_steps: usize,
    pub newton_steps: usize,
    pub ds_first: f64,
    pub ds_last: f64,
    pub ds_monotone: bool,
    pub trace_defect: f64,
    pub symmetry_defect: Option<f64>,
    pub curvature_residual: f64,
    pub holomorphy_residual: f64,
    pub twist_consistency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NahmDiagnostics {
    pub points: usize,
    pub gap_fraction: f64,
    pub flagged_points: usize,
    pub degraded_points: usize,
    pub max_gap_ratio: f64,
    /// Smallest λ₁ relative to the operator norm bound over the scan.
    pub min_lambda1: f64,
    pub max_trace_phihat: f64,
    pub max_eigen_residual: f64,
    pub periodicity_residual: Option<f64>,
    pub symmetry: SymmetryDefect,
    pub maxima_per_period: usize,
    pub expected_maxima: usize,
    /// Fitted d‖φ̂‖/d ln ρ over 2k/β < ρ < 3k/β, compared with k/β.
    pub log_slope: Option<f64>,
    pub log_slope_target: f64,
}

/// One measured quantity compared against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// One of `<`, `<=`, `>=`, `==`.
    pub relation: String,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: f64, relation: &str, bound: f64) -> Self {
        let pass = match relation {
            "<" => value < bound,
            "<=" => value <= bound,
            ">=" => value >= bound,
            _ => value == bound,
        };
        Self {
            name: name.to_string(),
            value,
            relation: relation.to_string(),
            bound,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Machine-readable record of a failed stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub stage: Stage,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub params: ParamsReport,
    pub stages: Vec<Stage>,
    pub seed: u64,
    pub spectral: Option<SpectralDiagnostics>,
    pub ansatz: AnsatzDiagnostics,
    pub toda: Option<TodaDiagnostics>,
    pub nahm: Option<NahmDiagnostics>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per completed stage; the only field that varies
    /// between identical runs.
    pub timings: Vec<StageTiming>,
    pub error: Option<ErrorRecord>,
}

impl DiagnosticsReport {
    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: DiagnosticsReport,
    pub classification: Option<ClassificationReport>,
    pub toda: Option<TodaSolution>,
    pub grid: Option<MonopoleGrid>,
    pub summary: Option<EnergySummary>,
    pub files: Vec<PathBuf>,
}

pub fn chain_params(cfg: &RunConfig) -> Result<ChainParams, CliError> {
    let p = &cfg.params;
    Ok(build_params(p.k, p.l, p.c_abs, p.c_phase, p.beta)?)
}

pub fn cylinder_grid(cfg: &RunConfig, p: &ChainParams) -> Result<CylinderGrid, CliError> {
    let l = cfg.grid.half_length.unwrap_or_else(|| default_half_length(p));
    Ok(CylinderGrid::new(l, cfg.grid.n_r, cfg.grid.n_t, p.beta)?)
}

pub fn y_lattice(cfg: &RunConfig, p: &ChainParams) -> Result<YLattice, CliError> {
    let w = cfg.scan.half_width.unwrap_or(3.0 * p.k as f64 / p.beta);
    Ok(YLattice::new(w, cfg.scan.n12, cfg.scan.n3, p.beta)?)
}

fn sample_points(p: &ChainParams) -> Vec<Complex64> {
    // fixed, deterministic points inside one period strip
    (0..16)
        .map(|q| {
            let x = -1.0 + 0.13 * q as f64;
            let y = (0.37 * q as f64).rem_euclid(2.0 * std::f64::consts::PI / p.beta);
            Complex64::new(x, y)
        })
        .collect()
}

fn ansatz_diagnostics(p: &ChainParams) -> AnsatzDiagnostics {
    let s = sample_points(p);
    let scale = |z: Complex64| (2.0 * (z * p.beta).cosh()).norm().max(1.0);
    AnsatzDiagnostics {
        product_identity: s
            .iter()
            .map(|&z| product_identity_residual(p, z) / scale(z))
            .fold(0.0, f64::max),
        shift_identity: s
            .iter()
            .flat_map(|&z| (0..p.k).map(move |j| shift_identity_residual(p, j, z)))
            .fold(0.0, f64::max),
        spectral_curve: s
            .iter()
            .map(|&z| spectral_curve_check(p, &[z]) / (p.c_abs * scale(z)))
            .fold(0.0, f64::max),
        twist_s_dependence: twist_s_dependence(p, &s),
    }
}

fn toda_diagnostics(p: &ChainParams, sol: &TodaSolution) -> TodaDiagnostics {
    let h = assemble_hitchin(p, sol);
    TodaDiagnostics {
        half_length: sol.grid.half_length,
        n_r: sol.grid.n_r,
        n_t: sol.grid.n_t,
        residual_sup: sol.residual_sup,
        converged: sol.converged,
        flow_steps: sol.flow_steps,
        newton_steps: sol.newton_steps,
        ds_first: sol.ds_history.first().copied().unwrap_or(f64::NAN),
        ds_last: sol.ds_history.last().copied().unwrap_or(f64::NAN),
        ds_monotone: sol.ds_history.windows(2).all(|w| w[1] <= w[0]),
        trace_defect: sol.trace_defect(),
        symmetry_defect: symmetry_check(p, sol).ok(),
        curvature_residual: h.curvature_residual(),
        holomorphy_residual: h.holomorphy_residual(),
        twist_consistency: h.twist_consistency(),
    }
}

/// Relative change of ‖φ̂‖² under y₃ → y₃ + β at three fixed off-axis
/// lattice points, each re-evaluated from a cold start.
pub fn periodicity_residual(ctx: &NahmContext, grid: &MonopoleGrid, eigen: &EigenOptions) -> Result<f64, CliError> {
    let lat = &grid.lattice;
    let n = lat.n12;
    let probes = [
        (n - 2, n / 2, 1 % lat.n3),
        (n / 2, 1, lat.n3 / 2),
        (n / 4, 3 * n / 4, lat.n3 - 1),
    ];
    let mut worst: f64 = 0.0;
    for (a, b, c) in probes {
        let mut y = lat.point(a, b, c);
        let base = grid.phihat_norm2[lat.index(a, b, c)];
        y[2] += lat.beta;
        let shifted = ctx.phihat_norm2_at(y, eigen)?;
        worst = worst.max((shifted - base).abs() / base.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Short machine-readable name of an error.
pub fn error_kind(e: &CliError) -> &'static str {
    use monochain::Error as E;
    match e {
        CliError::Config(_) => "config",
        CliError::Io(_) => "io",
        CliError::Json(_) | CliError::Csv(_) => "serialization",
        CliError::Core(e) => match e {
            E::InvalidParameter(_) => "invalid-parameter",
            E::IllConditionedLattice(_) => "ill-conditioned-lattice",
            E::NumericalBlowup(_) => "numerical-blowup",
            E::IncompatibleGrid(_) => "incompatible-grid",
            E::Factorization(_) => "factorization",
            E::EigenNonConvergence(_) => "eigen-non-convergence",
            E::ScanQuality(_) => "scan-quality",
        },
    }
}

/// Radial log-slope of ‖φ̂‖ over 2k/β < ρ < 3k/β along a fixed ray.
pub fn fit_log_slope(ctx: &NahmContext, p: &ChainParams, eigen: &EigenOptions) -> Result<f64, CliError> {
    let u = p.k as f64 / p.beta;
    let prof = radial_profile(ctx, (2.0 * u, 3.0 * u), 6, 0.3, 0.0, eigen)?;
    Ok(log_slope(&prof))
}

#[derive(Default)]
struct Partial {
    classification: Option<ClassificationReport>,
    spectral: Option<SpectralDiagnostics>,
    toda: Option<TodaSolution>,
    toda_diag: Option<TodaDiagnostics>,
    grid: Option<MonopoleGrid>,
    summary: Option<EnergySummary>,
    nahm_diag: Option<NahmDiagnostics>,
    files: Vec<PathBuf>,
    timings: Vec<StageTiming>,
}

fn spectral_stage(p: &ChainParams, dir: &Path, out: &mut Partial) -> Result<(), CliError> {
    let rep = classify(p)?;
    out.spectral = Some(SpectralDiagnostics {
        group_order: rep.entries.first().map_or(1, |e| e.group_order),
        distinct_fixed_points: rep.distinct_fixed_points,
        odd_groups_empty: rep.odd_groups_empty,
        max_fixed_point_residual: rep.entries.iter().map(|e| e.fixed_point_residual).fold(0.0, f64::max),
    });
    let path = dir.join("classification.json");
    serde_json::to_writer_pretty(create(&path)?, &rep)?;
    out.files.push(path);
    out.classification = Some(rep);
    Ok(())
}

fn toda_stage(cfg: &RunConfig, p: &ChainParams, dir: &Path, out: &mut Partial) -> Result<(), CliError> {
    let g = cylinder_grid(cfg, p)?;
    let tc = TodaConfig {
        tol: cfg.toda.tol,
        max_steps: cfg.toda.max_steps,
        dt_factor: cfg.toda.dt_factor,
        newton_switch: cfg.toda.newton_switch,
        ..TodaConfig::default()
    };
    let sol = heat_flow(p, &g, &tc)?;
    out.toda_diag = Some(toda_diagnostics(p, &sol));
    if cfg.output.checkpoint {
        let path = dir.join("psi.txt");
        write_checkpoint(create(&path)?, &sol)?;
        out.files.push(path);
    }
    out.toda = Some(sol);
    Ok(())
}

fn nahm_stage(cfg: &RunConfig, p: &ChainParams, dir: &Path, out: &mut Partial) -> Result<(), CliError> {
    let Some(sol) = out.toda.as_ref() else {
        return Err(CliError::Config("stage 'nahm' requires stage 'toda'".into()));
    };
    let ctx = NahmContext::new(&assemble_hitchin(p, sol));
    let lat = y_lattice(cfg, p)?;
    let eigen = EigenOptions {
        seed: cfg.seed,
        ..EigenOptions::default()
    };
    let opts = ScanOptions {
        eigen: eigen.clone(),
        threads: cfg.thread_count(),
        ..ScanOptions::default()
    };
    let mg = scan(&ctx, &lat, &opts)?;
    let periodicity = periodicity_residual(&ctx, &mg, &eigen).ok();
    let sum = summarize(&mg, p, periodicity);
    let q = &mg.quality;
    let ok = q.iter().filter(|q| !q.flagged);
    out.nahm_diag = Some(NahmDiagnostics {
        points: q.len(),
        gap_fraction: mg.gap_fraction(),
        flagged_points: mg.flagged_count(),
        degraded_points: q.iter().filter(|q| q.degraded).count(),
        max_gap_ratio: ok
            .clone()
            .map(|q| q.lambda[0].abs().max(q.lambda[1].abs()) / q.lambda[2])
            .fold(0.0, f64::max),
        min_lambda1: ok.clone().map(|q| q.lambda[0]).fold(f64::INFINITY, f64::min),
        max_trace_phihat: mg.max_trace(),
        max_eigen_residual: ok.map(|q| q.residual).fold(0.0, f64::max),
        periodicity_residual: periodicity,
        symmetry: mg.symmetry_defect(p),
        maxima_per_period: sum.maxima_per_period,
        expected_maxima: sum.expected_maxima,
        log_slope: fit_log_slope(&ctx, p, &eigen).ok(),
        log_slope_target: p.k as f64 / p.beta,
    });
    for f in &cfg.output.formats {
        let path = match f {
            Format::Vtk => {
                let path = dir.join("energy.vtk");
                write_vtk(create(&path)?, &mg, p)?;
                path
            }
            Format::Csv => {
                let path = dir.join("energy.csv");
                write_csv(create(&path)?, &mg)?;
                path
            }
            Format::Json => {
                let path = dir.join("summary.json");
                serde_json::to_writer_pretty(create(&path)?, &sum)?;
                path
            }
        };
        out.files.push(path);
    }
    out.grid = Some(mg);
    out.summary = Some(sum);
    Ok(())
}

fn checks(p: &ChainParams, out: &Partial, ansatz: &AnsatzDiagnostics, tol: f64) -> Vec<Check> {
    let mut c = Vec::new();
    if let Some(s) = &out.spectral {
        if p.k >= 2 {
            c.push(Check::new(
                "spectral.group_order",
                s.group_order as f64,
                "==",
                p.k as f64,
            ));
        }
        c.push(Check::new(
            "spectral.distinct_fixed_points",
            s.distinct_fixed_points as f64,
            "==",
            p.k as f64,
        ));
        c.push(Check::new(
            "spectral.fixed_point_residual",
            s.max_fixed_point_residual,
            "<",
            1e-10,
        ));
    }
    c.push(Check::new(
        "ansatz.product_identity",
        ansatz.product_identity,
        "<",
        1e-10,
    ));
    c.push(Check::new("ansatz.shift_identity", ansatz.shift_identity, "<", 1e-10));
    c.push(Check::new("ansatz.spectral_curve", ansatz.spectral_curve, "<", 1e-10));
    c.push(Check::new(
        "ansatz.twist_s_dependence",
        ansatz.twist_s_dependence,
        "<",
        1e-10,
    ));
    if let (Some(t), Some(sol)) = (&out.toda_diag, &out.toda) {
        let g = &sol.grid;
        c.push(Check::new("toda.residual_sup", t.residual_sup, "<", tol));
        c.push(Check::new("toda.ds_monotone", t.ds_monotone as u8 as f64, "==", 1.0));
        c.push(Check::new("toda.trace_defect", t.trace_defect, "<", 1e-10));
        if let Some(s) = t.symmetry_defect {
            let h2 = g.h_r * g.h_r + g.h_t * g.h_t;
            c.push(Check::new("toda.symmetry_defect", s, "<", 10.0 * h2));
        }
    }
    if let Some(n) = &out.nahm_diag {
        c.push(Check::new("nahm.gap_fraction", n.gap_fraction, ">=", 0.95));
        if let Some(r) = n.periodicity_residual {
            c.push(Check::new("nahm.periodicity_residual", r, "<", 1e-4));
        }
        if n.symmetry.points > 0 {
            c.push(Check::new("nahm.symmetry_ratio", n.symmetry.max_ratio, "<=", 3.0));
        }
        c.push(Check::new(
            "nahm.maxima_per_period",
            n.maxima_per_period as f64,
            "==",
            n.expected_maxima as f64,
        ));
        if let Some(s) = n.log_slope {
            let rel = (s - n.log_slope_target).abs() / n.log_slope_target;
            c.push(Check::new("nahm.log_slope_rel_error", rel, "<", 0.05));
        }
    }
    c
}

/// Runs the requested stages in pipeline order and writes the outputs.
///
/// `diagnostics.json` is written even when a stage fails; it then carries
/// an error record naming the stage.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let p = chain_params(cfg)?;
    let dir = cfg.output.directory.as_path();
    std::fs::create_dir_all(dir)?;
    let stages = cfg.ordered_stages();
    let mut out = Partial::default();
    let mut error = None;
    let mut failure = None;
    for &stage in &stages {
        let clock = Instant::now();
        let r = match stage {
            Stage::Spectral => spectral_stage(&p, dir, &mut out),
            Stage::Toda => toda_stage(cfg, &p, dir, &mut out),
            Stage::Nahm => nahm_stage(cfg, &p, dir, &mut out),
        };
        match r {
            Ok(()) => out.timings.push(StageTiming {
                stage,
                seconds: clock.elapsed().as_secs_f64(),
            }),
            Err(e) => {
                error = Some(ErrorRecord {
                    stage,
                    kind: error_kind(&e).to_string(),
                    message: e.to_string(),
                });
                failure = Some(e);
                break;
            }
        }
    }

    let ansatz = ansatz_diagnostics(&p);
    let report = DiagnosticsReport {
        params: ParamsReport {
            k: p.k,
            l: p.l,
            m: p.m,
            c_abs: p.c_abs,
            c_phase: p.c_phase,
            beta: p.beta,
        },
        stages,
        seed: cfg.seed,
        checks: checks(&p, &out, &ansatz, cfg.toda.tol),
        spectral: out.spectral.clone(),
        ansatz,
        toda: out.toda_diag.clone(),
        nahm: out.nahm_diag.clone(),
        timings: out.timings.clone(),
        error,
    };
    let path = dir.join("diagnostics.json");
    serde_json::to_writer_pretty(create(&path)?, &report)?;
    out.files.push(path);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunOutcome {
        report,
        classification: out.classification,
        toda: out.toda,
        grid: out.grid,
        summary: out.summary,
        files: out.files,
    })
}
