//! Command-line driver: `analyze`, `normalize`, `conjugate`, `fixedpoint`,
//! and `verify` over a JSON problem file, writing `report.json` and CSV
//! maps under the output directory.
//!
//! Exit codes: 0 success; 2 invalid problem file; 3 degenerate critical
//! point; 4 normalization finished with resonance obstructions; 5 more
//! than 1% of grid points failed to integrate; 1 failed verification.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::flow::{conjugacy_phi, flow_f, flow_g, norm2};
use crate::pipeline::{self, PipelineError};
use crate::problem::ProblemSpec;
use crate::report::{ContractionJson, FlowJson, PhiRow, RunReport};
use crate::sobolev::{
    delta_min_heuristic, fixed_point_iterate, GridSpec, WeightedNormParams,
};
use crate::spectrum::SpectrumError;
use crate::verify::{run_battery, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_OBSTRUCTED: i32 = 4;
pub const EXIT_INTEGRATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "morsenorm",
    about = "Linearize Morse gradient flows near non-degenerate critical points",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical points, Morse eigenvalues, and the resonance scan.
    Analyze(CommonArgs),
    /// Order-by-order normalization toward the diagonal standard form.
    Normalize(CommonArgs),
    /// Evaluate the conjugacy Φ on a grid (exit-time and/or fixed-point).
    Conjugate(CommonArgs),
    /// Fixed-point iteration diagnostics: contraction ratios and Φ_fp.
    Fixedpoint(CommonArgs),
    /// Run the invariant battery against the problem.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Problem file (JSON).
    pub spec: PathBuf,
    /// Override the truncation order.
    #[arg(long)]
    pub order: Option<u32>,
    /// Evaluation grid, `lo:hi:steps` per dimension, comma-separated
    /// (one chunk applies to every dimension).
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Conjugacy method: exit, fixedpoint, or both.
    #[arg(long, default_value = "exit")]
    pub method: String,
    /// Weight rate δ (default: the contraction heuristic δ_min).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Integrability exponent p of the weighted norm.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Derivative count k of the weighted norm.
    #[arg(long, default_value_t = 0)]
    pub k: u32,
    /// Trajectory horizon T_max (default: 12/min|λ|).
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Seed for randomized checks; recorded in the report.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for report.json and CSV maps.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_thread_pool();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return EXIT_SPEC;
        }
    };
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Normalize(a) => cmd_normalize(&a),
        Command::Conjugate(a) => cmd_conjugate(&a),
        Command::Fixedpoint(a) => cmd_fixedpoint(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("MORSENORM_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build_global();
        }
    }
}

struct Loaded {
    spec: ProblemSpec,
    bytes: Vec<u8>,
}

fn load(args: &CommonArgs) -> Result<Loaded, i32> {
    let bytes = match std::fs::read(&args.spec) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.spec.display());
            return Err(EXIT_SPEC);
        }
    };
    let file = match serde_json::from_slice(&bytes) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: invalid JSON in {}: {e}", args.spec.display());
            return Err(EXIT_SPEC);
        }
    };
    let mut spec = match ProblemSpec::from_file(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return Err(EXIT_SPEC);
        }
    };
    if let Some(order) = args.order {
        if order < 2 {
            eprintln!("error: --order must be ≥ 2");
            return Err(EXIT_SPEC);
        }
        spec.truncation_order = order;
    }
    Ok(Loaded { spec, bytes })
}

fn pipeline_exit(e: &PipelineError) -> i32 {
    match e {
        PipelineError::Spectrum(SpectrumError::DegenerateHessian { .. })
        | PipelineError::Spectrum(SpectrumError::ZeroEigenvalue)
        | PipelineError::NoCriticalPoint => EXIT_DEGENERATE,
        PipelineError::Problem(_) => EXIT_SPEC,
        _ => EXIT_DEGENERATE,
    }
}

fn finish(report: &RunReport, out: &Path) -> i32 {
    match report.write_to(out) {
        Ok(path) => {
            println!("report written to {}", path.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: cannot write report: {e}");
            EXIT_SPEC
        }
    }
}

fn cmd_analyze(args: &CommonArgs) -> i32 {
    let loaded = match load(args) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let mut report = RunReport::new("analyze", &loaded.spec, &loaded.bytes, args.seed);
    let t0 = Instant::now();
    let analysis = match pipeline::analyze(&loaded.spec) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return pipeline_exit(&e);
        }
    };
    report.time("analyze", ms(t0));
    report.spectrum = Some(crate::report::spectrum_json(
        &analysis.search,
        &analysis.center,
        &analysis.spectrum,
        &analysis.resonance,
        analysis.exact_lambda.is_some(),
    ));
    println!("critical points: {:?}", analysis.search.points);
    println!(
        "eigenvalues (descending): {:?}  morse index: {}",
        analysis.spectrum.eigenvalues, analysis.spectrum.morse_index
    );
    if analysis.resonance.satisfied {
        println!(
            "ℕ-linearity satisfied through order {}",
            analysis.resonance.scanned_order
        );
    } else {
        let listed: Vec<String> = analysis
            .resonance
            .witnesses
            .iter()
            .map(|w| format!("(a={:?}, component {})", w.exponents, w.component + 1))
            .collect();
        println!("ℕ-linearity fails; witnesses: {}", listed.join(", "));
    }
    finish(&report, &args.out)
}

fn cmd_normalize(args: &CommonArgs) -> i32 {
    let loaded = match load(args) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let mut report = RunReport::new("normalize", &loaded.spec, &loaded.bytes, args.seed);
    let t0 = Instant::now();
    let system = match pipeline::diagonalize(&loaded.spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return pipeline_exit(&e);
        }
    };
    report.time("diagonalize", ms(t0));
    report.spectrum = Some(crate::report::spectrum_json(
        &system.analysis.search,
        &system.analysis.center,
        &system.analysis.spectrum,
        &system.analysis.resonance,
        system.analysis.exact_lambda.is_some(),
    ));
    let t1 = Instant::now();
    let outcome = match pipeline::normalize(&loaded.spec, &system) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return pipeline_exit(&e);
        }
    };
    report.time("normalize", ms(t1));
    let json = outcome.to_json();
    let obstructed = !json.fully_normalized;
    println!(
        "normalization mode: {}; steps: {}; obstructions: {}",
        json.mode,
        json.steps.len(),
        json.obstructions.len()
    );
    report.normalization = Some(json);
    let code = finish(&report, &args.out);
    if code != EXIT_OK {
        return code;
    }
    if obstructed {
        println!("resonance obstructions remain; partial normalization written");
        EXIT_OBSTRUCTED
    } else {
        EXIT_OK
    }
}

/// Parse `lo:hi:steps[,lo:hi:steps…]` into per-dimension linspaces.
fn parse_grid(text: &str, n: usize) -> Result<Vec<Vec<f64>>, String> {
    let chunks: Vec<&str> = text.split(',').collect();
    let chunks: Vec<&str> = if chunks.len() == 1 && n > 1 {
        vec![chunks[0]; n]
    } else {
        chunks
    };
    if chunks.len() != n {
        return Err(format!(
            "grid has {} chunks but the problem has dimension {n}",
            chunks.len()
        ));
    }
    chunks
        .iter()
        .map(|c| {
            let parts: Vec<&str> = c.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("grid chunk {c:?} is not lo:hi:steps"));
            }
            let lo: f64 = parts[0].parse().map_err(|_| format!("bad lo in {c:?}"))?;
            let hi: f64 = parts[1].parse().map_err(|_| format!("bad hi in {c:?}"))?;
            let steps: usize = parts[2].parse().map_err(|_| format!("bad steps in {c:?}"))?;
            if steps == 0 || hi < lo {
                return Err(format!("grid chunk {c:?} is empty"));
            }
            Ok(if steps == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..steps)
                    .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                    .collect()
            })
        })
        .collect()
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for v in axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

fn default_grid(spec: &ProblemSpec) -> Vec<Vec<f64>> {
    let half = spec.bump_inner / 2.0;
    let axis: Vec<f64> = (0..9)
        .map(|i| -half + 2.0 * half * i as f64 / 8.0)
        .collect();
    cartesian(&vec![axis; spec.dimension])
}

fn grid_points(args: &CommonArgs, spec: &ProblemSpec) -> Result<Vec<Vec<f64>>, i32> {
    match &args.grid {
        None => Ok(default_grid(spec)),
        Some(text) => match parse_grid(text, spec.dimension) {
            Ok(axes) => Ok(cartesian(&axes)),
            Err(e) => {
                eprintln!("error: {e}");
                Err(EXIT_SPEC)
            }
        },
    }
}

fn cmd_conjugate(args: &CommonArgs) -> i32 {
    let loaded = match load(args) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let spec = &loaded.spec;
    if !["exit", "fixedpoint", "both"].contains(&args.method.as_str()) {
        eprintln!("error: --method must be exit, fixedpoint, or both");
        return EXIT_SPEC;
    }
    let mut report = RunReport::new("conjugate", spec, &loaded.bytes, args.seed);
    let system = match pipeline::diagonalize(spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return pipeline_exit(&e);
        }
    };
    report.spectrum = Some(crate::report::spectrum_json(
        &system.analysis.search,
        &system.analysis.center,
        &system.analysis.spectrum,
        &system.analysis.resonance,
        system.analysis.exact_lambda.is_some(),
    ));
    let field = pipeline::truncated_field(spec, &system);
    let points = match grid_points(args, spec) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let lambda = system.analysis.spectrum.eigenvalues.clone();
    let use_exit = args.method != "fixedpoint";
    let use_fp = args.method != "exit";
    let (delta, t_max, fp_params, fp_grid) = fp_setup(args, &field, &lambda);
    let ode_tol = spec.tolerances.ode;
    let s_values = [0.1, -0.1];

    let t0 = Instant::now();
    let rows: Vec<PhiRow> = points
        .par_iter()
        .map(|x| {
            let mut row = PhiRow {
                x: x.clone(),
                phi: None,
                fp_phi: None,
                conj_residual: None,
                cross_deviation: None,
            };
            if use_exit {
                if let Ok(phi) = conjugacy_phi(&field, x, ode_tol) {
                    // Conjugation-identity residual at small |s|.
                    let mut worst: f64 = 0.0;
                    let mut ok = true;
                    for &s in &s_values {
                        let (Ok(lhs), Ok(fx)) =
                            (flow_g(&field, &phi, s, ode_tol), flow_f(&lambda, x, s))
                        else {
                            ok = false;
                            break;
                        };
                        if norm2(&fx) >= field.bump().r_out {
                            continue;
                        }
                        let Ok(rhs) = conjugacy_phi(&field, &fx, ode_tol) else {
                            ok = false;
                            break;
                        };
                        worst = worst.max(
                            lhs.iter()
                                .zip(&rhs)
                                .map(|(a, b)| (a - b).abs())
                                .fold(0.0f64, f64::max),
                        );
                    }
                    row.phi = Some(phi);
                    if ok {
                        row.conj_residual = Some(worst);
                    }
                }
            }
            if use_fp {
                if let Ok((_, diag)) =
                    fixed_point_iterate(&field, x, fp_params, &fp_grid, 1e-12, 200)
                {
                    if diag.converged {
                        row.fp_phi = Some(diag.phi.clone());
                    }
                }
            }
            if let (Some(a), Some(b)) = (&row.phi, &row.fp_phi) {
                row.cross_deviation = Some(
                    a.iter()
                        .zip(b)
                        .map(|(u, v)| (u - v).abs())
                        .fold(0.0f64, f64::max),
                );
            }
            row
        })
        .collect();
    let elapsed = ms(t0);

    let failed = rows
        .iter()
        .filter(|r| (use_exit && r.phi.is_none()) || (use_fp && r.fp_phi.is_none()))
        .count();
    let residuals: Vec<f64> = rows.iter().filter_map(|r| r.conj_residual).collect();
    let cross: Vec<f64> = rows.iter().filter_map(|r| r.cross_deviation).collect();
    let flow_json = FlowJson {
        method: args.method.clone(),
        grid_points: rows.len(),
        failures: failed,
        conjugacy_residual_max: max_of(&residuals),
        conjugacy_residual_mean: mean_of(&residuals),
        cross_method_max_deviation: max_of(&cross),
        contraction: if use_fp {
            Some(ContractionJson {
                p: fp_params.p,
                k: fp_params.k,
                delta,
                delta_min: delta_min_heuristic(&field, fp_params.p),
                t_max,
                nodes: fp_grid.nodes,
                rho_max: 0.0,
                rho_mean: 0.0,
            })
        } else {
            None
        },
    };
    println!(
        "conjugacy over {} grid points in {elapsed:.1} ms; failures: {failed}; max residual: {:?}",
        rows.len(),
        flow_json.conjugacy_residual_max
    );
    report.flow = Some(flow_json);
    report.time("conjugate", elapsed);
    match crate::report::write_phi_map(&args.out, spec.dimension, &rows) {
        Ok(path) => println!("map written to {}", path.display()),
        Err(e) => {
            eprintln!("error: cannot write phi map: {e}");
            return EXIT_SPEC;
        }
    }
    let code = finish(&report, &args.out);
    if code != EXIT_OK {
        return code;
    }
    if failed * 100 > rows.len() {
        eprintln!("error: {failed} of {} grid points failed to integrate", rows.len());
        EXIT_INTEGRATION
    } else {
        EXIT_OK
    }
}

fn fp_setup(
    args: &CommonArgs,
    field: &crate::flow::TruncatedField,
    lambda: &[f64],
) -> (f64, f64, WeightedNormParams, GridSpec) {
    let delta = args
        .delta
        .unwrap_or_else(|| delta_min_heuristic(field, args.p));
    let min_rate = lambda.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let t_max = args
        .tmax
        .unwrap_or_else(|| (12.0 / min_rate).min(650.0 / (delta * args.p)));
    let params = WeightedNormParams::new(args.p, args.k, delta);
    let grid = GridSpec {
        t_max,
        nodes: 4000,
        grading: 2.0,
    };
    (delta, t_max, params, grid)
}

fn cmd_fixedpoint(args: &CommonArgs) -> i32 {
    let loaded = match load(args) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let spec = &loaded.spec;
    let mut report = RunReport::new("fixedpoint", spec, &loaded.bytes, args.seed);
    let system = match pipeline::diagonalize(spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return pipeline_exit(&e);
        }
    };
    report.spectrum = Some(crate::report::spectrum_json(
        &system.analysis.search,
        &system.analysis.center,
        &system.analysis.spectrum,
        &system.analysis.resonance,
        system.analysis.exact_lambda.is_some(),
    ));
    let field = pipeline::truncated_field(spec, &system);
    let lambda = system.analysis.spectrum.eigenvalues.clone();
    let points = match grid_points(args, spec) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let (delta, t_max, params, grid) = fp_setup(args, &field, &lambda);
    let t0 = Instant::now();
    let runs: Vec<_> = points
        .par_iter()
        .map(|x| fixed_point_iterate(&field, x, params, &grid, 1e-12, 200))
        .collect();
    let elapsed = ms(t0);
    let mut rhos = Vec::new();
    let mut failed = 0usize;
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    for (x, run) in points.iter().zip(&runs) {
        match run {
            Ok((traj, diag)) => {
                if let Some(rho) = diag.contraction_estimate() {
                    rhos.push(rho);
                }
                rows.push(PhiRow {
                    x: x.clone(),
                    phi: None,
                    fp_phi: Some(diag.phi.clone()),
                    conj_residual: None,
                    cross_deviation: None,
                });
                if trajectories.len() < 4 {
                    trajectories.push((traj.t_nodes().to_vec(), traj.values().to_vec()));
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("point {x:?}: {e}");
                rows.push(PhiRow {
                    x: x.clone(),
                    phi: None,
                    fp_phi: None,
                    conj_residual: None,
                    cross_deviation: None,
                });
            }
        }
    }
    let rho_max = max_of(&rhos).unwrap_or(f64::NAN);
    let rho_mean = mean_of(&rhos).unwrap_or(f64::NAN);
    println!(
        "fixed-point runs: {}; failures: {failed}; measured ρ max {rho_max:.4}, mean {rho_mean:.4} at δ = {delta:.3}",
        points.len()
    );
    report.flow = Some(FlowJson {
        method: "fixedpoint".into(),
        grid_points: points.len(),
        failures: failed,
        conjugacy_residual_max: None,
        conjugacy_residual_mean: None,
        cross_method_max_deviation: None,
        contraction: Some(ContractionJson {
            p: params.p,
            k: params.k,
            delta,
            delta_min: delta_min_heuristic(&field, params.p),
            t_max,
            nodes: grid.nodes,
            rho_max,
            rho_mean,
        }),
    });
    report.time("fixedpoint", elapsed);
    if let Err(e) = crate::report::write_phi_map(&args.out, spec.dimension, &rows) {
        eprintln!("error: cannot write phi map: {e}");
        return EXIT_SPEC;
    }
    for (idx, (t, values)) in trajectories.iter().enumerate() {
        if let Err(e) = crate::report::write_trajectory(&args.out, idx, t, values) {
            eprintln!("error: cannot write trajectory: {e}");
            return EXIT_SPEC;
        }
    }
    let code = finish(&report, &args.out);
    if code != EXIT_OK {
        return code;
    }
    if failed * 100 > points.len() {
        EXIT_INTEGRATION
    } else {
        EXIT_OK
    }
}

fn cmd_verify(args: &CommonArgs) -> i32 {
    let loaded = match load(args) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let mut report = RunReport::new("verify", &loaded.spec, &loaded.bytes, args.seed);
    let t0 = Instant::now();
    let results = run_battery(&loaded.spec, args.seed);
    report.time("verify", ms(t0));
    let mut all_ok = true;
    for r in &results {
        println!("{}", r.line());
        if matches!(r.status, Status::Fail(_)) {
            all_ok = false;
        }
    }
    report.invariants = Some(results.iter().map(|r| r.to_json()).collect());
    let code = finish(&report, &args.out);
    if code != EXIT_OK {
        return code;
    }
    if all_ok {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAIL
    }
}

fn ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

fn max_of(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)))
    }
}

fn mean_of(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}
