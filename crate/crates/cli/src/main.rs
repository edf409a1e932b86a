//! Command-line front end: problem ingestion, synthesis orchestration,
//! standalone certificate verification, closed-loop simulation, and mesh
//! generation. Every figure is written next to the CSV of its data; all
//! randomness is seeded, so identical invocations produce identical files.

mod svg;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use pwa_synth_core::cpa::{self, ScalarField, SublevelSet};
use pwa_synth_core::mesh::{self, SizeField, Triangulation};
use pwa_synth_core::model::{self, has_errors, CostKind, Finding, InitKind, PwaSystem, Severity, SynthOptions};
use pwa_synth_core::runtime::{self, Controller, SimOptions, SimOutcome};
use pwa_synth_core::synth::{self, SynthError, SynthResult};
use pwa_synth_core::{RK4_H, TOL_CERT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pwa-synth",
    version,
    about = "CPA Lyapunov function and controller synthesis for piecewise-affine systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a certified controller, Lyapunov function, and invariant region
    Synth(SynthArgs),
    /// Re-verify a result file against its problem, solver-free
    Verify(VerifyArgs),
    /// Simulate the closed loop from given or sampled initial states
    Simulate(SimulateArgs),
    /// Generate and refine a mesh without synthesizing
    Mesh(MeshArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Lqr,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    U2,
    U1,
    B1,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Cpa,
    Minnorm,
}

#[derive(Args)]
struct SynthArgs {
    /// Problem description JSON
    #[arg(long)]
    problem: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Phase-1 decay-rate target
    #[arg(long = "b2-target")]
    b2_target: Option<f64>,
    /// Mesh size shrink factor per refinement round
    #[arg(long)]
    gamma: Option<f64>,
    /// Initial mesh size
    #[arg(long)]
    rho0: Option<f64>,
    /// Minimum mesh size before giving up
    #[arg(long = "rho-min")]
    rho_min: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Phase-2 control cost
    #[arg(long, value_enum)]
    cost: Option<CostArg>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Problem description JSON
    #[arg(long)]
    problem: PathBuf,
    /// Result file to re-verify
    #[arg(long)]
    result: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Problem description JSON
    #[arg(long)]
    problem: PathBuf,
    /// Certified result file
    #[arg(long)]
    result: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "cpa")]
    controller: ControllerArg,
    /// Initial state as comma-separated coordinates; repeatable
    #[arg(long = "x0", allow_hyphen_values = true)]
    x0: Vec<String>,
    /// Number of initial states to sample from the invariant region when no
    /// explicit x0 is given
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step
    #[arg(long)]
    h: Option<f64>,
    /// Simulation horizon in seconds
    #[arg(long)]
    tmax: Option<f64>,
}

#[derive(Args)]
struct MeshArgs {
    /// Problem description JSON
    #[arg(long)]
    problem: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Mesh size
    #[arg(long)]
    rho0: Option<f64>,
    /// Shrink factor per refinement round
    #[arg(long)]
    gamma: Option<f64>,
    /// Minimum admissible mesh size
    #[arg(long = "rho-min")]
    rho_min: Option<f64>,
    /// Global refinement rounds to apply after generation
    #[arg(long, default_value_t = 0)]
    rounds: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Mesh(args) => cmd_mesh(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn print_findings(findings: &[Finding]) {
    for f in findings {
        let tag = match f.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        eprintln!("{tag}: {}", f.message);
    }
}

fn load_problem_or_fail(path: &Path) -> Result<Option<(PwaSystem, SynthOptions)>> {
    match model::load_problem(path) {
        Ok(loaded) => Ok(Some(loaded)),
        Err(e) => {
            eprintln!("problem file: {e}");
            Ok(None)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<u8> {
    let Some((sys, mut opts)) = load_problem_or_fail(&args.problem)? else {
        return Ok(1);
    };
    let findings = sys.validate();
    print_findings(&findings);
    if has_errors(&findings) {
        return Ok(1);
    }
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    if let Some(t) = args.b2_target {
        opts.b2_target = t;
    }
    if let Some(g) = args.gamma {
        opts.gamma = g;
    }
    if let Some(r) = args.rho0 {
        opts.rho0 = r;
    }
    if let Some(r) = args.rho_min {
        opts.rho_min = r;
    }
    if let Some(init) = args.init {
        opts.init = match init {
            InitArg::Random => InitKind::Random,
            InitArg::Lqr => InitKind::Lqr,
        };
    }
    if let Some(cost) = args.cost {
        opts.cost = match cost {
            CostArg::U2 => CostKind::U2,
            CostArg::U1 => CostKind::U1,
            CostArg::B1 => CostKind::B1,
        };
    }

    let result = match synth::synthesize_with_refinement(&sys, &opts) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("synthesis: {e}");
            return Ok(match e {
                SynthError::NotStabilizable(_) | SynthError::NoOriginMode => 2,
                SynthError::Conic(_) => 3,
                _ => 1,
            });
        }
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_synth_outputs(&args.out, &sys, &result)?;

    let state = &result.state;
    println!(
        "b2 = {:.6}, b1 = {:.6}, r = {:.6}, {} simplexes, {} iterations, termination {:?}",
        state.b2,
        state.b1,
        result.roa_level(),
        state.mesh.num_simplexes(),
        result.history.len(),
        result.termination
    );
    for round in &result.rounds {
        println!(
            "  mesh size {:.3}: {} simplexes, b2 = {:.6}, certified = {}",
            round.rho, round.simplexes, round.b2, round.certified
        );
    }
    println!("wrote {}", args.out.join("result.json").display());

    let certified = result.success() && state.b2 > 0.0 && result.cert.ok;
    if certified {
        Ok(0)
    } else if result.history.iter().any(|h| h.status != "optimal") {
        Ok(3)
    } else {
        Ok(2)
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let Some((sys, _)) = load_problem_or_fail(&args.problem)? else {
        return Ok(1);
    };
    let text = match fs::read_to_string(&args.result) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("result file {}: {e}", args.result.display());
            return Ok(1);
        }
    };
    let saved = match synth::result_from_json(&text) {
        Ok(saved) => saved,
        Err(e) => {
            eprintln!("result file: {e}");
            return Ok(1);
        }
    };

    let report = synth::verify_certificate(&saved.state, &sys, TOL_CERT);
    for entry in &report.entries {
        let location = match entry.pair {
            Some((i, j)) => format!("  (worst at simplex {i}, vertex {j})"),
            None => String::new(),
        };
        println!("{:<16} violation {v:+.3e}{location}", entry.name, v = entry.violation);
    }

    let mut ok = report.ok;
    if saved.r > 0.0 {
        match cpa::max_invariant_level(&saved.state.v) {
            Ok((level, _)) => {
                let admissible = saved.r <= level * (1.0 + 1e-9);
                println!(
                    "roa level {:.6} against maximum admissible {:.6}: {}",
                    saved.r,
                    level,
                    if admissible { "ok" } else { "VIOLATED" }
                );
                ok = ok && admissible;
            }
            Err(e) => {
                println!("roa level check failed: {e}");
                ok = false;
            }
        }
    }

    if ok {
        println!("certificate ok (max violation {:+.3e})", report.max_violation);
        Ok(0)
    } else {
        let worst = report
            .entries
            .iter()
            .max_by(|a, b| a.violation.total_cmp(&b.violation))
            .expect("report has entries");
        match worst.pair {
            Some((i, j)) => println!(
                "certificate VIOLATED: {} at simplex {i}, vertex {j} ({:+.3e})",
                worst.name, worst.violation
            ),
            None => println!("certificate VIOLATED: {} ({:+.3e})", worst.name, worst.violation),
        }
        Ok(1)
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let Some((sys, file_opts)) = load_problem_or_fail(&args.problem)? else {
        return Ok(1);
    };
    let text = match fs::read_to_string(&args.result) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("result file {}: {e}", args.result.display());
            return Ok(1);
        }
    };
    let saved = match synth::result_from_json(&text) {
        Ok(saved) => saved,
        Err(e) => {
            eprintln!("result file: {e}");
            return Ok(1);
        }
    };
    let state = &saved.state;
    if state.b2 <= 0.0 || saved.r <= 0.0 {
        eprintln!(
            "result is not certified (b2 = {}, r = {}); nothing to simulate",
            state.b2, saved.r
        );
        return Ok(1);
    }

    let v = &state.v;
    let roa = cpa::sublevel(v, saved.r)?;
    let ctrl = match args.controller {
        ControllerArg::Cpa => Controller::Cpa(state.u.clone()),
        ControllerArg::Minnorm => Controller::min_norm(v.clone(), state.b2, sys.m),
    };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    for spec in &args.x0 {
        starts.push(parse_x0(spec, sys.n)?);
    }
    if starts.is_empty() {
        let n = args.n.unwrap_or(9);
        let seed = args.seed.unwrap_or(file_opts.seed);
        starts = sample_in_roa(v, &roa, n, seed)?;
    }
    for x0 in &starts {
        let inside = !v.mesh.locate(x0).is_empty()
            && v.eval(x0).map(|val| val <= saved.r * (1.0 + 1e-9)).unwrap_or(false);
        if !inside {
            eprintln!(
                "initial state [{}] lies outside the invariant region (V <= {:.6})",
                x0.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(", "),
                saved.r
            );
            return Ok(1);
        }
    }

    let horizon = args.tmax.unwrap_or_else(|| {
        let target = state.b1 * 0.01f64.powf(state.a);
        ((saved.r / target).ln() / state.b2 * 1.2).clamp(1.0, 600.0)
    });
    let sim = SimOptions {
        h: args.h.unwrap_or(RK4_H),
        t_max: horizon,
        ..Default::default()
    };

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut table = String::from("run,x0_1,x0_2,outcome,settling_time,input_energy\n");
    let mut trajectories = Vec::new();
    println!("{:<4} {:<22} {:<14} {:>14} {:>14}", "run", "x0", "outcome", "settling [s]", "energy");
    for (k, x0) in starts.iter().enumerate() {
        let traj = runtime::simulate(&sys, &ctrl, Some(v), x0, &sim)?;
        let energy: f64 = traj.inputs.iter().map(|u| u.norm_squared() * sim.h).sum();
        write_trajectory_csv(&args.out.join(format!("traj_{k}.csv")), &traj)?;
        let outcome = outcome_name(traj.outcome);
        let settle = traj.settling_time.map(|t| format!("{t:.3}")).unwrap_or_default();
        let _ = writeln!(
            table,
            "{k},{},{},{outcome},{settle},{energy}",
            x0[0], x0[1]
        );
        println!(
            "{k:<4} ({:+.3}, {:+.3})       {outcome:<14} {:>14} {energy:>14.6}",
            x0[0],
            x0[1],
            if settle.is_empty() { "-".to_string() } else { settle.clone() }
        );
        trajectories.push(traj);
    }
    fs::write(args.out.join("settling.csv"), table)?;

    let phase = render_phase_svg(&sys, state.mesh.as_ref(), Some((&roa, v)), &trajectories);
    fs::write(args.out.join("phase.svg"), phase)?;
    println!("wrote {}", args.out.join("settling.csv").display());
    Ok(0)
}

fn cmd_mesh(args: MeshArgs) -> Result<u8> {
    let Some((sys, opts)) = load_problem_or_fail(&args.problem)? else {
        return Ok(1);
    };
    let findings = sys.validate();
    print_findings(&findings);
    if has_errors(&findings) {
        return Ok(1);
    }
    let rho0 = args.rho0.unwrap_or(opts.rho0);
    let gamma = args.gamma.unwrap_or(opts.gamma);
    let rho_min = args.rho_min.unwrap_or(opts.rho_min);

    let mut tri = mesh::triangulate(&sys, &SizeField::constant(rho0))
        .with_context(|| format!("triangulating at size {rho0}"))?;
    let mut ok = report_mesh(&tri, &sys, rho0);
    let mut rho = rho0;
    for _ in 0..args.rounds {
        rho *= gamma;
        tri = mesh::refine_global(&tri, &sys, gamma, rho_min)
            .with_context(|| format!("refining to size {rho}"))?;
        ok &= report_mesh(&tri, &sys, rho);
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("mesh.json"), mesh::mesh_to_json(&tri))?;
    write_mesh_figure(&args.out, &sys, &tri)?;
    println!("wrote {}", args.out.join("mesh.json").display());
    Ok(if ok { 0 } else { 1 })
}

fn report_mesh(tri: &Triangulation, sys: &PwaSystem, rho: f64) -> bool {
    let findings = mesh::validate_mesh(tri, sys);
    print_findings(&findings);
    let ok = !has_errors(&findings);
    println!(
        "size {rho:.3}: {} vertices, {} simplexes, validation {}",
        tri.num_vertices(),
        tri.num_simplexes(),
        if ok { "ok" } else { "FAILED" }
    );
    ok
}

fn parse_x0(spec: &str, n: usize) -> Result<DVector<f64>> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing initial state {spec:?}"))?;
    if parts.len() != n {
        bail!("initial state {spec:?} has {} coordinates, the system has n = {n}", parts.len());
    }
    Ok(DVector::from_vec(parts))
}

fn sample_in_roa(
    v: &ScalarField,
    roa: &SublevelSet,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for piece in &roa.pieces {
        for p in &piece.polygon {
            bbox[0] = bbox[0].min(p[0]);
            bbox[1] = bbox[1].min(p[1]);
            bbox[2] = bbox[2].max(p[0]);
            bbox[3] = bbox[3].max(p[1]);
        }
    }
    if !bbox.iter().all(|c| c.is_finite()) {
        bail!("invariant region is empty, cannot sample initial states");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(n);
    while starts.len() < n {
        let cand = DVector::from_vec(vec![
            rng.gen_range(bbox[0]..bbox[2]),
            rng.gen_range(bbox[1]..bbox[3]),
        ]);
        if v.mesh.locate(&cand).is_empty() {
            continue;
        }
        if v.eval(&cand)? <= roa.r * (1.0 - 1e-6) {
            starts.push(cand);
        }
    }
    Ok(starts)
}

fn outcome_name(outcome: SimOutcome) -> &'static str {
    match outcome {
        SimOutcome::Settled => "settled",
        SimOutcome::EscapedDomain => "escaped-domain",
        SimOutcome::TimeLimit => "time-limit",
    }
}

fn write_trajectory_csv(path: &Path, traj: &runtime::Trajectory) -> Result<()> {
    let n = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let m = traj.inputs.first().map(|u| u.len()).unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",u{i}");
    }
    out.push_str(",V\n");
    for k in 0..traj.times.len() {
        let _ = write!(out, "{}", traj.times[k]);
        for c in traj.states[k].iter() {
            let _ = write!(out, ",{c}");
        }
        for c in traj.inputs[k].iter() {
            let _ = write!(out, ",{c}");
        }
        match traj.v_values.as_ref() {
            Some(vals) => {
                let _ = writeln!(out, ",{}", vals[k]);
            }
            None => {
                let _ = writeln!(out, ",");
            }
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn mesh_edges(tri: &Triangulation) -> Vec<([f64; 2], [f64; 2])> {
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for s in &tri.simplexes {
        for a in 0..s.vertices.len() {
            for b in a + 1..s.vertices.len() {
                let key = (s.vertices[a].min(s.vertices[b]), s.vertices[a].max(s.vertices[b]));
                if seen.insert(key) {
                    let p = &tri.vertices[key.0];
                    let q = &tri.vertices[key.1];
                    edges.push(([p[0], p[1]], [q[0], q[1]]));
                }
            }
        }
    }
    edges
}

fn domain_bbox(sys: &PwaSystem) -> [f64; 4] {
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let polygons = sys
        .modes
        .iter()
        .filter_map(|m| m.region.polygon.as_ref())
        .chain(sys.domain.polygon.as_ref());
    for poly in polygons {
        for p in poly {
            bbox[0] = bbox[0].min(p[0]);
            bbox[1] = bbox[1].min(p[1]);
            bbox[2] = bbox[2].max(p[0]);
            bbox[3] = bbox[3].max(p[1]);
        }
    }
    bbox
}

fn draw_regions(canvas: &mut svg::Canvas, sys: &PwaSystem, fill: &str) {
    if let Some(poly) = sys.domain.polygon.as_ref() {
        canvas.polygon(poly, "#2e7d32", 1.5, fill);
    }
    for mode in &sys.modes {
        if let Some(poly) = mode.region.polygon.as_ref() {
            canvas.polygon(poly, "#2e7d32", 0.8, "none");
        }
    }
}

fn draw_roa(canvas: &mut svg::Canvas, roa: &SublevelSet, v: &ScalarField) {
    for piece in &roa.pieces {
        canvas.polygon(&piece.polygon, "none", 0.0, "#c9ddf2");
    }
    let tol = 1e-7 * roa.r.max(1.0);
    for piece in &roa.pieces {
        let poly = &piece.polygon;
        let on_level: Vec<bool> = poly
            .iter()
            .map(|p| {
                let val = v.eval_on(piece.simplex, &DVector::from_vec(vec![p[0], p[1]]));
                (val - roa.r).abs() <= tol
            })
            .collect();
        for k in 0..poly.len() {
            if on_level[k] && on_level[(k + 1) % poly.len()] {
                canvas.segment(poly[k], poly[(k + 1) % poly.len()], "#1455b4", 2.0);
            }
        }
    }
}

fn render_mesh_svg(sys: &PwaSystem, tri: &Triangulation) -> String {
    let mut canvas = svg::Canvas::new(domain_bbox(sys), 640.0);
    draw_regions(&mut canvas, sys, "#eef5ee");
    for (a, b) in mesh_edges(tri) {
        canvas.segment(a, b, "#9a9a9a", 0.8);
    }
    canvas.circle([0.0, 0.0], 3.0, "#c62828");
    canvas.finish()
}

fn render_phase_svg(
    sys: &PwaSystem,
    tri: &Triangulation,
    roa: Option<(&SublevelSet, &ScalarField)>,
    trajectories: &[runtime::Trajectory],
) -> String {
    let mut canvas = svg::Canvas::new(domain_bbox(sys), 640.0);
    draw_regions(&mut canvas, sys, "#eef5ee");
    for (a, b) in mesh_edges(tri) {
        canvas.segment(a, b, "#d5d5d5", 0.5);
    }
    if let Some((roa, v)) = roa {
        draw_roa(&mut canvas, roa, v);
    }
    let palette = ["#c62828", "#6a1b9a", "#ef6c00", "#00695c", "#283593", "#4e342e"];
    for (k, traj) in trajectories.iter().enumerate() {
        let points: Vec<[f64; 2]> = traj.states.iter().map(|s| [s[0], s[1]]).collect();
        let color = palette[k % palette.len()];
        canvas.polyline(&points, color, 1.2);
        if let Some(first) = points.first() {
            canvas.circle(*first, 2.5, color);
        }
    }
    canvas.circle([0.0, 0.0], 3.0, "#000000");
    canvas.finish()
}

fn render_b2_svg(history: &[synth::HistoryRecord]) -> String {
    if history.is_empty() {
        return svg::Canvas::new([0.0, 0.0, 1.0, 1.0], 640.0).finish();
    }
    let lo = history.iter().map(|h| h.b2).fold(f64::INFINITY, f64::min);
    let hi = history.iter().map(|h| h.b2).fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let iters = history.len() as f64;
    let mut canvas =
        svg::Canvas::new([0.0, lo - 0.08 * span, iters.max(1.0), hi + 0.08 * span], 640.0);
    canvas.segment([0.0, 0.0], [iters, 0.0], "#bbbbbb", 0.8);
    let points: Vec<[f64; 2]> = history
        .iter()
        .enumerate()
        .map(|(k, h)| [(k + 1) as f64, h.b2])
        .collect();
    canvas.polyline(&points, "#1455b4", 1.6);
    canvas.text([0.2, hi], &format!("b2 max {hi:.4}"));
    canvas.text([0.2, lo + 0.02 * span], &format!("b2 min {lo:.4}"));
    canvas.finish()
}

fn write_mesh_figure(dir: &Path, sys: &PwaSystem, tri: &Triangulation) -> Result<()> {
    let mut edges_csv = String::from("x1,y1,x2,y2\n");
    for (a, b) in mesh_edges(tri) {
        let _ = writeln!(edges_csv, "{},{},{},{}", a[0], a[1], b[0], b[1]);
    }
    fs::write(dir.join("edges.csv"), edges_csv)?;
    fs::write(dir.join("mesh.svg"), render_mesh_svg(sys, tri))?;
    Ok(())
}

fn write_synth_outputs(dir: &Path, sys: &PwaSystem, result: &SynthResult) -> Result<()> {
    fs::write(dir.join("result.json"), synth::result_to_json(result))?;
    fs::write(dir.join("mesh.json"), mesh::mesh_to_json(&result.state.mesh))?;

    let mut history_csv = String::from("iter,b2,J,wall_ms,status\n");
    for h in &result.history {
        let _ = writeln!(history_csv, "{},{},{},{:.3},{}", h.iter, h.b2, h.j, h.wall_ms, h.status);
    }
    fs::write(dir.join("history.csv"), history_csv)?;

    write_mesh_figure(dir, sys, &result.state.mesh)?;
    fs::write(dir.join("b2.svg"), render_b2_svg(&result.history))?;

    if let Some((_, roa)) = result.roa.as_ref() {
        let mut roa_csv = String::from("simplex,x,y\n");
        for piece in &roa.pieces {
            for p in &piece.polygon {
                let _ = writeln!(roa_csv, "{},{},{}", piece.simplex, p[0], p[1]);
            }
        }
        fs::write(dir.join("roa.csv"), roa_csv)?;
        let phase =
            render_phase_svg(sys, result.state.mesh.as_ref(), Some((roa, &result.state.v)), &[]);
        fs::write(dir.join("roa.svg"), phase)?;
    }
    Ok(())
}
