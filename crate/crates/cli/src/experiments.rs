//! One function per subcommand. Each builds the problem, runs the solver and
//! writes its artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qce_core::envelope1d::qce_line;
use qce_core::operators::StencilPlan;
use qce_core::solver::line_sweep_round;
use qce_core::verify::{
    comparison_fuzz, consistency_sweep, ellipticity_fuzz, euler_monotonicity_fuzz, noncontact_audit,
    qc_along_stencil, random_quadratics, residual_audit, sandwich_audit, CheckReport,
};
use qce_core::{
    solve as run_solver, Acceleration, Grid, GridFunction, Init, Obstacle, SchemeKind, SchemeParams, SolveReport,
    SolverConfig, StencilSet,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::{AccelArg, Common, ConsistencyArgs, Failure, InitArg, Outcome, RobustArgs, VerifyArgs};

type Run = Result<Outcome, Failure>;

/// Discretization conventions, recorded in every artifact.
const SCHEME_NOTES: [&str; 6] = [
    "directions: gcd-reduced grid vectors with entries in [-W, W], one per antipodal pair",
    "first difference: max of (u(x+a) - u(x))/|a| over the two arms",
    "second difference: three-point formula on unequal arms; arms are clipped at the domain boundary, where g is read",
    "operator: G[u] = max(u - g, eps - min_v(|D_v u|/eps + D_vv u)); update u <- u - delta*G[u]",
    "step: delta = 1/K with K = 1/(eps*h) + 2/h^2",
    "stopping: sup-norm update <= tol*delta",
];

/// Iteration cap used by eps-sweep when none is given: small ε shrinks δ like εh.
const SWEEP_MAX_ITER: usize = 20_000_000;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

/// The obstacle, where it came from and its domain.
struct Problem {
    name: String,
    source: Option<PathBuf>,
    obstacle: Obstacle,
    lo: f64,
    hi: f64,
    native_n: Option<usize>,
}

impl Problem {
    fn from_args(args: &Common, default: Option<&str>) -> Result<Self, Failure> {
        if let Some(path) = &args.obstacle_csv {
            let dump = GridFunction::load_csv(path)?;
            let grid = *dump.grid();
            let name = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
            return Ok(Self {
                obstacle: Obstacle::from_grid_function(name.clone(), dump),
                name,
                source: Some(path.clone()),
                lo: grid.lo(),
                hi: grid.hi(),
                native_n: Some(grid.n()),
            });
        }
        let Some(name) = args.example.as_deref().or(default) else {
            return usage("one of --example or --obstacle-csv is required");
        };
        Ok(Self {
            obstacle: Obstacle::by_name(name)?,
            name: name.to_string(),
            source: None,
            lo: -1.0,
            hi: 1.0,
            native_n: None,
        })
    }

    fn dim(&self) -> usize {
        self.obstacle.dim()
    }

    fn grid(&self, n: usize) -> Result<Grid, Failure> {
        Ok(Grid::with_bounds(self.dim(), n, self.lo, self.hi)?)
    }

    fn default_n(&self) -> usize {
        self.native_n.unwrap_or(if self.dim() == 1 { 201 } else { 64 })
    }

    fn default_width(&self) -> usize {
        if self.dim() == 1 {
            1
        } else {
            2
        }
    }
}

/// Everything needed to reproduce one solve.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    command: &'static str,
    example: String,
    obstacle_csv: Option<String>,
    dim: usize,
    n: usize,
    lo: f64,
    hi: f64,
    h: f64,
    width: usize,
    epsilon: f64,
    scheme: String,
    tol: f64,
    max_iter: usize,
    init: &'static str,
    accel: &'static str,
    step: Option<f64>,
}

impl RunConfig {
    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            init: if self.init == "obstacle" { Init::Obstacle } else { Init::ConstantMin },
            accel: if self.accel == "line" { Acceleration::LineSweep } else { Acceleration::None },
            step_override: self.step,
            scheme: SchemeKind::Full,
        }
    }

    fn metadata(&self) -> Vec<String> {
        let mut lines = Vec::new();
        if let Value::Object(map) = serde_json::to_value(self).expect("config serializes") {
            for (k, v) in map {
                lines.push(format!("{k}={v}"));
            }
        }
        lines.extend(SCHEME_NOTES.iter().map(|s| format!("scheme: {s}")));
        lines
    }
}

fn scheme_label(kind: SchemeKind) -> String {
    match kind {
        SchemeKind::Full => "full".into(),
        SchemeKind::FirstOrder => "first-order".into(),
        SchemeKind::Robust { eps_r } => format!("robust(eps_r={eps_r})"),
    }
}

/// Builds the run configuration for one grid size and one ε.
fn configure(
    command: &'static str,
    args: &Common,
    problem: &Problem,
    n: usize,
    eps: Option<f64>,
    width: Option<usize>,
    default_init: InitArg,
) -> Result<(RunConfig, Grid), Failure> {
    let grid = problem.grid(n)?;
    let epsilon = eps.unwrap_or(grid.h() / 2.0);
    let defaults = SolverConfig::for_dim(problem.dim());
    let init = args.init.unwrap_or(default_init);
    let config = RunConfig {
        command,
        example: problem.name.clone(),
        obstacle_csv: problem.source.as_ref().map(|p| p.display().to_string()),
        dim: problem.dim(),
        n,
        lo: problem.lo,
        hi: problem.hi,
        h: grid.h(),
        width: width.or(args.width).unwrap_or(problem.default_width()),
        epsilon,
        scheme: scheme_label(SchemeKind::Full),
        tol: args.tol,
        max_iter: args.max_iter.unwrap_or(defaults.max_iter),
        init: if init == InitArg::Obstacle { "obstacle" } else { "min" },
        accel: if args.accel == AccelArg::Line { "line" } else { "none" },
        step: args.step,
    };
    Ok((config, grid))
}

fn params(problem: &Problem, config: &RunConfig) -> Result<SchemeParams, Failure> {
    let stencil = StencilSet::new(problem.dim(), config.width)?;
    Ok(SchemeParams::new(config.epsilon, stencil, problem.obstacle.clone())?)
}

fn single<T: Copy>(values: &[T], flag: &str) -> Result<Option<T>, Failure> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => usage(format!("{flag} takes a single value for this command")),
    }
}

fn out_dir(path: &Path) -> Result<&Path, Failure> {
    fs::create_dir_all(path)?;
    Ok(path)
}

fn report_json(config: &RunConfig, report: &SolveReport) -> Result<Value, Failure> {
    let mut doc = match serde_json::to_value(report)? {
        Value::Object(map) => map,
        _ => Map::new(),
    };
    doc.insert("config".into(), serde_json::to_value(config)?);
    doc.insert("scheme_notes".into(), json!(SCHEME_NOTES));
    Ok(Value::Object(doc))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// A CSV table preceded by `#` metadata lines.
fn write_table<S: Serialize>(path: &Path, metadata: &[String], rows: &[S]) -> Result<(), Failure> {
    let mut file = BufWriter::new(File::create(path)?);
    for line in metadata {
        writeln!(file, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Solves and writes `<stem>.csv` and `<stem>_report.json`.
fn solve_and_save(
    problem: &Problem,
    config: &RunConfig,
    grid: &Grid,
    scheme: SchemeKind,
    dir: &Path,
    stem: &str,
) -> Result<(GridFunction, SolveReport), Failure> {
    let config = RunConfig {
        scheme: scheme_label(scheme),
        ..config.clone()
    };
    let solver_config = SolverConfig {
        scheme,
        ..config.solver_config()
    };
    let (u, report) = run_solver(grid, &params(problem, &config)?, &solver_config)?;
    u.save_csv(&dir.join(format!("{stem}.csv")), &config.metadata())?;
    write_json(&dir.join(format!("{stem}_report.json")), &report_json(&config, &report)?)?;
    println!(
        "{stem}: {} N={} W={} eps={} {}: {} after {} iterations",
        config.example,
        config.n,
        config.width,
        config.epsilon,
        config.scheme,
        if report.converged { "converged" } else { "not converged" },
        report.iterations
    );
    Ok((u, report))
}

fn outcome(converged: bool) -> Outcome {
    if converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    }
}

pub fn solve(args: &Common) -> Run {
    let problem = Problem::from_args(args, None)?;
    let n = single(&args.n, "--n")?.unwrap_or(problem.default_n());
    let eps = single(&args.eps, "--eps")?;
    let (config, grid) = configure("solve", args, &problem, n, eps, None, InitArg::Min)?;
    let dir = out_dir(&args.out)?;
    let (_, report) = solve_and_save(&problem, &config, &grid, SchemeKind::Full, dir, "solution")?;
    Ok(outcome(report.converged))
}

/// Line-sweep envelope of the sampled obstacle: exact in 1D, iterated to a
/// fixed point along the stencil lines in 2D.
fn line_envelope(g: &GridFunction, stencil: &StencilSet) -> GridFunction {
    if g.grid().dim() == 1 {
        let values = qce_line(g.values());
        return GridFunction::new(*g.grid(), values).expect("same grid");
    }
    let mut u = g.clone();
    for _ in 0..10_000 {
        let next = line_sweep_round(&u, stencil);
        let change = next.sup_distance(&u);
        u = next;
        if change <= 1e-14 {
            break;
        }
    }
    u
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    iterations: usize,
    converged: bool,
    sup_distance_to_qce: f64,
    max_excess_over_qce: f64,
}

pub fn eps_sweep(args: &Common) -> Run {
    let problem = Problem::from_args(args, None)?;
    let n = single(&args.n, "--n")?.unwrap_or(problem.default_n());
    let eps_list = if args.eps.is_empty() { vec![0.2, 0.1, 0.05, 1e-3, 1e-4] } else { args.eps.clone() };
    let capped = Common {
        max_iter: Some(args.max_iter.unwrap_or(SWEEP_MAX_ITER)),
        ..args.clone()
    };
    let dir = out_dir(&args.out)?;
    let mut rows = Vec::new();
    let mut base = None;
    let mut all_converged = true;
    for &eps in &eps_list {
        let (config, grid) = configure("eps-sweep", &capped, &problem, n, Some(eps), None, InitArg::Min)?;
        let stem = format!("u_eps_{eps}");
        let (u, report) = solve_and_save(&problem, &config, &grid, SchemeKind::Full, dir, &stem)?;
        let g = problem.obstacle.sample(&grid)?;
        let qce = line_envelope(&g, params(&problem, &config)?.stencil());
        let excess = u.values().iter().zip(qce.values()).map(|(a, b)| a - b).fold(f64::MIN, f64::max);
        rows.push(SweepRow {
            epsilon: eps,
            iterations: report.iterations,
            converged: report.converged,
            sup_distance_to_qce: u.sup_distance(&qce),
            max_excess_over_qce: excess,
        });
        all_converged &= report.converged;
        if base.is_none() {
            qce.save_csv(&dir.join("qce.csv"), &config.metadata())?;
            base = Some(config);
        }
    }
    let monotone = rows.windows(2).all(|w| w[1].sup_distance_to_qce <= w[0].sup_distance_to_qce);
    let mut metadata = base.map(|c| c.metadata()).unwrap_or_default();
    metadata.push(format!("distance_nonincreasing_in_listed_order={monotone}"));
    write_table(&dir.join("summary.csv"), &metadata, &rows)?;
    for r in &rows {
        println!("eps {}: sup distance to line-sweep envelope {:.6e}", r.epsilon, r.sup_distance_to_qce);
    }
    println!("distance nonincreasing in the listed order: {monotone}");
    Ok(outcome(all_converged))
}

#[derive(Serialize)]
struct AccelRow {
    n: usize,
    iterations_plain: usize,
    iterations_accelerated: usize,
    ratio: f64,
}

pub fn accel_table(args: &Common) -> Run {
    let problem = Problem::from_args(args, Some("circles"))?;
    let ns = if args.n.is_empty() { vec![32, 64, 128] } else { args.n.clone() };
    let eps = single(&args.eps, "--eps")?;
    let mut rows = Vec::new();
    let mut metadata = Vec::new();
    let mut all_converged = true;
    for &n in &ns {
        let (plain, grid) = configure("accel-table", args, &problem, n, eps, None, InitArg::Obstacle)?;
        let plain = RunConfig { accel: "none", ..plain };
        let fast = RunConfig { accel: "line", ..plain.clone() };
        let p = params(&problem, &plain)?;
        let (_, rp) = run_solver(&grid, &p, &plain.solver_config())?;
        let (_, ra) = run_solver(&grid, &p, &fast.solver_config())?;
        all_converged &= rp.converged && ra.converged;
        println!("n {n}: plain {} iterations, accelerated {}", rp.iterations, ra.iterations);
        if metadata.is_empty() {
            metadata = plain.metadata();
            metadata.retain(|l| !["n=", "h=", "accel=", "epsilon="].iter().any(|k| l.starts_with(k)));
            metadata.push(match eps {
                Some(e) => format!("epsilon={e}"),
                None => "epsilon=h/2".into(),
            });
        }
        rows.push(AccelRow {
            n,
            iterations_plain: rp.iterations,
            iterations_accelerated: ra.iterations,
            ratio: rp.iterations as f64 / ra.iterations as f64,
        });
    }
    let dir = out_dir(&args.out)?;
    write_table(&dir.join("accel_table.csv"), &metadata, &rows)?;
    Ok(outcome(all_converged))
}

pub fn consistency_report(args: &ConsistencyArgs) -> Run {
    if args.count == 0 {
        return usage("--count must be at least 1");
    }
    let quads = random_quadratics(args.count, 2, args.seed);
    let table = consistency_sweep(&quads, args.eps, &args.width, &args.n)?;
    let metadata = vec![
        "command=\"consistency-report\"".to_string(),
        format!("count={}", args.count),
        format!("seed={}", args.seed),
        format!("epsilon={}", args.eps),
        "oracle=65536 angular samples with golden-section refinement".to_string(),
        "error=max over quadratics and coarse-grid nodes with |x|_inf <= 1/2".to_string(),
        "grid_error=scheme against the minimum over stencil directions of the continuous operator".to_string(),
        "floor=stencil-direction minimum against the full minimum".to_string(),
    ];
    let dir = out_dir(&args.out)?;
    write_table(&dir.join("consistency.csv"), &metadata, &table.rows)?;
    #[derive(Serialize)]
    struct Slope {
        width: usize,
        slope: f64,
    }
    let slopes: Vec<Slope> = table.slopes.iter().map(|&(width, slope)| Slope { width, slope }).collect();
    write_table(&dir.join("slopes.csv"), &metadata, &slopes)?;
    for s in &slopes {
        println!("W {}: log-log slope of the grid error in h {:.3}", s.width, s.slope);
    }
    Ok(Outcome::Done)
}

pub fn verify(args: &VerifyArgs) -> Run {
    let common = &args.common;
    let problem = Problem::from_args(common, None)?;
    let n = single(&common.n, "--n")?.unwrap_or(problem.default_n());
    let eps = single(&common.eps, "--eps")?;
    let (config, grid) = configure("verify", common, &problem, n, eps, None, InitArg::Min)?;
    let dir = out_dir(&common.out)?;
    let (u, report) = solve_and_save(&problem, &config, &grid, SchemeKind::Full, dir, "solution")?;
    let p = params(&problem, &config)?;
    let g = problem.obstacle.sample(&grid)?;
    let plan = StencilPlan::new(&grid, p.stencil(), &problem.obstacle)?;
    let eps = config.epsilon;
    let small = problem.grid(if problem.dim() == 1 { 17 } else { 12 })?;
    let mut checks: Vec<CheckReport> = vec![
        sandwich_audit(&u, &g, eps, config.tol),
        residual_audit(&u, &plan, eps, SchemeKind::Full, 10.0 * config.tol),
        noncontact_audit(&u, &plan, eps, config.tol, eps - 10.0 * config.tol / report.delta),
        qc_along_stencil(&u, p.stencil(), 1e-3),
    ];
    checks.push(ellipticity_fuzz(&p, &small, args.trials, args.seed)?);
    checks.push(comparison_fuzz(&p, &small, args.trials, args.seed + 1)?);
    checks.push(euler_monotonicity_fuzz(&p, &small, args.trials, args.seed + 2)?);
    write_json(&dir.join("checks.json"), &serde_json::to_value(&checks)?)?;
    for c in &checks {
        println!(
            "{} {}: worst {:.3e} (tolerance {:.1e}, {} samples)",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.worst_violation,
            c.tolerance,
            c.samples
        );
    }
    if !report.converged {
        Ok(Outcome::NotConverged)
    } else if checks.iter().all(|c| c.passed) {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::ChecksFailed)
    }
}

fn difference(a: &GridFunction, b: &GridFunction) -> GridFunction {
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    GridFunction::new(*a.grid(), values).expect("same grid")
}

pub fn compare_robust(args: &RobustArgs) -> Run {
    let common = &args.common;
    let problem = Problem::from_args(common, Some("circles"))?;
    let n = single(&common.n, "--n")?.unwrap_or(problem.default_n());
    let eps = single(&common.eps, "--eps")?.unwrap_or(0.02);
    let width = common.width.unwrap_or(5);
    let (config, grid) = configure("compare-robust", common, &problem, n, Some(eps), Some(width), InitArg::Min)?;
    let eps_r = args.eps_r.unwrap_or(eps);
    let dir = out_dir(&common.out)?;
    let (u, ru) = solve_and_save(&problem, &config, &grid, SchemeKind::Full, dir, "full")?;
    let (v, rv) = solve_and_save(&problem, &config, &grid, SchemeKind::Robust { eps_r }, dir, "robust")?;
    let diff = difference(&v, &u);
    let mut metadata = config.metadata();
    metadata.push("values=robust minus full".into());
    metadata.push("note=the robust operator is expected to lose accuracy on wide stencils".into());
    diff.save_csv(&dir.join("difference.csv"), &metadata)?;
    let sup = u.sup_distance(&v);
    write_json(
        &dir.join("summary.json"),
        &json!({
            "config": config,
            "eps_r": eps_r,
            "sup_difference": sup,
            "full_converged": ru.converged,
            "robust_converged": rv.converged,
            "note": "the robust operator is expected to lose accuracy on wide stencils",
        }),
    )?;
    println!("sup |robust - full| = {sup:.6e}");
    Ok(outcome(ru.converged && rv.converged))
}

pub fn compare_first_order(args: &Common) -> Run {
    let problem = Problem::from_args(args, None)?;
    let n = single(&args.n, "--n")?.unwrap_or(problem.default_n());
    let eps = single(&args.eps, "--eps")?;
    let (config, grid) = configure("compare-first-order", args, &problem, n, eps, None, InitArg::Min)?;
    let dir = out_dir(&args.out)?;
    let (u, ru) = solve_and_save(&problem, &config, &grid, SchemeKind::Full, dir, "full")?;
    let (v, rv) = solve_and_save(&problem, &config, &grid, SchemeKind::FirstOrder, dir, "first_order")?;
    let sup = u.sup_distance(&v);
    write_json(
        &dir.join("summary.json"),
        &json!({
            "config": config,
            "sup_distance": sup,
            "sup_distance_over_h": sup / grid.h(),
            "full_converged": ru.converged,
            "first_order_converged": rv.converged,
        }),
    )?;
    println!("sup |full - first order| = {sup:.6e} = {:.3} h", sup / grid.h());
    Ok(outcome(ru.converged && rv.converged))
}
