//! Command-line front end: `solve`, `estimate`, `adapt`, `convergence` and
//! `verify`, each reading an optional TOML config and writing CSV/VTK
//! artifacts into the output directory.

pub mod config;
pub mod output;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adaptivity::adapt_loop;
use crate::assembly::{l2_moments, Operators};
use crate::dual_solver::solve_dual;
use crate::error::{Error, Result};
use crate::estimators::{
    default_z_hk, dual_norms, example1_bound, global_estimate, local_estimate, theta_all, EstimateReport,
};
use crate::linalg::dot;
use crate::mesh_time::io::{write_vtk, PointField};
use crate::primal_solver::{displacement_errors, energy, solve_primal, write_checkpoint, SpaceTimeSolution};
use crate::problems::ProblemSpec;
use config::{EstimatorKind, RunConfig};
use output::{fmt_float, fmt_opt, write_csv, write_summary};

#[derive(Debug, Parser)]
#[command(name = "viscofem", version, about = "Space-time finite elements for dynamic viscoelasticity")]
struct Cli {
    /// Worker threads (falls back to VISCOFEM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the primal problem; write a checkpoint and VTK fields.
    Solve(Common),
    /// Error representations and the selected a posteriori bound.
    Estimate(Common),
    /// Goal-oriented adaptive loop; write the history.
    Adapt(Common),
    /// Uniform h, k refinement study against the exact solution.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Run the invariant suites; nonzero exit on any failure.
    Verify(Common),
}

/// Exit status: 0 success, 1 failure (including failed verification or an
/// unconverged adaptive run), 2 invalid usage or configuration.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("VISCOFEM_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => {
                    eprintln!("error: configuration error: VISCOFEM_THREADS: not a thread count `{v}`");
                    return 2;
                }
            },
            Err(_) => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn setup(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let dir = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir)?;
    Ok((cfg, dir))
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Solve(c) => {
            let (cfg, dir) = setup(&c)?;
            solve(&cfg, &dir).map(|_| 0)
        }
        Command::Estimate(c) => {
            let (cfg, dir) = setup(&c)?;
            estimate(&cfg, &dir).map(|_| 0)
        }
        Command::Adapt(c) => {
            let (cfg, dir) = setup(&c)?;
            adapt(&cfg, &dir)
        }
        Command::Convergence { common, levels } => {
            let (cfg, dir) = setup(&common)?;
            convergence(&cfg, &dir, levels).map(|_| 0)
        }
        Command::Verify(c) => {
            let (cfg, dir) = setup(&c)?;
            verify(&cfg, &dir)
        }
    }
}

fn primal(cfg: &RunConfig) -> Result<(ProblemSpec, SpaceTimeSolution)> {
    let problem = cfg.problem()?;
    let mesh = problem.mesh(cfg.mesh.per_unit)?;
    let partition = problem.partition(cfg.time.slabs)?;
    let meshes = vec![mesh; cfg.time.slabs + 1];
    let u = solve_primal(&problem, &partition, &meshes)?;
    Ok((problem, u))
}

/// `(U1(T), weight) - (u1(T), weight)` when the exact solution is known.
fn goal_error(problem: &ProblemSpec, u: &SpaceTimeSolution) -> Option<f64> {
    let exact = problem.exact.as_ref()?;
    let weight = problem.goal_weight.as_ref()?;
    let last = u.levels.last()?;
    let t = u.partition.horizon();
    let u1 = exact.u1.clone();
    let w = weight.clone();
    let exact_value = crate::assembly::integrate(last.space.mesh(), &|x| dot(&u1(x, t), &w(x)));
    Some(dot(&l2_moments(&last.space, &**weight), &last.u1) - exact_value)
}

fn solve(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (problem, u) = primal(cfg)?;
    write_checkpoint(&dir.join("solution.ckp"), &u)?;
    let last = u.levels.last().expect("at least one level");
    let ncomp = last.space.ncomp();
    let (u1, u2) = (last.space.expand(&last.u1), last.space.expand(&last.u2));
    write_vtk(
        &dir.join("solution_final.vtk"),
        last.space.mesh(),
        &[PointField { name: "u1", ncomp, values: &u1 }, PointField { name: "u2", ncomp, values: &u2 }],
    )?;
    let ops = Operators::new(problem.params);
    let mut summary = vec![
        ("problem".to_string(), problem.name.clone()),
        ("slabs".to_string(), u.partition.n_slabs().to_string()),
        ("dofs".to_string(), u.dofs().to_string()),
        ("final_energy".to_string(), fmt_float(energy(&ops, last)?)),
    ];
    if let Some(exact) = &problem.exact {
        let err = displacement_errors(&u, &exact.u1).into_iter().fold(0.0, f64::max);
        summary.push(("max_displacement_error".to_string(), fmt_float(err)));
    }
    for (k, v) in &summary {
        println!("{k}: {v}");
    }
    write_summary(&dir.join("solve_summary.csv"), &summary)
}

fn report_rows(report: &EstimateReport) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["0".to_string(), "upsilon0".to_string(), "term".to_string(), fmt_float(report.upsilon0)]];
    for r in &report.rows {
        for (name, v) in &r.terms {
            rows.push(vec![r.n.to_string(), name.to_string(), "term".to_string(), fmt_float(*v)]);
        }
        for (name, v) in &r.factors {
            rows.push(vec![r.n.to_string(), name.to_string(), "factor".to_string(), fmt_float(*v)]);
        }
    }
    rows
}

fn estimate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (problem, u) = primal(cfg)?;
    let ops = Operators::new(problem.params);
    let goal = cfg.goal(&problem)?;
    let meshes: Vec<_> = u.levels.iter().map(|l| l.space.mesh().clone()).collect();
    let z = solve_dual(problem.kernel.spec(), &ops, &goal.data(), &u.partition, &meshes, cfg.enrichment())?;
    let z_ref = z.z.as_function();
    let z_hk = default_z_hk(&ops, &u, &z_ref)?;
    let reps = theta_all(&u, &z_ref, &z_hk, &problem)?;

    let totals: Vec<Vec<String>> = reps
        .iter()
        .map(|b| {
            let mut s = [0.0; 5];
            for row in b.slab_totals() {
                for i in 0..5 {
                    s[i] += row[i];
                }
            }
            let mut r = vec![b.representation.index().to_string(), fmt_float(b.theta0.iter().sum())];
            r.extend(s.iter().map(|v| fmt_float(*v)));
            r.push(fmt_float(b.total()));
            r
        })
        .collect();
    write_csv(
        &dir.join("theta_totals.csv"),
        &["representation", "theta0", "theta1", "theta2", "theta3", "theta4", "theta5", "total"],
        &totals,
    )?;

    let chosen = &reps[cfg.representation().index() - 1];
    let mut cells: Vec<Vec<String>> = chosen
        .theta0
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let mut r = vec!["0".to_string(), c.to_string(), fmt_float(*v)];
            r.extend((0..5).map(|_| fmt_float(0.0)));
            r.push(fmt_float(*v));
            r
        })
        .collect();
    for (n, slab) in chosen.slabs.iter().enumerate() {
        for (c, row) in slab.iter().enumerate() {
            let mut r = vec![(n + 1).to_string(), c.to_string(), fmt_float(0.0)];
            r.extend(row.iter().map(|v| fmt_float(*v)));
            r.push(fmt_float(row.iter().sum()));
            cells.push(r);
        }
    }
    write_csv(
        &dir.join("theta_cells.csv"),
        &["slab", "cell", "theta0", "theta1", "theta2", "theta3", "theta4", "theta5", "total"],
        &cells,
    )?;

    let report = match cfg.estimator.kind {
        EstimatorKind::Example1 => example1_bound(&u, &problem)?,
        EstimatorKind::Global => {
            let norms = dual_norms(&z, &ops)?;
            global_estimate(&u, &problem, Some(&norms), cfg.global_params())?
        }
        EstimatorKind::Local => {
            let norms = dual_norms(&z, &ops)?;
            local_estimate(&u, &problem, Some(&norms), cfg.local_params())?
        }
    };
    write_csv(&dir.join("upsilon.csv"), &["slab", "name", "kind", "value"], &report_rows(&report))?;

    let err = goal_error(&problem, &u);
    let mut summary = vec![
        ("problem".to_string(), problem.name.clone()),
        ("estimator".to_string(), format!("{:?}", cfg.estimator.kind).to_lowercase()),
        ("representation".to_string(), chosen.representation.index().to_string()),
        ("theta_total".to_string(), fmt_float(chosen.total())),
        ("upsilon_sum".to_string(), fmt_float(report.sum())),
        ("dual_factor".to_string(), fmt_float(report.dual_factor)),
        ("constant".to_string(), fmt_float(report.constant)),
        ("bound".to_string(), fmt_float(report.bound())),
        ("goal_error".to_string(), fmt_opt(err)),
        ("theta_effectivity".to_string(), fmt_opt(err.map(|e| chosen.total() / e))),
        ("bound_effectivity".to_string(), fmt_opt(err.map(|e| report.bound() / e.abs()))),
    ];
    for (name, v) in &report.dual_norms {
        summary.push((format!("dual_{name}"), fmt_float(*v)));
    }
    for (k, v) in &summary {
        println!("{k}: {v}");
    }
    write_summary(&dir.join("estimate_summary.csv"), &summary)
}

fn adapt(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let problem = cfg.problem()?;
    let config = cfg.adapt_config(&problem)?;
    let mesh = problem.mesh(cfg.mesh.per_unit)?;
    let partition = problem.partition(cfg.time.slabs)?;
    let meshes = vec![mesh; cfg.time.slabs + 1];
    let (history, failure) = match adapt_loop(&problem, partition, meshes, &config) {
        Ok(h) => (h, None),
        Err((e, h)) => (h, Some(e)),
    };
    let rows: Vec<Vec<String>> = history
        .steps
        .iter()
        .map(|s| {
            vec![
                s.iteration.to_string(),
                s.dofs_space.to_string(),
                s.dofs_time.to_string(),
                s.dofs_total.to_string(),
                fmt_float(s.estimate),
                fmt_opt(s.true_error),
            ]
        })
        .collect();
    write_csv(&dir.join("adapt_history.csv"), &["iteration", "dofs_space", "dofs_time", "dofs_total", "estimate", "true_error"], &rows)?;
    for s in &history.steps {
        println!("iteration {}: {} space dofs, {} slabs, |theta| = {:e}", s.iteration, s.dofs_space, s.dofs_time, s.estimate);
    }
    match failure {
        None => Ok(0),
        Some(e @ Error::BudgetExceeded { .. }) => {
            eprintln!("warning: {e}");
            Ok(1)
        }
        Some(e) => Err(e),
    }
}

/// Rows `(level, h, k, dofs, error)` with `error = max_n ‖U1(t_n) - u1(t_n)‖`
/// and the observed order against the previous level.
pub fn convergence_table(problem: &ProblemSpec, per_unit: usize, slabs: usize, levels: usize) -> Result<Vec<(usize, f64, f64, usize, f64, Option<f64>)>> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Config(format!("problem.name: `{}` has no exact solution", problem.name)))?;
    let mut out: Vec<(usize, f64, f64, usize, f64, Option<f64>)> = Vec::new();
    for level in 0..levels {
        let scale = 1usize << level;
        let mesh = problem.mesh(per_unit * scale)?;
        let partition = problem.partition(slabs * scale)?;
        let meshes = vec![mesh.clone(); slabs * scale + 1];
        let u = solve_primal(problem, &partition, &meshes)?;
        let err = displacement_errors(&u, &exact.u1).into_iter().fold(0.0, f64::max);
        let h = mesh.h_max();
        let order = out.last().map(|p| (p.4 / err).ln() / (p.1 / h).ln());
        out.push((level, h, partition.k_max(), u.dofs(), err, order));
    }
    Ok(out)
}

fn convergence(cfg: &RunConfig, dir: &Path, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::Config("--levels: must be positive".into()));
    }
    let problem = cfg.problem()?;
    let table = convergence_table(&problem, cfg.mesh.per_unit, cfg.time.slabs, levels)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|(l, h, k, d, e, o)| vec![l.to_string(), fmt_float(*h), fmt_float(*k), d.to_string(), fmt_float(*e), fmt_opt(*o)])
        .collect();
    for r in &rows {
        println!("{}", r.join(" "));
    }
    write_csv(&dir.join("convergence.csv"), &["level", "h", "k", "dofs", "error", "order"], &rows)
}

fn verify(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let problem = cfg.problem()?;
    let results = verify::run_suites(&problem, cfg.mesh.per_unit, cfg.time.slabs, cfg.enrichment())?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| vec![r.name.to_string(), r.passed.to_string(), fmt_float(r.value), fmt_float(r.threshold)])
        .collect();
    for r in &results {
        println!("{} {} (value {:e}, threshold {:e})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.value, r.threshold);
    }
    write_csv(&dir.join("verify.csv"), &["suite", "passed", "value", "threshold"], &rows)?;
    Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
}
