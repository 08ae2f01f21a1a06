//! Invariant suites run by `viscofem verify`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::forms::{evaluate_forms, FormKind, FormsContext, Snapshot, SpaceTimeFunction};
use crate::assembly::Operators;
use crate::dual_solver::{solve_dual, Enrichment};
use crate::error::Result;
use crate::estimators::{
    default_z_hk, dual_norms, global_estimate, local_estimate, theta_all, GlobalParams, KernelMode, LocalParams,
};
use crate::kernel::{validate_kernel, Kernel, KernelSpec, PronyTerm};
use crate::mesh_time::{FeSpace, SpatialMesh, TimePartition};
use crate::primal_solver::{displacement_errors, galerkin_residual, solve_primal};
use crate::problems::{mms_linear, ProblemSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl SuiteResult {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        SuiteResult { name, passed: value <= threshold, value, threshold }
    }
}

/// A continuous piecewise-linear function with uniform random coefficients.
pub fn random_function(rng: &mut impl Rng, partition: &TimePartition, space: &Arc<FeSpace>) -> Result<SpaceTimeFunction> {
    let n = space.n_dofs();
    let levels: Vec<Snapshot> = (0..=partition.n_slabs())
        .map(|_| Snapshot {
            space: space.clone(),
            u1: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            u2: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    SpaceTimeFunction::continuous(partition.clone(), &levels)
}

/// `max |B(u,v) - B*(u,v)| / max(1, |B(u,v)|)` over random pairs.
pub fn adjoint_identity(
    kernel: &Kernel,
    problem: &ProblemSpec,
    mesh: &Arc<SpatialMesh>,
    partition: &TimePartition,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = Arc::new(FeSpace::with_components(mesh.clone(), problem.dim())?);
    let ctx = FormsContext { kernel, params: problem.params, load: None, dual_load: None, time_points: 5 };
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = random_function(&mut rng, partition, &space)?;
        let v = random_function(&mut rng, partition, &space)?;
        let b = evaluate_forms(FormKind::B, Some(&u), &v, &ctx)?;
        let bs = evaluate_forms(FormKind::BStar, Some(&u), &v, &ctx)?;
        worst = worst.max((b - bs).abs() / b.abs().max(1.0));
    }
    Ok(worst)
}

/// Largest relative spread of the three representation totals.
pub fn representation_spread(problem: &ProblemSpec, per_unit: usize, slabs: usize, enrichment: Enrichment) -> Result<(f64, f64)> {
    let ops = Operators::new(problem.params);
    let mesh = problem.mesh(per_unit)?;
    let partition = problem.partition(slabs)?;
    let meshes = vec![mesh; slabs + 1];
    let u = solve_primal(problem, &partition, &meshes)?;
    let weight = problem.goal_weight.clone().unwrap_or_else(|| Arc::new(|_| [1.0, 0.0]));
    let z = solve_dual(problem.kernel.spec(), &ops, &problem.end_time_goal(weight), &partition, &meshes, enrichment)?;
    let z_ref = z.z.as_function();
    let z_hk = default_z_hk(&ops, &u, &z_ref)?;
    let t = theta_all(&u, &z_ref, &z_hk, problem)?.map(|b| b.total());
    let spread = t.iter().map(|a| (a - t[1]).abs()).fold(0.0, f64::max);
    Ok((spread / t[1].abs().max(f64::MIN_POSITIVE), t[1]))
}

/// Every suite on `problem` at the given resolution.
pub fn run_suites(problem: &ProblemSpec, per_unit: usize, slabs: usize, enrichment: Enrichment) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let mesh = problem.mesh(per_unit)?;
    let partition = problem.partition(slabs)?;
    let meshes = vec![mesh.clone(); slabs + 1];

    let zero = Kernel::zero();
    let adj = adjoint_identity(&problem.kernel, problem, &mesh, &partition, 20, 7)?
        .max(adjoint_identity(&zero, problem, &mesh, &partition, 20, 8)?);
    out.push(SuiteResult::at_most("adjoint_identity", adj, 1e-10));

    let u = solve_primal(problem, &partition, &meshes)?;
    out.push(SuiteResult::at_most("galerkin_orthogonality", galerkin_residual(&u, problem, 5)?.relative(), 1e-10));

    let tol = if matches!(problem.kernel.spec(), KernelSpec::PowerLaw { .. }) { 1e-6 } else { 1e-8 };
    let (spread, _) = representation_spread(problem, per_unit, slabs, enrichment)?;
    out.push(SuiteResult::at_most("representation_agreement", spread, tol));

    let mut exact_err: f64 = 0.0;
    let mut exact_theta: f64 = 0.0;
    for spec in [KernelSpec::Zero, KernelSpec::Prony(vec![PronyTerm { gamma: 0.4, lambda: 1.0 }])] {
        let p = mms_linear(spec)?;
        let m = p.mesh(4)?;
        let part = p.partition(4)?;
        let u = solve_primal(&p, &part, &vec![m; 5])?;
        let exact = p.exact.as_ref().expect("mms_linear is exact");
        exact_err = exact_err.max(displacement_errors(&u, &exact.u1).into_iter().fold(0.0, f64::max));
        exact_theta = exact_theta.max(representation_spread(&p, 4, 4, Enrichment::default())?.1.abs());
    }
    out.push(SuiteResult::at_most("exact_reproduction_error", exact_err, 1e-9));
    out.push(SuiteResult::at_most("exact_reproduction_theta", exact_theta, 1e-8));

    let accepts = validate_kernel(&KernelSpec::Prony(vec![PronyTerm { gamma: 0.4, lambda: 1.0 }]), 1.0).is_ok();
    let rejects = validate_kernel(&KernelSpec::Prony(vec![PronyTerm { gamma: 1.2, lambda: 1.0 }]), 1.0).is_err();
    out.push(SuiteResult { name: "kernel_contract", passed: accepts && rejects, value: (accepts && rejects) as u8 as f64, threshold: 1.0 });

    let ops = Operators::new(problem.params);
    let weight = problem.goal_weight.clone().unwrap_or_else(|| Arc::new(|_| [1.0, 0.0]));
    let z = solve_dual(problem.kernel.spec(), &ops, &problem.end_time_goal(weight), &partition, &meshes, enrichment)?;
    let norms = dual_norms(&z, &ops)?;
    let g = global_estimate(&u, problem, Some(&norms), GlobalParams { alpha: 2, beta: 2, gamma: 1, mode: KernelMode::Convolved })?;
    let zeta_gap = g.rows.iter().filter_map(|r| r.factor("zeta_n")).map(|z| (z - 1.0).abs()).fold(0.0, f64::max);
    out.push(SuiteResult::at_most("zeta_beta_two", zeta_gap, 0.0));
    let l = local_estimate(&u, problem, Some(&norms), LocalParams { alpha: 2, mode: KernelMode::L1, endpoint_bound: false })?;
    let negative = g
        .rows
        .iter()
        .chain(&l.rows)
        .flat_map(|r| r.terms.iter().map(|(_, v)| *v))
        .chain([g.upsilon0, l.upsilon0])
        .map(|v| (-v).max(0.0))
        .fold(0.0, f64::max);
    out.push(SuiteResult::at_most("upsilon_nonnegative", negative, 0.0));
    Ok(out)
}
