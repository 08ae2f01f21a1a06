//! Meshes that change between time levels, including coarsening back to an
//! ancestor mesh.

mod common;

use std::sync::Arc;

use common::prony;
use viscofem::assembly::Operators;
use viscofem::dual_solver::{solve_dual, Enrichment};
use viscofem::estimators::{default_z_hk, dual_norms, global_estimate, local_estimate, theta_all, GlobalParams, KernelMode, LocalParams};
use viscofem::mesh_time::refine;
use viscofem::primal_solver::{displacement_errors, galerkin_residual, solve_primal};
use viscofem::problems::{mms_linear, mms_smooth, ProblemSpec};
use viscofem::{Error, SpatialMesh};

/// Refine, coarsen back, refine elsewhere, refine further.
fn scripted(problem: &ProblemSpec, per_unit: usize) -> Vec<Arc<SpatialMesh>> {
    let base = problem.mesh(per_unit).unwrap();
    let a = Arc::new(refine(&base, &[0, 1]));
    let last = base.n_cells() - 1;
    let c = Arc::new(refine(&base, &[last]));
    let d = Arc::new(refine(&c, &[0, c.n_cells() - 1]));
    vec![a.clone(), a, base, c, d]
}

#[test]
fn scripted_sequence_keeps_orthogonality_and_agreement() {
    for dim in [1, 2] {
        let p = mms_smooth(prony(0.4, 1.0), dim).unwrap();
        let meshes = scripted(&p, 3);
        let part = p.partition(4).unwrap();
        let u = solve_primal(&p, &part, &meshes).unwrap();
        assert!(galerkin_residual(&u, &p, 5).unwrap().relative() <= 1e-10);

        let ops = Operators::new(p.params);
        let goal = p.end_time_goal(p.goal_weight.clone().unwrap());
        let z = solve_dual(p.kernel.spec(), &ops, &goal, &part, &meshes, Enrichment::default()).unwrap();
        let z_ref = z.z.as_function();
        let z_hk = default_z_hk(&ops, &u, &z_ref).unwrap();
        let totals = theta_all(&u, &z_ref, &z_hk, &p).unwrap().map(|b| b.total());
        for t in totals {
            assert!((t - totals[1]).abs() <= 1e-8 * totals[1].abs(), "{totals:?}");
        }

        let norms = dual_norms(&z, &ops).unwrap();
        let g = global_estimate(&u, &p, Some(&norms), GlobalParams { alpha: 2, beta: 2, gamma: 1, mode: KernelMode::Convolved }).unwrap();
        let l = local_estimate(&u, &p, Some(&norms), LocalParams { alpha: 2, mode: KernelMode::L2, endpoint_bound: false }).unwrap();
        assert!(g.bound().is_finite() && g.bound() > 0.0);
        assert!(l.bound().is_finite() && l.bound() > 0.0);
        // the coarsened level leaves a projection jump in the time terms
        assert!(g.rows[1].term("upsilon_k").unwrap() > 0.0);
    }
}

#[test]
fn linear_solution_survives_coarsening() {
    let p = mms_linear(prony(0.4, 1.0)).unwrap();
    let meshes = scripted(&p, 4);
    let u = solve_primal(&p, &p.partition(4).unwrap(), &meshes).unwrap();
    let exact = p.exact.as_ref().unwrap();
    assert!(displacement_errors(&u, &exact.u1).into_iter().fold(0.0, f64::max) <= 1e-9);
}

#[test]
fn invalid_sequences_are_rejected() {
    let p = mms_smooth(prony(0.4, 1.0), 2).unwrap();
    let part = p.partition(4).unwrap();
    let mut meshes = scripted(&p, 3);
    meshes[0] = p.mesh(3).unwrap();
    assert!(matches!(solve_primal(&p, &part, &meshes), Err(Error::MeshFamilyViolation(_))));

    let mut meshes = scripted(&p, 3);
    meshes[3] = p.mesh(3).unwrap();
    assert!(matches!(solve_primal(&p, &part, &meshes), Err(Error::UnrelatedMeshes)));

    let meshes = scripted(&p, 3);
    assert!(matches!(solve_primal(&p, &part, &meshes[..4]), Err(Error::IncompatibleSlabbing(_))));
}
