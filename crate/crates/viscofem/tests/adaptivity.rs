mod common;

use std::sync::Arc;

use common::prony;
use viscofem::adaptivity::{adapt_loop, AdaptConfig, AdaptHistory, SplitRule};
use viscofem::dual_solver::GoalFunctional;
use viscofem::mesh_time::refine_uniform;
use viscofem::problems::{mms_smooth, ProblemSpec};
use viscofem::{Error, SpatialMesh};

fn setup(dim: usize) -> (ProblemSpec, AdaptConfig) {
    let p = mms_smooth(prony(0.4, 1.0), dim).unwrap();
    let goal = GoalFunctional::EndTimeDisplacement { weight: p.goal_weight.clone().unwrap() };
    (p, AdaptConfig::new(goal, 1e-12))
}

fn start(p: &ProblemSpec, per_unit: usize, slabs: usize) -> (viscofem::TimePartition, Vec<Arc<SpatialMesh>>) {
    (p.partition(slabs).unwrap(), vec![p.mesh(per_unit).unwrap(); slabs + 1])
}

fn history(p: &ProblemSpec, cfg: &AdaptConfig, per_unit: usize, slabs: usize) -> Result<AdaptHistory, (Error, AdaptHistory)> {
    let (part, meshes) = start(p, per_unit, slabs);
    adapt_loop(p, part, meshes, cfg)
}

#[test]
fn loose_tolerance_stops_without_refining() {
    let (p, mut cfg) = setup(1);
    cfg.tolerance = 1e9;
    let h = history(&p, &cfg, 4, 4).unwrap();
    assert!(h.converged);
    assert_eq!(h.steps.len(), 1);
    assert_eq!(h.partition.n_slabs(), 4);
    assert!(h.meshes.iter().all(|m| m.n_cells() == 4));
}

#[test]
fn full_marking_with_both_refines_uniformly() {
    for dim in [1, 2] {
        let (p, mut cfg) = setup(dim);
        cfg.fraction = 1.0;
        cfg.split = SplitRule::Both;
        cfg.max_iterations = 1;
        let (part, meshes) = start(&p, 2, 2);
        let (e, h) = adapt_loop(&p, part.clone(), meshes.clone(), &cfg).unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { iterations: 1 }));
        assert_eq!(h.steps.len(), 2);
        assert_eq!(h.partition, part.refine_uniform(1));
        let uniform = refine_uniform(&meshes[0], 1);
        for m in &h.meshes {
            assert_eq!(m.n_cells(), uniform.n_cells());
            assert_eq!(m.vertices().len(), uniform.vertices().len());
        }
        assert_eq!(h.steps[1].dofs_time, 4);
    }
}

#[test]
fn runs_are_deterministic() {
    let (p, mut cfg) = setup(2);
    cfg.max_iterations = 2;
    let a = history(&p, &cfg, 2, 2).unwrap_err().1;
    let b = history(&p, &cfg, 2, 2).unwrap_err().1;
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.partition, b.partition);
    let cells = |h: &AdaptHistory| h.meshes.iter().map(|m| m.vertices().to_vec()).collect::<Vec<_>>();
    assert_eq!(cells(&a), cells(&b));
}

#[test]
fn split_rules_refine_the_requested_dimension() {
    let (p, mut cfg) = setup(1);
    cfg.max_iterations = 1;
    cfg.split = SplitRule::Time;
    let h = history(&p, &cfg, 4, 4).unwrap_err().1;
    assert!(h.partition.n_slabs() > 4);
    assert!(h.meshes.iter().all(|m| m.n_cells() == 4));
    assert_eq!(h.meshes.len(), h.partition.n_slabs() + 1);

    cfg.split = SplitRule::Space;
    let h = history(&p, &cfg, 4, 4).unwrap_err().1;
    assert_eq!(h.partition.n_slabs(), 4);
    assert!(h.meshes.iter().any(|m| m.n_cells() > 4));
}

#[test]
fn first_two_levels_share_a_mesh() {
    let (p, mut cfg) = setup(2);
    cfg.max_iterations = 2;
    let h = history(&p, &cfg, 2, 3).unwrap_err().1;
    assert_eq!(h.meshes[0].vertices(), h.meshes[1].vertices());
    assert_eq!(h.meshes[0].n_cells(), h.meshes[1].n_cells());
}

#[test]
fn estimates_shrink_under_refinement() {
    let (p, mut cfg) = setup(1);
    cfg.max_iterations = 3;
    let h = history(&p, &cfg, 4, 4).unwrap_err().1;
    let first = &h.steps[0];
    let last = h.steps.last().unwrap();
    assert!(last.dofs_total > first.dofs_total);
    assert!(last.estimate < first.estimate);
    assert!(last.true_error.unwrap() < first.true_error.unwrap());
}

#[test]
fn invalid_configuration_is_rejected() {
    let (p, mut cfg) = setup(1);
    cfg.fraction = 0.0;
    assert!(matches!(history(&p, &cfg, 4, 4).unwrap_err().0, Error::Config(_)));
    cfg.fraction = 1.5;
    assert!(matches!(history(&p, &cfg, 4, 4).unwrap_err().0, Error::Config(_)));
    cfg.fraction = 0.5;
    cfg.tolerance = 0.0;
    assert!(matches!(history(&p, &cfg, 4, 4).unwrap_err().0, Error::Config(_)));
    cfg.tolerance = 1e-3;
    let (part, mut meshes) = start(&p, 4, 4);
    meshes.pop();
    assert!(matches!(adapt_loop(&p, part, meshes, &cfg).unwrap_err().0, Error::Config(_)));
}
