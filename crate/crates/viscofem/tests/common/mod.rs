//! Shared pipeline pieces for the integration tests.

#![allow(dead_code)]

use std::sync::Arc;

use viscofem::assembly::{integrate, l2_moments, Operators};
use viscofem::dual_solver::{solve_dual, DualSolution, Enrichment};
use viscofem::estimators::{default_z_hk, theta_all};
use viscofem::linalg::dot;
use viscofem::primal_solver::{solve_primal, SpaceTimeSolution};
use viscofem::problems::ProblemSpec;
use viscofem::{KernelSpec, PronyTerm, SpatialMesh, TimePartition};

pub fn prony(gamma: f64, lambda: f64) -> KernelSpec {
    KernelSpec::Prony(vec![PronyTerm { gamma, lambda }])
}

pub struct Run {
    pub ops: Operators,
    pub partition: TimePartition,
    pub meshes: Vec<Arc<SpatialMesh>>,
    pub u: SpaceTimeSolution,
    pub z: DualSolution,
}

/// Primal and dual solves on a uniform discretization.
pub fn run(problem: &ProblemSpec, per_unit: usize, slabs: usize, enrichment: Enrichment) -> Run {
    let ops = Operators::new(problem.params);
    let partition = problem.partition(slabs).unwrap();
    let meshes = vec![problem.mesh(per_unit).unwrap(); slabs + 1];
    let u = solve_primal(problem, &partition, &meshes).unwrap();
    let weight = problem.goal_weight.clone().unwrap();
    let z = solve_dual(problem.kernel.spec(), &ops, &problem.end_time_goal(weight), &partition, &meshes, enrichment).unwrap();
    Run { ops, partition, meshes, u, z }
}

impl Run {
    /// Totals of the three representations.
    pub fn theta_totals(&self, problem: &ProblemSpec) -> [f64; 3] {
        let z_ref = self.z.z.as_function();
        let z_hk = default_z_hk(&self.ops, &self.u, &z_ref).unwrap();
        theta_all(&self.u, &z_ref, &z_hk, problem).unwrap().map(|b| b.total())
    }
}

/// `L*(e) = (U1(T) - u1(T), weight)` from the exact solution.
pub fn goal_error(u: &SpaceTimeSolution, problem: &ProblemSpec) -> f64 {
    let weight = problem.goal_weight.clone().unwrap();
    let exact = problem.exact.as_ref().unwrap();
    let last = u.levels.last().unwrap();
    let t = u.partition.horizon();
    let discrete = dot(&l2_moments(&last.space, &*weight), &last.u1);
    discrete - integrate(last.space.mesh(), &|p| dot(&(exact.u1)(p, t), &weight(p)))
}
