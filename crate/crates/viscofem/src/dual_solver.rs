//! The backward dual problem, solved by time reversal on enriched
//! discretizations, goal presets and stability monitoring.

use std::collections::HashMap;
use std::sync::Arc;

use crate::assembly::forms::{DualLoad, Snapshot};
use crate::assembly::{load_vector, time_rule, Operators, SpaceFn, SpaceTimeFn};
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::linalg::quad_form;
use crate::mesh_time::{refine_uniform, SpatialMesh, TimePartition};
use crate::primal_solver::{project_initial, spaces_for, Marcher, SlabLoads, SpaceTimeSolution, DEFAULT_TIME_POINTS};

/// Loads `j1, j2` and terminal data `z1T, z2T` of the dual problem.
pub type DualData = DualLoad;

/// Goal functionals.
#[derive(Clone)]
pub enum GoalFunctional {
    /// `(e1(T), weight)`.
    EndTimeDisplacement { weight: SpaceFn },
    GeneralLinear(DualData),
}

impl GoalFunctional {
    pub fn data(&self) -> DualData {
        match self {
            GoalFunctional::EndTimeDisplacement { weight } => {
                DualLoad { z1t: weight.clone(), z2t: Arc::new(|_| [0.0; 2]), j1: None, j2: None }
            }
            GoalFunctional::GeneralLinear(d) => d.clone(),
        }
    }
}

/// Uniform enrichment of the dual discretization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Enrichment {
    /// Uniform spatial refinements of every mesh.
    pub refine_h: u32,
    /// Halvings of every slab.
    pub refine_k: u32,
}

impl Default for Enrichment {
    fn default() -> Self {
        Enrichment { refine_h: 1, refine_k: 1 }
    }
}

/// The dual solution in forward time: `u1` holds `z1`, `u2` holds `z2`.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub z: SpaceTimeSolution,
    pub enrichment: Enrichment,
}

/// Meshes at the nodes of the enriched partition: the refined slab mesh at
/// every node inside or at the end of a primal slab.
pub fn enriched_meshes(
    partition: &TimePartition,
    meshes: &[Arc<SpatialMesh>],
    enrichment: Enrichment,
) -> (TimePartition, Vec<Arc<SpatialMesh>>) {
    let fine = partition.refine_uniform(enrichment.refine_k);
    let mut cache: HashMap<u64, Arc<SpatialMesh>> = HashMap::new();
    let mut refined = |m: &Arc<SpatialMesh>| -> Arc<SpatialMesh> {
        if enrichment.refine_h == 0 {
            return m.clone();
        }
        cache.entry(m.id()).or_insert_with(|| Arc::new(refine_uniform(m, enrichment.refine_h))).clone()
    };
    let mut out = vec![refined(&meshes[0])];
    for i in 1..=fine.n_slabs() {
        let n = partition.slab_of(0.5 * (fine.t(i - 1) + fine.t(i)));
        out.push(refined(&meshes[n]));
    }
    (fine, out)
}

fn reversed_fn(f: &SpaceTimeFn, horizon: f64) -> SpaceTimeFn {
    let f = f.clone();
    Arc::new(move |x, tau| f(x, horizon - tau))
}

/// Solves the dual problem on the enriched discretization of
/// `(partition, meshes)`.
pub fn solve_dual(
    kernel: &KernelSpec,
    ops: &Operators,
    data: &DualData,
    partition: &TimePartition,
    meshes: &[Arc<SpatialMesh>],
    enrichment: Enrichment,
) -> Result<DualSolution> {
    let (fine, level_meshes) = enriched_meshes(partition, meshes, enrichment);
    let horizon = fine.horizon();
    let rev = fine.reversed();
    let m = fine.n_slabs();
    // τ level i sits at t level m - i; the terminal level reuses its neighbour's mesh
    let mut rev_meshes: Vec<Arc<SpatialMesh>> = (0..=m).map(|i| level_meshes[m - i].clone()).collect();
    rev_meshes[0] = rev_meshes[1].clone();
    let spaces = spaces_for(&rev_meshes)?;
    let initial = project_initial(ops, &spaces[0], &*data.z2t, &*data.z1t)?;
    let mut marcher = Marcher::new(ops, kernel, &rev, spaces.clone(), initial, true)?;
    let j1 = data.j1.as_ref().map(|f| reversed_fn(f, horizon));
    let j2 = data.j2.as_ref().map(|f| reversed_fn(f, horizon));
    for i in 1..=m {
        let times = time_rule(rev.t(i - 1), rev.t(i), DEFAULT_TIME_POINTS);
        let f1 = j2.as_ref().map(|j| load_vector(&spaces[i], Some(j), None, &times));
        let f2 = load_vector(&spaces[i], j1.as_ref(), None, &times);
        marcher.step_slab(i, &SlabLoads { f1, f2 })?;
    }
    let rev_levels = marcher.into_levels();
    let levels: Vec<Snapshot> = (0..=m)
        .map(|i| {
            let l = &rev_levels[m - i];
            Snapshot { space: l.space.clone(), u1: l.u2.clone(), u2: l.u1.clone() }
        })
        .collect();
    Ok(DualSolution { z: SpaceTimeSolution { partition: fine, levels }, enrichment })
}

/// Norm history of a dual solution.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// Per forward level: `‖z1‖`, `‖z2‖_V`.
    pub z1: Vec<f64>,
    pub z2_v: Vec<f64>,
    /// `‖z1(T)‖ + ‖z2(T)‖_V`.
    pub terminal: f64,
    /// `max_t (‖z1‖ + ‖z2‖_V) / terminal`.
    pub ratio: f64,
    /// `max_t (‖z1‖² + ‖z2‖_V²)^{1/2}` over its terminal value.
    pub energy_ratio: f64,
}

/// Norms at every level of the dual solution and their growth ratios.
pub fn stability_report(z: &DualSolution, ops: &Operators) -> Result<StabilityReport> {
    let mut z1 = Vec::new();
    let mut z2_v = Vec::new();
    for l in &z.z.levels {
        let s = ops.set(&l.space)?;
        z1.push(quad_form(&s.mass, &l.u1).max(0.0).sqrt());
        z2_v.push(quad_form(&s.stiffness, &l.u2).max(0.0).sqrt());
    }
    let last = z1.len() - 1;
    let terminal = z1[last] + z2_v[last];
    let terminal_energy = (z1[last].powi(2) + z2_v[last].powi(2)).sqrt();
    let peak = z1.iter().zip(&z2_v).map(|(a, b)| a + b).fold(0.0, f64::max);
    let peak_energy = z1.iter().zip(&z2_v).map(|(a, b)| (a * a + b * b).sqrt()).fold(0.0, f64::max);
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(StabilityReport { terminal, ratio: div(peak, terminal), energy_ratio: div(peak_energy, terminal_energy), z1, z2_v })
}
