//! Goal-oriented adaptive loop: primal solve, enriched dual solve, cellwise
//! indicators, Dörfler marking, refinement in space and time.

use std::sync::Arc;

use crate::assembly::{integrate, l2_moments, Operators};
use crate::dual_solver::{solve_dual, Enrichment, GoalFunctional};
use crate::error::{Error, Result};
use crate::estimators::{default_z_hk, theta_representation, theta_space_time_split, Representation};
use crate::linalg::dot;
use crate::mesh_time::{owner_map, refine, union_mesh, SpatialMesh, TimePartition};
use crate::primal_solver::{solve_primal, SpaceTimeSolution};
use crate::problems::ProblemSpec;

/// Which refinement a marked cell triggers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// Halve the slab when its time share of `|Θ|` exceeds its space share,
    /// otherwise refine the cell.
    Indicator,
    Space,
    Time,
    /// Refine the cell and halve the slab.
    Both,
}

#[derive(Clone)]
pub struct AdaptConfig {
    pub goal: GoalFunctional,
    pub tolerance: f64,
    /// Dörfler fraction in `(0, 1]`.
    pub fraction: f64,
    pub max_iterations: usize,
    pub split: SplitRule,
    pub representation: Representation,
    pub enrichment: Enrichment,
}

impl AdaptConfig {
    pub fn new(goal: GoalFunctional, tolerance: f64) -> Self {
        AdaptConfig {
            goal,
            tolerance,
            fraction: 0.5,
            max_iterations: 8,
            split: SplitRule::Indicator,
            representation: Representation::Cellwise,
            enrichment: Enrichment::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("adapt.fraction must lie in (0, 1], got {}", self.fraction)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("adapt.tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptStep {
    pub iteration: usize,
    /// Largest spatial DOF count over the time levels.
    pub dofs_space: usize,
    /// Number of slabs.
    pub dofs_time: usize,
    /// Space-time DOFs of the primal solution.
    pub dofs_total: usize,
    /// `|Θ total|`.
    pub estimate: f64,
    /// `|L*(e)|` when an exact solution is known.
    pub true_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AdaptHistory {
    pub steps: Vec<AdaptStep>,
    pub converged: bool,
    pub partition: TimePartition,
    pub meshes: Vec<Arc<SpatialMesh>>,
}

/// Indices carrying at least `fraction` of the total of `values`, largest
/// first, ties by ascending index.
pub fn dorfler_mark(values: &[f64], fraction: f64) -> Vec<usize> {
    let total: f64 = values.iter().sum();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    if fraction >= 1.0 {
        return order;
    }
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= fraction * total {
            break;
        }
        acc += values[i];
        out.push(i);
    }
    out
}

/// `|(U1(T) - u1(T), weight)|` for end-time goals with a known solution.
fn true_goal_error(u: &SpaceTimeSolution, problem: &ProblemSpec, goal: &GoalFunctional) -> Option<f64> {
    let (GoalFunctional::EndTimeDisplacement { weight }, Some(exact)) = (goal, &problem.exact) else {
        return None;
    };
    let last = u.levels.last()?;
    let horizon = u.partition.horizon();
    let discrete = dot(&l2_moments(&last.space, &**weight), &last.u1);
    let exact_part = integrate(last.space.mesh(), &|p| dot(&(exact.u1)(p, horizon), &weight(p)));
    Some((discrete - exact_part).abs())
}

/// One pass of solve, estimate and mark. Returns the step record and the
/// refined discretization.
fn iterate(
    problem: &ProblemSpec,
    ops: &Operators,
    partition: &TimePartition,
    meshes: &[Arc<SpatialMesh>],
    config: &AdaptConfig,
    iteration: usize,
) -> Result<(AdaptStep, TimePartition, Vec<Arc<SpatialMesh>>)> {
    let u = solve_primal(problem, partition, meshes)?;
    let z = solve_dual(problem.kernel.spec(), ops, &config.goal.data(), partition, meshes, config.enrichment)?;
    let z_ref = z.z.as_function();
    let z_hk = default_z_hk(ops, &u, &z_ref)?;
    let theta = theta_representation(&u, &z_ref, &z_hk, config.representation, problem)?;
    let step = AdaptStep {
        iteration,
        dofs_space: u.levels.iter().map(|l| l.space.n_dofs()).max().unwrap_or(0),
        dofs_time: partition.n_slabs(),
        dofs_total: u.dofs(),
        estimate: theta.total().abs(),
        true_error: true_goal_error(&u, problem, &config.goal),
    };
    if step.estimate <= config.tolerance {
        return Ok((step, partition.clone(), meshes.to_vec()));
    }
    let n_slabs = partition.n_slabs();
    // (slab, cell of T̄^n) with slab 0 for the initial cells
    let mut items: Vec<(usize, usize)> = (0..theta.theta0.len()).map(|c| (0, c)).collect();
    let mut values: Vec<f64> = theta.theta0.iter().map(|v| v.abs()).collect();
    for n in 1..=n_slabs {
        for (c, v) in theta.cell_indicators(n).into_iter().enumerate() {
            items.push((n, c));
            values.push(v.abs());
        }
    }
    let marked = dorfler_mark(&values, config.fraction);
    let time_dominant: Vec<bool> = match config.split {
        SplitRule::Indicator => {
            let (space, time) = theta_space_time_split(ops, &u, &z_ref, problem)?;
            (1..=n_slabs)
                .map(|n| {
                    let s: f64 = space.cell_indicators(n).iter().map(|v| v.abs()).sum();
                    let t: f64 = time.cell_indicators(n).iter().map(|v| v.abs()).sum();
                    t > s
                })
                .collect()
        }
        _ => vec![config.split == SplitRule::Time; n_slabs],
    };
    let refine_space = |n: usize| config.split != SplitRule::Time && (n == 0 || !time_dominant[n - 1] || config.split == SplitRule::Both);
    let refine_time = |n: usize| n > 0 && (config.split == SplitRule::Both || time_dominant[n - 1]);

    let mut cell_marks: Vec<Vec<usize>> = vec![Vec::new(); n_slabs + 1];
    let mut slab_marks = Vec::new();
    let mut owners: Vec<Option<Vec<usize>>> = vec![None; n_slabs + 1];
    for &i in &marked {
        let (n, c) = items[i];
        if refine_time(n) && !slab_marks.contains(&n) {
            slab_marks.push(n);
        }
        if refine_space(n) {
            let cell = if n == 0 {
                c
            } else {
                if owners[n].is_none() {
                    let um = union_mesh(&meshes[n - 1], &meshes[n])?;
                    owners[n] = Some(owner_map(&um.mesh, &meshes[n])?);
                }
                owners[n].as_ref().unwrap()[c]
            };
            cell_marks[n].push(cell);
        }
    }
    // the first slab starts on its own mesh, so initial cells refine level 1
    let initial = std::mem::take(&mut cell_marks[0]);
    cell_marks[1].extend(initial);
    let mut new_meshes: Vec<Arc<SpatialMesh>> = meshes
        .iter()
        .zip(&cell_marks)
        .map(|(m, marks)| if marks.is_empty() { m.clone() } else { Arc::new(refine(m, marks)) })
        .collect();
    new_meshes[0] = new_meshes[1].clone();
    slab_marks.sort_unstable();
    let new_partition = partition.refine_slabs(&slab_marks);
    if !slab_marks.is_empty() {
        // the new node inside a halved slab inherits the end mesh
        let mut out = Vec::with_capacity(new_partition.n_slabs() + 1);
        out.push(new_meshes[0].clone());
        for n in 1..=n_slabs {
            if slab_marks.binary_search(&n).is_ok() {
                out.push(new_meshes[n].clone());
            }
            out.push(new_meshes[n].clone());
        }
        new_meshes = out;
    }
    Ok((step, new_partition, new_meshes))
}

/// Runs the loop until `|Θ total| ≤ tolerance`. `BudgetExceeded` carries
/// the history when the iteration limit is hit first.
pub fn adapt_loop(
    problem: &ProblemSpec,
    partition: TimePartition,
    meshes: Vec<Arc<SpatialMesh>>,
    config: &AdaptConfig,
) -> std::result::Result<AdaptHistory, (Error, AdaptHistory)> {
    let empty = |partition: TimePartition, meshes: Vec<Arc<SpatialMesh>>| AdaptHistory { steps: Vec::new(), converged: false, partition, meshes };
    if let Err(e) = config.validate() {
        return Err((e, empty(partition, meshes)));
    }
    if meshes.len() != partition.n_slabs() + 1 {
        let e = Error::Config(format!("{} meshes for {} slabs", meshes.len(), partition.n_slabs()));
        return Err((e, empty(partition, meshes)));
    }
    let ops = Operators::new(problem.params);
    let mut history = empty(partition, meshes);
    for iteration in 0..=config.max_iterations {
        let (step, partition, meshes) = match iterate(problem, &ops, &history.partition, &history.meshes, config, iteration) {
            Ok(r) => r,
            Err(e) => return Err((e, history)),
        };
        let done = step.estimate <= config.tolerance;
        history.steps.push(step);
        if done {
            history.converged = true;
            return Ok(history);
        }
        if iteration == config.max_iterations {
            break;
        }
        history.partition = partition;
        history.meshes = meshes;
    }
    let e = Error::BudgetExceeded { iterations: config.max_iterations };
    Err((e, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dorfler_ties_by_index() {
        assert_eq!(dorfler_mark(&[1.0, 3.0, 1.0, 1.0], 0.5), vec![1]);
        assert_eq!(dorfler_mark(&[1.0, 1.0, 1.0, 1.0], 0.5), vec![0, 1]);
        assert_eq!(dorfler_mark(&[0.0, 2.0, 1.0], 1.0), vec![1, 2, 0]);
    }
}
