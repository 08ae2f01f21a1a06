//! cG(1)cG(1) time stepping: continuous piecewise-linear trial functions,
//! piecewise-constant test functions, with the memory term discretized by
//! exact slab weights.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::assembly::forms::{LoadData, Snapshot, SpaceTimeFunction};
use crate::assembly::{assemble_full, l2_moments, load_vector, time_rule, Operators};
use crate::error::{Error, Result};
use crate::kernel::{exp_moment, KernelSpec, PronyHistoryState};
use crate::linalg::{add_scaled, axpy, matvec, matvec_t, max_abs, quad_form, Factor};
use crate::mesh_time::{FeSpace, Overlay, SpatialMesh, TimePartition};
use crate::problems::ProblemSpec;

/// Default Gauss points per slab for time integrals of loads.
pub const DEFAULT_TIME_POINTS: usize = 5;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub time_points: usize,
    /// Use the exponential recurrence for Prony kernels on a fixed mesh.
    pub prony_recurrence: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { time_points: DEFAULT_TIME_POINTS, prony_recurrence: true }
    }
}

/// Discrete solution: one snapshot per time level.
#[derive(Clone, Debug)]
pub struct SpaceTimeSolution {
    pub partition: TimePartition,
    pub levels: Vec<Snapshot>,
}

impl SpaceTimeSolution {
    pub fn as_function(&self) -> SpaceTimeFunction {
        SpaceTimeFunction { partition: self.partition.clone(), pieces: self.levels.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect() }
    }

    pub fn spaces(&self) -> Vec<Arc<FeSpace>> {
        self.levels.iter().map(|l| l.space.clone()).collect()
    }

    pub fn meshes(&self) -> Vec<Arc<SpatialMesh>> {
        let mut out: Vec<Arc<SpatialMesh>> = Vec::new();
        for l in &self.levels {
            if !out.iter().any(|m| m.id() == l.space.id()) {
                out.push(l.space.mesh().clone());
            }
        }
        out
    }

    /// Space-time degrees of freedom: `Σ_n dim V_h^n` (both components).
    pub fn dofs(&self) -> usize {
        self.levels[1..].iter().map(|l| 2 * l.space.n_dofs()).sum()
    }
}

/// Loads of one slab as functionals on the slab test space.
pub struct SlabLoads {
    /// Load of the velocity equation (zero for the primal problem).
    pub f1: Option<Vec<f64>>,
    /// Load of the momentum equation.
    pub f2: Vec<f64>,
}

enum History {
    Dense,
    Prony(PronyHistoryState),
}

/// State of the time-marching: operators, factorizations, past levels.
pub struct Marcher<'a> {
    ops: &'a Operators,
    kernel: &'a KernelSpec,
    partition: &'a TimePartition,
    spaces: Vec<Arc<FeSpace>>,
    levels: Vec<Snapshot>,
    history: History,
    factors: HashMap<(u64, u64, u64), Arc<Factor>>,
}

impl<'a> Marcher<'a> {
    pub fn new(
        ops: &'a Operators,
        kernel: &'a KernelSpec,
        partition: &'a TimePartition,
        spaces: Vec<Arc<FeSpace>>,
        initial: Snapshot,
        prony_recurrence: bool,
    ) -> Result<Self> {
        if spaces.len() != partition.n_slabs() + 1 {
            return Err(Error::IncompatibleSlabbing(format!(
                "{} spaces for {} slabs",
                spaces.len(),
                partition.n_slabs()
            )));
        }
        let single = spaces.iter().all(|s| s.id() == spaces[0].id());
        let history = match kernel {
            KernelSpec::Prony(terms) if single && prony_recurrence => {
                History::Prony(PronyHistoryState::new(terms, spaces[0].n_dofs()))
            }
            _ => History::Dense,
        };
        let mut state = Marcher { ops, kernel, partition, spaces, levels: Vec::new(), history, factors: HashMap::new() };
        state.levels.push(initial);
        Ok(state)
    }

    pub fn levels(&self) -> &[Snapshot] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<Snapshot> {
        self.levels
    }

    /// `Σ_{j<n} ∫_{I_n}∫_{I_j} K(t-s) a(U1(s), φ) ds dt` on the test space of slab `n`.
    fn history_load(&mut self, n: usize) -> Result<Vec<f64>> {
        let test = self.spaces[n].clone();
        let mut out = vec![0.0; test.n_dofs()];
        if self.kernel.is_zero() || n == 1 {
            return Ok(out);
        }
        let slab_n = self.partition.slab(n);
        match &mut self.history {
            History::Prony(state) => {
                let prev = &self.levels;
                state.advance(self.partition.slab(n - 1), &prev[n - 2].u1, &prev[n - 1].u1)?;
                let k = slab_n.1 - slab_n.0;
                let mut acc = vec![0.0; test.n_dofs()];
                if let KernelSpec::Prony(terms) = self.kernel {
                    for (term, h) in terms.iter().zip(&state.h) {
                        axpy(&mut acc, term.gamma * exp_moment(term.lambda, k, 0), h);
                    }
                }
                let s = self.ops.set(&test)?;
                out = matvec(&s.stiffness, &acc);
            }
            History::Dense => {
                // group coefficient vectors by space before applying the cross stiffness
                let mut grouped: Vec<(usize, Vec<f64>)> = Vec::new();
                for j in 1..n {
                    let (wl, wr) = self.kernel.slab_weights(slab_n, self.partition.slab(j));
                    for (m, w) in [(j - 1, wl), (j, wr)] {
                        let lvl = &self.levels[m];
                        match grouped.iter_mut().find(|(idx, _)| self.levels[*idx].space.id() == lvl.space.id()) {
                            Some((_, acc)) => axpy(acc, w, &lvl.u1),
                            None => {
                                let mut acc = vec![0.0; lvl.u1.len()];
                                axpy(&mut acc, w, &lvl.u1);
                                grouped.push((m, acc));
                            }
                        }
                    }
                }
                for (idx, acc) in grouped {
                    let cross = self.ops.cross(&test, &self.levels[idx].space)?;
                    axpy(&mut out, 1.0, &matvec(&cross.stiffness, &acc));
                }
            }
        }
        Ok(out)
    }

    /// Advances over slab `n` (1-based) and returns the new level.
    pub fn step_slab(&mut self, n: usize, loads: &SlabLoads) -> Result<Snapshot> {
        if n != self.levels.len() {
            return Err(Error::NonContiguousSlab {
                start: self.partition.t(n - 1),
                end: self.partition.t(n),
                last: self.partition.t(self.levels.len() - 1),
            });
        }
        let space = self.spaces[n].clone();
        let (t0, t1) = self.partition.slab(n);
        let k = t1 - t0;
        let hist = self.history_load(n)?;
        let prev = self.levels[n - 1].clone();
        let own = self.ops.set(&space)?;
        let cross = self.ops.cross(&space, &prev.space)?;
        let mass_f = self.ops.mass_factor(&space)?;
        let (wl, wr) = self.kernel.slab_weights((t0, t1), (t0, t1));

        // velocity equation: U1ⁿ = c + (k/2) U2ⁿ
        let mut rhs1 = matvec(&cross.mass, &prev.u1);
        axpy(&mut rhs1, 0.5 * k, &matvec(&cross.mass, &prev.u2));
        if let Some(f1) = &loads.f1 {
            axpy(&mut rhs1, 1.0, f1);
        }
        let c = mass_f.solve(&rhs1);

        // momentum equation
        let mut rhs2 = loads.f2.clone();
        axpy(&mut rhs2, 1.0, &matvec(&cross.mass, &prev.u2));
        axpy(&mut rhs2, -(0.5 * k - wl), &matvec(&cross.stiffness, &prev.u1));
        axpy(&mut rhs2, 1.0, &hist);
        axpy(&mut rhs2, -(0.5 * k - wr), &matvec(&own.stiffness, &c));
        let key = (space.id(), k.to_bits(), wr.to_bits());
        let factor = match self.factors.get(&key) {
            Some(f) => f.clone(),
            None => {
                let a = add_scaled(&own.mass, 0.5 * k * (0.5 * k - wr), &own.stiffness);
                let f = Arc::new(Factor::new(&a)?);
                self.factors.insert(key, f.clone());
                f
            }
        };
        let u2 = factor.solve(&rhs2);
        let mut u1 = c;
        axpy(&mut u1, 0.5 * k, &u2);
        let snap = Snapshot { space, u1, u2 };
        self.levels.push(snap.clone());
        Ok(snap)
    }
}

/// `(P_h v1, P_h v2)` on a space.
pub fn project_initial(ops: &Operators, space: &Arc<FeSpace>, v1: &dyn Fn([f64; 2]) -> [f64; 2], v2: &dyn Fn([f64; 2]) -> [f64; 2]) -> Result<Snapshot> {
    let f = ops.mass_factor(space)?;
    Ok(Snapshot {
        space: space.clone(),
        u1: f.solve(&l2_moments(space, v1)),
        u2: f.solve(&l2_moments(space, v2)),
    })
}

fn check_meshes(partition: &TimePartition, meshes: &[Arc<SpatialMesh>]) -> Result<()> {
    if meshes.len() != partition.n_slabs() + 1 {
        return Err(Error::IncompatibleSlabbing(format!(
            "{} meshes for {} slabs",
            meshes.len(),
            partition.n_slabs()
        )));
    }
    if meshes[0].id() != meshes[1].id() {
        return Err(Error::MeshFamilyViolation("the meshes at t_0 and t_1 must coincide".into()));
    }
    if meshes.iter().any(|m| m.family() != meshes[0].family()) {
        return Err(Error::UnrelatedMeshes);
    }
    Ok(())
}

/// One space per distinct mesh, shared between levels.
pub fn spaces_for(meshes: &[Arc<SpatialMesh>]) -> Result<Vec<Arc<FeSpace>>> {
    let mut by_id: HashMap<u64, Arc<FeSpace>> = HashMap::new();
    meshes
        .iter()
        .map(|m| {
            if let Some(s) = by_id.get(&m.id()) {
                return Ok(s.clone());
            }
            let s = Arc::new(FeSpace::new(m.clone())?);
            by_id.insert(m.id(), s.clone());
            Ok(s)
        })
        .collect()
}

/// Solves the primal problem with `meshes[n]` at `t_n`.
pub fn solve_primal(problem: &ProblemSpec, partition: &TimePartition, meshes: &[Arc<SpatialMesh>]) -> Result<SpaceTimeSolution> {
    let ops = Operators::new(problem.params);
    solve_primal_with(problem, partition, meshes, &ops, &SolverOptions::default())
}

pub fn solve_primal_with(
    problem: &ProblemSpec,
    partition: &TimePartition,
    meshes: &[Arc<SpatialMesh>],
    ops: &Operators,
    opts: &SolverOptions,
) -> Result<SpaceTimeSolution> {
    check_meshes(partition, meshes)?;
    if (partition.horizon() - problem.horizon).abs() > 1e-12 * problem.horizon.max(1.0) {
        return Err(Error::IncompatibleSlabbing(format!(
            "partition ends at {} but the problem horizon is {}",
            partition.horizon(),
            problem.horizon
        )));
    }
    let spaces = spaces_for(meshes)?;
    let initial = project_initial(ops, &spaces[0], &*problem.load.u0, &*problem.load.v0)?;
    let mut marcher = Marcher::new(ops, problem.kernel.spec(), partition, spaces.clone(), initial, opts.prony_recurrence)?;
    for n in 1..=partition.n_slabs() {
        let f2 = slab_load(&spaces[n], &problem.load, partition.slab(n), opts.time_points);
        marcher.step_slab(n, &SlabLoads { f1: None, f2 })?;
    }
    Ok(SpaceTimeSolution { partition: partition.clone(), levels: marcher.into_levels() })
}

/// `∫_{I_n} (f, φ) + (g, φ)_{Γ_N}` by Gauss quadrature in time.
pub fn slab_load(space: &FeSpace, load: &LoadData, slab: (f64, f64), points: usize) -> Vec<f64> {
    load_vector(space, load.f.as_ref(), load.g.as_ref(), &time_rule(slab.0, slab.1, points))
}

/// `‖U2‖² + a(U1, U1)` at one level.
pub fn energy(ops: &Operators, level: &Snapshot) -> Result<f64> {
    let s = ops.set(&level.space)?;
    Ok(quad_form(&s.mass, &level.u2) + quad_form(&s.stiffness, &level.u1))
}

/// Largest `|B(U, V) − L(V)|` over the test basis, with a scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GalerkinResidual {
    pub max_abs: f64,
    pub scale: f64,
}

impl GalerkinResidual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.max_abs / self.scale
        } else {
            self.max_abs
        }
    }
}

/// Evaluates the slab equations for every test basis function on the overlay
/// of all meshes, with the memory term summed slab by slab.
pub fn galerkin_residual(u: &SpaceTimeSolution, problem: &ProblemSpec, time_points: usize) -> Result<GalerkinResidual> {
    let meshes = u.meshes();
    let refs: Vec<&Arc<SpatialMesh>> = meshes.iter().collect();
    let ov = Overlay::new(&refs)?;
    let ncomp = u.levels[0].space.ncomp();
    let (mass, stiff) = assemble_full(ov.mesh(), &problem.params, ncomp)?;
    let lift = |s: &Snapshot, v: &[f64]| ov.prolong(s.space.id(), &s.space.expand(v), ncomp);
    let g1: Vec<Vec<f64>> = u.levels.iter().map(|l| lift(l, &l.u1)).collect();
    let g2: Vec<Vec<f64>> = u.levels.iter().map(|l| lift(l, &l.u2)).collect();
    let sg1: Vec<Vec<f64>> = g1.iter().map(|v| matvec(&stiff, v)).collect();
    let restrict = |space: &FeSpace, full_g: &[f64]| -> Result<Vec<f64>> {
        let p = crate::mesh_time::prolongation(space.mesh(), ov.mesh())?;
        let p = crate::linalg::kron_identity(&p, ncomp);
        Ok(space.restrict(&matvec_t(&p, full_g)))
    };
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let part = &u.partition;
    for n in 1..=part.n_slabs() {
        let space = &u.levels[n].space;
        let (t0, t1) = part.slab(n);
        let k = t1 - t0;
        let d1: Vec<f64> = g1[n].iter().zip(&g1[n - 1]).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = g2[n].iter().zip(&g2[n - 1]).map(|(a, b)| a - b).collect();
        let s2: Vec<f64> = g2[n].iter().zip(&g2[n - 1]).map(|(a, b)| a + b).collect();
        let mut r1 = matvec(&mass, &d1);
        axpy(&mut r1, -0.5 * k, &matvec(&mass, &s2));
        let m2 = matvec(&mass, &d2);
        let mut elastic = vec![0.0; m2.len()];
        axpy(&mut elastic, 0.5 * k, &sg1[n - 1]);
        axpy(&mut elastic, 0.5 * k, &sg1[n]);
        let mut memory = vec![0.0; m2.len()];
        for j in 1..=n {
            let (wl, wr) = problem.kernel.slab_weights((t0, t1), part.slab(j));
            axpy(&mut memory, wl, &sg1[j - 1]);
            axpy(&mut memory, wr, &sg1[j]);
        }
        let mut r2 = m2.clone();
        axpy(&mut r2, 1.0, &elastic);
        axpy(&mut r2, -1.0, &memory);
        let mut r1 = restrict(space, &r1)?;
        let mut r2 = restrict(space, &r2)?;
        let load = slab_load(space, &problem.load, (t0, t1), time_points);
        axpy(&mut r2, -1.0, &load);
        scale = scale
            .max(max_abs(&restrict(space, &m2)?))
            .max(max_abs(&restrict(space, &elastic)?))
            .max(max_abs(&load));
        if n == 1 {
            let init1 = restrict(space, &matvec(&mass, &g1[0]))?;
            let init2 = restrict(space, &matvec(&mass, &g2[0]))?;
            let m1 = l2_moments(space, &*problem.load.u0);
            let m2 = l2_moments(space, &*problem.load.v0);
            scale = scale.max(max_abs(&m1)).max(max_abs(&m2));
            for i in 0..r1.len() {
                r1[i] += init1[i] - m1[i];
                r2[i] += init2[i] - m2[i];
            }
        }
        worst = worst.max(max_abs(&r1)).max(max_abs(&r2));
    }
    Ok(GalerkinResidual { max_abs: worst, scale })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"VFEMCKP1";

/// One level read back from a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointLevel {
    pub space_id: u64,
    pub time: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

/// Layout: magic `VFEMCKP1`, `u64` level count, then per level `u64` space
/// id, `u64` length `n`, `f64` time, `n` values of `U1`, `n` values of `U2`.
/// All integers and floats little-endian.
pub fn write_checkpoint(path: &Path, u: &SpaceTimeSolution) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(u.levels.len() as u64).to_le_bytes());
    for (n, l) in u.levels.iter().enumerate() {
        buf.extend_from_slice(&l.space.id().to_le_bytes());
        buf.extend_from_slice(&(l.u1.len() as u64).to_le_bytes());
        buf.extend_from_slice(&u.partition.t(n).to_le_bytes());
        for v in l.u1.iter().chain(&l.u2) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointLevel>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = || Error::Config(format!("{}: malformed checkpoint", path.display()));
    if buf.len() < 16 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad());
    }
    let mut pos = 8;
    let word = |pos: &mut usize| -> Result<[u8; 8]> {
        let w: [u8; 8] = buf.get(*pos..*pos + 8).ok_or_else(bad)?.try_into().unwrap();
        *pos += 8;
        Ok(w)
    };
    let count = u64::from_le_bytes(word(&mut pos)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let space_id = u64::from_le_bytes(word(&mut pos)?);
        let len = u64::from_le_bytes(word(&mut pos)?) as usize;
        let time = f64::from_le_bytes(word(&mut pos)?);
        let mut vals = Vec::with_capacity(2 * len);
        for _ in 0..2 * len {
            vals.push(f64::from_le_bytes(word(&mut pos)?));
        }
        let u2 = vals.split_off(len);
        out.push(CheckpointLevel { space_id, time, u1: vals, u2 });
    }
    Ok(out)
}

/// `‖U1(t_n) − u1(t_n)‖` per level, against an exact displacement, by
/// quadrature on each level's mesh.
pub fn displacement_errors(u: &SpaceTimeSolution, exact: &crate::assembly::SpaceTimeFn) -> Vec<f64> {
    u.levels
        .iter()
        .enumerate()
        .map(|(n, l)| l2_error(&l.space, &l.u1, &|x| exact(x, u.partition.t(n))))
        .collect()
}

/// `‖v_h − v‖_{L2}` with the cell quadrature of the assembly module.
pub fn l2_error(space: &FeSpace, coeffs: &[f64], v: &dyn Fn([f64; 2]) -> [f64; 2]) -> f64 {
    use crate::assembly::quadrature::{cell_rule, map_point};
    let mesh = space.mesh();
    let full = space.expand(coeffs);
    let ncomp = space.ncomp();
    let nv = mesh.verts_per_cell();
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_coords(c);
        let meas = mesh.measure(c);
        let verts = mesh.cell(c).verts;
        for (bary, w) in cell_rule(mesh.dim()) {
            let p = map_point(mesh.dim(), &x, bary);
            let exact = v(p);
            for comp in 0..ncomp {
                let uh: f64 = (0..nv).map(|i| bary[i] * full[verts[i] * ncomp + comp]).sum();
                total += w * meas * (uh - exact[comp]).powi(2);
            }
        }
    }
    total.sqrt()
}
