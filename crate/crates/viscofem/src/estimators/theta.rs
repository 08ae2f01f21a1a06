//! The three error representations: cellwise indicators `Θ` of the residual
//! of `U` weighted by `w = z - z_hk`, evaluated on the overlay of the primal,
//! dual and projected dual meshes.

use std::sync::Arc;

use rayon::prelude::*;

use super::residuals::{dot2, lerp, lerp2, Residuals};
use crate::assembly::forms::{merged_nodes, segments, LoadData, Segment, SpaceTimeFunction};
use crate::assembly::quadrature::{cell_rule, map_point};
use crate::assembly::{time_rule, Operators};
use crate::error::{Error, Result};
use crate::kernel::{Affine, KernelSpec};
use crate::mesh_time::{SpatialMesh, TimePartition};
use crate::primal_solver::SpaceTimeSolution;
use crate::problems::ProblemSpec;
use crate::projections::{ph_project_function, pkph_project};

/// Gauss points per sub-interval for time integrals of data.
const DATA_POINTS: usize = 5;

/// Gauss points per piece of the pointwise memory quadratures.
const MEMORY_POINTS: usize = 8;
const GRADED_LEVELS: usize = 14;
const GRADING_RATIO: f64 = 0.15;

/// Which form of the memory indicator to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// `Θ_5^{n,j}` over the convolved residual `(K*r_d)^j`.
    Convolved,
    /// `Θ_5^n` over the forward tail `∫_t^T K(s-t) w2(s) ds`; fully cellwise.
    Cellwise,
    /// `Θ_5^{N,j}` over the tail restricted to slab `j`.
    Tail,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Convolved, Representation::Cellwise, Representation::Tail];

    /// 1, 2 or 3.
    pub fn index(self) -> usize {
        match self {
            Representation::Convolved => 1,
            Representation::Cellwise => 2,
            Representation::Tail => 3,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Representation::Convolved),
            2 => Ok(Representation::Cellwise),
            3 => Ok(Representation::Tail),
            _ => Err(Error::Config(format!("representation must be 1, 2 or 3, got {i}"))),
        }
    }
}

/// Memory indicator of one slab pair, per cell of `T̄^{r}` where `r` is the
/// slab carrying `r_d`.
#[derive(Clone, Debug)]
pub struct FifthBlock {
    /// Outer index: the `w` slab (rep 1) or the `r_d` slab (rep 3).
    pub n: usize,
    /// Inner index: the `r_d` slab (rep 1) or the `w` slab (rep 3).
    pub j: usize,
    pub cells: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ThetaBreakdown {
    pub representation: Representation,
    /// `Θ_{0,K}` per cell of `T^0`.
    pub theta0: Vec<f64>,
    /// `slabs[n-1][K] = [Θ_1, Θ_2, Θ_3, Θ_4, Θ_5]` for `K ∈ T̄^n`; the fifth
    /// entry is `Θ_{5,K}^n` in rep 2 and the sum of the blocks attributed to
    /// `K` otherwise.
    pub slabs: Vec<Vec<[f64; 5]>>,
    /// Slab-pair memory indicators; empty in rep 2.
    pub fifth: Vec<FifthBlock>,
}

impl ThetaBreakdown {
    pub fn total(&self) -> f64 {
        let mut s: f64 = self.theta0.iter().sum();
        for slab in &self.slabs {
            for row in slab {
                s += row.iter().sum::<f64>();
            }
        }
        s
    }

    /// `Σ_i Θ_{i,K}^n` per cell of `T̄^n`.
    pub fn cell_indicators(&self, n: usize) -> Vec<f64> {
        self.slabs[n - 1].iter().map(|r| r.iter().sum()).collect()
    }

    /// Per-slab sums of the five indicators.
    pub fn slab_totals(&self) -> Vec<[f64; 5]> {
        self.slabs
            .iter()
            .map(|s| {
                let mut out = [0.0; 5];
                for row in s {
                    for i in 0..5 {
                        out[i] += row[i];
                    }
                }
                out
            })
            .collect()
    }
}

/// `P_k P_h z_ref` onto the test spaces of `u`.
pub fn default_z_hk(ops: &Operators, u: &SpaceTimeSolution, z_ref: &SpaceTimeFunction) -> Result<SpaceTimeFunction> {
    pkph_project(ops, z_ref, &u.partition, &u.spaces())
}

/// One representation with `w = z_ref - z_hk`.
pub fn theta_representation(
    u: &SpaceTimeSolution,
    z_ref: &SpaceTimeFunction,
    z_hk: &SpaceTimeFunction,
    rep: Representation,
    problem: &ProblemSpec,
) -> Result<ThetaBreakdown> {
    Ok(ThetaCore::new(u, z_ref, z_hk, problem, None)?.label(rep))
}

/// All three representations from one evaluation.
pub fn theta_all(
    u: &SpaceTimeSolution,
    z_ref: &SpaceTimeFunction,
    z_hk: &SpaceTimeFunction,
    problem: &ProblemSpec,
) -> Result<[ThetaBreakdown; 3]> {
    let core = ThetaCore::new(u, z_ref, z_hk, problem, None)?;
    Ok(Representation::ALL.map(|r| core.label(r)))
}

/// Rep 2 with `w` split into its spatial part `z_ref - P_h z_ref` and its
/// temporal part `P_h z_ref - P_k P_h z_ref`; the two totals add up to the
/// full one.
pub fn theta_space_time_split(
    ops: &Operators,
    u: &SpaceTimeSolution,
    z_ref: &SpaceTimeFunction,
    problem: &ProblemSpec,
) -> Result<(ThetaBreakdown, ThetaBreakdown)> {
    let ph = ph_project_function(ops, z_ref, &u.partition, &u.spaces())?;
    let pkph = crate::projections::pk_project_function(&ph, &u.partition)?;
    let space = ThetaCore::new(u, z_ref, &ph, problem, None)?.label(Representation::Cellwise);
    let time = ThetaCore::new(u, &ph, &pkph, problem, Some(z_ref))?.label(Representation::Cellwise);
    Ok((space, time))
}

struct ThetaCore {
    res: Residuals,
    w: Vec<Weight>,
    slab_of: Vec<usize>,
    load: LoadData,
    theta0: Vec<f64>,
    /// `Θ_1..Θ_4`; the fifth entry is filled per representation.
    slabs: Vec<Vec<[f64; 5]>>,
    /// `psi[i][q][e]`: integral of the nodal value `q` of `w2` on segment `i`
    /// over interior facet `e`.
    psi: Vec<[Vec<[f64; 2]>; 2]>,
}

impl ThetaCore {
    fn ctx(&self) -> Ctx<'_> {
        Ctx { res: &self.res, w: &self.w, slab_of: &self.slab_of, load: &self.load }
    }

    fn label(&self, rep: Representation) -> ThetaBreakdown {
        let ctx = self.ctx();
        let n_slabs = self.res.partition.n_slabs();
        let memory: Vec<(Vec<f64>, Vec<(usize, usize, Vec<f64>)>)> = (1..=n_slabs)
            .into_par_iter()
            .map(|j| match rep {
                Representation::Cellwise => (ctx.memory_for(j, &self.psi), Vec::new()),
                Representation::Convolved => ctx.memory_convolved(j, &self.psi),
                Representation::Tail => ctx.memory_tail(j, &self.psi),
            })
            .collect();
        let mut slabs = self.slabs.clone();
        let mut fifth = Vec::new();
        for (j, (cells, blocks)) in memory.into_iter().enumerate() {
            for (k, v) in cells.into_iter().enumerate() {
                slabs[j][k][4] += v;
            }
            fifth.extend(blocks.into_iter().map(|(n, j, cells)| FifthBlock { n, j, cells }));
        }
        fifth.sort_by_key(|x| (x.n, x.j));
        ThetaBreakdown { representation: rep, theta0: self.theta0.clone(), slabs, fifth }
    }

    /// `overlay_with` adds meshes to the overlay so that several calls share
    /// one set of cells.
    fn new(
        u: &SpaceTimeSolution,
        plus: &SpaceTimeFunction,
        minus: &SpaceTimeFunction,
        problem: &ProblemSpec,
        overlay_with: Option<&SpaceTimeFunction>,
    ) -> Result<Self> {
        for f in [plus, minus] {
            if !u.partition.is_refined_by(&f.partition) {
                return Err(Error::IncompatibleDualDiscretization("the dual partition does not refine the primal slabs".into()));
            }
            if f.pieces[0].0.space.ncomp() != u.levels[0].space.ncomp() {
                return Err(Error::IncompatibleDualDiscretization("component counts differ".into()));
            }
        }
        let mut extra: Vec<Arc<SpatialMesh>> = plus.meshes();
        extra.extend(minus.meshes());
        if let Some(f) = overlay_with {
            extra.extend(f.meshes());
        }
        let family = u.levels[0].space.mesh().family();
        if extra.iter().any(|m| m.family() != family) {
            return Err(Error::IncompatibleDualDiscretization("dual meshes come from another forest".into()));
        }
        let res = Residuals::new(u, problem, &extra)?;
        let nodes = merge3(&u.partition, &plus.partition, &minus.partition)?;
        let sp = segments(&res.overlay, plus, &nodes);
        let sm = segments(&res.overlay, minus, &nodes);
        let w: Vec<Weight> = sp.iter().zip(&sm).map(|(p, m)| Weight::new(p, m)).collect();
        let slab_of: Vec<usize> = w.iter().map(|s| u.partition.slab_of(0.5 * (s.a.0 + s.a.1))).collect();

        let theta0 = initial_terms(&res, &w[0], &problem.load);
        let n_slabs = u.partition.n_slabs();
        let ctx = Ctx { res: &res, w: &w, slab_of: &slab_of, load: &problem.load };
        let slabs: Vec<Vec<[f64; 5]>> = (1..=n_slabs).into_par_iter().map(|n| ctx.slab_terms(n)).collect();
        let psi: Vec<[Vec<[f64; 2]>; 2]> = w
            .par_iter()
            .map(|s| {
                let f = |v: &[f64]| -> Vec<[f64; 2]> {
                    res.edges.facets.iter().map(|&i| res.overlay.facet_integral(v, res.ncomp, res.facet(i))).collect()
                };
                [f(&s.w2[0]), f(&s.w2[1])]
            })
            .collect();
        Ok(ThetaCore { res, w, slab_of, load: problem.load.clone(), theta0, slabs, psi })
    }
}

fn merge3(a: &TimePartition, b: &TimePartition, c: &TimePartition) -> Result<Vec<f64>> {
    let ab = TimePartition::new(merged_nodes(a, b)?)?;
    merged_nodes(&ab, c)
}

/// `w = plus - minus` at the ends of one sub-interval.
struct Weight {
    a: (f64, f64),
    w1: [Vec<f64>; 2],
    w2: [Vec<f64>; 2],
}

impl Weight {
    fn new(p: &Segment, m: &Segment) -> Self {
        let d = |x: &Vec<f64>, y: &Vec<f64>| -> Vec<f64> { x.iter().zip(y).map(|(a, b)| a - b).collect() };
        Weight {
            a: p.a,
            w1: [d(&p.u1[0], &m.u1[0]), d(&p.u1[1], &m.u1[1])],
            w2: [d(&p.u2[0], &m.u2[0]), d(&p.u2[1], &m.u2[1])],
        }
    }
}

/// P1 field value at barycentric coordinates of overlay cell `c`.
pub(crate) fn p1_at(mesh: &SpatialMesh, v: &[f64], ncomp: usize, c: usize, bary: &[f64; 3]) -> [f64; 2] {
    let verts = mesh.cell(c).verts;
    let mut out = [0.0; 2];
    for (comp, o) in out.iter_mut().enumerate().take(ncomp) {
        *o = (0..mesh.verts_per_cell()).map(|i| bary[i] * v[verts[i] * ncomp + comp]).sum();
    }
    out
}

/// `∫_c φ(x, bary)` on overlay cell `c`.
pub(crate) fn cell_integral(res: &Residuals, c: usize, phi: &dyn Fn([f64; 2], &[f64; 3]) -> f64) -> f64 {
    let mesh = res.overlay.mesh();
    let dim = mesh.dim();
    let x = mesh.cell_coords(c);
    cell_rule(dim).iter().map(|(b, wq)| wq * phi(map_point(dim, &x, b), b)).sum::<f64>() * res.overlay.measure(c)
}

/// `∫_I x·y` for vectors linear in time with end values `x0, x1`, `y0, y1`.
fn linear_dot(x: [[f64; 2]; 2], y: [[f64; 2]; 2], k: f64) -> f64 {
    k / 6.0 * (2.0 * dot2(x[0], y[0]) + dot2(x[0], y[1]) + dot2(x[1], y[0]) + 2.0 * dot2(x[1], y[1]))
}

fn initial_terms(res: &Residuals, w: &Weight, load: &LoadData) -> Vec<f64> {
    let mesh = res.overlay.mesh();
    let owners = res.overlay.owners(res.mesh0.id());
    let (u1, u2) = (&res.u1[0], &res.u2[0]);
    let nc = res.ncomp;
    let per_cell: Vec<f64> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            cell_integral(res, c, &|x, b| {
                let (a1, a2) = (p1_at(mesh, u1, nc, c, b), p1_at(mesh, u2, nc, c, b));
                let (z1, z2) = (p1_at(mesh, &w.w1[0], nc, c, b), p1_at(mesh, &w.w2[0], nc, c, b));
                let (e1, e2) = ((load.u0)(x), (load.v0)(x));
                dot2([a1[0] - e1[0], a1[1] - e1[1]], z1) + dot2([a2[0] - e2[0], a2[1] - e2[1]], z2)
            })
        })
        .collect();
    let mut out = vec![0.0; res.mesh0.n_cells()];
    for (c, v) in per_cell.into_iter().enumerate() {
        out[owners[c]] += v;
    }
    out
}

struct Ctx<'a> {
    res: &'a Residuals,
    w: &'a [Weight],
    slab_of: &'a [usize],
    load: &'a LoadData,
}

impl Ctx<'_> {
    /// `Θ_1..Θ_4` on `T̄^n`.
    fn slab_terms(&self, n: usize) -> Vec<[f64; 5]> {
        let res = self.res;
        let ov = &res.overlay;
        let mesh = ov.mesh();
        let nc = res.ncomp;
        let owners = res.union_owners(n);
        let mut out = vec![[0.0; 5]; res.unions[n - 1].mesh.n_cells()];
        let (d1, d2) = res.rates(n);
        let (t0, t1) = res.partition.slab(n);
        let kn = t1 - t0;
        for (i, w) in self.w.iter().enumerate() {
            if self.slab_of[i] != n {
                continue;
            }
            let (a, b) = w.a;
            let kj = b - a;
            let (sa, sb) = ((a - t0) / kn, (b - t0) / kn);
            let u2a = lerp(&res.u2[n - 1], &res.u2[n], sa);
            let u2b = lerp(&res.u2[n - 1], &res.u2[n], sb);
            let x0: Vec<f64> = d1.iter().zip(&u2a).map(|(p, q)| p - q).collect();
            let x1: Vec<f64> = d1.iter().zip(&u2b).map(|(p, q)| p - q).collect();
            let w2sum: Vec<f64> = w.w2[0].iter().zip(&w.w2[1]).map(|(p, q)| p + q).collect();
            let times = time_rule(a, b, DATA_POINTS);
            for c in 0..mesh.n_cells() {
                let k = owners[c];
                let cp = |p: &[f64], q: &[f64]| ov.cell_product(p, q, nc, c);
                out[k][0] += kj / 6.0
                    * (2.0 * cp(&x0, &w.w1[0]) + cp(&x0, &w.w1[1]) + cp(&x1, &w.w1[0]) + 2.0 * cp(&x1, &w.w1[1]));
                out[k][1] += 0.5 * kj * cp(&d2, &w2sum);
                if let Some(f) = &self.load.f {
                    out[k][1] -= cell_integral(res, c, &|x, bary| {
                        let z0 = p1_at(mesh, &w.w2[0], nc, c, bary);
                        let z1 = p1_at(mesh, &w.w2[1], nc, c, bary);
                        times
                            .iter()
                            .map(|&(t, wt)| wt * dot2(f(x, t), lerp2(z0, z1, (t - a) / kj)))
                            .sum::<f64>()
                    });
                }
            }
            // Neumann facets
            let coeffs: Vec<[[f64; 2]; 2]> = self.history_moments(i);
            for (e, &fi) in res.neumann.facets.iter().enumerate() {
                let f = res.facet(fi);
                let psi = [ov.facet_integral(&w.w2[0], nc, f), ov.facet_integral(&w.w2[1], nc, f)];
                let tr = [res.neumann.elastic(e, a), res.neumann.elastic(e, b)];
                let mut v = linear_dot(tr, psi, kj);
                for (j, d) in coeffs.iter().enumerate() {
                    let j = j + 1;
                    for (q, dq) in d.iter().enumerate() {
                        for (qp, dqq) in dq.iter().enumerate() {
                            v -= dqq * dot2(psi[q], res.neumann.traction[j - 1 + qp][e]);
                        }
                    }
                }
                if let Some(g) = res.g() {
                    v -= super::residuals::facet_quadrature(f, &|x| {
                        let z0 = ov.eval(&w.w2[0], nc, f.left, x);
                        let z1 = ov.eval(&w.w2[1], nc, f.left, x);
                        times.iter().map(|&(t, wt)| wt * dot2(g(x, t), lerp2(z0, z1, (t - a) / kj))).sum::<f64>()
                    });
                }
                out[owners[f.left]][2] += v;
            }
            // interior facets
            for (e, &fi) in res.edges.facets.iter().enumerate() {
                let f = res.facet(fi);
                let psi = [ov.facet_integral(&w.w2[0], nc, f), ov.facet_integral(&w.w2[1], nc, f)];
                let (r0, r1) = res.edges.on_slab(n, e);
                let r = [lerp2(r0, r1, sa), lerp2(r0, r1, sb)];
                let v = linear_dot(r, psi, kj);
                out[owners[f.left]][3] += v;
                out[owners[f.right.unwrap()]][3] += v;
            }
        }
        out
    }

    /// `D[j-1][q][q'] = ∫_{J_i} ∫_{I_j, s<t} K(t-s) λ_q(t) λ_{q'}(s)` for all
    /// primal slabs `j` up to the one containing `J_i`.
    fn history_moments(&self, i: usize) -> Vec<[[f64; 2]; 2]> {
        history_moments(&self.res.kernel, &self.res.partition, self.w[i].a, self.slab_of[i])
    }

    /// `Θ_5` per cell of `T̄^j` for the `r_d` of slab `j`, with exact double
    /// moments of the kernel.
    fn memory_for(&self, j: usize, psi: &[[Vec<[f64; 2]>; 2]]) -> Vec<f64> {
        let res = self.res;
        let mut cells = vec![0.0; res.unions[j - 1].mesh.n_cells()];
        if res.kernel.is_zero() {
            return cells;
        }
        let slab_j = res.partition.slab(j);
        for (i, w) in self.w.iter().enumerate() {
            if self.slab_of[i] < j {
                continue;
            }
            let d: [[f64; 2]; 2] = std::array::from_fn(|q| {
                std::array::from_fn(|qp| res.kernel.double_moment_lower(&Affine::shape(w.a, q), &Affine::shape(slab_j, qp)))
            });
            self.scatter(j, &psi[i], &d, &mut cells);
        }
        cells
    }

    /// `Θ_5^{n,j}`: `w2` on slab `n` against `(K*r_d)^j` evaluated pointwise
    /// in `t`, per cell of `T̄^j`.
    fn memory_convolved(&self, j: usize, psi: &[[Vec<[f64; 2]>; 2]]) -> (Vec<f64>, Vec<(usize, usize, Vec<f64>)>) {
        let res = self.res;
        let n_cells = res.unions[j - 1].mesh.n_cells();
        let mut cells = vec![0.0; n_cells];
        let mut blocks: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        if res.kernel.is_zero() {
            return (cells, blocks);
        }
        let slab_j = res.partition.slab(j);
        for (i, w) in self.w.iter().enumerate() {
            let n = self.slab_of[i];
            if n < j {
                continue;
            }
            let (a, b) = w.a;
            let mut d = [[0.0; 2]; 2];
            for (t, wt) in memory_rule(&res.kernel, a, b, true) {
                let s = (t - a) / (b - a);
                let h = res.kernel.history_weights(t, slab_j);
                for (q, lq) in [1.0 - s, s].into_iter().enumerate() {
                    d[q][0] += wt * lq * h.0;
                    d[q][1] += wt * lq * h.1;
                }
            }
            if blocks.last().map(|x| x.0) != Some(n) {
                blocks.push((n, j, vec![0.0; n_cells]));
            }
            let block = &mut blocks.last_mut().unwrap().2;
            self.scatter(j, &psi[i], &d, block);
        }
        for b in &blocks {
            for (c, v) in cells.iter_mut().zip(&b.2) {
                *c += v;
            }
        }
        (cells, blocks)
    }

    /// `Θ_5^{N,j}`: `r_d` of slab `n = j` against the forward tail of `w2`
    /// restricted to each later slab, evaluated pointwise in the `r_d` time.
    fn memory_tail(&self, n: usize, psi: &[[Vec<[f64; 2]>; 2]]) -> (Vec<f64>, Vec<(usize, usize, Vec<f64>)>) {
        let res = self.res;
        let n_cells = res.unions[n - 1].mesh.n_cells();
        let mut cells = vec![0.0; n_cells];
        let mut blocks: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        if res.kernel.is_zero() {
            return (cells, blocks);
        }
        let slab_n = res.partition.slab(n);
        let kn = slab_n.1 - slab_n.0;
        let outer: Vec<(f64, f64)> = self
            .w
            .iter()
            .zip(self.slab_of)
            .filter(|(_, &s)| s == n)
            .flat_map(|(w, _)| memory_rule(&res.kernel, w.a.0, w.a.1, false))
            .collect();
        for (m, w) in self.w.iter().enumerate() {
            let j = self.slab_of[m];
            if j < n {
                continue;
            }
            let (a, b) = w.a;
            // d[q][q'] pairs the shape q of segment m with the shape q' of slab n
            let mut d = [[0.0; 2]; 2];
            for &(tau, wt) in &outer {
                if tau >= b {
                    continue;
                }
                let s = (tau - slab_n.0) / kn;
                // forward weights by reflection: ∫_{(a,b) ∩ (τ,∞)} K(σ-τ) λ_q(σ) dσ
                let (at_b, at_a) = res.kernel.history_weights(-tau, (-b, -a));
                for (q, f) in [at_a, at_b].into_iter().enumerate() {
                    d[q][0] += wt * (1.0 - s) * f;
                    d[q][1] += wt * s * f;
                }
            }
            if blocks.last().map(|x| x.1) != Some(j) {
                blocks.push((n, j, vec![0.0; n_cells]));
            }
            let block = &mut blocks.last_mut().unwrap().2;
            self.scatter(n, &psi[m], &d, block);
        }
        for b in &blocks {
            for (c, v) in cells.iter_mut().zip(&b.2) {
                *c += v;
            }
        }
        (cells, blocks)
    }

    /// Adds `-Σ d[q][q'] (ψ_q, r_{q'})` on every interior facet to the cells of
    /// `T̄^j` beside it, with `r` the nodal values of `r_d` on slab `j`.
    fn scatter(&self, j: usize, psi: &[Vec<[f64; 2]>; 2], d: &[[f64; 2]; 2], cells: &mut [f64]) {
        let res = self.res;
        if d.iter().flatten().all(|x| *x == 0.0) {
            return;
        }
        let owners = res.union_owners(j);
        for (e, &fi) in res.edges.facets.iter().enumerate() {
            let f = res.facet(fi);
            let r = [res.edges.levels[j - 1][e], res.edges.levels[j][e]];
            let mut v = 0.0;
            for q in 0..2 {
                for qp in 0..2 {
                    v -= d[q][qp] * dot2(psi[q][e], r[qp]);
                }
            }
            cells[owners[f.left]] += v;
            cells[owners[f.right.unwrap()]] += v;
        }
    }
}

/// Gauss rule on `(a, b)` for memory integrands; geometrically graded toward
/// `a` (or `b`) for weakly singular kernels, whose convolutions have
/// unbounded derivatives there.
fn memory_rule(kernel: &KernelSpec, a: f64, b: f64, toward_start: bool) -> Vec<(f64, f64)> {
    let singular = matches!(kernel, KernelSpec::PowerLaw { rho, .. } if *rho < 1.0);
    if !singular {
        return time_rule(a, b, MEMORY_POINTS);
    }
    let mut breaks = vec![0.0];
    breaks.extend((0..GRADED_LEVELS).rev().map(|l| GRADING_RATIO.powi(l as i32)));
    let mut out = Vec::new();
    for p in breaks.windows(2) {
        let (lo, hi) = if toward_start {
            (a + (b - a) * p[0], a + (b - a) * p[1])
        } else {
            (b - (b - a) * p[1], b - (b - a) * p[0])
        };
        out.extend(time_rule(lo, hi, MEMORY_POINTS));
    }
    out
}

/// Double moments of the kernel between the nodal shapes of `interval` (in
/// `t`) and of every slab `j <= upto` (in `s < t`).
pub(crate) fn history_moments(
    kernel: &KernelSpec,
    partition: &TimePartition,
    interval: (f64, f64),
    upto: usize,
) -> Vec<[[f64; 2]; 2]> {
    (1..=upto)
        .map(|j| {
            let slab = partition.slab(j);
            std::array::from_fn(|q| {
                std::array::from_fn(|qp| kernel.double_moment_lower(&Affine::shape(interval, q), &Affine::shape(slab, qp)))
            })
        })
        .collect()
}
