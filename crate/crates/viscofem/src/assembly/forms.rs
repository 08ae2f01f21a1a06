//! Space-time functions and exact evaluation of the bilinear and linear
//! forms on the overlay of all spatial meshes involved.

use std::sync::Arc;

use super::{assemble_full, l2_moments, load_vector, time_rule, ElasticParams, SpaceFn, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::kernel::{Affine, Kernel};
use crate::linalg::{dot, matvec, SpMat};
use crate::mesh_time::{FeSpace, Overlay, SpatialMesh, TimePartition};

/// Values of both components at one time instant, on one space.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub space: Arc<FeSpace>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl Snapshot {
    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.n_dofs();
        Snapshot { space, u1: vec![0.0; n], u2: vec![0.0; n] }
    }
}

/// A function linear in time on each slab, given by its one-sided limits
/// `(start, end)` on every slab.
#[derive(Clone, Debug)]
pub struct SpaceTimeFunction {
    pub partition: TimePartition,
    pub pieces: Vec<(Snapshot, Snapshot)>,
}

impl SpaceTimeFunction {
    /// Continuous piecewise-linear function through `levels[0..=N]`.
    pub fn continuous(partition: TimePartition, levels: &[Snapshot]) -> Result<Self> {
        if levels.len() != partition.n_slabs() + 1 {
            return Err(Error::IncompatibleSlabbing(format!(
                "{} levels for {} slabs",
                levels.len(),
                partition.n_slabs()
            )));
        }
        let pieces = levels.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        Ok(SpaceTimeFunction { partition, pieces })
    }

    /// Piecewise-constant function with value `values[n-1]` on slab `n`.
    pub fn piecewise_constant(partition: TimePartition, values: &[Snapshot]) -> Result<Self> {
        if values.len() != partition.n_slabs() {
            return Err(Error::IncompatibleSlabbing(format!(
                "{} values for {} slabs",
                values.len(),
                partition.n_slabs()
            )));
        }
        let pieces = values.iter().map(|v| (v.clone(), v.clone())).collect();
        Ok(SpaceTimeFunction { partition, pieces })
    }

    pub fn meshes(&self) -> Vec<Arc<SpatialMesh>> {
        let mut out: Vec<Arc<SpatialMesh>> = Vec::new();
        for (a, b) in &self.pieces {
            for s in [a, b] {
                if !out.iter().any(|m| m.id() == s.space.id()) {
                    out.push(s.space.mesh().clone());
                }
            }
        }
        out
    }
}

/// Data of the primal linear form.
#[derive(Clone)]
pub struct LoadData {
    pub u0: SpaceFn,
    pub v0: SpaceFn,
    pub f: Option<SpaceTimeFn>,
    pub g: Option<SpaceTimeFn>,
}

/// Data of the dual linear form.
#[derive(Clone)]
pub struct DualLoad {
    pub z1t: SpaceFn,
    pub z2t: SpaceFn,
    pub j1: Option<SpaceTimeFn>,
    pub j2: Option<SpaceTimeFn>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormKind {
    /// Primal bilinear form with the history integral over `s < t`.
    B,
    /// Primal bilinear form with the convolution order exchanged.
    B2,
    /// Adjoint bilinear form.
    BStar,
    /// Primal linear form.
    L,
    /// Dual linear form.
    LStar,
}

pub struct FormsContext<'a> {
    pub kernel: &'a Kernel,
    pub params: ElasticParams,
    pub load: Option<&'a LoadData>,
    pub dual_load: Option<&'a DualLoad>,
    /// Gauss points per slab for time integrals of data.
    pub time_points: usize,
}

/// Evaluates `B(u, v)`, `B2(u, v)`, `B*(u, v)`, `L(v)` or `L*(v)`.
pub fn evaluate_forms(kind: FormKind, u: Option<&SpaceTimeFunction>, v: &SpaceTimeFunction, ctx: &FormsContext) -> Result<f64> {
    match kind {
        FormKind::L => {
            let load = ctx.load.ok_or_else(|| Error::Config("L needs load data".into()))?;
            primal_load(v, load, ctx.time_points)
        }
        FormKind::LStar => {
            let dual = ctx.dual_load.ok_or_else(|| Error::Config("L* needs dual data".into()))?;
            dual_load(v, dual, ctx.time_points)
        }
        _ => {
            let u = u.ok_or_else(|| Error::Config("bilinear form needs two arguments".into()))?;
            bilinear(kind, u, v, ctx)
        }
    }
}

/// Values of a space-time function at the ends of one common sub-interval,
/// prolonged to the overlay.
pub(crate) struct Segment {
    pub a: (f64, f64),
    pub u1: [Vec<f64>; 2],
    pub u2: [Vec<f64>; 2],
}

pub(crate) fn merged_nodes(a: &TimePartition, b: &TimePartition) -> Result<Vec<f64>> {
    let (ta, tb) = (a.horizon(), b.horizon());
    if (ta - tb).abs() > 1e-12 * ta.abs().max(1.0) || a.nodes()[0] != b.nodes()[0] {
        return Err(Error::IncompatibleSlabbing(format!("horizons {ta} and {tb} differ")));
    }
    let tol = 1e-12 * ta.abs().max(1.0);
    let mut nodes: Vec<f64> = a.nodes().iter().chain(b.nodes()).copied().collect();
    nodes.sort_by(|x, y| x.total_cmp(y));
    nodes.dedup_by(|x, y| (*x - *y).abs() <= tol);
    Ok(nodes)
}

pub(crate) fn segments(ov: &Overlay, f: &SpaceTimeFunction, nodes: &[f64]) -> Vec<Segment> {
    let ncomp = f.pieces[0].0.space.ncomp();
    let lift = |s: &Snapshot, v: &[f64]| ov.prolong(s.space.id(), &s.space.expand(v), ncomp);
    let lifted: Vec<[Vec<f64>; 4]> = f
        .pieces
        .iter()
        .map(|(a, b)| [lift(a, &a.u1), lift(b, &b.u1), lift(a, &a.u2), lift(b, &b.u2)])
        .collect();
    let lerp = |x: &[f64], y: &[f64], s: f64| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p + s * (q - p)).collect() };
    nodes
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let n = f.partition.slab_of(mid);
            let (t0, t1) = f.partition.slab(n);
            let l = &lifted[n - 1];
            let s0 = (w[0] - t0) / (t1 - t0);
            let s1 = (w[1] - t0) / (t1 - t0);
            Segment {
                a: (w[0], w[1]),
                u1: [lerp(&l[0], &l[1], s0), lerp(&l[0], &l[1], s1)],
                u2: [lerp(&l[2], &l[3], s0), lerp(&l[2], &l[3], s1)],
            }
        })
        .collect()
}

/// `∫_I (x(t), y(t))_W dt` for linear `x`, `y` with a symmetric Gram `W`.
fn linear_product(w: &SpMat, x: &[Vec<f64>; 2], y: &[Vec<f64>; 2], k: f64) -> f64 {
    let wy0 = matvec(w, &y[0]);
    let wy1 = matvec(w, &y[1]);
    k / 6.0 * (2.0 * dot(&x[0], &wy0) + dot(&x[0], &wy1) + dot(&x[1], &wy0) + 2.0 * dot(&x[1], &wy1))
}

fn bilinear(kind: FormKind, u: &SpaceTimeFunction, v: &SpaceTimeFunction, ctx: &FormsContext) -> Result<f64> {
    let nodes = merged_nodes(&u.partition, &v.partition)?;
    let mut meshes = u.meshes();
    for m in v.meshes() {
        if !meshes.iter().any(|x| x.id() == m.id()) {
            meshes.push(m);
        }
    }
    let refs: Vec<&Arc<SpatialMesh>> = meshes.iter().collect();
    let ov = Overlay::new(&refs)?;
    let ncomp = u.pieces[0].0.space.ncomp();
    let (mass, stiff) = assemble_full(ov.mesh(), &ctx.params, ncomp)?;
    let us = segments(&ov, u, &nodes);
    let vs = segments(&ov, v, &nodes);
    let mut total = 0.0;
    for (su, sv) in us.iter().zip(&vs) {
        let k = su.a.1 - su.a.0;
        let diff = |x: &[Vec<f64>; 2]| -> Vec<f64> { x[1].iter().zip(&x[0]).map(|(p, q)| p - q).collect() };
        let avg = |x: &[Vec<f64>; 2]| -> Vec<f64> { x[1].iter().zip(&x[0]).map(|(p, q)| 0.5 * (p + q)).collect() };
        let elastic = linear_product(&stiff, &su.u1, &sv.u2, k);
        let coupling = linear_product(&mass, &su.u2, &sv.u1, k);
        total += match kind {
            FormKind::BStar => {
                -dot(&avg(&su.u1), &matvec(&mass, &diff(&sv.u1))) - dot(&avg(&su.u2), &matvec(&mass, &diff(&sv.u2)))
                    + elastic
                    - coupling
            }
            _ => {
                dot(&diff(&su.u2), &matvec(&mass, &avg(&sv.u2))) + dot(&diff(&su.u1), &matvec(&mass, &avg(&sv.u1)))
                    + elastic
                    - coupling
            }
        };
    }
    // memory term
    if !ctx.kernel.is_zero() {
        let su1: Vec<[Vec<f64>; 2]> = us.iter().map(|s| [matvec(&stiff, &s.u1[0]), matvec(&stiff, &s.u1[1])]).collect();
        let mut memory = 0.0;
        for (c, sv) in vs.iter().enumerate() {
            for (cp, su) in su1.iter().enumerate() {
                // the u-time never exceeds the v-time
                if cp > c {
                    continue;
                }
                let lower = kind == FormKind::B;
                for q in 0..2 {
                    for qp in 0..2 {
                        let a = dot(&su[qp], &sv.u2[q]);
                        if a == 0.0 {
                            continue;
                        }
                        let w = if lower {
                            // t on the v interval, s on the u interval, s < t
                            ctx.kernel.double_moment_lower(&Affine::shape(vs[c].a, q), &Affine::shape(us[cp].a, qp))
                        } else {
                            // t on the u interval, s on the v interval, s > t
                            ctx.kernel.double_moment_upper(&Affine::shape(us[cp].a, qp), &Affine::shape(vs[c].a, q))
                        };
                        memory += w * a;
                    }
                }
            }
        }
        total -= memory;
    }
    let m = |x: &[f64], y: &[f64]| dot(x, &matvec(&mass, y));
    if kind == FormKind::BStar {
        let (lu, lv) = (us.last().unwrap(), vs.last().unwrap());
        total += m(&lu.u1[1], &lv.u1[1]) + m(&lu.u2[1], &lv.u2[1]);
    } else {
        let (fu, fv) = (&us[0], &vs[0]);
        total += m(&fu.u1[0], &fv.u1[0]) + m(&fu.u2[0], &fv.u2[0]);
    }
    Ok(total)
}

/// Weights `(w_q λ_0(t_q), w_q λ_1(t_q))` of a Gauss rule on a slab.
fn split_rule(slab: (f64, f64), points: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let rule = time_rule(slab.0, slab.1, points);
    let k = slab.1 - slab.0;
    let left = rule.iter().map(|&(t, w)| (t, w * (slab.1 - t) / k)).collect();
    let right = rule.iter().map(|&(t, w)| (t, w * (t - slab.0) / k)).collect();
    (rule, left, right)
}

/// `∫_I (f, v) + (g, v)_{Γ_N}` for a linear-in-time `v` given by its limits.
fn slab_load(
    slab: (f64, f64),
    start: (&FeSpace, &[f64]),
    end: (&FeSpace, &[f64]),
    f: Option<&SpaceTimeFn>,
    g: Option<&SpaceTimeFn>,
    points: usize,
) -> f64 {
    let (rule, left, right) = split_rule(slab, points);
    if start.0.id() == end.0.id() && start.1 == end.1 {
        return dot(&load_vector(start.0, f, g, &rule), start.1);
    }
    dot(&load_vector(start.0, f, g, &left), start.1) + dot(&load_vector(end.0, f, g, &right), end.1)
}

fn primal_load(v: &SpaceTimeFunction, load: &LoadData, points: usize) -> Result<f64> {
    let mut total = 0.0;
    for (n, (a, b)) in v.pieces.iter().enumerate() {
        let slab = v.partition.slab(n + 1);
        total += slab_load(slab, (&a.space, &a.u2), (&b.space, &b.u2), load.f.as_ref(), load.g.as_ref(), points);
    }
    let first = &v.pieces[0].0;
    total += dot(&l2_moments(&first.space, &*load.u0), &first.u1);
    total += dot(&l2_moments(&first.space, &*load.v0), &first.u2);
    Ok(total)
}

fn dual_load(v: &SpaceTimeFunction, dual: &DualLoad, points: usize) -> Result<f64> {
    let mut total = 0.0;
    for (n, (a, b)) in v.pieces.iter().enumerate() {
        let slab = v.partition.slab(n + 1);
        total += slab_load(slab, (&a.space, &a.u1), (&b.space, &b.u1), dual.j1.as_ref(), None, points);
        total += slab_load(slab, (&a.space, &a.u2), (&b.space, &b.u2), dual.j2.as_ref(), None, points);
    }
    let last = &v.pieces.last().unwrap().1;
    total += dot(&l2_moments(&last.space, &*dual.z1t), &last.u1);
    total += dot(&l2_moments(&last.space, &*dual.z2t), &last.u2);
    Ok(total)
}
