//! Norms of a computed dual solution entering the estimate prefactors,
//! maximized over time levels and slab midpoints.

use rayon::prelude::*;

use crate::assembly::{assemble_gradient_gram, Operators};
use crate::dual_solver::DualSolution;
use crate::error::Result;
use crate::linalg::{dot, matvec, quad_form};
use crate::mesh_time::{FeSpace, SpatialMesh};
use crate::projections::ph_project_discrete;

/// `max_t` of the dual norms; index `s` of `z1`, `z2` is `‖∇^s z‖`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DualNorms {
    pub z1: [f64; 3],
    pub z2: [f64; 3],
    pub z1_dot: f64,
    pub z2_dot: f64,
    pub z2_grad_dot: f64,
}

impl DualNorms {
    /// Factor of the global estimate.
    pub fn global_factor(&self, alpha: usize, beta: usize, gamma: usize) -> Vec<(&'static str, f64)> {
        vec![
            ("z1_grad_alpha", self.z1[alpha]),
            ("z2_grad_beta", self.z2[beta]),
            (if alpha >= 1 { "z1_dot" } else { "z1" }, if alpha >= 1 { self.z1_dot } else { self.z1[0] }),
            (if gamma == 1 { "z2_dot" } else { "z2" }, if gamma == 1 { self.z2_dot } else { self.z2[0] }),
        ]
    }

    /// Factor of the local estimate.
    pub fn local_factor(&self, alpha: usize) -> Vec<(&'static str, f64)> {
        vec![
            ("z1_grad_alpha", self.z1[alpha]),
            ("z2_grad_2", self.z2[2]),
            ("z1_dot", self.z1_dot),
            ("z2_dot", self.z2_dot),
            ("z2_grad_dot", self.z2_grad_dot),
        ]
    }
}

/// `(‖v‖, ‖∇v‖, ‖∇G_h v‖)` with `G_h v` the lumped-mass recovered gradient.
fn derivative_norms(ops: &Operators, space: &FeSpace, v: &[f64]) -> Result<[f64; 3]> {
    let set = ops.set(space)?;
    let mesh = space.mesh();
    let gram = assemble_gradient_gram(mesh, space.ncomp());
    let full = space.expand(v);
    let grad = dot(&full, &matvec(&gram, &full)).max(0.0).sqrt();
    Ok([quad_form(&set.mass, v).max(0.0).sqrt(), grad, recovered_hessian_norm(mesh, space.ncomp(), &full)])
}

/// `‖∇G_h v‖` for a full-layout P1 field, `G_h` averaging cell gradients
/// with lumped mass weights.
pub(crate) fn recovered_hessian_norm(mesh: &SpatialMesh, ncomp: usize, full: &[f64]) -> f64 {
    let dim = mesh.dim();
    let nv = mesh.verts_per_cell();
    let nvert = mesh.n_vertices();
    let width = ncomp * dim;
    let mut rec = vec![0.0; nvert * width];
    let mut lumped = vec![0.0; nvert];
    for c in 0..mesh.n_cells() {
        let g = mesh.shape_gradients(c);
        let share = mesh.measure(c) / nv as f64;
        let verts = mesh.cell(c).verts;
        for comp in 0..ncomp {
            for d in 0..dim {
                let val: f64 = (0..nv).map(|i| g[i][d] * full[verts[i] * ncomp + comp]).sum();
                for &vi in &verts[..nv] {
                    rec[vi * width + comp * dim + d] += share * val;
                }
            }
        }
        for &vi in &verts[..nv] {
            lumped[vi] += share;
        }
    }
    for (i, l) in lumped.iter().enumerate() {
        if *l > 0.0 {
            rec[i * width..(i + 1) * width].iter_mut().for_each(|r| *r /= l);
        }
    }
    let gram = assemble_gradient_gram(mesh, width);
    dot(&rec, &matvec(&gram, &rec)).max(0.0).sqrt()
}

pub fn dual_norms(z: &DualSolution, ops: &Operators) -> Result<DualNorms> {
    let levels = &z.z.levels;
    let part = &z.z.partition;
    let at_levels: Vec<([f64; 3], [f64; 3])> = levels
        .par_iter()
        .map(|l| Ok((derivative_norms(ops, &l.space, &l.u1)?, derivative_norms(ops, &l.space, &l.u2)?)))
        .collect::<Result<_>>()?;
    let slabs: Vec<([f64; 3], [f64; 3], f64, f64, f64)> = (1..levels.len())
        .into_par_iter()
        .map(|i| {
            let (prev, cur) = (&levels[i - 1], &levels[i]);
            let p1 = ph_project_discrete(ops, &cur.space, &prev.space, &prev.u1)?;
            let p2 = ph_project_discrete(ops, &cur.space, &prev.space, &prev.u2)?;
            let k = part.k(i);
            let mid = |p: &[f64], c: &[f64]| -> Vec<f64> { p.iter().zip(c).map(|(a, b)| 0.5 * (a + b)).collect() };
            let rate = |p: &[f64], c: &[f64]| -> Vec<f64> { p.iter().zip(c).map(|(a, b)| (b - a) / k).collect() };
            let m1 = derivative_norms(ops, &cur.space, &mid(&p1, &cur.u1))?;
            let m2 = derivative_norms(ops, &cur.space, &mid(&p2, &cur.u2))?;
            let d1 = derivative_norms(ops, &cur.space, &rate(&p1, &cur.u1))?;
            let d2 = derivative_norms(ops, &cur.space, &rate(&p2, &cur.u2))?;
            Ok((m1, m2, d1[0], d2[0], d2[1]))
        })
        .collect::<Result<_>>()?;
    let mut out = DualNorms::default();
    let mut take = |a: &[f64; 3], b: &[f64; 3]| {
        for s in 0..3 {
            out.z1[s] = out.z1[s].max(a[s]);
            out.z2[s] = out.z2[s].max(b[s]);
        }
    };
    for (a, b) in &at_levels {
        take(a, b);
    }
    for (a, b, ..) in &slabs {
        take(a, b);
    }
    for (_, _, d1, d2, g2) in &slabs {
        out.z1_dot = out.z1_dot.max(*d1);
        out.z2_dot = out.z2_dot.max(*d2);
        out.z2_grad_dot = out.z2_grad_dot.max(*g2);
    }
    Ok(out)
}
