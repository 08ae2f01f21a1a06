//! L2 projections in space (`P_h`) and time (`P_k`), the local interpolant
//! `I_hk` (nodal in space, midpoint value in time) and rate studies of the
//! corresponding error operators.

use std::sync::Arc;

use crate::assembly::forms::{Snapshot, SpaceTimeFunction};
use crate::assembly::quadrature::{cell_rule, gauss_legendre, map_point};
use crate::assembly::{l2_moments, Operators, SpaceTimeFn};
use crate::error::{Error, Result};
use crate::linalg::{axpy, matvec};
use crate::mesh_time::{FeSpace, SpatialMesh, TimePartition};

/// `P_h v` for a function of space.
pub fn ph_project(ops: &Operators, space: &FeSpace, v: &dyn Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    Ok(ops.mass_factor(space)?.solve(&l2_moments(space, v)))
}

/// `P_h` of a discrete function living on another space of the forest.
pub fn ph_project_discrete(ops: &Operators, target: &FeSpace, source: &FeSpace, coeffs: &[f64]) -> Result<Vec<f64>> {
    if target.id() == source.id() {
        return Ok(coeffs.to_vec());
    }
    let cross = ops.cross(target, source)?;
    Ok(ops.mass_factor(target)?.solve(&matvec(&cross.mass, coeffs)))
}

/// Slab averages of a scalar function of time (`P_k v`).
pub fn pk_project(v: &dyn Fn(f64) -> f64, partition: &TimePartition) -> Vec<f64> {
    let rule = gauss_legendre(8);
    (1..=partition.n_slabs())
        .map(|n| {
            let (a, b) = partition.slab(n);
            rule.iter().map(|&(x, w)| w * v(a + (b - a) * x)).sum()
        })
        .collect()
}

/// `I_hk v` on a slab: nodal interpolation of `v(·, t_mid)`.
pub fn ihk_interpolate(v: &SpaceTimeFn, slab: (f64, f64), space: &FeSpace) -> Vec<f64> {
    let mid = 0.5 * (slab.0 + slab.1);
    space.interpolate(&|x| v(x, mid))
}

/// `P_h z` pointwise in time, with `P_{h,n}` onto `spaces[n]` on slab `n` of
/// `coarse`; the result lives on the partition of `z`.
pub fn ph_project_function(
    ops: &Operators,
    z: &SpaceTimeFunction,
    coarse: &TimePartition,
    spaces: &[Arc<FeSpace>],
) -> Result<SpaceTimeFunction> {
    if !coarse.is_refined_by(&z.partition) {
        return Err(Error::IncompatibleDualDiscretization("the function's partition does not refine the slabs".into()));
    }
    let mut pieces = Vec::with_capacity(z.pieces.len());
    for (i, (a, b)) in z.pieces.iter().enumerate() {
        let (t0, t1) = z.partition.slab(i + 1);
        let n = coarse.slab_of(0.5 * (t0 + t1));
        let target = &spaces[n];
        let proj = |s: &Snapshot| -> Result<Snapshot> {
            Ok(Snapshot {
                space: target.clone(),
                u1: ph_project_discrete(ops, target, &s.space, &s.u1)?,
                u2: ph_project_discrete(ops, target, &s.space, &s.u2)?,
            })
        };
        pieces.push((proj(a)?, proj(b)?));
    }
    Ok(SpaceTimeFunction { partition: z.partition.clone(), pieces })
}

/// `P_k z`: slab averages over `coarse`, piecewise constant. All pieces of
/// `z` inside one coarse slab must share a space.
pub fn pk_project_function(z: &SpaceTimeFunction, coarse: &TimePartition) -> Result<SpaceTimeFunction> {
    if !coarse.is_refined_by(&z.partition) {
        return Err(Error::IncompatibleDualDiscretization("the function's partition does not refine the slabs".into()));
    }
    let mut values: Vec<Option<Snapshot>> = vec![None; coarse.n_slabs()];
    for (i, (a, b)) in z.pieces.iter().enumerate() {
        let (t0, t1) = z.partition.slab(i + 1);
        let n = coarse.slab_of(0.5 * (t0 + t1));
        let w = 0.5 * (t1 - t0) / coarse.k(n);
        if a.space.id() != b.space.id() {
            return Err(Error::IncompatibleDualDiscretization("piece spans two spaces".into()));
        }
        let slot = values[n - 1].get_or_insert_with(|| Snapshot::zero(a.space.clone()));
        if slot.space.id() != a.space.id() {
            return Err(Error::IncompatibleDualDiscretization(format!("slab {n} mixes spaces")));
        }
        for s in [a, b] {
            axpy(&mut slot.u1, w, &s.u1);
            axpy(&mut slot.u2, w, &s.u2);
        }
    }
    let values: Vec<Snapshot> = values.into_iter().map(|v| v.expect("every slab covered")).collect();
    SpaceTimeFunction::piecewise_constant(coarse.clone(), &values)
}

/// `P_k P_h z` onto the slab test spaces.
pub fn pkph_project(ops: &Operators, z: &SpaceTimeFunction, coarse: &TimePartition, spaces: &[Arc<FeSpace>]) -> Result<SpaceTimeFunction> {
    pk_project_function(&ph_project_function(ops, z, coarse, spaces)?, coarse)
}

/// Cellwise norms of `w = v_h − v` on a mesh: `(‖h^{-s} w‖, ‖h^{-s} ∇w‖)`
/// for `s = 0, 1, 2`.
pub fn weighted_error_norms(
    space: &FeSpace,
    coeffs: &[f64],
    v: &dyn Fn([f64; 2]) -> [f64; 2],
    grad_v: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
) -> ([f64; 3], [f64; 3]) {
    let mesh = space.mesh();
    let full = space.expand(coeffs);
    let ncomp = space.ncomp();
    let nv = mesh.verts_per_cell();
    let mut l2 = [0.0; 3];
    let mut h1 = [0.0; 3];
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_coords(c);
        let meas = mesh.measure(c);
        let h = mesh.diameter(c);
        let verts = mesh.cell(c).verts;
        let g = mesh.shape_gradients(c);
        let (mut cl2, mut ch1) = (0.0, 0.0);
        for (bary, w) in fine_rule(mesh.dim()) {
            let p = map_point(mesh.dim(), &x, &bary);
            let val = v(p);
            let gv = grad_v(p);
            for comp in 0..ncomp {
                let uh: f64 = (0..nv).map(|i| bary[i] * full[verts[i] * ncomp + comp]).sum();
                cl2 += w * meas * (uh - val[comp]).powi(2);
                for d in 0..mesh.dim() {
                    let gh: f64 = (0..nv).map(|i| g[i][d] * full[verts[i] * ncomp + comp]).sum();
                    ch1 += w * meas * (gh - gv[comp][d]).powi(2);
                }
            }
        }
        for s in 0..3 {
            let f = h.powi(-2 * s as i32);
            l2[s] += f * cl2;
            h1[s] += f * ch1;
        }
    }
    (l2.map(f64::sqrt), h1.map(f64::sqrt))
}

/// Cell rule subdivided once more for error integrals of smooth functions.
fn fine_rule(dim: usize) -> Vec<([f64; 3], f64)> {
    let base = cell_rule(dim);
    if dim == 1 {
        let mut out = Vec::new();
        for half in 0..2 {
            for (b, w) in base {
                let s = 0.5 * (half as f64 + b[1]);
                out.push(([1.0 - s, s, 0.0], 0.5 * w));
            }
        }
        return out;
    }
    // four congruent sub-triangles in barycentric coordinates
    let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mid = |a: usize, b: usize| -> [f64; 3] { std::array::from_fn(|i| 0.5 * (corners[a][i] + corners[b][i])) };
    let subs = [
        [corners[0], mid(0, 1), mid(0, 2)],
        [mid(0, 1), corners[1], mid(1, 2)],
        [mid(0, 2), mid(1, 2), corners[2]],
        [mid(1, 2), mid(0, 2), mid(0, 1)],
    ];
    let mut out = Vec::new();
    for sub in subs {
        for (b, w) in base {
            let p: [f64; 3] = std::array::from_fn(|i| b[0] * sub[0][i] + b[1] * sub[1][i] + b[2] * sub[2][i]);
            out.push((p, 0.25 * w));
        }
    }
    out
}

/// `(‖E_hk v‖_{Ω^n}, ‖∇E_hk v‖_{Ω^n})` summed over all slabs, with `I_hk`
/// onto a fixed space.
pub fn ehk_norms(
    space: &FeSpace,
    partition: &TimePartition,
    v: &SpaceTimeFn,
    grad_v: &(dyn Fn([f64; 2], f64) -> [[f64; 2]; 2] + Sync),
) -> (f64, f64) {
    let rule = gauss_legendre(6);
    let (mut l2, mut h1) = (0.0, 0.0);
    for n in 1..=partition.n_slabs() {
        let slab = partition.slab(n);
        let coeffs = ihk_interpolate(v, slab, space);
        for &(x, w) in &rule {
            let t = slab.0 + (slab.1 - slab.0) * x;
            let (e, g) = weighted_error_norms(space, &coeffs, &|p| v(p, t), &|p| grad_v(p, t));
            l2 += w * (slab.1 - slab.0) * e[0] * e[0];
            h1 += w * (slab.1 - slab.0) * g[0] * g[0];
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// One refinement level of a projection rate study.
#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub h: f64,
    /// `‖h^{-s} E_h v‖` for `s = 0, 1, 2`.
    pub l2: [f64; 3],
    /// `‖h^{-s} ∇E_h v‖` for `s = 0, 1`.
    pub h1: [f64; 2],
    /// Observed orders against the previous row (NaN on the first).
    pub l2_order: [f64; 3],
    pub h1_order: [f64; 2],
}

/// Nominal orders of the columns of [`RateRow`] for smooth `v`.
pub const NOMINAL_L2_ORDERS: [f64; 3] = [2.0, 1.0, 0.0];
pub const NOMINAL_H1_ORDERS: [f64; 2] = [1.0, 0.0];

/// `P_h` error norms on a family of meshes and their observed orders.
pub fn verify_projection_rates(
    meshes: &[Arc<SpatialMesh>],
    ncomp: usize,
    v: &dyn Fn([f64; 2]) -> [f64; 2],
    grad_v: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
    ops: &Operators,
) -> Result<Vec<RateRow>> {
    let mut rows: Vec<RateRow> = Vec::new();
    for mesh in meshes {
        let space = FeSpace::with_components(mesh.clone(), ncomp)?;
        let coeffs = ph_project(ops, &space, v)?;
        let (l2, h1) = weighted_error_norms(&space, &coeffs, v, grad_v);
        let h = mesh.h_max();
        let (l2_order, h1_order) = match rows.last() {
            Some(prev) => {
                let r = (prev.h / h).ln();
                (
                    std::array::from_fn(|s| (prev.l2[s] / l2[s]).ln() / r),
                    std::array::from_fn(|s| (prev.h1[s] / h1[s]).ln() / r),
                )
            }
            None => ([f64::NAN; 3], [f64::NAN; 2]),
        };
        rows.push(RateRow { h, l2, h1: [h1[0], h1[1]], l2_order, h1_order });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::ElasticParams;
    use crate::mesh_time::FacetTag;

    #[test]
    fn quadratic_projection_on_one_cell() {
        // moments of x² against (1-x, x) are (1/12, 1/4); mass [[1/3,1/6],[1/6,1/3]]
        let ops = Operators::new(ElasticParams::new(1.0, 1.0).unwrap());
        let m = Arc::new(SpatialMesh::interval(0.0, 1.0, 1, FacetTag::Neumann, FacetTag::Neumann).unwrap());
        let s = FeSpace::new(m).unwrap();
        let c = ph_project(&ops, &s, &|x| [x[0] * x[0], 0.0]).unwrap();
        assert!((c[0] + 1.0 / 6.0).abs() < 1e-14 && (c[1] - 5.0 / 6.0).abs() < 1e-14, "{c:?}");
    }

    #[test]
    fn slab_average_of_t() {
        let p = TimePartition::uniform(1.0, 1).unwrap();
        assert!((pk_project(&|t| t, &p)[0] - 0.5).abs() < 1e-15);
    }
}
