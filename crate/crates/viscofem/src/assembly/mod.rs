//! Elasticity forms, P1 mass/stiffness/load assembly, cross-space operators
//! and discrete norms.

pub mod forms;
pub mod quadrature;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{from_triplets, kron_identity, quad_form, sandwich, Factor, SpMat};
use crate::mesh_time::{union_mesh, FacetTag, FeSpace, SpatialMesh};

pub use forms::{evaluate_forms, FormKind, FormsContext, Snapshot, SpaceTimeFunction};

/// Vector-valued function of space and time (unused components ignored).
pub type SpaceTimeFn = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;
/// Vector-valued function of space.
pub type SpaceFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Lamé parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticParams {
    pub mu0: f64,
    pub lambda0: f64,
}

impl ElasticParams {
    pub fn new(mu0: f64, lambda0: f64) -> Result<Self> {
        if !(mu0 > 0.0 && mu0.is_finite()) {
            return Err(Error::NonPositiveParameter(format!("mu0 = {mu0}")));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::NonPositiveParameter(format!("lambda0 = {lambda0}")));
        }
        Ok(ElasticParams { mu0, lambda0 })
    }

    /// Scalar modulus `E = 2 mu0 + lambda0` used in 1D.
    pub fn modulus(&self) -> f64 {
        2.0 * self.mu0 + self.lambda0
    }

    /// `σ0(u)` from a displacement gradient `grad[i][j] = ∂_j u_i`, as
    /// `[[σ_xx, σ_xy], [σ_yx, σ_yy]]`; in 1D only `σ_xx` is used.
    pub fn stress(&self, dim: usize, grad: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        if dim == 1 {
            return [[self.modulus() * grad[0][0], 0.0], [0.0, 0.0]];
        }
        let tr = grad[0][0] + grad[1][1];
        let exy = 0.5 * (grad[0][1] + grad[1][0]);
        [
            [2.0 * self.mu0 * grad[0][0] + self.lambda0 * tr, 2.0 * self.mu0 * exy],
            [2.0 * self.mu0 * exy, 2.0 * self.mu0 * grad[1][1] + self.lambda0 * tr],
        ]
    }

    /// `σ0(u) n`.
    pub fn traction(&self, dim: usize, grad: [[f64; 2]; 2], n: [f64; 2]) -> [f64; 2] {
        let s = self.stress(dim, grad);
        if dim == 1 {
            return [s[0][0] * n[0], 0.0];
        }
        [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
    }
}

/// Element stiffness in the local full layout `vertex * ncomp + comp`.
pub fn element_stiffness(dim: usize, params: &ElasticParams, grads: &[[f64; 2]; 3], measure: f64) -> Vec<f64> {
    if dim == 1 {
        let e = params.modulus();
        let mut k = vec![0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                k[i * 2 + j] = e * grads[i][0] * grads[j][0] * measure;
            }
        }
        return k;
    }
    // a(v, w) = ∫ 2μ ε(v):ε(w) + λ div v div w
    let (mu, lam) = (params.mu0, params.lambda0);
    let mut k = vec![0.0; 36];
    for i in 0..3 {
        for a in 0..2 {
            for j in 0..3 {
                for b in 0..2 {
                    let (gi, gj) = (grads[i], grads[j]);
                    // ε(φ_i e_a) : ε(φ_j e_b) = ½(δ_ab ∇φ_i·∇φ_j + ∂_b φ_i ∂_a φ_j)
                    let dd = if a == b { gi[0] * gj[0] + gi[1] * gj[1] } else { 0.0 };
                    let eps = 0.5 * (dd + gi[b] * gj[a]);
                    let div = gi[a] * gj[b];
                    k[(i * 2 + a) * 6 + j * 2 + b] = (2.0 * mu * eps + lam * div) * measure;
                }
            }
        }
    }
    k
}

/// Scalar P1 mass on a simplex.
pub fn element_mass(dim: usize, measure: f64) -> [[f64; 3]; 3] {
    let nv = dim + 1;
    let denom = (nv * (nv + 1)) as f64;
    let mut m = [[0.0; 3]; 3];
    for i in 0..nv {
        for j in 0..nv {
            m[i][j] = measure * if i == j { 2.0 } else { 1.0 } / denom;
        }
    }
    m
}

/// `∫_Ω φ` by the cell rule.
pub fn integrate(mesh: &SpatialMesh, phi: &dyn Fn([f64; 2]) -> f64) -> f64 {
    let dim = mesh.dim();
    (0..mesh.n_cells())
        .map(|c| {
            let x = mesh.cell_coords(c);
            quadrature::cell_rule(dim).iter().map(|(b, w)| w * phi(quadrature::map_point(dim, &x, b))).sum::<f64>()
                * mesh.measure(c)
        })
        .sum()
}

/// Full-layout mass and stiffness of a mesh.
pub fn assemble_full(mesh: &SpatialMesh, params: &ElasticParams, ncomp: usize) -> Result<(SpMat, SpMat)> {
    let dim = mesh.dim();
    let nv = mesh.verts_per_cell();
    let locals: Vec<Result<(Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>)>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let measure = mesh.measure(c);
            if !(measure > 0.0) {
                return Err(Error::DegenerateCell(c));
            }
            let verts = mesh.cell(c).verts;
            let me = element_mass(dim, measure);
            let mut m = Vec::with_capacity(nv * nv * ncomp);
            for i in 0..nv {
                for j in 0..nv {
                    for comp in 0..ncomp {
                        m.push((verts[i] * ncomp + comp, verts[j] * ncomp + comp, me[i][j]));
                    }
                }
            }
            let mut s = Vec::new();
            if ncomp == dim {
                let ke = element_stiffness(dim, params, &mesh.shape_gradients(c), measure);
                for i in 0..nv {
                    for a in 0..ncomp {
                        for j in 0..nv {
                            for b in 0..ncomp {
                                s.push((verts[i] * ncomp + a, verts[j] * ncomp + b, ke[(i * ncomp + a) * nv * ncomp + j * ncomp + b]));
                            }
                        }
                    }
                }
            } else {
                // scalar Laplacian per component with modulus E
                let g = mesh.shape_gradients(c);
                for i in 0..nv {
                    for j in 0..nv {
                        let v = params.modulus() * (g[i][0] * g[j][0] + g[i][1] * g[j][1]) * measure;
                        for comp in 0..ncomp {
                            s.push((verts[i] * ncomp + comp, verts[j] * ncomp + comp, v));
                        }
                    }
                }
            }
            Ok((m, s))
        })
        .collect();
    let n = mesh.n_vertices() * ncomp;
    let mut me = Vec::new();
    let mut se = Vec::new();
    for l in locals {
        let (m, s) = l?;
        me.extend(m);
        se.extend(s);
    }
    Ok((from_triplets(n, n, &me), from_triplets(n, n, &se)))
}

/// Full-layout unit-coefficient gradient Gram matrix `∫ ∇φ_i · ∇φ_j`.
pub fn assemble_gradient_gram(mesh: &SpatialMesh, ncomp: usize) -> SpMat {
    let nv = mesh.verts_per_cell();
    let mut e = Vec::new();
    for c in 0..mesh.n_cells() {
        let g = mesh.shape_gradients(c);
        let meas = mesh.measure(c);
        let verts = mesh.cell(c).verts;
        for i in 0..nv {
            for j in 0..nv {
                let v = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) * meas;
                e.push((verts[i], verts[j], v));
            }
        }
    }
    let n = mesh.n_vertices();
    kron_identity(&from_triplets(n, n, &e), ncomp)
}

/// Mass `M` and stiffness `S` on the free coefficients of a space.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub mass: SpMat,
    pub stiffness: SpMat,
}

pub fn assemble_forms(space: &FeSpace, params: &ElasticParams) -> Result<OperatorSet> {
    let (m, s) = assemble_full(space.mesh(), params, space.ncomp())?;
    let e = space.expansion();
    Ok(OperatorSet { mass: sandwich(e, &m, e), stiffness: sandwich(e, &s, e) })
}

/// `‖v‖_{h,l}` for `l ∈ {0, 1}`.
pub fn discrete_norm(ops: &OperatorSet, v: &[f64], l: i32) -> Result<f64> {
    match l {
        0 => Ok(quad_form(&ops.mass, v).max(0.0).sqrt()),
        1 => Ok(quad_form(&ops.stiffness, v).max(0.0).sqrt()),
        _ => Err(Error::UnsupportedExponent(l)),
    }
}

/// Time quadrature points `(t, w)` on `[a, b]` (Gauss–Legendre).
pub fn time_rule(a: f64, b: f64, points: usize) -> Vec<(f64, f64)> {
    quadrature::gauss_legendre(points).iter().map(|&(x, w)| (a + (b - a) * x, (b - a) * w)).collect()
}

/// `Σ_q w_q [(f(t_q), φ_i) + (g(t_q), φ_i)_{Γ_N}]` on the free coefficients.
pub fn load_vector(
    space: &FeSpace,
    f: Option<&SpaceTimeFn>,
    g: Option<&SpaceTimeFn>,
    times: &[(f64, f64)],
) -> Vec<f64> {
    let mesh = space.mesh();
    let ncomp = space.ncomp();
    let nv = mesh.verts_per_cell();
    let mut full = vec![0.0; space.n_full()];
    if let Some(f) = f {
        let rule = quadrature::cell_rule(mesh.dim());
        let contribs: Vec<Vec<(usize, f64)>> = (0..mesh.n_cells())
            .into_par_iter()
            .map(|c| {
                let x = mesh.cell_coords(c);
                let meas = mesh.measure(c);
                let verts = mesh.cell(c).verts;
                let mut loc = vec![0.0; nv * ncomp];
                for (bary, w) in rule.iter() {
                    let p = quadrature::map_point(mesh.dim(), &x, bary);
                    for &(t, wt) in times {
                        let val = f(p, t);
                        for i in 0..nv {
                            for comp in 0..ncomp {
                                loc[i * ncomp + comp] += w * meas * wt * val[comp] * bary[i];
                            }
                        }
                    }
                }
                (0..nv).flat_map(|i| (0..ncomp).map(move |comp| (verts[i] * ncomp + comp, i * ncomp + comp))).map(|(gi, li)| (gi, loc[li])).collect()
            })
            .collect();
        for c in contribs {
            for (i, v) in c {
                full[i] += v;
            }
        }
    }
    if let Some(g) = g {
        for c in 0..mesh.n_cells() {
            for fct in 0..nv {
                if mesh.cell(c).tags[fct] != FacetTag::Neumann {
                    continue;
                }
                let fv = mesh.facet_vertices(c, fct);
                let len = mesh.facet_measure(c, fct);
                let pts = facet_points(mesh, &fv);
                for (p, shape, w) in pts {
                    for &(t, wt) in times {
                        let val = g(p, t);
                        for (k, &v) in fv.iter().enumerate() {
                            for comp in 0..ncomp {
                                full[v * ncomp + comp] += w * len * wt * val[comp] * shape[k];
                            }
                        }
                    }
                }
            }
        }
    }
    space.restrict(&full)
}

/// Quadrature points on a facet: `(point, facet shape values, weight)`.
pub(crate) fn facet_points(mesh: &SpatialMesh, fv: &[usize]) -> Vec<([f64; 2], [f64; 2], f64)> {
    if fv.len() == 1 {
        return vec![(mesh.vertices()[fv[0]], [1.0, 0.0], 1.0)];
    }
    let (a, b) = (mesh.vertices()[fv[0]], mesh.vertices()[fv[1]]);
    quadrature::gauss_legendre(3)
        .iter()
        .map(|&(s, w)| ([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], [1.0 - s, s], w))
        .collect()
}

/// `(v, φ_i)` on the free coefficients for a function of space.
pub fn l2_moments(space: &FeSpace, v: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mesh = space.mesh();
    let ncomp = space.ncomp();
    let nv = mesh.verts_per_cell();
    let rule = quadrature::cell_rule(mesh.dim());
    let mut full = vec![0.0; space.n_full()];
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_coords(c);
        let meas = mesh.measure(c);
        let verts = mesh.cell(c).verts;
        for (bary, w) in rule.iter() {
            let val = v(quadrature::map_point(mesh.dim(), &x, bary));
            for i in 0..nv {
                for comp in 0..ncomp {
                    full[verts[i] * ncomp + comp] += w * meas * val[comp] * bary[i];
                }
            }
        }
    }
    space.restrict(&full)
}

/// Caches of per-space and cross-space operators.
pub struct Operators {
    params: ElasticParams,
    sets: Mutex<HashMap<u64, Arc<OperatorSet>>>,
    mass_factors: Mutex<HashMap<u64, Arc<Factor>>>,
    cross: Mutex<HashMap<(u64, u64), Arc<OperatorSet>>>,
}

impl Operators {
    pub fn new(params: ElasticParams) -> Self {
        Operators {
            params,
            sets: Mutex::new(HashMap::new()),
            mass_factors: Mutex::new(HashMap::new()),
            cross: Mutex::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &ElasticParams {
        &self.params
    }

    pub fn set(&self, space: &FeSpace) -> Result<Arc<OperatorSet>> {
        if let Some(s) = self.sets.lock().unwrap().get(&space.id()) {
            return Ok(s.clone());
        }
        let s = Arc::new(assemble_forms(space, &self.params)?);
        self.sets.lock().unwrap().insert(space.id(), s.clone());
        Ok(s)
    }

    pub fn mass_factor(&self, space: &FeSpace) -> Result<Arc<Factor>> {
        if let Some(f) = self.mass_factors.lock().unwrap().get(&space.id()) {
            return Ok(f.clone());
        }
        let f = Arc::new(Factor::new(&self.set(space)?.mass).map_err(|_| Error::SingularMass)?);
        self.mass_factors.lock().unwrap().insert(space.id(), f.clone());
        Ok(f)
    }

    /// `M_{n,r}` and `S_{n,r}`: rows test space `n`, columns trial space `r`.
    pub fn cross(&self, test: &FeSpace, trial: &FeSpace) -> Result<Arc<OperatorSet>> {
        if test.id() == trial.id() {
            return self.set(test);
        }
        let key = (test.id(), trial.id());
        if let Some(s) = self.cross.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(cross_operators(test, trial, &self.params)?);
        self.cross.lock().unwrap().insert(key, s.clone());
        Ok(s)
    }
}

/// Cross mass and stiffness between two spaces of one forest, assembled on
/// their union mesh.
pub fn cross_operators(test: &FeSpace, trial: &FeSpace, params: &ElasticParams) -> Result<OperatorSet> {
    let ncomp = test.ncomp();
    let u = union_mesh(test.mesh(), trial.mesh())?;
    let (m, s) = assemble_full(&u.mesh, params, ncomp)?;
    let pa = crate::linalg::mul(&kron_identity(&u.from_a, ncomp), test.expansion());
    let pb = crate::linalg::mul(&kron_identity(&u.from_b, ncomp), trial.expansion());
    Ok(OperatorSet { mass: sandwich(&pa, &m, &pb), stiffness: sandwich(&pa, &s, &pb) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_assembled_1d_stiffness() {
        let params = ElasticParams::new(0.25, 0.5).unwrap();
        let m = Arc::new(SpatialMesh::interval(0.0, 1.0, 2, FacetTag::Dirichlet, FacetTag::Dirichlet).unwrap());
        let space = FeSpace::new(m).unwrap();
        let ops = assemble_forms(&space, &params).unwrap();
        assert_eq!(space.n_dofs(), 1);
        assert_relative_eq!(ops.stiffness.get(0, 0).copied().unwrap(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn mass_rows_sum_to_patch_measure() {
        let params = ElasticParams::new(1.0, 1.0).unwrap();
        let m = Arc::new(SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (3, 3), &|_| FacetTag::Neumann).unwrap());
        let space = FeSpace::with_components(m.clone(), 1).unwrap();
        let ops = assemble_forms(&space, &params).unwrap();
        let ones = vec![1.0; space.n_dofs()];
        let row = crate::linalg::matvec(&ops.mass, &ones);
        let total: f64 = row.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn rigid_motion_has_zero_energy() {
        let params = ElasticParams::new(1.0, 2.0).unwrap();
        let m = Arc::new(SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (2, 2), &|_| FacetTag::Neumann).unwrap());
        let space = FeSpace::new(m).unwrap();
        let ops = assemble_forms(&space, &params).unwrap();
        let rot = space.interpolate(&|x| [-x[1], x[0]]);
        assert!(quad_form(&ops.stiffness, &rot).abs() < 1e-12);
        let stretch = space.interpolate(&|x| [x[0], 0.0]);
        assert_relative_eq!(quad_form(&ops.stiffness, &stretch), 2.0 * 1.0 + 2.0, epsilon = 1e-12);
    }
}
