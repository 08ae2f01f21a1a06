//! Interior-facet residuals `r_d` and Neumann residuals `g_d` of a discrete
//! solution, evaluated on the overlay of every mesh involved.

use std::sync::Arc;

use crate::assembly::quadrature::{cell_rule, gauss_legendre, map_point};
use crate::assembly::{assemble_full, ElasticParams, SpaceTimeFn};
use crate::error::Result;
use crate::kernel::KernelSpec;
use crate::linalg::{matvec, SpMat};
use crate::mesh_time::{union_mesh, FacetTag, FeSpace, Overlay, SpatialMesh, SubFacet, TimePartition, UnionMesh};
use crate::primal_solver::SpaceTimeSolution;
use crate::problems::ProblemSpec;

/// `r_d = -½[σ0(U1)·n]` on every interior overlay sub-facet and time level,
/// stored as seen from the left cell; zero on the boundary.
#[derive(Clone, Debug)]
pub struct EdgeResidual {
    /// Overlay facet indices.
    pub facets: Vec<usize>,
    /// `levels[m][e]`: value at `t_m` on facet `facets[e]`.
    pub levels: Vec<Vec<[f64; 2]>>,
}

impl EdgeResidual {
    /// Endpoint values on slab `n`; `r_d` is linear in time between them.
    pub fn on_slab(&self, n: usize, e: usize) -> ([f64; 2], [f64; 2]) {
        (self.levels[n - 1][e], self.levels[n][e])
    }
}

/// `g_d = (σ0(U1) - ∫_0^t K(t-s) σ0(U1(s)) ds)·n` on Neumann sub-facets.
#[derive(Clone, Debug)]
pub struct NeumannResidual {
    pub facets: Vec<usize>,
    /// `traction[m][e] = σ0(U1(t_m))·n`.
    pub traction: Vec<Vec<[f64; 2]>>,
    partition: TimePartition,
    kernel: KernelSpec,
}

impl NeumannResidual {
    /// Weights `c_m(t)` with `∫_0^t K(t-s) y(s) ds = Σ_m c_m y(t_m)` for
    /// piecewise-linear `y`.
    pub fn history_coefficients(&self, t: f64) -> Vec<f64> {
        history_coefficients(&self.kernel, &self.partition, t)
    }

    /// `σ0(U1(t))·n` on entry `e`.
    pub fn elastic(&self, e: usize, t: f64) -> [f64; 2] {
        let n = self.partition.slab_of(t);
        let (t0, t1) = self.partition.slab(n);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        lerp2(self.traction[n - 1][e], self.traction[n][e], s)
    }

    /// `g_d` on entry `e` at time `t`, with precomputed history weights.
    pub fn value_with(&self, e: usize, t: f64, coeffs: &[f64]) -> [f64; 2] {
        let mut out = self.elastic(e, t);
        for (m, c) in coeffs.iter().enumerate() {
            if *c != 0.0 {
                out[0] -= c * self.traction[m][e][0];
                out[1] -= c * self.traction[m][e][1];
            }
        }
        out
    }

    pub fn value(&self, e: usize, t: f64) -> [f64; 2] {
        self.value_with(e, t, &self.history_coefficients(t))
    }
}

/// Nodal weights of the history integral at `t` over `partition`.
pub fn history_coefficients(kernel: &KernelSpec, partition: &TimePartition, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; partition.n_slabs() + 1];
    if kernel.is_zero() {
        return out;
    }
    for j in 1..=partition.n_slabs() {
        let slab = partition.slab(j);
        if slab.0 >= t {
            break;
        }
        let (wl, wr) = kernel.history_weights(t, slab);
        out[j - 1] += wl;
        out[j] += wr;
    }
    out
}

pub(crate) fn lerp2(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

pub(crate) fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `∫_I |a (1-s) + b s|^2 dt` for vectors `a`, `b` at the ends of `I`.
pub fn linear_norm_sq(a: [f64; 2], b: [f64; 2], k: f64) -> f64 {
    k / 3.0 * (dot2(a, a) + dot2(a, b) + dot2(b, b))
}

/// `‖r‖_{∂K^n}` from the endpoint norms: `√(2/3) k^(1/2) (‖r(t_{n-1})‖ + ‖r(t_n)‖)`.
pub fn endpoint_bound(start: f64, end: f64, k: f64) -> f64 {
    (2.0 / 3.0f64).sqrt() * k.sqrt() * (start + end)
}

/// Everything the indicators need about a discrete solution, on one overlay.
pub struct Residuals {
    pub overlay: Overlay,
    pub partition: TimePartition,
    /// `T̄^n` at index `n - 1`.
    pub unions: Vec<UnionMesh>,
    /// Full-layout overlay values of `U1`, `U2` at every level.
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub edges: EdgeResidual,
    pub neumann: NeumannResidual,
    pub ncomp: usize,
    pub params: ElasticParams,
    pub kernel: KernelSpec,
    /// Overlay stiffness, full layout.
    pub stiffness: SpMat,
    pub mesh0: Arc<SpatialMesh>,
    f: Option<SpaceTimeFn>,
    g: Option<SpaceTimeFn>,
}

/// Residuals of `u` on the overlay of its meshes.
pub fn compute_residuals(u: &SpaceTimeSolution, problem: &ProblemSpec) -> Result<Residuals> {
    Residuals::new(u, problem, &[])
}

impl Residuals {
    /// Residuals on an overlay that also resolves `extra` meshes.
    pub fn new(u: &SpaceTimeSolution, problem: &ProblemSpec, extra: &[Arc<SpatialMesh>]) -> Result<Self> {
        let mut meshes = u.meshes();
        for m in extra {
            if !meshes.iter().any(|x| x.id() == m.id()) {
                meshes.push(m.clone());
            }
        }
        let refs: Vec<&Arc<SpatialMesh>> = meshes.iter().collect();
        let mut overlay = Overlay::new(&refs)?;
        let unions: Vec<UnionMesh> = u
            .levels
            .windows(2)
            .map(|w| union_mesh(w[0].space.mesh(), w[1].space.mesh()))
            .collect::<Result<_>>()?;
        for un in &unions {
            overlay.register(&un.mesh)?;
        }
        let ncomp = u.levels[0].space.ncomp();
        let lift = |space: &FeSpace, v: &[f64]| overlay.prolong(space.id(), &space.expand(v), ncomp);
        let u1: Vec<Vec<f64>> = u.levels.iter().map(|l| lift(&l.space, &l.u1)).collect();
        let u2: Vec<Vec<f64>> = u.levels.iter().map(|l| lift(&l.space, &l.u2)).collect();
        let params = problem.params;
        let dim = overlay.dim();
        let stresses: Vec<Vec<[[f64; 2]; 2]>> = u1
            .iter()
            .map(|v| {
                (0..overlay.n_cells())
                    .map(|c| {
                        let mut grad = [[0.0; 2]; 2];
                        for (comp, row) in grad.iter_mut().enumerate().take(ncomp) {
                            *row = overlay.gradient(v, ncomp, c, comp);
                        }
                        params.stress(dim, grad)
                    })
                    .collect()
            })
            .collect();
        let apply = |s: &[[f64; 2]; 2], n: [f64; 2]| -> [f64; 2] {
            if dim == 1 {
                [s[0][0] * n[0], 0.0]
            } else {
                [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
            }
        };
        let facets = overlay.facets();
        let interior: Vec<usize> = (0..facets.len()).filter(|&i| facets[i].right.is_some()).collect();
        let neumann_ids: Vec<usize> = (0..facets.len()).filter(|&i| facets[i].tag == FacetTag::Neumann).collect();
        let edge_levels = stresses
            .iter()
            .map(|s| {
                interior
                    .iter()
                    .map(|&i| {
                        let f = &facets[i];
                        let a = apply(&s[f.left], f.normal);
                        let b = apply(&s[f.right.unwrap()], f.normal);
                        [0.5 * (a[0] - b[0]), 0.5 * (a[1] - b[1])]
                    })
                    .collect()
            })
            .collect();
        let traction = stresses
            .iter()
            .map(|s| neumann_ids.iter().map(|&i| apply(&s[facets[i].left], facets[i].normal)).collect())
            .collect();
        let (_, stiffness) = assemble_full(overlay.mesh(), &params, ncomp)?;
        Ok(Residuals {
            edges: EdgeResidual { facets: interior, levels: edge_levels },
            neumann: NeumannResidual {
                facets: neumann_ids,
                traction,
                partition: u.partition.clone(),
                kernel: problem.kernel.spec().clone(),
            },
            partition: u.partition.clone(),
            unions,
            u1,
            u2,
            ncomp,
            params,
            kernel: problem.kernel.spec().clone(),
            stiffness,
            mesh0: u.levels[0].space.mesh().clone(),
            overlay,
            f: problem.load.f.clone(),
            g: problem.load.g.clone(),
        })
    }

    pub fn facet(&self, i: usize) -> &SubFacet {
        &self.overlay.facets()[i]
    }

    /// Owners in `T̄^n` of every overlay cell.
    pub fn union_owners(&self, n: usize) -> &[usize] {
        self.overlay.owners(self.unions[n - 1].mesh.id())
    }

    /// `h̄_K` of `T̄^n`.
    pub fn union_h(&self, n: usize) -> Vec<f64> {
        self.unions[n - 1].mesh_function()
    }

    /// Overlay values of `U1`, `U2` at `t` inside slab `n`.
    pub fn state(&self, n: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (t0, t1) = self.partition.slab(n);
        let s = (t - t0) / (t1 - t0);
        (lerp(&self.u1[n - 1], &self.u1[n], s), lerp(&self.u2[n - 1], &self.u2[n], s))
    }

    /// `(U̇1, U̇2)` on slab `n`.
    pub fn rates(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let k = self.partition.k(n);
        let d = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (y - x) / k).collect() };
        (d(&self.u1[n - 1], &self.u1[n]), d(&self.u2[n - 1], &self.u2[n]))
    }

    pub fn f(&self) -> Option<&SpaceTimeFn> {
        self.f.as_ref()
    }

    pub fn g(&self) -> Option<&SpaceTimeFn> {
        self.g.as_ref()
    }

    /// `Σ_c weight(c) ∫_c |v - data|^2` over overlay cells, with `data`
    /// optional.
    pub fn weighted_cell_norm_sq(
        &self,
        v: &[f64],
        data: Option<&dyn Fn([f64; 2]) -> [f64; 2]>,
        weight: &dyn Fn(usize) -> f64,
    ) -> f64 {
        let mesh = self.overlay.mesh();
        let dim = mesh.dim();
        let nv = mesh.verts_per_cell();
        let mut total = 0.0;
        for c in 0..mesh.n_cells() {
            let w = weight(c);
            if w == 0.0 {
                continue;
            }
            let cell = match data {
                None => self.overlay.cell_product(v, v, self.ncomp, c),
                Some(d) => {
                    let x = mesh.cell_coords(c);
                    let verts = mesh.cell(c).verts;
                    let mut acc = 0.0;
                    for (bary, wq) in cell_rule(dim) {
                        let p = map_point(dim, &x, bary);
                        let val = d(p);
                        for (comp, dv) in val.iter().enumerate().take(self.ncomp) {
                            let uh: f64 = (0..nv).map(|i| bary[i] * v[verts[i] * self.ncomp + comp]).sum();
                            acc += wq * (uh - dv).powi(2);
                        }
                    }
                    acc * self.overlay.measure(c)
                }
            };
            total += w * cell;
        }
        total
    }

    /// `Σ_K weight(K) ‖g_d(t) - g(t)‖^2_{∂K ∩ Γ_N}` with `K` given by `owners`.
    pub fn neumann_mismatch_sq(&self, t: f64, owners: &[usize], weight: &dyn Fn(usize) -> f64) -> f64 {
        let coeffs = self.neumann.history_coefficients(t);
        let mut total = 0.0;
        for (e, &i) in self.neumann.facets.iter().enumerate() {
            let f = self.facet(i);
            let gd = self.neumann.value_with(e, t, &coeffs);
            let w = weight(owners[f.left]);
            total += w * facet_quadrature(f, &|p| {
                let g = self.g.as_ref().map_or([0.0; 2], |g| g(p, t));
                (gd[0] - g[0]).powi(2) + (gd[1] - g[1]).powi(2)
            });
        }
        total
    }

    /// Per-cell `‖r_d‖^2_{∂K}` pieces on slab `n` for the cells given by
    /// `owners`: `(A_K, C_K, B_K)` with
    /// `‖r_d(t)‖^2_{∂K} = (1-s)^2 A + 2 s (1-s) C + s^2 B`.
    pub fn edge_moments(&self, n: usize, owners: &[usize], n_cells: usize) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; n_cells];
        for (e, &i) in self.edges.facets.iter().enumerate() {
            let f = self.facet(i);
            let (a, b) = self.edges.on_slab(n, e);
            let m = f.measure;
            for k in [owners[f.left], owners[f.right.unwrap()]] {
                out[k][0] += m * dot2(a, a);
                out[k][1] += m * dot2(a, b);
                out[k][2] += m * dot2(b, b);
            }
        }
        out
    }

    /// Per-cell `‖(K*r_d)^j(t)‖^2_{∂K}` for `K ∈ T̄^j`.
    pub fn convolved_edge_sq(&self, j: usize, t: f64, owners: &[usize], n_cells: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_cells];
        let (wl, wr) = self.kernel.history_weights(t, self.partition.slab(j));
        if wl == 0.0 && wr == 0.0 {
            return out;
        }
        for (e, &i) in self.edges.facets.iter().enumerate() {
            let f = self.facet(i);
            let (a, b) = self.edges.on_slab(j, e);
            let v = [wl * a[0] + wr * b[0], wl * a[1] + wr * b[1]];
            let sq = f.measure * dot2(v, v);
            out[owners[f.left]] += sq;
            out[owners[f.right.unwrap()]] += sq;
        }
        out
    }

    /// `S_G v` for a full-layout overlay vector.
    pub fn stiffness_apply(&self, v: &[f64]) -> Vec<f64> {
        matvec(&self.stiffness, v)
    }
}

/// `∫_f φ` with three-point Gauss on a segment, point value in 1D.
pub(crate) fn facet_quadrature(f: &SubFacet, phi: &dyn Fn([f64; 2]) -> f64) -> f64 {
    if f.points[0] == f.points[1] {
        return phi(f.points[0]) * f.measure;
    }
    let (a, b) = (f.points[0], f.points[1]);
    gauss_legendre(3)
        .iter()
        .map(|&(s, w)| w * phi([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]))
        .sum::<f64>()
        * f.measure
}

pub(crate) fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_bound_dominates_exact_norm() {
        let k = 0.3;
        for (a, b) in [([1.0, 0.0], [1.0, 0.0]), ([1.0, -2.0], [0.5, 3.0]), ([0.0, 0.0], [2.0, 1.0])] {
            let exact = linear_norm_sq(a, b, k).sqrt();
            let bound = endpoint_bound(dot2(a, a).sqrt(), dot2(b, b).sqrt(), k);
            assert!(exact <= bound * (1.0 + 1e-14));
        }
    }

    #[test]
    fn history_coefficients_of_constant_path() {
        let p = TimePartition::uniform(2.0, 4).unwrap();
        let k = KernelSpec::Prony(vec![crate::kernel::PronyTerm { gamma: 0.4, lambda: 1.0 }]);
        let c = history_coefficients(&k, &p, 2.0);
        let s: f64 = c.iter().sum();
        assert!((s - 0.4 * (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }
}
