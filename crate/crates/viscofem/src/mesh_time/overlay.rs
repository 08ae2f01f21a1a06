//! The common refinement of a set of meshes from one forest. Every function
//! living on any of the member meshes is P1 on each overlay cell, so all
//! space-time integrals of products can be evaluated exactly here.

use std::collections::HashMap;
use std::sync::Arc;

use super::mesh::{midpoint, FacetTag, SpatialMesh};
use super::union::{owner_map, prolongation, union_leaves};
use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_t, SpMat};

/// A piece of a facet between two overlay cells, or on the boundary.
#[derive(Clone, Debug)]
pub struct SubFacet {
    pub left: usize,
    pub right: Option<usize>,
    pub tag: FacetTag,
    /// End points (equal in 1D).
    pub points: [[f64; 2]; 2],
    /// Length in 2D, 1 in 1D.
    pub measure: f64,
    /// Unit normal pointing out of `left`.
    pub normal: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct Overlay {
    mesh: Arc<SpatialMesh>,
    owners: HashMap<u64, Vec<usize>>,
    prolongations: HashMap<u64, SpMat>,
    facets: Vec<SubFacet>,
    measures: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
}

impl Overlay {
    pub fn new(meshes: &[&Arc<SpatialMesh>]) -> Result<Self> {
        let first = meshes.first().ok_or_else(|| Error::MeshFamilyViolation("empty mesh set".into()))?;
        let mut g: Arc<SpatialMesh> = (*first).clone();
        for m in &meshes[1..] {
            if m.id() != g.id() {
                let u = union_leaves(&g, m)?;
                if u.n_cells() != g.n_cells() {
                    g = Arc::new(u);
                }
            }
        }
        let measures = (0..g.n_cells()).map(|c| g.measure(c)).collect();
        let grads = (0..g.n_cells()).map(|c| g.shape_gradients(c)).collect();
        let facets = build_facets(&g);
        let mut ov = Overlay { mesh: g, owners: HashMap::new(), prolongations: HashMap::new(), facets, measures, grads };
        for m in meshes {
            ov.register(m)?;
        }
        Ok(ov)
    }

    /// Makes a mesh coarser than (or equal to) the overlay available.
    pub fn register(&mut self, mesh: &SpatialMesh) -> Result<()> {
        if self.owners.contains_key(&mesh.id()) {
            return Ok(());
        }
        self.owners.insert(mesh.id(), owner_map(&self.mesh, mesh)?);
        self.prolongations.insert(mesh.id(), prolongation(mesh, &self.mesh)?);
        Ok(())
    }

    pub fn mesh(&self) -> &Arc<SpatialMesh> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn facets(&self) -> &[SubFacet] {
        &self.facets
    }

    pub fn measure(&self, c: usize) -> f64 {
        self.measures[c]
    }

    pub fn grads(&self, c: usize) -> &[[f64; 2]; 3] {
        &self.grads[c]
    }

    pub fn owners(&self, mesh_id: u64) -> &[usize] {
        self.owners.get(&mesh_id).map(|v| v.as_slice()).expect("mesh registered with the overlay")
    }

    pub fn contains(&self, mesh_id: u64) -> bool {
        self.owners.contains_key(&mesh_id)
    }

    /// Full-layout values on a member mesh to full-layout values on the overlay.
    pub fn prolong(&self, mesh_id: u64, values: &[f64], ncomp: usize) -> Vec<f64> {
        let p = self.prolongations.get(&mesh_id).expect("mesh registered with the overlay");
        if ncomp == 1 {
            return matvec(p, values);
        }
        let mut out = vec![0.0; p.rows() * ncomp];
        for c in 0..ncomp {
            let comp: Vec<f64> = values.iter().skip(c).step_by(ncomp).copied().collect();
            for (i, v) in matvec(p, &comp).into_iter().enumerate() {
                out[i * ncomp + c] = v;
            }
        }
        out
    }

    /// Transpose of [`Overlay::prolong`]: overlay functionals to functionals
    /// on the hat functions of a member mesh.
    pub fn prolong_t(&self, mesh_id: u64, values: &[f64], ncomp: usize) -> Vec<f64> {
        let p = self.prolongations.get(&mesh_id).expect("mesh registered with the overlay");
        if ncomp == 1 {
            return matvec_t(p, values);
        }
        let mut out = vec![0.0; p.cols() * ncomp];
        for c in 0..ncomp {
            let comp: Vec<f64> = values.iter().skip(c).step_by(ncomp).copied().collect();
            for (i, v) in matvec_t(p, &comp).into_iter().enumerate() {
                out[i * ncomp + c] = v;
            }
        }
        out
    }

    /// Vertex values of overlay cell `c` for component `comp`.
    pub fn local(&self, values: &[f64], ncomp: usize, c: usize, comp: usize) -> [f64; 3] {
        let cell = self.mesh.cell(c);
        let mut out = [0.0; 3];
        for i in 0..self.mesh.verts_per_cell() {
            out[i] = values[cell.verts[i] * ncomp + comp];
        }
        out
    }

    /// Gradient of component `comp` on cell `c`.
    pub fn gradient(&self, values: &[f64], ncomp: usize, c: usize, comp: usize) -> [f64; 2] {
        let loc = self.local(values, ncomp, c, comp);
        let g = &self.grads[c];
        let mut out = [0.0; 2];
        for i in 0..self.mesh.verts_per_cell() {
            out[0] += loc[i] * g[i][0];
            out[1] += loc[i] * g[i][1];
        }
        out
    }

    /// Value of a full-layout field at a point of cell `c`.
    pub fn eval(&self, values: &[f64], ncomp: usize, c: usize, x: [f64; 2]) -> [f64; 2] {
        let lam = self.mesh.barycentric(c, x);
        let mut out = [0.0; 2];
        for comp in 0..ncomp {
            let loc = self.local(values, ncomp, c, comp);
            out[comp] = (0..self.mesh.verts_per_cell()).map(|i| lam[i] * loc[i]).sum();
        }
        out
    }

    /// `∫_c u v` summed over components, exact for P1 fields.
    pub fn cell_product(&self, u: &[f64], v: &[f64], ncomp: usize, c: usize) -> f64 {
        let nv = self.mesh.verts_per_cell();
        let denom = ((nv) * (nv + 1)) as f64;
        let mut s = 0.0;
        for comp in 0..ncomp {
            let a = self.local(u, ncomp, c, comp);
            let b = self.local(v, ncomp, c, comp);
            let mut diag = 0.0;
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in 0..nv {
                diag += a[i] * b[i];
                sa += a[i];
                sb += b[i];
            }
            s += (diag + sa * sb) / denom;
        }
        s * self.measures[c]
    }

    /// `∫_Ω u v`.
    pub fn product(&self, u: &[f64], v: &[f64], ncomp: usize) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_product(u, v, ncomp, c)).sum()
    }

    /// Integral of a full-layout field over a sub-facet, per component.
    pub fn facet_integral(&self, values: &[f64], ncomp: usize, f: &SubFacet) -> [f64; 2] {
        let a = self.eval(values, ncomp, f.left, f.points[0]);
        let b = self.eval(values, ncomp, f.left, f.points[1]);
        [0.5 * (a[0] + b[0]) * f.measure, 0.5 * (a[1] + b[1]) * f.measure]
    }
}

fn build_facets(g: &SpatialMesh) -> Vec<SubFacet> {
    let nv = g.verts_per_cell();
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for c in 0..g.n_cells() {
        for f in 0..nv {
            let fv = g.facet_vertices(c, f);
            let key = if fv.len() == 1 { (fv[0], fv[0]) } else { (fv[0].min(fv[1]), fv[0].max(fv[1])) };
            by_edge.entry(key).or_default().push(c);
        }
    }
    let mut out = Vec::new();
    for c in 0..g.n_cells() {
        for f in 0..nv {
            let tag = g.cell(c).tags[f];
            let fv = g.facet_vertices(c, f);
            let normal = g.outward_normal(c, f);
            let p = g.vertices()[fv[0]];
            let q = g.vertices()[*fv.last().unwrap()];
            if tag != FacetTag::Interior {
                out.push(SubFacet { left: c, right: None, tag, points: [p, q], measure: g.facet_measure(c, f), normal });
                continue;
            }
            let (a, b) = (fv[0], *fv.last().unwrap());
            collect(g, &by_edge, c, normal, a, b, false, &mut out);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn collect(
    g: &SpatialMesh,
    by_edge: &HashMap<(usize, usize), Vec<usize>>,
    c: usize,
    normal: [f64; 2],
    a: usize,
    b: usize,
    split: bool,
    out: &mut Vec<SubFacet>,
) {
    let key = (a.min(b), a.max(b));
    let x = g.vertices();
    if let Some(other) = by_edge.get(&key).and_then(|l| l.iter().copied().find(|&d| d != c)) {
        if split || c < other {
            let measure = if g.dim() == 1 { 1.0 } else { super::mesh::dist(x[a], x[b]) };
            out.push(SubFacet {
                left: c,
                right: Some(other),
                tag: FacetTag::Interior,
                points: [x[a], x[b]],
                measure,
                normal,
            });
        }
        return;
    }
    if g.dim() == 2 {
        if let Some(m) = g.vertex_at(midpoint(x[a], x[b])) {
            collect(g, by_edge, c, normal, a, m, true, out);
            collect(g, by_edge, c, normal, m, b, true, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_time::{refine, refine_with, Closure};

    #[test]
    fn facet_measure_balances() {
        let m = Arc::new(SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (2, 2), &|_| FacetTag::Neumann).unwrap());
        let r = Arc::new(refine_with(&m, &[0], Closure::OneHanging));
        let ov = Overlay::new(&[&m, &r]).unwrap();
        let boundary: f64 = ov.facets().iter().filter(|f| f.right.is_none()).map(|f| f.measure).sum();
        assert!((boundary - 4.0).abs() < 1e-13);
        // every interior facet length is counted once from each side
        let mut per_cell = vec![0.0; ov.n_cells()];
        for f in ov.facets() {
            per_cell[f.left] += f.measure;
            if let Some(r) = f.right {
                per_cell[r] += f.measure;
            }
        }
        for c in 0..ov.n_cells() {
            let perim: f64 = (0..3).map(|f| ov.mesh().facet_measure(c, f)).sum();
            assert!((per_cell[c] - perim).abs() < 1e-13, "cell {c}");
        }
    }

    #[test]
    fn prolongation_reproduces_linear() {
        let m = Arc::new(SpatialMesh::interval(0.0, 1.0, 2, FacetTag::Dirichlet, FacetTag::Neumann).unwrap());
        let r = Arc::new(refine(&m, &[1]));
        let ov = Overlay::new(&[&m, &r]).unwrap();
        let vals: Vec<f64> = m.vertices().iter().map(|x| 3.0 * x[0]).collect();
        let g = ov.prolong(m.id(), &vals, 1);
        for (v, x) in g.iter().zip(ov.mesh().vertices()) {
            assert!((v - 3.0 * x[0]).abs() < 1e-14);
        }
        assert!((ov.product(&g, &g, 1) - 3.0).abs() < 1e-13);
    }
}
