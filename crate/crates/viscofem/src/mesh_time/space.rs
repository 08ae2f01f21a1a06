//! Constrained P1 spaces: Dirichlet vertices are fixed to zero and hanging
//! vertices interpolate the endpoints of the edge they sit on.

use std::collections::HashMap;
use std::sync::Arc;

use super::mesh::{dist, midpoint, FacetTag, SpatialMesh};
use crate::error::{Error, Result};
use crate::linalg::{from_triplets, matvec, matvec_t, SpMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    Free(usize),
    Dirichlet,
    Hanging(usize, usize),
}

/// P1 space on a mesh with `ncomp` components per vertex.
///
/// Full layout: index `vertex * ncomp + comp`. Free coefficients map to the
/// full layout through the expansion matrix `E`.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Arc<SpatialMesh>,
    ncomp: usize,
    kinds: Vec<VertexKind>,
    n_free: usize,
    expansion: SpMat,
}

impl FeSpace {
    /// Space with the physical component count (1 in 1D, 2 in 2D).
    pub fn new(mesh: Arc<SpatialMesh>) -> Result<Self> {
        let ncomp = mesh.dim();
        Self::with_components(mesh, ncomp)
    }

    pub fn with_components(mesh: Arc<SpatialMesh>, ncomp: usize) -> Result<Self> {
        let dirichlet = mesh.tagged_vertices(FacetTag::Dirichlet);
        let nverts = mesh.n_vertices();
        let mut hanging: HashMap<usize, (usize, usize)> = HashMap::new();
        if mesh.dim() == 2 {
            let mut edges: Vec<(usize, usize)> = Vec::new();
            for c in mesh.cells() {
                for e in 0..3 {
                    let (p, q) = (c.verts[(e + 1) % 3], c.verts[(e + 2) % 3]);
                    edges.push((p.min(q), p.max(q)));
                }
            }
            edges.sort_unstable();
            edges.dedup();
            let x = mesh.vertices();
            edges.sort_by(|a, b| dist(x[b.0], x[b.1]).total_cmp(&dist(x[a.0], x[a.1])).then(a.cmp(b)));
            for (p, q) in edges {
                if let Some(m) = mesh.vertex_at(midpoint(x[p], x[q])) {
                    hanging.entry(m).or_insert((p, q));
                }
            }
        }
        let mut kinds = Vec::with_capacity(nverts);
        let mut n_free = 0;
        for v in 0..nverts {
            kinds.push(if dirichlet[v] {
                VertexKind::Dirichlet
            } else if let Some(&(p, q)) = hanging.get(&v) {
                VertexKind::Hanging(p, q)
            } else {
                n_free += 1;
                VertexKind::Free(n_free - 1)
            });
        }
        let mut memo: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        let mut entries = Vec::new();
        for v in 0..nverts {
            let row = resolve(v, &kinds, &mut memo, 0)?;
            for c in 0..ncomp {
                for &(f, w) in &row {
                    entries.push((v * ncomp + c, f * ncomp + c, w));
                }
            }
        }
        let expansion = from_triplets(nverts * ncomp, n_free * ncomp, &entries);
        Ok(FeSpace { mesh, ncomp, kinds, n_free, expansion })
    }

    /// Same as the mesh id: a mesh determines its space.
    pub fn id(&self) -> u64 {
        self.mesh.id()
    }

    pub fn mesh(&self) -> &Arc<SpatialMesh> {
        &self.mesh
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn n_dofs(&self) -> usize {
        self.n_free * self.ncomp
    }

    pub fn n_full(&self) -> usize {
        self.mesh.n_vertices() * self.ncomp
    }

    pub fn vertex_kinds(&self) -> &[VertexKind] {
        &self.kinds
    }

    pub fn expansion(&self) -> &SpMat {
        &self.expansion
    }

    /// Full vertex values of a free coefficient vector.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        matvec(&self.expansion, free)
    }

    /// `Eᵀ r` for a full-layout functional `r`.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        matvec_t(&self.expansion, full)
    }

    /// Free coefficients of the nodal interpolant of `f`.
    pub fn interpolate(&self, f: &dyn Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs()];
        for (v, kind) in self.kinds.iter().enumerate() {
            if let VertexKind::Free(i) = kind {
                let val = f(self.mesh.vertices()[v]);
                for c in 0..self.ncomp {
                    out[i * self.ncomp + c] = val[c];
                }
            }
        }
        out
    }
}

fn resolve(
    v: usize,
    kinds: &[VertexKind],
    memo: &mut HashMap<usize, Vec<(usize, f64)>>,
    depth: usize,
) -> Result<Vec<(usize, f64)>> {
    if let Some(r) = memo.get(&v) {
        return Ok(r.clone());
    }
    if depth > 64 {
        return Err(Error::MeshFamilyViolation("cyclic hanging-node constraints".into()));
    }
    let row = match kinds[v] {
        VertexKind::Free(i) => vec![(i, 1.0)],
        VertexKind::Dirichlet => Vec::new(),
        VertexKind::Hanging(p, q) => {
            let mut acc: HashMap<usize, f64> = HashMap::new();
            for (f, w) in resolve(p, kinds, memo, depth + 1)?.into_iter().chain(resolve(q, kinds, memo, depth + 1)?) {
                *acc.entry(f).or_insert(0.0) += 0.5 * w;
            }
            let mut r: Vec<_> = acc.into_iter().collect();
            r.sort_by_key(|e| e.0);
            r
        }
    };
    memo.insert(v, row.clone());
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_time::{refine_with, Closure};

    #[test]
    fn dirichlet_vertices_removed() {
        let m = Arc::new(SpatialMesh::interval(0.0, 1.0, 4, FacetTag::Dirichlet, FacetTag::Neumann).unwrap());
        let s = FeSpace::new(m).unwrap();
        assert_eq!(s.n_dofs(), 4);
        let full = s.expand(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(full, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn hanging_vertex_averages_edge() {
        let m = SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (2, 2), &|_| FacetTag::Neumann).unwrap();
        let r = refine_with(&m, &[0], Closure::OneHanging);
        let s = FeSpace::with_components(Arc::new(r), 1).unwrap();
        let hanging = s.vertex_kinds().iter().filter(|k| matches!(k, VertexKind::Hanging(..))).count();
        assert!(hanging > 0);
        // a linear function stays linear after constraint application
        let lin = s.interpolate(&|x| [1.0 + 2.0 * x[0] - x[1], 0.0]);
        let full = s.expand(&lin);
        for (v, x) in s.mesh().vertices().iter().enumerate() {
            assert!((full[v] - (1.0 + 2.0 * x[0] - x[1])).abs() < 1e-13);
        }
    }
}
