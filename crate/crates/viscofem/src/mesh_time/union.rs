//! Union (overlay) meshes of two members of one refinement forest and the
//! P1 prolongations into them.

use std::collections::HashSet;
use std::sync::Arc;

use super::mesh::{CellKey, SpatialMesh};
use crate::error::{Error, Result};
use crate::linalg::{from_triplets, SpMat};

/// The mutually finest mesh of `a` and `b` with prolongations from both.
#[derive(Clone, Debug)]
pub struct UnionMesh {
    pub mesh: Arc<SpatialMesh>,
    /// Scalar prolongation from `a` (rows: union vertices).
    pub from_a: SpMat,
    pub from_b: SpMat,
    pub h_min: f64,
    pub h_max: f64,
}

impl UnionMesh {
    /// `h̄_K` per union cell.
    pub fn mesh_function(&self) -> Vec<f64> {
        (0..self.mesh.n_cells()).map(|c| self.mesh.diameter(c)).collect()
    }
}

fn strict_ancestors(m: &SpatialMesh) -> HashSet<CellKey> {
    let mut out = HashSet::new();
    for c in m.cells() {
        let mut k = c.key;
        while let Some(p) = k.parent() {
            if !out.insert(p) {
                break;
            }
            k = p;
        }
    }
    out
}

/// Leaves of the overlay of `a` and `b`.
pub fn union_leaves(a: &SpatialMesh, b: &SpatialMesh) -> Result<SpatialMesh> {
    if a.family() != b.family() || a.dim() != b.dim() {
        return Err(Error::UnrelatedMeshes);
    }
    let anc_a = strict_ancestors(a);
    let anc_b = strict_ancestors(b);
    let mut coords: Vec<[f64; 2]> = a.vertices().to_vec();
    let offset = coords.len();
    coords.extend_from_slice(b.vertices());
    let mut cells = Vec::new();
    for c in a.cells() {
        if !anc_b.contains(&c.key) {
            cells.push(*c);
        }
    }
    for c in b.cells() {
        if !anc_a.contains(&c.key) && a.find(c.key).is_none() {
            let mut c = *c;
            for v in c.verts.iter_mut().take(b.verts_per_cell()) {
                *v += offset;
            }
            cells.push(c);
        }
    }
    SpatialMesh::assemble(a.family(), a.dim(), &coords, cells)
}

/// Union mesh with prolongations. `union_mesh(m, m)` returns `m` itself.
pub fn union_mesh(a: &Arc<SpatialMesh>, b: &Arc<SpatialMesh>) -> Result<UnionMesh> {
    let mesh = if a.id() == b.id() {
        a.clone()
    } else {
        let u = union_leaves(a, b)?;
        if u.n_cells() == a.n_cells() && a.cells().iter().all(|c| u.find(c.key).is_some()) {
            a.clone()
        } else if u.n_cells() == b.n_cells() && b.cells().iter().all(|c| u.find(c.key).is_some()) {
            b.clone()
        } else {
            Arc::new(u)
        }
    };
    let from_a = prolongation(a, &mesh)?;
    let from_b = prolongation(b, &mesh)?;
    Ok(UnionMesh { h_min: mesh.h_min(), h_max: mesh.h_max(), mesh, from_a, from_b })
}

/// For every cell of `fine`, the cell of `coarse` containing it.
pub fn owner_map(fine: &SpatialMesh, coarse: &SpatialMesh) -> Result<Vec<usize>> {
    if fine.family() != coarse.family() {
        return Err(Error::UnrelatedMeshes);
    }
    fine.cells()
        .iter()
        .map(|c| {
            coarse
                .owner_of(c.key)
                .ok_or_else(|| Error::MeshFamilyViolation(format!("cell {:?} is coarser than the target", c.key)))
        })
        .collect()
}

/// Scalar P1 prolongation from `coarse` to a mesh `fine` refining it
/// (rows: fine vertices, columns: coarse vertices).
pub fn prolongation(coarse: &SpatialMesh, fine: &SpatialMesh) -> Result<SpMat> {
    if coarse.id() == fine.id() {
        return Ok(crate::linalg::identity(coarse.n_vertices()));
    }
    let owners = owner_map(fine, coarse)?;
    let nv = fine.verts_per_cell();
    let mut done = vec![false; fine.n_vertices()];
    let mut entries = Vec::new();
    for (c, &owner) in owners.iter().enumerate() {
        let cverts = coarse.cell(owner).verts;
        for &v in fine.cell(c).verts.iter().take(nv) {
            if done[v] {
                continue;
            }
            done[v] = true;
            let x = fine.vertices()[v];
            if let Some(cv) = coarse.vertex_at(x) {
                entries.push((v, cv, 1.0));
                continue;
            }
            let lam = coarse.barycentric(owner, x);
            for i in 0..nv {
                let w = lam[i];
                if w.abs() > 1e-14 {
                    entries.push((v, cverts[i], w));
                }
            }
        }
    }
    Ok(from_triplets(fine.n_vertices(), coarse.n_vertices(), &entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_time::{refine, FacetTag};

    #[test]
    fn union_of_disjoint_refinements() {
        let m = SpatialMesh::interval(0.0, 1.0, 4, FacetTag::Dirichlet, FacetTag::Neumann).unwrap();
        let a = Arc::new(refine(&m, &[0]));
        let b = Arc::new(refine(&m, &[3]));
        let u = union_mesh(&a, &b).unwrap();
        assert_eq!(u.mesh.n_cells(), 6);
        let unrelated = Arc::new(SpatialMesh::interval(0.0, 1.0, 4, FacetTag::Dirichlet, FacetTag::Neumann).unwrap());
        assert!(matches!(union_mesh(&a, &unrelated), Err(Error::UnrelatedMeshes)));
    }

    #[test]
    fn nested_union_is_finer_mesh() {
        let m = Arc::new(SpatialMesh::interval(0.0, 1.0, 2, FacetTag::Dirichlet, FacetTag::Neumann).unwrap());
        let r = Arc::new(refine(&m, &[0, 1]));
        let u = union_mesh(&m, &r).unwrap();
        assert_eq!(u.mesh.id(), r.id());
        let p = prolongation(&m, &r).unwrap();
        let y = crate::linalg::matvec(&p, &[0.0, 0.5, 1.0]);
        for (v, x) in y.iter().zip(r.vertices()) {
            assert!((v - x[0]).abs() < 1e-15);
        }
    }
}
