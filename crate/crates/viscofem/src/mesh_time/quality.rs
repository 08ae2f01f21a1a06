use super::mesh::SpatialMesh;

/// Shape and grading measures of a mesh family.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshQuality {
    /// `max h_K / ρ_K` (1 in 1D by convention).
    pub c0: f64,
    /// `δ_T` per mesh.
    pub delta_t: Vec<f64>,
    /// `max δ_T` over the family.
    pub delta_f: f64,
}

/// `max_K max_{K' ∈ S_K} |1 - h_{K'}^2 / h_K^2|`, with `S_K` the cells
/// sharing at least one vertex with `K`.
pub fn delta(mesh: &SpatialMesh) -> f64 {
    let nv = mesh.verts_per_cell();
    let mut by_vertex: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_vertices()];
    for (c, cell) in mesh.cells().iter().enumerate() {
        for &v in cell.verts.iter().take(nv) {
            by_vertex[v].push(c);
        }
    }
    let h: Vec<f64> = (0..mesh.n_cells()).map(|c| mesh.diameter(c)).collect();
    let mut out: f64 = 0.0;
    for (c, cell) in mesh.cells().iter().enumerate() {
        for &v in cell.verts.iter().take(nv) {
            for &d in &by_vertex[v] {
                out = out.max((1.0 - h[d] * h[d] / (h[c] * h[c])).abs());
            }
        }
    }
    out
}

pub fn shape_constant(mesh: &SpatialMesh) -> f64 {
    if mesh.dim() == 1 {
        return 1.0;
    }
    (0..mesh.n_cells()).map(|c| mesh.diameter(c) / mesh.inradius(c)).fold(0.0, f64::max)
}

pub fn quality(meshes: &[&SpatialMesh]) -> MeshQuality {
    let delta_t: Vec<f64> = meshes.iter().map(|m| delta(m)).collect();
    MeshQuality {
        c0: meshes.iter().map(|m| shape_constant(m)).fold(0.0, f64::max),
        delta_f: delta_t.iter().copied().fold(0.0, f64::max),
        delta_t,
    }
}
