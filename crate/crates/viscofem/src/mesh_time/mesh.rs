use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Boundary condition of a facet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FacetTag {
    Interior,
    Dirichlet,
    Neumann,
}

/// Position of a cell in the refinement forest: coarse root, depth and the
/// child choices along the way (bit `i` is the choice at depth `i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellKey {
    pub root: u32,
    pub depth: u8,
    pub path: u64,
}

impl CellKey {
    pub fn root(root: u32) -> Self {
        CellKey { root, depth: 0, path: 0 }
    }

    pub fn child(self, which: u64) -> Self {
        assert!(self.depth < 63, "refinement depth limit reached");
        CellKey { root: self.root, depth: self.depth + 1, path: self.path | (which << self.depth) }
    }

    pub fn ancestor(self, depth: u8) -> Self {
        debug_assert!(depth <= self.depth);
        let mask = if depth == 0 { 0 } else { u64::MAX >> (64 - depth as u32) };
        CellKey { root: self.root, depth, path: self.path & mask }
    }

    pub fn parent(self) -> Option<Self> {
        (self.depth > 0).then(|| self.ancestor(self.depth - 1))
    }

    pub fn is_ancestor_or_self_of(self, other: CellKey) -> bool {
        self.root == other.root && self.depth <= other.depth && other.ancestor(self.depth) == self
    }

    /// Depth-first ordering key.
    pub fn dfs_key(self) -> (u32, u64, u8) {
        (self.root, self.path.reverse_bits(), self.depth)
    }
}

/// A segment (1D) or triangle (2D). Facet `i` is opposite vertex `i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub key: CellKey,
    pub verts: [usize; 3],
    pub tags: [FacetTag; 3],
}

pub(crate) fn coord_key(x: [f64; 2]) -> [u64; 2] {
    // normalise signed zero so coordinates compare by value
    [(x[0] + 0.0).to_bits(), (x[1] + 0.0).to_bits()]
}

pub(crate) fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// A leaf set of a refinement forest. Immutable once built.
#[derive(Clone, Debug)]
pub struct SpatialMesh {
    id: u64,
    family: u64,
    dim: usize,
    vertices: Vec<[f64; 2]>,
    cells: Vec<Cell>,
    cell_lookup: HashMap<CellKey, usize>,
    vertex_lookup: HashMap<[u64; 2], usize>,
}

impl SpatialMesh {
    /// Assembles a mesh from leaf cells whose vertex indices refer to `coords`.
    /// Unused coordinates are dropped and vertices renumbered in cell order.
    pub(crate) fn assemble(family: u64, dim: usize, coords: &[[f64; 2]], mut cells: Vec<Cell>) -> Result<Self> {
        cells.sort_by_key(|c| c.key.dfs_key());
        let nv = dim + 1;
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut vertex_lookup = HashMap::new();
        for cell in cells.iter_mut() {
            for v in cell.verts.iter_mut().take(nv) {
                let x = coords[*v];
                let key = coord_key(x);
                let idx = *vertex_lookup.entry(key).or_insert_with(|| {
                    vertices.push(x);
                    vertices.len() - 1
                });
                remap.insert(*v, idx);
                *v = idx;
            }
        }
        let mut cell_lookup = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if cell_lookup.insert(c.key, i).is_some() {
                return Err(Error::MeshFamilyViolation(format!("duplicate cell {:?}", c.key)));
            }
        }
        let mesh = SpatialMesh { id: fresh_id(), family, dim, vertices, cells, cell_lookup, vertex_lookup };
        for c in 0..mesh.n_cells() {
            if !(mesh.measure(c) > 0.0) {
                return Err(Error::DegenerateCell(c));
            }
        }
        Ok(mesh)
    }

    /// Uniform partition of `[a, b]` into `n` segments.
    pub fn interval(a: f64, b: f64, n: usize, left: FacetTag, right: FacetTag) -> Result<Self> {
        if !(b > a) || n == 0 {
            return Err(Error::DegenerateCell(0));
        }
        let h = (b - a) / n as f64;
        let mut coords: Vec<[f64; 2]> = (0..=n).map(|i| [a + i as f64 * h, 0.0]).collect();
        coords[n] = [b, 0.0];
        let cells = (0..n)
            .map(|i| {
                // facet 0 sits at the right vertex, facet 1 at the left one
                let t_right = if i + 1 == n { right } else { FacetTag::Interior };
                let t_left = if i == 0 { left } else { FacetTag::Interior };
                Cell { key: CellKey::root(i as u32), verts: [i, i + 1, 0], tags: [t_right, t_left, FacetTag::Interior] }
            })
            .collect();
        Self::assemble(fresh_id(), 1, &coords, cells)
    }

    /// Structured triangulation of `[x0, x1] x [y0, y1]`, two triangles per
    /// rectangle. `tagger` receives the midpoint of each boundary facet.
    pub fn rectangle(
        (x0, x1): (f64, f64),
        (y0, y1): (f64, f64),
        (nx, ny): (usize, usize),
        tagger: &dyn Fn([f64; 2]) -> FacetTag,
    ) -> Result<Self> {
        if !(x1 > x0) || !(y1 > y0) || nx == 0 || ny == 0 {
            return Err(Error::DegenerateCell(0));
        }
        let hx = (x1 - x0) / nx as f64;
        let hy = (y1 - y0) / ny as f64;
        let idx = |i: usize, j: usize| j * (nx + 1) + i;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = if i == nx { x1 } else { x0 + i as f64 * hx };
                let y = if j == ny { y1 } else { y0 + j as f64 * hy };
                coords.push([x, y]);
            }
        }
        let mut tris = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                // right-angle vertex first so the hypotenuse is the refinement edge
                tris.push([b, c, a]);
                tris.push([d, a, c]);
            }
        }
        let mut cells = Vec::with_capacity(tris.len());
        for (r, t) in tris.iter().enumerate() {
            let mut tags = [FacetTag::Interior; 3];
            for (f, tag) in tags.iter_mut().enumerate() {
                let p = coords[t[(f + 1) % 3]];
                let q = coords[t[(f + 2) % 3]];
                let on_boundary = (p[0] == x0 && q[0] == x0)
                    || (p[0] == x1 && q[0] == x1)
                    || (p[1] == y0 && q[1] == y0)
                    || (p[1] == y1 && q[1] == y1);
                if on_boundary {
                    *tag = tagger(midpoint(p, q));
                    if *tag == FacetTag::Interior {
                        *tag = FacetTag::Neumann;
                    }
                }
            }
            cells.push(Cell { key: CellKey::root(r as u32), verts: *t, tags });
        }
        Self::assemble(fresh_id(), 2, &coords, cells)
    }

    /// Builds a coarse mesh from explicit data; each cell starts a new root.
    pub fn from_parts(dim: usize, vertices: Vec<[f64; 2]>, cells: Vec<([usize; 3], [FacetTag; 3])>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("unsupported dimension {dim}")));
        }
        let cells = cells
            .into_iter()
            .enumerate()
            .map(|(r, (verts, tags))| Cell { key: CellKey::root(r as u32), verts, tags })
            .collect();
        Self::assemble(fresh_id(), dim, &vertices, cells)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Identifier of the coarse mesh this forest grows from.
    pub fn family(&self) -> u64 {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn verts_per_cell(&self) -> usize {
        self.dim + 1
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, c: usize) -> &Cell {
        &self.cells[c]
    }

    pub fn find(&self, key: CellKey) -> Option<usize> {
        self.cell_lookup.get(&key).copied()
    }

    /// The cell of this mesh that equals or contains `key`.
    pub fn owner_of(&self, key: CellKey) -> Option<usize> {
        (0..=key.depth).rev().find_map(|d| self.find(key.ancestor(d)))
    }

    pub fn vertex_at(&self, x: [f64; 2]) -> Option<usize> {
        self.vertex_lookup.get(&coord_key(x)).copied()
    }

    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let v = self.cells[c].verts;
        let nv = self.verts_per_cell();
        let mut out = [[0.0; 2]; 3];
        for i in 0..nv {
            out[i] = self.vertices[v[i]];
        }
        out
    }

    /// Length (1D) or area (2D).
    pub fn measure(&self, c: usize) -> f64 {
        let x = self.cell_coords(c);
        if self.dim == 1 {
            (x[1][0] - x[0][0]).abs()
        } else {
            0.5 * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1])).abs()
        }
    }

    /// `h_K = diam(K)`.
    pub fn diameter(&self, c: usize) -> f64 {
        let x = self.cell_coords(c);
        let nv = self.verts_per_cell();
        let mut h: f64 = 0.0;
        for i in 0..nv {
            for j in i + 1..nv {
                h = h.max(dist(x[i], x[j]));
            }
        }
        h
    }

    /// Radius of the inscribed ball (half length in 1D).
    pub fn inradius(&self, c: usize) -> f64 {
        if self.dim == 1 {
            return 0.5 * self.measure(c);
        }
        let x = self.cell_coords(c);
        let perimeter = dist(x[0], x[1]) + dist(x[1], x[2]) + dist(x[2], x[0]);
        2.0 * self.measure(c) / perimeter
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.diameter(c)).fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.diameter(c)).fold(0.0, f64::max)
    }

    /// Vertex indices of facet `f` of cell `c`.
    pub fn facet_vertices(&self, c: usize, f: usize) -> Vec<usize> {
        let v = self.cells[c].verts;
        if self.dim == 1 {
            vec![v[1 - f]]
        } else {
            vec![v[(f + 1) % 3], v[(f + 2) % 3]]
        }
    }

    /// Measure of facet `f` of cell `c` (1 for points).
    pub fn facet_measure(&self, c: usize, f: usize) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            let fv = self.facet_vertices(c, f);
            dist(self.vertices[fv[0]], self.vertices[fv[1]])
        }
    }

    /// Outward unit normal of facet `f` of cell `c`.
    pub fn outward_normal(&self, c: usize, f: usize) -> [f64; 2] {
        let x = self.cell_coords(c);
        if self.dim == 1 {
            let s = (x[1 - f][0] - x[f][0]).signum();
            return [s, 0.0];
        }
        let p = x[(f + 1) % 3];
        let q = x[(f + 2) % 3];
        outward(p, q, x[f])
    }

    /// Gradients of the barycentric coordinates, one row per vertex.
    pub fn shape_gradients(&self, c: usize) -> [[f64; 2]; 3] {
        shape_gradients(self.dim, &self.cell_coords(c))
    }

    /// Barycentric coordinates of `x` in cell `c`.
    pub fn barycentric(&self, c: usize, x: [f64; 2]) -> [f64; 3] {
        barycentric(self.dim, &self.cell_coords(c), x)
    }

    /// Vertices touching a facet with the given tag.
    pub fn tagged_vertices(&self, tag: FacetTag) -> Vec<bool> {
        let mut out = vec![false; self.n_vertices()];
        for c in 0..self.n_cells() {
            for f in 0..self.verts_per_cell() {
                if self.cells[c].tags[f] == tag {
                    for v in self.facet_vertices(c, f) {
                        out[v] = true;
                    }
                }
            }
        }
        out
    }

    /// Total measure of facets carrying `tag`.
    pub fn boundary_measure(&self, tag: FacetTag) -> f64 {
        let mut m = 0.0;
        for c in 0..self.n_cells() {
            for f in 0..self.verts_per_cell() {
                if self.cells[c].tags[f] == tag {
                    m += self.facet_measure(c, f);
                }
            }
        }
        m
    }

    pub fn cell_midpoint(&self, c: usize) -> [f64; 2] {
        let x = self.cell_coords(c);
        let nv = self.verts_per_cell() as f64;
        let mut m = [0.0; 2];
        for p in x.iter().take(self.verts_per_cell()) {
            m[0] += p[0] / nv;
            m[1] += p[1] / nv;
        }
        m
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn outward(p: [f64; 2], q: [f64; 2], opposite: [f64; 2]) -> [f64; 2] {
    let t = [q[0] - p[0], q[1] - p[1]];
    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
    let mut n = [t[1] / len, -t[0] / len];
    let to_opp = [opposite[0] - p[0], opposite[1] - p[1]];
    if n[0] * to_opp[0] + n[1] * to_opp[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

pub(crate) fn shape_gradients(dim: usize, x: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    if dim == 1 {
        let h = x[1][0] - x[0][0];
        return [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]];
    }
    let det = (x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        g[i] = [(x[j][1] - x[k][1]) / det, (x[k][0] - x[j][0]) / det];
    }
    g
}

pub(crate) fn barycentric(dim: usize, x: &[[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let g = shape_gradients(dim, x);
    let nv = dim + 1;
    let mut out = [0.0; 3];
    for i in 0..nv {
        // λ_i(p) = λ_i(x_j) + ∇λ_i·(p - x_j) for a vertex j ≠ i
        let j = (i + 1) % nv;
        out[i] = g[i][0] * (p[0] - x[j][0]) + g[i][1] * (p[1] - x[j][1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_ancestry() {
        let k = CellKey::root(3).child(1).child(0).child(1);
        assert_eq!(k.ancestor(1), CellKey::root(3).child(1));
        assert!(CellKey::root(3).is_ancestor_or_self_of(k));
        assert!(!CellKey::root(2).is_ancestor_or_self_of(k));
        assert_eq!(k.parent().unwrap(), CellKey::root(3).child(1).child(0));
    }

    #[test]
    fn rectangle_geometry() {
        let m = SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (2, 2), &|_| FacetTag::Dirichlet).unwrap();
        assert_eq!(m.n_cells(), 8);
        let area: f64 = (0..m.n_cells()).map(|c| m.measure(c)).sum();
        assert!((area - 1.0).abs() < 1e-14);
        assert!((m.boundary_measure(FacetTag::Dirichlet) - 4.0).abs() < 1e-14);
        let b = m.barycentric(0, m.cell_midpoint(0));
        for v in b {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn interval_normals() {
        let m = SpatialMesh::interval(0.0, 1.0, 2, FacetTag::Dirichlet, FacetTag::Neumann).unwrap();
        assert_eq!(m.outward_normal(1, 0), [1.0, 0.0]);
        assert_eq!(m.outward_normal(0, 1), [-1.0, 0.0]);
        assert_eq!(m.cell(1).tags[0], FacetTag::Neumann);
        assert_eq!(m.cell(0).tags[1], FacetTag::Dirichlet);
    }
}
