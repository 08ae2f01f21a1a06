//! Bisection in 1D and newest-vertex bisection in 2D.

use std::collections::{HashMap, HashSet};

use super::mesh::{coord_key, midpoint, Cell, FacetTag, SpatialMesh};

/// How much non-conformity the closure tolerates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Closure {
    /// No hanging nodes.
    #[default]
    Conforming,
    /// At most one hanging node per edge.
    OneHanging,
}

struct Pool {
    coords: Vec<[f64; 2]>,
    lookup: HashMap<[u64; 2], usize>,
}

impl Pool {
    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        let x = midpoint(self.coords[a], self.coords[b]);
        let key = coord_key(x);
        if let Some(&i) = self.lookup.get(&key) {
            return i;
        }
        self.coords.push(x);
        self.lookup.insert(key, self.coords.len() - 1);
        self.coords.len() - 1
    }

    fn existing_midpoint(&self, a: usize, b: usize) -> Option<usize> {
        self.lookup.get(&coord_key(midpoint(self.coords[a], self.coords[b]))).copied()
    }
}

fn bisect(dim: usize, cell: &Cell, pool: &mut Pool) -> [Cell; 2] {
    use FacetTag::Interior as I;
    let [v0, v1, v2] = cell.verts;
    let [p0, p1, p2] = cell.tags;
    if dim == 1 {
        let m = pool.midpoint(v0, v1);
        [
            Cell { key: cell.key.child(0), verts: [v0, m, 0], tags: [I, p1, I] },
            Cell { key: cell.key.child(1), verts: [m, v1, 0], tags: [p0, I, I] },
        ]
    } else {
        // refinement edge v1 v2; the new vertex becomes the newest vertex
        let m = pool.midpoint(v1, v2);
        [
            Cell { key: cell.key.child(0), verts: [m, v0, v1], tags: [p2, p0, I] },
            Cell { key: cell.key.child(1), verts: [m, v2, v0], tags: [p1, I, p0] },
        ]
    }
}

fn violations(cells: &[Cell], pool: &Pool, closure: Closure) -> HashSet<usize> {
    let mut used = vec![false; pool.coords.len()];
    for c in cells {
        for &v in &c.verts {
            used[v] = true;
        }
    }
    let is_used = |m: Option<usize>| m.is_some_and(|m| used[m]);
    let mut out = HashSet::new();
    for (i, c) in cells.iter().enumerate() {
        for e in 0..3 {
            let (p, q) = (c.verts[(e + 1) % 3], c.verts[(e + 2) % 3]);
            let Some(m) = pool.existing_midpoint(p, q).filter(|&m| used[m]) else { continue };
            let bad = match closure {
                Closure::Conforming => true,
                Closure::OneHanging => {
                    is_used(pool.existing_midpoint(p, m)) || is_used(pool.existing_midpoint(m, q))
                }
            };
            if bad {
                out.insert(i);
                break;
            }
        }
    }
    out
}

fn split(dim: usize, cells: Vec<Cell>, marked: &HashSet<usize>, pool: &mut Pool) -> (Vec<Cell>, Vec<usize>) {
    let mut out = Vec::with_capacity(cells.len() + marked.len());
    let mut children = Vec::new();
    for (i, c) in cells.into_iter().enumerate() {
        if marked.contains(&i) {
            for child in bisect(dim, &c, pool) {
                children.push(out.len());
                out.push(child);
            }
        } else {
            out.push(c);
        }
    }
    (out, children)
}

fn close(dim: usize, mut cells: Vec<Cell>, pool: &mut Pool, closure: Closure) -> Vec<Cell> {
    if dim == 1 {
        return cells;
    }
    loop {
        let bad = violations(&cells, pool, closure);
        if bad.is_empty() {
            return cells;
        }
        cells = split(dim, cells, &bad, pool).0;
    }
}

/// Refines the marked cells so that their diameter halves (one bisection in
/// 1D, two in 2D), followed by the closure.
pub fn refine_with(mesh: &SpatialMesh, marked: &[usize], closure: Closure) -> SpatialMesh {
    if marked.is_empty() {
        return mesh.clone();
    }
    let dim = mesh.dim();
    let mut pool = Pool {
        coords: mesh.vertices().to_vec(),
        lookup: mesh.vertices().iter().enumerate().map(|(i, x)| (coord_key(*x), i)).collect(),
    };
    let marked: HashSet<usize> = marked.iter().copied().filter(|&c| c < mesh.n_cells()).collect();
    let (mut cells, children) = split(dim, mesh.cells().to_vec(), &marked, &mut pool);
    if dim == 2 {
        // second bisection of the new children, tracked through the closure by key
        let keys: HashSet<_> = children.iter().map(|&i| cells[i].key).collect();
        cells = close(dim, cells, &mut pool, closure);
        let again: HashSet<usize> =
            cells.iter().enumerate().filter(|(_, c)| keys.contains(&c.key)).map(|(i, _)| i).collect();
        cells = split(dim, cells, &again, &mut pool).0;
    }
    let cells = close(dim, cells, &mut pool, closure);
    SpatialMesh::assemble(mesh.family(), dim, &pool.coords, cells).expect("bisection preserves validity")
}

/// Conforming refinement of the marked cells.
pub fn refine(mesh: &SpatialMesh, marked: &[usize]) -> SpatialMesh {
    refine_with(mesh, marked, Closure::Conforming)
}

/// `levels` rounds of refining every cell.
pub fn refine_uniform(mesh: &SpatialMesh, levels: u32) -> SpatialMesh {
    let mut m = mesh.clone();
    for _ in 0..levels {
        let all: Vec<usize> = (0..m.n_cells()).collect();
        m = refine(&m, &all);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_1d_halves() {
        let m = SpatialMesh::interval(0.0, 1.0, 4, FacetTag::Dirichlet, FacetTag::Neumann).unwrap();
        let r = refine_uniform(&m, 1);
        assert_eq!(r.n_cells(), 8);
        assert!((r.h_max() - 0.125).abs() < 1e-15);
        assert_eq!(r.cell(7).tags[0], FacetTag::Neumann);
        assert_eq!(r.cell(0).tags[1], FacetTag::Dirichlet);
        assert_eq!(r.family(), m.family());
    }

    #[test]
    fn uniform_2d_halves_and_conforms() {
        let m = SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (2, 2), &|_| FacetTag::Dirichlet).unwrap();
        let r = refine_uniform(&m, 1);
        assert_eq!(r.n_cells(), 32);
        assert!((r.h_max() - 0.5 * m.h_max()).abs() < 1e-14);
        assert!((r.boundary_measure(FacetTag::Dirichlet) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn local_refinement_closes() {
        let m = SpatialMesh::rectangle((0.0, 1.0), (0.0, 1.0), (4, 4), &|_| FacetTag::Dirichlet).unwrap();
        let r = refine(&m, &[5]);
        assert!(r.n_cells() > m.n_cells());
        let area: f64 = (0..r.n_cells()).map(|c| r.measure(c)).sum();
        assert!((area - 1.0).abs() < 1e-13);
    }
}
