//! Plain-text mesh files and legacy VTK output.
//!
//! Mesh format (whitespace separated, `#` starts a comment):
//!
//! ```text
//! dim 2
//! vertices 4
//! 0 0
//! ...
//! cells 2
//! 0 1 2 N I D
//! ...
//! ```
//!
//! Each cell line lists its vertex indices followed by one tag per facet
//! (`I`, `D` or `N`); facet `i` is opposite vertex `i`. In 1D a cell line has
//! two vertices and two tags.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::mesh::{FacetTag, SpatialMesh};
use crate::error::{Error, Result};

fn tag_char(t: FacetTag) -> char {
    match t {
        FacetTag::Interior => 'I',
        FacetTag::Dirichlet => 'D',
        FacetTag::Neumann => 'N',
    }
}

fn parse_tag(s: &str) -> Result<FacetTag> {
    match s {
        "I" => Ok(FacetTag::Interior),
        "D" => Ok(FacetTag::Dirichlet),
        "N" => Ok(FacetTag::Neumann),
        _ => Err(Error::Config(format!("unknown facet tag `{s}`"))),
    }
}

pub fn write_mesh(mesh: &SpatialMesh) -> String {
    let mut s = String::new();
    let nv = mesh.verts_per_cell();
    let _ = writeln!(s, "dim {}", mesh.dim());
    let _ = writeln!(s, "vertices {}", mesh.n_vertices());
    for x in mesh.vertices() {
        if mesh.dim() == 1 {
            let _ = writeln!(s, "{:.17e}", x[0]);
        } else {
            let _ = writeln!(s, "{:.17e} {:.17e}", x[0], x[1]);
        }
    }
    let _ = writeln!(s, "cells {}", mesh.n_cells());
    for c in mesh.cells() {
        let verts: Vec<String> = c.verts[..nv].iter().map(|v| v.to_string()).collect();
        let tags: Vec<String> = c.tags[..nv].iter().map(|t| tag_char(*t).to_string()).collect();
        let _ = writeln!(s, "{} {}", verts.join(" "), tags.join(" "));
    }
    s
}

pub fn read_mesh(text: &str) -> Result<SpatialMesh> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .peekable();
    let mut next = |what: &str| tokens.next().ok_or_else(|| Error::Config(format!("mesh file: missing {what}")));
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("mesh file: `{s}`: {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Config(format!("mesh file: `{s}`: {e}")));
    if next("dim")? != "dim" {
        return Err(Error::Config("mesh file: expected `dim`".into()));
    }
    let dim = int(next("dimension")?)?;
    if next("vertices")? != "vertices" {
        return Err(Error::Config("mesh file: expected `vertices`".into()));
    }
    let nverts = int(next("vertex count")?)?;
    let mut vertices = Vec::with_capacity(nverts);
    for _ in 0..nverts {
        let x = num(next("coordinate")?)?;
        let y = if dim == 2 { num(next("coordinate")?)? } else { 0.0 };
        vertices.push([x, y]);
    }
    if next("cells")? != "cells" {
        return Err(Error::Config("mesh file: expected `cells`".into()));
    }
    let ncells = int(next("cell count")?)?;
    let mut cells = Vec::with_capacity(ncells);
    for _ in 0..ncells {
        let mut verts = [0usize; 3];
        let mut tags = [FacetTag::Interior; 3];
        for v in verts.iter_mut().take(dim + 1) {
            *v = int(next("cell vertex")?)?;
            if *v >= nverts {
                return Err(Error::Config(format!("mesh file: vertex index {v} out of range")));
            }
        }
        for t in tags.iter_mut().take(dim + 1) {
            *t = parse_tag(next("facet tag")?)?;
        }
        cells.push((verts, tags));
    }
    SpatialMesh::from_parts(dim, vertices, cells)
}

pub fn load_mesh(path: &Path) -> Result<SpatialMesh> {
    read_mesh(&std::fs::read_to_string(path)?)
}

/// Point field for VTK output: name, components, values in full layout.
pub struct PointField<'a> {
    pub name: &'a str,
    pub ncomp: usize,
    pub values: &'a [f64],
}

/// Legacy ASCII VTK unstructured grid.
pub fn write_vtk(path: &Path, mesh: &SpatialMesh, fields: &[PointField]) -> Result<()> {
    let mut s = String::new();
    let nv = mesh.verts_per_cell();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nviscofem\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for x in mesh.vertices() {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", x[0], x[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.n_cells(), mesh.n_cells() * (nv + 1));
    for c in mesh.cells() {
        let verts: Vec<String> = c.verts[..nv].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{} {}", nv, verts.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_cells());
    let ty = if mesh.dim() == 1 { 3 } else { 5 };
    for _ in 0..mesh.n_cells() {
        let _ = writeln!(s, "{ty}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
    }
    for f in fields {
        if f.ncomp == 1 {
            let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
            for v in f.values {
                let _ = writeln!(s, "{v:.16e}");
            }
        } else {
            let _ = writeln!(s, "VECTORS {} double", f.name);
            for p in f.values.chunks(f.ncomp) {
                let _ = writeln!(s, "{:.16e} {:.16e} 0", p[0], p.get(1).copied().unwrap_or(0.0));
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = SpatialMesh::rectangle((0.0, 2.0), (0.0, 1.0), (2, 1), &|x| {
            if x[0] == 0.0 {
                FacetTag::Dirichlet
            } else {
                FacetTag::Neumann
            }
        })
        .unwrap();
        let r = read_mesh(&write_mesh(&m)).unwrap();
        assert_eq!(r.n_cells(), m.n_cells());
        assert_eq!(r.vertices(), m.vertices());
        assert_eq!(r.boundary_measure(FacetTag::Dirichlet), 1.0);
    }
}
