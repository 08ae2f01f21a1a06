//! Time partitions, hierarchical simplicial meshes, union meshes, constrained
//! P1 spaces, overlays and mesh-quality measures.

pub mod io;
pub mod mesh;
pub mod overlay;
pub mod quality;
pub mod refine;
pub mod space;
pub mod time;
pub mod union;

pub use mesh::{Cell, CellKey, FacetTag, SpatialMesh};
pub use overlay::{Overlay, SubFacet};
pub use quality::{quality, MeshQuality};
pub use refine::{refine, refine_uniform, refine_with, Closure};
pub use space::FeSpace;
pub use time::TimePartition;
pub use union::{owner_map, prolongation, union_mesh, UnionMesh};
