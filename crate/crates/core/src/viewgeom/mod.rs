//! Cameras, two-view triangulation, silhouette sampling and Procrustes alignment.

mod camera;
mod procrustes;
mod sampling;
mod triangulate;

pub use camera::{project, Camera, Intrinsics, RigPlacement};
pub use procrustes::{procrustes_align, ProcrustesFit, SimilarityTransform};
pub use sampling::{sample_candidate_points, Aabb, Mask};
pub use triangulate::{triangulate_two_view, Triangulation};
