//! Compiles matrix-encoded underground garage plans into 3D scene graphs and
//! measures how much of a target vehicle a forward camera can see.

pub mod classify;
pub mod geom;
pub mod grid;
pub mod scenario;
pub mod scene;
pub mod visibility;
