//! Temporal and spatial search structures used by the registration solver.

pub mod grid;
pub mod interval;
pub mod kdtree;

pub use grid::RayGrid;
pub use interval::{build_interval_index, temporal_neighbours, IntervalIndex, IntervalTree};
pub use kdtree::{build_ray_index, nearest_ray, RayIndex};
