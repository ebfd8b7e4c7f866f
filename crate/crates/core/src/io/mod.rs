//! Text formats for trajectories and training logs, and SVG rendering.

pub mod svg;
pub mod training_log;
pub mod trajectory;

pub use svg::{render_curves, render_scene};
pub use training_log::{format_log, format_row, parse_log, LOG_HEADER};
pub use trajectory::{Trajectory, TrajectoryRecord};
