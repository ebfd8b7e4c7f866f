//! Map-based crowd navigation: a 2D simulator with ORCA and social-force
//! pedestrians, egocentric map observations, a convolutional PPO policy and
//! an evaluation harness.

pub mod app;
pub mod env;
pub mod eval;
pub mod io;
pub mod net;
pub mod ppo;
pub mod error;
pub mod pedestrians;
pub mod perception;
pub mod world;

pub use error::ParseError;
