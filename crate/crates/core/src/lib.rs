//! Training and evaluation toolkit for networks with locally isometric
//! layers: classification under a combined cross-entropy + within-class
//! isometry loss, stacked hierarchical blocks with gradient isolation, and
//! an L-infinity adversarial attack harness.

pub mod attacks;
pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{Matrix, Rng};
