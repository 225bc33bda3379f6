//! Projective geometry, finite metric spaces and Gaussian processes built
//! around the `sech` kernel: which point sets in projective Hilbert space
//! keep their pairwise distances under every spherical projection, and the
//! matching processes whose conditional law is a rescaling of the original.

pub mod classifier;
pub mod correlation;
pub mod geometry;
pub mod gp;
pub mod io;
pub mod metric;
pub mod tol;

pub use classifier::{classify, ClassificationReport, ComponentReport};
pub use correlation::CorrelationMatrix;
pub use geometry::{Configuration, ProjectivePoint, UnitVector};
pub use gp::ProcessSpec;
pub use metric::FiniteMetricSpace;
pub use tol::Tolerances;
