//! Numerical laboratory for the k-plane transform on R^n: the Euclidean,
//! elliptic and graph-parameterised realizations, Drury's multilinear
//! identity, rearrangement machinery, and probes of the extremizer family
//! `c (1 + |phi(x)|^2)^{-(k+1)/2}`.

pub mod drury;
pub mod error;
pub mod estimate;
pub mod extremal;
pub mod fields;
pub mod geometry;
pub mod transforms;

pub use drury::{CoefficientMatrix, IndicatorSet, RadiusFamily};
pub use error::{Error, Result};
pub use estimate::{Estimate, McConfig};
pub use fields::{AffineMap, Field, GridField};
pub use geometry::{AffinePlane, OrthonormalFrame, Simplex};
pub use transforms::{HemispherePoint, MatrixPlane};
