//! Drury's identity and the multilinear forms behind the symmetrization
//! argument.

mod admissibility;
mod burchard;
mod forms;
mod identity;
mod sets;

pub use crate::geometry::CoefficientMatrix;
pub use admissibility::{
    permissibility, redundancy_check, strict_admissibility, PermissibilityReport, RadiusFamily, RedundancyReport,
};
pub use burchard::{burchard_equality_probe, burchard_family, BurchardReport};
pub use forms::{
    bll_gap, indicator_form_coefficients, indicator_form_i, multilinear_form_tx, multilinear_form_tx_sets,
    tx_intervals_exact,
};
pub use identity::{drury_identity_check, DruryConfig, DruryReport};
pub use sets::{Ellipsoid, IndicatorSet, Mask};
