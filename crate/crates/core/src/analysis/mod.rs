//! Equilibrium location, fate classification and the constructive bounds
//! that certify simulated runs.

pub mod bounds;
pub mod certify;
pub mod relation;

pub use bounds::{
    align_lower, align_upper, contraction_iteration, monotone_iteration, permanence_bounds, BoundSequences,
    ContractionSequence, ContractionVerdict, PermanenceBox, Separator, UpperCase,
};
pub use certify::{certify_run, CertificationReport, CertificationStatus, Check, CheckResult};
pub use relation::{
    classify, classify_with, delta, find_equilibrium, Caveat, Classification, Fate, Limit, RelationClass, Sign,
    SignScan, CLASSIFY_TOL, SCAN_POINTS,
};
