//! Simulation studies: curve tables, coverage experiments and the XOR
//! triplet scan.

pub mod coverage;
pub mod curves;
pub mod xor;

pub use coverage::{coverage_experiment, CoverageConfig, CoverageReport, MethodCoverage, Scenario};
pub use curves::{curve_emit, linear_grid, CurveRow};
pub use xor::{
    gen_xor, is_signal, q_statistic, signal_count, triplet_scan, xor_experiment, ScanConfig, TripletResult,
    TripletScan, XorConfig, XorData, XorReport,
};
