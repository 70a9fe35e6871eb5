//! Synthetic control estimation toolkit.
//!
//! The pipeline runs in layers: [`panel`] ingests and validates long-format
//! panel data, [`solver`] produces simplex-constrained donor weights,
//! [`estimator`] builds counterfactual fits and gap diagnostics,
//! [`inference`] runs in-space permutation tests, [`robustness`] covers
//! in-time placebos and leave-one-out refits, [`fixtures`] generates seeded
//! synthetic panels for testing, and [`report`]/[`svg`]/[`cli`] emit
//! byte-deterministic artifacts.

pub mod cli;
pub mod estimator;
pub mod fixtures;
pub mod inference;
pub mod panel;
pub mod report;
pub mod robustness;
pub mod solver;
pub mod svg;
