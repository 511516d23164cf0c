//! Partial-identification bounds for means and treatment effects when outcomes are
//! missing not at random, optionally tightened by an always-observed prediction.

pub mod baselines;
pub mod bounds;
pub mod causal;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod expansion;
pub mod io;
pub mod lp;
pub mod shadow;
pub mod simlab;
pub mod tables;

pub use bounds::{base_bounds, base_bounds_lp, base_bounds_weighted, stratified_bounds, Interval, Method};
pub use error::{Error, Result};
pub use tables::{estimate_tables, PopulationTables, StratumTable, TableSource, UnitRecord};
