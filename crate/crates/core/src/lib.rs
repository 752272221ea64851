//! Simulation toolkit for Simon's problem behind a depth-d shuffling oracle.

pub mod exec;
pub mod gf2lin;
pub mod ledger;
pub mod o2hlab;
pub mod oracle;
pub mod qsim;
pub mod runner;
pub mod schemes;
pub mod simon;
pub mod solver;
