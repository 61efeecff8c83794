//! Exact restoration of broken demands in flex-grid optical networks.
//!
//! The pipeline is: load an instance ([`io`]), trim useless
//! (demand, link, color) triples ([`trim`]), build a flow MILP ([`milp`]),
//! hand it to an external solver ([`solver`]) and turn the assignment back
//! into verified paths ([`extract`]). [`oracle`] solves tiny instances by
//! exhaustive enumeration and [`testgen`] produces realistic congested
//! scenarios by shared path protection.

pub mod bench;
pub mod extract;
pub mod fixtures;
pub mod io;
pub mod lp;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod solver;
pub mod testgen;
pub mod trim;
