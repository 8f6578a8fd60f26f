//! Command-line front end for the drillshare simulator: batch runs, mode comparison,
//! metric recomputation, trace replay and the live telemetry server.

pub mod commands;
pub mod live;
pub mod replay;
