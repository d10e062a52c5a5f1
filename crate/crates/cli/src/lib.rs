//! Library surface of the batch front end, shared by the `vel` binary and
//! the integration/acceptance suites.

pub mod commands;
pub mod config;
pub mod output;
