//! HTTP job service and command-line front end over the cleaning engine.
//!
//! [`config`] reads job files, [`store`] keeps the state directory,
//! [`api`] serves `/v1`, [`remote`] holds the HTTP clients for external
//! models and [`cli`] wires it all into the `lakeclean` binary.

pub mod api;
pub mod cli;
pub mod config;
pub mod remote;
pub mod store;
