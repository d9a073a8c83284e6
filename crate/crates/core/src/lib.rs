//! Toolchain for reconfigurable analog computers with a switched
//! interconnect.
//!
//! The pipeline runs source text through [`dsl`] into a checked program,
//! expands it into a polynomial system and a summer-free circuit
//! ([`circuit`]), places and routes that circuit onto a [`machine`]
//! ([`route`]), and produces configuration images and sparse deltas
//! ([`bitstream`]). [`sim`] integrates both the routed machine and the
//! polynomial reference system. [`fabric`] models multi-stage switch
//! fabrics and their blocking behavior.

pub mod bitstream;
pub mod circuit;
pub mod dsl;
pub mod fabric;
pub mod machine;
pub mod route;
pub mod sim;
