//! Simulation and analysis of a two-photon (Franson-type) interferometer in
//! which the interfering phase is set geometrically, by rotating waveplates,
//! rather than by moving mirrors.
//!
//! * [`polarization`]: Jones propagation, Poincaré sphere, solid angles.
//! * [`twophoton`]: path bookkeeping, correlation envelopes, coincidence rates.
//! * [`montecarlo`]: seeded shot-noise simulation of fringe scans.
//! * [`analysis`]: fringe fits, CHSH and the pooled Bell report.
//! * [`cli`]: the `geophase` command-line tool.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod montecarlo;
pub mod polarization;
pub mod twophoton;
