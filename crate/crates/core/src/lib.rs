//! Stationary DLA on the upper half-plane lattice `Z x Z_{>=0}`.

pub mod aggregate_io;
pub mod coupling;
pub mod engine;
pub mod experiments;
pub mod graphical;
pub mod harmonic;
pub mod lattice;
pub mod seeds;
pub mod stats;
