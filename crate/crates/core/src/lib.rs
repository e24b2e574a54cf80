//! Framed slotted Aloha with cooperative base stations.
//!
//! Users and base stations are dropped uniformly on the unit square. A user is
//! heard by every station within radius `r`, and transmits replicas of its
//! packet in a random subset of the `tau` slots of a frame. The crate provides
//! the four peeling decoders (non-cooperative, spatial, temporal and
//! spatio-temporal), closed-form probability formulas and bounds, and-or tree
//! density evolution, degree distribution optimization, an SINR physical layer
//! and a Monte Carlo harness tying them together.

pub mod analysis;
pub mod decode;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod harness;
pub mod optimize;
pub mod phy;
pub mod rng;
pub mod traffic;

pub use analysis::AreaSamples;
pub use decode::{DecodeOutcome, DecoderKind};
pub use error::{Error, Result};
pub use geometry::{DecodingGraph, GraphKind, PlacementConfig, Point, SystemInstance};
pub use harness::{ExperimentSpec, MetricRow};
pub use phy::{ChannelRealization, PhyConfig};
pub use traffic::{DegreeDistribution, NamedDistribution};
