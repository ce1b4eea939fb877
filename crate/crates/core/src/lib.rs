//! Deterministic identification (DI) codes for the discrete-time Binomial
//! channel.
//!
//! The crate builds sphere-packing codebooks in the cube of admissible release
//! rates, simulates the Binomial molecule-counting channel, runs the
//! threshold decoder, and evaluates the closed-form error and rate bounds that
//! accompany the construction, together with numerical checks of the
//! converse-side inequalities.

pub mod analysis;
pub mod bounds;
pub mod channel;
pub mod codec;
pub mod converse;
pub mod error;
pub mod experiment;
pub mod packing;
pub mod rng;

pub use channel::{ChannelParams, ChannelSampler, ObservationVector, ReleaseVector};
pub use codec::{DecoderConfig, IdentificationOutcome, MetricMode};
pub use error::{Error, Result};
pub use packing::{Codebook, PackingConfig};
pub use rng::SeedStream;
