//! Simulation library for grant-free random access over a distributed
//! massive MIMO uplink.
//!
//! A square service area is covered by a grid of access points (APs), each
//! with a small antenna array. Idle user devices wake up at random, pick a
//! preamble from a small orthogonal pool and transmit it, so several devices
//! can collide on the same preamble. The library models that pipeline end to
//! end:
//!
//! * [`scene`] - AP layouts, traffic model, and reproducible random streams
//! * [`channel`] - path loss, shadowing, and small-scale fading
//! * [`airlink`] - preamble pool, matched filtering, receive energies, SINR
//!   and achievable rate of the uplink data phase
//! * [`multiplicity`] - estimating how many devices share a preamble, either
//!   with a trained neural classifier or an energy-threshold baseline
//! * [`clustering`] - picking the subset of APs that serves each collided
//!   device via K-means over AP positions
//! * [`experiments`] - full experiment drivers, file formats and reports
//!
//! All numeric code is generic over the scalar type through [`Scalar`];
//! simulations normally run in `f64` (see the aliases at the crate root).
//! Randomness is derived from a single master seed through labelled stream
//! paths, so any part of a run can be reproduced independently of how work
//! is scheduled across threads.

pub mod airlink;
pub mod channel;
pub mod clustering;
pub mod error;
pub mod experiments;
pub mod multiplicity;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Complex sample type used throughout the air interface.
pub type Cplx<T> = num_complex::Complex<T>;

// Concrete double-precision aliases for the main library types. The generic
// types accept f32 as well; f64 is what the experiment drivers use.
pub type Point64 = scene::Point2<f64>;
pub type Deployment64 = scene::Deployment<f64>;
pub type LinkGains64 = channel::LinkGains<f64>;
pub type SlotRealization64 = airlink::SlotRealization<f64>;
pub type PreamblePool64 = airlink::PreamblePool<f64>;
pub type MlpModel64 = multiplicity::MlpModel<f64>;
pub type TedModel64 = multiplicity::TedModel<f64>;
pub type ClusterSet64 = clustering::ClusterSet<f64>;
