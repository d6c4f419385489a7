//! Turbo equalization of coded transmission over known ISI channels.
//!
//! The receiver exchanges messages between a Gaussian equalizer running on
//! the channel-state chain and a BCJR demodulator-decoder. Four variants are
//! provided, differing only in how messages cross that boundary:
//!
//! | variant     | decoder → equalizer | equalizer → decoder |
//! |-------------|---------------------|---------------------|
//! | `BP-GA`     | direct moments      | Gaussian restriction |
//! | `BP-EP`     | EP rule             | Gaussian restriction |
//! | `BP-PGA`    | direct moments      | partial Gaussian approximation |
//! | `BP-EP-PGA` | EP rule             | partial Gaussian approximation |

pub mod channel;
pub mod decoder;
pub mod equalizer;
pub mod error;
pub mod exchange;
pub mod message;
pub mod rng;
pub mod sim;
pub mod turbo;
pub mod tx;

pub use error::{Error, Result};
