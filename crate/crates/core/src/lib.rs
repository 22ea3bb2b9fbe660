//! Pairwise error probability of a two-relay SWIPT amplify-and-forward link
//! with distributed Alamouti coding under Middleton Class-A noise.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod harness;
pub mod noise;
pub mod phy;
pub mod specfun;

pub use error::{Error, Result};
