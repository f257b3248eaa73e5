//! Secure analytics middle tier: additive 3-of-3 secret sharing over the
//! integers mod 2^64, share-wise accumulation on three logical servers,
//! and the minimum-granularity privacy gate.

pub mod gate;
pub mod noise;
pub mod server;

pub use gate::{gate_and_release, GateDecision, GateError, GateOutcome};
pub use server::{server_apply, ApplyOutcome, ServerError, ServerState, Upload};

use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Additive 3-of-3 shares of a 64-bit field element: s1 + s2 + s3 equals
/// the secret mod 2^64. The first two shares come straight from the
/// generator, so any two shares are independent of the secret.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareTriple {
    #[serde(with = "crate::value::wire_u64")]
    pub s1: u64,
    #[serde(with = "crate::value::wire_u64")]
    pub s2: u64,
    #[serde(with = "crate::value::wire_u64")]
    pub s3: u64,
}

impl ShareTriple {
    /// Completes a triple from two fixed shares (s3 = secret - s1 - s2).
    pub fn completing(secret: u64, s1: u64, s2: u64) -> ShareTriple {
        ShareTriple {
            s1,
            s2,
            s3: secret.wrapping_sub(s1).wrapping_sub(s2),
        }
    }

    pub fn share(&self, index: usize) -> u64 {
        match index {
            0 => self.s1,
            1 => self.s2,
            2 => self.s3,
            _ => panic!("share index out of range"),
        }
    }
}

/// Splits a secret into three additive shares.
pub fn split(secret: u64, rng: &mut impl RngCore) -> ShareTriple {
    ShareTriple::completing(secret, rng.next_u64(), rng.next_u64())
}

pub fn split_i64(secret: i64, rng: &mut impl RngCore) -> ShareTriple {
    split(secret as u64, rng)
}

/// Inverse of [`split`]: (s1 + s2 + s3) mod 2^64.
pub fn reconstruct(t: &ShareTriple) -> u64 {
    t.s1.wrapping_add(t.s2).wrapping_add(t.s3)
}

/// Combines one share from each server.
pub fn combine(s1: u64, s2: u64, s3: u64) -> u64 {
    s1.wrapping_add(s2).wrapping_add(s3)
}
