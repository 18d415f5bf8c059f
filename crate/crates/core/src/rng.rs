//! Deterministic random-number plumbing.
//!
//! Everything random in a run derives from one `u64` seed through ChaCha8,
//! a counter-based generator whose full state (key, stream, word position)
//! serializes to a fixed-width record. Perturbation signs come from a
//! dedicated stream that is captured in every checkpoint; each objective
//! evaluation gets its own stream derived from the evaluation ordinal, so
//! results do not depend on evaluation scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Generator identifier stored in serialized state.
pub const RNG_ALGO: &str = "chacha8/v1";

/// Stream carrying the perturbation sign draws.
pub const PERTURBATION_STREAM: u64 = 1;

/// Base stream for per-evaluation noise; evaluation ordinal is added.
pub const EVAL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum RngError {
    #[error("unsupported generator `{0}`, expected `{RNG_ALGO}`")]
    UnsupportedAlgo(String),
    #[error("malformed generator state: {0}")]
    Malformed(String),
}

/// Serializable generator state; `load` reproduces the generator bit for
/// bit, which is what makes checkpoint resume follow the identical
/// trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub algo: String,
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> RngState {
        RngState {
            algo: RNG_ALGO.to_string(),
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: format!("{:032x}", rng.get_word_pos()),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, RngError> {
        if self.algo != RNG_ALGO {
            return Err(RngError::UnsupportedAlgo(self.algo.clone()));
        }
        let seed_bytes =
            hex::decode(&self.seed).map_err(|e| RngError::Malformed(e.to_string()))?;
        let seed: [u8; 32] = seed_bytes
            .try_into()
            .map_err(|_| RngError::Malformed("seed must be 32 bytes".into()))?;
        let word_pos = u128::from_str_radix(&self.word_pos, 16)
            .map_err(|e| RngError::Malformed(e.to_string()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Generator for a given run seed on a given stream.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator dedicated to one objective evaluation, identified by the
/// zero-based evaluation ordinal of the run.
pub fn eval_rng(seed: u64, eval_ordinal: u64) -> ChaCha8Rng {
    rng_for(seed, EVAL_STREAM_BASE.wrapping_add(eval_ordinal))
}
