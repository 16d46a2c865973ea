//! Counter-based random streams.
//!
//! Every replicate draws from its own ChaCha8 stream, keyed by the master seed
//! and a purpose tag and selected by the replicate index. Results therefore do
//! not depend on thread count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct purposes never share randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Design,
    Noise,
    Moments,
    Pilot,
    Instance,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Design => 0x6465_7369_676e,
            Purpose::Noise => 0x006e_6f69_7365,
            Purpose::Moments => 0x6d6f_6d65_6e74,
            Purpose::Pilot => 0x0070_696c_6f74,
            Purpose::Instance => 0x696e_7374,
        }
    }
}

/// Seed lineage of one random stream: master seed, purpose and replicate index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master: u64,
    pub purpose: Purpose,
    pub replicate: u64,
}

impl SeedLineage {
    pub fn new(master: u64, purpose: Purpose, replicate: u64) -> Self {
        Self { master, purpose, replicate }
    }

    /// Same master seed and replicate, different purpose.
    pub fn with_purpose(self, purpose: Purpose) -> Self {
        Self { purpose, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.master ^ self.purpose.tag().rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.replicate);
        rng
    }
}

/// Independent master seed for a sub-experiment, e.g. a pilot run whose
/// replicates must not coincide with the main ones.
pub fn derived_seed(master: u64, purpose: Purpose, index: u64) -> u64 {
    let mut state = master ^ purpose.tag().rotate_left(29) ^ index.rotate_left(41);
    splitmix64(&mut state)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
