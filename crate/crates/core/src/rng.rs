//! Keyed random substreams.
//!
//! Every random object in the crate is drawn from a ChaCha8 stream selected
//! by `(seed, purpose, index)`. ChaCha is a counter-based generator: the
//! stream id picks an independent 2^64-block keystream, so stream `i` never
//! depends on how many other streams were consumed. This is what makes mode
//! paths stable when the mode count grows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Distinct purposes never share keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Grid samples of the per-mode fBm.
    ModePath,
    /// Conditional refinement of a mode path inside a short window.
    Refinement,
    /// Exact Ornstein-Uhlenbeck innovations.
    ExactOu,
    /// Random test fields and calibration corpora.
    Fields,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::ModePath => 0x6d6f_6465_7061_7468,
            Purpose::Refinement => 0x7265_6669_6e65_6d74,
            Purpose::ExactOu => 0x6578_6163_745f_6f75,
            Purpose::Fields => 0x6669_656c_6473_5f5f,
        }
    }
}

/// splitmix64 finaliser, used to derive keys from (seed, purpose).
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Returns the generator for substream `index` of `purpose` under `seed`.
pub fn substream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let key = if purpose == Purpose::ModePath {
        seed
    } else {
        mix(seed ^ purpose.tag())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
