//! Named random sub-streams derived from a single master seed.
//!
//! Every consumer of randomness asks for a stream by label plus a short list
//! of integer indices. The derived 64-bit seed is
//!
//! ```text
//! h = splitmix64(master)
//! for byte in label: h = splitmix64(h ^ byte)
//! for idx in indices: h = splitmix64(h ^ idx)
//! ```
//!
//! and the stream itself is a ChaCha8 generator seeded with `h`. Labels in use:
//! `"data"` (synthetic generation), `"split"` (train/test split), `"partition"`,
//! `"init"`, `"train"` with `[orbit, slot, version]`, and `"hap-choice"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

pub fn stream(master: u64, label: &str, indices: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}

pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
