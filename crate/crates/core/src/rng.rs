//! Named, counter-keyed random streams.
//!
//! Every draw in a run comes from a generator keyed by
//! `(seed, stream name, round, id)`. Adding a stream or reordering the work
//! inside a round never shifts the values another stream produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: &str = "init";
pub const STREAM_DRIFT: &str = "drift";
pub const STREAM_ATTACK: &str = "attack";
pub const STREAM_SCHEDULE: &str = "schedule";

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Generator for one `(seed, stream, round, id)` cell.
pub fn stream(seed: u64, name: &str, round: u64, id: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ fnv1a(name));
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ id.rotate_left(32));
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        h = splitmix64(h.wrapping_add(i as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
