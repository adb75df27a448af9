//! Counter-based random streams.
//!
//! Every replica draws from its own ChaCha8 stream keyed by
//! `(master seed, purpose)` for the key and the replica index for the
//! stream id. Replicas are therefore independent of each other and of the
//! order in which workers pick them up, and re-running with the same seed
//! reproduces every path bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Separate purposes keep, e.g., the exponential
/// clock draw identical across runs that only change `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Path,
    Clock,
    Refine,
    Level,
    PostMax,
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Path => 0x5041_5448,
            Purpose::Clock => 0x434c_4f43,
            Purpose::Refine => 0x5245_4649,
            Purpose::Level => 0x4c45_5645,
            Purpose::PostMax => 0x504f_5354,
            Purpose::Auxiliary => 0x4155_5849,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The random stream for `(seed, replica, purpose)`.
pub fn stream(seed: u64, replica: u64, purpose: Purpose) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(purpose.tag()));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(replica);
    rng
}
