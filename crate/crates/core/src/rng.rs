//! Seeded random streams with cheap independent substreams.
//!
//! All randomized code in this crate draws from a counter-based generator
//! (ChaCha8) keyed by a single master seed. Independent substreams are
//! obtained through the generator's 64-bit stream id, so per-user streams are
//! identical no matter how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream handed to sampling code. Callers own their stream.
pub type RandomStream = ChaCha8Rng;

/// Stream keyed by the master seed alone.
pub fn master(seed: u64) -> RandomStream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the master seed's generator.
pub fn substream(seed: u64, stream: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Environment substream for one simulated user.
pub fn user_env_stream(seed: u64, user: u64) -> RandomStream {
    substream(seed, 2 * user)
}

/// Policy substream for one simulated user (Thompson draws and the like),
/// kept separate so randomized policies do not perturb the environment draws
/// shared across policy comparisons.
pub fn user_policy_stream(seed: u64, user: u64) -> RandomStream {
    substream(seed, 2 * user + 1)
}
