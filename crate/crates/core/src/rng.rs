//! Deterministic, splittable random streams.
//!
//! A stream is identified by `(seed, stream)`. ChaCha is counter based, so streams with
//! different ids never overlap and episode `i` of a run sees the same draws whether the
//! run is executed serially or across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

impl StreamId {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derives an independent child stream, e.g. a per-purpose substream of an episode.
    pub fn child(self, salt: u64) -> Self {
        // splitmix64 finalizer keeps children of neighbouring streams apart
        let mut z = self.stream ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            seed: self.seed.wrapping_add(salt.rotate_left(17)),
            stream: z,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Bernoulli draw with a scalar success probability.
pub fn bernoulli<S: Scalar, R: Rng + ?Sized>(rng: &mut R, p: &S) -> bool {
    let p = p.to_f64();
    if p >= 1.0 {
        // consume a draw regardless so stream positions do not depend on p
        let _: f64 = rng.gen();
        return true;
    }
    rng.gen::<f64>() < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_id_same_draws() {
        let a: Vec<u64> = StreamId::new(7, 3).rng().sample_iter(rand::distributions::Standard).take(8).collect();
        let b: Vec<u64> = StreamId::new(7, 3).rng().sample_iter(rand::distributions::Standard).take(8).collect();
        assert_eq!(a, b);
        let c: Vec<u64> = StreamId::new(7, 4).rng().sample_iter(rand::distributions::Standard).take(8).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn children_differ() {
        let base = StreamId::new(1, 0);
        assert_ne!(base.child(1), base.child(2));
        assert_ne!(base.child(1), StreamId::new(1, 1).child(1));
    }
}
