//! Counter-based random streams.
//!
//! Every stream is addressed by `(master seed, label, index)`. The stream key
//! is a hash of that triple and the n-th output is a SplitMix64 finalizer of
//! `key + n * GOLDEN`, so any sample can be regenerated without replaying the
//! ones before it. Work split across threads draws exactly the same numbers
//! as a sequential run.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, label: &str, index: u64) -> Self {
        let key = Self::combine(mix64(seed ^ 0xD134_2543_DE82_EF95), label, index);
        Stream { key, counter: 0 }
    }

    /// Child stream; does not advance `self`.
    pub fn derive(&self, label: &str, index: u64) -> Self {
        Stream {
            key: Self::combine(self.key, label, index),
            counter: 0,
        }
    }

    fn combine(parent: u64, label: &str, index: u64) -> u64 {
        let l = mix64(fnv1a64(label.as_bytes()));
        let i = mix64(index.wrapping_add(0x6A09_E667_F3BC_C909));
        mix64(parent ^ l.rotate_left(17) ^ i.wrapping_mul(GOLDEN))
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand::rand_core::impls::fill_bytes_via_next(self, dst)
    }
}
