//! Counter-based random streams.
//!
//! Every stream is identified by a 64-bit key and produces the value at
//! position `counter` as a pure function of `(key, counter)`. Streams for
//! different cells never share state, so results do not depend on how cells
//! are partitioned across threads.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Domain separators for the different consumers of a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Cell = 0x01,
    Read = 0x02,
    Generate = 0x03,
    Synth = 0x04,
    Trace = 0x05,
}

/// Derive the key of stream `id` in `domain` from a user seed.
#[inline]
pub fn stream_key(seed: u64, domain: Domain, id: u64) -> u64 {
    let d = mix64((domain as u64).wrapping_mul(GOLDEN) ^ id);
    mix64(seed ^ d.rotate_left(17)) ^ d
}

/// Random generator positioned at `counter` of stream `key`.
///
/// Borrowing the counter lets a cell keep only 8 bytes of RNG state.
pub struct CounterRng<'a> {
    key: u64,
    counter: &'a mut u64,
}

impl<'a> CounterRng<'a> {
    pub fn new(key: u64, counter: &'a mut u64) -> Self {
        Self { key, counter }
    }
}

#[inline(always)]
fn draw(key: u64, counter: u64) -> u64 {
    mix64(key ^ mix64(counter.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)))
}

impl RngCore for CounterRng<'_> {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let v = draw(self.key, *self.counter);
        *self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

/// Owning variant for single-stream consumers (sequence generation, synthesis).
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64, domain: Domain, id: u64) -> Self {
        Self {
            key: stream_key(seed, domain, id),
            counter: 0,
        }
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let v = draw(self.key, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        CounterRng::new(self.key, &mut self.counter).fill_bytes(dst)
    }
}
