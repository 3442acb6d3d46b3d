//! Counter-based random streams built on Philox4x32-10.
//!
//! Every random quantity in the crate is addressed by a tuple
//! `(seed, domain, replicate, cluster, individual)`. The 64-bit seed is the
//! Philox key; the remaining coordinates fill the 128-bit counter:
//!
//! | counter word | content                                   |
//! |--------------|-------------------------------------------|
//! | 0            | block index inside the stream             |
//! | 1            | `domain << 24 \| individual` (individual < 2^24) |
//! | 2            | cluster index                             |
//! | 3            | replicate index                           |
//!
//! Streams are therefore independent of the order in which they are
//! consumed, so serial and parallel runs draw identical numbers.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const ROUNDS: usize = 10;

/// Philox4x32 with 10 rounds (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox4x32 {
    key: [u32; 2],
}

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let prod = u64::from(a) * u64::from(b);
    ((prod >> 32) as u32, prod as u32)
}

impl Philox4x32 {
    pub fn new(seed: u64) -> Self {
        Self { key: [seed as u32, (seed >> 32) as u32] }
    }

    pub fn from_key(key: [u32; 2]) -> Self {
        Self { key }
    }

    /// Encrypt one 128-bit counter block.
    pub fn block(&self, counter: [u32; 4]) -> [u32; 4] {
        let mut ctr = counter;
        let mut key = self.key;
        for round in 0..ROUNDS {
            if round > 0 {
                key[0] = key[0].wrapping_add(PHILOX_W0);
                key[1] = key[1].wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
            ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
        }
        ctr
    }
}

/// Stream domains keep unrelated consumers from sharing numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    Dataset = 1,
    Oracle = 2,
    Bootstrap = 3,
    CrossFit = 4,
}

const INDIVIDUAL_LIMIT: u32 = 1 << 24;

/// A sequential reader over one counter-addressed stream.
#[derive(Debug, Clone)]
pub struct Stream {
    generator: Philox4x32,
    counter: [u32; 4],
    buffer: [u32; 4],
    used: usize,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, replicate: u32, cluster: u32, individual: u32) -> Self {
        assert!(individual < INDIVIDUAL_LIMIT, "individual index out of range");
        Self {
            generator: Philox4x32::new(seed),
            counter: [0, ((domain as u32) << 24) | individual, cluster, replicate],
            buffer: [0; 4],
            used: 4,
            spare_normal: None,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buffer = self.generator.block(self.counter);
            self.counter[0] = self.counter[0].wrapping_add(1);
            self.used = 0;
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = u64::from(self.next_u32());
        let lo = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the Box-Muller transform.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)` by Lemire's multiply-and-reject method.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let prod = u128::from(self.next_u64()) * u128::from(n);
            if (prod as u64) >= threshold {
                return (prod >> 64) as u64;
            }
        }
    }

    /// Index drawn from a probability vector that sums to one.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut cumulative = 0.0;
        for (k, p) in probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return k;
            }
        }
        probs.len() - 1
    }
}
