//! Random streams and low-discrepancy sequences.
//!
//! Every consumer asks for a stream by `(seed, purpose)`; streams for
//! different purposes are independent ChaCha streams, so adding a new
//! consumer never shifts the samples another one sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(purpose));
    rng
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// Halton sequence in `[0,1)^dim` with a Cranley-Patterson rotation.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, rng: &mut impl Rng) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension {dim} unsupported");
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        // Skip the first points, which are badly correlated in high bases.
        Self { dim, shift, index: 20 }
    }

    pub fn unshifted(dim: usize) -> Self {
        assert!(dim <= PRIMES.len());
        Self { dim, shift: vec![0.0; dim], index: 20 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        (0..self.dim)
            .map(|d| {
                let v = radical_inverse(self.index, PRIMES[d]) + self.shift[d];
                v - v.floor()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = stream(7, "x").gen();
        let b: f64 = stream(7, "x").gen();
        let c: f64 = stream(7, "y").gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn halton_mean_is_half() {
        let mut h = Halton::new(7, &mut stream(1, "halton"));
        let n = 20_000;
        let mut sums = [0.0; 7];
        for _ in 0..n {
            for (s, v) in sums.iter_mut().zip(h.next_point()) {
                assert!((0.0..1.0).contains(&v));
                *s += v;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 0.5).abs() < 2e-3);
        }
    }
}
