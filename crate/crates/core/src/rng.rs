//! Deterministic counter-based random number generation.
//!
//! Every stochastic piece of the lab draws from this generator so that runs
//! are bit-reproducible across platforms and independent of thread count.
//! The core is a SplitMix64 counter stream; Gaussians come from the polar
//! Box-Muller transform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG: a SplitMix64 counter stream plus a cached Gaussian spare.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed, spare: None }
    }

    /// Fold a master seed and a list of coordinates into one derived seed.
    /// Grid cells use this so their randomness depends only on the cell's
    /// identity, never on scheduling or worker count.
    pub fn derive(master: u64, parts: &[u64]) -> u64 {
        let mut s = mix64(master ^ GOLDEN);
        for (i, &p) in parts.iter().enumerate() {
            s = mix64(s ^ p.wrapping_mul(GOLDEN).wrapping_add(i as u64 + 1));
        }
        s
    }

    /// Derive an independent substream from a master seed and a stream id.
    /// Used so grid cells and per-example workers get decorrelated streams
    /// that do not depend on scheduling.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let s = mix64(seed ^ mix64(stream.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)));
        Rng::new(s)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Rejection to remove modulo bias.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Standard normal via polar Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    /// A vector of i.i.d. standard normals.
    pub fn normal_vec(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.normal()).collect()
    }

    /// Uniform point on the unit sphere in `d` dimensions.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let v = self.normal_vec(d);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-12 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// First `k` entries of a seeded Fisher-Yates shuffle of 0..n.
    pub fn choose_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
