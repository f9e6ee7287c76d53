//! Deterministic, counter-based Gaussian sample stream.
//!
//! The whole point of storing a seed instead of a projection matrix is that
//! the matrix can be regenerated bit-exactly on demand. Sample `i` of a
//! stream is a pure function of `(seed, counter + 2i)`: a keyed SplitMix-style
//! mix of the counter produces uniforms, and Box-Muller turns consecutive
//! pairs into one standard normal each. No state beyond the explicit counter.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a full-avalanche 64-bit bijection.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64 uniform bits as a pure function of `(seed, counter)`; the keyed
/// generator behind the Gaussian stream, also usable directly for shuffles
/// and integer draws.
#[inline]
pub fn uniform_bits(seed: u64, counter: u64) -> u64 {
    mix64(mix64(seed ^ GAMMA).wrapping_add(counter.wrapping_mul(GAMMA)))
}

/// Uniform in (0, 1]; the open lower end keeps `ln` finite in Box-Muller.
#[inline]
fn uniform_open01(seed: u64, counter: u64) -> f64 {
    ((uniform_bits(seed, counter) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives an independent stream seed from a root seed plus identifying
/// words (e.g. parameter index and resample epoch), so every projection
/// matrix in a run is reproducible from the run seed alone.
pub fn derive_seed(root: u64, stream: u64, epoch: u64) -> u64 {
    let h = mix64(root ^ GAMMA);
    let h = mix64(h ^ mix64(stream.wrapping_add(0x517c_c1b7_2722_0a95)));
    mix64(h ^ mix64(epoch.wrapping_add(0x2545_f491_4f6c_dd1d)))
}

/// A seeded standard-normal stream. Two streams with equal `(seed, counter)`
/// produce identical samples on any platform; each sample advances the
/// counter by exactly 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussStream {
    seed: u64,
    counter: u64,
}

impl GaussStream {
    pub fn new(seed: u64) -> Self {
        GaussStream { seed, counter: 0 }
    }

    /// Resumes a stream at an explicit counter, e.g. after serializing
    /// `(seed, counter)`.
    pub fn resume(seed: u64, counter: u64) -> Self {
        GaussStream { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// One standard-normal sample (Box-Muller, cosine branch). The
    /// transcendentals come from the portable `libm` implementations, so the
    /// sequence is bit-identical across platforms, not just across runs.
    pub fn next_gauss(&mut self) -> f64 {
        let u1 = uniform_open01(self.seed, self.counter);
        let u2 = uniform_open01(self.seed, self.counter.wrapping_add(1));
        self.counter = self.counter.wrapping_add(2);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    pub fn gauss_vec(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.next_gauss()).collect()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_gauss();
        }
    }
}
