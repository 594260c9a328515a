//! Deterministic pseudo-random streams.
//!
//! Every random quantity in a run derives from a single 64-bit master seed
//! through splitmix64 state chains, and standard normals come from Box-Muller
//! over pairs of 64-bit uniforms mapped into the open interval (0,1). The
//! only floating-point library calls involved are `ln`, `sqrt` and `cos` in
//! round-to-nearest, so identical seeds produce bit-identical sequences on
//! every worker.

/// splitmix64 generator.
///
/// Reference constants from Steele, Lea & Flood's SplittableRandom mixer.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_A: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_B: u64 = 0x94D0_49BB_1331_11EB;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_A);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_B);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in the open interval (0, 1): (k + 1/2) * 2^-53 for k in [0, 2^53).
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [lo, hi] inclusive.
    ///
    /// Plain modulo mapping; the bias is negligible for the tick-scale ranges
    /// used in network delay models and keeps the draw a single `next_u64`.
    #[inline]
    pub fn next_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        if span == 0 {
            return self.next_u64(); // lo = 0, hi = u64::MAX
        }
        lo + self.next_u64() % span
    }

    /// Standard normal via Box-Muller (cosine branch).
    ///
    /// One normal consumes exactly two uniforms; the sine branch is unused so
    /// the generator chain never depends on `sin`.
    #[inline]
    pub fn next_standard_normal(&mut self) -> f64 {
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Seed for an independent substream identified by (domain, index).
///
/// Substream derivation is positional, not sequential: removing one entity
/// from a run leaves every other entity's stream unchanged.
pub fn substream_seed(master: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(domain.wrapping_mul(GAMMA))) ^ mix64(index.wrapping_add(GAMMA)))
}

/// Stream domains used by the harness.
pub mod domains {
    /// Per-worker candidate seed draws.
    pub const WORKER_SEARCH: u64 = 1;
    /// Network delay draws (TOB and gossip).
    pub const NETWORK: u64 = 2;
    /// Adversary-internal choices.
    pub const ADVERSARY: u64 = 3;
    /// Per-worker evaluation interval draws.
    pub const EVAL_INTERVAL: u64 = 4;
}
