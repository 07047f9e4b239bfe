//! Deterministic random number generation.
//!
//! Every stochastic piece of the library (initialization, shuffling, SGD
//! sampling, dropout masks, k-means restarts) draws from this generator, so
//! a run is a pure function of its seeds. The generator is pinned here so
//! golden values stay valid on any platform or port:
//!
//! * State seeding: `state = splitmix64(seed)` (one round), so that small
//!   seeds like 0 and 1 still give well-mixed streams. A zero state after
//!   mixing is replaced by a fixed nonzero constant.
//! * Stream: `xorshift64*` — `s ^= s >> 12; s ^= s << 25; s ^= s >> 27;
//!   output = s * 0x2545F4914F6CDD1D`.
//! * `next_f64` takes the top 53 bits of the output, uniform in `[0, 1)`.
//! * Gaussians use the Box–Muller transform; the pair's second value is
//!   cached and returned by the next call.

const MULT: u64 = 0x2545_F491_4F6C_DD1D;

#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    spare_gauss: Option<f64>,
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            state = 0x853C_49E6_748F_EA9B;
        }
        Rng {
            state,
            spare_gauss: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.state;
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        self.state = s;
        s.wrapping_mul(MULT)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `{0, .., n-1}`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box–Muller. Produces values in pairs; the second
    /// of each pair is cached for the following call.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare_gauss.take() {
            return g;
        }
        // u1 in (0, 1] to keep the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gauss = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn gaussian_scaled(&mut self, std: f64) -> f64 {
        self.gaussian() * std
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Samples `k` distinct indices from `{0, .., n-1}` without replacement.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} from {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        self.shuffle(&mut pool);
        pool.truncate(k);
        pool
    }
}
