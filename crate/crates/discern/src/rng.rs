//! Deterministic random streams for reproducible perturbation.
//!
//! Every randomized operation in this crate draws from a [`Stream`] derived
//! from `(global seed, stream label, item label)`. The derivation and the
//! generator are part of the external contract: variant corpora produced
//! with equal seeds must be byte-identical across machines and releases,
//! and golden files must be reproducible by independent implementations.
//!
//! The contract, in full:
//!
//! 1. **Seed hash.** The stream seed is the FNV-1a 64-bit hash of the byte
//!    string `le64(seed) || 0x1F || label || 0x1F || item`, where `le64`
//!    is the little-endian encoding of the global seed, `||` is
//!    concatenation, and `label`/`item` are UTF-8. FNV-1a 64 uses offset
//!    basis `0xcbf29ce484222325` and prime `0x100000001b3`.
//! 2. **Generator.** SplitMix64: state advances by `0x9e3779b97f4a7c15`;
//!    output mixes the new state with `z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!    z ^= z >> 27; z *= 0x94d049bb133111eb; z ^= z >> 31`.
//! 3. **Bounded draws.** `below(n)` uses rejection sampling: draw `x` until
//!    `x < 2^64 - (2^64 mod n)`, then return `x mod n`.
//! 4. **Distinct index selection.** `choose_indices(m, k)` runs a partial
//!    Fisher-Yates over `[0, m)`: for `i in 0..k`, swap position `i` with
//!    position `i + below(m - i)`; the result is the first `k` entries,
//!    sorted ascending.
//! 5. **Shuffles.** `shuffle(v)` is the same loop run to the end of the
//!    slice, leaving elements in place rather than extracting a prefix.
//! 6. **Distinct pairs.** `choose_pair(m)` draws `i = below(m)`, then
//!    `j = below(m - 1)` with `j += 1` when `j >= i`.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64 over raw bytes.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Seed for the stream identified by `(seed, label, item)`.
pub fn stream_seed(seed: u64, label: &str, item: &str) -> u64 {
    let mut buf = Vec::with_capacity(10 + label.len() + item.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.push(0x1f);
    buf.extend_from_slice(label.as_bytes());
    buf.push(0x1f);
    buf.extend_from_slice(item.as_bytes());
    fnv1a_64(&buf)
}

/// A SplitMix64 stream. Cheap to construct, `Copy`-free by intent so a
/// stream is consumed where it is used.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn from_seed(state: u64) -> Self {
        Stream { state }
    }

    /// Stream for one datapoint of one perturbation, per the module contract.
    pub fn derive(seed: u64, label: &str, item: &str) -> Self {
        Stream::from_seed(stream_seed(seed, label, item))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // 2^64 mod n, then threshold = 2^64 - (2^64 mod n) wrapped to u64;
        // a wrapped threshold of 0 (n a power of two) accepts every draw
        let threshold = (n.wrapping_neg() % n).wrapping_neg();
        loop {
            let x = self.next_u64();
            if threshold == 0 || x < threshold {
                return x % n;
            }
        }
    }

    /// Uniform in `[0.0, 1.0)` with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `k` distinct indices from `[0, m)`, sorted ascending.
    pub fn choose_indices(&mut self, m: usize, k: usize) -> Vec<usize> {
        assert!(k <= m, "choose_indices: k > m");
        let mut idx: Vec<usize> = (0..m).collect();
        for i in 0..k {
            let j = i + self.below((m - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        let m = v.len();
        for i in 0..m.saturating_sub(1) {
            let j = i + self.below((m - i) as u64) as usize;
            v.swap(i, j);
        }
    }

    /// Uniform unordered pair of distinct indices from `[0, m)`.
    /// Panics if `m < 2`.
    pub fn choose_pair(&mut self, m: usize) -> (usize, usize) {
        assert!(m >= 2, "choose_pair: m < 2");
        let i = self.below(m as u64) as usize;
        let mut j = self.below(m as u64 - 1) as usize;
        if j >= i {
            j += 1;
        }
        (i, j)
    }
}
