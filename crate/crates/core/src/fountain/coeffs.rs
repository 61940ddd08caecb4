/// SplitMix64 (Steele, Lea, Flood 2014). Portable and stateless to reseed,
/// which is all the coefficient derivation needs.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix(self.state)
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const DOMAIN: u64 = 0x6463_6f64_6573_6565;

fn row_seed(block_id: u32, esi: u32) -> u64 {
    mix(((block_id as u64) << 32 | esi as u64) ^ DOMAIN)
}

/// Fills `out` with the nonzero coefficient row of `(block_id, esi)`.
pub fn fill_coefficients(block_id: u32, esi: u32, out: &mut [u8]) {
    let mut rng = SplitMix64::new(row_seed(block_id, esi));
    let mut i = 0;
    while i < out.len() {
        let word = rng.next_u64();
        for byte in word.to_le_bytes() {
            if byte != 0 && i < out.len() {
                out[i] = byte;
                i += 1;
            }
        }
    }
}

/// Coefficient row of length `k` for repair symbol `esi` of block `block_id`.
pub fn coefficients(block_id: u32, esi: u32, k: usize) -> Vec<u8> {
    let mut v = vec![0u8; k];
    fill_coefficients(block_id, esi, &mut v);
    v
}
