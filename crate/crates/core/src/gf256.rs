//! GF(2^8) arithmetic with the 0x11d reduction polynomial.
//!
//! Full 64 KiB product table, built at compile time. Row operations on
//! symbol payloads go through [`axpy`], which is the hot loop of the
//! fountain decoder.

const POLY: u16 = 0x11d;

const fn build_exp_log() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    (exp, log)
}

const EXP_LOG: ([u8; 512], [u8; 256]) = build_exp_log();
const EXP: [u8; 512] = EXP_LOG.0;
const LOG: [u8; 256] = EXP_LOG.1;

const fn build_mul() -> [[u8; 256]; 256] {
    let mut t = [[0u8; 256]; 256];
    let mut a = 1;
    while a < 256 {
        let mut b = 1;
        while b < 256 {
            t[a][b] = EXP[LOG[a] as usize + LOG[b] as usize];
            b += 1;
        }
        a += 1;
    }
    t
}

static MUL: [[u8; 256]; 256] = build_mul();

// Per multiplier: products with the low nibbles 0..16, then the high nibbles.
const fn build_nibbles() -> [[u8; 32]; 256] {
    let mul = build_mul();
    let mut t = [[0u8; 32]; 256];
    let mut c = 0;
    while c < 256 {
        let mut i = 0;
        while i < 16 {
            t[c][i] = mul[c][i];
            t[c][16 + i] = mul[c][i << 4];
            i += 1;
        }
        c += 1;
    }
    t
}

#[cfg(target_arch = "x86_64")]
static NIBBLES: [[u8; 32]; 256] = build_nibbles();

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    MUL[a as usize][b as usize]
}

/// Multiplicative inverse. Panics on zero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert!(a != 0, "zero has no inverse in GF(256)");
    EXP[255 - LOG[a as usize] as usize]
}

/// `dst += c * src` elementwise.
#[inline]
pub fn axpy(dst: &mut [u8], c: u8, src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            #[cfg(target_arch = "x86_64")]
            {
                if dst.len() >= 32 && std::is_x86_feature_detected!("avx2") {
                    // SAFETY: avx2 availability checked just above.
                    unsafe { simd::axpy_avx2(dst, c, src) };
                    return;
                }
            }
            axpy_scalar(dst, c, src);
        }
    }
}

#[inline]
fn axpy_scalar(dst: &mut [u8], c: u8, src: &[u8]) {
    let row = &MUL[c as usize];
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= row[*s as usize];
    }
}

#[cfg(target_arch = "x86_64")]
mod simd {
    use std::arch::x86_64::*;

    /// Split-nibble product: `c*x = lo[x & 15] ^ hi[x >> 4]`, 32 bytes per step.
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn axpy_avx2(dst: &mut [u8], c: u8, src: &[u8]) {
        let n = dst.len().min(src.len());
        let t = &super::NIBBLES[c as usize];
        let lo = _mm256_broadcastsi128_si256(_mm_loadu_si128(t.as_ptr() as *const __m128i));
        let hi = _mm256_broadcastsi128_si256(_mm_loadu_si128(t.as_ptr().add(16) as *const __m128i));
        let mask = _mm256_set1_epi8(0x0f);
        let mut i = 0;
        while i + 32 <= n {
            let x = _mm256_loadu_si256(src.as_ptr().add(i) as *const __m256i);
            let d = _mm256_loadu_si256(dst.as_ptr().add(i) as *const __m256i);
            let l = _mm256_shuffle_epi8(lo, _mm256_and_si256(x, mask));
            let h = _mm256_shuffle_epi8(hi, _mm256_and_si256(_mm256_srli_epi64(x, 4), mask));
            let r = _mm256_xor_si256(d, _mm256_xor_si256(l, h));
            _mm256_storeu_si256(dst.as_mut_ptr().add(i) as *mut __m256i, r);
            i += 32;
        }
        super::axpy_scalar(&mut dst[i..n], c, &src[i..n]);
    }
}

/// `dst *= c` elementwise.
#[inline]
pub fn scale(dst: &mut [u8], c: u8) {
    if c == 1 {
        return;
    }
    let row = &MUL[c as usize];
    for d in dst.iter_mut() {
        *d = row[*d as usize];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Carry-less multiply with reduction, independent of the tables.
    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let hi = a & 0x80;
            a <<= 1;
            if hi != 0 {
                a ^= (POLY & 0xff) as u8;
            }
            b >>= 1;
        }
        p
    }

    #[test]
    fn table_matches_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn inverses() {
        for a in 1..=255u8 {
            assert_eq!(mul(a, inv(a)), 1);
        }
    }

    #[test]
    fn axpy_matches_scalar() {
        let src: Vec<u8> = (0..=255).chain(0..45).collect();
        for c in [0u8, 1, 2, 0x53, 0xff] {
            let mut dst = vec![7u8; src.len()];
            axpy(&mut dst, c, &src);
            for (i, d) in dst.iter().enumerate() {
                assert_eq!(*d, 7 ^ slow_mul(c, src[i]));
            }
        }
    }
}
