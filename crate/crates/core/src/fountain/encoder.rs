use super::{fill_coefficients, CodecError, CodedSymbol, SourceBlock};
use crate::gf256;

/// Symbol `esi` of `block`: the source symbol itself when `esi < K`,
/// otherwise a repair combination. Costs `K` row operations for repair.
pub fn repair_symbol(block: &SourceBlock, esi: u32) -> CodedSymbol {
    let k = block.k();
    if (esi as usize) < k {
        return CodedSymbol {
            block_id: block.block_id(),
            esi,
            payload: block.symbols()[esi as usize].clone(),
            is_systematic: true,
        };
    }
    let mut coeffs = vec![0u8; k];
    fill_coefficients(block.block_id(), esi, &mut coeffs);
    let mut payload = vec![0u8; block.symbol_size()];
    for (c, s) in coeffs.iter().zip(block.symbols()) {
        gf256::axpy(&mut payload, *c, s);
    }
    CodedSymbol { block_id: block.block_id(), esi, payload, is_systematic: false }
}

/// The `K` source symbols followed by `n_total - K` repair symbols.
pub fn encode_systematic(block: &SourceBlock, n_total: usize) -> Result<Vec<CodedSymbol>, CodecError> {
    if n_total < block.k() {
        return Err(CodecError::RateBelowUnity { n_total, k: block.k() });
    }
    Ok((0..n_total as u32).map(|esi| repair_symbol(block, esi)).collect())
}

/// Unbounded repair symbols from `start_esi` on.
pub fn repair_stream(block: &SourceBlock, start_esi: u32) -> Result<RepairStream<'_>, CodecError> {
    if (start_esi as usize) < block.k() {
        return Err(CodecError::StartBelowK { start: start_esi, k: block.k() });
    }
    Ok(RepairStream { block, next: Some(start_esi) })
}

pub struct RepairStream<'a> {
    block: &'a SourceBlock,
    next: Option<u32>,
}

impl Iterator for RepairStream<'_> {
    type Item = CodedSymbol;

    fn next(&mut self) -> Option<CodedSymbol> {
        let esi = self.next?;
        self.next = esi.checked_add(1);
        Some(repair_symbol(self.block, esi))
    }
}

/// Number of symbols fixed-rate coding emits for `k` source symbols.
pub fn fixed_rate_count(k: usize, ratio: f64) -> Result<usize, CodecError> {
    if !(ratio >= 1.0) {
        return Err(CodecError::RatioBelowOne(ratio));
    }
    // absorb float noise such as 10 * 1.3 = 13.000000000000002
    let exact = k as f64 * ratio;
    Ok(((exact - 1e-9).ceil() as usize).max(k))
}

/// Exactly `ceil(K * ratio)` symbols; nothing more is produced for the block.
pub fn fixed_rate_encode(block: &SourceBlock, ratio: f64) -> Result<Vec<CodedSymbol>, CodecError> {
    encode_systematic(block, fixed_rate_count(block.k(), ratio)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(k: usize, id: u32) -> SourceBlock {
        let data: Vec<u8> = (0..k * 8).map(|i| (i * 31 + 7) as u8).collect();
        SourceBlock::from_bytes(id, 8, &data).unwrap()
    }

    #[test]
    fn systematic_passthrough() {
        let b = block(4, 0);
        let out = encode_systematic(&b, 4).unwrap();
        assert_eq!(out.len(), 4);
        for (i, s) in out.iter().enumerate() {
            assert!(s.is_systematic);
            assert_eq!(s.esi as usize, i);
            assert_eq!(&s.payload, &b.symbols()[i]);
        }
        let out = encode_systematic(&b, 6).unwrap();
        assert_eq!(out.iter().filter(|s| !s.is_systematic).count(), 2);
        assert_eq!(out[5].esi, 5);
    }

    #[test]
    fn rate_below_unity() {
        assert_eq!(
            encode_systematic(&block(4, 0), 3),
            Err(CodecError::RateBelowUnity { n_total: 3, k: 4 })
        );
    }

    #[test]
    fn repair_is_deterministic_across_encoders() {
        let a = block(4, 7);
        let b = a.clone();
        assert_eq!(repair_symbol(&a, 5), repair_symbol(&b, 5));
    }

    #[test]
    fn repair_is_the_coefficient_combination() {
        let b = block(3, 2);
        let s = repair_symbol(&b, 9);
        let c = super::super::coefficients(2, 9, 3);
        for byte in 0..8 {
            let mut acc = 0u8;
            for i in 0..3 {
                acc ^= gf256::mul(c[i], b.symbols()[i][byte]);
            }
            assert_eq!(s.payload[byte], acc);
        }
    }

    #[test]
    fn stream_restarts_identically() {
        let b = block(4, 1);
        let first: Vec<_> = repair_stream(&b, 4).unwrap().take(3).collect();
        assert_eq!(first.iter().map(|s| s.esi).collect::<Vec<_>>(), vec![4, 5, 6]);
        let again = repair_stream(&b, 5).unwrap().next().unwrap();
        assert_eq!(again, first[1]);
        assert_eq!(repair_stream(&b, 4).unwrap().take(10_000).count(), 10_000);
        assert!(matches!(repair_stream(&b, 3), Err(CodecError::StartBelowK { .. })));
    }

    #[test]
    fn fixed_rate_counts() {
        assert_eq!(fixed_rate_encode(&block(10, 0), 1.5).unwrap().len(), 15);
        let one = fixed_rate_encode(&block(1, 0), 3.0).unwrap();
        assert_eq!(one.len(), 3);
        assert_eq!(one.iter().filter(|s| s.is_systematic).count(), 1);
        assert_eq!(fixed_rate_encode(&block(10, 0), 1.0).unwrap().len(), 10);
        assert_eq!(fixed_rate_count(10, 1.3).unwrap(), 13);
        assert!(matches!(fixed_rate_encode(&block(10, 0), 0.9), Err(CodecError::RatioBelowOne(_))));
    }
}
