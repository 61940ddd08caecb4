//! Systematic random-linear fountain code over GF(256).
//!
//! A block of `K` source symbols is sent verbatim first (ESI `0..K`),
//! followed by an unbounded stream of repair symbols. Repair symbol `esi`
//! is `sum_i c_i * s_i` where the coefficient row `c` is a pure function of
//! `(block_id, esi)`, see [`coefficients`]. Any set of received symbols whose
//! coefficient rows reach rank `K` recovers the block.

mod coeffs;
mod decoder;
mod encoder;
mod odfc;

pub use coeffs::{coefficients, fill_coefficients, SplitMix64};
pub use decoder::{DecodeStatus, Decoder};
pub use encoder::{encode_systematic, fixed_rate_count, fixed_rate_encode, repair_symbol, repair_stream, RepairStream};
pub use odfc::{od_fc_decoder, od_fc_encode, OdFcLayout};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("symbol size must be positive")]
    ZeroSymbolSize,
    #[error("max_k must be at least 1")]
    ZeroMaxK,
    #[error("rate below unity: n_total {n_total} < K {k}")]
    RateBelowUnity { n_total: usize, k: usize },
    #[error("fixed-rate ratio {0} is below 1")]
    RatioBelowOne(f64),
    #[error("repair stream must start at esi >= K ({k}), got {start}")]
    StartBelowK { start: u32, k: usize },
    #[error("symbol for block {got} pushed into decoder for block {expected}")]
    BlockMismatch { expected: u32, got: u32 },
    #[error("symbol size mismatch: expected {expected} bytes, got {got}")]
    SymbolSizeMismatch { expected: usize, got: usize },
    #[error("on-demand block needs at least one missing symbol")]
    NoMissing,
    #[error("source block needs at least one symbol")]
    EmptyBlock,
    #[error("wire record too short: {0} bytes")]
    ShortRecord(usize),
}

/// One file segment: `K` equal-length source symbols, the last zero-padded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBlock {
    block_id: u32,
    symbol_size: usize,
    symbols: Vec<Vec<u8>>,
    true_len: usize,
}

impl SourceBlock {
    /// Splits `data` into symbols of `symbol_size`, zero-padding the tail.
    /// Empty data yields one zero symbol with a true length of 0.
    pub fn from_bytes(block_id: u32, symbol_size: usize, data: &[u8]) -> Result<Self, CodecError> {
        if symbol_size == 0 {
            return Err(CodecError::ZeroSymbolSize);
        }
        let mut symbols: Vec<Vec<u8>> = data
            .chunks(symbol_size)
            .map(|c| {
                let mut s = c.to_vec();
                s.resize(symbol_size, 0);
                s
            })
            .collect();
        if symbols.is_empty() {
            symbols.push(vec![0; symbol_size]);
        }
        Ok(Self { block_id, symbol_size, symbols, true_len: data.len() })
    }

    /// Builds a block from already-sized symbols; the true length is the full
    /// `K * symbol_size`.
    pub fn from_symbols(block_id: u32, symbols: Vec<Vec<u8>>) -> Result<Self, CodecError> {
        let symbol_size = symbols.first().map(Vec::len).ok_or(CodecError::EmptyBlock)?;
        if symbol_size == 0 {
            return Err(CodecError::ZeroSymbolSize);
        }
        if let Some(bad) = symbols.iter().find(|s| s.len() != symbol_size) {
            return Err(CodecError::SymbolSizeMismatch { expected: symbol_size, got: bad.len() });
        }
        let true_len = symbols.len() * symbol_size;
        Ok(Self { block_id, symbol_size, symbols, true_len })
    }

    pub fn block_id(&self) -> u32 {
        self.block_id
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size
    }

    pub fn symbols(&self) -> &[Vec<u8>] {
        &self.symbols
    }

    /// Length of the original data carried by this block, before padding.
    pub fn true_len(&self) -> usize {
        self.true_len
    }

    pub fn with_true_len(mut self, true_len: usize) -> Self {
        debug_assert!(true_len <= self.k() * self.symbol_size);
        self.true_len = true_len;
        self
    }

    /// The original bytes with padding stripped.
    pub fn data(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.true_len);
        for s in &self.symbols {
            out.extend_from_slice(s);
        }
        out.truncate(self.true_len);
        out
    }
}

/// Shape of one segment, without any payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub k: usize,
    pub true_len: usize,
}

/// Block shapes that [`segment`] would produce for `len` bytes.
pub fn segment_layout(len: usize, symbol_size: usize, max_k: usize) -> Result<Vec<BlockLayout>, CodecError> {
    if symbol_size == 0 {
        return Err(CodecError::ZeroSymbolSize);
    }
    if max_k == 0 {
        return Err(CodecError::ZeroMaxK);
    }
    if len == 0 {
        return Ok(vec![BlockLayout { k: 1, true_len: 0 }]);
    }
    let block_bytes = symbol_size * max_k;
    let mut out = Vec::new();
    let mut rest = len;
    while rest > 0 {
        let take = rest.min(block_bytes);
        out.push(BlockLayout { k: take.div_ceil(symbol_size), true_len: take });
        rest -= take;
    }
    Ok(out)
}

/// Splits `data` into source blocks of at most `max_k` symbols, numbered from 0.
pub fn segment(data: &[u8], symbol_size: usize, max_k: usize) -> Result<Vec<SourceBlock>, CodecError> {
    segment_from(data, symbol_size, max_k, 0)
}

/// Like [`segment`], numbering blocks from `first_block_id`.
pub fn segment_from(
    data: &[u8],
    symbol_size: usize,
    max_k: usize,
    first_block_id: u32,
) -> Result<Vec<SourceBlock>, CodecError> {
    let layout = segment_layout(data.len(), symbol_size, max_k)?;
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(layout.len());
    for (i, l) in layout.iter().enumerate() {
        let chunk = &data[offset..offset + l.true_len];
        blocks.push(SourceBlock::from_bytes(first_block_id + i as u32, symbol_size, chunk)?);
        offset += l.true_len;
    }
    Ok(blocks)
}

/// Concatenates block data in order.
pub fn reassemble(blocks: &[SourceBlock]) -> Vec<u8> {
    blocks.iter().flat_map(SourceBlock::data).collect()
}

/// A systematic or repair symbol of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedSymbol {
    pub block_id: u32,
    pub esi: u32,
    pub payload: Vec<u8>,
    pub is_systematic: bool,
}

/// Bytes of block id and esi preceding the payload on the wire.
pub const WIRE_HEADER_LEN: usize = 8;

impl CodedSymbol {
    /// `block_id` (4 bytes BE), `esi` (4 bytes BE), payload.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(WIRE_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.block_id.to_be_bytes());
        out.extend_from_slice(&self.esi.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a wire record; `k` of the block decides `is_systematic`.
    pub fn from_wire(bytes: &[u8], k: usize) -> Result<Self, CodecError> {
        if bytes.len() < WIRE_HEADER_LEN {
            return Err(CodecError::ShortRecord(bytes.len()));
        }
        let block_id = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let esi = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        Ok(Self {
            block_id,
            esi,
            payload: bytes[WIRE_HEADER_LEN..].to_vec(),
            is_systematic: (esi as usize) < k,
        })
    }

    pub fn wire_len(&self) -> usize {
        WIRE_HEADER_LEN + self.payload.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_examples() {
        let b = segment(&[1u8; 1024], 256, 64).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].k(), 4);

        let big = vec![3u8; 2_500_000];
        let ks: Vec<usize> = segment(&big, 1000, 1000).unwrap().iter().map(|b| b.k()).collect();
        assert_eq!(ks, vec![1000, 1000, 500]);

        let small = segment(&[9u8; 100], 256, 64).unwrap();
        assert_eq!(small.len(), 1);
        assert_eq!(small[0].k(), 1);
        assert_eq!(small[0].symbols()[0][99], 9);
        assert_eq!(small[0].symbols()[0][100], 0);
        assert_eq!(small[0].data().len(), 100);
    }

    #[test]
    fn segment_empty_input() {
        let b = segment(&[], 16, 4).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].k(), 1);
        assert_eq!(b[0].true_len(), 0);
        assert_eq!(b[0].symbols()[0], vec![0u8; 16]);
        assert!(reassemble(&b).is_empty());
    }

    #[test]
    fn segment_rejects_bad_params() {
        assert_eq!(segment(&[1], 0, 4), Err(CodecError::ZeroSymbolSize));
        assert_eq!(segment(&[1], 4, 0), Err(CodecError::ZeroMaxK));
    }

    #[test]
    fn wire_layout() {
        let s = CodedSymbol { block_id: 7, esi: 0x0102_0304, payload: vec![0xaa, 0xbb], is_systematic: false };
        let w = s.to_wire();
        assert_eq!(w, vec![0, 0, 0, 7, 1, 2, 3, 4, 0xaa, 0xbb]);
        assert_eq!(CodedSymbol::from_wire(&w, 4).unwrap(), s);
        assert!(matches!(CodedSymbol::from_wire(&w[..5], 4), Err(CodecError::ShortRecord(5))));
    }

    proptest::proptest! {
        #[test]
        fn segment_reassemble_roundtrip(data in proptest::collection::vec(proptest::num::u8::ANY, 0..3000),
                                        symbol_size in 1usize..300, max_k in 1usize..20) {
            let blocks = segment(&data, symbol_size, max_k).unwrap();
            for b in &blocks {
                proptest::prop_assert!(b.k() <= max_k);
                proptest::prop_assert!(b.symbols().iter().all(|s| s.len() == symbol_size));
            }
            proptest::prop_assert_eq!(reassemble(&blocks), data);
        }
    }
}
