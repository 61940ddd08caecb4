//! On-demand coding of missing symbols.
//!
//! The virtual block puts the padding symbols (recently received, so the
//! receiver already has them) at esi `0..P` and the missing ones after them.
//! Sender and receiver agree on this order without extra signalling.

use super::{repair_symbol, CodecError, CodedSymbol, Decoder, SourceBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OdFcLayout {
    pub padding: usize,
    pub missing: usize,
}

impl OdFcLayout {
    pub fn k(&self) -> usize {
        self.padding + self.missing
    }
}

/// `n_repair` repair symbols over the virtual block `padding ++ missing`.
pub fn od_fc_encode(
    block_id: u32,
    missing: &[Vec<u8>],
    padding: &[Vec<u8>],
    n_repair: usize,
) -> Result<Vec<CodedSymbol>, CodecError> {
    if missing.is_empty() {
        return Err(CodecError::NoMissing);
    }
    if n_repair == 0 {
        return Ok(Vec::new());
    }
    let symbols: Vec<Vec<u8>> = padding.iter().chain(missing).cloned().collect();
    let block = SourceBlock::from_symbols(block_id, symbols)?;
    let k = block.k() as u32;
    Ok((k..k + n_repair as u32).map(|esi| repair_symbol(&block, esi)).collect())
}

/// A decoder for the virtual block with the padding already pushed.
pub fn od_fc_decoder(
    block_id: u32,
    padding: &[Vec<u8>],
    n_missing: usize,
    symbol_size: usize,
) -> Result<Decoder, CodecError> {
    if n_missing == 0 {
        return Err(CodecError::NoMissing);
    }
    let mut d = Decoder::new(block_id, padding.len() + n_missing, symbol_size);
    for (i, p) in padding.iter().enumerate() {
        d.push_known_source(i as u32, p)?;
    }
    Ok(d)
}
