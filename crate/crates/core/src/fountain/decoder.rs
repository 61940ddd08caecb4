use std::collections::HashSet;

use super::{fill_coefficients, CodecError, CodedSymbol, SourceBlock};
use crate::gf256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Decodable,
    NeedMore,
}

/// Incremental Gaussian elimination over GF(256).
///
/// Each stored row is `[coefficients (K) | payload (symbol_size)]` with a
/// leading one at its pivot column and zeros to the left of it. An incoming
/// row is reduced against the existing pivots in column order; if anything
/// survives it becomes the pivot of its first nonzero column. Back
/// substitution runs once, when rank reaches `K`.
#[derive(Debug, Clone)]
pub struct Decoder {
    block_id: u32,
    k: usize,
    symbol_size: usize,
    pivots: Vec<Option<Box<[u8]>>>,
    rank: usize,
    seen: HashSet<u32>,
    duplicates: u64,
    ops: u64,
    solved: bool,
}

impl Decoder {
    pub fn new(block_id: u32, k: usize, symbol_size: usize) -> Self {
        Self {
            block_id,
            k,
            symbol_size,
            pivots: vec![None; k],
            rank: 0,
            seen: HashSet::new(),
            duplicates: 0,
            ops: 0,
            solved: false,
        }
    }

    pub fn block_id(&self) -> u32 {
        self.block_id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn received(&self) -> usize {
        self.seen.len()
    }

    /// Symbols pushed with an esi that was already received.
    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Row operations (one per scaled row addition or normalisation) so far.
    pub fn symbol_ops(&self) -> u64 {
        self.ops
    }

    pub fn is_decodable(&self) -> bool {
        self.rank == self.k
    }

    pub fn push(&mut self, sym: &CodedSymbol) -> Result<DecodeStatus, CodecError> {
        if sym.block_id != self.block_id {
            return Err(CodecError::BlockMismatch { expected: self.block_id, got: sym.block_id });
        }
        if sym.payload.len() != self.symbol_size {
            return Err(CodecError::SymbolSizeMismatch { expected: self.symbol_size, got: sym.payload.len() });
        }
        if !self.seen.insert(sym.esi) {
            self.duplicates += 1;
            return Ok(self.status());
        }
        if self.is_decodable() {
            return Ok(DecodeStatus::Decodable);
        }
        let mut row = vec![0u8; self.k + self.symbol_size];
        if (sym.esi as usize) < self.k {
            row[sym.esi as usize] = 1;
        } else {
            fill_coefficients(self.block_id, sym.esi, &mut row[..self.k]);
        }
        row[self.k..].copy_from_slice(&sym.payload);
        self.insert_row(row);
        Ok(self.status())
    }

    /// Feeds a source symbol the receiver already holds, e.g. the padding of
    /// an on-demand block.
    pub fn push_known_source(&mut self, esi: u32, payload: &[u8]) -> Result<DecodeStatus, CodecError> {
        let sym = CodedSymbol { block_id: self.block_id, esi, payload: payload.to_vec(), is_systematic: true };
        self.push(&sym)
    }

    fn status(&self) -> DecodeStatus {
        if self.is_decodable() {
            DecodeStatus::Decodable
        } else {
            DecodeStatus::NeedMore
        }
    }

    fn insert_row(&mut self, mut row: Vec<u8>) {
        for col in 0..self.k {
            let c = row[col];
            if c == 0 {
                continue;
            }
            match &self.pivots[col] {
                Some(p) => {
                    gf256::axpy(&mut row[col..], c, &p[col..]);
                    self.ops += 1;
                }
                None => {
                    if c != 1 {
                        gf256::scale(&mut row[col..], gf256::inv(c));
                        self.ops += 1;
                    }
                    self.pivots[col] = Some(row.into_boxed_slice());
                    self.rank += 1;
                    return;
                }
            }
        }
        // reduced to zero: linearly dependent
    }

    fn back_substitute(&mut self) {
        if self.solved || !self.is_decodable() {
            return;
        }
        let k = self.k;
        for col in (0..k).rev() {
            let mut row = self.pivots[col].take().expect("full rank");
            for j in col + 1..k {
                let c = row[j];
                if c != 0 {
                    let p = self.pivots[j].as_ref().expect("full rank");
                    gf256::axpy(&mut row[k..], c, &p[k..]);
                    row[j] = 0;
                    self.ops += 1;
                }
            }
            self.pivots[col] = Some(row);
        }
        self.solved = true;
    }

    /// The `K` source symbols, once decodable.
    pub fn recover(&mut self) -> Option<Vec<Vec<u8>>> {
        if !self.is_decodable() {
            return None;
        }
        self.back_substitute();
        let k = self.k;
        Some(self.pivots.iter().map(|p| p.as_ref().unwrap()[k..].to_vec()).collect())
    }

    /// The recovered block with its original length restored.
    pub fn recover_block(&mut self, true_len: usize) -> Option<SourceBlock> {
        let symbols = self.recover()?;
        let id = self.block_id;
        SourceBlock::from_symbols(id, symbols).ok().map(|b| b.with_true_len(true_len))
    }
}
