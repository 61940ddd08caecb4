//! Small scripted scenarios that run the real codec and ARQ state machines
//! outside the network simulator.

use super::SimError;
use crate::fountain::{od_fc_decoder, reassemble, repair_symbol, segment, CodedSymbol, Decoder, SourceBlock};
use crate::protocols::{ArqState, TcpDParams, TcpReceiver};
use crate::te::TrafficClass;
use crate::vusgw::{DispatchMode, FlowContext};
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferProtocol {
    FcMp,
    OdFc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub data: Vec<u8>,
    pub symbols_sent: u64,
    pub encoder_ops: u64,
    pub decoder_ops: u64,
    /// Feedback rounds after the systematic pass.
    pub rounds: u32,
}

impl TransferOutcome {
    pub fn symbol_ops(&self) -> u64 {
        self.encoder_ops + self.decoder_ops
    }
}

const MAX_ROUNDS: u32 = 10_000;

/// Sends `data` over an erasure channel dropping each symbol with
/// probability `loss`. Every block goes out as its systematic symbols
/// first; after each round the receiver reports how many symbols it still
/// lacks and the sender sends that many repair symbols.
///
/// FC-MP repairs over the whole block. OD-FC repairs only the missing
/// source symbols, padded up to `min_block` with source symbols the receiver
/// already holds.
pub fn transfer_session<R: Rng + ?Sized>(
    protocol: TransferProtocol,
    data: &[u8],
    symbol_size: usize,
    max_k: usize,
    min_block: usize,
    loss: f64,
    rng: &mut R,
) -> Result<TransferOutcome, SimError> {
    if !(0.0..1.0).contains(&loss) {
        return Err(SimError::Setup(format!("loss {loss} outside [0, 1)")));
    }
    let blocks = segment(data, symbol_size, max_k).map_err(|e| SimError::Setup(e.to_string()))?;
    let mut out = TransferOutcome { data: Vec::new(), symbols_sent: 0, encoder_ops: 0, decoder_ops: 0, rounds: 0 };
    let mut recovered = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let r = match protocol {
            TransferProtocol::FcMp => fc_block(b, loss, rng, &mut out),
            TransferProtocol::OdFc => od_block(b, min_block.max(1), loss, rng, &mut out),
        }?;
        recovered.push(r);
    }
    out.data = reassemble(&recovered);
    Ok(out)
}

fn codec(e: impl ToString) -> SimError {
    SimError::Setup(e.to_string())
}

fn fc_block<R: Rng + ?Sized>(
    b: &SourceBlock,
    loss: f64,
    rng: &mut R,
    out: &mut TransferOutcome,
) -> Result<SourceBlock, SimError> {
    let k = b.k();
    let mut dec = Decoder::new(b.block_id(), k, b.symbol_size());
    let mut send = |sym: CodedSymbol, dec: &mut Decoder, out: &mut TransferOutcome| -> Result<(), SimError> {
        out.symbols_sent += 1;
        if rng.random::<f64>() >= loss {
            dec.push(&sym).map_err(codec)?;
        }
        Ok(())
    };
    for esi in 0..k as u32 {
        send(repair_symbol(b, esi), &mut dec, out)?;
    }
    let mut esi = k as u32;
    let mut rounds = 0;
    while !dec.is_decodable() {
        rounds += 1;
        if rounds > MAX_ROUNDS {
            return Err(SimError::Setup("transfer did not converge".into()));
        }
        for _ in 0..k - dec.rank() {
            out.encoder_ops += k as u64;
            send(repair_symbol(b, esi), &mut dec, out)?;
            esi += 1;
        }
    }
    out.rounds += rounds;
    out.decoder_ops += dec.symbol_ops();
    dec.recover_block(b.true_len()).ok_or_else(|| SimError::Setup("decoder lost rank".into()))
}

fn od_block<R: Rng + ?Sized>(
    b: &SourceBlock,
    min_block: usize,
    loss: f64,
    rng: &mut R,
    out: &mut TransferOutcome,
) -> Result<SourceBlock, SimError> {
    let k = b.k();
    // source symbols arrive in place; nothing to decode
    let mut have: Vec<Option<Vec<u8>>> = Vec::with_capacity(k);
    for s in b.symbols() {
        out.symbols_sent += 1;
        have.push((rng.random::<f64>() >= loss).then(|| s.clone()));
    }
    let missing: Vec<usize> = (0..k).filter(|&i| have[i].is_none()).collect();
    if !missing.is_empty() {
        let m = missing.len();
        // the most recently received source symbols, oldest first
        let received: Vec<usize> = (0..k).filter(|&i| have[i].is_some()).collect();
        let n_pad = min_block.saturating_sub(m).min(received.len());
        let padding: Vec<Vec<u8>> =
            received[received.len() - n_pad..].iter().map(|&i| have[i].clone().expect("received")).collect();
        let virt: Vec<Vec<u8>> = padding.iter().cloned().chain(missing.iter().map(|&i| b.symbols()[i].clone())).collect();
        let vblock = SourceBlock::from_symbols(b.block_id(), virt).map_err(codec)?;
        let kv = vblock.k();
        let mut dec = od_fc_decoder(b.block_id(), &padding, m, b.symbol_size()).map_err(codec)?;
        let mut esi = kv as u32;
        let mut rounds = 0;
        while !dec.is_decodable() {
            rounds += 1;
            if rounds > MAX_ROUNDS {
                return Err(SimError::Setup("transfer did not converge".into()));
            }
            for _ in 0..kv - dec.rank() {
                out.encoder_ops += kv as u64;
                out.symbols_sent += 1;
                let sym = repair_symbol(&vblock, esi);
                esi += 1;
                if rng.random::<f64>() >= loss {
                    dec.push(&sym).map_err(codec)?;
                }
            }
        }
        out.rounds += rounds;
        out.decoder_ops += dec.symbol_ops();
        let syms = dec.recover().ok_or_else(|| SimError::Setup("decoder lost rank".into()))?;
        for (j, &i) in missing.iter().enumerate() {
            have[i] = Some(syms[n_pad + j].clone());
        }
    }
    let syms: Vec<Vec<u8>> = have.into_iter().map(|s| s.expect("all recovered")).collect();
    Ok(SourceBlock::from_symbols(b.block_id(), syms).map_err(codec)?.with_true_len(b.true_len()))
}

/// Counts from [`delay_spike_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpikeOutcome {
    pub tcp_duplicates: u64,
    pub tcp_timeouts: u64,
    pub tcp_retransmissions: u64,
    pub tcp_complete: bool,
    /// Repeated symbols that reached the decoder before the block decoded.
    pub fc_duplicates: u64,
    /// Symbols that arrived after the block decoded.
    pub fc_post_decode: u64,
    /// Whether the FC receiver rebuilt the exact payload.
    pub fc_exact: bool,
}

const SPIKE_PACKETS: u64 = 200;
const SPIKE_SYMBOL: usize = 100;
const TICK_S: f64 = 0.001;
const BASE_DELAY_S: f64 = 0.010;
const SPIKE_FROM_S: f64 = 0.050;
const SPIKE_TO_S: f64 = 0.060;
const SPIKE_EXTRA_S: f64 = 1.0;

/// One-way delay of a packet sent at `t`: packets leaving during the spike
/// wait a second longer, far past any RTO the sender has learnt.
fn spike_delay(t: f64) -> f64 {
    if (SPIKE_FROM_S..SPIKE_TO_S).contains(&t) {
        BASE_DELAY_S + SPIKE_EXTRA_S
    } else {
        BASE_DELAY_S
    }
}

fn ticks(s: f64) -> u64 {
    (s / TICK_S).round() as u64
}

/// The same 200-packet transfer over a lossless link that sends one packet
/// per millisecond, once with TCP-D and once with FC-MP. Packets sent in a
/// 10 ms window are held back for a second.
pub fn delay_spike_scenario() -> DelaySpikeOutcome {
    let horizon = ticks(5.0);

    // TCP-D
    let mut arq = ArqState::new(SPIKE_PACKETS, TcpDParams::default());
    let mut rx = TcpReceiver::new(SPIKE_PACKETS);
    let mut data_q: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut ack_q: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for t in 0..horizon {
        let now = t as f64 * TICK_S;
        for seq in ack_q.remove(&t).unwrap_or_default() {
            arq.on_ack(seq, now);
        }
        for seq in data_q.remove(&t).unwrap_or_default() {
            rx.on_packet(seq);
            ack_q.entry(t + ticks(BASE_DELAY_S)).or_default().push(seq);
        }
        if arq.is_done() && data_q.is_empty() {
            break;
        }
        arq.on_timeout(now);
        if let Some(seq) = arq.next_to_send(now) {
            data_q.entry(t + ticks(spike_delay(now))).or_default().push(seq);
        }
    }

    // FC-MP
    let data: Vec<u8> = (0..SPIKE_PACKETS as usize * SPIKE_SYMBOL).map(|i| (i * 31 % 251) as u8).collect();
    let mut ctx = FlowContext::new(0, TrafficClass::BestEffort, DispatchMode::Rateless, SPIKE_SYMBOL, SPIKE_PACKETS as usize);
    let ids = ctx.ingest(&data).expect("nonempty payload");
    let block = ids[0];
    ctx.set_allocation(&[(1, (SPIKE_SYMBOL * 8) as f64 / TICK_S)]);
    let mut dec = Decoder::new(block, SPIKE_PACKETS as usize, SPIKE_SYMBOL);
    let mut sym_q: BTreeMap<u64, Vec<CodedSymbol>> = BTreeMap::new();
    let mut ack_at: Option<u64> = None;
    let (mut relevant_dups, mut post_decode) = (0, 0);
    let mut exact = false;
    for t in 0..horizon {
        let now = t as f64 * TICK_S;
        if ack_at == Some(t) {
            ctx.on_decode_ack(block, now);
        }
        for sym in sym_q.remove(&t).unwrap_or_default() {
            if dec.is_decodable() {
                post_decode += 1;
                continue;
            }
            let before = dec.duplicates();
            dec.push(&sym).expect("matching block and size");
            relevant_dups += dec.duplicates() - before;
            if dec.is_decodable() {
                ack_at = Some(t + ticks(BASE_DELAY_S));
                exact = dec.recover_block(data.len()).is_some_and(|b| b.data() == data);
            }
        }
        if ack_at.is_some_and(|a| a < t) && sym_q.is_empty() {
            break;
        }
        for (_, s) in ctx.dispatch_tick(TICK_S) {
            if let Some(sym) = ctx.materialize(&s) {
                sym_q.entry(t + ticks(spike_delay(now))).or_default().push(sym);
            }
        }
    }

    DelaySpikeOutcome {
        tcp_duplicates: rx.duplicates,
        tcp_timeouts: arq.timeouts,
        tcp_retransmissions: arq.retransmissions,
        tcp_complete: rx.is_complete(),
        fc_duplicates: relevant_dups,
        fc_post_decode: post_decode,
        fc_exact: exact,
    }
}
