use super::{Counters, Metrics, SessionRecord, SimError};
use crate::config::{Placement, ProtocolName, ScenarioConfig, TrafficKind};
use crate::fountain::{fixed_rate_count, segment_layout};
use crate::netmodel::{
    best_n_cells, build_topology, dbm_to_mw, kmh_to_mps, mw_to_dbm, noise_dbm, radio_nodes, rate_from_sinr, rx_power_dbm,
    step_mobility, NetworkGraph, NodeId, NodeKind, RadioNode, Strip, UserEquipment,
};
use crate::protocols::{
    handover_execute, harq_error_probability, harq_transmit, sdp_select, ArqState, HandoverAction, HandoverMode,
    HarqOutcome, HarqProcess, SchedulerPolicy, SdpClass, SdpContext, TcpDParams, TcpReceiver,
};
use crate::te::{
    candidate_paths, place_vusgw, solve_max_min, solve_max_sum, Commodity, Path, PlacementWeights, TeParams,
    TrafficClass, UeTrajectory,
};
use crate::vusgw::{BufferStatusReport, DispatchMode, FeedbackParams, FlowContext, PathShaper, SymbolRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

const NONE: usize = usize::MAX;
const NO_DEADLINE: u64 = u64::MAX;

fn us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

fn secs(t: u64) -> f64 {
    t as f64 / 1e6
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Fc,
    Tcp,
    Video,
    OdFc,
}

/// One packet or coded symbol on its way to a UE.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    ue: u32,
    kind: Kind,
    session: u32,
    /// FC block id, on-demand block index or video frame number.
    block: u32,
    /// ESI or TCP sequence number.
    seq: u32,
    k: u32,
    bits: u32,
    deadline: u64,
    harq: bool,
    fwd: bool,
}

#[derive(Debug)]
struct Leg {
    ue: usize,
    inbound: VecDeque<(u64, Item)>,
    queue: VecDeque<Item>,
    /// forwarded items at the head of `queue`
    prio: usize,
    queued_bits: u64,
    ready_at: u64,
    released: bool,
    carry: f64,
    pf_avg: f64,
}

impl Leg {
    fn new(ue: usize, ready_at: u64) -> Self {
        Self {
            ue,
            inbound: VecDeque::new(),
            queue: VecDeque::new(),
            prio: 0,
            queued_bits: 0,
            ready_at,
            released: false,
            carry: 0.0,
            pf_avg: 1.0,
        }
    }

    fn pop(&mut self) -> Option<Item> {
        let it = self.queue.pop_front()?;
        self.prio = self.prio.saturating_sub(1);
        self.queued_bits -= it.bits as u64;
        Some(it)
    }
}

#[derive(Debug, Default)]
struct Cell {
    legs: Vec<Leg>,
    harq: Vec<HarqProcess<Vec<Item>>>,
}

impl Cell {
    fn leg(&mut self, ue: usize) -> Option<&mut Leg> {
        self.legs.iter_mut().find(|l| l.ue == ue)
    }

    fn backlogged(&self) -> bool {
        !self.harq.is_empty() || self.legs.iter().any(|l| !l.queue.is_empty() || !l.inbound.is_empty())
    }
}

#[derive(Debug, Clone, Copy)]
struct Link {
    node: NodeId,
    est_db: f64,
    true_db: f64,
    est_rate: f64,
}

#[derive(Debug, Default)]
struct BlockRx {
    k: u32,
    rank: u32,
    repairs: u32,
    seen: HashSet<u32>,
    decoded: bool,
}

#[derive(Debug)]
struct Shaper {
    paths: Vec<PathShaper>,
    rr: usize,
}

impl Shaper {
    fn new() -> Self {
        Self { paths: Vec::new(), rr: 0 }
    }

    fn set(&mut self, alloc: &[(NodeId, f64)]) {
        self.paths = alloc.iter().map(|&(n, r)| PathShaper::new(n, r.max(0.0))).collect();
    }

    fn tick<T>(&mut self, dt: f64, bits: f64, mut next: impl FnMut() -> Option<T>) -> Vec<(NodeId, T)> {
        let mut budgets: Vec<usize> = self.paths.iter_mut().map(|p| p.budget(dt, bits)).collect();
        let n = self.paths.len();
        let mut left: usize = budgets.iter().sum();
        let mut out = Vec::new();
        let mut i = self.rr;
        while left > 0 {
            let pi = i % n;
            i += 1;
            if budgets[pi] == 0 {
                continue;
            }
            let Some(x) = next() else { break };
            budgets[pi] -= 1;
            left -= 1;
            out.push((self.paths[pi].node, x));
        }
        if n > 0 {
            self.rr = i % n;
        }
        out
    }
}

#[derive(Debug)]
struct FcFlow {
    ctx: FlowContext,
    rx: HashMap<u32, BlockRx>,
    blocks_left: usize,
}

#[derive(Debug)]
struct TcpFlow {
    shaper: Shaper,
    arq: Option<ArqState>,
    rx: Option<TcpReceiver>,
}

#[derive(Debug, Default)]
struct OdBlock {
    rx: BlockRx,
    /// dispatched and not yet resolved
    outstanding: u32,
    /// waiting in the sender queue
    queued: u32,
    next_esi: u32,
}

#[derive(Debug)]
struct OdFlow {
    shaper: Shaper,
    queue: VecDeque<Item>,
    blocks: Vec<OdBlock>,
    left: usize,
}

#[derive(Debug)]
struct FrameRx {
    k: u32,
    rank: u32,
    repairs: u32,
    seen: HashSet<u32>,
    coded: bool,
    decoded: bool,
    at: u64,
}

#[derive(Debug)]
struct VideoFlow {
    start: u64,
    next_frame: u64,
    alloc: Vec<(NodeId, f64)>,
    credit: Vec<f64>,
    frames: HashMap<u32, FrameRx>,
    /// (frames, missed) per session window
    windows: Vec<(u32, u32)>,
}

#[derive(Debug)]
enum Flow {
    Fc(Box<FcFlow>),
    Tcp(TcpFlow),
    Od(OdFlow),
    Video(VideoFlow),
}

#[derive(Debug)]
struct Ue {
    eq: UserEquipment,
    links: Vec<Link>,
    host: NodeId,
    flow: Flow,
    session: u32,
    active: bool,
    record: usize,
    completed: u32,
}

impl Ue {
    fn primary(&self) -> Option<NodeId> {
        self.eq.serving_set.first().copied()
    }

    fn link(&self, node: NodeId) -> Option<&Link> {
        self.links.iter().find(|l| l.node == node)
    }
}

#[derive(Debug)]
enum Ev {
    SessionStart(usize),
    Ack { ue: usize, kind: Kind, session: u32, block: u32 },
    Purge { ue: usize, node: NodeId, kind: Kind, block: u32 },
    TcpAck { ue: usize, session: u32, seq: u32 },
    Forwarded { ue: usize, items: Vec<Item> },
    OdReport { ue: usize, session: u32, block: u32, missing: u32 },
    Frame(usize),
    FrameDeadline { ue: usize, frame: u32 },
    Report { ue: usize, report: BufferStatusReport },
}

struct Scheduled {
    time: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.seq) == (o.time, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap pops the earliest
    fn cmp(&self, o: &Self) -> Ordering {
        (o.time, o.seq).cmp(&(self.time, self.seq))
    }
}

/// Latency and hop count from each host to every node.
struct Routes {
    host: NodeId,
    to: Vec<(u64, u64)>,
}

pub(super) struct World<'c> {
    cfg: &'c ScenarioConfig,
    seed: u64,
    proto: ProtocolName,
    graph: NetworkGraph,
    radios: Vec<RadioNode>,
    ridx: Vec<usize>,
    routes: Vec<Routes>,
    strip: Strip,
    ues: Vec<Ue>,
    cells: Vec<Cell>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: u64,
    tti: u64,
    end: u64,
    warm: u64,
    n_paths: usize,
    mode: HandoverMode,
    rng_traffic: ChaCha8Rng,
    rng_air: ChaCha8Rng,
    rng_rank: ChaCha8Rng,
    off: Exp<f64>,
    m: Counters,
    snapshot: Option<Counters>,
    te_pending: bool,
    sessions: Vec<SessionRecord>,
    redundancy: Vec<f64>,
    od_ops: u64,
}

impl<'c> World<'c> {
    pub(super) fn new(cfg: &'c ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        let graph = build_topology(&cfg.topology)?;
        let radios = radio_nodes(&graph, &cfg.radio);
        let mut ridx = vec![NONE; graph.nodes().len()];
        for (i, r) in radios.iter().enumerate() {
            ridx[r.id] = i;
        }
        let strip = Strip::centred(cfg.topology.side_m(), cfg.mobility.strip_length_m);
        let proto = cfg.protocol.name;
        let n_paths = cfg.serving_cells().min(radios.len());
        let mut rng_pos = stream(seed, 1);
        let speed = kmh_to_mps(cfg.mobility.speed_kmh);
        let mut eqs: Vec<UserEquipment> = (0..cfg.mobility.ues)
            .map(|u| {
                let x = rng_pos.random_range(strip.x_min..=strip.x_max);
                UserEquipment::on_lane(u, u % 2, x, speed, &strip)
            })
            .collect();
        for e in &mut eqs {
            e.noise_figure_db = cfg.radio.noise_figure_db;
        }
        let gateway = graph.gateway().ok_or_else(|| SimError::Setup("topology has no gateway".into()))?;
        let hosts = match cfg.protocol.placement {
            Placement::Gateway => vec![gateway; eqs.len()],
            Placement::Optimized => place_hosts(cfg, &graph, &radios, &strip, &eqs)?,
        };
        let mut routes: Vec<Routes> = Vec::new();
        for &h in &hosts {
            if routes.iter().any(|r| r.host == h) {
                continue;
            }
            let to = (0..graph.nodes().len())
                .map(|n| match graph.shortest_path(h, n) {
                    Some(p) => (us(graph.path_latency(&p)), (p.len() - 1) as u64),
                    None => (u64::MAX / 4, 0),
                })
                .collect();
            routes.push(Routes { host: h, to });
        }
        let off_mean = cfg.traffic.off_time_mean_s();
        let mut w = World {
            cfg,
            seed,
            proto,
            graph,
            cells: (0..radios.len()).map(|_| Cell::default()).collect(),
            radios,
            ridx,
            routes,
            strip,
            ues: Vec::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            tti: us(cfg.run.tti_s).max(1),
            end: us(cfg.run.duration_s),
            warm: us(cfg.run.warmup_s),
            n_paths,
            mode: cfg.protocol.handover,
            rng_traffic: stream(seed, 2),
            rng_air: stream(seed, 3),
            rng_rank: stream(seed, 4),
            off: Exp::new(1.0 / off_mean).map_err(|e| SimError::Setup(e.to_string()))?,
            m: Counters::default(),
            snapshot: None,
            te_pending: false,
            sessions: Vec::new(),
            redundancy: Vec::new(),
            od_ops: 0,
        };
        for (eq, host) in eqs.into_iter().zip(hosts) {
            let flow = w.new_flow(eq.id);
            w.ues.push(Ue { eq, links: Vec::new(), host, flow, session: 0, active: false, record: NONE, completed: 0 });
        }
        Ok(w)
    }

    fn new_flow(&mut self, ue: usize) -> Flow {
        let p = &self.cfg.protocol;
        let fc = |mode| {
            let mut ctx = FlowContext::new(ue, TrafficClass::BestEffort, mode, p.symbol_bytes, p.max_k);
            ctx.feedback = FeedbackParams {
                enabled: p.feedback,
                beta: p.feedback_beta,
                high_s: p.feedback_high_s,
                low_s: p.feedback_low_s,
                report_period_s: self.cfg.run.report_period_s,
                ..FeedbackParams::default()
            };
            ctx.forwarding = self.mode == HandoverMode::Forward;
            Flow::Fc(Box::new(FcFlow { ctx, rx: HashMap::new(), blocks_left: 0 }))
        };
        match self.proto {
            ProtocolName::FcMp => fc(DispatchMode::Rateless),
            ProtocolName::FcMc => fc(DispatchMode::Multicast(p.fc_mc_rate_bps)),
            ProtocolName::TcpD1Path | ProtocolName::TcpDMultipath => {
                Flow::Tcp(TcpFlow { shaper: Shaper::new(), arq: None, rx: None })
            }
            ProtocolName::OdFc => {
                Flow::Od(OdFlow { shaper: Shaper::new(), queue: VecDeque::new(), blocks: Vec::new(), left: 0 })
            }
            ProtocolName::Udp1Path | ProtocolName::FcMpVideo => {
                let start = us(self.rng_traffic.random_range(0.0..1.0 / self.cfg.traffic.fps));
                Flow::Video(VideoFlow {
                    start,
                    next_frame: 0,
                    alloc: Vec::new(),
                    credit: Vec::new(),
                    frames: HashMap::new(),
                    windows: Vec::new(),
                })
            }
        }
    }

    fn schedule(&mut self, time: u64, ev: Ev) {
        debug_assert!(time >= self.now);
        self.seq += 1;
        self.heap.push(Scheduled { time, seq: self.seq, ev });
    }

    fn route(&self, host: NodeId, node: NodeId) -> (u64, u64) {
        let r = self.routes.iter().find(|r| r.host == host).expect("routes cover every host");
        r.to[node]
    }

    /// UE to its gateway through `node`: one TTI on the air, then the wires.
    fn uplink(&self, ue: usize, node: NodeId) -> u64 {
        self.tti + self.route(self.ues[ue].host, node).0
    }

    pub(super) fn run(mut self) -> Result<Metrics, SimError> {
        self.sample_channels(0.0);
        let n = self.ues.len();
        for u in 0..n {
            let serving = self.ues[u].eq.serving_set.clone();
            for node in serving {
                self.cells[self.ridx[node]].legs.push(Leg::new(u, 0));
            }
            match self.ues[u].flow {
                Flow::Video(ref v) => {
                    let t = v.start;
                    self.schedule(t, Ev::Frame(u));
                }
                _ => {
                    let t = us(self.off.sample(&mut self.rng_traffic));
                    self.schedule(t, Ev::SessionStart(u));
                }
            }
        }
        let per = |s: f64| ((s * 1e6 / self.tti as f64).round() as u64).max(1);
        let (mob, rep, te) = (per(self.cfg.run.mobility_period_s), per(self.cfg.run.report_period_s), per(self.cfg.run.te_period_s));
        let dt = secs(self.tti);
        let mut t: u64 = 0;
        loop {
            self.now = t * self.tti;
            if self.now >= self.end {
                break;
            }
            if self.snapshot.is_none() && self.now >= self.warm {
                self.snapshot = Some(self.collected());
            }
            while self.heap.peek().is_some_and(|s| s.time <= self.now) {
                let s = self.heap.pop().expect("peeked");
                self.handle(s.ev);
            }
            if t > 0 && t.is_multiple_of(mob) {
                self.mobility(self.cfg.run.mobility_period_s);
            }
            if self.cfg.protocol.feedback && t > 0 && t.is_multiple_of(rep) {
                self.buffer_reports();
            }
            if t.is_multiple_of(te) {
                self.te_pending = true;
            }
            if self.te_pending {
                self.te_pending = false;
                self.run_te();
            }
            self.dispatch(dt);
            self.timeouts();
            for c in 0..self.cells.len() {
                self.serve_cell(c);
            }
            t += 1;
        }
        Ok(self.finish())
    }

    fn collected(&self) -> Counters {
        let mut c = self.m.clone();
        for u in &self.ues {
            if let Flow::Fc(f) = &u.flow {
                c.stale_reports += f.ctx.stale_reports;
                c.encoder_ops += f.ctx.repair_ops;
            }
        }
        c.encoder_ops += self.od_ops;
        c
    }

    fn finish(mut self) -> Metrics {
        let totals = self.collected();
        let base = self.snapshot.clone().unwrap_or_else(|| totals.clone());
        let mut in_flight = 0u64;
        for c in &self.cells {
            for l in &c.legs {
                in_flight += (l.queue.len() + l.inbound.len()) as u64;
            }
            in_flight += c.harq.iter().map(|h| h.block.len() as u64).sum::<u64>();
        }
        for s in self.heap.iter() {
            if let Ev::Forwarded { items, .. } = &s.ev {
                in_flight += items.len() as u64;
            }
        }
        let mut video_outage = Vec::new();
        let win = us(self.cfg.traffic.video_session_s);
        let deadline = us(self.cfg.traffic.frame_deadline_s);
        for u in 0..self.ues.len() {
            if let Flow::Video(v) = &self.ues[u].flow {
                for (w, &(frames, missed)) in v.windows.iter().enumerate() {
                    let a = v.start + w as u64 * win;
                    if a < self.warm || a + win + deadline > self.end || frames == 0 {
                        continue;
                    }
                    let o = missed as f64 / frames as f64;
                    video_outage.push(o);
                    self.sessions.push(SessionRecord {
                        ue: u,
                        session: w as u32,
                        start_s: secs(a),
                        end_s: Some(secs(a + win)),
                        outage: Some(o),
                    });
                }
            }
        }
        Metrics {
            seed: self.seed,
            protocol: self.proto.as_str().to_string(),
            completed_sessions: self.ues.iter().map(|u| u.completed).collect(),
            sessions: self.sessions,
            counters: totals.minus(&base),
            totals,
            in_flight,
            redundancy: self.redundancy,
            video_outage,
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::SessionStart(u) => self.start_session(u),
            Ev::Ack { ue, kind, session, block } => self.on_ack(ue, kind, session, block),
            Ev::Purge { ue, node, kind, block } => self.purge(ue, node, kind, block),
            Ev::TcpAck { ue, session, seq } => {
                let now = secs(self.now);
                let u = &mut self.ues[ue];
                if let Flow::Tcp(f) = &mut u.flow {
                    if u.session == session {
                        if let Some(arq) = &mut f.arq {
                            arq.on_ack(seq as u64, now);
                        }
                    }
                }
            }
            Ev::Forwarded { ue, items } => self.on_forwarded(ue, items),
            Ev::OdReport { ue, session, block, missing } => self.on_od_report(ue, session, block, missing),
            Ev::Frame(u) => self.on_frame(u),
            Ev::FrameDeadline { ue, frame } => self.on_frame_deadline(ue, frame),
            Ev::Report { ue, report } => {
                let now = secs(self.now);
                if let Flow::Fc(f) = &mut self.ues[ue].flow {
                    f.ctx.on_buffer_report(&report, now);
                }
            }
        }
    }

    // ---- traffic ----

    fn file_bytes(&self) -> usize {
        (self.cfg.traffic.file_bits / 8.0).round() as usize
    }

    fn start_session(&mut self, u: usize) {
        let bytes = self.file_bytes();
        let p = &self.cfg.protocol;
        let sym_bytes = p.symbol_bytes;
        let max_k = p.max_k;
        let window = p.tcp_window;
        let sym_bits = (sym_bytes * 8) as u32;
        let ue = &mut self.ues[u];
        ue.session += 1;
        ue.active = true;
        let session = ue.session;
        match &mut ue.flow {
            Flow::Fc(f) => {
                let blocks = f.ctx.ingest_len(bytes).expect("validated symbol size");
                f.blocks_left = blocks.len();
                f.rx.clear();
            }
            Flow::Tcp(f) => {
                let total = bytes.div_ceil(sym_bytes) as u64;
                f.arq = Some(ArqState::new(total, TcpDParams { window, ..TcpDParams::default() }));
                f.rx = Some(TcpReceiver::new(total));
            }
            Flow::Od(f) => {
                let layout = segment_layout(bytes, sym_bytes, max_k).expect("validated symbol size");
                f.blocks.clear();
                f.queue.clear();
                f.left = layout.len();
                for (b, l) in layout.iter().enumerate() {
                    let k = l.k as u32;
                    f.blocks.push(OdBlock {
                        rx: BlockRx { k, ..BlockRx::default() },
                        queued: k,
                        next_esi: k,
                        ..OdBlock::default()
                    });
                    for esi in 0..k {
                        f.queue.push_back(Item {
                            ue: u as u32,
                            kind: Kind::OdFc,
                            session,
                            block: b as u32,
                            seq: esi,
                            k,
                            bits: sym_bits,
                            deadline: NO_DEADLINE,
                            harq: false,
                            fwd: true,
                        });
                    }
                }
            }
            Flow::Video(_) => return,
        }
        ue.record = self.sessions.len();
        self.sessions.push(SessionRecord { ue: u, session, start_s: secs(self.now), end_s: None, outage: None });
        if self.proto == ProtocolName::FcMc {
            self.multicast_allocation(u);
        } else {
            self.te_pending = true;
        }
    }

    fn complete_session(&mut self, u: usize) {
        let now = self.now;
        let ue = &mut self.ues[u];
        ue.active = false;
        if now >= self.warm {
            ue.completed += 1;
        }
        if let Some(r) = self.sessions.get_mut(ue.record) {
            r.end_s = Some(secs(now));
        }
        if let Flow::Tcp(f) = &mut ue.flow {
            f.arq = None;
        }
        let t = now + us(self.off.sample(&mut self.rng_traffic)).max(1);
        self.schedule(t, Ev::SessionStart(u));
    }

    fn multicast_allocation(&mut self, u: usize) {
        let rate = self.cfg.protocol.fc_mc_rate_bps;
        let ue = &mut self.ues[u];
        let alloc: Vec<(NodeId, f64)> = ue.eq.serving_set.iter().map(|&n| (n, rate)).collect();
        if let Flow::Fc(f) = &mut ue.flow {
            f.ctx.set_allocation(&alloc);
        }
    }

    /// Whether a new symbol raises the rank of a block holding `rank` of `k`.
    fn independent(&mut self, k: u32, rank: u32, repairs: u32, systematic: bool) -> bool {
        let gap = k - rank;
        if (systematic && repairs == 0) || gap > 3 {
            return true;
        }
        self.rng_rank.random::<f64>() >= 256f64.powi(-(gap as i32))
    }

    // ---- dispatch from the gateway ----

    fn dispatch(&mut self, dt: f64) {
        let now_s = secs(self.now);
        for u in 0..self.ues.len() {
            if !self.ues[u].active {
                continue;
            }
            let session = self.ues[u].session;
            let bits = (self.cfg.protocol.symbol_bytes * 8) as u32;
            let fwd = self.mode == HandoverMode::Forward;
            let out: Vec<(NodeId, Item)> = match &mut self.ues[u].flow {
                Flow::Fc(f) => f
                    .ctx
                    .dispatch_tick(dt)
                    .into_iter()
                    .map(|(n, s)| {
                        (n, Item {
                            ue: u as u32,
                            kind: Kind::Fc,
                            session,
                            block: s.block_id,
                            seq: s.esi,
                            k: s.k,
                            bits,
                            deadline: NO_DEADLINE,
                            harq: false,
                            fwd,
                        })
                    })
                    .collect(),
                Flow::Tcp(f) => {
                    let Some(arq) = f.arq.as_mut() else { continue };
                    f.shaper.tick(dt, bits as f64, || arq.next_to_send(now_s)).into_iter().map(|(n, seq)| {
                        (n, Item {
                            ue: u as u32,
                            kind: Kind::Tcp,
                            session,
                            block: 0,
                            seq: seq as u32,
                            k: 0,
                            bits,
                            deadline: NO_DEADLINE,
                            harq: true,
                            fwd,
                        })
                    })
                    .collect()
                }
                Flow::Od(f) => {
                    let q = &mut f.queue;
                    let out = f.shaper.tick(dt, bits as f64, || q.pop_front());
                    for (_, it) in &out {
                        let b = &mut f.blocks[it.block as usize];
                        b.queued -= 1;
                        b.outstanding += 1;
                    }
                    out.into_iter().map(|(n, it)| (n, Item { fwd, ..it })).collect()
                }
                Flow::Video(_) => continue,
            };
            for (node, item) in out {
                self.send(u, node, item, false);
            }
        }
    }

    /// Puts `item` on the wire from the UE's gateway to `node`.
    fn send(&mut self, u: usize, node: NodeId, item: Item, prio: bool) {
        let (lat, hops) = self.route(self.ues[u].host, node);
        self.m.dispatched += 1;
        self.m.backhaul_bytes += item.bits as u64 / 8 * hops;
        let c = self.ridx[node];
        let arrive = self.now + lat;
        match self.cells[c].leg(u) {
            Some(leg) => {
                let it = if prio { Item { fwd: item.fwd, ..item } } else { item };
                if prio {
                    // marks the item for the head of the queue on arrival
                    leg.inbound.push_back((arrive | PRIO_BIT, it));
                } else {
                    leg.inbound.push_back((arrive, it));
                }
            }
            None => {
                self.m.dropped += 1;
                self.resolved(item);
            }
        }
    }

    fn timeouts(&mut self) {
        let now = secs(self.now);
        for ue in &mut self.ues {
            if let Flow::Tcp(TcpFlow { arq: Some(arq), .. }) = &mut ue.flow {
                if arq.timer_deadline().is_some_and(|d| d <= now + 1e-12) {
                    arq.on_timeout(now);
                }
            }
        }
    }

    // ---- radio ----

    fn serve_cell(&mut self, c: usize) {
        let now = self.now;
        let cap = self.cfg.protocol.radio_buffer_bytes as u64 * 8;
        let mut stranded: Vec<(usize, Item)> = Vec::new();
        let mut spoiled: Vec<(Item, Fate)> = Vec::new();
        for leg in &mut self.cells[c].legs {
            while leg.inbound.front().is_some_and(|(t, _)| t & !PRIO_BIT <= now) {
                let (t, it) = leg.inbound.pop_front().expect("peeked");
                if leg.released {
                    stranded.push((leg.ue, it));
                } else if it.deadline <= now {
                    spoiled.push((it, Fate::Expired));
                } else if leg.queued_bits + it.bits as u64 > cap {
                    spoiled.push((it, Fate::Dropped));
                } else {
                    leg.queued_bits += it.bits as u64;
                    if t & PRIO_BIT != 0 {
                        leg.queue.insert(leg.prio, it);
                        leg.prio += 1;
                    } else {
                        leg.queue.push_back(it);
                    }
                }
            }
        }
        for (it, fate) in spoiled {
            self.fate(it, fate);
        }
        if !stranded.is_empty() {
            let node = self.radios[c].id;
            self.strand(node, stranded);
        }
        self.cells[c].legs.retain(|l| !(l.released && l.inbound.is_empty() && l.queue.is_empty()));

        let now_s = secs(now);
        let harq_p = self.cfg.protocol.harq;
        // a due retransmission takes the TTI
        let due = self.cells[c]
            .harq
            .iter()
            .enumerate()
            .filter(|(_, h)| h.next_retx <= now_s + 1e-9)
            .min_by(|a, b| a.1.next_retx.total_cmp(&b.1.next_retx).then(a.1.ue_id.cmp(&b.1.ue_id)))
            .map(|(i, _)| i);
        if let Some(i) = due {
            self.m.busy_ttis += 1;
            self.m.harq_retx += 1;
            let mut h = self.cells[c].harq.swap_remove(i);
            let node = self.radios[c].id;
            let Some(link) = self.ues[h.ue_id].link(node).copied() else {
                for it in h.block {
                    self.fate(it, Fate::Lost);
                }
                return;
            };
            match harq_transmit(&mut self.rng_air, true, h.attempts, link.est_db, link.true_db, now_s, &harq_p) {
                HarqOutcome::Delivered { .. } => {
                    for it in h.block {
                        self.deliver(node, it);
                    }
                }
                HarqOutcome::Retry { at } => {
                    h.attempts += 1;
                    h.next_retx = at;
                    self.cells[c].harq.push(h);
                }
                HarqOutcome::Failed => {
                    for it in h.block {
                        self.fate(it, Fate::Lost);
                    }
                }
            }
            return;
        }

        let node = self.radios[c].id;
        let pf = self.cfg.protocol.scheduler == SchedulerPolicy::ProportionalFair;
        let mut best: Option<(f64, usize, usize)> = None;
        for (li, leg) in self.cells[c].legs.iter().enumerate() {
            if leg.released || leg.queue.is_empty() || leg.ready_at > now {
                continue;
            }
            let Some(link) = self.ues[leg.ue].link(node) else { continue };
            let metric = if pf { link.est_rate / leg.pf_avg.max(1.0) } else { link.est_rate };
            let better = match best {
                None => true,
                Some((m, _, ue)) => metric > m || (metric == m && leg.ue < ue),
            };
            if better {
                best = Some((metric, li, leg.ue));
            }
        }
        let tti_s = secs(self.tti);
        if pf {
            let served = best.map(|b| b.1);
            for (li, leg) in self.cells[c].legs.iter_mut().enumerate() {
                let r = if Some(li) == served { self.ues[leg.ue].link(node).map_or(0.0, |l| l.est_rate) } else { 0.0 };
                leg.pf_avg = 0.99 * leg.pf_avg + 0.01 * r;
            }
        }
        let Some((_, li, u)) = best else { return };
        self.m.busy_ttis += 1;
        let link = *self.ues[u].link(node).expect("checked above");
        let mut tb: Vec<Item> = Vec::new();
        let mut expired: Vec<Item> = Vec::new();
        {
            let leg = &mut self.cells[c].legs[li];
            leg.carry += link.est_rate * tti_s;
            while let Some(front) = leg.queue.front() {
                if front.deadline <= now {
                    expired.push(leg.pop().expect("front exists"));
                    continue;
                }
                if (front.bits as f64) > leg.carry {
                    break;
                }
                let it = leg.pop().expect("front exists");
                leg.carry -= it.bits as f64;
                tb.push(it);
            }
            if leg.queue.is_empty() {
                leg.carry = 0.0;
            }
        }
        for it in expired {
            self.fate(it, Fate::Expired);
        }
        if tb.is_empty() {
            return;
        }
        let harq_on = tb.iter().any(|i| i.harq);
        let pe = harq_error_probability(link.est_db, link.true_db, 0, &harq_p);
        if self.rng_air.random::<f64>() >= pe {
            for it in tb {
                self.deliver(node, it);
            }
        } else if harq_on && harq_p.max_retx > 0 {
            self.cells[c].harq.push(HarqProcess {
                node_id: node,
                ue_id: u,
                block: tb,
                attempts: 1,
                next_retx: now_s + harq_p.spacing_s,
                first_tx: now_s,
            });
        } else {
            for it in tb {
                self.fate(it, Fate::Lost);
            }
        }
    }

    fn fate(&mut self, it: Item, f: Fate) {
        match f {
            Fate::Lost => self.m.lost += 1,
            Fate::Dropped => self.m.dropped += 1,
            Fate::Expired => self.m.expired += 1,
        }
        self.resolved(it);
    }

    /// Bookkeeping for an on-demand symbol that will not reach the UE.
    fn resolved(&mut self, it: Item) {
        if it.kind != Kind::OdFc {
            return;
        }
        let u = it.ue as usize;
        let ue = &mut self.ues[u];
        if ue.session != it.session || !ue.active {
            return;
        }
        let Flow::Od(f) = &mut ue.flow else { return };
        let b = &mut f.blocks[it.block as usize];
        b.outstanding = b.outstanding.saturating_sub(1);
        if b.outstanding == 0 && b.queued == 0 && !b.rx.decoded {
            let missing = b.rx.k - b.rx.rank;
            let node = ue.primary().unwrap_or(self.radios[0].id);
            let t = self.now + self.uplink(u, node);
            self.schedule(t, Ev::OdReport { ue: u, session: it.session, block: it.block, missing });
        }
    }

    fn deliver(&mut self, node: NodeId, it: Item) {
        self.m.delivered += 1;
        let u = it.ue as usize;
        let up = self.now + self.uplink(u, node);
        let ue = &mut self.ues[u];
        let current = ue.session == it.session && ue.active;
        match it.kind {
            Kind::Fc => {
                let Flow::Fc(f) = &mut ue.flow else { return };
                if !current {
                    self.m.post_decode += 1;
                    return;
                }
                let b = f.rx.entry(it.block).or_insert_with(|| BlockRx { k: it.k, ..BlockRx::default() });
                if b.decoded {
                    self.m.post_decode += 1;
                    return;
                }
                if !b.seen.insert(it.seq) {
                    self.m.duplicates += 1;
                    return;
                }
                let systematic = it.seq < it.k;
                if !systematic {
                    b.repairs += 1;
                }
                let (k, rank, rep) = (b.k, b.rank, b.repairs);
                if !self.independent(k, rank, rep, systematic) {
                    return;
                }
                let Flow::Fc(f) = &mut self.ues[u].flow else { unreachable!() };
                let b = f.rx.get_mut(&it.block).expect("inserted above");
                b.rank += 1;
                if b.rank == b.k {
                    b.decoded = true;
                    f.blocks_left -= 1;
                    let done = f.blocks_left == 0;
                    self.schedule(up, Ev::Ack { ue: u, kind: Kind::Fc, session: it.session, block: it.block });
                    if done {
                        self.complete_session(u);
                    }
                }
            }
            Kind::Tcp => {
                let Flow::Tcp(f) = &mut ue.flow else { return };
                if !current {
                    self.m.post_decode += 1;
                    return;
                }
                let rx = f.rx.as_mut().expect("active TCP session has a receiver");
                if !rx.on_packet(it.seq as u64) {
                    self.m.duplicates += 1;
                }
                let done = rx.is_complete();
                self.schedule(up, Ev::TcpAck { ue: u, session: it.session, seq: it.seq });
                if done {
                    self.complete_session(u);
                }
            }
            Kind::OdFc => {
                let Flow::Od(f) = &mut ue.flow else { return };
                if !current {
                    self.m.post_decode += 1;
                    return;
                }
                let b = &mut f.blocks[it.block as usize].rx;
                let mut gain = false;
                if b.decoded {
                    self.m.post_decode += 1;
                } else if !b.seen.insert(it.seq) {
                    self.m.duplicates += 1;
                } else {
                    let systematic = it.seq < it.k;
                    if !systematic {
                        b.repairs += 1;
                    }
                    let (k, rank, rep) = (b.k, b.rank, b.repairs);
                    gain = self.independent(k, rank, rep, systematic);
                }
                let Flow::Od(f) = &mut self.ues[u].flow else { unreachable!() };
                let b = &mut f.blocks[it.block as usize].rx;
                if gain {
                    b.rank += 1;
                    if b.rank == b.k {
                        b.decoded = true;
                        f.left -= 1;
                        if f.left == 0 {
                            self.complete_session(u);
                            return;
                        }
                    }
                }
                self.resolved(it);
            }
            Kind::Video => {
                let Flow::Video(v) = &mut ue.flow else { return };
                let Some(fr) = v.frames.get_mut(&it.block) else {
                    self.m.post_decode += 1;
                    return;
                };
                if fr.decoded {
                    self.m.post_decode += 1;
                    return;
                }
                if !fr.seen.insert(it.seq) {
                    self.m.duplicates += 1;
                    return;
                }
                let systematic = it.seq < it.k;
                if !systematic {
                    fr.repairs += 1;
                }
                let (k, rank, rep, coded) = (fr.k, fr.rank, fr.repairs, fr.coded);
                let gain = !coded || self.independent(k, rank, rep, systematic);
                let Flow::Video(v) = &mut self.ues[u].flow else { unreachable!() };
                let fr = v.frames.get_mut(&it.block).expect("looked up above");
                if gain {
                    fr.rank += 1;
                    if fr.rank == fr.k {
                        fr.decoded = true;
                        if fr.coded {
                            self.schedule(up, Ev::Ack { ue: u, kind: Kind::Video, session: 0, block: it.block });
                        }
                    }
                }
            }
        }
    }

    fn on_ack(&mut self, u: usize, kind: Kind, session: u32, block: u32) {
        let now_s = secs(self.now);
        if kind == Kind::Fc {
            let Flow::Fc(f) = &mut self.ues[u].flow else { return };
            let Some(rec) = f.ctx.on_decode_ack(block, now_s) else { return };
            if self.now >= self.warm {
                self.redundancy.push(rec.redundancy);
            }
            let _ = session;
        }
        let host = self.ues[u].host;
        let nodes: Vec<NodeId> =
            self.cells.iter().enumerate().filter(|(_, c)| c.legs.iter().any(|l| l.ue == u)).map(|(i, _)| self.radios[i].id).collect();
        for node in nodes {
            let t = self.now + self.route(host, node).0;
            self.schedule(t, Ev::Purge { ue: u, node, kind, block });
        }
    }

    fn purge(&mut self, u: usize, node: NodeId, kind: Kind, block: u32) {
        let c = self.ridx[node];
        let Some(leg) = self.cells[c].leg(u) else { return };
        let hit = |it: &Item| it.kind == kind && it.block == block;
        let mut n = 0u64;
        let mut kept = VecDeque::with_capacity(leg.queue.len());
        let mut prio = 0;
        for (i, it) in leg.queue.drain(..).enumerate() {
            if hit(&it) {
                n += 1;
                leg.queued_bits -= it.bits as u64;
            } else {
                if i < leg.prio {
                    prio += 1;
                }
                kept.push_back(it);
            }
        }
        leg.queue = kept;
        leg.prio = prio;
        let before = leg.inbound.len();
        leg.inbound.retain(|(_, it)| !hit(it));
        n += (before - leg.inbound.len()) as u64;
        if leg.queue.is_empty() {
            leg.carry = 0.0;
        }
        self.m.purged += n;
    }

    // ---- mobility and handover ----

    fn sample_channels(&mut self, dt: f64) {
        if dt > 0.0 {
            let mut eqs: Vec<UserEquipment> = self.ues.iter().map(|u| u.eq.clone()).collect();
            step_mobility(&mut eqs, dt, &self.strip);
            for (u, e) in self.ues.iter_mut().zip(eqs) {
                u.eq.position = e.position;
            }
        }
        let p = &self.cfg.radio;
        let active: Vec<bool> = self.cells.iter().map(Cell::backlogged).collect();
        let n = self.n_paths.max(1);
        for ue in &mut self.ues {
            let pos = ue.eq.position;
            let rx: Vec<f64> = self.radios.iter().map(|r| dbm_to_mw(rx_power_dbm(r, pos, p))).collect();
            let serving = best_n_cells(pos, &self.radios, n, p);
            let mut links = Vec::with_capacity(serving.len());
            for &node in &serving {
                let ri = self.ridx[node];
                let r = &self.radios[ri];
                let interference: f64 = (0..self.radios.len())
                    .filter(|&j| j != ri && active[j] && self.radios[j].reuse_group == r.reuse_group)
                    .map(|j| rx[j])
                    .sum();
                let noise = dbm_to_mw(noise_dbm(r.bandwidth_hz, p));
                let true_db = mw_to_dbm(rx[ri] / (noise + interference));
                let est_db = ue.links.iter().find(|l| l.node == node).map_or(true_db, |l| l.true_db);
                let est_rate = rate_from_sinr(est_db, r.bandwidth_hz, 1.0, p.se_cap, p.mimo_gain);
                links.push(Link { node, est_db, true_db, est_rate });
            }
            ue.links = links;
            ue.eq.serving_set = serving;
        }
    }

    fn mobility(&mut self, dt: f64) {
        let old: Vec<Vec<NodeId>> = self.ues.iter().map(|u| u.eq.serving_set.clone()).collect();
        self.sample_channels(dt);
        let now_s = secs(self.now);
        let delay = self.cfg.protocol.control_delay_s;
        for u in 0..self.ues.len() {
            let new = self.ues[u].eq.serving_set.clone();
            let actions = handover_execute(&old[u], &new, self.mode, now_s, delay);
            if actions.is_empty() {
                continue;
            }
            for a in actions {
                match a {
                    HandoverAction::Release { node, mode } => {
                        self.m.handovers += 1;
                        self.release(u, node, mode);
                    }
                    HandoverAction::Join { node, ready_at } => {
                        let c = self.ridx[node];
                        let ready = us(ready_at);
                        match self.cells[c].leg(u) {
                            Some(leg) => {
                                leg.released = false;
                                leg.ready_at = ready;
                            }
                            None => self.cells[c].legs.push(Leg::new(u, ready)),
                        }
                    }
                }
            }
            if self.proto == ProtocolName::FcMc && self.ues[u].active {
                self.multicast_allocation(u);
            }
            if self.cfg.protocol.te_on_handover {
                self.te_pending = true;
            }
        }
    }

    fn release(&mut self, u: usize, node: NodeId, mode: HandoverMode) {
        let c = self.ridx[node];
        let cell = &mut self.cells[c];
        let Some(leg) = cell.leg(u) else { return };
        leg.released = true;
        leg.carry = 0.0;
        leg.prio = 0;
        leg.queued_bits = 0;
        let items: Vec<Item> = leg.queue.drain(..).collect();
        let mut lost: Vec<Item> = Vec::new();
        cell.harq.retain(|h| {
            if h.ue_id == u {
                lost.extend(h.block.iter().copied());
                false
            } else {
                true
            }
        });
        for it in lost {
            self.fate(it, Fate::Lost);
        }
        let _ = mode;
        self.strand(node, items.into_iter().map(|it| (u, it)).collect());
    }

    /// Items left at a node the UE no longer uses: forwarded to the gateway
    /// when both the mode and the item allow it, dropped otherwise.
    fn strand(&mut self, node: NodeId, items: Vec<(usize, Item)>) {
        let mut by_ue: Vec<(usize, Vec<Item>)> = Vec::new();
        for (u, it) in items {
            if self.mode == HandoverMode::Forward && it.fwd {
                match by_ue.iter_mut().find(|(x, _)| *x == u) {
                    Some((_, v)) => v.push(it),
                    None => by_ue.push((u, vec![it])),
                }
            } else {
                self.fate(it, Fate::Dropped);
            }
        }
        for (u, items) in by_ue {
            let (lat, hops) = self.route(self.ues[u].host, node);
            self.m.forwarded += items.len() as u64;
            self.m.backhaul_bytes += items.iter().map(|i| i.bits as u64 / 8).sum::<u64>() * hops;
            let t = self.now + lat;
            self.schedule(t, Ev::Forwarded { ue: u, items });
        }
    }

    fn on_forwarded(&mut self, u: usize, items: Vec<Item>) {
        let ue = &mut self.ues[u];
        let current = |it: &Item| ue.active && it.session == ue.session;
        if let Flow::Fc(f) = &mut ue.flow {
            let refs: Vec<SymbolRef> = items
                .iter()
                .filter(|it| it.session == ue.session)
                .map(|it| SymbolRef { block_id: it.block, esi: it.seq, k: it.k })
                .collect();
            let _ = f.ctx.on_handover_forward(refs);
            return;
        }
        let keep: Vec<Item> = items
            .into_iter()
            .filter(|it| match it.kind {
                Kind::Video => it.deadline > self.now,
                _ => current(it),
            })
            .collect();
        let Some(primary) = self.ues[u].primary() else { return };
        for it in keep {
            self.send(u, primary, it, true);
        }
    }

    // ---- on-demand repair ----

    fn on_od_report(&mut self, u: usize, session: u32, block: u32, missing: u32) {
        let min_block = self.cfg.protocol.od_fc_min_block as u32;
        let bits = (self.cfg.protocol.symbol_bytes * 8) as u32;
        let ue = &mut self.ues[u];
        if !ue.active || ue.session != session || missing == 0 {
            return;
        }
        let Flow::Od(f) = &mut ue.flow else { return };
        let b = &mut f.blocks[block as usize];
        if b.rx.decoded {
            return;
        }
        let padding = min_block.saturating_sub(missing).min(b.rx.rank);
        let k_virtual = (missing + padding) as u64;
        self.od_ops += k_virtual * missing as u64;
        for _ in 0..missing {
            let esi = b.next_esi;
            b.next_esi += 1;
            b.queued += 1;
            f.queue.push_back(Item {
                ue: u as u32,
                kind: Kind::OdFc,
                session,
                block,
                seq: esi,
                k: b.rx.k,
                bits,
                deadline: NO_DEADLINE,
                harq: false,
                fwd: true,
            });
        }
    }

    // ---- video ----

    fn on_frame(&mut self, u: usize) {
        let tr = &self.cfg.traffic;
        let Flow::Video(v) = &mut self.ues[u].flow else { return };
        let f = v.next_frame;
        v.next_frame += 1;
        let frame_time = v.start + us(f as f64 / tr.fps);
        let next = v.start + us((f + 1) as f64 / tr.fps);
        let gop = tr.gop as u64;
        let p_bits = tr.video_rate_bps * tr.gop as f64 / tr.fps / (tr.i_to_p_ratio + (tr.gop - 1) as f64);
        let is_i = f % gop == 0;
        let bits = if is_i { p_bits * tr.i_to_p_ratio } else { p_bits };
        let sym_bits = (tr.video_symbol_bytes * 8) as u32;
        let k = ((bits / sym_bits as f64).ceil() as u32).max(1);
        let deadline = frame_time + us(tr.frame_deadline_s);
        let win = us(tr.video_session_s);
        let w = ((frame_time - v.start) / win) as usize;
        if v.windows.len() <= w {
            v.windows.resize(w + 1, (0, 0));
        }
        let fc_video = self.proto == ProtocolName::FcMpVideo;
        let ctx = SdpContext {
            high_load: false,
            unit_symbols: k as usize,
            fc_small_block_threshold: self.cfg.protocol.fc_small_block_threshold,
        };
        let profile = sdp_select(if is_i { SdpClass::VideoI } else { SdpClass::VideoP }, &ctx);
        let coded = fc_video && profile.fc;
        let (harq, fwd) = if fc_video {
            (profile.harq, profile.handover_forwarding)
        } else {
            (true, self.mode == HandoverMode::Forward)
        };
        let n = if coded { fixed_rate_count(k as usize, tr.fixed_rate_ratio).unwrap_or(k as usize) as u32 } else { k };
        v.frames.insert(
            f as u32,
            FrameRx { k, rank: 0, repairs: 0, seen: HashSet::new(), coded, decoded: false, at: frame_time },
        );
        let item = |seq| Item {
            ue: u as u32,
            kind: Kind::Video,
            session: 0,
            block: f as u32,
            seq,
            k,
            bits: sym_bits,
            deadline,
            harq,
            fwd,
        };
        let mut out: Vec<(NodeId, Item)> = Vec::with_capacity(n as usize);
        if coded && !v.alloc.is_empty() {
            // smooth weighted round robin over the TE path rates
            let total: f64 = v.alloc.iter().map(|a| a.1).sum();
            let weights: Vec<f64> = if total > 0.0 {
                v.alloc.iter().map(|a| a.1 / total).collect()
            } else {
                vec![1.0 / v.alloc.len() as f64; v.alloc.len()]
            };
            if v.credit.len() != weights.len() {
                v.credit = vec![0.0; weights.len()];
            }
            for esi in 0..n {
                for (c, w) in v.credit.iter_mut().zip(&weights) {
                    *c += w;
                }
                let pick = (0..weights.len()).max_by(|&a, &b| v.credit[a].total_cmp(&v.credit[b]).then(b.cmp(&a))).expect("nonempty");
                v.credit[pick] -= 1.0;
                out.push((v.alloc[pick].0, item(esi)));
            }
        } else if let Some(p) = self.ues[u].primary() {
            for esi in 0..n {
                out.push((p, item(esi)));
            }
        }
        for (node, it) in out {
            self.send(u, node, it, false);
        }
        self.schedule(deadline, Ev::FrameDeadline { ue: u, frame: f as u32 });
        if next < self.end {
            self.schedule(next.max(self.now), Ev::Frame(u));
        }
    }

    fn on_frame_deadline(&mut self, u: usize, frame: u32) {
        let win = us(self.cfg.traffic.video_session_s);
        let Flow::Video(v) = &mut self.ues[u].flow else { return };
        let Some(fr) = v.frames.remove(&frame) else { return };
        let w = ((fr.at - v.start) / win) as usize;
        let slot = &mut v.windows[w];
        slot.0 += 1;
        if !fr.decoded {
            slot.1 += 1;
        }
    }

    // ---- traffic engineering ----

    fn run_te(&mut self) {
        if matches!(self.proto, ProtocolName::FcMc | ProtocolName::Udp1Path) {
            return;
        }
        let video = self.cfg.traffic.class == TrafficKind::Video;
        let mut commodities = Vec::new();
        let mut paths: Vec<Path> = Vec::new();
        for (u, ue) in self.ues.iter().enumerate() {
            if !video && !ue.active {
                continue;
            }
            let c = Commodity {
                flow_id: u,
                source: ue.host,
                ue_id: u,
                class: if video { TrafficClass::Video } else { TrafficClass::BestEffort },
                demand_bps: self.cfg.traffic.video_rate_bps,
            };
            let serving: Vec<(NodeId, f64)> = ue.links.iter().map(|l| (l.node, l.est_rate)).collect();
            match candidate_paths(&self.graph, &c, &serving, self.n_paths.max(1)) {
                Ok(p) => {
                    paths.extend(p);
                    commodities.push(c);
                }
                Err(_) => self.m.te_failures += 1,
            }
        }
        if commodities.is_empty() {
            return;
        }
        self.m.te_runs += 1;
        let params = TeParams { be_ceiling_bps: self.cfg.protocol.be_ceiling_bps, ..TeParams::default() };
        let now_s = secs(self.now);
        let sol = if video {
            solve_max_min(&commodities, &paths, &self.graph, &params, now_s)
        } else {
            solve_max_sum(&commodities, &paths, &self.graph, &params, now_s)
        };
        let rates: Vec<f64> = match sol {
            Ok(s) => paths.iter().map(|p| s.path_rate(p.flow_id, p.path_id)).collect(),
            Err(_) => {
                self.m.te_failures += 1;
                fallback_rates(&paths, params.be_ceiling_bps)
            }
        };
        for c in &commodities {
            let alloc: Vec<(NodeId, f64)> =
                paths.iter().zip(&rates).filter(|(p, _)| p.flow_id == c.flow_id).map(|(p, &r)| (p.radio_node, r)).collect();
            match &mut self.ues[c.flow_id].flow {
                Flow::Fc(f) => f.ctx.set_allocation(&alloc),
                Flow::Tcp(f) => f.shaper.set(&alloc),
                Flow::Od(f) => f.shaper.set(&alloc),
                Flow::Video(v) => v.alloc = alloc,
            }
        }
    }

    fn buffer_reports(&mut self) {
        for u in 0..self.ues.len() {
            if !self.ues[u].active {
                continue;
            }
            let Flow::Fc(f) = &self.ues[u].flow else { continue };
            let nodes: Vec<NodeId> = f.ctx.paths().iter().map(|p| p.node).collect();
            let host = self.ues[u].host;
            for node in nodes {
                let c = self.ridx[node];
                let queued = self.cells[c].legs.iter().find(|l| l.ue == u).map_or(0, |l| l.queued_bits / 8);
                let report = BufferStatusReport { node_id: node, flow_id: u, queued_bytes: queued, timestamp: secs(self.now) };
                let t = self.now + self.route(host, node).0;
                self.schedule(t, Ev::Report { ue: u, report });
            }
        }
    }
}

const PRIO_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Lost,
    Dropped,
    Expired,
}

/// Peak rate split evenly among the flows sharing a node, capped per flow.
fn fallback_rates(paths: &[Path], ceiling: f64) -> Vec<f64> {
    let mut per_node: HashMap<NodeId, usize> = HashMap::new();
    for p in paths {
        *per_node.entry(p.radio_node).or_default() += 1;
    }
    let mut rates: Vec<f64> = paths.iter().map(|p| p.peak_rate_bps / per_node[&p.radio_node] as f64).collect();
    let mut flows: Vec<usize> = paths.iter().map(|p| p.flow_id).collect();
    flows.dedup();
    for f in flows {
        let total: f64 = paths.iter().zip(&rates).filter(|(p, _)| p.flow_id == f).map(|(_, r)| r).sum();
        if total > ceiling {
            for (p, r) in paths.iter().zip(rates.iter_mut()) {
                if p.flow_id == f {
                    *r *= ceiling / total;
                }
            }
        }
    }
    rates
}

/// Gateway and routers are the candidate hosts; each UE's trajectory is its
/// primary serving node once per second over the run.
fn place_hosts(
    cfg: &ScenarioConfig,
    graph: &NetworkGraph,
    radios: &[RadioNode],
    strip: &Strip,
    eqs: &[UserEquipment],
) -> Result<Vec<NodeId>, SimError> {
    let hosts: Vec<NodeId> =
        graph.nodes().iter().filter(|n| matches!(n.kind, NodeKind::Gateway | NodeKind::Router)).map(|n| n.id).collect();
    let steps = cfg.run.duration_s.ceil() as usize;
    let mut moving = eqs.to_vec();
    let mut trajs: Vec<UeTrajectory> = eqs.iter().map(|e| UeTrajectory { ue_id: e.id, serving: Vec::new() }).collect();
    for _ in 0..steps.max(1) {
        for (t, e) in trajs.iter_mut().zip(&moving) {
            t.serving.push(best_n_cells(e.position, radios, 1, &cfg.radio)[0]);
        }
        step_mobility(&mut moving, 1.0, strip);
    }
    place_vusgw(graph, &hosts, &trajs, &PlacementWeights::default()).map_err(|e| SimError::Setup(e.to_string()))
}
