use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand_chacha::ChaCha8Rng;

use super::{
    client_feedback, inject_delay, ClientModel, Diagnostics, EventLogRow, FrameReceipt, LinkModel,
    LtLogRow, RunOutput, ServerMarks, SimConfig, StLogRow,
};
use crate::baselines::{edf_next_packet, rr_allocate, Allocation, SchedulerPolicy};
use crate::delay::FlowDelayState;
use crate::forwarder::{wire_bytes, DwrrState, Port, Transmission};
use crate::lt::{allocate_lt, ArrivalServiceStats, MomentWindow, SmoothedMoments, DepartingFrame, FlowLtInput, LtDecision, LtParams};
use crate::metrics::{summarize, MetricsRecord, RunLabel};
use crate::queue::{departing_set, FrameQueue, QueuedFrame};
use crate::rng::{stream, NoiseSource};
use crate::st::{equal_split, schedule_st, PendingFrame, StFlowInput, StParams};
use crate::time::Micros;
use crate::video::{FlowTrace, FrameId, FrameMeta};
use crate::wire::{decode, encode, MetadataOption};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Send { flow: usize },
    Arrival { flow: usize, index: usize, option: [u8; 12] },
    LinkFree,
    Report,
    Tick,
}

impl Kind {
    fn priority(&self) -> u8 {
        match self {
            Kind::Send { .. } => 0,
            Kind::LinkFree => 1,
            Kind::Arrival { .. } => 2,
            Kind::Report => 3,
            Kind::Tick => 4,
        }
    }

    fn flow(&self) -> usize {
        match self {
            Kind::Send { flow } | Kind::Arrival { flow, .. } => *flow,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Event {
    time: Micros,
    seq: u64,
    kind: Kind,
}

impl Event {
    fn key(&self) -> (Micros, u8, usize, u64) {
        (self.time, self.kind.priority(), self.kind.flow(), self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, Default)]
struct Accum {
    dropped_gamma: f64,
    total_gamma: f64,
    frames_dropped: u64,
    frames_fwd: u64,
    bytes_fwd: u64,
    frames_late: u64,
    rtt_sum_ms: f64,
    rtt_n: u64,
    q_sum_ms: f64,
    q_n: u64,
}

struct Flow {
    trace: FlowTrace,
    seq_of: HashMap<FrameId, usize>,
    next_send: usize,
    in_flight: u64,
    server: ServerMarks,
    client: ClientModel,
    jitter: ChaCha8Rng,
    delay: FlowDelayState,
    /// Inter-arrival times at the bottleneck in the current long interval,
    /// seconds.
    arrivals: MomentWindow<f64>,
    /// Per-frame service times at the allocated rate, seconds.
    service: MomentWindow<f64>,
    arrival_moments: SmoothedMoments<f64>,
    service_moments: SmoothedMoments<f64>,
    last_arrival: Option<Micros>,
    v_prev: Option<Micros>,
    v_revised: Option<Micros>,
    arrived: u64,
    forwarded: u64,
    dropped: u64,
    acc: Accum,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    policy: SchedulerPolicy,
    link: LinkModel,
    flows: Vec<Flow>,
    ports: Vec<Port>,
    dwrr: DwrrState,
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    now: Micros,
    link_busy: bool,
    link_free_ns: u128,
    continuing: bool,
    on_wire: Option<Transmission>,
    lt: LtDecision,
    rates: Vec<u64>,
    ticks: u64,
    interval: u32,
    finished: bool,
    out: RunOutput,
}

/// Runs the simulation over prepared traces (one per flow, in flow order).
pub fn run_traces(cfg: &SimConfig, traces: Vec<FlowTrace>) -> RunOutput {
    let mut sim = Sim::new(cfg, traces);
    sim.run();
    sim.finish()
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, traces: Vec<FlowTrace>) -> Self {
        let policy = SchedulerPolicy::new(cfg.policy, cfg.lti(), cfg.sti());
        let link = LinkModel::from_config(cfg);
        let prior = Micros::from_ms_f64(cfg.prior_external_delay_ms);
        let n = traces.len();
        let flows = traces
            .into_iter()
            .enumerate()
            .map(|(f, trace)| {
                let seq_of = trace.frames.iter().enumerate().map(|(i, m)| (m.id, i)).collect();
                let start = trace.frames.first().map_or(Micros::ZERO, |m| {
                    m.send_time + m.deadline - Micros::from_ms_f64(cfg.request_delay_ms)
                        - Micros(trace.chunk_duration.as_us() * i64::from(m.id.chunk))
                });
                Flow {
                    seq_of,
                    next_send: 0,
                    in_flight: 0,
                    server: ServerMarks::default(),
                    client: ClientModel {
                        request_lead: cfg.traffic.request_lead,
                        chunk_duration: trace.chunk_duration,
                        start,
                        ack_delay: Micros::from_ms_f64(cfg.request_delay_ms),
                        received: 0,
                        late: 0,
                    },
                    jitter: stream(cfg.seed, f as u32, NoiseSource::Jitter),
                    delay: FlowDelayState::new(cfg.alpha, prior, cfg.delay_record_capacity)
                        .expect("alpha validated"),
                    arrivals: MomentWindow::new(),
                    service: MomentWindow::new(),
                    arrival_moments: SmoothedMoments::new(cfg.alpha).expect("alpha validated"),
                    service_moments: SmoothedMoments::new(cfg.alpha).expect("alpha validated"),
                    last_arrival: None,
                    v_prev: None,
                    v_revised: None,
                    arrived: 0,
                    forwarded: 0,
                    dropped: 0,
                    acc: Accum::default(),
                    trace,
                }
            })
            .collect();
        let ports = (0..n)
            .map(|_| Port::new(FrameQueue::new(policy.queue_order, cfg.beta)))
            .collect();
        let summary_label = RunLabel::default();
        Sim {
            cfg,
            policy,
            link,
            flows,
            ports,
            dwrr: DwrrState::new(n, cfg.mtu_bytes),
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: Micros::ZERO,
            link_busy: false,
            link_free_ns: 0,
            continuing: false,
            on_wire: None,
            lt: LtDecision::initial(n, link.rate_bps),
            rates: vec![0; n],
            ticks: 0,
            interval: 1,
            finished: false,
            out: RunOutput {
                config: cfg.clone(),
                metrics: Vec::new(),
                summary: summarize(&[], 0, summary_label),
                lt_log: Vec::new(),
                st_log: Vec::new(),
                event_log: Vec::new(),
                diagnostics: Diagnostics::default(),
            },
        }
    }

    fn schedule(&mut self, time: Micros, kind: Kind) {
        self.next_seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.next_seq,
            kind,
        }));
    }

    fn run(&mut self) {
        if self.flows.is_empty() {
            self.finished = true;
            return;
        }
        for f in 0..self.flows.len() {
            if let Some(first) = self.flows[f].trace.frames.first() {
                let t = first.send_time;
                self.schedule(t, Kind::Send { flow: f });
            }
        }
        self.schedule(Micros::ZERO, Kind::Tick);
        self.schedule(self.cfg.lti(), Kind::Report);
        let mut last = Micros(i64::MIN);
        while let Some(Reverse(ev)) = self.heap.pop() {
            let diag = &mut self.out.diagnostics;
            diag.events += 1;
            if ev.time < last {
                diag.time_regressions += 1;
            }
            last = ev.time;
            self.now = ev.time;
            match ev.kind {
                Kind::Send { flow } => self.on_send(flow),
                Kind::Arrival {
                    flow,
                    index,
                    option,
                } => self.on_arrival(flow, index, option),
                Kind::LinkFree => self.on_link_free(),
                Kind::Report => self.on_report(),
                Kind::Tick => self.on_tick(),
            }
            if self.cfg.check_invariants {
                self.check_conservation();
            }
            if self.all_done() {
                if self.interval_started() {
                    self.report();
                }
                self.finished = true;
                break;
            }
        }
        self.out.diagnostics.end_time = self.now;
    }

    fn all_done(&self) -> bool {
        !self.link_busy
            && self.flows.iter().all(|f| f.next_send == f.trace.frames.len() && f.in_flight == 0)
            && self.ports.iter().all(Port::is_idle)
    }

    /// Whether the current report interval has seen any time pass.
    fn interval_started(&self) -> bool {
        let r = self.cfg.lti().as_us();
        self.now.as_us() > i64::from(self.interval - 1) * r
    }

    fn on_send(&mut self, f: usize) {
        let now = self.now;
        let flow = &mut self.flows[f];
        let index = flow.next_send;
        let meta = flow.trace.frames[index];
        flow.next_send += 1;
        let mark = flow.server.stamp(meta.id, now);
        let opt = MetadataOption {
            vr_flag: true,
            frame: meta.id,
            deadline_ms: meta.deadline.floor_ms().max(0) as u32,
            rtt_ms: mark.map_or(0, |(rtt, _)| rtt.ceil_ms().max(0) as u32),
            rtt_ref_offset: mark.map_or(0, |(_, off)| off),
        };
        let option = encode(&opt).unwrap_or_else(|_| {
            // out-of-range ids travel unmarked
            let mut raw = [0u8; 12];
            raw[0] = crate::wire::OPTION_KIND;
            raw
        });
        let arrival = inject_delay(now, &self.link, &mut flow.jitter);
        flow.in_flight += 1;
        let next = flow.trace.frames.get(flow.next_send).map(|m| m.send_time);
        self.schedule(arrival, Kind::Arrival { flow: f, index, option });
        if let Some(t) = next {
            self.schedule(t, Kind::Send { flow: f });
        }
    }

    fn on_arrival(&mut self, f: usize, index: usize, option: [u8; 12]) {
        let now = self.now;
        let wire = wire_bytes(
            self.flows[f].trace.frames[index].size,
            self.cfg.mtu_bytes,
            self.cfg.header_bytes,
        );
        let flow = &mut self.flows[f];
        flow.in_flight -= 1;
        flow.arrived += 1;
        self.out.diagnostics.frames_generated += 1;
        let trace_meta = flow.trace.frames[index];
        let mut meta = FrameMeta {
            rtt_mark: None,
            ..trace_meta
        };
        match decode(&option) {
            Ok(opt) => {
                meta.deadline = Micros::from_ms(i64::from(opt.deadline_ms));
                if opt.rtt_ref_offset > 0 {
                    let own = flow.seq_of.get(&opt.frame).copied().unwrap_or(index);
                    if let Some(reference) = own
                        .checked_sub(usize::from(opt.rtt_ref_offset))
                        .map(|s| flow.trace.frames[s].id)
                    {
                        let rtt = Micros::from_ms(i64::from(opt.rtt_ms));
                        meta.rtt_mark = Some(crate::video::RttMark { rtt, reference });
                        if flow.delay.observe_mark(rtt, reference) == crate::delay::MarkOutcome::Applied {
                            flow.acc.rtt_sum_ms += rtt.as_ms_f64();
                            flow.acc.rtt_n += 1;
                        }
                    }
                }
            }
            Err(_) => self.out.diagnostics.decode_errors += 1,
        }
        if let Some(prev) = flow.last_arrival {
            flow.arrivals.push((now - prev).as_secs_f64().max(0.0));
        }
        flow.last_arrival = Some(now);
        let bound = flow.delay.bound(meta.deadline);
        self.ports[f].queue.push(QueuedFrame::new(meta, now, bound, wire));
        self.try_transmit();
    }

    fn now_ns(&self) -> u128 {
        self.now.as_us().max(0) as u128 * 1000
    }

    fn try_transmit(&mut self) {
        if self.link_busy {
            return;
        }
        let mut drops = Vec::new();
        let tx = match self.policy.allocation {
            Allocation::Urgency => edf_next_packet(
                &mut self.ports,
                self.now,
                self.cfg.mtu_bytes,
                self.cfg.proactive_drop,
                &mut drops,
            ),
            _ => self.dwrr.next_packet(
                &mut self.ports,
                self.now,
                self.cfg.mtu_bytes,
                self.cfg.proactive_drop,
                &mut drops,
            ),
        };
        for (f, frame) in drops {
            self.on_drop(f, frame);
        }
        let Some(tx) = tx else {
            return;
        };
        let start = if self.continuing {
            self.link_free_ns
        } else {
            self.link_free_ns.max(self.now_ns())
        };
        let end = start + u128::from(tx.bytes) * 8 * 1_000_000_000 / u128::from(self.link.rate_bps);
        self.link_free_ns = end;
        self.link_busy = true;
        self.on_wire = Some(tx);
        self.schedule(Micros(end.div_ceil(1000) as i64), Kind::LinkFree);
    }

    fn on_drop(&mut self, f: usize, frame: QueuedFrame) {
        let flow = &mut self.flows[f];
        flow.dropped += 1;
        flow.acc.frames_dropped += 1;
        flow.acc.dropped_gamma += frame.importance();
        flow.acc.total_gamma += frame.importance();
        if self.cfg.log_events {
            self.out.event_log.push(EventLogRow {
                time: self.now,
                flow: f as u32,
                id: frame.id(),
                forwarded: false,
                q_delay: self.now - frame.arrival,
            });
        }
    }

    fn on_link_free(&mut self) {
        self.link_busy = false;
        let now = self.now;
        if let Some(tx) = self.on_wire.take() {
            if let Some(frame) = tx.completes {
                self.on_departure(tx.flow, frame);
            }
        }
        self.continuing = true;
        self.try_transmit();
        self.continuing = false;
        debug_assert!(self.now == now);
    }

    fn on_departure(&mut self, f: usize, frame: QueuedFrame) {
        let now = self.now;
        let rate = match self.policy.allocation {
            Allocation::Urgency => self.link.rate_bps,
            _ => self.rates[f],
        };
        let prop = self.link.propagation;
        let flow = &mut self.flows[f];
        let q = now - frame.arrival;
        flow.delay.record_queuing_delay(frame.id(), q);
        if rate > 0 {
            flow.service.push(f64::from(frame.wire_bytes) * 8.0 / rate as f64);
        }
        flow.forwarded += 1;
        let acc = &mut flow.acc;
        acc.frames_fwd += 1;
        acc.bytes_fwd += u64::from(frame.wire_bytes);
        acc.total_gamma += frame.importance();
        acc.q_sum_ms += q.as_ms_f64();
        acc.q_n += 1;

        let seq = flow.seq_of[&frame.id()];
        let meta = flow.trace.frames[seq];
        let receipt = FrameReceipt {
            id: meta.id,
            send_time: meta.send_time,
            received_at: Some(now + prop),
            playback_deadline: meta.send_time + meta.deadline - flow.client.ack_delay,
        };
        if let Some(ack) = client_feedback(&mut flow.client, &receipt) {
            if !ack.on_time {
                flow.acc.frames_late += 1;
                flow.acc.dropped_gamma += frame.importance();
            }
            flow.server.on_ack(ack);
        }
        if self.cfg.log_events {
            self.out.event_log.push(EventLogRow {
                time: now,
                flow: f as u32,
                id: frame.id(),
                forwarded: true,
                q_delay: q,
            });
        }
    }

    fn on_report(&mut self) {
        self.report();
        let next = self.now + self.cfg.lti();
        self.schedule(next, Kind::Report);
    }

    fn report(&mut self) {
        let n = self.interval;
        for (f, flow) in self.flows.iter_mut().enumerate() {
            let acc = std::mem::take(&mut flow.acc);
            let mean = |s: f64, k: u64| (k > 0).then(|| s / k as f64);
            self.out.metrics.push(MetricsRecord {
                interval: n,
                flow: f as u32,
                dropped_gamma: acc.dropped_gamma,
                total_gamma: acc.total_gamma,
                frames_dropped: acc.frames_dropped,
                frames_fwd: acc.frames_fwd,
                bytes_fwd: acc.bytes_fwd,
                frames_late: acc.frames_late,
                rtt_mean_ms: mean(acc.rtt_sum_ms, acc.rtt_n),
                q_mean_ms: mean(acc.q_sum_ms, acc.q_n),
                network_state_ms: flow.delay.network_state().map(Micros::as_ms_f64),
            });
        }
        self.interval += 1;
    }

    fn sweep(&mut self) {
        if !self.cfg.proactive_drop {
            return;
        }
        let mut gone = Vec::new();
        for f in 0..self.ports.len() {
            self.ports[f].sweep(self.now, &mut gone);
            for frame in gone.drain(..) {
                self.on_drop(f, frame);
            }
        }
    }

    fn revise_bounds(&mut self) {
        let now = self.now;
        for (flow, port) in self.flows.iter_mut().zip(self.ports.iter_mut()) {
            let v = flow.delay.network_state();
            if let Some(v) = v.filter(|_| v != flow.v_revised) {
                port.queue.revise_bounds(v, now);
                if let Some(f) = port.in_service.as_mut() {
                    f.bound = f.meta.deadline - v;
                }
                flow.v_revised = Some(v);
            }
        }
    }

    /// Folds the closing interval's samples into the smoothed moments.
    fn roll_stats(&mut self) {
        for flow in &mut self.flows {
            flow.arrival_moments.absorb(&flow.arrivals);
            flow.service_moments.absorb(&flow.service);
            flow.arrivals.clear();
            flow.service.clear();
        }
    }

    fn stats(&self, f: usize) -> Option<ArrivalServiceStats<f64>> {
        let flow = &self.flows[f];
        ArrivalServiceStats::from_smoothed(&flow.arrival_moments, &flow.service_moments, 0.0)
    }

    /// Frames of a flow in service order, the one on the wire included.
    fn frames_of(&self, f: usize) -> Vec<QueuedFrame> {
        let port = &self.ports[f];
        port.in_service.iter().copied().chain(port.queue.iter().copied()).collect()
    }

    fn long_timescale(&mut self) {
        let interval = self.policy.long_interval;
        let now = self.now;
        self.roll_stats();
        let inputs: Vec<FlowLtInput> = (0..self.flows.len())
            .map(|f| {
                let frames = self.frames_of(f);
                let departing = departing_set(&frames, interval, now)
                    .into_iter()
                    .map(|i| DepartingFrame {
                        importance: frames[i].importance(),
                        bound: frames[i].bound,
                        wire_bytes: frames[i].remaining_bytes,
                    })
                    .collect();
                FlowLtInput {
                    departing,
                    stats: self.stats(f),
                }
            })
            .collect();
        let params = LtParams {
            link_bps: self.link.rate_bps,
            epsilon: self.cfg.epsilon,
            d_min: Micros::from_ms_f64(self.cfg.d_min_ms),
        };
        // A flow that was never measured falls back to the fair share.
        let mut prev = self.lt.clone();
        let fair = LtDecision::initial(prev.flows.len(), params.link_bps);
        for (d, f) in prev.flows.iter_mut().zip(&fair.flows) {
            if d.carried && d.target_delay.is_none() {
                d.rate_bps = f.rate_bps;
            }
        }
        self.lt = allocate_lt(&inputs, &params, &prev);
        let n = self.lti_index();
        for (f, d) in self.lt.flows.iter().enumerate() {
            if !d.constraint_met && !d.carried {
                self.out.diagnostics.constraint_violations += 1;
            }
            if self.cfg.log_decisions {
                self.out.lt_log.push(LtLogRow {
                    n,
                    flow: f as u32,
                    d_ms: d.target_delay.map(Micros::as_ms_f64),
                    b_hat_bps: d.rate_bps,
                    constraint_met: d.constraint_met,
                    carried: d.carried,
                });
            }
        }
    }

    fn lti_index(&self) -> u32 {
        (self.now.as_us() / self.cfg.lti().as_us()) as u32 + 1
    }

    fn short_timescale(&mut self) -> Vec<u64> {
        let now = self.now;
        let inputs: Vec<StFlowInput> = (0..self.flows.len())
            .map(|f| {
                let frames = self
                    .frames_of(f)
                    .into_iter()
                    .filter(|q| !q.is_expired(now))
                    .map(|q| PendingFrame {
                        importance: q.importance(),
                        bytes: q.remaining_bytes,
                    })
                    .collect();
                let flow = &self.flows[f];
                StFlowInput {
                    v_now: flow.delay.network_state(),
                    v_prev: flow.v_prev,
                    target_delay: self.lt.flows[f].target_delay,
                    base_rate: self.lt.flows[f].rate_bps,
                    stats: self.stats(f),
                    frames,
                }
            })
            .collect();
        let params = StParams {
            link_bps: self.link.rate_bps,
            interval: self.policy.tick,
            d_min: Micros::from_ms_f64(self.cfg.d_min_ms),
            stop_on_nonpositive_gain: self.cfg.st_stop_on_nonpositive_gain,
            distribute_residual: self.cfg.distribute_residual,
        };
        let decision = schedule_st(&inputs, &params);
        for flow in &mut self.flows {
            flow.v_prev = flow.delay.network_state();
        }
        if self.cfg.log_decisions {
            let n = self.lti_index();
            let per = self.cfg.lti().as_us() / self.policy.tick.as_us();
            let t = (self.now.as_us() / self.policy.tick.as_us()) % per + 1;
            for f in 0..self.flows.len() {
                self.out.st_log.push(StLogRow {
                    n,
                    t: t as u32,
                    flow: f as u32,
                    b_st_bps: decision.rates[f],
                    phase1_bps: decision.phase1[f],
                    du_last: decision.last_gain[f],
                });
            }
        }
        decision.rates
    }

    fn backlogged(&self) -> Vec<bool> {
        let b: Vec<bool> = self.ports.iter().map(|p| !p.is_idle()).collect();
        if b.iter().any(|&x| x) {
            b
        } else {
            vec![true; b.len()]
        }
    }

    fn on_tick(&mut self) {
        let link = self.link.rate_bps;
        match self.policy.allocation {
            Allocation::Urgency => self.sweep(),
            Allocation::Equal => {
                self.sweep();
                let active: Vec<bool> = self.ports.iter().map(|p| !p.is_idle()).collect();
                self.rates = rr_allocate(&active, link);
            }
            Allocation::TwoTimescale { short_timescale } => {
                if short_timescale {
                    self.revise_bounds();
                }
                self.sweep();
                if self.lt.is_initial() {
                    let present: Vec<bool> = self.flows.iter().map(|f| f.arrived > 0).collect();
                    self.lt = LtDecision::initial_among(&present, link);
                }
                if self.policy.is_long_boundary(self.now) {
                    self.long_timescale();
                }
                let extra = if short_timescale {
                    self.short_timescale()
                } else if self.cfg.distribute_residual {
                    let surplus = link.saturating_sub(self.lt.total_bps());
                    equal_split(surplus, &self.backlogged())
                } else {
                    vec![0; self.flows.len()]
                };
                self.rates = self.lt.rates().iter().zip(&extra).map(|(a, b)| a + b).collect();
            }
        }
        if self.policy.allocation != Allocation::Urgency {
            let d = &mut self.out.diagnostics;
            d.budget_checks += 1;
            if self.rates.iter().sum::<u64>() > link {
                d.budget_violations += 1;
            }
            self.dwrr.replenish(&self.rates, self.policy.tick);
        }
        self.ticks += 1;
        self.try_transmit();
        let next = self.now + self.policy.tick;
        self.schedule(next, Kind::Tick);
    }

    fn check_conservation(&mut self) {
        let on_wire = self.on_wire.and_then(|t| t.completes.map(|_| t.flow));
        let d = &mut self.out.diagnostics;
        for (f, (flow, port)) in self.flows.iter().zip(&self.ports).enumerate() {
            d.conservation_checks += 1;
            let queued = port.backlog() as u64 + u64::from(on_wire == Some(f));
            if flow.arrived != flow.forwarded + flow.dropped + queued {
                d.conservation_violations += 1;
            }
        }
    }

    fn finish(mut self) -> RunOutput {
        let unmatched: u64 = self.flows.iter().map(|f| f.delay.unmatched_marks()).sum();
        self.out.diagnostics.unmatched_marks = unmatched;
        let label = RunLabel {
            policy: self.cfg.policy.to_string(),
            seed: self.cfg.seed,
            bottleneck_mbps: self.cfg.bottleneck_mbps,
            regime: self.cfg.regime.to_string(),
            epsilon: self.cfg.epsilon,
        };
        self.out.summary = summarize(&self.out.metrics, self.flows.len() as u32, label);
        self.out
    }
}
