//! Frame-level deficit weighted round robin at the bottleneck egress.
//!
//! Frames are split into packets of at most one MTU. A flow's visit lasts
//! while its deficit covers the next packet of its head frame; a frame may
//! be left partially sent and resumed on a later visit.

use crate::queue::{FrameQueue, QueuedFrame};
use crate::st::budget_bytes;
use crate::time::Micros;

/// Bytes a rate earns over one interval.
pub fn quantum_bytes(rate_bps: u64, interval: Micros) -> u64 {
    budget_bytes(rate_bps, interval)
}

/// Wire size of a payload split into MTU-sized packets, each carrying
/// `header` bytes of headers.
pub fn wire_bytes(payload: u32, mtu: u32, header: u32) -> u32 {
    let per_packet = mtu - header;
    payload + payload.div_ceil(per_packet).max(1) * header
}

/// One flow's slot at the bottleneck.
#[derive(Clone, Debug)]
pub struct Port {
    pub queue: FrameQueue,
    /// Frame with packets already on the wire.
    pub in_service: Option<QueuedFrame>,
}

impl Port {
    pub fn new(queue: FrameQueue) -> Self {
        Port {
            queue,
            in_service: None,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.in_service.is_none() && self.queue.is_empty()
    }

    /// Frames held, counting the one in service.
    pub fn backlog(&self) -> usize {
        self.queue.len() + usize::from(self.in_service.is_some())
    }

    /// The frame that would be transmitted next.
    pub fn head(&self) -> Option<&QueuedFrame> {
        self.in_service.as_ref().or_else(|| self.queue.front())
    }

    /// Drops the in-service frame and head frames whose bound is violated.
    pub fn purge_head(&mut self, now: Micros, out: &mut Vec<QueuedFrame>) {
        if let Some(f) = self.in_service {
            if f.is_expired(now) {
                out.push(f);
                self.in_service = None;
            }
        }
        if self.in_service.is_none() {
            out.extend(self.queue.purge_expired_head(now));
        }
    }

    /// Drops every frame whose bound is violated.
    pub fn sweep(&mut self, now: Micros, out: &mut Vec<QueuedFrame>) {
        if let Some(f) = self.in_service {
            if f.is_expired(now) {
                out.push(f);
                self.in_service = None;
            }
        }
        out.extend(self.queue.purge_expired(now));
    }

    /// Puts the next packet of the head frame on the wire.
    pub fn take_packet(&mut self, mtu: u32) -> Option<(u32, Option<QueuedFrame>)> {
        if self.in_service.is_none() {
            self.in_service = self.queue.pop_front();
        }
        let frame = self.in_service.as_mut()?;
        let bytes = frame.remaining_bytes.min(mtu);
        frame.remaining_bytes -= bytes;
        let done = if frame.remaining_bytes == 0 {
            self.in_service.take()
        } else {
            None
        };
        Some((bytes, done))
    }

    pub fn next_packet_bytes(&self, mtu: u32) -> Option<u32> {
        self.head().map(|f| f.remaining_bytes.min(mtu))
    }
}

/// A packet handed to the link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transmission {
    pub flow: usize,
    pub bytes: u32,
    /// The frame whose last packet this is.
    pub completes: Option<QueuedFrame>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DwrrState {
    deficits: Vec<u64>,
    last_quantum: Vec<u64>,
    cursor: usize,
    /// Minimum carry-over cap, so a small quantum can still accumulate one
    /// full packet.
    floor_cap: u64,
}

impl DwrrState {
    pub fn new(flows: usize, mtu: u32) -> Self {
        DwrrState {
            deficits: vec![0; flows],
            last_quantum: vec![0; flows],
            cursor: 0,
            floor_cap: u64::from(mtu),
        }
    }

    pub fn deficit(&self, flow: usize) -> u64 {
        self.deficits[flow]
    }

    pub fn deficits(&self) -> &[u64] {
        &self.deficits
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Adds each flow's quantum for the coming interval after capping the
    /// carried deficit at the previous quantum.
    pub fn replenish(&mut self, rates: &[u64], interval: Micros) {
        for (f, &rate) in rates.iter().enumerate() {
            let cap = self.last_quantum[f].max(self.floor_cap);
            let q = quantum_bytes(rate, interval);
            self.deficits[f] = self.deficits[f].min(cap) + q;
            self.last_quantum[f] = q;
        }
    }

    /// Picks the next packet in round-robin order. Expired head frames met
    /// on the way are moved to `drops` when `proactive_drop` is set.
    pub fn next_packet(
        &mut self,
        ports: &mut [Port],
        now: Micros,
        mtu: u32,
        proactive_drop: bool,
        drops: &mut Vec<(usize, QueuedFrame)>,
    ) -> Option<Transmission> {
        let n = ports.len();
        let mut dropped = Vec::new();
        for _ in 0..=n {
            let f = self.cursor;
            let port = &mut ports[f];
            if proactive_drop {
                port.purge_head(now, &mut dropped);
                drops.extend(dropped.drain(..).map(|d| (f, d)));
            }
            match port.next_packet_bytes(mtu) {
                Some(bytes) if u64::from(bytes) <= self.deficits[f] => {
                    let (bytes, completes) = port.take_packet(mtu)?;
                    self.deficits[f] -= u64::from(bytes);
                    return Some(Transmission {
                        flow: f,
                        bytes,
                        completes,
                    });
                }
                _ => self.cursor = (f + 1) % n,
            }
        }
        None
    }
}

/// Outcome of draining the deficits at one instant.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundOutcome {
    pub departures: Vec<(usize, QueuedFrame)>,
    pub drops: Vec<(usize, QueuedFrame)>,
    pub bytes: u64,
}

/// Forwards everything the current deficits allow at `now`, ignoring link
/// serialization.
pub fn forward_round(
    state: &mut DwrrState,
    ports: &mut [Port],
    now: Micros,
    mtu: u32,
    proactive_drop: bool,
) -> RoundOutcome {
    let mut out = RoundOutcome::default();
    if ports.is_empty() {
        return out;
    }
    while let Some(t) = state.next_packet(ports, now, mtu, proactive_drop, &mut out.drops) {
        out.bytes += u64::from(t.bytes);
        if let Some(frame) = t.completes {
            out.departures.push((t.flow, frame));
        }
    }
    out
}
