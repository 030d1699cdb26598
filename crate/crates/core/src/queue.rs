//! Per-flow frame queue at the bottleneck and the set computations over it.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_traits::Num;

use crate::time::Micros;
use crate::video::{FrameId, FrameMeta};

/// A frame waiting at (or being transmitted by) the bottleneck.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueuedFrame {
    pub meta: FrameMeta,
    /// Arrival of the frame's first packet.
    pub arrival: Micros,
    /// Queuing delay bound, relative to `arrival`.
    pub bound: Micros,
    /// Bytes on the wire including per-packet headers.
    pub wire_bytes: u32,
    pub remaining_bytes: u32,
    /// `importance - beta * O` as of the last sort, with `O` in milliseconds.
    pub weight: f64,
}

impl QueuedFrame {
    pub fn new(meta: FrameMeta, arrival: Micros, bound: Micros, wire_bytes: u32) -> Self {
        QueuedFrame {
            meta,
            arrival,
            bound,
            wire_bytes,
            remaining_bytes: wire_bytes,
            weight: meta.importance,
        }
    }

    pub fn id(&self) -> FrameId {
        self.meta.id
    }

    pub fn importance(&self) -> f64 {
        self.meta.importance
    }

    pub fn tolerable(&self, now: Micros) -> Micros {
        tolerable_time(self.bound, self.arrival, now)
    }

    /// Absolute time at which the tolerable queuing time reaches zero.
    pub fn expiry(&self) -> Micros {
        self.arrival + self.bound
    }

    pub fn is_expired(&self, now: Micros) -> bool {
        self.tolerable(now).is_negative()
    }

    pub fn is_started(&self) -> bool {
        self.remaining_bytes < self.wire_bytes
    }
}

/// Tolerable queuing time `D - (now - t_a)`; negative once the bound is violated.
pub fn tolerable_time(bound: Micros, arrival: Micros, now: Micros) -> Micros {
    bound - (now - arrival)
}

fn frame_weight(frame: &QueuedFrame, now: Micros, beta: f64) -> f64 {
    frame.importance() - beta * frame.tolerable(now).as_ms_f64()
}

fn by_weight(a: &QueuedFrame, b: &QueuedFrame) -> Ordering {
    b.weight.total_cmp(&a.weight).then(a.id().cmp(&b.id()))
}

/// Recomputes every frame's weight at `now` and sorts by descending weight,
/// breaking ties by frame id.
pub fn resort(frames: &mut [QueuedFrame], now: Micros, beta: f64) {
    for f in frames.iter_mut() {
        f.weight = frame_weight(f, now, beta);
    }
    frames.sort_by(by_weight);
}

/// Partition of a queue into forwarded, dropped and retained frames
/// (indices into the queue order).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitSets {
    pub forwarded: Vec<usize>,
    pub dropped: Vec<usize>,
    pub retained: Vec<usize>,
}

/// Splits a queue for a byte budget.
///
/// Frames with negative tolerable time are dropped and do not consume
/// budget. The forwarded set is the longest run of the remaining frames, in
/// queue order, whose cumulative size fits; everything after the first frame
/// that does not fit is retained.
pub fn split_sets(frames: &[QueuedFrame], budget_bytes: u64, now: Micros) -> SplitSets {
    let mut sets = SplitSets::default();
    let mut used = 0u64;
    let mut open = true;
    for (i, f) in frames.iter().enumerate() {
        if f.is_expired(now) {
            sets.dropped.push(i);
            continue;
        }
        if open && used + u64::from(f.remaining_bytes) <= budget_bytes {
            used += u64::from(f.remaining_bytes);
            sets.forwarded.push(i);
        } else {
            open = false;
            sets.retained.push(i);
        }
    }
    sets
}

/// Dropped importance over the importance of all departing frames; zero
/// when nothing (or nothing important) departs.
pub fn quality_loss<T, F, D>(forwarded: F, dropped: D) -> T
where
    T: Num + PartialOrd + Copy,
    F: IntoIterator<Item = T>,
    D: IntoIterator<Item = T>,
{
    let lost = dropped.into_iter().fold(T::zero(), |a, g| a + g);
    let kept = forwarded.into_iter().fold(T::zero(), |a, g| a + g);
    loss_ratio(lost, lost + kept)
}

/// `dropped / total`, defined as zero for a zero total.
pub fn loss_ratio<T: Num + PartialOrd + Copy>(dropped: T, total: T) -> T {
    if total > T::zero() {
        dropped / total
    } else {
        T::zero()
    }
}

/// Frames whose tolerable time at `now` is at most one interval.
pub fn departing_set(frames: &[QueuedFrame], interval: Micros, now: Micros) -> Vec<usize> {
    frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tolerable(now) <= interval)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QueueOrder {
    /// Descending `importance - beta * O`.
    #[default]
    Weighted,
    /// Arrival order.
    Fifo,
}

#[derive(Clone, Copy, Debug)]
struct Key {
    rank: f64,
    id: FrameId,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank.total_cmp(&other.rank).then(self.id.cmp(&other.id))
    }
}

/// Ordered queue of one flow's frames.
///
/// In weighted order the relative order of two frames never changes as time
/// passes: both tolerable times shrink at the same rate, so comparing
/// `importance - beta * expiry` is the same as comparing weights at any
/// instant. Only a bound revision moves frames, and [`FrameQueue::revise_bounds`]
/// rebuilds the order.
#[derive(Clone, Debug)]
pub struct FrameQueue {
    frames: BTreeMap<Key, QueuedFrame>,
    order: QueueOrder,
    beta: f64,
    next_seq: u64,
}

impl FrameQueue {
    pub fn new(order: QueueOrder, beta: f64) -> Self {
        FrameQueue {
            frames: BTreeMap::new(),
            order,
            beta,
            next_seq: 0,
        }
    }

    pub fn order(&self) -> QueueOrder {
        self.order
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn weighted_rank(&self, f: &QueuedFrame) -> f64 {
        -(f.importance() - self.beta * f.expiry().as_ms_f64())
    }

    /// Inserts a frame that arrives at `f.arrival`.
    pub fn push(&mut self, mut f: QueuedFrame) {
        let rank = match self.order {
            QueueOrder::Weighted => self.weighted_rank(&f),
            QueueOrder::Fifo => {
                self.next_seq += 1;
                self.next_seq as f64
            }
        };
        f.weight = frame_weight(&f, f.arrival, self.beta);
        self.frames.insert(Key { rank, id: f.id() }, f);
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueuedFrame> + '_ {
        self.frames.values()
    }

    pub fn front(&self) -> Option<&QueuedFrame> {
        self.frames.values().next()
    }

    pub fn pop_front(&mut self) -> Option<QueuedFrame> {
        self.frames.pop_first().map(|(_, f)| f)
    }

    pub fn to_vec(&self) -> Vec<QueuedFrame> {
        self.frames.values().copied().collect()
    }

    /// Removes every frame whose bound is violated at `now`.
    pub fn purge_expired(&mut self, now: Micros) -> Vec<QueuedFrame> {
        let mut gone = Vec::new();
        self.frames.retain(|_, f| {
            if f.is_expired(now) {
                gone.push(*f);
                false
            } else {
                true
            }
        });
        gone
    }

    /// Removes expired frames from the head only.
    pub fn purge_expired_head(&mut self, now: Micros) -> Vec<QueuedFrame> {
        let mut gone = Vec::new();
        while let Some(entry) = self.frames.first_entry() {
            if entry.get().is_expired(now) {
                gone.push(entry.remove());
            } else {
                break;
            }
        }
        gone
    }

    /// Refreshes each frame's weight at `now` and restores the queue order.
    pub fn resort(&mut self, now: Micros) {
        let beta = self.beta;
        let order = self.order;
        let old = std::mem::take(&mut self.frames);
        for (mut key, mut f) in old {
            f.weight = frame_weight(&f, now, beta);
            if order == QueueOrder::Weighted {
                key.rank = self.weighted_rank(&f);
            }
            self.frames.insert(key, f);
        }
    }

    /// Sets every bound to `deadline - external` and re-sorts.
    pub fn revise_bounds(&mut self, external: Micros, now: Micros) {
        for f in self.frames.values_mut() {
            f.bound = f.meta.deadline - external;
        }
        self.resort(now);
    }
}
