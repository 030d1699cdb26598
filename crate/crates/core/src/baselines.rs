//! Comparison schedulers and ablation variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::forwarder::{Port, Transmission};
use crate::queue::{QueueOrder, QueuedFrame};
use crate::st::equal_split;
use crate::time::Micros;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Proposed,
    RoundRobin,
    Edf,
    NoOrdering,
    /// Long-timescale allocation alone, run every given period.
    SingleTimescale(Micros),
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Proposed,
        PolicyKind::RoundRobin,
        PolicyKind::Edf,
        PolicyKind::NoOrdering,
        PolicyKind::SingleTimescale(Micros::from_ms(1000)),
        PolicyKind::SingleTimescale(Micros::from_ms(500)),
        PolicyKind::SingleTimescale(Micros::from_ms(50)),
    ];
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Proposed => f.write_str("proposed"),
            PolicyKind::RoundRobin => f.write_str("rr"),
            PolicyKind::Edf => f.write_str("edf"),
            PolicyKind::NoOrdering => f.write_str("no-order"),
            PolicyKind::SingleTimescale(p) => write!(f, "single-ts-{}", p.as_us() / 1000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy `{0}` (expected proposed, rr, edf, no-order or single-ts-<ms>)")]
pub struct ParsePolicyError(pub String);

impl FromStr for PolicyKind {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParsePolicyError(s.to_string());
        Ok(match s {
            "proposed" => PolicyKind::Proposed,
            "rr" => PolicyKind::RoundRobin,
            "edf" => PolicyKind::Edf,
            "no-order" => PolicyKind::NoOrdering,
            _ => {
                let ms: i64 = s
                    .strip_prefix("single-ts-")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(bad)?;
                if ms <= 0 {
                    return Err(bad());
                }
                PolicyKind::SingleTimescale(Micros::from_ms(ms))
            }
        })
    }
}

impl Serialize for PolicyKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicyKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Allocation {
    /// Long-timescale base rates, optionally refined every short interval.
    TwoTimescale { short_timescale: bool },
    /// Equal split over backlogged flows.
    Equal,
    /// No rates: the most urgent head frame goes next.
    Urgency,
}

/// Everything the simulator needs to know about a scheduling variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchedulerPolicy {
    pub kind: PolicyKind,
    pub allocation: Allocation,
    pub queue_order: QueueOrder,
    /// Period of the decision loop.
    pub tick: Micros,
    /// Period of the long-timescale allocation.
    pub long_interval: Micros,
}

impl SchedulerPolicy {
    pub fn new(kind: PolicyKind, long_interval: Micros, short_interval: Micros) -> Self {
        let proposed = SchedulerPolicy {
            kind,
            allocation: Allocation::TwoTimescale {
                short_timescale: true,
            },
            queue_order: QueueOrder::Weighted,
            tick: short_interval,
            long_interval,
        };
        match kind {
            PolicyKind::Proposed => proposed,
            PolicyKind::NoOrdering => variant_no_ordering(proposed),
            PolicyKind::SingleTimescale(period) => variant_single_ts(period),
            PolicyKind::RoundRobin => SchedulerPolicy {
                allocation: Allocation::Equal,
                queue_order: QueueOrder::Fifo,
                ..proposed
            },
            PolicyKind::Edf => SchedulerPolicy {
                allocation: Allocation::Urgency,
                queue_order: QueueOrder::Fifo,
                ..proposed
            },
        }
    }

    pub fn short_timescale(&self) -> bool {
        matches!(
            self.allocation,
            Allocation::TwoTimescale {
                short_timescale: true
            }
        )
    }

    /// Whether the tick at `now` starts a long interval.
    pub fn is_long_boundary(&self, now: Micros) -> bool {
        self.long_interval.as_us() > 0 && now.as_us() % self.long_interval.as_us() == 0
    }
}

/// The proposed pipeline with queues kept in arrival order.
pub fn variant_no_ordering(policy: SchedulerPolicy) -> SchedulerPolicy {
    SchedulerPolicy {
        kind: PolicyKind::NoOrdering,
        queue_order: QueueOrder::Fifo,
        ..policy
    }
}

/// Long-timescale allocation alone at `interval`, surplus split equally.
pub fn variant_single_ts(interval: Micros) -> SchedulerPolicy {
    SchedulerPolicy {
        kind: PolicyKind::SingleTimescale(interval),
        allocation: Allocation::TwoTimescale {
            short_timescale: false,
        },
        queue_order: QueueOrder::Weighted,
        tick: interval,
        long_interval: interval,
    }
}

/// Equal rates over the active flows. With no active flow every flow gets
/// an equal share.
pub fn rr_allocate(active: &[bool], link_bps: u64) -> Vec<u64> {
    if active.iter().any(|&a| a) {
        equal_split(link_bps, active)
    } else {
        equal_split(link_bps, &vec![true; active.len()])
    }
}

/// Flow with the smallest head-frame slack; ties go to the lowest id.
pub fn edf_next(slack: &[Option<Micros>]) -> Option<usize> {
    slack
        .iter()
        .enumerate()
        .filter_map(|(f, s)| s.map(|s| (s, f)))
        .min()
        .map(|(_, f)| f)
}

/// Next EDF packet: a frame in service is finished first, then the most
/// urgent head frame is started.
pub fn edf_next_packet(
    ports: &mut [Port],
    now: Micros,
    mtu: u32,
    proactive_drop: bool,
    drops: &mut Vec<(usize, QueuedFrame)>,
) -> Option<Transmission> {
    let mut gone = Vec::new();
    let busy = ports.iter().position(|p| p.in_service.is_some());
    let flow = match busy {
        Some(f) if !(proactive_drop && ports[f].in_service.is_some_and(|x| x.is_expired(now))) => f,
        _ => {
            let mut slack = Vec::with_capacity(ports.len());
            for (f, port) in ports.iter_mut().enumerate() {
                if proactive_drop {
                    port.purge_head(now, &mut gone);
                    drops.extend(gone.drain(..).map(|d| (f, d)));
                }
                slack.push(port.head().map(|h| h.tolerable(now)));
            }
            edf_next(&slack)?
        }
    };
    let (bytes, completes) = ports[flow].take_packet(mtu)?;
    Some(Transmission {
        flow,
        bytes,
        completes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: i64) -> Micros {
        Micros::from_ms(v)
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.to_string().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("single-ts-0".parse::<PolicyKind>().is_err());
        assert!("fifo".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn rr_examples() {
        assert_eq!(rr_allocate(&[true; 10], 30_000_000), vec![3_000_000; 10]);
        assert_eq!(rr_allocate(&[true], 30_000_000), vec![30_000_000]);
        let mut active = [true; 10];
        active[4] = false;
        let r = rr_allocate(&active, 30_000_000);
        assert_eq!(r[4], 0);
        assert_eq!(r[0], 30_000_000 / 9);
        assert!(r.iter().sum::<u64>() <= 30_000_000);
    }

    #[test]
    fn edf_examples() {
        assert_eq!(edf_next(&[Some(ms(120)), Some(ms(40)), Some(ms(300))]), Some(1));
        assert_eq!(edf_next(&[Some(ms(40)), Some(ms(40))]), Some(0));
        assert_eq!(edf_next(&[None, Some(ms(900)), None]), Some(1));
        assert_eq!(edf_next(&[None, None]), None);
    }

    #[test]
    fn variants() {
        let lti = ms(1000);
        let sti = ms(50);
        let p = SchedulerPolicy::new(PolicyKind::NoOrdering, lti, sti);
        assert_eq!(p.queue_order, QueueOrder::Fifo);
        assert!(p.short_timescale());
        let s = SchedulerPolicy::new(PolicyKind::SingleTimescale(ms(1000)), lti, sti);
        assert!(!s.short_timescale());
        assert_eq!(s.tick, ms(1000));
        let s = variant_single_ts(ms(50));
        assert_eq!((s.tick, s.long_interval), (ms(50), ms(50)));
        let full = SchedulerPolicy::new(PolicyKind::Proposed, lti, sti);
        assert_eq!(full.queue_order, QueueOrder::Weighted);
        assert!(full.is_long_boundary(ms(2000)) && !full.is_long_boundary(ms(2050)));
    }
}
