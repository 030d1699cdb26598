//! Discrete-event model of the dumbbell topology: per-flow servers, one
//! bottleneck running a scheduling policy, and clients that acknowledge
//! received frames.

mod config;
mod engine;

use std::collections::{HashMap, VecDeque};
use std::io::{self, Write};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

pub use config::{parse_override, Regime, SimConfig};
pub use engine::run_traces;

use crate::baselines::PolicyKind;
use crate::error::{ConfigError, TraceError};
use crate::metrics::{MetricsRecord, Summary};
use crate::time::Micros;
use crate::traffic::{generate_trace, TraceParams};
use crate::video::{FlowTrace, FrameId};

/// Delays and capacity of the modeled paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkModel {
    pub rate_bps: u64,
    /// Bottleneck to client.
    pub propagation: Micros,
    /// Server to bottleneck before jitter.
    pub server_delay: Micros,
    pub regime: Regime,
    pub jitter_mean: Micros,
}

impl LinkModel {
    pub fn from_config(cfg: &SimConfig) -> Self {
        LinkModel {
            rate_bps: cfg.link_bps(),
            propagation: Micros::from_ms_f64(cfg.propagation_ms),
            server_delay: Micros::from_ms_f64(cfg.server_delay_ms),
            regime: cfg.regime,
            jitter_mean: Micros::from_ms_f64(cfg.jitter_mean_ms),
        }
    }
}

/// Arrival time at the bottleneck of a frame sent at `send`.
pub fn inject_delay(send: Micros, link: &LinkModel, rng: &mut ChaCha8Rng) -> Micros {
    let base = send + link.server_delay;
    match link.regime {
        Regime::Unstable if link.jitter_mean > Micros::ZERO => {
            let exp = Exp::new(1.0 / link.jitter_mean.as_us() as f64).expect("positive rate");
            base + Micros(exp.sample(rng).round() as i64)
        }
        _ => base,
    }
}

/// Client side of one flow: playback clock and receipt ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientModel {
    pub request_lead: u32,
    pub chunk_duration: Micros,
    /// Playback of chunk 1 starts here.
    pub start: Micros,
    /// Client to server.
    pub ack_delay: Micros,
    pub received: u64,
    pub late: u64,
}

impl ClientModel {
    /// Index of the chunk playing at `now` (0 before playback starts).
    pub fn playback_position(&self, now: Micros) -> u32 {
        let a = self.chunk_duration.as_us().max(1);
        ((now - self.start).as_us().max(0) / a) as u32
    }
}

/// Outcome of a frame at the client.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameReceipt {
    pub id: FrameId,
    pub send_time: Micros,
    /// `None` when the bottleneck dropped the frame.
    pub received_at: Option<Micros>,
    /// Latest receipt time that still makes playback.
    pub playback_deadline: Micros,
}

/// Acknowledgement as seen by the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckMark {
    pub reference: FrameId,
    pub at_server: Micros,
    pub rtt: Micros,
    pub on_time: bool,
}

/// Records a receipt and returns the acknowledgement it produces; dropped
/// frames are never acknowledged.
pub fn client_feedback(client: &mut ClientModel, receipt: &FrameReceipt) -> Option<AckMark> {
    let at = receipt.received_at?;
    let on_time = at <= receipt.playback_deadline;
    client.received += 1;
    if !on_time {
        client.late += 1;
    }
    let at_server = at + client.ack_delay;
    Some(AckMark {
        reference: receipt.id,
        at_server,
        rtt: at_server - receipt.send_time,
        on_time,
    })
}

/// Server-side view of acknowledgements, used to stamp RTT marks on
/// outgoing frames.
#[derive(Clone, Debug, Default)]
pub struct ServerMarks {
    pending: VecDeque<AckMark>,
    latest: Option<AckMark>,
    seq_of: HashMap<FrameId, u64>,
    sent: u64,
}

impl ServerMarks {
    /// Queues an acknowledgement that reaches the server at `ack.at_server`.
    pub fn on_ack(&mut self, ack: AckMark) {
        self.pending.push_back(ack);
    }

    /// Registers frame `id` as sent at `now` and returns the newest RTT
    /// sample with its backward offset in send order, if the referenced frame
    /// is within reach of the one-byte offset.
    pub fn stamp(&mut self, id: FrameId, now: Micros) -> Option<(Micros, u8)> {
        while self.pending.front().is_some_and(|a| a.at_server <= now) {
            self.latest = self.pending.pop_front();
        }
        let seq = self.sent;
        self.sent += 1;
        self.seq_of.insert(id, seq);
        let ack = self.latest?;
        let back = seq - *self.seq_of.get(&ack.reference)?;
        u8::try_from(back).ok().filter(|&b| b > 0).map(|b| (ack.rtt, b))
    }
}

/// Counters from the checks run during a simulation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub events: u64,
    pub time_regressions: u64,
    pub budget_checks: u64,
    pub budget_violations: u64,
    pub conservation_checks: u64,
    pub conservation_violations: u64,
    pub frames_generated: u64,
    pub unmatched_marks: u64,
    pub decode_errors: u64,
    /// Long-timescale decisions whose target delay fell to the floor.
    pub constraint_violations: u64,
    pub end_time: Micros,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LtLogRow {
    pub n: u32,
    pub flow: u32,
    pub d_ms: Option<f64>,
    pub b_hat_bps: u64,
    pub constraint_met: bool,
    pub carried: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StLogRow {
    pub n: u32,
    /// Short interval within the long one, from 1.
    pub t: u32,
    pub flow: u32,
    pub b_st_bps: u64,
    pub phase1_bps: u64,
    pub du_last: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventLogRow {
    pub time: Micros,
    pub flow: u32,
    pub id: FrameId,
    pub forwarded: bool,
    pub q_delay: Micros,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: SimConfig,
    pub metrics: Vec<MetricsRecord>,
    pub summary: Summary,
    pub lt_log: Vec<LtLogRow>,
    pub st_log: Vec<StLogRow>,
    pub event_log: Vec<EventLogRow>,
    pub diagnostics: Diagnostics,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_lt_log<W: Write>(mut w: W, rows: &[LtLogRow]) -> io::Result<()> {
    writeln!(w, "n,flow,d_ms,b_hat_bps,constraint_met,carried")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n,
            r.flow,
            opt(r.d_ms),
            r.b_hat_bps,
            u8::from(r.constraint_met),
            u8::from(r.carried)
        )?;
    }
    Ok(())
}

pub fn write_st_log<W: Write>(mut w: W, rows: &[StLogRow]) -> io::Result<()> {
    writeln!(w, "n,t,flow,b_st_bps,phase1_bps,dU_last")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n,
            r.t,
            r.flow,
            r.b_st_bps,
            r.phase1_bps,
            opt(r.du_last)
        )?;
    }
    Ok(())
}

pub fn write_event_log<W: Write>(mut w: W, rows: &[EventLogRow]) -> io::Result<()> {
    writeln!(w, "time_us,flow,c,m,k,event,q_delay_ms")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.time.as_us(),
            r.flow,
            r.id.chunk,
            r.id.tile,
            r.id.frame,
            if r.forwarded { "fwd" } else { "drop" },
            r.q_delay
        )?;
    }
    Ok(())
}

/// The configured trace files, or one generated trace per flow.
pub fn load_traces(cfg: &SimConfig) -> Result<Vec<FlowTrace>, ConfigError> {
    if cfg.traces.is_empty() {
        return (0..cfg.flows)
            .map(|flow| {
                let params = TraceParams {
                    traffic: cfg.traffic.clone(),
                    flow,
                    request_delay: Micros::from_ms_f64(cfg.request_delay_ms),
                };
                generate_trace(&params, cfg.seed)
            })
            .collect();
    }
    cfg.traces
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let file = std::fs::File::open(path).map_err(|source| TraceError::Io {
                path: path.clone(),
                source,
            })?;
            let mut t = FlowTrace::read_from(io::BufReader::new(file), cfg.traffic.chunk_duration())?;
            t.flow = i as u32;
            Ok(t)
        })
        .collect()
}

/// Runs `config` under `policy` with `seed`.
pub fn run(config: &SimConfig, policy: PolicyKind, seed: u64) -> Result<RunOutput, ConfigError> {
    let mut cfg = config.clone();
    cfg.policy = policy;
    cfg.seed = seed;
    cfg.validate()?;
    let traces = load_traces(&cfg)?;
    Ok(run_traces(&cfg, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, NoiseSource};

    fn link(regime: Regime, jitter_ms: i64) -> LinkModel {
        LinkModel {
            rate_bps: 25_000_000,
            propagation: Micros::from_ms(5),
            server_delay: Micros::from_ms(10),
            regime,
            jitter_mean: Micros::from_ms(jitter_ms),
        }
    }

    #[test]
    fn stable_and_degenerate_delays() {
        let mut rng = stream(1, 0, NoiseSource::Jitter);
        assert_eq!(inject_delay(Micros::ZERO, &link(Regime::Stable, 15), &mut rng), Micros::from_ms(10));
        assert_eq!(inject_delay(Micros::ZERO, &link(Regime::Unstable, 0), &mut rng), Micros::from_ms(10));
    }

    #[test]
    fn jitter_mean_converges() {
        let mut rng = stream(2, 0, NoiseSource::Jitter);
        let l = link(Regime::Unstable, 15);
        let n = 100_000;
        let total: i64 = (0..n)
            .map(|_| (inject_delay(Micros::ZERO, &l, &mut rng) - l.server_delay).as_us())
            .sum();
        let mean_ms = total as f64 / n as f64 / 1000.0;
        assert!((mean_ms / 15.0 - 1.0).abs() < 0.02, "{mean_ms}");
    }

    fn client() -> ClientModel {
        ClientModel {
            request_lead: 2,
            chunk_duration: Micros::from_secs(1),
            start: Micros::ZERO,
            ack_delay: Micros::from_ms(10),
            received: 0,
            late: 0,
        }
    }

    #[test]
    fn feedback_rtt_sums_path_delays() {
        let mut c = client();
        let id = FrameId::new(1, 1, 1);
        let serialization = Micros(480);
        let receipt = FrameReceipt {
            id,
            send_time: Micros::ZERO,
            received_at: Some(Micros::from_ms(10) + serialization),
            playback_deadline: Micros::from_secs(1),
        };
        let ack = client_feedback(&mut c, &receipt).unwrap();
        assert_eq!(ack.rtt, Micros::from_ms(20) + serialization);
        assert_eq!(ack.reference, id);
        let dropped = FrameReceipt {
            received_at: None,
            ..receipt
        };
        assert_eq!(client_feedback(&mut c, &dropped), None);
        assert_eq!(c.received, 1);
    }

    #[test]
    fn marks_reference_acked_frames_by_offset() {
        let mut s = ServerMarks::default();
        let ids: Vec<FrameId> = (1..=4).map(|k| FrameId::new(1, 1, k)).collect();
        assert_eq!(s.stamp(ids[0], Micros::ZERO), None);
        assert_eq!(s.stamp(ids[1], Micros(1)), None);
        s.on_ack(AckMark {
            reference: ids[0],
            at_server: Micros(5),
            rtt: Micros(5),
            on_time: true,
        });
        assert_eq!(s.stamp(ids[2], Micros(4)), None);
        assert_eq!(s.stamp(ids[3], Micros(5)), Some((Micros(5), 3)));
    }

    #[test]
    fn playback_position_follows_clock() {
        let c = client();
        assert_eq!(c.playback_position(Micros::from_ms(2500)), 2);
        assert_eq!(c.playback_position(Micros::from_ms(-5)), 0);
    }
}
