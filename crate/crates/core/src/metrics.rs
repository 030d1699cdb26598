//! Per-interval, per-flow metrics and the run summary, with their CSV forms.

use std::io::{self, BufRead, Write};

use crate::queue::loss_ratio;

/// One flow over one reporting interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    /// 1-based interval index.
    pub interval: u32,
    pub flow: u32,
    /// Importance of frames dropped at the bottleneck or delivered late.
    pub dropped_gamma: f64,
    /// Importance of every frame that left the bottleneck queue.
    pub total_gamma: f64,
    pub frames_dropped: u64,
    pub frames_fwd: u64,
    pub bytes_fwd: u64,
    /// Forwarded frames that missed their playback deadline.
    pub frames_late: u64,
    /// Mean of the RTT marks applied this interval.
    pub rtt_mean_ms: Option<f64>,
    /// Mean queuing delay of the frames forwarded this interval.
    pub q_mean_ms: Option<f64>,
    pub network_state_ms: Option<f64>,
}

impl MetricsRecord {
    pub fn loss(&self) -> f64 {
        loss_ratio(self.dropped_gamma, self.total_gamma)
    }

    pub fn departed(&self) -> u64 {
        self.frames_dropped + self.frames_fwd
    }
}

pub const METRICS_HEADER: &str =
    "n,flow,L,dropped_gamma,total_gamma,frames_dropped,frames_fwd,bytes_fwd,frames_late,rtt_mean_ms,q_mean_ms,V_ms";

pub fn write_metrics_csv<W: Write>(mut w: W, records: &[MetricsRecord]) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.interval,
            r.flow,
            r.loss(),
            r.dropped_gamma,
            r.total_gamma,
            r.frames_dropped,
            r.frames_fwd,
            r.bytes_fwd,
            r.frames_late,
            opt(r.rtt_mean_ms),
            opt(r.q_mean_ms),
            opt(r.network_state_ms)
        )?;
    }
    Ok(())
}

/// Reads back a file written by [`write_metrics_csv`].
pub fn read_metrics_csv<R: BufRead>(r: R) -> io::Result<Vec<MetricsRecord>> {
    let bad = |line: usize, what: &str| {
        io::Error::new(io::ErrorKind::InvalidData, format!("metrics line {line}: bad {what}"))
    };
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(bad(i + 1, "field count"));
        }
        fn p<T: std::str::FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        fn opt(s: &str) -> Option<Option<f64>> {
            if s.is_empty() {
                Some(None)
            } else {
                p(s).map(Some)
            }
        }
        let rec = (|| {
            Some(MetricsRecord {
                interval: p(f[0])?,
                flow: p(f[1])?,
                dropped_gamma: p(f[3])?,
                total_gamma: p(f[4])?,
                frames_dropped: p(f[5])?,
                frames_fwd: p(f[6])?,
                bytes_fwd: p(f[7])?,
                frames_late: p(f[8])?,
                rtt_mean_ms: opt(f[9])?,
                q_mean_ms: opt(f[10])?,
                network_state_ms: opt(f[11])?,
            })
        })()
        .ok_or_else(|| bad(i + 1, "number"))?;
        out.push(rec);
    }
    Ok(out)
}

/// Run totals over the metric rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub policy: String,
    pub seed: u64,
    pub bottleneck_mbps: f64,
    pub regime: String,
    pub epsilon: f64,
    pub flows: u32,
    pub intervals: u32,
    /// Sum of the per-interval, per-flow losses.
    pub total_quality_loss: f64,
    /// Population standard deviation of the per-flow cumulative losses.
    pub loss_std: f64,
    /// Mean over flows of (dropped + late) / departed frames.
    pub avg_drop_rate: f64,
    pub frames_generated: u64,
    pub frames_dropped: u64,
    pub frames_late: u64,
    /// Share of (flow, interval) cells with departures whose loss is at
    /// most `epsilon`.
    pub c2_fraction: f64,
}

/// Identifies the run a summary belongs to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLabel {
    pub policy: String,
    pub seed: u64,
    pub bottleneck_mbps: f64,
    pub regime: String,
    pub epsilon: f64,
}

/// Summarizes metric rows of `flows` flows. Only the rows are consulted, so
/// a summary can be recomputed from a metrics file.
pub fn summarize(records: &[MetricsRecord], flows: u32, label: RunLabel) -> Summary {
    let n = flows as usize;
    let mut per_flow_loss = vec![0.0; n];
    let mut departed = vec![0u64; n];
    let mut missed = vec![0u64; n];
    let mut total = 0.0;
    let mut cells = 0u64;
    let mut within = 0u64;
    let mut s = Summary {
        policy: label.policy,
        seed: label.seed,
        bottleneck_mbps: label.bottleneck_mbps,
        regime: label.regime,
        epsilon: label.epsilon,
        flows,
        ..Default::default()
    };
    for r in records {
        let l = r.loss();
        total += l;
        let f = r.flow as usize;
        if f < n {
            per_flow_loss[f] += l;
            departed[f] += r.departed();
            missed[f] += r.frames_dropped + r.frames_late;
        }
        if r.departed() > 0 {
            cells += 1;
            if l <= label.epsilon {
                within += 1;
            }
        }
        s.intervals = s.intervals.max(r.interval);
        s.frames_generated += r.departed();
        s.frames_dropped += r.frames_dropped;
        s.frames_late += r.frames_late;
    }
    s.total_quality_loss = total;
    if n > 0 {
        let mean = per_flow_loss.iter().sum::<f64>() / n as f64;
        let var = per_flow_loss.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        s.loss_std = var.sqrt();
    }
    let rates: Vec<f64> = departed
        .iter()
        .zip(&missed)
        .filter(|(&d, _)| d > 0)
        .map(|(&d, &m)| m as f64 / d as f64)
        .collect();
    if !rates.is_empty() {
        s.avg_drop_rate = rates.iter().sum::<f64>() / rates.len() as f64;
    }
    s.c2_fraction = if cells == 0 { 1.0 } else { within as f64 / cells as f64 };
    s
}

pub const SUMMARY_HEADER: &str = "policy,seed,bottleneck_mbps,regime,epsilon,flows,intervals,total_quality_loss,loss_std,avg_drop_rate,frames_generated,frames_dropped,frames_late,c2_fraction";

pub fn summary_row(s: &Summary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.policy,
        s.seed,
        s.bottleneck_mbps,
        s.regime,
        s.epsilon,
        s.flows,
        s.intervals,
        s.total_quality_loss,
        s.loss_std,
        s.avg_drop_rate,
        s.frames_generated,
        s.frames_dropped,
        s.frames_late,
        s.c2_fraction
    )
}

pub fn write_summary_csv<W: Write>(mut w: W, summaries: &[Summary]) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(w, "{}", summary_row(s))?;
    }
    Ok(())
}

/// Sample mean and standard deviation (n - 1 denominator; zero for a single
/// value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
