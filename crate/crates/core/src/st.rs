//! Short-timescale adjustment of the long-timescale base rates.
//!
//! Flows whose network state worsened since the previous short interval get
//! the extra rate needed to keep their target delay (phase 1). The remaining
//! surplus goes, one head frame at a time, to the flow whose importance per
//! bit improves the most (phase 2).

use crate::error::DomainError;
use crate::lt::{capped_rate, ArrivalServiceStats};
use crate::time::Micros;

/// Splits flows into those whose network state grew since the previous
/// interval (`F0`) and the rest (`F1`). Flows missing either state are in
/// `F1`.
pub fn classify(now: &[Option<Micros>], prev: &[Option<Micros>]) -> (Vec<usize>, Vec<usize>) {
    let mut f0 = Vec::new();
    let mut f1 = Vec::new();
    for (f, v) in now.iter().enumerate() {
        let worse = match (*v, prev.get(f).copied().flatten()) {
            (Some(v), Some(p)) => v > p,
            _ => false,
        };
        if worse {
            f0.push(f);
        } else {
            f1.push(f);
        }
    }
    (f0, f1)
}

/// Extra rate `g(d - dv) - g(d)` that keeps the target queuing delay after
/// the network state grows by `dv`. The reduced target never drops below
/// `d_min`.
pub fn compensate(target: Micros, delta_v: Micros, d_min: Micros, g: impl Fn(Micros) -> f64) -> f64 {
    if delta_v <= Micros::ZERO {
        return 0.0;
    }
    let reduced = (target - delta_v).max(d_min);
    (g(reduced) - g(target.max(d_min))).max(0.0)
}

/// Forwarded importance per bit/s of total rate `b + b_hat`.
pub fn utility(b: f64, b_hat: f64, gamma_sum: f64) -> Result<f64, DomainError> {
    let rate = b + b_hat;
    if !(rate > 0.0) {
        return Err(DomainError::ZeroRate);
    }
    Ok(gamma_sum / rate)
}

/// A frame still to be forwarded, in queue order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendingFrame {
    pub importance: f64,
    pub bytes: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StFlowInput {
    pub v_now: Option<Micros>,
    pub v_prev: Option<Micros>,
    pub target_delay: Option<Micros>,
    pub base_rate: u64,
    pub stats: Option<ArrivalServiceStats<f64>>,
    /// Forwardable frames in queue order.
    pub frames: Vec<PendingFrame>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StParams {
    pub link_bps: u64,
    pub interval: Micros,
    pub d_min: Micros,
    pub stop_on_nonpositive_gain: bool,
    pub distribute_residual: bool,
}

/// Per-flow increments over the base rates, in bits/s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StDecision {
    /// Total increment per flow (phase 1, phase 2 and residual).
    pub rates: Vec<u64>,
    pub phase1: Vec<u64>,
    pub residual: Vec<u64>,
    pub f0: Vec<usize>,
    pub f1: Vec<usize>,
    /// Utility gain of the last candidate grant evaluated for each flow.
    pub last_gain: Vec<Option<f64>>,
}

/// Bytes a rate can move in one interval.
pub fn budget_bytes(rate_bps: u64, interval: Micros) -> u64 {
    (u128::from(rate_bps) * interval.as_us().max(0) as u128 / 8_000_000) as u64
}

/// Smallest rate whose interval budget covers `bytes`.
pub fn grant_for(bytes: u32, interval: Micros) -> u64 {
    let us = interval.as_us().max(1) as u128;
    (u128::from(bytes) * 8_000_000).div_ceil(us) as u64
}

/// Splits `amount` evenly (rounding down) over the flows marked in `targets`.
pub fn equal_split(amount: u64, targets: &[bool]) -> Vec<u64> {
    let n = targets.iter().filter(|&&t| t).count() as u64;
    let share = amount.checked_div(n).unwrap_or(0);
    targets.iter().map(|&t| if t { share } else { 0 }).collect()
}

struct Progress {
    rate: u64,
    next: usize,
    used: u64,
    gamma: f64,
}

impl Progress {
    /// Moves the frame pointer past every frame the current rate covers.
    fn advance(&mut self, frames: &[PendingFrame], interval: Micros, base: u64) {
        let budget = budget_bytes(base + self.rate, interval);
        while let Some(f) = frames.get(self.next) {
            if self.used + u64::from(f.bytes) > budget {
                break;
            }
            self.used += u64::from(f.bytes);
            self.gamma += f.importance;
            self.next += 1;
        }
    }
}

/// Two-phase short-timescale schedule over the surplus left by the base
/// rates. The increments never sum to more than the surplus.
pub fn schedule_st(inputs: &[StFlowInput], params: &StParams) -> StDecision {
    let n = inputs.len();
    let base_total: u64 = inputs.iter().map(|i| i.base_rate).sum();
    let surplus = params.link_bps.saturating_sub(base_total);
    let now: Vec<Option<Micros>> = inputs.iter().map(|i| i.v_now).collect();
    let prev: Vec<Option<Micros>> = inputs.iter().map(|i| i.v_prev).collect();
    let (f0, f1) = classify(&now, &prev);

    let mut granted = 0u64;
    let mut phase1 = vec![0u64; n];
    for &f in &f0 {
        let input = &inputs[f];
        let (Some(target), Some(stats), Some(v)) = (input.target_delay, input.stats, input.v_now) else {
            continue;
        };
        let delta_v = v - input.v_prev.unwrap_or(v);
        let extra = compensate(target, delta_v, params.d_min, |d| {
            capped_rate(d, &stats, params.link_bps)
        });
        let extra = (extra.ceil() as u64).min(surplus - granted);
        phase1[f] = extra;
        granted += extra;
    }

    let mut progress: Vec<Progress> = inputs
        .iter()
        .zip(&phase1)
        .map(|(input, &rate)| {
            let mut p = Progress {
                rate,
                next: 0,
                used: 0,
                gamma: 0.0,
            };
            p.advance(&input.frames, params.interval, input.base_rate);
            p
        })
        .collect();

    let mut last_gain = vec![None; n];
    let mut excluded = vec![false; n];
    loop {
        let remaining = surplus - granted;
        let mut best: Option<(usize, f64, u64)> = None;
        for (f, input) in inputs.iter().enumerate() {
            let p = &progress[f];
            if excluded[f] {
                continue;
            }
            let Some(frame) = input.frames.get(p.next) else {
                continue;
            };
            let step = grant_for(frame.bytes, params.interval);
            if step > remaining {
                excluded[f] = true;
                continue;
            }
            let base = input.base_rate as f64;
            let before = utility(p.rate as f64, base, p.gamma).unwrap_or(0.0);
            let after =
                utility((p.rate + step) as f64, base, p.gamma + frame.importance).unwrap_or(0.0);
            let gain = after - before;
            last_gain[f] = Some(gain);
            if best.is_none_or(|(_, g, _)| gain > g) {
                best = Some((f, gain, step));
            }
        }
        let Some((f, gain, step)) = best else {
            break;
        };
        if params.stop_on_nonpositive_gain && gain <= 0.0 {
            break;
        }
        granted += step;
        let p = &mut progress[f];
        p.rate += step;
        p.advance(&inputs[f].frames, params.interval, inputs[f].base_rate);
    }

    let mut residual = vec![0u64; n];
    if params.distribute_residual && granted < surplus {
        let backlogged: Vec<bool> = inputs.iter().map(|i| !i.frames.is_empty()).collect();
        let targets = if backlogged.iter().any(|&b| b) {
            backlogged
        } else {
            vec![true; n]
        };
        residual = equal_split(surplus - granted, &targets);
    }

    let rates = progress
        .iter()
        .zip(&residual)
        .map(|(p, &r)| p.rate + r)
        .collect();
    StDecision {
        rates,
        phase1,
        residual,
        f0,
        f1,
        last_gain,
    }
}
