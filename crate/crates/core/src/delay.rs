//! EWMA trackers and the per-flow queuing delay bound.

use std::collections::{HashMap, VecDeque};

use crate::error::DomainError;
use crate::queue::FrameQueue;
use crate::scalar::Scalar;
use crate::time::Micros;
use crate::video::FrameId;

/// Default smoothing weight for every tracker.
pub const DEFAULT_ALPHA: f64 = 0.125;

/// Exponentially weighted mean and variance of a nonnegative series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ewma<T> {
    mean: T,
    variance: T,
    alpha: T,
    initialized: bool,
}

impl<T: Scalar> Ewma<T> {
    pub fn new(alpha: T) -> Result<Self, DomainError> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(DomainError::Alpha(alpha.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Ewma {
            mean: T::zero(),
            variance: T::zero(),
            alpha,
            initialized: false,
        })
    }

    /// Folds in one sample. The first sample sets the mean and zeroes the
    /// variance; afterwards
    /// `var <- (1 - a) * (var + a * (x - mean)^2)` and
    /// `mean <- (1 - a) * mean + a * x`.
    pub fn update(&mut self, sample: T) -> Result<(), DomainError> {
        if !(sample >= T::zero()) {
            return Err(DomainError::NegativeSample(
                sample.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if !self.initialized {
            self.mean = sample;
            self.variance = T::zero();
            self.initialized = true;
            return Ok(());
        }
        let a = self.alpha;
        let diff = sample - self.mean;
        self.variance = ((T::one() - a) * (self.variance + a * diff * diff)).max(T::zero());
        self.mean = (T::one() - a) * self.mean + a * sample;
        Ok(())
    }

    /// By-value form of [`Ewma::update`].
    pub fn updated(mut self, sample: T) -> Result<Self, DomainError> {
        self.update(sample)?;
        Ok(self)
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }
}

/// `D = ddl - (RTT~ - q~)`, with `prior` standing in for `RTT~ - q~` until
/// both trackers have samples. Trackers hold milliseconds.
pub fn queuing_delay_bound(ddl: Micros, rtt: &Ewma<f64>, q: &Ewma<f64>, prior: Micros) -> Micros {
    if rtt.is_initialized() && q.is_initialized() {
        ddl - Micros::from_ms_f64(rtt.mean() - q.mean())
    } else {
        ddl - prior
    }
}

/// Re-bases every queued frame's bound on the latest network state.
pub fn revise_bounds(queue: &mut FrameQueue, network_state: Micros, now: Micros) {
    queue.revise_bounds(network_state, now);
}

/// What happened to an RTT mark presented to [`FlowDelayState::observe_mark`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkOutcome {
    Applied,
    /// Same reference frame as the previous mark; already counted.
    Repeated,
    /// No queuing delay is on record for the reference frame.
    Unmatched,
}

/// Delay bookkeeping for one flow at the bottleneck.
#[derive(Clone, Debug)]
pub struct FlowDelayState {
    pub rtt: Ewma<f64>,
    pub queue_delay: Ewma<f64>,
    network_state: Option<Micros>,
    recorded: HashMap<FrameId, Micros>,
    recorded_order: VecDeque<FrameId>,
    capacity: usize,
    last_reference: Option<FrameId>,
    unmatched: u64,
    prior: Micros,
}

impl FlowDelayState {
    pub fn new(alpha: f64, prior: Micros, capacity: usize) -> Result<Self, DomainError> {
        Ok(FlowDelayState {
            rtt: Ewma::new(alpha)?,
            queue_delay: Ewma::new(alpha)?,
            network_state: None,
            recorded: HashMap::new(),
            recorded_order: VecDeque::new(),
            capacity: capacity.max(1),
            last_reference: None,
            unmatched: 0,
            prior,
        })
    }

    /// Remembers the realized queuing delay of a departed frame.
    pub fn record_queuing_delay(&mut self, id: FrameId, delay: Micros) {
        if self.recorded.insert(id, delay).is_none() {
            self.recorded_order.push_back(id);
            if self.recorded_order.len() > self.capacity {
                if let Some(old) = self.recorded_order.pop_front() {
                    self.recorded.remove(&old);
                }
            }
        }
    }

    pub fn recorded_queuing_delay(&self, id: FrameId) -> Option<Micros> {
        self.recorded.get(&id).copied()
    }

    /// Applies an RTT mark. RTT and queuing delay are folded in together and
    /// only when both come from the same reference frame.
    pub fn observe_mark(&mut self, rtt: Micros, reference: FrameId) -> MarkOutcome {
        if self.last_reference == Some(reference) {
            return MarkOutcome::Repeated;
        }
        let Some(q) = self.recorded.get(&reference).copied() else {
            self.unmatched += 1;
            return MarkOutcome::Unmatched;
        };
        self.last_reference = Some(reference);
        let rtt_ms = rtt.as_ms_f64().max(0.0);
        let q_ms = q.as_ms_f64().max(0.0);
        self.rtt.update(rtt_ms).expect("nonnegative sample");
        self.queue_delay.update(q_ms).expect("nonnegative sample");
        self.network_state = Some(Micros::from_ms_f64(
            self.rtt.mean() - self.queue_delay.mean(),
        ));
        MarkOutcome::Applied
    }

    /// Latest `RTT~ - q~`, once a mark has been applied.
    pub fn network_state(&self) -> Option<Micros> {
        self.network_state
    }

    /// Delay outside the bottleneck used for bounds: the network state, or
    /// the configured prior before the first mark.
    pub fn external_delay(&self) -> Micros {
        self.network_state.unwrap_or(self.prior)
    }

    pub fn bound(&self, ddl: Micros) -> Micros {
        queuing_delay_bound(ddl, &self.rtt, &self.queue_delay, self.prior)
    }

    pub fn unmatched_marks(&self) -> u64 {
        self.unmatched
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_first_sample_initializes() {
        let e = Ewma::new(0.125).unwrap().updated(100.0).unwrap();
        assert_eq!(e.mean(), 100.0);
        assert_eq!(e.variance(), 0.0);
    }

    #[test]
    fn ewma_recurrence_example() {
        let e = Ewma::new(0.125f64)
            .unwrap()
            .updated(100.0)
            .unwrap()
            .updated(180.0)
            .unwrap();
        assert!((e.mean() - 110.0).abs() < 1e-12);
        assert!((e.variance() - 700.0).abs() < 1e-9);
    }

    #[test]
    fn ewma_constant_series_converges() {
        let mut e = Ewma::<f64>::new(0.125).unwrap();
        e.update(10.0).unwrap();
        e.update(50.0).unwrap();
        for _ in 0..400 {
            e.update(42.0).unwrap();
        }
        assert!((e.mean() - 42.0).abs() < 1e-9);
        assert!(e.variance() < 1e-9);
    }

    #[test]
    fn ewma_rejects_bad_inputs() {
        assert!(Ewma::<f64>::new(0.0).is_err());
        assert!(Ewma::<f64>::new(1.5).is_err());
        let mut e = Ewma::<f32>::new(0.5).unwrap();
        assert_eq!(e.update(-1.0), Err(DomainError::NegativeSample(-1.0)));
        assert!(e.update(f32::NAN).is_err());
    }

    fn stat(samples: &[f64]) -> Ewma<f64> {
        let mut e = Ewma::new(0.125).unwrap();
        for &s in samples {
            e.update(s).unwrap();
        }
        e
    }

    #[test]
    fn bound_examples() {
        let prior = Micros::from_ms(20);
        let ms = Micros::from_ms;
        assert_eq!(
            queuing_delay_bound(ms(1500), &stat(&[80.0]), &stat(&[30.0]), prior),
            ms(1450)
        );
        assert_eq!(
            queuing_delay_bound(ms(40), &stat(&[80.0]), &stat(&[30.0]), prior),
            ms(-10)
        );
        assert_eq!(
            queuing_delay_bound(ms(700), &stat(&[55.0]), &stat(&[55.0]), prior),
            ms(700)
        );
        assert_eq!(
            queuing_delay_bound(ms(700), &stat(&[]), &stat(&[]), prior),
            ms(680)
        );
    }

    #[test]
    fn marks_need_a_recorded_reference() {
        let mut s = FlowDelayState::new(0.125, Micros::from_ms(20), 4).unwrap();
        let a = FrameId::new(1, 1, 1);
        assert_eq!(s.observe_mark(Micros::from_ms(80), a), MarkOutcome::Unmatched);
        assert_eq!(s.unmatched_marks(), 1);
        assert_eq!(s.external_delay(), Micros::from_ms(20));

        s.record_queuing_delay(a, Micros::from_ms(30));
        assert_eq!(s.observe_mark(Micros::from_ms(80), a), MarkOutcome::Applied);
        assert_eq!(s.network_state(), Some(Micros::from_ms(50)));
        assert_eq!(s.observe_mark(Micros::from_ms(90), a), MarkOutcome::Repeated);
        assert_eq!(s.bound(Micros::from_ms(1500)), Micros::from_ms(1450));
    }

    #[test]
    fn recorded_delays_are_bounded() {
        let mut s = FlowDelayState::new(0.125, Micros::ZERO, 2).unwrap();
        for k in 1..=3 {
            s.record_queuing_delay(FrameId::new(1, 1, k), Micros::from_ms(i64::from(k)));
        }
        assert_eq!(s.recorded_queuing_delay(FrameId::new(1, 1, 1)), None);
        assert_eq!(
            s.recorded_queuing_delay(FrameId::new(1, 1, 3)),
            Some(Micros::from_ms(3))
        );
    }
}
