//! Long-timescale allocation: the largest target queuing delay that keeps a
//! flow's dropped-importance fraction within `epsilon`, turned into a rate by
//! inverting Kingman's G/G/1 waiting-time approximation.

use num_traits::Num;

use crate::delay::Ewma;
use crate::error::DomainError;
use crate::scalar::Scalar;
use crate::time::Micros;

/// Moments of a flow's frame arrival and service processes. Times are in
/// seconds, sizes in bytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrivalServiceStats<T> {
    pub mean_interarrival: T,
    pub std_interarrival: T,
    pub mean_service: T,
    pub std_service: T,
    /// Mean frame size of the departing set.
    pub mean_frame_bytes: T,
}

impl<T: Scalar> ArrivalServiceStats<T> {
    /// Builds the moments from EWMA trackers; `None` until both trackers
    /// have samples and the mean inter-arrival time is positive.
    pub fn from_trackers(arrival: &Ewma<T>, service: &Ewma<T>, mean_frame_bytes: T) -> Option<Self> {
        if !arrival.is_initialized() || !service.is_initialized() {
            return None;
        }
        if !(arrival.mean() > T::zero()) || !(service.mean() > T::zero()) {
            return None;
        }
        Some(ArrivalServiceStats {
            mean_interarrival: arrival.mean(),
            std_interarrival: arrival.std_dev(),
            mean_service: service.mean(),
            std_service: service.std_dev(),
            mean_frame_bytes,
        })
    }

    pub fn arrival_cv(&self) -> T {
        self.std_interarrival / self.mean_interarrival
    }

    pub fn service_cv(&self) -> T {
        self.std_service / self.mean_service
    }
}

/// Running mean and population variance of the samples of one interval.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentWindow<T> {
    count: u64,
    mean: T,
    m2: T,
}

impl<T: Scalar> MomentWindow<T> {
    pub fn new() -> Self {
        MomentWindow {
            count: 0,
            mean: T::zero(),
            m2: T::zero(),
        }
    }

    pub fn push(&mut self, x: T) {
        self.count += 1;
        let n = T::from_u64(self.count).expect("sample count");
        let delta = x - self.mean;
        self.mean = self.mean + delta / n;
        self.m2 = self.m2 + delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn std_dev(&self) -> T {
        if self.count == 0 {
            return T::zero();
        }
        (self.m2 / T::from_u64(self.count).expect("sample count")).sqrt()
    }

    pub fn clear(&mut self) {
        *self = Self::new();
    }
}

impl<T: Scalar> ArrivalServiceStats<T> {
    /// Moments over one interval's samples; `None` without at least one
    /// positive-mean sample of each kind.
    pub fn from_windows(arrival: &MomentWindow<T>, service: &MomentWindow<T>, mean_frame_bytes: T) -> Option<Self> {
        if arrival.count() == 0 || service.count() == 0 {
            return None;
        }
        if !(arrival.mean() > T::zero()) || !(service.mean() > T::zero()) {
            return None;
        }
        Some(ArrivalServiceStats {
            mean_interarrival: arrival.mean(),
            std_interarrival: arrival.std_dev(),
            mean_service: service.mean(),
            std_service: service.std_dev(),
            mean_frame_bytes,
        })
    }
}

/// EWMA across intervals of per-interval moments.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedMoments<T> {
    mean: Ewma<T>,
    std_dev: Ewma<T>,
}

impl<T: Scalar> SmoothedMoments<T> {
    pub fn new(alpha: T) -> Result<Self, DomainError> {
        Ok(SmoothedMoments {
            mean: Ewma::new(alpha)?,
            std_dev: Ewma::new(alpha)?,
        })
    }

    /// Folds in one interval's window; empty windows are skipped.
    pub fn absorb(&mut self, window: &MomentWindow<T>) {
        if window.count() == 0 {
            return;
        }
        let _ = self.mean.update(window.mean());
        let _ = self.std_dev.update(window.std_dev());
    }

    pub fn is_initialized(&self) -> bool {
        self.mean.is_initialized()
    }

    pub fn mean(&self) -> T {
        self.mean.mean()
    }

    pub fn std_dev(&self) -> T {
        self.std_dev.mean()
    }
}

impl<T: Scalar> ArrivalServiceStats<T> {
    /// Moments from smoothed per-interval estimates; `None` until both are
    /// initialized with positive means.
    pub fn from_smoothed(arrival: &SmoothedMoments<T>, service: &SmoothedMoments<T>, mean_frame_bytes: T) -> Option<Self> {
        if !arrival.is_initialized() || !service.is_initialized() {
            return None;
        }
        if !(arrival.mean() > T::zero()) || !(service.mean() > T::zero()) {
            return None;
        }
        Some(ArrivalServiceStats {
            mean_interarrival: arrival.mean(),
            std_interarrival: arrival.std_dev(),
            mean_service: service.mean(),
            std_service: service.std_dev(),
            mean_frame_bytes,
        })
    }
}

/// Kingman's approximation of the mean waiting time in a G/G/1 queue.
pub fn kingman_delay<T: Scalar>(rho: T, ca: T, cs: T, mean_service: T) -> Result<T, DomainError> {
    if !(rho > T::zero() && rho < T::one()) {
        return Err(DomainError::Utilization(rho.to_f64().unwrap_or(f64::NAN)));
    }
    if !(mean_service > T::zero()) {
        return Err(DomainError::ServiceTime(
            mean_service.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let two = T::lit(2.0);
    Ok(rho / (T::one() - rho) * ((ca * ca + cs * cs) / two) * mean_service)
}

/// Service rate `1 / mu_s` (per second) at which Kingman's mean wait equals
/// `target_delay`, for fixed arrival moments and service variability.
pub fn service_rate<T: Scalar>(
    target_delay: T,
    mean_interarrival: T,
    ca: T,
    cs: T,
) -> Result<T, DomainError> {
    if !(target_delay > T::zero()) {
        return Err(DomainError::NonPositiveDelay(
            target_delay.to_f64().unwrap_or(f64::NAN),
        ));
    }
    if !(mean_interarrival > T::zero()) {
        return Err(DomainError::Uninitialized);
    }
    let one = T::one();
    let two = T::lit(2.0);
    let root = (one + two * mean_interarrival * (ca * ca + cs * cs) / target_delay).sqrt();
    Ok((root + one) / (two * mean_interarrival))
}

/// Minimum rate in bits/s that keeps the mean queuing delay at
/// `target_delay` seconds.
pub fn required_rate<T: Scalar>(
    target_delay: T,
    stats: &ArrivalServiceStats<T>,
) -> Result<T, DomainError> {
    let per_frame = service_rate(
        target_delay,
        stats.mean_interarrival,
        stats.arrival_cv(),
        stats.service_cv(),
    )?;
    Ok(T::lit(8.0) * stats.mean_frame_bytes * per_frame)
}

/// [`required_rate`] capped at the link rate, in bits/s.
pub fn capped_rate(target_delay: Micros, stats: &ArrivalServiceStats<f64>, link_bps: u64) -> f64 {
    let secs = target_delay.as_secs_f64();
    match required_rate(secs, stats) {
        Ok(r) if r.is_finite() => r.min(link_bps as f64),
        _ => link_bps as f64,
    }
}

/// Result of the target-delay search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetDelay {
    pub delay: Micros,
    /// False when even the smallest candidate exceeds the loss bound and the
    /// floor was returned instead.
    pub constraint_met: bool,
}

/// Largest candidate bound `d` whose dropped-importance fraction
/// `sum(g * [D <= d]) / sum(g)` stays within `epsilon`.
///
/// Candidates are the distinct bounds of `frames` (`(importance, bound)`
/// pairs); the fraction is nondecreasing in `d`, so the search bisects the
/// sorted candidates. The result is never below `d_min`. Returns `None` for
/// an empty set.
pub fn max_target_delay<G>(frames: &[(G, Micros)], epsilon: G, d_min: Micros) -> Option<TargetDelay>
where
    G: Num + PartialOrd + Copy,
{
    if frames.is_empty() {
        return None;
    }
    let mut sorted: Vec<(G, Micros)> = frames.to_vec();
    sorted.sort_by_key(|&(_, d)| d);

    // distinct bounds with the importance at or below each of them
    let mut bounds: Vec<Micros> = Vec::new();
    let mut below: Vec<G> = Vec::new();
    let mut acc = G::zero();
    for (i, &(g, d)) in sorted.iter().enumerate() {
        acc = acc + g;
        let last_of_run = sorted.get(i + 1).is_none_or(|&(_, next)| next != d);
        if last_of_run {
            bounds.push(d);
            below.push(acc);
        }
    }
    let total = acc;
    let within = |i: usize| crate::queue::loss_ratio(below[i], total) <= epsilon;

    let (mut lo, mut hi) = (0usize, bounds.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if within(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Some(match lo {
        0 => TargetDelay {
            delay: d_min,
            constraint_met: false,
        },
        n => TargetDelay {
            delay: bounds[n - 1].max(d_min),
            constraint_met: true,
        },
    })
}

/// A frame of the departing set as seen by the allocator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepartingFrame {
    pub importance: f64,
    pub bound: Micros,
    pub wire_bytes: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowLtInput {
    pub departing: Vec<DepartingFrame>,
    /// Arrival/service moments with `mean_frame_bytes` ignored (it is
    /// recomputed from `departing`).
    pub stats: Option<ArrivalServiceStats<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowLtDecision {
    pub target_delay: Option<Micros>,
    pub rate_bps: u64,
    pub constraint_met: bool,
    /// The previous decision was kept because the departing set was empty
    /// or the flow had no statistics yet.
    pub carried: bool,
}

/// Per-flow base rates for one long interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LtDecision {
    pub flows: Vec<FlowLtDecision>,
    /// The unscaled demand exceeded the link and was scaled down.
    pub scaled: bool,
}

impl LtDecision {
    /// No base rate for any flow; the whole link is surplus.
    pub fn unreserved(flows: usize) -> Self {
        let mut d = Self::initial(flows, 0);
        d.flows.iter_mut().for_each(|f| f.rate_bps = 0);
        d
    }

    /// Equal split of the link.
    /// Equal split of the link over the present flows; every flow counts as
    /// present when none is.
    pub fn initial_among(present: &[bool], link_bps: u64) -> Self {
        let count = present.iter().filter(|&&p| p).count();
        let mut d = Self::initial(present.len(), link_bps);
        if count > 0 {
            let share = link_bps / count as u64;
            for (f, &p) in d.flows.iter_mut().zip(present) {
                f.rate_bps = if p { share } else { 0 };
            }
        }
        d
    }

    /// True while no flow has a measured decision.
    pub fn is_initial(&self) -> bool {
        self.flows.iter().all(|f| f.carried && f.target_delay.is_none())
    }

    pub fn initial(flows: usize, link_bps: u64) -> Self {
        let share = if flows == 0 { 0 } else { link_bps / flows as u64 };
        LtDecision {
            flows: vec![
                FlowLtDecision {
                    target_delay: None,
                    rate_bps: share,
                    constraint_met: true,
                    carried: true,
                };
                flows
            ],
            scaled: false,
        }
    }

    pub fn total_bps(&self) -> u64 {
        self.flows.iter().map(|f| f.rate_bps).sum()
    }

    pub fn rates(&self) -> Vec<u64> {
        self.flows.iter().map(|f| f.rate_bps).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LtParams {
    pub link_bps: u64,
    pub epsilon: f64,
    pub d_min: Micros,
}

/// Scales `rates` down proportionally so they sum to at most `link_bps`.
/// Returns whether scaling was needed.
pub fn scale_to_link(rates: &mut [u64], link_bps: u64) -> bool {
    let total: u128 = rates.iter().map(|&r| u128::from(r)).sum();
    if total <= u128::from(link_bps) {
        return false;
    }
    for r in rates.iter_mut() {
        *r = (u128::from(*r) * u128::from(link_bps) / total) as u64;
    }
    true
}

/// One long-timescale step: departing set, target delay search and
/// Kingman inversion per flow, then proportional scaling to the link.
pub fn allocate_lt(inputs: &[FlowLtInput], params: &LtParams, prev: &LtDecision) -> LtDecision {
    let mut flows: Vec<FlowLtDecision> = inputs
        .iter()
        .enumerate()
        .map(|(f, input)| {
            let carried = prev.flows.get(f).copied().unwrap_or(FlowLtDecision {
                target_delay: None,
                rate_bps: 0,
                constraint_met: true,
                carried: true,
            });
            let carry = FlowLtDecision {
                carried: true,
                ..carried
            };
            let Some(stats) = input.stats else {
                return carry;
            };
            let pairs: Vec<(f64, Micros)> = input
                .departing
                .iter()
                .map(|d| (d.importance, d.bound))
                .collect();
            let Some(target) = max_target_delay(&pairs, params.epsilon, params.d_min) else {
                return carry;
            };
            let bytes: u64 = input.departing.iter().map(|d| u64::from(d.wire_bytes)).sum();
            let stats = ArrivalServiceStats {
                mean_frame_bytes: bytes as f64 / input.departing.len() as f64,
                ..stats
            };
            let rate = capped_rate(target.delay, &stats, params.link_bps);
            FlowLtDecision {
                target_delay: Some(target.delay),
                rate_bps: rate.floor() as u64,
                constraint_met: target.constraint_met,
                carried: false,
            }
        })
        .collect();
    let mut rates: Vec<u64> = flows.iter().map(|f| f.rate_bps).collect();
    let scaled = scale_to_link(&mut rates, params.link_bps);
    for (f, r) in flows.iter_mut().zip(rates) {
        f.rate_bps = r;
    }
    LtDecision { flows, scaled }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mu_a: f64, ca: f64, cs: f64, s_ave: f64) -> ArrivalServiceStats<f64> {
        ArrivalServiceStats {
            mean_interarrival: mu_a,
            std_interarrival: ca * mu_a,
            mean_service: 0.01,
            std_service: cs * 0.01,
            mean_frame_bytes: s_ave,
        }
    }

    #[test]
    fn window_moments() {
        let mut w = MomentWindow::<f64>::new();
        for x in [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0] {
            w.push(x);
        }
        assert_eq!(w.count(), 8);
        assert!((w.mean() - 5.0).abs() < 1e-12);
        assert!((w.std_dev() - 2.0).abs() < 1e-12);
        let mut s = SmoothedMoments::new(0.5).unwrap();
        s.absorb(&w);
        s.absorb(&MomentWindow::new());
        assert_eq!((s.mean(), s.std_dev()), (5.0, 2.0));
        w.clear();
        assert_eq!(w.count(), 0);
        w.push(7.0);
        s.absorb(&w);
        assert_eq!((s.mean(), s.std_dev()), (6.0, 1.0));
        let empty = MomentWindow::<f64>::new();
        assert_eq!(ArrivalServiceStats::from_windows(&empty, &empty, 1.0), None);
    }

    #[test]
    fn kingman_example() {
        let d = kingman_delay(0.7655f64, 1.0, 1.0, 0.03062).unwrap();
        assert!((d - 0.1).abs() < 1e-3, "{d}");
    }

    #[test]
    fn kingman_exponential_case_is_mm1() {
        let (rho, mu_s) = (0.6f64, 0.02);
        let d = kingman_delay(rho, 1.0, 1.0, mu_s).unwrap();
        assert!((d - rho * mu_s / (1.0 - rho)).abs() < 1e-15);
        let tiny = kingman_delay(1e-9, 1.0, 1.0, mu_s).unwrap();
        assert!(tiny < 1e-10);
    }

    #[test]
    fn kingman_rejects_saturation() {
        assert!(matches!(
            kingman_delay(1.0, 1.0, 1.0, 0.01),
            Err(DomainError::Utilization(_))
        ));
        assert!(kingman_delay(1.2f32, 1.0, 1.0, 0.01).is_err());
        assert!(kingman_delay(0.5, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn required_rate_example() {
        let s = stats(0.04, 1.0, 1.0, 50_000.0);
        let per_frame = service_rate(0.1, 0.04, 1.0, 1.0).unwrap();
        assert!((per_frame - (2.6f64.sqrt() + 1.0) / 0.08).abs() < 1e-12);
        assert!((per_frame - 32.66).abs() < 0.01);
        let bps = required_rate(0.1, &s).unwrap();
        assert!((bps / 1e6 - 13.06).abs() < 0.01, "{bps}");
    }

    #[test]
    fn required_rate_limits() {
        let s = stats(0.04, 1.0, 1.0, 50_000.0);
        let offered = 8.0 * 50_000.0 / 0.04;
        let far = required_rate(1e9, &s).unwrap();
        assert!((far / offered - 1.0).abs() < 1e-9);
        let det = stats(0.04, 0.0, 0.0, 50_000.0);
        for d in [0.001, 0.1, 10.0] {
            assert!((required_rate(d, &det).unwrap() - offered).abs() < 1e-6);
        }
        assert!(matches!(
            required_rate(0.0, &s),
            Err(DomainError::NonPositiveDelay(_))
        ));
    }

    #[test]
    fn required_rate_is_generic() {
        let s32 = ArrivalServiceStats::<f32> {
            mean_interarrival: 0.04,
            std_interarrival: 0.04,
            mean_service: 0.01,
            std_service: 0.01,
            mean_frame_bytes: 50_000.0,
        };
        let bps = required_rate(0.1f32, &s32).unwrap();
        assert!((bps / 1e6 - 13.06).abs() < 0.01);
    }

    fn ms(v: i64) -> Micros {
        Micros::from_ms(v)
    }

    #[test]
    fn target_delay_example() {
        let frames = [(0.1, ms(50)), (0.4, ms(100)), (0.2, ms(150)), (0.3, ms(200))];
        let t = max_target_delay(&frames, 0.15, ms(1)).unwrap();
        assert_eq!(t.delay, ms(50));
        assert!(t.constraint_met);
        let t = max_target_delay(&frames, 1.0, ms(1)).unwrap();
        assert_eq!(t.delay, ms(200));
    }

    #[test]
    fn target_delay_single_frame_falls_to_floor() {
        let t = max_target_delay(&[(0.5, ms(80))], 0.0, ms(1)).unwrap();
        assert_eq!(t.delay, ms(1));
        assert!(!t.constraint_met);
        assert_eq!(max_target_delay::<f64>(&[], 0.1, ms(1)), None);
    }

    #[test]
    fn target_delay_with_exact_rationals() {
        use num_rational::Ratio;
        let r = |n, d| Ratio::new(n, d);
        let frames = [(r(1, 10), ms(50)), (r(1, 20), ms(100)), (r(17, 20), ms(150))];
        // loss at 100 ms is exactly 3/20
        let t = max_target_delay(&frames, r(3, 20), ms(1)).unwrap();
        assert_eq!(t.delay, ms(100));
    }

    #[test]
    fn scaling_keeps_sum_within_link() {
        let mut rates = vec![6_000_000, 6_000_000];
        assert!(scale_to_link(&mut rates, 10_000_000));
        assert_eq!(rates, vec![5_000_000, 5_000_000]);
        let mut rates = vec![1, 2];
        assert!(!scale_to_link(&mut rates, 10));
    }

    fn input(bounds_ms: &[i64], bytes: u32, s: ArrivalServiceStats<f64>) -> FlowLtInput {
        FlowLtInput {
            departing: bounds_ms
                .iter()
                .map(|&b| DepartingFrame {
                    importance: 0.5,
                    bound: ms(b),
                    wire_bytes: bytes,
                })
                .collect(),
            stats: Some(s),
        }
    }

    #[test]
    fn allocate_single_flow_unscaled() {
        let s = stats(0.04, 1.0, 1.0, 0.0);
        let params = LtParams {
            link_bps: 100_000_000,
            epsilon: 1.0,
            d_min: ms(1),
        };
        let prev = LtDecision::initial(1, params.link_bps);
        let out = allocate_lt(&[input(&[100], 50_000, s)], &params, &prev);
        let want = required_rate(0.1, &ArrivalServiceStats {
            mean_frame_bytes: 50_000.0,
            ..s
        })
        .unwrap();
        assert_eq!(out.flows[0].rate_bps, want.floor() as u64);
        assert!(!out.scaled);
    }

    #[test]
    fn allocate_scales_identical_flows() {
        let s = stats(0.04, 1.0, 1.0, 0.0);
        let one = required_rate(0.1, &ArrivalServiceStats {
            mean_frame_bytes: 50_000.0,
            ..s
        })
        .unwrap()
        .floor() as u64;
        // link sized so that the two demands sum to 1.2x its rate
        let link = (2 * one) * 10 / 12;
        let params = LtParams {
            link_bps: link,
            epsilon: 1.0,
            d_min: ms(1),
        };
        let prev = LtDecision::initial(2, link);
        let inputs = [input(&[100], 50_000, s), input(&[100], 50_000, s)];
        let out = allocate_lt(&inputs, &params, &prev);
        assert!(out.scaled);
        let expect = (u128::from(one) * u128::from(link) / u128::from(2 * one)) as u64;
        assert_eq!(out.flows[0].rate_bps, expect);
        assert_eq!(out.flows[1].rate_bps, expect);
        assert!(out.total_bps() <= link);
    }

    #[test]
    fn allocate_carries_forward_empty_sets() {
        let params = LtParams {
            link_bps: 30_000_000,
            epsilon: 0.1,
            d_min: ms(1),
        };
        let prev = LtDecision::initial(3, params.link_bps);
        assert_eq!(prev.flows[0].rate_bps, 10_000_000);
        let s = stats(0.04, 1.0, 1.0, 0.0);
        let inputs = [
            FlowLtInput::default(),
            FlowLtInput {
                departing: vec![],
                stats: Some(s),
            },
            input(&[400], 1_000, s),
        ];
        let out = allocate_lt(&inputs, &params, &prev);
        assert!(out.flows[0].carried && out.flows[1].carried);
        assert_eq!(out.flows[0].rate_bps, 10_000_000);
        assert_eq!(out.flows[1].rate_bps, 10_000_000);
        assert!(!out.flows[2].carried);
    }
}
