use proptest::prelude::*;
use vrsched::baselines::{rr_allocate, PolicyKind};
use vrsched::delay::{queuing_delay_bound, Ewma};
use vrsched::forwarder::{forward_round, DwrrState, Port};
use vrsched::lt::{allocate_lt, max_target_delay, service_rate, DepartingFrame, FlowLtInput, LtDecision, LtParams};
use vrsched::queue::{quality_loss, resort, split_sets, FrameQueue, QueueOrder, QueuedFrame};
use vrsched::sim::{run, SimConfig};
use vrsched::st::{compensate, schedule_st, PendingFrame, StFlowInput, StParams};
use vrsched::video::{frame_deadline, importance, FrameId, FrameMeta, GopStructure};
use vrsched::{ArrivalServiceStats, Micros};

fn frame(k: u16, gamma: f64, bytes: u32, arrival_ms: i64, bound_ms: i64) -> QueuedFrame {
    QueuedFrame::new(
        FrameMeta {
            id: FrameId::new(1, 1, k),
            size: bytes,
            importance: gamma,
            deadline: Micros::from_ms(bound_ms + 20),
            send_time: Micros::ZERO,
            rtt_mark: None,
        },
        Micros::from_ms(arrival_ms),
        Micros::from_ms(bound_ms),
        bytes,
    )
}

prop_compose! {
    fn queued_frames(max: usize)(parts in prop::collection::vec((0.0..=1.0f64, 1..20_000u32, 0..500i64, -100..2000i64), 0..max)) -> Vec<QueuedFrame> {
        parts.into_iter()
            .enumerate()
            .map(|(i, (g, b, a, d))| frame(i as u16 + 1, g, b, a, d))
            .collect()
    }
}

prop_compose! {
    fn stats()(mu_a in 0.005..0.2f64, ca in 0.0..3.0f64, mu_s in 0.001..0.2f64, cs in 0.0..3.0f64, bytes in 100.0..50_000.0f64) -> ArrivalServiceStats {
        ArrivalServiceStats {
            mean_interarrival: mu_a,
            std_interarrival: ca * mu_a,
            mean_service: mu_s,
            std_service: cs * mu_s,
            mean_frame_bytes: bytes,
        }
    }
}

/// Random GoP where every frame references one or two earlier frames.
fn random_gop() -> impl Strategy<Value = GopStructure> {
    prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<bool>()), 1..40).prop_map(
        |picks| {
            let refs = picks
                .iter()
                .enumerate()
                .map(|(i, (a, b, two))| {
                    if i == 0 {
                        return vec![];
                    }
                    let mut r = vec![a.index(i) + 1];
                    if *two {
                        r.push(b.index(i) + 1);
                    }
                    r.sort();
                    r.dedup();
                    r
                })
                .collect();
            GopStructure::from_references(refs).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn importance_is_monotone_and_bounded(gop in random_gop(), p in 0.001..=1.0f64, q in 0.001..=1.0f64, k1 in any::<prop::sample::Index>(), k2 in any::<prop::sample::Index>()) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let k1 = k1.index(gop.len()) + 1;
        let k2 = k2.index(gop.len()) + 1;
        let g = importance(lo, k1, &gop).unwrap();
        prop_assert!(g <= lo);
        prop_assert!(g <= importance(hi, k1, &gop).unwrap());
        if gop.dependents(k1).unwrap() <= gop.dependents(k2).unwrap() {
            prop_assert!(g <= importance(lo, k2, &gop).unwrap());
        }
    }

    #[test]
    fn referenced_frames_have_more_dependents(gop in random_gop()) {
        prop_assert_eq!(gop.dependents(1).unwrap() as usize, gop.len() - 1);
        for k in 1..=gop.len() {
            for &r in gop.references(k).unwrap() {
                prop_assert!(gop.dependents(r).unwrap() > gop.dependents(k).unwrap());
            }
        }
    }

    #[test]
    fn frame_deadline_falls_one_for_one(ddl in -5000..5000i64, first in 0..10_000i64, off in 0..5000i64, step in 1..1000i64) {
        let at = |o: i64| frame_deadline(Micros::from_ms(ddl), Micros::from_ms(first + o), Micros::from_ms(first));
        prop_assert_eq!(at(off) - at(off + step), Micros::from_ms(step));
    }

    #[test]
    fn ewma_mean_stays_within_samples(alpha in 0.01..=1.0f64, xs in prop::collection::vec(0.0..1e4f64, 1..200)) {
        let mut e = Ewma::new(alpha).unwrap();
        for &x in &xs {
            e.update(x).unwrap();
        }
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(e.mean() >= lo - 1e-9 && e.mean() <= hi + 1e-9);
        prop_assert!(e.variance() >= 0.0);
    }

    #[test]
    fn bound_is_linear_in_deadline_and_external_delay(ddl in -2000..5000i64, shift in 0..2000i64, rtt in 0..500u32, q in 0..500u32) {
        let one = |v: f64| Ewma::new(0.125).unwrap().updated(v).unwrap();
        let (r, qd) = (one(f64::from(rtt)), one(f64::from(q)));
        let base = queuing_delay_bound(Micros::from_ms(ddl), &r, &qd, Micros::ZERO);
        let later = queuing_delay_bound(Micros::from_ms(ddl + shift), &r, &qd, Micros::ZERO);
        prop_assert_eq!(later - base, Micros::from_ms(shift));
        prop_assert_eq!(base, Micros::from_ms(ddl - (i64::from(rtt) - i64::from(q))));
    }

    #[test]
    fn revised_bounds_keep_deadline_order(frames in queued_frames(40), v in -100..400i64, now in 0..1000i64) {
        let mut q = FrameQueue::new(QueueOrder::Weighted, 0.01);
        for f in &frames {
            q.push(*f);
        }
        q.revise_bounds(Micros::from_ms(v), Micros::from_ms(now));
        let out = q.to_vec();
        for a in &out {
            for b in &out {
                prop_assert_eq!((a.bound - b.bound).as_us().signum(), (a.meta.deadline - b.meta.deadline).as_us().signum());
            }
        }
    }

    #[test]
    fn required_rate_is_monotone(mu_a in 0.001..0.5f64, ca in 0.0..3.0f64, cs in 0.0..3.0f64, d in 0.001..2.0f64, dd in 0.001..1.0f64, dc in 0.0..1.0f64, dmu in 0.0..0.1f64) {
        let g = |d, mu, ca, cs| service_rate(d, mu, ca, cs).unwrap();
        let base = g(d, mu_a, ca, cs);
        if ca + cs > 0.0 {
            prop_assert!(g(d + dd, mu_a, ca, cs) < base);
        }
        prop_assert!(g(d, mu_a, ca + dc, cs) >= base);
        prop_assert!(g(d, mu_a, ca, cs + dc) >= base);
        prop_assert!(g(d, mu_a + dmu, ca, cs) <= base);
    }

    #[test]
    fn target_delay_grows_with_tolerance(frames in prop::collection::vec((0u32..100, -50..2000i64), 1..200), e1 in 0.0..=1.0f64, e2 in 0.0..=1.0f64) {
        let frames: Vec<(f64, Micros)> = frames.into_iter().map(|(g, d)| (f64::from(g) / 100.0, Micros::from_ms(d))).collect();
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let a = max_target_delay(&frames, lo, Micros::from_ms(1)).unwrap();
        let b = max_target_delay(&frames, hi, Micros::from_ms(1)).unwrap();
        prop_assert!(a.delay <= b.delay);
        prop_assert!(a.constraint_met <= b.constraint_met);
    }

    #[test]
    fn long_timescale_fits_the_link(
        flows in prop::collection::vec((prop::option::of(stats()), prop::collection::vec((0.0..1.0f64, 1..3000i64, 100..40_000u32), 0..60)), 1..12),
        link in 1_000_000u64..100_000_000,
        eps in 0.0..0.5f64,
    ) {
        let inputs: Vec<FlowLtInput> = flows
            .into_iter()
            .map(|(stats, frames)| FlowLtInput {
                departing: frames
                    .into_iter()
                    .map(|(g, d, b)| DepartingFrame { importance: g, bound: Micros::from_ms(d), wire_bytes: b })
                    .collect(),
                stats,
            })
            .collect();
        let params = LtParams { link_bps: link, epsilon: eps, d_min: Micros::from_ms(1) };
        let d = allocate_lt(&inputs, &params, &LtDecision::initial(inputs.len(), link));
        prop_assert!(d.total_bps() <= link);
    }

    #[test]
    fn short_timescale_fits_the_surplus(
        flows in prop::collection::vec((
            prop::option::of(stats()),
            prop::option::of(-50..200i64),
            prop::option::of(-50..200i64),
            prop::option::of(1..1500i64),
            0u64..5_000_000,
            prop::collection::vec((0.0..1.0f64, 1..40_000u32), 0..30),
        ), 1..12),
        link in 10_000_000u64..60_000_000,
        stop in any::<bool>(),
        residual in any::<bool>(),
    ) {
        let inputs: Vec<StFlowInput> = flows
            .into_iter()
            .map(|(stats, v_now, v_prev, target, base, frames)| StFlowInput {
                v_now: v_now.map(Micros::from_ms),
                v_prev: v_prev.map(Micros::from_ms),
                target_delay: target.map(Micros::from_ms),
                base_rate: base,
                stats,
                frames: frames.into_iter().map(|(importance, bytes)| PendingFrame { importance, bytes }).collect(),
            })
            .collect();
        let base: u64 = inputs.iter().map(|f| f.base_rate).sum();
        prop_assume!(base <= link);
        let params = StParams {
            link_bps: link,
            interval: Micros::from_ms(50),
            d_min: Micros::from_ms(1),
            stop_on_nonpositive_gain: stop,
            distribute_residual: residual,
        };
        let d = schedule_st(&inputs, &params);
        prop_assert!(d.rates.iter().sum::<u64>() <= link - base);
    }

    #[test]
    fn compensation_is_nonnegative_when_delay_grows(s in stats(), target in 2..2000i64, dv in 1..2000i64) {
        let g = |d: Micros| vrsched::lt::capped_rate(d, &s, 1_000_000_000);
        prop_assert!(compensate(Micros::from_ms(target), Micros::from_ms(dv), Micros::from_ms(1), g) >= 0.0);
    }

    #[test]
    fn split_sets_partition_and_grow_with_budget(frames in queued_frames(40), b1 in 0u64..200_000, extra in 0u64..200_000, now in 0..1500i64) {
        let now = Micros::from_ms(now);
        let small = split_sets(&frames, b1, now);
        let large = split_sets(&frames, b1 + extra, now);
        let mut all: Vec<usize> = small.forwarded.iter().chain(&small.dropped).chain(&small.retained).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..frames.len()).collect::<Vec<_>>());
        prop_assert!(small.forwarded.iter().all(|i| large.forwarded.contains(i)));
        let gammas = |ix: &[usize]| ix.iter().map(|&i| frames[i].importance()).collect::<Vec<f64>>();
        let l = quality_loss(gammas(&small.forwarded), gammas(&small.dropped));
        prop_assert!((0.0..=1.0).contains(&l));
        let mut with_zero = gammas(&small.dropped);
        with_zero.push(0.0);
        prop_assert_eq!(l, quality_loss(gammas(&small.forwarded), with_zero));
    }

    #[test]
    fn resort_is_a_permutation(frames in queued_frames(60), now in 0..2000i64, beta in 0.0..1.0f64) {
        let mut sorted = frames.clone();
        resort(&mut sorted, Micros::from_ms(now), beta);
        let key = |f: &QueuedFrame| f.id();
        let mut a: Vec<FrameId> = frames.iter().map(key).collect();
        let mut b: Vec<FrameId> = sorted.iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        prop_assert!(sorted.windows(2).all(|w| w[0].weight >= w[1].weight));
    }

    #[test]
    fn dwrr_spends_only_its_deficit(
        queues in prop::collection::vec(queued_frames(12), 1..8),
        rates in prop::collection::vec(0u64..20_000_000, 8),
        now in 0..400i64,
        proactive in any::<bool>(),
    ) {
        let n = queues.len();
        let mut ports: Vec<Port> = queues
            .iter()
            .map(|fs| {
                let mut q = FrameQueue::new(QueueOrder::Weighted, 0.01);
                fs.iter().for_each(|f| q.push(*f));
                Port::new(q)
            })
            .collect();
        let mut state = DwrrState::new(n, 1500);
        state.replenish(&rates[..n], Micros::from_ms(50));
        let before: Vec<u64> = state.deficits().to_vec();
        let now = Micros::from_ms(now);
        let can_send = (0..n).any(|f| {
            let mut probe = ports[f].clone();
            if proactive {
                probe.purge_head(now, &mut Vec::new());
            }
            probe.next_packet_bytes(1500).is_some_and(|b| u64::from(b) <= before[f])
        });
        let out = forward_round(&mut state, &mut ports, now, 1500, proactive);
        let spent: u64 = (0..n).map(|f| before[f] - state.deficit(f)).sum();
        prop_assert_eq!(spent, out.bytes);
        if can_send {
            prop_assert!(out.bytes > 0);
        }
        for (f, p) in ports.iter().enumerate() {
            if let Some(b) = p.next_packet_bytes(1500) {
                if !proactive || !p.head().unwrap().is_expired(now) {
                    prop_assert!(u64::from(b) > state.deficit(f));
                }
            }
        }
    }

    #[test]
    fn rr_split_fits_the_link(active in prop::collection::vec(any::<bool>(), 1..20), link in 0u64..1_000_000_000) {
        prop_assert!(rr_allocate(&active, link).iter().sum::<u64>() <= link);
    }
}

fn small_config(flows: u32, mbps: f64) -> SimConfig {
    let mut cfg = SimConfig {
        bottleneck_mbps: mbps,
        flows,
        ..SimConfig::default()
    };
    cfg.traffic.chunks = 6;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_invariants_hold(seed in any::<u64>(), flows in 1u32..6, mbps in 4.0..30.0f64, policy in prop::sample::select(PolicyKind::ALL.to_vec())) {
        let out = run(&small_config(flows, mbps), policy, seed).unwrap();
        let d = &out.diagnostics;
        prop_assert_eq!(d.time_regressions, 0);
        prop_assert_eq!(d.conservation_violations, 0);
        prop_assert_eq!(d.budget_violations, 0);
        let departed: u64 = out.metrics.iter().map(|m| m.departed()).sum();
        prop_assert_eq!(departed, d.frames_generated);
    }

    #[test]
    fn ample_bandwidth_loses_nothing(seed in any::<u64>(), flows in 1u32..5, policy in prop::sample::select(PolicyKind::ALL.to_vec())) {
        // offered load is about 2.7 Mbps per flow on the wire
        let out = run(&small_config(flows, 6.0 * f64::from(flows)), policy, seed).unwrap();
        prop_assert_eq!(out.summary.total_quality_loss, 0.0);
    }
}

#[test]
fn edf_with_one_flow_matches_fifo() {
    let mut cfg = small_config(1, 2.2);
    cfg.log_events = true;
    let events = |policy| run(&cfg, policy, 9).unwrap().event_log;
    let edf = events(PolicyKind::Edf);
    assert!(edf.iter().any(|e| !e.forwarded));
    assert_eq!(edf, events(PolicyKind::RoundRobin));
}
