use proptest::prelude::*;

use vanet_sec::metrics::{fmt_sig6, Moments, PdrHistogram};
use vanet_sec::security::{PacketKind, SenderSchedule};

proptest! {
    #[test]
    fn one_long_every_alpha_messages(alpha in 1u32..60, periods in 1u32..20) {
        let mut s = SenderSchedule::default();
        let longs = (0..alpha * periods).filter(|_| s.next_kind(alpha, 0) == PacketKind::Long).count();
        prop_assert_eq!(longs as u32, periods);
    }

    #[test]
    fn push_period_leads_with_longs(alpha in 1u32..60, beta in 0u32..10, n in 1u32..200) {
        let mut s = SenderSchedule::default();
        let kinds: Vec<_> = (0..n).map(|_| s.next_kind(alpha, beta)).collect();
        prop_assert!(kinds.iter().take(beta as usize).all(|k| *k == PacketKind::Long));
        // No two LONGs after the push are closer or farther apart than alpha.
        let longs: Vec<usize> = kinds.iter().enumerate().filter(|(_, k)| **k == PacketKind::Long).map(|(i, _)| i).collect();
        for w in longs.windows(2).filter(|w| w[0] + 1 >= beta as usize) {
            prop_assert_eq!(w[1] - w[0], alpha as usize);
        }
    }

    #[test]
    fn extra_messages_leave_counters_alone(alpha in 2u32..60, beta in 0u32..10, before in 0u32..100) {
        let mut s = SenderSchedule::default();
        for _ in 0..before {
            s.next_kind(alpha, beta);
        }
        let snapshot = s.clone();
        let k = s.extra_kind(alpha, beta);
        prop_assert_eq!(&s, &snapshot);
        if before >= beta.max(1) {
            prop_assert_eq!(k, PacketKind::Short);
        }
    }

    #[test]
    fn moments_merge_matches_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 0..50), split in 0usize..50) {
        let split = split.min(xs.len());
        let mut whole = Moments::default();
        xs.iter().for_each(|x| whole.push(*x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..split].iter().for_each(|x| a.push(*x));
        xs[split..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        prop_assert_eq!(a.n, whole.n);
        prop_assert!((a.mean() - whole.mean()).abs() < 1e-9);
        prop_assert!((a.std_dev() - whole.std_dev()).abs() < 1e-6);
    }

    #[test]
    fn histogram_merge_is_order_free(a in prop::collection::vec((0.0f64..600.0, any::<bool>()), 0..100),
                                     b in prop::collection::vec((0.0f64..600.0, any::<bool>()), 0..100)) {
        let fill = |v: &[(f64, bool)]| {
            let mut h = PdrHistogram::default();
            v.iter().for_each(|(d, ok)| h.record(*d, *ok));
            h
        };
        let (ha, hb) = (fill(&a), fill(&b));
        let mut ab = ha.clone();
        ab.merge(&hb);
        let mut ba = hb.clone();
        ba.merge(&ha);
        let attempts = |h: &PdrHistogram| h.bins.iter().map(|b| (b.attempts, b.successes)).filter(|x| x.0 > 0).collect::<Vec<_>>();
        prop_assert_eq!(attempts(&ab), attempts(&ba));
        prop_assert_eq!(ab.total_attempts(), (a.len() + b.len()) as u64);
    }

    #[test]
    fn sig6_round_trips(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_sig6(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5e-6);
    }
}
