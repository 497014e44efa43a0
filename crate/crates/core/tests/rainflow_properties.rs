use cyclecost_core::degradation::cycle_cost_raw;
use cyclecost_core::io::{read_profile_csv, write_profile_csv};
use cyclecost_core::oracle::{
    check_adjacent_merge, check_convexity, check_perturbation_bounds, CONVEXITY_TOLERANCE, PROPERTY_TOLERANCE,
};
use cyclecost_core::rainflow::{count_cycles_raw, cycle_depths_from_power, CycleKind};
use cyclecost_core::solver::soc_trajectory;
use cyclecost_core::{BatteryParams, StressModel};
use proptest::prelude::*;

fn profile(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, 2..=max_len)
}

fn total_variation(s: &[f64]) -> f64 {
    s.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn models() -> [StressModel; 3] {
    [StressModel::reference(), StressModel::Linear { k1: 1.5e-4 }, StressModel::Exponential { k2: 2e-4, k3: 1.5 }]
}

proptest! {
    #[test]
    fn half_cycle_depths_add_up_to_the_total_variation(s in profile(60)) {
        let sum: f64 = count_cycles_raw(&s).depths().iter().sum();
        prop_assert!((sum - total_variation(&s)).abs() < 1e-9);
    }

    #[test]
    fn depths_scale_with_the_profile(s in profile(40), k in 0.05..1.0f64) {
        let scaled: Vec<f64> = s.iter().map(|v| v * k).collect();
        let a = sorted(count_cycles_raw(&s).depths());
        let b = sorted(count_cycles_raw(&scaled).depths());
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x * k - y).abs() < 1e-12);
        }
    }

    #[test]
    fn depths_ignore_a_constant_shift(s in profile(40), shift in -0.5..0.5f64) {
        let moved: Vec<f64> = s.iter().map(|v| v + shift).collect();
        let a = sorted(count_cycles_raw(&s).depths());
        let b = sorted(count_cycles_raw(&moved).depths());
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn owners_partition_every_moving_interval(s in profile(40)) {
        let cs = count_cycles_raw(&s);
        for (t, owners) in cs.interval_owners().iter().enumerate().take(s.len() - 1) {
            let total: f64 = owners.iter().map(|(_, f)| f).sum();
            if s[t + 1] == s[t] {
                prop_assert!(owners.is_empty());
            } else {
                prop_assert!((total - 1.0).abs() < 1e-9, "interval {} fractions sum to {}", t, total);
            }
        }
    }

    #[test]
    fn full_cycles_come_in_matched_pairs(s in profile(40)) {
        let cs = count_cycles_raw(&s);
        for (i, h) in cs.half_cycles.iter().enumerate() {
            if h.kind == CycleKind::FullMember {
                let p = h.partner.expect("full members have partners");
                let other = &cs.half_cycles[p];
                prop_assert_eq!(other.partner, Some(i));
                prop_assert_eq!(other.direction, h.direction.opposite());
                prop_assert!((other.depth - h.depth).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_stress_prices_throughput(s in profile(40), k1 in 1e-5..1e-3f64) {
        let cost = cycle_cost_raw(&s, &StressModel::Linear { k1 });
        prop_assert!((cost - k1 * total_variation(&s)).abs() < 1e-12);
    }

    #[test]
    fn constant_tail_leaves_cost_unchanged(s in profile(30), extra in 1usize..10) {
        let mut longer = s.clone();
        longer.extend(std::iter::repeat_n(*s.last().unwrap(), extra));
        for m in models() {
            prop_assert_eq!(cycle_cost_raw(&s, &m), cycle_cost_raw(&longer, &m));
        }
    }

    #[test]
    fn depths_from_power_match_depths_from_soc(
        powers in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..40),
    ) {
        let mut b = BatteryParams::regulation_default();
        b.interval_hours = 0.02;
        let (c, d): (Vec<f64>, Vec<f64>) = powers.into_iter().unzip();
        let s = soc_trajectory(&c, &d, &b);
        let cs = count_cycles_raw(&s);
        let from_power = cycle_depths_from_power(&c, &d, &cs, &b).unwrap();
        for (p, h) in from_power.iter().zip(&cs.half_cycles) {
            prop_assert!((p - h.depth).abs() < 1e-9, "{} vs {}", p, h.depth);
        }
    }

    #[test]
    fn profile_csv_round_trips(s in profile(30)) {
        let mut buf = vec![];
        write_profile_csv(&mut buf, &s).unwrap();
        let back = read_profile_csv(buf.as_slice(), 1.0).unwrap();
        prop_assert_eq!(back.values(), s.as_slice());
    }

    #[test]
    fn cost_is_convex(pair in (2usize..30).prop_flat_map(|n| {
        (prop::collection::vec(0.0..=1.0f64, n), prop::collection::vec(0.0..=1.0f64, n))
    }), lambda in 0.0..=1.0f64) {
        for m in models() {
            let c = check_convexity(&pair.0, &pair.1, lambda, &m).unwrap();
            prop_assert!(c.holds(CONVEXITY_TOLERANCE), "{:?} excess {}", m, c.excess());
        }
    }

    #[test]
    fn merging_steps_never_raises_cost(s in profile(30), pick in 0usize..1000) {
        prop_assume!(s.len() >= 3);
        let i = pick % (s.len() - 2);
        for m in models() {
            let c = check_adjacent_merge(&s, i, &m).unwrap();
            prop_assert!(c.holds(PROPERTY_TOLERANCE), "{:?} excess {}", m, c.excess());
        }
    }

    #[test]
    fn step_perturbation_is_bounded(s in profile(30), pick in 0usize..1000, amp in -0.5..0.5f64) {
        let i = pick % s.len();
        let c = check_perturbation_bounds(&s, i, amp).unwrap();
        prop_assert!(c.holds(PROPERTY_TOLERANCE), "excess {}", c.excess());
    }
}

#[test]
fn constant_profile_has_no_cycles() {
    assert!(count_cycles_raw(&[0.4; 10]).is_empty());
}
