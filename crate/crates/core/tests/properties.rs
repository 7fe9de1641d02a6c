mod common;

use common::*;
use proptest::prelude::*;
use spotrelease::belief::{belief_update, BeliefState, Channel, ObservationModel};
use spotrelease::optimal::{Policy, PolicyKind};
use spotrelease::state::{decode, encode, AirportConfig, Fairness, StateIndex, SurfaceState};
use spotrelease::transition::{build_transitions, takeoff_distribution, Decision};

fn config() -> impl Strategy<Value = AirportConfig> {
    (1u32..=14, 1u32..=15, prop::bool::ANY, 0u8..3).prop_flat_map(|(n, cap, two, fair)| {
        let fairness = [Fairness::Alternation, Fairness::Statistical, Fairness::None][fair as usize];
        let entries = if two && n >= 2 {
            (1..n).prop_flat_map(move |a| (Just(a), a + 1..=n)).prop_map(|(a, b)| vec![a, b]).boxed()
        } else {
            (1..=n).prop_map(|a| vec![a]).boxed()
        };
        entries.prop_map(move |e| airport(n, &e, cap, fairness))
    })
}

proptest! {
    #[test]
    fn index_roundtrip(cfg in config(), raw in any::<u32>()) {
        let idx = raw & ((1 << index_bits(&cfg)) - 1);
        let oracle = unpack(idx, &cfg);
        match decode(StateIndex(idx), &cfg) {
            Ok(s) => {
                prop_assert!(oracle.queue <= cfg.queue_capacity);
                prop_assert_eq!(&s.taxiway, &oracle.taxi);
                prop_assert_eq!(encode(&s, &cfg).unwrap().0, idx);
            }
            Err(_) => prop_assert!(oracle.queue > cfg.queue_capacity),
        }
        prop_assert!(decode(StateIndex(1 << index_bits(&cfg)), &cfg).is_err());
    }

    #[test]
    fn state_roundtrip(cfg in config(), seed in any::<u64>()) {
        let n = cfg.taxiway_len;
        let taxi: Vec<bool> = (0..n).map(|i| (seed >> i) & 1 == 1).collect();
        let queue = ((seed >> 20) % (cfg.queue_capacity as u64 + 1)) as u32;
        let turn = cfg.has_turn_bit().then_some(((seed >> 40) & 1) as u8);
        let s = SurfaceState { taxiway: taxi.clone(), queue, turn };
        let idx = encode(&s, &cfg).unwrap();
        prop_assert_eq!(idx.0, pack(&Surface { taxi, queue, turn }, &cfg));
        prop_assert_eq!(decode(idx, &cfg).unwrap(), s);
    }

    #[test]
    fn takeoff_law(queue in 0u32..5, c1 in 0.0f64..=1.0, c2 in 0.0f64..=1.0) {
        let d = takeoff_distribution(queue, c1, c2).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut mean = 0.0;
        for (x1, p1) in [(0u32, 1.0 - c1), (1, c1)] {
            for (x2, p2) in [(0u32, 1.0 - c2), (1, c2)] {
                mean += p1 * p2 * (x1 + x2).min(queue) as f64;
            }
        }
        prop_assert!((d[1] + 2.0 * d[2] - mean).abs() < 1e-12);
        prop_assert!(queue >= 2 || d[2] == 0.0);
    }

    #[test]
    fn belief_stays_normalized(start in 0usize..1024, path in prop::collection::vec(any::<u64>(), 1..40)) {
        let cfg = airport(4, &[1, 3], 3, Fairness::Alternation);
        let model = build_transitions(&cfg).unwrap();
        let obs = ObservationModel::new(&model, Channel::Surface).unwrap();
        let mut slot = start % model.num_states();
        let mut b = BeliefState::uniform(model.num_states(), obs.consistent_states(obs.code(slot))).unwrap();
        for r in path {
            let ks: Vec<Decision> = model.feasible_decisions(slot).collect();
            let k = ks[(r % ks.len() as u64) as usize];
            slot = model.sample_next(slot, k, (r >> 11) as f64 / (1u64 << 53) as f64).unwrap();
            b = belief_update(&b, k, obs.code(slot), &model, &obs).unwrap();
            prop_assert!((b.total() - 1.0).abs() <= 1e-12);
            prop_assert!(b.get(slot) > 0.0);
            prop_assert!(b.support().iter().all(|&j| obs.code(j as usize) == obs.code(slot)));
        }
    }

    #[test]
    fn policy_csv_roundtrip(codes in prop::collection::vec(0u8..3, 32)) {
        let cfg = airport(3, &[1, 3], 1, Fairness::Alternation);
        let model = build_transitions(&cfg).unwrap();
        let decisions: Vec<Decision> = (0..model.num_states())
            .map(|s| {
                let k = Decision::from_u8(codes[s]).unwrap();
                if model.is_feasible(s, k) { k } else { Decision::Hold }
            })
            .collect();
        let p = Policy { kind: PolicyKind::FullState, decisions, randomized: vec![], transient: 0 };
        let mut buf = Vec::new();
        p.write_csv(&model, &mut buf).unwrap();
        let back = Policy::read_csv(&model, buf.as_slice(), PolicyKind::FullState).unwrap();
        prop_assert_eq!(back.decisions, p.decisions);
    }
}
