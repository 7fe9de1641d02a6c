mod common;

use std::collections::BTreeMap;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spotrelease::state::{decode, encode, enumerate_states, AirportConfig, Fairness, StateIndex, SurfaceState};
use spotrelease::transition::{build_transitions, validate_kernel, Decision, TransitionModel};

fn library_row(model: &TransitionModel, idx: u32, k: u8) -> Option<BTreeMap<u32, f64>> {
    let slot = model.slot_of(StateIndex(idx)).unwrap();
    let (cols, probs) = model.row(slot, Decision::from_u8(k).unwrap())?;
    Some(cols.iter().zip(probs).map(|(&c, &p)| (model.index_of(c as usize).0, p)).collect())
}

fn configs() -> Vec<AirportConfig> {
    let mut v: Vec<AirportConfig> = small_airports().into_iter().map(|(_, c)| c).collect();
    v.push(AirportConfig::laguardia());
    v.push(AirportConfig { fairness: Fairness::Statistical, ..AirportConfig::laguardia() });
    v.push(AirportConfig::sea_like());
    v
}

#[test]
fn codec_matches_bit_layout() {
    for cfg in configs() {
        let expected = states(&cfg);
        let got: Vec<u32> = enumerate_states(&cfg).unwrap().into_iter().map(|i| i.0).collect();
        assert_eq!(got, expected);
        for &i in &expected {
            let s = unpack(i, &cfg);
            let lib = decode(StateIndex(i), &cfg).unwrap();
            assert_eq!(lib.taxiway, s.taxi);
            assert_eq!(lib.queue, s.queue);
            assert_eq!(lib.turn, s.turn);
            let back = SurfaceState { taxiway: s.taxi.clone(), queue: s.queue, turn: s.turn };
            assert_eq!(encode(&back, &cfg).unwrap().0, pack(&s, &cfg));
        }
    }
}

#[test]
fn kernel_equals_outcome_enumeration() {
    for cfg in configs() {
        let model = build_transitions(&cfg).unwrap();
        assert!(validate_kernel(&model).passed());
        for i in states(&cfg) {
            let s = unpack(i, &cfg);
            for k in 0..=2u8 {
                let lib = library_row(&model, i, k);
                if !feasible(&s, k, &cfg) {
                    assert!(lib.is_none(), "state {i} decision {k} should be infeasible");
                    continue;
                }
                let lib = lib.unwrap_or_else(|| panic!("state {i} decision {k} missing"));
                let exact = exact_row(&s, k, &cfg);
                let exact: BTreeMap<u32, f64> = exact.into_iter().filter(|&(_, p)| p > 0.0).collect();
                assert_eq!(lib.keys().collect::<Vec<_>>(), exact.keys().collect::<Vec<_>>(), "support of ({i}, {k})");
                for (j, p) in &exact {
                    assert!((lib[j] - p).abs() < 1e-12, "P({j} | {i}, {k}) = {} vs {p}", lib[j]);
                }
            }
        }
    }
}

/// Empirical successor frequencies from a mechanistic sampler agree with the
/// kernel within three standard errors.
#[test]
fn monte_carlo_rows() {
    const SAMPLES: usize = 1_000_000;
    let lga = AirportConfig::laguardia();
    let stat = AirportConfig { fairness: Fairness::Statistical, ..AirportConfig::laguardia() };
    let cases = [
        // turn 0, samples 3, 5, 9 busy, queue 2, clear ramp 1
        (lga.clone(), Surface { taxi: bits("001010001"), queue: 2, turn: Some(0) }, 1u8),
        // full queue with a busy runway end, hold
        (lga, Surface { taxi: bits("110111011"), queue: 7, turn: Some(1) }, 0),
        (stat, Surface { taxi: bits("101101001"), queue: 1, turn: None }, 2),
    ];
    for (n, (cfg, s, k)) in cases.into_iter().enumerate() {
        let model = build_transitions(&cfg).unwrap();
        let row = library_row(&model, pack(&s, &cfg), k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17 + n as u64);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for _ in 0..SAMPLES {
            *counts.entry(pack(&sample_step(&s, k, &cfg, &mut rng), &cfg)).or_default() += 1;
        }
        for j in counts.keys() {
            assert!(row.contains_key(j), "sampled successor {j} absent from kernel");
        }
        for (j, &p) in &row {
            let f = *counts.get(j).unwrap_or(&0) as f64 / SAMPLES as f64;
            let se = (p * (1.0 - p) / SAMPLES as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * se + 1e-12, "case {n}: successor {j} freq {f} vs p {p} (se {se})");
        }
    }
}

fn bits(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '1').collect()
}

#[test]
fn holding_without_takeoffs_conserves_aircraft() {
    let cfg = AirportConfig { clear_prob_1: 0.0, clear_prob_2: 0.0, ..AirportConfig::laguardia() };
    let model = build_transitions(&cfg).unwrap();
    for slot in 0..model.num_states() {
        let n = model.space().n_ac(slot);
        let (cols, _) = model.row(slot, Decision::Hold).unwrap();
        assert!(cols.iter().all(|&j| model.space().n_ac(j as usize) == n));
    }
}

#[test]
fn unimpeded_transit_time() {
    for entry in [1u32, 4, 7] {
        let cfg = AirportConfig {
            move_prob: 1.0,
            clear_prob_1: 0.0,
            clear_prob_2: 0.0,
            ramps: vec![spotrelease::state::RampSpec { name: "r".into(), entry_sample: entry }],
            fairness: Fairness::None,
            ..AirportConfig::laguardia()
        };
        let model = build_transitions(&cfg).unwrap();
        let mut slot = model.space().empty_slot();
        let mut k = Decision::ClearRamp1;
        let mut steps = 0;
        while model.space().queue(slot) == 0 {
            let (cols, probs) = model.row(slot, k).unwrap();
            assert_eq!(probs, &[1.0]);
            slot = cols[0] as usize;
            k = Decision::Hold;
            steps += 1;
        }
        assert_eq!(steps, cfg.taxiway_len - entry + 1);
    }
}
