//! Test oracles written against the model rules, independent of the library's
//! codec and kernel builder.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use spotrelease::state::{AirportConfig, Fairness, RampSpec};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Surface {
    /// `taxi[s - 1]` is sample s.
    pub taxi: Vec<bool>,
    pub queue: u32,
    pub turn: Option<u8>,
}

impl Surface {
    pub fn n_ac(&self) -> u32 {
        self.taxi.iter().filter(|&&b| b).count() as u32 + self.queue
    }
}

pub fn airport(n: u32, entries: &[u32], cap: u32, fairness: Fairness) -> AirportConfig {
    AirportConfig {
        taxiway_len: n,
        ramps: entries
            .iter()
            .enumerate()
            .map(|(i, &e)| RampSpec { name: format!("r{}", i + 1), entry_sample: e })
            .collect(),
        queue_capacity: cap,
        move_prob: 0.8,
        clear_prob_1: 0.55,
        clear_prob_2: 0.15,
        sample_len_m: 200.0,
        step_seconds: 60.0,
        fairness,
    }
}

pub fn queue_bits(cap: u32) -> u32 {
    32 - cap.leading_zeros()
}

pub fn turn_bit(cfg: &AirportConfig) -> bool {
    cfg.ramps.len() == 2 && cfg.fairness == Fairness::Alternation
}

pub fn index_bits(cfg: &AirportConfig) -> u32 {
    turn_bit(cfg) as u32 + cfg.taxiway_len + queue_bits(cfg.queue_capacity)
}

pub fn pack(s: &Surface, cfg: &AirportConfig) -> u32 {
    let mut v = s.turn.unwrap_or(0) as u32;
    for &b in &s.taxi {
        v = (v << 1) | b as u32;
    }
    (v << queue_bits(cfg.queue_capacity)) | s.queue
}

pub fn unpack(idx: u32, cfg: &AirportConfig) -> Surface {
    let qb = queue_bits(cfg.queue_capacity);
    let n = cfg.taxiway_len;
    let queue = idx & ((1 << qb) - 1);
    let taxi = (0..n).map(|s| (idx >> (qb + n - 1 - s)) & 1 == 1).collect();
    let turn = turn_bit(cfg).then(|| ((idx >> (qb + n)) & 1) as u8);
    Surface { taxi, queue, turn }
}

/// All valid states in ascending index order.
pub fn states(cfg: &AirportConfig) -> Vec<u32> {
    (0..1u32 << index_bits(cfg)).filter(|&i| unpack(i, cfg).queue <= cfg.queue_capacity).collect()
}

/// Decision codes: 0 hold, r clears ramp r.
pub fn feasible(s: &Surface, k: u8, cfg: &AirportConfig) -> bool {
    if k == 0 {
        return true;
    }
    let Some(ramp) = cfg.ramps.get(k as usize - 1) else { return false };
    !s.taxi[ramp.entry_sample as usize - 1] && s.turn.is_none_or(|t| t == k - 1)
}

pub fn cost(s: &Surface, beta: f64) -> f64 {
    s.n_ac() as f64 + if s.queue == 0 { beta } else { 0.0 }
}

/// One step given the take-off outcome and the per-sample move coins
/// (`coins[s - 1]` for sample s).
pub fn apply(s: &Surface, k: u8, takeoffs: u32, coins: &[bool], cfg: &AirportConfig) -> Surface {
    let mut n = s.clone();
    n.queue -= takeoffs.min(n.queue);
    if k > 0 {
        let e = cfg.ramps[k as usize - 1].entry_sample as usize;
        assert!(!n.taxi[e - 1], "clearance onto an occupied sample");
        n.taxi[e - 1] = true;
        n.turn = n.turn.map(|t| 1 - t);
    }
    let len = n.taxi.len();
    for s in (0..len).rev() {
        if !n.taxi[s] || !coins[s] {
            continue;
        }
        if s + 1 == len {
            if n.queue < cfg.queue_capacity {
                n.queue += 1;
                n.taxi[s] = false;
            }
        } else if !n.taxi[s + 1] {
            n.taxi[s + 1] = true;
            n.taxi[s] = false;
        }
    }
    n
}

pub fn sample_step<R: Rng>(s: &Surface, k: u8, cfg: &AirportConfig, rng: &mut R) -> Surface {
    let x1 = rng.random::<f64>() < cfg.clear_prob_1;
    let x2 = rng.random::<f64>() < cfg.clear_prob_2;
    let coins: Vec<bool> = (0..cfg.taxiway_len).map(|_| rng.random::<f64>() < cfg.move_prob).collect();
    apply(s, k, x1 as u32 + x2 as u32, &coins, cfg)
}

/// Exact successor law by enumerating every take-off and move outcome.
pub fn exact_row(s: &Surface, k: u8, cfg: &AirportConfig) -> BTreeMap<u32, f64> {
    let n = cfg.taxiway_len as usize;
    let (c1, c2, m) = (cfg.clear_prob_1, cfg.clear_prob_2, cfg.move_prob);
    let mut row = BTreeMap::new();
    for x1 in 0..2u32 {
        for x2 in 0..2u32 {
            let p_t = if x1 == 1 { c1 } else { 1.0 - c1 } * if x2 == 1 { c2 } else { 1.0 - c2 };
            for mask in 0..1u32 << n {
                let coins: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let p_m: f64 = coins.iter().map(|&c| if c { m } else { 1.0 - m }).product();
                let p = p_t * p_m;
                if p == 0.0 {
                    continue;
                }
                let next = pack(&apply(s, k, x1 + x2, &coins, cfg), cfg);
                *row.entry(next).or_insert(0.0) += p;
            }
        }
    }
    row
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col] / d;
                let pivot = a[col].clone();
                for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Least stationary cost over the closed classes of the chain `rows`.
pub fn best_class_cost(rows: &[&[(usize, f64)]], costs: &[f64]) -> f64 {
    let n = rows.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            let mut seen = vec![false; n];
            let mut stack = vec![i];
            seen[i] = true;
            while let Some(s) = stack.pop() {
                for &(j, _) in rows[s] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] || !(0..n).all(|j| !reach[i][j] || reach[j][i]) {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
        let pos: BTreeMap<usize, usize> = class.iter().enumerate().map(|(p, &s)| (s, p)).collect();
        let c = class.len();
        // pi (P - I) = 0 with the last balance equation replaced by sum pi = 1.
        let mut a = vec![vec![0.0; c]; c];
        for (p, &s) in class.iter().enumerate() {
            a[p][p] -= 1.0;
            for &(j, q) in rows[s] {
                a[pos[&j]][p] += q;
            }
        }
        a[c - 1] = vec![1.0; c];
        let mut b = vec![0.0; c];
        b[c - 1] = 1.0;
        let pi = solve_dense(a, b);
        let value: f64 = class.iter().zip(&pi).map(|(&s, p)| costs[s] * p).sum();
        best = best.min(value);
        for &s in &class {
            done[s] = true;
        }
    }
    best
}

pub struct Enumeration {
    pub best_cost: f64,
    pub policies: u64,
}

/// Minimum stationary cost over every deterministic stationary policy.
/// Returns `None` when there are more than `limit` policies.
pub fn brute_force(cfg: &AirportConfig, beta: f64, limit: u64) -> Option<Enumeration> {
    let idx = states(cfg);
    let slot: BTreeMap<u32, usize> = idx.iter().enumerate().map(|(s, &i)| (i, s)).collect();
    let surfaces: Vec<Surface> = idx.iter().map(|&i| unpack(i, cfg)).collect();
    let costs: Vec<f64> = surfaces.iter().map(|s| cost(s, beta)).collect();
    let options: Vec<Vec<Vec<(usize, f64)>>> = surfaces
        .iter()
        .map(|s| {
            (0..=cfg.ramps.len() as u8)
                .filter(|&k| feasible(s, k, cfg))
                .map(|k| exact_row(s, k, cfg).into_iter().map(|(j, p)| (slot[&j], p)).collect())
                .collect()
        })
        .collect();
    let policies: u64 = options.iter().map(|o| o.len() as u64).product();
    if policies > limit {
        return None;
    }
    let mut choice = vec![0usize; idx.len()];
    let mut best = f64::INFINITY;
    loop {
        let rows: Vec<&[(usize, f64)]> = choice.iter().enumerate().map(|(s, &c)| options[s][c].as_slice()).collect();
        best = best.min(best_class_cost(&rows, &costs));
        let mut s = 0;
        loop {
            if s == choice.len() {
                return Some(Enumeration { best_cost: best, policies });
            }
            choice[s] += 1;
            if choice[s] < options[s].len() {
                break;
            }
            choice[s] = 0;
            s += 1;
        }
    }
}

/// Small airports for the exhaustive policy check, with at most 32 states.
pub fn small_airports() -> Vec<(&'static str, AirportConfig)> {
    use Fairness::*;
    vec![
        ("toy", AirportConfig::toy()),
        ("n2_cap1", airport(2, &[1], 1, None)),
        ("n3_cap1", airport(3, &[1], 1, None)),
        ("n2_cap3", airport(2, &[1], 3, None)),
        ("n3_cap3", airport(3, &[1], 3, None)),
        ("n2_two_ramps_alt", airport(2, &[1, 2], 1, Alternation)),
        ("n3_two_ramps_alt", airport(3, &[1, 3], 1, Alternation)),
        ("n2_two_ramps_free", airport(2, &[1, 2], 1, None)),
        ("n3_two_ramps_free", airport(3, &[1, 2], 1, None)),
    ]
}

/// Bounds on the optimal average cost from dense relative value iteration
/// on the enumerated kernel, with self-loop weight 0.1 against periodicity.
pub fn value_iteration_gain(cfg: &AirportConfig, beta: f64) -> (f64, f64) {
    let idx = states(cfg);
    let slot: BTreeMap<u32, usize> = idx.iter().enumerate().map(|(s, &i)| (i, s)).collect();
    let surfaces: Vec<Surface> = idx.iter().map(|&i| unpack(i, cfg)).collect();
    let costs: Vec<f64> = surfaces.iter().map(|s| cost(s, beta)).collect();
    let options: Vec<Vec<Vec<(usize, f64)>>> = surfaces
        .iter()
        .map(|s| {
            (0..=cfg.ramps.len() as u8)
                .filter(|&k| feasible(s, k, cfg))
                .map(|k| exact_row(s, k, cfg).into_iter().map(|(j, p)| (slot[&j], p)).collect())
                .collect()
        })
        .collect();
    let tau = 0.1;
    let mut h = vec![0.0; idx.len()];
    for _ in 0..2_000_000 {
        let th: Vec<f64> = (0..idx.len())
            .map(|i| {
                options[i]
                    .iter()
                    .map(|row| costs[i] + tau * h[i] + (1.0 - tau) * row.iter().map(|&(j, p)| p * h[j]).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let diff: Vec<f64> = th.iter().zip(&h).map(|(a, b)| a - b).collect();
        let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let base = th[0];
        h = th.iter().map(|v| v - base).collect();
        if hi - lo < 1e-11 {
            return (lo, hi);
        }
    }
    panic!("value iteration did not converge");
}

/// Airports with exactly 64 states, where every layout has about 2^32
/// deterministic policies.
pub fn airports_64() -> Vec<(&'static str, AirportConfig)> {
    use Fairness::*;
    vec![
        ("n4_cap3", airport(4, &[1], 3, None)),
        ("n5_cap1", airport(5, &[1], 1, None)),
        ("n4_two_ramps_alt", airport(4, &[1, 3], 1, Alternation)),
        ("n4_cap3_two_ramps_free", airport(4, &[1, 3], 3, None)),
    ]
}
