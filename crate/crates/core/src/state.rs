//! Airport configuration and the bit-coded surface state.
//!
//! A state index is the decimal value of the concatenated bit string
//!
//! ```text
//! [turn?][taxiway sample 1 .. sample N][queue, B bits]
//!  MSB                                          LSB
//! ```
//!
//! The turn bit only exists for two-ramp airports operated under ramp
//! alternation. Queue codes above the buffer capacity are not part of the
//! state space, so the valid indices are not contiguous; [`StateSpace`]
//! maps them onto a dense `0..num_states` slot numbering used by the kernel
//! and the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported index width in bits.
pub const MAX_INDEX_BITS: u32 = 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fairness {
    /// Ramps are serviced strictly in turn; adds a turn bit to the state.
    Alternation,
    /// Ramps are serviced equally often on average (LP side constraint).
    Statistical,
    None,
}

impl Fairness {
    pub fn as_str(self) -> &'static str {
        match self {
            Fairness::Alternation => "alternation",
            Fairness::Statistical => "statistical",
            Fairness::None => "none",
        }
    }
}

impl std::str::FromStr for Fairness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alternation" => Ok(Fairness::Alternation),
            "statistical" => Ok(Fairness::Statistical),
            "none" => Ok(Fairness::None),
            other => Err(Error::Parse(format!("unknown fairness mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    pub name: String,
    /// Taxiway sample (1-based) occupied by an aircraft right after its
    /// taxi clearance.
    pub entry_sample: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AirportConfig {
    pub taxiway_len: u32,
    pub ramps: Vec<RampSpec>,
    pub queue_capacity: u32,
    pub move_prob: f64,
    pub clear_prob_1: f64,
    pub clear_prob_2: f64,
    pub sample_len_m: f64,
    pub step_seconds: f64,
    pub fairness: Fairness,
}

impl AirportConfig {
    /// Two-ramp LaGuardia model with the calibrated parameter set.
    pub fn laguardia() -> Self {
        AirportConfig {
            taxiway_len: 9,
            ramps: vec![
                RampSpec { name: "ramp1".into(), entry_sample: 1 },
                RampSpec { name: "ramp2".into(), entry_sample: 7 },
            ],
            queue_capacity: 7,
            move_prob: 0.9084,
            clear_prob_1: 0.5140,
            clear_prob_2: 0.0929,
            sample_len_m: 200.0,
            step_seconds: 60.0,
            fairness: Fairness::Alternation,
        }
    }

    /// Synthetic second airport with a shorter taxiway and a busier runway.
    /// Not a reproduction of any real layout.
    pub fn sea_like() -> Self {
        AirportConfig {
            taxiway_len: 8,
            ramps: vec![
                RampSpec { name: "north".into(), entry_sample: 1 },
                RampSpec { name: "south".into(), entry_sample: 5 },
            ],
            queue_capacity: 6,
            move_prob: 0.88,
            clear_prob_1: 0.56,
            clear_prob_2: 0.11,
            sample_len_m: 200.0,
            step_seconds: 60.0,
            fairness: Fairness::Alternation,
        }
    }

    /// Single-sample, single-slot airport with four states.
    pub fn toy() -> Self {
        AirportConfig {
            taxiway_len: 1,
            ramps: vec![RampSpec { name: "ramp1".into(), entry_sample: 1 }],
            queue_capacity: 1,
            move_prob: 1.0,
            clear_prob_1: 0.5,
            clear_prob_2: 0.0,
            sample_len_m: 200.0,
            step_seconds: 60.0,
            fairness: Fairness::None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AirportConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Number of bits coding the runway queue: ceil(log2(B_cap + 1)).
    pub fn queue_bits(&self) -> u32 {
        u32::BITS - self.queue_capacity.leading_zeros()
    }

    pub fn has_turn_bit(&self) -> bool {
        self.fairness == Fairness::Alternation && self.ramps.len() == 2
    }

    /// Fairness mode actually in force; single-ramp airports have nothing to
    /// balance.
    pub fn effective_fairness(&self) -> Fairness {
        if self.ramps.len() < 2 {
            Fairness::None
        } else {
            self.fairness
        }
    }

    pub fn index_bits(&self) -> u32 {
        self.has_turn_bit() as u32 + self.taxiway_len + self.queue_bits()
    }

    pub fn num_states(&self) -> usize {
        let turn = if self.has_turn_bit() { 2 } else { 1 };
        turn * (1usize << self.taxiway_len) * (self.queue_capacity as usize + 1)
    }

    /// Saturated service rate c1 + c2 (aircraft per step).
    pub fn service_rate(&self) -> f64 {
        self.clear_prob_1 + self.clear_prob_2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.taxiway_len == 0 {
            return bad("taxiway_len must be at least 1".into());
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be at least 1".into());
        }
        if self.ramps.is_empty() || self.ramps.len() > 2 {
            return bad(format!("expected 1 or 2 ramps, got {}", self.ramps.len()));
        }
        for r in &self.ramps {
            if r.entry_sample == 0 || r.entry_sample > self.taxiway_len {
                return bad(format!(
                    "ramp `{}` entry sample {} outside [1, {}]",
                    r.name, r.entry_sample, self.taxiway_len
                ));
            }
        }
        if self.ramps.len() == 2 && self.ramps[0].entry_sample >= self.ramps[1].entry_sample {
            return bad("ramp 1 must be the farther ramp (entry_1 < entry_2)".into());
        }
        if !(self.move_prob > 0.0 && self.move_prob <= 1.0) {
            return bad(format!("move_prob {} outside (0, 1]", self.move_prob));
        }
        for (name, p) in [("clear_prob_1", self.clear_prob_1), ("clear_prob_2", self.clear_prob_2)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.index_bits() > MAX_INDEX_BITS {
            return bad(format!("state index needs {} bits, at most {MAX_INDEX_BITS} supported", self.index_bits()));
        }
        Ok(())
    }
}

/// Integer identifier of a surface state (the decimal value of its bit code).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateIndex(pub u32);

impl std::fmt::Display for StateIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SurfaceState {
    /// `taxiway[s - 1]` is true when sample `s` holds an aircraft. Sample 1
    /// is the farthest from the runway.
    pub taxiway: Vec<bool>,
    pub queue: u32,
    /// Ramp that must be serviced next (0 = ramp 1, 1 = ramp 2); only
    /// present in alternation mode.
    pub turn: Option<u8>,
}

impl SurfaceState {
    pub fn empty(config: &AirportConfig) -> Self {
        SurfaceState {
            taxiway: vec![false; config.taxiway_len as usize],
            queue: 0,
            turn: config.has_turn_bit().then_some(0),
        }
    }

    /// Taxiing aircraft, runway buffer included.
    pub fn n_ac(&self) -> u32 {
        self.taxiway.iter().filter(|&&b| b).count() as u32 + self.queue
    }
}

pub fn encode(state: &SurfaceState, config: &AirportConfig) -> Result<StateIndex> {
    let n = config.taxiway_len as usize;
    if state.taxiway.len() != n {
        return Err(Error::InvalidState(format!("taxiway has {} samples, config expects {n}", state.taxiway.len())));
    }
    if state.queue > config.queue_capacity {
        return Err(Error::InvalidState(format!("queue {} exceeds capacity {}", state.queue, config.queue_capacity)));
    }
    let turn = match (config.has_turn_bit(), state.turn) {
        (true, Some(t @ 0..=1)) => t as u32,
        (true, _) => return Err(Error::InvalidState("turn bit must be 0 or 1".into())),
        (false, None) => 0,
        (false, Some(_)) => return Err(Error::InvalidState("turn bit given but config has none".into())),
    };
    let mask = state.taxiway.iter().fold(0u32, |acc, &occupied| (acc << 1) | occupied as u32);
    let qbits = config.queue_bits();
    Ok(StateIndex(((turn << n) | mask) << qbits | state.queue))
}

pub fn decode(idx: StateIndex, config: &AirportConfig) -> Result<SurfaceState> {
    if idx.0 >> config.index_bits() != 0 {
        return Err(Error::IndexOutOfRange(idx.0));
    }
    let n = config.taxiway_len;
    let qbits = config.queue_bits();
    let queue = idx.0 & ((1 << qbits) - 1);
    if queue > config.queue_capacity {
        return Err(Error::InvalidState(format!(
            "index {} codes queue {queue} above capacity {}",
            idx.0, config.queue_capacity
        )));
    }
    let mask = (idx.0 >> qbits) & ((1 << n) - 1);
    let taxiway = (1..=n).map(|s| mask >> (n - s) & 1 == 1).collect();
    let turn = config.has_turn_bit().then(|| (idx.0 >> (qbits + n) & 1) as u8);
    Ok(SurfaceState { taxiway, queue, turn })
}

/// All valid state indices in ascending order.
pub fn enumerate_states(config: &AirportConfig) -> Result<Vec<StateIndex>> {
    config.validate()?;
    let space = StateSpace::new(config)?;
    Ok((0..space.len()).map(|slot| space.index_of(slot)).collect())
}

/// Dense numbering of the valid states plus fast bit-level accessors.
///
/// Slot order follows index order. A slot is split as
/// `slot = upper * (B_cap + 1) + queue` where `upper` holds the turn and
/// taxiway bits exactly as in the index.
#[derive(Clone, Debug)]
pub struct StateSpace {
    n: u32,
    qbits: u32,
    qcap: u32,
    turn: bool,
    len: usize,
}

impl StateSpace {
    pub fn new(config: &AirportConfig) -> Result<Self> {
        config.validate()?;
        Ok(StateSpace {
            n: config.taxiway_len,
            qbits: config.queue_bits(),
            qcap: config.queue_capacity,
            turn: config.has_turn_bit(),
            len: config.num_states(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn taxiway_len(&self) -> u32 {
        self.n
    }

    pub fn queue_capacity(&self) -> u32 {
        self.qcap
    }

    pub fn has_turn(&self) -> bool {
        self.turn
    }

    #[inline]
    pub fn index_of(&self, slot: usize) -> StateIndex {
        let upper = slot as u32 / (self.qcap + 1);
        let queue = slot as u32 % (self.qcap + 1);
        StateIndex(upper << self.qbits | queue)
    }

    #[inline]
    pub fn slot_of(&self, idx: StateIndex) -> Option<usize> {
        let upper = idx.0 >> self.qbits;
        let queue = idx.0 & ((1 << self.qbits) - 1);
        let turn_bits = self.turn as u32;
        if queue > self.qcap || upper >> (self.n + turn_bits) != 0 {
            return None;
        }
        Some((upper * (self.qcap + 1) + queue) as usize)
    }

    /// Slot of the empty surface (turn pointing at ramp 1).
    pub fn empty_slot(&self) -> usize {
        0
    }

    /// Taxiway occupancy mask; sample `s` lives at bit `N - s`.
    #[inline]
    pub fn mask(&self, slot: usize) -> u32 {
        (slot as u32 / (self.qcap + 1)) & ((1 << self.n) - 1)
    }

    #[inline]
    pub fn queue(&self, slot: usize) -> u32 {
        slot as u32 % (self.qcap + 1)
    }

    #[inline]
    pub fn turn(&self, slot: usize) -> u32 {
        if self.turn {
            (slot as u32 / (self.qcap + 1)) >> self.n
        } else {
            0
        }
    }

    #[inline]
    pub fn compose(&self, turn: u32, mask: u32, queue: u32) -> usize {
        debug_assert!(queue <= self.qcap);
        let upper = if self.turn { turn << self.n | mask } else { mask };
        (upper * (self.qcap + 1) + queue) as usize
    }

    #[inline]
    pub fn sample_bit(&self, sample: u32) -> u32 {
        1 << (self.n - sample)
    }

    #[inline]
    pub fn occupied(&self, slot: usize, sample: u32) -> bool {
        self.mask(slot) & self.sample_bit(sample) != 0
    }

    #[inline]
    pub fn n_ac(&self, slot: usize) -> u32 {
        self.mask(slot).count_ones() + self.queue(slot)
    }

    /// Largest possible taxiing count, N + B_cap.
    pub fn max_n_ac(&self) -> u32 {
        self.n + self.qcap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twelve_bit() -> AirportConfig {
        AirportConfig { fairness: Fairness::None, ..AirportConfig::laguardia() }
    }

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn reference_state_619() {
        let cfg = twelve_bit();
        let state = SurfaceState { taxiway: bits("001001101"), queue: 3, turn: None };
        assert_eq!(encode(&state, &cfg).unwrap(), StateIndex(619));
        assert_eq!(u32::from_str_radix("001001101011", 2).unwrap(), 619);
        assert_eq!(decode(StateIndex(619), &cfg).unwrap(), state);
    }

    #[test]
    fn empty_and_queue_only() {
        let cfg = twelve_bit();
        assert_eq!(encode(&SurfaceState::empty(&cfg), &cfg).unwrap(), StateIndex(0));
        let mut s = SurfaceState::empty(&cfg);
        s.queue = 7;
        assert_eq!(encode(&s, &cfg).unwrap(), StateIndex(7));
        let d = decode(StateIndex(6), &cfg).unwrap();
        assert_eq!(d.queue, 6);
        assert!(d.taxiway.iter().all(|b| !b));
    }

    #[test]
    fn encode_errors() {
        let cfg = twelve_bit();
        let mut s = SurfaceState::empty(&cfg);
        s.queue = 8;
        assert!(matches!(encode(&s, &cfg), Err(Error::InvalidState(_))));
        let short = SurfaceState { taxiway: vec![false; 3], queue: 0, turn: None };
        assert!(encode(&short, &cfg).is_err());
    }

    #[test]
    fn decode_errors() {
        let mut cfg = twelve_bit();
        assert!(matches!(decode(StateIndex(1 << 12), &cfg), Err(Error::IndexOutOfRange(_))));
        cfg.queue_capacity = 5;
        assert!(matches!(decode(StateIndex(6), &cfg), Err(Error::InvalidState(_))));
    }

    #[test]
    fn enumeration_counts() {
        let toy = AirportConfig::toy();
        let all = enumerate_states(&toy).unwrap();
        assert_eq!(all, vec![StateIndex(0), StateIndex(1), StateIndex(2), StateIndex(3)]);
        assert_eq!(enumerate_states(&AirportConfig::laguardia()).unwrap().len(), 8192);
        let mut bad = toy.clone();
        bad.taxiway_len = 0;
        assert!(enumerate_states(&bad).is_err());
    }

    #[test]
    fn enumeration_skips_invalid_queue_codes() {
        let cfg = AirportConfig { queue_capacity: 5, ..twelve_bit() };
        let all = enumerate_states(&cfg).unwrap();
        assert_eq!(all.len(), 512 * 6);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|i| i.0 & 7 <= 5));
    }

    #[test]
    fn exhaustive_roundtrip_and_counts() {
        for cfg in [AirportConfig::laguardia(), twelve_bit(), AirportConfig::toy()] {
            let space = StateSpace::new(&cfg).unwrap();
            for slot in 0..space.len() {
                let idx = space.index_of(slot);
                assert_eq!(space.slot_of(idx), Some(slot));
                let st = decode(idx, &cfg).unwrap();
                assert_eq!(encode(&st, &cfg).unwrap(), idx);
                assert_eq!(st.n_ac(), space.n_ac(slot));
                assert_eq!(st.queue, space.queue(slot));
                for s in 1..=cfg.taxiway_len {
                    assert_eq!(st.taxiway[s as usize - 1], space.occupied(slot, s));
                }
                if let Some(t) = st.turn {
                    assert_eq!(t as u32, space.turn(slot));
                }
            }
        }
    }

    #[test]
    fn queue_bits() {
        let mut cfg = AirportConfig::toy();
        for (cap, b) in [(1, 1), (2, 2), (3, 2), (4, 3), (7, 3), (8, 4)] {
            cfg.queue_capacity = cap;
            assert_eq!(cfg.queue_bits(), b);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = AirportConfig::laguardia();
        cfg.ramps.swap(0, 1);
        assert!(cfg.validate().is_err());
        let mut cfg = AirportConfig::laguardia();
        cfg.ramps[1].entry_sample = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = AirportConfig::laguardia();
        cfg.move_prob = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = AirportConfig::laguardia();
        assert_eq!(AirportConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
