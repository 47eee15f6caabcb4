use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::handle::OracleHandle;
use super::{decode_table, encode_table};
use crate::bitkit::BitString;
use crate::error::{contract, Error, Result};

/// Largest supported Simon width (table has `2^n` entries).
pub const SIMON_MAX_N: usize = 20;

/// A Simon problem: `f(x) = f(y)` iff `x ⊕ y ∈ {0, s}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimonInstance {
    n: usize,
    s: BitString,
    table: Vec<u64>,
    seed: u64,
    origin: ShiftOrigin,
}

/// How the shift of an instance was chosen; needed to regenerate it from the seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftOrigin {
    /// Drawn from the nonzero strings.
    #[default]
    Nonzero,
    /// Drawn from all strings.
    Any,
    /// Supplied by the caller.
    Explicit,
}

/// Answer of the flagged oracle `(x, b) ↦ (f(x), b ⊕ [x = s])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedAnswer {
    pub value: BitString,
    pub flag: bool,
}

fn check_width(n: usize) {
    assert!((1..=SIMON_MAX_N).contains(&n), "Simon width {n} outside 1..={SIMON_MAX_N}");
}

/// Generates a Simon instance with a nonzero shift unless `shift` is supplied.
///
/// Cosets `{x, x ⊕ s}` are enumerated by their smaller member and mapped to
/// distinct images drawn by a seeded Fisher–Yates shuffle.
#[must_use]
pub fn gen_simon(n: usize, seed: u64, shift: Option<BitString>) -> SimonInstance {
    check_width(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, origin) = match shift {
        Some(s) => {
            assert_eq!(s.width(), n, "shift width mismatch");
            (s, ShiftOrigin::Explicit)
        }
        None => (BitString::new(n, rng.gen_range(1..(1u64 << n))), ShiftOrigin::Nonzero),
    };
    build(n, s, seed, origin, &mut rng)
}

/// Like [`gen_simon`] but draws the shift uniformly from all `2^n` strings, zero included.
#[must_use]
pub fn gen_simon_any_shift(n: usize, seed: u64) -> SimonInstance {
    check_width(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = BitString::new(n, rng.gen_range(0..(1u64 << n)));
    build(n, s, seed, ShiftOrigin::Any, &mut rng)
}

fn build(n: usize, s: BitString, seed: u64, origin: ShiftOrigin, rng: &mut ChaCha8Rng) -> SimonInstance {
    let size = 1usize << n;
    let sv = s.value() as usize;
    let reps: Vec<usize> = (0..size).filter(|&x| x <= x ^ sv).collect();
    let mut images: Vec<u64> = (0..size as u64).collect();
    let (chosen, _) = images.partial_shuffle(rng, reps.len());
    let mut table = vec![0u64; size];
    for (&x, &img) in reps.iter().zip(chosen.iter()) {
        table[x] = img;
        table[x ^ sv] = img;
    }
    SimonInstance { n, s, table, seed, origin }
}

impl SimonInstance {
    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn secret(&self) -> BitString {
        self.s
    }

    #[must_use]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw table, indexed by the big-endian value of the input.
    #[must_use]
    pub fn table(&self) -> &[u64] {
        &self.table
    }

    /// Plain evaluation `f(x)`.
    #[inline]
    #[must_use]
    pub fn eval(&self, x: &BitString) -> BitString {
        assert_eq!(x.width(), self.n, "query width mismatch");
        BitString::new(self.n, self.table[x.value() as usize])
    }

    #[inline]
    #[must_use]
    pub fn eval_raw(&self, x: u64) -> u64 {
        self.table[x as usize]
    }

    /// Number of distinct outputs.
    #[must_use]
    pub fn image_size(&self) -> usize {
        let mut v = self.table.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Checks the promise over every pair of inputs.
    #[must_use]
    pub fn promise_holds(&self) -> bool {
        let s = self.s.value();
        let size = self.table.len() as u64;
        (0..size).all(|x| (0..size).all(|y| (self.table[x as usize] == self.table[y as usize]) == (x == y || x == y ^ s)))
    }

    /// Serializable record; `table` is optional on input because it is regenerated from the seed.
    #[must_use]
    pub fn to_record(&self) -> SimonRecord {
        SimonRecord {
            n: self.n,
            s: self.s,
            table: Some(encode_table(&self.table, self.n)),
            seed: self.seed,
            origin: self.origin,
        }
    }

    /// Rebuilds from a record, checking any stored table against the regenerated one.
    pub fn from_record(rec: &SimonRecord) -> Result<Self> {
        if !(1..=SIMON_MAX_N).contains(&rec.n) || rec.s.width() != rec.n {
            return Err(Error::InvalidConfig(format!("bad Simon record n={}", rec.n)));
        }
        let inst = match rec.origin {
            ShiftOrigin::Nonzero => gen_simon(rec.n, rec.seed, None),
            ShiftOrigin::Any => gen_simon_any_shift(rec.n, rec.seed),
            ShiftOrigin::Explicit => gen_simon(rec.n, rec.seed, Some(rec.s)),
        };
        if inst.s != rec.s {
            return Err(Error::InvalidConfig("stored shift does not match seed".into()));
        }
        if let Some(t) = &rec.table {
            let stored = decode_table(t, rec.n, 1 << rec.n)?;
            if stored != inst.table {
                return Err(Error::InvalidConfig("stored table does not match seed".into()));
            }
        }
        Ok(inst)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimonRecord {
    pub n: usize,
    pub s: BitString,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    pub seed: u64,
    #[serde(default)]
    pub origin: ShiftOrigin,
}

/// Flagged evaluation `(f(x), b ⊕ [x = s])`.
#[must_use]
pub fn simon_eval(inst: &SimonInstance, x: &BitString, b: bool) -> FlaggedAnswer {
    FlaggedAnswer { value: inst.eval(x), flag: b ^ (*x == inst.s) }
}

/// Composes the outputs with a permutation `h` of `{0,1}^n` given as a lookup table.
pub fn permute_outputs(inst: &SimonInstance, h: &[u64]) -> Result<SimonInstance> {
    let size = 1usize << inst.n;
    if h.len() != size {
        return contract(format!("permutation has {} entries, expected {size}", h.len()));
    }
    let mut seen = vec![false; size];
    for &v in h {
        if v as usize >= size || std::mem::replace(&mut seen[v as usize], true) {
            return contract("output map is not a bijection");
        }
    }
    Ok(SimonInstance {
        n: inst.n,
        s: inst.s,
        table: inst.table.iter().map(|&y| h[y as usize]).collect(),
        seed: inst.seed,
        origin: inst.origin,
    })
}

pub type PlainOracle = OracleHandle<BitString, BitString>;
pub type FlaggedOracle = OracleHandle<(BitString, bool), FlaggedAnswer>;

/// Plain oracle handle charging one query per call.
#[must_use]
pub fn plain_handle(inst: Arc<SimonInstance>) -> PlainOracle {
    OracleHandle::new(1, move |x: &BitString| inst.eval(x))
}

/// Native flagged oracle handle charging one query per call.
#[must_use]
pub fn flagged_handle(inst: Arc<SimonInstance>) -> FlaggedOracle {
    OracleHandle::new(1, move |(x, b): &(BitString, bool)| simon_eval(&inst, x, *b))
}

/// Outcome of running a flagged-oracle algorithm against a simulated flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    /// Some query raised the simulated flag; this is the shift.
    Confirmed(BitString),
    /// No check ever fired: the fallback guess is the all-zeros shift.
    ZeroCandidate,
}

/// A flagged oracle simulated from a plain one.
///
/// Each flagged query `(x, b)` spends three plain queries: `f(x)`, `f(t)` and
/// `f(t ⊕ x)` with the fixed probe `t = 0`. The flag fires when `x ≠ 0` and the
/// two probe values agree, which identifies `x = s` whenever `s ≠ 0`.
pub struct FlaggedFromPlain {
    handle: FlaggedOracle,
    confirmed: Arc<Mutex<Option<BitString>>>,
}

/// Wraps a plain oracle of width `n` into a flagged one.
#[must_use]
pub fn simulate_flagged_from_plain(plain: Arc<PlainOracle>, n: usize) -> FlaggedFromPlain {
    let confirmed = Arc::new(Mutex::new(None));
    let slot = Arc::clone(&confirmed);
    let t = BitString::zeros(n);
    let handle = OracleHandle::new(1, move |(x, b): &(BitString, bool)| {
        let value = plain.query(x);
        let ft = plain.query(&t);
        let ftx = plain.query(&(t ^ *x));
        let hit = !x.is_zero() && ft == ftx;
        if hit {
            *slot.lock().expect("confirmation slot poisoned") = Some(*x);
        }
        FlaggedAnswer { value, flag: *b ^ hit }
    });
    FlaggedFromPlain { handle, confirmed }
}

impl FlaggedFromPlain {
    #[must_use]
    pub fn handle(&self) -> &FlaggedOracle {
        &self.handle
    }

    /// Confirmed shift so far, or the zero-shift fallback.
    #[must_use]
    pub fn resolve(&self) -> Resolution {
        match *self.confirmed.lock().expect("confirmation slot poisoned") {
            Some(s) => Resolution::Confirmed(s),
            None => Resolution::ZeroCandidate,
        }
    }
}

/// Runs a flagged-oracle algorithm up to `repetitions` times on the simulated
/// oracle and falls back to the zero shift if no run confirms a candidate.
pub fn solve_flagged_via_plain(
    plain: Arc<PlainOracle>,
    n: usize,
    repetitions: usize,
    mut algorithm: impl FnMut(&FlaggedOracle),
) -> Resolution {
    let sim = simulate_flagged_from_plain(plain, n);
    for _ in 0..repetitions {
        algorithm(sim.handle());
        if let r @ Resolution::Confirmed(_) = sim.resolve() {
            return r;
        }
    }
    Resolution::ZeroCandidate
}
