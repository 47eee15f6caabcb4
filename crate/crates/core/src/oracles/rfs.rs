use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::handle::OracleHandle;
use super::{decode_table, encode_table};
use crate::bitkit::{dot2, BitString};
use crate::error::{contract, Error, Result};

/// Largest number of stored path secrets.
pub const RFS_MAX_NODES: usize = 1 << 20;

/// A recursive Fourier sampling instance with inner-product dispersal.
///
/// Every path-label `(x₁..x_k)` with `0 ≤ k < l` carries an `n`-bit secret.
/// The root additionally hides one bit, revealed by guessing the root secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RfsInstance {
    n: usize,
    l: usize,
    secrets: Vec<u64>,
    hidden_bit: bool,
    seed: u64,
}

/// A query to the RFS oracle.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RfsQuery {
    pub path: Vec<BitString>,
    pub guess: Option<BitString>,
    /// Marks a query addressed at a leaf (path length `l`).
    pub leaf: bool,
}

impl RfsQuery {
    #[must_use]
    pub fn root(guess: BitString) -> Self {
        Self { path: Vec::new(), guess: Some(guess), leaf: false }
    }

    #[must_use]
    pub fn inner(path: Vec<BitString>, guess: BitString) -> Self {
        Self { path, guess: Some(guess), leaf: false }
    }

    #[must_use]
    pub fn leaf(path: Vec<BitString>) -> Self {
        Self { path, guess: None, leaf: true }
    }
}

/// Oracle answer: a bit, or `⊥` when the validity guess is wrong.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfsAnswer {
    Bit(bool),
    Bottom,
}

impl RfsAnswer {
    /// Two-bit code used by quantum registers: `0 → 00`, `1 → 01`, `⊥ → 10`.
    #[must_use]
    pub fn code(self) -> u64 {
        match self {
            RfsAnswer::Bit(b) => u64::from(b),
            RfsAnswer::Bottom => 2,
        }
    }

    #[must_use]
    pub fn bit(self) -> Option<bool> {
        match self {
            RfsAnswer::Bit(b) => Some(b),
            RfsAnswer::Bottom => None,
        }
    }
}

/// Number of path-labels of length `0..l` over `n`-bit labels.
#[must_use]
pub fn path_count(n: usize, l: usize) -> usize {
    (0..l).map(|k| 1usize << (n * k)).sum()
}

fn path_offset(n: usize, k: usize) -> usize {
    (0..k).map(|j| 1usize << (n * j)).sum()
}

/// Generates an instance with uniformly random secrets and hidden bit.
///
/// Secrets are drawn depth by depth in lexicographic path order, then the hidden bit.
#[must_use]
pub fn gen_rfs(n: usize, l: usize, seed: u64) -> RfsInstance {
    assert!(n >= 1 && l >= 1, "RFS needs n ≥ 1 and l ≥ 1");
    assert!(n * (l - 1) < 40 && path_count(n, l) <= RFS_MAX_NODES, "RFS instance too large");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let secrets = (0..path_count(n, l)).map(|_| rng.gen_range(0..(1u64 << n))).collect();
    let hidden_bit = rng.gen();
    RfsInstance { n, l, secrets, hidden_bit, seed }
}

impl RfsInstance {
    /// Builds an instance from an explicit secret table (indexed like [`RfsInstance::path_index`]).
    pub fn from_parts(n: usize, l: usize, secrets: Vec<u64>, hidden_bit: bool, seed: u64) -> Result<Self> {
        if n == 0 || l == 0 || secrets.len() != path_count(n, l) || secrets.iter().any(|&s| s >> n != 0) {
            return contract("secret table does not match (n, l)");
        }
        Ok(Self { n, l, secrets, hidden_bit, seed })
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn l(&self) -> usize {
        self.l
    }

    #[must_use]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[must_use]
    pub fn hidden_bit(&self) -> bool {
        self.hidden_bit
    }

    #[must_use]
    pub fn secret_table(&self) -> &[u64] {
        &self.secrets
    }

    /// Flat index of a path-label of length `< l`.
    #[must_use]
    pub fn path_index(&self, path: &[BitString]) -> usize {
        assert!(path.len() < self.l, "path of length {} has no secret", path.len());
        let mut idx = 0usize;
        for x in path {
            assert_eq!(x.width(), self.n, "path label width mismatch");
            idx = (idx << self.n) | x.value() as usize;
        }
        path_offset(self.n, path.len()) + idx
    }

    /// `s(x₁..x_k)` for `k < l`.
    #[must_use]
    pub fn secret(&self, path: &[BitString]) -> BitString {
        BitString::new(self.n, self.secrets[self.path_index(path)])
    }

    #[must_use]
    pub fn root_secret(&self) -> BitString {
        self.secret(&[])
    }

    #[must_use]
    pub fn to_record(&self) -> RfsRecord {
        RfsRecord {
            n: self.n,
            l: self.l,
            secret_table: Some(encode_table(&self.secrets, self.n)),
            hidden_bit: self.hidden_bit,
            seed: self.seed,
        }
    }

    pub fn from_record(rec: &RfsRecord) -> Result<Self> {
        if rec.n == 0 || rec.l == 0 || rec.n * (rec.l - 1) >= 40 || path_count(rec.n, rec.l) > RFS_MAX_NODES {
            return Err(Error::InvalidConfig(format!("bad RFS record n={} l={}", rec.n, rec.l)));
        }
        let inst = gen_rfs(rec.n, rec.l, rec.seed);
        if inst.hidden_bit != rec.hidden_bit {
            return Err(Error::InvalidConfig("stored hidden bit does not match seed".into()));
        }
        if let Some(t) = &rec.secret_table {
            if decode_table(t, rec.n, inst.secrets.len())? != inst.secrets {
                return Err(Error::InvalidConfig("stored secrets do not match seed".into()));
            }
        }
        Ok(inst)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfsRecord {
    pub n: usize,
    pub l: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_table: Option<String>,
    pub hidden_bit: bool,
    pub seed: u64,
}

/// Evaluates the RFS oracle.
///
/// - `k = 0`: the hidden bit if the guess is the root secret, else `⊥`.
/// - `0 < k < l`: `s(x₁..x_{k-1}) · x_k` if the guess is `s(x₁..x_k)`, else `⊥`.
/// - `k = l` with the leaf flag: `s(x₁..x_{l-1}) · x_l`.
pub fn rfs_query(inst: &RfsInstance, q: &RfsQuery) -> Result<RfsAnswer> {
    let k = q.path.len();
    if k > inst.l {
        return contract(format!("path length {k} exceeds depth {}", inst.l));
    }
    if q.path.iter().any(|x| x.width() != inst.n) || q.guess.is_some_and(|g| g.width() != inst.n) {
        return contract("label width mismatch");
    }
    if q.leaf {
        if k != inst.l || q.guess.is_some() {
            return contract("leaf query must have full path length and no guess");
        }
        let parent = inst.secret(&q.path[..k - 1]);
        return Ok(RfsAnswer::Bit(dot2(&parent, &q.path[k - 1])));
    }
    if k == inst.l {
        return contract("full-length path requires the leaf flag");
    }
    let Some(guess) = q.guess else {
        return contract("non-leaf query requires a guess");
    };
    if guess != inst.secret(&q.path) {
        return Ok(RfsAnswer::Bottom);
    }
    if k == 0 {
        Ok(RfsAnswer::Bit(inst.hidden_bit))
    } else {
        let parent = inst.secret(&q.path[..k - 1]);
        Ok(RfsAnswer::Bit(dot2(&parent, &q.path[k - 1])))
    }
}

pub type RfsOracle = OracleHandle<RfsQuery, RfsAnswer>;

/// Oracle handle over an instance; malformed queries are contract violations and panic.
#[must_use]
pub fn rfs_handle(inst: Arc<RfsInstance>) -> RfsOracle {
    OracleHandle::new(1, move |q: &RfsQuery| rfs_query(&inst, q).expect("malformed RFS query"))
}

/// Fixed-width encoding of variable-length RFS queries for quantum registers.
///
/// Layout, most significant field first: a length field holding `k ∈ 0..=l`,
/// the leaf bit, `l` path slots of `n` bits (slots past `k` are ignored), and
/// an `n`-bit guess.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RfsCodec {
    pub n: usize,
    pub l: usize,
}

impl RfsCodec {
    #[must_use]
    pub fn new(n: usize, l: usize) -> Self {
        Self { n, l }
    }

    #[must_use]
    pub fn len_bits(&self) -> usize {
        (usize::BITS - self.l.leading_zeros()) as usize
    }

    /// Total query width.
    #[must_use]
    pub fn width(&self) -> usize {
        self.len_bits() + 1 + self.l * self.n + self.n
    }

    #[must_use]
    pub fn encode(&self, q: &RfsQuery) -> u64 {
        let n = self.n;
        let mut v = q.path.len() as u64;
        v = (v << 1) | u64::from(q.leaf);
        for i in 0..self.l {
            v = (v << n) | q.path.get(i).map_or(0, BitString::value);
        }
        (v << n) | q.guess.map_or(0, |g| g.value())
    }

    /// Decodes a code word; `None` for combinations the oracle does not define.
    #[must_use]
    pub fn decode(&self, code: u64) -> Option<RfsQuery> {
        let n = self.n;
        let nmask = (1u64 << n) - 1;
        let guess = code & nmask;
        let mut rest = code >> n;
        let mut slots = vec![0u64; self.l];
        for i in (0..self.l).rev() {
            slots[i] = rest & nmask;
            rest >>= n;
        }
        let leaf = rest & 1 == 1;
        let k = (rest >> 1) as usize;
        if k > self.l || leaf != (k == self.l) {
            return None;
        }
        let path = slots[..k].iter().map(|&x| BitString::new(n, x)).collect();
        Some(RfsQuery { path, guess: (!leaf).then(|| BitString::new(n, guess)), leaf })
    }

    /// Answer for a code word: undefined combinations answer `⊥`.
    #[must_use]
    pub fn answer(&self, inst: &RfsInstance, code: u64) -> RfsAnswer {
        match self.decode(code) {
            Some(q) => rfs_query(inst, &q).unwrap_or(RfsAnswer::Bottom),
            None => RfsAnswer::Bottom,
        }
    }
}
