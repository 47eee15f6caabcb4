use std::collections::HashMap;
use std::sync::Arc;

use super::handle::OracleHandle;
use super::rfs::{RfsAnswer, RfsInstance, RfsOracle, RfsQuery};
use crate::bitkit::{dot2, BitString};
use crate::error::{contract, Result};

/// Xor offsets applied to the lifted secret at chosen non-root paths.
///
/// Keys are lifted path-labels (each label `2n` bits wide). Adding two offsets
/// at the same path composes them by xor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Deviations {
    map: HashMap<Vec<BitString>, BitString>,
}

impl Deviations {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an offset; the root path is rejected.
    pub fn add(&mut self, path: Vec<BitString>, d: BitString) -> Result<()> {
        if path.is_empty() {
            return contract("deviations at the root are not allowed");
        }
        if path.iter().any(|x| x.width() != d.width()) {
            return contract("deviation width must match lifted label width");
        }
        let e = self.map.entry(path).or_insert_with(|| BitString::zeros(d.width()));
        *e = *e ^ d;
        Ok(())
    }

    #[must_use]
    pub fn get(&self, path: &[BitString]) -> Option<BitString> {
        self.map.get(path).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<BitString>, &BitString)> {
        self.map.iter()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Unknown-oracle queries spent per lifted query.
pub const LIFT_COST: u64 = 1;

/// Embeds an unknown `RFS(n, l)` oracle into an `RFS(2n, l)` oracle.
///
/// Each lifted label splits as `u ∘ v` with `n`-bit halves. The lifted secret
/// is `p(u₁..u_k) ∘ s(v₁..v_k)`, where `p` belongs to the known instance and `s`
/// to the unknown one, xored with any deviation registered at that path. A
/// deviation `d` at a path moves its accepted guess to `s' ⊕ d` and flips the
/// inner products of its children by `d · x_{k+1}`. The hidden bit is the
/// unknown instance's. Every lifted query makes exactly one unknown query.
pub fn lift_uniform(unknown: Arc<RfsOracle>, known: Arc<RfsInstance>, deviations: Deviations) -> Result<RfsOracle> {
    let (n, l) = (known.n(), known.l());
    for (path, d) in deviations.iter() {
        if path.len() >= l || d.width() != 2 * n {
            return contract("deviation path must have length 1..l with 2n-bit labels");
        }
    }
    Ok(OracleHandle::new(1, move |q: &RfsQuery| {
        let k = q.path.len();
        assert!(q.path.iter().all(|x| x.width() == 2 * n), "lifted label width mismatch");
        let us: Vec<BitString> = q.path.iter().map(|x| x.prefix(n)).collect();
        let vs: Vec<BitString> = q.path.iter().map(|x| x.suffix_from(n)).collect();
        let parent_dev = |k: usize| {
            if k >= 2 {
                deviations.get(&q.path[..k - 1]).map_or(false, |d| dot2(&d, &q.path[k - 1]))
            } else {
                false
            }
        };
        let known_ip = |k: usize| dot2(&known.secret(&us[..k - 1]), &us[k - 1]);

        if q.leaf {
            let beta = unknown.query(&RfsQuery::leaf(vs.clone()));
            return match beta {
                RfsAnswer::Bit(b) => RfsAnswer::Bit(b ^ known_ip(k) ^ parent_dev(k)),
                RfsAnswer::Bottom => RfsAnswer::Bottom,
            };
        }
        let guess = q.guess.expect("non-leaf lifted query requires a guess");
        assert_eq!(guess.width(), 2 * n, "lifted guess width mismatch");
        let target = match deviations.get(&q.path) {
            Some(d) => guess ^ d,
            None => guess,
        };
        let prefix_ok = target.prefix(n) == known.secret(&us);
        let inner = RfsQuery { path: vs.clone(), guess: Some(target.suffix_from(n)), leaf: false };
        let beta = unknown.query(&inner);
        match (prefix_ok, beta) {
            (true, RfsAnswer::Bit(b)) if k == 0 => RfsAnswer::Bit(b),
            (true, RfsAnswer::Bit(b)) => RfsAnswer::Bit(b ^ known_ip(k) ^ parent_dev(k)),
            _ => RfsAnswer::Bottom,
        }
    }))
}
