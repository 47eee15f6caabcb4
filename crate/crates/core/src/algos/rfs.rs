use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{basis_query, Backend, Certificate, QuantumOracle, SolveResult};
use crate::bitkit::BitString;
use crate::error::{contract, Result};
use crate::oracles::{RfsAnswer, RfsCodec, RfsOracle, RfsQuery};
use crate::qsim::{RegisterLayout, SparseState};

/// How an RFS query is laid out in an oracle's input register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfsEncoding {
    /// The fixed-width [`RfsCodec`] word.
    Codec,
    /// The action string of a bit-level environment: two bits per symbol
    /// (`0`, `1`, `q = 2`), first symbol most significant, zero-padded to `l·n + 1` symbols.
    Actions,
}

impl RfsEncoding {
    #[must_use]
    pub fn width(self, n: usize, l: usize) -> usize {
        match self {
            RfsEncoding::Codec => RfsCodec::new(n, l).width(),
            RfsEncoding::Actions => 2 * (l * n + 1),
        }
    }

    #[must_use]
    pub fn encode(self, n: usize, l: usize, q: &RfsQuery) -> u64 {
        match self {
            RfsEncoding::Codec => RfsCodec::new(n, l).encode(q),
            RfsEncoding::Actions => {
                let mut syms: Vec<u64> = q.path.iter().flat_map(|x| x.iter().map(u64::from)).collect();
                syms.push(2);
                if let Some(g) = q.guess {
                    syms.extend(g.iter().map(u64::from));
                }
                syms.resize(l * n + 1, 0);
                syms.iter().fold(0, |acc, &c| (acc << 2) | c)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    /// Hadamards on work register `w_k` (1-based).
    H(usize),
    /// `x ^= enc(query on path w_1..w_depth)`, guessing `w_{depth+1}` unless at a leaf.
    Compose { depth: usize, leaf: bool },
    Query,
}

/// Circuit leaving `s(w_1..w_d)` in `w_{d+1}`, all deeper registers clean.
fn extraction(d: usize, l: usize, ops: &mut Vec<Op>) {
    ops.push(Op::H(d + 1));
    if d + 1 == l {
        let c = Op::Compose { depth: l, leaf: true };
        ops.extend([c, Op::Query, c]);
    } else {
        let mut child = Vec::new();
        extraction(d + 1, l, &mut child);
        let c = Op::Compose { depth: d + 1, leaf: false };
        ops.extend(child.iter().copied());
        ops.extend([c, Op::Query, c]);
        ops.extend(child.iter().rev().copied());
    }
    ops.push(Op::H(d + 1));
}

/// Superposed calls made by [`rfs_quantum`] plus its verification query: `2^l`.
#[must_use]
pub fn rfs_quantum_query_count(l: usize) -> u64 {
    1 << l
}

/// Quantum RFS: recursive inner-product extraction with phase kickback.
///
/// Level `d` superposes the child label in work register `w_{d+1}`, computes
/// each child's secret into `w_{d+2}` by the same circuit, queries the child
/// with that secret as its validity guess, then runs the child circuit
/// backwards to clear `w_{d+2}`. The answer register is held in `|0⟩|−⟩` so
/// every answer bit becomes a sign. The recovered root secret is confirmed by
/// one root query.
pub fn rfs_quantum<R: Rng + ?Sized>(
    oracle: &mut dyn QuantumOracle,
    n: usize,
    l: usize,
    encoding: RfsEncoding,
    rng: &mut R,
) -> Result<SolveResult> {
    if oracle.x_width() != encoding.width(n, l) || oracle.y_width() != 2 {
        return contract("oracle registers do not match the RFS encoding");
    }
    let names: Vec<String> = (1..=l).map(|k| format!("w{k}")).collect();
    let mut regs: Vec<(&str, usize)> = vec![("x", oracle.x_width())];
    regs.extend(names.iter().map(|s| (s.as_str(), n)));
    regs.extend([("y", 2), ("b", 1)]);
    let layout = RegisterLayout::new(&regs)?;

    let mut ops = Vec::new();
    extraction(0, l, &mut ops);

    let start = oracle.calls();
    let mut st = SparseState::basis(layout.clone(), &[("y", 1)])?;
    let (y_off, _) = layout.span("y")?;
    st.hadamard_bits(y_off, 1)?;
    for op in ops {
        match op {
            Op::H(k) => st.hadamard(&names[k - 1])?,
            Op::Query => oracle.apply(&mut st)?,
            Op::Compose { depth, leaf } => {
                let lay = &layout;
                let names = &names;
                let word = |i: u64, k: usize| BitString::new(n, lay.get(i, &names[k - 1]));
                st.apply_basis_map(&|i| {
                    let path = (1..=depth).map(|k| word(i, k)).collect();
                    let q = if leaf { RfsQuery::leaf(path) } else { RfsQuery::inner(path, word(i, depth + 1)) };
                    lay.set(i, "x", lay.get(i, "x") ^ encoding.encode(n, l, &q))
                })?;
            }
        }
    }
    let root = st.measure("w1", rng)?;
    let (answer, flag) = basis_query(oracle, encoding.encode(n, l, &RfsQuery::root(BitString::new(n, root))))?;
    let queries = oracle.calls() - start;
    Ok(SolveResult {
        secret: BitString::new(n, root),
        oracle_queries: queries,
        interaction_steps: queries * oracle.cost_per_call(),
        success: flag && answer != RfsAnswer::Bottom.code(),
        backend: Backend::Statevector,
        certificate: flag.then_some(Certificate::Flagged { query: queries, input: root }),
        rank: 0,
    })
}

/// Exact query count of [`rfs_classical`]: `1 + n + n² + … + n^l`.
#[must_use]
pub fn rfs_classical_query_count(n: usize, l: usize) -> u64 {
    (0..=l as u32).map(|j| (n as u64).pow(j)).sum()
}

/// Classical RFS: learns a node's secret bit by bit from its `n` canonical
/// children, recursively learning each child's secret to pass its validity
/// check, and finishes with the root guess.
#[must_use]
pub fn rfs_classical(oracle: &RfsOracle, n: usize, l: usize) -> SolveResult {
    fn learn(oracle: &RfsOracle, n: usize, l: usize, path: &[BitString]) -> BitString {
        let mut secret = BitString::zeros(n);
        for i in 0..n {
            let mut child = path.to_vec();
            child.push(BitString::unit(n, i));
            let q = if child.len() == l {
                RfsQuery::leaf(child)
            } else {
                let guess = learn(oracle, n, l, &child);
                RfsQuery::inner(child, guess)
            };
            let bit = oracle.query(&q).bit().expect("learned child secret passes its check");
            secret.set(i, bit);
        }
        secret
    }
    let start = oracle.queries();
    let root = learn(oracle, n, l, &[]);
    let ok = oracle.query(&RfsQuery::root(root)) != RfsAnswer::Bottom;
    let queries = oracle.queries() - start;
    SolveResult {
        secret: root,
        oracle_queries: queries,
        interaction_steps: queries * oracle.cost_per_call(),
        success: ok,
        backend: Backend::Classical,
        certificate: ok.then_some(Certificate::Flagged { query: queries, input: root.value() }),
        rank: 0,
    }
}
