use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{mask, QState, RegisterLayout, SparseState};
use crate::bitkit::BitString;
use crate::envs::{EnvSpec, LabelKind, RootLabel, StateLabel, Transition, Variant};
use crate::error::{contract, Error, Result};
use crate::oracles::{rfs_query, Problem, RfsAnswer, RfsCodec, RfsInstance, RfsQuery};

/// How intermediate percepts are removed after an oraculized call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Rerun the environment to uncompute, with scavenging on both sides: `5η` steps.
    Full,
    /// Delete percepts agent-side from the action register: `2η` steps.
    /// Valid only when every intermediate label equals its action prefix.
    Simplified,
}

/// Interaction steps charged per protocol phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCosts {
    pub input: u64,
    pub scavenge: u64,
    pub hijack: u64,
    pub uncompute: u64,
    pub final_scavenge: u64,
}

impl StepCosts {
    #[must_use]
    pub fn total(&self) -> u64 {
        self.input + self.scavenge + self.hijack + self.uncompute + self.final_scavenge
    }
}

/// Self-inverse step unitaries of a deterministic environment.
///
/// Step `k` xors the code of the state reached after `a₁..a_k` into percept
/// register `k`; it is controlled on the action history only, so distinct
/// steps commute. The reward step xors the episode reward into the reward
/// register. The last percept register holds the root output.
#[derive(Clone, Debug)]
pub struct EnvUnitaryRealization {
    spec: EnvSpec,
    eta: usize,
    sym_bits: usize,
    out_width: usize,
    simplified_hijack: u64,
}

/// Classical contents of every register touched by the realization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkState {
    pub actions: u64,
    /// Percept registers `1..=η`; the last is the root output.
    pub percepts: Vec<u128>,
    pub reward: bool,
}

/// Builds the step realization; the environment must be deterministic.
pub fn realize_env_unitary(spec: &EnvSpec) -> Result<EnvUnitaryRealization> {
    if !spec.is_deterministic() {
        return contract("rg makes transitions stochastic; realize the deterministic part instead");
    }
    let Some(eta) = spec.eta() else {
        return contract(format!("{} has no fixed episode length", spec.variant()));
    };
    let sym_bits = spec.symbol_bits();
    let out_width = match spec.problem() {
        Problem::Simon(s) => s.n(),
        Problem::Rfs(_) => 2,
    };
    if eta * sym_bits > 64 {
        return contract("action string wider than 64 bits");
    }
    Ok(EnvUnitaryRealization { spec: spec.clone(), eta, sym_bits, out_width, simplified_hijack: 0 })
}

impl EnvUnitaryRealization {
    #[must_use]
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    #[must_use]
    pub fn eta(&self) -> usize {
        self.eta
    }

    #[must_use]
    pub fn action_width(&self) -> usize {
        self.eta * self.sym_bits
    }

    #[must_use]
    pub fn output_width(&self) -> usize {
        self.out_width
    }

    /// Charge for hijacking in simplified mode (default 0).
    #[must_use]
    pub fn with_simplified_hijack_cost(mut self, steps: u64) -> Self {
        self.simplified_hijack = steps;
        self
    }

    #[must_use]
    pub fn costs(&self, mode: OracleMode) -> StepCosts {
        let eta = self.eta as u64;
        match mode {
            OracleMode::Full => {
                StepCosts { input: eta, scavenge: eta, hijack: eta, uncompute: eta, final_scavenge: eta }
            }
            OracleMode::Simplified => StepCosts {
                input: eta,
                scavenge: eta,
                hijack: self.simplified_hijack,
                uncompute: 0,
                final_scavenge: 0,
            },
        }
    }

    fn symbol(&self, actions: u64, k: usize) -> u64 {
        (actions >> (self.sym_bits * (self.eta - 1 - k))) & mask(self.sym_bits)
    }

    /// Register word for the state reached at step `k` (1-based).
    fn word(&self, k: usize, label: &StateLabel) -> u128 {
        let p = self.spec.percept(label);
        if k == self.eta {
            assert!(label.is_root(), "episode must end at a root");
            u128::from(p.code)
        } else {
            (u128::from(kind_tag(p.kind)) << 64) | u128::from(p.code)
        }
    }

    /// Word an agent expects at step `k < η` if labels are action prefixes.
    fn prefix_word(&self, k: usize, actions: u64) -> u128 {
        let code = actions >> (self.sym_bits * (self.eta - k));
        (u128::from(kind_tag(LabelKind::Prefix)) << 64) | u128::from(code)
    }

    /// Percept words for steps `1..=upto` and the reward of the final step.
    fn trajectory(&self, actions: u64, upto: usize) -> (Vec<u128>, bool) {
        let mut label = StateLabel::Root(RootLabel::Initial);
        let mut words = Vec::with_capacity(upto);
        let mut reward = false;
        for k in 0..upto {
            let code = self.symbol(actions, k);
            let t = match self.spec.action_of_code(code) {
                Some(a) => self.spec.transition(&label, a),
                None => self.spec.invalid_transition(&label),
            };
            let Transition::Det { next, reward: r } = t else {
                unreachable!("deterministic realization met a random transition")
            };
            words.push(self.word(k + 1, &next));
            reward = r;
            label = next;
        }
        (words, reward)
    }

    /// Applies step `U_k` (`1 ≤ k ≤ η`).
    pub fn apply_step(&self, k: usize, ws: &mut WorkState) {
        assert!((1..=self.eta).contains(&k), "step index out of range");
        let (words, _) = self.trajectory(ws.actions, k);
        ws.percepts[k - 1] ^= words[k - 1];
    }

    /// Applies the reward step.
    pub fn apply_reward_step(&self, ws: &mut WorkState) {
        let (_, r) = self.trajectory(ws.actions, self.eta);
        ws.reward ^= r;
    }

    /// Zeroed work registers with the given action string.
    #[must_use]
    pub fn work_state(&self, actions: u64) -> WorkState {
        WorkState { actions, percepts: vec![0; self.eta], reward: false }
    }
}

fn kind_tag(k: LabelKind) -> u8 {
    match k {
        LabelKind::Initial => 1,
        LabelKind::Root => 2,
        LabelKind::Prefix => 3,
        LabelKind::Pad => 4,
        LabelKind::Done => 5,
    }
}

/// Result of one oraculized call.
#[derive(Clone, Debug)]
pub struct OracleCall {
    pub state: QState,
    pub steps: u64,
}

/// Per-basis-state evaluation of the protocol, memoising trajectories.
struct Protocol<'a> {
    real: &'a EnvUnitaryRealization,
    mode: OracleMode,
    layout: RegisterLayout,
    x: (usize, usize),
    y: (usize, usize),
    b: usize,
    memo: HashMap<u64, (Vec<u128>, bool)>,
}

impl<'a> Protocol<'a> {
    fn new(real: &'a EnvUnitaryRealization, layout: &RegisterLayout, mode: OracleMode) -> Result<Self> {
        let (xo, xw) = layout.span("x")?;
        let (yo, yw) = layout.span("y")?;
        let (bo, bw) = layout.span("b")?;
        if xw != real.action_width() || yw != real.output_width() || bw != 1 {
            return contract(format!(
                "oracle registers must be x:{} y:{} b:1, got x:{xw} y:{yw} b:{bw}",
                real.action_width(),
                real.output_width()
            ));
        }
        Ok(Self { real, mode, layout: layout.clone(), x: (xo, xw), y: (yo, yw), b: bo, memo: HashMap::new() })
    }

    /// Image of a basis index, or `None` when scratch is left dirty.
    fn image(&mut self, i: u64) -> Result<Option<u64>> {
        let eta = self.real.eta;
        let x = (i >> self.x.0) & mask(self.x.1);
        let real = self.real;
        let (words, r) = self.memo.entry(x).or_insert_with(|| real.trajectory(x, eta));
        let mut ws = WorkState { actions: x, percepts: vec![0; eta], reward: (i >> self.b) & 1 == 1 };
        ws.percepts[eta - 1] = u128::from((i >> self.y.0) & mask(self.y.1));

        // input: η environment steps, the last one also writing the reward
        for k in 0..eta {
            ws.percepts[k] ^= words[k];
        }
        ws.reward ^= *r;
        // scavenge: the agent takes ownership of the returned registers
        match self.mode {
            OracleMode::Full => {
                // hijack protects the root percept and reward; the rerun clears the rest
                for k in (0..eta - 1).rev() {
                    ws.percepts[k] ^= words[k];
                }
            }
            OracleMode::Simplified => {
                for k in 0..eta - 1 {
                    ws.percepts[k] ^= real.prefix_word(k + 1, x);
                }
            }
        }
        // final scavenge: every intermediate register must be clean
        if ws.percepts[..eta - 1].iter().any(|&p| p != 0) {
            return Ok(None);
        }
        let y = ws.percepts[eta - 1];
        if y > u128::from(mask(self.y.1)) {
            return Err(Error::Protocol("root percept wider than output register".into()));
        }
        Ok(Some(self.layout.set(self.layout.set(i, "y", y as u64), "b", u64::from(ws.reward))))
    }
}

fn check_leak(leaked: f64) -> Result<()> {
    if leaked > 1e-9 {
        return Err(Error::Protocol(format!("scratch registers left entangled (weight {leaked:.3e})")));
    }
    Ok(())
}

/// Runs the oraculization protocol on a state over registers `x`, `y`, `b`.
///
/// `x` holds the action string, `y` is the final root-percept register and
/// `b` the reward register; any other registers pass through. The effect is
/// `|x⟩|y⟩|b⟩ → |x⟩|y ⊕ out(x)⟩|b ⊕ R(x)⟩`. Intermediate percept registers
/// must return to zero on every branch, else the call fails.
pub fn oraculize_call(real: &EnvUnitaryRealization, input: &QState, mode: OracleMode) -> Result<OracleCall> {
    let mut proto = Protocol::new(real, input.layout(), mode)?;
    let zero = num_complex::Complex64::default();
    let mut out = vec![zero; input.amplitudes().len()];
    let mut leaked = 0.0;
    for (i, &amp) in input.amplitudes().iter().enumerate() {
        if amp == zero {
            continue;
        }
        match proto.image(i as u64)? {
            Some(j) => {
                if out[j as usize] != zero {
                    return Err(Error::Protocol("oraculized map is not injective".into()));
                }
                out[j as usize] = amp;
            }
            None => leaked += amp.norm_sqr(),
        }
    }
    check_leak(leaked)?;
    let state = QState { layout: input.layout().clone(), amps: out };
    Ok(OracleCall { state, steps: real.costs(mode).total() })
}

/// [`oraculize_call`] on a sparse state, in place; returns the steps consumed.
pub fn oraculize_sparse(real: &EnvUnitaryRealization, state: &mut SparseState, mode: OracleMode) -> Result<u64> {
    let mut proto = Protocol::new(real, state.layout(), mode)?;
    let leaked = state.apply_partial_map(&mut |i| proto.image(i))?;
    check_leak(leaked)?;
    Ok(real.costs(mode).total())
}

/// The standard bit-flip oracle `|x⟩|y⟩|b⟩ → |x⟩|y ⊕ g(x)⟩|b ⊕ flag(x)⟩`.
pub struct ReferenceOracle {
    name: &'static str,
    x_width: usize,
    y_width: usize,
    eval: Box<dyn Fn(u64) -> (u64, bool) + Send + Sync>,
}

impl std::fmt::Debug for ReferenceOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ReferenceOracle({}, x:{}, y:{})", self.name, self.x_width, self.y_width)
    }
}

impl ReferenceOracle {
    #[must_use]
    pub fn name(&self) -> &'static str {
        self.name
    }

    #[must_use]
    pub fn x_width(&self) -> usize {
        self.x_width
    }

    #[must_use]
    pub fn y_width(&self) -> usize {
        self.y_width
    }

    /// `(g(x), flag(x))`.
    #[must_use]
    pub fn eval(&self, x: u64) -> (u64, bool) {
        (self.eval)(x)
    }

    /// Image of a basis index under the oracle.
    #[must_use]
    pub fn map_index(&self, layout: &RegisterLayout, i: u64) -> u64 {
        let (g, flag) = self.eval(layout.get(i, "x"));
        let y = layout.get(i, "y") ^ g;
        let b = layout.get(i, "b") ^ u64::from(flag);
        layout.set(layout.set(i, "y", y), "b", b)
    }

    pub fn apply(&self, state: &mut QState) -> Result<()> {
        let layout = state.layout().clone();
        if layout.width("x")? != self.x_width || layout.width("y")? != self.y_width || layout.width("b")? != 1 {
            return contract("register widths do not match the reference oracle");
        }
        state.apply_basis_map(&|i| self.map_index(&layout, i))
    }

    pub fn apply_sparse(&self, state: &mut SparseState) -> Result<()> {
        let layout = state.layout().clone();
        if layout.width("x")? != self.x_width || layout.width("y")? != self.y_width || layout.width("b")? != 1 {
            return contract("register widths do not match the reference oracle");
        }
        state.apply_basis_map(&|i| self.map_index(&layout, i))
    }
}

/// Reference oracle of a problem in its native encoding.
///
/// Simon: flagged oracle on `n`-bit inputs. RFS: answer code on the
/// fixed-width query encoding of [`RfsCodec`], flagged on a correct root guess.
#[must_use]
pub fn oracle_reference(problem: &Problem) -> ReferenceOracle {
    match problem {
        Problem::Simon(s) => {
            let inst = s.clone();
            ReferenceOracle {
                name: "simon_flagged",
                x_width: s.n(),
                y_width: s.n(),
                eval: Box::new(move |x| (inst.eval_raw(x), x == inst.secret().value())),
            }
        }
        Problem::Rfs(r) => {
            let inst = r.clone();
            let codec = RfsCodec::new(r.n(), r.l());
            ReferenceOracle {
                name: "rfs_codec",
                x_width: codec.width(),
                y_width: 2,
                eval: Box::new(move |c| {
                    let ans = codec.answer(&inst, c);
                    let flag = codec.decode(c).is_some_and(|q| is_root_hit(&inst, &q));
                    (ans.code(), flag)
                }),
            }
        }
    }
}

fn is_root_hit(inst: &RfsInstance, q: &RfsQuery) -> bool {
    q.path.is_empty() && !q.leaf && q.guess == Some(inst.root_secret())
}

/// Reference oracle in the action encoding of an environment.
///
/// Computed directly from the problem instance; the environment's label
/// scrambling, if any, is applied to the root output.
pub fn oracle_reference_for_env(spec: &EnvSpec) -> Result<ReferenceOracle> {
    let real = realize_env_unitary(spec)?;
    let scr = spec.clone();
    let out = move |v: u64| scr.percept(&StateLabel::Root(RootLabel::Output(v))).code;
    match spec.problem() {
        Problem::Simon(s) => {
            let inst = s.clone();
            Ok(ReferenceOracle {
                name: "simon_flagged_actions",
                x_width: real.action_width(),
                y_width: s.n(),
                eval: Box::new(move |x| (out(inst.eval_raw(x)), x == inst.secret().value())),
            })
        }
        Problem::Rfs(r) => {
            debug_assert_eq!(spec.variant().deterministic_part(), Variant::RfsM2);
            let inst = r.clone();
            let eta = real.eta();
            Ok(ReferenceOracle {
                name: "rfs_actions",
                x_width: real.action_width(),
                y_width: 2,
                eval: Box::new(move |x| {
                    let syms: Vec<u64> = (0..eta).map(|k| (x >> (2 * (eta - 1 - k))) & 3).collect();
                    match read_action_query(&inst, &syms) {
                        Some(q) => {
                            let ans = rfs_query(&inst, &q).unwrap_or(RfsAnswer::Bottom);
                            (out(ans.code()), is_root_hit(&inst, &q))
                        }
                        None => (out(RfsAnswer::Bottom.code()), false),
                    }
                }),
            })
        }
    }
}

/// Reads a query from a padded symbol string (`0`, `1`, `2 = q`, `3` unused).
fn read_action_query(inst: &RfsInstance, syms: &[u64]) -> Option<RfsQuery> {
    let (n, l) = (inst.n(), inst.l());
    let q = syms.iter().position(|&c| c >= 2)?;
    if syms[q] != 2 || q % n != 0 || q / n > l {
        return None;
    }
    let word = |s: &[u64]| BitString::new(n, s.iter().fold(0, |acc, &b| (acc << 1) | b));
    let path: Vec<BitString> = syms[..q].chunks(n).map(word).collect();
    if path.len() == l {
        return Some(RfsQuery::leaf(path));
    }
    let g = syms.get(q + 1..q + 1 + n)?;
    if g.iter().any(|&c| c >= 2) {
        return None;
    }
    Some(RfsQuery::inner(path, word(g)))
}
