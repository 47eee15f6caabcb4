//! MDP task environments built from oracle problems.
//!
//! Simon family:
//! - `M0`: one action is a whole query; a correct query is rewarded immediately.
//! - `M1`: one bit per action; after `n` bits the environment returns to a root
//!   state labelled by `f(x)`, rewarding the transition when `x = s`.
//! - `M2_rg`: `M1` plus a root-only random jump `rg` that lands on a uniformly
//!   chosen prefix `s[..r]`, `r ∈ 1..=n/2`.
//!
//! RFS family (`a` below is a guess, `x` a path label):
//! - `RFS_M1`: actions are `n`-bit words and `q`. At the root, `q a` guesses the
//!   root secret; otherwise `x₁..x_k q [a]` issues an oracle query.
//! - `RFS_M2`: the same grammar spelled one bit at a time and padded to a fixed
//!   episode length `η = l·n + 1`; malformed inputs fall into a padding branch.
//! - `RFS_M3_rg`: `RFS_M2` plus `rg`, landing on `q ∘ s(∅)[..r]`.
//!
//! States other than roots are labelled by the actions taken so far in the
//! episode, so the environments are fully observable.

mod analysis;
mod mdp;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitkit::BitString;
use crate::error::{contract, Error, Result};
use crate::oracles::{gen_rfs, gen_simon, rfs_query, Problem, RfsAnswer, RfsInstance, RfsQuery, SimonInstance};

pub use analysis::{
    best_open_loop_value, bisimulation_classes, closed_loop_value, diameter_of, genuineness_report, optimal_actions,
    rewarding_diameter, Criterion, GenuinenessReport, OpenLoopGap,
};
pub use mdp::{explicit_mdp, value_iteration, ExplicitMdp, Outcome, ValueIteration, DEFAULT_STATE_BOUND};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Simon,
    Rfs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    M0,
    M1,
    #[serde(rename = "M2_rg")]
    M2Rg,
    #[serde(rename = "RFS_M1")]
    RfsM1,
    #[serde(rename = "RFS_M2")]
    RfsM2,
    #[serde(rename = "RFS_M3_rg")]
    RfsM3Rg,
}

impl Variant {
    #[must_use]
    pub fn family(self) -> Family {
        match self {
            Variant::M0 | Variant::M1 | Variant::M2Rg => Family::Simon,
            _ => Family::Rfs,
        }
    }

    #[must_use]
    pub fn has_rg(self) -> bool {
        matches!(self, Variant::M2Rg | Variant::RfsM3Rg)
    }

    /// The variant with `rg` removed.
    #[must_use]
    pub fn deterministic_part(self) -> Variant {
        match self {
            Variant::M2Rg => Variant::M1,
            Variant::RfsM3Rg => Variant::RfsM2,
            v => v,
        }
    }

    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Variant::M0 => "M0",
            Variant::M1 => "M1",
            Variant::M2Rg => "M2_rg",
            Variant::RfsM1 => "RFS_M1",
            Variant::RfsM2 => "RFS_M2",
            Variant::RfsM3Rg => "RFS_M3_rg",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Variant::M0, Variant::M1, Variant::M2Rg, Variant::RfsM1, Variant::RfsM2, Variant::RfsM3Rg]
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown variant {s:?}")))
    }
}

/// An agent action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Bit(bool),
    /// A whole `n`-bit word (block-level variants).
    Word(u64),
    Q,
    Rg,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Bit(b) => write!(f, "{}", u8::from(*b)),
            Action::Word(w) => write!(f, "w{w}"),
            Action::Q => f.write_str("q"),
            Action::Rg => f.write_str("rg"),
        }
    }
}

/// Label of a root state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootLabel {
    Initial,
    /// Last oracle output: `f(x)` for Simon, an answer code for RFS.
    Output(u64),
}

/// Identity of an environment state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLabel {
    Root(RootLabel),
    /// Actions taken so far in the current episode.
    Prefix(Vec<Action>),
    /// Non-rewarding padding branch at the given layer.
    Pad(u16),
    /// A completed RFS query waiting for the episode to end.
    Done { layer: u16, answer: u64, reward: bool },
}

impl StateLabel {
    #[must_use]
    pub fn layer(&self) -> usize {
        match self {
            StateLabel::Root(_) => 0,
            StateLabel::Prefix(p) => p.len(),
            StateLabel::Pad(l) | StateLabel::Done { layer: l, .. } => *l as usize,
        }
    }

    #[must_use]
    pub fn is_root(&self) -> bool {
        matches!(self, StateLabel::Root(_))
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateLabel::Root(RootLabel::Initial) => f.write_str("root:init"),
            StateLabel::Root(RootLabel::Output(v)) => write!(f, "root:{v}"),
            StateLabel::Prefix(p) => {
                f.write_str("p:")?;
                for (i, a) in p.iter().enumerate() {
                    if i > 0 && !matches!((a, p[i - 1]), (Action::Bit(_), Action::Bit(_))) {
                        f.write_str(".")?;
                    }
                    write!(f, "{a}")?;
                }
                Ok(())
            }
            StateLabel::Pad(l) => write!(f, "pad:{l}"),
            StateLabel::Done { layer, answer, reward } => write!(f, "done:{layer}:{answer}:{}", u8::from(*reward)),
        }
    }
}

/// Distribution of the `rg` landing position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpDist {
    /// Uniform over prefix lengths `1..=n/2`.
    #[default]
    UniformHalf,
}

/// Where the environment goes after an action.
#[derive(Clone, Debug, PartialEq)]
pub enum Transition {
    Det { next: StateLabel, reward: bool },
    /// Random landing; rewards on jumps are always zero.
    Jump(Vec<(f64, StateLabel)>),
}

/// An MDP task environment over a fixed problem instance.
#[derive(Clone, Debug)]
pub struct EnvSpec {
    problem: Arc<Problem>,
    variant: Variant,
    jump: JumpDist,
    label_permutation_seed: Option<u64>,
}

/// Builds an environment; the problem kind must match the variant family.
pub fn build_env(problem: Problem, variant: Variant) -> Result<EnvSpec> {
    match (&problem, variant.family()) {
        (Problem::Simon(s), Family::Simon) => {
            if variant == Variant::M2Rg && s.n() < 2 {
                return contract("M2_rg needs n ≥ 2");
            }
            if variant == Variant::M0 && s.n() > 16 {
                return contract("M0 action set too large");
            }
        }
        (Problem::Rfs(r), Family::Rfs) => {
            if variant == Variant::RfsM3Rg && r.n() < 2 {
                return contract("RFS_M3_rg needs n ≥ 2");
            }
            if 2 * (r.l() * r.n() + 1) > 64 {
                return contract("RFS episode too long for label packing");
            }
        }
        _ => return contract(format!("variant {variant} does not match the problem family")),
    }
    Ok(EnvSpec { problem: Arc::new(problem), variant, jump: JumpDist::UniformHalf, label_permutation_seed: None })
}

/// Serializable description, regenerating the instance from its seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpecRecord {
    pub family: Family,
    pub variant: Variant,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub jump_dist: JumpDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_permutation_seed: Option<u64>,
}

impl EnvSpecRecord {
    pub fn build(&self) -> Result<EnvSpec> {
        if self.variant.family() != self.family {
            return Err(Error::InvalidConfig("variant does not belong to family".into()));
        }
        let problem = match self.family {
            Family::Simon => {
                if !(1..=crate::oracles::SIMON_MAX_N).contains(&self.n) {
                    return Err(Error::InvalidConfig(format!("Simon n={} out of range", self.n)));
                }
                Problem::Simon(gen_simon(self.n, self.seed, None))
            }
            Family::Rfs => {
                let l = self.l.ok_or_else(|| Error::InvalidConfig("RFS needs l".into()))?;
                if self.n == 0 || l == 0 || self.n * l > 24 {
                    return Err(Error::InvalidConfig(format!("RFS (n={}, l={l}) out of range", self.n)));
                }
                Problem::Rfs(gen_rfs(self.n, l, self.seed))
            }
        };
        let mut spec = build_env(problem, self.variant).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.jump = self.jump_dist;
        spec.label_permutation_seed = self.label_permutation_seed;
        Ok(spec)
    }
}

impl EnvSpec {
    #[must_use]
    pub fn variant(&self) -> Variant {
        self.variant
    }

    #[must_use]
    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    #[must_use]
    pub fn simon(&self) -> Option<&SimonInstance> {
        match &*self.problem {
            Problem::Simon(s) => Some(s),
            Problem::Rfs(_) => None,
        }
    }

    #[must_use]
    pub fn rfs(&self) -> Option<&RfsInstance> {
        match &*self.problem {
            Problem::Rfs(r) => Some(r),
            Problem::Simon(_) => None,
        }
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.problem.n()
    }

    #[must_use]
    pub fn jump_dist(&self) -> JumpDist {
        self.jump
    }

    /// Enables percept scrambling with a keyed bijection per layer.
    #[must_use]
    pub fn with_label_permutation(mut self, seed: u64) -> Self {
        self.label_permutation_seed = Some(seed);
        self
    }

    #[must_use]
    pub fn label_permutation_seed(&self) -> Option<u64> {
        self.label_permutation_seed
    }

    /// Same instance with `rg` removed.
    #[must_use]
    pub fn deterministic_part(&self) -> EnvSpec {
        EnvSpec { variant: self.variant.deterministic_part(), ..self.clone() }
    }

    #[must_use]
    pub fn to_record(&self) -> EnvSpecRecord {
        let (seed, l) = match &*self.problem {
            Problem::Simon(s) => (s.seed(), None),
            Problem::Rfs(r) => (r.seed(), Some(r.l())),
        };
        EnvSpecRecord {
            family: self.variant.family(),
            variant: self.variant,
            n: self.n(),
            l,
            seed,
            jump_dist: self.jump,
            label_permutation_seed: self.label_permutation_seed,
        }
    }

    #[must_use]
    pub fn is_deterministic(&self) -> bool {
        !self.variant.has_rg()
    }

    /// Fixed episode length for strictly episodic variants (`None` for `RFS_M1`).
    #[must_use]
    pub fn eta(&self) -> Option<usize> {
        match (self.variant, &*self.problem) {
            (Variant::M0, _) => Some(1),
            (Variant::M1 | Variant::M2Rg, p) => Some(p.n()),
            (Variant::RfsM2 | Variant::RfsM3Rg, Problem::Rfs(r)) => Some(r.l() * r.n() + 1),
            _ => None,
        }
    }

    /// Action alphabet in a fixed order.
    #[must_use]
    pub fn actions(&self) -> Vec<Action> {
        let n = self.n();
        let bits = [Action::Bit(false), Action::Bit(true)];
        match self.variant {
            Variant::M0 => (0..1u64 << n).map(Action::Word).collect(),
            Variant::M1 => bits.to_vec(),
            Variant::M2Rg => vec![bits[0], bits[1], Action::Rg],
            Variant::RfsM1 => (0..1u64 << n).map(Action::Word).chain([Action::Q]).collect(),
            Variant::RfsM2 => vec![bits[0], bits[1], Action::Q],
            Variant::RfsM3Rg => vec![bits[0], bits[1], Action::Q, Action::Rg],
        }
    }

    #[must_use]
    pub fn initial_label(&self) -> StateLabel {
        StateLabel::Root(RootLabel::Initial)
    }

    /// The unique action sequence that earns a reward from a root state.
    #[must_use]
    pub fn rewarding_sequence(&self) -> Vec<Action> {
        match &*self.problem {
            Problem::Simon(s) => match self.variant {
                Variant::M0 => vec![Action::Word(s.secret().value())],
                _ => s.secret().iter().map(Action::Bit).collect(),
            },
            Problem::Rfs(r) => {
                let root = r.root_secret();
                match self.variant {
                    Variant::RfsM1 => vec![Action::Q, Action::Word(root.value())],
                    _ => {
                        let mut seq = vec![Action::Q];
                        seq.extend(root.iter().map(Action::Bit));
                        let eta = self.eta().expect("bit-level RFS is episodic");
                        seq.resize(eta, Action::Bit(false));
                        seq
                    }
                }
            }
        }
    }

    /// Landing states of `rg` at the root, with probabilities.
    #[must_use]
    pub fn jump_targets(&self) -> Vec<(f64, StateLabel)> {
        let n = self.n();
        let half = n / 2;
        let p = 1.0 / half as f64;
        (1..=half)
            .map(|r| {
                let label = match &*self.problem {
                    Problem::Simon(s) => StateLabel::Prefix(s.secret().prefix(r).iter().map(Action::Bit).collect()),
                    Problem::Rfs(inst) => {
                        let mut v = vec![Action::Q];
                        v.extend(inst.root_secret().prefix(r).iter().map(Action::Bit));
                        StateLabel::Prefix(v)
                    }
                };
                (p, label)
            })
            .collect()
    }

    /// Transition rule from a state under an action.
    ///
    /// # Panics
    /// If the action is not in the alphabet of this variant.
    #[must_use]
    pub fn transition(&self, from: &StateLabel, a: Action) -> Transition {
        assert!(self.actions().contains(&a) || self.accepts(a), "action {a} not available in {}", self.variant);
        match &*self.problem {
            Problem::Simon(s) => self.simon_transition(s, from, a),
            Problem::Rfs(r) => self.rfs_transition(r, from, a),
        }
    }

    fn accepts(&self, a: Action) -> bool {
        match a {
            Action::Word(w) => matches!(self.variant, Variant::M0 | Variant::RfsM1) && w >> self.n() == 0,
            Action::Bit(_) => !matches!(self.variant, Variant::M0 | Variant::RfsM1),
            Action::Q => matches!(self.variant, Variant::RfsM1 | Variant::RfsM2 | Variant::RfsM3Rg),
            Action::Rg => self.variant.has_rg(),
        }
    }

    fn root_with(&self, answer: u64, reward: bool) -> Transition {
        Transition::Det { next: StateLabel::Root(RootLabel::Output(answer)), reward }
    }

    fn simon_transition(&self, inst: &SimonInstance, from: &StateLabel, a: Action) -> Transition {
        let n = inst.n();
        if let Action::Word(x) = a {
            return self.root_with(inst.eval_raw(x), x == inst.secret().value());
        }
        let layer = from.layer();
        let pad_step = |layer: usize| {
            if layer + 1 == n {
                Transition::Det { next: StateLabel::Root(RootLabel::Initial), reward: false }
            } else {
                Transition::Det { next: StateLabel::Pad((layer + 1) as u16), reward: false }
            }
        };
        match (from, a) {
            (StateLabel::Root(_), Action::Rg) => Transition::Jump(self.jump_targets()),
            (StateLabel::Pad(_), _) | (StateLabel::Prefix(_), Action::Rg) => pad_step(layer),
            (StateLabel::Root(_), Action::Bit(_)) | (StateLabel::Prefix(_), Action::Bit(_)) => {
                let mut p = match from {
                    StateLabel::Prefix(p) => p.clone(),
                    _ => Vec::new(),
                };
                p.push(a);
                if p.len() == n {
                    let x = bits_value(&p);
                    self.root_with(inst.eval_raw(x), x == inst.secret().value())
                } else {
                    Transition::Det { next: StateLabel::Prefix(p), reward: false }
                }
            }
            _ => unreachable!("state {from} cannot occur in a Simon environment"),
        }
    }

    fn rfs_transition(&self, inst: &RfsInstance, from: &StateLabel, a: Action) -> Transition {
        if self.variant == Variant::RfsM1 {
            return self.rfs_block_transition(inst, from, a);
        }
        let eta = self.eta().expect("bit-level RFS is episodic");
        let layer = from.layer();
        let finish = |next_layer: usize, answer: RfsAnswer, reward: bool| {
            if next_layer == eta {
                self.root_with(answer.code(), reward)
            } else {
                Transition::Det {
                    next: StateLabel::Done { layer: next_layer as u16, answer: answer.code(), reward },
                    reward: false,
                }
            }
        };
        let pad = |next_layer: usize| {
            if next_layer == eta {
                self.root_with(RfsAnswer::Bottom.code(), false)
            } else {
                Transition::Det { next: StateLabel::Pad(next_layer as u16), reward: false }
            }
        };
        match from {
            StateLabel::Root(_) if a == Action::Rg => Transition::Jump(self.jump_targets()),
            StateLabel::Pad(_) => pad(layer + 1),
            StateLabel::Done { answer, reward, .. } => {
                let ans = match answer {
                    0 => RfsAnswer::Bit(false),
                    1 => RfsAnswer::Bit(true),
                    _ => RfsAnswer::Bottom,
                };
                finish(layer + 1, ans, *reward)
            }
            StateLabel::Root(_) | StateLabel::Prefix(_) => {
                if a == Action::Rg {
                    return pad(layer + 1);
                }
                let mut p = match from {
                    StateLabel::Prefix(p) => p.clone(),
                    _ => Vec::new(),
                };
                p.push(a);
                match parse_bit_query(inst, &p) {
                    Parse::Partial => {
                        if p.len() == eta {
                            pad(eta)
                        } else {
                            Transition::Det { next: StateLabel::Prefix(p), reward: false }
                        }
                    }
                    Parse::Invalid => pad(p.len()),
                    Parse::Complete(q) => {
                        let answer = rfs_query(inst, &q).expect("parser emits well-formed queries");
                        let reward = q.path.is_empty() && q.guess == Some(inst.root_secret());
                        finish(p.len(), answer, reward)
                    }
                }
            }
        }
    }

    fn rfs_block_transition(&self, inst: &RfsInstance, from: &StateLabel, a: Action) -> Transition {
        let n = inst.n();
        match from {
            StateLabel::Pad(_) => self.root_with(RfsAnswer::Bottom.code(), false),
            StateLabel::Root(_) | StateLabel::Prefix(_) => {
                let mut p = match from {
                    StateLabel::Prefix(p) => p.clone(),
                    _ => Vec::new(),
                };
                p.push(a);
                let words = |s: &[Action]| -> Vec<BitString> {
                    s.iter()
                        .map(|a| match a {
                            Action::Word(w) => BitString::new(n, *w),
                            _ => unreachable!(),
                        })
                        .collect()
                };
                let q_pos = p.iter().position(|x| *x == Action::Q);
                let complete = |q: RfsQuery| {
                    let answer = rfs_query(inst, &q).expect("parser emits well-formed queries");
                    let reward = q.path.is_empty() && q.guess == Some(inst.root_secret());
                    self.root_with(answer.code(), reward)
                };
                match q_pos {
                    None if p.len() <= inst.l() => Transition::Det { next: StateLabel::Prefix(p), reward: false },
                    None => Transition::Det { next: StateLabel::Pad(p.len() as u16), reward: false },
                    Some(k) if k == p.len() - 1 => {
                        if k == inst.l() {
                            complete(RfsQuery::leaf(words(&p[..k])))
                        } else {
                            Transition::Det { next: StateLabel::Prefix(p), reward: false }
                        }
                    }
                    Some(k) => match p[k + 1] {
                        Action::Word(g) => complete(RfsQuery::inner(words(&p[..k]), BitString::new(n, g))),
                        _ => Transition::Det { next: StateLabel::Pad(p.len() as u16), reward: false },
                    },
                }
            }
            StateLabel::Done { .. } => unreachable!("block-level RFS has no done states"),
        }
    }

    /// Action denoted by a register symbol code; `None` outside the alphabet.
    pub(crate) fn action_of_code(&self, code: u64) -> Option<Action> {
        match self.variant {
            Variant::M0 => (code >> self.n() == 0).then_some(Action::Word(code)),
            Variant::M1 | Variant::M2Rg => (code < 2).then_some(Action::Bit(code == 1)),
            Variant::RfsM2 | Variant::RfsM3Rg => match code {
                0 | 1 => Some(Action::Bit(code == 1)),
                2 => Some(Action::Q),
                _ => None,
            },
            Variant::RfsM1 => None,
        }
    }

    /// Transition on a symbol code outside the alphabet: a misplaced symbol.
    pub(crate) fn invalid_transition(&self, from: &StateLabel) -> Transition {
        match from {
            StateLabel::Pad(_) | StateLabel::Done { .. } => self.transition(from, Action::Bit(false)),
            _ => {
                let next = from.layer() + 1;
                if Some(next) == self.eta() {
                    self.root_with(RfsAnswer::Bottom.code(), false)
                } else {
                    Transition::Det { next: StateLabel::Pad(next as u16), reward: false }
                }
            }
        }
    }

    /// Scrambled code of a label under the permutation mode, or the identity code.
    ///
    /// Codes are injective within a `(layer, kind)` class; [`Percept`] carries both.
    #[must_use]
    pub fn percept(&self, label: &StateLabel) -> Percept {
        let (kind, code, width) = self.raw_code(label);
        // RFS answers carry meaning beyond identity, so only state labels are scrambled there
        let answer = self.variant.family() == Family::Rfs && matches!(kind, LabelKind::Root | LabelKind::Done);
        let code = match self.label_permutation_seed {
            Some(seed) if width > 0 && !answer => scramble(seed, label.layer() as u64 * 8 + kind as u64, code, width),
            _ => code,
        };
        Percept { layer: label.layer() as u16, kind, code }
    }

    /// Unscrambled `(kind, code, width)` of a label.
    pub(crate) fn raw_code(&self, label: &StateLabel) -> (LabelKind, u64, usize) {
        let n = self.n();
        match label {
            StateLabel::Root(RootLabel::Initial) => (LabelKind::Initial, 0, 0),
            StateLabel::Root(RootLabel::Output(v)) => {
                let w = if self.variant.family() == Family::Simon { n } else { 2 };
                (LabelKind::Root, *v, w)
            }
            StateLabel::Prefix(p) => {
                let sym_bits = self.symbol_bits();
                let code = p.iter().fold(0u64, |acc, a| (acc << sym_bits) | self.symbol_code(*a));
                (LabelKind::Prefix, code, sym_bits * p.len())
            }
            StateLabel::Pad(_) => (LabelKind::Pad, 0, 0),
            StateLabel::Done { answer, reward, .. } => (LabelKind::Done, answer * 2 + u64::from(*reward), 3),
        }
    }

    pub(crate) fn symbol_bits(&self) -> usize {
        match self.variant {
            Variant::M1 | Variant::M2Rg => 1,
            Variant::RfsM2 | Variant::RfsM3Rg => 2,
            Variant::M0 => self.n(),
            Variant::RfsM1 => self.n() + 1,
        }
    }

    /// Register code of an action; `Rg` is outside the deterministic alphabet.
    pub(crate) fn symbol_code(&self, a: Action) -> u64 {
        match a {
            Action::Bit(b) => u64::from(b),
            Action::Word(w) => w,
            Action::Q => match self.variant {
                Variant::RfsM1 => 1 << self.n(),
                _ => 2,
            },
            Action::Rg => 3,
        }
    }
}

/// Kind tag of a percept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Initial,
    Root,
    Prefix,
    Pad,
    Done,
}

/// What the agent observes: a layer-tagged, possibly scrambled, state code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Percept {
    pub layer: u16,
    pub kind: LabelKind,
    pub code: u64,
}

impl Percept {
    #[must_use]
    pub fn is_root(&self) -> bool {
        matches!(self.kind, LabelKind::Initial | LabelKind::Root)
    }
}

impl fmt::Display for Percept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            LabelKind::Initial => "init",
            LabelKind::Root => "root",
            LabelKind::Prefix => "p",
            LabelKind::Pad => "pad",
            LabelKind::Done => "done",
        };
        write!(f, "{}:{k}:{}", self.layer, self.code)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed bijection on `width`-bit values: xor, odd multiply, xor.
pub(crate) fn scramble(seed: u64, class: u64, v: u64, width: usize) -> u64 {
    let m = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    let k1 = splitmix(seed ^ splitmix(class));
    let k2 = splitmix(k1) | 1;
    let k3 = splitmix(k2);
    (((v ^ k1) & m).wrapping_mul(k2) & m) ^ (k3 & m)
}

fn bits_value(p: &[Action]) -> u64 {
    p.iter().fold(0, |acc, a| match a {
        Action::Bit(b) => (acc << 1) | u64::from(*b),
        _ => unreachable!("bit prefix holds only bits"),
    })
}

enum Parse {
    Partial,
    Invalid,
    Complete(RfsQuery),
}

/// Parses a bit-level RFS action prefix.
///
/// Grammar: `q a` (root guess), `x₁..x_k q a` with `1 ≤ k < l`, or `x₁..x_l q`
/// (leaf query), where each `x`/`a` is `n` bits.
fn parse_bit_query(inst: &RfsInstance, p: &[Action]) -> Parse {
    let (n, l) = (inst.n(), inst.l());
    let to_bits = |s: &[Action]| -> Option<BitString> {
        let mut v = 0u64;
        for a in s {
            match a {
                Action::Bit(b) => v = (v << 1) | u64::from(*b),
                _ => return None,
            }
        }
        Some(BitString::new(n, v))
    };
    let Some(qpos) = p.iter().position(|a| *a == Action::Q) else {
        if p.iter().any(|a| !matches!(a, Action::Bit(_))) {
            return Parse::Invalid;
        }
        return if p.len() <= l * n { Parse::Partial } else { Parse::Invalid };
    };
    if qpos % n != 0 || qpos > l * n || p[..qpos].iter().any(|a| !matches!(a, Action::Bit(_))) {
        return Parse::Invalid;
    }
    let k = qpos / n;
    let path: Vec<BitString> = (0..k).map(|i| to_bits(&p[i * n..(i + 1) * n]).expect("bits")).collect();
    if k == l {
        return Parse::Complete(RfsQuery::leaf(path));
    }
    let tail = &p[qpos + 1..];
    if tail.iter().any(|a| !matches!(a, Action::Bit(_))) {
        return Parse::Invalid;
    }
    if tail.len() < n {
        return Parse::Partial;
    }
    Parse::Complete(RfsQuery::inner(path, to_bits(&tail[..n]).expect("bits")))
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

/// Live cursor of an episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub label: StateLabel,
    /// Wall-clock interaction steps.
    pub step: u64,
    /// Completed episodes (returns to the root layer).
    pub episode: u64,
}

impl EnvState {
    #[must_use]
    pub fn new(spec: &EnvSpec) -> Self {
        Self { label: spec.initial_label(), step: 0, episode: 0 }
    }
}

/// Result of one interaction step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub percept: Percept,
    pub reward: bool,
    pub episode_end: bool,
}

/// Applies `a`, sampling the landing position for `rg` at a root.
pub fn env_step<R: Rng + ?Sized>(spec: &EnvSpec, st: &mut EnvState, a: Action, rng: &mut R) -> StepResult {
    let (next, reward) = match spec.transition(&st.label, a) {
        Transition::Det { next, reward } => (next, reward),
        Transition::Jump(targets) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = targets.last().expect("non-empty jump").1.clone();
            for (p, label) in targets {
                acc += p;
                if u < acc {
                    pick = label;
                    break;
                }
            }
            (pick, false)
        }
    };
    st.step += 1;
    let episode_end = next.is_root();
    if episode_end {
        st.episode += 1;
    }
    st.label = next;
    StepResult { percept: spec.percept(&st.label), reward, episode_end }
}
