//! Dense statevector simulation over named bit registers, the step-wise unitary
//! realization of deterministic environments, and the oraculization protocol.

mod oraculize;
mod sparse;

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitkit::BitString;
use crate::error::{contract, Error, Result};

pub use oraculize::{
    oracle_reference, oracle_reference_for_env, oraculize_call, oraculize_sparse, realize_env_unitary, EnvUnitaryRealization,
    OracleCall, OracleMode, ReferenceOracle, StepCosts, WorkState,
};
pub use sparse::SparseState;

/// Default cap on the total register width of a dense state.
pub const DEFAULT_CAP: usize = 24;

/// Named bit registers packed into a basis index; the first register is most significant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    names: Vec<String>,
    widths: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl RegisterLayout {
    pub fn new(regs: &[(&str, usize)]) -> Result<Self> {
        Self::with_cap(regs, DEFAULT_CAP)
    }

    pub fn with_cap(regs: &[(&str, usize)], cap: usize) -> Result<Self> {
        let total: usize = regs.iter().map(|r| r.1).sum();
        if total > cap {
            return Err(Error::CapExceeded { needed: total, cap });
        }
        let mut names: Vec<String> = Vec::with_capacity(regs.len());
        for (name, w) in regs {
            if *w == 0 || names.iter().any(|n| n == name) {
                return contract(format!("register {name:?} is empty or duplicated"));
            }
            names.push((*name).to_string());
        }
        let widths: Vec<usize> = regs.iter().map(|r| r.1).collect();
        let mut offsets = vec![0; regs.len()];
        let mut acc = 0;
        for i in (0..regs.len()).rev() {
            offsets[i] = acc;
            acc += widths[i];
        }
        Ok(Self { names, widths, offsets, total })
    }

    #[must_use]
    pub fn total_bits(&self) -> usize {
        self.total
    }

    #[must_use]
    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn find(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::Contract(format!("no register {name:?}")))
    }

    pub fn width(&self, name: &str) -> Result<usize> {
        Ok(self.widths[self.find(name)?])
    }

    /// `(offset, width)` of a register within the basis index.
    pub fn span(&self, name: &str) -> Result<(usize, usize)> {
        let i = self.find(name)?;
        Ok((self.offsets[i], self.widths[i]))
    }

    /// Register contents of a basis index.
    ///
    /// # Panics
    /// If the register does not exist.
    #[must_use]
    pub fn get(&self, index: u64, name: &str) -> u64 {
        let (off, w) = self.span(name).expect("register exists");
        (index >> off) & mask(w)
    }

    /// Basis index with one register overwritten.
    ///
    /// # Panics
    /// If the register does not exist.
    #[must_use]
    pub fn set(&self, index: u64, name: &str, value: u64) -> u64 {
        let (off, w) = self.span(name).expect("register exists");
        (index & !(mask(w) << off)) | ((value & mask(w)) << off)
    }
}

pub(crate) fn mask(w: usize) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

/// Pure state over a register layout.
#[derive(Clone, Debug, PartialEq)]
pub struct QState {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

/// Operations accepted by [`qstate_apply`].
pub enum Gate<'a> {
    /// Single-bit Hadamards on every bit of a register.
    Hadamard(&'a str),
    /// Xor a constant into a register.
    XorConst(&'a str, u64),
    /// A classical reversible map on basis indices.
    BasisMap(&'a dyn Fn(u64) -> u64),
    /// Sign flip on basis states where the predicate holds.
    PhaseFlip(&'a dyn Fn(u64) -> bool),
}

impl QState {
    /// All registers zero.
    #[must_use]
    pub fn zero(layout: RegisterLayout) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << layout.total];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { layout, amps }
    }

    /// A basis state; unnamed registers are zero.
    pub fn basis(layout: RegisterLayout, values: &[(&str, u64)]) -> Result<Self> {
        let mut idx = 0u64;
        for (name, v) in values {
            let (_, w) = layout.span(name)?;
            if *v > mask(w) {
                return contract(format!("value {v} does not fit register {name:?}"));
            }
            idx = layout.set(idx, name, *v);
        }
        let mut s = Self::zero(layout);
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[idx as usize] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Wraps raw amplitudes; the norm must be 1 within `1e-9`.
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << layout.total {
            return contract("amplitude vector length does not match layout");
        }
        let s = Self { layout, amps };
        if (s.norm_sqr() - 1.0).abs() > 1e-9 {
            return contract("state is not normalized");
        }
        Ok(s)
    }

    #[must_use]
    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    #[must_use]
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    #[must_use]
    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    /// Largest amplitude difference to another state on the same layout.
    #[must_use]
    pub fn max_deviation(&self, other: &QState) -> f64 {
        assert_eq!(self.layout, other.layout, "layouts differ");
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn hadamard(&mut self, reg: &str) -> Result<()> {
        let (off, w) = self.layout.span(reg)?;
        self.hadamard_bits(off, w)
    }

    /// Hadamards on bits `off..off + w` of the basis index.
    pub fn hadamard_bits(&mut self, off: usize, w: usize) -> Result<()> {
        if off + w > self.layout.total {
            return contract("bit range outside the layout");
        }
        let len = self.amps.len();
        for bit in off..off + w {
            let stride = 1usize << bit;
            let mut base = 0;
            while base < len {
                for i in base..base + stride {
                    let (a, b) = (self.amps[i], self.amps[i + stride]);
                    if a == Complex64::default() && b == Complex64::default() {
                        continue;
                    }
                    self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                    self.amps[i + stride] = (a - b) * FRAC_1_SQRT_2;
                }
                base += 2 * stride;
            }
        }
        Ok(())
    }

    pub fn xor_const(&mut self, reg: &str, v: u64) -> Result<()> {
        let (off, w) = self.layout.span(reg)?;
        if v > mask(w) {
            return contract("constant wider than register");
        }
        let m = (v << off) as usize;
        if m != 0 {
            for i in 0..self.amps.len() {
                let j = i ^ m;
                if i < j {
                    self.amps.swap(i, j);
                }
            }
        }
        Ok(())
    }

    /// Applies a basis map; it must be injective on the support of the state.
    pub fn apply_basis_map(&mut self, f: &dyn Fn(u64) -> u64) -> Result<()> {
        let zero = Complex64::default();
        let mut out = vec![zero; self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            if a == zero {
                continue;
            }
            let j = f(i as u64) as usize;
            if j >= out.len() {
                return contract("basis map leaves the register space");
            }
            if out[j] != zero {
                return contract("basis map is not injective on the state's support");
            }
            out[j] = a;
        }
        self.amps = out;
        Ok(())
    }

    pub fn phase_flip(&mut self, pred: &dyn Fn(u64) -> bool) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            if pred(i as u64) {
                *a = -*a;
            }
        }
    }

    /// Born marginal of one register.
    pub fn probabilities(&self, reg: &str) -> Result<Vec<f64>> {
        let (off, w) = self.layout.span(reg)?;
        let mut p = vec![0.0; 1 << w];
        for (i, a) in self.amps.iter().enumerate() {
            p[(i >> off) & mask(w) as usize] += a.norm_sqr();
        }
        Ok(p)
    }

    /// Samples a register and collapses the state onto the outcome.
    pub fn measure<R: Rng + ?Sized>(&mut self, reg: &str, rng: &mut R) -> Result<u64> {
        let (off, w) = self.layout.span(reg)?;
        let p = self.probabilities(reg)?;
        let total: f64 = p.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut outcome = p.len() - 1;
        for (v, &pv) in p.iter().enumerate() {
            if u < pv {
                outcome = v;
                break;
            }
            u -= pv;
        }
        while p[outcome] == 0.0 {
            outcome -= 1;
        }
        let scale = 1.0 / p[outcome].sqrt();
        if !scale.is_finite() {
            return Err(Error::Protocol("zero-norm measurement branch".into()));
        }
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i >> off) & mask(w) as usize == outcome {
                *a *= scale;
            } else {
                *a = Complex64::default();
            }
        }
        Ok(outcome as u64)
    }

    /// Amplitudes above `1e-12` as `(index-hex, re, im)`.
    #[must_use]
    pub fn dump(&self) -> Vec<(String, f64, f64)> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > 1e-12)
            .map(|(i, a)| (format!("{i:x}"), a.re, a.im))
            .collect()
    }

    pub fn dump_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.dump())?)
    }
}

/// Applies one gate.
pub fn qstate_apply(state: &mut QState, gate: Gate<'_>) -> Result<()> {
    match gate {
        Gate::Hadamard(r) => state.hadamard(r),
        Gate::XorConst(r, v) => state.xor_const(r, v),
        Gate::BasisMap(f) => state.apply_basis_map(f),
        Gate::PhaseFlip(f) => {
            state.phase_flip(f);
            Ok(())
        }
    }
}

/// Measures a register, returning the outcome as a bit string of its width.
pub fn qstate_measure<R: Rng + ?Sized>(state: &mut QState, reg: &str, rng: &mut R) -> Result<BitString> {
    let w = state.layout.width(reg)?;
    let v = state.measure(reg, rng)?;
    Ok(BitString::new(w, v))
}
