use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;

use super::{mask, QState, RegisterLayout};
use crate::error::{contract, Error, Result};

const PRUNE: f64 = 1e-13;

/// Pure state storing only nonzero amplitudes, keyed by basis index.
///
/// Same layout rules and semantics as [`QState`]; cost scales with the
/// support size instead of the register space.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseState {
    layout: RegisterLayout,
    amps: BTreeMap<u64, Complex64>,
}

impl SparseState {
    pub fn basis(layout: RegisterLayout, values: &[(&str, u64)]) -> Result<Self> {
        let mut idx = 0u64;
        for (name, v) in values {
            let (_, w) = layout.span(name)?;
            if *v > mask(w) {
                return contract(format!("value {v} does not fit register {name:?}"));
            }
            idx = layout.set(idx, name, *v);
        }
        Ok(Self { layout, amps: BTreeMap::from([(idx, Complex64::new(1.0, 0.0))]) })
    }

    #[must_use]
    pub fn from_dense(q: &QState) -> Self {
        let amps = q
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > PRUNE)
            .map(|(i, a)| (i as u64, *a))
            .collect();
        Self { layout: q.layout().clone(), amps }
    }

    #[must_use]
    pub fn to_dense(&self) -> QState {
        let mut v = vec![Complex64::default(); 1 << self.layout.total_bits()];
        for (&i, &a) in &self.amps {
            v[i as usize] = a;
        }
        QState::from_amplitudes(self.layout.clone(), v).expect("sparse state is normalized")
    }

    #[must_use]
    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    #[must_use]
    pub fn support(&self) -> usize {
        self.amps.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        self.amps.iter().map(|(&i, &a)| (i, a))
    }

    #[must_use]
    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(Complex64::norm_sqr).sum()
    }

    pub fn hadamard(&mut self, reg: &str) -> Result<()> {
        let (off, w) = self.layout.span(reg)?;
        self.hadamard_bits(off, w)
    }

    /// Hadamards on bits `off..off + w` of the basis index.
    pub fn hadamard_bits(&mut self, off: usize, w: usize) -> Result<()> {
        if off + w > self.layout.total_bits() {
            return contract("bit range outside the layout");
        }
        let m = mask(w);
        let scale = FRAC_1_SQRT_2.powi(w as i32);
        let mut out: BTreeMap<u64, Complex64> = BTreeMap::new();
        for (&i, &a) in &self.amps {
            let v = (i >> off) & m;
            let rest = i & !(m << off);
            for u in 0..=m {
                let sign = if (u & v).count_ones() % 2 == 1 { -scale } else { scale };
                *out.entry(rest | (u << off)).or_default() += a * sign;
            }
        }
        out.retain(|_, a| a.norm() > PRUNE);
        self.amps = out;
        Ok(())
    }

    pub fn xor_const(&mut self, reg: &str, v: u64) -> Result<()> {
        let (off, w) = self.layout.span(reg)?;
        if v > mask(w) {
            return contract("constant wider than register");
        }
        self.amps = std::mem::take(&mut self.amps).into_iter().map(|(i, a)| (i ^ (v << off), a)).collect();
        Ok(())
    }

    /// Applies a basis map that must be injective on the support.
    pub fn apply_basis_map(&mut self, f: &dyn Fn(u64) -> u64) -> Result<()> {
        let mut out = BTreeMap::new();
        for (&i, &a) in &self.amps {
            if out.insert(f(i), a).is_some() {
                return contract("basis map is not injective on the state's support");
            }
        }
        self.amps = out;
        Ok(())
    }

    /// Like [`SparseState::apply_basis_map`], dropping entries mapped to `None`.
    /// Returns the dropped weight.
    pub(crate) fn apply_partial_map(&mut self, f: &mut dyn FnMut(u64) -> Result<Option<u64>>) -> Result<f64> {
        let mut out = BTreeMap::new();
        let mut dropped = 0.0;
        for (&i, &a) in &self.amps {
            match f(i)? {
                Some(j) => {
                    if out.insert(j, a).is_some() {
                        return Err(Error::Protocol("oraculized map is not injective".into()));
                    }
                }
                None => dropped += a.norm_sqr(),
            }
        }
        self.amps = out;
        Ok(dropped)
    }

    pub fn probabilities(&self, reg: &str) -> Result<BTreeMap<u64, f64>> {
        let (off, w) = self.layout.span(reg)?;
        let mut p = BTreeMap::new();
        for (&i, a) in &self.amps {
            *p.entry((i >> off) & mask(w)).or_default() += a.norm_sqr();
        }
        Ok(p)
    }

    pub fn measure<R: Rng + ?Sized>(&mut self, reg: &str, rng: &mut R) -> Result<u64> {
        let (off, w) = self.layout.span(reg)?;
        let p = self.probabilities(reg)?;
        let total: f64 = p.values().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut outcome = *p.keys().next_back().ok_or_else(|| Error::Protocol("empty state".into()))?;
        for (&v, &pv) in &p {
            if u < pv {
                outcome = v;
                break;
            }
            u -= pv;
        }
        let scale = 1.0 / p[&outcome].sqrt();
        self.amps.retain(|&i, _| (i >> off) & mask(w) == outcome);
        self.amps.values_mut().for_each(|a| *a *= scale);
        Ok(outcome)
    }
}
