//! The full, essential and tangential Hamiltonians, evaluated as maxima over
//! the sampled control set.

use crate::control::ControlProblem;
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::stratification::StratumKind;

impl<T: Scalar> ControlProblem<T> {
    fn hamiltonian_term(&self, stratum: usize, x: &[T], p: &[T], a: usize, v: &mut [T]) -> Result<T> {
        let piece = self.piece(stratum)?;
        self.velocity_into(piece, x, a, v);
        Ok(-dot(p, v) - self.cost_of(piece, x))
    }

    /// `H_F(x, p) = max_a { -p.f(x, a) - l(x, a) }` with the piece of the
    /// stratum containing `x`.
    pub fn h_full(&self, x: &[T], p: &[T]) -> Result<T> {
        let s = self.strat.locate(x);
        let mut v = vec![T::zero(); self.dim()];
        let mut best = T::neg_infinity();
        for a in 0..self.controls.len() {
            best = best.max(self.hamiltonian_term(s, x, p, a, &mut v)?);
        }
        Ok(best)
    }

    /// Essential Hamiltonian: max over `A^E(x)`, each control evaluated with
    /// the piece of the stratum that admitted it.
    pub fn h_essential(&self, x: &[T], p: &[T]) -> Result<T> {
        let feas = self.essential_controls(x)?;
        if feas.is_empty() {
            return Err(Error::EmptyEssentialSet);
        }
        let mut v = vec![T::zero(); self.dim()];
        let mut best = T::neg_infinity();
        for (s, a) in feas.pairs() {
            best = best.max(self.hamiltonian_term(s, x, p, a, &mut v)?);
        }
        Ok(best)
    }

    /// Tangential Hamiltonian of a lower-dimensional stratum; `-inf` when no
    /// control is tangential.
    pub fn h_tangential(&self, stratum: usize, x: &[T], p: &[T]) -> Result<T> {
        let st = self.strat.stratum(stratum)?;
        if st.kind == StratumKind::Cell || self.strat.locate(x) != stratum {
            return Err(Error::NotOnInterface);
        }
        let mut v = vec![T::zero(); self.dim()];
        let mut best = T::neg_infinity();
        for a in self.tangential_controls(x)? {
            best = best.max(self.hamiltonian_term(stratum, x, p, a, &mut v)?);
        }
        Ok(best)
    }
}
