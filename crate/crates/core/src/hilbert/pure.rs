use num_complex::Complex64 as C64;

use super::layout::{BasisLabel, Subsystem, SubsystemLayout, DEFAULT_DIMENSION_BUDGET};
use super::operator::{LocalOperator, TargetIndexer, UNITARY_TOLERANCE};
use crate::error::{Error, Result};

/// Tolerance on the squared norm of a stored pure state.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// A normalized ket over a [`SubsystemLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    layout: SubsystemLayout,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Wraps `amplitudes`, which must already be normalized.
    pub fn from_amplitudes(layout: SubsystemLayout, amplitudes: Vec<C64>) -> Result<Self> {
        let state = Self::raw(layout, amplitudes)?;
        let n = state.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(n));
        }
        Ok(state)
    }

    /// Wraps and normalizes `amplitudes`.
    pub fn from_unnormalized(layout: SubsystemLayout, amplitudes: Vec<C64>) -> Result<Self> {
        Self::raw(layout, amplitudes)?.normalize()
    }

    fn raw(layout: SubsystemLayout, amplitudes: Vec<C64>) -> Result<Self> {
        let dim = layout.checked_dimension(DEFAULT_DIMENSION_BUDGET)?;
        if amplitudes.len() != dim {
            return Err(Error::LayoutMismatch(format!(
                "{} amplitudes for layout {layout} of dimension {dim}",
                amplitudes.len()
            )));
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn basis(layout: SubsystemLayout, label: &BasisLabel) -> Result<Self> {
        let dim = layout.checked_dimension(DEFAULT_DIMENSION_BUDGET)?;
        let index = layout.encode(label)?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { layout, amplitudes })
    }

    /// Single qubit `up |up> + down |down>` (normalized on construction).
    pub fn qubit(up: C64, down: C64) -> Result<Self> {
        Self::from_unnormalized(SubsystemLayout::qubits(1), vec![up, down])
    }

    /// Computational-basis product state of qubits, `digits[i]` in {UP, DOWN}.
    pub fn qubit_basis(digits: &[usize]) -> Result<Self> {
        Self::basis(
            SubsystemLayout::qubits(digits.len()),
            &BasisLabel::new(digits.to_vec(), vec![]),
        )
    }

    /// Fock state of modes only.
    pub fn fock(occupations: &[usize], fock_cutoff: usize) -> Result<Self> {
        let layout = SubsystemLayout::new(0, occupations.len(), fock_cutoff)?;
        Self::basis(layout, &BasisLabel::new(vec![], occupations.to_vec()))
    }

    pub fn vacuum(mode_count: usize, fock_cutoff: usize) -> Result<Self> {
        Self::fock(&vec![0; mode_count], fock_cutoff)
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, label: &BasisLabel) -> Result<C64> {
        Ok(self.amplitudes[self.layout.encode(label)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized(n));
        }
        let scale = 1.0 / n.sqrt();
        for a in &mut self.amplitudes {
            *a *= scale;
        }
        Ok(self)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{} vs {}",
                self.layout, other.layout
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Product state with `self`'s subsystems first.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let layout = self.layout.concat(&other.layout)?;
        let dim = layout.checked_dimension(DEFAULT_DIMENSION_BUDGET)?;
        let inner_dim = other.amplitudes.len();
        let (qa, qb) = (self.layout.qubit_count(), other.layout.qubit_count());
        let ma = self.layout.mode_count();

        let amplitudes = if ma == 0 || other.layout.qubit_count() == 0 {
            // Concatenated digit order coincides with a plain Kronecker product.
            let mut out = Vec::with_capacity(dim);
            for a in &self.amplitudes {
                for b in &other.amplitudes {
                    out.push(a * b);
                }
            }
            out
        } else {
            let mut out = vec![C64::new(0.0, 0.0); dim];
            for (index, slot) in out.iter_mut().enumerate() {
                let label = layout.decode(index);
                let a = BasisLabel::new(
                    label.qubits[..qa].to_vec(),
                    label.occupations[..ma].to_vec(),
                );
                let b = BasisLabel::new(
                    label.qubits[qa..qa + qb].to_vec(),
                    label.occupations[ma..].to_vec(),
                );
                *slot = self.amplitudes[self.layout.encode(&a)?]
                    * other.amplitudes[other.layout.encode(&b)?];
            }
            debug_assert_eq!(inner_dim, other.layout.dimension());
            out
        };
        Ok(PureState { layout, amplitudes })
    }

    /// Applies a unitary, rejecting operators that deviate by more than 1e-12.
    pub fn apply_unitary(&self, op: &LocalOperator) -> Result<PureState> {
        let deviation = op.unitarity_deviation();
        if deviation > UNITARY_TOLERANCE {
            return Err(Error::NotUnitary(deviation));
        }
        self.apply_operator(op)
    }

    /// Applies an arbitrary operator without renormalizing.
    pub(crate) fn apply_operator(&self, op: &LocalOperator) -> Result<PureState> {
        op.check_against(&self.layout)?;
        let indexer = TargetIndexer::new(&self.layout, op.targets())?;
        Ok(PureState {
            layout: self.layout.clone(),
            amplitudes: apply_to_vector(&self.amplitudes, &indexer, op),
        })
    }

    /// Projects the listed subsystems onto fixed digits and removes them.
    ///
    /// Returns the probability of the event and, when it is nonzero, the
    /// normalized state of the remaining subsystems.
    pub fn condition(&self, fixed: &[(Subsystem, usize)]) -> Result<(f64, Option<PureState>)> {
        let targets: Vec<Subsystem> = fixed.iter().map(|&(s, _)| s).collect();
        let sorted = self.layout.normalize_targets(&targets)?;
        for &(s, d) in fixed {
            if d >= self.layout.local_dimension(s) {
                return Err(Error::InvalidInput(format!("digit {d} invalid for {s}")));
            }
        }
        let kept: Vec<Subsystem> = self
            .layout
            .subsystems()
            .filter(|s| !sorted.contains(s))
            .collect();
        let new_layout = self.layout.restricted(&kept);
        let strides = self.layout.strides();
        let fixed_positions: Vec<(usize, usize)> = fixed
            .iter()
            .map(|&(s, d)| Ok((self.layout.position(s)?, d)))
            .collect::<Result<_>>()?;

        let mut amplitudes = Vec::with_capacity(new_layout.dimension());
        for (index, a) in self.amplitudes.iter().enumerate() {
            if fixed_positions
                .iter()
                .all(|&(p, d)| self.layout.digit(index, p, &strides) == d)
            {
                amplitudes.push(*a);
            }
        }
        let probability: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if probability <= 0.0 {
            return Ok((0.0, None));
        }
        let state = PureState {
            layout: new_layout,
            amplitudes,
        }
        .normalize()?;
        Ok((probability, Some(state)))
    }

    /// Mean photon number in `mode`.
    pub fn mean_photon_number(&self, mode: usize) -> Result<f64> {
        let position = self.layout.position(Subsystem::Mode(mode))?;
        let strides = self.layout.strides();
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| self.layout.digit(i, position, &strides) as f64 * a.norm_sqr())
            .sum())
    }

    /// Appends `mode_count` vacuum modes after the existing ones.
    pub fn with_vacuum_modes(&self, mode_count: usize) -> Result<PureState> {
        let vacuum = PureState::vacuum(mode_count, self.layout.fock_cutoff())?;
        self.tensor(&vacuum)
    }
}

pub(crate) fn apply_to_vector(input: &[C64], indexer: &TargetIndexer, op: &LocalOperator) -> Vec<C64> {
    let d = op.dim();
    let matrix = op.matrix();
    let mut out = vec![C64::new(0.0, 0.0); input.len()];
    let mut local = vec![C64::new(0.0, 0.0); d];
    for &base in &indexer.bases {
        let mut any = false;
        for (k, &off) in indexer.offsets.iter().enumerate() {
            local[k] = input[base + off];
            any |= local[k] != C64::new(0.0, 0.0);
        }
        if !any {
            continue;
        }
        for (r, &off) in indexer.offsets.iter().enumerate() {
            let row = &matrix[r * d..(r + 1) * d];
            out[base + off] = row.iter().zip(&local).map(|(m, v)| m * v).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::layout::{DOWN, UP};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn tensor_of_basis_qubits() {
        let up = PureState::qubit_basis(&[UP]).unwrap();
        let down = PureState::qubit_basis(&[DOWN]).unwrap();
        let both = up.tensor(&down).unwrap();
        assert_eq!(both, PureState::qubit_basis(&[UP, DOWN]).unwrap());
    }

    #[test]
    fn tensor_of_plus_states_is_uniform() {
        let plus = PureState::qubit(c(1.0), c(1.0)).unwrap();
        let pair = plus.tensor(&plus).unwrap();
        for a in pair.amplitudes() {
            assert_abs_diff_eq!(a.re, 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0);
        }
    }

    #[test]
    fn tensor_of_vacua() {
        let vac = PureState::vacuum(1, 2).unwrap();
        assert_eq!(vac.tensor(&vac).unwrap(), PureState::vacuum(2, 2).unwrap());
    }

    #[test]
    fn tensor_interleaves_qubits_before_modes() {
        let a = PureState::qubit_basis(&[DOWN])
            .unwrap()
            .with_vacuum_modes(1)
            .unwrap();
        let b = PureState::qubit_basis(&[UP])
            .unwrap()
            .tensor(&PureState::fock(&[1], 2).unwrap())
            .unwrap();
        let ab = a.tensor(&b).unwrap();
        let amp = ab
            .amplitude(&BasisLabel::new(vec![DOWN, UP], vec![0, 1]))
            .unwrap();
        assert_abs_diff_eq!(amp.re, 1.0);
    }

    #[test]
    fn tensor_rejects_mismatched_cutoffs() {
        let a = PureState::vacuum(1, 1).unwrap();
        let b = PureState::vacuum(1, 2).unwrap();
        assert!(matches!(a.tensor(&b), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn bit_flip_and_hadamard() {
        let up = PureState::qubit_basis(&[UP]).unwrap();
        let flipped = up.apply_unitary(&LocalOperator::pauli_x(0)).unwrap();
        assert_eq!(flipped, PureState::qubit_basis(&[DOWN]).unwrap());

        let down = PureState::qubit_basis(&[DOWN]).unwrap();
        let twice = down
            .apply_unitary(&LocalOperator::hadamard(0))
            .unwrap()
            .apply_unitary(&LocalOperator::hadamard(0))
            .unwrap();
        assert_abs_diff_eq!(twice.inner(&down).unwrap().norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let psi = PureState::qubit(c(0.6), C64::new(0.0, 0.8)).unwrap();
        let out = psi
            .apply_unitary(&LocalOperator::identity(vec![Subsystem::Qubit(0)], 2))
            .unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn non_unitary_and_mistargeted_operators_are_rejected() {
        let psi = PureState::qubit_basis(&[UP]).unwrap();
        let p = LocalOperator::basis_projector(vec![Subsystem::Qubit(0)], 2, 0).unwrap();
        assert!(matches!(psi.apply_unitary(&p), Err(Error::NotUnitary(_))));
        let mode_op = LocalOperator::identity(vec![Subsystem::Mode(0)], 3);
        assert!(psi.apply_unitary(&mode_op).is_err());
        let wrong_dim = LocalOperator::identity(vec![Subsystem::Qubit(0)], 3);
        assert!(matches!(
            psi.apply_unitary(&wrong_dim),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn condition_removes_fixed_subsystems() {
        let bell = PureState::from_unnormalized(
            SubsystemLayout::qubits(2),
            vec![c(0.0), c(1.0), c(1.0), c(0.0)],
        )
        .unwrap();
        let (p, rest) = bell.condition(&[(Subsystem::Qubit(0), UP)]).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        assert_eq!(rest.unwrap(), PureState::qubit_basis(&[DOWN]).unwrap());
        let plus = PureState::qubit(c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)).unwrap();
        let (p, rest) = plus
            .tensor(&PureState::qubit_basis(&[UP]).unwrap())
            .unwrap()
            .condition(&[(Subsystem::Qubit(1), DOWN)])
            .unwrap();
        assert_eq!(p, 0.0);
        assert!(rest.is_none());
    }

    #[test]
    fn unnormalized_input_is_rejected_by_from_amplitudes() {
        let err = PureState::from_amplitudes(SubsystemLayout::qubits(1), vec![c(1.0), c(1.0)]);
        assert!(matches!(err, Err(Error::NotNormalized(_))));
    }
}
