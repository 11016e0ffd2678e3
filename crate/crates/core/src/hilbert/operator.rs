use num_complex::Complex64 as C64;
use std::f64::consts::FRAC_1_SQRT_2;

use super::layout::{Subsystem, SubsystemLayout};
use crate::error::{Error, Result};

/// Tolerance for unitarity and completeness checks.
pub const UNITARY_TOLERANCE: f64 = 1e-12;

/// A matrix acting on an ordered list of subsystems.
///
/// Local indices are mixed-radix over `targets` in the given order, first
/// target most significant. The matrix is stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    targets: Vec<Subsystem>,
    dim: usize,
    matrix: Vec<C64>,
}

impl LocalOperator {
    pub fn new(targets: Vec<Subsystem>, dim: usize, matrix: Vec<C64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "operator of dimension {dim} needs {} entries, got {}",
                dim * dim,
                matrix.len()
            )));
        }
        if targets.is_empty() {
            return Err(Error::InvalidTarget("operator without targets".into()));
        }
        Ok(Self {
            targets,
            dim,
            matrix,
        })
    }

    /// Single-qubit operator from rows `[[a, b], [c, d]]`.
    pub fn qubit(qubit: usize, m: [[C64; 2]; 2]) -> Self {
        Self {
            targets: vec![Subsystem::Qubit(qubit)],
            dim: 2,
            matrix: vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }

    pub fn hadamard(qubit: usize) -> Self {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        Self::qubit(qubit, [[h, h], [h, -h]])
    }

    /// Bit flip |up> <-> |down>.
    pub fn pauli_x(qubit: usize) -> Self {
        let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
        Self::qubit(qubit, [[o, l], [l, o]])
    }

    /// Phase flip, -1 on |down>.
    pub fn pauli_z(qubit: usize) -> Self {
        let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
        Self::qubit(qubit, [[l, o], [o, -l]])
    }

    /// Projector onto a single local basis state of `targets`.
    pub fn basis_projector(targets: Vec<Subsystem>, dim: usize, local_index: usize) -> Result<Self> {
        let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
        if local_index >= dim {
            return Err(Error::InvalidInput(format!(
                "basis index {local_index} outside dimension {dim}"
            )));
        }
        matrix[local_index * dim + local_index] = C64::new(1.0, 0.0);
        Self::new(targets, dim, matrix)
    }

    pub fn identity(targets: Vec<Subsystem>, dim: usize) -> Self {
        let mut matrix = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = C64::new(1.0, 0.0);
        }
        Self {
            targets,
            dim,
            matrix,
        }
    }

    pub fn targets(&self) -> &[Subsystem] {
        &self.targets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[row * self.dim + col]
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut matrix = vec![C64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for c in 0..d {
                matrix[c * d + r] = self.matrix[r * d + c].conj();
            }
        }
        Self {
            targets: self.targets.clone(),
            dim: d,
            matrix,
        }
    }

    /// `self * other`; both must act on the same targets.
    pub fn compose(&self, other: &LocalOperator) -> Result<Self> {
        if self.targets != other.targets || self.dim != other.dim {
            return Err(Error::InvalidTarget(
                "composed operators must share targets".into(),
            ));
        }
        let d = self.dim;
        let mut matrix = vec![C64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.matrix[r * d + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..d {
                    matrix[r * d + c] += a * other.matrix[k * d + c];
                }
            }
        }
        Ok(Self {
            targets: self.targets.clone(),
            dim: d,
            matrix,
        })
    }

    /// Largest entrywise deviation of `self^dagger * self` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let product = self
            .adjoint()
            .compose(self)
            .expect("adjoint shares targets");
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let expected = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((product.matrix[r * d + c] - expected).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// Errors unless the targets exist in `layout` and match the operator dimension.
    pub(crate) fn check_against(&self, layout: &SubsystemLayout) -> Result<()> {
        layout.normalize_targets(&self.targets)?;
        let expected: usize = self
            .targets
            .iter()
            .map(|&s| layout.local_dimension(s))
            .product();
        if expected != self.dim {
            return Err(Error::InvalidTarget(format!(
                "operator of dimension {} does not match targets {:?} (dimension {expected})",
                self.dim, self.targets
            )));
        }
        Ok(())
    }
}

/// Precomputed gather/scatter offsets for applying a local operator.
pub(crate) struct TargetIndexer {
    /// Composite offset of every local index.
    pub offsets: Vec<usize>,
    /// Composite indices with all target digits at zero.
    pub bases: Vec<usize>,
}

impl TargetIndexer {
    pub fn new(layout: &SubsystemLayout, targets: &[Subsystem]) -> Result<Self> {
        let strides = layout.strides();
        let positions: Vec<usize> = targets
            .iter()
            .map(|&t| layout.position(t))
            .collect::<Result<_>>()?;
        let radices: Vec<usize> = positions.iter().map(|&p| layout.radix(p)).collect();
        let local_dim: usize = radices.iter().product();

        let mut offsets = Vec::with_capacity(local_dim);
        for local in 0..local_dim {
            let mut rest = local;
            let mut offset = 0;
            for k in (0..positions.len()).rev() {
                offset += (rest % radices[k]) * strides[positions[k]];
                rest /= radices[k];
            }
            offsets.push(offset);
        }

        let dim = layout.dimension();
        let bases = (0..dim)
            .filter(|&i| positions.iter().all(|&p| layout.digit(i, p, &strides) == 0))
            .collect();
        Ok(Self { offsets, bases })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gates_are_unitary() {
        for op in [
            LocalOperator::hadamard(0),
            LocalOperator::pauli_x(0),
            LocalOperator::pauli_z(0),
        ] {
            assert!(op.is_unitary(UNITARY_TOLERANCE));
        }
    }

    #[test]
    fn projector_is_not_unitary() {
        let p = LocalOperator::basis_projector(vec![Subsystem::Qubit(0)], 2, 1).unwrap();
        assert!(!p.is_unitary(UNITARY_TOLERANCE));
    }

    #[test]
    fn indexer_offsets_follow_target_order() {
        let layout = SubsystemLayout::new(2, 1, 2).unwrap();
        let ix = TargetIndexer::new(&layout, &[Subsystem::Mode(0), Subsystem::Qubit(0)]).unwrap();
        // mode digit most significant locally: local index = n * 2 + q0
        assert_eq!(ix.offsets, vec![0, 6, 1, 7, 2, 8]);
        assert_eq!(ix.bases, vec![0, 3]);
    }
}
