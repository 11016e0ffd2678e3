use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Default maximum number of stored complex entries for a single state.
pub const DEFAULT_DIMENSION_BUDGET: usize = 1 << 24;

/// Default maximum photon number per mode (inclusive).
pub const DEFAULT_FOCK_CUTOFF: usize = 2;

/// Computational-basis digit of |up>.
pub const UP: usize = 0;
/// Computational-basis digit of |down>, the optically active level.
pub const DOWN: usize = 1;

/// A single tensor factor of a composite system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subsystem {
    Qubit(usize),
    Mode(usize),
}

impl fmt::Display for Subsystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subsystem::Qubit(q) => write!(f, "qubit {q}"),
            Subsystem::Mode(m) => write!(f, "mode {m}"),
        }
    }
}

/// Qubit digits and mode occupations identifying one composite basis state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub qubits: Vec<usize>,
    pub occupations: Vec<usize>,
}

impl BasisLabel {
    pub fn new(qubits: Vec<usize>, occupations: Vec<usize>) -> Self {
        Self {
            qubits,
            occupations,
        }
    }

    pub fn photon_number(&self) -> usize {
        self.occupations.iter().sum()
    }
}

/// Bookkeeping for `qubit_count` matter qubits followed by `mode_count` bosonic
/// modes truncated at `fock_cutoff` photons each.
///
/// Composite indices are mixed-radix with the first qubit most significant and
/// the last mode least significant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemLayout {
    qubit_count: usize,
    mode_count: usize,
    fock_cutoff: usize,
}

impl SubsystemLayout {
    pub fn new(qubit_count: usize, mode_count: usize, fock_cutoff: usize) -> Result<Self> {
        if fock_cutoff == 0 {
            return Err(Error::parameter("fock_cutoff", 0.0, "must be at least 1"));
        }
        Ok(Self {
            qubit_count,
            mode_count,
            fock_cutoff,
        })
    }

    /// Qubits only; the cutoff is irrelevant but kept at the default.
    pub fn qubits(qubit_count: usize) -> Self {
        Self {
            qubit_count,
            mode_count: 0,
            fock_cutoff: DEFAULT_FOCK_CUTOFF,
        }
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn subsystem_count(&self) -> usize {
        self.qubit_count + self.mode_count
    }

    /// Total basis dimension, saturating at `u128::MAX`.
    pub fn dimension_u128(&self) -> u128 {
        let mut dim: u128 = 1;
        for _ in 0..self.qubit_count {
            dim = dim.saturating_mul(2);
        }
        for _ in 0..self.mode_count {
            dim = dim.saturating_mul(self.fock_cutoff as u128 + 1);
        }
        dim
    }

    /// Basis dimension, checked against `budget` stored entries.
    pub fn checked_dimension(&self, budget: usize) -> Result<usize> {
        let required = self.dimension_u128();
        if required > budget as u128 {
            return Err(Error::DimensionBudget { required, budget });
        }
        Ok(required as usize)
    }

    /// Basis dimension; callers are expected to have checked the budget.
    pub fn dimension(&self) -> usize {
        self.dimension_u128() as usize
    }

    pub fn contains(&self, s: Subsystem) -> bool {
        match s {
            Subsystem::Qubit(q) => q < self.qubit_count,
            Subsystem::Mode(m) => m < self.mode_count,
        }
    }

    pub fn local_dimension(&self, s: Subsystem) -> usize {
        match s {
            Subsystem::Qubit(_) => 2,
            Subsystem::Mode(_) => self.fock_cutoff + 1,
        }
    }

    /// Position of `s` in the flattened subsystem order.
    pub fn position(&self, s: Subsystem) -> Result<usize> {
        if !self.contains(s) {
            return Err(Error::InvalidTarget(format!("{s} is not part of {self}")));
        }
        Ok(match s {
            Subsystem::Qubit(q) => q,
            Subsystem::Mode(m) => self.qubit_count + m,
        })
    }

    pub fn subsystem_at(&self, position: usize) -> Subsystem {
        if position < self.qubit_count {
            Subsystem::Qubit(position)
        } else {
            Subsystem::Mode(position - self.qubit_count)
        }
    }

    pub fn subsystems(&self) -> impl Iterator<Item = Subsystem> + '_ {
        (0..self.subsystem_count()).map(move |p| self.subsystem_at(p))
    }

    pub(crate) fn radix(&self, position: usize) -> usize {
        if position < self.qubit_count {
            2
        } else {
            self.fock_cutoff + 1
        }
    }

    /// Stride of every flattened position in the composite index.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let n = self.subsystem_count();
        let mut strides = vec![1usize; n];
        for p in (0..n.saturating_sub(1)).rev() {
            strides[p] = strides[p + 1] * self.radix(p + 1);
        }
        strides
    }

    pub fn encode(&self, label: &BasisLabel) -> Result<usize> {
        if label.qubits.len() != self.qubit_count || label.occupations.len() != self.mode_count {
            return Err(Error::LayoutMismatch(format!(
                "label has {} qubits and {} modes, layout is {self}",
                label.qubits.len(),
                label.occupations.len()
            )));
        }
        let mut index = 0usize;
        for &q in &label.qubits {
            if q > 1 {
                return Err(Error::InvalidInput(format!("qubit digit {q} is not 0 or 1")));
            }
            index = index * 2 + q;
        }
        for (m, &n) in label.occupations.iter().enumerate() {
            if n > self.fock_cutoff {
                return Err(Error::CutoffOverflow {
                    mode: m,
                    cutoff: self.fock_cutoff,
                });
            }
            index = index * (self.fock_cutoff + 1) + n;
        }
        Ok(index)
    }

    pub fn decode(&self, mut index: usize) -> BasisLabel {
        let radix = self.fock_cutoff + 1;
        let mut occupations = vec![0; self.mode_count];
        for slot in occupations.iter_mut().rev() {
            *slot = index % radix;
            index /= radix;
        }
        let mut qubits = vec![0; self.qubit_count];
        for slot in qubits.iter_mut().rev() {
            *slot = index % 2;
            index /= 2;
        }
        BasisLabel {
            qubits,
            occupations,
        }
    }

    /// Digit of the subsystem at flattened `position` within composite `index`.
    pub(crate) fn digit(&self, index: usize, position: usize, strides: &[usize]) -> usize {
        (index / strides[position]) % self.radix(position)
    }

    /// Layout of `self` followed by `other`. Cutoffs must agree when both carry modes.
    pub fn concat(&self, other: &SubsystemLayout) -> Result<SubsystemLayout> {
        let fock_cutoff = match (self.mode_count, other.mode_count) {
            (0, _) => other.fock_cutoff,
            (_, 0) => self.fock_cutoff,
            _ if self.fock_cutoff == other.fock_cutoff => self.fock_cutoff,
            _ => {
                return Err(Error::LayoutMismatch(format!(
                    "cannot concatenate cutoffs {} and {}",
                    self.fock_cutoff, other.fock_cutoff
                )))
            }
        };
        Ok(SubsystemLayout {
            qubit_count: self.qubit_count + other.qubit_count,
            mode_count: self.mode_count + other.mode_count,
            fock_cutoff,
        })
    }

    /// Layout retaining only `kept` (which must be sorted and unique).
    pub(crate) fn restricted(&self, kept: &[Subsystem]) -> SubsystemLayout {
        let qubit_count = kept
            .iter()
            .filter(|s| matches!(s, Subsystem::Qubit(_)))
            .count();
        SubsystemLayout {
            qubit_count,
            mode_count: kept.len() - qubit_count,
            fock_cutoff: self.fock_cutoff,
        }
    }

    /// Sorted, deduplicated and validated subsystem list.
    pub(crate) fn normalize_targets(&self, targets: &[Subsystem]) -> Result<Vec<Subsystem>> {
        let mut sorted = targets.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != targets.len() {
            return Err(Error::InvalidTarget("repeated subsystem".into()));
        }
        for &s in &sorted {
            self.position(s)?;
        }
        Ok(sorted)
    }
}

impl fmt::Display for SubsystemLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{} qubits, {} modes, cutoff {}]",
            self.qubit_count, self.mode_count, self.fock_cutoff
        )
    }
}
