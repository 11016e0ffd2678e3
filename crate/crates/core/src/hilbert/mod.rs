//! Dense states over matter qubits and truncated bosonic modes.
//!
//! Qubits use the computational basis {|up>, |down>} with digits [`UP`] = 0 and
//! [`DOWN`] = 1, so the Hadamard maps |up> to (|up> + |down>)/sqrt 2. Modes are
//! Fock spaces truncated at the layout cutoff; any operation that would populate
//! an occupation above the cutoff fails instead of truncating.
//!
//! All states are immutable values: every operation returns a new state.

mod density;
mod layout;
mod operator;
mod pure;

pub use density::{DensityOperator, POSITIVITY_TOLERANCE};
pub use layout::{
    BasisLabel, Subsystem, SubsystemLayout, DEFAULT_DIMENSION_BUDGET, DEFAULT_FOCK_CUTOFF, DOWN,
    UP,
};
pub use operator::{LocalOperator, UNITARY_TOLERANCE};
pub use pure::{PureState, NORM_TOLERANCE};

pub(crate) use density::check_completeness;

use num_complex::Complex64 as C64;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Outcomes with probability at or below this are dropped from measurement results.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

/// Tolerance for projector completeness and orthogonality.
pub const MEASUREMENT_TOLERANCE: f64 = 1e-10;

/// Either a ket or a density operator.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(PureState),
    Mixed(DensityOperator),
}

impl From<PureState> for State {
    fn from(psi: PureState) -> Self {
        State::Pure(psi)
    }
}

impl From<DensityOperator> for State {
    fn from(rho: DensityOperator) -> Self {
        State::Mixed(rho)
    }
}

impl State {
    pub fn layout(&self) -> &SubsystemLayout {
        match self {
            State::Pure(psi) => psi.layout(),
            State::Mixed(rho) => rho.layout(),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, State::Pure(_))
    }

    pub fn as_pure(&self) -> Option<&PureState> {
        match self {
            State::Pure(psi) => Some(psi),
            State::Mixed(_) => None,
        }
    }

    pub fn to_density(&self) -> Result<DensityOperator> {
        match self {
            State::Pure(psi) => DensityOperator::from_pure(psi),
            State::Mixed(rho) => Ok(rho.clone()),
        }
    }

    pub fn apply_unitary(&self, op: &LocalOperator) -> Result<State> {
        Ok(match self {
            State::Pure(psi) => State::Pure(psi.apply_unitary(op)?),
            State::Mixed(rho) => State::Mixed(rho.apply_unitary(op)?),
        })
    }

    /// Applies a channel; a single Kraus operator keeps pure states pure.
    pub fn apply_kraus(&self, kraus: &[LocalOperator]) -> Result<State> {
        match (self, kraus) {
            (State::Pure(psi), [single]) => {
                check_completeness(kraus)?;
                Ok(State::Pure(psi.apply_operator(single)?.normalize()?))
            }
            _ => Ok(State::Mixed(self.to_density()?.apply_kraus(kraus)?)),
        }
    }

    /// Unnormalized `P state P^dagger`, returned with its weight.
    pub(crate) fn project(&self, op: &LocalOperator) -> Result<(f64, State)> {
        Ok(match self {
            State::Pure(psi) => {
                let out = psi.apply_operator(op)?;
                (out.norm_sqr(), State::Pure(out))
            }
            State::Mixed(rho) => {
                let out = rho.sandwich(op)?;
                (out.trace().re, State::Mixed(out))
            }
        })
    }

    pub(crate) fn normalized_by(self, probability: f64) -> Result<State> {
        Ok(match self {
            State::Pure(psi) => State::Pure(psi.normalize()?),
            State::Mixed(rho) => State::Mixed(rho.normalized_by(probability)),
        })
    }

    /// Fixes subsystems to given digits and removes them.
    pub fn condition(&self, fixed: &[(Subsystem, usize)]) -> Result<(f64, Option<State>)> {
        Ok(match self {
            State::Pure(psi) => {
                let (p, s) = psi.condition(fixed)?;
                (p, s.map(State::Pure))
            }
            State::Mixed(rho) => {
                let (p, s) = rho.condition(fixed)?;
                (p, s.map(State::Mixed))
            }
        })
    }

    pub fn partial_trace(&self, keep: &[Subsystem]) -> Result<DensityOperator> {
        self.to_density()?.partial_trace(keep)
    }

    pub fn mean_photon_number(&self, mode: usize) -> Result<f64> {
        match self {
            State::Pure(psi) => psi.mean_photon_number(mode),
            State::Mixed(rho) => rho.mean_photon_number(mode),
        }
    }

    /// Norm squared (pure) or trace (mixed).
    pub fn weight(&self) -> f64 {
        match self {
            State::Pure(psi) => psi.norm_sqr(),
            State::Mixed(rho) => rho.trace().re,
        }
    }
}

/// One branch of a measurement: its Born probability, normalized post-state and tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<L> {
    pub probability: f64,
    pub post_state: State,
    pub label: L,
}

/// Product state with `a`'s subsystems first.
pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState> {
    a.tensor(b)
}

/// Reduced density operator on `keep`.
pub fn partial_trace(rho: &DensityOperator, keep: &[Subsystem]) -> Result<DensityOperator> {
    rho.partial_trace(keep)
}

/// `<a|rho|a>`, or `|<a|b>|^2` for a pure `b`, clamped to [0, 1].
pub fn fidelity(a: &PureState, b: &State) -> Result<f64> {
    let f = match b {
        State::Pure(psi) => a.inner(psi)?.norm_sqr(),
        State::Mixed(rho) => rho.expectation(a)?,
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Born-rule measurement with a complete set of orthogonal projectors sharing
/// the same targets. Outcome labels are projector indices; zero-probability
/// outcomes are omitted.
pub fn measure_projective(state: &State, projectors: &[LocalOperator]) -> Result<Vec<Outcome<usize>>> {
    validate_projectors(projectors)?;
    let mut outcomes = Vec::new();
    for (label, p) in projectors.iter().enumerate() {
        let (probability, projected) = state.project(p)?;
        if probability <= PROBABILITY_FLOOR {
            continue;
        }
        outcomes.push(Outcome {
            probability,
            post_state: projected.normalized_by(probability)?,
            label,
        });
    }
    Ok(outcomes)
}

fn validate_projectors(projectors: &[LocalOperator]) -> Result<()> {
    let Some(first) = projectors.first() else {
        return Err(Error::InvalidMeasurement("no projectors".into()));
    };
    let d = first.dim();
    let mut sum = vec![C64::new(0.0, 0.0); d * d];
    for (i, p) in projectors.iter().enumerate() {
        if p.targets() != first.targets() || p.dim() != d {
            return Err(Error::InvalidMeasurement(
                "projectors act on different targets".into(),
            ));
        }
        for (s, v) in sum.iter_mut().zip(p.matrix()) {
            *s += v;
        }
        for (j, q) in projectors.iter().enumerate() {
            let pq = p.compose(q)?;
            let expected = if i == j { p.matrix() } else { &[][..] };
            let worst = pq
                .matrix()
                .iter()
                .enumerate()
                .map(|(k, v)| (v - expected.get(k).copied().unwrap_or_default()).norm())
                .fold(0.0, f64::max);
            if worst > MEASUREMENT_TOLERANCE {
                return Err(Error::InvalidMeasurement(format!(
                    "projectors {i} and {j} are not orthogonal idempotents"
                )));
            }
        }
    }
    for r in 0..d {
        for c in 0..d {
            let expected = if r == c { 1.0 } else { 0.0 };
            if (sum[r * d + c] - expected).norm() > MEASUREMENT_TOLERANCE {
                return Err(Error::InvalidMeasurement("projectors are incomplete".into()));
            }
        }
    }
    Ok(())
}

/// {|up><up|, |down><down|} on one qubit.
pub fn computational_basis(qubit: usize) -> Vec<LocalOperator> {
    [UP, DOWN]
        .into_iter()
        .map(|d| {
            LocalOperator::basis_projector(vec![Subsystem::Qubit(qubit)], 2, d)
                .expect("digit below 2")
        })
        .collect()
}

/// {|+><+|, |-><-|} on one qubit with |+-> = (|up> +- |down>)/sqrt 2.
pub fn plus_minus_basis(qubit: usize) -> Vec<LocalOperator> {
    let h = C64::new(0.5, 0.0);
    vec![
        LocalOperator::qubit(qubit, [[h, h], [h, h]]),
        LocalOperator::qubit(qubit, [[h, -h], [-h, h]]),
    ]
}

/// (|up> + |down>)/sqrt 2.
pub fn plus_state() -> PureState {
    let a = C64::new(FRAC_1_SQRT_2, 0.0);
    PureState::from_amplitudes(SubsystemLayout::qubits(1), vec![a, a]).expect("normalized")
}
