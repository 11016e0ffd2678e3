//! Linear optics on truncated Fock modes, loss, and threshold photodetection.
//!
//! The beam-splitter convention is the symmetric, Hermitian one:
//!
//! ```text
//! a† -> cos θ a† + e^{iφ} sin θ b†
//! b† -> e^{-iφ} sin θ a† - cos θ b†
//! ```
//!
//! so the balanced splitter (θ = π/4, φ = 0) maps a† to (a† + b†)/√2 and b† to
//! (a† - b†)/√2. A single photon entering the first port therefore leaves in the
//! symmetric superposition and |1,1> bunches into (|2,0> - |0,2>)/√2.
//!
//! Polarization is two Fock modes (H, V) per spatial port; the polarizing beam
//! splitter transmits H and reflects V, which is a relabeling of the V modes.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::hilbert::{LocalOperator, Outcome, State, Subsystem, PROBABILITY_FLOOR};

/// Spatial port carrying a horizontal and a vertical polarization mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarizationPort {
    pub h: usize,
    pub v: usize,
}

impl PolarizationPort {
    pub fn new(h: usize, v: usize) -> Self {
        Self { h, v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OpticalElement {
    BeamSplitter { theta: f64, phi: f64, modes: (usize, usize) },
    PhaseShift { phi: f64, mode: usize },
    /// Rotates H toward V by `theta` within one port; θ = π/2 sends H to V.
    PolarizationRotation { theta: f64, port: PolarizationPort },
    /// Transmits H and reflects V between two ports.
    Pbs { a: PolarizationPort, b: PolarizationPort },
    /// Exchanges the contents of two modes.
    Swap { modes: (usize, usize) },
}

impl OpticalElement {
    /// The 50:50 splitter.
    pub fn balanced(a: usize, b: usize) -> Self {
        OpticalElement::BeamSplitter {
            theta: FRAC_PI_4,
            phi: 0.0,
            modes: (a, b),
        }
    }

    fn modes(&self) -> Vec<usize> {
        match *self {
            OpticalElement::BeamSplitter { modes, .. } => vec![modes.0, modes.1],
            OpticalElement::PhaseShift { mode, .. } => vec![mode],
            OpticalElement::PolarizationRotation { port, .. } => vec![port.h, port.v],
            OpticalElement::Pbs { a, b } => vec![a.v, b.v],
            OpticalElement::Swap { modes } => vec![modes.0, modes.1],
        }
    }

    /// Fock-space operator plus a per-local-index flag marking inputs whose
    /// image would leave the truncated space.
    pub fn fock_operator(&self, cutoff: usize) -> Result<(LocalOperator, Vec<bool>)> {
        let modes = self.modes();
        let targets: Vec<Subsystem> = modes.iter().map(|&m| Subsystem::Mode(m)).collect();
        match *self {
            OpticalElement::PhaseShift { phi, .. } => {
                let d = cutoff + 1;
                let mut m = vec![C64::new(0.0, 0.0); d * d];
                for n in 0..d {
                    m[n * d + n] = C64::from_polar(1.0, n as f64 * phi);
                }
                Ok((LocalOperator::new(targets, d, m)?, vec![true; d]))
            }
            OpticalElement::BeamSplitter { theta, phi, .. } => {
                let (s, c) = theta.sin_cos();
                let u = [
                    [C64::new(c, 0.0), C64::from_polar(s, phi)],
                    [C64::from_polar(s, -phi), C64::new(-c, 0.0)],
                ];
                two_mode_operator(targets, cutoff, u)
            }
            OpticalElement::PolarizationRotation { theta, .. } => {
                let (s, c) = theta.sin_cos();
                let u = [
                    [C64::new(c, 0.0), C64::new(s, 0.0)],
                    [C64::new(-s, 0.0), C64::new(c, 0.0)],
                ];
                two_mode_operator(targets, cutoff, u)
            }
            OpticalElement::Pbs { .. } | OpticalElement::Swap { .. } => {
                let (o, l) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0));
                two_mode_operator(targets, cutoff, [[o, l], [l, o]])
            }
        }
    }

    fn validate(&self, mode_count: usize) -> Result<()> {
        let modes = self.modes();
        for &m in &modes {
            if m >= mode_count {
                return Err(Error::InvalidTarget(format!("mode {m} outside {mode_count} modes")));
            }
        }
        if modes.len() == 2 && modes[0] == modes[1] {
            return Err(Error::InvalidTarget("element needs two distinct modes".into()));
        }
        match *self {
            OpticalElement::PolarizationRotation { port, .. } if port.h == port.v => {
                Err(Error::InvalidTarget("port needs distinct H and V modes".into()))
            }
            OpticalElement::Pbs { a, b } => {
                let all = [a.h, a.v, b.h, b.v];
                for (i, x) in all.iter().enumerate() {
                    if *x >= mode_count {
                        return Err(Error::InvalidTarget(format!("mode {x} outside {mode_count} modes")));
                    }
                    if all[i + 1..].contains(x) {
                        return Err(Error::InvalidTarget(
                            "PBS ports must pair four distinct modes".into(),
                        ));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Image of |na, nb> under the single-particle map `u` (rows: input mode,
/// columns: coefficient on the output a†, b†), as (pa, pb, amplitude) terms.
fn two_mode_image(na: usize, nb: usize, u: [[C64; 2]; 2]) -> Vec<(usize, usize, C64)> {
    let total = na + nb;
    let mut coeff = vec![C64::new(0.0, 0.0); total + 1]; // indexed by output pa
    for k in 0..=na {
        let ta = binomial(na, k) * u[0][0].powu(k as u32) * u[0][1].powu((na - k) as u32);
        for l in 0..=nb {
            let tb = binomial(nb, l) * u[1][0].powu(l as u32) * u[1][1].powu((nb - l) as u32);
            coeff[k + l] += ta * tb;
        }
    }
    let norm_in = (factorial(na) * factorial(nb)).sqrt();
    coeff
        .into_iter()
        .enumerate()
        .map(|(pa, z)| {
            let pb = total - pa;
            (pa, pb, z * (factorial(pa) * factorial(pb)).sqrt() / norm_in)
        })
        .collect()
}

/// Photon-number-conserving two-mode operator on the truncated space. Blocks
/// of fixed total photon number that do not close under truncation act as the
/// identity and their inputs are flagged inadmissible.
fn two_mode_operator(targets: Vec<Subsystem>, cutoff: usize, u: [[C64; 2]; 2]) -> Result<(LocalOperator, Vec<bool>)> {
    let local = cutoff + 1;
    let d = local * local;
    let mut m = vec![C64::new(0.0, 0.0); d * d];
    let mut admissible = vec![true; d];
    for total in 0..=2 * cutoff {
        let inputs: Vec<(usize, usize)> = (0..=total)
            .map(|na| (na, total - na))
            .filter(|&(na, nb)| na <= cutoff && nb <= cutoff)
            .collect();
        let mut block = Vec::new();
        let mut closed = true;
        for &(na, nb) in &inputs {
            let image = two_mode_image(na, nb, u);
            for &(pa, pb, z) in &image {
                if (pa > cutoff || pb > cutoff) && z.norm() > 1e-14 {
                    closed = false;
                }
            }
            block.push(((na, nb), image));
        }
        for ((na, nb), image) in block {
            let col = na * local + nb;
            if closed {
                for (pa, pb, z) in image {
                    if pa <= cutoff && pb <= cutoff {
                        m[(pa * local + pb) * d + col] = z;
                    }
                }
            } else {
                m[col * d + col] = C64::new(1.0, 0.0);
                admissible[col] = false;
            }
        }
    }
    Ok((LocalOperator::new(targets, d, m)?, admissible))
}

/// Weight of `state` on local configurations of `targets` flagged false.
fn inadmissible_weight(state: &State, targets: &[Subsystem], admissible: &[bool]) -> Result<f64> {
    let layout = state.layout();
    let strides = layout.strides();
    let positions: Vec<usize> = targets
        .iter()
        .map(|&t| layout.position(t))
        .collect::<Result<_>>()?;
    let local_index = |i: usize| {
        positions
            .iter()
            .fold(0, |acc, &p| acc * layout.radix(p) + layout.digit(i, p, &strides))
    };
    Ok(match state {
        State::Pure(psi) => psi
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| !admissible[local_index(*i)])
            .map(|(_, a)| a.norm_sqr())
            .sum(),
        State::Mixed(rho) => rho.diagonal_weight(|i| !admissible[local_index(i)]),
    })
}

/// Applies a linear-optical element; fails rather than truncating when the
/// output would exceed the Fock cutoff.
pub fn apply_element(state: &State, element: &OpticalElement) -> Result<State> {
    let layout = state.layout();
    element.validate(layout.mode_count())?;
    let (op, admissible) = element.fock_operator(layout.fock_cutoff())?;
    if inadmissible_weight(state, op.targets(), &admissible)? > PROBABILITY_FLOOR {
        let mode = element.modes()[0];
        return Err(Error::CutoffOverflow {
            mode,
            cutoff: layout.fock_cutoff(),
        });
    }
    state.apply_unitary(&op)
}

/// Polarizing beam splitter between two ports.
pub fn apply_pbs(state: &State, a: PolarizationPort, b: PolarizationPort) -> Result<State> {
    apply_element(state, &OpticalElement::Pbs { a, b })
}

/// Pure-loss channel of transmissivity `eta_t` on one mode.
pub fn apply_loss(state: &State, mode: usize, eta_t: f64) -> Result<State> {
    if !(0.0..=1.0).contains(&eta_t) {
        return Err(Error::parameter("transmissivity", eta_t, "must lie in [0, 1]"));
    }
    let layout = state.layout();
    layout.position(Subsystem::Mode(mode))?;
    if eta_t == 1.0 {
        return Ok(state.clone());
    }
    let d = layout.fock_cutoff() + 1;
    let kraus: Vec<LocalOperator> = (0..d)
        .map(|k| {
            let mut m = vec![C64::new(0.0, 0.0); d * d];
            for n in k..d {
                let amp = (binomial(n, k) * eta_t.powi((n - k) as i32) * (1.0 - eta_t).powi(k as i32)).sqrt();
                m[(n - k) * d + n] = C64::new(amp, 0.0);
            }
            LocalOperator::new(vec![Subsystem::Mode(mode)], d, m)
        })
        .collect::<Result<_>>()?;
    state.apply_kraus(&kraus)
}

/// Non-number-resolving detector with efficiency and dark-count probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    efficiency: f64,
    dark_count_prob: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_count_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::parameter("efficiency", efficiency, "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&dark_count_prob) {
            return Err(Error::parameter(
                "dark_count_prob",
                dark_count_prob,
                "must lie in [0, 1)",
            ));
        }
        Ok(Self {
            efficiency,
            dark_count_prob,
        })
    }

    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_prob: 0.0,
        }
    }

    pub fn with_efficiency(efficiency: f64) -> Result<Self> {
        Self::new(efficiency, 0.0)
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn dark_count_prob(&self) -> f64 {
        self.dark_count_prob
    }

    /// Threshold detectors cannot count photons.
    pub fn number_resolving(&self) -> bool {
        false
    }

    /// Diagonal of the no-click POVM element on |n>.
    pub fn no_click_weight(&self, n: usize) -> f64 {
        (1.0 - self.efficiency).powi(n as i32) * (1.0 - self.dark_count_prob)
    }

    pub fn click_weight(&self, n: usize) -> f64 {
        1.0 - self.no_click_weight(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub detector_id: usize,
    pub clicked: bool,
}

/// Threshold detection of `mode`. Outcome labels are `clicked`; the detected
/// mode is left in vacuum. Zero-probability outcomes are omitted.
pub fn measure_threshold(state: &State, mode: usize, detector: &DetectorModel) -> Result<Vec<Outcome<bool>>> {
    let layout = state.layout();
    layout.position(Subsystem::Mode(mode))?;
    let d = layout.fock_cutoff() + 1;
    let absorb = |n: usize, weight: f64| {
        let mut m = vec![C64::new(0.0, 0.0); d * d];
        m[n] = C64::new(weight.sqrt(), 0.0); // |0><n|
        LocalOperator::new(vec![Subsystem::Mode(mode)], d, m)
    };

    let mut outcomes = Vec::with_capacity(2);
    for clicked in [false, true] {
        let mut terms: Vec<(f64, State)> = Vec::new();
        for n in 0..d {
            let w = if clicked {
                detector.click_weight(n)
            } else {
                detector.no_click_weight(n)
            };
            if w <= 0.0 {
                continue;
            }
            let (p, projected) = state.project(&absorb(n, w)?)?;
            if p > 0.0 {
                terms.push((p, projected));
            }
        }
        let probability: f64 = terms.iter().map(|(p, _)| p).sum();
        if probability <= PROBABILITY_FLOOR {
            continue;
        }
        let post_state = match terms.len() {
            1 => terms.pop().expect("one term").1.normalized_by(probability)?,
            _ => {
                let mut acc: Option<crate::hilbert::DensityOperator> = None;
                for (_, s) in terms {
                    let rho = s.to_density()?;
                    acc = Some(match acc {
                        None => rho,
                        Some(a) => add_densities(a, &rho),
                    });
                }
                State::Mixed(acc.expect("nonempty").normalized_by(probability))
            }
        };
        outcomes.push(Outcome {
            probability,
            post_state,
            label: clicked,
        });
    }
    Ok(outcomes)
}

fn add_densities(a: crate::hilbert::DensityOperator, b: &crate::hilbert::DensityOperator) -> crate::hilbert::DensityOperator {
    let layout = a.layout().clone();
    let matrix = a
        .matrix()
        .iter()
        .zip(b.matrix())
        .map(|(x, y)| x + y)
        .collect();
    crate::hilbert::DensityOperator::unchecked(layout, matrix)
}

/// Partially erases which-path coherence between two modes.
///
/// Matrix elements are scaled by `sqrt(v)^|Δn_b|`, where `Δn_b` is the
/// difference in the second mode's occupation between row and column. In the
/// single-photon sector this multiplies the |1,0>/|0,1> coherence by the
/// wavepacket overlap `sqrt(v)`; the multiplier is a Kac-Murdock-Szegő kernel,
/// hence positive and the map completely positive.
pub fn dephase_by_visibility(state: &State, modes: (usize, usize), v: f64) -> Result<State> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::parameter("visibility", v, "must lie in [0, 1]"));
    }
    let layout = state.layout();
    layout.position(Subsystem::Mode(modes.0))?;
    let pb = layout.position(Subsystem::Mode(modes.1))?;
    if modes.0 == modes.1 {
        return Err(Error::InvalidTarget("visibility needs two distinct modes".into()));
    }
    if v == 1.0 {
        return Ok(state.clone());
    }
    let overlap = v.sqrt();
    let strides = layout.strides();
    let occupation: Vec<i32> = (0..layout.dimension())
        .map(|i| layout.digit(i, pb, &strides) as i32)
        .collect();
    let rho = state.to_density()?;
    Ok(State::Mixed(rho.schur_scaled(|i, j| {
        let delta = (occupation[i] - occupation[j]).unsigned_abs();
        if delta == 0 {
            1.0
        } else {
            overlap.powi(delta as i32)
        }
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fidelity, DensityOperator, PureState, SubsystemLayout};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn fock(occ: &[usize]) -> State {
        PureState::fock(occ, 2).unwrap().into()
    }

    fn superposition(terms: &[(f64, &[usize])]) -> PureState {
        let layout = SubsystemLayout::new(0, terms[0].1.len(), 2).unwrap();
        let mut amps = vec![c(0.0); layout.dimension()];
        for (a, occ) in terms {
            let idx = layout
                .encode(&crate::hilbert::BasisLabel::new(vec![], occ.to_vec()))
                .unwrap();
            amps[idx] += c(*a);
        }
        PureState::from_unnormalized(layout, amps).unwrap()
    }

    #[test]
    fn balanced_splitter_examples() {
        let bs = OpticalElement::balanced(0, 1);
        let out = apply_element(&fock(&[1, 0]), &bs).unwrap();
        let expected = superposition(&[(1.0, &[1, 0]), (1.0, &[0, 1])]);
        assert_abs_diff_eq!(fidelity(&expected, &out).unwrap(), 1.0, epsilon = 1e-15);
        let amp = out.as_pure().unwrap().amplitudes()[1];
        assert_abs_diff_eq!(amp.re, FRAC_1_SQRT_2, epsilon = 1e-15);

        let vac = apply_element(&fock(&[0, 0]), &bs).unwrap();
        assert_eq!(vac, fock(&[0, 0]));

        // exact amplitudes of the bunched pair, sign included
        let out = apply_element(&fock(&[1, 1]), &bs).unwrap();
        let psi = out.as_pure().unwrap();
        assert_abs_diff_eq!(psi.amplitudes()[2 * 3].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amplitudes()[2].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amplitudes()[4].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn overflow_is_an_error_not_a_truncation() {
        let state: State = PureState::fock(&[1, 1], 1).unwrap().into();
        assert!(matches!(
            apply_element(&state, &OpticalElement::balanced(0, 1)),
            Err(Error::CutoffOverflow { .. })
        ));
        // a single photon fits even with cutoff 1
        let single: State = PureState::fock(&[1, 0], 1).unwrap().into();
        assert!(apply_element(&single, &OpticalElement::balanced(0, 1)).is_ok());
    }

    #[test]
    fn invalid_modes_are_rejected() {
        assert!(apply_element(&fock(&[1, 0]), &OpticalElement::balanced(0, 2)).is_err());
        assert!(apply_element(&fock(&[1, 0]), &OpticalElement::balanced(1, 1)).is_err());
    }

    #[test]
    fn pbs_transmits_h_and_reflects_v() {
        let (a, b) = (PolarizationPort::new(0, 1), PolarizationPort::new(2, 3));
        // H entering port a stays in port a
        let out = apply_pbs(&fock(&[1, 0, 0, 0]), a, b).unwrap();
        assert_eq!(out, fock(&[1, 0, 0, 0]));
        // V entering port b leaves through port a
        let out = apply_pbs(&fock(&[0, 0, 0, 1]), a, b).unwrap();
        assert_eq!(out, fock(&[0, 1, 0, 0]));
        assert!(apply_pbs(&fock(&[0, 0, 0, 1]), a, PolarizationPort::new(2, 1)).is_err());
    }

    #[test]
    fn rotation_and_pbs_merge_dual_rail_into_polarization() {
        let (a, b) = (PolarizationPort::new(0, 1), PolarizationPort::new(2, 3));
        let dual_rail: State = superposition(&[(1.0, &[1, 0, 0, 0]), (1.0, &[0, 0, 1, 0])]).into();
        let rotated = apply_element(
            &dual_rail,
            &OpticalElement::PolarizationRotation {
                theta: FRAC_PI_2,
                port: b,
            },
        )
        .unwrap();
        let merged = apply_pbs(&rotated, a, b).unwrap();
        let expected = superposition(&[(1.0, &[1, 0, 0, 0]), (1.0, &[0, 1, 0, 0])]);
        assert_abs_diff_eq!(fidelity(&expected, &merged).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(merged.mean_photon_number(2).unwrap(), 0.0);
        assert_abs_diff_eq!(merged.mean_photon_number(3).unwrap(), 0.0);
    }

    #[test]
    fn loss_examples() {
        let one: State = PureState::fock(&[1], 2).unwrap().into();
        assert_eq!(apply_loss(&one, 0, 1.0).unwrap(), one);
        let gone = apply_loss(&one, 0, 0.0).unwrap();
        let vac = PureState::fock(&[0], 2).unwrap();
        assert_abs_diff_eq!(fidelity(&vac, &gone).unwrap(), 1.0, epsilon = 1e-15);

        let half = apply_loss(&one, 0, 0.5).unwrap().to_density().unwrap();
        let expected = DensityOperator::from_mixture(&[
            (0.5, PureState::fock(&[1], 2).unwrap()),
            (0.5, PureState::fock(&[0], 2).unwrap()),
        ])
        .unwrap();
        for (x, y) in half.matrix().iter().zip(expected.matrix()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-15);
        }
        assert!(apply_loss(&one, 0, 1.5).is_err());
    }

    #[test]
    fn threshold_click_probabilities() {
        let eta = 0.3;
        let det = DetectorModel::with_efficiency(eta).unwrap();
        let click = |s: &State| {
            measure_threshold(s, 0, &det)
                .unwrap()
                .into_iter()
                .find(|o| o.label)
                .map_or(0.0, |o| o.probability)
        };
        assert_abs_diff_eq!(click(&fock(&[1])), eta, epsilon = 1e-15);
        // oracle: sum over nonempty subsets of the two photons that are detected
        let subsets = 2.0 * eta * (1.0 - eta) + eta * eta;
        assert_abs_diff_eq!(click(&fock(&[2])), subsets, epsilon = 1e-15);
        let vac = measure_threshold(&fock(&[0]), 0, &det).unwrap();
        assert_eq!(vac.len(), 1);
        assert!(!vac[0].label);
        assert_eq!(vac[0].probability, 1.0);
    }

    #[test]
    fn detection_absorbs_the_photon() {
        let det = DetectorModel::ideal();
        let out = measure_threshold(&fock(&[1, 1]), 0, &det).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].label);
        assert_eq!(out[0].post_state.mean_photon_number(0).unwrap(), 0.0);
        assert_eq!(out[0].post_state.mean_photon_number(1).unwrap(), 1.0);
    }

    #[test]
    fn dark_counts_can_click_on_vacuum() {
        let det = DetectorModel::new(0.5, 0.1).unwrap();
        let out = measure_threshold(&fock(&[0]), 0, &det).unwrap();
        let click = out.iter().find(|o| o.label).unwrap();
        assert_abs_diff_eq!(click.probability, 0.1, epsilon = 1e-15);
        assert!(!det.number_resolving());
        assert!(DetectorModel::new(1.2, 0.0).is_err());
        assert!(DetectorModel::new(0.5, 1.0).is_err());
    }

    #[test]
    fn visibility_examples() {
        let psi: State = superposition(&[(1.0, &[1, 0]), (1.0, &[0, 1])]).into();
        assert_eq!(dephase_by_visibility(&psi, (0, 1), 1.0).unwrap(), psi);
        let mixed = dephase_by_visibility(&psi, (0, 1), 0.0).unwrap().to_density().unwrap();
        let expected = DensityOperator::from_mixture(&[
            (0.5, PureState::fock(&[1, 0], 2).unwrap()),
            (0.5, PureState::fock(&[0, 1], 2).unwrap()),
        ])
        .unwrap();
        for (x, y) in mixed.matrix().iter().zip(expected.matrix()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-15);
        }
        let partial = dephase_by_visibility(&psi, (0, 1), 0.81).unwrap();
        assert_abs_diff_eq!(fidelity(psi.as_pure().unwrap(), &partial).unwrap(), 0.95, epsilon = 1e-15);
        assert!(dephase_by_visibility(&psi, (0, 1), 1.1).is_err());
    }

    fn random_two_mode_state(rng: &mut ChaCha8Rng, cutoff: usize, max_total: usize) -> PureState {
        let layout = SubsystemLayout::new(1, 2, cutoff).unwrap();
        let amps = (0..layout.dimension())
            .map(|i| {
                let label = layout.decode(i);
                if label.photon_number() <= max_total {
                    C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                } else {
                    c(0.0)
                }
            })
            .collect();
        PureState::from_unnormalized(layout, amps).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn elements_are_unitary(theta in -3.2f64..3.2, phi in -3.2f64..3.2, cutoff in 1usize..4) {
            for e in [
                OpticalElement::BeamSplitter { theta, phi, modes: (0, 1) },
                OpticalElement::PhaseShift { phi, mode: 0 },
                OpticalElement::PolarizationRotation { theta, port: PolarizationPort::new(0, 1) },
                OpticalElement::Pbs { a: PolarizationPort::new(0, 1), b: PolarizationPort::new(2, 3) },
                OpticalElement::Swap { modes: (0, 1) },
            ] {
                let (op, _) = e.fock_operator(cutoff).unwrap();
                prop_assert!(op.is_unitary(1e-12), "{:?} deviation {}", e, op.unitarity_deviation());
            }
        }

        #[test]
        fn povm_is_complete(seed in any::<u64>(), eta in 0.0f64..1.0, dark in 0.0f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi: State = random_two_mode_state(&mut rng, 2, 4).into();
            let det = DetectorModel::new(eta, dark).unwrap();
            let total: f64 = measure_threshold(&psi, 1, &det).unwrap().iter().map(|o| o.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn losses_compose_multiplicatively(seed in any::<u64>(), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi: State = random_two_mode_state(&mut rng, 3, 6).into();
            let twice = apply_loss(&apply_loss(&psi, 0, e1).unwrap(), 0, e2).unwrap().to_density().unwrap();
            let once = apply_loss(&psi, 0, e1 * e2).unwrap().to_density().unwrap();
            for (x, y) in twice.matrix().iter().zip(once.matrix()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
            let n_before = psi.mean_photon_number(0).unwrap();
            prop_assert!((once.mean_photon_number(0).unwrap() - e1 * e2 * n_before).abs() < 1e-10);
        }

        #[test]
        fn mach_zehnder_restores_photon_numbers(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi = random_two_mode_state(&mut rng, 2, 2);
            let state: State = psi.clone().into();
            let bs = OpticalElement::balanced(0, 1);
            let out = apply_element(&apply_element(&state, &bs).unwrap(), &bs).unwrap();
            let out = out.as_pure().unwrap();
            for (x, y) in out.amplitudes().iter().zip(psi.amplitudes()) {
                prop_assert!((x.norm_sqr() - y.norm_sqr()).abs() < 1e-12);
            }
        }
    }
}
