//! Three-level emitters in leaky cavities.
//!
//! A π-pulse drives |down> to the excited level, which decays back to |down>
//! while emitting one photon into the cavity output mode; |up> is dark. The
//! excited level is never stored: pulse and decay are fused into one
//! conditional-emission channel evaluated after the wait time.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{LocalOperator, State, Subsystem, DOWN, UP};

/// Jaynes-Cummings coupling `g`, cavity leakage `kappa` and wait time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub g: f64,
    pub kappa: f64,
    pub t_wait: f64,
}

impl CavityParams {
    pub fn new(g: f64, kappa: f64, t_wait: f64) -> Result<Self> {
        let p = Self { g, kappa, t_wait };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::parameter("g", self.g, "must be finite and non-negative"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::parameter("kappa", self.kappa, "must be finite and positive"));
        }
        if !(self.t_wait >= 0.0) {
            return Err(Error::parameter("t_wait", self.t_wait, "must be non-negative"));
        }
        Ok(())
    }

    pub fn gamma_slow(&self) -> Result<f64> {
        gamma_slow(self)
    }

    pub fn emission_probability(&self) -> Result<f64> {
        emission_probability(self)
    }

    pub fn wavepacket(&self) -> Result<WavepacketModel> {
        WavepacketModel::new(self.gamma_slow()?)
    }
}

/// Effective emission rate `kappa - sqrt(kappa^2 - g^2)` in the bad-cavity regime.
pub fn gamma_slow(p: &CavityParams) -> Result<f64> {
    p.validate()?;
    if p.g > p.kappa {
        return Err(Error::StrongCoupling {
            g: p.g,
            kappa: p.kappa,
        });
    }
    // g^2 / (kappa + sqrt(kappa^2 - g^2)): same value, no cancellation for small g
    let root = ((p.kappa - p.g) * (p.kappa + p.g)).sqrt();
    Ok(p.g * p.g / (p.kappa + root))
}

/// Probability that the photon leaves the cavity within `t_wait`.
pub fn emission_probability(p: &CavityParams) -> Result<f64> {
    let rate = gamma_slow(p)?;
    Ok(-(-rate * p.t_wait).exp_m1())
}

/// Binding of a matter qubit to the mode its cavity output feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitterQubit {
    pub qubit: usize,
    pub emission_mode: usize,
}

impl EmitterQubit {
    pub fn new(qubit: usize, emission_mode: usize) -> Self {
        Self {
            qubit,
            emission_mode,
        }
    }
}

/// Errors if two emitters share a qubit or an emission mode.
pub fn check_emitters(emitters: &[EmitterQubit]) -> Result<()> {
    for (i, a) in emitters.iter().enumerate() {
        for b in &emitters[i + 1..] {
            if a.emission_mode == b.emission_mode {
                return Err(Error::InvalidTarget(format!(
                    "emission mode {} bound to two emitters",
                    a.emission_mode
                )));
            }
            if a.qubit == b.qubit {
                return Err(Error::InvalidTarget(format!(
                    "qubit {} bound to two emitters",
                    a.qubit
                )));
            }
        }
    }
    Ok(())
}

/// Kraus set of the pulse-and-wait channel on (qubit, emission mode).
///
/// `K0 = |up><up| (x) 1 + sqrt(p) |down,1><down,0|` keeps the emitted photon
/// coherent with the dark branch and `K1 = sqrt(1-p) |down,0><down,0|` is the
/// no-emission branch. `K2` is the identity on (down, n >= 1), inputs the
/// occupied-mode check excludes, so the set is complete on the local space.
fn emission_kraus(emitter: EmitterQubit, cutoff: usize, probability: f64) -> Vec<LocalOperator> {
    let local = cutoff + 1;
    let d = 2 * local;
    let idx = |q: usize, n: usize| q * local + n;
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let targets = vec![
        Subsystem::Qubit(emitter.qubit),
        Subsystem::Mode(emitter.emission_mode),
    ];
    let op = |m: Vec<C64>| LocalOperator::new(targets.clone(), d, m).expect("square matrix");

    let mut k0 = vec![zero; d * d];
    for n in 0..local {
        k0[idx(UP, n) * d + idx(UP, n)] = one;
    }
    k0[idx(DOWN, 1) * d + idx(DOWN, 0)] = C64::new(probability.sqrt(), 0.0);

    let mut k2 = vec![zero; d * d];
    for n in 1..local {
        k2[idx(DOWN, n) * d + idx(DOWN, n)] = one;
    }

    let mut kraus = vec![op(k0), op(k2)];
    if probability < 1.0 {
        let mut k1 = vec![zero; d * d];
        k1[idx(DOWN, 0) * d + idx(DOWN, 0)] = C64::new((1.0 - probability).sqrt(), 0.0);
        kraus.push(op(k1));
    }
    kraus
}

/// Applies the π-pulse plus `t_wait` emission channel with the cavity's
/// emission probability.
pub fn pi_pulse_emit(state: &State, emitter: EmitterQubit, cavity: &CavityParams) -> Result<State> {
    emit_with_probability(state, emitter, emission_probability(cavity)?)
}

/// Conditional emission: |up>|0> is unchanged, |down>|0> becomes |down>|1>
/// with probability `probability` and stays |down>|0> otherwise.
///
/// With `probability == 1` a pure input stays pure.
pub fn emit_with_probability(state: &State, emitter: EmitterQubit, probability: f64) -> Result<State> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(Error::parameter(
            "emission probability",
            probability,
            "must lie in [0, 1]",
        ));
    }
    let layout = state.layout();
    layout.position(Subsystem::Qubit(emitter.qubit))?;
    layout.position(Subsystem::Mode(emitter.emission_mode))?;
    if layout.fock_cutoff() < 1 {
        return Err(Error::CutoffOverflow {
            mode: emitter.emission_mode,
            cutoff: layout.fock_cutoff(),
        });
    }
    let occupied = occupied_down_weight(state, emitter)?;
    if occupied > crate::hilbert::PROBABILITY_FLOOR {
        return Err(Error::OccupiedMode {
            mode: emitter.emission_mode,
        });
    }

    let kraus = emission_kraus(emitter, layout.fock_cutoff(), probability);
    match state {
        State::Pure(psi) if probability == 1.0 => {
            // Only K0 acts on admissible inputs.
            Ok(State::Pure(psi.apply_operator(&kraus[0])?.normalize()?))
        }
        _ => state.apply_kraus(&kraus),
    }
}

/// Weight of branches with the emitter in |down> and a photon already present.
fn occupied_down_weight(state: &State, emitter: EmitterQubit) -> Result<f64> {
    let layout = state.layout();
    let strides = layout.strides();
    let qp = layout.position(Subsystem::Qubit(emitter.qubit))?;
    let mp = layout.position(Subsystem::Mode(emitter.emission_mode))?;
    let pred = |i: usize| layout.digit(i, qp, &strides) == DOWN && layout.digit(i, mp, &strides) > 0;
    Ok(match state {
        State::Pure(psi) => psi
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| pred(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum(),
        State::Mixed(rho) => rho.diagonal_weight(pred),
    })
}

/// Single-sided exponential wavepacket with amplitude `sqrt(rate) exp(-rate t / 2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavepacketModel {
    rate: f64,
}

impl WavepacketModel {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::parameter("wavepacket rate", rate, "must be positive"));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Amplitude profile at time `t >= 0`.
    pub fn amplitude(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.rate.sqrt() * (-0.5 * self.rate * t).exp()
        }
    }
}

/// `|<a|b>| = 2 sqrt(rate_a rate_b) / (rate_a + rate_b)`.
pub fn wavepacket_overlap(a: &WavepacketModel, b: &WavepacketModel) -> f64 {
    let (ra, rb) = (a.rate, b.rate);
    // the geometric/arithmetic mean ratio, clamped against round-off above 1
    (2.0 * (ra * rb).sqrt() / (ra + rb)).min(1.0)
}

/// Squared wavepacket overlap; the two-photon interference visibility.
pub fn interference_visibility(a: &WavepacketModel, b: &WavepacketModel) -> f64 {
    let o = wavepacket_overlap(a, b);
    o * o
}

/// Visibility between two emitters whose rates differ by `fraction`
/// (rate_b = (1 + fraction) rate_a). Only the ratio matters.
pub fn mismatch_visibility(fraction: f64) -> Result<f64> {
    if !fraction.is_finite() || fraction <= -1.0 {
        return Err(Error::parameter("mismatch", fraction, "must exceed -1"));
    }
    let a = WavepacketModel::new(1.0)?;
    let b = WavepacketModel::new(1.0 + fraction)?;
    Ok(interference_visibility(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fidelity, DensityOperator, PureState, SubsystemLayout};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn gamma_slow_examples() {
        assert_eq!(gamma_slow(&CavityParams::new(0.0, 1.0, 1.0).unwrap()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            gamma_slow(&CavityParams::new(2.5, 2.5, 1.0).unwrap()).unwrap(),
            2.5,
            epsilon = 1e-15
        );
        // 1 - sqrt(1 - 0.36) = 0.2
        assert_abs_diff_eq!(
            gamma_slow(&CavityParams::new(0.6, 1.0, 1.0).unwrap()).unwrap(),
            0.2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn strong_coupling_is_an_error() {
        let p = CavityParams::new(1.5, 1.0, 1.0).unwrap();
        assert!(matches!(gamma_slow(&p), Err(Error::StrongCoupling { .. })));
        assert!(matches!(emission_probability(&p), Err(Error::StrongCoupling { .. })));
    }

    #[test]
    fn invalid_cavity_parameters() {
        assert!(CavityParams::new(-0.1, 1.0, 1.0).is_err());
        assert!(CavityParams::new(0.1, 0.0, 1.0).is_err());
        assert!(CavityParams::new(0.1, 1.0, -1.0).is_err());
        assert!(CavityParams::new(0.1, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn emission_probability_examples() {
        let p0 = CavityParams::new(0.6, 1.0, 0.0).unwrap();
        assert_eq!(emission_probability(&p0).unwrap(), 0.0);
        // Gamma t = 0.2 * 15 = 3: 1 - e^-3 = 0.950212931632136
        let p3 = CavityParams::new(0.6, 1.0, 15.0).unwrap();
        assert_abs_diff_eq!(emission_probability(&p3).unwrap(), 0.950212931632136, epsilon = 1e-12);
        let long = CavityParams::new(0.6, 1.0, 1e4).unwrap();
        assert_eq!(emission_probability(&long).unwrap(), 1.0);
    }

    fn emitter_state(up: f64, down: f64) -> State {
        PureState::qubit(c(up), c(down))
            .unwrap()
            .with_vacuum_modes(1)
            .unwrap()
            .into()
    }

    #[test]
    fn ideal_emission_entangles_qubit_and_mode() {
        let out = emit_with_probability(&emitter_state(1.0, 1.0), EmitterQubit::new(0, 0), 1.0).unwrap();
        let layout = SubsystemLayout::new(1, 1, 2).unwrap();
        let mut amps = vec![c(0.0); 6];
        amps[0] = c(1.0); // |up>|0>
        amps[4] = c(1.0); // |down>|1>
        let expected = PureState::from_unnormalized(layout, amps).unwrap();
        assert!(out.is_pure());
        assert_abs_diff_eq!(fidelity(&expected, &out).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dark_level_does_not_emit() {
        let out = emit_with_probability(&emitter_state(1.0, 0.0), EmitterQubit::new(0, 0), 1.0).unwrap();
        assert_eq!(out, emitter_state(1.0, 0.0));
    }

    #[test]
    fn partial_emission_is_a_mixture() {
        let out = emit_with_probability(&emitter_state(0.0, 1.0), EmitterQubit::new(0, 0), 0.9).unwrap();
        let layout = SubsystemLayout::new(1, 1, 2).unwrap();
        let emitted = PureState::basis(layout.clone(), &crate::hilbert::BasisLabel::new(vec![DOWN], vec![1])).unwrap();
        let silent = PureState::basis(layout, &crate::hilbert::BasisLabel::new(vec![DOWN], vec![0])).unwrap();
        let expected = DensityOperator::from_mixture(&[(0.9, emitted), (0.1, silent)]).unwrap();
        let rho = out.to_density().unwrap();
        for (x, y) in rho.matrix().iter().zip(expected.matrix()) {
            assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn emission_into_occupied_mode_fails() {
        let psi: State = PureState::qubit_basis(&[DOWN])
            .unwrap()
            .tensor(&PureState::fock(&[1], 2).unwrap())
            .unwrap()
            .into();
        assert!(matches!(
            emit_with_probability(&psi, EmitterQubit::new(0, 0), 1.0),
            Err(Error::OccupiedMode { mode: 0 })
        ));
    }

    #[test]
    fn duplicate_bindings_are_rejected() {
        assert!(check_emitters(&[EmitterQubit::new(0, 0), EmitterQubit::new(1, 0)]).is_err());
        assert!(check_emitters(&[EmitterQubit::new(0, 0), EmitterQubit::new(1, 1)]).is_ok());
    }

    #[test]
    fn overlap_limits() {
        let a = WavepacketModel::new(1.0).unwrap();
        assert_eq!(wavepacket_overlap(&a, &a), 1.0);
        assert_eq!(interference_visibility(&a, &a), 1.0);
        let tiny = WavepacketModel::new(1e-14).unwrap();
        assert!(wavepacket_overlap(&a, &tiny) < 1e-6);
        assert!(interference_visibility(&a, &tiny) < 1e-12);
        assert!(WavepacketModel::new(0.0).is_err());
        assert!(WavepacketModel::new(-1.0).is_err());
    }

    /// Composite Simpson integration of the overlap integral on [0, T].
    fn overlap_by_quadrature(ra: f64, rb: f64) -> f64 {
        let a = WavepacketModel::new(ra).unwrap();
        let b = WavepacketModel::new(rb).unwrap();
        let t_max = 80.0 / ra.min(rb);
        let n = 200_000;
        let h = t_max / n as f64;
        let f = |t: f64| a.amplitude(t) * b.amplitude(t);
        let mut sum = f(0.0) + f(t_max);
        for i in 1..n {
            sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    }

    #[test]
    fn five_percent_mismatch_matches_quadrature() {
        let a = WavepacketModel::new(1.0).unwrap();
        let b = WavepacketModel::new(1.05).unwrap();
        let oracle = overlap_by_quadrature(1.0, 1.05);
        // frozen from the quadrature oracle: 1 - 2.9749e-4
        assert_abs_diff_eq!(oracle, 0.999702513752, epsilon = 1e-11);
        assert_abs_diff_eq!(wavepacket_overlap(&a, &b), oracle, epsilon = 1e-10);
        assert!(interference_visibility(&a, &b) >= 1.0 - 1e-3);
    }

    proptest! {
        #[test]
        fn gamma_slow_is_monotone_and_bounded(kappa in 0.01f64..10.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let a = gamma_slow(&CavityParams::new(lo * kappa, kappa, 1.0).unwrap()).unwrap();
            let b = gamma_slow(&CavityParams::new(hi * kappa, kappa, 1.0).unwrap()).unwrap();
            prop_assert!(a <= b);
            prop_assert!(b <= kappa * (1.0 + 1e-15));
        }

        #[test]
        fn overlap_is_symmetric_and_maximal_at_equal_rates(ra in 0.01f64..100.0, rb in 0.01f64..100.0) {
            let a = WavepacketModel::new(ra).unwrap();
            let b = WavepacketModel::new(rb).unwrap();
            prop_assert_eq!(wavepacket_overlap(&a, &b), wavepacket_overlap(&b, &a));
            let o = wavepacket_overlap(&a, &b);
            prop_assert!((0.0..=1.0).contains(&o));
            if (ra - rb).abs() > 1e-6 * ra.max(rb) {
                prop_assert!(o < 1.0 - 1e-14);
            }
            prop_assert!((wavepacket_overlap(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn ideal_emission_conserves_norm_and_counts_photons(up_re in -1.0f64..1.0, down_re in -1.0f64..1.0, down_im in -1.0f64..1.0) {
            prop_assume!(up_re.abs() + down_re.abs() + down_im.abs() > 1e-3);
            let psi = PureState::qubit(c(up_re), C64::new(down_re, down_im)).unwrap();
            let down_pop = psi.amplitudes()[DOWN].norm_sqr();
            let state: State = psi.with_vacuum_modes(1).unwrap().into();
            let out = emit_with_probability(&state, EmitterQubit::new(0, 0), 1.0).unwrap();
            prop_assert!((out.weight() - 1.0).abs() < 1e-12);
            prop_assert!((out.mean_photon_number(0).unwrap() - down_pop).abs() < 1e-12);
        }
    }
}
