//! Protocol state machines: the two-round heralded entangler, matter-photon
//! hetero-entanglement, entangled photon pairs and the multi-photon factory.
//!
//! Every protocol is a [`Protocol`]: a root node plus a `step` function that
//! expands a node into probability-weighted children. Exact enumeration and
//! Monte Carlo sampling in [`crate::runner`] both walk this tree, so their
//! marginals agree by construction.
//!
//! Corrections implied by measurement outcomes are tracked in a [`PauliFrame`]
//! and never applied to the reported post-states. Fidelities are computed
//! after applying the frame with [`apply_frame`].

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;

use crate::emitters::{emit_with_probability, CavityParams, EmitterQubit};
use crate::error::{Error, Result};
use crate::hilbert::{
    fidelity, BasisLabel, LocalOperator, PureState, State, Subsystem, SubsystemLayout, DEFAULT_DIMENSION_BUDGET,
    DOWN, NORM_TOLERANCE, PROBABILITY_FLOOR, UP,
};
use crate::optics::{
    apply_element, apply_pbs, dephase_by_visibility, measure_threshold, DetectorModel, OpticalElement,
    PolarizationPort,
};

/// Fock cutoff for the heralding rounds, where two photons can bunch.
const HERALD_CUTOFF: usize = 2;

/// Single-qubit preparation μ|↑> + ν|↓>.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitPrep {
    pub mu: C64,
    pub nu: C64,
}

impl QubitPrep {
    pub fn new(mu: C64, nu: C64) -> Result<Self> {
        let norm = mu.norm_sqr() + nu.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { mu, nu })
    }

    pub fn real(mu: f64, nu: f64) -> Result<Self> {
        Self::new(C64::new(mu, 0.0), C64::new(nu, 0.0))
    }

    /// (|↑> + |↓>)/√2.
    pub fn symmetric() -> Self {
        Self {
            mu: C64::new(FRAC_1_SQRT_2, 0.0),
            nu: C64::new(FRAC_1_SQRT_2, 0.0),
        }
    }

    pub fn up() -> Self {
        Self {
            mu: C64::new(1.0, 0.0),
            nu: C64::new(0.0, 0.0),
        }
    }

    pub fn down() -> Self {
        Self {
            mu: C64::new(0.0, 0.0),
            nu: C64::new(1.0, 0.0),
        }
    }

    pub fn state(&self) -> PureState {
        PureState::qubit(self.mu, self.nu).expect("validated amplitudes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldStage {
    /// Heralding round, numbered from 1.
    Round(u8),
    /// Computational-basis readout of the matter qubits.
    MatterReadout,
}

/// Observed measurement record. For heralding rounds the pattern holds one
/// click flag per detector; for matter readout it holds one flag per qubit,
/// `true` meaning |↓>.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeraldSignature {
    pub stage: HeraldStage,
    pub pattern: Vec<bool>,
}

impl HeraldSignature {
    pub fn round(round: u8, pattern: Vec<bool>) -> Self {
        Self {
            stage: HeraldStage::Round(round),
            pattern,
        }
    }

    pub fn readout(digits: &[usize]) -> Self {
        Self {
            stage: HeraldStage::MatterReadout,
            pattern: digits.iter().map(|&d| d == DOWN).collect(),
        }
    }

    /// Heralding rounds accept exactly one click; readouts always accept.
    pub fn is_accepting(&self) -> bool {
        match self.stage {
            HeraldStage::Round(_) => self.pattern.iter().filter(|&&c| c).count() == 1,
            HeraldStage::MatterReadout => true,
        }
    }

    /// Relative sign of the heralded |↑↓> ± |↓↑> state: +1 when the first
    /// detector clicked, -1 when the second did.
    pub fn sign(&self) -> Option<i8> {
        match (self.stage, self.pattern.as_slice()) {
            (HeraldStage::Round(_), [true, false]) => Some(1),
            (HeraldStage::Round(_), [false, true]) => Some(-1),
            _ => None,
        }
    }
}

impl fmt::Display for HeraldSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: String = self.pattern.iter().map(|&b| if b { '1' } else { '0' }).collect();
        match self.stage {
            HeraldStage::Round(r) => write!(f, "r{r}:{bits}"),
            HeraldStage::MatterReadout => write!(f, "m:{bits}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTarget {
    Qubit(usize),
    /// Photonic logical qubit, indexed into the protocol's photon list.
    Photon(usize),
}

/// Pending corrections per target. The correction on a target is X^x Z^z,
/// with Z applied first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    entries: BTreeMap<FrameTarget, (bool, bool)>,
}

impl PauliFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn toggle(&mut self, target: FrameTarget, x: bool, z: bool) {
        let entry = self.entries.entry(target).or_insert((false, false));
        entry.0 ^= x;
        entry.1 ^= z;
        if *entry == (false, false) {
            self.entries.remove(&target);
        }
    }

    pub fn toggle_z(&mut self, target: FrameTarget) {
        self.toggle(target, false, true);
    }

    pub fn toggle_x(&mut self, target: FrameTarget) {
        self.toggle(target, true, false);
    }

    pub fn with_z(mut self, target: FrameTarget) -> Self {
        self.toggle_z(target);
        self
    }

    /// Pending (bit flip, phase flip) on `target`.
    pub fn get(&self, target: FrameTarget) -> (bool, bool) {
        self.entries.get(&target).copied().unwrap_or((false, false))
    }

    /// Generator-wise XOR, which equals operator composition up to a global phase.
    pub fn compose(&self, other: &PauliFrame) -> PauliFrame {
        let mut out = self.clone();
        for (&t, &(x, z)) in &other.entries {
            out.toggle(t, x, z);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrameTarget, bool, bool)> + '_ {
        self.entries.iter().map(|(&t, &(x, z))| (t, x, z))
    }
}

impl fmt::Display for PauliFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .iter()
            .map(|(t, x, z)| {
                let name = match t {
                    FrameTarget::Qubit(q) => format!("q{q}"),
                    FrameTarget::Photon(p) => format!("p{p}"),
                };
                let ops = match (x, z) {
                    (true, true) => "XZ",
                    (true, false) => "X",
                    _ => "Z",
                };
                format!("{ops}{name}")
            })
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Pairs of physical qubits forming encoded qubits |0~> = |↓↑>, |1~> = |↑↓>.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeQubitMap {
    pairs: Vec<(usize, usize)>,
}

impl CompositeQubitMap {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in &pairs {
            if !seen.insert(a) || !seen.insert(b) {
                return Err(Error::InvalidInput(format!(
                    "physical qubit reused in composite pairing ({a}, {b})"
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Adjacent pairs (0,1), (2,3), ...
    pub fn adjacent(count: usize) -> Self {
        Self {
            pairs: (0..count).map(|j| (2 * j, 2 * j + 1)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Physical digits of one encoded bit.
    pub fn encode_bit(bit: bool) -> (usize, usize) {
        if bit {
            (UP, DOWN)
        } else {
            (DOWN, UP)
        }
    }

    /// Digits for all physical qubits; qubits outside any pair stay |↑>.
    pub fn encode(&self, bits: &[bool], qubit_count: usize) -> Result<Vec<usize>> {
        if bits.len() != self.pairs.len() {
            return Err(Error::InvalidInput(format!(
                "{} logical bits for {} encoded qubits",
                bits.len(),
                self.pairs.len()
            )));
        }
        let mut digits = vec![UP; qubit_count];
        for (&(a, b), &bit) in self.pairs.iter().zip(bits) {
            if a >= qubit_count || b >= qubit_count {
                return Err(Error::InvalidTarget(format!("pair ({a}, {b}) outside {qubit_count} qubits")));
            }
            let (da, db) = Self::encode_bit(bit);
            digits[a] = da;
            digits[b] = db;
        }
        Ok(digits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonEncoding {
    TimeBin,
    DualRail,
    Polarization,
}

impl PhotonEncoding {
    pub fn name(&self) -> &'static str {
        match self {
            PhotonEncoding::TimeBin => "time_bin",
            PhotonEncoding::DualRail => "dual_rail",
            PhotonEncoding::Polarization => "polarization",
        }
    }
}

/// Modes holding the logical |0> and |1> of one photonic qubit
/// (E/L, rail 0/rail 1 or H/V).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonicQubit {
    pub zero: usize,
    pub one: usize,
}

impl PhotonicQubit {
    pub fn new(zero: usize, one: usize) -> Self {
        Self { zero, one }
    }

    /// Photon `j` on modes (2j, 2j+1).
    pub fn adjacent(count: usize) -> Vec<PhotonicQubit> {
        (0..count).map(|j| Self::new(2 * j, 2 * j + 1)).collect()
    }
}

/// Target Σ α_k |P_k> on N photonic qubits. Bit j of k (photon 0 most
/// significant) selects the logical value of photon j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiPhotonSpec {
    n: usize,
    amplitudes: Vec<C64>,
    encoding: PhotonEncoding,
}

impl MultiPhotonSpec {
    pub fn new(n: usize, amplitudes: Vec<C64>, encoding: PhotonEncoding) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("photon count must be at least 1".into()));
        }
        if n >= usize::BITS as usize / 2 {
            return Err(Error::DimensionBudget {
                required: u128::MAX,
                budget: DEFAULT_DIMENSION_BUDGET,
            });
        }
        if amplitudes.len() != 1 << n {
            return Err(Error::InvalidInput(format!(
                "{} amplitudes given for {} photons (need {})",
                amplitudes.len(),
                n,
                1usize << n
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { n, amplitudes, encoding })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn encoding(&self) -> PhotonEncoding {
        self.encoding
    }

    /// Logical bits of string `k`.
    pub fn photon_bits(&self, k: usize) -> Vec<bool> {
        (0..self.n).map(|j| (k >> (self.n - 1 - j)) & 1 == 1).collect()
    }

    /// Matter qubits needed: two per photon for spatial encodings, one for time bins.
    pub fn matter_qubits(&self) -> usize {
        match self.encoding {
            PhotonEncoding::TimeBin => self.n,
            _ => 2 * self.n,
        }
    }

    /// Matter digits prepared for string `k`. Spatial encodings use the
    /// composite pairs; time-bin uses the complement of `P_k`, since a qubit
    /// that starts in |↓> emits early and ends in |↑>.
    pub fn matter_string(&self, k: usize) -> Vec<usize> {
        let bits = self.photon_bits(k);
        match self.encoding {
            PhotonEncoding::TimeBin => bits.iter().map(|&b| if b { UP } else { DOWN }).collect(),
            _ => CompositeQubitMap::adjacent(self.n)
                .encode(&bits, 2 * self.n)
                .expect("adjacent pairs fit"),
        }
    }

    /// Σ α_k |P_k> on modes (2j, 2j+1) per photon with cutoff 1.
    pub fn target_state(&self) -> Result<PureState> {
        logical_state(&self.amplitudes, self.n)
    }
}

/// Σ α_k |P_k> on `n` photons laid out as [`PhotonicQubit::adjacent`].
pub fn logical_state(amplitudes: &[C64], n: usize) -> Result<PureState> {
    let layout = SubsystemLayout::new(0, 2 * n, 1)?;
    layout.checked_dimension(DEFAULT_DIMENSION_BUDGET)?;
    let mut amps = vec![C64::new(0.0, 0.0); layout.dimension()];
    for (k, a) in amplitudes.iter().enumerate() {
        let occ: Vec<usize> = (0..n)
            .flat_map(|j| {
                if (k >> (n - 1 - j)) & 1 == 1 {
                    [0, 1]
                } else {
                    [1, 0]
                }
            })
            .collect();
        amps[layout.encode(&BasisLabel::new(vec![], occ))?] = *a;
    }
    PureState::from_unnormalized(layout, amps)
}

/// Result of one terminal branch. `probability` is absolute (product along the path).
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    pub success: bool,
    pub post_state: Option<State>,
    pub herald_history: Vec<HeraldSignature>,
    pub frame: PauliFrame,
    pub probability: f64,
    /// Frame-corrected fidelity to the protocol target, for successful branches.
    pub fidelity: Option<f64>,
}

/// Terminal branch as produced by a protocol step, before path weighting.
#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub success: bool,
    pub post_state: Option<State>,
    pub history: Vec<HeraldSignature>,
    pub frame: PauliFrame,
    pub fidelity: Option<f64>,
}

impl Terminal {
    pub fn failure(node: &ProtocolNode) -> Self {
        Self {
            success: false,
            post_state: None,
            history: node.history.clone(),
            frame: node.frame.clone(),
            fidelity: None,
        }
    }

    pub fn into_result(self, probability: f64) -> ProtocolResult {
        ProtocolResult {
            success: self.success,
            post_state: self.post_state,
            herald_history: self.history,
            frame: self.frame,
            probability,
            fidelity: self.fidelity,
        }
    }
}

/// Interior node of a protocol's branch tree.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolNode {
    pub stage: usize,
    pub state: State,
    pub history: Vec<HeraldSignature>,
    pub frame: PauliFrame,
}

impl ProtocolNode {
    pub fn new(state: State) -> Self {
        Self {
            stage: 0,
            state,
            history: Vec::new(),
            frame: PauliFrame::new(),
        }
    }

    fn advance(&self, state: State) -> Self {
        Self {
            stage: self.stage + 1,
            state,
            history: self.history.clone(),
            frame: self.frame.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Next {
    Node(ProtocolNode),
    Done(Terminal),
}

/// Children of a node with their conditional probabilities, which sum to 1.
pub type Step = Vec<(f64, Next)>;

pub trait Protocol: Send + Sync {
    fn id(&self) -> &'static str;
    fn root(&self) -> Result<ProtocolNode>;
    fn step(&self, node: &ProtocolNode) -> Result<Step>;
}

/// Depth-first expansion of every terminal branch with absolute probabilities.
pub fn outcomes(protocol: &dyn Protocol) -> Result<Vec<ProtocolResult>> {
    let mut out = Vec::new();
    let mut stack = vec![(1.0, protocol.root()?)];
    while let Some((p, node)) = stack.pop() {
        let mut children = protocol.step(&node)?;
        children.reverse();
        for (q, next) in children {
            match next {
                Next::Node(n) => stack.push((p * q, n)),
                Next::Done(t) => out.push(t.into_result(p * q)),
            }
        }
    }
    Ok(out)
}

fn check_budget(layout: &SubsystemLayout) -> Result<()> {
    layout.checked_dimension(DEFAULT_DIMENSION_BUDGET).map(|_| ())
}

fn pure(state: &State) -> Result<&PureState> {
    state
        .as_pure()
        .ok_or_else(|| Error::InvalidInput("operation requires a pure state".into()))
}

fn on_all_qubits(state: &State, op: impl Fn(usize) -> LocalOperator) -> Result<State> {
    (0..state.layout().qubit_count()).try_fold(state.clone(), |s, q| s.apply_unitary(&op(q)))
}

/// Drops modes known to be in vacuum.
fn drop_vacuum_modes(state: &State, modes: &[usize]) -> Result<State> {
    let fixed: Vec<(Subsystem, usize)> = modes.iter().map(|&m| (Subsystem::Mode(m), 0)).collect();
    let (p, reduced) = state.condition(&fixed)?;
    if (p - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "modes {modes:?} expected empty but carry weight {}",
            1.0 - p
        )));
    }
    reduced.ok_or_else(|| Error::ZeroProbability("vacuum modes".into()))
}

/// Applies the recorded corrections. Photon targets index into `photons`;
/// Z on a photon is a π phase on its `one` mode and X exchanges its two modes.
pub fn apply_frame(state: &State, frame: &PauliFrame, photons: &[PhotonicQubit]) -> Result<State> {
    let mut out = state.clone();
    for (target, x, z) in frame.iter() {
        match target {
            FrameTarget::Qubit(q) => {
                if z {
                    out = out.apply_unitary(&LocalOperator::pauli_z(q))?;
                }
                if x {
                    out = out.apply_unitary(&LocalOperator::pauli_x(q))?;
                }
            }
            FrameTarget::Photon(j) => {
                let p = photons
                    .get(j)
                    .ok_or_else(|| Error::InvalidTarget(format!("photon {j} not in frame layout")))?;
                if z {
                    out = apply_element(&out, &OpticalElement::PhaseShift { phi: PI, mode: p.one })?;
                }
                if x {
                    out = apply_element(
                        &out,
                        &OpticalElement::Swap {
                            modes: (p.zero, p.one),
                        },
                    )?;
                }
            }
        }
    }
    Ok(out)
}

/// Amplitudes on the logical strings of a pure photons-only state.
pub fn logical_amplitudes(state: &State, photons: &[PhotonicQubit]) -> Result<Vec<C64>> {
    let psi = pure(state)?;
    let layout = psi.layout();
    if layout.qubit_count() != 0 {
        return Err(Error::LayoutMismatch("logical amplitudes need a photons-only state".into()));
    }
    let n = photons.len();
    (0..1usize << n)
        .map(|k| {
            let mut occ = vec![0; layout.mode_count()];
            for (j, p) in photons.iter().enumerate() {
                let bit = (k >> (n - 1 - j)) & 1 == 1;
                occ[if bit { p.one } else { p.zero }] = 1;
            }
            psi.amplitude(&BasisLabel::new(vec![], occ))
        })
        .collect()
}

/// One heralding round on two emitters: π-pulses, visibility dephasing, a 50:50
/// splitter on the two emission modes, and threshold detection of both
/// outputs. Returns every signature with nonzero probability.
pub fn herald_round(
    state: &State,
    emitters: [EmitterQubit; 2],
    detector: &DetectorModel,
    visibility: f64,
    round: u8,
) -> Result<Vec<(HeraldSignature, f64, State)>> {
    let (a, b) = (emitters[0].emission_mode, emitters[1].emission_mode);
    let mut s = emit_with_probability(state, emitters[0], 1.0)?;
    s = emit_with_probability(&s, emitters[1], 1.0)?;
    // Imperfect overlap is which-path information carried by the photons.
    if visibility < 1.0 {
        s = dephase_by_visibility(&s, (a, b), visibility)?;
    }
    s = apply_element(&s, &OpticalElement::balanced(a, b))?;
    let mut out = Vec::with_capacity(4);
    for first in measure_threshold(&s, a, detector)? {
        for second in measure_threshold(&first.post_state, b, detector)? {
            out.push((
                HeraldSignature::round(round, vec![first.label, second.label]),
                first.probability * second.probability,
                second.post_state,
            ));
        }
    }
    Ok(out)
}

const EMITTERS: [EmitterQubit; 2] = [
    EmitterQubit {
        qubit: 0,
        emission_mode: 0,
    },
    EmitterQubit {
        qubit: 1,
        emission_mode: 1,
    },
];

fn herald_input(preps: [QubitPrep; 2]) -> Result<State> {
    let qubits = preps[0].state().tensor(&preps[1].state())?;
    Ok(qubits.tensor(&PureState::vacuum(2, HERALD_CUTOFF)?)?.into())
}

/// Weight of |Ψ±> in the first-round single-click state for the symmetric
/// preparation, read off the simulated conditional state.
pub fn first_round_mixture_weight(eta: f64) -> Result<f64> {
    if eta <= 0.0 {
        return Err(Error::ZeroProbability(
            "no single click is possible at zero efficiency".into(),
        ));
    }
    let detector = DetectorModel::with_efficiency(eta)?;
    let input = herald_input([QubitPrep::symmetric(); 2])?;
    let (sig, _, post) = herald_round(&input, EMITTERS, &detector, 1.0, 1)?
        .into_iter()
        .find(|(sig, _, _)| sig.pattern == [true, false])
        .ok_or_else(|| Error::ZeroProbability("single click".into()))?;
    let qubits = drop_vacuum_modes(&post, &[0, 1])?;
    fidelity(&bell_state(sig.sign().unwrap_or(1))?, &qubits)
}

/// (|↑↓> + sign |↓↑>)/√2.
pub fn bell_state(sign: i8) -> Result<PureState> {
    let s = f64::from(sign.signum());
    PureState::from_unnormalized(
        SubsystemLayout::qubits(2),
        vec![
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
        ],
    )
}

/// Two-round heralded entangler.
///
/// Round one; on a single click both qubits are bit-flipped and round two runs;
/// on a second single click the qubits are flipped back and the result is
/// (|↑↓> ± |↓↑>)/√2 with the sign given by the product of the round signs. A
/// negative sign is recorded as Z on qubit 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleHerald {
    pub preps: [QubitPrep; 2],
    pub detector: DetectorModel,
    pub visibility: f64,
}

impl DoubleHerald {
    pub fn new(preps: [QubitPrep; 2], detector: DetectorModel, visibility: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::parameter("visibility", visibility, "must lie in [0, 1]"));
        }
        Ok(Self {
            preps,
            detector,
            visibility,
        })
    }

    pub fn symmetric(detector: DetectorModel) -> Self {
        Self {
            preps: [QubitPrep::symmetric(); 2],
            detector,
            visibility: 1.0,
        }
    }

    fn flip_both(state: &State) -> Result<State> {
        on_all_qubits(state, LocalOperator::pauli_x)
    }
}

impl Protocol for DoubleHerald {
    fn id(&self) -> &'static str {
        "double-herald"
    }

    fn root(&self) -> Result<ProtocolNode> {
        Ok(ProtocolNode::new(herald_input(self.preps)?))
    }

    fn step(&self, node: &ProtocolNode) -> Result<Step> {
        let round = node.stage as u8 + 1;
        let branches = herald_round(&node.state, EMITTERS, &self.detector, self.visibility, round)?;
        branches
            .into_iter()
            .map(|(sig, p, post)| {
                let mut child = node.advance(post);
                child.history.push(sig.clone());
                if !sig.is_accepting() {
                    return Ok((p, Next::Done(Terminal::failure(&child))));
                }
                let flipped = Self::flip_both(&child.state)?;
                if round == 1 {
                    child.state = flipped;
                    return Ok((p, Next::Node(child)));
                }
                let sign: i8 = child.history.iter().filter_map(HeraldSignature::sign).product();
                if sign < 0 {
                    child.frame.toggle_z(FrameTarget::Qubit(0));
                }
                let qubits = drop_vacuum_modes(&flipped, &[0, 1])?;
                let corrected = apply_frame(&qubits, &child.frame, &[])?;
                Ok((
                    p,
                    Next::Done(Terminal {
                        success: true,
                        fidelity: Some(fidelity(&bell_state(1)?, &corrected)?),
                        post_state: Some(qubits),
                        history: child.history,
                        frame: child.frame,
                    }),
                ))
            })
            .collect()
    }
}

pub fn double_herald_entangle(
    preps: [QubitPrep; 2],
    detector: DetectorModel,
    visibility: f64,
) -> Result<Vec<ProtocolResult>> {
    outcomes(&DoubleHerald::new(preps, detector, visibility)?)
}

/// Single emitter entangled with a time-bin photon on modes (E, L) = (0, 1):
/// μ|↑> + ν|↓> becomes ν|↑>|E> + μ|↓>|L>.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroTimebin {
    pub prep: QubitPrep,
    pub emission_probability: f64,
}

impl HeteroTimebin {
    pub fn new(prep: QubitPrep, cavity: Option<&CavityParams>) -> Result<Self> {
        let emission_probability = match cavity {
            Some(c) => c.emission_probability()?,
            None => 1.0,
        };
        Ok(Self {
            prep,
            emission_probability,
        })
    }

    pub fn target(&self) -> Result<PureState> {
        let layout = SubsystemLayout::new(1, 2, 1)?;
        let mut amps = vec![C64::new(0.0, 0.0); layout.dimension()];
        amps[layout.encode(&BasisLabel::new(vec![UP], vec![1, 0]))?] = self.prep.nu;
        amps[layout.encode(&BasisLabel::new(vec![DOWN], vec![0, 1]))?] = self.prep.mu;
        PureState::from_amplitudes(layout, amps)
    }
}

impl Protocol for HeteroTimebin {
    fn id(&self) -> &'static str {
        "hetero-timebin"
    }

    fn root(&self) -> Result<ProtocolNode> {
        Ok(ProtocolNode::new(
            self.prep.state().tensor(&PureState::vacuum(2, 1)?)?.into(),
        ))
    }

    fn step(&self, node: &ProtocolNode) -> Result<Step> {
        let p = self.emission_probability;
        let mut s = emit_with_probability(&node.state, EmitterQubit::new(0, 0), p)?;
        s = s.apply_unitary(&LocalOperator::pauli_x(0))?;
        s = emit_with_probability(&s, EmitterQubit::new(0, 1), p)?;
        Ok(vec![(
            1.0,
            Next::Done(Terminal {
                success: true,
                fidelity: Some(fidelity(&self.target()?, &s)?),
                post_state: Some(s),
                history: node.history.clone(),
                frame: node.frame.clone(),
            }),
        )])
    }
}

pub fn hetero_timebin(prep: QubitPrep, cavity: Option<&CavityParams>) -> Result<ProtocolResult> {
    single_outcome(&HeteroTimebin::new(prep, cavity)?)
}

fn single_outcome(protocol: &dyn Protocol) -> Result<ProtocolResult> {
    let mut all = outcomes(protocol)?;
    if all.len() != 1 {
        return Err(Error::InvalidInput(format!("expected one branch, found {}", all.len())));
    }
    Ok(all.remove(0))
}

/// Amplitudes (a0, a1) of an encoded qubit a0|0~> + a1|1~>.
fn validate_encoded(amplitudes: [C64; 2]) -> Result<[C64; 2]> {
    let norm = amplitudes[0].norm_sqr() + amplitudes[1].norm_sqr();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized(norm));
    }
    Ok(amplitudes)
}

/// Encoded qubit on qubits (0, 1) turned into |0~>|H> + |1~>|V>.
///
/// Emitters 0 and 1 fire into ports A = (H 0, V 1) and B = (H 2, V 3); port B
/// is rotated from H to V and merged into A on a polarizing beam splitter. The
/// post-state keeps the two qubits and port A.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroPolarization {
    pub amplitudes: [C64; 2],
}

const PORT_A: PolarizationPort = PolarizationPort { h: 0, v: 1 };
const PORT_B: PolarizationPort = PolarizationPort { h: 2, v: 3 };

impl HeteroPolarization {
    pub fn new(amplitudes: [C64; 2]) -> Result<Self> {
        Ok(Self {
            amplitudes: validate_encoded(amplitudes)?,
        })
    }

    pub fn balanced() -> Self {
        let a = C64::new(FRAC_1_SQRT_2, 0.0);
        Self { amplitudes: [a, a] }
    }

    fn input(&self) -> Result<PureState> {
        let layout = SubsystemLayout::new(2, 4, 1)?;
        let mut amps = vec![C64::new(0.0, 0.0); layout.dimension()];
        for (bit, a) in [(false, self.amplitudes[0]), (true, self.amplitudes[1])] {
            let (q0, q1) = CompositeQubitMap::encode_bit(bit);
            amps[layout.encode(&BasisLabel::new(vec![q0, q1], vec![0; 4]))?] = a;
        }
        PureState::from_amplitudes(layout, amps)
    }

    /// a0 |↓↑>|H> + a1 |↑↓>|V>.
    pub fn target(&self) -> Result<PureState> {
        let layout = SubsystemLayout::new(2, 2, 1)?;
        let mut amps = vec![C64::new(0.0, 0.0); layout.dimension()];
        amps[layout.encode(&BasisLabel::new(vec![DOWN, UP], vec![1, 0]))?] = self.amplitudes[0];
        amps[layout.encode(&BasisLabel::new(vec![UP, DOWN], vec![0, 1]))?] = self.amplitudes[1];
        PureState::from_amplitudes(layout, amps)
    }

    fn run(&self) -> Result<State> {
        let mut s: State = self.input()?.into();
        s = emit_with_probability(&s, EmitterQubit::new(0, PORT_A.h), 1.0)?;
        s = emit_with_probability(&s, EmitterQubit::new(1, PORT_B.h), 1.0)?;
        s = apply_element(
            &s,
            &OpticalElement::PolarizationRotation {
                theta: FRAC_PI_2,
                port: PORT_B,
            },
        )?;
        s = apply_pbs(&s, PORT_A, PORT_B)?;
        drop_vacuum_modes(&s, &[PORT_B.h, PORT_B.v])
    }
}

impl Protocol for HeteroPolarization {
    fn id(&self) -> &'static str {
        "hetero-polarization"
    }

    fn root(&self) -> Result<ProtocolNode> {
        Ok(ProtocolNode::new(self.input()?.into()))
    }

    fn step(&self, node: &ProtocolNode) -> Result<Step> {
        let s = self.run()?;
        Ok(vec![(
            1.0,
            Next::Done(Terminal {
                success: true,
                fidelity: Some(fidelity(&self.target()?, &s)?),
                post_state: Some(s),
                history: node.history.clone(),
                frame: node.frame.clone(),
            }),
        )])
    }
}

pub fn hetero_polarization(amplitudes: [C64; 2]) -> Result<ProtocolResult> {
    single_outcome(&HeteroPolarization::new(amplitudes)?)
}

/// Reduces the encoded qubit of [`HeteroPolarization`] to one physical qubit
/// by measuring the other in the {|+>, |->} basis. Measuring qubit 1 leaves
/// a0|↓>|H> ± a1|↑>|V>; a |↓> outcome gives the minus sign, recorded as Z on
/// the photon.
#[derive(Clone, Debug, PartialEq)]
pub struct ReduceComposite {
    pub source: HeteroPolarization,
    pub measured: usize,
}

impl ReduceComposite {
    pub fn new(amplitudes: [C64; 2], measured: usize) -> Result<Self> {
        if measured > 1 {
            return Err(Error::InvalidTarget(format!("qubit {measured} is not part of the encoded pair")));
        }
        Ok(Self {
            source: HeteroPolarization::new(amplitudes)?,
            measured,
        })
    }

    pub fn photon() -> [PhotonicQubit; 1] {
        [PhotonicQubit::new(PORT_A.h, PORT_A.v)]
    }

    /// Target with the frame applied: the kept qubit carries |↓> with H when
    /// qubit 1 was measured and |↑> with H when qubit 0 was.
    pub fn target(&self) -> Result<PureState> {
        let layout = SubsystemLayout::new(1, 2, 1)?;
        let (with_h, with_v) = if self.measured == 1 { (DOWN, UP) } else { (UP, DOWN) };
        let mut amps = vec![C64::new(0.0, 0.0); layout.dimension()];
        amps[layout.encode(&BasisLabel::new(vec![with_h], vec![1, 0]))?] = self.source.amplitudes[0];
        amps[layout.encode(&BasisLabel::new(vec![with_v], vec![0, 1]))?] = self.source.amplitudes[1];
        PureState::from_amplitudes(layout, amps)
    }
}

impl Protocol for ReduceComposite {
    fn id(&self) -> &'static str {
        "reduce-composite"
    }

    fn root(&self) -> Result<ProtocolNode> {
        self.source.root()
    }

    fn step(&self, node: &ProtocolNode) -> Result<Step> {
        if node.stage == 0 {
            return Ok(vec![(1.0, Next::Node(node.advance(self.source.run()?)))]);
        }
        let rotated = node.state.apply_unitary(&LocalOperator::hadamard(self.measured))?;
        let target = self.target()?;
        let mut out = Vec::with_capacity(2);
        for digit in [UP, DOWN] {
            let (p, post) = rotated.condition(&[(Subsystem::Qubit(self.measured), digit)])?;
            let Some(post) = post.filter(|_| p > PROBABILITY_FLOOR) else {
                continue;
            };
            let mut frame = node.frame.clone();
            if digit == DOWN {
                frame.toggle_z(FrameTarget::Photon(0));
            }
            let mut history = node.history.clone();
            history.push(HeraldSignature::readout(&[digit]));
            let corrected = apply_frame(&post, &frame, &Self::photon())?;
            out.push((
                p,
                Next::Done(Terminal {
                    success: true,
                    fidelity: Some(fidelity(&target, &corrected)?),
                    post_state: Some(post),
                    history,
                    frame,
                }),
            ));
        }
        Ok(out)
    }
}

pub fn reduce_composite(amplitudes: [C64; 2], measured: usize) -> Result<Vec<ProtocolResult>> {
    outcomes(&ReduceComposite::new(amplitudes, measured)?)
}

/// General multi-photon factory.
///
/// Spatial encodings use 2N emitters prepared in Σ α_k |S_k>, with emitter i
/// firing into mode i so photon j occupies modes (2j, 2j+1). Polarization
/// adds a second port per photon that is rotated and merged by a PBS. Time-bin
/// uses N emitters firing into E_j = 2j, a global bit flip, then firing into
/// L_j = 2j+1. All photons survive with probability `efficiency^N`; a lost
/// photon ends the run as a failure. Hadamards and a computational readout of
/// all matter qubits then leave the target up to single-photon phase flips.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPhoton {
    pub spec: MultiPhotonSpec,
    pub efficiency: f64,
}

mod stage {
    pub const EMIT: usize = 0;
    pub const SURVIVE: usize = 1;
    pub const READOUT: usize = 2;
}

impl MultiPhoton {
    pub fn new(spec: MultiPhotonSpec, efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::parameter("efficiency", efficiency, "must lie in [0, 1]"));
        }
        Ok(Self { spec, efficiency })
    }

    /// Photonic modes before post-processing: four per photon for
    /// polarization, two otherwise.
    fn raw_modes(&self) -> usize {
        match self.spec.encoding {
            PhotonEncoding::Polarization => 4 * self.spec.n,
            _ => 2 * self.spec.n,
        }
    }

    pub fn photons(&self) -> Vec<PhotonicQubit> {
        PhotonicQubit::adjacent(self.spec.n)
    }

    fn input(&self) -> Result<PureState> {
        let layout = SubsystemLayout::new(self.spec.matter_qubits(), self.raw_modes(), 1)?;
        check_budget(&layout)?;
        let mut amps = vec![C64::new(0.0, 0.0); layout.dimension()];
        for (k, a) in self.spec.amplitudes.iter().enumerate() {
            let label = BasisLabel::new(self.spec.matter_string(k), vec![0; self.raw_modes()]);
            amps[layout.encode(&label)?] = *a;
        }
        PureState::from_amplitudes(layout, amps)
    }

    fn emit(&self, state: &State) -> Result<State> {
        let n = self.spec.n;
        let mut s = state.clone();
        match self.spec.encoding {
            PhotonEncoding::TimeBin => {
                for j in 0..n {
                    s = emit_with_probability(&s, EmitterQubit::new(j, 2 * j), 1.0)?;
                }
                s = on_all_qubits(&s, LocalOperator::pauli_x)?;
                for j in 0..n {
                    s = emit_with_probability(&s, EmitterQubit::new(j, 2 * j + 1), 1.0)?;
                }
            }
            PhotonEncoding::DualRail => {
                for i in 0..2 * n {
                    s = emit_with_probability(&s, EmitterQubit::new(i, i), 1.0)?;
                }
            }
            PhotonEncoding::Polarization => {
                let mut dropped = Vec::with_capacity(2 * n);
                for j in 0..n {
                    let a = PolarizationPort::new(4 * j, 4 * j + 1);
                    let b = PolarizationPort::new(4 * j + 2, 4 * j + 3);
                    s = emit_with_probability(&s, EmitterQubit::new(2 * j, a.h), 1.0)?;
                    s = emit_with_probability(&s, EmitterQubit::new(2 * j + 1, b.h), 1.0)?;
                    s = apply_element(
                        &s,
                        &OpticalElement::PolarizationRotation {
                            theta: FRAC_PI_2,
                            port: b,
                        },
                    )?;
                    s = apply_pbs(&s, a, b)?;
                    dropped.extend([b.h, b.v]);
                }
                s = drop_vacuum_modes(&s, &dropped)?;
            }
        }
        Ok(s)
    }

    /// Branch in which every photon survives; its weight is exact because
    /// each branch carries exactly one photon per channel.
    fn survive(&self, state: &State) -> Result<(f64, State)> {
        let modes = state.layout().mode_count();
        let mut weight = 1.0;
        let mut s = state.clone();
        for m in 0..modes {
            let d = state.layout().fock_cutoff() + 1;
            let mut a0 = vec![C64::new(0.0, 0.0); d * d];
            for k in 0..d {
                a0[k * d + k] = C64::new(self.efficiency.powi(k as i32).sqrt(), 0.0);
            }
            let (w, projected) = s.project(&LocalOperator::new(vec![Subsystem::Mode(m)], d, a0)?)?;
            if w <= PROBABILITY_FLOOR {
                return Ok((0.0, s));
            }
            weight *= w;
            s = projected.normalized_by(w)?;
        }
        Ok((weight, s))
    }

    /// Z on photon j whenever the readout phase `(-1)^(m·S_k)` depends on bit j.
    fn frame_for(&self, digits: &[usize]) -> PauliFrame {
        let mut frame = PauliFrame::new();
        for j in 0..self.spec.n {
            let flip = match self.spec.encoding {
                PhotonEncoding::TimeBin => digits[j] == DOWN,
                _ => (digits[2 * j] == DOWN) != (digits[2 * j + 1] == DOWN),
            };
            if flip {
                frame.toggle_z(FrameTarget::Photon(j));
            }
        }
        frame
    }
}

impl Protocol for MultiPhoton {
    fn id(&self) -> &'static str {
        match self.spec.encoding {
            PhotonEncoding::TimeBin => "timebin-multiphoton",
            _ => "multiphoton",
        }
    }

    fn root(&self) -> Result<ProtocolNode> {
        Ok(ProtocolNode::new(self.input()?.into()))
    }

    fn step(&self, node: &ProtocolNode) -> Result<Step> {
        match node.stage {
            stage::EMIT => Ok(vec![(1.0, Next::Node(node.advance(self.emit(&node.state)?)))]),
            stage::SURVIVE => {
                let (w, s) = self.survive(&node.state)?;
                let mut out = Vec::with_capacity(2);
                if w > PROBABILITY_FLOOR {
                    out.push((w, Next::Node(node.advance(s))));
                }
                if 1.0 - w > PROBABILITY_FLOOR {
                    out.push((1.0 - w, Next::Done(Terminal::failure(node))));
                }
                Ok(out)
            }
            stage::READOUT => {
                let q = node.state.layout().qubit_count();
                let rotated = on_all_qubits(&node.state, LocalOperator::hadamard)?;
                let target = self.spec.target_state()?;
                let photons = self.photons();
                let mut out = Vec::with_capacity(1 << q);
                for m in 0..1usize << q {
                    let digits: Vec<usize> = (0..q).map(|i| (m >> (q - 1 - i)) & 1).collect();
                    let fixed: Vec<(Subsystem, usize)> = digits
                        .iter()
                        .enumerate()
                        .map(|(i, &d)| (Subsystem::Qubit(i), d))
                        .collect();
                    let (p, post) = rotated.condition(&fixed)?;
                    let Some(post) = post.filter(|_| p > PROBABILITY_FLOOR) else {
                        continue;
                    };
                    let frame = node.frame.compose(&self.frame_for(&digits));
                    let mut history = node.history.clone();
                    history.push(HeraldSignature::readout(&digits));
                    let corrected = apply_frame(&post, &frame, &photons)?;
                    out.push((
                        p,
                        Next::Done(Terminal {
                            success: true,
                            fidelity: Some(fidelity(&target, &corrected)?),
                            post_state: Some(post),
                            history,
                            frame,
                        }),
                    ));
                }
                Ok(out)
            }
            s => Err(Error::InvalidInput(format!("unknown multiphoton stage {s}"))),
        }
    }
}

pub fn multiphoton_generate(spec: MultiPhotonSpec, efficiency: f64) -> Result<Vec<ProtocolResult>> {
    outcomes(&MultiPhoton::new(spec, efficiency)?)
}

/// Time-bin factory: the same target with one emitter per photon.
pub fn timebin_multiphoton_generate(amplitudes: Vec<C64>, n: usize, efficiency: f64) -> Result<Vec<ProtocolResult>> {
    multiphoton_generate(MultiPhotonSpec::new(n, amplitudes, PhotonEncoding::TimeBin)?, efficiency)
}

/// Amplitudes of (|01> + |10>)/√2 on two photons.
pub fn pair_amplitudes() -> Vec<C64> {
    let (o, h) = (C64::new(0.0, 0.0), C64::new(FRAC_1_SQRT_2, 0.0));
    vec![o, h, h, o]
}

/// Time-bin pair from a Bell pair of emitters: |↑↓>|E,L> + |↓↑>|L,E> before readout.
pub fn timebin_pair() -> MultiPhoton {
    MultiPhoton {
        spec: MultiPhotonSpec::new(2, pair_amplitudes(), PhotonEncoding::TimeBin).expect("valid pair"),
        efficiency: 1.0,
    }
}

/// Dual-rail (or polarization) pair from four emitters in |0~1~> + |1~0~>.
pub fn dualrail_pair(encoding: PhotonEncoding) -> Result<MultiPhoton> {
    if encoding == PhotonEncoding::TimeBin {
        return Err(Error::InvalidInput("dual-rail pair needs a spatial encoding".into()));
    }
    MultiPhoton::new(MultiPhotonSpec::new(2, pair_amplitudes(), encoding)?, 1.0)
}

pub fn photon_pair_timebin() -> Result<Vec<ProtocolResult>> {
    outcomes(&timebin_pair())
}

pub fn photon_pair_dualrail(encoding: PhotonEncoding) -> Result<Vec<ProtocolResult>> {
    outcomes(&dualrail_pair(encoding)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DensityOperator;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn success_probability(results: &[ProtocolResult]) -> f64 {
        results.iter().filter(|r| r.success).map(|r| r.probability).sum()
    }

    fn total_probability(results: &[ProtocolResult]) -> f64 {
        results.iter().map(|r| r.probability).sum()
    }

    #[test]
    fn signatures() {
        let plus = HeraldSignature::round(1, vec![true, false]);
        assert!(plus.is_accepting());
        assert_eq!(plus.sign(), Some(1));
        assert_eq!(HeraldSignature::round(2, vec![false, true]).sign(), Some(-1));
        let both = HeraldSignature::round(1, vec![true, true]);
        assert!(!both.is_accepting());
        assert_eq!(both.sign(), None);
        assert!(!HeraldSignature::round(1, vec![false, false]).is_accepting());
        assert_eq!(plus.to_string(), "r1:10");
    }

    #[test]
    fn frame_composition_is_self_inverse() {
        let f = PauliFrame::new().with_z(FrameTarget::Photon(1));
        assert!(f.compose(&f).is_empty());
        let mut g = PauliFrame::new();
        g.toggle_x(FrameTarget::Qubit(0));
        let h = PauliFrame::new().with_z(FrameTarget::Qubit(0));
        assert_eq!(f.compose(&g).compose(&h), f.compose(&g.compose(&h)));
        assert_eq!(g.compose(&h).get(FrameTarget::Qubit(0)), (true, true));
    }

    #[test]
    fn composite_map_rejects_overlap() {
        assert!(CompositeQubitMap::new(vec![(0, 1), (1, 2)]).is_err());
        let map = CompositeQubitMap::adjacent(2);
        assert_eq!(map.encode(&[false, true], 4).unwrap(), vec![DOWN, UP, UP, DOWN]);
    }

    #[test]
    fn spec_validation() {
        assert!(MultiPhotonSpec::new(1, vec![c(1.0)], PhotonEncoding::DualRail).is_err());
        assert!(MultiPhotonSpec::new(1, vec![c(1.0), c(1.0)], PhotonEncoding::DualRail).is_err());
        assert!(QubitPrep::real(1.0, 1.0).is_err());
    }

    #[test]
    fn herald_round_on_symmetric_input() {
        let input = herald_input([QubitPrep::symmetric(); 2]).unwrap();
        let branches = herald_round(&input, EMITTERS, &DetectorModel::ideal(), 1.0, 1).unwrap();
        let total: f64 = branches.iter().map(|b| b.1).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for (sig, p, post) in &branches {
            match sig.sign() {
                Some(s) => {
                    assert_abs_diff_eq!(*p, 3.0 / 8.0, epsilon = 1e-12);
                    let qubits = drop_vacuum_modes(post, &[0, 1]).unwrap();
                    let f = fidelity(&bell_state(s).unwrap(), &qubits).unwrap();
                    assert_abs_diff_eq!(f, 2.0 / 3.0, epsilon = 1e-12);
                    let dd = PureState::qubit_basis(&[DOWN, DOWN]).unwrap();
                    assert_abs_diff_eq!(fidelity(&dd, &qubits).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
                }
                None => assert!(!sig.pattern.iter().all(|&c| c), "bunched photons never split"),
            }
        }
    }

    #[test]
    fn herald_round_without_photons() {
        let input = herald_input([QubitPrep::up(); 2]).unwrap();
        let branches = herald_round(&input, EMITTERS, &DetectorModel::ideal(), 1.0, 1).unwrap();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].0.pattern, vec![false, false]);
        assert_abs_diff_eq!(branches[0].1, 1.0);
    }

    #[test]
    fn coincident_clicks_never_follow_two_emissions() {
        let input = herald_input([QubitPrep::down(); 2]).unwrap();
        let branches = herald_round(&input, EMITTERS, &DetectorModel::ideal(), 1.0, 1).unwrap();
        assert!(branches.iter().all(|(sig, _, _)| sig.pattern != [true, true]));
    }

    #[test]
    fn mixture_weight_limits() {
        assert_abs_diff_eq!(first_round_mixture_weight(1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(first_round_mixture_weight(1e-9).unwrap(), 0.5, epsilon = 1e-9);
        assert!(first_round_mixture_weight(0.0).is_err());
    }

    #[test]
    fn double_herald_examples() {
        for (eta, expected) in [(1.0, 0.5), (0.5, 0.125)] {
            let det = DetectorModel::with_efficiency(eta).unwrap();
            let results = double_herald_entangle([QubitPrep::symmetric(); 2], det, 1.0).unwrap();
            assert_abs_diff_eq!(success_probability(&results), expected, epsilon = 1e-12);
            assert_abs_diff_eq!(total_probability(&results), 1.0, epsilon = 1e-12);
            for r in results.iter().filter(|r| r.success) {
                assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);
                assert_eq!(r.herald_history.len(), 2);
            }
        }
        let results = double_herald_entangle([QubitPrep::up(); 2], DetectorModel::ideal(), 1.0).unwrap();
        assert_eq!(success_probability(&results), 0.0);
    }

    #[test]
    fn double_herald_sign_is_tracked_in_the_frame() {
        let results = double_herald_entangle([QubitPrep::symmetric(); 2], DetectorModel::ideal(), 1.0).unwrap();
        for r in results.iter().filter(|r| r.success) {
            let sign: i8 = r.herald_history.iter().filter_map(HeraldSignature::sign).product();
            let raw = fidelity(&bell_state(sign).unwrap(), r.post_state.as_ref().unwrap()).unwrap();
            assert_abs_diff_eq!(raw, 1.0, epsilon = 1e-12);
            assert_eq!(r.frame.is_empty(), sign > 0);
        }
    }

    #[test]
    fn asymmetric_preparation_matches_product_amplitudes() {
        let preps = [QubitPrep::real(0.6, 0.8).unwrap(), QubitPrep::new(c(0.28), C64::new(0.0, 0.96)).unwrap()];
        let results = double_herald_entangle(preps, DetectorModel::with_efficiency(0.7).unwrap(), 1.0).unwrap();
        let (m1, n1, m2, n2) = (preps[0].mu, preps[0].nu, preps[1].mu, preps[1].nu);
        for r in results.iter().filter(|r| r.success) {
            let sign: f64 = r.herald_history.iter().filter_map(HeraldSignature::sign).map(f64::from).product();
            let oracle = PureState::from_unnormalized(
                SubsystemLayout::qubits(2),
                vec![c(0.0), m1 * n2, n1 * m2 * sign, c(0.0)],
            )
            .unwrap();
            assert_abs_diff_eq!(fidelity(&oracle, r.post_state.as_ref().unwrap()).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hetero_timebin_examples() {
        let r = hetero_timebin(QubitPrep::symmetric(), None).unwrap();
        assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);

        let down = hetero_timebin(QubitPrep::down(), None).unwrap();
        let up_early = PureState::basis(SubsystemLayout::new(1, 2, 1).unwrap(), &BasisLabel::new(vec![UP], vec![1, 0])).unwrap();
        assert_abs_diff_eq!(fidelity(&up_early, down.post_state.as_ref().unwrap()).unwrap(), 1.0, epsilon = 1e-12);

        let up = hetero_timebin(QubitPrep::up(), None).unwrap();
        let down_late = PureState::basis(SubsystemLayout::new(1, 2, 1).unwrap(), &BasisLabel::new(vec![DOWN], vec![0, 1])).unwrap();
        assert_abs_diff_eq!(fidelity(&down_late, up.post_state.as_ref().unwrap()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hetero_timebin_with_slow_cavity_loses_fidelity() {
        let cavity = CavityParams::new(0.6, 1.0, 3.0).unwrap();
        let r = hetero_timebin(QubitPrep::symmetric(), Some(&cavity)).unwrap();
        assert!(r.fidelity.unwrap() < 1.0);
        assert!(!r.post_state.unwrap().is_pure());
    }

    #[test]
    fn hetero_polarization_examples() {
        let r = hetero_polarization(HeteroPolarization::balanced().amplitudes).unwrap();
        assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);
        let post = r.post_state.unwrap();
        let photons = post.mean_photon_number(0).unwrap() + post.mean_photon_number(1).unwrap();
        assert_abs_diff_eq!(photons, 1.0, epsilon = 1e-12);

        let zero = hetero_polarization([c(1.0), c(0.0)]).unwrap();
        assert_abs_diff_eq!(zero.fidelity.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(zero.post_state.unwrap().mean_photon_number(1).unwrap(), 0.0);
    }

    #[test]
    fn reduce_composite_examples() {
        for measured in [0, 1] {
            let results = reduce_composite(HeteroPolarization::balanced().amplitudes, measured).unwrap();
            assert_eq!(results.len(), 2);
            for r in &results {
                assert_abs_diff_eq!(r.probability, 0.5, epsilon = 1e-12);
                assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);
                let minus = r.herald_history.last().unwrap().pattern == [true];
                assert_eq!(r.frame.get(FrameTarget::Photon(0)).1, minus);
            }
        }
    }

    #[test]
    fn apply_frame_examples() {
        let photons = PhotonicQubit::adjacent(2);
        let el_minus = logical_state(&[c(0.0), c(-1.0), c(1.0), c(0.0)].map(|z| z * FRAC_1_SQRT_2), 2).unwrap();
        let state: State = el_minus.clone().into();
        assert_eq!(apply_frame(&state, &PauliFrame::new(), &photons).unwrap(), state);
        let frame = PauliFrame::new().with_z(FrameTarget::Photon(1));
        let corrected = apply_frame(&state, &frame, &photons).unwrap();
        let amps = logical_amplitudes(&corrected, &photons).unwrap();
        assert_abs_diff_eq!(amps[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(amps[2].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        let twice = apply_frame(&corrected, &frame, &photons).unwrap();
        assert_abs_diff_eq!(fidelity(&el_minus, &twice).unwrap(), 1.0, epsilon = 1e-15);
        assert!(apply_frame(&state, &PauliFrame::new().with_z(FrameTarget::Photon(5)), &photons).is_err());
    }

    #[test]
    fn timebin_pair_outcomes() {
        let results = photon_pair_timebin().unwrap();
        assert_eq!(results.len(), 4);
        for r in &results {
            assert_abs_diff_eq!(r.probability, 0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dualrail_pair_outcomes() {
        for encoding in [PhotonEncoding::DualRail, PhotonEncoding::Polarization] {
            let results = photon_pair_dualrail(encoding).unwrap();
            assert_eq!(results.len(), 16);
            for r in &results {
                assert_abs_diff_eq!(r.probability, 1.0 / 16.0, epsilon = 1e-12);
                assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);
            }
        }
        assert!(dualrail_pair(PhotonEncoding::TimeBin).is_err());
    }

    #[test]
    fn single_photon_basis_state() {
        let spec = MultiPhotonSpec::new(1, vec![c(1.0), c(0.0)], PhotonEncoding::Polarization).unwrap();
        let results = multiphoton_generate(spec, 1.0).unwrap();
        assert_eq!(results.len(), 4);
        for r in &results {
            let amps = logical_amplitudes(r.post_state.as_ref().unwrap(), &PhotonicQubit::adjacent(1)).unwrap();
            assert_abs_diff_eq!(amps[0].norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn timebin_single_photon_superposition() {
        let h = c(FRAC_1_SQRT_2);
        let results = timebin_multiphoton_generate(vec![h, h], 1, 1.0).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_abs_diff_eq!(r.fidelity.unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn losses_reduce_only_the_success_probability() {
        let spec = MultiPhotonSpec::new(2, pair_amplitudes(), PhotonEncoding::DualRail).unwrap();
        let results = multiphoton_generate(spec, 0.8).unwrap();
        assert_abs_diff_eq!(success_probability(&results), 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(total_probability(&results), 1.0, epsilon = 1e-12);
        assert!(results.iter().filter(|r| r.success).all(|r| (r.fidelity.unwrap() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn oversized_factory_is_a_budget_error() {
        let mut amps = vec![c(0.0); 1 << 12];
        amps[0] = c(1.0);
        let spec = MultiPhotonSpec::new(12, amps, PhotonEncoding::DualRail).unwrap();
        let err = multiphoton_generate(spec, 1.0).unwrap_err();
        assert!(err.is_resource());
    }

    #[test]
    fn emission_conserves_photon_number_per_branch() {
        let spec = MultiPhotonSpec::new(2, pair_amplitudes(), PhotonEncoding::DualRail).unwrap();
        let protocol = MultiPhoton::new(spec, 1.0).unwrap();
        let root = protocol.root().unwrap();
        let emitted = protocol.emit(&root.state).unwrap();
        let psi = emitted.as_pure().unwrap();
        for (i, a) in psi.amplitudes().iter().enumerate() {
            if a.norm_sqr() > 1e-24 {
                let label = psi.layout().decode(i);
                let downs = label.qubits.iter().filter(|&&d| d == DOWN).count();
                assert_eq!(label.photon_number(), downs);
            }
        }
    }

    fn arb_amplitudes(n: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_filter_map("nonzero", |v| {
            let amps: Vec<C64> = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            (norm > 1e-3).then(|| amps.into_iter().map(|a| a / norm).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn every_readout_is_correctable(amps in arb_amplitudes(2)) {
            for encoding in [PhotonEncoding::DualRail, PhotonEncoding::TimeBin] {
                let spec = MultiPhotonSpec::new(2, amps.clone(), encoding).unwrap();
                let results = multiphoton_generate(spec, 1.0).unwrap();
                prop_assert!((total_probability(&results) - 1.0).abs() < 1e-10);
                for r in &results {
                    prop_assert!(r.fidelity.unwrap() > 1.0 - 1e-10);
                }
            }
        }

        #[test]
        fn double_herald_success_is_eta_squared_over_two(eta in 0.01f64..1.0) {
            let det = DetectorModel::with_efficiency(eta).unwrap();
            let results = double_herald_entangle([QubitPrep::symmetric(); 2], det, 1.0).unwrap();
            prop_assert!((success_probability(&results) - eta * eta / 2.0).abs() < 1e-12);
            prop_assert!((total_probability(&results) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn mismatch_only_lowers_fidelity(v in 0.0f64..1.0) {
            let det = DetectorModel::ideal();
            let results = double_herald_entangle([QubitPrep::symmetric(); 2], det, v).unwrap();
            for r in results.iter().filter(|r| r.success) {
                let overlap_sq = v;
                prop_assert!((r.fidelity.unwrap() - (1.0 + overlap_sq) / 2.0).abs() < 1e-10);
                let rho: DensityOperator = r.post_state.as_ref().unwrap().to_density().unwrap();
                prop_assert!(rho.min_eigenvalue() > -1e-10);
            }
        }
    }
}
