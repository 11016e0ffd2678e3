//! Execution engines over protocol branch trees.
//!
//! [`enumerate`] expands every branch exactly. [`sample`] draws trajectories
//! branch by branch from the same conditional distributions. Each shot owns a
//! ChaCha8 stream selected by its index under the master seed, so results do
//! not depend on thread count or scheduling.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use crate::emitters::{mismatch_visibility, CavityParams};
use crate::error::{Error, Result};
use crate::hilbert::State;
use crate::optics::DetectorModel;
use crate::protocols::{
    dualrail_pair, DoubleHerald, HeraldSignature, HeteroPolarization, HeteroTimebin, MultiPhoton, MultiPhotonSpec,
    Next, PauliFrame, PhotonEncoding, Protocol, ProtocolNode, ProtocolResult, QubitPrep, ReduceComposite, Step,
};

/// Deviation, in standard errors, beyond which [`cross_check`] reports disagreement.
pub const CROSS_CHECK_SIGMAS: f64 = 4.0;

/// Absolute differences below this always count as agreement, which covers
/// a zero sampled standard error.
pub const DEGENERATE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum BranchTree {
    Node {
        probability: f64,
        state: State,
        history: Vec<HeraldSignature>,
        children: Vec<BranchTree>,
    },
    Leaf(ProtocolResult),
}

impl BranchTree {
    pub fn probability(&self) -> f64 {
        match self {
            BranchTree::Node { probability, .. } => *probability,
            BranchTree::Leaf(r) => r.probability,
        }
    }

    /// Terminal results in depth-first order.
    pub fn leaves(&self) -> Vec<&ProtocolResult> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t {
                BranchTree::Leaf(r) => out.push(r),
                BranchTree::Node { children, .. } => stack.extend(children.iter().rev()),
            }
        }
        out
    }

    pub fn total_probability(&self) -> f64 {
        self.leaves().iter().map(|r| r.probability).sum()
    }

    pub fn success_probability(&self) -> f64 {
        self.leaves().iter().filter(|r| r.success).map(|r| r.probability).sum()
    }

    /// Probability-weighted mean fidelity over successful leaves.
    pub fn success_fidelity(&self) -> Option<f64> {
        let (mut weight, mut acc) = (0.0, 0.0);
        for r in self.leaves().into_iter().filter(|r| r.success) {
            if let Some(f) = r.fidelity {
                weight += r.probability;
                acc += r.probability * f;
            }
        }
        (weight > 0.0).then(|| acc / weight)
    }

    pub fn success_leaves(&self) -> usize {
        self.leaves().iter().filter(|r| r.success).count()
    }
}

/// Exhaustive branch tree with absolute probabilities.
pub fn enumerate(protocol: &dyn Protocol) -> Result<BranchTree> {
    fn expand(protocol: &dyn Protocol, node: ProtocolNode, probability: f64) -> Result<BranchTree> {
        let children = protocol
            .step(&node)?
            .into_iter()
            .map(|(q, next)| match next {
                Next::Node(child) => expand(protocol, child, probability * q),
                Next::Done(t) => Ok(BranchTree::Leaf(t.into_result(probability * q))),
            })
            .collect::<Result<_>>()?;
        Ok(BranchTree::Node {
            probability,
            state: node.state,
            history: node.history,
            children,
        })
    }
    expand(protocol, protocol.root()?, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub shots: u64,
    pub successes: u64,
    pub success_fraction: f64,
    /// Sample standard deviation of the success indicator over √shots.
    pub stderr: f64,
    pub mean_fidelity: Option<f64>,
    pub fidelity_stderr: Option<f64>,
    pub seed: u64,
}

type Path = Vec<u32>;

/// Expanded steps shared between trajectories, keyed by child-index path.
struct StepCache<'a> {
    protocol: &'a dyn Protocol,
    root: ProtocolNode,
    steps: RwLock<HashMap<Path, Arc<Step>>>,
}

impl<'a> StepCache<'a> {
    fn new(protocol: &'a dyn Protocol) -> Result<Self> {
        Ok(Self {
            protocol,
            root: protocol.root()?,
            steps: RwLock::new(HashMap::new()),
        })
    }

    fn get(&self, path: &Path, node: &ProtocolNode) -> Result<Arc<Step>> {
        if let Some(s) = self.steps.read().expect("cache lock").get(path) {
            return Ok(Arc::clone(s));
        }
        let step = Arc::new(self.protocol.step(node)?);
        let mut w = self.steps.write().expect("cache lock");
        Ok(Arc::clone(w.entry(path.clone()).or_insert(step)))
    }

    /// One trajectory: (success, fidelity of the reached leaf).
    fn trajectory(&self, rng: &mut ChaCha8Rng) -> Result<(bool, Option<f64>)> {
        let mut path = Path::new();
        let mut step = self.get(&path, &self.root)?;
        loop {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = step.len().checked_sub(1).ok_or_else(|| {
                Error::ZeroProbability(format!("protocol node at path {path:?} has no branches"))
            })?;
            for (i, (p, _)) in step.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            path.push(chosen as u32);
            let next = match &step[chosen].1 {
                Next::Done(t) => return Ok((t.success, t.fidelity)),
                Next::Node(node) => self.get(&path, node)?,
            };
            step = next;
        }
    }
}

/// Monte Carlo estimate over `shots` trajectories. Shot `i` uses stream `i`
/// of a ChaCha8 generator seeded with `seed`.
pub fn sample(protocol: &dyn Protocol, shots: u64, seed: u64) -> Result<RunStats> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    let cache = StepCache::new(protocol)?;
    let draws: Vec<(bool, Option<f64>)> = (0..shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shot);
            cache.trajectory(&mut rng)
        })
        .collect::<Result<_>>()?;

    let successes = draws.iter().filter(|d| d.0).count() as u64;
    let n = shots as f64;
    let p = successes as f64 / n;
    let stderr = if shots > 1 {
        (p * (1.0 - p) * n / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    let fidelities: Vec<f64> = draws.iter().filter(|d| d.0).filter_map(|d| d.1).collect();
    let (mean_fidelity, fidelity_stderr) = mean_and_stderr(&fidelities);
    Ok(RunStats {
        shots,
        successes,
        success_fraction: p,
        stderr,
        mean_fidelity,
        fidelity_stderr,
        seed,
    })
}

fn mean_and_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stderr = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(stderr))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub exact: f64,
    pub sampled: f64,
    pub stderr: f64,
    /// |sampled - exact| / stderr; infinite when stderr is zero and they differ.
    pub sigmas: f64,
    pub agrees: bool,
}

impl Comparison {
    fn new(exact: f64, sampled: f64, stderr: f64) -> Self {
        let diff = (sampled - exact).abs();
        let sigmas = if stderr > 0.0 {
            diff / stderr
        } else if diff < DEGENERATE_TOLERANCE {
            0.0
        } else {
            f64::INFINITY
        };
        // Differences at round-off level agree even when the spread is zero.
        let agrees = diff < DEGENERATE_TOLERANCE || sigmas <= CROSS_CHECK_SIGMAS;
        Self {
            exact,
            sampled,
            stderr,
            sigmas,
            agrees,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub protocol: String,
    pub stats: RunStats,
    pub success_probability: Comparison,
    pub fidelity: Option<Comparison>,
}

impl CrossCheck {
    pub fn agrees(&self) -> bool {
        self.success_probability.agrees && self.fidelity.as_ref().map_or(true, |f| f.agrees)
    }
}

/// Compares sampled success probability and mean success fidelity with the
/// enumerated values.
pub fn cross_check(protocol: &dyn Protocol, shots: u64, seed: u64) -> Result<CrossCheck> {
    let stats = sample(protocol, shots, seed)?;
    let tree = enumerate(protocol)?;
    let success_probability = Comparison::new(tree.success_probability(), stats.success_fraction, stats.stderr);
    let fidelity = match (tree.success_fidelity(), stats.mean_fidelity, stats.fidelity_stderr) {
        (Some(exact), Some(sampled), Some(se)) => Some(Comparison::new(exact, sampled, se)),
        _ => None,
    };
    Ok(CrossCheck {
        protocol: protocol.id().to_string(),
        stats,
        success_probability,
        fidelity,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolId {
    DoubleHerald,
    HeteroTimebin,
    HeteroPolarization,
    ReduceComposite,
    TimebinPair,
    DualrailPair,
    Multiphoton,
    TimebinMultiphoton,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 8] = [
        ProtocolId::DoubleHerald,
        ProtocolId::HeteroTimebin,
        ProtocolId::HeteroPolarization,
        ProtocolId::ReduceComposite,
        ProtocolId::TimebinPair,
        ProtocolId::DualrailPair,
        ProtocolId::Multiphoton,
        ProtocolId::TimebinMultiphoton,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolId::DoubleHerald => "double-herald",
            ProtocolId::HeteroTimebin => "hetero-timebin",
            ProtocolId::HeteroPolarization => "hetero-polarization",
            ProtocolId::ReduceComposite => "reduce-composite",
            ProtocolId::TimebinPair => "timebin-pair",
            ProtocolId::DualrailPair => "dualrail-pair",
            ProtocolId::Multiphoton => "multiphoton",
            ProtocolId::TimebinMultiphoton => "timebin-multiphoton",
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown protocol '{s}'")))
    }
}

/// Physical parameters shared by all protocols.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Combined collection and detection efficiency.
    pub efficiency: f64,
    pub dark_count_prob: f64,
    /// Relative difference of the two emitters' rates.
    pub mismatch: f64,
    pub cavity: Option<CavityParams>,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_prob: 0.0,
            mismatch: 0.0,
            cavity: None,
        }
    }
}

/// Protocol inputs; unset fields take protocol defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    /// Emitter preparations. Double heralding uses two (default symmetric);
    /// hetero-timebin uses one (default symmetric).
    pub prep: Vec<QubitPrep>,
    /// Photon count for the factories (default 2).
    pub photons: Option<usize>,
    /// Target amplitudes: 2^N for the factories (default GHZ), or the two
    /// encoded-qubit amplitudes for hetero-polarization and reduce-composite.
    pub amplitudes: Option<Vec<C64>>,
    pub encoding: Option<PhotonEncoding>,
    /// Physical qubit measured by reduce-composite (default 1).
    pub measured_qubit: Option<usize>,
}

/// A fully specified protocol instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub protocol: ProtocolId,
    pub physics: Physics,
    pub inputs: Inputs,
}

/// (|0...0> + |1...1>)/√2 on `n` photons.
pub fn ghz_amplitudes(n: usize) -> Vec<C64> {
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    if n == 0 {
        return amps;
    }
    amps[0] = C64::new(FRAC_1_SQRT_2, 0.0);
    amps[(1 << n) - 1] = C64::new(FRAC_1_SQRT_2, 0.0);
    amps
}

impl Experiment {
    pub fn new(protocol: ProtocolId) -> Self {
        Self {
            protocol,
            physics: Physics::default(),
            inputs: Inputs::default(),
        }
    }

    fn validate_physics(&self) -> Result<()> {
        let p = &self.physics;
        if !(0.0..=1.0).contains(&p.efficiency) {
            return Err(Error::parameter("efficiency", p.efficiency, "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&p.dark_count_prob) {
            return Err(Error::parameter("dark_count_prob", p.dark_count_prob, "must lie in [0, 1)"));
        }
        if !(p.mismatch.is_finite() && p.mismatch >= 0.0) {
            return Err(Error::parameter("mismatch", p.mismatch, "must be a finite fraction >= 0"));
        }
        if let Some(c) = &p.cavity {
            c.validate()?;
            c.gamma_slow()?;
        }
        Ok(())
    }

    fn encoded_amplitudes(&self) -> Result<[C64; 2]> {
        match &self.inputs.amplitudes {
            None => Ok(HeteroPolarization::balanced().amplitudes),
            Some(a) if a.len() == 2 => Ok([a[0], a[1]]),
            Some(a) => Err(Error::InvalidInput(format!(
                "{} needs 2 amplitudes, got {}",
                self.protocol,
                a.len()
            ))),
        }
    }

    fn factory_spec(&self, default_encoding: PhotonEncoding) -> Result<MultiPhotonSpec> {
        let n = self.inputs.photons.unwrap_or(2);
        if n == 0 {
            return Err(Error::InvalidInput("photons must be at least 1".into()));
        }
        if n >= 32 {
            return Err(Error::DimensionBudget {
                required: u128::MAX,
                budget: crate::hilbert::DEFAULT_DIMENSION_BUDGET,
            });
        }
        let amplitudes = self.inputs.amplitudes.clone().unwrap_or_else(|| ghz_amplitudes(n));
        MultiPhotonSpec::new(n, amplitudes, self.inputs.encoding.unwrap_or(default_encoding))
    }

    fn single_prep(&self) -> Result<QubitPrep> {
        match self.inputs.prep.as_slice() {
            [] => Ok(QubitPrep::symmetric()),
            [p] => QubitPrep::new(p.mu, p.nu),
            other => Err(Error::InvalidInput(format!("{} takes 1 prep, got {}", self.protocol, other.len()))),
        }
    }

    /// Validates parameters and instantiates the protocol.
    pub fn build(&self) -> Result<Box<dyn Protocol>> {
        self.validate_physics()?;
        let eta = self.physics.efficiency;
        Ok(match self.protocol {
            ProtocolId::DoubleHerald => {
                let preps = match self.inputs.prep.as_slice() {
                    [] => [QubitPrep::symmetric(); 2],
                    [a, b] => [QubitPrep::new(a.mu, a.nu)?, QubitPrep::new(b.mu, b.nu)?],
                    other => {
                        return Err(Error::InvalidInput(format!("double-herald takes 2 preps, got {}", other.len())))
                    }
                };
                let detector = DetectorModel::new(eta, self.physics.dark_count_prob)?;
                Box::new(DoubleHerald::new(preps, detector, mismatch_visibility(self.physics.mismatch)?)?)
            }
            ProtocolId::HeteroTimebin => Box::new(HeteroTimebin::new(self.single_prep()?, self.physics.cavity.as_ref())?),
            ProtocolId::HeteroPolarization => Box::new(HeteroPolarization::new(self.encoded_amplitudes()?)?),
            ProtocolId::ReduceComposite => Box::new(ReduceComposite::new(
                self.encoded_amplitudes()?,
                self.inputs.measured_qubit.unwrap_or(1),
            )?),
            ProtocolId::TimebinPair => Box::new(MultiPhoton::new(
                MultiPhotonSpec::new(2, crate::protocols::pair_amplitudes(), PhotonEncoding::TimeBin)?,
                eta,
            )?),
            ProtocolId::DualrailPair => {
                let mut p = dualrail_pair(self.inputs.encoding.unwrap_or(PhotonEncoding::DualRail))?;
                p.efficiency = eta;
                Box::new(p)
            }
            ProtocolId::Multiphoton => Box::new(MultiPhoton::new(self.factory_spec(PhotonEncoding::Polarization)?, eta)?),
            ProtocolId::TimebinMultiphoton => {
                let mut spec = self.factory_spec(PhotonEncoding::TimeBin)?;
                if spec.encoding() != PhotonEncoding::TimeBin {
                    spec = MultiPhotonSpec::new(spec.n(), spec.amplitudes().to_vec(), PhotonEncoding::TimeBin)?;
                }
                Box::new(MultiPhoton::new(spec, eta)?)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Engine {
    Exact,
    Sample { shots: u64, seed: u64 },
}

/// Serializable record of one enumerated leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    pub success: bool,
    pub probability: f64,
    pub fidelity: Option<f64>,
    pub history: Vec<String>,
    pub frame: String,
}

impl From<&ProtocolResult> for LeafSummary {
    fn from(r: &ProtocolResult) -> Self {
        Self {
            success: r.success,
            probability: r.probability,
            fidelity: r.fidelity,
            history: r.herald_history.iter().map(HeraldSignature::to_string).collect(),
            frame: frame_string(&r.frame),
        }
    }
}

fn frame_string(frame: &PauliFrame) -> String {
    frame.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub protocol: ProtocolId,
    pub engine: Engine,
    pub success_probability: f64,
    pub success_fidelity: Option<f64>,
    /// Standard error of the success probability; absent for exact runs.
    pub stderr: Option<f64>,
    pub stats: Option<RunStats>,
    /// Enumerated leaves; empty for sampled runs.
    pub leaves: Vec<LeafSummary>,
}

pub fn run(experiment: &Experiment, engine: Engine) -> Result<RunSummary> {
    let protocol = experiment.build()?;
    Ok(match engine {
        Engine::Exact => {
            let tree = enumerate(protocol.as_ref())?;
            RunSummary {
                protocol: experiment.protocol,
                engine,
                success_probability: tree.success_probability(),
                success_fidelity: tree.success_fidelity(),
                stderr: None,
                stats: None,
                leaves: tree.leaves().into_iter().map(LeafSummary::from).collect(),
            }
        }
        Engine::Sample { shots, seed } => {
            let stats = sample(protocol.as_ref(), shots, seed)?;
            RunSummary {
                protocol: experiment.protocol,
                engine,
                success_probability: stats.success_fraction,
                success_fidelity: stats.mean_fidelity,
                stderr: Some(stats.stderr),
                stats: Some(stats),
                leaves: Vec::new(),
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Efficiency,
    G,
    Kappa,
    Mismatch,
    N,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Efficiency => "efficiency",
            SweepParameter::G => "g",
            SweepParameter::Kappa => "kappa",
            SweepParameter::Mismatch => "mismatch",
            SweepParameter::N => "n",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(&self, base: &Experiment, value: f64) -> Result<Experiment> {
        let mut e = base.clone();
        match self {
            SweepParameter::Efficiency => e.physics.efficiency = value,
            SweepParameter::Mismatch => e.physics.mismatch = value,
            SweepParameter::G | SweepParameter::Kappa => {
                let cavity = e.physics.cavity.as_mut().ok_or_else(|| {
                    Error::InvalidInput(format!("sweeping {} needs cavity parameters", self.name()))
                })?;
                if *self == SweepParameter::G {
                    cavity.g = value;
                } else {
                    cavity.kappa = value;
                }
            }
            SweepParameter::N => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::parameter("n", value, "must be a positive integer"));
                }
                e.inputs.photons = Some(value as usize);
                e.inputs.amplitudes = None;
            }
        }
        Ok(e)
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "efficiency" | "eta" => Ok(SweepParameter::Efficiency),
            "g" => Ok(SweepParameter::G),
            "kappa" => Ok(SweepParameter::Kappa),
            "mismatch" => Ok(SweepParameter::Mismatch),
            "n" | "N" => Ok(SweepParameter::N),
            _ => Err(Error::InvalidInput(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: Experiment,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub engine: Engine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub success_probability: f64,
    pub success_fidelity: Option<f64>,
    pub stderr: Option<f64>,
}

impl SweepSpec {
    /// Builds every grid point, so an invalid value fails before any run.
    pub fn validate(&self) -> Result<Vec<Experiment>> {
        if self.values.is_empty() {
            return Err(Error::InvalidInput("sweep grid is empty".into()));
        }
        self.values
            .iter()
            .map(|&v| {
                let e = self.parameter.apply(&self.base, v)?;
                e.build()?;
                Ok(e)
            })
            .collect()
    }
}

/// One row per grid value, in grid order.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let experiments = spec.validate()?;
    experiments
        .iter()
        .zip(&spec.values)
        .map(|(e, &value)| {
            let s = run(e, spec.engine)?;
            Ok(SweepRow {
                parameter: spec.parameter,
                value,
                success_probability: s.success_probability,
                success_fidelity: s.success_fidelity,
                stderr: s.stderr,
            })
        })
        .collect()
}
