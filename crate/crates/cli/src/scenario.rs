//! JSON scenario files: one file describes one reproducible experiment.

use num_complex::Complex64 as C64;
use serde::Deserialize;
use std::path::{Path, PathBuf};

use heralded::emitters::CavityParams;
use heralded::protocols::{PhotonEncoding, QubitPrep};
use heralded::runner::{Engine, Experiment, Inputs, Physics, ProtocolId, SweepParameter, SweepSpec};

use crate::CliError;

/// Default shot count when sampling is requested without one.
pub const DEFAULT_SHOTS: u64 = 10_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub protocol: String,
    #[serde(default)]
    pub physics: PhysicsSpec,
    #[serde(default)]
    pub inputs: InputsSpec,
    #[serde(default)]
    pub engine: EngineSpec,
    pub sweep: Option<GridSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSpec {
    pub efficiency: Option<f64>,
    pub dark_count_prob: Option<f64>,
    pub mismatch: Option<f64>,
    pub cavity: Option<CavitySpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    pub g: f64,
    pub kappa: f64,
    pub t_wait: f64,
}

/// A real number or a `[re, im]` pair.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl From<Amplitude> for C64 {
    fn from(a: Amplitude) -> Self {
        match a {
            Amplitude::Real(re) => C64::new(re, 0.0),
            Amplitude::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepSpec {
    pub mu: Amplitude,
    pub nu: Amplitude,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsSpec {
    pub prep: Option<Vec<PrepSpec>>,
    pub photons: Option<usize>,
    pub amplitudes: Option<Vec<Amplitude>>,
    pub encoding: Option<PhotonEncoding>,
    pub measured_qubit: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    #[default]
    Exact,
    Sample,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    #[serde(default)]
    pub mode: EngineMode,
    pub shots: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub name: Option<String>,
    pub format: Option<Format>,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Scenario after overrides, ready to execute.
#[derive(Debug)]
pub struct Resolved {
    pub experiment: Experiment,
    pub engine: Engine,
    pub sweep: Option<(SweepParameter, Vec<f64>)>,
    pub out_dir: PathBuf,
    pub name: String,
    pub format: Format,
}

impl Resolved {
    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let (parameter, values) = self
            .sweep
            .clone()
            .ok_or_else(|| CliError::Validation("scenario has no 'sweep' section".into()))?;
        Ok(SweepSpec {
            base: self.experiment.clone(),
            parameter,
            values,
            engine: self.engine,
        })
    }
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read scenario {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("malformed scenario {}: {e}", path.display())))
}

fn finite(field: &str, value: f64) -> Result<f64, CliError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::Validation(format!("{field} must be a finite number")))
    }
}

fn range(field: &str, value: f64, lo: f64, hi: f64, hi_inclusive: bool) -> Result<f64, CliError> {
    let ok = value >= lo && if hi_inclusive { value <= hi } else { value < hi };
    if ok {
        Ok(value)
    } else {
        let close = if hi_inclusive { ']' } else { ')' };
        Err(CliError::Validation(format!("{field} = {value} outside [{lo}, {hi}{close}")))
    }
}

impl Scenario {
    pub fn resolve(self, source: &Path, overrides: &Overrides) -> Result<Resolved, CliError> {
        let protocol: ProtocolId = self
            .protocol
            .parse()
            .map_err(|_| CliError::Validation(format!("protocol: unknown id '{}'", self.protocol)))?;

        let mut physics = Physics::default();
        if let Some(v) = self.physics.efficiency {
            physics.efficiency = range("physics.efficiency", v, 0.0, 1.0, true)?;
        }
        if let Some(v) = self.physics.dark_count_prob {
            physics.dark_count_prob = range("physics.dark_count_prob", v, 0.0, 1.0, false)?;
        }
        if let Some(v) = self.physics.mismatch {
            physics.mismatch = finite("physics.mismatch", v)?;
            if v < 0.0 {
                return Err(CliError::Validation(format!("physics.mismatch = {v} must be >= 0")));
            }
        }
        if let Some(c) = self.physics.cavity {
            let cavity = CavityParams::new(
                finite("physics.cavity.g", c.g)?,
                finite("physics.cavity.kappa", c.kappa)?,
                finite("physics.cavity.t_wait", c.t_wait)?,
            )
            .map_err(|e| CliError::Validation(format!("physics.cavity: {e}")))?;
            physics.cavity = Some(cavity);
        }

        let prep = match self.inputs.prep {
            None => Vec::new(),
            Some(list) => list
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    QubitPrep::new(p.mu.into(), p.nu.into())
                        .map_err(|e| CliError::Validation(format!("inputs.prep[{i}]: {e}")))
                })
                .collect::<Result<_, _>>()?,
        };
        let inputs = Inputs {
            prep,
            photons: self.inputs.photons,
            amplitudes: self
                .inputs
                .amplitudes
                .map(|a| a.into_iter().map(C64::from).collect()),
            encoding: self.inputs.encoding,
            measured_qubit: self.inputs.measured_qubit,
        };
        let experiment = Experiment {
            protocol,
            physics,
            inputs,
        };

        let engine = match (self.engine.mode, overrides.shots) {
            (_, Some(shots)) => Engine::Sample {
                shots,
                seed: overrides.seed.or(self.engine.seed).unwrap_or(0),
            },
            (EngineMode::Sample, None) => Engine::Sample {
                shots: self.engine.shots.unwrap_or(DEFAULT_SHOTS),
                seed: overrides.seed.or(self.engine.seed).unwrap_or(0),
            },
            (EngineMode::Exact, None) => Engine::Exact,
        };
        if let Engine::Sample { shots: 0, .. } = engine {
            return Err(CliError::Validation("engine.shots must be at least 1".into()));
        }

        let sweep = match self.sweep {
            None => None,
            Some(grid) => {
                let parameter: SweepParameter = grid
                    .parameter
                    .parse()
                    .map_err(|_| CliError::Validation(format!("sweep.parameter: unknown '{}'", grid.parameter)))?;
                if grid.values.is_empty() {
                    return Err(CliError::Validation("sweep.values: grid is empty".into()));
                }
                for (i, &v) in grid.values.iter().enumerate() {
                    finite(&format!("sweep.values[{i}]"), v)?;
                }
                Some((parameter, grid.values))
            }
        };

        let name = self.output.name.unwrap_or_else(|| {
            source
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "result".into())
        });
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(CliError::Validation(format!("output.name '{name}' is not a plain file name")));
        }
        let out_dir = overrides
            .out
            .clone()
            .or(self.output.dir)
            .unwrap_or_else(|| PathBuf::from("."));
        let format = overrides.format.or(self.output.format).unwrap_or_default();

        Ok(Resolved {
            experiment,
            engine,
            sweep,
            out_dir,
            name,
            format,
        })
    }
}
