//! Scenario files: TOML documents tagged by `kind`.
//!
//! Every table rejects unknown keys. Defaults are filled in on parse, so the
//! value echoed into a summary is the fully resolved scenario.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    Histories(HistoriesScenario),
    Measurement(MeasurementScenario),
    Bohm(BohmScenario),
    Pathsum(PathsumScenario),
    CompareBohmDh(CompareBohmDhScenario),
    CompareCopenhagen(MeasurementScenario),
    VerifyPathsum(PathsumScenario),
}

/// The kinds, in the spelling used by `kind` and by the subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Histories,
    Measurement,
    Bohm,
    Pathsum,
    CompareBohmDh,
    CompareCopenhagen,
    VerifyPathsum,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Histories => "histories",
            Kind::Measurement => "measurement",
            Kind::Bohm => "bohm",
            Kind::Pathsum => "pathsum",
            Kind::CompareBohmDh => "compare-bohm-dh",
            Kind::CompareCopenhagen => "compare-copenhagen",
            Kind::VerifyPathsum => "verify-pathsum",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Scenario {
    pub fn kind(&self) -> Kind {
        match self {
            Scenario::Histories(_) => Kind::Histories,
            Scenario::Measurement(_) => Kind::Measurement,
            Scenario::Bohm(_) => Kind::Bohm,
            Scenario::Pathsum(_) => Kind::Pathsum,
            Scenario::CompareBohmDh(_) => Kind::CompareBohmDh,
            Scenario::CompareCopenhagen(_) => Kind::CompareCopenhagen,
            Scenario::VerifyPathsum(_) => Kind::VerifyPathsum,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Scenario::Histories(s) => s.seed,
            Scenario::Measurement(s) | Scenario::CompareCopenhagen(s) => s.seed,
            Scenario::Bohm(s) => s.seed,
            Scenario::Pathsum(s) | Scenario::VerifyPathsum(s) => s.seed,
            Scenario::CompareBohmDh(s) => s.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Scenario::Histories(s) => s.seed = seed,
            Scenario::Measurement(s) | Scenario::CompareCopenhagen(s) => s.seed = seed,
            Scenario::Bohm(s) => s.seed = seed,
            Scenario::Pathsum(s) | Scenario::VerifyPathsum(s) => s.seed = seed,
            Scenario::CompareBohmDh(s) => s.seed = seed,
        }
    }

    pub fn output(&self) -> &OutputConfig {
        match self {
            Scenario::Histories(s) => &s.output,
            Scenario::Measurement(s) | Scenario::CompareCopenhagen(s) => &s.output,
            Scenario::Bohm(s) => &s.output,
            Scenario::Pathsum(s) | Scenario::VerifyPathsum(s) => &s.output,
            Scenario::CompareBohmDh(s) => &s.output,
        }
    }

    /// The output file stem: `output.name`, else the kind.
    pub fn name(&self) -> String {
        self.output()
            .name
            .clone()
            .unwrap_or_else(|| self.kind().as_str().to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for result files; `--out-dir` overrides it.
    pub dir: Option<String>,
    /// File stem; defaults to the scenario kind.
    pub name: Option<String>,
}

fn default_epsilon() -> f64 {
    histories_lab_core::histories::EPSILON_GENERIC
}

fn default_history_cap() -> usize {
    histories_lab_core::histories::DEFAULT_HISTORY_CAP
}

fn default_true() -> bool {
    true
}

fn default_mass() -> f64 {
    1.0
}

fn default_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_dump() -> usize {
    100
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    #[default]
    Medium,
    Weak,
}

/// A finite-dimensional Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    RingLattice {
        sites: usize,
        hopping: f64,
        #[serde(default)]
        potential: Option<Vec<f64>>,
    },
    QubitRegister {
        qubits: usize,
        #[serde(default)]
        field_x: f64,
        #[serde(default)]
        field_z: f64,
        #[serde(default)]
        coupling_zz: f64,
    },
    /// Explicit hermitian matrix, rows outermost.
    Matrix {
        real: Vec<Vec<f64>>,
        #[serde(default)]
        imag: Option<Vec<Vec<f64>>>,
    },
}

/// Initial state: one basis vector or explicit amplitudes `[re, im]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub basis: Option<usize>,
    pub amplitudes: Option<Vec<[f64; 2]>>,
    /// Rescale `amplitudes` to unit norm.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QubitBasis {
    #[default]
    Z,
    X,
}

/// A set of alternatives on the model's Hilbert space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProjectorConfig {
    /// Eigenprojectors of σ_z or σ_x on one qubit (qubit 0 most significant).
    Qubit {
        qubit: usize,
        #[serde(default)]
        basis: QubitBasis,
    },
    /// Diagonal projectors onto groups of basis indices.
    Groups {
        groups: Vec<Vec<usize>>,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
    Trivial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeConfig {
    pub time: f64,
    pub projectors: ProjectorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesScenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    pub model: ModelConfig,
    pub state: StateConfig,
    pub alternatives: Vec<AlternativeConfig>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub condition: Condition,
    #[serde(default = "default_history_cap")]
    pub history_cap: usize,
    /// Optional coarse graining: per time, groups of alternative indices.
    #[serde(default)]
    pub merge: Option<Vec<Vec<Vec<usize>>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub time: f64,
    pub register: usize,
    #[serde(default)]
    pub overlap_delta: f64,
    pub projectors: ProjectorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementScenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    pub system: ModelConfig,
    pub state: StateConfig,
    pub registers: Vec<usize>,
    pub events: Vec<EventConfig>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// When set, register records are read at this time.
    #[serde(default)]
    pub read_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub step: usize,
    pub regions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub sites: usize,
    pub hopping: f64,
    #[serde(default)]
    pub potential: Option<Vec<f64>>,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub projections: Vec<ProjectionConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomModelsConfig {
    pub count: usize,
    pub max_sites: usize,
    pub max_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsumScenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub state: Option<StateConfig>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Seeded random models to verify in addition to `lattice`.
    #[serde(default)]
    pub random: Option<RandomModelsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub points: usize,
    pub spacing: f64,
    /// Lower edge of the domain; the first node sits half a cell above it.
    pub lower: f64,
    #[serde(default = "default_true")]
    pub periodic: bool,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    #[serde(default)]
    pub momentum: Option<Vec<f64>>,
    #[serde(default = "default_amplitude")]
    pub amplitude: [f64; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Harmonic {
        omega: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Values {
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default)]
    pub axis: usize,
    #[serde(default)]
    pub cuts: Vec<f64>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub times: Vec<f64>,
    pub partitions: Vec<PartitionConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BohmScenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    pub grid: GridConfig,
    pub packets: Vec<PacketConfig>,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub count: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub record_times: Vec<f64>,
    /// Trajectories written to the CSV dump (the first ones drawn).
    #[serde(default = "default_dump")]
    pub dump_trajectories: usize,
    /// Write Ψ at every record time.
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBohmDhScenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    pub grid: GridConfig,
    pub packets: Vec<PacketConfig>,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub count: usize,
    pub dt: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub schedule: ScheduleConfig,
}

/// Parses scenario text; `origin` names the source in error messages.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario, LabError> {
    toml::from_str(text).map_err(|e| LabError::Parse {
        origin: origin.to_string(),
        message: e.message().to_string(),
    })
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, LabError> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text, &path.display().to_string())
}
