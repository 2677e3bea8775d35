//! Experiment configuration: one TOML file per experiment, scalar flag
//! overrides only.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use purestate::ensembles::EnsembleSpec;
use purestate::rng::{stage_seed, stream_rng};
use purestate::spectra::{build_spin_model, BipartiteModel, CouplingForm, SpinCoupling, Spectrum};
use purestate::states::{Observable, PopulationSet, PureState};
use purestate::tol::Tolerances;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] purestate::Error),
}

pub type ConfigResult<T> = Result<T, ConfigError>;

/// Uniform field shorthand: one number broadcast to every spin, or the full
/// per-spin list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldsSpec {
    Uniform(f64),
    PerSpin(Vec<f64>),
}

impl FieldsSpec {
    fn resolve(&self, n_spins: usize) -> ConfigResult<Vec<f64>> {
        match self {
            FieldsSpec::Uniform(h) => Ok(vec![*h; n_spins]),
            FieldsSpec::PerSpin(v) => {
                if v.len() != n_spins {
                    return Err(ConfigError::Invalid(format!(
                        "{} fields for {} spins",
                        v.len(),
                        n_spins
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// The physical system: an explicit spin model (diagonalized, supports
/// subsystem work), a bare eigenvalue list, or a spectrum CSV on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_spins: Option<usize>,
    pub fields: Option<FieldsSpec>,
    #[serde(default)]
    pub couplings: Vec<SpinCoupling>,
    pub coupling_form: Option<CouplingForm>,
    /// Spins assigned to the subsystem (the rest are the environment).
    pub partition: Option<usize>,
    pub energies: Option<Vec<f64>>,
    pub spectrum_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Explicit; there is deliberately no time-based default.
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum EnsembleConfig {
    Cutoff {
        e_max: f64,
        #[serde(default)]
        factorized: bool,
    },
    FixedEnergy {
        e: f64,
        #[serde(default)]
        factorized: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfigToml {
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub n_samples: Option<usize>,
    /// "uniform" or "random"
    pub mode: Option<String>,
    pub time_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ObservableConfig {
    /// Seeded Gaussian Hermitian matrix in the energy eigenbasis.
    Random,
    Identity,
    Diagonal { values: Vec<f64> },
}

impl Default for ObservableConfig {
    fn default() -> Self {
        ObservableConfig::Random
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "populations", rename_all = "snake_case")]
pub enum InitialStateConfig {
    Uniform,
    Eigenstate { index: usize },
    Explicit { values: Vec<f64> },
    File { path: PathBuf },
}

impl Default for InitialStateConfig {
    fn default() -> Self {
        InitialStateConfig::Uniform
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetsConfig {
    pub n_samples: usize,
    pub mu_samples: usize,
    pub state_function_points: usize,
    pub state_function_samples: usize,
    pub burn_in: Option<usize>,
    pub thinning: Option<usize>,
    pub histogram_bins: usize,
    /// Coordinates whose marginals get histogrammed.
    pub histogram_coordinates: Vec<usize>,
}

impl Default for BudgetsConfig {
    fn default() -> Self {
        BudgetsConfig {
            n_samples: 10_000,
            mu_samples: 1500,
            state_function_points: 9,
            state_function_samples: 1500,
            burn_in: None,
            thinning: None,
            histogram_bins: 40,
            histogram_coordinates: vec![0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbesConfig {
    pub count: usize,
    pub threshold: Option<f64>,
}

impl Default for ProbesConfig {
    fn default() -> Self {
        ProbesConfig { count: 50, threshold: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// Level counts for synthetic linear spectra.
    pub sizes: Vec<usize>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotsConfig {
    pub enable: bool,
}

impl Default for PlotsConfig {
    fn default() -> Self {
        PlotsConfig { enable: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorecardConfig {
    pub typicality_threshold: Option<f64>,
    pub canonical_fit_tolerance: Option<f64>,
    pub temperature_match_tolerance: Option<f64>,
    pub extensivity_tolerance: Option<f64>,
}

impl Default for ScorecardConfig {
    fn default() -> Self {
        ScorecardConfig {
            typicality_threshold: None,
            canonical_fit_tolerance: None,
            temperature_match_tolerance: None,
            extensivity_tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default, rename = "ensemble")]
    pub ensembles: Vec<EnsembleConfig>,
    #[serde(default)]
    pub trajectory: Option<TrajectoryConfigToml>,
    #[serde(default)]
    pub observable: ObservableConfig,
    #[serde(default)]
    pub initial_state: InitialStateConfig,
    #[serde(default)]
    pub budgets: BudgetsConfig,
    #[serde(default)]
    pub probes: ProbesConfig,
    #[serde(default)]
    pub scaling: Option<ScalingConfig>,
    #[serde(default)]
    pub scorecard: ScorecardConfig,
    #[serde(default)]
    pub plots: PlotsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    /// Parses and validates; TOML errors keep their line/column markers.
    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(config)
    }

    fn validate(&self, base: &Path) -> ConfigResult<()> {
        let m = &self.model;
        let inline_spin = m.n_spins.is_some();
        let explicit = m.energies.is_some();
        let from_file = m.spectrum_file.is_some();
        if [inline_spin, explicit, from_file].iter().filter(|&&x| x).count() != 1 {
            return Err(ConfigError::Invalid(
                "model must give exactly one of n_spins, energies, spectrum_file".into(),
            ));
        }
        if inline_spin && m.fields.is_none() {
            return Err(ConfigError::Invalid("spin model needs fields".into()));
        }
        if let Some(file) = &m.spectrum_file {
            let resolved = base.join(file);
            if !resolved.exists() {
                return Err(ConfigError::Invalid(format!(
                    "spectrum_file {} does not exist",
                    resolved.display()
                )));
            }
        }
        if let InitialStateConfig::File { path } = &self.initial_state {
            let resolved = base.join(path);
            if !resolved.exists() {
                return Err(ConfigError::Invalid(format!(
                    "initial state file {} does not exist",
                    resolved.display()
                )));
            }
        }
        if let Some(sc) = &self.scaling {
            if sc.sizes.len() < 3 {
                return Err(ConfigError::Invalid("scaling needs at least 3 sizes".into()));
            }
        }
        Ok(())
    }
}

/// The config after model construction and path resolution.
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub spectrum: Spectrum,
    /// Present only for inline spin models.
    pub model: Option<BipartiteModel>,
    pub base_dir: PathBuf,
}

impl ResolvedExperiment {
    pub fn prepare(config: ExperimentConfig, config_path: &Path) -> ConfigResult<Self> {
        let base_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let (spectrum, model) = match (&config.model.n_spins, &config.model.energies) {
            (Some(n_spins), None) => {
                let fields = config
                    .model
                    .fields
                    .as_ref()
                    .expect("validated")
                    .resolve(*n_spins)?;
                let form = config.model.coupling_form.unwrap_or(CouplingForm::Heisenberg);
                let partition = config.model.partition.unwrap_or(n_spins / 2).max(1);
                let model = build_spin_model(
                    *n_spins,
                    &fields,
                    &config.model.couplings,
                    form,
                    partition,
                )?;
                (model.spectrum().clone(), Some(model))
            }
            (None, Some(energies)) => {
                let mut sorted = energies.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (Spectrum::new(sorted)?, None)
            }
            _ => {
                let path = base_dir.join(config.model.spectrum_file.as_ref().expect("validated"));
                let text = fs::read_to_string(&path)
                    .map_err(|e| ConfigError::Io { path: path.clone(), source: e })?;
                let mut energies = Vec::new();
                for line in text.lines() {
                    let t = line.trim();
                    if t.is_empty() || t.starts_with('#') || t.starts_with("index") {
                        continue;
                    }
                    // spectrum CSV: index,energy[,group]; bare lists also accepted
                    let field = t.split(',').nth(1).unwrap_or(t);
                    let e: f64 = field.trim().parse().map_err(|_| {
                        ConfigError::Parse {
                            path: path.clone(),
                            message: format!("bad energy value: {t}"),
                        }
                    })?;
                    energies.push(e);
                }
                energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (Spectrum::new(energies)?, None)
            }
        };
        Ok(ResolvedExperiment { config, spectrum, model, base_dir })
    }

    pub fn ensemble_specs(&self) -> ConfigResult<Vec<(EnsembleSpec, bool)>> {
        self.config
            .ensembles
            .iter()
            .map(|e| {
                Ok(match e {
                    EnsembleConfig::Cutoff { e_max, factorized } => {
                        (EnsembleSpec::cutoff(self.spectrum.clone(), *e_max)?, *factorized)
                    }
                    EnsembleConfig::FixedEnergy { e, factorized } => {
                        (EnsembleSpec::fixed_energy(self.spectrum.clone(), *e)?, *factorized)
                    }
                })
            })
            .collect()
    }

    pub fn trajectory(&self) -> ConfigResult<purestate::dynamics::TrajectoryConfig> {
        use purestate::dynamics::{TimeSampling, TrajectoryConfig};
        let defaults = TrajectoryConfig::default_for(&self.spectrum);
        let Some(t) = &self.config.trajectory else {
            return Ok(defaults);
        };
        let t_start = t.t_start.unwrap_or(defaults.t_start());
        let t_end = t.t_end.unwrap_or(defaults.t_end());
        let n = t.n_samples.unwrap_or(defaults.n_samples());
        let sampling = match t.mode.as_deref() {
            None | Some("uniform") => TimeSampling::Uniform,
            Some("random") => TimeSampling::Random {
                seed: t.time_seed.unwrap_or(stage_seed(self.config.run.seed, "time-grid")),
            },
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "trajectory mode must be uniform or random, got {other}"
                )))
            }
        };
        Ok(TrajectoryConfig::new(t_start, t_end, n, sampling)?)
    }

    pub fn observable(&self) -> ConfigResult<Observable> {
        let n = self.spectrum.len();
        Ok(match &self.config.observable {
            ObservableConfig::Random => {
                let mut rng = stream_rng(stage_seed(self.config.run.seed, "observable"), 0);
                Observable::random(n, &mut rng)
            }
            ObservableConfig::Identity => Observable::identity(n),
            ObservableConfig::Diagonal { values } => {
                if values.len() != n {
                    return Err(ConfigError::Invalid(format!(
                        "{} diagonal values for {} levels",
                        values.len(),
                        n
                    )));
                }
                Observable::from_diagonal(values)
            }
        })
    }

    pub fn initial_state(&self) -> ConfigResult<PureState> {
        let n = self.spectrum.len();
        let populations = match &self.config.initial_state {
            InitialStateConfig::Uniform => PopulationSet::uniform(n)?,
            InitialStateConfig::Eigenstate { index } => PopulationSet::eigenstate(n, *index)?,
            InitialStateConfig::Explicit { values } => PopulationSet::new(values.clone())?,
            InitialStateConfig::File { path } => {
                let resolved = self.base_dir.join(path);
                let file = fs::File::open(&resolved)
                    .map_err(|e| ConfigError::Io { path: resolved.clone(), source: e })?;
                purestate::export::read_populations_csv(std::io::BufReader::new(file))?
            }
        };
        if populations.len() != n {
            return Err(ConfigError::Invalid(format!(
                "initial state has {} levels, spectrum {}",
                populations.len(),
                n
            )));
        }
        let mut rng = stream_rng(stage_seed(self.config.run.seed, "initial-phases"), 0);
        Ok(PureState::with_random_phases(populations, &mut rng))
    }
}
