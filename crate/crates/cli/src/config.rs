//! JSON fit configuration. Relative paths resolve against the directory of
//! the configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use koopman_lmi::bilinear::{AlternationConfig, InitialP};
use koopman_lmi::edmd::FactorRoute;
use koopman_lmi::sdp::{Extra, RegularizerSpec, MARGIN_FACTOR};
use koopman_lmi::{InputLifting, LiftingSpec, SolverSettings};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data_path: PathBuf,
    pub output_path: PathBuf,
    /// Defaults to `<output stem>.report.json` beside the model.
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    /// Defaults to `<output stem>.trace.csv`; only written by alternating fits.
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub lifting: LiftingConfig,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub alternation: AlternationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftingConfig {
    #[serde(default = "one")]
    pub degree: usize,
    #[serde(default)]
    pub input_lifting: InputLifting,
    #[serde(default)]
    pub constant: bool,
}

impl Default for LiftingConfig {
    fn default() -> Self {
        LiftingConfig { degree: 1, input_lifting: InputLifting::Identity, constant: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    #[serde(default)]
    pub tikhonov_alpha: f64,
    #[serde(default)]
    pub extra: ExtraConfig,
    /// Spectral-radius bound ρ̄ on `A`.
    #[serde(default)]
    pub rho_bar: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtraConfig {
    #[default]
    None,
    TwoNorm {
        beta: f64,
    },
    Nuclear {
        beta: f64,
    },
    #[serde(alias = "hinf")]
    HInfinity {
        beta: f64,
    },
}

impl ExtraConfig {
    pub fn to_extra(self) -> Extra<f64> {
        match self {
            ExtraConfig::None => Extra::None,
            ExtraConfig::TwoNorm { beta } => Extra::TwoNorm(beta),
            ExtraConfig::Nuclear { beta } => Extra::Nuclear(beta),
            ExtraConfig::HInfinity { beta } => Extra::HInfinity(beta),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExtraConfig::None => "none",
            ExtraConfig::TwoNorm { .. } => "two_norm",
            ExtraConfig::Nuclear { .. } => "nuclear",
            ExtraConfig::HInfinity { .. } => "h_infinity",
        }
    }

    pub fn with_beta(self, beta: f64) -> Option<Self> {
        match self {
            ExtraConfig::None => None,
            ExtraConfig::TwoNorm { .. } => Some(ExtraConfig::TwoNorm { beta }),
            ExtraConfig::Nuclear { .. } => Some(ExtraConfig::Nuclear { beta }),
            ExtraConfig::HInfinity { .. } => Some(ExtraConfig::HInfinity { beta }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Strict LMIs hold with margin `margin_factor · max(1, ‖H_α‖₂)`.
    #[serde(default = "default_margin_factor")]
    pub margin_factor: f64,
    #[serde(default)]
    pub factor_route: FactorRoute,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            margin_factor: default_margin_factor(),
            factor_route: FactorRoute::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternationSection {
    #[serde(default = "default_alternation_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_cost_tolerance")]
    pub relative_cost_tolerance: f64,
    #[serde(default)]
    pub initial_p: InitialP,
}

impl Default for AlternationSection {
    fn default() -> Self {
        AlternationSection {
            max_iterations: default_alternation_iterations(),
            relative_cost_tolerance: default_cost_tolerance(),
            initial_p: InitialP::default(),
        }
    }
}

fn one() -> usize {
    1
}
fn default_tolerance() -> f64 {
    1e-8
}
fn default_max_iterations() -> usize {
    100
}
fn default_margin_factor() -> f64 {
    MARGIN_FACTOR
}
fn default_alternation_iterations() -> usize {
    40
}
fn default_cost_tolerance() -> f64 {
    1e-4
}

impl FitConfig {
    /// Reads, parses, validates and resolves paths.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: FitConfig =
            serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_path);
        fix(&mut self.output_path);
        if let Some(p) = self.report_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.trace_path.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.lifting.degree == 0 {
            bail!("lifting.degree must be at least 1");
        }
        self.regularizer_spec().validate()?;
        let s = &self.solver;
        if !(s.tolerance > 0.0 && s.tolerance < 1.0) {
            bail!("solver.tolerance must lie in (0, 1)");
        }
        if s.max_iterations == 0 {
            bail!("solver.max_iterations must be at least 1");
        }
        if !(s.margin_factor >= 0.0 && s.margin_factor.is_finite()) {
            bail!("solver.margin_factor must be finite and non-negative");
        }
        self.alternation_config().validate()?;
        Ok(())
    }

    pub fn lifting_spec(&self, state_dim: usize, input_dim: usize) -> koopman_lmi::Result<LiftingSpec> {
        Ok(LiftingSpec::new(state_dim, input_dim, self.lifting.degree, self.lifting.input_lifting)?
            .with_constant(self.lifting.constant))
    }

    pub fn regularizer_spec(&self) -> RegularizerSpec<f64> {
        let r = &self.regularizer;
        let spec = RegularizerSpec::tikhonov(r.tikhonov_alpha).with_extra(r.extra.to_extra());
        match r.rho_bar {
            Some(rho) => spec.with_stability(rho),
            None => spec,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            margin_factor: self.solver.margin_factor,
            ..SolverSettings::default()
        }
    }

    pub fn alternation_config(&self) -> AlternationConfig<f64> {
        let a = &self.alternation;
        AlternationConfig {
            max_iterations: a.max_iterations,
            relative_cost_tolerance: a.relative_cost_tolerance,
            initial_p: a.initial_p,
            solver: self.solver_settings(),
        }
    }

    pub fn report_path(&self) -> PathBuf {
        self.report_path.clone().unwrap_or_else(|| sibling(&self.output_path, "report.json"))
    }

    pub fn trace_path(&self) -> PathBuf {
        self.trace_path.clone().unwrap_or_else(|| sibling(&self.output_path, "trace.csv"))
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}
