//! JSON experiment configuration and its validation.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mfgid_core::{
    DensitySpec, FicPlayParams, Grid, InteractionCost, InverseConfig, Kernel, LaxFriedrichsParams, LocalCost,
    MfgProblem, Pointwise, PotentialSpec, SpatialField, TerminalCost,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Forward,
    GenerateMeasurement,
    Eci,
    Bri,
    BriStaticRestart,
    Heci,
    Linpara,
    Diagnostics,
}

impl Mode {
    pub fn is_inverse(self) -> bool {
        matches!(self, Mode::Eci | Mode::Bri | Mode::BriStaticRestart | Mode::Heci | Mode::Linpara)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Forward => "forward",
            Mode::GenerateMeasurement => "generate-measurement",
            Mode::Eci => "eci",
            Mode::Bri => "bri",
            Mode::BriStaticRestart => "bri-static-restart",
            Mode::Heci => "heci",
            Mode::Linpara => "linpara",
            Mode::Diagnostics => "diagnostics",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalName {
    Identity,
    Negated,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionSpec {
    #[default]
    Absent,
    Local {
        cost: LocalName,
    },
    Nonlocal {
        kernel: Kernel,
        pointwise: Pointwise,
    },
}

impl InteractionSpec {
    fn build(self) -> InteractionCost {
        match self {
            InteractionSpec::Absent => InteractionCost::Absent,
            InteractionSpec::Local { cost } => InteractionCost::Local(match cost {
                LocalName::Identity => LocalCost::Identity,
                LocalName::Negated => LocalCost::Negated,
                LocalName::Square => LocalCost::Square,
            }),
            InteractionSpec::Nonlocal { kernel, pointwise } => InteractionCost::Nonlocal { kernel, pointwise },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalSpec {
    #[default]
    Zero,
    /// `factor * rho0(x)`.
    ScaledDensity { factor: f64 },
    /// A builtin closed-form function of `x`.
    Function { function: PotentialSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialPotential {
    Builtin {
        potential: PotentialSpec,
    },
    /// Independent uniform values per node. Bounds default to the range of
    /// the true potential when it is known and to `[-1, 1]` otherwise.
    Random {
        #[serde(default)]
        low: Option<f64>,
        #[serde(default)]
        high: Option<f64>,
    },
}

impl Default for InitialPotential {
    fn default() -> Self {
        InitialPotential::Builtin {
            potential: PotentialSpec::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_x: usize,
    pub n_t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub nu: f64,
    pub t_final: f64,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    #[serde(default = "default_hamiltonian")]
    pub hamiltonian: String,
    /// Lax-Friedrichs coefficient; the mesh step when absent.
    #[serde(default)]
    pub nu_num: Option<f64>,
    #[serde(default)]
    pub interaction: InteractionSpec,
    #[serde(default)]
    pub terminal: TerminalSpec,
    pub density: DensitySpec,
    /// The true potential. Needed to generate measurements.
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

fn default_domain() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_hamiltonian() -> String {
    "quadratic".into()
}

pub fn default_generation() -> FicPlayParams {
    FicPlayParams {
        tol: 1e-10,
        max_iter: 2000,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    /// Fictitious play settings for measurement generation and truth solves.
    #[serde(default = "default_generation")]
    pub generation: FicPlayParams,
    #[serde(default)]
    pub solver: InverseConfig,
    /// Starting potential of inverse modes and the estimate examined by the
    /// diagnostics mode.
    #[serde(default)]
    pub initial_potential: InitialPotential,
    /// CSV file with columns `x,phi0`. Inverse modes generate a twin
    /// measurement from the true potential when absent.
    #[serde(default)]
    pub measurement: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse a config file. A relative measurement path is taken relative to
    /// the config file.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let (Some(m), Some(dir)) = (cfg.measurement.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(cfg)
    }

    /// Every violated constraint, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.problem;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            out.push(format!("name must be a non-empty file name, got {:?}", self.name));
        }
        if !(p.nu > 0.0 && p.nu.is_finite()) {
            out.push(format!("problem.nu must be positive, got {}", p.nu));
        }
        if !(p.t_final > 0.0 && p.t_final.is_finite()) {
            out.push(format!("problem.t_final must be positive, got {}", p.t_final));
        }
        if !(p.domain[0] < p.domain[1]) {
            out.push(format!("problem.domain must be increasing, got {:?}", p.domain));
        }
        if p.hamiltonian != "quadratic" {
            out.push(format!("unknown hamiltonian {:?}; only \"quadratic\" is built in", p.hamiltonian));
        }
        if let Some(v) = p.nu_num {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("problem.nu_num must be nonnegative, got {v}"));
            }
        }
        if let DensitySpec::Gaussian { sigma, .. } = p.density {
            if !(sigma > 0.0) {
                out.push(format!("density sigma must be positive, got {sigma}"));
            }
        }
        if let InteractionSpec::Nonlocal {
            kernel: Kernel::Gaussian { sigma },
            ..
        } = p.interaction
        {
            if !(sigma > 0.0) {
                out.push(format!("kernel sigma must be positive, got {sigma}"));
            }
        }
        if self.grid.n_x < 3 {
            out.push(format!("grid.n_x must be at least 3, got {}", self.grid.n_x));
        }
        if self.grid.n_t < 1 {
            out.push("grid.n_t must be at least 1".into());
        }
        let needs_truth = matches!(self.mode, Mode::Forward | Mode::GenerateMeasurement | Mode::Diagnostics)
            || (self.mode.is_inverse() && self.measurement.is_none());
        if needs_truth && p.potential.is_none() {
            out.push(format!("mode {} needs problem.potential (or a measurement file)", self.mode));
        }
        if self.mode == Mode::Linpara && p.interaction != InteractionSpec::Absent {
            out.push("mode linpara needs interaction kind \"absent\"".into());
        }
        if self.mode == Mode::Heci && self.solver.heci_levels >= 1 {
            let factor = 1usize << (self.solver.heci_levels - 1).min(30);
            if self.grid.n_x % factor != 0 || self.grid.n_t % factor != 0 {
                out.push(format!(
                    "grid {}x{} must be divisible by {factor} for {} HECI levels",
                    self.grid.n_x, self.grid.n_t, self.solver.heci_levels
                ));
            } else if self.grid.n_x / factor < 3 {
                out.push(format!("coarsest HECI grid has fewer than 3 nodes ({})", self.grid.n_x / factor));
            }
        }
        if let InitialPotential::Random { low, high } = self.initial_potential {
            if let (Some(a), Some(b)) = (low, high) {
                if !(a < b) {
                    out.push(format!("random initial potential needs low < high, got [{a}, {b}]"));
                }
            }
        }
        if let Err(e) = self.solver.validate() {
            out.push(format!("solver: {e}"));
        }
        if let Err(e) = self.generation.validate() {
            out.push(format!("generation: {e}"));
        }
        out
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            bail!("invalid config {:?}:\n  - {}", self.name, v.join("\n  - "))
        }
    }

    pub fn grid(&self) -> anyhow::Result<Grid> {
        let p = &self.problem;
        Ok(Grid::new(self.grid.n_x, self.grid.n_t, p.domain[0], p.domain[1], p.t_final)?)
    }

    pub fn build_problem(&self) -> anyhow::Result<MfgProblem> {
        let grid = self.grid()?;
        let p = &self.problem;
        let rho0 = p.density.sample(&grid)?;
        let lf = match p.nu_num {
            Some(v) => LaxFriedrichsParams::fixed(v)?,
            None => LaxFriedrichsParams::mesh_step(),
        };
        let problem = MfgProblem::new(p.nu, rho0)?
            .with_lax_friedrichs(lf)
            .with_interaction(p.interaction.build());
        let terminal = match p.terminal {
            TerminalSpec::Zero => TerminalCost::Zero,
            TerminalSpec::ScaledDensity { factor } => TerminalCost::Field(problem.rho0().scale(factor)),
            TerminalSpec::Function { function } => TerminalCost::Field(function.sample(&grid)),
        };
        Ok(problem.with_terminal(terminal)?)
    }

    pub fn true_potential(&self, grid: &Grid) -> Option<SpatialField> {
        self.problem.potential.map(|p| p.sample(grid))
    }

    /// Output directory: the override, then the config entry, then
    /// `runs/<name>`.
    pub fn resolve_output(&self, override_dir: Option<&Path>) -> PathBuf {
        override_dir
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.name))
    }
}
