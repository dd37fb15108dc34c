//! Problem data: the Hamiltonian and its Lax-Friedrichs discretization,
//! interaction and terminal costs, initial densities and ambient potentials.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::grid::{Grid, SpatialField};

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A user-supplied Hamiltonian with its derivative.
pub struct CustomHamiltonian {
    pub name: String,
    pub eval: Box<ScalarFn>,
    pub grad: Box<ScalarFn>,
}

#[derive(Clone)]
pub enum Hamiltonian {
    /// `H(p) = p^2 / 2`.
    Quadratic,
    Custom(Arc<CustomHamiltonian>),
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hamiltonian::Quadratic => write!(f, "Quadratic"),
            Hamiltonian::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl Hamiltonian {
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Hamiltonian::Custom(Arc::new(CustomHamiltonian {
            name: name.into(),
            eval: Box::new(eval),
            grad: Box::new(grad),
        }))
    }

    #[inline]
    pub fn eval(&self, p: f64) -> f64 {
        match self {
            Hamiltonian::Quadratic => 0.5 * p * p,
            Hamiltonian::Custom(c) => (c.eval)(p),
        }
    }

    #[inline]
    pub fn grad(&self, p: f64) -> f64 {
        match self {
            Hamiltonian::Quadratic => p,
            Hamiltonian::Custom(c) => (c.grad)(p),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Hamiltonian::Quadratic => "quadratic",
            Hamiltonian::Custom(c) => &c.name,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Hamiltonian::Quadratic)
    }
}

/// Numerical viscosity of the Lax-Friedrichs Hamiltonian. `None` means one
/// mesh step of the grid in use.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LaxFriedrichsParams {
    pub nu_num: Option<f64>,
}

impl LaxFriedrichsParams {
    pub fn fixed(nu_num: f64) -> Result<Self> {
        if !(nu_num.is_finite() && nu_num >= 0.0) {
            return Err(MfgError::InvalidParameter(format!(
                "numerical viscosity must be nonnegative, got {nu_num}"
            )));
        }
        Ok(Self { nu_num: Some(nu_num) })
    }

    pub fn mesh_step() -> Self {
        Self { nu_num: None }
    }

    pub fn coefficient(&self, grid: &Grid) -> f64 {
        self.nu_num.unwrap_or_else(|| grid.dx())
    }
}

/// `H((p+ + p-)/2) - nu_num (p+ - p-)/2`.
#[inline]
pub fn lf_hamiltonian(h: &Hamiltonian, nu_num: f64, p_plus: f64, p_minus: f64) -> f64 {
    h.eval(0.5 * (p_plus + p_minus)) - 0.5 * nu_num * (p_plus - p_minus)
}

/// Partial derivatives of [`lf_hamiltonian`] with respect to `p+` and `p-`.
#[inline]
pub fn lf_gradients(h: &Hamiltonian, nu_num: f64, p_plus: f64, p_minus: f64) -> (f64, f64) {
    let g = 0.5 * h.grad(0.5 * (p_plus + p_minus));
    (g - 0.5 * nu_num, g + 0.5 * nu_num)
}

/// Pointwise maps for local interaction costs.
#[derive(Clone)]
pub enum LocalCost {
    Identity,
    Negated,
    Square,
    Custom(Arc<ScalarFn>),
}

impl fmt::Debug for LocalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalCost::Identity => write!(f, "Identity"),
            LocalCost::Negated => write!(f, "Negated"),
            LocalCost::Square => write!(f, "Square"),
            LocalCost::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl LocalCost {
    #[inline]
    fn apply(&self, r: f64) -> f64 {
        match self {
            LocalCost::Identity => r,
            LocalCost::Negated => -r,
            LocalCost::Square => r * r,
            LocalCost::Custom(f) => f(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Kernel {
    /// Periodically wrapped centred Gaussian density with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    Constant { value: f64 },
}

impl Kernel {
    fn eval(&self, d: f64, length: f64) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => wrapped_gaussian(d, 0.0, sigma, length),
            Kernel::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pointwise {
    Identity,
    Square,
}

#[derive(Debug, Clone)]
pub enum InteractionCost {
    Absent,
    Local(LocalCost),
    /// `f_i = sum_j K(x_i - x_j) g(rho_j) dx`.
    Nonlocal { kernel: Kernel, pointwise: Pointwise },
}

impl InteractionCost {
    pub fn is_absent(&self) -> bool {
        matches!(self, InteractionCost::Absent)
    }

    /// Monotonicity tag for the builtin variants; `None` when unknown.
    pub fn is_monotone(&self) -> Option<bool> {
        match self {
            InteractionCost::Absent => Some(true),
            InteractionCost::Local(LocalCost::Identity | LocalCost::Square) => Some(true),
            InteractionCost::Local(LocalCost::Negated) => Some(false),
            InteractionCost::Local(LocalCost::Custom(_)) => None,
            InteractionCost::Nonlocal {
                kernel: Kernel::Gaussian { .. },
                pointwise: Pointwise::Identity,
            } => Some(true),
            InteractionCost::Nonlocal {
                kernel: Kernel::Constant { value },
                pointwise: Pointwise::Identity,
            } => Some(*value >= 0.0),
            InteractionCost::Nonlocal { .. } => None,
        }
    }

    /// Evaluator with any grid-dependent kernel table precomputed.
    pub fn evaluator(&self, grid: &Grid) -> InteractionEvaluator<'_> {
        let kernel = match self {
            InteractionCost::Nonlocal { kernel, .. } => {
                let dx = grid.dx();
                let len = grid.length();
                Some((0..grid.n_x()).map(|m| kernel.eval(m as f64 * dx, len)).collect())
            }
            _ => None,
        };
        InteractionEvaluator {
            cost: self,
            kernel,
            dx: grid.dx(),
        }
    }

    pub fn eval(&self, rho: &SpatialField) -> SpatialField {
        let mut out = vec![0.0; rho.len()];
        self.evaluator(rho.grid()).eval_into(rho.values(), &mut out);
        SpatialField::from_vec(*rho.grid(), out)
    }
}

pub struct InteractionEvaluator<'a> {
    cost: &'a InteractionCost,
    kernel: Option<Vec<f64>>,
    dx: f64,
}

impl InteractionEvaluator<'_> {
    pub fn eval_into(&self, rho: &[f64], out: &mut [f64]) {
        match self.cost {
            InteractionCost::Absent => out.fill(0.0),
            InteractionCost::Local(map) => {
                for (o, &r) in out.iter_mut().zip(rho) {
                    *o = map.apply(r);
                }
            }
            InteractionCost::Nonlocal { pointwise, .. } => {
                let kernel = self.kernel.as_deref().expect("kernel table");
                let n = rho.len();
                let g: Vec<f64> = match pointwise {
                    Pointwise::Identity => rho.to_vec(),
                    Pointwise::Square => rho.iter().map(|r| r * r).collect(),
                };
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (j, gj) in g.iter().enumerate() {
                        s += kernel[(i + n - j) % n] * gj;
                    }
                    *o = s * self.dx;
                }
            }
        }
    }
}

/// Terminal cost independent of the density.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCost {
    Zero,
    Field(SpatialField),
}

impl TerminalCost {
    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        match self {
            TerminalCost::Zero => vec![0.0; grid.n_x()],
            TerminalCost::Field(f) => f.values().to_vec(),
        }
    }
}

/// Everything except the ambient potential: viscosity, Hamiltonian, costs and
/// the initial density (renormalized to unit mass on construction).
#[derive(Debug, Clone)]
pub struct MfgProblem {
    nu: f64,
    hamiltonian: Hamiltonian,
    lf: LaxFriedrichsParams,
    interaction: InteractionCost,
    terminal: TerminalCost,
    rho0: SpatialField,
}

impl MfgProblem {
    pub fn new(nu: f64, rho0: SpatialField) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(MfgError::InvalidProblem(format!("viscosity must be positive, got {nu}")));
        }
        let rho0 = normalize_density(&rho0)?;
        Ok(Self {
            nu,
            hamiltonian: Hamiltonian::Quadratic,
            lf: LaxFriedrichsParams::default(),
            interaction: InteractionCost::Absent,
            terminal: TerminalCost::Zero,
            rho0,
        })
    }

    pub fn with_hamiltonian(mut self, h: Hamiltonian) -> Self {
        self.hamiltonian = h;
        self
    }

    pub fn with_lax_friedrichs(mut self, lf: LaxFriedrichsParams) -> Self {
        self.lf = lf;
        self
    }

    pub fn with_interaction(mut self, f: InteractionCost) -> Self {
        self.interaction = f;
        self
    }

    pub fn with_terminal(mut self, terminal: TerminalCost) -> Result<Self> {
        if let TerminalCost::Field(f) = &terminal {
            f.grid().ensure_same(self.grid(), "terminal cost")?;
        }
        self.terminal = terminal;
        Ok(self)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn lax_friedrichs(&self) -> &LaxFriedrichsParams {
        &self.lf
    }

    /// Resolved numerical viscosity on this problem's grid.
    pub fn nu_num(&self) -> f64 {
        self.lf.coefficient(self.grid())
    }

    pub fn interaction(&self) -> &InteractionCost {
        &self.interaction
    }

    pub fn terminal(&self) -> &TerminalCost {
        &self.terminal
    }

    pub fn rho0(&self) -> &SpatialField {
        &self.rho0
    }

    pub fn grid(&self) -> &Grid {
        self.rho0.grid()
    }

    pub fn t_final(&self) -> f64 {
        self.grid().t_final()
    }

    /// The same problem on a grid that differs from the current one by a
    /// power-of-two refinement. Spatial data is restricted by injection or
    /// refined by linear interpolation; the density is renormalized.
    pub fn on_grid(&self, target: &Grid) -> Result<Self> {
        let rho0 = transfer(&self.rho0, target)?;
        let terminal = match &self.terminal {
            TerminalCost::Zero => TerminalCost::Zero,
            TerminalCost::Field(f) => TerminalCost::Field(transfer(f, target)?),
        };
        Ok(Self {
            rho0: normalize_density(&rho0)?,
            terminal,
            hamiltonian: self.hamiltonian.clone(),
            interaction: self.interaction.clone(),
            ..*self
        })
    }
}

impl Clone for InteractionEvaluator<'_> {
    fn clone(&self) -> Self {
        Self {
            cost: self.cost,
            kernel: self.kernel.clone(),
            dx: self.dx,
        }
    }
}

/// Move a spatial field between grids related by powers of two.
pub fn transfer(field: &SpatialField, target: &Grid) -> Result<SpatialField> {
    let mut f = field.clone();
    let src = field.grid();
    if src.x_lo() != target.x_lo() || src.x_hi() != target.x_hi() || src.t_final() != target.t_final() {
        return Err(MfgError::ShapeMismatch("grids cover different domains".into()));
    }
    while f.grid().n_x() > target.n_x() {
        f = f.restrict()?;
    }
    while f.grid().n_x() < target.n_x() {
        f = f.refine();
    }
    if f.grid() != target {
        return Err(MfgError::ShapeMismatch(format!(
            "grid n_x={}, n_t={} is not a power-of-two refinement of n_x={}, n_t={}",
            target.n_x(),
            target.n_t(),
            src.n_x(),
            src.n_t()
        )));
    }
    Ok(f)
}

fn normalize_density(rho: &SpatialField) -> Result<SpatialField> {
    if let Some(node) = rho.values().iter().position(|&v| v < 0.0) {
        return Err(MfgError::InvalidProblem(format!(
            "initial density is negative at node {node}"
        )));
    }
    let mass = rho.integrate();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(MfgError::InvalidProblem("initial density has zero mass".into()));
    }
    Ok(rho.scale(1.0 / mass))
}

fn gaussian(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Gaussian density on a circle of circumference `length`, summed over the
/// five periodic images nearest to the minimum-image displacement.
pub fn wrapped_gaussian(x: f64, mean: f64, sigma: f64, length: f64) -> f64 {
    let d = (x - mean).rem_euclid(length);
    let d = if d >= 0.5 * length { d - length } else { d };
    (-2..=2).map(|k| gaussian(d + k as f64 * length, 0.0, sigma)).sum()
}

/// Builtin initial densities; sampled then renormalized to unit mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    Gaussian { mean: f64, sigma: f64 },
}

impl DensitySpec {
    pub fn sample(&self, grid: &Grid) -> Result<SpatialField> {
        let raw = match *self {
            DensitySpec::Uniform => SpatialField::constant(*grid, 1.0),
            DensitySpec::Gaussian { mean, sigma } => {
                if !(sigma > 0.0) {
                    return Err(MfgError::InvalidParameter(format!(
                        "Gaussian sigma must be positive, got {sigma}"
                    )));
                }
                let len = grid.length();
                SpatialField::from_fn(*grid, |x| wrapped_gaussian(x, mean, sigma, len))
            }
        };
        normalize_density(&raw)
    }
}

/// Builtin ambient potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    /// `0.1 (sin(2 pi x - sin(4 pi x)) + exp(cos(2 pi x)))`.
    SmoothPeriodic,
    /// `exp(sin(2 pi x))`.
    ExpSine,
    /// `exp(x) sin(2 pi k x)`.
    ExpXSine { freq: f64 },
    /// `0.1 (exp(sin(2 pi x^3)) + (x + 1)(x - 1)(x - 0.5) - 2)`.
    CubicMix,
    /// Oscillatory pieces, a smooth bump and two jumps on `[0, 1]`.
    Multiscale,
}

impl PotentialSpec {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "zero" => PotentialSpec::Zero,
            "smooth_periodic" => PotentialSpec::SmoothPeriodic,
            "exp_sine" => PotentialSpec::ExpSine,
            "exp_x_sine" => PotentialSpec::ExpXSine { freq: 1.0 },
            "cubic_mix" => PotentialSpec::CubicMix,
            "multiscale" => PotentialSpec::Multiscale,
            other => return Err(MfgError::UnknownBuiltin(other.to_string())),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::Constant { value } => value,
            PotentialSpec::SmoothPeriodic => {
                0.1 * ((TAU * x - (2.0 * TAU * x).sin()).sin() + (TAU * x).cos().exp())
            }
            PotentialSpec::ExpSine => (TAU * x).sin().exp(),
            PotentialSpec::ExpXSine { freq } => x.exp() * (TAU * freq * x).sin(),
            PotentialSpec::CubicMix => {
                0.1 * ((TAU * x.powi(3)).sin().exp() + (x + 1.0) * (x - 1.0) * (x - 0.5) - 2.0)
            }
            PotentialSpec::Multiscale => {
                let ind = |c: bool| if c { 1.0 } else { 0.0 };
                (ind(x < 0.4) + ind(x > 0.7)) * ((10.0 * TAU * x).sin() * (-10.0 * (x - 0.5).powi(2)).exp())
                    + ind(0.4 < x && x < 0.7) * (-x.exp())
                    + ind(x > 0.7) * (0.2 * (50.0 * TAU * x).sin())
                    - ind(0.3 < x && x < 0.35)
                    + ind(0.6 < x && x < 0.65)
            }
        }
    }

    pub fn sample(&self, grid: &Grid) -> SpatialField {
        SpatialField::from_fn(*grid, |x| self.eval(x))
    }
}
