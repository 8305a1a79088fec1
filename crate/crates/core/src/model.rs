//! Game data and the L^alpha-norm drift.
//!
//! A [`ModelSpec`] bundles the pair-interaction kernel b(t, x, y, u), the
//! control-independent diffusion, per-player costs and risk indices, and the
//! initial law. The effective drift is the alpha-norm of the kernel against
//! the state law,
//!
//! ```text
//! b_bar(t, x, m, u) = ( \int |b(t, x, y, u)|^alpha m(dy) )^(1/alpha) >= 0,
//! ```
//!
//! together with its x-derivative (subgradient selection 0 where the norm
//! vanishes) and the risk-neutral / risk-sensitive Hamiltonians.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::measure::{alpha_norm, AlphaPow, EmpiricalMeasure};
use crate::noise::InitialLaw;

pub type KernelFn = Arc<dyn Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync>;
pub type DiffusionFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type RunningCostFn = Arc<dyn Fn(f64, f64, &EmpiricalMeasure, &[f64]) -> f64 + Send + Sync>;
pub type TerminalCostFn = Arc<dyn Fn(f64, &EmpiricalMeasure) -> f64 + Send + Sync>;
/// x-local form of the Gateaux direction-kernel derivative: x, m -> value.
pub type MeasureDerivFn = Arc<dyn Fn(f64, &EmpiricalMeasure) -> f64 + Send + Sync>;
/// Unclamped candidate best response: (t, x, m, p_star) -> control.
pub type BestResponseFn = Arc<dyn Fn(f64, f64, &EmpiricalMeasure, f64) -> f64 + Send + Sync>;

/// Structural form of the interaction kernel; selects the evaluation path
/// for the measure integral in the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelForm {
    /// Full (t, x, y, u) dependence: the integral is an O(n) sum per call.
    Pair,
    /// No y dependence: the integral collapses to |b(t, x, ., u)|.
    StateOnly,
    /// b(t, x, y, u) = y * factor(t, x, u): the integral factorises into
    /// |factor| * alpha_norm(m). `factor` is recovered as b(t, x, 1, u).
    MultiplicativeInY,
}

/// Interaction kernel plus optional analytic partial derivatives. Missing
/// derivatives fall back to central finite differences.
#[derive(Clone)]
pub struct DriftKernel {
    pub form: KernelForm,
    pub b: KernelFn,
    pub b_x: Option<KernelFn>,
    pub b_y: Option<KernelFn>,
}

impl DriftKernel {
    pub fn pair(b: KernelFn) -> Self {
        Self { form: KernelForm::Pair, b, b_x: None, b_y: None }
    }

    pub fn state_only(b: KernelFn) -> Self {
        Self { form: KernelForm::StateOnly, b, b_x: None, b_y: None }
    }

    pub fn multiplicative(b: KernelFn) -> Self {
        Self { form: KernelForm::MultiplicativeInY, b, b_x: None, b_y: None }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64, u: &[f64]) -> f64 {
        (self.b)(t, x, y, u)
    }

    /// d b / d x, analytic when supplied, else central finite difference with
    /// step 1e-5 * max(1, |x|).
    pub fn eval_x(&self, t: f64, x: f64, y: f64, u: &[f64]) -> f64 {
        match &self.b_x {
            Some(f) => f(t, x, y, u),
            None => {
                let h = 1e-5 * x.abs().max(1.0);
                ((self.b)(t, x + h, y, u) - (self.b)(t, x - h, y, u)) / (2.0 * h)
            }
        }
    }

    /// d b / d y, analytic when supplied, else central finite difference.
    pub fn eval_y(&self, t: f64, x: f64, y: f64, u: &[f64]) -> f64 {
        match &self.b_y {
            Some(f) => f(t, x, y, u),
            None => {
                let h = 1e-5 * y.abs().max(1.0);
                ((self.b)(t, x, y + h, u) - (self.b)(t, x, y - h, u)) / (2.0 * h)
            }
        }
    }
}

/// Per-player datum: costs, risk index, control box, optional analytic
/// derivative hooks and mean-field structure declarations.
#[derive(Clone)]
pub struct PlayerSpec {
    pub running_cost: RunningCostFn,
    /// d f / d x; finite difference fallback when absent.
    pub running_cost_x: Option<RunningCostFn>,
    /// x-local form of d_x f_m(.)(x); None declares f mean-field free.
    pub running_m_dx: Option<RunningCostFn>,
    pub terminal_cost: TerminalCostFn,
    /// d h / d x; finite difference fallback when absent.
    pub terminal_cost_x: Option<TerminalCostFn>,
    /// x-local form of d_x h_m(.)(x); None declares h mean-field free.
    pub terminal_m_dx: Option<TerminalCostFn>,
    /// Risk-sensitivity index; 0 selects the risk-neutral branch everywhere.
    pub theta: f64,
    /// Closed control interval [lo, hi].
    pub control_box: (f64, f64),
    /// Unclamped Hamiltonian argmin in the starred convention; grid search
    /// fallback when absent.
    pub best_response: Option<BestResponseFn>,
}

impl PlayerSpec {
    /// Risk index `theta`, box `[lo, hi]`, quadratic effort cost and zero
    /// terminal cost; a convenient starting point for fixtures.
    pub fn quadratic_effort(theta: f64, lo: f64, hi: f64) -> Self {
        Self {
            running_cost: Arc::new(|_t, _x, _m, u| 0.5 * u[0] * u[0]),
            running_cost_x: Some(Arc::new(|_, _, _, _| 0.0)),
            running_m_dx: None,
            terminal_cost: Arc::new(|_x, _m| 0.0),
            terminal_cost_x: Some(Arc::new(|_, _| 0.0)),
            terminal_m_dx: None,
            theta,
            control_box: (lo, hi),
            best_response: None,
        }
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.control_box.0, self.control_box.1)
    }

    pub fn in_box(&self, u: f64) -> bool {
        u >= self.control_box.0 - 1e-12 && u <= self.control_box.1 + 1e-12
    }
}

/// The full game datum.
#[derive(Clone)]
pub struct ModelSpec {
    pub alpha: f64,
    pub horizon: f64,
    pub kernel: DriftKernel,
    pub diffusion: DiffusionFn,
    /// d sigma / d x; finite difference fallback when absent.
    pub diffusion_x: Option<DiffusionFn>,
    pub players: Vec<PlayerSpec>,
    pub initial_law: InitialLaw,
    /// Lower bound applied to the state after each Euler step (count-valued
    /// models); None leaves the state unconstrained.
    pub state_floor: Option<f64>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 1.0 {
            return Err(CoreError::AlphaOutOfRange(self.alpha));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "horizon {} must be > 0",
                self.horizon
            )));
        }
        if self.players.is_empty() {
            return Err(CoreError::InvalidParams("at least one player".into()));
        }
        for (i, p) in self.players.iter().enumerate() {
            if p.control_box.0 > p.control_box.1 {
                return Err(CoreError::InvalidParams(format!(
                    "empty control box for player {i}"
                )));
            }
        }
        self.initial_law.validate()
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    pub fn sigma_x(&self, t: f64, x: f64) -> f64 {
        match &self.diffusion_x {
            Some(f) => f(t, x),
            None => {
                let h = 1e-5 * x.abs().max(1.0);
                (self.sigma(t, x + h) - self.sigma(t, x - h)) / (2.0 * h)
            }
        }
    }

    pub fn running_cost(&self, i: usize, t: f64, x: f64, m: &EmpiricalMeasure, u: &[f64]) -> f64 {
        (self.players[i].running_cost)(t, x, m, u)
    }

    pub fn running_cost_x(
        &self,
        i: usize,
        t: f64,
        x: f64,
        m: &EmpiricalMeasure,
        u: &[f64],
    ) -> f64 {
        match &self.players[i].running_cost_x {
            Some(f) => f(t, x, m, u),
            None => {
                let h = 1e-5 * x.abs().max(1.0);
                let f = &self.players[i].running_cost;
                (f(t, x + h, m, u) - f(t, x - h, m, u)) / (2.0 * h)
            }
        }
    }

    pub fn terminal_cost(&self, i: usize, x: f64, m: &EmpiricalMeasure) -> f64 {
        (self.players[i].terminal_cost)(x, m)
    }

    pub fn terminal_cost_x(&self, i: usize, x: f64, m: &EmpiricalMeasure) -> f64 {
        match &self.players[i].terminal_cost_x {
            Some(f) => f(x, m),
            None => {
                let h = 1e-5 * x.abs().max(1.0);
                let f = &self.players[i].terminal_cost;
                (f(x + h, m) - f(x - h, m)) / (2.0 * h)
            }
        }
    }

    fn check_controls(&self, u: &[f64]) -> Result<()> {
        for (i, p) in self.players.iter().enumerate() {
            if !p.in_box(u[i]) {
                return Err(CoreError::ControlOutOfBox {
                    player: i,
                    value: u[i],
                    lo: p.control_box.0,
                    hi: p.control_box.1,
                });
            }
        }
        Ok(())
    }
}

/// Drift context precomputed once per (step, measure): lets the inner particle
/// loop skip repeated measure reductions for the structured kernel forms.
#[derive(Debug, Clone, Copy)]
pub struct DriftContext {
    /// alpha-norm of the measure, used by the multiplicative form.
    pub measure_norm: f64,
}

impl DriftContext {
    pub fn prepare(spec: &ModelSpec, m: &EmpiricalMeasure) -> Result<Self> {
        let measure_norm = match spec.kernel.form {
            KernelForm::MultiplicativeInY => alpha_norm(m, spec.alpha)?,
            _ => 0.0,
        };
        Ok(Self { measure_norm })
    }
}

/// Raw alpha-norm drift evaluation against a prepared context. Does not check
/// control boxes; `barred_drift` is the checked public entry point.
pub fn barred_drift_with(
    spec: &ModelSpec,
    ctx: &DriftContext,
    t: f64,
    x: f64,
    m: &EmpiricalMeasure,
    u: &[f64],
) -> f64 {
    let pow = AlphaPow::new(spec.alpha);
    match spec.kernel.form {
        KernelForm::StateOnly => spec.kernel.eval(t, x, 0.0, u).abs(),
        KernelForm::MultiplicativeInY => spec.kernel.eval(t, x, 1.0, u).abs() * ctx.measure_norm,
        KernelForm::Pair => {
            let samples = m.samples();
            let sum: f64 = samples
                .iter()
                .map(|&y| pow.abs_pow(spec.kernel.eval(t, x, y, u)))
                .sum();
            pow.root(sum / samples.len() as f64)
        }
    }
}

/// The L^alpha-norm drift b_bar(t, x, m, u) >= 0.
pub fn barred_drift(
    spec: &ModelSpec,
    t: f64,
    x: f64,
    m: &EmpiricalMeasure,
    u: &[f64],
) -> Result<f64> {
    if m.len() == 0 {
        return Err(CoreError::EmptyMeasure);
    }
    spec.check_controls(u)?;
    let ctx = DriftContext::prepare(spec, m)?;
    Ok(barred_drift_with(spec, &ctx, t, x, m, u))
}

/// x-derivative of the alpha-norm drift,
/// [ \int b_x |b|^(alpha-1) sign(b) m(dy) ] / b_bar^(alpha-1),
/// with the subgradient selection 0 where b_bar vanishes.
pub fn barred_drift_x(
    spec: &ModelSpec,
    t: f64,
    x: f64,
    m: &EmpiricalMeasure,
    u: &[f64],
) -> Result<f64> {
    if m.len() == 0 {
        return Err(CoreError::EmptyMeasure);
    }
    spec.check_controls(u)?;
    let ctx = DriftContext::prepare(spec, m)?;
    let bbar = barred_drift_with(spec, &ctx, t, x, m, u);
    if bbar <= 0.0 {
        return Ok(0.0);
    }
    match spec.kernel.form {
        KernelForm::StateOnly => {
            let b = spec.kernel.eval(t, x, 0.0, u);
            Ok(spec.kernel.eval_x(t, x, 0.0, u) * b.signum())
        }
        KernelForm::MultiplicativeInY => {
            // b_bar = |factor(t, x, u)| * ||m||_alpha
            let f = spec.kernel.eval(t, x, 1.0, u);
            Ok(spec.kernel.eval_x(t, x, 1.0, u) * f.signum() * ctx.measure_norm)
        }
        KernelForm::Pair => {
            let samples = m.samples();
            let mut num = 0.0;
            for &y in samples {
                let b = spec.kernel.eval(t, x, y, u);
                let bx = spec.kernel.eval_x(t, x, y, u);
                num += bx * pow_signed(b, spec.alpha - 1.0);
            }
            num /= samples.len() as f64;
            Ok(num / bbar.powf(spec.alpha - 1.0))
        }
    }
}

/// |v|^p * sign(v); p = 0 gives sign(v) with the convention sign(0) = 0.
#[inline]
pub fn pow_signed(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    if p == 0.0 {
        v.signum()
    } else if p == 1.0 {
        v
    } else {
        v.abs().powf(p) * v.signum()
    }
}

/// Risk-neutral Hamiltonian H = b_bar p + sigma q - f_i (the -f convention:
/// the principle maximises H).
pub fn hamiltonian(
    spec: &ModelSpec,
    i: usize,
    t: f64,
    x: f64,
    m: &EmpiricalMeasure,
    u: &[f64],
    p: f64,
    q: f64,
) -> Result<f64> {
    let bbar = barred_drift(spec, t, x, m, u)?;
    Ok(bbar * p + spec.sigma(t, x) * q - spec.running_cost(i, t, x, m, u))
}

/// Risk-sensitive Hamiltonian H^theta = b_bar p + sigma (q + theta ell p) - f_i.
/// With theta_i = 0 or ell = 0 this reduces to `hamiltonian`.
#[allow(clippy::too_many_arguments)]
pub fn rs_hamiltonian(
    spec: &ModelSpec,
    i: usize,
    t: f64,
    x: f64,
    m: &EmpiricalMeasure,
    u: &[f64],
    p: f64,
    q: f64,
    ell: f64,
) -> Result<f64> {
    let bbar = barred_drift(spec, t, x, m, u)?;
    let theta = spec.players[i].theta;
    Ok(bbar * p + spec.sigma(t, x) * (q + theta * ell * p) - spec.running_cost(i, t, x, m, u))
}

/// Signed zero-mass direction d = plus - minus for Gateaux differentiation.
#[derive(Debug, Clone)]
pub struct GateauxDirection {
    pub plus: EmpiricalMeasure,
    pub minus: EmpiricalMeasure,
}

impl GateauxDirection {
    pub fn new(plus: EmpiricalMeasure, minus: EmpiricalMeasure) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(CoreError::InvalidDirection(format!(
                "plus has {} samples, minus has {} (zero net mass requires equal counts)",
                plus.len(),
                minus.len()
            )));
        }
        Ok(Self { plus, minus })
    }

    /// \int g d(d) for a pointwise integrand.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let k = self.plus.len() as f64;
        let p: f64 = self.plus.samples().iter().map(|&v| g(v)).sum();
        let m: f64 = self.minus.samples().iter().map(|&v| g(v)).sum();
        (p - m) / k
    }
}
