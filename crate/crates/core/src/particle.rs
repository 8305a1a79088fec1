//! Interacting-particle simulation of the McKean-Vlasov state equation.
//!
//! `simulate_particles` integrates the coupled system
//!
//! ```text
//! x_i(t+dt) = x_i(t) + ( (1/n) sum_j |b(t, x_i, x_j, u)|^alpha )^(1/alpha) dt
//!             + sigma(t, x_i) dB_i,
//! ```
//!
//! alongside the per-player auxiliary running-cost states dz = f_i dt.
//! `simulate_frozen_flow` drives n mutually independent copies against a
//! frozen measure flow, and `mckv_picard` iterates the frozen-flow map to the
//! McKean-Vlasov fixed point under common random numbers.
//!
//! Determinism contract: all draws are addressed by (seed, particle, step),
//! so identical inputs reproduce ensembles bit-identically at any level of
//! particle parallelism.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::measure::{wasserstein, EmpiricalMeasure};
use crate::model::{barred_drift_with, DriftContext, ModelSpec};
use crate::noise::NoiseLayout;

/// Hard cap on |x|; crossing it aborts the run as a blow-up.
pub const BLOWUP_GUARD: f64 = 1e6;

/// Sequential/parallel threshold: below this much per-step work the particle
/// loop stays sequential.
const PAR_MIN_WORK: usize = 1 << 14;

/// One Euler-Maruyama update.
pub fn em_step(x: f64, drift: f64, diff: f64, dt: f64, dw: f64) -> Result<f64> {
    let next = x + drift * dt + diff * dw;
    if next.is_finite() {
        Ok(next)
    } else {
        Err(CoreError::NonFiniteValue(next))
    }
}

/// Feedback control law per player: u_p = policy(p, k, t_k, x, m(t_k)).
pub trait ControlLaw: Sync {
    fn control(&self, player: usize, step: usize, t: f64, x: f64, m: &EmpiricalMeasure) -> f64;
}

/// Control law from a plain closure.
pub struct FnPolicy<F>(pub F);

impl<F> ControlLaw for FnPolicy<F>
where
    F: Fn(usize, usize, f64, f64, &EmpiricalMeasure) -> f64 + Sync,
{
    fn control(&self, player: usize, step: usize, t: f64, x: f64, m: &EmpiricalMeasure) -> f64 {
        (self.0)(player, step, t, x, m)
    }
}

/// Constant control profile.
pub struct ConstantPolicy(pub Vec<f64>);

impl ControlLaw for ConstantPolicy {
    fn control(&self, player: usize, _k: usize, _t: f64, _x: f64, _m: &EmpiricalMeasure) -> f64 {
        self.0[player]
    }
}

/// Time-gridded particle states, auxiliary cost states, and the played
/// controls, all reproducible from (spec, policy, n, grid, seed).
pub struct ParticleEnsemble {
    grid: TimeGrid,
    n_particles: usize,
    n_players: usize,
    /// step-major: states[k * n + i]
    states: Vec<f64>,
    /// aux_z[(p * (K+1) + k) * n + i]
    aux_z: Vec<f64>,
    /// controls[(p * K + k) * n + i]; played at step k
    controls: Vec<f64>,
    noise_seed: u64,
}

impl ParticleEnsemble {
    /// Build an ensemble from raw step-major states (no aux states, no
    /// controls). Used by diagnostics that operate on externally produced
    /// state tables, e.g. exchangeability negative controls.
    pub fn from_states(grid: TimeGrid, n_particles: usize, states: Vec<f64>) -> Result<Self> {
        if states.len() != grid.n_nodes() * n_particles {
            return Err(CoreError::InvalidParams(format!(
                "states length {} does not match {} nodes x {} particles",
                states.len(),
                grid.n_nodes(),
                n_particles
            )));
        }
        Ok(Self {
            grid,
            n_particles,
            n_players: 0,
            states,
            aux_z: Vec::new(),
            controls: Vec::new(),
            noise_seed: 0,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn seed(&self) -> u64 {
        self.noise_seed
    }

    pub fn layout(&self) -> NoiseLayout {
        NoiseLayout::new(self.noise_seed)
    }

    /// State of particle i at grid node k.
    pub fn x(&self, particle: usize, step: usize) -> f64 {
        self.states[step * self.n_particles + particle]
    }

    /// All states at grid node k.
    pub fn states_at(&self, step: usize) -> &[f64] {
        &self.states[step * self.n_particles..(step + 1) * self.n_particles]
    }

    /// Auxiliary running-cost state z_{player} of particle i at node k.
    pub fn z(&self, player: usize, particle: usize, step: usize) -> f64 {
        self.aux_z[(player * self.grid.n_nodes() + step) * self.n_particles + particle]
    }

    pub fn z_at(&self, player: usize, step: usize) -> &[f64] {
        let base = (player * self.grid.n_nodes() + step) * self.n_particles;
        &self.aux_z[base..base + self.n_particles]
    }

    /// Control played by `player` for particle i at step k (k < n_steps).
    pub fn control(&self, player: usize, particle: usize, step: usize) -> f64 {
        self.controls[(player * self.grid.n_steps() + step) * self.n_particles + particle]
    }

    /// Control profile of particle i at step k.
    pub fn control_profile(&self, particle: usize, step: usize) -> Vec<f64> {
        (0..self.n_players)
            .map(|p| self.control(p, particle, step))
            .collect()
    }

    /// Brownian increment consumed by particle i over [t_k, t_{k+1}].
    pub fn brownian_increment(&self, particle: usize, step: usize) -> f64 {
        self.layout().step_normal(particle, step) * self.grid.dt().sqrt()
    }

    /// Empirical measure of the ensemble at node k.
    pub fn measure_at(&self, step: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::from_samples(self.states_at(step))
            .expect("ensemble states are finite and nonempty")
    }

    /// Per-node empirical measures.
    pub fn empirical_flow(&self) -> MeasureFlow {
        let measures = (0..self.grid.n_nodes()).map(|k| self.measure_at(k)).collect();
        MeasureFlow {
            grid: self.grid.clone(),
            measures,
        }
    }
}

/// A measure-valued path on the grid: one empirical measure per node.
#[derive(Debug, Clone)]
pub struct MeasureFlow {
    pub grid: TimeGrid,
    pub measures: Vec<EmpiricalMeasure>,
}

impl MeasureFlow {
    /// Constant-in-time flow.
    pub fn constant(grid: TimeGrid, m: EmpiricalMeasure) -> Self {
        let measures = vec![m; grid.n_nodes()];
        Self { grid, measures }
    }

    /// Block-mean quantile compression of every node measure.
    pub fn compressed(&self, q: usize) -> Self {
        Self {
            grid: self.grid.clone(),
            measures: self.measures.iter().map(|m| m.compress(q)).collect(),
        }
    }

    fn matches(&self, grid: &TimeGrid) -> bool {
        self.grid.n_steps() == grid.n_steps()
            && (self.grid.dt() - grid.dt()).abs() <= 1e-12 * grid.dt()
    }
}

enum Coupling<'a> {
    /// Drift against the ensemble's own empirical measure.
    Interacting,
    /// Drift against a frozen flow.
    Frozen(&'a MeasureFlow),
}

/// Simulate the interacting particle system under `policy`.
pub fn simulate_particles(
    spec: &ModelSpec,
    policy: &dyn ControlLaw,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<ParticleEnsemble> {
    simulate(spec, policy, n, grid, seed, Coupling::Interacting)
}

/// Simulate n mutually independent particles driven by a frozen measure flow.
pub fn simulate_frozen_flow(
    spec: &ModelSpec,
    policy: &dyn ControlLaw,
    flow: &MeasureFlow,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if !flow.matches(grid) {
        return Err(CoreError::GridMismatch);
    }
    simulate(spec, policy, n, grid, seed, Coupling::Frozen(flow))
}

fn simulate(
    spec: &ModelSpec,
    policy: &dyn ControlLaw,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
    coupling: Coupling<'_>,
) -> Result<ParticleEnsemble> {
    spec.validate()?;
    if n == 0 {
        return Err(CoreError::InvalidParams("n must be >= 1".into()));
    }
    let n_players = spec.n_players();
    let k_steps = grid.n_steps();
    let nodes = grid.n_nodes();
    let layout = NoiseLayout::new(seed);
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();

    let mut states = vec![0.0; nodes * n];
    let mut aux_z = vec![0.0; n_players * nodes * n];
    let mut controls = vec![0.0; n_players * k_steps * n];

    for i in 0..n {
        let (u, zdraw) = layout.init_draws(i);
        let mut x0 = spec.initial_law.sample(u, zdraw);
        if let Some(floor) = spec.state_floor {
            x0 = x0.max(floor);
        }
        if !x0.is_finite() {
            return Err(CoreError::NonFiniteValue(x0));
        }
        states[i] = x0;
    }

    struct StepOut {
        x_next: f64,
        u: Vec<f64>,
        f: Vec<f64>,
    }

    for k in 0..k_steps {
        let t = grid.t(k);
        let own_measure;
        let m_k: &EmpiricalMeasure = match &coupling {
            Coupling::Interacting => {
                own_measure = EmpiricalMeasure::from_samples(&states[k * n..(k + 1) * n])?;
                &own_measure
            }
            Coupling::Frozen(flow) => &flow.measures[k],
        };
        let ctx = DriftContext::prepare(spec, m_k)?;

        let step_one = |i: usize| -> Result<StepOut> {
            let x = states[k * n + i];
            let mut u = Vec::with_capacity(n_players);
            for (p, player) in spec.players.iter().enumerate() {
                let v = policy.control(p, k, t, x, m_k);
                if !player.in_box(v) {
                    return Err(CoreError::PolicyOutOfBox {
                        player: p,
                        value: v,
                        lo: player.control_box.0,
                        hi: player.control_box.1,
                    });
                }
                u.push(player.clamp(v));
            }
            let drift = barred_drift_with(spec, &ctx, t, x, m_k, &u);
            let diff = spec.sigma(t, x);
            let dw = layout.step_normal(i, k) * sqrt_dt;
            let mut x_next = em_step(x, drift, diff, dt, dw)
                .map_err(|_| CoreError::NonFiniteResult { particle: i, step: k })?;
            if let Some(floor) = spec.state_floor {
                x_next = x_next.max(floor);
            }
            if x_next.abs() > BLOWUP_GUARD {
                return Err(CoreError::NonFiniteResult { particle: i, step: k });
            }
            let f = (0..n_players)
                .map(|p| spec.running_cost(p, t, x, m_k, &u))
                .collect();
            Ok(StepOut { x_next, u, f })
        };

        let work = n * m_k.len().max(1);
        let outs: Vec<StepOut> = if work >= PAR_MIN_WORK {
            (0..n)
                .into_par_iter()
                .map(step_one)
                .collect::<Result<Vec<_>>>()?
        } else {
            (0..n).map(step_one).collect::<Result<Vec<_>>>()?
        };

        for (i, out) in outs.into_iter().enumerate() {
            states[(k + 1) * n + i] = out.x_next;
            for p in 0..n_players {
                let z_now = aux_z[(p * nodes + k) * n + i];
                aux_z[(p * nodes + k + 1) * n + i] = z_now + out.f[p] * dt;
                controls[(p * k_steps + k) * n + i] = out.u[p];
            }
        }
    }

    Ok(ParticleEnsemble {
        grid: grid.clone(),
        n_particles: n,
        n_players,
        states,
        aux_z,
        controls,
        noise_seed: seed,
    })
}

/// Plain (measure-free) Euler-Maruyama paths dx = drift(t, x) dt + sigma dB;
/// used by the scenario variants the case study states without a mean-field
/// term. Shares the noise layout, so runs couple pathwise with the
/// interacting variants under a common seed.
pub fn simulate_direct(
    drift: &(dyn Fn(f64, f64) -> f64 + Sync),
    sigma: f64,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
    initial_law: &crate::noise::InitialLaw,
    state_floor: Option<f64>,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(CoreError::InvalidParams("n must be >= 1".into()));
    }
    initial_law.validate()?;
    let layout = NoiseLayout::new(seed);
    let k_steps = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut states = vec![0.0; grid.n_nodes() * n];
    for i in 0..n {
        let (u, z) = layout.init_draws(i);
        let mut x0 = initial_law.sample(u, z);
        if let Some(floor) = state_floor {
            x0 = x0.max(floor);
        }
        states[i] = x0;
    }
    for k in 0..k_steps {
        let t = grid.t(k);
        for i in 0..n {
            let x = states[k * n + i];
            let dw = layout.step_normal(i, k) * sqrt_dt;
            let mut next = em_step(x, drift(t, x), sigma, dt, dw)
                .map_err(|_| CoreError::NonFiniteResult { particle: i, step: k })?;
            if let Some(floor) = state_floor {
                next = next.max(floor);
            }
            if next.abs() > BLOWUP_GUARD {
                return Err(CoreError::NonFiniteResult { particle: i, step: k });
            }
            states[(k + 1) * n + i] = next;
        }
    }
    Ok(ParticleEnsemble {
        grid: grid.clone(),
        n_particles: n,
        n_players: 0,
        states,
        aux_z: Vec::new(),
        controls: Vec::new(),
        noise_seed: seed,
    })
}

/// Outcome of the McKean-Vlasov Picard iteration.
#[derive(Debug, Clone)]
pub struct PicardResult {
    pub flow: MeasureFlow,
    /// sup_t d_1 between consecutive iterate flows.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Atom budget for the frozen-drift evaluation inside the Picard loop and
/// the chaos couplings. Residuals are always measured on full flows.
pub const FLOW_COMPRESSION: usize = 256;

/// Iterate flow -> law(frozen-flow simulation) under common random numbers
/// until sup_t d_1 between consecutive flows drops below `tol`.
pub fn mckv_picard(
    spec: &ModelSpec,
    policy: &dyn ControlLaw,
    n: usize,
    grid: &TimeGrid,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardResult> {
    if !(tol > 0.0) {
        return Err(CoreError::InvalidParams(format!("tol {tol} must be > 0")));
    }
    if max_iter == 0 {
        return Err(CoreError::InvalidParams("max_iter must be >= 1".into()));
    }
    let layout = NoiseLayout::new(seed);
    let init: Vec<f64> = (0..n)
        .map(|i| {
            let (u, z) = layout.init_draws(i);
            let mut x = spec.initial_law.sample(u, z);
            if let Some(floor) = spec.state_floor {
                x = x.max(floor);
            }
            x
        })
        .collect();
    let mut flow = MeasureFlow::constant(grid.clone(), EmpiricalMeasure::from_samples(&init)?);

    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter {
        let frozen =
            simulate_frozen_flow(spec, policy, &flow.compressed(FLOW_COMPRESSION), n, grid, seed)?;
        let new_flow = frozen.empirical_flow();
        let mut residual: f64 = 0.0;
        for (a, b) in new_flow.measures.iter().zip(&flow.measures) {
            residual = residual.max(wasserstein(a, b, 1.0)?);
        }
        residuals.push(residual);
        flow = new_flow;
        if residual < tol {
            converged = true;
            break;
        }
    }
    Ok(PicardResult {
        flow,
        residuals,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftKernel, KernelForm, PlayerSpec};
    use crate::noise::InitialLaw;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn frozen_spec() -> ModelSpec {
        ModelSpec {
            alpha: 1.2,
            horizon: 1.0,
            kernel: DriftKernel::pair(Arc::new(|_, _, _, _| 0.0)),
            diffusion: Arc::new(|_, _| 0.0),
            diffusion_x: Some(Arc::new(|_, _| 0.0)),
            players: vec![PlayerSpec::quadratic_effort(0.0, -1.0, 1.0)],
            initial_law: InitialLaw::Uniform { lo: -1.0, hi: 1.0 },
            state_floor: None,
        }
    }

    fn cooperative(mu: f64, sigma: f64, alpha: f64) -> ModelSpec {
        let mut spec = frozen_spec();
        spec.alpha = alpha;
        spec.kernel = DriftKernel {
            form: KernelForm::Pair,
            b: Arc::new(move |_t, x, y, u| u[0] - mu * (x - y).sin()),
            b_x: Some(Arc::new(move |_t, x, y, _u| -mu * (x - y).cos())),
            b_y: Some(Arc::new(move |_t, x, y, _u| mu * (x - y).cos())),
        };
        spec.diffusion = Arc::new(move |_, _| sigma);
        spec.initial_law = InitialLaw::Gaussian { mean: 0.0, std: 0.5 };
        spec
    }

    #[test]
    fn em_step_examples() {
        assert_eq!(em_step(2.0, 0.0, 0.0, 0.1, 0.3).unwrap(), 2.0);
        assert_relative_eq!(em_step(0.0, 1.0, 0.0, 0.1, 0.0).unwrap(), 0.1);
        assert_relative_eq!(em_step(1.0, 2.0, 3.0, 0.01, 0.05).unwrap(), 1.17);
        assert!(em_step(1.0, f64::INFINITY, 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn frozen_dynamics_keep_states_and_z_constant() {
        let spec = frozen_spec();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let ens = simulate_particles(&spec, &policy, 16, &grid, 3).unwrap();
        for i in 0..16 {
            for k in 0..=20 {
                assert_eq!(ens.x(i, k), ens.x(i, 0));
            }
            assert_eq!(ens.z(0, i, 20), 0.0);
        }
    }

    #[test]
    fn single_particle_reduces_to_own_state_kernel() {
        // n = 1: empirical measure is delta_{x_1}, drift |b(t, x, x, u)|
        let mut spec = frozen_spec();
        spec.kernel = DriftKernel::pair(Arc::new(|_t, x, y, _u| 1.0 + 0.5 * (x * y).cos()));
        spec.initial_law = InitialLaw::Point(0.7);
        let grid = TimeGrid::new(0.1, 4).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let ens = simulate_particles(&spec, &policy, 1, &grid, 11).unwrap();
        let mut x = 0.7f64;
        for _ in 0..4 {
            let drift = (1.0 + 0.5 * (x * x).cos()).abs();
            x += drift * grid.dt();
        }
        assert_relative_eq!(ens.x(0, 4), x, max_relative = 1e-12);
    }

    #[test]
    fn seed_determinism_across_parallelism() {
        let spec = cooperative(1.0, 0.1, 1.2);
        let grid = TimeGrid::new(0.5, 8).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let baseline = simulate_particles(&spec, &policy, 96, &grid, 2024).unwrap();
        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let ens = pool.install(|| simulate_particles(&spec, &policy, 96, &grid, 2024).unwrap());
            assert_eq!(ens.states_at(8), baseline.states_at(8));
            for (a, b) in ens
                .states
                .iter()
                .zip(baseline.states.iter())
            {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn frozen_flow_of_point_masses_uses_kernel_at_atom() {
        let mut spec = frozen_spec();
        spec.kernel = DriftKernel::pair(Arc::new(|_t, _x, y, _u| y));
        spec.initial_law = InitialLaw::Point(0.0);
        let grid = TimeGrid::new(0.2, 2).unwrap();
        let c = 1.5;
        let flow = MeasureFlow::constant(grid.clone(), EmpiricalMeasure::dirac(c).unwrap());
        let policy = ConstantPolicy(vec![0.0]);
        let ens = simulate_frozen_flow(&spec, &policy, &flow, 4, &grid, 5).unwrap();
        // drift |b(., c)| = 1.5 regardless of own state
        for i in 0..4 {
            assert_relative_eq!(ens.x(i, 2), 0.0 + 1.5 * 0.2, max_relative = 1e-12);
        }
    }

    #[test]
    fn frozen_flow_grid_mismatch_rejected() {
        let spec = frozen_spec();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let other = TimeGrid::new(1.0, 20).unwrap();
        let flow = MeasureFlow::constant(other, EmpiricalMeasure::dirac(0.0).unwrap());
        let policy = ConstantPolicy(vec![0.0]);
        assert!(matches!(
            simulate_frozen_flow(&spec, &policy, &flow, 4, &grid, 5),
            Err(CoreError::GridMismatch)
        ));
    }

    #[test]
    fn coupling_free_case_matches_interacting_under_same_seed() {
        // b == 0: frozen and interacting particles see identical dynamics
        let mut spec = frozen_spec();
        spec.diffusion = Arc::new(|_, _| 0.3);
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let inter = simulate_particles(&spec, &policy, 32, &grid, 77).unwrap();
        let flow = inter.empirical_flow();
        let frozen = simulate_frozen_flow(&spec, &policy, &flow, 32, &grid, 77).unwrap();
        for i in 0..32 {
            for k in 0..=16 {
                assert_eq!(inter.x(i, k).to_bits(), frozen.x(i, k).to_bits());
            }
        }
    }

    #[test]
    fn aux_z_is_left_riemann_sum_of_running_cost() {
        let mut spec = cooperative(1.0, 0.2, 1.2);
        spec.players[0].running_cost = Arc::new(|_t, x, m, _u| x * x + m.mean());
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let ens = simulate_particles(&spec, &policy, 24, &grid, 9).unwrap();
        for i in 0..24 {
            let mut z = 0.0;
            for k in 0..10 {
                let m = ens.measure_at(k);
                let x = ens.x(i, k);
                z += (x * x + m.mean()) * grid.dt();
            }
            assert_relative_eq!(ens.z(0, i, 10), z, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn policy_out_of_box_detected() {
        let spec = frozen_spec(); // box [-1, 1]
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let policy = ConstantPolicy(vec![2.0]);
        assert!(matches!(
            simulate_particles(&spec, &policy, 4, &grid, 1),
            Err(CoreError::PolicyOutOfBox { player: 0, .. })
        ));
    }

    #[test]
    fn blow_up_guard_aborts() {
        let mut spec = frozen_spec();
        // super-linear growth from x(0) = 2 explodes quickly
        spec.kernel = DriftKernel::state_only(Arc::new(|_t, x, _y, _u| x * x * x));
        spec.initial_law = InitialLaw::Point(2.0);
        let grid = TimeGrid::new(4.0, 40).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        assert!(matches!(
            simulate_particles(&spec, &policy, 2, &grid, 1),
            Err(CoreError::NonFiniteResult { .. })
        ));
    }

    #[test]
    fn picard_converges_in_one_iteration_when_kernel_ignores_measure() {
        let mut spec = frozen_spec();
        spec.kernel = DriftKernel::state_only(Arc::new(|_t, x, _y, _u| 0.5 + 0.1 * x));
        spec.diffusion = Arc::new(|_, _| 0.2);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let out = mckv_picard(&spec, &policy, 64, &grid, 5, 1e-9, 5).unwrap();
        assert!(out.converged);
        // first iterate replaces the constant initial guess, second certifies
        assert!(out.residuals.len() <= 2, "{:?}", out.residuals);
    }

    #[test]
    fn picard_flow_constant_for_frozen_dynamics() {
        let mut spec = frozen_spec();
        spec.initial_law = InitialLaw::Gaussian { mean: 0.3, std: 0.2 };
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let out = mckv_picard(&spec, &policy, 128, &grid, 7, 1e-12, 4).unwrap();
        assert!(out.converged);
        let m0 = &out.flow.measures[0];
        for m in &out.flow.measures {
            assert_eq!(m.samples(), m0.samples());
        }
    }

    #[test]
    fn picard_residuals_decrease_geometrically_on_cooperative_model() {
        let spec = cooperative(1.0, 0.1, 1.2);
        let grid = TimeGrid::new(1.0, 25).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let out = mckv_picard(&spec, &policy, 400, &grid, 31, 1e-4, 12).unwrap();
        let r = &out.residuals;
        assert!(r.len() >= 3, "expected several iterations, got {r:?}");
        for w in r.windows(2).take(r.len().saturating_sub(1)) {
            if w[0] > 1e-4 {
                assert!(w[1] < w[0], "residuals not decreasing: {r:?}");
            }
        }
    }

    #[test]
    fn interacting_flow_is_fixed_point_of_frozen_map_up_to_mc_error() {
        let spec = cooperative(1.0, 0.1, 1.2);
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let policy = ConstantPolicy(vec![0.0]);
        let n = 600;
        let ens = simulate_particles(&spec, &policy, n, &grid, 99).unwrap();
        let flow = ens.empirical_flow();
        let frozen = simulate_frozen_flow(&spec, &policy, &flow, n, &grid, 99).unwrap();
        let reflow = frozen.empirical_flow();
        // bootstrap scale of d_1 at this sample size
        let mut boot = 0.0;
        let m_t = &flow.measures[grid.n_steps()];
        let mut rng = 0x243f6a8885a308d3u64;
        let mut nextu = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        let b_reps = 24;
        for _ in 0..b_reps {
            let res: Vec<f64> = (0..n)
                .map(|_| m_t.samples()[(nextu() * n as f64) as usize % n])
                .collect();
            let mb = EmpiricalMeasure::from_samples(&res).unwrap();
            boot += wasserstein(&mb, m_t, 1.0).unwrap();
        }
        boot /= b_reps as f64;
        let mut residual: f64 = 0.0;
        for (a, b) in reflow.measures.iter().zip(&flow.measures) {
            residual = residual.max(wasserstein(a, b, 1.0).unwrap());
        }
        assert!(
            residual <= 3.0 * boot,
            "residual {residual} vs bootstrap scale {boot}"
        );
    }
}
