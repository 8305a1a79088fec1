//! Propagation-of-chaos experiment and exchangeability diagnostics.
//!
//! `chaos_study` couples the interacting system to independent frozen-flow
//! copies under identical noise streams, measures the per-particle sup-in-time
//! gap E[sup_t |x_i(t) - x_bar_i(t)|^alpha]^(1/alpha), and fits the log-log
//! slope against n. The frozen reference flow is the Picard fixed point at
//! n_ref = 8 * max(n_list).

use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::measure::AlphaPow;
use crate::model::ModelSpec;
use crate::particle::{
    mckv_picard, simulate_frozen_flow, simulate_particles, ControlLaw, MeasureFlow,
    ParticleEnsemble, FLOW_COMPRESSION,
};

/// One measured point of the chaos experiment.
#[derive(Debug, Clone, Copy)]
pub struct ChaosRow {
    pub n: usize,
    pub error: f64,
}

/// Chaos experiment output: per-n coupling errors and the fitted rate.
#[derive(Debug, Clone)]
pub struct ChaosStudy {
    pub rows: Vec<ChaosRow>,
    /// Least-squares slope of log(error) against log(n); NaN when some error
    /// vanishes (no interaction).
    pub slope: f64,
    pub reference_residuals: Vec<f64>,
}

/// splitmix64 step; used to derive per-(n, rep) seeds deterministically.
fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

const REFERENCE_FACTOR: usize = 8;
const REFERENCE_TOL: f64 = 1e-3;
const REFERENCE_MAX_ITER: usize = 25;

/// Run the coupling experiment over `n_list` with `reps` repetitions each.
pub fn chaos_study(
    spec: &ModelSpec,
    policy: &dyn ControlLaw,
    n_list: &[usize],
    reps: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<ChaosStudy> {
    if n_list.is_empty() || reps == 0 {
        return Err(CoreError::InvalidParams(
            "n_list nonempty and reps >= 1 required".into(),
        ));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::InvalidParams("n_list must be ascending".into()));
    }

    let n_ref = REFERENCE_FACTOR * *n_list.last().unwrap();
    let reference = mckv_picard(
        spec,
        policy,
        n_ref,
        grid,
        mix_seed(seed, 0xa5a5, 0),
        REFERENCE_TOL,
        REFERENCE_MAX_ITER,
    )?;
    if !reference.converged {
        return Err(CoreError::ReferenceNotConverged(
            *reference.residuals.last().unwrap_or(&f64::NAN),
        ));
    }
    let ref_flow = reference.flow.compressed(FLOW_COMPRESSION);

    let pow = AlphaPow::new(spec.alpha);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut acc = 0.0;
        let mut count = 0usize;
        for rep in 0..reps {
            let s = mix_seed(seed, n as u64, rep as u64 + 1);
            let interacting = simulate_particles(spec, policy, n, grid, s)?;
            let frozen = simulate_frozen_flow(spec, policy, &ref_flow, n, grid, s)?;
            for i in 0..n {
                let gap = coupled_gap(&interacting, &frozen, i);
                acc += pow.abs_pow(gap);
                count += 1;
            }
        }
        let error = pow.root(acc / count as f64);
        rows.push(ChaosRow { n, error });
    }

    let slope = fit_log_slope(&rows);
    Ok(ChaosStudy {
        rows,
        slope,
        reference_residuals: reference.residuals,
    })
}

fn coupled_gap(a: &ParticleEnsemble, b: &ParticleEnsemble, particle: usize) -> f64 {
    let mut sup: f64 = 0.0;
    for k in 0..a.grid().n_nodes() {
        sup = sup.max((a.x(particle, k) - b.x(particle, k)).abs());
    }
    sup
}

fn fit_log_slope(rows: &[ChaosRow]) -> f64 {
    if rows.iter().any(|r| r.error <= 0.0) {
        return f64::NAN;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.error.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Reference flow coupled to the study; exposed for scenario plumbing.
pub fn reference_flow(
    spec: &ModelSpec,
    policy: &dyn ControlLaw,
    n_ref: usize,
    grid: &TimeGrid,
    seed: u64,
) -> Result<MeasureFlow> {
    let reference = mckv_picard(
        spec,
        policy,
        n_ref,
        grid,
        mix_seed(seed, 0xa5a5, 0),
        REFERENCE_TOL,
        REFERENCE_MAX_ITER,
    )?;
    if !reference.converged {
        return Err(CoreError::ReferenceNotConverged(
            *reference.residuals.last().unwrap_or(&f64::NAN),
        ));
    }
    Ok(reference.flow)
}

/// Exchangeability report: the symmetric pair statistic compared across
/// disjoint index-pair classes.
#[derive(Debug, Clone)]
pub struct ExchangeabilityReport {
    pub class_means: Vec<f64>,
    pub class_ses: Vec<f64>,
    /// Largest |mean_a - mean_b| over class pairs.
    pub max_deviation: f64,
    /// Pooled standard error of the maximising pair.
    pub pooled_se: f64,
    /// True when the max deviation exceeds 3 pooled standard errors.
    pub flagged: bool,
}

/// Compare a symmetric pair statistic s(x_i(T), x_j(T)) across disjoint
/// index-pair classes (lags 1..4 where sample counts allow). Under an
/// exchangeable law every class has the same expectation.
pub fn exchangeability_check(
    ensemble: &ParticleEnsemble,
    statistic: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<ExchangeabilityReport> {
    let n = ensemble.n_particles();
    if n < 4 {
        return Err(CoreError::TooFewParticles(n));
    }
    let terminal: Vec<f64> = (0..n)
        .map(|i| ensemble.x(i, ensemble.grid().n_steps()))
        .collect();

    let mut class_means = Vec::new();
    let mut class_ses = Vec::new();
    for lag in 1..=4usize {
        let stride = 2 * lag;
        let count = n / stride;
        if count < 2 {
            continue;
        }
        let vals: Vec<f64> = (0..count)
            .map(|j| statistic(terminal[j * stride], terminal[j * stride + lag]))
            .collect();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let var =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count as f64 - 1.0);
        class_means.push(mean);
        class_ses.push((var / count as f64).sqrt());
    }

    let mut max_deviation: f64 = 0.0;
    let mut pooled_se = f64::INFINITY;
    for a in 0..class_means.len() {
        for b in a + 1..class_means.len() {
            let dev = (class_means[a] - class_means[b]).abs();
            if dev > max_deviation {
                max_deviation = dev;
                pooled_se = (class_ses[a] * class_ses[a] + class_ses[b] * class_ses[b]).sqrt();
            }
        }
    }
    if !pooled_se.is_finite() {
        pooled_se = class_ses.first().copied().unwrap_or(0.0);
    }
    let flagged = max_deviation > 3.0 * pooled_se;
    Ok(ExchangeabilityReport {
        class_means,
        class_ses,
        max_deviation,
        pooled_se,
        flagged,
    })
}

/// The cooperative interaction model used by the rate experiments:
/// kernel u - mu sin(x - y), constant diffusion, Gaussian initial spread.
pub fn cooperative_spec(mu: f64, sigma: f64, alpha: f64) -> ModelSpec {
    use crate::model::{DriftKernel, KernelForm, PlayerSpec};
    use crate::noise::InitialLaw;
    use std::sync::Arc;
    ModelSpec {
        alpha,
        horizon: 1.0,
        kernel: DriftKernel {
            form: KernelForm::Pair,
            b: Arc::new(move |_t, x, y, u| u[0] - mu * (x - y).sin()),
            b_x: Some(Arc::new(move |_t, x, y, _u| -mu * (x - y).cos())),
            b_y: Some(Arc::new(move |_t, x, y, _u| mu * (x - y).cos())),
        },
        diffusion: Arc::new(move |_, _| sigma),
        diffusion_x: Some(Arc::new(|_, _| 0.0)),
        players: vec![PlayerSpec::quadratic_effort(0.0, -1.0, 1.0)],
        initial_law: InitialLaw::Gaussian { mean: 0.0, std: 0.5 },
        state_floor: None,
    }
}
