//! Path costs and risk-sensitive functionals.
//!
//! Psi_T = \int_0^T f dt + h is assembled from the ensemble's auxiliary
//! running-cost state and the terminal cost against the terminal empirical
//! measure. The exponentiated functionals J^theta = E e^{theta Psi} and
//! J_bar^theta = (1/theta) log J^theta run through max-shifted log-sum-exp;
//! theta = 0 is an explicit risk-neutral branch. The Donsker-Varadhan block
//! verifies the variational identity behind the robust-control reading.

use crate::error::{CoreError, Result};
use crate::measure::{relative_entropy, DiscreteDistribution};
use crate::model::ModelSpec;
use crate::particle::ParticleEnsemble;

/// Exponent guard: values of theta * psi beyond this overflow f64.
const EXP_GUARD: f64 = 709.0;

/// Total path cost split into running and terminal parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathCost {
    pub running: f64,
    pub terminal: f64,
    pub psi: f64,
}

/// Psi_T for one particle of the ensemble.
pub fn path_psi(
    spec: &ModelSpec,
    i: usize,
    ensemble: &ParticleEnsemble,
    particle: usize,
) -> Result<PathCost> {
    if i >= ensemble.n_players() {
        return Err(CoreError::MissingAux(i));
    }
    let k_last = ensemble.grid().n_steps();
    let m_t = ensemble.measure_at(k_last);
    let running = ensemble.z(i, particle, k_last);
    let terminal = spec.terminal_cost(i, ensemble.x(particle, k_last), &m_t);
    Ok(PathCost {
        running,
        terminal,
        psi: running + terminal,
    })
}

/// Psi_T for every particle (terminal measure computed once).
pub fn psi_samples(spec: &ModelSpec, i: usize, ensemble: &ParticleEnsemble) -> Result<Vec<f64>> {
    if i >= ensemble.n_players() {
        return Err(CoreError::MissingAux(i));
    }
    let k_last = ensemble.grid().n_steps();
    let m_t = ensemble.measure_at(k_last);
    Ok((0..ensemble.n_particles())
        .map(|j| {
            ensemble.z(i, j, k_last) + spec.terminal_cost(i, ensemble.x(j, k_last), &m_t)
        })
        .collect())
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// J^theta = E e^{theta Psi} over the ensemble, max-shifted.
pub fn risk_cost(spec: &ModelSpec, i: usize, ensemble: &ParticleEnsemble) -> Result<MonteCarloEstimate> {
    let psis = psi_samples(spec, i, ensemble)?;
    risk_cost_of_samples(spec.players[i].theta, &psis)
}

pub fn risk_cost_of_samples(theta: f64, psis: &[f64]) -> Result<MonteCarloEstimate> {
    if psis.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let n = psis.len() as f64;
    let shift = psis.iter().map(|&p| theta * p).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(CoreError::Overflow(shift));
    }
    let shifted: Vec<f64> = psis.iter().map(|&p| (theta * p - shift).exp()).collect();
    let mean_shifted = shifted.iter().sum::<f64>() / n;
    let log_value = shift + mean_shifted.ln();
    if log_value > EXP_GUARD {
        return Err(CoreError::Overflow(log_value));
    }
    let value = log_value.exp();
    let var_shifted = shifted
        .iter()
        .map(|&w| (w - mean_shifted) * (w - mean_shifted))
        .sum::<f64>()
        / n;
    let std_error = if mean_shifted > 0.0 {
        (var_shifted / n).sqrt() / mean_shifted * value
    } else {
        0.0
    };
    Ok(MonteCarloEstimate { value, std_error })
}

/// J_bar^theta = (1/theta) log J^theta; the sample mean of Psi when theta = 0.
pub fn log_risk_cost(spec: &ModelSpec, i: usize, ensemble: &ParticleEnsemble) -> Result<f64> {
    let psis = psi_samples(spec, i, ensemble)?;
    log_risk_cost_of_samples(spec.players[i].theta, &psis)
}

pub fn log_risk_cost_of_samples(theta: f64, psis: &[f64]) -> Result<f64> {
    if psis.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    let n = psis.len() as f64;
    if theta == 0.0 {
        return Ok(psis.iter().sum::<f64>() / n);
    }
    let shift = psis.iter().map(|&p| theta * p).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(CoreError::Overflow(shift));
    }
    let mean_shifted = psis
        .iter()
        .map(|&p| (theta * p - shift).exp())
        .sum::<f64>()
        / n;
    Ok((shift + mean_shifted.ln()) / theta)
}

/// Residual fit of the small-theta expansion
/// J_bar^theta = mean + (theta/2) var + O(theta^2) on one frozen sample.
#[derive(Debug, Clone)]
pub struct SmallThetaCheck {
    /// (theta, |J_bar - mean - theta/2 var|) pairs.
    pub residuals: Vec<(f64, f64)>,
    /// Slope of log residual against log theta; None when residuals vanish
    /// (constant Psi) and the fit is undefined.
    pub slope: Option<f64>,
}

impl SmallThetaCheck {
    pub fn slope_or_err(&self) -> Result<f64> {
        self.slope.ok_or(CoreError::DegenerateSample)
    }
}

pub fn small_theta_check(
    spec: &ModelSpec,
    i: usize,
    ensemble: &ParticleEnsemble,
    theta_list: &[f64],
) -> Result<SmallThetaCheck> {
    let psis = psi_samples(spec, i, ensemble)?;
    small_theta_check_samples(&psis, theta_list)
}

/// Same check on an explicit frozen sample; no resampling across theta
/// values, so Monte Carlo noise cancels and only the analytic O(theta^2)
/// term remains.
pub fn small_theta_check_samples(psis: &[f64], theta_list: &[f64]) -> Result<SmallThetaCheck> {
    if psis.is_empty() {
        return Err(CoreError::EmptyInput);
    }
    if theta_list.len() < 4 || theta_list.iter().any(|&t| !(t > 0.0)) {
        return Err(CoreError::InvalidParams(
            "theta_list needs >= 4 positive values".into(),
        ));
    }
    let n = psis.len() as f64;
    let mean = psis.iter().sum::<f64>() / n;
    // population variance: the expansion is exact for the empirical law
    let var = psis.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    let mut residuals = Vec::with_capacity(theta_list.len());
    for &theta in theta_list {
        let jbar = log_risk_cost_of_samples(theta, psis)?;
        residuals.push((theta, (jbar - mean - 0.5 * theta * var).abs()));
    }
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .filter(|(_, r)| *r > 1e-14)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    let slope = if pts.len() < 2 {
        None
    } else {
        let m = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some((m * sxy - sx * sy) / (m * sxx - sx * sx))
    };
    Ok(SmallThetaCheck { residuals, slope })
}

/// Donsker-Varadhan identity outputs: both sides and the Gibbs tilt.
#[derive(Debug, Clone)]
pub struct DvResult {
    /// (1/theta) log \int e^{theta phi} d nu
    pub lhs: f64,
    /// E_gibbs[phi] - (1/theta) H(gibbs | nu)
    pub sup_value: f64,
    pub gibbs: DiscreteDistribution,
}

/// Evaluate the identity and the Boltzmann-Gibbs extremiser. For theta > 0
/// the gibbs tilt maximises the objective; for theta < 0 it minimises.
pub fn donsker_varadhan(phi: &[f64], nu: &DiscreteDistribution, theta: f64) -> Result<DvResult> {
    if theta == 0.0 {
        return Err(CoreError::InvalidParams("theta must be nonzero".into()));
    }
    if phi.len() != nu.len() {
        return Err(CoreError::MismatchedSupport);
    }
    for (idx, &p) in nu.probs().iter().enumerate() {
        if p <= 0.0 {
            return Err(CoreError::ZeroMassPoint(idx));
        }
    }
    let shift = phi.iter().map(|&f| theta * f).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = phi
        .iter()
        .zip(nu.probs())
        .map(|(&f, &p)| p * (theta * f - shift).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let lhs = (shift + z.ln()) / theta;
    let gibbs_probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let gibbs = DiscreteDistribution::new(nu.labels().to_vec(), normalise(gibbs_probs))?;
    let sup_value = dv_objective(&gibbs, phi, nu, theta)?;
    Ok(DvResult { lhs, sup_value, gibbs })
}

/// The variational objective E_mu[phi] - (1/theta) H(mu | nu).
pub fn dv_objective(
    mu: &DiscreteDistribution,
    phi: &[f64],
    nu: &DiscreteDistribution,
    theta: f64,
) -> Result<f64> {
    let e_phi: f64 = mu.probs().iter().zip(phi).map(|(&p, &f)| p * f).sum();
    let h = relative_entropy(mu, nu)?;
    Ok(e_phi - h / theta)
}

fn normalise(mut probs: Vec<f64>) -> Vec<f64> {
    let s: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= s;
    }
    // absorb roundoff into the largest atom so the constructor's 1e-12 sum
    // tolerance is met exactly
    let total: f64 = probs.iter().sum();
    if let Some(imax) = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
    {
        probs[imax] += 1.0 - total;
    }
    probs
}
