//! Per-step least-squares estimation of conditional expectations.
//!
//! Targets are regressed on a fixed polynomial basis in the pair (x, z):
//! {1, x, x^2, x^3, z, xz}. Columns are standardised, a relative ridge of
//! 1e-8 is always applied, and the normal-equation condition number is
//! monitored with ridge escalation above 1e8. A `row_factor` turns the fit
//! into the increment regression y ~ (sum_j c_j psi_j(x, z)) * factor used to
//! recover martingale coefficients.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{CoreError, Result};

pub const BASIS_SIZE: usize = 6;
const RIDGE_RELATIVE: f64 = 1e-8;
const CONDITION_LIMIT: f64 = 1e8;

#[inline]
pub fn basis_features(x: f64, z: f64) -> [f64; BASIS_SIZE] {
    [1.0, x, x * x, x * x * x, z, x * z]
}

/// One fitted step regression.
#[derive(Debug, Clone)]
pub struct StepFit {
    coeffs: [f64; BASIS_SIZE],
    means: [f64; BASIS_SIZE],
    scales: [f64; BASIS_SIZE],
    pub residual_rms: f64,
    pub condition: f64,
    pub ridge_escalated: bool,
}

impl StepFit {
    /// Least-squares fit of `targets` on the basis at (xs, zs), with optional
    /// per-row factors. `step` only labels error messages.
    pub fn fit(
        step: usize,
        xs: &[f64],
        zs: &[f64],
        targets: &[f64],
        row_factor: Option<&[f64]>,
    ) -> Result<Self> {
        let n = xs.len();
        if n == 0 || zs.len() != n || targets.len() != n {
            return Err(CoreError::RegressionFailure {
                step,
                reason: "inconsistent sample lengths".into(),
            });
        }
        if let Some(f) = row_factor {
            if f.len() != n {
                return Err(CoreError::RegressionFailure {
                    step,
                    reason: "row factor length mismatch".into(),
                });
            }
        }

        // column standardisation (intercept untouched)
        let mut means = [0.0; BASIS_SIZE];
        let mut scales = [1.0; BASIS_SIZE];
        let mut raw = vec![[0.0; BASIS_SIZE]; n];
        for (i, row) in raw.iter_mut().enumerate() {
            *row = basis_features(xs[i], zs[i]);
        }
        for j in 1..BASIS_SIZE {
            let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = raw.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n as f64;
            means[j] = mean;
            scales[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }

        let mut gram = DMatrix::<f64>::zeros(BASIS_SIZE, BASIS_SIZE);
        let mut rhs = DVector::<f64>::zeros(BASIS_SIZE);
        let mut feat = [0.0; BASIS_SIZE];
        for i in 0..n {
            let factor = row_factor.map_or(1.0, |f| f[i]);
            for j in 0..BASIS_SIZE {
                feat[j] = (raw[i][j] - means[j]) / scales[j] * factor;
            }
            for a in 0..BASIS_SIZE {
                for b in a..BASIS_SIZE {
                    gram[(a, b)] += feat[a] * feat[b];
                }
                rhs[a] += feat[a] * targets[i];
            }
        }
        for a in 0..BASIS_SIZE {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }

        let trace_scale = (0..BASIS_SIZE).map(|j| gram[(j, j)]).sum::<f64>() / BASIS_SIZE as f64;
        let base_ridge = RIDGE_RELATIVE * trace_scale.max(1e-300);
        let eigen = SymmetricEigen::new(gram.clone());
        let lam_max = eigen.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let lam_min = eigen
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        let condition = if lam_min > 0.0 { lam_max / lam_min } else { f64::INFINITY };

        let mut ridge = base_ridge;
        let mut ridge_escalated = false;
        if condition > CONDITION_LIMIT {
            ridge = (lam_max * RIDGE_RELATIVE).max(base_ridge);
            ridge_escalated = true;
        }

        let mut coeffs = [0.0; BASIS_SIZE];
        let mut attempt = 0;
        loop {
            let mut regularised = gram.clone();
            for j in 0..BASIS_SIZE {
                regularised[(j, j)] += ridge;
            }
            match Cholesky::new(regularised) {
                Some(chol) => {
                    let sol = chol.solve(&rhs);
                    for j in 0..BASIS_SIZE {
                        coeffs[j] = sol[j];
                    }
                    break;
                }
                None => {
                    attempt += 1;
                    if attempt > 6 {
                        return Err(CoreError::RegressionFailure {
                            step,
                            reason: "Cholesky failed after ridge escalation".into(),
                        });
                    }
                    ridge *= 100.0;
                    ridge_escalated = true;
                }
            }
        }

        let mut ss = 0.0;
        for i in 0..n {
            let factor = row_factor.map_or(1.0, |f| f[i]);
            let mut pred = 0.0;
            for j in 0..BASIS_SIZE {
                pred += coeffs[j] * (raw[i][j] - means[j]) / scales[j];
            }
            let r = targets[i] - pred * factor;
            ss += r * r;
        }

        Ok(Self {
            coeffs,
            means,
            scales,
            residual_rms: (ss / n as f64).sqrt(),
            condition,
            ridge_escalated,
        })
    }

    /// The fitted basis function sum_j c_j psi_j(x, z) (the conditional
    /// expectation for plain fits; the martingale coefficient for row-factor
    /// fits).
    pub fn predict(&self, x: f64, z: f64) -> f64 {
        let raw = basis_features(x, z);
        let mut out = 0.0;
        for j in 0..BASIS_SIZE {
            out += self.coeffs[j] * (raw[j] - self.means[j]) / self.scales[j];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    #[test]
    fn recovers_exact_polynomial() {
        let mut s = 7u64;
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * lcg(&mut s) - 1.0).collect();
        let zs: Vec<f64> = (0..n).map(|_| lcg(&mut s)).collect();
        let f = |x: f64, z: f64| 0.3 - 1.2 * x + 0.5 * x * x * x + 2.0 * z - 0.7 * x * z;
        let ys: Vec<f64> = xs.iter().zip(&zs).map(|(&x, &z)| f(x, z)).collect();
        let fit = StepFit::fit(0, &xs, &zs, &ys, None).unwrap();
        for (x, z) in [(0.2, 0.5), (-0.8, 0.1), (0.9, 0.9)] {
            assert_relative_eq!(fit.predict(x, z), f(x, z), epsilon = 1e-8);
        }
        assert!(fit.residual_rms < 1e-8);
    }

    #[test]
    fn row_factor_fit_recovers_coefficient_function() {
        // y = (1 + 0.5 x) * F with noisy F of mean zero
        let mut s = 11u64;
        let n = 4000;
        let xs: Vec<f64> = (0..n).map(|_| 2.0 * lcg(&mut s) - 1.0).collect();
        let zs = vec![0.0; n];
        let fs: Vec<f64> = (0..n)
            .map(|_| {
                let u1 = lcg(&mut s);
                let u2 = lcg(&mut s);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let ys: Vec<f64> = xs.iter().zip(&fs).map(|(&x, &f)| (1.0 + 0.5 * x) * f).collect();
        let fit = StepFit::fit(0, &xs, &zs, &ys, Some(&fs)).unwrap();
        for x in [-0.5, 0.0, 0.7] {
            assert_relative_eq!(fit.predict(x, 0.0), 1.0 + 0.5 * x, epsilon = 1e-6);
        }
    }

    #[test]
    fn degenerate_columns_handled_by_ridge() {
        // constant x and z: only the intercept is identifiable
        let xs = vec![1.0; 50];
        let zs = vec![0.0; 50];
        let ys = vec![3.0; 50];
        let fit = StepFit::fit(0, &xs, &zs, &ys, None).unwrap();
        assert_relative_eq!(fit.predict(1.0, 0.0), 3.0, epsilon = 1e-6);
        assert!(fit.condition > CONDITION_LIMIT || fit.ridge_escalated || fit.condition.is_infinite());
    }
}
