//! Gateaux derivatives of measure functionals.
//!
//! The catalog returns, for each functional F of the state law, the
//! direction kernel g_m with
//!
//! ```text
//! lim_{eps -> 0+} d/d eps F(m + eps d) = \int g_m(xi) d(d xi),
//! ```
//!
//! together with its x-derivative form. The finite-difference oracle
//! realises m + eps d as a reweighted union of samples and differentiates
//! one-sidedly; it is the independent check for every closed form here.

use crate::error::{CoreError, Result};
use crate::measure::{alpha_norm, AlphaPow, EmpiricalMeasure};
use crate::model::{pow_signed, GateauxDirection, ModelSpec};

/// Functional identifiers covered by the closed-form catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalId {
    /// \int y m(dy)
    Mean,
    /// (1/2) (\int y m(dy))^2
    SquareMean,
    /// (1/2) \int y^2 m(dy)
    SecondMoment,
    /// \int |y|^alpha m(dy)
    AlphaMoment,
    /// (\int |y|^alpha m(dy))^(1/alpha)
    AlphaNorm,
    /// b_bar(t, x, m, u) for the spec's kernel at fixed (t, x, u)
    NormedDrift,
}

impl FunctionalId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "square_mean" => Ok(Self::SquareMean),
            "second_moment" => Ok(Self::SecondMoment),
            "alpha_moment" => Ok(Self::AlphaMoment),
            "alpha_norm" => Ok(Self::AlphaNorm),
            "normed_drift" => Ok(Self::NormedDrift),
            other => Err(CoreError::UnknownFunctional(other.to_string())),
        }
    }

    pub fn all() -> [Self; 6] {
        [
            Self::Mean,
            Self::SquareMean,
            Self::SecondMoment,
            Self::AlphaMoment,
            Self::AlphaNorm,
            Self::NormedDrift,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::SquareMean => "square_mean",
            Self::SecondMoment => "second_moment",
            Self::AlphaMoment => "alpha_moment",
            Self::AlphaNorm => "alpha_norm",
            Self::NormedDrift => "normed_drift",
        }
    }
}

/// Closed-form Gateaux derivative: direction kernel, its x-derivative form,
/// and a flag marking the subgradient selection at a vanishing norm.
pub struct GateauxForm {
    pub dir_kernel: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dir_kernel_dx: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Set when the norm denominator vanished and 0 was selected from the
    /// subdifferential.
    pub norm_zero: bool,
}

impl GateauxForm {
    /// \int g_m(xi) d(d xi): the closed-form directional derivative.
    pub fn along(&self, d: &GateauxDirection) -> f64 {
        d.integrate(|xi| (self.dir_kernel)(xi))
    }
}

/// Closed forms for the catalog functionals evaluated at measure `m`.
/// `(t, x, u)` only matter for [`FunctionalId::NormedDrift`].
pub fn gateaux_closed_form(
    id: FunctionalId,
    spec: &ModelSpec,
    t: f64,
    x: f64,
    m: &EmpiricalMeasure,
    u: &[f64],
) -> Result<GateauxForm> {
    let alpha = spec.alpha;
    match id {
        FunctionalId::Mean => Ok(GateauxForm {
            dir_kernel: Box::new(|xi| xi),
            dir_kernel_dx: Box::new(|_| 1.0),
            norm_zero: false,
        }),
        FunctionalId::SquareMean => {
            let mbar = m.mean();
            Ok(GateauxForm {
                dir_kernel: Box::new(move |xi| xi * mbar),
                dir_kernel_dx: Box::new(move |_| mbar),
                norm_zero: false,
            })
        }
        FunctionalId::SecondMoment => Ok(GateauxForm {
            dir_kernel: Box::new(|xi| 0.5 * xi * xi),
            dir_kernel_dx: Box::new(|x| x),
            norm_zero: false,
        }),
        FunctionalId::AlphaMoment => Ok(GateauxForm {
            dir_kernel: Box::new(move |xi| AlphaPow::new(alpha).abs_pow(xi)),
            dir_kernel_dx: Box::new(move |x| alpha * pow_signed(x, alpha - 1.0)),
            norm_zero: false,
        }),
        FunctionalId::AlphaNorm => {
            let norm = alpha_norm(m, alpha)?;
            if norm == 0.0 {
                return Ok(GateauxForm {
                    dir_kernel: Box::new(|_| 0.0),
                    dir_kernel_dx: Box::new(|_| 0.0),
                    norm_zero: true,
                });
            }
            let denom = norm.powf(alpha - 1.0);
            Ok(GateauxForm {
                dir_kernel: Box::new(move |xi| {
                    AlphaPow::new(alpha).abs_pow(xi) / (alpha * denom)
                }),
                dir_kernel_dx: Box::new(move |x| pow_signed(x, alpha - 1.0) / denom),
                norm_zero: false,
            })
        }
        FunctionalId::NormedDrift => {
            let bbar = crate::model::barred_drift(spec, t, x, m, u)?;
            if bbar.powf(alpha - 1.0) == 0.0 {
                return Ok(GateauxForm {
                    dir_kernel: Box::new(|_| 0.0),
                    dir_kernel_dx: Box::new(|_| 0.0),
                    norm_zero: true,
                });
            }
            let denom = alpha * bbar.powf(alpha - 1.0);
            let kernel = spec.kernel.clone();
            let kernel2 = spec.kernel.clone();
            let u_own: Vec<f64> = u.to_vec();
            let u_own2: Vec<f64> = u.to_vec();
            Ok(GateauxForm {
                dir_kernel: Box::new(move |xi| {
                    AlphaPow::new(alpha).abs_pow(kernel.eval(t, x, xi, &u_own)) / denom
                }),
                dir_kernel_dx: Box::new(move |y| {
                    let b = kernel2.eval(t, x, y, &u_own2);
                    let by = kernel2.eval_y(t, x, y, &u_own2);
                    alpha * pow_signed(b, alpha - 1.0) * by / denom
                }),
                norm_zero: false,
            })
        }
    }
}

/// A measure functional evaluated on weighted samples; the representation the
/// finite-difference oracle perturbs.
pub trait WeightedFunctional {
    fn eval(&self, values: &[f64], weights: &[f64]) -> f64;
}

impl<F: Fn(&[f64], &[f64]) -> f64> WeightedFunctional for F {
    fn eval(&self, values: &[f64], weights: &[f64]) -> f64 {
        self(values, weights)
    }
}

/// Weighted-sample evaluator for a catalog functional.
pub fn weighted_functional(
    id: FunctionalId,
    spec: &ModelSpec,
    t: f64,
    x: f64,
    u: &[f64],
) -> Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync> {
    let alpha = spec.alpha;
    match id {
        FunctionalId::Mean => Box::new(|v, w| dot(v, w, |y| y)),
        FunctionalId::SquareMean => Box::new(|v, w| {
            let m = dot(v, w, |y| y);
            0.5 * m * m
        }),
        FunctionalId::SecondMoment => Box::new(|v, w| 0.5 * dot(v, w, |y| y * y)),
        FunctionalId::AlphaMoment => Box::new(move |v, w| {
            let pow = AlphaPow::new(alpha);
            dot(v, w, |y| pow.abs_pow(y))
        }),
        FunctionalId::AlphaNorm => Box::new(move |v, w| {
            let pow = AlphaPow::new(alpha);
            pow.root(dot(v, w, |y| pow.abs_pow(y)).max(0.0))
        }),
        FunctionalId::NormedDrift => {
            let kernel = spec.kernel.clone();
            let u_own: Vec<f64> = u.to_vec();
            Box::new(move |v, w| {
                let pow = AlphaPow::new(alpha);
                let s: f64 = v
                    .iter()
                    .zip(w)
                    .map(|(&y, &wy)| wy * pow.abs_pow(kernel.eval(t, x, y, &u_own)))
                    .sum();
                pow.root(s.max(0.0))
            })
        }
    }
}

fn dot(values: &[f64], weights: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    values.iter().zip(weights).map(|(&v, &w)| w * g(v)).sum()
}

/// One-sided finite-difference directional derivative
/// (F(m + eps d) - F(m)) / eps, with the mixture realised as the sample
/// union weighted (1/n, eps/k, -eps/k).
pub fn gateaux_fd_oracle(
    functional: &dyn WeightedFunctional,
    m: &EmpiricalMeasure,
    d: &GateauxDirection,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(CoreError::InvalidDirection(format!("eps {eps} must be > 0")));
    }
    let n = m.len();
    let k = d.plus.len();
    let mut values: Vec<f64> = Vec::with_capacity(n + 2 * k);
    let mut weights: Vec<f64> = Vec::with_capacity(n + 2 * k);
    values.extend_from_slice(m.samples());
    weights.extend(std::iter::repeat(1.0 / n as f64).take(n));
    values.extend_from_slice(d.plus.samples());
    weights.extend(std::iter::repeat(eps / k as f64).take(k));
    values.extend_from_slice(d.minus.samples());
    weights.extend(std::iter::repeat(-eps / k as f64).take(k));

    let base_w: Vec<f64> = std::iter::repeat(1.0 / n as f64).take(n).collect();
    let f0 = functional.eval(m.samples(), &base_w);
    let f1 = functional.eval(&values, &weights);
    let out = (f1 - f0) / eps;
    if !out.is_finite() {
        return Err(CoreError::InvalidDirection(
            "finite-difference quotient is not finite".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriftKernel, PlayerSpec};
    use crate::noise::InitialLaw;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn spec_with(kernel: DriftKernel, alpha: f64) -> ModelSpec {
        ModelSpec {
            alpha,
            horizon: 1.0,
            kernel,
            diffusion: Arc::new(|_, _| 0.0),
            diffusion_x: Some(Arc::new(|_, _| 0.0)),
            players: vec![PlayerSpec::quadratic_effort(0.0, -10.0, 10.0)],
            initial_law: InitialLaw::Point(0.0),
            state_floor: None,
        }
    }

    fn plain_spec(alpha: f64) -> ModelSpec {
        spec_with(DriftKernel::pair(Arc::new(|_, _, _, _| 0.0)), alpha)
    }

    #[test]
    fn mean_kernel_is_identity() {
        let spec = plain_spec(1.2);
        let m = EmpiricalMeasure::from_samples(&[0.3, 1.0, 2.0]).unwrap();
        let form = gateaux_closed_form(FunctionalId::Mean, &spec, 0.0, 0.0, &m, &[0.0]).unwrap();
        assert_eq!((form.dir_kernel)(3.7), 3.7);
        assert_eq!((form.dir_kernel_dx)(3.7), 1.0);
    }

    #[test]
    fn total_mass_derivative_vanishes() {
        let m = EmpiricalMeasure::from_samples(&[0.5, 1.5]).unwrap();
        let d = GateauxDirection::new(
            EmpiricalMeasure::dirac(3.0).unwrap(),
            EmpiricalMeasure::dirac(1.0).unwrap(),
        )
        .unwrap();
        let mass = |_v: &[f64], w: &[f64]| w.iter().sum::<f64>();
        let fd = gateaux_fd_oracle(&mass, &m, &d, 1e-3).unwrap();
        assert!(fd.abs() < 1e-12);
    }

    #[test]
    fn mean_direction_is_exact_for_all_eps() {
        let spec = plain_spec(1.2);
        let m = EmpiricalMeasure::from_samples(&[0.5, 1.5]).unwrap();
        let d = GateauxDirection::new(
            EmpiricalMeasure::dirac(3.0).unwrap(),
            EmpiricalMeasure::dirac(1.0).unwrap(),
        )
        .unwrap();
        let f = weighted_functional(FunctionalId::Mean, &spec, 0.0, 0.0, &[0.0]);
        for eps in [1e-1, 1e-3, 1e-6] {
            let fd = gateaux_fd_oracle(&f, &m, &d, eps).unwrap();
            assert_relative_eq!(fd, 2.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn square_mean_example_with_richardson_check() {
        let spec = plain_spec(1.2);
        let m = EmpiricalMeasure::from_samples(&[1.0, 3.0]).unwrap();
        let d = GateauxDirection::new(
            EmpiricalMeasure::dirac(3.0).unwrap(),
            EmpiricalMeasure::dirac(1.0).unwrap(),
        )
        .unwrap();
        let form =
            gateaux_closed_form(FunctionalId::SquareMean, &spec, 0.0, 0.0, &m, &[0.0]).unwrap();
        // d_x form is the mean of m
        assert_relative_eq!((form.dir_kernel_dx)(0.7), 2.0);
        // closed form along d: mbar * (3 - 1) = 4
        assert_relative_eq!(form.along(&d), 4.0);
        let f = weighted_functional(FunctionalId::SquareMean, &spec, 0.0, 0.0, &[0.0]);
        let mut prev_err = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let fd = gateaux_fd_oracle(&f, &m, &d, eps).unwrap();
            let err = (fd - 4.0).abs();
            assert!(err < prev_err || err < 1e-10, "eps {eps}: err {err}");
            prev_err = err;
        }
    }

    #[test]
    fn norm_zero_flag_on_degenerate_measure() {
        let spec = plain_spec(1.5);
        let m = EmpiricalMeasure::from_samples(&[0.0, 0.0]).unwrap();
        let form =
            gateaux_closed_form(FunctionalId::AlphaNorm, &spec, 0.0, 0.0, &m, &[0.0]).unwrap();
        assert!(form.norm_zero);
        assert_eq!((form.dir_kernel)(2.0), 0.0);
        let kernel0 = spec_with(DriftKernel::pair(Arc::new(|_, _, _, _| 0.0)), 1.5);
        let form = gateaux_closed_form(FunctionalId::NormedDrift, &kernel0, 0.0, 0.0, &m, &[0.0])
            .unwrap();
        assert!(form.norm_zero);
    }

    #[test]
    fn unknown_functional_rejected() {
        assert!(matches!(
            FunctionalId::parse("entropy"),
            Err(CoreError::UnknownFunctional(_))
        ));
    }

    #[test]
    fn catalog_matches_fd_oracle_at_first_order() {
        // deterministic pseudo-random instances; relative error <= 1e-4 at eps = 1e-4
        let kernel = DriftKernel::pair(Arc::new(|_t, x, y, _u| 0.8 + (x - 0.3 * y).sin()));
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for alpha in [1.2, 2.0, 3.0] {
            let spec = spec_with(kernel.clone(), alpha);
            for id in FunctionalId::all() {
                for _ in 0..20 {
                    let mvals: Vec<f64> = (0..8).map(|_| 0.5 + 1.5 * next()).collect();
                    let m = EmpiricalMeasure::from_samples(&mvals).unwrap();
                    let plus = EmpiricalMeasure::from_samples(&[0.5 + 1.5 * next()]).unwrap();
                    let minus = EmpiricalMeasure::from_samples(&[0.5 + 1.5 * next()]).unwrap();
                    let d = GateauxDirection::new(plus, minus).unwrap();
                    let x = 0.5 + next();
                    let form = gateaux_closed_form(id, &spec, 0.1, x, &m, &[0.0]).unwrap();
                    let f = weighted_functional(id, &spec, 0.1, x, &[0.0]);
                    let fd = gateaux_fd_oracle(&f, &m, &d, 1e-4).unwrap();
                    let cf = form.along(&d);
                    let scale = cf.abs().max(1e-6);
                    assert!(
                        (cf - fd).abs() / scale <= 1e-4,
                        "{} alpha {alpha}: closed {cf} vs fd {fd}",
                        id.name()
                    );
                }
            }
        }
    }
}
