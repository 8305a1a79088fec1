//! Uniform time discretisation of [0, T].

use crate::error::{CoreError, Result};

/// Uniform grid t_k = k * dt, k = 0..=n_steps, with n_steps * dt = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid with `n_steps` uniform steps over [0, horizon].
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(CoreError::InvalidGrid(format!("horizon {horizon} must be > 0")));
        }
        if n_steps == 0 {
            return Err(CoreError::InvalidGrid("n_steps must be >= 1".into()));
        }
        Ok(Self {
            horizon,
            dt: horizon / n_steps as f64,
            n_steps,
        })
    }

    /// Grid from an explicit step size; dt must tile the horizon exactly
    /// (within 1e-12 relative).
    pub fn from_dt(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(CoreError::InvalidGrid(format!("dt {dt} must be > 0")));
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 || (steps * dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
            return Err(CoreError::InvalidGrid(format!(
                "dt {dt} does not tile horizon {horizon}"
            )));
        }
        Self::new(horizon, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid nodes (n_steps + 1).
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |k| self.t(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_tiles_horizon() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        assert_eq!(g.n_steps(), 1000);
        assert!((g.n_steps() as f64 * g.dt() - g.horizon()).abs() <= 1e-12);
        assert_eq!(g.t(0), 0.0);
        assert!((g.t(1000) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn from_dt_validates() {
        assert!(TimeGrid::from_dt(1.0, 0.01).is_ok());
        assert!(matches!(
            TimeGrid::from_dt(1.0, 0.3),
            Err(CoreError::InvalidGrid(_))
        ));
        assert!(matches!(
            TimeGrid::from_dt(1.0, -0.1),
            Err(CoreError::InvalidGrid(_))
        ));
    }
}
