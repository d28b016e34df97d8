use crate::error::{Error, Result};

/// Uniform grid `t_k = k dt`, `k = 0..=n_steps`, starting at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// The horizon must be a whole number of steps (to 1e-9 relative).
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !(horizon >= dt && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must be at least one step ({dt})"
            )));
        }
        let steps = horizon / dt;
        let n_steps = steps.round() as usize;
        if (steps - n_steps as f64).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is not a multiple of dt {dt}"
            )));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    pub fn from_steps(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and at least one step (dt={dt}, n={n_steps})"
            )));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize > self.n_steps {
            return None;
        }
        ((k * self.dt - t).abs() <= 1e-9 * self.dt.max(t)).then_some(k as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(1e-3, 10.0).unwrap();
        assert_eq!(g.n_steps(), 10_000);
        assert_eq!(g.index_of(2.0), Some(2000));
        assert_eq!(g.index_of(2.0005), None);
        assert_eq!(g.index_of(11.0), None);
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0).is_err());
        assert!(TimeGrid::new(1.0, 0.5).is_err());
    }
}
