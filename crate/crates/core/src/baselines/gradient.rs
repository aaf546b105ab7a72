//! Input estimates by numerical differentiation of observed positions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central differences `(x_{t+1} - x_{t-1}) / (2 dt)` in the interior and
/// one-sided differences at both ends.
pub fn gradient<T: Scalar>(xs: &[DVector<T>], dt: T) -> Result<Vec<DVector<T>>> {
    let len = xs.len();
    if len < 2 {
        return Err(Error::InvalidArgument("differencing needs at least 2 points".into()));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument("dt must be > 0".into()));
    }
    let two_dt = dt + dt;
    Ok((0..len)
        .map(|t| match t {
            0 => (&xs[1] - &xs[0]) / dt,
            t if t == len - 1 => (&xs[t] - &xs[t - 1]) / dt,
            t => (&xs[t + 1] - &xs[t - 1]) / two_dt,
        })
        .collect())
}

/// Second derivative by applying [`gradient`] twice.
///
/// The one-sided end differences leak one step inward, so only
/// `t = 2..T-3` are exact for quadratic trajectories.
pub fn gradient_input_estimate<T: Scalar>(y_positions: &[DVector<T>], dt: T) -> Result<Vec<DVector<T>>> {
    if y_positions.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "gradient inputs need at least 5 points, got {}",
            y_positions.len()
        )));
    }
    gradient(&gradient(y_positions, dt)?, dt)
}
