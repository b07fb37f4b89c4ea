use serde::{Deserialize, Serialize};

use super::MidtierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub d_min: usize,
    pub d_max: usize,
    /// Integral clamp as a multiple of the target latency.
    pub integral_clamp: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self { kp: 0.4, ki: 0.05, kd: 0.1, d_min: 50, d_max: 250, integral_clamp: 10.0 }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<(), MidtierError> {
        if self.d_min == 0 || self.d_min > self.d_max {
            return Err(MidtierError::Config(format!("depth bounds [{}, {}]", self.d_min, self.d_max)));
        }
        if ![self.kp, self.ki, self.kd, self.integral_clamp].iter().all(|g| g.is_finite() && *g >= 0.0) {
            return Err(MidtierError::Config("gains must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Depth controller state. Starts at `d_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidState {
    pub config: PidConfig,
    pub depth: usize,
    pub integral: f64,
    pub prev_error: Option<f64>,
}

impl PidState {
    pub fn new(config: PidConfig) -> Result<Self, MidtierError> {
        config.validate()?;
        Ok(Self { depth: config.d_max, config, integral: 0.0, prev_error: None })
    }

    pub fn update(&mut self, observed_ms: f64, target_ms: f64, dt: f64) -> Result<usize, MidtierError> {
        pid_update(self, observed_ms, target_ms, dt)
    }
}

/// One control step.
///
/// The error is in milliseconds; the control signal is scaled by
/// `depth / target`, so a relative latency overshoot of x cuts depth by
/// roughly `kp · x` of its current value. The integral is frozen while the
/// output is pinned at a bound and the error pushes further into it.
pub fn pid_update(state: &mut PidState, observed_ms: f64, target_ms: f64, dt: f64) -> Result<usize, MidtierError> {
    if !(dt > 0.0) || !(target_ms > 0.0) || !observed_ms.is_finite() {
        return Err(MidtierError::Config(format!("pid step with dt={dt}, target={target_ms}, observed={observed_ms}")));
    }
    let c = state.config;
    let error = observed_ms - target_ms;
    let limit = c.integral_clamp * target_ms;
    let integral = (state.integral + error * dt).clamp(-limit, limit);
    let derivative = state.prev_error.map_or(0.0, |p| (error - p) / dt);
    let control = c.kp * error + c.ki * integral + c.kd * derivative;
    let depth = state.depth as f64;
    let raw = (depth - control * depth / target_ms).round();
    let new_depth = raw.clamp(c.d_min as f64, c.d_max as f64);
    let pinned_high = raw > c.d_max as f64 && error < 0.0;
    let pinned_low = raw < c.d_min as f64 && error > 0.0;
    if !(pinned_high || pinned_low) {
        state.integral = integral;
    }
    state.prev_error = Some(error);
    state.depth = new_depth as usize;
    Ok(state.depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_holds_depth() {
        let mut s = PidState::new(PidConfig::default()).unwrap();
        s.depth = 120;
        for _ in 0..20 {
            assert_eq!(s.update(80.0, 80.0, 1.0).unwrap(), 120);
        }
        assert_eq!(s.integral, 0.0);
    }

    #[test]
    fn fresh_state_is_at_max() {
        assert_eq!(PidState::new(PidConfig::default()).unwrap().depth, 250);
        assert!(PidState::new(PidConfig { d_min: 300, ..PidConfig::default() }).is_err());
    }

    #[test]
    fn sustained_overload_walks_depth_down() {
        let mut s = PidState::new(PidConfig::default()).unwrap();
        let mut last = s.depth;
        for _ in 0..10 {
            let d = s.update(1000.0, 100.0, 1.0).unwrap();
            assert!(d < last || d == 50);
            last = d;
        }
        assert_eq!(last, 50);
    }
}
