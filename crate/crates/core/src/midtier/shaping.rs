use super::MidtierError;

#[derive(Debug, Clone, PartialEq)]
pub struct Shaped<R> {
    pub admit: Vec<R>,
    /// Held back in arrival order.
    pub defer: Vec<R>,
}

/// Latency-sensitive requests always pass; the rest pass only while
/// `utilization < threshold`.
pub fn shape_traffic<R: Clone>(
    queue: &[R],
    latency_sensitive: impl Fn(&R) -> bool,
    utilization: f64,
    threshold: f64,
) -> Result<Shaped<R>, MidtierError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MidtierError::Config(format!("threshold {threshold} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&utilization) {
        return Err(MidtierError::Config(format!("utilization {utilization} outside [0, 1]")));
    }
    let open = utilization < threshold;
    let (admit, defer) = queue.iter().cloned().partition(|r| open || latency_sensitive(r));
    Ok(Shaped { admit, defer })
}
