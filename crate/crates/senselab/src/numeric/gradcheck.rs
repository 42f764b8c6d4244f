//! Central finite-difference gradient verification.

/// Default step for central differences.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate, if the point is non-empty.
    pub worst_coordinate: Option<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_error <= threshold
    }
}

/// Compares `analytic` against central differences of `f` at `point`.
///
/// The relative-error metric is |a − n| / max(1, |a|, |n|), which stays
/// well-behaved when both gradients are near zero.
pub fn grad_check<F>(
    op: &str,
    f: F,
    point: &[f64],
    analytic: &[f64],
    epsilon: f64,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(
        point.len(),
        analytic.len(),
        "grad_check: point and analytic gradient length differ"
    );
    let mut probe = point.to_vec();
    let mut max_rel_error: f64 = 0.0;
    let mut worst_coordinate = None;
    for i in 0..probe.len() {
        let saved = probe[i];
        probe[i] = saved + epsilon;
        let plus = f(&probe);
        probe[i] = saved - epsilon;
        let minus = f(&probe);
        probe[i] = saved;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_coordinate = Some(i);
        }
    }
    GradCheckReport {
        op: op.to_string(),
        max_rel_error,
        worst_coordinate,
    }
}
