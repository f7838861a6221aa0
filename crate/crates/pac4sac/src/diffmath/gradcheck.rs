//! Central finite-difference gradient checking.
//!
//! The numeric route evaluates the loss at perturbed inputs only, so it stays
//! independent of the reverse pass it validates.

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// One coordinate of the central-difference gradient of `f` at `x`.
pub fn central_difference_at(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    index: usize,
    step: f64,
) -> f64 {
    let mut point = x.to_vec();
    point[index] = x[index] + step;
    let plus = f(&point);
    point[index] = x[index] - step;
    let minus = f(&point);
    (plus - minus) / (2.0 * step)
}

/// Full central-difference gradient of `f` at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len()).map(|i| central_difference_at(f, x, i, step)).collect()
}

/// Worst-case comparison between an analytic and a numeric gradient.
#[derive(Debug, Clone, Copy)]
pub struct GradError {
    /// Largest relative error over coordinates that fail the absolute floor.
    pub max_rel: f64,
    /// Largest absolute error over all coordinates.
    pub max_abs: f64,
    /// Coordinate achieving `max_rel`.
    pub worst_index: usize,
}

/// Compare gradients coordinate-wise. A coordinate passes when its absolute
/// error is below `abs_tol` (for values near zero) or its relative error is
/// below `rel_tol`.
pub fn compare(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> Result<GradError, String> {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut report = GradError { max_rel: 0.0, max_abs: 0.0, worst_index: 0 };
    let mut failure: Option<String> = None;
    for (i, (&a, &n)) in analytic.iter().zip(numeric.iter()).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(1e-12);
        if abs > report.max_abs {
            report.max_abs = abs;
        }
        if abs > abs_tol && rel > report.max_rel {
            report.max_rel = rel;
            report.worst_index = i;
        }
        if abs > abs_tol && rel > rel_tol && failure.is_none() {
            failure = Some(format!(
                "gradient mismatch at coordinate {i}: analytic {a}, numeric {n} (rel {rel:.3e}, abs {abs:.3e})"
            ));
        }
    }
    match failure {
        Some(msg) => Err(msg),
        None => Ok(report),
    }
}

/// Check an analytic gradient against central differences of `f` at `x` on a
/// subset of coordinates (all of them when `indices` is `None`).
pub fn check_subset(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: Option<&[usize]>,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<GradError, String> {
    let all: Vec<usize>;
    let indices = match indices {
        Some(ix) => ix,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let numeric: Vec<f64> =
        indices.iter().map(|&i| central_difference_at(f, x, i, DEFAULT_STEP)).collect();
    let picked: Vec<f64> = indices.iter().map(|&i| analytic[i]).collect();
    compare(&picked, &numeric, rel_tol, abs_tol)
}
