//! Central finite-difference utilities used to verify analytic gradients.
//!
//! These evaluate the loss function twice per element and never touch the
//! tape's backward path, so they stay independent of what they check.

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    let mut out = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = work[i];
        let eps = 1e-5 * orig.abs().max(1.0);
        work[i] = orig + eps;
        let fp = f(&work);
        work[i] = orig - eps;
        let fm = f(&work);
        work[i] = orig;
        out[i] = (fp - fm) / (2.0 * eps);
    }
    out
}

/// Maximum relative error between analytic and numeric gradients.
/// Elements where both magnitudes fall below `floor` are skipped (below
/// finite-difference resolution).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    max_rel_error_at(analytic, numeric, floor).1
}

/// As [`max_rel_error`], also reporting the offending element index.
pub fn max_rel_error_at(analytic: &[f64], numeric: &[f64], floor: f64) -> (usize, f64) {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    let mut at = 0usize;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        if a.abs() < floor && n.abs() < floor {
            continue;
        }
        let rel = (a - n).abs() / a.abs().max(n.abs());
        if rel > worst {
            worst = rel;
            at = i;
        }
    }
    (at, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let x = vec![1.0, -2.0, 3.0];
        let g = finite_diff(&x, |v| v.iter().map(|&a| a * a).sum());
        let expect = [2.0, -4.0, 6.0];
        assert!(max_rel_error(&g, &expect, 1e-12) < 1e-8);
    }
}
