//! Adaptive Simpson quadrature for the handful of smooth 1-D integrals the
//! RHS oracle and the interior-error integral need.

/// Integrate `f` over [a, b] to the given relative tolerance. The tolerance
/// is anchored to the integral of |f| (estimated from the initial samples)
/// so that cancelling integrands (odd functions over symmetric spans) still
/// terminate.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let scale = (b - a).abs() * (fa.abs() + 4.0 * fm.abs() + fb.abs()) / 6.0;
    let eps = rel_tol * whole.abs().max(scale) + 1e-300;
    simpson_step(f, a, b, fa, fm, fb, whole, eps, 40)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
    }
}
