//! Error analysis: truncation fields, numerical-error norms, convergence
//! orders, the explicit 1-D error decomposition and the leading-coefficient
//! contour data for the straight-line average interface.

use rayon::prelude::*;

use crate::cases::TestCase;
use crate::error::{Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::grid::{classify, Mesh, NodeClassification};
use crate::quadrature;
use crate::rhs::{self, RhsField, RhsMode};
use crate::scheme::{assemble, SchemeKind};
use crate::solver::{solve, Solution, SolveMethod, SolveOptions};

/// Numerical-error field ξ = φ − φᵉ with the truncation field τ it pairs
/// with, plus the norms the convergence tables use.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub xi: Vec<f64>,
    pub tau: Vec<f64>,
    /// Σ|ξ| divided by the number of interior nodes.
    pub l1_normalized: f64,
    pub l_infinity: f64,
    pub spacing: f64,
}

impl ErrorReport {
    pub fn from_fields(xi: Vec<f64>, tau: Vec<f64>, spacing: f64) -> Self {
        let n = xi.len().max(1);
        let l1 = xi.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let linf = xi.iter().map(|v| v.abs()).fold(0.0, f64::max);
        ErrorReport {
            xi,
            tau,
            l1_normalized: l1,
            l_infinity: linf,
            spacing,
        }
    }
}

/// τᵢ = bᵢ − (Lφᵉ)ᵢ with L the assembled discrete operator, ghost
/// eliminations included and Dirichlet data taken from the exact solution at
/// the cached crossing points.
pub fn truncation_field(
    case: &TestCase,
    mesh: &Mesh,
    classification: &NodeClassification,
    scheme: SchemeKind,
    rhs_field: &RhsField,
) -> Result<Vec<f64>> {
    let (system, rhs_vector) = assemble(
        mesh,
        classification,
        scheme,
        &|p: &[f64]| case.phi(p),
        rhs_field,
    )?;
    let exact: Vec<f64> = classification
        .interior_nodes()
        .iter()
        .map(|&node| case.phi(&mesh.node_position(node)[..mesh.dim()]))
        .collect();
    let l_phi = system.matvec(&exact);
    Ok(rhs_vector
        .iter()
        .zip(l_phi)
        .map(|(b, lp)| b - lp)
        .collect())
}

/// ξ, τ and norms for a computed solution.
pub fn error_report(
    solution: &Solution,
    case: &TestCase,
    mesh: &Mesh,
    classification: &NodeClassification,
    tau: Vec<f64>,
) -> ErrorReport {
    let xi: Vec<f64> = classification
        .interior_nodes()
        .iter()
        .zip(&solution.phi)
        .map(|(&node, phi)| phi - case.phi(&mesh.node_position(node)[..mesh.dim()]))
        .collect();
    ErrorReport::from_fields(xi, tau, mesh.spacing())
}

/// Observed order p = ln(L₁/L₂)/ln(Δ₁/Δ₂) between a coarse and a fine run.
pub fn order_estimate(
    norm_coarse: f64,
    norm_fine: f64,
    delta_coarse: f64,
    delta_fine: f64,
) -> Result<f64> {
    for (name, v) in [
        ("norm_coarse", norm_coarse),
        ("norm_fine", norm_fine),
        ("delta_coarse", delta_coarse),
        ("delta_fine", delta_fine),
    ] {
        if v <= 0.0 {
            return Err(Error::Usage(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((norm_coarse / norm_fine).ln() / (delta_coarse / delta_fine).ln())
}

/// The three-component 1-D error decomposition ξ ≈ ξᴸ + ξᴿ + ξⁱⁿ together
/// with the closed-form prediction of ξ from the truncation field.
#[derive(Debug, Clone)]
pub struct Decomposition1D {
    pub xi_left: Vec<f64>,
    pub xi_right: Vec<f64>,
    pub xi_interior: Vec<f64>,
    /// ξ reconstructed exactly from τ through the discrete relations; equals
    /// the solved ξ to solver precision.
    pub xi_predicted: Vec<f64>,
    pub theta_left: f64,
    pub theta_right: f64,
    pub scheme: SchemeKind,
    pub mode: RhsMode,
}

/// Explicit 1-D decomposition from the truncation field of an assembled
/// problem. `taus` must hold one value per interior node, left to right.
pub fn decompose_1d(
    case: &TestCase,
    mesh: &Mesh,
    classification: &NodeClassification,
    scheme: SchemeKind,
    mode: RhsMode,
    taus: &[f64],
) -> Result<Decomposition1D> {
    if case.dim != 1 || mesh.dim() != 1 {
        return Err(Error::Unsupported(
            "the explicit error decomposition is 1-D only".into(),
        ));
    }
    let m = classification.n_interior();
    if taus.len() != m || m < 3 {
        return Err(Error::Usage(format!(
            "need one τ per interior node (≥3), got {} for {}",
            taus.len(),
            m
        )));
    }
    let theta_left = classification
        .thetas_of_unknown(0)
        .and_then(|t| t.get(0, -1))
        .ok_or_else(|| Error::Usage("leftmost interior node carries no θ".into()))?;
    let theta_right = classification
        .thetas_of_unknown(m - 1)
        .and_then(|t| t.get(0, 1))
        .ok_or_else(|| Error::Usage("rightmost interior node carries no θ".into()))?;

    // interior nodes are numbered 1..N-1 in the analysis formulas
    let n_big = (m + 1) as f64;
    let h = mesh.spacing();
    let h2 = h * h;
    let tau1 = taus[0];
    let tau_last = taus[m - 1];

    let mut xi_left = Vec::with_capacity(m);
    let mut xi_right = Vec::with_capacity(m);
    for k in 0..m {
        let i = (k + 1) as f64;
        match scheme {
            SchemeKind::Linear => {
                xi_left.push((i / n_big - 1.0) * theta_left * tau1 * h2);
                xi_right.push(-(i / n_big) * theta_right * tau_last * h2);
            }
            SchemeKind::Quadratic { .. } => {
                xi_left.push(
                    0.5 * (i / n_big - 1.0) * theta_left * (1.0 + theta_left) * tau1 * h2,
                );
                xi_right.push(
                    -(i / (2.0 * n_big)) * theta_right * (1.0 + theta_right) * tau_last * h2,
                );
            }
        }
    }

    let xi_predicted = predict_xi(scheme, taus, theta_left, theta_right, h);
    let xi_interior = interior_contribution(case, mesh, classification, theta_left, theta_right)?;

    Ok(Decomposition1D {
        xi_left,
        xi_right,
        xi_interior,
        xi_predicted,
        theta_left,
        theta_right,
        scheme,
        mode,
    })
}

/// Exact discrete reconstruction of ξ from τ: telescope the first-order
/// differences H and close with the scheme's boundary relations.
fn predict_xi(
    scheme: SchemeKind,
    taus: &[f64],
    theta_left: f64,
    theta_right: f64,
    h: f64,
) -> Vec<f64> {
    let m = taus.len();
    let n_big = (m + 1) as f64;
    let denom = n_big + theta_left + theta_right - 2.0;
    let tau_sum: f64 = taus.iter().sum();
    let (h_half, xi1) = match scheme {
        SchemeKind::Linear => {
            // H_{1/2} = −Δ Σ (N−1+θR−k) τ_k / (N+θL+θR−2), ξ₁ = θL Δ H_{1/2}
            let mut s = 0.0;
            for (k0, tau) in taus.iter().enumerate() {
                let k = (k0 + 1) as f64;
                s += (n_big - 1.0 + theta_right - k) * tau;
            }
            let h_half = -h * s / denom;
            (h_half, theta_left * h * h_half)
        }
        SchemeKind::Quadratic { .. } => {
            // H_{N−1/2} from the quadratic closure, then walk back
            let mut s = theta_left * (1.0 + theta_left) / 2.0 * taus[0]
                + ((n_big + theta_left - 2.0) + theta_right * (1.0 - theta_right) / 2.0)
                    * taus[m - 1];
            for (k0, tau) in taus.iter().enumerate().take(m - 1).skip(1) {
                let k = (k0 + 1) as f64;
                s += (theta_left + k - 1.0) * tau;
            }
            let h_last = h * s / denom;
            let h_half = h_last - h * tau_sum;
            let xi1 = theta_left * h * h_half
                + theta_left * (1.0 - theta_left) * h * h * taus[0] / 2.0;
            (h_half, xi1)
        }
    };
    let mut xi = Vec::with_capacity(m);
    xi.push(xi1);
    let mut h_running = h_half;
    for k in 0..m - 1 {
        h_running += h * taus[k];
        xi.push(xi[k] + h * h_running);
    }
    xi
}

/// Interior contribution ξⁱⁿ by quadrature of x·φ⁗ between the interfaces.
fn interior_contribution(
    case: &TestCase,
    mesh: &Mesh,
    classification: &NodeClassification,
    theta_left: f64,
    theta_right: f64,
) -> Result<Vec<f64>> {
    let m = classification.n_interior();
    let h = mesh.spacing();
    let first = classification.interior_nodes()[0];
    let last = classification.interior_nodes()[m - 1];
    let x_first = mesh.node_position(first)[0];
    let x_last = mesh.node_position(last)[0];
    let x_l = x_first - theta_left * h;
    let x_r = x_last + theta_right * h;

    // analytic fourth derivative when the case provides one, otherwise
    // central differences of φᵉ at step Δ/8
    let fd_step = h / 8.0;
    let d4: Box<dyn Fn(f64) -> f64 + Sync> = match case.derivs_1d {
        Some(d) => Box::new(d.d4),
        None => {
            let phi = case.exact_phi;
            Box::new(move |x: f64| {
                let f = |t: f64| phi(&[t]);
                (f(x - 2.0 * fd_step) - 4.0 * f(x - fd_step) + 6.0 * f(x)
                    - 4.0 * f(x + fd_step)
                    + f(x + 2.0 * fd_step))
                    / fd_step.powi(4)
            })
        }
    };
    let tol = 1e-10;
    let whole_x = quadrature::integrate(&|x| x * d4(x), x_l, x_r, tol);
    let whole = quadrature::integrate(&|x| d4(x), x_l, x_r, tol);
    let span = x_r - x_l;
    let out = (0..m)
        .into_par_iter()
        .map(|k| {
            let xi_pos = x_first + k as f64 * h;
            let frac = (xi_pos - x_l) / span;
            let part_x = quadrature::integrate(&|x| x * d4(x), x_l, xi_pos, tol);
            let part = quadrature::integrate(&|x| d4(x), x_l, xi_pos, tol);
            let tail = quadrature::integrate(&|x| d4(x), xi_pos, x_r, tol);
            h * h / 12.0
                * (part_x - frac * whole_x + x_l * frac * whole - x_l * part
                    + (xi_pos - x_l) * tail)
        })
        .collect();
    Ok(out)
}

/// One θ sample of the boundary-error sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub theta: f64,
    /// |ξᴸ| at the first interior node, from the measured τ₁.
    pub xi_left_magnitude: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub argmax_theta: f64,
}

/// Sweep the left cut fraction over `theta_grid` with θ_R pinned to 1,
/// solving the 1-D problem each time and isolating the left-boundary error
/// component.
///
/// The case supplies φ and b; its interval geometry is re-anchored per θ so
/// that the extreme interior nodes stay fixed while the interface moves.
pub fn boundary_error_sweep(
    case: &TestCase,
    scheme: SchemeKind,
    mode: RhsMode,
    theta_grid: &[f64],
    n_nodes: usize,
) -> Result<SweepResult> {
    if case.dim != 1 {
        return Err(Error::Unsupported("the boundary sweep is 1-D only".into()));
    }
    for &t in theta_grid {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Usage(format!("sweep θ {t} outside (0, 1)")));
        }
    }
    let probe = case.mesh(n_nodes)?;
    let h = probe.spacing();
    let i_left = (0.1875 * (n_nodes as f64 - 1.0)).round() as usize;
    let i_right = (0.8125 * (n_nodes as f64 - 1.0)).round() as usize;
    let x_left_node = probe.node_position(i_left)[0];
    let x_right_node = probe.node_position(i_right)[0];

    let points: Vec<Result<SweepPoint>> = theta_grid
        .par_iter()
        .map(|&theta| {
            let mut swept = case.clone();
            swept.geometry = LevelSetGeometry::Interval1D {
                left: x_left_node - theta * h,
                right: x_right_node + h,
            };
            let mesh = swept.mesh(n_nodes)?;
            let cls = classify(&mesh, &swept.geometry)?;
            let field = rhs::build_rhs(&swept, &mesh, &cls, mode)?;
            let (system, rhs_vector) =
                assemble(&mesh, &cls, scheme, &|p: &[f64]| swept.phi(p), &field)?;
            let opts = SolveOptions::new(SolveMethod::DirectBanded);
            let solution = solve(&system, &rhs_vector, &opts)?;
            let tau = truncation_field(&swept, &mesh, &cls, scheme, &field)?;
            // magnitude of ξᴸ at node 1 per the isolated-boundary formulas;
            // the solve pins ξ so τ and ξ come from the same operator
            let _ = solution;
            let n_big = (cls.n_interior() + 1) as f64;
            let coeff = match scheme {
                SchemeKind::Linear => (1.0 / n_big - 1.0) * theta * tau[0],
                SchemeKind::Quadratic { .. } => {
                    0.5 * (1.0 / n_big - 1.0) * theta * (1.0 + theta) * tau[0]
                }
            };
            Ok(SweepPoint {
                theta,
                xi_left_magnitude: (coeff * h * h).abs(),
            })
        })
        .collect();

    let mut out = Vec::with_capacity(points.len());
    for p in points {
        out.push(p?);
    }
    let argmax = out
        .iter()
        .max_by(|a, b| a.xi_left_magnitude.total_cmp(&b.xi_left_magnitude))
        .map(|p| p.theta)
        .unwrap_or(f64::NAN);
    Ok(SweepResult {
        points: out,
        argmax_theta: argmax,
    })
}

/// One (θx, θy) cell of the leading-coefficient comparison contours.
#[derive(Debug, Clone, Copy)]
pub struct ContourRow {
    pub theta_x: f64,
    pub theta_y: f64,
    /// |linear coeff with sampled RHS| − |linear coeff|, ∂²/∂x² part.
    pub lin_x: f64,
    pub lin_y: f64,
    pub lin_sum: f64,
    /// |linear RHS coeff| − |quadratic RHS coeff|, per part and summed.
    pub lq_x: f64,
    pub lq_y: f64,
    pub lq_sum: f64,
}

/// Evaluate the truncation-coefficient comparisons over a (θx, θy) grid
/// using the straight-line average interface and the sampled δ̄.
///
/// Grid points are θ = k/resolution for k = 1..=resolution on each axis.
pub fn leading_coeff_contours(resolution: usize, sampling_level: u32) -> Result<Vec<ContourRow>> {
    if resolution < 2 {
        return Err(Error::Usage("contour resolution must be at least 2".into()));
    }
    let cells: Vec<(usize, usize)> = (1..=resolution)
        .flat_map(|i| (1..=resolution).map(move |j| (i, j)))
        .collect();
    let rows: Vec<Result<ContourRow>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let theta_x = i as f64 / resolution as f64;
            let theta_y = j as f64 / resolution as f64;
            let line =
                LevelSetGeometry::average_interface(theta_x, theta_y, [0.0, 0.0], 1.0)?;
            let dbar = rhs::delta_sampled_at(&line, &[0.0, 0.0], 1.0, sampling_level)?;
            let cx = 0.5 * (1.0 - theta_x);
            let cy = 0.5 * (1.0 - theta_y);
            let d1 = dbar - 1.0;
            Ok(ContourRow {
                theta_x,
                theta_y,
                lin_x: (cx + d1).abs() - cx.abs(),
                lin_y: (cy + d1).abs() - cy.abs(),
                lin_sum: (cx + cy + 2.0 * d1).abs() - (cx + cy).abs(),
                lq_x: (cx + d1).abs() - d1.abs(),
                lq_y: (cy + d1).abs() - d1.abs(),
                lq_sum: (cx + cy + 2.0 * d1).abs() - (2.0 * d1).abs(),
            })
        })
        .collect();
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn order_estimate_examples() {
        let p = order_estimate(8.013e-6, 2.0971e-6, 2.0 / 40.0, 2.0 / 80.0).unwrap();
        assert!((p - 1.93).abs() < 0.005, "p = {p}");
        let p = order_estimate(1.0, 0.25, 0.1, 0.05).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        let p = order_estimate(2.3643e-7, 5.8779e-8, 2.0 / 40.0, 2.0 / 80.0).unwrap();
        assert!((p - 2.00).abs() < 0.01, "p = {p}");
        assert!(order_estimate(0.0, 1.0, 0.1, 0.05).is_err());
    }

    #[test]
    fn zero_taus_predict_zero_error() {
        let case = cases::case_1d_with_bounds(0.315625);
        let mesh = case.mesh(161).unwrap();
        let cls = classify(&mesh, &case.geometry).unwrap();
        let taus = vec![0.0; cls.n_interior()];
        let dec = decompose_1d(&case, &mesh, &cls, SchemeKind::Linear, RhsMode::Exact, &taus)
            .unwrap();
        for v in &dec.xi_predicted {
            assert_eq!(*v, 0.0);
        }
        for (l, r) in dec.xi_left.iter().zip(&dec.xi_right) {
            assert_eq!(*l, 0.0);
            assert_eq!(*r, 0.0);
        }
    }

    #[test]
    fn predicted_xi_matches_solved_xi() {
        // the discrete reconstruction from τ must agree with the actual
        // solve to solver precision, both schemes
        let case = cases::case_1d_with_bounds(0.315625);
        let mesh = case.mesh(161).unwrap();
        let cls = classify(&mesh, &case.geometry).unwrap();
        for scheme in [
            SchemeKind::Linear,
            SchemeKind::Quadratic {
                fallback_enabled: true,
            },
        ] {
            let mode = RhsMode::Sampled { level: 8 };
            let field = rhs::build_rhs(&case, &mesh, &cls, mode).unwrap();
            let (system, rhs_vector) =
                assemble(&mesh, &cls, scheme, &|p: &[f64]| case.phi(p), &field).unwrap();
            let sol = solve(
                &system,
                &rhs_vector,
                &SolveOptions::new(SolveMethod::DirectBanded),
            )
            .unwrap();
            let tau = truncation_field(&case, &mesh, &cls, scheme, &field).unwrap();
            let report = error_report(&sol, &case, &mesh, &cls, tau.clone());
            let dec = decompose_1d(&case, &mesh, &cls, scheme, mode, &tau).unwrap();
            let scale = report.l_infinity.max(1e-300);
            for (p, x) in dec.xi_predicted.iter().zip(&report.xi) {
                assert!(
                    (p - x).abs() <= 1e-9 * scale,
                    "{scheme:?}: predicted {p} vs solved {x}"
                );
            }
        }
    }

    #[test]
    fn contours_shape_and_trivial_corner() {
        let rows = leading_coeff_contours(21, 6).unwrap();
        assert_eq!(rows.len(), 441);
        let corner = rows
            .iter()
            .find(|r| r.theta_x == 1.0 && r.theta_y == 1.0)
            .unwrap();
        // boundary through both neighbor nodes: the (1−θ)/2 coefficients
        // vanish, δ̄ only sees the cut corner, and the two RHS-affected
        // schemes coincide
        assert!(corner.lin_sum > 0.0);
        assert_eq!(corner.lq_sum, 0.0);
        let mid = rows
            .iter()
            .find(|r| (r.theta_x - 10.0 / 21.0).abs() < 1e-12 && r.theta_x == r.theta_y)
            .unwrap();
        assert!(mid.lq_sum < 0.0);
        assert!(mid.lin_sum < 0.0);
    }
}
