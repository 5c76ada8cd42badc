//! Discrete Laplacian assembly: standard central stencils inside, linear or
//! quadratic ghost-node elimination at cut edges.

use rayon::prelude::*;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{Mesh, NodeClassification};
use crate::rhs::RhsField;

/// Near-boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// Ghost from the node and the boundary point; keeps the matrix
    /// symmetric.
    Linear,
    /// Ghost from two nodes and the boundary point (Shortley–Weller). When
    /// `fallback_enabled`, directions whose back node is cut away fall back
    /// to the linear elimination; otherwise the back-node term is dropped,
    /// which reproduces the reference behavior of running the quadratic
    /// scheme straight through a trapped node.
    Quadratic { fallback_enabled: bool },
}

impl SchemeKind {
    pub fn is_linear(&self) -> bool {
        matches!(self, SchemeKind::Linear)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SchemeKind::Linear => "linear",
            SchemeKind::Quadratic { .. } => "quadratic",
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Usage(format!("theta {theta} outside (0, 1]")));
    }
    Ok(())
}

/// Linear ghost substitution φᴳ = dirichlet_coeff·φ_D + self_coeff_delta·φᵢ.
///
/// Returns `(self_coeff_delta, dirichlet_coeff)` = ((θ−1)/θ, 1/θ).
pub fn ghost_linear(theta: f64) -> Result<(f64, f64)> {
    check_theta(theta)?;
    Ok(((theta - 1.0) / theta, 1.0 / theta))
}

/// Quadratic ghost substitution
/// φᴳ = dirichlet_coeff·φ_D + self_coeff·φᵢ + back_coeff·φᵢ₋₁.
///
/// Returns `(dirichlet_coeff, self_coeff, back_coeff)`
/// = (2/(θ²+θ), (2θ−2)/θ, (1−θ)/(1+θ)).
pub fn ghost_quadratic(theta: f64) -> Result<(f64, f64, f64)> {
    check_theta(theta)?;
    Ok((
        2.0 / (theta * theta + theta),
        (2.0 * theta - 2.0) / theta,
        (1.0 - theta) / (1.0 + theta),
    ))
}

/// Assembled discrete Laplacian over the interior unknowns, coefficients in
/// 1/spacing² units, Dirichlet contributions accumulated separately.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    rhs_boundary: Vec<f64>,
    node_of: Vec<usize>,
    symmetric: bool,
    fallback_count: usize,
}

impl SparseSystem {
    pub fn n_unknowns(&self) -> usize {
        self.n
    }

    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn rhs_boundary(&self) -> &[f64] {
        &self.rhs_boundary
    }

    /// Flat mesh node index behind each unknown.
    pub fn node_of(&self) -> &[usize] {
        &self.node_of
    }

    pub fn symmetry_flag(&self) -> bool {
        self.symmetric
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback_count
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Largest |row − column| over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |(c, _)| r.abs_diff(*c)))
            .max()
            .unwrap_or(0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|row| row.iter().map(|(c, v)| v * x[*c]).sum())
            .collect()
    }

    /// Exact symmetry scan: every stored coefficient equals its transpose
    /// partner bit for bit.
    pub fn is_exactly_symmetric(&self) -> bool {
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                let vt = self.rows[c]
                    .iter()
                    .find(|(cc, _)| *cc == r)
                    .map(|(_, vv)| *vv);
                if vt != Some(v) {
                    return false;
                }
            }
        }
        true
    }

    /// Debug dump in MatrixMarket coordinate text format.
    pub fn write_matrix_market(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

fn push_entry(entries: &mut Vec<(usize, f64)>, col: usize, val: f64) {
    for e in entries.iter_mut() {
        if e.0 == col {
            e.1 += val;
            return;
        }
    }
    entries.push((col, val));
}

/// Assemble the discrete system: one row per interior node, interior
/// neighbors at ±1/Δ², cut directions eliminated through the scheme's ghost
/// substitution with φ_D evaluated at the cached θ crossing point.
///
/// Returns the system together with the full RHS vector
/// (field values + Dirichlet contributions).
pub fn assemble(
    mesh: &Mesh,
    classification: &NodeClassification,
    scheme: SchemeKind,
    dirichlet: &(dyn Fn(&[f64]) -> f64 + Sync),
    rhs: &RhsField,
) -> Result<(SparseSystem, Vec<f64>)> {
    let n = classification.n_interior();
    if rhs.values.len() != n {
        return Err(Error::Usage(format!(
            "rhs field has {} values for {} unknowns",
            rhs.values.len(),
            n
        )));
    }
    let h = mesh.spacing();
    let inv_h2 = 1.0 / (h * h);
    let dim = mesh.dim();

    struct RowOut {
        entries: Vec<(usize, f64)>,
        boundary: f64,
        fallbacks: usize,
    }

    let rows_out: Vec<Result<RowOut>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let node = classification.interior_nodes()[k];
            let pos = mesh.node_position(node);
            let thetas = classification.thetas_of_unknown(k);
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(2 * dim + 1);
            let mut diag = 0.0;
            let mut boundary = 0.0;
            let mut fallbacks = 0usize;
            for axis in 0..dim {
                for sign in [-1i8, 1] {
                    diag -= inv_h2;
                    let theta = thetas.and_then(|t| t.get(axis, sign));
                    match theta {
                        None => {
                            let nb = mesh.neighbor(node, axis, sign).ok_or_else(|| {
                                Error::Assembly(format!(
                                    "interior node {node} has no neighbor on axis {axis}"
                                ))
                            })?;
                            let col = classification.unknown_of(nb).expect("interior neighbor");
                            push_entry(&mut entries, col, inv_h2);
                        }
                        Some(th) => {
                            let mut bpos = pos;
                            bpos[axis] += sign as f64 * th * h;
                            let phi_d = dirichlet(&bpos[..dim]);
                            let trapped = thetas.map(|t| t.trapped_along(axis)).unwrap_or(false);
                            match scheme {
                                SchemeKind::Linear => {
                                    let (self_delta, d_coeff) = ghost_linear(th)?;
                                    diag += self_delta * inv_h2;
                                    boundary -= d_coeff * phi_d * inv_h2;
                                }
                                SchemeKind::Quadratic { fallback_enabled } => {
                                    if trapped {
                                        if fallback_enabled {
                                            let (self_delta, d_coeff) = ghost_linear(th)?;
                                            diag += self_delta * inv_h2;
                                            boundary -= d_coeff * phi_d * inv_h2;
                                            fallbacks += 1;
                                        } else {
                                            // quadratic pushed through a trapped
                                            // node: the back value is simply
                                            // absent from the stencil
                                            let (d_coeff, self_coeff, _) = ghost_quadratic(th)?;
                                            diag += self_coeff * inv_h2;
                                            boundary -= d_coeff * phi_d * inv_h2;
                                        }
                                    } else {
                                        let back =
                                            mesh.neighbor(node, axis, -sign).ok_or_else(|| {
                                                Error::Assembly(format!(
                                                    "quadratic stencil at node {node} axis {axis} \
                                                     has no back node inside the mesh"
                                                ))
                                            })?;
                                        let back_col = classification
                                            .unknown_of(back)
                                            .expect("untrapped back node is interior");
                                        let (d_coeff, self_coeff, back_coeff) =
                                            ghost_quadratic(th)?;
                                        diag += self_coeff * inv_h2;
                                        push_entry(&mut entries, back_col, back_coeff * inv_h2);
                                        boundary -= d_coeff * phi_d * inv_h2;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            push_entry(&mut entries, k, diag);
            entries.sort_unstable_by_key(|e| e.0);
            Ok(RowOut {
                entries,
                boundary,
                fallbacks,
            })
        })
        .collect();

    let mut rows = Vec::with_capacity(n);
    let mut rhs_boundary = Vec::with_capacity(n);
    let mut fallback_count = 0;
    for r in rows_out {
        let r = r?;
        rows.push(r.entries);
        rhs_boundary.push(r.boundary);
        fallback_count += r.fallbacks;
    }

    let rhs_vector: Vec<f64> = rhs
        .values
        .iter()
        .zip(&rhs_boundary)
        .map(|(v, b)| v + b)
        .collect();

    Ok((
        SparseSystem {
            n,
            rows,
            rhs_boundary,
            node_of: classification.interior_nodes().to_vec(),
            symmetric: scheme.is_linear(),
            fallback_count,
        },
        rhs_vector,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::geometry::LevelSetGeometry;
    use crate::grid::classify;
    use crate::rhs::{build_rhs, RhsMode};

    #[test]
    fn ghost_linear_examples() {
        assert_eq!(ghost_linear(1.0).unwrap(), (0.0, 1.0));
        assert_eq!(ghost_linear(0.5).unwrap(), (-1.0, 2.0));
        assert_eq!(ghost_linear(0.25).unwrap(), (-3.0, 4.0));
        assert!(ghost_linear(0.0).is_err());
    }

    #[test]
    fn ghost_quadratic_examples() {
        assert_eq!(ghost_quadratic(1.0).unwrap(), (1.0, 0.0, 0.0));
        let (d, s, b) = ghost_quadratic(0.5).unwrap();
        assert!((d - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(s, -2.0);
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
        for theta in [0.05, 0.3, 0.77, 1.0] {
            let (d, s, b) = ghost_quadratic(theta).unwrap();
            assert!((d + s + b - 1.0).abs() < 1e-13); // constants extrapolate exactly
        }
    }

    #[test]
    fn quadratic_ghost_exact_on_quadratics() {
        // substitute φ(x) = αx² + βx + γ with the node at 0, boundary at θh,
        // back node at −h; the ghost must equal φ(h) to rounding
        let (alpha, beta, gamma) = (1.7, -0.4, 0.9);
        let phi = |x: f64| alpha * x * x + beta * x + gamma;
        let h = 0.05;
        for theta in [0.1, 0.37, 0.5, 0.82, 1.0] {
            let (d, s, b) = ghost_quadratic(theta).unwrap();
            let ghost = d * phi(theta * h) + s * phi(0.0) + b * phi(-h);
            assert!((ghost - phi(h)).abs() < 1e-12, "theta {theta}");
        }
    }

    fn tridiag_case() -> (crate::grid::Mesh, crate::grid::NodeClassification) {
        // five nodes on [0, 1]; interfaces exactly on nodes 0 and 4
        let mesh = crate::grid::Mesh::over_box(1, [0.0; 3], [1.0, 0.0, 0.0], [5, 1, 1]).unwrap();
        let geom = LevelSetGeometry::Interval1D {
            left: 0.0,
            right: 1.0,
        };
        let cls = classify(&mesh, &geom).unwrap();
        (mesh, cls)
    }

    #[test]
    fn theta_one_recovers_classic_tridiagonal() {
        let (mesh, cls) = tridiag_case();
        assert_eq!(cls.n_interior(), 3);
        let field = RhsField {
            values: vec![0.0; 3],
            delta: vec![None; 3],
            delta_bar: vec![None; 3],
            mode: RhsMode::Exact,
        };
        for scheme in [
            SchemeKind::Linear,
            SchemeKind::Quadratic {
                fallback_enabled: true,
            },
        ] {
            let (sys, rhs_vec) = assemble(&mesh, &cls, scheme, &|_| 1.0, &field).unwrap();
            let h2 = mesh.spacing() * mesh.spacing();
            assert_eq!(sys.row(1), &[(0, 1.0 / h2), (1, -2.0 / h2), (2, 1.0 / h2)]);
            // φ_D = 1 lands on the rhs at both end rows
            assert_eq!(rhs_vec[0], -1.0 / h2);
            assert_eq!(rhs_vec[2], -1.0 / h2);
            assert_eq!(rhs_vec[1], 0.0);
        }
    }

    #[test]
    fn linear_scheme_matrix_is_exactly_symmetric() {
        let case = cases::case_2d();
        let mesh = case.mesh(41).unwrap();
        let cls = classify(&mesh, &case.geometry).unwrap();
        let field = build_rhs(&case, &mesh, &cls, RhsMode::Exact).unwrap();
        let (sys, _) = assemble(&mesh, &cls, SchemeKind::Linear, &|p| case.phi(p), &field).unwrap();
        assert!(sys.symmetry_flag());
        assert!(sys.is_exactly_symmetric());
        let (sysq, _) = assemble(
            &mesh,
            &cls,
            SchemeKind::Quadratic {
                fallback_enabled: true,
            },
            &|p| case.phi(p),
            &field,
        )
        .unwrap();
        assert!(!sysq.symmetry_flag());
    }

    #[test]
    fn constant_field_residual_vanishes() {
        // φ ≡ c with matching Dirichlet data: residual ≤ 1e-13·c/Δ²
        let c = 3.25;
        let case = cases::case_2d();
        let mesh = case.mesh(41).unwrap();
        let cls = classify(&mesh, &case.geometry).unwrap();
        let field = RhsField {
            values: vec![0.0; cls.n_interior()],
            delta: vec![None; cls.n_interior()],
            delta_bar: vec![None; cls.n_interior()],
            mode: RhsMode::Exact,
        };
        let bound = 1e-13 * c / (mesh.spacing() * mesh.spacing());
        for scheme in [
            SchemeKind::Linear,
            SchemeKind::Quadratic {
                fallback_enabled: true,
            },
        ] {
            let (sys, rhs_vec) = assemble(&mesh, &cls, scheme, &|_| c, &field).unwrap();
            let ax = sys.matvec(&vec![c; sys.n_unknowns()]);
            for k in 0..sys.n_unknowns() {
                let r = ax[k] - rhs_vec[k];
                assert!(r.abs() <= bound, "row {k}: residual {r:.3e}");
            }
        }
    }

    #[test]
    fn quadratic_with_theta_one_matches_linear() {
        let (mesh, cls) = tridiag_case();
        let field = RhsField {
            values: vec![1.0, 2.0, 3.0],
            delta: vec![None; 3],
            delta_bar: vec![None; 3],
            mode: RhsMode::Exact,
        };
        let d = |p: &[f64]| p[0] * 2.0;
        let (a, ra) = assemble(&mesh, &cls, SchemeKind::Linear, &d, &field).unwrap();
        let (b, rb) = assemble(
            &mesh,
            &cls,
            SchemeKind::Quadratic {
                fallback_enabled: false,
            },
            &d,
            &field,
        )
        .unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(ra, rb);
    }

    #[test]
    fn trapped_node_fallback_counts() {
        // disc one cell wide traps the arm nodes of the plus shape
        let mesh =
            crate::grid::Mesh::over_box(2, [0.0; 3], [1.0, 1.0, 0.0], [5, 5, 1]).unwrap();
        let geom = LevelSetGeometry::Starfish2D {
            center: [0.5, 0.5],
            base_radius: 0.31,
            amplitude: 0.0,
            lobes: 1,
        };
        let cls = classify(&mesh, &geom).unwrap();
        let field = RhsField {
            values: vec![0.0; cls.n_interior()],
            delta: vec![None; cls.n_interior()],
            delta_bar: vec![None; cls.n_interior()],
            mode: RhsMode::Exact,
        };
        let (sys, _) = assemble(
            &mesh,
            &cls,
            SchemeKind::Quadratic {
                fallback_enabled: true,
            },
            &|_| 0.0,
            &field,
        )
        .unwrap();
        // four arm nodes, each trapped along one axis: two directions each
        assert_eq!(sys.fallback_count(), 8);
        let (sys2, _) = assemble(
            &mesh,
            &cls,
            SchemeKind::Quadratic {
                fallback_enabled: false,
            },
            &|_| 0.0,
            &field,
        )
        .unwrap();
        assert_eq!(sys2.fallback_count(), 0);
    }

    #[test]
    fn matrix_market_dump_shape() {
        let (mesh, cls) = tridiag_case();
        let field = RhsField {
            values: vec![0.0; 3],
            delta: vec![None; 3],
            delta_bar: vec![None; 3],
            mode: RhsMode::Exact,
        };
        let (sys, _) = assemble(&mesh, &cls, SchemeKind::Linear, &|_| 0.0, &field).unwrap();
        let mut buf = Vec::new();
        sys.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "%%MatrixMarket matrix coordinate real general"
        );
        assert_eq!(lines.next().unwrap(), "3 3 7");
    }
}
