//! RHS fields: exact values, PIC-style particle sampling of the
//! near-boundary deposition volume, δ ratios and the δ̄ calibration.
//!
//! Sampling follows the cloud-in-cell picture: the deposition support of a
//! node spans one cell on each side per axis. The support is split into
//! 2^level subintervals per axis, one virtual particle sits at each subcell
//! center, and a particle contributes its tent weight only if it lies
//! strictly inside the domain. The 1/2^(D·(level−1)) normalization is the
//! subcell volume over the cell volume, so a fully interior support
//! reproduces a locally uniform field exactly.

use rayon::prelude::*;

use crate::cases::TestCase;
use crate::error::{Error, Result};
use crate::geometry::LevelSetGeometry;
use crate::grid::{Mesh, NodeClassification};
use crate::quadrature;

/// How the RHS vector is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// Analytic b at every interior node.
    Exact,
    /// Particle-sampled b̄ at near-boundary nodes, analytic elsewhere.
    Sampled { level: u32 },
    /// Sampled, then divided by the uniform-field ratio δ̄ (b̃ = b̄/δ̄).
    Calibrated { level: u32 },
    /// Analytic b scaled by (1+θ)/2 at near-boundary nodes; 1-D only. This
    /// lifts the linear scheme's boundary truncation error to first order.
    ScaledLinearToQuad,
}

impl RhsMode {
    pub fn level(&self) -> Option<u32> {
        match self {
            RhsMode::Sampled { level } | RhsMode::Calibrated { level } => Some(*level),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(l) = self.level() {
            if l < 1 {
                return Err(Error::Usage("sampling level must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RhsMode::Exact => "exact",
            RhsMode::Sampled { .. } => "sampled",
            RhsMode::Calibrated { .. } => "calibrated",
            RhsMode::ScaledLinearToQuad => "scaled1d",
        }
    }
}

/// Per-unknown RHS values plus the δ diagnostics recorded on near-boundary
/// nodes in the sampled and calibrated modes.
#[derive(Debug, Clone)]
pub struct RhsField {
    pub values: Vec<f64>,
    /// b̄/b where the exact b is not vanishingly small.
    pub delta: Vec<Option<f64>>,
    /// Uniform-field sampling ratio δ̄ ∈ (0, 1].
    pub delta_bar: Vec<Option<f64>>,
    pub mode: RhsMode,
}

struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn new() -> Self {
        Kahan { sum: 0.0, c: 0.0 }
    }

    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Tent-weighted particle sums over the deposition support of a node:
/// (Σ wᵏ·b(xᵏ), Σ wᵏ) / 2^(D(l−1)), both over the included particles only.
///
/// Particle offsets and tent weights are dyadic, so the weight sum of a
/// fully interior support is exactly 2^(D(l−1)) and the returned ratio is
/// exactly 1; the two sums share one particle enumeration, which makes the
/// calibration b̄/δ̄ exact for locally uniform fields.
fn deposition_sums(
    geometry: &LevelSetGeometry,
    node: &[f64],
    spacing: f64,
    level: u32,
    b: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> (f64, f64) {
    let dim = geometry.dim();
    let m = 1usize << level;
    // offset of particle i from the node, in units of the spacing; exact
    // dyadic rationals in (-1, 1)
    let offsets: Vec<f64> = (0..m)
        .map(|i| (2 * i + 1) as f64 / m as f64 - 1.0)
        .collect();
    let weights: Vec<f64> = offsets.iter().map(|s| 1.0 - s.abs()).collect();

    let mut bsum = Kahan::new();
    let mut wsum = Kahan::new();
    let mut excluded = false;
    let mut p = [0.0; 3];
    let mut idx = [0usize; 3];
    let total = m.pow(dim as u32);
    for flat in 0..total {
        let mut rest = flat;
        let mut w = 1.0;
        for a in 0..dim {
            idx[a] = rest % m;
            rest /= m;
            w *= weights[idx[a]];
            p[a] = node[a] + offsets[idx[a]] * spacing;
        }
        if geometry.inside(&p[..dim]) {
            bsum.add(b(&p[..dim]) * w);
            wsum.add(w);
        } else {
            excluded = true;
        }
    }
    let norm = (m as f64 / 2.0).powi(dim as i32); // 2^(D(l-1))
    let dbar = if excluded { wsum.sum / norm } else { 1.0 };
    (bsum.sum / norm, dbar)
}

/// Particle-sampled RHS value b̄ at a near-boundary node (Eq.-style PIC
/// deposition emulation).
pub fn sample_rhs(
    mesh: &Mesh,
    classification: &NodeClassification,
    node: usize,
    geometry: &LevelSetGeometry,
    b: &(dyn Fn(&[f64]) -> f64 + Sync),
    level: u32,
) -> Result<f64> {
    if level < 1 {
        return Err(Error::Usage("sampling level must be at least 1".into()));
    }
    let unknown = classification
        .unknown_of(node)
        .ok_or_else(|| Error::Usage("sample_rhs called on an exterior node".into()))?;
    if !classification.is_near_boundary(unknown) {
        return Err(Error::Usage(
            "sample_rhs is for near-boundary nodes; interior nodes take the exact value".into(),
        ));
    }
    let pos = mesh.node_position(node);
    Ok(deposition_sums(geometry, &pos[..mesh.dim()], mesh.spacing(), level, b).0)
}

/// Uniform-field sampling ratio δ̄ at an arbitrary node position: the same
/// particle sum with b ≡ 1. Exactly 1 when no particle is cut away.
pub fn delta_sampled_at(
    geometry: &LevelSetGeometry,
    node: &[f64],
    spacing: f64,
    level: u32,
) -> Result<f64> {
    if level < 1 {
        return Err(Error::Usage("sampling level must be at least 1".into()));
    }
    Ok(deposition_sums(geometry, node, spacing, level, &|_| 1.0).1)
}

/// δ̄ at a mesh node (interior per the classification).
pub fn delta_sampled(
    mesh: &Mesh,
    classification: &NodeClassification,
    node: usize,
    geometry: &LevelSetGeometry,
    level: u32,
) -> Result<f64> {
    if classification.unknown_of(node).is_none() {
        return Err(Error::Usage("delta_sampled called on an exterior node".into()));
    }
    let pos = mesh.node_position(node);
    delta_sampled_at(geometry, &pos[..mesh.dim()], mesh.spacing(), level)
}

/// Closed-form 1-D ratio for a locally uniform field: δ̄ = −θ²/2 + θ + 1/2.
pub fn delta_closed_1d(theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Usage(format!("theta {theta} outside [0, 1]")));
    }
    Ok(-0.5 * theta * theta + theta + 0.5)
}

/// 1-D deposition-integral ratio for an arbitrary field b(x), for a node at
/// `x` whose cell is truncated at x + θ·spacing on the + side. Serves as the
/// continuum oracle for both `sample_rhs` and `delta_closed_1d`.
pub fn delta_integral_1d(
    b: &dyn Fn(f64) -> f64,
    x: f64,
    spacing: f64,
    theta: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Usage(format!("theta {theta} outside [0, 1]")));
    }
    if spacing <= 0.0 {
        return Err(Error::Usage("spacing must be positive".into()));
    }
    let b0 = b(x);
    if b0.abs() < 1e-300 {
        return Err(Error::Usage(
            "delta ratio undefined where the exact RHS vanishes".into(),
        ));
    }
    let h = spacing;
    let left = quadrature::integrate(&|t| b(t) * (t - (x - h)) / h, x - h, x, 1e-10);
    let right = quadrature::integrate(&|t| b(t) * ((x + h) - t) / h, x, x + theta * h, 1e-10);
    Ok((left + right) / h / b0)
}

/// Analytic RHS at every interior node.
pub fn eval_exact(case: &TestCase, mesh: &Mesh, classification: &NodeClassification) -> RhsField {
    let n = classification.n_interior();
    let values = classification
        .interior_nodes()
        .par_iter()
        .map(|&node| {
            let p = mesh.node_position(node);
            case.b(&p[..mesh.dim()])
        })
        .collect();
    RhsField {
        values,
        delta: vec![None; n],
        delta_bar: vec![None; n],
        mode: RhsMode::Exact,
    }
}

/// Exact b is never divided by; δ is recorded only when |b| clears this.
const DELTA_RECORD_FLOOR: f64 = 1e-300;

/// Build the RHS field for the requested mode. Non-near-boundary interior
/// nodes always carry the analytic value; only the near-boundary set is
/// sampled, calibrated or scaled.
pub fn build_rhs(
    case: &TestCase,
    mesh: &Mesh,
    classification: &NodeClassification,
    mode: RhsMode,
) -> Result<RhsField> {
    mode.validate()?;
    let mut field = eval_exact(case, mesh, classification);
    field.mode = mode;
    match mode {
        RhsMode::Exact => Ok(field),
        RhsMode::ScaledLinearToQuad => {
            if case.dim != 1 {
                return Err(Error::Unsupported(
                    "the (1+θ)/2 RHS scaling is defined for 1-D problems only".into(),
                ));
            }
            for k in classification.near_boundary_unknowns() {
                let t = classification.thetas_of_unknown(k).unwrap();
                for side in t.theta[0].iter().flatten() {
                    field.values[k] *= 0.5 * (1.0 + side);
                }
            }
            Ok(field)
        }
        RhsMode::Sampled { level } | RhsMode::Calibrated { level } => {
            let calibrate = matches!(mode, RhsMode::Calibrated { .. });
            let geometry = &case.geometry;
            let nb = classification.near_boundary_unknowns();
            let sampled: Vec<(usize, f64, f64)> = nb
                .par_iter()
                .map(|&k| {
                    let node = classification.interior_nodes()[k];
                    let pos = mesh.node_position(node);
                    let (bbar, dbar) = deposition_sums(
                        geometry,
                        &pos[..mesh.dim()],
                        mesh.spacing(),
                        level,
                        &|p| case.b(p),
                    );
                    (k, bbar, dbar)
                })
                .collect();
            for (k, bbar, dbar) in sampled {
                let exact = field.values[k];
                if exact.abs() >= DELTA_RECORD_FLOOR {
                    field.delta[k] = Some(bbar / exact);
                }
                field.delta_bar[k] = Some(dbar);
                field.values[k] = if calibrate { bbar / dbar } else { bbar };
            }
            Ok(field)
        }
    }
}
