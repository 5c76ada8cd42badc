//! Batch experiment driver: validated configs in, CSV/JSON artifacts out.
//!
//! Artifacts are byte-reproducible: fixed orderings, floats at 17
//! significant digits, no clocks.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{
    boundary_error_sweep, decompose_1d, error_report, leading_coeff_contours, order_estimate,
    truncation_field, ErrorReport,
};
use crate::cases::{self, TestCase};
use crate::error::{Error, Result};
use crate::grid::{classify, theta_map, Mesh, NodeClassification};
use crate::rhs::{build_rhs, RhsMode};
use crate::scheme::{assemble, SchemeKind};
use crate::solver::{solve, SolveMethod, SolveOptions};

/// Raw experiment configuration, as read from a JSON document or CLI flags.
/// Unset fields take per-command defaults during validation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub case: Option<String>,
    /// "linear" or "quadratic".
    pub scheme: Option<String>,
    /// Quadratic-scheme fallback at trapped nodes (default true).
    pub fallback: Option<bool>,
    /// "exact", "sampled", "calibrated" or "scaled1d".
    pub rhs: Option<String>,
    /// Particle partition level for sampled/calibrated modes.
    pub level: Option<u32>,
    /// Nodes per axis; one entry for a single solve, an increasing list for
    /// a refinement study.
    pub nodes: Option<Vec<usize>>,
    /// "dense", "banded", "cg" or "bicgstab"; default picks by dimension.
    pub solver: Option<String>,
    pub tol: Option<f64>,
    pub max_iterations: Option<usize>,
    /// Interface half-width override for case1d (default 0.3156).
    pub boundary_1d: Option<f64>,
    /// θ-grid resolution for the contour command.
    pub resolution: Option<usize>,
    pub out: Option<PathBuf>,
    /// "csv" or "json".
    pub format: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overlay: fields set in `self` win over `base` (CLI flags over file).
    pub fn over(self, base: ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            case: self.case.or(base.case),
            scheme: self.scheme.or(base.scheme),
            fallback: self.fallback.or(base.fallback),
            rhs: self.rhs.or(base.rhs),
            level: self.level.or(base.level),
            nodes: self.nodes.or(base.nodes),
            solver: self.solver.or(base.solver),
            tol: self.tol.or(base.tol),
            max_iterations: self.max_iterations.or(base.max_iterations),
            boundary_1d: self.boundary_1d.or(base.boundary_1d),
            resolution: self.resolution.or(base.resolution),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn ext(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// A validated, fully defaulted execution plan.
pub struct Plan {
    pub case: TestCase,
    pub scheme: SchemeKind,
    pub mode: RhsMode,
    pub nodes: Vec<usize>,
    pub method: Option<SolveMethod>,
    pub tol: f64,
    pub max_iterations: usize,
    pub resolution: usize,
    pub level: u32,
    pub out: PathBuf,
    pub format: OutputFormat,
}

impl Plan {
    fn solve_options(&self, dim: usize, symmetric: bool) -> SolveOptions {
        let method = self
            .method
            .unwrap_or_else(|| SolveMethod::default_for(dim, symmetric));
        let mut opts = SolveOptions::new(method).with_tolerance(self.tol);
        opts.max_iterations = self.max_iterations;
        opts
    }
}

/// Which command the plan is validated for; fixes the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Solve,
    Convergence,
    Contours,
    Sweep,
    Decompose1d,
    ThetaMap,
}

/// Default particle levels: measurement-grade sampling for tables, fine
/// sampling for the θ sweep where staircase noise would blur the argmax,
/// contour-grade in between.
fn default_level(kind: CommandKind) -> u32 {
    match kind {
        CommandKind::Sweep => 14,
        CommandKind::Contours => 6,
        _ => 3,
    }
}

pub fn validate(config: &ExperimentConfig, kind: CommandKind) -> Result<Plan> {
    let case_name = config.case.as_deref().unwrap_or(match kind {
        CommandKind::Sweep | CommandKind::Decompose1d => "case1d",
        CommandKind::Contours => "case2d",
        _ => {
            return Err(Error::Config("missing required field 'case'".into()));
        }
    });
    let mut case = cases::case_by_name(case_name)?;
    if let Some(b) = config.boundary_1d {
        if case.dim != 1 {
            return Err(Error::Config(
                "boundary_1d only applies to case1d".into(),
            ));
        }
        if !(b > 0.0 && b < 0.5) {
            return Err(Error::Config(format!(
                "boundary_1d must lie in (0, 0.5), got {b}"
            )));
        }
        case = cases::case_1d_with_bounds(b);
    }

    let scheme = match config.scheme.as_deref().unwrap_or("linear") {
        "linear" => SchemeKind::Linear,
        "quadratic" => SchemeKind::Quadratic {
            fallback_enabled: config.fallback.unwrap_or(true),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown scheme '{other}' (expected linear or quadratic)"
            )))
        }
    };

    let level = config.level.unwrap_or_else(|| default_level(kind));
    if level < 1 || level > 20 {
        return Err(Error::Config(format!("level {level} outside 1..=20")));
    }
    let mode = match config.rhs.as_deref().unwrap_or("exact") {
        "exact" => RhsMode::Exact,
        "sampled" => RhsMode::Sampled { level },
        "calibrated" => RhsMode::Calibrated { level },
        "scaled1d" => RhsMode::ScaledLinearToQuad,
        other => {
            return Err(Error::Config(format!(
                "unknown rhs mode '{other}' (expected exact, sampled, calibrated or scaled1d)"
            )))
        }
    };

    let nodes = match (&config.nodes, kind) {
        (Some(v), _) => v.clone(),
        (None, CommandKind::Sweep) => vec![641],
        (None, CommandKind::Decompose1d) => vec![161],
        (None, CommandKind::Contours) => vec![],
        _ => {
            return Err(Error::Config("missing required field 'nodes'".into()));
        }
    };
    for &n in &nodes {
        if n < 3 {
            return Err(Error::Config(format!("mesh size {n} is below 3")));
        }
    }
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "refinement list must be strictly increasing".into(),
        ));
    }

    let method = config.solver.as_deref().map(SolveMethod::parse).transpose()?;
    let tol = config.tol.unwrap_or(1e-13);
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::Config(format!("tol {tol} outside (0, 1e-6]")));
    }
    let resolution = config.resolution.unwrap_or(101);
    if resolution < 2 {
        return Err(Error::Config("resolution must be at least 2".into()));
    }
    let format = match config.format.as_deref().unwrap_or("csv") {
        "csv" => OutputFormat::Csv,
        "json" => OutputFormat::Json,
        other => {
            return Err(Error::Config(format!(
                "unknown format '{other}' (expected csv or json)"
            )))
        }
    };
    Ok(Plan {
        case,
        scheme,
        mode,
        nodes,
        method,
        tol,
        max_iterations: config.max_iterations.unwrap_or(50_000),
        resolution,
        level,
        out: config.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        format,
    })
}

/// One table cell; formatting is fixed so artifacts diff byte-for-byte.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => serde_json::json!(v),
            Cell::Float(v) => serde_json::json!(v),
            Cell::Bool(v) => serde_json::json!(v),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

fn write_table(
    out_dir: &Path,
    stem: &str,
    format: OutputFormat,
    headers: &[&str],
    rows: &[Vec<Cell>],
) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{stem}.{}", format.ext()));
    let mut file = fs::File::create(&path)?;
    match format {
        OutputFormat::Csv => {
            writeln!(file, "{}", headers.join(","))?;
            for row in rows {
                let line: Vec<String> = row.iter().map(Cell::csv).collect();
                writeln!(file, "{}", line.join(","))?;
            }
        }
        OutputFormat::Json => {
            let objs: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    let mut map = serde_json::Map::new();
                    for (h, c) in headers.iter().zip(row) {
                        map.insert((*h).to_string(), c.json());
                    }
                    serde_json::Value::Object(map)
                })
                .collect();
            serde_json::to_writer_pretty(&mut file, &objs)
                .map_err(|e| Error::Config(format!("json write failed: {e}")))?;
            writeln!(file)?;
        }
    }
    Ok(path)
}

/// Summary of a single solve, also serialized to `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub n_interior: usize,
    pub n_near_boundary: usize,
    pub fallback_count: usize,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "Linf")]
    pub linf: f64,
    pub residual: f64,
}

struct SolveOutcome {
    mesh: Mesh,
    classification: NodeClassification,
    report: ErrorReport,
    fallback_count: usize,
    residual: f64,
}

fn solve_one(plan: &Plan, n: usize) -> Result<SolveOutcome> {
    let case = &plan.case;
    let mesh = case.mesh(n)?;
    let classification = classify(&mesh, &case.geometry)?;
    let field = build_rhs(case, &mesh, &classification, plan.mode)?;
    let (system, rhs_vector) = assemble(
        &mesh,
        &classification,
        plan.scheme,
        &|p: &[f64]| case.phi(p),
        &field,
    )?;
    let opts = plan.solve_options(mesh.dim(), system.symmetry_flag());
    let solution = solve(&system, &rhs_vector, &opts)?;
    let tau = truncation_field(case, &mesh, &classification, plan.scheme, &field)?;
    let residual = solution.residual;
    let report = error_report(&solution, case, &mesh, &classification, tau);
    Ok(SolveOutcome {
        mesh,
        classification,
        report,
        fallback_count: system.fallback_count(),
        residual,
    })
}

fn index_cells(mesh: &Mesh, node: usize) -> Vec<Cell> {
    let idx = mesh.unravel(node);
    (0..mesh.dim()).map(|a| Cell::Int(idx[a] as i64)).collect()
}

fn index_headers(dim: usize) -> Vec<&'static str> {
    const NAMES: [&str; 3] = ["ix", "iy", "iz"];
    NAMES[..dim].to_vec()
}

/// Solve one mesh, write the ξ/τ field and a summary JSON.
pub fn run_solve(plan: &Plan) -> Result<SolveSummary> {
    if plan.nodes.len() != 1 {
        return Err(Error::Config(format!(
            "solve takes exactly one mesh size, got {:?}",
            plan.nodes
        )));
    }
    let outcome = solve_one(plan, plan.nodes[0])?;
    let mesh = &outcome.mesh;
    let mut headers = index_headers(mesh.dim());
    headers.extend(["xi", "tau"]);
    let rows: Vec<Vec<Cell>> = outcome
        .classification
        .interior_nodes()
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let mut row = index_cells(mesh, node);
            row.push(Cell::Float(outcome.report.xi[k]));
            row.push(Cell::Float(outcome.report.tau[k]));
            row
        })
        .collect();
    write_table(&plan.out, "field", plan.format, &headers, &rows)?;

    let summary = SolveSummary {
        n_interior: outcome.classification.n_interior(),
        n_near_boundary: outcome.classification.n_near_boundary(),
        fallback_count: outcome.fallback_count,
        l1: outcome.report.l1_normalized,
        linf: outcome.report.l_infinity,
        residual: outcome.residual,
    };
    fs::create_dir_all(&plan.out)?;
    let mut f = fs::File::create(plan.out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)
        .map_err(|e| Error::Config(format!("json write failed: {e}")))?;
    writeln!(f)?;
    Ok(summary)
}

/// One row of a refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub l1: f64,
    pub l1_order: Option<f64>,
    pub linf: f64,
    pub linf_order: Option<f64>,
}

/// Solve a refinement list and emit (n, L1, order, Linf, order) rows.
pub fn run_convergence(plan: &Plan) -> Result<Vec<ConvergenceRow>> {
    if plan.nodes.len() < 2 {
        return Err(Error::Config(
            "convergence needs at least two mesh sizes".into(),
        ));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut prev: Option<(f64, f64, f64)> = None; // (h, l1, linf)
    for &n in &plan.nodes {
        let outcome = solve_one(plan, n)?;
        let h = outcome.mesh.spacing();
        let (l1, linf) = (outcome.report.l1_normalized, outcome.report.l_infinity);
        let (o1, oi) = match prev {
            Some((hc, l1c, linfc)) => (
                Some(order_estimate(l1c, l1, hc, h)?),
                Some(order_estimate(linfc, linf, hc, h)?),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            n,
            l1,
            l1_order: o1,
            linf,
            linf_order: oi,
        });
        prev = Some((h, l1, linf));
    }
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.n as i64),
                Cell::Float(r.l1),
                r.l1_order.map_or(Cell::Empty, Cell::Float),
                Cell::Float(r.linf),
                r.linf_order.map_or(Cell::Empty, Cell::Float),
            ]
        })
        .collect();
    write_table(
        &plan.out,
        "convergence",
        plan.format,
        &["n", "L1", "L1_order", "Linf", "Linf_order"],
        &table,
    )?;
    Ok(rows)
}

/// Leading-coefficient contour grid over (θx, θy).
pub fn run_contours(plan: &Plan) -> Result<usize> {
    let rows = leading_coeff_contours(plan.resolution, plan.level)?;
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Float(r.theta_x),
                Cell::Float(r.theta_y),
                Cell::Float(r.lin_x),
                Cell::Float(r.lin_y),
                Cell::Float(r.lin_sum),
                Cell::Float(r.lq_x),
                Cell::Float(r.lq_y),
                Cell::Float(r.lq_sum),
            ]
        })
        .collect();
    write_table(
        &plan.out,
        "contours",
        plan.format,
        &[
            "theta_x", "theta_y", "lin_x", "lin_y", "lin_sum", "lq_x", "lq_y", "lq_sum",
        ],
        &table,
    )?;
    Ok(table.len())
}

/// Default θ grid for the sweep: 0.02 to 0.98 in steps of 0.005.
pub fn sweep_theta_grid() -> Vec<f64> {
    (0..=192).map(|k| 0.02 + 0.005 * k as f64).collect()
}

/// θ sweep of the left-boundary error component; returns the argmax θ.
pub fn run_sweep(plan: &Plan) -> Result<f64> {
    let grid = sweep_theta_grid();
    let result = boundary_error_sweep(&plan.case, plan.scheme, plan.mode, &grid, plan.nodes[0])?;
    let table: Vec<Vec<Cell>> = result
        .points
        .iter()
        .map(|p| vec![Cell::Float(p.theta), Cell::Float(p.xi_left_magnitude)])
        .collect();
    write_table(
        &plan.out,
        "sweep",
        plan.format,
        &["theta", "xi_L_mag"],
        &table,
    )?;
    Ok(result.argmax_theta)
}

/// Solve the 1-D case and emit ξ with its three-component decomposition.
pub fn run_decompose1d(plan: &Plan) -> Result<f64> {
    if plan.case.dim != 1 {
        return Err(Error::Config("decompose1d requires case1d".into()));
    }
    let n = plan.nodes[0];
    let case = &plan.case;
    let mesh = case.mesh(n)?;
    let classification = classify(&mesh, &case.geometry)?;
    let field = build_rhs(case, &mesh, &classification, plan.mode)?;
    let (system, rhs_vector) = assemble(
        &mesh,
        &classification,
        plan.scheme,
        &|p: &[f64]| case.phi(p),
        &field,
    )?;
    let opts = plan.solve_options(1, system.symmetry_flag());
    let solution = solve(&system, &rhs_vector, &opts)?;
    let tau = truncation_field(case, &mesh, &classification, plan.scheme, &field)?;
    let report = error_report(&solution, case, &mesh, &classification, tau.clone());
    let dec = decompose_1d(case, &mesh, &classification, plan.scheme, plan.mode, &tau)?;

    let mut max_resid: f64 = 0.0;
    let rows: Vec<Vec<Cell>> = classification
        .interior_nodes()
        .iter()
        .enumerate()
        .map(|(k, &node)| {
            let x = mesh.node_position(node)[0];
            let resid =
                report.xi[k] - (dec.xi_left[k] + dec.xi_right[k] + dec.xi_interior[k]);
            max_resid = max_resid.max(resid.abs());
            vec![
                Cell::Int(mesh.unravel(node)[0] as i64),
                Cell::Float(x),
                Cell::Float(report.xi[k]),
                Cell::Float(dec.xi_left[k]),
                Cell::Float(dec.xi_right[k]),
                Cell::Float(dec.xi_interior[k]),
                Cell::Float(resid),
            ]
        })
        .collect();
    write_table(
        &plan.out,
        "decompose1d",
        plan.format,
        &["i", "x", "xi", "xi_L", "xi_R", "xi_in", "residual"],
        &rows,
    )?;
    Ok(max_resid)
}

/// Near-boundary θ map for scatter plots.
pub fn run_theta_map(plan: &Plan) -> Result<usize> {
    if plan.nodes.len() != 1 {
        return Err(Error::Config(format!(
            "theta-map takes exactly one mesh size, got {:?}",
            plan.nodes
        )));
    }
    let case = &plan.case;
    let mesh = case.mesh(plan.nodes[0])?;
    let classification = classify(&mesh, &case.geometry)?;
    let rows = theta_map(&mesh, &classification);
    let dim = mesh.dim();
    const THETA_NAMES: [&str; 3] = ["theta_x", "theta_y", "theta_z"];
    let mut headers = index_headers(dim);
    headers.extend_from_slice(&THETA_NAMES[..dim]);
    headers.push("trapped");
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = (0..dim).map(|a| Cell::Int(r.index[a] as i64)).collect();
            row.extend((0..dim).map(|a| Cell::Float(r.theta_axis[a])));
            row.push(Cell::Bool(r.trapped));
            row
        })
        .collect();
    write_table(&plan.out, "theta_map", plan.format, &headers, &table)?;
    Ok(table.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            case: Some("case2d".into()),
            nodes: Some(vec![41]),
            ..Default::default()
        }
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut c = base_config();
        c.scheme = Some("cubic".into());
        assert!(validate(&c, CommandKind::Solve).is_err());
        let mut c = base_config();
        c.nodes = Some(vec![81, 41]);
        assert!(validate(&c, CommandKind::Convergence).is_err());
        let mut c = base_config();
        c.rhs = Some("noisy".into());
        assert!(validate(&c, CommandKind::Solve).is_err());
        let mut c = base_config();
        c.tol = Some(1.0);
        assert!(validate(&c, CommandKind::Solve).is_err());
        let c = ExperimentConfig::default();
        assert!(validate(&c, CommandKind::Solve).is_err());
    }

    #[test]
    fn flags_override_file_fields() {
        let file = base_config();
        let flags = ExperimentConfig {
            nodes: Some(vec![81]),
            ..Default::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.nodes, Some(vec![81]));
        assert_eq!(merged.case, Some("case2d".into()));
    }

    #[test]
    fn defaults_per_command() {
        let c = ExperimentConfig {
            case: Some("case1d".into()),
            rhs: Some("sampled".into()),
            ..Default::default()
        };
        let plan = validate(&c, CommandKind::Sweep).unwrap();
        assert_eq!(plan.nodes, vec![641]);
        assert_eq!(plan.mode, RhsMode::Sampled { level: 14 });
        let plan = validate(&c, CommandKind::Decompose1d).unwrap();
        assert_eq!(plan.nodes, vec![161]);
        assert_eq!(plan.mode, RhsMode::Sampled { level: 3 });
    }
}
