//! Double-mesh error estimates, convergence orders and temporal order studies.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{layer_params, LayerParams, SpatialMesh, ThetaVariant, TimeGrid};
use crate::problem::{
    derive_regime, DataFn, Fn2, PerturbationParams, PiecewiseField, ProblemSpec, RegimeConstants,
    Side, SmoothField, DEFAULT_SAMPLE_DENSITY,
};
use crate::solver::{march, CheckPolicy, DiscreteSolution, MarchDiagnostics};

/// Where the largest coarse/fine difference was found (coarse indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleMeshError {
    pub e: f64,
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub t: f64,
}

/// `max |U^{2N,2M}_{2i,2j} - U^{N,M}_{i,j}|` over the coarse nodes.
///
/// Nesting is verified by comparing the shared abscissae and times bit for
/// bit.
pub fn double_mesh_error(coarse: &DiscreteSolution, fine: &DiscreteSolution) -> Result<DoubleMeshError> {
    let (n, m) = (coarse.mesh.n(), coarse.grid.m());
    if fine.mesh.n() != 2 * n || fine.grid.m() != 2 * m {
        return Err(Error::MeshMismatch(format!(
            "fine run is N={}, M={}; expected N={}, M={}",
            fine.mesh.n(),
            fine.grid.m(),
            2 * n,
            2 * m
        )));
    }
    if let Some(i) = (0..=n).find(|&i| fine.mesh.x(2 * i) != coarse.mesh.x(i)) {
        return Err(Error::MeshMismatch(format!(
            "coarse node {i} at x={} is not fine node {} (x={})",
            coarse.mesh.x(i),
            2 * i,
            fine.mesh.x(2 * i)
        )));
    }
    if let Some(j) = (0..=m).find(|&j| fine.grid.t(2 * j) != coarse.grid.t(j)) {
        return Err(Error::MeshMismatch(format!("coarse time level {j} is not a fine level")));
    }

    let mut best = DoubleMeshError { e: 0.0, i: 0, j: 0, x: coarse.mesh.x(0), t: 0.0 };
    for j in 0..=m {
        let (c, f) = (&coarse.values[j], &fine.values[2 * j]);
        for i in 0..=n {
            let diff = (f[2 * i] - c[i]).abs();
            if diff > best.e {
                best = DoubleMeshError { e: diff, i, j, x: coarse.mesh.x(i), t: coarse.grid.t(j) };
            }
        }
    }
    Ok(best)
}

/// `log2(e_coarse / e_fine)`, absent unless both errors are positive.
pub fn order(e_coarse: f64, e_fine: f64) -> Option<f64> {
    (e_coarse > 0.0 && e_fine > 0.0).then(|| (e_coarse / e_fine).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub base_n: usize,
    pub base_m: usize,
    /// Number of error rows; the finest run is at `base_n * 2^levels`.
    pub levels: usize,
    pub variant: ThetaVariant,
    pub checks: CheckPolicy,
}

impl StudyConfig {
    pub fn new(base_n: usize, base_m: usize, levels: usize) -> Self {
        Self {
            base_n,
            base_m,
            levels,
            variant: ThetaVariant::default(),
            checks: CheckPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecord {
    pub n: usize,
    pub m: usize,
    pub e: f64,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<LevelRecord>,
    /// Location of each level's largest difference.
    pub argmax: Vec<DoubleMeshError>,
    /// One entry per march, coarsest first (`levels + 1` of them).
    pub diagnostics: Vec<MarchDiagnostics>,
    pub regime: RegimeConstants,
    pub layer: LayerParams,
    pub params: PerturbationParams,
    /// Base mesh, whose transition points every level shares.
    pub base_mesh: SpatialMesh,
}

impl ConvergenceReport {
    /// `N,M,E,R` rows; `R` is empty where undefined.
    pub fn render_csv(&self) -> String {
        render_report_csv(&self.levels)
    }

    /// `report_eps1e-8_mu1e-6.csv`
    pub fn file_name(&self) -> String {
        report_file_name(self.params)
    }
}

pub fn report_file_name(params: PerturbationParams) -> String {
    format!("report_eps{:e}_mu{:e}.csv", params.epsilon, params.mu)
}

pub fn render_report_csv(levels: &[LevelRecord]) -> String {
    let mut out = String::from("N,M,E,R\n");
    for rec in levels {
        let r = rec.r.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{r}", rec.n, rec.m, rec.e);
    }
    out
}

pub fn parse_report_csv(text: &str) -> Result<Vec<LevelRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("N,M,E,R") => {}
        other => return Err(Error::Parse(format!("expected header `N,M,E,R`, got {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, line)| {
            let bad = |what: &str| Error::Parse(format!("line {}: {what}: `{line}`", k + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            Ok(LevelRecord {
                n: fields[0].parse().map_err(|_| bad("bad N"))?,
                m: fields[1].parse().map_err(|_| bad("bad M"))?,
                e: fields[2].parse().map_err(|_| bad("bad E"))?,
                r: match fields[3] {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("bad R"))?),
                },
            })
        })
        .collect()
}

/// Parse a `t,x,u` solution dump.
pub fn parse_solution_csv(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("t,x,u") => {}
        other => return Err(Error::Parse(format!("expected header `t,x,u`, got {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, line)| {
            let mut row = [0.0; 3];
            let mut fields = line.split(',');
            for slot in &mut row {
                *slot = fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse(format!("line {}: `{line}`", k + 2)))?;
            }
            if fields.next().is_some() {
                return Err(Error::Parse(format!("line {}: too many fields", k + 2)));
            }
            Ok(row)
        })
        .collect()
}

/// Table cell for an order that cannot be computed (an em dash).
pub const UNDEFINED_ORDER: &str = "\u{2014}";

/// `v` with `digits` significant digits in positional notation.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        return format!("{:.*e}", digits.saturating_sub(1), v);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Text table in the usual layout: one `E` row and one `R` row per report,
/// columns indexed by `N`. Undefined orders print as [`UNDEFINED_ORDER`].
pub fn render_table(reports: &[ConvergenceReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let width = 12;
    let mut out = format!(
        "eps = {:e}, theta = ({}, {})\n",
        first.params.epsilon, first.layer.theta1, first.layer.theta2
    );
    let _ = write!(out, "{:<10}", "mu \\ N");
    for rec in &first.levels {
        let _ = write!(out, "{:>width$}", rec.n);
    }
    out.push('\n');
    for report in reports {
        let _ = write!(out, "{:<10}", format!("{:e}", report.params.mu));
        for rec in &report.levels {
            let _ = write!(out, "{:>width$}", format_significant(rec.e, 6));
        }
        out.push('\n');
        let _ = write!(out, "{:<10}", "  R");
        for rec in &report.levels {
            let cell = rec.r.map_or_else(|| UNDEFINED_ORDER.to_string(), |r| format!("{r:.4}"));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    out
}

/// Runs `levels + 1` marches on bisection-nested meshes and time grids and
/// reports the double-mesh error and order for each consecutive pair.
pub fn convergence_study(spec: &ProblemSpec, config: &StudyConfig) -> Result<ConvergenceReport> {
    if config.levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "a study needs at least 2 levels, got {}",
            config.levels
        )));
    }
    spec.check_constants()?;
    let regime = derive_regime(spec, DEFAULT_SAMPLE_DENSITY)?;
    let layer = layer_params(&regime, spec.params, config.variant)?;
    let base_mesh = SpatialMesh::layer_adapted(&layer, config.base_n, spec.d)?;
    let base_grid = TimeGrid::new(spec.t_final, config.base_m)?;

    let mut runs = vec![(base_mesh.clone(), base_grid)];
    for _ in 0..config.levels {
        let (mesh, grid) = runs.last().unwrap();
        let next = (mesh.bisect(), grid.refine());
        runs.push(next);
    }

    let solutions = runs
        .par_iter()
        .map(|(mesh, grid)| march(spec, mesh, grid, config.checks))
        .collect::<Result<Vec<_>>>()?;

    let argmax = solutions
        .windows(2)
        .map(|w| double_mesh_error(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let levels = argmax
        .iter()
        .enumerate()
        .map(|(k, err)| LevelRecord {
            n: solutions[k].mesh.n(),
            m: solutions[k].grid.m(),
            e: err.e,
            r: argmax.get(k + 1).and_then(|next| order(err.e, next.e)),
        })
        .collect();

    Ok(ConvergenceReport {
        levels,
        argmax,
        diagnostics: solutions.into_iter().map(|s| s.diagnostics).collect(),
        regime,
        layer,
        params: spec.params,
        base_mesh,
    })
}

/// Closed-form solution together with the derivatives the operator needs.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: Fn2,
    pub u_x: Fn2,
    pub u_xx: Fn2,
    pub u_t: Fn2,
}

/// A problem whose forcing and data were built from an exact solution.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub spec: ProblemSpec,
    pub exact: ExactSolution,
}

/// Largest allowed residual of the exact solution under the continuous problem.
pub const MANUFACTURED_TOL: f64 = 1e-8;

impl ManufacturedProblem {
    /// Forcing `f = eps u_xx + mu a u_x - b u - c u_t` evaluated branch-wise
    /// from the given coefficients, and data taken from `u`.
    pub fn from_exact(
        template: &ProblemSpec,
        a: PiecewiseField,
        b: SmoothField,
        c: SmoothField,
        exact: ExactSolution,
    ) -> Self {
        let PerturbationParams { epsilon, mu } = template.params;
        let branch = |side: Side| {
            let (a, b, c, ex) = (a.clone(), b.clone(), c.clone(), exact.clone());
            move |x: f64, t: f64| {
                let av = a.eval_side(side, x, t).unwrap_or(f64::NAN);
                let bv = b.eval(x, t).unwrap_or(f64::NAN);
                let cv = c.eval(x, t).unwrap_or(f64::NAN);
                epsilon * (ex.u_xx)(x, t) + mu * av * (ex.u_x)(x, t)
                    - bv * (ex.u)(x, t)
                    - cv * (ex.u_t)(x, t)
            }
        };
        let d = template.d;
        let f = PiecewiseField::new("f", d, branch(Side::Left), branch(Side::Right));
        let (u0, u1, ui) = (exact.u.clone(), exact.u.clone(), exact.u.clone());
        let spec = ProblemSpec {
            a,
            f,
            b,
            c,
            p: DataFn::new("p", move |t| u0(0.0, t)),
            r: DataFn::new("r", move |t| u1(1.0, t)),
            q: DataFn::new("q", move |x| ui(x, 0.0)),
            ..template.clone()
        };
        Self { spec, exact }
    }

    /// `u = e^{-t} sin(pi x)` with `a = -1 | +1`, `b = c = 1` and `d = 1/2`.
    pub fn sine_decay(params: PerturbationParams) -> Self {
        use std::f64::consts::PI;
        let template = ProblemSpec {
            params,
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 1.0,
            eta: 1.0,
            ..crate::registry::lookup("example1").expect("registered")
        };
        let exact = ExactSolution {
            u: Arc::new(|x, t| (-t).exp() * (PI * x).sin()),
            u_x: Arc::new(|x, t| PI * (-t).exp() * (PI * x).cos()),
            u_xx: Arc::new(|x, t| -PI * PI * (-t).exp() * (PI * x).sin()),
            u_t: Arc::new(|x, t| -(-t).exp() * (PI * x).sin()),
        };
        Self::from_exact(
            &template,
            PiecewiseField::new("a", 0.5, |_, _| -1.0, |_, _| 1.0),
            SmoothField::constant("b", 1.0),
            SmoothField::constant("c", 1.0),
            exact,
        )
    }

    /// Largest residual of the exact solution under the operator and the
    /// boundary and initial conditions, over a 21 x 21 sample grid.
    pub fn check(&self) -> Result<()> {
        let s = &self.spec;
        let ex = &self.exact;
        let PerturbationParams { epsilon, mu } = s.params;
        let k = 21;
        for l in 0..k {
            let t = s.t_final * l as f64 / (k - 1) as f64;
            for side in [Side::Left, Side::Right] {
                let (lo, hi) = match side {
                    Side::Left => (0.0, s.d),
                    Side::Right => (s.d, 1.0),
                };
                for q in 0..k {
                    let x = lo + (hi - lo) * q as f64 / (k - 1) as f64;
                    let lu = epsilon * (ex.u_xx)(x, t) + mu * s.a.eval_side(side, x, t)? * (ex.u_x)(x, t)
                        - s.b.eval(x, t)? * (ex.u)(x, t)
                        - s.c.eval(x, t)? * (ex.u_t)(x, t);
                    let residual = (lu - s.f.eval_side(side, x, t)?).abs();
                    if !(residual <= MANUFACTURED_TOL) {
                        return Err(Error::ManufacturedMismatch { residual, x, t });
                    }
                }
            }
            for (x, g) in [(0.0, &s.p), (1.0, &s.r)] {
                let residual = (g.eval(t)? - (ex.u)(x, t)).abs();
                if !(residual <= MANUFACTURED_TOL) {
                    return Err(Error::ManufacturedMismatch { residual, x, t });
                }
            }
            let x = l as f64 / (k - 1) as f64;
            let residual = (s.q.eval(x)? - (ex.u)(x, 0.0)).abs();
            if !(residual <= MANUFACTURED_TOL) {
                return Err(Error::ManufacturedMismatch { residual, x, t: 0.0 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalRecord {
    pub m: usize,
    /// Max nodal error against the exact solution.
    pub error: f64,
    /// Previous row's error over this one.
    pub ratio: Option<f64>,
    /// Max nodal difference from a same-mesh run with many more time steps.
    pub temporal_error: f64,
    pub temporal_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalReport {
    pub n: usize,
    /// Whether the layer-adapted mesh was replaced by a piecewise-uniform one.
    pub uniform_fallback: bool,
    pub m_reference: usize,
    /// Error of the reference run against the exact solution: the part of
    /// the error that refining in time cannot remove.
    pub spatial_floor: f64,
    pub records: Vec<TemporalRecord>,
}

/// Reference runs use this many times the largest requested `M`.
pub const REFERENCE_FACTOR: usize = 32;

impl TemporalReport {
    /// Ratios of consecutive exact-solution errors, kept only while the finer
    /// error is still at least `floor_factor` times the spatial floor.
    pub fn ratios_above_floor(&self, floor_factor: f64) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.error >= floor_factor * self.spatial_floor)
            .filter_map(|r| r.ratio.map(|q| (r.m, q)))
            .collect()
    }

    pub fn render_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("M,error,ratio,order,temporal_error,temporal_ratio,temporal_order\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.m,
                r.error,
                opt(r.ratio),
                opt(r.ratio.map(f64::log2)),
                r.temporal_error,
                opt(r.temporal_ratio),
                opt(r.temporal_ratio.map(f64::log2)),
            );
        }
        out
    }
}

/// Time-step refinement on a fixed spatial mesh. Uses the layer-adapted mesh
/// when its transition points fit, otherwise a piecewise-uniform one.
pub fn temporal_order_study(
    problem: &ManufacturedProblem,
    n_fixed: usize,
    m_list: &[usize],
    checks: CheckPolicy,
) -> Result<TemporalReport> {
    problem.check()?;
    let spec = &problem.spec;
    let Some(&m_max) = m_list.iter().max() else {
        return Err(Error::InvalidArgument("empty list of time step counts".into()));
    };
    let m_reference = REFERENCE_FACTOR * m_max;
    if let Some(&m) = m_list.iter().find(|&&m| m == 0 || !m_reference.is_multiple_of(m)) {
        return Err(Error::InvalidArgument(format!("M={m} does not divide the reference M={m_reference}")));
    }

    let adapted = derive_regime(spec, DEFAULT_SAMPLE_DENSITY)
        .and_then(|regime| layer_params(&regime, spec.params, ThetaVariant::default()))
        .and_then(|layer| SpatialMesh::layer_adapted(&layer, n_fixed, spec.d));
    let (mesh, uniform_fallback) = match adapted {
        Ok(mesh) => (mesh, false),
        Err(Error::LayersOverlap(_)) | Err(Error::UnsupportedRegime(_)) => {
            (SpatialMesh::piecewise_uniform(n_fixed, spec.d)?, true)
        }
        Err(e) => return Err(e),
    };

    let exact_error = |sol: &DiscreteSolution| -> f64 {
        let mut worst: f64 = 0.0;
        for (j, row) in sol.values.iter().enumerate() {
            let t = sol.grid.t(j);
            for (i, v) in row.iter().enumerate() {
                worst = worst.max((v - (problem.exact.u)(sol.mesh.x(i), t)).abs());
            }
        }
        worst
    };

    let reference = march(spec, &mesh, &TimeGrid::new(spec.t_final, m_reference)?, checks)?;
    let spatial_floor = exact_error(&reference);

    let runs = m_list
        .par_iter()
        .map(|&m| march(spec, &mesh, &TimeGrid::new(spec.t_final, m)?, checks))
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<TemporalRecord> = Vec::with_capacity(runs.len());
    for sol in &runs {
        let m = sol.grid.m();
        let stride = m_reference / m;
        let mut temporal_error: f64 = 0.0;
        for (j, row) in sol.values.iter().enumerate() {
            for (v, r) in row.iter().zip(&reference.values[j * stride]) {
                temporal_error = temporal_error.max((v - r).abs());
            }
        }
        let error = exact_error(sol);
        let prev = records.last();
        let ratio_of = |a: f64, b: f64| (a > 0.0 && b > 0.0).then(|| a / b);
        records.push(TemporalRecord {
            m,
            error,
            ratio: prev.and_then(|p| ratio_of(p.error, error)),
            temporal_error,
            temporal_ratio: prev.and_then(|p| ratio_of(p.temporal_error, temporal_error)),
        });
    }

    Ok(TemporalReport { n: mesh.n(), uniform_fallback, m_reference, spatial_floor, records })
}
