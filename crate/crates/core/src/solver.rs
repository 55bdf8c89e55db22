//! Tridiagonal elimination and time marching.

use std::fmt::Write as _;

use crate::discretization::{assemble, m_matrix_check, TridiagonalSystem};
use crate::error::{Error, Result};
use crate::mesh::{Segment, SpatialMesh, TimeGrid};
use crate::problem::{ProblemSpec, Side, DEFAULT_SAMPLE_DENSITY};

/// Pivots smaller than this in magnitude abort the elimination.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Relative residual bound `|A x - rhs| <= tol (1 + max |rhs|)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Slack added to the stability bound.
pub const STABILITY_SLACK: f64 = 1e-8;

/// Thomas elimination without pivoting.
pub fn thomas_solve(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("system must have at least 3 rows, got {n}")));
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];

    let pivot = sys.diag[0];
    if !(pivot.abs() >= PIVOT_FLOOR) {
        return Err(Error::ZeroPivot { row: 0 });
    }
    cp[0] = sys.sup[0] / pivot;
    dp[0] = sys.rhs[0] / pivot;
    for i in 1..n {
        let pivot = sys.diag[i] - sys.sub[i] * cp[i - 1];
        if !(pivot.abs() >= PIVOT_FLOOR) {
            return Err(Error::ZeroPivot { row: i });
        }
        if i + 1 < n {
            cp[i] = sys.sup[i] / pivot;
        }
        dp[i] = (sys.rhs[i] - sys.sub[i] * dp[i - 1]) / pivot;
    }

    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// How much checking `march` does on every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckPolicy {
    /// Any failed check aborts the march.
    Strict,
    /// Checks run and failures are recorded in the diagnostics.
    #[default]
    Warn,
    Off,
}

impl std::str::FromStr for CheckPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(CheckPolicy::Strict),
            "warn" => Ok(CheckPolicy::Warn),
            "off" => Ok(CheckPolicy::Off),
            other => Err(Error::InvalidArgument(format!("unknown check policy `{other}`"))),
        }
    }
}

/// Per-march record of structural and residual checks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarchDiagnostics {
    pub steps_checked: usize,
    /// Time steps `j+1` whose system failed the M-matrix check.
    pub m_matrix_failures: Vec<usize>,
    /// Largest `residual / (1 + max |rhs|)` seen.
    pub max_relative_residual: f64,
    pub residual_failures: usize,
    pub audit: Option<AuditReport>,
}

impl MarchDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.m_matrix_failures.is_empty()
            && self.residual_failures == 0
            && self.audit.as_ref().is_none_or(|a| a.passes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub mesh: SpatialMesh,
    pub grid: TimeGrid,
    /// `values[j][i]` approximates `u(x_i, t_j)`.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: MarchDiagnostics,
}

impl DiscreteSolution {
    pub fn level(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `t,x,u` rows ordered by time level then node, 17 significant digits.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("t,x,u\n");
        for (j, row) in self.values.iter().enumerate() {
            let t = self.grid.t(j);
            for (i, u) in row.iter().enumerate() {
                let _ = writeln!(out, "{t:.16e},{:.16e},{u:.16e}", self.mesh.x(i));
            }
        }
        out
    }

    /// Blank-line separated `x u` blocks, one per time level, each headed by
    /// a `# t=` comment.
    pub fn render_plot_data(&self) -> String {
        let mut out = String::new();
        for (j, row) in self.values.iter().enumerate() {
            if j > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "# t={:.16e}", self.grid.t(j));
            for (i, u) in row.iter().enumerate() {
                let _ = writeln!(out, "{:.16e} {u:.16e}", self.mesh.x(i));
            }
        }
        out
    }
}

/// Advance from `q` at `t = 0` to `T` with one tridiagonal solve per step.
pub fn march(
    spec: &ProblemSpec,
    mesh: &SpatialMesh,
    grid: &TimeGrid,
    checks: CheckPolicy,
) -> Result<DiscreteSolution> {
    let n = mesh.n();
    let m = grid.m();
    let dt = grid.dt();
    let at = |j: usize, e: Error| Error::AtStep { n, m, j, source: Box::new(e) };

    let initial = mesh
        .points()
        .iter()
        .map(|&x| spec.q.eval(x))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| at(0, e))?;
    let mut values = Vec::with_capacity(m + 1);
    values.push(initial);
    let mut diagnostics = MarchDiagnostics::default();

    for j in 0..m {
        let t_next = grid.t(j + 1);
        let sys = assemble(spec, mesh, t_next, dt, &values[j]).map_err(|e| at(j, e))?;

        if checks != CheckPolicy::Off {
            diagnostics.steps_checked += 1;
            let report = m_matrix_check(&sys);
            if !report.passes() {
                let first_row = report.violations.first().map_or(0, |v| v.row);
                if checks == CheckPolicy::Strict {
                    return Err(at(
                        j,
                        Error::MMatrixViolation { count: report.violations.len(), first_row },
                    ));
                }
                diagnostics.m_matrix_failures.push(j + 1);
            }
        }

        let mut next = thomas_solve(&sys).map_err(|e| at(j, e))?;

        if checks != CheckPolicy::Off {
            let scale = 1.0 + sys.rhs_max();
            let residual = sys.residual_max(&next);
            diagnostics.max_relative_residual =
                diagnostics.max_relative_residual.max(residual / scale);
            if !(residual <= RESIDUAL_TOL * scale) {
                if checks == CheckPolicy::Strict {
                    return Err(at(
                        j,
                        Error::ResidualExceeded { residual, bound: RESIDUAL_TOL * scale },
                    ));
                }
                diagnostics.residual_failures += 1;
            }
        }

        if let Some(index) = next.iter().position(|v| !v.is_finite()) {
            return Err(at(j, Error::NonFiniteValue { index }));
        }
        next[0] = sys.rhs[0];
        next[n] = sys.rhs[n];
        values.push(next);
    }

    let mut sol = DiscreteSolution { mesh: mesh.clone(), grid: grid.clone(), values, diagnostics };
    if checks != CheckPolicy::Off {
        let audit = stability_audit(&sol, spec)?;
        if checks == CheckPolicy::Strict && !audit.passes {
            return Err(Error::StabilityViolation { max_abs: audit.max_abs, bound: audit.bound });
        }
        sol.diagnostics.audit = Some(audit);
    }
    Ok(sol)
}

/// Comparison of the discrete solution against the continuous a priori bound
/// `|u| <= sup |data| + sup |f| / beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub max_abs: f64,
    /// Sup of `|p|`, `|r|` on the time grid and `|q|` on the mesh.
    pub data_sup: f64,
    /// Sup of `|f|` on the sample grid, both branches.
    pub source_sup: f64,
    pub beta: f64,
    pub bound: f64,
    pub margin: f64,
    pub passes: bool,
}

pub fn stability_audit(sol: &DiscreteSolution, spec: &ProblemSpec) -> Result<AuditReport> {
    let mut data_sup: f64 = 0.0;
    for &t in sol.grid.times() {
        data_sup = data_sup.max(spec.p.eval(t)?.abs()).max(spec.r.eval(t)?.abs());
    }
    for &x in sol.mesh.points() {
        data_sup = data_sup.max(spec.q.eval(x)?.abs());
    }

    let k = DEFAULT_SAMPLE_DENSITY;
    let mut source_sup: f64 = 0.0;
    for l in 0..k {
        let t = spec.t_final * l as f64 / (k - 1) as f64;
        for s in 0..k {
            let x = s as f64 / (k - 1) as f64;
            source_sup = source_sup.max(spec.f.eval(x, t)?.abs());
        }
        let (fl, fr) = spec.f.one_sided(t)?;
        source_sup = source_sup.max(fl.abs()).max(fr.abs());
    }

    let bound = data_sup + source_sup / spec.beta + STABILITY_SLACK;
    let max_abs = sol.max_abs();
    Ok(AuditReport {
        max_abs,
        data_sup,
        source_sup,
        beta: spec.beta,
        bound,
        margin: bound - max_abs,
        passes: max_abs <= bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// Largest `|D- U|` over the uniform segments and all time levels.
    pub max_outer_slope: f64,
    /// `(j, i)` where it occurs.
    pub at: (usize, usize),
    pub c_env: f64,
    pub passes: bool,
}

/// Outside the layer segments the solution should be smooth: check that
/// `|D- U|` stays below `c_env` on `[tau1, d-tau2]` and `[d+tau3, 1-tau4]`.
pub fn layer_envelope_diagnostic(sol: &DiscreteSolution, c_env: f64) -> Result<EnvelopeReport> {
    if !(c_env > 0.0) {
        return Err(Error::InvalidArgument(format!("envelope constant must be positive, got {c_env}")));
    }
    if sol.mesh.layout().is_none() {
        return Err(Error::InvalidArgument("envelope check needs a layer-adapted mesh".into()));
    }
    let n = sol.mesh.n();
    let mut best = (0.0, (0, 0));
    for seg in [Segment::U1, Segment::U2] {
        let (a, b) = seg.index_range(n);
        for (j, row) in sol.values.iter().enumerate() {
            for i in a + 1..=b {
                let slope = ((row[i] - row[i - 1]) / sol.mesh.h(i)).abs();
                if slope > best.0 {
                    best = (slope, (j, i));
                }
            }
        }
    }
    Ok(EnvelopeReport { max_outer_slope: best.0, at: best.1, c_env, passes: best.0 <= c_env })
}

/// `D+ U - D- U` at the discontinuity node of one time level.
pub fn transmission_defect(mesh: &SpatialMesh, level: &[f64]) -> f64 {
    let k = mesh.d_index();
    (level[k + 1] - level[k]) / mesh.h(k + 1) - (level[k] - level[k - 1]) / mesh.h(k)
}

/// Side of the discontinuity owning node `i`.
pub fn side_of(mesh: &SpatialMesh, i: usize) -> Side {
    if i <= mesh.d_index() {
        Side::Left
    } else {
        Side::Right
    }
}
