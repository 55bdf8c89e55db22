//! One Crank-Nicolson step as a tridiagonal system.
//!
//! With `U^{j+1/2} = (U^{j+1} + U^j)/2` the scheme at an interior node reads
//!
//! ```text
//! (eps d2 + mu a D* - cr) U^{j+1} = 2 f - (eps d2 + mu a D*) U^j + dr U^j
//! cr = b + 2 c / dt,   dr = b - 2 c / dt
//! ```
//!
//! with every coefficient taken at `(x_i, t_j + dt/2)` and `D* = D-` left of
//! the discontinuity, `D+` right of it. The discontinuity node carries the
//! transmission condition `D+ U = D- U`; the end rows pin the boundary data.
//!
//! Rows are stored negated so the diagonal is positive and the
//! off-diagonals are non-positive whenever the scheme is monotone.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mesh::SpatialMesh;
use crate::problem::{ProblemSpec, Side};

/// Coefficients of `U_{i-1}`, `U_i`, `U_{i+1}` and the right-hand side of a
/// single stored row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilWeights {
    pub w_minus: f64,
    pub w_center: f64,
    pub w_plus: f64,
    pub forcing: f64,
}

impl StencilWeights {
    /// `w_minus u_{i-1} + w_center u_i + w_plus u_{i+1} - forcing`.
    pub fn residual(&self, u_minus: f64, u: f64, u_plus: f64) -> f64 {
        self.w_minus * u_minus + self.w_center * u + self.w_plus * u_plus - self.forcing
    }
}

/// `sub[0]` and `sup[n]` are unused and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if sub.len() != n || sup.len() != n || rhs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "diagonal lengths differ: sub={}, diag={n}, sup={}, rhs={}",
                sub.len(),
                sup.len(),
                rhs.len()
            )));
        }
        Ok(Self { sub, diag, sup, rhs })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn set_row(&mut self, i: usize, w: StencilWeights) {
        self.sub[i] = w.w_minus;
        self.diag[i] = w.w_center;
        self.sup[i] = w.w_plus;
        self.rhs[i] = w.forcing;
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `max_i |(A x - rhs)_i|`.
    pub fn residual_max(&self, x: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .zip(&self.rhs)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max_i |rhs_i|`.
    pub fn rhs_max(&self) -> f64 {
        self.rhs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// One `i sub diag sup rhs` line per row.
    pub fn render_debug(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{i} {:.16e} {:.16e} {:.16e} {:.16e}",
                self.sub[i], self.diag[i], self.sup[i], self.rhs[i]
            );
        }
        out
    }
}

/// Stored row for interior node `i != N/2`.
pub fn interior_row(
    spec: &ProblemSpec,
    mesh: &SpatialMesh,
    i: usize,
    t_mid: f64,
    dt: f64,
    u_prev: &[f64],
) -> Result<StencilWeights> {
    let n = mesh.n();
    if i == 0 || i >= n || i == mesh.d_index() {
        return Err(Error::InvalidArgument(format!(
            "interior row index must be in 1..N-1 and differ from N/2, got {i}"
        )));
    }
    if u_prev.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "previous level has {} values, mesh has {}",
            u_prev.len(),
            n + 1
        )));
    }
    let side = if i < mesh.d_index() { Side::Left } else { Side::Right };
    let x = mesh.x(i);
    let (hm, hp) = (mesh.h(i), mesh.h(i + 1));
    let eps = spec.params.epsilon;
    let mu = spec.params.mu;

    let a = spec.a.eval_side(side, x, t_mid)?;
    let f = spec.f.eval_side(side, x, t_mid)?;
    let b = spec.b.eval(x, t_mid)?;
    let c = spec.c.eval(x, t_mid)?;

    // eps * delta^2
    let mut lm = 2.0 * eps / (hm * (hm + hp));
    let mut lp = 2.0 * eps / (hp * (hm + hp));
    let mut lc = -(lm + lp);
    // mu a D*
    match side {
        Side::Left => {
            lm -= mu * a / hm;
            lc += mu * a / hm;
        }
        Side::Right => {
            lp += mu * a / hp;
            lc -= mu * a / hp;
        }
    }
    let implicit_reaction = b + 2.0 * c / dt;
    let explicit_reaction = b - 2.0 * c / dt;

    let old = lm * u_prev[i - 1] + lc * u_prev[i] + lp * u_prev[i + 1];
    let g = 2.0 * f - old + explicit_reaction * u_prev[i];

    Ok(StencilWeights {
        w_minus: -lm,
        w_center: implicit_reaction - lc,
        w_plus: -lp,
        forcing: -g,
    })
}

/// Transmission row `D+ U = D- U` at `x_{N/2} = d`.
pub fn discontinuity_row(mesh: &SpatialMesh) -> StencilWeights {
    let k = mesh.d_index();
    let (hm, hp) = (mesh.h(k), mesh.h(k + 1));
    StencilWeights {
        w_minus: -1.0 / hm,
        w_center: 1.0 / hm + 1.0 / hp,
        w_plus: -1.0 / hp,
        forcing: 0.0,
    }
}

/// Full system advancing `u_prev` (values at `t_next - dt`) to `t_next`.
pub fn assemble(
    spec: &ProblemSpec,
    mesh: &SpatialMesh,
    t_next: f64,
    dt: f64,
    u_prev: &[f64],
) -> Result<TridiagonalSystem> {
    let n = mesh.n();
    if u_prev.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "previous level has {} values, mesh has {}",
            u_prev.len(),
            n + 1
        )));
    }
    let t_mid = t_next - 0.5 * dt;
    let zeros = vec![0.0; n + 1];
    let mut sys = TridiagonalSystem {
        sub: zeros.clone(),
        diag: zeros.clone(),
        sup: zeros.clone(),
        rhs: zeros,
    };
    sys.diag[0] = 1.0;
    sys.rhs[0] = spec.p.eval(t_next)?;
    sys.diag[n] = 1.0;
    sys.rhs[n] = spec.r.eval(t_next)?;
    for i in 1..n {
        let w = if i == mesh.d_index() {
            discontinuity_row(mesh)
        } else {
            interior_row(spec, mesh, i, t_mid, dt, u_prev)?
        };
        sys.set_row(i, w);
    }
    Ok(sys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MViolationKind {
    /// Diagonal is zero (or not a number).
    ZeroDiagonal,
    /// An off-diagonal is positive after the sign normalisation.
    PositiveOffDiagonal,
    /// `|diag| < |sub| + |sup|`.
    NotDiagonallyDominant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MViolation {
    pub row: usize,
    pub kind: MViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrixReport {
    pub violations: Vec<MViolation>,
    /// Rows with `|diag| > |sub| + |sup|`.
    pub strict_rows: usize,
}

impl MMatrixReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty() && self.strict_rows > 0
    }
}

/// Sign pattern and weak diagonal dominance with at least one strict row.
pub fn m_matrix_check(sys: &TridiagonalSystem) -> MMatrixReport {
    let n = sys.len();
    let mut violations = Vec::new();
    let mut strict_rows = 0;
    for i in 0..n {
        let sign = if sys.diag[i] < 0.0 { -1.0 } else { 1.0 };
        let diag = sign * sys.diag[i];
        let sub = if i > 0 { sign * sys.sub[i] } else { 0.0 };
        let sup = if i + 1 < n { sign * sys.sup[i] } else { 0.0 };
        if !(diag > 0.0) {
            violations.push(MViolation { row: i, kind: MViolationKind::ZeroDiagonal });
            continue;
        }
        if sub > 0.0 || sup > 0.0 {
            violations.push(MViolation { row: i, kind: MViolationKind::PositiveOffDiagonal });
        }
        let off = sub.abs() + sup.abs();
        if diag < off {
            violations.push(MViolation { row: i, kind: MViolationKind::NotDiagonallyDominant });
        } else if diag > off {
            strict_rows += 1;
        }
    }
    MMatrixReport { violations, strict_rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{DataFn, PerturbationParams, PiecewiseField, SmoothField};
    use crate::registry;

    /// Pure heat problem: a = b = f = 0, c = 1.
    fn heat(eps: f64) -> ProblemSpec {
        let mut spec = registry::lookup("example1").unwrap();
        spec.a = PiecewiseField::new("a", 0.5, |_, _| 0.0, |_, _| 0.0);
        spec.b = SmoothField::constant("b", 0.0);
        spec.f = PiecewiseField::new("f", 0.5, |_, _| 0.0, |_, _| 0.0);
        spec.params = PerturbationParams { epsilon: eps, mu: 1.0 };
        spec
    }

    fn uniform(n: usize) -> SpatialMesh {
        SpatialMesh::piecewise_uniform(n, 0.5).unwrap()
    }

    #[test]
    fn heat_equation_reduces_to_textbook_crank_nicolson() {
        let (eps, dt, n) = (0.3, 0.01, 8);
        let mesh = uniform(n);
        let h = 1.0 / n as f64;
        let u: Vec<f64> = (0..=n).map(|i| (i as f64 * 0.7).sin()).collect();
        let w = interior_row(&heat(eps), &mesh, 3, 0.005, dt, &u).unwrap();
        let k = eps / (h * h);
        assert!((w.w_minus + k).abs() < 1e-12);
        assert!((w.w_plus + k).abs() < 1e-12);
        assert!((w.w_center - (2.0 * k + 2.0 / dt)).abs() < 1e-10);
        // (2/dt) u^n + eps delta^2 u^n
        let lap = (u[2] - 2.0 * u[3] + u[4]) / (h * h);
        assert!((w.forcing - (2.0 / dt * u[3] + eps * lap)).abs() < 1e-10);
    }

    #[test]
    fn upwind_weights_carry_convection_on_the_correct_side() {
        let spec = registry::lookup("example1").unwrap().with_params(PerturbationParams {
            epsilon: 0.0625,
            mu: 0.5,
        });
        let mesh = uniform(8);
        let u = vec![0.0; 9];
        let h = mesh.h(1);
        let diff = spec.params.epsilon / (h * h);
        let left = interior_row(&spec, &mesh, 2, 0.1, 0.1, &u).unwrap();
        assert_eq!(left.w_plus, -diff);
        assert!(left.w_minus < -diff);
        let right = interior_row(&spec, &mesh, 6, 0.1, 0.1, &u).unwrap();
        assert_eq!(right.w_minus, -diff);
        assert!(right.w_plus < -diff);
    }

    #[test]
    fn quadratic_consistency() {
        let spec = registry::lookup("example2")
            .unwrap()
            .with_params(PerturbationParams { epsilon: 0.01, mu: 0.3 });
        let mesh = SpatialMesh::from_points(vec![0.0, 0.1, 0.25, 0.5, 0.6, 0.8, 1.0]).unwrap();
        let x2: Vec<f64> = mesh.points().iter().map(|x| x * x).collect();
        let (t_mid, dt) = (0.4, 0.05);
        for i in [1usize, 2, 4, 5] {
            let w = interior_row(&spec, &mesh, i, t_mid, dt, &x2).unwrap();
            let applied = -(w.w_minus * x2[i - 1] + w.w_center * x2[i] + w.w_plus * x2[i + 1]);
            let x = mesh.x(i);
            let (side, slope) = if i < 3 {
                (Side::Left, x + mesh.x(i - 1))
            } else {
                (Side::Right, x + mesh.x(i + 1))
            };
            let a = spec.a.eval_side(side, x, t_mid).unwrap();
            let cr = spec.b.eval(x, t_mid).unwrap() + 2.0 / dt;
            let expected = 2.0 * spec.params.epsilon + spec.params.mu * a * slope - cr * x * x;
            assert!((applied - expected).abs() < 1e-11, "row {i}: {applied} vs {expected}");
        }
    }

    #[test]
    fn unit_c_matches_printed_reaction_terms() {
        let spec = registry::lookup("example1")
            .unwrap()
            .with_params(PerturbationParams { epsilon: 0.01, mu: 0.1 });
        let mesh = uniform(8);
        let u: Vec<f64> = (0..=8).map(|i| 0.1 * i as f64).collect();
        let (t_mid, dt) = (0.35, 0.1);
        let mut doubled = spec.clone();
        doubled.c = SmoothField::constant("c", 2.0);
        let w1 = interior_row(&spec, &mesh, 2, t_mid, dt, &u).unwrap();
        let w2 = interior_row(&doubled, &mesh, 2, t_mid, dt, &u).unwrap();
        // only the 2c/dt parts move: centre by 2/dt, forcing by (2/dt) u_i
        assert!((w2.w_center - w1.w_center - 2.0 / dt).abs() < 1e-12);
        assert!((w2.forcing - w1.forcing - 2.0 / dt * u[2]).abs() < 1e-12);
        let b = spec.b.eval(mesh.x(2), t_mid).unwrap();
        let diff = w1.w_center - (-w1.w_minus - w1.w_plus);
        assert!((diff - (b + 2.0 / dt)).abs() < 1e-12);
    }

    #[test]
    fn discontinuity_row_symmetric_case() {
        let mesh = uniform(8);
        let w = discontinuity_row(&mesh);
        assert_eq!((w.w_minus, w.w_center, w.w_plus, w.forcing), (-8.0, 16.0, -8.0, 0.0));
    }

    #[test]
    fn discontinuity_row_annihilates_linear_profiles() {
        let mesh = SpatialMesh::from_points(vec![0.0, 0.3, 0.45, 0.5, 0.52, 0.7, 1.0]).unwrap();
        let w = discontinuity_row(&mesh);
        let k = mesh.d_index();
        for (kappa, sigma) in [(1.0, 0.0), (-3.5, 2.0), (0.25, -1.0)] {
            let u = |x: f64| kappa * x + sigma;
            let r = w.residual(u(mesh.x(k - 1)), u(mesh.x(k)), u(mesh.x(k + 1)));
            assert!(r.abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn homogeneous_toy_system_has_zero_solution() {
        let mut spec = registry::lookup("example1").unwrap();
        spec.f = PiecewiseField::new("f", 0.5, |_, _| 0.0, |_, _| 0.0);
        let mesh = SpatialMesh::piecewise_uniform(4, 0.5).unwrap();
        let sys = assemble(&spec, &mesh, 0.25, 0.25, &[0.0; 5]).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        assert!(m_matrix_check(&sys).passes());
    }

    #[test]
    fn boundary_rows_pin_data() {
        let mut spec = registry::lookup("example1").unwrap();
        spec.p = DataFn::new("p", |t| 1.0 + t);
        spec.r = DataFn::new("r", |t| -t * t);
        let mesh = uniform(8);
        let u: Vec<f64> = (0..=8).map(|i| i as f64).collect();
        let sys = assemble(&spec, &mesh, 0.5, 0.25, &u).unwrap();
        assert_eq!((sys.sub[0], sys.diag[0], sys.sup[0], sys.rhs[0]), (0.0, 1.0, 0.0, 1.5));
        assert_eq!((sys.sub[8], sys.diag[8], sys.sup[8], sys.rhs[8]), (0.0, 1.0, 0.0, -0.25));
        assert_eq!(sys.rhs[4], 0.0);
    }

    #[test]
    fn interior_row_rejects_discontinuity_index() {
        let spec = registry::lookup("example1").unwrap();
        let mesh = uniform(8);
        assert!(interior_row(&spec, &mesh, 4, 0.1, 0.1, &[0.0; 9]).is_err());
        assert!(interior_row(&spec, &mesh, 2, 0.1, 0.1, &[0.0; 5]).is_err());
    }

    #[test]
    fn m_matrix_identity_and_counterexample() {
        let id = TridiagonalSystem::new(vec![0.0; 4], vec![1.0; 4], vec![0.0; 4], vec![1.0; 4])
            .unwrap();
        let report = m_matrix_check(&id);
        assert!(report.passes());
        assert_eq!(report.strict_rows, 4);

        let mut bad = id.clone();
        bad.sub[2] = 0.5;
        let report = m_matrix_check(&bad);
        assert!(!report.passes());
        assert_eq!(
            report.violations,
            vec![MViolation { row: 2, kind: MViolationKind::PositiveOffDiagonal }]
        );

        let mut weak = id;
        weak.sub[1] = -0.7;
        weak.sup[1] = -0.7;
        let report = m_matrix_check(&weak);
        assert_eq!(report.violations[0].kind, MViolationKind::NotDiagonallyDominant);
    }

    #[test]
    fn negated_rows_are_normalised() {
        let sys = TridiagonalSystem::new(
            vec![0.0, 1.0, 0.0],
            vec![1.0, -3.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0; 3],
        )
        .unwrap();
        assert!(m_matrix_check(&sys).passes());
    }

    #[test]
    fn debug_dump_lines() {
        let id = TridiagonalSystem::new(vec![0.0; 3], vec![1.0; 3], vec![0.0; 3], vec![2.0; 3])
            .unwrap();
        let dump = id.render_debug();
        assert_eq!(dump.lines().count(), 3);
        assert!(dump.starts_with("0 0.0000000000000000e0 1.0000000000000000e0"));
    }
}
