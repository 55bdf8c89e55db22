//! The continuous problem
//!
//! ```text
//! eps u_xx + mu a(x,t) u_x - b(x,t) u - c(x,t) u_t = f(x,t),  (x,t) in ((0,d) u (d,1)) x (0,T]
//! u(0,t) = p(t),  u(1,t) = r(t),  u(x,0) = q(x)
//! ```
//!
//! where `a` and `f` jump at `x = d`, `a <= -alpha1` on the left and
//! `a >= alpha2` on the right.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default number of samples per axis used for hypothesis checks and `rho`.
pub const DEFAULT_SAMPLE_DENSITY: usize = 101;

/// Corner compatibility tolerance `|q(0) - p(0)|`, `|q(1) - r(0)|`.
pub const COMPATIBILITY_TOL: f64 = 1e-12;

pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn checked(field: &'static str, x: f64, t: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation { field, x, t })
    }
}

/// Which side of the discontinuity a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A field that is smooth on all of `[0,1] x [0,T]`.
#[derive(Clone)]
pub struct SmoothField {
    name: &'static str,
    f: Fn2,
}

impl SmoothField {
    pub fn new(name: &'static str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name, f: Arc::new(f) }
    }

    pub fn constant(name: &'static str, value: f64) -> Self {
        Self::new(name, move |_, _| value)
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        checked(self.name, x, t, (self.f)(x, t))
    }
}

impl fmt::Debug for SmoothField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmoothField({})", self.name)
    }
}

/// A scalar field with two smooth branches meeting at `x = d`.
#[derive(Clone)]
pub struct PiecewiseField {
    name: &'static str,
    d: f64,
    left: Fn2,
    right: Fn2,
}

impl PiecewiseField {
    pub fn new(
        name: &'static str,
        d: f64,
        left: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        right: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name,
            d,
            left: Arc::new(left),
            right: Arc::new(right),
        }
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Evaluate a specific branch, regardless of where `x` lies.
    pub fn eval_side(&self, side: Side, x: f64, t: f64) -> Result<f64> {
        let v = match side {
            Side::Left => (self.left)(x, t),
            Side::Right => (self.right)(x, t),
        };
        checked(self.name, x, t, v)
    }

    /// Branch selected by position. The left branch owns `x = d` itself; use
    /// [`PiecewiseField::one_sided`] to get both limits there.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        let side = if x <= self.d { Side::Left } else { Side::Right };
        self.eval_side(side, x, t)
    }

    /// `(left(d,t), right(d,t))`.
    pub fn one_sided(&self, t: f64) -> Result<(f64, f64)> {
        Ok((
            self.eval_side(Side::Left, self.d, t)?,
            self.eval_side(Side::Right, self.d, t)?,
        ))
    }

    /// `[w](d,t) = w(d+,t) - w(d-,t)`.
    pub fn jump(&self, t: f64) -> Result<f64> {
        let (l, r) = self.one_sided(t)?;
        Ok(r - l)
    }
}

impl fmt::Debug for PiecewiseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PiecewiseField({}, d = {})", self.name, self.d)
    }
}

/// A function of a single variable (boundary or initial data).
#[derive(Clone)]
pub struct DataFn {
    name: &'static str,
    f: Fn1,
}

impl DataFn {
    pub fn new(name: &'static str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name, f: Arc::new(f) }
    }

    pub fn zero(name: &'static str) -> Self {
        Self::new(name, |_| 0.0)
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        checked(self.name, s, s, (self.f)(s))
    }
}

impl fmt::Debug for DataFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DataFn({})", self.name)
    }
}

/// Diffusion (`epsilon`) and convection (`mu`) perturbation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationParams {
    pub epsilon: f64,
    pub mu: f64,
}

impl PerturbationParams {
    pub fn new(epsilon: f64, mu: f64) -> Result<Self> {
        let p = Self { epsilon, mu };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mu must lie in (0, 1], got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// A complete problem instance: coefficients, data, parameters and the
/// user-declared positive floors of `|a|`, `b` and `c`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Convection coefficient.
    pub a: PiecewiseField,
    /// Source term.
    pub f: PiecewiseField,
    /// Reaction coefficient.
    pub b: SmoothField,
    /// Coefficient of `u_t`.
    pub c: SmoothField,
    /// `u(0,t)`.
    pub p: DataFn,
    /// `u(1,t)`.
    pub r: DataFn,
    /// `u(x,0)`.
    pub q: DataFn,
    pub d: f64,
    pub t_final: f64,
    pub params: PerturbationParams,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub eta: f64,
}

impl ProblemSpec {
    /// Same problem with different perturbation parameters.
    pub fn with_params(&self, params: PerturbationParams) -> Self {
        Self {
            params,
            ..self.clone()
        }
    }

    /// Structural checks on the scalar constants.
    pub fn check_constants(&self) -> Result<()> {
        self.params.check()?;
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(Error::InvalidArgument(format!("d must lie in (0, 1), got {}", self.d)));
        }
        if (self.a.d() - self.d).abs() > 0.0 || (self.f.d() - self.d).abs() > 0.0 {
            return Err(Error::InvalidArgument(
                "discontinuity of a and f must coincide with d".into(),
            ));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!("T must be positive, got {}", self.t_final)));
        }
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta", self.beta),
            ("eta", self.eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Sample abscissae of a `density`-point grid on `[0,1]` restricted to
    /// one branch; `d` is always included.
    fn branch_samples(&self, density: usize, side: Side) -> Vec<f64> {
        let mut xs: Vec<f64> = (0..density)
            .map(|k| k as f64 / (density - 1) as f64)
            .filter(|&x| match side {
                Side::Left => x < self.d,
                Side::Right => x > self.d,
            })
            .collect();
        match side {
            Side::Left => xs.push(self.d),
            Side::Right => xs.insert(0, self.d),
        }
        xs
    }

    fn time_samples(&self, density: usize) -> Vec<f64> {
        (0..density)
            .map(|l| self.t_final * l as f64 / (density - 1) as f64)
            .collect()
    }
}

/// Sampled location and value of the worst offender for a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub x: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisKind {
    LeftConvectionSign,
    RightConvectionSign,
    ReactionFloor,
    TimeCoefficientFloor,
    LeftCorner,
    RightCorner,
}

impl HypothesisKind {
    pub fn describe(&self) -> &'static str {
        match self {
            HypothesisKind::LeftConvectionSign => "a <= -alpha1 on the left branch",
            HypothesisKind::RightConvectionSign => "a >= alpha2 on the right branch",
            HypothesisKind::ReactionFloor => "b >= beta",
            HypothesisKind::TimeCoefficientFloor => "c >= eta",
            HypothesisKind::LeftCorner => "q(0) = p(0)",
            HypothesisKind::RightCorner => "q(1) = r(0)",
        }
    }
}

/// Outcome of one hypothesis check. `margin` is the worst signed slack over
/// the sample grid; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub kind: HypothesisKind,
    pub passed: bool,
    pub margin: f64,
    pub worst: SamplePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub density: usize,
    pub hypotheses: Vec<Hypothesis>,
}

impl ValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.hypotheses.iter().all(|h| h.passed)
    }

    pub fn get(&self, kind: HypothesisKind) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.kind == kind)
    }

    /// First failed hypothesis as an error.
    pub fn check(&self) -> Result<()> {
        let Some(h) = self.hypotheses.iter().find(|h| !h.passed) else {
            return Ok(());
        };
        let msg = format!(
            "{} fails at (x={}, t={}) with value {} (margin {:e})",
            h.kind.describe(),
            h.worst.x,
            h.worst.t,
            h.worst.value,
            h.margin
        );
        Err(match h.kind {
            HypothesisKind::LeftConvectionSign | HypothesisKind::RightConvectionSign => {
                Error::SignViolation(msg)
            }
            HypothesisKind::ReactionFloor | HypothesisKind::TimeCoefficientFloor => {
                Error::FloorViolation(msg)
            }
            HypothesisKind::LeftCorner | HypothesisKind::RightCorner => {
                Error::CompatibilityViolation(msg)
            }
        })
    }
}

struct Worst {
    margin: f64,
    at: SamplePoint,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            at: SamplePoint { x: f64::NAN, t: f64::NAN, value: f64::NAN },
        }
    }

    fn offer(&mut self, margin: f64, x: f64, t: f64, value: f64) {
        if margin < self.margin {
            self.margin = margin;
            self.at = SamplePoint { x, t, value };
        }
    }

    fn finish(self, kind: HypothesisKind) -> Hypothesis {
        Hypothesis { kind, passed: self.margin >= 0.0, margin: self.margin, worst: self.at }
    }
}

/// Check the sign, floor and corner-compatibility hypotheses on a tensor
/// grid with `sample_density` points per axis.
pub fn validate(spec: &ProblemSpec, sample_density: usize) -> Result<ValidationReport> {
    if sample_density < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample density must be at least 2, got {sample_density}"
        )));
    }
    spec.check_constants()?;
    let ts = spec.time_samples(sample_density);
    let xs: Vec<f64> = (0..sample_density)
        .map(|k| k as f64 / (sample_density - 1) as f64)
        .collect();

    let mut left = Worst::new();
    for &x in &spec.branch_samples(sample_density, Side::Left) {
        for &t in &ts {
            let a = spec.a.eval_side(Side::Left, x, t)?;
            left.offer(-spec.alpha1 - a, x, t, a);
        }
    }
    let mut right = Worst::new();
    for &x in &spec.branch_samples(sample_density, Side::Right) {
        for &t in &ts {
            let a = spec.a.eval_side(Side::Right, x, t)?;
            right.offer(a - spec.alpha2, x, t, a);
        }
    }
    let mut reaction = Worst::new();
    let mut time_coeff = Worst::new();
    for &x in &xs {
        for &t in &ts {
            let b = spec.b.eval(x, t)?;
            reaction.offer(b - spec.beta, x, t, b);
            let c = spec.c.eval(x, t)?;
            time_coeff.offer(c - spec.eta, x, t, c);
        }
    }

    let mut lc = Worst::new();
    let gap = (spec.q.eval(0.0)? - spec.p.eval(0.0)?).abs();
    lc.offer(COMPATIBILITY_TOL - gap, 0.0, 0.0, gap);
    let mut rc = Worst::new();
    let gap = (spec.q.eval(1.0)? - spec.r.eval(0.0)?).abs();
    rc.offer(COMPATIBILITY_TOL - gap, 1.0, 0.0, gap);

    Ok(ValidationReport {
        density: sample_density,
        hypotheses: vec![
            left.finish(HypothesisKind::LeftConvectionSign),
            right.finish(HypothesisKind::RightConvectionSign),
            reaction.finish(HypothesisKind::ReactionFloor),
            time_coeff.finish(HypothesisKind::TimeCoefficientFloor),
            lc.finish(HypothesisKind::LeftCorner),
            rc.finish(HypothesisKind::RightCorner),
        ],
    })
}

/// Parameter regime: case (i) has boundary layers of equal `O(sqrt(eps))`
/// width, case (ii) has layers of different widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    CaseI,
    CaseII,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeConstants {
    /// Minimum of `|b|/|a|` over the sample grid.
    pub rho: f64,
    /// `min(alpha1, alpha2)`.
    pub alpha: f64,
    pub case: Case,
}

impl RegimeConstants {
    /// Case (i) iff `sqrt(alpha) mu <= sqrt(rho eps)`.
    pub fn classify(rho: f64, alpha: f64, params: PerturbationParams) -> Self {
        let case = if alpha.sqrt() * params.mu <= (rho * params.epsilon).sqrt() {
            Case::CaseI
        } else {
            Case::CaseII
        };
        Self { rho, alpha, case }
    }
}

/// Compute `rho`, `alpha` and the regime case from samples of `a` and `b`.
pub fn derive_regime(spec: &ProblemSpec, sample_density: usize) -> Result<RegimeConstants> {
    if sample_density < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample density must be at least 2, got {sample_density}"
        )));
    }
    let ts = spec.time_samples(sample_density);
    let mut rho = f64::INFINITY;
    for side in [Side::Left, Side::Right] {
        for &x in &spec.branch_samples(sample_density, side) {
            for &t in &ts {
                let a = spec.a.eval_side(side, x, t)?;
                let b = spec.b.eval(x, t)?;
                rho = rho.min(b.abs() / a.abs());
            }
        }
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("rho must be positive and finite, got {rho}")));
    }
    let alpha = spec.alpha1.min(spec.alpha2);
    Ok(RegimeConstants::classify(rho, alpha, spec.params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;
    use proptest::prelude::*;

    fn example1() -> ProblemSpec {
        registry::lookup("example1").unwrap()
    }

    #[test]
    fn example1_passes_all_hypotheses() {
        let report = validate(&example1(), DEFAULT_SAMPLE_DENSITY).unwrap();
        assert!(report.is_accepted(), "{report:?}");
        assert!(report.check().is_ok());
        assert_eq!(report.hypotheses.len(), 6);
    }

    #[test]
    fn wrong_sign_on_left_branch() {
        let mut spec = example1();
        spec.a = PiecewiseField::new("a", 0.5, |_, _| 1.0, |x, _| 1.0 + x * (1.0 - x));
        let report = validate(&spec, 11).unwrap();
        let h = report.get(HypothesisKind::LeftConvectionSign).unwrap();
        assert!(!h.passed);
        assert_eq!(h.worst.value, 1.0);
        assert!(matches!(report.check(), Err(Error::SignViolation(_))));
    }

    #[test]
    fn reaction_floor_violation_reports_worst_point() {
        let mut spec = example1();
        spec.b = SmoothField::new("b", |x, _| 0.5 + x);
        let report = validate(&spec, 11).unwrap();
        let h = report.get(HypothesisKind::ReactionFloor).unwrap();
        assert!(!h.passed);
        assert_eq!(h.worst.x, 0.0);
        assert!(matches!(report.check(), Err(Error::FloorViolation(_))));
    }

    #[test]
    fn corner_mismatch() {
        let mut spec = example1();
        spec.q = DataFn::new("q", |_| 1.0);
        spec.p = DataFn::zero("p");
        let report = validate(&spec, 11).unwrap();
        assert!(matches!(report.check(), Err(Error::CompatibilityViolation(_))));
    }

    #[test]
    fn density_below_two_is_rejected() {
        assert!(matches!(validate(&example1(), 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(derive_regime(&example1(), 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_finite_coefficient_is_an_evaluation_failure() {
        let mut spec = example1();
        spec.b = SmoothField::new("b", |x, _| if x > 0.7 { f64::NAN } else { 2.0 });
        assert!(matches!(validate(&spec, 11), Err(Error::Evaluation { field: "b", .. })));
    }

    #[test]
    fn piecewise_field_branches_and_jump() {
        let spec = example1();
        let (l, r) = spec.a.one_sided(0.3).unwrap();
        assert_eq!(l, -1.25);
        assert_eq!(r, 1.25);
        assert_eq!(spec.a.eval(0.5, 0.3).unwrap(), l);
        assert_eq!(spec.a.eval(0.75, 0.3).unwrap(), 1.0 + 0.75 * 0.25);
        // f jumps by 4 (1 + d^2) t
        assert!((spec.f.jump(1.0).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn tiny_parameters_fall_in_case_one() {
        // alpha mu^2 <= rho eps whenever rho alpha >= 1
        let params = PerturbationParams::new(1e-8, 1e-6).unwrap();
        let r = RegimeConstants::classify(1.0, 1.0, params);
        assert_eq!(r.case, Case::CaseI);
        let r = RegimeConstants::classify(2.0, 0.5, params);
        assert_eq!(r.case, Case::CaseI);
    }

    #[test]
    fn predicate_equality_is_case_one() {
        let params = PerturbationParams::new(1.0, 1.0).unwrap();
        assert_eq!(RegimeConstants::classify(1.0, 1.0, params).case, Case::CaseI);
        let params = PerturbationParams::new(1e-4, 0.5).unwrap();
        assert_eq!(RegimeConstants::classify(1.0, 1.0, params).case, Case::CaseII);
    }

    #[test]
    fn example1_rho_matches_brute_force() {
        // (1 + e^x) / (1 + x(1-x)) minimised over x = k/100 with an independent loop
        let mut brute = f64::INFINITY;
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            brute = brute.min((1.0 + x.exp()) / (1.0 + x * (1.0 - x)));
        }
        let regime = derive_regime(&example1(), 101).unwrap();
        assert!((regime.rho - brute).abs() < 1e-15);
        assert!((regime.rho - 1.914_593_636_933_228).abs() < 1e-12);
        assert_eq!(regime.alpha, 1.0);
        assert_eq!(regime.case, Case::CaseI);
    }

    #[test]
    fn parameter_range_checked() {
        assert!(PerturbationParams::new(0.0, 0.5).is_err());
        assert!(PerturbationParams::new(0.5, 1.5).is_err());
        assert!(PerturbationParams::new(1.0, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn refining_nested_samples_never_increases_rho(k in 1usize..8, m in 2usize..6) {
            // density (n-1)*m + 1 contains every point of density n
            let n = 5 * k + 1;
            let coarse = derive_regime(&example1(), n).unwrap();
            let fine = derive_regime(&example1(), (n - 1) * m + 1).unwrap();
            prop_assert!(fine.rho <= coarse.rho);
        }

        #[test]
        fn case_predicate_is_scale_consistent(
            eps in 1e-12f64..0.2, mu in 1e-8f64..0.5, rho in 0.1f64..10.0, alpha in 0.1f64..10.0
        ) {
            let p = PerturbationParams { epsilon: eps, mu };
            let q = PerturbationParams { epsilon: 4.0 * eps, mu: 2.0 * mu };
            prop_assert_eq!(
                RegimeConstants::classify(rho, alpha, p).case,
                RegimeConstants::classify(rho, alpha, q).case
            );
        }

        #[test]
        fn validated_convection_has_opposite_one_sided_signs(
            s1 in 0.5f64..3.0, s2 in 0.5f64..3.0, t in 0.0f64..1.0
        ) {
            let mut spec = example1();
            spec.a = PiecewiseField::new("a", 0.5, move |x, _| -s1 * (1.0 + x), move |x, _| s2 * (2.0 - x));
            spec.alpha1 = 0.5 * s1;
            spec.alpha2 = 0.5 * s2;
            let report = validate(&spec, 21).unwrap();
            prop_assert!(report.is_accepted());
            prop_assert!(spec.alpha1 * spec.alpha2 > 0.0);
            let (l, r) = spec.a.one_sided(t).unwrap();
            prop_assert!(l < 0.0 && r > 0.0);
        }
    }
}
