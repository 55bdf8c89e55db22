//! Shishkin-Bakhvalov spatial mesh and the uniform time grid.
//!
//! `[0,1]` is split into six segments
//!
//! ```text
//! [0,tau1] [tau1,d-tau2] [d-tau2,d] [d,d+tau3] [d+tau3,1-tau4] [1-tau4,1]
//!    L1          U1          L2         L3          U2            L4
//! ```
//!
//! with `N/8` intervals in each layer segment and `N/4` in each uniform one.
//! Layer segments are graded by inverting `exp(-theta x / 8)` linearly, so
//! points crowd toward `x = 0`, `x = d` and `x = 1`. The transition widths
//! follow the Shishkin choice `tau = (4 / theta) ln N`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::problem::{Case, PerturbationParams, RegimeConstants};

/// Which decay-rate formulas to use for the layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaVariant {
    /// `theta1 = theta2 = sqrt(rho alpha) / (2 sqrt(eps))`.
    #[default]
    Symmetric,
    /// `theta1 = sqrt(rho alpha) / sqrt(eps)`, `theta2 = sqrt(rho alpha) / (2 sqrt(eps))`.
    Asymmetric,
    /// Experimental case (ii) rates `theta1 = alpha mu / eps`, `theta2 = rho / (2 mu)`.
    CaseTwoExperimental,
}

impl ThetaVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThetaVariant::Symmetric => "section4",
            ThetaVariant::Asymmetric => "section2",
            ThetaVariant::CaseTwoExperimental => "case2-experimental",
        }
    }
}

impl std::str::FromStr for ThetaVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "section4" => Ok(ThetaVariant::Symmetric),
            "section2" => Ok(ThetaVariant::Asymmetric),
            "case2-experimental" => Ok(ThetaVariant::CaseTwoExperimental),
            other => Err(Error::InvalidArgument(format!("unknown theta variant `{other}`"))),
        }
    }
}

/// Decay rates (1/length) of the boundary and interior layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerParams {
    pub theta1: f64,
    pub theta2: f64,
}

impl LayerParams {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1 > 0.0 && theta1.is_finite() && theta2 > 0.0 && theta2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "layer rates must be positive and finite, got ({theta1}, {theta2})"
            )));
        }
        Ok(Self { theta1, theta2 })
    }
}

pub fn layer_params(
    regime: &RegimeConstants,
    params: PerturbationParams,
    variant: ThetaVariant,
) -> Result<LayerParams> {
    let RegimeConstants { rho, alpha, case } = *regime;
    if case == Case::CaseII && variant != ThetaVariant::CaseTwoExperimental {
        return Err(Error::UnsupportedRegime(format!(
            "sqrt(alpha) mu > sqrt(rho eps) (alpha={alpha}, rho={rho}, eps={}, mu={}); \
             only the experimental case (ii) variant accepts this regime",
            params.epsilon, params.mu
        )));
    }
    let root = (rho * alpha).sqrt() / params.epsilon.sqrt();
    match variant {
        ThetaVariant::Symmetric => LayerParams::new(0.5 * root, 0.5 * root),
        ThetaVariant::Asymmetric => LayerParams::new(root, 0.5 * root),
        ThetaVariant::CaseTwoExperimental => {
            LayerParams::new(alpha * params.mu / params.epsilon, rho / (2.0 * params.mu))
        }
    }
}

/// Transition widths of the four layer segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub tau4: f64,
}

fn check_layer_count(n: usize) -> Result<()> {
    if n < 16 || !n.is_multiple_of(8) {
        return Err(Error::InvalidArgument(format!(
            "N must be a multiple of 8 and at least 16, got {n}"
        )));
    }
    Ok(())
}

pub fn transition_points(layer: &LayerParams, n: usize, d: f64) -> Result<Transition> {
    check_layer_count(n)?;
    let ln_n = (n as f64).ln();
    let tau1 = 4.0 / layer.theta1 * ln_n;
    let tau2 = 4.0 / layer.theta2 * ln_n;
    let tau = Transition { tau1, tau2, tau3: tau2, tau4: tau1 };
    if !(tau.tau1 + tau.tau2 < d) {
        return Err(Error::LayersOverlap(format!(
            "tau1 + tau2 = {} >= d = {d} at N = {n}",
            tau.tau1 + tau.tau2
        )));
    }
    if !(tau.tau3 + tau.tau4 < 1.0 - d) {
        return Err(Error::LayersOverlap(format!(
            "tau3 + tau4 = {} >= 1 - d = {} at N = {n}",
            tau.tau3 + tau.tau4,
            1.0 - d
        )));
    }
    Ok(tau)
}

/// The six mesh segments, named by the labels used in mesh dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    L1,
    U1,
    L2,
    L3,
    U2,
    L4,
}

impl Segment {
    pub const ALL: [Segment; 6] =
        [Segment::L1, Segment::U1, Segment::L2, Segment::L3, Segment::U2, Segment::L4];

    pub fn label(&self) -> &'static str {
        match self {
            Segment::L1 => "L1",
            Segment::U1 => "U1",
            Segment::L2 => "L2",
            Segment::L3 => "L3",
            Segment::U2 => "U2",
            Segment::L4 => "L4",
        }
    }

    pub fn is_layer(&self) -> bool {
        !matches!(self, Segment::U1 | Segment::U2)
    }

    /// Point-index range `first..=last` covered by the segment on a mesh with
    /// `n` intervals.
    pub fn index_range(&self, n: usize) -> (usize, usize) {
        let e = n / 8;
        match self {
            Segment::L1 => (0, e),
            Segment::U1 => (e, 3 * e),
            Segment::L2 => (3 * e, 4 * e),
            Segment::L3 => (4 * e, 5 * e),
            Segment::U2 => (5 * e, 7 * e),
            Segment::L4 => (7 * e, n),
        }
    }

    /// Segment containing the interval `(x_{i-1}, x_i)`; `i = 0` maps to `L1`.
    pub fn of_interval(i: usize, n: usize) -> Segment {
        let i = i.max(1);
        Segment::ALL
            .into_iter()
            .find(|s| {
                let (a, b) = s.index_range(n);
                i > a && i <= b
            })
            .unwrap_or(Segment::L4)
    }

    /// Decay rate governing a layer segment.
    pub fn theta(&self, layer: &LayerParams) -> Option<f64> {
        match self {
            Segment::L1 | Segment::L4 => Some(layer.theta1),
            Segment::L2 | Segment::L3 => Some(layer.theta2),
            _ => None,
        }
    }
}

/// Layer data attached to a layer-adapted mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerLayout {
    pub layer: LayerParams,
    pub tau: Transition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    n: usize,
    d: f64,
    points: Vec<f64>,
    steps: Vec<f64>,
    layout: Option<LayerLayout>,
}

/// Branch formula of `segment` evaluated at index `i`, with no special
/// treatment of junction indices.
///
/// The log arguments are written relative to the branch anchor
/// (`1 + (8k/N)(1/sqrt N - 1)` with `k` counted from the end where the
/// argument is 1), which is algebraically the same as the textbook form but
/// keeps full relative precision next to `0`, `d` and `1`.
pub fn branch_point(
    segment: Segment,
    i: usize,
    n: usize,
    d: f64,
    layer: &LayerParams,
    tau: &Transition,
) -> f64 {
    let nf = n as f64;
    let s = 1.0 / nf.sqrt();
    match segment {
        Segment::L1 => {
            let k = i as f64;
            -(8.0 / layer.theta1) * (8.0 * k / nf * (s - 1.0)).ln_1p()
        }
        Segment::U1 => {
            let frac = (8.0 * i as f64 - nf) / (2.0 * nf);
            tau.tau1 + (d - tau.tau1 - tau.tau2) * frac
        }
        Segment::L2 => {
            let k = (n / 2) as f64 - i as f64;
            d + (8.0 / layer.theta2) * (-8.0 * k / nf * (1.0 - s)).ln_1p()
        }
        Segment::L3 => {
            let k = i as f64 - (n / 2) as f64;
            d - (8.0 / layer.theta2) * (8.0 * k / nf * (s - 1.0)).ln_1p()
        }
        Segment::U2 => {
            let frac = (8.0 * i as f64 - 5.0 * nf) / (2.0 * nf);
            d + tau.tau3 + (1.0 - d - tau.tau3 - tau.tau4) * frac
        }
        Segment::L4 => {
            let k = nf - i as f64;
            1.0 + (8.0 / layer.theta1) * (-8.0 * k / nf * (1.0 - s)).ln_1p()
        }
    }
}

/// Closed-form value at the seven junction indices, if `i` is one.
fn landmark(i: usize, n: usize, d: f64, tau: &Transition) -> Option<f64> {
    let e = n / 8;
    match i {
        0 => Some(0.0),
        _ if i == e => Some(tau.tau1),
        _ if i == 3 * e => Some(d - tau.tau2),
        _ if i == 4 * e => Some(d),
        _ if i == 5 * e => Some(d + tau.tau3),
        _ if i == 7 * e => Some(1.0 - tau.tau4),
        _ if i == n => Some(1.0),
        _ => None,
    }
}

pub fn build_mesh(layer: &LayerParams, tau: &Transition, n: usize, d: f64) -> Result<SpatialMesh> {
    check_layer_count(n)?;
    let points = (0..=n)
        .map(|i| {
            landmark(i, n, d, tau).unwrap_or_else(|| {
                let seg = Segment::of_interval(i, n);
                branch_point(seg, i, n, d, layer, tau)
            })
        })
        .collect();
    SpatialMesh::assemble(n, d, points, Some(LayerLayout { layer: *layer, tau: *tau }))
}

impl SpatialMesh {
    fn assemble(n: usize, d: f64, points: Vec<f64>, layout: Option<LayerLayout>) -> Result<Self> {
        let steps: Vec<f64> = points.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some((k, &h)) = steps.iter().enumerate().find(|(_, h)| !(**h > 0.0)) {
            return Err(Error::NonMonotone { index: k + 1, step: h });
        }
        Ok(Self { n, d, points, steps, layout })
    }

    /// Layer-adapted mesh: transition points followed by construction.
    pub fn layer_adapted(layer: &LayerParams, n: usize, d: f64) -> Result<Self> {
        let tau = transition_points(layer, n, d)?;
        build_mesh(layer, &tau, n, d)
    }

    /// Arbitrary mesh with the discontinuity at the middle index. `points`
    /// must start at 0, end at 1 and hold an odd number of entries.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let n = points.len().saturating_sub(1);
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "a mesh needs an even number N >= 2 of intervals, got {n}"
            )));
        }
        if points[0] != 0.0 || points[n] != 1.0 {
            return Err(Error::InvalidArgument("mesh must start at 0 and end at 1".into()));
        }
        let d = points[n / 2];
        Self::assemble(n, d, points, None)
    }

    /// `N/2` equal intervals on each side of `d`.
    pub fn piecewise_uniform(n: usize, d: f64) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) || !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "piecewise-uniform mesh needs even N >= 2 and d in (0,1), got N={n}, d={d}"
            )));
        }
        let half = n / 2;
        let points = (0..=n)
            .map(|i| {
                if i == half {
                    d
                } else if i < half {
                    d * i as f64 / half as f64
                } else if i == n {
                    1.0
                } else {
                    d + (1.0 - d) * (i - half) as f64 / half as f64
                }
            })
            .collect();
        Self::assemble(n, d, points, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn d_index(&self) -> usize {
        self.n / 2
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn x(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// `h_i = x_i - x_{i-1}` for `1 <= i <= N`.
    pub fn h(&self, i: usize) -> f64 {
        self.steps[i - 1]
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn layout(&self) -> Option<&LayerLayout> {
        self.layout.as_ref()
    }

    pub fn tau(&self) -> Option<Transition> {
        self.layout.map(|l| l.tau)
    }

    pub fn layer(&self) -> Option<LayerParams> {
        self.layout.map(|l| l.layer)
    }

    /// Insert interval midpoints: point `i` of `self` becomes point `2i`.
    pub fn bisect(&self) -> SpatialMesh {
        let mut points = Vec::with_capacity(2 * self.n + 1);
        for w in self.points.windows(2) {
            points.push(w[0]);
            points.push(0.5 * (w[0] + w[1]));
        }
        points.push(self.points[self.n]);
        let steps = points.windows(2).map(|w| w[1] - w[0]).collect();
        SpatialMesh { n: 2 * self.n, d: self.d, points, steps, layout: self.layout }
    }

    /// Plain-text dump: a header with `N`, rates and widths, then one
    /// `index x_i h_i label` line per point (`h_0 = 0`).
    pub fn render_dump(&self) -> String {
        let mut out = String::new();
        match self.layout {
            Some(LayerLayout { layer, tau }) => {
                let _ = writeln!(
                    out,
                    "# N={} theta1={:e} theta2={:e} tau1={:e} tau2={:e} tau3={:e} tau4={:e}",
                    self.n, layer.theta1, layer.theta2, tau.tau1, tau.tau2, tau.tau3, tau.tau4
                );
            }
            None => {
                let _ = writeln!(out, "# N={} uniform", self.n);
            }
        }
        for (i, &x) in self.points.iter().enumerate() {
            let h = if i == 0 { 0.0 } else { self.h(i) };
            let label = Segment::of_interval(i, self.n).label();
            let _ = writeln!(out, "{i} {x:.16e} {h:.16e} {label}");
        }
        out
    }
}

/// Per-segment discrete bounds on the mesh-generating function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSegment {
    pub segment: Segment,
    /// `max_i |dphi/dxi| / N`.
    pub max_slope_ratio: f64,
    /// `sum_i (dphi/dxi)^2 dxi / N`.
    pub integral_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiReport {
    pub n: usize,
    /// `64 / sqrt(N)`, the bound both ratios must respect.
    pub bound: f64,
    pub segments: Vec<PhiSegment>,
}

impl PhiReport {
    pub fn passes(&self) -> bool {
        self.segments
            .iter()
            .all(|s| s.max_slope_ratio <= self.bound && s.integral_ratio <= self.bound)
    }
}

/// Discrete slopes of the generating functions, `phi = theta |x - anchor| / 8`
/// on a reference grid `xi_i = i/N`.
pub fn phi_diagnostics(mesh: &SpatialMesh) -> Result<PhiReport> {
    let layout = mesh
        .layout
        .ok_or_else(|| Error::InvalidArgument("mesh has no layer segments".into()))?;
    let n = mesh.n;
    let nf = n as f64;
    let segments = Segment::ALL
        .iter()
        .filter(|s| s.is_layer())
        .map(|&segment| {
            let theta = segment.theta(&layout.layer).unwrap_or(f64::NAN);
            let (a, b) = segment.index_range(n);
            let mut max_slope: f64 = 0.0;
            let mut integral = 0.0;
            for i in a + 1..=b {
                let slope = theta * mesh.h(i) / 8.0 * nf;
                max_slope = max_slope.max(slope);
                integral += slope * slope / nf;
            }
            PhiSegment { segment, max_slope_ratio: max_slope / nf, integral_ratio: integral / nf }
        })
        .collect();
    Ok(PhiReport { n, bound: 64.0 / nf.sqrt(), segments })
}

/// Uniform partition of `[0, T]` into `M` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t_final: f64, m: usize) -> Result<Self> {
        if m == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time grid needs M >= 1 and T > 0, got M={m}, T={t_final}"
            )));
        }
        let times = (0..=m).map(|j| t_final * j as f64 / m as f64).collect();
        Ok(Self { t_final, times })
    }

    pub fn m(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.m() as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        self.times[j]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Grid with twice as many steps; `refine().t(2j) == t(j)` exactly.
    pub fn refine(&self) -> TimeGrid {
        TimeGrid::new(self.t_final, 2 * self.m()).expect("refining a valid grid")
    }
}
