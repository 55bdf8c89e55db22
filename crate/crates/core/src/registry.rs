//! Built-in problems selectable by name.

use crate::error::{Error, Result};
use crate::problem::{DataFn, PerturbationParams, PiecewiseField, ProblemSpec, SmoothField};

pub const KEYS: [&str; 2] = ["example1", "example2"];

/// Both examples share every coefficient except the right-branch source
/// amplitude: `2(1+x^2)t` for `example1`, `3(1+x^2)t` for `example2`.
fn discontinuous_example(right_source: f64) -> ProblemSpec {
    let d = 0.5;
    ProblemSpec {
        a: PiecewiseField::new(
            "a",
            d,
            |x, _| -(1.0 + x * (1.0 - x)),
            |x, _| 1.0 + x * (1.0 - x),
        ),
        f: PiecewiseField::new(
            "f",
            d,
            |x, t| -2.0 * (1.0 + x * x) * t,
            move |x, t| right_source * (1.0 + x * x) * t,
        ),
        b: SmoothField::new("b", |x, _| 1.0 + x.exp()),
        c: SmoothField::constant("c", 1.0),
        p: DataFn::zero("p"),
        r: DataFn::zero("r"),
        q: DataFn::zero("q"),
        d,
        t_final: 1.0,
        params: PerturbationParams { epsilon: 1e-8, mu: 1e-6 },
        alpha1: 1.0,
        alpha2: 1.0,
        beta: 2.0,
        eta: 1.0,
    }
}

/// Look up a registered problem. Parameters default to `eps = 1e-8`,
/// `mu = 1e-6`; override with [`ProblemSpec::with_params`].
pub fn lookup(key: &str) -> Result<ProblemSpec> {
    match key {
        "example1" => Ok(discontinuous_example(2.0)),
        "example2" => Ok(discontinuous_example(3.0)),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}
