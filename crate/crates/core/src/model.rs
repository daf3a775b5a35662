//! Model parameters, channel propensities and the frozen fast-queue law.
//!
//! The slow queue A holds messages, the fast queue B holds Bell pairs. With
//! scaling parameter `n` the five channels fire at
//!
//! | channel | rate                      | jump      |
//! |---------|---------------------------|-----------|
//! | 1       | `n r1(x1/n)`              | `(+1, 0)` |
//! | 2       | `n lambda`                | `(0, +1)` |
//! | 3       | `n r3(x1/n) 1{x2 = 0}`    | `(-1, 0)` |
//! | 4       | `n r4(x1/n) x2`           | `(-1,-1)` |
//! | 5       | `n mu x2`                 | `(0, -1)` |
//!
//! With the slow variable frozen at `y1`, queue B is an M/M/inf-type
//! birth-death chain whose stationary law is Poisson with mean
//! `m(y1) = lambda / (r4(y1) + mu)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar map used for rates and their derivatives.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// State-change vectors of the five channels, in channel order.
pub const JUMPS: [(i64, i64); 5] = [(1, 0), (0, 1), (-1, 0), (-1, -1), (0, -1)];

const FD_STEP: f64 = 1e-6;
const FD_STEP_SECOND: f64 = 1e-3;

/// A nonnegative, Lipschitz rate function of the scaled slow variable.
///
/// Derivatives are analytic when supplied; otherwise they come from finite
/// differences with one Richardson extrapolation step.
#[derive(Clone)]
pub struct RateFunction {
    label: String,
    eval: ScalarFn,
    deriv1: Option<ScalarFn>,
    deriv2: Option<ScalarFn>,
    lipschitz_hint: f64,
}

impl RateFunction {
    /// A rate without analytic derivatives.
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), eval: Arc::new(eval), deriv1: None, deriv2: None, lipschitz_hint: f64::NAN }
    }

    pub fn with_derivatives(
        label: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
            deriv1: Some(Arc::new(deriv1)),
            deriv2: Some(Arc::new(deriv2)),
            lipschitz_hint: f64::NAN,
        }
    }

    /// `y -> c`.
    pub fn constant(c: f64) -> Self {
        Self::with_derivatives(format!("const({c})"), move |_| c, |_| 0.0, |_| 0.0).with_lipschitz_hint(0.0)
    }

    /// `y -> slope * y`.
    pub fn linear(slope: f64) -> Self {
        Self::with_derivatives(format!("linear({slope})"), move |y| slope * y, move |_| slope, |_| 0.0)
            .with_lipschitz_hint(slope.abs())
    }

    /// `y -> scale / (y + 1)`, the regulated-arrivals rate.
    pub fn regulated(scale: f64) -> Self {
        Self::with_derivatives(
            format!("regulated({scale})"),
            move |y| scale / (y + 1.0),
            move |y| -scale / ((y + 1.0) * (y + 1.0)),
            move |y| 2.0 * scale / ((y + 1.0) * (y + 1.0) * (y + 1.0)),
        )
        .with_lipschitz_hint(scale.abs())
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn with_lipschitz_hint(mut self, hint: f64) -> Self {
        self.lipschitz_hint = hint;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Documentation only; never used in computations.
    pub fn lipschitz_hint(&self) -> f64 {
        self.lipschitz_hint
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.deriv1.is_some() && self.deriv2.is_some()
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.eval)(y)
    }

    pub fn deriv1(&self, y: f64) -> f64 {
        match &self.deriv1 {
            Some(d) => d(y),
            None => richardson(|h| first_difference(&*self.eval, y, h), FD_STEP, 2),
        }
    }

    pub fn deriv2(&self, y: f64) -> f64 {
        match &self.deriv2 {
            Some(d) => d(y),
            None => richardson(|h| second_difference(&*self.eval, y, h), FD_STEP_SECOND, 2),
        }
    }
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateFunction")
            .field("label", &self.label)
            .field("analytic_derivatives", &self.has_analytic_derivatives())
            .finish()
    }
}

// Central differences where the stencil stays in [0, inf), second-order
// one-sided stencils at the boundary. Both have O(h^2) leading error.
fn first_difference(f: &(dyn Fn(f64) -> f64 + Send + Sync), y: f64, h: f64) -> f64 {
    if y >= 2.0 * h {
        (f(y + h) - f(y - h)) / (2.0 * h)
    } else {
        (-3.0 * f(y) + 4.0 * f(y + h) - f(y + 2.0 * h)) / (2.0 * h)
    }
}

fn second_difference(f: &(dyn Fn(f64) -> f64 + Send + Sync), y: f64, h: f64) -> f64 {
    if y >= 2.0 * h {
        (f(y + h) - 2.0 * f(y) + f(y - h)) / (h * h)
    } else {
        (2.0 * f(y) - 5.0 * f(y + h) + 4.0 * f(y + 2.0 * h) - f(y + 3.0 * h)) / (h * h)
    }
}

/// One Richardson step for a scheme with error `O(h^order)`.
fn richardson(scheme: impl Fn(f64) -> f64, h: f64, order: i32) -> f64 {
    let coarse = scheme(h);
    let fine = scheme(h / 2.0);
    let w = 2f64.powi(order);
    (w * fine - coarse) / (w - 1.0)
}

/// Scaling parameter, fast-queue rates and the three slow-queue rates.
#[derive(Clone, Debug)]
pub struct ModelParams {
    n: u64,
    lambda: f64,
    mu: f64,
    r1: RateFunction,
    r3: RateFunction,
    r4: RateFunction,
}

impl ModelParams {
    pub fn new(n: u64, lambda: f64, mu: f64, r1: RateFunction, r3: RateFunction, r4: RateFunction) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid("mu", format!("must be positive, got {mu}")));
        }
        if !(r1.eval(0.0) > 0.0) {
            return Err(Error::invalid("r1", "r1(0) must be positive"));
        }
        if r3.eval(0.0) != 0.0 {
            return Err(Error::invalid("r3", "r3(0) must be zero"));
        }
        if r4.eval(0.0) != 0.0 {
            return Err(Error::invalid("r4", "r4(0) must be zero"));
        }
        Ok(Self { n, lambda, mu, r1, r3, r4 })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn r1(&self) -> &RateFunction {
        &self.r1
    }

    pub fn r3(&self) -> &RateFunction {
        &self.r3
    }

    pub fn r4(&self) -> &RateFunction {
        &self.r4
    }

    /// Same model at a different scale.
    pub fn with_n(&self, n: u64) -> Result<Self> {
        Self::new(n, self.lambda, self.mu, self.r1.clone(), self.r3.clone(), self.r4.clone())
    }

    /// Stable identifier of the parameterisation, mixed with `salt`.
    pub fn digest(&self, salt: u64) -> u64 {
        let mut h = Fnv::new();
        h.write(&self.n.to_le_bytes());
        h.write(&self.lambda.to_bits().to_le_bytes());
        h.write(&self.mu.to_bits().to_le_bytes());
        for r in [&self.r1, &self.r3, &self.r4] {
            h.write(r.label.as_bytes());
            h.write(&[0xff]);
        }
        h.write(&salt.to_le_bytes());
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Unscaled queue lengths `(X_A, X_B)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct State {
    pub x1: u64,
    pub x2: u64,
}

impl State {
    pub const fn new(x1: u64, x2: u64) -> Self {
        Self { x1, x2 }
    }

    pub fn scaled(self, n: u64) -> ScaledState {
        ScaledState { y1: self.x1 as f64 / n as f64, y2: self.x2 }
    }

    /// Applies a channel's jump. `None` if a component would go negative.
    pub fn apply(self, channel: usize) -> Option<State> {
        let (d1, d2) = JUMPS[channel];
        Some(State { x1: self.x1.checked_add_signed(d1)?, x2: self.x2.checked_add_signed(d2)? })
    }
}

/// `(Y_A, Y_B) = (X_A / n, X_B)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledState {
    pub y1: f64,
    pub y2: u64,
}

/// Channel rates at `s`, in channel order.
#[inline]
pub fn propensities(p: &ModelParams, s: State) -> [f64; 5] {
    let n = p.n as f64;
    let y1 = s.x1 as f64 / n;
    let x2 = s.x2 as f64;
    let (r3, r4) = if s.x1 == 0 { (0.0, 0.0) } else { (p.r3.eval(y1), p.r4.eval(y1)) };
    [n * p.r1.eval(y1), n * p.lambda, if s.x2 == 0 { n * r3 } else { 0.0 }, n * r4 * x2, n * p.mu * x2]
}

/// Stationary mean of the frozen fast queue, `lambda / (r4(y1) + mu)`.
#[inline]
pub fn m_of(p: &ModelParams, y1: f64) -> f64 {
    p.lambda / (p.r4.eval(y1) + p.mu)
}

/// `d m / d y1 = -lambda r4'(y1) / (r4(y1) + mu)^2`.
pub fn m_prime(p: &ModelParams, y1: f64) -> f64 {
    let d = p.r4.eval(y1) + p.mu;
    -p.lambda * p.r4.deriv1(y1) / (d * d)
}

/// Poisson pmf with mean `mean`, evaluated in log space.
#[inline]
pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if k == 0 {
        return (-mean).exp();
    }
    let kf = k as f64;
    (-mean + kf * mean.ln() - libm::lgamma(kf + 1.0)).exp()
}

/// Stationary probability that the frozen fast queue holds `k` pairs.
pub fn pi_pmf(p: &ModelParams, y1: f64, k: u64) -> f64 {
    poisson_pmf(m_of(p, y1), k)
}

/// Smallest admissible truncation of the fast state space for mean `m`:
/// `max(2, ceil(m + 10 sqrt(m) + 20))`.
pub fn truncation_floor(m: f64) -> usize {
    ((m + 10.0 * m.sqrt() + 20.0).ceil() as usize).max(2)
}

/// The two rate families used for the steady-state figures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    /// `r1 = lambda_A`, `r3 = mu_A y`, `r4 = M mu_A y`.
    ConstantArrivals,
    /// As above but `r1 = lambda_A / (y + 1)`.
    RegulatedArrivals,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::ConstantArrivals => "constant_arrivals",
            Preset::RegulatedArrivals => "regulated_arrivals",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant_arrivals" => Ok(Preset::ConstantArrivals),
            "regulated_arrivals" => Ok(Preset::RegulatedArrivals),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset `{other}` (expected constant_arrivals or regulated_arrivals)"),
            )),
        }
    }
}

/// Raw rates behind a [`Preset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetRates {
    pub lambda_a: f64,
    pub mu_a: f64,
    pub lambda_b: f64,
    pub mu_b: f64,
    pub speedup: f64,
}

impl PresetRates {
    /// The figure configuration: `lambda_A = 5`, `mu_A = 2`, `lambda_B = 3`,
    /// `mu_B = 2`, `M = 2`.
    pub const FIGURE: PresetRates = PresetRates { lambda_a: 5.0, mu_a: 2.0, lambda_b: 3.0, mu_b: 2.0, speedup: 2.0 };
}

/// Builds the model for one of the named rate families.
pub fn make_preset(preset: Preset, rates: PresetRates, n: u64) -> Result<ModelParams> {
    let checks = [
        ("lambda_A", rates.lambda_a),
        ("mu_A", rates.mu_a),
        ("lambda_B", rates.lambda_b),
        ("mu_B", rates.mu_b),
        ("M", rates.speedup),
    ];
    for (name, v) in checks {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
    }
    let r1 = match preset {
        Preset::ConstantArrivals => RateFunction::constant(rates.lambda_a),
        Preset::RegulatedArrivals => RateFunction::regulated(rates.lambda_a),
    };
    ModelParams::new(
        n,
        rates.lambda_b,
        rates.mu_b,
        r1,
        RateFunction::linear(rates.mu_a),
        RateFunction::linear(rates.speedup * rates.mu_a),
    )
}
