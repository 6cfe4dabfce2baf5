//! Interval-valued quantities and their pointwise realization.
//!
//! Every model rate can be given as a closed interval `[lower, upper]`
//! instead of a single number. A realization picks one representative per
//! interval through the log-linear map `lower^(1-k) * upper^k` driven by a
//! single exponent `k` shared by all parameters, so `k = 0` selects every
//! lower endpoint, `k = 1` every upper endpoint, and `k = 0.5` the geometric
//! midpoint of each interval.

use crate::error::{Error, Result};

/// A closed real interval `[lower, upper]` with `lower <= upper`.
///
/// Degenerate intervals (`lower == upper`) are allowed and model exactly
/// known quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalNumber {
    lower: f64,
    upper: f64,
}

impl IntervalNumber {
    /// Creates an interval, rejecting non-finite or inverted endpoints.
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::domain(format!(
                "interval endpoints must be finite, got [{lower}, {upper}]"
            )));
        }
        if lower > upper {
            return Err(Error::domain(format!(
                "interval lower endpoint {lower} exceeds upper endpoint {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Creates the degenerate interval `[value, value]`.
    pub fn degenerate(value: f64) -> Result<Self> {
        Self::new(value, value)
    }

    /// Lower endpoint.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Upper endpoint.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Interval width `upper - lower`.
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Whether `x` lies in the closed interval.
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Log-linear representative `lower^(1-k) * upper^k` for `k` in `[0, 1]`.
    ///
    /// The endpoints and the degenerate case are returned exactly: `k = 0`
    /// yields `lower`, `k = 1` yields `upper`, and `[c, c]` yields `c` for
    /// every `k` (even `c = 0`, so switched-off rates stay representable).
    /// Interior exponents on a genuine interval require a strictly positive
    /// lower endpoint.
    pub fn realize(&self, k: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::domain(format!(
                "realization exponent k must lie in [0, 1], got {k}"
            )));
        }
        if self.lower == self.upper || k == 0.0 {
            return Ok(self.lower);
        }
        if k == 1.0 {
            return Ok(self.upper);
        }
        if self.lower <= 0.0 {
            return Err(Error::domain(format!(
                "realization requires a positive lower endpoint, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(self.lower.powf(1.0 - k) * self.upper.powf(k))
    }

    /// Interval quotient; fails when the divisor straddles or touches zero.
    pub fn checked_div(self, rhs: Self) -> Result<Self> {
        if rhs.lower <= 0.0 && rhs.upper >= 0.0 {
            return Err(Error::domain(format!(
                "division by an interval containing zero: [{}, {}]",
                rhs.lower, rhs.upper
            )));
        }
        let inv = Self {
            lower: 1.0 / rhs.upper,
            upper: 1.0 / rhs.lower,
        };
        Ok(self * inv)
    }
}

impl std::fmt::Display for IntervalNumber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

impl std::ops::Add for IntervalNumber {
    type Output = IntervalNumber;

    fn add(self, rhs: Self) -> Self {
        Self {
            lower: self.lower + rhs.lower,
            upper: self.upper + rhs.upper,
        }
    }
}

impl std::ops::Sub for IntervalNumber {
    type Output = IntervalNumber;

    fn sub(self, rhs: Self) -> Self {
        Self {
            lower: self.lower - rhs.upper,
            upper: self.upper - rhs.lower,
        }
    }
}

impl std::ops::Mul for IntervalNumber {
    type Output = IntervalNumber;

    fn mul(self, rhs: Self) -> Self {
        let products = [
            self.lower * rhs.lower,
            self.lower * rhs.upper,
            self.upper * rhs.lower,
            self.upper * rhs.upper,
        ];
        Self {
            lower: products.iter().copied().fold(f64::INFINITY, f64::min),
            upper: products.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// The full set of model rates, each given as an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpreciseParameterSet {
    /// Recruitment rate into the susceptible class.
    pub lambda: IntervalNumber,
    /// Effective contact (transmission) rate.
    pub beta: IntervalNumber,
    /// Natural death rate.
    pub mu: IntervalNumber,
    /// Relative infectiousness of the chronic class.
    pub eta_c: IntervalNumber,
    /// Relative infectiousness of the AIDS class.
    pub eta_a: IntervalNumber,
    /// Default treatment rate from infected to chronic.
    pub phi: IntervalNumber,
    /// Progression rate from infected to AIDS.
    pub e: IntervalNumber,
    /// Treatment rate from AIDS back to infected.
    pub alpha: IntervalNumber,
    /// Relapse rate from chronic back to infected.
    pub omega: IntervalNumber,
    /// AIDS-induced death rate.
    pub d: IntervalNumber,
    /// Intensity of the multiplicative transmission noise.
    pub delta: IntervalNumber,
    /// Effectiveness scale of the control-driven treatment.
    pub m: IntervalNumber,
    /// Saturation coefficient of the control-driven treatment.
    pub gamma: IntervalNumber,
}

/// One realized (scalar) set of model rates.
///
/// Derived aggregate rates are exposed as methods so they are always
/// consistent with the constituent fields:
/// [`eps1`](Self::eps1)` = alpha + mu + d`,
/// [`eps2`](Self::eps2)` = omega + mu`,
/// [`eps3`](Self::eps3)` = e + phi + mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    /// Recruitment rate into the susceptible class.
    pub lambda: f64,
    /// Effective contact (transmission) rate.
    pub beta: f64,
    /// Natural death rate.
    pub mu: f64,
    /// Relative infectiousness of the chronic class.
    pub eta_c: f64,
    /// Relative infectiousness of the AIDS class.
    pub eta_a: f64,
    /// Default treatment rate from infected to chronic.
    pub phi: f64,
    /// Progression rate from infected to AIDS.
    pub e: f64,
    /// Treatment rate from AIDS back to infected.
    pub alpha: f64,
    /// Relapse rate from chronic back to infected.
    pub omega: f64,
    /// AIDS-induced death rate.
    pub d: f64,
    /// Intensity of the multiplicative transmission noise.
    pub delta: f64,
    /// Effectiveness scale of the control-driven treatment.
    pub m: f64,
    /// Saturation coefficient of the control-driven treatment.
    pub gamma: f64,
}

impl ParameterSet {
    /// Total exit rate from the AIDS class: `alpha + mu + d`.
    pub fn eps1(&self) -> f64 {
        self.alpha + self.mu + self.d
    }

    /// Total exit rate from the chronic class: `omega + mu`.
    pub fn eps2(&self) -> f64 {
        self.omega + self.mu
    }

    /// Total exit rate from the infected class: `e + phi + mu`.
    pub fn eps3(&self) -> f64 {
        self.e + self.phi + self.mu
    }

    /// Checks that every rate is finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.named_rates() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::domain(format!(
                    "rate {name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        Ok(())
    }

    fn named_rates(&self) -> [(&'static str, f64); 13] {
        [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("mu", self.mu),
            ("eta_c", self.eta_c),
            ("eta_a", self.eta_a),
            ("phi", self.phi),
            ("e", self.e),
            ("alpha", self.alpha),
            ("omega", self.omega),
            ("d", self.d),
            ("delta", self.delta),
            ("m", self.m),
            ("gamma", self.gamma),
        ]
    }
}

/// Realizes every interval rate with the same exponent `k`.
///
/// The aggregate rates `eps1..eps3` of the result are derived from the
/// realized constituents (via the [`ParameterSet`] accessors), not realized
/// from intervals of their own.
pub fn realize_set(params: &ImpreciseParameterSet, k: f64) -> Result<ParameterSet> {
    Ok(ParameterSet {
        lambda: params.lambda.realize(k)?,
        beta: params.beta.realize(k)?,
        mu: params.mu.realize(k)?,
        eta_c: params.eta_c.realize(k)?,
        eta_a: params.eta_a.realize(k)?,
        phi: params.phi.realize(k)?,
        e: params.e.realize(k)?,
        alpha: params.alpha.realize(k)?,
        omega: params.omega.realize(k)?,
        d: params.d.realize(k)?,
        delta: params.delta.realize(k)?,
        m: params.m.realize(k)?,
        gamma: params.gamma.realize(k)?,
    })
}
