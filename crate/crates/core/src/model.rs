//! Parameters, coalbedo ramp, vector field and Jacobian of the two-layer model.
//!
//! ```text
//! γa Ta' = −λ(Ta − Ts) + εσ|Ts|³Ts − 2εσ|Ta|³Ta + q βa(Ta)
//! γs Ts' = −λ(Ts − Ta) −  σ|Ts|³Ts +  εσ|Ta|³Ta + q βs(Ts)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stefan–Boltzmann constant, W·m⁻²·K⁻⁴.
pub const SIGMA_B: f64 = 5.67e-8;

/// 2^{1/4}.
pub const FOURTH_ROOT_2: f64 = 1.189_207_115_002_721;

/// Signed quartic |t|³t.
#[inline]
pub fn quartic(t: f64) -> f64 {
    let t2 = t * t;
    t2 * t2 * t.signum()
}

/// Piecewise-linear coalbedo: flat below `t_minus` and above `t_plus`, linear in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoalbedoRamp {
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub t_minus: f64,
    pub t_plus: f64,
}

impl Default for CoalbedoRamp {
    fn default() -> Self {
        Self { beta_minus: 0.3, beta_plus: 0.7, t_minus: 250.0, t_plus: 280.0 }
    }
}

/// Slope of the ramp at a point. At a corner `left != right` and `kink` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSlope {
    pub left: f64,
    pub right: f64,
    pub kink: bool,
}

impl RampSlope {
    /// The slope where it is single-valued.
    pub fn value(&self) -> Option<f64> {
        (!self.kink).then_some(self.left)
    }
}

impl CoalbedoRamp {
    /// Slope on the open ramp, (β₊ − β₋)/(T₊ − T₋).
    pub fn ramp_slope(&self) -> f64 {
        (self.beta_plus - self.beta_minus) / (self.t_plus - self.t_minus)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t_minus {
            self.beta_minus
        } else if t >= self.t_plus {
            self.beta_plus
        } else {
            self.beta_minus + self.ramp_slope() * (t - self.t_minus)
        }
    }

    pub fn slope(&self, t: f64) -> RampSlope {
        let m = self.ramp_slope();
        if t == self.t_minus {
            RampSlope { left: 0.0, right: m, kink: true }
        } else if t == self.t_plus {
            RampSlope { left: m, right: 0.0, kink: true }
        } else if t > self.t_minus && t < self.t_plus {
            RampSlope { left: m, right: m, kink: false }
        } else {
            RampSlope { left: 0.0, right: 0.0, kink: false }
        }
    }

    /// The two corner temperatures.
    pub fn kinks(&self) -> [f64; 2] {
        [self.t_minus, self.t_plus]
    }

    fn validate(&self, name: &'static str, strictly_positive: bool) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParams { name, reason });
        let all = [self.beta_minus, self.beta_plus, self.t_minus, self.t_plus];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite entry".into());
        }
        if !(self.t_minus > 0.0 && self.t_plus > self.t_minus) {
            return bad(format!("need 0 < t_minus < t_plus, got {} and {}", self.t_minus, self.t_plus));
        }
        if self.beta_plus <= self.beta_minus {
            return bad(format!("need beta_minus < beta_plus, got {} and {}", self.beta_minus, self.beta_plus));
        }
        if strictly_positive && self.beta_minus <= 0.0 {
            return bad(format!("beta_minus must be > 0, got {}", self.beta_minus));
        }
        if !strictly_positive && self.beta_minus < 0.0 {
            return bad(format!("beta_minus must be >= 0, got {}", self.beta_minus));
        }
        Ok(())
    }
}

/// Evaluate a coalbedo ramp.
pub fn coalbedo_eval(ramp: &CoalbedoRamp, t: f64) -> f64 {
    ramp.eval(t)
}

/// One- or two-sided slope of a coalbedo ramp.
pub fn coalbedo_slope(ramp: &CoalbedoRamp, t: f64) -> RampSlope {
    ramp.slope(t)
}

/// Scenario parameters (SI units).
///
/// `Default` gives σ = 5.67e-8, ε = 0.62, ramp 0.3/0.7 on [250, 280] K and the
/// conventions γa = 1e7, γs = 2e8, q = 400, λ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub gamma_a: f64,
    pub gamma_s: f64,
    pub lambda: f64,
    pub epsilon_a: f64,
    pub sigma_b: f64,
    pub q: f64,
    pub coalbedo_s: CoalbedoRamp,
    pub coalbedo_a: Option<CoalbedoRamp>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma_a: 1.0e7,
            gamma_s: 2.0e8,
            lambda: 0.0,
            epsilon_a: 0.62,
            sigma_b: SIGMA_B,
            q: 400.0,
            coalbedo_s: CoalbedoRamp::default(),
            coalbedo_a: None,
        }
    }
}

impl ModelParams {
    pub fn with_epsilon(mut self, epsilon_a: f64) -> Self {
        self.epsilon_a = epsilon_a;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_a", self.gamma_a),
            ("gamma_s", self.gamma_s),
            ("sigma_b", self.sigma_b),
            ("q", self.q),
            ("epsilon_a", self.epsilon_a),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams { name, reason: format!("must be finite and > 0, got {v}") });
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParams {
                name: "lambda",
                reason: format!("must be finite and >= 0, got {}", self.lambda),
            });
        }
        self.coalbedo_s.validate("coalbedo_s", true)?;
        if let Some(ra) = &self.coalbedo_a {
            ra.validate("coalbedo_a", false)?;
        }
        Ok(())
    }

    /// Absorbed surface shortwave q βs(t).
    pub fn r_s(&self, t: f64) -> f64 {
        self.q * self.coalbedo_s.eval(t)
    }

    /// Absorbed atmospheric shortwave q βa(t), zero when βa is absent.
    pub fn r_a(&self, t: f64) -> f64 {
        self.coalbedo_a.map_or(0.0, |r| self.q * r.eval(t))
    }

    /// Require βa absent, as assumed by the equilibrium reduction.
    pub(crate) fn require_no_atmospheric_coalbedo(&self) -> Result<()> {
        match self.coalbedo_a {
            None => Ok(()),
            Some(_) => Err(Error::AtmosphericCoalbedoUnsupported),
        }
    }

    /// Require ε ∈ (0, 2).
    pub(crate) fn require_subcritical(&self) -> Result<()> {
        if self.epsilon_a > 0.0 && self.epsilon_a < 2.0 {
            Ok(())
        } else {
            Err(Error::EpsilonOutOfRange { epsilon_a: self.epsilon_a, range: "(0, 2)" })
        }
    }
}

/// Atmosphere and surface temperatures, K.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub t_a: f64,
    pub t_s: f64,
}

impl State {
    pub const fn new(t_a: f64, t_s: f64) -> Self {
        Self { t_a, t_s }
    }

    pub fn is_finite(&self) -> bool {
        self.t_a.is_finite() && self.t_s.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.t_a.abs().max(self.t_s.abs())
    }

    /// Max-norm distance.
    pub fn dist(&self, other: &State) -> f64 {
        (self.t_a - other.t_a).abs().max((self.t_s - other.t_s).abs())
    }
}

/// Rates (dTa/dt, dTs/dt), K·s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub d_ta: f64,
    pub d_ts: f64,
}

impl Rates {
    pub fn norm(&self) -> f64 {
        self.d_ta.abs().max(self.d_ts.abs())
    }
}

/// Eigenvalues of a real 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eigenvalues {
    /// Real pair, ascending.
    Real {
        l1: f64,
        l2: f64,
    },
    Complex {
        re: f64,
        im: f64,
    },
}

impl Eigenvalues {
    pub fn max_real_part(&self) -> f64 {
        match *self {
            Eigenvalues::Real { l2, .. } => l2,
            Eigenvalues::Complex { re, .. } => re,
        }
    }
}

/// Jacobian of the vector field, entries in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Jacobian2 {
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn determinant(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn eigenvalues(&self) -> Eigenvalues {
        let tr = self.trace();
        let half = 0.5 * (self.a11 - self.a22);
        // discriminant written to avoid cancellation of tr² − 4 det
        let disc = half * half + self.a12 * self.a21;
        if disc >= 0.0 {
            let r = disc.sqrt();
            let mid = 0.5 * tr;
            // larger-magnitude root first, the other from det / root
            let big = if mid >= 0.0 { mid + r } else { mid - r };
            let small = if big != 0.0 { self.determinant() / big } else { mid - r };
            let (l1, l2) = if big < small { (big, small) } else { (small, big) };
            Eigenvalues::Real { l1, l2 }
        } else {
            Eigenvalues::Complex { re: 0.5 * tr, im: (-disc).sqrt() }
        }
    }
}

/// Vector field F(s), K·s⁻¹.
pub fn vector_field(p: &ModelParams, s: State) -> Rates {
    let (ta, ts) = (s.t_a, s.t_s);
    let (qa, qs) = (quartic(ta), quartic(ts));
    let es = p.epsilon_a * p.sigma_b;
    let fa = -p.lambda * (ta - ts) + es * qs - 2.0 * es * qa + p.r_a(ta);
    let fs = -p.lambda * (ts - ta) - p.sigma_b * qs + es * qa + p.r_s(ts);
    Rates { d_ta: fa / p.gamma_a, d_ts: fs / p.gamma_s }
}

/// Jacobian of F. Fails at a surface coalbedo kink.
///
/// An atmospheric ramp adds q βa′(Ta) to `a11`, where βa′ is taken from the right at its corners.
pub fn jacobian(p: &ModelParams, s: State) -> Result<Jacobian2> {
    let slope = p.coalbedo_s.slope(s.t_s);
    if slope.kink {
        return Err(Error::KinkPoint { t_s: s.t_s });
    }
    let (ta, ts) = (s.t_a, s.t_s);
    let ta3 = ta.abs().powi(3);
    let ts3 = ts.abs().powi(3);
    let es = p.epsilon_a * p.sigma_b;
    let ra_prime = p.coalbedo_a.map_or(0.0, |r| p.q * r.slope(ta).right);
    Ok(Jacobian2 {
        a11: (-p.lambda - 8.0 * es * ta3 + ra_prime) / p.gamma_a,
        a12: (p.lambda + 4.0 * es * ts3) / p.gamma_a,
        a21: (p.lambda + 4.0 * es * ta3) / p.gamma_s,
        a22: (-p.lambda - 4.0 * p.sigma_b * ts3 + p.q * slope.left) / p.gamma_s,
    })
}
