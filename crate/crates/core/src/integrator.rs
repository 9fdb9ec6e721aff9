//! Adaptive Dormand–Prince 5(4) integration with convergence, blow-up and kink handling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{jacobian, quartic, vector_field, Eigenvalues, ModelParams, Rates, State, FOURTH_ROOT_2};

/// Seconds in a Julian year.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    /// Relative local error tolerance.
    pub rel_tol: f64,
    /// Absolute local error tolerance, K.
    pub abs_tol: f64,
    /// Horizon, s.
    pub t_max: f64,
    /// Convergence threshold on the max-norm of F, K·s⁻¹.
    pub field_tol: f64,
    /// Convergence threshold on displacement over the trailing window, K.
    pub displacement_tol: f64,
    /// Number of accepted steps in the displacement window.
    pub window: usize,
    /// Blow-up threshold on max(|Ta|, |Ts|), K.
    pub blowup_threshold: f64,
    /// Cap on attempted steps.
    pub max_steps: usize,
    /// Largest allowed overshoot past a coalbedo corner in one step, K.
    pub kink_tol: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-9,
            t_max: 1e4 * SECONDS_PER_YEAR,
            field_tol: 1e-13,
            displacement_tol: 1e-5,
            window: 10,
            blowup_threshold: 1e6,
            max_steps: 2_000_000,
            kink_tol: 1e-6,
        }
    }
}

impl IntegrationOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("t_max", self.t_max),
            ("field_tol", self.field_tol),
            ("displacement_tol", self.displacement_tol),
            ("blowup_threshold", self.blowup_threshold),
            ("kink_tol", self.kink_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidOptions { name, reason: format!("must be finite and > 0, got {v}") });
            }
        }
        if self.window == 0 {
            return Err(Error::InvalidOptions { name: "window", reason: "must be >= 1".into() });
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidOptions { name: "max_steps", reason: "must be >= 1".into() });
        }
        Ok(())
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Termination {
    Converged {
        state: State,
    },
    /// `time` and `state` are the last accepted step. `non_finite` marks a NaN/inf stop.
    BlowUp {
        time: f64,
        state: State,
        non_finite: bool,
    },
    HorizonReached,
    StepLimit,
    /// Stopped by an observer.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> Sample {
        *self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn converged_state(&self) -> Option<State> {
        match self.termination {
            Termination::Converged { state } => Some(state),
            _ => None,
        }
    }
}

/// Observer decision after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

// Dormand–Prince 5(4) tableau (autonomous field, so the nodes c_i are not needed).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(s: State, terms: &[(f64, Rates)], h: f64) -> State {
    let mut a = s.t_a;
    let mut b = s.t_s;
    for (c, k) in terms {
        a += h * c * k.d_ta;
        b += h * c * k.d_ts;
    }
    State::new(a, b)
}

fn error_norm(y0: State, y1: State, err: (f64, f64), o: &IntegrationOptions) -> f64 {
    let sa = o.abs_tol + o.rel_tol * y0.t_a.abs().max(y1.t_a.abs());
    let ss = o.abs_tol + o.rel_tol * y0.t_s.abs().max(y1.t_s.abs());
    (0.5 * ((err.0 / sa).powi(2) + (err.1 / ss).powi(2))).sqrt()
}

fn initial_step(p: &ModelParams, s: State, f: Rates, o: &IntegrationOptions) -> f64 {
    let sa = o.abs_tol + o.rel_tol * s.t_a.abs();
    let ss = o.abs_tol + o.rel_tol * s.t_s.abs();
    let d0 = (0.5 * ((s.t_a / sa).powi(2) + (s.t_s / ss).powi(2))).sqrt();
    let d1 = (0.5 * ((f.d_ta / sa).powi(2) + (f.d_ts / ss).powi(2))).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(s, &[(1.0, f)], h0);
    let f1 = vector_field(p, y1);
    let d2 = (0.5 * (((f1.d_ta - f.d_ta) / sa).powi(2) + ((f1.d_ts - f.d_ts) / ss).powi(2))).sqrt() / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
    (100.0 * h0).min(h1).min(o.t_max)
}

/// Largest |hλ| allowed on the fast mode; the real stability interval of the pair ends near −3.3.
const STABILITY_CAP: f64 = 2.0;

fn spectral_radius(p: &ModelParams, s: State) -> Option<f64> {
    let j = jacobian(p, s).ok()?;
    let r = match j.eigenvalues() {
        Eigenvalues::Real { l1, l2 } => l1.abs().max(l2.abs()),
        Eigenvalues::Complex { re, im } => re.hypot(im),
    };
    (r > 0.0 && r.is_finite()).then_some(r)
}

/// A slow passage by a saddle looks stationary; it is not convergence.
fn near_saddle(p: &ModelParams, s: State) -> bool {
    jacobian(p, s).map_or(false, |j| j.determinant() < 0.0)
}

/// Overshoot past a ramp corner crossed between `a` and `b`, with the corner.
fn kink_crossing(p: &ModelParams, a: f64, b: f64) -> Option<(f64, f64)> {
    let mut corners = p.coalbedo_s.kinks().to_vec();
    if let Some(r) = p.coalbedo_a {
        corners.extend(r.kinks());
    }
    corners
        .into_iter()
        .filter(|&k| (a < k && b > k) || (a > k && b < k))
        .map(|k| (k, (b - k).abs()))
        .max_by(|x, y| x.1.total_cmp(&y.1))
}

/// Integrate from `s0`, calling `observer` after every accepted step (and once at `t = 0`).
pub fn integrate_observed<O>(p: &ModelParams, s0: State, opts: &IntegrationOptions, observer: O) -> Result<Termination>
where
    O: FnMut(f64, State) -> Control,
{
    run(p, s0, opts, observer, &mut 0)
}

fn run<O>(
    p: &ModelParams,
    s0: State,
    opts: &IntegrationOptions,
    mut observer: O,
    rejected: &mut usize,
) -> Result<Termination>
where
    O: FnMut(f64, State) -> Control,
{
    opts.validate()?;
    if !s0.is_finite() {
        return Err(Error::InvalidOptions { name: "s0", reason: "initial state must be finite".into() });
    }
    let mut t = 0.0;
    let mut y = s0;
    let mut f = vector_field(p, y);
    if observer(t, y) == Control::Stop {
        return Ok(Termination::Stopped);
    }
    if f.norm() <= opts.field_tol {
        return Ok(Termination::Converged { state: y });
    }
    let mut h = initial_step(p, y, f, opts);
    let mut err_prev: f64 = 1e-4;
    let mut window: VecDeque<State> = VecDeque::with_capacity(opts.window + 1);
    window.push_back(y);
    let h_min = 1e-12;

    for _ in 0..opts.max_steps {
        if t >= opts.t_max {
            return Ok(Termination::HorizonReached);
        }
        h = h.min(opts.t_max - t);
        let k1 = f;
        let k2 = vector_field(p, axpy(y, &[(A21, k1)], h));
        let k3 = vector_field(p, axpy(y, &[(A31, k1), (A32, k2)], h));
        let k4 = vector_field(p, axpy(y, &[(A41, k1), (A42, k2), (A43, k3)], h));
        let k5 = vector_field(p, axpy(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], h));
        let k6 = vector_field(p, axpy(y, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], h));
        let y_new = axpy(y, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)], h);

        if !y_new.is_finite() {
            if h > h_min {
                h *= 0.1;
                *rejected += 1;
                continue;
            }
            return Ok(Termination::BlowUp { time: t, state: y, non_finite: true });
        }
        let k7 = vector_field(p, y_new);
        let err = (
            h * (E1 * k1.d_ta + E3 * k3.d_ta + E4 * k4.d_ta + E5 * k5.d_ta + E6 * k6.d_ta + E7 * k7.d_ta),
            h * (E1 * k1.d_ts + E3 * k3.d_ts + E4 * k4.d_ts + E5 * k5.d_ts + E6 * k6.d_ts + E7 * k7.d_ts),
        );
        let en = error_norm(y, y_new, err, opts);
        if !en.is_finite() || en > 1.0 {
            let fac = if en.is_finite() { (0.9 * en.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            *rejected += 1;
            if h < h_min {
                return Ok(Termination::StepLimit);
            }
            continue;
        }
        // reject steps that jump over a ramp corner by more than kink_tol
        let crossing = kink_crossing(p, y.t_s, y_new.t_s)
            .or_else(|| p.coalbedo_a.and_then(|_| kink_crossing(p, y.t_a, y_new.t_a)));
        if let Some((corner, over)) = crossing {
            if over > opts.kink_tol && h > h_min {
                let (a, b) =
                    if kink_crossing(p, y.t_s, y_new.t_s).is_some() { (y.t_s, y_new.t_s) } else { (y.t_a, y_new.t_a) };
                let frac = ((corner - a).abs() + 0.5 * opts.kink_tol) / (b - a).abs();
                h *= frac.clamp(1e-3, 0.99);
                *rejected += 1;
                continue;
            }
        }

        t += h;
        y = y_new;
        f = k7;
        let fac = 0.9 * en.max(1e-10).powf(-0.17) * err_prev.powf(0.04);
        err_prev = en.max(1e-4);
        h *= fac.clamp(0.2, 10.0);
        // near a stable equilibrium the error estimate stops limiting h, and the controller can
        // settle where the stability function is +1 on the fast mode, freezing an offset
        if let Some(rho) = spectral_radius(p, y) {
            h = h.min(STABILITY_CAP / rho);
        }

        if y.max_abs() >= opts.blowup_threshold {
            observer(t, y);
            return Ok(Termination::BlowUp { time: t, state: y, non_finite: false });
        }
        if observer(t, y) == Control::Stop {
            return Ok(Termination::Stopped);
        }
        window.push_back(y);
        if window.len() > opts.window + 1 {
            window.pop_front();
        }
        if f.norm() <= opts.field_tol
            && window.len() == opts.window + 1
            && window.front().map_or(false, |w| w.dist(&y) <= opts.displacement_tol)
            && !near_saddle(p, y)
        {
            return Ok(Termination::Converged { state: y });
        }
        if t >= opts.t_max {
            return Ok(Termination::HorizonReached);
        }
    }
    Ok(Termination::StepLimit)
}

/// Integrate from `s0` and keep every accepted step.
pub fn integrate(p: &ModelParams, s0: State, opts: &IntegrationOptions) -> Result<Trajectory> {
    let mut samples = Vec::new();
    let mut rejected_steps = 0;
    let observer = |t, state| {
        samples.push(Sample { t, state });
        Control::Continue
    };
    let termination = run(p, s0, opts, observer, &mut rejected_steps)?;
    let accepted_steps = samples.len().saturating_sub(1);
    Ok(Trajectory { samples, termination, accepted_steps, rejected_steps })
}

/// The invariant rectangle [0, Ma] × [0, μ Ma].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub mu: f64,
    pub m_a: f64,
}

impl Rectangle {
    pub fn m_s(&self) -> f64 {
        self.mu * self.m_a
    }

    pub fn contains(&self, s: State, tol: f64) -> bool {
        s.t_a >= -tol && s.t_s >= -tol && s.t_a <= self.m_a + tol && s.t_s <= self.m_s() + tol
    }
}

/// Rectangle on whose right and top edges the field points inward, containing `s0`.
pub fn invariant_rectangle(p: &ModelParams, s0: State) -> Result<Rectangle> {
    if !(p.epsilon_a > 0.0 && p.epsilon_a < 2.0) {
        return Err(Error::EpsilonOutOfRange { epsilon_a: p.epsilon_a, range: "(0, 2)" });
    }
    if s0.t_a < 0.0 || s0.t_s < 0.0 {
        return Err(Error::NegativeInput { name: "s0", value: s0.t_a.min(s0.t_s) });
    }
    let mu = 0.5 * (p.epsilon_a.powf(0.25) + FOURTH_ROOT_2);
    let es = p.epsilon_a * p.sigma_b;
    // By cooperativity the worst point of each edge is the corner (Ma, μMa).
    let inward = |ma: f64| {
        let ms = mu * ma;
        let right = es * (quartic(ms) - 2.0 * quartic(ma)) - p.lambda * (ma - ms) + p.r_a(ma);
        let top = p.sigma_b * (p.epsilon_a * quartic(ma) - quartic(ms)) - p.lambda * (ms - ma) + p.r_s(ms);
        right < 0.0 && top < 0.0
    };
    let mut m_a = s0.t_a.max(s0.t_s / mu).max(1.0);
    for _ in 0..200 {
        if inward(m_a) {
            return Ok(Rectangle { mu, m_a });
        }
        m_a *= 2.0;
    }
    Err(Error::NonConvergent("invariant rectangle search".into()))
}

/// Monotone direction of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Nondecreasing,
    Nonincreasing,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTail {
    pub switch_index: usize,
    pub switch_time: f64,
    pub t_a: Direction,
    pub t_s: Direction,
}

fn tail_start(values: &[f64], tol: f64) -> (usize, Direction) {
    let mut dir = 0.0;
    for i in (1..values.len()).rev() {
        let d = values[i] - values[i - 1];
        if d.abs() <= tol {
            continue;
        }
        if dir == 0.0 {
            dir = d.signum();
        } else if d.signum() != dir {
            return (i, if dir > 0.0 { Direction::Nondecreasing } else { Direction::Nonincreasing });
        }
    }
    let direction = match dir {
        d if d > 0.0 => Direction::Nondecreasing,
        d if d < 0.0 => Direction::Nonincreasing,
        _ => Direction::Constant,
    };
    (0, direction)
}

/// Earliest sample after which both components are monotone up to `tol`.
pub fn detect_monotone_tail(traj: &Trajectory, tol: f64) -> Result<MonotoneTail> {
    if traj.converged_state().is_none() {
        return Err(Error::NotConverged);
    }
    let ta: Vec<f64> = traj.samples.iter().map(|s| s.state.t_a).collect();
    let ts: Vec<f64> = traj.samples.iter().map(|s| s.state.t_s).collect();
    let (ia, da) = tail_start(&ta, tol);
    let (is, ds) = tail_start(&ts, tol);
    let switch_index = ia.max(is);
    Ok(MonotoneTail { switch_index, switch_time: traj.samples[switch_index].t, t_a: da, t_s: ds })
}
