//! Convexity diagnostics of Φ through ρ = Ta⁽¹⁾/Ts, and finite-time blow-up certificates for ε > 2.
//!
//! ```text
//! L(x)  = (2x⁴ − 1)/(1 − x),        ρ(Ts) = L⁻¹(K/Ts³),  K = λ/(εσ)
//! N(ρ)  = 1 − (3/2)[24ρ²(2ρ⁴−1)(1−ρ)²/(8ρ³−6ρ⁴−1)² + 2(2ρ⁴−1)/(8ρ³−6ρ⁴−1)]
//! N*(ρ) = −N(ρ)/(8ρ³−6ρ⁴−1) + 4(1/ε − 1/2)/(2ρ⁴−1)²
//! Φ″    = (3λ/K^{1/3}) (1−ρ)^{2/3} (2ρ⁴−1)^{4/3} N*(ρ)
//! ```

use serde::{Deserialize, Serialize};

use crate::equilibria::solve_ta1;
use crate::error::{Error, Result};
use crate::integrator::{integrate_observed, Control, IntegrationOptions, Termination};
use crate::model::{quartic, vector_field, ModelParams, State, FOURTH_ROOT_2};
use crate::roots::bisect;

/// 2^{-1/4}.
pub const RHO_MIN: f64 = 0.840_896_415_253_714_5;

/// Width of the guard band at the ends of (2^{-1/4}, 1).
pub const ENDPOINT_GUARD: f64 = 1e-9;

const U_MAX: f64 = 1.0 - RHO_MIN;

fn l_of_u(u: f64) -> f64 {
    let x = 1.0 - u;
    (2.0 * x.powi(4) - 1.0) / u
}

/// L(x) = (2x⁴ − 1)/(1 − x) on [2^{-1/4}, 1).
pub fn l_eval(x: f64) -> Result<f64> {
    if !(x >= RHO_MIN && x < 1.0) {
        return Err(Error::DomainError { value: x, domain: "[2^(-1/4), 1)" });
    }
    Ok((2.0 * x.powi(4) - 1.0) / (1.0 - x))
}

/// 1 − L⁻¹(y), solved in the complement for full relative precision near 1.
fn l_inverse_u(y: f64) -> f64 {
    if y == 0.0 {
        return U_MAX;
    }
    // L is decreasing in u; bracket (0, U_MAX]
    let mut lo = U_MAX;
    while l_of_u(lo * 0.5) < y && lo > f64::MIN_POSITIVE {
        lo *= 0.5;
    }
    let lo = lo * 0.5;
    bisect(|u| l_of_u(u) - y, lo, U_MAX, 0.0)
}

/// L⁻¹(y) ∈ [2^{-1/4}, 1) for y ≥ 0.
pub fn l_inverse(y: f64) -> Result<f64> {
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::DomainError { value: y, domain: "[0, inf)" });
    }
    Ok(1.0 - l_inverse_u(y))
}

fn k_ph(p: &ModelParams) -> f64 {
    p.lambda / (p.epsilon_a * p.sigma_b)
}

/// (ρ, 1 − ρ) at a surface temperature.
fn rho_pair(p: &ModelParams, t_s: f64) -> Result<(f64, f64)> {
    if p.lambda == 0.0 {
        return Err(Error::LambdaZero);
    }
    if !(t_s > 0.0 && t_s.is_finite()) {
        return Err(Error::DomainError { value: t_s, domain: "(0, inf)" });
    }
    let u = l_inverse_u(k_ph(p) / t_s.powi(3));
    Ok((1.0 - u, u))
}

/// ρ(Ts) = Ta⁽¹⁾(Ts)/Ts for λ > 0.
pub fn rho_of_ts(p: &ModelParams, t_s: f64) -> Result<f64> {
    rho_pair(p, t_s).map(|r| r.0)
}

/// Relative gap between ρ(Ts)·Ts and the direct Ta⁽¹⁾ solve.
pub fn rho_consistency(p: &ModelParams, t_s: f64) -> Result<f64> {
    let rho = rho_of_ts(p, t_s)?;
    let ta = solve_ta1(p, t_s)?;
    Ok((rho * t_s - ta).abs() / ta)
}

fn n_with(rho: f64, one_minus: f64) -> f64 {
    let d = 8.0 * rho.powi(3) - 6.0 * rho.powi(4) - 1.0;
    let e = 2.0 * rho.powi(4) - 1.0;
    1.0 - 1.5 * (24.0 * rho * rho * e * one_minus * one_minus / (d * d) + 2.0 * e / d)
}

fn n_star_with(epsilon_a: f64, rho: f64, one_minus: f64) -> f64 {
    let d = 8.0 * rho.powi(3) - 6.0 * rho.powi(4) - 1.0;
    let e = 2.0 * rho.powi(4) - 1.0;
    -n_with(rho, one_minus) / d + 4.0 * (1.0 / epsilon_a - 0.5) / (e * e)
}

/// N(ρ) on the closed interval [2^{-1/4}, 1].
pub fn n_eval(rho: f64) -> Result<f64> {
    if !(rho >= RHO_MIN - 1e-15 && rho <= 1.0) {
        return Err(Error::DomainError { value: rho, domain: "[2^(-1/4), 1]" });
    }
    Ok(n_with(rho, 1.0 - rho))
}

/// N*(ρ; ε), refused within [`ENDPOINT_GUARD`] of either end of (2^{-1/4}, 1).
pub fn n_star_eval(epsilon_a: f64, rho: f64) -> Result<f64> {
    if !(rho > RHO_MIN + ENDPOINT_GUARD && rho < 1.0 - ENDPOINT_GUARD) {
        return Err(Error::DomainError { value: rho, domain: "(2^(-1/4) + 1e-9, 1 - 1e-9)" });
    }
    if !(epsilon_a > 0.0) {
        return Err(Error::EpsilonOutOfRange { epsilon_a, range: "(0, inf)" });
    }
    Ok(n_star_with(epsilon_a, rho, 1.0 - rho))
}

/// Φ″(Ts) from the closed form; 12σ(1 − ε/2)Ts² when λ = 0.
pub fn phi_second_closed(p: &ModelParams, t_s: f64) -> Result<f64> {
    if p.lambda == 0.0 {
        return Ok(12.0 * p.sigma_b * (1.0 - 0.5 * p.epsilon_a) * t_s * t_s);
    }
    let (rho, u) = rho_pair(p, t_s)?;
    if rho <= RHO_MIN + ENDPOINT_GUARD {
        return Err(Error::DomainError { value: rho, domain: "rho above 2^(-1/4) + 1e-9" });
    }
    let e = 2.0 * rho.powi(4) - 1.0;
    let pref = 3.0 * p.lambda / k_ph(p).cbrt() * u.powf(2.0 / 3.0) * e.powf(4.0 / 3.0);
    Ok(pref * n_star_with(p.epsilon_a, rho, u))
}

/// Evenly spaced ρ samples strictly inside the guarded interval (two guard widths in, clear of rounding).
pub fn rho_grid(n: usize) -> Vec<f64> {
    let a = RHO_MIN + 2.0 * ENDPOINT_GUARD;
    let b = 1.0 - 2.0 * ENDPOINT_GUARD;
    let n = n.max(2);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Precomputed pieces of N* on a ρ grid: N*(ρ; ε) = −a(ρ) + b(ρ)·4(1/ε − 1/2).
struct NStarTable {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl NStarTable {
    fn new(grid: &[f64]) -> Self {
        let a = grid.iter().map(|&r| n_with(r, 1.0 - r) / (8.0 * r.powi(3) - 6.0 * r.powi(4) - 1.0)).collect();
        let b = grid.iter().map(|&r| (2.0 * r.powi(4) - 1.0).powi(-2)).collect();
        Self { a, b }
    }

    fn values(&self, eps: f64) -> impl Iterator<Item = f64> + '_ {
        let c = 4.0 * (1.0 / eps - 0.5);
        self.a.iter().zip(&self.b).map(move |(a, b)| -a + b * c)
    }

    fn min(&self, eps: f64) -> f64 {
        self.values(eps).fold(f64::INFINITY, f64::min)
    }

    fn sign_changes(&self, eps: f64) -> usize {
        let v: Vec<f64> = self.values(eps).collect();
        v.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count()
    }
}

/// Grid size used by the ε_{a,0} search.
pub const EPSILON_A0_GRID: usize = 100_000;

/// Bracket (lo, hi) of width ≤ `tol` around the ε where min N* first turns negative.
pub fn bracket_epsilon_a0(tol: f64) -> Result<(f64, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidOptions { name: "tol", reason: format!("must be > 0, got {tol}") });
    }
    let table = NStarTable::new(&rho_grid(EPSILON_A0_GRID));
    let negative = |e: f64| table.min(e) < 0.0;
    let (mut lo, mut hi) = (1.9, 2.0);
    if negative(lo) || !negative(hi) {
        return Err(Error::NonConvergent("min N* does not change sign on (1.9, 2.0)".into()));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if negative(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Number of sign changes of N*(·; ε) over a grid of `n` points.
pub fn n_star_sign_changes(epsilon_a: f64, n: usize) -> usize {
    NStarTable::new(&rho_grid(n)).sign_changes(epsilon_a)
}

/// Minimum of N*(·; ε) over a grid of `n` points.
pub fn n_star_min(epsilon_a: f64, n: usize) -> f64 {
    NStarTable::new(&rho_grid(n)).min(epsilon_a)
}

/// The root ρ₀ of N in (2^{-1/4}, 1).
pub fn n_root() -> f64 {
    bisect(|r| n_with(r, 1.0 - r), RHO_MIN, 1.0, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub epsilon_a: f64,
    pub rho: Vec<f64>,
    pub n: Vec<f64>,
    pub n_star: Vec<f64>,
    pub n_star_min: f64,
    pub n_star_argmin: f64,
    pub n_star_sign_changes: usize,
    pub n_at_lower_end: f64,
    pub rho0: f64,
    pub epsilon_a0_bracket: (f64, f64),
    pub tol: f64,
}

/// N and N* sampled at `samples` points for one ε, plus ρ₀ and the ε_{a,0} bracket.
pub fn convexity_report(epsilon_a: f64, tol: f64, samples: usize) -> Result<ConvexityReport> {
    let rho = rho_grid(samples);
    let n: Vec<f64> = rho.iter().map(|&r| n_with(r, 1.0 - r)).collect();
    let n_star: Vec<f64> = rho.iter().map(|&r| n_star_eval(epsilon_a, r)).collect::<Result<_>>()?;
    let (k, &m) = n_star.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    Ok(ConvexityReport {
        epsilon_a,
        n_star_min: m,
        n_star_argmin: rho[k],
        n_star_sign_changes: n_star.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count(),
        rho,
        n,
        n_star,
        n_at_lower_end: n_eval(RHO_MIN)?,
        rho0: n_root(),
        epsilon_a0_bracket: bracket_epsilon_a0(tol)?,
        tol,
    })
}

fn require_supercritical(p: &ModelParams) -> Result<()> {
    if p.epsilon_a > 2.0 {
        Ok(())
    } else {
        Err(Error::EpsilonNotSupercritical { epsilon_a: p.epsilon_a })
    }
}

fn mu_residual(p: &ModelParams, mu: f64) -> f64 {
    let y = mu.powi(4);
    p.gamma_s / p.gamma_a * mu - (p.epsilon_a - y) / (p.epsilon_a * (y - 2.0))
}

/// Comparison slope μ* ∈ (2^{1/4}, ε^{1/4}) solving (γs/γa)μ = (ε − μ⁴)/(ε(μ⁴ − 2)).
pub fn mu_star(p: &ModelParams) -> Result<f64> {
    require_supercritical(p)?;
    let lo = FOURTH_ROOT_2 * (1.0 + 1e-15);
    let hi = p.epsilon_a.powf(0.25);
    let m = bisect(|m| mu_residual(p, m), lo, hi, 0.0);
    // the bracket collapses to adjacent floats; keep whichever neighbour has the smaller residual
    let best = [f64::from_bits(m.to_bits() - 1), m, f64::from_bits(m.to_bits() + 1)]
        .into_iter()
        .filter(|x| *x > FOURTH_ROOT_2 && *x < hi)
        .min_by(|a, b| mu_residual(p, *a).abs().total_cmp(&mu_residual(p, *b).abs()))
        .unwrap_or(m);
    Ok(best)
}

/// Residual of the same equation with denominators cleared: (γs/γa)μ·ε(μ⁴ − 2) − (ε − μ⁴).
pub fn mu_star_residual_cleared(p: &ModelParams, mu: f64) -> f64 {
    let y = mu.powi(4);
    (p.gamma_s / p.gamma_a * mu * p.epsilon_a * (y - 2.0) - (p.epsilon_a - y)).abs()
}

/// |(γs/γa)μ − (ε − μ⁴)/(ε(μ⁴ − 2))|.
pub fn mu_star_residual(p: &ModelParams, mu: f64) -> f64 {
    mu_residual(p, mu).abs()
}

/// Floor T_{a,*} of the general escape region, scanned on a log grid over [1, 1e6] K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeFloor {
    pub t_a_star: f64,
    pub scan_range: (f64, f64),
    pub scan_points: usize,
}

/// Monotone solve of λx + c|x|³x = rhs for x ≥ 0; None when rhs ≤ 0.
fn solve_quartic_linear(lambda: f64, c: f64, rhs: f64) -> Option<f64> {
    if rhs <= 0.0 {
        return None;
    }
    let mut hi = (rhs / c).powf(0.25).max(rhs / lambda.max(f64::MIN_POSITIVE)).min(1e300);
    hi = hi.max(1.0);
    Some(bisect(|x| lambda * x + c * quartic(x) - rhs, 0.0, hi, 0.0))
}

const ESCAPE_SCAN: (f64, f64, usize) = (1.0, 1e6, 4000);

fn escape_floor(p: &ModelParams) -> Result<EscapeFloor> {
    require_supercritical(p)?;
    let (a, b, n) = ESCAPE_SCAN;
    let es = p.epsilon_a * p.sigma_b;
    let crosses = |ta: f64| {
        let ts = match solve_quartic_linear(p.lambda, es, p.lambda * ta + 2.0 * es * quartic(ta) - p.r_a(ta)) {
            Some(ts) => ts,
            None => return false,
        };
        // no C2 point at this Ts means F₂ > 0 for every Ta ≥ 0
        match solve_quartic_linear(p.lambda, es, p.lambda * ts + p.sigma_b * quartic(ts) - p.r_s(ts)) {
            Some(ta2) => ta2 < ta,
            None => true,
        }
    };
    let grid: Vec<f64> = (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect();
    let mut floor = None;
    for &ta in grid.iter().rev() {
        if crosses(ta) {
            floor = Some(ta);
        } else {
            break;
        }
    }
    let t_a_star = floor.ok_or_else(|| Error::NonConvergent("escape floor not found on the scan range".into()))?;
    Ok(EscapeFloor { t_a_star, scan_range: (a, b), scan_points: n })
}

/// Membership test for the escape region; the λ = 0, βa-absent case uses the explicit inequalities.
#[derive(Debug, Clone, Copy)]
pub struct EscapeRegion {
    params: ModelParams,
    floor: Option<EscapeFloor>,
}

impl EscapeRegion {
    pub fn new(p: &ModelParams) -> Result<Self> {
        require_supercritical(p)?;
        let explicit = p.lambda == 0.0 && p.coalbedo_a.is_none();
        let floor = if explicit { None } else { Some(escape_floor(p)?) };
        Ok(Self { params: *p, floor })
    }

    pub fn floor(&self) -> Option<EscapeFloor> {
        self.floor
    }

    pub fn contains(&self, s: State) -> bool {
        let p = &self.params;
        match self.floor {
            None => {
                let (ta4, ts4) = (quartic(s.t_a), quartic(s.t_s));
                let mid = p.epsilon_a * p.sigma_b * ta4;
                p.sigma_b * ts4 - p.r_s(s.t_s) < mid && mid < 0.5 * p.epsilon_a * p.sigma_b * ts4
            }
            Some(f) => {
                let r = vector_field(p, s);
                s.t_a >= f.t_a_star && r.d_ta > 0.0 && r.d_ts > 0.0
            }
        }
    }
}

pub fn in_escape_region(p: &ModelParams, s: State) -> Result<bool> {
    Ok(EscapeRegion::new(p)?.contains(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupCertificate {
    pub initial_state: State,
    pub entry_time: f64,
    pub entry_state: State,
    pub mu_star: f64,
    pub mu: f64,
    /// τ₀ + γa/(3εσ(μ⁴ − 2)Ta(τ₀)³).
    pub bound: f64,
    /// First time max(Ta, Ts) reached the blow-up threshold.
    pub observed_escape_time: Option<f64>,
    /// The same bound restarted from the last accepted state below the threshold.
    pub bound_from_escape: Option<f64>,
    pub comparison_holds: bool,
    pub stayed_in_region: bool,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// The bound is proven for λ = 0 with βa absent; otherwise it is reported only.
    pub certified: bool,
}

impl BlowupCertificate {
    pub fn observed_within_bound(&self) -> bool {
        self.observed_escape_time.map_or(false, |t| t <= self.bound)
    }
}

fn remaining_time(p: &ModelParams, mu: f64, t_a: f64) -> f64 {
    p.gamma_a / (3.0 * p.epsilon_a * p.sigma_b * (mu.powi(4) - 2.0) * t_a.powi(3))
}

/// Integrate to the escape region, pick μ, emit the bound, then keep integrating to escape.
pub fn blow_up_certificate(p: &ModelParams, s0: State, opts: &IntegrationOptions) -> Result<BlowupCertificate> {
    let region = EscapeRegion::new(p)?;
    if !(s0.t_a > 0.0 && s0.t_s > 0.0) {
        return Err(Error::NegativeInput { name: "s0", value: s0.t_a.min(s0.t_s) });
    }
    let ms = mu_star(p)?;
    let mut entry: Option<(f64, State, f64)> = None;
    let mut comparison_holds = true;
    let mut stayed = true;
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut prev = (0.0, s0);
    let term = integrate_observed(p, s0, opts, |t, s| {
        if s.max_abs() < opts.blowup_threshold {
            prev = (t, s);
        }
        match entry {
            None => {
                // in the general region Ts/Ta may still sit below 2^{1/4}; wait until a valid μ exists
                if region.contains(s) && s.t_s > FOURTH_ROOT_2 * s.t_a {
                    let ratio = s.t_s / s.t_a;
                    let mid = 0.5 * (FOURTH_ROOT_2 + ms);
                    let mu = if ratio > mid {
                        mid
                    } else {
                        (1..1000)
                            .rev()
                            .map(|k| FOURTH_ROOT_2 + (ms - FOURTH_ROOT_2) * k as f64 / 1000.0)
                            .find(|m| ratio > *m)
                            .unwrap_or(0.5 * (FOURTH_ROOT_2 + ratio))
                    };
                    entry = Some((t, s, mu));
                    rmin = ratio;
                    rmax = ratio;
                }
            }
            Some((_, _, mu)) => {
                comparison_holds &= s.t_s >= mu * s.t_a;
                stayed &= s.max_abs() >= opts.blowup_threshold || region.contains(s);
                let ratio = s.t_s / s.t_a;
                rmin = rmin.min(ratio);
                rmax = rmax.max(ratio);
            }
        }
        Control::Continue
    })?;
    let (entry_time, entry_state, mu) = entry.ok_or(Error::NoEntry)?;
    let (observed, from_escape) = match term {
        Termination::BlowUp { time, non_finite: false, .. } => {
            (Some(time), Some(prev.0 + remaining_time(p, mu, prev.1.t_a)))
        }
        _ => (None, None),
    };
    Ok(BlowupCertificate {
        initial_state: s0,
        entry_time,
        entry_state,
        mu_star: ms,
        mu,
        bound: entry_time + remaining_time(p, mu, entry_state.t_a),
        observed_escape_time: observed,
        bound_from_escape: from_escape,
        comparison_holds,
        stayed_in_region: stayed,
        ratio_min: rmin,
        ratio_max: rmax,
        certified: p.lambda == 0.0 && p.coalbedo_a.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::phi;
    use proptest::prelude::*;

    #[test]
    fn rho_min_constant() {
        assert!((RHO_MIN - 2f64.powf(-0.25)).abs() < 1e-16);
        assert!((RHO_MIN * FOURTH_ROOT_2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l_values() {
        assert!(l_eval(RHO_MIN).unwrap().abs() < 1e-14);
        assert!((l_eval(0.9).unwrap() - 3.122).abs() < 1e-12);
        assert!(l_eval(1.0 - 1e-12).unwrap() > 1e11);
        assert!(l_eval(1.0).is_err());
        assert!(l_eval(0.5).is_err());
        assert!(l_inverse(-1.0).is_err());
        assert_eq!(l_inverse(0.0).unwrap(), 1.0 - U_MAX);
    }

    #[test]
    fn n_endpoints_and_root() {
        assert!((n_eval(RHO_MIN).unwrap() - 1.0).abs() < 1e-12);
        assert!((n_eval(1.0).unwrap() + 2.0).abs() < 1e-12);
        let r0 = n_root();
        assert!((r0 - 0.89).abs() < 0.01, "{r0}");
    }

    #[test]
    fn n_star_guards() {
        assert!(n_star_eval(1.0, RHO_MIN).is_err());
        assert!(n_star_eval(1.0, 1.0).is_err());
        assert!(n_star_eval(1.0, 0.95).is_ok());
    }

    #[test]
    fn epsilon_a0_bracket() {
        let (lo, hi) = bracket_epsilon_a0(1e-4).unwrap();
        assert!(hi - lo <= 1e-4);
        assert!(lo > 1.99 && hi < 1.991, "({lo}, {hi})");
        assert!(n_star_min(1.0, EPSILON_A0_GRID) > 0.0);
        assert!(n_star_min(1.999, EPSILON_A0_GRID) < 0.0);
        assert_eq!(n_star_sign_changes(1.999, EPSILON_A0_GRID), 2);
        assert_eq!(n_star_sign_changes(lo, EPSILON_A0_GRID), 0);
        assert_eq!(n_star_sign_changes(hi + 1e-4, EPSILON_A0_GRID), 2);
    }

    #[test]
    fn phi_second_lambda_zero() {
        let p = ModelParams::default();
        let t: f64 = 290.0;
        assert_eq!(phi_second_closed(&p, t).unwrap(), 12.0 * p.sigma_b * (1.0 - 0.31) * t * t);
    }

    #[test]
    fn phi_second_positive_on_physical_range() {
        let p = ModelParams::default().with_lambda(50.0);
        for i in 1..=500 {
            assert!(phi_second_closed(&p, i as f64).unwrap() > 0.0, "Ts = {i}");
        }
    }

    #[test]
    fn rho_limits() {
        let p = ModelParams::default().with_lambda(50.0);
        assert!(rho_of_ts(&p, 1e5).unwrap() - RHO_MIN < 1e-3);
        assert!(1.0 - rho_of_ts(&p, 1e-2).unwrap() < 1e-6);
        assert_eq!(rho_of_ts(&ModelParams::default(), 300.0), Err(Error::LambdaZero));
    }

    /// Richardson-extrapolated second difference of Φ.
    fn phi_second_fd(p: &ModelParams, t: f64) -> f64 {
        let d2 = |h: f64| (phi(p, t + h).unwrap() - 2.0 * phi(p, t).unwrap() + phi(p, t - h).unwrap()) / (h * h);
        let h = 0.02 * t;
        (4.0 * d2(h / 2.0) - d2(h)) / 3.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn l_roundtrip(y in 0.0..1e3f64) {
            let x = l_inverse(y).unwrap();
            let back = l_eval(x).unwrap();
            prop_assert!((back - y).abs() <= 1e-12 * y.max(1e-3), "{} vs {}", back, y);
        }

        #[test]
        fn rho_matches_ta1(lambda in 1e-2..1e3f64, e in 0.05..1.99f64, ts in 1.0..600.0f64) {
            let p = ModelParams::default().with_lambda(lambda).with_epsilon(e);
            prop_assert!(rho_consistency(&p, ts).unwrap() <= 1e-10);
        }

        #[test]
        fn phi_second_matches_fd(lambda in 1e-2..1e3f64, e in 0.05..1.9f64, ts in 50.0..500.0f64) {
            let p = ModelParams::default().with_lambda(lambda).with_epsilon(e);
            let closed = phi_second_closed(&p, ts).unwrap();
            let fd = phi_second_fd(&p, ts);
            prop_assert!(((closed - fd) / closed).abs() <= 1e-5, "closed {} fd {}", closed, fd);
        }

        #[test]
        fn convex_for_subunit_epsilon(lambda in 1e-2..1e3f64, e in 0.05..1.0f64, ts in 1.0..1000.0f64) {
            let p = ModelParams::default().with_lambda(lambda).with_epsilon(e);
            prop_assert!(phi_second_closed(&p, ts).unwrap() > 0.0);
        }

        #[test]
        fn mu_star_single_crossing(e in 2.01..6.0f64, ratio in 0.1..50.0f64) {
            let p = ModelParams { gamma_s: ratio * 1e7, ..ModelParams::default().with_epsilon(e) };
            let m = mu_star(&p).unwrap();
            prop_assert!(m > FOURTH_ROOT_2 && m < e.powf(0.25));
            let (a, b) = (FOURTH_ROOT_2 * (1.0 + 1e-9), e.powf(0.25));
            let vals: Vec<f64> = (0..=2000).map(|i| mu_residual(&p, a + (b - a) * i as f64 / 2000.0)).collect();
            let changes = vals.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
            prop_assert_eq!(changes, 1);
            prop_assert!(mu_star_residual_cleared(&p, m) <= 1e-12);
        }
    }

    #[test]
    fn mu_star_unit_ratio() {
        let p = ModelParams { gamma_s: 1e7, gamma_a: 1e7, ..ModelParams::default().with_epsilon(3.0) };
        let m = mu_star(&p).unwrap();
        // independent oracle: solve μ·3(μ⁴ − 2) = 3 − μ⁴ by bisection on the cleared form
        let f = |x: f64| x * 3.0 * (x.powi(4) - 2.0) - (3.0 - x.powi(4));
        let (mut a, mut b) = (FOURTH_ROOT_2, 3f64.powf(0.25));
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if f(c) > 0.0 {
                b = c
            } else {
                a = c
            }
        }
        assert!((m - a).abs() < 1e-14);
        assert!(mu_star_residual(&p, m) <= 1e-12);
        assert!(matches!(mu_star(&ModelParams::default()), Err(Error::EpsilonNotSupercritical { .. })));
    }

    #[test]
    fn escape_region_boundary() {
        let p = ModelParams::default().with_epsilon(3.0);
        let ta: f64 = 300.0;
        assert!(!in_escape_region(&p, State::new(ta, 1.15 * ta)).unwrap());
        assert!(in_escape_region(&p, State::new(ta, 1.3 * ta)).unwrap());
        // above the ε^{1/4} ratio the region ends where σTs⁴ − Rs = εσTa⁴
        assert!(!in_escape_region(&p, State::new(ta, 1.4 * ta)).unwrap());
        assert!(in_escape_region(&ModelParams::default(), State::new(1.0, 1.0)).is_err());
    }

    #[test]
    fn certificate_lambda_zero() {
        let p = ModelParams::default().with_epsilon(3.0);
        let c = blow_up_certificate(&p, State::new(100.0, 100.0), &IntegrationOptions::default()).unwrap();
        assert!(c.certified);
        assert!(c.observed_within_bound(), "{c:?}");
        assert!(c.comparison_holds && c.stayed_in_region);
        assert!(c.mu > FOURTH_ROOT_2 && c.mu < c.mu_star);
        assert!(c.ratio_min > FOURTH_ROOT_2);
    }

    #[test]
    fn certificate_with_exchange() {
        let p = ModelParams::default().with_epsilon(3.0).with_lambda(20.0);
        let r = EscapeRegion::new(&p).unwrap();
        assert!(r.floor().is_some());
        let c = blow_up_certificate(&p, State::new(100.0, 100.0), &IntegrationOptions::default()).unwrap();
        assert!(!c.certified);
        assert!(c.stayed_in_region);
        assert!(c.mu > FOURTH_ROOT_2 && c.bound > c.entry_time);
        assert!(c.observed_escape_time.is_some());
    }
}
