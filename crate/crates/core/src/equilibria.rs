//! Equilibrium enumeration through the scalar reduction Φ(Ts) = q βs(Ts), classification
//! and λ-independent bounds.
//!
//! With βa absent, Ta at an equilibrium is the root Ta⁽¹⁾(Ts) of
//! `λTa + 2εσTa⁴ = λTs + εσTs⁴`, and the surface balance becomes
//! `Φ(Ts) = (λ/2)(Ts − Ta⁽¹⁾(Ts)) + σ(1 − ε/2)Ts⁴ = q βs(Ts)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{jacobian, vector_field, Eigenvalues, ModelParams, State, FOURTH_ROOT_2};
use crate::roots::{bisect, golden_min, newton_bracketed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumClass {
    Cold,
    Intermediate,
    Warm,
    Kink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AsymptoticallyStable,
    Unstable,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub trace: Option<f64>,
    pub determinant: Option<f64>,
    pub eigenvalues: Option<Eigenvalues>,
    /// Determinant from the factored form (λ + 8εσTa³)(Φ′ − qβs′)/(γaγs).
    pub determinant_factored: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: State,
    pub class: EquilibriumClass,
    pub stability: Stability,
    /// max(|γa F₁|, |γs F₂|) / (q β₊).
    pub residual: f64,
    /// Set for a tangential (double) root of Φ − qβs.
    pub double_root: bool,
}

impl Equilibrium {
    pub fn is_stable(&self) -> bool {
        self.stability.verdict == Verdict::AsymptoticallyStable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBounds {
    pub t_a_lower: f64,
    pub t_a_upper: f64,
    pub t_s_lower: f64,
    pub t_s_upper: f64,
}

impl EquilibriumBounds {
    /// Lower bounds are strict, upper bounds inclusive; `tol` widens both.
    pub fn contains(&self, s: State, tol: f64) -> bool {
        s.t_a > self.t_a_lower - tol
            && s.t_a <= self.t_a_upper + tol
            && s.t_s > self.t_s_lower - tol
            && s.t_s <= self.t_s_upper + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumOptions {
    /// Number of grid cells for the sign scan.
    pub grid_points: usize,
    /// Tangency threshold relative to q β₊.
    pub tangency_tol: f64,
    /// Distance to a ramp corner below which a root is classed Kink, K.
    pub kink_tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { grid_points: 4096, tangency_tol: 1e-6, kink_tol: 1e-9 }
    }
}

fn check_ts(t_s: f64) -> Result<()> {
    if t_s < 0.0 || t_s.is_nan() {
        Err(Error::NegativeInput { name: "t_s", value: t_s })
    } else {
        Ok(())
    }
}

/// Atmosphere temperature Ta⁽¹⁾(Ts) balancing the atmospheric equation.
pub fn solve_ta1(p: &ModelParams, t_s: f64) -> Result<f64> {
    check_ts(t_s)?;
    Ok(ta1(p, t_s))
}

fn ta1(p: &ModelParams, t_s: f64) -> f64 {
    if p.lambda == 0.0 || t_s == 0.0 {
        return t_s / FOURTH_ROOT_2;
    }
    let es = p.epsilon_a * p.sigma_b;
    let rhs = p.lambda * t_s + es * t_s.powi(4);
    let g = |x: f64| (p.lambda * x + 2.0 * es * x.powi(4) - rhs, p.lambda + 8.0 * es * x.powi(3));
    newton_bracketed(g, t_s / FOURTH_ROOT_2, t_s, 1e-15)
}

/// Φ(Ts), W·m⁻².
pub fn phi(p: &ModelParams, t_s: f64) -> Result<f64> {
    check_ts(t_s)?;
    Ok(phi_raw(p, t_s))
}

fn phi_raw(p: &ModelParams, t_s: f64) -> f64 {
    let quartic = p.sigma_b * (1.0 - 0.5 * p.epsilon_a) * t_s.powi(4);
    if p.lambda == 0.0 {
        quartic
    } else {
        0.5 * p.lambda * (t_s - ta1(p, t_s)) + quartic
    }
}

/// Φ′(Ts), W·m⁻²·K⁻¹.
pub fn phi_prime(p: &ModelParams, t_s: f64) -> Result<f64> {
    check_ts(t_s)?;
    Ok(phi_prime_at(p, t_s, ta1(p, t_s)))
}

fn phi_prime_at(p: &ModelParams, t_s: f64, t_a: f64) -> f64 {
    let s = p.sigma_b;
    if p.lambda == 0.0 {
        return 4.0 * s * (1.0 - 0.5 * p.epsilon_a) * t_s.powi(3);
    }
    let es = p.epsilon_a * s;
    let l = p.lambda;
    l + 4.0 * s * t_s.powi(3)
        - (l + 4.0 * es * t_s.powi(3)) * (l + 4.0 * es * t_a.powi(3)) / (l + 8.0 * es * t_a.powi(3))
}

/// λ-independent bounds on equilibrium temperatures.
pub fn equilibrium_bounds(p: &ModelParams) -> Result<EquilibriumBounds> {
    p.require_subcritical()?;
    let (e, s) = (p.epsilon_a, p.sigma_b);
    let lo = p.q * p.coalbedo_s.beta_minus;
    let hi = p.q * p.coalbedo_s.beta_plus;
    let r = |x: f64| x.powf(0.25);
    Ok(if e <= 1.0 {
        EquilibriumBounds {
            t_a_lower: r(lo / (2.0 * s)),
            t_a_upper: r(hi / (e * s)),
            t_s_lower: r(lo / s),
            t_s_upper: r(2.0 * hi / (e * s)),
        }
    } else {
        EquilibriumBounds {
            t_a_lower: r(lo / s),
            t_a_upper: r(hi / ((2.0 - e) * s)),
            t_s_lower: r(lo / s),
            t_s_upper: r(2.0 * hi / ((2.0 - e) * s)),
        }
    })
}

fn class_of(p: &ModelParams, t_s: f64, kink_tol: f64) -> EquilibriumClass {
    let r = &p.coalbedo_s;
    if (t_s - r.t_minus).abs() <= kink_tol || (t_s - r.t_plus).abs() <= kink_tol {
        EquilibriumClass::Kink
    } else if t_s < r.t_minus {
        EquilibriumClass::Cold
    } else if t_s > r.t_plus {
        EquilibriumClass::Warm
    } else {
        EquilibriumClass::Intermediate
    }
}

/// Normalised residual max(|γa F₁|, |γs F₂|)/(q β₊).
pub fn residual(p: &ModelParams, s: State) -> f64 {
    let f = vector_field(p, s);
    (p.gamma_a * f.d_ta).abs().max((p.gamma_s * f.d_ts).abs()) / (p.q * p.coalbedo_s.beta_plus)
}

/// Fill in the stability verdict from the Jacobian.
pub fn classify(p: &ModelParams, e: &Equilibrium) -> Equilibrium {
    let mut out = *e;
    let degenerate = Stability {
        trace: None,
        determinant: None,
        eigenvalues: None,
        determinant_factored: None,
        verdict: Verdict::Degenerate,
    };
    if e.class == EquilibriumClass::Kink {
        out.stability = degenerate;
        return out;
    }
    let j = match jacobian(p, e.state) {
        Ok(j) => j,
        Err(_) => {
            out.stability = degenerate;
            return out;
        }
    };
    let (ta, ts) = (e.state.t_a, e.state.t_s);
    let es = p.epsilon_a * p.sigma_b;
    let tr = j.trace();
    let det = j.determinant();
    let gg = p.gamma_a * p.gamma_s;
    let scale = (p.lambda + 8.0 * es * ta.powi(3)) * (p.lambda + 4.0 * p.sigma_b * ts.powi(3)) / gg;
    let factored = p.coalbedo_a.is_none().then(|| {
        let slope = p.coalbedo_s.slope(ts).left;
        (p.lambda + 8.0 * es * ta.powi(3)) * (phi_prime_at(p, ts, ta) - p.q * slope) / gg
    });
    let verdict = if e.double_root || det.abs() <= 1e-9 * scale {
        Verdict::Degenerate
    } else if det > 0.0 && tr < 0.0 {
        Verdict::AsymptoticallyStable
    } else {
        Verdict::Unstable
    };
    out.stability = Stability {
        trace: Some(tr),
        determinant: Some(det),
        eigenvalues: Some(j.eigenvalues()),
        determinant_factored: factored,
        verdict,
    };
    out
}

fn make(p: &ModelParams, t_s: f64, double_root: bool, o: &EquilibriumOptions) -> Equilibrium {
    let state = State::new(ta1(p, t_s), t_s);
    let e = Equilibrium {
        state,
        class: class_of(p, t_s, o.kink_tol),
        stability: Stability {
            trace: None,
            determinant: None,
            eigenvalues: None,
            determinant_factored: None,
            verdict: Verdict::Degenerate,
        },
        residual: residual(p, state),
        double_root,
    };
    classify(p, &e)
}

/// All equilibria, sorted by Ts, using default options.
pub fn find_equilibria(p: &ModelParams) -> Result<Vec<Equilibrium>> {
    find_equilibria_with(p, &EquilibriumOptions::default())
}

/// All equilibria, sorted by Ts.
pub fn find_equilibria_with(p: &ModelParams, o: &EquilibriumOptions) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    p.require_subcritical()?;
    p.require_no_atmospheric_coalbedo()?;
    if o.grid_points < 8 {
        return Err(Error::InvalidOptions { name: "grid_points", reason: "must be >= 8".into() });
    }
    let h = |t: f64| phi_raw(p, t) - p.r_s(t);
    let upper = 1.5 * equilibrium_bounds(p)?.t_s_upper;
    let n = o.grid_points;
    let grid: Vec<f64> = (0..=n).map(|i| upper * i as f64 / n as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| h(t)).collect();
    let tangency = o.tangency_tol * p.q * p.coalbedo_s.beta_plus;

    let mut roots: Vec<(f64, bool)> = Vec::new();
    for i in 0..n {
        let (a, b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (vals[i], vals[i + 1]);
        if fa == 0.0 {
            roots.push((a, false));
        } else if fb != 0.0 && fa.signum() != fb.signum() {
            roots.push((bisect(h, a, b, 0.0), false));
        }
    }
    // same-sign triples whose middle value is closest to zero may hide a root pair
    for i in 1..n {
        let (fl, fm, fr) = (vals[i - 1], vals[i], vals[i + 1]);
        if fm == 0.0 || fl.signum() != fm.signum() || fr.signum() != fm.signum() {
            continue;
        }
        if !(fm.abs() < fl.abs() && fm.abs() <= fr.abs()) {
            continue;
        }
        let sgn = fm.signum();
        let (x, m) = golden_min(|t| sgn * h(t), grid[i - 1], grid[i + 1], 1e-12 * upper);
        if m.abs() <= tangency {
            roots.push((x, true));
        } else if m < 0.0 {
            roots.push((bisect(h, grid[i - 1], x, 0.0), false));
            roots.push((bisect(h, x, grid[i + 1], 0.0), false));
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-9);
    Ok(roots.into_iter().map(|(t, d)| make(p, t, d, o)).collect())
}

/// Samples (Ts, Φ(Ts), q βs(Ts)) on `n + 1` evenly spaced points of `[0, t_max]`.
pub fn phi_curve(p: &ModelParams, t_max: f64, n: usize) -> Result<Vec<(f64, f64, f64)>> {
    check_ts(t_max)?;
    let n = n.max(1);
    Ok((0..=n)
        .map(|i| {
            let t = t_max * i as f64 / n as f64;
            (t, phi_raw(p, t), p.r_s(t))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn warm_closed_form(p: &ModelParams) -> f64 {
        (p.q * p.coalbedo_s.beta_plus / (p.sigma_b * (1.0 - 0.5 * p.epsilon_a))).powf(0.25)
    }

    #[test]
    fn ta1_limits() {
        let p = ModelParams::default();
        assert_eq!(solve_ta1(&p, 300.0).unwrap(), 300.0 / FOURTH_ROOT_2);
        let p = p.with_lambda(50.0);
        assert_eq!(solve_ta1(&p, 0.0).unwrap(), 0.0);
        let ta = solve_ta1(&p, 300.0).unwrap();
        assert!(ta > 252.27 && ta < 300.0);
        let es = p.epsilon_a * p.sigma_b;
        let res = 50.0 * ta + 2.0 * es * ta.powi(4) - (50.0 * 300.0 + es * 300f64.powi(4));
        assert!(res.abs() < 1e-9);
        assert!(matches!(solve_ta1(&p, -1.0), Err(Error::NegativeInput { .. })));
    }

    #[test]
    fn phi_basics() {
        let p = ModelParams::default();
        assert_eq!(phi(&p, 0.0).unwrap(), 0.0);
        let t: f64 = 270.0;
        assert_eq!(phi(&p, t).unwrap(), p.sigma_b * (1.0 - 0.5 * p.epsilon_a) * t.powi(4));
        let p = p.with_lambda(50.0);
        assert_eq!(phi(&p, 0.0).unwrap(), 0.0);
        let h = 1e-3;
        let fd = (phi(&p, 280.0 + h).unwrap() - phi(&p, 280.0 - h).unwrap()) / (2.0 * h);
        let exact = phi_prime(&p, 280.0).unwrap();
        assert!(((fd - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn three_equilibria_default() {
        let p = ModelParams::default();
        let eqs = find_equilibria(&p).unwrap();
        let classes: Vec<_> = eqs.iter().map(|e| e.class).collect();
        assert_eq!(classes, [EquilibriumClass::Cold, EquilibriumClass::Intermediate, EquilibriumClass::Warm]);
        let verdicts: Vec<_> = eqs.iter().map(|e| e.stability.verdict).collect();
        assert_eq!(verdicts, [Verdict::AsymptoticallyStable, Verdict::Unstable, Verdict::AsymptoticallyStable]);
        for e in &eqs {
            assert!(e.residual <= 1e-9);
            assert!((e.state.t_a - e.state.t_s / FOURTH_ROOT_2).abs() <= 1e-10);
            let d = e.stability.determinant.unwrap();
            let df = e.stability.determinant_factored.unwrap();
            assert!(((d - df) / d).abs() < 1e-8);
        }
        assert!((eqs[2].state.t_s - warm_closed_form(&p)).abs() <= 1e-9 * eqs[2].state.t_s);
    }

    #[test]
    fn warm_only_scenario() {
        let p = ModelParams::default().with_q(600.0);
        let eqs = find_equilibria(&p).unwrap();
        assert_eq!(eqs.len(), 1);
        assert_eq!(eqs[0].class, EquilibriumClass::Warm);
        assert!((eqs[0].state.t_s - warm_closed_form(&p)).abs() <= 1e-9 * eqs[0].state.t_s);
    }

    #[test]
    fn warm_determinant_identity() {
        let p = ModelParams::default();
        let w = find_equilibria(&p).unwrap()[2];
        let (ta, ts) = (w.state.t_a, w.state.t_s);
        let e = p.epsilon_a;
        let closed = 16.0 * (2.0 - e) * e * p.sigma_b.powi(2) * ta.powi(3) * ts.powi(3);
        let direct = w.stability.determinant.unwrap() * p.gamma_a * p.gamma_s;
        assert!(((closed - direct) / closed).abs() < 1e-10);
    }

    #[test]
    fn tangency_reported_as_degenerate() {
        // a wide ramp on which σ(1 − ε/2)T⁴ can touch the ramp line
        let mut base = ModelParams::default();
        base.coalbedo_s.t_plus = 320.0;
        let c = base.sigma_b * (1.0 - 0.5 * base.epsilon_a);
        let r = base.coalbedo_s;
        let m = r.ramp_slope();
        // tangency of c T⁴ with q(β₋ + m(T − T₋)): 4cT³ = qm and cT⁴ = q(β₋ + m(T − T₋))
        // ⇒ T/4 = β₋/m + T − T₋ ⇒ T = (4/3)(T₋ − β₋/m)
        let t = 4.0 / 3.0 * (r.t_minus - r.beta_minus / m);
        assert!(t > r.t_minus && t < r.t_plus);
        let q = 4.0 * c * t.powi(3) / m;
        let eqs = find_equilibria(&base.with_q(q)).unwrap();
        let d: Vec<_> = eqs.iter().filter(|e| e.stability.verdict == Verdict::Degenerate).collect();
        assert_eq!(d.len(), 1, "{eqs:?}");
        assert!((d[0].state.t_s - t).abs() < 1e-2);
    }

    #[test]
    fn kink_roots_classified() {
        let base = ModelParams::default();
        let c = base.sigma_b * (1.0 - 0.5 * base.epsilon_a);
        let q = c * 250f64.powi(4) / 0.3;
        let eqs = find_equilibria(&base.with_q(q)).unwrap();
        let k: Vec<_> = eqs.iter().filter(|e| e.class == EquilibriumClass::Kink).collect();
        assert_eq!(k.len(), 1, "{eqs:?}");
        assert_eq!(k[0].stability.verdict, Verdict::Degenerate);
    }

    #[test]
    fn bounds_formulas() {
        let p = ModelParams::default();
        let b = equilibrium_bounds(&p).unwrap();
        assert_eq!(b.t_a_upper, (p.q * 0.7 / (0.62 * p.sigma_b)).powf(0.25));
        assert_eq!(b.t_s_lower, (p.q * 0.3 / p.sigma_b).powf(0.25));
        let p = p.with_epsilon(1.5);
        let b = equilibrium_bounds(&p).unwrap();
        assert_eq!(b.t_a_upper, (p.q * 0.7 / (0.5 * p.sigma_b)).powf(0.25));
        assert!(equilibrium_bounds(&p.with_epsilon(2.0)).is_err());
    }

    #[test]
    fn rejects_supercritical() {
        let p = ModelParams::default().with_epsilon(2.5);
        assert!(matches!(find_equilibria(&p), Err(Error::EpsilonOutOfRange { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn structural_properties(e in 0.05..1.98f64, lambda in prop_oneof![Just(0.0), 1e-3..1e3f64], q in 250.0..800.0f64) {
            let p = ModelParams::default().with_epsilon(e).with_lambda(lambda).with_q(q);
            let eqs = find_equilibria(&p).unwrap();
            let b = equilibrium_bounds(&p).unwrap();
            prop_assert!(!eqs.is_empty());
            prop_assert!(eqs.len() <= 5);
            if lambda == 0.0 || e <= 1.0 {
                prop_assert!(eqs.len() <= 3);
            }
            prop_assert!(eqs.iter().filter(|x| x.class == EquilibriumClass::Cold).count() <= 1);
            prop_assert!(eqs.iter().filter(|x| x.class == EquilibriumClass::Warm).count() <= 1);
            for x in &eqs {
                prop_assert!(x.residual <= 1e-9, "residual {}", x.residual);
                prop_assert!(b.contains(x.state, 1e-9), "{:?} outside {:?}", x.state, b);
                let (ta, ts) = (x.state.t_a, x.state.t_s);
                if lambda == 0.0 {
                    prop_assert!((ta - ts / FOURTH_ROOT_2).abs() <= 1e-10);
                } else {
                    prop_assert!(ta < ts && ts < FOURTH_ROOT_2 * ta);
                }
                if matches!(x.class, EquilibriumClass::Cold | EquilibriumClass::Warm) && !x.double_root {
                    prop_assert_eq!(x.stability.verdict, Verdict::AsymptoticallyStable);
                }
            }
            for w in eqs.windows(2) {
                prop_assert!(w[0].state.t_s < w[1].state.t_s);
            }
        }

        #[test]
        fn phi_increasing(e in 0.05..1.98f64, lambda in 0.0..1e3f64, t in 0.0..600.0f64, dt in 1e-3..50.0f64) {
            let p = ModelParams::default().with_epsilon(e).with_lambda(lambda);
            prop_assert!(phi(&p, t + dt).unwrap() > phi(&p, t).unwrap());
        }
    }
}
