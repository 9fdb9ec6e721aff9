//! Implicit-function derivatives of off-ramp equilibria, continuation sweeps,
//! the greenhouse jump experiment and quasi-static hysteresis loops.

use serde::{Deserialize, Serialize};

use crate::equilibria::{find_equilibria, Equilibrium, EquilibriumClass, Verdict};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationOptions, Termination, Trajectory};
use crate::model::{jacobian, vector_field, ModelParams, Rates, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDerivative {
    pub d_ta: f64,
    pub d_ts: f64,
    /// The sign of `d_ta` is not established analytically.
    pub unproven_sign: bool,
}

/// γaγs·det DF at an off-ramp equilibrium, or an error if unusable.
fn scaled_det(p: &ModelParams, e: &Equilibrium) -> Result<f64> {
    if !matches!(e.class, EquilibriumClass::Cold | EquilibriumClass::Warm) {
        return Err(Error::OnRamp);
    }
    let j = jacobian(p, e.state)?;
    let det = j.determinant();
    let scale = (j.a11 * j.a22).abs() + (j.a12 * j.a21).abs();
    if det <= 1e-9 * scale {
        return Err(Error::Degenerate { det });
    }
    Ok(det * p.gamma_a * p.gamma_s)
}

/// (∂Ta/∂λ, ∂Ts/∂λ) at a cold or warm equilibrium.
pub fn d_eq_d_lambda(p: &ModelParams, e: &Equilibrium) -> Result<EquilibriumDerivative> {
    let d = scaled_det(p, e)?;
    let (ta, ts) = (e.state.t_a, e.state.t_s);
    let (s, eps) = (p.sigma_b, p.epsilon_a);
    let k = (ts - ta) / d;
    Ok(EquilibriumDerivative {
        d_ta: k * 4.0 * s * (1.0 - eps) * ts.powi(3),
        d_ts: -k * 4.0 * eps * s * ta.powi(3),
        unproven_sign: false,
    })
}

/// (∂Ta/∂ε, ∂Ts/∂ε) at a cold or warm equilibrium.
pub fn d_eq_d_epsilon(p: &ModelParams, e: &Equilibrium) -> Result<EquilibriumDerivative> {
    let d = scaled_det(p, e)?;
    let (ta, ts) = (e.state.t_a, e.state.t_s);
    let (s, eps, l) = (p.sigma_b, p.epsilon_a, p.lambda);
    let (ta4, ts4) = (ta.powi(4), ts.powi(4));
    let d_ts = (l * s * (ts4 - ta4) + 4.0 * eps * s * s * ta.powi(3) * ts4) / d;
    let d_ta = s * (l * (ts4 - ta4) + 4.0 * s * ts.powi(3) * (ts4 - (2.0 - eps) * ta4)) / d;
    Ok(EquilibriumDerivative { d_ta, d_ts, unproven_sign: eps < 1.0 && l > 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    EpsilonA,
    Lambda,
}

impl SweepParam {
    pub fn apply(&self, p: &ModelParams, v: f64) -> ModelParams {
        match self {
            SweepParam::EpsilonA => p.with_epsilon(v),
            SweepParam::Lambda => p.with_lambda(v),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::EpsilonA => "epsilon_a",
            SweepParam::Lambda => "lambda",
        }
    }

    /// Derivative of an equilibrium with respect to this parameter.
    pub fn derivative(&self, p: &ModelParams, e: &Equilibrium) -> Result<EquilibriumDerivative> {
        match self {
            SweepParam::EpsilonA => d_eq_d_epsilon(p, e),
            SweepParam::Lambda => d_eq_d_lambda(p, e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub param: SweepParam,
    pub value: f64,
    pub branch: usize,
    pub equilibrium: Equilibrium,
    pub derivative: Option<EquilibriumDerivative>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchEventKind {
    Birth,
    Death,
}

/// A branch appearing or disappearing between two consecutive parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: BranchEventKind,
    pub branch: usize,
    /// Last value where the branch was absent (birth) or present (death).
    pub from_value: f64,
    pub to_value: f64,
    pub class: EquilibriumClass,
    /// Determinant at the branch end nearest the event.
    pub determinant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub records: Vec<SweepRecord>,
    pub events: Vec<BranchEvent>,
}

impl Sweep {
    /// Records of one branch in sweep order.
    pub fn branch(&self, id: usize) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| r.branch == id).collect()
    }
}

fn classes_compatible(a: EquilibriumClass, b: EquilibriumClass) -> bool {
    use EquilibriumClass::*;
    !matches!((a, b), (Cold, Warm) | (Warm, Cold))
}

/// Distance from each entry to its nearest neighbour (infinite when alone).
fn neighbour_gaps(ts: &[f64]) -> Vec<f64> {
    (0..ts.len())
        .map(|i| {
            ts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| (t - ts[i]).abs()).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Order-preserving matching: roots of a continuously varying scalar function keep their
/// order and appear or vanish in adjacent pairs. Returns, per new root, the matched old index.
fn match_by_rank(prev: &[f64], new: &[f64]) -> Option<Vec<Option<usize>>> {
    let (np, nn) = (prev.len(), new.len());
    if np == nn {
        return Some((0..nn).map(Some).collect());
    }
    // indices of the survivors in the longer list after dropping an adjacent pair at k
    let best_pair = |long: &[f64], short: &[f64]| {
        (0..long.len() - 1)
            .map(|k| {
                let keep: Vec<usize> = (0..long.len()).filter(|&i| i != k && i != k + 1).collect();
                let cost: f64 = keep.iter().zip(short).map(|(&i, s)| (long[i] - s).abs()).sum();
                (cost, keep)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, keep)| keep)
    };
    if nn == np + 2 {
        let keep = best_pair(new, prev)?;
        let mut out = vec![None; nn];
        for (i, j) in keep.into_iter().enumerate() {
            out[j] = Some(i);
        }
        Some(out)
    } else if np == nn + 2 {
        let keep = best_pair(prev, new)?;
        Some(keep.into_iter().map(Some).collect())
    } else {
        None
    }
}

/// Nearest-Ts matching capped at half the local gap to neighbouring roots.
fn match_nearest(
    prev: &[f64],
    prev_class: &[EquilibriumClass],
    new: &[f64],
    new_class: &[EquilibriumClass],
) -> Vec<Option<usize>> {
    let (prev_gap, new_gap) = (neighbour_gaps(prev), neighbour_gaps(new));
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in prev.iter().enumerate() {
        for (j, b) in new.iter().enumerate() {
            let d = (a - b).abs();
            if d <= 0.5 * prev_gap[i].min(new_gap[j]) && classes_compatible(prev_class[i], new_class[j]) {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used = vec![false; prev.len()];
    let mut out = vec![None; new.len()];
    for (_, i, j) in pairs {
        if !used[i] && out[j].is_none() {
            used[i] = true;
            out[j] = Some(i);
        }
    }
    out
}

/// Continuation sweep of all equilibria over `n_steps + 1` evenly spaced parameter values.
pub fn sweep(p: &ModelParams, param: SweepParam, range: (f64, f64), n_steps: usize) -> Result<Sweep> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || n_steps == 0 {
        return Err(Error::RangeInvalid(format!("need lo < hi and n_steps >= 1, got [{lo}, {hi}] with {n_steps}")));
    }
    match param {
        SweepParam::EpsilonA if !(lo > 0.0 && hi < 2.0) => {
            return Err(Error::RangeInvalid(format!("epsilon_a range [{lo}, {hi}] must lie in (0, 2)")));
        }
        SweepParam::Lambda if lo < 0.0 => {
            return Err(Error::RangeInvalid(format!("lambda range [{lo}, {hi}] must be nonnegative")));
        }
        _ => {}
    }
    let mut records = Vec::new();
    let mut events = Vec::new();
    // (branch id, last record) of branches alive at the previous step
    let mut alive: Vec<(usize, SweepRecord)> = Vec::new();
    let mut next_id = 0;
    let mut prev_value = lo;

    for k in 0..=n_steps {
        let value = lo + (hi - lo) * k as f64 / n_steps as f64;
        let pk = param.apply(p, value);
        let eqs = find_equilibria(&pk)?;
        let prev_ts: Vec<f64> = alive.iter().map(|(_, r)| r.equilibrium.state.t_s).collect();
        let prev_class: Vec<EquilibriumClass> = alive.iter().map(|(_, r)| r.equilibrium.class).collect();
        let new_ts: Vec<f64> = eqs.iter().map(|e| e.state.t_s).collect();
        let new_class: Vec<EquilibriumClass> = eqs.iter().map(|e| e.class).collect();
        let matching = match_by_rank(&prev_ts, &new_ts)
            .filter(|m| {
                m.iter().enumerate().all(|(j, i)| i.map_or(true, |i| classes_compatible(prev_class[i], new_class[j])))
            })
            .unwrap_or_else(|| match_nearest(&prev_ts, &prev_class, &new_ts, &new_class));
        let mut old_used = vec![false; alive.len()];
        let mut new_branch: Vec<Option<usize>> = vec![None; eqs.len()];
        for (j, i) in matching.iter().enumerate() {
            if let Some(i) = *i {
                old_used[i] = true;
                new_branch[j] = Some(alive[i].0);
            }
        }
        for (i, (id, r)) in alive.iter().enumerate() {
            if !old_used[i] {
                events.push(BranchEvent {
                    kind: BranchEventKind::Death,
                    branch: *id,
                    from_value: prev_value,
                    to_value: value,
                    class: r.equilibrium.class,
                    determinant: r.equilibrium.stability.determinant,
                });
            }
        }
        let mut next_alive = Vec::with_capacity(eqs.len());
        for (j, e) in eqs.iter().enumerate() {
            let branch = match new_branch[j] {
                Some(id) => id,
                None => {
                    let id = next_id;
                    next_id += 1;
                    if k > 0 {
                        events.push(BranchEvent {
                            kind: BranchEventKind::Birth,
                            branch: id,
                            from_value: prev_value,
                            to_value: value,
                            class: e.class,
                            determinant: e.stability.determinant,
                        });
                    }
                    id
                }
            };
            let derivative =
                (e.stability.verdict == Verdict::AsymptoticallyStable).then(|| param.derivative(&pk, e).ok()).flatten();
            let rec = SweepRecord { param, value, branch, equilibrium: *e, derivative };
            records.push(rec);
            next_alive.push((branch, rec));
        }
        alive = next_alive;
        prev_value = value;
    }
    Ok(Sweep { records, events })
}

/// Outcome of raising ε from `eps_star` to `eps_plus` starting at the old warm equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenhouseJump {
    pub eps_star: f64,
    pub eps_plus: f64,
    pub old: Equilibrium,
    pub new: Equilibrium,
    pub trajectory: Trajectory,
    /// Field of the ε⁺ system at the old equilibrium.
    pub initial_rates: Rates,
    /// (σ(ε⁺ − ε*)(Ts⁴ − 2Ta⁴)/γa, σ(ε⁺ − ε*)Ta⁴/γs) at the old equilibrium.
    pub predicted_rates: Rates,
}

fn warm_equilibrium(p: &ModelParams) -> Result<Equilibrium> {
    find_equilibria(p)?
        .into_iter()
        .rev()
        .find(|e| e.class == EquilibriumClass::Warm)
        .ok_or(Error::NoWarmEquilibrium { epsilon_a: p.epsilon_a })
}

pub fn greenhouse_jump(
    p: &ModelParams,
    eps_star: f64,
    eps_plus: f64,
    opts: &IntegrationOptions,
) -> Result<GreenhouseJump> {
    if !(eps_plus >= eps_star && eps_plus < 2.0) {
        return Err(Error::RangeInvalid(format!("need eps_star <= eps_plus < 2, got {eps_star} and {eps_plus}")));
    }
    let p_star = p.with_epsilon(eps_star);
    let p_plus = p.with_epsilon(eps_plus);
    let old = warm_equilibrium(&p_star)?;
    let (ta, ts) = (old.state.t_a, old.state.t_s);
    let de = eps_plus - eps_star;
    let predicted_rates = Rates {
        d_ta: p.sigma_b * de * (ts.powi(4) - 2.0 * ta.powi(4)) / p.gamma_a,
        d_ts: p.sigma_b * de * ta.powi(4) / p.gamma_s,
    };
    let initial_rates = vector_field(&p_plus, old.state);
    if eps_plus == eps_star {
        let trajectory = Trajectory {
            samples: vec![crate::integrator::Sample { t: 0.0, state: old.state }],
            termination: Termination::Converged { state: old.state },
            accepted_steps: 0,
            rejected_steps: 0,
        };
        return Ok(GreenhouseJump { eps_star, eps_plus, old, new: old, trajectory, initial_rates, predicted_rates });
    }
    let new = warm_equilibrium(&p_plus)?;
    let trajectory = integrate(&p_plus, old.state, opts)?;
    let end = trajectory
        .converged_state()
        .ok_or_else(|| Error::NonConvergent(format!("jump trajectory ended with {:?}", trajectory.termination)))?;
    if end.dist(&new.state) > 1e-3 {
        return Err(Error::NonConvergent(format!(
            "jump converged to {end:?}, not the warm equilibrium {:?}",
            new.state
        )));
    }
    Ok(GreenhouseJump { eps_star, eps_plus, old, new, trajectory, initial_rates, predicted_rates })
}

/// Which side of the coalbedo ramp a state sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Cold,
    Ramp,
    Warm,
}

impl Branch {
    pub fn of(p: &ModelParams, s: State) -> Branch {
        if s.t_s < p.coalbedo_s.t_minus {
            Branch::Cold
        } else if s.t_s > p.coalbedo_s.t_plus {
            Branch::Warm
        } else {
            Branch::Ramp
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisRecord {
    pub epsilon_a: f64,
    pub state: State,
    pub branch: Branch,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub from_epsilon: f64,
    pub to_epsilon: f64,
    pub from: Branch,
    pub to: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisLoop {
    pub records: Vec<HysteresisRecord>,
    pub jumps: Vec<JumpEvent>,
}

impl HysteresisLoop {
    /// Distance between the midpoints of the first cold→warm and the first warm→cold jump.
    pub fn width(&self) -> Option<f64> {
        let mid = |j: &JumpEvent| 0.5 * (j.from_epsilon + j.to_epsilon);
        let up = self.jumps.iter().find(|j| j.from == Branch::Cold && j.to == Branch::Warm)?;
        let down = self.jumps.iter().find(|j| j.from == Branch::Warm && j.to == Branch::Cold)?;
        Some((mid(up) - mid(down)).abs())
    }
}

/// `lo → hi → lo` in `n` steps each way.
pub fn up_down_path(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let up = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64);
    let down = (0..n).rev().map(|i| lo + (hi - lo) * i as f64 / n as f64);
    up.chain(down).collect()
}

/// Quasi-static protocol: start at the coldest equilibrium of the first path value, then
/// integrate from the previous end state at every subsequent value.
pub fn hysteresis_loop(p: &ModelParams, eps_path: &[f64], opts: &IntegrationOptions) -> Result<HysteresisLoop> {
    if eps_path.is_empty() {
        return Err(Error::RangeInvalid("empty epsilon path".into()));
    }
    if let Some(bad) = eps_path.iter().find(|e| !(**e > 0.0 && **e < 2.0)) {
        return Err(Error::RangeInvalid(format!("epsilon_a {bad} outside (0, 2)")));
    }
    let first = p.with_epsilon(eps_path[0]);
    let mut state = find_equilibria(&first)?[0].state;
    let mut records: Vec<HysteresisRecord> = Vec::with_capacity(eps_path.len());
    let mut jumps = Vec::new();
    for &eps in eps_path {
        let pk = p.with_epsilon(eps);
        let tr = integrate(&pk, state, opts)?;
        let converged = tr.converged_state().is_some();
        state = tr.last().state;
        let branch = Branch::of(&pk, state);
        if let Some(prev) = records.last() {
            if prev.branch != branch {
                jumps.push(JumpEvent { from_epsilon: prev.epsilon_a, to_epsilon: eps, from: prev.branch, to: branch });
            }
        }
        records.push(HysteresisRecord { epsilon_a: eps, state, branch, converged });
    }
    Ok(HysteresisLoop { records, jumps })
}
