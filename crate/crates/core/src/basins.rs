//! Phase-plane structure: region labels, axis thresholds, separatrix and basin maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{equilibrium_bounds, find_equilibria, Equilibrium, EquilibriumClass, Verdict};
use crate::error::{Error, Result};
use crate::integrator::{integrate_observed, Control, IntegrationOptions, Termination};
use crate::model::{quartic, ModelParams, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    Q1,
    Q1p,
    Q2,
    Q3,
    Q3p,
    Q4,
    OnC1,
    OnC2,
    Exterior,
}

impl RegionLabel {
    /// Regions that no trajectory leaves.
    pub fn is_trapping(&self) -> bool {
        matches!(self, RegionLabel::Q1 | RegionLabel::Q1p | RegionLabel::Q3 | RegionLabel::Q3p)
    }
}

/// Cached equilibrium census for repeated region queries.
#[derive(Debug, Clone)]
pub struct PhasePortrait {
    pub params: ModelParams,
    pub equilibria: Vec<Equilibrium>,
    /// |gᵢ| below this (W·m⁻²) counts as lying on the curve Cᵢ.
    pub curve_tol: f64,
}

impl PhasePortrait {
    pub fn new(p: &ModelParams) -> Result<Self> {
        Ok(Self { params: *p, equilibria: find_equilibria(p)?, curve_tol: 1e-9 * p.q * p.coalbedo_s.beta_plus })
    }

    /// γa·F₁ without βa and γs·F₂.
    pub fn curve_functions(&self, s: State) -> (f64, f64) {
        let p = &self.params;
        let es = p.epsilon_a * p.sigma_b;
        let (qa, qs) = (quartic(s.t_a), quartic(s.t_s));
        let g1 = -p.lambda * (s.t_a - s.t_s) + es * qs - 2.0 * es * qa;
        let g2 = -p.lambda * (s.t_s - s.t_a) - p.sigma_b * qs + es * qa + p.r_s(s.t_s);
        (g1, g2)
    }

    pub fn classify(&self, s: State) -> RegionLabel {
        if !(s.t_a > 0.0 && s.t_s > 0.0) {
            return RegionLabel::Exterior;
        }
        let (g1, g2) = self.curve_functions(s);
        if g1.abs() <= self.curve_tol {
            return RegionLabel::OnC1;
        }
        if g2.abs() <= self.curve_tol {
            return RegionLabel::OnC2;
        }
        let mut unstable = self.equilibria.iter().filter(|e| e.stability.verdict != Verdict::AsymptoticallyStable);
        match (g1 > 0.0, g2 > 0.0) {
            (true, true) if unstable.any(|e| e.state.t_s < s.t_s) => RegionLabel::Q3p,
            (true, true) => RegionLabel::Q1,
            (false, false) if unstable.any(|e| e.state.t_s > s.t_s) => RegionLabel::Q1p,
            (false, false) => RegionLabel::Q3,
            (true, false) => RegionLabel::Q2,
            (false, true) => RegionLabel::Q4,
        }
    }

    /// The (cold, intermediate, warm) triple when the census is bistable.
    pub fn bistable_triple(&self) -> Result<[Equilibrium; 3]> {
        use EquilibriumClass::*;
        let e = &self.equilibria;
        let ok = e.len() == 3
            && e[0].class == Cold
            && e[1].class == Intermediate
            && e[2].class == Warm
            && e[0].stability.verdict == Verdict::AsymptoticallyStable
            && e[1].stability.verdict == Verdict::Unstable
            && e[2].stability.verdict == Verdict::AsymptoticallyStable;
        if ok {
            Ok([e[0], e[1], e[2]])
        } else {
            let census: Vec<String> = e.iter().map(|x| format!("{:?}/{:?}", x.class, x.stability.verdict)).collect();
            Err(Error::NotBistable { census: census.join(", ") })
        }
    }
}

/// Region label of a state; builds the equilibrium census on every call.
pub fn classify_region(p: &ModelParams, s: State) -> Result<RegionLabel> {
    Ok(PhasePortrait::new(p)?.classify(s))
}

/// Which stable equilibrium captured a start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capture {
    Cold,
    Warm,
    Undecided,
}

/// Integrate until the state lies strictly below or strictly above the saddle in both
/// components. The flow is cooperative and order preserving, so such a state converges
/// to the cold or warm equilibrium respectively.
///
/// Convergence detection is switched off: starts close to the separatrix linger near the
/// saddle long enough to pass the field and displacement tests before they peel away.
fn capture(p: &ModelParams, saddle: State, s0: State, opts: &IntegrationOptions) -> Result<Capture> {
    let margin = 1e-9 * saddle.t_s.max(1.0);
    let mut result = Capture::Undecided;
    let opts = IntegrationOptions { field_tol: f64::MIN_POSITIVE, ..*opts };
    let term = integrate_observed(p, s0, &opts, |_, s| {
        if s.t_a < saddle.t_a - margin && s.t_s < saddle.t_s - margin {
            result = Capture::Cold;
            Control::Stop
        } else if s.t_a > saddle.t_a + margin && s.t_s > saddle.t_s + margin {
            result = Capture::Warm;
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    if result == Capture::Undecided {
        if let Termination::Converged { state } = term {
            if state.dist(&saddle) > 1e-3 {
                result = if state.t_s < saddle.t_s { Capture::Cold } else { Capture::Warm };
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Starts (x, 0).
    Horizontal,
    /// Starts (0, x).
    Vertical,
}

impl Axis {
    pub fn point(&self, x: f64) -> State {
        match self {
            Axis::Horizontal => State::new(x, 0.0),
            Axis::Vertical => State::new(0.0, x),
        }
    }
}

/// Integration settings tight enough to resolve starts a micro-kelvin apart.
pub fn threshold_integration_options() -> IntegrationOptions {
    IntegrationOptions { rel_tol: 1e-12, abs_tol: 1e-10, ..Default::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisThreshold {
    pub axis: Axis,
    pub value: f64,
    /// Final bracket: `lo` goes cold, `hi` goes warm.
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
    pub initial_width: f64,
}

/// Threshold coordinate on an axis separating cold from warm capture, by bisection to width `tol`.
pub fn axis_threshold(p: &ModelParams, axis: Axis, tol: f64, opts: &IntegrationOptions) -> Result<AxisThreshold> {
    let portrait = PhasePortrait::new(p)?;
    axis_threshold_in(&portrait, axis, tol, opts)
}

pub fn axis_threshold_in(
    portrait: &PhasePortrait,
    axis: Axis,
    tol: f64,
    opts: &IntegrationOptions,
) -> Result<AxisThreshold> {
    if !(tol > 0.0) {
        return Err(Error::InvalidOptions { name: "tol", reason: format!("must be > 0, got {tol}") });
    }
    let p = &portrait.params;
    let [_, saddle, _] = portrait.bistable_triple()?;
    let saddle = saddle.state;
    let classify = |x: f64| capture(p, saddle, axis.point(x), opts);
    let mut lo = 0.0;
    if classify(lo)? != Capture::Cold {
        return Err(Error::NonConvergent(format!("origin not captured by the cold state on {axis:?} axis")));
    }
    let bounds = equilibrium_bounds(p)?;
    let mut hi = 1.5 * bounds.t_a_upper.max(bounds.t_s_upper);
    let mut found = false;
    for _ in 0..12 {
        match classify(hi)? {
            Capture::Warm => {
                found = true;
                break;
            }
            Capture::Cold => {
                lo = hi;
                hi *= 2.0;
            }
            Capture::Undecided => hi *= 1.0 + 1e-3,
        }
    }
    if !found {
        return Err(Error::NonConvergent(format!("no warm-captured start found on {axis:?} axis")));
    }
    let initial_width = hi - lo;
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match classify(mid)? {
            Capture::Cold => lo = mid,
            Capture::Warm => hi = mid,
            Capture::Undecided => {
                return Err(Error::NonConvergent(format!("start {mid} on {axis:?} axis stalled at the saddle")));
            }
        }
        iterations += 1;
    }
    Ok(AxisThreshold { axis, value: 0.5 * (lo + hi), lo, hi, iterations, initial_width })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separatrix {
    pub points: Vec<State>,
    pub anchor_horizontal: State,
    pub anchor_vertical: State,
    pub saddle: State,
    /// Distance from the saddle to the polyline.
    pub saddle_distance: f64,
    pub tol: f64,
}

fn segment_distance(p: State, a: State, b: State) -> f64 {
    let (dx, dy) = (b.t_a - a.t_a, b.t_s - a.t_s);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.t_a - a.t_a) * dx + (p.t_s - a.t_s) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (x, y) = (a.t_a + t * dx - p.t_a, a.t_s + t * dy - p.t_s);
    (x * x + y * y).sqrt()
}

/// Euclidean distance from `s` to a polyline.
pub fn polyline_distance(points: &[State], s: State) -> f64 {
    match points {
        [] => f64::INFINITY,
        [a] => segment_distance(s, *a, *a),
        _ => points.windows(2).map(|w| segment_distance(s, w[0], w[1])).fold(f64::INFINITY, f64::min),
    }
}

/// Resample a polyline to `n >= 2` points evenly spaced in arc length, keeping both ends.
fn resample(points: &[State], n: usize) -> Vec<State> {
    if points.len() < 2 || n < 2 {
        return points.iter().take(n.max(1)).copied().collect();
    }
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        let d = ((w[1].t_a - w[0].t_a).powi(2) + (w[1].t_s - w[0].t_s).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while k + 2 < cum.len() && cum[k + 1] < target {
            k += 1;
        }
        let seg = cum[k + 1] - cum[k];
        let t = if seg > 0.0 { ((target - cum[k]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (points[k], points[k + 1]);
        out.push(State::new(a.t_a + t * (b.t_a - a.t_a), a.t_s + t * (b.t_s - a.t_s)));
    }
    *out.last_mut().unwrap() = *points.last().unwrap();
    out
}

/// Arc from `s0` truncated at its closest approach to `saddle`.
fn arc_to_saddle(p: &ModelParams, saddle: State, s0: State, opts: &IntegrationOptions) -> Result<(Vec<State>, f64)> {
    let margin = 1e-9 * saddle.t_s.max(1.0);
    let mut pts = Vec::new();
    integrate_observed(p, s0, opts, |_, s| {
        pts.push(s);
        let below = s.t_a < saddle.t_a - margin && s.t_s < saddle.t_s - margin;
        let above = s.t_a > saddle.t_a + margin && s.t_s > saddle.t_s + margin;
        if below || above {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    let (k, d) = pts
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.dist(&saddle)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NonConvergent("empty arc".into()))?;
    pts.truncate(k + 1);
    Ok((pts, d))
}

/// Separatrix traced forward from both axis thresholds to the saddle.
pub fn trace_separatrix(p: &ModelParams, n_points: usize, tol: f64, opts: &IntegrationOptions) -> Result<Separatrix> {
    let portrait = PhasePortrait::new(p)?;
    let [_, saddle, _] = portrait.bistable_triple()?;
    let saddle = saddle.state;
    let th = axis_threshold_in(&portrait, Axis::Horizontal, tol, opts)?;
    let tv = axis_threshold_in(&portrait, Axis::Vertical, tol, opts)?;
    let anchor_horizontal = State::new(th.value, tol);
    let anchor_vertical = State::new(tol, tv.value);
    let (arc_h, dh) = arc_to_saddle(p, saddle, anchor_horizontal, opts)?;
    let (arc_v, dv) = arc_to_saddle(p, saddle, anchor_vertical, opts)?;
    let limit = 1e3 * tol;
    if dh > limit || dv > limit {
        return Err(Error::NonConvergent(format!(
            "closest approach to the saddle {dh:e} K (horizontal) and {dv:e} K (vertical) exceeds {limit:e} K"
        )));
    }
    let len = |a: &[State]| a.windows(2).map(|w| w[0].dist(&w[1])).sum::<f64>();
    let n = n_points.max(4);
    let (lh, lv) = (len(&arc_h), len(&arc_v));
    let nh = ((n as f64 * lh / (lh + lv).max(f64::MIN_POSITIVE)).round() as usize).clamp(2, n - 2);
    let mut points = resample(&arc_h, nh);
    let mut back = resample(&arc_v, n - nh);
    back.reverse();
    points.extend(back);
    let saddle_distance = polyline_distance(&points, saddle);
    Ok(Separatrix { points, anchor_horizontal, anchor_vertical, saddle, saddle_distance, tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub t_a_range: (f64, f64),
    pub t_s_range: (f64, f64),
}

impl GridSpec {
    /// `nx × ny` cells over the equilibrium bounds scaled by 1.5.
    pub fn from_bounds(p: &ModelParams, nx: usize, ny: usize) -> Result<Self> {
        let b = equilibrium_bounds(p)?;
        Ok(Self { nx, ny, t_a_range: (0.0, 1.5 * b.t_a_upper), t_s_range: (0.0, 1.5 * b.t_s_upper) })
    }

    /// Centre of cell (i along Ta, j along Ts).
    pub fn center(&self, i: usize, j: usize) -> State {
        let (a0, a1) = self.t_a_range;
        let (s0, s1) = self.t_s_range;
        State::new(
            a0 + (a1 - a0) * (i as f64 + 0.5) / self.nx as f64,
            s0 + (s1 - s0) * (j as f64 + 0.5) / self.ny as f64,
        )
    }
}

/// Attractor index per cell, row-major with `j` (Ts) as the row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinMap {
    pub grid: GridSpec,
    pub equilibria: Vec<Equilibrium>,
    pub ids: Vec<Option<usize>>,
    pub boundary: Vec<bool>,
}

impl BasinMap {
    pub fn id(&self, i: usize, j: usize) -> Option<usize> {
        self.ids[j * self.grid.nx + i]
    }

    /// Distinct attractor ids present, ascending.
    pub fn attractors(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.ids.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn unconverged_cells(&self) -> usize {
        self.ids.iter().filter(|x| x.is_none()).count()
    }

    /// Number of 8-connected components of boundary cells.
    pub fn boundary_components(&self) -> usize {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut seen = vec![false; nx * ny];
        let mut count = 0;
        for start in 0..nx * ny {
            if !self.boundary[start] || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(c) = stack.pop() {
                let (i, j) = ((c % nx) as isize, (c / nx) as isize);
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let (a, b) = (i + di, j + dj);
                        if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                            continue;
                        }
                        let n = b as usize * nx + a as usize;
                        if self.boundary[n] && !seen[n] {
                            seen[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
        count
    }
}

/// Integrate every cell centre to convergence and record the nearest equilibrium (within 1e-3 K).
pub fn basin_map(p: &ModelParams, grid: &GridSpec, opts: &IntegrationOptions) -> Result<BasinMap> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::InvalidOptions { name: "grid", reason: "nx and ny must be >= 1".into() });
    }
    let equilibria = find_equilibria(p)?;
    opts.validate()?;
    let (nx, ny) = (grid.nx, grid.ny);
    let ids: Vec<Option<usize>> = (0..nx * ny)
        .into_par_iter()
        .map(|c| {
            let s0 = grid.center(c % nx, c / nx);
            match integrate_observed(p, s0, opts, |_, _| Control::Continue) {
                Ok(Termination::Converged { state }) => equilibria
                    .iter()
                    .enumerate()
                    .map(|(k, e)| (k, e.state.dist(&state)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .filter(|(_, d)| *d <= 1e-3)
                    .map(|(k, _)| k),
                _ => None,
            }
        })
        .collect();
    let mut boundary = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let me = ids[j * nx + i];
            let neighbours = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
            boundary[j * nx + i] = neighbours.iter().any(|&(a, b)| a < nx && b < ny && ids[b * nx + a] != me);
        }
    }
    Ok(BasinMap { grid: *grid, equilibria, ids, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;
    use crate::model::{vector_field, FOURTH_ROOT_2};
    use proptest::prelude::*;

    #[test]
    fn labels_on_and_off_curves() {
        let p = ModelParams::default();
        let pp = PhasePortrait::new(&p).unwrap();
        let ts = 200.0;
        let s = State::new(ts / FOURTH_ROOT_2, ts);
        assert_eq!(pp.classify(s), RegionLabel::OnC1);
        let f = vector_field(&p, s);
        assert!(f.d_ts > 0.0 && f.d_ta.abs() < 1e-18);
        assert_eq!(pp.classify(State::new(100.0, 150.0)), RegionLabel::Q1);
        assert_eq!(pp.classify(State::new(320.0, 340.0)), RegionLabel::Q3);
        assert_eq!(pp.classify(State::new(0.0, 10.0)), RegionLabel::Exterior);
    }

    #[test]
    fn monostable_has_no_primed_regions() {
        let p = ModelParams::default().with_q(600.0);
        let pp = PhasePortrait::new(&p).unwrap();
        assert_eq!(pp.equilibria.len(), 1);
        for i in 1..40 {
            for j in 1..40 {
                let l = pp.classify(State::new(10.0 * i as f64, 10.0 * j as f64));
                assert!(!matches!(l, RegionLabel::Q1p | RegionLabel::Q3p));
            }
        }
        assert!(matches!(pp.bistable_triple(), Err(Error::NotBistable { .. })));
    }

    #[test]
    fn not_bistable_errors() {
        let p = ModelParams::default().with_q(600.0);
        let o = threshold_integration_options();
        assert!(matches!(axis_threshold(&p, Axis::Horizontal, 1e-3, &o), Err(Error::NotBistable { .. })));
        assert!(matches!(trace_separatrix(&p, 50, 1e-3, &o), Err(Error::NotBistable { .. })));
    }

    #[test]
    fn threshold_iterations_follow_bisection() {
        let p = ModelParams::default();
        let t = axis_threshold(&p, Axis::Horizontal, 1e-4, &threshold_integration_options()).unwrap();
        let expected = (t.initial_width / 1e-4).log2().ceil() as usize;
        assert_eq!(t.iterations, expected);
        assert!(t.hi - t.lo <= 1e-4);
    }

    fn label_sequence(pp: &PhasePortrait, s0: State) -> Vec<RegionLabel> {
        let p = pp.params;
        let tr = integrate(&p, s0, &IntegrationOptions::default()).unwrap();
        let mut labels: Vec<RegionLabel> = tr
            .samples
            .iter()
            .filter(|s| vector_field(&p, s.state).norm() > 1e-11)
            .map(|s| pp.classify(s.state))
            .filter(|l| !matches!(l, RegionLabel::OnC1 | RegionLabel::OnC2 | RegionLabel::Exterior))
            .collect();
        labels.dedup();
        labels
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn trapping_regions_hold(ta in 1.0..400.0f64, ts in 1.0..400.0f64, lambda in prop_oneof![Just(0.0), Just(20.0)]) {
            let p = ModelParams::default().with_lambda(lambda).with_q(if lambda == 0.0 { 400.0 } else { 560.0 });
            let pp = PhasePortrait::new(&p).unwrap();
            let seq = label_sequence(&pp, State::new(ta, ts));
            if let Some(k) = seq.iter().position(|l| l.is_trapping()) {
                prop_assert_eq!(seq.len(), k + 1, "left a trapping region: {:?}", seq);
            }
        }

        #[test]
        fn q2_exits_monostable(ta in 1.0..400.0f64, ts in 1.0..400.0f64) {
            let p = ModelParams::default().with_q(600.0);
            let pp = PhasePortrait::new(&p).unwrap();
            let seq = label_sequence(&pp, State::new(ta, ts));
            for w in seq.windows(2) {
                if w[0] == RegionLabel::Q2 {
                    prop_assert!(matches!(w[1], RegionLabel::Q1 | RegionLabel::Q3), "{:?}", seq);
                }
            }
        }

        #[test]
        fn monotone_inside_q1_and_q3(ta in 1.0..400.0f64, ts in 1.0..400.0f64) {
            let p = ModelParams::default();
            let pp = PhasePortrait::new(&p).unwrap();
            let tr = integrate(&p, State::new(ta, ts), &IntegrationOptions::default()).unwrap();
            for w in tr.samples.windows(2) {
                let l = pp.classify(w[0].state);
                let (da, ds) = (w[1].state.t_a - w[0].state.t_a, w[1].state.t_s - w[0].state.t_s);
                if l == RegionLabel::Q1 {
                    prop_assert!(da >= -1e-9 && ds >= -1e-9);
                }
                if l == RegionLabel::Q3 {
                    prop_assert!(da <= 1e-9 && ds <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn monostable_basin_single_id() {
        let p = ModelParams::default().with_q(600.0);
        let g = GridSpec::from_bounds(&p, 24, 24).unwrap();
        let m = basin_map(&p, &g, &IntegrationOptions::default()).unwrap();
        assert_eq!(m.attractors(), vec![0]);
        assert_eq!(m.unconverged_cells(), 0);
        assert!(m.boundary.iter().all(|b| !b));
    }

    #[test]
    fn resample_keeps_ends() {
        let pts = vec![State::new(0.0, 0.0), State::new(1.0, 0.0), State::new(1.0, 3.0)];
        let r = resample(&pts, 5);
        assert_eq!(r.len(), 5);
        assert_eq!(r[0], pts[0]);
        assert_eq!(r[4], pts[2]);
        assert!((r[1].t_a - 1.0).abs() < 1e-12 && r[1].t_s.abs() < 1e-12);
    }
}
