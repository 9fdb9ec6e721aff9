use serde::Serialize;
use tlebm_core::{
    axis_threshold_in, basin_map, blow_up_certificate, convexity_report, equilibrium_bounds, find_equilibria_with,
    greenhouse_jump, hysteresis_loop, integrate, phi_second_closed, sweep, threshold_integration_options,
    trace_separatrix, up_down_path, Axis, AxisThreshold, BlowupCertificate, BranchEvent, Equilibrium,
    EquilibriumBounds, GridSpec, JumpEvent, PhasePortrait, Rates, Sample, Termination, EPSILON_A0_GRID,
};

use crate::config::ScenarioConfig;
use crate::error::{CliError, EXIT_BLOWUP, EXIT_OK, EXIT_OTHER};
use crate::output::{Csv, OutputDir};

/// snake_case tag of a unit enum, as serde writes it.
fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn trajectory_csv(samples: &[Sample]) -> Csv {
    let mut c = Csv::new(&["t_seconds", "T_a", "T_s"]);
    for s in samples {
        c.row(vec![s.t.into(), s.state.t_a.into(), s.state.t_s.into()]);
    }
    c
}

#[derive(Serialize)]
struct SimulateVerdict {
    termination: Termination,
    accepted_steps: usize,
    rejected_steps: usize,
    samples: usize,
    certificate: Option<BlowupCertificate>,
    certificate_error: Option<String>,
}

pub fn simulate(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let p = cfg.model;
    let s0 = cfg.initial_state("simulate")?;
    let traj = integrate(&p, s0, &cfg.integrator)?;
    let (mut certificate, mut certificate_error) = (None, None);
    let code = match traj.termination {
        Termination::BlowUp { .. } => {
            if p.epsilon_a > 2.0 {
                match blow_up_certificate(&p, s0, &cfg.integrator) {
                    Ok(c) => certificate = Some(c),
                    Err(e) => certificate_error = Some(e.to_string()),
                }
            }
            EXIT_BLOWUP
        }
        Termination::StepLimit => EXIT_OTHER,
        _ => EXIT_OK,
    };
    out.csv("trajectory.csv", &trajectory_csv(&traj.samples))?;
    out.json(
        "verdict.json",
        &SimulateVerdict {
            termination: traj.termination,
            accepted_steps: traj.accepted_steps,
            rejected_steps: traj.rejected_steps,
            samples: traj.samples.len(),
            certificate,
            certificate_error,
        },
    )?;
    Ok(code)
}

#[derive(Serialize)]
struct EquilibriaOut {
    bounds: EquilibriumBounds,
    count: usize,
    equilibria: Vec<Equilibrium>,
}

pub fn equilibria(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let eqs = find_equilibria_with(&cfg.model, &cfg.equilibria)?;
    let mut c = Csv::new(&["index", "class", "verdict", "T_a", "T_s", "trace", "determinant", "residual"]);
    for (k, e) in eqs.iter().enumerate() {
        c.row(vec![
            k.into(),
            tag(&e.class).as_str().into(),
            tag(&e.stability.verdict).as_str().into(),
            e.state.t_a.into(),
            e.state.t_s.into(),
            e.stability.trace.unwrap_or(f64::NAN).into(),
            e.stability.determinant.unwrap_or(f64::NAN).into(),
            e.residual.into(),
        ]);
    }
    out.json(
        "equilibria.json",
        &EquilibriaOut { bounds: equilibrium_bounds(&cfg.model)?, count: eqs.len(), equilibria: eqs },
    )?;
    out.csv("equilibria.csv", &c)?;
    Ok(EXIT_OK)
}

pub fn sweep_cmd(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let sc = &cfg.sweep;
    let sw = sweep(&cfg.model, sc.param, (sc.lo, sc.hi), sc.steps)?;
    let mut c =
        Csv::new(&[sc.param.name(), "branch", "class", "verdict", "T_a", "T_s", "dT_a", "dT_s", "unproven_sign"]);
    for r in &sw.records {
        let (da, ds, un) = match r.derivative {
            Some(d) => (d.d_ta, d.d_ts, d.unproven_sign),
            None => (f64::NAN, f64::NAN, false),
        };
        c.row(vec![
            r.value.into(),
            r.branch.into(),
            tag(&r.equilibrium.class).as_str().into(),
            tag(&r.equilibrium.stability.verdict).as_str().into(),
            r.equilibrium.state.t_a.into(),
            r.equilibrium.state.t_s.into(),
            da.into(),
            ds.into(),
            un.into(),
        ]);
    }
    out.csv("sweep.csv", &c)?;
    out.json("sweep_events.json", &sw.events as &Vec<BranchEvent>)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct JumpOut {
    eps_star: f64,
    eps_plus: f64,
    old: Equilibrium,
    new: Equilibrium,
    termination: Termination,
    initial_rates: Rates,
    predicted_rates: Rates,
}

pub fn jump(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let j = greenhouse_jump(&cfg.model, cfg.jump.eps_star, cfg.jump.eps_plus, &cfg.integrator)?;
    out.csv("jump_trajectory.csv", &trajectory_csv(&j.trajectory.samples))?;
    out.json(
        "jump.json",
        &JumpOut {
            eps_star: j.eps_star,
            eps_plus: j.eps_plus,
            old: j.old,
            new: j.new,
            termination: j.trajectory.termination,
            initial_rates: j.initial_rates,
            predicted_rates: j.predicted_rates,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct HysteresisOut {
    jumps: Vec<JumpEvent>,
    width: Option<f64>,
}

pub fn hysteresis(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let h = &cfg.hysteresis;
    let path = up_down_path(h.lo, h.hi, h.steps);
    let lp = hysteresis_loop(&cfg.model, &path, &cfg.integrator)?;
    let mut c = Csv::new(&["step", "epsilon_a", "branch", "T_a", "T_s", "converged"]);
    for (k, r) in lp.records.iter().enumerate() {
        c.row(vec![
            k.into(),
            r.epsilon_a.into(),
            tag(&r.branch).as_str().into(),
            r.state.t_a.into(),
            r.state.t_s.into(),
            r.converged.into(),
        ]);
    }
    out.csv("hysteresis.csv", &c)?;
    out.json("hysteresis.json", &HysteresisOut { width: lp.width(), jumps: lp.jumps })?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BasinsOut {
    equilibria: Vec<Equilibrium>,
    threshold_horizontal: AxisThreshold,
    threshold_vertical: AxisThreshold,
    separatrix_saddle_distance: f64,
    grid: GridSpec,
    attractors: Vec<usize>,
    unconverged_cells: usize,
    boundary_components: usize,
}

pub fn basins(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let p = cfg.model;
    let b = &cfg.basins;
    let portrait = PhasePortrait::new(&p)?;
    portrait.bistable_triple()?;
    let topts = threshold_integration_options();
    let th = axis_threshold_in(&portrait, Axis::Horizontal, b.threshold_tol, &topts)?;
    let tv = axis_threshold_in(&portrait, Axis::Vertical, b.threshold_tol, &topts)?;
    let sep = trace_separatrix(&p, b.separatrix_points, b.separatrix_tol, &topts)?;
    let mut grid = GridSpec::from_bounds(&p, b.nx, b.ny)?;
    if let Some(r) = b.t_a_range {
        grid.t_a_range = r;
    }
    if let Some(r) = b.t_s_range {
        grid.t_s_range = r;
    }
    let map = basin_map(&p, &grid, &cfg.integrator)?;

    let mut cells = Csv::new(&["i", "j", "T_a", "T_s", "basin", "boundary"]);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let s = grid.center(i, j);
            let id = map.id(i, j).map_or(-1, |k| k as i64);
            cells.row(vec![
                i.into(),
                j.into(),
                s.t_a.into(),
                s.t_s.into(),
                id.into(),
                map.boundary[j * grid.nx + i].into(),
            ]);
        }
    }
    let mut curve = Csv::new(&["T_a", "T_s"]);
    for s in &sep.points {
        curve.row(vec![s.t_a.into(), s.t_s.into()]);
    }
    out.csv("basins.csv", &cells)?;
    out.csv("separatrix.csv", &curve)?;
    out.json(
        "basins.json",
        &BasinsOut {
            equilibria: map.equilibria.clone(),
            threshold_horizontal: th,
            threshold_vertical: tv,
            separatrix_saddle_distance: sep.saddle_distance,
            grid,
            attractors: map.attractors(),
            unconverged_cells: map.unconverged_cells(),
            boundary_components: map.boundary_components(),
        },
    )?;
    Ok(EXIT_OK)
}

pub fn blowup(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let s0 = cfg.initial_state("blowup")?;
    let c = blow_up_certificate(&cfg.model, s0, &cfg.integrator)?;
    out.json("certificate.json", &c)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ConvexityOut {
    epsilon_a: f64,
    n_star_min: f64,
    n_star_argmin: f64,
    n_star_sign_changes: usize,
    n_at_lower_end: f64,
    rho0: f64,
    epsilon_a0_bracket: (f64, f64),
    bracket_grid_points: usize,
    tol: f64,
    /// Φ″ over Ts = 1..=500 K at the model parameters.
    phi_second_min: f64,
    phi_second_negative_samples: usize,
}

pub fn convexity(cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
    let cc = &cfg.convexity;
    let r = convexity_report(cc.epsilon_a, cc.tol, cc.samples)?;
    let phi2: Vec<f64> = (1..=500).map(|t| phi_second_closed(&cfg.model, t as f64)).collect::<Result<_, _>>()?;
    let mut c = Csv::new(&["rho", "N", "N_star"]);
    for k in 0..r.rho.len() {
        c.row(vec![r.rho[k].into(), r.n[k].into(), r.n_star[k].into()]);
    }
    out.csv("convexity.csv", &c)?;
    out.json(
        "convexity.json",
        &ConvexityOut {
            epsilon_a: r.epsilon_a,
            n_star_min: r.n_star_min,
            n_star_argmin: r.n_star_argmin,
            n_star_sign_changes: r.n_star_sign_changes,
            n_at_lower_end: r.n_at_lower_end,
            rho0: r.rho0,
            epsilon_a0_bracket: r.epsilon_a0_bracket,
            bracket_grid_points: EPSILON_A0_GRID,
            tol: r.tol,
            phi_second_min: phi2.iter().copied().fold(f64::INFINITY, f64::min),
            phi_second_negative_samples: phi2.iter().filter(|v| **v < 0.0).count(),
        },
    )?;
    Ok(EXIT_OK)
}
