//! The five pipelines. Each one fills a [`RunOutput`]; the caller writes the
//! manifest whether or not the pipeline succeeds.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use selfsim_core::caloric::{caloric_residual, CaloricConfig};
use selfsim_core::datum::{caloric_data, CaloricData, Datum};
use selfsim_core::diagnostics::{
    decay_exponent_fit, epsilon_regularity_y, pressure_of, profile_residual, self_similarity_deviation, smallness_condition,
    CylinderRule, DecayFit, DiagnosticsReport, ParabolicCylinder, SpaceTimeField,
};
use selfsim_core::evolver::{CaloricBackground, EvolveConfig, EvolveState, Evolver, Trajectory};
use selfsim_core::interp::Rescaler;
use selfsim_core::io;
use selfsim_core::solver::{picard_solve, sigma_continuation, ProfileMap, ProfileState, SolveConfig};
use selfsim_core::stokes::{DuhamelOptions, DuhamelSchedule};
use selfsim_core::{
    x_gamma_norm, Error as CoreError, FourierWorkspace, GridSpec, Profile, SphereQuadrature, SphericalTrace, TensorProfile,
    VectorProfile,
};

use crate::config::{EvolveInit, RunConfig};
use crate::error::CliError;
use crate::output::{key_value_text, Cell, RunOutput};

pub const V_HAT: &str = "v_hat.ssvf";
pub const H_HAT: &str = "h_hat.ssvf";

/// Thresholds of the `verify` pass flags.
pub const RESIDUAL_TOL: f64 = 1e-3;
pub const SELF_SIMILARITY_TOL: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Caloric,
    SolveProfile,
    Evolve,
    Verify,
    SweepSigma,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Caloric => "caloric",
            Command::SolveProfile => "solve-profile",
            Command::Evolve => "evolve",
            Command::Verify => "verify",
            Command::SweepSigma => "sweep-sigma",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    match cmd {
        Command::Caloric => caloric(cfg, out),
        Command::SolveProfile => solve_profile(cfg, out),
        Command::Evolve => evolve(cfg, out),
        Command::Verify => verify(cfg, out),
        Command::SweepSigma => sweep_sigma(cfg, out),
    }
}

pub fn grid(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    let g = &cfg.grid;
    Ok(match g.mask_radius {
        Some(m) => GridSpec::with_mask(g.half_width, g.n, m)?,
        None => GridSpec::new(g.half_width, g.n)?,
    })
}

/// Trace CSV: header, then one row per node of the `polar x azimuth` rule in
/// node order with columns `x, y, z, u1..u3, F11, F12, .., F33`. Directions
/// must match the rule to 1e-9.
pub fn read_trace(path: &Path, quad: &SphereQuadrature) -> Result<(SphericalTrace, SphericalTrace), CliError> {
    let unreadable = |msg: String| CliError::Unreadable {
        path: path.to_path_buf(),
        msg,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| unreadable(e.to_string()))?;
    let mut u = SphericalTrace::zeros(quad.clone(), 3);
    let mut f = SphericalTrace::zeros(quad.clone(), 9);
    let mut count = 0;
    for (node, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| unreadable(e.to_string()))?;
        if node >= quad.len() {
            return Err(unreadable(format!("more than {} rows", quad.len())));
        }
        if rec.len() != 15 {
            return Err(unreadable(format!("row {} has {} columns, expected 15", node + 1, rec.len())));
        }
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| unreadable(format!("row {}: {e}", node + 1)))?;
        let dir = quad.direction(node);
        if (0..3).any(|c| (vals[c] - dir[c]).abs() > 1e-9) {
            return Err(unreadable(format!("row {} is not at rule node {dir:?}", node + 1)));
        }
        u.values[node * 3..node * 3 + 3].copy_from_slice(&vals[3..6]);
        f.values[node * 9..node * 9 + 9].copy_from_slice(&vals[6..15]);
        count += 1;
    }
    if count != quad.len() {
        return Err(unreadable(format!("{count} rows, expected {}", quad.len())));
    }
    Ok((u, f))
}

pub fn datum(cfg: &RunConfig) -> Result<Datum, CliError> {
    let d = &cfg.datum;
    let quad = SphereQuadrature::new(d.polar, d.azimuth)?;
    Ok(match &d.trace_file {
        Some(path) => {
            let (u, f) = read_trace(path, &quad)?;
            Datum::normalized(u, f, d.c_star)?
        }
        None => Datum::family(d.family, d.c_star, &quad)?,
    })
}

fn caloric_stage(cfg: &RunConfig) -> Result<(Datum, CaloricData), CliError> {
    let d = datum(cfg)?;
    let data = caloric_data(&d, grid(cfg)?, cfg.gamma, &CaloricConfig::default())?;
    Ok((d, data))
}

fn solve_config(cfg: &RunConfig, schedule: Vec<f64>) -> SolveConfig {
    let s = &cfg.solve;
    SolveConfig {
        sigma_schedule: schedule,
        damping: s.damping,
        tol_fixed_point: s.tol,
        max_iters: s.max_iters,
        anderson_depth: s.anderson_depth,
        norm_ceiling: s.norm_ceiling,
    }
}

fn profile_map(cfg: &RunConfig, data: CaloricData) -> Result<ProfileMap, CliError> {
    let opts = DuhamelOptions {
        far_field_exponent: cfg.solve.far_field_exponent,
        ..DuhamelOptions::default()
    };
    Ok(ProfileMap::new(data, DuhamelSchedule::new(cfg.solve.duhamel_nodes)?, opts)?)
}

fn final_sigma(cfg: &RunConfig) -> f64 {
    *cfg.solve.sigma_schedule.last().expect("validated schedule is nonempty")
}

/// `(max over the shell of |f|, radius where it is attained)` on shells of
/// width `h`, out to `L`.
fn radial_sup<const C: usize>(p: &Profile<C>) -> Vec<(f64, f64)> {
    let g = p.grid;
    let h = g.spacing();
    let shells = (g.half_width / h).floor() as usize;
    let mut best = vec![(0.0_f64, 0.0_f64); shells];
    for idx in 0..g.len() {
        let r = g.radius(idx);
        let s = (r / h).floor() as usize;
        if s >= shells || !p.counts(idx) {
            continue;
        }
        let m = p.magnitude(idx);
        if m > best[s].0 {
            best[s] = (m, r);
        }
    }
    best.into_iter().filter(|(m, _)| *m > 0.0).map(|(m, r)| (r, m)).collect()
}

fn caloric(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let (d, data) = caloric_stage(cfg)?;
    out.dump("caloric_u0.ssvf", &data.u0.field)?;
    out.dump("caloric_g0.ssvf", &data.g0.field)?;
    let ru = caloric_residual(&data.u0.field, 1.0);
    let rg = caloric_residual(&data.g0.field, 1.0);
    out.csv(
        "caloric_summary.csv",
        &["field", "trace_sup", "max_abs", "heat_residual"],
        &[
            vec![Cell::S("U0".into()), Cell::F(data.u0.c_star), Cell::F(data.u0.field.max_abs()), Cell::F(ru)],
            vec![Cell::S("G0".into()), Cell::F(data.g0.c_star), Cell::F(data.g0.field.max_abs()), Cell::F(rg)],
        ],
    )?;
    let su = radial_sup(&data.u0.field);
    let sg = radial_sup(&data.g0.field);
    let rows: Vec<Vec<Cell>> = su
        .iter()
        .map(|&(r, m)| vec![Cell::S("U0".into()), Cell::F(r), Cell::F(m), Cell::F(r * m)])
        .chain(sg.iter().map(|&(r, m)| vec![Cell::S("G0".into()), Cell::F(r), Cell::F(m), Cell::F(r * m)]))
        .collect();
    out.csv("caloric_radial.csv", &["field", "r", "sup", "r_times_sup"], &rows)?;
    out.metric("c_star", d.c_star);
    out.metric("u0_max_abs", data.u0.field.max_abs());
    out.metric("g0_max_abs", data.g0.field.max_abs());
    out.metric("u0_heat_residual", ru);
    out.metric("g0_heat_residual", rg);
    Ok(())
}

fn solve_profile(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let (_, data) = caloric_stage(cfg)?;
    let map = profile_map(cfg, data)?;
    let stages = sigma_continuation(&map, &solve_config(cfg, cfg.solve.sigma_schedule.clone()))?;
    let mut rows = Vec::new();
    let mut history = Vec::new();
    for (k, st) in stages.iter().enumerate() {
        let ratio = st.contraction_ratios.iter().copied().fold(0.0, f64::max);
        rows.push(vec![
            Cell::I(k as i64),
            Cell::F(st.state.sigma),
            Cell::I(st.iterations as i64),
            Cell::F(st.final_residual()),
            Cell::F(ratio),
            Cell::F(st.norm),
            Cell::F(x_gamma_norm(&st.state.v_hat, cfg.gamma).value),
        ]);
        for (it, r) in st.residual_history.iter().enumerate() {
            history.push(vec![Cell::I(k as i64), Cell::F(st.state.sigma), Cell::I(it as i64), Cell::F(*r)]);
        }
    }
    out.csv(
        "solve_sigma.csv",
        &["stage", "sigma", "iterations", "residual", "max_contraction_ratio", "norm", "v_hat_x_gamma"],
        &rows,
    )?;
    out.csv("solve_history.csv", &["stage", "sigma", "iteration", "residual"], &history)?;
    let last = stages.last().expect("nonempty schedule");
    out.dump(V_HAT, &last.state.v_hat)?;
    out.dump(H_HAT, &last.state.h_hat)?;
    let ws = FourierWorkspace::new(map.grid())?;
    let pr = profile_residual(&last.state.v_hat, &last.state.h_hat, &map.data, last.state.sigma, &ws)?;
    out.metric("sigma", last.state.sigma);
    out.metric("iterations", last.iterations);
    out.metric("fixed_point_residual", last.final_residual());
    out.metric("norm", last.norm);
    out.metric("v_hat_x_gamma", x_gamma_norm(&last.state.v_hat, cfg.gamma).value);
    out.metric("profile_residual_max_abs", pr.max_abs());
    out.metric("profile_residual_scale", pr.scale);
    Ok(())
}

fn load_profiles(cfg: &RunConfig, dir: &Path) -> Result<(VectorProfile, TensorProfile), CliError> {
    let load = |name: &str| {
        let path = dir.join(name);
        if !path.exists() {
            return Err(CliError::Unreadable {
                path,
                msg: "missing; run solve-profile first".into(),
            });
        }
        Ok(path)
    };
    let (pv, ph) = (load(V_HAT)?, load(H_HAT)?);
    let v: VectorProfile = io::load(&pv, cfg.grid.mask_radius, cfg.gamma)?;
    let h: TensorProfile = io::load(&ph, cfg.grid.mask_radius, cfg.gamma)?;
    let g = grid(cfg)?;
    if v.grid.n != g.n || v.grid.half_width != g.half_width || h.grid != v.grid {
        return Err(CliError::Core(CoreError::GridMismatch("stored profile", "configured grid")));
    }
    Ok((v, h))
}

/// `t^{-1/2} f(x / sqrt t)`, zero where the rescaled point leaves the box.
fn at_time<const C: usize>(p: &Profile<C>, t: f64) -> Profile<C> {
    let rt = t.sqrt();
    let resc = Rescaler::new(p.grid, 1.0 / rt);
    let mut o = Profile::zeros(p.grid, p.gamma);
    for (src, dst) in p.comps.iter().zip(o.comps.iter_mut()) {
        resc.apply(src, dst);
        dst.iter_mut().for_each(|x| *x /= rt);
    }
    o
}

fn evolve_run(cfg: &RunConfig, d: &Datum, v: Option<(&VectorProfile, &TensorProfile)>) -> Result<Trajectory, CliError> {
    let e = &cfg.evolve;
    let g = grid(cfg)?;
    let ecfg = EvolveConfig {
        dt: e.dt,
        dt_min: e.dt_min,
        picard_iters: e.picard_iters,
        project_initial: false,
        ..EvolveConfig::default()
    };
    let ev = Evolver::new(g, ecfg)?.with_background(CaloricBackground::new(d, CaloricConfig::default()));
    let mut init = EvolveState::zeros(g, e.t0, final_sigma(cfg));
    if let Some((vh, hh)) = v {
        if e.t0 < 1.0 {
            log::warn!("t0 < 1: the rescaled profile is cut off near the box edge");
        }
        init.u = at_time(vh, e.t0);
        init.f = at_time(hh, e.t0);
    }
    Ok(ev.evolve(&init, e.t1)?)
}

fn evolve(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let d = datum(cfg)?;
    let profiles = match cfg.evolve.init {
        EvolveInit::Profile => Some(load_profiles(cfg, &out.dir)?),
        EvolveInit::Zero => None,
    };
    let tr = evolve_run(cfg, &d, profiles.as_ref().map(|(v, h)| (v, h)))?;
    let rows: Vec<Vec<Cell>> = tr
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::F(r.t),
                Cell::F(r.energy),
                Cell::F(r.dissipation),
                Cell::F(r.lm_u),
                Cell::F(r.lm_f),
                Cell::F(r.div_max),
                Cell::F(r.kappa),
            ]
        })
        .collect();
    out.csv(
        "evolve_trajectory.csv",
        &["t", "energy", "dissipation", "lm_u", "lm_f", "div_max", "kappa"],
        &rows,
    )?;
    out.dump("evolve_u.ssvf", &tr.final_state.u)?;
    out.dump("evolve_f.ssvf", &tr.final_state.f)?;
    out.metric("t_final", tr.final_state.t);
    out.metric("steps", tr.rows.len().saturating_sub(1));
    out.metric("rejected_steps", tr.rejected_steps);
    out.metric("monitor_kappa", tr.monitor.kappa);
    out.metric("monitor_warning", tr.monitor.warning);
    if let Some((v, h)) = &profiles {
        let dev = self_similarity_deviation(&tr.final_state, v, h, 0.25 * cfg.grid.half_width)?;
        out.metric("self_similarity_deviation", dev);
    }
    Ok(())
}

/// Reconstructed space-time fields on `[t0 - r^2, t0]`: correction, full
/// pressure, and the caloric parts.
struct Reconstruction {
    v: SpaceTimeField<3>,
    h: SpaceTimeField<9>,
    p: SpaceTimeField<1>,
    a: SpaceTimeField<3>,
    m: SpaceTimeField<9>,
}

fn reconstruct(
    v: &VectorProfile,
    h: &TensorProfile,
    data: &CaloricData,
    sigma: f64,
    ws: &FourierWorkspace,
    t_lo: f64,
    t_hi: f64,
) -> Result<Reconstruction, CliError> {
    const SLICES: usize = 5;
    let times: Vec<f64> = (0..SLICES)
        .map(|k| t_lo + (t_hi - t_lo) * k as f64 / (SLICES - 1) as f64)
        .collect();
    let u = data.u0.field.lincomb(1.0, v, 1.0)?;
    let f = data.g0.field.lincomb(1.0, h, 1.0)?;
    let p_hat = pressure_of(&u, &f, sigma, ws)?;
    let mut slices = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &t in &times {
        slices.0.push(at_time(v, t));
        slices.1.push(at_time(h, t));
        // pressure scales as t^{-1}
        slices.2.push(at_time(&p_hat, t).scaled(1.0 / t.sqrt()));
        slices.3.push(at_time(&data.u0.field, t));
        slices.4.push(at_time(&data.g0.field, t));
    }
    Ok(Reconstruction {
        v: SpaceTimeField::new(times.clone(), slices.0)?,
        h: SpaceTimeField::new(times.clone(), slices.1)?,
        p: SpaceTimeField::new(times.clone(), slices.2)?,
        a: SpaceTimeField::new(times.clone(), slices.3)?,
        m: SpaceTimeField::new(times, slices.4)?,
    })
}

#[derive(Debug, Serialize)]
struct VerifyOutcome {
    report: DiagnosticsReport,
    h_decay_fit: DecayFit,
    residual_pass: bool,
    decay_pass: bool,
    self_similarity_pass: Option<bool>,
    finite: bool,
    pass: bool,
}

fn verify(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let (d, data) = caloric_stage(cfg)?;
    let (v, h) = load_profiles(cfg, &out.dir)?;
    let g = v.grid;
    let ws = FourierWorkspace::new(g)?;
    let sigma = final_sigma(cfg);
    let pr = profile_residual(&v, &h, &data, sigma, &ws)?;
    let fit_v = decay_exponent_fit(&v, cfg.gamma)?;
    let fit_h = decay_exponent_fit(&h, cfg.gamma)?;

    let vc = &cfg.verify;
    let (r, t0) = (vc.cylinder_radius, vc.cylinder_time);
    let t_lo = t0 - r * r;
    // keep every ball inside the region where the rescaled data are defined
    let reach = (0.25 * g.half_width).min(0.9 * g.half_width * t_lo.sqrt().min(1.0) - r - 4.0 * g.spacing());
    if !(reach > 0.0) {
        return Err(CliError::BadRange {
            key: "verify.cylinder_time".into(),
            line: None,
            msg: format!("cylinders at t = {t0} with radius {r} do not fit the box"),
        });
    }
    let rec = reconstruct(&v, &h, &data, sigma, &ws, t_lo, t0)?;
    let rule = CylinderRule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let mut y_values = Vec::new();
    let mut cyl_rows = Vec::new();
    let mut smallness = 0.0_f64;
    for k in 0..vc.cylinders {
        // uniform in the ball of radius `reach`
        let x0 = loop {
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if x.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                break x.map(|c| c * reach);
            }
        };
        let cyl = ParabolicCylinder::new(x0, t0, r)?;
        let y = epsilon_regularity_y(&rec.v, &rec.h, &rec.p, &cyl, &rule)?;
        let s = smallness_condition(&rec.v, &rec.h, &rec.p, &rec.a, &rec.m, vc.m_exp, &cyl, &rule)?;
        smallness = smallness.max(s);
        cyl_rows.push(vec![
            Cell::I(k as i64),
            Cell::F(x0[0]),
            Cell::F(x0[1]),
            Cell::F(x0[2]),
            Cell::F(t0),
            Cell::F(r),
            Cell::F(y),
            Cell::F(s),
        ]);
        y_values.push((cyl, y));
    }

    let self_similarity_error = if vc.evolve {
        let tr = evolve_run(cfg, &d, Some((&v, &h)))?;
        Some(self_similarity_deviation(&tr.final_state, &v, &h, 0.25 * g.half_width)?)
    } else {
        None
    };

    let report = DiagnosticsReport {
        profile_residual: pr,
        energy_residual: None,
        y_values,
        smallness_lhs: (vc.cylinders > 0).then_some(smallness),
        decay_fit: Some(fit_v.clone()),
        self_similarity_error,
    };
    let residual_pass = report.profile_residual.max_abs() < RESIDUAL_TOL;
    let decay_pass = fit_v.pass && fit_h.pass;
    let self_similarity_pass = self_similarity_error.map(|e| e < SELF_SIMILARITY_TOL);
    let finite = report.is_finite();
    let pass = residual_pass && decay_pass && self_similarity_pass.unwrap_or(true) && finite;
    let outcome = VerifyOutcome {
        report,
        h_decay_fit: fit_h.clone(),
        residual_pass,
        decay_pass,
        self_similarity_pass,
        finite,
        pass,
    };

    let json = serde_json::to_value(&outcome).map_err(|e| CliError::Output(e.to_string()))?;
    out.text(
        "verify_report.json",
        &(serde_json::to_string_pretty(&json).map_err(|e| CliError::Output(e.to_string()))? + "\n"),
    )?;
    out.text("verify_report.txt", &key_value_text(&json))?;
    let decay_rows: Vec<Vec<Cell>> = [("v_hat", &fit_v), ("h_hat", &fit_h)]
        .iter()
        .flat_map(|(name, fit)| {
            fit.shells
                .iter()
                .map(move |&(r, s)| vec![Cell::S(name.to_string()), Cell::F(r), Cell::F(s)])
        })
        .collect();
    out.csv("verify_decay.csv", &["field", "r", "sup"], &decay_rows)?;
    out.csv(
        "verify_cylinders.csv",
        &["cylinder", "x", "y", "z", "t", "r", "y_excess", "smallness_lhs"],
        &cyl_rows,
    )?;

    out.metric("profile_residual_max_abs", outcome.report.profile_residual.max_abs());
    out.metric("decay_exponent_v", fit_v.exponent);
    out.metric("decay_exponent_h", fit_h.exponent);
    if let Some(e) = self_similarity_error {
        out.metric("self_similarity_error", e);
    }
    out.metric("pass", pass);
    if !pass {
        let mut failed = Vec::new();
        if !residual_pass {
            failed.push("profile residual");
        }
        if !decay_pass {
            failed.push("decay exponent");
        }
        if self_similarity_pass == Some(false) {
            failed.push("self-similarity");
        }
        if !finite {
            failed.push("non-finite values");
        }
        return Err(CliError::VerifyFailed(failed.join(", ")));
    }
    Ok(())
}

fn sweep_sigma(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let (_, data) = caloric_stage(cfg)?;
    let map = profile_map(cfg, data)?;
    let k = cfg.sweep.points;
    let sigmas: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let scfg = solve_config(cfg, sigmas.clone());
    let mut state = ProfileState::zero(map.grid(), cfg.gamma, 0.0);
    let mut rows = Vec::new();
    let mut last_good = None;
    let header = ["sigma", "iterations", "residual", "max_contraction_ratio", "norm", "v_hat_x_gamma"];
    for &sigma in &sigmas {
        state.sigma = sigma;
        match picard_solve(&state, &map, &scfg) {
            Ok(res) => {
                rows.push(vec![
                    Cell::F(sigma),
                    Cell::I(res.iterations as i64),
                    Cell::F(res.final_residual()),
                    Cell::F(res.contraction_ratios.iter().copied().fold(0.0, f64::max)),
                    Cell::F(res.norm),
                    Cell::F(x_gamma_norm(&res.state.v_hat, cfg.gamma).value),
                ]);
                state = res.state;
                last_good = Some(sigma);
            }
            Err(e) => {
                out.csv("sweep_sigma.csv", &header, &rows)?;
                out.metric("points_converged", rows.len());
                return Err(CoreError::ContinuationStalled {
                    last_good_sigma: last_good,
                    failed_sigma: sigma,
                    reason: e.to_string(),
                }
                .into());
            }
        }
    }
    out.csv("sweep_sigma.csv", &header, &rows)?;
    out.metric("points_converged", rows.len());
    Ok(())
}
