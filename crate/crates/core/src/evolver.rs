//! Mild-solution time stepping of the full system on the periodic box.
//!
//! The evolved state `w = (u, F)` is advanced with a second-order exponential
//! integrator: the nonlinear term is interpolated linearly across the step and
//! the heat semigroup is integrated exactly against it,
//!
//! `w(t+dt) = e^{dt Delta} w(t) + dt [phi1 - phi2] N(t) + dt phi2 N(t+dt)`,
//!
//! with `N(t+dt)` found by fixed-point sub-iteration. An optional caloric
//! background `b(x, t) = t^{-1/2} W0(x / sqrt t)` is added to the state before
//! the nonlinear terms are formed; it solves the heat equation exactly, so
//! `u = b + w` is a mild solution whenever `w` is.

use std::sync::{Arc, Mutex};

use log::{debug, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::caloric::{caloric_components, CaloricConfig};
use crate::datum::Datum;
use crate::error::{Error, Result};
use crate::exec;
use crate::field::{Profile, TensorProfile, VectorProfile};
use crate::grid::GridSpec;
use crate::spectral::FourierWorkspace;
use crate::sphere::SphericalTrace;
use crate::stokes::leray_in_place;

/// Symmetric index pairs of the velocity flux, in storage order.
const SYM: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
/// Strictly upper pairs of each antisymmetric `Q_j`.
const ANTI: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveState {
    /// Evolved velocity (the part beyond the background, if any).
    pub u: VectorProfile,
    /// Evolved deformation tensor, component `a * 3 + j`.
    pub f: TensorProfile,
    pub t: f64,
    pub sigma: f64,
}

impl EvolveState {
    pub fn zeros(grid: GridSpec, t: f64, sigma: f64) -> Self {
        EvolveState {
            u: Profile::zeros(grid, 0.0),
            f: Profile::zeros(grid, 0.0),
            t,
            sigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub dt: f64,
    /// Steps are halved on rejection down to this size.
    pub dt_min: f64,
    pub picard_iters: usize,
    /// Relative L2 change that ends the sub-iteration.
    pub sub_tol: f64,
    /// Lebesgue exponent of the tracked norms.
    pub m: f64,
    /// Midpoint nodes of the initial contraction monitor (0 disables it).
    pub monitor_nodes: usize,
    /// Monitor window; `None` uses the whole run.
    pub window: Option<f64>,
    /// Leray-project the initial state. Samples of whole-space data are not
    /// periodic; projecting them adds a harmonic gradient across the box.
    pub project_initial: bool,
    /// Keep every `k`-th accepted state (and the initial one); 0 keeps none.
    pub record_every: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            dt: 0.1,
            dt_min: 1e-6,
            picard_iters: 12,
            sub_tol: 1e-10,
            m: 3.0,
            monitor_nodes: 4,
            window: None,
            project_initial: true,
            record_every: 0,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt) {
            return bad(format!("dt_min must lie in (0, dt], got {}", self.dt_min));
        }
        if self.picard_iters == 0 {
            return bad("picard_iters must be at least 1".into());
        }
        if !(self.sub_tol > 0.0) {
            return bad(format!("sub_tol must be positive, got {}", self.sub_tol));
        }
        if !(self.m >= 3.0) {
            return bad(format!("m must be >= 3, got {}", self.m));
        }
        Ok(())
    }
}

/// Caloric extension of degree -1 data, evaluated exactly at any `t > 0`.
#[derive(Debug)]
pub struct CaloricBackground {
    joint: SphericalTrace,
    cfg: CaloricConfig,
    cache: Mutex<Vec<(f64, Arc<Vec<Vec<f64>>>)>>,
}

impl CaloricBackground {
    pub fn new(datum: &Datum, cfg: CaloricConfig) -> Self {
        let mut joint = SphericalTrace::zeros(datum.u0.quad.clone(), 12);
        for node in 0..joint.quad.len() {
            joint.values[node * 12..node * 12 + 3].copy_from_slice(datum.u0.node_values(node));
            joint.values[node * 12 + 3..node * 12 + 12].copy_from_slice(datum.f0.node_values(node));
        }
        CaloricBackground {
            joint,
            cfg,
            cache: Mutex::new(Vec::new()),
        }
    }

    /// The 12 components `(u, F)` at time `t` on `grid`.
    pub fn fields(&self, grid: GridSpec, t: f64) -> Result<Arc<Vec<Vec<f64>>>> {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("background needs t > 0, got {t}")));
        }
        if let Some((_, f)) = self.cache.lock().expect("cache lock").iter().find(|(s, _)| *s == t) {
            return Ok(f.clone());
        }
        // Nodes x of `grid` map to the nodes x / sqrt(t) of a shrunken grid.
        let rt = t.sqrt();
        let scaled = GridSpec::with_mask(grid.half_width / rt, grid.n, grid.origin_mask_radius / rt)?;
        let mut comps = caloric_components(&self.joint, scaled, &self.cfg)?;
        for c in comps.iter_mut() {
            c.iter_mut().for_each(|v| *v /= rt);
        }
        let f = Arc::new(comps);
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= 4 {
            cache.remove(0);
        }
        cache.push((t, f.clone()));
        Ok(f)
    }
}

/// Smallness check of the mild-solution iteration over one window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractionMonitor {
    /// `||u1|| + ||F1||` in `L^{5m/3}` over the window, `(u1, F1)` the linear flow.
    pub kappa: f64,
    /// Measured ratio `||B(u1, u1)|| / kappa^2` of the bilinear term.
    pub c0_estimate: f64,
    pub t_star: f64,
    /// Set when `kappa >= 1 / (4 C0)`.
    pub warning: bool,
    /// Space-time `L^{5m/3}` norm of the computed solution so far.
    pub running: f64,
}

/// One trajectory sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    /// `1/2 int |w|^2` of the evolved component.
    pub energy: f64,
    /// `int |grad w|^2` of the evolved component.
    pub dissipation: f64,
    /// `L^m` norms of the full velocity and deformation tensor.
    pub lm_u: f64,
    pub lm_f: f64,
    /// Max spectral divergence over `u` and the columns of `F`.
    pub div_max: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub monitor: ContractionMonitor,
    pub final_state: EvolveState,
    pub rejected_steps: usize,
    pub states: Vec<EvolveState>,
}

/// Spectral state: `u` in slots 0..3, `F` in 3..12.
type Spec = Vec<Vec<Complex64>>;

pub struct Evolver {
    pub ws: FourierWorkspace,
    pub cfg: EvolveConfig,
    background: Option<CaloricBackground>,
}

impl Evolver {
    pub fn new(grid: GridSpec, cfg: EvolveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Evolver {
            ws: FourierWorkspace::new(grid)?,
            cfg,
            background: None,
        })
    }

    pub fn with_background(mut self, background: CaloricBackground) -> Self {
        self.background = Some(background);
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.ws.grid
    }

    fn background_at(&self, t: f64) -> Result<Option<Arc<Vec<Vec<f64>>>>> {
        self.background.as_ref().map(|b| b.fields(self.grid(), t)).transpose()
    }

    fn to_spec(&self, s: &EvolveState) -> Result<Spec> {
        let g = self.grid();
        if s.u.grid != g || s.f.grid != g {
            return Err(Error::GridMismatch("state", "evolver"));
        }
        let phys: Vec<&[f64]> = s.u.comps.iter().chain(s.f.comps.iter()).map(|c| c.as_slice()).collect();
        let mut spec = self.forward_all(&phys);
        if self.cfg.project_initial {
            self.project(&mut spec);
        } else {
            spec.iter_mut().for_each(|c| self.ws.dealias(c));
        }
        Ok(spec)
    }

    fn forward_all(&self, phys: &[&[f64]]) -> Spec {
        let mut out = Vec::with_capacity(phys.len());
        for pair in phys.chunks(2) {
            if let [a, b] = pair {
                let (x, y) = self.ws.forward_pair(a, b);
                out.push(x);
                out.push(y);
            } else {
                out.push(self.ws.forward(pair[0]));
            }
        }
        out
    }

    fn inverse_all(&self, spec: &Spec) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(spec.len());
        for pair in spec.chunks(2) {
            if let [a, b] = pair {
                let (x, y) = self.ws.inverse_pair(a, b);
                out.push(x);
                out.push(y);
            } else {
                out.push(self.ws.inverse(pair[0].clone()));
            }
        }
        out
    }

    /// Dealias and project `u` and every column of `F`.
    fn project(&self, spec: &mut Spec) {
        for c in spec.iter_mut() {
            self.ws.dealias(c);
        }
        let mut groups: Vec<[usize; 3]> = vec![[0, 1, 2]];
        groups.extend((0..3).map(|j| [3 + j, 6 + j, 9 + j]));
        for g in groups {
            let mut acc: [Vec<Complex64>; 3] = g.map(|c| std::mem::take(&mut spec[c]));
            leray_in_place(&self.ws, &mut acc);
            for (c, v) in g.into_iter().zip(acc) {
                spec[c] = v;
            }
        }
    }

    fn to_state(&self, phys: Vec<Vec<f64>>, t: f64, sigma: f64) -> EvolveState {
        let g = self.grid();
        let mut it = phys.into_iter();
        let u = std::array::from_fn(|_| it.next().expect("12 components"));
        let f = std::array::from_fn(|_| it.next().expect("12 components"));
        EvolveState {
            u: Profile {
                grid: g,
                comps: u,
                gamma: 0.0,
                masked: false,
            },
            f: Profile {
                grid: g,
                comps: f,
                gamma: 0.0,
                masked: false,
            },
            t,
            sigma,
        }
    }

    /// `sigma P div(F F^T - u u)` and `sigma div Q_j` of the full state.
    fn nonlinear(&self, phys: &[Vec<f64>], bg: Option<&Vec<Vec<f64>>>, sigma: f64) -> Spec {
        let n = self.grid().len();
        if sigma == 0.0 {
            return vec![vec![Complex64::default(); n]; 12];
        }
        let mut flat = vec![0.0; n * 15];
        exec::for_each_chunk_mut(&mut flat, 15, |idx, out| {
            let val = |c: usize| phys[c][idx] + bg.map_or(0.0, |b| b[c][idx]);
            let u: [f64; 3] = std::array::from_fn(val);
            let m: [f64; 9] = std::array::from_fn(|c| val(3 + c));
            for (s, &(a, b)) in SYM.iter().enumerate() {
                let gg: f64 = (0..3).map(|j| m[a * 3 + j] * m[b * 3 + j]).sum();
                out[s] = gg - u[a] * u[b];
            }
            for j in 0..3 {
                for (s, &(a, b)) in ANTI.iter().enumerate() {
                    out[6 + j * 3 + s] = m[a * 3 + j] * u[b] - u[a] * m[b * 3 + j];
                }
            }
        });
        let fields: Vec<Vec<f64>> = (0..15).map(|c| flat.iter().skip(c).step_by(15).copied().collect()).collect();
        let refs: Vec<&[f64]> = fields.iter().map(|v| v.as_slice()).collect();
        let hat = self.forward_all(&refs);
        let sym = |a: usize, b: usize| SYM.iter().position(|&p| p == (a.min(b), a.max(b))).expect("pair");
        let mut out: Spec = vec![vec![Complex64::default(); n]; 12];
        let scale = Complex64::new(0.0, sigma);
        for (b, slot) in out.iter_mut().enumerate().take(3) {
            exec::for_each_mut(slot, |idx, z| {
                let k = self.ws.kd(idx);
                *z = scale * (0..3).map(|a| k[a] * hat[sym(a, b)][idx]).sum::<Complex64>();
            });
        }
        for j in 0..3 {
            for b in 0..3 {
                // entry (a, b) of Q_j with sign from antisymmetry
                let terms: Vec<(usize, f64, usize)> = (0..3)
                    .filter(|&a| a != b)
                    .map(|a| {
                        let s = ANTI.iter().position(|&p| p == (a.min(b), a.max(b))).expect("pair");
                        (a, if a < b { 1.0 } else { -1.0 }, 6 + j * 3 + s)
                    })
                    .collect();
                exec::for_each_mut(&mut out[3 + b * 3 + j], |idx, z| {
                    let k = self.ws.kd(idx);
                    *z = scale * terms.iter().map(|&(a, sg, c)| sg * k[a] * hat[c][idx]).sum::<Complex64>();
                });
            }
        }
        self.project(&mut out);
        out
    }

    fn l2(spec: &Spec) -> f64 {
        spec.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// One sub-iterated step from `(w, N)` at `t`. Returns the new spectral
    /// state, its physical samples and `N` at `t + dt`.
    fn step_spec(
        &self,
        w: &Spec,
        nl: &Spec,
        t: f64,
        dt: f64,
        sigma: f64,
        picard_iters: usize,
    ) -> Result<(Spec, Vec<Vec<f64>>, Spec)> {
        let bg = self.background_at(t + dt)?;
        let coef: Vec<[f64; 3]> = exec::map_collect(self.grid().len(), |idx| etd2(self.ws.k2(idx) * dt, dt));
        let advance = |next: &Spec| -> Spec {
            (0..12)
                .map(|c| {
                    exec::map_collect(coef.len(), |idx| {
                        let [e, a, b] = coef[idx];
                        e * w[c][idx] + a * nl[c][idx] + b * next[c][idx]
                    })
                })
                .collect()
        };
        let mut cur = advance(nl);
        for it in 0..picard_iters {
            let phys = self.inverse_all(&cur);
            let next_nl = self.nonlinear(&phys, bg.as_deref(), sigma);
            let new = advance(&next_nl);
            let diff: Spec = new.iter().zip(&cur).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect();
            let (d, s) = (Self::l2(&diff), Self::l2(&new));
            if !(d.is_finite() && s.is_finite()) {
                return Err(Error::StepRejected { t, dt });
            }
            if d <= self.cfg.sub_tol * s || d == 0.0 {
                debug!("step t={t:.4} dt={dt:.3e}: {} sub-iterations", it + 1);
                let phys = self.inverse_all(&new);
                return Ok((new, phys, next_nl));
            }
            cur = new;
        }
        Err(Error::StepRejected { t, dt })
    }

    /// Advance `state` by `dt` with at most `picard_iters` sub-iterations.
    pub fn evolve_step(&self, state: &EvolveState, dt: f64, picard_iters: usize) -> Result<EvolveState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let w = self.to_spec(state)?;
        let phys = self.inverse_all(&w);
        let bg = self.background_at(state.t)?;
        let nl = self.nonlinear(&phys, bg.as_deref(), state.sigma);
        let (_, phys, _) = self.step_spec(&w, &nl, state.t, dt, state.sigma, picard_iters.max(1))?;
        Ok(self.to_state(phys, state.t + dt, state.sigma))
    }

    /// Integrate from `init.t` to `t1`, halving rejected steps.
    pub fn evolve(&self, init: &EvolveState, t1: f64) -> Result<Trajectory> {
        let t0 = init.t;
        if !(t1 > t0) {
            return Err(Error::InvalidArgument(format!("need t1 > t0, got t0={t0}, t1={t1}")));
        }
        if self.background.is_some() && !(t0 > 0.0) {
            return Err(Error::InvalidArgument("a caloric background needs t0 > 0".into()));
        }
        let sigma = init.sigma;
        let p = 5.0 * self.cfg.m / 3.0;
        let mut w = self.to_spec(init)?;
        let mut phys = self.inverse_all(&w);
        let mut bg = self.background_at(t0)?;
        let mut nl = self.nonlinear(&phys, bg.as_deref(), sigma);

        let mut monitor = self.monitor(&w, t0, self.cfg.window.unwrap_or(t1 - t0), sigma)?;
        let mut acc_p = [0.0f64; 2];
        let mut last_p = self.full_norms(&phys, bg.as_deref(), p);
        let mut rows = vec![self.row(&w, &phys, bg.as_deref(), t0, 0.0)];
        let every = self.cfg.record_every;
        let mut states = Vec::new();
        if every > 0 {
            states.push(self.to_state(phys.clone(), t0, sigma));
        }
        let (mut t, mut dt, mut rejected) = (t0, self.cfg.dt, 0usize);
        while t < t1 - 1e-12 * t1.abs().max(1.0) {
            let h = dt.min(t1 - t);
            match self.step_spec(&w, &nl, t, h, sigma, self.cfg.picard_iters) {
                Ok((nw, nphys, nnl)) => {
                    t += h;
                    (w, phys, nl) = (nw, nphys, nnl);
                    bg = self.background_at(t)?;
                    let now = self.full_norms(&phys, bg.as_deref(), p);
                    for c in 0..2 {
                        acc_p[c] += 0.5 * h * (last_p[c].powf(p) + now[c].powf(p));
                    }
                    last_p = now;
                    monitor.running = acc_p[0].powf(1.0 / p) + acc_p[1].powf(1.0 / p);
                    rows.push(self.row(&w, &phys, bg.as_deref(), t, monitor.running));
                    if every > 0 && (rows.len() - 1) % every == 0 {
                        states.push(self.to_state(phys.clone(), t, sigma));
                    }
                }
                Err(Error::StepRejected { .. }) if dt / 2.0 >= self.cfg.dt_min => {
                    rejected += 1;
                    dt /= 2.0;
                    debug!("step rejected at t={t}, retrying with dt={dt:.3e}");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Trajectory {
            rows,
            monitor,
            final_state: self.to_state(phys, t, sigma),
            rejected_steps: rejected,
            states,
        })
    }

    /// `L^p` norms of the full velocity and deformation tensor.
    fn full_norms(&self, phys: &[Vec<f64>], bg: Option<&Vec<Vec<f64>>>, p: f64) -> [f64; 2] {
        let g = self.grid();
        let h3 = g.spacing().powi(3);
        let val = |c: usize, idx: usize| phys[c][idx] + bg.map_or(0.0, |b| b[c][idx]);
        let norm = |lo: usize, hi: usize| {
            let s = exec::sum(g.len(), |idx| (lo..hi).map(|c| val(c, idx).powi(2)).sum::<f64>().sqrt().powf(p));
            (s * h3).powf(1.0 / p)
        };
        [norm(0, 3), norm(3, 12)]
    }

    fn row(&self, w: &Spec, phys: &[Vec<f64>], bg: Option<&Vec<Vec<f64>>>, t: f64, kappa: f64) -> TrajectoryRow {
        let g = self.grid();
        let vol = g.spacing().powi(3) / g.len() as f64;
        let mut energy = 0.0;
        let mut dissipation = 0.0;
        for c in w {
            energy += exec::sum(c.len(), |idx| c[idx].norm_sqr());
            dissipation += exec::sum(c.len(), |idx| self.ws.k2(idx) * c[idx].norm_sqr());
        }
        let div: Spec = (0..4)
            .map(|grp| {
                let cols: [usize; 3] = if grp == 0 { [0, 1, 2] } else { [3 + grp - 1, 6 + grp - 1, 9 + grp - 1] };
                exec::map_collect(g.len(), |idx| {
                    let k = self.ws.kd(idx);
                    Complex64::new(0.0, 1.0) * (0..3).map(|a| k[a] * w[cols[a]][idx]).sum::<Complex64>()
                })
            })
            .collect();
        let div_max = self.inverse_all(&div).iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let [lm_u, lm_f] = self.full_norms(phys, bg, self.cfg.m);
        TrajectoryRow {
            t,
            energy: 0.5 * vol * energy,
            dissipation: vol * dissipation,
            lm_u,
            lm_f,
            div_max,
            kappa,
        }
    }

    /// Contraction monitor over `[t0, t0 + t_star]` for the linear flow of `w0`
    /// (plus the background).
    fn monitor(&self, w0: &Spec, t0: f64, t_star: f64, sigma: f64) -> Result<ContractionMonitor> {
        let nodes = self.cfg.monitor_nodes;
        let mut mon = ContractionMonitor {
            t_star,
            ..Default::default()
        };
        if nodes == 0 {
            return Ok(mon);
        }
        let p = 5.0 * self.cfg.m / 3.0;
        let dt = t_star / nodes as f64;
        let times: Vec<f64> = (0..nodes).map(|i| t0 + (i as f64 + 0.5) * dt).collect();
        let heat = |spec: &Spec, tau: f64| -> Spec {
            spec.iter()
                .map(|c| exec::map_collect(c.len(), |idx| (-self.ws.k2(idx) * tau).exp() * c[idx]))
                .collect()
        };
        let mut lin = [0.0f64; 2];
        let mut bil = [0.0f64; 2];
        let mut nls: Vec<Spec> = Vec::with_capacity(nodes);
        for (i, &ti) in times.iter().enumerate() {
            let bg = self.background_at(ti)?;
            let phys = self.inverse_all(&heat(w0, ti - t0));
            let nrm = self.full_norms(&phys, bg.as_deref(), p);
            nls.push(self.nonlinear(&phys, bg.as_deref(), sigma));
            // B(t_i): left sums of earlier nodes plus half of the current one
            let mut b: Spec = nls[i].iter().map(|c| c.iter().map(|z| 0.5 * dt * z).collect()).collect();
            for (j, nj) in nls.iter().enumerate().take(i) {
                let prop = heat(nj, ti - times[j]);
                for (bc, pc) in b.iter_mut().zip(prop) {
                    bc.iter_mut().zip(pc).for_each(|(x, y)| *x += dt * y);
                }
            }
            let bnorm = self.full_norms(&self.inverse_all(&b), None, p);
            for c in 0..2 {
                lin[c] += dt * nrm[c].powf(p);
                bil[c] += dt * bnorm[c].powf(p);
            }
        }
        mon.kappa = lin[0].powf(1.0 / p) + lin[1].powf(1.0 / p);
        let b = bil[0].powf(1.0 / p) + bil[1].powf(1.0 / p);
        mon.c0_estimate = if mon.kappa > 0.0 { b / (mon.kappa * mon.kappa) } else { 0.0 };
        mon.warning = mon.c0_estimate > 0.0 && mon.kappa >= 0.25 / mon.c0_estimate;
        if mon.warning {
            warn!(
                "contraction condition fails on the window: kappa = {:.3e} >= 1/(4 C0) = {:.3e}",
                mon.kappa,
                0.25 / mon.c0_estimate
            );
        }
        Ok(mon)
    }
}

/// `[e^{-z}, dt (phi1 - phi2), dt phi2]` at `z = |k|^2 dt`.
fn etd2(z: f64, dt: f64) -> [f64; 3] {
    let (phi1, phi2) = if z < 1e-3 {
        (
            1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0,
            0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0,
        )
    } else {
        let em = (-z).exp_m1();
        (-em / z, (em + z) / (z * z))
    };
    [(-z).exp(), dt * (phi1 - phi2), dt * phi2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::{caloric_data, DatumFamily};
    use crate::sphere::SphereQuadrature;
    use std::f64::consts::PI;

    fn state<U, F>(grid: GridSpec, sigma: f64, u: U, f: F) -> EvolveState
    where
        U: Fn([f64; 3]) -> [f64; 3] + Sync + Send,
        F: Fn([f64; 3]) -> [f64; 9] + Sync + Send,
    {
        EvolveState {
            u: Profile::from_fn(grid, 0.0, |x, out| *out = u(x)),
            f: Profile::from_fn(grid, 0.0, |x, out| *out = f(x)),
            t: 0.0,
            sigma,
        }
    }

    fn taylor_green(grid: GridSpec, a: f64, b: f64) -> EvolveState {
        state(
            grid,
            1.0,
            |x| {
                [
                    a * x[0].sin() * x[1].cos() * x[2].cos(),
                    -a * x[0].cos() * x[1].sin() * x[2].cos(),
                    0.0,
                ]
            },
            |x| {
                // columns (0, 0, sin(x+y)), (cos z, 0, 0), (0, cos x, 0)
                let mut m = [0.0; 9];
                m[2 * 3] = b * (x[0] + x[1]).sin();
                m[1] = b * x[2].cos();
                m[3 + 2] = b * x[0].cos();
                m
            },
        )
    }

    #[test]
    fn linear_mode_decays_exactly() {
        let g = GridSpec::new(PI, 16).unwrap();
        let ev = Evolver::new(g, EvolveConfig::default()).unwrap();
        let s = state(g, 0.0, |x| [0.0, (2.0 * x[0]).sin(), 0.0], |x| {
            let mut m = [0.0; 9];
            m[1] = x[2].cos();
            m
        });
        let dt = 0.3;
        let out = ev.evolve_step(&s, dt, 3).unwrap();
        let (eu, ef) = ((-4.0 * dt).exp(), (-dt).exp());
        for idx in (0..g.len()).step_by(7) {
            assert!((out.u.comps[1][idx] - eu * s.u.comps[1][idx]).abs() < 1e-13);
            assert!((out.f.comps[1][idx] - ef * s.f.comps[1][idx]).abs() < 1e-13);
        }
        assert!((out.t - dt).abs() < 1e-15);
    }

    #[test]
    fn zero_stays_zero() {
        let g = GridSpec::new(PI, 16).unwrap();
        let ev = Evolver::new(g, EvolveConfig { dt: 0.05, ..Default::default() }).unwrap();
        let tr = ev.evolve(&EvolveState::zeros(g, 0.0, 1.0), 0.2).unwrap();
        assert_eq!(tr.final_state.u.max_abs(), 0.0);
        assert_eq!(tr.final_state.f.max_abs(), 0.0);
        assert!(tr.rows.iter().all(|r| r.energy == 0.0 && r.kappa == 0.0));
        assert_eq!(tr.rows.len(), 5);
        assert!(!tr.monitor.warning);
    }

    #[test]
    fn heat_flow_of_caloric_data_is_self_similar() {
        // the ball |x| <= 3 sits far enough inside the box that the
        // non-periodic 1/|x| tail does not reach it by t = 2
        let g = GridSpec::new(12.0, 48).unwrap();
        let q = SphereQuadrature::new(16, 32).unwrap();
        let d = Datum::family(DatumFamily::Axial, 1.0, &q).unwrap();
        let cfg = CaloricConfig::default();
        let w1 = caloric_data(&d, g, 0.5, &cfg).unwrap();
        let init = EvolveState {
            u: w1.u0.field.clone(),
            f: w1.g0.field.clone(),
            t: 1.0,
            sigma: 0.0,
        };
        let cfg_e = EvolveConfig {
            dt: 0.5,
            project_initial: false,
            ..Default::default()
        };
        let ev = Evolver::new(g, cfg_e).unwrap();
        let out = ev.evolve(&init, 2.0).unwrap().final_state;
        let exact = CaloricBackground::new(&d, cfg).fields(g, 2.0).unwrap();
        let (mut err, mut scale) = (0.0f64, 0.0f64);
        for idx in (0..g.len()).filter(|&i| g.radius(i) <= 3.0) {
            for c in 0..12 {
                let v = if c < 3 { out.u.comps[c][idx] } else { out.f.comps[c - 3][idx] };
                err = err.max((v - exact[c][idx]).abs());
                scale = scale.max(exact[c][idx].abs());
            }
        }
        assert!(err < 1e-6 * scale, "err {err:.3e} scale {scale:.3e}");
    }

    #[test]
    fn energy_identity_and_divergence_along_trajectory() {
        let g = GridSpec::new(PI, 16).unwrap();
        let cfg = EvolveConfig { dt: 0.01, ..Default::default() };
        let ev = Evolver::new(g, cfg).unwrap();
        let tr = ev.evolve(&taylor_green(g, 0.5, 0.3), 1.0).unwrap();
        assert_eq!(tr.rows.len(), 101);
        assert!(tr.rows.windows(2).all(|w| w[1].energy < w[0].energy));
        for w in tr.rows.windows(3) {
            let de = (w[2].energy - w[0].energy) / (w[2].t - w[0].t);
            let r = (de + w[1].dissipation).abs() / w[1].dissipation;
            assert!(r < 1e-3, "t={} residual {r:.3e}", w[1].t);
        }
        let scale = tr.rows[0].lm_u;
        assert!(tr.rows.iter().all(|r| r.div_max < 1e-12 * scale.max(1.0)));
        assert!(tr.monitor.kappa > 0.0 && tr.monitor.c0_estimate > 0.0);
        assert!(tr.rows.last().unwrap().kappa > 0.0);
    }

    #[test]
    fn second_order_in_dt() {
        let g = GridSpec::new(PI, 16).unwrap();
        let run = |dt: f64| {
            let ev = Evolver::new(g, EvolveConfig { dt, monitor_nodes: 0, ..Default::default() }).unwrap();
            let tr = ev.evolve(&taylor_green(g, 1.0, 0.8), 0.4).unwrap();
            assert_eq!(tr.rejected_steps, 0);
            tr.final_state
        };
        let s: Vec<EvolveState> = [0.1, 0.05, 0.025].map(run).into();
        let gap = |a: &EvolveState, b: &EvolveState| {
            a.u.lincomb(1.0, &b.u, -1.0).unwrap().max_abs() + a.f.lincomb(1.0, &b.f, -1.0).unwrap().max_abs()
        };
        let ratio = gap(&s[0], &s[1]) / gap(&s[1], &s[2]);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio:.3}");
    }

    #[test]
    fn rejects_bad_config() {
        let g = GridSpec::new(PI, 16).unwrap();
        assert!(Evolver::new(g, EvolveConfig { dt: 0.0, ..Default::default() }).is_err());
        assert!(Evolver::new(g, EvolveConfig { m: 2.0, ..Default::default() }).is_err());
        let ev = Evolver::new(g, EvolveConfig::default()).unwrap();
        assert!(ev.evolve(&EvolveState::zeros(g, 1.0, 1.0), 0.5).is_err());
    }
}
