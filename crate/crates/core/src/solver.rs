//! The fixed-point map `T(v, H; sigma)` on profiles and its solution by
//! damped Picard iteration with optional Anderson mixing and continuation
//! in `sigma`.

use std::collections::VecDeque;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datum::CaloricData;
use crate::error::{Error, Result};
use crate::exec;
use crate::field::{Profile, TensorProfile, VectorProfile};
use crate::grid::GridSpec;
use crate::norms::xgamma4;
use crate::spectral::FourierWorkspace;
use crate::stokes::{duhamel_batch, DuhamelOptions, DuhamelSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub sigma_schedule: Vec<f64>,
    /// Picard damping `theta` in `(0, 1]`.
    pub damping: f64,
    /// Stop when `||w - T(w)|| <= tol ||w||` in `X_gamma^4`.
    pub tol_fixed_point: f64,
    pub max_iters: usize,
    /// Anderson history length; 0 disables mixing.
    pub anderson_depth: usize,
    /// A-priori bound on `||w||_{X_gamma^4}`.
    pub norm_ceiling: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            sigma_schedule: vec![0.0, 0.5, 1.0],
            damping: 1.0,
            tol_fixed_point: 1e-8,
            max_iters: 50,
            anderson_depth: 0,
            norm_ceiling: 1e3,
        }
    }
}

impl SolveConfig {
    /// Damping recommended for data of size `c_star`.
    pub fn default_damping(c_star: f64) -> f64 {
        if c_star > 0.2 {
            0.5
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sigma_schedule;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if s.is_empty() {
            return bad("sigma_schedule is empty".into());
        }
        if s.iter().any(|x| !(0.0..=1.0).contains(x)) || s.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("sigma_schedule must increase within [0, 1]: {s:?}"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tol_fixed_point > 0.0) || self.max_iters == 0 || !(self.norm_ceiling > 0.0) {
            return bad("tolerance, iteration cap and norm ceiling must be positive".into());
        }
        Ok(())
    }
}

/// A correction `(v, H)` to the caloric profiles at a given `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileState {
    pub v_hat: VectorProfile,
    pub h_hat: TensorProfile,
    pub sigma: f64,
    pub gamma: f64,
}

impl ProfileState {
    pub fn zero(grid: GridSpec, gamma: f64, sigma: f64) -> Self {
        ProfileState {
            v_hat: VectorProfile::zeros(grid, gamma),
            h_hat: TensorProfile::zeros(grid, gamma),
            sigma,
            gamma,
        }
    }

    /// `||(v, H)||_{X_gamma^4}`.
    pub fn norm(&self) -> f64 {
        xgamma4(&self.v_hat, &self.h_hat, self.gamma)
    }

    fn flatten(&self) -> Vec<f64> {
        self.v_hat.comps.iter().chain(self.h_hat.comps.iter()).flatten().copied().collect()
    }

    fn from_flat(&self, flat: &[f64]) -> Self {
        let len = self.v_hat.grid.len();
        let mut out = self.clone();
        for (c, dst) in out.v_hat.comps.iter_mut().chain(out.h_hat.comps.iter_mut()).enumerate() {
            dst.copy_from_slice(&flat[c * len..(c + 1) * len]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointResult {
    pub state: ProfileState,
    /// `||w_k - T(w_k)||_{X_gamma^4}` for every evaluated iterate.
    pub residual_history: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    /// Number of updates applied.
    pub iterations: usize,
    pub norm: f64,
}

impl FixedPointResult {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Sources of the profile system: `q = G G^t - U (x) U` and
/// `Q_j = G_j (x) U - U (x) G_j` with `U = U0 + v`, `G = G0 + H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sources {
    pub q_hat: TensorProfile,
    pub big_q: [TensorProfile; 3],
}

pub fn assemble_sources(v_hat: &VectorProfile, h_hat: &TensorProfile, data: &CaloricData) -> Result<Sources> {
    let g = v_hat.grid;
    let (u0, g0) = (&data.u0.field, &data.g0.field);
    if h_hat.grid != g || u0.grid != g || g0.grid != g {
        return Err(Error::GridMismatch("correction", "caloric profiles"));
    }
    let gamma = v_hat.gamma;
    // Per node: 9 entries of q followed by 27 of Q_0, Q_1, Q_2.
    let mut flat = vec![0.0; g.len() * 36];
    exec::for_each_chunk_mut(&mut flat, 36, |idx, out| {
        let u: [f64; 3] = std::array::from_fn(|a| u0.comps[a][idx] + v_hat.comps[a][idx]);
        let m: [f64; 9] = std::array::from_fn(|c| g0.comps[c][idx] + h_hat.comps[c][idx]);
        for a in 0..3 {
            for b in 0..3 {
                let gg: f64 = (0..3).map(|j| m[a * 3 + j] * m[b * 3 + j]).sum();
                out[a * 3 + b] = gg - u[a] * u[b];
                for j in 0..3 {
                    out[9 + j * 9 + a * 3 + b] = m[a * 3 + j] * u[b] - u[a] * m[b * 3 + j];
                }
            }
        }
    });
    let take = |off: usize| -> TensorProfile {
        let comps = std::array::from_fn(|c| flat.iter().skip(off + c).step_by(36).copied().collect());
        Profile {
            grid: g,
            comps,
            gamma,
            masked: false,
        }
    };
    Ok(Sources {
        q_hat: take(0),
        big_q: [take(9), take(18), take(27)],
    })
}

/// Everything `T` needs besides the iterate.
#[derive(Clone, Debug)]
pub struct ProfileMap {
    pub ws: FourierWorkspace,
    pub data: CaloricData,
    pub sched: DuhamelSchedule,
    pub opts: DuhamelOptions,
}

impl ProfileMap {
    pub fn new(data: CaloricData, sched: DuhamelSchedule, opts: DuhamelOptions) -> Result<Self> {
        let ws = FourierWorkspace::new(data.grid())?;
        Ok(ProfileMap { ws, data, sched, opts })
    }

    pub fn grid(&self) -> GridSpec {
        self.data.grid()
    }

    pub fn gamma(&self) -> f64 {
        self.data.u0.field.gamma
    }

    /// `T(v, H; sigma) = sigma * T(v, H; 1)`: `v` from the projected Duhamel
    /// integral of `q`, column `j` of `H` from the unprojected one of `Q_j`.
    pub fn apply(&self, state: &ProfileState) -> Result<(VectorProfile, TensorProfile)> {
        let g = self.grid();
        let gamma = state.gamma;
        if state.sigma == 0.0 {
            return Ok((VectorProfile::zeros(g, gamma), TensorProfile::zeros(g, gamma)));
        }
        let src = assemble_sources(&state.v_hat, &state.h_hat, &self.data)?;
        let batch = [
            (&src.q_hat, true),
            (&src.big_q[0], false),
            (&src.big_q[1], false),
            (&src.big_q[2], false),
        ];
        let mut out = duhamel_batch(&batch, &self.sched, &self.ws, &self.opts)?;
        let cols = out.split_off(1);
        let mut v = out.remove(0);
        let mut h = TensorProfile::from_columns([&cols[0], &cols[1], &cols[2]])?;
        v.scale(state.sigma);
        h.scale(state.sigma);
        v.gamma = gamma;
        h.gamma = gamma;
        if !v.is_finite() || !h.is_finite() {
            return Err(Error::InvalidArgument("T produced non-finite values".into()));
        }
        Ok((v, h))
    }
}

pub fn apply_t(state: &ProfileState, map: &ProfileMap) -> Result<(VectorProfile, TensorProfile)> {
    map.apply(state)
}

/// Type-II Anderson mixing on flattened iterates.
struct Anderson {
    depth: usize,
    xs: VecDeque<Vec<f64>>,
    fs: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            xs: VecDeque::new(),
            fs: VecDeque::new(),
        }
    }

    /// Next iterate from `x` and its residual `f = T(x) - x`.
    fn next(&mut self, x: Vec<f64>, f: Vec<f64>, theta: f64) -> Vec<f64> {
        let mut out: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + theta * b).collect();
        if self.depth > 0 && !self.xs.is_empty() {
            let m = self.xs.len();
            let dx: Vec<Vec<f64>> = (0..m).map(|i| diff(&x, &self.xs[i])).collect();
            let df: Vec<Vec<f64>> = (0..m).map(|i| diff(&f, &self.fs[i])).collect();
            let gram = DMatrix::from_fn(m, m, |i, j| dot(&df[i], &df[j]));
            let rhs = DVector::from_fn(m, |i, _| dot(&df[i], &f));
            let svd = gram.svd(true, true);
            let eps = 1e-12 * svd.singular_values.max();
            if let Ok(gam) = svd.solve(&rhs, eps) {
                for i in 0..m {
                    let c = gam[i];
                    for (o, (a, b)) in out.iter_mut().zip(dx[i].iter().zip(&df[i])) {
                        *o -= c * (a + theta * b);
                    }
                }
            }
        }
        if self.depth > 0 {
            self.xs.push_front(x);
            self.fs.push_front(f);
            self.xs.truncate(self.depth);
            self.fs.truncate(self.depth);
        }
        out
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Damped Picard iteration `w <- (1 - theta) w + theta T(w)` at
/// `init.sigma`, with Anderson mixing when `anderson_depth > 0`.
pub fn picard_solve(init: &ProfileState, map: &ProfileMap, cfg: &SolveConfig) -> Result<FixedPointResult> {
    cfg.validate()?;
    let mut w = init.clone();
    let mut history = Vec::new();
    let mut mixer = Anderson::new(cfg.anderson_depth);
    loop {
        let (tv, th) = map.apply(&w)?;
        let rv = tv.lincomb(1.0, &w.v_hat, -1.0)?;
        let rh = th.lincomb(1.0, &w.h_hat, -1.0)?;
        let r = xgamma4(&rv, &rh, w.gamma);
        let nw = w.norm();
        history.push(r);
        let minimum = history.iter().copied().fold(f64::INFINITY, f64::min);
        debug!("sigma={} iter={} residual={r:.3e} norm={nw:.3e}", w.sigma, history.len() - 1);
        if r <= cfg.tol_fixed_point * nw || r == 0.0 {
            let ratios = history.windows(2).map(|p| p[1] / p[0]).collect();
            return Ok(FixedPointResult {
                norm: nw,
                iterations: history.len() - 1,
                state: w,
                residual_history: history,
                contraction_ratios: ratios,
                converged: true,
            });
        }
        if !r.is_finite() || (minimum > 0.0 && r > 10.0 * minimum) {
            return Err(Error::DivergenceDetected {
                residual: r,
                minimum,
                history,
            });
        }
        let nt = xgamma4(&tv, &th, w.gamma);
        if nt > cfg.norm_ceiling {
            return Err(Error::NormCeilingExceeded {
                norm: nt,
                ceiling: cfg.norm_ceiling,
            });
        }
        if history.len() > cfg.max_iters {
            return Err(Error::MaxItersExceeded {
                iters: cfg.max_iters,
                residual: r,
                history,
            });
        }
        let x = w.flatten();
        let next = if cfg.anderson_depth == 0 {
            let theta = cfg.damping;
            let t = ProfileState {
                v_hat: tv,
                h_hat: th,
                ..w.clone()
            }
            .flatten();
            x.iter().zip(&t).map(|(a, b)| (1.0 - theta) * a + theta * b).collect()
        } else {
            let f = ProfileState {
                v_hat: rv,
                h_hat: rh,
                ..w.clone()
            }
            .flatten();
            mixer.next(x, f, cfg.damping)
        };
        w = w.from_flat(&next);
    }
}

/// Solve along `cfg.sigma_schedule`, warm-starting each step from the last.
pub fn sigma_continuation(map: &ProfileMap, cfg: &SolveConfig) -> Result<Vec<FixedPointResult>> {
    cfg.validate()?;
    let mut out: Vec<FixedPointResult> = Vec::new();
    let mut w = ProfileState::zero(map.grid(), map.gamma(), cfg.sigma_schedule[0]);
    for &sigma in &cfg.sigma_schedule {
        w.sigma = sigma;
        match picard_solve(&w, map, cfg) {
            Ok(res) => {
                info!(
                    "sigma={sigma} converged in {} iterations, norm={:.6e}, residual={:.3e}",
                    res.iterations,
                    res.norm,
                    res.final_residual()
                );
                w = res.state.clone();
                out.push(res);
            }
            Err(e) => {
                return Err(Error::ContinuationStalled {
                    last_good_sigma: out.last().map(|r| r.state.sigma),
                    failed_sigma: sigma,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}
