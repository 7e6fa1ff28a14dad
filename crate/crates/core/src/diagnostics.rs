//! Computable functionals: profile-system residual, excess quantity `Y`,
//! smallness left side, local energy balance, decay fits and self-similar
//! reconstruction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datum::CaloricData;
use crate::error::{Error, Result};
use crate::evolver::{EvolveState, TrajectoryRow};
use crate::exec;
use crate::fd::Central;
use crate::field::{Profile, ScalarProfile, TensorProfile, VectorProfile};
use crate::grid::GridSpec;
use crate::interp::{eval_point, stencil, Rescaler};
use crate::norms::japanese;
use crate::quadrature::gauss_legendre;
use crate::spectral::FourierWorkspace;
use crate::sphere::SphereQuadrature;
use crate::stokes::recover_pressure;

/// Max-abs and L2 of one residual block over the evaluation region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub max_abs: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileResidual {
    /// Velocity equation with the recovered pressure.
    pub momentum: Summary,
    /// `div U` and `div F_j` together.
    pub divergence: Summary,
    /// The three equations for the columns of `F`.
    pub deformation: Summary,
    /// Largest single term of the equations, for relative reading.
    pub scale: f64,
}

impl ProfileResidual {
    pub fn max_abs(&self) -> f64 {
        self.momentum.max_abs.max(self.divergence.max_abs).max(self.deformation.max_abs)
    }
}

/// Residual of the stationary profile system for `U = U0 + v`, `F = G0 + H`,
/// evaluated with 8th-order differences away from a `4h` boundary band.
pub fn profile_residual(
    v_hat: &VectorProfile,
    h_hat: &TensorProfile,
    data: &CaloricData,
    sigma: f64,
    ws: &FourierWorkspace,
) -> Result<ProfileResidual> {
    let g = v_hat.grid;
    if h_hat.grid != g || data.grid() != g {
        return Err(Error::GridMismatch("correction", "caloric profiles"));
    }
    ws.check(&g)?;
    let u = data.u0.field.lincomb(1.0, v_hat, 1.0)?;
    let f = data.g0.field.lincomb(1.0, h_hat, 1.0)?;
    let n = g.len();
    let mut q = TensorProfile::zeros(g, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            q.comps[a * 3 + b] = exec::map_collect(n, |i| {
                let gg: f64 = (0..3).map(|j| f.comps[a * 3 + j][i] * f.comps[b * 3 + j][i]).sum();
                sigma * (gg - u.comps[a][i] * u.comps[b][i])
            });
        }
    }
    let p = recover_pressure(&q, ws)?;
    profile_residual_with_pressure(&u, &f, &p, sigma)
}

/// Same residual for given full fields and pressure.
pub fn profile_residual_with_pressure(
    u: &VectorProfile,
    f: &TensorProfile,
    p: &ScalarProfile,
    sigma: f64,
) -> Result<ProfileResidual> {
    let g = u.grid;
    if f.grid != g || p.grid != g {
        return Err(Error::GridMismatch("fields", "pressure"));
    }
    let fd = Central::new(8);
    let band = 4.0 * g.spacing();
    let inside: Vec<usize> = (0..g.len()).filter(|&i| g.is_interior(i, band) && fd.fits(&g, i)).collect();
    // per node: [momentum 3, divergence 4, deformation 9, scale]
    let rows: Vec<[f64; 17]> = exec::map_collect(inside.len(), |m| {
        let idx = inside[m];
        let x = g.point(idx);
        let du = |c: usize, a: usize| fd.d1(&g, &u.comps[c], idx, a);
        let df = |c: usize, a: usize| fd.d1(&g, &f.comps[c], idx, a);
        let mut out = [0.0; 17];
        let mut scale = 0.0f64;
        for b in 0..3 {
            let lap = fd.laplacian(&g, &u.comps[b], idx);
            let xg: f64 = (0..3).map(|a| x[a] * du(b, a)).sum();
            let adv: f64 = (0..3).map(|a| u.comps[a][idx] * du(b, a)).sum();
            let fadv: f64 = (0..3)
                .map(|l| (0..3).map(|a| f.comps[a * 3 + l][idx] * df(b * 3 + l, a)).sum::<f64>())
                .sum();
            let gp = fd.d1(&g, &p.comps[0], idx, b);
            let terms = [-lap, -0.5 * u.comps[b][idx], -0.5 * xg, sigma * adv, -sigma * fadv, gp];
            out[b] = terms.iter().sum();
            scale = terms.iter().fold(scale, |s, t| s.max(t.abs()));
        }
        out[3] = (0..3).map(|a| du(a, a)).sum();
        for j in 0..3 {
            out[4 + j] = (0..3).map(|a| df(a * 3 + j, a)).sum();
            for b in 0..3 {
                let c = b * 3 + j;
                let lap = fd.laplacian(&g, &f.comps[c], idx);
                let xg: f64 = (0..3).map(|a| x[a] * df(c, a)).sum();
                let adv: f64 = (0..3).map(|a| u.comps[a][idx] * df(c, a)).sum();
                let stretch: f64 = (0..3).map(|a| f.comps[a * 3 + j][idx] * du(b, a)).sum();
                let terms = [-lap, -0.5 * f.comps[c][idx], -0.5 * xg, sigma * adv, -sigma * stretch];
                out[7 + c] = terms.iter().sum();
                scale = terms.iter().fold(scale, |s, t| s.max(t.abs()));
            }
        }
        out[16] = scale;
        out
    });
    let h3 = g.spacing().powi(3);
    let summarize = |lo: usize, hi: usize| {
        let mut s = Summary::default();
        let mut sq = 0.0;
        for r in &rows {
            let v2: f64 = r[lo..hi].iter().map(|v| v * v).sum();
            s.max_abs = s.max_abs.max(v2.sqrt());
            sq += v2;
        }
        s.l2 = (sq * h3).sqrt();
        s
    };
    Ok(ProfileResidual {
        momentum: summarize(0, 3),
        divergence: summarize(3, 7),
        deformation: summarize(7, 16),
        scale: rows.iter().fold(0.0, |s, r| s.max(r[16])),
    })
}

/// `Q_r(z0) = B_r(x0) x (t0 - r^2, t0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCylinder {
    pub x0: [f64; 3],
    pub t0: f64,
    pub r: f64,
}

impl ParabolicCylinder {
    pub fn new(x0: [f64; 3], t0: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!("cylinder radius must be positive, got {r}")));
        }
        Ok(ParabolicCylinder { x0, t0, r })
    }

    /// The cylinder seen by `x -> lambda x`, `t -> lambda^2 t` rescaled fields.
    pub fn rescaled(&self, lambda: f64) -> Self {
        ParabolicCylinder {
            x0: self.x0.map(|c| c / lambda),
            t0: self.t0 / (lambda * lambda),
            r: self.r / lambda,
        }
    }
}

/// Samples of a `C`-component field at increasing times on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField<const C: usize> {
    pub times: Vec<f64>,
    pub slices: Vec<Profile<C>>,
}

impl<const C: usize> SpaceTimeField<C> {
    pub fn new(times: Vec<f64>, slices: Vec<Profile<C>>) -> Result<Self> {
        if times.is_empty() || times.len() != slices.len() {
            return Err(Error::InvalidArgument("need one slice per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must increase strictly".into()));
        }
        let g = slices[0].grid;
        if slices.iter().any(|s| s.grid != g) {
            return Err(Error::GridMismatch("slice", "slice"));
        }
        Ok(SpaceTimeField { times, slices })
    }

    pub fn from_fn<F>(grid: GridSpec, times: Vec<f64>, f: F) -> Result<Self>
    where
        F: Fn([f64; 3], f64) -> [f64; C] + Sync + Send,
    {
        let slices = times
            .iter()
            .map(|&t| Profile::from_fn(grid, 0.0, |x, out| *out = f(x, t)))
            .collect();
        Self::new(times, slices)
    }

    pub fn grid(&self) -> GridSpec {
        self.slices[0].grid
    }

    /// Time stencil for `t`: up to four slices and Lagrange weights.
    fn time_stencil(&self, t: f64) -> Option<Vec<(usize, f64)>> {
        let ts = &self.times;
        let (lo, hi) = (ts[0], *ts.last().expect("nonempty"));
        let tol = 1e-12 * (1.0 + t.abs());
        if t < lo - tol || t > hi + tol {
            return None;
        }
        if ts.len() == 1 {
            return Some(vec![(0, 1.0)]);
        }
        let pts = ts.len().min(4);
        let i = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1) - 1;
        let first = (i as isize - (pts as isize - 2) / 2).clamp(0, (ts.len() - pts) as isize) as usize;
        Some(
            (first..first + pts)
                .map(|a| {
                    let w = (first..first + pts)
                        .filter(|&b| b != a)
                        .map(|b| (t - ts[b]) / (ts[a] - ts[b]))
                        .product();
                    (a, w)
                })
                .collect(),
        )
    }

    /// Space-time cubic interpolant at `(x, t)`.
    pub fn eval(&self, x: [f64; 3], t: f64) -> Option<[f64; C]> {
        let g = self.grid();
        let ts = self.time_stencil(t)?;
        let sx = [stencil(&g, x[0])?, stencil(&g, x[1])?, stencil(&g, x[2])?];
        let n = g.n;
        let mut out = [0.0; C];
        for &(s, wt) in &ts {
            for (c, o) in out.iter_mut().enumerate() {
                let data = &self.slices[s].comps[c];
                let mut acc = 0.0;
                for kz in 0..4 {
                    for ky in 0..4 {
                        let base = sx[0].0 + n * ((sx[1].0 + ky) + n * (sx[2].0 + kz));
                        let row = &data[base..base + 4];
                        let w = sx[1].1[ky] * sx[2].1[kz];
                        acc += w * (0..4).map(|kx| sx[0].1[kx] * row[kx]).sum::<f64>();
                    }
                }
                *o += wt * acc;
            }
        }
        Some(out)
    }
}

/// Tensor Gauss rule on a parabolic cylinder: radial Gauss-Legendre with the
/// `r^2` weight, a sphere product rule and Gauss-Legendre in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderRule {
    pub radial: usize,
    pub polar: usize,
    pub azimuth: usize,
    pub time: usize,
}

impl Default for CylinderRule {
    fn default() -> Self {
        CylinderRule {
            radial: 8,
            polar: 24,
            azimuth: 48,
            time: 8,
        }
    }
}

impl CylinderRule {
    pub fn refined(&self, factor: usize) -> Self {
        CylinderRule {
            radial: self.radial * factor,
            polar: self.polar * factor,
            azimuth: self.azimuth * factor,
            time: self.time * factor,
        }
    }

    /// Spatial nodes (offsets from the center) and normalized weights, and time
    /// nodes and normalized weights.
    pub fn nodes(&self, cyl: &ParabolicCylinder) -> Result<(Vec<([f64; 3], f64)>, Vec<(f64, f64)>)> {
        let sphere = SphereQuadrature::new(self.polar, self.azimuth)?;
        let (xr, wr) = gauss_legendre(self.radial);
        let (xt, wt) = gauss_legendre(self.time);
        let mut space = Vec::with_capacity(self.radial * sphere.len());
        for (x, w) in xr.iter().zip(&wr) {
            let s = 0.5 * (x + 1.0);
            // volume fraction: 3 s^2 ds over (0, 1), sphere weights sum to 4 pi
            let ws = 0.5 * w * 3.0 * s * s / (4.0 * std::f64::consts::PI);
            for node in 0..sphere.len() {
                let d = sphere.direction(node);
                space.push((d.map(|c| cyl.r * s * c), ws * sphere.weight(node)));
            }
        }
        let r2 = cyl.r * cyl.r;
        let time = xt.iter().zip(&wt).map(|(x, w)| (cyl.t0 - r2 * 0.5 * (1.0 - x), 0.5 * w)).collect();
        Ok((space, time))
    }
}

/// Evaluate a field on every node of the rule, `[time][space]`.
fn sample<const C: usize>(
    field: &SpaceTimeField<C>,
    cyl: &ParabolicCylinder,
    space: &[([f64; 3], f64)],
    time: &[(f64, f64)],
) -> Result<Vec<Vec<[f64; C]>>> {
    time.iter()
        .map(|&(t, _)| {
            let vals = exec::map_collect(space.len(), |m| {
                let y = space[m].0;
                field.eval([cyl.x0[0] + y[0], cyl.x0[1] + y[1], cyl.x0[2] + y[2]], t)
            });
            vals.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::CylinderOutOfRange(format!("{cyl:?} leaves the sampled data")))
        })
        .collect()
}

fn norm<const C: usize>(v: &[f64; C]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(avg |f - mean|^q)^{1/q}` over the rule; `per_time` subtracts the
/// ball mean at each time instead of the cylinder mean.
fn centered_average<const C: usize>(
    vals: &[Vec<[f64; C]>],
    space: &[([f64; 3], f64)],
    time: &[(f64, f64)],
    q: f64,
    per_time: bool,
) -> f64 {
    let ball_mean = |row: &[[f64; C]]| {
        let mut m = [0.0; C];
        for (v, (_, w)) in row.iter().zip(space) {
            for c in 0..C {
                m[c] += w * v[c];
            }
        }
        m
    };
    let means: Vec<[f64; C]> = vals.iter().map(|r| ball_mean(r)).collect();
    let mut total = [0.0; C];
    for (m, (_, wt)) in means.iter().zip(time) {
        for c in 0..C {
            total[c] += wt * m[c];
        }
    }
    let mut acc = 0.0;
    for ((row, m), (_, wt)) in vals.iter().zip(&means).zip(time) {
        let center = if per_time { m } else { &total };
        let s: f64 = row
            .iter()
            .zip(space)
            .map(|(v, (_, w))| {
                let d: [f64; C] = std::array::from_fn(|c| v[c] - center[c]);
                w * norm(&d).powf(q)
            })
            .sum();
        acc += wt * s;
    }
    acc.powf(1.0 / q)
}

/// `(avg |f|^q)^{1/q}` over the rule.
fn plain_average<const C: usize>(vals: &[Vec<[f64; C]>], space: &[([f64; 3], f64)], time: &[(f64, f64)], q: f64) -> f64 {
    let mut acc = 0.0;
    for (row, (_, wt)) in vals.iter().zip(time) {
        acc += wt * row.iter().zip(space).map(|(v, (_, w))| w * norm(v).powf(q)).sum::<f64>();
    }
    acc.powf(1.0 / q)
}

/// The excess `Y(v, H, p, Q_R(z0))`: mean-subtracted `L^3` averages of `v` and
/// `H` plus `R` times the `L^{3/2}` average of `p` minus its ball means.
pub fn epsilon_regularity_y(
    v: &SpaceTimeField<3>,
    h: &SpaceTimeField<9>,
    p: &SpaceTimeField<1>,
    cyl: &ParabolicCylinder,
    rule: &CylinderRule,
) -> Result<f64> {
    let (space, time) = rule.nodes(cyl)?;
    let sv = sample(v, cyl, &space, &time)?;
    let sh = sample(h, cyl, &space, &time)?;
    let sp = sample(p, cyl, &space, &time)?;
    Ok(centered_average(&sv, &space, &time, 3.0, false)
        + centered_average(&sh, &space, &time, 3.0, false)
        + cyl.r * centered_average(&sp, &space, &time, 1.5, true))
}

/// Left side of the smallness condition on `cyl`:
/// `|v|_3 + |H|_3 + |p|_{3/2} + |a|_m + |M|_m` as cylinder averages.
#[allow(clippy::too_many_arguments)]
pub fn smallness_condition(
    v: &SpaceTimeField<3>,
    h: &SpaceTimeField<9>,
    p: &SpaceTimeField<1>,
    a: &SpaceTimeField<3>,
    m: &SpaceTimeField<9>,
    m_exp: f64,
    cyl: &ParabolicCylinder,
    rule: &CylinderRule,
) -> Result<f64> {
    if !(m_exp > 5.0) {
        return Err(Error::InvalidArgument(format!("exponent m must exceed 5, got {m_exp}")));
    }
    let (space, time) = rule.nodes(cyl)?;
    Ok(plain_average(&sample(v, cyl, &space, &time)?, &space, &time, 3.0)
        + plain_average(&sample(h, cyl, &space, &time)?, &space, &time, 3.0)
        + plain_average(&sample(p, cyl, &space, &time)?, &space, &time, 1.5)
        + plain_average(&sample(a, cyl, &space, &time)?, &space, &time, m_exp)
        + plain_average(&sample(m, cyl, &space, &time)?, &space, &time, m_exp))
}

/// `phi(x, t) = (1 - |x - c|^2 / r^2)^k (1 - s^2)^k` with `s` the time mapped
/// from `(t_on, t_off)` to `(-1, 1)`; zero outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBump {
    pub center: [f64; 3],
    pub radius: f64,
    pub t_on: f64,
    pub t_off: f64,
    pub power: i32,
}

impl TestBump {
    /// `(phi, phi_t, grad phi, Delta phi)`.
    pub fn eval(&self, x: [f64; 3], t: f64) -> (f64, f64, [f64; 3], f64) {
        let d: [f64; 3] = std::array::from_fn(|a| x[a] - self.center[a]);
        let r2 = self.radius * self.radius;
        let rho = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / r2;
        let half = 0.5 * (self.t_off - self.t_on);
        let s = (t - 0.5 * (self.t_on + self.t_off)) / half;
        if rho >= 1.0 || s.abs() >= 1.0 {
            return (0.0, 0.0, [0.0; 3], 0.0);
        }
        let k = self.power;
        let kf = k as f64;
        let a = 1.0 - rho;
        let b = 1.0 - s * s;
        let space = a.powi(k);
        let time = b.powi(k);
        let dtime = kf * b.powi(k - 1) * (-2.0 * s / half);
        // d/dx a^k = -2k a^{k-1} d / r^2
        let g1 = -2.0 * kf * a.powi(k - 1) / r2;
        let grad = d.map(|c| g1 * c * time);
        let lap = (-6.0 * kf * a.powi(k - 1) / r2 + 4.0 * kf * (kf - 1.0) * a.powi(k - 2) * rho / r2) * time;
        (space * time, space * dtime, grad, lap)
    }

    fn check(&self, grid: &GridSpec, times: &[f64]) -> Result<()> {
        let inside = self.center.iter().all(|c| c.abs() + self.radius < grid.half_width);
        let in_time = times.first().is_some_and(|&t| t <= self.t_on) && times.last().is_some_and(|&t| t >= self.t_off);
        if !(inside && in_time && self.t_off > self.t_on && self.radius > 0.0 && self.power >= 2) {
            return Err(Error::SupportViolation(format!("{self:?} is not supported inside the data")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalEnergy {
    /// Left side minus right side of the local energy balance.
    pub residual: f64,
    /// `2 int int phi (|grad u|^2 + |grad F|^2)`.
    pub dissipation: f64,
}

impl LocalEnergy {
    pub fn relative(&self) -> f64 {
        if self.dissipation > 0.0 {
            self.residual / self.dissipation
        } else {
            self.residual
        }
    }
}

/// Integrand of the local energy balance at one node, given values and
/// gradients (`du[b][a] = d_a u_b`, `df[c][a] = d_a F_c`).
#[allow(clippy::too_many_arguments)]
pub fn local_energy_density(
    u: [f64; 3],
    f: [f64; 9],
    p: f64,
    du: [[f64; 3]; 3],
    df: [[f64; 3]; 9],
    phi: (f64, f64, [f64; 3], f64),
    sigma: f64,
) -> (f64, f64) {
    let (ph, ph_t, gph, lph) = phi;
    let e: f64 = u.iter().map(|v| v * v).sum::<f64>() + f.iter().map(|v| v * v).sum::<f64>();
    let grad2: f64 = du.iter().flatten().map(|v| v * v).sum::<f64>() + df.iter().flatten().map(|v| v * v).sum::<f64>();
    let ugp: f64 = (0..3).map(|a| u[a] * gph[a]).sum();
    let mut ffg = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let ff: f64 = (0..3).map(|j| f[a * 3 + j] * f[b * 3 + j]).sum();
            ffg += u[a] * gph[b] * ff;
        }
    }
    let dissipation = 2.0 * ph * grad2;
    let rhs = (ph_t + lph) * e - 2.0 * sigma * ffg + (sigma * e + 2.0 * p) * ugp;
    (dissipation - rhs, dissipation)
}

/// Local energy balance of periodic samples (spectral derivatives) with a
/// test bump supported inside the data; time integrals by the trapezoid rule.
pub fn local_energy_residual(
    u: &SpaceTimeField<3>,
    f: &SpaceTimeField<9>,
    p: &SpaceTimeField<1>,
    phi: &TestBump,
    sigma: f64,
    ws: &FourierWorkspace,
) -> Result<LocalEnergy> {
    let g = u.grid();
    if f.grid() != g || p.grid() != g || u.times != f.times || u.times != p.times {
        return Err(Error::GridMismatch("energy fields", "energy fields"));
    }
    ws.check(&g)?;
    phi.check(&g, &u.times)?;
    let h3 = g.spacing().powi(3);
    let mut slice_vals = Vec::with_capacity(u.times.len());
    for (s, &t) in u.times.iter().enumerate() {
        if t < phi.t_on || t > phi.t_off {
            slice_vals.push((0.0, 0.0));
            continue;
        }
        let grads = |comps: &[Vec<f64>]| -> Vec<[Vec<f64>; 3]> {
            comps
                .iter()
                .map(|c| {
                    let hat = ws.forward(c);
                    std::array::from_fn(|a| {
                        let mut d = hat.clone();
                        exec::for_each_mut(&mut d, |idx, z| *z *= Complex64::new(0.0, ws.kd(idx)[a]));
                        ws.inverse(d)
                    })
                })
                .collect()
        };
        let gu = grads(&u.slices[s].comps);
        let gf = grads(&f.slices[s].comps);
        let parts = exec::map_collect(g.len(), |idx| {
            let x = g.point(idx);
            let ph = phi.eval(x, t);
            if ph.0 == 0.0 && ph.2 == [0.0; 3] {
                return (0.0, 0.0);
            }
            local_energy_density(
                std::array::from_fn(|c| u.slices[s].comps[c][idx]),
                std::array::from_fn(|c| f.slices[s].comps[c][idx]),
                p.slices[s].comps[0][idx],
                std::array::from_fn(|b| std::array::from_fn(|a| gu[b][a][idx])),
                std::array::from_fn(|c| std::array::from_fn(|a| gf[c][a][idx])),
                ph,
                sigma,
            )
        });
        let (r, d) = parts.iter().fold((0.0, 0.0), |(r, d), (a, b)| (r + a, d + b));
        slice_vals.push((r * h3, d * h3));
    }
    let ts = &u.times;
    let mut out = LocalEnergy::default();
    for i in 0..ts.len().saturating_sub(1) {
        let w = 0.5 * (ts[i + 1] - ts[i]);
        out.residual += w * (slice_vals[i].0 + slice_vals[i + 1].0);
        out.dissipation += w * (slice_vals[i].1 + slice_vals[i + 1].1);
    }
    Ok(out)
}

/// Pressure of the full system for one state: `Delta^{-1} d_a d_b` of
/// `sigma (F F^T - u u)`.
pub fn pressure_of(u: &VectorProfile, f: &TensorProfile, sigma: f64, ws: &FourierWorkspace) -> Result<ScalarProfile> {
    let g = u.grid;
    let mut q = TensorProfile::zeros(g, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            q.comps[a * 3 + b] = exec::map_collect(g.len(), |i| {
                let gg: f64 = (0..3).map(|j| f.comps[a * 3 + j][i] * f.comps[b * 3 + j][i]).sum();
                sigma * (gg - u.comps[a][i] * u.comps[b][i])
            });
        }
    }
    recover_pressure(&q, ws)
}

/// Space-time samples `(u, F, p)` of recorded evolver states.
pub fn space_time_samples(
    states: &[EvolveState],
    ws: &FourierWorkspace,
) -> Result<(SpaceTimeField<3>, SpaceTimeField<9>, SpaceTimeField<1>)> {
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    let ps = states
        .iter()
        .map(|s| pressure_of(&s.u, &s.f, s.sigma, ws))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        SpaceTimeField::new(times.clone(), states.iter().map(|s| s.u.clone()).collect())?,
        SpaceTimeField::new(times.clone(), states.iter().map(|s| s.f.clone()).collect())?,
        SpaceTimeField::new(times, ps)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `e` in `sup_{shell} |v| ~ <r>^{-e}`.
    pub exponent: f64,
    pub r_squared: f64,
    pub pass: bool,
    /// `(r, sup |v|)` per shell, plot-ready.
    pub shells: Vec<(f64, f64)>,
}

/// Log-log fit of the shell-wise sup of `|v|` against `<r>` over
/// `r in [L/4, 3L/4]`; passes when the exponent is at least `1 + gamma - 0.1`.
pub fn decay_exponent_fit<const C: usize>(profile: &Profile<C>, gamma: f64) -> Result<DecayFit> {
    let g = profile.grid;
    let h = g.spacing();
    let (lo, hi) = (0.25 * g.half_width, 0.75 * g.half_width);
    let nshell = ((hi - lo) / h).floor() as usize;
    // (sup, radius where it is attained)
    let mut sup = vec![(0.0f64, 0.0f64); nshell];
    for idx in 0..g.len() {
        let r = g.radius(idx);
        if r < lo || r >= lo + nshell as f64 * h {
            continue;
        }
        let s = ((r - lo) / h) as usize;
        let m = profile.magnitude(idx);
        if m > sup[s].0 {
            sup[s] = (m, r);
        }
    }
    let shells: Vec<(f64, f64)> = sup.iter().filter(|v| v.0 > 0.0).map(|&(v, r)| (r, v)).collect();
    if shells.len() < 4 {
        return Err(Error::InsufficientShells(shells.len()));
    }
    let pts: Vec<(f64, f64)> = shells.iter().map(|&(r, v)| (japanese(r * r).ln(), v.ln())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let exponent = -slope;
    Ok(DecayFit {
        exponent,
        r_squared,
        pass: exponent >= 1.0 + gamma - 0.1,
        shells,
    })
}

/// `t^{-1/2} P(x / sqrt t)` for a profile `P` by tricubic interpolation.
pub fn reconstruct_point<const C: usize>(profile: &Profile<C>, x: [f64; 3], t: f64) -> Result<[f64; C]> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("reconstruction needs t > 0, got {t}")));
    }
    let rt = t.sqrt();
    let y = x.map(|c| c / rt);
    let mut out = [0.0; C];
    for (c, o) in out.iter_mut().enumerate() {
        *o = eval_point(&profile.grid, &profile.comps[c], y)
            .ok_or_else(|| Error::InvalidArgument(format!("point {y:?} is outside the interpolation range")))?
            / rt;
    }
    Ok(out)
}

/// `u(x, t) = t^{-1/2} (U0 + v)(x / sqrt t)` and the same for `F`.
pub fn self_similar_reconstruct(
    v_hat: &VectorProfile,
    h_hat: &TensorProfile,
    data: &CaloricData,
    x: [f64; 3],
    t: f64,
) -> Result<([f64; 3], [f64; 9])> {
    let u = data.u0.field.lincomb(1.0, v_hat, 1.0)?;
    let f = data.g0.field.lincomb(1.0, h_hat, 1.0)?;
    Ok((reconstruct_point(&u, x, t)?, reconstruct_point(&f, x, t)?))
}

/// Relative L2 gap over `|x| <= radius` between an evolved correction at time
/// `t` and the self-similar prediction `t^{-1/2} (v, H)(x / sqrt t)` from its
/// profile at `t = 1`.
pub fn self_similarity_deviation(state: &EvolveState, v_hat: &VectorProfile, h_hat: &TensorProfile, radius: f64) -> Result<f64> {
    let g = state.u.grid;
    if v_hat.grid != g || h_hat.grid != g {
        return Err(Error::GridMismatch("state", "profile"));
    }
    if !(state.t > 0.0) {
        return Err(Error::InvalidArgument("deviation needs t > 0".into()));
    }
    let rt = state.t.sqrt();
    let resc = Rescaler::new(g, 1.0 / rt);
    let (mut num, mut den) = (0.0, 0.0);
    let mut pred = vec![0.0; g.len()];
    let pairs = v_hat.comps.iter().zip(&state.u.comps).chain(h_hat.comps.iter().zip(&state.f.comps));
    for (src, got) in pairs {
        resc.apply(src, &mut pred);
        for idx in 0..g.len() {
            if g.radius(idx) > radius {
                continue;
            }
            if !resc.valid(idx) {
                return Err(Error::InvalidArgument(format!("radius {radius} exceeds the rescaling range")));
            }
            let p = pred[idx] / rt;
            num += (got[idx] - p).powi(2);
            den += p * p;
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

/// Largest `|dE/dt + D| / D` along a trajectory, with centered differences.
pub fn energy_identity_residual(rows: &[TrajectoryRow]) -> Option<f64> {
    rows.windows(3)
        .filter(|w| w[1].dissipation > 0.0)
        .map(|w| {
            let de = (w[2].energy - w[0].energy) / (w[2].t - w[0].t);
            (de + w[1].dissipation).abs() / w[1].dissipation
        })
        .reduce(f64::max)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub profile_residual: ProfileResidual,
    pub energy_residual: Option<f64>,
    pub y_values: Vec<(ParabolicCylinder, f64)>,
    pub smallness_lhs: Option<f64>,
    pub decay_fit: Option<DecayFit>,
    pub self_similarity_error: Option<f64>,
}

impl DiagnosticsReport {
    pub fn is_finite(&self) -> bool {
        let r = &self.profile_residual;
        let mut vals = vec![r.momentum.max_abs, r.momentum.l2, r.divergence.max_abs, r.deformation.max_abs, r.scale];
        vals.extend(self.energy_residual);
        vals.extend(self.y_values.iter().map(|(_, y)| *y));
        vals.extend(self.smallness_lhs);
        vals.extend(self.decay_fit.as_ref().map(|d| d.exponent));
        vals.extend(self.self_similarity_error);
        vals.iter().all(|v| v.is_finite())
    }
}
