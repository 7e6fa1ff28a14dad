//! Heat flow of degree -1 homogeneous data at `t = 1`.
//!
//! For `w0(x) = omega(x/|x|)/|x|` the radial part of the convolution with the
//! heat kernel is explicit:
//!
//! `W(x) = int_{S^2} omega(theta) K(|x|, x^.theta) dsigma`,
//! `K(rho, c) = (4 pi)^{-3/2} [2 e^{-rho^2/4} + rho c sqrt(pi) erfc(-rho c/2) e^{-rho^2 (1-c^2)/4}]`.
//!
//! `K` depends on `theta` only through `x^.theta`, so by the Funk-Hecke
//! formula each spherical harmonic of `omega` is an eigenfunction:
//! `W(x) = sum_l lambda_l(|x|) omega_l(x^)` with
//! `lambda_l(rho) = 2 pi int_{-1}^{1} K(rho, c) P_l(c) dc`. The 1-D integrals
//! use Gauss-Legendre panels in `u = 1 - c` that double in width from
//! `1/rho^2`, where `K` concentrates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fd::Central;
use crate::field::Profile;
use crate::grid::GridSpec;
use crate::harmonics::{eval_real_sh, legendre, sh_len, ShExpansion};
use crate::quadrature::gauss_legendre;
use crate::sphere::SphericalTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaloricConfig {
    /// Gauss-Legendre nodes per `u` panel.
    pub panel_nodes: usize,
    /// Highest harmonic degree kept (capped by the trace's rule).
    pub lmax: usize,
    /// Relative tolerance for the refined-rule comparison.
    pub tol: f64,
    /// Number of grid nodes re-evaluated with a refined rule (0 disables).
    pub check_nodes: usize,
}

impl Default for CaloricConfig {
    fn default() -> Self {
        CaloricConfig {
            panel_nodes: 24,
            lmax: 64,
            tol: 1e-8,
            check_nodes: 256,
        }
    }
}

/// `W0 = e^{Delta} w0` sampled on a grid, with the datum constant `C*`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaloricProfile<const C: usize> {
    pub field: Profile<C>,
    pub c_star: f64,
}

impl<const C: usize> CaloricProfile<C> {
    pub fn scaled(&self, a: f64) -> Self {
        CaloricProfile {
            field: self.field.scaled(a),
            c_star: self.c_star * a.abs(),
        }
    }
}

/// Radial kernel `K(rho, c)`.
#[inline]
pub fn radial_kernel(rho: f64, c: f64) -> f64 {
    let norm = (4.0 * PI).powf(-1.5);
    let rc = rho * c;
    let a = 2.0 * (-rho * rho / 4.0).exp();
    let b = rc * PI.sqrt() * libm::erfc(-rc / 2.0) * (-rho * rho * (1.0 - c * c) / 4.0).exp();
    norm * (a + b)
}

/// Funk-Hecke eigenvalues `lambda_0..=lambda_lmax` of `K(rho, .)`.
#[derive(Clone, Debug)]
pub struct FunkHecke {
    gl_x: Vec<f64>,
    gl_w: Vec<f64>,
}

impl FunkHecke {
    pub fn new(panel_nodes: usize) -> Self {
        let (x, w) = gauss_legendre(panel_nodes);
        FunkHecke {
            gl_x: x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
            gl_w: w.iter().map(|v| 0.5 * v).collect(),
        }
    }

    pub fn eigenvalues(&self, rho: f64, lmax: usize) -> Vec<f64> {
        let mut lam = vec![0.0; lmax + 1];
        let mut p = vec![0.0; lmax + 1];
        // Beyond u = 160/rho^2 the kernel is below e^{-80} of its peak.
        let u_max = if rho > 12.0 { (160.0 / (rho * rho)).min(2.0) } else { 2.0 };
        let mut lo = 0.0;
        let mut hi = if rho > 1.0 { (1.0 / (rho * rho)).min(u_max) } else { u_max };
        loop {
            for (gx, gw) in self.gl_x.iter().zip(self.gl_w.iter()) {
                let u = lo + (hi - lo) * gx;
                let c = 1.0 - u;
                let w = 2.0 * PI * radial_kernel(rho, c) * (hi - lo) * gw;
                legendre(lmax, c, &mut p);
                lam.iter_mut().zip(p.iter()).for_each(|(l, pl)| *l += w * pl);
            }
            if hi >= u_max {
                break;
            }
            lo = hi;
            hi = (2.0 * hi).min(u_max);
        }
        lam
    }
}

/// `sum_l lambda_l sum_m coef_lm Y_lm(dir)` for every component.
fn synthesize(exp: &ShExpansion, lam: &[f64], dir: [f64; 3], y: &mut [f64], out: &mut [f64]) {
    eval_real_sh(exp.lmax, dir, y);
    for (o, cc) in out.iter_mut().zip(exp.coef.iter()) {
        let mut s = 0.0;
        for (l, lam_l) in lam.iter().enumerate().take(exp.lmax + 1) {
            let r = l * l..(l + 1) * (l + 1);
            let d: f64 = cc[r.clone()].iter().zip(y[r].iter()).map(|(a, b)| a * b).sum();
            s += lam_l * d;
        }
        *o = s;
    }
}

fn direction(x: [f64; 3]) -> (f64, [f64; 3]) {
    let rho = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if rho > 0.0 {
        (rho, [x[0] / rho, x[1] / rho, x[2] / rho])
    } else {
        (0.0, [0.0, 0.0, 1.0])
    }
}

/// `e^{Delta}` of the trace's degree -1 field at an arbitrary point.
pub fn caloric_at(trace: &SphericalTrace, x: [f64; 3], cfg: &CaloricConfig) -> Vec<f64> {
    let exp = ShExpansion::from_trace(trace, cfg.lmax);
    let fh = FunkHecke::new(cfg.panel_nodes);
    let (rho, dir) = direction(x);
    let lam = fh.eigenvalues(rho, exp.lmax);
    let mut y = vec![0.0; sh_len(exp.lmax)];
    let mut out = vec![0.0; exp.ncomp()];
    synthesize(&exp, &lam, dir, &mut y, &mut out);
    out
}

/// `e^{Delta}` of the trace's degree -1 field at every node, one vector per
/// component.
pub fn caloric_components(trace: &SphericalTrace, grid: GridSpec, cfg: &CaloricConfig) -> Result<Vec<Vec<f64>>> {
    grid.validate()?;
    let nc = trace.ncomp;
    let exp = ShExpansion::from_trace(trace, cfg.lmax);
    let fh = FunkHecke::new(cfg.panel_nodes);
    let h = grid.spacing();
    let half = (grid.n / 2) as i64;
    // Node radii are h sqrt(s) for integer s, so eigenvalues are tabulated by s.
    let smax = (3 * half * half) as usize;
    let table: Vec<Vec<f64>> = exec::map_collect(smax + 1, |s| fh.eigenvalues(h * (s as f64).sqrt(), exp.lmax));
    let mut flat = vec![0.0; grid.len() * nc];
    exec::for_each_chunk_mut(&mut flat, nc, |idx, out| {
        let (i, j, k) = grid.unravel(idx);
        let m = [i as i64 - half, j as i64 - half, k as i64 - half];
        let s = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as usize;
        let (_, dir) = direction(grid.point(idx));
        let mut y = vec![0.0; sh_len(exp.lmax)];
        synthesize(&exp, &table[s], dir, &mut y, out);
    });
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("caloric profile is not finite".into()));
    }
    check_quadrature(&exp, trace.sup_norm(), grid, cfg, &flat)?;
    Ok((0..nc).map(|c| flat.iter().skip(c).step_by(nc).copied().collect()).collect())
}

/// Re-evaluates sampled nodes with a finer radial rule; the error is measured
/// against the natural size `C*/<x>` of the profile.
fn check_quadrature(exp: &ShExpansion, scale: f64, grid: GridSpec, cfg: &CaloricConfig, flat: &[f64]) -> Result<()> {
    if cfg.check_nodes == 0 || scale == 0.0 {
        return Ok(());
    }
    let nc = exp.ncomp();
    let fine = FunkHecke::new(2 * cfg.panel_nodes);
    let stride = (grid.len() / cfg.check_nodes).max(1);
    let picks: Vec<usize> = (0..grid.len()).step_by(stride).collect();
    let errs = exec::map_collect(picks.len(), |m| {
        let idx = picks[m];
        let (rho, dir) = direction(grid.point(idx));
        let lam = fine.eigenvalues(rho, exp.lmax);
        let mut y = vec![0.0; sh_len(exp.lmax)];
        let mut out = vec![0.0; nc];
        synthesize(exp, &lam, dir, &mut y, &mut out);
        let d = (0..nc).map(|c| (out[c] - flat[idx * nc + c]).powi(2)).sum::<f64>().sqrt();
        d * (1.0 + rho * rho).sqrt() / scale
    });
    let (worst, m) = errs
        .iter()
        .enumerate()
        .fold((0.0, 0), |(w, wm), (m, &e)| if e > w { (e, m) } else { (w, wm) });
    if worst > cfg.tol {
        return Err(Error::QuadratureNotConverged {
            node: grid.point(picks[m]),
            estimate: worst,
            tol: cfg.tol,
        });
    }
    Ok(())
}

pub fn caloric_profile<const C: usize>(trace: &SphericalTrace, grid: GridSpec) -> Result<CaloricProfile<C>> {
    caloric_profile_with(trace, grid, &CaloricConfig::default())
}

pub fn caloric_profile_with<const C: usize>(
    trace: &SphericalTrace,
    grid: GridSpec,
    cfg: &CaloricConfig,
) -> Result<CaloricProfile<C>> {
    if trace.ncomp != C {
        return Err(Error::InvalidArgument(format!(
            "trace has {} components, profile expects {C}",
            trace.ncomp
        )));
    }
    let comps = caloric_components(trace, grid, cfg)?;
    let comps: [Vec<f64>; C] = comps.try_into().expect("component count checked");
    Ok(CaloricProfile {
        field: Profile::from_comps(grid, 0.5, comps)?,
        c_star: trace.sup_norm(),
    })
}

/// Max-abs over interior nodes of `-Delta W - (degree/2) W - (x.grad W)/2`,
/// the heat equation for `t^{-degree/2} W(x/sqrt t)`. Degree 1 is the caloric
/// profile; degree 3 fits the heat kernel itself.
pub fn caloric_residual<const C: usize>(field: &Profile<C>, degree: f64) -> f64 {
    let g = field.grid;
    let fd = Central::new(8);
    let (m, _) = exec::argmax(g.len(), |idx| {
        if !fd.fits(&g, idx) || !field.counts(idx) {
            return None;
        }
        let x = g.point(idx);
        let mut s = 0.0;
        for comp in field.comps.iter() {
            let lap = fd.laplacian(&g, comp, idx);
            let adv: f64 = (0..3).map(|a| x[a] * fd.d1(&g, comp, idx, a)).sum();
            let r = -lap - 0.5 * degree * comp[idx] - 0.5 * adv;
            s += r * r;
        }
        Some(s.sqrt())
    });
    m.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::SphereQuadrature;

    fn erf_profile(r: f64) -> f64 {
        if r < 1e-8 {
            1.0 / PI.sqrt()
        } else {
            libm::erf(r / 2.0) / r
        }
    }

    #[test]
    fn kernel_matches_radial_quadrature() {
        // K(rho, c) = int_0^inf Gamma(x - r theta, 1) r dr by brute force.
        for &(rho, c) in &[(0.0, 0.3), (1.5, 0.7), (3.0, -0.4), (6.0, 0.99)] {
            let n = 200_000;
            let dr = 40.0 / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let r = (i as f64 + 0.5) * dr;
                let d2 = rho * rho - 2.0 * r * rho * c + r * r;
                s += (4.0 * PI).powf(-1.5) * (-d2 / 4.0).exp() * r * dr;
            }
            assert!((radial_kernel(rho, c) - s).abs() < 1e-9, "{rho} {c}");
        }
    }

    #[test]
    fn ones_gives_erf_profile() {
        let q = SphereQuadrature::new(16, 32).unwrap();
        let t = SphericalTrace::from_fn(q, 1, |_, o| o[0] = 1.0);
        let cfg = CaloricConfig::default();
        for x in [[0.0, 0.0, 0.0], [0.3, -0.2, 0.1], [1.0, 2.0, 2.0], [7.0, -9.0, 14.0], [20.0, 3.0, 1.0]] {
            let w = caloric_at(&t, x, &cfg)[0];
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            assert!((w - erf_profile(r)).abs() < 1e-12 * erf_profile(r), "{x:?}: {w} vs {}", erf_profile(r));
        }
    }

    #[test]
    fn angular_dependence_matches_brute_force() {
        // omega = x3^2 - x1 on a point off the axes: direct 3-D convolution.
        let q = SphereQuadrature::new(16, 32).unwrap();
        let t = SphericalTrace::from_fn(q, 1, |d, o| o[0] = d[2] * d[2] - d[0]);
        let x = [0.7, -0.4, 1.1];
        let w = caloric_at(&t, x, &CaloricConfig::default())[0];
        // int omega(th) K(rho, x^.th) dsigma with a dense product rule
        let dense = SphereQuadrature::new(200, 400).unwrap();
        let (rho, dir) = direction(x);
        let mut s = 0.0;
        for node in 0..dense.len() {
            let th = dense.direction(node);
            let c = th[0] * dir[0] + th[1] * dir[1] + th[2] * dir[2];
            s += dense.weight(node) * (th[2] * th[2] - th[0]) * radial_kernel(rho, c);
        }
        assert!((w - s).abs() < 1e-11, "{w} {s}");
    }

    #[test]
    fn zero_and_linearity() {
        let q = SphereQuadrature::new(16, 32).unwrap();
        let g = GridSpec::new(4.0, 8).unwrap();
        let z = SphericalTrace::zeros(q.clone(), 3);
        let p: CaloricProfile<3> = caloric_profile(&z, g).unwrap();
        assert_eq!(p.field.max_abs(), 0.0);
        let a = SphericalTrace::from_fn(q.clone(), 3, |d, o| o.copy_from_slice(&[d[0] * d[1], d[2], 1.0]));
        let b = SphericalTrace::from_fn(q, 3, |d, o| o.copy_from_slice(&[d[2].powi(3), -d[0], d[1] * d[2]]));
        let pa: CaloricProfile<3> = caloric_profile(&a, g).unwrap();
        let pb: CaloricProfile<3> = caloric_profile(&b, g).unwrap();
        let pc: CaloricProfile<3> = caloric_profile(&a.lincomb(2.0, &b, -0.5).unwrap(), g).unwrap();
        let want = pa.field.lincomb(2.0, &pb.field, -0.5).unwrap();
        for c in 0..3 {
            for i in 0..g.len() {
                assert!((pc.field.comps[c][i] - want.comps[c][i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn grid_profile_matches_pointwise() {
        let q = SphereQuadrature::new(16, 32).unwrap();
        let t = SphericalTrace::from_fn(q, 1, |d, o| o[0] = d[0] * d[1] + 0.5);
        let g = GridSpec::new(6.0, 16).unwrap();
        let p: CaloricProfile<1> = caloric_profile(&t, g).unwrap();
        for idx in [0, 77, 2000, g.len() - 1] {
            let w = caloric_at(&t, g.point(idx), &CaloricConfig::default())[0];
            assert!((p.field.comps[0][idx] - w).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_examples() {
        let g = GridSpec::new(8.0, 64).unwrap();
        let z = Profile::<1>::zeros(g, 0.5);
        assert_eq!(caloric_residual(&z, 1.0), 0.0);
        let e = Profile::<1>::from_fn(g, 0.5, |x, o| {
            o[0] = erf_profile((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
        });
        let r = caloric_residual(&e, 1.0);
        assert!(r < 1e-4, "erf residual {r}");
        let gauss = Profile::<1>::from_fn(g, 0.5, |x, o| {
            o[0] = (4.0 * PI).powf(-1.5) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp()
        });
        let rg = caloric_residual(&gauss, 3.0);
        assert!(rg < 1e-6, "gaussian residual {rg}");
        // the same Gaussian does not solve the degree-1 form
        assert!(caloric_residual(&gauss, 1.0) > 1e-3);
    }
}
