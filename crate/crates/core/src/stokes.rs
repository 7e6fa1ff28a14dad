//! Linear Stokes solvers on the periodic box: Leray projection, heat flow,
//! the Duhamel operator for self-similar sources, and pressure recovery.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{Profile, ScalarProfile, TensorProfile, VectorProfile};
use crate::interp::eval_point;
use crate::remap::{cell_averages, cell_symbol, Remap};
use crate::sphere::{SphereQuadrature, SphericalTrace};
use crate::norms::japanese;
use crate::quadrature::gauss_legendre;
use crate::spectral::FourierWorkspace;

/// In-place Leray projection of a spectral vector field.
pub fn leray_in_place(ws: &FourierWorkspace, acc: &mut [Vec<Complex64>; 3]) {
    let [a0, a1, a2] = acc;
    let n = a0.len();
    let chunk = 4096;
    // Work on index ranges so the three components can be updated together.
    let mut tri: Vec<(usize, &mut [Complex64], &mut [Complex64], &mut [Complex64])> = a0
        .chunks_mut(chunk)
        .zip(a1.chunks_mut(chunk))
        .zip(a2.chunks_mut(chunk))
        .enumerate()
        .map(|(c, ((x, y), z))| (c * chunk, x, y, z))
        .collect();
    exec::for_each_mut(&mut tri, |_, (off, x, y, z)| {
        for q in 0..x.len() {
            let idx = *off + q;
            let k = ws.kd(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                continue;
            }
            let dot = (k[0] * x[q] + k[1] * y[q] + k[2] * z[q]) / k2;
            x[q] -= k[0] * dot;
            y[q] -= k[1] * dot;
            z[q] -= k[2] * dot;
        }
    });
    debug_assert_eq!(n, ws.grid.len());
}

/// `I - xi xi^T / |xi|^2` mode by mode; the zero mode passes through.
pub fn leray_project(field: &VectorProfile, ws: &FourierWorkspace) -> Result<VectorProfile> {
    ws.check(&field.grid)?;
    let (s0, s1) = ws.forward_pair(&field.comps[0], &field.comps[1]);
    let s2 = ws.forward(&field.comps[2]);
    let mut acc = [s0, s1, s2];
    leray_in_place(ws, &mut acc);
    let [s0, s1, s2] = acc;
    let (c0, c1) = ws.inverse_pair(&s0, &s1);
    let c2 = ws.inverse(s2);
    Ok(Profile {
        grid: field.grid,
        comps: [c0, c1, c2],
        gamma: field.gamma,
        masked: false,
    })
}

/// Multiplier `e^{-|xi|^2 tau}` on every component.
pub fn heat_propagate<const C: usize>(field: &Profile<C>, tau: f64, ws: &FourierWorkspace) -> Result<Profile<C>> {
    ws.check(&field.grid)?;
    if tau < 0.0 {
        return Err(Error::InvalidArgument(format!("heat duration {tau} < 0")));
    }
    let mut out = field.clone();
    out.masked = false;
    for comp in out.comps.iter_mut() {
        let mut s = ws.forward(comp);
        exec::for_each_mut(&mut s, |idx, z| *z *= (-ws.k2(idx) * tau).exp());
        *comp = ws.inverse(s);
    }
    Ok(out)
}

/// `P = Delta^{-1} d_a d_b S_ab`, i.e. multiplier `xi^T S xi / |xi|^2`, with
/// mean zero. For the velocity equation `u_t - Du + grad p = div S` this is `p`.
pub fn recover_pressure(source: &TensorProfile, ws: &FourierWorkspace) -> Result<ScalarProfile> {
    ws.check(&source.grid)?;
    let mut acc = vec![Complex64::default(); source.grid.len()];
    for a in 0..3 {
        for b in 0..3 {
            let c = &source.comps[a * 3 + b];
            if c.iter().all(|v| *v == 0.0) {
                continue;
            }
            let s = ws.forward(c);
            exec::for_each_mut(&mut acc, |idx, z| {
                let k = ws.kd(idx);
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if k2 > 0.0 {
                    *z += s[idx] * (k[a] * k[b] / k2);
                }
            });
        }
    }
    Ok(Profile {
        grid: source.grid,
        comps: [ws.inverse(acc)],
        gamma: source.gamma,
        masked: false,
    })
}

/// Quadrature for `int_0^1 ... ds` in the variable `tau = sqrt(s)`:
/// `s_i = tau_i^2`, weights `2 tau_i w_i` from Gauss-Legendre on `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelSchedule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_nodes: usize,
}

impl DuhamelSchedule {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidArgument("Duhamel schedule needs at least 2 nodes".into()));
        }
        let (x, w) = gauss_legendre(n_nodes);
        let tau: Vec<f64> = x.iter().map(|v| 0.5 * (v + 1.0)).collect();
        let nodes = tau.iter().map(|t| t * t).collect();
        let weights = tau.iter().zip(w.iter()).map(|(t, w)| 2.0 * t * 0.5 * w).collect();
        Ok(DuhamelSchedule {
            nodes,
            weights,
            n_nodes,
        })
    }
}

impl Default for DuhamelSchedule {
    fn default() -> Self {
        DuhamelSchedule::new(64).expect("64 nodes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelOptions {
    /// Exponent `p` of the far-field model `c(x^) <y>^{-p}` used where the
    /// rescaled point leaves the box.
    pub far_field_exponent: f64,
    /// Recompute with half the nodes and fail if the relative max-abs change
    /// exceeds this.
    pub halving_tol: Option<f64>,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        DuhamelOptions {
            far_field_exponent: 2.0,
            halving_tol: None,
        }
    }
}

/// Symmetry detected in a source profile, used to skip redundant transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Symmetric,
    Antisymmetric,
    General,
}

fn shape_of(src: &TensorProfile) -> Shape {
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let sym = pairs.iter().all(|&(a, b)| src.comps[a * 3 + b] == src.comps[b * 3 + a]);
    if sym {
        return Shape::Symmetric;
    }
    let anti = pairs.iter().all(|&(a, b)| {
        src.comps[a * 3 + b]
            .iter()
            .zip(src.comps[b * 3 + a].iter())
            .all(|(x, y)| *x == -*y)
    }) && (0..3).all(|a| src.comps[a * 4].iter().all(|v| *v == 0.0));
    if anti {
        Shape::Antisymmetric
    } else {
        Shape::General
    }
}

/// Transformed component `(a, b)` enters the divergence with the listed
/// `(target b', derivative axis a', sign)` terms.
fn plan(src: &TensorProfile) -> Vec<(usize, Vec<(usize, usize, f64)>)> {
    let zero = |ab: usize| src.comps[ab].iter().all(|v| *v == 0.0);
    let mut out = Vec::new();
    match shape_of(src) {
        Shape::Symmetric => {
            for a in 0..3 {
                for b in a..3 {
                    let ab = a * 3 + b;
                    if zero(ab) {
                        continue;
                    }
                    let mut t = vec![(b, a, 1.0)];
                    if a != b {
                        t.push((a, b, 1.0));
                    }
                    out.push((ab, t));
                }
            }
        }
        Shape::Antisymmetric => {
            for a in 0..3 {
                for b in (a + 1)..3 {
                    let ab = a * 3 + b;
                    if !zero(ab) {
                        out.push((ab, vec![(b, a, 1.0), (a, b, -1.0)]));
                    }
                }
            }
        }
        Shape::General => {
            for ab in 0..9 {
                if !zero(ab) {
                    out.push((ab, vec![(ab % 3, ab / 3, 1.0)]));
                }
            }
        }
    }
    out
}

/// `(Phi f)(., 1) = int_0^1 e^{(1-s) Delta} P div f(., s) ds` for
/// `f(x, s) = s^{-1} f_hat(x / sqrt s)`, with `(div f)_b = sum_a d_a f_ab`.
/// The result is divergence-free.
pub fn phi_profile(
    source_hat: &TensorProfile,
    sched: &DuhamelSchedule,
    ws: &FourierWorkspace,
    opts: &DuhamelOptions,
) -> Result<VectorProfile> {
    Ok(duhamel_batch(&[(source_hat, true)], sched, ws, opts)?.remove(0))
}

/// Same integral without the Leray projection, as used for the `F` columns.
pub fn duhamel_heat(
    source_hat: &TensorProfile,
    sched: &DuhamelSchedule,
    ws: &FourierWorkspace,
    opts: &DuhamelOptions,
) -> Result<VectorProfile> {
    Ok(duhamel_batch(&[(source_hat, false)], sched, ws, opts)?.remove(0))
}

/// Several Duhamel integrals sharing one pass over the schedule; the flag
/// selects the Leray projection per source.
pub fn duhamel_batch(
    srcs: &[(&TensorProfile, bool)],
    sched: &DuhamelSchedule,
    ws: &FourierWorkspace,
    opts: &DuhamelOptions,
) -> Result<Vec<VectorProfile>> {
    for (src, _) in srcs {
        ws.check(&src.grid)?;
    }
    let full = duhamel(srcs, sched, ws, opts)?;
    if let Some(tol) = opts.halving_tol {
        let coarse = duhamel(srcs, &DuhamelSchedule::new(sched.n_nodes / 2)?, ws, opts)?;
        for (f, c) in full.iter().zip(&coarse) {
            let scale = f.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = f
                .comps
                .iter()
                .flatten()
                .zip(c.comps.iter().flatten())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let rel = if scale > 0.0 { diff / scale } else { diff };
            if rel > tol {
                return Err(Error::QuadratureNotConverged {
                    node: [f64::NAN; 3],
                    estimate: rel,
                    tol,
                });
            }
        }
    }
    Ok(full)
}

struct Term<'a> {
    data: &'a [f64],
    source: usize,
    targets: Vec<(usize, usize, f64)>,
}

fn duhamel(
    srcs: &[(&TensorProfile, bool)],
    sched: &DuhamelSchedule,
    ws: &FourierWorkspace,
    opts: &DuhamelOptions,
) -> Result<Vec<VectorProfile>> {
    let g = ws.grid;
    let n = g.n;
    let len = g.len();
    let terms: Vec<Term> = srcs
        .iter()
        .enumerate()
        .flat_map(|(si, (src, _))| {
            plan(src).into_iter().map(move |(ab, targets)| Term {
                data: &src.comps[ab],
                source: si,
                targets,
            })
        })
        .collect();
    let mut acc: Vec<[Vec<Complex64>; 3]> = srcs
        .iter()
        .map(|_| std::array::from_fn(|_| vec![Complex64::default(); len]))
        .collect();
    let nt = terms.len();
    let p = opts.far_field_exponent;
    let h = g.spacing();
    let h3 = h * h * h;
    let rb = g.half_width - 3.0 * h;
    let wr = japanese(rb * rb).powf(p);
    // Far-field coefficients c(x^) = f_hat(R_b x^) <R_b>^p, at node directions
    // and on a direction table for sub-cell quadrature near the origin.
    let far_at = |dir: [f64; 3], t: usize| {
        let y = [rb * dir[0], rb * dir[1], rb * dir[2]];
        eval_point(&g, terms[t].data, y).unwrap_or(0.0) * wr
    };
    let far: Vec<Vec<f64>> = (0..nt)
        .map(|t| {
            exec::map_collect(len, |idx| {
                let r = g.radius(idx);
                if r == 0.0 {
                    return 0.0;
                }
                let x = g.point(idx);
                far_at([x[0] / r, x[1] / r, x[2] / r], t)
            })
        })
        .collect();
    let table = SphericalTrace::from_fn(SphereQuadrature::new(24, 48)?, nt.max(1), |dir, out| {
        for (t, o) in out.iter_mut().take(nt).enumerate() {
            *o = far_at(dir, t);
        }
    });
    let avgs: Vec<Vec<f64>> = terms.iter().map(|t| cell_averages(&g, t.data)).collect();
    let radial = move |r2: f64, s: f64| {
        let q = 1.0 + r2 / s;
        let v = if p == 2.0 { 1.0 / q } else { q.powf(-0.5 * p) };
        v / s
    };
    let gauss = h / (2.0 * 3f64.sqrt());
    let near = 3.0 * h;
    // Per-axis derivative wavenumbers (Nyquist zeroed) and true wavenumbers.
    let kd1: Vec<f64> = (0..n).map(|m| if m == n / 2 { 0.0 } else { ws.wavenumbers[m] }).collect();
    let e0 = -g.half_width - 0.5 * h;
    let en = g.half_width - 0.5 * h;

    let mut rescaled: Vec<Vec<f64>> = vec![vec![0.0; len]; nt];
    let mut mult = vec![0.0; len];
    for (s, w) in sched.nodes.iter().zip(sched.weights.iter()) {
        if nt == 0 {
            break;
        }
        let s = *s;
        let rs = s.sqrt();
        let remap = Remap::new(g, s);
        let in_box = |x: [f64; 3]| x.iter().all(|&c| (e0..=en).contains(&(c / rs)));
        // Outer part of each cell: cell average of the far-field model over
        // the portion whose preimage leaves the source box.
        let outer: Vec<f64> = exec::map_collect(len, |idx| {
            let f = 1.0 - remap.inside_fraction(idx);
            if f <= 1e-14 || g.radius(idx) < near {
                return 0.0;
            }
            let x = g.point(idx);
            let mut acc = 0.0;
            for dz in [-gauss, gauss] {
                for dy in [-gauss, gauss] {
                    for dx in [-gauss, gauss] {
                        let (a, b, c) = (x[0] + dx, x[1] + dy, x[2] + dz);
                        acc += radial(a * a + b * b + c * c, s);
                    }
                }
            }
            f * acc / 8.0
        });
        let m = 6usize;
        let near_cells: Vec<(usize, Vec<f64>)> = (0..len)
            .filter(|&idx| g.radius(idx) < near && remap.inside_fraction(idx) < 1.0 - 1e-14)
            .map(|idx| {
                let x = g.point(idx);
                let mut acc = vec![0.0; nt];
                let mut c = vec![0.0; table.ncomp];
                let off = |q: usize| h * ((q as f64 + 0.5) / m as f64 - 0.5);
                for qz in 0..m {
                    for qy in 0..m {
                        for qx in 0..m {
                            let y = [x[0] + off(qx), x[1] + off(qy), x[2] + off(qz)];
                            if in_box(y) {
                                continue;
                            }
                            let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                            table.eval_into(y, &mut c);
                            let rad = radial(r2, s);
                            for t in 0..nt {
                                acc[t] += c[t] * rad;
                            }
                        }
                    }
                }
                acc.iter_mut().for_each(|v| *v /= (m * m * m) as f64);
                (idx, acc)
            })
            .collect();
        let core = rs / h3;
        for t in 0..nt {
            let out = &mut rescaled[t];
            remap.apply(&avgs[t], out);
            let fc = &far[t];
            exec::for_each_mut(out, |idx, v| {
                *v = *v * core + fc[idx] * outer[idx];
            });
            for (idx, acc) in &near_cells {
                out[*idx] += acc[t];
            }
        }
        // Heat factor over (s, 1) divided by the cell-average symbol; both
        // factor over the axes.
        let decay = 1.0 - s;
        let e1: Vec<f64> = ws
            .wavenumbers
            .iter()
            .map(|&k| (-k * k * decay).exp() / cell_symbol([k, 0.0, 0.0], h))
            .collect();
        exec::for_each_chunk_mut(&mut mult, n, |row, c| {
            let ejk = w * e1[row % n] * e1[row / n];
            for (i, v) in c.iter_mut().enumerate() {
                *v = ejk * e1[i];
            }
        });
        let mut t = 0;
        while t < nt {
            let (fa, fb) = if t + 1 < nt {
                let (fa, fb) = ws.forward_pair(&rescaled[t], &rescaled[t + 1]);
                (fa, Some(fb))
            } else {
                (ws.forward(&rescaled[t]), None)
            };
            for (spec, tt) in std::iter::once((&fa, t)).chain(fb.as_ref().map(|f| (f, t + 1))) {
                let term = &terms[tt];
                for &(target, axis, sign) in &term.targets {
                    let mult = &mult;
                    let kd1 = &kd1;
                    exec::for_each_chunk_mut(&mut acc[term.source][target], n, |row, c| {
                        let (j, k) = (row % n, row / n);
                        for (i, z) in c.iter_mut().enumerate() {
                            let kd = match axis {
                                0 => kd1[i],
                                1 => kd1[j],
                                _ => kd1[k],
                            };
                            let idx = row * n + i;
                            *z += Complex64::new(0.0, sign * kd * mult[idx]) * spec[idx];
                        }
                    });
                }
            }
            t += 2;
        }
    }
    let mut out = Vec::with_capacity(srcs.len());
    for ((src, project), mut a) in srcs.iter().zip(acc) {
        if *project {
            leray_in_place(ws, &mut a);
        }
        let [s0, s1, s2] = a;
        let (c0, c1) = ws.inverse_pair(&s0, &s1);
        let c2 = ws.inverse(s2);
        out.push(Profile {
            grid: g,
            comps: [c0, c1, c2],
            gamma: src.gamma,
            masked: false,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::spectral::{relative_divergence, spectral_divergence};
    use std::f64::consts::PI;

    fn ws(l: f64, n: usize) -> FourierWorkspace {
        FourierWorkspace::new(GridSpec::new(l, n).unwrap()).unwrap()
    }

    #[test]
    fn leray_examples() {
        let l = 2.0;
        let w = ws(l, 16);
        let g = w.grid;
        let free = VectorProfile::from_fn(g, 0.5, |x, o| *o = [(PI * x[1] / l).sin(), 0.0, (PI * x[0] / l).cos()]);
        let p = leray_project(&free, &w).unwrap();
        let grad = VectorProfile::from_fn(g, 0.5, |x, o| *o = [-(PI / l) * (PI * x[0] / l).sin(), 0.0, 0.0]);
        let pg = leray_project(&grad, &w).unwrap();
        let mixed = VectorProfile::from_fn(g, 0.5, |x, o| {
            let s = (PI * x[0] / l).sin();
            *o = [s, s, 0.0]
        });
        let pm = leray_project(&mixed, &w).unwrap();
        for i in 0..g.len() {
            for c in 0..3 {
                assert!((p.comps[c][i] - free.comps[c][i]).abs() < 1e-13);
                assert!(pg.comps[c][i].abs() < 1e-13);
            }
            let s = (PI * g.point(i)[0] / l).sin();
            assert!(pm.comps[0][i].abs() < 1e-13);
            assert!((pm.comps[1][i] - s).abs() < 1e-13);
        }
    }

    fn noise(g: GridSpec, seed: f64) -> VectorProfile {
        VectorProfile::from_fn(g, 0.5, move |x, o| {
            *o = [
                (x[0] * 1.7 + seed).sin() * (x[1] - seed).cos(),
                (x[2] * x[0] * 0.3 + 2.0 * seed).sin(),
                (x[1] + x[2] + seed).cos().powi(3),
            ]
        })
    }

    #[test]
    fn leray_is_idempotent_and_solenoidal() {
        let w = ws(3.0, 16);
        let u = noise(w.grid, 0.4);
        let p = leray_project(&u, &w).unwrap();
        let pp = leray_project(&p, &w).unwrap();
        let d = p.lincomb(1.0, &pp, -1.0).unwrap();
        assert!(d.max_abs() < 1e-12 * p.max_abs());
        assert!(spectral_divergence(&p, &w).unwrap().max_abs < 1e-12);
    }

    #[test]
    fn heat_examples_and_semigroup() {
        let l = 2.0;
        let w = ws(l, 16);
        let g = w.grid;
        let u = noise(g, 1.1);
        let same = heat_propagate(&u, 0.0, &w).unwrap();
        assert!(same.lincomb(1.0, &u, -1.0).unwrap().max_abs() < 1e-13);
        let c = VectorProfile::from_fn(g, 0.5, |_, o| *o = [2.0, 0.0, -1.0]);
        assert!(heat_propagate(&c, 3.0, &w).unwrap().lincomb(1.0, &c, -1.0).unwrap().max_abs() < 1e-13);
        let k = 2.0 * PI / l;
        let m = VectorProfile::from_fn(g, 0.5, |x, o| *o = [(k * x[1]).cos() * (k * x[2]).sin(), 0.0, 0.0]);
        let hm = heat_propagate(&m, 0.05, &w).unwrap();
        let f = (-2.0 * k * k * 0.05).exp();
        assert!(hm.lincomb(1.0, &m, -f).unwrap().max_abs() < 1e-13);
        let a = heat_propagate(&heat_propagate(&u, 0.1, &w).unwrap(), 0.25, &w).unwrap();
        let b = heat_propagate(&u, 0.35, &w).unwrap();
        assert!(a.lincomb(1.0, &b, -1.0).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn pressure_examples() {
        let l = 2.0;
        let w = ws(l, 16);
        let g = w.grid;
        let z = TensorProfile::zeros(g, 0.5);
        assert_eq!(recover_pressure(&z, &w).unwrap().max_abs(), 0.0);
        let phi = TensorProfile::from_fn(g, 0.5, |x, o| {
            let v = (PI * x[0] / l).cos();
            *o = [v, 0.0, 0.0, 0.0, v, 0.0, 0.0, 0.0, v];
        });
        let p = recover_pressure(&phi, &w).unwrap();
        for i in 0..g.len() {
            assert!((p.comps[0][i] - phi.comps[0][i]).abs() < 1e-13);
        }
        let anti = TensorProfile::from_fn(g, 0.5, |x, o| {
            let v = (x[0] + 2.0 * x[1]).sin();
            *o = [0.0, v, 0.0, -v, 0.0, x[2].cos(), 0.0, -x[2].cos(), 0.0];
        });
        assert!(recover_pressure(&anti, &w).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn schedule_integrates_constants() {
        let s = DuhamelSchedule::new(64).unwrap();
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(s.weights.iter().all(|w| *w > 0.0));
        assert!(s.nodes.iter().all(|x| *x > 0.0 && *x < 1.0));
        // int_0^1 s^{1/4} ds = 0.8: endpoint behaviour of the substitution
        let i: f64 = s.nodes.iter().zip(s.weights.iter()).map(|(x, w)| w * x.powf(0.25)).sum();
        assert!((i - 0.8).abs() < 1e-6);
    }

    fn test_source(g: GridSpec, alpha: f64) -> TensorProfile {
        TensorProfile::from_fn(g, 0.5, move |x, o| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            *o = [0.0; 9];
            o[1] = japanese(r2).powf(-(2.0 + alpha));
        })
    }

    #[test]
    fn phi_zero_linear_and_solenoidal() {
        let w = ws(8.0, 16);
        let g = w.grid;
        let sched = DuhamelSchedule::new(16).unwrap();
        let opts = DuhamelOptions::default();
        assert_eq!(phi_profile(&TensorProfile::zeros(g, 0.5), &sched, &w, &opts).unwrap().max_abs(), 0.0);
        let a = test_source(g, 0.5);
        let b = TensorProfile::from_fn(g, 0.5, |x, o| {
            let e = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 3.0).exp();
            for (ab, v) in o.iter_mut().enumerate() {
                *v = e * (ab as f64 - 4.0) * x[ab % 3];
            }
        });
        let pa = phi_profile(&a, &sched, &w, &opts).unwrap();
        let pb = phi_profile(&b, &sched, &w, &opts).unwrap();
        let pc = phi_profile(&a.lincomb(1.5, &b, -2.0).unwrap(), &sched, &w, &opts).unwrap();
        let want = pa.lincomb(1.5, &pb, -2.0).unwrap();
        assert!(pc.lincomb(1.0, &want, -1.0).unwrap().max_abs() < 1e-10 * want.max_abs());
        assert!(relative_divergence(&pa, &w).unwrap() < 1e-10);
        assert!(relative_divergence(&pb, &w).unwrap() < 1e-10);
    }

    #[test]
    fn symmetric_shortcut_matches_general_path() {
        let w = ws(6.0, 16);
        let g = w.grid;
        let sym = TensorProfile::from_fn(g, 0.5, |x, o| {
            let e = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp();
            let v = [x[0] * e, (x[1] + 0.5) * e, e];
            for a in 0..3 {
                for b in 0..3 {
                    o[a * 3 + b] = v[a] * v[b];
                }
            }
        });
        let mut general = sym.clone();
        general.comps[1][0] += 1e-300; // breaks exact symmetry
        let sched = DuhamelSchedule::new(8).unwrap();
        let opts = DuhamelOptions::default();
        let a = phi_profile(&sym, &sched, &w, &opts).unwrap();
        let b = phi_profile(&general, &sched, &w, &opts).unwrap();
        assert!(a.lincomb(1.0, &b, -1.0).unwrap().max_abs() < 1e-13);
        let anti = TensorProfile::from_fn(g, 0.5, |x, o| {
            let e = (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 4.0).exp();
            *o = [0.0, e * x[2], e, -e * x[2], 0.0, e * x[0], -e, -e * x[0], 0.0];
        });
        let mut ga = anti.clone();
        ga.comps[0][0] += 1e-300;
        let c = duhamel_heat(&anti, &sched, &w, &opts).unwrap();
        let d = duhamel_heat(&ga, &sched, &w, &opts).unwrap();
        assert!(c.lincomb(1.0, &d, -1.0).unwrap().max_abs() < 1e-13);
        // divergence of an antisymmetric source is itself solenoidal
        assert!(relative_divergence(&c, &w).unwrap() < 1e-10);
    }

    #[test]
    fn gaussian_source_matches_exact_heat_solution() {
        // f(x, s) = s^{-1} f_hat(x / sqrt s) with f_hat = e^{-|y|^2/4} I / (4 pi)^{3/2}
        // is s^{1/2} Gamma(x, s) I, so int_0^1 e^{(1-s)D} div f ds = grad Gamma(x, 1) * 2/3.
        let l = 10.0;
        let w = ws(l, 32);
        let g = w.grid;
        let src = TensorProfile::from_fn(g, 0.5, |x, o| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let v = (4.0 * PI).powf(-1.5) * (-r2 / 4.0).exp();
            *o = [v, 0.0, 0.0, 0.0, v, 0.0, 0.0, 0.0, v];
        });
        let opts = DuhamelOptions::default();
        let out = duhamel_heat(&src, &DuhamelSchedule::new(32).unwrap(), &w, &opts).unwrap();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..g.len() {
            let x = g.point(i);
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let gam = (4.0 * PI).powf(-1.5) * (-r2 / 4.0).exp();
            for a in 0..3 {
                let want = 2.0 / 3.0 * (-x[a] / 2.0) * gam;
                err = err.max((out.comps[a][i] - want).abs());
                scale = scale.max(want.abs());
            }
        }
        // spatial error: 1.1e-5 at n = 32, 2.8e-6 at 48, 1.0e-6 at 64
        assert!(err < 2.5e-3 * scale, "{err} {scale}");
        // the projected version removes the pure gradient
        let p = phi_profile(&src, &DuhamelSchedule::new(32).unwrap(), &w, &opts).unwrap();
        assert!(p.max_abs() < 2.5e-3 * scale);
    }

    fn random<const C: usize>(g: GridSpec, vals: &[f64]) -> Profile<C> {
        let n = g.len();
        Profile::from_comps(g, 0.5, std::array::from_fn(|c| vals[c * n..(c + 1) * n].to_vec())).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn leray_is_idempotent_on_random_fields(vals in proptest::collection::vec(-1.0f64..1.0, 3 * 512)) {
            let w = ws(2.5, 8);
            let p = leray_project(&random::<3>(w.grid, &vals), &w).unwrap();
            let pp = leray_project(&p, &w).unwrap();
            proptest::prop_assert!(p.lincomb(1.0, &pp, -1.0).unwrap().l2_norm() <= 1e-12 * p.l2_norm());
        }

        #[test]
        fn heat_semigroup_on_random_fields(
            vals in proptest::collection::vec(-1.0f64..1.0, 3 * 512),
            t1 in 0.0f64..0.5,
            t2 in 0.0f64..0.5,
        ) {
            let w = ws(2.0, 8);
            let u = random::<3>(w.grid, &vals);
            let a = heat_propagate(&heat_propagate(&u, t1, &w).unwrap(), t2, &w).unwrap();
            let b = heat_propagate(&u, t1 + t2, &w).unwrap();
            proptest::prop_assert!(a.lincomb(1.0, &b, -1.0).unwrap().max_abs() <= 1e-13 * u.max_abs());
        }

        #[test]
        fn phi_is_linear_on_random_pairs(
            va in proptest::collection::vec(-1.0f64..1.0, 9 * 512),
            vb in proptest::collection::vec(-1.0f64..1.0, 9 * 512),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let w = ws(4.0, 8);
            let g = w.grid;
            let sched = DuhamelSchedule::new(8).unwrap();
            let opts = DuhamelOptions::default();
            let (a, b) = (random::<9>(g, &va), random::<9>(g, &vb));
            let pa = phi_profile(&a, &sched, &w, &opts).unwrap();
            let pb = phi_profile(&b, &sched, &w, &opts).unwrap();
            let pc = phi_profile(&a.lincomb(alpha, &b, beta).unwrap(), &sched, &w, &opts).unwrap();
            let want = pa.lincomb(alpha, &pb, beta).unwrap();
            let scale = pa.max_abs() * alpha.abs() + pb.max_abs() * beta.abs();
            proptest::prop_assert!(pc.lincomb(1.0, &want, -1.0).unwrap().max_abs() <= 1e-10 * scale.max(1e-300));
        }
    }
}
