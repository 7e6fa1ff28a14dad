//! Homogeneous degree -1 data represented by traces on the unit sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec;
use crate::field::Profile;
use crate::grid::GridSpec;
use crate::quadrature::{gauss_legendre, lagrange4, lagrange4_uniform};

/// Product rule on S^2: Gauss-Legendre in `cos(polar)` times the trapezoid
/// rule in azimuth. Exact for spherical polynomials of degree
/// `< min(2 n_polar, n_azimuth)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereQuadrature {
    /// Polar angles, ascending in `(0, pi)`.
    pub polar: Vec<f64>,
    pub polar_weights: Vec<f64>,
    pub n_azimuth: usize,
}

impl SphereQuadrature {
    pub fn new(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 4 || n_azimuth < 8 || n_azimuth % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "sphere rule needs n_polar >= 4 and even n_azimuth >= 8, got {n_polar}x{n_azimuth}"
            )));
        }
        let (x, w) = gauss_legendre(n_polar);
        // x ascending means polar angle descending; flip.
        let polar = x.iter().rev().map(|c| c.acos()).collect();
        let polar_weights = w.iter().rev().copied().collect();
        Ok(SphereQuadrature {
            polar,
            polar_weights,
            n_azimuth,
        })
    }

    pub fn len(&self) -> usize {
        self.polar.len() * self.n_azimuth
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn azimuth(&self, ia: usize) -> f64 {
        2.0 * PI * ia as f64 / self.n_azimuth as f64
    }

    #[inline]
    pub fn direction(&self, node: usize) -> [f64; 3] {
        let ip = node / self.n_azimuth;
        let ia = node % self.n_azimuth;
        unit(self.polar[ip], self.azimuth(ia))
    }

    #[inline]
    pub fn weight(&self, node: usize) -> f64 {
        self.polar_weights[node / self.n_azimuth] * 2.0 * PI / self.n_azimuth as f64
    }
}

#[inline]
pub fn unit(polar: f64, azimuth: f64) -> [f64; 3] {
    let s = polar.sin();
    [s * azimuth.cos(), s * azimuth.sin(), polar.cos()]
}

/// Values of `omega` on the nodes of a [`SphereQuadrature`]; encodes the
/// degree -1 field `x -> omega(x/|x|) / |x|`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalTrace {
    pub quad: SphereQuadrature,
    pub ncomp: usize,
    /// `values[node * ncomp + c]`.
    pub values: Vec<f64>,
}

impl SphericalTrace {
    pub fn from_fn<F>(quad: SphereQuadrature, ncomp: usize, f: F) -> Self
    where
        F: Fn([f64; 3], &mut [f64]),
    {
        let mut values = vec![0.0; quad.len() * ncomp];
        for node in 0..quad.len() {
            f(quad.direction(node), &mut values[node * ncomp..(node + 1) * ncomp]);
        }
        SphericalTrace {
            quad,
            ncomp,
            values,
        }
    }

    pub fn zeros(quad: SphereQuadrature, ncomp: usize) -> Self {
        let values = vec![0.0; quad.len() * ncomp];
        SphericalTrace {
            quad,
            ncomp,
            values,
        }
    }

    #[inline]
    pub fn node_values(&self, node: usize) -> &[f64] {
        &self.values[node * self.ncomp..(node + 1) * self.ncomp]
    }

    /// `sup_nodes |omega|`, the datum constant of the homogeneous bound.
    pub fn sup_norm(&self) -> f64 {
        (0..self.quad.len())
            .map(|n| self.node_values(n).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut t = self.clone();
        t.values.iter_mut().for_each(|v| *v *= a);
        t
    }

    /// `a * self + b * other` on a shared node set.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.quad != other.quad || self.ncomp != other.ncomp {
            return Err(Error::InvalidArgument("trace layouts differ".into()));
        }
        let mut t = self.clone();
        for (x, y) in t.values.iter_mut().zip(other.values.iter()) {
            *x = a * *x + b * y;
        }
        Ok(t)
    }

    /// Tensor trace whose column `j` is the vector trace `cols[j]`.
    pub fn tensor_from_columns(cols: [&SphericalTrace; 3]) -> Result<Self> {
        let quad = cols[0].quad.clone();
        if cols.iter().any(|c| c.quad != quad || c.ncomp != 3) {
            return Err(Error::InvalidArgument("tensor columns must be vector traces on one rule".into()));
        }
        Ok(SphericalTrace::from_node_fn(quad, 9, |node, out| {
            for a in 0..3 {
                for j in 0..3 {
                    out[a * 3 + j] = cols[j].node_values(node)[a];
                }
            }
        }))
    }

    fn from_node_fn<F: Fn(usize, &mut [f64])>(quad: SphereQuadrature, ncomp: usize, f: F) -> Self {
        let mut values = vec![0.0; quad.len() * ncomp];
        for node in 0..quad.len() {
            f(node, &mut values[node * ncomp..(node + 1) * ncomp]);
        }
        SphericalTrace {
            quad,
            ncomp,
            values,
        }
    }

    /// Tensor-cubic interpolation in (polar, azimuth), continued across the
    /// poles by reflection `(-b, phi) ~ (b, phi + pi)`.
    pub fn eval_into(&self, dir: [f64; 3], out: &mut [f64]) {
        let r = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let cz = (dir[2] / r).clamp(-1.0, 1.0);
        let beta = cz.acos();
        let mut phi = dir[1].atan2(dir[0]);
        if phi < 0.0 {
            phi += 2.0 * PI;
        }
        self.eval_angles(beta, phi, out);
    }

    pub fn eval_angles(&self, beta: f64, phi: f64, out: &mut [f64]) {
        let np = self.quad.polar.len() as isize;
        let polar = &self.quad.polar;
        let i0: isize = if beta < polar[0] {
            -1
        } else {
            polar.partition_point(|&b| b <= beta) as isize - 1
        };
        let i0 = i0.min(np - 2).max(-1);
        let ext = |i: isize| -> (usize, bool, f64) {
            if i < 0 {
                let r = (-i - 1) as usize;
                (r, true, -polar[r])
            } else if i >= np {
                let r = (2 * np - 1 - i) as usize;
                (r, true, 2.0 * PI - polar[r])
            } else {
                (i as usize, false, polar[i as usize])
            }
        };
        let st: [(usize, bool, f64); 4] = std::array::from_fn(|m| ext(i0 - 1 + m as isize));
        let wp = lagrange4([st[0].2, st[1].2, st[2].2, st[3].2], beta);

        let na = self.quad.n_azimuth;
        let dphi = 2.0 * PI / na as f64;
        let az_weights = |shift: bool| {
            let p = if shift { phi + PI } else { phi };
            let t = p / dphi;
            let j0 = t.floor();
            let w = lagrange4_uniform(t - j0);
            let j0 = j0 as isize;
            let idx: [usize; 4] =
                std::array::from_fn(|m| (j0 - 1 + m as isize).rem_euclid(na as isize) as usize);
            (idx, w)
        };
        let plain = az_weights(false);
        let shifted = az_weights(true);

        out.iter_mut().for_each(|v| *v = 0.0);
        let nc = self.ncomp;
        for m in 0..4 {
            let (ip, sh, _) = st[m];
            let (idx, w) = if sh { &shifted } else { &plain };
            for q in 0..4 {
                let wt = wp[m] * w[q];
                let base = (ip * na + idx[q]) * nc;
                for c in 0..nc {
                    out[c] += wt * self.values[base + c];
                }
            }
        }
    }
}

/// A vector potential homogeneous of degree 0, smooth away from the origin.
pub trait DegreeZeroPotential: Sync {
    fn eval(&self, x: [f64; 3]) -> [f64; 3];

    /// Closed-form curl when available; the default differentiates numerically.
    fn curl(&self, x: [f64; 3]) -> [f64; 3] {
        numeric_curl(|y| self.eval(y), x)
    }
}

/// Sixth-order central-difference curl.
pub fn numeric_curl<F: Fn([f64; 3]) -> [f64; 3]>(f: F, x: [f64; 3]) -> [f64; 3] {
    const H: f64 = 1e-3;
    const C: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    let mut jac = [[0.0; 3]; 3]; // jac[i][k] = d f_i / d x_k
    for k in 0..3 {
        let mut d = [0.0; 3];
        for (m, c) in C.iter().enumerate() {
            let s = (m + 1) as f64 * H;
            let mut xp = x;
            let mut xm = x;
            xp[k] += s;
            xm[k] -= s;
            let fp = f(xp);
            let fm = f(xm);
            for i in 0..3 {
                d[i] += c * (fp[i] - fm[i]);
            }
        }
        for i in 0..3 {
            jac[i][k] = d[i] / H;
        }
    }
    [
        jac[2][1] - jac[1][2],
        jac[0][2] - jac[2][0],
        jac[1][0] - jac[0][1],
    ]
}

/// Constant potential; its curl vanishes.
pub struct ConstantPotential(pub [f64; 3]);

impl DegreeZeroPotential for ConstantPotential {
    fn eval(&self, _x: [f64; 3]) -> [f64; 3] {
        self.0
    }
    fn curl(&self, _x: [f64; 3]) -> [f64; 3] {
        [0.0; 3]
    }
}

/// `A(x) = amp * e_axis * x_lift / |x|`, i.e. the `axis` component equals
/// `amp * x_lift / |x|`.
pub struct AxialPotential {
    pub axis: usize,
    pub lift: usize,
    pub amplitude: f64,
}

impl DegreeZeroPotential for AxialPotential {
    fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let mut a = [0.0; 3];
        a[self.axis] = self.amplitude * x[self.lift] / r;
        a
    }

    fn curl(&self, x: [f64; 3]) -> [f64; 3] {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let r = r2.sqrt();
        // grad(x_l / r) = e_l / r - x_l x / r^3
        let g: [f64; 3] = std::array::from_fn(|k| {
            let d = if k == self.lift { 1.0 / r } else { 0.0 };
            self.amplitude * (d - x[self.lift] * x[k] / (r2 * r))
        });
        // curl(phi e_a) = grad(phi) x e_a
        let mut e = [0.0; 3];
        e[self.axis] = 1.0;
        [
            g[1] * e[2] - g[2] * e[1],
            g[2] * e[0] - g[0] * e[2],
            g[0] * e[1] - g[1] * e[0],
        ]
    }
}

/// Potential given by a closure, differentiated numerically.
pub struct FnPotential<F>(pub F);

impl<F: Fn([f64; 3]) -> [f64; 3] + Sync> DegreeZeroPotential for FnPotential<F> {
    fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        (self.0)(x)
    }
}

/// Trace of `u0 = curl A` for a degree-0 potential `A`; `u0` is homogeneous of
/// degree -1 and divergence-free away from the origin.
pub fn curl_of_degree0_potential(
    potential: &dyn DegreeZeroPotential,
    quad: &SphereQuadrature,
) -> Result<SphericalTrace> {
    let mut values = vec![0.0; quad.len() * 3];
    for node in 0..quad.len() {
        let d = quad.direction(node);
        let c = potential.curl(d);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePotential { direction: d });
        }
        values[node * 3..node * 3 + 3].copy_from_slice(&c);
    }
    Ok(SphericalTrace {
        quad: quad.clone(),
        ncomp: 3,
        values,
    })
}

/// Sample `omega(x/|x|) / |x|` on the grid; origin-ball nodes are zeroed and
/// the profile is flagged as masked.
pub fn sample_trace<const C: usize>(trace: &SphericalTrace, grid: GridSpec) -> Result<Profile<C>> {
    grid.validate()?;
    if trace.ncomp != C {
        return Err(Error::InvalidArgument(format!(
            "trace has {} components, profile expects {C}",
            trace.ncomp
        )));
    }
    let vals: Vec<[f64; C]> = exec::map_collect(grid.len(), |idx| {
        let mut out = [0.0; C];
        if !grid.in_origin_mask(idx) {
            let x = grid.point(idx);
            let r = grid.radius(idx);
            trace.eval_into(x, &mut out);
            out.iter_mut().for_each(|v| *v /= r);
        }
        out
    });
    let mut p = Profile::<C>::zeros(grid, 0.5);
    for (idx, v) in vals.iter().enumerate() {
        for c in 0..C {
            p.comps[c][idx] = v[c];
        }
    }
    p.masked = true;
    Ok(p)
}
