//! FFT-based calculus on the periodic box of period `2L`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{Profile, ScalarProfile, VectorProfile};
use crate::grid::GridSpec;

/// Three-dimensional complex FFT built from 1-D line transforms.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform including the `1/n^3` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        exec::for_each_chunk_mut(data, self.n * self.n, |_, c| {
            c.iter_mut().for_each(|v| *v *= s)
        });
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "buffer does not match FFT size");
        let plane = n * n;
        let lines = |chunk: &mut [Complex64]| {
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(chunk, &mut scratch);
        };
        // x lines are contiguous.
        exec::for_each_chunk_mut(data, plane, |_, p| lines(p));
        // y lines: transpose each z-plane.
        exec::for_each_chunk_mut(data, plane, |_, p| {
            transpose_plane(p, n);
            lines(p);
            transpose_plane(p, n);
        });
        // z lines: gather each y-slab as n contiguous z-lines, then scatter back.
        let slabs: Vec<Vec<Complex64>> = {
            let src = &*data;
            exec::map_collect(n, |j| {
                let mut buf = vec![Complex64::default(); plane];
                for k in 0..n {
                    let row = &src[n * (j + n * k)..n * (j + n * k) + n];
                    for (i, v) in row.iter().enumerate() {
                        buf[i * n + k] = *v;
                    }
                }
                lines(&mut buf);
                buf
            })
        };
        exec::for_each_chunk_mut(data, plane, |k, p| {
            for (j, slab) in slabs.iter().enumerate() {
                for i in 0..n {
                    p[i + n * j] = slab[i * n + k];
                }
            }
        });
    }
}

fn transpose_plane(p: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            p.swap(i + n * j, j + n * i);
        }
    }
}

/// Wavenumbers, dealiasing mask and FFT plans for one grid.
#[derive(Clone, Debug)]
pub struct FourierWorkspace {
    pub grid: GridSpec,
    /// `k_m = pi m / L` in FFT order; identical on every axis.
    pub wavenumbers: Vec<f64>,
    /// Fraction of the highest modes removed by [`FourierWorkspace::dealias`].
    pub dealias_fraction: f64,
    fft: Fft3,
}

impl FourierWorkspace {
    pub fn new(grid: GridSpec) -> Result<Self> {
        Self::with_dealias(grid, 1.0 / 3.0)
    }

    pub fn with_dealias(grid: GridSpec, dealias_fraction: f64) -> Result<Self> {
        grid.validate()?;
        if !(0.0..1.0).contains(&dealias_fraction) {
            return Err(Error::InvalidArgument(format!(
                "dealias fraction {dealias_fraction} outside [0,1)"
            )));
        }
        let n = grid.n;
        let dk = std::f64::consts::PI / grid.half_width;
        let wavenumbers = (0..n).map(|i| dk * signed_mode(i, n) as f64).collect();
        Ok(FourierWorkspace {
            grid,
            wavenumbers,
            dealias_fraction,
            fft: Fft3::new(n),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Wavevector used for first derivatives; the Nyquist mode is zeroed so
    /// that real fields stay real.
    #[inline]
    pub fn kd(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.grid.unravel(idx);
        let n = self.n();
        let w = |m: usize| if m == n / 2 { 0.0 } else { self.wavenumbers[m] };
        [w(i), w(j), w(k)]
    }

    /// True wavevector, Nyquist included.
    #[inline]
    pub fn k(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.grid.unravel(idx);
        let w = &self.wavenumbers;
        [w[i], w[j], w[k]]
    }

    /// True `|k|^2`, used by the Laplacian and the heat multiplier.
    #[inline]
    pub fn k2(&self, idx: usize) -> f64 {
        let (i, j, k) = self.grid.unravel(idx);
        let w = &self.wavenumbers;
        w[i] * w[i] + w[j] * w[j] + w[k] * w[k]
    }

    /// Whether a mode survives dealiasing.
    #[inline]
    pub fn keeps(&self, idx: usize) -> bool {
        let (i, j, k) = self.grid.unravel(idx);
        let n = self.n() as f64;
        let cut = 0.5 * n * (1.0 - self.dealias_fraction);
        let ok = |m: usize| (signed_mode(m, self.n()).unsigned_abs() as f64) <= cut;
        ok(i) && ok(j) && ok(k)
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = real.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut d);
        d
    }

    /// Inverse transform keeping the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse(&mut spec);
        spec.into_iter().map(|z| z.re).collect()
    }

    /// Forward transforms of two real fields with one complex FFT.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut z: Vec<Complex64> = a.iter().zip(b.iter()).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.fft.forward(&mut z);
        let n = self.grid.n;
        let neg = |m: usize| (n - m) % n;
        let mut fa = vec![Complex64::default(); z.len()];
        let mut fb = vec![Complex64::default(); z.len()];
        let half = Complex64::new(0.5, 0.0);
        let mhalf_i = Complex64::new(0.0, -0.5);
        // Hermitian split with the mirror index taken row by row.
        let split = |out: &mut Vec<Complex64>, f: &(dyn Fn(Complex64, Complex64) -> Complex64 + Sync)| {
            exec::for_each_chunk_mut(out, n, |row, c| {
                let mirror = (neg(row % n) + n * neg(row / n)) * n;
                for (i, v) in c.iter_mut().enumerate() {
                    *v = f(z[row * n + i], z[mirror + neg(i)].conj());
                }
            });
        };
        split(&mut fa, &|a, b| half * (a + b));
        split(&mut fb, &|a, b| mhalf_i * (a - b));
        (fa, fb)
    }

    /// Inverse transforms of two Hermitian spectra with one complex FFT.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut z: Vec<Complex64> = a.iter().zip(b.iter()).map(|(&x, &y)| x + i * y).collect();
        self.fft.inverse(&mut z);
        (z.iter().map(|v| v.re).collect(), z.iter().map(|v| v.im).collect())
    }

    pub fn dealias(&self, spec: &mut [Complex64]) {
        exec::for_each_mut(spec, |idx, z| {
            if !self.keeps(idx) {
                *z = Complex64::default();
            }
        });
    }

    /// Spectral derivative `d/dx_axis` of real samples.
    pub fn derivative(&self, real: &[f64], axis: usize) -> Vec<f64> {
        let mut s = self.forward(real);
        exec::for_each_mut(&mut s, |idx, z| {
            *z *= Complex64::new(0.0, self.kd(idx)[axis]);
        });
        self.inverse(s)
    }

    pub fn laplacian(&self, real: &[f64]) -> Vec<f64> {
        let mut s = self.forward(real);
        exec::for_each_mut(&mut s, |idx, z| *z *= -self.k2(idx));
        self.inverse(s)
    }

    pub(crate) fn check(&self, grid: &GridSpec) -> Result<()> {
        if *grid != self.grid {
            return Err(Error::GridMismatch("field", "workspace"));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Pointwise divergence samples and their max-abs.
#[derive(Clone, Debug)]
pub struct Divergence {
    pub samples: Vec<f64>,
    pub max_abs: f64,
}

pub fn spectral_divergence(field: &VectorProfile, ws: &FourierWorkspace) -> Result<Divergence> {
    ws.check(&field.grid)?;
    let mut acc = vec![Complex64::default(); field.grid.len()];
    for a in 0..3 {
        let s = ws.forward(&field.comps[a]);
        exec::for_each_mut(&mut acc, |idx, z| {
            *z += Complex64::new(0.0, ws.kd(idx)[a]) * s[idx];
        });
    }
    let samples = ws.inverse(acc);
    let max_abs = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Divergence { samples, max_abs })
}

/// Divergence max-abs divided by the field max-abs (0 for a zero field).
pub fn relative_divergence(field: &VectorProfile, ws: &FourierWorkspace) -> Result<f64> {
    let d = spectral_divergence(field, ws)?;
    let m = field.comps.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(if m > 0.0 { d.max_abs / m } else { 0.0 })
}

pub fn gradient(field: &ScalarProfile, ws: &FourierWorkspace) -> Result<VectorProfile> {
    ws.check(&field.grid)?;
    let s = ws.forward(&field.comps[0]);
    let comps: [Vec<f64>; 3] = std::array::from_fn(|a| {
        let mut d = s.clone();
        exec::for_each_mut(&mut d, |idx, z| *z *= Complex64::new(0.0, ws.kd(idx)[a]));
        ws.inverse(d)
    });
    Ok(Profile {
        grid: field.grid,
        comps,
        gamma: field.gamma,
        masked: field.masked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ws(l: f64, n: usize) -> FourierWorkspace {
        FourierWorkspace::new(GridSpec::new(l, n).unwrap()).unwrap()
    }

    #[test]
    fn fft_round_trip_and_single_mode() {
        let w = ws(3.0, 8);
        let g = w.grid;
        let f: Vec<f64> = (0..g.len())
            .map(|idx| {
                let x = g.point(idx);
                (PI * x[2] / 3.0).cos() + 0.25 * x[0]
            })
            .collect();
        let back = w.inverse(w.forward(&f));
        for (a, b) in f.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // cos(pi z / L) puts n^3/2 on modes (0,0,+-1) only
        let g2: Vec<f64> = (0..g.len()).map(|idx| (PI * g.point(idx)[2] / 3.0).cos()).collect();
        let s = w.forward(&g2);
        let hit = g.index(0, 0, 1);
        assert!((s[hit].norm() - 256.0).abs() < 1e-9);
        assert!(s[g.index(1, 0, 0)].norm() < 1e-9);
    }

    #[test]
    fn divergence_examples() {
        let l = 2.0;
        let w = ws(l, 16);
        let g = w.grid;
        let c = VectorProfile::from_fn(g, 0.5, |_, o| *o = [1.0, -2.0, 0.5]);
        assert!(spectral_divergence(&c, &w).unwrap().max_abs < 1e-12);
        let s2 = VectorProfile::from_fn(g, 0.5, |x, o| *o = [(PI * x[1] / l).sin(), 0.0, 0.0]);
        assert!(spectral_divergence(&s2, &w).unwrap().max_abs < 1e-12);
        let s1 = VectorProfile::from_fn(g, 0.5, |x, o| *o = [(PI * x[0] / l).sin(), 0.0, 0.0]);
        let d = spectral_divergence(&s1, &w).unwrap();
        for idx in 0..g.len() {
            let want = PI / l * (PI * g.point(idx)[0] / l).cos();
            assert!((d.samples[idx] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_and_gradient_of_mode() {
        let l = 1.5;
        let w = ws(l, 16);
        let g = w.grid;
        let k = PI / l;
        let f = ScalarProfile::from_fn(g, 0.5, |x, o| o[0] = (k * x[0]).sin() * (2.0 * k * x[1]).cos());
        let lap = w.laplacian(&f.comps[0]);
        let gr = gradient(&f, &w).unwrap();
        for idx in 0..g.len() {
            let x = g.point(idx);
            assert!((lap[idx] + 5.0 * k * k * f.comps[0][idx]).abs() < 1e-10);
            let gx = k * (k * x[0]).cos() * (2.0 * k * x[1]).cos();
            assert!((gr.comps[0][idx] - gx).abs() < 1e-10);
        }
    }

    #[test]
    fn paired_transforms_match_single() {
        let w = ws(2.0, 8);
        let g = w.grid;
        let a: Vec<f64> = (0..g.len()).map(|i| (g.point(i)[0] * 1.3).sin() + g.point(i)[2]).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| (g.point(i)[1] * g.point(i)[2]).cos()).collect();
        let (fa, fb) = w.forward_pair(&a, &b);
        let (sa, sb) = (w.forward(&a), w.forward(&b));
        for i in 0..g.len() {
            assert!((fa[i] - sa[i]).norm() < 1e-11 && (fb[i] - sb[i]).norm() < 1e-11);
        }
        let (ra, rb) = w.inverse_pair(&fa, &fb);
        for i in 0..g.len() {
            assert!((ra[i] - a[i]).abs() < 1e-12 && (rb[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let w = ws(1.0, 12);
        let g = w.grid;
        assert!(w.keeps(g.index(4, 0, 11)));
        assert!(!w.keeps(g.index(5, 0, 0)));
        assert!(!w.keeps(g.index(0, 7, 0)));
    }
}
