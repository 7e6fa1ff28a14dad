//! Conservative remapping of a profile onto its compressed copy.
//!
//! The Duhamel sources `s^{-1} f(x / sqrt s)` shrink the profile by `sqrt s`;
//! for small `s` its core is narrower than a cell, where point samples carry
//! the wrong mass. Cell averages are exact in mass: the average of the
//! compressed field over a cell is an integral of `f` over the cell's
//! preimage, which is read off prefix sums of `f`'s own cell averages.

use crate::exec;
use crate::grid::GridSpec;
use crate::quadrature::lagrange4_uniform;

/// Fourth-order cell averages `f + (1/24) sum_a delta_a^2 f` from point
/// samples; the outermost layer keeps its point values.
pub fn cell_averages(grid: &GridSpec, data: &[f64]) -> Vec<f64> {
    let n = grid.n;
    exec::map_collect(grid.len(), |idx| {
        let (i, j, k) = grid.unravel(idx);
        let f = data[idx];
        let mut corr = 0.0;
        for (axis, c) in [i, j, k].into_iter().enumerate() {
            if c == 0 || c == n - 1 {
                continue;
            }
            let st = n.pow(axis as u32);
            corr += data[idx + st] - 2.0 * f + data[idx - st];
        }
        f + corr / 24.0
    })
}

#[derive(Clone, Copy, Debug)]
struct EdgeTap {
    first: usize,
    w: [f64; 4],
}

#[derive(Clone, Copy, Debug)]
struct Interval {
    lo: EdgeTap,
    hi: EdgeTap,
    /// Clipped preimage length in source units.
    len: f64,
}

/// Per-axis preimage integrals for the compression factor `sqrt s`.
#[derive(Clone, Debug)]
pub struct Remap {
    grid: GridSpec,
    pub s: f64,
    cells: Vec<Option<Interval>>,
}

impl Remap {
    pub fn new(grid: GridSpec, s: f64) -> Self {
        let n = grid.n;
        let h = grid.spacing();
        let e0 = -grid.half_width - 0.5 * h;
        let en = e0 + n as f64 * h;
        let rs = s.sqrt();
        let tap = |e: f64| {
            let t = (e - e0) / h;
            let j0 = (t.floor() as isize).clamp(1, n as isize - 2);
            EdgeTap {
                first: (j0 - 1) as usize,
                w: lagrange4_uniform(t - j0 as f64),
            }
        };
        let cells = (0..n)
            .map(|i| {
                let x = grid.coord(i);
                let a = ((x - 0.5 * h) / rs).max(e0);
                let b = ((x + 0.5 * h) / rs).min(en);
                (b > a).then(|| Interval {
                    lo: tap(a),
                    hi: tap(b),
                    len: b - a,
                })
            })
            .collect();
        Remap { grid, s, cells }
    }

    /// Fraction of the cell's preimage volume lying inside the source box.
    pub fn inside_fraction(&self, idx: usize) -> f64 {
        let (i, j, k) = self.grid.unravel(idx);
        let full = self.grid.spacing() / self.s.sqrt();
        [i, j, k]
            .iter()
            .map(|&c| self.cells[c].map_or(0.0, |iv| iv.len / full))
            .product()
    }

    fn line(&self, src: &[f64], stride: usize, prefix: &mut [f64], out: &mut [f64]) {
        let n = self.grid.n;
        let h = self.grid.spacing();
        prefix[0] = 0.0;
        for j in 0..n {
            prefix[j + 1] = prefix[j] + h * src[j * stride];
        }
        let at = |t: &EdgeTap| (0..4).map(|m| t.w[m] * prefix[t.first + m]).sum::<f64>();
        for (i, c) in self.cells.iter().enumerate() {
            out[i] = c.as_ref().map_or(0.0, |iv| at(&iv.hi) - at(&iv.lo));
        }
    }

    /// `out[x] = int_{preimage(cell x) ∩ box} f`, from source cell averages,
    /// in source volume units.
    pub fn apply(&self, avg: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let plane = n * n;
        let mut t1 = vec![0.0; avg.len()];
        exec::for_each_chunk_mut(&mut t1, plane, |k, p| {
            let src = &avg[k * plane..(k + 1) * plane];
            let mut prefix = vec![0.0; n + 1];
            let mut line = vec![0.0; n];
            for j in 0..n {
                self.line(&src[j * n..], 1, &mut prefix, &mut line);
                p[j * n..(j + 1) * n].copy_from_slice(&line);
            }
        });
        let mut t2 = vec![0.0; avg.len()];
        exec::for_each_chunk_mut(&mut t2, plane, |k, p| {
            let src = &t1[k * plane..(k + 1) * plane];
            let mut prefix = vec![0.0; n + 1];
            let mut line = vec![0.0; n];
            for i in 0..n {
                self.line(&src[i..], n, &mut prefix, &mut line);
                for j in 0..n {
                    p[j * n + i] = line[j];
                }
            }
        });
        let mut prefix_all = vec![0.0; (n + 1) * plane];
        for k in 0..n {
            let h = self.grid.spacing();
            for q in 0..plane {
                prefix_all[(k + 1) * plane + q] = prefix_all[k * plane + q] + h * t2[k * plane + q];
            }
        }
        exec::for_each_chunk_mut(out, plane, |k, p| match self.cells[k] {
            Some(iv) => {
                for (q, v) in p.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += iv.hi.w[m] * prefix_all[(iv.hi.first + m) * plane + q];
                        s -= iv.lo.w[m] * prefix_all[(iv.lo.first + m) * plane + q];
                    }
                    *v = s;
                }
            }
            None => p.iter_mut().for_each(|v| *v = 0.0),
        });
    }
}

/// `prod_a sinc(k_a h / 2)`, the symbol of the cell average.
#[inline]
pub fn cell_symbol(k: [f64; 3], h: f64) -> f64 {
    k.iter()
        .map(|&ka| {
            let z = 0.5 * ka * h;
            if z.abs() < 1e-8 {
                1.0
            } else {
                z.sin() / z
            }
        })
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cell_average_is_fourth_order() {
        let g = GridSpec::new(PI, 32).unwrap();
        let h = g.spacing();
        let f: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0].cos() * g.point(i)[1].sin()).collect();
        let a = cell_averages(&g, &f);
        let s = (h / 2.0).sin() / (h / 2.0);
        let idx = g.index(10, 7, 20);
        assert!((a[idx] - s * s * f[idx]).abs() < 1e-5);
    }

    #[test]
    fn identity_at_unit_scale_and_mass_conservation() {
        let g = GridSpec::new(4.0, 16).unwrap();
        let h3 = g.spacing().powi(3);
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2])).exp()
            })
            .collect();
        let r = Remap::new(g, 1.0);
        let mut out = vec![0.0; g.len()];
        r.apply(&f, &mut out);
        for i in 0..g.len() {
            assert!((out[i] - h3 * f[i]).abs() < 1e-12, "{i}");
            assert!((r.inside_fraction(i) - 1.0).abs() < 1e-12);
        }
        // strong compression: total mass moves to the central cells unchanged
        for s in [0.3, 0.01, 1e-6] {
            let r = Remap::new(g, s);
            r.apply(&f, &mut out);
            let total: f64 = out.iter().sum();
            let want: f64 = f.iter().sum::<f64>() * h3;
            assert!((total - want).abs() < 1e-12 * want, "{s}");
        }
    }

    #[test]
    fn preimage_integral_of_quadratic_is_exact() {
        let g = GridSpec::new(4.0, 16).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                1.0 + x[0] - 0.3 * x[1] * x[1] + x[0] * x[2]
            })
            .collect();
        // exact cell averages of a quadratic
        let h = g.spacing();
        let avg: Vec<f64> = f.iter().map(|v| v - 0.3 * h * h / 12.0).collect();
        let s = 0.49;
        let r = Remap::new(g, s);
        let mut out = vec![0.0; g.len()];
        r.apply(&avg, &mut out);
        let idx = g.index(8, 9, 7);
        let x = g.point(idx);
        let rs = s.sqrt();
        let (a, b): (Vec<f64>, Vec<f64>) = (0..3).map(|d| ((x[d] - h / 2.0) / rs, (x[d] + h / 2.0) / rs)).unzip();
        let int1 = |lo: f64, hi: f64| hi - lo;
        let intx = |lo: f64, hi: f64| (hi * hi - lo * lo) / 2.0;
        let intx2 = |lo: f64, hi: f64| (hi.powi(3) - lo.powi(3)) / 3.0;
        let want = int1(a[0], b[0]) * int1(a[1], b[1]) * int1(a[2], b[2])
            + intx(a[0], b[0]) * int1(a[1], b[1]) * int1(a[2], b[2])
            - 0.3 * int1(a[0], b[0]) * intx2(a[1], b[1]) * int1(a[2], b[2])
            + intx(a[0], b[0]) * int1(a[1], b[1]) * intx(a[2], b[2]);
        assert!((out[idx] - want).abs() < 1e-12, "{} {want}", out[idx]);
    }
}
