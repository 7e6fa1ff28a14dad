//! Cubic Lagrange interpolation on the uniform grid.

use crate::exec;
use crate::grid::GridSpec;
use crate::quadrature::lagrange4_uniform;

/// Stencil `(first index, weights)` for coordinate `y`, if the four nodes
/// `i0-1 ..= i0+2` lie on the grid.
#[inline]
pub fn stencil(grid: &GridSpec, y: f64) -> Option<(usize, [f64; 4])> {
    let t = (y + grid.half_width) / grid.spacing();
    let i0 = t.floor();
    if i0 < 1.0 || i0 + 2.0 > (grid.n - 1) as f64 {
        return None;
    }
    Some((i0 as usize - 1, lagrange4_uniform(t - i0)))
}

/// Tricubic value of `data` at `y`, or `None` near or beyond the box faces.
pub fn eval_point(grid: &GridSpec, data: &[f64], y: [f64; 3]) -> Option<f64> {
    let (ix, wx) = stencil(grid, y[0])?;
    let (iy, wy) = stencil(grid, y[1])?;
    let (iz, wz) = stencil(grid, y[2])?;
    let n = grid.n;
    let mut acc = 0.0;
    for c in 0..4 {
        let mut s1 = 0.0;
        for b in 0..4 {
            let base = ix + n * ((iy + b) + n * (iz + c));
            let row = &data[base..base + 4];
            let s0 = row[0] * wx[0] + row[1] * wx[1] + row[2] * wx[2] + row[3] * wx[3];
            s1 += wy[b] * s0;
        }
        acc += wz[c] * s1;
    }
    Some(acc)
}

/// Evaluates `x -> f(factor * x)` at every node by separable cubic passes.
#[derive(Clone, Debug)]
pub struct Rescaler {
    grid: GridSpec,
    pub factor: f64,
    taps: Vec<Option<(usize, [f64; 4])>>,
}

impl Rescaler {
    pub fn new(grid: GridSpec, factor: f64) -> Self {
        let taps = (0..grid.n).map(|i| stencil(&grid, factor * grid.coord(i))).collect();
        Rescaler { grid, factor, taps }
    }

    /// Whether the rescaled value at a node is an interpolant (and not 0).
    #[inline]
    pub fn valid(&self, idx: usize) -> bool {
        let (i, j, k) = self.grid.unravel(idx);
        self.taps[i].is_some() && self.taps[j].is_some() && self.taps[k].is_some()
    }

    /// Fill `out` with the rescaled samples; nodes that are not [`valid`](Self::valid) get 0.
    pub fn apply(&self, src: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let plane = n * n;
        let mut t1 = vec![0.0; src.len()];
        exec::for_each_chunk_mut(&mut t1, plane, |k, p| {
            let sp = &src[k * plane..(k + 1) * plane];
            for j in 0..n {
                for (i, tap) in self.taps.iter().enumerate() {
                    if let Some((i0, w)) = tap {
                        let r = &sp[j * n + i0..j * n + i0 + 4];
                        p[j * n + i] = w[0] * r[0] + w[1] * r[1] + w[2] * r[2] + w[3] * r[3];
                    }
                }
            }
        });
        let mut t2 = vec![0.0; src.len()];
        exec::for_each_chunk_mut(&mut t2, plane, |k, p| {
            let sp = &t1[k * plane..(k + 1) * plane];
            for (j, tap) in self.taps.iter().enumerate() {
                if let Some((j0, w)) = tap {
                    for i in 0..n {
                        let mut s = 0.0;
                        for m in 0..4 {
                            s += w[m] * sp[(j0 + m) * n + i];
                        }
                        p[j * n + i] = s;
                    }
                }
            }
        });
        exec::for_each_chunk_mut(out, plane, |k, p| match self.taps[k] {
            Some((k0, w)) => {
                for (q, v) in p.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for m in 0..4 {
                        s += w[m] * t2[(k0 + m) * plane + q];
                    }
                    *v = s;
                }
            }
            None => p.iter_mut().for_each(|v| *v = 0.0),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(x: [f64; 3]) -> f64 {
        1.0 + x[0] - 0.5 * x[1] * x[1] + 0.1 * x[2].powi(3) + x[0] * x[1] * x[2]
    }

    #[test]
    fn point_interpolation_reproduces_cubics() {
        let g = GridSpec::new(2.0, 16).unwrap();
        let d: Vec<f64> = (0..g.len()).map(|i| cubic(g.point(i))).collect();
        for y in [[0.1, -0.33, 1.2], [0.0, 0.0, 0.0], [-1.7, 1.2, 0.77]] {
            assert!((eval_point(&g, &d, y).unwrap() - cubic(y)).abs() < 1e-12);
        }
        assert!(eval_point(&g, &d, [1.9, 0.0, 0.0]).is_none());
    }

    #[test]
    fn rescaler_matches_pointwise() {
        let g = GridSpec::new(2.0, 16).unwrap();
        let d: Vec<f64> = (0..g.len()).map(|i| cubic(g.point(i))).collect();
        let r = Rescaler::new(g, 1.7);
        let mut out = vec![0.0; g.len()];
        r.apply(&d, &mut out);
        let mut nvalid = 0;
        for idx in 0..g.len() {
            let x = g.point(idx);
            let y = [1.7 * x[0], 1.7 * x[1], 1.7 * x[2]];
            match eval_point(&g, &d, y) {
                Some(v) => {
                    assert!(r.valid(idx));
                    assert!((out[idx] - v).abs() < 1e-12);
                    assert!((out[idx] - cubic(y)).abs() < 1e-11);
                    nvalid += 1;
                }
                None => {
                    assert!(!r.valid(idx));
                    assert_eq!(out[idx], 0.0);
                }
            }
        }
        assert!(nvalid > 0);
    }
}
