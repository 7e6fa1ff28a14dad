//! Central finite differences of arbitrary even order on the grid interior.

use crate::grid::GridSpec;

/// Central stencil weights of order `2p` for the first and second derivative.
#[derive(Clone, Debug)]
pub struct Central {
    pub half_width: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d2_center: f64,
}

impl Central {
    pub fn new(order: usize) -> Self {
        assert!(order >= 2 && order % 2 == 0, "order must be even");
        let p = order / 2;
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        let pf2 = fact(p) * fact(p);
        let mut d1 = Vec::with_capacity(p);
        let mut d2 = Vec::with_capacity(p);
        for m in 1..=p {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            let base = 2.0 * sign * pf2 / (fact(p - m) * fact(p + m));
            d1.push(base / (2 * m) as f64);
            d2.push(base / (m * m) as f64);
        }
        let d2_center = -2.0 * d2.iter().sum::<f64>();
        Central {
            half_width: p,
            d1,
            d2,
            d2_center,
        }
    }

    #[inline]
    fn stride(grid: &GridSpec, axis: usize) -> usize {
        grid.n.pow(axis as u32)
    }

    /// Whether the stencil fits around `idx` on every axis.
    #[inline]
    pub fn fits(&self, grid: &GridSpec, idx: usize) -> bool {
        let (i, j, k) = grid.unravel(idx);
        let p = self.half_width;
        [i, j, k].iter().all(|&c| c >= p && c + p < grid.n)
    }

    /// `d/dx_axis` at `idx`; caller checks [`fits`](Self::fits).
    #[inline]
    pub fn d1(&self, grid: &GridSpec, data: &[f64], idx: usize, axis: usize) -> f64 {
        let s = Self::stride(grid, axis);
        let mut acc = 0.0;
        for (m, c) in self.d1.iter().enumerate() {
            let o = (m + 1) * s;
            acc += c * (data[idx + o] - data[idx - o]);
        }
        acc / grid.spacing()
    }

    #[inline]
    pub fn d2(&self, grid: &GridSpec, data: &[f64], idx: usize, axis: usize) -> f64 {
        let s = Self::stride(grid, axis);
        let mut acc = self.d2_center * data[idx];
        for (m, c) in self.d2.iter().enumerate() {
            let o = (m + 1) * s;
            acc += c * (data[idx + o] + data[idx - o]);
        }
        let h = grid.spacing();
        acc / (h * h)
    }

    #[inline]
    pub fn laplacian(&self, grid: &GridSpec, data: &[f64], idx: usize) -> f64 {
        (0..3).map(|a| self.d2(grid, data, idx, a)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_eighth_order_weights() {
        let c = Central::new(8);
        let want1 = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        let want2 = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
        for m in 0..4 {
            assert!((c.d1[m] - want1[m]).abs() < 1e-15);
            assert!((c.d2[m] - want2[m]).abs() < 1e-15);
        }
        assert!((c.d2_center + 205.0 / 72.0).abs() < 1e-14);
    }

    #[test]
    fn exact_on_polynomials_and_accurate_on_smooth() {
        let g = GridSpec::new(2.0, 24).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                x[0].powi(5) - x[1] * x[2].powi(3)
            })
            .collect();
        let c = Central::new(8);
        let idx = g.index(12, 10, 14);
        let x = g.point(idx);
        assert!(c.fits(&g, idx));
        assert!((c.d1(&g, &f, idx, 0) - 5.0 * x[0].powi(4)).abs() < 1e-10);
        assert!((c.d1(&g, &f, idx, 2) + 3.0 * x[1] * x[2] * x[2]).abs() < 1e-10);
        assert!((c.laplacian(&g, &f, idx) - (20.0 * x[0].powi(3) - 6.0 * x[1] * x[2])).abs() < 1e-9);
        let s: Vec<f64> = (0..g.len()).map(|i| (g.point(i)[1]).sin()).collect();
        assert!((c.d2(&g, &s, idx, 1) + x[1].sin()).abs() < 1e-7);
        assert!(!c.fits(&g, g.index(3, 12, 12)));
    }
}
