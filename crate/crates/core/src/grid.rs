use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic-compatible grid on the cube `[-L, L)^3`.
///
/// Node `(i, j, k)` sits at `(-L + i h, -L + j h, -L + k h)` with `h = 2L / n`;
/// the flat index is x-fastest: `i + n (j + n k)`. With `n` even the origin is
/// the node `(n/2, n/2, n/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n: usize,
    pub origin_mask_radius: f64,
}

impl GridSpec {
    /// Grid with the default origin mask of two cells.
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        let h = 2.0 * half_width / n.max(1) as f64;
        Self::with_mask(half_width, n, 2.0 * h)
    }

    pub fn with_mask(half_width: f64, n: usize, origin_mask_radius: f64) -> Result<Self> {
        let g = GridSpec {
            half_width,
            n,
            origin_mask_radius,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half_width must be positive, got {}",
                self.half_width
            )));
        }
        if self.n < 8 {
            return Err(Error::InvalidGrid(format!("n must be >= 8, got {}", self.n)));
        }
        if self.n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n must be even, got {}", self.n)));
        }
        let h = self.spacing();
        if self.origin_mask_radius < h * (1.0 - 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "origin_mask_radius {} is below the grid spacing {}",
                self.origin_mask_radius, h
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unravel(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    #[inline]
    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// True for nodes inside the origin mask ball.
    #[inline]
    pub fn in_origin_mask(&self, idx: usize) -> bool {
        self.radius(idx) < self.origin_mask_radius
    }

    /// True when the node lies at least `band` away from every face of the box.
    #[inline]
    pub fn is_interior(&self, idx: usize, band: f64) -> bool {
        let p = self.point(idx);
        let lim = self.half_width - band;
        p.iter().all(|c| c.abs() <= lim + 1e-12)
    }

    pub fn is_power_of_two(&self) -> bool {
        self.n.is_power_of_two()
    }

    /// Same box with half the spacing per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        GridSpec::with_mask(self.half_width, self.n * factor, self.origin_mask_radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0.0, 16).is_err());
        assert!(GridSpec::new(1.0, 4).is_err());
        assert!(GridSpec::new(1.0, 9).is_err());
        assert!(GridSpec::with_mask(1.0, 16, 0.01).is_err());
    }

    #[test]
    fn origin_is_a_node() {
        let g = GridSpec::new(8.0, 16).unwrap();
        let idx = g.index(8, 8, 8);
        assert_eq!(g.point(idx), [0.0, 0.0, 0.0]);
        assert!(g.in_origin_mask(idx));
        assert_eq!(g.unravel(g.index(3, 5, 7)), (3, 5, 7));
    }
}
