//! Sampled profiles on a [`GridSpec`].

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::GridSpec;

/// A `C`-component real field sampled at every grid node.
///
/// Tensors use `C = 9` with component `a * 3 + b` holding `T_ab`; column `j`
/// is `(T_0j, T_1j, T_2j)`. `masked` marks profiles built from data singular
/// at the origin: their origin-ball nodes are zero and are skipped by sup-norms.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile<const C: usize> {
    pub grid: GridSpec,
    pub comps: [Vec<f64>; C],
    pub gamma: f64,
    pub masked: bool,
}

pub type ScalarProfile = Profile<1>;
pub type VectorProfile = Profile<3>;
pub type TensorProfile = Profile<9>;

impl<const C: usize> Profile<C> {
    pub fn zeros(grid: GridSpec, gamma: f64) -> Self {
        Profile {
            grid,
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
            gamma,
            masked: false,
        }
    }

    /// Sample `f(x, out)` at every node.
    pub fn from_fn<F>(grid: GridSpec, gamma: f64, f: F) -> Self
    where
        F: Fn([f64; 3], &mut [f64; C]) + Sync + Send,
    {
        let vals: Vec<[f64; C]> = exec::map_collect(grid.len(), |idx| {
            let mut out = [0.0; C];
            f(grid.point(idx), &mut out);
            out
        });
        let mut p = Self::zeros(grid, gamma);
        for (idx, v) in vals.iter().enumerate() {
            for c in 0..C {
                p.comps[c][idx] = v[c];
            }
        }
        p
    }

    pub fn from_comps(grid: GridSpec, gamma: f64, comps: [Vec<f64>; C]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument(format!(
                "component length does not match grid of {} nodes",
                grid.len()
            )));
        }
        Ok(Profile {
            grid,
            comps,
            gamma,
            masked: false,
        })
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; C] {
        std::array::from_fn(|c| self.comps[c][idx])
    }

    /// Euclidean (Frobenius for tensors) magnitude at a node.
    #[inline]
    pub fn magnitude(&self, idx: usize) -> f64 {
        self.comps
            .iter()
            .map(|c| c[idx] * c[idx])
            .sum::<f64>()
            .sqrt()
    }

    /// Whether a node takes part in sup-norms.
    #[inline]
    pub fn counts(&self, idx: usize) -> bool {
        !(self.masked && self.grid.in_origin_mask(idx))
    }

    pub fn max_abs(&self) -> f64 {
        let (m, _) = exec::argmax(self.grid.len(), |i| {
            self.counts(i).then(|| self.magnitude(i))
        });
        m.max(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.comps.iter_mut() {
            c.iter_mut().for_each(|v| *v *= a);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut p = self.clone();
        p.scale(a);
        p
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("axpy lhs", "axpy rhs"));
        }
        for (x, y) in self.comps.iter_mut().zip(other.comps.iter()) {
            x.iter_mut().zip(y.iter()).for_each(|(x, y)| *x += a * y);
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        let mut out = self.scaled(a);
        out.axpy(b, other)?;
        Ok(out)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// L2 norm over the box (`h^3` times the node sum of squares).
    pub fn l2_norm(&self) -> f64 {
        let h3 = self.grid.spacing().powi(3);
        let s = exec::sum(self.grid.len(), |i| {
            if self.counts(i) {
                let m = self.magnitude(i);
                m * m
            } else {
                0.0
            }
        });
        (s * h3).sqrt()
    }

    /// `L^p` norm of the pointwise magnitude over the box.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let h3 = self.grid.spacing().powi(3);
        let s = exec::sum(self.grid.len(), |i| {
            if self.counts(i) {
                self.magnitude(i).powf(p)
            } else {
                0.0
            }
        });
        (s * h3).powf(1.0 / p)
    }
}

impl TensorProfile {
    /// Column `j` as a vector profile.
    pub fn column(&self, j: usize) -> VectorProfile {
        Profile {
            grid: self.grid,
            comps: std::array::from_fn(|a| self.comps[a * 3 + j].clone()),
            gamma: self.gamma,
            masked: self.masked,
        }
    }

    pub fn from_columns(cols: [&VectorProfile; 3]) -> Result<Self> {
        let grid = cols[0].grid;
        if cols.iter().any(|c| c.grid != grid) {
            return Err(Error::GridMismatch("tensor column", "tensor column"));
        }
        Ok(Profile {
            grid,
            comps: std::array::from_fn(|ab| cols[ab % 3].comps[ab / 3].clone()),
            gamma: cols[0].gamma,
            masked: cols.iter().any(|c| c.masked),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_round_trip() {
        let g = GridSpec::new(1.0, 8).unwrap();
        let t = TensorProfile::from_fn(g, 0.5, |x, out| {
            for (ab, o) in out.iter_mut().enumerate() {
                *o = ab as f64 + x[0];
            }
        });
        let cols = [t.column(0), t.column(1), t.column(2)];
        let back = TensorProfile::from_columns([&cols[0], &cols[1], &cols[2]]).unwrap();
        assert_eq!(back, t);
        // column 1 component 2 is T_21
        assert_eq!(cols[1].comps[2][5], t.comps[7][5]);
    }

    #[test]
    fn masked_nodes_are_skipped() {
        let g = GridSpec::new(1.0, 8).unwrap();
        let mut p = VectorProfile::from_fn(g, 0.5, |x, out| {
            out[0] = if x == [0.0; 3] { 100.0 } else { 1.0 };
        });
        assert_eq!(p.max_abs(), 100.0);
        p.masked = true;
        assert_eq!(p.max_abs(), 1.0);
    }
}
