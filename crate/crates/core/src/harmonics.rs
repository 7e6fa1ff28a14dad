//! Real orthonormal spherical harmonics and transforms of sphere traces.

use std::f64::consts::PI;

use crate::sphere::SphericalTrace;

/// Position of `Y_lm` (`-l <= m <= l`) in a flat coefficient vector.
#[inline]
pub fn sh_index(l: usize, m: isize) -> usize {
    ((l * l + l) as isize + m) as usize
}

#[inline]
pub fn sh_len(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// All `Y_lm(dir)` for `l <= lmax`; `m > 0` are cosine and `m < 0` sine
/// harmonics. `dir` must be a unit vector.
pub fn eval_real_sh(lmax: usize, dir: [f64; 3], out: &mut [f64]) {
    let z = dir[2];
    // (x + i y)^m carries the sin^m factor of the associated functions.
    let (mut re, mut im) = (1.0, 0.0);
    let mut qmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            qmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
            let r = re * dir[0] - im * dir[1];
            im = re * dir[1] + im * dir[0];
            re = r;
        }
        let (c, s) = if m == 0 { (1.0, 0.0) } else { (2f64.sqrt() * re, 2f64.sqrt() * im) };
        let mut put = |l: usize, q: f64| {
            out[sh_index(l, m as isize)] = q * c;
            if m > 0 {
                out[sh_index(l, -(m as isize))] = q * s;
            }
        };
        put(m, qmm);
        if m == lmax {
            break;
        }
        let mut q_prev = qmm;
        let mut q = (2.0 * m as f64 + 3.0).sqrt() * z * qmm;
        put(m + 1, q);
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let next = a * (z * q - b * q_prev);
            q_prev = q;
            q = next;
            put(l, q);
        }
    }
}

/// Legendre polynomials `P_0..=P_lmax` at `c`.
pub fn legendre(lmax: usize, c: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if lmax == 0 {
        return;
    }
    out[1] = c;
    for l in 2..=lmax {
        let lf = l as f64;
        out[l] = ((2.0 * lf - 1.0) * c * out[l - 1] - (lf - 1.0) * out[l - 2]) / lf;
    }
}

/// Harmonic coefficients of each trace component, `coef[c][sh_index(l, m)]`,
/// computed with the trace's own product rule.
#[derive(Clone, Debug)]
pub struct ShExpansion {
    pub lmax: usize,
    pub coef: Vec<Vec<f64>>,
}

impl ShExpansion {
    /// Transform up to `lmax` (at most `n_polar - 1`, where the rule is exact
    /// for band-limited traces), then drop trailing degrees whose energy is
    /// below round-off.
    pub fn from_trace(trace: &SphericalTrace, lmax: usize) -> Self {
        let q = &trace.quad;
        let lmax = lmax.min(q.polar.len() - 1);
        let nc = trace.ncomp;
        let mut coef = vec![vec![0.0; sh_len(lmax)]; nc];
        let mut y = vec![0.0; sh_len(lmax)];
        for node in 0..q.len() {
            eval_real_sh(lmax, q.direction(node), &mut y);
            let w = q.weight(node);
            for (c, cc) in coef.iter_mut().enumerate() {
                let v = w * trace.node_values(node)[c];
                if v != 0.0 {
                    cc.iter_mut().zip(y.iter()).for_each(|(a, b)| *a += v * b);
                }
            }
        }
        let total: f64 = coef.iter().flatten().map(|v| v * v).sum();
        let mut keep = 0;
        for l in 0..=lmax {
            let e: f64 = coef
                .iter()
                .map(|cc| cc[l * l..(l + 1) * (l + 1)].iter().map(|v| v * v).sum::<f64>())
                .sum();
            if e > 1e-28 * total {
                keep = l;
            }
        }
        coef.iter_mut().for_each(|cc| cc.truncate(sh_len(keep)));
        ShExpansion { lmax: keep, coef }
    }

    pub fn ncomp(&self) -> usize {
        self.coef.len()
    }
}
