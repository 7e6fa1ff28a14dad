//! Weighted sup-norms `sup <x>^s |u(x)|`.

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::field::{Profile, TensorProfile, VectorProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XGammaNorm {
    pub value: f64,
    pub gamma: f64,
    pub attained_at: [f64; 3],
}

#[inline]
pub fn japanese(r2: f64) -> f64 {
    (1.0 + r2).sqrt()
}

/// `sup <x>^exponent |u(x)|` over counted nodes, with the attaining point.
pub fn weighted_sup<const C: usize>(field: &Profile<C>, exponent: f64) -> (f64, [f64; 3]) {
    let g = field.grid;
    let (v, idx) = exec::argmax(g.len(), |i| {
        field.counts(i).then(|| {
            let r = g.radius(i);
            japanese(r * r).powf(exponent) * field.magnitude(i)
        })
    });
    if v <= 0.0 {
        (0.0, g.point(g.index(g.n / 2, g.n / 2, g.n / 2)))
    } else {
        (v, g.point(idx))
    }
}

/// `||u||_{X_gamma} = sup <x>^{1+gamma} |u(x)|`.
pub fn x_gamma_norm<const C: usize>(field: &Profile<C>, gamma: f64) -> XGammaNorm {
    let (value, attained_at) = weighted_sup(field, 1.0 + gamma);
    XGammaNorm {
        value,
        gamma,
        attained_at,
    }
}

/// `||(v, H)||_{X_gamma^4} = ||v|| + sum_j ||H_j||`.
pub fn xgamma4(v: &VectorProfile, h: &TensorProfile, gamma: f64) -> f64 {
    x_gamma_norm(v, gamma).value + (0..3).map(|j| x_gamma_norm(&h.column(j), gamma).value).sum::<f64>()
}
