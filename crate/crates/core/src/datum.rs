//! Initial data `(u0, F0)` homogeneous of degree -1 and their caloric
//! profiles `(U0, G0)(., 1)`.

use serde::{Deserialize, Serialize};

use crate::caloric::{caloric_components, CaloricConfig, CaloricProfile};
use crate::error::{Error, Result};
use crate::field::Profile;
use crate::grid::GridSpec;
use crate::sphere::{curl_of_degree0_potential, AxialPotential, SphereQuadrature, SphericalTrace};

/// Named families of admissible data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatumFamily {
    /// `u0 = curl(x3/|x| e3)`, column `j` of `F0` is `curl(x_{j+2}/|x| e_{j+1})`
    /// at half weight.
    Axial,
    /// `u0 = 0`, `F0 = 0`.
    Zero,
}

impl std::str::FromStr for DatumFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axial" => Ok(DatumFamily::Axial),
            "zero" => Ok(DatumFamily::Zero),
            other => Err(Error::InvalidArgument(format!("unknown datum family `{other}`"))),
        }
    }
}

/// Traces of `u0` (3 components) and `F0` (9 components, `a * 3 + j`).
#[derive(Clone, Debug, PartialEq)]
pub struct Datum {
    pub u0: SphericalTrace,
    pub f0: SphericalTrace,
    /// `sup_theta |u0(theta)| + |F0(theta)|`, the constant of the bound
    /// `|u0(x)| + |F0(x)| <= C*/|x|`.
    pub c_star: f64,
}

/// `sup` over nodes of `|u| + |F|` (Frobenius).
pub fn datum_constant(u0: &SphericalTrace, f0: &SphericalTrace) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..u0.quad.len())
        .map(|node| norm(u0.node_values(node)) + norm(f0.node_values(node)))
        .fold(0.0, f64::max)
}

impl Datum {
    /// Scale both traces so that `c_star` equals the requested value.
    pub fn normalized(u0: SphericalTrace, f0: SphericalTrace, c_star: f64) -> Result<Self> {
        if u0.ncomp != 3 || f0.ncomp != 9 || u0.quad != f0.quad {
            return Err(Error::InvalidArgument("datum needs a vector and a tensor trace on one rule".into()));
        }
        if !(c_star >= 0.0 && c_star.is_finite()) {
            return Err(Error::InvalidArgument(format!("C* must be finite and nonnegative, got {c_star}")));
        }
        let raw = datum_constant(&u0, &f0);
        let a = if raw > 0.0 { c_star / raw } else { 0.0 };
        let (u0, f0) = (u0.scaled(a), f0.scaled(a));
        let c_star = datum_constant(&u0, &f0);
        Ok(Datum { u0, f0, c_star })
    }

    pub fn family(family: DatumFamily, c_star: f64, quad: &SphereQuadrature) -> Result<Self> {
        match family {
            DatumFamily::Zero => Ok(Datum {
                u0: SphericalTrace::zeros(quad.clone(), 3),
                f0: SphericalTrace::zeros(quad.clone(), 9),
                c_star: 0.0,
            }),
            DatumFamily::Axial => {
                let pot = |axis, lift, amplitude| AxialPotential { axis, lift, amplitude };
                let u0 = curl_of_degree0_potential(&pot(2, 2, 1.0), quad)?;
                let cols: Vec<SphericalTrace> = (0..3)
                    .map(|j| curl_of_degree0_potential(&pot((j + 1) % 3, (j + 2) % 3, 0.5), quad))
                    .collect::<Result<_>>()?;
                let f0 = SphericalTrace::tensor_from_columns([&cols[0], &cols[1], &cols[2]])?;
                Datum::normalized(u0, f0, c_star)
            }
        }
    }
}

/// `U0 = e^{Delta} u0` and `G0 = e^{Delta} F0` at `t = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaloricData {
    pub u0: CaloricProfile<3>,
    pub g0: CaloricProfile<9>,
    pub c_star: f64,
}

impl CaloricData {
    /// Profiles of the datum scaled by `a` (the heat flow is linear).
    pub fn scaled(&self, a: f64) -> Self {
        CaloricData {
            u0: self.u0.scaled(a),
            g0: self.g0.scaled(a),
            c_star: self.c_star * a.abs(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.u0.field.grid
    }
}

/// Both caloric profiles from one 12-component harmonic expansion.
pub fn caloric_data(datum: &Datum, grid: GridSpec, gamma: f64, cfg: &CaloricConfig) -> Result<CaloricData> {
    let mut joint = SphericalTrace::zeros(datum.u0.quad.clone(), 12);
    for node in 0..joint.quad.len() {
        joint.values[node * 12..node * 12 + 3].copy_from_slice(datum.u0.node_values(node));
        joint.values[node * 12 + 3..node * 12 + 12].copy_from_slice(datum.f0.node_values(node));
    }
    let mut comps = caloric_components(&joint, grid, cfg)?.into_iter();
    let u: [Vec<f64>; 3] = std::array::from_fn(|_| comps.next().expect("12 components"));
    let g: [Vec<f64>; 9] = std::array::from_fn(|_| comps.next().expect("12 components"));
    Ok(CaloricData {
        u0: CaloricProfile {
            field: Profile::from_comps(grid, gamma, u)?,
            c_star: datum.u0.sup_norm(),
        },
        g0: CaloricProfile {
            field: Profile::from_comps(grid, gamma, g)?,
            c_star: datum.f0.sup_norm(),
        },
        c_star: datum.c_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caloric::caloric_profile;

    #[test]
    fn axial_datum_is_normalized() {
        let q = SphereQuadrature::new(16, 32).unwrap();
        let d = Datum::family(DatumFamily::Axial, 0.01, &q).unwrap();
        assert!((d.c_star - 0.01).abs() < 1e-15);
        // raw u0 trace is (-x2 x3, x1 x3, 0)
        let node = 37;
        let t = q.direction(node);
        let u = d.u0.node_values(node);
        let a = u[1] / (t[0] * t[2]);
        assert!((u[0] + a * t[1] * t[2]).abs() < 1e-12);
        let z = Datum::family(DatumFamily::Zero, 1.0, &q).unwrap();
        assert_eq!(z.c_star, 0.0);
        assert!("nope".parse::<DatumFamily>().is_err());
    }

    #[test]
    fn joint_caloric_matches_separate_runs() {
        let q = SphereQuadrature::new(16, 32).unwrap();
        let d = Datum::family(DatumFamily::Axial, 1.0, &q).unwrap();
        let g = GridSpec::new(4.0, 16).unwrap();
        let cfg = CaloricConfig::default();
        let cd = caloric_data(&d, g, 0.5, &cfg).unwrap();
        let u: CaloricProfile<3> = caloric_profile(&d.u0, g).unwrap();
        let f: CaloricProfile<9> = caloric_profile(&d.f0, g).unwrap();
        assert!(cd.u0.field.lincomb(1.0, &u.field, -1.0).unwrap().max_abs() < 1e-14);
        assert!(cd.g0.field.lincomb(1.0, &f.field, -1.0).unwrap().max_abs() < 1e-14);
        let half = cd.scaled(0.5);
        assert_eq!(half.u0.field.comps[0][100], 0.5 * cd.u0.field.comps[0][100]);
        assert_eq!(half.c_star, 0.5);
    }
}
