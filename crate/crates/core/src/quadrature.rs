//! One-dimensional rules shared by the sphere, caloric and Duhamel integrators.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// A list of nodes and positive weights on some interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre rule mapped to `[a, b]`.
    pub fn gauss(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|w| w * half).collect(),
        }
    }

    /// Gauss rule on `[a, b]` after the substitution `x = a + (b-a)(1 - cos(pi s))/2`,
    /// whose vanishing Jacobian at both ends absorbs algebraic endpoint kinks
    /// such as `|x - a|^{3/2}`.
    pub fn cosine_graded(n: usize, a: f64, b: f64) -> Self {
        let base = Rule::gauss(n, 0.0, 1.0);
        let mut r = Rule::default();
        for (s, w) in base.nodes.iter().zip(base.weights.iter()) {
            r.nodes.push(a + (b - a) * 0.5 * (1.0 - (PI * s).cos()));
            r.weights.push(w * (b - a) * 0.5 * PI * (PI * s).sin());
        }
        r
    }

    pub fn append(&mut self, other: Rule) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(x, w)| w * f(*x))
            .sum()
    }
}

/// Weights of the cubic Lagrange interpolant through the four nodes `xs` at `x`.
#[inline]
pub fn lagrange4(xs: [f64; 4], x: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                w[i] *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
    }
    w
}

/// Cubic Lagrange weights for equispaced nodes at offsets -1, 0, 1, 2 and
/// fractional position `t` in `[0, 1)`.
#[inline]
pub fn lagrange4_uniform(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64] {
            let r = Rule::gauss(n, 0.0, 2.0);
            let deg = 2 * n - 1;
            let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            let got = r.integrate(|x| x.powi(deg as i32));
            assert!((got - exact).abs() < 1e-12 * exact, "n={n}: {got} vs {exact}");
        }
    }

    #[test]
    fn cosine_grading_handles_endpoint_kinks() {
        // int_0^1 x^{3/2} dx = 2/5
        let r = Rule::cosine_graded(24, 0.0, 1.0);
        let got = r.integrate(|x| x.powf(1.5));
        assert!((got - 0.4).abs() < 1e-12, "{got}");
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        let w = lagrange4_uniform(0.3);
        let f = |x: f64| 2.0 * x * x * x - x + 0.5;
        let v: f64 = (0..4).map(|i| w[i] * f(i as f64 - 1.0)).sum();
        assert!((v - f(0.3)).abs() < 1e-13);
        let w2 = lagrange4([-1.0, 0.0, 1.0, 2.0], 0.3);
        for i in 0..4 {
            assert!((w[i] - w2[i]).abs() < 1e-14);
        }
    }
}
