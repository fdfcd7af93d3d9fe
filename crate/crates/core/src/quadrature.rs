//! Quadrature on the reference triangle and on segments.
//!
//! Triangle rules are stored in barycentric coordinates `(λ0, λ1, λ2)` of the
//! reference triangle `(0,0), (1,0), (0,1)`; weights sum to its area `1/2`.
//! Degrees above 2 use collapsed (Duffy) Gauss–Legendre products, which are
//! exact to the requested degree and have strictly positive weights.

use thiserror::Error;

pub const MAX_DEGREE: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature degree {0} outside supported range 1..={MAX_DEGREE}")]
    DegreeOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference-triangle integral of `f(x, y)`.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p[1], p[2])).sum()
    }
}

/// Triangle rule exact for polynomials of total degree `degree`.
pub fn quadrature(degree: usize) -> Result<QuadratureRule, QuadratureError> {
    match degree {
        0 => Err(QuadratureError::DegreeOutOfRange(0)),
        1 => Ok(QuadratureRule { points: vec![[1.0 / 3.0; 3]], weights: vec![0.5], degree }),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            Ok(QuadratureRule {
                points: vec![[a, b, b], [b, a, b], [b, b, a]],
                weights: vec![1.0 / 6.0; 3],
                degree,
            })
        }
        d if d <= MAX_DEGREE => Ok(collapsed_rule(d)),
        d => Err(QuadratureError::DegreeOutOfRange(d)),
    }
}

fn collapsed_rule(degree: usize) -> QuadratureRule {
    // The Duffy Jacobian (1 - s) raises the degree in s by one.
    let n = (degree + 2).div_ceil(2);
    let (nodes, wts) = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (s, ws) in nodes.iter().zip(&wts) {
        for (t, wt) in nodes.iter().zip(&wts) {
            let x = *s;
            let y = t * (1.0 - s);
            points.push([1.0 - x - y, x, y]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    QuadratureRule { points, weights, degree }
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (weights sum to 1).
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1], ascending order
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Segment rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn segment_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_unit((degree + 2) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // ∫_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn centroid_rule() {
        let q = quadrature(1).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.weights[0], 0.5);
        assert_relative_eq!(q.points[0][1], 1.0 / 3.0);
    }

    #[test]
    fn degree_two_linear_integral() {
        let q = quadrature(2).unwrap();
        assert_relative_eq!(q.integrate(|x, y| x + y), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn degree_four_x2y2() {
        let q = quadrature(4).unwrap();
        assert_relative_eq!(monomial_integral(2, 2), 1.0 / 180.0, epsilon = 1e-16);
        assert_relative_eq!(q.integrate(|x, y| x * x * y * y), 1.0 / 180.0, epsilon = 1e-15);
    }

    #[test]
    fn exactness_all_degrees() {
        for d in 1..=MAX_DEGREE {
            let q = quadrature(d).unwrap();
            assert!(q.weights.iter().all(|w| *w > 0.0));
            assert_relative_eq!(q.weights.iter().sum::<f64>(), 0.5, epsilon = 1e-14);
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let got = q.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert_relative_eq!(got, monomial_integral(a, b), max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn out_of_range() {
        assert_eq!(quadrature(0), Err(QuadratureError::DegreeOutOfRange(0)));
        assert!(quadrature(MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn segment_exactness() {
        for d in 0..10 {
            let (x, w) = segment_rule(d);
            for k in 0..=d {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert_relative_eq!(got, 1.0 / (k as f64 + 1.0), max_relative = 1e-13);
            }
        }
    }
}
