//! One-dimensional Gauss-Legendre and Gauss-Lobatto-Legendre rules on `[-1, 1]`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuadratureKind {
    GaussLegendre,
    GaussLobattoLegendre,
}

impl QuadratureKind {
    /// Highest monomial degree integrated exactly by a `q`-point rule.
    pub fn exact_degree(self, q: usize) -> usize {
        match self {
            QuadratureKind::GaussLegendre => 2 * q - 1,
            QuadratureKind::GaussLobattoLegendre => 2 * q - 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(kind: QuadratureKind, q: usize) -> Result<Self> {
        match kind {
            QuadratureKind::GaussLegendre => gauss_legendre(q),
            QuadratureKind::GaussLobattoLegendre => gauss_lobatto_legendre(q),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Builds a rule of the given kind with `q` points.
pub fn make_quadrature(kind: QuadratureKind, q: usize) -> Result<QuadratureRule> {
    QuadratureRule::new(kind, q)
}

/// Evaluates `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

fn newton(mut x: f64, step: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..NEWTON_MAX_ITER {
        let dx = step(x);
        x -= dx;
        if dx.abs() <= NEWTON_TOL {
            break;
        }
    }
    x
}

/// Makes the rule exactly antisymmetric in the points and symmetric in the
/// weights, with an exact zero at the midpoint of odd rules.
fn symmetrize(points: &mut [f64], weights: &mut [f64]) {
    let q = points.len();
    for i in 0..q / 2 {
        let j = q - 1 - i;
        let x = 0.5 * (points[j] - points[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        points[i] = -x;
        points[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if q % 2 == 1 {
        points[q / 2] = 0.0;
    }
}

fn gauss_legendre(q: usize) -> Result<QuadratureRule> {
    if q < 1 {
        return Err(Error::InvalidQuadrature(
            "Gauss-Legendre needs at least 1 point".into(),
        ));
    }
    let mut points = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    for i in 0..q {
        // Chebyshev-Gauss guess, ascending
        let guess = -(PI * (2 * i + 1) as f64 / (2 * q) as f64).cos();
        let x = newton(guess, |x| {
            let (p, dp) = legendre(q, x);
            p / dp
        });
        let (_, dp) = legendre(q, x);
        points.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    symmetrize(&mut points, &mut weights);
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussLegendre,
        points,
        weights,
    })
}

fn gauss_lobatto_legendre(q: usize) -> Result<QuadratureRule> {
    if q < 2 {
        return Err(Error::InvalidQuadrature(format!(
            "Gauss-Lobatto-Legendre needs at least 2 points, got {q}"
        )));
    }
    let n = q - 1;
    let nn1 = (n * (n + 1)) as f64;
    let mut points = vec![0.0; q];
    let mut weights = vec![0.0; q];
    points[0] = -1.0;
    points[n] = 1.0;
    weights[0] = 2.0 / nn1;
    weights[n] = 2.0 / nn1;
    for i in 1..n {
        // interior nodes are the roots of P_n'; Chebyshev-Gauss-Lobatto guess
        let guess = -(PI * i as f64 / n as f64).cos();
        let x = newton(guess, |x| {
            let (p, dp) = legendre(n, x);
            let d2p = (2.0 * x * dp - nn1 * p) / (1.0 - x * x);
            dp / d2p
        });
        let (p, _) = legendre(n, x);
        points[i] = x;
        weights[i] = 2.0 / (nn1 * p * p);
    }
    symmetrize(&mut points, &mut weights);
    Ok(QuadratureRule {
        kind: QuadratureKind::GaussLobattoLegendre,
        points,
        weights,
    })
}

/// Largest deviation `|sum_i w_i x_i^k - int_{-1}^{1} x^k dx|` over all
/// monomials the rule is supposed to integrate exactly.
pub fn max_exactness_error(rule: &QuadratureRule) -> f64 {
    let kmax = rule.kind.exact_degree(rule.len());
    (0..=kmax)
        .map(|k| {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            (rule.integrate(|x| x.powi(k as i32)) - exact).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Moment-matching oracle: solves `sum_i w_i x_i^k = 2/(k+1)` for the
    /// weights given candidate points, by Gaussian elimination on the
    /// Vandermonde system.
    fn moment_weights(points: &[f64]) -> Vec<f64> {
        let n = points.len();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let mut row: Vec<f64> = points.iter().map(|x| x.powi(k as i32)).collect();
                row.push(if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 });
                row
            })
            .collect();
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, piv);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }

    #[test]
    fn gl1_is_midpoint() {
        let r = make_quadrature(QuadratureKind::GaussLegendre, 1).unwrap();
        assert_eq!(r.points, vec![0.0]);
        assert_eq!(r.weights, vec![2.0]);
    }

    #[test]
    fn gl2_matches_moment_oracle() {
        // x^2 moment with equal weights forces x = 1/sqrt(3)
        let x = 1.0 / 3.0f64.sqrt();
        assert!((x - 0.5773502691896258).abs() < 1e-16);
        let w = moment_weights(&[-x, x]);
        let r = make_quadrature(QuadratureKind::GaussLegendre, 2).unwrap();
        assert!((r.points[0] + x).abs() < 1e-15 && (r.points[1] - x).abs() < 1e-15);
        for (a, b) in r.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-14);
            assert!((a - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gll3_and_gll4_match_moment_oracle() {
        let r3 = make_quadrature(QuadratureKind::GaussLobattoLegendre, 3).unwrap();
        assert_eq!(r3.points, vec![-1.0, 0.0, 1.0]);
        let w3 = moment_weights(&[-1.0, 0.0, 1.0]);
        for ((a, b), c) in r3.weights.iter().zip(&w3).zip([1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-14 && (a - c).abs() < 1e-14);
        }

        // interior points of the 4-point rule: x^4 moment gives x^2 = 1/5
        let x = (0.2f64).sqrt();
        assert!((x - 0.4472135954999579).abs() < 1e-16);
        let r4 = make_quadrature(QuadratureKind::GaussLobattoLegendre, 4).unwrap();
        let expected = [-1.0, -x, x, 1.0];
        let w4 = moment_weights(&expected);
        for i in 0..4 {
            assert!((r4.points[i] - expected[i]).abs() < 1e-15);
            assert!((r4.weights[i] - w4[i]).abs() < 1e-14);
        }
        assert!((r4.weights[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((r4.weights[1] - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_point_counts_are_rejected() {
        assert!(make_quadrature(QuadratureKind::GaussLegendre, 0).is_err());
        assert!(make_quadrature(QuadratureKind::GaussLobattoLegendre, 1).is_err());
        assert!(make_quadrature(QuadratureKind::GaussLobattoLegendre, 0).is_err());
    }

    #[test]
    fn rule_invariants() {
        for kind in [QuadratureKind::GaussLegendre, QuadratureKind::GaussLobattoLegendre] {
            let qmin = if kind == QuadratureKind::GaussLegendre { 1 } else { 2 };
            for q in qmin..=20 {
                let r = make_quadrature(kind, q).unwrap();
                let wsum: f64 = r.weights.iter().sum();
                assert!((wsum - 2.0).abs() <= 1e-14, "{kind:?} q={q} sum={wsum}");
                for i in 0..q {
                    assert_eq!(r.points[i], -r.points[q - 1 - i]);
                    assert!(r.weights[i] > 0.0);
                    assert!((-1.0..=1.0).contains(&r.points[i]));
                }
                assert!(r.points.windows(2).all(|w| w[0] < w[1]));
                if kind == QuadratureKind::GaussLobattoLegendre {
                    assert_eq!(r.points[0], -1.0);
                    assert_eq!(r.points[q - 1], 1.0);
                }
                assert!(max_exactness_error(&r) <= 1e-13, "{kind:?} q={q}");
            }
        }
    }

    #[test]
    fn legendre_values() {
        // P_3(x) = (5x^3 - 3x)/2, P_3' = (15x^2 - 3)/2
        let x: f64 = 0.3;
        let (p, dp) = legendre(3, x);
        assert!((p - (5.0 * x.powi(3) - 3.0 * x) / 2.0).abs() < 1e-15);
        assert!((dp - (15.0 * x * x - 3.0) / 2.0).abs() < 1e-15);
    }
}
