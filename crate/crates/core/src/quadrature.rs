//! Symmetric quadrature rules on triangles in barycentric form.

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    /// Relative to the triangle area; they sum to one.
    pub weights: Vec<f64>,
    pub degree: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rules of degree 1 (centroid), 2 (edge midpoints) and 4 (six points).
pub fn quadrature(degree: u32) -> Result<QuadratureRule> {
    let rule = match degree {
        1 => QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            degree,
        },
        2 => QuadratureRule {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
            degree,
        },
        4 => {
            const A: f64 = 0.445_948_490_915_964_886_32;
            const WA: f64 = 0.223_381_589_678_011_465_70;
            const B: f64 = 0.091_576_213_509_770_743_46;
            const WB: f64 = 0.109_951_743_655_321_867_64;
            let (a2, b2) = (1.0 - 2.0 * A, 1.0 - 2.0 * B);
            QuadratureRule {
                points: vec![
                    [A, A, a2],
                    [A, a2, A],
                    [a2, A, A],
                    [B, B, b2],
                    [B, b2, B],
                    [b2, B, B],
                ],
                weights: vec![WA, WA, WA, WB, WB, WB],
                degree,
            }
        }
        _ => {
            return Err(invalid(format!(
                "no quadrature rule of degree {degree} (supported: 1, 2, 4)"
            )))
        }
    };
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Integrates `f` over the right triangle with legs on the axes.
    fn on_reference(rule: &QuadratureRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(b, w)| w * 0.5 * f(b[1], b[2]))
            .sum()
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn weights_sum_to_one() {
        for d in [1, 2, 4] {
            let r = quadrature(d).unwrap();
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for p in &r.points {
                assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn monomials_exact_up_to_degree() {
        for d in [1, 2, 4] {
            let r = quadrature(d).unwrap();
            for i in 0..=d {
                for j in 0..=(d - i) {
                    // ∫ x^i y^j over the reference triangle = i! j! / (i + j + 2)!
                    let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                    let got = on_reference(&r, |x, y| x.powi(i as i32) * y.powi(j as i32));
                    assert_abs_diff_eq!(got, exact, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn documented_values() {
        assert_abs_diff_eq!(on_reference(&quadrature(1).unwrap(), |_, _| 1.0), 0.5);
        assert_abs_diff_eq!(
            on_reference(&quadrature(2).unwrap(), |x, y| x * y),
            1.0 / 24.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            on_reference(&quadrature(4).unwrap(), |x, _| x.powi(4)),
            1.0 / 30.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn unsupported_degree() {
        assert!(quadrature(3).is_err());
        assert!(quadrature(0).is_err());
    }
}
