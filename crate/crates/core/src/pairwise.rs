//! Closed-form AD³ subproblem for a factor over two binary variables.
//!
//! With `q_1 = (1 - z1, z1)`, `q_2 = (1 - z2, z2)` and `z12 = q(1, 1)`, the
//! subproblem becomes
//!
//! ```text
//! minimize   ½(z1 - c1)² + ½(z2 - c2)² - c12·z12
//! subject to z1, z2, z12 ∈ [0, 1],  z12 ≤ z1,  z12 ≤ z2,  z12 ≥ z1 + z2 - 1
//! ```
//!
//! whose minimizer has a three-branch closed form for each sign of `c12`.
//! Tables are indexed row-major: `b[2*y1 + y2]`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c12: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseSolution {
    pub z1: f64,
    pub z2: f64,
    pub z12: f64,
}

impl PairwiseSolution {
    /// Factor marginals in row-major order `(00, 01, 10, 11)`.
    pub fn factor_marginals(&self) -> [f64; 4] {
        let PairwiseSolution { z1, z2, z12 } = *self;
        [1.0 - z1 - z2 + z12, z2 - z12, z1 - z12, z12]
    }

    /// Objective value for the given coefficients.
    pub fn objective(&self, c: &PairwiseCoefficients) -> f64 {
        0.5 * (self.z1 - c.c1).powi(2) + 0.5 * (self.z2 - c.c2).powi(2) - c.c12 * self.z12
    }
}

pub fn compute_pair_coefficients(a1: [f64; 2], a2: [f64; 2], b: [f64; 4]) -> PairwiseCoefficients {
    let [b00, b01, b10, b11] = b;
    PairwiseCoefficients {
        c1: (a1[1] + 1.0 - a1[0] - b00 + b10) / 2.0,
        c2: (a2[1] + 1.0 - a2[0] - b00 + b01) / 2.0,
        c12: (b00 - b01 - b10 + b11) / 2.0,
    }
}

fn clip(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn solve_qp_pair(c: PairwiseCoefficients) -> PairwiseSolution {
    let PairwiseCoefficients { c1, c2, c12 } = c;
    if c12 >= 0.0 {
        let (z1, z2) = if c1 > c2 + c12 {
            (clip(c1), clip(c2 + c12))
        } else if c2 > c1 + c12 {
            (clip(c1 + c12), clip(c2))
        } else {
            let z = clip((c1 + c2 + c12) / 2.0);
            (z, z)
        };
        PairwiseSolution {
            z1,
            z2,
            z12: z1.min(z2),
        }
    } else {
        let (z1, z2) = if c1 + c2 + 2.0 * c12 > 1.0 {
            (clip(c1 + c12), clip(c2 + c12))
        } else if c1 + c2 < 1.0 {
            (clip(c1), clip(c2))
        } else {
            (clip((c1 + 1.0 - c2) / 2.0), clip((c2 + 1.0 - c1) / 2.0))
        };
        PairwiseSolution {
            z1,
            z2,
            z12: (z1 + z2 - 1.0).max(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coeffs(c1: f64, c2: f64, c12: f64) -> PairwiseCoefficients {
        PairwiseCoefficients { c1, c2, c12 }
    }

    fn feasible(s: &PairwiseSolution) -> bool {
        let tol = 1e-12;
        let inside = |x: f64| (-tol..=1.0 + tol).contains(&x);
        inside(s.z1)
            && inside(s.z2)
            && inside(s.z12)
            && s.z12 <= s.z1 + tol
            && s.z12 <= s.z2 + tol
            && s.z12 >= s.z1 + s.z2 - 1.0 - tol
    }

    // Grid over (z1, z2); for fixed (z1, z2) the objective is linear in z12,
    // so the best z12 sits at one end of its feasible interval.
    fn grid_best(c: &PairwiseCoefficients, step: f64) -> f64 {
        let n = (1.0 / step).round() as usize;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let (z1, z2) = (i as f64 * step, j as f64 * step);
                let z12 = if c.c12 >= 0.0 {
                    z1.min(z2)
                } else {
                    (z1 + z2 - 1.0).max(0.0)
                };
                best = best.min(PairwiseSolution { z1, z2, z12 }.objective(c));
            }
        }
        best
    }

    #[test]
    fn coefficient_examples() {
        assert_eq!(
            compute_pair_coefficients([0.0, 1.0], [1.0, 0.0], [0.0; 4]),
            coeffs(1.0, 0.0, 0.0)
        );
        assert_eq!(
            compute_pair_coefficients([0.5, 0.5], [0.5, 0.5], [0.0; 4]),
            coeffs(0.5, 0.5, 0.0)
        );
        assert_eq!(
            compute_pair_coefficients([0.0; 2], [0.0; 2], [0.0, 0.0, 0.0, 2.0]),
            coeffs(0.5, 0.5, 1.0)
        );
        // b(1,0) feeds c1 and b(0,1) feeds c2
        let c = compute_pair_coefficients([0.0; 2], [0.0; 2], [0.0, 0.4, 0.2, 0.0]);
        assert!((c.c1 - 0.6).abs() < 1e-15 && (c.c2 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn solution_examples() {
        let s = solve_qp_pair(coeffs(0.5, 0.5, 0.0));
        assert_eq!((s.z1, s.z2, s.z12), (0.5, 0.5, 0.5));
        let s = solve_qp_pair(coeffs(0.8, 0.1, 0.3));
        assert!(
            (s.z1 - 0.8).abs() < 1e-15 && (s.z2 - 0.4).abs() < 1e-15 && (s.z12 - 0.4).abs() < 1e-15
        );
        let s = solve_qp_pair(coeffs(0.6, 0.6, -0.4));
        assert!((s.z1 - 0.5).abs() < 1e-15 && (s.z2 - 0.5).abs() < 1e-15 && s.z12 == 0.0);
        for c in [
            coeffs(0.5, 0.5, 0.0),
            coeffs(0.8, 0.1, 0.3),
            coeffs(0.6, 0.6, -0.4),
        ] {
            assert!(solve_qp_pair(c).objective(&c) <= grid_best(&c, 1e-3) + 1e-9);
        }
    }

    #[test]
    fn branch_boundaries_agree() {
        // c1 == c2 + c12: the first branch and the averaged branch coincide
        let c = coeffs(0.7, 0.4, 0.3);
        let s = solve_qp_pair(c);
        assert!((s.z1 - 0.7).abs() < 1e-15 && (s.z2 - 0.7).abs() < 1e-15);
        // c1 + c2 == 1 with c12 < 0
        let c = coeffs(0.3, 0.7, -0.2);
        let s = solve_qp_pair(c);
        assert!((s.z1 - 0.3).abs() < 1e-15 && (s.z2 - 0.7).abs() < 1e-15);
        // c1 + c2 + 2 c12 == 1
        let c = coeffs(0.9, 0.5, -0.2);
        let s = solve_qp_pair(c);
        assert!((s.z1 - 0.7).abs() < 1e-12 && (s.z2 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn factor_marginals_marginalize() {
        let s = solve_qp_pair(coeffs(0.8, 0.1, 0.3));
        let q = s.factor_marginals();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((q[2] + q[3] - s.z1).abs() < 1e-15);
        assert!((q[1] + q[3] - s.z2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn feasible_and_grid_optimal(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, c12 in -2.0f64..2.0) {
            let c = coeffs(c1, c2, c12);
            let s = solve_qp_pair(c);
            prop_assert!(feasible(&s));
            prop_assert!(s.objective(&c) <= grid_best(&c, 1e-2) + 1e-9);
        }

        #[test]
        fn swap_symmetry(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, c12 in -2.0f64..2.0) {
            let s = solve_qp_pair(coeffs(c1, c2, c12));
            let t = solve_qp_pair(coeffs(c2, c1, c12));
            prop_assert_eq!((s.z1, s.z2, s.z12), (t.z2, t.z1, t.z12));
        }

        #[test]
        fn flip_reduction_matches(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, c12 in -2.0f64..-1e-6) {
            // Substituting z2' = 1 - z2 maps c12 < 0 onto a c12 > 0 problem.
            let s = solve_qp_pair(coeffs(c1, c2, c12));
            let t = solve_qp_pair(coeffs(c1 + c12, 1.0 - c2, -c12));
            prop_assert!((s.z1 - t.z1).abs() < 1e-12);
            prop_assert!((s.z2 - (1.0 - t.z2)).abs() < 1e-12);
            prop_assert!((s.z12 - (t.z1 - t.z12)).abs() < 1e-12);
        }
    }
}
