mod common;

use ad3_core::graph::FactorKind;
use ad3_core::logic::{
    project_cone_a1, project_logic, project_or, project_or_out, project_simplex,
};
use common::{
    cone_constraints, facet_projection, max_violation, or_constraints, or_out_constraints,
    simplex_constraints,
};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn simplex_matches_facets(z0 in prop::collection::vec(-2.0f64..3.0, 1..6)) {
        let cons = simplex_constraints(z0.len());
        prop_assert!(close(&project_simplex(&z0), &facet_projection(&cons, &z0), 1e-8));
    }

    #[test]
    fn or_matches_facets(z0 in prop::collection::vec(-2.0f64..3.0, 1..6)) {
        let cons = or_constraints(z0.len());
        prop_assert!(close(&project_or(&z0), &facet_projection(&cons, &z0), 1e-8));
    }

    #[test]
    fn or_out_matches_facets(z0 in prop::collection::vec(-2.0f64..3.0, 2..6)) {
        let cons = or_out_constraints(z0.len() - 1);
        let z = project_or_out(&z0);
        prop_assert!(close(&z, &facet_projection(&cons, &z0), 1e-8));
        prop_assert!(max_violation(&cons, &z) <= 1e-12);
    }

    #[test]
    fn cone_matches_facets(z0 in prop::collection::vec(-2.0f64..3.0, 2..6)) {
        let cons = cone_constraints(z0.len() - 1);
        prop_assert!(close(&project_cone_a1(&z0), &facet_projection(&cons, &z0), 1e-8));
    }

    // Negating inputs reflects the polytope, so the projection must commute
    // with the reflection.
    #[test]
    fn negated_or_matches_reflected_facets(
        z0 in prop::collection::vec(-2.0f64..3.0, 1..5),
        flips in prop::collection::vec(any::<bool>(), 5),
    ) {
        let negated = &flips[..z0.len()];
        let reflect = |z: &[f64]| -> Vec<f64> {
            z.iter().zip(negated).map(|(&x, &n)| if n { 1.0 - x } else { x }).collect()
        };
        let z = project_logic(FactorKind::Or, negated, &z0).unwrap();
        let reference = reflect(&facet_projection(&or_constraints(z0.len()), &reflect(&z0)));
        prop_assert!(close(&z, &reference, 1e-8));
    }
}
