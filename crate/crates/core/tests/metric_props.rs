#[path = "support/quadruple_oracle.rs"]
mod quadruple_oracle;

use helixproj::correlation::numbered_labels;
use helixproj::metric::{
    classify_quadruple, embed_line, exceptional_quadruple, FiniteMetricSpace, MetricError,
    QuadrupleClass,
};
use helixproj::tol;
use proptest::prelude::*;
use quadruple_oracle::{agrees, random_instance};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn classify_quadruple_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let m = random_instance(&mut rng);
        if let Err(e) = agrees(&m) {
            panic!("{e}");
        }
    }
}

fn line_space() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..9)
}

proptest! {
    #[test]
    fn lines_embed(coords in line_space()) {
        let m = FiniteMetricSpace::from_line(numbered_labels("p", coords.len()), &coords).unwrap();
        let e = embed_line(&m, tol::METRIC_REL).unwrap();
        prop_assert!(e.isometry_error(&m) <= 1e-9 * m.diameter().max(1.0));
    }

    #[test]
    fn embedding_is_label_order_invariant(coords in line_space(), seed in any::<u64>()) {
        let n = coords.len();
        let labels = numbered_labels("p", n);
        let m = FiniteMetricSpace::from_line(labels.clone(), &coords).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = m.subspace(&order);
        let a = embed_line(&m, tol::METRIC_REL).unwrap();
        let b = embed_line(&shuffled, tol::METRIC_REL).unwrap();
        prop_assert_eq!(&a.anchor, &b.anchor);
        for l in &labels {
            prop_assert!((a.get(l).unwrap() - b.get(l).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn scaling_preserves_class(x in 0.1f64..4.0, y in 0.1f64..4.0, k in 0.1f64..10.0) {
        prop_assume!((x - y).abs() > 1e-3);
        let m = exceptional_quadruple(x, y).unwrap();
        let (QuadrupleClass::Exceptional { x: x0, y: y0, .. }, QuadrupleClass::Exceptional { x: x1, y: y1, .. }) = (
            classify_quadruple(&m, tol::METRIC_REL).unwrap(),
            classify_quadruple(&m.scaled(k), tol::METRIC_REL).unwrap(),
        ) else {
            return Err(TestCaseError::fail("expected exceptional"));
        };
        prop_assert!((x1 - k * x0).abs() < 1e-9 * k * x0);
        prop_assert!((y1 - k * y0).abs() < 1e-9 * k * x0);
    }

    #[test]
    fn exceptional_never_embeds(x in 0.1f64..4.0, y in 0.1f64..4.0) {
        prop_assume!((x - y).abs() > 1e-3);
        let m = exceptional_quadruple(x, y).unwrap();
        prop_assert!(
            matches!(embed_line(&m, tol::METRIC_REL), Err(MetricError::NotEmbeddable(_))),
            "expected NotEmbeddable"
        );
    }
}
