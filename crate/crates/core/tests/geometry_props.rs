use helixproj::classifier::{helix_gram, quadruple_gram, quadruple_labels};
use helixproj::correlation::numbered_labels;
use helixproj::geometry::{
    embed_gram, geodesic_distance, spherical_project, verify_projection_invariance, Configuration,
    ProjectivePoint, ORTHOGONAL_DISTANCE,
};
use helixproj::tol;
use proptest::prelude::*;

fn unit_coords(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |v| {
        v.iter().map(|c| c * c).sum::<f64>() > 1e-3
    })
}

fn helix_params() -> impl Strategy<Value = (Vec<f64>, Vec<i8>)> {
    (3usize..9).prop_flat_map(|n| {
        (
            prop::collection::vec(-4.0f64..4.0, n),
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n),
        )
    })
}

proptest! {
    #[test]
    fn distance_is_symmetric_and_bounded(a in unit_coords(4), b in unit_coords(4)) {
        let p = ProjectivePoint::from_coords(a).unwrap();
        let q = ProjectivePoint::from_coords(b).unwrap();
        let d = geodesic_distance(&p, &q).unwrap();
        prop_assert_eq!(d, geodesic_distance(&q, &p).unwrap());
        prop_assert!((0.0..=ORTHOGONAL_DISTANCE).contains(&d));
        prop_assert!(geodesic_distance(&p, &p).unwrap() < 1e-7);
    }

    #[test]
    fn sign_flip_is_the_same_point(a in unit_coords(3)) {
        let neg: Vec<f64> = a.iter().map(|c| -c).collect();
        let p = ProjectivePoint::from_coords(a).unwrap();
        let q = ProjectivePoint::from_coords(neg).unwrap();
        prop_assert!(p.approx_eq(&q, 1e-12));
    }

    #[test]
    fn projection_is_unit_and_orthogonal(s in unit_coords(5), y in unit_coords(5)) {
        let s0 = ProjectivePoint::from_coords(s).unwrap();
        let p = ProjectivePoint::from_coords(y).unwrap();
        prop_assume!(s0.inner(&p).unwrap().abs() < 0.999);
        let q = spherical_project(&s0, &p).unwrap();
        let norm: f64 = q.rep().coords().iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert!(q.inner(&s0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn embedding_reproduces_helix_gram((psi, signs) in helix_params()) {
        prop_assume!(psi.iter().enumerate().all(|(i, a)| psi[..i].iter().all(|b| (a - b).abs() > 1e-3)));
        let labels = numbered_labels("h", psi.len());
        let g = helix_gram(&labels, &psi, &signs).unwrap();
        let cfg = embed_gram(&g).unwrap();
        let back = cfg.gram();
        // representatives are canonicalized, so only |<u, v>| survives
        prop_assert!((back.matrix().abs() - g.matrix().abs()).amax() < 1e-9);
        let r = verify_projection_invariance(&cfg, tol::INVARIANCE).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn admissible_quadruples_are_invariant(x in 0.2f64..5.0, y in 0.2f64..5.0, flips in prop::array::uniform4(prop::bool::ANY)) {
        let signs = flips.map(|b| if b { -1i8 } else { 1 });
        let Ok(g) = quadruple_gram(x, y, signs) else { return Ok(()) };
        prop_assert_eq!(g.labels().to_vec(), quadruple_labels());
        let r = verify_projection_invariance(&embed_gram(&g).unwrap(), tol::INVARIANCE).unwrap();
        prop_assert!(r.passed, "x={} y={} {:?}", x, y, r);
    }

    #[test]
    fn generic_triples_fail(a in unit_coords(3), b in unit_coords(3), c in unit_coords(3)) {
        let pts: Vec<ProjectivePoint> = [a, b, c].into_iter().map(|v| ProjectivePoint::from_coords(v).unwrap()).collect();
        let cfg = Configuration::new(numbered_labels("g", 3), pts.clone()).unwrap();
        let r = verify_projection_invariance(&cfg, tol::INVARIANCE).unwrap();
        // invariant triples are a measure-zero set unless some pair is orthogonal or coincident
        let ip = |i: usize, j: usize| pts[i].inner(&pts[j]).unwrap().abs();
        let generic = [(0, 1), (0, 2), (1, 2)].iter().all(|&(i, j)| ip(i, j) > 0.05 && ip(i, j) < 0.95);
        if generic && r.passed {
            // the only survivors are collinear helix triples; check the sech relation
            let d = |i, j| (1.0 / ip(i, j)).acosh();
            let mut s = [d(0, 1), d(0, 2), d(1, 2)];
            s.sort_by(f64::total_cmp);
            prop_assert!((s[2] - s[0] - s[1]).abs() < 1e-6);
        }
    }
}
