use helixproj::classifier::{is_admissible, quadruple_gram};
use helixproj::gp::{
    check_conditioning_identity, check_helix_multi_conditioning, check_time_change,
    condition_residual, iterated_residual, kernel_matrix, ProcessSpec,
};
use helixproj::tol;
use proptest::prelude::*;

fn distinct(v: &[f64], gap: f64) -> bool {
    v.iter().enumerate().all(|(i, a)| v[..i].iter().all(|b| (a - b).abs() > gap))
}

fn min_eig(m: nalgebra::DMatrix<f64>) -> (f64, f64) {
    let e = m.symmetric_eigenvalues();
    (e.min(), e.max())
}

proptest! {
    #[test]
    fn kernels_are_psd(ts in prop::collection::vec(-0.99f64..0.99, 1..12)) {
        prop_assume!(distinct(&ts, 1e-3));
        let pos: Vec<f64> = ts.iter().map(|t| t + 1.0).collect();
        for (spec, times) in [
            (ProcessSpec::HelixX, &ts),
            (ProcessSpec::TaylorF, &ts),
            (ProcessSpec::LaplaceG, &pos),
        ] {
            let (lo, hi) = min_eig(kernel_matrix(&spec, times).unwrap());
            prop_assert!(lo >= -tol::psd_threshold(tol::PSD, times.len(), hi), "{} {}", spec, lo);
        }
    }

    #[test]
    fn helix_conditioning_identity(s0 in -3.0f64..3.0, ts in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let mut all = ts.clone();
        all.push(s0);
        prop_assume!(distinct(&all, 1e-2));
        let r = check_conditioning_identity(&ProcessSpec::HelixX, s0, &ts, 1e-12).unwrap();
        prop_assert!(r.passed && r.sign_consistent, "{:?}", r);
        for (t, phi) in ts.iter().zip(&r.multipliers) {
            prop_assert_eq!(*phi, (t - s0).tanh());
        }
        // standardized residual is the kernel up to the sign of phi(s) phi(t)
        let res = condition_residual(&ProcessSpec::HelixX, &ts, s0).unwrap();
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                let k = 1.0 / (ts[i] - ts[j]).cosh();
                let sg = (r.multipliers[i] * r.multipliers[j]).signum();
                prop_assert!((res.get(i, j) - sg * k).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_point_conditioning_commutes(s1 in -3.0f64..3.0, s2 in -3.0f64..3.0, ts in prop::collection::vec(-3.0f64..3.0, 1..6)) {
        let mut all = ts.clone();
        all.extend([s1, s2]);
        prop_assume!(distinct(&all, 5e-2));
        let a = iterated_residual(&ProcessSpec::HelixX, &ts, &[s1, s2]).unwrap();
        let b = iterated_residual(&ProcessSpec::HelixX, &ts, &[s2, s1]).unwrap();
        prop_assert!((a.matrix() - b.matrix()).amax() < 1e-12);
        let r = check_helix_multi_conditioning(&[s1, s2], &ts, 1e-12).unwrap();
        prop_assert!(r.passed && r.sign_consistent, "{:?}", r);
    }

    #[test]
    fn time_changes(ts in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let r = check_time_change(&ts, 1e-12);
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn quadruple_conditioning_up_to_sign(x in 0.2f64..5.0, y in 0.2f64..5.0, s0 in 0usize..4) {
        prop_assume!(is_admissible(x, y));
        prop_assert!(quadruple_gram(x, y, [1; 4]).is_ok());
        let times: Vec<f64> = (0..4).filter(|&t| t != s0).map(|t| t as f64).collect();
        let r = check_conditioning_identity(&ProcessSpec::QuadrupleY { x, y }, s0 as f64, &times, 1e-12).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }
}
