//! Brute-force classification of four-point metric spaces by trying all
//! 24 labelings. Shared by the core tests and the acceptance suite.

use helixproj::correlation::numbered_labels;
use helixproj::metric::{classify_quadruple, exceptional_quadruple, FiniteMetricSpace, MetricError, QuadrupleClass};
use helixproj::tol;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Outcome predicted by exhaustive search over the 24 labelings.
#[derive(Debug, PartialEq)]
pub enum Oracle {
    Degenerate,
    NotTriangleEqual,
    Classical,
    Exceptional(f64, f64),
}

const PERMS: [[usize; 4]; 24] = {
    let mut out = [[0; 4]; 24];
    let mut k = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                if a != b && a != c && b != c {
                    out[k] = [a, b, c, 6 - a - b - c];
                    k += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
};

pub fn oracle(m: &FiniteMetricSpace, eps: f64) -> Oracle {
    let d = |i: usize, j: usize| m.get(i, j);
    if (0..4).any(|i| (i + 1..4).any(|j| d(i, j) <= eps)) {
        return Oracle::Degenerate;
    }
    for t in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
        let mut s = [d(t[0], t[1]), d(t[0], t[2]), d(t[1], t[2])];
        s.sort_by(f64::total_cmp);
        if (s[2] - s[0] - s[1]).abs() > eps {
            return Oracle::NotTriangleEqual;
        }
    }
    for p in PERMS {
        // points in the order p[0] < p[1] < p[2] < p[3] along a line
        let mut c = [0.0; 4];
        for k in 1..4 {
            c[k] = c[k - 1] + d(p[k - 1], p[k]);
        }
        let ok = (0..4).all(|i| (i + 1..4).all(|j| ((c[j] - c[i]) - d(p[i], p[j])).abs() <= eps));
        if ok {
            return Oracle::Classical;
        }
    }
    for [a, b, c, dd] in PERMS {
        let x = d(a, b);
        let y = d(a, dd);
        let pattern = (d(c, dd) - x).abs() <= eps
            && (d(b, c) - y).abs() <= eps
            && (d(a, c) - (x - y).abs()).abs() <= eps
            && (d(b, dd) - (x - y).abs()).abs() <= eps;
        if pattern {
            let mut v = [x, y, (x - y).abs()];
            v.sort_by(|p, q| q.total_cmp(p));
            return Oracle::Exceptional(v[0], v[1]);
        }
    }
    panic!("triangle-equality quadruple that is neither classical nor exceptional: {m:?}")
}

pub fn observed(m: &FiniteMetricSpace) -> Oracle {
    match classify_quadruple(m, tol::METRIC_REL) {
        Ok(QuadrupleClass::Classical) => Oracle::Classical,
        Ok(QuadrupleClass::Exceptional { x, y, .. }) => Oracle::Exceptional(x, y),
        Err(MetricError::DegenerateQuadruple(..)) => Oracle::Degenerate,
        Err(MetricError::NotTriangleEqual(_)) => Oracle::NotTriangleEqual,
        Err(e) => panic!("unexpected error {e}"),
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> FiniteMetricSpace {
    let labels = numbered_labels("q", 4);
    match rng.random_range(0..4) {
        0 => {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            FiniteMetricSpace::from_line(labels, &c).unwrap()
        }
        1 | 2 => {
            let x: f64 = rng.random_range(0.1..4.0);
            let mut y = rng.random_range(0.1..4.0);
            if (x - y).abs() < 1e-3 {
                y += 0.5;
            }
            let base = exceptional_quadruple(x, y).unwrap();
            let mut order = [0, 1, 2, 3];
            order.shuffle(rng);
            let dist: Vec<Vec<f64>> = (0..4)
                .map(|i| (0..4).map(|j| base.get(order[i], order[j])).collect())
                .collect();
            FiniteMetricSpace::from_rows(labels, &dist).unwrap()
        }
        _ => {
            // generic metric: all distances in [1, 2] satisfy the triangle inequality
            let mut dist = vec![vec![0.0; 4]; 4];
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let v = rng.random_range(1.0..2.0);
                    dist[i][j] = v;
                    dist[j][i] = v;
                }
            }
            FiniteMetricSpace::from_rows(labels, &dist).unwrap()
        }
    }
}

/// Compares the classifier with the oracle on one instance.
pub fn agrees(m: &FiniteMetricSpace) -> Result<(), String> {
    let eps = tol::METRIC_REL * m.diameter();
    let want = oracle(m, eps);
    let got = observed(m);
    let ok = match (&want, &got) {
        (Oracle::Exceptional(x0, y0), Oracle::Exceptional(x1, y1)) => {
            (x0 - x1).abs() <= eps && (y0 - y1).abs() <= eps
        }
        _ => want == got,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{m:?}: oracle {want:?}, classifier {got:?}"))
    }
}
