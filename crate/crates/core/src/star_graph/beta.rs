//! Bounded-Lipschitz distance between finitely supported measures.
//!
//! `beta(P, Q) = sup |∫g dP - ∫g dQ|` over `g` with `g(0) = 0` and
//! `||g||_inf + Lip(g) <= 1`. On a finite support the supremum is a linear
//! program in the values `g(z)` plus a Lipschitz budget `L` and a sup budget
//! `M`: any feasible table of values extends to the whole graph (McShane
//! extension truncated at `±M`) without raising either budget, so the finite
//! program is exact.

use super::simplex::maximize;
use super::{graph_distance, rational_to_f64, DiscreteMeasure, GraphPoint, Radius};

/// Exact value of `beta(p, q)` up to simplex round-off (about 1e-12).
pub fn beta_distance<R: Radius>(p: &DiscreteMeasure<R>, q: &DiscreteMeasure<R>) -> f64 {
    let mut support: Vec<(GraphPoint<R>, f64)> = Vec::new();
    let mut push = |x: &GraphPoint<R>, w: f64| {
        if x.is_junction() {
            return;
        }
        match support.iter_mut().find(|(y, _)| y == x) {
            Some((_, acc)) => *acc += w,
            None => support.push((*x, w)),
        }
    };
    // exact signed mass per point, computed before the f64 conversion
    for (x, w) in p.atoms() {
        let net = *w - q.mass_at(x);
        push(x, rational_to_f64(&net));
    }
    for (x, w) in q.atoms() {
        if p.mass_at(x) == num_traits::Zero::zero() {
            push(x, -rational_to_f64(w));
        }
    }
    support.retain(|(_, w)| *w != 0.0);
    if support.is_empty() {
        return 0.0;
    }
    solve(&support)
}

fn solve<R: Radius>(support: &[(GraphPoint<R>, f64)]) -> f64 {
    let k = support.len();
    // variables: g+ (k), g- (k), L, M
    let n = 2 * k + 2;
    let (li, mi) = (2 * k, 2 * k + 1);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut row = |entries: &[(usize, f64)], b: f64| {
        let mut r = vec![0.0; n];
        for &(j, v) in entries {
            r[j] += v;
        }
        rows.push(r);
        rhs.push(b);
    };
    for i in 0..k {
        let (gp, gm) = (i, k + i);
        let d0 = support[i].0.radius().to_f64();
        for s in [1.0, -1.0] {
            // |g_i| <= M
            row(&[(gp, s), (gm, -s), (mi, -1.0)], 0.0);
            // |g_i - g(0)| <= L d(z_i, 0)
            row(&[(gp, s), (gm, -s), (li, -d0)], 0.0);
        }
        for j in (i + 1)..k {
            let d = graph_distance(&support[i].0, &support[j].0).to_f64();
            for s in [1.0, -1.0] {
                row(&[(gp, s), (gm, -s), (j, -s), (k + j, s), (li, -d)], 0.0);
            }
        }
    }
    row(&[(li, 1.0), (mi, 1.0)], 1.0);

    let mut c = vec![0.0; n];
    for (i, (_, w)) in support.iter().enumerate() {
        c[i] = *w;
        c[k + i] = -*w;
    }
    maximize(&c, &rows, &rhs).expect("beta program is bounded by the unit budget")
}

#[cfg(test)]
mod tests {
    use super::super::{Rational, RayParams};
    use super::*;

    fn dirac(ray: usize, r: f64) -> DiscreteMeasure<f64> {
        DiscreteMeasure::dirac(GraphPoint::new(ray, r, 3))
    }

    #[test]
    fn identical_measures() {
        let params = RayParams::uniform(3).unwrap();
        let m = DiscreteMeasure::spread(&params, 2.5);
        assert_eq!(beta_distance(&m, &m), 0.0);
    }

    #[test]
    fn dirac_against_junction() {
        for r in [0.5, 1.0, 2.0, 5.0] {
            let b = beta_distance(&dirac(1, r), &dirac(3, 0.0));
            assert!((b - r / (1.0 + r)).abs() < 1e-9, "r = {r}: {b}");
        }
    }

    #[test]
    fn diracs_on_different_rays() {
        // g = +v at x, -v at y: constraints 2v <= L d, v <= M, v <= L r.
        let b = beta_distance(&dirac(1, 1.0), &dirac(2, 1.0));
        // sup 2 min(M, L) with L + M = 1 -> 1
        assert!((b - 1.0).abs() < 1e-9, "{b}");
    }

    /// Equal-weight spreads reduce to one radial profile `h`:
    /// `sup_L min(L |r - s|, min(1 - L, L r) + min(1 - L, L s))`.
    fn radial_reference(r: f64, s: f64) -> f64 {
        (0..=100_000)
            .map(|i| {
                let l = i as f64 / 100_000.0;
                let m = 1.0 - l;
                (l * (r - s).abs()).min(m.min(l * r) + m.min(l * s))
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn radial_spreads_match_one_dimensional_reduction() {
        let params = RayParams::new(vec![
            Rational::new(1, 2),
            Rational::new(1, 3),
            Rational::new(1, 6),
        ])
        .unwrap();
        for (r, s) in [(1.0, 1.5), (2.0, 0.25), (0.1, 3.0), (4.0, 0.0)] {
            let b = beta_distance(
                &DiscreteMeasure::spread(&params, r),
                &DiscreteMeasure::spread(&params, s),
            );
            assert!((b - radial_reference(r, s)).abs() < 1e-4, "({r}, {s}): {b}");
            let gap = f64::abs(r - s);
            assert!(b <= 2.0 * gap / (2.0 + gap) + 1e-9);
        }
        // with both radii positive the profile may dip below zero at the inner radius
        let b = beta_distance(
            &DiscreteMeasure::spread(&params, 2.0),
            &DiscreteMeasure::spread(&params, 0.25),
        );
        assert!((b - 0.7).abs() < 1e-9, "{b}");
    }

    #[test]
    fn lattice_measures_are_accepted() {
        let x = DiscreteMeasure::dirac(GraphPoint::new(1, 2u64, 2));
        let y = DiscreteMeasure::dirac(GraphPoint::junction(2));
        assert!((beta_distance(&x, &y) - 2.0 / 3.0).abs() < 1e-12);
    }
}
