mod support;

use starflow::chain::{flip_excursions, flipped_product_chain, MarkStream};
use starflow::checks::points_within;
use starflow::cv::{cv_forward, sign_change_times};
use starflow::dump::{read_walk, write_walk};
use starflow::flows::{conditional_law, kernel_closed_form};
use starflow::limit::{mapping_convergence, nearest_lattice_point};
use starflow::rng::{Channel, StreamKey};
use starflow::stats::{chi_square, chi_square_pvalue};
use starflow::walk::{excursions, gap_below_running_max};
use starflow::{
    beta_distance, DiscreteMeasure, Excursion, FlowRealization, GraphPoint, WalkWindow,
};

use support::{all_walks, literal_mark_law, params3};

#[test]
fn lp_matches_vertex_enumeration() {
    let params = params3();
    let mut draw = StreamKey::new(5, 0, Channel::Chain).reader(0);
    let mut checked = 0;
    while checked < 300 {
        let p = support::random_small_measure(&params, &mut draw);
        let q = support::random_small_measure(&params, &mut draw);
        if support::joint_support(&p, &q) > 3 {
            continue;
        }
        let (lp, v) = (beta_distance(&p, &q), support::vertex_beta(&p, &q));
        assert!((lp - v).abs() < 1e-9, "{p:?} {q:?}: {lp} vs {v}");
        checked += 1;
    }
}

#[test]
fn grid_oracle_agrees_on_dirac_pairs() {
    let n = 3;
    for (a, b) in [(0.5, 2.0), (1.0, 3.0), (2.0, 2.5)] {
        for (ra, rb) in [(1, 1), (1, 2)] {
            let p = DiscreteMeasure::dirac(GraphPoint::new(ra, a, n));
            let q = DiscreteMeasure::dirac(GraphPoint::new(rb, b, n));
            assert!((beta_distance(&p, &q) - support::grid_beta(&p, &q)).abs() < 1e-6);
        }
    }
}

#[test]
fn dirac_pairs_respect_the_two_point_bound() {
    // with g(0) = 0 two Diracs at distance d are at most 2d / (2 + d) apart
    let n = 3;
    for (a, b) in [(1.0, 1.5), (2.0, 3.0), (4.0, 4.25), (0.5, 0.75)] {
        let p = DiscreteMeasure::dirac(GraphPoint::new(1, a, n));
        let q = DiscreteMeasure::dirac(GraphPoint::new(1, b, n));
        let d: f64 = b - a;
        assert!(beta_distance(&p, &q) <= 2.0 * d / (2.0 + d) + 1e-12);
    }
}

#[test]
fn conditional_law_matches_literal_enumeration() {
    let params = params3();
    let starts = [
        params.junction(),
        GraphPoint::new(1, 1, 3),
        GraphPoint::new(3, 2, 3),
    ];
    for walk in all_walks(7) {
        for x in &starts {
            for (p, n) in [(0, 7), (2, 6)] {
                let literal = literal_mark_law(&walk, &params, p, n, x);
                assert_eq!(conditional_law(&walk, &params, p, n, x).unwrap(), literal);
                assert_eq!(
                    kernel_closed_form(&walk, &params, p, n, x).unwrap(),
                    literal
                );
            }
        }
    }
}

/// Excursions straight from the definition, by scanning every candidate pair.
fn excursions_by_scan(y: &[i64]) -> Vec<(i64, i64)> {
    let at = |i: i64| {
        if i < 0 {
            Some(0)
        } else {
            y.get(i as usize).copied()
        }
    };
    let mut out = Vec::new();
    for p in 0..y.len() as i64 {
        for q in p + 1..y.len() as i64 {
            let ends = [at(p - 1), at(p), at(q), at(q + 1)];
            if ends.iter().any(|v| *v != Some(0)) {
                continue;
            }
            let no_flat_zero = (p..q).all(|j| y[j as usize] != 0 || y[j as usize + 1] == 1);
            if no_flat_zero {
                out.push((p, q));
            }
        }
    }
    out
}

#[test]
fn excursions_match_definition_exhaustively() {
    for len in 1..=14 {
        for walk in all_walks(len) {
            let y = gap_below_running_max(&walk);
            let found: Vec<Excursion> = excursions(&y, 0).unwrap();
            let expected = excursions_by_scan(&y);
            let got: Vec<(i64, i64)> = found.iter().map(|e| (e.start, e.end)).collect();
            assert_eq!(got, expected, "{:?}", walk.values());
            assert!(found
                .iter()
                .enumerate()
                .all(|(i, e)| e.ordinal == i as u64 + 1));
        }
    }
}

#[test]
fn golden_walk_is_stable() {
    let text = include_str!("golden/walk_seed1_stream0_0_8.csv");
    let w = WalkWindow::generate(0, 8, 1, 0).unwrap();
    let mut out = Vec::new();
    write_walk(&mut out, &w).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), text);
    assert_eq!(read_walk(text).unwrap(), w);
}

#[test]
fn walk_endpoint_obeys_clt() {
    let m = 4_000;
    let n = 400;
    let ends: Vec<f64> = (0..m)
        .map(|r| WalkWindow::generate(0, n, 9, r).unwrap().value(n) as f64 / (n as f64).sqrt())
        .collect();
    let mean = ends.iter().sum::<f64>() / m as f64;
    let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    assert!(mean.abs() < 4.0 / (m as f64).sqrt(), "{mean}");
    // the variance of a sample variance of unit normals is 2 / (m - 1)
    assert!((var - 1.0).abs() < 4.0 * (2.0 / m as f64).sqrt(), "{var}");
}

#[test]
fn pooled_exits_show_ray_reuse() {
    // returns to the junction without a sign change keep the ray, so the flipped
    // chain repeats its previous exit ray far more often than sum alpha_i^2
    let params = params3();
    let (mut repeats, mut pairs) = (0u64, 0u64);
    for r in 0..400 {
        let s = WalkWindow::generate(0, 1_000, 3, r).unwrap();
        let s_bar = cv_forward(&s).unwrap();
        let eta = MarkStream::new(StreamKey::new(3, r, Channel::Marks), params.clone());
        let aux = MarkStream::new(StreamKey::new(3, r, Channel::AuxMarks), params.clone());
        let Ok(out) = flip_excursions(&s_bar, &s, &params, &eta, &aux) else {
            continue;
        };
        let pos = &out.path.positions;
        let exits: Vec<usize> = (0..pos.len() - 1)
            .filter(|&k| pos[k].is_junction())
            .map(|k| pos[k + 1].ray())
            .collect();
        for w in exits.windows(2) {
            pairs += 1;
            repeats += u64::from(w[0] == w[1]);
        }
    }
    let markov: f64 = params.alpha_f64().iter().map(|a| a * a).sum();
    let rate = repeats as f64 / pairs as f64;
    assert!(rate > markov + 0.1, "{rate} vs {markov}");
}

/// The product chain on `[0, horizon]`, extending the walk until the path covers it.
fn product_chain_prefix(seed: u64, r: u64, horizon: usize) -> Option<Vec<starflow::LatticePoint>> {
    let params = params3();
    let eta = MarkStream::new(StreamKey::new(seed, r, Channel::Marks), params.clone());
    let mut len = 64;
    while len <= 1 << 20 {
        let s_bar = WalkWindow::generate(0, len, seed, r).unwrap();
        let path = flipped_product_chain(&s_bar, &params, &eta);
        if path.len() > horizon {
            return Some(path.positions[..=horizon].to_vec());
        }
        len *= 16;
    }
    None
}

#[test]
fn product_chain_follows_the_lazy_law() {
    let params = params3();
    let horizon = 24;
    let (mut holds, mut leaves) = (0u64, 0u64);
    let mut exits = vec![0u64; 3];
    for r in 0..6_000 {
        let Some(pos) = product_chain_prefix(11, r, horizon) else {
            continue;
        };
        assert!(pos.windows(2).all(|w| {
            let d = starflow::graph_distance(&w[0], &w[1]);
            d == 1 || (d == 0 && w[0].is_junction())
        }));
        for w in pos.windows(2).filter(|w| w[0].is_junction()) {
            if w[1].is_junction() {
                holds += 1;
            } else {
                leaves += 1;
            }
        }
        // one exit per path, at the first departure after time 8
        if let Some(k) = (8..horizon).find(|&k| pos[k].is_junction() && !pos[k + 1].is_junction()) {
            exits[pos[k + 1].ray() - 1] += 1;
        }
    }
    let (stat, dof) = chi_square(&[holds, leaves], &[0.5, 0.5]).unwrap();
    assert!(chi_square_pvalue(stat, dof) > 0.001, "{holds} {leaves}");
    let (stat, dof) = chi_square(&exits, &params.alpha_f64()).unwrap();
    assert!(chi_square_pvalue(stat, dof) > 0.001, "{exits:?}");
}

#[test]
fn flipped_chain_rays_follow_marks_on_blocks() {
    let params = params3();
    let s = WalkWindow::generate(0, 2_000, 17, 0).unwrap();
    let s_bar = cv_forward(&s).unwrap();
    let eta = |i: i64| 1 + (i as usize % 3);
    let aux = |l: i64| 3 - (l as usize % 3);
    let out = flip_excursions(&s_bar, &s, &params, &eta, &aux).unwrap();
    assert_eq!(out.blocks.len(), sign_change_times(&s).len());
    for b in &out.blocks {
        for k in b.start..=b.end {
            let m = out.path.positions[k as usize];
            assert_eq!(m.radius(), s.value(k).unsigned_abs());
            if !m.is_junction() {
                let want = if k < b.switch { b.rays.0 } else { b.rays.1 };
                assert_eq!(m.ray(), want);
            }
        }
    }
}

#[test]
fn junction_start_distance_is_within_one_lattice_step() {
    let params = params3();
    let n = 100;
    let sqrt_n = (n as f64).sqrt();
    let x = GraphPoint::<f64>::junction(3);
    for r in 0..40 {
        let fr = FlowRealization::generate(&params, -1, 2 * n as i64 + 2, 23, r).unwrap();
        let x_n = nearest_lattice_point(&params, 3, 0.0, n).rescaled(sqrt_n);
        let d = mapping_convergence(&fr, n, 0.5, 1.0, &x, &x_n).unwrap();
        assert!(d <= 1.0 / sqrt_n + 1e-12, "{d}");
    }
}

#[test]
fn exhaustive_flow_grid_starts_cover_the_ball() {
    let pts = points_within(&params3(), 3);
    assert_eq!(pts.len(), 10);
    assert!(pts.iter().all(|p| p.radius() <= 3));
}
