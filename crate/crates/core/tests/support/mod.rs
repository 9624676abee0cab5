//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use starflow::flows::psi_compose;
use starflow::rng::{unit_f64, StreamReader};
use starflow::star_graph::graph_distance;
use starflow::{
    DiscreteMeasure, FlowRealization, GraphPoint, LatticePoint, Rational, RayParams, WalkWindow,
};

pub fn params3() -> RayParams {
    RayParams::new(vec![
        Rational::new(1, 2),
        Rational::new(1, 3),
        Rational::new(1, 6),
    ])
    .unwrap()
}

/// Signed net mass per non-junction support point of `p - q`.
pub fn net_masses(
    p: &DiscreteMeasure<f64>,
    q: &DiscreteMeasure<f64>,
) -> Vec<(GraphPoint<f64>, f64)> {
    let mut out: Vec<(GraphPoint<f64>, f64)> = Vec::new();
    for (sign, m) in [(1.0, p), (-1.0, q)] {
        for (x, w) in m.atoms() {
            if x.is_junction() {
                continue;
            }
            let w = sign * (*w.numer() as f64) / (*w.denom() as f64);
            match out.iter_mut().find(|(y, _)| y == x) {
                Some((_, acc)) => *acc += w,
                None => out.push((*x, w)),
            }
        }
    }
    out
}

struct Problem {
    w: Vec<f64>,
    d0: Vec<f64>,
    d: Vec<Vec<f64>>,
}

impl Problem {
    fn new(p: &DiscreteMeasure<f64>, q: &DiscreteMeasure<f64>) -> Self {
        let pts = net_masses(p, q);
        let k = pts.len();
        let d = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| graph_distance(&pts[i].0, &pts[j].0))
                    .collect()
            })
            .collect();
        Self {
            w: pts.iter().map(|(_, w)| *w).collect(),
            d0: pts.iter().map(|(x, _)| x.radius()).collect(),
            d,
        }
    }

    fn bound(&self, i: usize, l: f64) -> f64 {
        (1.0 - l).min(l * self.d0[i])
    }

    /// Objective of the values `g` under budget `L`, or `None` when infeasible.
    fn value(&self, g: &[f64], l: f64) -> Option<f64> {
        const SLACK: f64 = 1e-12;
        for i in 0..g.len() {
            if g[i].abs() > self.bound(i, l) + SLACK {
                return None;
            }
            for j in i + 1..g.len() {
                if (g[i] - g[j]).abs() > l * self.d[i][j] + SLACK {
                    return None;
                }
            }
        }
        Some(g.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>().abs())
    }

    /// Best value over `g` at fixed `L`, by a coarse grid and shrinking local grids.
    ///
    /// Edges of this polytope point along `{-1, 0, 1}^k`, which every local grid
    /// contains, so the zoom cannot stall on a face.
    fn inner(&self, l: f64) -> f64 {
        let k = self.w.len();
        let scale = (0..k).map(|i| self.bound(i, l)).fold(0.0, f64::max);
        if scale <= 0.0 {
            return 0.0;
        }
        let centre = vec![0.0; k];
        let (mut best, mut at) = grid_pass(&centre, scale, 10, |g| self.value(g, l));
        let mut radius = scale / 5.0;
        while radius > 1e-9 {
            let (v, p) = grid_pass(&at, radius, 4, |g| self.value(g, l));
            if v >= best {
                best = v;
                at = p;
            }
            radius /= 2.0;
        }
        best
    }
}

/// Best point of a full grid with `steps` cells per side around `centre`.
fn grid_pass(
    centre: &[f64],
    radius: f64,
    steps: usize,
    f: impl Fn(&[f64]) -> Option<f64>,
) -> (f64, Vec<f64>) {
    let dims = centre.len();
    let mut best = (f64::NEG_INFINITY, centre.to_vec());
    let mut idx = vec![0usize; dims];
    let mut point = vec![0.0; dims];
    loop {
        for (c, (&i, &m)) in point.iter_mut().zip(idx.iter().zip(centre)) {
            *c = m - radius + 2.0 * radius * i as f64 / steps as f64;
        }
        if let Some(v) = f(&point) {
            if v > best.0 {
                best = (v, point.clone());
            }
        }
        let mut d = 0;
        loop {
            if d == dims {
                return best;
            }
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// `beta` by grid search over the Lipschitz budget `L` and the test-function values.
///
/// The best value at fixed `L` is concave in `L`, so an outer grid of spacing
/// 0.05 on `[0, 1]` followed by shrinking local grids finds its maximum. The
/// inner search at each `L` works the same way over the values `g(z_i)`.
/// Every evaluated point is feasible, so the result is a lower bound on the
/// exact value.
pub fn grid_beta(p: &DiscreteMeasure<f64>, q: &DiscreteMeasure<f64>) -> f64 {
    let pb = Problem::new(p, q);
    if pb.w.is_empty() {
        return 0.0;
    }
    let outer = |l: &[f64]| (0.0..=1.0).contains(&l[0]).then(|| pb.inner(l[0]));
    let (mut best, mut at) = grid_pass(&[0.5], 0.5, 20, outer);
    let mut radius = 0.1;
    while radius > 1e-9 {
        let (v, p) = grid_pass(&at, radius, 4, outer);
        if v >= best {
            best = v;
            at = p;
        }
        radius /= 2.0;
    }
    best
}

/// `beta` by enumerating the vertices of the linear program in `(g, L)`.
pub fn vertex_beta(p: &DiscreteMeasure<f64>, q: &DiscreteMeasure<f64>) -> f64 {
    let pb = Problem::new(p, q);
    let k = pb.w.len();
    if k == 0 {
        return 0.0;
    }
    let n = k + 1;
    // constraints a.x <= b in x = (g_1..g_k, L)
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; n];
            a[i] = s;
            a[k] = 1.0;
            rows.push((a, 1.0));
            let mut a = vec![0.0; n];
            a[i] = s;
            a[k] = -pb.d0[i];
            rows.push((a, 0.0));
            for j in i + 1..k {
                let mut a = vec![0.0; n];
                a[i] = s;
                a[j] = -s;
                a[k] = -pb.d[i][j];
                rows.push((a, 0.0));
            }
        }
    }
    let mut a = vec![0.0; n];
    a[k] = -1.0;
    rows.push((a, 0.0));
    let mut best: f64 = 0.0;
    for subset in combinations(rows.len(), n) {
        let sys: Vec<&(Vec<f64>, f64)> = subset.iter().map(|&i| &rows[i]).collect();
        let Some(x) = solve(&sys) else { continue };
        if rows.iter().all(|(a, b)| dot(a, &x) <= b + 1e-9) {
            best = best.max(dot(&pb.w, &x[..k]).abs());
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combinations(m: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, m: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, r, cur, out);
            cur.pop();
        }
    }
    rec(0, m, r, &mut cur, &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(sys: &[&(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = sys.len();
    let mut m: Vec<Vec<f64>> = sys
        .iter()
        .map(|(a, b)| {
            let mut r = a.clone();
            r.push(*b);
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, piv);
        let pivot = m[c].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != c {
                let f = row[c] / pivot[c];
                for (x, p) in row[c..].iter_mut().zip(&pivot[c..]) {
                    *x -= f * p;
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// A random measure with one or two atoms on radii in `{0, 1/2, ..., 3}`.
pub fn random_small_measure(params: &RayParams, draw: &mut StreamReader) -> DiscreteMeasure<f64> {
    let n = params.n_rays();
    let atoms = 1 + (draw.next_word() % 2) as usize;
    let mut pts = Vec::new();
    for _ in 0..atoms {
        let radius = (draw.next_word() % 7) as f64 / 2.0;
        let ray = 1 + (draw.next_word() % n as u64) as usize;
        pts.push(GraphPoint::new(ray, radius, n));
    }
    if atoms == 1 {
        return DiscreteMeasure::dirac(pts[0]);
    }
    let num = 1 + (draw.next_word() % 5) as i128;
    let w = Rational::new(num, 6);
    DiscreteMeasure::new(vec![(pts[0], w), (pts[1], Rational::from_integer(1) - w)]).unwrap()
}

/// Number of distinct non-junction points charged by either measure.
pub fn joint_support(p: &DiscreteMeasure<f64>, q: &DiscreteMeasure<f64>) -> usize {
    let mut pts: Vec<GraphPoint<f64>> = Vec::new();
    for (x, _) in p.atoms().iter().chain(q.atoms()) {
        if !x.is_junction() && !pts.contains(x) {
            pts.push(*x);
        }
    }
    pts.len()
}

/// Law of `Psi_{p,n}(x)` over all `N^(n-p)` mark assignments on `[p, n)`.
pub fn literal_mark_law(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> DiscreteMeasure {
    let n_rays = params.n_rays();
    let steps = (n - p) as usize;
    let lead = (p - walk.start()) as usize;
    let total = n_rays.pow(steps as u32);
    let mut atoms = Vec::with_capacity(total);
    let mut marks = vec![1usize; walk.steps()];
    for code in 0..total {
        let mut c = code;
        let mut weight = Rational::from_integer(1);
        for k in 0..steps {
            let ray = 1 + c % n_rays;
            c /= n_rays;
            marks[lead + k] = ray;
            weight *= params.alpha(ray);
        }
        let fr = FlowRealization::from_parts(walk.clone(), marks.clone(), params).unwrap();
        atoms.push((psi_compose(&fr, p, n, x).unwrap(), weight));
    }
    DiscreteMeasure::new(atoms).unwrap()
}

/// All `2^len` walks of `len` steps from 0.
pub fn all_walks(len: usize) -> impl Iterator<Item = WalkWindow> {
    (0u64..1 << len).map(move |bits| {
        let inc: Vec<i8> = (0..len)
            .map(|j| if bits >> j & 1 == 1 { 1 } else { -1 })
            .collect();
        WalkWindow::from_increments(0, &inc).unwrap()
    })
}

/// Uniform draw in `[0, 1)` from a reader.
pub fn uniform(draw: &mut StreamReader) -> f64 {
    unit_f64(draw.next_word())
}
