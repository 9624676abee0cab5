//! Diffusive rescaling and the limit kernel driven by a continuous path.
//!
//! A [`ContinuousPath`] is the linear interpolation `W_t = S(nt) / sqrt(n)` of a
//! walk. It keeps the raw integer values and works internally in raw time
//! `u = nt`, snapping `u` to the grid when it is within `1e-9` of an integer;
//! at grid times every quantity is then computed from the same integers as the
//! discrete flow, so the two agree bit for bit there.
//!
//! [`wiener_kernel`] evaluates
//! `K_{s,t}(x) = delta_{x + e(x) W_{s,t}}` for `t <= tau_{s,x}` and
//! `sum_i alpha_i delta_{W+_{s,t} e_i}` after, where `tau_{s,x}` is the first
//! time `W_{s,.}` reaches `-|x|`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::chain::ChainPath;
use crate::flows::{kernel_closed_form, psi_closed_form, FlowError, FlowRealization};
use crate::star_graph::{
    beta_distance, graph_distance, DiscreteMeasure, GraphPoint, LatticePoint, RayParams,
};
use crate::walk::{Hit, WalkWindow};

const SNAP: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LimitError {
    #[error("time {t} outside the path domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("radius {radius} is not on the 1/sqrt({scale}) lattice")]
    LatticeMismatch { radius: f64, scale: u64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < SNAP {
        r
    } else {
        u
    }
}

/// `floor(n t)` with the convention `floor(u) = -floor(-u)` for `u <= 0`.
pub fn grid_index(n: u64, t: f64) -> i64 {
    snap(n as f64 * t).trunc() as i64
}

/// Integer `m` with `x = m / sqrt(n)`, or `LatticeMismatch`.
pub fn lattice_radius(radius: f64, n: u64) -> Result<u64, LimitError> {
    let u = radius * (n as f64).sqrt();
    let m = u.round();
    if (u - m).abs() < SNAP && m >= 0.0 {
        Ok(m as u64)
    } else {
        Err(LimitError::LatticeMismatch { radius, scale: n })
    }
}

/// The lattice point nearest to `radius * e_ray` at scale `n`, as a lattice point.
pub fn nearest_lattice_point(params: &RayParams, ray: usize, radius: f64, n: u64) -> LatticePoint {
    let m = (radius * (n as f64).sqrt()).round() as u64;
    GraphPoint::new(ray, m, params.n_rays())
}

/// `W_t = S(nt) / sqrt(n)`, linearly interpolated.
#[derive(Clone, Debug)]
pub struct ContinuousPath {
    scale: u64,
    sqrt_n: f64,
    walk: WalkWindow,
}

impl ContinuousPath {
    pub fn from_walk(walk: &WalkWindow, n: u64) -> Self {
        assert!(n >= 1, "scale must be positive");
        Self {
            scale: n,
            sqrt_n: (n as f64).sqrt(),
            walk: walk.clone(),
        }
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn sqrt_scale(&self) -> f64 {
        self.sqrt_n
    }

    /// `[start / n, end / n]`.
    pub fn domain(&self) -> (f64, f64) {
        let n = self.scale as f64;
        (self.walk.start() as f64 / n, self.walk.end() as f64 / n)
    }

    fn raw_time(&self, t: f64) -> Result<f64, LimitError> {
        let u = snap(t * self.scale as f64);
        if u < self.walk.start() as f64 || u > self.walk.end() as f64 {
            let (lo, hi) = self.domain();
            return Err(LimitError::OutOfDomain { t, lo, hi });
        }
        Ok(u)
    }

    fn raw_at(&self, u: f64) -> f64 {
        let k = u.floor();
        let base = self.walk.value(k as i64) as f64;
        if u == k {
            base
        } else {
            base + (u - k) * self.walk.step(k as i64) as f64
        }
    }

    /// `min_{v in [a, b]} S(v)` on the interpolated raw path.
    fn raw_inf(&self, a: f64, b: f64) -> f64 {
        let mut m = self.raw_at(a).min(self.raw_at(b));
        let (lo, hi) = (a.ceil() as i64, b.floor() as i64);
        if lo <= hi {
            let rel = self
                .walk
                .window_min(lo, hi)
                .expect("grid range inside the window");
            m = m.min((self.walk.value(lo) + rel) as f64);
        }
        m
    }

    /// First raw time `u >= a` with `S(u) = S(a) - depth`, depth in raw units.
    fn raw_hit(&self, a: f64, depth: f64) -> Option<f64> {
        if depth <= 0.0 {
            return Some(a);
        }
        let level = self.raw_at(a) - depth;
        let k0 = a.ceil();
        if self.raw_at(k0) <= level {
            // crossing inside the partial segment [a, k0]
            let (va, vb) = (self.raw_at(a), self.raw_at(k0));
            return Some(a + (va - level) / (va - vb) * (k0 - a));
        }
        let floor_level = level.floor() as i64;
        let drop = self.walk.value(k0 as i64) - floor_level;
        let k = self
            .walk
            .hitting_time(k0 as i64, drop as u64)
            .ok()?
            .time()?;
        let prev = self.walk.value(k - 1) as f64;
        Some((k - 1) as f64 + (prev - level))
    }

    /// `W_t`.
    pub fn value(&self, t: f64) -> Result<f64, LimitError> {
        Ok(self.raw_at(self.raw_time(t)?) / self.sqrt_n)
    }

    /// `W_{s,t} = W_t - W_s`.
    pub fn increment(&self, s: f64, t: f64) -> Result<f64, LimitError> {
        let (a, b) = (self.raw_time(s)?, self.raw_time(t)?);
        Ok((self.raw_at(b) - self.raw_at(a)) / self.sqrt_n)
    }

    /// `W+_{s,t} = W_{s,t} - inf_{u in [s, t]} W_{s,u}`.
    pub fn w_plus(&self, s: f64, t: f64) -> Result<f64, LimitError> {
        let (a, b) = self.ordered(s, t)?;
        Ok((self.raw_at(b) - self.raw_inf(a, b)) / self.sqrt_n)
    }

    /// `tau_{s,x} = inf{r >= s : W_{s,r} = -|x|}`; `None` when not reached in the domain.
    pub fn tau_hit(&self, s: f64, x: &GraphPoint<f64>) -> Result<Option<f64>, LimitError> {
        let a = self.raw_time(s)?;
        let depth = snap(x.radius() * self.sqrt_n);
        Ok(self.raw_hit(a, depth).map(|u| u / self.scale as f64))
    }

    fn ordered(&self, s: f64, t: f64) -> Result<(f64, f64), LimitError> {
        let (a, b) = (self.raw_time(s)?, self.raw_time(t)?);
        if b < a {
            let (lo, hi) = self.domain();
            return Err(LimitError::OutOfDomain { t, lo, hi });
        }
        Ok((a, b))
    }
}

/// The limit kernel `K_{s,t}(x)` driven by `path`.
pub fn wiener_kernel(
    path: &ContinuousPath,
    params: &RayParams,
    s: f64,
    t: f64,
    x: &GraphPoint<f64>,
) -> Result<DiscreteMeasure<f64>, LimitError> {
    let (a, b) = path.ordered(s, t)?;
    let depth = snap(x.radius() * path.sqrt_n);
    let before = path.raw_hit(a, depth).is_none_or(|u| b <= u);
    if before {
        let raw = snap(depth + path.raw_at(b) - path.raw_at(a)).max(0.0);
        Ok(DiscreteMeasure::dirac(GraphPoint::new(
            x.ray(),
            raw / path.sqrt_n,
            params.n_rays(),
        )))
    } else {
        let raw = path.raw_at(b) - path.raw_inf(a, b);
        Ok(DiscreteMeasure::spread(params, raw / path.sqrt_n))
    }
}

/// `K_{p,n}(y)` of the walk with atoms divided by `sqrt(scale)`.
pub fn rescaled_discrete_kernel(
    walk: &WalkWindow,
    params: &RayParams,
    scale: u64,
    p: i64,
    n: i64,
    y: &LatticePoint,
) -> Result<DiscreteMeasure<f64>, LimitError> {
    let sqrt_n = (scale as f64).sqrt();
    Ok(kernel_closed_form(walk, params, p, n, y)?.map(|z| z.rescaled(sqrt_n)))
}

/// A chain path seen at scale `n`: `M^n_t = M(nt) / sqrt(n)`, interpolated radially.
#[derive(Clone, Debug)]
pub struct RescaledChain<'a> {
    path: &'a ChainPath,
    scale: u64,
}

impl<'a> RescaledChain<'a> {
    pub fn new(path: &'a ChainPath, scale: u64) -> Self {
        Self { path, scale }
    }

    /// `M^n_t` for `t` in `[0, (len - 1) / n]`.
    pub fn at(&self, t: f64) -> Result<GraphPoint<f64>, LimitError> {
        let last = self.path.len() as f64 - 1.0;
        let u = snap(t * self.scale as f64);
        if !(0.0..=last).contains(&u) {
            return Err(LimitError::OutOfDomain {
                t,
                lo: 0.0,
                hi: last / self.scale as f64,
            });
        }
        let sqrt_n = (self.scale as f64).sqrt();
        let k = u.floor() as usize;
        let x = self.path.positions[k];
        if u == k as f64 {
            return Ok(x.rescaled(sqrt_n));
        }
        let y = self.path.positions[k + 1];
        let f = u - k as f64;
        let r = (1.0 - f) * x.radius() as f64 + f * y.radius() as f64;
        // consecutive states share a ray or one of them is the junction
        let ray = if x.is_junction() { y.ray() } else { x.ray() };
        Ok(GraphPoint::new(ray, r / sqrt_n, self.path.params.n_rays()))
    }
}

/// Scenario for the convergence harness: a start `x` on ray `x_ray` at radius
/// `x_radius`, observed on `[s, s + horizon]`.
#[derive(Clone, Debug)]
pub struct ConvergenceSetup {
    pub params: RayParams,
    pub seed: u64,
    pub s: f64,
    pub horizon: f64,
    pub x_ray: usize,
    pub x_radius: f64,
}

/// One replica at one scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaProfile {
    pub n: u64,
    pub replica: u64,
    /// `sup_t d(Psi_{ns, nt}(sqrt(n) x_n) / sqrt(n), phi_{s,t}(x))`.
    pub sup_distance: f64,
    /// `sup_t beta(K_{ns, nt}(sqrt(n) x_n)(sqrt(n) .), K_{s,t}(x))`.
    pub sup_beta: f64,
    /// `|T_{ns, sqrt(n) x_n} / n - tau_{s,x}|`; infinite if only one of them occurs.
    pub tau_gap: Option<f64>,
    /// Grid times where the rescaled discrete kernel differs from the limit kernel on the same data.
    pub grid_mismatches: u64,
}

struct Scenario<'a> {
    fr: &'a FlowRealization,
    path: ContinuousPath,
    x: GraphPoint<f64>,
    x_n: LatticePoint,
    a: f64,
    p: i64,
    q: i64,
    depth: f64,
    tau: Option<f64>,
}

impl<'a> Scenario<'a> {
    fn new(
        fr: &'a FlowRealization,
        n: u64,
        s: f64,
        horizon: f64,
        x: GraphPoint<f64>,
        x_n: &GraphPoint<f64>,
    ) -> Result<Self, LimitError> {
        let m = lattice_radius(x_n.radius(), n)?;
        let x_n = GraphPoint::new(x_n.ray(), m, fr.params.n_rays());
        let path = ContinuousPath::from_walk(&fr.walk, n);
        let a = path.raw_time(s)?;
        let q = grid_index(n, s + horizon);
        // the ray rule below may look one step past the horizon
        path.raw_time((q + 1) as f64 / n as f64)?;
        let depth = snap(x.radius() * path.sqrt_n);
        let tau = path.raw_hit(a, depth);
        Ok(Self {
            fr,
            p: grid_index(n, s),
            q,
            a,
            depth,
            tau,
            x,
            x_n,
            path,
        })
    }

    /// Raw times `a` and the grid points after it, each with the step index `floor(u)`
    /// in force there and a flag for left limits.
    fn times(&self) -> impl Iterator<Item = (f64, i64)> + '_ {
        let first = self.a.floor() as i64 + 1;
        std::iter::once((self.a, self.p))
            .chain((first..=self.q).flat_map(|k| [(k as f64, k - 1), (k as f64, k)]))
    }

    /// `phi_{s,t}(x)` at raw time `u`, taking post-hit rays from the discrete flow at step `k`.
    fn phi(&self, u: f64, k: i64) -> Result<GraphPoint<f64>, LimitError> {
        let n_rays = self.fr.params.n_rays();
        let sqrt_n = self.path.sqrt_n;
        if self.tau.is_none_or(|tau| u <= tau) {
            let raw = snap(self.depth + self.path.raw_at(u) - self.path.raw_at(self.a)).max(0.0);
            return Ok(GraphPoint::new(self.x.ray(), raw / sqrt_n, n_rays));
        }
        let raw = self.path.raw_at(u) - self.path.raw_inf(self.a, u);
        if raw == 0.0 {
            return Ok(GraphPoint::junction(n_rays));
        }
        let j = GraphPoint::junction(n_rays);
        let here = psi_closed_form(self.fr, self.p, k, &j)?;
        let ray = if !here.is_junction() {
            here.ray()
        } else {
            psi_closed_form(self.fr, self.p, k + 1, &j)?.ray()
        };
        Ok(GraphPoint::new(ray, raw / sqrt_n, n_rays))
    }

    fn sup_distance(&self) -> Result<f64, LimitError> {
        let sqrt_n = self.path.sqrt_n;
        let mut sup: f64 = 0.0;
        for (u, k) in self.times() {
            let discrete = psi_closed_form(self.fr, self.p, k, &self.x_n)?.rescaled(sqrt_n);
            sup = sup.max(graph_distance(&discrete, &self.phi(u, k)?));
        }
        Ok(sup)
    }

    fn limit_kernel(&self, u: f64) -> DiscreteMeasure<f64> {
        let params = &self.fr.params;
        let sqrt_n = self.path.sqrt_n;
        if self.tau.is_none_or(|tau| u <= tau) {
            let raw = snap(self.depth + self.path.raw_at(u) - self.path.raw_at(self.a)).max(0.0);
            DiscreteMeasure::dirac(GraphPoint::new(self.x.ray(), raw / sqrt_n, params.n_rays()))
        } else {
            let raw = self.path.raw_at(u) - self.path.raw_inf(self.a, u);
            DiscreteMeasure::spread(params, raw / sqrt_n)
        }
    }

    fn sup_beta(&self) -> Result<f64, LimitError> {
        let scale = self.path.scale;
        let mut memo: HashMap<Vec<(usize, u64, u64)>, f64> = HashMap::new();
        let key = |a: &DiscreteMeasure<f64>, b: &DiscreteMeasure<f64>| {
            let mut k: Vec<(usize, u64, u64)> = Vec::with_capacity(a.len() + b.len() + 1);
            k.extend(
                a.atoms()
                    .iter()
                    .map(|(x, _)| (x.ray(), x.radius().to_bits(), 0)),
            );
            k.push((0, 0, 1));
            k.extend(
                b.atoms()
                    .iter()
                    .map(|(x, _)| (x.ray(), x.radius().to_bits(), 0)),
            );
            k
        };
        let mut sup: f64 = 0.0;
        for (u, k) in self.times() {
            let discrete = rescaled_discrete_kernel(
                &self.fr.walk,
                &self.fr.params,
                scale,
                self.p,
                k,
                &self.x_n,
            )?;
            let limit = self.limit_kernel(u);
            if discrete == limit {
                continue;
            }
            let b = *memo
                .entry(key(&discrete, &limit))
                .or_insert_with(|| beta_distance(&discrete, &limit));
            sup = sup.max(b);
        }
        Ok(sup)
    }

    /// Grid times `k / n` where the rescaled discrete kernel from `x_n` differs
    /// from the limit kernel from `x_n` on the same path.
    fn grid_mismatches(&self) -> Result<u64, LimitError> {
        let scale = self.path.scale;
        let x_n = self.x_n.rescaled(self.path.sqrt_n);
        let s = self.a / scale as f64;
        let mut bad = 0;
        for k in self.p.max(self.a.ceil() as i64)..=self.q {
            let discrete = rescaled_discrete_kernel(
                &self.fr.walk,
                &self.fr.params,
                scale,
                self.p,
                k,
                &self.x_n,
            )?;
            let limit = wiener_kernel(
                &self.path,
                &self.fr.params,
                s,
                k as f64 / scale as f64,
                &x_n,
            )?;
            if discrete != limit {
                bad += 1;
            }
        }
        Ok(bad)
    }

    fn tau_gap(&self) -> Result<Option<f64>, LimitError> {
        let n = self.path.scale as f64;
        let discrete = self
            .fr
            .walk
            .hitting_time(self.p, self.x_n.radius())
            .map_err(FlowError::from)?;
        let tau = self.tau.filter(|&u| u <= self.q as f64);
        let hit = match discrete {
            Hit::At(k) if k <= self.q => Some(k as f64),
            _ => None,
        };
        Ok(match (hit, tau) {
            (Some(k), Some(u)) => Some((k - u).abs() / n),
            (None, None) => None,
            _ => Some(f64::INFINITY),
        })
    }
}

/// `sup_{t in [s, s+T]} d(Psi_{ns,nt}(sqrt(n) x_n) / sqrt(n), phi_{s,t}(x))` on one realization.
///
/// `phi` is evaluated on the rescaled walk of `fr`, with rays after the
/// hitting time read off the discrete flow on the matching excursion.
pub fn mapping_convergence(
    fr: &FlowRealization,
    n: u64,
    s: f64,
    horizon: f64,
    x: &GraphPoint<f64>,
    x_n: &GraphPoint<f64>,
) -> Result<f64, LimitError> {
    Scenario::new(fr, n, s, horizon, *x, x_n)?.sup_distance()
}

/// `sup_{t in [s, s+T]} beta(K_{ns,nt}(sqrt(n) x_n)(sqrt(n) .), K_{s,t}(x))` on one realization.
pub fn convergence_beta(
    fr: &FlowRealization,
    n: u64,
    s: f64,
    horizon: f64,
    x: &GraphPoint<f64>,
    x_n: &GraphPoint<f64>,
) -> Result<f64, LimitError> {
    Scenario::new(fr, n, s, horizon, *x, x_n)?.sup_beta()
}

/// Window of walk indices needed for a scenario at scale `n`.
pub fn scenario_window(n: u64, s: f64, horizon: f64) -> (i64, i64) {
    let start = grid_index(n, s).min(0) - 1;
    (start, grid_index(n, s + horizon) + 2)
}

/// All statistics of one replica at one scale.
pub fn replica_profile(
    setup: &ConvergenceSetup,
    n: u64,
    replica: u64,
) -> Result<ReplicaProfile, LimitError> {
    let (lo, hi) = scenario_window(n, setup.s, setup.horizon);
    let fr = FlowRealization::generate(&setup.params, lo, hi, setup.seed, replica)?;
    let n_rays = setup.params.n_rays();
    let x = GraphPoint::new(setup.x_ray, setup.x_radius, n_rays);
    let x_n = nearest_lattice_point(&setup.params, setup.x_ray, setup.x_radius, n)
        .rescaled((n as f64).sqrt());
    let sc = Scenario::new(&fr, n, setup.s, setup.horizon, x, &x_n)?;
    Ok(ReplicaProfile {
        n,
        replica,
        sup_distance: sc.sup_distance()?,
        sup_beta: sc.sup_beta()?,
        tau_gap: sc.tau_gap()?,
        grid_mismatches: sc.grid_mismatches()?,
    })
}

/// Replica profiles for every scale, in `(n, replica)` order.
pub fn convergence_profile(
    setup: &ConvergenceSetup,
    n_list: &[u64],
    replicas: u64,
) -> Result<Vec<ReplicaProfile>, LimitError> {
    let jobs: Vec<(u64, u64)> = n_list
        .iter()
        .flat_map(|&n| (0..replicas).map(move |r| (n, r)))
        .collect();
    jobs.par_iter()
        .map(|&(n, r)| replica_profile(setup, n, r))
        .collect()
}
