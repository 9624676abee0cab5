//! Batch experiments that bundle the library into pass/fail reports.
//!
//! Every experiment is a pure function of an [`Experiment`]: replicas are
//! fanned out with rayon and merged in replica order, so the reports are
//! identical for any worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{
    block_facts, flip_excursions, simulate_chain, BlockCase, ChainError, ChainKind, ChainPath,
    FlipOutcome, MarkStream,
};
use crate::cv::{
    cv_forward, cv_invariant_check, cv_inverse, even_level_first_hits, sign_change_times, Sign,
};
use crate::flows::{
    kernel_closed_form, kernel_is_conditional_law, kernel_then, psi_closed_form, psi_compose,
    FlowRealization,
};
use crate::limit::{convergence_profile, ConvergenceSetup, ReplicaProfile};
use crate::rng::{Channel, StreamKey};
use crate::star_graph::{
    beta_distance, DiscreteMeasure, GraphPoint, LatticePoint, Rational, RayParams,
};
use crate::stats::{
    chi_square, chi_square_independence, chi_square_pvalue, walsh_marginal_check, MarginalReport,
};
use crate::walk::WalkWindow;
use crate::Result;

/// Family-wise level of every statistical acceptance check.
pub const FAMILY_LEVEL: f64 = 0.01;

/// Parameters shared by all experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub params: RayParams,
    pub seed: u64,
    /// Walks for the transform and flipping checks, chains for the marginal check.
    pub replicas: u64,
    /// Walk length for the transform and flipping checks.
    pub length: usize,
    /// Scales of the convergence profile; the last one is also the chain time of the marginal check.
    pub n_list: Vec<u64>,
    pub horizon: f64,
    pub s: f64,
    pub x_ray: usize,
    pub x_radius: f64,
    /// Replicas per scale of the convergence profile.
    pub convergence_replicas: u64,
    /// Random spot checks of the flow identities.
    pub spot_checks: u64,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            params: RayParams::new(vec![
                Rational::new(1, 2),
                Rational::new(1, 3),
                Rational::new(1, 6),
            ])
            .expect("valid weights"),
            seed: 20_240_601,
            replicas: 10_000,
            length: 1_000,
            n_list: vec![100, 1_000, 10_000],
            horizon: 1.0,
            s: 0.5,
            x_ray: 1,
            x_radius: 1.0 / 3.0,
            convergence_replicas: 200,
            spot_checks: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// One named pass/fail criterion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, value <= threshold)
    }

    /// Passes when `value > threshold`; used for p-values.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, value > threshold)
    }

    fn new(name: impl Into<String>, value: f64, threshold: f64, ok: bool) -> Self {
        Self {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            value,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(Check::passed)
}

fn walk_of(exp: &Experiment, replica: u64) -> Result<WalkWindow> {
    Ok(WalkWindow::generate(
        0,
        exp.length as i64,
        exp.seed,
        replica,
    )?)
}

fn replicas<T: Send>(count: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(f).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CvReport {
    pub checks: Vec<Check>,
    /// Replicas by `max |Ybar_n - |S_n||`, index 3 collecting everything above 2.
    pub deviation_counts: [u64; 4],
}

#[derive(Default)]
struct CvTally {
    deviation: u64,
    tau_mismatch: bool,
    reflection_mismatch: bool,
    roundtrip_mismatch: bool,
    preimage_mismatch: bool,
    ups: u64,
    downs: u64,
    pairs: [u64; 4],
    first_vs_next: [u64; 8],
}

fn cv_tally(s: &WalkWindow) -> Result<CvTally> {
    let s_bar = cv_forward(s)?;
    let eps = Sign::from_value(s.step(s.start()));
    let other = Sign::from_value(-s.step(s.start()));
    let inc = s_bar.increments();
    let mut t = CvTally {
        deviation: cv_invariant_check(s)?,
        tau_mismatch: sign_change_times(s) != even_level_first_hits(&s_bar),
        reflection_mismatch: cv_forward(&s.negated())? != s_bar,
        roundtrip_mismatch: cv_inverse(&s_bar, eps)? != *s,
        preimage_mismatch: cv_inverse(&s_bar, other)? != s.negated(),
        ..CvTally::default()
    };
    t.ups = inc.iter().filter(|&&x| x > 0).count() as u64;
    t.downs = inc.len() as u64 - t.ups;
    let bit = |x: i8| usize::from(x > 0);
    for pair in inc.chunks_exact(2) {
        t.pairs[2 * bit(pair[0]) + bit(pair[1])] += 1;
    }
    if inc.len() >= 2 {
        t.first_vs_next[4 * bit(s.step(s.start()) as i8) + 2 * bit(inc[0]) + bit(inc[1])] += 1;
    }
    Ok(t)
}

/// Walks of `len` steps whose transform fibre is not exactly `{S, -S}`, over all `2^len` walks.
pub fn fibre_violations(len: usize) -> Result<u64> {
    let mut fibres: BTreeMap<Vec<i64>, Vec<WalkWindow>> = BTreeMap::new();
    for bits in 0u32..1 << len {
        let inc: Vec<i8> = (0..len)
            .map(|j| if bits >> j & 1 == 1 { 1 } else { -1 })
            .collect();
        let s = WalkWindow::from_increments(0, &inc)?;
        fibres
            .entry(cv_forward(&s)?.values().to_vec())
            .or_default()
            .push(s);
    }
    let mut bad = 0;
    for walks in fibres.values() {
        let ok = walks.len() == 2 && walks[0].negated() == walks[1];
        if !ok {
            bad += walks.len() as u64;
        }
    }
    Ok(bad)
}

/// Transform bound, structure and the simple-random-walk law of `T(S)`.
pub fn cv_check(exp: &Experiment) -> Result<CvReport> {
    let tallies = replicas(exp.replicas, |r| cv_tally(&walk_of(exp, r)?))?;
    let mut deviation_counts = [0u64; 4];
    let (mut tau, mut refl, mut round, mut pre) = (0u64, 0u64, 0u64, 0u64);
    let (mut ups, mut downs) = (0u64, 0u64);
    let mut pairs = [0u64; 4];
    let mut first = [0u64; 8];
    for t in &tallies {
        deviation_counts[t.deviation.min(3) as usize] += 1;
        tau += u64::from(t.tau_mismatch);
        refl += u64::from(t.reflection_mismatch);
        round += u64::from(t.roundtrip_mismatch);
        pre += u64::from(t.preimage_mismatch);
        ups += t.ups;
        downs += t.downs;
        for (a, b) in pairs.iter_mut().zip(t.pairs) {
            *a += b;
        }
        for (a, b) in first.iter_mut().zip(t.first_vs_next) {
            *a += b;
        }
    }
    let mut fibres = 0;
    for len in 2..=12 {
        fibres += fibre_violations(len)?;
    }
    let level = FAMILY_LEVEL / 3.0;
    let (inc_stat, inc_dof) = chi_square(&[downs, ups], &[0.5, 0.5])?;
    let (pair_stat, pair_dof) = chi_square(&pairs, &[0.25; 4])?;
    let table: Vec<Vec<u64>> = first.chunks(4).map(<[u64]>::to_vec).collect();
    let (ind_stat, ind_dof) = chi_square_independence(&table)?;
    let checks = vec![
        Check::at_most("cv.bound_violations", deviation_counts[3] as f64, 0.0),
        Check::at_most("cv.tau_mismatches", tau as f64, 0.0),
        Check::at_most("cv.reflection_mismatches", refl as f64, 0.0),
        Check::at_most("cv.roundtrip_mismatches", round as f64, 0.0),
        Check::at_most("cv.preimage_mismatches", pre as f64, 0.0),
        Check::at_most("cv.fibre_violations_len_le_12", fibres as f64, 0.0),
        Check::above(
            "cv.increment_balance_p",
            chi_square_pvalue(inc_stat, inc_dof),
            level,
        ),
        Check::above(
            "cv.increment_pairs_p",
            chi_square_pvalue(pair_stat, pair_dof),
            level,
        ),
        Check::above(
            "cv.first_step_independence_p",
            chi_square_pvalue(ind_stat, ind_dof),
            level,
        ),
    ];
    Ok(CvReport {
        checks,
        deviation_counts,
    })
}

/// Exact transform checks on one given walk, with its transform.
pub fn cv_walk_check(s: &WalkWindow) -> Result<(WalkWindow, Vec<Check>)> {
    let t = cv_tally(s)?;
    let checks = vec![
        Check::at_most("cv.max_deviation", t.deviation as f64, 2.0),
        Check::at_most("cv.tau_mismatches", u64::from(t.tau_mismatch) as f64, 0.0),
        Check::at_most(
            "cv.reflection_mismatches",
            u64::from(t.reflection_mismatch) as f64,
            0.0,
        ),
        Check::at_most(
            "cv.roundtrip_mismatches",
            u64::from(t.roundtrip_mismatch) as f64,
            0.0,
        ),
        Check::at_most(
            "cv.preimage_mismatches",
            u64::from(t.preimage_mismatch) as f64,
            0.0,
        ),
    ];
    Ok((cv_forward(s)?, checks))
}

#[derive(Clone, Debug, Serialize)]
pub struct DonskerReport {
    pub checks: Vec<Check>,
    pub chain_time: u64,
    pub donsker: MarginalSummary,
    pub lazy: MarginalSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalSummary {
    pub samples: usize,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub ray_counts: Vec<u64>,
    pub chi_square: f64,
    pub chi_square_pvalue: f64,
}

impl From<MarginalReport> for MarginalSummary {
    fn from(r: MarginalReport) -> Self {
        Self {
            samples: r.samples,
            ks_statistic: r.ks_statistic,
            ks_pvalue: r.ks_pvalue,
            ray_counts: r.ray_counts,
            chi_square: r.chi_square,
            chi_square_pvalue: r.chi_square_pvalue,
        }
    }
}

/// Path of chain `replica` as used by the marginal check.
pub fn chain_path(
    kind: ChainKind,
    params: &RayParams,
    seed: u64,
    replica: u64,
    steps: usize,
) -> ChainPath {
    simulate_chain(
        kind,
        params,
        StreamKey::new(seed, replica, Channel::Chain),
        steps,
    )
}

/// States at time `steps` of independent chains started at the junction.
pub fn chain_states(
    kind: ChainKind,
    params: &RayParams,
    seed: u64,
    chains: u64,
    steps: usize,
) -> Vec<LatticePoint> {
    (0..chains)
        .into_par_iter()
        .map(|r| {
            *chain_path(kind, params, seed, r, steps)
                .positions
                .last()
                .expect("nonempty path")
        })
        .collect()
}

/// Fixed-time marginals of both chains against the Walsh law at time 1.
pub fn chain_donsker(exp: &Experiment) -> Result<DonskerReport> {
    let n = *exp.n_list.last().expect("nonempty n_list");
    let level = FAMILY_LEVEL / 4.0;
    let mut checks = Vec::new();
    let mut summaries = Vec::new();
    for (kind, label) in [(ChainKind::Donsker, "donsker"), (ChainKind::Lazy, "lazy")] {
        let states = chain_states(kind, &exp.params, exp.seed, exp.replicas, n as usize);
        let report = walsh_marginal_check(&states, n, &exp.params)?;
        checks.push(Check::above(
            format!("{label}.radial_ks_p"),
            report.ks_pvalue,
            level,
        ));
        checks.push(Check::above(
            format!("{label}.ray_chi_square_p"),
            report.chi_square_pvalue,
            level,
        ));
        summaries.push(MarginalSummary::from(report));
    }
    let lazy = summaries.pop().expect("two chains");
    let donsker = summaries.pop().expect("two chains");
    Ok(DonskerReport {
        checks,
        chain_time: n,
        donsker,
        lazy,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FlipReport {
    pub checks: Vec<Check>,
    /// Walks that never change sign; they carry no complete block.
    pub walks_without_block: u64,
    /// Walks with no block closing past the radial horizon within the length cap.
    pub radial_unclosed: u64,
    pub radial_up: u64,
    pub radial_down: u64,
    pub exit_counts: Vec<u64>,
    /// Blocks by case: no excursion, one early, one late, two.
    pub case_counts: [u64; 4],
}

struct FlipTally {
    deviation: u64,
    facts_a: u64,
    facts_b: u64,
    checked: u64,
    neighbour_failure: bool,
    exit: Option<usize>,
    cases: [u64; 4],
}

/// Steps before this time feed the radial-move count.
const RADIAL_HORIZON: i64 = 16;
/// Longest walk generated to close the block that covers the radial horizon.
const RADIAL_MAX_LEN: i64 = 1 << 20;

/// Up and down moves of `M` away from the junction on `[0, RADIAL_HORIZON)`.
///
/// `M` only exists up to the last block end, which is a zero of `S`; counting
/// all of it would force `downs = ups + exits`. The count therefore uses a
/// fixed horizon, and the walk is extended (same stream, same prefix) until a
/// block closes past it.
fn radial_sample(exp: &Experiment, r: u64) -> Result<Option<(u64, u64)>> {
    let mut len = 64;
    let s = loop {
        let s = WalkWindow::generate(0, len, exp.seed, r)?;
        if let Some(t) = sign_change_times(&s)
            .into_iter()
            .find(|&t| t >= RADIAL_HORIZON)
        {
            break WalkWindow::from_values(0, &s.values()[..=(t + 1) as usize])?;
        }
        if len >= RADIAL_MAX_LEN {
            return Ok(None);
        }
        len = (len * 16).min(RADIAL_MAX_LEN);
    };
    let s_bar = cv_forward(&s)?;
    let (eta, aux) = mark_streams(exp, r);
    let out = flip_excursions(&s_bar, &s, &exp.params, &eta, &aux)?;
    let (mut up, mut down) = (0, 0);
    for w in out.path.positions[..=RADIAL_HORIZON as usize].windows(2) {
        if w[0].is_junction() {
            continue;
        }
        if w[1].radius() > w[0].radius() {
            up += 1;
        } else {
            down += 1;
        }
    }
    Ok(Some((up, down)))
}

fn mark_streams(exp: &Experiment, r: u64) -> (MarkStream, MarkStream) {
    (
        MarkStream::new(
            StreamKey::new(exp.seed, r, Channel::Marks),
            exp.params.clone(),
        ),
        MarkStream::new(
            StreamKey::new(exp.seed, r, Channel::AuxMarks),
            exp.params.clone(),
        ),
    )
}

/// The walk of replica `r` and its flipped chain; `None` when `S` never changes sign.
pub fn flipped_sample(exp: &Experiment, r: u64) -> Result<Option<(WalkWindow, FlipOutcome)>> {
    let s = walk_of(exp, r)?;
    let s_bar = cv_forward(&s)?;
    let (eta, aux) = mark_streams(exp, r);
    match flip_excursions(&s_bar, &s, &exp.params, &eta, &aux) {
        Err(ChainError::IncompleteBlock) => Ok(None),
        other => Ok(Some((s, other?))),
    }
}

/// `None` when `S` never changes sign, so that no block closes.
fn flip_tally(exp: &Experiment, r: u64) -> Result<Option<FlipTally>> {
    let Some((s, out)) = flipped_sample(exp, r)? else {
        return Ok(None);
    };
    let s_bar = cv_forward(&s)?;
    let (eta, _) = mark_streams(exp, r);
    let facts = block_facts(&s, &s_bar);
    let pos = &out.path.positions;
    // one exit per walk, at the first junction visit after the burn-in; this time depends on S only
    let burn = pos.len() / 2;
    let exit = (burn..pos.len().saturating_sub(1))
        .find(|&k| pos[k].is_junction())
        .map(|k| pos[k + 1].ray());
    let mut cases = [0u64; 4];
    for b in &out.blocks {
        let i = match b.case {
            BlockCase::NoExcursion => 0,
            BlockCase::OneEarly => 1,
            BlockCase::OneLate => 2,
            BlockCase::Two => 3,
        };
        cases[i] += 1;
    }
    Ok(Some(FlipTally {
        deviation: out.excursion_deviation(&eta),
        facts_a: facts.a_violations,
        facts_b: facts.b_violations,
        checked: facts.checked,
        neighbour_failure: !out.path.is_nearest_neighbour(false),
        exit,
        cases,
    }))
}

/// The flipping construction: pathwise bounds, structural facts and the one-step law.
pub fn flip_check(exp: &Experiment) -> Result<FlipReport> {
    let tallies = replicas(exp.replicas, |r| flip_tally(exp, r))?;
    // taken on every walk: dropping walks without a block would select on S
    let radial = replicas(exp.replicas, |r| radial_sample(exp, r))?;
    let mut exit_counts = vec![0u64; exp.params.n_rays()];
    let mut case_counts = [0u64; 4];
    let (mut worst, mut over, mut fa, mut fb, mut checked, mut nn, mut up, mut down) =
        (0, 0, 0, 0, 0, 0, 0, 0);
    let mut radial_unclosed = 0u64;
    let unblocked = tallies.iter().filter(|t| t.is_none()).count() as u64;
    for t in tallies.iter().flatten() {
        worst = worst.max(t.deviation);
        over += u64::from(t.deviation > 2);
        fa += t.facts_a;
        fb += t.facts_b;
        checked += t.checked;
        nn += u64::from(t.neighbour_failure);
        if let Some(ray) = t.exit {
            exit_counts[ray - 1] += 1;
        }
        for (a, b) in case_counts.iter_mut().zip(t.cases) {
            *a += b;
        }
    }
    for sample in &radial {
        match sample {
            Some((u, d)) => {
                up += u;
                down += d;
            }
            None => radial_unclosed += 1,
        }
    }
    let level = FAMILY_LEVEL / 2.0;
    let (radial, radial_dof) = chi_square(&[down, up], &[0.5, 0.5])?;
    let (exits, exits_dof) = chi_square(&exit_counts, &exp.params.alpha_f64())?;
    let checks = vec![
        Check::at_most("flip.excursion_bound_violations", over as f64, 0.0),
        Check::at_most("flip.max_excursion_deviation", worst as f64, 2.0),
        Check::at_most("flip.fact_a_violations", fa as f64, 0.0),
        Check::at_most("flip.fact_b_violations", fb as f64, 0.0),
        Check::at_most("flip.non_neighbour_paths", nn as f64, 0.0),
        Check::above("flip.pooled_radial_steps", (up + down) as f64, 1e5 - 1.0),
        Check::above("flip.fact_positions_checked", checked as f64, 0.0),
        Check::above(
            "flip.radial_move_p",
            chi_square_pvalue(radial, radial_dof),
            level,
        ),
        Check::above(
            "flip.junction_exit_p",
            chi_square_pvalue(exits, exits_dof),
            level,
        ),
    ];
    Ok(FlipReport {
        checks,
        walks_without_block: unblocked,
        radial_unclosed,
        radial_up: up,
        radial_down: down,
        exit_counts,
        case_counts,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowReport {
    pub checks: Vec<Check>,
    pub exhaustive_walks: u64,
    pub exhaustive_comparisons: u64,
    pub spot_checks: u64,
}

const EXHAUSTIVE_LEN: usize = 12;
const EXHAUSTIVE_RADIUS: u64 = 3;
const SPOT_LEN: i64 = 1_000;

#[derive(Default)]
struct FlowTally {
    psi_closed: u64,
    psi_cocycle: u64,
    kernel_closed: u64,
    kernel_cocycle: u64,
    conditional: u64,
    comparisons: u64,
}

impl FlowTally {
    fn add(&mut self, o: &FlowTally) {
        self.psi_closed += o.psi_closed;
        self.psi_cocycle += o.psi_cocycle;
        self.kernel_closed += o.kernel_closed;
        self.kernel_cocycle += o.kernel_cocycle;
        self.conditional += o.conditional;
        self.comparisons += o.comparisons;
    }
}

/// Junction plus every lattice point of radius `1..=radius` on every ray.
pub fn points_within(params: &RayParams, radius: u64) -> Vec<LatticePoint> {
    let n = params.n_rays();
    let mut out = vec![params.junction()];
    for ray in 1..=n {
        out.extend((1..=radius).map(|r| GraphPoint::new(ray, r, n)));
    }
    out
}

fn exhaustive_walk(exp: &Experiment, bits: u64, starts: &[LatticePoint]) -> Result<FlowTally> {
    let inc: Vec<i8> = (0..EXHAUSTIVE_LEN)
        .map(|j| if bits >> j & 1 == 1 { 1 } else { -1 })
        .collect();
    let walk = WalkWindow::from_increments(0, &inc)?;
    let key = StreamKey::new(exp.seed, bits, Channel::Marks);
    let marks = key
        .words(0, EXHAUSTIVE_LEN)
        .into_iter()
        .map(|w| exp.params.ray_from_word(w))
        .collect();
    let fr = FlowRealization::from_parts(walk, marks, &exp.params)?;
    let params = &exp.params;
    let end = EXHAUSTIVE_LEN as i64;
    let mut t = FlowTally::default();
    for x in starts {
        for p in 0..=end {
            // psi and kernel from (p, x) to every later n, with the stepwise composition carried along
            let mut composed = DiscreteMeasure::dirac(*x);
            for n in p..=end {
                if n > p {
                    composed = composed.bind(|y| {
                        crate::flows::kernel_one_step(&fr.walk, params, n - 1, y)
                            .expect("step inside the window")
                    });
                }
                let psi = psi_closed_form(&fr, p, n, x)?;
                let kernel = kernel_closed_form(&fr.walk, params, p, n, x)?;
                t.comparisons += 1;
                t.psi_closed += u64::from(psi_compose(&fr, p, n, x)? != psi);
                t.kernel_closed += u64::from(composed != kernel);
                for r in p..=n {
                    let via = psi_closed_form(&fr, r, n, &psi_closed_form(&fr, p, r, x)?)?;
                    t.psi_cocycle += u64::from(via != psi);
                }
            }
            // kernel cocycle through every intermediate time on the full horizon
            let whole = kernel_closed_form(&fr.walk, params, p, end, x)?;
            for r in p..=end {
                let via = kernel_then(
                    |y| kernel_closed_form(&fr.walk, params, p, r, y).expect("inside the window"),
                    |y| kernel_closed_form(&fr.walk, params, r, end, y).expect("inside the window"),
                    x,
                );
                t.kernel_cocycle += u64::from(via != whole);
            }
        }
        t.conditional += u64::from(!kernel_is_conditional_law(&fr.walk, params, 0, end, x)?);
    }
    Ok(t)
}

fn spot_check(exp: &Experiment, r: u64) -> Result<FlowTally> {
    let fr = FlowRealization::generate(&exp.params, 0, SPOT_LEN, exp.seed, r)?;
    let mut draw = StreamKey::new(exp.seed, r, Channel::Chain).reader(0);
    let mut times: Vec<i64> = (0..3)
        .map(|_| (draw.next_word() % (SPOT_LEN as u64 + 1)) as i64)
        .collect();
    times.sort_unstable();
    let (p, m, n) = (times[0], times[1], times[2]);
    let radius = draw.next_word() % 31;
    let ray = exp.params.ray_from_word(draw.next_word());
    let x = GraphPoint::new(ray, radius, exp.params.n_rays());
    let psi = psi_closed_form(&fr, p, n, &x)?;
    let via = psi_closed_form(&fr, m, n, &psi_closed_form(&fr, p, m, &x)?)?;
    let kernel = kernel_closed_form(&fr.walk, &exp.params, p, n, &x)?;
    let kvia = kernel_then(
        |y| kernel_closed_form(&fr.walk, &exp.params, p, m, y).expect("inside the window"),
        |y| kernel_closed_form(&fr.walk, &exp.params, m, n, y).expect("inside the window"),
        &x,
    );
    Ok(FlowTally {
        psi_closed: u64::from(psi_compose(&fr, p, n, &x)? != psi),
        psi_cocycle: u64::from(via != psi),
        kernel_cocycle: u64::from(kvia != kernel),
        comparisons: 1,
        ..FlowTally::default()
    })
}

/// Exact flow identities: exhaustively on short walks, by spot checks on long ones.
pub fn flow_check(exp: &Experiment) -> Result<FlowReport> {
    let starts = points_within(&exp.params, EXHAUSTIVE_RADIUS);
    let walks = 1u64 << EXHAUSTIVE_LEN;
    let per_walk = replicas(walks, |bits| exhaustive_walk(exp, bits, &starts))?;
    let mut grid = FlowTally::default();
    per_walk.iter().for_each(|t| grid.add(t));
    let per_spot = replicas(exp.spot_checks, |r| spot_check(exp, r))?;
    let mut spot = FlowTally::default();
    per_spot.iter().for_each(|t| spot.add(t));
    let checks = vec![
        Check::at_most(
            "flow.grid.psi_closed_form_mismatches",
            grid.psi_closed as f64,
            0.0,
        ),
        Check::at_most(
            "flow.grid.psi_cocycle_mismatches",
            grid.psi_cocycle as f64,
            0.0,
        ),
        Check::at_most(
            "flow.grid.kernel_closed_form_mismatches",
            grid.kernel_closed as f64,
            0.0,
        ),
        Check::at_most(
            "flow.grid.kernel_cocycle_mismatches",
            grid.kernel_cocycle as f64,
            0.0,
        ),
        Check::at_most(
            "flow.grid.conditional_law_mismatches",
            grid.conditional as f64,
            0.0,
        ),
        Check::at_most(
            "flow.spot.psi_closed_form_mismatches",
            spot.psi_closed as f64,
            0.0,
        ),
        Check::at_most(
            "flow.spot.psi_cocycle_mismatches",
            spot.psi_cocycle as f64,
            0.0,
        ),
        Check::at_most(
            "flow.spot.kernel_cocycle_mismatches",
            spot.kernel_cocycle as f64,
            0.0,
        ),
    ];
    Ok(FlowReport {
        checks,
        exhaustive_walks: walks,
        exhaustive_comparisons: grid.comparisons,
        spot_checks: spot.comparisons,
    })
}

/// `beta(delta_x, delta_0) = |x| / (1 + |x|)` on every ray.
pub fn beta_closed_form_check(params: &RayParams) -> Vec<Check> {
    let n = params.n_rays();
    let mut worst: f64 = 0.0;
    for radius in [0.5, 1.0, 2.0, 5.0] {
        for ray in 1..=n {
            let x = DiscreteMeasure::dirac(GraphPoint::new(ray, radius, n));
            let j = DiscreteMeasure::dirac(GraphPoint::<f64>::junction(n));
            worst = worst.max((beta_distance(&x, &j) - radius / (1.0 + radius)).abs());
        }
    }
    vec![Check::at_most("beta.dirac_closed_form_error", worst, 1e-9)]
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub checks: Vec<Check>,
    pub summary: Vec<ScaleSummary>,
    pub rows: Vec<ReplicaProfile>,
}

/// Quartiles of one statistic at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            q1: quantile(values, 0.25),
            median: quantile(values, 0.5),
            q3: quantile(values, 0.75),
        }
    }
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleSummary {
    pub n: u64,
    pub sup_distance: Quartiles,
    pub sup_beta: Quartiles,
    /// Over replicas where at least one of the two hitting times occurs.
    pub tau_gap: Quartiles,
}

/// Steps that fail to decrease strictly; NaN counts as a failure.
fn strictly_decreasing_failures(values: &[f64]) -> usize {
    values
        .windows(2)
        .filter(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Less))
        .count()
}

/// Profiles of the mapping and kernel distances along `n_list`.
pub fn convergence(exp: &Experiment) -> Result<ConvergenceReport> {
    let setup = ConvergenceSetup {
        params: exp.params.clone(),
        seed: exp.seed,
        s: exp.s,
        horizon: exp.horizon,
        x_ray: exp.x_ray,
        x_radius: exp.x_radius,
    };
    let rows = convergence_profile(&setup, &exp.n_list, exp.convergence_replicas)?;
    let summary: Vec<ScaleSummary> = exp
        .n_list
        .iter()
        .map(|&n| {
            let at: Vec<&ReplicaProfile> = rows.iter().filter(|r| r.n == n).collect();
            let mut d: Vec<f64> = at.iter().map(|r| r.sup_distance).collect();
            let mut b: Vec<f64> = at.iter().map(|r| r.sup_beta).collect();
            let mut g: Vec<f64> = at.iter().filter_map(|r| r.tau_gap).collect();
            ScaleSummary {
                n,
                sup_distance: Quartiles::of(&mut d),
                sup_beta: Quartiles::of(&mut b),
                tau_gap: Quartiles::of(&mut g),
            }
        })
        .collect();
    let medians = |f: fn(&ScaleSummary) -> f64| summary.iter().map(f).collect::<Vec<_>>();
    let mismatches: u64 = rows.iter().map(|r| r.grid_mismatches).sum();
    let checks = vec![
        Check::at_most(
            "convergence.sup_distance_median_non_decreasing_steps",
            strictly_decreasing_failures(&medians(|s| s.sup_distance.median)) as f64,
            0.0,
        ),
        Check::at_most(
            "convergence.sup_beta_median_non_decreasing_steps",
            strictly_decreasing_failures(&medians(|s| s.sup_beta.median)) as f64,
            0.0,
        ),
        Check::at_most(
            "convergence.tau_gap_median_non_decreasing_steps",
            strictly_decreasing_failures(&medians(|s| s.tau_gap.median)) as f64,
            0.0,
        ),
        Check::at_most("convergence.grid_kernel_mismatches", mismatches as f64, 0.0),
    ];
    Ok(ConvergenceReport {
        checks,
        summary,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Experiment {
        Experiment {
            replicas: 200,
            length: 200,
            n_list: vec![16, 64, 256],
            convergence_replicas: 10,
            spot_checks: 20,
            ..Experiment::default()
        }
    }

    #[test]
    fn check_directions() {
        assert!(Check::at_most("a", 0.0, 0.0).passed());
        assert!(!Check::at_most("a", 1.0, 0.0).passed());
        assert!(Check::above("p", 0.5, 0.01).passed());
        assert!(!Check::above("p", 0.01, 0.01).passed());
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&mut [4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn fibres_are_sign_pairs() {
        for len in 2..=8 {
            assert_eq!(fibre_violations(len).unwrap(), 0);
        }
    }

    #[test]
    fn exact_parts_of_small_cv_run_pass() {
        let r = cv_check(&small()).unwrap();
        for c in r.checks.iter().filter(|c| c.threshold == 0.0) {
            assert!(c.passed(), "{c:?}");
        }
        assert_eq!(r.deviation_counts.iter().sum::<u64>(), 200);
    }

    #[test]
    fn small_flip_run_is_exact() {
        let r = flip_check(&small()).unwrap();
        for c in r.checks.iter().filter(|c| c.name.contains("violations")) {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let a = convergence(&small()).unwrap();
        let b = convergence(&small()).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn beta_closed_form_passes() {
        assert!(all_passed(&beta_closed_form_check(
            &Experiment::default().params
        )));
    }
}
