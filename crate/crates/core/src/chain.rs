//! Markov chains on the star-graph lattice and the excursion-flipping construction.
//!
//! Two chains are simulated directly: the Donsker chain, which leaves the
//! junction on ray `i` with probability `alpha_i`, and the lazy chain, which
//! first holds at the junction with probability 1/2. Both move radially by
//! fair +-1 steps away from the junction.
//!
//! [`flip_excursions`] builds a chain `M` from a walk `S` and its transform
//! `Sbar = T(S)`: on each block `[tau_l, tau_{l+1}]` it sets `M_n = ray * |S_n|`,
//! with the ray taken from the excursions of `Ybar = max Sbar - Sbar` inside the
//! block or from an auxiliary per-block mark.

use thiserror::Error;

use crate::cv::{cv_forward, even_level_first_hits};
use crate::rng::{sign_of, Channel, StreamKey};
use crate::star_graph::{GraphPoint, LatticePoint, RayParams};
use crate::walk::{excursions, gap_below_running_max, Excursion, WalkWindow};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("the walk is not a preimage of the given transformed walk")]
    NotAPreimage,
    #[error("no block [tau_l, tau_(l+1)] closes inside the window")]
    IncompleteBlock,
    #[error("block {l} on [{start}, {end}] matches none of the four cases: {reason}")]
    InconsistentBlock {
        l: usize,
        start: i64,
        end: i64,
        reason: String,
    },
    #[error("walks start at {walk} and {transformed}; both must start at time 0")]
    MisalignedWindows { walk: i64, transformed: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChainKind {
    /// Exit law `alpha` at the junction.
    Donsker,
    /// Hold with probability 1/2 at the junction, else exit with law `alpha`.
    Lazy,
}

/// Lattice path of a chain, `positions[k]` being the state at time `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPath {
    pub params: RayParams,
    pub positions: Vec<LatticePoint>,
}

impl ChainPath {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Whether consecutive states are lattice neighbours (junction holds allowed when `lazy`).
    pub fn is_nearest_neighbour(&self, lazy: bool) -> bool {
        self.positions.windows(2).all(|w| {
            let d = crate::graph_distance(&w[0], &w[1]);
            d == 1 || (lazy && d == 0 && w[0].is_junction())
        })
    }
}

/// One transition of the Donsker chain driven by a uniform 64-bit word.
pub fn step_chain_q(params: &RayParams, x: &LatticePoint, word: u64) -> LatticePoint {
    let n = params.n_rays();
    if x.is_junction() {
        GraphPoint::new(params.ray_from_word(word), 1, n)
    } else {
        let r = x.radius() as i64 + i64::from(sign_of(word));
        GraphPoint::new(x.ray(), r as u64, n)
    }
}

/// One transition of the lazy chain driven by a uniform 64-bit word.
pub fn step_chain_lazy(params: &RayParams, x: &LatticePoint, word: u64) -> LatticePoint {
    if !x.is_junction() {
        return step_chain_q(params, x, word);
    }
    if word >> 63 == 0 {
        *x
    } else {
        // the remaining 63 bits, still uniform, pick the exit ray
        GraphPoint::new(params.ray_from_word(word << 1), 1, params.n_rays())
    }
}

/// `steps` transitions from the junction, one word of the chain channel per step.
pub fn simulate_chain(
    kind: ChainKind,
    params: &RayParams,
    key: StreamKey,
    steps: usize,
) -> ChainPath {
    let mut reader = key.with_channel(Channel::Chain).reader(0);
    let mut x = params.junction();
    let mut positions = Vec::with_capacity(steps + 1);
    positions.push(x);
    for _ in 0..steps {
        let w = reader.next_word();
        x = match kind {
            ChainKind::Donsker => step_chain_q(params, &x, w),
            ChainKind::Lazy => step_chain_lazy(params, &x, w),
        };
        positions.push(x);
    }
    ChainPath {
        params: params.clone(),
        positions,
    }
}

/// A ray-valued mark sequence, indexed by excursion ordinal or block number.
pub trait RayMarks {
    fn ray(&self, index: i64) -> usize;
}

impl<F: Fn(i64) -> usize> RayMarks for F {
    fn ray(&self, index: i64) -> usize {
        self(index)
    }
}

/// I.i.d. marks with law `sum alpha_i delta_i`, read lazily from a counter stream.
#[derive(Clone, Debug)]
pub struct MarkStream {
    key: StreamKey,
    params: RayParams,
}

impl MarkStream {
    pub fn new(key: StreamKey, params: RayParams) -> Self {
        Self { key, params }
    }
}

impl RayMarks for MarkStream {
    fn ray(&self, index: i64) -> usize {
        self.params.ray_from_word(self.key.word(index))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockCase {
    /// No excursion of `Ybar`; the block has length 2.
    NoExcursion,
    /// One excursion ending two steps before the block.
    OneEarly,
    /// One excursion ending one step before the block.
    OneLate,
    /// Two excursions.
    Two,
}

/// One block `[start, end] = [tau_l, tau_{l+1}]` of the construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub l: usize,
    pub start: i64,
    pub end: i64,
    pub case: BlockCase,
    /// First zero of `S` after `start`; the ray may change there.
    pub switch: i64,
    /// Ray on `[start, switch - 1]` and on `[switch, end]`.
    pub rays: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct FlipOutcome {
    pub path: ChainPath,
    pub blocks: Vec<Block>,
    pub excursions: Vec<Excursion>,
    /// `Ybar` over the transformed window.
    pub y_bar: Vec<i64>,
    /// Whether a trailing partial block was cut off.
    pub truncated: bool,
}

impl FlipOutcome {
    /// `max |M_n - eta_i Ybar_n|` over all excursions inside the constructed range.
    pub fn excursion_deviation(&self, eta: &impl RayMarks) -> u64 {
        let n_rays = self.path.params.n_rays();
        let mut worst = 0;
        for e in &self.excursions {
            let ray = eta.ray(e.ordinal as i64);
            for k in e.start..=e.end {
                let Some(m) = self.path.positions.get(k as usize) else {
                    break;
                };
                let target = GraphPoint::new(ray, self.y_bar[k as usize] as u64, n_rays);
                worst = worst.max(crate::graph_distance(m, &target));
            }
        }
        worst
    }
}

/// Builds `M` from `S` and `Sbar = T(S)`, both starting at time 0.
///
/// `eta` is indexed by global excursion ordinal (from 1) and `aux` by block
/// number `l` (from 0). The path covers `[0, tau_L]` for the last complete block.
pub fn flip_excursions(
    s_bar: &WalkWindow,
    s: &WalkWindow,
    params: &RayParams,
    eta: &impl RayMarks,
    aux: &impl RayMarks,
) -> Result<FlipOutcome, ChainError> {
    if s.start() != 0 || s_bar.start() != 0 {
        return Err(ChainError::MisalignedWindows {
            walk: s.start(),
            transformed: s_bar.start(),
        });
    }
    match cv_forward(s) {
        Ok(t) if t == *s_bar => {}
        _ => return Err(ChainError::NotAPreimage),
    }
    let o = s.start();
    let y_bar = gap_below_running_max(s_bar);
    let excs = excursions(&y_bar, o).expect("Ybar is nonnegative");
    let mut taus = vec![o];
    taus.extend(even_level_first_hits(s_bar));
    if taus.len() < 2 {
        return Err(ChainError::IncompleteBlock);
    }

    let n_rays = params.n_rays();
    let last = *taus.last().unwrap();
    let mut positions = vec![params.junction(); (last - o) as usize + 1];
    let mut blocks = Vec::with_capacity(taus.len() - 1);
    let mut cursor = 0;
    for (l, pair) in taus.windows(2).enumerate() {
        let (start, end) = (pair[0], pair[1]);
        while cursor < excs.len() && excs[cursor].start < start {
            cursor += 1;
        }
        let inside: Vec<&Excursion> = excs[cursor..].iter().take_while(|e| e.end <= end).collect();
        let block = classify(l, start, end, &inside, s, eta, aux)?;
        for k in start..=end {
            let ray = if k < block.switch {
                block.rays.0
            } else {
                block.rays.1
            };
            positions[(k - o) as usize] = GraphPoint::new(ray, s.value(k).unsigned_abs(), n_rays);
        }
        blocks.push(block);
    }
    Ok(FlipOutcome {
        path: ChainPath {
            params: params.clone(),
            positions,
        },
        blocks,
        excursions: excs,
        y_bar,
        truncated: last < s_bar.end(),
    })
}

fn classify(
    l: usize,
    start: i64,
    end: i64,
    inside: &[&Excursion],
    s: &WalkWindow,
    eta: &impl RayMarks,
    aux: &impl RayMarks,
) -> Result<Block, ChainError> {
    let fail = |reason: String| ChainError::InconsistentBlock {
        l,
        start,
        end,
        reason,
    };
    let first_zero = (start + 1..=end)
        .find(|&k| s.value(k) == 0)
        .ok_or_else(|| fail("S does not return to zero".into()))?;
    let beta = aux.ray(l as i64);
    let mark = |e: &Excursion| eta.ray(e.ordinal as i64);
    let (case, switch, rays) = match inside {
        [] => {
            if end != start + 2 {
                return Err(fail(format!("no excursion but length {}", end - start)));
            }
            (BlockCase::NoExcursion, end, (beta, beta))
        }
        [e] if e.end == end - 2 => (BlockCase::OneEarly, end, (mark(e), mark(e))),
        [e] if e.end == end - 1 => {
            if e.start != start + 1 {
                return Err(fail(format!("late excursion starts at {}", e.start)));
            }
            (BlockCase::OneLate, e.start + 1, (beta, mark(e)))
        }
        [e] => return Err(fail(format!("single excursion ends at {}", e.end))),
        [e1, e2] => (BlockCase::Two, e2.start + 1, (mark(e1), mark(e2))),
        more => return Err(fail(format!("{} excursions", more.len()))),
    };
    if switch != first_zero {
        return Err(fail(format!(
            "first zero of S after the block start is {first_zero}, excursions give {switch}"
        )));
    }
    Ok(Block {
        l,
        start,
        end,
        case,
        switch,
        rays,
    })
}

/// `eta_i Ybar_n` on the `i`-th excursion, junction where `Ybar_n = 0`.
///
/// The path stops where a trailing excursion is left open by the window.
pub fn flipped_product_chain(
    s_bar: &WalkWindow,
    params: &RayParams,
    eta: &impl RayMarks,
) -> ChainPath {
    let n_rays = params.n_rays();
    let y_bar = gap_below_running_max(s_bar);
    let excs = excursions(&y_bar, 0).expect("Ybar is nonnegative");
    let mut positions = Vec::with_capacity(y_bar.len());
    let mut next = excs.iter().peekable();
    let mut current: Option<(usize, i64)> = None;
    for (k, &y) in y_bar.iter().enumerate() {
        let k = k as i64;
        if current.is_some_and(|(_, end)| k > end) {
            current = None;
        }
        if current.is_none() {
            if let Some(e) = next.next_if(|e| e.start == k) {
                current = Some((eta.ray(e.ordinal as i64), e.end));
            }
        }
        match (y, current) {
            (0, _) => positions.push(params.junction()),
            (r, Some((ray, _))) => positions.push(GraphPoint::new(ray, r as u64, n_rays)),
            // an excursion the window leaves open
            (_, None) => break,
        }
    }
    ChainPath {
        params: params.clone(),
        positions,
    }
}

/// Pathwise counts for the two structural facts used by the construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FactCheck {
    pub checked: u64,
    /// `k in [tau_l + 2, tau_{l+1}]` with `Sbar_{k-1} = 2l+1` not equivalent to `S_k = 0`.
    pub a_violations: u64,
    /// `k in [tau_l, tau_{l+1}]` with `Ybar_k = 0` but `|S_{k+1}| > 1`, or `S_{k+1} = 0` but `Ybar_k > 0`.
    pub b_violations: u64,
}

/// Checks both facts on every complete block; `s` is one step longer than `s_bar`.
pub fn block_facts(s: &WalkWindow, s_bar: &WalkWindow) -> FactCheck {
    let o = s_bar.start();
    let y_bar = gap_below_running_max(s_bar);
    let mut taus = vec![o];
    taus.extend(even_level_first_hits(s_bar));
    let mut out = FactCheck::default();
    for (l, pair) in taus.windows(2).enumerate() {
        let (start, end) = (pair[0], pair[1]);
        for k in start..=end {
            out.checked += 1;
            if k >= start + 2 {
                let hit = s_bar.value(k - 1) == 2 * l as i64 + 1;
                if hit != (s.value(k) == 0) {
                    out.a_violations += 1;
                }
            }
            if s.contains(k + 1) {
                let y0 = y_bar[(k - o) as usize] == 0;
                let next = s.value(k + 1).abs();
                if (y0 && next > 1) || (next == 0 && !y0) {
                    out.b_violations += 1;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cv::{cv_inverse, Sign};
    use crate::star_graph::Rational;

    fn params3() -> RayParams {
        RayParams::new(vec![
            Rational::new(1, 2),
            Rational::new(1, 3),
            Rational::new(1, 6),
        ])
        .unwrap()
    }

    #[test]
    fn q_step_from_interior_is_radial() {
        let p = params3();
        let x = GraphPoint::new(2, 3, 3);
        for w in [0, u64::MAX, 1 << 63, 12345] {
            let y = step_chain_q(&p, &x, w);
            assert_eq!(y.ray(), 2);
            assert!(y.radius() == 2 || y.radius() == 4);
        }
    }

    #[test]
    fn degenerate_alpha_exits_on_single_ray() {
        let p = RayParams::uniform(1).unwrap();
        for w in [0, 7, u64::MAX] {
            assert_eq!(step_chain_q(&p, &p.junction(), w), GraphPoint::new(1, 1, 1));
        }
    }

    #[test]
    fn lazy_step_holds_on_low_half() {
        let p = params3();
        let j = p.junction();
        assert_eq!(step_chain_lazy(&p, &j, 5), j);
        assert_eq!(step_chain_lazy(&p, &j, 1 << 63).ray(), 1);
        assert_eq!(step_chain_lazy(&p, &j, u64::MAX).ray(), 3);
    }

    #[test]
    fn simulated_paths_are_nearest_neighbour() {
        let p = params3();
        let key = StreamKey::new(3, 0, Channel::Chain);
        assert!(simulate_chain(ChainKind::Donsker, &p, key, 500).is_nearest_neighbour(false));
        let lazy = simulate_chain(ChainKind::Lazy, &p, key, 500);
        assert!(lazy.is_nearest_neighbour(true));
        assert_eq!(lazy.len(), 501);
    }

    /// `Sbar` with excursions `[2,14]`, `[16,18]`, `[19,21]` of `Ybar`.
    fn three_block_path() -> WalkWindow {
        let values = [
            0, 1, 2, 1, 0, 1, 2, 1, 2, 1, 0, -1, 0, 1, 2, 3, 4, 3, 4, 5, 4, 5, 6,
        ];
        WalkWindow::from_values(0, &values).unwrap()
    }

    #[test]
    fn excursions_of_three_block_reference_path() {
        let s_bar = three_block_path();
        let y = gap_below_running_max(&s_bar);
        let spans: Vec<(i64, i64)> = excursions(&y, 0)
            .unwrap()
            .iter()
            .map(|e| (e.start, e.end))
            .collect();
        assert_eq!(spans, vec![(2, 14), (16, 18), (19, 21)]);
        assert_eq!(even_level_first_hits(&s_bar), vec![2, 16, 22]);

        let s = cv_inverse(&s_bar, Sign::Plus).unwrap();
        let p = params3();
        let eta = |i: i64| [1, 2, 3][(i as usize - 1) % 3];
        let aux = |_: i64| 2;
        let out = flip_excursions(&s_bar, &s, &p, &eta, &aux).unwrap();
        let cases: Vec<BlockCase> = out.blocks.iter().map(|b| b.case).collect();
        assert_eq!(
            cases,
            vec![BlockCase::NoExcursion, BlockCase::OneEarly, BlockCase::Two]
        );
        assert_eq!(out.blocks[2].switch, 20);
        assert_eq!(out.blocks[2].rays, (2, 3));
        assert!(!out.truncated);
        assert!(out.excursion_deviation(&eta) <= 2);
        for (k, m) in out.path.positions.iter().enumerate() {
            assert_eq!(m.radius(), s.value(k as i64).unsigned_abs());
        }
    }

    #[test]
    fn rejects_non_preimage() {
        let s_bar = three_block_path();
        let mut s = cv_inverse(&s_bar, Sign::Minus).unwrap().increments();
        s[5] = -s[5];
        let s = WalkWindow::from_increments(0, &s).unwrap();
        let eta = |_: i64| 1;
        assert_eq!(
            flip_excursions(&s_bar, &s, &params3(), &eta, &eta).unwrap_err(),
            ChainError::NotAPreimage
        );
    }

    #[test]
    fn reports_missing_block() {
        let s_bar = WalkWindow::from_values(0, &[0, -1, 0, 1]).unwrap();
        let s = cv_inverse(&s_bar, Sign::Plus).unwrap();
        let eta = |_: i64| 1;
        assert_eq!(
            flip_excursions(&s_bar, &s, &params3(), &eta, &eta).unwrap_err(),
            ChainError::IncompleteBlock
        );
    }

    #[test]
    fn facts_hold_on_reference_path() {
        let s_bar = three_block_path();
        let s = cv_inverse(&s_bar, Sign::Plus).unwrap();
        let f = block_facts(&s, &s_bar);
        assert_eq!((f.a_violations, f.b_violations), (0, 0));
        assert!(f.checked > 20);
    }

    #[test]
    fn product_chain_is_junction_on_flat_stretch() {
        let up = WalkWindow::from_increments(0, &[1; 10]).unwrap();
        let c = flipped_product_chain(&up, &params3(), &|_: i64| 2);
        assert_eq!(c.len(), 11);
        assert!(c.positions.iter().all(|x| x.is_junction()));
    }

    #[test]
    fn product_chain_radial_part_is_ybar() {
        let s_bar = three_block_path();
        let y = gap_below_running_max(&s_bar);
        let c = flipped_product_chain(&s_bar, &params3(), &|i: i64| i as usize);
        assert_eq!(c.len(), y.len());
        for (k, x) in c.positions.iter().enumerate() {
            assert_eq!(x.radius() as i64, y[k]);
        }
        assert_eq!(c.positions[5].ray(), 1);
        assert_eq!(c.positions[17].ray(), 2);
    }
}
