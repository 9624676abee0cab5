//! Discrete flows of mappings `Psi_{p,n}` and kernels `K_{p,n}` driven by a walk.
//!
//! One step from time `p`: a point off the junction moves radially by
//! `S_{p+1} - S_p`; the junction goes to `eta_p * S+_{p,p+1}`, i.e. out along
//! ray `eta_p` on an up-step and nowhere on a down-step. The kernel replaces the
//! random ray by its law `sum alpha_i delta_{e_i}`.
//!
//! Both flows have closed forms in terms of `T_{p,x}`, the first time the walk
//! falls `|x|` below `S_p`: before it the point is translated, after it the
//! mapping sits at radius `S+_{p,n}` on the ray chosen at the last junction
//! departure and the kernel is the `alpha`-spread at that radius.

use thiserror::Error;

use crate::rng::{Channel, StreamKey};
use crate::star_graph::{DiscreteMeasure, GraphPoint, LatticePoint, Rational, RayParams};
use crate::walk::{WalkError, WalkWindow};

/// Longest window for which [`kernel_is_conditional_law`] enumerates mark assignments.
pub const MAX_ENUMERATION_STEPS: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error("window of {steps} steps exceeds the enumeration limit {max}")]
    WindowTooLarge { steps: usize, max: usize },
    #[error("{marks} marks for a walk of {steps} steps")]
    MarkCount { marks: usize, steps: usize },
}

/// A walk plus one ray mark `eta_p` for every step `p -> p+1` of its window.
#[derive(Clone, Debug)]
pub struct FlowRealization {
    pub walk: WalkWindow,
    marks: Vec<usize>,
    pub params: RayParams,
}

impl FlowRealization {
    /// Walk and marks from independent channels of `(seed, stream)`.
    pub fn generate(
        params: &RayParams,
        start: i64,
        end: i64,
        seed: u64,
        stream: u64,
    ) -> Result<Self, FlowError> {
        let walk = WalkWindow::generate(start, end, seed, stream)?;
        let marks = StreamKey::new(seed, stream, Channel::Marks)
            .words(start, walk.steps())
            .into_iter()
            .map(|w| params.ray_from_word(w))
            .collect();
        Ok(Self {
            walk,
            marks,
            params: params.clone(),
        })
    }

    pub fn from_parts(
        walk: WalkWindow,
        marks: Vec<usize>,
        params: &RayParams,
    ) -> Result<Self, FlowError> {
        if marks.len() != walk.steps() {
            return Err(FlowError::MarkCount {
                marks: marks.len(),
                steps: walk.steps(),
            });
        }
        Ok(Self {
            walk,
            marks,
            params: params.clone(),
        })
    }

    /// `eta_p`.
    pub fn mark(&self, p: i64) -> usize {
        self.marks[(p - self.walk.start()) as usize]
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    fn n_rays(&self) -> usize {
        self.params.n_rays()
    }

    fn check(&self, p: i64, n: i64) -> Result<(), FlowError> {
        self.walk.diff(p, n)?;
        if p > n {
            return Err(WalkError::OutOfWindow {
                from: p,
                to: n,
                start: self.walk.start(),
                end: self.walk.end(),
            }
            .into());
        }
        Ok(())
    }
}

fn translate(x: &LatticePoint, delta: i64, n_rays: usize) -> LatticePoint {
    x.move_along(delta, n_rays)
        .expect("translation stays on the ray before the hitting time")
}

/// `Psi_{p,p+1}(x)`.
pub fn psi_one_step(
    fr: &FlowRealization,
    p: i64,
    x: &LatticePoint,
) -> Result<LatticePoint, FlowError> {
    fr.check(p, p + 1)?;
    Ok(one_step(fr, p, x))
}

fn one_step(fr: &FlowRealization, p: i64, x: &LatticePoint) -> LatticePoint {
    let step = fr.walk.step(p);
    if !x.is_junction() {
        translate(x, step, fr.n_rays())
    } else if step > 0 {
        GraphPoint::new(fr.mark(p), 1, fr.n_rays())
    } else {
        *x
    }
}

/// `Psi_{p,n}(x)` by composing one-step maps; the identity when `n = p`.
pub fn psi_compose(
    fr: &FlowRealization,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> Result<LatticePoint, FlowError> {
    fr.check(p, n)?;
    Ok((p..n).fold(*x, |y, k| one_step(fr, k, &y)))
}

/// `Psi_{p,n}(0)`: radius `S+_{p,n}` on the ray chosen at the last minimum of `S` on `[p, n]`.
fn psi_from_junction(fr: &FlowRealization, p: i64, n: i64) -> Result<LatticePoint, FlowError> {
    let r = fr.walk.s_plus(p, n)?;
    if r == 0 {
        return Ok(GraphPoint::junction(fr.n_rays()));
    }
    let j = fr.walk.last_argmin(p, n)?;
    Ok(GraphPoint::new(fr.mark(j), r, fr.n_rays()))
}

/// `Psi_{p,n}(x)` from the hitting time `T_{p,x}` without stepping through the window.
pub fn psi_closed_form(
    fr: &FlowRealization,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> Result<LatticePoint, FlowError> {
    fr.check(p, n)?;
    if fr.walk.hitting_time(p, x.radius())?.not_before(n) {
        Ok(translate(x, fr.walk.diff(p, n)?, fr.n_rays()))
    } else {
        psi_from_junction(fr, p, n)
    }
}

/// `K_{p,p+1}(x)`: a Dirac off the junction, the `alpha`-spread at `S+_{p,p+1}` from it.
pub fn kernel_one_step(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    x: &LatticePoint,
) -> Result<DiscreteMeasure, FlowError> {
    walk.diff(p, p + 1)?;
    Ok(one_step_kernel(walk, params, p, x))
}

fn one_step_kernel(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    x: &LatticePoint,
) -> DiscreteMeasure {
    let step = walk.step(p);
    if x.is_junction() {
        DiscreteMeasure::spread(params, step.max(0) as u64)
    } else {
        DiscreteMeasure::dirac(translate(x, step, params.n_rays()))
    }
}

/// `K_{p,n}(x)` by chaining one-step kernels in exact arithmetic.
pub fn kernel_compose(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> Result<DiscreteMeasure, FlowError> {
    walk.diff(p, n)?;
    check_order(walk, p, n)?;
    let mut m = DiscreteMeasure::dirac(*x);
    for k in p..n {
        m = m.bind(|y| one_step_kernel(walk, params, k, y));
    }
    Ok(m)
}

/// Composition `K_{p,r} K_{r,q}` of two measure-valued maps, as a kernel applied to `x`.
pub fn kernel_then(
    first: impl Fn(&LatticePoint) -> DiscreteMeasure,
    second: impl Fn(&LatticePoint) -> DiscreteMeasure,
    x: &LatticePoint,
) -> DiscreteMeasure {
    first(x).bind(second)
}

/// `K_{p,n}(x)`: Dirac at the translate before `T_{p,x}`, `alpha`-spread at `S+_{p,n}` after.
pub fn kernel_closed_form(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> Result<DiscreteMeasure, FlowError> {
    walk.diff(p, n)?;
    check_order(walk, p, n)?;
    if walk.hitting_time(p, x.radius())?.not_before(n) {
        Ok(DiscreteMeasure::dirac(translate(
            x,
            walk.diff(p, n)?,
            params.n_rays(),
        )))
    } else {
        Ok(DiscreteMeasure::spread(params, walk.s_plus(p, n)?))
    }
}

fn check_order(walk: &WalkWindow, p: i64, n: i64) -> Result<(), FlowError> {
    if p > n {
        return Err(WalkError::OutOfWindow {
            from: p,
            to: n,
            start: walk.start(),
            end: walk.end(),
        }
        .into());
    }
    Ok(())
}

/// Exact law of `Psi_{p,n}(x)` given the walk, with the marks integrated out.
///
/// Each mark is read at most once along a trajectory, so branching over the
/// ray at every junction up-step enumerates the mark assignments that matter,
/// weighted by their `alpha` products.
pub fn conditional_law(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> Result<DiscreteMeasure, FlowError> {
    walk.diff(p, n)?;
    check_order(walk, p, n)?;
    let n_rays = params.n_rays();
    let mut law: Vec<(LatticePoint, Rational)> = vec![(*x, Rational::from_integer(1))];
    for k in p..n {
        let step = walk.step(k);
        let mut next = Vec::with_capacity(law.len() * n_rays);
        for (y, w) in law {
            if !y.is_junction() {
                next.push((translate(&y, step, n_rays), w));
            } else if step > 0 {
                for ray in 1..=n_rays {
                    next.push((GraphPoint::new(ray, 1, n_rays), w * params.alpha(ray)));
                }
            } else {
                next.push((y, w));
            }
        }
        law = DiscreteMeasure::new(next)
            .expect("branching keeps a probability measure")
            .atoms()
            .to_vec();
    }
    Ok(DiscreteMeasure::new(law).expect("branching keeps a probability measure"))
}

/// Whether `K_{p,n}(x) = E[delta_{Psi_{p,n}(x)} | S]` holds exactly on this window.
pub fn kernel_is_conditional_law(
    walk: &WalkWindow,
    params: &RayParams,
    p: i64,
    n: i64,
    x: &LatticePoint,
) -> Result<bool, FlowError> {
    let steps = (n - p).max(0) as usize;
    if steps > MAX_ENUMERATION_STEPS {
        return Err(FlowError::WindowTooLarge {
            steps,
            max: MAX_ENUMERATION_STEPS,
        });
    }
    Ok(conditional_law(walk, params, p, n, x)? == kernel_closed_form(walk, params, p, n, x)?)
}
