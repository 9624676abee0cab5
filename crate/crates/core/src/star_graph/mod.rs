//! Geometry of the N-ray star graph.
//!
//! The graph is `N` half-lines glued at a junction. A point is a ray index in
//! `1..=N` plus a nonnegative radius; every radius-zero point is the junction,
//! stored canonically on ray `N`.

mod beta;
mod measure;
mod simplex;

pub use beta::beta_distance;
pub use measure::DiscreteMeasure;

use std::fmt;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact weights for ray laws and kernels.
pub type Rational = Ratio<i128>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("star graph needs at least one ray")]
    NoRays,
    #[error("alpha_{ray} = {value} is not strictly positive")]
    NonPositiveWeight { ray: usize, value: Rational },
    #[error("alpha sums to {0}, expected exactly 1")]
    NotNormalized(Rational),
    #[error("alpha denominators must fit in 63 bits")]
    DenominatorTooLarge,
    #[error("moving radius {radius} by {delta} leaves the ray")]
    NegativeRadius { radius: String, delta: String },
    #[error("ray {ray} outside 1..={n_rays}")]
    RayOutOfRange { ray: usize, n_rays: usize },
    #[error("measure weights must be positive and sum to 1 (got total {0})")]
    InvalidMeasure(Rational),
}

/// Number of rays and the exit law `alpha` at the junction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RayParams {
    alpha: Vec<Rational>,
    // cumulative thresholds scaled by 2^64, for exact sampling from u64 words
    thresholds: Vec<u128>,
}

impl RayParams {
    pub fn new(alpha: Vec<Rational>) -> Result<Self, GeometryError> {
        if alpha.is_empty() {
            return Err(GeometryError::NoRays);
        }
        for (i, a) in alpha.iter().enumerate() {
            if !a.is_positive() {
                return Err(GeometryError::NonPositiveWeight {
                    ray: i + 1,
                    value: *a,
                });
            }
            if *a.denom() > i128::from(i64::MAX) {
                return Err(GeometryError::DenominatorTooLarge);
            }
        }
        let total: Rational = alpha.iter().sum();
        if !total.is_one() {
            return Err(GeometryError::NotNormalized(total));
        }
        let mut thresholds = Vec::with_capacity(alpha.len());
        let mut cumulative = Rational::zero();
        for a in &alpha {
            cumulative += a;
            let scaled = (*cumulative.numer() as u128) << 64;
            thresholds.push(scaled / *cumulative.denom() as u128);
        }
        Ok(Self { alpha, thresholds })
    }

    /// `alpha_i = 1/N` on every ray.
    pub fn uniform(n_rays: usize) -> Result<Self, GeometryError> {
        Self::new(vec![Rational::new(1, n_rays.max(1) as i128); n_rays])
    }

    pub fn n_rays(&self) -> usize {
        self.alpha.len()
    }

    /// `alpha_ray` for `ray` in `1..=N`.
    pub fn alpha(&self, ray: usize) -> Rational {
        self.alpha[ray - 1]
    }

    pub fn alphas(&self) -> &[Rational] {
        &self.alpha
    }

    pub fn alpha_f64(&self) -> Vec<f64> {
        self.alpha.iter().map(rational_to_f64).collect()
    }

    /// Samples a ray from `sum alpha_i delta_i` using one uniform 64-bit word.
    pub fn ray_from_word(&self, word: u64) -> usize {
        let w = u128::from(word);
        self.thresholds
            .iter()
            .position(|&t| w < t)
            .map_or(self.n_rays(), |i| i + 1)
    }

    pub fn point<R: Radius>(&self, ray: usize, radius: R) -> Result<GraphPoint<R>, GeometryError> {
        if ray == 0 || ray > self.n_rays() {
            return Err(GeometryError::RayOutOfRange {
                ray,
                n_rays: self.n_rays(),
            });
        }
        Ok(GraphPoint::new(ray, radius, self.n_rays()))
    }

    pub fn junction<R: Radius>(&self) -> GraphPoint<R> {
        GraphPoint::junction(self.n_rays())
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Radius type: exact integers on the lattice, reals after rescaling.
pub trait Radius:
    Copy + Default + PartialEq + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    type Step: Copy + fmt::Display;

    fn is_zero(self) -> bool;
    fn to_f64(self) -> f64;
    fn abs_diff(self, other: Self) -> Self;
    fn add(self, other: Self) -> Self;
    fn offset(self, delta: Self::Step) -> Option<Self>;
}

impl Radius for u64 {
    type Step = i64;

    fn is_zero(self) -> bool {
        self == 0
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn abs_diff(self, other: Self) -> Self {
        u64::abs_diff(self, other)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn offset(self, delta: i64) -> Option<Self> {
        self.checked_add_signed(delta)
    }
}

impl Radius for f64 {
    type Step = f64;

    fn is_zero(self) -> bool {
        self == 0.0
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn abs_diff(self, other: Self) -> Self {
        (self - other).abs()
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn offset(self, delta: f64) -> Option<Self> {
        let r = self + delta;
        (r >= 0.0).then_some(if r == 0.0 { 0.0 } else { r })
    }
}

/// A point `radius * e_ray` of the star graph.
///
/// Field order makes the derived ordering `(ray, radius)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphPoint<R = u64> {
    ray: usize,
    radius: R,
}

/// Points of the integer lattice `G_N`.
pub type LatticePoint = GraphPoint<u64>;

impl<R: Radius> GraphPoint<R> {
    /// Builds a point; radius zero collapses to the canonical junction on ray `n_rays`.
    pub fn new(ray: usize, radius: R, n_rays: usize) -> Self {
        debug_assert!(ray >= 1 && ray <= n_rays, "ray {ray} outside 1..={n_rays}");
        assert!(radius >= R::default(), "negative radius {radius}");
        if radius.is_zero() {
            Self::junction(n_rays)
        } else {
            Self { ray, radius }
        }
    }

    pub fn junction(n_rays: usize) -> Self {
        Self {
            ray: n_rays,
            radius: R::default(),
        }
    }

    pub fn ray(&self) -> usize {
        self.ray
    }

    pub fn radius(&self) -> R {
        self.radius
    }

    pub fn is_junction(&self) -> bool {
        self.radius.is_zero()
    }

    /// `e(x)`: the ray of `x`, or `N` at the junction.
    pub fn direction(&self) -> usize {
        self.ray
    }

    /// `x + e(x) * delta`, staying on the ray of `x`.
    pub fn move_along(&self, delta: R::Step, n_rays: usize) -> Result<Self, GeometryError> {
        match self.radius.offset(delta) {
            Some(r) => Ok(Self::new(self.ray, r, n_rays)),
            None => Err(GeometryError::NegativeRadius {
                radius: self.radius.to_string(),
                delta: delta.to_string(),
            }),
        }
    }

    pub fn to_real(&self) -> GraphPoint<f64> {
        GraphPoint {
            ray: self.ray,
            radius: self.radius.to_f64(),
        }
    }
}

impl LatticePoint {
    /// The point `self / sqrt(n)` of the rescaled graph.
    pub fn rescaled(&self, sqrt_n: f64) -> GraphPoint<f64> {
        GraphPoint {
            ray: self.ray,
            radius: self.radius as f64 / sqrt_n,
        }
    }
}

impl<R: Radius> fmt::Display for GraphPoint<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_junction() {
            write!(f, "0")
        } else {
            write!(f, "{}e{}", self.radius, self.ray)
        }
    }
}

/// `|h - h'|` on a common ray, `h + h'` across rays.
pub fn graph_distance<R: Radius>(x: &GraphPoint<R>, y: &GraphPoint<R>) -> R {
    if x.ray == y.ray {
        x.radius.abs_diff(y.radius)
    } else {
        x.radius.add(y.radius)
    }
}
