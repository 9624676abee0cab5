use num_traits::{One, Signed, Zero};

use super::{GeometryError, GraphPoint, Radius, Rational, RayParams};

/// A finitely supported probability measure with exact rational weights.
///
/// Atoms are kept sorted by point with distinct points, so structural
/// equality is measure equality.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure<R = u64> {
    atoms: Vec<(GraphPoint<R>, Rational)>,
}

impl<R: Radius> DiscreteMeasure<R> {
    /// Validated constructor: weights must be positive and sum to exactly 1.
    pub fn new(
        atoms: impl IntoIterator<Item = (GraphPoint<R>, Rational)>,
    ) -> Result<Self, GeometryError> {
        let atoms: Vec<_> = atoms.into_iter().collect();
        let total: Rational = atoms.iter().map(|(_, w)| *w).sum();
        if atoms.iter().any(|(_, w)| !w.is_positive()) || !total.is_one() {
            return Err(GeometryError::InvalidMeasure(total));
        }
        Ok(Self::collect(atoms))
    }

    /// Sorts, merges equal points and drops null atoms. Mass is not checked.
    pub(crate) fn collect(mut atoms: Vec<(GraphPoint<R>, Rational)>) -> Self {
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("radius is never NaN"));
        let mut merged: Vec<(GraphPoint<R>, Rational)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some((y, acc)) if *y == x => *acc += w,
                _ => merged.push((x, w)),
            }
        }
        merged.retain(|(_, w)| !w.is_zero());
        Self { atoms: merged }
    }

    pub fn dirac(x: GraphPoint<R>) -> Self {
        Self {
            atoms: vec![(x, Rational::one())],
        }
    }

    /// `sum_i alpha_i delta_{radius e_i}`; a single junction atom when `radius` is 0.
    pub fn spread(params: &RayParams, radius: R) -> Self {
        let n = params.n_rays();
        if radius.is_zero() {
            return Self::dirac(GraphPoint::junction(n));
        }
        Self {
            atoms: (1..=n)
                .map(|ray| (GraphPoint::new(ray, radius, n), params.alpha(ray)))
                .collect(),
        }
    }

    pub fn atoms(&self) -> &[(GraphPoint<R>, Rational)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> Rational {
        self.atoms.iter().map(|(_, w)| *w).sum()
    }

    pub fn mass_at(&self, x: &GraphPoint<R>) -> Rational {
        self.atoms
            .iter()
            .find(|(y, _)| y == x)
            .map_or_else(Rational::zero, |(_, w)| *w)
    }

    /// Kernel composition `sum_y self({y}) kernel(y)`.
    pub fn bind<S: Radius>(
        &self,
        mut kernel: impl FnMut(&GraphPoint<R>) -> DiscreteMeasure<S>,
    ) -> DiscreteMeasure<S> {
        let mut out = Vec::new();
        for (y, w) in &self.atoms {
            out.extend(kernel(y).atoms.into_iter().map(|(z, v)| (z, v * w)));
        }
        DiscreteMeasure::collect(out)
    }

    /// Push-forward under a point map.
    pub fn map<S: Radius>(
        &self,
        mut f: impl FnMut(&GraphPoint<R>) -> GraphPoint<S>,
    ) -> DiscreteMeasure<S> {
        DiscreteMeasure::collect(self.atoms.iter().map(|(x, w)| (f(x), *w)).collect())
    }
}
