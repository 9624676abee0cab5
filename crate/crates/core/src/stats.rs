//! Goodness-of-fit machinery: Kolmogorov–Smirnov and Pearson chi-square tests,
//! and the fixed-time marginal check of a rescaled star-graph chain.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::star_graph::{LatticePoint, RayParams};

/// Smallest sample accepted by the KS routines.
pub const MIN_KS_SAMPLES: usize = 100;
/// Smallest expected count per chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{got} samples, at least {needed} required")]
    TooFewSamples { got: usize, needed: usize },
    #[error("cell {cell} expects {expected:.3} counts, below {min}")]
    SparseCells {
        cell: usize,
        expected: f64,
        min: f64,
    },
    #[error("{observed} observed cells against {expected} probabilities")]
    ShapeMismatch { observed: usize, expected: usize },
}

/// Two-sided `sup |G_m - F|` for sorted samples from a continuous law.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    check_size(samples)?;
    let m = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    Ok(d)
}

/// KS distance for samples supported on a lattice, compared at the observed atoms.
///
/// `G_m(a)` is matched against `F(a + half_gap)`, the continuous law evaluated
/// halfway to the next atom. Without this correction the atom jumps alone
/// would dominate the statistic.
pub fn ks_statistic_atoms(
    samples: &[f64],
    cdf: impl Fn(f64) -> f64,
    half_gap: f64,
) -> Result<f64, StatsError> {
    check_size(samples)?;
    let m = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let a = samples[i];
        while i < samples.len() && samples[i] == a {
            i += 1;
        }
        d = d.max((i as f64 / m - cdf(a + half_gap)).abs());
    }
    Ok(d)
}

fn check_size(samples: &[f64]) -> Result<(), StatsError> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(StatsError::TooFewSamples {
            got: samples.len(),
            needed: MIN_KS_SAMPLES,
        });
    }
    Ok(())
}

/// Asymptotic p-value of a one-sample KS distance `d` on `m` samples.
pub fn kolmogorov_pvalue(d: f64, m: usize) -> f64 {
    let sm = (m as f64).sqrt();
    let lambda = (sm + 0.12 + 0.11 / sm) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson statistic and degrees of freedom for counts against cell probabilities.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> Result<(f64, usize), StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::ShapeMismatch {
            observed: observed.len(),
            expected: expected.len(),
        });
    }
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (cell, (&o, &p)) in observed.iter().zip(expected).enumerate() {
        let e = p * total as f64;
        if e < MIN_EXPECTED {
            return Err(StatsError::SparseCells {
                cell,
                expected: e,
                min: MIN_EXPECTED,
            });
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    Ok((stat, observed.len().saturating_sub(1)))
}

/// Upper tail of the chi-square law.
pub fn chi_square_pvalue(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(stat)
}

/// Independence test on a contingency table of counts.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<(f64, usize), StatsError> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let total: u64 = table.iter().flatten().sum();
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        if row.len() != cols {
            return Err(StatsError::ShapeMismatch {
                observed: row.len(),
                expected: cols,
            });
        }
        for (j, &o) in row.iter().enumerate() {
            let e = (row_sums[i] * col_sums[j]) as f64 / total as f64;
            if e < MIN_EXPECTED {
                return Err(StatsError::SparseCells {
                    cell: i * cols + j,
                    expected: e,
                    min: MIN_EXPECTED,
                });
            }
            stat += (o as f64 - e).powi(2) / e;
        }
    }
    Ok((stat, (rows - 1) * (cols - 1)))
}

/// `2 Phi(r) - 1`, the law of `|B_1|`.
pub fn half_normal_cdf(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        erf(r / std::f64::consts::SQRT_2)
    }
}

/// Outcome of [`walsh_marginal_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalReport {
    pub samples: usize,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub ray_counts: Vec<u64>,
    pub chi_square: f64,
    pub chi_square_dof: usize,
    pub chi_square_pvalue: f64,
}

/// Tests chain states at time `n`, rescaled by `sqrt(n)`, against the Walsh marginal at time 1.
///
/// The modulus should be half-normal and, off the junction, the ray should
/// follow `alpha`. Radii are lattice valued, so the KS comparison evaluates the
/// half-normal law one lattice unit `1/sqrt(n)` beyond each atom.
pub fn walsh_marginal_check(
    states: &[LatticePoint],
    n: u64,
    params: &RayParams,
) -> Result<MarginalReport, StatsError> {
    let sqrt_n = (n as f64).sqrt();
    let mut radii: Vec<f64> = states.iter().map(|x| x.radius() as f64 / sqrt_n).collect();
    radii.sort_by(f64::total_cmp);
    let ks = ks_statistic_atoms(&radii, half_normal_cdf, 1.0 / sqrt_n)?;
    let ks_pvalue = kolmogorov_pvalue(ks, radii.len());

    let mut ray_counts = vec![0u64; params.n_rays()];
    for x in states.iter().filter(|x| !x.is_junction()) {
        ray_counts[x.ray() - 1] += 1;
    }
    let (chi, dof) = chi_square(&ray_counts, &params.alpha_f64())?;
    Ok(MarginalReport {
        samples: states.len(),
        ks_statistic: ks,
        ks_pvalue,
        ray_counts,
        chi_square: chi,
        chi_square_dof: dof,
        chi_square_pvalue: chi_square_pvalue(chi, dof),
    })
}
