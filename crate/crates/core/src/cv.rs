//! The Csaki–Vincze transform of a simple random walk.
//!
//! For `S` on `[0, n]` with steps `X_i = S_i - S_{i-1}`, the sign-change times
//! `tau_0 = 0`, `tau_{l+1} = min{i > tau_l : S_{i-1} S_{i+1} < 0}` cut the time
//! axis into blocks, and on block `l` the new steps are
//! `Xbar_j = (-1)^{l+1} X_1 X_{j+1}` for `tau_l < j <= tau_{l+1}`.
//! `Sbar` is again a simple random walk, `Ybar = max Sbar - Sbar` stays within 2
//! of `|S|`, and `tau_l` is the first time `Sbar` reaches `2l`.
//!
//! Time is measured from the window start; all returned indices are absolute
//! window indices.

use thiserror::Error;

use crate::walk::{gap_below_running_max, WalkError, WalkWindow};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CvError {
    #[error("walk has {steps} steps, the transform needs at least {needed}")]
    TooShort { steps: usize, needed: usize },
    #[error(transparent)]
    Walk(#[from] WalkError),
}

/// First step of a preimage: the single bit the transform forgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Self {
        if v > 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// `tau_1 < tau_2 < ...`: times `i` in `[1, n-1]` with `S_{i-1} S_{i+1} < 0`.
pub fn sign_change_times(s: &WalkWindow) -> Vec<i64> {
    let v = s.values();
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i - 1] * v[i + 1] < 0)
        .map(|i| s.start() + i as i64)
        .collect()
}

/// `tau_l = min{n : Sbar_n = 2l}` for every `l >= 1` reached inside the window.
pub fn even_level_first_hits(s_bar: &WalkWindow) -> Vec<i64> {
    let mut out = Vec::new();
    let mut next = 2;
    for (i, &v) in s_bar.values().iter().enumerate() {
        if v == next {
            out.push(s_bar.start() + i as i64);
            next += 2;
        }
    }
    out
}

/// Block number `l` of step `j`: how many `tau_l` (l >= 1) lie strictly before `j`.
fn block_signs(taus: &[i64], first: i64, last: i64) -> impl Iterator<Item = i64> + '_ {
    let mut l = 0usize;
    (first..=last).map(move |j| {
        while l < taus.len() && taus[l] < j {
            l += 1;
        }
        // (-1)^{l+1}
        if l.is_multiple_of(2) {
            -1
        } else {
            1
        }
    })
}

/// `T(S)`, defined on one step less than `S`.
pub fn cv_forward(s: &WalkWindow) -> Result<WalkWindow, CvError> {
    let n = s.steps();
    if n < 2 {
        return Err(CvError::TooShort {
            steps: n,
            needed: 2,
        });
    }
    let o = s.start();
    let taus = sign_change_times(s);
    let x1 = s.step(o);
    let steps: Vec<i8> = block_signs(&taus, o + 1, o + n as i64 - 1)
        .enumerate()
        .map(|(i, sign)| (sign * x1 * s.step(o + i as i64 + 1)) as i8)
        .collect();
    Ok(WalkWindow::from_increments(o, &steps)?)
}

/// The preimage of `Sbar` whose first step is `epsilon`; one step longer than `Sbar`.
pub fn cv_inverse(s_bar: &WalkWindow, epsilon: Sign) -> Result<WalkWindow, CvError> {
    let m = s_bar.steps();
    if m < 1 {
        return Err(CvError::TooShort {
            steps: m,
            needed: 1,
        });
    }
    let o = s_bar.start();
    let taus = even_level_first_hits(s_bar);
    let eps = epsilon.value();
    let mut steps = Vec::with_capacity(m + 1);
    steps.push(eps as i8);
    for (i, sign) in block_signs(&taus, o + 1, o + m as i64).enumerate() {
        steps.push((sign * eps * s_bar.step(o + i as i64)) as i8);
    }
    Ok(WalkWindow::from_increments(o, &steps)?)
}

/// `max_n | Ybar_n - |S_n| |` over the range where `Sbar` is defined.
pub fn cv_invariant_check(s: &WalkWindow) -> Result<u64, CvError> {
    let s_bar = cv_forward(s)?;
    let y_bar = gap_below_running_max(&s_bar);
    Ok(y_bar
        .iter()
        .zip(s.values())
        .map(|(y, v)| y.abs_diff(v.abs()))
        .max()
        .unwrap_or(0))
}
