//! Two-sided simple random walks on index windows.
//!
//! A [`WalkWindow`] stores `S_k` for `k` in `[start, end]`, anchored so that
//! `S_start = 0`. Only differences `S_{p,n} = S_n - S_p` carry meaning, so the
//! anchor never leaks into results. Range minima are answered in O(1) by a
//! sparse table built on first use.

use std::sync::OnceLock;

use thiserror::Error;

use crate::rng::{sign_of, Channel, StreamKey};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WalkError {
    #[error("window [{start}, {end}] holds no step")]
    EmptyWindow { start: i64, end: i64 },
    #[error("index range [{from}, {to}] outside window [{start}, {end}]")]
    OutOfWindow {
        from: i64,
        to: i64,
        start: i64,
        end: i64,
    },
    #[error("increment {value} at index {index} is not +1 or -1")]
    BadIncrement { index: i64, value: i64 },
    #[error("path value {value} at index {index} is negative")]
    NegativeValue { index: i64, value: i64 },
}

#[derive(Debug)]
pub struct WalkWindow {
    start: i64,
    values: Vec<i64>,
    min_table: OnceLock<SparseArgmin>,
}

impl Clone for WalkWindow {
    fn clone(&self) -> Self {
        Self {
            start: self.start,
            values: self.values.clone(),
            min_table: OnceLock::new(),
        }
    }
}

impl PartialEq for WalkWindow {
    fn eq(&self, other: &Self) -> bool {
        self.start == other.start && self.values == other.values
    }
}

impl Eq for WalkWindow {}

/// First passage result: `NotHit` means the level is not reached inside the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hit {
    At(i64),
    NotHit,
}

impl Hit {
    /// `n <= T` with `NotHit` read as `T = +inf`.
    pub fn not_before(self, n: i64) -> bool {
        match self {
            Hit::At(t) => n <= t,
            Hit::NotHit => true,
        }
    }

    pub fn time(self) -> Option<i64> {
        match self {
            Hit::At(t) => Some(t),
            Hit::NotHit => None,
        }
    }
}

impl WalkWindow {
    /// I.i.d. fair steps on `[start, end]` from the walk channel of `(seed, stream)`.
    ///
    /// The step from `k` to `k + 1` depends only on `(seed, stream, k)`, so
    /// overlapping windows of the same stream agree on their common part.
    pub fn generate(start: i64, end: i64, seed: u64, stream: u64) -> Result<Self, WalkError> {
        Self::generate_from(StreamKey::new(seed, stream, Channel::Walk), start, end)
    }

    pub fn generate_from(key: StreamKey, start: i64, end: i64) -> Result<Self, WalkError> {
        if start >= end {
            return Err(WalkError::EmptyWindow { start, end });
        }
        let len = (end - start) as usize;
        let mut reader = key.reader(start);
        let mut values = Vec::with_capacity(len + 1);
        let mut s = 0i64;
        values.push(s);
        for _ in 0..len {
            s += i64::from(sign_of(reader.next_word()));
            values.push(s);
        }
        Ok(Self::from_anchored(start, values))
    }

    pub fn from_increments(start: i64, increments: &[i8]) -> Result<Self, WalkError> {
        if increments.is_empty() {
            return Err(WalkError::EmptyWindow { start, end: start });
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut s = 0i64;
        values.push(s);
        for (i, &x) in increments.iter().enumerate() {
            if x != 1 && x != -1 {
                return Err(WalkError::BadIncrement {
                    index: start + i as i64,
                    value: i64::from(x),
                });
            }
            s += i64::from(x);
            values.push(s);
        }
        Ok(Self::from_anchored(start, values))
    }

    /// Re-anchors `values` so the first entry is 0.
    pub fn from_values(start: i64, values: &[i64]) -> Result<Self, WalkError> {
        if values.len() < 2 {
            return Err(WalkError::EmptyWindow { start, end: start });
        }
        for (i, pair) in values.windows(2).enumerate() {
            let d = pair[1] - pair[0];
            if d.abs() != 1 {
                return Err(WalkError::BadIncrement {
                    index: start + i as i64,
                    value: d,
                });
            }
        }
        let anchor = values[0];
        Ok(Self::from_anchored(
            start,
            values.iter().map(|v| v - anchor).collect(),
        ))
    }

    fn from_anchored(start: i64, values: Vec<i64>) -> Self {
        Self {
            start,
            values,
            min_table: OnceLock::new(),
        }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.steps() as i64
    }

    /// Number of increments.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.start && k <= self.end()
    }

    /// Anchored values `S_start..=S_end`.
    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn increments(&self) -> Vec<i8> {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]) as i8)
            .collect()
    }

    /// `S_k` relative to the anchor.
    pub fn value(&self, k: i64) -> i64 {
        self.values[self.offset(k)]
    }

    /// `S_{k+1} - S_k`.
    pub fn step(&self, k: i64) -> i64 {
        let i = self.offset(k);
        self.values[i + 1] - self.values[i]
    }

    pub fn negated(&self) -> Self {
        Self::from_anchored(self.start, self.values.iter().map(|v| -v).collect())
    }

    fn offset(&self, k: i64) -> usize {
        (k - self.start) as usize
    }

    fn check_range(&self, p: i64, n: i64) -> Result<(), WalkError> {
        if p > n || !self.contains(p) || !self.contains(n) {
            return Err(WalkError::OutOfWindow {
                from: p,
                to: n,
                start: self.start,
                end: self.end(),
            });
        }
        Ok(())
    }

    /// `S_{p,n} = S_n - S_p`.
    pub fn diff(&self, p: i64, n: i64) -> Result<i64, WalkError> {
        self.check_range(p.min(n), p.max(n))?;
        Ok(self.value(n) - self.value(p))
    }

    fn table(&self) -> &SparseArgmin {
        self.min_table
            .get_or_init(|| SparseArgmin::build(&self.values))
    }

    /// `min_{h in [p, n]} S_h - S_p`.
    pub fn window_min(&self, p: i64, n: i64) -> Result<i64, WalkError> {
        self.check_range(p, n)?;
        let i = self
            .table()
            .argmin(&self.values, self.offset(p), self.offset(n));
        Ok(self.values[i] - self.value(p))
    }

    /// Latest index in `[p, n]` where the range minimum is attained.
    pub fn last_argmin(&self, p: i64, n: i64) -> Result<i64, WalkError> {
        self.check_range(p, n)?;
        let i = self
            .table()
            .argmin(&self.values, self.offset(p), self.offset(n));
        Ok(self.start + i as i64)
    }

    /// `S+_{p,n} = S_{p,n} - min_{h in [p, n]} S_{p,h}`.
    pub fn s_plus(&self, p: i64, n: i64) -> Result<u64, WalkError> {
        let m = self.window_min(p, n)?;
        Ok((self.value(n) - self.value(p) - m) as u64)
    }

    /// `T = inf{q >= p : S_q - S_p = -depth}` within the window.
    pub fn hitting_time(&self, p: i64, depth: u64) -> Result<Hit, WalkError> {
        self.check_range(p, p)?;
        if depth == 0 {
            return Ok(Hit::At(p));
        }
        let target = self.value(p) - depth as i64;
        let (lo, hi) = (self.offset(p), self.values.len() - 1);
        let table = self.table();
        if self.values[table.argmin(&self.values, lo, hi)] > target {
            return Ok(Hit::NotHit);
        }
        // smallest q with min S[lo..=q] <= target; unit steps make that an exact hit
        let (mut a, mut b) = (lo, hi);
        while a < b {
            let mid = a + (b - a) / 2;
            if self.values[table.argmin(&self.values, lo, mid)] <= target {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        Ok(Hit::At(self.start + a as i64))
    }
}

/// Sparse table of range argmins, ties resolved towards the later index.
#[derive(Debug)]
struct SparseArgmin {
    levels: Vec<Vec<u32>>,
}

impl SparseArgmin {
    fn pick(values: &[i64], a: u32, b: u32) -> u32 {
        let (va, vb) = (values[a as usize], values[b as usize]);
        match va.cmp(&vb) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => a.max(b),
        }
    }

    fn build(values: &[i64]) -> Self {
        let n = values.len();
        let mut levels = vec![(0..n as u32).collect::<Vec<_>>()];
        let mut width = 1;
        while 2 * width <= n {
            let prev = levels.last().unwrap();
            let next = (0..=n - 2 * width)
                .map(|i| Self::pick(values, prev[i], prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    fn argmin(&self, values: &[i64], lo: usize, hi: usize) -> usize {
        let span = hi - lo + 1;
        let level = (usize::BITS - 1 - span.leading_zeros()) as usize;
        let row = &self.levels[level];
        let a = row[lo];
        let b = row[hi + 1 - (1 << level)];
        Self::pick(values, a, b) as usize
    }
}

/// An excursion `[start, end]` of a nonnegative path with its ordinal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Excursion {
    pub start: i64,
    pub end: i64,
    /// 1-based position in start order.
    pub ordinal: u64,
}

impl Excursion {
    pub fn contains(&self, k: i64) -> bool {
        self.start <= k && k <= self.end
    }
}

/// Excursions of a nonnegative path `y` indexed from `start`.
///
/// `[p, q]` is an excursion when `Y_{p-1} = Y_p = Y_q = Y_{q+1} = 0`, `p < q`,
/// and every zero in `[p, q)` is followed by a 1. `Y_{start-1}` is taken as 0;
/// an excursion whose closing `Y_{q+1}` lies beyond the path is dropped.
///
/// Zero pairs `(Y_j, Y_{j+1}) = (0, 0)` split the path, and an excursion is
/// the stretch between two consecutive pairs when it contains a positive value.
pub fn excursions(y: &[i64], start: i64) -> Result<Vec<Excursion>, WalkError> {
    if let Some((i, &v)) = y.iter().enumerate().find(|(_, &v)| v < 0) {
        return Err(WalkError::NegativeValue {
            index: start + i as i64,
            value: v,
        });
    }
    let at = |j: isize| -> i64 {
        if j < 0 {
            0
        } else {
            y[j as usize]
        }
    };
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for j in 0..y.len() {
        let j_i = j as isize;
        if y[j] == 0 && at(j_i - 1) == 0 && open.is_none() {
            if j + 1 < y.len() && y[j + 1] == 1 {
                open = Some(j);
            }
            continue;
        }
        if let Some(p) = open {
            if y[j] == 0 && j + 1 < y.len() && y[j + 1] > 1 {
                // a zero must be followed by 0 or 1; drop the candidate
                open = None;
                continue;
            }
            if y[j] == 0 && j + 1 < y.len() && y[j + 1] == 0 {
                out.push(Excursion {
                    start: start + p as i64,
                    end: start + j as i64,
                    ordinal: out.len() as u64 + 1,
                });
                open = None;
                // j + 1 may open the next excursion
            }
        }
    }
    Ok(out)
}

/// `Y_n = max_{k <= n} S_k - S_n` over the window.
pub fn gap_below_running_max(walk: &WalkWindow) -> Vec<i64> {
    let mut best = i64::MIN;
    walk.values()
        .iter()
        .map(|&s| {
            best = best.max(s);
            best - s
        })
        .collect()
}
