//! Exact counting of non-decreasing timestep sequences.
//!
//! The suffix table holds `d[i][j]`, the number of non-decreasing sequences
//! `(t_i = j, t_{i+1}, ..., t_F)` with values in `[j, T]`:
//!
//! ```text
//! d[F][j] = 1,  d[i][T] = 1,  d[i][j] = d[i][j + 1] + d[i + 1][j]
//! ```
//!
//! The prefix table is the mirror image: sequences `(t_1, ..., t_i = j)` with
//! values in `[1, j]`, so `d[1][j] = 1`, `d[i][1] = 1` and
//! `d[i][j] = d[i][j - 1] + d[i - 1][j]`.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::check_dims;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableDirection {
    /// Counts completions from frame `i` to the last frame.
    Suffix,
    /// Counts completions from the first frame to frame `i`.
    Prefix,
}

/// `(F + 1) x (T + 1)` grid of exact counts, 1-based. Row 0 and column 0 are
/// zero padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpTable {
    frames: usize,
    max_timestep: usize,
    direction: TableDirection,
    counts: Vec<Vec<BigUint>>,
}

impl DpTable {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn max_timestep(&self) -> usize {
        self.max_timestep
    }

    pub fn direction(&self) -> TableDirection {
        self.direction
    }

    /// Count at frame `i` (1-based) and timestep `j` (1-based).
    pub fn get(&self, frame: usize, timestep: usize) -> &BigUint {
        &self.counts[frame][timestep]
    }

    /// Row `i` over timesteps `1..=T`.
    pub fn row(&self, frame: usize) -> &[BigUint] {
        &self.counts[frame][1..]
    }

    /// Total number of non-decreasing schedules over all frames, read off the
    /// table boundary.
    pub fn total(&self) -> BigUint {
        let row = match self.direction {
            TableDirection::Suffix => 1,
            TableDirection::Prefix => self.frames,
        };
        self.row(row).iter().sum()
    }
}

pub fn build_suffix_table(frames: usize, max_timestep: usize) -> Result<DpTable> {
    check_dims(frames, max_timestep)?;
    let (f, t) = (frames, max_timestep);
    let mut counts = vec![vec![BigUint::zero(); t + 1]; f + 1];
    for i in (1..=f).rev() {
        for j in (1..=t).rev() {
            counts[i][j] = if i == f || j == t {
                BigUint::one()
            } else {
                &counts[i][j + 1] + &counts[i + 1][j]
            };
        }
    }
    Ok(DpTable {
        frames,
        max_timestep,
        direction: TableDirection::Suffix,
        counts,
    })
}

pub fn build_prefix_table(frames: usize, max_timestep: usize) -> Result<DpTable> {
    check_dims(frames, max_timestep)?;
    let (f, t) = (frames, max_timestep);
    let mut counts = vec![vec![BigUint::zero(); t + 1]; f + 1];
    for i in 1..=f {
        for j in 1..=t {
            counts[i][j] = if i == 1 || j == 1 {
                BigUint::one()
            } else {
                &counts[i][j - 1] + &counts[i - 1][j]
            };
        }
    }
    Ok(DpTable {
        frames,
        max_timestep,
        direction: TableDirection::Prefix,
        counts,
    })
}

/// Number of non-decreasing schedules with values in `[1, T]`:
/// `binomial(F + T - 1, F)`.
pub fn count_nondecreasing(frames: usize, max_timestep: usize) -> Result<BigUint> {
    check_dims(frames, max_timestep)?;
    let n = BigUint::from(frames + max_timestep - 1);
    Ok(num_integer::binomial(n, BigUint::from(frames)))
}

/// Number of unconstrained schedules, `T^F`.
pub fn count_unconstrained(frames: usize, max_timestep: usize) -> Result<BigUint> {
    check_dims(frames, max_timestep)?;
    Ok(num_traits::pow(BigUint::from(max_timestep), frames))
}
