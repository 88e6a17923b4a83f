//! Frame-oriented probability propagation sampling.
//!
//! An anchor frame `f` and its timestep `t_f` are drawn uniformly. The
//! remaining frames are filled outward from the anchor, one at a time, with
//! probabilities read off the exact count tables so that, given the anchor,
//! every valid non-decreasing completion is equally likely.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use super::dp::{build_prefix_table, build_suffix_table, DpTable};
use super::ScheduleVector;
use crate::error::Result;

/// Precomputed sampling tables for a fixed `(F, T)`.
#[derive(Debug, Clone)]
pub struct FoppSampler {
    frames: usize,
    max_timestep: usize,
    suffix: DpTable,
    prefix: DpTable,
    /// `tail[i][k] = sum_{j >= k} d^s[i][j] / sum_j d^s[i][j]`, `k = 1..=T+1`.
    tail: Vec<Vec<f64>>,
    /// `head[i][k] = sum_{j <= k} d^e[i][j] / sum_j d^e[i][j]`, `k = 0..=T`.
    head: Vec<Vec<f64>>,
}

impl FoppSampler {
    pub fn new(frames: usize, max_timestep: usize) -> Result<Self> {
        let suffix = build_suffix_table(frames, max_timestep)?;
        let prefix = build_prefix_table(frames, max_timestep)?;
        let t = max_timestep;

        let mut tail = vec![Vec::new(); frames + 1];
        let mut head = vec![Vec::new(); frames + 1];
        for i in 1..=frames {
            // Exact cumulative sums, normalized only at the end.
            let mut cum_tail = vec![BigUint::zero(); t + 2];
            for k in (1..=t).rev() {
                cum_tail[k] = &cum_tail[k + 1] + suffix.get(i, k);
            }
            let total = cum_tail[1].clone();
            tail[i] = cum_tail.iter().map(|c| big_ratio(c, &total)).collect();

            let mut cum_head = vec![BigUint::zero(); t + 1];
            for k in 1..=t {
                cum_head[k] = &cum_head[k - 1] + prefix.get(i, k);
            }
            let total = cum_head[t].clone();
            head[i] = cum_head.iter().map(|c| big_ratio(c, &total)).collect();
        }

        Ok(Self {
            frames,
            max_timestep,
            suffix,
            prefix,
            tail,
            head,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn max_timestep(&self) -> usize {
        self.max_timestep
    }

    pub fn suffix_table(&self) -> &DpTable {
        &self.suffix
    }

    pub fn prefix_table(&self) -> &DpTable {
        &self.prefix
    }

    /// Draws a schedule with a uniformly chosen anchor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ScheduleVector {
        let anchor = rng.random_range(1..=self.frames);
        let timestep = rng.random_range(1..=self.max_timestep);
        self.sample_anchored(anchor, timestep, rng)
    }

    /// Completes a schedule given `t_anchor = timestep` (both 1-based).
    pub fn sample_anchored<R: Rng + ?Sized>(
        &self,
        anchor: usize,
        timestep: usize,
        rng: &mut R,
    ) -> ScheduleVector {
        assert!((1..=self.frames).contains(&anchor), "anchor out of range");
        assert!(
            (1..=self.max_timestep).contains(&timestep),
            "timestep out of range"
        );
        let mut t = vec![0usize; self.frames + 1];
        t[anchor] = timestep;
        for i in anchor + 1..=self.frames {
            t[i] = self.draw_after(i, t[i - 1], rng);
        }
        for i in (1..anchor).rev() {
            t[i] = self.draw_before(i, t[i + 1], rng);
        }
        ScheduleVector {
            timesteps: t[1..].to_vec(),
            max_timestep: self.max_timestep,
        }
    }

    /// Visit probability of timestep `k` at frame `i`, given the previous
    /// frame sits at `floor`: `d^s[i][k] / sum_{j=floor..T} d^s[i][j]`.
    pub fn visit_probability_after(&self, frame: usize, floor: usize, k: usize) -> f64 {
        if k < floor || k > self.max_timestep {
            return 0.0;
        }
        let row = &self.tail[frame];
        (row[k] - row[k + 1]) / row[floor]
    }

    /// Visit probability of timestep `k` at frame `i`, given the next frame
    /// sits at `ceil`: `d^e[i][k] / sum_{j=1..ceil} d^e[i][j]`.
    pub fn visit_probability_before(&self, frame: usize, ceil: usize, k: usize) -> f64 {
        if k == 0 || k > ceil {
            return 0.0;
        }
        let row = &self.head[frame];
        (row[k] - row[k - 1]) / row[ceil]
    }

    fn draw_after<R: Rng + ?Sized>(&self, frame: usize, floor: usize, rng: &mut R) -> usize {
        let row = &self.tail[frame];
        let u: f64 = rng.random();
        let target = (1.0 - u) * row[floor];
        // Largest k in [floor, T] with tail[k] >= target; tail is non-increasing.
        let (mut lo, mut hi) = (floor, self.max_timestep);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if row[mid] >= target {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    fn draw_before<R: Rng + ?Sized>(&self, frame: usize, ceil: usize, rng: &mut R) -> usize {
        let row = &self.head[frame];
        let u: f64 = rng.random();
        let target = u * row[ceil];
        // Smallest k in [1, ceil] with head[k] > target; head is non-decreasing.
        let (mut lo, mut hi) = (1, ceil);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if row[mid] > target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

/// Draws one FoPP schedule. Builds the tables on every call; use
/// [`FoppSampler`] when sampling repeatedly.
pub fn fopp_sample<R: Rng + ?Sized>(
    frames: usize,
    max_timestep: usize,
    rng: &mut R,
) -> Result<ScheduleVector> {
    Ok(FoppSampler::new(frames, max_timestep)?.sample(rng))
}

/// `num / den` as a float without overflowing on huge counts.
fn big_ratio(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let scaled = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        (num >> (-shift) as u64) / den
    };
    scaled.to_f64().unwrap_or(f64::INFINITY) * 2f64.powi(-shift as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::validate_schedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn big_ratio_is_accurate() {
        let a = BigUint::from(1u32) << 600u32;
        let b = BigUint::from(3u32) << 600u32;
        assert!((big_ratio(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(big_ratio(&BigUint::from(7u32), &BigUint::from(7u32)), 1.0);
        assert_eq!(big_ratio(&BigUint::zero(), &BigUint::from(7u32)), 0.0);
    }

    #[test]
    fn single_frame_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v = fopp_sample(1, 4, &mut rng).unwrap();
            assert_eq!(v.frames(), 1);
            assert!((1..=4).contains(&v.timesteps[0]));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = fopp_sample(3, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let b = fopp_sample(3, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn visit_probabilities_sum_to_one() {
        let s = FoppSampler::new(5, 6).unwrap();
        for i in 1..=5 {
            for bound in 1..=6 {
                let after: f64 = (1..=6).map(|k| s.visit_probability_after(i, bound, k)).sum();
                let before: f64 = (1..=6).map(|k| s.visit_probability_before(i, bound, k)).sum();
                assert!((after - 1.0).abs() < 1e-12);
                assert!((before - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_tables_sample_valid() {
        let s = FoppSampler::new(16, 1000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let v = s.sample(&mut rng);
            assert!(validate_schedule(&v));
            assert!(v.timesteps.iter().all(|&t| t >= 1));
        }
    }
}
