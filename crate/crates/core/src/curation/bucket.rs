//! Duration x aspect-ratio bucketing and stochastic bucket sampling.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `B_T x B_AR` grid of bucket centres with a batch capacity per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketGrid {
    /// Duration centres in seconds, strictly increasing.
    pub duration_centers: Vec<f64>,
    /// Aspect-ratio centres (width / height), strictly increasing.
    pub aspect_centers: Vec<f64>,
    /// `capacities[duration][aspect]`, each at least 1.
    pub capacities: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub id: usize,
    pub duration_index: usize,
    pub aspect_index: usize,
    pub capacity: usize,
    /// Half-open duration bin `[lo, hi)`; edges are geometric midpoints
    /// between centres.
    pub duration_edges: (f64, f64),
    pub aspect_edges: (f64, f64),
}

fn check_centers(name: &str, centers: &[f64]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::domain(format!("{name} needs at least one centre")));
    }
    if centers.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::domain(format!("{name} centres must be positive and finite")));
    }
    if centers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain(format!("{name} centres must be strictly increasing")));
    }
    Ok(())
}

fn edges(centers: &[f64], k: usize) -> (f64, f64) {
    let lo = if k == 0 { 0.0 } else { (centers[k - 1] * centers[k]).sqrt() };
    let hi = if k + 1 == centers.len() {
        f64::INFINITY
    } else {
        (centers[k] * centers[k + 1]).sqrt()
    };
    (lo, hi)
}

/// Index of the centre nearest to `value` in log distance; the lower index
/// wins ties.
fn nearest(centers: &[f64], value: f64) -> usize {
    let lv = value.ln();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = (lv - c.ln()).abs();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

impl BucketGrid {
    pub fn validate(&self) -> Result<()> {
        check_centers("duration", &self.duration_centers)?;
        check_centers("aspect ratio", &self.aspect_centers)?;
        if self.capacities.len() != self.duration_centers.len()
            || self.capacities.iter().any(|row| row.len() != self.aspect_centers.len())
        {
            return Err(Error::shape(
                format!("{}x{} capacities", self.duration_centers.len(), self.aspect_centers.len()),
                "a differently shaped table",
            ));
        }
        if self.capacities.iter().flatten().any(|&c| c == 0) {
            return Err(Error::domain("bucket capacities must be at least 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.duration_centers.len() * self.aspect_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bucket(&self, duration_index: usize, aspect_index: usize) -> Bucket {
        Bucket {
            id: duration_index * self.aspect_centers.len() + aspect_index,
            duration_index,
            aspect_index,
            capacity: self.capacities[duration_index][aspect_index],
            duration_edges: edges(&self.duration_centers, duration_index),
            aspect_edges: edges(&self.aspect_centers, aspect_index),
        }
    }

    pub fn bucket_by_id(&self, id: usize) -> Bucket {
        let n = self.aspect_centers.len();
        self.bucket(id / n, id % n)
    }
}

/// Nearest bucket under `|log(dur / c_dur)| + |log(ar / c_ar)|`. The distance
/// separates per axis, so each axis picks its nearest centre independently.
pub fn assign_bucket(duration_s: f64, aspect_ratio: f64, grid: &BucketGrid) -> Result<Bucket> {
    grid.validate()?;
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::domain(format!("duration {duration_s} must be positive")));
    }
    if !(aspect_ratio > 0.0 && aspect_ratio.is_finite()) {
        return Err(Error::domain(format!("aspect ratio {aspect_ratio} must be positive")));
    }
    Ok(grid.bucket(
        nearest(&grid.duration_centers, duration_s),
        nearest(&grid.aspect_centers, aspect_ratio),
    ))
}

/// One mini-batch: the bucket it came from and the item ids it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draw {
    pub bucket: usize,
    pub items: Vec<usize>,
}

/// Epoch-based sampler: buckets are chosen with probability proportional to
/// the items they still hold, and each draw takes up to the bucket's
/// capacity. Every item is emitted exactly once per epoch.
#[derive(Debug, Clone)]
pub struct BucketSampler {
    capacities: Vec<usize>,
    queues: Vec<VecDeque<usize>>,
}

impl BucketSampler {
    /// `assignments` pairs item ids with bucket ids; items are shuffled
    /// within their bucket.
    pub fn new<R: Rng + ?Sized>(capacities: Vec<usize>, assignments: &[(usize, usize)], rng: &mut R) -> Result<Self> {
        if capacities.contains(&0) {
            return Err(Error::domain("bucket capacities must be at least 1"));
        }
        let mut per_bucket = vec![Vec::new(); capacities.len()];
        for &(item, bucket) in assignments {
            per_bucket
                .get_mut(bucket)
                .ok_or_else(|| Error::domain(format!("bucket id {bucket} out of range")))?
                .push(item);
        }
        let queues = per_bucket
            .into_iter()
            .map(|mut items| {
                items.shuffle(rng);
                VecDeque::from(items)
            })
            .collect();
        Ok(Self { capacities, queues })
    }

    pub fn from_grid<R: Rng + ?Sized>(grid: &BucketGrid, assignments: &[(usize, usize)], rng: &mut R) -> Result<Self> {
        grid.validate()?;
        let caps = (0..grid.len()).map(|id| grid.bucket_by_id(id).capacity).collect();
        Self::new(caps, assignments, rng)
    }

    pub fn remaining(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn occupancy(&self) -> Vec<usize> {
        self.queues.iter().map(VecDeque::len).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Draw> {
        let total = self.remaining();
        if total == 0 {
            return Err(Error::domain("all buckets are empty"));
        }
        let mut pick = rng.random_range(0..total);
        let bucket = self
            .queues
            .iter()
            .position(|q| {
                if pick < q.len() {
                    true
                } else {
                    pick -= q.len();
                    false
                }
            })
            .expect("pick is below the total");
        let take = self.capacities[bucket].min(self.queues[bucket].len());
        let items = self.queues[bucket].drain(..take).collect();
        Ok(Draw { bucket, items })
    }

    /// Draws until every bucket is empty.
    pub fn drain_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<Draw> {
        let mut out = Vec::new();
        while self.remaining() > 0 {
            out.push(self.draw(rng).expect("items remain"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn grid() -> BucketGrid {
        BucketGrid {
            duration_centers: vec![2.0, 5.0, 10.0],
            aspect_centers: vec![0.5625, 1.0, 1.7778],
            capacities: vec![vec![8, 8, 8], vec![4, 4, 4], vec![2, 2, 2]],
        }
    }

    #[test]
    fn centre_maps_to_itself() {
        let g = grid();
        for (i, &d) in g.duration_centers.iter().enumerate() {
            for (j, &a) in g.aspect_centers.iter().enumerate() {
                let b = assign_bucket(d, a, &g).unwrap();
                assert_eq!((b.duration_index, b.aspect_index), (i, j));
                assert_eq!(b.id, i * 3 + j);
            }
        }
    }

    #[test]
    fn equidistant_goes_low() {
        let g = BucketGrid {
            duration_centers: vec![1.0, 4.0],
            aspect_centers: vec![1.0],
            capacities: vec![vec![1], vec![1]],
        };
        // Geometric midpoint of 1 and 4.
        assert_eq!(assign_bucket(2.0, 1.0, &g).unwrap().duration_index, 0);
        assert_eq!(assign_bucket(2.0001, 1.0, &g).unwrap().duration_index, 1);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(assign_bucket(0.0, 1.0, &grid()).is_err());
        assert!(assign_bucket(1.0, -1.0, &grid()).is_err());
        let mut g = grid();
        g.duration_centers = vec![5.0, 2.0, 10.0];
        assert!(g.validate().is_err());
        let mut g = grid();
        g.capacities[0][0] = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn single_bucket_always_selected() {
        let items: Vec<(usize, usize)> = (0..10).map(|i| (i, 0)).collect();
        let mut s = BucketSampler::new(vec![3], &items, &mut seeded(1)).unwrap();
        let draws = s.drain_epoch(&mut seeded(2));
        assert!(draws.iter().all(|d| d.bucket == 0));
        assert_eq!(draws.iter().map(|d| d.items.len()).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
    }

    #[test]
    fn empty_rejected() {
        let mut s = BucketSampler::new(vec![3, 3], &[], &mut seeded(1)).unwrap();
        assert!(s.draw(&mut seeded(1)).is_err());
    }

    #[test]
    fn epoch_is_complete() {
        let g = grid();
        let assignments: Vec<(usize, usize)> = (0..200).map(|i| (i, (i * 7) % g.len())).collect();
        let mut s = BucketSampler::from_grid(&g, &assignments, &mut seeded(3)).unwrap();
        let mut emitted: Vec<usize> = s.drain_epoch(&mut seeded(4)).into_iter().flat_map(|d| d.items).collect();
        emitted.sort_unstable();
        assert_eq!(emitted, (0..200).collect::<Vec<_>>());
    }
}
