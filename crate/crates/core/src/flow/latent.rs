use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `F` frames of dimension `D`, stored row-major, with an optional per-frame
/// noise level in `[0, 1]` (`0` = clean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSequence {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
    noise_levels: Option<Vec<f64>>,
}

impl LatentSequence {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("frame dimension must be at least 1"));
        }
        if data.len() != frames * dim {
            return Err(Error::shape(
                format!("{frames}x{dim} = {} values", frames * dim),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            frames,
            dim,
            data,
            noise_levels: None,
        })
    }

    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self {
            frames,
            dim,
            data: vec![0.0; frames * dim],
            noise_levels: None,
        }
    }

    pub fn from_frames(frames: Vec<Vec<f64>>) -> Result<Self> {
        let dim = frames.first().map_or(0, Vec::len);
        if let Some(bad) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::shape(format!("dimension {dim}"), format!("dimension {}", bad.len())));
        }
        let n = frames.len();
        Self::new(n, dim, frames.into_iter().flatten().collect())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_frames(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_frames(&self) -> Vec<Vec<f64>> {
        self.iter_frames().map(<[f64]>::to_vec).collect()
    }

    pub fn noise_levels(&self) -> Option<&[f64]> {
        self.noise_levels.as_deref()
    }

    pub fn set_noise_levels(&mut self, levels: Option<Vec<f64>>) {
        debug_assert!(levels.as_ref().is_none_or(|l| l.len() == self.frames));
        self.noise_levels = levels;
    }

    /// Frames `start..end` (annotation dropped).
    pub fn slice(&self, start: usize, end: usize) -> LatentSequence {
        Self {
            frames: end - start,
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
            noise_levels: None,
        }
    }

    /// Appends the frames of `other` (annotation dropped).
    pub fn extend(&mut self, other: &LatentSequence) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::shape(format!("dimension {}", self.dim), format!("dimension {}", other.dim)));
        }
        self.data.extend_from_slice(&other.data);
        self.frames += other.frames;
        self.noise_levels = None;
        Ok(())
    }

    pub fn push_frame(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.dim {
            return Err(Error::shape(format!("dimension {}", self.dim), format!("dimension {}", frame.len())));
        }
        self.data.extend_from_slice(frame);
        self.frames += 1;
        self.noise_levels = None;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &LatentSequence) -> Result<()> {
        if self.frames != other.frames || self.dim != other.dim {
            return Err(Error::shape(
                format!("{}x{}", self.frames, self.dim),
                format!("{}x{}", other.frames, other.dim),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(LatentSequence::new(2, 3, vec![0.0; 5]).is_err());
        assert!(LatentSequence::new(2, 0, vec![]).is_err());
        assert!(LatentSequence::from_frames(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn slicing_and_extending() {
        let mut s = LatentSequence::from_frames(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let tail = s.slice(1, 3);
        assert_eq!(tail.frame(0), &[3.0, 4.0]);
        s.extend(&tail).unwrap();
        assert_eq!(s.frames(), 5);
        assert_eq!(s.frame(4), &[5.0, 6.0]);
        assert!(s.push_frame(&[1.0]).is_err());
    }
}
