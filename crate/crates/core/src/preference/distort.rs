//! Controlled distortions that turn a clean clip into a worse one.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PreferenceLabel, PreferencePair};
use crate::error::{Error, Result};
use crate::flow::LatentSequence;
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    /// Played backwards.
    Reverse,
    /// Twice the frame rate of motion: excessive amplitude.
    ResampleFast,
    /// Every frame shown twice: insufficient amplitude.
    ResampleSlow,
    /// Rate alternating between double and frozen: erratic motion.
    Jitter,
    /// Noise over a contiguous span: local detail corruption.
    NoiseInject,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 5] = [
        Self::Reverse,
        Self::ResampleFast,
        Self::ResampleSlow,
        Self::Jitter,
        Self::NoiseInject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reverse => "reverse",
            Self::ResampleFast => "resample_fast",
            Self::ResampleSlow => "resample_slow",
            Self::Jitter => "jitter",
            Self::NoiseInject => "noise_inject",
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown distortion `{s}`")))
    }
}

/// Resamples `video` at fractional source positions, linearly interpolating
/// between frames and extrapolating along the end segments outside the clip.
fn resample(video: &LatentSequence, positions: impl Iterator<Item = f64>) -> LatentSequence {
    let (f, d) = (video.frames(), video.dim());
    let mut out = LatentSequence::zeros(f, d);
    for (k, pos) in positions.take(f).enumerate() {
        let lo = (pos.floor() as usize).min(f - 2);
        let w = pos - lo as f64;
        let (a, b) = (video.frame(lo), video.frame(lo + 1));
        for (j, o) in out.frame_mut(k).iter_mut().enumerate() {
            *o = a[j] + w * (b[j] - a[j]);
        }
    }
    out
}

/// RMS per-step displacement of a clip, per coordinate.
fn step_scale(video: &LatentSequence) -> f64 {
    let (f, d) = (video.frames(), video.dim());
    let sq: f64 = (1..f)
        .flat_map(|k| video.frame(k).iter().zip(video.frame(k - 1)).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    (sq / ((f - 1) * d) as f64).sqrt()
}

/// Applies `kind` to `video`, keeping its shape.
pub fn synthesize_distortion<R: Rng + ?Sized>(
    video: &LatentSequence,
    kind: DistortionKind,
    rng: &mut R,
) -> Result<LatentSequence> {
    let f = video.frames();
    if f < 2 {
        return Err(Error::domain("distortion needs at least two frames"));
    }
    let out = match kind {
        DistortionKind::Reverse => {
            let mut out = LatentSequence::zeros(f, video.dim());
            for k in 0..f {
                out.frame_mut(k).copy_from_slice(video.frame(f - 1 - k));
            }
            out
        }
        DistortionKind::ResampleFast => resample(video, (0..).map(|k| 2.0 * k as f64)),
        DistortionKind::ResampleSlow => resample(video, (0..).map(|k| (k / 2) as f64)),
        DistortionKind::Jitter => resample(video, (0..).map(|k: usize| (2 * k.div_ceil(2)) as f64)),
        DistortionKind::NoiseInject => {
            let span = (f / 4).max(1);
            let start = rng.random_range(0..=f - span);
            let sigma = 3.0 * step_scale(video).max(1e-3);
            let mut out = video.clone();
            for k in start..start + span {
                for x in out.frame_mut(k) {
                    *x += sigma * standard_normal(rng);
                }
            }
            out
        }
    };
    Ok(out)
}

/// One (clean, distorted) pair per clip, labelled clean-better. Kinds cycle
/// through every distortion in order and the clean member's side is random.
pub fn build_auto_pairs<R: Rng + ?Sized>(dataset: &[LatentSequence], rng: &mut R) -> Result<Vec<PreferencePair>> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, clean)| {
            let kind = DistortionKind::ALL[i % DistortionKind::ALL.len()];
            let bad = synthesize_distortion(clean, kind, rng)?;
            if rng.random::<bool>() {
                PreferencePair::new(clean.clone(), bad, PreferenceLabel::ABetter)
            } else {
                PreferencePair::new(bad, clean.clone(), PreferenceLabel::BBetter)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{make_toy_dataset, ToyVideoSpec};
    use crate::rng::{normal_vec, seeded};

    fn clip() -> LatentSequence {
        LatentSequence::new(6, 3, normal_vec(&mut seeded(1), 18)).unwrap()
    }

    #[test]
    fn reverse_is_involution_and_permutation() {
        let v = clip();
        let mut rng = seeded(0);
        let r = synthesize_distortion(&v, DistortionKind::Reverse, &mut rng).unwrap();
        let rr = synthesize_distortion(&r, DistortionKind::Reverse, &mut rng).unwrap();
        assert_eq!(rr, v);
        let mut a = v.to_frames();
        let mut b = r.to_frames();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn fast_doubles_displacement() {
        let spec = ToyVideoSpec::constant_velocity(2, 8, 0.3, 0.0);
        let v = &make_toy_dataset(&spec, 1, &mut seeded(2))[0].frames;
        let fast = synthesize_distortion(v, DistortionKind::ResampleFast, &mut seeded(0)).unwrap();
        let vel = spec.velocity(0);
        for k in 1..8 {
            for j in 0..2 {
                let step = fast.frame(k)[j] - fast.frame(k - 1)[j];
                assert!((step - 2.0 * vel[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn slow_and_jitter_patterns() {
        let v = clip();
        let mut rng = seeded(0);
        let slow = synthesize_distortion(&v, DistortionKind::ResampleSlow, &mut rng).unwrap();
        assert_eq!(slow.frame(0), v.frame(0));
        assert_eq!(slow.frame(1), v.frame(0));
        assert_eq!(slow.frame(5), v.frame(2));
        let jit = synthesize_distortion(&v, DistortionKind::Jitter, &mut rng).unwrap();
        assert_eq!(jit.frame(1), v.frame(2));
        assert_eq!(jit.frame(2), v.frame(2));
        assert_eq!(jit.frame(3), v.frame(4));
    }

    #[test]
    fn noise_touches_one_span() {
        let v = clip();
        let n = synthesize_distortion(&v, DistortionKind::NoiseInject, &mut seeded(5)).unwrap();
        let changed: Vec<usize> = (0..6).filter(|&k| n.frame(k) != v.frame(k)).collect();
        assert_eq!(changed.len(), 1);
    }

    #[test]
    fn unknown_kind() {
        assert!("blur".parse::<DistortionKind>().is_err());
        assert_eq!("jitter".parse::<DistortionKind>().unwrap(), DistortionKind::Jitter);
    }

    #[test]
    fn auto_pairs_label_clean_better_and_stratify() {
        let data: Vec<LatentSequence> = (0..23)
            .map(|i| LatentSequence::new(6, 2, normal_vec(&mut seeded(i), 12)).unwrap())
            .collect();
        let pairs = build_auto_pairs(&data, &mut seeded(9)).unwrap();
        assert_eq!(pairs, build_auto_pairs(&data, &mut seeded(9)).unwrap());
        for (p, clean) in pairs.iter().zip(&data) {
            match p.label {
                PreferenceLabel::ABetter => assert_eq!(&p.a, clean),
                PreferenceLabel::BBetter => assert_eq!(&p.b, clean),
                PreferenceLabel::Tie => panic!("tie emitted"),
            }
        }
    }
}
