//! Subtitle/logo candidate regions, mask providers and the crop acceptance
//! rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rect::{BinaryMask, Rect};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// `round_half_up(percent * total / 100)`, at least one pixel.
fn percent_px(percent: usize, total: usize) -> usize {
    ((percent * total + 50) / 100).clamp(1, total)
}

/// Where subtitles (edge bands) and logos (corners) are searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRegions {
    pub subtitle_top: Rect,
    pub subtitle_bottom: Rect,
    pub subtitle_left: Rect,
    pub subtitle_right: Rect,
    pub logo_top_left: Rect,
    pub logo_top_right: Rect,
    pub logo_bottom_left: Rect,
    pub logo_bottom_right: Rect,
}

impl CandidateRegions {
    pub fn subtitles(&self) -> [Rect; 4] {
        [self.subtitle_top, self.subtitle_bottom, self.subtitle_left, self.subtitle_right]
    }

    pub fn logos(&self) -> [Rect; 4] {
        [self.logo_top_left, self.logo_top_right, self.logo_bottom_left, self.logo_bottom_right]
    }
}

/// Subtitle bands: top 20%, bottom 40%, left 20%, right 20%. Logo corners:
/// 15% of width by 15% of height.
pub fn candidate_regions(width: usize, height: usize) -> Result<CandidateRegions> {
    if width == 0 || height == 0 {
        return Err(Error::domain("frame dimensions must be positive"));
    }
    let (w, h) = (width, height);
    let (last_r, last_c) = (h - 1, w - 1);
    let top = percent_px(20, h);
    let bottom = percent_px(40, h);
    let side = percent_px(20, w);
    let logo_w = percent_px(15, w);
    let logo_h = percent_px(15, h);
    let r = |top, left, bottom, right| Rect { top, left, bottom, right };
    Ok(CandidateRegions {
        subtitle_top: r(0, 0, top - 1, last_c),
        subtitle_bottom: r(h - bottom, 0, last_r, last_c),
        subtitle_left: r(0, 0, last_r, side - 1),
        subtitle_right: r(0, w - side, last_r, last_c),
        logo_top_left: r(0, 0, logo_h - 1, logo_w - 1),
        logo_top_right: r(0, w - logo_w, logo_h - 1, last_c),
        logo_bottom_left: r(h - logo_h, 0, last_r, logo_w - 1),
        logo_bottom_right: r(h - logo_h, w - logo_w, last_r, last_c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropVerdict {
    pub accepted: bool,
    pub area_fraction: f64,
    /// `|rect_ar / frame_ar - 1|`, aspect ratios as width over height.
    pub aspect_deviation: f64,
    pub reasons: Vec<String>,
}

/// Keeps a crop iff it covers strictly more than `area_threshold` of the
/// frame and its aspect ratio is within `ar_tolerance` (relative) of the
/// frame's.
pub fn accept_crop(
    rect: &Rect,
    frame_w: usize,
    frame_h: usize,
    area_threshold: f64,
    ar_tolerance: f64,
) -> CropVerdict {
    let mut reasons = Vec::new();
    if frame_w == 0 || frame_h == 0 || !rect.fits(frame_h, frame_w) {
        reasons.push(format!("rect {rect:?} lies outside the {frame_w}x{frame_h} frame"));
        return CropVerdict {
            accepted: false,
            area_fraction: 0.0,
            aspect_deviation: f64::INFINITY,
            reasons,
        };
    }
    let area_fraction = rect.area() as f64 / (frame_w * frame_h) as f64;
    let frame_ar = frame_w as f64 / frame_h as f64;
    let rect_ar = rect.width() as f64 / rect.height() as f64;
    let aspect_deviation = (rect_ar / frame_ar - 1.0).abs();
    if area_fraction <= area_threshold {
        reasons.push(format!(
            "area fraction {area_fraction:.4} not above {area_threshold}"
        ));
    }
    if aspect_deviation > ar_tolerance {
        reasons.push(format!(
            "aspect ratio deviates by {aspect_deviation:.4} (tolerance {ar_tolerance})"
        ));
    }
    CropVerdict {
        accepted: reasons.is_empty(),
        area_fraction,
        aspect_deviation,
        reasons,
    }
}

/// Black-border threshold on the 0..=255 intensity scale.
pub const BLACK_LEVEL: f64 = 16.0;

/// Content rectangle after trimming border rows and columns whose mean
/// intensity over all `frames` is below [`BLACK_LEVEL`]. `None` if every row
/// is black.
pub fn trim_black_borders(width: usize, height: usize, frames: &[&[u8]]) -> Result<Option<Rect>> {
    if width == 0 || height == 0 || frames.is_empty() {
        return Err(Error::domain("need at least one non-empty frame"));
    }
    if let Some(f) = frames.iter().find(|f| f.len() != width * height) {
        return Err(Error::shape(format!("{} pixels", width * height), format!("{} pixels", f.len())));
    }
    let mut row_sum = vec![0.0; height];
    let mut col_sum = vec![0.0; width];
    for frame in frames {
        for (r, row) in frame.chunks_exact(width).enumerate() {
            for (c, &p) in row.iter().enumerate() {
                row_sum[r] += p as f64;
                col_sum[c] += p as f64;
            }
        }
    }
    let n = frames.len() as f64;
    let row_dark = |r: usize| row_sum[r] / (n * width as f64) < BLACK_LEVEL;
    let col_dark = |c: usize| col_sum[c] / (n * height as f64) < BLACK_LEVEL;
    let Some(top) = (0..height).find(|&r| !row_dark(r)) else {
        return Ok(None);
    };
    let bottom = (0..height).rev().find(|&r| !row_dark(r)).unwrap();
    let Some(left) = (0..width).find(|&c| !col_dark(c)) else {
        return Ok(None);
    };
    let right = (0..width).rev().find(|&c| !col_dark(c)).unwrap();
    Ok(Some(Rect { top, left, bottom, right }))
}

/// Source of detection masks for a frame of the given size.
pub trait MaskProvider {
    fn mask(&self, width: usize, height: usize) -> Result<BinaryMask>;
}

/// Detected boxes marked as 0 on an otherwise clean mask.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxMaskProvider {
    pub boxes: Vec<Rect>,
}

impl MaskProvider for BoxMaskProvider {
    fn mask(&self, width: usize, height: usize) -> Result<BinaryMask> {
        let mut mask = BinaryMask::filled(height, width, true)?;
        for b in &self.boxes {
            if b.top >= height || b.left >= width {
                return Err(Error::domain(format!("box {b:?} starts outside the {width}x{height} frame")));
            }
            mask.clear_rect(b);
        }
        Ok(mask)
    }
}

/// Random subtitle strips and logo blocks placed inside the candidate
/// regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMaskProvider {
    pub seed: u64,
    pub subtitle_prob: f64,
    pub logo_prob: f64,
}

impl SyntheticMaskProvider {
    /// The boxes this provider would mark for a frame of the given size.
    pub fn boxes(&self, width: usize, height: usize) -> Result<Vec<Rect>> {
        let regions = candidate_regions(width, height)?;
        let mut rng = seeded(self.seed);
        let mut boxes = Vec::new();
        let inner = |region: Rect, rng: &mut crate::rng::SeededRng| {
            let h = rng.random_range(1..=region.height());
            let w = rng.random_range(1..=region.width());
            let top = region.top + rng.random_range(0..=region.height() - h);
            let left = region.left + rng.random_range(0..=region.width() - w);
            Rect { top, left, bottom: top + h - 1, right: left + w - 1 }
        };
        for region in regions.subtitles() {
            if rng.random::<f64>() < self.subtitle_prob {
                boxes.push(inner(region, &mut rng));
            }
        }
        for region in regions.logos() {
            if rng.random::<f64>() < self.logo_prob {
                boxes.push(inner(region, &mut rng));
            }
        }
        Ok(boxes)
    }
}

impl MaskProvider for SyntheticMaskProvider {
    fn mask(&self, width: usize, height: usize) -> Result<BinaryMask> {
        BoxMaskProvider { boxes: self.boxes(width, height)? }.mask(width, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::max_interior_rectangle;

    #[test]
    fn regions_for_square_frame() {
        let r = candidate_regions(1000, 1000).unwrap();
        assert_eq!((r.subtitle_bottom.top, r.subtitle_bottom.bottom), (600, 999));
        assert_eq!((r.subtitle_top.top, r.subtitle_top.bottom), (0, 199));
        assert_eq!((r.subtitle_left.left, r.subtitle_left.right), (0, 199));
        assert_eq!((r.subtitle_right.left, r.subtitle_right.right), (800, 999));
        assert_eq!(r.logo_top_left, Rect { top: 0, left: 0, bottom: 149, right: 149 });
        assert_eq!(r.logo_bottom_right, Rect { top: 850, left: 850, bottom: 999, right: 999 });
    }

    #[test]
    fn regions_for_single_pixel() {
        let r = candidate_regions(1, 1).unwrap();
        let px = Rect { top: 0, left: 0, bottom: 0, right: 0 };
        for rect in r.subtitles().into_iter().chain(r.logos()) {
            assert_eq!(rect, px);
        }
        assert!(candidate_regions(0, 4).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        // 15% of 10 = 1.5 -> 2 pixels.
        let r = candidate_regions(10, 10).unwrap();
        assert_eq!(r.logo_top_left.right, 1);
    }

    #[test]
    fn acceptance_rule() {
        let full = Rect { top: 0, left: 0, bottom: 99, right: 99 };
        assert!(accept_crop(&full, 100, 100, 0.8, 0.1).accepted);

        // 889x889 of 1000x1000 covers 79.03% with the frame's aspect ratio.
        let r79 = Rect { top: 0, left: 0, bottom: 888, right: 888 };
        let v = accept_crop(&r79, 1000, 1000, 0.8, 0.1);
        assert!(!v.accepted);
        assert_eq!(v.aspect_deviation, 0.0);

        // 85% area, aspect ratio 0.85 of the frame's: area passes, shape fails.
        let narrow = Rect { top: 0, left: 0, bottom: 99, right: 84 };
        let v = accept_crop(&narrow, 100, 100, 0.8, 0.1);
        assert!((v.area_fraction - 0.85).abs() < 1e-12);
        assert!((v.aspect_deviation - 0.15).abs() < 1e-12);
        assert!(!v.accepted);
        assert_eq!(v.reasons.len(), 1);

        // 90% area and within tolerance.
        let ok = Rect { top: 0, left: 0, bottom: 94, right: 94 };
        assert!(accept_crop(&ok, 100, 100, 0.8, 0.1).accepted);
    }

    #[test]
    fn exactly_eighty_percent_is_rejected() {
        let rect = Rect { top: 0, left: 0, bottom: 7, right: 9 };
        let v = accept_crop(&rect, 10, 10, 0.8, 1.0);
        assert!(!v.accepted);
    }

    #[test]
    fn outside_frame_rejected() {
        let rect = Rect { top: 0, left: 0, bottom: 10, right: 10 };
        assert!(!accept_crop(&rect, 10, 10, 0.8, 0.1).accepted);
    }

    #[test]
    fn black_borders_trimmed() {
        let (w, h) = (6, 4);
        let mut frame = vec![0u8; w * h];
        for r in 1..3 {
            for c in 1..5 {
                frame[r * w + c] = 200;
            }
        }
        let rect = trim_black_borders(w, h, &[&frame]).unwrap().unwrap();
        assert_eq!(rect, Rect { top: 1, left: 1, bottom: 2, right: 4 });
        assert_eq!(trim_black_borders(w, h, &[&vec![0u8; w * h]]).unwrap(), None);
    }

    #[test]
    fn synthetic_masks_are_reproducible_and_in_regions() {
        let p = SyntheticMaskProvider { seed: 4, subtitle_prob: 0.7, logo_prob: 0.5 };
        let a = p.mask(64, 48).unwrap();
        assert_eq!(a, p.mask(64, 48).unwrap());
        let r = max_interior_rectangle(&a);
        assert!(a.all_ones(&r.rect));
    }
}
