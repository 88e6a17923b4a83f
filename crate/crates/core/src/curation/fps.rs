//! Residue-aware frame-rate normalization.

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};

/// Exact frame rate, e.g. `30000/1001`.
pub type Fps = Ratio<u64>;

const TARGETS: [u64; 2] = [16, 24];

fn residue(fps: Fps, target: u64) -> Fps {
    let t = Fps::from_integer(target);
    fps - (fps / t).floor() * t
}

/// The target rate in `{16, 24}` leaving the smaller remainder
/// `original mod target`; ties go to 24.
pub fn fps_normalize(original: Fps) -> Result<u32> {
    if original.is_zero() {
        return Err(Error::domain("frame rate must be positive"));
    }
    let r16 = residue(original, TARGETS[0]);
    let r24 = residue(original, TARGETS[1]);
    Ok(if r16 < r24 { 16 } else { 24 })
}

/// Parses `"24"`, `"29.97"` or `"30000/1001"` exactly.
pub fn parse_fps(text: &str) -> Result<Fps> {
    let text = text.trim();
    let bad = || Error::domain(format!("cannot parse frame rate {text:?}"));
    let fps = if let Some((num, den)) = text.split_once('/') {
        let num: u64 = num.trim().parse().map_err(|_| bad())?;
        let den: u64 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        Fps::new(num, den)
    } else if let Some((int, frac)) = text.split_once('.') {
        if frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let scale = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        Fps::new(int * scale + frac, scale)
    } else {
        Fps::from_integer(text.parse().map_err(|_| bad())?)
    };
    if fps.is_zero() {
        return Err(Error::domain("frame rate must be positive"));
    }
    Ok(fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(n: u64) -> Fps {
        Fps::from_integer(n)
    }

    #[test]
    fn examples() {
        assert_eq!(fps_normalize(int(24)).unwrap(), 24);
        assert_eq!(fps_normalize(int(30)).unwrap(), 24);
        assert_eq!(fps_normalize(int(48)).unwrap(), 24);
        assert_eq!(fps_normalize(int(16)).unwrap(), 16);
        assert_eq!(fps_normalize(int(60)).unwrap(), 24);
        assert_eq!(fps_normalize(int(50)).unwrap(), 24);
        // 32 mod 16 = 0, 32 mod 24 = 8.
        assert_eq!(fps_normalize(int(32)).unwrap(), 16);
    }

    #[test]
    fn ntsc_rate() {
        let fps = parse_fps("30000/1001").unwrap();
        assert_eq!(fps_normalize(fps).unwrap(), 24);
        assert_eq!(parse_fps("29.97").unwrap(), Fps::new(2997, 100));
    }

    #[test]
    fn parse_errors() {
        assert!(parse_fps("0").is_err());
        assert!(parse_fps("abc").is_err());
        assert!(parse_fps("1/0").is_err());
        assert!(fps_normalize(Fps::zero()).is_err());
    }
}
