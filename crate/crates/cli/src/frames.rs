//! Writing latent sequences as CSV tables or grayscale images.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dforce_core::flow::LatentSequence;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::io::{fmt_f64, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FrameFormat {
    /// One table, one row per frame.
    Csv,
    /// One grayscale image per frame; needs a square latent dimension.
    Pgm,
}

pub fn csv_text(seq: &LatentSequence) -> String {
    let mut out = String::from("frame");
    for d in 0..seq.dim() {
        out.push_str(&format!(",x{d}"));
    }
    out.push('\n');
    for (i, frame) in seq.iter_frames().enumerate() {
        out.push_str(&i.to_string());
        for v in frame {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn read_csv(path: &Path) -> Result<LatentSequence> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
            .collect::<Result<Vec<f64>>>()?;
        frames.push(values);
    }
    Ok(LatentSequence::from_frames(frames)?)
}

fn square_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        bail!("latent dimension {dim} is not a perfect square; use CSV output");
    }
    Ok(side)
}

/// Per-sequence min-max normalization to `0..=255`. A constant sequence maps
/// to mid-gray.
fn to_gray(seq: &LatentSequence) -> Vec<u8> {
    let (lo, hi) = seq
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    seq.data()
        .iter()
        .map(|&x| if span > 0.0 { ((x - lo) / span * 255.0).round() as u8 } else { 128 })
        .collect()
}

pub fn pgm_bytes(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)?;
    Ok(out)
}

/// Writes `seq` under `dir` and returns the files written.
pub fn emit_frames(seq: &LatentSequence, format: FrameFormat, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    match format {
        FrameFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            write_atomic(&path, csv_text(seq).as_bytes())?;
            Ok(vec![path])
        }
        FrameFormat::Pgm => {
            let side = square_side(seq.dim())?;
            let gray = to_gray(seq);
            let mut paths = Vec::with_capacity(seq.frames());
            for (i, px) in gray.chunks_exact(seq.dim()).enumerate() {
                let path = dir.join(format!("{stem}_{i:04}.pgm"));
                write_atomic(&path, &pgm_bytes(px, side, side)?)?;
                paths.push(path);
            }
            Ok(paths)
        }
    }
}

/// All frames side by side in one image, one pixel gap between frames.
pub fn strip_bytes(seq: &LatentSequence) -> Result<Vec<u8>> {
    let side = square_side(seq.dim())?;
    ensure!(seq.frames() > 0, "empty sequence");
    let gray = to_gray(seq);
    let width = seq.frames() * (side + 1) - 1;
    let mut px = vec![0u8; width * side];
    for (i, frame) in gray.chunks_exact(seq.dim()).enumerate() {
        for r in 0..side {
            let row = r * width + i * (side + 1);
            px[row..row + side].copy_from_slice(&frame[r * side..(r + 1) * side]);
        }
    }
    pgm_bytes(&px, width, side)
}
