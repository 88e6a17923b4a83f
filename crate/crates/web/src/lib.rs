//! Browser bindings for three small operations: the AD inference plan, a
//! FoPP schedule draw and the largest clean rectangle of a mask.
//!
//! Matrices cross the boundary flattened row-major, since plain typed arrays
//! are all `wasm-bindgen` hands over without glue.

use dforce_core::curation::{max_interior_rectangle, BinaryMask};
use dforce_core::rng::seeded;
use dforce_core::schedule::{ad_schedule, FoppSampler};
use wasm_bindgen::prelude::*;

fn js_err(e: dforce_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// AD plan as a `(steps + 1) x frames` matrix of levels, row 0 being the
/// all-`T` start.
#[wasm_bindgen]
pub fn ad_plan(frames: usize, timesteps: usize, diff: usize) -> Result<Vec<u32>, JsError> {
    let plan = ad_schedule(frames, timesteps, diff).map_err(js_err)?;
    Ok(plan
        .states()
        .iter()
        .flat_map(|s| s.timesteps.iter().map(|&t| t as u32))
        .collect())
}

/// `count` FoPP schedules, flattened to `count x frames`.
#[wasm_bindgen]
pub fn fopp_samples(frames: usize, timesteps: usize, count: usize, seed: u64) -> Result<Vec<u32>, JsError> {
    let sampler = FoppSampler::new(frames, timesteps).map_err(js_err)?;
    let mut rng = seeded(seed);
    Ok((0..count)
        .flat_map(|_| sampler.sample(&mut rng).timesteps.into_iter().map(|t| t as u32))
        .collect())
}

/// `[top, left, bottom, right, area]` of the largest all-ones rectangle;
/// area 0 when the mask has no usable cell.
#[wasm_bindgen]
pub fn max_rectangle(rows: usize, cols: usize, cells: &[u8]) -> Result<Vec<u32>, JsError> {
    let mask = BinaryMask::new(rows, cols, cells.to_vec()).map_err(js_err)?;
    let best = max_interior_rectangle(&mask);
    let r = best.rect;
    Ok([r.top, r.left, r.bottom, r.right, best.area].map(|v| v as u32).to_vec())
}
