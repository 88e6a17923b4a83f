//! Algorithmic core of a diffusion-forcing video generator, at desk scale.
//!
//! * [`schedule`]: exact counting and sampling of non-decreasing per-frame
//!   timestep schedules, and adaptive-difference inference plans.
//! * [`flow`]: flow-matching objective, a small per-frame velocity regressor
//!   with hand-written gradients, and Euler sampling under per-frame plans.
//! * [`forcing`]: diffusion-forcing training, toy video dynamics and the
//!   sliding-window rollout.
//! * [`preference`]: tie-aware pairwise reward modelling, flow DPO, automatic
//!   preference-pair synthesis and the distribution-matching gradient.
//! * [`curation`]: largest interior rectangle, crop acceptance, FPS
//!   normalization and duration/aspect-ratio bucketing.

pub mod curation;
pub mod error;
pub mod flow;
pub mod forcing;
pub mod preference;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
