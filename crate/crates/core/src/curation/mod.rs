//! Data-curation geometry and scheduling.

mod bucket;
mod crop;
mod fps;
mod rect;

pub use bucket::{assign_bucket, Bucket, BucketGrid, BucketSampler, Draw};
pub use crop::{
    accept_crop, candidate_regions, trim_black_borders, BoxMaskProvider, CandidateRegions,
    CropVerdict, MaskProvider, SyntheticMaskProvider,
};
pub use fps::{fps_normalize, parse_fps, Fps};
pub use rect::{max_interior_rectangle, max_interior_rectangle_bruteforce, BinaryMask, InteriorRect, Rect};
