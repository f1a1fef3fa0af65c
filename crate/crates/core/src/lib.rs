//! Career trajectory pipeline: turns raw resume profiles into classified,
//! enriched career trajectories and fits upward-mobility models on them.

pub mod analysis;
pub mod crowdeval;
pub mod date;
pub mod enrichment;
pub mod fewsoc;
pub mod llm;
pub mod profiles;
pub mod taxonomy;
pub mod trajectory;
