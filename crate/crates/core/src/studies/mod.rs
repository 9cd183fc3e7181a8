//! Data generators for the three simulation studies.

mod fisher;
mod gng;
mod trial;

pub use fisher::{fisher_dataset, fisher_label, FisherDesign, FisherSampling};
pub use gng::{gng_dataset, gng_expected_go, gng_go, GngDesign, GngRanges, InputMode};
pub use trial::{gen_trial_dataset, trial_power, StageTest, TrialDesign, TrialRanges};
