//! File formats, preprocessing, synthetic data, procedural models and
//! evaluation.

mod eval;
pub mod formats;
mod preprocess;
mod procedural;
mod sequence;
mod synth;

pub use eval::{evaluate, Aggregate, EvaluationRecord};
pub use formats::{load_model, save_model};
pub use preprocess::preprocess;
pub use procedural::{procedural_ball, procedural_box, procedural_hand, procedural_pipe};
pub use sequence::{format_report, format_summary, run_sequence, write_outputs, DepthFormat, SequenceConfig, SequenceOutput};
pub use synth::{generate_synthetic, synthetic_motion, MotionParams, SyntheticSequence};
