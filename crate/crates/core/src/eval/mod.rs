//! Digital similarity evaluation, transfer matrices, threshold
//! calibration and the stream simulator.

pub mod plot;
mod similarity;
mod stream;
mod threshold;

pub use similarity::{
    control_conditions, eval_similarity, transferability_matrix, ConditionSummary, MaskCondition,
    SimilarityRecord, SimilarityReport, TransferMatrix, TransferTarget,
};
pub use stream::{
    persistence_detection, recognition_rate, simulate_stream, summarize_stream, write_events_csv,
    FaceDetector, PassThroughDetector, PersistenceConfig, RecognitionRule, StreamSummary,
    VerificationEvent,
};
pub use threshold::{
    calibrate_threshold, false_accept_rate, impostor_scores, threshold_for_far, Calibration,
};
