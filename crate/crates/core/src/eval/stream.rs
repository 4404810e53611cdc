use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{embed, Embedder, IdentityGallery};
use crate::error::{Error, Result};
use crate::imaging::{check_face_shape, Image};
use crate::renderer::{detect_landmarks, LandmarkBackend, SyntheticLandmarks};

/// Outcome of one frame of a verification stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub frame_index: usize,
    pub detected: bool,
    /// Best-matching gallery identity.
    pub candidate_identity: Option<String>,
    /// Cosine of the candidate.
    pub similarity: Option<f64>,
    /// Cosine against the subject's own gallery entry.
    pub subject_similarity: Option<f64>,
    pub recognized: bool,
}

impl VerificationEvent {
    pub fn undetected(frame_index: usize) -> Self {
        VerificationEvent {
            frame_index,
            detected: false,
            candidate_identity: None,
            similarity: None,
            subject_similarity: None,
            recognized: false,
        }
    }
}

/// When a detected frame counts as a recognition of the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognitionRule {
    /// The best match is the subject and clears the threshold.
    #[default]
    ArgmaxCorrect,
    /// The subject's own score clears the threshold, whatever the best
    /// match is.
    ThresholdOnly,
}

/// Finds and aligns the face in a frame.
pub trait FaceDetector: Send + Sync {
    fn name(&self) -> &str;

    /// Aligned 112×112×3 face crop.
    fn detect_align(&self, frame: &Image) -> Result<Image>;
}

/// Detector for frames that already are aligned crops: it only confirms a
/// face is present.
pub struct PassThroughDetector<'a> {
    landmarks: &'a dyn LandmarkBackend,
}

impl<'a> PassThroughDetector<'a> {
    pub fn new(landmarks: &'a dyn LandmarkBackend) -> Self {
        PassThroughDetector { landmarks }
    }
}

impl PassThroughDetector<'static> {
    pub fn synthetic() -> Self {
        Self::new(&SyntheticLandmarks)
    }
}

impl FaceDetector for PassThroughDetector<'_> {
    fn name(&self) -> &str {
        "pass-through"
    }

    fn detect_align(&self, frame: &Image) -> Result<Image> {
        check_face_shape(frame)?;
        detect_landmarks(frame, self.landmarks)?;
        Ok(frame.clone())
    }
}

/// Runs detect → embed → match on each frame in order. A frame whose
/// detection fails is recorded as undetected.
#[allow(clippy::too_many_arguments)]
pub fn simulate_stream(
    frames: &[Image],
    detector: &dyn FaceDetector,
    model: &dyn Embedder,
    gallery: &IdentityGallery,
    subject: &str,
    threshold: f64,
    rule: RecognitionRule,
) -> Result<Vec<VerificationEvent>> {
    if frames.is_empty() {
        return Err(Error::InvalidConfig("stream has no frames".into()));
    }
    if gallery.is_empty() {
        return Err(Error::InvalidConfig("gallery is empty".into()));
    }
    let mut events = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let face = match detector.detect_align(frame) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("frame {i}: {e}");
                events.push(VerificationEvent::undetected(i));
                continue;
            }
        };
        let e = embed(model, &face)?;
        let (candidate, sim) = gallery.best_match(&e)?.expect("gallery is not empty");
        let own = gallery.get(subject).map(|_| gallery.score(&e, subject)).transpose()?;
        let recognized = match rule {
            RecognitionRule::ArgmaxCorrect => candidate == subject && sim >= threshold,
            RecognitionRule::ThresholdOnly => own.is_some_and(|s| s >= threshold),
        };
        events.push(VerificationEvent {
            frame_index: i,
            detected: true,
            candidate_identity: Some(candidate.to_string()),
            similarity: Some(sim),
            subject_similarity: own,
            recognized,
        });
    }
    Ok(events)
}

/// Recognized frames over detected frames.
pub fn recognition_rate(events: &[VerificationEvent]) -> Result<f64> {
    let detected = events.iter().filter(|e| e.detected).count();
    if detected == 0 {
        return Err(Error::NoDetections);
    }
    let recognized = events.iter().filter(|e| e.detected && e.recognized).count();
    Ok(recognized as f64 / detected as f64)
}

/// Sliding-window identification rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistenceConfig {
    pub window: usize,
    pub hits_required: usize,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        PersistenceConfig {
            window: 10,
            hits_required: 7,
        }
    }
}

impl PersistenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hits_required == 0 || self.hits_required > self.window {
            return Err(Error::InvalidConfig(format!(
                "persistence needs 0 < hits_required <= window, got {} of {}",
                self.hits_required, self.window
            )));
        }
        Ok(())
    }
}

/// True when some run of `window` consecutive detected frames holds at
/// least `hits_required` recognitions. Undetected frames are skipped; a
/// stream with fewer detected frames than `window` is one window.
pub fn persistence_detection(events: &[VerificationEvent], config: &PersistenceConfig) -> Result<bool> {
    config.validate()?;
    let hits: Vec<bool> = events.iter().filter(|e| e.detected).map(|e| e.recognized).collect();
    if hits.len() < config.window {
        return Ok(hits.iter().filter(|h| **h).count() >= config.hits_required);
    }
    let mut count = hits[..config.window].iter().filter(|h| **h).count();
    if count >= config.hits_required {
        return Ok(true);
    }
    for i in config.window..hits.len() {
        count += usize::from(hits[i]);
        count -= usize::from(hits[i - config.window]);
        if count >= config.hits_required {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Stream-level metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub frames: usize,
    pub detected: usize,
    pub recognized: usize,
    pub recognition_rate: Option<f64>,
    pub identified: bool,
    pub threshold: f64,
    pub persistence: PersistenceConfig,
}

pub fn summarize_stream(
    events: &[VerificationEvent],
    threshold: f64,
    persistence: &PersistenceConfig,
) -> Result<StreamSummary> {
    Ok(StreamSummary {
        frames: events.len(),
        detected: events.iter().filter(|e| e.detected).count(),
        recognized: events.iter().filter(|e| e.recognized).count(),
        recognition_rate: recognition_rate(events).ok(),
        identified: persistence_detection(events, persistence)?,
        threshold,
        persistence: *persistence,
    })
}

pub fn write_events_csv(path: &Path, events: &[VerificationEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let map = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record([
        "frame_index",
        "detected",
        "candidate_identity",
        "similarity",
        "subject_similarity",
        "recognized",
    ])
    .map_err(map)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in events {
        w.write_record([
            e.frame_index.to_string(),
            e.detected.to_string(),
            e.candidate_identity.clone().unwrap_or_default(),
            opt(e.similarity),
            opt(e.subject_similarity),
            e.recognized.to_string(),
        ])
        .map_err(map)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
