mod common;

use advmask_core::embedding::{embed, GalleryMode};
use advmask_core::eval::{
    calibrate_threshold, control_conditions, eval_similarity, false_accept_rate, persistence_detection,
    recognition_rate, simulate_stream, threshold_for_far, transferability_matrix, MaskCondition,
    PassThroughDetector, PersistenceConfig, RecognitionRule, TransferTarget, VerificationEvent,
};
use advmask_core::renderer::{render, AugmentationConfig, AugmentationParams, MaskTexture};
use advmask_core::{rng, synth, Error};
use proptest::prelude::*;

#[test]
fn clean_probes_match_their_own_singleton_gallery() {
    let faces = common::faces(3, 1, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let report = eval_similarity(
        &MaskCondition::clean(),
        &faces,
        model.as_ref(),
        &g,
        &mut rng::seeded(0),
        &AugmentationConfig::default(),
    )
    .unwrap();
    assert_eq!(report.records.len(), 3);
    assert!(report.records.iter().all(|r| (r.cosine - 1.0).abs() < 1e-12));
}

#[test]
fn random_condition_is_reproducible() {
    let faces = common::faces(3, 2, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let run = |seed| {
        let c = MaskCondition::with_texture("random", MaskTexture::random(common::support(), &mut rng::seeded(seed)));
        eval_similarity(&c, &faces, model.as_ref(), &g, &mut rng::seeded(seed), &AugmentationConfig::default()).unwrap()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn control_conditions_are_the_five_baselines() {
    let male = &common::faces(1, 1, 8)[0];
    let female = &common::faces(2, 1, 8)[1];
    let names: Vec<String> = control_conditions(&common::support(), male, female, &mut rng::seeded(0))
        .unwrap()
        .into_iter()
        .map(|c| c.name)
        .collect();
    assert_eq!(names, ["clean", "blue", "random", "male_face", "female_face"]);
}

#[test]
fn one_by_one_transfer_equals_eval() {
    let faces = common::faces(3, 2, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let mask = MaskCondition::with_texture("m", MaskTexture::random(common::support(), &mut rng::seeded(1)));
    let aug = AugmentationConfig::identity();
    let target = TransferTarget {
        label: "toy",
        model: model.as_ref(),
        gallery: &g,
        probes: &faces,
    };
    let (matrix, _) =
        transferability_matrix(std::slice::from_ref(&mask), &[target], &mut rng::seeded(0), &aug).unwrap();
    let single = eval_similarity(&mask, &faces, model.as_ref(), &g, &mut rng::seeded(9), &aug).unwrap();
    assert!((matrix.get("m", "toy").unwrap() - single.mean().unwrap()).abs() < 1e-12);
}

#[test]
fn calibration_examples() {
    let scores: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
    assert_eq!(threshold_for_far(&scores, 0.01).unwrap(), 0.99);
    let t = threshold_for_far(&[0.5; 20], 0.01).unwrap();
    assert!(t > 0.5 && t == 0.5f64.next_up());
    assert!(matches!(threshold_for_far(&[], 0.01), Err(Error::EmptyProbeSet)));
}

#[test]
fn calibration_on_masked_impostors() {
    let faces = common::faces(4, 2, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let blue = MaskTexture::uniform(common::support(), [0.3, 0.5, 0.7]);
    let probes: Vec<_> = faces
        .iter()
        .map(|f| {
            let mut s = f.sample.clone();
            s.image = render(&blue, f, &AugmentationParams::identity()).unwrap();
            s
        })
        .collect();
    let cal = calibrate_threshold(model.as_ref(), &g, &probes, 0.05).unwrap();
    assert_eq!(cal.impostor_pairs, 8 * 3);
    assert!(cal.far <= 0.05);
}

fn event(i: usize, detected: bool, recognized: bool) -> VerificationEvent {
    VerificationEvent {
        recognized: detected && recognized,
        ..if detected {
            VerificationEvent {
                frame_index: i,
                detected: true,
                candidate_identity: Some("s".into()),
                similarity: Some(0.5),
                subject_similarity: Some(0.5),
                recognized: false,
            }
        } else {
            VerificationEvent::undetected(i)
        }
    }
}

#[test]
fn blank_frames_are_undetected() {
    let faces = common::faces(2, 1, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let frames = vec![synth::blank_frame(); 3];
    let events = simulate_stream(
        &frames,
        &PassThroughDetector::synthetic(),
        model.as_ref(),
        &g,
        "id0000",
        0.0,
        RecognitionRule::ArgmaxCorrect,
    )
    .unwrap();
    assert!(events.iter().all(|e| !e.detected));
    assert!(matches!(recognition_rate(&events), Err(Error::NoDetections)));
}

#[test]
fn alternating_stream_matches_a_manual_pipeline() {
    let faces = common::faces(3, 10, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces[..]);
    let subject = faces[0].identity().to_string();
    let frames: Vec<_> = (0..20)
        .map(|i| if i % 2 == 0 { faces[i / 2].image().clone() } else { faces[10 + i / 2].image().clone() })
        .collect();
    let t = 0.5;
    let events = simulate_stream(
        &frames,
        &PassThroughDetector::synthetic(),
        model.as_ref(),
        &g,
        &subject,
        t,
        RecognitionRule::ArgmaxCorrect,
    )
    .unwrap();
    for (frame, ev) in frames.iter().zip(&events) {
        let e = embed(model.as_ref(), frame).unwrap();
        let scores: Vec<(&str, f64)> = g.iter().map(|(id, v)| (id, dot(&e, v) / norm(&e))).collect();
        let (best, sim) = scores.iter().cloned().fold(("", f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!(ev.detected);
        assert_eq!(ev.candidate_identity.as_deref(), Some(best));
        assert!((ev.similarity.unwrap() - sim).abs() < 1e-12);
        assert_eq!(ev.recognized, best == subject && sim >= t);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[test]
fn threshold_only_stream_rate_matches_eval_records() {
    let faces = common::faces(3, 3, 2);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let mask = MaskCondition::with_texture("m", MaskTexture::random(common::support(), &mut rng::seeded(1)));
    let report = eval_similarity(&mask, &faces[..3], model.as_ref(), &g, &mut rng::seeded(0), &AugmentationConfig::identity()).unwrap();
    let frames: Vec<_> = faces[..3]
        .iter()
        .map(|f| render(mask.texture.as_ref().unwrap(), f, &AugmentationParams::identity()).unwrap())
        .collect();
    let t = report.records[1].cosine;
    let events = simulate_stream(
        &frames,
        &PassThroughDetector::synthetic(),
        model.as_ref(),
        &g,
        faces[0].identity(),
        t,
        RecognitionRule::ThresholdOnly,
    )
    .unwrap();
    let expected = report.records.iter().filter(|r| r.cosine >= t).count() as f64 / 3.0;
    assert!((recognition_rate(&events).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn mask_augmented_gallery_differs_from_plain() {
    let faces = common::faces(2, 2, 2);
    let model = common::toy("toy", 1);
    let plain = common::plain_gallery(model.as_ref(), &faces);
    let blue = MaskTexture::uniform(common::support(), [0.3, 0.5, 0.7]);
    let aug = advmask_core::embedding::build_gallery(
        model.as_ref(),
        &advmask_core::embedding::group_by_identity(&faces),
        GalleryMode::MaskAugmented,
        &[blue],
        &mut rng::seeded(0),
    )
    .unwrap();
    assert_ne!(plain.get("id0000"), aug.get("id0000"));
}

fn window_oracle(hits: &[bool], window: usize, need: usize) -> bool {
    if hits.len() < window {
        return hits.iter().filter(|h| **h).count() >= need;
    }
    (0..=hits.len() - window).any(|s| hits[s..s + window].iter().filter(|h| **h).count() >= need)
}

fn events_strategy() -> impl Strategy<Value = Vec<(bool, bool)>> {
    prop::collection::vec((prop::bool::weighted(0.85), any::<bool>()), 0..40)
}

proptest! {
    #[test]
    fn persistence_matches_window_enumeration(log in events_strategy(), window in 1usize..12, need in 1usize..12) {
        prop_assume!(need <= window);
        let events: Vec<_> = log.iter().enumerate().map(|(i, (d, r))| event(i, *d, *r)).collect();
        let hits: Vec<bool> = events.iter().filter(|e| e.detected).map(|e| e.recognized).collect();
        let cfg = PersistenceConfig { window, hits_required: need };
        prop_assert_eq!(persistence_detection(&events, &cfg).unwrap(), window_oracle(&hits, window, need));
    }

    #[test]
    fn recognizing_more_frames_never_hurts(log in events_strategy(), flip in any::<prop::sample::Index>()) {
        prop_assume!(log.iter().any(|(d, _)| *d));
        let events: Vec<_> = log.iter().enumerate().map(|(i, (d, r))| event(i, *d, *r)).collect();
        let mut better = events.clone();
        let detected: Vec<usize> = (0..events.len()).filter(|&i| events[i].detected).collect();
        better[detected[flip.index(detected.len())]].recognized = true;
        let cfg = PersistenceConfig::default();
        prop_assert!(!persistence_detection(&events, &cfg).unwrap() || persistence_detection(&better, &cfg).unwrap());
        let rr = recognition_rate(&events).unwrap();
        prop_assert!((0.0..=1.0).contains(&rr));
        prop_assert!(recognition_rate(&better).unwrap() >= rr);

        let mut extra = events.clone();
        extra.push(VerificationEvent::undetected(events.len()));
        let numerator = |ev: &[VerificationEvent]| ev.iter().filter(|e| e.recognized).count();
        prop_assert_eq!(numerator(&extra), numerator(&events));
    }

    #[test]
    fn calibration_is_tight_and_monotone(
        scores in prop::collection::vec(0.0f64..1.0, 1..200),
        a in 0.001f64..0.5,
        b in 0.001f64..0.5,
    ) {
        let t = threshold_for_far(&scores, a).unwrap();
        prop_assert!(false_accept_rate(&scores, t) <= a);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(threshold_for_far(&scores, lo).unwrap() >= threshold_for_far(&scores, hi).unwrap());
    }
}
