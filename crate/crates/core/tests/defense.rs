mod common;

use advmask_core::defense::{
    generate_adv_training_set, substitute_mask, ApplyWhen, SanitizationPolicy, TrainingSetManifest, ORIGINAL,
};
use advmask_core::embedding::embed;
use advmask_core::imaging::load_png;
use advmask_core::optimizer::{optimize_universal, Member, OptimizerConfig};
use advmask_core::renderer::{
    render, render_traced, AugmentationConfig, AugmentationParams, EllipsoidBackend, MaskTexture,
};
use advmask_core::{rng, Error};
use tempfile::TempDir;

#[test]
fn substitution_is_idempotent_and_local() {
    let faces = common::faces(2, 1, 4);
    let policy = SanitizationPolicy::default();
    let worn = MaskTexture::random(common::support(), &mut rng::seeded(2));
    for f in &faces {
        let masked = render(&worn, f, &AugmentationParams::identity()).unwrap();
        let once = substitute_mask(&masked, &f.sample.landmarks, &policy, &EllipsoidBackend).unwrap();
        let twice = substitute_mask(&once, &f.sample.landmarks, &policy, &EllipsoidBackend).unwrap();
        assert_eq!(once, twice);

        let (_, jac) = render_traced(&policy.replacement, f, &AugmentationParams::identity()).unwrap();
        let region = jac.projected_support((112, 112));
        for ((r, c), inside) in region.indexed_iter() {
            if !inside {
                for ch in 0..3 {
                    assert_eq!(once[[r, c, ch]], masked[[r, c, ch]]);
                }
            }
        }
    }
}

#[test]
fn mask_detected_without_a_classifier_is_unavailable() {
    let f = &common::faces(1, 1, 4)[0];
    let policy = SanitizationPolicy {
        apply_when: ApplyWhen::MaskDetected,
        ..Default::default()
    };
    let err = substitute_mask(f.image(), &f.sample.landmarks, &policy, &EllipsoidBackend).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable(_)));
}

#[test]
fn sanitizing_an_adversarial_texture_raises_similarity() {
    let faces = common::faces(20, 1, 4);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let cfg = OptimizerConfig {
        max_iterations: 30,
        batch_size: 20,
        seed: 7,
        ensemble: vec!["toy".into()],
        ..Default::default()
    };
    let members = [Member::new(model.as_ref(), &g)];
    let (adv, _) = optimize_universal(&common::white(), &faces, &members, &cfg).unwrap();
    let policy = SanitizationPolicy::default();
    let (mut worn, mut clean) = (0.0, 0.0);
    for f in &faces {
        let masked = render(&adv, f, &AugmentationParams::identity()).unwrap();
        let fixed = substitute_mask(&masked, &f.sample.landmarks, &policy, &EllipsoidBackend).unwrap();
        worn += g.score(&embed(model.as_ref(), &masked).unwrap(), f.identity()).unwrap();
        clean += g.score(&embed(model.as_ref(), &fixed).unwrap(), f.identity()).unwrap();
    }
    assert!(clean > worn, "{clean} vs {worn}");
}

#[test]
fn training_set_counts_and_round_trip() {
    let faces = common::faces(1, 1, 4);
    let masks = vec![
        ("a".to_string(), MaskTexture::random(common::support(), &mut rng::seeded(1))),
        ("b".to_string(), MaskTexture::uniform(common::support(), [0.1, 0.2, 0.3])),
    ];
    let dir = TempDir::new().unwrap();
    let aug = AugmentationConfig::default();
    let manifest = generate_adv_training_set(&faces, &masks, dir.path(), 7, &aug).unwrap();
    assert_eq!(manifest.entries.len(), 3);
    assert_eq!(manifest.entries.iter().filter(|e| e.mask_name == ORIGINAL).count(), 1);
    for e in &manifest.entries {
        assert_eq!(load_png(&dir.path().join(&e.output_path)).unwrap().dim(), (112, 112, 3));
    }
    let csv = dir.path().join("manifest.csv");
    manifest.write_csv(&csv).unwrap();
    assert_eq!(TrainingSetManifest::read_csv(&csv).unwrap(), manifest.entries);

    let again = TempDir::new().unwrap();
    let second = generate_adv_training_set(&faces, &masks, again.path(), 7, &aug).unwrap();
    let csv2 = again.path().join("manifest.csv");
    second.write_csv(&csv2).unwrap();
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());
    for e in &manifest.entries {
        assert_eq!(
            std::fs::read(dir.path().join(&e.output_path)).unwrap(),
            std::fs::read(again.path().join(&e.output_path)).unwrap()
        );
    }
}

#[test]
fn training_set_needs_masks() {
    let faces = common::faces(1, 1, 4);
    let dir = TempDir::new().unwrap();
    assert!(generate_adv_training_set(&faces, &[], dir.path(), 7, &AugmentationConfig::default()).is_err());
}
