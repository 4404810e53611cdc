mod common;

use advmask_core::embedding::{ConstantEmbedder, GalleryMode, IdentityGallery};
use advmask_core::optimizer::{
    draw_params, loss_sim_normalized, loss_sim_raw, loss_tv, loss_tv_normalized, optimize_targeted,
    optimize_universal, probe_cosines, sim_normalized_with_params, total_loss, LossBreakdown, Member,
    OptimizerConfig,
};
use advmask_core::renderer::{AugmentationConfig, MaskTexture};
use advmask_core::{rng, Error};
use ndarray::Array3;
use proptest::prelude::*;

fn gallery_with(identities: &[&str], value: &[f64]) -> IdentityGallery {
    let mut g = IdentityGallery::new("const", GalleryMode::Plain, value.len());
    for id in identities {
        g.insert(*id, value).unwrap();
    }
    g
}

fn ids(faces: &[advmask_core::renderer::PreparedFace]) -> Vec<&str> {
    let mut v: Vec<&str> = faces.iter().map(|f| f.identity()).collect();
    v.dedup();
    v
}

#[test]
fn constant_embedder_pins_the_raw_loss() {
    let faces = common::faces(2, 1, 1);
    let e = vec![0.6, 0.8, 0.0];
    let g = gallery_with(&ids(&faces), &e);
    let cfg = AugmentationConfig::default();
    let same = ConstantEmbedder::new("const", e.clone());
    let anti = ConstantEmbedder::new("const", e.iter().map(|x| -x).collect());
    let mask = common::white();
    let raw = |m: &ConstantEmbedder| loss_sim_raw(&mask, &faces, m, &g, &mut rng::seeded(0), &cfg).unwrap();
    assert!((raw(&same) - 1.0).abs() < 1e-12);
    assert!((raw(&anti) + 1.0).abs() < 1e-12);

    let members = [Member::new(&same, &g)];
    let n = loss_sim_normalized(&mask, &faces, &members, &mut rng::seeded(0), &cfg).unwrap();
    assert!((n - 1.0).abs() < 1e-12);
    let members = [Member::new(&same, &g), Member::new(&anti, &g)];
    let n = loss_sim_normalized(&mask, &faces, &members, &mut rng::seeded(0), &cfg).unwrap();
    assert!((n - 0.5).abs() < 1e-12);
}

#[test]
fn raw_loss_is_the_batch_average() {
    let faces = common::faces(2, 1, 1);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let cfg = AugmentationConfig::default();
    let mask = MaskTexture::random(common::support(), &mut rng::seeded(3));
    let params = draw_params(2, &mut rng::seeded(8), &cfg).unwrap();
    let c1 = probe_cosines(&mask, &faces[..1], model.as_ref(), &g, &params[..1]).unwrap()[0];
    let c2 = probe_cosines(&mask, &faces[1..], model.as_ref(), &g, &params[1..]).unwrap()[0];
    let raw = loss_sim_raw(&mask, &faces, model.as_ref(), &g, &mut rng::seeded(8), &cfg).unwrap();
    assert!((raw - (c1 + c2) / 2.0).abs() < 1e-12);
}

#[test]
fn ensemble_of_three_is_the_mean_of_singles() {
    let faces = common::faces(3, 2, 1);
    let models = common::toys(&[("a", 1), ("b", 2), ("c", 3)]);
    let galleries: Vec<_> = models.iter().map(|m| common::plain_gallery(m.as_ref(), &faces)).collect();
    let members: Vec<Member<'_>> = models.iter().zip(&galleries).map(|(m, g)| Member::new(m.as_ref(), g)).collect();
    let mask = MaskTexture::random(common::support(), &mut rng::seeded(3));
    let params = draw_params(faces.len(), &mut rng::seeded(4), &AugmentationConfig::default()).unwrap();
    let joint = sim_normalized_with_params(&mask, &faces, &members, &params).unwrap();
    let singles: f64 = members
        .iter()
        .map(|m| sim_normalized_with_params(&mask, &faces, std::slice::from_ref(m), &params).unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((joint - singles).abs() < 1e-9);
}

#[test]
fn total_with_zero_lambda_is_the_similarity_term() {
    let faces = common::faces(2, 1, 1);
    let model = common::toy("toy", 1);
    let g = common::plain_gallery(model.as_ref(), &faces);
    let members = [Member::new(model.as_ref(), &g)];
    let mask = MaskTexture::random(common::support(), &mut rng::seeded(3));
    let cfg = AugmentationConfig::default();
    let t = total_loss(&mask, &faces, &members, 0.0, &mut rng::seeded(2), &cfg).unwrap();
    let s = loss_sim_normalized(&mask, &faces, &members, &mut rng::seeded(2), &cfg).unwrap();
    assert_eq!(t.total, s);
    assert!((LossBreakdown::new(0.5, 0.2, 0.1).total - 0.52).abs() < 1e-12);
}

#[test]
fn tv_examples() {
    assert_eq!(loss_tv(&Array3::from_elem((5, 7, 3), 0.37)), 0.0);
    let patch = Array3::from_shape_vec((2, 2, 1), vec![0.0, 0.2, 0.4, 0.8]).unwrap();
    let expected = 0.20f64.sqrt() + 0.6 + 0.4;
    assert!((loss_tv(&patch) - expected).abs() < 1e-12);
    assert!((expected - 1.4472).abs() < 1e-4);
}

fn small_setup() -> (Vec<advmask_core::renderer::PreparedFace>, std::sync::Arc<dyn advmask_core::embedding::Embedder>) {
    (common::faces(2, 2, 5), common::toy("toy", 1))
}

fn config(iterations: usize) -> OptimizerConfig {
    OptimizerConfig {
        max_iterations: iterations,
        batch_size: 4,
        seed: 3,
        ensemble: vec!["toy".into()],
        ..Default::default()
    }
}

#[test]
fn zero_budget_returns_the_initial_mask() {
    let (faces, model) = small_setup();
    let g = common::plain_gallery(model.as_ref(), &faces);
    let members = [Member::new(model.as_ref(), &g)];
    let initial = MaskTexture::random(common::support(), &mut rng::seeded(1));
    let (mask, history) = optimize_universal(&initial, &faces, &members, &config(0)).unwrap();
    assert_eq!(mask.pixels(), initial.pixels());
    assert!(history.records.is_empty());
    let (mask, _) = optimize_targeted(&initial, &faces[..1], &members, &config(0)).unwrap();
    assert_eq!(mask.pixels(), initial.pixels());
}

#[test]
fn optimization_is_deterministic_and_stays_in_range() {
    let (faces, model) = small_setup();
    let g = common::plain_gallery(model.as_ref(), &faces);
    let members = [Member::new(model.as_ref(), &g)];
    let run = || optimize_universal(&common::white(), &faces, &members, &config(4)).unwrap();
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a.pixels(), b.pixels());
    assert_eq!(ha.losses(), hb.losses());
    assert!(ha.is_consistent());
    assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    let iters: Vec<usize> = ha.records.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![0, 1, 2, 3]);
}

#[test]
fn targeted_rejects_mixed_identities() {
    let (faces, model) = small_setup();
    let g = common::plain_gallery(model.as_ref(), &faces);
    let members = [Member::new(model.as_ref(), &g)];
    let err = optimize_targeted(&common::white(), &faces, &members, &config(1)).unwrap_err();
    assert!(matches!(err, Error::MixedIdentities(..)));
}

proptest! {
    #[test]
    fn tv_is_shift_invariant_and_normalized_in_unit_range(
        h in 1usize..8, w in 1usize..8, seed in any::<u64>(), shift in -0.5f64..0.5
    ) {
        use rand::Rng as _;
        let mut r = rng::seeded(seed);
        let m = Array3::from_shape_fn((h, w, 3), |_| r.random::<f64>());
        let shifted = m.mapv(|v| v + shift);
        prop_assert!((loss_tv(&m) - loss_tv(&shifted)).abs() < 1e-9);
        let n = loss_tv_normalized(&m);
        prop_assert!((0.0..=1.0).contains(&n));
    }
}
