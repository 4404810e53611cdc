use std::path::Path;
use std::sync::Arc;

use advmask_core::dataset::{load_frames, DatasetSource};
use advmask_core::defense::{
    generate_adv_training_set, substitute_mask, ManifestEntry, SanitizationPolicy, TrainingSetManifest,
};
use advmask_core::digest;
use advmask_core::embedding::{embed, Embedder, GalleryMode, IdentityGallery, ModelKind};
use advmask_core::eval::{
    calibrate_threshold, eval_similarity, plot, simulate_stream, summarize_stream, threshold_for_far,
    transferability_matrix, false_accept_rate, write_events_csv, Calibration, MaskCondition,
    PassThroughDetector, SimilarityReport, TransferMatrix, TransferTarget,
};
use advmask_core::imaging::{save_png, Image};
use advmask_core::optimizer::{
    optimize_targeted, optimize_universal, save_checkpoint, AttackMode, Member,
};
use advmask_core::renderer::{
    render, sample_augmentation, AugmentationParams, FaceSample, MaskTexture, PreparedFace,
};
use advmask_core::{rng, synth, Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{DefendAction, FrameSource, NamedMask};
use crate::context::Context;

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MATRIX_FILE: &str = "matrix.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const THRESHOLD_FILE: &str = "threshold.json";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const BOX_PLOT_FILE: &str = "similarity.png";
pub const HEATMAP_FILE: &str = "transfer.png";

macro_rules! section {
    ($ctx:expr, $name:ident) => {
        $ctx.config.section(&$ctx.config.$name, stringify!($name))?.clone()
    };
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn models(ctx: &mut Context, names: &[String]) -> Result<Vec<Arc<dyn Embedder>>> {
    let names = if names.is_empty() { ctx.model_names() } else { names.to_vec() };
    if names.is_empty() {
        return Err(Error::InvalidConfig("no models configured".into()));
    }
    names.iter().map(|n| ctx.model(n)).collect()
}

pub fn train(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, train);
    let mut opt = section.optimizer.clone();
    opt.seed = ctx.seed();
    if opt.ensemble.is_empty() {
        opt.ensemble = ctx.model_names();
    }
    let faces = ctx.faces(&section.dataset)?;
    let enroll = section.enroll.clone().unwrap_or_else(|| section.dataset.clone());
    let models = models(ctx, &opt.ensemble)?;
    let galleries = models
        .iter()
        .map(|m| ctx.gallery(m.as_ref(), &enroll, GalleryMode::Plain))
        .collect::<Result<Vec<_>>>()?;
    let members: Vec<Member<'_>> = models
        .iter()
        .zip(&galleries)
        .map(|(m, g)| Member::new(m.as_ref(), g))
        .collect();
    let initial = match &section.init {
        Some(p) => crate::context::load_mask_file(p, ctx.support())?,
        None => MaskTexture::uniform(ctx.support().clone(), [1.0; 3]),
    };
    let (mask, history) = match opt.mode {
        AttackMode::Universal => optimize_universal(&initial, &faces, &members, &opt)?,
        AttackMode::Targeted => {
            let id = section.identity.as_deref().ok_or_else(|| {
                Error::InvalidConfig("targeted training needs `identity` in [train]".into())
            })?;
            let own: Vec<PreparedFace> = faces.iter().filter(|f| f.identity() == id).cloned().collect();
            if own.is_empty() {
                return Err(Error::EmptyIdentity(id.to_string()));
            }
            optimize_targeted(&initial, &own, &members, &opt)?
        }
    };
    let fp = ctx.fingerprint(&section.dataset)?;
    let path = save_checkpoint(&ctx.out, &history, &fp)?;
    let _ = mask;
    Ok(json!({
        "mask": path,
        "iterations": history.records.len(),
        "first": history.first(),
        "last": history.last(),
    }))
}

fn mask_conditions(ctx: &Context, masks: &[NamedMask]) -> Result<Vec<MaskCondition>> {
    masks
        .iter()
        .map(|m| Ok(MaskCondition::with_texture(m.name.clone(), ctx.load_mask(m)?)))
        .collect()
}

pub fn eval(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, eval);
    let probes = ctx.faces(&section.probe)?;
    let enroll = section.enroll.clone().unwrap_or_else(|| section.probe.clone());
    let mut conditions = ctx.conditions(&section.conditions, section.control_faces.as_ref())?;
    conditions.extend(mask_conditions(ctx, &section.masks)?);
    let mut reports = Vec::new();
    for model in models(ctx, &section.models)? {
        let gallery = ctx.gallery(model.as_ref(), &enroll, section.gallery_mode)?;
        for c in &conditions {
            let mut r = rng::substream(ctx.seed(), &format!("eval/{}/{}", model.info().name, c.name));
            reports.push(eval_similarity(c, &probes, model.as_ref(), &gallery, &mut r, &section.augmentation)?);
        }
    }
    let report = SimilarityReport::merge(reports);
    report.write_csv(&ctx.out.join(REPORT_FILE))?;
    let summary = json!({
        "gallery_mode": section.gallery_mode,
        "summaries": report.summaries,
    });
    write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    plot::box_plot(&report.summaries, &ctx.out.join(BOX_PLOT_FILE))?;
    Ok(summary)
}

pub fn transfer(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, transfer);
    let mut rows = ctx.conditions(&section.conditions, section.control_faces.as_ref())?;
    rows.extend(mask_conditions(ctx, &section.masks)?);
    if rows.is_empty() || section.targets.is_empty() {
        return Err(Error::InvalidConfig("transfer needs masks and targets".into()));
    }
    let mut columns = Vec::new();
    for t in &section.targets {
        let model = ctx.model(&t.model)?;
        let probes = ctx.faces(&t.probe)?;
        let enroll = t.enroll.clone().unwrap_or_else(|| t.probe.clone());
        let gallery = ctx.gallery(model.as_ref(), &enroll, section.gallery_mode)?;
        let label = t.label.clone().unwrap_or_else(|| format!("{}@{}", t.model, t.probe));
        columns.push((label, model, gallery, probes));
    }
    let targets: Vec<TransferTarget<'_>> = columns
        .iter()
        .map(|(label, model, gallery, probes)| TransferTarget {
            label,
            model: model.as_ref(),
            gallery,
            probes,
        })
        .collect();
    let mut r = rng::substream(ctx.seed(), "transfer");
    let (matrix, report) = transferability_matrix(&rows, &targets, &mut r, &section.augmentation)?;
    report.write_csv(&ctx.out.join(REPORT_FILE))?;
    matrix.write_csv(&ctx.out.join(MATRIX_FILE))?;
    plot::heatmap(&matrix, &ctx.out.join(HEATMAP_FILE))?;
    let summary = json!({ "matrix": matrix, "summaries": report.summaries });
    write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Numbers in a text or CSV file: every field that parses as a float.
fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::AssetMissing(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    Ok(text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter_map(|t| t.trim().parse::<f64>().ok())
        .collect())
}

pub fn calibrate(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, calibrate);
    let calibration = if let Some(path) = &section.scores {
        let scores = read_scores(path)?;
        let threshold = threshold_for_far(&scores, section.far_target)?;
        Calibration {
            model: path.display().to_string(),
            threshold,
            far_target: section.far_target,
            far: false_accept_rate(&scores, threshold),
            impostor_pairs: scores.len(),
        }
    } else {
        let need = |v: &Option<String>, what: &str| {
            v.clone()
                .ok_or_else(|| Error::InvalidConfig(format!("[calibrate] needs `{what}` or `scores`")))
        };
        let model = ctx.model(&need(&section.model, "model")?)?;
        let probe_key = need(&section.probe, "probe")?;
        let enroll = section.enroll.clone().unwrap_or_else(|| probe_key.clone());
        let gallery = ctx.gallery(model.as_ref(), &enroll, section.gallery_mode)?;
        let faces = ctx.faces(&probe_key)?;
        let masks: Vec<(String, MaskTexture)> = section
            .masks
            .iter()
            .map(|m| Ok((m.name.clone(), ctx.load_mask(m)?)))
            .collect::<Result<_>>()?;
        let probes = masked_samples(&faces, &masks)?;
        calibrate_threshold(model.as_ref(), &gallery, &probes, section.far_target)?
    };
    write_json(&ctx.out.join(THRESHOLD_FILE), &calibration)?;
    Ok(serde_json::to_value(&calibration).expect("serializable"))
}

/// One sample per (face, mask), rendered as placed; the faces themselves
/// when no masks are given.
fn masked_samples(faces: &[PreparedFace], masks: &[(String, MaskTexture)]) -> Result<Vec<FaceSample>> {
    if masks.is_empty() {
        return Ok(faces.iter().map(|f| f.sample.clone()).collect());
    }
    let mut out = Vec::with_capacity(faces.len() * masks.len());
    for f in faces {
        for (name, m) in masks {
            let mut s = f.sample.clone();
            s.image = render(m, f, &AugmentationParams::identity())?;
            s.key = format!("{}#{name}", f.key());
            out.push(s);
        }
    }
    Ok(out)
}

fn synthetic_frames(ctx: &mut Context, source: &FrameSource) -> Result<Vec<Image>> {
    let FrameSource::Synthetic {
        dataset,
        identity,
        start,
        count,
        mask,
        blank_every,
    } = source
    else {
        unreachable!("caller matched the synthetic variant")
    };
    let DatasetSource::Synthetic { config, .. } = ctx.config.dataset(dataset)?.clone() else {
        return Err(Error::InvalidConfig(format!(
            "synthetic frames need a synthetic dataset, `{dataset}` is not"
        )));
    };
    let person = synth::identities(&config)
        .into_iter()
        .find(|p| &p.name == identity)
        .ok_or_else(|| Error::MissingIdentity(identity.clone()))?;
    let texture = mask.as_ref().map(|m| ctx.load_mask(m)).transpose()?;
    let mut frames = Vec::with_capacity(*count);
    for i in *start..*start + *count {
        let sample = synth::face(&person, i, config.seed, config.noise)?;
        let image = match &texture {
            Some(t) => {
                let face = PreparedFace::prepare(sample, ctx.reconstruction())?;
                let mut r = rng::substream(ctx.seed(), &format!("stream/{}", face.key()));
                let params = sample_augmentation(&mut r, &Default::default())?;
                render(t, &face, &params)?
            }
            None => sample.image,
        };
        frames.push(image);
        if *blank_every > 0 && (i - start + 1) % blank_every == 0 {
            frames.push(synth::blank_frame());
        }
    }
    Ok(frames)
}

pub fn simulate(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, simulate);
    let threshold = match (section.threshold, &section.threshold_file) {
        (Some(t), None) => t,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|_| Error::AssetMissing(p.clone()))?;
            let cal: Calibration = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: p.clone(),
                message: e.to_string(),
            })?;
            cal.threshold
        }
        _ => {
            return Err(Error::InvalidConfig(
                "[simulate] needs exactly one of `threshold` or `threshold_file`".into(),
            ))
        }
    };
    let model = ctx.model(&section.model)?;
    let gallery = ctx.gallery(model.as_ref(), &section.enroll, section.gallery_mode)?;
    let frames: Vec<Image> = match &section.frames {
        FrameSource::Directory { path } => load_frames(path)?.into_iter().map(|(_, img)| img).collect(),
        synthetic => synthetic_frames(ctx, synthetic)?,
    };
    let detector = PassThroughDetector::new(ctx.landmarks());
    let events = simulate_stream(
        &frames,
        &detector,
        model.as_ref(),
        &gallery,
        &section.subject,
        threshold,
        section.rule,
    )?;
    write_events_csv(&ctx.out.join(EVENTS_FILE), &events)?;
    let summary = summarize_stream(&events, threshold, &section.persistence)?;
    write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    Ok(serde_json::to_value(&summary).expect("serializable"))
}

fn mean_cosine(model: &dyn Embedder, gallery: &IdentityGallery, items: &[(String, Image)]) -> Result<f64> {
    let mut sum = 0.0;
    for (identity, img) in items {
        sum += gallery.score(&embed(model, img)?, identity)?;
    }
    Ok(sum / items.len() as f64)
}

pub fn defend(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, defend);
    let faces = ctx.faces(&section.input)?;
    if faces.is_empty() {
        log::warn!("dataset `{}` has no images; writing an empty manifest", section.input);
    }
    let masks: Vec<(String, MaskTexture)> = section
        .masks
        .iter()
        .map(|m| Ok((m.name.clone(), ctx.load_mask(m)?)))
        .collect::<Result<_>>()?;
    match section.action {
        DefendAction::TrainingSet => {
            let manifest = if faces.is_empty() {
                TrainingSetManifest::default()
            } else {
                generate_adv_training_set(
                    &faces,
                    &masks,
                    &ctx.out.join("training_set"),
                    ctx.seed(),
                    &section.augmentation,
                )?
            };
            manifest.write_csv(&ctx.out.join(MANIFEST_FILE))?;
            let summary = json!({
                "inputs": faces.len(),
                "masks": masks.len(),
                "entries": manifest.entries.len(),
                "failures": manifest.failures,
            });
            write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
            Ok(summary)
        }
        DefendAction::Sanitize => {
            let mut policy = SanitizationPolicy {
                apply_when: section.apply_when,
                ..Default::default()
            };
            if let Some(r) = &section.replacement {
                policy.replacement = ctx.load_mask(r)?;
            }
            let worn: Vec<(String, Option<&MaskTexture>)> = if masks.is_empty() {
                vec![("none".to_string(), None)]
            } else {
                masks.iter().map(|(n, m)| (n.clone(), Some(m))).collect()
            };
            let mut entries = Vec::new();
            let mut before = Vec::new();
            let mut after = Vec::new();
            for f in faces.iter() {
                for (name, mask) in &worn {
                    let image = match mask {
                        Some(m) => render(m, f, &AugmentationParams::identity())?,
                        None => f.image().clone(),
                    };
                    let clean = substitute_mask(&image, &f.sample.landmarks, &policy, ctx.reconstruction())?;
                    let stem = f.key().replace('/', "_");
                    let rel = Path::new("sanitized").join(f.identity()).join(format!("{stem}__{name}.png"));
                    let full = ctx.out.join(&rel);
                    std::fs::create_dir_all(full.parent().expect("has parent")).map_err(|e| Error::Io {
                        path: full.clone(),
                        source: e,
                    })?;
                    save_png(&clean, &full)?;
                    entries.push(ManifestEntry {
                        source_path: f
                            .sample
                            .source
                            .as_ref()
                            .map(|p| p.display().to_string())
                            .unwrap_or_else(|| f.key().to_string()),
                        output_path: rel.display().to_string(),
                        mask_name: name.clone(),
                        identity: f.identity().to_string(),
                        seed: 0,
                    });
                    before.push((f.identity().to_string(), image));
                    after.push((f.identity().to_string(), clean));
                }
            }
            TrainingSetManifest {
                entries,
                failures: Vec::new(),
            }
            .write_csv(&ctx.out.join(MANIFEST_FILE))?;
            let mut summary = json!({ "inputs": faces.len(), "outputs": after.len() });
            if let (Some(ev), false) = (&section.evaluate, after.is_empty()) {
                let model = ctx.model(&ev.model)?;
                let gallery = ctx.gallery(model.as_ref(), &ev.enroll, ev.gallery_mode)?;
                let b = mean_cosine(model.as_ref(), &gallery, &before)?;
                let a = mean_cosine(model.as_ref(), &gallery, &after)?;
                summary["worn_mean_cosine"] = json!(b);
                summary["sanitized_mean_cosine"] = json!(a);
            }
            write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
            Ok(summary)
        }
    }
}

pub fn report(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, report);
    let reports = section
        .reports
        .iter()
        .map(|p| SimilarityReport::read_csv(p))
        .collect::<Result<Vec<_>>>()?;
    let merged = SimilarityReport::merge(reports);
    merged.write_csv(&ctx.out.join(REPORT_FILE))?;
    if !merged.summaries.is_empty() {
        plot::box_plot(&merged.summaries, &ctx.out.join(BOX_PLOT_FILE))?;
    }
    let mut matrices = Vec::new();
    for (i, p) in section.matrices.iter().enumerate() {
        let m = TransferMatrix::read_csv(p)?;
        let name = if section.matrices.len() == 1 {
            HEATMAP_FILE.to_string()
        } else {
            format!("transfer_{i}.png")
        };
        plot::heatmap(&m, &ctx.out.join(name))?;
        matrices.push(m);
    }
    let summary = json!({ "summaries": merged.summaries, "matrices": matrices });
    write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Writes a synthetic collection in the directory layout, with train/test
/// split files.
pub fn synth(ctx: &mut Context) -> Result<Value> {
    let section = section!(ctx, synth);
    let config = synth::SyntheticConfig {
        identities: section.identities,
        images_per_identity: section.images_per_identity,
        seed: ctx.seed(),
        noise: section.noise,
    };
    let samples = synth::dataset(&config)?;
    for s in &samples {
        let dir = ctx.out.join(&s.identity);
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let stem = s.key.rsplit('/').next().unwrap_or(&s.key);
        save_png(&s.image, &dir.join(format!("{stem}.png")))?;
    }
    let names: Vec<String> = (0..section.identities).map(synth::identity_name).collect();
    let (train, test) = names.split_at(section.train_identities.min(names.len()));
    for (file, list) in [("train.txt", train), ("test.txt", test)] {
        let p = ctx.out.join(file);
        let body: String = list.iter().map(|n| format!("{n}\n")).collect();
        std::fs::write(&p, body).map_err(|e| Error::Io { path: p, source: e })?;
    }
    Ok(json!({ "images": samples.len(), "train": train.len(), "test": test.len() }))
}

/// Verifies the checksum of every asset-backed model.
pub fn assets(ctx: &mut Context) -> Result<Value> {
    let dir = digest::asset_dir(
        &ctx.config
            .asset_dir
            .clone()
            .unwrap_or_else(|| "assets".into()),
    );
    let mut status = Vec::new();
    let mut first_error = None;
    for e in ctx.registry_entries() {
        if e.kind != ModelKind::Asset {
            continue;
        }
        let path = dir.join(e.path.as_ref().expect("validated"));
        let expected = e.checksum.clone().expect("validated");
        let state = match digest::sha256_file(&path) {
            Ok(found) if found.eq_ignore_ascii_case(&expected) => "ok".to_string(),
            Ok(found) => {
                first_error.get_or_insert(Error::ChecksumMismatch {
                    path: path.clone(),
                    expected,
                    found,
                });
                "checksum_mismatch".to_string()
            }
            Err(err) => {
                let kind = err.kind().to_string();
                first_error.get_or_insert(err);
                kind
            }
        };
        status.push(json!({ "model": e.name, "path": path, "status": state }));
    }
    let summary = json!({ "asset_dir": dir, "models": status });
    write_json(&ctx.out.join(SUMMARY_FILE), &summary)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
