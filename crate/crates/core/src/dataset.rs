//! Face collections on disk or generated on the fly.
//!
//! A directory dataset is laid out as `root/<identity>/<image files>`. An
//! optional split file lists the identities to use, one per line; blank
//! lines and lines starting with `#` are ignored.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{load_face_png, to_u8, Image};
use crate::renderer::{FaceSample, LandmarkBackend, PreparedFace, ReconstructionBackend};
use crate::synth::{self, SyntheticConfig};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Directory {
        root: PathBuf,
        #[serde(default)]
        split: Option<PathBuf>,
    },
    Synthetic {
        #[serde(flatten)]
        config: SyntheticConfig,
        /// Index of the first image per identity.
        #[serde(default)]
        start: usize,
    },
}

/// Identity names from a split file.
pub fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::AssetMissing(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = std::fs::read_dir(dir)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::AssetMissing(dir.to_path_buf())
            } else {
                Error::io(dir, e)
            }
        })?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

/// `(identity, image path)` pairs of a directory dataset, sorted.
pub fn list_directory(root: &Path, split: Option<&Path>) -> Result<Vec<(String, PathBuf)>> {
    let wanted: Option<BTreeSet<String>> = split.map(read_split).transpose()?.map(|v| v.into_iter().collect());
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let identity = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if wanted.as_ref().is_some_and(|w| !w.contains(&identity)) {
            continue;
        }
        seen.insert(identity.clone());
        for file in sorted_entries(&dir)? {
            if file.is_file() && is_image(&file) {
                out.push((identity.clone(), file));
            }
        }
    }
    if let Some(w) = wanted {
        if let Some(missing) = w.difference(&seen).next() {
            return Err(Error::MissingIdentity(missing.clone()));
        }
    }
    Ok(out)
}

/// Loads faces and their landmarks. Synthetic sources carry ground-truth
/// landmarks; directory images go through `landmarks`.
pub fn load_faces(source: &DatasetSource, landmarks: &dyn LandmarkBackend) -> Result<Vec<FaceSample>> {
    match source {
        DatasetSource::Synthetic { config, start } => {
            synth::dataset_range(config, *start, config.images_per_identity)
        }
        DatasetSource::Directory { root, split } => list_directory(root, split.as_deref())?
            .par_iter()
            .enumerate()
            .map(|(i, (identity, path))| {
                let image = load_face_png(path)?;
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                let mut s = FaceSample::detect(format!("{identity}/{stem}"), identity.clone(), image, landmarks)
                    .map_err(|e| Error::at(i, e))?;
                s.source = Some(path.clone());
                Ok(s)
            })
            .collect(),
    }
}

/// Builds the UV correspondence of every face.
pub fn prepare_all(samples: Vec<FaceSample>, backend: &dyn ReconstructionBackend) -> Result<Vec<PreparedFace>> {
    samples
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| PreparedFace::prepare(s, backend).map_err(|e| Error::at(i, e)))
        .collect()
}

/// Content hash of a face collection: keys, identities and 8-bit pixels.
pub fn fingerprint(samples: &[FaceSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.key.as_bytes());
        h.update([0]);
        h.update(s.identity.as_bytes());
        h.update([0]);
        h.update(s.image.iter().map(|v| to_u8(*v)).collect::<Vec<u8>>());
    }
    hex::encode(h.finalize())
}

/// Frames of a stream directory, ordered by the number in each file name
/// (falling back to the name itself).
pub fn load_frames(dir: &Path) -> Result<Vec<(PathBuf, Image)>> {
    let mut files: Vec<PathBuf> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    let number = |p: &PathBuf| -> Option<u64> {
        let stem = p.file_stem()?.to_string_lossy().into_owned();
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        digits.parse().ok()
    };
    files.sort_by(|a, b| number(a).cmp(&number(b)).then_with(|| a.cmp(b)));
    files
        .into_iter()
        .map(|p| load_face_png(&p).map(|img| (p, img)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::save_png;
    use crate::renderer::SyntheticLandmarks;

    fn write_tree(root: &Path) {
        let cfg = SyntheticConfig {
            identities: 3,
            images_per_identity: 2,
            seed: 2,
            noise: 0.0,
        };
        for s in synth::dataset(&cfg).unwrap() {
            let dir = root.join(&s.identity);
            std::fs::create_dir_all(&dir).unwrap();
            let stem = s.key.split('/').nth(1).unwrap();
            save_png(&s.image, &dir.join(format!("{stem}.png"))).unwrap();
        }
        std::fs::write(root.join("notes.txt"), "not an identity").unwrap();
    }

    #[test]
    fn directory_layout_and_split() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path());
        let all = list_directory(dir.path(), None).unwrap();
        assert_eq!(all.len(), 6);
        let split = dir.path().join("test.txt");
        std::fs::write(&split, "# held out\nid0001\n\nid0002\n").unwrap();
        let some = list_directory(dir.path(), Some(&split)).unwrap();
        assert_eq!(some.len(), 4);
        assert!(some.iter().all(|(id, _)| id != "id0000"));
        std::fs::write(&split, "id0009\n").unwrap();
        assert!(matches!(
            list_directory(dir.path(), Some(&split)),
            Err(Error::MissingIdentity(_))
        ));
    }

    #[test]
    fn directory_faces_get_detected_landmarks() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path());
        let src = DatasetSource::Directory {
            root: dir.path().to_path_buf(),
            split: None,
        };
        let faces = load_faces(&src, &SyntheticLandmarks).unwrap();
        assert_eq!(faces.len(), 6);
        assert_eq!(faces[0].key, "id0000/000");
        assert!(faces[0].source.as_ref().unwrap().ends_with("id0000/000.png"));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let cfg = SyntheticConfig {
            identities: 2,
            images_per_identity: 1,
            seed: 2,
            noise: 0.0,
        };
        let a = synth::dataset(&cfg).unwrap();
        let mut b = a.clone();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        b[1].image[[50, 50, 0]] = 1.0 - b[1].image[[50, 50, 0]];
        assert_ne!(fingerprint(&a), fingerprint(&b));
    }

    #[test]
    fn frames_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        let img = synth::blank_frame();
        for name in ["frame10.png", "frame2.png", "frame1.png"] {
            save_png(&img, &dir.path().join(name)).unwrap();
        }
        let names: Vec<String> = load_frames(dir.path())
            .unwrap()
            .into_iter()
            .map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["frame1.png", "frame2.png", "frame10.png"]);
    }
}
