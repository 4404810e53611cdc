use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};
use crate::imaging::{check_face_shape, Image};

/// Vector-Jacobian product of an embedding w.r.t. its input image.
pub type Pullback<'a> = Box<dyn FnOnce(&[f64]) -> Image + Send + 'a>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub dim: usize,
    /// Backbone depth (number of layers or stages), when known.
    pub depth: Option<usize>,
    /// Training-loss family the backbone came from, e.g. `arcface`.
    pub loss_family: String,
}

/// A face embedding function `f: 112×112×3 → R^N`.
///
/// Implementations must be deterministic and immutable after construction.
pub trait Embedder: Send + Sync {
    fn info(&self) -> &ModelInfo;

    fn embed(&self, image: &Image) -> Result<Vec<f64>>;

    /// Embedding together with its pullback.
    fn embed_with_pullback(&self, image: &Image) -> Result<(Vec<f64>, Pullback<'_>)>;
}

/// Embeds a face image, validating shape and output.
pub fn embed(model: &dyn Embedder, image: &Image) -> Result<Vec<f64>> {
    check_face_shape(image)?;
    let v = model.embed(image)?;
    check_output(model, &v)?;
    Ok(v)
}

pub fn embed_with_pullback<'a>(
    model: &'a dyn Embedder,
    image: &Image,
) -> Result<(Vec<f64>, Pullback<'a>)> {
    check_face_shape(image)?;
    let (v, pb) = model.embed_with_pullback(image)?;
    check_output(model, &v)?;
    Ok((v, pb))
}

fn check_output(model: &dyn Embedder, v: &[f64]) -> Result<()> {
    if v.len() != model.info().dim {
        return Err(Error::ShapeMismatch {
            expected: format!("embedding of length {}", model.info().dim),
            found: format!("length {}", v.len()),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "model `{}` produced a non-finite embedding",
            model.info().name
        )));
    }
    Ok(())
}

/// Embedder backed by a [`Network`].
#[derive(Debug, Clone)]
pub struct NetworkEmbedder {
    info: ModelInfo,
    network: Network,
}

impl NetworkEmbedder {
    pub fn new(network: Network, depth: Option<usize>, loss_family: impl Into<String>) -> Self {
        NetworkEmbedder {
            info: ModelInfo {
                name: network.name().to_string(),
                dim: network.output_dim(),
                depth,
                loss_family: loss_family.into(),
            },
            network,
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }
}

impl Embedder for NetworkEmbedder {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn embed(&self, image: &Image) -> Result<Vec<f64>> {
        self.network.forward(image)
    }

    fn embed_with_pullback(&self, image: &Image) -> Result<(Vec<f64>, Pullback<'_>)> {
        let acts = self.network.forward_traced(image)?;
        let out = acts.output().to_vec();
        let net = &self.network;
        Ok((out, Box::new(move |g: &[f64]| net.backward(&acts, g))))
    }
}

/// Embedder that ignores its input. Useful for pinning loss values.
#[derive(Debug, Clone)]
pub struct ConstantEmbedder {
    info: ModelInfo,
    value: Vec<f64>,
}

impl ConstantEmbedder {
    pub fn new(name: impl Into<String>, value: Vec<f64>) -> Self {
        ConstantEmbedder {
            info: ModelInfo {
                name: name.into(),
                dim: value.len(),
                depth: None,
                loss_family: "constant".into(),
            },
            value,
        }
    }
}

impl Embedder for ConstantEmbedder {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn embed(&self, _image: &Image) -> Result<Vec<f64>> {
        Ok(self.value.clone())
    }

    fn embed_with_pullback(&self, image: &Image) -> Result<(Vec<f64>, Pullback<'_>)> {
        let dim = image.dim();
        Ok((
            self.value.clone(),
            Box::new(move |_g: &[f64]| Image::zeros(dim)),
        ))
    }
}
