//! Trained classifiers of every kind behind one prediction interface.

use std::fmt;
use std::str::FromStr;

use crate::classical::{extract_features_batch, KnnModel, LogRegModel};
use crate::error::{Error, Result};
use crate::layers::{Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, Relu, Sequential};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Mlp,
    Cnn,
    LogReg,
    Knn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mlp, ModelKind::Cnn, ModelKind::LogReg, ModelKind::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
            ModelKind::LogReg => "logreg",
            ModelKind::Knn => "knn",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?} (mlp, cnn, logreg, knn)")))
    }
}

/// What the model consumes: raw pixels or the engineered feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputRepr {
    Pixels,
    Features,
}

impl InputRepr {
    pub fn as_str(self) -> &'static str {
        match self {
            InputRepr::Pixels => "pixels",
            InputRepr::Features => "features",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(InputRepr::Pixels),
            1 => Some(InputRepr::Features),
            _ => None,
        }
    }
}

impl FromStr for InputRepr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(InputRepr::Pixels),
            "features" => Ok(InputRepr::Features),
            _ => Err(Error::Config(format!("unknown input representation {s:?} (pixels, features)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelBody<T> {
    Network(Sequential<T>),
    LogReg(LogRegModel<T>),
    Knn(KnnModel<T>),
}

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMetadata {
    pub seed: u64,
    pub config_hash: u64,
    /// Named final metrics, e.g. `("test_accuracy", 0.9)`.
    pub metrics: Vec<(String, f64)>,
}

impl ModelMetadata {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn set_metric(&mut self, name: &str, value: f64) {
        match self.metrics.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = value,
            None => self.metrics.push((name.to_string(), value)),
        }
    }
}

/// Images are `[3 × H × W]`; predictions run in chunks of this many.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct Classifier<T> {
    pub kind: ModelKind,
    pub image_shape: [usize; 3],
    pub repr: InputRepr,
    pub class_names: Vec<String>,
    pub body: ModelBody<T>,
    pub metadata: ModelMetadata,
}

/// `D → hidden → classes` with a ReLU between.
pub fn mlp_network<T: Scalar>(rng: &mut Rng, inputs: usize, hidden: usize, classes: usize) -> Result<Sequential<T>> {
    Ok(Sequential::new(vec![
        Layer::Dense(Dense::he(rng, inputs, hidden)?),
        Layer::Relu(Relu::new()),
        Layer::Dense(Dense::he(rng, hidden, classes)?),
    ]))
}

/// Two conv(5×5)/ReLU/max-pool(2×2) blocks with 32 and 64 filters, then
/// dense 256, ReLU, dropout 0.3 and the class layer.
pub fn cnn_network<T: Scalar>(rng: &mut Rng, image_shape: [usize; 3], classes: usize, dropout_seed: u64) -> Result<Sequential<T>> {
    let [c, _, _] = image_shape;
    let mut layers = vec![
        Layer::Conv2D(Conv2D::he(rng, c, 32, 5)?),
        Layer::Relu(Relu::new()),
        Layer::MaxPool2D(MaxPool2D::new(2, 2)?),
        Layer::Conv2D(Conv2D::he(rng, 32, 64, 5)?),
        Layer::Relu(Relu::new()),
        Layer::MaxPool2D(MaxPool2D::new(2, 2)?),
        Layer::Flatten(Flatten::new()),
    ];
    let flat = Sequential::new(layers.clone()).audit(&image_shape)?[0];
    layers.push(Layer::Dense(Dense::he(rng, flat, 256)?));
    layers.push(Layer::Relu(Relu::new()));
    layers.push(Layer::Dropout(Dropout::new(0.3, dropout_seed)?));
    layers.push(Layer::Dense(Dense::he(rng, 256, classes)?));
    Ok(Sequential::new(layers))
}

impl<T: Scalar> Classifier<T> {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn network(&self) -> Option<&Sequential<T>> {
        match &self.body {
            ModelBody::Network(n) => Some(n),
            _ => None,
        }
    }

    pub fn network_mut(&mut self) -> Option<&mut Sequential<T>> {
        match &mut self.body {
            ModelBody::Network(n) => Some(n),
            _ => None,
        }
    }

    /// Turns images into the batch tensor the body expects.
    pub fn prepare_inputs(&self, images: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if let Some(bad) = images.iter().find(|i| i.shape() != self.image_shape) {
            return Err(Error::Shape(format!(
                "model expects images {:?}, got {:?}",
                self.image_shape,
                bad.shape()
            )));
        }
        match (self.kind, self.repr) {
            (_, InputRepr::Features) => extract_features_batch(images),
            (ModelKind::Cnn, _) => Tensor::stack(images),
            (_, InputRepr::Pixels) => {
                let d: usize = self.image_shape.iter().product();
                Tensor::stack(images)?.into_reshape([images.len(), d])
            }
        }
    }

    /// Class probabilities `[N × classes]`, networks in inference mode.
    pub fn predict_proba(&mut self, images: &[&Tensor<T>]) -> Result<Tensor<T>> {
        if images.is_empty() {
            return Err(Error::Validation("no images to predict".into()));
        }
        let classes = self.num_classes();
        let mut out = Vec::with_capacity(images.len() * classes);
        for chunk in images.chunks(PREDICT_CHUNK) {
            let x = self.prepare_inputs(chunk)?;
            match &mut self.body {
                ModelBody::Network(net) => out.extend_from_slice(net.predict_proba(&x)?.data()),
                ModelBody::LogReg(m) => out.extend_from_slice(m.predict_proba(&x)?.data()),
                ModelBody::Knn(m) => {
                    for p in m.predict_batch(&x)? {
                        out.extend(p.probabilities().into_iter().map(cast::<T>));
                    }
                }
            }
        }
        Tensor::from_vec([images.len(), classes], out)
    }

    /// Argmax class per image. KNN uses its own vote tie rules.
    pub fn predict(&mut self, images: &[&Tensor<T>]) -> Result<Vec<usize>> {
        if let ModelBody::Knn(m) = &self.body {
            let x = self.prepare_inputs(images)?;
            return Ok(m.predict_batch(&x)?.into_iter().map(|p| p.class).collect());
        }
        Ok(self.predict_proba(images)?.argmax_rows())
    }
}
