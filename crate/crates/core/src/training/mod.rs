//! Training protocols for the four classifiers, evaluation, and the
//! gradient-check harness for small reference networks.
//!
//! Every random choice flows from `TrainConfig::seed` through derived
//! streams: `[1]` initialization, `[2]` batch order (`[2, epoch]` for the
//! CNN), `[3, epoch, sample]` augmentation and `[4]` the dropout seed.
//! Dataset splitting is left to the caller.

mod early_stop;
mod history;

pub use early_stop::{fit, EarlyStopState, FitSummary, Trainee};
pub use history::{EpochRecord, History, CSV_HEADER};

use rayon::prelude::*;

use crate::classical::{extract_features_batch, logreg_train_with, KnnModel, LogRegConfig};
use crate::data::{augment, one_hot_matrix, AugmentConfig, Dataset};
use crate::error::{Error, Result};
use crate::functions::{cross_entropy, softmax, softmax_xent_backward, LOG_EPS};
use crate::gradcheck::{gradient_check_with, GradCheckReport};
use crate::layers::{Conv2D, Dense, Flatten, Layer, MaxPool2D, Mode, NetGradients, Relu, Sequential};
use crate::model::{cnn_network, mlp_network, Classifier, InputRepr, ModelBody, ModelKind, ModelMetadata};
use crate::optim::{Adam, AdamConfig, Optimizer, Sgd, SgdConfig};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{rand_uniform, Tensor};

const STREAM_INIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

/// Hyperparameters of one run. Fields a protocol does not use are ignored
/// by it but still recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    /// Mini-batch step budget (MLP).
    pub steps: usize,
    /// Epoch budget (CNN, logistic regression).
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: Option<usize>,
    pub seed: u64,
    pub image_size: usize,
    pub hidden: usize,
    pub k: usize,
    pub repr: InputRepr,
    pub augment: bool,
    pub augmentation: AugmentConfig,
    pub test_fraction: f64,
}

impl TrainConfig {
    /// Published hyperparameters for each protocol.
    pub fn paper_default(model: ModelKind) -> Self {
        let base = Self {
            model,
            batch_size: 32,
            steps: 2000,
            epochs: 25,
            learning_rate: 0.01,
            patience: None,
            seed: 0,
            image_size: 224,
            hidden: 500,
            k: 5,
            repr: InputRepr::Features,
            augment: false,
            augmentation: AugmentConfig::default(),
            test_fraction: 0.2,
        };
        match model {
            ModelKind::Mlp => Self {
                batch_size: 100,
                learning_rate: 0.001,
                repr: InputRepr::Pixels,
                ..base
            },
            ModelKind::Cnn => Self {
                patience: Some(5),
                repr: InputRepr::Pixels,
                augment: true,
                ..base
            },
            ModelKind::LogReg => Self {
                epochs: 200,
                learning_rate: 0.1,
                ..base
            },
            ModelKind::Knn => base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.model == ModelKind::Mlp && self.steps == 0 {
            return fail("step budget must be at least 1".into());
        }
        if matches!(self.model, ModelKind::Cnn | ModelKind::LogReg) && self.epochs == 0 {
            return fail("epoch budget must be at least 1".into());
        }
        if self.patience == Some(0) {
            return fail("patience must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if self.image_size == 0 {
            return fail("image size must be positive".into());
        }
        if self.hidden == 0 || self.k == 0 {
            return fail("hidden width and k must be positive".into());
        }
        if matches!(self.model, ModelKind::Mlp | ModelKind::Cnn) && self.repr != InputRepr::Pixels {
            return fail(format!("{} consumes pixels only", self.model));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail(format!("test fraction {} must lie in (0, 1)", self.test_fraction));
        }
        self.augmentation.validate()
    }

    /// Canonical `key=value` listing of every field.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let a = &self.augmentation;
        vec![
            ("model", self.model.to_string()),
            ("batch", self.batch_size.to_string()),
            ("steps", self.steps.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.learning_rate.to_string()),
            ("patience", self.patience.map_or("none".to_string(), |p| p.to_string())),
            ("seed", self.seed.to_string()),
            ("size", self.image_size.to_string()),
            ("hidden", self.hidden.to_string()),
            ("k", self.k.to_string()),
            ("repr", self.repr.as_str().to_string()),
            ("augment", self.augment.to_string()),
            ("hflip_prob", a.hflip_prob.to_string()),
            ("vflip_prob", a.vflip_prob.to_string()),
            ("shear_max", a.shear_max.to_string()),
            ("zoom_min", a.zoom_range.0.to_string()),
            ("zoom_max", a.zoom_range.1.to_string()),
            ("shift_max", a.shift_max.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Sets one field from its `key=value` form. `model` is not settable
    /// here since it selects the defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "batch" => self.batch_size = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.learning_rate = parse(key, value)?,
            "patience" => {
                self.patience = match value {
                    "none" | "off" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "size" => self.image_size = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "repr" => self.repr = value.parse()?,
            "augment" => self.augment = parse(key, value)?,
            "hflip_prob" => self.augmentation.hflip_prob = parse(key, value)?,
            "vflip_prob" => self.augmentation.vflip_prob = parse(key, value)?,
            "shear_max" => self.augmentation.shear_max = parse(key, value)?,
            "zoom_min" => self.augmentation.zoom_range.0 = parse(key, value)?,
            "zoom_max" => self.augmentation.zoom_range.1 = parse(key, value)?,
            "shift_max" => self.augmentation.shift_max = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "model" => {
                let kind: ModelKind = value.parse()?;
                if kind != self.model {
                    return Err(Error::Config(format!(
                        "config names model {kind} but {} was selected",
                        self.model
                    )));
                }
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// CRC-32 of [`TrainConfig::to_text`].
    pub fn config_hash(&self) -> u64 {
        crc32fast::hash(self.to_text().as_bytes()) as u64
    }

    fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            seed: self.seed,
            config_hash: self.config_hash(),
            metrics: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }
}

fn tally(predicted: &[usize], labels: &[usize], classes: usize, losses: &[f64]) -> Evaluation {
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predicted.iter().zip(labels) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|i| confusion[i][i]).sum();
    Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        confusion,
    }
}

/// Accuracy, mean cross-entropy and confusion matrix of `model` on `data`.
pub fn evaluate<T: Scalar>(model: &mut Classifier<T>, data: &Dataset<T>) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty set".into()));
    }
    if data.num_classes() != model.num_classes() {
        return Err(Error::Validation(format!(
            "data has {} classes, model {}",
            data.num_classes(),
            model.num_classes()
        )));
    }
    let images: Vec<&Tensor<T>> = data.images().iter().collect();
    let probs = model.predict_proba(&images)?;
    let predicted = if matches!(model.body, ModelBody::Knn(_)) {
        model.predict(&images)?
    } else {
        probs.argmax_rows()
    };
    let losses: Vec<f64> = data
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = probs.row(i)[t].to_f64().unwrap_or(0.0);
            -p.clamp(LOG_EPS, 1.0).ln()
        })
        .collect();
    Ok(tally(&predicted, data.labels(), model.num_classes(), &losses))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Classifier<T>,
    pub history: History,
    pub stopped_at: Option<usize>,
    pub restored_epoch: Option<usize>,
}

fn image_shape<T: Scalar>(data: &Dataset<T>) -> Result<[usize; 3]> {
    match data.image_shape() {
        Some(&[c, h, w]) => Ok([c, h, w]),
        _ => Err(Error::Dataset("training set is empty".into())),
    }
}

fn check_batch<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>) -> Result<()> {
    if cfg.batch_size > train.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} training samples",
            cfg.batch_size,
            train.len()
        )));
    }
    Ok(())
}

/// Running means of batch loss and accuracy over one pass.
#[derive(Default)]
struct PassStats {
    loss_sum: f64,
    correct: usize,
    seen: usize,
}

impl PassStats {
    fn add(&mut self, loss: f64, probs_argmax: &[usize], labels: &[usize]) {
        self.loss_sum += loss * labels.len() as f64;
        self.correct += probs_argmax.iter().zip(labels).filter(|(p, t)| p == t).count();
        self.seen += labels.len();
    }

    fn record(&self, epoch: usize, val: &Evaluation) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: self.loss_sum / self.seen as f64,
            train_accuracy: self.correct as f64 / self.seen as f64,
            val_loss: val.mean_loss,
            val_accuracy: val.accuracy,
        }
    }
}

/// One forward/backward/update on a prepared batch; returns the mean loss
/// and the argmax predictions.
fn train_step<T: Scalar>(
    net: &mut Sequential<T>,
    optimizer: &mut Optimizer<T>,
    x: &Tensor<T>,
    onehot: &Tensor<T>,
) -> Result<(f64, Vec<usize>)> {
    let probs = softmax(&net.forward(x, Mode::Train)?)?;
    let loss = cross_entropy(&probs, onehot)?.mean_loss;
    if !loss.is_finite() {
        return Err(Error::Numeric("training loss diverged".into()));
    }
    let grads = net.backward(&softmax_xent_backward(&probs, onehot)?)?;
    optimizer.step(&mut net.params_mut(), &grads.params)?;
    Ok((loss, probs.argmax_rows()))
}

/// Pixel MLP trained with plain SGD for `cfg.steps` mini-batch steps.
///
/// The order is reshuffled at the start of every pass and the final batch
/// of a pass may be short. One history record is written per pass,
/// including a trailing partial pass, with validation metrics from `val`.
pub fn train_mlp<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>, val: &Dataset<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_batch(cfg, train)?;
    let shape = image_shape(train)?;
    let root = Rng::new(cfg.seed);
    let d: usize = shape.iter().product();
    let net = mlp_network(&mut root.derive(&[STREAM_INIT]), d, cfg.hidden, train.num_classes())?;
    let mut model = Classifier {
        kind: ModelKind::Mlp,
        image_shape: shape,
        repr: InputRepr::Pixels,
        class_names: train.class_names().to_vec(),
        body: ModelBody::Network(net),
        metadata: cfg.metadata(),
    };
    let mut optimizer = Optimizer::Sgd(Sgd::new(SgdConfig {
        learning_rate: cfg.learning_rate,
    })?);
    let mut order_rng = root.derive(&[STREAM_ORDER]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    let mut step = 0;
    let mut pass = 0;
    while step < cfg.steps {
        pass += 1;
        order_rng.shuffle(&mut order);
        let mut stats = PassStats::default();
        for batch in order.chunks(cfg.batch_size) {
            if step == cfg.steps {
                break;
            }
            let x = model.prepare_inputs(&train.image_refs(batch))?;
            let labels = train.labels_of(batch);
            let y = one_hot_matrix(&labels, train.num_classes())?;
            let net = model.network_mut().expect("mlp body is a network");
            let (loss, predicted) = train_step(net, &mut optimizer, &x, &y)?;
            stats.add(loss, &predicted, &labels);
            step += 1;
        }
        let v = evaluate(&mut model, val)?;
        history.push(stats.record(pass, &v))?;
        log::debug!("mlp pass {pass} (step {step}): val acc {:.4}", v.accuracy);
    }
    Ok(TrainOutcome {
        model,
        history,
        stopped_at: None,
        restored_epoch: None,
    })
}

struct CnnRun<'a, T> {
    model: Classifier<T>,
    optimizer: Optimizer<T>,
    train: &'a Dataset<T>,
    val: &'a Dataset<T>,
    cfg: &'a TrainConfig,
    root: Rng,
}

impl<T: Scalar> CnnRun<'_, T> {
    fn batch_images(&self, epoch: usize, batch: &[usize]) -> Result<Vec<Tensor<T>>> {
        let images = self.train.images();
        if !self.cfg.augment {
            return Ok(batch.iter().map(|&i| images[i].clone()).collect());
        }
        batch
            .par_iter()
            .map(|&i| {
                let mut rng = self.root.derive(&[STREAM_AUGMENT, epoch as u64, i as u64]);
                augment(&images[i], &self.cfg.augmentation, &mut rng)
            })
            .collect()
    }
}

impl<T: Scalar> Trainee for CnnRun<'_, T> {
    type Snapshot = Vec<Tensor<T>>;

    fn run_epoch(&mut self, epoch: usize) -> Result<EpochRecord> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        self.root.derive(&[STREAM_ORDER, epoch as u64]).shuffle(&mut order);
        let mut stats = PassStats::default();
        for batch in order.chunks(self.cfg.batch_size) {
            let images = self.batch_images(epoch, batch)?;
            let x = Tensor::stack(&images.iter().collect::<Vec<_>>())?;
            let labels = self.train.labels_of(batch);
            let y = one_hot_matrix(&labels, self.train.num_classes())?;
            let net = self.model.network_mut().expect("cnn body is a network");
            let (loss, predicted) = train_step(net, &mut self.optimizer, &x, &y)?;
            stats.add(loss, &predicted, &labels);
        }
        let v = evaluate(&mut self.model, self.val)?;
        Ok(stats.record(epoch, &v))
    }

    fn snapshot(&self) -> Vec<Tensor<T>> {
        self.model.network().expect("cnn body is a network").snapshot()
    }

    fn restore(&mut self, snapshot: &Vec<Tensor<T>>) -> Result<()> {
        self.model.network_mut().expect("cnn body is a network").restore(snapshot)
    }
}

/// CNN trained with Adam for up to `cfg.epochs` epochs, augmenting every
/// training sample on the fly and early-stopping on `val` loss.
pub fn train_cnn<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>, val: &Dataset<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_batch(cfg, train)?;
    let shape = image_shape(train)?;
    let root = Rng::new(cfg.seed);
    let dropout_seed = root.derive(&[STREAM_DROPOUT]).next_u64();
    let net = cnn_network(&mut root.derive(&[STREAM_INIT]), shape, train.num_classes(), dropout_seed)?;
    let model = Classifier {
        kind: ModelKind::Cnn,
        image_shape: shape,
        repr: InputRepr::Pixels,
        class_names: train.class_names().to_vec(),
        body: ModelBody::Network(net),
        metadata: cfg.metadata(),
    };
    let optimizer = Optimizer::Adam(Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    })?);
    let mut run = CnnRun {
        model,
        optimizer,
        train,
        val,
        cfg,
        root,
    };
    let summary = fit(&mut run, cfg.epochs, cfg.patience)?;
    Ok(TrainOutcome {
        model: run.model,
        history: summary.history,
        stopped_at: summary.stopped_at,
        restored_epoch: summary.restored_epoch,
    })
}

fn flat_inputs<T: Scalar>(repr: InputRepr, data: &Dataset<T>) -> Result<Tensor<T>> {
    let refs: Vec<&Tensor<T>> = data.images().iter().collect();
    match repr {
        InputRepr::Features => extract_features_batch(&refs),
        InputRepr::Pixels => {
            let d: usize = image_shape(data)?.iter().product();
            Tensor::stack(&refs)?.into_reshape([refs.len(), d])
        }
    }
}

/// Multinomial logistic regression by mini-batch gradient descent.
pub fn train_logreg<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>, val: &Dataset<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    check_batch(cfg, train)?;
    let shape = image_shape(train)?;
    let x = flat_inputs(cfg.repr, train)?;
    let y = train.onehot()?;
    let x_val = flat_inputs(cfg.repr, val)?;
    let lr_cfg = LogRegConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
    };
    let classes = train.num_classes();
    let mut records = Vec::new();
    let mut order_rng = Rng::new(cfg.seed).derive(&[STREAM_ORDER]);
    let (lr_model, _) = logreg_train_with(&x, &y, lr_cfg, &mut order_rng, |epoch, m| {
        let score = |x: &Tensor<T>, labels: &[usize]| -> Result<Evaluation> {
            let probs = m.predict_proba(x)?;
            let losses: Vec<f64> = labels
                .iter()
                .enumerate()
                .map(|(i, &t)| -probs.row(i)[t].to_f64().unwrap_or(0.0).clamp(LOG_EPS, 1.0).ln())
                .collect();
            Ok(tally(&probs.argmax_rows(), labels, classes, &losses))
        };
        let t = score(&x, train.labels())?;
        let v = score(&x_val, val.labels())?;
        records.push(EpochRecord {
            epoch,
            train_loss: t.mean_loss,
            train_accuracy: t.accuracy,
            val_loss: v.mean_loss,
            val_accuracy: v.accuracy,
        });
        Ok(())
    })?;
    let mut history = History::default();
    for r in records {
        history.push(r)?;
    }
    Ok(TrainOutcome {
        model: Classifier {
            kind: ModelKind::LogReg,
            image_shape: shape,
            repr: cfg.repr,
            class_names: train.class_names().to_vec(),
            body: ModelBody::LogReg(lr_model),
            metadata: cfg.metadata(),
        },
        history,
        stopped_at: None,
        restored_epoch: None,
    })
}

/// Stores the training set; the single history record scores it once.
pub fn train_knn<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>, val: &Dataset<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let shape = image_shape(train)?;
    let x = flat_inputs(cfg.repr, train)?;
    let knn = KnnModel::fit(x, train.labels().to_vec(), cfg.k, train.num_classes())?;
    let mut model = Classifier {
        kind: ModelKind::Knn,
        image_shape: shape,
        repr: cfg.repr,
        class_names: train.class_names().to_vec(),
        body: ModelBody::Knn(knn),
        metadata: cfg.metadata(),
    };
    let t = evaluate(&mut model, train)?;
    let v = evaluate(&mut model, val)?;
    let mut history = History::default();
    history.push(EpochRecord {
        epoch: 1,
        train_loss: t.mean_loss,
        train_accuracy: t.accuracy,
        val_loss: v.mean_loss,
        val_accuracy: v.accuracy,
    })?;
    Ok(TrainOutcome {
        model,
        history,
        stopped_at: None,
        restored_epoch: None,
    })
}

/// Dispatches on `cfg.model`.
pub fn train<T: Scalar>(cfg: &TrainConfig, train: &Dataset<T>, val: &Dataset<T>) -> Result<TrainOutcome<T>> {
    match cfg.model {
        ModelKind::Mlp => train_mlp(cfg, train, val),
        ModelKind::Cnn => train_cnn(cfg, train, val),
        ModelKind::LogReg => train_logreg(cfg, train, val),
        ModelKind::Knn => train_knn(cfg, train, val),
    }
}

/// Reference networks for the gradient-check harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    /// 12 → 5 → 4 with ReLU, batch of 3.
    TinyMlp,
    /// 3×8×8 input, conv 2 filters 3×3, ReLU, pool 2, dense → 4, batch of 2.
    TinyCnn,
    /// The tiny CNN with dropout 0.3 (mask frozen) before its class layer.
    TinyCnnDropout,
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 3] = [ModelSpec::TinyMlp, ModelSpec::TinyCnn, ModelSpec::TinyCnnDropout];

    pub fn name(self) -> &'static str {
        match self {
            ModelSpec::TinyMlp => "tiny-mlp",
            ModelSpec::TinyCnn => "tiny-cnn",
            ModelSpec::TinyCnnDropout => "tiny-cnn-dropout",
        }
    }

    /// A fresh network with its input batch and targets.
    pub fn build(self, rng: &mut Rng) -> Result<(Sequential<f64>, Tensor<f64>, Tensor<f64>)> {
        let (net, x, batch) = match self {
            ModelSpec::TinyMlp => {
                let net = mlp_network(rng, 12, 5, 4)?;
                let x = rand_uniform(rng, [3, 12], -1.0, 1.0)?;
                (net, x, 3)
            }
            ModelSpec::TinyCnn | ModelSpec::TinyCnnDropout => {
                let mut layers = vec![
                    Layer::Conv2D(Conv2D::he(rng, 3, 2, 3)?),
                    Layer::Relu(Relu::new()),
                    Layer::MaxPool2D(MaxPool2D::new(2, 2)?),
                    Layer::Flatten(Flatten::new()),
                ];
                if self == ModelSpec::TinyCnnDropout {
                    layers.push(Layer::Dropout(crate::layers::Dropout::new(0.3, rng.next_u64())?));
                }
                layers.push(Layer::Dense(Dense::he(rng, 18, 4)?));
                let x = rand_uniform(rng, [2, 3, 8, 8], -1.0, 1.0)?;
                (Sequential::new(layers), x, 2)
            }
        };
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(4)).collect();
        Ok((net, x, one_hot_matrix(&labels, 4)?))
    }
}

/// Smallest distance from a ReLU kink or pool tie accepted for a check
/// point; far larger than any finite-difference nudge can move an input.
pub const KINK_MARGIN: f64 = 1e-3;

/// Draws a kink-safe instance of `spec` from `seed` and checks it. Draws
/// whose forward pass lands within [`KINK_MARGIN`] of a kink are rejected.
/// `tamper` can corrupt the analytic gradients (negative controls).
pub fn check_spec_with(
    spec: ModelSpec,
    seed: u64,
    tolerance: f64,
    tamper: impl FnOnce(&mut NetGradients<f64>),
) -> Result<GradCheckReport> {
    let root = Rng::new(seed);
    for attempt in 0..1000u64 {
        let mut rng = root.derive(&[attempt]);
        let (mut net, x, y) = spec.build(&mut rng)?;
        net.set_dropout_frozen(true);
        net.forward(&x, Mode::Train)?;
        if net.kink_margin().is_some_and(|m| m < KINK_MARGIN) {
            continue;
        }
        return gradient_check_with(&mut net, &x, &y, tolerance, tamper);
    }
    Err(Error::Numeric(format!("no kink-safe draw for {} from seed {seed}", spec.name())))
}

pub fn check_spec(spec: ModelSpec, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    check_spec_with(spec, seed, tolerance, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::solid_colors;
    use crate::gradcheck::DEFAULT_TOLERANCE;

    #[test]
    fn paper_defaults_validate() {
        for kind in ModelKind::ALL {
            TrainConfig::paper_default(kind).validate().unwrap();
        }
        let mlp = TrainConfig::paper_default(ModelKind::Mlp);
        assert_eq!((mlp.batch_size, mlp.steps, mlp.learning_rate), (100, 2000, 0.001));
        let cnn = TrainConfig::paper_default(ModelKind::Cnn);
        assert_eq!((cnn.batch_size, cnn.epochs, cnn.learning_rate, cnn.patience), (32, 25, 0.01, Some(5)));
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = TrainConfig::paper_default(ModelKind::Cnn);
        cfg.seed = 42;
        cfg.patience = None;
        let mut back = TrainConfig::paper_default(ModelKind::Cnn);
        for line in cfg.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k, v).unwrap();
        }
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
        assert!(back.set("nope", "1").is_err());
        assert!(back.set("batch", "x").is_err());
        assert!(back.set("model", "mlp").is_err());
    }

    #[test]
    fn evaluate_constant_and_oracle_models() {
        let data = solid_colors::<f64>(2, 4, 0).unwrap();
        let mut rng = Rng::new(0);
        let mut net = mlp_network::<f64>(&mut rng, 48, 3, 4).unwrap();
        for p in net.params_mut() {
            p.data_mut().fill(0.0);
        }
        // Bias on class 0 only: always predicts 0.
        if let Layer::Dense(d) = &mut net.layers_mut()[2] {
            let mut params = d.params_mut();
            params[1].data_mut()[0] = 5.0;
        }
        let mut model = Classifier {
            kind: ModelKind::Mlp,
            image_shape: [3, 4, 4],
            repr: InputRepr::Pixels,
            class_names: data.class_names().to_vec(),
            body: ModelBody::Network(net),
            metadata: ModelMetadata::default(),
        };
        let e = evaluate(&mut model, &data).unwrap();
        assert_eq!(e.accuracy, 0.25);
        assert_eq!(e.confusion.iter().map(|r| r[0]).sum::<usize>(), 8);

        let knn = KnnModel::fit(flat_inputs(InputRepr::Pixels, &data).unwrap(), data.labels().to_vec(), 1, 4).unwrap();
        let mut oracle = Classifier {
            body: ModelBody::Knn(knn),
            kind: ModelKind::Knn,
            ..model
        };
        let e = evaluate(&mut oracle, &data).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.correct(), e.total());
        assert!(e.mean_loss.abs() < 1e-12);
    }

    #[test]
    fn batch_larger_than_train_set_is_config_error() {
        let data = solid_colors::<f64>(2, 4, 0).unwrap();
        let cfg = TrainConfig::paper_default(ModelKind::Mlp);
        assert!(matches!(train_mlp(&cfg, &data, &data), Err(Error::Config(_))));
    }

    #[test]
    fn mlp_zero_lr_keeps_init_and_runs_are_identical() {
        let data = solid_colors::<f64>(4, 4, 1).unwrap();
        let mut cfg = TrainConfig::paper_default(ModelKind::Mlp);
        cfg.batch_size = 5;
        cfg.steps = 7;
        cfg.hidden = 8;
        cfg.learning_rate = 0.0;
        let out = train_mlp(&cfg, &data, &data).unwrap();
        let init = mlp_network::<f64>(&mut Rng::new(cfg.seed).derive(&[STREAM_INIT]), 48, 8, 4).unwrap();
        assert_eq!(out.model.network().unwrap().snapshot(), init.snapshot());
        // 16 samples in batches of 5 is 4 steps per pass: passes of 4 and 3.
        assert_eq!(out.history.len(), 2);

        cfg.learning_rate = 0.05;
        let a = train_mlp(&cfg, &data, &data).unwrap();
        let b = train_mlp(&cfg, &data, &data).unwrap();
        assert_eq!(a.model.network().unwrap().snapshot(), b.model.network().unwrap().snapshot());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn reference_specs_pass_and_corruption_fails() {
        for spec in ModelSpec::ALL {
            let report = check_spec(spec, 3, DEFAULT_TOLERANCE).unwrap();
            assert!(report.passed(), "{}:\n{report}", spec.name());
        }
        let corrupted = check_spec_with(ModelSpec::TinyMlp, 3, DEFAULT_TOLERANCE, |g| {
            g.params[0] = g.params[0].scale(2.0);
        })
        .unwrap();
        assert!(!corrupted.passed());
        assert_eq!(corrupted.failures()[0].layer_name, "dense");
        assert_eq!(corrupted.failures()[0].layer_index, 0);
    }
}
