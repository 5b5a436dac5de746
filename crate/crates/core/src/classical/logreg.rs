use crate::error::{Error, Result};
use crate::functions::{cross_entropy, softmax, validate_onehot};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// Multinomial logistic regression: `softmax(x·Wᵀ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel<T> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 32,
        }
    }
}

impl<T: Scalar> LogRegModel<T> {
    pub fn zeros(features: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            weight: Tensor::zeros([classes, features])?,
            bias: Tensor::zeros([classes])?,
        })
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.dim(0)] {
            return Err(Error::Shape(format!(
                "logistic regression weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn features(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn classes(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 2 || x.dim(1) != self.features() {
            return Err(Error::Shape(format!(
                "logistic regression expects N×{}, got {:?}",
                self.features(),
                x.shape()
            )));
        }
        softmax(&x.matmul_bt(&self.weight)?.add(&self.bias)?)
    }

    pub fn loss(&self, x: &Tensor<T>, onehot: &Tensor<T>) -> Result<f64> {
        Ok(cross_entropy(&self.predict_proba(x)?, onehot)?.mean_loss)
    }

    /// Mean cross-entropy gradients `(dW, db)` over the rows of `x`.
    pub fn gradients(&self, x: &Tensor<T>, onehot: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let probs = self.predict_proba(x)?;
        validate_onehot(onehot)?;
        let residual = probs.sub(onehot)?.scale(cast(1.0 / x.dim(0) as f64));
        let d_weight = residual.matmul_at(x)?;
        let classes = self.classes();
        let mut d_bias = vec![T::zero(); classes];
        for row in residual.data().chunks(classes) {
            for (acc, &r) in d_bias.iter_mut().zip(row) {
                *acc += r;
            }
        }
        Ok((d_weight, Tensor::from_vec([classes], d_bias)?))
    }

    fn apply(&mut self, d_weight: &Tensor<T>, d_bias: &Tensor<T>, lr: T) {
        for (w, &g) in self.weight.data_mut().iter_mut().zip(d_weight.data()) {
            *w -= lr * g;
        }
        for (b, &g) in self.bias.data_mut().iter_mut().zip(d_bias.data()) {
            *b -= lr * g;
        }
    }
}

fn gather_rows<T: Scalar>(t: &Tensor<T>, rows: &[usize]) -> Result<Tensor<T>> {
    let cols = t.dim(1);
    let mut data = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        data.extend_from_slice(t.row(r));
    }
    Tensor::from_vec([rows.len(), cols], data)
}

/// Mini-batch gradient descent from zero weights.
///
/// Each epoch shuffles the row order with `rng` and walks it in batches of
/// `batch_size` (the last batch may be short). Returns the model and the
/// full-data loss after every epoch.
pub fn logreg_train<T: Scalar>(
    features: &Tensor<T>,
    onehot: &Tensor<T>,
    config: LogRegConfig,
    rng: &mut Rng,
) -> Result<(LogRegModel<T>, Vec<f64>)> {
    logreg_train_with(features, onehot, config, rng, |_, _| Ok(()))
}

/// [`logreg_train`] with a hook called after every epoch with the 1-based
/// epoch index and the current model.
pub fn logreg_train_with<T: Scalar>(
    features: &Tensor<T>,
    onehot: &Tensor<T>,
    config: LogRegConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, &LogRegModel<T>) -> Result<()>,
) -> Result<(LogRegModel<T>, Vec<f64>)> {
    let labels = validate_onehot(onehot)?;
    let n = features.dim(0);
    if features.rank() != 2 || onehot.dim(0) != n {
        return Err(Error::Shape(format!(
            "features {:?} vs targets {:?}",
            features.shape(),
            onehot.shape()
        )));
    }
    if config.batch_size == 0 || config.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} must be in 1..={n}",
            config.batch_size
        )));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        log::warn!("logistic regression training data holds a single class ({})", labels[0]);
    }
    let mut model = LogRegModel::zeros(features.dim(1), onehot.dim(1))?;
    let lr: T = cast(config.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let x = gather_rows(features, batch)?;
            let y = gather_rows(onehot, batch)?;
            let (dw, db) = model.gradients(&x, &y)?;
            model.apply(&dw, &db, lr);
        }
        losses.push(model.loss(features, onehot)?);
        on_epoch(epoch, &model)?;
    }
    Ok((model, losses))
}
