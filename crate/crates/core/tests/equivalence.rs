use gradecore::classical::{logreg_train, LogRegConfig};
use gradecore::functions::{softmax, softmax_xent_backward};
use gradecore::layers::{Dense, Layer, Mode, Sequential};
use gradecore::optim::{Optimizer, Sgd, SgdConfig};
use gradecore::tensor::rand_uniform;
use gradecore::data::one_hot_matrix;
use gradecore::{Rng, Tensor};

fn rows(t: &Tensor<f64>, idx: &[usize]) -> Tensor<f64> {
    let data: Vec<f64> = idx.iter().flat_map(|&i| t.row(i).to_vec()).collect();
    Tensor::from_vec([idx.len(), t.dim(1)], data).unwrap()
}

/// Logistic regression is a single dense layer under softmax cross-entropy
/// trained by SGD from zero weights; replaying the same batch order through
/// the network path must land on the same parameters.
#[test]
fn logreg_matches_dense_softmax_network() {
    let mut rng = Rng::new(31);
    let (n, d, epochs, batch, lr) = (30, 7, 25, 8, 0.2);
    let x: Tensor<f64> = rand_uniform(&mut rng, [n, d], -1.0, 1.0).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % 4).collect();
    let y = one_hot_matrix::<f64>(&labels, 4).unwrap();

    let cfg = LogRegConfig {
        learning_rate: lr,
        epochs,
        batch_size: batch,
    };
    let (model, _) = logreg_train(&x, &y, cfg, &mut Rng::new(5)).unwrap();

    let mut net = Sequential::new(vec![Layer::Dense(Dense::zeros(d, 4).unwrap())]);
    let mut sgd = Optimizer::Sgd(Sgd::new(SgdConfig { learning_rate: lr }).unwrap());
    let mut order_rng = Rng::new(5);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order_rng.shuffle(&mut order);
        for b in order.chunks(batch) {
            let (xb, yb) = (rows(&x, b), rows(&y, b));
            let probs = softmax(&net.forward(&xb, Mode::Train).unwrap()).unwrap();
            let grads = net.backward(&softmax_xent_backward(&probs, &yb).unwrap()).unwrap();
            sgd.step(&mut net.params_mut(), &grads.params).unwrap();
        }
    }
    let params = net.params();
    let dw = params[0].max_abs_diff(model.weight()).unwrap();
    let db = params[1].max_abs_diff(model.bias()).unwrap();
    assert!(dw < 1e-10 && db < 1e-10, "weight diff {dw:e}, bias diff {db:e}");
    assert!(model.weight().data().iter().any(|&w| w.abs() > 1e-3));
}
