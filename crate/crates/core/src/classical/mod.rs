//! Logistic regression and nearest-neighbour classifiers over flattened
//! pixels or engineered image features.

mod features;
mod knn;
mod logreg;

pub use features::{extract_features, extract_features_batch, FeatureVector, EDGE_LEN, FEATURE_LEN, GRID_LEN, HIST_BINS, HIST_LEN, GRID};
pub use knn::{KnnModel, KnnPrediction};
pub use logreg::{logreg_train, logreg_train_with, LogRegConfig, LogRegModel};
