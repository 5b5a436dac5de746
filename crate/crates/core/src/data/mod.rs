//! Dataset ingestion, preprocessing, splitting and augmentation.

mod augment;
mod cache;
mod image_ops;
mod split;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use augment::{apply_draw, augment, AugmentConfig, AugmentDraw};
pub use cache::{read_cache, write_cache, CACHE_MAGIC};
pub use image_ops::{hflip, hwc_bytes_to_chw, normalize, one_hot, one_hot_matrix, resize_bilinear, vflip};
pub use split::{train_test_split, Split};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The four road-surface grades, in the index order produced by loading a
/// directory whose class folders sort lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoadGrade {
    Good = 0,
    Poor = 1,
    Satisfactory = 2,
    VeryPoor = 3,
}

impl RoadGrade {
    pub const ALL: [RoadGrade; 4] = [
        RoadGrade::Good,
        RoadGrade::Poor,
        RoadGrade::Satisfactory,
        RoadGrade::VeryPoor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RoadGrade::Good => "Good",
            RoadGrade::Poor => "Poor",
            RoadGrade::Satisfactory => "Satisfactory",
            RoadGrade::VeryPoor => "Very Poor",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|g| g.name().to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Labelled images, each `[C × H × W]` with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    images: Vec<Tensor<T>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    paths: Vec<PathBuf>,
    skipped: Vec<SkippedFile>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Validation(format!(
                "label {bad} outside {} classes",
                class_names.len()
            )));
        }
        if let Some(first) = images.first() {
            if first.rank() != 3 || images.iter().any(|i| i.shape() != first.shape()) {
                return Err(Error::Shape("dataset images must share one C×H×W shape".into()));
            }
        }
        let paths = vec![PathBuf::new(); images.len()];
        Ok(Self {
            images,
            labels,
            class_names,
            paths,
            skipped: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor<T>] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    /// Files that failed to decode while loading.
    pub fn skipped(&self) -> &[SkippedFile] {
        &self.skipped
    }

    /// Per-image shape `[C, H, W]`.
    pub fn image_shape(&self) -> Option<&[usize]> {
        self.images.first().map(|i| i.shape())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn onehot(&self) -> Result<Tensor<T>> {
        one_hot_matrix(&self.labels, self.num_classes())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            paths: indices.iter().map(|&i| self.paths[i].clone()).collect(),
            skipped: Vec::new(),
        }
    }

    pub fn image_refs(&self, indices: &[usize]) -> Vec<&Tensor<T>> {
        indices.iter().map(|&i| &self.images[i]).collect()
    }

    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Sorted class directory names under `root`.
pub fn class_directories(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    Ok(sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir())
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?.to_string();
            Some((name, p))
        })
        .collect())
}

/// Decodes one file into a normalized `3 × size × size` tensor.
pub fn load_image<T: Scalar>(path: &Path, size: usize) -> Result<Tensor<T>> {
    let decoded = image::open(path)
        .map_err(|e| Error::Dataset(format!("cannot decode {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    let chw = hwc_bytes_to_chw(decoded.as_raw(), h as usize, w as usize, 3)?;
    resize_bilinear(&chw, size, size)
}

/// Loads a `root/<ClassName>/*.{png,jpg,jpeg}` tree.
///
/// Class indices follow the lexicographic order of the class directory
/// names and files are read in sorted path order. Undecodable files are
/// skipped with a warning and listed in [`Dataset::skipped`].
pub fn load_directory<T: Scalar>(root: &Path, size: usize) -> Result<Dataset<T>> {
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let classes = class_directories(root)?;
    let mut files = Vec::new();
    for (label, (_, dir)) in classes.iter().enumerate() {
        for path in sorted_entries(dir)? {
            let is_image = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if path.is_file() && is_image {
                files.push((path, label));
            }
        }
    }
    let decoded: Vec<Result<Tensor<T>>> = files
        .par_iter()
        .map(|(path, _)| load_image(path, size))
        .collect();

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut paths = Vec::new();
    let mut skipped = Vec::new();
    for ((path, label), result) in files.into_iter().zip(decoded) {
        match result {
            Ok(img) => {
                images.push(img);
                labels.push(label);
                paths.push(path);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedFile {
                    path,
                    reason: e.to_string(),
                });
            }
        }
    }
    if images.is_empty() {
        return Err(Error::Dataset(format!(
            "no decodable images under {}",
            root.display()
        )));
    }
    if classes.len() != 4 {
        log::warn!(
            "found {} class directories under {}; expected the 4 road grades",
            classes.len(),
            root.display()
        );
    }
    Ok(Dataset {
        images,
        labels,
        class_names: classes.into_iter().map(|(name, _)| name).collect(),
        paths,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_png(path: &Path, rgb: [u8; 3]) {
        let img = image::RgbImage::from_pixel(6, 5, image::Rgb(rgb));
        img.save(path).unwrap();
    }

    fn tree(root: &Path) {
        for (i, name) in ["Good", "Poor", "Satisfactory", "Very Poor"].iter().enumerate() {
            let dir = root.join(name);
            fs::create_dir_all(&dir).unwrap();
            for j in 0..2 {
                write_png(&dir.join(format!("img{j}.png")), [(i * 60) as u8, (j * 100) as u8, 7]);
            }
        }
    }

    #[test]
    fn loads_tree_in_sorted_order() {
        let tmp = tempfile::tempdir().unwrap();
        tree(tmp.path());
        let ds = load_directory::<f64>(tmp.path(), 8).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.labels(), &[0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(ds.class_names(), RoadGrade::names().as_slice());
        assert_eq!(ds.image_shape(), Some(&[3usize, 8, 8][..]));
        let px = ds.images()[2].data()[0];
        assert!((px - 60.0 / 255.0).abs() < 1e-12);
        let again = load_directory::<f64>(tmp.path(), 8).unwrap();
        assert_eq!(again.images(), ds.images());
        assert_eq!(again.paths(), ds.paths());
    }

    #[test]
    fn skips_corrupt_file() {
        let tmp = tempfile::tempdir().unwrap();
        tree(tmp.path());
        let bad = tmp.path().join("Poor").join("img1.png");
        let bytes = fs::read(&bad).unwrap();
        let mut f = fs::File::create(&bad).unwrap();
        f.write_all(&bytes[..bytes.len() / 3]).unwrap();
        let ds = load_directory::<f32>(tmp.path(), 4).unwrap();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds.skipped().len(), 1);
        assert_eq!(ds.skipped()[0].path, bad);
        assert_eq!(ds.labels(), &[0, 0, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn empty_root_is_fatal() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_directory::<f32>(tmp.path(), 4), Err(Error::Dataset(_))));
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let imgs = vec![Tensor::<f64>::zeros([3, 2, 2]).unwrap()];
        assert!(Dataset::new(imgs, vec![4], RoadGrade::names()).is_err());
    }
}
