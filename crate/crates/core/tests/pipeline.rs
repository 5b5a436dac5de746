use gradecore::checkpoint;
use gradecore::data::synthetic::{solid_colors, write_png_tree};
use gradecore::data::{load_directory, read_cache, train_test_split, write_cache};
use gradecore::layers::{Dense, Layer, Relu, Sequential};
use gradecore::model::{Classifier, ModelBody, ModelMetadata};
use gradecore::training::{evaluate, train};
use gradecore::{InputRepr, ModelKind, Rng, Tensor, TrainConfig};
use proptest::prelude::*;

#[test]
fn disk_tree_to_checkpoint_and_back() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("tree");
    write_png_tree(&solid_colors::<f64>(6, 12, 2).unwrap(), &root).unwrap();
    let data = load_directory::<f32>(&root, 16).unwrap();
    assert_eq!(data.len(), 24);
    assert_eq!(data.class_names(), ["Good", "Poor", "Satisfactory", "Very Poor"]);
    assert_eq!(data.image_shape(), Some(&[3usize, 16, 16][..]));

    let cache = tmp.path().join("tree.gdset");
    write_cache(&data, &cache).unwrap();
    let cached = read_cache::<f32>(&cache, data.class_names().to_vec()).unwrap();
    assert_eq!(cached.images(), data.images());

    let split = train_test_split(data.labels(), 0.25, &mut Rng::new(0).derive(&[0])).unwrap();
    let (tr, te) = (data.subset(&split.train), data.subset(&split.test));
    assert_eq!(tr.class_counts(), vec![4, 4, 5, 5]);
    for kind in ModelKind::ALL {
        let mut cfg = TrainConfig::paper_default(kind);
        cfg.image_size = 16;
        cfg.batch_size = 8;
        cfg.steps = 200;
        cfg.epochs = 4;
        cfg.augment = false;
        let mut out = train(&cfg, &tr, &te).unwrap();
        let path = tmp.path().join(format!("{kind}.gckpt"));
        checkpoint::save(&out.model, &path).unwrap();
        assert_eq!(checkpoint::peek(&path).unwrap(), (kind, gradecore::DType::F32));
        let mut back = checkpoint::load::<f32>(&path).unwrap();
        let refs = te.image_refs(&(0..te.len()).collect::<Vec<_>>());
        assert_eq!(out.model.predict_proba(&refs).unwrap(), back.predict_proba(&refs).unwrap(), "{kind}");
        assert_eq!(back.metadata.config_hash, cfg.config_hash());
        let e = evaluate(&mut back, &te).unwrap();
        assert_eq!(e.total(), te.len());
    }
}

#[test]
fn loading_at_wrong_precision_is_rejected() {
    let data = solid_colors::<f64>(2, 8, 0).unwrap();
    let mut cfg = TrainConfig::paper_default(ModelKind::LogReg);
    cfg.batch_size = 4;
    cfg.epochs = 1;
    let out = train(&cfg, &data, &data).unwrap();
    let bytes = checkpoint::to_bytes(&out.model).unwrap();
    assert!(checkpoint::from_bytes::<f32>(&bytes).is_err());
    assert!(checkpoint::from_bytes::<f64>(&bytes).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mlp_checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12) {
        let mut rng = Rng::new(seed);
        let net = Sequential::new(vec![
            Layer::Dense(Dense::<f64>::he(&mut rng, 12, hidden).unwrap()),
            Layer::Relu(Relu::new()),
            Layer::Dense(Dense::he(&mut rng, hidden, 4).unwrap()),
        ]);
        let model = Classifier {
            kind: ModelKind::Mlp,
            image_shape: [3, 2, 2],
            repr: InputRepr::Pixels,
            class_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            body: ModelBody::Network(net.clone()),
            metadata: ModelMetadata { seed, config_hash: 7, metrics: vec![("acc".into(), 0.5)] },
        };
        let back = checkpoint::from_bytes::<f64>(&checkpoint::to_bytes(&model).unwrap()).unwrap();
        let before: Vec<u64> = net.params().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect();
        let after: Vec<u64> = back.network().unwrap().params().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect();
        prop_assert_eq!(before, after);
        prop_assert_eq!(back.metadata, model.metadata);
        prop_assert_eq!(back.class_names, model.class_names);
    }

    #[test]
    fn probabilities_are_distributions(seed in any::<u64>()) {
        let data = solid_colors::<f64>(2, 8, seed).unwrap();
        let mut cfg = TrainConfig::paper_default(ModelKind::LogReg);
        cfg.batch_size = 4;
        cfg.epochs = 2;
        cfg.seed = seed;
        let mut out = train(&cfg, &data, &data).unwrap();
        let refs: Vec<&Tensor<f64>> = data.images().iter().collect();
        let p = out.model.predict_proba(&refs).unwrap();
        for i in 0..p.dim(0) {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
