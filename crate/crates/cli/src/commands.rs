use std::fs;
use std::path::{Path, PathBuf};

use gradecore::checkpoint;
use gradecore::data::{class_directories, load_directory, load_image, read_cache, train_test_split, write_cache, Dataset};
use gradecore::report::loss_curve_svg;
use gradecore::training::{self, check_spec, Evaluation, History, ModelSpec};
use gradecore::{DType, ModelKind, Rng, Scalar, TrainConfig};
use serde_json::json;

use crate::events::emit;
use crate::manifest::{fingerprint, unix_now, Manifest};
use crate::{EvaluateArgs, Failure, GradcheckArgs, Precision, PredictArgs, ReportArgs, TrainArgs};

/// Stream under the run seed that orders the train/test split.
const SPLIT_STREAM: u64 = 0;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

/// `key=value` lines; blank lines and `#` comments are ignored.
fn read_config_file(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("{} line {}: expected key=value, got {line:?}", path.display(), n + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Paper defaults for the model, then the config file, then flags.
/// Also reports whether the batch size was given explicitly.
fn resolve_config(args: &TrainArgs) -> Result<(TrainConfig, bool), Failure> {
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    let model = match args.model {
        Some(m) => m,
        None => match file.iter().find(|(k, _)| k == "model") {
            Some((_, v)) => v.parse::<ModelKind>().map_err(|e| Failure::Usage(e.to_string()))?,
            None => return Err(Failure::Usage("--model is required (or model=... in --config)".into())),
        },
    };
    let mut cfg = TrainConfig::paper_default(model);
    let mut flags: Vec<(String, String)> = Vec::new();
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            flags.push((key.to_string(), v));
        }
    };
    flag("size", args.size.map(|v| v.to_string()));
    flag("seed", args.seed.map(|v| v.to_string()));
    flag("batch", args.batch.map(|v| v.to_string()));
    flag("lr", args.lr.map(|v| v.to_string()));
    flag("epochs", args.epochs.map(|v| v.to_string()));
    flag("steps", args.steps.map(|v| v.to_string()));
    flag("patience", args.patience.clone());
    flag("k", args.k.map(|v| v.to_string()));
    flag("hidden", args.hidden.map(|v| v.to_string()));
    flag("test_fraction", args.test_fraction.map(|v| v.to_string()));

    let explicit_batch = file.iter().chain(&flags).any(|(k, _)| k == "batch");
    for (k, v) in file.iter().chain(&flags) {
        cfg.set(k, v).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok((cfg, explicit_batch))
}

/// Image files of a dataset tree in loader order.
fn dataset_files(root: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for (_, dir) in class_directories(root)? {
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| io_failure(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        entries.sort();
        files.extend(entries);
    }
    Ok(files)
}

/// Loads the tree, going through `cache` when one is given. A cache is
/// reused only if its image size and record count match the tree.
fn load_data<T: Scalar>(root: &Path, size: usize, cache: Option<&Path>, files: usize) -> Result<Dataset<T>, Failure> {
    if let Some(cache) = cache.filter(|c| c.exists()) {
        let names: Vec<String> = class_directories(root)?.into_iter().map(|(n, _)| n).collect();
        match read_cache::<T>(cache, names) {
            Ok(ds) if ds.len() == files && ds.image_shape() == Some(&[3, size, size][..]) => {
                log::info!("loaded {} images from cache {}", ds.len(), cache.display());
                return Ok(ds);
            }
            Ok(_) => log::warn!("cache {} does not match the dataset; rebuilding", cache.display()),
            Err(e) => log::warn!("ignoring unreadable cache {}: {e}", cache.display()),
        }
    }
    let ds = load_directory::<T>(root, size)?;
    log::info!("loaded {} images in {} classes from {}", ds.len(), ds.num_classes(), root.display());
    if let Some(cache) = cache {
        write_cache(&ds, cache)?;
    }
    Ok(ds)
}

fn percent(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    let (cfg, explicit_batch) = resolve_config(args)?;
    match args.precision {
        Precision::F32 => run_train::<f32>(args, cfg, explicit_batch),
        Precision::F64 => run_train::<f64>(args, cfg, explicit_batch),
    }
}

fn run_train<T: Scalar>(args: &TrainArgs, mut cfg: TrainConfig, explicit_batch: bool) -> Result<(), Failure> {
    let files = dataset_files(&args.data)?;
    let dataset = load_data::<T>(&args.data, cfg.image_size, args.cache.as_deref(), files.len())?;
    let split = train_test_split(dataset.labels(), cfg.test_fraction, &mut Rng::new(cfg.seed).derive(&[SPLIT_STREAM]))?;
    let (train_set, test_set) = (dataset.subset(&split.train), dataset.subset(&split.test));
    if !explicit_batch && cfg.model != ModelKind::Knn && cfg.batch_size > train_set.len() {
        log::warn!(
            "default batch size {} exceeds the {} training images; using {}",
            cfg.batch_size,
            train_set.len(),
            train_set.len()
        );
        cfg.batch_size = train_set.len();
    }

    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let outputs = vec![
        ("checkpoint", args.out.join("model.gckpt")),
        ("history", args.out.join("history.csv")),
        ("plot", args.out.join("loss.svg")),
        ("config", args.out.join("config.txt")),
        ("manifest", args.out.join("manifest.json")),
    ];
    let out = |name: &str| outputs.iter().find(|(n, _)| *n == name).map(|(_, p)| p.clone()).expect("known output");
    let mut reproduce: Vec<String> = ["gradecore", "train", "--model", cfg.model.as_str(), "--data"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    reproduce.push(args.data.display().to_string());
    reproduce.extend(["--config".into(), out("config").display().to_string()]);
    reproduce.extend(["--precision".into(), args.precision.as_str().into()]);
    reproduce.extend(["--out".into(), args.out.display().to_string()]);

    let mut manifest = Manifest {
        config: cfg.to_pairs(),
        config_hash: cfg.config_hash(),
        precision: args.precision.as_str().into(),
        data: args.data.clone(),
        cache: args.cache.clone(),
        fingerprint: fingerprint(&args.data, &files)?,
        split: (train_set.len(), test_set.len()),
        outputs: outputs.clone(),
        reproduce,
        started_unix: unix_now(),
        finished_unix: None,
        results: Vec::new(),
    };
    write_file(&out("config"), cfg.to_text())?;
    manifest.write(&out("manifest"))?;
    emit(
        "start",
        json!({ "model": cfg.model.as_str(), "train": train_set.len(), "test": test_set.len(), "config_hash": format!("{:08x}", cfg.config_hash()) }),
    );

    let mut outcome = training::train(&cfg, &train_set, &test_set)?;
    for r in &outcome.history.records {
        emit(
            "epoch",
            json!({ "epoch": r.epoch, "train_loss": r.train_loss, "train_acc": r.train_accuracy, "val_loss": r.val_loss, "val_acc": r.val_accuracy }),
        );
    }
    let tr = training::evaluate(&mut outcome.model, &train_set)?;
    let te = training::evaluate(&mut outcome.model, &test_set)?;
    let results = [
        ("train_accuracy", tr.accuracy),
        ("train_loss", tr.mean_loss),
        ("test_accuracy", te.accuracy),
        ("test_loss", te.mean_loss),
    ];
    for (k, v) in results {
        outcome.model.metadata.set_metric(k, v);
    }

    checkpoint::save(&outcome.model, &out("checkpoint"))?;
    let csv = outcome.history.to_csv();
    write_file(&out("history"), &csv)?;
    write_file(&out("plot"), loss_curve_svg(&History::from_csv(&csv)?)?)?;
    manifest.finished_unix = Some(unix_now());
    manifest.results = results.to_vec();
    manifest.write(&out("manifest"))?;

    if let (Some(stop), Some(best)) = (outcome.stopped_at, outcome.restored_epoch) {
        println!("Early stopping after epoch {stop}; restored epoch {best}");
    }
    println!("Training Accuracy: {}", percent(tr.accuracy));
    println!("Training Loss: {:.4}", tr.mean_loss);
    println!("Test Accuracy: {}", percent(te.accuracy));
    println!("Test Loss: {:.4}", te.mean_loss);
    println!("Saved {}", out("checkpoint").display());
    emit("result", json!(results.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>()));
    Ok(())
}

fn print_evaluation(eval: &Evaluation, class_names: &[String]) {
    println!("Accuracy: {} ({}/{})", percent(eval.accuracy), eval.correct(), eval.total());
    println!("Loss: {:.4}", eval.mean_loss);
    let width = class_names.iter().map(|n| n.len()).max().unwrap_or(0).max(6);
    print!("{:width$}", "");
    for name in class_names {
        print!("  {name:>width$}");
    }
    println!();
    for (name, row) in class_names.iter().zip(&eval.confusion) {
        print!("{name:width$}");
        for n in row {
            print!("  {n:>width$}");
        }
        println!();
    }
}

fn evaluate_cmd<T: Scalar>(args: &EvaluateArgs) -> Result<(), Failure> {
    let mut model = checkpoint::load::<T>(&args.checkpoint)?;
    let data = load_directory::<T>(&args.data, model.image_shape[1])?;
    if data.class_names() != model.class_names.as_slice() {
        return Err(Failure::Runtime(format!(
            "dataset classes {:?} do not match checkpoint classes {:?}",
            data.class_names(),
            model.class_names
        )));
    }
    let eval = training::evaluate(&mut model, &data)?;
    print_evaluation(&eval, &model.class_names);
    emit("evaluation", json!({ "accuracy": eval.accuracy, "loss": eval.mean_loss, "confusion": eval.confusion }));
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), Failure> {
    match checkpoint::peek(&args.checkpoint)?.1 {
        DType::F32 => evaluate_cmd::<f32>(args),
        DType::F64 => evaluate_cmd::<f64>(args),
    }
}

fn predict_cmd<T: Scalar>(args: &PredictArgs) -> Result<(), Failure> {
    let mut model = checkpoint::load::<T>(&args.checkpoint)?;
    let image = load_image::<T>(&args.image, model.image_shape[1])?;
    let probs = model.predict_proba(&[&image])?;
    let class = model.predict(&[&image])?[0];
    let row: Vec<f64> = probs.row(0).iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect();
    for (name, p) in model.class_names.iter().zip(&row) {
        println!("{name}: {p:.6}");
    }
    println!("Predicted: {}", model.class_names[class]);
    emit("prediction", json!({ "class": model.class_names[class], "probabilities": row }));
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<(), Failure> {
    match checkpoint::peek(&args.checkpoint)?.1 {
        DType::F32 => predict_cmd::<f32>(args),
        DType::F64 => predict_cmd::<f64>(args),
    }
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<(), Failure> {
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be at least 1".into()));
    }
    let mut failed = 0;
    let mut total = 0;
    for spec in ModelSpec::ALL {
        for seed in args.seed..args.seed + args.seeds {
            let report = check_spec(spec, seed, args.tolerance)?;
            let worst = report.entries.iter().map(|e| e.max_rel_error).fold(report.input_error, f64::max);
            let verdict = if report.passed() { "ok" } else { "FAIL" };
            println!("{} seed {seed}: max rel error {worst:.3e}  {verdict}", spec.name());
            if !report.passed() {
                println!("{report}");
                failed += 1;
            }
            total += 1;
            emit("gradcheck", json!({ "network": spec.name(), "seed": seed, "max_rel_error": worst, "passed": report.passed() }));
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {total} gradient checks failed")));
    }
    println!("all {total} gradient checks passed (tolerance {:e})", args.tolerance);
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.history).map_err(|e| io_failure(&args.history, e))?;
    let history = History::from_csv(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", args.history.display())))?;
    write_file(&args.out, loss_curve_svg(&history)?)?;
    println!("Wrote {}", args.out.display());
    Ok(())
}
