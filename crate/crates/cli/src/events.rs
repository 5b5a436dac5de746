use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};

use serde_json::{json, Value};

static JSON: AtomicBool = AtomicBool::new(false);

/// Sets up stderr logging; with `json` every record is one JSON object.
pub fn init(json: bool) {
    JSON.store(json, Ordering::Relaxed);
    let mut builder = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if json {
        builder.format(|buf, record| {
            let line = json!({
                "event": "log",
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    builder.init();
}

/// Structured event line, written only in JSON mode.
pub fn emit(event: &str, mut fields: Value) {
    if !JSON.load(Ordering::Relaxed) {
        return;
    }
    if let Value::Object(map) = &mut fields {
        map.insert("event".into(), Value::String(event.into()));
    }
    eprintln!("{fields}");
}
