//! JSON-lines logger on stderr. No timestamps, so two runs log identically.

use std::io::Write;

use log::{Level, LevelFilter, Log, Metadata, Record};
use serde_json::json;

struct JsonLogger {
    level: LevelFilter,
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= self.level
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let line = json!({
            "level": record.level().as_str().to_ascii_lowercase(),
            "target": record.target(),
            "msg": record.args().to_string(),
        });
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{line}");
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

/// `MGDIL_LOG` (error|warn|info|debug|trace) wins over the verbosity flags.
pub fn init(verbose: u8, quiet: bool) {
    let from_flags = match (quiet, verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    let level = std::env::var("MGDIL_LOG")
        .ok()
        .and_then(|v| v.parse::<Level>().ok())
        .map(|l| l.to_level_filter())
        .unwrap_or(from_flags);
    let logger: &'static JsonLogger = Box::leak(Box::new(JsonLogger { level }));
    if log::set_logger(logger).is_ok() {
        log::set_max_level(level);
    }
}
