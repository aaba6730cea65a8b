//! Run configuration.
//!
//! Values come from built-in defaults, then an optional `key = value` file,
//! then explicit overrides (command-line flags), each layer replacing the
//! previous one. Keys match the [`RunConfig`] field names.

use std::fs;
use std::path::{Path, PathBuf};

use crate::detect::DetectorConfig;
use crate::error::{Error, Result};
use crate::report::ReportFormat;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub detector: DetectorConfig,
    pub store_root: PathBuf,
    /// Report destination; standard output when unset.
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    /// Worker threads; available parallelism when unset.
    pub workers: Option<usize>,
    /// Window count for sources ingested without a stored profile.
    pub expected_windows_per_day: Option<u32>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            detector: DetectorConfig::default(),
            store_root: PathBuf::from("odm-store"),
            output: None,
            format: ReportFormat::Jsonl,
            workers: None,
            expected_windows_per_day: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// Parse `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let v = v.trim().trim_matches('"');
        out.push((k.trim().to_string(), v.to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let d = &mut self.detector;
        match key {
            "th" => d.th = parse(key, value)?,
            "p" => d.p = parse(key, value)?,
            "quantile" => d.quantile = parse(key, value)?,
            "stride" => d.stride = value.parse()?,
            "bounds_mode" => d.bounds_mode = value.parse()?,
            "emit_below_eligibility" => d.emit_below_eligibility = parse(key, value)?,
            "store_root" => self.store_root = PathBuf::from(value),
            "output" => self.output = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "workers" => {
                let w: usize = parse(key, value)?;
                self.workers = (w > 0).then_some(w);
            }
            "expected_windows_per_day" => self.expected_windows_per_day = Some(parse(key, value)?),
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (k, v) in parse_kv(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.detector.validate()?;
        Ok(cfg)
    }

    /// A rayon pool sized by `workers`.
    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.workers {
            b = b.num_threads(w);
        }
        b.build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
    }
}
