//! A daily batch run: ingest a month of synthetic files into a store, detect
//! one date, and write the report as JSON Lines and CSV.

use chrono::NaiveDate;
use odm_anomaly::cli::{cmd_detect, cmd_ingest};
use odm_anomaly::synth::write_output;
use odm_anomaly::{generate, ReportFormat, RunConfig, SynthSpec, WindowSpan};

fn main() -> odm_anomaly::Result<()> {
    let work = std::env::temp_dir().join(format!("odm-batch-example-{}", std::process::id()));
    let mut spec = SynthSpec::new(25, 0.4, 80.0, 3, NaiveDate::from_ymd_opt(2022, 6, 6).unwrap());
    spec.noise = 0.3;
    spec.baseline_dispersion = 0.5;
    spec.windows = WindowSpan::equal_partition(3)?;
    write_output(&generate(&spec)?, spec.seed, &work.join("incoming"))?;

    let mut files: Vec<_> = std::fs::read_dir(work.join("incoming"))
        .map_err(|e| odm_anomaly::Error::io(&work, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();

    let mut cfg = RunConfig::load(None, &[("expected_windows_per_day".into(), "3".into())])?;
    cfg.store_root = work.join("store");

    let (mut out, mut err) = (Vec::new(), std::io::stderr());
    let code = cmd_ingest(&files, "synthetic", &cfg, &mut out, &mut err);
    println!("ingest exit {code}, {} day reports", out.iter().filter(|&&b| b == b'\n').count());

    let date = spec.first_target_date();
    for format in [ReportFormat::Jsonl, ReportFormat::Csv] {
        cfg.format = format;
        let mut report = Vec::new();
        let code = cmd_detect("synthetic", date, &cfg, &mut report, &mut err);
        let text = String::from_utf8_lossy(&report);
        println!("--- detect {date} as {format:?}: exit {code}, {} lines", text.lines().count());
        for line in text.lines().take(4) {
            println!("{}", &line[..line.len().min(160)]);
        }
    }
    std::fs::remove_dir_all(&work).ok();
    Ok(())
}
