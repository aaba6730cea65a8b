//! Generate a noise-free synthetic source with labelled spikes and drops,
//! run detection over the target week, and score it against the labels.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use odm_anomaly::{
    detect_day, generate, AnomalyKind, AnomalySpec, DetectorConfig, HistoryStore, SynthSpec,
    SyntheticWorld, WindowSpan,
};

fn main() -> odm_anomaly::Result<()> {
    let mut spec = SynthSpec::new(40, 0.3, 150.0, 7, NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
    spec.baseline_dispersion = 0.8;
    spec.weekday_factors = [1.0, 1.0, 1.05, 1.1, 1.2, 0.7, 0.6];
    spec.target_days = 7;
    spec.windows = WindowSpan::equal_partition(2)?;

    // label the largest cells
    let world = SyntheticWorld::new(spec.clone())?;
    let mut cells: Vec<_> = world.cells().filter(|(k, _)| k.origin() != k.destination()).collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (i, (key, _)) in cells.iter().take(20).enumerate() {
        let date = spec.first_target_date() + Days::new(i as u64 % 7);
        let (kind, magnitude) = if i % 2 == 0 { (AnomalyKind::Spike, 3.0) } else { (AnomalyKind::Drop, 0.1) };
        spec.anomalies.push(AnomalySpec {
            key: key.clone(),
            window: spec.windows[i % 2].on(date),
            kind,
            magnitude,
        });
    }

    let out = generate(&spec)?;
    let dir = std::env::temp_dir().join(format!("odm-synth-example-{}", std::process::id()));
    let store = HistoryStore::open(&dir)?.with_retention(None);
    store.put_many("synthetic", &out.snapshots)?;

    let cfg = DetectorConfig::default();
    let mut found = BTreeSet::new();
    let mut other = 0;
    for d in 0..spec.target_days as u64 {
        let report = detect_day(&store, "synthetic", spec.first_target_date() + Days::new(d), &cfg)?;
        for w in &report.windows {
            for (key, _) in w.signals() {
                if out.labels.iter().any(|a| a.window == w.window && a.key == *key) {
                    found.insert((w.window, key.clone()));
                } else {
                    other += 1;
                }
            }
        }
    }
    for kind in [AnomalyKind::Spike, AnomalyKind::Drop] {
        let labels: Vec<_> = out.labels.iter().filter(|a| a.kind == kind).collect();
        let hit = labels.iter().filter(|a| found.contains(&(a.window, a.key.clone()))).count();
        println!("{kind:?}: {hit}/{} labelled cells flagged", labels.len());
    }
    println!("{other} further signals (marginals of the affected areas)");
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
