//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{Datelike, Days, NaiveDate};
use odm_anomaly::bench::{run_bench, BenchParams};
use odm_anomaly::cli::cmd_detect;
use odm_anomaly::{
    bounds_for, daily_quantile_threshold, detect_day, evaluate_key, generate, AnomalyKind,
    AnomalySpec, AreaId, BoundsMode, DayReport, DetectorConfig, Direction, FlowKey, HistoryStore,
    OdmEntry, ReportFormat, RollingStats, RunConfig, SignalLevel, SparseOdm, Status, Stride,
    SynthSpec, SyntheticWorld, ThresholdSet, TimeWindow, WindowSpan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

// ---------------------------------------------------------------------------

fn micro_examples() -> Check {
    let cfg = DetectorConfig::default();
    ensure(cfg.th == 20 && cfg.p == 4 && cfg.quantile == 0.75, || format!("defaults {cfg:?}"))?;

    let key = FlowKey::cell(AreaId::new("a").unwrap(), AreaId::new("b").unwrap());
    let hist = [Some(90), Some(110), Some(90), Some(110)];
    let stats = RollingStats::from_history(key.clone(), &hist);
    let m = &stats.moments;
    ensure(m.n() == 4 && m.sum() == 400 && m.sum_sq() == 40_400, || format!("moments {m:?}"))?;
    let (ma, sd) = (stats.ma().unwrap(), stats.sd().unwrap());
    ensure(ma == 100.0 && rel(sd, 10.0), || format!("ma {ma} sd {sd}"))?;

    let window = TimeWindow::full_day(NaiveDate::from_ymd_opt(2020, 3, 2).unwrap());
    let cells = [("a", "b", 20), ("a", "c", 40), ("b", "a", 60), ("c", "a", 80), ("c", "b", 19), ("b", "c", 3)];
    let odm = SparseOdm::from_entries(
        window,
        cells
            .iter()
            .map(|(o, d, c)| OdmEntry::new(AreaId::new(o).unwrap(), AreaId::new(d).unwrap(), *c)),
    )
    .unwrap();
    let ts = daily_quantile_threshold(&odm, cfg.th, cfg.quantile).unwrap();
    ensure(ts.t == 60 && ts.eligible_count == 4 && !ts.degenerate, || format!("threshold {ts:?}"))?;

    let clamped = bounds_for(&stats, &ts, BoundsMode::Clamped).unwrap();
    let literal = bounds_for(&stats, &ts, BoundsMode::PaperLiteral).unwrap();
    ensure(rel(clamped.upper, 160.0) && rel(literal.upper, 160.0), || format!("U {clamped:?}"))?;
    ensure(rel(clamped.lower, 40.0), || format!("clamped L {}", clamped.lower))?;
    ensure(literal.lower == 0.0, || format!("literal L {}", literal.lower))?;
    Ok(format!(
        "ma={ma} sd={sd} t={} U={} L_clamped={} L_literal={}",
        ts.t, clamped.upper, clamped.lower, literal.lower
    ))
}

// ---------------------------------------------------------------------------

fn bands() -> Check {
    let ts = ThresholdSet {
        th: 20,
        q: 0.75,
        t: 60,
        eligible_count: 4,
        degenerate: false,
    };
    let key = FlowKey::outbound(AreaId::new("x").unwrap());
    let mut checked = 0;
    for hist in [[100u64; 4], [90, 110, 90, 110]] {
        let stats = RollingStats::from_history(key.clone(), &hist.map(Some));
        for (observed, dir, level, inc) in [
            (250, Direction::Upper, SignalLevel::Level3, 150.0),
            (170, Direction::Upper, SignalLevel::Level2, 70.0),
            (10, Direction::Lower, SignalLevel::Level2, -90.0),
        ] {
            let out = evaluate_key(observed, &stats, &ts, BoundsMode::Clamped);
            let Status::Signal(s) = &out.status else {
                return Err(format!("({observed},100) history {hist:?}: {:?}", out.status));
            };
            ensure(s.direction == dir && s.level == level && s.inc_percent == inc, || {
                format!("({observed},100): {s:?}")
            })?;
            checked += 1;
        }
    }
    for (observed, hist) in [(0, [19u64, 19, 19, 19]), (500, [10, 30, 10, 25]), (5000, [0, 0, 0, 0])] {
        let stats = RollingStats::from_history(key.clone(), &hist.map(Some));
        for mode in [BoundsMode::Clamped, BoundsMode::PaperLiteral] {
            let out = evaluate_key(observed, &stats, &ts, mode);
            ensure(out.status == Status::BelowEligibility, || format!("{hist:?}: {:?}", out.status))?;
            checked += 1;
        }
    }
    let stats = RollingStats::from_history(key.clone(), &[None; 4]);
    for observed in [0, 10_000] {
        let out = evaluate_key(observed, &stats, &ts, BoundsMode::Clamped);
        ensure(out.status == Status::MissingData, || format!("all missing: {:?}", out.status))?;
        checked += 1;
    }
    Ok(format!("{checked} cases"))
}

// ---------------------------------------------------------------------------

fn oracle_equivalence() -> Check {
    let t0 = Instant::now();
    let mut discrepancies = Vec::new();
    let mut keys = 0;
    let mut signals = 0;
    for trial in 0..200u64 {
        let stride = if trial % 2 == 0 { Stride::Daily } else { Stride::Weekly };
        let mode = if trial % 4 < 2 {
            BoundsMode::Clamped
        } else {
            BoundsMode::PaperLiteral
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0000 + trial);
        let case = common::cases::random_case_with(&mut rng, stride, mode);
        let dense = common::dense_detect(&case.current, &case.history, case.th, case.q, mode == BoundsMode::Clamped);
        keys += dense.outcomes.len();
        signals += dense
            .outcomes
            .iter()
            .filter(|o| o.status.name() == "signal")
            .count();
        for e in common::check_case(&case) {
            discrepancies.push(format!("trial {trial}: {e}"));
        }
    }
    let elapsed = t0.elapsed();
    ensure(discrepancies.is_empty(), || {
        format!("{} discrepancies, first: {}", discrepancies.len(), discrepancies[0])
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "200 trials, {keys} keys, {signals} signals, 0 discrepancies, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// Synthetic suite: noise-free weekly world, 4 clean weeks, then one target
// week with 100 spikes (x3) and 100 drops (x0.1) on cells with count >= 2·th.

const TH: u64 = 20;

struct Suite {
    spec: SynthSpec,
    world: SyntheticWorld,
}

fn suite_spec(noise: f64) -> SynthSpec {
    let mut s = SynthSpec::new(60, 0.35, 120.0, 2024, NaiveDate::from_ymd_opt(2021, 2, 1).unwrap());
    s.baseline_dispersion = 0.6;
    s.weekday_factors = [1.0, 1.1, 0.9, 1.2, 1.0, 0.6, 0.5];
    s.noise = noise;
    s.warmup_days = 28;
    s.target_days = 7;
    s.windows = WindowSpan::equal_partition(4).unwrap();
    s
}

fn weekday_factor(spec: &SynthSpec, date: NaiveDate) -> f64 {
    spec.weekday_factors[date.weekday().num_days_from_monday() as usize]
}

fn clean_count(baseline: f64, spec: &SynthSpec, date: NaiveDate) -> u64 {
    (baseline * weekday_factor(spec, date)).round() as u64
}

fn build_suite(noise: f64) -> Suite {
    let mut spec = suite_spec(noise);
    let world = SyntheticWorld::new(spec.clone()).unwrap();
    let cells: Vec<(FlowKey, f64)> = world.cells().collect();
    let first = spec.first_target_date();
    let slots: Vec<TimeWindow> = (0..7)
        .flat_map(|d| spec.windows.iter().map(move |w| w.on(first + Days::new(d))))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut used = BTreeSet::new();
    let mut anomalies = Vec::new();
    for i in 0..200 {
        let window = slots[i % slots.len()];
        let (key, _) = loop {
            let (key, b) = &cells[rng.gen_range(0..cells.len())];
            if clean_count(*b, &spec, window.date) >= 2 * TH && used.insert((window, key.clone())) {
                break (key.clone(), *b);
            }
        };
        let (kind, magnitude) = if i < 100 {
            (AnomalyKind::Spike, 3.0)
        } else {
            (AnomalyKind::Drop, 0.1)
        };
        anomalies.push(AnomalySpec {
            key,
            window,
            kind,
            magnitude,
        });
    }
    spec.anomalies = anomalies;
    let world = SyntheticWorld::new(spec.clone()).unwrap();
    Suite { spec, world }
}

fn store_for(suite: &Suite, dir: &std::path::Path) -> HistoryStore {
    let store = HistoryStore::open(dir).unwrap().with_retention(None);
    store.put_many("syn", &generate(&suite.spec).unwrap().snapshots).unwrap();
    store
}

fn detect_week(suite: &Suite, store: &HistoryStore, mode: BoundsMode) -> Vec<DayReport> {
    let cfg = DetectorConfig {
        bounds_mode: mode,
        ..DetectorConfig::default()
    };
    let first = suite.spec.first_target_date();
    (0..suite.spec.target_days as u64)
        .map(|d| detect_day(store, "syn", first + Days::new(d), &cfg).unwrap())
        .collect()
}

type Predicted = BTreeMap<(TimeWindow, FlowKey), (Direction, u8)>;

fn level_of(obs: u64, ma: u64) -> u8 {
    let dev = obs.abs_diff(ma) as u128 * 100;
    if dev < 50 * ma as u128 {
        1
    } else if dev < 100 * ma as u128 {
        2
    } else {
        3
    }
}

/// Signals implied in closed form for the noise-free suite. History is the
/// same weekday in the four clean weeks, so every series has `sd = 0`, `ma`
/// equal to its clean value, `U = ma + t` and clamped `L = max(ma − t, 0)`.
fn closed_form(suite: &Suite, clamped: bool) -> (Predicted, BTreeMap<TimeWindow, u64>) {
    let spec = &suite.spec;
    let cells: Vec<(FlowKey, f64)> = suite.world.cells().collect();
    let mut predicted = Predicted::new();
    let mut thresholds = BTreeMap::new();
    for d in 0..spec.target_days as u64 {
        let date = spec.first_target_date() + Days::new(d);
        for span in &spec.windows {
            let window = span.on(date);
            let factor: BTreeMap<&FlowKey, f64> = spec
                .anomalies
                .iter()
                .filter(|a| a.window == window)
                .map(|a| (&a.key, a.magnitude))
                .collect();
            let mut series: BTreeMap<FlowKey, (u64, u64)> = BTreeMap::new();
            let mut eligible = Vec::new();
            for (key, b) in &cells {
                let ma = clean_count(*b, spec, date);
                if ma == 0 {
                    continue;
                }
                let obs = match factor.get(key) {
                    Some(f) => (ma as f64 * f).round() as u64,
                    None => ma,
                };
                if obs >= TH {
                    eligible.push(obs);
                }
                series.insert(key.clone(), (ma, obs));
                let (o, dst) = (key.origin().unwrap(), key.destination().unwrap());
                let inb = series.entry(FlowKey::inbound(dst.clone())).or_insert((0, 0));
                if o != dst {
                    inb.0 += ma;
                    inb.1 += obs;
                }
                let out = series.entry(FlowKey::outbound(o.clone())).or_insert((0, 0));
                if o != dst {
                    out.0 += ma;
                    out.1 += obs;
                }
            }
            eligible.sort_unstable();
            let t = if eligible.is_empty() {
                TH
            } else {
                eligible[(3 * eligible.len()).div_ceil(4) - 1]
            };
            thresholds.insert(window, t);
            for (key, (ma, obs)) in series {
                if ma < TH {
                    continue;
                }
                if obs > ma + t {
                    predicted.insert((window, key), (Direction::Upper, level_of(obs, ma)));
                } else if clamped && ma > t && obs < ma - t {
                    predicted.insert((window, key), (Direction::Lower, level_of(obs, ma)));
                }
            }
        }
    }
    (predicted, thresholds)
}

fn detected(reports: &[DayReport]) -> Predicted {
    reports
        .iter()
        .flat_map(|r| r.windows.iter())
        .flat_map(|w| {
            w.signals()
                .map(move |(k, s)| ((w.window, k.clone()), (s.direction, s.level.as_u8())))
        })
        .collect()
}

fn injected_recall() -> Check {
    let suite = build_suite(0.0);
    let dir = tempfile::tempdir().unwrap();
    let store = store_for(&suite, dir.path());
    let reports = detect_week(&suite, &store, BoundsMode::Clamped);
    let got = detected(&reports);
    let (want, thresholds) = closed_form(&suite, true);

    for r in &reports {
        for w in &r.windows {
            ensure(w.threshold.t == thresholds[&w.window], || {
                format!("{}: t {} != {}", w.window, w.threshold.t, thresholds[&w.window])
            })?;
        }
    }
    let missed: Vec<_> = want.iter().filter(|(k, v)| got.get(*k) != Some(*v)).collect();
    let extra: Vec<_> = got.iter().filter(|(k, _)| !want.contains_key(*k)).collect();

    let mut tally = BTreeMap::new();
    for a in &suite.spec.anomalies {
        let e = tally.entry(a.kind).or_insert((0, 0));
        if want.contains_key(&(a.window, a.key.clone())) {
            e.0 += 1;
            if got.contains_key(&(a.window, a.key.clone())) {
                e.1 += 1;
            }
        }
    }
    let injected: BTreeSet<_> = suite.spec.anomalies.iter().map(|a| (a.window, a.key.clone())).collect();
    let stray_cells = got
        .keys()
        .filter(|(w, k)| k.kind_name() == "cell" && !injected.contains(&(*w, k.clone())))
        .count();

    ensure(missed.is_empty() && extra.is_empty() && stray_cells == 0, || {
        format!(
            "{} missed, {} unexpected, {stray_cells} on clean cells; first missed {:?}, first unexpected {:?}",
            missed.len(),
            extra.len(),
            missed.first(),
            extra.first()
        )
    })?;
    let (s, d) = (tally[&AnomalyKind::Spike], tally[&AnomalyKind::Drop]);
    ensure(s.0 > 0 && d.0 > 0, || "no injection breaches in closed form".into())?;
    let marginals = got.keys().filter(|(_, k)| k.kind_name() != "cell").count();
    Ok(format!(
        "spikes {}/{} breaching detected, drops {}/{} breaching detected, {marginals} marginal signals as predicted, 0 elsewhere",
        s.1, s.0, d.1, d.0
    ))
}

fn literal_no_lower() -> Check {
    let mut lines = Vec::new();
    for noise in [0.0, 0.25] {
        let suite = build_suite(noise);
        let dir = tempfile::tempdir().unwrap();
        let store = store_for(&suite, dir.path());
        let literal = detect_week(&suite, &store, BoundsMode::PaperLiteral);
        let clamped = detect_week(&suite, &store, BoundsMode::Clamped);
        let lower: u64 = literal.iter().map(|r| r.lower_signals()).sum();
        let upper: u64 = literal.iter().map(|r| r.upper_signals()).sum();
        let clamped_lower: u64 = clamped.iter().map(|r| r.lower_signals()).sum();
        let clamped_upper: u64 = clamped.iter().map(|r| r.upper_signals()).sum();
        ensure(lower == 0, || format!("noise {noise}: {lower} lower signals"))?;
        ensure(upper == clamped_upper, || format!("noise {noise}: upper {upper} != {clamped_upper}"))?;
        ensure(clamped_lower > 0, || format!("noise {noise}: suite has no drops to suppress"))?;
        if noise == 0.0 {
            let (want, _) = closed_form(&suite, false);
            ensure(detected(&literal) == want, || "literal signals differ from closed form".into())?;
        }
        lines.push(format!("noise {noise}: 0 lower ({clamped_lower} under clamped), {upper} upper"));
    }
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------------------

fn scale() -> Check {
    let cfg = DetectorConfig::default();
    let params = BenchParams {
        n_areas: 10_000,
        nnz_per_window: 1_000_000,
        windows: 25,
        p: 4,
        ..BenchParams::default()
    };
    let r = run_bench(&params, &cfg).map_err(|e| e.to_string())?;
    let total = r.detection_total();
    ensure(total < Duration::from_secs(60), || format!("detection took {total:?}"))?;
    ensure(r.nnz_observed >= 990_000, || format!("only {} nonzeros per window", r.nnz_observed))?;

    // min of two runs per size
    let time_at = |nnz: usize| -> Result<f64, String> {
        let p = BenchParams {
            n_areas: 10_000,
            nnz_per_window: nnz,
            ..params.clone()
        };
        let mut best = f64::INFINITY;
        for _ in 0..2 {
            let r = run_bench(&p, &cfg).map_err(|e| e.to_string())?;
            best = best.min(r.detection_total().as_secs_f64());
        }
        Ok(best)
    };
    let single = time_at(250_000)?;
    let doubled = time_at(500_000)?;
    let ratio = doubled / single;
    ensure(ratio <= 2.5, || format!("2x nonzeros took {ratio:.2}x"))?;
    Ok(format!(
        "{} series over 25 windows in {:.2} s (stats {:.2}, thresholds {:.2}, detection {:.2}); 2x nonzeros -> {ratio:.2}x",
        r.series_evaluated,
        total.as_secs_f64(),
        r.stages.stats.as_secs_f64(),
        r.stages.thresholds.as_secs_f64(),
        r.stages.detection.as_secs_f64(),
    ))
}

// ---------------------------------------------------------------------------

fn determinism() -> Check {
    let suite = build_suite(0.25);
    let dir = tempfile::tempdir().unwrap();
    store_for(&suite, dir.path());
    let date = suite.spec.first_target_date() + Days::new(2);
    let mut sizes = Vec::new();
    for format in [ReportFormat::Jsonl, ReportFormat::Csv] {
        let mut outputs = Vec::new();
        for workers in [1, 1, 2, 4, 3] {
            let cfg = RunConfig {
                store_root: dir.path().to_path_buf(),
                workers: Some(workers),
                format,
                ..RunConfig::default()
            };
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = cmd_detect("syn", date, &cfg, &mut out, &mut err);
            ensure(code == 0, || format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
            outputs.push(out);
        }
        ensure(outputs.iter().all(|o| *o == outputs[0]), || format!("{format:?} reports differ"))?;
        ensure(outputs[0].windows(8).any(|w| w == b"\"signal\"" || w == b",signal,"), || {
            "report carries no signals".into()
        })?;
        sizes.push(outputs[0].len());
    }
    Ok(format!(
        "jsonl {} bytes and csv {} bytes identical over 5 runs with 1-4 workers",
        sizes[0], sizes[1]
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("default parameters and worked micro-examples", micro_examples),
        ("classification bands and check order", bands),
        ("sparse path equals dense brute force (200 trials)", oracle_equivalence),
        ("injected anomalies detected exactly as predicted", injected_recall),
        ("paper_literal mode never emits lower signals", literal_no_lower),
        ("10k areas x 1e6 nonzeros x 25 windows under 60 s, linear scaling", scale),
        ("byte-identical reports across runs and worker counts", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} [{secs:.1} s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1} s]: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
