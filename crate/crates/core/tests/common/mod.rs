//! Dense brute-force reference detector shared by the integration tests.
//!
//! Every matrix is expanded to a full `n × n` array over the union of labels
//! and every quantity is recomputed from scratch with exact integers.

#![allow(dead_code)]

use std::collections::BTreeSet;

use odm_anomaly::{FlowKey, SparseOdm};

/// Quantile as an exact fraction `num / den`.
#[derive(Clone, Copy, Debug)]
pub struct Frac {
    pub num: u64,
    pub den: u64,
}

impl Frac {
    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DenseStatus {
    NoSignal,
    Below,
    Missing,
    Upper(u8),
    Lower(u8),
}

impl DenseStatus {
    pub fn name(&self) -> &'static str {
        match self {
            DenseStatus::NoSignal => "no_signal",
            DenseStatus::Below => "below_eligibility",
            DenseStatus::Missing => "missing_data",
            DenseStatus::Upper(_) | DenseStatus::Lower(_) => "signal",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenseOutcome {
    pub kind: &'static str,
    pub origin: Option<String>,
    pub destination: Option<String>,
    pub observed: u64,
    pub n: u64,
    pub sum: u64,
    pub sum_sq: u64,
    pub status: DenseStatus,
}

impl DenseOutcome {
    pub fn ma(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }

    pub fn sd(&self) -> Option<f64> {
        (self.n > 0).then(|| {
            let n = self.n as f64;
            ((n * self.sum_sq as f64 - (self.sum as f64).powi(2)).max(0.0)).sqrt() / n
        })
    }
}

pub struct DenseResult {
    pub t: u64,
    pub eligible: usize,
    pub outcomes: Vec<DenseOutcome>,
}

struct Dense {
    n: usize,
    v: Vec<u64>,
}

impl Dense {
    fn get(&self, i: usize, j: usize) -> u64 {
        self.v[i * self.n + j]
    }

    fn row_off(&self, i: usize) -> u64 {
        (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum()
    }

    fn col_off(&self, j: usize) -> u64 {
        (0..self.n).filter(|&i| i != j).map(|i| self.get(i, j)).sum()
    }
}

fn densify(m: &SparseOdm, labels: &[String]) -> Dense {
    let n = labels.len();
    let mut v = vec![0u64; n * n];
    for e in m.entries() {
        let i = labels.iter().position(|l| l == e.origin.as_str()).unwrap();
        let j = labels.iter().position(|l| l == e.destination.as_str()).unwrap();
        v[i * n + j] += e.count;
    }
    Dense { n, v }
}

fn level(dev_abs: u64, sum: u64) -> u8 {
    // |inc| = 100·|dev| / sum; bands at 50 and 100
    if sum == 0 {
        return 3;
    }
    let x = 100 * dev_abs as u128;
    if x < 50 * sum as u128 {
        1
    } else if x < 100 * sum as u128 {
        2
    } else {
        3
    }
}

/// `history` in slot order, `None` for a missing period.
pub fn dense_detect(
    current: &SparseOdm,
    history: &[Option<SparseOdm>],
    th: u64,
    q: Frac,
    clamped: bool,
) -> DenseResult {
    let mut names = BTreeSet::new();
    for m in std::iter::once(current).chain(history.iter().flatten()) {
        for e in m.entries() {
            names.insert(e.origin.as_str().to_string());
            names.insert(e.destination.as_str().to_string());
        }
    }
    let labels: Vec<String> = names.into_iter().collect();
    let n = labels.len();
    let cur = densify(current, &labels);
    let hist: Vec<Dense> = history.iter().flatten().map(|m| densify(m, &labels)).collect();
    let periods = hist.len() as u64;

    let mut values: Vec<u64> = cur.v.iter().copied().filter(|&x| x > 0 && x >= th).collect();
    values.sort();
    let eligible = values.len();
    let t = if values.is_empty() {
        th
    } else {
        let rank = (q.num * eligible as u64).div_ceil(q.den).max(1) as usize;
        values[rank - 1]
    };

    let judge = |observed: u64, series: Vec<u64>| -> (u64, u64, DenseStatus) {
        let sum: u64 = series.iter().sum();
        let sum_sq: u64 = series.iter().map(|x| x * x).sum();
        if periods == 0 {
            return (sum, sum_sq, DenseStatus::Missing);
        }
        let nn = periods as i128;
        if (sum as i128) < th as i128 * nn {
            return (sum, sum_sq, DenseStatus::Below);
        }
        let spread = nn * sum_sq as i128 - (sum as i128) * (sum as i128);
        let dev = nn * observed as i128 - sum as i128;
        let out = |d: i128| d > nn * t as i128 && d > 0 && d * d > 9 * spread;
        let status = if out(dev) {
            DenseStatus::Upper(level(dev as u64, sum))
        } else if clamped && out(-dev) {
            DenseStatus::Lower(level((-dev) as u64, sum))
        } else {
            DenseStatus::NoSignal
        };
        (sum, sum_sq, status)
    };

    let present = |i: usize, j: usize| cur.get(i, j) > 0 || hist.iter().any(|h| h.get(i, j) > 0);
    let mut outcomes = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !present(i, j) {
                continue;
            }
            let (sum, sum_sq, status) = judge(cur.get(i, j), hist.iter().map(|h| h.get(i, j)).collect());
            outcomes.push(DenseOutcome {
                kind: "cell",
                origin: Some(labels[i].clone()),
                destination: Some(labels[j].clone()),
                observed: cur.get(i, j),
                n: periods,
                sum,
                sum_sq,
                status,
            });
        }
    }
    for j in 0..n {
        if (0..n).any(|i| present(i, j)) {
            let (sum, sum_sq, status) = judge(cur.col_off(j), hist.iter().map(|h| h.col_off(j)).collect());
            outcomes.push(DenseOutcome {
                kind: "inbound",
                origin: None,
                destination: Some(labels[j].clone()),
                observed: cur.col_off(j),
                n: periods,
                sum,
                sum_sq,
                status,
            });
        }
    }
    for i in 0..n {
        if (0..n).any(|j| present(i, j)) {
            let (sum, sum_sq, status) = judge(cur.row_off(i), hist.iter().map(|h| h.row_off(i)).collect());
            outcomes.push(DenseOutcome {
                kind: "outbound",
                origin: Some(labels[i].clone()),
                destination: None,
                observed: cur.row_off(i),
                n: periods,
                sum,
                sum_sq,
                status,
            });
        }
    }
    DenseResult {
        t,
        eligible,
        outcomes,
    }
}

pub fn key_parts(key: &FlowKey) -> (&'static str, Option<String>, Option<String>) {
    (
        key.kind_name(),
        key.origin().map(|a| a.as_str().to_string()),
        key.destination().map(|a| a.as_str().to_string()),
    )
}

pub fn rel_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

/// Differences between a full key listing and the dense reference.
pub fn discrepancies(got: &[odm_anomaly::KeyOutcome], want: &[DenseOutcome]) -> Vec<String> {
    use odm_anomaly::{Direction, Status};
    let mut out = Vec::new();
    if got.len() != want.len() {
        out.push(format!("key count {} != {}", got.len(), want.len()));
        return out;
    }
    for (g, w) in got.iter().zip(want) {
        let (kind, origin, destination) = key_parts(&g.key);
        if (kind, &origin, &destination) != (w.kind, &w.origin, &w.destination) {
            out.push(format!("key {:?} != {} {:?} {:?}", g.key, w.kind, w.origin, w.destination));
            continue;
        }
        let status = match &g.status {
            Status::NoSignal => DenseStatus::NoSignal,
            Status::BelowEligibility => DenseStatus::Below,
            Status::MissingData => DenseStatus::Missing,
            Status::Signal(s) => match s.direction {
                Direction::Upper => DenseStatus::Upper(s.level.as_u8()),
                Direction::Lower => DenseStatus::Lower(s.level.as_u8()),
            },
        };
        if status != w.status || g.observed != w.observed {
            out.push(format!("{:?}: {:?}/{} != {:?}/{}", g.key, status, g.observed, w.status, w.observed));
        }
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => rel_close(a, b) || (a - b).abs() < 1e-9,
            (None, None) => true,
            _ => false,
        };
        if !close(g.ma, w.ma()) || !close(g.sd, w.sd()) {
            out.push(format!("{:?}: ma/sd {:?}/{:?} != {:?}/{:?}", g.key, g.ma, g.sd, w.ma(), w.sd()));
        }
    }
    out
}

pub mod cases {
    use chrono::NaiveDate;
    use odm_anomaly::{AreaId, BoundsMode, OdmEntry, SparseOdm, Stride, TimeWindow, WindowSpan};
    use rand::Rng;

    use super::Frac;

    pub const QUANTILES: [Frac; 6] = [
        Frac { num: 3, den: 4 },
        Frac { num: 1, den: 2 },
        Frac { num: 7, den: 10 },
        Frac { num: 9, den: 10 },
        Frac { num: 19, den: 20 },
        Frac { num: 1, den: 4 },
    ];

    pub struct Case {
        pub current: SparseOdm,
        pub history: Vec<Option<SparseOdm>>,
        pub stride: Stride,
        pub th: u64,
        pub q: Frac,
        pub mode: BoundsMode,
    }

    fn matrix(window: TimeWindow, labels: &[AreaId], cells: &[(usize, usize, u64)]) -> SparseOdm {
        let entries: Vec<OdmEntry> = cells
            .iter()
            .map(|&(i, j, c)| OdmEntry::new(labels[i].clone(), labels[j].clone(), c))
            .collect();
        SparseOdm::from_entries(window, entries).unwrap()
    }

    /// A random window with `p ≤ 4` history periods over at most 50 areas.
    pub fn random_case<R: Rng>(rng: &mut R) -> Case {
        let stride = if rng.gen_bool(0.5) { Stride::Daily } else { Stride::Weekly };
        let mode = if rng.gen_bool(0.5) {
            BoundsMode::Clamped
        } else {
            BoundsMode::PaperLiteral
        };
        random_case_with(rng, stride, mode)
    }

    pub fn random_case_with<R: Rng>(rng: &mut R, stride: Stride, mode: BoundsMode) -> Case {
        let n_areas = rng.gen_range(1..=50usize);
        let labels: Vec<AreaId> = (0..n_areas)
            .map(|k| AreaId::new(format!("z{:02}", (k * 37) % 100)).unwrap())
            .collect();
        let density = rng.gen_range(0.02..0.5);
        let mut base = Vec::new();
        for i in 0..n_areas {
            for j in 0..n_areas {
                if rng.gen_bool(density) {
                    let scale = if rng.gen_bool(0.5) { 15 } else { 150 };
                    base.push((i, j, rng.gen_range(1..=scale)));
                }
            }
        }
        let perturb = |rng: &mut R, cells: &[(usize, usize, u64)], wild: f64| {
            let mut out = Vec::new();
            for &(i, j, c) in cells {
                if rng.gen_bool(0.05) {
                    continue;
                }
                let v = if rng.gen_bool(wild) {
                    rng.gen_range(0..=c * 4 + 5)
                } else {
                    (c as f64 * rng.gen_range(0.8..1.2)).round() as u64
                };
                out.push((i, j, v));
            }
            if n_areas > 0 && rng.gen_bool(0.3) {
                out.push((rng.gen_range(0..n_areas), rng.gen_range(0..n_areas), rng.gen_range(1..60)));
            }
            out.sort_by_key(|&(i, j, _)| (i, j));
            out.dedup_by_key(|&mut (i, j, _)| (i, j));
            out
        };

        let date = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(rng.gen_range(60..400));
        let span = if rng.gen_bool(0.5) {
            WindowSpan::full_day()
        } else {
            WindowSpan::equal_partition(24).unwrap()[rng.gen_range(0..24)]
        };
        let window = span.on(date);
        let p = rng.gen_range(1..=4usize);
        let mut history = Vec::with_capacity(p);
        for k in 1..=p {
            if rng.gen_bool(0.3) {
                history.push(None);
            } else {
                let cells = perturb(rng, &base, 0.05);
                history.push(Some(matrix(window.with_date(stride.lag(date, k).unwrap()), &labels, &cells)));
            }
        }
        let current = matrix(window, &labels, &perturb(rng, &base, 0.25));
        Case {
            current,
            history,
            stride,
            th: [0, 1, 5, 20, 20, 30][rng.gen_range(0..6)],
            q: QUANTILES[rng.gen_range(0..QUANTILES.len())],
            mode,
        }
    }
}

use cases::Case;
use odm_anomaly::{evaluate_window, run_window, BoundsMode, DetectorConfig, HistorySlice, Status};

/// Run one case through the sparse path and list every difference from the
/// dense reference: per-key statuses, threshold, reported outcomes, counts.
pub fn case_config(case: &Case) -> DetectorConfig {
    DetectorConfig {
        th: case.th,
        p: case.history.len(),
        quantile: case.q.as_f64(),
        stride: case.stride,
        bounds_mode: case.mode,
        emit_below_eligibility: false,
    }
}

pub fn check_case(case: &Case) -> Vec<String> {
    let cfg = case_config(case);
    let slice = HistorySlice::from_snapshots(*case.current.window(), case.stride, case.history.clone()).unwrap();
    let dense = dense_detect(
        &case.current,
        &case.history,
        case.th,
        case.q,
        case.mode == BoundsMode::Clamped,
    );
    let all = evaluate_window(&case.current, &slice, &cfg).unwrap();
    let mut errs = discrepancies(&all, &dense.outcomes);

    let report = run_window(&case.current, &slice, &cfg).unwrap();
    if report.threshold.t != dense.t || report.threshold.eligible_count != dense.eligible {
        errs.push(format!(
            "threshold {}/{} != {}/{}",
            report.threshold.t, report.threshold.eligible_count, dense.t, dense.eligible
        ));
    }
    let reported: Vec<_> = all
        .iter()
        .filter(|o| matches!(o.status, Status::Signal(_) | Status::MissingData))
        .cloned()
        .collect();
    if report.outcomes != reported {
        errs.push("run_window outcomes differ from the full listing".into());
    }
    let s = &report.summary;
    let count = |f: &dyn Fn(&DenseStatus) -> bool| dense.outcomes.iter().filter(|o| f(&o.status)).count() as u64;
    let want = (
        dense.outcomes.len() as u64,
        count(&|x| *x == DenseStatus::NoSignal),
        count(&|x| *x == DenseStatus::Below),
        count(&|x| *x == DenseStatus::Missing),
        count(&|x| matches!(x, DenseStatus::Upper(_))),
        count(&|x| matches!(x, DenseStatus::Lower(_))),
    );
    let got = (s.keys, s.no_signal, s.below_eligibility, s.missing_data, s.upper.total(), s.lower.total());
    if got != want {
        errs.push(format!("summary {got:?} != {want:?}"));
    }
    errs
}
