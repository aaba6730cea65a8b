//! Synthetic ODM histories with labelled anomalies.
//!
//! A [`SyntheticWorld`] fixes which cells exist and their baseline volume.
//! Each `(date, window)` then draws
//! `round(baseline · weekday_factor · (1 + jitter))` per cell, with jitter
//! uniform on `[−noise, +noise]` from a generator seeded by
//! `(seed, date, window)`. Anomalies multiply the resulting count of their
//! target cells by `magnitude` and round again.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest;
use crate::odm::{AreaId, FlowKey, OdmEntry, SparseOdm, TimeWindow, WindowSpan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Spike,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub key: FlowKey,
    pub window: TimeWindow,
    pub kind: AnomalyKind,
    /// Multiplicative factor: above 1 for a spike, in `[0, 1)` for a drop.
    pub magnitude: f64,
}

fn default_weekday_factors() -> [f64; 7] {
    [1.0; 7]
}

fn default_warmup_days() -> u32 {
    28
}

fn default_target_days() -> u32 {
    1
}

fn default_windows() -> Vec<WindowSpan> {
    vec![WindowSpan::full_day()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_areas: usize,
    /// Fraction of the `n_areas²` cells that carry flow.
    pub density: f64,
    /// Mean per-cell count before seasonal and noise factors.
    pub base_volume: f64,
    /// Log-normal spread of per-cell baselines (0 makes every cell equal).
    #[serde(default)]
    pub baseline_dispersion: f64,
    #[serde(default)]
    pub weekly_amplitude: f64,
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
    /// Multipliers Monday..Sunday.
    #[serde(default = "default_weekday_factors")]
    pub weekday_factors: [f64; 7],
    pub start_date: NaiveDate,
    /// Clean days before the first date that may carry anomalies.
    #[serde(default = "default_warmup_days")]
    pub warmup_days: u32,
    #[serde(default = "default_target_days")]
    pub target_days: u32,
    #[serde(default = "default_windows")]
    pub windows: Vec<WindowSpan>,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
}

impl SynthSpec {
    /// A noise-free daily world with defaults for everything optional.
    pub fn new(n_areas: usize, density: f64, base_volume: f64, seed: u64, start_date: NaiveDate) -> Self {
        SynthSpec {
            n_areas,
            density,
            base_volume,
            baseline_dispersion: 0.0,
            weekly_amplitude: 0.0,
            noise: 0.0,
            seed,
            weekday_factors: default_weekday_factors(),
            start_date,
            warmup_days: default_warmup_days(),
            target_days: default_target_days(),
            windows: default_windows(),
            anomalies: Vec::new(),
        }
    }

    pub fn first_target_date(&self) -> NaiveDate {
        self.start_date + Days::new(self.warmup_days as u64)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start_date;
        (0..(self.warmup_days + self.target_days) as u64).map(move |k| start + Days::new(k))
    }

    fn validate_shape(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.n_areas == 0 {
            return bad("n_areas must be positive".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} must lie in (0, 1]", self.density));
        }
        if !(self.base_volume >= 0.0 && self.base_volume.is_finite()) {
            return bad("base_volume must be a nonnegative number".into());
        }
        if !(0.0..1.0).contains(&self.weekly_amplitude) {
            return bad("weekly_amplitude must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1)".into());
        }
        if !(self.baseline_dispersion >= 0.0 && self.baseline_dispersion.is_finite()) {
            return bad("baseline_dispersion must be nonnegative".into());
        }
        if self.weekday_factors.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return bad("weekday factors must be nonnegative".into());
        }
        let mut spans = self.windows.clone();
        spans.sort();
        spans.dedup();
        if spans.is_empty() || spans.len() != self.windows.len() {
            return bad("windows must be non-empty and distinct".into());
        }
        Ok(())
    }
}

/// Fixed cell structure and baselines of a synthetic source.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    spec: SynthSpec,
    labels: Vec<AreaId>,
    /// `(origin, destination, baseline)`, sorted by label pair.
    cells: Vec<(u32, u32, f64)>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn derived_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ p))
}

impl SyntheticWorld {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate_shape()?;
        let n = spec.n_areas;
        let width = (n.max(2) - 1).to_string().len();
        let labels = (0..n)
            .map(|k| AreaId::new(format!("A{k:0width$}")))
            .collect::<Result<Vec<_>>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(spec.seed, &[0]));
        let per_row = Binomial::new(n as u64, spec.density)
            .map_err(|e| Error::Spec(format!("density: {e}")))?;
        let sigma = spec.baseline_dispersion;
        let mut cells = Vec::new();
        for o in 0..n {
            let k = per_row.sample(&mut rng) as usize;
            let mut dests = index::sample(&mut rng, n, k).into_vec();
            dests.sort_unstable();
            for d in dests {
                let factor = if sigma > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    (sigma * z - sigma * sigma / 2.0).exp()
                } else {
                    1.0
                };
                cells.push((o as u32, d as u32, spec.base_volume * factor));
            }
        }
        let world = SyntheticWorld {
            spec,
            labels,
            cells,
        };
        world.validate_anomalies()?;
        Ok(world)
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[AreaId] {
        &self.labels
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Cells with their baseline volume.
    pub fn cells(&self) -> impl Iterator<Item = (FlowKey, f64)> + '_ {
        self.cells.iter().map(|&(o, d, b)| {
            (
                FlowKey::cell(self.labels[o as usize].clone(), self.labels[d as usize].clone()),
                b,
            )
        })
    }

    fn area_index(&self, a: &AreaId) -> Option<u32> {
        self.labels.binary_search(a).ok().map(|k| k as u32)
    }

    fn has_cell(&self, o: u32, d: u32) -> bool {
        self.cells
            .binary_search_by(|&(co, cd, _)| (co, cd).cmp(&(o, d)))
            .is_ok()
    }

    fn validate_anomalies(&self) -> Result<()> {
        let first = self.spec.first_target_date();
        let last = first + Days::new(self.spec.target_days as u64);
        for a in &self.spec.anomalies {
            let date = a.window.date;
            if date < first {
                return Err(Error::Spec(format!(
                    "anomaly on {date} falls inside the warm-up ending {first}"
                )));
            }
            if date >= last {
                return Err(Error::Spec(format!("anomaly on {date} is after the last generated date")));
            }
            if !self.spec.windows.contains(&a.window.span()) {
                return Err(Error::Spec(format!("anomaly window {} is not generated", a.window)));
            }
            let ok_magnitude = match a.kind {
                AnomalyKind::Spike => a.magnitude > 1.0 && a.magnitude.is_finite(),
                AnomalyKind::Drop => (0.0..1.0).contains(&a.magnitude),
            };
            if !ok_magnitude {
                return Err(Error::Spec(format!(
                    "magnitude {} does not fit a {:?}",
                    a.magnitude, a.kind
                )));
            }
            let exists = match &a.key {
                FlowKey::Cell {
                    origin,
                    destination,
                } => match (self.area_index(origin), self.area_index(destination)) {
                    (Some(o), Some(d)) => self.has_cell(o, d),
                    _ => false,
                },
                FlowKey::Inbound { destination } => self.area_index(destination).is_some(),
                FlowKey::Outbound { origin } => self.area_index(origin).is_some(),
            };
            if !exists {
                return Err(Error::Spec(format!("anomaly target {} does not exist", a.key)));
            }
        }
        Ok(())
    }

    pub fn weekday_factor(&self, date: NaiveDate) -> f64 {
        let w = date.weekday().num_days_from_monday() as usize;
        self.spec.weekday_factors[w]
            * (1.0 + self.spec.weekly_amplitude * (2.0 * PI * w as f64 / 7.0).sin())
    }

    fn anomaly_factor(&self, anomalies: &[&AnomalySpec], o: u32, d: u32) -> Option<f64> {
        let mut factor = None;
        for a in anomalies {
            let hit = match &a.key {
                FlowKey::Cell {
                    origin,
                    destination,
                } => self.labels[o as usize] == *origin && self.labels[d as usize] == *destination,
                FlowKey::Inbound { destination } => {
                    o != d && self.labels[d as usize] == *destination
                }
                FlowKey::Outbound { origin } => o != d && self.labels[o as usize] == *origin,
            };
            if hit {
                factor = Some(factor.unwrap_or(1.0) * a.magnitude);
            }
        }
        factor
    }

    /// The snapshot for `date` and the `window_index`-th configured window,
    /// with every scheduled anomaly applied.
    pub fn snapshot(&self, date: NaiveDate, window_index: usize) -> Result<SparseOdm> {
        let span = *self
            .spec
            .windows
            .get(window_index)
            .ok_or_else(|| Error::Spec(format!("no window {window_index}")))?;
        let window = span.on(date);
        let anomalies: Vec<&AnomalySpec> = self
            .spec
            .anomalies
            .iter()
            .filter(|a| a.window == window)
            .collect();
        let wf = self.weekday_factor(date);
        let noise = self.spec.noise;
        let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(
            self.spec.seed,
            &[1, date.num_days_from_ce() as u64, window_index as u64],
        ));
        let mut entries = Vec::with_capacity(self.cells.len());
        for &(o, d, baseline) in &self.cells {
            let jitter = if noise > 0.0 {
                rng.gen_range(-noise..=noise)
            } else {
                0.0
            };
            let mut count = (baseline * wf * (1.0 + jitter)).round().max(0.0) as u64;
            if !anomalies.is_empty() {
                if let Some(f) = self.anomaly_factor(&anomalies, o, d) {
                    count = (count as f64 * f).round() as u64;
                }
            }
            entries.push(OdmEntry::new(
                self.labels[o as usize].clone(),
                self.labels[d as usize].clone(),
                count,
            ));
        }
        SparseOdm::from_sorted(window, entries)
    }
}

/// Generated snapshots in `(date, window)` order plus the injected labels.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub snapshots: Vec<SparseOdm>,
    pub labels: Vec<AnomalySpec>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    let world = SyntheticWorld::new(spec.clone())?;
    let mut snapshots = Vec::new();
    for date in spec.dates() {
        for k in 0..spec.windows.len() {
            snapshots.push(world.snapshot(date, k)?);
        }
    }
    snapshots.sort_by(|a, b| a.window().cmp(b.window()));
    let mut labels = spec.anomalies.clone();
    labels.sort_by(|a, b| (a.window, &a.key).cmp(&(b.window, &b.key)));
    Ok(SynthOutput { snapshots, labels })
}

#[derive(Serialize)]
struct LabelFile<'a> {
    seed: u64,
    labels: &'a [AnomalySpec],
}

/// Write one `<date>.csv` per generated date and `labels.json`.
pub fn write_output(out: &SynthOutput, seed: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut by_date: BTreeMap<NaiveDate, Vec<&SparseOdm>> = BTreeMap::new();
    for m in &out.snapshots {
        by_date.entry(m.window().date).or_default().push(m);
    }
    for (date, snaps) in by_date {
        let path = dir.join(format!("{}.csv", date.format("%Y-%m-%d")));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        ingest::write_snapshots(BufWriter::new(file), snaps)?;
    }
    let path = dir.join("labels.json");
    let mut bytes = serde_json::to_vec_pretty(&LabelFile {
        seed,
        labels: &out.labels,
    })?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}
