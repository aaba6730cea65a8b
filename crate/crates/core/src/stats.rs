//! Moving average and rolling standard deviation over a history slice.
//!
//! Sums are accumulated as integers and divided once, so `ma·n` and `Σx²` are
//! exact. A key absent from an available snapshot contributes 0; a missing
//! snapshot is left out of `n` altogether.

use std::collections::{BTreeSet, HashMap};

use crate::odm::{AreaId, FlowKey, OdmEntry, SparseOdm};
use crate::store::HistorySlice;

/// Exact first and second moments of the available history values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Moments {
    n: u32,
    sum: u128,
    sum_sq: u128,
}

impl Moments {
    pub fn from_values(values: impl IntoIterator<Item = u64>) -> Self {
        let mut m = Moments::default();
        for v in values {
            m.push(v);
        }
        m
    }

    #[inline]
    pub fn push(&mut self, v: u64) {
        let v = v as u128;
        self.n += 1;
        self.sum += v;
        self.sum_sq = self.sum_sq.saturating_add(v * v);
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn sum(&self) -> u128 {
        self.sum
    }

    pub fn sum_sq(&self) -> u128 {
        self.sum_sq
    }

    pub fn ma(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum as f64 / self.n as f64)
    }

    /// `n·Σx² − (Σx)²`, which equals `n²·sd²`. `None` on overflow.
    pub fn spread(&self) -> Option<u128> {
        let lhs = (self.n as u128).checked_mul(self.sum_sq)?;
        let rhs = self.sum.checked_mul(self.sum)?;
        Some(lhs.saturating_sub(rhs))
    }

    pub fn sd(&self) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        Some(match self.spread() {
            Some(s) => (s as f64).sqrt() / n,
            None => {
                let ma = self.sum as f64 / n;
                (self.sum_sq as f64 / n - ma * ma).max(0.0).sqrt()
            }
        })
    }
}

/// Rolling statistics of one series. Undefined (all-missing) when no
/// history period was available.
#[derive(Clone, Debug, PartialEq)]
pub struct RollingStats {
    pub key: FlowKey,
    pub moments: Moments,
}

impl RollingStats {
    pub fn new(key: FlowKey, moments: Moments) -> Self {
        RollingStats { key, moments }
    }

    /// Stats from an explicit history, `None` marking a missing period.
    pub fn from_history(key: FlowKey, history: &[Option<u64>]) -> Self {
        RollingStats {
            key,
            moments: Moments::from_values(history.iter().flatten().copied()),
        }
    }

    pub fn available(&self) -> usize {
        self.moments.n()
    }

    pub fn is_all_missing(&self) -> bool {
        self.moments.n == 0
    }

    pub fn ma(&self) -> Option<f64> {
        self.moments.ma()
    }

    pub fn sd(&self) -> Option<f64> {
        self.moments.sd()
    }
}

/// Stats of each key over the available periods of `slice`.
pub fn rolling_stats_for_keys(slice: &HistorySlice, keys: &[FlowKey]) -> Vec<RollingStats> {
    let available: Vec<&SparseOdm> = slice.available().collect();
    let needs_marginals = keys.iter().any(|k| !matches!(k, FlowKey::Cell { .. }));
    let marginals: Vec<HashMap<FlowKey, u64>> = if needs_marginals {
        available
            .iter()
            .map(|m| m.all_marginals_excl_diag().into_iter().collect())
            .collect()
    } else {
        Vec::new()
    };
    keys.iter()
        .map(|key| {
            let moments = Moments::from_values(available.iter().enumerate().map(|(k, m)| {
                match key {
                    FlowKey::Cell {
                        origin,
                        destination,
                    } => m.cell_value(origin, destination),
                    _ => marginals[k].get(key).copied().unwrap_or(0),
                }
            }));
            RollingStats::new(key.clone(), moments)
        })
        .collect()
}

/// Every series evaluated for a window: cells stored in the current matrix or
/// in any available history matrix, plus the outbound marginal of each origin
/// and the inbound marginal of each destination among those cells.
pub fn key_universe(current: &SparseOdm, slice: &HistorySlice) -> Vec<FlowKey> {
    let mut cells: BTreeSet<(&AreaId, &AreaId)> = BTreeSet::new();
    for m in std::iter::once(current).chain(slice.available()) {
        cells.extend(m.entries().iter().map(|e| (&e.origin, &e.destination)));
    }
    let origins: BTreeSet<&AreaId> = cells.iter().map(|(o, _)| *o).collect();
    let destinations: BTreeSet<&AreaId> = cells.iter().map(|(_, d)| *d).collect();
    cells
        .into_iter()
        .map(|(o, d)| FlowKey::cell(o.clone(), d.clone()))
        .chain(destinations.into_iter().map(|d| FlowKey::inbound(d.clone())))
        .chain(origins.into_iter().map(|o| FlowKey::outbound(o.clone())))
        .collect()
}

/// One series of a window: today's value and its rolling stats.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub observed: u64,
    pub stats: RollingStats,
}

/// Per-area column accumulators, `width` values per area.
struct MarginalAcc {
    width: usize,
    areas: Vec<AreaId>,
    values: Vec<u64>,
}

impl MarginalAcc {
    fn new(width: usize) -> Self {
        MarginalAcc {
            width,
            areas: Vec::new(),
            values: Vec::new(),
        }
    }

    fn open(&mut self, area: &AreaId) -> usize {
        self.areas.push(area.clone());
        self.values.resize(self.values.len() + self.width, 0);
        self.areas.len() - 1
    }

    fn add(&mut self, slot: usize, vals: &[u64]) {
        let row = &mut self.values[slot * self.width..(slot + 1) * self.width];
        for (acc, v) in row.iter_mut().zip(vals) {
            *acc += v;
        }
    }

    fn into_rows(self, make_key: impl Fn(AreaId) -> FlowKey) -> Vec<SeriesRow> {
        let width = self.width;
        let mut order: Vec<usize> = (0..self.areas.len()).collect();
        order.sort_unstable_by(|&a, &b| self.areas[a].cmp(&self.areas[b]));
        order
            .into_iter()
            .map(|k| {
                let vals = &self.values[k * width..(k + 1) * width];
                SeriesRow {
                    observed: vals[0],
                    stats: RollingStats::new(
                        make_key(self.areas[k].clone()),
                        Moments::from_values(vals[1..].iter().copied()),
                    ),
                }
            })
            .collect()
    }
}

/// All series of a window in report order, computed in one merge pass over
/// the sorted entries of the current and available history matrices.
///
/// Yields the same keys as [`key_universe`] and the same stats as
/// [`rolling_stats_for_keys`].
pub fn window_series(current: &SparseOdm, slice: &HistorySlice) -> Vec<SeriesRow> {
    let lists: Vec<&[OdmEntry]> = std::iter::once(current.entries())
        .chain(slice.available().map(SparseOdm::entries))
        .collect();
    let width = lists.len();
    let mut pos = vec![0usize; width];
    let mut vals = vec![0u64; width];

    let mut cells = Vec::with_capacity(lists.iter().map(|l| l.len()).max().unwrap_or(0));
    let mut inbound = MarginalAcc::new(width);
    let mut inbound_slot: HashMap<&str, usize> = HashMap::new();
    let mut outbound = MarginalAcc::new(width);

    loop {
        let mut head: Option<&OdmEntry> = None;
        for (l, &p) in lists.iter().zip(&pos) {
            if let Some(e) = l.get(p) {
                if head.is_none_or(|h| e.pair() < h.pair()) {
                    head = Some(e);
                }
            }
        }
        let Some(head) = head else { break };
        let pair = head.pair();
        for ((l, p), v) in lists.iter().zip(pos.iter_mut()).zip(vals.iter_mut()) {
            *v = match l.get(*p) {
                Some(e) if e.pair() == pair => {
                    *p += 1;
                    e.count
                }
                _ => 0,
            };
        }

        if outbound.areas.last() != Some(&head.origin) {
            outbound.open(&head.origin);
        }
        let in_slot = match inbound_slot.get(head.destination.as_str()) {
            Some(&s) => s,
            None => {
                let s = inbound.open(&head.destination);
                inbound_slot.insert(head.destination.as_str(), s);
                s
            }
        };
        if !head.is_diagonal() {
            outbound.add(outbound.areas.len() - 1, &vals);
            inbound.add(in_slot, &vals);
        }

        cells.push(SeriesRow {
            observed: vals[0],
            stats: RollingStats::new(
                FlowKey::cell(head.origin.clone(), head.destination.clone()),
                Moments::from_values(vals[1..].iter().copied()),
            ),
        });
    }
    drop(inbound_slot);

    cells.extend(inbound.into_rows(FlowKey::inbound));
    cells.extend(outbound.into_rows(FlowKey::outbound));
    cells
}
