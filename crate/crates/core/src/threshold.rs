//! Daily quantile threshold and per-series bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odm::{FlowKey, SparseOdm};
use crate::stats::RollingStats;

/// How the lower bound is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// `max(min(ma − t, ma − 3·sd), 0)`: drops below the band can fire.
    #[default]
    Clamped,
    /// `min(ma − t, ma − 3·sd, 0)`: never positive, so no drop can fire on
    /// nonnegative counts.
    PaperLiteral,
}

impl std::str::FromStr for BoundsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped" => Ok(BoundsMode::Clamped),
            "paper_literal" => Ok(BoundsMode::PaperLiteral),
            other => Err(Error::Config(format!("unknown bounds mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for BoundsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundsMode::Clamped => "clamped",
            BoundsMode::PaperLiteral => "paper_literal",
        })
    }
}

/// The day's threshold for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// Eligibility threshold, movements.
    pub th: u64,
    /// Quantile level in (0, 1).
    pub q: f64,
    /// Nearest-rank quantile of the eligible cells, or `th` when none.
    pub t: u64,
    pub eligible_count: usize,
    /// Set when no cell reached `th` and `t` fell back to `th`.
    pub degenerate: bool,
}

pub(crate) fn check_quantile(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("quantile level {q} must lie in (0, 1)")))
    }
}

/// 1-based nearest rank `⌈q·n⌉`, tolerant of `q·n` landing a hair above an
/// integer in floating point.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let x = q * n as f64;
    let r = if (x - x.round()).abs() <= 1e-9 * (n.max(1) as f64) {
        x.round()
    } else {
        x.ceil()
    };
    (r as usize).clamp(1, n.max(1))
}

/// Nearest-rank `q` quantile over the stored cells of `current` whose value
/// is at least `th`. Diagonal cells are included; marginals are not.
pub fn daily_quantile_threshold(current: &SparseOdm, th: u64, q: f64) -> Result<ThresholdSet> {
    check_quantile(q)?;
    let mut eligible: Vec<u64> = current
        .entries()
        .iter()
        .map(|e| e.count)
        .filter(|&c| c >= th)
        .collect();
    let n = eligible.len();
    if n == 0 {
        return Ok(ThresholdSet {
            th,
            q,
            t: th,
            eligible_count: 0,
            degenerate: true,
        });
    }
    let rank = nearest_rank(q, n);
    let (_, t, _) = eligible.select_nth_unstable(rank - 1);
    Ok(ThresholdSet {
        th,
        q,
        t: *t,
        eligible_count: n,
        degenerate: false,
    })
}

/// Acceptance band of one series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub key: FlowKey,
    pub lower: f64,
    pub upper: f64,
    pub mode: BoundsMode,
}

/// Band for `stats` under `ts`; `None` when every history period is missing.
pub fn bounds_for(stats: &RollingStats, ts: &ThresholdSet, mode: BoundsMode) -> Option<Bounds> {
    let ma = stats.ma()?;
    let sd = stats.sd()?;
    let t = ts.t as f64;
    let upper = ma + t.max(3.0 * sd);
    let inner = (ma - t).min(ma - 3.0 * sd);
    let lower = match mode {
        BoundsMode::PaperLiteral => inner.min(0.0),
        BoundsMode::Clamped => inner.max(0.0),
    };
    Some(Bounds {
        key: stats.key.clone(),
        lower,
        upper,
        mode,
    })
}
