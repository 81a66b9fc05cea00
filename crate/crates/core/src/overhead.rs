//! Closed-form training overhead and feedback counts per channel coherence
//! window `T_c` for the two anchor-assisted schemes and two baselines.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Anchor-assisted, BS-side sign-robust recovery.
    Scheme1,
    /// Anchor-assisted with user feedback.
    Scheme2,
    /// Reference-user baseline: no anchors, re-trained every `T_u`.
    ReferenceUser,
    /// Full-duplex BS baseline.
    FullDuplex,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Scheme1, Scheme::Scheme2, Scheme::ReferenceUser, Scheme::FullDuplex];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Scheme1 => "scheme1",
            Scheme::Scheme2 => "scheme2",
            Scheme::ReferenceUser => "reference-user",
            Scheme::FullDuplex => "full-duplex",
        }
    }

    /// Whether this crate implements the estimator itself, not only its
    /// overhead.
    pub fn is_estimator(self) -> bool {
        matches!(self, Scheme::Scheme1 | Scheme::Scheme2)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_string()
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scheme1" | "1" => Ok(Scheme::Scheme1),
            "scheme2" | "2" => Ok(Scheme::Scheme2),
            "reference-user" => Ok(Scheme::ReferenceUser),
            "full-duplex" => Ok(Scheme::FullDuplex),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Pilot and feedback accounting for one `T_c` window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverheadReport {
    pub scheme: Scheme,
    pub phase1_pilots: u64,
    /// Phase I runs per `T_c`.
    pub phase1_executions: u64,
    pub phase2_pilots: u64,
    /// Phase II runs per `T_c`.
    pub phase2_executions: u64,
    /// `phase1·phase1_executions + phase2·phase2_executions`
    pub total_per_tc: u64,
    /// Complex scalars fed back per Phase I run.
    pub phase1_feedback: u64,
    /// Complex scalars fed back per Phase II run.
    pub phase2_feedback: u64,
}

impl OverheadReport {
    pub fn feedback_per_tc(&self) -> u64 {
        self.phase1_feedback * self.phase1_executions + self.phase2_feedback * self.phase2_executions
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Table of pilot counts for `scheme` at `(M, N, K)` over a window of
/// `tc` symbols split into user slots of `tu` symbols.
///
/// The protocol is infeasible when Phase I does not fit in `T_c`, when no
/// complete user slot remains after it, or when the per-slot training does
/// not fit in `T_u`.
pub fn overhead(scheme: Scheme, m: u64, n: u64, k: u64, tc: u64, tu: u64) -> Result<OverheadReport> {
    if m == 0 || n == 0 || k == 0 || tu == 0 {
        return Err(Error::InvalidArgument(format!(
            "M, N, K and T_u must be positive, got ({m}, {n}, {k}, {tu})"
        )));
    }
    if tu > tc {
        return Err(Error::InvalidArgument(format!("T_u = {tu} exceeds T_c = {tc}")));
    }
    let tall = m >= n;
    let (phase1, phase2, fb1, fb2, per_slot) = match scheme {
        Scheme::Scheme1 => {
            let p2 = if tall { 2 * k } else { k + ceil_div(k * n, m) };
            (2 * (n + 1), p2, n, 0, false)
        }
        Scheme::Scheme2 => (n + 1, k + n + 1, n, k * n, false),
        Scheme::ReferenceUser => {
            let p2 = if tall { k - 1 } else { ceil_div((k - 1) * n, m) };
            (k + n, p2, 0, 0, true)
        }
        Scheme::FullDuplex => {
            let p2 = if tall { 2 * k } else { k + k * ceil_div(n, m) };
            (m * (n + 1), p2, 0, 0, false)
        }
    };

    let (phase1_executions, phase2_executions, slot_training) = if per_slot {
        let e = tc / tu;
        (e, e, phase1 + phase2)
    } else {
        if phase1 > tc {
            return Err(Error::Infeasible(format!(
                "{scheme}: Phase I needs {phase1} symbols but T_c is {tc}"
            )));
        }
        (1, (tc - phase1) / tu, phase2)
    };
    if phase2_executions == 0 {
        return Err(Error::Infeasible(format!(
            "{scheme}: no complete user slot of {tu} symbols fits in T_c = {tc} after Phase I"
        )));
    }
    if slot_training > tu {
        return Err(Error::Infeasible(format!(
            "{scheme}: per-slot training of {slot_training} symbols exceeds T_u = {tu}"
        )));
    }
    Ok(OverheadReport {
        scheme,
        phase1_pilots: phase1,
        phase1_executions,
        phase2_pilots: phase2,
        phase2_executions,
        total_per_tc: phase1 * phase1_executions + phase2 * phase2_executions,
        phase1_feedback: fb1,
        phase2_feedback: fb2,
    })
}

/// Parameter ranges for a comparison grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverheadGrid {
    pub bs_antennas: Vec<u64>,
    pub irs_elements: Vec<u64>,
    pub users: Vec<u64>,
    pub tc: u64,
    pub tu: u64,
}

/// One `(M, N, K)` cell of a comparison grid.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    /// Feasible reports in the order the schemes were requested.
    pub reports: Vec<OverheadReport>,
    /// Schemes that were infeasible here, with the reason.
    pub infeasible: Vec<(Scheme, String)>,
    /// Schemes attaining the smallest `total_per_tc` (several on ties).
    pub minimal: Vec<Scheme>,
}

impl GridCell {
    pub fn report(&self, scheme: Scheme) -> Option<&OverheadReport> {
        self.reports.iter().find(|r| r.scheme == scheme)
    }
}

/// Evaluates every scheme over the grid and flags the cheapest per cell.
/// Invalid arguments still fail; infeasible schemes are recorded per cell.
pub fn crossover_table(grid: &OverheadGrid, schemes: &[Scheme]) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for &m in &grid.bs_antennas {
        for &n in &grid.irs_elements {
            for &k in &grid.users {
                let mut reports = Vec::new();
                let mut infeasible = Vec::new();
                for &s in schemes {
                    match overhead(s, m, n, k, grid.tc, grid.tu) {
                        Ok(r) => reports.push(r),
                        Err(Error::Infeasible(why)) => infeasible.push((s, why)),
                        Err(e) => return Err(e),
                    }
                }
                let best = reports.iter().map(|r| r.total_per_tc).min();
                let minimal = reports
                    .iter()
                    .filter(|r| Some(r.total_per_tc) == best)
                    .map(|r| r.scheme)
                    .collect();
                cells.push(GridCell {
                    m,
                    n,
                    k,
                    reports,
                    infeasible,
                    minimal,
                });
            }
        }
    }
    Ok(cells)
}

pub const OVERHEAD_CSV_HEADER: [&str; 8] = ["scheme", "M", "N", "K", "phase1", "phase2", "executions", "total"];

/// Writes one row per feasible `(cell, scheme)`; `executions` is the
/// Phase II count per `T_c`.
pub fn write_overhead_csv<W: Write>(cells: &[GridCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OVERHEAD_CSV_HEADER)?;
    for cell in cells {
        for r in &cell.reports {
            w.write_record([
                r.scheme.name().to_string(),
                cell.m.to_string(),
                cell.n.to_string(),
                cell.k.to_string(),
                r.phase1_pilots.to_string(),
                r.phase2_pilots.to_string(),
                r.phase2_executions.to_string(),
                r.total_per_tc.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
