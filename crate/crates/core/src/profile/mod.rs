//! Limit profiles `c_i(lambda)` and their breakpoints.
//!
//! A [`ProfileSet`] is a list of breakpoints `0 = l_0 < l_1 < ... < l_m = inf`
//! and, for every interval `[l_k, l_{k+1})`, one [`Piece`] per equilibrium.
//! Values at a breakpoint are right limits.

mod closed;
mod io;
mod sweep;

pub use closed::{changing_hierarchy_profile, three_well_profile, two_well_profile, BifurcationCurves};
pub use io::{render_csv, sample_profiles, ProfileDocument};
pub use sweep::{general_sweep, SweepOptions};

use crate::error::{Error, Result};
use crate::mcurve::{MCurve, Reach};
use std::fmt;
use std::sync::Arc;

/// Tolerance for comparing solution levels.
pub const LEVEL_MATCH: f64 = 1e-7;

/// Value of one profile on one interval.
#[derive(Clone)]
pub enum Piece {
    Constant { value: f64 },
    /// Smallest root of `M = lambda` in `[lo, hi]`, capped at `cap`; `cap` when there is none.
    FirstRoot { curve: Arc<MCurve>, lo: f64, hi: f64, cap: f64 },
    /// Largest root of `M = lambda` in `[lo, hi]`, floored at `floor`; `floor` when there is none.
    LastRoot { curve: Arc<MCurve>, lo: f64, hi: f64, floor: f64 },
}

impl Piece {
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        match self {
            Piece::Constant { value } => Ok(*value),
            Piece::FirstRoot { curve, lo, hi, cap } => {
                Ok(curve.first_root(*lo, *hi, lambda)?.map_or(*cap, |r| r.min(*cap)))
            }
            Piece::LastRoot { curve, lo, hi, floor } => {
                Ok(curve.last_root(*lo, *hi, lambda)?.map_or(*floor, |r| r.max(*floor)))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Piece::Constant { .. })
    }

    /// Short human-readable descriptor.
    pub fn describe(&self) -> String {
        match self {
            Piece::Constant { value } => format!("const {value:.12}"),
            Piece::FirstRoot { curve, lo, hi, cap } => {
                format!("min root of {} = lambda on [{lo:.9}, {hi:.9}], cap {cap:.9}", curve.label)
            }
            Piece::LastRoot { curve, lo, hi, floor } => {
                format!("max root of {} = lambda on [{lo:.9}, {hi:.9}], floor {floor:.9}", curve.label)
            }
        }
    }
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Where a breakpoint comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BreakKind {
    Origin,
    /// Exhaustion level `A_cycle` of a cycle that has become uniform.
    Exhaustion,
    /// Local maximum of a rate curve.
    LocalMax,
    /// Crossing of two rate curves.
    Crossing,
    /// A rate curve evaluated at the level of a target cycle.
    TargetLevel,
    /// Numbered special point of a closed-form construction.
    Special(usize),
    Infinity,
}

impl BreakKind {
    pub fn tag(&self) -> String {
        match self {
            BreakKind::Origin => "origin".into(),
            BreakKind::Exhaustion => "L1".into(),
            BreakKind::LocalMax => "L2".into(),
            BreakKind::Crossing => "L3".into(),
            BreakKind::TargetLevel => "L4".into(),
            BreakKind::Special(k) => format!("lambda_{k}"),
            BreakKind::Infinity => "infinity".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoint {
    pub lambda: f64,
    pub kinds: Vec<BreakKind>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleState {
    Passive,
    Engaged,
    Active,
}

impl CycleState {
    pub fn as_str(&self) -> &'static str {
        match self {
            CycleState::Passive => "passive",
            CycleState::Engaged => "engaged",
            CycleState::Active => "active",
        }
    }
}

/// Cycle states on one interval, keyed by cycle label.
pub type StateMap = Vec<(String, CycleState)>;

/// Per-interval states plus left and right limits at every breakpoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleStateLedger {
    /// `states[k]` holds the states on `[l_k, l_{k+1})`.
    pub states: Vec<StateMap>,
    /// `q[k][i]`: left limit of profile `i` at breakpoint `k`.
    pub q: Vec<Vec<f64>>,
    /// `s[k][i]`: right limit of profile `i` at breakpoint `k`.
    pub s: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub construction: String,
    pub n: usize,
    pub g: Vec<f64>,
    pub g_bounds: (f64, f64),
    /// Includes the origin and the infinity sentinel.
    pub breakpoints: Vec<Breakpoint>,
    pub intervals: Vec<Interval>,
    pub ledger: CycleStateLedger,
    pub merge_levels: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl ProfileSet {
    /// Index of the interval containing `lambda`.
    pub fn interval_index(&self, lambda: f64) -> usize {
        let k = self.intervals.partition_point(|iv| iv.lo <= lambda);
        k.saturating_sub(1)
    }

    pub fn value(&self, i: usize, lambda: f64) -> Result<f64> {
        self.intervals[self.interval_index(lambda)].pieces[i].eval(lambda)
    }

    pub fn values(&self, lambda: f64) -> Result<Vec<f64>> {
        let iv = &self.intervals[self.interval_index(lambda)];
        iv.pieces.iter().map(|p| p.eval(lambda)).collect()
    }

    /// Left limit of every profile at a finite breakpoint `lambda > 0`.
    pub fn left_limits(&self, lambda: f64) -> Result<Vec<f64>> {
        let k = self.interval_index(lambda);
        let iv = if self.intervals[k].lo == lambda && k > 0 { &self.intervals[k - 1] } else { &self.intervals[k] };
        iv.pieces.iter().map(|p| p.eval(lambda)).collect()
    }

    /// Finite breakpoints other than the origin.
    pub fn special_points(&self) -> Vec<f64> {
        self.breakpoints
            .iter()
            .map(|b| b.lambda)
            .filter(|l| *l > 0.0 && l.is_finite())
            .collect()
    }

    pub fn merge_level(&self, name: &str) -> Option<f64> {
        self.merge_levels.iter().find(|m| m.0 == name).map(|m| m.1)
    }

    /// Largest finite breakpoint.
    pub fn last_special(&self) -> f64 {
        self.special_points().last().copied().unwrap_or(0.0)
    }
}

/// `C(c1, c2, lambda, M)`: move from `c1` toward `c2` until `M >= lambda`.
///
/// For `c2 >= c1` this is `min(c2, inf{c > c1 : M(c) >= lambda})`, otherwise
/// `max(c2, sup{c < c1 : M(c) >= lambda})`; an empty set yields `c2`.
pub fn clamp_c(c1: f64, c2: f64, lambda: f64, m: &MCurve) -> Result<f64> {
    clamp_with(c1, c2, lambda, m, Reach::Closed)
}

pub(crate) fn clamp_with(c1: f64, c2: f64, lambda: f64, m: &MCurve, mode: Reach) -> Result<f64> {
    let hit = if c2 >= c1 {
        m.reach_up(c1, c2, lambda, mode)?
    } else {
        m.reach_down(c1, c2, lambda, mode)?
    };
    Ok(hit.unwrap_or(c2))
}

/// Weights `(a1, a2)` of the two-point limit measure with `a1 g1 + a2 g2 = cbar`.
pub fn metastable_distribution(cbar: f64, g1: f64, g2: f64) -> Result<(f64, f64)> {
    if g1 == g2 {
        return Err(Error::DegenerateData("g(O_1) = g(O_2): weights are not determined".into()));
    }
    let a2 = (cbar - g1) / (g2 - g1);
    let tol = 1e-12;
    if !(-tol..=1.0 + tol).contains(&a2) {
        return Err(Error::DegenerateData(format!(
            "level {cbar} lies outside [{}, {}]",
            g1.min(g2),
            g1.max(g2)
        )));
    }
    let a2 = a2.clamp(0.0, 1.0);
    Ok((1.0 - a2, a2))
}

/// Assemble a profile set from per-profile piece lists `(start, piece)`.
///
/// Each list must start at 0 and be sorted. Breakpoints are the union of all
/// starts (with `tags`), so intervals where nothing changes are not split.
pub(crate) fn assemble(
    construction: &str,
    g: Vec<f64>,
    g_bounds: (f64, f64),
    per_profile: Vec<Vec<(f64, Piece)>>,
    tags: &[(f64, BreakKind)],
) -> ProfileSet {
    let mut cuts: Vec<f64> = per_profile.iter().flat_map(|v| v.iter().map(|p| p.0)).collect();
    cuts.extend(tags.iter().map(|t| t.0).filter(|l| *l > 0.0 && l.is_finite()));
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut intervals = Vec::with_capacity(cuts.len());
    for (k, &lo) in cuts.iter().enumerate() {
        let hi = cuts.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let pieces = per_profile
            .iter()
            .map(|list| {
                let idx = list.partition_point(|p| p.0 <= lo).saturating_sub(1);
                list[idx].1.clone()
            })
            .collect();
        intervals.push(Interval { lo, hi, pieces });
    }
    let mut breakpoints: Vec<Breakpoint> = cuts
        .iter()
        .map(|&l| Breakpoint {
            lambda: l,
            kinds: if l == 0.0 { vec![BreakKind::Origin] } else { vec![] },
            note: String::new(),
        })
        .collect();
    for (l, kind) in tags {
        if let Some(b) = breakpoints.iter_mut().find(|b| b.lambda == *l) {
            b.kinds.push(kind.clone());
        }
    }
    breakpoints.push(Breakpoint {
        lambda: f64::INFINITY,
        kinds: vec![BreakKind::Infinity],
        note: String::new(),
    });
    let n = g.len();
    ProfileSet {
        construction: construction.to_string(),
        n,
        g,
        g_bounds,
        breakpoints,
        intervals,
        ledger: CycleStateLedger::default(),
        merge_levels: vec![],
        notes: vec![],
    }
}
