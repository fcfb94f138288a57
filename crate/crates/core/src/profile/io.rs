//! Serialisable views of a profile set.

use super::ProfileSet;
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BreakpointDoc {
    /// `None` for the infinity sentinel.
    pub lambda: Option<f64>,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    /// Left limits; empty at the origin and at infinity when unknown.
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntervalDoc {
    pub lo: f64,
    pub hi: Option<f64>,
    pub pieces: Vec<String>,
    #[serde(default)]
    pub states: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplesDoc {
    pub lambda: Vec<f64>,
    /// `values[k][i]` is profile `i` at `lambda[k]`.
    pub values: Vec<Vec<f64>>,
}

/// JSON document describing a profile set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfileDocument {
    pub construction: String,
    pub n: usize,
    pub g: Vec<f64>,
    pub g_bounds: (f64, f64),
    pub breakpoints: Vec<BreakpointDoc>,
    pub intervals: Vec<IntervalDoc>,
    pub merge_levels: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub samples: SamplesDoc,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl ProfileDocument {
    pub fn from_profiles(p: &ProfileSet, lambda_max: f64, points: usize) -> Result<ProfileDocument> {
        let has_ledger = p.ledger.q.len() + 1 == p.breakpoints.len();
        let breakpoints = p
            .breakpoints
            .iter()
            .enumerate()
            .map(|(k, b)| -> Result<BreakpointDoc> {
                let (q, s) = if has_ledger && k < p.ledger.q.len() {
                    (p.ledger.q[k].clone(), p.ledger.s[k].clone())
                } else if b.lambda.is_finite() {
                    let s = p.values(b.lambda)?;
                    let q = if b.lambda > 0.0 { p.left_limits(b.lambda)? } else { s.clone() };
                    (q, s)
                } else {
                    (vec![], vec![])
                };
                Ok(BreakpointDoc {
                    lambda: finite(b.lambda),
                    tags: b.kinds.iter().map(|k| k.tag()).collect(),
                    note: b.note.clone(),
                    q,
                    s,
                })
            })
            .collect::<Result<_>>()?;
        let intervals = p
            .intervals
            .iter()
            .enumerate()
            .map(|(k, iv)| IntervalDoc {
                lo: iv.lo,
                hi: finite(iv.hi),
                pieces: iv.pieces.iter().map(|x| x.describe()).collect(),
                states: p
                    .ledger
                    .states
                    .get(k)
                    .map(|m| m.iter().map(|(l, s)| (l.clone(), s.as_str().to_string())).collect())
                    .unwrap_or_default(),
            })
            .collect();
        let rows = sample_profiles(p, lambda_max, points)?;
        Ok(ProfileDocument {
            construction: p.construction.clone(),
            n: p.n,
            g: p.g.clone(),
            g_bounds: p.g_bounds,
            breakpoints,
            intervals,
            merge_levels: p.merge_levels.iter().cloned().collect(),
            notes: p.notes.clone(),
            samples: SamplesDoc {
                lambda: rows.iter().map(|r| r.0).collect(),
                values: rows.into_iter().map(|r| r.1).collect(),
            },
        })
    }
}

/// Profile values on a uniform grid of `[0, lambda_max]`.
///
/// Every finite breakpoint inside the range appears twice, first with the
/// left limits and then with the right values, so plots show the jumps.
pub fn sample_profiles(p: &ProfileSet, lambda_max: f64, points: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let points = points.max(2);
    let mut grid: Vec<f64> = (0..points)
        .map(|k| lambda_max * k as f64 / (points - 1) as f64)
        .collect();
    let specials: Vec<f64> = p.special_points().into_iter().filter(|l| *l <= lambda_max).collect();
    grid.retain(|l| !specials.contains(l));
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::with_capacity(grid.len() + 2 * specials.len());
    for l in grid {
        rows.push((l, p.values(l)?));
    }
    for l in specials {
        rows.push((l, p.left_limits(l)?));
        rows.push((l, p.values(l)?));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows)
}

pub fn render_csv(rows: &[(f64, Vec<f64>)]) -> String {
    let n = rows.first().map_or(0, |r| r.1.len());
    let mut s = String::from("lambda");
    for i in 0..n {
        let _ = write!(s, ",c{}", i + 1);
    }
    s.push('\n');
    for (l, v) in rows {
        let _ = write!(s, "{l:.12e}");
        for x in v {
            let _ = write!(s, ",{x:.12e}");
        }
        s.push('\n');
    }
    s
}
