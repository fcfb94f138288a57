//! Does the hierarchy depend on the level `c`?

use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, set_label, Hierarchy, Signature};
use crate::rates::RateModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Thresholds are located to this accuracy in `c`.
pub const THRESHOLD_TOL: f64 = 1e-6;

/// A change of structure between two neighbouring grid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Flip {
    pub below: f64,
    pub above: f64,
    pub threshold: f64,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub grid: Vec<f64>,
    pub flips: Vec<Flip>,
    /// Grid levels where the hierarchy could not be built, with the reason.
    pub failures: Vec<(f64, String)>,
    /// Random per-basin level tuples whose structure differs from the common one.
    pub tuple_mismatches: Vec<Vec<f64>>,
    pub tuples_checked: usize,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn stable(&self) -> bool {
        self.flips.is_empty() && self.failures.is_empty() && self.tuple_mismatches.is_empty()
    }

    /// The threshold of a single flip, if that is the only change.
    pub fn single_threshold(&self) -> Option<f64> {
        (self.flips.len() == 1 && self.failures.is_empty()).then(|| self.flips[0].threshold)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "levels scanned: {} on [{}, {}]\n",
            self.grid.len(),
            self.grid.first().copied().unwrap_or(f64::NAN),
            self.grid.last().copied().unwrap_or(f64::NAN)
        );
        if self.stable() {
            s.push_str("hierarchy: stable\n");
        }
        for f in &self.flips {
            s.push_str(&format!(
                "flip at c = {:.9} (between {:.6} and {:.6})\n  below: {}\n  above: {}\n",
                f.threshold, f.below, f.above, f.before, f.after
            ));
        }
        for (c, why) in &self.failures {
            s.push_str(&format!("failure at c = {c}: {why}\n"));
        }
        s.push_str(&format!(
            "per-basin tuples: {} checked, {} mismatched\n",
            self.tuples_checked,
            self.tuple_mismatches.len()
        ));
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        s
    }
}

fn describe(sig: &Signature) -> String {
    sig.iter()
        .enumerate()
        .skip(1)
        .map(|(r, lvl)| {
            let parts: Vec<String> = lvl
                .iter()
                .map(|(m, nu)| match nu {
                    Some(j) => format!("{}->{}", set_label(m), j + 1),
                    None => set_label(m),
                })
                .collect();
            format!("rank {r}: {}", parts.join(" "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn signature_at(model: &dyn RateModel, c: f64) -> Result<Signature> {
    Ok(build_hierarchy(&model.vmatrix(c)?)?.signature())
}

/// Scan `n` equally spaced levels of `[lo, hi]`, locate every flip of the
/// structure by bisection, and test `tuples` random per-basin level vectors.
pub fn check_hierarchy_stability(
    model: &dyn RateModel,
    (lo, hi): (f64, f64),
    n: usize,
    tuples: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let n = n.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect();
    let sigs: Vec<std::result::Result<Signature, Error>> = grid.par_iter().map(|&c| signature_at(model, c)).collect();
    let mut report = StabilityReport {
        grid: grid.clone(),
        flips: vec![],
        failures: vec![],
        tuple_mismatches: vec![],
        tuples_checked: 0,
        notes: vec![],
    };
    let mut last: Option<(f64, Signature)> = None;
    for (&c, sig) in grid.iter().zip(&sigs) {
        match sig {
            Err(e) => {
                if !matches!(e, Error::AssumptionAViolation { .. }) {
                    return Err(e.clone());
                }
                report.failures.push((c, e.to_string()));
            }
            Ok(sig) => {
                if let Some((cl, prev)) = &last {
                    if prev != sig {
                        let threshold = bisect_flip(model, *cl, c, prev)?;
                        report.flips.push(Flip {
                            below: *cl,
                            above: c,
                            threshold,
                            before: describe(prev),
                            after: describe(sig),
                        });
                    }
                }
                last = Some((c, sig.clone()));
            }
        }
    }
    // ties exactly on the grid sit at a flip; they are not failures of their own
    report.failures.retain(|(c, _)| !report.flips.iter().any(|f| f.below < *c && *c < f.above));

    if tuples > 0 && report.flips.is_empty() {
        if let Some((_, reference)) = &last {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draws: Vec<Vec<f64>> = (0..tuples)
                .map(|_| (0..model.n()).map(|_| rng.random_range(lo..=hi)).collect())
                .collect();
            let checked: Vec<Option<bool>> = draws
                .par_iter()
                .map(|levels| match model.vmatrix_levels(levels) {
                    None => None,
                    Some(Ok(v)) => Some(build_hierarchy(&v).map(|h| h.signature() == *reference).unwrap_or(false)),
                    Some(Err(_)) => Some(false),
                })
                .collect();
            if checked.iter().any(Option::is_none) {
                report
                    .notes
                    .push("the rate model has no per-basin levels; random tuples skipped".into());
            } else {
                report.tuples_checked = draws.len();
                for (levels, ok) in draws.into_iter().zip(checked) {
                    if ok == Some(false) {
                        report.tuple_mismatches.push(levels);
                    }
                }
            }
        }
    }
    Ok(report)
}

fn bisect_flip(model: &dyn RateModel, mut lo: f64, mut hi: f64, below: &Signature) -> Result<f64> {
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        match signature_at(model, mid) {
            Ok(s) if s == *below => lo = mid,
            Ok(_) | Err(Error::AssumptionAViolation { .. }) => hi = mid,
            Err(e) => return Err(e),
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Hierarchy at a level inside a regime, for the structure on one side of a threshold.
pub fn hierarchy_at(model: &dyn RateModel, c: f64) -> Result<Hierarchy> {
    build_hierarchy(&model.vmatrix(c)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::TableRates;

    fn table(rows: Vec<(f64, [f64; 6])>) -> TableRates {
        TableRates::new(3, rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1.to_vec()).collect(), None).unwrap()
    }

    #[test]
    fn constant_table_is_stable() {
        let t = table(vec![(0.0, [2.0, 6.0, 3.0, 5.0, 7.0, 4.0]), (1.0, [2.0, 6.0, 3.0, 5.0, 7.0, 4.0])]);
        let r = check_hierarchy_stability(&t, (0.0, 1.0), 33, 10, 7).unwrap();
        assert!(r.stable(), "{}", r.render());
        assert_eq!(r.tuples_checked, 0);
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn flip_is_located() {
        // V_21 grows past V_23 at c = 0.5: O2 then points at O3
        let t = table(vec![(0.0, [2.0, 6.0, 3.0, 5.0, 7.0, 4.0]), (1.0, [2.0, 6.0, 7.0, 5.0, 7.0, 4.0])]);
        let r = check_hierarchy_stability(&t, (0.0, 1.0), 16, 0, 0).unwrap();
        let c = r.single_threshold().expect("one flip");
        assert!((c - 0.5).abs() < 2e-6, "{c}");
    }
}
