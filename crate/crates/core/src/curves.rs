//! Rate curves `M_cycle(c) = V_{cycle, nu(cycle)}` for a fixed hierarchy.

use crate::error::{Error, Result};
use crate::hierarchy::{build_hierarchy, Hierarchy};
use crate::mcurve::{content_hash, parse_curve_table, CurveFn, MCurve};
use crate::rates::RateModel;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Label used for the curve of a cycle, e.g. `M{1,2}`.
pub fn curve_label(h: &Hierarchy, id: usize) -> String {
    format!("M{}", h.label(id))
}

fn evaluator(model: Arc<dyn RateModel>, h: Arc<Hierarchy>, id: usize) -> CurveFn {
    Arc::new(move |c| {
        let v = model.vmatrix(c)?;
        h.main_rate_at(id, &v)
            .ok_or_else(|| Error::DegenerateData(format!("cycle {} has no exit", h.label(id))))
    })
}

/// Where tabulated curves came from.
#[derive(Debug, Clone, Default)]
pub struct CurveProvenance {
    pub hashes: BTreeMap<String, String>,
    pub cache_hits: Vec<String>,
}

/// Tabulate `M` for every distinct non-top cycle on `n` points of `[lo, hi]`.
///
/// At every grid point the hierarchy is rebuilt and the `nu` of each cycle is
/// compared with `h`; a change raises [`Error::HierarchyUnstable`]. Grid points
/// outside `check` are not compared. With `cache_dir`, tables whose hash
/// matches are reused and fresh ones are written back.
pub fn tabulate_cycle_curves(
    model: Arc<dyn RateModel>,
    h: &Hierarchy,
    (lo, hi): (f64, f64),
    n: usize,
    check: Option<(f64, f64)>,
    cache_dir: Option<&Path>,
) -> Result<(BTreeMap<usize, Arc<MCurve>>, CurveProvenance)> {
    let shared = Arc::new(h.clone());
    let ids: Vec<usize> = h
        .distinct_cycles()
        .into_iter()
        .filter(|d| d.nu.is_some())
        .map(|d| d.id)
        .collect();
    let n = n.max(3);
    let grid: Vec<f64> = (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect();

    let mut prov = CurveProvenance::default();
    let mut cached: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for &id in &ids {
        let label = curve_label(h, id);
        let hash = content_hash(&format!(
            "{}\ncycle={}\nnu={:?}\nrange={:e},{:e}\npoints={}\n",
            model.fingerprint(),
            label,
            h.cycle(id).next_equilibrium,
            lo,
            hi,
            n
        ));
        if let Some(dir) = cache_dir {
            if let Ok(text) = std::fs::read_to_string(dir.join(format!("{}.tsv", file_stem(&label)))) {
                if let Ok(t) = parse_curve_table(&text) {
                    if t.hash == hash && t.samples.len() == n {
                        cached.insert(id, t.samples);
                        prov.cache_hits.push(label.clone());
                    }
                }
            }
        }
        prov.hashes.insert(label, hash);
    }

    let need_eval = cached.len() < ids.len() || check.is_some();
    let rows: Vec<Option<Vec<f64>>> = if need_eval {
        grid.par_iter()
            .map(|&c| -> Result<Option<Vec<f64>>> {
                let inside = check.is_some_and(|(a, b)| c >= a && c <= b);
                if cached.len() == ids.len() && !inside {
                    return Ok(None);
                }
                let v = model.vmatrix(c)?;
                if inside {
                    let here = build_hierarchy(&v)?;
                    for &id in &ids {
                        let want = h.cycle(id);
                        let found = here.cycles.iter().find(|x| x.members == want.members);
                        let same = found.is_some_and(|x| x.next_equilibrium == want.next_equilibrium);
                        if !same {
                            return Err(Error::HierarchyUnstable(format!(
                                "cycle {} changes its next equilibrium near c = {c}",
                                h.label(id)
                            )));
                        }
                    }
                }
                let rates = h.rates_at(&v);
                Ok(Some(
                    ids.iter()
                        .map(|&id| {
                            let nu = h.cycle(id).next_equilibrium.unwrap();
                            rates[id].iter().find(|e| e.0 == nu).unwrap().1
                        })
                        .collect(),
                ))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![None; n]
    };

    let mut out = BTreeMap::new();
    for (k, &id) in ids.iter().enumerate() {
        let label = curve_label(h, id);
        let f = evaluator(model.clone(), shared.clone(), id);
        let samples = match cached.remove(&id) {
            Some(s) => s,
            None => grid
                .iter()
                .zip(&rows)
                .map(|(&c, r)| (c, r.as_ref().expect("row evaluated")[k]))
                .collect(),
        };
        let curve = MCurve::with_samples(label.clone(), samples, f)?;
        if let Some(dir) = cache_dir {
            std::fs::create_dir_all(dir)?;
            let hash = &prov.hashes[&label];
            std::fs::write(dir.join(format!("{}.tsv", file_stem(&label))), curve.render(hash))?;
        }
        out.insert(id, Arc::new(curve));
    }
    Ok((out, prov))
}

/// File-system friendly form of a curve label.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|ch| match ch {
            '{' | '}' => '_',
            ',' => '-',
            c => c,
        })
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}
