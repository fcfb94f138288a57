//! Three wells whose rank-one cycle switches from `{O1, O2}` to `{O2, O3}`.

use crate::curves::{curve_label, tabulate_cycle_curves, CurveProvenance};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::mcurve::MCurve;
use crate::profile::{changing_hierarchy_profile, BifurcationCurves, ProfileSet};
use crate::rates::RateModel;
use crate::stability::{hierarchy_at, StabilityReport};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Curves are not compared with the regime hierarchy this close to the threshold.
const CHECK_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ScenarioInfo {
    pub c_bar: f64,
    pub low: Hierarchy,
    pub high: Hierarchy,
    /// Curves by label, prefixed with `below/` or `above/`.
    pub curves: BTreeMap<String, Arc<MCurve>>,
    pub provenance: CurveProvenance,
}

fn distinct_id(h: &Hierarchy, members: &[usize]) -> Result<usize> {
    h.distinct_cycles()
        .into_iter()
        .find(|d| d.members == members)
        .map(|d| d.id)
        .ok_or_else(|| Error::HierarchyUnstable(format!("expected a cycle on {members:?}\n{}", h.render())))
}

fn pick(
    curves: &BTreeMap<usize, Arc<MCurve>>,
    h: &Hierarchy,
    members: &[usize],
) -> Result<Arc<MCurve>> {
    let id = distinct_id(h, members)?;
    curves
        .get(&id)
        .cloned()
        .ok_or_else(|| Error::DegenerateData(format!("no rate curve for cycle {}", h.label(id))))
}

fn has_pair(h: &Hierarchy, pair: [usize; 2]) -> bool {
    h.levels.get(1).is_some_and(|lvl| lvl.iter().any(|&id| h.cycle(id).members == pair))
}

/// Profiles for a model with a single switch of the hierarchy at `c_bar`.
///
/// `g` holds the initial levels at the stable points in spatial order.
pub fn run_changing_hierarchy(
    model: Arc<dyn RateModel>,
    stability: &StabilityReport,
    g: [f64; 3],
    points: usize,
    strict: bool,
    cache_dir: Option<&Path>,
) -> Result<(ProfileSet, ScenarioInfo)> {
    if model.n() != 3 {
        return Err(Error::Config(format!(
            "the switching scenario needs three stable points, found {}",
            model.n()
        )));
    }
    let c_bar = stability.single_threshold().ok_or_else(|| {
        Error::HierarchyUnstable(format!(
            "the switching scenario needs exactly one change of the hierarchy\n{}",
            stability.render()
        ))
    })?;
    let (lo, hi) = model.c_range();
    let flip = &stability.flips[0];
    let low = hierarchy_at(model.as_ref(), flip.below)?;
    let high = hierarchy_at(model.as_ref(), flip.above)?;
    if !(has_pair(&low, [0, 1]) && has_pair(&high, [1, 2])) {
        return Err(Error::HierarchyUnstable(format!(
            "only the switch from {{1,2}} below c = {c_bar} to {{2,3}} above it is supported\nbelow:\n{}above:\n{}",
            low.render(),
            high.render()
        )));
    }

    let sub = |name: &str| cache_dir.map(|d| d.join(name));
    let low_dir = sub("below");
    let high_dir = sub("above");
    let margin = CHECK_MARGIN * (hi - lo);
    let (low_curves, low_prov) = tabulate_cycle_curves(
        model.clone(),
        &low,
        (lo, c_bar),
        points,
        Some((lo, c_bar - margin)),
        low_dir.as_deref(),
    )?;
    let (high_curves, high_prov) = tabulate_cycle_curves(
        model.clone(),
        &high,
        (c_bar, hi),
        points,
        Some((c_bar + margin, hi)),
        high_dir.as_deref(),
    )?;

    let curves = BifurcationCurves {
        m12: pick(&low_curves, &low, &[0])?,
        m21: pick(&low_curves, &low, &[1])?,
        m_g1_3: pick(&low_curves, &low, &[0, 1])?,
        m_3_low: Some(pick(&low_curves, &low, &[2])?),
        m32: pick(&high_curves, &high, &[2])?,
        m23: pick(&high_curves, &high, &[1])?,
        m_g2_1: pick(&high_curves, &high, &[1, 2])?,
        m_1_g2: pick(&high_curves, &high, &[0])?,
    };
    let profiles = changing_hierarchy_profile(&curves, g, c_bar, strict)?;

    let mut labelled = BTreeMap::new();
    for (regime, h, cs) in [("below", &low, &low_curves), ("above", &high, &high_curves)] {
        for (&id, c) in cs {
            labelled.insert(format!("{regime}/{}", curve_label(h, id)), c.clone());
        }
    }
    let mut provenance = CurveProvenance::default();
    for (regime, p) in [("below", low_prov), ("above", high_prov)] {
        for (k, v) in p.hashes {
            provenance.hashes.insert(format!("{regime}/{k}"), v);
        }
        provenance.cache_hits.extend(p.cache_hits.into_iter().map(|k| format!("{regime}/{k}")));
    }
    Ok((
        profiles,
        ScenarioInfo {
            c_bar,
            low,
            high,
            curves: labelled,
            provenance,
        },
    ))
}
