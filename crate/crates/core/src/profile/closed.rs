//! Closed-form profiles for two wells, three wells with a fixed hierarchy,
//! and three wells whose rank-one cycle switches at a threshold level.

use super::{assemble, BreakKind, Piece, ProfileSet};
use crate::error::{Error, Result};
use crate::mcurve::MCurve;
use std::sync::Arc;

/// Merge points are located to this accuracy in lambda.
const MERGE_TOL: f64 = 1e-10;

type Profile<'a> = Box<dyn Fn(f64) -> Result<f64> + 'a>;

/// `inf { lambda >= from : up(lambda) >= down(lambda) }` by bisection.
fn merge_point(up: &Profile, down: &Profile, from: f64, ceiling: f64) -> Result<f64> {
    let holds = |l: f64| -> Result<bool> { Ok(up(l)? >= down(l)? - 1e-12) };
    if holds(from)? {
        return Ok(from);
    }
    let mut hi = ceiling.max(from + 1.0);
    let mut tries = 0;
    while !holds(hi)? {
        hi = from + 2.0 * (hi - from);
        tries += 1;
        if tries > 60 {
            return Err(Error::OrderingViolation(format!("profiles never meet above lambda = {from}")));
        }
    }
    let mut lo = from;
    while hi - lo > MERGE_TOL {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Snap a bisected point onto a known special point it cannot be told apart from.
fn snap(l: f64, known: &[f64]) -> f64 {
    known
        .iter()
        .copied()
        .find(|k| (l - k).abs() <= 10.0 * MERGE_TOL)
        .unwrap_or(l)
}

fn continuous_at(f: &Profile, l: f64) -> Result<bool> {
    let h1 = 1e-6 * l.abs().max(1.0);
    let h2 = h1 * 1e-2;
    let d1 = (f(l + h1)? - f((l - h1).max(0.0))?).abs();
    let d2 = (f(l + h2)? - f((l - h2).max(0.0))?).abs();
    Ok(d2 <= 1e-9 || d2 < 0.5 * d1)
}

/// Common level after two profiles meet at `l`, preferring the continuous one.
fn meeting_level(first: &Profile, second: &Profile, l: f64) -> Result<f64> {
    if continuous_at(first, l)? {
        first(l)
    } else if continuous_at(second, l)? {
        second(l)
    } else {
        Err(Error::BothDiscontinuousAtMerge { lambda: l })
    }
}

fn first_root(m: &Arc<MCurve>, lo: f64, hi: f64, cap: f64) -> Piece {
    Piece::FirstRoot { curve: m.clone(), lo, hi, cap }
}

fn last_root(m: &Arc<MCurve>, lo: f64, hi: f64, floor: f64) -> Piece {
    Piece::LastRoot { curve: m.clone(), lo, hi, floor }
}

fn constant(value: f64) -> Piece {
    Piece::Constant { value }
}

/// Append `(start, piece)` unless the piece would live on an empty interval.
fn push(list: &mut Vec<(f64, Piece)>, start: f64, end: f64, piece: Piece) {
    if start < end {
        list.push((start, piece));
    }
}

fn ceiling(curves: &[&Arc<MCurve>]) -> f64 {
    curves.iter().map(|m| m.max_sample()).fold(0.0, f64::max) * 1.5 + 1.0
}

/// The stage shared by all constructions: two wells with `g1 <= g2`.
struct TwoWellStage {
    l1: f64,
    l2: f64,
    l3: f64,
    c_star: f64,
}

fn two_well_stage(m12: &Arc<MCurve>, m21: &Arc<MCurve>, g1: f64, g2: f64) -> Result<TwoWellStage> {
    let l1 = m12.eval(g1)?;
    let l2 = m21.eval(g2)?;
    let p1 = first_root(m12, g1, g2, g2);
    let p2 = last_root(m21, g1, g2, g1);
    let c1: Profile = Box::new(move |l| if l < l1 { Ok(g1) } else { p1.eval(l) });
    let c2: Profile = Box::new(move |l| if l < l2 { Ok(g2) } else { p2.eval(l) });
    let l3 = merge_point(&c1, &c2, 0.0, ceiling(&[m12, m21]))?;
    let l3 = snap(l3, &[l1, l2]);
    let c_star = meeting_level(&c1, &c2, l3)?;
    Ok(TwoWellStage { l1, l2, l3, c_star })
}

/// Profiles for two equilibria from `M12 = V_{O1,O2}(c)` and `M21 = V_{O2,O1}(c)`.
///
/// Labels are swapped internally when `g1 > g2`; the result is always in the
/// caller's order.
pub fn two_well_profile(m12: &Arc<MCurve>, m21: &Arc<MCurve>, g1: f64, g2: f64) -> Result<ProfileSet> {
    let bounds = (g1.min(g2), g1.max(g2));
    if g1 == g2 {
        let mut p = assemble("two-well", vec![g1, g2], bounds, vec![vec![(0.0, constant(g1))]; 2], &[]);
        p.merge_levels.push(("c*".into(), g1));
        return Ok(p);
    }
    let swapped = g1 > g2;
    let (ma, mb, ga, gb) = if swapped { (m21, m12, g2, g1) } else { (m12, m21, g1, g2) };
    let st = two_well_stage(ma, mb, ga, gb)?;
    let inf = f64::INFINITY;

    let mut low = vec![(0.0, constant(ga))];
    push(&mut low, st.l1, st.l3, first_root(ma, ga, gb, st.c_star));
    low.push((st.l3, constant(st.c_star)));
    let mut high = vec![(0.0, constant(gb))];
    push(&mut high, st.l2, st.l3, last_root(mb, ga, gb, st.c_star));
    high.push((st.l3, constant(st.c_star)));
    let _ = inf;

    let (profiles, g) = if swapped { (vec![high, low], vec![gb, ga]) } else { (vec![low, high], vec![ga, gb]) };
    let tags = [
        (st.l1, BreakKind::Special(1)),
        (st.l2, BreakKind::Special(2)),
        (st.l3, BreakKind::Special(3)),
    ];
    let mut p = assemble("two-well", g, bounds, profiles, &tags);
    p.merge_levels.push(("c*".into(), st.c_star));
    Ok(p)
}

fn check_order(names: &[(&str, f64)], pairs: &[(usize, usize)]) -> Result<()> {
    let bad: Vec<String> = pairs
        .iter()
        .filter(|(a, b)| names[*a].1 >= names[*b].1)
        .map(|(a, b)| format!("{} < {} fails ({} vs {})", names[*a].0, names[*b].0, names[*a].1, names[*b].1))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::OrderingViolation(bad.join("; ")))
    }
}

/// Profiles for three equilibria when `{O1, O2}` is a rank-one cycle for every level.
///
/// `m_g3` is the exit rate of the pair toward `O3` and `m_3g` the rate of `O3`
/// toward its next equilibrium. With `strict`, the ordering
/// `l1 < l2 < l3 < l4 < l5 < l6` is enforced; otherwise only `l3 < l5`, which
/// the construction needs so that the pair forms before `O3` starts to move.
pub fn three_well_profile(
    m12: &Arc<MCurve>,
    m21: &Arc<MCurve>,
    m_g3: &Arc<MCurve>,
    m_3g: &Arc<MCurve>,
    g: [f64; 3],
    strict: bool,
) -> Result<ProfileSet> {
    let [g1, g2, g3] = g;
    let bounds = (g1, g3);
    if !(g1 <= g2 && g2 <= g3) {
        return Err(Error::OrderingViolation(format!("expected g(O1) <= g(O2) <= g(O3), got {g:?}")));
    }
    if g1 == g3 {
        let p = assemble("three-well", g.to_vec(), bounds, vec![vec![(0.0, constant(g1))]; 3], &[]);
        return Ok(p);
    }
    let st = if g1 < g2 {
        two_well_stage(m12, m21, g1, g2)?
    } else {
        TwoWellStage { l1: 0.0, l2: 0.0, l3: 0.0, c_star: g1 }
    };
    let c_star = st.c_star;
    let l4 = m_g3.eval(c_star)?;
    let l5 = m_3g.eval(g3)?;

    let pg = first_root(m_g3, c_star, g3, g3);
    let p3 = last_root(m_3g, c_star, g3, c_star);
    let c_gamma: Profile = Box::new(move |l| if l < l4 { Ok(c_star) } else { pg.eval(l) });
    let c_three: Profile = Box::new(move |l| if l < l5 { Ok(g3) } else { p3.eval(l) });
    let l6 = merge_point(&c_gamma, &c_three, st.l3, ceiling(&[m_g3, m_3g]))?;
    let l6 = snap(l6, &[l4, l5]);
    let c_2star = meeting_level(&c_gamma, &c_three, l6)?;

    let names = [
        ("lambda_1", st.l1),
        ("lambda_2", st.l2),
        ("lambda_3", st.l3),
        ("lambda_4", l4),
        ("lambda_5", l5),
        ("lambda_6", l6),
    ];
    if strict {
        check_order(&names, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])?;
    } else {
        check_order(&names, &[(2, 4)])?;
    }

    let mut pair_low = vec![(0.0, constant(g1))];
    push(&mut pair_low, st.l1, st.l3, first_root(m12, g1, g2, c_star));
    let mut pair_high = vec![(0.0, constant(g2))];
    push(&mut pair_high, st.l2, st.l3, last_root(m21, g1, g2, c_star));
    for list in [&mut pair_low, &mut pair_high] {
        push(list, st.l3, l4.max(st.l3), constant(c_star));
        push(list, l4.max(st.l3), l6, first_root(m_g3, c_star, g3, c_2star));
        list.push((l6, constant(c_2star)));
    }
    let mut third = vec![(0.0, constant(g3))];
    push(&mut third, l5, l6, last_root(m_3g, c_star, g3, c_2star));
    third.push((l6, constant(c_2star)));

    let tags: Vec<(f64, BreakKind)> = names.iter().enumerate().map(|(k, n)| (n.1, BreakKind::Special(k + 1))).collect();
    let mut p = assemble("three-well", g.to_vec(), bounds, vec![pair_low, pair_high, third], &tags);
    p.merge_levels.push(("c*".into(), c_star));
    p.merge_levels.push(("c**".into(), c_2star));
    Ok(p)
}

/// Rate curves for the switching scenario.
///
/// Below the threshold `{O1, O2}` is the rank-one cycle `G1`; above it
/// `{O2, O3}` is the rank-one cycle `G2`.
#[derive(Debug, Clone)]
pub struct BifurcationCurves {
    pub m12: Arc<MCurve>,
    pub m21: Arc<MCurve>,
    /// `V_{G1, O3}` below the threshold.
    pub m_g1_3: Arc<MCurve>,
    /// `V_{O3, nu(O3)}` below the threshold; used when the threshold is out of reach.
    pub m_3_low: Option<Arc<MCurve>>,
    pub m32: Arc<MCurve>,
    pub m23: Arc<MCurve>,
    /// `V_{G2, O1}` above the threshold.
    pub m_g2_1: Arc<MCurve>,
    /// `V_{O1, nu(O1)}` above the threshold.
    pub m_1_g2: Arc<MCurve>,
}

/// Profiles when the rank-one cycle switches from `{O1, O2}` to `{O2, O3}` at
/// the level `c_bar` of `O2`. Requires `g1 <= g2 < c_bar <= g3`; with
/// `c_bar >= g3` the switch is never reached and the fixed-hierarchy
/// construction is returned.
pub fn changing_hierarchy_profile(m: &BifurcationCurves, g: [f64; 3], c_bar: f64, strict: bool) -> Result<ProfileSet> {
    let [g1, g2, g3] = g;
    if !(g1 <= g2 && g2 <= c_bar) {
        return Err(Error::OrderingViolation(format!(
            "expected g(O1) <= g(O2) <= c_bar, got g = {g:?}, c_bar = {c_bar}"
        )));
    }
    if g2 == c_bar {
        return Err(Error::OrderingViolation(format!(
            "g(O2) = c_bar = {c_bar}: the level of O2 sits exactly on the switching threshold"
        )));
    }
    if c_bar >= g3 {
        let m3 = m.m_3_low.as_ref().ok_or_else(|| {
            Error::Config("threshold above g(O3) needs the low-regime curve of O3".into())
        })?;
        let mut p = three_well_profile(&m.m12, &m.m21, &m.m_g1_3, m3, g, strict)?;
        p.construction = "changing-hierarchy (threshold not reached)".into();
        p.merge_levels.push(("c_bar".into(), c_bar));
        return Ok(p);
    }

    let st = if g1 < g2 {
        two_well_stage(&m.m12, &m.m21, g1, g2)?
    } else {
        TwoWellStage { l1: 0.0, l2: 0.0, l3: 0.0, c_star: g1 }
    };
    let c_star = st.c_star;
    let l4 = m.m_g1_3.eval(c_star)?;
    let l5 = m.m_g1_3.sup_on(c_star, c_bar)?;
    let l6 = m.m32.eval(g3)?;

    let pd2 = first_root(&m.m23, c_bar, g3, g3);
    let p3 = last_root(&m.m32, c_bar, g3, c_bar);
    let d2: Profile = Box::new(move |l| pd2.eval(l));
    let c3: Profile = Box::new(move |l| if l < l6 { Ok(g3) } else { p3.eval(l) });
    let l7 = merge_point(&d2, &c3, l5, ceiling(&[&m.m23, &m.m32]))?;
    let l7 = snap(l7, &[l5, l6]);
    let c_2star = meeting_level(&d2, &c3, l7)?;
    let l8 = m.m_g2_1.eval(c_2star)?;

    let pd1 = first_root(&m.m_1_g2, c_bar, c_2star, c_2star);
    let pg2 = last_root(&m.m_g2_1, c_bar, c_2star, c_bar);
    let d1: Profile = Box::new(move |l| pd1.eval(l));
    let cg2: Profile = Box::new(move |l| if l < l8 { Ok(c_2star) } else { pg2.eval(l) });
    let l9 = merge_point(&d1, &cg2, l8, ceiling(&[&m.m_1_g2, &m.m_g2_1]))?;
    let l9 = snap(l9, &[l8]);
    let c_3star = meeting_level(&d1, &cg2, l9)?;

    let names = [
        ("lambda_1", st.l1),
        ("lambda_2", st.l2),
        ("lambda_3", st.l3),
        ("lambda_4", l4),
        ("lambda_5", l5),
        ("lambda_6", l6),
        ("lambda_7", l7),
        ("lambda_8", l8),
        ("lambda_9", l9),
    ];
    if strict {
        check_order(&names, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8)])?;
    } else {
        check_order(&names, &[(2, 4), (4, 5), (5, 6), (6, 7), (7, 8)])?;
    }

    let rise = first_root(&m.m_g1_3, c_star, c_bar, c_bar);
    let mut first = vec![(0.0, constant(g1))];
    push(&mut first, st.l1, st.l3, first_root(&m.m12, g1, g2, c_star));
    push(&mut first, st.l3, l4, constant(c_star));
    push(&mut first, l4, l5, rise.clone());
    push(&mut first, l5, l9, first_root(&m.m_1_g2, c_bar, c_2star, c_3star));
    first.push((l9, constant(c_3star)));

    let tail = last_root(&m.m_g2_1, c_bar, c_2star, c_3star);
    let mut second = vec![(0.0, constant(g2))];
    push(&mut second, st.l2, st.l3, last_root(&m.m21, g1, g2, c_star));
    push(&mut second, st.l3, l4, constant(c_star));
    push(&mut second, l4, l5, rise);
    push(&mut second, l5, l8, first_root(&m.m23, c_bar, g3, c_2star));
    push(&mut second, l8, l9, tail.clone());
    second.push((l9, constant(c_3star)));

    let mut third = vec![(0.0, constant(g3))];
    push(&mut third, l6, l8, last_root(&m.m32, c_bar, g3, c_2star));
    push(&mut third, l8, l9, tail);
    third.push((l9, constant(c_3star)));

    let tags: Vec<(f64, BreakKind)> = names.iter().enumerate().map(|(k, n)| (n.1, BreakKind::Special(k + 1))).collect();
    let mut p = assemble("changing-hierarchy", g.to_vec(), (g1, g3), vec![first, second, third], &tags);
    p.merge_levels.push(("c*".into(), c_star));
    p.merge_levels.push(("c_bar".into(), c_bar));
    p.merge_levels.push(("c**".into(), c_2star));
    p.merge_levels.push(("c***".into(), c_3star));
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(label: &str, f: fn(f64) -> f64) -> Arc<MCurve> {
        Arc::new(MCurve::tabulate(label, 0.0, 1.0, 257, Arc::new(move |c| Ok(f(c)))).unwrap())
    }

    fn flat(label: &str, v: f64) -> Arc<MCurve> {
        Arc::new(MCurve::constant(label, 0.0, 1.0, v))
    }

    #[test]
    fn double_well_with_level_dependent_diffusion() {
        // V_12 = V_21 = 1 / (2 (1 + c)) for b = x - x^3, a = 1 + c
        let m = curve("M", |c| 0.5 / (1.0 + c));
        let p = two_well_profile(&m, &m, 0.0, 1.0).unwrap();
        let pts = p.special_points();
        assert!((pts[0] - 0.25).abs() < 1e-12 && (pts[1] - 0.5).abs() < 1e-12, "{pts:?}");
        assert_eq!(p.merge_level("c*"), Some(0.0));
        for k in 0..200 {
            let l = 0.01 + k as f64 * 0.005;
            let v = p.values(l).unwrap();
            let c2 = if l < 0.25 { 1.0 } else if l < 0.5 { 0.5 / l - 1.0 } else { 0.0 };
            assert!(v[0].abs() < 1e-12 && (v[1] - c2).abs() < 1e-10, "{l}: {v:?}");
        }
    }

    #[test]
    fn swapped_labels_give_mirrored_profiles() {
        let m = curve("M", |c| 0.5 / (1.0 + c));
        let a = two_well_profile(&m, &m, 0.0, 1.0).unwrap();
        let b = two_well_profile(&m, &m, 1.0, 0.0).unwrap();
        for &l in &[0.1, 0.3, 0.45, 0.7] {
            let (va, vb) = (a.values(l).unwrap(), b.values(l).unwrap());
            assert!((va[0] - vb[1]).abs() < 1e-12 && (va[1] - vb[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_case_is_a_step() {
        let p = two_well_profile(&flat("M12", 0.5), &flat("M21", 0.3), 0.0, 1.0).unwrap();
        for &l in &[0.1, 0.29, 0.31, 0.6, 5.0] {
            let v = p.values(l).unwrap();
            assert_eq!(v[0], 0.0);
            assert_eq!(v[1], if l < 0.3 { 1.0 } else { 0.0 }, "{l}");
        }
        assert_eq!(p.left_limits(0.3).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_initial_data() {
        let m = curve("M", |c| 0.5 / (1.0 + c));
        let p = two_well_profile(&m, &m, 0.4, 0.4).unwrap();
        assert!(p.special_points().is_empty());
        assert_eq!(p.values(3.0).unwrap(), vec![0.4, 0.4]);
        let p = three_well_profile(&m, &m, &m, &m, [0.7; 3], true).unwrap();
        assert_eq!(p.values(2.0).unwrap(), vec![0.7; 3]);
    }

    #[test]
    fn meeting_tracks_in_two_wells() {
        let p = two_well_profile(&curve("M12", |c| 0.2 + 0.8 * c), &curve("M21", |c| 0.45 - 0.4 * c), 0.0, 0.4).unwrap();
        let l3 = 1.1 / 3.0;
        let c_star = (l3 - 0.2) / 0.8;
        let pts = p.special_points();
        assert!((pts[2] - l3).abs() < 1e-9, "{pts:?}");
        assert!((p.merge_level("c*").unwrap() - c_star).abs() < 1e-9);
        let v = p.values(0.3).unwrap();
        assert!((v[0] - 0.125).abs() < 1e-12 && (v[1] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn three_wells_in_the_ordered_regime() {
        let p = three_well_profile(
            &curve("M12", |c| 0.2 + 0.8 * c),
            &curve("M21", |c| 0.45 - 0.4 * c),
            &curve("MG3", |c| 0.5 + 0.5 * c),
            &curve("M3G", |c| 1.3 - 0.6 * c),
            [0.0, 0.4, 1.0],
            true,
        )
        .unwrap();
        let l6 = 1.9 / 2.2;
        let c2 = 2.0 * l6 - 1.0;
        let want = [0.2, 0.29, 1.1 / 3.0, 0.5 + 0.5 * (1.1 / 3.0 - 0.2) / 0.8, 0.7, l6];
        let pts = p.special_points();
        assert_eq!(pts.len(), 6);
        for (a, b) in pts.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{pts:?}");
        }
        assert!((p.merge_level("c**").unwrap() - c2).abs() < 1e-9);
        let v = p.values(0.8).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.6).abs() < 1e-12);
        assert!((v[2] - 0.5 / 0.6).abs() < 1e-12);
        assert!(p.values(1.0).unwrap().iter().all(|x| (x - c2).abs() < 1e-9));
    }

    #[test]
    fn ordering_violations_are_named() {
        let err = three_well_profile(
            &curve("M12", |c| 0.2 + 0.8 * c),
            &curve("M21", |c| 0.45 - 0.4 * c),
            &curve("MG3", |c| 0.5 + 0.5 * c),
            &curve("M3G", |c| 0.6 - 0.2 * c),
            [0.0, 0.4, 1.0],
            true,
        )
        .unwrap_err();
        match err {
            Error::OrderingViolation(msg) => assert!(msg.contains("lambda_4 < lambda_5"), "{msg}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn threshold_on_the_middle_level_is_rejected() {
        let m = curve("M", |c| 0.5 / (1.0 + c));
        let curves = BifurcationCurves {
            m12: m.clone(),
            m21: m.clone(),
            m_g1_3: m.clone(),
            m_3_low: None,
            m32: m.clone(),
            m23: m.clone(),
            m_g2_1: m.clone(),
            m_1_g2: m,
        };
        assert!(matches!(
            changing_hierarchy_profile(&curves, [0.0, 0.4, 1.0], 0.4, true),
            Err(Error::OrderingViolation(_))
        ));
    }
}
