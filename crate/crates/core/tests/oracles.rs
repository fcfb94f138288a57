mod common;

use common::{bisect, m_oracle, max_gap};
use metastable::config::{Mode, RunConfig};
use metastable::pipeline::{analyze, Analysis};
use metastable::profile::ProfileSet;

fn run(preset: &str, mode: Mode) -> Analysis {
    let mut cfg = RunConfig::preset(preset).unwrap();
    cfg.mode = mode;
    analyze(&cfg, None).unwrap()
}

fn tagged(p: &ProfileSet, tag: &str) -> f64 {
    p.breakpoints
        .iter()
        .find(|b| b.kinds.iter().any(|k| k.tag() == tag))
        .unwrap_or_else(|| panic!("no breakpoint tagged {tag}"))
        .lambda
}

#[test]
fn two_well_closed_form_matches_hand_solution() {
    let a = run("two-well", Mode::TwoWell);
    let p = &a.profiles;
    let (l1, l2) = (m_oracle(0.0), m_oracle(1.0));
    assert!((l1 - 0.5).abs() < 1e-12 && (l2 - 0.25).abs() < 1e-12);
    assert!((tagged(p, "lambda_1") - l1).abs() < 1e-8);
    assert!((tagged(p, "lambda_2") - l2).abs() < 1e-8);
    assert!((tagged(p, "lambda_3") - 0.5).abs() < 1e-8);
    assert!(p.merge_level("c*").unwrap().abs() < 1e-8);
    for k in 1..200 {
        let lambda = 0.25 + 0.25 * k as f64 / 200.0;
        let oracle = bisect(|c| m_oracle(c) - lambda, 0.0, 1.0);
        assert!((oracle - (1.0 / (2.0 * lambda) - 1.0)).abs() < 1e-10);
        assert!((p.value(1, lambda).unwrap() - oracle).abs() < 1e-8, "lambda {lambda}");
        assert_eq!(p.value(0, lambda).unwrap(), 0.0);
    }
    assert_eq!(p.values(0.2).unwrap(), vec![0.0, 1.0]);
    assert!(p.values(0.75).unwrap().iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn sweep_reduces_to_two_well_closed_form() {
    for preset in ["two-well", "two-well-linear"] {
        let closed = run(preset, Mode::TwoWell);
        let sweep = run(preset, Mode::General);
        let (gap, at) = max_gap(&closed.profiles, &sweep.profiles, closed.lambda_max, 10_000);
        assert!(gap <= 1e-8, "{preset}: gap {gap} at lambda {at}");
    }
}

#[test]
fn sweep_reduces_to_three_well_closed_form() {
    let closed = run("three-well", Mode::ThreeWell);
    let sweep = run("three-well", Mode::General);
    let (gap, at) = max_gap(&closed.profiles, &sweep.profiles, closed.lambda_max, 10_000);
    assert!(gap <= 1e-8, "gap {gap} at lambda {at}");
    for (closed_name, sweep_name) in [("c*", "a{1,2}"), ("c**", "a{1,2,3}")] {
        let c = closed.profiles.merge_level(closed_name).unwrap();
        let s = sweep.profiles.merge_level(sweep_name).unwrap();
        assert!((c - s).abs() <= 1e-8, "{closed_name} = {c}, {sweep_name} = {s}");
    }
}

#[test]
fn linear_two_well_is_a_step() {
    let a = run("two-well-linear", Mode::TwoWell);
    let p = &a.profiles;
    for iv in &p.intervals {
        assert!(iv.pieces.iter().all(|pc| pc.is_constant()), "{:?}", iv.pieces);
    }
    // V12 = 0.5 > V21 = 0.3: the measure ends on O1.
    let last = p.values(10.0).unwrap();
    assert!(last.iter().all(|v| (v - p.g[0]).abs() < 1e-9), "{last:?}");
}

#[test]
fn tied_rates_are_reported_as_assumption_a() {
    let text = common::table_config(3, &[0.5, 0.5, 0.3, 0.9, 1.2, 0.7], &[0.0; 6], &[0.0, 0.5, 1.0]);
    let cfg = RunConfig::parse(&text).unwrap();
    let Err(e) = analyze(&cfg, None) else { panic!("tied rates accepted") };
    assert!(matches!(e, metastable::Error::AssumptionAViolation { .. }), "{e}");
    assert_eq!(e.class(), metastable::error::ErrorClass::Assumption);
}
