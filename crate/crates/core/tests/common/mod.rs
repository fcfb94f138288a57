//! Shared checks for the integration and acceptance tests.
#![allow(dead_code)]

use metastable::pipeline::Analysis;
use metastable::profile::{BreakKind, CycleState, ProfileSet};
use metastable::Error;
use rand::Rng;

pub const VALUE_TOL: f64 = 1e-9;
pub const ENGAGED_TOL: f64 = 1e-8;

/// Error kinds that mark a randomly drawn input as outside the valid class.
pub fn invalid_input(e: &Error) -> bool {
    matches!(
        e,
        Error::GenericityViolation { .. }
            | Error::HierarchyUnstable(_)
            | Error::AssumptionAViolation { .. }
            | Error::OrderingViolation(_)
            | Error::BothDiscontinuousAtMerge { .. }
            | Error::DegenerateData(_)
            | Error::SystemAssumptions(_)
    )
}

pub fn lambda_grid(p: &ProfileSet, lambda_max: f64, n: usize) -> Vec<f64> {
    let mut ls: Vec<f64> = (1..=n).map(|k| lambda_max * k as f64 / n as f64).collect();
    for s in p.special_points() {
        ls.extend([s * (1.0 - 1e-9), s, s * (1.0 + 1e-9)]);
    }
    ls.retain(|l| *l > 0.0 && l.is_finite());
    ls.sort_by(f64::total_cmp);
    ls
}

fn distinct(v: &[f64]) -> usize {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    1 + s.windows(2).filter(|w| w[1] - w[0] > VALUE_TOL).count()
}

pub fn range_violations(p: &ProfileSet, grid: &[f64]) -> Vec<String> {
    let lo = p.g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![];
    for &l in grid {
        for (i, v) in p.values(l).unwrap().into_iter().enumerate() {
            if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
                out.push(format!("c{} = {v} outside [{lo}, {hi}] at lambda {l}", i + 1));
            }
        }
    }
    out
}

pub fn merging_violations(p: &ProfileSet, grid: &[f64]) -> Vec<String> {
    merging_violations_except(p, grid, &[])
}

/// As above, but a rise right after one of `touches` is not reported.
pub fn merging_violations_except(p: &ProfileSet, grid: &[f64], touches: &[f64]) -> Vec<String> {
    let mut out = vec![];
    let mut prev: Option<(f64, usize)> = None;
    for &l in grid {
        let d = distinct(&p.values(l).unwrap());
        if let Some((pl, pd)) = prev {
            if d > pd && !touches.iter().any(|t| (t - pl).abs() <= 1e-12 * (1.0 + t)) {
                out.push(format!("distinct values rise from {pd} to {d} between lambda {pl:.6} and {l:.6}"));
            }
        }
        prev = Some((l, d));
    }
    out
}

pub fn constancy_violations(p: &ProfileSet) -> Vec<String> {
    let last = p.last_special();
    let mut out = vec![];
    for l in [last * (1.0 + 1e-9) + 1e-12, last + 0.1, 2.0 * last + 1.0, 50.0 * last + 10.0] {
        let v = p.values(l).unwrap();
        if distinct(&v) != 1 {
            out.push(format!("values {v:?} differ at lambda {l} past the last special point {last}"));
        }
    }
    out
}

fn members(label: &str) -> Vec<usize> {
    label
        .trim_matches(|c| c == '{' || c == '}')
        .split(',')
        .map(|s| s.trim().parse::<usize>().unwrap() - 1)
        .collect()
}

/// Engaged cycles sit on their curve at the opening breakpoint; active cycles
/// lie strictly below it inside the interval.
pub fn state_violations(a: &Analysis) -> Vec<String> {
    let p = &a.profiles;
    let mut out = vec![];
    for (k, states) in p.ledger.states.iter().enumerate() {
        let lk = p.breakpoints[k].lambda;
        let next = p.breakpoints.get(k + 1).map_or(f64::INFINITY, |b| b.lambda);
        let mid = if next.is_finite() { 0.5 * (lk + next) } else { lk + 1.0 };
        for (label, state) in states {
            let Some(m) = a.curves.get(&format!("M{label}")) else { continue };
            let o = members(label)[0];
            match state {
                CycleState::Engaged => {
                    let level = p.value(o, lk).unwrap();
                    let d = (m.eval(level).unwrap() - lk).abs();
                    if d > ENGAGED_TOL {
                        out.push(format!("engaged {label} at lambda {lk}: |M - lambda| = {d:e}"));
                    }
                }
                CycleState::Active => {
                    let level = p.value(o, mid).unwrap();
                    let mv = m.eval(level).unwrap();
                    if !(mv < mid) {
                        out.push(format!("active {label} at lambda {mid}: M = {mv} is not below lambda"));
                    }
                }
                CycleState::Passive => {}
            }
        }
    }
    out
}

/// Every invariant, grouped by name.
pub fn invariant_report(a: &Analysis) -> Vec<(&'static str, Vec<String>)> {
    let grid = lambda_grid(&a.profiles, a.lambda_max, 4000);
    vec![
        ("range", range_violations(&a.profiles, &grid)),
        ("monotone merging", merging_violations(&a.profiles, &grid)),
        ("final constancy", constancy_violations(&a.profiles)),
        ("state consistency", state_violations(a)),
    ]
}

/// Random rate table with `n` states, rates linear in `c` between two rows.
pub fn table_config(n: usize, base: &[f64], slope: &[f64], g: &[f64]) -> String {
    let k = n * (n - 1);
    let row = |c: f64| {
        let vals: Vec<String> = (0..k).map(|j| format!("{:.6}", base[j] + slope[j] * c)).collect();
        format!("{c:.1}  {}", vals.join("  "))
    };
    let gs: Vec<String> = g.iter().map(|x| format!("{x:.6}")).collect();
    format!(
        "name = \"random\"\nseed = 1\n[system]\ng = [{}]\nv_table = \"\"\"\n# n = {n}\n{}\n{}\n\"\"\"\n",
        gs.join(", "),
        row(0.0),
        row(1.0)
    )
}

/// Crossings of two tracks that belong to different branches of the
/// hierarchy: the values touch there and part again.
pub fn track_touches(p: &ProfileSet) -> Vec<f64> {
    p.breakpoints
        .iter()
        .filter(|b| b.kinds.contains(&BreakKind::Crossing) && b.note.ends_with("(no effect)"))
        .map(|b| b.lambda)
        .collect()
}

/// Composite Simpson rule, kept apart from the library quadrature.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Exit cost from -1 over the saddle at 0 for `b = x - x^3`, `a = 1 + c`.
pub fn m_oracle(c: f64) -> f64 {
    2.0 * simpson(|x| -(x - x * x * x) / (1.0 + c), -1.0, 0.0, 2000)
}

pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest pointwise difference on `n` uniform samples, and where.
pub fn max_gap(a: &ProfileSet, b: &ProfileSet, lambda_max: f64, n: usize) -> (f64, f64) {
    let mut worst = (0.0, 0.0);
    for k in 1..=n {
        let l = lambda_max * k as f64 / n as f64;
        let (va, vb) = (a.values(l).unwrap(), b.values(l).unwrap());
        for (x, y) in va.iter().zip(&vb) {
            if (x - y).abs() > worst.0 {
                worst = ((x - y).abs(), l);
            }
        }
    }
    worst
}

/// Double well with diffusion affine in `x` and `c` and a clipped linear `g`.
pub fn double_well_config(al: f64, be: f64, ga: f64, k: f64, m: f64) -> String {
    format!(
        "name = \"random\"\nseed = 1\n[system]\ndrift = \"x - x^3\"\ndiffusion = \"{al:.6} + ({be:.6})*c + ({ga:.6})*x\"\ninitial = \"min(max({k:.6}*x + 0.5 + ({m:.6}), 0), 1)\"\ndomain = [-2.0, 2.0]\n[numerics]\ncurve_points = 129\n"
    )
}

pub fn random_table(rng: &mut impl Rng) -> String {
    let n = rng.random_range(2..=4usize);
    let k = n * (n - 1);
    let base: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..2.0)).collect();
    let slope: Vec<f64> = (0..k).map(|_| rng.random_range(-0.15..0.3)).collect();
    let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    table_config(n, &base, &slope, &g)
}

pub fn random_double_well(rng: &mut impl Rng) -> String {
    double_well_config(
        rng.random_range(0.6..1.5),
        rng.random_range(-0.4..0.8),
        rng.random_range(-0.3..0.3),
        rng.random_range(0.2..0.9),
        rng.random_range(-0.3..0.3),
    )
}
