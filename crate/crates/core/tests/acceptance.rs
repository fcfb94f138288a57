//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use common::{bisect, invalid_input, invariant_report, m_oracle, max_gap, random_double_well, random_table};
use metastable::config::{preset_names, Mode, RunConfig};
use metastable::hierarchy::build_hierarchy;
use metastable::pipeline::{analyze, build_model, Analysis};
use metastable::profile::{metastable_distribution, ProfileSet};
use metastable::quad::QuadOptions;
use metastable::quasipotential::{action_bruteforce, quasipotential_1d, Levels, VMatrixAtC};
use metastable::system::{find_equilibria, RootOptions, SystemSpec};
use metastable::verification::check_lemma1;
use metastable::verification::pde::{solve_pde, PdeOptions};
use metastable::verification::report::{sde_check, verify_profile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<(bool, String), String>;

fn run(preset: &str, mode: Mode) -> Result<Analysis, String> {
    let mut cfg = RunConfig::preset(preset).map_err(|e| e.to_string())?;
    cfg.mode = mode;
    analyze(&cfg, None).map_err(|e| format!("{preset}: {e}"))
}

fn tagged(p: &ProfileSet, tag: &str) -> Option<f64> {
    p.breakpoints
        .iter()
        .find(|b| b.kinds.iter().any(|k| k.tag() == tag))
        .map(|b| b.lambda)
}

fn ac1() -> Outcome {
    let spec = SystemSpec::new("x - x^3", "1", "min(max(x + 0.5, 0), 1)", (-2.0, 2.0)).map_err(|e| e.to_string())?;
    let eq = find_equilibria(&spec, &RootOptions::default()).map_err(|e| e.to_string())?;
    let v = quasipotential_1d(&spec, &eq, Levels::Uniform(0.0), -1.0, 0.0, &QuadOptions::default())
        .map_err(|e| e.to_string())?;
    let bf = action_bruteforce(&spec, 0.0, -1.0, 0.0, 64, 200).action;
    let rel = (bf - v) / v;
    let ok = (v - 0.5).abs() <= 1e-8 && bf >= v - 1e-12 && rel <= 0.04;
    Ok((ok, format!("V(O1 -> 0) = {v:.12}, 64-knot action {bf:.8} (+{:.3}%)", 100.0 * rel)))
}

fn ac2() -> Outcome {
    let v = VMatrixAtC::from_rows(
        0.0,
        vec![vec![0.0, 2.0, 6.0], vec![3.0, 0.0, 5.0], vec![7.0, 4.0, 0.0]],
    );
    let h = build_hierarchy(&v).map_err(|e| e.to_string())?;
    let pair = h.cycles.iter().find(|c| c.members == [0, 1]).ok_or("no cycle {1,2}")?;
    let rate = pair.exit_rate(2);
    Ok((rate == Some(5.0), format!("exit rate of {{1,2}} toward O3 = {rate:?}")))
}

fn ac3() -> Outcome {
    let a = run("two-well", Mode::TwoWell)?;
    let p = &a.profiles;
    let get = |t: &str| tagged(p, t).ok_or(format!("no breakpoint tagged {t}"));
    let (l1, l2, l3) = (get("lambda_1")?, get("lambda_2")?, get("lambda_3")?);
    let c_star = p.merge_level("c*").ok_or("no merge level c*")?;
    let mut worst = 0.0f64;
    for k in 1..400 {
        let lambda = 0.25 + 0.25 * k as f64 / 400.0;
        let oracle = bisect(|c| m_oracle(c) - lambda, 0.0, 1.0);
        let v = p.value(1, lambda).map_err(|e| e.to_string())?;
        worst = worst.max((v - oracle).abs()).max((oracle - (1.0 / (2.0 * lambda) - 1.0)).abs());
    }
    let errs = [
        (l1 - m_oracle(0.0)).abs(),
        (l2 - m_oracle(1.0)).abs(),
        (l3 - 0.5).abs(),
        c_star.abs(),
        worst,
    ];
    let ok = errs.iter().all(|e| *e <= 1e-8);
    Ok((
        ok,
        format!("lambda_1 {l1:.10}, lambda_2 {l2:.10}, lambda_3 {l3:.10}, c* {c_star:.1e}, profile error {worst:.1e}"),
    ))
}

fn ac4() -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for (preset, closed_mode) in [("two-well", Mode::TwoWell), ("two-well-linear", Mode::TwoWell), ("three-well", Mode::ThreeWell)] {
        let closed = run(preset, closed_mode)?;
        let sweep = run(preset, Mode::General)?;
        let (gap, at) = max_gap(&closed.profiles, &sweep.profiles, closed.lambda_max, 10_000);
        ok &= gap <= 1e-8;
        parts.push(format!("{preset} {gap:.1e} (lambda {at:.4})"));
    }
    Ok((ok, format!("max gap on 1e4 samples: {}", parts.join(", "))))
}

fn ac5() -> Outcome {
    let mut failures = vec![];
    let mut checked = vec![];
    for name in preset_names() {
        let cfg = RunConfig::preset(name).map_err(|e| e.to_string())?;
        match analyze(&cfg, None) {
            Ok(a) => {
                checked.push(name.to_string());
                for (inv, v) in invariant_report(&a) {
                    if let Some(first) = v.first() {
                        failures.push(format!("{name}: {inv} ({} cases, first: {first})", v.len()));
                    }
                }
            }
            Err(e) if invalid_input(&e) => checked.push(format!("{name} (no profile: {})", e.to_string().lines().next().unwrap_or(""))),
            Err(e) => return Err(format!("{name}: {e}")),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(20240620);
    let (mut valid, mut drawn) = (0, 0);
    while valid < 50 {
        drawn += 1;
        if drawn > 5000 {
            return Err("fewer than 50 valid random specs in 5000 draws".into());
        }
        let text = if valid % 2 == 0 { random_table(&mut rng) } else { random_double_well(&mut rng) };
        let cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
        let a = match analyze(&cfg, None) {
            Ok(a) => a,
            Err(e) if invalid_input(&e) => continue,
            Err(e) => return Err(format!("random spec {drawn}: {e}\n{text}")),
        };
        valid += 1;
        for (inv, v) in invariant_report(&a) {
            if let Some(first) = v.first() {
                failures.push(format!("random spec {drawn}: {inv} (first: {first})"));
            }
        }
    }
    let detail = format!(
        "presets [{}], {valid} random specs from {drawn} draws; {} violation groups{}",
        checked.join(", "),
        failures.len(),
        if failures.is_empty() { String::new() } else { format!(": {}", failures.join("; ")) }
    );
    Ok((failures.is_empty(), detail))
}

fn ac6() -> Outcome {
    let cfg = RunConfig::preset("two-well").map_err(|e| e.to_string())?;
    let a = analyze(&cfg, None).map_err(|e| e.to_string())?;
    let sp = a.model.spatial.as_ref().ok_or("two-well has no spatial system")?;
    let r = verify_profile(
        &sp.spec,
        &sp.eq,
        &a.profiles,
        &[0.45, 0.35, 0.28],
        &[0.30, 0.35, 0.45],
        &[0.12],
        0.03,
        PdeOptions::from(&cfg.verification.pde),
    )
    .map_err(|e| e.to_string())?;
    let worst = r
        .cells
        .iter()
        .filter(|c| c.eps == 0.28)
        .max_by(|x, y| x.err.total_cmp(&y.err))
        .ok_or("no cells at eps 0.28")?;
    let monotone = r.monotone.iter().all(|m| m.2);
    let ok = monotone && r.skipped.is_empty() && r.max_error_at_smallest_eps() <= 0.12;
    Ok((
        ok,
        format!(
            "errors non-increasing in {}/{} series; max error at eps 0.28 = {:.4} (O{} at lambda {}){}",
            r.monotone.iter().filter(|m| m.2).count(),
            r.monotone.len(),
            worst.err,
            worst.i + 1,
            worst.lambda,
            if r.skipped.is_empty() { String::new() } else { format!("; {} lambdas skipped", r.skipped.len()) }
        ),
    ))
}

fn ac7() -> Outcome {
    let cfg = RunConfig::preset("linear-symmetric").map_err(|e| e.to_string())?;
    if cfg.verification.sde.paths != 20_000 {
        return Err(format!("preset runs {} paths", cfg.verification.sde.paths));
    }
    let model = build_model(&cfg).map_err(|e| e.to_string())?;
    let sp = model.spatial.as_ref().ok_or("no spatial system")?;
    let s = sde_check(&cfg, &sp.spec, &sp.eq, None, &model.g).map_err(|e| e.to_string())?;
    let e = &s.ensemble;
    let gap = (e.mean_g - e.u_pde).abs();
    let ok = gap <= e.half_width + 1e-2;
    Ok((
        ok,
        format!(
            "{} paths, eps {}, lambda {}: E g(X_T) = {:.5}, u = {:.5}, gap {gap:.5} <= {:.5} + 0.01",
            e.paths, e.eps, e.lambda, e.mean_g, e.u_pde, e.half_width
        ),
    ))
}

fn ac8() -> Outcome {
    let cfg = RunConfig::preset("two-well").map_err(|e| e.to_string())?;
    let sc = &cfg.verification.sde;
    if (sc.lambda, sc.eps, sc.x0_index) != (0.35, 0.28, Some(1)) {
        return Err("two-well preset ensemble is not at lambda 0.35, eps 0.28, x0 = O2".into());
    }
    let a = analyze(&cfg, None).map_err(|e| e.to_string())?;
    let sp = a.model.spatial.as_ref().ok_or("no spatial system")?;
    let level = a.profiles.value(1, 0.35).map_err(|e| e.to_string())?;
    let (p1, p2) = metastable_distribution(level, 0.0, 1.0).map_err(|e| e.to_string())?;
    let s = sde_check(&cfg, &sp.spec, &sp.eq, Some(&a.profiles), &a.model.g).map_err(|e| e.to_string())?;
    let e = &s.ensemble;
    let predicted_ok = (p1 - 0.5714).abs() < 5e-5 && (p2 - 0.4286).abs() < 5e-5;
    let within = [p1, p2]
        .iter()
        .zip(&e.weights)
        .zip(&e.weight_half_widths)
        .all(|((p, w), hw)| (p - w).abs() <= 3.0 * hw);
    Ok((
        predicted_ok && within,
        format!(
            "predicted ({p1:.4}, {p2:.4}), ensemble of {} paths ({:.4}, {:.4}) +- ({:.4}, {:.4})",
            e.paths, e.weights[0], e.weights[1], e.weight_half_widths[0], e.weight_half_widths[1]
        ),
    ))
}

fn ac9() -> Outcome {
    let mut parts = vec![];
    let mut ok = true;
    for name in preset_names() {
        let cfg = RunConfig::preset(name).map_err(|e| e.to_string())?;
        let model = build_model(&cfg).map_err(|e| e.to_string())?;
        let Some(sp) = model.spatial.as_ref() else {
            parts.push(format!("{name} n/a (rate table)"));
            continue;
        };
        let sol = solve_pde(&sp.spec, 0.28, &[0.2], PdeOptions::from(&cfg.verification.pde)).map_err(|e| e.to_string())?;
        let r = check_lemma1(&sol, &sp.eq, 0.1, 0.2).map_err(|e| e.to_string())?;
        ok &= r.max_deviation <= 0.1;
        parts.push(format!("{name} {:.4}", r.max_deviation));
    }
    Ok((ok, format!("max plateau deviation: {}", parts.join(", "))))
}

fn ac10() -> Outcome {
    let a = run("bifurcation", Mode::Auto)?;
    let p = &a.profiles;
    let mut checks: Vec<(String, bool)> = vec![];
    let sc = a.scenario.as_ref().ok_or("no threshold detected")?;
    let detected = a.mode == Mode::ChangingHierarchy && a.stability.single_threshold() == Some(sc.c_bar);
    checks.push((format!("threshold c_bar = {:.6} from the stability scan", sc.c_bar), detected));

    let lambdas: Vec<Option<f64>> = (1..=9).map(|k| tagged(p, &format!("lambda_{k}"))).collect();
    let all = lambdas.iter().all(Option::is_some);
    let ls: Vec<f64> = lambdas.iter().flatten().copied().collect();
    checks.push(("lambda_1 < ... < lambda_9".into(), all && ls.windows(2).all(|w| w[0] < w[1])));

    let pieces_ok = p.n == 3 && p.intervals.len() == 10 && p.intervals.iter().all(|iv| iv.pieces.len() == 3);
    checks.push((format!("3 series on {} intervals", p.intervals.len()), pieces_ok));

    if let (true, Some(&l8)) = (all, ls.get(7)) {
        let mut pair = true;
        for k in 1..=200 {
            let l = l8 + (2.0 * ls[8] - l8) * k as f64 / 200.0;
            let v = p.values(l).map_err(|e| e.to_string())?;
            pair &= (v[1] - v[2]).abs() <= 1e-9;
        }
        checks.push(("c2 = c3 after lambda_8".into(), pair));
    }

    let levels: Vec<Option<f64>> = ["c*", "c**", "c***"].iter().map(|n| p.merge_level(n)).collect();
    let lv: Vec<f64> = levels.iter().flatten().copied().collect();
    let increasing = lv.len() == 3 && lv.windows(2).all(|w| w[0] < w[1]);
    checks.push((format!("merge levels c* < c** < c*** ({lv:.4?})"), increasing));

    let ok = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(what, pass)| format!("{what}: {}", if *pass { "ok" } else { "no" }))
        .collect::<Vec<_>>()
        .join("; ");
    Ok((ok, detail))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("quasi-potential oracle", ac1, Duration::from_secs(10)),
        ("hierarchy exit rate", ac2, Duration::from_secs(1)),
        ("two-well closed form", ac3, Duration::from_secs(10)),
        ("sweep reduces to closed forms", ac4, Duration::from_secs(60)),
        ("invariant suite", ac5, Duration::MAX),
        ("PDE convergence", ac6, Duration::from_secs(30 * 60)),
        ("PDE/SDE duality", ac7, Duration::from_secs(10 * 60)),
        ("limit distribution", ac8, Duration::MAX),
        ("plateau check", ac9, Duration::MAX),
        ("changing hierarchy scenario", ac10, Duration::MAX),
    ];
    let mut failed = 0;
    for (k, (name, f, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let took = t.elapsed();
        let (pass, detail) = match outcome {
            Ok((ok, d)) => (ok && took <= *limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let budget = if *limit == Duration::MAX { String::new() } else { format!(", limit {}s", limit.as_secs()) };
        if !pass {
            failed += 1;
        }
        println!(
            "AC{} {} {name}: {detail} [{:.1}s{budget}]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
