//! Files written by each command, and their manifests.

use crate::svg;
use metastable::config::RunConfig;
use metastable::curves::file_stem;
use metastable::error::{Error, Result};
use metastable::mcurve::content_hash;
use metastable::pipeline::{analyze as run_analysis, build_model, Analysis};
use metastable::profile::{render_csv, sample_profiles, ProfileDocument};
use metastable::stability::{check_hierarchy_stability, hierarchy_at};
use metastable::verification::report::{run_verification, VerificationRun};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Collects written files for the manifest.
struct Writer {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl Writer {
    fn new(root: &Path) -> Result<Writer> {
        std::fs::create_dir_all(root)?;
        Ok(Writer {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn put(&mut self, rel: &str, text: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, text)?;
        self.files.insert(rel.to_string(), content_hash(text));
        Ok(path)
    }

    fn manifest(&mut self, command: &str, cfg: &RunConfig, extra: Value) -> Result<PathBuf> {
        let config = cfg.to_toml();
        let mut m = json!({
            "tool": "metastable",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "name": cfg.name,
            "seed": cfg.seed,
            "config_sha256": content_hash(&config),
            "files": self.files,
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
            m.extend(e);
        }
        let text = serde_json::to_string_pretty(&m).expect("manifest serialises") + "\n";
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

fn curve_path(label: &str) -> String {
    match label.split_once('/') {
        Some((regime, l)) => format!("curves/{regime}/{}.tsv", file_stem(l)),
        None => format!("curves/{}.tsv", file_stem(label)),
    }
}

fn equilibria_report(a: &Analysis) -> String {
    let mut s = String::new();
    match &a.model.spatial {
        Some(sp) => {
            let _ = writeln!(s, "# stable equilibria");
            let _ = writeln!(s, "i\tx\tg\tbasin_lo\tbasin_hi");
            for (i, x) in sp.eq.stable.iter().enumerate() {
                let (lo, hi) = sp.eq.basins[i];
                let _ = writeln!(s, "{}\t{x:.12}\t{:.12}\t{lo:.12}\t{hi:.12}", i + 1, a.model.g[i]);
            }
            let _ = writeln!(s, "# unstable equilibria");
            for x in &sp.eq.unstable {
                let _ = writeln!(s, "{x:.12}");
            }
            let _ = writeln!(s, "# standing assumptions");
            s.push_str(&sp.assumptions.render());
        }
        None => {
            let _ = writeln!(s, "# rate table; initial levels");
            for (i, g) in a.model.g.iter().enumerate() {
                let _ = writeln!(s, "{}\t{g:.12}", i + 1);
            }
        }
    }
    s
}

fn hierarchy_document(a: &Analysis) -> String {
    let mut s = String::new();
    match &a.scenario {
        Some(sc) => {
            let _ = writeln!(s, "# hierarchy below c_bar = {:.9}", sc.c_bar);
            s.push_str(&sc.low.render());
            let _ = writeln!(s, "# hierarchy above c_bar = {:.9}", sc.c_bar);
            s.push_str(&sc.high.render());
        }
        None => {
            let (lo, _) = a.model.rates.c_range();
            let _ = writeln!(s, "# hierarchy (rates at c = {lo})");
            s.push_str(&a.hierarchy.render());
        }
    }
    let _ = writeln!(s, "# stability scan");
    s.push_str(&a.stability.render());
    s
}

/// `analyze`: run the pipeline and write every artifact.
pub fn analyze(cfg: &RunConfig) -> Result<Analysis> {
    let out = &cfg.output.dir;
    let mut w = Writer::new(out)?;
    let cache = cfg.output.cache.then(|| out.join("curves"));
    let a = run_analysis(cfg, cache.as_deref())?;
    w.put("config.toml", &cfg.to_toml())?;
    w.put("equilibria.txt", &equilibria_report(&a))?;
    w.put("hierarchy.txt", &hierarchy_document(&a))?;
    let mut hashes = BTreeMap::new();
    for (label, curve) in &a.curves {
        let hash = a.provenance.hashes.get(label).cloned().unwrap_or_default();
        w.put(&curve_path(label), &curve.render(&hash))?;
        hashes.insert(label.clone(), hash);
    }
    let doc = ProfileDocument::from_profiles(&a.profiles, a.lambda_max, cfg.numerics.sample_points)?;
    w.put("profiles.json", &(serde_json::to_string_pretty(&doc).expect("document serialises") + "\n"))?;
    let rows = sample_profiles(&a.profiles, a.lambda_max, cfg.numerics.sample_points)?;
    w.put("profiles.csv", &render_csv(&rows))?;
    w.manifest(
        "analyze",
        cfg,
        json!({
            "mode_requested": cfg.mode.as_str(),
            "mode_used": a.mode.as_str(),
            "threshold": a.scenario.as_ref().map(|s| s.c_bar),
            "curves": hashes,
            "cache_hits": a.provenance.cache_hits,
            "special_points": a.profiles.special_points(),
        }),
    )?;
    Ok(a)
}

pub fn analysis_summary(a: &Analysis) -> String {
    let p = &a.profiles;
    let mut s = format!("construction: {} ({})\n", a.mode.as_str(), p.construction);
    if let Some(sc) = &a.scenario {
        let _ = writeln!(s, "threshold c_bar = {:.9}", sc.c_bar);
    }
    let _ = writeln!(s, "g at equilibria: {:?}", a.model.g);
    let _ = writeln!(s, "special points:");
    for b in p.breakpoints.iter().filter(|b| b.lambda > 0.0 && b.lambda.is_finite()) {
        let tags: Vec<String> = b.kinds.iter().map(|k| k.tag()).collect();
        let _ = writeln!(s, "  {:.9}  {}", b.lambda, tags.join(","));
    }
    for (name, c) in &p.merge_levels {
        let _ = writeln!(s, "merge level {name} = {c:.9}");
    }
    for n in &p.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

/// Reuse the analysis when its artifacts are present and current.
fn load_or_run(cfg: &RunConfig, no_implicit: bool) -> Result<std::result::Result<Analysis, Error>> {
    let doc_path = cfg.output.dir.join("profiles.json");
    if no_implicit && !doc_path.exists() {
        return Err(Error::Config(format!(
            "analysis artifacts missing ({}); run `metastable analyze` first",
            doc_path.display()
        )));
    }
    let cache = cfg.output.cache.then(|| cfg.output.dir.join("curves"));
    let a = match run_analysis(cfg, cache.as_deref()) {
        Ok(a) => a,
        Err(e @ Error::GenericityViolation { .. }) if !no_implicit => return Ok(Err(e)),
        Err(e) => return Err(e),
    };
    if no_implicit {
        let stored = std::fs::read_to_string(&doc_path)?;
        let doc = ProfileDocument::from_profiles(&a.profiles, a.lambda_max, cfg.numerics.sample_points)?;
        let fresh = serde_json::to_string_pretty(&doc).expect("document serialises") + "\n";
        if content_hash(&stored) != content_hash(&fresh) {
            return Err(Error::Config(format!(
                "{} is stale for this configuration; rerun `metastable analyze`",
                doc_path.display()
            )));
        }
    }
    Ok(Ok(a))
}

/// `verify`: PDE ladder, plateau check and ensemble.
pub fn verify(cfg: &RunConfig, no_implicit: bool) -> Result<VerificationRun> {
    let analysis = load_or_run(cfg, no_implicit)?;
    let (model, profiles, note) = match &analysis {
        Ok(a) => (a.model.clone(), Some(&a.profiles), None),
        Err(e) => (build_model(cfg)?, None, Some(format!("no profile: {e}"))),
    };
    let run = run_verification(cfg, &model, profiles, note)?;
    let mut w = Writer::new(&cfg.output.dir.join("verify"))?;
    if let Some(r) = &run.profile {
        w.put("verification.csv", &r.render_csv())?;
    }
    w.put("summary.txt", &run.summary())?;
    if let Some(sde) = &run.sde {
        w.put("pde_checkpoints.tsv", &sde.pde_checkpoints)?;
    }
    let sde = run.sde.as_ref().map(|s| {
        json!({
            "eps": s.ensemble.eps,
            "lambda": s.ensemble.lambda,
            "x0": s.ensemble.x0,
            "paths": s.ensemble.paths,
            "mean_g": s.ensemble.mean_g,
            "half_width": s.ensemble.half_width,
            "u_pde": s.ensemble.u_pde,
            "weights": s.ensemble.weights,
            "weight_half_widths": s.ensemble.weight_half_widths,
            "predicted_weights": s.predicted_weights,
            "passed": s.passed(),
        })
    });
    w.manifest(
        "verify",
        cfg,
        json!({
            "passed": run.passed(),
            "profile_passed": run.profile.as_ref().map(|p| p.passed()),
            "plateau_max_deviation": run.lemma1.max_deviation,
            "sde": sde,
        }),
    )?;
    Ok(run)
}

/// `plot-data`: dense series with both one-sided limits at each jump, line
/// styles and an SVG rendering.
pub fn plot_data(cfg: &RunConfig, no_implicit: bool) -> Result<Vec<PathBuf>> {
    let a = load_or_run(cfg, no_implicit)?.map_err(|e| e)?;
    let rows = sample_profiles(&a.profiles, a.lambda_max, cfg.numerics.sample_points)?;
    let styles: Vec<&str> = (0..a.profiles.n).map(svg::style_name).collect();
    let style_doc = json!({
        "series": (0..a.profiles.n).map(|i| json!({
            "column": format!("c{}", i + 1),
            "equilibrium": i + 1,
            "style": styles[i],
        })).collect::<Vec<_>>(),
        "special_points": a.profiles.special_points(),
        "merge_levels": a.profiles.merge_levels.iter().cloned().collect::<BTreeMap<_, _>>(),
        "lambda_max": a.lambda_max,
    });
    let mut w = Writer::new(&cfg.output.dir.join("plot"))?;
    let files = vec![
        w.put("profiles.csv", &render_csv(&rows))?,
        w.put("styles.json", &(serde_json::to_string_pretty(&style_doc).expect("styles serialise") + "\n"))?,
        w.put(
            "profiles.svg",
            &svg::render(&rows, &a.profiles.special_points(), a.profiles.g_bounds, &cfg.name),
        )?,
    ];
    w.manifest("plot-data", cfg, json!({}))?;
    Ok(files)
}

/// `hierarchy`: the structured hierarchy document and stability scan.
pub fn hierarchy(cfg: &RunConfig) -> Result<String> {
    let model = build_model(cfg)?;
    let rates = model.rates.as_ref();
    let num = &cfg.numerics;
    let report = check_hierarchy_stability(rates, rates.c_range(), num.stability_levels, num.stability_tuples, cfg.seed)?;
    let mut s = String::new();
    let (lo, hi) = rates.c_range();
    let _ = writeln!(s, "# hierarchy at c = {lo} (range [{lo}, {hi}])");
    s.push_str(&hierarchy_at(rates, lo)?.render());
    for f in &report.flips {
        let _ = writeln!(s, "# hierarchy above the threshold c = {:.9} (at c = {})", f.threshold, f.above);
        s.push_str(&hierarchy_at(rates, f.above)?.render());
    }
    let _ = writeln!(s, "# stability scan");
    s.push_str(&report.render());
    let mut w = Writer::new(&cfg.output.dir)?;
    w.put("hierarchy.txt", &s)?;
    Ok(s)
}
