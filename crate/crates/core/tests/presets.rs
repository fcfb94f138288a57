use metastable::config::{preset_names, RunConfig};
use metastable::pipeline::analyze;

#[test]
fn every_preset_analyzes() {
    for name in preset_names() {
        let cfg = RunConfig::preset(name).unwrap();
        let t = std::time::Instant::now();
        let a = match analyze(&cfg, None) {
            Err(metastable::Error::GenericityViolation { .. }) if name == "linear-symmetric" => continue,
            r => r.unwrap_or_else(|e| panic!("{name}: {e}")),
        };
        eprintln!(
            "{name}: mode {} g {:?} specials {:?} merges {:?} notes {:?} in {:?}",
            a.mode.as_str(),
            a.model.g,
            a.profiles.special_points(),
            a.profiles.merge_levels,
            a.profiles.notes,
            t.elapsed()
        );
        eprintln!("{}", a.stability.render());
    }
}
