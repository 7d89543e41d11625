//! The shipped per-dataset config files agree with the built-in presets.

use gip::config::TrainConfig;
use std::path::PathBuf;

#[test]
fn shipped_configs_match_presets() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in TrainConfig::preset_names() {
        let path = dir.join(format!("{name}.toml"));
        let shipped = TrainConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(shipped, TrainConfig::preset(name).unwrap(), "{name}");
    }
}
