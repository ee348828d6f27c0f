#![allow(dead_code)]
pub mod gate_cases;
pub mod oracles;

use std::path::PathBuf;

use tlr_core::replay::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// The six-light, three-group demo route.
pub fn demo_scenario() -> Scenario {
    Scenario::load(&scenario_path("six_lights.json")).expect("demo scenario loads")
}
