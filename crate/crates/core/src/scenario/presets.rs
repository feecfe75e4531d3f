use super::{Result, Scenario, ScenarioError};

/// Built-in scenario names, in catalog order.
pub const PRESETS: &[&str] = &[
    "fig4a",
    "fig4b",
    "fig5a",
    "fig5b",
    "fig7",
    "fig8",
    "fig9a",
    "fig9b",
    "materials_table",
];

/// TOML source of a built-in scenario.
pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig4a" => include_str!("../../presets/fig4a.toml"),
        "fig4b" => include_str!("../../presets/fig4b.toml"),
        "fig5a" => include_str!("../../presets/fig5a.toml"),
        "fig5b" => include_str!("../../presets/fig5b.toml"),
        "fig7" => include_str!("../../presets/fig7.toml"),
        "fig8" => include_str!("../../presets/fig8.toml"),
        "fig9a" => include_str!("../../presets/fig9a.toml"),
        "fig9b" => include_str!("../../presets/fig9b.toml"),
        "materials_table" => include_str!("../../presets/materials_table.toml"),
        _ => return None,
    })
}

pub fn preset_scenario(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| ScenarioError::Config(format!("unknown preset `{name}`")))?;
    Scenario::from_toml_str(text)
}

/// `(name, description)` for every preset.
pub fn preset_catalog() -> Vec<(&'static str, String)> {
    PRESETS
        .iter()
        .map(|&n| (n, preset_scenario(n).map(|s| s.description).unwrap_or_default()))
        .collect()
}
