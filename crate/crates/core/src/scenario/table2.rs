//! The four-case toy community, embedded so it runs without external files.

use super::{load_scenario_str, ScenarioConfig, ScenarioError};

pub const TABLE2_SCENARIO: &str = include_str!("../../scenarios/table2.scenario");
pub const TABLE2_LOAD: &str = include_str!("../../scenarios/table2_load.csv");
pub const TABLE2_QUOTES: &str = include_str!("../../scenarios/table2_quotes.csv");

pub fn table2_scenario() -> ScenarioConfig {
    load_scenario_str(TABLE2_SCENARIO, "table2.scenario", |name| match name {
        "table2_load.csv" => Ok(TABLE2_LOAD.to_string()),
        "table2_quotes.csv" => Ok(TABLE2_QUOTES.to_string()),
        other => Err(ScenarioError::Series { file: other.to_string(), line: None, message: "not embedded".into() }),
    })
    .expect("embedded scenario is valid")
}
