//! Scenarios compiled into the binary.

use crate::scenario::{Scenario, ScenarioError};

macro_rules! corpus {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name, ".s")))),*]
    };
}

pub const SOURCES: &[(&str, &str)] = corpus![
    "adc_filter",
    "blink",
    "console",
    "fig3_abcd",
    "frame_ok",
    "interleave",
    "modem_ok",
    "poweron",
    "print_fp",
    "rpl_refresh",
    "state_machine",
    "substring",
    "token_help",
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn get(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, src)| Scenario::parse(n, src))
}

/// Every built-in scenario. Panics if one fails validation, which the test
/// suite rules out.
pub fn all() -> Vec<Scenario> {
    SOURCES
        .iter()
        .map(|(n, src)| Scenario::parse(n, src).unwrap_or_else(|e| panic!("built-in scenario: {e}")))
        .collect()
}
