//! Repeated campaigns over a scenario set and a matrix of switch settings.

use std::path::Path;

use anyhow::{bail, Context, Result};
use scatterfuzz_core::hash::fnv64;
use scatterfuzz_core::CampaignConfig;
use serde::{Deserialize, Serialize};

use crate::campaign::{run_fuzz, FuzzOptions};
use crate::scenario::{Category, Scenario};

fn yes() -> bool {
    true
}

fn default_execs() -> u64 {
    100_000
}

/// One column of the configuration matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub name: String,
    #[serde(default = "yes")]
    pub solver: bool,
    #[serde(default = "yes")]
    pub color: bool,
    #[serde(default = "yes")]
    pub lenfb: bool,
    #[serde(default = "default_execs")]
    pub execs: u64,
}

impl SwitchConfig {
    pub fn campaign_config(&self, rng_seed: u64) -> CampaignConfig {
        CampaignConfig {
            rng_seed,
            max_executions: self.execs,
            solver_enabled: self.solver,
            colorization_enabled: self.color,
            length_feedback_enabled: self.lenfb,
            ..CampaignConfig::default()
        }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain struct serializes");
        format!("{:016x}", fnv64(&json))
    }
}

pub fn parse_matrix(text: &str) -> Result<Vec<SwitchConfig>> {
    let m: Vec<SwitchConfig> = serde_json::from_str(text).context("config matrix")?;
    if m.is_empty() {
        bail!("config matrix is empty");
    }
    for (i, c) in m.iter().enumerate() {
        if m[..i].iter().any(|o| o.name == c.name) {
            bail!("config name `{}` used twice", c.name);
        }
        if c.execs == 0 {
            bail!("config `{}` has a zero execution budget", c.name);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub rng_seed: u64,
    /// Per expected string, executions until it first passed; `None` is
    /// censored at the budget.
    pub solve_execs: Vec<Option<u64>>,
    pub unique_blocks: usize,
    pub crashes: usize,
    pub executions: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRun {
    pub config: SwitchConfig,
    pub digest: String,
    pub trials: Vec<TrialResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRuns {
    pub scenario: String,
    pub category: String,
    /// `label "ideal"` per expected string.
    pub strings: Vec<String>,
    pub runs: Vec<ConfigRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub trials: u32,
    pub scenarios: Vec<ScenarioRuns>,
}

pub fn run_trial(scenario: &Scenario, config: &SwitchConfig, rng_seed: u64) -> Result<TrialResult> {
    let opts = FuzzOptions::new(config.campaign_config(rng_seed));
    let out = run_fuzz(scenario, &opts, None)?;
    Ok(TrialResult {
        rng_seed,
        solve_execs: out.first_pass.iter().map(|(_, at)| *at).collect(),
        unique_blocks: out.campaign.stats.final_unique_blocks(),
        crashes: out.campaign.stats.crashes.len(),
        executions: out.campaign.stats.executions,
    })
}

/// Run `trials` campaigns (RNG seeds `1..=trials`) per scenario and config.
pub fn run_bench(scenarios: &[Scenario], trials: u32, matrix: &[SwitchConfig]) -> Result<BenchReport> {
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    let mut out = Vec::new();
    for s in scenarios {
        let mut runs = Vec::new();
        for c in matrix {
            let trials = (1..=trials as u64)
                .map(|seed| run_trial(s, c, seed))
                .collect::<Result<Vec<_>>>()?;
            runs.push(ConfigRun {
                config: c.clone(),
                digest: c.digest(),
                trials,
            });
        }
        out.push(ScenarioRuns {
            scenario: s.name.clone(),
            category: s.category.as_str().to_string(),
            strings: s
                .expected
                .iter()
                .map(|e| format!("{} {:?}", e.label, e.ideal_lossy()))
                .collect(),
            runs,
        });
    }
    Ok(BenchReport {
        trials,
        scenarios: out,
    })
}

pub const BENCH_FILE: &str = "bench.json";

pub fn write_report(report: &BenchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(BENCH_FILE);
    std::fs::write(&p, serde_json::to_string_pretty(report)? + "\n")
        .with_context(|| format!("writing {}", p.display()))
}

pub fn read_report(dir: &Path) -> Result<BenchReport> {
    let p = dir.join(BENCH_FILE);
    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

/// Scenarios of a category, in corpus order.
pub fn by_category(scenarios: &[Scenario], category: Category) -> Vec<Scenario> {
    scenarios.iter().filter(|s| s.category == category).cloned().collect()
}
