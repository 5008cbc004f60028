//! Tables and JSON aggregates over a bench run.
//!
//! Censored trials sort after every finite value. An aggregate that lands
//! on a censored trial is itself censored and rendered as `>budget`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::bench::{BenchReport, ConfigRun};
use crate::stats::p_value;

pub const CENSORED: &str = ">budget";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Value(f64),
    Censored,
}

impl Serialize for Cell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Value(v) => s.serialize_f64(*v),
            Cell::Censored => s.serialize_str(CENSORED),
        }
    }
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Value(v) if v.fract() == 0.0 => format!("{v:.0}"),
            Cell::Value(v) => format!("{v:.1}"),
            Cell::Censored => CENSORED.to_string(),
        }
    }

    fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Censored => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub min: Cell,
    pub median: Cell,
    pub max: Cell,
}

/// Min, median and max with `None` treated as +infinity.
pub fn aggregate(values: &[Option<f64>]) -> Aggregate {
    let mut v: Vec<Option<f64>> = values.to_vec();
    v.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let cell = |x: Option<f64>| x.map_or(Cell::Censored, Cell::Value);
    if v.is_empty() {
        return Aggregate {
            min: Cell::Censored,
            median: Cell::Censored,
            max: Cell::Censored,
        };
    }
    let n = v.len();
    let median = if n % 2 == 1 {
        cell(v[n / 2])
    } else {
        match (v[n / 2 - 1], v[n / 2]) {
            (Some(a), Some(b)) => Cell::Value((a + b) / 2.0),
            _ => Cell::Censored,
        }
    };
    Aggregate {
        min: cell(v[0]),
        median,
        max: cell(v[n - 1]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    /// One aggregate per config, in matrix order.
    pub per_config: Vec<Aggregate>,
    /// Trials where the value is finite, per config.
    pub finite: Vec<usize>,
    /// Median minus the first config's median, for every other config.
    pub deltas: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub scenario: String,
    pub category: String,
    pub configs: Vec<String>,
    pub trials: usize,
    pub rows: Vec<Row>,
    /// Two-sided Mann-Whitney p of final block counts, each config
    /// against the first.
    pub block_p: Vec<Option<f64>>,
}

fn row(name: String, runs: &[ConfigRun], pick: impl Fn(&crate::bench::TrialResult) -> Option<f64>) -> Row {
    let per: Vec<Vec<Option<f64>>> = runs.iter().map(|r| r.trials.iter().map(&pick).collect()).collect();
    let per_config: Vec<Aggregate> = per.iter().map(|v| aggregate(v)).collect();
    let finite = per.iter().map(|v| v.iter().flatten().count()).collect();
    let base = per_config.first().and_then(|a| a.median.value());
    let deltas = per_config
        .iter()
        .skip(1)
        .map(|a| match (base, a.median.value()) {
            (Some(b), Some(m)) => Cell::Value(m - b),
            _ => Cell::Censored,
        })
        .collect();
    Row {
        name,
        per_config,
        finite,
        deltas,
    }
}

pub fn tables(report: &BenchReport) -> Vec<Table> {
    report
        .scenarios
        .iter()
        .map(|s| {
            let mut rows = Vec::new();
            for (k, label) in s.strings.iter().enumerate() {
                rows.push(row(label.clone(), &s.runs, |t| {
                    t.solve_execs.get(k).copied().flatten().map(|x| x as f64)
                }));
            }
            rows.push(row("blocks".into(), &s.runs, |t| Some(t.unique_blocks as f64)));
            rows.push(row("crashes".into(), &s.runs, |t| Some(t.crashes as f64)));
            let blocks: Vec<Vec<f64>> = s
                .runs
                .iter()
                .map(|r| r.trials.iter().map(|t| t.unique_blocks as f64).collect())
                .collect();
            let block_p = blocks
                .iter()
                .skip(1)
                .map(|b| p_value(&blocks[0], b).ok())
                .collect();
            Table {
                scenario: s.scenario.clone(),
                category: s.category.clone(),
                configs: s.runs.iter().map(|r| r.config.name.clone()).collect(),
                trials: s.runs.first().map_or(0, |r| r.trials.len()),
                rows,
                block_p,
            }
        })
        .collect()
}

pub fn render(tables: &[Table]) -> String {
    let mut out = String::new();
    for t in tables {
        let _ = writeln!(out, "## {} ({}), {} trials", t.scenario, t.category, t.trials);
        let mut header = vec!["".to_string()];
        for c in &t.configs {
            header.push(format!("{c} min/med/max"));
        }
        for c in t.configs.iter().skip(1) {
            header.push(format!("delta {c}"));
        }
        let mut lines = vec![header];
        for r in &t.rows {
            let mut line = vec![r.name.clone()];
            for (a, n) in r.per_config.iter().zip(&r.finite) {
                line.push(format!(
                    "{} / {} / {} ({n}/{})",
                    a.min.render(),
                    a.median.render(),
                    a.max.render(),
                    t.trials
                ));
            }
            line.extend(r.deltas.iter().map(Cell::render));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        for l in &lines {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        for (c, p) in t.configs.iter().skip(1).zip(&t.block_p) {
            match p {
                Some(p) => {
                    let _ = writeln!(out, "blocks {} vs {c}: Mann-Whitney p = {p:.4}", t.configs[0]);
                }
                None => {
                    let _ = writeln!(out, "blocks {} vs {c}: Mann-Whitney p = n/a", t.configs[0]);
                }
            }
        }
        out.push('\n');
    }
    out
}
