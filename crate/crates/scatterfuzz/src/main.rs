use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scatterfuzz::bench::{parse_matrix, read_report, run_bench, write_report};
use scatterfuzz::report::{render, tables};
use scatterfuzz::scenario::{self, load_dir};
use scatterfuzz::{corpus, run_fuzz, FuzzOptions};
use scatterfuzz_core::cmplog::{find_record, CmpKey};
use scatterfuzz_core::solver::{colorize, naive_search, solve_with_alignments, SolveOptions, SolverEvent};
use scatterfuzz_core::vm::{execute, DEFAULT_BUDGET};
use scatterfuzz_core::CampaignConfig;
use serde_json::json;

#[derive(Parser)]
#[command(name = "scatterfuzz", version, about = "Greybox fuzzing of stream-fed firmware scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign.
    Fuzz {
        /// Built-in scenario name or path to a scenario file.
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        execs: u64,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time: Option<u64>,
        #[arg(long)]
        no_solver: bool,
        #[arg(long)]
        no_color: bool,
        #[arg(long)]
        no_lenfb: bool,
        /// Seed input files; defaults to one zero-filled input.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every scenario in a directory under each config of a matrix.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        trials: u32,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
    },
    /// Solve one comparison reached by an input.
    Solve {
        scenario: String,
        input: PathBuf,
        /// Label of the comparison call.
        #[arg(long)]
        cmp: String,
        #[arg(long, default_value_t = 0)]
        hit: u32,
        #[arg(long)]
        color: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also run the exhaustive search with this execution budget.
        #[arg(long)]
        naive: Option<u64>,
        /// Print solver steps as JSON lines before the result.
        #[arg(long)]
        events: bool,
    },
    /// Render tables for a bench output directory.
    Report { dir: PathBuf },
    /// List built-in scenarios.
    List,
}

fn print_line(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fuzz {
            scenario,
            seed,
            execs,
            time,
            no_solver,
            no_color,
            no_lenfb,
            inputs,
            out,
        } => {
            let s = scenario::resolve(&scenario)?;
            let mut opts = FuzzOptions::new(CampaignConfig {
                rng_seed: seed,
                max_executions: execs,
                wall_clock_limit: time,
                solver_enabled: !no_solver,
                colorization_enabled: !no_color,
                length_feedback_enabled: !no_lenfb,
                ..CampaignConfig::default()
            });
            if !inputs.is_empty() {
                opts.seeds = inputs
                    .iter()
                    .map(|p| std::fs::read(p).with_context(|| format!("reading {}", p.display())))
                    .collect::<Result<_>>()?;
            }
            let r = run_fuzz(&s, &opts, out.as_deref())?;
            let st = &r.campaign.stats;
            print_line(&json!({
                "scenario": s.name,
                "executions": st.executions,
                "unique_blocks": st.final_unique_blocks(),
                "queue_entries": r.campaign.queue.len(),
                "crashes": st.crashes.len(),
                "solved": r.first_pass.iter().map(|(e, at)| json!({
                    "label": e.label, "ideal": e.ideal_lossy(), "first_pass": at,
                })).collect::<Vec<_>>(),
                "wall_clock_secs": r.elapsed.as_secs_f64(),
            }))?;
        }
        Command::Bench {
            corpus,
            trials,
            matrix,
            out,
        } => {
            let scenarios = load_dir(&corpus)?;
            let text = std::fs::read_to_string(&matrix)
                .with_context(|| format!("reading {}", matrix.display()))?;
            let m = parse_matrix(&text)?;
            let report = run_bench(&scenarios, trials, &m)?;
            write_report(&report, &out)?;
            print!("{}", render(&tables(&report)));
        }
        Command::Solve {
            scenario,
            input,
            cmp,
            hit,
            color,
            seed,
            naive,
            events,
        } => {
            let s = scenario::resolve(&scenario)?;
            let p = &s.program;
            let site = p
                .site_of_label(&cmp)
                .with_context(|| format!("no label `{cmp}` in {}", s.name))?;
            let bytes = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let key = CmpKey::new(site, hit);
            let trace = execute(p, &bytes, DEFAULT_BUDGET);
            let Some(rec) = find_record(&trace, key).cloned() else {
                bail!("input does not reach `{cmp}` (hit {hit})");
            };
            let mut exec = |i: &[u8]| execute(p, i, DEFAULT_BUDGET);
            let mut log: Vec<SolverEvent> = Vec::new();
            let (base, rec, color_execs) = if color {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let c = colorize(&bytes, &rec, &mut exec, &mut rng, None, &mut log)
                    .context("input no longer reaches the comparison")?;
                (c.input, c.record, c.executions)
            } else {
                (bytes.clone(), rec, 0)
            };
            let result = solve_with_alignments(&base, &rec, &mut exec, &SolveOptions::default(), &mut log)?;
            if events {
                for e in &log {
                    print_line(&serde_json::to_value(e)?)?;
                }
            }
            let mut v = json!({
                "observed": String::from_utf8_lossy(rec.observed_str()),
                "ideal": String::from_utf8_lossy(rec.ideal_str()),
                "read_cursor": rec.read_cursor,
                "status": result.status.name(),
                "detail": result.status,
                "alignment": result.alignment,
                "mapped": result.mapped,
                "executions": result.executions_used,
                "color_executions": color_execs,
                "solved_input": result.solved_input.as_deref().map(hex::encode),
            });
            if let Some(budget) = naive {
                let n = naive_search(&base, &rec, &mut exec, budget);
                v["naive"] = json!({
                    "combinations": n.combinations.to_string(),
                    "status": n.status.name(),
                    "executions": n.executions_used,
                });
            }
            print_line(&v)?;
        }
        Command::Report { dir } => {
            let report = read_report(&dir)?;
            let t = tables(&report);
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&t)? + "\n")?;
            print!("{}", render(&t));
        }
        Command::List => {
            for s in corpus::all() {
                let strings: Vec<String> = s.expected.iter().map(|e| format!("{:?}", e.ideal_lossy())).collect();
                println!("{:<14} {:<16} {}", s.name, s.category.as_str(), strings.join(" "));
            }
        }
    }
    Ok(())
}
