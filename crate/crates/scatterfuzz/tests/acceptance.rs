//! Acceptance checks. Each test prints one `PASS`/`FAIL` line straight to
//! stdout (bypassing output capture) and then asserts.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatterfuzz::campaign::{run_fuzz, FuzzOptions};
use scatterfuzz::stats::{mann_whitney_u, p_value, MwuError};
use scatterfuzz::{corpus, Scenario};
use scatterfuzz_core::cmplog::{find_record, ComparisonRecord};
use scatterfuzz_core::coverage::LENGTH_WINDOW;
use scatterfuzz_core::engine::{run_campaign, CampaignObserver, ExecutionEvent, Origin};
use scatterfuzz_core::solver::{
    default_exec_budget, naive_search, solve, solve_with_alignments, ProgramExecutor,
    SolveOptions, SolveStatus, DEFAULT_DELIMITERS,
};
use scatterfuzz_core::vm::{execute, parse_scenario, TargetProgram, DEFAULT_BUDGET};
use scatterfuzz_core::{CampaignConfig, CmpKey};

fn report(n: u32, ok: bool, elapsed: Duration, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {n}: {verdict} ({:.2}s) {detail}",
        elapsed.as_secs_f64()
    );
    let _ = out.flush();
}

fn scenario(name: &str) -> Scenario {
    corpus::get(name).unwrap().unwrap()
}

fn record_at(s: &Scenario, label: &str, input: &[u8]) -> ComparisonRecord {
    let site = s.program.site_of_label(label).unwrap();
    let t = execute(&s.program, input, DEFAULT_BUDGET);
    find_record(&t, CmpKey::new(site, 0))
        .unwrap_or_else(|| panic!("{label} not reached"))
        .clone()
}

fn config(seed: u64, execs: u64, solver: bool) -> CampaignConfig {
    CampaignConfig {
        rng_seed: seed,
        max_executions: execs,
        solver_enabled: solver,
        ..CampaignConfig::default()
    }
}

#[test]
fn criterion_1_scattered_four_bytes() {
    let start = Instant::now();
    let s = scenario("fig3_abcd");
    let input = b"AAAABBBBCCCCDDDD";
    let rec = record_at(&s, "fuzz_cmp", input);
    let mut ex = ProgramExecutor::new(&s.program);
    let naive = naive_search(input, &rec, &mut ex, 10_000);
    let mut ex = ProgramExecutor::new(&s.program);
    let r = solve(input, &rec, &mut ex, &SolveOptions::default(), &mut ()).unwrap();
    let elapsed = start.elapsed();
    let ok = naive.combinations == 256
        && r.status == SolveStatus::Solved
        && r.executions_used <= 17
        && elapsed < Duration::from_secs(1);
    report(
        1,
        ok,
        elapsed,
        &format!(
            "naive combinations {} (want 256); solve {:?} in {} executions (want <= 17)",
            naive.combinations, r.status, r.executions_used
        ),
    );
    assert!(ok);
}

fn example_instance(
    name: &str,
    label: &str,
    input: &[u8],
    expect_count: u128,
) -> (bool, String) {
    let s = scenario(name);
    let rec = record_at(&s, label, input);
    let mut ex = ProgramExecutor::new(&s.program);
    let naive = naive_search(input, &rec, &mut ex, 10_000);
    let mut ex = ProgramExecutor::new(&s.program);
    let r = solve(input, &rec, &mut ex, &SolveOptions::default(), &mut ()).unwrap();
    let verified = r
        .solved_input
        .as_ref()
        .map(|i| record_at(&s, label, i).is_match())
        .unwrap_or(false);
    let ok = naive.combinations == expect_count
        && naive.status == SolveStatus::BudgetExhausted
        && naive.executions_used == 10_000
        && r.status == SolveStatus::Solved
        && verified
        && r.executions_used <= 200;
    let detail = format!(
        "{name}: naive {} combinations (want {expect_count}), {:?}; solve {:?} in {} executions",
        naive.combinations, naive.status, r.status, r.executions_used
    );
    (ok, detail)
}

#[test]
fn criterion_2_combinatorial_blowup() {
    let start = Instant::now();
    let mut rpl = Vec::new();
    for c in b'a'..=b'r' {
        rpl.extend_from_slice(&[c, c, c]);
    }
    rpl.extend_from_slice(b"xx\n");
    let (ok1, d1) = example_instance("rpl_refresh", "rpl_cmp", &rpl, 3u128.pow(18));
    let t1 = start.elapsed();

    let start2 = Instant::now();
    let mut pw = Vec::new();
    for c in b"abcdefg" {
        pw.extend(std::iter::repeat_n(*c, 15));
        pw.extend_from_slice(&[0x80, *c]);
    }
    pw.extend_from_slice(&[0x80, b'\n']);
    let (ok2, d2) = example_instance("poweron", "poweron_cmp", &pw, 16u128.pow(7));
    let t2 = start2.elapsed();

    let ok = ok1 && ok2 && t1 < Duration::from_secs(30) && t2 < Duration::from_secs(30);
    report(2, ok, start.elapsed(), &format!("{d1}; {d2}"));
    assert!(ok);
}

#[test]
fn criterion_3_guard_loop() {
    let start = Instant::now();
    let s = scenario("modem_ok");
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 1..=5 {
        let on = run_fuzz(&s, &FuzzOptions::new(config(seed, 200_000, true)), None).unwrap();
        let off = run_fuzz(&s, &FuzzOptions::new(config(seed, 200_000, false)), None).unwrap();
        let solved = on.first_pass[0].1.is_some();
        let b_on = on.campaign.stats.final_unique_blocks();
        let b_off = off.campaign.stats.final_unique_blocks();
        let trial_ok = solved && b_on as f64 >= 1.5 * b_off as f64;
        ok &= trial_ok;
        lines.push(format!(
            "seed {seed}: OK solved at {:?}, blocks {b_on} vs {b_off}",
            on.first_pass[0].1
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    report(3, ok, elapsed, &lines.join("; "));
    assert!(ok);
}

/// Random small target: a straight line of data and noise reads. Data bytes
/// are optionally folded with OR 0x40; unless folded, a space ends the
/// token. The token is compared with STRCMP or searched with STRSTR.
struct Instance {
    program: TargetProgram,
    input: Vec<u8>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let reads = rng.gen_range(1..=12);
    let fold = rng.gen_bool(0.3);
    let substring = rng.gen_bool(0.3);
    let ideal_len = rng.gen_range(1..=3);
    let letters = if fold { &b"abcAB"[..] } else { &b"abc"[..] };
    let ideal: String = (0..ideal_len)
        .map(|_| letters[rng.gen_range(0..letters.len())] as char)
        .collect();
    let mut src = format!(".periph DR\n.periph NOISE\n.rom ideal \"{ideal}\\0\"\n.ram 16\n LOADI r3, 0\n");
    for _ in 0..reads {
        if rng.gen_bool(0.6) {
            src.push_str(" READ_REG r1, DR\n");
            if fold {
                src.push_str(" OR r1, r1, 0x40\n");
            }
            src.push_str(" CMP r4, r1, ' '\n BNZ r4, done\n STORE r1, @ram, r3\n ADD r3, r3, 1\n");
        } else {
            src.push_str(" READ_REG r2, NOISE\n");
        }
    }
    let call = if substring { "STRSTR" } else { "STRCMP" };
    src.push_str(&format!("done:\n LOADI r1, 0\n STORE r1, @ram, r3\ncmp:\n CALL {call}, @ram, @ideal\n HALT\n"));
    let alphabet = [b'a', b'b', b'c', b'A', b' ', 0u8];
    let input = (0..reads)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect();
    Instance {
        program: parse_scenario(&src).unwrap(),
        input,
    }
}

/// Exhaustive search over every strictly increasing choice of positions
/// whose bytes equal the observed bytes, head- or tail-aligned, with an
/// optional delimiter at a later position holding the first surplus byte.
fn oracle(inst: &Instance, key: CmpKey, rec: &ComparisonRecord) -> bool {
    let obs = rec.observed_str().to_vec();
    let ideal = rec.ideal_str().to_vec();
    let region = rec.read_cursor.min(inst.input.len());
    let run = |input: &[u8]| {
        let t = execute(&inst.program, input, DEFAULT_BUDGET);
        find_record(&t, key).map(|r| r.observed_str().to_vec())
    };
    if obs == ideal || (obs.len() > ideal.len() && obs.ends_with(&ideal)) {
        return true;
    }
    if obs.len() < ideal.len() {
        return false;
    }
    let positions = |v: u8, from: usize| -> Vec<usize> {
        (from..region).filter(|&j| inst.input[j] == v).collect()
    };

    fn assign(
        depth: usize,
        from: usize,
        targets: &[u8],
        ideal: &[u8],
        positions: &dyn Fn(u8, usize) -> Vec<usize>,
        work: &mut Vec<u8>,
        leaf: &mut dyn FnMut(&mut Vec<u8>, usize) -> bool,
    ) -> bool {
        if depth == targets.len() {
            return leaf(work, from);
        }
        for j in positions(targets[depth], from) {
            let old = work[j];
            work[j] = ideal[depth];
            if assign(depth + 1, j + 1, targets, ideal, positions, work, leaf) {
                return true;
            }
            work[j] = old;
        }
        false
    }

    // Head alignment, exact length or contracted.
    let mut work = inst.input.clone();
    let head = assign(
        0,
        0,
        &obs[..ideal.len()],
        &ideal,
        &positions,
        &mut work,
        &mut |w, from| {
            if run(w).as_deref() == Some(&ideal[..]) {
                return true;
            }
            if obs.len() == ideal.len() {
                return false;
            }
            for j in positions(obs[ideal.len()], from) {
                for &d in &DEFAULT_DELIMITERS {
                    let old = w[j];
                    w[j] = d;
                    let hit = run(w).as_deref() == Some(&ideal[..]);
                    w[j] = old;
                    if hit {
                        return true;
                    }
                }
            }
            false
        },
    );
    if head {
        return true;
    }
    if obs.len() == ideal.len() {
        return false;
    }
    let off = obs.len() - ideal.len();
    let mut work = inst.input.clone();
    assign(0, 0, &obs[off..], &ideal, &positions, &mut work, &mut |w, _| {
        run(w).is_some_and(|o| o.len() >= ideal.len() && o.ends_with(&ideal))
    })
}

#[test]
fn criterion_4_oracle_equivalence() {
    let start = Instant::now();
    let mut disagreements = Vec::new();
    let mut solved = 0;
    let mut cases = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let key = CmpKey::new(inst.program.site_of_label("cmp").unwrap(), 0);
        let t = execute(&inst.program, &inst.input, DEFAULT_BUDGET);
        let rec = find_record(&t, key).unwrap().clone();
        let mut ex = ProgramExecutor::new(&inst.program);
        let r = solve_with_alignments(&inst.input, &rec, &mut ex, &SolveOptions::default(), &mut ())
            .unwrap();
        assert!(r.executions_used <= default_exec_budget(inst.input.len()));
        let got = r.status == SolveStatus::Solved;
        let want = oracle(&inst, key, &rec);
        cases += 1;
        solved += got as u32;
        if got != want {
            disagreements.push(seed);
        }
    }
    let elapsed = start.elapsed();
    let ok = disagreements.is_empty() && elapsed < Duration::from_secs(120);
    report(
        4,
        ok,
        elapsed,
        &format!(
            "{cases} instances, {solved} solvable, disagreements {}: {:?}",
            disagreements.len(),
            &disagreements[..disagreements.len().min(10)]
        ),
    );
    assert!(ok);
}

/// Checks every classified execution against an independent record of the
/// `(cmp_id, observed_len)` pairs seen so far.
struct LengthCheck {
    lenfb: bool,
    seen: BTreeSet<(usize, usize)>,
    new_pair_execs: u64,
    violations: Vec<String>,
}

impl CampaignObserver for LengthCheck {
    fn on_execution(&mut self, ev: &ExecutionEvent<'_>) {
        let mut fresh = BTreeSet::new();
        for r in &ev.trace.comparisons {
            let pair = (r.cmp_id, r.observed_len);
            if r.observed_len.abs_diff(r.ideal_len) <= LENGTH_WINDOW && !self.seen.contains(&pair) {
                fresh.insert(pair);
            }
        }
        if !fresh.is_empty() {
            self.new_pair_execs += 1;
        }
        if self.lenfb {
            if ev.novelty.length_bits as usize != fresh.len() {
                self.violations.push(format!(
                    "exec {}: {} new pairs, {} new length bits",
                    ev.exec_id,
                    fresh.len(),
                    ev.novelty.length_bits
                ));
            }
            if !fresh.is_empty() && ev.enqueued.is_none() {
                self.violations.push(format!("exec {}: new length not enqueued", ev.exec_id));
            }
            self.seen.extend(fresh);
        } else {
            if ev.novelty.length_bits != 0 {
                self.violations.push(format!("exec {}: length bit with switch off", ev.exec_id));
            }
            if ev.origin == Origin::Mutation && ev.novelty.edge_bits == 0 && ev.enqueued.is_some() {
                self.violations.push(format!("exec {}: enqueued without new edges", ev.exec_id));
            }
            self.seen.extend(fresh);
        }
    }
}

#[test]
fn criterion_5_length_feedback() {
    let start = Instant::now();
    let s = scenario("poweron");
    let mut results = Vec::new();
    for lenfb in [true, false] {
        let mut check = LengthCheck {
            lenfb,
            seen: BTreeSet::new(),
            new_pair_execs: 0,
            violations: Vec::new(),
        };
        let cfg = CampaignConfig {
            length_feedback_enabled: lenfb,
            ..config(1, 50_000, true)
        };
        run_campaign(&s.program, &cfg, &[vec![0; 32]], &mut check).unwrap();
        results.push(check);
    }
    let elapsed = start.elapsed();
    let ok = results.iter().all(|c| c.violations.is_empty() && c.new_pair_execs > 0)
        && elapsed < Duration::from_secs(60);
    report(
        5,
        ok,
        elapsed,
        &format!(
            "switch on: {} executions with new lengths, {} violations; switch off: {} such executions, {} violations {:?}",
            results[0].new_pair_execs,
            results[0].violations.len(),
            results[1].new_pair_execs,
            results[1].violations.len(),
            results.iter().flat_map(|c| c.violations.iter().take(3)).collect::<Vec<_>>()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_no_strings_neutrality() {
    let start = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    for name in ["blink", "adc_filter", "state_machine"] {
        let s = scenario(name);
        let mut on = Vec::new();
        let mut off = Vec::new();
        for seed in 1..=5 {
            for (solver, out) in [(true, &mut on), (false, &mut off)] {
                let r = run_fuzz(&s, &FuzzOptions::new(config(seed, 50_000, solver)), None).unwrap();
                out.push(r.campaign.stats.final_unique_blocks() as f64);
            }
        }
        let p = p_value(&on, &off).unwrap();
        ok &= p > 0.01;
        lines.push(format!("{name}: on {on:?} off {off:?} p = {p:.3}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    report(6, ok, elapsed, &lines.join("; "));
    assert!(ok);
}

#[test]
fn criterion_7_false_positive() {
    let start = Instant::now();
    let s = scenario("print_fp");
    let cfg = config(1, 50_000, true);
    let out = run_fuzz(&s, &FuzzOptions::new(cfg.clone()), None).unwrap();
    let st = &out.campaign.stats;
    let print_site = s.program.site_of_label("report").unwrap();
    let attempts: Vec<_> = st.solver_attempts.iter().filter(|a| a.key.cmp_id == print_site).collect();
    let max_input = out.campaign.queue.iter().map(|e| e.input.len()).max().unwrap_or(0);
    let per_attempt_cap = default_exec_budget(max_input) + 2 * max_input as u64 + 16;
    let all_unmapped = attempts
        .iter()
        .all(|a| matches!(a.status, SolveStatus::UnmappedByte(_)));
    let within = attempts.iter().all(|a| a.executions <= per_attempt_cap);
    let junk = out.campaign.queue.iter().filter(|e| e.origin == Origin::Solver).count();
    let elapsed = start.elapsed();
    let ok = !attempts.is_empty()
        && all_unmapped
        && within
        && junk == 0
        && st.executions <= cfg.max_executions
        && elapsed < Duration::from_secs(30);
    report(
        7,
        ok,
        elapsed,
        &format!(
            "{} attempts on the PRINT site, all UnmappedByte: {all_unmapped}, max {} executions each, {junk} solver entries enqueued",
            attempts.len(),
            attempts.iter().map(|a| a.executions).max().unwrap_or(0)
        ),
    );
    assert!(ok);
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_8_replay_determinism() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_scatterfuzz"))
            .args(["fuzz", "console", "--seed", "7", "--execs", "50000", "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outs.push(dir);
    }
    let stats_a = std::fs::read(outs[0].join("stats.jsonl")).unwrap();
    let stats_b = std::fs::read(outs[1].join("stats.jsonl")).unwrap();
    let queue_a = dir_snapshot(&outs[0].join("queue"));
    let queue_b = dir_snapshot(&outs[1].join("queue"));
    let elapsed = start.elapsed();
    let ok = !stats_a.is_empty()
        && stats_a == stats_b
        && !queue_a.is_empty()
        && queue_a == queue_b
        && elapsed < Duration::from_secs(60);
    report(
        8,
        ok,
        elapsed,
        &format!(
            "stats.jsonl {} bytes identical: {}; queue {} files identical: {}",
            stats_a.len(),
            stats_a == stats_b,
            queue_a.len(),
            queue_a == queue_b
        ),
    );
    assert!(ok);
}

/// Two-sided exact p over all ways to split the pooled values, counting
/// `U` directly as pairs with ties worth one half.
fn brute_force_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let u_of = |x: &[f64], y: &[f64]| -> f64 {
        let mut u = 0.0;
        for &p in x {
            for &q in y {
                if p > q {
                    u += 1.0;
                } else if p == q {
                    u += 0.5;
                }
            }
        }
        u
    };
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let mean = (na * b.len()) as f64 / 2.0;
    let u_obs = u_of(a, b);
    let mut extreme = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = {
            let mut x = Vec::new();
            let mut y = Vec::new();
            for (i, &v) in pooled.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    x.push(v);
                } else {
                    y.push(v);
                }
            }
            (x, y)
        };
        total += 1;
        if (u_of(&x, &y) - mean).abs() >= (u_obs - mean).abs() - 1e-9 {
            extreme += 1;
        }
    }
    (u_obs, extreme as f64 / total as f64)
}

#[test]
fn criterion_9_mann_whitney_exact() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut degenerate = 0;
    let mut failures = Vec::new();
    for na in 1..=7usize {
        for nb in 1..=7usize {
            for _ in 0..200 {
                let levels = rng.gen_range(1..=10);
                let a: Vec<f64> = (0..na).map(|_| rng.gen_range(0..levels) as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(0..levels) as f64).collect();
                match mann_whitney_u(&a, &b) {
                    Err(MwuError::DegenerateSamples) => {
                        degenerate += 1;
                        assert!(a.iter().chain(&b).all(|&v| v == a[0]));
                        continue;
                    }
                    Err(e) => panic!("{e}"),
                    Ok(r) => {
                        let (u, p) = brute_force_p(&a, &b);
                        let s = mann_whitney_u(&b, &a).unwrap();
                        let sym_ok = (s.u - (na * nb) as f64 + r.u).abs() < 1e-9 && (s.p - r.p).abs() < 1e-12;
                        if !r.exact || (r.u - u).abs() > 1e-9 || (r.p - p).abs() > 1e-12 || !sym_ok {
                            failures.push(format!("{a:?} vs {b:?}: got U={} p={}, want U={u} p={p}", r.u, r.p));
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(60);
    report(
        9,
        ok,
        elapsed,
        &format!(
            "{checked} sample pairs checked against enumeration ({degenerate} degenerate), {} mismatches {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    );
    assert!(ok);
}
