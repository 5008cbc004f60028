use proptest::prelude::*;
use scatterfuzz_core::cmplog::{find_record, CmpKey};
use scatterfuzz_core::solver::{
    candidate_positions, naive_search, solve, solve_with_alignments, Alignment, SolveOptions,
    SolveStatus, DEFAULT_DELIMITERS,
};
use scatterfuzz_core::vm::{execute, parse_scenario, ExecutionTrace, TargetProgram, DEFAULT_BUDGET};

#[derive(Clone, Debug)]
struct Instance {
    /// `true` for a data read, `false` for a noise read.
    slots: Vec<bool>,
    sanitize: bool,
    substring: bool,
    ideal: Vec<u8>,
    input: Vec<u8>,
}

fn program(inst: &Instance) -> TargetProgram {
    let ideal: String = inst.ideal.iter().map(|&b| b as char).collect();
    let mut src = format!(".periph DR\n.periph NOISE\n.rom ideal \"{ideal}\\0\"\n.ram 16\n LOADI r3, 0\n");
    for &data in &inst.slots {
        if data {
            src.push_str(" READ_REG r1, DR\n");
            if inst.sanitize {
                src.push_str(" OR r1, r1, 0x40\n");
            }
            src.push_str(" CMP r4, r1, ' '\n BNZ r4, done\n STORE r1, @ram, r3\n ADD r3, r3, 1\n");
        } else {
            src.push_str(" READ_REG r2, NOISE\n");
        }
    }
    let builtin = if inst.substring { "STRSTR" } else { "STRCMP" };
    src.push_str(&format!(
        "done:\n LOADI r1, 0\n STORE r1, @ram, r3\ncmp:\n CALL {builtin}, @ram, @ideal\n HALT\n"
    ));
    parse_scenario(&src).unwrap()
}

fn instance() -> impl Strategy<Value = Instance> {
    let byte = prop::sample::select(vec![b'a', b'b', b'c', b' ', 0u8]);
    (
        prop::collection::vec(any::<bool>(), 1..=12),
        any::<bool>(),
        any::<bool>(),
        prop::collection::vec(prop::sample::select(vec![b'a', b'b', b'c']), 1..=3),
        prop::collection::vec(byte, 12),
    )
        .prop_map(|(slots, sanitize, substring, ideal, mut input)| {
            input.truncate(slots.len());
            Instance {
                slots,
                sanitize,
                substring,
                ideal,
                input,
            }
        })
}

fn key(p: &TargetProgram) -> CmpKey {
    CmpKey::new(p.site_of_label("cmp").unwrap(), 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reads_consume_stream_in_order(inst in instance()) {
        let p = program(&inst);
        let t = execute(&p, &inst.input, DEFAULT_BUDGET);
        for (k, ev) in t.read_log.iter().enumerate() {
            prop_assert_eq!(ev.cursor, k);
        }
        prop_assert_eq!(t.final_cursor, t.read_log.len());
        prop_assert!(t.final_cursor <= inst.input.len());
        prop_assert_eq!(&execute(&p, &inst.input, DEFAULT_BUDGET), &t);
    }

    #[test]
    fn solve_invariants(inst in instance()) {
        let p = program(&inst);
        let k = key(&p);
        let base = execute(&p, &inst.input, DEFAULT_BUDGET);
        let rec = find_record(&base, k).unwrap().clone();
        let mut seen: Vec<Vec<u8>> = Vec::new();
        let mut exec = |input: &[u8]| -> ExecutionTrace {
            seen.push(input.to_vec());
            execute(&p, input, DEFAULT_BUDGET)
        };
        let opts = SolveOptions::default();
        let r = solve(&inst.input, &rec, &mut exec, &opts, &mut ()).unwrap();
        prop_assert_eq!(r.executions_used as usize, seen.len());

        // Locked positions strictly increase and lie in the read region.
        for w in r.mapped.windows(2) {
            prop_assert!(w[0].1 < w[1].1);
            prop_assert!(w[0].0 < w[1].0);
        }
        let locked: Vec<usize> = r.mapped.iter().map(|m| m.1).collect();
        for &j in &locked {
            prop_assert!(j < rec.read_cursor);
        }

        // Every executed input differs from the base only at locked
        // positions plus the one under test.
        for s in &seen {
            let extra = (0..s.len())
                .filter(|&j| s[j] != inst.input[j] && !locked.contains(&j))
                .count();
            prop_assert!(extra <= 1);
            prop_assert_eq!(&s[rec.read_cursor..], &inst.input[rec.read_cursor..]);
        }

        // Linear bound.
        let obs = rec.observed_str();
        let scanned = obs.len().min(rec.ideal_len + 1);
        let cand: usize = obs[..scanned]
            .iter()
            .map(|&b| candidate_positions(&inst.input, b, 0, rec.read_cursor).len())
            .sum();
        prop_assert!(r.executions_used as usize <= cand + 1 + DEFAULT_DELIMITERS.len());

        match r.status {
            SolveStatus::Solved => {
                let out = r.solved_input.clone().unwrap();
                let again = execute(&p, &out, DEFAULT_BUDGET);
                let rr = find_record(&again, k).unwrap();
                prop_assert_eq!(rr.observed_str(), rec.ideal_str());
            }
            _ => prop_assert!(r.solved_input.is_none()),
        }
    }

    #[test]
    fn alignment_results_are_sound(inst in instance()) {
        let p = program(&inst);
        let k = key(&p);
        let base = execute(&p, &inst.input, DEFAULT_BUDGET);
        let rec = find_record(&base, k).unwrap().clone();
        let mut count = 0u64;
        let mut exec = |input: &[u8]| {
            count += 1;
            execute(&p, input, DEFAULT_BUDGET)
        };
        let r = solve_with_alignments(&inst.input, &rec, &mut exec, &SolveOptions::default(), &mut ()).unwrap();
        prop_assert_eq!(r.executions_used, count);
        prop_assert!(count <= scatterfuzz_core::solver::default_exec_budget(inst.input.len()));
        if let Some(out) = &r.solved_input {
            let again = execute(&p, out, DEFAULT_BUDGET);
            let rr = find_record(&again, k).unwrap();
            match r.alignment {
                Alignment::Head => prop_assert_eq!(rr.observed_str(), rec.ideal_str()),
                Alignment::Tail => prop_assert!(rr.observed_str().ends_with(rec.ideal_str())),
            }
        }
        if rec.observed_len <= rec.ideal_len {
            prop_assert_eq!(r.alignment, Alignment::Head);
        }
    }

    #[test]
    fn naive_count_is_product_of_candidates(inst in instance()) {
        let p = program(&inst);
        let base = execute(&p, &inst.input, DEFAULT_BUDGET);
        let rec = find_record(&base, key(&p)).unwrap().clone();
        let expect: u128 = rec
            .observed_str()
            .iter()
            .map(|&b| (0..rec.read_cursor).filter(|&j| inst.input[j] == b).count() as u128)
            .product();
        let mut exec = |input: &[u8]| execute(&p, input, DEFAULT_BUDGET);
        let n = naive_search(&inst.input, &rec, &mut exec, 50);
        prop_assert_eq!(n.combinations, expect);
        prop_assert!(n.executions_used <= 50);
    }
}

#[test]
fn candidate_scan_examples() {
    let input = b"xAxAxA";
    assert_eq!(candidate_positions(input, b'A', 0, 6), vec![1, 3, 5]);
    assert_eq!(candidate_positions(input, b'A', 2, 6), vec![3, 5]);
    assert_eq!(candidate_positions(input, b'A', 0, 2), vec![1]);
}
