use scatterfuzz::bench::{
    parse_matrix, run_bench, BenchReport, ConfigRun, ScenarioRuns, SwitchConfig, TrialResult,
};
use scatterfuzz::report::{aggregate, render, tables, Cell, CENSORED};
use scatterfuzz::{corpus, Scenario};

fn switch(name: &str, solver: bool) -> SwitchConfig {
    SwitchConfig {
        name: name.into(),
        solver,
        color: true,
        lenfb: true,
        execs: 1000,
    }
}

fn trial(seed: u64, solve: Option<u64>, blocks: usize) -> TrialResult {
    TrialResult {
        rng_seed: seed,
        solve_execs: vec![solve],
        unique_blocks: blocks,
        crashes: 0,
        executions: 1000,
    }
}

fn report(runs: Vec<(SwitchConfig, Vec<TrialResult>)>) -> BenchReport {
    BenchReport {
        trials: runs[0].1.len() as u32,
        scenarios: vec![ScenarioRuns {
            scenario: "demo".into(),
            category: "guard-loop".into(),
            strings: vec!["ok_cmp \"OK\"".into()],
            runs: runs
                .into_iter()
                .map(|(config, trials)| ConfigRun {
                    digest: config.digest(),
                    config,
                    trials,
                })
                .collect(),
        }],
    }
}

#[test]
fn censored_median_by_hand() {
    // Sorted with censored as +inf: 10 20 30 inf inf.
    let a = aggregate(&[Some(10.0), None, Some(30.0), None, Some(20.0)]);
    assert_eq!(a.min, Cell::Value(10.0));
    assert_eq!(a.median, Cell::Value(30.0));
    assert_eq!(a.max, Cell::Censored);
    // 10 inf inf inf 20 sorts to 10 20 inf inf inf.
    let b = aggregate(&[Some(10.0), None, None, None, Some(20.0)]);
    assert_eq!(b.median, Cell::Censored);
    assert_eq!(b.median.render(), CENSORED);
    // Even count straddling a censored value.
    let c = aggregate(&[Some(1.0), Some(3.0), None, None]);
    assert_eq!(c.median, Cell::Censored);
    let d = aggregate(&[Some(1.0), Some(3.0), Some(4.0), None]);
    assert_eq!(d.median, Cell::Value(3.5));
}

#[test]
fn single_trial_is_flat() {
    let r = report(vec![(switch("on", true), vec![trial(1, Some(42), 7)])]);
    let t = tables(&r);
    assert_eq!(t.len(), 1);
    let row = &t[0].rows[0];
    assert_eq!(row.per_config[0].min, Cell::Value(42.0));
    assert_eq!(row.per_config[0].median, Cell::Value(42.0));
    assert_eq!(row.per_config[0].max, Cell::Value(42.0));
    assert!(row.deltas.is_empty());
}

#[test]
fn censored_trials_never_rendered_as_numbers() {
    let on = vec![
        trial(1, Some(100), 9),
        trial(2, None, 9),
        trial(3, Some(300), 9),
        trial(4, None, 9),
        trial(5, Some(200), 9),
    ];
    let off = (1..=5).map(|s| trial(s, None, 4)).collect();
    let r = report(vec![(switch("solver", true), on), (switch("plain", false), off)]);
    let t = tables(&r);
    let row = &t[0].rows[0];
    assert_eq!(row.per_config[0].median, Cell::Value(300.0));
    assert_eq!(row.per_config[0].max, Cell::Censored);
    assert_eq!(row.finite, vec![3, 0]);
    assert_eq!(row.deltas, vec![Cell::Censored]);
    // Blocks row has a finite delta.
    let blocks = t[0].rows.iter().find(|r| r.name == "blocks").unwrap();
    assert_eq!(blocks.deltas, vec![Cell::Value(-5.0)]);

    let text = render(&t);
    assert!(text.contains("delta plain"), "{text}");
    assert!(text.contains("100 / 300 / >budget (3/5)"), "{text}");
    assert!(text.contains(">budget / >budget / >budget (0/5)"), "{text}");

    let json: serde_json::Value = serde_json::to_value(&t).unwrap();
    let cells = &json[0]["rows"][0]["per_config"];
    assert_eq!(cells[0]["median"], 300.0);
    assert_eq!(cells[0]["max"], CENSORED);
    assert_eq!(cells[1]["min"], CENSORED);
    // Separated block counts over five trials each.
    let p = json[0]["block_p"][0].as_f64().unwrap();
    assert!((p - 2.0 / 252.0).abs() < 1e-12);
}

#[test]
fn matrix_parsing() {
    let m = parse_matrix(r#"[{"name": "on"}, {"name": "off", "solver": false, "execs": 500}]"#).unwrap();
    assert_eq!(m.len(), 2);
    assert!(m[0].solver && m[0].color && m[0].lenfb);
    assert_eq!(m[0].execs, 100_000);
    assert!(!m[1].solver);
    assert_ne!(m[0].digest(), m[1].digest());
    assert_eq!(m[0].digest(), m[0].clone().digest());
    for bad in [
        "[]",
        r#"[{"name": "a"}, {"name": "a"}]"#,
        r#"[{"name": "a", "execs": 0}]"#,
        r#"[{"name": "a", "turbo": true}]"#,
        "{",
    ] {
        assert!(parse_matrix(bad).is_err(), "{bad}");
    }
}

#[test]
fn empty_scenario_set() {
    let r = run_bench(&[], 1, &[switch("on", true)]).unwrap();
    assert!(r.scenarios.is_empty());
    assert!(tables(&r).is_empty());
    assert!(run_bench(&[], 0, &[switch("on", true)]).is_err());
}

#[test]
fn solver_on_versus_off_on_guarded_scenarios() {
    let scenarios: Vec<Scenario> = ["modem_ok", "poweron", "console"]
        .iter()
        .map(|n| corpus::get(n).unwrap().unwrap())
        .collect();
    let matrix = [
        SwitchConfig { execs: 30_000, ..switch("on", true) },
        SwitchConfig { execs: 30_000, ..switch("off", false) },
    ];
    let r = run_bench(&scenarios, 5, &matrix).unwrap();
    let mut off_cells = 0;
    let mut off_censored = 0;
    for s in &r.scenarios {
        for t in &s.runs[0].trials {
            assert_eq!(t.rng_seed as usize, s.runs[0].trials.iter().position(|x| x == t).unwrap() + 1);
            assert!(t.solve_execs.iter().all(Option::is_some), "{}: {:?}", s.scenario, t.solve_execs);
        }
        for t in &s.runs[1].trials {
            off_cells += t.solve_execs.len();
            off_censored += t.solve_execs.iter().filter(|x| x.is_none()).count();
        }
    }
    assert!(off_censored * 2 > off_cells, "{off_censored} of {off_cells}");
}
