//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Classification criteria need the 58,000-case Shuttle file, read from
//! `$SHUTTLE_DATA` or `data/shuttle.csv` at the workspace root. Without it
//! those criteria fail and are marked blocked. The process exits nonzero
//! when any criterion fails for a reason other than the missing file.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tourney_gp::data::{build_multiplexer, load_classification_file, Dataset, Schema};
use tourney_gp::engine::{
    effective_gpops, run_experiment, verify_paths, GenerationStats, RunConfig, RunReport,
};
use tourney_gp::eval::{classify, eval_block_bits, interpret_case, Scratch};
use tourney_gp::genome::{
    breed, ramped_half_and_half, random_program, FunctionSet, InitMethod, Limits, Origin, Program,
};
use tourney_gp::tourney::{
    efficiency_saving, generate_tournaments, select_winner, tournament_lost, EfficiencyLedger,
};

const PATH_RUNTIME_LIMIT: Duration = Duration::from_secs(120);
const ORACLE_RUNTIME_LIMIT: Duration = Duration::from_secs(30);
const INTACT_BAND: (f64, f64) = (0.22, 0.28);
const BASIC_SAVING_TARGETS: [(usize, f64); 2] = [(3, 10.07), (10, 8.44)];
const BASIC_SAVING_TOLERANCE: f64 = 5.0;
const ELITE_BASELINE_TARGET: f64 = 33.0;
const ELITE_BASELINE_TOLERANCE: f64 = 5.0;
const ELITE_EFFICIENT_TARGET: f64 = 54.26;
const ELITE_EFFICIENT_TOLERANCE: f64 = 10.0;
const ACCURACY_GAP_LIMIT: f64 = 5.0;
const FORMULA_TOLERANCE: f64 = 1e-12;
const SHUTTLE_CASES: usize = 58_000;
const SHUTTLE_SUBSET: usize = 5_000;

struct Verdict {
    passed: bool,
    /// Failed only because the Shuttle file is missing.
    blocked: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict {
        passed,
        blocked: false,
        detail,
    }
}

fn blocked(detail: String) -> Verdict {
    Verdict {
        passed: false,
        blocked: true,
        detail,
    }
}

fn shuttle_path() -> PathBuf {
    match std::env::var_os("SHUTTLE_DATA") {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/shuttle.csv"),
    }
}

fn load_shuttle() -> Result<Dataset, String> {
    let path = shuttle_path();
    load_classification_file(&path, &Schema::shuttle())
        .map(Dataset::Real)
        .map_err(|e| format!("Shuttle data unavailable ({e})"))
}

fn shuttle_subset(data: &Dataset) -> Dataset {
    match data {
        Dataset::Real(t) => Dataset::Real(t.head(SHUTTLE_SUBSET)),
        Dataset::Bits(_) => unreachable!("Shuttle is real-valued"),
    }
}

/// Results shared between criteria.
#[derive(Default)]
struct Shared {
    mux_losers: usize,
    mux_violations: usize,
    mux_runs: usize,
    shuttle_losers: usize,
    shuttle_violations: usize,
    shuttle_runs: usize,
    shuttle_error: Option<String>,
    basic_stats: Vec<(usize, Vec<RunReport>)>,
}

fn path_equivalence(shared: &mut Shared, shuttle: &Result<Dataset, String>) -> Verdict {
    let started = Instant::now();
    let flags = [(false, false), (true, false), (false, true), (true, true)];
    let mut problems: Vec<(&str, Dataset)> =
        vec![("6-multiplexer", Dataset::Bits(build_multiplexer(2)))];
    match shuttle {
        Ok(data) => problems.push(("Shuttle subset", shuttle_subset(data))),
        Err(e) => shared.shuttle_error = Some(e.clone()),
    }
    for (name, data) in &problems {
        // Mux blocks are one packed word so pruning happens mid-table.
        let block = if matches!(data, Dataset::Bits(_)) {
            1
        } else {
            2400
        };
        for t in [2, 4, 7] {
            for (reuse, skip) in flags {
                for seed in 0..5 {
                    let config = RunConfig {
                        population_size: 200,
                        generations: 20,
                        tournament_size: t,
                        block_size: block,
                        reuse_unmodified: reuse,
                        skip_unsampled: skip,
                        seed,
                        ..RunConfig::default()
                    };
                    let report = verify_paths(&config, data).expect("valid configuration");
                    if let Some(d) = &report.divergence {
                        return verdict(
                            false,
                            format!("{name} t={t} reuse={reuse} skip={skip} seed={seed}: {d}"),
                        );
                    }
                    if matches!(data, Dataset::Bits(_)) {
                        shared.mux_runs += 1;
                        shared.mux_losers += report.losers_audited;
                        shared.mux_violations += report.violations;
                    } else {
                        shared.shuttle_runs += 1;
                        shared.shuttle_losers += report.losers_audited;
                        shared.shuttle_violations += report.violations;
                    }
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let mut detail = format!(
        "{} mux runs and {} Shuttle runs identical, {:.1}s (limit {}s)",
        shared.mux_runs,
        shared.shuttle_runs,
        elapsed.as_secs_f64(),
        PATH_RUNTIME_LIMIT.as_secs()
    );
    let in_time = elapsed < PATH_RUNTIME_LIMIT;
    if let Some(e) = &shared.shuttle_error {
        detail.push_str(&format!("; {e}"));
        if in_time {
            return blocked(detail);
        }
    }
    verdict(shared.shuttle_error.is_none() && in_time, detail)
}

fn loser_soundness(shared: &Shared) -> Verdict {
    let violations = shared.mux_violations + shared.shuttle_violations;
    let losers = shared.mux_losers + shared.shuttle_losers;
    let mut detail = format!(
        "{violations} violations among {losers} force-completed losers ({} mux, {} Shuttle)",
        shared.mux_losers, shared.shuttle_losers
    );
    if let Some(e) = &shared.shuttle_error {
        detail.push_str(&format!("; Shuttle runs missing: {e}"));
        if violations == 0 && shared.mux_losers > 0 {
            return blocked(detail);
        }
    }
    verdict(
        violations == 0
            && shared.mux_losers > 0
            && shared.shuttle_error.is_none()
            && shared.shuttle_losers > 0,
        detail,
    )
}

fn scalar_hits(program: &Program, table: &tourney_gp::BitCaseTable) -> u64 {
    (0..table.case_count())
        .filter(|&c| {
            let features: Vec<f64> = (0..table.input_count())
                .map(|i| if table.input_bit(i, c) { 1.0 } else { 0.0 })
                .collect();
            classify(interpret_case(program, &features)) == table.target_bit(c)
        })
        .count() as u64
}

fn bit_oracle() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let limits = Limits::default();
    for (address_bits, count) in [(2u32, 500usize), (3, 50)] {
        let table = build_multiplexer(address_bits);
        let set = FunctionSet::Boolean {
            inputs: table.input_count(),
        };
        for i in 0..count {
            let method = if i % 2 == 0 {
                InitMethod::Grow
            } else {
                InitMethod::Full
            };
            let depth = rng.gen_range(1..=7);
            let program = random_program(&mut rng, &set, &limits, method, depth);
            let packed: u64 = (0..table.block_count())
                .map(|b| eval_block_bits(&program, &table, b, &mut Scratch::default()))
                .sum();
            let scalar = scalar_hits(&program, &table);
            if packed != scalar {
                return verdict(
                    false,
                    format!("{address_bits}-address mux program `{program}`: packed {packed}, scalar {scalar}"),
                );
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        elapsed < ORACLE_RUNTIME_LIMIT,
        format!(
            "550 programs agree exactly, {:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            ORACLE_RUNTIME_LIMIT.as_secs()
        ),
    )
}

fn intact_rate() -> Verdict {
    let n = 4000;
    let set = FunctionSet::Classification { features: 9 };
    let limits = Limits::default();
    let params = RunConfig::default().breed_params();
    // Children no operator touched; the binomial quantity. Operator output
    // that happens to equal a parent is also flagged unmodified and is
    // reported alongside.
    let mut untouched = Vec::new();
    let mut identical = Vec::new();
    for seed in 0..25 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let population = ramped_half_and_half(&mut rng, &set, &limits, n);
        let hits: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1000)).collect();
        let tournaments = generate_tournaments(&mut rng, n, n, 3);
        let winners: Vec<usize> = tournaments
            .tournaments()
            .iter()
            .map(|t| select_winner(t, &hits))
            .collect();
        let mut children = Vec::with_capacity(n);
        for pair in winners.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let (c, d) = breed(
                (&population[a], &population[b]),
                (Some(hits[a]), Some(hits[b])),
                &mut rng,
                &set,
                &limits,
                params,
            );
            children.push(c);
            children.push(d);
        }
        let frac = |f: &dyn Fn(&Program) -> bool| {
            children.iter().filter(|c| f(c)).count() as f64 / n as f64
        };
        untouched.push(frac(&|c| c.unmodified && c.origin == Origin::Copy));
        identical.push(frac(&|c| c.unmodified && c.origin != Origin::Fallback));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let m = mean(&untouched);
    verdict(
        (INTACT_BAND.0..=INTACT_BAND.1).contains(&m),
        format!(
            "mean unmodified fraction {m:.4} (with coincidental parent copies {:.4}), band [{}, {}]",
            mean(&identical),
            INTACT_BAND.0,
            INTACT_BAND.1
        ),
    )
}

fn basic_saving(shared: &mut Shared, shuttle: &Result<Dataset, String>) -> Verdict {
    let data = match shuttle {
        Ok(d) => d,
        Err(e) => return blocked(e.clone()),
    };
    let mut details = Vec::new();
    let mut passed = data.total_cases() as usize == SHUTTLE_CASES;
    details.push(format!("{} cases", data.total_cases()));
    for (t, target) in BASIC_SAVING_TARGETS {
        let config = RunConfig {
            tournament_size: t,
            efficient_selection: true,
            skip_unsampled: true,
            ..RunConfig::default()
        };
        let report = run_experiment(&config, data, 10).expect("valid configuration");
        let mean = report.summary.saving.mean;
        passed &= (mean - target).abs() <= BASIC_SAVING_TOLERANCE;
        details.push(format!(
            "t={t} saving {mean:.2}% (target {target} ± {BASIC_SAVING_TOLERANCE})"
        ));
        shared.basic_stats.push((t, report.runs));
    }
    verdict(passed, details.join(", "))
}

fn elitism_config(t: usize, efficient: bool) -> RunConfig {
    RunConfig {
        tournament_size: t,
        elitism_fraction: 0.10,
        reuse_unmodified: true,
        skip_unsampled: true,
        efficient_selection: efficient,
        ..RunConfig::default()
    }
}

fn elitism_saving(shuttle: &Result<Dataset, String>) -> Verdict {
    let data = match shuttle {
        Ok(d) => d,
        Err(e) => return blocked(e.clone()),
    };
    let baseline =
        run_experiment(&elitism_config(20, false), data, 10).expect("valid configuration");
    let efficient =
        run_experiment(&elitism_config(20, true), data, 10).expect("valid configuration");
    let b = baseline.summary.saving.mean;
    let e = efficient.summary.saving.mean;
    let every_seed = baseline
        .runs
        .iter()
        .zip(&efficient.runs)
        .all(|(x, y)| y.saving > x.saving);
    verdict(
        (b - ELITE_BASELINE_TARGET).abs() <= ELITE_BASELINE_TOLERANCE
            && (e - ELITE_EFFICIENT_TARGET).abs() <= ELITE_EFFICIENT_TOLERANCE
            && every_seed,
        format!(
            "baseline {b:.2}% (target {ELITE_BASELINE_TARGET} ± {ELITE_BASELINE_TOLERANCE}), \
             efficient {e:.2}% (target {ELITE_EFFICIENT_TARGET} ± {ELITE_EFFICIENT_TOLERANCE}), \
             efficient above baseline on every seed: {every_seed}"
        ),
    )
}

fn elitism_divergence(shuttle: &Result<Dataset, String>) -> Verdict {
    let data = match shuttle {
        Ok(d) => d,
        Err(e) => return blocked(e.clone()),
    };
    let standard =
        run_experiment(&elitism_config(10, false), data, 10).expect("valid configuration");
    let efficient =
        run_experiment(&elitism_config(10, true), data, 10).expect("valid configuration");
    let gaps: Vec<f64> = standard
        .runs
        .iter()
        .zip(&efficient.runs)
        .map(|(s, e)| (s.final_accuracy - e.final_accuracy).abs())
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    verdict(
        mean <= ACCURACY_GAP_LIMIT,
        format!("mean absolute accuracy difference {mean:.2} points (limit {ACCURACY_GAP_LIMIT})"),
    )
}

/// Stats serialized as the CLI writes them, with wall-time columns blanked.
fn timeless_csv(stats: &[GenerationStats]) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for s in stats {
        let mut s = s.clone();
        s.elapsed = 0.0;
        s.gpops = 0.0;
        writer.serialize(s).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

fn worker_determinism(shared: &Shared, shuttle: &Result<Dataset, String>) -> Verdict {
    let data = match shuttle {
        Ok(d) => d,
        Err(e) => return blocked(e.clone()),
    };
    if shared.basic_stats.is_empty() {
        return verdict(false, "basic-mode runs unavailable".into());
    }
    for workers in [4, 8] {
        for (t, reference) in &shared.basic_stats {
            let config = RunConfig {
                tournament_size: *t,
                efficient_selection: true,
                skip_unsampled: true,
                workers,
                ..RunConfig::default()
            };
            let report =
                run_experiment(&config, data, reference.len()).expect("valid configuration");
            for (a, b) in reference.iter().zip(&report.runs) {
                if timeless_csv(&a.generations) != timeless_csv(&b.generations) {
                    return verdict(
                        false,
                        format!("t={t} seed {} differs at {workers} workers", a.seed),
                    );
                }
            }
        }
    }
    verdict(true, "stats identical at 1, 4 and 8 workers".into())
}

fn formulas() -> Verdict {
    let mut checks = Vec::new();
    let mut saving = |name: &str, total: u64, entries: &[(u64, usize)], expected: f64| {
        let mut ledger = EfficiencyLedger::new(total);
        for &(skipped, size) in entries {
            ledger.record(skipped, size, true);
        }
        let got = efficiency_saving(&ledger).expect("nonempty ledger");
        checks.push((
            (got - expected).abs() <= FORMULA_TOLERANCE,
            format!("{name} {got}"),
        ));
    };
    // Opponent classifies six of ten cases; the challenger has none.
    assert!(tournament_lost(0, 4, 6));
    saving("40%-example", 10, &[(4, 1)], 40.0);
    // Survivor known at 8 of 10; challenger misses the first three.
    assert!(tournament_lost(0, 7, 8));
    saving("70%-example", 10, &[(7, 1)], 70.0);
    saving("composite", 10, &[(10, 1), (0, 3)], 25.0);
    saving(
        "weighted",
        20,
        &[(5, 2), (20, 1), (0, 5)],
        100.0 * 30.0 / 160.0,
    );

    let mut ledger = EfficiencyLedger::new(58_000);
    for _ in 0..4000 {
        ledger.record(0, 50, true);
    }
    let base = effective_gpops(&ledger, 10.0, 1);
    checks.push(((base - 1.16e9).abs() <= 1e-3, format!("gpops {base}")));
    let wide = effective_gpops(&ledger, 10.0, 32);
    checks.push((
        (wide - 32.0 * 1.16e9).abs() <= 1e-2,
        format!("gpops x32 {wide}"),
    ));
    let fast = effective_gpops(&ledger, 5.0, 1);
    checks.push((
        (fast - 2.32e9).abs() <= 1e-3,
        format!("gpops half time {fast}"),
    ));

    let failed: Vec<&String> = checks
        .iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, d)| d)
        .collect();
    if failed.is_empty() {
        verdict(true, format!("{} formula checks exact", checks.len()))
    } else {
        verdict(false, format!("mismatches: {failed:?}"))
    }
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let shuttle = load_shuttle();
    let mut shared = Shared::default();
    let results: Vec<(u32, &str, Verdict)> = vec![
        (
            1,
            "path equivalence",
            guarded(|| path_equivalence(&mut shared, &shuttle)),
        ),
        (
            2,
            "loser soundness audit",
            guarded(|| loser_soundness(&shared)),
        ),
        (3, "bit-parallel oracle", guarded(bit_oracle)),
        (4, "intact-survivor rate", guarded(intact_rate)),
        (
            5,
            "basic efficiency saving",
            guarded(|| basic_saving(&mut shared, &shuttle)),
        ),
        (
            6,
            "reuse + elitism saving",
            guarded(|| elitism_saving(&shuttle)),
        ),
        (
            7,
            "elitism divergence",
            guarded(|| elitism_divergence(&shuttle)),
        ),
        (
            8,
            "worker determinism",
            guarded(|| worker_determinism(&shared, &shuttle)),
        ),
        (9, "formula checks", guarded(formulas)),
    ];

    let (mut failed, mut hard) = (0, 0);
    for (id, name, v) in &results {
        let mark = match (v.passed, v.blocked) {
            (true, _) => "PASS",
            (false, true) => "FAIL, blocked",
            (false, false) => "FAIL",
        };
        println!("criterion {id} [{mark}] {name}: {}", v.detail);
        if !v.passed {
            failed += 1;
            if !v.blocked {
                hard += 1;
            }
        }
    }
    println!(
        "{} of {} criteria passed, {} blocked by missing data",
        results.len() - failed,
        results.len(),
        failed - hard
    );
    if hard > 0 {
        std::process::exit(1);
    }
}
