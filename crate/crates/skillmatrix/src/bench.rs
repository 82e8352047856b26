//! Parallel benchmark runs. Trials run in independent worlds on the rayon
//! pool and are merged back in index order, so reports do not depend on
//! scheduling.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use skillmatrix_core::bench::{
    drawer_transitions, run_level_trial, run_suite_trial, BenchReport, Level, LevelReport, Suite, TrialConfig,
    TrialResult, BENCH_SCHEMA,
};

use crate::formats::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub report: BenchReport,
    /// Trials per report level, in index order.
    pub trials: Vec<Vec<TrialResult>>,
}

pub fn run_levels(levels: &[Level], trials: u32, seed: u64, cfg: &TrialConfig) -> BenchRun {
    let started = Instant::now();
    let per_level: Vec<Vec<TrialResult>> = levels
        .iter()
        .map(|&level| {
            (0..trials)
                .into_par_iter()
                .map(|i| run_level_trial(level, seed, i, cfg))
                .collect()
        })
        .collect();
    let levels = levels
        .iter()
        .zip(&per_level)
        .map(|(l, t)| LevelReport::from_trials(&l.to_string(), t))
        .collect();
    BenchRun {
        report: BenchReport {
            schema: BENCH_SCHEMA.into(),
            seed,
            miss_probability: cfg.noise.miss_probability,
            levels,
            wall_ms: Some(started.elapsed().as_secs_f64() * 1000.0),
        },
        trials: per_level,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteTrial {
    #[serde(flatten)]
    pub result: TrialResult,
    pub drawer_states: Vec<&'static str>,
}

pub fn run_suite(suite: Suite, trials: u32, seed: u64, passable: bool, cfg: &TrialConfig) -> (BenchRun, Vec<SuiteTrial>) {
    let started = Instant::now();
    let runs: Vec<SuiteTrial> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let (result, world) = run_suite_trial(suite, seed, i, passable, cfg);
            SuiteTrial {
                result,
                drawer_states: drawer_transitions(&world),
            }
        })
        .collect();
    let results: Vec<TrialResult> = runs.iter().map(|r| r.result.clone()).collect();
    let level = LevelReport::from_trials(&format!("suite-{}", suite.number()), &results);
    let run = BenchRun {
        report: BenchReport {
            schema: BENCH_SCHEMA.into(),
            seed,
            miss_probability: cfg.noise.miss_probability,
            levels: vec![level],
            wall_ms: Some(started.elapsed().as_secs_f64() * 1000.0),
        },
        trials: vec![results],
    };
    (run, runs)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record<'a> {
    Trial {
        level: &'a str,
        #[serde(flatten)]
        trial: &'a TrialResult,
    },
    Level(&'a LevelReport),
    Report {
        schema: &'a str,
        seed: u64,
        miss_probability: f64,
        wall_ms: Option<f64>,
    },
}

/// One JSON record per trial, then per level, then the run header last.
pub fn records(run: &BenchRun) -> Result<String> {
    let mut out = String::new();
    for (level, trials) in run.report.levels.iter().zip(&run.trials) {
        for t in trials {
            out += &serde_json::to_string(&Record::Trial {
                level: &level.level,
                trial: t,
            })?;
            out.push('\n');
        }
    }
    for level in &run.report.levels {
        out += &serde_json::to_string(&Record::Level(level))?;
        out.push('\n');
    }
    let r = &run.report;
    out += &serde_json::to_string(&Record::Report {
        schema: &r.schema,
        seed: r.seed,
        miss_probability: r.miss_probability,
        wall_ms: r.wall_ms,
    })?;
    out.push('\n');
    Ok(out)
}

pub fn write_records(path: &Path, run: &BenchRun) -> Result<()> {
    write_atomic(path, records(run)?.as_bytes())
}

pub fn summary_table(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:>7} {:>9} {:>8} {:>8}  failures", "level", "trials", "succeeded", "failed", "rate");
    for l in &report.levels {
        let failures = l
            .failures_by_subtask
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            s,
            "{:<8} {:>7} {:>9} {:>8} {:>7.1}%  {}",
            l.level,
            l.trials,
            l.successes,
            l.failures,
            100.0 * l.success_rate(),
            failures
        );
    }
    if let Some(ms) = report.wall_ms {
        let _ = writeln!(s, "seed {}  miss-prob {}  wall {:.1} s", report.seed, report.miss_probability, ms / 1000.0);
    }
    s
}

pub fn print_summary(report: &BenchReport, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(summary_table(report).as_bytes())
}
