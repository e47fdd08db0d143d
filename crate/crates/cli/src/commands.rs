use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use tiersim_core::memsim::{huge_bases, MemoryState};
use tiersim_core::workload::write_trace;
use tiersim_core::{
    decide_split, generate, AccessEvent, EventLog, HistogramSnapshot, Policy, PolicyConfig, RunReport, SimError,
    SimParams, SplitDecision, TraceSpec, CSV_COLUMNS,
};

use crate::scenario::{Prepared, Scenario};
use crate::{CliError, GenTraceArgs, RunArgs, SplitAnalyzeArgs, SweepArgs};

pub const RESULTS_CSV: &str = "results.csv";
pub const REPORT_SUFFIX: &str = ".report.json";

fn runtime(context: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

/// Runs `events` through a fresh simulator, returning the report, the final
/// histogram, and the event log handed in.
pub fn simulate(
    cfg: &PolicyConfig,
    params: &SimParams,
    policy: Policy,
    events: &[AccessEvent],
    log: EventLog,
) -> Result<(RunReport, HistogramSnapshot, EventLog), SimError> {
    let mut ms = MemoryState::with_policy(cfg.clone(), params.clone(), policy)?;
    ms.set_event_log(log);
    ms.map_workload(&huge_bases(events))?;
    for ev in events {
        ms.access(ev)?;
    }
    let hist = ms.histogram.snapshot();
    let (report, log) = ms.finish()?;
    Ok((report, hist, log))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scenario: String,
    pub policy: Policy,
    pub contention_pct: f64,
    pub seed: u64,
    pub report: RunReport,
}

impl SweepRow {
    fn csv_fields(&self) -> Vec<String> {
        self.report.csv_fields(&self.scenario, self.policy.name(), self.contention_pct, self.seed)
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

/// Writes `rows` under the fixed header, replacing any existing file.
pub fn write_results_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let file = File::create(path).map_err(runtime(&path.display().to_string()))?;
    let mut w = csv_writer(BufWriter::new(file));
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for row in rows {
        w.write_record(row.csv_fields()).map_err(err)?;
    }
    w.flush().map_err(runtime(&path.display().to_string()))
}

fn append_results_csv(path: &Path, row: &SweepRow) -> Result<(), CliError> {
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(runtime(&path.display().to_string()))?;
    let fresh = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    let mut w = csv_writer(file);
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    if fresh {
        w.write_record(CSV_COLUMNS).map_err(err)?;
    }
    w.write_record(row.csv_fields()).map_err(err)?;
    w.flush().map_err(runtime(&path.display().to_string()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(runtime(&dir.display().to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(runtime(&path.display().to_string()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(runtime(&path.display().to_string()))
}

/// `run`: one policy, writes `<name>.report.json` and appends to
/// `results.csv` in the output directory.
pub fn cmd_run(args: &RunArgs) -> Result<SweepRow, CliError> {
    let sc = Scenario::load(&args.config)?;
    let Prepared { name, cfg, params, events, seed } = sc.prepare(args.seed, args.contention)?;
    let policy = args.policy.unwrap_or_else(|| sc.run_policy());
    ensure_dir(&args.out_dir)?;

    let log = match &args.event_log {
        Some(path) => {
            let f = File::create(path).map_err(runtime(&path.display().to_string()))?;
            EventLog::Stream(Box::new(BufWriter::new(f)))
        }
        None => EventLog::Off,
    };
    info!("running {name} with {policy} over {} events", events.len());
    let (report, hist, _) =
        simulate(&cfg, &params, policy, &events, log).map_err(|e| CliError::Runtime(e.to_string()))?;

    let row = SweepRow { scenario: name.clone(), policy, contention_pct: params.contention_pct, seed, report };
    write_json(&args.out_dir.join(format!("{name}{REPORT_SUFFIX}")), &row)?;
    append_results_csv(&args.out_dir.join(RESULTS_CSV), &row)?;
    if let Some(path) = &args.dump_histogram {
        let f = File::create(path).map_err(runtime(&path.display().to_string()))?;
        hist.write_csv(BufWriter::new(f)).map_err(runtime(&path.display().to_string()))?;
    }
    Ok(row)
}

/// `sweep`: every policy at every level, rows ordered by (policy, level);
/// overwrites `results.csv`.
pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    let sc = Scenario::load(&args.config)?;
    if args.contention.is_empty() {
        return Err(CliError::Config("no contention levels given".into()));
    }
    let base = sc.prepare(args.seed, None)?;
    for &c in &args.contention {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(CliError::Config(format!("contention {c} must be a non-negative percentage")));
        }
    }
    let mut jobs: Vec<(Policy, f64)> =
        sc.sweep_policies().into_iter().flat_map(|p| args.contention.iter().map(move |&c| (p, c))).collect();
    jobs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    jobs.dedup();
    ensure_dir(&args.out_dir)?;

    let run_one = |&(policy, pct): &(Policy, f64)| -> Result<SweepRow, CliError> {
        let params = SimParams { contention_pct: pct, ..base.params.clone() };
        info!("sweep {}: {policy} at {pct}%", base.name);
        let (report, _, _) = simulate(&base.cfg, &params, policy, &base.events, EventLog::Off)
            .map_err(|e| CliError::Runtime(format!("{policy} at {pct}%: {e}")))?;
        Ok(SweepRow { scenario: base.name.clone(), policy, contention_pct: pct, seed: base.seed, report })
    };
    let rows: Result<Vec<SweepRow>, CliError> = match args.jobs {
        Some(1) => jobs.iter().map(run_one).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| jobs.par_iter().map(run_one).collect()),
        None => jobs.par_iter().map(run_one).collect(),
    };
    let rows = rows?;
    write_results_csv(&args.out_dir.join(RESULTS_CSV), &rows)?;
    Ok(rows)
}

/// `gen-trace`: the config may be a bare trace spec or a scenario.
pub fn cmd_gen_trace(args: &GenTraceArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config {}: {e}", args.config.display())))?;
    let mut spec: TraceSpec = if value.get("trace").is_some() {
        Scenario::load(&args.config)?.trace.ok_or_else(|| CliError::Config("scenario has no `trace`".into()))?
    } else {
        serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("invalid trace spec {}: {e}", args.config.display())))?
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let events = generate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    write_trace(&args.output, &events).map_err(|e| CliError::Runtime(format!("{}: {e}", args.output.display())))?;
    println!("wrote {} events to {}", events.len(), args.output.display());
    Ok(())
}

#[derive(Serialize)]
struct Analysis<'a> {
    #[serde(flatten)]
    decision: &'a SplitDecision,
    subfolio_bytes: u64,
    samples: u64,
}

/// `split-analyze`: prints the decision for a histogram CSV as JSON.
pub fn cmd_split_analyze(args: &SplitAnalyzeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => PolicyConfig::from_json_file(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => PolicyConfig::default(),
    };
    let file = File::open(&args.histogram)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.histogram.display())))?;
    let snap = HistogramSnapshot::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", args.histogram.display())))?;
    let decision = decide_split(&snap.counts, &cfg, args.fault_subpage);
    let a = Analysis { decision: &decision, subfolio_bytes: decision.order.size_bytes(), samples: snap.total };
    serde_json::to_writer_pretty(&mut *out, &a).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out).map_err(runtime("stdout"))
}

/// Where `run` leaves its report for a scenario.
pub fn report_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(format!("{name}{REPORT_SUFFIX}"))
}
