//! Command-line front end: single runs, scenario sweeps and transcript
//! audits.
//!
//! Exit codes: 0 success, 1 property violation (consensus check or audit
//! failure), 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use evosearch_core::harness::checks::{summarize, RunSummary};
use evosearch_core::harness::config::SimConfig;
use evosearch_core::harness::run;
use evosearch_core::harness::transcript::RunTranscript;
use evosearch_core::harness::verify::verify_transcript;
use evosearch_core::rng::{substream_seed, SplitMix64};
use evosearch_core::Digest32;

const SCHEMA: &str = include_str!("schema.json");
const SWEEP_CAP: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "evosearch",
    version,
    about = "Byzantine-resilient distributed evolutionary search simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one run and write transcript, summary and digest files.
    Run(RunArgs),
    /// Execute a scenario sweep and write one CSV row per run.
    Sweep(SweepArgs),
    /// Audit a transcript file by full recomputation.
    VerifyTranscript { transcript: PathBuf },
    /// Print the JSON schema of run configurations.
    PrintSchema,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. --set search.z_steps=5
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Output root (default: $EVOSEARCH_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report results but exit 0 even when consensus checks fail.
    #[arg(long)]
    no_assert: bool,
    /// Draw a master seed from the clock when the config omits one.
    #[arg(long)]
    ephemeral: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario description (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output root (default: $EVOSEARCH_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A sweep: a base config, a cartesian grid of overrides and repetitions
/// with derived seeds per grid point.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    name: String,
    base: serde_json::Value,
    #[serde(default)]
    axes: Vec<Axis>,
    #[serde(default = "default_reps")]
    repetitions: u64,
}

#[derive(Deserialize)]
struct Axis {
    path: String,
    values: Vec<serde_json::Value>,
}

fn default_reps() -> u64 {
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::VerifyTranscript { transcript } => cmd_verify(&transcript),
        Cmd::PrintSchema => {
            print!("{SCHEMA}");
            0
        }
    };
    ExitCode::from(code)
}

fn usage_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    2
}

fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("EVOSEARCH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Set a dotted-path field inside a JSON value, creating objects on the way.
fn set_json_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            *cur = serde_json::Value::Object(Default::default());
        }
        let map = cur.as_object_mut().expect("just ensured an object");
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return;
        }
        cur = map.entry((*part).to_string()).or_insert(serde_json::Value::Null);
    }
}

fn parse_override(spec: &str) -> Result<(String, serde_json::Value), String> {
    let Some((path, raw)) = spec.split_once('=') else {
        return Err(format!("override `{spec}` is not PATH=VALUE"));
    };
    // Accept JSON values; bare words fall back to strings.
    let value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    Ok((path.to_string(), value))
}

fn load_config(path: &Path, overrides: &[String], ephemeral: bool) -> Result<SimConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("config does not parse: {e}"))?;
    for spec in overrides {
        let (p, v) = parse_override(spec)?;
        set_json_path(&mut value, &p, v);
    }
    if value.get("master_seed").map_or(true, serde_json::Value::is_null) {
        if ephemeral {
            let nanos = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            let seed =
                SplitMix64::new(nanos ^ ((std::process::id() as u64) << 32)).next_u64();
            eprintln!("ephemeral master_seed = {seed}");
            set_json_path(&mut value, "master_seed", serde_json::Value::from(seed));
        } else {
            return Err("config has no master_seed (pass --ephemeral to draw one)".to_string());
        }
    }
    let cfg: SimConfig =
        serde_json::from_value(value).map_err(|e| format!("config does not parse: {e}"))?;
    cfg.resolve().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn checks_pass(summary: &RunSummary) -> bool {
    !summary.aborted
        && summary.consensus.liveness
        && summary.consensus.consistency
        && summary.consensus.extended_validity
}

fn write_run_artifacts(
    root: &Path,
    summary: &RunSummary,
    transcript: &RunTranscript,
) -> std::io::Result<PathBuf> {
    let dir =
        root.join(&summary.scenario).join(format!("seed-{:016x}", summary.master_seed));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("transcript.ndjson"), transcript.to_ndjson())?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(summary).expect("summary serializes"),
    )?;
    std::fs::write(dir.join("digest.txt"), format!("{}\n", transcript.digest()))?;
    Ok(dir)
}

fn cmd_run(args: RunArgs) -> u8 {
    let cfg = match load_config(&args.config, &args.set, args.ephemeral) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let transcript = match run(&cfg) {
        Ok(t) => t,
        Err(e) => return usage_error(e),
    };
    let summary = match summarize(&transcript) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let dir = match write_run_artifacts(&out_root(args.out), &summary, &transcript) {
        Ok(d) => d,
        Err(e) => return usage_error(format!("cannot write outputs: {e}")),
    };
    let ok = checks_pass(&summary);
    println!(
        "{}: liveness={} consistency={} extended_validity={} epsilon_max={:.6} ticks={} -> {}",
        summary.scenario,
        summary.consensus.liveness,
        summary.consensus.consistency,
        summary.consensus.extended_validity,
        summary.consensus.epsilon_max,
        summary.ticks,
        dir.display()
    );
    if let Some(reason) = &summary.abort_reason {
        eprintln!("run aborted: {reason}");
    }
    if ok || args.no_assert {
        0
    } else {
        1
    }
}

const CSV_HEADER: &str = "run_id,scenario,point,master_seed,mode,aborted,liveness,consistency,\
extended_validity,epsilon_max,steps_total,nonoptimal_steps,nonoptimal_fraction,race_bound_raw,\
race_bound,n_measured,t_eval_avg,delta_avg,alpha,gamma,g,mining_condition_holds,mints,\
mean_evals_per_mint,expected_tries_per_mint,reorg_freq_by_depth,decided,ticks,evals_search,\
evals_verify,bans";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(run_id: u64, point: &str, s: &RunSummary) -> String {
    let mode = match s.mode {
        evosearch_core::Mode::Permissioned => "permissioned",
        evosearch_core::Mode::Permissionless => "permissionless",
    };
    let freq: Vec<String> = (1..=s.reorg.trials.len())
        .map(|d| s.reorg.frequency(d).map(|f| format!("{f:.6}")).unwrap_or_default())
        .collect();
    let decided: Vec<String> = s
        .consensus
        .decided
        .iter()
        .map(|d| d.map(|x| x.to_hex()).unwrap_or_default())
        .collect();
    format!(
        "{run_id},{},{point},{},{mode},{},{},{},{},{:.9},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.scenario,
        s.master_seed,
        s.aborted,
        s.consensus.liveness,
        s.consensus.consistency,
        s.consensus.extended_validity,
        s.consensus.epsilon_max,
        s.steps_total,
        s.nonoptimal_steps,
        opt(s.nonoptimal_fraction),
        opt(s.race_bound.map(|b| b.raw)),
        opt(s.race_bound.map(|b| b.clamped)),
        opt(s.rates.n_measured),
        opt(s.rates.t_eval_avg),
        opt(s.rates.delta_avg),
        s.rates.alpha,
        s.rates.gamma,
        opt(s.mining.map(|m| m.g)),
        opt(s.mining.map(|m| m.holds)),
        s.counts.mints,
        opt(s.mean_evals_per_mint),
        s.expected_tries_per_mint,
        freq.join(";"),
        decided.join(";"),
        s.ticks,
        s.counts.evals_search,
        s.counts.evals_verify,
        s.counts.bans,
    )
}

fn cmd_sweep(args: SweepArgs) -> u8 {
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => return usage_error(format!("cannot read scenario: {e}")),
    };
    let scenario: Scenario = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("scenario does not parse: {e}")),
    };

    // Cartesian grid of axis assignments.
    let mut points: Vec<Vec<(String, serde_json::Value)>> = vec![Vec::new()];
    for axis in &scenario.axes {
        if axis.values.is_empty() {
            return usage_error(format!("axis `{}` has no values", axis.path));
        }
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for v in &axis.values {
                let mut q = p.clone();
                q.push((axis.path.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    let total = points.len() * scenario.repetitions as usize;
    if total == 0 || total > SWEEP_CAP {
        return usage_error(format!("sweep size {total} outside 1..={SWEEP_CAP}"));
    }

    let base_seed =
        scenario.base.get("master_seed").and_then(serde_json::Value::as_u64).unwrap_or(0);

    // Build every run config up front so config errors abort before work.
    let mut jobs: Vec<(u64, String, SimConfig)> = Vec::with_capacity(total);
    let mut run_id = 0u64;
    for point in &points {
        for rep in 0..scenario.repetitions {
            let mut value = scenario.base.clone();
            let mut label = Vec::new();
            for (path, v) in point {
                set_json_path(&mut value, path, v.clone());
                label.push(format!("{path}={v}"));
            }
            label.push(format!("rep={rep}"));
            let seed = substream_seed(base_seed, 0x53574545, run_id);
            set_json_path(&mut value, "master_seed", serde_json::Value::from(seed));
            set_json_path(&mut value, "scenario", serde_json::Value::from(scenario.name.clone()));
            let cfg: SimConfig = match serde_json::from_value(value) {
                Ok(c) => c,
                Err(e) => {
                    return usage_error(format!("run {run_id}: config does not parse: {e}"))
                }
            };
            if let Err(e) = cfg.resolve() {
                return usage_error(format!("run {run_id}: {e}"));
            }
            jobs.push((run_id, label.join(";"), cfg));
            run_id += 1;
        }
    }

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = args.jobs {
            b = b.num_threads(j.max(1));
        }
        match b.build() {
            Ok(p) => p,
            Err(e) => return usage_error(format!("cannot build thread pool: {e}")),
        }
    };

    use rayon::prelude::*;
    let results: Vec<(u64, String, Result<RunSummary, String>)> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(id, label, cfg)| {
                let res = run(&cfg).and_then(|t| summarize(&t)).map_err(|e| e.to_string());
                (id, label, res)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = 0usize;
    let mut sorted = results;
    sorted.sort_by_key(|(id, _, _)| *id);
    for (id, label, res) in &sorted {
        match res {
            Ok(summary) => rows.push(csv_row(*id, label, summary)),
            Err(e) => {
                eprintln!("run {id} failed: {e}");
                failures += 1;
            }
        }
    }

    let dir = out_root(args.out).join(&scenario.name);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return usage_error(format!("cannot create {}: {e}", dir.display()));
    }
    let csv_path = dir.join("sweep.csv");
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    if let Err(e) = std::fs::write(&csv_path, csv) {
        return usage_error(format!("cannot write {}: {e}", csv_path.display()));
    }
    println!("{} rows -> {}", rows.len(), csv_path.display());
    if failures > 0 {
        eprintln!("{failures} runs failed to execute");
        return 1;
    }
    0
}

fn cmd_verify(path: &Path) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage_error(format!("cannot read transcript: {e}")),
    };
    // A digest file written next to the transcript pins its exact bytes.
    if let Some(parent) = path.parent() {
        let digest_path = parent.join("digest.txt");
        if let Ok(recorded) = std::fs::read_to_string(&digest_path) {
            let actual = Digest32::of_bytes(text.as_bytes());
            if recorded.trim() != actual.to_hex() {
                eprintln!(
                    "digest mismatch: transcript hashes to {actual}, digest.txt says {}",
                    recorded.trim()
                );
                return 1;
            }
        }
    }
    let transcript = match RunTranscript::from_ndjson(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("transcript is corrupt: {e}");
            return 1;
        }
    };
    match verify_transcript(&transcript) {
        Ok(()) => {
            println!("transcript verifies: every accepted update recomputes");
            0
        }
        Err(e) => {
            eprintln!("verification failed: {e}");
            1
        }
    }
}
