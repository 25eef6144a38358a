//! `ddidd` — operator entry point for the trace-replay defense toolkit.
//!
//! Subcommands: `learn` filter tables from a peace trace, `synth` traffic,
//! `replay` a peace/attack trace pair through the defense, `compare` modes
//! side by side, `render` rule text for a real gateway, and `report` a saved
//! run in human-readable form.
//!
//! Conventions shared by every subcommand:
//! - the full resolved configuration is logged to stderr as one
//!   `config {...}` JSON line, so any run can be reproduced from its log;
//! - primary output is JSON on stdout;
//! - exit code 0 on success, 2 for usage errors (bad flags, missing or
//!   malformed input files), 1 for runtime failures;
//! - `DDIDD_SEED` serves as the seed when `--seed` is not given.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ddidd_core::engine::{replay, MetricsReport, Mode, ReplayConfig};
use ddidd_core::filters::fq::fq_learn;
use ddidd_core::filters::hc::hc_build;
use ddidd_core::filters::ur::ur_build;
use ddidd_core::filters::wr::wr_learn;
use ddidd_core::params::FilterParams;
use ddidd_core::rules::DeploymentRules;
use ddidd_core::store::save_table;
use ddidd_core::synth::{gen_legit_span, gen_polymorphic, AttackSpec, LegitProfile};
use ddidd_core::trace::{read_trace, write_trace, QueryRecord};

#[derive(Parser)]
#[command(
    name = "ddidd",
    version,
    about = "Layered DNS DDoS mitigation, replayed offline against query traces"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Learn filter tables (allow-list, TTL table, rate model, name
    /// baseline) from a peace trace and save them as versioned JSON files.
    Learn(LearnArgs),
    /// Generate a synthetic peace/attack trace pair from a population
    /// profile and a list of attack phases.
    Synth(SynthArgs),
    /// Replay a peace trace (learning) and an attack trace (defense),
    /// printing the metrics report as JSON.
    Replay(ReplayArgs),
    /// Replay the same trace pair under several modes and tabulate
    /// control/collateral/delay per mode.
    Compare(CompareArgs),
    /// Re-render neutral rule text as iptables or ipset commands.
    Render(RenderArgs),
    /// Pretty-print a saved replay report JSON.
    Report(ReportArgs),
}

/// Optional overrides over the default filter parameters.
#[derive(Args, Debug)]
struct ParamArgs {
    /// Name-baseline sample size: most recent queries summarized.
    #[arg(long)]
    l_fq: Option<usize>,
    /// Minimum absolute frequency increase for a name segment to be flagged.
    #[arg(long)]
    f_fq: Option<f64>,
    /// Fraction of a source's queries matching flagged names before the
    /// source itself is blocked.
    #[arg(long)]
    fq_s_match_fraction: Option<f64>,
    /// Most name-match rules the gateway can afford to install.
    #[arg(long)]
    fq_rule_cap: Option<usize>,
    /// Allow-list learning period, seconds.
    #[arg(long)]
    l_ur: Option<f64>,
    /// Allow-list use period, seconds.
    #[arg(long)]
    u_ur: Option<f64>,
    /// TTL-table learning period, seconds.
    #[arg(long)]
    l_hc: Option<f64>,
    /// TTL-table use period, seconds.
    #[arg(long)]
    u_hc: Option<f64>,
    /// Rate-model learning period, seconds.
    #[arg(long)]
    l_wr: Option<f64>,
    /// Rate-model use period, seconds.
    #[arg(long)]
    u_wr: Option<f64>,
    /// Rate-model refresh period, seconds.
    #[arg(long)]
    wr_refresh: Option<f64>,
    /// Comma-separated trailing window lengths (seconds), strictly
    /// increasing.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<u32>>,
    /// Deviance threshold above which a source is considered wild.
    #[arg(long)]
    t_wr: Option<f64>,
    /// Acceptable-load factor over the peace-time mean.
    #[arg(long)]
    f_acc: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<FilterParams, CliError> {
        let mut p = FilterParams::default();
        if let Some(v) = self.l_fq {
            p.l_fq = v;
        }
        if let Some(v) = self.f_fq {
            p.f_fq = v;
        }
        if let Some(v) = self.fq_s_match_fraction {
            p.fq_s_match_fraction = v;
        }
        if let Some(v) = self.fq_rule_cap {
            p.fq_rule_cap = v;
        }
        if let Some(v) = self.l_ur {
            p.l_ur = v;
        }
        if let Some(v) = self.u_ur {
            p.u_ur = v;
        }
        if let Some(v) = self.l_hc {
            p.l_hc = v;
        }
        if let Some(v) = self.u_hc {
            p.u_hc = v;
        }
        if let Some(v) = self.l_wr {
            p.l_wr = v;
        }
        if let Some(v) = self.u_wr {
            p.u_wr = v;
        }
        if let Some(v) = self.wr_refresh {
            p.wr_refresh = v;
        }
        if let Some(v) = &self.windows {
            p.windows = v.clone();
        }
        if let Some(v) = self.t_wr {
            p.t_wr = v;
        }
        if let Some(v) = self.f_acc {
            p.f_acc = v;
        }
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Peace trace (JSON lines) to learn from.
    #[arg(long)]
    peace: PathBuf,
    /// Directory receiving allowlist.json, ttltable.json, ratetable.json,
    /// and fqbaseline.json (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Population profile JSON (see LegitProfile; absent fields default).
    #[arg(long)]
    profile: PathBuf,
    /// JSON array of attack phases (kind p1..p5, multiplier, start_s,
    /// end_s, qname, seed).
    #[arg(long)]
    attacks: PathBuf,
    /// Attack trace output path; the peace trace and manifest are written
    /// beside it as <stem>.peace.jsonl and <stem>.manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Length of the separately drawn peace trace, seconds (defaults to the
    /// profile duration).
    #[arg(long)]
    peace_duration: Option<f64>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Peace trace used for learning and the acceptable-load threshold.
    #[arg(long)]
    peace: PathBuf,
    /// Trace to defend (legitimate background plus attack phases).
    #[arg(long)]
    attack: PathBuf,
    /// Filter arsenal: ddidd | partial | fq | ur | hc | wr | ar.
    #[arg(long, default_value = "ddidd")]
    mode: Mode,
    /// Seed for the no-defense scoring baseline (falls back to DDIDD_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Timeline CSV path (default: the attack path with a .timeline.csv
    /// extension).
    #[arg(long)]
    timeline: Option<PathBuf>,
    /// Write the neutral rule text of every deployment to this file.
    #[arg(long)]
    rules_out: Option<PathBuf>,
    /// Truncate the attack trace to its first N seconds before replaying.
    #[arg(long)]
    max_attack_seconds: Option<u64>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Peace trace used for learning and the acceptable-load threshold.
    #[arg(long)]
    peace: PathBuf,
    /// Trace to defend (legitimate background plus attack phases).
    #[arg(long)]
    attack: PathBuf,
    /// Comma-separated modes to tabulate.
    #[arg(long, value_delimiter = ',', default_value = "fq,ur,hc,wr,ddidd")]
    modes: Vec<Mode>,
    /// Seed shared by every run (falls back to DDIDD_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Truncate the attack trace to its first N seconds before replaying.
    #[arg(long)]
    max_attack_seconds: Option<u64>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum RuleFormat {
    Iptables,
    Ipset,
    Neutral,
}

#[derive(Args)]
struct RenderArgs {
    /// Neutral rule text: either a single snapshot or a deployment log with
    /// `# ts=N` headers, in which case the most recent snapshot is used.
    #[arg(long)]
    rules: PathBuf,
    /// Output command dialect.
    #[arg(long, value_enum)]
    format: RuleFormat,
    /// Reject snapshots holding more name-match rules than this.
    #[arg(long, default_value_t = 5)]
    fq_rule_cap: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Replay report JSON, as printed by `ddidd replay`.
    #[arg(long)]
    input: PathBuf,
}

/// Usage errors (bad flags, missing or malformed inputs) exit 2; runtime
/// failures exit 1.
enum CliError {
    Usage(String),
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse(); // parse errors exit 2, --help/--version exit 0
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Learn(args) => cmd_learn(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Replay(args) => cmd_replay(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Render(args) => cmd_render(args),
        Cmd::Report(args) => cmd_report(args),
    }
}

// ---------------------------------------------------------------------------
// shared plumbing

fn log_config(value: &serde_json::Value) {
    eprintln!("config {value}");
}

fn read_trace_file(path: &Path) -> Result<Vec<QueryRecord>, CliError> {
    read_trace(path)
        .map_err(|e| CliError::Usage(format!("cannot read trace {}: {e}", path.display())))
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("malformed {what} {}: {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8], what: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {what} {}: {e}", path.display())))
}

/// `--seed`, else `DDIDD_SEED`, else 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("DDIDD_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("DDIDD_SEED is not a u64: {text:?}"))),
        Err(_) => Ok(0),
    }
}

fn truncate_attack(records: &mut Vec<QueryRecord>, max_seconds: Option<u64>) {
    if let (Some(n), Some(first)) = (max_seconds, records.first().map(|r| r.ts)) {
        let cut = first + n as f64;
        let keep = records.partition_point(|r| r.ts < cut);
        records.truncate(keep);
    }
}

fn replay_once(
    peace: &[QueryRecord],
    attack: &[QueryRecord],
    config: &ReplayConfig,
) -> Result<MetricsReport, CliError> {
    replay(peace, attack, config).map_err(|e| CliError::Runtime(format!("replay failed: {e}")))
}

// ---------------------------------------------------------------------------
// learn

fn cmd_learn(args: LearnArgs) -> Result<(), CliError> {
    let params = args.params.resolve()?;
    log_config(&serde_json::json!({
        "command": "learn",
        "peace": args.peace,
        "out": args.out,
        "params": params,
    }));

    let records = read_trace_file(&args.peace)?;
    if records.is_empty() {
        return Err(CliError::Usage(format!(
            "peace trace {} has no records",
            args.peace.display()
        )));
    }
    let peace_start = records.first().map(|r| r.ts).unwrap_or(0.0);
    let peace_end = records.last().map(|r| r.ts).unwrap_or(0.0);
    let built_at = peace_end;
    let tail = |span: f64| -> &[QueryRecord] {
        let lo = (peace_end - span).max(peace_start);
        let i = records.partition_point(|r| r.ts < lo);
        &records[i..]
    };
    let learn_err = |what: &str, e: ddidd_core::filters::FilterError| {
        CliError::Runtime(format!("cannot learn {what} from this trace: {e}"))
    };

    let allow = ur_build(tail(params.l_ur).iter(), built_at, params.l_ur)
        .map_err(|e| learn_err("the allow-list", e))?;
    let ttls = hc_build(tail(params.l_hc).iter(), built_at, params.l_hc)
        .map_err(|e| learn_err("the TTL table", e))?;
    let rates = wr_learn(
        &records,
        &params.windows,
        (peace_end - params.l_wr).max(peace_start),
        peace_end,
        built_at,
    )
    .map_err(|e| learn_err("the rate model", e))?;
    let fq_sample = &records[records.len().saturating_sub(params.l_fq)..];
    let baseline = fq_learn(fq_sample).map_err(|e| learn_err("the name baseline", e))?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let store_err =
        |e: ddidd_core::store::StoreError| CliError::Runtime(format!("cannot save table: {e}"));
    let allow_path = args.out.join("allowlist.json");
    let ttl_path = args.out.join("ttltable.json");
    let rate_path = args.out.join("ratetable.json");
    let fq_path = args.out.join("fqbaseline.json");
    save_table(&allow_path, "allowlist", built_at, params.l_ur, &allow).map_err(store_err)?;
    save_table(&ttl_path, "ttltable", built_at, params.l_hc, &ttls).map_err(store_err)?;
    save_table(&rate_path, "ratetable", built_at, rates.learn_span, &rates).map_err(store_err)?;
    save_table(&fq_path, "fqbaseline", built_at, peace_end - peace_start, &baseline)
        .map_err(store_err)?;

    let summary = serde_json::json!({
        "built_at": built_at,
        "tables": {
            "allowlist": { "path": allow_path, "sources": allow.sources.len() },
            "ttltable": { "path": ttl_path, "sources": ttls.ttls.len() },
            "ratetable": { "path": rate_path, "sources": rates.stats.len() },
            "fqbaseline": { "path": fq_path, "sample_size": baseline.sample_size },
        },
    });
    println!("{}", pretty(&summary)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let profile: LegitProfile = read_json_file(&args.profile, "profile")?;
    let specs: Vec<AttackSpec> = read_json_file(&args.attacks, "attack list")?;
    let peace_duration = args.peace_duration.unwrap_or(profile.duration_s);
    let peace_path = args.out.with_extension("peace.jsonl");
    let manifest_path = args.out.with_extension("manifest.json");
    log_config(&serde_json::json!({
        "command": "synth",
        "profile": profile,
        "attacks": specs,
        "out": args.out,
        "peace_out": peace_path,
        "manifest_out": manifest_path,
        "peace_duration_s": peace_duration,
    }));

    let synth_err = |e: ddidd_core::synth::SynthError| CliError::Usage(format!("synth: {e}"));
    let (model, attack_records) = gen_polymorphic(&profile, &specs).map_err(synth_err)?;
    // Stream 1 keeps the peace capture's arrival draws independent of the
    // attack trace's legitimate background (stream 0).
    let peace_records =
        gen_legit_span(&model, &profile, 0.0, peace_duration, 1).map_err(synth_err)?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    let trace_err =
        |e: ddidd_core::trace::TraceError| CliError::Runtime(format!("cannot write trace: {e}"));
    write_trace(attack_records.iter(), &args.out).map_err(trace_err)?;
    write_trace(peace_records.iter(), &peace_path).map_err(trace_err)?;

    let manifest = serde_json::json!({
        "attack_trace": args.out,
        "peace_trace": peace_path,
        "profile": profile,
        "attacks": specs,
        "peace": { "duration_s": peace_duration, "stream": 1 },
        "aggregate_legit_qps": model.aggregate_qps,
        "records": { "attack": attack_records.len(), "peace": peace_records.len() },
    });
    let manifest_text = pretty(&manifest)?;
    write_output(&manifest_path, manifest_text.as_bytes(), "manifest")?;
    println!("{manifest_text}");
    Ok(())
}

// ---------------------------------------------------------------------------
// replay

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let config = ReplayConfig {
        params: args.params.resolve()?,
        mode: args.mode,
        seed: resolve_seed(args.seed)?,
        ..ReplayConfig::default()
    };
    let timeline_path = args
        .timeline
        .clone()
        .unwrap_or_else(|| args.attack.with_extension("timeline.csv"));
    log_config(&serde_json::json!({
        "command": "replay",
        "peace": args.peace,
        "attack": args.attack,
        "timeline": timeline_path,
        "rules_out": args.rules_out,
        "max_attack_seconds": args.max_attack_seconds,
        "config": config,
    }));

    let peace = read_trace_file(&args.peace)?;
    let mut attack = read_trace_file(&args.attack)?;
    truncate_attack(&mut attack, args.max_attack_seconds);

    let report = replay_once(&peace, &attack, &config)?;
    let csv = ddidd_core::engine::timeline_csv(&report.timeline);
    write_output(&timeline_path, csv.as_bytes(), "timeline")?;
    if let Some(rules_path) = &args.rules_out {
        write_output(rules_path, report.rules_log.as_bytes(), "rules log")?;
    }
    println!("{}", pretty(&report)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

#[derive(serde::Serialize)]
struct CompareRow {
    mode: String,
    controlled_load_pct: f64,
    collateral_damage_pct: f64,
    selection_delay_s: Option<u64>,
    al: f64,
    attack_detected_at: Option<u64>,
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    if args.modes.is_empty() {
        return Err(CliError::Usage("--modes must name at least one mode".into()));
    }
    let params = args.params.resolve()?;
    let seed = resolve_seed(args.seed)?;
    log_config(&serde_json::json!({
        "command": "compare",
        "peace": args.peace,
        "attack": args.attack,
        "modes": args.modes.iter().map(|m| m.token()).collect::<Vec<_>>(),
        "seed": seed,
        "max_attack_seconds": args.max_attack_seconds,
        "params": params,
    }));

    let peace = read_trace_file(&args.peace)?;
    let mut attack = read_trace_file(&args.attack)?;
    truncate_attack(&mut attack, args.max_attack_seconds);

    let mut rows = Vec::with_capacity(args.modes.len());
    for &mode in &args.modes {
        let config = ReplayConfig {
            params: params.clone(),
            mode,
            seed,
            ..ReplayConfig::default()
        };
        let report = replay_once(&peace, &attack, &config)?;
        rows.push(CompareRow {
            mode: mode.token().to_string(),
            controlled_load_pct: report.controlled_load_pct,
            collateral_damage_pct: report.collateral_damage_pct,
            selection_delay_s: report.selection_delay_s,
            al: report.al,
            attack_detected_at: report.attack_detected_at,
        });
    }

    let mut table = format!(
        "{:<8} {:>8} {:>8} {:>8}\n",
        "mode", "con%", "cd%", "delay_s"
    );
    for row in &rows {
        let delay = row
            .selection_delay_s
            .map(|d| d.to_string())
            .unwrap_or_else(|| "-".to_string());
        let _ = writeln!(
            table,
            "{:<8} {:>8.2} {:>8.2} {:>8}",
            row.mode, row.controlled_load_pct, row.collateral_damage_pct, delay
        );
    }
    eprint!("{table}");
    println!("{}", pretty(&rows)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// render

fn cmd_render(args: RenderArgs) -> Result<(), CliError> {
    log_config(&serde_json::json!({
        "command": "render",
        "rules": args.rules,
        "format": format!("{:?}", args.format).to_lowercase(),
        "fq_rule_cap": args.fq_rule_cap,
    }));
    let text = fs::read_to_string(&args.rules)
        .map_err(|e| CliError::Usage(format!("cannot read rules {}: {e}", args.rules.display())))?;

    // A deployment log concatenates snapshots under `# ts=N` headers; the
    // most recent snapshot is the one an operator would install.
    let last_snapshot = text
        .split_inclusive('\n')
        .fold(Vec::<String>::new(), |mut chunks, line| {
            if line.starts_with("# ts=") || chunks.is_empty() {
                chunks.push(String::new());
            }
            chunks.last_mut().expect("non-empty").push_str(line);
            chunks
        })
        .into_iter()
        .rev()
        .find(|c| c.lines().any(|l| !l.trim().is_empty() && !l.starts_with('#')))
        .unwrap_or_default();

    let rules = DeploymentRules::parse_neutral(&last_snapshot)
        .map_err(|e| CliError::Usage(format!("malformed rules {}: {e}", args.rules.display())))?;
    let rendered = match args.format {
        RuleFormat::Neutral => rules.render_neutral(),
        RuleFormat::Ipset => rules
            .render_ipset(args.fq_rule_cap)
            .map_err(|e| CliError::Runtime(format!("cannot render: {e}")))?,
        RuleFormat::Iptables => rules
            .render_iptables(args.fq_rule_cap)
            .map_err(|e| CliError::Runtime(format!("cannot render: {e}")))?,
    };
    print!("{rendered}");
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    log_config(&serde_json::json!({
        "command": "report",
        "input": args.input,
    }));
    let report: MetricsReport = read_json_file(&args.input, "report")?;

    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(out, "mode                  {}", report.mode.token());
    let _ = writeln!(out, "seed                  {}", report.seed);
    let _ = writeln!(out, "acceptable load (qps) {:.3}", report.al);
    let _ = writeln!(out, "attack detected at    {}", opt(report.attack_detected_at));
    let _ = writeln!(out, "attack ended at       {}", opt(report.attack_ended_at));
    let _ = writeln!(
        out,
        "scored span           {} .. {}",
        opt(report.span_start),
        opt(report.span_end)
    );
    let _ = writeln!(out, "controlled load       {:.2}%", report.controlled_load_pct);
    let _ = writeln!(out, "collateral damage     {:.2}%", report.collateral_damage_pct);
    let _ = writeln!(out, "selection delay (s)   {}", opt(report.selection_delay_s));
    let _ = writeln!(
        out,
        "no-defense baseline   {:.2}% legit unanswered",
        report.unanswered_legit_baseline_pct
    );
    let t = &report.totals;
    let _ = writeln!(
        out,
        "records               offered {} = passed {} + blocked {}",
        t.offered, t.passed, t.blocked
    );
    let _ = writeln!(
        out,
        "ground truth          attack {} | legit in span {} | legit blocked {}",
        t.attack_records, t.legit_in_span, t.legit_blocked
    );
    if !report.drops_by_filter.is_empty() {
        let _ = writeln!(out, "drops by filter");
        for (filter, n) in &report.drops_by_filter {
            let attack_n = report.attack_drops_by_filter.get(filter).copied().unwrap_or(0);
            let _ = writeln!(out, "  {filter:<8} {n:>12} ({attack_n} attack-labeled)");
        }
    }
    print!("{out}");
    Ok(())
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize output: {e}")))
}
