use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use lkcs_core::coterie::format_set;
use lkcs_core::harness::campaign::CampaignSpec;
use lkcs_core::harness::explore::explore_all_initial;
use lkcs_core::harness::{run_campaign, AppConfig, MetricsReport, Schedule};
use lkcs_core::simnet::DEFAULT_EVENT_BUDGET;
use lkcs_core::{CoterieAssignment, CoterieKind, Gate, Mode, ProcessId, SystemSpec};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RunMode {
    Mutin,
    Gcs,
    Comutin,
    Explore,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoterieArg {
    Grid,
    Majority,
    Single,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Contention {
    /// Random think times between invocations.
    Random,
    /// One invocation at a time, each after the network drains.
    None,
}

/// Simulation campaigns for l-mutual inclusion, k-mutual exclusion and the
/// (l,k) group critical section.
#[derive(Debug, Parser)]
#[command(name = "lkcs", version)]
struct Args {
    #[arg(long, value_enum)]
    mode: RunMode,
    #[arg(long)]
    n: usize,
    /// Floor: at least l processes in the CS.
    #[arg(long, default_value_t = 0)]
    l: usize,
    /// Ceiling: at most k processes in the CS (gcs, comutin, explore).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = CoterieArg::Grid)]
    coterie: CoterieArg,
    /// Quorum assignment file, one `i: j1 j2 ...` line per process.
    #[arg(long, conflicts_with = "coterie")]
    coterie_file: Option<PathBuf>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Comma-separated delay bounds; every seed runs under each.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5u64])]
    max_delay: Vec<u64>,
    /// Cycles per process.
    #[arg(long, default_value_t = 5)]
    cycles: usize,
    #[arg(long, default_value_t = 2)]
    max_think: u64,
    #[arg(long, value_enum, default_value_t = Contention::Random)]
    contention: Contention,
    /// Initial CS members: a count (the lowest ids) or a list such as `1,3`.
    /// Drawn per seed when omitted.
    #[arg(long)]
    initial_incs: Option<String>,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long)]
    metrics_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EVENT_BUDGET)]
    budget: u64,
    /// Explore mode: distinct states per initial configuration.
    #[arg(long, default_value_t = 1_000_000)]
    state_cap: usize,
    /// Remove the inclusion gate, to check that violations are caught.
    #[arg(long)]
    skip_gate: bool,
}

fn coterie(args: &Args) -> Result<CoterieAssignment> {
    if let Some(path) = &args.coterie_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let c = CoterieAssignment::parse_text(&text)?;
        if c.n() != args.n {
            bail!("coterie file describes {} processes, --n is {}", c.n(), args.n);
        }
        return Ok(c);
    }
    let kind = match args.coterie {
        CoterieArg::Grid => CoterieKind::Grid,
        CoterieArg::Majority => CoterieKind::Majority,
        CoterieArg::Single => CoterieKind::Single,
    };
    Ok(kind.build(args.n)?)
}

fn mode(args: &Args) -> Result<Mode> {
    let need_k = || args.k.with_context(|| "--k is required for this mode");
    Ok(match args.mode {
        RunMode::Mutin => Mode::Mutin { l: args.l },
        RunMode::Gcs | RunMode::Explore => Mode::Gcs { l: args.l, k: need_k()? },
        RunMode::Comutin => {
            let k = need_k()?;
            if k > args.n {
                bail!("--k {k} exceeds --n {}", args.n);
            }
            Mode::CoMutin { m: args.n - k }
        }
    })
}

fn initial(spec: &str, n: usize) -> Result<BTreeSet<ProcessId>> {
    if let Ok(count) = spec.parse::<usize>() {
        if count > n {
            bail!("--initial-incs {count} exceeds --n {n}");
        }
        return Ok(ProcessId::all(n).take(count).collect());
    }
    spec.split(',')
        .map(|s| {
            let id: u32 = s.trim().parse().with_context(|| format!("bad process id `{s}`"))?;
            if id == 0 || id as usize > n {
                bail!("process {id} outside 1..={n}");
            }
            Ok(ProcessId::new(id))
        })
        .collect()
}

fn write_file(dir: &Path, name: String, body: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn explore(args: &Args, mode: Mode, coterie: &CoterieAssignment) -> Result<bool> {
    let gate = if args.skip_gate { Gate::Skipped } else { Gate::Enforced };
    // one full cycle per process
    let reports = explore_all_initial(mode, coterie, gate, 1, args.state_cap)?;
    let mut ok = true;
    for r in &reports {
        println!(
            "initial={} states={} transitions={} completed={} deadlocks={} exhaustive={} safety={}",
            format_set(&r.initially_in),
            r.states,
            r.transitions,
            r.completed,
            r.deadlocks,
            !r.capped,
            if r.is_safe() { "pass" } else { "FAIL" }
        );
        if let Some(v) = &r.violation {
            println!("violation depth={} {}", v.depth, v.description);
            ok = false;
        }
    }
    Ok(ok)
}

fn campaign(args: &Args, mode: Mode, coterie: CoterieAssignment) -> Result<bool> {
    let n = coterie.n();
    let initially_in = args.initial_incs.as_deref().map(|s| initial(s, n)).transpose()?;
    // validate bounds before spending any time
    let probe = initially_in.clone().unwrap_or_else(|| {
        let (low, _) = mode.bounds(n);
        ProcessId::all(n).take(low).collect()
    });
    SystemSpec::new(mode, coterie.clone(), probe).validate()?;
    if args.max_delay.contains(&0) {
        bail!("--max-delay must be at least 1");
    }

    let schedule = match args.contention {
        Contention::Random => Schedule::Random { max_think: args.max_think },
        Contention::None => Schedule::Serialized,
    };
    let mut spec = CampaignSpec::new(
        mode,
        coterie,
        args.seeds,
        args.max_delay.clone(),
        AppConfig { cycles: args.cycles, schedule },
    );
    spec.seeds = (args.seed..args.seed + args.seeds).collect();
    spec.event_budget = args.budget;
    spec.initially_in = initially_in;
    spec.gate = if args.skip_gate { Gate::Skipped } else { Gate::Enforced };
    spec.keep_traces = args.trace_dir.is_some();

    let report = run_campaign(&spec)?;
    let mut pooled = MetricsReport::default();
    let mut failures = 0;
    for r in &report.runs {
        let tag = format!("s{}-d{}", r.seed, r.max_delay);
        println!(
            "seed={} max_delay={} initial={} outcome={:?} events={} cycles_min={} safety={} liveness={}",
            r.seed,
            r.max_delay,
            format_set(&r.initially_in),
            r.outcome,
            r.events,
            r.liveness.min_cycles(),
            if r.safety.is_ok() { "pass" } else { "FAIL" },
            if r.liveness.is_ok() { "pass" } else { "FAIL" },
        );
        if let Some(v) = &r.safety.violation {
            println!("  safety violation: {v}");
        }
        for b in &r.liveness.blocked {
            println!("  blocked: {b}");
        }
        if !r.passed() {
            failures += 1;
        }
        if let (Some(dir), Some(trace)) = (&args.trace_dir, &r.trace) {
            write_file(dir, format!("trace-{tag}.txt"), &trace.to_text())?;
        }
        if let Some(dir) = &args.metrics_dir {
            write_file(dir, format!("metrics-{tag}.txt"), &r.metrics.to_kv())?;
        }
        pooled.merge(&r.metrics);
    }
    print!("{}", pooled.to_kv());
    println!("runs={} failures={}", report.runs.len(), failures);
    Ok(failures == 0)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = coterie(&args).and_then(|c| {
        let mode = mode(&args)?;
        match args.mode {
            RunMode::Explore => explore(&args, mode, &c),
            _ => campaign(&args, mode, c),
        }
    });
    match result {
        Ok(true) => {
            println!("result=pass");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("result=FAIL");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
