use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vps_core::estimator::{batch_rates, estimate_batch};
use vps_core::model::{read_samples_csv, write_samples_csv};
use vps_core::planner::{
    analytic_required_measurements, required_measurements, PlanQuery, ReferenceTable,
};
use vps_core::prober::{self, ProbeConfig, Reflector};
use vps_core::sim::{self, ErrorPoint, SimConfig, SimJob};
use vps_core::testbox::{
    estimate_lambda, match_sessions, pair_by_size, parse_log, parse_receiver_line,
    parse_sender_line, PairingPolicy, DEFAULT_PAIRING_WINDOW_S,
};
use vps_core::{BandwidthEstimate, DelaySample, Direction, PacketSize, ProbePair};

#[derive(Parser)]
#[command(
    name = "vps",
    version,
    about = "Variable packet size bandwidth measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Join sender and receiver logs into delay samples.
    Parse(ParseArgs),
    /// Estimate available bandwidth from a samples CSV.
    Estimate(EstimateArgs),
    /// Generate synthetic samples and the error-vs-n table.
    Simulate(SimulateArgs),
    /// Number of measurements needed for a target error.
    Plan(PlanArgs),
    /// Send probe pairs to a reflector and record round-trip delays.
    Probe(ProbeArgs),
    /// Echo every datagram back to its sender.
    Reflect(ReflectArgs),
    /// Regenerate the reference error tables and plot data.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long)]
    sender: PathBuf,
    #[arg(long)]
    receiver: PathBuf,
    #[arg(long, default_value = "forward")]
    direction: Direction,
    /// Samples CSV destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
    /// Also write the JSON diagnostics to this file.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Nearest,
    Sequential,
}

#[derive(Args)]
struct EstimateArgs {
    /// Samples CSV, `-` for stdin.
    #[arg(long)]
    samples: String,
    #[arg(long, requires = "w2")]
    w1: Option<u32>,
    #[arg(long, requires = "w1")]
    w2: Option<u32>,
    /// Pairs averaged per batch; all pairs form one batch when omitted.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: Option<u64>,
    #[arg(long, value_enum, default_value = "nearest")]
    policy: Policy,
    /// Pairing window for the nearest policy, seconds.
    #[arg(long, default_value_t = DEFAULT_PAIRING_WINDOW_S, value_parser = positive_f64)]
    window: f64,
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Samples CSV destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
    /// Write the `n,sd_s,eta` table here.
    #[arg(long)]
    table: Option<String>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct PlanArgs {
    /// Exponential delay rate, 1/s.
    #[arg(long, value_parser = positive_f64)]
    lambda: f64,
    /// Observed mean delay difference, seconds.
    #[arg(long, value_parser = positive_f64)]
    diff: f64,
    /// Target relative error, as a fraction (0.05) or percent (5%).
    #[arg(long, value_parser = parse_eta)]
    eta: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ProbeArgs {
    /// Reflector address, `host:port`.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = ProbeConfig::DEFAULT_W1)]
    w1: u32,
    #[arg(long, default_value_t = ProbeConfig::DEFAULT_W2)]
    w2: u32,
    /// Number of pairs.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Interval between packets, seconds.
    #[arg(long, default_value_t = ProbeConfig::DEFAULT_SPACING.as_secs_f64(), value_parser = positive_f64)]
    spacing: f64,
    /// How long to wait for a reply, seconds.
    #[arg(long, default_value_t = ProbeConfig::DEFAULT_TIMEOUT.as_secs_f64(), value_parser = positive_f64)]
    timeout: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: Option<u64>,
    /// Samples CSV destination, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReflectArgs {
    #[arg(long, default_value = "0.0.0.0:9000")]
    listen: String,
    /// Print the bound address as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo replications per n.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(2..))]
    trials: u64,
    #[arg(long, default_value = "reproduce")]
    out_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_eta(s: &str) -> Result<f64, String> {
    let (num, scale) = match s.trim().strip_suffix('%') {
        Some(p) => (p, 100.0),
        None => (s.trim(), 1.0),
    };
    let v = num.trim().parse::<f64>().map_err(|e| e.to_string())? / scale;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!(
            "must lie strictly between 0 and 1 (or 0% and 100%), got {s}"
        ))
    }
}

/// Failure class; each maps to one exit code.
#[derive(Debug)]
enum Failure {
    Io(String),
    Domain(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Domain(_) => 2,
            Failure::Usage(_) => 64,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Domain(m) | Failure::Usage(m) => m,
        }
    }
}

impl From<vps_core::Error> for Failure {
    fn from(e: vps_core::Error) -> Self {
        match e {
            vps_core::Error::Io(_) | vps_core::Error::BindFailure { .. } => {
                Failure::Io(e.to_string())
            }
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(64),
            };
        }
    };
    let result = match cli.command {
        Command::Parse(a) => cmd_parse(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Reflect(a) => cmd_reflect(a),
        Command::ReproducePaper(a) => cmd_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("vps: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

// --- I/O helpers -------------------------------------------------------------

fn is_stdio(path: &str) -> bool {
    path == "-"
}

fn create(path: &str) -> Result<Box<dyn Write>, Failure> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_csv(path: &str, samples: &[DelaySample]) -> CmdResult {
    let mut out = create(path)?;
    write_samples_csv(&mut out, samples)?;
    out.flush()?;
    Ok(())
}

/// Summaries go to stdout unless stdout already carries the data.
fn summarize(data_on_stdout: bool, text: &str) -> CmdResult {
    if data_on_stdout {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
    Ok(())
}

fn summary_text(json: bool, value: &Value, text: impl FnOnce() -> String) -> String {
    if json {
        value.to_string()
    } else {
        text()
    }
}

// --- parse -------------------------------------------------------------------

fn malformed_json<T>(log: &vps_core::testbox::ParsedLog<T>) -> Value {
    json!({
        "parsed": log.records.len(),
        "malformed": log.malformed.iter()
            .map(|(line, e)| json!({ "line": line, "error": e.to_string() }))
            .collect::<Vec<_>>(),
    })
}

fn cmd_parse(a: ParseArgs) -> CmdResult {
    let sent = parse_log(BufReader::new(open(&a.sender)?), parse_sender_line)?;
    let received = parse_log(BufReader::new(open(&a.receiver)?), parse_receiver_line)?;
    let outcome = match_sessions(&sent.records, &received.records, a.direction);

    let diagnostics = json!({
        "sender": malformed_json(&sent),
        "receiver": malformed_json(&received),
        "matching": outcome.stats,
    });
    if let Some(path) = &a.diagnostics {
        let mut f = create(&path.to_string_lossy())?;
        serde_json::to_writer_pretty(&mut f, &diagnostics)?;
        writeln!(f)?;
        f.flush()?;
    }
    for (line, e) in sent.malformed.iter().chain(&received.malformed) {
        eprintln!("warning: line {line}: {e}");
    }
    if outcome.stats.matched == 0 {
        return Err(Failure::Domain(
            "no sender record matches a receiver record".into(),
        ));
    }
    write_csv(&a.out, &outcome.samples)?;

    let s = &outcome.stats;
    let text = summary_text(a.json, &diagnostics, || {
        format!(
            "matched {} samples ({} malformed lines, {} unmatched sent, {} unmatched received)",
            s.matched,
            sent.malformed.len() + received.malformed.len(),
            s.unmatched_sent,
            s.unmatched_received
        )
    });
    summarize(is_stdio(&a.out), &text)
}

// --- estimate ----------------------------------------------------------------

fn size(bytes: u32) -> Result<PacketSize, Failure> {
    PacketSize::new(bytes).map_err(|e| Failure::Usage(e.to_string()))
}

/// The two probe sizes in `samples`: explicit flags, or the only two present.
fn probe_sizes(
    samples: &[DelaySample],
    w1: Option<u32>,
    w2: Option<u32>,
) -> Result<(PacketSize, PacketSize), Failure> {
    if let (Some(w1), Some(w2)) = (w1, w2) {
        if w1 >= w2 {
            return Err(Failure::Usage(format!(
                "--w1 ({w1}) must be below --w2 ({w2})"
            )));
        }
        return Ok((size(w1)?, size(w2)?));
    }
    let found: BTreeSet<PacketSize> = samples.iter().map(|s| s.packet_size).collect();
    let sizes: Vec<PacketSize> = found.into_iter().collect();
    match sizes[..] {
        [small, large] => Ok((small, large)),
        _ => {
            let listed: Vec<String> = sizes.iter().map(|s| s.bytes().to_string()).collect();
            Err(Failure::Domain(format!(
                "need exactly two packet sizes, found [{}]; choose with --w1 and --w2",
                listed.join(", ")
            )))
        }
    }
}

fn estimate_all(
    pairs: &[ProbePair],
    batch_size: Option<u64>,
) -> vps_core::Result<BandwidthEstimate> {
    let b = batch_size.map_or(pairs.len(), |b| b as usize);
    estimate_batch(pairs, b)
}

fn cmd_estimate(a: EstimateArgs) -> CmdResult {
    let samples = if is_stdio(&a.samples) {
        let mut buf = Vec::new();
        io::stdin().lock().read_to_end(&mut buf)?;
        read_samples_csv(buf.as_slice())?
    } else {
        read_samples_csv(open(Path::new(&a.samples))?)?
    };
    if samples.is_empty() {
        return Err(Failure::Domain("no samples in input".into()));
    }
    let (w1, w2) = probe_sizes(&samples, a.w1, a.w2)?;
    let policy = match a.policy {
        Policy::Nearest => PairingPolicy::NearestInTime { window_s: a.window },
        Policy::Sequential => PairingPolicy::Sequential,
    };
    let paired = pair_by_size(&samples, w1, w2, policy)?;
    let est = estimate_all(&paired.pairs, a.batch_size)?;

    let mut out = create(&a.out)?;
    if a.json {
        serde_json::to_writer(&mut out, &est)?;
        writeln!(out)?;
    } else {
        writeln!(out, "{est}")?;
    }
    out.flush()?;
    if paired.unpaired_small + paired.unpaired_large > 0 {
        eprintln!(
            "note: {} small and {} large samples left unpaired",
            paired.unpaired_small, paired.unpaired_large
        );
    }
    Ok(())
}

// --- simulate ----------------------------------------------------------------

fn error_table_json(points: &[ErrorPoint]) -> Value {
    points
        .iter()
        .map(|p| json!({ "n": p.n, "sd_s": p.sd_s, "eta": p.eta }))
        .collect()
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::Io(format!("{}: {e}", a.config.display())))?;
    let mut job = SimJob::parse(&text)?;
    if let Some(seed) = a.seed {
        job.config.seed = seed;
    }
    let cfg = &job.config;

    write_csv(&a.out, &sim::simulate_samples(cfg))?;

    let points = if cfg.n_trials < 2 {
        eprintln!(
            "warning: n_trials = {}; the SD needs at least 2, table skipped",
            cfg.n_trials
        );
        Vec::new()
    } else {
        if cfg.n_trials < 100 {
            eprintln!(
                "warning: n_trials = {}; SD estimates will be noisy",
                cfg.n_trials
            );
        }
        sim::error_vs_n(cfg, &job.ns)?
    };
    if let Some(path) = &a.table {
        if !points.is_empty() {
            let mut out = create(path)?;
            sim::write_error_table(&mut out, &points)?;
            out.flush()?;
        }
    }

    let summary = json!({
        "seed": cfg.seed,
        "n_pairs": cfg.n_pairs,
        "n_trials": cfg.n_trials,
        "true_bps": cfg.true_bandwidth(),
        "true_delay_diff_s": cfg.true_delay_diff(),
        "table": error_table_json(&points),
    });
    let text = summary_text(a.json, &summary, || {
        let mut s = format!(
            "{} pairs, true bandwidth {:.3} Mbit/s, mean delay difference {:.6} s",
            cfg.n_pairs,
            cfg.true_bandwidth() / 1e6,
            cfg.true_delay_diff()
        );
        for p in &points {
            s.push_str(&format!(
                "\n  n = {:4}  sd = {:.6} s  eta = {:.1}%",
                p.n,
                p.sd_s,
                p.eta * 100.0
            ));
        }
        s
    });
    summarize(is_stdio(&a.out), &text)
}

// --- plan --------------------------------------------------------------------

fn cmd_plan(a: PlanArgs) -> CmdResult {
    let q = PlanQuery::new(a.lambda, a.diff, a.eta).map_err(|e| Failure::Usage(e.to_string()))?;
    let plan = required_measurements(&q, &ReferenceTable::default());
    let analytic = analytic_required_measurements(&q);
    if a.json {
        println!(
            "{}",
            json!({
                "n": plan.n,
                "extrapolated": plan.extrapolated,
                "table_eta": plan.table_eta,
                "analytic_n": analytic,
            })
        );
    } else {
        println!("n = {}", plan.n);
        println!(
            "extrapolated: {}",
            if plan.extrapolated { "yes" } else { "no" }
        );
        println!("analytic n = {analytic}");
    }
    Ok(())
}

// --- probe / reflect -----------------------------------------------------------

fn cmd_probe(a: ProbeArgs) -> CmdResult {
    let target = prober::resolve(&a.target)?;
    let cfg = ProbeConfig::new(
        target,
        size(a.w1)?,
        size(a.w2)?,
        a.count,
        Duration::from_secs_f64(a.spacing),
        Duration::from_secs_f64(a.timeout),
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let report = prober::probe(&cfg)?;
    write_csv(&a.out, &report.samples())?;

    let estimate = if report.pairs.is_empty() {
        None
    } else {
        match estimate_all(&report.pairs, a.batch_size) {
            Ok(est) => Some(est),
            Err(e) => {
                eprintln!("warning: no estimate: {e}");
                None
            }
        }
    };
    let summary =
        json!({ "target": target.to_string(), "stats": report.stats, "estimate": estimate });
    let text = summary_text(a.json, &summary, || {
        let s = &report.stats;
        let mut t = format!(
            "{} pairs from {target} ({} sent, {} received, {} lost pairs); delays are round-trip",
            report.pairs.len(),
            s.sent,
            s.received,
            s.lost_pairs
        );
        if let Some(est) = &estimate {
            t.push_str(&format!("\n{est}"));
        }
        t
    });
    summarize(is_stdio(&a.out), &text)
}

fn cmd_reflect(a: ReflectArgs) -> CmdResult {
    let reflector = Reflector::bind(a.listen.as_str())?;
    let addr = reflector.local_addr()?;
    if a.json {
        println!("{}", json!({ "listening": addr.to_string() }));
    } else {
        println!("listening on {addr}");
    }
    io::stdout().flush()?;
    reflector.serve()?;
    Ok(())
}

// --- reproduce-paper -----------------------------------------------------------

const CURVE_NS: [usize; 14] = [1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 100, 150, 200];
const SERIES_BATCHES: [usize; 3] = [20, 50, 100];
const REPRODUCE_PAIRS: usize = 3000;

fn cmd_reproduce(a: ReproduceArgs) -> CmdResult {
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::Io(format!("{}: {e}", a.out_dir.display())))?;
    let path = |name: &str| a.out_dir.join(name).to_string_lossy().into_owned();
    let cfg = SimConfig::reference(REPRODUCE_PAIRS, a.trials as usize, a.seed);
    let table = ReferenceTable::default();

    // simulate
    let samples = sim::simulate_samples(&cfg);
    write_csv(&path("samples.csv"), &samples)?;

    let lambda = cfg.path.lambda();
    let rows = sim::error_vs_n(&cfg, &sim::DEFAULT_NS)?;
    let mut out = create(&path("error_table.csv"))?;
    writeln!(out, "n,sd_s,eta,analytic_sd_s,table_eta")?;
    for p in &rows {
        let analytic = std::f64::consts::SQRT_2 / (lambda * (p.n as f64).sqrt());
        writeln!(
            out,
            "{},{},{},{},{}",
            p.n,
            p.sd_s,
            p.eta,
            analytic,
            table.eta_at(p.n as f64)
        )?;
    }
    out.flush()?;

    let curve = sim::error_vs_n(&cfg, &CURVE_NS)?;
    let mut out = create(&path("error_curve.csv"))?;
    sim::write_error_table(&mut out, &curve)?;
    out.flush()?;

    // estimate, from the samples as written
    let samples = read_samples_csv(open(Path::new(&path("samples.csv")))?)?;
    let paired = pair_by_size(&samples, cfg.w1, cfg.w2, PairingPolicy::Sequential)?;
    let mut out = create(&path("batch_series.csv"))?;
    writeln!(out, "batch_size,index,bps")?;
    for b in SERIES_BATCHES {
        for (i, r) in batch_rates(&paired.pairs, b)?.iter().enumerate() {
            writeln!(out, "{b},{i},{r}")?;
        }
    }
    out.flush()?;
    let est = estimate_batch(&paired.pairs, 100)?;
    let mut out = create(&path("estimate.json"))?;
    serde_json::to_writer_pretty(&mut out, &est)?;
    writeln!(out)?;
    out.flush()?;

    // plan, from quantities measured on the samples
    let small: Vec<DelaySample> = samples
        .iter()
        .copied()
        .filter(|s| s.packet_size == cfg.w1)
        .collect();
    let lambda_hat = estimate_lambda(&small)?;
    let mut out = create(&path("plan.csv"))?;
    writeln!(out, "eta_target,n,extrapolated,analytic_n")?;
    for &(_, eta) in table.rows() {
        let q = PlanQuery::new(lambda_hat, est.mean_delay_diff, eta)?;
        let plan = required_measurements(&q, &table);
        let analytic = analytic_required_measurements(&q);
        writeln!(out, "{eta},{},{},{analytic}", plan.n, plan.extrapolated)?;
    }
    out.flush()?;

    let summary = json!({
        "out_dir": a.out_dir.display().to_string(),
        "seed": a.seed,
        "trials": a.trials,
        "error_table": error_table_json(&rows),
        "estimate": est,
        "lambda_estimate": lambda_hat,
    });
    let text = summary_text(a.json, &summary, || {
        let mut s = format!("wrote results to {}", a.out_dir.display());
        for p in &rows {
            s.push_str(&format!(
                "\n  n = {:4}  sd = {:.4} ms  eta = {:5.1}%  table {:5.1}%",
                p.n,
                p.sd_s * 1e3,
                p.eta * 100.0,
                table.eta_at(p.n as f64) * 100.0
            ));
        }
        s.push_str(&format!("\nestimate (batch 100): {est}"));
        s.push_str(&format!(
            "\nlambda estimate: {lambda_hat:.1} 1/s (true {lambda})"
        ));
        s
    });
    summarize(false, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_accepts_fraction_and_percent() {
        assert_eq!(parse_eta("0.244"), Ok(0.244));
        assert!((parse_eta("24.4%").unwrap() - 0.244).abs() < 1e-15);
        assert!((parse_eta(" 5 %").unwrap() - 0.05).abs() < 1e-15);
        for bad in ["0", "1", "100%", "-0.1", "x", "%", "NaN"] {
            assert!(parse_eta(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn positive_numbers_only() {
        assert_eq!(positive_f64("8e-4"), Ok(8e-4));
        for bad in ["0", "-1", "inf", "abc"] {
            assert!(positive_f64(bad).is_err(), "{bad}");
        }
    }

    fn sample(bytes: u32) -> DelaySample {
        DelaySample {
            packet_size: PacketSize::new(bytes).unwrap(),
            delay: vps_core::Delay::from_secs(0.001).unwrap(),
            serial: 0,
            sent_at: 0.0,
            direction: Direction::Forward,
        }
    }

    #[test]
    fn sizes_detected_or_listed() {
        let two = [sample(1100), sample(100), sample(100)];
        let (a, b) = probe_sizes(&two, None, None).unwrap();
        assert_eq!((a.bytes(), b.bytes()), (100, 1100));

        let three = [sample(100), sample(600), sample(1100)];
        match probe_sizes(&three, None, None) {
            Err(Failure::Domain(m)) => assert!(m.contains("[100, 600, 1100]"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            probe_sizes(&three, Some(600), Some(100)),
            Err(Failure::Usage(_))
        ));
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        let io = vps_core::Error::Io(io::Error::other("disk"));
        assert_eq!(Failure::from(io).code(), 1);
        assert_eq!(Failure::from(vps_core::Error::NoPairsFound).code(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
