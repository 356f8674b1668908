use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use surfsched::circuit::{lower, NoisePlacement};
use surfsched::dem::build_dem;
use surfsched::harness::{
    distance_table, estimate_threshold, fit_slope, render_distance_table, run, DistanceCell, ExperimentConfig, CSV_COLUMNS,
};
use surfsched::layout::{Basis, Layout, LayoutKind};
use surfsched::matcher::Matcher;
use surfsched::pauli::{check_determinism, frame_sample, ShotTable};
use surfsched::schedule::{generate, Method};

/// Environment variable overriding the worker-thread count.
const WORKERS_ENV: &str = "SURFSCHED_WORKERS";

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "surfsched", version, about = "Surface-code syndrome-extraction schedules: generation, fault distance and Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a circuit (text format) or its schedule plan (json).
    Gen(GenArgs),
    /// Check that every detector and observable is deterministic without noise.
    Check(CircuitArgs),
    /// Fault-distance table via shortest graphlike logical errors.
    Distance(DistanceArgs),
    /// Sample detection events and observable flips.
    Sample(SampleArgs),
    /// Decode a shot table and score it.
    Decode(DecodeArgs),
    /// Full pipeline sweep writing CSV rows.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Stim,
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct CircuitArgs {
    /// Patch family: memory or xx.
    #[arg(long, default_value = "memory")]
    layout: LayoutKind,
    /// nz, nz-hook-prone, alternating, zx-same or zx-cross.
    #[arg(long, default_value = "zx-same")]
    method: Method,
    /// Code distance (odd, ≥ 3).
    #[arg(short = 'd', default_value_t = 3)]
    d: usize,
    /// Syndrome-extraction rounds (default: d).
    #[arg(long)]
    rounds: Option<usize>,
    /// Readout basis: z or x.
    #[arg(long, default_value = "z")]
    basis: Basis,
    /// Physical error rate.
    #[arg(short = 'p', default_value_t = 1e-3)]
    p: f64,
    /// gates-only or all-ops.
    #[arg(long, default_value = "all-ops")]
    noise: NoisePlacement,
}

impl CircuitArgs {
    fn circuit(&self) -> Result<surfsched::circuit::Circuit, String> {
        let layout = Layout::build(self.layout, self.d).map_err(|e| e.to_string())?;
        let plan =
            generate(&layout, self.method, self.rounds.unwrap_or(self.d), self.basis).map_err(|e| e.to_string())?;
        lower(&plan, self.p, self.noise).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// stim (circuit text) or json (schedule plan).
    #[arg(long, value_enum, default_value = "stim")]
    format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistanceArgs {
    /// Restrict to one layout (default: both tables).
    #[arg(long)]
    layout: Option<LayoutKind>,
    /// Restrict to one method (default: all).
    #[arg(long)]
    method: Option<Method>,
    /// Distances (repeatable; default 3 5 7 for memory, 3 5 for xx).
    #[arg(short = 'd')]
    d: Vec<usize>,
    /// Restrict to one basis (default: Z for memory, both for xx).
    #[arg(long)]
    basis: Option<Basis>,
    /// Output format: stim (plain table), json or csv.
    #[arg(long, value_enum, default_value = "stim")]
    format: Format,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// Number of shots.
    #[arg(long, default_value_t = 100_000)]
    shots: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout, text).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the packed binary table instead of '01' text lines.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    circuit: CircuitArgs,
    /// Shot table written by `sample`.
    #[arg(long)]
    shots_file: PathBuf,
    /// The shot table is in packed binary form.
    #[arg(long)]
    binary: bool,
    /// Write per-shot predictions here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Patch family: memory or xx.
    #[arg(long, default_value = "memory")]
    layout: LayoutKind,
    /// Method.
    #[arg(long, default_value = "zx-same")]
    method: Method,
    /// Distances (repeatable).
    #[arg(short = 'd', default_values_t = [3usize])]
    d: Vec<usize>,
    /// Fixed rounds (default: d).
    #[arg(long)]
    rounds: Option<usize>,
    /// Readout basis.
    #[arg(long, default_value = "z")]
    basis: Basis,
    /// Physical error rates (repeatable).
    #[arg(short = 'p', default_values_t = [1e-3])]
    p: Vec<f64>,
    /// Minimum shots per cell.
    #[arg(long, default_value_t = 100_000)]
    shots: usize,
    /// Logical errors to collect per cell.
    #[arg(long, default_value_t = 300)]
    max_errors: usize,
    /// Hard shot cap per cell.
    #[arg(long, default_value_t = 100_000_000)]
    max_shots: usize,
    /// Per-cell wall-time cap in seconds (makes results machine-dependent).
    #[arg(long)]
    time_budget: Option<f64>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// gates-only or all-ops.
    #[arg(long, default_value = "all-ops")]
    noise: NoisePlacement,
    /// CSV results file; an existing file with the same header is resumed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Console output: csv (default) or json.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

enum Failure {
    Usage(String),
    Validation(String),
    Mismatch(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("{WORKERS_ENV} must be a positive integer, got '{v}'");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = execute(cli.command, &mut out).and_then(|()| out.flush().map_err(io_err));
    exit_code(result)
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Check(a) => cmd_check(a, stdout),
        Command::Distance(a) => cmd_distance(a, stdout),
        Command::Sample(a) => cmd_sample(a, stdout),
        Command::Decode(a) => cmd_decode(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

fn exit_code(result: Result<(), Failure>) -> ExitCode {
    let Err(failure) = result else { return ExitCode::SUCCESS };
    match &failure {
        Failure::Usage(m) => eprintln!("error: {m}"),
        Failure::Validation(m) => eprintln!("validation failed: {m}"),
        Failure::Mismatch(m) => eprintln!("{m}"),
    }
    ExitCode::from(failure.code())
}

fn output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(stdout),
    })
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Usage(format!("i/o: {e}"))
}

fn cmd_gen(a: GenArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = match a.format {
        Format::Stim => a.circuit.circuit().map_err(Failure::Validation)?.to_string(),
        Format::Json => {
            let c = &a.circuit;
            let layout = Layout::build(c.layout, c.d).map_err(|e| Failure::Validation(e.to_string()))?;
            generate(&layout, c.method, c.rounds.unwrap_or(c.d), c.basis)
                .map_err(|e| Failure::Validation(e.to_string()))?
                .to_json()
        }
        Format::Csv => return Err(Failure::Usage("gen supports --format stim or json".into())),
    };
    let mut out = output(&a.out, stdout)?;
    out.write_all(text.as_bytes()).map_err(io_err)?;
    if !text.ends_with('\n') {
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn cmd_check(a: CircuitArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let circuit = a.circuit().map_err(Failure::Validation)?;
    let report = check_determinism(&circuit.without_noise());
    writeln!(
        stdout,
        "{}",
        serde_json::json!({
            "deterministic": report.ok(),
            "detectors": circuit.num_detectors(),
            "observables": circuit.num_observables(),
            "random_detectors": report.random_detectors,
            "flipped_detectors": report.flipped_detectors,
            "random_observables": report.random_observables,
        })
    )
    .map_err(io_err)?;
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Validation("circuit has non-deterministic detectors or observables".into()))
    }
}

fn cmd_distance(a: DistanceArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let layouts = match a.layout {
        Some(l) => vec![l],
        None => vec![LayoutKind::Memory, LayoutKind::XxMerged],
    };
    let methods: Vec<Method> = a.method.map_or(Method::ALL.to_vec(), |m| vec![m]);
    let mut cells = Vec::new();
    for layout in layouts {
        let ds = if !a.d.is_empty() {
            a.d.clone()
        } else if layout == LayoutKind::Memory {
            vec![3, 5, 7]
        } else {
            vec![3, 5]
        };
        let bases = match (a.basis, layout) {
            (Some(b), _) => vec![b],
            (None, LayoutKind::Memory) => vec![Basis::Z],
            (None, LayoutKind::XxMerged) => vec![Basis::X, Basis::Z],
        };
        for &basis in &bases {
            for &method in &methods {
                for &d in &ds {
                    cells.push(DistanceCell { layout, method, d, basis });
                }
            }
        }
    }
    let rows = distance_table(&cells);
    match a.format {
        Format::Stim => write!(stdout, "{}", render_distance_table(&rows)).map_err(io_err)?,
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&rows).expect("rows serialize")).map_err(io_err)?,
        Format::Csv => {
            writeln!(stdout, "layout,method,d,basis,found,expected,ok").map_err(io_err)?;
            for r in &rows {
                writeln!(
                    stdout,
                    "{},{},{},{},{},{},{}",
                    r.layout,
                    r.method,
                    r.d,
                    r.basis,
                    r.found.map_or(String::new(), |f| f.to_string()),
                    r.expected,
                    r.ok()
                )
                .map_err(io_err)?;
            }
        }
    }
    if let Some(r) = rows.iter().find(|r| r.diagnostic.is_some()) {
        return Err(Failure::Validation(format!(
            "{} {} d={} {}: {}",
            r.layout,
            r.method,
            r.d,
            r.basis,
            r.diagnostic.as_deref().unwrap_or_default()
        )));
    }
    let bad = rows.iter().filter(|r| !r.ok()).count();
    if bad > 0 {
        return Err(Failure::Mismatch(format!("{bad} cell(s) differ from the expected fault distance")));
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let circuit = a.circuit.circuit().map_err(Failure::Validation)?;
    let table = frame_sample(&circuit, a.shots, a.seed).map_err(|e| Failure::Validation(e.to_string()))?;
    let mut out = output(&a.out, stdout)?;
    if a.binary {
        table.write_binary(&mut out).map_err(io_err)?;
    } else {
        out.write_all(table.to_text().as_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn cmd_decode(a: DecodeArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let circuit = a.circuit.circuit().map_err(Failure::Validation)?;
    let dem = build_dem(&circuit).map_err(|e| Failure::Validation(e.to_string()))?;
    let file = File::open(&a.shots_file)
        .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", a.shots_file.display())))?;
    let table = if a.binary {
        ShotTable::read_binary(BufReader::new(file))
    } else {
        let text = std::io::read_to_string(file).map_err(io_err)?;
        ShotTable::from_text(&text, dem.num_observables)
    }
    .map_err(|e| Failure::Validation(e.to_string()))?;
    let matcher = Matcher::new(dem.to_graph(None).map_err(|e| Failure::Validation(e.to_string()))?);
    let result = matcher.decode_batch(&table).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(path) = &a.out {
        std::fs::write(path, result.predictions_text(dem.num_observables)).map_err(io_err)?;
    }
    writeln!(stdout, "{}", result.summary_json()).map_err(io_err)?;
    Ok(())
}

fn cmd_bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    if a.format == Format::Stim {
        return Err(Failure::Usage("bench supports --format csv or json".into()));
    }
    let mut config = ExperimentConfig::new(a.layout, a.method, a.d, a.basis, a.p);
    config.rounds = a.rounds;
    config.min_shots = a.shots;
    config.max_errors = a.max_errors;
    config.max_shots = a.max_shots;
    config.seed = a.seed;
    config.noise = a.noise;
    config.time_budget_s = a.time_budget;
    config.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    let rows = run(&config, a.out.as_deref()).map_err(|e| Failure::Validation(e.to_string()))?;
    match a.format {
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&rows).expect("rows serialize")).map_err(io_err)?,
        _ => {
            writeln!(stdout, "{CSV_COLUMNS}").map_err(io_err)?;
            for r in &rows {
                writeln!(stdout, "{}", r.to_csv()).map_err(io_err)?;
            }
        }
    }
    for d in config.distances.iter() {
        let at_d: Vec<_> = rows.iter().filter(|r| r.cell.d == *d).cloned().collect();
        if let Ok(fit) = fit_slope(&at_d) {
            eprintln!("d={d}: slope {:.2} ± {:.2} (95%)", fit.slope, fit.ci95);
        }
    }
    if config.distances.len() >= 2 {
        if let Ok(t) = estimate_threshold(&rows) {
            eprintln!("threshold: {t}");
        }
    }
    if let Some(r) = rows.iter().find(|r| !r.is_ok()) {
        return Err(Failure::Validation(format!("d={} p={}: {}", r.cell.d, r.cell.p, r.status)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Runs the tool in-process: exit code and captured stdout.
    fn surfsched(args: &[&str]) -> (u8, String) {
        let cli = match Cli::try_parse_from(std::iter::once("surfsched").chain(args.iter().copied())) {
            Ok(cli) => cli,
            Err(e) => return (if e.use_stderr() { EXIT_USAGE } else { 0 }, String::new()),
        };
        let mut out = Vec::new();
        let code = execute(cli.command, &mut out).err().map_or(0, |f| f.code());
        (code, String::from_utf8(out).unwrap())
    }

    fn temp(name: &str) -> PathBuf {
        let p = std::env::temp_dir().join(format!("surfsched-cli-{}-{name}", std::process::id()));
        let _ = std::fs::remove_file(&p);
        p
    }

    #[test]
    fn gen_emits_parseable_circuits_and_plans() {
        let (code, out) = surfsched(&["gen", "-d", "3", "--method", "nz", "--rounds", "2"]);
        assert_eq!(code, 0);
        let c = surfsched::circuit::Circuit::parse(&out).unwrap();
        assert_eq!(c.num_detectors(), 4 + 8 + 4);
        let (code, out) = surfsched(&["gen", "--format", "json", "--layout", "xx", "--method", "zx-cross"]);
        assert_eq!(code, 0);
        let plan: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(plan["rounds"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn check_reports_determinism() {
        let (code, out) = surfsched(&["check", "--method", "alternating", "--basis", "x"]);
        assert_eq!(code, 0);
        let report: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
        assert_eq!(report["deterministic"], true);
    }

    #[test]
    fn sample_then_decode() {
        let shots = temp("shots.bin");
        let preds = temp("preds.txt");
        let common = ["-d", "3", "--method", "zx-same", "-p", "0.005"];
        let mut args = vec!["sample", "--shots", "2000", "--seed", "4", "--binary", "--out", shots.to_str().unwrap()];
        args.extend(common);
        assert_eq!(surfsched(&args).0, 0);
        let mut args = vec!["decode", "--binary", "--shots-file", shots.to_str().unwrap(), "--out", preds.to_str().unwrap()];
        args.extend(common);
        let (code, out) = surfsched(&args);
        assert_eq!(code, 0);
        let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(summary["shots"], 2000);
        let errors = summary["errors"].as_u64().unwrap();
        assert!(errors > 0 && errors < 200, "{errors}");
        assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 2000);
        // Same seed, same bytes.
        let again = temp("shots2.bin");
        let mut args = vec!["sample", "--shots", "2000", "--seed", "4", "--binary", "--out", again.to_str().unwrap()];
        args.extend(common);
        assert_eq!(surfsched(&args).0, 0);
        assert_eq!(std::fs::read(&shots).unwrap(), std::fs::read(&again).unwrap());
        for p in [shots, preds, again] {
            let _ = std::fs::remove_file(p);
        }
    }

    #[test]
    fn bench_writes_and_resumes_csv() {
        let out = temp("bench.csv");
        let args = [
            "bench", "-d", "3", "-p", "0.004", "-p", "0.008", "--shots", "2000", "--max-errors", "10", "--max-shots",
            "20000", "--seed", "3", "--out", out.to_str().unwrap(),
        ];
        let first = surfsched(&args);
        assert_eq!(first.0, 0);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 4);
        let second = surfsched(&args);
        assert_eq!(second.0, 0);
        assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
        assert_eq!(first.1, second.1);
        let mut other = args.to_vec();
        other[12] = "4";
        assert_eq!(surfsched(&other).0, 2, "different config against the same file");
        let _ = std::fs::remove_file(out);
    }

    #[test]
    fn distance_table_for_one_cell() {
        let (code, out) = surfsched(&["distance", "--layout", "memory", "--method", "alternating", "-d", "3", "--format", "json"]);
        assert_eq!(code, 0);
        let rows: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(rows[0]["found"], 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(surfsched(&["gen", "--bogus"]).0, 1);
        assert_eq!(surfsched(&["gen", "--format", "csv"]).0, 1);
        assert_eq!(surfsched(&["bench", "--format", "stim"]).0, 1);
        assert_eq!(surfsched(&["gen", "-d", "4"]).0, 2);
        assert_eq!(surfsched(&["gen", "-p", "1.5"]).0, 2);
        assert_eq!(surfsched(&["bench", "-p", "0.7"]).0, 2);
        // An unreadable path is a bad argument.
        assert_eq!(surfsched(&["decode", "--shots-file", "/nonexistent/file"]).0, 1);
        assert_eq!(surfsched(&["--help"]).0, 0);
    }
}
