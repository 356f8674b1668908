//! Experiment orchestration and statistics.
//!
//! A cell is one (layout, method, d, rounds, basis, p, noise) combination.
//! [`run`] takes each cell through generate → lower → determinism check →
//! error model → sampling → decoding, appending one CSV row per finished
//! cell. Sampling proceeds in fixed-size chunks whose random streams depend
//! only on the cell seed and the chunk index, so the stopping point and every
//! count are reproducible regardless of worker count.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{lower, Circuit, NoisePlacement};
use crate::dem::{build_dem, is_undetectable_logical, shortest_graphlike_error, Dem, ErrorMechanism, Signature};
use crate::layout::{Basis, Layout, LayoutKind};
use crate::matcher::{binomial_std_err, Matcher};
use crate::pauli::{check_determinism, FrameProgram};
use crate::schedule::{generate, Method};

/// Shots sampled between stopping-rule checks.
pub const CHUNK_SHOTS: usize = 1 << 14;

/// Harness errors.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Configuration violates its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Reading or writing the results file failed.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    /// The results file exists but was written for a different configuration.
    #[error("results file {0} belongs to a different configuration")]
    ConfigMismatch(String),
    /// A row could not be parsed.
    #[error("malformed results row: {0}")]
    Format(String),
}

/// One experiment sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Patch family.
    pub layout: LayoutKind,
    /// CNOT-ordering method.
    pub method: Method,
    /// Code distances (odd, ≥ 3).
    pub distances: Vec<usize>,
    /// Fixed number of rounds; `None` means rounds = d.
    pub rounds: Option<usize>,
    /// Readout basis of the logical observable.
    pub basis: Basis,
    /// Physical error rates.
    pub ps: Vec<f64>,
    /// Minimum shots per cell.
    pub min_shots: usize,
    /// Logical errors to collect per cell before stopping.
    pub max_errors: usize,
    /// Hard cap on shots per cell.
    pub max_shots: usize,
    /// Master seed.
    pub seed: u64,
    /// Noise placement convention.
    pub noise: NoisePlacement,
    /// Optional per-cell wall-time cap in seconds. Hitting it makes the
    /// result depend on machine speed.
    pub time_budget_s: Option<f64>,
}

impl ExperimentConfig {
    /// A config with the default shot policy: at least 10⁵ shots and 300
    /// logical errors, capped at 10⁸ shots.
    pub fn new(layout: LayoutKind, method: Method, distances: Vec<usize>, basis: Basis, ps: Vec<f64>) -> Self {
        ExperimentConfig {
            layout,
            method,
            distances,
            rounds: None,
            basis,
            ps,
            min_shots: 100_000,
            max_errors: 300,
            max_shots: 100_000_000,
            seed: 0,
            noise: NoisePlacement::AllOps,
            time_budget_s: None,
        }
    }

    /// Checks the invariants: odd d ≥ 3, p ∈ [0, 0.5), shots ≥ 1.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if let Some(&d) = self.distances.iter().find(|&&d| d < 3 || d % 2 == 0) {
            return bad(format!("distance {d} must be odd and at least 3"));
        }
        if let Some(&p) = self.ps.iter().find(|&&p| !(0.0..0.5).contains(&p)) {
            return bad(format!("physical error rate {p} outside [0, 0.5)"));
        }
        if self.rounds == Some(0) {
            return bad("rounds must be at least 1".into());
        }
        if self.min_shots == 0 || self.max_shots == 0 {
            return bad("shot counts must be at least 1".into());
        }
        Ok(())
    }

    /// Rounds used for distance `d`.
    pub fn rounds_for(&self, d: usize) -> usize {
        self.rounds.unwrap_or(d)
    }

    /// Cells in sweep order: distances outer, error rates inner.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &d in &self.distances {
            for &p in &self.ps {
                out.push(Cell {
                    layout: self.layout,
                    method: self.method,
                    d,
                    rounds: self.rounds_for(d),
                    basis: self.basis,
                    p,
                    noise: self.noise,
                });
            }
        }
        out
    }
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Patch family.
    pub layout: LayoutKind,
    /// CNOT-ordering method.
    pub method: Method,
    /// Code distance.
    pub d: usize,
    /// Syndrome-extraction rounds.
    pub rounds: usize,
    /// Readout basis.
    pub basis: Basis,
    /// Physical error rate.
    pub p: f64,
    /// Noise placement convention.
    pub noise: NoisePlacement,
}

impl Cell {
    /// Seed for this cell, derived from the master seed and the cell key.
    pub fn seed(&self, master: u64) -> u64 {
        let key = format!("{}|{}|{}|{}|{}|{:e}|{}", self.layout, self.method, self.d, self.rounds, self.basis, self.p, self.noise);
        let mut h = master ^ 0x9e37_79b9_7f4a_7c15;
        for b in key.bytes() {
            h = splitmix(h ^ b as u64);
        }
        h
    }

    /// The noisy circuit for this cell.
    pub fn circuit(&self) -> Result<Circuit, String> {
        let layout = Layout::build(self.layout, self.d).map_err(|e| e.to_string())?;
        let plan = generate(&layout, self.method, self.rounds, self.basis).map_err(|e| e.to_string())?;
        lower(&plan, self.p, self.noise).map_err(|e| e.to_string())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Result of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// The cell.
    pub cell: Cell,
    /// Seed the cell was sampled with.
    pub seed: u64,
    /// Shots taken.
    pub shots: usize,
    /// Shots whose decoded prediction was wrong.
    pub errors: usize,
    /// errors / shots.
    pub p_logical: f64,
    /// sqrt(p̂(1−p̂)/N).
    pub std_err: f64,
    /// Wall time spent on the cell. Not written to CSV, which must be
    /// byte-reproducible.
    pub wall_time: Duration,
    /// `ok`, or a diagnostic for a cell that could not be run.
    pub status: String,
}

impl ResultRow {
    fn failed(cell: Cell, seed: u64, reason: String, wall_time: Duration) -> ResultRow {
        ResultRow { cell, seed, shots: 0, errors: 0, p_logical: 0.0, std_err: 0.0, wall_time, status: reason }
    }

    /// True when the cell ran to completion.
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// CSV column names.
pub const CSV_COLUMNS: &str = "layout,method,d,rounds,basis,p,noise,seed,shots,errors,p_logical,std_err,status";

impl ResultRow {
    /// One CSV line (no trailing newline).
    pub fn to_csv(&self) -> String {
        let c = &self.cell;
        format!(
            "{},{},{},{},{},{:e},{},{},{},{},{:e},{:e},{}",
            c.layout,
            c.method,
            c.d,
            c.rounds,
            c.basis,
            c.p,
            c.noise,
            self.seed,
            self.shots,
            self.errors,
            self.p_logical,
            self.std_err,
            self.status.replace([',', '\n'], ";")
        )
    }

    /// Parses a line written by [`ResultRow::to_csv`].
    pub fn from_csv(line: &str) -> Result<ResultRow, HarnessError> {
        let f: Vec<&str> = line.splitn(13, ',').collect();
        let err = || HarnessError::Format(line.to_string());
        if f.len() != 13 {
            return Err(err());
        }
        let cell = Cell {
            layout: f[0].parse().map_err(|_| err())?,
            method: f[1].parse().map_err(|_| err())?,
            d: f[2].parse().map_err(|_| err())?,
            rounds: f[3].parse().map_err(|_| err())?,
            basis: f[4].parse().map_err(|_| err())?,
            p: f[5].parse().map_err(|_| err())?,
            noise: f[6].parse().map_err(|_| err())?,
        };
        Ok(ResultRow {
            cell,
            seed: f[7].parse().map_err(|_| err())?,
            shots: f[8].parse().map_err(|_| err())?,
            errors: f[9].parse().map_err(|_| err())?,
            p_logical: f[10].parse().map_err(|_| err())?,
            std_err: f[11].parse().map_err(|_| err())?,
            wall_time: Duration::ZERO,
            status: f[12].to_string(),
        })
    }
}

/// Runs one cell with the config's shot policy.
pub fn run_cell(cell: Cell, config: &ExperimentConfig) -> ResultRow {
    let start = Instant::now();
    let seed = cell.seed(config.seed);
    let fail = |reason: String| ResultRow::failed(cell, seed, reason, start.elapsed());
    let circuit = match cell.circuit() {
        Ok(c) => c,
        Err(e) => return fail(format!("generation failed: {e}")),
    };
    let report = check_determinism(&circuit.without_noise());
    if !report.ok() {
        return fail(format!("not deterministic: {report:?}"));
    }
    let dem = match build_dem(&circuit) {
        Ok(d) => d,
        Err(e) => return fail(format!("error model failed: {e}")),
    };
    let graph = match dem.to_graph(None) {
        Ok(g) => g,
        Err(e) => return fail(format!("decoding graph failed: {e}")),
    };
    let matcher = Matcher::new(graph);
    let program = match FrameProgram::new(&circuit) {
        Ok(p) => p,
        Err(e) => return fail(format!("sampler failed: {e}")),
    };
    let budget = config.time_budget_s.map(Duration::from_secs_f64);
    let (mut shots, mut errors) = (0usize, 0usize);
    let mut chunk = 0u64;
    while shots < config.max_shots && (shots < config.min_shots || errors < config.max_errors) {
        if budget.is_some_and(|b| start.elapsed() >= b) {
            break;
        }
        let n = CHUNK_SHOTS.min(config.max_shots - shots);
        let table = program.sample(n, seed, chunk * (CHUNK_SHOTS / 64) as u64);
        match matcher.decode_batch(&table) {
            Ok(r) => errors += r.errors,
            Err(e) => return fail(format!("decoding failed: {e}")),
        }
        shots += n;
        chunk += 1;
    }
    let p_logical = if shots == 0 { 0.0 } else { errors as f64 / shots as f64 };
    ResultRow {
        cell,
        seed,
        shots,
        errors,
        p_logical,
        std_err: binomial_std_err(errors, shots),
        wall_time: start.elapsed(),
        status: "ok".into(),
    }
}

/// Runs every cell of `config`. With `out`, rows are appended to that CSV
/// file as cells finish; cells already present in the file (same config)
/// are read back instead of re-run, so an interrupted sweep resumes.
pub fn run(config: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<ResultRow>, HarnessError> {
    config.validate()?;
    let header = serde_json::to_string(config).expect("config serializes");
    let mut done: Vec<ResultRow> = Vec::new();
    let mut writer = match out {
        None => None,
        Some(path) => {
            if path.exists() && std::fs::metadata(path)?.len() > 0 {
                let mut lines = BufReader::new(File::open(path)?).lines();
                let first = lines.next().transpose()?.unwrap_or_default();
                if first != header {
                    return Err(HarnessError::ConfigMismatch(path.display().to_string()));
                }
                for line in lines {
                    let line = line?;
                    if line.is_empty() || line == CSV_COLUMNS {
                        continue;
                    }
                    done.push(ResultRow::from_csv(&line)?);
                }
                Some(OpenOptions::new().append(true).open(path)?)
            } else {
                let mut f = File::create(path)?;
                writeln!(f, "{header}\n{CSV_COLUMNS}")?;
                Some(f)
            }
        }
    };
    let mut rows = Vec::new();
    for cell in config.cells() {
        if let Some(prev) = done.iter().find(|r| r.cell == cell) {
            rows.push(prev.clone());
            continue;
        }
        let row = run_cell(cell, config);
        if let Some(f) = writer.as_mut() {
            // One write per row keeps appends whole.
            f.write_all(format!("{}\n", row.to_csv()).as_bytes())?;
            f.flush()?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Least-squares fit of log p_logical against log p.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    /// Fitted exponent.
    pub slope: f64,
    /// Fitted log-prefactor.
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_std_err: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub ci95: f64,
    /// Points used.
    pub points: usize,
}

/// Why a fit or crossing could not be computed.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StatsError {
    /// Not enough usable points.
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

/// Weighted log-log slope. Each point is weighted by its error count, the
/// inverse variance of log p̂. Requires ≥ 3 distinct p with ≥ 100 errors each.
pub fn fit_slope(rows: &[ResultRow]) -> Result<SlopeFit, StatsError> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.is_ok() && r.errors >= 100 && r.cell.p > 0.0)
        .map(|r| (r.cell.p.ln(), r.p_logical.ln(), inverse_log_variance(r.errors, r.shots)))
        .collect();
    fit_points(&pts)
}

fn inverse_log_variance(errors: usize, shots: usize) -> f64 {
    // var(ln p̂) ≈ (1 − p̂)/(N p̂); exact rows (N = ∞ sentinel) get unit weight.
    let p = errors as f64 / shots as f64;
    if p >= 1.0 {
        return 1.0;
    }
    (shots as f64 * p) / (1.0 - p)
}

/// Weighted least squares on (x, y, weight) points.
pub fn fit_points(pts: &[(f64, f64, f64)]) -> Result<SlopeFit, StatsError> {
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(StatsError::Insufficient(format!("{} distinct error rates with ≥ 100 errors; need 3", xs.len())));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_std_err = (1.0 / sxx).sqrt();
    Ok(SlopeFit { slope, intercept, slope_std_err, ci95: 1.96 * slope_std_err, points: pts.len() })
}

/// Crossing of the logical-error curves of two distances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Threshold {
    /// Curves cross at `p` (log-log interpolation) with propagated 1σ
    /// uncertainty `sigma` on p.
    Crossing {
        /// Smaller distance.
        d_small: usize,
        /// Larger distance.
        d_large: usize,
        /// Crossing error rate.
        p: f64,
        /// 1σ uncertainty of `p`.
        sigma: f64,
    },
    /// No sign change of the curve difference over the common p range.
    NoneInRange,
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Crossing { d_small, d_large, p, sigma } => {
                write!(f, "d={d_small}/d={d_large} crossing at p = {p:.3e} ± {sigma:.1e}")
            }
            Threshold::NoneInRange => f.write_str("none in range"),
        }
    }
}

/// Finds where the curve of the second-smallest distance crosses that of the
/// smallest one, scanning the shared error rates upward.
pub fn estimate_threshold(rows: &[ResultRow]) -> Result<Threshold, StatsError> {
    let mut ds: Vec<usize> = rows.iter().filter(|r| r.is_ok()).map(|r| r.cell.d).collect();
    ds.sort();
    ds.dedup();
    if ds.len() < 2 {
        return Err(StatsError::Insufficient("need at least two distances".into()));
    }
    let (d1, d2) = (ds[0], ds[1]);
    let usable = |d: usize| -> Vec<&ResultRow> {
        rows.iter().filter(|r| r.is_ok() && r.cell.d == d && r.errors > 0 && r.cell.p > 0.0).collect()
    };
    let (small, large) = (usable(d1), usable(d2));
    // (ln p, ln pL(d2) − ln pL(d1), σ of that difference)
    let mut diffs: Vec<(f64, f64, f64)> = Vec::new();
    for a in &small {
        if let Some(b) = large.iter().find(|b| b.cell.p == a.cell.p) {
            let var = |r: &ResultRow| (1.0 - r.p_logical) / r.errors as f64;
            diffs.push((a.cell.p.ln(), b.p_logical.ln() - a.p_logical.ln(), (var(a) + var(b)).sqrt()));
        }
    }
    if diffs.len() < 2 {
        return Err(StatsError::Insufficient("fewer than two shared error rates".into()));
    }
    diffs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in diffs.windows(2) {
        let ((x0, y0, s0), (x1, y1, s1)) = (w[0], w[1]);
        if y0 < 0.0 && y1 >= 0.0 {
            let t = -y0 / (y1 - y0);
            let x = x0 + t * (x1 - x0);
            // Uncertainty of the root of the interpolating line.
            let slope = (y1 - y0) / (x1 - x0);
            let sy = ((1.0 - t).powi(2) * s0 * s0 + t * t * s1 * s1).sqrt();
            let sx = sy / slope.abs();
            let p = x.exp();
            return Ok(Threshold::Crossing { d_small: d1, d_large: d2, p, sigma: p * sx });
        }
    }
    Ok(Threshold::NoneInRange)
}

/// Expected value of a fault-distance cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Expectation {
    /// Must equal this.
    Exact(usize),
    /// Must be strictly below this.
    Below(usize),
    /// No expectation; value recorded only.
    Recorded,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Exact(v) => write!(f, "{v}"),
            Expectation::Below(v) => write!(f, "<{v}"),
            Expectation::Recorded => f.write_str("-"),
        }
    }
}

impl Expectation {
    /// Whether `found` meets the expectation.
    pub fn accepts(&self, found: Option<usize>) -> bool {
        match (self, found) {
            (Expectation::Recorded, _) => true,
            (Expectation::Exact(v), Some(f)) => f == *v,
            (Expectation::Below(v), Some(f)) => f < *v,
            _ => false,
        }
    }
}

/// Expected circuit fault distance. The memory table covers the Z basis;
/// the merged-layout table covers both bases (the X column with the X-basis
/// observable, the Z column with the Z-basis one).
pub fn expected_distance(layout: LayoutKind, method: Method, d: usize, basis: Basis) -> Expectation {
    use Expectation::*;
    match (layout, basis, method) {
        (LayoutKind::Memory, Basis::Z, Method::NzHookAvoiding | Method::ZxSame | Method::ZxCross) => Exact(d),
        (LayoutKind::Memory, Basis::Z, Method::Alternating) => Exact(d - 1),
        (LayoutKind::Memory, Basis::Z, Method::NzHookProne) => Below(d - 1),
        (LayoutKind::Memory, Basis::X, _) => Recorded,
        (LayoutKind::XxMerged, _, Method::NzHookProne) => Recorded,
        (LayoutKind::XxMerged, Basis::X, Method::NzHookAvoiding) => Below(d - 1),
        (LayoutKind::XxMerged, Basis::X, Method::Alternating) => Exact(d - 1),
        (LayoutKind::XxMerged, Basis::X, Method::ZxSame | Method::ZxCross) => Exact(d),
        (LayoutKind::XxMerged, Basis::Z, _) => Exact(d),
    }
}

/// One fault-distance table cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceRow {
    /// Patch family.
    pub layout: LayoutKind,
    /// Method.
    pub method: Method,
    /// Code distance.
    pub d: usize,
    /// Observable basis.
    pub basis: Basis,
    /// Shortest graphlike logical error, if any.
    pub found: Option<usize>,
    /// Indices of the witness mechanisms in the graphlike model.
    pub witness: Vec<usize>,
    /// Expected value.
    pub expected: Expectation,
    /// Failure diagnostic, if the cell could not be evaluated.
    pub diagnostic: Option<String>,
}

impl DistanceRow {
    /// True when evaluated and matching the expectation.
    pub fn ok(&self) -> bool {
        self.diagnostic.is_none() && self.expected.accepts(self.found)
    }
}

/// A fault-distance cell to evaluate (rounds = d, noise p = 10⁻³ all-ops).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceCell {
    /// Patch family.
    pub layout: LayoutKind,
    /// Method.
    pub method: Method,
    /// Code distance.
    pub d: usize,
    /// Observable basis.
    pub basis: Basis,
}

impl DistanceCell {
    /// Noisy circuit used for the distance search. The distance is a count
    /// of mechanisms, so the value of p only needs to be nonzero.
    pub fn circuit(&self) -> Result<Circuit, String> {
        Cell { layout: self.layout, method: self.method, d: self.d, rounds: self.d, basis: self.basis, p: 1e-3, noise: NoisePlacement::AllOps }
            .circuit()
    }
}

/// Evaluates one cell of a fault-distance table.
pub fn distance_row(cell: DistanceCell) -> DistanceRow {
    let mut row = DistanceRow {
        layout: cell.layout,
        method: cell.method,
        d: cell.d,
        basis: cell.basis,
        found: None,
        witness: Vec::new(),
        expected: expected_distance(cell.layout, cell.method, cell.d, cell.basis),
        diagnostic: None,
    };
    let result = cell
        .circuit()
        .and_then(|c| build_dem(&c).map_err(|e| e.to_string()))
        .and_then(|dem| shortest_graphlike_error(&dem.mechanisms, dem.num_detectors).map_err(|e| e.to_string()));
    match result {
        Ok(Some((w, witness))) => {
            row.found = Some(w);
            row.witness = witness;
        }
        Ok(None) => row.diagnostic = Some("no undetectable logical error found".into()),
        Err(e) => row.diagnostic = Some(e),
    }
    row
}

/// Evaluates every cell (in parallel) in the given order.
pub fn distance_table(cells: &[DistanceCell]) -> Vec<DistanceRow> {
    use rayon::prelude::*;
    cells.par_iter().map(|&c| distance_row(c)).collect()
}

/// Text rendering of a distance table.
pub fn render_distance_table(rows: &[DistanceRow]) -> String {
    let mut out = String::from("layout  method          d  basis  found  expected  status\n");
    for r in rows {
        let found = r.found.map_or("-".to_string(), |f| f.to_string());
        let status = match (&r.diagnostic, r.ok()) {
            (Some(e), _) => format!("ERROR {e}"),
            (None, true) => "ok".into(),
            (None, false) => "MISMATCH".into(),
        };
        out.push_str(&format!(
            "{:<7} {:<15} {:<2} {:<6} {:<6} {:<9} {}\n",
            r.layout.to_string(),
            r.method.to_string(),
            r.d,
            r.basis.to_string(),
            found,
            r.expected.to_string(),
            status
        ));
    }
    out
}

/// Outcome of replaying a fault-distance witness through the decoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessCheck {
    /// Witness size w.
    pub weight: usize,
    /// The whole witness leaves no defects and flips an observable.
    pub undetectable_logical: bool,
    /// Decoding the whole witness gives a wrong prediction.
    pub full_fails: bool,
    /// Size of the subsets tried, ⌊(w−1)/2⌋.
    pub subset_size: usize,
    /// Number of subsets tried.
    pub subsets: usize,
    /// Subsets whose decoding was wrong.
    pub subset_failures: usize,
    /// Mechanisms replayed as circuit faults (the rest are replayed from
    /// their error-model signatures).
    pub circuit_level: usize,
}

impl WitnessCheck {
    /// The full witness is a logical error and every small subset is corrected.
    pub fn ok(&self) -> bool {
        self.undetectable_logical && self.full_fails && self.subset_failures == 0
    }
}

/// Replays `witness` (graphlike mechanism indices) through `matcher`.
///
/// Each mechanism is replayed as one of its own circuit faults whenever one
/// reproduces its signature exactly when injected into `circuit`; otherwise
/// its error-model signature is used directly.
pub fn check_witness(circuit: &Circuit, dem: &Dem, matcher: &Matcher, witness: &[usize]) -> WitnessCheck {
    let program = FrameProgram::new(circuit).ok();
    let mut circuit_level = 0;
    let effects: Vec<Signature> = witness
        .iter()
        .map(|&i| {
            let m: &ErrorMechanism = &dem.mechanisms[i];
            let sig = m.signature();
            if let Some(program) = &program {
                for f in &m.provenance {
                    let (dets, obs) = program.inject(std::slice::from_ref(f));
                    if dets == sig.detectors && obs == sig.observables {
                        circuit_level += 1;
                        return Signature { detectors: dets, observables: obs };
                    }
                }
            }
            sig
        })
        .collect();
    let combined = |idx: &[usize]| idx.iter().fold(Signature::default(), |acc, &i| acc.xor(&effects[i]));
    let decode_wrong = |sig: &Signature| match matcher.decode(&sig.detectors) {
        Ok(c) => c.observables != sig.observables,
        Err(_) => true,
    };
    let all: Vec<usize> = (0..witness.len()).collect();
    let full = combined(&all);
    let w = witness.len();
    let t = w.saturating_sub(1) / 2;
    let mut subsets = 0;
    let mut subset_failures = 0;
    for_each_subset(w, t, &mut |s| {
        subsets += 1;
        if decode_wrong(&combined(s)) {
            subset_failures += 1;
        }
    });
    WitnessCheck {
        weight: w,
        undetectable_logical: is_undetectable_logical(&dem.mechanisms, witness),
        full_fails: decode_wrong(&full),
        subset_size: t,
        subsets,
        subset_failures,
        circuit_level,
    }
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}
