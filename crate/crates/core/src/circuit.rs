//! Flat stabilizer-circuit representation, noise insertion and text I/O.
//!
//! The text form follows the widely used stabilizer-circuit file grammar for
//! the subset of instructions needed here, so generated circuits can be fed
//! to external simulators and decoders unchanged:
//!
//! ```text
//! QUBIT_COORDS(0, 0) 0
//! R 0 1
//! TICK
//! H 0
//! DEPOLARIZE1(0.001) 0
//! TICK
//! CX 0 1
//! DEPOLARIZE2(0.001) 0 1
//! TICK
//! M 0 1
//! DETECTOR(0, 0, 0) rec[-1] rec[-2]
//! OBSERVABLE_INCLUDE(0) rec[-1]
//! ```

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

pub use crate::schedule::Gate;
use crate::schedule::SchedulePlan;

/// Errors from lowering or validating a circuit.
#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    /// Physical error probability outside `[0, 1)`.
    #[error("error probability {0} is outside [0, 1)")]
    BadProbability(f64),
    /// A record reference points before the first measurement or is not negative.
    #[error("instruction {index}: record offset rec[{offset}] does not resolve (only {available} measurements so far)")]
    BadRecord {
        /// Instruction index.
        index: usize,
        /// The offending offset.
        offset: i64,
        /// Measurements available at that point.
        available: usize,
    },
    /// A two-qubit instruction has an odd number of targets, or repeats a qubit in a pair.
    #[error("instruction {0}: two-qubit targets must come in distinct pairs")]
    BadPairs(usize),
    /// A noise channel has probability outside `(0, 1)`.
    #[error("instruction {0}: channel probability must lie in (0, 1)")]
    BadChannel(usize),
    /// A qubit is used twice within one TICK-delimited layer.
    #[error("instruction {index}: qubit {qubit} is used twice in the same layer")]
    QubitReuse {
        /// Instruction index.
        index: usize,
        /// The reused qubit.
        qubit: u32,
    },
}

/// Parse failure with a 1-based source location.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    /// 1-based line.
    pub line: usize,
    /// 1-based column.
    pub column: usize,
    /// Description.
    pub message: String,
}

/// One circuit instruction.
#[derive(Clone, Debug, PartialEq)]
pub enum Instruction {
    /// A Clifford gate, reset or measurement applied to every target (CX: pairs).
    Gate {
        /// Gate kind.
        gate: Gate,
        /// Qubit targets.
        targets: Vec<u32>,
    },
    /// Single-qubit depolarizing channel on each target.
    Depolarize1 {
        /// Total error probability.
        p: f64,
        /// Qubit targets.
        targets: Vec<u32>,
    },
    /// Two-qubit depolarizing channel on each target pair.
    Depolarize2 {
        /// Total error probability.
        p: f64,
        /// Qubit targets, in pairs.
        targets: Vec<u32>,
    },
    /// Layer separator.
    Tick,
    /// A detector: parity of the referenced records.
    Detector {
        /// Annotation coordinates.
        coords: Vec<f64>,
        /// Negative record offsets (−1 = most recent measurement).
        records: Vec<i64>,
    },
    /// Adds the referenced records to a logical observable.
    ObservableInclude {
        /// Observable index.
        index: u32,
        /// Negative record offsets.
        records: Vec<i64>,
    },
    /// Coordinate annotation of one qubit.
    QubitCoords {
        /// Qubit id.
        qubit: u32,
        /// Coordinates.
        coords: Vec<f64>,
    },
    /// Offsets subsequent detector coordinates.
    ShiftCoords(Vec<f64>),
}

impl Instruction {
    /// True for noise channels.
    pub fn is_noise(&self) -> bool {
        matches!(self, Instruction::Depolarize1 { .. } | Instruction::Depolarize2 { .. })
    }
}

/// Where depolarizing noise is inserted by [`lower`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NoisePlacement {
    /// Only after Hadamards and CNOTs.
    GatesOnly,
    /// Additionally after every reset and before every measurement.
    #[default]
    AllOps,
}

impl NoisePlacement {
    /// Command-line spelling.
    pub fn cli_name(&self) -> &'static str {
        match self {
            NoisePlacement::GatesOnly => "gates-only",
            NoisePlacement::AllOps => "all-ops",
        }
    }
}

impl fmt::Display for NoisePlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for NoisePlacement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gates-only" => Ok(NoisePlacement::GatesOnly),
            "all-ops" => Ok(NoisePlacement::AllOps),
            _ => Err(format!("unknown noise placement '{s}' (expected gates-only or all-ops)")),
        }
    }
}

/// An ordered list of instructions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Circuit {
    /// Instructions in program order.
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    /// Number of qubits (largest referenced id + 1).
    pub fn num_qubits(&self) -> usize {
        self.instructions
            .iter()
            .filter_map(|ins| match ins {
                Instruction::Gate { targets, .. }
                | Instruction::Depolarize1 { targets, .. }
                | Instruction::Depolarize2 { targets, .. } => targets.iter().max().copied(),
                Instruction::QubitCoords { qubit, .. } => Some(*qubit),
                _ => None,
            })
            .max()
            .map_or(0, |q| q as usize + 1)
    }

    /// Number of measurement records.
    pub fn num_measurements(&self) -> usize {
        self.instructions
            .iter()
            .map(|ins| match ins {
                Instruction::Gate { gate: Gate::M | Gate::MX, targets } => targets.len(),
                _ => 0,
            })
            .sum()
    }

    /// Number of detectors.
    pub fn num_detectors(&self) -> usize {
        self.instructions.iter().filter(|ins| matches!(ins, Instruction::Detector { .. })).count()
    }

    /// Number of observables (largest index + 1).
    pub fn num_observables(&self) -> usize {
        self.instructions
            .iter()
            .filter_map(|ins| match ins {
                Instruction::ObservableInclude { index, .. } => Some(*index as usize + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Number of CNOT pairs.
    pub fn num_cx_pairs(&self) -> usize {
        self.instructions
            .iter()
            .map(|ins| match ins {
                Instruction::Gate { gate: Gate::CX, targets } => targets.len() / 2,
                _ => 0,
            })
            .sum()
    }

    /// Absolute record indices of every detector, in detector order.
    pub fn detector_records(&self) -> Vec<Vec<u32>> {
        self.resolved().0
    }

    /// Absolute record indices of every observable (XOR of all includes).
    pub fn observable_records(&self) -> Vec<Vec<u32>> {
        self.resolved().1
    }

    /// Detector coordinates with SHIFT_COORDS applied.
    pub fn detector_coords(&self) -> Vec<Vec<f64>> {
        let mut shift: Vec<f64> = Vec::new();
        let mut out = Vec::new();
        for ins in &self.instructions {
            match ins {
                Instruction::ShiftCoords(s) => {
                    if shift.len() < s.len() {
                        shift.resize(s.len(), 0.0);
                    }
                    for (a, b) in shift.iter_mut().zip(s) {
                        *a += b;
                    }
                }
                Instruction::Detector { coords, .. } => {
                    out.push(coords.iter().enumerate().map(|(i, c)| c + shift.get(i).copied().unwrap_or(0.0)).collect())
                }
                _ => {}
            }
        }
        out
    }

    fn resolved(&self) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
        let mut measured: i64 = 0;
        let mut dets = Vec::new();
        let mut obs: Vec<Vec<u32>> = vec![Vec::new(); self.num_observables()];
        for ins in &self.instructions {
            match ins {
                Instruction::Gate { gate: Gate::M | Gate::MX, targets } => measured += targets.len() as i64,
                Instruction::Detector { records, .. } => {
                    dets.push(cancel_pairs(records.iter().map(|&o| (measured + o) as u32).collect()))
                }
                Instruction::ObservableInclude { index, records } => {
                    obs[*index as usize].extend(records.iter().map(|&o| (measured + o) as u32))
                }
                _ => {}
            }
        }
        (dets, obs.into_iter().map(cancel_pairs).collect())
    }

    /// Checks structural invariants: record offsets resolve, pair targets,
    /// channel probabilities, and no qubit reuse within a layer.
    pub fn validate(&self) -> Result<(), CircuitError> {
        let mut measured = 0usize;
        let mut layer: HashSet<u32> = HashSet::new();
        for (index, ins) in self.instructions.iter().enumerate() {
            match ins {
                Instruction::Gate { gate, targets } => {
                    if *gate == Gate::CX && (targets.len() % 2 != 0 || targets.chunks(2).any(|p| p[0] == p[1])) {
                        return Err(CircuitError::BadPairs(index));
                    }
                    for &q in targets {
                        if !layer.insert(q) {
                            return Err(CircuitError::QubitReuse { index, qubit: q });
                        }
                    }
                    if matches!(gate, Gate::M | Gate::MX) {
                        measured += targets.len();
                    }
                }
                Instruction::Depolarize1 { p, .. } | Instruction::Depolarize2 { p, .. } => {
                    if !(*p > 0.0 && *p < 1.0) {
                        return Err(CircuitError::BadChannel(index));
                    }
                    if let Instruction::Depolarize2 { targets, .. } = ins {
                        if targets.len() % 2 != 0 || targets.chunks(2).any(|p| p[0] == p[1]) {
                            return Err(CircuitError::BadPairs(index));
                        }
                    }
                }
                Instruction::Tick => layer.clear(),
                Instruction::Detector { records, .. } | Instruction::ObservableInclude { records, .. } => {
                    for &offset in records {
                        if offset >= 0 || (-offset) as usize > measured {
                            return Err(CircuitError::BadRecord { index, offset, available: measured });
                        }
                    }
                }
                Instruction::QubitCoords { .. } | Instruction::ShiftCoords(_) => {}
            }
        }
        Ok(())
    }

    /// A copy with every noise channel removed.
    pub fn without_noise(&self) -> Circuit {
        Circuit { instructions: self.instructions.iter().filter(|i| !i.is_noise()).cloned().collect() }
    }

    /// Parses circuit text.
    pub fn parse(text: &str) -> Result<Circuit, ParseError> {
        let mut instructions = Vec::new();
        for (li, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            instructions.push(parse_line(line, li + 1)?);
        }
        Ok(Circuit { instructions })
    }
}

/// Sorts records and drops those referenced an even number of times.
fn cancel_pairs(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    let mut out: Vec<u32> = Vec::with_capacity(v.len());
    for r in v {
        if out.last() == Some(&r) {
            out.pop();
        } else {
            out.push(r);
        }
    }
    out
}

fn fmt_args(args: &[f64]) -> String {
    args.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join(", ")
}

fn fmt_targets(out: &mut String, targets: &[u32]) {
    for t in targets {
        let _ = write!(out, " {t}");
    }
}

fn fmt_records(out: &mut String, records: &[i64]) {
    for r in records {
        let _ = write!(out, " rec[{r}]");
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for ins in &self.instructions {
            match ins {
                Instruction::Gate { gate, targets } => {
                    out.push_str(gate_name(*gate));
                    fmt_targets(&mut out, targets);
                }
                Instruction::Depolarize1 { p, targets } => {
                    let _ = write!(out, "DEPOLARIZE1({p})");
                    fmt_targets(&mut out, targets);
                }
                Instruction::Depolarize2 { p, targets } => {
                    let _ = write!(out, "DEPOLARIZE2({p})");
                    fmt_targets(&mut out, targets);
                }
                Instruction::Tick => out.push_str("TICK"),
                Instruction::Detector { coords, records } => {
                    out.push_str("DETECTOR");
                    if !coords.is_empty() {
                        let _ = write!(out, "({})", fmt_args(coords));
                    }
                    fmt_records(&mut out, records);
                }
                Instruction::ObservableInclude { index, records } => {
                    let _ = write!(out, "OBSERVABLE_INCLUDE({index})");
                    fmt_records(&mut out, records);
                }
                Instruction::QubitCoords { qubit, coords } => {
                    let _ = write!(out, "QUBIT_COORDS({}) {qubit}", fmt_args(coords));
                }
                Instruction::ShiftCoords(s) => {
                    let _ = write!(out, "SHIFT_COORDS({})", fmt_args(s));
                }
            }
            out.push('\n');
        }
        f.write_str(&out)
    }
}

fn gate_name(g: Gate) -> &'static str {
    match g {
        Gate::R => "R",
        Gate::RX => "RX",
        Gate::H => "H",
        Gate::CX => "CX",
        Gate::M => "M",
        Gate::MX => "MX",
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<Instruction, ParseError> {
    let err = |col: usize, msg: String| ParseError { line: lineno, column: col + 1, message: msg };
    let start = line.len() - line.trim_start().len();
    let body = line.trim_end();
    let name_end = body[start..].find(|c: char| c == '(' || c.is_whitespace()).map_or(body.len(), |i| start + i);
    let name = body[start..name_end].to_ascii_uppercase();
    let mut pos = name_end;
    let mut args: Vec<f64> = Vec::new();
    let mut has_args = false;
    if body[pos..].starts_with('(') {
        has_args = true;
        let close = body[pos..].find(')').map(|i| pos + i).ok_or_else(|| err(pos, "unclosed '('".into()))?;
        let inner = &body[pos + 1..close];
        let mut off = pos + 1;
        if !inner.trim().is_empty() {
            for piece in inner.split(',') {
                let v = piece
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| err(off + (piece.len() - piece.trim_start().len()), format!("bad argument '{}'", piece.trim())))?;
                args.push(v);
                off += piece.len() + 1;
            }
        }
        pos = close + 1;
    }
    // Targets.
    let mut qubits: Vec<u32> = Vec::new();
    let mut records: Vec<i64> = Vec::new();
    let rest = &body[pos..];
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return Err(err(pos, "expected whitespace before targets".into()));
    }
    let mut col = pos;
    for tok in rest.split(char::is_whitespace) {
        if tok.is_empty() {
            col += 1;
            continue;
        }
        if let Some(inner) = tok.strip_prefix("rec[").and_then(|t| t.strip_suffix(']')) {
            let v: i64 = inner.parse().map_err(|_| err(col, format!("bad record target '{tok}'")))?;
            if v >= 0 {
                return Err(err(col, format!("record offset must be negative, got {v}")));
            }
            records.push(v);
        } else {
            let v: u32 = tok.parse().map_err(|_| err(col, format!("bad target '{tok}'")))?;
            qubits.push(v);
        }
        col += tok.len() + 1;
    }
    let gate = match name.as_str() {
        "R" | "RZ" => Some(Gate::R),
        "RX" => Some(Gate::RX),
        "H" => Some(Gate::H),
        "CX" | "CNOT" | "ZCX" => Some(Gate::CX),
        "M" | "MZ" => Some(Gate::M),
        "MX" => Some(Gate::MX),
        _ => None,
    };
    let no_records = |records: &[i64]| {
        if records.is_empty() {
            Ok(())
        } else {
            Err(err(pos, format!("{name} does not take record targets")))
        }
    };
    let no_qubits = |qubits: &[u32]| {
        if qubits.is_empty() {
            Ok(())
        } else {
            Err(err(pos, format!("{name} takes only record targets")))
        }
    };
    if let Some(gate) = gate {
        no_records(&records)?;
        if has_args {
            return Err(err(name_end, format!("{name} takes no arguments")));
        }
        if gate == Gate::CX && !qubits.len().is_multiple_of(2) {
            return Err(err(pos, "CX needs an even number of targets".into()));
        }
        return Ok(Instruction::Gate { gate, targets: qubits });
    }
    let single_arg = |args: &[f64]| -> Result<f64, ParseError> {
        match args {
            [p] => Ok(*p),
            _ => Err(err(name_end, format!("{name} takes exactly one argument"))),
        }
    };
    match name.as_str() {
        "TICK" => {
            no_records(&records)?;
            no_qubits(&qubits)?;
            Ok(Instruction::Tick)
        }
        "DEPOLARIZE1" => {
            no_records(&records)?;
            Ok(Instruction::Depolarize1 { p: single_arg(&args)?, targets: qubits })
        }
        "DEPOLARIZE2" => {
            no_records(&records)?;
            if !qubits.len().is_multiple_of(2) {
                return Err(err(pos, "DEPOLARIZE2 needs an even number of targets".into()));
            }
            Ok(Instruction::Depolarize2 { p: single_arg(&args)?, targets: qubits })
        }
        "DETECTOR" => {
            no_qubits(&qubits)?;
            Ok(Instruction::Detector { coords: args, records })
        }
        "OBSERVABLE_INCLUDE" => {
            no_qubits(&qubits)?;
            let idx = single_arg(&args)?;
            if idx < 0.0 || idx.fract() != 0.0 {
                return Err(err(name_end, "observable index must be a non-negative integer".into()));
            }
            Ok(Instruction::ObservableInclude { index: idx as u32, records })
        }
        "QUBIT_COORDS" => {
            no_records(&records)?;
            match qubits.as_slice() {
                [q] => Ok(Instruction::QubitCoords { qubit: *q, coords: args }),
                _ => Err(err(pos, "QUBIT_COORDS takes exactly one qubit in this implementation".into())),
            }
        }
        "SHIFT_COORDS" => {
            no_records(&records)?;
            no_qubits(&qubits)?;
            Ok(Instruction::ShiftCoords(args))
        }
        _ => Err(err(start, format!("unknown instruction '{}'", &body[start..name_end]))),
    }
}

impl FromStr for Circuit {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Circuit::parse(s)
    }
}

/// Lowers a plan to a circuit with depolarizing noise of strength `p`.
///
/// With `p > 0`, DEPOLARIZE2(p) follows every CNOT layer and DEPOLARIZE1(p)
/// follows every Hadamard layer; with [`NoisePlacement::AllOps`],
/// DEPOLARIZE1(p) also follows every reset and precedes every measurement.
pub fn lower(plan: &SchedulePlan, p: f64, placement: NoisePlacement) -> Result<Circuit, CircuitError> {
    if !(0.0..1.0).contains(&p) {
        return Err(CircuitError::BadProbability(p));
    }
    let noisy = p > 0.0;
    let all_ops = noisy && placement == NoisePlacement::AllOps;
    let mut ins = Vec::new();
    for (q, c) in plan.qubit_coords.iter().enumerate() {
        let (x, y) = c.real();
        ins.push(Instruction::QubitCoords { qubit: q as u32, coords: vec![x, y] });
    }
    let n_rounds = plan.rounds.len();
    let mut measured: i64 = 0;
    let layers = plan.tick_layers();
    for (li, layer) in layers.iter().enumerate() {
        let mut measured_now = false;
        for (gate, targets) in &layer.ops {
            if targets.is_empty() {
                continue;
            }
            match gate {
                Gate::M | Gate::MX => {
                    if all_ops {
                        ins.push(Instruction::Depolarize1 { p, targets: targets.clone() });
                    }
                    ins.push(Instruction::Gate { gate: *gate, targets: targets.clone() });
                    measured += targets.len() as i64;
                    measured_now = true;
                }
                Gate::R | Gate::RX => {
                    ins.push(Instruction::Gate { gate: *gate, targets: targets.clone() });
                    if all_ops {
                        ins.push(Instruction::Depolarize1 { p, targets: targets.clone() });
                    }
                }
                Gate::H => {
                    ins.push(Instruction::Gate { gate: *gate, targets: targets.clone() });
                    if noisy {
                        ins.push(Instruction::Depolarize1 { p, targets: targets.clone() });
                    }
                }
                Gate::CX => {
                    ins.push(Instruction::Gate { gate: *gate, targets: targets.clone() });
                    if noisy {
                        ins.push(Instruction::Depolarize2 { p, targets: targets.clone() });
                    }
                }
            }
        }
        if measured_now {
            let round = layer.round.unwrap_or(n_rounds);
            for det in plan.detector_defs.iter().filter(|d| d.round == round) {
                ins.push(Instruction::Detector {
                    coords: det.coord.to_vec(),
                    records: det.records.iter().rev().map(|&r| r as i64 - measured).collect(),
                });
            }
            if layer.round.is_none() {
                for (i, obs) in plan.observable_defs.iter().enumerate() {
                    ins.push(Instruction::ObservableInclude {
                        index: i as u32,
                        records: obs.records.iter().rev().map(|&r| r as i64 - measured).collect(),
                    });
                }
            }
        }
        if li + 1 < layers.len() {
            ins.push(Instruction::Tick);
        }
    }
    Ok(Circuit { instructions: ins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Basis, Layout, LayoutKind};
    use crate::schedule::{generate, Method};
    use proptest::prelude::*;

    fn plan(kind: LayoutKind, d: usize, method: Method, rounds: usize, basis: Basis) -> SchedulePlan {
        generate(&Layout::build(kind, d).unwrap(), method, rounds, basis).unwrap()
    }

    fn benchmark_plans() -> Vec<SchedulePlan> {
        let mut out = Vec::new();
        for (kind, d) in [(LayoutKind::Memory, 3), (LayoutKind::Memory, 5), (LayoutKind::XxMerged, 3)] {
            for method in Method::ALL {
                for basis in [Basis::Z, Basis::X] {
                    out.push(plan(kind, d, method, d, basis));
                }
            }
        }
        out
    }

    /// Rank of a set of record sets over GF(2), by plain elimination on bool rows.
    fn rank(rows: &[Vec<u32>], width: usize) -> usize {
        let mut m: Vec<Vec<bool>> = rows
            .iter()
            .map(|r| {
                let mut v = vec![false; width];
                for &x in r {
                    v[x as usize] ^= true;
                }
                v
            })
            .collect();
        let mut rank = 0;
        for col in 0..width {
            let Some(piv) = (rank..m.len()).find(|&i| m[i][col]) else { continue };
            m.swap(rank, piv);
            let pivot = m[rank].clone();
            for (i, row) in m.iter_mut().enumerate() {
                if i != rank && row[col] {
                    row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn noiseless_memory_counts() {
        let p = plan(LayoutKind::Memory, 3, Method::NzHookAvoiding, 3, Basis::Z);
        let c = lower(&p, 0.0, NoisePlacement::AllOps).unwrap();
        // Z faces in the first round, every face in later rounds, Z faces at readout.
        let z_faces = (3 * 3 - 1) / 2;
        assert_eq!(c.num_detectors(), z_faces + 2 * (3 * 3 - 1) + z_faces);
        assert_eq!(c.num_observables(), 1);
        assert_eq!(c.num_measurements(), 3 * 8 + 9);
        assert!(!c.instructions.iter().any(Instruction::is_noise));
        c.validate().unwrap();
    }

    #[test]
    fn single_round_counts() {
        let c = lower(&plan(LayoutKind::Memory, 3, Method::NzHookAvoiding, 1, Basis::Z), 0.0, NoisePlacement::AllOps).unwrap();
        assert_eq!(c.num_detectors(), 8);
    }

    #[test]
    fn two_qubit_noise_covers_every_cnot() {
        for p in benchmark_plans() {
            let c = lower(&p, 1e-3, NoisePlacement::AllOps).unwrap();
            let noisy_pairs: usize = c
                .instructions
                .iter()
                .map(|i| match i {
                    Instruction::Depolarize2 { targets, .. } => targets.len() / 2,
                    _ => 0,
                })
                .sum();
            assert_eq!(noisy_pairs, c.num_cx_pairs());
            assert_eq!(c.num_cx_pairs(), p.rounds.iter().flat_map(|r| &r.cnot_layers).map(Vec::len).sum::<usize>());
        }
    }

    #[test]
    fn gates_only_placement_skips_resets_and_measurements() {
        let p = plan(LayoutKind::Memory, 3, Method::NzHookAvoiding, 2, Basis::Z);
        let all = lower(&p, 1e-3, NoisePlacement::AllOps).unwrap();
        let cx = lower(&p, 1e-3, NoisePlacement::GatesOnly).unwrap();
        let targets = |c: &Circuit, want_noise: bool| -> usize {
            c.instructions
                .iter()
                .map(|i| match i {
                    Instruction::Depolarize1 { targets, .. } if want_noise => targets.len(),
                    Instruction::Gate { gate: Gate::H, targets } if !want_noise => targets.len(),
                    _ => 0,
                })
                .sum()
        };
        assert!(targets(&all, true) > targets(&all, false));
        assert_eq!(targets(&cx, true), targets(&cx, false));
        assert_eq!(all.without_noise(), cx.without_noise());
    }

    #[test]
    fn stripping_noise_recovers_the_noiseless_circuit() {
        for p in benchmark_plans() {
            let noisy = lower(&p, 2e-3, NoisePlacement::AllOps).unwrap();
            let clean = lower(&p, 0.0, NoisePlacement::AllOps).unwrap();
            assert_eq!(noisy.without_noise(), clean);
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        for p in benchmark_plans() {
            let c = lower(&p, 1e-3, NoisePlacement::AllOps).unwrap();
            let text = c.to_string();
            assert_eq!(Circuit::parse(&text).unwrap(), c);
            assert_eq!(lower(&p, 1e-3, NoisePlacement::AllOps).unwrap().to_string(), text);
        }
    }

    #[test]
    fn records_follow_the_plan() {
        for p in benchmark_plans() {
            let c = lower(&p, 0.0, NoisePlacement::AllOps).unwrap();
            let from_plan: Vec<Vec<u32>> = p.detector_defs.iter().map(|d| d.records.clone()).collect();
            assert_eq!(c.detector_records(), from_plan);
            assert_eq!(c.observable_records(), p.observable_defs.iter().map(|o| o.records.clone()).collect::<Vec<_>>());
            assert_eq!(c.num_measurements(), p.num_records());
            let coords = c.detector_coords();
            assert!(coords.iter().zip(&p.detector_defs).all(|(a, d)| a.as_slice() == d.coord.as_slice()));
        }
    }

    #[test]
    fn detectors_are_independent_and_miss_the_observable() {
        for rounds in 1..=4 {
            for method in Method::ALL {
                for basis in [Basis::Z, Basis::X] {
                    let p = plan(LayoutKind::Memory, 3, method, rounds, basis);
                    let c = lower(&p, 0.0, NoisePlacement::AllOps).unwrap();
                    let mut rows = c.detector_records();
                    let width = c.num_measurements();
                    let r = rank(&rows, width);
                    assert_eq!(r, rows.len(), "{method:?} {basis:?} rounds={rounds}: dependent detectors");
                    rows.extend(c.observable_records());
                    assert_eq!(rank(&rows, width), r + 1, "{method:?} {basis:?} rounds={rounds}: observable is a detector combination");
                }
            }
        }
    }

    #[test]
    fn bell_pair_parses_and_validates() {
        let c: Circuit = "R 0 1\nTICK\nH 0\nTICK\nCX 0 1\nTICK\nM 0 1\nDETECTOR rec[-1] rec[-2]\n".parse().unwrap();
        c.validate().unwrap();
        assert_eq!(c.num_qubits(), 2);
        assert_eq!(c.num_detectors(), 1);
        assert_eq!(c.detector_records(), vec![vec![0, 1]]);
    }

    #[test]
    fn comments_and_case_are_tolerated() {
        let c = Circuit::parse("# header\nr 0\n  cnot 0 1 # trailing\nmz 1\n").unwrap();
        assert_eq!(c.instructions.len(), 3);
        assert_eq!(c.num_cx_pairs(), 1);
    }

    #[test]
    fn parse_errors_report_location() {
        let e = Circuit::parse("R 0\nFOO 1").unwrap_err();
        assert_eq!((e.line, e.column), (2, 1));
        assert!(e.message.contains("unknown instruction"));
        let e = Circuit::parse("M 0\nDETECTOR rec[-1] rec[x]").unwrap_err();
        assert_eq!((e.line, e.column), (2, 18));
        let e = Circuit::parse("CX 0 1 2").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Circuit::parse("DEPOLARIZE1(0.1, 0.2) 0").unwrap_err();
        assert!(e.message.contains("exactly one argument"));
        assert!(Circuit::parse("M 0\nDETECTOR rec[1]").is_err());
        assert!(Circuit::parse("H(0.1) 0").is_err());
        assert!(Circuit::parse("DEPOLARIZE1(0.1 0").is_err());
    }

    #[test]
    fn validation_rejects_malformed_circuits() {
        let bad = |s: &str| Circuit::parse(s).unwrap().validate().unwrap_err();
        assert!(matches!(bad("M 0\nDETECTOR rec[-2]"), CircuitError::BadRecord { offset: -2, available: 1, .. }));
        assert_eq!(bad("CX 0 0"), CircuitError::BadPairs(0));
        assert_eq!(bad("R 0\nDEPOLARIZE1(1.5) 0"), CircuitError::BadChannel(1));
        assert_eq!(bad("H 0\nM 0"), CircuitError::QubitReuse { index: 1, qubit: 0 });
        Circuit::parse("H 0\nTICK\nM 0").unwrap().validate().unwrap();
    }

    #[test]
    fn lowering_rejects_bad_probability() {
        let p = plan(LayoutKind::Memory, 3, Method::NzHookAvoiding, 1, Basis::Z);
        assert_eq!(lower(&p, 1.0, NoisePlacement::AllOps).unwrap_err(), CircuitError::BadProbability(1.0));
        assert!(lower(&p, -0.1, NoisePlacement::AllOps).is_err());
        assert!(lower(&p, f64::NAN, NoisePlacement::AllOps).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lowered_circuits_validate_and_roundtrip(
            mi in 0usize..5,
            rounds in 1usize..5,
            z in any::<bool>(),
            merged in any::<bool>(),
            p in 0.0f64..0.3,
        ) {
            let kind = if merged { LayoutKind::XxMerged } else { LayoutKind::Memory };
            let basis = if z { Basis::Z } else { Basis::X };
            let plan = plan(kind, 3, Method::ALL[mi], rounds, basis);
            let c = lower(&plan, p, NoisePlacement::AllOps).unwrap();
            prop_assert!(c.validate().is_ok());
            prop_assert_eq!(Circuit::parse(&c.to_string()).unwrap(), c.clone());
            prop_assert_eq!(c.num_detectors(), plan.detector_defs.len());
        }
    }
}
