//! Pauli algebra, determinism checking, detecting regions and Pauli-frame
//! sampling.
//!
//! Frame simulation drops signs: a frame records which Pauli error the
//! circuit currently carries relative to the noiseless execution. Whether the
//! noiseless execution itself gives deterministic detector values is a
//! separate question answered by [`check_determinism`], which runs a full
//! stabilizer tableau whose signs are affine functions of the random
//! measurement outcomes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{Circuit, Gate, Instruction};
use crate::gf2;

/// A single-qubit Pauli (identity is represented by absence).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    /// Bit flip.
    X,
    /// Both.
    Y,
    /// Phase flip.
    Z,
}

impl Pauli {
    /// Builds from (x, z) bits; `None` for the identity.
    pub fn from_bits(x: bool, z: bool) -> Option<Pauli> {
        match (x, z) {
            (false, false) => None,
            (true, false) => Some(Pauli::X),
            (true, true) => Some(Pauli::Y),
            (false, true) => Some(Pauli::Z),
        }
    }

    /// (x, z) bits.
    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    /// The three non-identity Paulis.
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        })
    }
}

/// A sign-free multi-qubit Pauli operator.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    terms: BTreeMap<u32, Pauli>,
}

impl PauliString {
    /// The identity.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from (qubit, Pauli) pairs; repeated qubits multiply.
    pub fn from_terms<I: IntoIterator<Item = (u32, Pauli)>>(terms: I) -> Self {
        let mut p = Self::new();
        for (q, t) in terms {
            p.mul_term(q, t);
        }
        p
    }

    /// Pauli on `q`, if any.
    pub fn get(&self, q: u32) -> Option<Pauli> {
        self.terms.get(&q).copied()
    }

    /// (x, z) bits on `q`.
    pub fn bits(&self, q: u32) -> (bool, bool) {
        self.get(q).map_or((false, false), Pauli::bits)
    }

    /// Overwrites the bits on `q`.
    pub fn set_bits(&mut self, q: u32, x: bool, z: bool) {
        match Pauli::from_bits(x, z) {
            Some(p) => {
                self.terms.insert(q, p);
            }
            None => {
                self.terms.remove(&q);
            }
        }
    }

    /// Multiplies a single-qubit term in (sign dropped).
    pub fn mul_term(&mut self, q: u32, p: Pauli) {
        let (x, z) = self.bits(q);
        let (a, b) = p.bits();
        self.set_bits(q, x ^ a, z ^ b);
    }

    /// Multiplies another string in (sign dropped).
    pub fn mul(&mut self, other: &PauliString) {
        for (&q, &p) in &other.terms {
            self.mul_term(q, p);
        }
    }

    /// Number of non-identity terms.
    pub fn weight(&self) -> usize {
        self.terms.len()
    }

    /// True for the identity.
    pub fn is_identity(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterates over (qubit, Pauli) in qubit order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, Pauli)> + '_ {
        self.terms.iter().map(|(&q, &p)| (q, p))
    }

    /// True if the two operators commute.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let mut anti = false;
        for (q, p) in self.iter() {
            if let Some(o) = other.get(q) {
                anti ^= p != o;
            }
        }
        !anti
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("I");
        }
        let parts: Vec<String> = self.iter().map(|(q, p)| format!("{p}{q}")).collect();
        f.write_str(&parts.join("*"))
    }
}

/// Heisenberg-picture propagation of `p` through one instruction (sign-free).
///
/// H swaps X and Z; CX copies X from control to target and Z from target to
/// control; a reset erases whatever acts on its qubit; measurements leave the
/// operator unchanged.
pub fn conjugate(p: &PauliString, gate: Gate, targets: &[u32]) -> PauliString {
    let mut out = p.clone();
    match gate {
        Gate::H => {
            for &q in targets {
                let (x, z) = out.bits(q);
                out.set_bits(q, z, x);
            }
        }
        Gate::CX => {
            for pair in targets.chunks(2) {
                let (c, t) = (pair[0], pair[1]);
                let (xc, zc) = out.bits(c);
                let (xt, zt) = out.bits(t);
                out.set_bits(c, xc, zc ^ zt);
                out.set_bits(t, xt ^ xc, zt);
            }
        }
        Gate::R | Gate::RX => {
            for &q in targets {
                out.set_bits(q, false, false);
            }
        }
        Gate::M | Gate::MX => {}
    }
    out
}

// ---------------------------------------------------------------------------
// Determinism check.

/// Outcome of [`check_determinism`].
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct DeterminismReport {
    /// Detectors whose noiseless value is random.
    pub random_detectors: Vec<usize>,
    /// Detectors whose noiseless value is deterministically 1.
    pub flipped_detectors: Vec<usize>,
    /// Observables whose noiseless value is random.
    pub random_observables: Vec<usize>,
}

impl DeterminismReport {
    /// True if every detector is deterministically zero and every observable deterministic.
    pub fn ok(&self) -> bool {
        self.random_detectors.is_empty() && self.flipped_detectors.is_empty() && self.random_observables.is_empty()
    }
}

/// Stabilizer tableau whose row signs are affine GF(2) expressions over the
/// outcomes of random measurements (bit 0 of a sign vector is the constant).
struct SymbolicTableau {
    n: usize,
    wq: usize,
    ws: usize,
    /// Rows 0..n destabilizers, n..2n stabilizers, 2n scratch.
    x: Vec<u64>,
    z: Vec<u64>,
    sign: Vec<u64>,
    vars: usize,
}

impl SymbolicTableau {
    fn new(n: usize, max_vars: usize) -> Self {
        let wq = gf2::words_for(n);
        let ws = gf2::words_for(max_vars + 1);
        let rows = 2 * n + 1;
        let mut t = SymbolicTableau {
            n,
            wq,
            ws,
            x: vec![0; rows * wq],
            z: vec![0; rows * wq],
            sign: vec![0; rows * ws],
            vars: 0,
        };
        for i in 0..n {
            gf2::set(&mut t.x[i * wq..(i + 1) * wq], i);
            gf2::set(&mut t.z[(n + i) * wq..(n + i + 1) * wq], i);
        }
        t
    }

    fn xb(&self, row: usize, q: usize) -> bool {
        gf2::get(&self.x[row * self.wq..], q)
    }

    fn zb(&self, row: usize, q: usize) -> bool {
        gf2::get(&self.z[row * self.wq..], q)
    }

    fn flip_const(&mut self, row: usize) {
        self.sign[row * self.ws] ^= 1;
    }

    fn h(&mut self, q: usize) {
        for row in 0..2 * self.n {
            let (xb, zb) = (self.xb(row, q), self.zb(row, q));
            if xb && zb {
                self.flip_const(row);
            }
            if xb != zb {
                gf2::flip(&mut self.x[row * self.wq..], q);
                gf2::flip(&mut self.z[row * self.wq..], q);
            }
        }
    }

    fn cx(&mut self, a: usize, b: usize) {
        for row in 0..2 * self.n {
            let (xa, za, xb, zb) = (self.xb(row, a), self.zb(row, a), self.xb(row, b), self.zb(row, b));
            if xa && zb && (xb == za) {
                self.flip_const(row);
            }
            if xa {
                gf2::flip(&mut self.x[row * self.wq..], b);
            }
            if zb {
                gf2::flip(&mut self.z[row * self.wq..], a);
            }
        }
    }

    /// Row h := row i · row h, with symbolic sign.
    fn rowsum(&mut self, h: usize, i: usize) {
        let wq = self.wq;
        let mut sum: i64 = 0;
        for w in 0..wq {
            let (x1, z1) = (self.x[i * wq + w], self.z[i * wq + w]);
            let (x2, z2) = (self.x[h * wq + w], self.z[h * wq + w]);
            // Phase exponent contribution of multiplying P1 (row i) by P2 (row h).
            let y1 = x1 & z1;
            let xo = x1 & !z1;
            let zo = !x1 & z1;
            let plus = (y1 & z2 & !x2) | (xo & x2 & z2) | (zo & x2 & !z2);
            let minus = (y1 & x2 & !z2) | (xo & !x2 & z2) | (zo & x2 & z2);
            sum += plus.count_ones() as i64 - minus.count_ones() as i64;
        }
        if sum.rem_euclid(4) == 2 {
            self.flip_const(h);
        }
        for w in 0..wq {
            self.x[h * wq + w] ^= self.x[i * wq + w];
            self.z[h * wq + w] ^= self.z[i * wq + w];
        }
        let ws = self.ws;
        for w in 0..ws {
            self.sign[h * ws + w] ^= self.sign[i * ws + w];
        }
    }

    fn copy_row(&mut self, dst: usize, src: usize) {
        let (wq, ws) = (self.wq, self.ws);
        self.x.copy_within(src * wq..(src + 1) * wq, dst * wq);
        self.z.copy_within(src * wq..(src + 1) * wq, dst * wq);
        self.sign.copy_within(src * ws..(src + 1) * ws, dst * ws);
    }

    fn clear_row(&mut self, row: usize) {
        let (wq, ws) = (self.wq, self.ws);
        self.x[row * wq..(row + 1) * wq].fill(0);
        self.z[row * wq..(row + 1) * wq].fill(0);
        self.sign[row * ws..(row + 1) * ws].fill(0);
    }

    /// Z measurement; returns the outcome's affine expression.
    fn measure(&mut self, q: usize) -> Vec<u64> {
        let n = self.n;
        if let Some(p) = (n..2 * n).find(|&r| self.xb(r, q)) {
            for row in 0..2 * n {
                if row != p && self.xb(row, q) {
                    self.rowsum(row, p);
                }
            }
            self.copy_row(p - n, p);
            self.clear_row(p);
            gf2::set(&mut self.z[p * self.wq..], q);
            self.vars += 1;
            let ws = self.ws;
            gf2::set(&mut self.sign[p * ws..(p + 1) * ws], self.vars);
            self.sign[p * ws..(p + 1) * ws].to_vec()
        } else {
            let scratch = 2 * n;
            self.clear_row(scratch);
            for i in 0..n {
                if self.xb(i, q) {
                    self.rowsum(scratch, i + n);
                }
            }
            self.sign[scratch * self.ws..(scratch + 1) * self.ws].to_vec()
        }
    }

    /// Z reset: measure, then undo the outcome with a conditional X.
    fn reset(&mut self, q: usize) {
        let e = self.measure(q);
        let ws = self.ws;
        for row in 0..2 * self.n {
            if self.zb(row, q) {
                gf2::xor_into(&mut self.sign[row * ws..(row + 1) * ws], &e);
            }
        }
    }
}

/// Verifies with a symbolic stabilizer simulation that every detector is
/// deterministically zero and every observable deterministic without noise.
pub fn check_determinism(c: &Circuit) -> DeterminismReport {
    let n = c.num_qubits();
    let max_vars: usize = c
        .instructions
        .iter()
        .map(|i| match i {
            Instruction::Gate { gate: Gate::M | Gate::MX | Gate::R | Gate::RX, targets } => targets.len(),
            _ => 0,
        })
        .sum();
    let mut t = SymbolicTableau::new(n, max_vars);
    let mut records: Vec<Vec<u64>> = Vec::new();
    for ins in &c.instructions {
        if let Instruction::Gate { gate, targets } = ins {
            match gate {
                Gate::H => targets.iter().for_each(|&q| t.h(q as usize)),
                Gate::CX => targets.chunks(2).for_each(|p| t.cx(p[0] as usize, p[1] as usize)),
                Gate::M => targets.iter().for_each(|&q| records.push(t.measure(q as usize))),
                Gate::MX => {
                    for &q in targets {
                        t.h(q as usize);
                        records.push(t.measure(q as usize));
                        t.h(q as usize);
                    }
                }
                Gate::R => targets.iter().for_each(|&q| t.reset(q as usize)),
                Gate::RX => {
                    for &q in targets {
                        t.reset(q as usize);
                        t.h(q as usize);
                    }
                }
            }
        }
    }
    let ws = t.ws;
    let combine = |recs: &[u32]| {
        let mut e = vec![0u64; ws];
        for &r in recs {
            gf2::xor_into(&mut e, &records[r as usize]);
        }
        let random = (e[0] & !1) != 0 || e[1..].iter().any(|&w| w != 0);
        (random, e[0] & 1 == 1)
    };
    let mut report = DeterminismReport::default();
    for (i, recs) in c.detector_records().iter().enumerate() {
        match combine(recs) {
            (true, _) => report.random_detectors.push(i),
            (false, true) => report.flipped_detectors.push(i),
            _ => {}
        }
    }
    for (i, recs) in c.observable_records().iter().enumerate() {
        if combine(recs).0 {
            report.random_observables.push(i);
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Detecting regions.

/// The operators that a single-qubit error must anticommute with, at each
/// layer boundary, to flip a detector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectingRegion {
    /// Detector id.
    pub detector: usize,
    /// TICK index → sensitive operator just before that TICK. Only non-identity slices are stored.
    pub slices: BTreeMap<usize, PauliString>,
}

/// Computes the detecting region of `detector` by propagating the measured
/// operators backward from the detector's latest record to its earliest.
pub fn detecting_region(c: &Circuit, detector: usize) -> DetectingRegion {
    let recs = &c.detector_records()[detector];
    let mut record_at = Vec::new(); // record index -> (instruction, qubit)
    let mut tick_of = Vec::with_capacity(c.instructions.len());
    let mut ticks = 0usize;
    for (i, ins) in c.instructions.iter().enumerate() {
        tick_of.push(ticks);
        match ins {
            Instruction::Tick => ticks += 1,
            Instruction::Gate { gate: Gate::M | Gate::MX, targets } => {
                record_at.extend(targets.iter().map(|&q| (i, q)));
            }
            _ => {}
        }
    }
    let mut by_instruction: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for &r in recs {
        let (i, q) = record_at[r as usize];
        by_instruction.entry(i).or_default().push(q);
    }
    let mut p = PauliString::new();
    let mut slices = BTreeMap::new();
    for (i, ins) in c.instructions.iter().enumerate().rev() {
        match ins {
            Instruction::Tick => {
                if !p.is_identity() {
                    slices.insert(tick_of[i], p.clone());
                }
            }
            Instruction::Gate { gate, targets } => {
                if let Some(qs) = by_instruction.get(&i) {
                    let term = if *gate == Gate::MX { Pauli::X } else { Pauli::Z };
                    for &q in qs {
                        p.mul_term(q, term);
                    }
                }
                if !matches!(gate, Gate::M | Gate::MX) {
                    p = conjugate(&p, *gate, targets);
                }
            }
            _ => {}
        }
    }
    DetectingRegion { detector, slices }
}

// ---------------------------------------------------------------------------
// Frame sampling.

/// Errors from sampling.
#[derive(Debug, Error)]
pub enum SampleError {
    /// The circuit's detectors or observables are not deterministic.
    #[error("circuit is not deterministic: {0:?}")]
    NotDeterministic(DeterminismReport),
    /// More than 64 observables.
    #[error("at most 64 observables are supported, circuit has {0}")]
    TooManyObservables(usize),
    /// Binary table I/O failure.
    #[error("shot table i/o: {0}")]
    Io(#[from] io::Error),
    /// Malformed shot table.
    #[error("malformed shot table: {0}")]
    Format(String),
}

/// A fault placed right after a noise instruction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Fault {
    /// Index of the noise instruction in the circuit.
    pub instruction: usize,
    /// Paulis applied at that point.
    pub paulis: Vec<(u32, Pauli)>,
}

/// Compiled circuit for frame propagation.
#[derive(Clone, Debug)]
pub(crate) enum FrameOp {
    H(u32),
    Cx(u32, u32),
    Reset(u32),
    MeasZ(u32),
    MeasX(u32),
    /// Depolarizing channel on one qubit; `instruction` is the source index.
    Dep1 { p: f64, q: u32, instruction: usize },
    /// Depolarizing channel on a pair.
    Dep2 { p: f64, a: u32, b: u32, instruction: usize },
}

/// A circuit prepared for repeated frame simulation.
#[derive(Clone, Debug)]
pub struct FrameProgram {
    pub(crate) ops: Vec<FrameOp>,
    pub(crate) num_qubits: usize,
    pub(crate) num_records: usize,
    pub(crate) detectors: Vec<Vec<u32>>,
    pub(crate) observables: Vec<Vec<u32>>,
}

impl FrameProgram {
    /// Compiles a circuit.
    pub fn new(c: &Circuit) -> Result<FrameProgram, SampleError> {
        let observables = c.observable_records();
        if observables.len() > 64 {
            return Err(SampleError::TooManyObservables(observables.len()));
        }
        let mut ops = Vec::new();
        for (i, ins) in c.instructions.iter().enumerate() {
            match ins {
                Instruction::Gate { gate, targets } => match gate {
                    Gate::H => ops.extend(targets.iter().map(|&q| FrameOp::H(q))),
                    Gate::CX => ops.extend(targets.chunks(2).map(|p| FrameOp::Cx(p[0], p[1]))),
                    Gate::R | Gate::RX => ops.extend(targets.iter().map(|&q| FrameOp::Reset(q))),
                    Gate::M => ops.extend(targets.iter().map(|&q| FrameOp::MeasZ(q))),
                    Gate::MX => ops.extend(targets.iter().map(|&q| FrameOp::MeasX(q))),
                },
                Instruction::Depolarize1 { p, targets } => {
                    ops.extend(targets.iter().map(|&q| FrameOp::Dep1 { p: *p, q, instruction: i }))
                }
                Instruction::Depolarize2 { p, targets } => ops
                    .extend(targets.chunks(2).map(|t| FrameOp::Dep2 { p: *p, a: t[0], b: t[1], instruction: i })),
                _ => {}
            }
        }
        Ok(FrameProgram {
            ops,
            num_qubits: c.num_qubits(),
            num_records: c.num_measurements(),
            detectors: c.detector_records(),
            observables,
        })
    }

    /// Number of detectors.
    pub fn num_detectors(&self) -> usize {
        self.detectors.len()
    }

    /// Number of observables.
    pub fn num_observables(&self) -> usize {
        self.observables.len()
    }

    /// Propagates 64 shots at once. `noise` decides, per channel, which
    /// lanes receive which Pauli; it returns per-record flip words.
    fn run<F>(&self, mut noise: F) -> Vec<u64>
    where
        F: FnMut(&FrameOp, &mut [u64], &mut [u64]),
    {
        let mut x = vec![0u64; self.num_qubits];
        let mut z = vec![0u64; self.num_qubits];
        let mut rec = Vec::with_capacity(self.num_records);
        for op in &self.ops {
            match *op {
                FrameOp::H(q) => std::mem::swap(&mut x[q as usize], &mut z[q as usize]),
                FrameOp::Cx(c, t) => {
                    x[t as usize] ^= x[c as usize];
                    z[c as usize] ^= z[t as usize];
                }
                FrameOp::Reset(q) => {
                    x[q as usize] = 0;
                    z[q as usize] = 0;
                }
                FrameOp::MeasZ(q) => rec.push(x[q as usize]),
                FrameOp::MeasX(q) => rec.push(z[q as usize]),
                FrameOp::Dep1 { .. } | FrameOp::Dep2 { .. } => noise(op, &mut x, &mut z),
            }
        }
        rec
    }

    fn collect(&self, rec: &[u64]) -> (Vec<u64>, u64) {
        let dets = self.detectors.iter().map(|rs| rs.iter().fold(0u64, |a, &r| a ^ rec[r as usize])).collect();
        let mut obs = 0u64;
        for (i, rs) in self.observables.iter().enumerate() {
            let v = rs.iter().fold(0u64, |a, &r| a ^ rec[r as usize]);
            obs |= (v & 1) << i;
        }
        (dets, obs)
    }

    /// Detector flips (as sorted ids) and observable mask caused by a set of faults.
    pub fn inject(&self, faults: &[Fault]) -> (Vec<u32>, u64) {
        let mut by_instr: BTreeMap<usize, Vec<(u32, Pauli)>> = BTreeMap::new();
        for f in faults {
            by_instr.entry(f.instruction).or_default().extend(f.paulis.iter().copied());
        }
        let mut applied: std::collections::HashSet<usize> = Default::default();
        let rec = self.run(|op, x, z| {
            let instruction = match op {
                FrameOp::Dep1 { instruction, .. } | FrameOp::Dep2 { instruction, .. } => *instruction,
                _ => return,
            };
            // Apply all Paulis of this instruction once, at its first channel.
            if let Some(ps) = by_instr.get(&instruction) {
                if applied.insert(instruction) {
                    for &(q, p) in ps {
                        let (bx, bz) = p.bits();
                        x[q as usize] ^= bx as u64;
                        z[q as usize] ^= bz as u64;
                    }
                }
            }
        });
        let (dets, obs) = self.collect(&rec);
        let flipped = dets.iter().enumerate().filter(|(_, &w)| w & 1 == 1).map(|(i, _)| i as u32).collect();
        (flipped, obs)
    }

    /// Samples one batch of 64 shots with the noise channels of the circuit.
    fn sample_batch(&self, rng: &mut ChaCha8Rng) -> (Vec<u64>, Vec<u64>) {
        let rec = self.run(|op, x, z| match *op {
            FrameOp::Dep1 { p, q, .. } => {
                let mut hits = bernoulli_mask(rng, p);
                while hits != 0 {
                    let lane = hits.trailing_zeros();
                    hits &= hits - 1;
                    let (bx, bz) = Pauli::ALL[rng.random_range(0..3)].bits();
                    x[q as usize] ^= (bx as u64) << lane;
                    z[q as usize] ^= (bz as u64) << lane;
                }
            }
            FrameOp::Dep2 { p, a, b, .. } => {
                let mut hits = bernoulli_mask(rng, p);
                while hits != 0 {
                    let lane = hits.trailing_zeros();
                    hits &= hits - 1;
                    // 1..=15 enumerates the non-identity two-qubit Paulis.
                    let k: u32 = rng.random_range(1..16);
                    let (pa, pb) = (k & 3, k >> 2);
                    x[a as usize] ^= ((pa & 1) as u64) << lane;
                    z[a as usize] ^= ((pa >> 1) as u64) << lane;
                    x[b as usize] ^= ((pb & 1) as u64) << lane;
                    z[b as usize] ^= ((pb >> 1) as u64) << lane;
                }
            }
            _ => {}
        });
        let dets: Vec<u64> = self.detectors.iter().map(|rs| rs.iter().fold(0u64, |a, &r| a ^ rec[r as usize])).collect();
        let obs: Vec<u64> = self.observables.iter().map(|rs| rs.iter().fold(0u64, |a, &r| a ^ rec[r as usize])).collect();
        (dets, obs)
    }
}

/// 64 independent Bernoulli(p) bits using geometric gap sampling.
pub(crate) fn bernoulli_mask<R: Rng>(rng: &mut R, p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return u64::MAX;
    }
    let log_q = (-p).ln_1p();
    let mut mask = 0u64;
    let mut pos: i64 = -1;
    loop {
        let u: f64 = rng.random();
        let gap = ((1.0 - u).ln() / log_q).floor();
        if gap >= 64.0 {
            break;
        }
        pos += gap as i64 + 1;
        if pos >= 64 {
            break;
        }
        mask |= 1 << pos;
    }
    mask
}

/// RNG for one 64-shot batch: the output of shot `s` depends only on the
/// seed and `s`.
pub(crate) fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Detector and observable outcomes for a set of shots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotTable {
    num_shots: usize,
    num_detectors: usize,
    num_observables: usize,
    /// Row-major detector bits, `det_words` words per shot.
    dets: Vec<u64>,
    /// Observable mask per shot.
    obs: Vec<u64>,
}

impl ShotTable {
    /// An all-zero table.
    pub fn zeros(num_shots: usize, num_detectors: usize, num_observables: usize) -> ShotTable {
        ShotTable {
            num_shots,
            num_detectors,
            num_observables,
            dets: vec![0; num_shots * gf2::words_for(num_detectors)],
            obs: vec![0; num_shots],
        }
    }

    /// Number of shots.
    pub fn num_shots(&self) -> usize {
        self.num_shots
    }

    /// Number of detectors per shot.
    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    /// Number of observables per shot.
    pub fn num_observables(&self) -> usize {
        self.num_observables
    }

    fn det_words(&self) -> usize {
        gf2::words_for(self.num_detectors)
    }

    /// Packed detector bits of one shot.
    pub fn detector_words(&self, shot: usize) -> &[u64] {
        let w = self.det_words();
        &self.dets[shot * w..(shot + 1) * w]
    }

    /// Ids of the detectors that fired in one shot.
    pub fn defects(&self, shot: usize) -> Vec<u32> {
        gf2::ones(self.detector_words(shot)).map(|i| i as u32).collect()
    }

    /// Observable mask of one shot.
    pub fn observables(&self, shot: usize) -> u64 {
        self.obs[shot]
    }

    /// Sets one shot's contents.
    pub fn set_shot(&mut self, shot: usize, defects: &[u32], obs: u64) {
        let w = self.det_words();
        let row = &mut self.dets[shot * w..(shot + 1) * w];
        row.fill(0);
        for &d in defects {
            gf2::flip(row, d as usize);
        }
        self.obs[shot] = obs;
    }

    /// Copies 64-lane batch columns into rows `start..start+count`.
    pub(crate) fn fill_batch(&mut self, start: usize, count: usize, dets: &[u64], obs: &[u64]) {
        let w = self.det_words();
        for (j, &word) in dets.iter().enumerate() {
            let mut m = word & lane_mask(count);
            while m != 0 {
                let lane = m.trailing_zeros() as usize;
                m &= m - 1;
                gf2::set(&mut self.dets[(start + lane) * w..(start + lane + 1) * w], j);
            }
        }
        for (i, &word) in obs.iter().enumerate() {
            let mut m = word & lane_mask(count);
            while m != 0 {
                let lane = m.trailing_zeros() as usize;
                m &= m - 1;
                self.obs[start + lane] |= 1 << i;
            }
        }
    }

    /// Concatenates tables with identical dimensions.
    pub fn concat(parts: Vec<ShotTable>) -> ShotTable {
        let mut it = parts.into_iter();
        let mut first = it.next().unwrap_or_else(|| ShotTable::zeros(0, 0, 0));
        for t in it {
            assert_eq!((t.num_detectors, t.num_observables), (first.num_detectors, first.num_observables));
            first.num_shots += t.num_shots;
            first.dets.extend(t.dets);
            first.obs.extend(t.obs);
        }
        first
    }

    /// Binary form: three little-endian u64 (N, D, O), then for each shot
    /// D detector bits followed by O observable bits, packed LSB-first into
    /// ⌈(D+O)/8⌉ bytes.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in [self.num_shots, self.num_detectors, self.num_observables] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let bits = self.num_detectors + self.num_observables;
        let mut row = vec![0u8; bits.div_ceil(8)];
        for s in 0..self.num_shots {
            row.fill(0);
            for d in self.defects(s) {
                row[d as usize / 8] |= 1 << (d % 8);
            }
            for i in 0..self.num_observables {
                if self.obs[s] >> i & 1 == 1 {
                    let b = self.num_detectors + i;
                    row[b / 8] |= 1 << (b % 8);
                }
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    /// Reads the binary form written by [`ShotTable::write_binary`].
    pub fn read_binary<R: Read>(mut r: R) -> Result<ShotTable, SampleError> {
        let mut header = [0u8; 24];
        r.read_exact(&mut header)?;
        let word = |i: usize| u64::from_le_bytes(header[i * 8..i * 8 + 8].try_into().expect("8 bytes")) as usize;
        let (n, d, o) = (word(0), word(1), word(2));
        if o > 64 {
            return Err(SampleError::Format(format!("{o} observables exceed the supported 64")));
        }
        let bits = d + o;
        let mut table = ShotTable::zeros(n, d, o);
        let mut row = vec![0u8; bits.div_ceil(8)];
        for s in 0..n {
            r.read_exact(&mut row)?;
            let defects: Vec<u32> = (0..d).filter(|&b| row[b / 8] >> (b % 8) & 1 == 1).map(|b| b as u32).collect();
            let mut obs = 0u64;
            for i in 0..o {
                let b = d + i;
                if row[b / 8] >> (b % 8) & 1 == 1 {
                    obs |= 1 << i;
                }
            }
            table.set_shot(s, &defects, obs);
        }
        Ok(table)
    }

    /// Debug text form: one line of `0`/`1` per shot, detectors then observables.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.num_shots * (self.num_detectors + self.num_observables + 1));
        for s in 0..self.num_shots {
            let words = self.detector_words(s);
            for d in 0..self.num_detectors {
                out.push(if gf2::get(words, d) { '1' } else { '0' });
            }
            for i in 0..self.num_observables {
                out.push(if self.obs[s] >> i & 1 == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses the debug text form, given the number of observables per line.
    pub fn from_text(text: &str, num_observables: usize) -> Result<ShotTable, SampleError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let width = lines.first().map_or(num_observables, |l| l.trim().len());
        if width < num_observables {
            return Err(SampleError::Format("line shorter than the observable count".into()));
        }
        let d = width - num_observables;
        let mut table = ShotTable::zeros(lines.len(), d, num_observables);
        for (s, line) in lines.iter().enumerate() {
            let line = line.trim();
            if line.len() != width || !line.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(SampleError::Format(format!("shot {s}: expected {width} characters of 0/1")));
            }
            let b = line.as_bytes();
            let defects: Vec<u32> = (0..d).filter(|&i| b[i] == b'1').map(|i| i as u32).collect();
            let obs = (0..num_observables).filter(|&i| b[d + i] == b'1').fold(0u64, |m, i| m | 1 << i);
            table.set_shot(s, &defects, obs);
        }
        Ok(table)
    }
}

fn lane_mask(count: usize) -> u64 {
    if count >= 64 {
        u64::MAX
    } else {
        (1u64 << count) - 1
    }
}

/// Samples `shots` shots of `c` with Pauli-frame propagation.
///
/// Shots are processed in batches of 64; batch `b` draws from a ChaCha8
/// stream selected by `b`, so the result depends only on the seed and the
/// shot index, never on the number of worker threads.
pub fn frame_sample(c: &Circuit, shots: usize, seed: u64) -> Result<ShotTable, SampleError> {
    let report = check_determinism(c);
    if !report.ok() {
        return Err(SampleError::NotDeterministic(report));
    }
    let program = FrameProgram::new(c)?;
    Ok(program.sample(shots, seed, 0))
}

impl FrameProgram {
    /// Samples shots `first_batch*64 ..` without re-checking determinism.
    pub fn sample(&self, shots: usize, seed: u64, first_batch: u64) -> ShotTable {
        let batches = shots.div_ceil(64);
        let parts: Vec<ShotTable> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let count = (shots - b * 64).min(64);
                let mut rng = batch_rng(seed, first_batch + b as u64);
                let (dets, obs) = self.sample_batch(&mut rng);
                let mut t = ShotTable::zeros(count, self.detectors.len(), self.observables.len());
                t.fill_batch(0, count, &dets, &obs);
                t
            })
            .collect();
        if parts.is_empty() {
            return ShotTable::zeros(0, self.detectors.len(), self.observables.len());
        }
        ShotTable::concat(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{lower, NoisePlacement};
    use crate::dem::detector_flip_probabilities;
    use crate::layout::{Basis, Layout, LayoutKind};
    use crate::schedule::{generate, Method, SchedulePlan};
    use proptest::prelude::*;

    fn plan(kind: LayoutKind, d: usize, method: Method, rounds: usize, basis: Basis) -> SchedulePlan {
        generate(&Layout::build(kind, d).unwrap(), method, rounds, basis).unwrap()
    }

    fn circuit(method: Method, rounds: usize, basis: Basis, p: f64, noise: NoisePlacement) -> Circuit {
        lower(&plan(LayoutKind::Memory, 3, method, rounds, basis), p, noise).unwrap()
    }

    fn ps(terms: &[(u32, Pauli)]) -> PauliString {
        PauliString::from_terms(terms.iter().copied())
    }

    #[test]
    fn conjugation_examples() {
        use Pauli::{X, Y, Z};
        assert_eq!(conjugate(&ps(&[(0, X)]), Gate::H, &[0]), ps(&[(0, Z)]));
        assert_eq!(conjugate(&ps(&[(0, Y)]), Gate::H, &[0]), ps(&[(0, Y)]));
        assert_eq!(conjugate(&ps(&[(0, X)]), Gate::CX, &[0, 1]), ps(&[(0, X), (1, X)]));
        assert_eq!(conjugate(&ps(&[(1, Z)]), Gate::CX, &[0, 1]), ps(&[(0, Z), (1, Z)]));
        assert_eq!(conjugate(&ps(&[(1, X)]), Gate::CX, &[0, 1]), ps(&[(1, X)]));
        assert_eq!(conjugate(&ps(&[(0, Z)]), Gate::CX, &[0, 1]), ps(&[(0, Z)]));
        assert_eq!(conjugate(&ps(&[(0, Y)]), Gate::CX, &[0, 1]), ps(&[(0, Y), (1, X)]));
        assert!(conjugate(&ps(&[(0, X), (1, Z)]), Gate::R, &[0, 1]).is_identity());
        assert_eq!(conjugate(&ps(&[(3, Z)]), Gate::M, &[3]), ps(&[(3, Z)]));
    }

    #[test]
    fn pauli_string_algebra() {
        use Pauli::{X, Y, Z};
        let mut a = ps(&[(0, X), (2, Z)]);
        a.mul(&ps(&[(0, Z), (1, Y)]));
        assert_eq!(a, ps(&[(0, Y), (1, Y), (2, Z)]));
        assert_eq!(a.weight(), 3);
        assert!(ps(&[(0, X), (1, X)]).commutes_with(&ps(&[(0, Z), (1, Z)])));
        assert!(!ps(&[(0, X)]).commutes_with(&ps(&[(0, Y)])));
        assert_eq!(a.to_string(), "Y0*Y1*Z2");
        for (x, z) in [(true, false), (true, true), (false, true)] {
            assert_eq!(Pauli::from_bits(x, z).unwrap().bits(), (x, z));
        }
        assert_eq!(Pauli::from_bits(false, false), None);
    }

    fn arb_string(n: u32) -> impl Strategy<Value = PauliString> {
        prop::collection::vec(0u8..4, n as usize).prop_map(|v| {
            PauliString::from_terms(v.into_iter().enumerate().filter_map(|(q, k)| {
                Pauli::from_bits(k & 1 == 1, k & 2 == 2).map(|p| (q as u32, p))
            }))
        })
    }

    proptest! {
        #[test]
        fn unitary_conjugation_preserves_commutation(
            a in arb_string(4),
            b in arb_string(4),
            gates in prop::collection::vec((any::<bool>(), 0u32..4, 0u32..4), 1..12),
        ) {
            let before = a.commutes_with(&b);
            let (mut a, mut b) = (a, b);
            for (is_h, q, r) in gates {
                if is_h {
                    a = conjugate(&a, Gate::H, &[q]);
                    b = conjugate(&b, Gate::H, &[q]);
                } else if q != r {
                    a = conjugate(&a, Gate::CX, &[q, r]);
                    b = conjugate(&b, Gate::CX, &[q, r]);
                }
            }
            prop_assert_eq!(a.commutes_with(&b), before);
        }

        #[test]
        fn conjugation_is_an_involution_for_h_and_cx(a in arb_string(3), q in 0u32..3, r in 0u32..3) {
            prop_assert_eq!(conjugate(&conjugate(&a, Gate::H, &[q]), Gate::H, &[q]), a.clone());
            if q != r {
                prop_assert_eq!(conjugate(&conjugate(&a, Gate::CX, &[q, r]), Gate::CX, &[q, r]), a);
            }
        }
    }

    #[test]
    fn generated_circuits_are_deterministic() {
        for kind in [LayoutKind::Memory, LayoutKind::XxMerged] {
            for method in Method::ALL {
                for basis in [Basis::Z, Basis::X] {
                    for rounds in [1, 2, 3] {
                        let c = lower(&plan(kind, 3, method, rounds, basis), 0.0, NoisePlacement::AllOps).unwrap();
                        let r = check_determinism(&c);
                        assert!(r.ok(), "{kind} {method:?} {basis:?} rounds={rounds}: {r:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn determinism_check_flags_broken_annotations() {
        let mut c = circuit(Method::NzHookAvoiding, 2, Basis::Z, 0.0, NoisePlacement::AllOps);
        // Re-point the first detector of the second round at the wrong record.
        let first_round = c.instructions.iter().position(|i| matches!(i, Instruction::Detector { .. })).unwrap();
        let target = c.instructions[first_round..]
            .iter()
            .position(|i| matches!(i, Instruction::Gate { gate: Gate::M, .. }))
            .map(|p| p + first_round)
            .unwrap();
        let det = c.instructions[target..].iter().position(|i| matches!(i, Instruction::Detector { .. })).unwrap() + target;
        if let Instruction::Detector { records, .. } = &mut c.instructions[det] {
            records[0] -= 1;
        }
        let report = check_determinism(&c);
        assert!(!report.ok());
        assert!(!report.random_detectors.is_empty());

        let x_obs = Circuit::parse("R 0\nTICK\nH 0\nTICK\nM 0\nOBSERVABLE_INCLUDE(0) rec[-1]").unwrap();
        assert_eq!(check_determinism(&x_obs).random_observables, vec![0]);
        assert!(matches!(frame_sample(&x_obs, 10, 0), Err(SampleError::NotDeterministic(_))));

        let bell = Circuit::parse("R 0 1\nTICK\nH 0\nTICK\nCX 0 1\nTICK\nM 0 1\nDETECTOR rec[-1] rec[-2]\nDETECTOR rec[-1]").unwrap();
        assert_eq!(check_determinism(&bell).random_detectors, vec![1]);
        let xx = Circuit::parse("RX 0 1\nTICK\nMX 0 1\nDETECTOR rec[-1]\nDETECTOR rec[-2]").unwrap();
        assert!(check_determinism(&xx).ok());
    }

    /// Data-qubit support of every tile, as qubit ids.
    fn tiles(layout: &Layout, plan: &SchedulePlan) -> Vec<PauliString> {
        let id = |c| plan.qubit_coords.iter().position(|q| *q == c).unwrap() as u32;
        layout
            .tiles
            .iter()
            .map(|t| {
                let p = if t.basis == Basis::Z { Pauli::Z } else { Pauli::X };
                PauliString::from_terms(t.supports.iter().map(|&c| (id(c), p)))
            })
            .collect()
    }

    fn data_only(p: &PauliString, plan: &SchedulePlan) -> bool {
        p.iter().all(|(q, _)| plan.data_qubits.contains(&q))
    }

    #[test]
    fn bulk_nz_region_is_a_face_between_rounds() {
        let layout = Layout::build(LayoutKind::Memory, 3).unwrap();
        let plan = plan(LayoutKind::Memory, 3, Method::NzHookAvoiding, 3, Basis::Z);
        let c = lower(&plan, 0.0, NoisePlacement::AllOps).unwrap();
        let faces = tiles(&layout, &plan);
        let mut seen_z = 0;
        for (i, def) in plan.detector_defs.iter().enumerate().filter(|(_, d)| d.round == 2) {
            let region = detecting_region(&c, i);
            let face_slices: Vec<&PauliString> =
                region.slices.values().filter(|s| data_only(s, &plan) && faces.contains(s)).collect();
            assert!(!face_slices.is_empty(), "detector {i} ({def:?}) never equals a face on the data");
            if face_slices.iter().any(|s| s.iter().all(|(_, p)| p == Pauli::Z) && s.weight() == 4) {
                seen_z += 1;
            }
        }
        assert!(seen_z > 0, "no bulk ZZZZ slice found");
    }

    /// ZX rounds move the tiles, so between rounds the data carry the
    /// stabilizers the next round reports, not necessarily the layout's.
    #[test]
    fn zx_region_between_rounds_is_a_stabilizer() {
        for method in [Method::ZxSame, Method::ZxCross] {
            let plan = plan(LayoutKind::Memory, 3, method, 4, Basis::Z);
            let c = lower(&plan, 0.0, NoisePlacement::AllOps).unwrap();
            let id = |c| plan.qubit_coords.iter().position(|q| *q == c).unwrap() as u32;
            // TICK indices that directly follow each round's measurements.
            let mut boundaries = Vec::new();
            let mut ticks = 0;
            for ins in &c.instructions {
                match ins {
                    Instruction::Tick => ticks += 1,
                    Instruction::Gate { gate: Gate::M | Gate::MX, .. } => boundaries.push(ticks),
                    _ => {}
                }
            }
            let mut checked = 0;
            for (r, round) in plan.rounds.iter().enumerate().skip(1) {
                let measured: Vec<PauliString> = round
                    .tile_positions
                    .iter()
                    // zx-cross also reports partial boundary operators that are
                    // only deterministic in pairs; its bulk reports are genuine.
                    .filter(|t| method == Method::ZxSame || t.support.len() == 4)
                    .filter_map(|t| {
                        let p = match t.basis? {
                            Basis::Z => Pauli::Z,
                            Basis::X => Pauli::X,
                        };
                        Some(PauliString::from_terms(t.support.iter().map(|&c| (id(c), p))))
                    })
                    .collect();
                for d in 0..c.num_detectors() {
                    let region = detecting_region(&c, d);
                    if let Some(s) = region.slices.get(&boundaries[r - 1]).filter(|s| data_only(s, &plan)) {
                        assert!(measured.iter().all(|t| t.commutes_with(s)), "{method:?} round {r} detector {d}: {s}");
                        checked += 1;
                    }
                }
            }
            assert!(checked > 20, "{method:?}: only {checked} slices checked");
        }
    }

    #[test]
    fn first_round_region_starts_at_the_reset() {
        let c = circuit(Method::NzHookAvoiding, 3, Basis::Z, 0.0, NoisePlacement::AllOps);
        let region = detecting_region(&c, 0);
        assert_eq!(region.slices.keys().next(), Some(&0));
        let region = detecting_region(&c, c.num_detectors() - 1);
        assert!(*region.slices.keys().next().unwrap() > 0);
    }

    /// A fault that is the last thing in its layer flips a detector exactly
    /// when it anticommutes with the detecting region at the next TICK.
    #[test]
    fn regions_agree_with_fault_injection() {
        for method in Method::ALL {
            let c = circuit(method, 2, Basis::Z, 1e-3, NoisePlacement::AllOps);
            let prog = FrameProgram::new(&c).unwrap();
            let regions: Vec<DetectingRegion> = (0..c.num_detectors()).map(|d| detecting_region(&c, d)).collect();
            let mut ticks = 0;
            let mut checked = 0;
            for (i, ins) in c.instructions.iter().enumerate() {
                match ins {
                    Instruction::Tick => ticks += 1,
                    Instruction::Depolarize1 { targets, .. } | Instruction::Depolarize2 { targets, .. } => {
                        let last_in_layer = matches!(c.instructions.get(i + 1), Some(Instruction::Tick));
                        if !last_in_layer {
                            continue;
                        }
                        for &q in targets.iter().take(4) {
                            for p in Pauli::ALL {
                                let fault = ps(&[(q, p)]);
                                let (flipped, _) = prog.inject(&[Fault { instruction: i, paulis: vec![(q, p)] }]);
                                let predicted: Vec<u32> = regions
                                    .iter()
                                    .filter(|r| r.slices.get(&ticks).is_some_and(|s| !s.commutes_with(&fault)))
                                    .map(|r| r.detector as u32)
                                    .collect();
                                assert_eq!(flipped, predicted, "{method:?} instruction {i} {p}{q}");
                                checked += 1;
                            }
                        }
                    }
                    _ => {}
                }
            }
            assert!(checked > 100);
        }
    }

    #[test]
    fn noiseless_sampling_gives_zeros() {
        let c = circuit(Method::ZxSame, 3, Basis::Z, 0.0, NoisePlacement::AllOps);
        let t = frame_sample(&c, 200, 1).unwrap();
        assert_eq!(t.num_shots(), 200);
        assert!((0..200).all(|s| t.defects(s).is_empty() && t.observables(s) == 0));
    }

    #[test]
    fn sampling_is_reproducible_and_chunkable() {
        let c = circuit(Method::NzHookAvoiding, 3, Basis::Z, 5e-3, NoisePlacement::AllOps);
        let a = frame_sample(&c, 300, 42).unwrap();
        assert_eq!(a, frame_sample(&c, 300, 42).unwrap());
        assert_ne!(a, frame_sample(&c, 300, 43).unwrap());
        let prog = FrameProgram::new(&c).unwrap();
        let joined = ShotTable::concat(vec![prog.sample(128, 42, 0), prog.sample(172, 42, 2)]);
        assert_eq!(joined, a);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(single.install(|| prog.sample(300, 42, 0)), a);
    }

    #[test]
    fn flip_rates_match_the_model() {
        let c = circuit(Method::NzHookAvoiding, 3, Basis::Z, 0.01, NoisePlacement::AllOps);
        let expected = detector_flip_probabilities(&c).unwrap();
        let shots = 100_000;
        let t = frame_sample(&c, shots, 9).unwrap();
        let mut counts = vec![0usize; c.num_detectors()];
        for s in 0..shots {
            for d in t.defects(s) {
                counts[d as usize] += 1;
            }
        }
        for (d, (&n, &p)) in counts.iter().zip(&expected).enumerate() {
            let sigma = (p * (1.0 - p) / shots as f64).sqrt();
            let got = n as f64 / shots as f64;
            assert!((got - p).abs() < 5.0 * sigma, "detector {d}: sampled {got}, expected {p} ± {sigma}");
        }
    }

    #[test]
    fn shot_table_roundtrips() {
        let c = circuit(Method::Alternating, 3, Basis::X, 0.02, NoisePlacement::AllOps);
        let t = frame_sample(&c, 77, 5).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 77 * (t.num_detectors() + 1).div_ceil(8));
        assert_eq!(ShotTable::read_binary(buf.as_slice()).unwrap(), t);
        assert_eq!(ShotTable::from_text(&t.to_text(), 1).unwrap(), t);
        assert!(ShotTable::read_binary(&buf[..30]).is_err());
        assert!(ShotTable::from_text("0101\n011\n", 1).is_err());
        assert!(ShotTable::from_text("01a1\n", 1).is_err());
    }

    #[test]
    fn injection_is_linear() {
        let c = circuit(Method::ZxCross, 2, Basis::Z, 1e-3, NoisePlacement::AllOps);
        let prog = FrameProgram::new(&c).unwrap();
        let noise: Vec<usize> = c.instructions.iter().enumerate().filter(|(_, i)| i.is_noise()).map(|(i, _)| i).collect();
        let a = Fault { instruction: noise[3], paulis: vec![(0, Pauli::X)] };
        let b = Fault { instruction: noise[noise.len() / 2], paulis: vec![(4, Pauli::Y)] };
        let (da, oa) = prog.inject(std::slice::from_ref(&a));
        let (db, ob) = prog.inject(std::slice::from_ref(&b));
        let (dab, oab) = prog.inject(&[a, b]);
        let sym: Vec<u32> = {
            let mut v: Vec<u32> = da.iter().chain(&db).copied().collect();
            v.sort_unstable();
            let mut out: Vec<u32> = Vec::new();
            for x in v {
                if out.last() == Some(&x) { out.pop(); } else { out.push(x); }
            }
            out
        };
        assert_eq!(dab, sym);
        assert_eq!(oab, oa ^ ob);
    }
}
