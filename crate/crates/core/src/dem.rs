//! Detector error models: exhaustive fault enumeration, graphlike
//! decomposition, decoding graphs and fault-distance search.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{Circuit, Gate, Instruction};
use crate::gf2;
use crate::pauli::{batch_rng, bernoulli_mask, check_determinism, DeterminismReport, Fault, Pauli, ShotTable};

/// Errors from model construction.
#[derive(Debug, Error)]
pub enum DemError {
    /// The circuit's detectors are not deterministic.
    #[error("circuit is not deterministic: {0:?}")]
    NotDeterministic(DeterminismReport),
    /// More than 64 observables.
    #[error("at most 64 observables are supported, circuit has {0}")]
    TooManyObservables(usize),
    /// A fault flips more than two detectors and no graphlike decomposition exists.
    #[error("fault {fault:?} flips detectors {detectors:?} and cannot be decomposed into graphlike parts")]
    Undecomposable {
        /// One of the faults with this signature.
        fault: Fault,
        /// Its detectors.
        detectors: Vec<u32>,
    },
    /// `to_graph` was given a mechanism with more than two detectors.
    #[error("mechanism {0} is not graphlike")]
    NotGraphlike(usize),
}

/// The detectors and observables a fault flips.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    /// Sorted detector ids.
    pub detectors: Vec<u32>,
    /// Observable mask.
    pub observables: u64,
}

impl Signature {
    /// True if the fault is invisible and harmless.
    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty() && self.observables == 0
    }

    /// Symmetric difference.
    pub fn xor(&self, other: &Signature) -> Signature {
        let a: BTreeSet<u32> = self.detectors.iter().copied().collect();
        let b: BTreeSet<u32> = other.detectors.iter().copied().collect();
        Signature { detectors: a.symmetric_difference(&b).copied().collect(), observables: self.observables ^ other.observables }
    }
}

/// One independent error mechanism of the model.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ErrorMechanism {
    /// Sorted detector ids (at most two in a decomposed model).
    pub detectors: Vec<u32>,
    /// Observable mask.
    pub observables: u64,
    /// Probability that the mechanism fires.
    pub probability: f64,
    /// Circuit faults whose full signature is exactly this mechanism.
    pub provenance: Vec<Fault>,
}

impl ErrorMechanism {
    /// The mechanism's signature.
    pub fn signature(&self) -> Signature {
        Signature { detectors: self.detectors.clone(), observables: self.observables }
    }
}

/// A single Pauli component of one noise channel.
#[derive(Clone, Debug)]
pub struct Component {
    /// Where and what.
    pub fault: Fault,
    /// Probability of this component.
    pub probability: f64,
    /// Index of the channel (noise instruction and target group) it belongs to.
    pub channel: usize,
    /// What it flips.
    pub signature: Signature,
    /// Signatures of its X-only and Z-only parts, kept when it is not graphlike.
    pub parts: Option<(Signature, Signature)>,
}

/// A detector error model.
#[derive(Clone, Debug)]
pub struct Dem {
    /// Number of detectors.
    pub num_detectors: usize,
    /// Number of observables.
    pub num_observables: usize,
    /// Detector coordinates as declared by the circuit.
    pub detector_coords: Vec<Vec<f64>>,
    /// Graphlike mechanisms, merged by signature and sorted.
    pub mechanisms: Vec<ErrorMechanism>,
    /// Undecomposed mechanisms merged by full signature; the exact
    /// independent-mechanism model used for direct sampling.
    pub raw: Vec<ErrorMechanism>,
}

/// Combined probability that exactly one of two independent events fires.
pub fn combine_probability(a: f64, b: f64) -> f64 {
    a * (1.0 - b) + b * (1.0 - a)
}

fn pauli_on(x: bool, z: bool) -> Pauli {
    Pauli::from_bits(x, z).expect("non-identity component")
}

/// Enumerates every Pauli component of every noise channel together with
/// its signature, via one backward sensitivity sweep: at each point the
/// sweep knows which detectors and observables an X or Z on each qubit
/// would flip.
pub fn enumerate_components(c: &Circuit) -> Result<Vec<Component>, DemError> {
    let d = c.num_detectors();
    let o = c.num_observables();
    if o > 64 {
        return Err(DemError::TooManyObservables(o));
    }
    let n = c.num_qubits();
    let w = gf2::words_for(d + o);
    let mut rec_bits: Vec<Vec<usize>> = vec![Vec::new(); c.num_measurements()];
    for (i, recs) in c.detector_records().iter().enumerate() {
        for &r in recs {
            rec_bits[r as usize].push(i);
        }
    }
    for (i, recs) in c.observable_records().iter().enumerate() {
        for &r in recs {
            rec_bits[r as usize].push(d + i);
        }
    }
    let mut sx = vec![0u64; n * w];
    let mut sz = vec![0u64; n * w];
    let mut rec = c.num_measurements();
    let to_sig = |bits: &[u64]| {
        let mut s = Signature::default();
        for b in gf2::ones(bits) {
            if b < d {
                s.detectors.push(b as u32);
            } else {
                s.observables |= 1 << (b - d);
            }
        }
        s
    };
    // Channels are numbered in forward order at the end.
    let mut per_instruction: Vec<(usize, Vec<Component>)> = Vec::new();
    let mut scratch = vec![0u64; w];
    let mut xs = vec![0u64; w];
    let mut zs = vec![0u64; w];
    for (i, ins) in c.instructions.iter().enumerate().rev() {
        match ins {
            Instruction::Gate { gate, targets } => match gate {
                Gate::M | Gate::MX => {
                    for &q in targets.iter().rev() {
                        rec -= 1;
                        let s = if *gate == Gate::M { &mut sx } else { &mut sz };
                        for &b in &rec_bits[rec] {
                            gf2::flip(&mut s[q as usize * w..(q as usize + 1) * w], b);
                        }
                    }
                }
                Gate::R | Gate::RX => {
                    for &q in targets {
                        let q = q as usize;
                        sx[q * w..(q + 1) * w].fill(0);
                        sz[q * w..(q + 1) * w].fill(0);
                    }
                }
                Gate::H => {
                    for &q in targets {
                        let q = q as usize;
                        for k in 0..w {
                            std::mem::swap(&mut sx[q * w + k], &mut sz[q * w + k]);
                        }
                    }
                }
                Gate::CX => {
                    for pair in targets.chunks(2).rev() {
                        let (a, b) = (pair[0] as usize, pair[1] as usize);
                        for k in 0..w {
                            sx[a * w + k] ^= sx[b * w + k];
                            sz[b * w + k] ^= sz[a * w + k];
                        }
                    }
                }
            },
            Instruction::Depolarize1 { p, targets } => {
                let mut comps = Vec::new();
                for (ti, &q) in targets.iter().enumerate() {
                    let q = q as usize;
                    for (x, z) in [(true, false), (true, true), (false, true)] {
                        scratch.fill(0);
                        if x {
                            gf2::xor_into(&mut scratch, &sx[q * w..(q + 1) * w]);
                        }
                        if z {
                            gf2::xor_into(&mut scratch, &sz[q * w..(q + 1) * w]);
                        }
                        let signature = to_sig(&scratch);
                        if signature.is_empty() {
                            continue;
                        }
                        let parts = (signature.detectors.len() > 2 && x && z)
                            .then(|| (to_sig(&sx[q * w..(q + 1) * w]), to_sig(&sz[q * w..(q + 1) * w])));
                        comps.push(Component {
                            fault: Fault { instruction: i, paulis: vec![(q as u32, pauli_on(x, z))] },
                            probability: p / 3.0,
                            channel: ti,
                            signature,
                            parts,
                        });
                    }
                }
                per_instruction.push((targets.len(), comps));
            }
            Instruction::Depolarize2 { p, targets } => {
                let mut comps = Vec::new();
                for (ti, pair) in targets.chunks(2).enumerate() {
                    let (a, b) = (pair[0] as usize, pair[1] as usize);
                    for k in 1u32..16 {
                        let (pa, pb) = (k & 3, k >> 2);
                        let (xa, za, xb, zb) = (pa & 1 == 1, pa & 2 == 2, pb & 1 == 1, pb & 2 == 2);
                        xs.fill(0);
                        zs.fill(0);
                        if xa {
                            gf2::xor_into(&mut xs, &sx[a * w..(a + 1) * w]);
                        }
                        if xb {
                            gf2::xor_into(&mut xs, &sx[b * w..(b + 1) * w]);
                        }
                        if za {
                            gf2::xor_into(&mut zs, &sz[a * w..(a + 1) * w]);
                        }
                        if zb {
                            gf2::xor_into(&mut zs, &sz[b * w..(b + 1) * w]);
                        }
                        scratch.copy_from_slice(&xs);
                        gf2::xor_into(&mut scratch, &zs);
                        let signature = to_sig(&scratch);
                        if signature.is_empty() {
                            continue;
                        }
                        let parts = (signature.detectors.len() > 2 && (xa || xb) && (za || zb))
                            .then(|| (to_sig(&xs), to_sig(&zs)));
                        let mut paulis = Vec::new();
                        if pa != 0 {
                            paulis.push((a as u32, pauli_on(xa, za)));
                        }
                        if pb != 0 {
                            paulis.push((b as u32, pauli_on(xb, zb)));
                        }
                        comps.push(Component {
                            fault: Fault { instruction: i, paulis },
                            probability: p / 15.0,
                            channel: ti,
                            signature,
                            parts,
                        });
                    }
                }
                per_instruction.push((targets.len() / 2, comps));
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    let mut base = 0;
    for (channels, comps) in per_instruction.into_iter().rev() {
        out.extend(comps.into_iter().map(|mut comp| {
            comp.channel += base;
            comp
        }));
        base += channels;
    }
    Ok(out)
}

/// Exact probability that each detector fires, treating the components of
/// one channel as mutually exclusive and distinct channels as independent.
pub fn detector_flip_probabilities(c: &Circuit) -> Result<Vec<f64>, DemError> {
    let comps = enumerate_components(c)?;
    let mut per_channel: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    for comp in &comps {
        for &det in &comp.signature.detectors {
            *per_channel.entry((comp.channel, det)).or_default() += comp.probability;
        }
    }
    let mut parity = vec![1.0f64; c.num_detectors()];
    for ((_, det), q) in per_channel {
        parity[det as usize] *= 1.0 - 2.0 * q;
    }
    Ok(parity.into_iter().map(|v| (1.0 - v) / 2.0).collect())
}

/// Merges components with identical signatures.
fn merge(components: &[Component]) -> BTreeMap<Signature, (f64, Vec<Fault>)> {
    let mut groups: BTreeMap<Signature, Vec<(Fault, f64)>> = BTreeMap::new();
    for comp in components {
        groups.entry(comp.signature.clone()).or_default().push((comp.fault.clone(), comp.probability));
    }
    groups
        .into_iter()
        .map(|(sig, mut list)| {
            list.sort_by(|a, b| a.0.cmp(&b.0));
            let p = list.iter().fold(0.0, |acc, (_, p)| combine_probability(acc, *p));
            (sig, (p, list.into_iter().map(|(f, _)| f).collect()))
        })
        .collect()
}

/// Splits a signature into graphlike signatures drawn from `known`.
struct Decomposer<'a> {
    known: &'a BTreeMap<Signature, (f64, Vec<Fault>)>,
    by_detector: HashMap<u32, Vec<&'a Signature>>,
}

impl<'a> Decomposer<'a> {
    fn new(known: &'a BTreeMap<Signature, (f64, Vec<Fault>)>) -> Self {
        let mut by_detector: HashMap<u32, Vec<&Signature>> = HashMap::new();
        for sig in known.keys().filter(|s| s.detectors.len() <= 2) {
            for &d in &sig.detectors {
                by_detector.entry(d).or_default().push(sig);
            }
        }
        Decomposer { known, by_detector }
    }

    fn is_known_graphlike(&self, s: &Signature) -> bool {
        s.detectors.len() <= 2 && self.known.contains_key(s)
    }

    /// Decomposition into at most `depth` known graphlike parts, each using
    /// only detectors of `s`.
    fn search(&self, s: &Signature, depth: usize) -> Option<Vec<Signature>> {
        if s.is_empty() {
            return Some(Vec::new());
        }
        if self.is_known_graphlike(s) {
            return Some(vec![s.clone()]);
        }
        if depth <= 1 || s.detectors.is_empty() {
            return None;
        }
        let first = s.detectors[0];
        for cand in self.by_detector.get(&first).into_iter().flatten() {
            if !cand.detectors.iter().all(|d| s.detectors.binary_search(d).is_ok()) {
                continue;
            }
            if let Some(mut rest) = self.search(&s.xor(cand), depth - 1) {
                rest.insert(0, (*cand).clone());
                return Some(rest);
            }
        }
        None
    }

    fn decompose_any(&self, s: &Signature) -> Option<Vec<Signature>> {
        let max_depth = s.detectors.len().div_ceil(2).max(1) + 1;
        (2..=max_depth).find_map(|depth| self.search(s, depth))
    }

    fn decompose(&self, s: &Signature, splits: &[(Signature, Signature)]) -> Option<Vec<Signature>> {
        for (xp, zp) in splits {
            if let (Some(mut a), Some(b)) = (self.decompose_any(xp), self.decompose_any(zp)) {
                a.extend(b);
                return Some(a);
            }
        }
        self.decompose_any(s)
    }
}

/// Builds the detector error model of a noisy circuit.
pub fn build_dem(c: &Circuit) -> Result<Dem, DemError> {
    let report = check_determinism(c);
    if !report.ok() {
        return Err(DemError::NotDeterministic(report));
    }
    let components = enumerate_components(c)?;
    let merged = merge(&components);
    let mut splits: HashMap<&Signature, Vec<(Signature, Signature)>> = HashMap::new();
    for comp in &components {
        if let Some(parts) = &comp.parts {
            splits.entry(&comp.signature).or_default().push(parts.clone());
        }
    }
    let decomposer = Decomposer::new(&merged);
    let mut contributions: BTreeMap<Signature, Vec<f64>> = BTreeMap::new();
    for (sig, (p, faults)) in &merged {
        if sig.detectors.len() <= 2 {
            contributions.entry(sig.clone()).or_default().push(*p);
            continue;
        }
        let parts = decomposer
            .decompose(sig, splits.get(sig).map_or(&[][..], |v| v.as_slice()))
            .ok_or_else(|| DemError::Undecomposable { fault: faults[0].clone(), detectors: sig.detectors.clone() })?;
        for part in parts {
            contributions.entry(part).or_default().push(*p);
        }
    }
    let mechanisms = contributions
        .into_iter()
        .map(|(sig, ps)| ErrorMechanism {
            probability: ps.iter().fold(0.0, |acc, p| combine_probability(acc, *p)),
            provenance: merged.get(&sig).map(|(_, f)| f.clone()).unwrap_or_default(),
            detectors: sig.detectors,
            observables: sig.observables,
        })
        .collect();
    let raw = merged
        .into_iter()
        .map(|(sig, (p, faults))| ErrorMechanism {
            detectors: sig.detectors,
            observables: sig.observables,
            probability: p,
            provenance: faults,
        })
        .collect();
    Ok(Dem {
        num_detectors: c.num_detectors(),
        num_observables: c.num_observables(),
        detector_coords: c.detector_coords(),
        mechanisms,
        raw,
    })
}

impl Dem {
    /// Text export: one `error(p) D.. L..` line per graphlike mechanism.
    pub fn to_text(&self) -> String {
        mechanisms_to_text(&self.mechanisms)
    }

    /// Samples shots directly from the undecomposed mechanisms. Batches of
    /// 64 shots use the same stream layout as circuit sampling.
    pub fn sample(&self, shots: usize, seed: u64) -> ShotTable {
        let batches = shots.div_ceil(64);
        let parts: Vec<ShotTable> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let count = (shots - b * 64).min(64);
                let mut rng = batch_rng(seed, b as u64);
                let mut dets = vec![0u64; self.num_detectors];
                let mut obs = vec![0u64; self.num_observables];
                for m in &self.raw {
                    let mask = bernoulli_mask(&mut rng, m.probability);
                    if mask == 0 {
                        continue;
                    }
                    for &d in &m.detectors {
                        dets[d as usize] ^= mask;
                    }
                    for (i, word) in obs.iter_mut().enumerate() {
                        if m.observables >> i & 1 == 1 {
                            *word ^= mask;
                        }
                    }
                }
                let mut t = ShotTable::zeros(count, self.num_detectors, self.num_observables);
                t.fill_batch(0, count, &dets, &obs);
                t
            })
            .collect();
        if parts.is_empty() {
            return ShotTable::zeros(0, self.num_detectors, self.num_observables);
        }
        ShotTable::concat(parts)
    }

    /// The decoding graph of the graphlike mechanisms, optionally restricted
    /// to the detectors marked in `keep` (mechanisms touching only dropped
    /// detectors are left out; dropped endpoints become the boundary).
    pub fn to_graph(&self, keep: Option<&[bool]>) -> Result<DecodingGraph, DemError> {
        to_graph(&self.mechanisms, self.num_detectors, keep)
    }
}

/// Renders mechanisms in the `error(p) D3 D17 L0` text format.
pub fn mechanisms_to_text(mechanisms: &[ErrorMechanism]) -> String {
    let mut sorted: Vec<&ErrorMechanism> = mechanisms.iter().collect();
    sorted.sort_by(|a, b| (&a.detectors, a.observables).cmp(&(&b.detectors, b.observables)));
    let mut out = String::new();
    for m in sorted {
        let _ = write!(out, "error({})", m.probability);
        for d in &m.detectors {
            let _ = write!(out, " D{d}");
        }
        for i in 0..64 {
            if m.observables >> i & 1 == 1 {
                let _ = write!(out, " L{i}");
            }
        }
        out.push('\n');
    }
    out
}

/// An edge of the decoding graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoint.
    pub u: u32,
    /// Endpoint; equals the graph's boundary id for single-detector mechanisms.
    pub v: u32,
    /// ln((1−p)/p), clamped at zero.
    pub weight: f64,
    /// Mechanism probability.
    pub probability: f64,
    /// Observable mask.
    pub observables: u64,
    /// Index of the source mechanism.
    pub mechanism: usize,
}

/// Detectors plus one virtual boundary node, joined by graphlike mechanisms.
#[derive(Clone, Debug)]
pub struct DecodingGraph {
    /// Number of detector nodes; the boundary node has this id.
    pub num_detectors: usize,
    /// Edges.
    pub edges: Vec<Edge>,
    /// Per node (boundary last): (neighbor, edge index).
    pub adjacency: Vec<Vec<(u32, usize)>>,
}

impl DecodingGraph {
    /// Id of the boundary node.
    pub fn boundary(&self) -> u32 {
        self.num_detectors as u32
    }

    /// Number of nodes including the boundary.
    pub fn num_nodes(&self) -> usize {
        self.num_detectors + 1
    }

    /// Builds a graph directly from edges (used for synthetic instances).
    pub fn from_edges(num_detectors: usize, edges: Vec<Edge>) -> DecodingGraph {
        let mut adjacency = vec![Vec::new(); num_detectors + 1];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.u as usize].push((e.v, i));
            if e.u != e.v {
                adjacency[e.v as usize].push((e.u, i));
            }
        }
        DecodingGraph { num_detectors, edges, adjacency }
    }
}

/// Weight of an edge with firing probability `p`.
pub fn edge_weight(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - p) / p).ln().max(0.0)
}

/// Builds the decoding graph of graphlike mechanisms.
pub fn to_graph(mechanisms: &[ErrorMechanism], num_detectors: usize, keep: Option<&[bool]>) -> Result<DecodingGraph, DemError> {
    let boundary = num_detectors as u32;
    let kept = |d: u32| keep.is_none_or(|k| k[d as usize]);
    let mut edges = Vec::new();
    for (i, m) in mechanisms.iter().enumerate() {
        if m.detectors.len() > 2 {
            return Err(DemError::NotGraphlike(i));
        }
        let ends: Vec<u32> = m.detectors.iter().copied().filter(|&d| kept(d)).collect();
        let (u, v) = match ends.as_slice() {
            [] => continue,
            [a] => (*a, boundary),
            [a, b] => (*a, *b),
            _ => unreachable!(),
        };
        edges.push(Edge { u, v, weight: edge_weight(m.probability), probability: m.probability, observables: m.observables, mechanism: i });
    }
    Ok(DecodingGraph::from_edges(num_detectors, edges))
}

/// Minimum number of graphlike mechanisms whose combined effect flips no
/// detector but some observable, with a witness (mechanism indices).
///
/// Such a set is an even-degree edge set of the decoding graph (the
/// boundary node has no parity constraint, and handshake makes it even
/// anyway) with odd observable parity; a minimum one is a simple cycle, so
/// a breadth-first search over (node, observable mask) states from every
/// endpoint of an observable-carrying edge finds it exactly.
pub fn shortest_graphlike_error(mechanisms: &[ErrorMechanism], num_detectors: usize) -> Result<Option<(usize, Vec<usize>)>, DemError> {
    let g = to_graph(mechanisms, num_detectors, None)?;
    let mut starts: BTreeSet<u32> = BTreeSet::new();
    for e in &g.edges {
        if e.observables != 0 {
            starts.insert(e.u.min(e.v));
        }
    }
    let mut best: Option<(usize, Vec<usize>)> = None;
    for &s in &starts {
        let limit = best.as_ref().map_or(usize::MAX, |b| b.0);
        if let Some(walk) = shortest_odd_closed_walk(&g, s, limit) {
            let cycle = cancel_pairs(walk);
            if best.as_ref().is_none_or(|b| cycle.len() < b.0) {
                best = Some((cycle.len(), cycle));
            }
        }
    }
    Ok(best.map(|(w, edges)| {
        let mut mech: Vec<usize> = edges.iter().map(|&e| g.edges[e].mechanism).collect();
        mech.sort_unstable();
        (w, mech)
    }))
}

fn shortest_odd_closed_walk(g: &DecodingGraph, start: u32, limit: usize) -> Option<Vec<usize>> {
    let mut parent: HashMap<(u32, u64), (u32, u64, usize)> = HashMap::new();
    let mut depth: HashMap<(u32, u64), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    depth.insert((start, 0), 0);
    queue.push_back((start, 0u64));
    while let Some((v, m)) = queue.pop_front() {
        let dv = depth[&(v, m)];
        if dv + 1 >= limit {
            break;
        }
        for &(u, ei) in &g.adjacency[v as usize] {
            let nm = m ^ g.edges[ei].observables;
            if depth.contains_key(&(u, nm)) {
                continue;
            }
            depth.insert((u, nm), dv + 1);
            parent.insert((u, nm), (v, m, ei));
            if u == start && nm != 0 {
                let mut walk = Vec::new();
                let mut cur = (u, nm);
                while cur != (start, 0) {
                    let (pv, pm, pe) = parent[&cur];
                    walk.push(pe);
                    cur = (pv, pm);
                }
                return Some(walk);
            }
            queue.push_back((u, nm));
        }
    }
    None
}

fn cancel_pairs(edges: Vec<usize>) -> Vec<usize> {
    let mut count: BTreeMap<usize, usize> = BTreeMap::new();
    for e in edges {
        *count.entry(e).or_default() += 1;
    }
    count.into_iter().filter(|(_, c)| c % 2 == 1).map(|(e, _)| e).collect()
}

/// Checks that a set of mechanisms flips no detector and some observable.
pub fn is_undetectable_logical(mechanisms: &[ErrorMechanism], chosen: &[usize]) -> bool {
    let mut dets: BTreeSet<u32> = BTreeSet::new();
    let mut obs = 0u64;
    for &i in chosen {
        for &d in &mechanisms[i].detectors {
            if !dets.remove(&d) {
                dets.insert(d);
            }
        }
        obs ^= mechanisms[i].observables;
    }
    dets.is_empty() && obs != 0
}

/// Bounded search for an undetectable logical error among arbitrary
/// (including non-graphlike) mechanisms. Returns indices of a witness of
/// weight at most `max_weight`, or `None` if there is none up to the bound.
pub fn undetectable_error_search(mechanisms: &[ErrorMechanism], max_weight: usize) -> Option<Vec<usize>> {
    if max_weight == 0 {
        return None;
    }
    let mut by_detector: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, m) in mechanisms.iter().enumerate() {
        for &d in &m.detectors {
            by_detector.entry(d).or_default().push(i);
        }
    }
    let max_span = mechanisms.iter().map(|m| m.detectors.len()).max().unwrap_or(0).max(1);
    // Iterative deepening so the first witness found is a lightest one.
    for w in 1..=max_weight {
        for (i, m) in mechanisms.iter().enumerate() {
            if m.observables == 0 && w == 1 {
                continue;
            }
            let dets: BTreeSet<u32> = m.detectors.iter().copied().collect();
            let mut chosen = vec![i];
            if extend_search(mechanisms, &by_detector, max_span, dets, m.observables, w - 1, &mut chosen) {
                return Some(chosen);
            }
        }
    }
    None
}

fn extend_search(
    mechanisms: &[ErrorMechanism],
    by_detector: &HashMap<u32, Vec<usize>>,
    max_span: usize,
    dets: BTreeSet<u32>,
    obs: u64,
    budget: usize,
    chosen: &mut Vec<usize>,
) -> bool {
    let Some(&first) = dets.iter().next() else {
        return obs != 0 && budget == 0;
    };
    if budget == 0 || dets.len() > budget * max_span {
        return false;
    }
    for &j in by_detector.get(&first).into_iter().flatten() {
        if chosen.contains(&j) || j < chosen[0] {
            continue;
        }
        let mut next = dets.clone();
        for &d in &mechanisms[j].detectors {
            if !next.remove(&d) {
                next.insert(d);
            }
        }
        chosen.push(j);
        if extend_search(mechanisms, by_detector, max_span, next, obs ^ mechanisms[j].observables, budget - 1, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}
