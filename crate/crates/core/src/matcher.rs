//! Exact minimum-weight perfect-matching decoder.
//!
//! Every defect is joined to every other defect by its shortest path in the
//! decoding graph and to a private copy of the boundary; boundary copies are
//! joined to each other at zero cost, so any number of defects may end on
//! the boundary. The resulting complete graph is matched exactly with a
//! weighted blossom algorithm. Weights are integers (the graph's
//! log-likelihood weights scaled by [`WEIGHT_SCALE`]), which keeps the
//! blossom duals exact.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::dem::DecodingGraph;
use crate::pauli::ShotTable;

/// Multiplier turning float edge weights into integers.
pub const WEIGHT_SCALE: f64 = 1024.0;

/// Graphs up to this many nodes keep every shortest-path tree they compute.
const CACHE_NODE_LIMIT: usize = 4096;

/// Decoder errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchError {
    /// A defect can reach neither the boundary nor a partner defect.
    #[error("detector {0} cannot be matched: no path to the boundary or another defect")]
    Unreachable(u32),
    /// Defect id out of range.
    #[error("detector {0} is not a node of the decoding graph")]
    UnknownDetector(u32),
    /// Shot table and graph disagree on the number of detectors.
    #[error("shot table has {shots} detectors but the graph has {graph}")]
    DimensionMismatch {
        /// Detectors per shot.
        shots: usize,
        /// Detector nodes in the graph.
        graph: usize,
    },
}

/// Result of decoding one syndrome.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Correction {
    /// Matched pairs; `None` is the boundary.
    pub pairs: Vec<(u32, Option<u32>)>,
    /// Predicted observable flips.
    pub observables: u64,
    /// Total integer weight.
    pub weight: i64,
}

/// Shortest paths from one source; the boundary is a sink, never a relay.
#[derive(Debug)]
struct Sssp {
    dist: Vec<i64>,
    obs: Vec<u64>,
}

/// Decoder bound to one decoding graph.
#[derive(Debug)]
pub struct Matcher {
    graph: DecodingGraph,
    int_weights: Vec<i64>,
    cache: Option<Vec<OnceLock<Arc<Sssp>>>>,
}

const UNREACHABLE: i64 = i64::MAX;

impl Matcher {
    /// Prepares a decoder. Edge weights must be non-negative.
    pub fn new(graph: DecodingGraph) -> Matcher {
        let int_weights = graph.edges.iter().map(|e| scale_weight(e.weight)).collect();
        let cache = (graph.num_nodes() <= CACHE_NODE_LIMIT).then(|| (0..graph.num_nodes()).map(|_| OnceLock::new()).collect());
        Matcher { graph, int_weights, cache }
    }

    /// The underlying graph.
    pub fn graph(&self) -> &DecodingGraph {
        &self.graph
    }

    fn dijkstra(&self, source: u32) -> Sssp {
        let n = self.graph.num_nodes();
        let boundary = self.graph.boundary();
        let mut dist = vec![UNREACHABLE; n];
        let mut obs = vec![0u64; n];
        let mut heap = BinaryHeap::new();
        dist[source as usize] = 0;
        heap.push(Reverse((0i64, source)));
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > dist[v as usize] || (v == boundary && v != source) {
                continue;
            }
            for &(u, ei) in &self.graph.adjacency[v as usize] {
                let nd = d + self.int_weights[ei];
                if nd < dist[u as usize] {
                    dist[u as usize] = nd;
                    obs[u as usize] = obs[v as usize] ^ self.graph.edges[ei].observables;
                    heap.push(Reverse((nd, u)));
                }
            }
        }
        Sssp { dist, obs }
    }

    fn paths_from(&self, source: u32) -> Arc<Sssp> {
        match &self.cache {
            Some(cache) => cache[source as usize].get_or_init(|| Arc::new(self.dijkstra(source))).clone(),
            None => Arc::new(self.dijkstra(source)),
        }
    }

    /// Minimum-weight pairing of `defects` with each other or the boundary.
    pub fn decode(&self, defects: &[u32]) -> Result<Correction, MatchError> {
        if defects.is_empty() {
            return Ok(Correction { pairs: Vec::new(), observables: 0, weight: 0 });
        }
        for &d in defects {
            if d as usize >= self.graph.num_detectors {
                return Err(MatchError::UnknownDetector(d));
            }
        }
        let boundary = self.graph.boundary() as usize;
        let trees: Vec<Arc<Sssp>> = defects.iter().map(|&d| self.paths_from(d)).collect();
        let k = defects.len();
        let mut problem = PairingProblem::new(k);
        for i in 0..k {
            let b = trees[i].dist[boundary];
            if b != UNREACHABLE {
                problem.boundary[i] = Some((b, trees[i].obs[boundary]));
            }
            for j in i + 1..k {
                let dj = trees[i].dist[defects[j] as usize];
                if dj != UNREACHABLE {
                    problem.pair[i * k + j] = Some((dj, trees[i].obs[defects[j] as usize]));
                }
            }
        }
        let solution = problem.solve().map_err(|i| MatchError::Unreachable(defects[i]))?;
        Ok(Correction {
            pairs: solution.pairs.iter().map(|&(i, j)| (defects[i], j.map(|j| defects[j]))).collect(),
            observables: solution.observables,
            weight: solution.weight,
        })
    }

    /// Decodes every shot; see [`BatchResult`].
    pub fn decode_batch(&self, shots: &ShotTable) -> Result<BatchResult, MatchError> {
        if shots.num_detectors() != self.graph.num_detectors {
            return Err(MatchError::DimensionMismatch { shots: shots.num_detectors(), graph: self.graph.num_detectors });
        }
        const CHUNK: usize = 4096;
        let n = shots.num_shots();
        let chunks: Vec<Result<Vec<u64>, MatchError>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut memo: HashMap<Vec<u32>, u64> = HashMap::new();
                let mut out = Vec::with_capacity(CHUNK);
                for s in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let defects = shots.defects(s);
                    let prediction = match defects.len() {
                        0 => 0,
                        _ => match memo.get(&defects) {
                            Some(&p) => p,
                            None => {
                                let p = self.decode(&defects)?.observables;
                                if memo.len() < 1 << 16 {
                                    memo.insert(defects, p);
                                }
                                p
                            }
                        },
                    };
                    out.push(prediction);
                }
                Ok(out)
            })
            .collect();
        let mut predictions = Vec::with_capacity(n);
        for c in chunks {
            predictions.extend(c?);
        }
        let errors = predictions.iter().enumerate().filter(|&(s, &p)| p != shots.observables(s)).count();
        Ok(BatchResult { shots: n, errors, predictions })
    }
}

/// Scaled integer form of an edge weight.
pub fn scale_weight(w: f64) -> i64 {
    assert!(w >= 0.0, "edge weights must be non-negative");
    if w.is_infinite() {
        return i64::MAX / 4;
    }
    (w * WEIGHT_SCALE).round() as i64
}

/// Outcome of [`Matcher::decode_batch`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchResult {
    /// Number of shots.
    pub shots: usize,
    /// Shots whose prediction differs from the actual observable flips.
    pub errors: usize,
    /// Predicted observable mask per shot.
    pub predictions: Vec<u64>,
}

impl BatchResult {
    /// Estimated logical error rate.
    pub fn p_logical(&self) -> f64 {
        if self.shots == 0 {
            0.0
        } else {
            self.errors as f64 / self.shots as f64
        }
    }

    /// Binomial standard error of [`BatchResult::p_logical`].
    pub fn std_err(&self) -> f64 {
        binomial_std_err(self.errors, self.shots)
    }

    /// Summary JSON `{shots, errors, p_logical, std_err}`.
    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "shots": self.shots,
            "errors": self.errors,
            "p_logical": self.p_logical(),
            "std_err": self.std_err(),
        })
        .to_string()
    }

    /// One bitstring line per shot, observable 0 first.
    pub fn predictions_text(&self, num_observables: usize) -> String {
        let mut out = String::with_capacity(self.predictions.len() * (num_observables + 1));
        for &p in &self.predictions {
            for i in 0..num_observables {
                out.push(if p >> i & 1 == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

/// sqrt(p̂(1−p̂)/N).
pub fn binomial_std_err(errors: usize, shots: usize) -> f64 {
    if shots == 0 {
        return 0.0;
    }
    let p = errors as f64 / shots as f64;
    (p * (1.0 - p) / shots as f64).sqrt()
}

/// A pairing instance on `k` defects: optional pair costs (upper triangle,
/// row-major `i*k+j`) and optional boundary costs, each with the observable
/// mask of the corresponding path.
#[derive(Clone, Debug)]
pub struct PairingProblem {
    k: usize,
    /// Cost and mask of pairing `i` with `j > i`.
    pub pair: Vec<Option<(i64, u64)>>,
    /// Cost and mask of sending `i` to the boundary.
    pub boundary: Vec<Option<(i64, u64)>>,
}

/// Optimal pairing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairingSolution {
    /// (i, j) with j = None for the boundary; sorted.
    pub pairs: Vec<(usize, Option<usize>)>,
    /// XOR of the chosen masks.
    pub observables: u64,
    /// Total cost.
    pub weight: i64,
}

impl PairingProblem {
    /// An instance with no allowed pairings.
    pub fn new(k: usize) -> PairingProblem {
        PairingProblem { k, pair: vec![None; k * k], boundary: vec![None; k] }
    }

    /// Number of defects.
    pub fn len(&self) -> usize {
        self.k
    }

    /// True for zero defects.
    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    /// Cost of pairing `i` and `j` (either order).
    pub fn pair_cost(&self, i: usize, j: usize) -> Option<(i64, u64)> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pair[a * self.k + b]
    }

    /// Exact minimum-cost solution via weighted blossom matching. On
    /// failure returns the index of a defect left unmatched.
    pub fn solve(&self) -> Result<PairingSolution, usize> {
        let k = self.k;
        let mut edges: Vec<(usize, usize, i64)> = Vec::new();
        let mut masks: Vec<u64> = Vec::new();
        let mut costs: Vec<i64> = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if let Some((c, m)) = self.pair_cost(i, j) {
                    // A pair costing at least both boundary exits is never needed.
                    if let (Some((bi, _)), Some((bj, _))) = (self.boundary[i], self.boundary[j]) {
                        if c >= bi.saturating_add(bj) {
                            continue;
                        }
                    }
                    edges.push((i, j, 0));
                    costs.push(c);
                    masks.push(m);
                }
            }
            if let Some((c, m)) = self.boundary[i] {
                edges.push((i, k + i, 0));
                costs.push(c);
                masks.push(m);
            }
        }
        // Defects paired with each other leave their copies free; those
        // always come in pairs, so copies may pair among themselves freely.
        for i in 0..k {
            for j in i + 1..k {
                edges.push((k + i, k + j, 0));
                costs.push(0);
                masks.push(0);
            }
        }
        let top = costs.iter().copied().max().unwrap_or(0) + 1;
        for (e, &c) in edges.iter_mut().zip(&costs) {
            e.2 = top - c;
        }
        let mate = max_weight_matching(2 * k, &edges, true);
        let edge_of: HashMap<(usize, usize), usize> = edges.iter().enumerate().map(|(i, e)| ((e.0, e.1), i)).collect();
        let mut pairs = Vec::new();
        let mut observables = 0u64;
        let mut weight = 0i64;
        for i in 0..k {
            let m = mate[i].ok_or(i)?;
            if m < i {
                continue;
            }
            let key = (i, m);
            let e = edge_of[&key];
            observables ^= masks[e];
            weight += costs[e];
            pairs.push((i, if m >= k { None } else { Some(m) }));
        }
        Ok(PairingSolution { pairs, observables, weight })
    }

    /// Exhaustive optimum over all pairings (exponential; for testing).
    pub fn brute_force(&self) -> Option<PairingSolution> {
        type Pairs = Vec<(usize, Option<usize>)>;
        fn rec(p: &PairingProblem, used: &mut Vec<bool>, acc: &mut Pairs, best: &mut Option<(i64, Pairs)>, cost: i64) {
            if best.as_ref().is_some_and(|b| cost > b.0) {
                return;
            }
            let Some(i) = used.iter().position(|u| !u) else {
                if best.as_ref().is_none_or(|b| cost < b.0) {
                    *best = Some((cost, acc.clone()));
                }
                return;
            };
            used[i] = true;
            if let Some((c, _)) = p.boundary[i] {
                acc.push((i, None));
                rec(p, used, acc, best, cost + c);
                acc.pop();
            }
            for j in i + 1..p.k {
                if used[j] {
                    continue;
                }
                if let Some((c, _)) = p.pair_cost(i, j) {
                    used[j] = true;
                    acc.push((i, Some(j)));
                    rec(p, used, acc, best, cost + c);
                    acc.pop();
                    used[j] = false;
                }
            }
            used[i] = false;
        }
        let mut best = None;
        rec(self, &mut vec![false; self.k], &mut Vec::new(), &mut best, 0);
        best.map(|(weight, pairs)| {
            let observables = pairs
                .iter()
                .map(|&(i, j)| match j {
                    Some(j) => self.pair_cost(i, j).expect("chosen").1,
                    None => self.boundary[i].expect("chosen").1,
                })
                .fold(0, |a, m| a ^ m);
            PairingSolution { pairs, observables, weight }
        })
    }
}

/// Maximum-weight matching in a general graph (Edmonds' blossom algorithm
/// with dual variables, O(n³)). With `max_cardinality` the result is a
/// maximum-cardinality matching of maximum weight among those. Returns the
/// mate of every vertex.
pub fn max_weight_matching(n: usize, edges: &[(usize, usize, i64)], max_cardinality: bool) -> Vec<Option<usize>> {
    Blossom::new(n, edges).run(max_cardinality)
}

struct Blossom<'a> {
    n: usize,
    edges: &'a [(usize, usize, i64)],
    endpoint: Vec<usize>,
    neighbend: Vec<Vec<usize>>,
    mate: Vec<Option<usize>>,
    label: Vec<u8>,
    labelend: Vec<Option<usize>>,
    inblossom: Vec<usize>,
    blossomparent: Vec<Option<usize>>,
    blossomchilds: Vec<Vec<usize>>,
    blossombase: Vec<Option<usize>>,
    blossomendps: Vec<Vec<usize>>,
    bestedge: Vec<Option<usize>>,
    blossombestedges: Vec<Option<Vec<usize>>>,
    unusedblossoms: Vec<usize>,
    dualvar: Vec<i64>,
    allowedge: Vec<bool>,
    queue: Vec<usize>,
}

impl<'a> Blossom<'a> {
    fn new(n: usize, edges: &'a [(usize, usize, i64)]) -> Self {
        let maxweight = edges.iter().map(|e| e.2).max().unwrap_or(0).max(0);
        let mut endpoint = Vec::with_capacity(2 * edges.len());
        let mut neighbend = vec![Vec::new(); n];
        for (k, &(i, j, _)) in edges.iter().enumerate() {
            endpoint.push(i);
            endpoint.push(j);
            neighbend[i].push(2 * k + 1);
            neighbend[j].push(2 * k);
        }
        let mut dualvar = vec![maxweight; n];
        dualvar.extend(std::iter::repeat_n(0, n));
        Blossom {
            n,
            edges,
            endpoint,
            neighbend,
            mate: vec![None; n],
            label: vec![0; 2 * n],
            labelend: vec![None; 2 * n],
            inblossom: (0..n).collect(),
            blossomparent: vec![None; 2 * n],
            blossomchilds: vec![Vec::new(); 2 * n],
            blossombase: (0..n).map(Some).chain(std::iter::repeat_n(None, n)).collect(),
            blossomendps: vec![Vec::new(); 2 * n],
            bestedge: vec![None; 2 * n],
            blossombestedges: vec![None; 2 * n],
            unusedblossoms: (n..2 * n).collect(),
            dualvar,
            allowedge: vec![false; edges.len()],
            queue: Vec::new(),
        }
    }

    fn slack(&self, k: usize) -> i64 {
        let (i, j, w) = self.edges[k];
        self.dualvar[i] + self.dualvar[j] - 2 * w
    }

    fn leaves(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![b];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                stack.extend(self.blossomchilds[x].iter().rev().copied());
            }
        }
        out
    }

    fn assign_label(&mut self, w: usize, t: u8, p: Option<usize>) {
        let b = self.inblossom[w];
        self.label[w] = t;
        self.label[b] = t;
        self.labelend[w] = p;
        self.labelend[b] = p;
        self.bestedge[w] = None;
        self.bestedge[b] = None;
        if t == 1 {
            let leaves = self.leaves(b);
            self.queue.extend(leaves);
        } else {
            let base = self.blossombase[b].expect("labelled blossom has a base");
            let m = self.mate[base].expect("T-blossom base is matched");
            self.assign_label(self.endpoint[m], 1, Some(m ^ 1));
        }
    }

    fn scan_blossom(&mut self, v: usize, w: usize) -> Option<usize> {
        let mut path = Vec::new();
        let mut base = None;
        let (mut v, mut w) = (Some(v), Some(w));
        while let Some(cv) = v {
            let b = self.inblossom[cv];
            if self.label[b] & 4 != 0 {
                base = self.blossombase[b];
                break;
            }
            path.push(b);
            self.label[b] = 5;
            match self.labelend[b] {
                None => v = None,
                Some(le) => {
                    let t = self.endpoint[le];
                    let bt = self.inblossom[t];
                    v = Some(self.endpoint[self.labelend[bt].expect("T-blossom has labelend")]);
                }
            }
            if w.is_some() {
                std::mem::swap(&mut v, &mut w);
            }
        }
        for b in path {
            self.label[b] = 1;
        }
        base
    }

    fn add_blossom(&mut self, base: usize, k: usize) {
        let (mut v, mut w, _) = self.edges[k];
        let bb = self.inblossom[base];
        let mut bv = self.inblossom[v];
        let mut bw = self.inblossom[w];
        let b = self.unusedblossoms.pop().expect("free blossom slot");
        self.blossombase[b] = Some(base);
        self.blossomparent[b] = None;
        self.blossomparent[bb] = Some(b);
        let mut path = Vec::new();
        let mut endps = Vec::new();
        while bv != bb {
            self.blossomparent[bv] = Some(b);
            path.push(bv);
            let le = self.labelend[bv].expect("labelend on blossom path");
            endps.push(le);
            v = self.endpoint[le];
            bv = self.inblossom[v];
        }
        path.push(bb);
        path.reverse();
        endps.reverse();
        endps.push(2 * k);
        while bw != bb {
            self.blossomparent[bw] = Some(b);
            path.push(bw);
            let le = self.labelend[bw].expect("labelend on blossom path");
            endps.push(le ^ 1);
            w = self.endpoint[le];
            bw = self.inblossom[w];
        }
        self.blossomchilds[b] = path.clone();
        self.blossomendps[b] = endps;
        self.label[b] = 1;
        self.labelend[b] = self.labelend[bb];
        self.dualvar[b] = 0;
        for leaf in self.leaves(b) {
            if self.label[self.inblossom[leaf]] == 2 {
                self.queue.push(leaf);
            }
            self.inblossom[leaf] = b;
        }
        let mut bestedgeto: Vec<Option<usize>> = vec![None; 2 * self.n];
        for &sub in &path {
            let lists: Vec<Vec<usize>> = match self.blossombestedges[sub].take() {
                Some(list) => vec![list],
                None => self.leaves(sub).iter().map(|&x| self.neighbend[x].iter().map(|p| p / 2).collect()).collect(),
            };
            for list in lists {
                for kk in list {
                    let (mut i, mut j, _) = self.edges[kk];
                    if self.inblossom[j] == b {
                        std::mem::swap(&mut i, &mut j);
                    }
                    let _ = i;
                    let bj = self.inblossom[j];
                    if bj != b
                        && self.label[bj] == 1
                        && bestedgeto[bj].is_none_or(|cur| self.slack(kk) < self.slack(cur))
                    {
                        bestedgeto[bj] = Some(kk);
                    }
                }
            }
            self.bestedge[sub] = None;
        }
        let list: Vec<usize> = bestedgeto.into_iter().flatten().collect();
        let mut best = None;
        for &kk in &list {
            if best.is_none_or(|cur| self.slack(kk) < self.slack(cur)) {
                best = Some(kk);
            }
        }
        self.blossombestedges[b] = Some(list);
        self.bestedge[b] = best;
    }

    fn expand_blossom(&mut self, b: usize, endstage: bool) {
        let childs = self.blossomchilds[b].clone();
        for &s in &childs {
            self.blossomparent[s] = None;
            if s < self.n {
                self.inblossom[s] = s;
            } else if endstage && self.dualvar[s] == 0 {
                self.expand_blossom(s, endstage);
            } else {
                for leaf in self.leaves(s) {
                    self.inblossom[leaf] = s;
                }
            }
        }
        if !endstage && self.label[b] == 2 {
            let len = childs.len() as isize;
            let at = |j: isize| childs[j.rem_euclid(len) as usize];
            let endps = self.blossomendps[b].clone();
            let endp_at = |j: isize| endps[j.rem_euclid(len) as usize];
            let le_b = self.labelend[b].expect("T-blossom has labelend");
            let entrychild = self.inblossom[self.endpoint[le_b ^ 1]];
            let mut j = childs.iter().position(|&c| c == entrychild).expect("entry child") as isize;
            let (jstep, endptrick): (isize, usize) = if j & 1 == 1 {
                j -= len;
                (1, 0)
            } else {
                (-1, 1)
            };
            let mut p = le_b;
            while j != 0 {
                let q = self.endpoint[p ^ 1];
                self.label[q] = 0;
                let e = endp_at(j - endptrick as isize);
                self.label[self.endpoint[e ^ endptrick ^ 1]] = 0;
                self.assign_label(q, 2, Some(p));
                self.allowedge[e / 2] = true;
                j += jstep;
                p = endp_at(j - endptrick as isize) ^ endptrick;
                self.allowedge[p / 2] = true;
                j += jstep;
            }
            let bv = at(j);
            let q = self.endpoint[p ^ 1];
            self.label[q] = 2;
            self.label[bv] = 2;
            self.labelend[q] = Some(p);
            self.labelend[bv] = Some(p);
            self.bestedge[bv] = None;
            j += jstep;
            while at(j) != entrychild {
                let bv = at(j);
                if self.label[bv] == 1 {
                    j += jstep;
                    continue;
                }
                if let Some(v) = self.leaves(bv).into_iter().find(|&v| self.label[v] != 0) {
                    self.label[v] = 0;
                    let base = self.blossombase[bv].expect("base");
                    let m = self.mate[base].expect("matched base");
                    self.label[self.endpoint[m]] = 0;
                    let le = self.labelend[v];
                    self.assign_label(v, 2, le);
                }
                j += jstep;
            }
        }
        self.label[b] = 0;
        self.labelend[b] = None;
        self.blossomchilds[b] = Vec::new();
        self.blossomendps[b] = Vec::new();
        self.blossombase[b] = None;
        self.blossombestedges[b] = None;
        self.bestedge[b] = None;
        self.unusedblossoms.push(b);
    }

    fn augment_blossom(&mut self, b: usize, v: usize) {
        let mut t = v;
        while self.blossomparent[t] != Some(b) {
            t = self.blossomparent[t].expect("v inside b");
        }
        if t >= self.n {
            self.augment_blossom(t, v);
        }
        let childs = self.blossomchilds[b].clone();
        let endps = self.blossomendps[b].clone();
        let len = childs.len() as isize;
        let at = |j: isize| childs[j.rem_euclid(len) as usize];
        let endp_at = |j: isize| endps[j.rem_euclid(len) as usize];
        let i = childs.iter().position(|&c| c == t).expect("child") as isize;
        let mut j = i;
        let (jstep, endptrick): (isize, usize) = if i & 1 == 1 {
            j -= len;
            (1, 0)
        } else {
            (-1, 1)
        };
        while j != 0 {
            j += jstep;
            let t = at(j);
            let p = endp_at(j - endptrick as isize) ^ endptrick;
            if t >= self.n {
                self.augment_blossom(t, self.endpoint[p]);
            }
            j += jstep;
            let t = at(j);
            if t >= self.n {
                self.augment_blossom(t, self.endpoint[p ^ 1]);
            }
            self.mate[self.endpoint[p]] = Some(p ^ 1);
            self.mate[self.endpoint[p ^ 1]] = Some(p);
        }
        let i = i as usize;
        self.blossomchilds[b].rotate_left(i);
        self.blossomendps[b].rotate_left(i);
        let first = self.blossomchilds[b][0];
        self.blossombase[b] = self.blossombase[first];
    }

    fn augment_matching(&mut self, k: usize) {
        let (v, w, _) = self.edges[k];
        for (mut s, mut p) in [(v, 2 * k + 1), (w, 2 * k)] {
            loop {
                let bs = self.inblossom[s];
                if bs >= self.n {
                    self.augment_blossom(bs, s);
                }
                self.mate[s] = Some(p);
                let Some(le) = self.labelend[bs] else { break };
                let t = self.endpoint[le];
                let bt = self.inblossom[t];
                let le_t = self.labelend[bt].expect("T-blossom has labelend");
                s = self.endpoint[le_t];
                let j = self.endpoint[le_t ^ 1];
                if bt >= self.n {
                    self.augment_blossom(bt, j);
                }
                self.mate[j] = Some(le_t);
                p = le_t ^ 1;
            }
        }
    }

    fn run(mut self, max_cardinality: bool) -> Vec<Option<usize>> {
        let n = self.n;
        for _ in 0..n {
            self.label.iter_mut().for_each(|l| *l = 0);
            self.bestedge.iter_mut().for_each(|e| *e = None);
            for b in n..2 * n {
                self.blossombestedges[b] = None;
            }
            self.allowedge.iter_mut().for_each(|a| *a = false);
            self.queue.clear();
            for v in 0..n {
                if self.mate[v].is_none() && self.label[self.inblossom[v]] == 0 {
                    self.assign_label(v, 1, None);
                }
            }
            let mut augmented = false;
            loop {
                while let Some(v) = self.queue.pop() {
                    if augmented {
                        break;
                    }
                    for idx in 0..self.neighbend[v].len() {
                        let p = self.neighbend[v][idx];
                        let k = p / 2;
                        let w = self.endpoint[p];
                        if self.inblossom[v] == self.inblossom[w] {
                            continue;
                        }
                        let mut kslack = 0;
                        if !self.allowedge[k] {
                            kslack = self.slack(k);
                            if kslack <= 0 {
                                self.allowedge[k] = true;
                            }
                        }
                        if self.allowedge[k] {
                            if self.label[self.inblossom[w]] == 0 {
                                self.assign_label(w, 2, Some(p ^ 1));
                            } else if self.label[self.inblossom[w]] == 1 {
                                match self.scan_blossom(v, w) {
                                    Some(base) => self.add_blossom(base, k),
                                    None => {
                                        self.augment_matching(k);
                                        augmented = true;
                                        break;
                                    }
                                }
                            } else if self.label[w] == 0 {
                                self.label[w] = 2;
                                self.labelend[w] = Some(p ^ 1);
                            }
                        } else if self.label[self.inblossom[w]] == 1 {
                            let b = self.inblossom[v];
                            if self.bestedge[b].is_none_or(|cur| kslack < self.slack(cur)) {
                                self.bestedge[b] = Some(k);
                            }
                        } else if self.label[w] == 0 && self.bestedge[w].is_none_or(|cur| kslack < self.slack(cur)) {
                            self.bestedge[w] = Some(k);
                        }
                    }
                }
                if augmented {
                    break;
                }
                // Dual adjustment.
                let mut deltatype = 0u8;
                let mut delta = 0i64;
                let mut deltaedge = None;
                let mut deltablossom = None;
                if !max_cardinality {
                    deltatype = 1;
                    delta = self.dualvar[..n].iter().copied().min().unwrap_or(0);
                }
                for v in 0..n {
                    if self.label[self.inblossom[v]] == 0 {
                        if let Some(e) = self.bestedge[v] {
                            let d = self.slack(e);
                            if deltatype == 0 || d < delta {
                                delta = d;
                                deltatype = 2;
                                deltaedge = Some(e);
                            }
                        }
                    }
                }
                for b in 0..2 * n {
                    if self.blossomparent[b].is_none() && self.label[b] == 1 {
                        if let Some(e) = self.bestedge[b] {
                            let d = self.slack(e) / 2;
                            if deltatype == 0 || d < delta {
                                delta = d;
                                deltatype = 3;
                                deltaedge = Some(e);
                            }
                        }
                    }
                }
                for b in n..2 * n {
                    if self.blossombase[b].is_some()
                        && self.blossomparent[b].is_none()
                        && self.label[b] == 2
                        && (deltatype == 0 || self.dualvar[b] < delta)
                    {
                        delta = self.dualvar[b];
                        deltatype = 4;
                        deltablossom = Some(b);
                    }
                }
                if deltatype == 0 {
                    deltatype = 1;
                    delta = self.dualvar[..n].iter().copied().min().unwrap_or(0).max(0);
                }
                for v in 0..n {
                    match self.label[self.inblossom[v]] {
                        1 => self.dualvar[v] -= delta,
                        2 => self.dualvar[v] += delta,
                        _ => {}
                    }
                }
                for b in n..2 * n {
                    if self.blossombase[b].is_some() && self.blossomparent[b].is_none() {
                        match self.label[b] {
                            1 => self.dualvar[b] += delta,
                            2 => self.dualvar[b] -= delta,
                            _ => {}
                        }
                    }
                }
                match deltatype {
                    1 => break,
                    2 => {
                        let e = deltaedge.expect("edge");
                        self.allowedge[e] = true;
                        let (mut i, j, _) = self.edges[e];
                        if self.label[self.inblossom[i]] == 0 {
                            i = j;
                        }
                        self.queue.push(i);
                    }
                    3 => {
                        let e = deltaedge.expect("edge");
                        self.allowedge[e] = true;
                        let (i, _, _) = self.edges[e];
                        self.queue.push(i);
                    }
                    _ => self.expand_blossom(deltablossom.expect("blossom"), false),
                }
            }
            if !augmented {
                break;
            }
            for b in n..2 * n {
                if self.blossomparent[b].is_none()
                    && self.blossombase[b].is_some()
                    && self.label[b] == 1
                    && self.dualvar[b] == 0
                {
                    self.expand_blossom(b, true);
                }
            }
        }
        self.mate.iter().map(|m| m.map(|p| self.endpoint[p])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::{edge_weight, Edge};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, k: usize, density: f64, boundary_rate: f64) -> PairingProblem {
        let mut p = PairingProblem::new(k);
        for i in 0..k {
            if rng.random_bool(boundary_rate) {
                p.boundary[i] = Some((rng.random_range(0..40), rng.random::<u64>() & 3));
            }
            for j in i + 1..k {
                if rng.random_bool(density) {
                    p.pair[i * k + j] = Some((rng.random_range(0..40), rng.random::<u64>() & 3));
                }
            }
        }
        p
    }

    #[test]
    fn blossom_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut solved = 0;
        for case in 0..500 {
            let k = rng.random_range(1..=10);
            let density = [0.3, 0.7, 1.0][case % 3];
            let boundary_rate = [0.0, 0.5, 1.0][(case / 3) % 3];
            let p = random_problem(&mut rng, k, density, boundary_rate);
            let fast = p.solve();
            match p.brute_force() {
                Some(best) => {
                    let fast = fast.unwrap_or_else(|i| panic!("case {case}: blossom left {i} unmatched"));
                    assert_eq!(fast.weight, best.weight, "case {case}");
                    solved += 1;
                }
                None => assert!(fast.is_err(), "case {case}: brute force found no pairing"),
            }
        }
        assert!(solved > 300);
    }

    #[test]
    fn plain_matching_small_known_optimum() {
        // Path 0-1-2-3: a heavy middle edge beats the two outer ones unless
        // cardinality is forced.
        let edges = [(0, 1, 5), (1, 2, 11), (2, 3, 5)];
        let mate = max_weight_matching(4, &edges, false);
        assert_eq!(mate, vec![None, Some(2), Some(1), None]);
        let edges = [(0, 1, 6), (1, 2, 11), (2, 3, 6)];
        let mate = max_weight_matching(4, &edges, false);
        assert_eq!(mate, vec![Some(1), Some(0), Some(3), Some(2)]);
        let edges = [(0, 1, 2), (1, 2, 11), (2, 3, 2)];
        let mate = max_weight_matching(4, &edges, false);
        assert_eq!(mate, vec![None, Some(2), Some(1), None]);
        let mate = max_weight_matching(4, &edges, true);
        assert_eq!(mate, vec![Some(1), Some(0), Some(3), Some(2)]);
    }

    #[test]
    fn odd_cycle_needs_a_blossom() {
        // Triangle 0-1-2 plus pendant 3 on vertex 2: perfect matching must use 2-3.
        let edges = [(0, 1, 6), (1, 2, 10), (0, 2, 10), (2, 3, 1)];
        let mate = max_weight_matching(4, &edges, true);
        assert_eq!(mate, vec![Some(1), Some(0), Some(3), Some(2)]);
    }

    fn line_graph(n: usize, p: f64) -> DecodingGraph {
        // Repetition-code line: boundary - 0 - 1 - ... - (n-1) - boundary,
        // observable on the left boundary edge.
        let b = n as u32;
        let mut edges = vec![Edge { u: 0, v: b, weight: edge_weight(p), probability: p, observables: 1, mechanism: 0 }];
        for i in 0..n as u32 - 1 {
            edges.push(Edge { u: i, v: i + 1, weight: edge_weight(p), probability: p, observables: 0, mechanism: 0 });
        }
        edges.push(Edge { u: n as u32 - 1, v: b, weight: edge_weight(p), probability: p, observables: 0, mechanism: 0 });
        DecodingGraph::from_edges(n, edges)
    }

    #[test]
    fn decodes_repetition_line() {
        let m = Matcher::new(line_graph(6, 0.01));
        let c = m.decode(&[0]).unwrap();
        assert_eq!(c.pairs, vec![(0, None)]);
        assert_eq!(c.observables, 1);
        let c = m.decode(&[5]).unwrap();
        assert_eq!(c.observables, 0);
        let c = m.decode(&[1, 2]).unwrap();
        assert_eq!(c.pairs, vec![(1, Some(2))]);
        assert_eq!(c.observables, 0);
        let c = m.decode(&[0, 5]).unwrap();
        assert_eq!(c.observables, 1);
        assert_eq!(c.pairs.len(), 2);
        assert!(m.decode(&[9]).is_err());
    }

    #[test]
    fn unreachable_defect_is_named() {
        let edges = vec![Edge { u: 0, v: 1, weight: 1.0, probability: 0.1, observables: 0, mechanism: 0 }];
        let m = Matcher::new(DecodingGraph::from_edges(3, edges));
        assert_eq!(m.decode(&[2]), Err(MatchError::Unreachable(2)));
        assert!(m.decode(&[0, 1]).is_ok());
    }

    #[test]
    fn batch_counts_errors() {
        let m = Matcher::new(line_graph(4, 0.01));
        let mut shots = ShotTable::zeros(4, 4, 1);
        shots.set_shot(0, &[], 0);
        shots.set_shot(1, &[0], 1);
        shots.set_shot(2, &[0], 0);
        shots.set_shot(3, &[1, 2], 0);
        let r = m.decode_batch(&shots).unwrap();
        assert_eq!(r.predictions, vec![0, 1, 1, 0]);
        assert_eq!(r.errors, 1);
        assert!((r.p_logical() - 0.25).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
        assert_eq!(json["errors"], 1);
        assert_eq!(r.predictions_text(1), "0\n1\n1\n0\n");
    }

    /// A random connected-ish graph with weights on the integer grid of
    /// the scale, so the oracle below sees exactly the matcher's costs.
    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> DecodingGraph {
        let b = n as u32;
        let mut edges = Vec::new();
        let mut add = |u: u32, v: u32, rng: &mut ChaCha8Rng| {
            let w = rng.random_range(1..4000) as f64 / WEIGHT_SCALE;
            edges.push(Edge { u, v, weight: w, probability: 0.01, observables: rng.random::<u64>() & 1, mechanism: edges.len() });
        };
        for i in 1..n as u32 {
            let j = rng.random_range(0..i);
            add(j, i, rng);
        }
        for _ in 0..n {
            let (u, v) = (rng.random_range(0..n as u32), rng.random_range(0..n as u32));
            if u != v {
                add(u.min(v), u.max(v), rng);
            }
        }
        for i in 0..n as u32 {
            if rng.random_bool(0.3) {
                add(i, b, rng);
            }
        }
        DecodingGraph::from_edges(n, edges)
    }

    /// All-pairs shortest costs over detector nodes; the boundary may end a
    /// path but never relay one.
    fn floyd_warshall(g: &DecodingGraph) -> (Vec<Vec<Option<i64>>>, Vec<Option<i64>>) {
        let n = g.num_detectors;
        let mut d = vec![vec![None::<i64>; n]; n];
        let mut to_b = vec![None::<i64>; n];
        let better = |cur: Option<i64>, w: i64| cur.is_none_or(|c| w < c);
        for i in 0..n {
            d[i][i] = Some(0);
        }
        for e in &g.edges {
            let w = scale_weight(e.weight);
            let (u, v) = (e.u as usize, e.v as usize);
            if v == n {
                if better(to_b[u], w) {
                    to_b[u] = Some(w);
                }
            } else if better(d[u][v], w) {
                d[u][v] = Some(w);
                d[v][u] = Some(w);
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                        if better(d[i][j], a + b) {
                            d[i][j] = Some(a + b);
                        }
                    }
                }
            }
        }
        let b: Vec<Option<i64>> = (0..n)
            .map(|i| (0..n).filter_map(|k| Some(d[i][k]? + to_b[k]?)).min())
            .collect();
        (d, b)
    }

    /// Minimum total cost of pairing the defects with each other or the boundary.
    fn brute_cost(defects: &[usize], d: &[Vec<Option<i64>>], b: &[Option<i64>]) -> Option<i64> {
        let Some((&first, rest)) = defects.split_first() else { return Some(0) };
        let mut best = b[first].and_then(|c| Some(c + brute_cost(rest, d, b)?));
        for (i, &other) in rest.iter().enumerate() {
            let Some(c) = d[first][other] else { continue };
            let mut remaining = rest.to_vec();
            remaining.remove(i);
            if let Some(r) = brute_cost(&remaining, d, b) {
                best = Some(best.map_or(c + r, |x: i64| x.min(c + r)));
            }
        }
        best
    }

    #[test]
    fn decode_matches_exhaustive_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut compared = 0;
        for case in 0..300 {
            let n = rng.random_range(2..=24);
            let g = random_graph(&mut rng, n);
            let (d, b) = floyd_warshall(&g);
            let m = Matcher::new(g);
            let k = rng.random_range(1..=n.min(12));
            let mut defects: Vec<u32> = (0..n as u32).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                defects.swap(i, j);
            }
            defects.truncate(k);
            defects.sort_unstable();
            let as_usize: Vec<usize> = defects.iter().map(|&x| x as usize).collect();
            match (m.decode(&defects), brute_cost(&as_usize, &d, &b)) {
                (Ok(c), Some(best)) => {
                    assert_eq!(c.weight, best, "case {case}");
                    // The reported weight is the sum of its own pairs' costs.
                    let sum: i64 = c
                        .pairs
                        .iter()
                        .map(|&(u, v)| match v {
                            Some(v) => d[u as usize][v as usize].unwrap(),
                            None => b[u as usize].unwrap(),
                        })
                        .sum();
                    assert_eq!(sum, best, "case {case}");
                    let mut seen: Vec<u32> = c.pairs.iter().flat_map(|&(u, v)| std::iter::once(u).chain(v)).collect();
                    seen.sort_unstable();
                    assert_eq!(seen, defects, "case {case}: every defect exactly once");
                    compared += 1;
                }
                (Err(MatchError::Unreachable(_)), None) => {}
                (got, want) => panic!("case {case}: decoder {got:?}, oracle {want:?}"),
            }
        }
        assert!(compared > 200);
    }

    fn weight(m: &Matcher, defects: &[u32]) -> Option<i64> {
        let mut v = defects.to_vec();
        v.sort_unstable();
        v.dedup();
        m.decode(&v).ok().map(|c| c.weight)
    }

    /// Adding a defect can lower the optimum: a lone defect far from the
    /// boundary becomes cheap once a partner appears next to it.
    #[test]
    fn adding_a_defect_can_lower_the_weight() {
        let e = |u, v, w: f64| Edge { u, v, weight: w, probability: 0.1, observables: 0, mechanism: 0 };
        let g = DecodingGraph::from_edges(2, vec![e(0, 1, 1.0), e(0, 2, 10.0), e(1, 2, 10.0)]);
        let m = Matcher::new(g);
        assert!(weight(&m, &[0, 1]).unwrap() < weight(&m, &[0]).unwrap());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        /// The optimum moves by at most the extra defect's boundary cost.
        #[test]
        fn adding_a_defect_is_bounded_by_its_boundary_cost(seed in proptest::prelude::any::<u64>(), n in 3usize..16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, n);
            let (_, b) = floyd_warshall(&g);
            let m = Matcher::new(g);
            let set: Vec<u32> = (0..n as u32).filter(|_| rng.random_bool(0.4)).collect();
            let extra = rng.random_range(0..n as u32);
            if set.contains(&extra) {
                return Ok(());
            }
            let (Some(bc), Some(base)) = (b[extra as usize], weight(&m, &set)) else { return Ok(()) };
            let mut bigger = set.clone();
            bigger.push(extra);
            let grown = weight(&m, &bigger).expect("the extra defect can always use the boundary");
            proptest::prop_assert!(grown <= base + bc);
            proptest::prop_assert!(base <= grown + bc);
        }

        #[test]
        fn decoding_is_deterministic(seed in proptest::prelude::any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, 12);
            let defects: Vec<u32> = (0..12).filter(|_| rng.random_bool(0.5)).collect();
            let a = Matcher::new(g.clone()).decode(&defects);
            let b = Matcher::new(g).decode(&defects);
            proptest::prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn noiseless_shots_decode_without_errors() {
        use crate::circuit::{lower, NoisePlacement};
        use crate::dem::build_dem;
        use crate::layout::{Basis, Layout, LayoutKind};
        use crate::pauli::frame_sample;
        use crate::schedule::{generate, Method};
        let layout = Layout::build(LayoutKind::Memory, 3).unwrap();
        let plan = generate(&layout, Method::ZxSame, 3, Basis::Z).unwrap();
        let noisy = lower(&plan, 1e-3, NoisePlacement::AllOps).unwrap();
        let m = Matcher::new(build_dem(&noisy).unwrap().to_graph(None).unwrap());
        let clean = frame_sample(&lower(&plan, 0.0, NoisePlacement::AllOps).unwrap(), 500, 2).unwrap();
        let r = m.decode_batch(&clean).unwrap();
        assert_eq!((r.shots, r.errors), (500, 0));
        assert_eq!(r.std_err(), 0.0);
        let wrong = ShotTable::zeros(3, 2, 1);
        assert!(matches!(m.decode_batch(&wrong), Err(MatchError::DimensionMismatch { .. })));
    }

    #[test]
    fn weights_scale_to_integers() {
        assert_eq!(scale_weight(0.0), 0);
        assert_eq!(scale_weight(1.0), 1024);
        assert_eq!(scale_weight(f64::INFINITY), i64::MAX / 4);
        assert!((binomial_std_err(10, 1000) - (0.01f64 * 0.99 / 1000.0).sqrt()).abs() < 1e-15);
    }
}
