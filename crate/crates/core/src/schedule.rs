//! Syndrome-extraction schedules for the five CNOT-ordering methods.
//!
//! [`generate`] turns a [`Layout`] into a [`SchedulePlan`]: per-round layers
//! (measurement-qubit resets, Hadamards, exactly four CNOT layers,
//! measurements), the data-qubit initialization and readout, and the detector
//! and observable definitions.
//!
//! ## Methods
//!
//! * **N/Z orderings.** Every face has its own measurement qubit at its
//!   center. One face type visits its supports row by row, the other column by
//!   column. The hook-avoiding variant orients both traversals so that the
//!   last two CNOTs of each face touch a pair perpendicular to that face
//!   type's logical chain; the hook-prone variant is the 90° rotation.
//! * **Alternating.** The N/Z layers in the orientation a fixed order cannot
//!   protect (the hook-prone one) on even rounds, the same layers in reverse
//!   order on odd rounds. Reversing the hook-avoiding layers would leave every
//!   hook pair's orientation unchanged, so the reversal only matters here.
//! * **ZX interleaving.** A two-round, translation-invariant unit cell: every
//!   measurement qubit talks to its north-west, north-east and south-west data
//!   neighbours only, and alternates each round between a "data → measure
//!   first" pattern and its time reverse. Because a CNOT with the data qubit as
//!   target converts the face type seen by the data, the measured faces shift
//!   by one site per round. The boundary rows and columns keep a truncated
//!   version of the cell whose shape depends on the boundary type there. The
//!   cell is used either as is or transposed so that Z faces drift toward a
//!   boundary of the requested type (same-basis or cross-basis movement).
//!
//! ## Detectors and observables
//!
//! Detector definitions are not hand-written per method. Instead every
//! measurement's Pauli is propagated backward through the noiseless circuit.
//! A combination of records is deterministic exactly when the combined
//! backward flow is never cut by a reset or measurement of the wrong basis and
//! vanishes before the circuit starts. Records are processed in time order
//! over a two-round window, so every detector compares a face with its
//! counterpart in the previous round (at the shifted position for ZX
//! interleaving) whenever such a comparison exists.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2;
use crate::layout::{Basis, Coord, Layout, LayoutKind, SideTypes};

/// Errors raised by [`generate`].
#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    /// `rounds` must be at least one.
    #[error("at least one syndrome-extraction round is required")]
    NoRounds,
    /// The method cannot be laid out on this layout.
    #[error("{method} cannot tile this layout: {reason}")]
    CannotTile {
        /// Requested method.
        method: Method,
        /// Why tiling failed.
        reason: String,
    },
    /// A CNOT layer uses a qubit twice.
    #[error("round {round}, CNOT layer {layer}: qubit {qubit} is used by more than one gate")]
    DoubleBooked {
        /// Round index.
        round: usize,
        /// Layer index (0..4).
        layer: usize,
        /// Offending qubit id.
        qubit: u32,
    },
    /// A CNOT connects qubits that are not diagonal neighbours.
    #[error("round {round}: CNOT between {a} and {b} is not nearest-neighbour")]
    NonLocal {
        /// Round index.
        round: usize,
        /// First coordinate.
        a: Coord,
        /// Second coordinate.
        b: Coord,
    },
    /// No deterministic observable could be built for a logical.
    #[error("no deterministic {0} observable found for this plan")]
    NoObservable(Basis),
}

/// CNOT-ordering method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// N/Z ordering oriented so that hook pairs are perpendicular to the logicals.
    NzHookAvoiding,
    /// N/Z ordering rotated by 90°, hook pairs parallel to the logicals.
    NzHookProne,
    /// Hook-prone N/Z layers, reversed on every odd round.
    Alternating,
    /// ZX interleaving with Z faces moving toward Z boundaries.
    ZxSame,
    /// ZX interleaving with Z faces moving toward X boundaries.
    ZxCross,
}

impl Method {
    /// All methods, in table order.
    pub const ALL: [Method; 5] =
        [Method::NzHookAvoiding, Method::NzHookProne, Method::Alternating, Method::ZxSame, Method::ZxCross];

    /// Command-line spelling.
    pub fn cli_name(&self) -> &'static str {
        match self {
            Method::NzHookAvoiding => "nz",
            Method::NzHookProne => "nz-hook-prone",
            Method::Alternating => "alternating",
            Method::ZxSame => "zx-same",
            Method::ZxCross => "zx-cross",
        }
    }

    /// Number of rounds after which the layer pattern repeats.
    pub fn period(&self) -> usize {
        match self {
            Method::NzHookAvoiding | Method::NzHookProne => 1,
            Method::Alternating | Method::ZxSame | Method::ZxCross => 2,
        }
    }

    /// True for the two ZX-interleaving variants.
    pub fn is_zx(&self) -> bool {
        matches!(self, Method::ZxSame | Method::ZxCross)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.cli_name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                format!("unknown method '{s}' (expected nz, nz-hook-prone, alternating, zx-same or zx-cross)")
            })
    }
}

/// Gate kinds appearing in a plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    /// Reset to |0⟩.
    R,
    /// Reset to |+⟩.
    RX,
    /// Hadamard.
    H,
    /// CNOT; targets come in (control, target) pairs.
    CX,
    /// Z-basis measurement.
    M,
    /// X-basis measurement.
    MX,
}

/// The data-qubit Pauli a measurement reports, expressed at the start of its round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredTile {
    /// Measurement qubit id.
    pub qubit: u32,
    /// Pauli type, or `None` if the reported operator is not of a single type.
    pub basis: Option<Basis>,
    /// Rounded centroid of the support (doubled units).
    pub center: Coord,
    /// Data qubits of the reported operator, row-major.
    pub support: Vec<Coord>,
}

/// One syndrome-extraction round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// Measurement qubits reset to |0⟩ at the start of the round.
    pub resets: Vec<u32>,
    /// Hadamards applied after the resets.
    pub pre_hadamards: Vec<u32>,
    /// Exactly four layers of (control, target) CNOTs.
    pub cnot_layers: Vec<Vec<(u32, u32)>>,
    /// Hadamards applied after the CNOT layers.
    pub post_hadamards: Vec<u32>,
    /// Measurement qubits measured in Z at the end of the round.
    pub measurements: Vec<u32>,
    /// For each measurement, the face it reports at the start of this round.
    pub tile_positions: Vec<MeasuredTile>,
}

/// A detector: XOR of records that is zero without noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorDef {
    /// Round whose measurement completes the detector (`rounds` for the final readout).
    pub round: usize,
    /// Absolute record indices, increasing.
    pub records: Vec<u32>,
    /// Spatial coordinate (real units) and round as time coordinate.
    pub coord: [f64; 3],
}

/// A logical observable: XOR of records equal to a logical operator's value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableDef {
    /// Type of the logical operator.
    pub basis: Basis,
    /// Data qubits whose final readout carries the operator.
    pub chain: Vec<Coord>,
    /// Absolute record indices, increasing.
    pub records: Vec<u32>,
}

/// The complete, immutable schedule for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    /// Layout family the plan was generated for.
    pub layout_kind: LayoutKind,
    /// Code distance of the layout.
    pub distance: usize,
    /// CNOT-ordering method.
    pub method: Method,
    /// Basis of the data initialization and final readout.
    pub readout_basis: Basis,
    /// Coordinate of every qubit id.
    pub qubit_coords: Vec<Coord>,
    /// Data qubit ids (ids `0..data_qubits.len()`).
    pub data_qubits: Vec<u32>,
    /// Measurement qubit ids.
    pub measure_qubits: Vec<u32>,
    /// Rounds, in order.
    pub rounds: Vec<RoundPlan>,
    /// Pattern period.
    pub period: usize,
    /// Detectors.
    pub detector_defs: Vec<DetectorDef>,
    /// Observables, one per logical of the readout basis.
    pub observable_defs: Vec<ObservableDef>,
}

/// One TICK-delimited layer of a lowered plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TickLayer {
    /// Round the layer belongs to; `None` for the final data readout.
    pub round: Option<usize>,
    /// Operations; CX targets are flattened (control, target) pairs.
    pub ops: Vec<(Gate, Vec<u32>)>,
}

/// A hook pair: the data qubits reached by a measurement-qubit fault between
/// CNOT layers 2 and 3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookEdge {
    /// Round index.
    pub round: usize,
    /// Measurement qubit coordinate (the face's position this round).
    pub tile: Coord,
    /// Data qubits touched by the last two CNOTs of that measurement qubit.
    pub pair: (Coord, Coord),
}

impl SchedulePlan {
    /// Total number of measurement records.
    pub fn num_records(&self) -> usize {
        self.rounds.iter().map(|r| r.measurements.len()).sum::<usize>() + self.data_qubits.len()
    }

    /// Number of qubits.
    pub fn num_qubits(&self) -> usize {
        self.qubit_coords.len()
    }

    /// Gate used for the data initialization.
    pub fn data_reset_gate(&self) -> Gate {
        match self.readout_basis {
            Basis::Z => Gate::R,
            Basis::X => Gate::RX,
        }
    }

    /// Gate used for the final data readout.
    pub fn data_measure_gate(&self) -> Gate {
        match self.readout_basis {
            Basis::Z => Gate::M,
            Basis::X => Gate::MX,
        }
    }

    /// The plan as TICK-delimited layers, in execution order.
    pub fn tick_layers(&self) -> Vec<TickLayer> {
        tick_layers(&self.rounds, &self.data_qubits, self.readout_basis)
    }

    /// Debug JSON dump.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Measurement qubit ↔ data qubit interaction degree over one period.
    pub fn interaction_degrees(&self) -> HashMap<u32, usize> {
        let mut partners: HashMap<u32, BTreeSet<u32>> = HashMap::new();
        let n_data = self.data_qubits.len() as u32;
        for round in self.rounds.iter().take(self.period.max(1)) {
            for layer in &round.cnot_layers {
                for &(c, t) in layer {
                    let (m, d) = if c >= n_data { (c, t) } else { (t, c) };
                    partners.entry(m).or_default().insert(d);
                }
            }
        }
        partners.into_iter().map(|(m, s)| (m, s.len())).collect()
    }
}

fn tick_layers(rounds: &[RoundPlan], data: &[u32], basis: Basis) -> Vec<TickLayer> {
    let mut layers = Vec::new();
    for (r, round) in rounds.iter().enumerate() {
        let mut reset = Vec::new();
        if r == 0 {
            let g = if basis == Basis::Z { Gate::R } else { Gate::RX };
            reset.push((g, data.to_vec()));
        }
        if !round.resets.is_empty() {
            reset.push((Gate::R, round.resets.clone()));
        }
        let mut stages: Vec<Vec<(Gate, Vec<u32>)>> = vec![reset];
        if !round.pre_hadamards.is_empty() {
            stages.push(vec![(Gate::H, round.pre_hadamards.clone())]);
        }
        for layer in &round.cnot_layers {
            stages.push(vec![(Gate::CX, layer.iter().flat_map(|&(c, t)| [c, t]).collect())]);
        }
        if !round.post_hadamards.is_empty() {
            stages.push(vec![(Gate::H, round.post_hadamards.clone())]);
        }
        stages.push(vec![(Gate::M, round.measurements.clone())]);
        layers.extend(stages.into_iter().filter(|ops| !ops.is_empty()).map(|ops| TickLayer { round: Some(r), ops }));
    }
    let g = if basis == Basis::Z { Gate::M } else { Gate::MX };
    layers.push(TickLayer { round: None, ops: vec![(g, data.to_vec())] });
    layers
}

// ---------------------------------------------------------------------------
// Per-round gate descriptions.

/// Direction of a CNOT relative to the measurement qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    /// Data qubit is the control.
    DataToMeas,
    /// Measurement qubit is the control.
    MeasToData,
}

/// Gates of one measurement qubit in one round.
#[derive(Clone, Debug)]
struct MeasSpec {
    coord: Coord,
    pre_h: bool,
    post_h: bool,
    /// (layer, direction, data qubit)
    gates: Vec<(usize, Dir, Coord)>,
}

const NW: (i32, i32) = (-1, -1);
const NE: (i32, i32) = (1, -1);
const SW: (i32, i32) = (-1, 1);
const SE: (i32, i32) = (1, 1);

/// Support visiting order of one face type. `column_first` visits NW, SW,
/// NE, SE (last pair vertical); otherwise NW, NE, SW, SE (last pair
/// horizontal).
fn traversal(column_first: bool) -> [(i32, i32); 4] {
    if column_first {
        [NW, SW, NE, SE]
    } else {
        [NW, NE, SW, SE]
    }
}

fn nz_specs(layout: &Layout, method: Method, round: usize) -> Vec<MeasSpec> {
    // The alternating schedule starts from the orientation a fixed order
    // cannot protect and relies on the odd-round reversal instead.
    let prone = matches!(method, Method::NzHookProne | Method::Alternating);
    let reversed = method == Method::Alternating && round % 2 == 1;
    // A face type's hook pair must be perpendicular to that type's logical chain.
    let z_logical_horizontal = layout.sides.left == Basis::Z && layout.sides.right == Basis::Z;
    let x_logical_vertical = layout.sides.top == Basis::X && layout.sides.bottom == Basis::X;
    layout
        .tiles
        .iter()
        .map(|tile| {
            let avoid_column_first = match tile.basis {
                Basis::Z => z_logical_horizontal,
                Basis::X => !x_logical_vertical,
            };
            let order = traversal(avoid_column_first != prone);
            let mut gates = Vec::new();
            for (k, &(dx, dy)) in order.iter().enumerate() {
                let q = tile.center.offset(dx, dy);
                if tile.supports.contains(&q) {
                    let layer = if reversed { 3 - k } else { k };
                    let dir = match tile.basis {
                        Basis::Z => Dir::DataToMeas,
                        Basis::X => Dir::MeasToData,
                    };
                    gates.push((layer, dir, q));
                }
            }
            gates.sort_by_key(|g| g.0);
            let is_x = tile.basis == Basis::X;
            MeasSpec { coord: tile.center, pre_h: is_x, post_h: is_x, gates }
        })
        .collect()
}

/// Role of a measurement-qubit site in the ZX unit-cell frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CellRole {
    Bulk,
    /// Above the top row of an X boundary: one CNOT into the south-west qubit.
    TopX,
    /// Left of a Z boundary: one CNOT from the north-east qubit.
    LeftZ,
    /// Right column on an X boundary: measurement-controlled CNOTs only.
    RightPureX,
    /// Right column on a Z boundary: the cell without its north-east CNOT.
    RightMixed,
    /// Bottom row on a Z boundary: data-controlled CNOTs only.
    BottomPureZ,
    /// Bottom row on an X boundary: the cell without its south-west CNOT.
    BottomMixed,
    /// Bottom-right corner between a Z right side and an X bottom side.
    CornerMixed,
}

/// Bulk cell gates: (layer, direction, neighbour offset in the cell frame).
/// Pattern A measures "data first" and ends with a Hadamard; pattern B is its
/// time reverse and starts with a Hadamard.
fn cell_pattern(a: bool) -> [(usize, Dir, (i32, i32)); 4] {
    if a {
        [(0, Dir::DataToMeas, NW), (1, Dir::DataToMeas, NE), (2, Dir::MeasToData, SW), (3, Dir::MeasToData, NW)]
    } else {
        [(0, Dir::MeasToData, NW), (1, Dir::MeasToData, SW), (2, Dir::DataToMeas, NE), (3, Dir::DataToMeas, NW)]
    }
}

fn cell_role(i: i32, j: i32, w: i32, h: i32, sides: &SideTypes) -> Option<CellRole> {
    let in_cols = (0..w - 1).contains(&i);
    let in_rows = (0..h - 1).contains(&j);
    if in_cols && in_rows {
        return Some(CellRole::Bulk);
    }
    if j == -1 {
        return ((0..w).contains(&i) && sides.top == Basis::X).then_some(CellRole::TopX);
    }
    if i == -1 {
        return ((0..h).contains(&j) && sides.left == Basis::Z).then_some(CellRole::LeftZ);
    }
    if i == w - 1 && in_rows {
        return Some(if sides.right == Basis::X { CellRole::RightPureX } else { CellRole::RightMixed });
    }
    if j == h - 1 && in_cols {
        return Some(if sides.bottom == Basis::Z { CellRole::BottomPureZ } else { CellRole::BottomMixed });
    }
    if i == w - 1 && j == h - 1 {
        return (sides.right == Basis::Z && sides.bottom == Basis::X).then_some(CellRole::CornerMixed);
    }
    None
}

fn zx_specs(layout: &Layout, method: Method, round: usize) -> Result<Vec<MeasSpec>, ScheduleError> {
    // In the cell frame Z faces drift toward the top side and X faces toward
    // the left side; pick the orientation that realizes the requested movement.
    let (want_top, want_left) = match method {
        Method::ZxSame => (Basis::Z, Basis::X),
        _ => (Basis::X, Basis::Z),
    };
    let transpose = if layout.sides.top == want_top && layout.sides.left == want_left {
        false
    } else if layout.sides.left == want_top && layout.sides.top == want_left {
        true
    } else {
        return Err(ScheduleError::CannotTile {
            method,
            reason: "no orientation of the unit cell moves the faces toward the requested boundaries".into(),
        });
    };
    let (w, h, sides) = if transpose {
        (layout.height as i32, layout.width as i32, layout.sides.transposed())
    } else {
        (layout.width as i32, layout.height as i32, layout.sides)
    };
    let map = |c: Coord| if transpose { c.transposed() } else { c };
    let mut specs = Vec::new();
    for j in -1..h {
        for i in -1..w {
            let Some(role) = cell_role(i, j, w, h, &sides) else { continue };
            let a = (i + j + round as i32).rem_euclid(2) == 0;
            let keep = |dir: Dir, off: (i32, i32)| match role {
                CellRole::Bulk => true,
                CellRole::TopX => off == SW,
                CellRole::LeftZ => off == NE,
                CellRole::RightPureX => dir == Dir::MeasToData,
                CellRole::RightMixed => off != NE,
                CellRole::BottomPureZ => dir == Dir::DataToMeas,
                CellRole::BottomMixed => off != SW,
                CellRole::CornerMixed => off == NW,
            };
            let (pre_h, post_h) = match role {
                CellRole::Bulk | CellRole::RightMixed | CellRole::BottomMixed => (!a, a),
                CellRole::TopX | CellRole::RightPureX => (true, true),
                CellRole::LeftZ | CellRole::BottomPureZ | CellRole::CornerMixed => (false, false),
            };
            let m = Coord::new(2 * i + 1, 2 * j + 1);
            let gates = cell_pattern(a)
                .into_iter()
                .filter(|&(_, dir, off)| keep(dir, off))
                .map(|(layer, dir, (dx, dy))| (layer, dir, map(m.offset(dx, dy))))
                .collect();
            specs.push(MeasSpec { coord: map(m), pre_h, post_h, gates });
        }
    }
    Ok(specs)
}

// ---------------------------------------------------------------------------
// Generation.

/// Generates the schedule for `rounds` rounds of `method` on `layout`, with
/// data initialization and readout in `readout_basis`.
pub fn generate(
    layout: &Layout,
    method: Method,
    rounds: usize,
    readout_basis: Basis,
) -> Result<SchedulePlan, ScheduleError> {
    if rounds == 0 {
        return Err(ScheduleError::NoRounds);
    }
    let specs: Vec<Vec<MeasSpec>> = (0..rounds)
        .map(|r| if method.is_zx() { zx_specs(layout, method, r) } else { Ok(nz_specs(layout, method, r)) })
        .collect::<Result<_, _>>()?;

    let mut qubit_coords: Vec<Coord> = layout.data_qubits.clone();
    let n_data = qubit_coords.len();
    let meas_coords: BTreeSet<Coord> = specs.iter().flatten().map(|s| s.coord).collect();
    qubit_coords.extend(meas_coords.iter().copied());
    let id_of: HashMap<Coord, u32> = qubit_coords.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
    let data_qubits: Vec<u32> = (0..n_data as u32).collect();
    let measure_qubits: Vec<u32> = (n_data as u32..qubit_coords.len() as u32).collect();

    let mut round_plans = Vec::with_capacity(rounds);
    for (r, round_specs) in specs.iter().enumerate() {
        let mut sorted: Vec<&MeasSpec> = round_specs.iter().collect();
        sorted.sort_by_key(|s| s.coord);
        let mut layers: Vec<Vec<(u32, u32)>> = vec![Vec::new(); 4];
        for s in &sorted {
            let m = id_of[&s.coord];
            for &(layer, dir, q) in &s.gates {
                let d = *id_of.get(&q).ok_or_else(|| ScheduleError::CannotTile {
                    method,
                    reason: format!("measurement qubit at {} needs missing data qubit {}", s.coord, q),
                })?;
                if (q.x - s.coord.x).abs() != 1 || (q.y - s.coord.y).abs() != 1 {
                    return Err(ScheduleError::NonLocal { round: r, a: s.coord, b: q });
                }
                layers[layer].push(match dir {
                    Dir::DataToMeas => (d, m),
                    Dir::MeasToData => (m, d),
                });
            }
        }
        for (li, layer) in layers.iter_mut().enumerate() {
            layer.sort_unstable();
            let mut seen = BTreeSet::new();
            for &(c, t) in layer.iter() {
                for q in [c, t] {
                    if !seen.insert(q) {
                        return Err(ScheduleError::DoubleBooked { round: r, layer: li, qubit: q });
                    }
                }
            }
        }
        let measurements: Vec<u32> = sorted.iter().map(|s| id_of[&s.coord]).collect();
        round_plans.push(RoundPlan {
            resets: measurements.clone(),
            pre_hadamards: sorted.iter().filter(|s| s.pre_h).map(|s| id_of[&s.coord]).collect(),
            cnot_layers: layers,
            post_hadamards: sorted.iter().filter(|s| s.post_h).map(|s| id_of[&s.coord]).collect(),
            measurements,
            tile_positions: Vec::new(),
        });
    }
    for round in &mut round_plans {
        round.tile_positions = measured_tiles(round, &qubit_coords, n_data);
    }

    let mut plan = SchedulePlan {
        layout_kind: layout.kind,
        distance: layout.distance,
        method,
        readout_basis,
        qubit_coords,
        data_qubits,
        measure_qubits,
        rounds: round_plans,
        period: method.period(),
        detector_defs: Vec::new(),
        observable_defs: Vec::new(),
    };
    let tape = Tape::new(&plan);
    let readout_faces: Vec<Vec<u32>> = layout
        .tiles_of(readout_basis)
        .map(|t| t.supports.iter().map(|&q| layout.data_index(q).expect("support is a data qubit") as u32).collect())
        .collect();
    plan.detector_defs = infer_detectors(&plan, &tape, &readout_faces);
    plan.observable_defs = infer_observables(layout, &plan, &tape)?;
    Ok(plan)
}

/// Propagates each measured Z back to the start of its round.
fn measured_tiles(round: &RoundPlan, coords: &[Coord], n_data: usize) -> Vec<MeasuredTile> {
    round
        .measurements
        .iter()
        .map(|&m| {
            // qubit -> (x, z)
            let mut p: HashMap<u32, (bool, bool)> = HashMap::from([(m, (false, true))]);
            let h = |p: &mut HashMap<u32, (bool, bool)>, q: u32| {
                if let Some(e) = p.get_mut(&q) {
                    *e = (e.1, e.0);
                }
            };
            for &q in &round.post_hadamards {
                h(&mut p, q);
            }
            for layer in round.cnot_layers.iter().rev() {
                for &(c, t) in layer {
                    let (xc, zc) = p.get(&c).copied().unwrap_or_default();
                    let (xt, zt) = p.get(&t).copied().unwrap_or_default();
                    let new_t = (xt ^ xc, zt);
                    let new_c = (xc, zc ^ zt);
                    for (q, v) in [(c, new_c), (t, new_t)] {
                        if v == (false, false) {
                            p.remove(&q);
                        } else {
                            p.insert(q, v);
                        }
                    }
                }
            }
            for &q in &round.pre_hadamards {
                h(&mut p, q);
            }
            let mut support: Vec<(Coord, (bool, bool))> = p
                .iter()
                .filter(|(&q, _)| (q as usize) < n_data)
                .map(|(&q, &v)| (coords[q as usize], v))
                .collect();
            support.sort_by_key(|s| s.0);
            let basis = if support.iter().all(|s| s.1 == (false, true)) {
                Some(Basis::Z)
            } else if support.iter().all(|s| s.1 == (true, false)) {
                Some(Basis::X)
            } else {
                None
            };
            let n = support.len().max(1) as f64;
            let cx = support.iter().map(|s| s.0.x as f64).sum::<f64>() / n;
            let cy = support.iter().map(|s| s.0.y as f64).sum::<f64>() / n;
            MeasuredTile {
                qubit: m,
                basis,
                center: Coord::new(cx.round() as i32, cy.round() as i32),
                support: support.into_iter().map(|s| s.0).collect(),
            }
        })
        .collect()
}

/// Data-qubit pairs reached by a single measurement-qubit fault between CNOT
/// layers 2 and 3.
pub fn hook_edges(plan: &SchedulePlan) -> Vec<HookEdge> {
    let n_data = plan.data_qubits.len() as u32;
    let mut out = Vec::new();
    for (r, round) in plan.rounds.iter().enumerate() {
        for &m in &round.measurements {
            let late: Vec<u32> = round.cnot_layers[2..]
                .iter()
                .flat_map(|layer| layer.iter())
                .filter(|&&(c, t)| c == m || t == m)
                .map(|&(c, t)| if c == m { t } else { c })
                .filter(|&q| q < n_data)
                .collect();
            let partners: BTreeSet<u32> = round
                .cnot_layers
                .iter()
                .flat_map(|layer| layer.iter())
                .filter(|&&(c, t)| c == m || t == m)
                .map(|&(c, t)| if c == m { t } else { c })
                .filter(|&q| q < n_data)
                .collect();
            // On a weight-2 face the last two CNOTs span the whole face, so a
            // fault there is equivalent to the stabilizer, not a hook.
            if late.len() == 2 && late[0] != late[1] && partners.len() > 2 {
                out.push(HookEdge {
                    round: r,
                    tile: plan.qubit_coords[m as usize],
                    pair: (plan.qubit_coords[late[0] as usize], plan.qubit_coords[late[1] as usize]),
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Detector and observable inference.

const NO_RECORD: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct FlatOp {
    gate: Gate,
    a: u32,
    b: u32,
    record: u32,
}

/// The noiseless plan flattened to single-qubit/pair operations.
struct Tape {
    ops: Vec<FlatOp>,
    n_qubits: usize,
    /// First op index of each round; final entry is the readout start.
    round_start: Vec<usize>,
    /// Record range of each round; final entry is the data readout.
    round_records: Vec<std::ops::Range<u32>>,
    /// Qubit measured by each record.
    record_qubit: Vec<u32>,
    /// Number of leading ops that initialize the data qubits.
    init_end: usize,
}

impl Tape {
    fn new(plan: &SchedulePlan) -> Tape {
        let mut ops = Vec::new();
        let mut round_start = vec![0; plan.rounds.len() + 1];
        let mut round_records = vec![0..0; plan.rounds.len() + 1];
        let mut record_qubit = Vec::new();
        let mut current: Option<usize> = Some(usize::MAX);
        let mut init_end = 0;
        for layer in plan.tick_layers() {
            if layer.round != current {
                current = layer.round;
                let idx = layer.round.unwrap_or(plan.rounds.len());
                round_start[idx] = ops.len();
                let n = record_qubit.len() as u32;
                round_records[idx] = n..n;
            }
            for (gate, targets) in &layer.ops {
                match gate {
                    Gate::CX => {
                        for pair in targets.chunks(2) {
                            ops.push(FlatOp { gate: *gate, a: pair[0], b: pair[1], record: NO_RECORD });
                        }
                    }
                    Gate::M | Gate::MX => {
                        for &q in targets {
                            let rec = record_qubit.len() as u32;
                            record_qubit.push(q);
                            ops.push(FlatOp { gate: *gate, a: q, b: q, record: rec });
                        }
                        let idx = layer.round.unwrap_or(plan.rounds.len());
                        round_records[idx].end = record_qubit.len() as u32;
                    }
                    _ => {
                        for &q in targets {
                            ops.push(FlatOp { gate: *gate, a: q, b: q, record: NO_RECORD });
                        }
                    }
                }
                if init_end == 0 {
                    init_end = ops.len();
                }
            }
        }
        Tape { ops, n_qubits: plan.num_qubits(), round_start, round_records, record_qubit, init_end }
    }

    /// Backward flows of the records measured in `lo..hi` (plus, optionally,
    /// an extra Pauli injected at `hi` as the last column). Each column's
    /// flow is returned as a dense bit vector over "cut" events: an
    /// anticommuting reset or measurement, or the start of the circuit. With
    /// `cut_at_start` the window start also cuts every residual component;
    /// otherwise the residual flows at `lo` are returned.
    fn flows(
        &self,
        lo: usize,
        hi: usize,
        records: std::ops::Range<u32>,
        inject: Option<&[(bool, bool)]>,
        cut_at_start: bool,
    ) -> Flows {
        let n_rec = (records.end - records.start) as usize;
        let cols = n_rec + usize::from(inject.is_some());
        let w = gf2::words_for(cols);
        let mut xs = vec![vec![0u64; w]; self.n_qubits];
        let mut zs = vec![vec![0u64; w]; self.n_qubits];
        if let Some(p) = inject {
            for (q, &(x, z)) in p.iter().enumerate() {
                if x {
                    gf2::set(&mut xs[q], n_rec);
                }
                if z {
                    gf2::set(&mut zs[q], n_rec);
                }
            }
        }
        let mut events: Vec<Vec<u64>> = Vec::new();
        let cut = |v: &[u64], events: &mut Vec<Vec<u64>>| {
            if !gf2::is_zero(v) {
                events.push(v.to_vec());
            }
        };
        for op in self.ops[lo..hi].iter().rev() {
            let (a, b) = (op.a as usize, op.b as usize);
            match op.gate {
                Gate::M => {
                    cut(&xs[a], &mut events);
                    gf2::flip(&mut zs[a], (op.record - records.start) as usize);
                }
                Gate::MX => {
                    cut(&zs[a], &mut events);
                    gf2::flip(&mut xs[a], (op.record - records.start) as usize);
                }
                Gate::R => {
                    cut(&xs[a], &mut events);
                    xs[a].fill(0);
                    zs[a].fill(0);
                }
                Gate::RX => {
                    cut(&zs[a], &mut events);
                    xs[a].fill(0);
                    zs[a].fill(0);
                }
                Gate::H => std::mem::swap(&mut xs[a], &mut zs[a]),
                Gate::CX => {
                    let xc = xs[a].clone();
                    gf2::xor_into(&mut xs[b], &xc);
                    let zt = zs[b].clone();
                    gf2::xor_into(&mut zs[a], &zt);
                }
            }
        }
        if lo == 0 || cut_at_start {
            for q in 0..self.n_qubits {
                // Before the first op every qubit is |0⟩: only X components cut.
                cut(&xs[q], &mut events);
                if lo > 0 {
                    cut(&zs[q], &mut events);
                }
            }
        }
        let ew = gf2::words_for(events.len());
        let mut vectors = vec![vec![0u64; ew]; cols];
        for (e, bits) in events.iter().enumerate() {
            for col in gf2::ones(bits) {
                gf2::set(&mut vectors[col], e);
            }
        }
        Flows { vectors, xs, zs }
    }
}

/// Result of [`Tape::flows`].
struct Flows {
    /// Per column: the cut events hit by its backward flow.
    vectors: Vec<Vec<u64>>,
    /// Per qubit: columns with an X component at the window start.
    xs: Vec<Vec<u64>>,
    /// Per qubit: columns with a Z component at the window start.
    zs: Vec<Vec<u64>>,
}

impl Flows {
    /// Residual Pauli at the window start of the XOR of the columns in `mask`.
    fn residual(&self, mask: &[u64]) -> Vec<(bool, bool)> {
        let parity = |v: &[u64]| v.iter().zip(mask).fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones()) & 1 == 1;
        self.xs.iter().zip(&self.zs).map(|(x, z)| (parity(x), parity(z))).collect()
    }
}

/// Detectors completed by the records of round `r` (the data readout for
/// `r == rounds`). Each record is first compared against the previous round
/// only; records that have no such comparison but are still deterministic
/// relative to the initialization (possible only in the first two rounds)
/// fall back to it.
fn infer_detectors(plan: &SchedulePlan, tape: &Tape, readout_faces: &[Vec<u32>]) -> Vec<DetectorDef> {
    let n_rounds = plan.rounds.len();
    let n_data = plan.data_qubits.len() as u32;
    let mut dets = Vec::new();
    for r in 0..=n_rounds {
        let prev = if r == 0 { 0..0 } else { tape.round_records[r - 1].clone() };
        let cur = tape.round_records[r].clone();
        let hi = if r == n_rounds { tape.ops.len() } else { tape.round_start[r + 1] };
        let strict_lo = match r {
            0 => 0,
            1 => tape.init_end,
            _ => tape.round_start[r - 1],
        };
        let mut found = detectors_in_window(tape, strict_lo, hi, prev.clone(), cur.clone());
        // The relaxed window reaches back to the resets; at the readout
        // round that would make the logical itself look deterministic.
        if r == 1 && r < n_rounds {
            let relaxed = detectors_in_window(tape, 0, hi, prev.clone(), cur.clone());
            let have: BTreeSet<u32> = found.iter().map(|d| *d.last().expect("nonempty")).collect();
            found.extend(relaxed.into_iter().filter(|d| !have.contains(d.last().expect("nonempty"))));
            found.sort_by_key(|d| *d.last().expect("nonempty"));
        }
        if r == n_rounds {
            match align_to_faces(tape, &found, cur.clone(), readout_faces) {
                Some(aligned) => found = aligned,
                None => sparsify(&mut found),
            }
        } else {
            sparsify(&mut found);
        }
        for records in found {
            let coord = detector_coord(plan, tape, &records, r, n_data);
            dets.push(DetectorDef { round: r, records, coord });
        }
    }
    dets
}

/// Re-expresses the readout detectors so that the data part of each one is
/// exactly one readout-basis face of the layout. A single data error just
/// before readout then flips at most two of them. Returns `None` when the
/// faces do not give a basis of the same detector space.
fn align_to_faces(tape: &Tape, found: &[Vec<u32>], readout: Range<u32>, faces: &[Vec<u32>]) -> Option<Vec<Vec<u32>>> {
    if faces.len() != found.len() {
        return None;
    }
    let n_data = readout.len();
    let data_bits = |v: &[u32]| {
        let mut bits = vec![0u64; gf2::words_for(n_data)];
        for &rec in v.iter().filter(|r| readout.contains(r)) {
            gf2::flip(&mut bits, tape.record_qubit[rec as usize] as usize);
        }
        bits
    };
    let mut elim = gf2::Eliminator::new();
    for (i, v) in found.iter().enumerate() {
        let mut bits = data_bits(v);
        let mut combo = vec![0u64; gf2::words_for(found.len())];
        gf2::flip(&mut combo, i);
        if !elim.reduce(&mut bits, &mut combo) {
            elim.insert(bits, combo);
        }
    }
    let mut out = Vec::with_capacity(faces.len());
    for face in faces {
        let mut bits = vec![0u64; gf2::words_for(n_data)];
        for &q in face {
            gf2::flip(&mut bits, q as usize);
        }
        let mut combo = vec![0u64; gf2::words_for(found.len())];
        if !elim.reduce(&mut bits, &mut combo) {
            return None;
        }
        let mut records = BTreeSet::new();
        for i in gf2::ones(&combo) {
            for &rec in &found[i] {
                if !records.remove(&rec) {
                    records.insert(rec);
                }
            }
        }
        out.push(records.into_iter().collect::<Vec<u32>>());
    }
    out.sort_by_key(|d| *d.last().expect("nonempty"));
    Some(out)
}

/// Greedily lowers detector weights: a detector is XORed with any earlier
/// detector of the same window that shares records with it whenever that
/// makes it strictly smaller. Each detector keeps its latest record, so the
/// set stays independent.
fn sparsify(dets: &mut [Vec<u32>]) {
    let mut containing: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, d) in dets.iter().enumerate() {
        for &rec in d {
            containing.entry(rec).or_default().push(i);
        }
    }
    let xor = |a: &[u32], b: &[u32]| -> Vec<u32> {
        let (mut i, mut j, mut out) = (0, 0, Vec::with_capacity(a.len() + b.len()));
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x == y => {
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x < y => {
                    out.push(*x);
                    i += 1;
                }
                (Some(x), None) => {
                    out.push(*x);
                    i += 1;
                }
                (_, Some(y)) => {
                    out.push(*y);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        out
    };
    for i in 0..dets.len() {
        loop {
            let last = *dets[i].last().expect("nonempty");
            let mut best: Option<Vec<u32>> = None;
            let candidates: BTreeSet<usize> =
                dets[i].iter().filter_map(|r| containing.get(r)).flatten().copied().filter(|&j| j < i).collect();
            for j in candidates {
                if *dets[j].last().expect("nonempty") >= last {
                    continue;
                }
                let t = xor(&dets[i], &dets[j]);
                if t.len() < best.as_ref().map_or(dets[i].len(), |b| b.len()) {
                    best = Some(t);
                }
            }
            match best {
                Some(t) => {
                    for &rec in &t {
                        let list = containing.entry(rec).or_default();
                        if !list.contains(&i) {
                            list.push(i);
                        }
                    }
                    dets[i] = t;
                }
                None => break,
            }
        }
    }
}

/// Record combinations ending in a record of `cur` whose flows stay uncut
/// within `lo..hi`; the records of `prev` may be used as partners.
fn detectors_in_window(
    tape: &Tape,
    lo: usize,
    hi: usize,
    prev: std::ops::Range<u32>,
    cur: std::ops::Range<u32>,
) -> Vec<Vec<u32>> {
    let base = if prev.is_empty() { cur.start } else { prev.start };
    let vectors = tape.flows(lo, hi, base..cur.end, None, true).vectors;
    let cw = gf2::words_for((cur.end - base) as usize);
    let mut el = gf2::Eliminator::new();
    let mut out = Vec::new();
    for rec in prev.chain(cur.clone()) {
        let col = (rec - base) as usize;
        let mut v = vectors[col].clone();
        let mut combo = vec![0u64; cw];
        gf2::set(&mut combo, col);
        if el.reduce(&mut v, &mut combo) {
            if cur.contains(&rec) {
                out.push(gf2::ones(&combo).map(|c| base + c as u32).collect());
            }
        } else {
            el.insert(v, combo);
        }
    }
    out
}

fn detector_coord(plan: &SchedulePlan, tape: &Tape, records: &[u32], round: usize, n_data: u32) -> [f64; 3] {
    let t = round as f64;
    if let Some(&rec) = records.iter().rev().find(|&&k| tape.record_qubit[k as usize] >= n_data) {
        let (x, y) = plan.qubit_coords[tape.record_qubit[rec as usize] as usize].real();
        return [x, y, t];
    }
    let n = records.len().max(1) as f64;
    let (sx, sy) = records.iter().fold((0.0, 0.0), |acc, &k| {
        let (x, y) = plan.qubit_coords[tape.record_qubit[k as usize] as usize].real();
        (acc.0 + x, acc.1 + y)
    });
    [sx / n, sy / n, t]
}

/// Candidate chains for the readout-basis logical: the declared
/// representative first, then every straight row or column.
fn candidate_chains(layout: &Layout, basis: Basis) -> Vec<Vec<Coord>> {
    let mut out = Vec::new();
    if let Some(l) = layout.logical(basis) {
        out.push(l.chain.clone());
    }
    let (w, h) = (layout.width as i32, layout.height as i32);
    let horizontal = layout.sides.left == basis && layout.sides.right == basis;
    if horizontal {
        for y in 0..h {
            out.push((0..w).map(|x| Coord::data(x, y)).collect());
        }
    } else {
        for x in 0..w {
            out.push((0..h).map(|y| Coord::data(x, y)).collect());
        }
    }
    out.dedup();
    out
}

/// Carries the logical operator backward one round at a time. In each round
/// the records needed to keep the operator's flow uncut are added, and the
/// remaining operator at the round start is handed to the previous round.
fn infer_observables(layout: &Layout, plan: &SchedulePlan, tape: &Tape) -> Result<Vec<ObservableDef>, ScheduleError> {
    let basis = plan.readout_basis;
    let n_rounds = plan.rounds.len();
    let readout = tape.round_records[n_rounds].clone();
    'chains: for chain in candidate_chains(layout, basis) {
        let mut records: BTreeSet<u32> = BTreeSet::new();
        let mut pauli = vec![(false, false); tape.n_qubits];
        for c in &chain {
            let Some(i) = layout.data_index(*c) else { continue 'chains };
            records.insert(readout.start + i as u32);
            pauli[i] = (basis == Basis::X, basis == Basis::Z);
        }
        for r in (0..n_rounds).rev() {
            let recs = tape.round_records[r].clone();
            let n_rec = (recs.end - recs.start) as usize;
            let flows = tape.flows(tape.round_start[r], tape.round_start[r + 1], recs.clone(), Some(&pauli), false);
            let cw = gf2::words_for(n_rec + 1);
            let mut el = gf2::Eliminator::new();
            for col in 0..n_rec {
                let mut v = flows.vectors[col].clone();
                let mut combo = vec![0u64; cw];
                gf2::set(&mut combo, col);
                if !el.reduce(&mut v, &mut combo) {
                    el.insert(v, combo);
                }
            }
            let mut target = flows.vectors[n_rec].clone();
            let mut combo = vec![0u64; cw];
            if !el.reduce(&mut target, &mut combo) {
                continue 'chains;
            }
            records.extend(gf2::ones(&combo).map(|c| recs.start + c as u32));
            gf2::set(&mut combo, n_rec);
            pauli = flows.residual(&combo);
        }
        return Ok(vec![ObservableDef { basis, chain, records: records.into_iter().collect() }]);
    }
    Err(ScheduleError::NoObservable(basis))
}
