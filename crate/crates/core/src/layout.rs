//! Static geometry of rotated surface-code patches.
//!
//! A [`Layout`] lists the data qubits, the stabilizer tiles (Z or X faces of
//! weight 4 in the bulk and weight 2 on the boundary), the boundary segments
//! and one representative chain per logical operator. Layouts know nothing
//! about circuits; the schedule module turns them into syndrome-extraction
//! rounds.
//!
//! ## Conventions
//!
//! Coordinates are stored doubled so that half-integer positions are exact:
//! data qubits sit at even/even coordinates, face centers at odd/odd ones.
//! `y` grows downward. Patches are oriented with Z-type boundaries on the
//! left and right and X-type boundaries on the top and bottom, so the logical
//! Z chain runs horizontally and the logical X chain vertically.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors raised while building or analysing layouts.
#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    /// The requested code distance is not an odd integer ≥ 3.
    #[error("code distance must be odd and at least 3, got {0}")]
    InvalidDistance(usize),
    /// Exhaustive search would exceed the configured enumeration budget.
    #[error("search space of {needed} patterns exceeds the bound of {bound}; refusing to approximate")]
    Intractable {
        /// Number of patterns the next weight level would require.
        needed: u128,
        /// Configured upper bound.
        bound: u128,
    },
    /// Two tiles anticommute.
    #[error("tiles at {0} and {1} anticommute")]
    NonCommuting(Coord, Coord),
    /// The layout has no logical of the opposite basis to test against.
    #[error("layout declares no {0} logical")]
    MissingLogical(Basis),
    /// JSON (de)serialization failure.
    #[error("layout json: {0}")]
    Json(String),
}

/// A grid position in doubled units (`x = 2·x_real`, `y = 2·y_real`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Coord {
    /// Doubled horizontal position.
    pub x: i32,
    /// Doubled vertical position (grows downward).
    pub y: i32,
}

impl Coord {
    /// Builds a coordinate from doubled units.
    pub const fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    /// Position of the data qubit in column `col`, row `row`.
    pub const fn data(col: i32, row: i32) -> Self {
        Coord { x: 2 * col, y: 2 * row }
    }

    /// True for data-qubit positions (both components integral).
    pub fn is_data_site(&self) -> bool {
        self.x.rem_euclid(2) == 0 && self.y.rem_euclid(2) == 0
    }

    /// Shifts by a doubled-unit offset.
    pub const fn offset(&self, dx: i32, dy: i32) -> Self {
        Coord { x: self.x + dx, y: self.y + dy }
    }

    /// Real-valued position (undoubled).
    pub fn real(&self) -> (f64, f64) {
        (self.x as f64 / 2.0, self.y as f64 / 2.0)
    }

    /// Swaps the two axes.
    pub const fn transposed(&self) -> Self {
        Coord { x: self.y, y: self.x }
    }
}

impl Ord for Coord {
    /// Row-major order: by `y`, then `x`.
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Coord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (x, y) = self.real();
        write!(f, "({x}, {y})")
    }
}

impl Serialize for Coord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[i32; 2]>::deserialize(d)?;
        Ok(Coord { x, y })
    }
}

/// Pauli basis of a tile, boundary or logical operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// Z type.
    Z,
    /// X type.
    X,
}

impl Basis {
    /// The other basis.
    pub const fn opposite(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

impl FromStr for Basis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "z" => Ok(Basis::Z),
            "x" => Ok(Basis::X),
            other => Err(format!("unknown basis '{other}' (expected z or x)")),
        }
    }
}

/// A stabilizer face: the product of `basis` on every support qubit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    /// Pauli type of the face.
    pub basis: Basis,
    /// Face center (odd/odd doubled coordinates).
    pub center: Coord,
    /// Data qubits in row-major order; 4 in the bulk, 2 on a boundary.
    pub supports: Vec<Coord>,
}

impl Tile {
    /// True if the two tiles' Pauli products commute.
    pub fn commutes_with(&self, other: &Tile) -> bool {
        if self.basis == other.basis {
            return true;
        }
        let overlap = self.supports.iter().filter(|q| other.supports.contains(q)).count();
        overlap % 2 == 0
    }
}

/// One side of a rectangular patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// `y = 0` edge.
    Top,
    /// `x = max` edge.
    Right,
    /// `y = max` edge.
    Bottom,
    /// `x = 0` edge.
    Left,
}

/// Boundary type of each side of a rectangular patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideTypes {
    /// Basis of the top boundary.
    pub top: Basis,
    /// Basis of the right boundary.
    pub right: Basis,
    /// Basis of the bottom boundary.
    pub bottom: Basis,
    /// Basis of the left boundary.
    pub left: Basis,
}

impl SideTypes {
    /// The standard orientation: Z boundaries left/right, X top/bottom.
    pub const STANDARD: SideTypes =
        SideTypes { top: Basis::X, right: Basis::Z, bottom: Basis::X, left: Basis::Z };

    /// Basis of the given side.
    pub fn get(&self, side: Side) -> Basis {
        match side {
            Side::Top => self.top,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Left => self.left,
        }
    }

    /// Side types after swapping the x and y axes.
    pub fn transposed(&self) -> SideTypes {
        SideTypes { top: self.left, right: self.bottom, bottom: self.right, left: self.top }
    }
}

/// A straight boundary segment between two corner data qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySegment {
    /// Which side of the patch.
    pub side: Side,
    /// Boundary type: weight-2 tiles along it have this basis.
    pub basis: Basis,
    /// First data qubit of the segment.
    pub start: Coord,
    /// Last data qubit of the segment.
    pub end: Coord,
}

/// A logical-operator representative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Logical {
    /// Pauli type of the chain.
    pub basis: Basis,
    /// Data qubits carrying the operator, row-major.
    pub chain: Vec<Coord>,
}

/// Which family of layouts this is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutKind {
    /// A single d×d memory patch.
    Memory,
    /// Two d×d patches merged through a one-column channel.
    XxMerged,
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutKind::Memory => "memory",
            LayoutKind::XxMerged => "xx",
        })
    }
}

impl FromStr for LayoutKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "memory" => Ok(LayoutKind::Memory),
            "xx" | "xx_merged" | "xx-merged" => Ok(LayoutKind::XxMerged),
            other => Err(format!("unknown layout '{other}' (expected memory or xx)")),
        }
    }
}

/// Static stabilizer description of a rectangular rotated-code patch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    /// Layout family.
    pub kind: LayoutKind,
    /// Code distance parameter the layout was built for.
    pub distance: usize,
    /// Number of data-qubit columns.
    pub width: usize,
    /// Number of data-qubit rows.
    pub height: usize,
    /// Boundary type per side.
    pub sides: SideTypes,
    /// Data qubits, row-major.
    pub data_qubits: Vec<Coord>,
    /// Stabilizer faces, row-major by center.
    pub tiles: Vec<Tile>,
    /// One segment per side.
    pub boundaries: Vec<BoundarySegment>,
    /// One representative per logical operator.
    pub logicals: Vec<Logical>,
}

fn check_distance(d: usize) -> Result<(), LayoutError> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(LayoutError::InvalidDistance(d));
    }
    Ok(())
}

/// Builds the d×d memory patch.
pub fn build_memory_layout(d: usize) -> Result<Layout, LayoutError> {
    check_distance(d)?;
    Ok(build_rectangle(LayoutKind::Memory, d, d, d, SideTypes::STANDARD))
}

/// Builds the merged patch used for a logical XX measurement.
///
/// The two d×d patches sit side by side along x; their facing Z-type
/// boundaries are bridged by one column of channel qubits, giving a single
/// (2d+1)×d rectangle with Z boundaries left/right and X boundaries
/// top/bottom. In the merged code the two patches' X logicals become
/// equivalent (their product is the product of the channel X faces), while
/// the surviving Z logical is the product of both patches' Z logicals.
pub fn build_xx_merged_layout(d: usize) -> Result<Layout, LayoutError> {
    check_distance(d)?;
    Ok(build_rectangle(LayoutKind::XxMerged, d, 2 * d + 1, d, SideTypes::STANDARD))
}

/// Checkerboard basis of the face whose north-west data qubit is (`cx`, `cy`).
fn face_basis(cx: i32, cy: i32) -> Basis {
    if (cx + cy).rem_euclid(2) == 0 {
        Basis::X
    } else {
        Basis::Z
    }
}

/// Builds a `width`×`height` rotated-code rectangle with the given side types.
///
/// Weight-2 faces are kept on a side exactly where the checkerboard basis
/// matches that side's type.
pub fn build_rectangle(
    kind: LayoutKind,
    distance: usize,
    width: usize,
    height: usize,
    sides: SideTypes,
) -> Layout {
    let (w, h) = (width as i32, height as i32);
    let mut data_qubits = Vec::with_capacity(width * height);
    for row in 0..h {
        for col in 0..w {
            data_qubits.push(Coord::data(col, row));
        }
    }
    let mut tiles = Vec::new();
    for cy in -1..h {
        for cx in -1..w {
            let supports: Vec<Coord> = [(cx, cy), (cx + 1, cy), (cx, cy + 1), (cx + 1, cy + 1)]
                .into_iter()
                .filter(|&(x, y)| (0..w).contains(&x) && (0..h).contains(&y))
                .map(|(x, y)| Coord::data(x, y))
                .collect();
            let basis = face_basis(cx, cy);
            let keep = match supports.len() {
                4 => true,
                2 => {
                    let side = if cy == -1 {
                        Side::Top
                    } else if cy == h - 1 {
                        Side::Bottom
                    } else if cx == -1 {
                        Side::Left
                    } else {
                        Side::Right
                    };
                    sides.get(side) == basis
                }
                _ => false,
            };
            if keep {
                tiles.push(Tile { basis, center: Coord::new(2 * cx + 1, 2 * cy + 1), supports });
            }
        }
    }
    let corner = |x: i32, y: i32| Coord::data(x, y);
    let boundaries = vec![
        BoundarySegment { side: Side::Top, basis: sides.top, start: corner(0, 0), end: corner(w - 1, 0) },
        BoundarySegment { side: Side::Right, basis: sides.right, start: corner(w - 1, 0), end: corner(w - 1, h - 1) },
        BoundarySegment { side: Side::Bottom, basis: sides.bottom, start: corner(0, h - 1), end: corner(w - 1, h - 1) },
        BoundarySegment { side: Side::Left, basis: sides.left, start: corner(0, 0), end: corner(0, h - 1) },
    ];
    let mut logicals = Vec::new();
    // A chain runs between the two opposing boundaries of its own type.
    for basis in [Basis::Z, Basis::X] {
        if sides.left == basis && sides.right == basis {
            logicals.push(Logical { basis, chain: (0..w).map(|x| Coord::data(x, 0)).collect() });
        } else if sides.top == basis && sides.bottom == basis {
            logicals.push(Logical { basis, chain: (0..h).map(|y| Coord::data(0, y)).collect() });
        }
    }
    Layout { kind, distance, width, height, sides, data_qubits, tiles, boundaries, logicals }
}

impl Layout {
    /// Builds the layout of the given kind and distance.
    pub fn build(kind: LayoutKind, d: usize) -> Result<Layout, LayoutError> {
        match kind {
            LayoutKind::Memory => build_memory_layout(d),
            LayoutKind::XxMerged => build_xx_merged_layout(d),
        }
    }

    /// Index of a data qubit in `data_qubits`.
    pub fn data_index(&self, q: Coord) -> Option<usize> {
        self.data_qubits.binary_search(&q).ok()
    }

    /// Tiles of one basis.
    pub fn tiles_of(&self, basis: Basis) -> impl Iterator<Item = &Tile> {
        self.tiles.iter().filter(move |t| t.basis == basis)
    }

    /// The declared logical of a basis, if any.
    pub fn logical(&self, basis: Basis) -> Option<&Logical> {
        self.logicals.iter().find(|l| l.basis == basis)
    }

    /// Checks that all tile pairs commute.
    pub fn check_commutation(&self) -> Result<(), LayoutError> {
        for (i, a) in self.tiles.iter().enumerate() {
            for b in &self.tiles[i + 1..] {
                if !a.commutes_with(b) {
                    return Err(LayoutError::NonCommuting(a.center, b.center));
                }
            }
        }
        Ok(())
    }

    /// Deterministic JSON export.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    /// JSON import.
    pub fn from_json(text: &str) -> Result<Layout, LayoutError> {
        serde_json::from_str(text).map_err(|e| LayoutError::Json(e.to_string()))
    }
}

/// Result of [`css_min_distance`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinDistance {
    /// Minimum weight of a nontrivial logical of the requested basis.
    pub distance: usize,
    /// Minimum-weight chains found (capped at [`MAX_REPRESENTATIVES`]).
    pub representatives: Vec<Vec<Coord>>,
}

/// Cap on the number of minimum-weight chains reported.
pub const MAX_REPRESENTATIVES: usize = 4096;

/// Default enumeration budget for [`css_min_distance`].
pub const DEFAULT_SEARCH_BOUND: u128 = 50_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact minimum weight of a `basis`-type Pauli on the data qubits that
/// commutes with every tile but anticommutes with some opposite-basis logical.
///
/// Exhaustive enumeration by increasing weight; refuses (rather than
/// approximating) when the next weight level would exceed `bound` patterns.
pub fn css_min_distance(layout: &Layout, basis: Basis, bound: u128) -> Result<MinDistance, LayoutError> {
    let checks: Vec<&Tile> = layout.tiles_of(basis.opposite()).collect();
    let logicals: Vec<&Logical> =
        layout.logicals.iter().filter(|l| l.basis == basis.opposite()).collect();
    if logicals.is_empty() {
        return Err(LayoutError::MissingLogical(basis.opposite()));
    }
    let n = layout.data_qubits.len();
    let words = (checks.len() + logicals.len()).div_ceil(64).max(1);
    // Column of the check matrix for every data qubit: which checks it
    // anticommutes with, followed by which opposite logicals it flips.
    let mut columns = vec![vec![0u64; words]; n];
    for (ci, t) in checks.iter().enumerate() {
        for q in &t.supports {
            let i = layout.data_index(*q).expect("tile support is a data qubit");
            columns[i][ci / 64] ^= 1 << (ci % 64);
        }
    }
    for (li, l) in logicals.iter().enumerate() {
        let bit = checks.len() + li;
        for q in &l.chain {
            let i = layout.data_index(*q).expect("logical chain is on data qubits");
            columns[i][bit / 64] ^= 1 << (bit % 64);
        }
    }
    let check_words = checks.len();
    let is_logical = |acc: &[u64]| -> bool {
        let syndrome_clear = (0..check_words).all(|b| acc[b / 64] >> (b % 64) & 1 == 0);
        let flips = (check_words..check_words + logicals.len()).any(|b| acc[b / 64] >> (b % 64) & 1 == 1);
        syndrome_clear && flips
    };
    let mut spent: u128 = 0;
    for weight in 1..=n {
        let needed = binomial(n, weight);
        if spent + needed > bound {
            return Err(LayoutError::Intractable { needed: spent + needed, bound });
        }
        spent += needed;
        let mut reps = Vec::new();
        let mut chosen = Vec::with_capacity(weight);
        let mut acc = vec![0u64; words];
        enumerate(&columns, weight, 0, &mut chosen, &mut acc, &mut |sel, acc| {
            if is_logical(acc) && reps.len() < MAX_REPRESENTATIVES {
                reps.push(sel.iter().map(|&i| layout.data_qubits[i]).collect());
            }
        });
        if !reps.is_empty() {
            return Ok(MinDistance { distance: weight, representatives: reps });
        }
    }
    Err(LayoutError::MissingLogical(basis))
}

fn enumerate(
    columns: &[Vec<u64>],
    remaining: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    acc: &mut [u64],
    visit: &mut dyn FnMut(&[usize], &[u64]),
) {
    if remaining == 0 {
        visit(chosen, acc);
        return;
    }
    for i in start..=columns.len() - remaining {
        for (a, c) in acc.iter_mut().zip(&columns[i]) {
            *a ^= c;
        }
        chosen.push(i);
        enumerate(columns, remaining - 1, i + 1, chosen, acc, visit);
        chosen.pop();
        for (a, c) in acc.iter_mut().zip(&columns[i]) {
            *a ^= c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent distance oracle: smallest-weight `basis` pattern that
    /// commutes with every opposite tile but is not a product of same-basis
    /// tiles, found by enumerating bitmasks and a GF(2) rank test.
    fn oracle_distance(layout: &Layout, basis: Basis, max_weight: usize) -> Option<(usize, Vec<u64>)> {
        let n = layout.data_qubits.len();
        assert!(n <= 64);
        let mask = |qs: &[Coord]| qs.iter().fold(0u64, |m, q| m | 1 << layout.data_index(*q).unwrap());
        let checks: Vec<u64> = layout.tiles_of(basis.opposite()).map(|t| mask(&t.supports)).collect();
        let stabs: Vec<u64> = layout.tiles_of(basis).map(|t| mask(&t.supports)).collect();
        let rank = |vs: &[u64]| {
            let mut basis_vecs: Vec<u64> = Vec::new();
            for &v in vs {
                let mut v = v;
                for &b in &basis_vecs {
                    v = v.min(v ^ b);
                }
                if v != 0 {
                    basis_vecs.push(v);
                    basis_vecs.sort_by(|a, b| b.cmp(a));
                }
            }
            basis_vecs.len()
        };
        let stab_rank = rank(&stabs);
        for w in 1..=max_weight {
            let mut found = Vec::new();
            let mut stack = vec![(0usize, 0u64, 0usize)];
            while let Some((start, m, k)) = stack.pop() {
                if k == w {
                    let commutes = checks.iter().all(|c| (c & m).count_ones() % 2 == 0);
                    if commutes {
                        let mut with = stabs.clone();
                        with.push(m);
                        if rank(&with) > stab_rank {
                            found.push(m);
                        }
                    }
                    continue;
                }
                for i in start..n {
                    stack.push((i + 1, m | 1 << i, k + 1));
                }
            }
            if !found.is_empty() {
                return Some((w, found));
            }
        }
        None
    }

    #[test]
    fn memory_patch_counts() {
        for d in [3usize, 5, 7] {
            let l = build_memory_layout(d).unwrap();
            assert_eq!(l.data_qubits.len(), d * d);
            assert_eq!(l.tiles.len(), d * d - 1);
            assert_eq!(l.tiles_of(Basis::Z).count(), (d * d - 1) / 2);
            assert_eq!(l.tiles_of(Basis::X).count(), (d * d - 1) / 2);
            assert_eq!(l.tiles.iter().filter(|t| t.supports.len() == 2).count(), 2 * (d - 1));
            assert_eq!(l.logical(Basis::Z).unwrap().chain.len(), d);
            assert_eq!(l.logical(Basis::X).unwrap().chain.len(), d);
            assert_eq!(l.logicals.len(), 2);
        }
    }

    #[test]
    fn logical_orientation() {
        let l = build_memory_layout(5).unwrap();
        let z = &l.logical(Basis::Z).unwrap().chain;
        assert!(z.iter().all(|q| q.y == z[0].y), "Z logical is horizontal");
        let x = &l.logical(Basis::X).unwrap().chain;
        assert!(x.iter().all(|q| q.x == x[0].x), "X logical is vertical");
    }

    #[test]
    fn rejects_bad_distances() {
        for d in [0usize, 1, 2, 4, 6] {
            assert_eq!(build_memory_layout(d).unwrap_err(), LayoutError::InvalidDistance(d));
            assert_eq!(build_xx_merged_layout(d).unwrap_err(), LayoutError::InvalidDistance(d));
        }
    }

    #[test]
    fn all_tile_pairs_commute() {
        let l = build_memory_layout(5).unwrap();
        let mut pairs = 0;
        for (i, a) in l.tiles.iter().enumerate() {
            for b in &l.tiles[i + 1..] {
                assert!(a.commutes_with(b), "{a:?} vs {b:?}");
                pairs += 1;
            }
        }
        assert_eq!(pairs, 276);
        for d in [3, 5] {
            assert!(build_xx_merged_layout(d).unwrap().check_commutation().is_ok());
        }
    }

    #[test]
    fn memory_distances_match_oracle() {
        for d in [3usize, 5] {
            let l = build_memory_layout(d).unwrap();
            for b in [Basis::Z, Basis::X] {
                let got = css_min_distance(&l, b, DEFAULT_SEARCH_BOUND).unwrap();
                let (w, reps) = oracle_distance(&l, b, d).unwrap();
                assert_eq!(got.distance, w);
                assert_eq!(got.distance, d);
                assert_eq!(got.representatives.len(), reps.len(), "d={d} {b}");
            }
        }
    }

    #[test]
    fn merged_layout_geometry() {
        let l = build_xx_merged_layout(3).unwrap();
        assert_eq!((l.width, l.height), (7, 3));
        assert_eq!(l.data_qubits.len(), 21);
        assert_eq!(l.tiles.len(), 20);
        let x = css_min_distance(&l, Basis::X, DEFAULT_SEARCH_BOUND).unwrap();
        let (w, _) = oracle_distance(&l, Basis::X, 3).unwrap();
        assert_eq!(x.distance, 3);
        assert_eq!(w, 3);
        // Every minimum X representative runs top to bottom (one qubit per
        // row); none crosses the 7-column width, so there is no horizontal
        // weight-3 representative in this twist-free rectangle.
        for rep in &x.representatives {
            let rows: std::collections::BTreeSet<i32> = rep.iter().map(|q| q.y).collect();
            assert_eq!(rows.len(), 3, "{rep:?}");
        }
        let z = css_min_distance(&l, Basis::Z, DEFAULT_SEARCH_BOUND).unwrap();
        let (wz, _) = oracle_distance(&l, Basis::Z, 7).unwrap();
        assert_eq!(z.distance, 7);
        assert_eq!(wz, 7);
    }

    #[test]
    fn single_qubit_code_has_distance_one() {
        let q = Coord::data(0, 0);
        let l = Layout {
            kind: LayoutKind::Memory,
            distance: 1,
            width: 1,
            height: 1,
            sides: SideTypes::STANDARD,
            data_qubits: vec![q],
            tiles: vec![],
            boundaries: vec![],
            logicals: vec![Logical { basis: Basis::Z, chain: vec![q] }, Logical { basis: Basis::X, chain: vec![q] }],
        };
        assert_eq!(css_min_distance(&l, Basis::Z, 10).unwrap().distance, 1);
    }

    #[test]
    fn search_refuses_beyond_bound() {
        let l = build_memory_layout(7).unwrap();
        assert!(matches!(css_min_distance(&l, Basis::Z, 1000), Err(LayoutError::Intractable { .. })));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        for l in [build_memory_layout(3).unwrap(), build_xx_merged_layout(3).unwrap()] {
            let text = l.to_json();
            let back = Layout::from_json(&text).unwrap();
            assert_eq!(back, l);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn tiles_are_unique_and_boundaries_alternate() {
        for l in [build_memory_layout(5).unwrap(), build_xx_merged_layout(5).unwrap()] {
            let mut seen = std::collections::HashSet::new();
            for t in &l.tiles {
                assert!(seen.insert((t.basis, t.supports.clone())));
            }
            let order = [Side::Top, Side::Right, Side::Bottom, Side::Left];
            for w in 0..4 {
                assert_ne!(l.sides.get(order[w]), l.sides.get(order[(w + 1) % 4]));
            }
        }
    }

    proptest! {
        #[test]
        fn declared_logicals_are_valid(d in prop::sample::select(vec![3usize, 5, 7, 9]), merged in any::<bool>()) {
            let l = if merged { build_xx_merged_layout(d).unwrap() } else { build_memory_layout(d).unwrap() };
            for lg in &l.logicals {
                for t in l.tiles_of(lg.basis.opposite()) {
                    let overlap = t.supports.iter().filter(|q| lg.chain.contains(q)).count();
                    prop_assert_eq!(overlap % 2, 0);
                }
            }
            let z = l.logical(Basis::Z).unwrap();
            let x = l.logical(Basis::X).unwrap();
            let overlap = z.chain.iter().filter(|q| x.chain.contains(q)).count();
            prop_assert_eq!(overlap % 2, 1);
        }

        #[test]
        fn tiles_commute_pairwise(d in prop::sample::select(vec![3usize, 5, 7, 9, 11]), merged in any::<bool>()) {
            let l = if merged { build_xx_merged_layout(d).unwrap() } else { build_memory_layout(d).unwrap() };
            prop_assert!(l.check_commutation().is_ok());
            prop_assert_eq!(l.tiles.len(), l.data_qubits.len() - 1);
        }
    }
}
