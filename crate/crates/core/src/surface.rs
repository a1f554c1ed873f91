//! Obstacle tables and the square-tiled translation surface built from four
//! copies of the billiard cell.
//!
//! Squares carry a chart position `c` in the `D x D` grid and a copy label
//! `(i, j)`. Because the obstacle is symmetric under both mirrors, all four
//! copies see the obstacle at the same chart position. Crossing a vertical
//! obstacle wall toggles `i` and sends the chart position to its `x`-mirror;
//! horizontal walls do the same in `y` with `j`. Cell boundaries wrap around
//! within the copy. This convention is validated after construction by the
//! stratum check (the commutator must have exactly `4m` three-cycles) and,
//! end to end, by the billiard correspondence oracle in the dynamics tests.

use crate::exactmath::{rat_int, BigRat};
use num_bigint::BigInt;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurfaceError {
    Parse { line: usize, msg: String },
    Validation { reason: String },
    Construction { reason: String },
}

impl fmt::Display for SurfaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceError::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            SurfaceError::Validation { reason } => write!(f, "invalid table: {reason}"),
            SurfaceError::Construction { reason } => write!(f, "construction failed: {reason}"),
        }
    }
}

impl std::error::Error for SurfaceError {}

fn invalid(reason: impl Into<String>) -> SurfaceError {
    SurfaceError::Validation { reason: reason.into() }
}

/// A validated obstacle: an axis-aligned, doubly mirror-symmetric simple
/// lattice polygon strictly inside the open cell `(0, D)^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindTreeTable {
    pub denominator: u32,
    pub vertices: Vec<(i64, i64)>,
    obstacle: Vec<bool>,
    m: u32,
}

impl WindTreeTable {
    /// Validate a vertex list (counterclockwise) against every table
    /// invariant; the first violated invariant is reported.
    pub fn from_vertices(denominator: u32, vertices: Vec<(i64, i64)>) -> Result<Self, SurfaceError> {
        let d = denominator as i64;
        if d < 3 {
            return Err(invalid("denominator must be at least 3"));
        }
        if vertices.len() < 4 {
            return Err(invalid("polygon needs at least 4 vertices"));
        }
        for &(x, y) in &vertices {
            if x < 1 || x > d - 1 || y < 1 || y > d - 1 {
                return Err(invalid("not strictly interior"));
            }
        }
        let n = vertices.len();
        // Axis-aligned edges, strictly alternating horizontal/vertical.
        let mut horizontal = Vec::with_capacity(n);
        for k in 0..n {
            let (x0, y0) = vertices[k];
            let (x1, y1) = vertices[(k + 1) % n];
            if (x0 == x1) == (y0 == y1) {
                return Err(invalid("edges must be axis-aligned and nonzero"));
            }
            horizontal.push(y0 == y1);
        }
        for k in 0..n {
            if horizontal[k] == horizontal[(k + 1) % n] {
                return Err(invalid("edges must strictly alternate horizontal/vertical"));
            }
        }
        if !simple_polygon(&vertices) {
            return Err(invalid("polygon is not simple"));
        }
        let area2 = shoelace2(&vertices);
        if area2 <= 0 {
            return Err(invalid("vertices not in counterclockwise order"));
        }
        // Fill the cell grid.
        let du = denominator as usize;
        let mut obstacle = vec![false; du * du];
        let mut count = 0i64;
        for y in 0..d {
            for x in 0..d {
                if point_in_polygon(&vertices, x, y) {
                    obstacle[(y * d + x) as usize] = true;
                    count += 1;
                }
            }
        }
        if count * 2 != area2 {
            return Err(invalid("polygon area does not match its cell fill"));
        }
        for y in 0..d {
            for x in 0..d {
                let here = obstacle[(y * d + x) as usize];
                if here != obstacle[(y * d + (d - 1 - x)) as usize] {
                    return Err(invalid("obstacle not symmetric under x -> D - x"));
                }
                if here != obstacle[((d - 1 - y) * d + x) as usize] {
                    return Err(invalid("obstacle not symmetric under y -> D - y"));
                }
            }
        }
        // Corner census: left turns are convex corners of the obstacle.
        let mut convex = 0u32;
        let mut reflex = 0u32;
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
            if cross > 0 {
                convex += 1;
            } else {
                reflex += 1;
            }
        }
        if convex < 4 || convex - reflex != 4 {
            return Err(invalid("corner census broken (needs convex - reflex = 4)"));
        }
        if convex % 4 != 0 {
            return Err(invalid("number of right-angle corners must be a multiple of 4"));
        }
        let m = convex / 4;
        let table = WindTreeTable { denominator, vertices, obstacle, m };
        if !table.free_region_connected() {
            return Err(invalid("free region is disconnected"));
        }
        Ok(table)
    }

    /// Rectangle obstacle of size `a x b` cells, `a = a_num/den`,
    /// `b = b_num/den`, centered in a cell of denominator `2*den`.
    pub fn square(a_num: u32, b_num: u32, den: u32) -> Result<Self, SurfaceError> {
        if den == 0 || a_num == 0 || b_num == 0 || a_num >= den || b_num >= den {
            return Err(invalid("rectangle parameters must lie strictly between 0 and 1"));
        }
        let d = (2 * den) as i64;
        let (ax0, ax1) = (den as i64 - a_num as i64, den as i64 + a_num as i64);
        let (ay0, ay1) = (den as i64 - b_num as i64, den as i64 + b_num as i64);
        let table = WindTreeTable::from_vertices(
            2 * den,
            vec![(ax0, ay0), (ax1, ay0), (ax1, ay1), (ax0, ay1)],
        )?;
        debug_assert_eq!(table.denominator as i64, d);
        Ok(table)
    }

    /// The five-cell cross with a one-cell margin (`D = 5`, `m = 2`).
    pub fn plus() -> Self {
        WindTreeTable::from_vertices(
            5,
            vec![
                (2, 1),
                (3, 1),
                (3, 2),
                (4, 2),
                (4, 3),
                (3, 3),
                (3, 4),
                (2, 4),
                (2, 3),
                (1, 3),
                (1, 2),
                (2, 2),
            ],
        )
        .expect("built-in cross is valid")
    }

    /// Number of right-angle corner quadruples; the family parameter.
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Free area of a fundamental cell, `1 - |obstacle| / D^2`, exact.
    pub fn area(&self) -> BigRat {
        let d2 = self.denominator as i64 * self.denominator as i64;
        rat_int(1) - BigRat::new(BigInt::from(self.obstacle_cells() as i64), BigInt::from(d2))
    }

    pub fn obstacle_cells(&self) -> usize {
        self.obstacle.iter().filter(|&&b| b).count()
    }

    /// Obstacle test in cell-grid coordinates, periodic mod `D`.
    pub fn is_obstacle(&self, x: i64, y: i64) -> bool {
        let d = self.denominator as i64;
        let xm = x.rem_euclid(d);
        let ym = y.rem_euclid(d);
        self.obstacle[(ym * d + xm) as usize]
    }

    pub fn free_cells(&self) -> Vec<(u32, u32)> {
        let d = self.denominator;
        let mut out = Vec::new();
        for y in 0..d {
            for x in 0..d {
                if !self.obstacle[(y * d + x) as usize] {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn free_region_connected(&self) -> bool {
        let d = self.denominator as i64;
        let free = self.free_cells();
        if free.is_empty() {
            return false;
        }
        let idx = |x: i64, y: i64| (y.rem_euclid(d) * d + x.rem_euclid(d)) as usize;
        let mut seen = vec![false; (d * d) as usize];
        let start = free[0];
        let mut stack = vec![(start.0 as i64, start.1 as i64)];
        seen[idx(start.0 as i64, start.1 as i64)] = true;
        let mut visited = 0usize;
        while let Some((x, y)) = stack.pop() {
            visited += 1;
            for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                if !self.is_obstacle(nx, ny) && !seen[idx(nx, ny)] {
                    seen[idx(nx, ny)] = true;
                    stack.push((nx, ny));
                }
            }
        }
        visited == free.len()
    }
}

fn shoelace2(vertices: &[(i64, i64)]) -> i64 {
    let n = vertices.len();
    let mut acc = 0i64;
    for k in 0..n {
        let (x0, y0) = vertices[k];
        let (x1, y1) = vertices[(k + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc
}

fn simple_polygon(vertices: &[(i64, i64)]) -> bool {
    let n = vertices.len();
    for a in 0..n {
        for b in a + 1..n {
            if vertices[a] == vertices[b] {
                return false;
            }
        }
    }
    let seg = |k: usize| (vertices[k], vertices[(k + 1) % n]);
    for a in 0..n {
        for b in a + 1..n {
            let adjacent = b == a + 1 || (a == 0 && b == n - 1);
            let (p1, p2) = seg(a);
            let (q1, q2) = seg(b);
            if segments_touch(p1, p2, q1, q2, adjacent) {
                return false;
            }
        }
    }
    true
}

/// Axis-aligned segment overlap test; adjacent edges may share one endpoint.
fn segments_touch(p1: (i64, i64), p2: (i64, i64), q1: (i64, i64), q2: (i64, i64), adjacent: bool) -> bool {
    let (pmin, pmax) = (
        (p1.0.min(p2.0), p1.1.min(p2.1)),
        (p1.0.max(p2.0), p1.1.max(p2.1)),
    );
    let (qmin, qmax) = (
        (q1.0.min(q2.0), q1.1.min(q2.1)),
        (q1.0.max(q2.0), q1.1.max(q2.1)),
    );
    let ox0 = pmin.0.max(qmin.0);
    let ox1 = pmax.0.min(qmax.0);
    let oy0 = pmin.1.max(qmin.1);
    let oy1 = pmax.1.min(qmax.1);
    if ox0 > ox1 || oy0 > oy1 {
        return false;
    }
    // Overlap region is nonempty; a single shared point is fine for
    // adjacent edges only.
    let single_point = ox0 == ox1 && oy0 == oy1;
    if single_point && adjacent {
        return false;
    }
    true
}

/// Cell-center ray cast; centers at half-integers never meet lattice edges.
fn point_in_polygon(vertices: &[(i64, i64)], cx: i64, cy: i64) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for k in 0..n {
        let (x0, y0) = vertices[k];
        let (x1, y1) = vertices[(k + 1) % n];
        if x0 != x1 {
            continue; // horizontal edge, never crossed by a horizontal ray
        }
        let (ylo, yhi) = (y0.min(y1), y0.max(y1));
        // center (cx + 1/2, cy + 1/2), ray towards +x
        if x0 > cx && ylo <= cy && cy < yhi {
            inside = !inside;
        }
    }
    inside
}

/// Parse the table file format: `denominator <D>` then `vertex <x> <y>` lines,
/// `#` comments, or a generator line `square <a> <b>` / `plus`.
pub fn parse_table(text: &str) -> Result<WindTreeTable, SurfaceError> {
    let mut denominator: Option<u32> = None;
    let mut vertices = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        let perr = |msg: String| SurfaceError::Parse { line: lineno, msg };
        match keyword {
            "denominator" => {
                let v = parts
                    .next()
                    .ok_or_else(|| perr("denominator needs a value".into()))?;
                let d: u32 = v
                    .parse()
                    .map_err(|_| perr(format!("bad denominator {v:?}")))?;
                denominator = Some(d);
            }
            "vertex" => {
                let x = parts.next().ok_or_else(|| perr("vertex needs x y".into()))?;
                let y = parts.next().ok_or_else(|| perr("vertex needs x y".into()))?;
                let x: i64 = x.parse().map_err(|_| perr(format!("bad x {x:?}")))?;
                let y: i64 = y.parse().map_err(|_| perr(format!("bad y {y:?}")))?;
                vertices.push((x, y));
            }
            "square" => {
                let a = parts.next().ok_or_else(|| perr("square needs a b".into()))?;
                let b = parts.next().ok_or_else(|| perr("square needs a b".into()))?;
                let (an, ad) = parse_fraction(a).ok_or_else(|| perr(format!("bad fraction {a:?}")))?;
                let (bn, bd) = parse_fraction(b).ok_or_else(|| perr(format!("bad fraction {b:?}")))?;
                let den = lcm(ad, bd);
                return WindTreeTable::square((an * (den / ad)) as u32, (bn * (den / bd)) as u32, den as u32);
            }
            "plus" => return Ok(WindTreeTable::plus()),
            other => return Err(perr(format!("unknown keyword {other:?}"))),
        }
        if parts.next().is_some() {
            return Err(SurfaceError::Parse { line: lineno, msg: "trailing tokens".into() });
        }
    }
    let denominator = denominator.ok_or(SurfaceError::Parse { line: 0, msg: "missing denominator".into() })?;
    WindTreeTable::from_vertices(denominator, vertices)
}

fn parse_fraction(s: &str) -> Option<(u64, u64)> {
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.parse().ok()?;
        let d: u64 = d.parse().ok()?;
        if d == 0 {
            return None;
        }
        Some((n, d))
    } else {
        let n: u64 = s.parse().ok()?;
        Some((n, 1))
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    num_integer::lcm(a, b)
}

/// Which gluing a positive-direction edge crossing uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    /// Into the adjacent free cell of the same fundamental domain.
    Interior,
    /// Across the cell boundary (the chart wraps mod `D`).
    CellWrap,
    /// Through an obstacle wall (reflection: copy index toggles).
    Wall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SquareMeta {
    pub cell: (u16, u16),
    pub copy: (u8, u8),
}

/// Square-tiled translation surface given by right/up neighbor permutations.
#[derive(Clone, Debug)]
pub struct Origami {
    pub n: usize,
    pub d: u32,
    pub right: Vec<u32>,
    pub up: Vec<u32>,
    pub right_inv: Vec<u32>,
    pub up_inv: Vec<u32>,
    /// Chart metadata; empty for synthetic origamis built from bare
    /// permutations.
    pub squares: Vec<SquareMeta>,
    pub right_kind: Vec<EdgeKind>,
    pub up_kind: Vec<EdgeKind>,
    /// Whether the lattice vertex at the lower-left corner of each square is
    /// a cone point.
    pub singular_ll: Vec<bool>,
}

impl Origami {
    /// Build from bare permutations (unit metadata); used by the SL(2,Z)
    /// action and in tests.
    pub fn from_permutations(right: Vec<u32>, up: Vec<u32>) -> Result<Self, SurfaceError> {
        let n = right.len();
        if up.len() != n || n == 0 {
            return Err(SurfaceError::Construction { reason: "permutation size mismatch".into() });
        }
        let right_inv = invert(&right)?;
        let up_inv = invert(&up)?;
        let mut o = Origami {
            n,
            d: 1,
            right,
            up,
            right_inv,
            up_inv,
            squares: Vec::new(),
            right_kind: vec![EdgeKind::Interior; n],
            up_kind: vec![EdgeKind::Interior; n],
            singular_ll: Vec::new(),
        };
        o.singular_ll = o.compute_singular_ll();
        Ok(o)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 0usize;
        while let Some(s) = stack.pop() {
            count += 1;
            for t in [
                self.right[s as usize],
                self.up[s as usize],
                self.right_inv[s as usize],
                self.up_inv[s as usize],
            ] {
                if !seen[t as usize] {
                    seen[t as usize] = true;
                    stack.push(t);
                }
            }
        }
        count == self.n
    }

    /// One full counterclockwise turn around the vertex at the lower-left
    /// corner of `s`.
    pub fn vertex_turn(&self, s: u32) -> u32 {
        let a = self.right_inv[s as usize];
        let b = self.up_inv[a as usize];
        let c = self.right[b as usize];
        self.up[c as usize]
    }

    fn compute_singular_ll(&self) -> Vec<bool> {
        let mut sing = vec![false; self.n];
        let mut seen = vec![false; self.n];
        for s0 in 0..self.n as u32 {
            if seen[s0 as usize] {
                continue;
            }
            let mut orbit = vec![s0];
            seen[s0 as usize] = true;
            let mut s = self.vertex_turn(s0);
            while s != s0 {
                seen[s as usize] = true;
                orbit.push(s);
                s = self.vertex_turn(s);
            }
            if orbit.len() > 1 {
                for t in orbit {
                    sing[t as usize] = true;
                }
            }
        }
        sing
    }

    /// Genus via the vertex count of the square complex.
    pub fn genus(&self) -> u32 {
        let v = singularity_profile(self).len();
        ((2 + self.n - v) / 2) as u32
    }

    /// Canonical relabeling-invariant encoding; equal encodings mean
    /// translation-equivalent origamis.
    pub fn canonical_form(&self) -> Vec<u32> {
        let mut best: Option<Vec<u32>> = None;
        for root in 0..self.n as u32 {
            let enc = self.encode_from(root);
            if best.as_ref().is_none_or(|b| enc < *b) {
                best = Some(enc);
            }
        }
        best.unwrap()
    }

    fn encode_from(&self, root: u32) -> Vec<u32> {
        let mut label = vec![u32::MAX; self.n];
        let mut order = Vec::with_capacity(self.n);
        label[root as usize] = 0;
        order.push(root);
        let mut head = 0usize;
        while head < order.len() {
            let s = order[head];
            head += 1;
            for t in [self.right[s as usize], self.up[s as usize]] {
                if label[t as usize] == u32::MAX {
                    label[t as usize] = order.len() as u32;
                    order.push(t);
                }
            }
        }
        debug_assert_eq!(order.len(), self.n, "encode_from needs a connected origami");
        let mut enc = Vec::with_capacity(2 * self.n);
        for &s in &order {
            enc.push(label[self.right[s as usize] as usize]);
            enc.push(label[self.up[s as usize] as usize]);
        }
        enc
    }
}

fn invert(p: &[u32]) -> Result<Vec<u32>, SurfaceError> {
    let mut inv = vec![u32::MAX; p.len()];
    for (s, &t) in p.iter().enumerate() {
        if t as usize >= p.len() || inv[t as usize] != u32::MAX {
            return Err(SurfaceError::Construction { reason: "not a permutation".into() });
        }
        inv[t as usize] = s as u32;
    }
    Ok(inv)
}

/// Multiset of commutator cycle lengths (sorted), one entry per lattice
/// vertex; a length-`k` cycle is a cone point of angle `2 pi k`.
pub fn singularity_profile(origami: &Origami) -> Vec<usize> {
    let n = origami.n;
    let mut seen = vec![false; n];
    let mut lengths = Vec::new();
    for s0 in 0..n as u32 {
        if seen[s0 as usize] {
            continue;
        }
        let mut len = 0usize;
        let mut s = s0;
        loop {
            seen[s as usize] = true;
            len += 1;
            // right . up . right^-1 . up^-1
            let a = origami.up_inv[s as usize];
            let b = origami.right_inv[a as usize];
            let c = origami.up[b as usize];
            s = origami.right[c as usize];
            if s == s0 {
                break;
            }
        }
        lengths.push(len);
    }
    lengths.sort_unstable();
    lengths
}

/// The three commuting generators of the deck group, as square permutations.
/// `tau_h` swaps the copy pair exchanged by the horizontal-wall reflection
/// (second copy index), `tau_v` the vertical-wall pair (first index), and
/// `iota` is the per-copy rotation by pi about the obstacle center.
#[derive(Clone, Debug)]
pub struct DeckGroup {
    pub tau_h: Vec<u32>,
    pub tau_v: Vec<u32>,
    pub iota: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DeckElement {
    pub tau_h: bool,
    pub tau_v: bool,
    pub iota: bool,
}

impl DeckElement {
    pub const IDENTITY: DeckElement = DeckElement { tau_h: false, tau_v: false, iota: false };

    pub fn all() -> [DeckElement; 8] {
        std::array::from_fn(|k| DeckElement {
            tau_h: k & 1 != 0,
            tau_v: k & 2 != 0,
            iota: k & 4 != 0,
        })
    }

    /// Translations preserve the flow direction; `iota`-elements reverse it.
    pub fn is_translation(self) -> bool {
        !self.iota
    }
}

/// Apply a deck element to a square (the generators commute).
pub fn deck_action(deck: &DeckGroup, g: DeckElement, square: u32) -> u32 {
    let mut s = square;
    if g.tau_h {
        s = deck.tau_h[s as usize];
    }
    if g.tau_v {
        s = deck.tau_v[s as usize];
    }
    if g.iota {
        s = deck.iota[s as usize];
    }
    s
}

/// Per-quotient copy signs used by the winding functionals: two copies carry
/// `+1` and two `-1` in each row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindingSignTable {
    /// Indexed by copy `(i, j)`: sign for the `h`-side quotient.
    pub h: [[i8; 2]; 2],
    /// Sign for the `v`-side quotient.
    pub v: [[i8; 2]; 2],
}

impl WindingSignTable {
    /// The calibrated assignment: `h` grades by the first copy index, `v` by
    /// the second, `+1` on copy `(0,0)`.
    pub fn standard() -> Self {
        WindingSignTable {
            h: [[1, 1], [-1, -1]],
            v: [[1, -1], [1, -1]],
        }
    }

    pub fn h_sign(&self, copy: (u8, u8)) -> i64 {
        self.h[copy.0 as usize][copy.1 as usize] as i64
    }

    pub fn v_sign(&self, copy: (u8, u8)) -> i64 {
        self.v[copy.0 as usize][copy.1 as usize] as i64
    }
}

/// Build the four-copy origami, its deck group and the winding signs.
pub fn build_origami(
    table: &WindTreeTable,
) -> Result<(Origami, DeckGroup, WindingSignTable), SurfaceError> {
    let d = table.denominator;
    let free = table.free_cells();
    let f = free.len();
    let n = 4 * f;
    let mut cell_id = vec![u32::MAX; (d * d) as usize];
    for (id, &(x, y)) in free.iter().enumerate() {
        cell_id[(y * d + x) as usize] = id as u32;
    }
    let sq = |cell: (u32, u32), i: u8, j: u8| -> u32 {
        let c = cell_id[(cell.1 * d + cell.0) as usize];
        debug_assert_ne!(c, u32::MAX);
        ((i as u32) * 2 + (j as u32)) * f as u32 + c
    };

    let mut squares = Vec::with_capacity(n);
    let mut right = vec![0u32; n];
    let mut up = vec![0u32; n];
    let mut right_kind = vec![EdgeKind::Interior; n];
    let mut up_kind = vec![EdgeKind::Interior; n];
    let mut tau_v = vec![0u32; n];
    let mut tau_h = vec![0u32; n];
    let mut iota = vec![0u32; n];

    // Index layout: square id = (2i + j) * f + cell id.
    for k in 0..4u32 {
        let (i, j) = ((k / 2) as u8, (k % 2) as u8);
        for &(x, y) in &free {
            squares.push(SquareMeta { cell: (x as u16, y as u16), copy: (i, j) });
        }
    }

    for i in 0..2u8 {
        for j in 0..2u8 {
            for &(x, y) in &free {
                let s = sq((x, y), i, j) as usize;
                // right neighbor
                let nx = x + 1;
                if nx == d {
                    right[s] = sq((0, y), i, j);
                    right_kind[s] = EdgeKind::CellWrap;
                } else if table.is_obstacle(nx as i64, y as i64) {
                    right[s] = sq((d - 1 - x, y), i ^ 1, j);
                    right_kind[s] = EdgeKind::Wall;
                } else {
                    right[s] = sq((nx, y), i, j);
                }
                // up neighbor
                let ny = y + 1;
                if ny == d {
                    up[s] = sq((x, 0), i, j);
                    up_kind[s] = EdgeKind::CellWrap;
                } else if table.is_obstacle(x as i64, ny as i64) {
                    up[s] = sq((x, d - 1 - y), i, j ^ 1);
                    up_kind[s] = EdgeKind::Wall;
                } else {
                    up[s] = sq((x, ny), i, j);
                }
                tau_v[s] = sq((x, y), i ^ 1, j);
                tau_h[s] = sq((x, y), i, j ^ 1);
                iota[s] = sq((d - 1 - x, d - 1 - y), i, j);
            }
        }
    }

    let right_inv = invert(&right)?;
    let up_inv = invert(&up)?;
    let mut origami = Origami {
        n,
        d,
        right,
        up,
        right_inv,
        up_inv,
        squares,
        right_kind,
        up_kind,
        singular_ll: Vec::new(),
    };
    origami.singular_ll = origami.compute_singular_ll();

    if !origami.is_connected() {
        return Err(SurfaceError::Construction {
            reason: "surface is disconnected (square permutations not transitive)".into(),
        });
    }
    // Stratum check: exactly 4m three-cycles and fixed points otherwise.
    let m = table.m() as usize;
    let profile = singularity_profile(&origami);
    let threes = profile.iter().filter(|&&l| l == 3).count();
    let ones = profile.iter().filter(|&&l| l == 1).count();
    if threes != 4 * m || ones + 3 * threes != n {
        return Err(SurfaceError::Construction {
            reason: format!(
                "stratum check failed: cycle type {:?} (expected {} three-cycles on {} squares)",
                compress_profile(&profile),
                4 * m,
                n
            ),
        });
    }

    let deck = DeckGroup { tau_h, tau_v, iota };
    validate_deck(&origami, &deck)?;
    Ok((origami, deck, WindingSignTable::standard()))
}

fn compress_profile(profile: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &l in profile {
        match out.last_mut() {
            Some((len, count)) if *len == l => *count += 1,
            _ => out.push((l, 1)),
        }
    }
    out
}

fn validate_deck(origami: &Origami, deck: &DeckGroup) -> Result<(), SurfaceError> {
    let n = origami.n;
    let check = |name: &str, p: &[u32], free_action: bool| -> Result<(), SurfaceError> {
        for s in 0..n {
            if p[p[s] as usize] as usize != s {
                return Err(SurfaceError::Construction { reason: format!("{name} is not an involution") });
            }
            if free_action && p[s] as usize == s {
                return Err(SurfaceError::Construction { reason: format!("{name} fixes a square") });
            }
        }
        Ok(())
    };
    check("tau_h", &deck.tau_h, true)?;
    check("tau_v", &deck.tau_v, true)?;
    check("iota", &deck.iota, false)?;
    // Translations commute with the square adjacencies.
    for s in 0..n {
        for p in [&deck.tau_h, &deck.tau_v] {
            if p[origami.right[s] as usize] != origami.right[p[s] as usize]
                || p[origami.up[s] as usize] != origami.up[p[s] as usize]
            {
                return Err(SurfaceError::Construction {
                    reason: "deck translation does not commute with gluings".into(),
                });
            }
        }
        // iota conjugates right/up to their inverses.
        let i = &deck.iota;
        if i[origami.right[s] as usize] != origami.right_inv[i[s] as usize]
            || i[origami.up[s] as usize] != origami.up_inv[i[s] as usize]
        {
            return Err(SurfaceError::Construction {
                reason: "iota does not reverse gluings".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactmath::rat;

    fn m1_table() -> WindTreeTable {
        WindTreeTable::square(1, 1, 2).unwrap() // a = b = 1/2, D = 4
    }

    #[test]
    fn parse_and_validate_m1() {
        let text = "# obstacle\ndenominator 4\nvertex 1 1\nvertex 3 1\nvertex 3 3\nvertex 1 3\n";
        let t = parse_table(text).unwrap();
        assert_eq!(t.m(), 1);
        assert_eq!(t.area(), rat(3, 4));
        assert_eq!(t, m1_table());
    }

    #[test]
    fn parse_generator_lines() {
        let t = parse_table("square 1/2 1/2\n").unwrap();
        assert_eq!(t, m1_table());
        let t = parse_table("plus\n").unwrap();
        assert_eq!(t.m(), 2);
    }

    #[test]
    fn plus_table_shape() {
        let t = WindTreeTable::plus();
        assert_eq!(t.m(), 2);
        assert_eq!(t.obstacle_cells(), 5);
        assert_eq!(t.area(), rat(20, 25));
    }

    #[test]
    fn boundary_touching_rejected() {
        let err = WindTreeTable::from_vertices(4, vec![(0, 1), (3, 1), (3, 3), (0, 3)]).unwrap_err();
        assert!(matches!(err, SurfaceError::Validation { ref reason } if reason.contains("interior")));
    }

    #[test]
    fn asymmetric_rejected() {
        let err =
            WindTreeTable::from_vertices(5, vec![(1, 1), (3, 1), (3, 3), (1, 3)]).unwrap_err();
        assert!(matches!(err, SurfaceError::Validation { ref reason } if reason.contains("symmetric")));
    }

    #[test]
    fn clockwise_rejected() {
        let err = WindTreeTable::from_vertices(4, vec![(1, 1), (1, 3), (3, 3), (3, 1)]).unwrap_err();
        assert!(matches!(err, SurfaceError::Validation { ref reason } if reason.contains("counterclockwise")));
    }

    #[test]
    fn m1_origami_stratum() {
        let (o, _, _) = build_origami(&m1_table()).unwrap();
        assert_eq!(o.n, 48);
        let profile = singularity_profile(&o);
        let threes = profile.iter().filter(|&&l| l == 3).count();
        let ones = profile.iter().filter(|&&l| l == 1).count();
        assert_eq!((threes, ones), (4, 36));
        assert_eq!(o.genus(), 5);
    }

    #[test]
    fn plus_origami_stratum() {
        let (o, _, _) = build_origami(&WindTreeTable::plus()).unwrap();
        assert_eq!(o.n, 80);
        let profile = singularity_profile(&o);
        let threes = profile.iter().filter(|&&l| l == 3).count();
        assert_eq!(threes, 8);
        assert_eq!(o.genus(), 9);
    }

    #[test]
    fn area_matches_square_count() {
        for table in [m1_table(), WindTreeTable::plus()] {
            let (o, _, _) = build_origami(&table).unwrap();
            let d2 = (table.denominator * table.denominator) as i64;
            // n/4 free cells out of D^2
            assert_eq!(o.n as i64 / 4 + table.obstacle_cells() as i64, d2);
            assert_eq!(table.area(), rat(o.n as i64 / 4, d2));
        }
    }

    #[test]
    fn torus_profile() {
        let o = Origami::from_permutations(vec![0], vec![0]).unwrap();
        assert_eq!(singularity_profile(&o), vec![1]);
        assert_eq!(o.genus(), 1);
    }

    #[test]
    fn deck_relations() {
        let (o, deck, _) = build_origami(&m1_table()).unwrap();
        for s in 0..o.n as u32 {
            let th = DeckElement { tau_h: true, tau_v: false, iota: false };
            let tv = DeckElement { tau_h: false, tau_v: true, iota: false };
            assert_eq!(deck_action(&deck, th, deck_action(&deck, th, s)), s);
            let hv = deck_action(&deck, th, deck_action(&deck, tv, s));
            let vh = deck_action(&deck, tv, deck_action(&deck, th, s));
            assert_eq!(hv, vh);
        }
        // tau-orbits of squares have size 4; the full group doubles that via
        // iota except where iota fixes the square's position pair.
        let s = 0u32;
        let mut orbit: Vec<u32> = DeckElement::all()
            .iter()
            .map(|&g| deck_action(&deck, g, s))
            .collect();
        orbit.sort_unstable();
        orbit.dedup();
        assert_eq!(orbit.len(), 8);
    }

    #[test]
    fn sign_table_balanced() {
        let t = WindingSignTable::standard();
        let hsum: i64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| t.h[i][j] as i64).sum();
        let vsum: i64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| t.v[i][j] as i64).sum();
        assert_eq!((hsum, vsum), (0, 0));
        assert_eq!(t.h[0][0], 1);
        assert_eq!(t.v[0][0], 1);
    }
}
