//! The n-dimensional cubic cellular complex on `(½ℤ)ⁿ`.
//!
//! Cells are stored with doubled coordinates, so half-integers become odd
//! integers and the dimension of a cell is its number of odd entries.

use crate::complex::{CellComplex, Incidence};
use std::fmt;

/// A cell of the cubic complex, identified by `2α ∈ ℤⁿ`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CubicCell {
    doubled: Vec<i64>,
}

impl CubicCell {
    pub fn from_doubled(doubled: Vec<i64>) -> Self {
        CubicCell { doubled }
    }

    /// The vertex with the given integer coordinates.
    pub fn vertex(coords: &[i64]) -> Self {
        CubicCell {
            doubled: coords.iter().map(|c| 2 * c).collect(),
        }
    }

    /// The cell at half-integer coordinates `α` (entries must be multiples of ½).
    pub fn from_coords(alpha: &[f64]) -> Self {
        CubicCell {
            doubled: alpha.iter().map(|a| (2.0 * a).round() as i64).collect(),
        }
    }

    pub fn doubled(&self) -> &[i64] {
        &self.doubled
    }

    pub fn coords(&self) -> Vec<f64> {
        self.doubled.iter().map(|&d| d as f64 / 2.0).collect()
    }

    pub fn dim(&self) -> usize {
        self.doubled.iter().filter(|d| d.rem_euclid(2) == 1).count()
    }

    /// Integer coordinates of a vertex; `None` for higher cells.
    pub fn vertex_coords(&self) -> Option<Vec<i64>> {
        if self.dim() != 0 {
            return None;
        }
        Some(self.doubled.iter().map(|d| d / 2).collect())
    }

    fn half_positions(&self) -> Vec<usize> {
        (0..self.doubled.len())
            .filter(|&i| self.doubled[i].rem_euclid(2) == 1)
            .collect()
    }
}

impl fmt::Debug for CubicCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .doubled
            .iter()
            .map(|&d| if d % 2 == 0 { format!("{}", d / 2) } else { format!("{}/2", d) })
            .collect();
        write!(f, "({})", parts.join(","))
    }
}

/// The cubic complex of a fixed dimension.
#[derive(Clone, Copy, Debug)]
pub struct CubicComplex {
    n: usize,
}

impl CubicComplex {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "cubic complex needs n >= 1");
        CubicComplex { n }
    }

    /// All cells whose coordinates lie in `[−extent, extent]ⁿ`.
    pub fn window(&self, extent: i64) -> Vec<CubicCell> {
        let lo = -2 * extent;
        let hi = 2 * extent;
        let mut out = Vec::new();
        let mut cur = vec![lo; self.n];
        loop {
            out.push(CubicCell::from_doubled(cur.clone()));
            let mut k = 0;
            loop {
                if k == self.n {
                    return out;
                }
                cur[k] += 1;
                if cur[k] <= hi {
                    break;
                }
                cur[k] = lo;
                k += 1;
            }
        }
    }
}

/// `[β:α]`: nonzero only when `α = β ± ½e_i` at a half-integer position `i` of `β`,
/// in which case it equals `(−1)^{j−1}·s` where `j` is the rank of `i` among the
/// half-integer positions of `β` and `s = ±1` the direction.
pub fn cubic_incidence(beta: &CubicCell, alpha: &CubicCell) -> Incidence {
    if beta.doubled.len() != alpha.doubled.len() {
        return 0;
    }
    let mut pos = None;
    for (i, (b, a)) in beta.doubled.iter().zip(&alpha.doubled).enumerate() {
        match a - b {
            0 => {}
            1 | -1 if pos.is_none() => pos = Some(i),
            _ => return 0,
        }
    }
    let Some(i) = pos else { return 0 };
    if beta.doubled[i].rem_euclid(2) != 1 {
        return 0;
    }
    let j = beta.doubled[..i].iter().filter(|d| d.rem_euclid(2) == 1).count();
    let s = (alpha.doubled[i] - beta.doubled[i]) as Incidence;
    if j % 2 == 0 {
        s
    } else {
        -s
    }
}

/// The unique cell whose open hull contains `p`.
pub fn cubic_locate(p: &[f64]) -> CubicCell {
    CubicCell {
        doubled: p
            .iter()
            .map(|&x| {
                let f = x.floor();
                if f == x {
                    2 * f as i64
                } else {
                    2 * f as i64 + 1
                }
            })
            .collect(),
    }
}

/// The `3ⁿ` vertices adherent to the sphere of `v`.
pub fn cubic_sphere_vertices(v: &[i64]) -> Vec<CubicCell> {
    let n = v.len();
    let mut out = Vec::with_capacity(3usize.pow(n as u32));
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let coords: Vec<i64> = v
            .iter()
            .map(|&x| {
                let e = (c % 3) as i64 - 1;
                c /= 3;
                x + e
            })
            .collect();
        out.push(CubicCell::vertex(&coords));
    }
    out.sort();
    out
}

impl CellComplex for CubicComplex {
    type Cell = CubicCell;

    fn dimension(&self) -> usize {
        self.n
    }

    fn cell_dim(&self, cell: &CubicCell) -> usize {
        cell.dim()
    }

    fn incidence(&self, upper: &CubicCell, lower: &CubicCell) -> Incidence {
        cubic_incidence(upper, lower)
    }

    fn down_adjacent(&self, cell: &CubicCell) -> Vec<CubicCell> {
        let mut out = Vec::new();
        for i in cell.half_positions() {
            for s in [-1, 1] {
                let mut d = cell.doubled.clone();
                d[i] += s;
                out.push(CubicCell { doubled: d });
            }
        }
        out
    }

    fn up_adjacent(&self, cell: &CubicCell) -> Vec<CubicCell> {
        let mut out = Vec::new();
        for i in 0..self.n {
            if cell.doubled[i].rem_euclid(2) == 0 {
                for s in [-1, 1] {
                    let mut d = cell.doubled.clone();
                    d[i] += s;
                    out.push(CubicCell { doubled: d });
                }
            }
        }
        out
    }

    /// Vertices in lexicographic order of their coordinates.
    fn adherent_vertices(&self, cell: &CubicCell) -> Vec<CubicCell> {
        let half = cell.half_positions();
        let mut out = Vec::with_capacity(1 << half.len());
        for mask in 0..(1usize << half.len()) {
            let mut d = cell.doubled.clone();
            for (b, &i) in half.iter().enumerate() {
                d[i] += if mask >> b & 1 == 1 { 1 } else { -1 };
            }
            out.push(CubicCell { doubled: d });
        }
        out.sort();
        out
    }

    fn star(&self, vertex: &CubicCell) -> Vec<CubicCell> {
        let mut out = Vec::with_capacity(1 << self.n);
        for mask in 0..(1usize << self.n) {
            let d = vertex
                .doubled
                .iter()
                .enumerate()
                .map(|(i, &x)| x + if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            out.push(CubicCell { doubled: d });
        }
        out.sort();
        out
    }
}
