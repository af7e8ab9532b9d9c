//! The Coxeter–Freudenthal–Kuhn simplicial complex on `ℤⁿ`.
//!
//! A k-simplex is named by a base vertex `v` and an ordered sequence of pairwise
//! disjoint nonempty index sets `(S₁,…,S_k)`; its vertices are
//! `v_i = v + e_{S₁} + … + e_{S_i}`. Top simplices are `(v, σ)` with `σ` a
//! permutation. Indices are 0-based in code.

use crate::complex::{CellComplex, Incidence};
use crate::cubic::CubicCell;
use crate::error::{Error, Result};
use crate::variational::{Covector, FiberPoint, LagrangianDensity};
use std::fmt;

/// A CFK cell `(v, (S₁,…,S_k))`; each set is stored sorted.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CfkCell {
    base: Vec<i64>,
    sets: Vec<Vec<usize>>,
}

impl fmt::Debug for CfkCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {:?})", self.base, self.sets)
    }
}

impl CfkCell {
    /// Validating constructor; sets are sorted internally.
    pub fn new(base: Vec<i64>, sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = base.len();
        let mut seen = vec![false; n];
        let mut sorted = Vec::with_capacity(sets.len());
        for s in sets {
            if s.is_empty() {
                return Err(Error::InvalidCell("empty index set".into()));
            }
            let mut s = s;
            s.sort_unstable();
            for &i in &s {
                if i >= n {
                    return Err(Error::InvalidCell(format!("index {i} out of range for n = {n}")));
                }
                if seen[i] {
                    return Err(Error::InvalidCell(format!("index {i} appears twice")));
                }
                seen[i] = true;
            }
            sorted.push(s);
        }
        Ok(CfkCell { base, sets: sorted })
    }

    /// The vertex `v` as a 0-cell.
    pub fn vertex(coords: &[i64]) -> Self {
        CfkCell {
            base: coords.to_vec(),
            sets: Vec::new(),
        }
    }

    /// Top simplex `(v, σ)`; `perm` lists `σ₁,…,σₙ`.
    pub fn top(base: Vec<i64>, perm: &[usize]) -> Result<Self> {
        if perm.len() != base.len() {
            return Err(Error::InvalidCell("permutation length differs from n".into()));
        }
        CfkCell::new(base, perm.iter().map(|&i| vec![i]).collect())
    }

    pub fn base(&self) -> &[i64] {
        &self.base
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn dim(&self) -> usize {
        self.sets.len()
    }

    pub fn n(&self) -> usize {
        self.base.len()
    }

    /// Coordinates of a 0-cell.
    pub fn coords(&self) -> &[i64] {
        &self.base
    }

    /// Translate by an integer vector.
    pub fn translated(&self, by: &[i64]) -> CfkCell {
        CfkCell {
            base: self.base.iter().zip(by).map(|(a, b)| a + b).collect(),
            sets: self.sets.clone(),
        }
    }

    /// For a top simplex, the permutation `σ`.
    pub fn permutation(&self) -> Option<Vec<usize>> {
        if self.dim() == self.n() && self.sets.iter().all(|s| s.len() == 1) {
            Some(self.sets.iter().map(|s| s[0]).collect())
        } else {
            None
        }
    }

    fn unused(&self) -> Vec<usize> {
        let mut used = vec![false; self.n()];
        for s in &self.sets {
            for &i in s {
                used[i] = true;
            }
        }
        (0..self.n()).filter(|&i| !used[i]).collect()
    }
}

/// Vertices `(v₀,…,v_k)` in increasing weight `∑ xᵢ`.
pub fn cfk_vertices(cell: &CfkCell) -> Vec<Vec<i64>> {
    let mut out = Vec::with_capacity(cell.dim() + 1);
    let mut cur = cell.base.clone();
    out.push(cur.clone());
    for s in &cell.sets {
        for &i in s {
            cur[i] += 1;
        }
        out.push(cur.clone());
    }
    out
}

/// The cell whose open hull contains `p`: the base is the integer part, and the
/// sets group indices of equal nonzero fractional part in decreasing order.
pub fn cfk_locate(p: &[f64]) -> CfkCell {
    cfk_locate_with_weights(p).0
}

/// Like [`cfk_locate`], also returning barycentric weights `(λ₀,…,λ_k)` with
/// `p = ∑ λ_i v_i`.
pub fn cfk_locate_with_weights(p: &[f64]) -> (CfkCell, Vec<f64>) {
    // Coordinates are compared up to a few ulps of their magnitude, so inputs
    // like 4.3 and −1.7 share the fractional part 0.3 as intended.
    let eps: Vec<f64> = p.iter().map(|x| LOCATE_ULPS * f64::EPSILON * x.abs().max(1.0)).collect();
    let base: Vec<i64> = p
        .iter()
        .zip(&eps)
        .map(|(x, e)| {
            let r = x.round();
            if (x - r).abs() <= *e {
                r as i64
            } else {
                x.floor() as i64
            }
        })
        .collect();
    let frac: Vec<f64> = p.iter().zip(&base).map(|(x, b)| x - *b as f64).collect();
    let mut idx: Vec<usize> = (0..p.len()).filter(|&i| frac[i] > eps[i]).collect();
    idx.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut levels: Vec<Vec<f64>> = Vec::new();
    for i in idx {
        match (levels.last_mut(), sets.last()) {
            (Some(l), Some(s)) if (l[0] - frac[i]).abs() <= eps[i].max(eps[s[0]]) => {
                l.push(frac[i]);
                sets.last_mut().unwrap().push(i);
            }
            _ => {
                sets.push(vec![i]);
                levels.push(vec![frac[i]]);
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    let levels: Vec<f64> = levels.iter().map(|l| l.iter().sum::<f64>() / l.len() as f64).collect();
    let mut weights = Vec::with_capacity(levels.len() + 1);
    weights.push(1.0 - levels.first().copied().unwrap_or(0.0));
    for a in 0..levels.len() {
        weights.push(levels[a] - levels.get(a + 1).copied().unwrap_or(0.0));
    }
    (CfkCell { base, sets }, weights)
}

/// Tie tolerance of point location, in units of `ε·max(1, |x|)`.
const LOCATE_ULPS: f64 = 8.0;

/// Exact integer determinant (Bareiss elimination).
fn int_det(mut m: Vec<Vec<i128>>) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[n - 1][n - 1]
}

/// Sign of the conventional orientation form of `cell` evaluated on `vectors`:
/// `dx_{i₁}∧…∧dx_{i_k}` with `i_a` the sorted minima of the cell's sets.
fn orientation_sign(cell: &CfkCell, vectors: &[Vec<i64>]) -> i128 {
    let mut rows: Vec<usize> = cell.sets.iter().map(|s| s[0]).collect();
    rows.sort_unstable();
    let m: Vec<Vec<i128>> = rows
        .iter()
        .map(|&r| vectors.iter().map(|v| v[r] as i128).collect())
        .collect();
    int_det(m).signum()
}

/// `[β:α]` from the orientation convention: nonzero only for `α = β∖{v}`, in
/// which case `[β:α]·vol_α ~ i_{v̄−v} vol_β` for a vertex `v̄` of `α`.
pub fn cfk_incidence(beta: &CfkCell, alpha: &CfkCell) -> Incidence {
    if beta.n() != alpha.n() || beta.dim() != alpha.dim() + 1 {
        return 0;
    }
    let bv = cfk_vertices(beta);
    let av = cfk_vertices(alpha);
    // α's vertices must be β's with exactly one removed, order preserved.
    let mut removed = None;
    let mut j = 0;
    for (i, v) in bv.iter().enumerate() {
        if j < av.len() && *v == av[j] {
            j += 1;
        } else if removed.is_none() {
            removed = Some(i);
        } else {
            return 0;
        }
    }
    let Some(r) = removed else { return 0 };
    let a0 = &av[0];
    let edges: Vec<Vec<i64>> = av[1..]
        .iter()
        .map(|a| a.iter().zip(a0).map(|(x, y)| x - y).collect())
        .collect();
    let mut with_normal = Vec::with_capacity(edges.len() + 1);
    with_normal.push(a0.iter().zip(&bv[r]).map(|(x, y)| x - y).collect());
    with_normal.extend(edges.iter().cloned());
    let s = orientation_sign(beta, &with_normal) * orientation_sign(alpha, &edges);
    s as Incidence
}

/// Codimension-one faces `β∖{v_i}` in order of the removed vertex.
pub fn cfk_faces(cell: &CfkCell) -> Vec<CfkCell> {
    let k = cell.dim();
    let mut out = Vec::with_capacity(k + 1);
    if k == 0 {
        return out;
    }
    // remove v0: base moves to v1
    let mut base = cell.base.clone();
    for &i in &cell.sets[0] {
        base[i] += 1;
    }
    out.push(CfkCell {
        base,
        sets: cell.sets[1..].to_vec(),
    });
    for i in 1..k {
        let mut sets = cell.sets.clone();
        let merged = sets.remove(i);
        sets[i - 1].extend(merged);
        sets[i - 1].sort_unstable();
        out.push(CfkCell {
            base: cell.base.clone(),
            sets,
        });
    }
    out.push(CfkCell {
        base: cell.base.clone(),
        sets: cell.sets[..k - 1].to_vec(),
    });
    out
}

fn nonempty_subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (1..(1usize << items.len()))
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &i)| i)
                .collect()
        })
        .collect()
}

/// Simplices having `cell` as a codimension-one face.
pub fn cfk_cofaces(cell: &CfkCell) -> Vec<CfkCell> {
    let unused = cell.unused();
    let mut out = Vec::new();
    for t in nonempty_subsets(&unused) {
        // new first vertex v0 − e_T
        let mut base = cell.base.clone();
        for &i in &t {
            base[i] -= 1;
        }
        let mut sets = Vec::with_capacity(cell.dim() + 1);
        sets.push(t.clone());
        sets.extend(cell.sets.iter().cloned());
        out.push(CfkCell { base, sets });
        // new last vertex v_k + e_T
        let mut sets = cell.sets.clone();
        sets.push(t);
        out.push(CfkCell {
            base: cell.base.clone(),
            sets,
        });
    }
    // split an existing set into an ordered nonempty pair
    for (a, s) in cell.sets.iter().enumerate() {
        if s.len() < 2 {
            continue;
        }
        for first in nonempty_subsets(s) {
            if first.len() == s.len() {
                continue;
            }
            let second: Vec<usize> = s.iter().copied().filter(|i| !first.contains(i)).collect();
            let mut sets = cell.sets.clone();
            sets[a] = first;
            sets.insert(a + 1, second);
            out.push(CfkCell {
                base: cell.base.clone(),
                sets,
            });
        }
    }
    out
}

/// All ordered sequences of pairwise disjoint nonempty subsets of `{0,…,n−1}`.
pub fn set_sequences(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(avail: &[usize], cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        out.push(cur.clone());
        for s in nonempty_subsets(avail) {
            let rest: Vec<usize> = avail.iter().copied().filter(|i| !s.contains(i)).collect();
            cur.push(s);
            rec(&rest, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(&(0..n).collect::<Vec<_>>(), &mut Vec::new(), &mut out);
    out
}

/// All permutations of `{0,…,n−1}` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(avail: &mut Vec<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if avail.is_empty() {
            out.push(cur.clone());
            return;
        }
        for k in 0..avail.len() {
            let x = avail.remove(k);
            cur.push(x);
            rec(avail, cur, out);
            cur.pop();
            avail.insert(k, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut (0..n).collect(), &mut Vec::new(), &mut out);
    out
}

/// The CFK complex of a fixed dimension.
#[derive(Clone, Copy, Debug)]
pub struct CfkComplex {
    n: usize,
}

impl CfkComplex {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "CFK complex needs n >= 1");
        CfkComplex { n }
    }

    /// All cells with base in `[−extent, extent]ⁿ`.
    pub fn window(&self, extent: i64) -> Vec<CfkCell> {
        let seqs = set_sequences(self.n);
        let mut out = Vec::new();
        for base in integer_box(self.n, -extent, extent) {
            for s in &seqs {
                out.push(CfkCell {
                    base: base.clone(),
                    sets: s.clone(),
                });
            }
        }
        out
    }
}

/// All integer points of `[lo, hi]ⁿ` in lexicographic order.
pub fn integer_box(n: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for x in lo..=hi {
                let mut q = p.clone();
                q.push(x);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Top simplices containing the vertex `v`, sorted.
fn cfk_star(v: &[i64]) -> Vec<CfkCell> {
    let n = v.len();
    let mut out = Vec::new();
    for perm in permutations(n) {
        for pos in 0..=n {
            let mut base = v.to_vec();
            for &i in &perm[..pos] {
                base[i] -= 1;
            }
            out.push(CfkCell {
                base,
                sets: perm.iter().map(|&i| vec![i]).collect(),
            });
        }
    }
    out.sort();
    out
}

impl CellComplex for CfkComplex {
    type Cell = CfkCell;

    fn dimension(&self) -> usize {
        self.n
    }

    fn cell_dim(&self, cell: &CfkCell) -> usize {
        cell.dim()
    }

    fn incidence(&self, upper: &CfkCell, lower: &CfkCell) -> Incidence {
        cfk_incidence(upper, lower)
    }

    fn down_adjacent(&self, cell: &CfkCell) -> Vec<CfkCell> {
        cfk_faces(cell)
    }

    fn up_adjacent(&self, cell: &CfkCell) -> Vec<CfkCell> {
        cfk_cofaces(cell)
    }

    fn adherent_vertices(&self, cell: &CfkCell) -> Vec<CfkCell> {
        cfk_vertices(cell).into_iter().map(|v| CfkCell::vertex(&v)).collect()
    }

    fn star(&self, vertex: &CfkCell) -> Vec<CfkCell> {
        cfk_star(&vertex.base)
    }
}

/// Quotient of the CFK complex by the translation group generated by `period`.
///
/// Cells are canonicalized by translating the base so that
/// `⟨functional, base⟩ ∈ [0, modulus)` where `modulus = ⟨functional, period⟩ > 0`.
/// The period must be long enough that no simplex meets two translates of
/// itself; this is checked at construction for top simplices.
#[derive(Clone, Debug)]
pub struct PeriodicCfkComplex {
    n: usize,
    period: Vec<i64>,
    functional: Vec<i64>,
    modulus: i64,
}

impl PeriodicCfkComplex {
    pub fn new(period: Vec<i64>, functional: Vec<i64>) -> Result<Self> {
        let n = period.len();
        if n == 0 || functional.len() != n {
            return Err(Error::InvalidArgument("period and functional must have equal nonzero length".into()));
        }
        let modulus: i64 = period.iter().zip(&functional).map(|(a, b)| a * b).sum();
        if modulus <= 0 {
            return Err(Error::InvalidArgument("functional must be positive on the period".into()));
        }
        // Two vertices of a common star differ in ⟨functional, ·⟩ by at most this.
        let spread: i64 = 2 * functional.iter().map(|f| f.abs()).sum::<i64>();
        if spread > modulus {
            return Err(Error::InvalidArgument("period too short for a simplicial quotient".into()));
        }
        Ok(PeriodicCfkComplex {
            n,
            period,
            functional,
            modulus,
        })
    }

    /// The 2-D rod topology: identify `(i, j) ~ (i + m, j − m)`, i.e. `i − j mod 2m`.
    pub fn rod(m: usize) -> Result<Self> {
        let m = m as i64;
        PeriodicCfkComplex::new(vec![m, -m], vec![1, -1])
    }

    pub fn canonical(&self, cell: &CfkCell) -> CfkCell {
        let f: i64 = cell.base.iter().zip(&self.functional).map(|(a, b)| a * b).sum();
        let k = f.div_euclid(self.modulus);
        if k == 0 {
            return cell.clone();
        }
        let shift: Vec<i64> = self.period.iter().map(|p| -k * p).collect();
        cell.translated(&shift)
    }

    pub fn canonical_vertex(&self, coords: &[i64]) -> CfkCell {
        self.canonical(&CfkCell::vertex(coords))
    }

    fn canon_all(&self, cells: Vec<CfkCell>) -> Vec<CfkCell> {
        let mut out: Vec<CfkCell> = cells.iter().map(|c| self.canonical(c)).collect();
        out.sort();
        out.dedup();
        out
    }
}

impl CellComplex for PeriodicCfkComplex {
    type Cell = CfkCell;

    fn dimension(&self) -> usize {
        self.n
    }

    fn cell_dim(&self, cell: &CfkCell) -> usize {
        cell.dim()
    }

    fn incidence(&self, upper: &CfkCell, lower: &CfkCell) -> Incidence {
        let up = self.canonical(upper);
        let low = self.canonical(lower);
        for face in cfk_faces(&up) {
            if self.canonical(&face) == low {
                return cfk_incidence(&up, &face);
            }
        }
        0
    }

    fn down_adjacent(&self, cell: &CfkCell) -> Vec<CfkCell> {
        self.canon_all(cfk_faces(&self.canonical(cell)))
    }

    fn up_adjacent(&self, cell: &CfkCell) -> Vec<CfkCell> {
        self.canon_all(cfk_cofaces(&self.canonical(cell)))
    }

    fn adherent_vertices(&self, cell: &CfkCell) -> Vec<CfkCell> {
        cfk_vertices(&self.canonical(cell))
            .into_iter()
            .map(|v| self.canonical_vertex(&v))
            .collect()
    }

    fn star(&self, vertex: &CfkCell) -> Vec<CfkCell> {
        self.canon_all(cfk_star(&self.canonical(vertex).base))
    }
}

/// The hypercube `v + ½(1,…,1)` containing the top simplex `(v, σ)`.
pub fn simplex_to_cube(cell: &CfkCell) -> Result<CubicCell> {
    if cell.permutation().is_none() {
        return Err(Error::InvalidCell(format!("{cell:?} is not a top simplex")));
    }
    Ok(CubicCell::from_doubled(cell.base.iter().map(|b| 2 * b + 1).collect()))
}

/// The `n!` top simplices inside a cubic n-cell.
pub fn cube_to_simplices(cube: &CubicCell) -> Result<Vec<CfkCell>> {
    let d = cube.doubled();
    if d.iter().any(|x| x.rem_euclid(2) != 1) {
        return Err(Error::InvalidCell(format!("{cube:?} is not a top cube")));
    }
    let base: Vec<i64> = d.iter().map(|x| (x - 1) / 2).collect();
    permutations(d.len())
        .into_iter()
        .map(|p| CfkCell::top(base.clone(), &p))
        .collect()
}

/// Pushforward of a CFK Lagrangian density to the cubic complex:
/// `L̄_β̄ = ∑_{i(β)=β̄} L_β ∘ proj_β`.
///
/// Cubic configurations are ordered like
/// [`CubicComplex::adherent_vertices`](crate::cubic::CubicComplex), i.e.
/// lexicographically by vertex coordinates.
pub struct PushedLagrangian<L> {
    inner: L,
}

/// Pushes a CFK Lagrangian forward along the simplex-to-cube map.
pub fn push_lagrangian<L: LagrangianDensity<CfkCell>>(inner: L) -> PushedLagrangian<L> {
    PushedLagrangian { inner }
}

impl<L> PushedLagrangian<L> {
    pub fn inner(&self) -> &L {
        &self.inner
    }
}

/// For each simplex in the cube, the positions of its vertices inside the
/// lexicographically ordered cube vertex list.
fn cube_projections(cube: &CubicCell) -> Result<Vec<(CfkCell, Vec<usize>)>> {
    let n = cube.doubled().len();
    let simplices = cube_to_simplices(cube)?;
    let base: Vec<i64> = cube.doubled().iter().map(|x| (x - 1) / 2).collect();
    Ok(simplices
        .into_iter()
        .map(|s| {
            let idx = cfk_vertices(&s)
                .iter()
                .map(|v| {
                    // lexicographic index of offset bits (first coordinate most significant)
                    (0..n).fold(0usize, |acc, k| acc * 2 + (v[k] - base[k]) as usize)
                })
                .collect();
            (s, idx)
        })
        .collect())
}

impl<L: LagrangianDensity<CfkCell>> LagrangianDensity<CubicCell> for PushedLagrangian<L> {
    fn eval(&self, cell: &CubicCell, configs: &[FiberPoint]) -> Result<f64> {
        let mut total = 0.0;
        for (s, idx) in cube_projections(cell)? {
            let proj: Vec<FiberPoint> = idx.iter().map(|&i| configs[i].clone()).collect();
            total += self.inner.eval(&s, &proj)?;
        }
        Ok(total)
    }

    fn diff(&self, cell: &CubicCell, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        let mut out: Vec<Covector> = configs.iter().map(|c| vec![0.0; c.tangent_dim()]).collect();
        for (s, idx) in cube_projections(cell)? {
            let proj: Vec<FiberPoint> = idx.iter().map(|&i| configs[i].clone()).collect();
            let d = self.inner.diff(&s, &proj)?;
            for (k, &i) in idx.iter().enumerate() {
                for (o, x) in out[i].iter_mut().zip(&d[k]) {
                    *o += x;
                }
            }
        }
        Ok(out)
    }
}
