//! Discrete bundles, Lagrangian densities and the variational machinery built on
//! them: action, Euler–Lagrange forms, Noether currents, the Legendre/momentum
//! split along an incremental flow, and the band-advancing integrator.
//!
//! Tangent and cotangent vectors are plain real vectors: Euclidean factors use
//! their coordinates, rotation factors use the body-frame identification of
//! [`crate::so3`] (variation `R·exp(ε ê)` ↔ `e ∈ ℝ³`), and covectors are paired
//! with tangent vectors by the Euclidean dot product.

use crate::complex::{classify_vertices, region_vertices, CellComplex, Region};
use crate::error::{Error, Result};
use crate::so3::Rotation;
use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// A cotangent vector in flattened coordinates.
pub type Covector = Vec<f64>;

/// A tangent vector in flattened coordinates.
pub type Tangent = Vec<f64>;

/// One factor of a fiber.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Euclidean(usize),
    Rotation,
}

impl FactorKind {
    pub fn tangent_dim(&self) -> usize {
        match self {
            FactorKind::Euclidean(m) => *m,
            FactorKind::Rotation => 3,
        }
    }
}

/// Shape of every fiber of a bundle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiberDescriptor {
    pub factors: Vec<FactorKind>,
}

impl FiberDescriptor {
    pub fn new(factors: Vec<FactorKind>) -> Self {
        FiberDescriptor { factors }
    }

    /// `ℝ³ × SO(3)`, the rod configuration space.
    pub fn rod() -> Self {
        FiberDescriptor::new(vec![FactorKind::Euclidean(3), FactorKind::Rotation])
    }

    pub fn tangent_dim(&self) -> usize {
        self.factors.iter().map(|f| f.tangent_dim()).sum()
    }
}

/// Value of one fiber factor.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorValue {
    Euclidean(Vec<f64>),
    Rotation(Rotation),
}

impl FactorValue {
    pub fn kind(&self) -> FactorKind {
        match self {
            FactorValue::Euclidean(x) => FactorKind::Euclidean(x.len()),
            FactorValue::Rotation(_) => FactorKind::Rotation,
        }
    }
}

/// A point of a fiber: one value per factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberPoint {
    pub factors: Vec<FactorValue>,
}

impl FiberPoint {
    pub fn new(factors: Vec<FactorValue>) -> Self {
        FiberPoint { factors }
    }

    /// A point of `ℝᵐ`.
    pub fn euclidean(x: Vec<f64>) -> Self {
        FiberPoint::new(vec![FactorValue::Euclidean(x)])
    }

    /// A rod configuration `(r, R) ∈ ℝ³ × SO(3)`.
    pub fn rod(r: Vector3<f64>, rot: Rotation) -> Self {
        FiberPoint::new(vec![
            FactorValue::Euclidean(vec![r.x, r.y, r.z]),
            FactorValue::Rotation(rot),
        ])
    }

    pub fn descriptor(&self) -> FiberDescriptor {
        FiberDescriptor::new(self.factors.iter().map(|f| f.kind()).collect())
    }

    pub fn tangent_dim(&self) -> usize {
        self.factors.iter().map(|f| f.kind().tangent_dim()).sum()
    }

    pub fn matches(&self, d: &FiberDescriptor) -> bool {
        self.factors.len() == d.factors.len()
            && self.factors.iter().zip(&d.factors).all(|(v, k)| v.kind() == *k)
    }

    /// Euclidean factor `k`.
    pub fn euclidean_factor(&self, k: usize) -> Option<&[f64]> {
        match self.factors.get(k) {
            Some(FactorValue::Euclidean(x)) => Some(x),
            _ => None,
        }
    }

    /// Rotation factor `k`.
    pub fn rotation_factor(&self, k: usize) -> Option<&Rotation> {
        match self.factors.get(k) {
            Some(FactorValue::Rotation(r)) => Some(r),
            _ => None,
        }
    }

    /// `(r, R)` for a rod configuration.
    pub fn rod_parts(&self) -> Result<(Vector3<f64>, Rotation)> {
        match (&self.factors[..], self.factors.len()) {
            ([FactorValue::Euclidean(x), FactorValue::Rotation(r)], 2) if x.len() == 3 => {
                Ok((Vector3::new(x[0], x[1], x[2]), *r))
            }
            _ => Err(Error::FiberMismatch("expected an R^3 x SO(3) configuration".into())),
        }
    }

    /// Moves along `delta`: `x + δ` on Euclidean factors, `R·exp(δ̂)` on rotations.
    pub fn retract(&self, delta: &[f64]) -> FiberPoint {
        let mut off = 0;
        let factors = self
            .factors
            .iter()
            .map(|f| match f {
                FactorValue::Euclidean(x) => {
                    let y = x.iter().zip(&delta[off..off + x.len()]).map(|(a, b)| a + b).collect();
                    off += x.len();
                    FactorValue::Euclidean(y)
                }
                FactorValue::Rotation(r) => {
                    let e = Vector3::new(delta[off], delta[off + 1], delta[off + 2]);
                    off += 3;
                    FactorValue::Rotation(r.retract(&e))
                }
            })
            .collect();
        FiberPoint { factors }
    }

    /// Re-orthonormalizes rotation factors whose defect exceeds `threshold`.
    pub fn reorthonormalized(&self, threshold: f64) -> FiberPoint {
        FiberPoint {
            factors: self
                .factors
                .iter()
                .map(|f| match f {
                    FactorValue::Rotation(r) => FactorValue::Rotation(r.reorthonormalized(threshold)),
                    other => other.clone(),
                })
                .collect(),
        }
    }
}

/// Euclidean pairing of a covector with a tangent vector.
pub fn pairing(w: &[f64], t: &[f64]) -> f64 {
    w.iter().zip(t).map(|(a, b)| a * b).sum()
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A discrete field: configurations on a finite set of vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField<V: Ord> {
    pub values: BTreeMap<V, FiberPoint>,
}

impl<V: Ord + Clone + std::fmt::Debug> DiscreteField<V> {
    pub fn new() -> Self {
        DiscreteField {
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, v: &V) -> Result<&FiberPoint> {
        self.values
            .get(v)
            .ok_or_else(|| Error::MissingVertex(format!("{v:?}")))
    }

    pub fn insert(&mut self, v: V, y: FiberPoint) {
        self.values.insert(v, y);
    }

    pub fn contains(&self, v: &V) -> bool {
        self.values.contains_key(v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<V: Ord + Clone + std::fmt::Debug> Default for DiscreteField<V> {
    fn default() -> Self {
        Self::new()
    }
}

/// A discrete Lagrangian density: a real function on each n-cell of the
/// configurations at its adherent vertices (in the complex's vertex order),
/// together with its differential (one covector per adherent vertex).
pub trait LagrangianDensity<C>: Sync {
    fn eval(&self, cell: &C, configs: &[FiberPoint]) -> Result<f64>;

    /// Differential; defaults to central finite differences of [`eval`](Self::eval).
    fn diff(&self, cell: &C, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        finite_difference_diff(self, cell, configs, 1e-6)
    }
}

impl<C, L: LagrangianDensity<C> + ?Sized + Send> LagrangianDensity<C> for Box<L> {
    fn eval(&self, cell: &C, configs: &[FiberPoint]) -> Result<f64> {
        (**self).eval(cell, configs)
    }
    fn diff(&self, cell: &C, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        (**self).diff(cell, configs)
    }
}

impl<C, L: LagrangianDensity<C> + ?Sized> LagrangianDensity<C> for &L {
    fn eval(&self, cell: &C, configs: &[FiberPoint]) -> Result<f64> {
        (**self).eval(cell, configs)
    }
    fn diff(&self, cell: &C, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        (**self).diff(cell, configs)
    }
}

/// Central finite differences of `L_β` in every tangent direction of every slot,
/// using the retraction of [`FiberPoint::retract`].
pub fn finite_difference_diff<C, L: LagrangianDensity<C> + ?Sized>(
    l: &L,
    cell: &C,
    configs: &[FiberPoint],
    h: f64,
) -> Result<Vec<Covector>> {
    let mut out = Vec::with_capacity(configs.len());
    let mut work = configs.to_vec();
    for slot in 0..configs.len() {
        let d = configs[slot].tangent_dim();
        let mut w = vec![0.0; d];
        for k in 0..d {
            let mut delta = vec![0.0; d];
            delta[k] = h;
            work[slot] = configs[slot].retract(&delta);
            let plus = l.eval(cell, &work)?;
            delta[k] = -h;
            work[slot] = configs[slot].retract(&delta);
            let minus = l.eval(cell, &work)?;
            w[k] = (plus - minus) / (2.0 * h);
        }
        work[slot] = configs[slot].clone();
        out.push(w);
    }
    Ok(out)
}

/// Lagrangian defined by a closure (no analytic differential).
pub struct FnLagrangian<F>(pub F);

impl<C, F> LagrangianDensity<C> for FnLagrangian<F>
where
    F: Fn(&C, &[FiberPoint]) -> f64 + Sync,
{
    fn eval(&self, cell: &C, configs: &[FiberPoint]) -> Result<f64> {
        Ok((self.0)(cell, configs))
    }
}

/// The identically zero Lagrangian.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroLagrangian;

impl<C> LagrangianDensity<C> for ZeroLagrangian {
    fn eval(&self, _: &C, _: &[FiberPoint]) -> Result<f64> {
        Ok(0.0)
    }
    fn diff(&self, _: &C, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        Ok(configs.iter().map(|c| vec![0.0; c.tangent_dim()]).collect())
    }
}

/// `L_β = ½ ∑_{u<w} ‖y_u − y_w‖²` over pairs of adherent vertices (Euclidean fibers).
#[derive(Clone, Copy, Debug, Default)]
pub struct PairwiseQuadratic;

impl<C> LagrangianDensity<C> for PairwiseQuadratic {
    fn eval(&self, _: &C, configs: &[FiberPoint]) -> Result<f64> {
        let ys = euclidean_values(configs)?;
        let mut s = 0.0;
        for a in 0..ys.len() {
            for b in a + 1..ys.len() {
                s += 0.5 * ys[a].iter().zip(ys[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
        }
        Ok(s)
    }

    fn diff(&self, _: &C, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        let ys = euclidean_values(configs)?;
        Ok((0..ys.len())
            .map(|a| {
                (0..ys[a].len())
                    .map(|k| (0..ys.len()).map(|b| ys[a][k] - ys[b][k]).sum())
                    .collect()
            })
            .collect())
    }
}

fn euclidean_values(configs: &[FiberPoint]) -> Result<Vec<&[f64]>> {
    configs
        .iter()
        .map(|c| match &c.factors[..] {
            [FactorValue::Euclidean(x)] => Ok(&x[..]),
            _ => Err(Error::FiberMismatch("expected a single Euclidean factor".into())),
        })
        .collect()
}

/// Configurations at the adherent vertices of `cell`, in complex order.
pub fn gather<X: CellComplex>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    cell: &X::Cell,
) -> Result<(Vec<X::Cell>, Vec<FiberPoint>)> {
    let verts = cx.adherent_vertices(cell);
    let configs = verts
        .iter()
        .map(|v| y.get(v).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok((verts, configs))
}

/// The v-component `(d_{y_β}L_β)∘i_{y_v}` of a cell differential.
fn vertex_component<X: CellComplex, L: LagrangianDensity<X::Cell> + ?Sized>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    cell: &X::Cell,
    v: &X::Cell,
    l: &L,
) -> Result<Covector> {
    let (verts, configs) = gather(cx, y, cell)?;
    let pos = verts
        .iter()
        .position(|u| u == v)
        .ok_or_else(|| Error::InvalidArgument(format!("{v:?} is not adherent to {cell:?}")))?;
    let mut d = l.diff(cell, &configs)?;
    Ok(d.swap_remove(pos))
}

fn add_into(acc: &mut Covector, w: &[f64]) {
    if acc.is_empty() {
        acc.extend_from_slice(w);
    } else {
        for (a, b) in acc.iter_mut().zip(w) {
            *a += b;
        }
    }
}

/// Action `∑_{β∈A} L_β(y_β)`.
pub fn action<X: CellComplex, L: LagrangianDensity<X::Cell> + ?Sized>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    region: &Region<X::Cell>,
    l: &L,
) -> Result<f64> {
    let mut s = 0.0;
    for beta in region {
        let (_, configs) = gather(cx, y, beta)?;
        s += l.eval(beta, &configs)?;
    }
    Ok(s)
}

fn zero_covector<X: CellComplex>(y: &DiscreteField<X::Cell>, v: &X::Cell) -> Result<Covector> {
    Ok(vec![0.0; y.get(v)?.tangent_dim()])
}

/// Euler–Lagrange form `EL_v(y) = ∑_{β∈S_v} (d_{y_β}L_β)∘i_{y_v}`.
pub fn el_form<X: CellComplex, L: LagrangianDensity<X::Cell> + ?Sized>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    v: &X::Cell,
    l: &L,
) -> Result<Covector> {
    let mut acc = zero_covector::<X>(y, v)?;
    for beta in cx.star(v) {
        add_into(&mut acc, &vertex_component(cx, y, &beta, v, l)?);
    }
    Ok(acc)
}

/// True iff `(d_{y_β}L_β)(D_{y_β}) = 0` within `1e−9·(1+‖dL‖)` on every sample.
/// `d` maps a fiber point to a tangent vector there.
pub fn check_symmetry<C, L, D>(d: D, l: &L, samples: &[(C, Vec<FiberPoint>)]) -> bool
where
    L: LagrangianDensity<C> + ?Sized,
    D: Fn(&FiberPoint) -> Tangent,
{
    samples.iter().all(|(cell, configs)| {
        let Ok(dl) = l.diff(cell, configs) else {
            return false;
        };
        let mut value = 0.0;
        let mut scale = 0.0;
        for (w, y) in dl.iter().zip(configs) {
            value += pairing(w, &d(y));
            scale += norm(w).powi(2);
        }
        value.abs() <= 1e-9 * (1.0 + scale.sqrt())
    })
}

/// Terms of the discrete Noether identity on a region `A`:
/// `boundary + interior_el = defect`, where
/// * `boundary = ∑_{v∈Fr A, v≺β∈A} (d_{y_β}L_β)(i D_{y_v})` (the Noether current),
/// * `interior_el = ∑_{v∈Int A} EL_v(y)(D_{y_v})`,
/// * `defect = ∑_{β∈A} (d_{y_β}L_β)(D_{y_β})`, zero when `D` is a symmetry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoetherBalance {
    pub boundary: f64,
    pub interior_el: f64,
    pub defect: f64,
}

/// Evaluates all three sums of [`NoetherBalance`] in one pass over `A`.
pub fn noether_balance<X, L, D>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    d: D,
    region: &Region<X::Cell>,
    l: &L,
) -> Result<NoetherBalance>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
    D: Fn(&FiberPoint) -> Tangent,
{
    let verts = region_vertices(cx, region);
    let cl = classify_vertices(cx, region, &verts);
    let mut out = NoetherBalance {
        boundary: 0.0,
        interior_el: 0.0,
        defect: 0.0,
    };
    let mut dcache: BTreeMap<&X::Cell, Tangent> = BTreeMap::new();
    for v in &verts {
        dcache.insert(v, d(y.get(v)?));
    }
    for beta in region {
        let (vs, configs) = gather(cx, y, beta)?;
        let dl = l.diff(beta, &configs)?;
        for (v, w) in vs.iter().zip(&dl) {
            let p = pairing(w, &dcache[v]);
            out.defect += p;
            if cl.frontier.contains(v) {
                out.boundary += p;
            } else {
                out.interior_el += p;
            }
        }
    }
    Ok(out)
}

/// [`noether_balance`] for several generators at once, differentiating every
/// cell only once.
pub fn noether_balances<X, L>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    generators: &[&(dyn Fn(&FiberPoint) -> Tangent + Sync)],
    region: &Region<X::Cell>,
    l: &L,
) -> Result<Vec<NoetherBalance>>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
{
    let verts = region_vertices(cx, region);
    let cl = classify_vertices(cx, region, &verts);
    let mut out = vec![
        NoetherBalance {
            boundary: 0.0,
            interior_el: 0.0,
            defect: 0.0,
        };
        generators.len()
    ];
    let mut dcache: BTreeMap<&X::Cell, Vec<Tangent>> = BTreeMap::new();
    for v in &verts {
        let yv = y.get(v)?;
        dcache.insert(v, generators.iter().map(|d| d(yv)).collect());
    }
    for beta in region {
        let (vs, configs) = gather(cx, y, beta)?;
        let dl = l.diff(beta, &configs)?;
        for (v, w) in vs.iter().zip(&dl) {
            let frontier = cl.frontier.contains(v);
            for (bal, t) in out.iter_mut().zip(&dcache[v]) {
                let p = pairing(w, t);
                bal.defect += p;
                if frontier {
                    bal.boundary += p;
                } else {
                    bal.interior_el += p;
                }
            }
        }
    }
    Ok(out)
}

/// Noether current: the frontier sum `∑_{(v∈Fr A)≺(β∈A)} (d_{y_β}L_β)(i D_{y_v})`.
pub fn noether_current<X, L, D>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    d: D,
    region: &Region<X::Cell>,
    l: &L,
) -> Result<f64>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
    D: Fn(&FiberPoint) -> Tangent,
{
    Ok(noether_balance(cx, y, d, region, l)?.boundary)
}

/// A first-order incremental flow `v ↦ Δ_v`.
pub trait IncrementalFlow<C>: Sync {
    fn step(&self, v: &C) -> C;
}

impl<C, F: Fn(&C) -> C + Sync> IncrementalFlow<C> for F {
    fn step(&self, v: &C) -> C {
        self(v)
    }
}

/// Momentum or Legendre value at a vertex together with its context.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumValue<C: Ord> {
    pub vertex: C,
    pub covector: Covector,
    /// Configurations on `S̄^Δ_v ∖ {Δ_v}`.
    pub context: BTreeMap<C, FiberPoint>,
}

/// `S^Δ_v`: cells of the sphere of `v` that also contain `Δ_v`.
pub fn flow_cells<X: CellComplex>(cx: &X, v: &X::Cell, target: &X::Cell) -> Vec<X::Cell> {
    cx.star(v)
        .into_iter()
        .filter(|b| cx.adherent_vertices(b).contains(target))
        .collect()
}

fn context_of<X: CellComplex>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    cells: &[X::Cell],
    target: &X::Cell,
) -> Result<BTreeMap<X::Cell, FiberPoint>> {
    let mut ctx = BTreeMap::new();
    for b in cells {
        for u in cx.adherent_vertices(b) {
            if &u != target && !ctx.contains_key(&u) {
                let yu = y.get(&u)?.clone();
                ctx.insert(u, yu);
            }
        }
    }
    Ok(ctx)
}

/// Momentum `−∑_{β∈S_v∖S^Δ_v} (d_{y_β}L_β)∘i_{y_v}`; needs `y` on `S̄_v ∖ {Δ_v}`.
pub fn momentum<X, L, F>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    v: &X::Cell,
    flow: &F,
    l: &L,
) -> Result<MomentumValue<X::Cell>>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
    F: IncrementalFlow<X::Cell> + ?Sized,
{
    let target = flow.step(v);
    let flow_set: BTreeSet<X::Cell> = flow_cells(cx, v, &target).into_iter().collect();
    if flow_set.is_empty() {
        return Err(Error::InvalidArgument(format!("{target:?} shares no cell with {v:?}")));
    }
    let mut acc = zero_covector::<X>(y, v)?;
    for beta in cx.star(v) {
        if !flow_set.contains(&beta) {
            let w = vertex_component(cx, y, &beta, v, l)?;
            for (a, b) in acc.iter_mut().zip(&w) {
                *a -= b;
            }
        }
    }
    let cells: Vec<X::Cell> = flow_set.into_iter().collect();
    Ok(MomentumValue {
        vertex: v.clone(),
        covector: acc,
        context: context_of(cx, y, &cells, &target)?,
    })
}

/// Legendre transformation `∑_{β∈S^Δ_v} (d_{y_β}L_β)∘i_{y_v}`; needs `y` on `S̄^Δ_v`.
pub fn legendre<X, L, F>(
    cx: &X,
    y: &DiscreteField<X::Cell>,
    v: &X::Cell,
    flow: &F,
    l: &L,
) -> Result<MomentumValue<X::Cell>>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
    F: IncrementalFlow<X::Cell> + ?Sized,
{
    let target = flow.step(v);
    let cells = flow_cells(cx, v, &target);
    if cells.is_empty() {
        return Err(Error::InvalidArgument(format!("{target:?} shares no cell with {v:?}")));
    }
    let mut acc = zero_covector::<X>(y, v)?;
    for beta in &cells {
        add_into(&mut acc, &vertex_component(cx, y, beta, v, l)?);
    }
    Ok(MomentumValue {
        vertex: v.clone(),
        covector: acc,
        context: context_of(cx, y, &cells, &target)?,
    })
}

/// Newton solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Residual norm at which the iteration stops.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Step for finite-difference Jacobians.
    pub fd_step: f64,
    /// Orthogonality defect above which rotations are re-projected.
    pub reorthonormalize_above: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-12,
            max_iter: 50,
            fd_step: 1e-7,
            reorthonormalize_above: 1e-12,
        }
    }
}

/// Relative size below which a Jacobian is declared singular.
const SINGULAR_RCOND: f64 = 1e-13;

/// Solves `J·x = −F`, failing with "Legendre not regular here" when `J` is
/// numerically singular.
pub(crate) fn newton_direction(jac: &DMatrix<f64>, residual: &DVector<f64>) -> Result<DVector<f64>> {
    let sv = jac.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || !(min > SINGULAR_RCOND * max) {
        return Err(Error::LegendreNotRegular);
    }
    jac.clone()
        .lu()
        .solve(&(-residual))
        .ok_or(Error::LegendreNotRegular)
}

/// Right inverse of the Legendre transformation: finds `y_{Δ_v}` with
/// `legendre(context ∪ {y_{Δ_v}}) = mu.covector` by Newton iteration in the
/// retraction coordinates around `guess` (default: `y_v`), with a
/// finite-difference Jacobian.
pub fn integrator_step<X, L, F>(
    cx: &X,
    mu: &MomentumValue<X::Cell>,
    flow: &F,
    l: &L,
    opts: &SolverOptions,
    guess: Option<FiberPoint>,
) -> Result<FiberPoint>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
    F: IncrementalFlow<X::Cell> + ?Sized,
{
    let v = &mu.vertex;
    let target = flow.step(v);
    let mut field = DiscreteField {
        values: mu.context.clone(),
    };
    let base = match guess {
        Some(g) => g,
        None => field.get(v)?.clone(),
    };
    let dim = base.tangent_dim();
    let target_mu = DVector::from_column_slice(&mu.covector);
    let residual_at = |w: &DVector<f64>, field: &mut DiscreteField<X::Cell>| -> Result<DVector<f64>> {
        field.insert(target.clone(), base.retract(w.as_slice()));
        let leg = legendre(cx, field, v, flow, l)?;
        Ok(DVector::from_column_slice(&leg.covector) - &target_mu)
    };
    let mut w = DVector::zeros(dim);
    let mut res = residual_at(&w, &mut field)?;
    for _ in 0..opts.max_iter {
        if res.norm() <= opts.tolerance {
            return Ok(base.retract(w.as_slice()).reorthonormalized(opts.reorthonormalize_above));
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let mut wp = w.clone();
            wp[k] += opts.fd_step;
            let rp = residual_at(&wp, &mut field)?;
            wp[k] -= 2.0 * opts.fd_step;
            let rm = residual_at(&wp, &mut field)?;
            jac.set_column(k, &((rp - rm) / (2.0 * opts.fd_step)));
        }
        w += newton_direction(&jac, &res)?;
        res = residual_at(&w, &mut field)?;
    }
    if res.norm() <= opts.tolerance {
        return Ok(base.retract(w.as_slice()).reorthonormalized(opts.reorthonormalize_above));
    }
    Err(Error::NewtonFailed {
        iterations: opts.max_iter,
        residual: res.norm(),
    })
}

/// Extends a band by solving, for every `v` in `front`, for the configuration at
/// `Δ_v` with the supplied per-vertex solver. Vertices are solved independently
/// (in parallel) from the same immutable band and merged in front order.
pub fn advance_band_with<C, F, S>(
    band: &DiscreteField<C>,
    front: &[C],
    flow: &F,
    solve: S,
) -> Result<DiscreteField<C>>
where
    C: Ord + Clone + std::fmt::Debug + Send + Sync,
    F: IncrementalFlow<C> + ?Sized,
    S: Fn(&C, &DiscreteField<C>) -> Result<FiberPoint> + Sync,
{
    let targets: Vec<C> = front.iter().map(|v| flow.step(v)).collect();
    let unique: BTreeSet<&C> = targets.iter().collect();
    if unique.len() != targets.len() {
        return Err(Error::InvalidArgument("flow is not injective on the front".into()));
    }
    let solved: Vec<FiberPoint> = front
        .par_iter()
        .map(|v| solve(v, band).map_err(|e| Error::at_vertex(v, e)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = band.clone();
    for (t, y) in targets.into_iter().zip(solved) {
        out.insert(t, y);
    }
    Ok(out)
}

/// [`advance_band_with`] using the generic [`momentum`] + [`integrator_step`] pair.
pub fn advance_band<X, L, F>(
    cx: &X,
    band: &DiscreteField<X::Cell>,
    front: &[X::Cell],
    flow: &F,
    l: &L,
    opts: &SolverOptions,
) -> Result<DiscreteField<X::Cell>>
where
    X: CellComplex,
    L: LagrangianDensity<X::Cell> + ?Sized,
    F: IncrementalFlow<X::Cell> + ?Sized,
{
    advance_band_with(band, front, flow, |v, band| {
        let mu = momentum(cx, band, v, flow, l)?;
        integrator_step(cx, &mu, flow, l, opts, None)
    })
}

/// Diagonal flow `v ↦ v + (1,…,1)` on integer-lattice vertices.
pub fn diagonal_step(coords: &[i64]) -> Vec<i64> {
    coords.iter().map(|x| x + 1).collect()
}

/// Body-frame tangent of the left action `R ↦ exp(εξ̂)R`: `Rᵗξ`.
pub fn left_rotation_tangent(r: &Rotation, xi: &Vector3<f64>) -> Vector3<f64> {
    r.transpose().apply(xi)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfk::{CfkCell, CfkComplex};
    use crate::cubic::{CubicCell, CubicComplex};

    fn scalar_field<X: CellComplex>(cx: &X, cells: &[X::Cell], f: impl Fn(usize) -> f64) -> DiscreteField<X::Cell> {
        let mut y = DiscreteField::new();
        let verts: BTreeSet<X::Cell> = cells.iter().flat_map(|b| cx.adherent_vertices(b)).collect();
        for (k, v) in verts.into_iter().enumerate() {
            y.insert(v, FiberPoint::euclidean(vec![f(k)]));
        }
        y
    }

    fn top_cells<X: CellComplex>(cx: &X, window: Vec<X::Cell>) -> Vec<X::Cell> {
        window.into_iter().filter(|c| cx.cell_dim(c) == cx.dimension()).collect()
    }

    #[test]
    fn action_and_zero_lagrangian() {
        let cx = CubicComplex::new(2);
        let cells = top_cells(&cx, cx.window(2));
        let y = scalar_field(&cx, &cells, |k| (k as f64).sin());
        let region: Region<CubicCell> = cells.iter().cloned().collect();
        assert_eq!(action(&cx, &y, &Region::new(), &PairwiseQuadratic).unwrap(), 0.0);
        let c = FnLagrangian(|_: &CubicCell, _: &[FiberPoint]| 2.5);
        assert_eq!(action(&cx, &y, &region, &c).unwrap(), 2.5 * region.len() as f64);
        let v = CubicCell::vertex(&[0, 0]);
        assert_eq!(el_form(&cx, &y, &v, &ZeroLagrangian).unwrap(), vec![0.0]);
        let mut missing = y.clone();
        missing.values.remove(&v);
        assert!(matches!(action(&cx, &missing, &region, &PairwiseQuadratic), Err(Error::MissingVertex(_))));
    }

    #[test]
    fn quadratic_el_is_graph_laplacian() {
        // Each square couples all 4 of its vertices; a vertex v shares squares with
        // its 8 neighbours: edge neighbours twice, diagonal neighbours once.
        let cx = CubicComplex::new(2);
        let cells = top_cells(&cx, cx.window(2));
        let y = scalar_field(&cx, &cells, |k| ((k * 7919) % 13) as f64 * 0.1);
        let v = CubicCell::vertex(&[0, 0]);
        let yv = y.get(&v).unwrap().factors[0].clone();
        let FactorValue::Euclidean(yv) = yv else { unreachable!() };
        let mut expected = 0.0;
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let mult = if dx == 0 || dy == 0 { 2.0 } else { 1.0 };
                let u = y.get(&CubicCell::vertex(&[dx, dy])).unwrap().euclidean_factor(0).unwrap()[0];
                expected += mult * (yv[0] - u);
            }
        }
        let el = el_form(&cx, &y, &v, &PairwiseQuadratic).unwrap();
        assert!((el[0] - expected).abs() < 1e-13);
    }

    #[test]
    fn legendre_momentum_decomposition_cfk() {
        let cx = CfkComplex::new(2);
        let cells = top_cells(&cx, cx.window(2));
        let y = scalar_field(&cx, &cells, |k| (k as f64 * 0.37).cos());
        let v = CfkCell::vertex(&[0, 0]);
        let flow = |c: &CfkCell| CfkCell::vertex(&diagonal_step(c.coords()));
        let leg = legendre(&cx, &y, &v, &flow, &PairwiseQuadratic).unwrap();
        let mom = momentum(&cx, &y, &v, &flow, &PairwiseQuadratic).unwrap();
        let el = el_form(&cx, &y, &v, &PairwiseQuadratic).unwrap();
        assert!((el[0] - (leg.covector[0] - mom.covector[0])).abs() < 1e-12);
        assert_eq!(flow_cells(&cx, &v, &flow(&v)).len(), 2);
        assert_eq!(cx.star(&v).len() - 2, 4);
        // context: both triangles over base v, minus Δ_v
        assert_eq!(leg.context.len(), 3);
        assert_eq!(mom.context, leg.context);
    }

    #[test]
    fn integrator_inverts_legendre_and_zeroes_el() {
        let cx = CfkComplex::new(2);
        let cells = top_cells(&cx, cx.window(2));
        let y = scalar_field(&cx, &cells, |k| (k as f64 * 0.37).cos());
        let v = CfkCell::vertex(&[0, 0]);
        let flow = |c: &CfkCell| CfkCell::vertex(&diagonal_step(c.coords()));
        let mut partial = y.clone();
        let target = flow(&v);
        partial.values.remove(&target);
        let mu = momentum(&cx, &partial, &v, &flow, &PairwiseQuadratic).unwrap();
        let sol = integrator_step(&cx, &mu, &flow, &PairwiseQuadratic, &SolverOptions::default(), None).unwrap();
        partial.insert(target, sol);
        let el = el_form(&cx, &partial, &v, &PairwiseQuadratic).unwrap();
        assert!(el[0].abs() < 1e-10);
        let mut mu2 = mu.clone();
        mu2.covector[0] += 1.0;
        assert_eq!(
            integrator_step(&cx, &mu2, &flow, &ZeroLagrangian, &SolverOptions::default(), None),
            Err(Error::LegendreNotRegular)
        );
    }

    #[test]
    fn advance_band_extends_diagonal() {
        let cx = CfkComplex::new(2);
        let flow = |c: &CfkCell| CfkCell::vertex(&diagonal_step(c.coords()));
        let k = 0i64;
        let mut band = DiscreteField::new();
        for i in -8..=8i64 {
            for j in -8..=8i64 {
                if (k - 2..=k + 1).contains(&(i + j)) {
                    band.insert(CfkCell::vertex(&[i, j]), FiberPoint::euclidean(vec![(0.3 * i as f64).sin() + 0.1 * j as f64]));
                }
            }
        }
        let front: Vec<CfkCell> = (-5..=5i64).map(|i| CfkCell::vertex(&[i, k - i])).collect();
        let out = advance_band(&cx, &band, &front, &flow, &PairwiseQuadratic, &SolverOptions::default()).unwrap();
        assert_eq!(out.len(), band.len() + front.len());
        for v in &front {
            assert!(out.contains(&flow(v)));
            let el = el_form(&cx, &out, v, &PairwiseQuadratic).unwrap();
            assert!(el[0].abs() < 1e-10);
        }
        let same = advance_band(&cx, &band, &[], &flow, &PairwiseQuadratic, &SolverOptions::default()).unwrap();
        assert_eq!(same, band);
    }

    #[test]
    fn noether_identity_noncritical() {
        let cx = CubicComplex::new(2);
        let cells = top_cells(&cx, cx.window(3));
        let y = scalar_field(&cx, &cells, |k| ((k * 31) % 17) as f64 * 0.05);
        let region: Region<CubicCell> = cells.iter().filter(|c| c.doubled().iter().all(|d| d.abs() <= 3)).cloned().collect();
        let translate = |_: &FiberPoint| vec![1.0];
        let bal = noether_balance(&cx, &y, translate, &region, &PairwiseQuadratic).unwrap();
        assert!(bal.defect.abs() < 1e-12);
        assert!((bal.boundary + bal.interior_el).abs() < 1e-12);
        let cur = noether_current(&cx, &y, |_: &FiberPoint| vec![0.0], &region, &PairwiseQuadratic).unwrap();
        assert_eq!(cur, 0.0);
        let samples: Vec<(CubicCell, Vec<FiberPoint>)> =
            region.iter().map(|b| (b.clone(), gather(&cx, &y, b).unwrap().1)).collect();
        assert!(check_symmetry(translate, &PairwiseQuadratic, &samples));
        assert!(!check_symmetry(|y: &FiberPoint| vec![y.euclidean_factor(0).unwrap()[0]], &PairwiseQuadratic, &samples));
    }

    #[test]
    fn fd_diff_matches_analytic_quadratic() {
        let configs: Vec<FiberPoint> = (0..3).map(|k| FiberPoint::euclidean(vec![k as f64 * 0.3, -(k as f64)])).collect();
        let a = PairwiseQuadratic.diff(&(), &configs).unwrap();
        let f = finite_difference_diff(&PairwiseQuadratic, &(), &configs, 1e-6).unwrap();
        for (x, y) in a.iter().flatten().zip(f.iter().flatten()) {
            assert!((x - y).abs() < 1e-8);
        }
    }
}
