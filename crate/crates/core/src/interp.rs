//! Simplicial geodesic interpolation on products of Euclidean spaces and SO(3),
//! quadrature rules on simplices, and the discrete Lagrangian they induce from a
//! smooth first-order Lagrangian.

use crate::error::{Error, Result};
use crate::so3;
use crate::variational::{Covector, FactorValue, FiberPoint, LagrangianDensity, Tangent};
use nalgebra::{DMatrix, DVector, Vector3};
use std::f64::consts::FRAC_PI_2;

/// Barycentric coordinates on a simplex: nonnegative, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycentricPoint {
    weights: Vec<f64>,
}

impl BarycentricPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-14 * weights.len() as f64 {
            return Err(Error::InvalidArgument(format!("not barycentric: {weights:?}")));
        }
        Ok(BarycentricPoint { weights })
    }

    /// Indicator of vertex `u` among `k` vertices.
    pub fn vertex(k: usize, u: usize) -> Self {
        let mut w = vec![0.0; k];
        w[u] = 1.0;
        BarycentricPoint { weights: w }
    }

    /// Barycenter of a simplex with `k` vertices.
    pub fn barycenter(k: usize) -> Self {
        BarycentricPoint {
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Metric operations on fiber points, factor by factor.
pub trait MetricOps: Sync {
    /// Tangent vector at `p` pointing to `q` (Riemannian log).
    fn log(&self, p: &FiberPoint, q: &FiberPoint) -> Result<Tangent>;
    /// Riemannian exponential at `p`.
    fn exp(&self, p: &FiberPoint, t: &[f64]) -> FiberPoint;
    fn distance(&self, p: &FiberPoint, q: &FiberPoint) -> Result<f64>;
    fn geodesic(&self, p: &FiberPoint, q: &FiberPoint, s: f64) -> Result<FiberPoint>;
}

/// Product of Euclidean metrics and the bi-invariant (halved Frobenius) metric
/// on SO(3). The exponential at `R` is `R·exp(t̂)`, matching the body-frame
/// tangent identification used everywhere else.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProductMetric;

impl MetricOps for ProductMetric {
    fn log(&self, p: &FiberPoint, q: &FiberPoint) -> Result<Tangent> {
        check_same_shape(p, q)?;
        let mut out = Vec::with_capacity(p.tangent_dim());
        for (a, b) in p.factors.iter().zip(&q.factors) {
            match (a, b) {
                (FactorValue::Euclidean(x), FactorValue::Euclidean(y)) => {
                    out.extend(x.iter().zip(y).map(|(s, t)| t - s));
                }
                (FactorValue::Rotation(r), FactorValue::Rotation(s)) => {
                    let v = so3::log(&r.transpose().compose(s))?;
                    out.extend_from_slice(v.as_slice());
                }
                _ => unreachable!(),
            }
        }
        Ok(out)
    }

    fn exp(&self, p: &FiberPoint, t: &[f64]) -> FiberPoint {
        p.retract(t)
    }

    fn distance(&self, p: &FiberPoint, q: &FiberPoint) -> Result<f64> {
        Ok(self.log(p, q)?.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    fn geodesic(&self, p: &FiberPoint, q: &FiberPoint, s: f64) -> Result<FiberPoint> {
        let t: Vec<f64> = self.log(p, q)?.into_iter().map(|x| x * s).collect();
        Ok(p.retract(&t))
    }
}

fn check_same_shape(p: &FiberPoint, q: &FiberPoint) -> Result<()> {
    if p.descriptor() != q.descriptor() {
        return Err(Error::FiberMismatch(format!(
            "{:?} vs {:?}",
            p.descriptor(),
            q.descriptor()
        )));
    }
    Ok(())
}

/// Karcher iteration settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KarcherOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        KarcherOptions {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

/// Ball condition for a rotation factor: some data point `c` has every other
/// point within distance `< π/2`.
fn rotation_ball_ok(rs: &[so3::Rotation]) -> bool {
    rs.iter().any(|c| {
        rs.iter().all(|r| match so3::distance(c, r) {
            Ok(d) => d < FRAC_PI_2,
            Err(_) => false,
        })
    })
}

/// Weighted Riemannian barycenter `argmin ∑ λ_v dist(p_v, y)²`, computed factor
/// by factor: weighted averages on Euclidean factors, and the fixed-point
/// iteration `y ← y·exp(∑ λ_v log(yᵗ p_v))` on rotation factors.
pub fn karcher_mean(
    points: &[FiberPoint],
    lambda: &BarycentricPoint,
    _metric: &dyn MetricOps,
    opts: &KarcherOptions,
) -> Result<FiberPoint> {
    let w = lambda.weights();
    if points.is_empty() || points.len() != w.len() {
        return Err(Error::InvalidArgument("one weight per point required".into()));
    }
    for p in &points[1..] {
        check_same_shape(&points[0], p)?;
    }
    let active: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let mut factors = Vec::with_capacity(points[0].factors.len());
    for (f, first) in points[0].factors.iter().enumerate() {
        match first {
            FactorValue::Euclidean(x) => {
                let mut y = vec![0.0; x.len()];
                for &i in &active {
                    let FactorValue::Euclidean(p) = &points[i].factors[f] else { unreachable!() };
                    for (a, b) in y.iter_mut().zip(p) {
                        *a += w[i] * b;
                    }
                }
                factors.push(FactorValue::Euclidean(y));
            }
            FactorValue::Rotation(_) => {
                let rs: Vec<so3::Rotation> = active
                    .iter()
                    .map(|&i| *points[i].rotation_factor(f).unwrap())
                    .collect();
                let ws: Vec<f64> = active.iter().map(|&i| w[i]).collect();
                factors.push(FactorValue::Rotation(rotation_mean(&rs, &ws, opts)?));
            }
        }
    }
    Ok(FiberPoint::new(factors))
}

fn rotation_mean(rs: &[so3::Rotation], ws: &[f64], opts: &KarcherOptions) -> Result<so3::Rotation> {
    if !rotation_ball_ok(rs) {
        return Err(Error::PointsTooSpread);
    }
    // start from the heaviest point (first one on ties)
    let start = (0..rs.len()).fold(0, |best, i| if ws[i] > ws[best] { i } else { best });
    let mut y = rs[start];
    let mut last = f64::INFINITY;
    for _ in 0..=opts.max_iter {
        let mut g = Vector3::zeros();
        for (r, &w) in rs.iter().zip(ws) {
            g += so3::log(&y.transpose().compose(r)).map_err(|_| Error::PointsTooSpread)? * w;
        }
        last = g.norm();
        if last <= opts.tol {
            return Ok(y);
        }
        y = y.retract(&g).reorthonormalized(1e-14);
    }
    Err(Error::KarcherNotConverged(last))
}

/// Quadrature node on a simplex.
#[derive(Clone, Debug, PartialEq)]
pub enum QuadratureNode {
    Vertex(usize),
    Barycenter,
    Point(BarycentricPoint),
}

impl QuadratureNode {
    fn point(&self, k: usize) -> BarycentricPoint {
        match self {
            QuadratureNode::Vertex(u) => BarycentricPoint::vertex(k, *u),
            QuadratureNode::Barycenter => BarycentricPoint::barycenter(k),
            QuadratureNode::Point(p) => p.clone(),
        }
    }
}

/// `Q(h) = (1/n!) ∑ c_i h(u_i)` on an n-simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub n: usize,
    pub nodes: Vec<QuadratureNode>,
    pub weights: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl QuadratureRule {
    /// All weight at vertex `u`.
    pub fn vertex(n: usize, u: usize) -> Self {
        QuadratureRule {
            n,
            nodes: vec![QuadratureNode::Vertex(u)],
            weights: vec![1.0],
        }
    }

    /// Equal weights `1/(n+1)` at every vertex.
    pub fn symmetric(n: usize) -> Self {
        QuadratureRule {
            n,
            nodes: (0..=n).map(QuadratureNode::Vertex).collect(),
            weights: vec![1.0 / (n + 1) as f64; n + 1],
        }
    }

    /// Midpoint rule: weight one at the barycenter.
    pub fn midpoint(n: usize) -> Self {
        QuadratureRule {
            n,
            nodes: vec![QuadratureNode::Barycenter],
            weights: vec![1.0],
        }
    }

    pub fn normalization(&self) -> f64 {
        1.0 / factorial(self.n)
    }

    /// Applies the rule to a function of barycentric coordinates.
    pub fn integrate(&self, h: impl Fn(&BarycentricPoint) -> f64) -> f64 {
        self.normalization()
            * self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(u, c)| c * h(&u.point(self.n + 1)))
                .sum::<f64>()
    }
}

/// Differential of the interpolated section at vertex `u` and the Jacobian there.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexJet {
    /// `φ_u`: fiber tangent (rows) per base direction (columns).
    pub phi: DMatrix<f64>,
    /// `|det[t^X_{uv}]|`.
    pub jac: f64,
}

fn base_edge_matrix(nodes: &[DVector<f64>], u: usize) -> Result<DMatrix<f64>> {
    let n = nodes[0].len();
    if nodes.len() != n + 1 || nodes.iter().any(|x| x.len() != n) {
        return Err(Error::InvalidArgument("need n+1 base nodes in R^n".into()));
    }
    let others: Vec<usize> = (0..=n).filter(|&v| v != u).collect();
    Ok(DMatrix::from_fn(n, n, |r, c| nodes[others[c]][r] - nodes[u][r]))
}

fn invert_nodes(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let det = m.determinant();
    if !(det.abs() > 1e-12 * scale.powi(m.nrows() as i32)) {
        return Err(Error::NodesDegenerate);
    }
    m.clone().try_inverse().ok_or(Error::NodesDegenerate)
}

/// `φ_u = [t_{uv₁} … t_{uvₙ}]·[t^X_{uv₁} … t^X_{uvₙ}]⁻¹` and `Jac = |det t^X|`.
pub fn phi_at_vertex(
    config: &[FiberPoint],
    u: usize,
    nodes: &[DVector<f64>],
    metric: &dyn MetricOps,
) -> Result<VertexJet> {
    let tx = base_edge_matrix(nodes, u)?;
    let inv = invert_nodes(&tx)?;
    let n = tx.nrows();
    if config.len() != n + 1 {
        return Err(Error::InvalidArgument("one configuration per node required".into()));
    }
    let d = config[u].tangent_dim();
    let mut t = DMatrix::zeros(d, n);
    for (c, v) in (0..=n).filter(|&v| v != u).enumerate() {
        let tv = metric.log(&config[u], &config[v])?;
        t.set_column(c, &DVector::from_vec(tv));
    }
    Ok(VertexJet {
        phi: t * inv,
        jac: tx.determinant().abs(),
    })
}

/// Affine interpolation data for Euclidean fibers.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineJet {
    /// Barycenter `x̄` of the nodes.
    pub center: DVector<f64>,
    /// Value of the affine interpolant at `x̄`.
    pub value: DVector<f64>,
    /// Constant differential (fiber rows × base columns).
    pub gradient: DMatrix<f64>,
    /// `|det[1 x_i]|`, the Jacobian constant.
    pub jac: f64,
}

/// The affine map through `(x(v_i), y_i)`, returned as its value and gradient at
/// the barycenter of the nodes.
pub fn affine_bary(config: &[FiberPoint], nodes: &[DVector<f64>]) -> Result<AffineJet> {
    let n = nodes.first().map(|x| x.len()).unwrap_or(0);
    if nodes.len() != n + 1 || config.len() != n + 1 {
        return Err(Error::InvalidArgument("need n+1 nodes and configurations".into()));
    }
    let ys: Vec<Vec<f64>> = config
        .iter()
        .map(|c| {
            let mut out = Vec::new();
            for f in &c.factors {
                match f {
                    FactorValue::Euclidean(x) => out.extend_from_slice(x),
                    FactorValue::Rotation(_) => {
                        return Err(Error::UnsupportedNode("barycenter node on a non-affine fiber".into()))
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let m = ys[0].len();
    let x = DMatrix::from_fn(n + 1, n + 1, |r, c| if c == 0 { 1.0 } else { nodes[r][c - 1] });
    let xinv = invert_nodes(&x)?;
    let y = DMatrix::from_fn(n + 1, m, |r, c| ys[r][c]);
    // rows: [a; Gᵗ] with y(x) = a + G x
    let coef = xinv * y;
    let center = nodes.iter().fold(DVector::zeros(n), |acc, x| acc + x) / (n + 1) as f64;
    let a = coef.row(0).transpose();
    let gradient = coef.rows(1, n).transpose();
    let value = a + &gradient * &center;
    Ok(AffineJet {
        center,
        value,
        gradient,
        jac: x.determinant().abs(),
    })
}

/// True iff the Karcher mean is well posed (ball condition on rotation factors)
/// and every vertex edge matrix `[t^X_{uv}]` is nonsingular.
pub fn suitedness_check(config: &[FiberPoint], nodes: &[DVector<f64>], _metric: &dyn MetricOps) -> bool {
    if config.is_empty() || config.len() != nodes.len() {
        return false;
    }
    if config[1..].iter().any(|c| check_same_shape(&config[0], c).is_err()) {
        return false;
    }
    for (f, first) in config[0].factors.iter().enumerate() {
        if matches!(first, FactorValue::Rotation(_)) {
            let rs: Vec<so3::Rotation> = config.iter().map(|c| *c.rotation_factor(f).unwrap()).collect();
            if !rotation_ball_ok(&rs) {
                return false;
            }
        }
    }
    (0..nodes.len()).all(|u| base_edge_matrix(nodes, u).and_then(|m| invert_nodes(&m)).is_ok())
}

/// A smooth first-order Lagrangian `𝓛(x, y, ∂y)`; `jet` has one row per fiber
/// tangent coordinate and one column per base coordinate.
pub trait SmoothLagrangian: Sync {
    fn density(&self, x: &DVector<f64>, y: &FiberPoint, jet: &DMatrix<f64>) -> f64;
}

impl<F: Fn(&DVector<f64>, &FiberPoint, &DMatrix<f64>) -> f64 + Sync> SmoothLagrangian for F {
    fn density(&self, x: &DVector<f64>, y: &FiberPoint, jet: &DMatrix<f64>) -> f64 {
        self(x, y, jet)
    }
}

/// Node positions `x(v)` of a cell's adherent vertices, in complex order.
pub type NodeMap<'a, C> = Box<dyn Fn(&C) -> Vec<DVector<f64>> + Sync + 'a>;

/// Discrete Lagrangian induced by geodesic interpolation and a quadrature rule:
/// `L_β = Q(𝓛(j¹y)·Jac)`, evaluated at vertex nodes through [`phi_at_vertex`]
/// and at the barycenter (affine fibers only) through [`affine_bary`].
pub struct InducedLagrangian<'a, C, S> {
    smooth: S,
    rule: QuadratureRule,
    nodes: NodeMap<'a, C>,
    metric: ProductMetric,
}

/// Builds the induced discrete Lagrangian for a given rule and base immersion.
pub fn induced_lagrangian<'a, C, S: SmoothLagrangian>(
    smooth: S,
    rule: QuadratureRule,
    nodes: NodeMap<'a, C>,
) -> InducedLagrangian<'a, C, S> {
    InducedLagrangian {
        smooth,
        rule,
        nodes,
        metric: ProductMetric,
    }
}

impl<C, S: SmoothLagrangian> LagrangianDensity<C> for InducedLagrangian<'_, C, S> {
    fn eval(&self, cell: &C, configs: &[FiberPoint]) -> Result<f64> {
        let nodes = (self.nodes)(cell);
        let mut total = 0.0;
        for (node, c) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let h = match node {
                QuadratureNode::Vertex(u) => {
                    let jet = phi_at_vertex(configs, *u, &nodes, &self.metric)?;
                    self.smooth.density(&nodes[*u], &configs[*u], &jet.phi) * jet.jac
                }
                QuadratureNode::Barycenter => {
                    let aff = affine_bary(configs, &nodes)?;
                    let y = FiberPoint::euclidean(aff.value.as_slice().to_vec());
                    self.smooth.density(&aff.center, &y, &aff.gradient) * aff.jac
                }
                QuadratureNode::Point(p) => {
                    return Err(Error::UnsupportedNode(format!("{:?}", p.weights())));
                }
            };
            total += c * h;
        }
        Ok(total * self.rule.normalization())
    }
}

/// Volume `|det[x_i − x_0]| / n!` of a simplex.
pub fn simplex_volume(nodes: &[DVector<f64>]) -> Result<f64> {
    let m = base_edge_matrix(nodes, 0)?;
    Ok(m.determinant().abs() / factorial(m.nrows()))
}

/// Unused by the library itself; kept for callers that want explicit covectors
/// for induced Lagrangians without importing the variational module.
pub fn induced_diff<C, S: SmoothLagrangian>(
    l: &InducedLagrangian<'_, C, S>,
    cell: &C,
    configs: &[FiberPoint],
) -> Result<Vec<Covector>> {
    l.diff(cell, configs)
}
