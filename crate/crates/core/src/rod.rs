//! Discrete Cosserat rod on the 2-D CFK complex.
//!
//! Vertex `(i, j)` sits at `x(i,j) = ((i−j)Δs/2, (i+j)Δt/2)` in space-time (a
//! leapfrog arrangement), the configuration space is `ℝ³ × SO(3)`, and the
//! discrete Lagrangian of a face is the smooth rod Lagrangian sampled at the
//! face's first vertex `v₀` through geodesic interpolation.
//!
//! Face `(i, j, +)` has vertices `v₀=(i,j)`, `v₁=(i+1,j)`, `v₂=(i+1,j+1)`;
//! face `(i, j, −)` has `v₁=(i,j+1)` instead. Covectors on the rotation factor
//! use the body-frame identification of [`crate::so3`].

use crate::cfk::{cfk_vertices, CfkCell, CfkComplex, PeriodicCfkComplex};
use crate::complex::{CellComplex, Region};
use crate::error::{Error, Result};
use crate::interp::{induced_lagrangian, InducedLagrangian, QuadratureRule, SmoothLagrangian};
use crate::so3::{self, dlog, dlog_jacobian, hat, Rotation};
use crate::variational::{
    check_symmetry, el_form, gather, momentum, newton_direction, noether_balances, Covector, DiscreteField,
    FiberPoint, LagrangianDensity, SolverOptions, Tangent,
};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Elastic and inertial properties along the rod, as functions of arc length.
pub trait Material: Send + Sync {
    fn rho(&self, s: f64) -> f64;
    /// Diagonal inertia matrix `J(s)`.
    fn inertia(&self, s: f64) -> Matrix3<f64>;
    fn c1(&self, s: f64) -> Matrix3<f64>;
    fn c2(&self, s: f64) -> Matrix3<f64>;
    /// Unstressed linear strain `e(s)`.
    fn strain(&self, s: f64) -> Vector3<f64>;
}

/// Material constant along the rod.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformMaterial {
    pub rho: f64,
    pub inertia: Vector3<f64>,
    pub c1: Matrix3<f64>,
    pub c2: Matrix3<f64>,
    pub strain: Vector3<f64>,
}

fn check_spd(name: &str, m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(Error::InvalidMaterial(format!("material.{name} not symmetric")));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMaterial(format!("material.{name} not finite")));
    }
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidMaterial(format!("material.{name} not positive definite")));
    }
    Ok(())
}

impl UniformMaterial {
    /// Validating constructor.
    pub fn new(
        rho: f64,
        inertia: Vector3<f64>,
        c1: Matrix3<f64>,
        c2: Matrix3<f64>,
        strain: Vector3<f64>,
    ) -> Result<Self> {
        let m = UniformMaterial {
            rho,
            inertia,
            c1,
            c2,
            strain,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidMaterial("material.rho must be nonnegative".into()));
        }
        if self.inertia.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidMaterial("material.J must be nonnegative".into()));
        }
        check_spd("C1", &self.c1)?;
        check_spd("C2", &self.c2)?;
        if self.strain.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMaterial("material.e not finite".into()));
        }
        Ok(())
    }

    /// Unit density and inertia, identity stiffness, zero strain.
    pub fn unit() -> Self {
        UniformMaterial {
            rho: 1.0,
            inertia: Vector3::new(1.0, 1.0, 1.0),
            c1: Matrix3::identity(),
            c2: Matrix3::identity(),
            strain: Vector3::zeros(),
        }
    }
}

impl Material for UniformMaterial {
    fn rho(&self, _: f64) -> f64 {
        self.rho
    }
    fn inertia(&self, _: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.inertia)
    }
    fn c1(&self, _: f64) -> Matrix3<f64> {
        self.c1
    }
    fn c2(&self, _: f64) -> Matrix3<f64> {
        self.c2
    }
    fn strain(&self, _: f64) -> Vector3<f64> {
        self.strain
    }
}

/// `(s, r) ↦ (P(s, r), ∇_r P(s, r))`.
pub type PotentialFn = dyn Fn(f64, &Vector3<f64>) -> (f64, Vector3<f64>) + Send + Sync;

/// Potential energy density `P(s, r)`.
#[derive(Clone, Default)]
pub enum Potential {
    #[default]
    None,
    /// `P(s, r) = ρ(s)·g·r`.
    Linear(Vector3<f64>),
    Custom(Arc<PotentialFn>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::None => write!(f, "None"),
            Potential::Linear(g) => write!(f, "Linear({:?})", g.as_slice()),
            Potential::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Potential {
    /// Value and gradient at `(s, r)` for density `rho`.
    pub fn eval(&self, s: f64, r: &Vector3<f64>, rho: f64) -> (f64, Vector3<f64>) {
        match self {
            Potential::None => (0.0, Vector3::zeros()),
            Potential::Linear(g) => (rho * g.dot(r), g * rho),
            Potential::Custom(f) => f(s, r),
        }
    }

    /// Checks a user-supplied gradient against central differences of the value
    /// at the given sample points.
    pub fn validate(&self, samples: &[(f64, Vector3<f64>)]) -> Result<()> {
        let Potential::Custom(f) = self else { return Ok(()) };
        let h = 1e-6;
        for (s, r) in samples {
            let (_, g) = f(*s, r);
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = h;
                let fd = (f(*s, &(r + e)).0 - f(*s, &(r - e)).0) / (2.0 * h);
                if (fd - g[k]).abs() > 1e-5 * (1.0 + g[k].abs()) {
                    return Err(Error::InvalidMaterial(format!(
                        "material.potential gradient disagrees with its value at s={s}, r={:?}",
                        r.as_slice()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Space-time discretization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodGrid {
    pub ds: f64,
    pub dt: f64,
    /// `Some(M)`: identify `i−j mod 2M` (a closed rod of `M` elements).
    pub s_period: Option<usize>,
}

impl RodGrid {
    pub fn new(ds: f64, dt: f64, s_period: Option<usize>) -> Result<Self> {
        if !(ds > 0.0 && ds.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument("grid.ds and grid.dt must be positive".into()));
        }
        if let Some(m) = s_period {
            PeriodicCfkComplex::rod(m)?;
        }
        Ok(RodGrid { ds, dt, s_period })
    }

    /// `x(i, j) = ((i−j)Δs/2, (i+j)Δt/2)`.
    pub fn position(&self, i: i64, j: i64) -> (f64, f64) {
        ((i - j) as f64 * self.ds / 2.0, (i + j) as f64 * self.dt / 2.0)
    }

    /// Area `|ΔsΔt|/4` of every face (unsigned, like the interpolation Jacobian).
    pub fn face_area(&self) -> f64 {
        (self.ds * self.dt).abs() / 4.0
    }
}

/// Orientation of a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaceSign {
    Plus,
    Minus,
}

impl FaceSign {
    pub fn sigma(self) -> f64 {
        match self {
            FaceSign::Plus => 1.0,
            FaceSign::Minus => -1.0,
        }
    }
}

/// Face `(i, j, ±)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceIndex {
    pub i: i64,
    pub j: i64,
    pub sign: FaceSign,
}

impl FaceIndex {
    pub fn new(i: i64, j: i64, sign: FaceSign) -> Self {
        FaceIndex { i, j, sign }
    }

    /// Reads a top CFK cell of the plane: permutation `(0,1)` is `+`, `(1,0)` is `−`.
    pub fn from_cell(cell: &CfkCell) -> Result<Self> {
        let b = cell.base();
        let sign = match cell.permutation().as_deref() {
            Some([0, 1]) => FaceSign::Plus,
            Some([1, 0]) => FaceSign::Minus,
            _ => return Err(Error::InvalidCell(format!("{cell:?} is not a face of the plane"))),
        };
        Ok(FaceIndex { i: b[0], j: b[1], sign })
    }

    pub fn cell(&self) -> CfkCell {
        let perm: &[usize] = match self.sign {
            FaceSign::Plus => &[0, 1],
            FaceSign::Minus => &[1, 0],
        };
        CfkCell::top(vec![self.i, self.j], perm).expect("valid face")
    }

    /// `(v₀, v₁, v₂)`.
    pub fn vertices(&self) -> [(i64, i64); 3] {
        let v1 = match self.sign {
            FaceSign::Plus => (self.i + 1, self.j),
            FaceSign::Minus => (self.i, self.j + 1),
        };
        [(self.i, self.j), v1, (self.i + 1, self.j + 1)]
    }

    /// Arc length `s₀` of `v₀`.
    pub fn s0(&self, grid: &RodGrid) -> f64 {
        grid.position(self.i, self.j).0
    }
}

/// A rod configuration `(r, R)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodConfig {
    pub r: Vector3<f64>,
    pub rot: Rotation,
}

impl RodConfig {
    pub fn new(r: Vector3<f64>, rot: Rotation) -> Self {
        RodConfig { r, rot }
    }

    pub fn rest() -> Self {
        RodConfig::new(Vector3::zeros(), Rotation::identity())
    }

    pub fn from_point(p: &FiberPoint) -> Result<Self> {
        let (r, rot) = p.rod_parts()?;
        Ok(RodConfig { r, rot })
    }

    pub fn to_point(&self) -> FiberPoint {
        FiberPoint::rod(self.r, self.rot)
    }
}

/// `(Δr, ΔR) = (r₁ − r₀, log(R₀ᵗR₁))`.
pub fn deltas(c0: &RodConfig, c1: &RodConfig) -> Result<(Vector3<f64>, Vector3<f64>)> {
    Ok((c1.r - c0.r, so3::log(&c0.rot.transpose().compose(&c1.rot))?))
}

/// The five energy terms of a face Lagrangian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RodTerm {
    KineticLinear,
    KineticAngular,
    ElasticLinear,
    ElasticAngular,
    Potential,
}

impl RodTerm {
    pub const ALL: [RodTerm; 5] = [
        RodTerm::KineticLinear,
        RodTerm::KineticAngular,
        RodTerm::ElasticLinear,
        RodTerm::ElasticAngular,
        RodTerm::Potential,
    ];

    /// Sign with which the term enters `L = K_lin + K_ang − E_lin − E_ang − P`.
    pub fn sign(self) -> f64 {
        match self {
            RodTerm::KineticLinear | RodTerm::KineticAngular => 1.0,
            _ => -1.0,
        }
    }
}

/// A covector at one vertex, split into its `ℝ³` and rotation parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexCovector {
    pub r: Vector3<f64>,
    pub rot: Vector3<f64>,
}

impl VertexCovector {
    pub fn zero() -> Self {
        VertexCovector {
            r: Vector3::zeros(),
            rot: Vector3::zeros(),
        }
    }

    pub fn to_vec(&self) -> Covector {
        vec![self.r.x, self.r.y, self.r.z, self.rot.x, self.rot.y, self.rot.z]
    }
}

impl std::ops::AddAssign<VertexCovector> for VertexCovector {
    fn add_assign(&mut self, o: VertexCovector) {
        self.r += o.r;
        self.rot += o.rot;
    }
}

/// Differential of one face: every term at every vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceDifferential {
    /// `terms[k][a]`: differential of term `RodTerm::ALL[k]` at vertex `v_a`.
    pub terms: [[VertexCovector; 3]; 5],
}

impl FaceDifferential {
    /// Differential of the full Lagrangian at each vertex.
    pub fn total(&self) -> [VertexCovector; 3] {
        let mut out = [VertexCovector::zero(); 3];
        for (k, t) in RodTerm::ALL.iter().enumerate() {
            for a in 0..3 {
                out[a].r += self.terms[k][a].r * t.sign();
                out[a].rot += self.terms[k][a].rot * t.sign();
            }
        }
        out
    }
}

/// The discrete rod model: grid, material and potential.
#[derive(Clone, Debug)]
pub struct RodModel<M = UniformMaterial> {
    pub grid: RodGrid,
    pub material: M,
    pub potential: Potential,
}

/// Quantities shared by a face's terms and their differentials.
struct FaceData {
    sigma: f64,
    area: f64,
    s0: f64,
    r0: Vector3<f64>,
    rot0: Rotation,
    /// `2Δ⁰¹r − Δ⁰²r`
    m: Vector3<f64>,
    b: Vector3<f64>,
    a: Vector3<f64>,
    w: Vector3<f64>,
    u: Vector3<f64>,
    q: Vector3<f64>,
}

impl<M: Material> RodModel<M> {
    pub fn new(grid: RodGrid, material: M, potential: Potential) -> Self {
        RodModel {
            grid,
            material,
            potential,
        }
    }

    fn face_data(&self, face: &FaceIndex, c: &[RodConfig; 3]) -> Result<FaceData> {
        let sigma = face.sign.sigma();
        let s0 = face.s0(&self.grid);
        let (d1, a) = deltas(&c[0], &c[1])?;
        let (b, w) = deltas(&c[0], &c[2])?;
        let m = 2.0 * d1 - b;
        let sd = sigma * self.grid.ds;
        let u = c[0].rot.transpose().apply(&m) / sd - self.material.strain(s0);
        let q = (2.0 * a - w) / sd;
        Ok(FaceData {
            sigma,
            area: self.grid.face_area(),
            s0,
            r0: c[0].r,
            rot0: c[0].rot,
            m,
            b,
            a,
            w,
            u,
            q,
        })
    }

    /// The five terms `[K_lin, K_ang, E_lin, E_ang, P_ot]` of a face.
    pub fn face_terms(&self, face: &FaceIndex, c: &[RodConfig; 3]) -> Result<[f64; 5]> {
        let f = self.face_data(face, c)?;
        let dt = self.grid.dt;
        let mat = &self.material;
        let vel = f.b / dt;
        let om = f.w / dt;
        let rho = mat.rho(f.s0);
        let k_lin = 0.5 * rho * vel.norm_squared() * f.area;
        let k_ang = 0.5 * om.dot(&(mat.inertia(f.s0) * om)) * f.area;
        let e_lin = 0.5 * f.u.dot(&(mat.c1(f.s0) * f.u)) * f.area;
        let e_ang = 0.5 * f.q.dot(&(mat.c2(f.s0) * f.q)) * f.area;
        let p = 0.5 * self.potential.eval(f.s0, &f.r0, rho).0 * f.area;
        Ok([k_lin, k_ang, e_lin, e_ang, p])
    }

    /// `L = K_lin + K_ang − E_lin − E_ang − P_ot`.
    pub fn face_lagrangian(&self, face: &FaceIndex, c: &[RodConfig; 3]) -> Result<f64> {
        let t = self.face_terms(face, c)?;
        Ok(t[0] + t[1] - t[2] - t[3] - t[4])
    }

    /// Analytic differentials of every term at every vertex.
    pub fn face_dlagrangian(&self, face: &FaceIndex, c: &[RodConfig; 3]) -> Result<FaceDifferential> {
        let f = self.face_data(face, c)?;
        let (ds, dt) = (self.grid.ds, self.grid.dt);
        let mat = &self.material;
        let sg = f.sigma;
        let z = VertexCovector::zero();
        let mut terms = [[z; 3]; 5];

        let rho = mat.rho(f.s0);
        let kl = (ds / 4.0) * rho * f.b / dt;
        terms[0][0].r = -kl;
        terms[0][2].r = kl;

        let dlog_w = dlog(&f.w)?;
        let jw = mat.inertia(f.s0) * f.w / dt;
        terms[1][0].rot = -(ds / 4.0) * dlog_w * jw;
        terms[1][2].rot = (ds / 4.0) * dlog_w.transpose() * jw;

        let c1u = mat.c1(f.s0) * f.u;
        let r0c1u = f.rot0.apply(&c1u);
        terms[2][0].r = -sg * (dt / 4.0) * r0c1u;
        terms[2][1].r = sg * (dt / 2.0) * r0c1u;
        terms[2][2].r = -sg * (dt / 4.0) * r0c1u;
        let rt = f.rot0.transpose();
        terms[2][0].rot = -sg * (dt / 4.0) * (rt.matrix() * hat(&f.m) * f.rot0.matrix() * c1u);

        let dlog_a = dlog(&f.a)?;
        let c2q = mat.c2(f.s0) * f.q;
        terms[3][0].rot = -sg * (dt / 4.0) * ((2.0 * dlog_a - dlog_w) * c2q);
        terms[3][1].rot = sg * (dt / 2.0) * (dlog_a.transpose() * c2q);
        terms[3][2].rot = -sg * (dt / 4.0) * (dlog_w.transpose() * c2q);

        let grad = self.potential.eval(f.s0, &f.r0, rho).1;
        terms[4][0].r = 0.5 * f.area * grad;
        Ok(FaceDifferential { terms })
    }

    /// The smooth Lagrangian density this model discretizes.
    pub fn smooth(&self) -> RodSmoothLagrangian<'_, M> {
        RodSmoothLagrangian { model: self }
    }

    /// The same discrete Lagrangian built generically from geodesic
    /// interpolation with the single-node rule at `v₀`.
    pub fn induced(&self) -> InducedLagrangian<'_, CfkCell, RodSmoothLagrangian<'_, M>> {
        let grid = self.grid;
        induced_lagrangian(
            self.smooth(),
            QuadratureRule::vertex(2, 0),
            Box::new(move |cell: &CfkCell| {
                cfk_vertices(cell)
                    .iter()
                    .map(|v| {
                        let (s, t) = grid.position(v[0], v[1]);
                        DVector::from_vec(vec![s, t])
                    })
                    .collect()
            }),
        )
    }
}

fn configs3(configs: &[FiberPoint]) -> Result<[RodConfig; 3]> {
    if configs.len() != 3 {
        return Err(Error::InvalidArgument(format!("a face has 3 vertices, got {}", configs.len())));
    }
    Ok([
        RodConfig::from_point(&configs[0])?,
        RodConfig::from_point(&configs[1])?,
        RodConfig::from_point(&configs[2])?,
    ])
}

impl<M: Material> LagrangianDensity<CfkCell> for RodModel<M> {
    fn eval(&self, cell: &CfkCell, configs: &[FiberPoint]) -> Result<f64> {
        self.face_lagrangian(&FaceIndex::from_cell(cell)?, &configs3(configs)?)
    }

    fn diff(&self, cell: &CfkCell, configs: &[FiberPoint]) -> Result<Vec<Covector>> {
        let d = self.face_dlagrangian(&FaceIndex::from_cell(cell)?, &configs3(configs)?)?;
        Ok(d.total().iter().map(|c| c.to_vec()).collect())
    }
}

/// Smooth rod Lagrangian density
/// `½(ρ‖∂_t r‖² + ωᵗJω − (Rᵗ∂_s r − e)ᵗC₁(Rᵗ∂_s r − e) − ΩᵗC₂Ω − P(s, r))`
/// with `Ω = R⁻¹∂_s R`, `ω = R⁻¹∂_t R`; the jet has rows `(r, R)` and columns `(s, t)`.
pub struct RodSmoothLagrangian<'a, M> {
    model: &'a RodModel<M>,
}

impl<M: Material> SmoothLagrangian for RodSmoothLagrangian<'_, M> {
    fn density(&self, x: &DVector<f64>, y: &FiberPoint, jet: &DMatrix<f64>) -> f64 {
        let mat = &self.model.material;
        let s = x[0];
        let (r, rot) = y.rod_parts().expect("rod configuration");
        let col = |k: usize, off: usize| Vector3::new(jet[(off, k)], jet[(off + 1, k)], jet[(off + 2, k)]);
        let (rs, rt, om_s, om_t) = (col(0, 0), col(1, 0), col(0, 3), col(1, 3));
        let rho = mat.rho(s);
        let u = rot.transpose().apply(&rs) - mat.strain(s);
        let p = self.model.potential.eval(s, &r, rho).0;
        0.5 * (rho * rt.norm_squared() + om_t.dot(&(mat.inertia(s) * om_t))
            - u.dot(&(mat.c1(s) * u))
            - om_s.dot(&(mat.c2(s) * om_s))
            - p)
    }
}

/// The six Euclidean generators: translations along and rotations about the axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Translation(usize),
    Rotation(usize),
}

impl Generator {
    pub const ALL: [Generator; 6] = [
        Generator::Translation(0),
        Generator::Translation(1),
        Generator::Translation(2),
        Generator::Rotation(0),
        Generator::Rotation(1),
        Generator::Rotation(2),
    ];

    /// Infinitesimal generator at a configuration: `(a, 0)` for a translation,
    /// `(ξ×r, Rᵗξ)` for a rotation about `ξ`.
    pub fn tangent(&self, y: &FiberPoint) -> Tangent {
        let (r, rot) = y.rod_parts().expect("rod configuration");
        match *self {
            Generator::Translation(k) => {
                let mut t = vec![0.0; 6];
                t[k] = 1.0;
                t
            }
            Generator::Rotation(k) => {
                let xi = Vector3::ith(k, 1.0);
                let dr = xi.cross(&r);
                let dw = rot.transpose().apply(&xi);
                vec![dr.x, dr.y, dr.z, dw.x, dw.y, dw.z]
            }
        }
    }

    pub fn label(&self) -> String {
        let axis = ["x", "y", "z"];
        match self {
            Generator::Translation(k) => format!("translation-{}", axis[*k]),
            Generator::Rotation(k) => format!("rotation-{}", axis[*k]),
        }
    }
}

/// Where the rod lives: a closed (periodic) rod or an open strip of the plane.
#[derive(Clone, Debug)]
pub enum RodDomain {
    Periodic(PeriodicCfkComplex),
    Open(CfkComplex),
}

impl RodDomain {
    pub fn for_grid(grid: &RodGrid) -> Result<Self> {
        Ok(match grid.s_period {
            Some(m) => RodDomain::Periodic(PeriodicCfkComplex::rod(m)?),
            None => RodDomain::Open(CfkComplex::new(2)),
        })
    }

    pub fn vertex(&self, i: i64, j: i64) -> CfkCell {
        match self {
            RodDomain::Periodic(p) => p.canonical_vertex(&[i, j]),
            RodDomain::Open(_) => CfkCell::vertex(&[i, j]),
        }
    }

    pub fn face(&self, f: &FaceIndex) -> CfkCell {
        match self {
            RodDomain::Periodic(p) => p.canonical(&f.cell()),
            RodDomain::Open(_) => f.cell(),
        }
    }

    /// Integration flow `v ↦ v + (1, 1)`.
    pub fn step(&self, v: &CfkCell) -> CfkCell {
        let c = v.coords();
        self.vertex(c[0] + 1, c[1] + 1)
    }
}

impl CellComplex for RodDomain {
    type Cell = CfkCell;

    fn dimension(&self) -> usize {
        2
    }
    fn cell_dim(&self, cell: &CfkCell) -> usize {
        cell.dim()
    }
    fn incidence(&self, upper: &CfkCell, lower: &CfkCell) -> crate::complex::Incidence {
        match self {
            RodDomain::Periodic(p) => p.incidence(upper, lower),
            RodDomain::Open(c) => c.incidence(upper, lower),
        }
    }
    fn down_adjacent(&self, cell: &CfkCell) -> Vec<CfkCell> {
        match self {
            RodDomain::Periodic(p) => p.down_adjacent(cell),
            RodDomain::Open(c) => c.down_adjacent(cell),
        }
    }
    fn up_adjacent(&self, cell: &CfkCell) -> Vec<CfkCell> {
        match self {
            RodDomain::Periodic(p) => p.up_adjacent(cell),
            RodDomain::Open(c) => c.up_adjacent(cell),
        }
    }
    fn adherent_vertices(&self, cell: &CfkCell) -> Vec<CfkCell> {
        match self {
            RodDomain::Periodic(p) => p.adherent_vertices(cell),
            RodDomain::Open(c) => c.adherent_vertices(cell),
        }
    }
    fn star(&self, vertex: &CfkCell) -> Vec<CfkCell> {
        match self {
            RodDomain::Periodic(p) => p.star(vertex),
            RodDomain::Open(c) => c.star(vertex),
        }
    }
}

/// Vertices `(i, j)` with `i + j = d` covering the rod: all `M` classes of a
/// periodic rod, or `0 ≤ i − j ≤ 2·length` for an open one.
pub fn diagonal_vertices(domain: &RodDomain, d: i64, length: usize) -> Vec<CfkCell> {
    let hi = match domain {
        RodDomain::Periodic(_) => 2 * length as i64 - 1,
        RodDomain::Open(_) => 2 * length as i64,
    };
    (0..=hi)
        .filter(|p| (p - d).rem_euclid(2) == 0)
        .map(|p| domain.vertex((d + p) / 2, (d - p) / 2))
        .collect()
}

fn config_at(band: &DiscreteField<CfkCell>, v: &CfkCell) -> Result<RodConfig> {
    RodConfig::from_point(band.get(v)?)
}

/// Solves the discrete Euler–Lagrange equation at `v = (i, j)` for the
/// configuration at `(i+1, j+1)`: a linear system for `Δ⁰²r`, then Newton on
/// `Δ⁰²R` with the analytic Jacobian. `guess` is the initial `Δ⁰²R`.
pub fn rod_step<M: Material>(
    domain: &RodDomain,
    band: &DiscreteField<CfkCell>,
    v: &CfkCell,
    model: &RodModel<M>,
    opts: &SolverOptions,
    guess: Option<Vector3<f64>>,
) -> Result<RodConfig> {
    let flow = |c: &CfkCell| domain.step(c);
    let mu = momentum(domain, band, v, &flow, model)?;
    let mu_r = Vector3::new(mu.covector[0], mu.covector[1], mu.covector[2]);
    let mu_w = Vector3::new(mu.covector[3], mu.covector[4], mu.covector[5]);
    let (i, j) = (v.coords()[0], v.coords()[1]);
    let c0 = config_at(band, v)?;
    let c1p = config_at(band, &domain.vertex(i + 1, j))?;
    let c1m = config_at(band, &domain.vertex(i, j + 1))?;
    let faces = [
        (FaceIndex::new(i, j, FaceSign::Plus), c1p),
        (FaceIndex::new(i, j, FaceSign::Minus), c1m),
    ];
    let candidate = |b: &Vector3<f64>, w: &Vector3<f64>| RodConfig::new(c0.r + b, c0.rot.retract(w));
    let legendre = |b: &Vector3<f64>, w: &Vector3<f64>| -> Result<VertexCovector> {
        let c2 = candidate(b, w);
        let mut acc = VertexCovector::zero();
        for (face, c1) in &faces {
            acc += model.face_dlagrangian(face, &[c0, *c1, c2])?.total()[0];
        }
        Ok(acc)
    };

    // ℝ³ part: affine in Δ⁰²r and independent of Δ⁰²R.
    let w0 = guess.unwrap_or_else(Vector3::zeros);
    let f0 = legendre(&Vector3::zeros(), &w0)?.r;
    let mut lin = Matrix3::zeros();
    for k in 0..3 {
        lin.set_column(k, &(legendre(&Vector3::ith(k, 1.0), &w0)?.r - f0));
    }
    let lin_d = DMatrix::from_iterator(3, 3, lin.iter().cloned());
    let b = newton_direction(&lin_d, &DVector::from_iterator(3, (f0 - mu_r).iter().cloned()))?;
    let b = Vector3::new(b[0], b[1], b[2]);

    // Rotation part: Newton on Δ⁰²R.
    let (ds, dt) = (model.grid.ds, model.grid.dt);
    let scale = 1.0 + mu_w.norm();
    let mut w = w0;
    let mut res = legendre(&b, &w)?.rot - mu_w;
    let mut iters = 0;
    while res.norm() > opts.tolerance * scale {
        if iters == opts.max_iter {
            return Err(Error::NewtonFailed {
                iterations: iters,
                residual: res.norm(),
            });
        }
        let mut jac = Matrix3::zeros();
        for (face, c1) in &faces {
            let s0 = face.s0(&model.grid);
            let sg = face.sign.sigma();
            let a = deltas(&c0, c1)?.1;
            let inertia = model.material.inertia(s0);
            let c2m = model.material.c2(s0);
            let jw = inertia * w;
            jac -= (ds / (4.0 * dt)) * (dlog(&w)? * inertia + dlog_jacobian(&w, &jw)?);
            let q = (2.0 * a - w) / (sg * ds);
            let c2q = c2m * q;
            jac += sg * (dt / 4.0)
                * (-dlog_jacobian(&w, &c2q)? - (2.0 * dlog(&a)? - dlog(&w)?) * c2m / (sg * ds));
        }
        let jd = DMatrix::from_iterator(3, 3, jac.iter().cloned());
        let step = newton_direction(&jd, &DVector::from_iterator(3, res.iter().cloned()))?;
        w += Vector3::new(step[0], step[1], step[2]);
        res = legendre(&b, &w)?.rot - mu_w;
        iters += 1;
    }
    let out = candidate(&b, &w);
    Ok(RodConfig::new(out.r, out.rot.reorthonormalized(opts.reorthonormalize_above)))
}

/// Initial data on the four diagonals `k₀−2 … k₀+1`.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// Every vertex at `(r, R)`.
    Rest { r: Vector3<f64>, rot: Rotation },
    /// Rigid motion `r = r₀ + w·t`, `R = I`.
    Translating { w: Vector3<f64> },
    /// Rest (or translation by `w`) plus seeded uniform noise of the given
    /// amplitude on positions and on rotation vectors.
    Perturbed { amplitude: f64, seed: u64, w: Vector3<f64> },
    /// Explicit configurations keyed by `(i, j)`.
    Table(Vec<((i64, i64), RodConfig)>),
}

/// First front solved by [`simulate`]; the initial band covers diagonals 0…3.
pub const FIRST_FRONT: i64 = 2;

/// Builds the initial band for [`simulate`].
pub fn initial_band(
    cond: &InitialCondition,
    grid: &RodGrid,
    length: usize,
) -> Result<DiscreteField<CfkCell>> {
    let domain = RodDomain::for_grid(grid)?;
    let length = grid.s_period.unwrap_or(length);
    let mut band = DiscreteField::new();
    let mut rng = match cond {
        InitialCondition::Perturbed { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    if let InitialCondition::Table(rows) = cond {
        for ((i, j), c) in rows {
            band.insert(domain.vertex(*i, *j), c.to_point());
        }
        return Ok(band);
    }
    for d in FIRST_FRONT - 2..=FIRST_FRONT + 1 {
        for v in diagonal_vertices(&domain, d, length) {
            let (_, t) = grid.position(v.coords()[0], v.coords()[1]);
            let c = match cond {
                InitialCondition::Rest { r, rot } => RodConfig::new(*r, *rot),
                InitialCondition::Translating { w } => RodConfig::new(w * t, Rotation::identity()),
                InitialCondition::Perturbed { amplitude, w, .. } => {
                    let rng = rng.as_mut().expect("seeded");
                    let mut noise = || Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0) * amplitude);
                    let dr = noise();
                    let dw = noise();
                    RodConfig::new(w * t + dr, so3::exp(&dw))
                }
                InitialCondition::Table(_) => unreachable!(),
            };
            band.insert(v, c.to_point());
        }
    }
    Ok(band)
}

/// One row of the conservation report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationRow {
    /// Diagonal `i + j` just computed.
    pub diagonal: i64,
    /// Noether currents for [`Generator::ALL`] on the region computed so far.
    pub currents: [f64; 6],
    /// Whether each generator passed `check_symmetry` on the new faces.
    pub symmetric: [bool; 6],
    /// Largest `‖EL_v‖` over the front just solved.
    pub max_el_residual: f64,
    /// Defects `∑ dL(D)` per generator (zero for symmetries).
    #[serde(skip)]
    pub defects: [f64; 6],
    /// Interior Euler–Lagrange sums per generator.
    #[serde(skip)]
    pub interior_el: [f64; 6],
}

/// Output of [`simulate`].
#[derive(Clone, Debug)]
pub struct Simulation {
    pub domain: RodDomain,
    pub field: DiscreteField<CfkCell>,
    pub report: Vec<ConservationRow>,
}

/// Faces with base diagonal in `[lo, hi]` whose vertices all carry data.
pub fn computed_region(
    domain: &RodDomain,
    field: &DiscreteField<CfkCell>,
    lo: i64,
    hi: i64,
) -> Region<CfkCell> {
    let mut region = Region::new();
    for v in field.values.keys() {
        let c = v.coords();
        if !(lo..=hi).contains(&(c[0] + c[1])) {
            continue;
        }
        for sign in [FaceSign::Plus, FaceSign::Minus] {
            let face = domain.face(&FaceIndex::new(c[0], c[1], sign));
            if domain.adherent_vertices(&face).iter().all(|u| field.contains(u)) {
                region.insert(face);
            }
        }
    }
    region
}

/// Advances the rod `steps` diagonals from an initial band, recording Noether
/// currents and residuals. The first front is the diagonal below the band's
/// newest one (`FIRST_FRONT` for bands from [`initial_band`]), and currents are
/// measured on the faces computed from the four diagonals preceding it.
///
/// Every vertex of a front is solved independently from the same band snapshot
/// (in parallel) and results are merged in vertex order, so the output is
/// deterministic.
pub fn simulate<M: Material>(
    initial: &DiscreteField<CfkCell>,
    steps: usize,
    model: &RodModel<M>,
    opts: &SolverOptions,
) -> Result<Simulation> {
    let domain = RodDomain::for_grid(&model.grid)?;
    let mut field = initial.clone();
    let mut report = Vec::with_capacity(steps);
    let gens: Vec<Box<dyn Fn(&FiberPoint) -> Tangent + Sync>> = Generator::ALL
        .iter()
        .map(|g| {
            let g = *g;
            Box::new(move |y: &FiberPoint| g.tangent(y)) as Box<dyn Fn(&FiberPoint) -> Tangent + Sync>
        })
        .collect();
    let gen_refs: Vec<&(dyn Fn(&FiberPoint) -> Tangent + Sync)> = gens.iter().map(|b| b.as_ref()).collect();

    // The first front is the diagonal just below the newest one in the band.
    let first = initial
        .values
        .keys()
        .map(|v| v.coords()[0] + v.coords()[1])
        .max()
        .ok_or_else(|| Error::InvalidArgument("empty initial band".into()))?
        - 1;
    for step in 0..steps {
        let k = first + step as i64;
        let front: Vec<CfkCell> = field
            .values
            .keys()
            .filter(|v| v.coords()[0] + v.coords()[1] == k)
            .filter(|v| {
                domain
                    .star(v)
                    .iter()
                    .flat_map(|b| domain.adherent_vertices(b))
                    .all(|u| u == domain.step(v) || field.contains(&u))
            })
            .cloned()
            .collect();
        if front.is_empty() {
            return Err(Error::InvalidArgument(format!("nothing to solve on diagonal {k}")));
        }
        let solved: Vec<RodConfig> = front
            .par_iter()
            .map(|v| {
                let c = v.coords();
                let prev = domain.vertex(c[0] - 1, c[1] - 1);
                let guess = match (field.get(&prev), field.get(v)) {
                    (Ok(p), Ok(y)) => {
                        let (a, b) = (RodConfig::from_point(p)?, RodConfig::from_point(y)?);
                        deltas(&a, &b).ok().map(|d| d.1)
                    }
                    _ => None,
                };
                rod_step(&domain, &field, v, model, opts, guess).map_err(|e| Error::at_vertex(v, e))
            })
            .collect::<Result<Vec<_>>>()?;
        for (v, c) in front.iter().zip(solved) {
            field.insert(domain.step(v), c.to_point());
        }

        let mut max_el: f64 = 0.0;
        for v in &front {
            let el = el_form(&domain, &field, v, model).map_err(|e| Error::at_vertex(v, e))?;
            max_el = max_el.max(el.iter().map(|x| x * x).sum::<f64>().sqrt());
        }

        let region = computed_region(&domain, &field, first - 2, k);
        let balances = noether_balances(&domain, &field, &gen_refs, &region, model)?;
        let newest: Vec<(CfkCell, Vec<FiberPoint>)> = region
            .iter()
            .filter(|b| b.base()[0] + b.base()[1] == k)
            .map(|b| Ok((b.clone(), gather(&domain, &field, b)?.1)))
            .collect::<Result<_>>()?;
        let mut row = ConservationRow {
            diagonal: k + 2,
            currents: [0.0; 6],
            symmetric: [false; 6],
            max_el_residual: max_el,
            defects: [0.0; 6],
            interior_el: [0.0; 6],
        };
        for (g, (gen, bal)) in Generator::ALL.iter().zip(&balances).enumerate() {
            row.currents[g] = bal.boundary;
            row.defects[g] = bal.defect;
            row.interior_el[g] = bal.interior_el;
            row.symmetric[g] = check_symmetry(|y: &FiberPoint| gen.tangent(y), model, &newest);
        }
        report.push(row);
    }
    Ok(Simulation { domain, field, report })
}

/// Vertices of a field sorted by diagonal and then by `i`.
pub fn trajectory_order(field: &DiscreteField<CfkCell>) -> Vec<&CfkCell> {
    let mut keys: Vec<&CfkCell> = field.values.keys().collect();
    keys.sort_by_key(|v| (v.coords()[0] + v.coords()[1], v.coords()[0]));
    keys
}

/// Vertices of `region` in a set, convenient for tests and diagnostics.
pub fn region_of_faces(domain: &RodDomain, faces: &[FaceIndex]) -> Region<CfkCell> {
    faces.iter().map(|f| domain.face(f)).collect::<BTreeSet<_>>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::finite_difference_diff;

    fn random_config(rng: &mut ChaCha8Rng, scale: f64) -> RodConfig {
        let r = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0) * scale);
        RodConfig::new(r, so3::exp(&v))
    }

    fn model(potential: Potential) -> RodModel {
        let c1 = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.5, 0.1, 0.0, 0.1, 1.0);
        let c2 = Matrix3::new(1.0, 0.0, 0.2, 0.0, 0.8, 0.0, 0.2, 0.0, 1.3);
        let mat = UniformMaterial::new(1.3, Vector3::new(0.5, 0.7, 0.9), c1, c2, Vector3::new(0.0, 0.0, 0.2)).unwrap();
        RodModel::new(RodGrid::new(0.2, 0.05, None).unwrap(), mat, potential)
    }

    #[test]
    fn deltas_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_config(&mut rng, 0.5);
        let b = random_config(&mut rng, 0.5);
        assert_eq!(deltas(&a, &a).unwrap(), (Vector3::zeros(), Vector3::zeros()));
        let (dr, dw) = deltas(&a, &b).unwrap();
        let (er, ew) = deltas(&b, &a).unwrap();
        assert!((dr + er).norm() < 1e-15 && (dw + ew).norm() < 1e-12);
        let tr = a.rot.transpose().compose(&b.rot).trace();
        assert!((1.0 + 2.0 * dw.norm().cos() - tr).abs() < 1e-12);
    }

    #[test]
    fn rest_face_is_zero() {
        let mut m = model(Potential::None);
        m.material.strain = Vector3::zeros();
        let c = RodConfig::new(Vector3::new(1.0, 2.0, 3.0), so3::exp(&Vector3::new(0.1, 0.2, 0.3)));
        for sign in [FaceSign::Plus, FaceSign::Minus] {
            let f = FaceIndex::new(3, 1, sign);
            assert_eq!(m.face_lagrangian(&f, &[c, c, c]).unwrap(), 0.0);
            for t in m.face_dlagrangian(&f, &[c, c, c]).unwrap().total() {
                assert!(t.r.norm() + t.rot.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_translation_energy() {
        let mut m = model(Potential::None);
        m.material.strain = Vector3::zeros();
        let w = Vector3::new(0.3, -0.2, 0.5);
        let r0 = Vector3::new(1.0, 0.0, 0.0);
        let dt = m.grid.dt;
        let c = [
            RodConfig::new(r0, Rotation::identity()),
            RodConfig::new(r0 + w * dt / 2.0, Rotation::identity()),
            RodConfig::new(r0 + w * dt, Rotation::identity()),
        ];
        let t = m.face_terms(&FaceIndex::new(0, 0, FaceSign::Plus), &c).unwrap();
        let expect = 0.5 * m.material.rho * w.norm_squared() * m.grid.face_area();
        assert!((t[0] - expect).abs() < 1e-15);
        assert!(t[2].abs() < 1e-30);
    }

    #[test]
    fn analytic_terms_match_finite_differences() {
        let m = model(Potential::Linear(Vector3::new(0.0, 0.0, -9.8)));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            let sign = if trial % 2 == 0 { FaceSign::Plus } else { FaceSign::Minus };
            let f = FaceIndex::new(trial, -trial / 2, sign);
            let c = [random_config(&mut rng, 0.6), random_config(&mut rng, 0.6), random_config(&mut rng, 0.6)];
            let d = m.face_dlagrangian(&f, &c).unwrap();
            for (k, _) in RodTerm::ALL.iter().enumerate() {
                let term = crate::variational::FnLagrangian(|_: &(), p: &[FiberPoint]| {
                    let cs = configs3(p).unwrap();
                    m.face_terms(&f, &cs).unwrap()[k]
                });
                let pts: Vec<FiberPoint> = c.iter().map(|x| x.to_point()).collect();
                let fd = finite_difference_diff(&term, &(), &pts, 1e-6).unwrap();
                for a in 0..3 {
                    let an = d.terms[k][a].to_vec();
                    for (x, y) in an.iter().zip(&fd[a]) {
                        assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "term {k} vertex {a}: {x} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn induced_matches_closed_form() {
        let m = model(Potential::Linear(Vector3::new(0.1, 0.0, -1.0)));
        let induced = m.induced();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let sign = if trial % 2 == 0 { FaceSign::Plus } else { FaceSign::Minus };
            let f = FaceIndex::new(trial - 5, 2, sign);
            let c = [random_config(&mut rng, 0.4), random_config(&mut rng, 0.4), random_config(&mut rng, 0.4)];
            let pts: Vec<FiberPoint> = c.iter().map(|x| x.to_point()).collect();
            let a = m.face_lagrangian(&f, &c).unwrap();
            let b = induced.eval(&f.cell(), &pts).unwrap();
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn material_validation() {
        let mut c1 = Matrix3::identity();
        c1[(0, 1)] = 0.5;
        let err = UniformMaterial::new(1.0, Vector3::new(1.0, 1.0, 1.0), c1, Matrix3::identity(), Vector3::zeros());
        assert_eq!(err, Err(Error::InvalidMaterial("material.C1 not symmetric".into())));
        let bad = Potential::Custom(Arc::new(|_, r: &Vector3<f64>| (r.x * r.x, Vector3::new(1.0, 0.0, 0.0))));
        assert!(bad.validate(&[(0.0, Vector3::new(2.0, 0.0, 0.0))]).is_err());
        let good = Potential::Custom(Arc::new(|_, r: &Vector3<f64>| (r.x * r.x, Vector3::new(2.0 * r.x, 0.0, 0.0))));
        assert!(good.validate(&[(0.0, Vector3::new(2.0, 0.0, 0.0))]).is_ok());
    }

    fn periodic_model(m: usize, potential: Potential) -> RodModel {
        let mut mat = UniformMaterial::unit();
        mat.c1 = Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 5.0));
        RodModel::new(RodGrid::new(0.1, 0.02, Some(m)).unwrap(), mat, potential)
    }

    #[test]
    fn rest_and_translation_propagate() {
        let m = periodic_model(6, Potential::None);
        let rot = so3::exp(&Vector3::new(0.2, -0.1, 0.4));
        let band = initial_band(&InitialCondition::Rest { r: Vector3::new(1.0, 2.0, 3.0), rot }, &m.grid, 6).unwrap();
        let sim = simulate(&band, 4, &m, &SolverOptions::default()).unwrap();
        for y in sim.field.values.values() {
            let c = RodConfig::from_point(y).unwrap();
            assert!((c.r - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-13);
            assert!((c.rot.matrix() - rot.matrix()).amax() < 1e-13);
        }
        let w = Vector3::new(0.5, -1.0, 0.25);
        let band = initial_band(&InitialCondition::Translating { w }, &m.grid, 6).unwrap();
        let sim = simulate(&band, 4, &m, &SolverOptions::default()).unwrap();
        for (v, y) in &sim.field.values {
            let (_, t) = m.grid.position(v.coords()[0], v.coords()[1]);
            let c = RodConfig::from_point(y).unwrap();
            assert!((c.r - w * t).norm() < 1e-12);
        }
        assert_eq!(sim.report.len(), 4);
        let none = simulate(&band, 0, &m, &SolverOptions::default()).unwrap();
        assert_eq!(none.field, band);
        assert!(none.report.is_empty());
    }

    #[test]
    fn step_zeroes_el_near_rest() {
        let m = periodic_model(5, Potential::Linear(Vector3::new(0.0, 0.0, -1.0)));
        let cond = InitialCondition::Perturbed {
            amplitude: 0.05,
            seed: 11,
            w: Vector3::zeros(),
        };
        let band = initial_band(&cond, &m.grid, 5).unwrap();
        let sim = simulate(&band, 6, &m, &SolverOptions::default()).unwrap();
        for row in &sim.report {
            assert!(row.max_el_residual < 1e-10, "{row:?}");
            assert_eq!(row.symmetric, [true, true, false, false, false, true]);
        }
    }

    #[test]
    fn open_rod_front_shrinks() {
        let mut m = periodic_model(4, Potential::None);
        m.grid.s_period = None;
        let cond = InitialCondition::Perturbed {
            amplitude: 0.02,
            seed: 5,
            w: Vector3::zeros(),
        };
        let band = initial_band(&cond, &m.grid, 4).unwrap();
        let sim = simulate(&band, 2, &m, &SolverOptions::default()).unwrap();
        assert!(sim.field.len() > band.len());
        assert!(sim.report.iter().all(|r| r.max_el_residual < 1e-10));
    }
}
