//! Geometry of the rotation group SO(3).
//!
//! The metric is the bi-invariant one given by half the Frobenius inner product,
//! `<A, B> = ½ tr(AᵗB)`, under which `hat: ℝ³ → so(3)` is an isometry. Tangent
//! vectors at `R` are identified with `ℝ³` through left translation: a variation
//! `δR` corresponds to `vee(Rᵗ δR)`, i.e. the curve `R·exp(ε ê)`.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};

/// Below this angle the trigonometric coefficients of exp are evaluated by series.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Below this angle the dlog coefficient `c(α)` and its derivative use series.
/// The closed forms lose roughly `ε/α²` relative accuracy to cancellation, so the
/// switch happens much later than for the exp coefficients.
const DLOG_SERIES_ANGLE: f64 = 0.25;

/// Trace threshold below which a rotation is treated as a half turn.
const HALF_TURN_TRACE_MARGIN: f64 = 1e-9;

/// Minimum distance to π required by [`dlog`].
const DLOG_PI_MARGIN: f64 = 1e-6;

/// A rotation matrix, `RᵗR = Id`, `det R = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    m: Matrix3<f64>,
}

impl Rotation {
    /// Tolerance for accepting a matrix as a rotation.
    pub const TOLERANCE: f64 = 1e-10;

    pub fn identity() -> Self {
        Rotation {
            m: Matrix3::identity(),
        }
    }

    /// Checked constructor: rejects matrices that are not orthonormal with
    /// determinant one (to within [`Rotation::TOLERANCE`]).
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = orthogonality_defect(&m);
        if !defect.is_finite() || defect > Self::TOLERANCE || (m.determinant() - 1.0).abs() > Self::TOLERANCE
        {
            return Err(Error::NotRotation(defect));
        }
        Ok(Rotation { m })
    }

    /// Wraps a matrix that is known to be a rotation up to rounding.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation { m }
    }

    /// Rotation by `angle` about the (not necessarily unit) `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        exp(&(axis.normalize() * angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn transpose(&self) -> Rotation {
        Rotation { m: self.m.transpose() }
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation { m: self.m * other.m }
    }

    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.m * x
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// `‖RᵗR − Id‖_max`.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.m)
    }

    /// Projects back onto SO(3) (polar decomposition) when the orthogonality
    /// defect exceeds `threshold`; returns `self` unchanged otherwise.
    pub fn reorthonormalized(&self, threshold: f64) -> Rotation {
        if self.orthogonality_defect() <= threshold {
            return *self;
        }
        let svd = self.m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut p = u * v_t;
        if p.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            p = u2 * v_t;
        }
        Rotation { m: p }
    }

    /// Right perturbation `R·exp(ê)`.
    pub fn retract(&self, e: &Vector3<f64>) -> Rotation {
        self.compose(&exp(e))
    }
}

fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// `hat(v)·e = v × e`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]; rejects matrices that are not skew within 1e-12.
pub fn vee(a: &Matrix3<f64>) -> Result<Vector3<f64>> {
    if (a + a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
        return Err(Error::NotSkew);
    }
    Ok(vee_unchecked(a))
}

/// Extracts the skew part's axial vector without checking skewness.
fn vee_unchecked(a: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

/// `sin α / α`.
pub fn sinc(alpha: f64) -> f64 {
    if alpha.abs() < SMALL_ANGLE {
        let a2 = alpha * alpha;
        1.0 - a2 / 6.0 * (1.0 - a2 / 20.0 * (1.0 - a2 / 42.0))
    } else {
        alpha.sin() / alpha
    }
}

/// `(1 − cos α) / α²`.
pub fn cosc(alpha: f64) -> f64 {
    if alpha.abs() < SMALL_ANGLE {
        let a2 = alpha * alpha;
        0.5 - a2 / 24.0 * (1.0 - a2 / 30.0 * (1.0 - a2 / 56.0))
    } else {
        let h = (0.5 * alpha).sin();
        2.0 * h * h / (alpha * alpha)
    }
}

/// Rodrigues' formula.
pub fn exp(v: &Vector3<f64>) -> Rotation {
    let alpha = v.norm();
    let vh = hat(v);
    let m = Matrix3::identity() + vh * sinc(alpha) + vh * vh * cosc(alpha);
    Rotation { m }
}

/// Group logarithm: the unique `v` with `‖v‖ < π` and `exp v = R`.
pub fn log(r: &Rotation) -> Result<Vector3<f64>> {
    let m = r.matrix();
    let tr = m.trace();
    if !tr.is_finite() || tr <= -1.0 + HALF_TURN_TRACE_MARGIN {
        return Err(Error::CutLocus);
    }
    // w = sin(α)·n, cos α from the trace.
    let w = vee_unchecked(m);
    let s = w.norm();
    let c = (0.5 * (tr - 1.0)).clamp(-1.0, 1.0);
    let alpha = s.atan2(c);
    if c < 0.0 && s < 0.5 {
        // Close to a half turn the skew part is small; recover the axis from
        // the symmetric part (1 − cos α)·n nᵗ instead.
        let b = 0.5 * (m + m.transpose()) - Matrix3::identity() * c;
        let k = (0..3)
            .max_by(|&i, &j| b[(i, i)].partial_cmp(&b[(j, j)]).unwrap())
            .unwrap();
        let mut n: Vector3<f64> = b.column(k).into_owned();
        n /= n.norm();
        if n.dot(&w) < 0.0 {
            n = -n;
        }
        return Ok(n * alpha);
    }
    if alpha < SMALL_ANGLE {
        // α / sin α series
        let a2 = alpha * alpha;
        return Ok(w * (1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0));
    }
    Ok(w * (alpha / s))
}

/// Point at parameter `s` on the minimizing geodesic from `ri` (s=0) to `rj` (s=1).
pub fn geodesic(ri: &Rotation, rj: &Rotation, s: f64) -> Result<Rotation> {
    let d = log(&ri.transpose().compose(rj))?;
    Ok(ri.compose(&exp(&(d * s))))
}

/// Riemannian distance `‖log(R_iᵗ R_j)‖`.
pub fn distance(ri: &Rotation, rj: &Rotation) -> Result<f64> {
    Ok(log(&ri.transpose().compose(rj))?.norm())
}

/// Coefficient `c(α) = (2 − 2cos α − α sin α) / (α² (2 − 2cos α))` of dlog.
pub fn dlog_coefficient(alpha: f64) -> f64 {
    let a = alpha.abs();
    if a < DLOG_SERIES_ANGLE {
        let a2 = a * a;
        1.0 / 12.0
            + a2 * (1.0 / 720.0
                + a2 * (1.0 / 30240.0 + a2 * (1.0 / 1209600.0 + a2 / 47900160.0)))
    } else {
        // c = 1/α² − cot(α/2)/(2α), with cot(α/2) evaluated directly.
        1.0 / (a * a) - 1.0 / ((0.5 * a).tan() * 2.0 * a)
    }
}

/// `c'(α) / α`, used for the derivative of dlog with respect to its argument.
fn dlog_coefficient_derivative_over_alpha(alpha: f64) -> f64 {
    let a = alpha.abs();
    if a < 0.5 {
        let a2 = a * a;
        // ∑ (2k−2)·a_k·α^{2k−4}, a_k the series coefficients of c.
        2.0 / 720.0
            + a2 * (4.0 / 30240.0
                + a2 * (6.0 / 1209600.0
                    + a2 * (8.0 / 47900160.0
                        + a2 * (10.0 * 691.0 / 1307674368000.0 + a2 * 12.0 * 7.0 / (6.0 * 87178291200.0)))))
    } else {
        let h = 0.5 * a;
        let cot = 1.0 / h.tan();
        let sin_h = h.sin();
        let dc = -2.0 / (a * a * a) + cot / (2.0 * a * a) + 1.0 / (4.0 * a * sin_h * sin_h);
        dc / a
    }
}

/// Derivative of the logarithm: `dlog v = (c(‖v‖) v̂ + ½ Id) v̂ + Id`.
///
/// It is the inverse of the left-trivialized differential of exp at `v`, so that
/// `log(exp(v)·exp(ε ê)) = v + ε·dlog(v)·e + O(ε²)`.
pub fn dlog(v: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let alpha = v.norm();
    if !alpha.is_finite() || alpha >= std::f64::consts::PI - DLOG_PI_MARGIN {
        return Err(Error::NearCutLocus(alpha));
    }
    let vh = hat(v);
    Ok((vh * dlog_coefficient(alpha) + Matrix3::identity() * 0.5) * vh + Matrix3::identity())
}

/// Left-trivialized differential of exp at `v`:
/// `Id − ((1 − cos α)/α) n̂ + (1 − sin α/α) n̂²`, written in terms of `v̂`.
pub fn dexp(v: &Vector3<f64>) -> Matrix3<f64> {
    let alpha = v.norm();
    let vh = hat(v);
    // (1 − sin α/α)/α² by series when small.
    let third = if alpha < 1e-3 {
        let a2 = alpha * alpha;
        1.0 / 6.0 - a2 / 120.0 + a2 * a2 / 5040.0
    } else {
        (1.0 - alpha.sin() / alpha) / (alpha * alpha)
    };
    Matrix3::identity() - vh * cosc(alpha) + vh * vh * third
}

/// Jacobian with respect to `v` of the map `v ↦ dlog(v)·x`.
pub fn dlog_jacobian(v: &Vector3<f64>, x: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let alpha = v.norm();
    if !alpha.is_finite() || alpha >= std::f64::consts::PI - DLOG_PI_MARGIN {
        return Err(Error::NearCutLocus(alpha));
    }
    let c = dlog_coefficient(alpha);
    let dc = dlog_coefficient_derivative_over_alpha(alpha);
    // d/dv [½ v×x] = −½ x̂;  d/dv [v×(v×x)] = (v·x) Id + v xᵗ − 2 x vᵗ.
    let vvx = v.cross(&v.cross(x));
    let dtriple = Matrix3::identity() * v.dot(x) + v * x.transpose() - x * v.transpose() * 2.0;
    Ok(-hat(x) * 0.5 + dtriple * c + vvx * v.transpose() * dc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn hat_is_cross_product() {
        let ez = Vector3::z();
        assert_eq!(hat(&ez) * Vector3::x(), Vector3::y());
        let v = Vector3::new(0.3, -1.2, 2.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        let h = hat(&v);
        assert!((0.5 * (h.transpose() * h).trace() - v.norm_squared()).abs() < 1e-14);
        assert_eq!(vee(&Matrix3::identity()), Err(Error::NotSkew));
    }

    #[test]
    fn exp_quarter_turn() {
        let r = exp(&(Vector3::z() * (PI / 2.0)));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(close(r.matrix(), &expected, 1e-15));
        assert_eq!(*exp(&Vector3::zeros()).matrix(), Matrix3::identity());
    }

    #[test]
    fn log_basics() {
        assert_eq!(log(&Rotation::identity()).unwrap(), Vector3::zeros());
        let half = exp(&(Vector3::x() * PI));
        assert_eq!(log(&half), Err(Error::CutLocus));
        let v = Vector3::new(0.1, 0.2, -0.3);
        let r = exp(&v);
        assert!((log(&r.transpose()).unwrap() + v).norm() < 1e-15);
    }

    #[test]
    fn log_near_half_turn_and_small_angles() {
        for &a in &[1e-9, 1e-6, 5e-5, 2e-4, 0.3, 2.7, 3.0, PI - 1e-3] {
            let v = Vector3::new(0.6, -0.48, 0.64).normalize() * a;
            let back = log(&exp(&v)).unwrap();
            assert!((back - v).norm() <= 1e-12 * (1.0 + a) * if a > 3.0 { 1e3 } else { 1.0 }, "{a}");
        }
    }

    #[test]
    fn dlog_at_zero_and_inverse() {
        assert_eq!(dlog(&Vector3::zeros()).unwrap(), Matrix3::identity());
        for &a in &[1e-7, 1e-3, 0.2, 0.26, 1.0, 2.5, 3.1] {
            let v = Vector3::new(-0.2, 0.9, 0.4).normalize() * a;
            let prod = dlog(&v).unwrap() * dexp(&v);
            assert!(close(&prod, &Matrix3::identity(), 1e-10), "{a}");
        }
        assert!(matches!(dlog(&(Vector3::x() * PI)), Err(Error::NearCutLocus(_))));
    }

    #[test]
    fn dlog_coefficient_is_continuous_at_switch() {
        let below = dlog_coefficient(DLOG_SERIES_ANGLE - 1e-12);
        let above = dlog_coefficient(DLOG_SERIES_ANGLE + 1e-12);
        assert!((below - above).abs() < 1e-14);
        let below = dlog_coefficient_derivative_over_alpha(0.5 - 1e-12);
        let above = dlog_coefficient_derivative_over_alpha(0.5 + 1e-12);
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn dlog_jacobian_matches_finite_differences() {
        let x = Vector3::new(0.3, -0.7, 1.1);
        for &a in &[0.0, 1e-3, 0.3, 0.6, 2.0] {
            let v = if a == 0.0 { Vector3::zeros() } else { Vector3::new(1.0, 2.0, -0.5).normalize() * a };
            let jac = dlog_jacobian(&v, &x).unwrap();
            let h = 1e-6;
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = h;
                let fd = (dlog(&(v + e)).unwrap() * x - dlog(&(v - e)).unwrap() * x) / (2.0 * h);
                assert!((fd - jac.column(k)).norm() < 1e-8, "a={a} k={k}");
            }
        }
    }

    #[test]
    fn reorthonormalize_restores_rotation() {
        let r = exp(&Vector3::new(0.4, 0.1, -0.9));
        let noisy = Rotation::from_matrix_unchecked(r.matrix() + Matrix3::repeat(1e-8));
        let fixed = noisy.reorthonormalized(1e-12);
        assert!(fixed.orthogonality_defect() < 1e-14);
        assert!(close(fixed.matrix(), r.matrix(), 1e-7));
    }
}
