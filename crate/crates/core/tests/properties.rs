//! Property-based checks of the structural invariants.

use dvft::cfk::{cfk_locate_with_weights, cfk_vertices, CfkCell, CfkComplex};
use dvft::complex::{boundary, Chain, Region};
use dvft::cubic::{CubicCell, CubicComplex};
use dvft::interp::{karcher_mean, BarycentricPoint, KarcherOptions, ProductMetric, QuadratureRule};
use dvft::rod::{FaceIndex, FaceSign, Generator, Potential, RodConfig, RodGrid, RodModel, UniformMaterial};
use dvft::so3;
use dvft::variational::{
    diagonal_step, el_form, legendre, momentum, noether_balance, DiscreteField, FiberPoint, PairwiseQuadratic,
};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-scale..scale).prop_map(Vector3::from)
}

fn small_rotvec() -> impl Strategy<Value = Vector3<f64>> {
    vec3(1.0).prop_map(|v| if v.norm() > 1.7 { v * (1.7 / v.norm()) } else { v })
}

fn top_cell(max_n: usize) -> impl Strategy<Value = CfkCell> {
    (1..=max_n)
        .prop_flat_map(|n| (prop::collection::vec(-5i64..5, n), Just((0..n).collect::<Vec<_>>()).prop_shuffle()))
        .prop_map(|(base, perm)| CfkCell::top(base, &perm).unwrap())
}

fn barycentric(k: usize) -> impl Strategy<Value = BarycentricPoint> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        BarycentricPoint::new(w).unwrap()
    })
}

fn rod_model() -> RodModel {
    let material = UniformMaterial::new(
        1.2,
        Vector3::new(0.3, 0.4, 0.5),
        Matrix3::new(2.0, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 1.5),
        Matrix3::new(1.0, 0.0, 0.1, 0.0, 0.7, 0.0, 0.1, 0.0, 0.9),
        Vector3::new(0.0, 0.0, 1.0),
    )
    .unwrap();
    RodModel::new(RodGrid::new(0.2, 0.1, None).unwrap(), material, Potential::Linear(Vector3::new(0.0, 0.0, 9.81)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_log_round_trip(v in vec3(1.8)) {
        let back = so3::log(&so3::exp(&v)).unwrap();
        prop_assert!((back - v).norm() <= 1e-12);
    }

    #[test]
    fn dlog_inverts_dexp(v in vec3(1.8)) {
        let prod = so3::dlog(&v).unwrap() * so3::dexp(&v);
        prop_assert!((prod - Matrix3::identity()).amax() <= 1e-12);
    }

    #[test]
    fn boundary_of_boundary_vanishes_on_cfk(cell in top_cell(4)) {
        let cx = CfkComplex::new(cell.n());
        let c = Chain::cell(cell.dim(), cell);
        let b = boundary(&cx, &c).unwrap();
        if b.degree > 0 {
            prop_assert!(boundary(&cx, &b).unwrap().is_zero());
        }
    }

    #[test]
    fn boundary_of_boundary_vanishes_on_cubes(base in prop::collection::vec(-5i64..5, 1..=4)) {
        let cx = CubicComplex::new(base.len());
        let cube = CubicCell::from_doubled(base.iter().map(|b| 2 * b + 1).collect());
        let b = boundary(&cx, &Chain::cell(base.len(), cube)).unwrap();
        if b.degree > 0 {
            prop_assert!(boundary(&cx, &b).unwrap().is_zero());
        }
    }

    #[test]
    fn located_weights_reconstruct_the_point(p in prop::collection::vec(-20.0f64..20.0, 1..=5)) {
        let (cell, w) = cfk_locate_with_weights(&p);
        let verts = cfk_vertices(&cell);
        prop_assert_eq!(w.len(), verts.len());
        for k in 0..p.len() {
            let x: f64 = w.iter().zip(&verts).map(|(l, v)| l * v[k] as f64).sum();
            prop_assert!((x - p[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn vertex_rules_are_exact_on_affine_functions(n in 1usize..=4, coef in prop::collection::vec(-3.0f64..3.0, 5)) {
        let a = &coef[..=n];
        let h = |l: &BarycentricPoint| l.weights().iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        let exact = a.iter().sum::<f64>() / (n + 1) as f64 / fact;
        for rule in [QuadratureRule::symmetric(n), QuadratureRule::midpoint(n)] {
            prop_assert!((rule.integrate(h) - exact).abs() <= 1e-14);
        }
    }

    #[test]
    fn karcher_mean_is_stationary(
        center in vec3(3.0),
        offsets in prop::collection::vec(small_rotvec(), 4),
        l in barycentric(4),
    ) {
        let c = so3::exp(&center);
        let pts: Vec<FiberPoint> = offsets
            .iter()
            .map(|d| FiberPoint::rod(*d, c.compose(&so3::exp(&(d * 0.45)))))
            .collect();
        let y = karcher_mean(&pts, &l, &ProductMetric, &KarcherOptions::default()).unwrap();
        let (r, m) = y.rod_parts().unwrap();
        let mut grad = Vector3::zeros();
        let mut mean_r = Vector3::zeros();
        for (p, w) in pts.iter().zip(l.weights()) {
            let (pr, pm) = p.rod_parts().unwrap();
            grad += so3::log(&m.transpose().compose(&pm)).unwrap() * *w;
            mean_r += pr * *w;
        }
        prop_assert!(grad.norm() <= 1e-12);
        prop_assert!((r - mean_r).norm() <= 1e-12);
    }

    #[test]
    fn kinetic_terms_are_time_reversible(
        sign in any::<bool>(),
        r in prop::collection::vec(vec3(1.0), 3),
        w in prop::collection::vec(small_rotvec(), 3),
    ) {
        let model = rod_model();
        let face = FaceIndex::new(1, -2, if sign { FaceSign::Plus } else { FaceSign::Minus });
        let c: Vec<RodConfig> = r.iter().zip(&w).map(|(r, w)| RodConfig::new(*r, so3::exp(&(w * 0.5)))).collect();
        let fwd = model.face_terms(&face, &[c[0], c[1], c[2]]).unwrap();
        let mut reversed = model.clone();
        reversed.grid.dt = -model.grid.dt;
        let rev = reversed.face_terms(&face, &[c[2], c[1], c[0]]).unwrap();
        for k in 0..2 {
            prop_assert!((fwd[k] - rev[k]).abs() <= 1e-12 * (1.0 + fwd[k].abs()));
        }
    }

    #[test]
    fn el_form_splits_into_legendre_and_momentum(
        noise in prop::collection::vec((vec3(0.1), small_rotvec()), 25),
    ) {
        let model = rod_model();
        let cx = CfkComplex::new(2);
        let mut y = DiscreteField::new();
        for (k, (dr, dw)) in noise.iter().enumerate() {
            let (i, j) = (k as i64 / 5 - 2, k as i64 % 5 - 2);
            let r = Vector3::new(0.1 * (i - j) as f64, 0.0, 0.0) + dr;
            y.insert(CfkCell::vertex(&[i, j]), FiberPoint::rod(r, so3::exp(&(dw * 0.3))));
        }
        let v = CfkCell::vertex(&[0, 0]);
        let flow = |c: &CfkCell| CfkCell::vertex(&diagonal_step(c.coords()));
        let el = el_form(&cx, &y, &v, &model).unwrap();
        let leg = legendre(&cx, &y, &v, &flow, &model).unwrap();
        let mom = momentum(&cx, &y, &v, &flow, &model).unwrap();
        for k in 0..6 {
            prop_assert!((el[k] - (leg.covector[k] - mom.covector[k])).abs() <= 1e-12);
        }
    }

    #[test]
    fn noether_identity_holds_for_any_field(
        values in prop::collection::vec(prop::array::uniform2(-2.0f64..2.0), 36),
        keep in prop::collection::vec(any::<bool>(), 50),
    ) {
        let cx = CfkComplex::new(2);
        let mut y = DiscreteField::new();
        for (k, x) in values.iter().enumerate() {
            y.insert(CfkCell::vertex(&[k as i64 / 6, k as i64 % 6]), FiberPoint::euclidean(x.to_vec()));
        }
        let region: Region<CfkCell> = (0..5i64)
            .flat_map(|i| (0..5i64).flat_map(move |j| [[0usize, 1], [1, 0]].map(|p| CfkCell::top(vec![i, j], &p).unwrap())))
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(c, _)| c)
            .collect();
        prop_assume!(!region.is_empty());
        // a symmetry: boundary + interior EL = 0
        let b = noether_balance(&cx, &y, |_: &FiberPoint| vec![1.0, -0.5], &region, &PairwiseQuadratic).unwrap();
        prop_assert!((b.boundary + b.interior_el).abs() <= 1e-12);
        // an arbitrary vector field: the defect closes the balance
        let d = |p: &FiberPoint| {
            let x = p.euclidean_factor(0).unwrap();
            vec![x[1].sin(), x[0] * x[0]]
        };
        let b = noether_balance(&cx, &y, d, &region, &PairwiseQuadratic).unwrap();
        prop_assert!((b.boundary + b.interior_el - b.defect).abs() <= 1e-11);
    }

    #[test]
    fn rod_symmetries_have_no_defect(
        r in prop::collection::vec(vec3(1.0), 3),
        w in prop::collection::vec(small_rotvec(), 3),
    ) {
        let mut model = rod_model();
        model.potential = Potential::None;
        let face = FaceIndex::new(0, 0, FaceSign::Plus);
        let c: Vec<RodConfig> = r.iter().zip(&w).map(|(r, w)| RodConfig::new(*r, so3::exp(&(w * 0.5)))).collect();
        let d = model.face_dlagrangian(&face, &[c[0], c[1], c[2]]).unwrap().total();
        for g in Generator::ALL {
            let mut pair = 0.0;
            let mut scale: f64 = 1.0;
            for (cv, conf) in d.iter().zip(&c) {
                let t = g.tangent(&conf.to_point());
                let cov = cv.to_vec();
                pair += cov.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>();
                scale = scale.max(cov.iter().map(|x| x.abs()).fold(0.0, f64::max));
            }
            prop_assert!(pair.abs() <= 1e-10 * scale, "{}: {pair:e}", g.label());
        }
    }
}
