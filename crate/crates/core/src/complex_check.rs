//! Full verification suite for a finite window of a complex: the axioms,
//! `∂∘∂ = 0` and `d∘d = 0` on random (co)chains, and the Stokes pairing
//! `⟨∂c, ω⟩ = ⟨c, dω⟩`.

use crate::complex::{boundary, differential, pair, verify_complex_axioms, AxiomReport, CellComplex, Chain, Cochain};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Outcome of [`check_complex`].
#[derive(Clone, Debug)]
pub struct ComplexCheckReport {
    pub axioms: AxiomReport,
    /// Random chains whose boundary's boundary was nonzero.
    pub boundary_squared_failures: usize,
    pub boundary_squared_trials: usize,
    /// Largest `|d(dω)|` seen.
    pub d_squared_max: f64,
    pub d_squared_trials: usize,
    /// Largest `|⟨∂c, ω⟩ − ⟨c, dω⟩|`, relative to `1 + ∑|c||ω|`.
    pub stokes_max_error: f64,
    pub stokes_trials: usize,
}

/// Tolerance on `d∘d` and Stokes residuals.
pub const PAIRING_TOL: f64 = 1e-12;

impl ComplexCheckReport {
    pub fn ok(&self) -> bool {
        self.axioms.ok()
            && self.boundary_squared_failures == 0
            && self.d_squared_max <= PAIRING_TOL
            && self.stokes_max_error <= PAIRING_TOL
    }
}

fn cells_of_dim<X: CellComplex>(cx: &X, window: &[X::Cell], k: usize) -> Vec<X::Cell> {
    window.iter().filter(|c| cx.cell_dim(c) == k).cloned().collect()
}

fn sample<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T], count: usize) -> Vec<&'a T> {
    if items.is_empty() {
        return Vec::new();
    }
    (0..count).map(|_| &items[rng.random_range(0..items.len())]).collect()
}

/// Runs the axiom check on every window cell plus `trials` random (co)chain
/// tests per degree, seeded for reproducibility.
pub fn check_complex<X: CellComplex>(cx: &X, window: &[X::Cell], trials: usize, seed: u64) -> Result<ComplexCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cx.dimension();
    let by_dim: Vec<Vec<X::Cell>> = (0..=n).map(|k| cells_of_dim(cx, window, k)).collect();
    let mut report = ComplexCheckReport {
        axioms: verify_complex_axioms(cx, window),
        boundary_squared_failures: 0,
        boundary_squared_trials: 0,
        d_squared_max: 0.0,
        d_squared_trials: 0,
        stokes_max_error: 0.0,
        stokes_trials: 0,
    };

    for k in 2..=n {
        for _ in 0..trials {
            let mut c = Chain::zero(k);
            for cell in sample(&mut rng, &by_dim[k], 4) {
                c.add(cell.clone(), rng.random_range(-3..=3));
            }
            let bb = boundary(cx, &boundary(cx, &c)?)?;
            report.boundary_squared_trials += 1;
            if !bb.is_zero() {
                report.boundary_squared_failures += 1;
            }
        }
    }

    for k in 0..n.saturating_sub(1) {
        for _ in 0..trials {
            let targets: BTreeSet<X::Cell> = sample(&mut rng, &by_dim[k + 2], 3).into_iter().cloned().collect();
            let middle: BTreeSet<X::Cell> = targets.iter().flat_map(|b| cx.down_adjacent(b)).collect();
            let mut omega = Cochain::zero(k);
            for a in middle.iter().flat_map(|b| cx.down_adjacent(b)) {
                omega.set(a, rng.random_range(-1.0..1.0));
            }
            let dd = differential(cx, &differential(cx, &omega, &middle)?, &targets)?;
            report.d_squared_trials += 1;
            for v in dd.values.values() {
                report.d_squared_max = report.d_squared_max.max(v.abs());
            }
        }
    }

    for k in 1..=n {
        for _ in 0..trials {
            let mut c = Chain::zero(k);
            for cell in sample(&mut rng, &by_dim[k], 5) {
                c.add(cell.clone(), rng.random_range(-3..=3));
            }
            let support: BTreeSet<X::Cell> = c.coeffs.keys().cloned().collect();
            let mut omega = Cochain::zero(k - 1);
            for a in support.iter().flat_map(|b| cx.down_adjacent(b)) {
                omega.set(a, rng.random_range(-1.0..1.0));
            }
            let lhs = pair(&boundary(cx, &c)?, &omega)?;
            let rhs = pair(&c, &differential(cx, &omega, &support)?)?;
            let scale = 1.0 + c.coeffs.values().map(|x| x.unsigned_abs() as f64).sum::<f64>();
            report.stokes_trials += 1;
            report.stokes_max_error = report.stokes_max_error.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(report)
}
