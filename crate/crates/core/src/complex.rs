//! Abstract cellular complexes, chains, cochains and discrete integration.
//!
//! A complex is described only through its incidence numbers and adjacency lists,
//! so everything here works for the cubic complex, the CFK simplicial complex,
//! and quotients of either. Complexes are infinite; operations either take an
//! explicit finite window or derive finite support from their inputs.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::hash::Hash;

/// Incidence number `[β:α] ∈ {−1, 0, +1}`.
pub type Incidence = i8;

/// An n-dimensional abstract cellular complex.
///
/// Implementations must satisfy: nonzero incidences only between cells of
/// consecutive dimension, finite adjacency lists, and
/// `∑_α [β:α][α:γ] = 0` for every pair `β`, `γ`.
pub trait CellComplex: Sync {
    /// Canonical cell identifier; equality is identity and `Ord` fixes the
    /// iteration order used throughout (lexicographic on the encoding).
    type Cell: Clone + Eq + Ord + Hash + Debug + Send + Sync;

    fn dimension(&self) -> usize;

    fn cell_dim(&self, cell: &Self::Cell) -> usize;

    fn incidence(&self, upper: &Self::Cell, lower: &Self::Cell) -> Incidence;

    /// Cells `α` with `[β:α] ≠ 0`.
    fn down_adjacent(&self, cell: &Self::Cell) -> Vec<Self::Cell>;

    /// Cells `β` with `[β:α] ≠ 0`.
    fn up_adjacent(&self, cell: &Self::Cell) -> Vec<Self::Cell>;

    /// Vertices adherent to `cell`, in the complex's conventional order. Lagrangian
    /// densities receive configurations in exactly this order.
    fn adherent_vertices(&self, cell: &Self::Cell) -> Vec<Self::Cell> {
        let mut current: BTreeSet<Self::Cell> = BTreeSet::from([cell.clone()]);
        while current.iter().any(|c| self.cell_dim(c) > 0) {
            let mut next = BTreeSet::new();
            for c in &current {
                if self.cell_dim(c) == 0 {
                    next.insert(c.clone());
                } else {
                    next.extend(self.down_adjacent(c));
                }
            }
            current = next;
        }
        current.into_iter().collect()
    }

    /// n-cells having `vertex` adherent, sorted.
    fn star(&self, vertex: &Self::Cell) -> Vec<Self::Cell> {
        let n = self.dimension();
        let mut current: BTreeSet<Self::Cell> = BTreeSet::from([vertex.clone()]);
        for _ in 0..n {
            let mut next = BTreeSet::new();
            for c in &current {
                next.extend(self.up_adjacent(c));
            }
            current = next;
        }
        current.into_iter().collect()
    }
}

/// Integer chain of a fixed degree with finite support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain<C: Ord> {
    pub degree: usize,
    pub coeffs: BTreeMap<C, i64>,
}

impl<C: Ord + Clone> Chain<C> {
    pub fn zero(degree: usize) -> Self {
        Chain {
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// The elementary chain `c_β`.
    pub fn cell(degree: usize, cell: C) -> Self {
        Chain {
            degree,
            coeffs: BTreeMap::from([(cell, 1)]),
        }
    }

    pub fn add(&mut self, cell: C, coeff: i64) {
        let entry = self.coeffs.entry(cell.clone()).or_insert(0);
        *entry += coeff;
        if *entry == 0 {
            self.coeffs.remove(&cell);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, cell: &C) -> i64 {
        self.coeffs.get(cell).copied().unwrap_or(0)
    }
}

/// Real-valued cochain, zero outside its stored support.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain<C: Ord> {
    pub degree: usize,
    pub values: BTreeMap<C, f64>,
}

impl<C: Ord + Clone> Cochain<C> {
    pub fn zero(degree: usize) -> Self {
        Cochain {
            degree,
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, cell: &C) -> f64 {
        self.values.get(cell).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, cell: C, value: f64) {
        self.values.insert(cell, value);
    }
}

/// A finite set of n-cells.
pub type Region<C> = BTreeSet<C>;

fn check_degree<X: CellComplex>(cx: &X, cell: &X::Cell, degree: usize) -> Result<()> {
    let d = cx.cell_dim(cell);
    if d != degree {
        return Err(Error::WrongCellDimension {
            cell: format!("{cell:?}"),
            expected: degree,
            found: d,
        });
    }
    Ok(())
}

/// `(∂c)(α) = ∑_{α≺β} [β:α]·c(β)`.
pub fn boundary<X: CellComplex>(cx: &X, c: &Chain<X::Cell>) -> Result<Chain<X::Cell>> {
    if c.degree == 0 {
        return Err(Error::BoundaryOfZeroChain);
    }
    let mut out = Chain::zero(c.degree - 1);
    for (beta, &k) in &c.coeffs {
        check_degree(cx, beta, c.degree)?;
        for alpha in cx.down_adjacent(beta) {
            let inc = cx.incidence(beta, &alpha) as i64;
            if inc != 0 {
                out.add(alpha, inc * k);
            }
        }
    }
    Ok(out)
}

/// `(dω)(β) = ∑_{α≺β} [β:α]·ω(α)` for every `β` in `support_hint`.
pub fn differential<X: CellComplex>(
    cx: &X,
    omega: &Cochain<X::Cell>,
    support_hint: &BTreeSet<X::Cell>,
) -> Result<Cochain<X::Cell>> {
    if omega.degree >= cx.dimension() {
        return Err(Error::TopDegreeCochain);
    }
    for alpha in omega.values.keys() {
        check_degree(cx, alpha, omega.degree)?;
    }
    let mut out = Cochain::zero(omega.degree + 1);
    for beta in support_hint {
        check_degree(cx, beta, omega.degree + 1)?;
        let mut sum = 0.0;
        for alpha in cx.down_adjacent(beta) {
            sum += cx.incidence(beta, &alpha) as f64 * omega.get(&alpha);
        }
        if sum != 0.0 {
            out.set(beta.clone(), sum);
        }
    }
    Ok(out)
}

/// Discrete integration `⟨c, ω⟩ = ∑_α c(α)·ω(α)`.
pub fn pair<C: Ord + Clone>(c: &Chain<C>, omega: &Cochain<C>) -> Result<f64> {
    if c.degree != omega.degree {
        return Err(Error::DegreeMismatch {
            expected: c.degree,
            found: omega.degree,
        });
    }
    Ok(c.coeffs.iter().map(|(a, &k)| k as f64 * omega.get(a)).sum())
}

/// The sphere `S_v`: all n-cells with `v` adherent.
pub fn sphere<X: CellComplex>(cx: &X, v: &X::Cell) -> Result<Region<X::Cell>> {
    check_degree(cx, v, 0)?;
    Ok(cx.star(v).into_iter().collect())
}

/// Partition of candidate vertices relative to a region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexClassification<C: Ord> {
    pub interior: BTreeSet<C>,
    pub frontier: BTreeSet<C>,
    pub exterior: BTreeSet<C>,
}

/// Interior: `S_v ⊂ A`; exterior: `S_v ∩ A = ∅`; frontier otherwise.
pub fn classify_vertices<X: CellComplex>(
    cx: &X,
    region: &Region<X::Cell>,
    candidates: &BTreeSet<X::Cell>,
) -> VertexClassification<X::Cell> {
    let mut out = VertexClassification {
        interior: BTreeSet::new(),
        frontier: BTreeSet::new(),
        exterior: BTreeSet::new(),
    };
    for v in candidates {
        let star = cx.star(v);
        let inside = star.iter().filter(|b| region.contains(*b)).count();
        if inside == star.len() {
            out.interior.insert(v.clone());
        } else if inside == 0 {
            out.exterior.insert(v.clone());
        } else {
            out.frontier.insert(v.clone());
        }
    }
    out
}

/// Vertices adherent to some cell of the region.
pub fn region_vertices<X: CellComplex>(cx: &X, region: &Region<X::Cell>) -> BTreeSet<X::Cell> {
    region.iter().flat_map(|b| cx.adherent_vertices(b)).collect()
}

/// A single failed axiom check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AxiomViolation {
    /// Nonzero incidence between cells whose dimensions are not consecutive.
    Dimension { upper: String, lower: String },
    /// `∑_α [β:α][α:γ] ≠ 0`.
    BoundarySquare { upper: String, lower: String, sum: i64 },
    /// `α ∈ down(β)` but `β ∉ up(α)`, or vice versa.
    Adjacency { upper: String, lower: String },
    /// An adjacency list lists a cell with zero incidence.
    ZeroListed { upper: String, lower: String },
    /// An adjacency list exceeds the sanity bound.
    Finiteness { cell: String, len: usize },
}

/// Result of [`verify_complex_axioms`].
#[derive(Clone, Debug, Default)]
pub struct AxiomReport {
    pub cells_checked: usize,
    pub pairs_checked: usize,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Upper bound on adjacency-list length used as the finiteness check.
const ADJACENCY_BOUND: usize = 1 << 16;

/// Checks the complex axioms for every cell of `window`.
pub fn verify_complex_axioms<X: CellComplex>(cx: &X, window: &[X::Cell]) -> AxiomReport {
    let mut report = AxiomReport::default();
    for beta in window {
        report.cells_checked += 1;
        let db = cx.cell_dim(beta);
        let down = cx.down_adjacent(beta);
        let up = cx.up_adjacent(beta);
        for len in [down.len(), up.len()] {
            if len > ADJACENCY_BOUND {
                report.violations.push(AxiomViolation::Finiteness {
                    cell: format!("{beta:?}"),
                    len,
                });
            }
        }
        for alpha in &down {
            report.pairs_checked += 1;
            let inc = cx.incidence(beta, alpha);
            if inc == 0 {
                report.violations.push(AxiomViolation::ZeroListed {
                    upper: format!("{beta:?}"),
                    lower: format!("{alpha:?}"),
                });
            } else if cx.cell_dim(alpha) + 1 != db {
                report.violations.push(AxiomViolation::Dimension {
                    upper: format!("{beta:?}"),
                    lower: format!("{alpha:?}"),
                });
            }
            if !cx.up_adjacent(alpha).contains(beta) {
                report.violations.push(AxiomViolation::Adjacency {
                    upper: format!("{beta:?}"),
                    lower: format!("{alpha:?}"),
                });
            }
        }
        for gamma in &up {
            if cx.incidence(gamma, beta) == 0 {
                report.violations.push(AxiomViolation::ZeroListed {
                    upper: format!("{gamma:?}"),
                    lower: format!("{beta:?}"),
                });
            } else if cx.cell_dim(gamma) != db + 1 {
                report.violations.push(AxiomViolation::Dimension {
                    upper: format!("{gamma:?}"),
                    lower: format!("{beta:?}"),
                });
            }
        }
        if db >= 2 {
            let mut sums: BTreeMap<X::Cell, i64> = BTreeMap::new();
            for alpha in &down {
                let a = cx.incidence(beta, alpha) as i64;
                for gamma in cx.down_adjacent(alpha) {
                    *sums.entry(gamma.clone()).or_insert(0) += a * cx.incidence(alpha, &gamma) as i64;
                }
            }
            for (gamma, sum) in sums {
                report.pairs_checked += 1;
                if sum != 0 {
                    report.violations.push(AxiomViolation::BoundarySquare {
                        upper: format!("{beta:?}"),
                        lower: format!("{gamma:?}"),
                        sum,
                    });
                }
            }
        }
    }
    report
}
