//! Brute-force ground truth computed from the symbol-level linear code only,
//! independent of the structured decoders and repair schedules.

use itertools::Itertools;
use rayon::prelude::*;
use thiserror::Error;

use crate::class_a::ClassASpec;
use crate::code::CodeSpec;
use crate::gf::{self, Elem, Field, GfError, Matrix, RankReport, Solution};
use crate::layout::{DataArray, Pos};

/// A stored symbol as a combination of data symbols.
pub type Form = Vec<(Pos, Elem)>;

#[derive(Debug, Clone)]
pub struct Observation {
    pub form: Form,
    pub value: Elem,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("node {0} is not a data node")]
    NotDataNode(usize),
    #[error(transparent)]
    Field(#[from] GfError),
}

/// Any code whose stored symbols are linear in the `k x k` data array.
pub trait LinearCode: Sync {
    fn k(&self) -> usize;
    fn n(&self) -> usize;
    fn field(&self) -> &Field;
    fn form(&self, row: usize, node: usize) -> Form;
}

impl LinearCode for ClassASpec {
    fn k(&self) -> usize {
        ClassASpec::k(self)
    }
    fn n(&self) -> usize {
        self.n_a()
    }
    fn field(&self) -> &Field {
        ClassASpec::field(self)
    }
    fn form(&self, row: usize, node: usize) -> Form {
        ClassASpec::form(self, row, node)
    }
}

impl LinearCode for CodeSpec {
    fn k(&self) -> usize {
        CodeSpec::k(self)
    }
    fn n(&self) -> usize {
        CodeSpec::n(self)
    }
    fn field(&self) -> &Field {
        CodeSpec::field(self)
    }
    fn form(&self, row: usize, node: usize) -> Form {
        CodeSpec::form(self, row, node)
    }
}

/// Solves for the data in `erased_cols` from the observations, using the
/// values already in `data` for every other column.
pub fn ml_decode(
    field: &Field,
    data: &mut DataArray,
    erased_cols: &[usize],
    observations: &[Observation],
) -> Result<Result<(), RankReport>, GfError> {
    let k = data.k();
    let unknown = |p: Pos| erased_cols.iter().position(|&c| c == p.col).map(|c| c * k + p.row);
    let count = erased_cols.len() * k;
    let mut rows = Vec::with_capacity(observations.len());
    let mut rhs = Vec::with_capacity(observations.len());
    for obs in observations {
        let mut row = vec![Elem::ZERO; count];
        let mut b = obs.value;
        for &(p, c) in &obs.form {
            match unknown(p) {
                Some(x) => row[x] = field.add(row[x], c),
                None => b = field.sub(b, field.mul(c, data.get(p))),
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    if rows.is_empty() {
        return Ok(Err(RankReport { rank: 0, unknowns: count, undetermined: (0..count).collect(), partial: vec![None; count] }));
    }
    match gf::gaussian_solve(field, &Matrix::from_rows(rows)?, &rhs)? {
        Solution::Unique(x) => {
            for (ci, &c) in erased_cols.iter().enumerate() {
                for i in 0..k {
                    data.set(Pos::new(i, c), x[ci * k + i]);
                }
            }
            Ok(Ok(()))
        }
        Solution::Deficient(report) => Ok(Err(report)),
    }
}

/// Rank of the surviving symbols restricted to the erased data symbols.
pub fn erasure_rank<C: LinearCode + ?Sized>(code: &C, pattern: &[usize]) -> (usize, usize) {
    let k = code.k();
    let erased_data: Vec<usize> = pattern.iter().copied().filter(|&c| c < k).collect();
    let unknowns = erased_data.len() * k;
    if unknowns == 0 {
        return (0, 0);
    }
    let index = |p: Pos| erased_data.iter().position(|&c| c == p.col).map(|c| c * k + p.row);
    let field = code.field();
    let mut rows = Vec::new();
    for node in (k..code.n()).filter(|u| !pattern.contains(u)) {
        for i in 0..k {
            let mut row = vec![Elem::ZERO; unknowns];
            for (p, c) in code.form(i, node) {
                if let Some(x) = index(p) {
                    row[x] = field.add(row[x], c);
                }
            }
            rows.push(row);
        }
    }
    if rows.len() < unknowns {
        return (gf::rank(field, &Matrix::from_rows(rows).unwrap_or(Matrix::zeros(0, unknowns))), unknowns);
    }
    (gf::rank(field, &Matrix::from_rows(rows).expect("rows have equal length")), unknowns)
}

/// True when the data can be recovered after erasing the nodes in `pattern`.
pub fn ml_decodable<C: LinearCode + ?Sized>(code: &C, pattern: &[usize]) -> bool {
    let (rank, unknowns) = erasure_rank(code, pattern);
    rank == unknowns
}

/// First undecodable pattern of exactly `size` nodes, in lexicographic order.
pub fn find_undecodable<C: LinearCode>(code: &C, size: usize) -> Option<Vec<usize>> {
    let patterns: Vec<Vec<usize>> = (0..code.n()).combinations(size).collect();
    patterns.into_par_iter().find_first(|p| !ml_decodable(code, p))
}

/// Largest `t` such that every `t`-node erasure pattern is decodable.
pub fn brute_force_fault_tolerance<C: LinearCode>(code: &C) -> usize {
    (1..=code.n()).find(|&t| find_undecodable(code, t).is_some()).map_or(code.n(), |t| t - 1)
}

/// Row-echelon basis that grows one vector at a time.
#[derive(Clone)]
struct Basis {
    rows: Vec<(usize, Vec<Elem>)>,
}

impl Basis {
    fn new() -> Self {
        Basis { rows: Vec::new() }
    }

    fn reduce(&self, field: &Field, mut v: Vec<Elem>) -> Vec<Elem> {
        for (pivot, row) in &self.rows {
            let c = v[*pivot];
            if c.is_zero() {
                continue;
            }
            for (x, &r) in v.iter_mut().zip(row) {
                *x = field.sub(*x, field.mul(c, r));
            }
        }
        v
    }

    /// Adds `v` if independent; returns whether the rank grew.
    fn insert(&mut self, field: &Field, v: Vec<Elem>) -> bool {
        let mut v = self.reduce(field, v);
        let Some(pivot) = v.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = field.inv(v[pivot]).expect("pivot is nonzero");
        for x in v.iter_mut() {
            *x = field.mul(*x, inv);
        }
        for (_, row) in self.rows.iter_mut() {
            let c = row[pivot];
            if !c.is_zero() {
                for (x, &r) in row.iter_mut().zip(&v) {
                    *x = field.sub(*x, field.mul(c, r));
                }
            }
        }
        self.rows.push((pivot, v));
        true
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }
}

struct RepairSearch<'a> {
    field: &'a Field,
    k: usize,
    /// Coordinates: the `k` symbols of the failed column first, then the
    /// readable data symbols.
    width: usize,
    parities: Vec<Vec<Elem>>,
}

impl RepairSearch<'_> {
    /// Whether the failed column lies in the span of `chosen` parities once
    /// the data coordinates in `dropped` are read (zeroed out).
    fn covers(&self, chosen: &[usize], dropped: &[usize]) -> bool {
        let mut basis = Basis::new();
        for &p in chosen {
            let mut v = self.parities[p].clone();
            for &d in dropped {
                v[d] = Elem::ZERO;
            }
            basis.insert(self.field, v);
        }
        (0..self.k).all(|i| {
            let mut e = vec![Elem::ZERO; self.width];
            e[i] = Elem::ONE;
            self.field_reduces_to_zero(&basis, e)
        })
    }

    fn field_reduces_to_zero(&self, basis: &Basis, e: Vec<Elem>) -> bool {
        basis.reduce(self.field, e).iter().all(|x| x.is_zero())
    }

    fn data_part(&self, p: usize) -> Vec<Elem> {
        let mut v = self.parities[p].clone();
        v[..self.k].fill(Elem::ZERO);
        v
    }

    /// Depth-first over parity subsets in index order, pruned by the rank of
    /// their readable-data part.
    fn feasible(&self, budget: usize, start: usize, chosen: &mut Vec<usize>, data_rank: &Basis) -> bool {
        let p = chosen.len();
        if p >= self.k {
            let rank = data_rank.rank();
            let min_drop = rank.saturating_sub(p - self.k);
            let max_drop = budget - p;
            if min_drop <= max_drop {
                let support: Vec<usize> = (self.k..self.width)
                    .filter(|&c| chosen.iter().any(|&q| !self.parities[q][c].is_zero()))
                    .collect();
                for size in min_drop..=max_drop.min(support.len()) {
                    if support.iter().copied().combinations(size).any(|drop| self.covers(chosen, &drop)) {
                        return true;
                    }
                }
            }
        }
        if p == budget {
            return false;
        }
        for next in start..self.parities.len() {
            let mut grown = data_rank.clone();
            grown.insert(self.field, self.data_part(next));
            if grown.rank() + self.k > budget {
                continue;
            }
            chosen.push(next);
            let found = self.feasible(budget, next + 1, chosen, &grown);
            chosen.pop();
            if found {
                return true;
            }
        }
        false
    }
}

/// Fewest symbol reads from the surviving nodes that determine data node `j`.
///
/// A read set is some parity symbols plus some data symbols. The failed
/// column is recoverable exactly when it lies in the span of the parities
/// after the read data coordinates are eliminated; read budgets grow from
/// `k` until such a set exists.
pub fn min_read_repair(spec: &CodeSpec, j: usize) -> Result<usize, OracleError> {
    let k = spec.k();
    if k > 6 {
        return Err(OracleError::TooLarge(format!("k = {k} exceeds 6")));
    }
    if j >= k {
        return Err(OracleError::NotDataNode(j));
    }
    let field = spec.field();
    let coord = |p: Pos| {
        if p.col == j {
            p.row
        } else {
            k + p.row * (k - 1) + if p.col > j { p.col - 1 } else { p.col }
        }
    };
    let width = k * k;
    let mut parities = Vec::new();
    for node in k..spec.n() {
        for i in 0..k {
            let mut v = vec![Elem::ZERO; width];
            for (p, c) in spec.form(i, node) {
                let x = coord(p);
                v[x] = field.add(v[x], c);
            }
            parities.push(v);
        }
    }
    let search = RepairSearch { field, k, width, parities };
    let ceiling = k * k;
    for budget in k..=ceiling {
        if search.feasible(budget, 0, &mut Vec::new(), &Basis::new()) {
            return Ok(budget);
        }
    }
    Err(OracleError::TooLarge(format!("no read set within {ceiling} symbols")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class_a::ClassASpec;

    #[test]
    fn class_a_k5_tolerates_two() {
        let spec = ClassASpec::with_default_field(7, 5, 1).unwrap();
        for pattern in (0..7).combinations(2) {
            assert!(ml_decodable(&spec, &pattern));
        }
        assert!(ml_decodable(&spec, &[]));
        assert!(find_undecodable(&spec, 3).is_some());
        assert_eq!(brute_force_fault_tolerance(&spec), 2);
    }

    #[test]
    fn class_a_n8_tolerates_three() {
        let spec = ClassASpec::with_default_field(8, 5, 1).unwrap();
        assert_eq!(brute_force_fault_tolerance(&spec), 3);
    }

    #[test]
    fn basis_rank() {
        let f = Field::with_order(5, 1).unwrap();
        let mut b = Basis::new();
        assert!(b.insert(&f, vec![Elem(1), Elem(2), Elem(0)]));
        assert!(!b.insert(&f, vec![Elem(2), Elem(4), Elem(0)]));
        assert!(b.insert(&f, vec![Elem(0), Elem(0), Elem(3)]));
        assert_eq!(b.rank(), 2);
    }
}
