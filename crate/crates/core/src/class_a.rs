//! Class A: a systematic MDS code over each row, with `tau` of its parity
//! nodes carrying one extra data symbol (a piggyback) per row.

use itertools::Itertools;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gf::{self, Elem, Field, GfError, Matrix, RankReport, Solution};
use crate::layout::{wrap, CodeArray, DataArray, Pos};
use crate::metrics::OpCounter;
use crate::oracle::{self, Form, Observation};

/// Above this many `k`-subsets the MDS check samples instead of enumerating.
pub const EXHAUSTIVE_MDS_LIMIT: u64 = 100_000;
pub const SAMPLED_MDS_CHECKS: usize = 10_000;

#[derive(Debug, Error)]
pub enum ClassAError {
    #[error("invalid Class A parameters: {0}")]
    Params(String),
    #[error("GF({q}) is too small for length {n_a}: need at least {needed} elements")]
    FieldTooSmall { q: u32, n_a: usize, needed: u32 },
    #[error("generator is not MDS: columns {columns:?} are dependent")]
    NotMds { columns: Vec<usize> },
    #[error("erasure pattern {pattern:?} is not decodable (rank {} of {})", report.rank, report.unknowns)]
    Unrecoverable { pattern: Vec<usize>, report: RankReport },
    #[error(transparent)]
    Field(#[from] GfError),
}

/// Parameters and MDS coefficients of a Class A code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassASpec {
    n_a: usize,
    k: usize,
    tau: usize,
    /// `k x (n_a - k)`; entry `(l, u - k)` weights data column `l` in parity node `u`.
    alpha: Matrix,
    field: Field,
}

pub fn check_params(n_a: usize, k: usize, tau: usize) -> Result<(), ClassAError> {
    if k < 2 {
        return Err(ClassAError::Params(format!("k = {k} must be at least 2")));
    }
    if n_a < k + 2 || n_a > 2 * k {
        return Err(ClassAError::Params(format!("n_A = {n_a} must satisfy k+2 <= n_A <= 2k for k = {k}")));
    }
    if tau < 1 || tau + k + 1 > n_a {
        return Err(ClassAError::Params(format!(
            "tau = {tau} must satisfy 1 <= tau <= n_A-k-1 = {}",
            n_a - k - 1
        )));
    }
    Ok(())
}

impl ClassASpec {
    pub fn new(n_a: usize, k: usize, tau: usize, alpha: Matrix, field: Field) -> Result<Self, ClassAError> {
        check_params(n_a, k, tau)?;
        if alpha.rows() != k || alpha.cols() != n_a - k {
            return Err(ClassAError::Params(format!(
                "alpha is {}x{}, expected {}x{}",
                alpha.rows(),
                alpha.cols(),
                k,
                n_a - k
            )));
        }
        verify_mds(&field, &alpha)?;
        Ok(ClassASpec { n_a, k, tau, alpha, field })
    }

    /// Uses the shortened Reed-Solomon generator over `field`.
    pub fn with_field(n_a: usize, k: usize, tau: usize, field: Field) -> Result<Self, ClassAError> {
        check_params(n_a, k, tau)?;
        let alpha = mds_generator(n_a, k, &field)?;
        Ok(ClassASpec { n_a, k, tau, alpha, field })
    }

    /// Uses the smallest field with at least `n_a + 1` elements.
    pub fn with_default_field(n_a: usize, k: usize, tau: usize) -> Result<Self, ClassAError> {
        ClassASpec::with_field(n_a, k, tau, default_field(n_a)?)
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    /// Coefficient of data column `l` in parity node `u`.
    pub fn coeff(&self, l: usize, u: usize) -> Elem {
        self.alpha.get(l, u - self.k)
    }

    pub fn is_piggybacked(&self, u: usize) -> bool {
        u >= self.n_a - self.tau && u < self.n_a
    }

    /// The data symbol added to parity node `u` in row `i`, if any.
    pub fn piggyback_source(&self, i: usize, u: usize) -> Option<Pos> {
        self.is_piggybacked(u)
            .then(|| Pos::new(wrap((i + u + self.tau + 1) as i64 - self.n_a as i64, self.k), i))
    }

    /// The stored symbol at `(row, node)` as a combination of data symbols.
    pub fn form(&self, row: usize, node: usize) -> Form {
        if node < self.k {
            return vec![(Pos::new(row, node), Elem::ONE)];
        }
        let mut form: Form = (0..self.k).map(|l| (Pos::new(row, l), self.coeff(l, node))).collect();
        if let Some(src) = self.piggyback_source(row, node) {
            form.push((src, Elem::ONE));
        }
        form
    }

    /// Plain MDS parity of row `i` for node `u`, from a full data row.
    pub fn mds_parity(&self, row: &[Elem], u: usize, ops: &mut OpCounter) -> Elem {
        let f = &self.field;
        let mut acc = Elem::ZERO;
        for (l, &d) in row.iter().enumerate() {
            let term = f.mul(self.coeff(l, u), d);
            ops.mul(1);
            if l == 0 {
                acc = term;
            } else {
                acc = f.add(acc, term);
                ops.add(1);
            }
        }
        acc
    }
}

pub fn default_field(n_a: usize) -> Result<Field, ClassAError> {
    Ok(Field::smallest_with_order_at_least(n_a as u32 + 1)?)
}

/// Systematic generator `[I | alpha]` of a Reed-Solomon code evaluated at the
/// elements `1..=n_a`, returned as `alpha`.
pub fn mds_generator(n_a: usize, k: usize, field: &Field) -> Result<Matrix, ClassAError> {
    let needed = n_a as u32 + 1;
    if field.order() < needed {
        return Err(ClassAError::FieldTooSmall { q: field.order(), n_a, needed });
    }
    if k == 0 || k >= n_a {
        return Err(ClassAError::Params(format!("need 0 < k < n_A, got k = {k}, n_A = {n_a}")));
    }
    let mut v = Matrix::zeros(k, n_a);
    for c in 0..n_a {
        let x = Elem(c as u16 + 1);
        for r in 0..k {
            v.set(r, c, field.pow(x, r as u64));
        }
    }
    let head: Vec<usize> = (0..k).collect();
    let inv = gf::inverse(field, &v.select_columns(&head))?;
    let g = inv.mul(field, &v)?;
    let tail: Vec<usize> = (k..n_a).collect();
    let alpha = g.select_columns(&tail);
    verify_mds(field, &alpha)?;
    Ok(alpha)
}

/// Checks that every `k` columns of `[I | alpha]` are independent.
pub fn verify_mds(field: &Field, alpha: &Matrix) -> Result<(), ClassAError> {
    let k = alpha.rows();
    let n = k + alpha.cols();
    let mut full = Matrix::zeros(k, n);
    for r in 0..k {
        full.set(r, r, Elem::ONE);
        for c in 0..alpha.cols() {
            full.set(r, k + c, alpha.get(r, c));
        }
    }
    let check = |cols: &[usize]| -> Result<(), ClassAError> {
        if gf::rank(field, &full.select_columns(cols)) < k {
            return Err(ClassAError::NotMds { columns: cols.to_vec() });
        }
        Ok(())
    };
    if binomial(n, k) <= EXHAUSTIVE_MDS_LIMIT {
        for cols in (0..n).combinations(k) {
            check(&cols)?;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..SAMPLED_MDS_CHECKS {
            let mut cols = sample(&mut rng, n, k).into_vec();
            cols.sort_unstable();
            check(&cols)?;
        }
    }
    Ok(())
}

pub fn binomial(n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    (0..r.min(n - r)).fold(1u64, |acc, i| acc * (n - i) as u64 / (i as u64 + 1))
}

/// Parity columns `k..n_a` for every row: `k x (n_a - k)`.
pub fn encode_class_a(data: &DataArray, spec: &ClassASpec, ops: &mut OpCounter) -> Result<Matrix, ClassAError> {
    if data.k() != spec.k {
        return Err(ClassAError::Params(format!("data is {0}x{0}, code has k = {1}", data.k(), spec.k)));
    }
    let k = spec.k;
    let f = &spec.field;
    let mut out = Matrix::zeros(k, spec.n_a - k);
    for i in 0..k {
        for u in k..spec.n_a {
            let mut p = spec.mds_parity(data.row(i), u, ops);
            if let Some(src) = spec.piggyback_source(i, u) {
                p = f.add(p, data.get(src));
                ops.add(1);
            }
            out.set(i, u - k, p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultBranch {
    /// `tau` below the root: the code keeps the full MDS tolerance `n_a - k`.
    Mds,
    /// `tau` at or above the root: piggybacks cost tolerance.
    PiggybackLimited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultToleranceReport {
    pub f: usize,
    /// Positive root of `x^2 + (n_a - k - tau) x - k`.
    pub xi: f64,
    pub branch: FaultBranch,
}

pub fn fault_tolerance(n_a: usize, k: usize, tau: usize) -> FaultToleranceReport {
    let d = (n_a - k - tau) as i64;
    let k = k as i64;
    let xi = (((d * d + 4 * k) as f64).sqrt() - d as f64) / 2.0;
    // Integer forms of floor(xi) and the test tau >= xi, free of rounding.
    let floor_xi = (0..=k).take_while(|&x| x * x + d * x <= k).last().unwrap_or(0);
    let t = tau as i64;
    if t * t + d * t >= k {
        FaultToleranceReport { f: (d + floor_xi) as usize, xi, branch: FaultBranch::PiggybackLimited }
    } else {
        FaultToleranceReport { f: (d + t) as usize, xi, branch: FaultBranch::Mds }
    }
}

/// Recovers all data from the surviving data and Class A parity nodes of
/// `arr` (columns at or beyond `n_a` are ignored).
///
/// Rows are solved one at a time from whichever parity equations are usable:
/// unmodified parities always are, a piggybacked parity once its piggyback is
/// known. Solving a row reveals the piggybacks it hosts, which unlocks more
/// rows. Patterns this cannot finish go to the generic rank decoder.
pub fn decode_multi_class_a(arr: &CodeArray, spec: &ClassASpec) -> Result<DataArray, ClassAError> {
    let k = spec.k;
    let f = &spec.field;
    let erased: Vec<usize> = (0..k).filter(|&c| arr.node_erased(c)).collect();
    let mut data = arr.data();
    if erased.is_empty() {
        return Ok(data);
    }
    let is_erased = |c: usize| erased.contains(&c);
    let parities: Vec<usize> = (k..spec.n_a).filter(|&u| !arr.node_erased(u)).collect();
    let e = erased.len();
    let mut solved = vec![false; k];
    let mut progress = true;
    while progress {
        progress = false;
        for i in 0..k {
            if solved[i] {
                continue;
            }
            let usable: Vec<usize> = parities
                .iter()
                .copied()
                .filter(|&u| match spec.piggyback_source(i, u) {
                    None => true,
                    Some(src) => !is_erased(src.col) || solved[src.row],
                })
                .take(e)
                .collect();
            if usable.len() < e {
                continue;
            }
            let mut m = Matrix::zeros(e, e);
            let mut rhs = Vec::with_capacity(e);
            for (r, &u) in usable.iter().enumerate() {
                let mut b = arr.get(i, u);
                for l in 0..k {
                    if is_erased(l) {
                        continue;
                    }
                    b = f.sub(b, f.mul(spec.coeff(l, u), data.get(Pos::new(i, l))));
                }
                if let Some(src) = spec.piggyback_source(i, u) {
                    b = f.sub(b, data.get(src));
                }
                rhs.push(b);
                for (c, &l) in erased.iter().enumerate() {
                    m.set(r, c, spec.coeff(l, u));
                }
            }
            let Solution::Unique(x) = gf::gaussian_solve(f, &m, &rhs)? else {
                // Square MDS submatrices are invertible; reaching here means
                // the coefficients are not MDS, so let the rank decoder judge.
                return decode_generic(arr, spec, &erased);
            };
            for (c, &l) in erased.iter().enumerate() {
                data.set(Pos::new(i, l), x[c]);
            }
            solved[i] = true;
            progress = true;
        }
    }
    if solved.iter().all(|&s| s) {
        Ok(data)
    } else {
        decode_generic(arr, spec, &erased)
    }
}

fn decode_generic(arr: &CodeArray, spec: &ClassASpec, erased: &[usize]) -> Result<DataArray, ClassAError> {
    let observations: Vec<Observation> = (spec.k..spec.n_a)
        .filter(|&u| !arr.node_erased(u))
        .flat_map(|u| (0..spec.k).map(move |i| (i, u)))
        .map(|(i, u)| Observation { form: spec.form(i, u), value: arr.get(i, u) })
        .collect();
    let mut data = arr.data();
    match oracle::ml_decode(&spec.field, &mut data, erased, &observations)? {
        Ok(()) => Ok(data),
        Err(report) => Err(ClassAError::Unrecoverable { pattern: arr.erased_nodes(), report }),
    }
}
