//! Arithmetic over GF(p^m) for q = p^m <= 2^16, plus dense linear algebra.
//!
//! Elements are stored as their base-p digit expansion: digit `i` of the
//! integer value is the coefficient of `x^i`. Multiplication goes through
//! log/antilog tables built from a primitive element.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ORDER: u32 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("extension degree must be at least 1")]
    ZeroDegree,
    #[error("field order {0} exceeds 2^16")]
    TooLarge(u64),
    #[error("reduction polynomial {0:?} is not a monic irreducible of degree {1}")]
    BadReduction(Vec<u32>, u32),
    #[error("operands belong to different fields")]
    FieldMismatch,
    #[error("division by zero")]
    DivisionByZero,
    #[error("value {value} out of range for GF({q})")]
    OutOfRange { value: u32, q: u32 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("inconsistent linear system (rank {rank})")]
    Inconsistent { rank: usize },
    #[error("matrix is singular (rank {rank} of {size})")]
    Singular { rank: usize, size: usize },
}

/// Field descriptor as it appears in files.
///
/// `reduction` lists coefficients from `x^0` up to the leading 1; it is empty
/// for prime fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldSpec {
    pub p: u32,
    pub m: u32,
    pub reduction: Vec<u32>,
}

impl FieldSpec {
    pub fn order(&self) -> u32 {
        self.p.pow(self.m)
    }

    /// The prime field GF(p), or GF(p^m) with the default reduction polynomial.
    pub fn with_default_reduction(p: u32, m: u32) -> Result<Self, GfError> {
        check_size(p, m)?;
        let reduction = if m == 1 {
            Vec::new()
        } else {
            smallest_irreducible(p, m)
        };
        Ok(FieldSpec { p, m, reduction })
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.m == 1 {
            write!(f, "GF({})", self.p)
        } else {
            write!(f, "GF({}^{})", self.p, self.m)
        }
    }
}

/// One field element, without a field attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Elem(pub u16);

impl Elem {
    pub const ZERO: Elem = Elem(0);
    pub const ONE: Elem = Elem(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

struct Tables {
    spec: FieldSpec,
    q: u32,
    /// exp[i] = g^i, doubled in length so log sums need no reduction.
    exp: Vec<u16>,
    log: Vec<u32>,
}

/// A constructed field; cheap to clone and share between threads.
#[derive(Clone)]
pub struct Field(Arc<Tables>);

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.spec)
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

impl Eq for Field {}

impl Field {
    pub fn new(spec: FieldSpec) -> Result<Self, GfError> {
        check_size(spec.p, spec.m)?;
        let p = spec.p;
        let m = spec.m;
        if m > 1 {
            let ok = spec.reduction.len() == m as usize + 1
                && spec.reduction[m as usize] == 1
                && spec.reduction.iter().all(|&c| c < p)
                && is_irreducible(p, &spec.reduction);
            if !ok {
                return Err(GfError::BadReduction(spec.reduction.clone(), m));
            }
        } else if !spec.reduction.is_empty() {
            return Err(GfError::BadReduction(spec.reduction.clone(), m));
        }
        let q = spec.order();
        let slow = SlowField { p, m, reduction: &spec.reduction };
        let g = (1..q).find(|&g| slow.is_primitive(g, q)).expect("multiplicative group is cyclic");
        let n = (q - 1) as usize;
        let mut exp = vec![0u16; 2 * n.max(1)];
        let mut log = vec![0u32; q as usize];
        let mut v = 1u32;
        for i in 0..n {
            exp[i] = v as u16;
            exp[i + n] = v as u16;
            log[v as usize] = i as u32;
            v = slow.mul(v, g);
        }
        Ok(Field(Arc::new(Tables { spec, q, exp, log })))
    }

    /// GF(p^m) with the lexicographically smallest irreducible reduction polynomial.
    pub fn with_order(p: u32, m: u32) -> Result<Self, GfError> {
        Field::new(FieldSpec::with_default_reduction(p, m)?)
    }

    /// Smallest field with at least `min_order` elements.
    pub fn smallest_with_order_at_least(min_order: u32) -> Result<Self, GfError> {
        let (p, m) = smallest_prime_power_at_least(min_order)
            .ok_or(GfError::TooLarge(min_order as u64))?;
        Field::with_order(p, m)
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.0.spec
    }

    pub fn order(&self) -> u32 {
        self.0.q
    }

    pub fn characteristic(&self) -> u32 {
        self.0.spec.p
    }

    /// Bits per symbol: m * ceil(log2 p).
    pub fn symbol_bits(&self) -> u32 {
        symbol_bits(self.spec())
    }

    pub fn elem(&self, value: u32) -> Result<Elem, GfError> {
        if value < self.0.q {
            Ok(Elem(value as u16))
        } else {
            Err(GfError::OutOfRange { value, q: self.0.q })
        }
    }

    /// The element whose digit expansion is the integer `n` reduced into the
    /// prime subfield, i.e. `n * 1`.
    pub fn from_int(&self, n: u64) -> Elem {
        Elem((n % self.0.spec.p as u64) as u16)
    }

    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        let t = &*self.0;
        let p = t.spec.p;
        if p == 2 {
            return Elem(a.0 ^ b.0);
        }
        if t.spec.m == 1 {
            return Elem(((a.0 as u32 + b.0 as u32) % p) as u16);
        }
        let (mut x, mut y) = (a.0 as u32, b.0 as u32);
        let mut out = 0u32;
        let mut place = 1u32;
        for _ in 0..t.spec.m {
            out += ((x % p + y % p) % p) * place;
            x /= p;
            y /= p;
            place *= p;
        }
        Elem(out as u16)
    }

    pub fn neg(&self, a: Elem) -> Elem {
        let t = &*self.0;
        let p = t.spec.p;
        if p == 2 {
            return a;
        }
        let mut x = a.0 as u32;
        let mut out = 0u32;
        let mut place = 1u32;
        for _ in 0..t.spec.m {
            out += ((p - x % p) % p) * place;
            x /= p;
            place *= p;
        }
        Elem(out as u16)
    }

    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a.is_zero() || b.is_zero() {
            return Elem::ZERO;
        }
        let t = &*self.0;
        Elem(t.exp[(t.log[a.0 as usize] + t.log[b.0 as usize]) as usize])
    }

    pub fn inv(&self, a: Elem) -> Result<Elem, GfError> {
        if a.is_zero() {
            return Err(GfError::DivisionByZero);
        }
        let t = &*self.0;
        let n = t.q - 1;
        Ok(Elem(t.exp[((n - t.log[a.0 as usize]) % n) as usize]))
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Elem, e: u64) -> Elem {
        if e == 0 {
            return Elem::ONE;
        }
        if a.is_zero() {
            return Elem::ZERO;
        }
        let t = &*self.0;
        let n = (t.q - 1) as u64;
        let l = (t.log[a.0 as usize] as u64 * (e % n)) % n;
        Elem(t.exp[l as usize])
    }

    /// Inner product of two equal-length vectors.
    pub fn dot(&self, a: &[Elem], b: &[Elem]) -> Elem {
        a.iter()
            .zip(b)
            .fold(Elem::ZERO, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }

    pub fn symbol(&self, value: u32) -> Result<Symbol, GfError> {
        Ok(Symbol { value: self.elem(value)?, field: self.clone() })
    }
}

/// A field element tagged with its field, for checked arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub value: Elem,
    pub field: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn field_arith(a: &Symbol, b: &Symbol, op: ArithOp) -> Result<Symbol, GfError> {
    if a.field != b.field {
        return Err(GfError::FieldMismatch);
    }
    let f = &a.field;
    let value = match op {
        ArithOp::Add => f.add(a.value, b.value),
        ArithOp::Sub => f.sub(a.value, b.value),
        ArithOp::Mul => f.mul(a.value, b.value),
        ArithOp::Div => f.div(a.value, b.value)?,
    };
    Ok(Symbol { value, field: f.clone() })
}

pub fn symbol_bits(spec: &FieldSpec) -> u32 {
    spec.m * ceil_log2(spec.p)
}

fn ceil_log2(x: u32) -> u32 {
    if x <= 1 {
        0
    } else {
        32 - (x - 1).leading_zeros()
    }
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Returns (p, m) with p^m = n when n is a prime power.
pub fn prime_power(n: u32) -> Option<(u32, u32)> {
    if n < 2 {
        return None;
    }
    let p = (2..=n).find(|d| n.is_multiple_of(*d))?;
    let mut m = 0;
    let mut r = n;
    while r.is_multiple_of(p) {
        r /= p;
        m += 1;
    }
    (r == 1).then_some((p, m))
}

pub fn smallest_prime_power_at_least(n: u32) -> Option<(u32, u32)> {
    (n.max(2)..=MAX_ORDER).find_map(prime_power)
}

fn check_size(p: u32, m: u32) -> Result<(), GfError> {
    if !is_prime(p) {
        return Err(GfError::NotPrime(p));
    }
    if m == 0 {
        return Err(GfError::ZeroDegree);
    }
    let q = (p as u64).checked_pow(m).unwrap_or(u64::MAX);
    if q > MAX_ORDER as u64 {
        return Err(GfError::TooLarge(q));
    }
    Ok(())
}

fn digits(mut v: u32, p: u32, len: usize) -> Vec<u32> {
    let mut out = vec![0; len];
    for d in out.iter_mut() {
        *d = v % p;
        v /= p;
    }
    out
}

/// Remainder of `a` modulo monic `b`, both as low-to-high coefficient lists.
fn poly_rem(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let mut r = a.to_vec();
    let db = b.len() - 1;
    while r.len() > db {
        let lead = *r.last().unwrap();
        let shift = r.len() - 1 - db;
        if lead != 0 {
            for (i, &c) in b.iter().enumerate() {
                r[i + shift] = (r[i + shift] + p - (lead * c) % p) % p;
            }
        }
        r.pop();
    }
    r
}

fn is_irreducible(p: u32, f: &[u32]) -> bool {
    let m = f.len() - 1;
    for deg in 1..=m / 2 {
        let count = p.pow(deg as u32);
        for low in 0..count {
            let mut g = digits(low, p, deg);
            g.push(1);
            if poly_rem(f, &g, p).iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

/// Monic irreducibles ordered by coefficients from the highest degree down.
fn smallest_irreducible(p: u32, m: u32) -> Vec<u32> {
    let count = p.pow(m);
    for low in 0..count {
        let mut f = digits(low, p, m as usize);
        f.push(1);
        if is_irreducible(p, &f) {
            return f;
        }
    }
    unreachable!("irreducible polynomials exist in every degree")
}

/// Polynomial arithmetic used only while building tables.
struct SlowField<'a> {
    p: u32,
    m: u32,
    reduction: &'a [u32],
}

impl SlowField<'_> {
    fn mul(&self, a: u32, b: u32) -> u32 {
        if self.m == 1 {
            return ((a as u64 * b as u64) % self.p as u64) as u32;
        }
        let m = self.m as usize;
        let da = digits(a, self.p, m);
        let db = digits(b, self.p, m);
        let mut prod = vec![0u32; 2 * m - 1];
        for (i, &x) in da.iter().enumerate() {
            for (j, &y) in db.iter().enumerate() {
                prod[i + j] = (prod[i + j] + x * y) % self.p;
            }
        }
        let r = poly_rem(&prod, self.reduction, self.p);
        r.iter().rev().fold(0, |acc, &c| acc * self.p + c)
    }

    fn is_primitive(&self, g: u32, q: u32) -> bool {
        let mut v = g;
        let mut order = 1;
        while v != 1 {
            v = self.mul(v, g);
            order += 1;
            if order > q {
                return false;
            }
        }
        order == q - 1
    }
}

/// Dense row-major matrix over a field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![Elem::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Elem::ONE);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Elem>>) -> Result<Self, GfError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(GfError::Dimension("ragged rows".into()));
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Elem] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<Elem>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Submatrix keeping the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for r in 0..self.rows {
            for (i, &c) in cols.iter().enumerate() {
                out.set(r, i, self.get(r, c));
            }
        }
        out
    }

    pub fn mul(&self, field: &Field, other: &Matrix) -> Result<Matrix, GfError> {
        if self.cols != other.rows {
            return Err(GfError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let v = field.add(out.get(r, c), field.mul(a, other.get(k, c)));
                    out.set(r, c, v);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, field: &Field, x: &[Elem]) -> Result<Vec<Elem>, GfError> {
        if x.len() != self.cols {
            return Err(GfError::Dimension(format!("{} columns, vector of {}", self.cols, x.len())));
        }
        Ok((0..self.rows).map(|r| field.dot(self.row(r), x)).collect())
    }
}

/// Reduced row echelon form in place; returns pivot columns.
fn rref(field: &Field, m: &mut Matrix, augmented: Option<&mut Vec<Elem>>) -> Vec<usize> {
    let mut rhs = augmented;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m.cols {
        if r == m.rows {
            break;
        }
        let Some(pr) = (r..m.rows).find(|&i| !m.get(i, c).is_zero()) else {
            continue;
        };
        if pr != r {
            for cc in 0..m.cols {
                m.data.swap(pr * m.cols + cc, r * m.cols + cc);
            }
            if let Some(b) = rhs.as_deref_mut() {
                b.swap(pr, r);
            }
        }
        let inv = field.inv(m.get(r, c)).expect("pivot is nonzero");
        for cc in c..m.cols {
            let v = field.mul(m.get(r, cc), inv);
            m.set(r, cc, v);
        }
        if let Some(b) = rhs.as_deref_mut() {
            b[r] = field.mul(b[r], inv);
        }
        for i in 0..m.rows {
            if i == r {
                continue;
            }
            let factor = m.get(i, c);
            if factor.is_zero() {
                continue;
            }
            for cc in c..m.cols {
                let v = field.sub(m.get(i, cc), field.mul(factor, m.get(r, cc)));
                m.set(i, cc, v);
            }
            if let Some(b) = rhs.as_deref_mut() {
                b[i] = field.sub(b[i], field.mul(factor, b[r]));
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(field: &Field, m: &Matrix) -> usize {
    let mut work = m.clone();
    rref(field, &mut work, None).len()
}

pub fn inverse(field: &Field, m: &Matrix) -> Result<Matrix, GfError> {
    let n = m.rows;
    if m.cols != n {
        return Err(GfError::Dimension("inverse of a non-square matrix".into()));
    }
    let mut aug = Matrix::zeros(n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            aug.set(r, c, m.get(r, c));
        }
        aug.set(r, n + r, Elem::ONE);
    }
    let pivots = rref(field, &mut aug, None);
    let rank = pivots.iter().filter(|&&c| c < n).count();
    if rank < n {
        return Err(GfError::Singular { rank, size: n });
    }
    let mut out = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, aug.get(r, n + c));
        }
    }
    Ok(out)
}

/// Outcome of [`gaussian_solve`] on a consistent system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solution {
    Unique(Vec<Elem>),
    Deficient(RankReport),
}

/// Rank information for a system that does not pin down every unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankReport {
    pub rank: usize,
    pub unknowns: usize,
    /// Unknowns whose value is not implied by the equations.
    pub undetermined: Vec<usize>,
    /// Values of the unknowns that are implied anyway.
    pub partial: Vec<Option<Elem>>,
}

/// Solves `a x = b`. Unknowns that the system fixes are reported even when
/// others stay free.
pub fn gaussian_solve(field: &Field, a: &Matrix, b: &[Elem]) -> Result<Solution, GfError> {
    if b.len() != a.rows {
        return Err(GfError::Dimension(format!("{} equations, {} right-hand sides", a.rows, b.len())));
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let pivots = rref(field, &mut m, Some(&mut rhs));
    let rank = pivots.len();
    if rhs[rank..].iter().any(|v| !v.is_zero()) {
        return Err(GfError::Inconsistent { rank });
    }
    let mut partial = vec![None; a.cols];
    for (r, &c) in pivots.iter().enumerate() {
        let touches_free = (0..a.cols).any(|cc| cc != c && !pivots.contains(&cc) && !m.get(r, cc).is_zero());
        if !touches_free {
            partial[c] = Some(rhs[r]);
        }
    }
    if partial.iter().all(Option::is_some) {
        return Ok(Solution::Unique(partial.into_iter().map(Option::unwrap).collect()));
    }
    let undetermined = (0..a.cols).filter(|&c| partial[c].is_none()).collect();
    Ok(Solution::Deficient(RankReport { rank, unknowns: a.cols, undetermined, partial }))
}
