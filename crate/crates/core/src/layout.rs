//! Array geometry: positions, the three per-node index sets, and the data
//! and code arrays.
//!
//! Node `j` is column `j`; stripe `i` is row `i`. The data array is `k x k`
//! and the code array is `k x n`.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{Elem, Field, FieldSpec, GfError};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("node {j} out of range for k = {k}")]
    NodeOutOfRange { j: usize, k: usize },
    #[error("tau = {tau} outside 1..={max} for k = {k}")]
    TauOutOfRange { tau: usize, k: usize, max: i64 },
    #[error("bad code array encoding: {0}")]
    Format(String),
    #[error(transparent)]
    Field(#[from] GfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A data position `(row, col)`, serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }
}

impl From<[usize; 2]> for Pos {
    fn from([row, col]: [usize; 2]) -> Self {
        Pos { row, col }
    }
}

impl From<Pos> for [usize; 2] {
    fn from(p: Pos) -> Self {
        [p.row, p.col]
    }
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d[{},{}]", self.row, self.col)
    }
}

/// `(a)_k`: remainder in `0..k` for any sign of `a`.
pub fn wrap(a: i64, k: usize) -> usize {
    a.rem_euclid(k as i64) as usize
}

/// Offset of `to` after `from`, cyclically.
fn offset(from: usize, to: usize, k: usize) -> usize {
    (to + k - from) % k
}

/// Ordered list of positions with no repeats.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<Pos>);

impl IndexSet {
    pub fn new(items: Vec<Pos>) -> Self {
        debug_assert_eq!(items.iter().collect::<HashSet<_>>().len(), items.len());
        IndexSet(items)
    }

    pub fn as_slice(&self) -> &[Pos] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: &Pos) -> bool {
        self.0.contains(p)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pos> {
        self.0.iter()
    }
}

impl<'a> IntoIterator for &'a IndexSet {
    type Item = &'a Pos;
    type IntoIter = std::slice::Iter<'a, Pos>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// The index sets attached to data node `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSets {
    /// Row `j` outside column `j`: read together with the first MDS parity.
    pub row_reads: IndexSet,
    /// Column-`j` symbols left for Class B parities.
    pub b_targets: IndexSet,
    /// Row-`j` symbols that are Class B targets of other columns.
    pub row_overlap: IndexSet,
}

fn check_node(j: usize, k: usize, tau: usize) -> Result<(), LayoutError> {
    if j >= k {
        return Err(LayoutError::NodeOutOfRange { j, k });
    }
    if tau < 1 || tau + 2 > k {
        return Err(LayoutError::TauOutOfRange { tau, k, max: k as i64 - 2 });
    }
    Ok(())
}

pub fn index_sets(j: usize, k: usize, tau: usize) -> Result<NodeSets, LayoutError> {
    check_node(j, k, tau)?;
    Ok(NodeSets {
        row_reads: row_reads(j, k),
        b_targets: b_targets(j, k, tau),
        row_overlap: row_overlap(j, k, tau),
    })
}

pub fn row_reads(j: usize, k: usize) -> IndexSet {
    IndexSet((1..k).map(|s| Pos::new(j, (j + s) % k)).collect())
}

pub fn b_targets(j: usize, k: usize, tau: usize) -> IndexSet {
    IndexSet((tau + 1..k).map(|s| Pos::new((j + s) % k, j)).collect())
}

pub fn row_overlap(j: usize, k: usize, tau: usize) -> IndexSet {
    IndexSet((1..k - tau).map(|s| Pos::new(j, (j + s) % k)).collect())
}

/// True when `p` belongs to the Class B target set of its own column.
pub fn is_b_target(p: Pos, k: usize, tau: usize) -> bool {
    let s = offset(p.col, p.row, k);
    s > tau && s < k
}

/// True when `p` belongs to the row overlap set of node `j`.
pub fn in_row_overlap(p: Pos, j: usize, k: usize, tau: usize) -> bool {
    let s = offset(j, p.col, k);
    p.row == j && s >= 1 && s + tau < k
}

/// The `k x k` data array, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataArray {
    k: usize,
    symbols: Vec<Elem>,
}

impl DataArray {
    pub fn new(k: usize, symbols: Vec<Elem>) -> Self {
        assert_eq!(symbols.len(), k * k, "data array must be k x k");
        DataArray { k, symbols }
    }

    pub fn zeros(k: usize) -> Self {
        DataArray { k, symbols: vec![Elem::ZERO; k * k] }
    }

    pub fn random<R: Rng + ?Sized>(k: usize, field: &Field, rng: &mut R) -> Self {
        let q = field.order();
        DataArray { k, symbols: (0..k * k).map(|_| Elem(rng.gen_range(0..q) as u16)).collect() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, p: Pos) -> Elem {
        self.symbols[p.row * self.k + p.col]
    }

    pub fn set(&mut self, p: Pos, v: Elem) {
        self.symbols[p.row * self.k + p.col] = v;
    }

    pub fn row(&self, i: usize) -> &[Elem] {
        &self.symbols[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, j: usize) -> Vec<Elem> {
        (0..self.k).map(|i| self.get(Pos::new(i, j))).collect()
    }
}

const MAGIC: &[u8; 6] = b"PBDSS1";

/// The `k x n` code array with a per-symbol erasure mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeArray {
    k: usize,
    n: usize,
    field: FieldSpec,
    symbols: Vec<Elem>,
    erased: Vec<bool>,
}

impl CodeArray {
    pub fn new(k: usize, n: usize, field: FieldSpec) -> Self {
        CodeArray { k, n, field, symbols: vec![Elem::ZERO; k * n], erased: vec![false; k * n] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn get(&self, row: usize, node: usize) -> Elem {
        self.symbols[row * self.n + node]
    }

    pub fn set(&mut self, row: usize, node: usize, v: Elem) {
        self.symbols[row * self.n + node] = v;
    }

    /// Symbol value unless erased.
    pub fn read(&self, row: usize, node: usize) -> Option<Elem> {
        (!self.erased[row * self.n + node]).then(|| self.get(row, node))
    }

    pub fn column(&self, node: usize) -> Vec<Elem> {
        (0..self.k).map(|i| self.get(i, node)).collect()
    }

    pub fn set_column(&mut self, node: usize, values: &[Elem]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, node, v);
            self.erased[i * self.n + node] = false;
        }
    }

    pub fn is_erased(&self, row: usize, node: usize) -> bool {
        self.erased[row * self.n + node]
    }

    pub fn node_erased(&self, node: usize) -> bool {
        (0..self.k).any(|i| self.is_erased(i, node))
    }

    pub fn erased_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&c| self.node_erased(c)).collect()
    }

    /// Marks every symbol of `node` erased and zeroes it.
    pub fn erase_node(&mut self, node: usize) {
        for i in 0..self.k {
            self.erased[i * self.n + node] = true;
            self.symbols[i * self.n + node] = Elem::ZERO;
        }
    }

    pub fn data(&self) -> DataArray {
        let mut d = DataArray::zeros(self.k);
        for i in 0..self.k {
            for j in 0..self.k {
                d.set(Pos::new(i, j), self.get(i, j));
            }
        }
        d
    }

    /// Keeps the first `n` columns.
    pub fn truncate(&self, n: usize) -> CodeArray {
        let mut out = CodeArray::new(self.k, n, self.field.clone());
        for i in 0..self.k {
            for c in 0..n {
                out.set(i, c, self.get(i, c));
                out.erased[i * n + c] = self.is_erased(i, c);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 2 * self.symbols.len() + self.erased.len() / 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.k as u16).to_le_bytes());
        out.extend_from_slice(&(self.n as u16).to_le_bytes());
        out.extend_from_slice(&self.field.p.to_le_bytes());
        out.push(self.field.m as u8);
        out.push(self.field.reduction.len() as u8);
        for &c in &self.field.reduction {
            out.extend_from_slice(&(c as u16).to_le_bytes());
        }
        for s in &self.symbols {
            out.extend_from_slice(&s.0.to_le_bytes());
        }
        let mut bits = vec![0u8; self.erased.len().div_ceil(8)];
        for (i, &e) in self.erased.iter().enumerate() {
            if e {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LayoutError> {
        let mut cur = Cursor { bytes, at: 0 };
        if cur.take(6)? != MAGIC {
            return Err(LayoutError::Format("missing PBDSS1 magic".into()));
        }
        let k = cur.u16()? as usize;
        let n = cur.u16()? as usize;
        let p = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        let m = cur.take(1)?[0] as u32;
        let len = cur.take(1)?[0] as usize;
        let reduction = (0..len).map(|_| cur.u16().map(u32::from)).collect::<Result<Vec<_>, _>>()?;
        let field = FieldSpec { p, m, reduction };
        let q = field.order();
        let symbols = (0..k * n)
            .map(|_| {
                let v = cur.u16()?;
                if (v as u32) < q {
                    Ok(Elem(v))
                } else {
                    Err(LayoutError::Format(format!("symbol {v} outside GF({q})")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bits = cur.take((k * n).div_ceil(8))?;
        let erased = (0..k * n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        if cur.at != bytes.len() {
            return Err(LayoutError::Format("trailing bytes".into()));
        }
        Ok(CodeArray { k, n, field, symbols, erased })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], LayoutError> {
        let end = self.at + len;
        let s = self.bytes.get(self.at..end).ok_or_else(|| LayoutError::Format("truncated input".into()))?;
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, LayoutError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(v: &[(usize, usize)]) -> Vec<Pos> {
        v.iter().map(|&(r, c)| Pos::new(r, c)).collect()
    }

    #[test]
    fn sets_for_node_zero_k5() {
        let s = index_sets(0, 5, 1).unwrap();
        assert_eq!(s.b_targets.as_slice(), pos(&[(2, 0), (3, 0), (4, 0)]));
        assert_eq!(s.row_overlap.as_slice(), pos(&[(0, 1), (0, 2), (0, 3)]));
        assert_eq!(s.row_reads.as_slice(), pos(&[(0, 1), (0, 2), (0, 3), (0, 4)]));
    }

    #[test]
    fn parameter_checks() {
        assert!(matches!(index_sets(5, 5, 1), Err(LayoutError::NodeOutOfRange { .. })));
        assert!(matches!(index_sets(0, 5, 0), Err(LayoutError::TauOutOfRange { .. })));
        assert!(matches!(index_sets(0, 5, 4), Err(LayoutError::TauOutOfRange { .. })));
    }

    #[test]
    fn wrap_is_non_negative() {
        assert_eq!(wrap(-3, 5), 2);
        assert_eq!(wrap(7, 5), 2);
        assert_eq!(wrap(-5, 5), 0);
    }

    #[test]
    fn binary_roundtrip() {
        let field = FieldSpec { p: 3, m: 2, reduction: vec![1, 0, 1] };
        let mut a = CodeArray::new(3, 5, field);
        for i in 0..3 {
            for c in 0..5 {
                a.set(i, c, Elem(((i * 5 + c) % 9) as u16));
            }
        }
        a.erase_node(2);
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..6], b"PBDSS1");
        assert_eq!(CodeArray::from_bytes(&bytes).unwrap(), a);
        assert!(CodeArray::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
