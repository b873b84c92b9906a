//! Single- and multi-node repair with exact read accounting.
//!
//! Every symbol fetched from a surviving node goes through a [`ReadTrace`],
//! which caches it; later steps of the same job reuse cached symbols for free.

use std::collections::{BTreeMap, HashMap};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::class_a::{self, ClassAError};
use crate::code::{CodeError, CodeSpec};
use crate::gf::{Elem, GfError, RankReport};
use crate::layout::{b_targets, row_reads, CodeArray, Pos};
use crate::metrics::OpCounter;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("repair precondition violated: {0}")]
    Precondition(String),
    #[error("symbol (row {row}, node {node}) is erased and cannot be read")]
    Erased { node: usize, row: usize },
    #[error("erasure pattern {pattern:?} is not recoverable (rank {} of {})", report.rank, report.unknowns)]
    Unrecoverable { pattern: Vec<usize>, report: RankReport },
    #[error("repaired node {node} differs from the original")]
    Mismatch { node: usize },
    #[error(transparent)]
    ClassA(ClassAError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Field(#[from] GfError),
}

impl From<ClassAError> for RepairError {
    fn from(e: ClassAError) -> Self {
        match e {
            ClassAError::Unrecoverable { pattern, report } => RepairError::Unrecoverable { pattern, report },
            other => RepairError::ClassA(other),
        }
    }
}

/// A symbol slot in the code array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRow {
    pub node: usize,
    pub row: usize,
}

impl NodeRow {
    fn data(p: Pos) -> Self {
        NodeRow { node: p.col, row: p.row }
    }
}

impl Serialize for NodeRow {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.node, self.row].serialize(s)
    }
}

/// Reads issued by one repair job and the symbols it knows.
#[derive(Debug, Clone, Default)]
pub struct ReadTrace {
    reads: Vec<NodeRow>,
    cache: HashMap<NodeRow, Elem>,
    per_symbol: BTreeMap<usize, usize>,
    fallbacks: Vec<usize>,
    ops: OpCounter,
}

impl ReadTrace {
    pub fn reads(&self) -> &[NodeRow] {
        &self.reads
    }

    pub fn total(&self) -> usize {
        self.reads.len()
    }

    /// Reads charged to the repaired symbol of each row.
    pub fn per_symbol(&self) -> &BTreeMap<usize, usize> {
        &self.per_symbol
    }

    /// Rows repaired from a Class A parity because no Class B parity applied.
    pub fn fallbacks(&self) -> &[usize] {
        &self.fallbacks
    }

    pub fn ops(&self) -> OpCounter {
        self.ops
    }

    pub fn is_cached(&self, slot: NodeRow) -> bool {
        self.cache.contains_key(&slot)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.len()
    }

    fn fetch(&mut self, arr: &CodeArray, node: usize, row: usize) -> Result<Elem, RepairError> {
        let slot = NodeRow { node, row };
        if let Some(&v) = self.cache.get(&slot) {
            return Ok(v);
        }
        let v = arr.read(row, node).ok_or(RepairError::Erased { node, row })?;
        self.reads.push(slot);
        self.cache.insert(slot, v);
        Ok(v)
    }

    fn learn(&mut self, slot: NodeRow, v: Elem) {
        self.cache.insert(slot, v);
    }

    fn known(&self, slot: NodeRow) -> Option<Elem> {
        self.cache.get(&slot).copied()
    }

    fn charge(&mut self, row: usize, since: usize) {
        *self.per_symbol.entry(row).or_default() += self.reads.len() - since;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

impl Serialize for ReadTrace {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let per_symbol: BTreeMap<String, usize> = self.per_symbol.iter().map(|(r, c)| (r.to_string(), *c)).collect();
        let mut st = s.serialize_struct("ReadTrace", 3)?;
        st.serialize_field("reads", &self.reads)?;
        st.serialize_field("perSymbol", &per_symbol)?;
        st.serialize_field("total", &self.total())?;
        st.end()
    }
}

fn check_only_erased(arr: &CodeArray, spec: &CodeSpec, node: usize) -> Result<(), RepairError> {
    if arr.k() != spec.k() || arr.n() < spec.n() {
        return Err(RepairError::Precondition(format!(
            "array is {}x{}, code needs {}x{}",
            arr.k(),
            arr.n(),
            spec.k(),
            spec.n()
        )));
    }
    if node >= spec.n() {
        return Err(RepairError::Precondition(format!("node {node} out of range 0..{}", spec.n())));
    }
    let others: Vec<usize> = (0..spec.n()).filter(|&c| c != node && arr.node_erased(c)).collect();
    if !others.is_empty() {
        return Err(RepairError::Precondition(format!("nodes {others:?} are erased besides node {node}")));
    }
    Ok(())
}

/// Solves `d_{row, j}` from the first Class A parity of `row`, reading what
/// is not cached.
fn solve_from_first_parity(
    arr: &CodeArray,
    spec: &CodeSpec,
    trace: &mut ReadTrace,
    row: usize,
    j: usize,
) -> Result<Elem, RepairError> {
    let k = spec.k();
    let a = spec.class_a();
    let f = spec.field();
    let mut acc = trace.fetch(arr, k, row)?;
    for c in (0..k).filter(|&c| c != j) {
        let d = trace.fetch(arr, c, row)?;
        acc = f.sub(acc, f.mul(a.coeff(c, k), d));
    }
    trace.ops.mul(k as u64);
    trace.ops.add(k as u64 - 1);
    Ok(f.div(acc, a.coeff(j, k))?)
}

/// Rebuilds data node `j`.
///
/// Row `j` is solved from its first Class A parity; the piggybacked parities
/// of row `j` then yield `tau` more symbols at one read each. The remaining
/// symbols are taken, in listed order, from the Class B parity needing the
/// fewest uncached reads (ties: higher node, then lower row), or from a
/// Class A parity when no Class B parity covers them.
pub fn repair_data_node(arr: &CodeArray, j: usize, spec: &CodeSpec) -> Result<(Vec<Elem>, ReadTrace), RepairError> {
    let k = spec.k();
    if j >= k {
        return Err(RepairError::Precondition(format!("node {j} is not a data node")));
    }
    check_only_erased(arr, spec, j)?;
    let f = spec.field();
    let a = spec.class_a();
    let mut trace = ReadTrace::default();

    let since = trace.total();
    for p in row_reads(j, k).iter() {
        trace.fetch(arr, p.col, p.row)?;
    }
    let djj = solve_from_first_parity(arr, spec, &mut trace, j, j)?;
    trace.learn(NodeRow { node: j, row: j }, djj);
    trace.charge(j, since);

    let row_j: Vec<Elem> = (0..k)
        .map(|c| trace.known(NodeRow { node: c, row: j }).expect("row j is cached"))
        .collect();
    for u in spec.n_a() - spec.tau()..spec.n_a() {
        let since = trace.total();
        let stored = trace.fetch(arr, u, j)?;
        let mds = a.mds_parity(&row_j, u, &mut trace.ops);
        let piggyback = f.sub(stored, mds);
        trace.ops.add(1);
        let src = a.piggyback_source(j, u).expect("node is piggybacked");
        trace.learn(NodeRow::data(src), piggyback);
        trace.charge(src.row, since);
    }

    for target in b_targets(j, k, spec.tau()).iter() {
        let since = trace.total();
        let value = match best_class_b_parity(spec, &trace, *target) {
            Some((node, t)) => {
                let mut acc = trace.fetch(arr, node, t)?;
                let terms = spec.class_b_terms(t, node);
                for &p in terms.iter().filter(|&&p| p != *target) {
                    let d = trace.fetch(arr, p.col, p.row)?;
                    acc = f.sub(acc, d);
                }
                trace.ops.add(terms.len() as u64 - 1);
                acc
            }
            None => {
                trace.fallbacks.push(target.row);
                solve_from_first_parity(arr, spec, &mut trace, target.row, j)?
            }
        };
        trace.learn(NodeRow::data(*target), value);
        trace.charge(target.row, since);
    }

    let column = (0..k)
        .map(|i| trace.known(NodeRow { node: j, row: i }).expect("every row repaired"))
        .collect();
    Ok((column, trace))
}

/// Covering Class B parity with the fewest uncached reads whose other
/// failed-column terms are already known.
fn best_class_b_parity(spec: &CodeSpec, trace: &ReadTrace, target: Pos) -> Option<(usize, usize)> {
    let mut best: Option<(usize, std::cmp::Reverse<usize>, usize)> = None;
    for node in spec.n_a()..spec.n() {
        for t in 0..spec.k() {
            let terms = spec.class_b_terms(t, node);
            if !terms.contains(&target) {
                continue;
            }
            let others = terms.iter().filter(|&&p| p != target);
            if others.clone().any(|p| p.col == target.col && !trace.is_cached(NodeRow::data(*p))) {
                continue;
            }
            let cost = usize::from(!trace.is_cached(NodeRow { node, row: t }))
                + others.filter(|p| !trace.is_cached(NodeRow::data(**p))).count();
            let key = (cost, std::cmp::Reverse(node), t);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, node, t)| (node.0, t))
}

/// A repaired parity node: each symbol is rebuilt by its own job.
#[derive(Debug, Clone)]
pub struct ParityRepair {
    pub column: Vec<Elem>,
    pub rows: Vec<ReadTrace>,
}

impl ParityRepair {
    pub fn total_reads(&self) -> usize {
        self.rows.iter().map(ReadTrace::total).sum()
    }

    pub fn ops(&self) -> OpCounter {
        self.rows.iter().map(ReadTrace::ops).sum()
    }
}

/// Rebuilds parity node `node` symbol by symbol from the data it covers.
pub fn repair_parity_node(arr: &CodeArray, node: usize, spec: &CodeSpec) -> Result<ParityRepair, RepairError> {
    let k = spec.k();
    if node < k {
        return Err(RepairError::Precondition(format!("node {node} is a data node")));
    }
    check_only_erased(arr, spec, node)?;
    let f = spec.field();
    let a = spec.class_a();
    let mut column = Vec::with_capacity(k);
    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let mut trace = ReadTrace::default();
        let value = if node < spec.n_a() {
            let row: Vec<Elem> = (0..k).map(|c| trace.fetch(arr, c, i)).collect::<Result<_, _>>()?;
            let mut v = a.mds_parity(&row, node, &mut trace.ops);
            if let Some(src) = a.piggyback_source(i, node) {
                v = f.add(v, trace.fetch(arr, src.col, src.row)?);
                trace.ops.add(1);
            }
            v
        } else {
            let terms = spec.class_b_terms(i, node);
            let mut acc = Elem::ZERO;
            for &p in terms {
                acc = f.add(acc, trace.fetch(arr, p.col, p.row)?);
            }
            trace.ops.add(terms.len().saturating_sub(1) as u64);
            acc
        };
        trace.charge(i, 0);
        column.push(value);
        rows.push(trace);
    }
    Ok(ParityRepair { column, rows })
}

/// Recovers the data from the data and Class A nodes, then re-encodes every
/// node. Class B nodes play no part in decoding.
pub fn repair_multi(arr: &CodeArray, failed: &[usize], spec: &CodeSpec) -> Result<CodeArray, RepairError> {
    if arr.k() != spec.k() || arr.n() < spec.n() {
        return Err(RepairError::Precondition("array does not match the code".into()));
    }
    if let Some(bad) = failed.iter().find(|&&c| c >= spec.n()) {
        return Err(RepairError::Precondition(format!("node {bad} out of range 0..{}", spec.n())));
    }
    let mut work = arr.truncate(spec.n());
    for &c in failed {
        work.erase_node(c);
    }
    let data = class_a::decode_multi_class_a(&work, spec.class_a())?;
    Ok(spec.encode(&data, &mut OpCounter::default())?)
}

/// Drops the last `count` Class B nodes.
pub fn puncture(spec: &CodeSpec, count: usize) -> Result<CodeSpec, RepairError> {
    Ok(spec.punctured(count)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::CodeParams;
    use crate::layout::DataArray;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoded(spec: &CodeSpec, seed: u64) -> CodeArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DataArray::random(spec.k(), spec.field(), &mut rng);
        spec.encode(&data, &mut OpCounter::default()).unwrap()
    }

    #[test]
    fn ten_five_node_zero_reads_nine() {
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 8, 1)).unwrap();
        let arr = encoded(&spec, 3);
        let mut broken = arr.clone();
        broken.erase_node(0);
        let (col, trace) = repair_data_node(&broken, 0, &spec).unwrap();
        assert_eq!(col, arr.column(0));
        assert_eq!(trace.total(), 9);
        assert_eq!(trace.per_symbol()[&0], 5);
        assert_eq!(trace.per_symbol()[&1], 1);
        assert!(trace.fallbacks().is_empty());
        let mut seen = std::collections::HashSet::new();
        assert!(trace.reads().iter().all(|r| seen.insert(*r)));
    }

    #[test]
    fn trace_json_shape() {
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 8, 1)).unwrap();
        let mut arr = encoded(&spec, 3);
        arr.erase_node(2);
        let (_, trace) = repair_data_node(&arr, 2, &spec).unwrap();
        let v: serde_json::Value = serde_json::from_str(&trace.to_json()).unwrap();
        assert_eq!(v["total"], 9);
        assert_eq!(v["reads"].as_array().unwrap().len(), 9);
        assert_eq!(v["reads"][0].as_array().unwrap().len(), 2);
        assert!(v["perSymbol"].is_object());
    }

    #[test]
    fn parity_node_read_counts() {
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 7, 1)).unwrap();
        let arr = encoded(&spec, 9);
        for (node, per) in [(5, 5), (6, 6)] {
            let mut broken = arr.clone();
            broken.erase_node(node);
            let r = repair_parity_node(&broken, node, &spec).unwrap();
            assert_eq!(r.column, arr.column(node));
            assert!(r.rows.iter().all(|t| t.total() == per));
        }
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 8, 1)).unwrap();
        let arr = encoded(&spec, 9);
        let mut broken = arr.clone();
        broken.erase_node(9);
        let r = repair_parity_node(&broken, 9, &spec).unwrap();
        assert_eq!(r.column, arr.column(9));
        assert!(r.rows.iter().all(|t| t.total() == 1));
    }

    #[test]
    fn other_erasures_rejected() {
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 8, 1)).unwrap();
        let mut arr = encoded(&spec, 1);
        arr.erase_node(0);
        arr.erase_node(3);
        assert!(matches!(repair_data_node(&arr, 0, &spec), Err(RepairError::Precondition(_))));
    }

    #[test]
    fn multi_node_examples() {
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 7, 1)).unwrap();
        let arr = encoded(&spec, 5);
        assert_eq!(repair_multi(&arr, &[1, 3], &spec).unwrap(), arr);
        let spec = CodeSpec::build(&CodeParams::new(5, 8, 6, 1)).unwrap();
        let arr = encoded(&spec, 5);
        assert_eq!(repair_multi(&arr, &[0, 5, 8], &spec).unwrap(), arr);
    }

    #[test]
    fn puncture_range() {
        let spec = CodeSpec::build(&CodeParams::new(5, 7, 8, 1)).unwrap();
        assert_eq!(puncture(&spec, 0).unwrap(), spec);
        assert_eq!(puncture(&spec, 3).unwrap().n(), 7);
        assert!(puncture(&spec, 4).is_err());
    }
}
