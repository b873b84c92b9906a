//! Class B: parity nodes whose symbols are plain sums of data symbols, laid
//! out so that column-`j` symbols the Class A step leaves behind can be
//! rebuilt from few extra reads.
//!
//! Two layouts are provided: a closed-form one ([`construct1`]) and a greedy
//! one driven by a matrix of per-symbol read costs ([`construct2`]).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{b_targets, in_row_overlap, is_b_target, row_overlap, wrap, Pos};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassBError {
    #[error("invalid Class B parameters: {0}")]
    Params(String),
    #[error("{0} is not a Class B target position")]
    NotTarget(Pos),
    #[error("empty index set")]
    EmptySet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Construction {
    /// Closed-form sums.
    Sums,
    /// Greedy read-cost driven layout; odd `k` falls back to [`Construction::Sums`].
    Heuristic,
}

impl TryFrom<u8> for Construction {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Construction::Sums),
            2 => Ok(Construction::Heuristic),
            _ => Err(format!("construction must be 1 or 2, got {v}")),
        }
    }
}

impl From<Construction> for u8 {
    fn from(c: Construction) -> u8 {
        match c {
            Construction::Sums => 1,
            Construction::Heuristic => 2,
        }
    }
}

/// One Class B node: for each row `t`, the data positions summed into it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassBNode {
    pub parities: Vec<Vec<Pos>>,
    /// Slots the greedy layout could not fill.
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassBSpec {
    n_a: usize,
    n_b: usize,
    k: usize,
    tau: usize,
    construction: Construction,
    nodes: Vec<ClassBNode>,
}

pub fn check_params(k: usize, n_b: usize, tau: usize) -> Result<(), ClassBError> {
    if n_b < k || (n_b > k && n_b + tau >= 2 * k) {
        return Err(ClassBError::Params(format!(
            "n_B = {n_b} must satisfy k <= n_B < 2k - tau = {}",
            2 * k - tau
        )));
    }
    // Without Class B nodes there are no targets to constrain tau.
    if tau < 1 || (n_b > k && tau + 2 > k) {
        return Err(ClassBError::Params(format!("tau = {tau} must lie in 1..=k-2 for k = {k}")));
    }
    Ok(())
}

impl ClassBSpec {
    /// Wraps explicit parity sets, e.g. read back from a file.
    pub fn from_parts(
        n_a: usize,
        n_b: usize,
        k: usize,
        tau: usize,
        construction: Construction,
        nodes: Vec<ClassBNode>,
    ) -> Result<Self, ClassBError> {
        check_params(k, n_b, tau)?;
        if nodes.len() != n_b - k {
            return Err(ClassBError::Params(format!("{} nodes given, n_B - k = {}", nodes.len(), n_b - k)));
        }
        for node in &nodes {
            if node.parities.len() != k {
                return Err(ClassBError::Params(format!("node with {} parities, expected {k}", node.parities.len())));
            }
            if node.parities.iter().flatten().any(|p| p.row >= k || p.col >= k) {
                return Err(ClassBError::Params("parity term outside the data array".into()));
            }
        }
        Ok(ClassBSpec { n_a, n_b, k, tau, construction, nodes })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn nodes(&self) -> &[ClassBNode] {
        &self.nodes
    }

    /// Terms of the parity stored at global node `node`, row `t`.
    pub fn parity(&self, node: usize, t: usize) -> &[Pos] {
        &self.nodes[node - self.n_a].parities[t]
    }

    /// Drops the last `count` nodes.
    pub fn punctured(&self, count: usize) -> Result<Self, ClassBError> {
        if count > self.nodes.len() {
            return Err(ClassBError::Params(format!(
                "cannot puncture {count} of {} Class B nodes",
                self.nodes.len()
            )));
        }
        let mut out = self.clone();
        out.nodes.truncate(self.nodes.len() - count);
        out.n_b -= count;
        Ok(out)
    }
}

/// Closed-form layout. With `drop_row_terms`, a full-length code keeps only
/// the single target term in each parity.
pub fn construct1(k: usize, n_a: usize, n_b: usize, tau: usize, drop_row_terms: bool) -> Result<ClassBSpec, ClassBError> {
    check_params(k, n_b, tau)?;
    let n = n_a + n_b - k;
    let full = n_b - k == k - tau - 1;
    let nodes = (n_a..n)
        .map(|l| ClassBNode { parities: (0..k).map(|t| sum_terms(k, n_a, tau, l, t, drop_row_terms && full)).collect(), padding: 0 })
        .collect();
    Ok(ClassBSpec { n_a, n_b, k, tau, construction: Construction::Sums, nodes })
}

fn sum_terms(k: usize, n_a: usize, tau: usize, l: usize, t: usize, single: bool) -> Vec<Pos> {
    let (k_, n_a, tau, l, t) = (k as i64, n_a as i64, tau as i64, l as i64, t as i64);
    let mut terms = vec![Pos::new(wrap(tau + 1 - n_a + l + t, k), t as usize)];
    if !single {
        let last = k_ - tau - 3 + n_a - l;
        terms.extend((0..=last).map(|s| Pos::new(t as usize, wrap(1 + s + t, k))));
    }
    terms
}

/// Read cost of a data symbol; `INFINITE` until some parity covers it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadCost(pub u32);

impl ReadCost {
    pub const INFINITE: ReadCost = ReadCost(u32::MAX);
    const ONE: ReadCost = ReadCost(1);

    pub fn is_finite(self) -> bool {
        self != ReadCost::INFINITE
    }
}

impl std::fmt::Display for ReadCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("inf")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadCostMatrix {
    k: usize,
    costs: Vec<ReadCost>,
}

impl ReadCostMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, p: Pos) -> ReadCost {
        self.costs[p.row * self.k + p.col]
    }

    pub fn set(&mut self, p: Pos, c: ReadCost) {
        self.costs[p.row * self.k + p.col] = c;
    }

    /// Maximal entries of `set`, in the order `set` lists them.
    fn argmax_listed(&self, set: &[Pos]) -> Vec<Pos> {
        let Some(max) = set.iter().map(|&p| self.get(p)).max() else {
            return Vec::new();
        };
        set.iter().copied().filter(|&p| self.get(p) == max).collect()
    }
}

/// Costs right after the Class A step: unknown for Class B targets, `k` on
/// the diagonal (solved from the MDS parity), 1 elsewhere.
pub fn init_read_cost(k: usize, tau: usize) -> ReadCostMatrix {
    let mut costs = vec![ReadCost::ONE; k * k];
    for i in 0..k {
        costs[i * k + i] = ReadCost(k as u32);
    }
    for j in 0..k {
        for p in b_targets(j, k, tau).iter() {
            costs[p.row * k + p.col] = ReadCost::INFINITE;
        }
    }
    ReadCostMatrix { k, costs }
}

/// Entries of `set` holding the maximal cost, in row-major order.
pub fn psi_argmax(a: &ReadCostMatrix, set: &[Pos]) -> Result<Vec<Pos>, ClassBError> {
    if set.is_empty() {
        return Err(ClassBError::EmptySet);
    }
    let mut out = a.argmax_listed(set);
    out.sort_unstable();
    Ok(out)
}

/// Symbols that must be fetched to rebuild target `d` from a parity with the
/// given terms, once the failed node's row is cached.
pub fn read_cost(d: Pos, parity: &[Pos], k: usize, tau: usize) -> Result<usize, ClassBError> {
    if !is_b_target(d, k, tau) {
        return Err(ClassBError::NotTarget(d));
    }
    Ok(read_of(d, parity, k, tau))
}

fn read_of(d: Pos, terms: &[Pos], k: usize, tau: usize) -> usize {
    terms.iter().filter(|&&p| !in_row_overlap(p, d.col, k, tau)).count()
}

/// Lowers costs of every symbol covered by `node`.
pub fn update_read_cost(a: &mut ReadCostMatrix, node: &ClassBNode, tau: usize) {
    let k = a.k;
    for terms in &node.parities {
        for &d in terms {
            let r = ReadCost(read_of(d, terms, k, tau) as u32);
            if r < a.get(d) {
                a.set(d, r);
            }
        }
    }
}

/// How ties among equally costly candidates are resolved.
#[derive(Debug, Clone)]
pub enum TieBreak {
    /// Greedy node builder takes the latest-listed candidate, the last-node
    /// builder the earliest.
    Deterministic,
    Seeded(Box<ChaCha8Rng>),
}

impl TieBreak {
    pub fn seeded(seed: u64) -> Self {
        TieBreak::Seeded(Box::new(ChaCha8Rng::seed_from_u64(seed)))
    }

    fn order(&mut self, mut ties: Vec<Pos>, latest_first: bool) -> Vec<Pos> {
        match self {
            TieBreak::Deterministic => {
                if latest_first {
                    ties.reverse();
                }
            }
            TieBreak::Seeded(rng) => ties.shuffle(rng),
        }
        ties
    }
}

type Slot = Option<Pos>;

struct Draft {
    k: usize,
    sets: Vec<Vec<Slot>>,
    used: Vec<bool>,
}

impl Draft {
    fn new(k: usize) -> Self {
        Draft { k, sets: vec![Vec::new(); k], used: vec![false; k * k] }
    }

    fn used(&self, p: Pos) -> bool {
        self.used[p.row * self.k + p.col]
    }

    fn push(&mut self, t: usize, slot: Slot) {
        if let Some(p) = slot {
            self.used[p.row * self.k + p.col] = true;
        }
        self.sets[t].push(slot);
    }

    fn min_len(&self) -> usize {
        self.sets.iter().map(Vec::len).min().unwrap_or(0)
    }

    fn terms(&self, t: usize) -> Vec<Pos> {
        self.sets[t].iter().flatten().copied().collect()
    }

    fn finish(self) -> ClassBNode {
        let padding = self.sets.iter().flatten().filter(|s| s.is_none()).count();
        ClassBNode { parities: self.sets.into_iter().map(|s| s.into_iter().flatten().collect()).collect(), padding }
    }
}

/// Builds one node whose parities have at most `rho` terms.
///
/// First every parity gets a target symbol of maximal cost, paired when
/// possible with its mirror in the target's row so both become cheap. Then
/// row-overlap symbols are appended while they strictly lower their own cost.
pub fn construct_node_heuristic(a: &ReadCostMatrix, rho: usize, tau: usize, ties: &mut TieBreak) -> ClassBNode {
    let k = a.k;
    let mut u = Draft::new(k);
    let improves = |a: &ReadCostMatrix, p: Pos, terms: &[Pos]| {
        let cost = a.get(p);
        ReadCost(read_of(p, terms, k, tau) as u32) < cost && cost > ReadCost::ONE
    };

    let (mut t, mut j, mut stall) = (0, 0, 0);
    while u.min_len() < 2 && t < k {
        let open: Vec<Pos> = b_targets(j, k, tau).iter().copied().filter(|&p| !u.used(p)).collect();
        let best = ties.order(a.argmax_listed(&open), true);
        let paired = best.iter().copied().find(|&d| {
            let mirror = Pos::new(j, d.row);
            in_row_overlap(mirror, j, k, tau) && a.get(mirror) > ReadCost::ONE && !u.used(mirror)
        });
        let mut progressed = false;
        if let Some(d) = paired {
            u.push(t, Some(d));
            u.push(t, Some(Pos::new(j, d.row)));
            t += 1;
            progressed = true;
        } else if let Some(&d) = best.first() {
            let mut row: Vec<Pos> = row_overlap(j, k, tau).iter().copied().filter(|&p| !u.used(p)).collect();
            row.sort_unstable();
            let partner = row.into_iter().find(|&p| improves(a, p, &[d, p]));
            u.push(t, Some(d));
            u.push(t, partner);
            t += 1;
            progressed = true;
        }
        j = (j + 1) % k;
        stall = if progressed { 0 } else { stall + 1 };
        if stall >= k {
            for tt in t..k {
                u.push(tt, None);
                u.push(tt, None);
            }
            break;
        }
    }

    let (mut t, mut j, mut stall) = (0, 0, 0);
    while u.min_len() < rho {
        if u.sets[t].len() >= rho {
            t = (t + 1) % k;
            continue;
        }
        let open: Vec<Pos> = row_overlap(j, k, tau).iter().copied().filter(|&p| !u.used(p)).collect();
        let mut progressed = false;
        if !open.is_empty() {
            let terms = u.terms(t);
            let pick = open.into_iter().find(|&p| {
                let mut with = terms.clone();
                with.push(p);
                improves(a, p, &with)
            });
            if let Some(p) = pick {
                u.push(t, Some(p));
                t = (t + 1) % k;
                progressed = true;
            }
        } else {
            let mut rest: Vec<Pos> = (0..k)
                .flat_map(|c| row_overlap(c, k, tau).as_slice().to_vec())
                .filter(|&p| !u.used(p))
                .collect();
            rest.sort_unstable();
            let terms = u.terms(t);
            let pick = rest
                .iter()
                .copied()
                .find(|&p| a.get(p) > ReadCost::ONE && terms.iter().any(|q| q.col == p.row && q.row != p.col))
                .or_else(|| rest.first().copied());
            u.push(t, pick);
            t = (t + 1) % k;
            progressed = true;
        }
        j = (j + 1) % k;
        stall = if progressed { 0 } else { stall + 1 };
        if stall > 4 * k {
            for tt in 0..k {
                while u.sets[tt].len() < rho {
                    u.push(tt, None);
                }
            }
            break;
        }
    }
    u.finish()
}

/// Builds a node of single-term parities from the costliest remaining targets.
pub fn construct_last_node(a: &ReadCostMatrix, tau: usize, ties: &mut TieBreak) -> ClassBNode {
    let k = a.k;
    let all: Vec<Pos> = (0..k).flat_map(|j| b_targets(j, k, tau).as_slice().to_vec()).collect();
    let mut u = Draft::new(k);
    for t in 0..k {
        let open: Vec<Pos> = all.iter().copied().filter(|&p| !u.used(p)).collect();
        let pick = ties.order(a.argmax_listed(&open), false).first().copied();
        u.push(t, pick);
    }
    u.finish()
}

/// Greedy layout for even `k` with `k >= 2(tau+1)`; otherwise identical to
/// [`construct1`]. Early nodes are copied from the closed form.
pub fn construct2(k: usize, n_a: usize, n_b: usize, tau: usize, mut ties: TieBreak) -> Result<ClassBSpec, ClassBError> {
    let base = construct1(k, n_a, n_b, tau, false)?;
    if k % 2 == 1 || k < 2 * (tau + 1) {
        return Ok(ClassBSpec { construction: Construction::Heuristic, ..base });
    }
    let n = n_a + n_b - k;
    let copy_until = n_a as i64 + (k / 2) as i64 - tau as i64 - 2;
    let mut a = init_read_cost(k, tau);
    let mut nodes = Vec::with_capacity(n - n_a);
    for l in n_a..n {
        let rho = k - tau - 1 - (l - n_a);
        let node = if l as i64 <= copy_until {
            base.nodes[l - n_a].clone()
        } else if rho > 1 {
            construct_node_heuristic(&a, rho, tau, &mut ties)
        } else {
            construct_last_node(&a, tau, &mut ties)
        };
        update_read_cost(&mut a, &node, tau);
        nodes.push(node);
    }
    Ok(ClassBSpec { n_a, n_b, k, tau, construction: Construction::Heuristic, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(r: usize, c: usize) -> Pos {
        Pos::new(r, c)
    }

    #[test]
    fn closed_form_example_nodes() {
        let s = construct1(5, 7, 8, 1, false).unwrap();
        for t in 0..5 {
            assert_eq!(s.parity(7, t), [p((2 + t) % 5, t), p(t, (1 + t) % 5), p(t, (2 + t) % 5)]);
            assert_eq!(s.parity(9, t), [p((4 + t) % 5, t)]);
        }
        let s = construct1(4, 6, 5, 1, false).unwrap();
        for t in 0..4 {
            assert_eq!(s.parity(6, t), [p((2 + t) % 4, t), p(t, (1 + t) % 4)]);
        }
    }

    #[test]
    fn single_term_variant_only_at_full_length() {
        let s = construct1(5, 7, 8, 1, true).unwrap();
        assert!(s.nodes().iter().flat_map(|n| &n.parities).all(|t| t.len() == 1));
        let s = construct1(5, 7, 7, 1, true).unwrap();
        assert_eq!(s.parity(7, 0).len(), 3);
    }

    #[test]
    fn length_checks() {
        assert!(construct1(5, 7, 9, 1, false).is_err());
        assert!(construct1(5, 7, 4, 1, false).is_err());
        assert!(construct1(5, 7, 5, 1, false).unwrap().nodes().is_empty());
    }

    #[test]
    fn initial_costs() {
        let a = init_read_cost(4, 1);
        assert_eq!(a.get(p(2, 0)), ReadCost::INFINITE);
        assert_eq!(a.get(p(0, 0)), ReadCost(4));
        assert_eq!(a.get(p(1, 0)), ReadCost(1));
    }

    #[test]
    fn argmax() {
        let a = init_read_cost(4, 1);
        assert_eq!(psi_argmax(&a, &[p(2, 0), p(3, 0)]).unwrap(), [p(2, 0), p(3, 0)]);
        assert_eq!(psi_argmax(&a, &[p(0, 0), p(1, 0), p(2, 0)]).unwrap(), [p(2, 0)]);
        assert_eq!(psi_argmax(&a, &[p(1, 0), p(0, 1)]).unwrap(), [p(0, 1)]);
        assert_eq!(psi_argmax(&a, &[p(3, 0), p(1, 3), p(2, 0)]).unwrap(), [p(1, 3), p(2, 0), p(3, 0)]);
        assert_eq!(psi_argmax(&a, &[]), Err(ClassBError::EmptySet));
    }

    #[test]
    fn read_costs() {
        assert_eq!(read_cost(p(2, 0), &[p(2, 0), p(0, 1), p(0, 2)], 5, 1), Ok(1));
        assert_eq!(read_cost(p(3, 1), &[p(3, 1)], 5, 1), Ok(1));
        // A parity of rho terms none of which sit in the target's row.
        assert_eq!(read_cost(p(3, 0), &[p(3, 0), p(1, 3), p(1, 4), p(4, 2)], 5, 1), Ok(4));
        assert_eq!(read_cost(p(1, 0), &[p(1, 0)], 5, 1), Err(ClassBError::NotTarget(p(1, 0))));
    }

    #[test]
    fn update_after_first_pair() {
        let mut a = init_read_cost(4, 1);
        let node = ClassBNode { parities: vec![vec![p(2, 0), p(0, 2)]], padding: 0 };
        update_read_cost(&mut a, &node, 1);
        assert_eq!(a.get(p(2, 0)), ReadCost(1));
        assert_eq!(a.get(p(0, 2)), ReadCost(1));
        let before = a.clone();
        update_read_cost(&mut a, &ClassBNode::default(), 1);
        assert_eq!(a, before);
    }

    #[test]
    fn greedy_node_for_k4() {
        let s = construct2(4, 6, 5, 1, TieBreak::Deterministic).unwrap();
        assert_eq!(
            s.nodes()[0].parities,
            vec![
                vec![p(2, 0), p(0, 2)],
                vec![p(3, 1), p(1, 3)],
                vec![p(1, 2), p(2, 3)],
                vec![p(3, 0), p(0, 1)]
            ]
        );
    }

    #[test]
    fn first_pick_finds_mirror_pair() {
        for (k, tau) in [(4, 1), (6, 2), (8, 3), (10, 4)] {
            let node = construct_node_heuristic(&init_read_cost(k, tau), 2, tau, &mut TieBreak::Deterministic);
            let first = &node.parities[0];
            assert_eq!(first[1], p(first[0].col, first[0].row), "k = {k}");
        }
    }

    #[test]
    fn saturated_costs_leave_padding() {
        // Every symbol already costs 1, so no partner can improve anything.
        let (k, tau) = (6, 2);
        let mut a = init_read_cost(k, tau);
        for i in 0..k {
            for j in 0..k {
                a.set(p(i, j), ReadCost(1));
            }
        }
        let node = construct_node_heuristic(&a, 2, tau, &mut TieBreak::Deterministic);
        assert_eq!(node.padding, k);
        assert!(node.parities.iter().all(|t| t.len() == 1 && is_b_target(t[0], k, tau)));
    }

    #[test]
    fn last_node_takes_remaining_targets_in_column_order() {
        // One open target per column: every other target already costs 1.
        let (k, tau) = (5, 1);
        let mut a = init_read_cost(k, tau);
        for j in 0..k {
            for q in b_targets(j, k, tau).iter() {
                if q.row != (4 + j) % k {
                    a.set(*q, ReadCost(1));
                }
            }
        }
        let node = construct_last_node(&a, tau, &mut TieBreak::Deterministic);
        for t in 0..k {
            assert_eq!(node.parities[t], [p((4 + t) % k, t)]);
        }
    }

    #[test]
    fn odd_k_falls_back() {
        let one = construct1(5, 7, 8, 1, false).unwrap();
        let two = construct2(5, 7, 8, 1, TieBreak::Deterministic).unwrap();
        assert_eq!(one.nodes(), two.nodes());
    }

    #[test]
    fn puncturing() {
        let s = construct1(5, 7, 8, 1, false).unwrap();
        let q = s.punctured(1).unwrap();
        assert_eq!(q.n_b(), 7);
        assert_eq!(q.nodes(), &s.nodes()[..2]);
        assert!(s.punctured(4).is_err());
    }
}
