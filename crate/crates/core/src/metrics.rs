//! Closed-form cost expressions, measured counterparts, and the comparison
//! tables built from them.

use std::iter::Sum;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::class_a::{self, FaultBranch};
use crate::class_b::Construction;
use crate::code::{CodeError, CodeParams, CodeSpec};
use crate::gf::FieldSpec;
use crate::layout::DataArray;
use crate::repair::{self, ReadTrace, RepairError};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("formula does not apply: {0}")]
    Inapplicable(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Repair(#[from] RepairError),
}

/// Field additions and multiplications performed by one procedure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub additions: u64,
    pub multiplications: u64,
}

impl OpCounter {
    pub fn add(&mut self, n: u64) {
        self.additions += n;
    }

    pub fn mul(&mut self, n: u64) {
        self.multiplications += n;
    }

    /// Additions cost `nu` bit operations, multiplications `nu^2`.
    pub fn bit_ops(&self, nu: u32) -> u64 {
        let nu = nu as u64;
        self.additions * nu + self.multiplications * nu * nu
    }
}

impl Sum for OpCounter {
    fn sum<I: Iterator<Item = OpCounter>>(iter: I) -> OpCounter {
        iter.fold(OpCounter::default(), |a, b| OpCounter {
            additions: a.additions + b.additions,
            multiplications: a.multiplications + b.multiplications,
        })
    }
}

/// Closed-form costs of a code, with the measured repair bandwidth when known.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub n: usize,
    pub k: usize,
    pub n_a: usize,
    pub tau: usize,
    pub nu: u32,
    pub rate: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub f: usize,
    pub f_branch_mds: bool,
    /// Symbols of a failed column each Class B node repairs, from node `n_a` on.
    pub f_l: Vec<usize>,
    /// Bound on the normalized repair bandwidth; absent without Class B nodes.
    pub lambda_bound: Option<f64>,
    pub measured_lambda: Option<f64>,
    pub c_r_a: f64,
    pub c_r_b: f64,
    pub c_r: f64,
    pub c_r_normalized: f64,
    pub c_e_a: f64,
    pub c_e_b: f64,
    pub c_e: f64,
    pub lambda_p_a: f64,
    pub lambda_p_b: Option<f64>,
    pub c_p_a: f64,
    pub c_p_b: Option<f64>,
}

/// Number of failed-column symbols repaired by the last Class B node.
pub fn last_node_share(n: usize, k: usize, n_a: usize, tau: usize) -> i64 {
    k as i64 - tau as i64 - n as i64 + n_a as i64
}

pub fn lambda_bound(n: usize, k: usize, n_a: usize, tau: usize) -> Option<f64> {
    if n <= n_a {
        return None;
    }
    let f = last_node_share(n, k, n_a, tau) as f64;
    let k = k as f64;
    Some((2.0 * k - 2.0 * f + f * f) / k)
}

/// Read budget for repairing one data node; `k` times [`lambda_bound`].
pub fn read_bound(n: usize, k: usize, n_a: usize, tau: usize) -> Option<usize> {
    if n <= n_a {
        return None;
    }
    let f = last_node_share(n, k, n_a, tau);
    Some((k + tau + (n - n_a)) + ((f - 1) * f) as usize)
}

pub fn formula_bundle(n: usize, k: usize, n_a: usize, tau: usize, field: &FieldSpec) -> CostReport {
    let nu = crate::gf::symbol_bits(field);
    let v = nu as f64;
    let (nf, kf, n_af, tf) = (n as f64, k as f64, n_a as f64, tau as f64);
    let n_b = n + k - n_a;
    let ft = class_a::fault_tolerance(n_a, k, tau);
    let share = last_node_share(n, k, n_a, tau);
    let f_l = if n > n_a {
        let mut s = vec![1; n - n_a - 1];
        s.push(share.max(0) as usize);
        s
    } else {
        Vec::new()
    };
    let c_r_a = (kf - 1.0) * v + kf * v * v + tf * kf * (v + v * v);
    let c_r_b = if n > n_a {
        let inner: f64 = (n_a..n - 1).map(|l| (kf - tf - 2.0 - l as f64 + n_af) * v).sum();
        inner + share as f64 * (kf - tf - 1.0 - nf + n_af) * v
    } else {
        0.0
    };
    let c_e_a = (n_af - kf) * (kf * v * v + (kf - 1.0) * v) + tf * v;
    let c_e_b: f64 = (1..=n - n_a).map(|i| (kf - tf - 1.0 - i as f64) * v).sum();
    let has_b = n_b > k;
    CostReport {
        n,
        k,
        n_a,
        tau,
        nu,
        rate: kf / nf,
        rate_lower: kf / (3.0 * kf - tf - 2.0),
        rate_upper: kf / (kf + 3.0),
        f: ft.f,
        f_branch_mds: ft.branch == FaultBranch::Mds,
        f_l,
        lambda_bound: lambda_bound(n, k, n_a, tau),
        measured_lambda: None,
        c_r_a,
        c_r_b,
        c_r: c_r_a + c_r_b,
        c_r_normalized: (c_r_a + c_r_b) / kf,
        c_e_a,
        c_e_b,
        c_e: c_e_a + c_e_b,
        lambda_p_a: kf + tf / (n_af - kf),
        lambda_p_b: has_b.then_some(0.5 * (3.0 * kf - 2.0 * tf - n_b as f64 - 1.0)),
        c_p_a: (kf - 1.0) * v + kf * v * v + tf * v / (n_af - kf),
        c_p_b: has_b.then_some(0.5 * (3.0 * kf - 2.0 * tf - n_b as f64 - 3.0) * v),
    }
}

pub fn formula_for(spec: &CodeSpec) -> CostReport {
    formula_bundle(spec.n(), spec.k(), spec.n_a(), spec.tau(), spec.field().spec())
}

/// Average repair bandwidth of the data nodes, measured on random data.
#[derive(Debug, Clone)]
pub struct LambdaMeasurement {
    pub lambda: f64,
    pub per_node: Vec<usize>,
    pub traces: Vec<ReadTrace>,
}

fn random_data(spec: &CodeSpec, seed: u64) -> DataArray {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DataArray::random(spec.k(), spec.field(), &mut rng)
}

/// Repairs every data node in turn and checks each result bit for bit.
pub fn measured_lambda(spec: &CodeSpec, seed: u64) -> Result<LambdaMeasurement, MetricsError> {
    let k = spec.k();
    let data = random_data(spec, seed);
    let arr = spec.encode(&data, &mut OpCounter::default())?;
    let mut traces = Vec::with_capacity(k);
    for j in 0..k {
        let mut broken = arr.clone();
        broken.erase_node(j);
        let (column, trace) = repair::repair_data_node(&broken, j, spec)?;
        if column != arr.column(j) {
            return Err(RepairError::Mismatch { node: j }.into());
        }
        traces.push(trace);
    }
    let per_node: Vec<usize> = traces.iter().map(ReadTrace::total).collect();
    let lambda = per_node.iter().sum::<usize>() as f64 / (k * k) as f64;
    Ok(LambdaMeasurement { lambda, per_node, traces })
}

/// Counted bit operations of encoding and of repairing each data node.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComplexityMeasurement {
    pub nu: u32,
    pub encode_ops: OpCounter,
    /// Encoding bit operations per row.
    pub encode_per_row: f64,
    pub repair_per_node: Vec<u64>,
    /// Mean repair bit operations per repaired symbol.
    pub repair_normalized: f64,
}

pub fn measured_complexity(spec: &CodeSpec, seed: u64) -> Result<ComplexityMeasurement, MetricsError> {
    let k = spec.k();
    let nu = spec.field().symbol_bits();
    let data = random_data(spec, seed);
    let mut encode_ops = OpCounter::default();
    spec.encode(&data, &mut encode_ops)?;
    let m = measured_lambda(spec, seed)?;
    let repair_per_node: Vec<u64> = m.traces.iter().map(|t| t.ops().bit_ops(nu)).collect();
    Ok(ComplexityMeasurement {
        nu,
        encode_ops,
        encode_per_row: encode_ops.bit_ops(nu) as f64 / k as f64,
        repair_normalized: repair_per_node.iter().sum::<u64>() as f64 / (k * k) as f64,
        repair_per_node,
    })
}

/// Code families compared in the overview table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Mds,
    /// Locally repairable code with `r` global parities.
    Lrc { r: usize },
    Mdr,
    Zigzag,
    /// Piggyback code with caller-supplied design parameters.
    Piggyback { t: usize, t_r: usize, ell: usize },
    EvenOdd,
    Proposed { n_a: usize, tau: usize, construction: Construction },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FamilyRow {
    pub family: String,
    pub n: usize,
    pub k: usize,
    /// Symbols per node.
    pub beta: u128,
    pub f: usize,
    pub lambda: f64,
    /// `None` where no closed form is known.
    pub repair_complexity: Option<f64>,
    pub encode_complexity: Option<f64>,
}

pub fn family_row(family: Family, n: usize, k: usize, nu: u32) -> Result<FamilyRow, MetricsError> {
    if k == 0 || n <= k {
        return Err(MetricsError::Inapplicable(format!("need n > k > 0, got ({n},{k})")));
    }
    let v = nu as f64;
    let (nf, kf) = (n as f64, k as f64);
    let mds_repair = (kf - 1.0) * v + kf * v * v;
    let mds_encode = (nf - kf) * (kf - 1.0) * v + kf * v * v;
    let need_two = |name: &str| {
        if n == k + 2 {
            Ok(())
        } else {
            Err(MetricsError::Inapplicable(format!("{name} needs n = k + 2, got ({n},{k})")))
        }
    };
    let row = |family: &str, beta: u128, f: usize, lambda: f64, rc: Option<f64>, ec: Option<f64>| FamilyRow {
        family: family.to_string(),
        n,
        k,
        beta,
        f,
        lambda,
        repair_complexity: rc,
        encode_complexity: ec,
    };
    Ok(match family {
        Family::Mds => row("MDS", 1, n - k, kf, Some(mds_repair), Some(mds_encode)),
        Family::Lrc { r } => {
            if r + k >= n {
                return Err(MetricsError::Inapplicable(format!("LRC needs n - k - r > 0, got r = {r}")));
            }
            let groups = (n - k - r) as f64;
            let local = (kf / groups).ceil() - 1.0;
            row(
                "LRC",
                1,
                r + 1,
                kf / groups,
                Some(local * v),
                Some(r as f64 * mds_repair + groups * local * v),
            )
        }
        Family::Mdr => {
            need_two("MDR")?;
            row("MDR", 1u128 << k, 2, (kf + 1.0) / 2.0, Some(kf - 1.0), Some(2.0 * (kf - 1.0)))
        }
        Family::Zigzag => {
            let beta = ((n - k) as u128).pow(k as u32 - 1);
            row("Zigzag", beta, n - k, (nf - 1.0) / (nf - kf), Some(mds_repair), Some(mds_encode))
        }
        Family::Piggyback { t, t_r, ell } => {
            let (t, t_r, ell) = (t as f64, t_r as f64, ell as f64);
            let lambda = ((kf - t_r) * (kf + t) + t_r * (kf + t_r + ell - 2.0)) / (2.0 * kf);
            row("Piggyback", 2, n - k, lambda, None, None)
        }
        Family::EvenOdd => {
            need_two("EVENODD")?;
            let enc = (2.0 * kf * kf - 2.0 * kf - 1.0) / (kf - 1.0) * v;
            row("EVENODD", k as u128 - 1, 2, kf, Some((kf - 1.0) * v), Some(enc))
        }
        Family::Proposed { n_a, tau, construction } => {
            let params = CodeParams::new(k, n_a, n + k - n_a, tau).construction(construction);
            let spec = CodeSpec::build(&params)?;
            let report = formula_for(&spec);
            let lambda = measured_lambda(&spec, DEFAULT_SEED)?.lambda;
            row("Proposed", k as u128, report.f, lambda, Some(report.c_r_normalized), Some(report.c_e))
        }
    })
}

/// Closed-form figures of the BASIC PM-MBR code used as an outside baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RingBaseline {
    pub n: usize,
    pub k: usize,
    pub delta: usize,
    /// Ring size `m` of the underlying polynomial ring.
    pub ring: usize,
}

impl RingBaseline {
    pub fn f(&self) -> usize {
        self.n - self.k
    }

    pub fn rate(&self) -> f64 {
        let (n, k, d) = (self.n as f64, self.k as f64, self.delta as f64);
        (k * (k + 1.0) / 2.0 + k * (d - k)) / (n * d)
    }

    pub fn repair_complexity(&self) -> f64 {
        (3.5 * self.delta as f64 + 2.5) * (self.ring as f64 - 1.0) / 2.0
    }

    pub fn lambda(&self) -> f64 {
        1.0
    }
}

/// Parameters of one comparison row: code shape, field, and baseline.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonCase {
    pub k: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub tau: usize,
    pub field_order: (u32, u32),
    pub baseline: RingBaseline,
}

pub const COMPARISON_CASES: [ComparisonCase; 3] = [
    ComparisonCase { k: 5, n_a: 8, n_b: 6, tau: 1, field_order: (11, 1), baseline: RingBaseline { n: 8, k: 5, delta: 7, ring: 11 } },
    ComparisonCase { k: 7, n_a: 10, n_b: 8, tau: 2, field_order: (11, 1), baseline: RingBaseline { n: 11, k: 7, delta: 10, ring: 11 } },
    ComparisonCase { k: 9, n_a: 12, n_b: 11, tau: 2, field_order: (13, 1), baseline: RingBaseline { n: 14, k: 9, delta: 13, ring: 17 } },
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonRow {
    pub n: usize,
    pub k: usize,
    pub f: usize,
    pub n_a: usize,
    pub tau: usize,
    pub rate: f64,
    pub field: String,
    pub c_r: f64,
    pub lambda: f64,
    pub baseline_n: usize,
    pub baseline_rate: f64,
    pub baseline_delta: usize,
    pub baseline_ring: usize,
    pub baseline_c_r: f64,
    pub baseline_lambda: f64,
}

pub fn comparison_row(case: &ComparisonCase, seed: u64) -> Result<ComparisonRow, MetricsError> {
    let field = FieldSpec::with_default_reduction(case.field_order.0, case.field_order.1)
        .map_err(|e| MetricsError::Inapplicable(e.to_string()))?;
    let spec = CodeSpec::build(&CodeParams::new(case.k, case.n_a, case.n_b, case.tau).field(field))?;
    let report = formula_for(&spec);
    let lambda = measured_lambda(&spec, seed)?.lambda;
    let b = case.baseline;
    Ok(ComparisonRow {
        n: spec.n(),
        k: spec.k(),
        f: report.f,
        n_a: spec.n_a(),
        tau: spec.tau(),
        rate: spec.rate(),
        field: spec.field().spec().to_string(),
        c_r: report.c_r_normalized,
        lambda,
        baseline_n: b.n,
        baseline_rate: b.rate(),
        baseline_delta: b.delta,
        baseline_ring: b.ring,
        baseline_c_r: b.repair_complexity(),
        baseline_lambda: b.lambda(),
    })
}

/// Shapes compared between the closed-form and greedy Class B layouts.
pub const LAYOUT_CASES: [(usize, usize, usize, usize); 5] =
    [(7, 4, 6, 1), (10, 6, 9, 2), (13, 8, 12, 3), (14, 8, 12, 3), (16, 10, 15, 4)];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LayoutRow {
    pub n: usize,
    pub k: usize,
    pub n_a: usize,
    pub tau: usize,
    pub lambda_sums: f64,
    pub lambda_heuristic: f64,
    pub improvement_percent: f64,
}

pub fn layout_row(n: usize, k: usize, n_a: usize, tau: usize, seed: u64) -> Result<LayoutRow, MetricsError> {
    let params = CodeParams::new(k, n_a, n + k - n_a, tau);
    let sums = measured_lambda(&CodeSpec::build(&params)?, seed)?.lambda;
    let heuristic = measured_lambda(&CodeSpec::build(&params.construction(Construction::Heuristic))?, seed)?.lambda;
    Ok(LayoutRow {
        n,
        k,
        n_a,
        tau,
        lambda_sums: sums,
        lambda_heuristic: heuristic,
        improvement_percent: 100.0 * (sums - heuristic) / sums,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(p: u32, m: u32) -> FieldSpec {
        FieldSpec::with_default_reduction(p, m).unwrap()
    }

    #[test]
    fn normalized_repair_complexity() {
        assert_eq!(formula_bundle(9, 5, 8, 1, &field(11, 1)).c_r_normalized, 44.0);
        let r = formula_bundle(11, 7, 10, 2, &field(11, 1));
        assert!((r.c_r_normalized - 66.2857).abs() < 1e-3);
        let r = formula_bundle(14, 9, 12, 2, &field(13, 1));
        assert!((r.c_r_normalized - 70.6667).abs() < 1e-3);
    }

    #[test]
    fn ten_five_bound_and_encoding() {
        let r = formula_bundle(10, 5, 7, 1, &field(2, 3));
        assert_eq!(r.f_l, vec![1, 1, 1]);
        assert_eq!(r.lambda_bound, Some(1.8));
        assert_eq!(r.c_e_b, 9.0);
        assert_eq!(read_bound(10, 5, 7, 1), Some(9));
        assert!(r.rate_lower <= r.rate && r.rate <= r.rate_upper);
    }

    #[test]
    fn rate_bounds_tight() {
        // n_A = k+2, tau = 1, n_B = k+1 reaches the upper bound.
        let r = formula_bundle(8, 5, 7, 1, &field(2, 3));
        assert_eq!(r.rate, r.rate_upper);
    }

    #[test]
    fn bit_ops() {
        let mut c = OpCounter::default();
        c.add(3);
        c.mul(2);
        assert_eq!(c.bit_ops(4), 3 * 4 + 2 * 16);
    }

    #[test]
    fn family_cells() {
        let mds = family_row(Family::Mds, 10, 5, 4).unwrap();
        assert_eq!((mds.lambda, mds.f), (5.0, 5));
        let z = family_row(Family::Zigzag, 10, 5, 4).unwrap();
        assert_eq!((z.lambda, z.beta), (1.8, 625));
        let e = family_row(Family::EvenOdd, 7, 5, 4).unwrap();
        assert_eq!((e.f, e.lambda), (2, 5.0));
        assert!(family_row(Family::EvenOdd, 8, 5, 4).is_err());
        let p = family_row(Family::Piggyback { t: 1, t_r: 1, ell: 1 }, 10, 5, 4).unwrap();
        assert_eq!(p.repair_complexity, None);
    }

    #[test]
    fn baseline_figures() {
        let b = COMPARISON_CASES.map(|c| c.baseline);
        assert!((b[0].rate() - 0.4464).abs() < 1e-4);
        assert_eq!(b[0].repair_complexity(), 135.0);
        assert!((b[1].rate() - 0.4454).abs() < 1e-4);
        assert_eq!(b[1].repair_complexity(), 187.5);
        assert!((b[2].rate() - 0.4450).abs() < 1e-4);
        assert_eq!(b[2].repair_complexity(), 384.0);
    }
}
