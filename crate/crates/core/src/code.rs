//! A complete code: Class A nodes followed by Class B nodes, and its JSON form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_a::{self, ClassAError, ClassASpec};
use crate::class_b::{self, ClassBError, ClassBNode, ClassBSpec, Construction, TieBreak};
use crate::gf::{Elem, Field, FieldSpec, GfError, Matrix};
use crate::layout::{CodeArray, DataArray, Pos};
use crate::metrics::OpCounter;
use crate::oracle::Form;

pub const SCHEMA: &str = "PBDSS1";

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("invalid code parameters: {0}")]
    Params(String),
    #[error("unsupported schema {0:?}, expected \"PBDSS1\"")]
    Schema(String),
    #[error(transparent)]
    ClassA(#[from] ClassAError),
    #[error(transparent)]
    ClassB(#[from] ClassBError),
    #[error(transparent)]
    Field(#[from] GfError),
    #[error("malformed spec file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything needed to build a [`CodeSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeParams {
    pub k: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub tau: usize,
    pub construction: Construction,
    /// Overrides the default field (smallest with more than `n_a` elements).
    pub field: Option<FieldSpec>,
    /// Shuffles greedy-layout ties with this seed instead of the fixed rule.
    pub tie_seed: Option<u64>,
    /// Closed-form layout only: keep just the target term in each parity of
    /// a full-length code.
    pub drop_row_terms: bool,
}

impl CodeParams {
    pub fn new(k: usize, n_a: usize, n_b: usize, tau: usize) -> Self {
        CodeParams { k, n_a, n_b, tau, construction: Construction::Sums, field: None, tie_seed: None, drop_row_terms: false }
    }

    pub fn construction(mut self, c: Construction) -> Self {
        self.construction = c;
        self
    }

    pub fn field(mut self, spec: FieldSpec) -> Self {
        self.field = Some(spec);
        self
    }

    pub fn n(&self) -> usize {
        self.n_a + self.n_b - self.k
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSpec {
    class_a: ClassASpec,
    class_b: ClassBSpec,
}

impl CodeSpec {
    pub fn new(class_a: ClassASpec, class_b: ClassBSpec) -> Result<Self, CodeError> {
        if class_a.k() != class_b.k() || class_a.tau() != class_b.tau() || class_a.n_a() != class_b.n_a() {
            return Err(CodeError::Params(format!(
                "Class A (n_A={}, k={}, tau={}) and Class B (n_A={}, k={}, tau={}) disagree",
                class_a.n_a(),
                class_a.k(),
                class_a.tau(),
                class_b.n_a(),
                class_b.k(),
                class_b.tau()
            )));
        }
        Ok(CodeSpec { class_a, class_b })
    }

    pub fn build(params: &CodeParams) -> Result<Self, CodeError> {
        let &CodeParams { k, n_a, n_b, tau, .. } = params;
        let field = match &params.field {
            Some(spec) => Field::new(spec.clone())?,
            None => class_a::default_field(n_a)?,
        };
        let class_a = ClassASpec::with_field(n_a, k, tau, field)?;
        let class_b = match params.construction {
            Construction::Sums => class_b::construct1(k, n_a, n_b, tau, params.drop_row_terms)?,
            Construction::Heuristic => {
                let ties = params.tie_seed.map_or(TieBreak::Deterministic, TieBreak::seeded);
                class_b::construct2(k, n_a, n_b, tau, ties)?
            }
        };
        CodeSpec::new(class_a, class_b)
    }

    pub fn class_a(&self) -> &ClassASpec {
        &self.class_a
    }

    pub fn class_b(&self) -> &ClassBSpec {
        &self.class_b
    }

    pub fn field(&self) -> &Field {
        self.class_a.field()
    }

    pub fn k(&self) -> usize {
        self.class_a.k()
    }

    pub fn n_a(&self) -> usize {
        self.class_a.n_a()
    }

    pub fn n_b(&self) -> usize {
        self.class_b.n_b()
    }

    pub fn tau(&self) -> usize {
        self.class_a.tau()
    }

    pub fn n(&self) -> usize {
        self.n_a() + self.n_b() - self.k()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    pub fn is_class_b(&self, node: usize) -> bool {
        node >= self.n_a() && node < self.n()
    }

    /// Terms of the Class B parity at `(row, node)`.
    pub fn class_b_terms(&self, row: usize, node: usize) -> &[Pos] {
        self.class_b.parity(node, row)
    }

    /// The stored symbol at `(row, node)` as a combination of data symbols.
    pub fn form(&self, row: usize, node: usize) -> Form {
        if node < self.n_a() {
            self.class_a.form(row, node)
        } else {
            self.class_b_terms(row, node).iter().map(|&p| (p, Elem::ONE)).collect()
        }
    }

    /// Drops the last `count` Class B nodes.
    pub fn punctured(&self, count: usize) -> Result<Self, CodeError> {
        Ok(CodeSpec { class_a: self.class_a.clone(), class_b: self.class_b.punctured(count)? })
    }

    /// Sum of the data symbols at `terms`.
    pub fn class_b_value(&self, data: &DataArray, terms: &[Pos], ops: &mut OpCounter) -> Elem {
        let f = self.field();
        let mut acc = Elem::ZERO;
        for (x, &p) in terms.iter().enumerate() {
            acc = if x == 0 { data.get(p) } else { f.add(acc, data.get(p)) };
        }
        ops.add(terms.len().saturating_sub(1) as u64);
        acc
    }

    pub fn encode(&self, data: &DataArray, ops: &mut OpCounter) -> Result<CodeArray, CodeError> {
        let k = self.k();
        let parity = class_a::encode_class_a(data, &self.class_a, ops)?;
        let mut arr = CodeArray::new(k, self.n(), self.field().spec().clone());
        for i in 0..k {
            for j in 0..k {
                arr.set(i, j, data.get(Pos::new(i, j)));
            }
            for u in k..self.n_a() {
                arr.set(i, u, parity.get(i, u - k));
            }
            for l in self.n_a()..self.n() {
                arr.set(i, l, self.class_b_value(data, self.class_b_terms(i, l), ops));
            }
        }
        Ok(arr)
    }

    pub fn to_json(&self) -> String {
        let doc = Document {
            schema: SCHEMA.to_string(),
            k: self.k(),
            field: self.field().spec().clone(),
            class_a: ClassADoc {
                n_a: self.n_a(),
                tau: self.tau(),
                alpha: self.class_a.alpha().to_rows().iter().map(|r| r.iter().map(|e| e.0).collect()).collect(),
            },
            class_b: ClassBDoc {
                n_b: self.n_b(),
                construction: self.class_b.construction(),
                parities: self.class_b.nodes().iter().map(|n| n.parities.clone()).collect(),
                padding: self.class_b.nodes().iter().map(|n| n.padding).collect(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("spec serializes")
    }

    /// Parses and re-validates a spec, including the MDS property of `alpha`.
    pub fn from_json(text: &str) -> Result<Self, CodeError> {
        let doc: Document = serde_json::from_str(text)?;
        if doc.schema != SCHEMA {
            return Err(CodeError::Schema(doc.schema));
        }
        let field = Field::new(doc.field)?;
        let rows = doc
            .class_a
            .alpha
            .iter()
            .map(|r| r.iter().map(|&v| field.elem(v as u32)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let alpha = Matrix::from_rows(rows)?;
        let class_a = ClassASpec::new(doc.class_a.n_a, doc.k, doc.class_a.tau, alpha, field)?;
        let padding = doc.class_b.padding;
        let nodes = doc
            .class_b
            .parities
            .into_iter()
            .enumerate()
            .map(|(x, parities)| ClassBNode { parities, padding: padding.get(x).copied().unwrap_or(0) })
            .collect();
        let class_b = ClassBSpec::from_parts(
            doc.class_a.n_a,
            doc.class_b.n_b,
            doc.k,
            doc.class_a.tau,
            doc.class_b.construction,
            nodes,
        )?;
        CodeSpec::new(class_a, class_b)
    }
}

#[derive(Serialize, Deserialize)]
struct Document {
    schema: String,
    k: usize,
    field: FieldSpec,
    #[serde(rename = "classA")]
    class_a: ClassADoc,
    #[serde(rename = "classB")]
    class_b: ClassBDoc,
}

#[derive(Serialize, Deserialize)]
struct ClassADoc {
    #[serde(rename = "nA")]
    n_a: usize,
    tau: usize,
    alpha: Vec<Vec<u16>>,
}

#[derive(Serialize, Deserialize)]
struct ClassBDoc {
    #[serde(rename = "nB")]
    n_b: usize,
    construction: Construction,
    parities: Vec<Vec<Vec<Pos>>>,
    #[serde(default)]
    padding: Vec<usize>,
}
