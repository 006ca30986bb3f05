//! JSON problem files.

use std::collections::BTreeSet;

use chronograph::graph::{Edge, EdgeId};
use chronograph::matfun::{CMatrix, CVector};
use chronograph::oracle::OracleConfig;
use chronograph::problem::{EdgeForcing, EdgeOperator, TimeGraphProblem, Violation};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_STEPS: usize = 100;

/// A number, or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> Complex64 {
        match self {
            Scalar::Real(x) => Complex64::new(x, 0.0),
            Scalar::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

impl From<Complex64> for Scalar {
    fn from(z: Complex64) -> Self {
        if z.im == 0.0 {
            Scalar::Real(z.re)
        } else {
            Scalar::Complex([z.re, z.im])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Parabolic,
    /// Generators are Hermitian `H`; the evolution uses `iH`.
    Schrodinger,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    Zero,
    Constant {
        value: Vec<Scalar>,
    },
    /// One vector per grid node, `steps + 1` in total.
    Samples {
        value: Vec<Vec<Scalar>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub length: f64,
    pub dim: usize,
    /// Generator, as a list of rows.
    #[serde(rename = "A")]
    pub a: Vec<Vec<Scalar>>,
    #[serde(default)]
    pub f: ForcingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Scalar>>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub from: String,
    pub to: String,
    pub matrix: Vec<Vec<Scalar>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Blocks with every entry at or below this magnitude count as zero when
    /// classifying.
    pub pattern_tol: f64,
    /// Largest accepted solver/Crank–Nicolson discrepancy in `compare`.
    pub compare_tol: f64,
    pub cn_steps: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for Options {
    fn default() -> Self {
        let oracle = OracleConfig::default();
        Options {
            pattern_tol: 0.0,
            compare_tol: 1e-6,
            cn_steps: oracle.cn_steps_per_edge,
            picard_tol: oracle.picard_tol,
            picard_max_iter: oracle.picard_max_iter,
        }
    }
}

impl Options {
    pub fn oracle(&self) -> OracleConfig {
        OracleConfig {
            cn_steps_per_edge: self.cn_steps,
            picard_max_iter: self.picard_max_iter,
            picard_tol: self.picard_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub options: Options,
}

fn violation(field: impl Into<String>, constraint: impl Into<String>) -> Violation {
    Violation { field: field.into(), constraint: constraint.into() }
}

fn matrix(rows: &[Vec<Scalar>], field: &str, out: &mut Vec<Violation>) -> Option<CMatrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        out.push(violation(field, "rows must all have the same length"));
        return None;
    }
    Some(CMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j].value()))
}

fn vector(values: &[Scalar]) -> CVector {
    CVector::from_iterator(values.len(), values.iter().map(|s| s.value()))
}

fn rows_of(m: &CMatrix) -> Vec<Vec<Scalar>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect()).collect()
}

fn entries_of(v: &CVector) -> Vec<Scalar> {
    v.iter().map(|&z| z.into()).collect()
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The problem as stated, plus every inconsistency found either while
    /// reading the file or by [`TimeGraphProblem::validate`].
    pub fn to_problem(&self) -> Result<TimeGraphProblem, Vec<Violation>> {
        let mut out = Vec::new();
        let mut problem = TimeGraphProblem::default();
        for e in &self.edges {
            let id = EdgeId::new(e.id.as_str());
            problem.graph.edges.push(Edge { id: id.clone(), length: e.length, dim: e.dim });
            if let Some(a) = matrix(&e.a, &format!("edges[{}].A", e.id), &mut out) {
                problem.operators.push(EdgeOperator { edge: id.clone(), generator: a });
            }
            problem.steps.insert(id.clone(), e.steps);
            if let Some(g) = &e.g {
                problem.g.insert(id.clone(), vector(g));
            }
            let f = match &e.f {
                ForcingSpec::Zero => None,
                ForcingSpec::Constant { value } => Some(EdgeForcing::Constant(vector(value))),
                ForcingSpec::Samples { value } => Some(EdgeForcing::Sampled(value.iter().map(|v| vector(v)).collect())),
            };
            if let Some(f) = f {
                problem.forcing.per_edge.insert(id, f);
            }
        }
        let mut seen = BTreeSet::new();
        for b in &self.blocks {
            let field = format!("blocks[{}<-{}]", b.to, b.from);
            if !seen.insert((b.to.as_str(), b.from.as_str())) {
                out.push(violation(field.clone(), "duplicate block"));
            }
            if let Some(m) = matrix(&b.matrix, &field, &mut out) {
                problem.transmission.insert(EdgeId::new(b.to.as_str()), EdgeId::new(b.from.as_str()), m);
            }
        }
        let opts = &self.options;
        if !(opts.pattern_tol >= 0.0) {
            out.push(violation("options.pattern_tol", "must be nonnegative"));
        }
        if !(opts.compare_tol > 0.0) {
            out.push(violation("options.compare_tol", "must be positive"));
        }
        if !(opts.picard_tol > 0.0) {
            out.push(violation("options.picard_tol", "must be positive"));
        }
        if opts.cn_steps == 0 || opts.picard_max_iter == 0 {
            out.push(violation("options", "cn_steps and picard_max_iter must be positive"));
        }
        out.extend(problem.validate());
        if out.is_empty() {
            Ok(problem)
        } else {
            Err(out)
        }
    }

    /// Canonical file for a problem; every edge carries explicit `g` and
    /// `steps` so the file is self-describing.
    pub fn from_problem(problem: &TimeGraphProblem, mode: Mode, options: Options) -> Self {
        let edges = problem
            .graph
            .edges
            .iter()
            .map(|e| EdgeSpec {
                id: e.id.to_string(),
                length: e.length,
                dim: e.dim,
                a: problem.generator(&e.id).map(rows_of).unwrap_or_default(),
                f: match problem.forcing.get(&e.id) {
                    EdgeForcing::Zero => ForcingSpec::Zero,
                    EdgeForcing::Constant(v) => ForcingSpec::Constant { value: entries_of(v) },
                    EdgeForcing::Sampled(vs) => ForcingSpec::Samples { value: vs.iter().map(entries_of).collect() },
                },
                g: Some(entries_of(&problem.g_of(e))),
                steps: problem.steps_of(&e.id).unwrap_or(DEFAULT_STEPS),
            })
            .collect();
        let index = |id: &EdgeId| problem.graph.index_of(id).unwrap_or(usize::MAX);
        let mut keyed: Vec<_> = problem.transmission.blocks.iter().collect();
        keyed.sort_by_key(|((to, from), _)| (index(to), index(from)));
        let blocks = keyed
            .into_iter()
            .map(|((to, from), m)| BlockSpec { from: from.to_string(), to: to.to_string(), matrix: rows_of(m) })
            .collect();
        ProblemFile { edges, blocks, mode, options }
    }
}
