//! Problem statement: per-edge generators, transmission operator, forcing,
//! boundary inhomogeneity and grid, plus validation and hypothesis
//! diagnostics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, TimeGraph};
use crate::matfun::{self, c, CMatrix, CVector};
use crate::solver::{self, EdgeSolution};

/// Slack used when comparing norms and numerical abscissae against 0 and 1.
pub const NORM_SLACK: f64 = 1e-12;

/// Generator `A_j` on one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOperator {
    pub edge: EdgeId,
    pub generator: CMatrix,
}

/// Block operator on the boundary space. Keys are `(to, from)`: block
/// `(i, j)` maps the terminal value of edge `j` into the initial condition of
/// edge `i`. Absent blocks are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransmissionOperator {
    pub blocks: BTreeMap<(EdgeId, EdgeId), CMatrix>,
}

impl TransmissionOperator {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Identity on every edge (time-periodic coupling).
    pub fn identity(graph: &TimeGraph) -> Self {
        let mut b = Self::zero();
        for e in &graph.edges {
            b.insert(e.id.clone(), e.id.clone(), matfun::identity(e.dim));
        }
        b
    }

    pub fn insert(&mut self, to: EdgeId, from: EdgeId, block: CMatrix) -> &mut Self {
        self.blocks.insert((to, from), block);
        self
    }

    pub fn block(&self, to: &EdgeId, from: &EdgeId) -> Option<&CMatrix> {
        self.blocks.get(&(to.clone(), from.clone()))
    }

    /// Dense matrix over the boundary space in graph order. Blocks that name
    /// unknown edges or have the wrong shape are skipped; `validate` reports
    /// them.
    pub fn assemble(&self, graph: &TimeGraph) -> CMatrix {
        let (offsets, total) = graph.offsets();
        let mut out = CMatrix::zeros(total, total);
        for ((to, from), m) in &self.blocks {
            let (Some(i), Some(j)) = (graph.index_of(to), graph.index_of(from)) else {
                continue;
            };
            if m.shape() != (graph.edges[i].dim, graph.edges[j].dim) {
                continue;
            }
            out.view_mut((offsets[i], offsets[j]), m.shape()).copy_from(m);
        }
        out
    }
}

/// Forcing on a single edge.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeForcing {
    Zero,
    Constant(CVector),
    /// Values at the edge's grid nodes `t_0 … t_K`, linear in between.
    Sampled(Vec<CVector>),
}

impl EdgeForcing {
    /// Value at grid node `k`.
    pub fn at_node(&self, k: usize, dim: usize) -> CVector {
        match self {
            EdgeForcing::Zero => CVector::zeros(dim),
            EdgeForcing::Constant(v) => v.clone(),
            EdgeForcing::Sampled(values) => values[k].clone(),
        }
    }

    /// Piecewise-linear value at time `t` on a grid of `steps` intervals over
    /// `(0, length)`.
    pub fn at_time(&self, t: f64, length: f64, steps: usize, dim: usize) -> CVector {
        match self {
            EdgeForcing::Zero => CVector::zeros(dim),
            EdgeForcing::Constant(v) => v.clone(),
            EdgeForcing::Sampled(values) => {
                let x = (t / length * steps as f64).clamp(0.0, steps as f64);
                let k = (x.floor() as usize).min(steps.saturating_sub(1));
                let w = x - k as f64;
                &values[k] * c(1.0 - w) + &values[k + 1] * c(w)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, EdgeForcing::Zero)
    }

    fn values(&self) -> Vec<&CVector> {
        match self {
            EdgeForcing::Zero => Vec::new(),
            EdgeForcing::Constant(v) => vec![v],
            EdgeForcing::Sampled(values) => values.iter().collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values().into_iter().map(matfun::vec_norm_inf).fold(0.0, f64::max)
    }
}

/// Forcing for every edge; edges without an entry are unforced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forcing {
    pub per_edge: BTreeMap<EdgeId, EdgeForcing>,
}

impl Forcing {
    pub fn get(&self, id: &EdgeId) -> &EdgeForcing {
        static ZERO: EdgeForcing = EdgeForcing::Zero;
        self.per_edge.get(id).unwrap_or(&ZERO)
    }
}

/// Full time-graph Cauchy problem `∂ₜψⱼ − Aⱼψⱼ = fⱼ`, `ψ₋ − Bψ₊ = g`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeGraphProblem {
    pub graph: TimeGraph,
    pub operators: Vec<EdgeOperator>,
    pub transmission: TransmissionOperator,
    /// Boundary inhomogeneity; missing edges default to zero.
    pub g: BTreeMap<EdgeId, CVector>,
    pub forcing: Forcing,
    /// Uniform substeps per edge.
    pub steps: BTreeMap<EdgeId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Violation { field: field.into(), constraint: constraint.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

fn all_finite<'a>(it: impl IntoIterator<Item = &'a Complex64>) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

impl TimeGraphProblem {
    pub fn builder() -> ProblemBuilder {
        ProblemBuilder::default()
    }

    pub fn generator(&self, id: &EdgeId) -> Option<&CMatrix> {
        self.operators.iter().find(|op| &op.edge == id).map(|op| &op.generator)
    }

    /// Generator of edge `i` in graph order. Panics on a problem that does
    /// not validate.
    pub(crate) fn generator_at(&self, i: usize) -> &CMatrix {
        self.generator(&self.graph.edges[i].id).expect("validated problem has every generator")
    }

    pub fn steps_of(&self, id: &EdgeId) -> Option<usize> {
        self.steps.get(id).copied()
    }

    pub(crate) fn steps_at(&self, i: usize) -> usize {
        self.steps[&self.graph.edges[i].id]
    }

    pub fn g_of(&self, edge: &Edge) -> CVector {
        self.g.get(&edge.id).cloned().unwrap_or_else(|| CVector::zeros(edge.dim))
    }

    /// Every violated invariant; empty iff the problem is consistent.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let graph = &self.graph;
        if graph.is_empty() {
            out.push(Violation::new("graph.edges", "at least one edge required"));
        }

        let mut seen = HashSet::new();
        for e in &graph.edges {
            if !seen.insert(&e.id) {
                out.push(Violation::new(format!("graph.edges[{}]", e.id), "duplicate edge id"));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                out.push(Violation::new(
                    format!("graph.lengths[{}]", e.id),
                    format!("length must be finite and positive, got {}", e.length),
                ));
            }
            if e.dim == 0 {
                out.push(Violation::new(format!("graph.dims[{}]", e.id), "dimension must be at least 1"));
            }
        }
        let dim_of = |id: &EdgeId| graph.edge(id).map(|e| e.dim);

        for e in &graph.edges {
            let count = self.operators.iter().filter(|op| op.edge == e.id).count();
            if count != 1 {
                out.push(Violation::new(
                    format!("operators[{}]", e.id),
                    format!("exactly one generator per edge required, found {count}"),
                ));
            }
        }
        for op in &self.operators {
            let Some(d) = dim_of(&op.edge) else {
                out.push(Violation::new(format!("operators[{}]", op.edge), "unknown edge"));
                continue;
            };
            if op.generator.shape() != (d, d) {
                out.push(Violation::new(
                    format!("operators[{}]", op.edge),
                    format!("generator must be {d}x{d}, got {}x{}", op.generator.nrows(), op.generator.ncols()),
                ));
            }
            if !all_finite(op.generator.iter()) {
                out.push(Violation::new(format!("operators[{}]", op.edge), "non-finite entry"));
            }
        }

        for ((to, from), m) in &self.transmission.blocks {
            let field = format!("transmission[{to},{from}]");
            match (dim_of(to), dim_of(from)) {
                (Some(r), Some(cdim)) => {
                    if m.shape() != (r, cdim) {
                        out.push(Violation::new(
                            field.clone(),
                            format!("block must be {r}x{cdim}, got {}x{}", m.nrows(), m.ncols()),
                        ));
                    }
                }
                _ => out.push(Violation::new(field.clone(), "block references an unknown edge")),
            }
            if !all_finite(m.iter()) {
                out.push(Violation::new(field, "non-finite entry"));
            }
        }

        for (id, v) in &self.g {
            match dim_of(id) {
                Some(d) if v.len() != d => out.push(Violation::new(
                    format!("g[{id}]"),
                    format!("vector must have length {d}, got {}", v.len()),
                )),
                None => out.push(Violation::new(format!("g[{id}]"), "unknown edge")),
                _ => {}
            }
            if !all_finite(v.iter()) {
                out.push(Violation::new(format!("g[{id}]"), "non-finite entry"));
            }
        }

        for e in &graph.edges {
            match self.steps.get(&e.id) {
                None => out.push(Violation::new(format!("steps[{}]", e.id), "missing step count")),
                Some(0) => out.push(Violation::new(format!("steps[{}]", e.id), "step count must be at least 1")),
                Some(_) => {}
            }
        }
        for id in self.steps.keys() {
            if dim_of(id).is_none() {
                out.push(Violation::new(format!("steps[{id}]"), "unknown edge"));
            }
        }

        for (id, f) in &self.forcing.per_edge {
            let field = format!("forcing[{id}]");
            let Some(d) = dim_of(id) else {
                out.push(Violation::new(field, "unknown edge"));
                continue;
            };
            match f {
                EdgeForcing::Zero => {}
                EdgeForcing::Constant(v) => {
                    if v.len() != d {
                        out.push(Violation::new(
                            field.clone(),
                            format!("constant vector must have length {d}, got {}", v.len()),
                        ));
                    }
                }
                EdgeForcing::Sampled(values) => {
                    if let Some(&k) = self.steps.get(id) {
                        if values.len() != k + 1 {
                            out.push(Violation::new(
                                field.clone(),
                                format!("expected {} samples (steps + 1), got {}", k + 1, values.len()),
                            ));
                        }
                    }
                    if values.iter().any(|v| v.len() != d) {
                        out.push(Violation::new(field.clone(), format!("every sample must have length {d}")));
                    }
                }
            }
            if !f.values().into_iter().all(|v| all_finite(v.iter())) {
                out.push(Violation::new(field, "non-finite entry"));
            }
        }
        out
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Block-diagonal `A_V = diag(A_j)` over the boundary space.
    pub fn vertex_generator(&self) -> CMatrix {
        let blocks: Vec<CMatrix> = (0..self.graph.len()).map(|i| self.generator_at(i).clone()).collect();
        matfun::block_diag(&blocks)
    }

    /// The same problem with every generator replaced by `f(A_j)`.
    pub fn map_generators(&self, f: impl Fn(&Edge, &CMatrix) -> CMatrix) -> Self {
        let mut out = self.clone();
        for op in &mut out.operators {
            if let Some(e) = self.graph.edge(&op.edge) {
                op.generator = f(e, &op.generator);
            }
        }
        out
    }
}

/// Which boundary-space vector to assemble.
#[derive(Debug, Clone, Copy)]
pub enum KVector<'a> {
    /// The inhomogeneity `g`, zero on edges without an entry.
    G,
    /// Initial values `ψ₋` of a solution.
    MinusTraces(&'a [EdgeSolution]),
    /// Terminal values `ψ₊` of a solution.
    PlusTraces(&'a [EdgeSolution]),
}

/// Concatenation over edges in graph order.
pub fn assemble_k_vector(problem: &TimeGraphProblem, which: KVector<'_>) -> CVector {
    let parts: Vec<CVector> = match which {
        KVector::G => problem.graph.edges.iter().map(|e| problem.g_of(e)).collect(),
        KVector::MinusTraces(sols) => sols.iter().map(|s| s.initial().clone()).collect(),
        KVector::PlusTraces(sols) => sols.iter().map(|s| s.terminal().clone()).collect(),
    };
    concat(&parts)
}

pub(crate) fn concat(parts: &[CVector]) -> CVector {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = CVector::zeros(n);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(p);
        at += p.len();
    }
    out
}

/// Splits a boundary-space vector into per-edge pieces.
pub(crate) fn split(graph: &TimeGraph, v: &CVector) -> Vec<CVector> {
    let (offsets, _) = graph.offsets();
    graph
        .edges
        .iter()
        .zip(offsets)
        .map(|(e, o)| v.rows(o, e.dim).into_owned())
        .collect()
}

/// Sufficient-condition diagnostics for invertibility of `1 − B e^{aA}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// Numerical abscissa `λ_max((A_j + A_j*)/2)` per edge, graph order.
    pub dissipativity: Vec<f64>,
    /// Spectral norm of the assembled transmission operator.
    pub b_norm: f64,
    /// Reciprocal 1-norm condition of `1 − B e^{aA}` (0 when singular).
    pub monodromy_rcond: f64,
    /// Uniform dissipativity margin `ε = −max_j μ(A_j)` when positive.
    pub epsilon: Option<f64>,
    pub sufficient_condition_met: bool,
}

pub fn numerical_abscissa(a: &CMatrix) -> Result<f64> {
    let h = (a + a.adjoint()) * c(0.5);
    let eig = matfun::hermitian_eig(&h)?;
    Ok(eig.eigenvalues.last().copied().unwrap_or(0.0))
}

/// Either every `A_j` dissipative with `‖B‖ < 1`, or every `A_j + ε`
/// dissipative for some `ε > 0` with `‖B‖ ≤ 1`.
pub fn sufficient_condition(dissipativity: &[f64], b_norm: f64) -> bool {
    let mu = dissipativity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mu <= NORM_SLACK && b_norm < 1.0 - NORM_SLACK) || (mu < -NORM_SLACK && b_norm <= 1.0 + NORM_SLACK)
}

pub fn diagnose(problem: &TimeGraphProblem) -> Result<HypothesisReport> {
    problem.ensure_valid()?;
    let dissipativity = (0..problem.graph.len())
        .map(|i| numerical_abscissa(problem.generator_at(i)))
        .collect::<Result<Vec<_>>>()?;
    let b_norm = matfun::op_norm(&problem.transmission.assemble(&problem.graph));
    let (_, m) = solver::monodromy_matrices(problem)?;
    let monodromy_rcond = solver::monodromy_rcond(&m);
    let mu = dissipativity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HypothesisReport {
        epsilon: (mu < -NORM_SLACK).then_some(-mu),
        sufficient_condition_met: sufficient_condition(&dissipativity, b_norm),
        dissipativity,
        b_norm,
        monodromy_rcond,
    })
}

/// Incremental construction of a [`TimeGraphProblem`]; nothing is checked
/// until [`TimeGraphProblem::validate`].
#[derive(Debug, Default, Clone)]
pub struct ProblemBuilder {
    problem: TimeGraphProblem,
}

impl ProblemBuilder {
    /// Adds an edge whose dimension is taken from the generator.
    pub fn edge(mut self, id: impl Into<EdgeId>, length: f64, generator: CMatrix, steps: usize) -> Self {
        let id = id.into();
        self.problem.graph.edges.push(Edge { id: id.clone(), length, dim: generator.nrows() });
        self.problem.operators.push(EdgeOperator { edge: id.clone(), generator });
        self.problem.steps.insert(id, steps);
        self
    }

    /// Scalar edge with generator `[a]`.
    pub fn scalar_edge(self, id: impl Into<EdgeId>, length: f64, a: f64, steps: usize) -> Self {
        self.edge(id, length, CMatrix::from_element(1, 1, c(a)), steps)
    }

    pub fn block(mut self, to: impl Into<EdgeId>, from: impl Into<EdgeId>, m: CMatrix) -> Self {
        self.problem.transmission.insert(to.into(), from.into(), m);
        self
    }

    pub fn scalar_block(self, to: impl Into<EdgeId>, from: impl Into<EdgeId>, b: f64) -> Self {
        self.block(to, from, CMatrix::from_element(1, 1, c(b)))
    }

    pub fn g(mut self, id: impl Into<EdgeId>, v: CVector) -> Self {
        self.problem.g.insert(id.into(), v);
        self
    }

    pub fn forcing(mut self, id: impl Into<EdgeId>, f: EdgeForcing) -> Self {
        self.problem.forcing.per_edge.insert(id.into(), f);
        self
    }

    pub fn build(self) -> TimeGraphProblem {
        self.problem
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(xs: &[f64]) -> CVector {
        CVector::from_iterator(xs.len(), xs.iter().map(|&x| c(x)))
    }

    fn two_scalar() -> TimeGraphProblem {
        TimeGraphProblem::builder()
            .scalar_edge("a", 1.0, -1.0, 10)
            .scalar_edge("b", 2.0, -0.5, 10)
            .scalar_block("b", "a", 1.0)
            .g("a", cv(&[1.0]))
            .build()
    }

    #[test]
    fn consistent_problem_validates() {
        assert!(two_scalar().validate().is_empty());
    }

    #[test]
    fn block_shape_violation() {
        let p = TimeGraphProblem::builder()
            .edge("0", 1.0, matfun::identity(2), 4)
            .edge("1", 1.0, matfun::identity(2), 4)
            .block("0", "1", CMatrix::zeros(2, 3))
            .build();
        let v = p.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].field.contains("transmission"));
    }

    #[test]
    fn zero_steps_violation() {
        let mut p = two_scalar();
        p.steps.insert("a".into(), 0);
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "steps[a]");
    }

    #[test]
    fn bad_lengths_and_samples() {
        let mut p = two_scalar();
        p.graph.edges[0].length = -1.0;
        p.forcing.per_edge.insert("b".into(), EdgeForcing::Sampled(vec![cv(&[1.0]); 3]));
        p.g.insert("zzz".into(), cv(&[1.0]));
        let fields: Vec<String> = p.validate().into_iter().map(|v| v.field).collect();
        assert!(fields.contains(&"graph.lengths[a]".to_string()));
        assert!(fields.contains(&"forcing[b]".to_string()));
        assert!(fields.contains(&"g[zzz]".to_string()));
    }

    #[test]
    fn k_vector_of_g() {
        let p = TimeGraphProblem::builder()
            .scalar_edge("x", 1.0, -1.0, 1)
            .scalar_edge("y", 1.0, -1.0, 1)
            .g("x", cv(&[1.0]))
            .g("y", cv(&[2.0]))
            .build();
        assert_eq!(assemble_k_vector(&p, KVector::G), cv(&[1.0, 2.0]));

        let p = TimeGraphProblem::builder()
            .edge("x", 1.0, matfun::identity(2), 1)
            .scalar_edge("y", 1.0, -1.0, 1)
            .scalar_edge("z", 1.0, -1.0, 1)
            .g("z", cv(&[5.0]))
            .build();
        assert_eq!(assemble_k_vector(&p, KVector::G), cv(&[0.0, 0.0, 0.0, 5.0]));
    }

    #[test]
    fn sampled_forcing_interpolates() {
        let f = EdgeForcing::Sampled(vec![cv(&[0.0]), cv(&[2.0]), cv(&[4.0])]);
        assert!((f.at_time(0.25, 1.0, 2, 1)[0].re - 1.0).abs() < 1e-15);
        assert!((f.at_time(1.0, 1.0, 2, 1)[0].re - 4.0).abs() < 1e-15);
    }

    #[test]
    fn diagnose_examples() {
        let periodic = TimeGraphProblem::builder()
            .scalar_edge("e", 1.0, -1.0, 10)
            .scalar_block("e", "e", 1.0)
            .build();
        let r = diagnose(&periodic).unwrap();
        assert!((r.dissipativity[0] + 1.0).abs() < 1e-15);
        assert!((r.b_norm - 1.0).abs() < 1e-15);
        assert!(r.sufficient_condition_met);
        assert!((r.epsilon.unwrap() - 1.0).abs() < 1e-15);
        let e1 = (-1.0f64).exp();
        assert!((r.monodromy_rcond - (1.0 - e1) / (1.0 + e1)).abs() < 1e-15);

        let contraction = TimeGraphProblem::builder()
            .scalar_edge("e", 1.0, 0.0, 10)
            .scalar_block("e", "e", 0.9)
            .build();
        let r = diagnose(&contraction).unwrap();
        assert_eq!(r.dissipativity[0], 0.0);
        assert!((r.b_norm - 0.9).abs() < 1e-15);
        assert!(r.sufficient_condition_met);
        assert_eq!(r.epsilon, None);

        let expanding = TimeGraphProblem::builder()
            .scalar_edge("e", 1.0, 1.0, 10)
            .scalar_block("e", "e", 1.0)
            .build();
        assert!(!diagnose(&expanding).unwrap().sufficient_condition_met);
    }

    #[test]
    fn assemble_places_blocks() {
        let p = two_scalar();
        let b = p.transmission.assemble(&p.graph);
        assert_eq!(b[(1, 0)], c(1.0));
        assert_eq!(b[(0, 1)], c(0.0));
    }
}
