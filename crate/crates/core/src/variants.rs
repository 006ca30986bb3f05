//! Non-parabolic extensions: Schrödinger evolution and its unitarity test,
//! second-order problems through a first-order factorization, and numerical
//! verifiers for realness, positivity and sup-norm bounds.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::error::Error;
use crate::graph::{EdgeId, TimeGraph};
use crate::matfun::{self, c, CMatrix, CVector, MatfunError, HERMITIAN_TOL};
use crate::problem::{
    self, EdgeForcing, EdgeOperator, Forcing, KVector, TimeGraphProblem, TransmissionOperator, Violation,
};
use crate::solver::{self, SolveReport};

/// Commutator norm above which the unitarity criterion is not applicable.
pub const COMMUTATOR_TOL: f64 = 1e-10;
/// Defect at or below which a propagator family counts as unitary.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Entrywise floor for `(1 − B E)⁻¹` in the positivity hypotheses.
pub const NONNEGATIVE_TOL: f64 = -1e-12;

/// Fractions of each edge length at which the propagator is sampled.
pub const PROPAGATOR_SAMPLES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariantError {
    #[error("generator on edge {edge} is not Hermitian (relative defect {defect:e})")]
    NotHermitian { edge: EdgeId, defect: f64 },
    #[error("transmission operator is not Hermitian (relative defect {defect:e})")]
    CouplingNotHermitian { defect: f64 },
    #[error("transmission operator does not commute with the unitary monodromy (commutator norm {norm:e})")]
    NonCommuting { norm: f64 },
    #[error("|A|^(1/2) does not intertwine the two transmission operators (defect {norm:e})")]
    NotIntertwining { norm: f64 },
    #[error("generator on edge {edge} is not invertible")]
    NotInvertible { edge: EdgeId },
    #[error("hypotheses not met: {}", .0.join(", "))]
    HypothesesNotMet(Vec<String>),
    #[error("stage {stage}: {source}")]
    Stage { stage: u8, source: Error },
    #[error(transparent)]
    Solve(#[from] Error),
}

impl From<MatfunError> for VariantError {
    fn from(e: MatfunError) -> Self {
        VariantError::Solve(e.into())
    }
}

pub type Result<T> = std::result::Result<T, VariantError>;

/// Problem whose generators are Hermitian `H_j`; evolution uses `iH_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchrodingerProblem {
    pub base: TimeGraphProblem,
}

impl SchrodingerProblem {
    pub fn new(base: TimeGraphProblem) -> Self {
        SchrodingerProblem { base }
    }

    fn check_hermitian(&self) -> Result<()> {
        self.base.ensure_valid()?;
        for op in &self.base.operators {
            let defect = matfun::hermitian_defect(&op.generator);
            if defect > HERMITIAN_TOL {
                return Err(VariantError::NotHermitian { edge: op.edge.clone(), defect });
            }
        }
        Ok(())
    }

    /// The parabolic problem with generators `iH_j`.
    pub fn evolution_problem(&self) -> TimeGraphProblem {
        self.base.map_generators(|_, h| h * Complex64::i())
    }
}

pub fn schrodinger_solve(p: &SchrodingerProblem) -> Result<SolveReport> {
    p.check_hermitian()?;
    Ok(solver::solve(&p.evolution_problem())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitarityReport {
    pub unitary: bool,
    /// `‖B² − 2B cos(aH)‖`.
    pub defect: f64,
    /// `max_t ‖S(t)S(t)* − 1‖` over [`PROPAGATOR_SAMPLES`].
    pub propagator_defect: f64,
    /// `‖B e^{iaH} − e^{iaH} B‖`.
    pub commutator_norm: f64,
}

fn edge_blocks(graph: &TimeGraph, f: impl Fn(usize) -> Result<CMatrix>) -> Result<CMatrix> {
    let blocks = (0..graph.len()).map(f).collect::<Result<Vec<_>>>()?;
    Ok(matfun::block_diag(&blocks))
}

/// Tests whether `S(t) = e^{itH}(1 − B e^{iaH})⁻¹` is unitary for commuting
/// Hermitian data, via `B² = 2B cos(aH)`, and measures `S S*` directly.
pub fn unitarity_check(p: &SchrodingerProblem) -> Result<UnitarityReport> {
    p.check_hermitian()?;
    let base = &p.base;
    let graph = &base.graph;
    let b = base.transmission.assemble(graph);
    let b_defect = matfun::hermitian_defect(&b);
    if b_defect > HERMITIAN_TOL {
        return Err(VariantError::CouplingNotHermitian { defect: b_defect });
    }

    let eigs = (0..graph.len())
        .map(|i| matfun::hermitian_eig(base.generator_at(i)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let along = |frac: f64| {
        edge_blocks(graph, |i| {
            let a = graph.edges[i].length * frac;
            Ok(matfun::funm_hermitian(&eigs[i], |x| Complex64::from_polar(1.0, a * x)))
        })
    };
    let u = along(1.0)?;
    let cos = edge_blocks(graph, |i| {
        let a = graph.edges[i].length;
        Ok(matfun::funm_hermitian(&eigs[i], |x| c((a * x).cos())))
    })?;

    let commutator_norm = matfun::op_norm(&(&b * &u - &u * &b));
    if commutator_norm > COMMUTATOR_TOL {
        return Err(VariantError::NonCommuting { norm: commutator_norm });
    }
    let defect = matfun::op_norm(&(&b * &b - &b * &cos * c(2.0)));

    let n = b.nrows();
    let m = matfun::identity(n) - &b * &u;
    let inv = solver::factor_monodromy(&m)?.0.inverse;
    let mut propagator_defect = 0.0f64;
    for frac in PROPAGATOR_SAMPLES {
        let s = along(frac)? * &inv;
        let gram = &s * s.adjoint() - matfun::identity(n);
        propagator_defect = propagator_defect.max(matfun::op_norm(&gram));
    }
    Ok(UnitarityReport { unitary: defect <= UNITARITY_TOL, defect, propagator_defect, commutator_norm })
}

/// `ψ'' + |A|ψ = f` with `ψ₋ − B₁ψ₊ = g₁` and `ψ′₋ − B₂ψ′₊ = g₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderProblem {
    pub graph: TimeGraph,
    /// Hermitian, invertible `A_j`.
    pub operators: Vec<EdgeOperator>,
    pub b1: TransmissionOperator,
    pub b2: TransmissionOperator,
    pub g1: BTreeMap<EdgeId, CVector>,
    pub g2: BTreeMap<EdgeId, CVector>,
    pub forcing: Forcing,
    pub steps: BTreeMap<EdgeId, usize>,
}

#[derive(Debug, Clone)]
pub struct SecondOrderSolution {
    /// `φ = ψ′ − iSψ`.
    pub velocity_stage: SolveReport,
    /// `ψ`.
    pub position_stage: SolveReport,
}

impl SecondOrderProblem {
    fn stage_problem(&self, generators: Vec<CMatrix>, b: TransmissionOperator, g: BTreeMap<EdgeId, CVector>, forcing: Forcing) -> TimeGraphProblem {
        TimeGraphProblem {
            graph: self.graph.clone(),
            operators: self
                .operators
                .iter()
                .zip(generators)
                .map(|(op, generator)| EdgeOperator { edge: op.edge.clone(), generator })
                .collect(),
            transmission: b,
            g,
            forcing,
            steps: self.steps.clone(),
        }
    }

    /// Violations of either first-order stage, without duplicates.
    pub fn validate(&self) -> Vec<Violation> {
        let generators: Vec<CMatrix> = self.operators.iter().map(|op| op.generator.clone()).collect();
        let position = self.stage_problem(generators.clone(), self.b1.clone(), self.g1.clone(), self.forcing.clone());
        let velocity = self.stage_problem(generators, self.b2.clone(), self.g2.clone(), Forcing::default());
        let mut out = position.validate();
        for v in velocity.validate() {
            let v = Violation { field: v.field.replace("transmission", "transmission2").replace("g[", "g2["), ..v };
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

/// `S_j = |A_j|^{1/2}` per edge in graph order.
fn abs_sqrt(p: &SecondOrderProblem) -> Result<Vec<CMatrix>> {
    p.graph
        .edges
        .iter()
        .map(|e| {
            let a = p
                .operators
                .iter()
                .find(|op| op.edge == e.id)
                .map(|op| &op.generator)
                .expect("validated");
            let defect = matfun::hermitian_defect(a);
            if defect > HERMITIAN_TOL {
                return Err(VariantError::NotHermitian { edge: e.id.clone(), defect });
            }
            let eig = matfun::hermitian_eig(a)?;
            if eig.min_abs_eigenvalue() <= f64::EPSILON * matfun::norm1(a).max(1.0) {
                return Err(VariantError::NotInvertible { edge: e.id.clone() });
            }
            Ok(matfun::funm_hermitian(&eig, |x| c(x.abs().sqrt())))
        })
        .collect()
}

/// Solves the second-order problem as `(∂ₜ − iS)(∂ₜ + iS)ψ = f` with
/// `S = |A|^{1/2}`: first `φ′ = −iSφ + f`, then `ψ′ = iSψ + φ` with `φ`
/// sampled on the grid as piecewise-linear forcing. Requires
/// `S B₁ = B₂ S`, under which the velocity condition becomes
/// `φ₋ − B₂φ₊ = g₂ − iS g₁`.
pub fn second_order_solve(p: &SecondOrderProblem) -> Result<SecondOrderSolution> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations).into());
    }
    let s = abs_sqrt(p)?;
    let s_v = matfun::block_diag(&s);
    let b1 = p.b1.assemble(&p.graph);
    let b2 = p.b2.assemble(&p.graph);
    let norm = matfun::op_norm(&(&s_v * &b1 - &b2 * &s_v));
    if norm > COMMUTATOR_TOL * (1.0 + matfun::op_norm(&s_v) * (1.0 + matfun::op_norm(&b1))) {
        return Err(VariantError::NotIntertwining { norm });
    }

    let i = Complex64::i();
    let mut g_velocity = BTreeMap::new();
    for (k, e) in p.graph.edges.iter().enumerate() {
        let g1 = p.g1.get(&e.id).cloned().unwrap_or_else(|| CVector::zeros(e.dim));
        let g2 = p.g2.get(&e.id).cloned().unwrap_or_else(|| CVector::zeros(e.dim));
        g_velocity.insert(e.id.clone(), g2 - &s[k] * g1 * i);
    }

    let stage1 = p.stage_problem(
        s.iter().map(|sk| sk * (-i)).collect(),
        p.b2.clone(),
        g_velocity,
        p.forcing.clone(),
    );
    let velocity_stage = solver::solve(&stage1).map_err(|source| VariantError::Stage { stage: 1, source })?;

    let sampled = Forcing {
        per_edge: velocity_stage
            .solutions
            .iter()
            .map(|sol| (sol.edge.clone(), EdgeForcing::Sampled(sol.states.clone())))
            .collect(),
    };
    let stage2 = p.stage_problem(s.iter().map(|sk| sk * i).collect(), p.b1.clone(), p.g1.clone(), sampled);
    let position_stage = solver::solve(&stage2).map_err(|source| VariantError::Stage { stage: 2, source })?;
    Ok(SecondOrderSolution { velocity_stage, position_stage })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    /// Largest imaginary part over all states; present when the data are
    /// real as well.
    pub real_defect: Option<f64>,
    /// Magnitude of the most negative state entry; present when the
    /// operator hypotheses for positivity hold.
    pub positivity_defect: Option<f64>,
    /// Positivity hypotheses that failed.
    pub unmet: Vec<String>,
    /// Whether `g ≥ 0` and `f ≥ 0` entrywise.
    pub data_nonnegative: bool,
    /// `max(0, max_k ‖ψ(t_k)‖_∞ − bound)`.
    pub sup_bound_defect: f64,
    pub sup_bound: f64,
    /// `C` in `‖ψ‖_∞ ≤ C(‖g‖_∞ + ‖f‖_∞)`.
    pub bound_constant: f64,
    /// `max ‖ψ‖_∞ / (‖g‖_∞ + ‖f‖_∞)`, 0 for vanishing data.
    pub observed_ratio: f64,
}

fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

fn is_metzler(a: &CMatrix) -> bool {
    a.iter().all(|z| z.im == 0.0)
        && (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)].re >= 0.0))
}

fn forcing_values(problem: &TimeGraphProblem) -> Vec<CVector> {
    problem
        .forcing
        .per_edge
        .values()
        .flat_map(|f| match f {
            EdgeForcing::Zero => Vec::new(),
            EdgeForcing::Constant(v) => vec![v.clone()],
            EdgeForcing::Sampled(vs) => vs.clone(),
        })
        .collect()
}

/// `max_i (Re a_ii + Σ_{j≠i} |a_ij|)`, which bounds `‖e^{tA}‖_∞ ≤ e^{tμ}`.
pub fn log_norm_inf(a: &CMatrix) -> f64 {
    (0..a.nrows())
        .map(|i| {
            a[(i, i)].re + (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].norm()).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Checks realness, positivity and a sup-norm bound of a computed solution.
/// Refuses when the operators are not real, since none of the three
/// statements apply then.
pub fn verify_mapping_properties(report: &SolveReport, problem: &TimeGraphProblem) -> Result<MappingReport> {
    problem.ensure_valid()?;
    let graph = &problem.graph;
    let b = problem.transmission.assemble(graph);
    let generators: Vec<&CMatrix> = (0..graph.len()).map(|i| problem.generator_at(i)).collect();

    let mut not_real = Vec::new();
    if !generators.iter().all(|a| is_real(a)) {
        not_real.push("generators real".to_string());
    }
    if !is_real(&b) {
        not_real.push("transmission operator real".to_string());
    }
    if !not_real.is_empty() {
        return Err(VariantError::HypothesesNotMet(not_real));
    }

    let g = problem::assemble_k_vector(problem, KVector::G);
    let f_values = forcing_values(problem);
    let data_real = g.iter().all(|z| z.im == 0.0) && f_values.iter().all(|v| v.iter().all(|z| z.im == 0.0));
    let states = || report.solutions.iter().flat_map(|s| s.states.iter()).flat_map(|v| v.iter());
    let real_defect = data_real.then(|| states().map(|z| z.im.abs()).fold(0.0, f64::max));

    let (_, m) = solver::monodromy_matrices(problem)?;
    let (lu, _) = solver::factor_monodromy(&m)?;
    let mut unmet = Vec::new();
    if !b.iter().all(|z| z.re >= 0.0) {
        unmet.push("transmission operator entrywise nonnegative".to_string());
    }
    for (i, a) in generators.iter().enumerate() {
        if !is_metzler(a) {
            unmet.push(format!("generator on edge {} Metzler", graph.edges[i].id));
        }
    }
    if !lu.inverse.iter().all(|z| z.re >= NONNEGATIVE_TOL && z.im.abs() <= -NONNEGATIVE_TOL) {
        unmet.push("(1 - B e^{aA})^-1 entrywise nonnegative".to_string());
    }
    let data_nonnegative = g.iter().all(|z| z.re >= 0.0) && f_values.iter().all(|v| v.iter().all(|z| z.re >= 0.0));
    let positivity_defect = unmet
        .is_empty()
        .then(|| states().map(|z| -z.re).fold(0.0, f64::max));

    let sigma = graph
        .edges
        .iter()
        .zip(&generators)
        .map(|(edge, a)| (edge.length * log_norm_inf(a)).exp().max(1.0))
        .fold(1.0, f64::max);
    let a_max = graph.edges.iter().map(|e| e.length).fold(0.0, f64::max);
    let inv_norm = matfun::norm_inf(&lu.inverse);
    let b_norm = matfun::norm_inf(&b);
    let g_sup = matfun::vec_norm_inf(&g);
    let f_sup = f_values.iter().map(matfun::vec_norm_inf).fold(0.0, f64::max);
    let forced = a_max * sigma;
    let sup_bound = sigma * inv_norm * (g_sup + b_norm * forced * f_sup) + forced * f_sup;
    let bound_constant = (sigma * inv_norm).max(sigma * inv_norm * b_norm * forced + forced);
    let observed = states().map(|z| z.norm()).fold(0.0, f64::max);
    let observed_ratio = if g_sup + f_sup > 0.0 { observed / (g_sup + f_sup) } else { 0.0 };

    Ok(MappingReport {
        real_defect,
        positivity_defect,
        unmet,
        data_nonnegative,
        sup_bound_defect: (observed - sup_bound).max(0.0),
        sup_bound,
        bound_constant,
        observed_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cv(xs: &[f64]) -> CVector {
        CVector::from_iterator(xs.len(), xs.iter().map(|&x| c(x)))
    }

    fn scalar_schrodinger(h: f64, b: Option<f64>, g: f64) -> SchrodingerProblem {
        let mut builder = TimeGraphProblem::builder().scalar_edge("e", 1.0, h, 50).g("e", cv(&[g]));
        if let Some(b) = b {
            builder = builder.scalar_block("e", "e", b);
        }
        SchrodingerProblem::new(builder.build())
    }

    #[test]
    fn free_schrodinger_conserves_modulus() {
        let r = schrodinger_solve(&scalar_schrodinger(2.3, None, 1.0)).unwrap();
        for s in &r.solutions[0].states {
            assert!((s[0].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn schrodinger_well_posedness() {
        assert!(schrodinger_solve(&scalar_schrodinger(PI / 3.0, Some(1.0), 1.0)).is_ok());
        assert!((c(1.0) - Complex64::from_polar(1.0, PI / 3.0)).norm() - 1.0 < 1e-15);
        assert!(matches!(
            schrodinger_solve(&scalar_schrodinger(0.0, Some(1.0), 1.0)),
            Err(VariantError::Solve(Error::NotWellPosed { .. }))
        ));
    }

    #[test]
    fn non_hermitian_rejected() {
        let p = SchrodingerProblem::new(
            TimeGraphProblem::builder()
                .edge("e", 1.0, CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]), 4)
                .build(),
        );
        assert!(matches!(schrodinger_solve(&p), Err(VariantError::NotHermitian { .. })));
    }

    #[test]
    fn unitarity_examples() {
        let r = unitarity_check(&scalar_schrodinger(PI / 3.0, Some(1.0), 1.0)).unwrap();
        assert!(r.unitary && r.defect < 1e-15 && r.propagator_defect < 1e-12);

        let r = unitarity_check(&scalar_schrodinger(1.7, None, 1.0)).unwrap();
        assert!(r.unitary && r.propagator_defect < 1e-12);

        let r = unitarity_check(&scalar_schrodinger(PI / 2.0, Some(1.0), 1.0)).unwrap();
        assert!(!r.unitary);
        assert!((r.defect - 1.0).abs() < 1e-12);
        assert!((r.propagator_defect - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unitarity_requires_commuting_data() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(2.0)]);
        let b = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let p = SchrodingerProblem::new(TimeGraphProblem::builder().edge("e", 1.0, h, 4).block("e", "e", b).build());
        assert!(matches!(unitarity_check(&p), Err(VariantError::NonCommuting { .. })));
    }

    fn oscillator(omega: f64, x0: f64, v0: f64, steps: usize) -> SecondOrderProblem {
        let id = EdgeId::new("e");
        SecondOrderProblem {
            graph: TimeGraph::new(vec![crate::graph::Edge { id: id.clone(), length: 1.0, dim: 1 }]),
            operators: vec![EdgeOperator { edge: id.clone(), generator: CMatrix::from_element(1, 1, c(-omega * omega)) }],
            b1: TransmissionOperator::zero(),
            b2: TransmissionOperator::zero(),
            g1: BTreeMap::from([(id.clone(), cv(&[x0]))]),
            g2: BTreeMap::from([(id.clone(), cv(&[v0]))]),
            forcing: Forcing::default(),
            steps: BTreeMap::from([(id, steps)]),
        }
    }

    #[test]
    fn oscillator_second_order_convergence() {
        let (omega, x0, v0) = (2.0, 1.0, 0.5);
        let err = |steps| {
            let sol = second_order_solve(&oscillator(omega, x0, v0, steps)).unwrap();
            let s = &sol.position_stage.solutions[0];
            s.times
                .iter()
                .zip(&s.states)
                .map(|(t, psi)| {
                    let exact = x0 * (omega * t).cos() + v0 / omega * (omega * t).sin();
                    (psi[0] - c(exact)).norm()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(50), err(100));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
        assert!(err(2000) < 1e-6);
    }

    #[test]
    fn second_order_zero_data() {
        let sol = second_order_solve(&oscillator(1.0, 0.0, 0.0, 10)).unwrap();
        assert!(sol.position_stage.solutions[0].states.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn second_order_stage_one_singular() {
        // e^{-i·2π} = 1 with B₂ = 1: stage one resonant
        let mut p = oscillator(2.0 * PI, 0.0, 1.0, 10);
        p.b1.insert("e".into(), "e".into(), CMatrix::from_element(1, 1, c(1.0)));
        p.b2.insert("e".into(), "e".into(), CMatrix::from_element(1, 1, c(1.0)));
        assert!(matches!(second_order_solve(&p), Err(VariantError::Stage { stage: 1, .. })));
    }

    fn metzler_pair(g: [f64; 2]) -> TimeGraphProblem {
        let a = CMatrix::from_row_slice(2, 2, &[c(-2.0), c(1.0), c(1.0), c(-2.0)]);
        let off = CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.4), c(0.4), c(0.0)]);
        TimeGraphProblem::builder()
            .edge("x", 1.0, a.clone(), 20)
            .edge("y", 1.0, a, 20)
            .block("x", "x", off.clone())
            .block("y", "y", off)
            .g("x", cv(&g))
            .forcing("y", EdgeForcing::Constant(cv(&[1.0, 0.5])))
            .build()
    }

    #[test]
    fn positivity_and_realness() {
        let p = metzler_pair([1.0, 0.0]);
        let r = solver::solve(&p).unwrap();
        let m = verify_mapping_properties(&r, &p).unwrap();
        assert!(m.unmet.is_empty());
        assert!(m.data_nonnegative);
        assert!(m.real_defect.unwrap() <= 1e-12);
        assert!(m.positivity_defect.unwrap() <= 1e-12);
        assert_eq!(m.sup_bound_defect, 0.0);
        assert!(m.observed_ratio <= m.bound_constant);
    }

    #[test]
    fn negative_data_still_reported() {
        let p = metzler_pair([-1.0, 0.0]);
        let r = solver::solve(&p).unwrap();
        let m = verify_mapping_properties(&r, &p).unwrap();
        assert!(!m.data_nonnegative);
        assert!(m.positivity_defect.unwrap() > 0.0);
    }

    #[test]
    fn complex_operators_refused() {
        let p = scalar_schrodinger(1.0, None, 1.0).evolution_problem();
        let r = solver::solve(&p).unwrap();
        assert!(matches!(verify_mapping_properties(&r, &p), Err(VariantError::HypothesesNotMet(_))));
    }
}
