//! Green's-function solver: monodromy, boundary solve and exact
//! exponential-trapezoidal propagation along every edge.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{self, EdgeId, SolvabilityReport};
use crate::matfun::{self, c, CMatrix, CVector, Factorization, MatfunError};
use crate::problem::{self, EdgeForcing, KVector, TimeGraphProblem};

/// Below this reciprocal condition number the solve is flagged as
/// ill-conditioned.
pub const ILL_CONDITIONED_RCOND: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Monodromy {
    /// `diag(e^{a_j A_j})`.
    pub e: CMatrix,
    /// `1 − B E`.
    pub m: CMatrix,
    /// Reciprocal 1-norm condition number of `m`.
    pub rcond: f64,
}

/// Sampled trajectory on one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSolution {
    pub edge: EdgeId,
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
    /// Largest relative one-step defect on this edge.
    pub ode_residual: f64,
}

impl EdgeSolution {
    /// `ψ_j(0)`.
    pub fn initial(&self) -> &CVector {
        &self.states[0]
    }

    /// `ψ_j(a_j)`.
    pub fn terminal(&self) -> &CVector {
        self.states.last().expect("at least two grid nodes")
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolutionGrade {
    Mild,
    Strong,
    Classical,
}

impl SolutionGrade {
    pub fn as_str(self) -> &'static str {
        match self {
            SolutionGrade::Mild => "MILD",
            SolutionGrade::Strong => "STRONG",
            SolutionGrade::Classical => "CLASSICAL",
        }
    }
}

impl fmt::Display for SolutionGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solutions: Vec<EdgeSolution>,
    /// `‖ψ₋ − Bψ₊ − g‖ / (1 + ‖g‖)`.
    pub boundary_residual: f64,
    /// Max over edges and steps of the one-step recurrence defect, relative
    /// to `1 + ‖ψ_k‖`.
    pub ode_residual: f64,
    /// `|Re⟨ψ′,ψ⟩ − ½(‖ψ₊‖² − ‖ψ₋‖²)|` with Simpson quadrature.
    pub energy_defect: f64,
    pub monodromy_rcond: f64,
    pub ill_conditioned: bool,
    /// `‖A_V B − B A_V‖`; informational.
    pub commutator_norm: f64,
    pub classification: SolvabilityReport,
    pub grade: SolutionGrade,
}

impl SolveReport {
    pub fn solution(&self, id: &EdgeId) -> Option<&EdgeSolution> {
        self.solutions.iter().find(|s| &s.edge == id)
    }

    pub fn minus_traces(&self) -> CVector {
        problem::concat(&self.solutions.iter().map(|s| s.initial().clone()).collect::<Vec<_>>())
    }

    pub fn plus_traces(&self) -> CVector {
        problem::concat(&self.solutions.iter().map(|s| s.terminal().clone()).collect::<Vec<_>>())
    }

    pub fn max_state_norm(&self) -> f64 {
        self.solutions
            .iter()
            .flat_map(|s| s.states.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// One-step operators `e^{hA}`, `hφ₁(hA)`, `hφ₂(hA)` for an edge.
#[derive(Debug, Clone)]
pub(crate) struct StepKernel {
    pub h: f64,
    pub exp: CMatrix,
    pub h_phi1: CMatrix,
    pub h_phi2: CMatrix,
}

impl StepKernel {
    pub fn new(a: &CMatrix, h: f64) -> Result<Self> {
        let phi = matfun::phi_set(a, h)?;
        Ok(StepKernel { h, exp: phi.exp, h_phi1: phi.phi1 * c(h), h_phi2: phi.phi2 * c(h) })
    }

    pub fn advance(&self, u: &CVector, f0: &CVector, f1: &CVector) -> CVector {
        &self.exp * u + &self.h_phi1 * f0 + &self.h_phi2 * (f1 - f0)
    }
}

/// Marches `steps` ETD2 steps from `u0`.
fn march(kernel: &StepKernel, u0: CVector, forcing: &EdgeForcing, steps: usize) -> Vec<CVector> {
    let dim = u0.len();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(u0);
    let mut f0 = forcing.at_node(0, dim);
    for k in 0..steps {
        let f1 = forcing.at_node(k + 1, dim);
        let next = if forcing.is_zero() {
            &kernel.exp * &states[k]
        } else {
            kernel.advance(&states[k], &f0, &f1)
        };
        states.push(next);
        f0 = f1;
    }
    states
}

fn kernels(problem: &TimeGraphProblem) -> Result<Vec<StepKernel>> {
    (0..problem.graph.len())
        .into_par_iter()
        .map(|i| {
            let e = &problem.graph.edges[i];
            StepKernel::new(problem.generator_at(i), e.length / problem.steps_at(i) as f64)
        })
        .collect()
}

/// `E` and `M = 1 − B E` without conditioning information.
pub(crate) fn monodromy_matrices(problem: &TimeGraphProblem) -> Result<(CMatrix, CMatrix)> {
    let blocks = (0..problem.graph.len())
        .into_par_iter()
        .map(|i| matfun::expm(problem.generator_at(i), problem.graph.edges[i].length))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let e = matfun::block_diag(&blocks);
    let b = problem.transmission.assemble(&problem.graph);
    let m = matfun::identity(e.nrows()) - b * &e;
    Ok((e, m))
}

pub fn assemble_monodromy(problem: &TimeGraphProblem) -> Result<Monodromy> {
    problem.ensure_valid()?;
    let (e, m) = monodromy_matrices(problem)?;
    let rcond = monodromy_rcond(&m);
    Ok(Monodromy { e, m, rcond })
}

/// `1/(‖M⁻¹‖₁ (1 + ‖1 − M‖₁))`: conditioning of `M = 1 − BE` relative to the
/// size of the terms that cancel. Unlike the plain condition number this
/// detects near-resonance of a scalar monodromy. 0 when singular.
pub fn monodromy_rcond(m: &CMatrix) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => scaled_rcond(m, &inv),
        None => 0.0,
    }
}

fn scaled_rcond(m: &CMatrix, inv: &CMatrix) -> f64 {
    let scale = 1.0 + matfun::norm1(&(matfun::identity(m.nrows()) - m));
    let r = 1.0 / (matfun::norm1(inv) * scale);
    if r.is_finite() {
        r
    } else {
        0.0
    }
}

/// Factors `M = 1 − BE`, failing with [`Error::NotWellPosed`] below
/// [`matfun::SINGULAR_RCOND`].
pub(crate) fn factor_monodromy(m: &CMatrix) -> Result<(Factorization, f64)> {
    let lu = Factorization::new(m).map_err(not_well_posed)?;
    let rcond = scaled_rcond(m, &lu.inverse);
    if rcond < matfun::SINGULAR_RCOND {
        return Err(Error::NotWellPosed { rcond });
    }
    Ok((lu, rcond))
}

fn terminal_integrals(problem: &TimeGraphProblem, kernels: &[StepKernel]) -> CVector {
    let parts: Vec<CVector> = (0..problem.graph.len())
        .into_par_iter()
        .map(|i| {
            let e = &problem.graph.edges[i];
            let f = problem.forcing.get(&e.id);
            if f.is_zero() {
                return CVector::zeros(e.dim);
            }
            march(&kernels[i], CVector::zeros(e.dim), f, problem.steps_at(i))
                .pop()
                .expect("nonempty")
        })
        .collect();
    problem::concat(&parts)
}

/// `F_j = ∫₀^{a_j} e^{(a_j−s)A_j} f_j(s) ds`, exact for piecewise-linear
/// forcing.
pub fn forced_terminal_integrals(problem: &TimeGraphProblem) -> Result<CVector> {
    problem.ensure_valid()?;
    Ok(terminal_integrals(problem, &kernels(problem)?))
}

/// Initial values `c = M⁻¹(g + B F)` on every edge.
pub fn solve_boundary(problem: &TimeGraphProblem, mono: &Monodromy, forced: &CVector) -> Result<CVector> {
    let (lu, _) = factor_monodromy(&mono.m)?;
    let b = problem.transmission.assemble(&problem.graph);
    let rhs = problem::assemble_k_vector(problem, KVector::G) + b * forced;
    Ok(lu.solve_vec(&rhs)?)
}

fn not_well_posed(e: MatfunError) -> Error {
    match e {
        MatfunError::SingularMatrix { rcond } => Error::NotWellPosed { rcond },
        other => Error::Matfun(other),
    }
}

/// Integrates every edge from the given initial values and evaluates the
/// diagnostics.
pub fn propagate(problem: &TimeGraphProblem, initial: &CVector) -> Result<SolveReport> {
    problem.ensure_valid()?;
    let total = problem.graph.total_dim();
    if initial.len() != total {
        return Err(MatfunError::DimensionMismatch { expected: total, found: initial.len() }.into());
    }
    let ks = kernels(problem)?;
    let rcond = monodromy_rcond(&monodromy_matrices(problem)?.1);
    build_report(problem, &ks, initial, rcond)
}

pub fn solve(problem: &TimeGraphProblem) -> Result<SolveReport> {
    problem.ensure_valid()?;
    let ks = kernels(problem)?;
    let mono = assemble_monodromy(problem)?;
    let forced = terminal_integrals(problem, &ks);
    let initial = solve_boundary(problem, &mono, &forced)?;
    build_report(problem, &ks, &initial, mono.rcond)
}

/// Solves with every generator replaced by `λ·1`: the resolvent of the
/// time derivative under the transmission condition.
pub fn resolvent_dt(problem: &TimeGraphProblem, lambda: Complex64) -> Result<SolveReport> {
    solve(&problem.map_generators(|e, _| matfun::identity(e.dim) * lambda))
}

fn build_report(
    problem: &TimeGraphProblem,
    kernels: &[StepKernel],
    initial: &CVector,
    rcond: f64,
) -> Result<SolveReport> {
    let graph = &problem.graph;
    let starts = problem::split(graph, initial);
    let solutions = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            let e = &graph.edges[i];
            let steps = problem.steps_at(i);
            let f = problem.forcing.get(&e.id);
            let states = march(&kernels[i], starts[i].clone(), f, steps);
            let h = kernels[i].h;
            let times = (0..=steps).map(|k| k as f64 * h).collect();
            let ode_residual = step_defect(problem.generator_at(i), kernels, i, &states, f)?;
            Ok(EdgeSolution { edge: e.id.clone(), times, states, ode_residual })
        })
        .collect::<Result<Vec<_>>>()?;

    let boundary_residual = boundary_residual(problem, &solutions);
    let ode_residual = solutions.iter().map(|s| s.ode_residual).fold(0.0, f64::max);
    let energy_defect = energy_defect(problem, &solutions);
    let b = problem.transmission.assemble(graph);
    let av = problem.vertex_generator();
    let commutator_norm = matfun::op_norm(&(&av * &b - &b * &av));
    let classification = graph::classify_solvability(&graph::pattern_of(&problem.transmission, graph, 0.0));

    let mut report = SolveReport {
        solutions,
        boundary_residual,
        ode_residual,
        energy_defect,
        monodromy_rcond: rcond,
        ill_conditioned: rcond < ILL_CONDITIONED_RCOND,
        commutator_norm,
        classification,
        grade: SolutionGrade::Mild,
    };
    report.grade = solution_grade(problem, &report);
    Ok(report)
}

/// One-step defect against an exponential evaluated directly at the step
/// size, independent of the augmented-matrix route used for marching.
fn step_defect(
    a: &CMatrix,
    kernels: &[StepKernel],
    i: usize,
    states: &[CVector],
    f: &EdgeForcing,
) -> Result<f64> {
    let k = &kernels[i];
    let exp_h = matfun::expm(a, k.h)?;
    let dim = a.nrows();
    let mut worst = 0.0f64;
    for (n, pair) in states.windows(2).enumerate() {
        let f0 = f.at_node(n, dim);
        let f1 = f.at_node(n + 1, dim);
        let predicted = &exp_h * &pair[0] + &k.h_phi1 * &f0 + &k.h_phi2 * (&f1 - &f0);
        worst = worst.max((&pair[1] - predicted).norm() / (1.0 + pair[0].norm()));
    }
    Ok(worst)
}

pub(crate) fn boundary_residual(problem: &TimeGraphProblem, solutions: &[EdgeSolution]) -> f64 {
    let minus = problem::assemble_k_vector(problem, KVector::MinusTraces(solutions));
    let plus = problem::assemble_k_vector(problem, KVector::PlusTraces(solutions));
    let g = problem::assemble_k_vector(problem, KVector::G);
    let b = problem.transmission.assemble(&problem.graph);
    (minus - b * plus - &g).norm() / (1.0 + g.norm())
}

/// Composite Simpson weights for `steps` intervals of width `h`; Simpson 3/8
/// closes an odd count, trapezoid covers a single interval.
pub fn simpson_weights(steps: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; steps + 1];
    if steps == 1 {
        w[0] = h / 2.0;
        w[1] = h / 2.0;
        return w;
    }
    let (simpson, tail) = if steps % 2 == 0 { (steps, 0) } else { (steps - 3, 3) };
    for k in (0..simpson).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if tail == 3 {
        let s = simpson;
        for (off, coef) in [1.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
            w[s + off] += 3.0 * h / 8.0 * coef;
        }
    }
    w
}

/// `Re⟨ψ′,ψ⟩_{L²}` summed over edges with `ψ′ = Aψ + f` at the nodes.
pub fn dissipation_integral(problem: &TimeGraphProblem, solutions: &[EdgeSolution]) -> f64 {
    solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e = &problem.graph.edges[i];
            let a = problem.generator_at(i);
            let f = problem.forcing.get(&e.id);
            let steps = s.states.len() - 1;
            let weights = simpson_weights(steps, s.step());
            s.states
                .iter()
                .enumerate()
                .map(|(k, psi)| {
                    let dpsi = a * psi + f.at_node(k, e.dim);
                    weights[k] * psi.dotc(&dpsi).re
                })
                .sum::<f64>()
        })
        .sum()
}

pub(crate) fn energy_defect(problem: &TimeGraphProblem, solutions: &[EdgeSolution]) -> f64 {
    let lhs = dissipation_integral(problem, solutions);
    let rhs: f64 = solutions
        .iter()
        .map(|s| 0.5 * (s.terminal().norm_squared() - s.initial().norm_squared()))
        .sum();
    (lhs - rhs).abs()
}

/// Regularity grade of a computed solution. Every solvable finite-dimensional
/// problem is at least mild; finite residuals make it strong; forcing with
/// finite values and finite increments makes it classical.
pub fn solution_grade(problem: &TimeGraphProblem, report: &SolveReport) -> SolutionGrade {
    let finite_residuals = [report.boundary_residual, report.ode_residual, report.energy_defect]
        .iter()
        .all(|r| r.is_finite());
    if !finite_residuals {
        return SolutionGrade::Mild;
    }
    let forcing_regular = problem.graph.edges.iter().all(|e| match problem.forcing.get(&e.id) {
        EdgeForcing::Zero => true,
        EdgeForcing::Constant(v) => v.iter().all(|z| z.norm().is_finite()),
        EdgeForcing::Sampled(values) => {
            values.windows(2).all(|w| (&w[1] - &w[0]).norm().is_finite())
        }
    });
    if forcing_regular {
        SolutionGrade::Classical
    } else {
        SolutionGrade::Strong
    }
}
