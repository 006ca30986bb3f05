//! Independent reference solvers for testing: Crank–Nicolson time stepping
//! (no matrix exponential anywhere), Picard iteration on the boundary
//! equation, and exhaustive permutation search for block triangularity.

use rayon::prelude::*;
use thiserror::Error;

use crate::error::Error;
use crate::graph::{self, BlockPattern, SolvabilityClass};
use crate::matfun::{self, c, CMatrix, CVector, Factorization, MatfunError};
use crate::problem::{self, EdgeForcing, KVector, TimeGraphProblem};
use crate::solver::{self, EdgeSolution, SolveReport, ILL_CONDITIONED_RCOND};

/// Largest pattern the permutation search accepts.
pub const BRUTE_FORCE_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Minimum Crank–Nicolson substeps per edge; rounded up to a multiple of
    /// the edge's own step count.
    pub cn_steps_per_edge: usize,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cn_steps_per_edge: 10_000, picard_max_iter: 100_000, picard_tol: 1e-12 }
    }
}

impl OracleConfig {
    fn check(&self) -> Result<()> {
        if self.cn_steps_per_edge == 0 || self.picard_max_iter == 0 || !(self.picard_tol > 0.0) {
            return Err(OracleError::BadConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle configuration values must be positive")]
    BadConfig,
    #[error("Picard iteration diverges (spectral radius {spectral_radius}, {iterations} iterations)")]
    Divergence { spectral_radius: f64, iterations: usize },
    #[error("pattern with {n} edges is too large for exhaustive search (max {BRUTE_FORCE_MAX})")]
    TooLarge { n: usize },
    #[error(transparent)]
    Solve(#[from] Error),
}

impl From<MatfunError> for OracleError {
    fn from(e: MatfunError) -> Self {
        OracleError::Solve(e.into())
    }
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Crank–Nicolson one-step data on a fine grid.
struct CnEdge {
    /// `(I − h/2 A)⁻¹(I + h/2 A)`.
    step: CMatrix,
    /// `(I − h/2 A)⁻¹ h/2`.
    load: CMatrix,
    h: f64,
    /// Fine substeps per problem step.
    refine: usize,
    total: usize,
}

impl CnEdge {
    fn new(a: &CMatrix, length: f64, steps: usize, min_total: usize) -> Result<Self> {
        let refine = min_total.div_ceil(steps).max(1);
        let total = steps * refine;
        let h = length / total as f64;
        let n = a.nrows();
        let half = a * c(h / 2.0);
        let lhs = matfun::identity(n) - &half;
        let lu = Factorization::new(&lhs)?;
        let step = lu.solve(&(matfun::identity(n) + half))?;
        let load = &lu.inverse * c(h / 2.0);
        Ok(CnEdge { step, load, h, refine, total })
    }

    /// Fine march from `u0`, keeping every `refine`-th state.
    fn march(&self, u0: CVector, f: &EdgeForcing, length: f64, steps: usize) -> (Vec<CVector>, f64) {
        let dim = u0.len();
        let mut kept = Vec::with_capacity(steps + 1);
        kept.push(u0.clone());
        let mut u = u0;
        let mut f0 = f.at_time(0.0, length, steps, dim);
        let mut defect = 0.0f64;
        for n in 0..self.total {
            let f1 = f.at_time((n + 1) as f64 * self.h, length, steps, dim);
            let load = &self.load * (&f0 + &f1);
            let next = &self.step * &u + &load;
            defect = defect.max((&next - &self.step * &u - load).norm() / (1.0 + u.norm()));
            u = next;
            f0 = f1;
            if (n + 1) % self.refine == 0 {
                kept.push(u.clone());
            }
        }
        (kept, defect)
    }

    fn power(&self) -> CMatrix {
        let mut out = matfun::identity(self.step.nrows());
        for _ in 0..self.total {
            out = &self.step * out;
        }
        out
    }
}

/// Solves the problem with Crank–Nicolson on every edge and a dense solve of
/// the discrete boundary equation. The report's `ode_residual` is the
/// scheme's own one-step defect.
pub fn cn_solve(problem: &TimeGraphProblem, cfg: &OracleConfig) -> Result<SolveReport> {
    cfg.check()?;
    problem.ensure_valid()?;
    let graph = &problem.graph;
    let edges = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            let e = &graph.edges[i];
            CnEdge::new(problem.generator_at(i), e.length, problem.steps_at(i), cfg.cn_steps_per_edge)
        })
        .collect::<Result<Vec<_>>>()?;

    let (powers, forced): (Vec<CMatrix>, Vec<CVector>) = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            let e = &graph.edges[i];
            let f = problem.forcing.get(&e.id);
            let (states, _) = edges[i].march(CVector::zeros(e.dim), f, e.length, problem.steps_at(i));
            (edges[i].power(), states.last().expect("nonempty").clone())
        })
        .unzip();
    let e = matfun::block_diag(&powers);
    let b = problem.transmission.assemble(graph);
    let m = matfun::identity(e.nrows()) - &b * &e;
    let (lu, rcond) = solver::factor_monodromy(&m)?;
    let rhs = problem::assemble_k_vector(problem, KVector::G) + &b * problem::concat(&forced);
    let initial = lu.solve_vec(&rhs)?;
    let starts = problem::split(graph, &initial);

    let solutions: Vec<EdgeSolution> = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            let e = &graph.edges[i];
            let steps = problem.steps_at(i);
            let (states, ode_residual) =
                edges[i].march(starts[i].clone(), problem.forcing.get(&e.id), e.length, steps);
            let dt = e.length / steps as f64;
            EdgeSolution {
                edge: e.id.clone(),
                times: (0..=steps).map(|k| k as f64 * dt).collect(),
                states,
                ode_residual,
            }
        })
        .collect();

    let av = problem.vertex_generator();
    let mut report = SolveReport {
        boundary_residual: solver::boundary_residual(problem, &solutions),
        ode_residual: solutions.iter().map(|s| s.ode_residual).fold(0.0, f64::max),
        energy_defect: solver::energy_defect(problem, &solutions),
        monodromy_rcond: rcond,
        ill_conditioned: rcond < ILL_CONDITIONED_RCOND,
        commutator_norm: matfun::op_norm(&(&av * &b - &b * &av)),
        classification: graph::classify_solvability(&graph::pattern_of(&problem.transmission, graph, 0.0)),
        grade: solver::SolutionGrade::Mild,
        solutions,
    };
    report.grade = solver::solution_grade(problem, &report);
    Ok(report)
}

/// Largest sup-norm difference between two reports on the same grid.
pub fn max_state_discrepancy(a: &SolveReport, b: &SolveReport) -> f64 {
    a.solutions
        .iter()
        .zip(&b.solutions)
        .flat_map(|(x, y)| x.states.iter().zip(&y.states))
        .map(|(u, v)| matfun::vec_norm_inf(&(u - v)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub cn_steps: Vec<usize>,
    pub discrepancies: Vec<f64>,
    /// Least-squares slope of `log discrepancy` against `log h`; `None` when
    /// the coarsest run already agrees to roundoff.
    pub order: Option<f64>,
}

/// Discrepancy below which Crank–Nicolson counts as exact.
pub const EXACT_AGREEMENT: f64 = 1e-10;

/// Observed Crank–Nicolson convergence order against a reference solution.
pub fn cn_order(problem: &TimeGraphProblem, reference: &SolveReport, cn_steps: &[usize]) -> Result<OrderEstimate> {
    let discrepancies = cn_steps
        .iter()
        .map(|&n| {
            let cfg = OracleConfig { cn_steps_per_edge: n, ..OracleConfig::default() };
            Ok(max_state_discrepancy(&cn_solve(problem, &cfg)?, reference))
        })
        .collect::<Result<Vec<_>>>()?;
    let order = if discrepancies.first().is_none_or(|&d| d <= EXACT_AGREEMENT) {
        None
    } else {
        let xs: Vec<f64> = cn_steps.iter().map(|&n| coarsest_cn_step(problem, n).ln()).collect();
        let ys: Vec<f64> = discrepancies.iter().map(|d| d.ln()).collect();
        Some(log_log_slope(&xs, &ys))
    };
    Ok(OrderEstimate { cn_steps: cn_steps.to_vec(), discrepancies, order })
}

/// Largest fine Crank–Nicolson step over all edges for a given minimum
/// substep count.
fn coarsest_cn_step(problem: &TimeGraphProblem, min_total: usize) -> f64 {
    (0..problem.graph.len())
        .map(|i| {
            let steps = problem.steps_at(i);
            let total = steps * min_total.div_ceil(steps).max(1);
            problem.graph.edges[i].length / total as f64
        })
        .fold(0.0, f64::max)
}

/// Least-squares slope of `ys` against `xs`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub c: CVector,
    pub iterations: usize,
    pub spectral_radius: f64,
}

/// Fixed-point iteration `c ← B(Ec + F) + g` from `c = 0`.
pub fn picard_boundary(problem: &TimeGraphProblem, cfg: &OracleConfig) -> Result<PicardResult> {
    cfg.check()?;
    problem.ensure_valid()?;
    let (e, _) = solver::monodromy_matrices(problem)?;
    let forced = solver::forced_terminal_integrals(problem)?;
    let b = problem.transmission.assemble(&problem.graph);
    let g = problem::assemble_k_vector(problem, KVector::G);
    let be = &b * &e;
    let spectral_radius = matfun::spectral_radius(&be)?;
    if spectral_radius >= 1.0 {
        return Err(OracleError::Divergence { spectral_radius, iterations: 0 });
    }
    let shift = &b * forced + g;
    let threshold = cfg.picard_tol * (1.0 - spectral_radius);
    let mut cur = CVector::zeros(be.nrows());
    for updates in 0..cfg.picard_max_iter {
        let next = &be * &cur + &shift;
        let delta = (&next - &cur).norm();
        cur = next;
        if !delta.is_finite() {
            break;
        }
        if delta <= threshold.max(4.0 * f64::EPSILON * cur.norm()) {
            return Ok(PicardResult { c: cur, iterations: updates.max(1), spectral_radius });
        }
    }
    Err(OracleError::Divergence { spectral_radius, iterations: cfg.picard_max_iter })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot has a successor");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Lexicographically first edge ordering under which the pattern is block
/// lower triangular, by exhaustive search.
pub fn brute_force_triangularizable(pattern: &BlockPattern) -> Result<Option<Vec<usize>>> {
    let n = pattern.n();
    if n > BRUTE_FORCE_MAX {
        return Err(OracleError::TooLarge { n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        if pattern.is_lower_triangular_under(&perm) {
            return Ok(Some(perm));
        }
        if !next_permutation(&mut perm) {
            return Ok(None);
        }
    }
}

/// Solvability class derived from the exhaustive search.
pub fn brute_force_class(pattern: &BlockPattern) -> Result<SolvabilityClass> {
    Ok(match brute_force_triangularizable(pattern)? {
        None => SolvabilityClass::GlobalOnly,
        Some(_) if pattern.has_diagonal() => SolvabilityClass::CauchySequence,
        Some(_) => SolvabilityClass::IvpSequence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::EdgeForcing;

    fn cv(xs: &[f64]) -> CVector {
        CVector::from_iterator(xs.len(), xs.iter().map(|&x| c(x)))
    }

    fn scalar(a: f64, b: Option<f64>, f: f64, steps: usize) -> TimeGraphProblem {
        let mut builder = TimeGraphProblem::builder().scalar_edge("e", 1.0, a, steps);
        if let Some(b) = b {
            builder = builder.scalar_block("e", "e", b);
        }
        if f != 0.0 {
            builder = builder.forcing("e", EdgeForcing::Constant(cv(&[f])));
        }
        builder.build()
    }

    fn cfg(n: usize) -> OracleConfig {
        OracleConfig { cn_steps_per_edge: n, ..OracleConfig::default() }
    }

    #[test]
    fn cn_preserves_steady_state() {
        let r = cn_solve(&scalar(-1.0, Some(1.0), 1.0, 10), &cfg(100)).unwrap();
        for s in &r.solutions[0].states {
            assert!((s[0] - c(1.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn cn_phase_shift_second_order() {
        let p = scalar(-1.0, Some(2.0), 1.0, 20);
        let exact = solver::solve(&p).unwrap();
        let est = cn_order(&p, &exact, &[100, 200, 400]).unwrap();
        let order = est.order.unwrap();
        assert!((order - 2.0).abs() < 0.2, "{est:?}");
    }

    #[test]
    fn cn_free_trajectory() {
        let p = TimeGraphProblem::builder().scalar_edge("e", 1.0, -3.0, 10).g("e", cv(&[1.0])).build();
        let r = cn_solve(&p, &cfg(1000)).unwrap();
        for (t, s) in r.solutions[0].times.iter().zip(&r.solutions[0].states) {
            assert!((s[0].re - (-3.0 * t).exp()).abs() < 1e-5);
        }
    }

    #[test]
    fn cn_singular() {
        assert!(matches!(
            cn_solve(&scalar(0.0, Some(1.0), 1.0, 10), &cfg(100)),
            Err(OracleError::Solve(Error::NotWellPosed { .. }))
        ));
    }

    #[test]
    fn refinement_rounds_up_to_grid() {
        let e = CnEdge::new(&CMatrix::from_element(1, 1, c(-1.0)), 1.0, 30, 100).unwrap();
        assert_eq!(e.refine, 4);
        assert_eq!(e.total, 120);
    }

    #[test]
    fn picard_examples() {
        let p = TimeGraphProblem::builder().scalar_edge("e", 1.0, -1.0, 4).g("e", cv(&[3.0])).build();
        let r = picard_boundary(&p, &OracleConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.c, cv(&[3.0]));

        let p = scalar(-1.0, Some(0.9), 1.0, 10);
        let r = picard_boundary(&p, &OracleConfig::default()).unwrap();
        assert!((r.spectral_radius - 0.9 * (-1.0f64).exp()).abs() < 1e-14);
        let direct = solver::solve(&p).unwrap();
        assert!((r.c[0] - direct.solutions[0].initial()[0]).norm() < 1e-11);

        assert!(matches!(
            picard_boundary(&scalar(0.0, Some(1.0), 1.0, 10), &OracleConfig::default()),
            Err(OracleError::Divergence { .. })
        ));
    }

    #[test]
    fn permutations_enumerate_in_order() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn brute_force_examples() {
        let splitting = BlockPattern::new(3, [(1, 0), (2, 0)]).unwrap();
        let order = brute_force_triangularizable(&splitting).unwrap().unwrap();
        assert!(splitting.is_lower_triangular_under(&order));

        let two_cycle = BlockPattern::new(2, [(0, 1), (1, 0)]).unwrap();
        assert_eq!(brute_force_triangularizable(&two_cycle).unwrap(), None);

        assert_eq!(brute_force_triangularizable(&BlockPattern::empty(4)).unwrap(), Some(vec![0, 1, 2, 3]));
        assert!(matches!(
            brute_force_triangularizable(&BlockPattern::empty(9)),
            Err(OracleError::TooLarge { n: 9 })
        ));
    }

    #[test]
    fn config_must_be_positive() {
        let bad = OracleConfig { picard_tol: 0.0, ..OracleConfig::default() };
        assert_eq!(picard_boundary(&scalar(-1.0, None, 0.0, 2), &bad), Err(OracleError::BadConfig));
    }
}
