//! The `solve`, `scenario`, `compare` and `classify` verbs.

use std::fmt;
use std::path::{Path, PathBuf};

use chronograph::graph::{self, SolvabilityReport};
use chronograph::matfun;
use chronograph::oracle::{self, OracleError};
use chronograph::problem::{self, HypothesisReport, TimeGraphProblem, Violation};
use chronograph::solver::{self, SolveReport};
use chronograph::variants::{self, SchrodingerProblem, VariantError};
use chronograph::Error;
use serde_json::{json, Value};

use crate::output;
use crate::problem_file::{Mode, Options, ProblemFile};
use crate::scenarios::{self, Params, ScenarioId};

/// Process exit status; nothing else is ever returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Invalid = 1,
    NotWellPosed = 2,
    ToleranceBreach = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

pub const SOLUTION_CSV: &str = "solution.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PROBLEM_JSON: &str = "problem.json";
pub const COMPARE_JSON: &str = "compare.json";

/// Crank–Nicolson refinement levels for the order estimate, as multiples of
/// the largest solver step count.
const ORDER_LEVELS: [usize; 4] = [2, 4, 8, 16];

#[derive(Debug, Clone, Default)]
pub struct CompareFlags {
    pub cn_steps: Option<usize>,
    pub tol: Option<f64>,
}

fn fail(exit: Exit, msg: impl fmt::Display) -> Exit {
    eprintln!("error: {msg}");
    exit
}

fn write(path: &Path, contents: &str) -> Result<(), Exit> {
    output::write_atomic(path, contents.as_bytes())
        .map_err(|e| fail(Exit::Invalid, format_args!("cannot write {}: {e}", path.display())))
}

fn violations_json(v: &[Violation]) -> Value {
    v.iter().map(|v| json!({"field": v.field, "constraint": v.constraint})).collect()
}

fn read_file(path: &Path) -> Result<ProblemFile, Exit> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(Exit::Invalid, format_args!("cannot read {}: {e}", path.display())))?;
    ProblemFile::parse(&text).map_err(|e| fail(Exit::Invalid, format_args!("{}: {e}", path.display())))
}

fn report_violations(path: &Path, violations: &[Violation]) -> Exit {
    eprintln!("error: {} is not a valid problem:", path.display());
    for v in violations {
        eprintln!("  {v}");
    }
    Exit::Invalid
}

/// Parses and validates a problem file; reports every problem on stderr.
pub fn load(path: &Path) -> Result<(ProblemFile, TimeGraphProblem), Exit> {
    let file = read_file(path)?;
    match file.to_problem() {
        Ok(problem) => Ok((file, problem)),
        Err(violations) => Err(report_violations(path, &violations)),
    }
}

fn ids(problem: &TimeGraphProblem, idx: &Option<Vec<usize>>) -> Value {
    match idx {
        Some(v) => v.iter().map(|&i| problem.graph.edges[i].id.to_string()).collect(),
        None => Value::Null,
    }
}

fn classification(problem: &TimeGraphProblem, tol: f64) -> SolvabilityReport {
    graph::classify_solvability(&graph::pattern_of(&problem.transmission, &problem.graph, tol))
}

fn solvability_json(problem: &TimeGraphProblem, r: &SolvabilityReport) -> Value {
    json!({
        "class": r.class.as_str(),
        "ordering": ids(problem, &r.ordering),
        "blocking_cycle": ids(problem, &r.blocking_cycle),
    })
}

fn hypotheses_json(problem: &TimeGraphProblem, h: &HypothesisReport) -> Value {
    let per_edge: Value = problem
        .graph
        .edges
        .iter()
        .zip(&h.dissipativity)
        .map(|(e, mu)| json!({"edge": e.id.as_str(), "numerical_abscissa": mu}))
        .collect();
    json!({
        "dissipativity": per_edge,
        "b_norm": h.b_norm,
        "monodromy_rcond": h.monodromy_rcond,
        "epsilon": h.epsilon,
        "sufficient_condition_met": h.sufficient_condition_met,
    })
}

fn mode_str(mode: Mode) -> &'static str {
    match mode {
        Mode::Parabolic => "parabolic",
        Mode::Schrodinger => "schrodinger",
    }
}

/// The problem actually integrated: generators `iH` in Schrödinger mode.
fn evolution(file: &ProblemFile, problem: &TimeGraphProblem) -> TimeGraphProblem {
    match file.mode {
        Mode::Parabolic => problem.clone(),
        Mode::Schrodinger => SchrodingerProblem::new(problem.clone()).evolution_problem(),
    }
}

fn solve_in_mode(file: &ProblemFile, problem: &TimeGraphProblem) -> Result<SolveReport, VariantError> {
    match file.mode {
        Mode::Parabolic => Ok(solver::solve(problem)?),
        Mode::Schrodinger => variants::schrodinger_solve(&SchrodingerProblem::new(problem.clone())),
    }
}

fn unitarity_json(problem: &TimeGraphProblem) -> Value {
    match variants::unitarity_check(&SchrodingerProblem::new(problem.clone())) {
        Ok(u) => json!({
            "unitary": u.unitary,
            "defect": u.defect,
            "propagator_defect": u.propagator_defect,
            "commutator_norm": u.commutator_norm,
        }),
        Err(e) => json!({"unitary": false, "error": e.to_string()}),
    }
}

fn mapping_json(report: &SolveReport, problem: &TimeGraphProblem) -> Value {
    match variants::verify_mapping_properties(report, problem) {
        Ok(m) => json!({
            "real_defect": m.real_defect,
            "positivity_defect": m.positivity_defect,
            "positivity_unmet": m.unmet,
            "data_nonnegative": m.data_nonnegative,
            "sup_bound": m.sup_bound,
            "sup_bound_defect": m.sup_bound_defect,
            "bound_constant": m.bound_constant,
            "observed_ratio": m.observed_ratio,
        }),
        Err(e) => json!({"error": e.to_string()}),
    }
}

/// Solves the problem in `path`, writing `solution.csv` and `report.json`
/// to `out`.
/// An invalid file still gets a `report.json` listing the violations.
pub fn run_solve(path: &Path, out: &Path) -> Exit {
    let file = match read_file(path) {
        Ok(f) => f,
        Err(exit) => return exit,
    };
    match file.to_problem() {
        Ok(problem) => solve_loaded(&file, &problem, out),
        Err(violations) => {
            let doc = json!({"status": "invalid", "violations": violations_json(&violations)});
            let exit = report_violations(path, &violations);
            write(&out.join(REPORT_JSON), &output::to_json(&doc)).err().unwrap_or(exit)
        }
    }
}

fn solve_loaded(file: &ProblemFile, problem: &TimeGraphProblem, out: &Path) -> Exit {
    let evolved = evolution(file, problem);
    let class = classification(problem, file.options.pattern_tol);
    let hypotheses = match problem::diagnose(&evolved) {
        Ok(h) => h,
        Err(e) => return fail(Exit::Invalid, e),
    };
    let mut doc = json!({
        "mode": mode_str(file.mode),
        "solvability": solvability_json(problem, &class),
        "hypotheses": hypotheses_json(problem, &hypotheses),
    });
    let result = solve_in_mode(file, problem);
    let exit = match &result {
        Ok(report) => {
            doc["status"] = json!("ok");
            doc["boundary_residual"] = json!(report.boundary_residual);
            doc["ode_residual"] = json!(report.ode_residual);
            doc["energy_defect"] = json!(report.energy_defect);
            doc["monodromy_rcond"] = json!(report.monodromy_rcond);
            doc["ill_conditioned"] = json!(report.ill_conditioned);
            doc["commutator_norm"] = json!(report.commutator_norm);
            doc["grade"] = json!(report.grade.as_str());
            doc["max_state_norm"] = json!(report.max_state_norm());
            match file.mode {
                Mode::Parabolic => doc["mapping"] = mapping_json(report, problem),
                Mode::Schrodinger => doc["unitarity"] = unitarity_json(problem),
            }
            if report.ill_conditioned {
                eprintln!("warning: monodromy is ill conditioned (rcond {:e})", report.monodromy_rcond);
            }
            Exit::Ok
        }
        Err(VariantError::Solve(Error::NotWellPosed { rcond })) => {
            doc["status"] = json!("not_well_posed");
            doc["monodromy_rcond"] = json!(rcond);
            fail(Exit::NotWellPosed, format_args!("1 - B e^(aA) is singular (rcond {rcond:e})"))
        }
        Err(e) => {
            doc["status"] = json!("invalid");
            doc["error"] = json!(e.to_string());
            fail(Exit::Invalid, e)
        }
    };
    if let Ok(report) = &result {
        if let Err(exit) = write(&out.join(SOLUTION_CSV), &output::solution_csv(report)) {
            return exit;
        }
    }
    if let Err(exit) = write(&out.join(REPORT_JSON), &output::to_json(&doc)) {
        return exit;
    }
    exit
}

/// Writes the preset's `problem.json` to `out` and solves it there.
pub fn run_scenario<S: AsRef<str>>(id: &str, overrides: &[S], out: &Path) -> Exit {
    let id: ScenarioId = match id.parse() {
        Ok(id) => id,
        Err(e) => return fail(Exit::Invalid, e),
    };
    let params = match Params::with_overrides(id, overrides) {
        Ok(p) => p,
        Err(e) => return fail(Exit::Invalid, e),
    };
    let file = scenarios::problem_file(id, &params);
    if let Err(exit) = write(&out.join(PROBLEM_JSON), &output::to_json(&file)) {
        return exit;
    }
    match file.to_problem() {
        Ok(problem) => solve_loaded(&file, &problem, out),
        Err(v) => fail(Exit::Invalid, format_args!("preset {id} is invalid: {:?}", v)),
    }
}

/// Checks the direct solver against Crank–Nicolson and Picard iteration and
/// writes `compare.json` to `out`.
pub fn run_compare(path: &Path, flags: &CompareFlags, out: &Path) -> Exit {
    let (file, problem) = match load(path) {
        Ok(x) => x,
        Err(exit) => return exit,
    };
    let options = Options {
        cn_steps: flags.cn_steps.unwrap_or(file.options.cn_steps),
        compare_tol: flags.tol.unwrap_or(file.options.compare_tol),
        ..file.options
    };
    if options.cn_steps == 0 || !(options.compare_tol > 0.0) {
        return fail(Exit::Invalid, "--cn-steps and --tol must be positive");
    }
    if let Mode::Schrodinger = file.mode {
        if let Err(e) = variants::schrodinger_solve(&SchrodingerProblem::new(problem.clone())) {
            let exit = match e {
                VariantError::Solve(Error::NotWellPosed { .. }) => Exit::NotWellPosed,
                _ => Exit::Invalid,
            };
            return fail(exit, e);
        }
    }
    let evolved = evolution(&file, &problem);
    let cfg = options.oracle();

    let direct = match solver::solve(&evolved) {
        Ok(r) => r,
        Err(Error::NotWellPosed { rcond }) => {
            return fail(Exit::NotWellPosed, format_args!("1 - B e^(aA) is singular (rcond {rcond:e})"))
        }
        Err(e) => return fail(Exit::Invalid, e),
    };
    let cn = match oracle::cn_solve(&evolved, &cfg) {
        Ok(r) => r,
        Err(OracleError::Solve(Error::NotWellPosed { rcond })) => {
            return fail(Exit::NotWellPosed, format_args!("Crank–Nicolson monodromy is singular (rcond {rcond:e})"))
        }
        Err(e) => return fail(Exit::Invalid, e),
    };
    let c_direct = direct.minus_traces();
    let state = oracle::max_state_discrepancy(&direct, &cn);
    let boundary = matfun::vec_norm_inf(&(cn.minus_traces() - &c_direct));

    let picard_tol = (10.0 * options.picard_tol).max(16.0 * f64::EPSILON * matfun::vec_norm_inf(&c_direct));
    let (picard, picard_ok) = match oracle::picard_boundary(&evolved, &cfg) {
        Ok(p) => {
            let d = matfun::vec_norm_inf(&(&p.c - &c_direct));
            let ok = d <= picard_tol;
            (
                json!({
                    "status": "converged",
                    "iterations": p.iterations,
                    "spectral_radius": p.spectral_radius,
                    "discrepancy": d,
                    "tolerance": picard_tol,
                }),
                ok,
            )
        }
        Err(OracleError::Divergence { spectral_radius, iterations }) => (
            json!({"status": "divergence", "spectral_radius": spectral_radius, "iterations": iterations}),
            true,
        ),
        Err(e) => return fail(Exit::Invalid, e),
    };

    let base = evolved.steps.values().copied().max().unwrap_or(1);
    let levels: Vec<usize> = ORDER_LEVELS.iter().map(|k| k * base).collect();
    let order = match oracle::cn_order(&evolved, &direct, &levels) {
        Ok(o) => json!({"cn_steps": o.cn_steps, "discrepancies": o.discrepancies, "order": o.order}),
        Err(e) => json!({"error": e.to_string()}),
    };

    let passed = state <= options.compare_tol && boundary <= options.compare_tol && picard_ok;
    let doc = json!({
        "status": if passed { "pass" } else { "fail" },
        "mode": mode_str(file.mode),
        "cn_steps_per_edge": options.cn_steps,
        "tolerance": options.compare_tol,
        "max_state_discrepancy": state,
        "boundary_discrepancy": boundary,
        "picard": picard,
        "order_estimate": order,
    });
    if let Err(exit) = write(&out.join(COMPARE_JSON), &output::to_json(&doc)) {
        return exit;
    }
    if passed {
        Exit::Ok
    } else {
        fail(
            Exit::ToleranceBreach,
            format_args!("oracle discrepancy above tolerance (state {state:e}, boundary {boundary:e})"),
        )
    }
}

/// Classification of the transmission pattern as JSON.
pub fn classify_json(file: &ProblemFile, problem: &TimeGraphProblem) -> String {
    let r = classification(problem, file.options.pattern_tol);
    let edges: Vec<&str> = problem.graph.edges.iter().map(|e| e.id.as_str()).collect();
    let mut doc = solvability_json(problem, &r);
    doc["edges"] = json!(edges);
    doc["pattern_tol"] = json!(file.options.pattern_tol);
    output::to_json(&doc)
}

/// Prints the solvability class of the file's transmission pattern.
pub fn run_classify(path: &Path) -> Exit {
    match load(path) {
        Ok((file, problem)) => {
            print!("{}", classify_json(&file, &problem));
            Exit::Ok
        }
        Err(exit) => exit,
    }
}

/// Output directory argument with the current directory as default.
pub fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.unwrap_or_else(|| PathBuf::from("."))
}
