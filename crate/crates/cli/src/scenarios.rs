//! Built-in example problems.

use std::fmt;
use std::str::FromStr;

use chronograph::matfun::{c, CMatrix, CVector};
use chronograph::problem::{EdgeForcing, ProblemBuilder, TimeGraphProblem};
use thiserror::Error;

use crate::problem_file::{Mode, Options, ProblemFile, DEFAULT_STEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Periodic,
    PhaseShift,
    JumpCondition,
    Tadpole,
    Splitting,
    Superposition,
    Cycle,
    MultiLoop,
    TimeTravel,
    TimeTravelMultiverse,
    Groundhog,
    LionsChain,
    FrequencyShift,
}

const ALL: [ScenarioId; 13] = [
    ScenarioId::Periodic,
    ScenarioId::PhaseShift,
    ScenarioId::JumpCondition,
    ScenarioId::Tadpole,
    ScenarioId::Splitting,
    ScenarioId::Superposition,
    ScenarioId::Cycle,
    ScenarioId::MultiLoop,
    ScenarioId::TimeTravel,
    ScenarioId::TimeTravelMultiverse,
    ScenarioId::Groundhog,
    ScenarioId::LionsChain,
    ScenarioId::FrequencyShift,
];

impl ScenarioId {
    pub fn all() -> &'static [ScenarioId] {
        &ALL
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Periodic => "periodic",
            ScenarioId::PhaseShift => "phase_shift",
            ScenarioId::JumpCondition => "jump_condition",
            ScenarioId::Tadpole => "tadpole",
            ScenarioId::Splitting => "splitting",
            ScenarioId::Superposition => "superposition",
            ScenarioId::Cycle => "cycle",
            ScenarioId::MultiLoop => "multi_loop",
            ScenarioId::TimeTravel => "time_travel",
            ScenarioId::TimeTravelMultiverse => "time_travel_multiverse",
            ScenarioId::Groundhog => "groundhog",
            ScenarioId::LionsChain => "lions_chain",
            ScenarioId::FrequencyShift => "frequency_shift",
        }
    }

    /// Override keys the preset understands.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            ScenarioId::PhaseShift => &["steps", "length", "decay", "alpha"],
            ScenarioId::Groundhog => &["steps", "length"],
            ScenarioId::LionsChain => &["steps", "length", "n"],
            ScenarioId::FrequencyShift => &["steps", "length", "d"],
            _ => &["steps", "length", "decay"],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    UnknownId(String),
    #[error("override `{0}` is not of the form key=value")]
    Malformed(String),
    #[error("scenario {id} has no parameter `{key}` (accepted: {accepted})")]
    UnknownKey { id: ScenarioId, key: String, accepted: String },
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL.iter().copied().find(|id| id.as_str() == s).ok_or_else(|| ScenarioError::UnknownId(s.to_string()))
    }
}

/// Preset parameters after applying `key=value` overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub steps: usize,
    /// Edge length; presets with several lengths scale them all by it.
    pub length: f64,
    /// Scalar generators are `−decay`.
    pub decay: f64,
    pub alpha: f64,
    pub d: usize,
    pub n: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params { steps: DEFAULT_STEPS, length: 1.0, decay: 1.0, alpha: 2.0, d: 8, n: 3 }
    }
}

fn positive_int(key: &str, value: &str) -> Result<usize, ScenarioError> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(ScenarioError::BadValue { key: key.to_string(), reason: format!("`{value}` is not a positive integer") }),
    }
}

fn finite(key: &str, value: &str) -> Result<f64, ScenarioError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ScenarioError::BadValue { key: key.to_string(), reason: format!("`{value}` is not a finite number") }),
    }
}

impl Params {
    pub fn with_overrides<S: AsRef<str>>(id: ScenarioId, overrides: &[S]) -> Result<Self, ScenarioError> {
        let mut p = Params::default();
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw.split_once('=').ok_or_else(|| ScenarioError::Malformed(raw.to_string()))?;
            let (key, value) = (key.trim(), value.trim());
            if !id.keys().contains(&key) {
                return Err(ScenarioError::UnknownKey {
                    id,
                    key: key.to_string(),
                    accepted: id.keys().join(", "),
                });
            }
            match key {
                "steps" => p.steps = positive_int(key, value)?,
                "d" => p.d = positive_int(key, value)?,
                "n" => p.n = positive_int(key, value)?,
                "length" => p.length = finite(key, value)?,
                "decay" => p.decay = finite(key, value)?,
                "alpha" => p.alpha = finite(key, value)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        Ok(p)
    }
}

fn ones(n: usize) -> CVector {
    CVector::from_element(n, c(1.0))
}

fn unit(n: usize, k: usize) -> CVector {
    CVector::from_fn(n, |i, _| c(if i == k { 1.0 } else { 0.0 }))
}

fn real(n: usize, f: impl Fn(usize, usize) -> f64) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| c(f(i, j)))
}

fn scalar_chain(p: &Params, ids: &[&str]) -> ProblemBuilder {
    ids.iter().fold(TimeGraphProblem::builder(), |b, id| {
        b.scalar_edge(*id, p.length, -p.decay, p.steps).forcing(*id, EdgeForcing::Constant(ones(1)))
    })
}

fn scalar_g(v: f64) -> CVector {
    CVector::from_element(1, c(v))
}

pub fn build(id: ScenarioId, p: &Params) -> TimeGraphProblem {
    match id {
        ScenarioId::Periodic => scalar_chain(p, &["e"]).scalar_block("e", "e", 1.0).build(),
        ScenarioId::PhaseShift => scalar_chain(p, &["e"]).scalar_block("e", "e", p.alpha).build(),
        ScenarioId::JumpCondition => TimeGraphProblem::builder()
            .scalar_edge("e", p.length, -p.decay, p.steps)
            .scalar_block("e", "e", 1.0)
            .g("e", scalar_g(1.0))
            .build(),
        ScenarioId::Tadpole => scalar_chain(p, &["1", "2"])
            .forcing("2", EdgeForcing::Zero)
            .scalar_block("1", "1", 1.0)
            .scalar_block("2", "1", 1.0)
            .build(),
        ScenarioId::Splitting => scalar_chain(p, &["0", "1", "2"])
            .scalar_block("1", "0", 1.0)
            .scalar_block("2", "0", 1.0)
            .g("0", scalar_g(2.0))
            .build(),
        ScenarioId::Superposition => scalar_chain(p, &["0", "1", "2"])
            .scalar_block("2", "0", 0.5)
            .scalar_block("2", "1", 0.5)
            .g("0", scalar_g(2.0))
            .g("1", scalar_g(0.5))
            .build(),
        ScenarioId::Cycle => scalar_chain(p, &["0", "1", "2", "3"])
            .scalar_block("1", "0", 0.5)
            .scalar_block("2", "0", 0.5)
            .scalar_block("3", "1", 1.0)
            .scalar_block("3", "2", 1.0)
            .g("0", scalar_g(1.0))
            .build(),
        ScenarioId::MultiLoop => {
            let loops = [("loop_1", 1.0), ("loop_2", 0.5), ("loop_3", 0.25)];
            let mut b = scalar_chain(p, &["in", "out"]).g("in", scalar_g(1.0));
            for (id, frac) in loops {
                b = b
                    .scalar_edge(id, p.length * frac, -p.decay, p.steps)
                    .forcing(id, EdgeForcing::Constant(ones(1)))
                    .scalar_block(id, id, 1.0)
                    .scalar_block(id, "in", 1.0 / 3.0)
                    .scalar_block("out", id, 1.0 / 3.0);
            }
            b.build()
        }
        ScenarioId::TimeTravel => scalar_chain(p, &["1", "2", "3", "4"])
            .scalar_block("2", "1", 1.0)
            .scalar_block("2", "4", 1.0)
            .scalar_block("3", "2", 1.0)
            .scalar_block("4", "2", 1.0)
            .g("1", scalar_g(1.0))
            .build(),
        ScenarioId::TimeTravelMultiverse => scalar_chain(p, &["1", "2", "3", "4", "5"])
            .scalar_block("2", "1", 1.0)
            .scalar_block("3", "2", 1.0)
            .scalar_block("4", "2", 1.0)
            .scalar_block("5", "4", 1.0)
            .scalar_block("5", "1", 1.0)
            .g("1", scalar_g(1.0))
            .build(),
        ScenarioId::Groundhog => {
            let id2 = real(2, |i, j| if i == j { 1.0 } else { 0.0 });
            let rotation = real(2, |i, j| match (i, j) {
                (0, 1) => 1.0,
                (1, 0) => -1.0,
                _ => 0.0,
            });
            TimeGraphProblem::builder()
                .edge("lead", p.length, -id2.clone(), p.steps)
                .edge("loop", p.length, rotation, p.steps)
                .edge("exit", p.length, -id2.clone(), p.steps)
                .g("lead", unit(2, 0))
                .block("loop", "loop", id2.clone())
                .block("loop", "lead", id2.clone())
                .block("exit", "loop", id2)
                .build()
        }
        ScenarioId::LionsChain => {
            let generators = [
                real(2, |i, j| [[-1.0, 0.0], [0.0, -2.0]][i][j]),
                real(2, |i, j| [[-2.0, 1.0], [1.0, -2.0]][i][j]),
                real(2, |i, j| [[-3.0, 0.5], [-0.5, -1.0]][i][j]),
            ];
            let id2 = real(2, |i, j| if i == j { 1.0 } else { 0.0 });
            let mut b = TimeGraphProblem::builder();
            for k in 0..p.n {
                let id = k.to_string();
                b = b
                    .edge(id.as_str(), p.length, generators[k % generators.len()].clone(), p.steps)
                    .forcing(id.as_str(), EdgeForcing::Constant(ones(2)));
                if k > 0 {
                    b = b.block(id.as_str(), (k - 1).to_string(), id2.clone());
                }
            }
            b.g("0", ones(2)).build()
        }
        ScenarioId::FrequencyShift => {
            let d = p.d;
            let cut = d.div_ceil(2);
            let a = real(d, |i, j| if i == j { -((i + 1) as f64) } else { 0.0 });
            let low = real(d, |i, j| if i == j && i < cut { 1.0 } else { 0.0 });
            let high = real(d, |i, j| if i == j && i >= cut { 1.0 } else { 0.0 });
            let shift_down = real(d, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
            let mut b = TimeGraphProblem::builder();
            for id in ["0", "1", "2", "3"] {
                b = b.edge(id, p.length, a.clone(), p.steps);
            }
            b.block("1", "0", low)
                .block("2", "0", high.clone())
                .block("3", "1", shift_down)
                .block("3", "2", high)
                .g("0", ones(d))
                .build()
        }
    }
}

/// The preset as a self-describing problem file.
pub fn problem_file(id: ScenarioId, p: &Params) -> ProblemFile {
    ProblemFile::from_problem(&build(id, p), Mode::Parabolic, Options::default())
}
