//! Declarative run-configuration format.
//!
//! A run is described by one flat key-value file with four sections:
//!
//! ```text
//! [model]              # all keys required
//! r = 2.0
//! T = 50
//! I0 = 0.01
//! u_m = 0.1
//! u_M = 0.9
//! n1 = 2
//! n2 = 0.5
//! alpha1 = 1
//! alpha2 = 1
//! G1 = 0.2
//! G2 = 1.0
//! s11 = 2
//! s12 = 0.5
//! s21 = 2
//! s22 = 0.5
//!
//! [solver]             # optional, defaults shown
//! ode_steps = 5000
//! line_search = 400
//! eq_tol = 1e-6
//! gne_grid = 81
//! probe_points = 201
//! rho_points = 21
//!
//! [task]
//! run = nash           # simulate | nash | gne | sweep
//! # simulate: profile = two_point (tilde_u1, tilde_u2) or dirac (u1, u2)
//! # gne:      variance_bound = 0.1
//! # sweep:    parameter = G1 | C, plus values = a, b, ...
//! #           (or from / to / count), and ratio for G1 sweeps
//!
//! [output]             # optional
//! dir = out
//! ```
//!
//! Parsing is strict: unknown sections, unknown or unused keys, duplicates,
//! and malformed values are all reported with their line number, so a config
//! that parses describes exactly one reproducible run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::float::Scalar;
use crate::gne::GneSettings;
use crate::nash::NashSettings;
use crate::params::{InvalidParams, ModelParams, ValidatedParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown or unused key {section}.{key}")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: duplicate key {section}.{key}")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("missing key {section}.{key}")]
    MissingKey {
        section: &'static str,
        key: &'static str,
    },
    #[error("line {line}: {section}.{key}: {message}")]
    InvalidValue {
        line: usize,
        section: String,
        key: String,
        message: String,
    },
    #[error("override {key}: {message}")]
    BadOverride { key: String, message: String },
    #[error(transparent)]
    Params(#[from] InvalidParams),
}

/// Which of the four tasks a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Simulate,
    Nash,
    Gne,
    Sweep,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Simulate => "simulate",
            TaskKind::Nash => "nash",
            TaskKind::Gne => "gne",
            TaskKind::Sweep => "sweep",
        }
    }
}

/// Initial profile of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimProfile<T> {
    TwoPoint { tilde_u1: T, tilde_u2: T },
    Dirac { u1: T, u2: T },
}

/// Parameter varied by a sweep run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Vulnerability of the first type, with `G2 = ratio * G1`.
    G1,
    /// Variance bound of the constrained game.
    VarianceBound,
}

/// Fully resolved task description.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec<T> {
    Simulate { profile: SimProfile<T> },
    Nash,
    Gne { variance_bound: T },
    SweepG1 { values: Vec<T>, ratio: T },
    SweepBound { values: Vec<T> },
}

impl<T> TaskSpec<T> {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Simulate { .. } => TaskKind::Simulate,
            TaskSpec::Nash => TaskKind::Nash,
            TaskSpec::Gne { .. } => TaskKind::Gne,
            TaskSpec::SweepG1 { .. } | TaskSpec::SweepBound { .. } => TaskKind::Sweep,
        }
    }
}

/// Solver resolutions and tolerances shared by every task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T> {
    pub ode_steps: usize,
    pub line_search: usize,
    pub eq_tol: T,
    pub gne_grid: usize,
    pub probe_points: usize,
    pub rho_points: usize,
}

impl<T: Scalar> SolverSettings<T> {
    pub fn nash_settings(&self) -> NashSettings<T> {
        NashSettings {
            ode_steps: self.ode_steps,
            line_search: self.line_search,
            eq_tol: self.eq_tol,
        }
    }

    pub fn gne_settings(&self) -> GneSettings {
        GneSettings {
            grid_resolution: self.gne_grid,
            probe_points: self.probe_points,
            rho_points: self.rho_points,
            ode_steps: self.ode_steps,
        }
    }
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            ode_steps: 5000,
            line_search: 400,
            eq_tol: crate::float::c(1e-6),
            gne_grid: 81,
            probe_points: 201,
            rho_points: 21,
        }
    }
}

/// A parsed, validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub model: ValidatedParams<T>,
    pub solver: SolverSettings<T>,
    pub task: TaskSpec<T>,
    pub output_dir: PathBuf,
    /// Sorted `section.key=value` lines of the resolved configuration,
    /// excluding the output location; hashing this ties outputs to the
    /// exact run description.
    pub canonical: String,
}

const SECTIONS: [&str; 4] = ["model", "solver", "task", "output"];

const MODEL_KEYS: [&str; 15] = [
    "r", "T", "I0", "u_m", "u_M", "n1", "n2", "alpha1", "alpha2", "G1", "G2", "s11", "s12", "s21",
    "s22",
];
const SOLVER_KEYS: [&str; 6] = [
    "ode_steps",
    "line_search",
    "eq_tol",
    "gne_grid",
    "probe_points",
    "rho_points",
];
const TASK_KEYS: [&str; 11] = [
    "run",
    "profile",
    "tilde_u1",
    "tilde_u2",
    "u1",
    "u2",
    "variance_bound",
    "parameter",
    "values",
    "ratio",
    "from",
];
const TASK_KEYS_EXTRA: [&str; 2] = ["to", "count"];
const OUTPUT_KEYS: [&str; 1] = ["dir"];

fn known_key(section: &str, key: &str) -> bool {
    match section {
        "model" => MODEL_KEYS.contains(&key),
        "solver" => SOLVER_KEYS.contains(&key),
        "task" => TASK_KEYS.contains(&key) || TASK_KEYS_EXTRA.contains(&key),
        "output" => OUTPUT_KEYS.contains(&key),
        _ => false,
    }
}

/// Section a bare override key belongs to, when unambiguous.
fn section_of(key: &str) -> Option<&'static str> {
    for (section, keys) in [
        ("model", &MODEL_KEYS[..]),
        ("solver", &SOLVER_KEYS[..]),
        ("task", &TASK_KEYS[..]),
        ("task", &TASK_KEYS_EXTRA[..]),
        ("output", &OUTPUT_KEYS[..]),
    ] {
        if keys.contains(&key) {
            return Some(section);
        }
    }
    None
}

#[derive(Debug, Clone)]
struct RawEntry {
    line: usize,
    value: String,
    consumed: bool,
}

/// Raw parse: sections, keys, duplicates, and nothing else.
fn parse_raw(text: &str) -> Result<BTreeMap<(String, String), RawEntry>, ConfigError> {
    let mut map = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "unterminated section header".to_string(),
            })?;
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::UnknownSection {
                    line,
                    name: name.to_string(),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{trimmed}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(section) = section.clone() else {
            return Err(ConfigError::Syntax {
                line,
                message: format!("key `{key}` appears before any [section]"),
            });
        };
        if !known_key(&section, &key) {
            return Err(ConfigError::UnknownKey { line, section, key });
        }
        if value.is_empty() {
            return Err(ConfigError::InvalidValue {
                line,
                section,
                key,
                message: "empty value".to_string(),
            });
        }
        if map
            .insert(
                (section.clone(), key.clone()),
                RawEntry {
                    line,
                    value,
                    consumed: false,
                },
            )
            .is_some()
        {
            return Err(ConfigError::DuplicateKey { line, section, key });
        }
    }
    Ok(map)
}

fn apply_overrides(
    map: &mut BTreeMap<(String, String), RawEntry>,
    overrides: &[(String, String)],
) -> Result<(), ConfigError> {
    for (key, value) in overrides {
        let (section, bare) = match key.split_once('.') {
            Some((section, bare)) => {
                if !SECTIONS.contains(&section) {
                    return Err(ConfigError::BadOverride {
                        key: key.clone(),
                        message: format!("unknown section `{section}`"),
                    });
                }
                (section.to_string(), bare.to_string())
            }
            None => match section_of(key) {
                Some(section) => (section.to_string(), key.clone()),
                None => {
                    return Err(ConfigError::BadOverride {
                        key: key.clone(),
                        message: "not a recognized configuration key".to_string(),
                    })
                }
            },
        };
        if !known_key(&section, &bare) {
            return Err(ConfigError::BadOverride {
                key: key.clone(),
                message: format!("no key `{bare}` in section [{section}]"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::BadOverride {
                key: key.clone(),
                message: "empty value".to_string(),
            });
        }
        map.insert(
            (section, bare),
            RawEntry {
                line: 0,
                value: value.clone(),
                consumed: false,
            },
        );
    }
    Ok(())
}

struct Reader {
    map: BTreeMap<(String, String), RawEntry>,
}

impl Reader {
    fn take(&mut self, section: &'static str, key: &'static str) -> Option<(usize, String)> {
        self.map
            .get_mut(&(section.to_string(), key.to_string()))
            .map(|entry| {
                entry.consumed = true;
                (entry.line, entry.value.clone())
            })
    }

    fn require(
        &mut self,
        section: &'static str,
        key: &'static str,
    ) -> Result<(usize, String), ConfigError> {
        self.take(section, key)
            .ok_or(ConfigError::MissingKey { section, key })
    }

    fn scalar<T: Scalar>(
        &mut self,
        section: &'static str,
        key: &'static str,
    ) -> Result<T, ConfigError> {
        let (line, value) = self.require(section, key)?;
        parse_scalar(section, key, line, &value)
    }

    fn scalar_or<T: Scalar>(
        &mut self,
        section: &'static str,
        key: &'static str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.take(section, key) {
            Some((line, value)) => parse_scalar(section, key, line, &value),
            None => Ok(default),
        }
    }

    fn count_or(
        &mut self,
        section: &'static str,
        key: &'static str,
        default: usize,
    ) -> Result<usize, ConfigError> {
        match self.take(section, key) {
            Some((line, value)) => value
                .parse::<usize>()
                .map_err(|e| ConfigError::InvalidValue {
                    line,
                    section: section.to_string(),
                    key: key.to_string(),
                    message: e.to_string(),
                }),
            None => Ok(default),
        }
    }

    fn leftovers(&self) -> Option<ConfigError> {
        self.map
            .iter()
            .find(|(_, entry)| !entry.consumed)
            .map(|((section, key), entry)| ConfigError::UnknownKey {
                line: entry.line,
                section: section.clone(),
                key: key.clone(),
            })
    }

    fn canonical(&self) -> String {
        // the output location does not influence results, so it stays out
        // of the provenance hash
        let mut lines: Vec<String> = self
            .map
            .iter()
            .filter(|((section, _), _)| section != "output")
            .map(|((section, key), entry)| format!("{section}.{key}={}", entry.value))
            .collect();
        lines.sort();
        lines.join("\n")
    }
}

fn parse_scalar<T: Scalar>(
    section: &str,
    key: &str,
    line: usize,
    value: &str,
) -> Result<T, ConfigError> {
    let parsed: f64 =
        value
            .parse()
            .map_err(|e: std::num::ParseFloatError| ConfigError::InvalidValue {
                line,
                section: section.to_string(),
                key: key.to_string(),
                message: e.to_string(),
            })?;
    T::from_f64(parsed).ok_or_else(|| ConfigError::InvalidValue {
        line,
        section: section.to_string(),
        key: key.to_string(),
        message: "value not representable in the scalar type".to_string(),
    })
}

fn solver_bound(field: &'static str, got: usize, min: usize) -> Result<usize, ConfigError> {
    if got < min {
        return Err(ConfigError::InvalidValue {
            line: 0,
            section: "solver".to_string(),
            key: field.to_string(),
            message: format!("must be at least {min}"),
        });
    }
    Ok(got)
}

impl<T: Scalar> RunConfig<T> {
    /// Parses a configuration, applying `--set` style overrides on top.
    ///
    /// `task_override`, when given, selects the task regardless of the
    /// file's `run` key (the key is then optional).
    pub fn parse(
        text: &str,
        overrides: &[(String, String)],
        task_override: Option<TaskKind>,
    ) -> Result<Self, ConfigError> {
        let mut map = parse_raw(text)?;
        apply_overrides(&mut map, overrides)?;
        let mut reader = Reader { map };
        let canonical = reader.canonical();

        let model = ModelParams {
            r: reader.scalar("model", "r")?,
            horizon: reader.scalar("model", "T")?,
            i0: reader.scalar("model", "I0")?,
            u_min: reader.scalar("model", "u_m")?,
            u_max: reader.scalar("model", "u_M")?,
            n: [reader.scalar("model", "n1")?, reader.scalar("model", "n2")?],
            alpha: [
                reader.scalar("model", "alpha1")?,
                reader.scalar("model", "alpha2")?,
            ],
            g: [reader.scalar("model", "G1")?, reader.scalar("model", "G2")?],
            s: [
                [
                    reader.scalar("model", "s11")?,
                    reader.scalar("model", "s12")?,
                ],
                [
                    reader.scalar("model", "s21")?,
                    reader.scalar("model", "s22")?,
                ],
            ],
        }
        .validate()?;

        let defaults = SolverSettings::<T>::default();
        let solver = SolverSettings {
            ode_steps: solver_bound(
                "ode_steps",
                reader.count_or("solver", "ode_steps", defaults.ode_steps)?,
                crate::dynamics::MIN_STEPS,
            )?,
            line_search: solver_bound(
                "line_search",
                reader.count_or("solver", "line_search", defaults.line_search)?,
                50,
            )?,
            eq_tol: reader.scalar_or("solver", "eq_tol", defaults.eq_tol)?,
            gne_grid: solver_bound(
                "gne_grid",
                reader.count_or("solver", "gne_grid", defaults.gne_grid)?,
                20,
            )?,
            probe_points: solver_bound(
                "probe_points",
                reader.count_or("solver", "probe_points", defaults.probe_points)?,
                50,
            )?,
            rho_points: solver_bound(
                "rho_points",
                reader.count_or("solver", "rho_points", defaults.rho_points)?,
                2,
            )?,
        };
        if !solver.eq_tol.is_finite() || solver.eq_tol <= T::zero() {
            return Err(ConfigError::InvalidValue {
                line: 0,
                section: "solver".to_string(),
                key: "eq_tol".to_string(),
                message: "must be positive".to_string(),
            });
        }

        let kind = match task_override {
            Some(kind) => {
                // consume a matching run key if present
                if let Some((line, value)) = reader.take("task", "run") {
                    parse_task_kind(line, &value)?;
                }
                kind
            }
            None => {
                let (line, value) = reader.require("task", "run")?;
                parse_task_kind(line, &value)?
            }
        };
        let task = parse_task(&mut reader, kind, &model)?;

        let output_dir = PathBuf::from(
            reader
                .take("output", "dir")
                .map(|(_, v)| v)
                .unwrap_or_else(|| "out".to_string()),
        );

        if let Some(err) = reader.leftovers() {
            return Err(err);
        }
        Ok(RunConfig {
            model,
            solver,
            task,
            output_dir,
            canonical,
        })
    }
}

fn parse_task_kind(line: usize, value: &str) -> Result<TaskKind, ConfigError> {
    match value {
        "simulate" => Ok(TaskKind::Simulate),
        "nash" => Ok(TaskKind::Nash),
        "gne" => Ok(TaskKind::Gne),
        "sweep" => Ok(TaskKind::Sweep),
        other => Err(ConfigError::InvalidValue {
            line,
            section: "task".to_string(),
            key: "run".to_string(),
            message: format!("unknown task `{other}`"),
        }),
    }
}

fn parse_task<T: Scalar>(
    reader: &mut Reader,
    kind: TaskKind,
    model: &ValidatedParams<T>,
) -> Result<TaskSpec<T>, ConfigError> {
    match kind {
        TaskKind::Nash => Ok(TaskSpec::Nash),
        TaskKind::Simulate => {
            let profile = match reader.take("task", "profile") {
                Some((_, v)) if v == "dirac" => SimProfile::Dirac {
                    u1: reader.scalar("task", "u1")?,
                    u2: reader.scalar("task", "u2")?,
                },
                Some((line, v)) if v != "two_point" => {
                    return Err(ConfigError::InvalidValue {
                        line,
                        section: "task".to_string(),
                        key: "profile".to_string(),
                        message: format!("expected `two_point` or `dirac`, got `{v}`"),
                    })
                }
                _ => SimProfile::TwoPoint {
                    tilde_u1: reader.scalar("task", "tilde_u1")?,
                    tilde_u2: reader.scalar("task", "tilde_u2")?,
                },
            };
            if let SimProfile::Dirac { u1, u2 } = profile {
                crate::profile::DiracPair::new(model, u1, u2).map_err(|e| {
                    ConfigError::InvalidValue {
                        line: 0,
                        section: "task".to_string(),
                        key: "u1".to_string(),
                        message: e.to_string(),
                    }
                })?;
            }
            if let SimProfile::TwoPoint { tilde_u1, tilde_u2 } = profile {
                crate::profile::TwoPointProfile::new(tilde_u1, tilde_u2).map_err(|e| {
                    ConfigError::InvalidValue {
                        line: 0,
                        section: "task".to_string(),
                        key: "tilde_u1".to_string(),
                        message: e.to_string(),
                    }
                })?;
            }
            Ok(TaskSpec::Simulate { profile })
        }
        TaskKind::Gne => {
            let bound: T = reader.scalar("task", "variance_bound")?;
            if !bound.is_finite() || bound <= T::zero() {
                return Err(ConfigError::InvalidValue {
                    line: 0,
                    section: "task".to_string(),
                    key: "variance_bound".to_string(),
                    message: "must be positive".to_string(),
                });
            }
            Ok(TaskSpec::Gne {
                variance_bound: bound,
            })
        }
        TaskKind::Sweep => {
            let (line, parameter) = reader.require("task", "parameter")?;
            let values = sweep_values(reader)?;
            match parameter.as_str() {
                "G1" => {
                    let ratio: T = reader.scalar_or("task", "ratio", crate::float::c(5.0))?;
                    if !ratio.is_finite() || ratio <= T::one() {
                        return Err(ConfigError::InvalidValue {
                            line: 0,
                            section: "task".to_string(),
                            key: "ratio".to_string(),
                            message: "must exceed 1 to keep G2 > G1".to_string(),
                        });
                    }
                    Ok(TaskSpec::SweepG1 { values, ratio })
                }
                "C" => Ok(TaskSpec::SweepBound { values }),
                other => Err(ConfigError::InvalidValue {
                    line,
                    section: "task".to_string(),
                    key: "parameter".to_string(),
                    message: format!("expected `G1` or `C`, got `{other}`"),
                }),
            }
        }
    }
}

fn sweep_values<T: Scalar>(reader: &mut Reader) -> Result<Vec<T>, ConfigError> {
    let explicit = reader.take("task", "values");
    let from = reader.take("task", "from");
    if let Some((line, list)) = explicit {
        if from.is_some() {
            return Err(ConfigError::InvalidValue {
                line,
                section: "task".to_string(),
                key: "values".to_string(),
                message: "give either `values` or `from`/`to`/`count`, not both".to_string(),
            });
        }
        let values: Vec<T> = list
            .split(',')
            .map(|item| parse_scalar("task", "values", line, item.trim()))
            .collect::<Result<_, _>>()?;
        if values.len() < 2 {
            return Err(ConfigError::InvalidValue {
                line,
                section: "task".to_string(),
                key: "values".to_string(),
                message: "a sweep needs at least two values".to_string(),
            });
        }
        return Ok(values);
    }
    let Some((line, from)) = from else {
        return Err(ConfigError::MissingKey {
            section: "task",
            key: "values",
        });
    };
    let start: T = parse_scalar("task", "from", line, &from)?;
    let (to_line, to) = reader.require("task", "to")?;
    let end: T = parse_scalar("task", "to", to_line, &to)?;
    let count = reader.count_or("task", "count", 0)?;
    if count < 2 {
        return Err(ConfigError::InvalidValue {
            line: 0,
            section: "task".to_string(),
            key: "count".to_string(),
            message: "a sweep needs at least two values".to_string(),
        });
    }
    let denom = crate::float::cu::<T>(count - 1);
    Ok((0..count)
        .map(|k| start + (end - start) * crate::float::cu::<T>(k) / denom)
        .collect())
}
