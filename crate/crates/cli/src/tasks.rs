//! Task dispatch: everything between a parsed configuration and the files.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

use epigame_core::config::{RunConfig, SimProfile, TaskKind, TaskSpec};
use epigame_core::costs;
use epigame_core::dynamics::{self, DynamicsError};
use epigame_core::gne::{self, GneKind};
use epigame_core::nash::{self, EquilibriumKind};
use epigame_core::profile::{DiracPair, DiscreteProfile, TwoPointProfile};

use crate::output::{artifact_path, config_hash, csv_provenance, json_envelope, write_atomic};
use crate::{CliError, RunArgs};

/// Outcome of a task: what ran, under which configuration, and where the
/// artifacts landed.
pub struct TaskResult {
    pub task: &'static str,
    pub config_hash: String,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

impl fmt::Display for TaskResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        write!(
            f,
            "task={} config={} time={:.2}s outputs={} :: {}",
            self.task,
            self.config_hash,
            self.wall_time_s,
            outputs.join(","),
            self.summary
        )
    }
}

fn numeric(err: DynamicsError) -> CliError {
    CliError::Numeric(err.to_string())
}

pub fn run(kind: TaskKind, args: &RunArgs) -> Result<TaskResult, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let overrides: Vec<(String, String)> = args
        .set
        .iter()
        .map(|spec| {
            spec.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Config(format!("--set {spec}: expected KEY=VALUE")))
        })
        .collect::<Result<_, _>>()?;

    if let Some(threads) = args.threads {
        // ignored when a pool already exists (tests run several tasks)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let mut config: RunConfig<f64> = RunConfig::parse(&text, &overrides, Some(kind))
        .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    let hash = config_hash(&config.canonical);

    let (outputs, summary) = match &config.task {
        TaskSpec::Simulate { profile } => simulate(&config, &hash, profile)?,
        TaskSpec::Nash => nash_task(&config, &hash)?,
        TaskSpec::Gne { variance_bound } => gne_task(&config, &hash, *variance_bound)?,
        TaskSpec::SweepG1 { values, ratio } => sweep_g1(&config, &hash, values, *ratio)?,
        TaskSpec::SweepBound { values } => sweep_bounds(&config, &hash, values)?,
    };
    for path in &outputs {
        if !path.exists() {
            return Err(CliError::Output(format!(
                "declared output {} was not written",
                path.display()
            )));
        }
    }
    Ok(TaskResult {
        task: kind.name(),
        config_hash: hash,
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs,
        summary,
    })
}

fn simulate(
    config: &RunConfig<f64>,
    hash: &str,
    profile: &SimProfile<f64>,
) -> Result<(Vec<PathBuf>, String), CliError> {
    let params = &config.model;
    let profile = match *profile {
        SimProfile::TwoPoint { tilde_u1, tilde_u2 } => DiscreteProfile::two_point(
            params,
            &TwoPointProfile::new(tilde_u1, tilde_u2)
                .map_err(|e| CliError::Config(e.to_string()))?,
        ),
        SimProfile::Dirac { u1, u2 } => DiscreteProfile::dirac(
            params,
            &DiracPair::new(params, u1, u2).map_err(|e| CliError::Config(e.to_string()))?,
        ),
    };
    let steps = config.solver.ode_steps;
    let trajectory = dynamics::integrate(params, &profile, steps).map_err(numeric)?;
    let report = costs::cost_report(params, &profile, steps).map_err(numeric)?;
    let exposure = trajectory.exposure(params);

    let csv_path = artifact_path(&config.output_dir, "trajectory.csv")?;
    let mut csv = csv_provenance(hash).into_bytes();
    trajectory
        .write_csv(&profile, &mut csv)
        .map_err(|e| CliError::Output(e.to_string()))?;
    write_atomic(&csv_path, &csv)?;

    let json_path = artifact_path(&config.output_dir, "simulate.json")?;
    let body = json_envelope(
        "simulate",
        hash,
        json!({}),
        json!({ "exposure": exposure, "costs": report }),
    );
    write_atomic(&json_path, &body)?;

    Ok((
        vec![csv_path, json_path],
        format!(
            "exposure F={exposure:.6}, prevalence={:.4}, variance={:.4}",
            report.prevalence, report.variance
        ),
    ))
}

fn kind_label(kind: EquilibriumKind) -> &'static str {
    match kind {
        EquilibriumKind::Pure => "pure",
        EquilibriumKind::BoundaryMixed => "boundary-mixed",
        EquilibriumKind::InternalMixed => "internal-mixed",
    }
}

fn nash_task(config: &RunConfig<f64>, hash: &str) -> Result<(Vec<PathBuf>, String), CliError> {
    let records =
        nash::enumerate_all(&config.model, &config.solver.nash_settings()).map_err(numeric)?;
    if records.is_empty() {
        return Err(CliError::Empty("no equilibria found".to_string()));
    }

    let json_path = artifact_path(&config.output_dir, "equilibria.json")?;
    write_atomic(
        &json_path,
        &json_envelope("nash", hash, json!({}), json!(records)),
    )?;

    let csv_path = artifact_path(&config.output_dir, "equilibria.csv")?;
    let mut csv = csv_provenance(hash);
    csv.push_str(
        "kind,tilde_u1,tilde_u2,J1,J2,J1_at_u_m,J1_at_u_M,J2_at_u_m,J2_at_u_M,prevalence,residual,pareto_dominated\n",
    );
    for r in &records {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            kind_label(r.kind),
            r.tilde_u1,
            r.tilde_u2,
            r.cost[0],
            r.cost[1],
            r.cost_at_bounds[0][0],
            r.cost_at_bounds[0][1],
            r.cost_at_bounds[1][0],
            r.cost_at_bounds[1][1],
            r.prevalence,
            r.residual,
            r.pareto_dominated,
        ));
    }
    write_atomic(&csv_path, csv.as_bytes())?;

    let undominated = records.iter().filter(|r| !r.pareto_dominated).count();
    Ok((
        vec![json_path, csv_path],
        format!(
            "{} equilibria ({undominated} Pareto-undominated)",
            records.len()
        ),
    ))
}

fn gne_task(
    config: &RunConfig<f64>,
    hash: &str,
    bound: f64,
) -> Result<(Vec<PathBuf>, String), CliError> {
    let outcome =
        gne::find_gne(&config.model, bound, &config.solver.gne_settings()).map_err(numeric)?;
    let within_bound = gne::nash_within_bound(&config.model, bound, &config.solver.nash_settings())
        .map_err(numeric)?;

    let contour_path = artifact_path(&config.output_dir, "contour.csv")?;
    let mut contour_csv = csv_provenance(hash).into_bytes();
    outcome
        .grid
        .write_csv(&mut contour_csv)
        .map_err(|e| CliError::Output(e.to_string()))?;
    write_atomic(&contour_path, &contour_csv)?;

    let nash_meta: Vec<_> = within_bound
        .iter()
        .map(|(record, variance)| json!({ "record": record, "variance": variance }))
        .collect();
    let json_path = artifact_path(&config.output_dir, "gne.json")?;
    write_atomic(
        &json_path,
        &json_envelope(
            "gne",
            hash,
            json!({
                "variance_bound": bound,
                "contour_tolerance": outcome.contour_tolerance,
                "nash_within_bound": nash_meta,
            }),
            json!(outcome.records),
        ),
    )?;

    let boundary = outcome
        .records
        .iter()
        .filter(|r| r.kind == GneKind::Boundary)
        .count();
    let interior = outcome
        .records
        .iter()
        .filter(|r| r.kind == GneKind::Interior)
        .count();
    if outcome.records.is_empty() {
        return Err(CliError::Empty(format!(
            "no generalized equilibria under V <= {bound} \
             (outputs {} and {} were still written)",
            json_path.display(),
            contour_path.display()
        )));
    }
    Ok((
        vec![json_path, contour_path],
        format!("{boundary} boundary + {interior} interior records under V <= {bound}"),
    ))
}

fn sweep_g1(
    config: &RunConfig<f64>,
    hash: &str,
    values: &[f64],
    ratio: f64,
) -> Result<(Vec<PathBuf>, String), CliError> {
    let rows = nash::sweep_g1(&config.model, values, ratio, &config.solver.nash_settings());
    let mut csv = csv_provenance(hash);
    csv.push_str("G1,G2,status,kind,tilde_u1,tilde_u2,J1,J2,prevalence\n");
    let mut succeeded = 0usize;
    for row in &rows {
        match &row.outcome {
            Ok(records) => {
                succeeded += 1;
                for r in records {
                    csv.push_str(&format!(
                        "{},{},ok,{},{},{},{},{},{}\n",
                        row.g1,
                        row.g2,
                        kind_label(r.kind),
                        r.tilde_u1,
                        r.tilde_u2,
                        r.cost[0],
                        r.cost[1],
                        r.prevalence,
                    ));
                }
            }
            Err(err) => {
                let message = err.to_string().replace(',', ";");
                csv.push_str(&format!("{},{},error: {message},,,,,,\n", row.g1, row.g2));
            }
        }
    }
    let path = artifact_path(&config.output_dir, "sweep.csv")?;
    write_atomic(&path, csv.as_bytes())?;
    if succeeded == 0 {
        return Err(CliError::Numeric("every sweep row failed".to_string()));
    }
    Ok((
        vec![path],
        format!(
            "{succeeded}/{} G1 values solved (ratio {ratio})",
            rows.len()
        ),
    ))
}

fn sweep_bounds(
    config: &RunConfig<f64>,
    hash: &str,
    values: &[f64],
) -> Result<(Vec<PathBuf>, String), CliError> {
    let rows =
        gne::sweep_bounds(&config.model, values, &config.solver.gne_settings()).map_err(numeric)?;
    let mut csv = csv_provenance(hash);
    csv.push_str("C,status,gne_count,J1_min,J1_max,J2_min,J2_max,prevalence_mean\n");
    let mut nonempty = 0usize;
    for row in &rows {
        match (row.cost_min, row.cost_max, row.prevalence_mean) {
            (Some(lo), Some(hi), Some(prev)) => {
                nonempty += 1;
                csv.push_str(&format!(
                    "{},ok,{},{},{},{},{},{}\n",
                    row.bound, row.gne_count, lo[0], hi[0], lo[1], hi[1], prev,
                ));
            }
            _ => csv.push_str(&format!("{},empty,0,,,,,\n", row.bound)),
        }
    }
    let path = artifact_path(&config.output_dir, "sweep.csv")?;
    write_atomic(&path, csv.as_bytes())?;
    Ok((
        vec![path],
        format!("{nonempty}/{} bounds with equilibria", rows.len()),
    ))
}
