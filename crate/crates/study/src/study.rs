//! Convergence studies: run all coupled paths, aggregate, report.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use spde_core::cost::{cost_formula, ledger_expected, CostLedger};
use spde_core::noise::{purpose, substream, FreshNoise};
use spde_core::problem::{Problem, SineBasisProblem};
use spde_core::schemes::{integrate_with, SchemeKind};
use spde_core::spectral::{sobolev_norm, SpectralField};

use crate::config::{ErrorTime, ResolvedStudy, RunSpec, SchemeName, StudyConfig};
use crate::coupling::{simulate_path, CouplingPlan, PathOutcome};
use crate::error::{Result, StudyError};
use crate::estimate::{estimate_ms_error, fit_order, MsError, OrderFit};

/// One row per (scheme, resolution).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scheme: SchemeName,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "D")]
    pub d: Option<u64>,
    pub cost_formula: u64,
    pub cost_ledger: u64,
    pub error: f64,
    pub std: f64,
    pub paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub reference: RunSpec,
    pub reference_cost_ledger: u64,
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "scheme,N,M,K,D,cost_formula,cost_ledger,error,std,paths";

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    Ok(builder.build()?)
}

fn check_ledger(run: &RunSpec, ledger: &CostLedger) -> Result<()> {
    let expected = ledger_expected(run.kind(), run.n, run.k, run.d)?.times(run.m);
    if ledger.charged() != expected {
        return Err(StudyError::Invariant(format!(
            "{} N={} M={}: ledger {:?} differs from M x expected {:?}",
            run.scheme,
            run.n,
            run.m,
            ledger.charged(),
            expected
        )));
    }
    Ok(())
}

fn aggregate_grid(outcomes: &[PathOutcome], run: usize) -> Result<MsError> {
    let points = outcomes[0].grid_sq[run].len();
    let mut worst: Option<MsError> = None;
    for t in 0..points {
        let sample: Vec<f64> = outcomes.iter().map(|o| o.grid_sq[run][t]).collect();
        let est = estimate_ms_error(&sample)?;
        if worst.is_none_or(|w| est.error > w.error) {
            worst = Some(est);
        }
    }
    worst.ok_or_else(|| StudyError::Insufficient("no grid points shared with the reference".into()))
}

/// Runs the study described by `config`.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let study = config.resolve()?;
    run_resolved(config, &study)
}

pub fn run_resolved(config: &StudyConfig, study: &ResolvedStudy) -> Result<StudyReport> {
    let plan = CouplingPlan::new(study, study.error_at == ErrorTime::AllGrid)?;
    let outcomes: Vec<PathOutcome> = pool(study.threads)?.install(|| {
        (0..study.paths)
            .into_par_iter()
            .map(|p| simulate_path(&plan, &study.problem, study.seed, p))
            .collect::<Result<Vec<_>>>()
    })?;
    let first = &outcomes[0];
    check_ledger(&study.reference, &first.reference_ledger)?;
    let mut rows = Vec::with_capacity(study.runs.len());
    for (i, run) in study.runs.iter().enumerate() {
        if outcomes.iter().any(|o| o.ledgers[i] != first.ledgers[i]) {
            return Err(StudyError::Invariant(format!("{} N={}: ledger differs between paths", run.scheme, run.n)));
        }
        check_ledger(run, &first.ledgers[i])?;
        let estimate = match study.error_at {
            ErrorTime::Final => estimate_ms_error(&outcomes.iter().map(|o| o.final_sq[i]).collect::<Vec<_>>())?,
            ErrorTime::AllGrid => aggregate_grid(&outcomes, i)?,
        };
        let q = study.problem.params().q_for(run.kind());
        rows.push(ReportRow {
            scheme: run.scheme,
            n: run.n,
            m: run.m,
            k: run.k,
            d: run.d,
            cost_formula: cost_formula(run.kind(), run.n, run.k, run.m, q)?,
            cost_ledger: first.ledgers[i].total(1),
            error: estimate.error,
            std: estimate.std,
            paths: study.paths,
        });
    }
    Ok(StudyReport {
        config: config.clone(),
        reference: study.reference,
        reference_cost_ledger: first.reference_ledger.total(1),
        rows,
    })
}

impl StudyReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn rows_for(&self, kind: SchemeKind) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.scheme.0 == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderAxis {
    M,
    Cost,
}

/// Slope of `log(error)` against `log(M)` or `log(cost_formula)` for one scheme.
pub fn measure_order(report: &StudyReport, kind: SchemeKind, axis: OrderAxis) -> Result<OrderFit> {
    let points: Vec<(f64, f64)> = report
        .rows_for(kind)
        .map(|r| {
            let x = match axis {
                OrderAxis::M => r.m as f64,
                OrderAxis::Cost => r.cost_formula as f64,
            };
            (x, r.error)
        })
        .collect();
    fit_order(&points)
}

/// Monte Carlo profile of `E ||Y_m||²_{H_r}` over the grid of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentProfile {
    pub run: RunSpec,
    pub means: Vec<f64>,
    pub max: f64,
}

/// Second moments in `H_r` (uncoupled paths drawn from fresh noise).
pub fn moment_profile(
    problem: &SineBasisProblem,
    run: RunSpec,
    r: f64,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<MomentProfile> {
    if paths == 0 {
        return Err(StudyError::Insufficient("need at least one path".into()));
    }
    let config = run.scheme_config(problem.horizon());
    config.validate()?;
    let law = problem.a_law();
    let eta = problem.q_law().values(run.k as usize);
    let d = run.d.unwrap_or(1);
    let per_path: Vec<Vec<f64>> = pool(threads)?.install(|| {
        (0..paths)
            .into_par_iter()
            .map(|p| -> Result<Vec<f64>> {
                let rng = substream(seed, p, purpose::INCREMENTS, 0);
                let mut noise = FreshNoise::new(rng, config.step_len(), d, eta.clone())?;
                let mut norms = Vec::with_capacity(run.m as usize + 1);
                let mut ledger = CostLedger::new();
                integrate_with(&config, problem, &mut noise, &mut ledger, |_, y| {
                    let field = SpectralField::new(y.to_vec())?;
                    let norm = sobolev_norm(&field, &law, r)?;
                    norms.push(norm * norm);
                    Ok(())
                })?;
                Ok(norms)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let steps = per_path[0].len();
    let means: Vec<f64> =
        (0..steps).map(|t| per_path.iter().map(|v| v[t]).sum::<f64>() / paths as f64).collect();
    let max = means.iter().copied().fold(0.0, f64::max);
    Ok(MomentProfile { run, means, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{LadderEntry, ProblemSelector, ReferenceChoice, ReferenceSpec};

    fn small_config(threads: usize) -> StudyConfig {
        StudyConfig {
            problem: ProblemSelector::Example(1),
            schemes: vec![SchemeName(SchemeKind::Dfm), SchemeName(SchemeKind::Ees)],
            ladder: vec![LadderEntry { n: 4, m: Some(8), k: Some(2), d: None }, LadderEntry::auto(2)],
            paths: 6,
            seed: 3,
            reference: ReferenceChoice::Explicit(ReferenceSpec {
                scheme: SchemeName(SchemeKind::Lie),
                n: 8,
                k: 3,
                m: 64,
                d: None,
            }),
            error_at: ErrorTime::Final,
            threads: Some(threads),
            allow_large: false,
        }
    }

    #[test]
    fn report_shape_and_costs() {
        let report = run_study(&small_config(1)).unwrap();
        assert_eq!(report.rows.len(), 4);
        let csv = report.to_csv().unwrap();
        assert!(csv.starts_with(CSV_HEADER));
        for row in &report.rows {
            assert!(row.error > 0.0 && row.std >= 0.0);
            assert_eq!(row.paths, 6);
        }
        // DFMA N=2 planned as (M, K) = (4, 2), cost 94
        assert_eq!(report.rows[1].cost_formula, 94);
        assert_eq!(report.rows[3].d, None);
        assert!(csv.lines().nth(4).unwrap().starts_with("EES,2,12,2,,96,"));
    }

    #[test]
    fn reproducible_across_threads() {
        let a = run_study(&small_config(1)).unwrap();
        let b = run_study(&small_config(3)).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn all_grid_error_dominates_final() {
        let mut config = small_config(1);
        let final_report = run_study(&config).unwrap();
        config.error_at = ErrorTime::AllGrid;
        let grid_report = run_study(&config).unwrap();
        for (f, g) in final_report.rows.iter().zip(&grid_report.rows) {
            assert!(g.error >= f.error);
        }
    }

    #[test]
    fn moment_profile_runs() {
        let problem = spde_core::problem::make_example(1).unwrap();
        let run = RunSpec { scheme: SchemeName(SchemeKind::Dfm), n: 4, k: 2, m: 16, d: Some(2) };
        let profile = moment_profile(&problem, run, 0.375, 4, 1, Some(1)).unwrap();
        assert_eq!(profile.means.len(), 17);
        assert_eq!(profile.means[0], 0.0);
        assert!(profile.max > 0.0);
    }
}
