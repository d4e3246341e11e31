//! Cost tables and EOC plans.

use std::io::Write;

use serde::Serialize;
use spde_core::cost::cost_formula_weighted;
use spde_core::eoc::{classify, eoc_exponent, optimal_resolution, ranking, NoiseDimension, PlanInput};
use spde_core::problem::{Problem, RegularityParams, SineBasisProblem};
use spde_core::schemes::SchemeKind;

use crate::config::{resolve_entry, LadderEntry, SchemeName};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostRow {
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
}

pub const COST_HEADER: &str = "scheme,N,M,K,D,cost_formula";

/// Closed-form cost for every (scheme, ladder entry), with functional
/// evaluations weighted by `functional_cost`.
pub fn cost_table(
    problem: &SineBasisProblem,
    schemes: &[SchemeKind],
    ladder: &[LadderEntry],
    functional_cost: u64,
) -> Result<Vec<CostRow>> {
    let mut rows = Vec::new();
    for &kind in schemes {
        for entry in ladder {
            let run = resolve_entry(problem, kind, entry)?;
            let q = problem.params().q_for(kind);
            rows.push(CostRow {
                scheme: run.scheme,
                n: run.n,
                m: run.m,
                k: run.k,
                d: run.d,
                cost_formula: cost_formula_weighted(kind, run.n, run.k, run.m, q, functional_cost)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_cost_csv<W: Write>(rows: &[CostRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedScheme {
    pub scheme: SchemeName,
    /// Exact exponent as `p/q`.
    pub eoc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannedRun {
    pub scheme: SchemeName,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "D")]
    pub d: Option<u64>,
    pub m_exponent: String,
    pub k_exponent: Option<String>,
    pub k_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EocReport {
    pub case: String,
    pub optimal: Vec<SchemeName>,
    pub ranking: Vec<RankedScheme>,
    pub lie: String,
    pub ladder: Vec<PlannedRun>,
}

pub fn plan_input(params: &RegularityParams, finite_rank: Option<u64>) -> Result<PlanInput> {
    let noise = match finite_rank {
        Some(rank) => NoiseDimension::Finite { rank },
        None => NoiseDimension::Infinite,
    };
    Ok(PlanInput::from_params(params, noise)?)
}

/// Case, ranking and planned resolutions for each anchor `N`.
pub fn eoc_report(input: &PlanInput, anchors: &[u64]) -> Result<EocReport> {
    let case = classify(input);
    let schemes = [SchemeKind::Dfm, SchemeKind::Mil, SchemeKind::Ees];
    let mut ladder = Vec::new();
    for &kind in &schemes {
        for &n in anchors {
            let r = optimal_resolution(input, kind, n)?;
            ladder.push(PlannedRun {
                scheme: SchemeName(kind),
                n: r.n,
                m: r.m,
                k: r.k,
                d: r.d,
                m_exponent: r.m_exponent.to_string(),
                k_exponent: r.k_exponent.map(|e| e.to_string()),
                k_clamped: r.k_clamped,
            });
        }
    }
    Ok(EocReport {
        case: case.label().to_string(),
        optimal: case.optimal().iter().map(|&k| SchemeName(k)).collect(),
        ranking: ranking(input)
            .into_iter()
            .map(|(kind, e)| RankedScheme { scheme: SchemeName(kind), eoc: e.to_string() })
            .collect(),
        lie: eoc_exponent(input, SchemeKind::Lie).to_string(),
        ladder,
    })
}
