//! Study configuration (JSON) and its resolution into concrete runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use spde_core::eoc::{optimal_resolution, NoiseDimension, PlanInput};
use spde_core::noise::choose_d1;
use spde_core::problem::{
    make_example, DiffusionLaw, DriftLaw, InitialLaw, Problem, RegularityParams, SineBasisProblem, SineBasisSpec,
};
use spde_core::schemes::SchemeKind;
use spde_core::spectral::EigenLaw;
use spde_core::{ceil_scaled_power, Rational};

use crate::error::{Result, StudyError};

/// Largest `paths * M_ref` accepted without `allow_large`.
pub const PATH_STEP_BUDGET: u64 = 50_000_000;

/// Scheme name as it appears in configs and reports (`DFMA`, `MILA`, `EES`, `LIE`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeName(pub SchemeKind);

impl Serialize for SchemeName {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.0.label())
    }
}

impl<'de> Deserialize<'de> for SchemeName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(SchemeName).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Exact rational written as `"7/8"`, `"2"` or a JSON integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RationalValue(pub Rational);

impl Serialize for RationalValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for RationalValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(i) => Ok(RationalValue(Rational::from_integer(i))),
            Repr::Text(t) => parse_rational(&t).map(RationalValue).map_err(serde::de::Error::custom),
        }
    }
}

/// Parses `"p/q"` or `"p"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    Rational::from_str(text.trim())
        .map_err(|_| StudyError::Config(format!("{text:?} is not a rational number like 7/8")))
        .and_then(|r| {
            if *r.denom() == 0 {
                Err(StudyError::Config(format!("{text:?} has a zero denominator")))
            } else {
                Ok(r)
            }
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftChoice {
    Zero,
    OneMinusState,
    DampedSine { s: f64, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialChoice {
    Zero,
    PowerDecay { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub beta: RationalValue,
    pub gamma: RationalValue,
    pub delta: RationalValue,
    pub alpha: RationalValue,
    pub vartheta: RationalValue,
    pub rho_a: RationalValue,
    pub rho_q: RationalValue,
}

impl ParamsSpec {
    fn to_params(&self) -> RegularityParams {
        RegularityParams {
            beta: self.beta.0,
            gamma: self.gamma.0,
            delta: self.delta.0,
            alpha: self.alpha.0,
            vartheta: self.vartheta.0,
            rho_a: self.rho_a.0,
            rho_q: self.rho_q.0,
        }
    }
}

fn default_diffusivity() -> f64 {
    0.01
}

fn default_q_exponent() -> f64 {
    3.0
}

fn default_horizon() -> f64 {
    1.0
}

/// Sine-basis problem given field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    #[serde(default = "default_diffusivity")]
    pub diffusivity: f64,
    /// `η_j = j^(-q_exponent)`.
    #[serde(default = "default_q_exponent")]
    pub q_exponent: f64,
    pub drift: DriftChoice,
    /// `p` of `<B(y) ẽ_j, e_i> = <y, e_j> / (i^p + j^4)`; absent for `B = 0`.
    #[serde(default)]
    pub diffusion_p: Option<f64>,
    pub initial: InitialChoice,
    pub params: ParamsSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSelector {
    Example(u32),
    Custom(CustomProblem),
}

impl ProblemSelector {
    pub fn build(&self) -> Result<SineBasisProblem> {
        match self {
            ProblemSelector::Example(id) => Ok(make_example(*id)?),
            ProblemSelector::Custom(c) => Ok(SineBasisProblem::new(SineBasisSpec {
                a_law: EigenLaw::DirichletLaplacian { diffusivity: c.diffusivity },
                q_law: EigenLaw::PowerDecay { exponent: c.q_exponent },
                drift: match c.drift {
                    DriftChoice::Zero => DriftLaw::Zero,
                    DriftChoice::OneMinusState => DriftLaw::OneMinusState,
                    DriftChoice::DampedSine { s, r } => DriftLaw::DampedSine { s, r },
                },
                diffusion: match c.diffusion_p {
                    Some(p) => DiffusionLaw::CrossModeLinear { p },
                    None => DiffusionLaw::Zero,
                },
                initial: match c.initial {
                    InitialChoice::Zero => InitialLaw::Zero,
                    InitialChoice::PowerDecay { exponent } => InitialLaw::PowerDecay { exponent },
                },
                params: c.params.to_params(),
                horizon: c.horizon,
            })?),
        }
    }

    fn example_id(&self) -> Option<u32> {
        match self {
            ProblemSelector::Example(id) => Some(*id),
            ProblemSelector::Custom(_) => None,
        }
    }
}

/// One rung of the resolution ladder; absent `M`, `K`, `D` are planned
/// from `N` for each scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LadderRepr")]
pub struct LadderEntry {
    pub n: u64,
    pub m: Option<u64>,
    pub k: Option<u64>,
    pub d: Option<u64>,
}

impl LadderEntry {
    pub fn auto(n: u64) -> Self {
        Self { n, m: None, k: None, d: None }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LadderRepr {
    Auto(u64),
    Full {
        n: u64,
        #[serde(default)]
        m: Option<u64>,
        #[serde(default)]
        k: Option<u64>,
        #[serde(default)]
        d: Option<u64>,
    },
}

impl From<LadderRepr> for LadderEntry {
    fn from(r: LadderRepr) -> Self {
        match r {
            LadderRepr::Auto(n) => LadderEntry::auto(n),
            LadderRepr::Full { n, m, k, d } => LadderEntry { n, m, k, d },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePreset {
    /// LIE with `N = 64`, `K = ceil(64^(G/A))`, `M = ceil(32^(G/q_EES))` for
    /// Examples 1 and 2; falls back to `Scaled` otherwise.
    Standard,
    /// LIE with `N = 64`, `K = ceil(64^(G/A))`, `M = 2^14`.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub scheme: SchemeName,
    pub n: u64,
    pub k: u64,
    pub m: u64,
    /// Series truncation for a DFM/MIL reference; defaults to `D_1(M)`.
    #[serde(default)]
    pub d: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceChoice {
    Preset(ReferencePreset),
    Explicit(ReferenceSpec),
}

impl Default for ReferenceChoice {
    fn default() -> Self {
        ReferenceChoice::Preset(ReferencePreset::Standard)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorTime {
    /// `(E ||X_T - Y_M||²)^(1/2)`.
    #[default]
    Final,
    /// Largest root-mean-square error over grid points shared with the reference.
    AllGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: ProblemSelector,
    pub schemes: Vec<SchemeName>,
    pub ladder: Vec<LadderEntry>,
    pub paths: u64,
    pub seed: u64,
    #[serde(default)]
    pub reference: ReferenceChoice,
    #[serde(default)]
    pub error_at: ErrorTime,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Lifts the `paths * M_ref` guardrail.
    #[serde(default)]
    pub allow_large: bool,
}

/// A fully specified simulation: scheme and `(N, K, M, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSpec {
    pub scheme: SchemeName,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "D")]
    pub d: Option<u64>,
}

impl RunSpec {
    pub fn kind(&self) -> SchemeKind {
        self.scheme.0
    }

    pub fn scheme_config(&self, horizon: f64) -> spde_core::schemes::SchemeConfig {
        spde_core::schemes::SchemeConfig {
            kind: self.kind(),
            n: self.n as usize,
            k: self.k as usize,
            m: self.m,
            d: self.d,
            horizon,
        }
    }
}

/// A configuration with every run made explicit.
#[derive(Debug, Clone)]
pub struct ResolvedStudy {
    pub problem: SineBasisProblem,
    pub reference: RunSpec,
    pub runs: Vec<RunSpec>,
    pub paths: u64,
    pub seed: u64,
    pub error_at: ErrorTime,
    pub threads: Option<usize>,
}

fn plan_input(problem: &SineBasisProblem) -> Result<PlanInput> {
    Ok(PlanInput::from_params(problem.params(), NoiseDimension::Infinite)?)
}

fn g_over(problem: &SineBasisProblem, denom: Rational) -> Rational {
    let p = problem.params();
    p.gamma * p.rho_a / denom
}

/// Reference run for a preset.
pub fn reference_preset(problem: &SineBasisProblem, example: Option<u32>, preset: ReferencePreset) -> Result<RunSpec> {
    let p = problem.params();
    let k = ceil_scaled_power(1, 64, g_over(problem, p.alpha * p.rho_q))?;
    let m = match (preset, example) {
        (ReferencePreset::Standard, Some(1 | 2)) => ceil_scaled_power(1, 32, g_over(problem, p.q_euler()))?,
        _ => 1 << 14,
    };
    Ok(RunSpec { scheme: SchemeName(SchemeKind::Lie), n: 64, k: k.min(64), m, d: None })
}

/// Run for `entry` under `kind`, planning whatever the entry leaves open.
pub fn resolve_entry(problem: &SineBasisProblem, kind: SchemeKind, entry: &LadderEntry) -> Result<RunSpec> {
    if entry.n == 0 {
        return Err(StudyError::Config("ladder N must be positive".into()));
    }
    let planned = optimal_resolution(&plan_input(problem)?, kind, entry.n)?;
    let m = entry.m.unwrap_or(planned.m);
    let k = entry.k.unwrap_or(planned.k);
    let d = match (kind.needs_iterated(), entry.d) {
        (true, Some(d)) => Some(d),
        (true, None) => Some(choose_d1(m, problem.params().q_for(kind))?),
        (false, Some(_)) => return Err(StudyError::Config(format!("{kind} takes no truncation D"))),
        (false, None) => None,
    };
    let run = RunSpec { scheme: SchemeName(kind), n: entry.n, k, m, d };
    run.scheme_config(problem.horizon()).validate()?;
    Ok(run)
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self) -> Result<ResolvedStudy> {
        let problem = self.problem.build()?;
        if self.schemes.is_empty() || self.ladder.is_empty() {
            return Err(StudyError::Config("need at least one scheme and one ladder entry".into()));
        }
        if self.paths < 2 {
            return Err(StudyError::Config("need at least 2 paths".into()));
        }
        if self.threads == Some(0) {
            return Err(StudyError::Config("threads must be positive".into()));
        }
        let reference = match self.reference {
            ReferenceChoice::Preset(preset) => reference_preset(&problem, self.problem.example_id(), preset)?,
            ReferenceChoice::Explicit(spec) => {
                let d = match (spec.scheme.0.needs_iterated(), spec.d) {
                    (true, None) => Some(choose_d1(spec.m, problem.params().q_for(spec.scheme.0))?),
                    (_, d) => d,
                };
                RunSpec { scheme: spec.scheme, n: spec.n, k: spec.k, m: spec.m, d }
            }
        };
        reference.scheme_config(problem.horizon()).validate()?;
        let mut runs = Vec::new();
        for scheme in &self.schemes {
            for entry in &self.ladder {
                runs.push(resolve_entry(&problem, scheme.0, entry)?);
            }
        }
        for run in &runs {
            if run.n > reference.n || run.k > reference.k || run.m > reference.m {
                return Err(StudyError::Config(format!(
                    "{} N={} K={} M={} exceeds the reference N={} K={} M={}",
                    run.scheme, run.n, run.k, run.m, reference.n, reference.k, reference.m
                )));
            }
        }
        let work = self.paths.saturating_mul(reference.m);
        if work > PATH_STEP_BUDGET && !self.allow_large {
            return Err(StudyError::Config(format!(
                "paths * M_ref = {work} exceeds {PATH_STEP_BUDGET}; set allow_large to run anyway"
            )));
        }
        Ok(ResolvedStudy {
            problem,
            reference,
            runs,
            paths: self.paths,
            seed: self.seed,
            error_at: self.error_at,
            threads: self.threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_reference_presets() {
        let p1 = make_example(1).unwrap();
        let r = reference_preset(&p1, Some(1), ReferencePreset::Standard).unwrap();
        assert_eq!((r.n, r.k, r.m), (64, 3, 185_364));
        let p2 = make_example(2).unwrap();
        let r = reference_preset(&p2, Some(2), ReferencePreset::Standard).unwrap();
        assert_eq!((r.n, r.k), (64, 3));
        assert_eq!(r.m, ceil_scaled_power(1, 2, Rational::new(85, 6)).unwrap());
        let p3 = make_example(3).unwrap();
        assert_eq!(reference_preset(&p3, Some(3), ReferencePreset::Standard).unwrap().m, 1 << 14);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "problem": {"example": 1},
            "schemes": ["DFMA", "EES"],
            "ladder": [2, {"n": 4, "m": 32}],
            "paths": 10,
            "seed": 7,
            "reference": "scaled",
            "error_at": "all-grid"
        }"#;
        let config = StudyConfig::from_json(text).unwrap();
        assert_eq!(config.ladder[0], LadderEntry::auto(2));
        assert_eq!(config.ladder[1].m, Some(32));
        assert_eq!(config.error_at, ErrorTime::AllGrid);
        let resolved = config.resolve().unwrap();
        assert_eq!(resolved.runs.len(), 4);
        assert_eq!(resolved.runs[0].m, 4);
        assert_eq!(resolved.runs[1].d, Some(14));
        let echoed = serde_json::to_string(&config).unwrap();
        assert!(echoed.contains("\"DFMA\""));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_scheme = r#"{"problem": {"example": 1}, "schemes": ["RK4"], "ladder": [2], "paths": 10, "seed": 1}"#;
        assert!(StudyConfig::from_json(bad_scheme).is_err());
        let too_fine = r#"{"problem": {"example": 1}, "schemes": ["EES"], "ladder": [128], "paths": 10, "seed": 1,
            "reference": "scaled"}"#;
        assert!(StudyConfig::from_json(too_fine).unwrap().resolve().is_err());
        let large = r#"{"problem": {"example": 1}, "schemes": ["EES"], "ladder": [2], "paths": 1000, "seed": 1}"#;
        assert!(matches!(StudyConfig::from_json(large).unwrap().resolve(), Err(StudyError::Config(_))));
    }

    #[test]
    fn rationals_parse() {
        assert_eq!(parse_rational("7/8").unwrap(), Rational::new(7, 8));
        assert_eq!(parse_rational(" 3 ").unwrap(), Rational::from_integer(3));
        assert!(parse_rational("x").is_err());
    }
}
