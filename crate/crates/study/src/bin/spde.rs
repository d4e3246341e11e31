use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use spde_core::problem::{Problem, RegularityParams};
use spde_core::schemes::SchemeKind;
use spde_study::config::{
    parse_rational, ErrorTime, LadderEntry, ProblemSelector, ReferenceChoice, ReferencePreset, SchemeName, StudyConfig,
};
use spde_study::noise_test::{moment_test, refinement_test, MomentTestConfig, RefinementConfig};
use spde_study::study::run_study;
use spde_study::tables::{cost_table, eoc_report, plan_input, write_cost_csv};
use spde_study::StudyError;

#[derive(Parser)]
#[command(name = "spde", version, about = "Spectral schemes for semilinear SPDEs: studies, costs and plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo convergence study against a coupled reference.
    Study(StudyArgs),
    /// Case, EOC ranking and planned resolutions.
    Eoc(EocArgs),
    /// Closed-form cost table as CSV.
    Cost(CostArgs),
    /// Moment tests of the iterated-integral sampler (JSON).
    NoiseTest(NoiseTestArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Built-in example problem.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
    example: Option<u32>,
    /// JSON file holding a custom problem.
    #[arg(long, conflicts_with = "example")]
    problem: Option<PathBuf>,
}

impl ProblemArgs {
    fn selector(&self) -> Result<Option<ProblemSelector>> {
        match (self.example, &self.problem) {
            (Some(id), _) => Ok(Some(ProblemSelector::Example(id))),
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(Some(ProblemSelector::Custom(serde_json::from_str(&text)?)))
            }
            (None, None) => Ok(None),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorAt {
    Final,
    AllGrid,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration (JSON); other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated N ladder.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<u64>>,
    /// Comma-separated schemes (DFMA, MILA, EES, LIE).
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// LIE reference with N = 64, M = 2^14.
    #[arg(long)]
    scaled_reference: bool,
    #[arg(long, value_enum)]
    error_at: Option<ErrorAt>,
    #[arg(long)]
    threads: Option<usize>,
    /// Lift the paths x M_ref guardrail.
    #[arg(long)]
    allow_large: bool,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON mirror of the report.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn study_config(args: &StudyArgs) -> Result<StudyConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            StudyConfig::from_json(&text)?
        }
        None => {
            let problem = args.problem.selector()?.context("need --example, --problem or --config")?;
            StudyConfig {
                problem,
                schemes: [SchemeKind::Dfm, SchemeKind::Mil, SchemeKind::Ees].map(SchemeName).to_vec(),
                ladder: Vec::new(),
                paths: 500,
                seed: 0,
                reference: ReferenceChoice::default(),
                error_at: ErrorTime::Final,
                threads: None,
                allow_large: false,
            }
        }
    };
    if args.config.is_some() {
        if let Some(problem) = args.problem.selector()? {
            config.problem = problem;
        }
    }
    if let Some(ladder) = &args.ladder {
        config.ladder = ladder.iter().map(|&n| LadderEntry::auto(n)).collect();
    }
    if let Some(schemes) = &args.schemes {
        config.schemes = schemes.iter().map(|&k| SchemeName(k)).collect();
    }
    if let Some(p) = args.paths {
        config.paths = p;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.scaled_reference {
        config.reference = ReferenceChoice::Preset(ReferencePreset::Scaled);
    }
    if let Some(e) = args.error_at {
        config.error_at = match e {
            ErrorAt::Final => ErrorTime::Final,
            ErrorAt::AllGrid => ErrorTime::AllGrid,
        };
    }
    if args.threads.is_some() {
        config.threads = args.threads;
    }
    config.allow_large |= args.allow_large;
    if config.ladder.is_empty() {
        bail!("empty ladder: pass --ladder or set it in the config");
    }
    Ok(config)
}

fn study(args: StudyArgs) -> Result<()> {
    let report = run_study(&study_config(&args)?)?;
    match &args.out {
        Some(path) => report.write_csv(fs::File::create(path)?)?,
        None => report.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &args.json {
        fs::write(path, report.to_json()?)?;
    }
    Ok(())
}

#[derive(Args)]
struct EocArgs {
    #[arg(long, conflicts_with_all = ["gamma", "problem"])]
    example: Option<u32>,
    #[arg(long, conflicts_with = "gamma")]
    problem: Option<PathBuf>,
    #[arg(long, requires_all = ["beta", "alpha", "rho_a", "rho_q"])]
    gamma: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    rho_a: Option<String>,
    #[arg(long)]
    rho_q: Option<String>,
    /// Noise with exactly this many nonzero eigenvalues.
    #[arg(long)]
    finite_rank: Option<u64>,
    /// Anchor N values for the planned ladder.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    ladder: Vec<u64>,
}

fn rational(text: &Option<String>) -> Result<spde_core::Rational> {
    Ok(parse_rational(text.as_deref().expect("required by clap"))?)
}

fn eoc(args: EocArgs) -> Result<()> {
    let problem_args = ProblemArgs { example: args.example, problem: args.problem.clone() };
    let input = match problem_args.selector()? {
        Some(selector) => plan_input(selector.build()?.params(), args.finite_rank)?,
        None if args.gamma.is_some() => {
            let gamma = rational(&args.gamma)?;
            let params = RegularityParams {
                beta: rational(&args.beta)?,
                gamma,
                // only the planning quantities matter here
                delta: gamma,
                alpha: rational(&args.alpha)?,
                vartheta: gamma,
                rho_a: rational(&args.rho_a)?,
                rho_q: rational(&args.rho_q)?,
            };
            plan_input(&params, args.finite_rank)?
        }
        None => bail!("need --example, --problem or --gamma/--beta/--alpha/--rho-a/--rho-q"),
    };
    let report = eoc_report(&input, &args.ladder)?;
    writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_delimiter = ',', default_value = "DFMA,MILA,EES")]
    schemes: Vec<SchemeKind>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    ladder: Vec<u64>,
    /// Cost of one functional evaluation.
    #[arg(long, default_value_t = 1)]
    functional_cost: u64,
}

fn cost(args: CostArgs) -> Result<()> {
    let problem = args.problem.selector()?.context("need --example or --problem")?.build()?;
    let ladder: Vec<LadderEntry> = args.ladder.iter().map(|&n| LadderEntry::auto(n)).collect();
    let rows = cost_table(&problem, &args.schemes, &ladder, args.functional_cost)?;
    write_cost_csv(&rows, io::stdout().lock())?;
    Ok(())
}

#[derive(Args)]
struct NoiseTestArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    #[arg(long, default_value_t = 10)]
    d: u64,
    #[arg(long, default_value_t = 3.0)]
    rho_q: f64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the nested-truncation refinement test.
    #[arg(long)]
    refinement: bool,
    #[arg(long, default_value_t = 2000)]
    refinement_samples: u64,
}

fn noise_test(args: NoiseTestArgs) -> Result<()> {
    let moments = moment_test(&MomentTestConfig {
        k: args.k,
        h: args.h,
        d: args.d,
        rho_q: args.rho_q,
        samples: args.samples,
        seed: args.seed,
    })?;
    let refinement = if args.refinement {
        Some(refinement_test(&RefinementConfig {
            k: args.k,
            h: args.h,
            rho_q: args.rho_q,
            samples: args.refinement_samples,
            seed: args.seed,
            ..RefinementConfig::default()
        })?)
    } else {
        None
    };
    let report = serde_json::json!({ "moments": moments, "refinement": refinement });
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    if !moments.violations.is_empty() {
        return Err(StudyError::Invariant(moments.violations.join("; ")).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Study(a) => study(a),
        Command::Eoc(a) => eoc(a),
        Command::Cost(a) => cost(a),
        Command::NoiseTest(a) => noise_test(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // a closed reader (e.g. `| head`) is not a failure
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
