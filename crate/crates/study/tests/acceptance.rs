//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criterion 8 runs for hours and is opt-in: set `SPDE_FULL_TIER=1`.

use std::io::Write;

use num_rational::BigRational;
use rand_core::RngCore;
use spde_core::cost::{cost_formula, CostLedger};
use spde_core::eoc::{classify, eoc_exponent, optimal_resolution, NoiseDimension, PlanCase, PlanInput};
use spde_core::noise::{alg1_truncated_second_moment, choose_d1, purpose, substream, FreshNoise};
use spde_core::problem::{make_example, Problem};
use spde_core::schemes::{integrate_with, SchemeConfig, SchemeKind};
use spde_core::Rational;
use spde_study::config::{
    resolve_entry, ErrorTime, LadderEntry, ProblemSelector, ReferenceChoice, ReferencePreset, ReferenceSpec, SchemeName,
    StudyConfig,
};
use spde_study::noise_test::{moment_test, refinement_test, MomentTestConfig, RefinementConfig};
use spde_study::study::{measure_order, moment_profile, run_study, OrderAxis};

fn report(id: u32, pass: bool, summary: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:>2}: {verdict}  {summary}\n");
    // bypass libtest capture so every line reaches the log
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn plan(id: u32) -> PlanInput {
    PlanInput::from_params(make_example(id).unwrap().params(), NoiseDimension::Infinite).unwrap()
}

fn big(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

#[test]
fn criterion_01_cost_reproduction() {
    let tables: [(u32, [(SchemeKind, [u64; 5]); 3]); 2] = [
        (
            1,
            [
                (SchemeKind::Dfm, [94, 864, 8481, 127744, 1344631]),
                (SchemeKind::Mil, [110, 1248, 15649, 312064, 4392055]),
                (SchemeKind::Ees, [96, 1792, 37674, 1097728, 24282684]),
            ],
        ),
        (
            2,
            [
                (SchemeKind::Dfm, [77, 556, 4137, 31314, 342791]),
                (SchemeKind::Mil, [93, 940, 11305, 154194, 3390215]),
                (SchemeKind::Ees, [64, 714, 9438, 129050, 2409221]),
            ],
        ),
    ];
    let mut mismatches = Vec::new();
    for (id, table) in tables {
        let problem = make_example(id).unwrap();
        for (kind, costs) in table {
            for (row, expected) in costs.into_iter().enumerate() {
                let n = 2u64 << row;
                let r = optimal_resolution(&plan(id), kind, n).unwrap();
                let got = cost_formula(kind, n, r.k, r.m, problem.params().q_for(kind)).unwrap();
                if got != expected {
                    mismatches.push(format!("ex{id} {kind} N={n}: {got} != {expected}"));
                }
            }
        }
    }
    let pass = mismatches.is_empty();
    report(1, pass, &format!("30 benchmark cost integers, exact; mismatches: {mismatches:?}"));
    assert!(pass);
}

#[test]
fn criterion_02_eoc_reproduction() {
    let expected = [
        (1, PlanCase::SeriesLimited, vec![(SchemeKind::Dfm, big(27, 58)), (SchemeKind::Mil, big(189, 460)), (SchemeKind::Ees, big(189, 514))]),
        (2, PlanCase::SpatiallyLimited, vec![(SchemeKind::Dfm, big(1309, 2976)), (SchemeKind::Mil, big(1309, 3900)), (SchemeKind::Ees, big(1309, 3746))]),
        (3, PlanCase::LowOrder, vec![(SchemeKind::Dfm, big(14, 65)), (SchemeKind::Ees, big(14, 65)), (SchemeKind::Mil, big(7, 36))]),
    ];
    let mut mismatches = Vec::new();
    for (id, case, rows) in expected {
        let input = plan(id);
        if classify(&input) != case {
            mismatches.push(format!("ex{id} case {}", classify(&input)));
        }
        for (kind, value) in rows {
            let got = eoc_exponent(&input, kind);
            if got != value {
                mismatches.push(format!("ex{id} {kind}: {got} != {value}"));
            }
        }
    }
    let pass = mismatches.is_empty();
    report(2, pass, &format!("8 exact EOC fractions and 3 cases; mismatches: {mismatches:?}"));
    assert!(pass);
}

/// Uniform rational in `(lo, lo + span]` with denominator up to 64.
fn draw(rng: &mut impl RngCore, lo: Rational, span: i64) -> Rational {
    let den = (rng.next_u64() % 64 + 1) as i64;
    let num = (rng.next_u64() % (span as u64 * den as u64)) as i64 + 1;
    lo + Rational::new(num, den)
}

#[test]
fn criterion_03_planner_bounds() {
    let mut rng = substream(3, 0, 0, 0);
    let half = big(1, 2);
    let zero = Rational::from_integer(0);
    let (mut tuples, mut violations) = (0u32, Vec::new());
    while tuples < 20_000 {
        let delta = draw(&mut rng, zero, 1) / 2;
        let gamma = delta + (draw(&mut rng, zero, 1) - Rational::new(1, 64)).max(zero) / 2;
        let beta = gamma * (draw(&mut rng, zero, 1) - Rational::new(1, 64)).max(zero);
        if beta >= gamma {
            continue;
        }
        let alpha = draw(&mut rng, zero, 5);
        let rho_a = draw(&mut rng, zero, 4);
        let rho_q = draw(&mut rng, Rational::from_integer(1), 4);
        let noise = match rng.next_u64() % 4 {
            0 => NoiseDimension::Finite { rank: rng.next_u64() % 8 + 1 },
            _ => NoiseDimension::Infinite,
        };
        let input = PlanInput::new(gamma, beta, alpha, rho_a, rho_q, noise).unwrap();
        tuples += 1;
        let dfm = eoc_exponent(&input, SchemeKind::Dfm);
        let mil = eoc_exponent(&input, SchemeKind::Mil);
        let ees = eoc_exponent(&input, SchemeKind::Ees);
        if dfm < mil || dfm < ees || dfm > half || mil > half || ees > half {
            violations.push(format!("{input:?}: {dfm} {mil} {ees}"));
        }
    }
    let pass = violations.is_empty();
    report(3, pass, &format!("{tuples} admissible tuples; eoc(DFMA) >= others and all <= 1/2; violations: {}", violations.len()));
    assert!(pass, "{:?}", &violations[..violations.len().min(5)]);
}

#[test]
fn criterion_04_linear_diffusion_degeneracy() {
    let (n, k, m) = (8usize, 8usize, 64u64);
    let mut worst = 0.0_f64;
    for id in [1, 2] {
        let problem = make_example(id).unwrap();
        let q = problem.params().q_milstein();
        let d = choose_d1(m, q).unwrap();
        let eta = problem.q_law().values(k);
        for path in 0..100 {
            let mut traj = Vec::new();
            for kind in [SchemeKind::Dfm, SchemeKind::Mil] {
                let config = SchemeConfig { kind, n, k, m, d: Some(d), horizon: problem.horizon() };
                let rng = substream(4, path, purpose::SERIES, id as u64);
                let mut noise = FreshNoise::new(rng, config.step_len(), d, eta.clone()).unwrap();
                let mut states = Vec::new();
                integrate_with(&config, &problem, &mut noise, &mut CostLedger::new(), |_, y| {
                    states.push(y.to_vec());
                    Ok(())
                })
                .unwrap();
                traj.push(states);
            }
            for (a, b) in traj[0].iter().zip(&traj[1]) {
                let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let size: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                if size > 0.0 {
                    worst = worst.max(diff / size);
                } else {
                    worst = worst.max(diff);
                }
            }
        }
    }
    let pass = worst <= 1e-10;
    report(4, pass, &format!("DFM vs MIL, examples 1-2, N=K=8, M=64, 100 paths: max relative gap {worst:.2e} (tol 1e-10)"));
    assert!(pass);
}

#[test]
fn criterion_05_iterated_integral_statistics() {
    let config = MomentTestConfig { k: 2, h: 0.1, d: 10, rho_q: 3.0, samples: 1_000_000, seed: 5 };
    let moments = moment_test(&config).unwrap();
    let pair = &moments.pairs[0];
    let mean_ok = pair.mean_z.abs() < 4.0;
    let second_ok = pair.relative_deviation_exact.abs() < 0.01;
    let identities_ok = moments.max_identity_defect <= 1e-12;
    let draws_ok = moments.draws_per_sample == moments.expected_draws_per_sample as f64;
    let pass = mean_ok && second_ok && identities_ok && draws_ok;
    let truncated_gap = alg1_truncated_second_moment(0, 1, config.h, &[1.0, 0.125], config.d) / pair.exact_second_moment - 1.0;
    report(
        5,
        pass,
        &format!(
            "1e6 samples, D=10: mean z {:.2} (<4), second moment {:+.2}% of exact (tol 1%; the D-term series itself sits at {:+.2}%), identity defect {:.1e} (tol 1e-12), draws {} (expect {})",
            pair.mean_z,
            100.0 * pair.relative_deviation_exact,
            100.0 * truncated_gap,
            moments.max_identity_defect,
            moments.draws_per_sample,
            moments.expected_draws_per_sample,
        ),
    );
    assert!(mean_ok && identities_ok && draws_ok);
    if !second_ok {
        // Unattainable as stated: the D = 10 truncation has second moment
        // η_1 η_2 h² (1/4 + 3/(2π²) Σ_{r<=10} r^-2), 2.89% below the exact
        // value. The sampler must still match that law.
        assert!(pair.truncated_z.abs() < 4.0, "second moment off the truncated law too: z = {}", pair.truncated_z);
    }
}

#[test]
fn criterion_06_truncation_rate() {
    let config = RefinementConfig { seed: 6, ..RefinementConfig::default() };
    let refinement = refinement_test(&config).unwrap();
    let slope = refinement.fit.slope;
    let pass = (-0.6..=-0.4).contains(&slope);
    report(
        6,
        pass,
        &format!(
            "rms gap vs D in {:?} against D_max={}: slope {slope:.3} (band [-0.6, -0.4]), gaps [{}]",
            config.truncations, config.d_max, sci(&refinement.rms_gaps)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_temporal_order() {
    let ladder = (4..=9).map(|j| LadderEntry { n: 16, m: Some(1 << j), k: Some(16), d: None }).collect();
    let config = StudyConfig {
        problem: ProblemSelector::Example(1),
        schemes: vec![SchemeName(SchemeKind::Dfm), SchemeName(SchemeKind::Ees)],
        ladder,
        paths: 200,
        seed: 7,
        reference: ReferenceChoice::Explicit(ReferenceSpec {
            scheme: SchemeName(SchemeKind::Dfm),
            n: 16,
            k: 16,
            m: 1 << 13,
            d: Some(8),
        }),
        error_at: ErrorTime::Final,
        threads: None,
        allow_large: false,
    };
    let study = run_study(&config).unwrap();
    let dfm = measure_order(&study, SchemeKind::Dfm, OrderAxis::M).unwrap();
    let ees = measure_order(&study, SchemeKind::Ees, OrderAxis::M).unwrap();
    let last = |kind| study.rows_for(kind).last().unwrap().error;
    let (dfm_last, ees_last) = (last(SchemeKind::Dfm), last(SchemeKind::Ees));
    let pass = (-1.05..=-0.70).contains(&dfm.slope) && (-0.65..=-0.35).contains(&ees.slope) && dfm_last < ees_last;
    report(
        7,
        pass,
        &format!(
            "example 1, N=K=16, DFM reference M=2^13, 200 paths: DFM slope {:.3} (band [-1.05, -0.70]), EES slope {:.3} (band [-0.65, -0.35]), errors at M=2^9: DFM {dfm_last:.3e} < EES {ees_last:.3e}",
            dfm.slope, ees.slope
        ),
    );
    assert!(pass);
}

/// Benchmark (error, std) at N = 2, 4, 8, 16.
const BANDS: [(u32, SchemeKind, [(f64, f64); 4]); 6] = [
    (1, SchemeKind::Dfm, [(3.77e-2, 2.38e-3), (2.95e-2, 1.25e-3), (1.81e-2, 5.33e-4), (6.84e-3, 8.63e-5)]),
    (1, SchemeKind::Mil, [(3.78e-2, 2.30e-3), (2.95e-2, 1.25e-3), (1.81e-2, 5.15e-4), (6.84e-3, 8.31e-5)]),
    (1, SchemeKind::Ees, [(2.65e-2, 2.46e-3), (3.06e-2, 1.41e-3), (1.83e-2, 5.11e-4), (6.81e-3, 1.15e-4)]),
    (2, SchemeKind::Dfm, [(4.42e-2, 4.10e-3), (3.56e-2, 2.08e-3), (2.13e-2, 8.73e-4), (8.66e-3, 5.30e-4)]),
    (2, SchemeKind::Mil, [(4.43e-2, 4.16e-3), (3.56e-2, 2.08e-3), (2.13e-2, 8.61e-4), (8.66e-3, 5.33e-4)]),
    (2, SchemeKind::Ees, [(3.48e-2, 4.07e-3), (3.70e-2, 1.43e-3), (2.22e-2, 9.95e-4), (9.07e-3, 5.73e-4)]),
];

#[test]
fn criterion_08_benchmark_error_bands() {
    if std::env::var_os("SPDE_FULL_TIER").is_none() {
        let line = "criterion  8: SKIP  full tier (hours); set SPDE_FULL_TIER=1 to run\n";
        std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
        return;
    }
    let mut outside = Vec::new();
    for example in [1, 2] {
        let config = StudyConfig {
            problem: ProblemSelector::Example(example),
            schemes: [SchemeKind::Dfm, SchemeKind::Mil, SchemeKind::Ees].map(SchemeName).to_vec(),
            ladder: [2, 4, 8, 16].map(LadderEntry::auto).to_vec(),
            paths: 500,
            seed: 8,
            reference: ReferenceChoice::Preset(ReferencePreset::Standard),
            error_at: ErrorTime::Final,
            threads: None,
            allow_large: true,
        };
        let study = run_study(&config).unwrap();
        for (id, kind, band) in BANDS.iter().filter(|b| b.0 == example) {
            for (row, (expected, expected_std)) in study.rows_for(*kind).zip(band) {
                let tol = 3.0 * (expected_std + row.std);
                if (row.error - expected).abs() > tol {
                    outside.push(format!("ex{id} {kind} N={}: {:.3e} vs {expected:.2e} +- {tol:.1e}", row.n, row.error));
                }
            }
        }
    }
    let pass = outside.is_empty();
    report(8, pass, &format!("examples 1-2, N in {{2,4,8,16}}, 500 paths, 3 combined std; outside: {outside:?}"));
    assert!(pass);
}

#[test]
fn criterion_09_moment_boundedness() {
    let problem = make_example(1).unwrap();
    let delta = 3.0 / 8.0;
    let mut summary = Vec::new();
    let mut pass = true;
    for kind in [SchemeKind::Dfm, SchemeKind::Ees] {
        let maxima: Vec<f64> = [16u64, 64, 256, 1024]
            .iter()
            .map(|&m| {
                let run = resolve_entry(&problem, kind, &LadderEntry { n: 8, m: Some(m), k: Some(8), d: None }).unwrap();
                moment_profile(&problem, run, delta, 200, 9, None).unwrap().max
            })
            .collect();
        let hi = maxima.iter().copied().fold(f64::MIN, f64::max);
        let lo = maxima.iter().copied().fold(f64::MAX, f64::min);
        pass &= hi < 2.0 * lo;
        summary.push(format!("{kind} max_m E||Y_m||^2 = [{}] (ratio {:.3})", sci(&maxima), hi / lo));
    }
    report(9, pass, &format!("example 1, N=K=8, M in 2^4..2^10, 200 paths: {}", summary.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_10_determinism_across_threads() {
    let config = |threads| StudyConfig {
        problem: ProblemSelector::Example(1),
        schemes: [SchemeKind::Dfm, SchemeKind::Mil, SchemeKind::Ees].map(SchemeName).to_vec(),
        ladder: vec![LadderEntry::auto(2), LadderEntry::auto(4)],
        paths: 40,
        seed: 10,
        reference: ReferenceChoice::Explicit(ReferenceSpec {
            scheme: SchemeName(SchemeKind::Lie),
            n: 16,
            k: 4,
            m: 1 << 10,
            d: None,
        }),
        error_at: ErrorTime::Final,
        threads: Some(threads),
        allow_large: false,
    };
    let one = run_study(&config(1)).unwrap();
    let eight = run_study(&config(8)).unwrap();
    let again = run_study(&config(1)).unwrap();
    let csv_same = one.to_csv().unwrap() == eight.to_csv().unwrap() && one.to_csv().unwrap() == again.to_csv().unwrap();
    // the JSON echoes the thread count, so compare it with that field aligned
    let mut eight_as_one = eight.clone();
    eight_as_one.config.threads = Some(1);
    let json_same = one.to_json().unwrap() == eight_as_one.to_json().unwrap();
    let pass = csv_same && json_same;
    report(10, pass, &format!("seed 10 at 1 and 8 threads: CSV identical {csv_same}, JSON identical {json_same}"));
    assert!(pass);
}
