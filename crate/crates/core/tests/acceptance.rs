//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use currency_core::experiments::{run_one_detailed, RunOutput};
use currency_core::graph::gen_er;
use currency_core::seed::{derive_seed, stream_rng, Stream};
use currency_core::theory::{flip_probability_exact, flip_probability_mc};
use currency_core::{
    is_equilibrium, originator_statistics, social_utility, union_bound, BoundParams, CurrencyState,
    Dynamics, ExperimentConfig, InitialCondition, RunRecord, Schedule, StepOutcome, SweepPoint,
    Topology, TrialsConvention, Weighting,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;

const MASTER: u64 = 0x5eed_2024;
const REPS: u64 = 400;
// one-sided 0.01
const Z_01: f64 = 2.326;

struct Suite {
    lines: Vec<(u32, String)>,
    failed: Vec<String>,
    /// Converged runs that failed a full equilibrium rescan, and runs checked.
    unsound: usize,
    rescanned: usize,
}

impl Suite {
    fn report(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        eprintln!("[{id}] {verdict}");
        self.lines
            .push((id, format!("{verdict} {id:>2} {name}: {detail}")));
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    /// Runs every replication, rescanning each converged final state.
    fn batch(&mut self, config: &ExperimentConfig) -> Vec<RunRecord> {
        let outputs: Vec<RunOutput> = (0..config.replications)
            .into_par_iter()
            .map(|r| run_one_detailed(config, r).expect("valid config"))
            .collect();
        for o in outputs.iter().filter(|o| o.result.converged) {
            self.rescanned += 1;
            if !is_equilibrium(&o.graph, &o.result.final_state) {
                self.unsound += 1;
            }
        }
        outputs.into_iter().map(|o| o.record).collect()
    }

    fn point(&mut self, config: &ExperimentConfig, value: f64) -> SweepPoint {
        SweepPoint::from_records(value, &self.batch(config))
    }
}

fn combined_se(a: &SweepPoint, b: &SweepPoint) -> f64 {
    (a.frac_single_se().powi(2) + b.frac_single_se().powi(2)).sqrt()
}

/// `|gap| / se`, treating a zero standard error as exact.
fn z_gap(gap: f64, se: f64) -> f64 {
    match (gap == 0.0, se > 0.0) {
        (true, _) => 0.0,
        (false, true) => gap.abs() / se,
        (false, false) => f64::INFINITY,
    }
}

fn one_community(p: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n: 100,
        topology: Topology::OneCommunity { p },
        replications: REPS,
        master_seed: derive_seed(MASTER, &[seed, p.to_bits()]),
        ..Default::default()
    }
}

fn two_community(p_inter: f64, initial: InitialCondition, schedule: Schedule) -> ExperimentConfig {
    ExperimentConfig {
        n: 100,
        topology: Topology::TwoCommunity {
            p_intra: 0.3,
            p_inter,
        },
        initial,
        schedule,
        replications: REPS,
        // same graphs for every curve at a given p_inter
        master_seed: derive_seed(MASTER, &[2, p_inter.to_bits()]),
        ..Default::default()
    }
}

fn strict_ascent(s: &mut Suite) {
    let mut violations = 0;
    let mut switches = 0u64;
    for run in 0..500u64 {
        let seed = derive_seed(MASTER, &[1, run]);
        let mut rng = stream_rng(seed, Stream::Sampling);
        let n = rng.random_range(5..=100);
        let p = rng.random_range(0.01..=0.5);
        let schedule = if run % 2 == 0 {
            Schedule::RandomSequential
        } else {
            Schedule::FixedSequential
        };
        let g = gen_er(n, p, &mut stream_rng(seed, Stream::Graph)).unwrap();
        let mut last = social_utility(&g, &CurrencyState::distinct(n)).unwrap();
        Dynamics::seeded(&g, CurrencyState::distinct(n), schedule, seed)
            .unwrap()
            .run_observed(u64::MAX, |outcome, st| {
                if let StepOutcome::Sequential(Some(sw)) = outcome {
                    switches += 1;
                    let u = social_utility(&g, st).unwrap();
                    if sw.delta < 2 || sw.delta % 2 != 0 || u - last != sw.delta {
                        violations += 1;
                    }
                    last = u;
                }
            });
    }
    s.report(
        1,
        "strict ascent",
        violations == 0,
        format!("500 runs, {switches} switches, {violations} violations"),
    );
}

fn no_revisit(s: &mut Suite) {
    let mut violations = 0;
    for run in 0..200u64 {
        let seed = derive_seed(MASTER, &[3, run]);
        let mut rng = stream_rng(seed, Stream::Sampling);
        let n = rng.random_range(2..=12);
        let p = rng.random_range(0.1..=0.9);
        let schedule = if run % 2 == 0 {
            Schedule::RandomSequential
        } else {
            Schedule::FixedSequential
        };
        let g = gen_er(n, p, &mut stream_rng(seed, Stream::Graph)).unwrap();
        let mut seen = HashSet::from([CurrencyState::distinct(n).currencies().to_vec()]);
        Dynamics::seeded(&g, CurrencyState::distinct(n), schedule, seed)
            .unwrap()
            .run_observed(u64::MAX, |outcome, st| {
                if outcome.switches() > 0 && !seen.insert(st.currencies().to_vec()) {
                    violations += 1;
                }
            });
    }
    s.report(
        2,
        "no revisit",
        violations == 0,
        format!("200 runs, {violations} repeated states"),
    );
}

fn one_community_transition(s: &mut Suite) {
    let empty_records = s.batch(&one_community(0.0, 4));
    let dense_records = s.batch(&one_community(0.15, 4));
    let sparse_records = s.batch(&one_community(0.02, 4));
    let p0 = SweepPoint::from_records(0.0, &empty_records);
    let dense = SweepPoint::from_records(0.15, &dense_records);

    let sparse: Vec<&RunRecord> = sparse_records.iter().filter(|r| r.converged).collect();
    let diffs: Vec<f64> = sparse
        .iter()
        .map(|r| r.currency_count as f64 - r.component_count as f64)
        .collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let z = mean / (var / k).sqrt();

    let ok = p0.mean_currencies == 100.0 && dense.frac_single >= 0.9 && z > Z_01;
    s.report(
        4,
        "one-community transition",
        ok,
        format!(
            "p=0 mean currencies {}; p=0.15 single fraction {:.3}; p=0.02 currencies-components {:.2} (z={:.1})",
            p0.mean_currencies, dense.frac_single, mean, z
        ),
    );

    let done: Vec<&RunRecord> = empty_records
        .iter()
        .chain(&dense_records)
        .chain(&sparse_records)
        .filter(|r| r.converged)
        .collect();
    let violations = done
        .iter()
        .filter(|r| r.currency_count < r.component_count)
        .count();
    s.report(
        5,
        "currencies >= components",
        violations == 0,
        format!(
            "{} of {} runs converged, {violations} violations",
            done.len(),
            3 * REPS
        ),
    );
}

const GRID: [f64; 7] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

fn two_community_curves(s: &mut Suite) {
    let curve = |s: &mut Suite, initial, schedule| -> Vec<SweepPoint> {
        GRID.iter()
            .map(|&q| s.point(&two_community(q, initial, schedule), q))
            .collect()
    };
    let distinct = curve(s, InitialCondition::Distinct, Schedule::RandomSequential);
    let unified = curve(
        s,
        InitialCondition::UnifiedCommunities,
        Schedule::RandomSequential,
    );
    let sync = curve(s, InitialCondition::Distinct, Schedule::Synchronous);
    let fmt = |c: &[SweepPoint]| {
        c.iter()
            .map(|p| format!("{:.3}", p.frac_single))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let monotone = distinct
        .windows(2)
        .all(|w| w[1].frac_single >= w[0].frac_single - 3.0 * combined_se(&w[0], &w[1]));
    let ends = distinct[0].frac_single <= 0.05 && distinct[GRID.len() - 1].frac_single >= 0.95;
    s.report(
        6,
        "two-community transition",
        ends && monotone,
        format!("distinct [{}]", fmt(&distinct)),
    );

    let suppressed = (1..GRID.len() - 1).all(|i| {
        unified[i].frac_single
            <= distinct[i].frac_single + 3.0 * combined_se(&unified[i], &distinct[i])
    });
    let isolated = unified[0].frac_single == 0.0;
    s.report(
        7,
        "pre-unified suppression",
        suppressed && isolated,
        format!("unified [{}]", fmt(&unified)),
    );

    let (gap, at) = (0..GRID.len())
        .map(|i| {
            (
                z_gap(
                    sync[i].frac_single - distinct[i].frac_single,
                    combined_se(&sync[i], &distinct[i]),
                ),
                GRID[i],
            )
        })
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let worst = sync
        .iter()
        .map(|p| p.non_converged() as f64 / p.replications as f64)
        .fold(0.0, f64::max);
    s.report(
        8,
        "schedule robustness",
        gap <= 3.0 && worst <= 0.05,
        format!(
            "synchronous [{}], worst gap {gap:.2} SE at p_inter={at}, worst non-convergence {:.1}%",
            fmt(&sync),
            100.0 * worst
        ),
    );
}

const BOUND_N: [u64; 7] = [10, 20, 50, 100, 200, 500, 1000];
const BOUND_P: [(f64, f64); 3] = [(0.3, 0.1), (0.3, 0.2), (0.5, 0.1)];
const SLACK: f64 = 1e-12;

fn bound_chain(s: &mut Suite) {
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for &(pa, pr) in &BOUND_P {
        for &n in &BOUND_N {
            let r = union_bound(&BoundParams::new(n, pa, pr).unwrap()).unwrap();
            if r.flip_prob_exact > r.tail_sum() + SLACK {
                first.push(format!("({pa},{pr},{n})"));
            }
            if r.tail_sum() > r.geometric_bound + SLACK {
                second.push(format!("({pa},{pr},{n})"));
            }
        }
    }
    let total = BOUND_N.len() * BOUND_P.len();
    s.report(
        9,
        "bound chain",
        first.is_empty() && second.is_empty(),
        format!(
            "flip <= tails fails at {}/{total}; tails <= rho_a^N+rho_r^N fails at {}/{total} {}",
            first.len(),
            second.len(),
            second.join(" ")
        ),
    );
}

fn exact_pmf(n: u64, p: &BigRational, k: u64) -> BigRational {
    let choose = (0..k).fold(BigInt::one(), |acc, i| {
        acc * BigInt::from(n - i) / BigInt::from(i + 1)
    });
    let q = BigRational::one() - p;
    let pow = |x: &BigRational, e: u64| (0..e).fold(BigRational::one(), |acc, _| acc * x);
    BigRational::from_integer(choose) * pow(p, k) * pow(&q, n - k)
}

fn exact_vs_oracles(s: &mut Suite) {
    let rational = |num: i64| BigRational::new(BigInt::from(num), BigInt::from(10));
    let mut worst_enum = 0.0f64;
    for n in 1..=12u64 {
        for (a, b) in [(3, 1), (5, 2), (9, 1), (4, 4), (2, 6)] {
            for conv in [TrialsConvention::FullN, TrialsConvention::ExactHalves] {
                let (ta, tr) = conv.trials(n);
                let mut want = BigRational::zero();
                for ka in 0..=ta {
                    for kr in ka..=tr {
                        want += exact_pmf(ta, &rational(a), ka) * exact_pmf(tr, &rational(b), kr);
                    }
                }
                let params = BoundParams::new(n, a as f64 / 10.0, b as f64 / 10.0)
                    .unwrap()
                    .with_convention(conv);
                worst_enum = worst_enum
                    .max((flip_probability_exact(&params) - want.to_f64().unwrap()).abs());
            }
        }
    }

    let probs = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut worst_z = 0.0f64;
    for (i, &pa) in probs.iter().enumerate() {
        for (j, &pr) in probs.iter().enumerate() {
            let params = BoundParams::new(20, pa, pr).unwrap();
            let exact = flip_probability_exact(&params);
            let mc = flip_probability_mc(
                &params,
                100_000,
                derive_seed(MASTER, &[10, i as u64, j as u64]),
            )
            .unwrap();
            // standard error under the exact value
            let se = (exact * (1.0 - exact) / mc.samples as f64).sqrt();
            worst_z = worst_z.max(z_gap(mc.estimate - exact, se));
        }
    }
    s.report(
        10,
        "exact vs oracles",
        worst_enum <= 1e-12 && worst_z <= 4.0,
        format!("enumeration max error {worst_enum:.1e}; Monte Carlo worst |z| {worst_z:.2} over 5x5 grid"),
    );
}

fn union_bound_decay(s: &mut Suite) {
    let bounds: Vec<(u64, f64)> = (1..=100u64)
        .map(|i| 10 * i)
        .map(|n| {
            (
                n,
                union_bound(&BoundParams::new(n, 0.3, 0.1).unwrap())
                    .unwrap()
                    .union_bound,
            )
        })
        .collect();
    let at_1000 = bounds.last().unwrap().1;
    let decreasing = bounds
        .iter()
        .filter(|(n, _)| *n >= 100)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1].1 < w[0].1);
    s.report(
        11,
        "union-bound decay",
        at_1000 < 1e-20 && decreasing,
        format!(
            "N(rho_a^N+rho_r^N) at N=1000 is {at_1000:.3e}; decreasing for N>=100: {decreasing}"
        ),
    );
}

const WEIGHT_GRID: [f64; 6] = [0.02, 0.04, 0.06, 0.08, 0.1, 0.15];

fn heterogeneity(s: &mut Suite) {
    let weighted = |w: Weighting, p: f64| ExperimentConfig {
        weighting: w,
        ..one_community(p, 12)
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, w) in [
        ("degree", Weighting::Degree),
        ("poisson", Weighting::Poisson { mean: None }),
    ] {
        let records = s.batch(&weighted(w, 0.15));
        let stats = originator_statistics(&records).expect("single-currency outcomes");
        ok &= stats.runs >= 200 && stats.z_score() > Z_01;
        detail.push(format!(
            "{name}: winner {:.2} vs mean {:.2} over {} runs (z={:.1})",
            stats.mean_winner_weight,
            stats.mean_population_weight,
            stats.runs,
            stats.z_score()
        ));
    }

    for (name, w) in [
        ("degree", Weighting::Degree),
        ("poisson", Weighting::Poisson { mean: None }),
    ] {
        let (mut worst, mut at) = (0.0, 0.0);
        for &p in &WEIGHT_GRID {
            let unit = s.point(&weighted(Weighting::Unit, p), p);
            let pt = s.point(&weighted(w, p), p);
            let z = z_gap(pt.frac_single - unit.frac_single, combined_se(&unit, &pt));
            if z > worst {
                (worst, at) = (z, p);
            }
        }
        ok &= worst <= 3.0;
        detail.push(format!("{name} curve worst gap {worst:.2} SE at p={at}"));
    }
    s.report(12, "heterogeneity", ok, detail.join("; "));
}

/// Documented seed for the single-trajectory check; the smallest master seed
/// whose run ends with several currencies and negative utility.
const TRAJECTORY_SEED: u64 = 0;

fn single_trajectory(s: &mut Suite) {
    let config = ExperimentConfig {
        replications: 1,
        master_seed: TRAJECTORY_SEED,
        max_steps: Some(100_000),
        ..one_community(0.05, 0)
    };
    let out = run_one_detailed(&config, 0).unwrap();
    let r = &out.result;
    let u = *r.utility_trace.last().unwrap();
    let increasing = r.utility_trace.windows(2).all(|w| w[0] < w[1]);
    let currencies = r.final_state.currency_count();
    s.report(
        13,
        "single trajectory",
        r.converged && r.steps_executed <= 100_000 && currencies > 1 && u < 0 && increasing,
        format!(
            "seed {TRAJECTORY_SEED}: {} steps, {} switches, {currencies} currencies, utility {u}, trace increasing: {increasing}",
            r.steps_executed, r.switches
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut s = Suite {
        lines: Vec::new(),
        failed: Vec::new(),
        unsound: 0,
        rescanned: 0,
    };
    strict_ascent(&mut s);
    no_revisit(&mut s);
    one_community_transition(&mut s);
    two_community_curves(&mut s);
    bound_chain(&mut s);
    exact_vs_oracles(&mut s);
    union_bound_decay(&mut s);
    heterogeneity(&mut s);
    single_trajectory(&mut s);
    let (unsound, rescanned) = (s.unsound, s.rescanned);
    s.report(
        3,
        "equilibrium soundness",
        unsound == 0,
        format!("{rescanned} converged runs rescanned, {unsound} unstable"),
    );

    s.lines.sort();
    for (_, line) in &s.lines {
        println!("{line}");
    }
    println!(
        "acceptance finished in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    if !s.failed.is_empty() {
        println!("failed: {}", s.failed.join(", "));
        std::process::exit(1);
    }
}
