//! Seeded, replicated experiment campaigns.
//!
//! Replication `r` of a batch with master seed `s` runs entirely on streams
//! derived from `derive_seed(s, [r])`; a sweep point with value `v` first
//! replaces the master seed by `derive_seed(s, [v.to_bits()])`. Adding or
//! removing sweep values therefore never changes the replications of the
//! other values, and curves swept with the same master seed share graphs.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::dynamics::{default_max_steps, CurrencyState, Dynamics, Schedule};
use crate::error::{check_probability, Error, Result};
use crate::graph::{connected_components, gen_er, gen_two_community, Graph};
use crate::seed::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    OneCommunity { p: f64 },
    TwoCommunity { p_intra: f64, p_inter: f64 },
}

impl Topology {
    pub fn generate(&self, n: usize, seed: u64) -> Result<Graph> {
        let mut rng = stream_rng(seed, Stream::Graph);
        match *self {
            Topology::OneCommunity { p } => gen_er(n, p, &mut rng),
            Topology::TwoCommunity { p_intra, p_inter } => {
                gen_two_community(n, p_intra, p_inter, &mut rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialCondition {
    /// Every agent holds its own currency.
    #[default]
    Distinct,
    /// Each community already shares one currency.
    UnifiedCommunities,
}

impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinct" => Ok(Self::Distinct),
            "unified" | "unified_communities" => Ok(Self::UnifiedCommunities),
            other => Err(Error::Config(format!(
                "unknown initial condition `{other}`"
            ))),
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Distinct => "distinct",
            Self::UnifiedCommunities => "unified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Weighting {
    #[default]
    Unit,
    /// Weight equals the agent's degree in the realized graph.
    Degree,
    /// Independent Poisson draws, unrelated to the graph. Without an explicit
    /// mean the ensemble's expected degree is used.
    Poisson { mean: Option<f64> },
}

impl Weighting {
    fn weights(&self, g: &Graph, seed: u64, expected_degree: f64) -> Result<Vec<u64>> {
        Ok(match *self {
            Weighting::Unit => vec![1; g.n()],
            Weighting::Degree => (0..g.n()).map(|i| g.degree(i) as u64).collect(),
            Weighting::Poisson { mean } => {
                let mean = mean.unwrap_or(expected_degree);
                let dist =
                    Poisson::new(mean).map_err(|e| Error::Config(format!("poisson mean: {e}")))?;
                let mut rng = stream_rng(seed, Stream::Weights);
                (0..g.n()).map(|_| dist.sample(&mut rng) as u64).collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub topology: Topology,
    pub initial: InitialCondition,
    pub schedule: Schedule,
    pub weighting: Weighting,
    pub replications: u64,
    pub master_seed: u64,
    /// Elementary-update budget per run; `None` means `100 n^2`.
    pub max_steps: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 100,
            topology: Topology::OneCommunity { p: 0.05 },
            initial: InitialCondition::Distinct,
            schedule: Schedule::RandomSequential,
            weighting: Weighting::Unit,
            replications: 1000,
            master_seed: 0,
            max_steps: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let min_n = match self.topology {
            Topology::OneCommunity { p } => {
                check_probability("p", p)?;
                1
            }
            Topology::TwoCommunity { p_intra, p_inter } => {
                check_probability("p_intra", p_intra)?;
                check_probability("p_inter", p_inter)?;
                2
            }
        };
        if self.n < min_n {
            return Err(Error::TooFewAgents {
                n: self.n,
                min: min_n,
            });
        }
        if self.initial == InitialCondition::UnifiedCommunities
            && !matches!(self.topology, Topology::TwoCommunity { .. })
        {
            return Err(Error::Config(
                "a unified start needs a two-community topology".into(),
            ));
        }
        if let Weighting::Poisson { mean } = self.weighting {
            let mean = mean.unwrap_or_else(|| self.expected_degree());
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(Error::Config(format!(
                    "poisson mean must be positive, got {mean}"
                )));
            }
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps.unwrap_or_else(|| default_max_steps(self.n))
    }

    /// Applies one `key=value` setting.
    ///
    /// Keys: `n`, `topology` (`one`|`two`), `p`, `p_intra`, `p_inter`,
    /// `initial`, `schedule`, `weighting` (`unit`|`degree`|`poisson`),
    /// `poisson_mean`, `replications`, `seed`, `max_steps`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value
                .parse()
                .map_err(|e| Error::Config(format!("{key}: {e}")))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "topology" => {
                self.topology = match value {
                    "one" => Topology::OneCommunity { p: self.density() },
                    "two" => Topology::TwoCommunity {
                        p_intra: self.density(),
                        p_inter: 0.0,
                    },
                    other => return Err(Error::Config(format!("unknown topology `{other}`"))),
                }
            }
            "p" => {
                self.topology = Topology::OneCommunity {
                    p: num(key, value)?,
                }
            }
            "p_intra" | "p-intra" => {
                let p_intra = num(key, value)?;
                self.topology = match self.topology {
                    Topology::TwoCommunity { p_inter, .. } => {
                        Topology::TwoCommunity { p_intra, p_inter }
                    }
                    Topology::OneCommunity { .. } => Topology::TwoCommunity {
                        p_intra,
                        p_inter: 0.0,
                    },
                }
            }
            "p_inter" | "p-inter" => {
                let p_inter = num(key, value)?;
                self.topology = match self.topology {
                    Topology::TwoCommunity { p_intra, .. } => {
                        Topology::TwoCommunity { p_intra, p_inter }
                    }
                    Topology::OneCommunity { p } => Topology::TwoCommunity {
                        p_intra: p,
                        p_inter,
                    },
                }
            }
            "initial" => self.initial = value.parse()?,
            "schedule" => self.schedule = value.parse()?,
            "weighting" => {
                self.weighting = match value {
                    "unit" | "none" => Weighting::Unit,
                    "degree" => Weighting::Degree,
                    "poisson" => match self.weighting {
                        w @ Weighting::Poisson { .. } => w,
                        _ => Weighting::Poisson { mean: None },
                    },
                    other => return Err(Error::Config(format!("unknown weighting `{other}`"))),
                }
            }
            "poisson_mean" | "poisson-mean" => {
                self.weighting = Weighting::Poisson {
                    mean: Some(num(key, value)?),
                }
            }
            "replications" => self.replications = num(key, value)?,
            "seed" => self.master_seed = num(key, value)?,
            "max_steps" | "max-steps" => self.max_steps = Some(num(key, value)?),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn density(&self) -> f64 {
        match self.topology {
            Topology::OneCommunity { p } => p,
            Topology::TwoCommunity { p_intra, .. } => p_intra,
        }
    }

    /// Mean degree of the configured ensemble, `(n-1)` times the mean link
    /// density. Used as the default Poisson weight mean.
    pub fn expected_degree(&self) -> f64 {
        let n = self.n as f64;
        match self.topology {
            Topology::OneCommunity { p } => (n - 1.0) * p,
            Topology::TwoCommunity { p_intra, p_inter } => {
                let a = (n / 2.0).ceil();
                let b = (n / 2.0).floor();
                let same = a * (a - 1.0) / 2.0 + b * (b - 1.0) / 2.0;
                2.0 * (same * p_intra + a * b * p_inter) / n
            }
        }
    }

    /// Parses a flat `key=value` file on top of the defaults. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_kv(text)?;
        Ok(config)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: "expected key=value".into(),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub replication: u64,
    pub seed: u64,
    pub edge_count: usize,
    pub steps: u64,
    pub switches: u64,
    pub converged: bool,
    pub cycle_detected: bool,
    pub currency_count: usize,
    pub component_count: usize,
    pub single_currency: bool,
    pub final_utility: i64,
    /// Weight of the agent whose initial currency took over everything.
    /// Only set for single-currency outcomes of distinct starts.
    pub winner_origin_weight: Option<u64>,
    pub mean_population_weight: f64,
}

/// Everything one replication produces, including the realized graph and
/// final state.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub graph: Graph,
    pub initial: CurrencyState,
    pub result: crate::dynamics::RunResult,
}

pub fn run_one(config: &ExperimentConfig, replication: u64) -> Result<RunRecord> {
    Ok(run_one_detailed(config, replication)?.record)
}

/// Seed of one replication; graph, weights, selection and tie-break streams
/// all derive from it.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    derive_seed(master, &[replication])
}

pub fn run_one_detailed(config: &ExperimentConfig, replication: u64) -> Result<RunOutput> {
    config.validate()?;
    let seed = replication_seed(config.master_seed, replication);
    let graph = config.topology.generate(config.n, seed)?;
    let initial = initial_state(config, &graph, seed)?;
    run_on_graph(config, graph, initial, replication)
}

/// Initial currencies per `config.initial`, weights per `config.weighting`.
pub fn initial_state(config: &ExperimentConfig, graph: &Graph, seed: u64) -> Result<CurrencyState> {
    let weights = config
        .weighting
        .weights(graph, seed, config.expected_degree())?;
    match config.initial {
        InitialCondition::Distinct => CurrencyState::distinct(graph.n()),
        InitialCondition::UnifiedCommunities => CurrencyState::unified_communities(graph)?,
    }
    .with_weights(weights)
}

/// Runs `initial` on a given graph with the streams of `replication`.
/// `config.topology` and `config.n` are not consulted.
pub fn run_on_graph(
    config: &ExperimentConfig,
    graph: Graph,
    initial: CurrencyState,
    replication: u64,
) -> Result<RunOutput> {
    let seed = replication_seed(config.master_seed, replication);
    let result =
        Dynamics::seeded(&graph, initial.clone(), config.schedule, seed)?.run(config.max_steps());
    let fin = &result.final_state;
    let currency_count = fin.currency_count();
    let single_currency = currency_count == 1;
    // with a distinct start, a currency id names the agent it started with
    let distinct_start = initial
        .currencies()
        .iter()
        .enumerate()
        .all(|(i, c)| c.index() == i);
    let winner_origin_weight =
        (single_currency && distinct_start).then(|| initial.weight(fin.currency(0).index()));
    let mean_population_weight = fin.weights().iter().sum::<u64>() as f64 / graph.n() as f64;

    let record = RunRecord {
        replication,
        seed,
        edge_count: graph.edge_count(),
        steps: result.steps_executed,
        switches: result.switches,
        converged: result.converged,
        cycle_detected: result.cycle_detected,
        currency_count,
        component_count: connected_components(&graph).count,
        single_currency,
        final_utility: *result
            .utility_trace
            .last()
            .expect("trace starts with the initial utility"),
        winner_origin_weight,
        mean_population_weight,
    };
    Ok(RunOutput {
        record,
        graph,
        initial,
        result,
    })
}

/// Aggregates for one parameter value. Means run over converged replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub replications: u64,
    pub converged: u64,
    pub frac_single: f64,
    pub mean_currencies: f64,
    pub mean_components: f64,
    pub mean_currencies_per_component: f64,
    pub mean_utility: f64,
    pub mean_winner_weight: Option<f64>,
    pub mean_pop_weight: f64,
}

impl SweepPoint {
    pub fn non_converged(&self) -> u64 {
        self.replications - self.converged
    }

    /// Binomial standard error of `frac_single`.
    pub fn frac_single_se(&self) -> f64 {
        let f = self.frac_single;
        (f * (1.0 - f) / self.converged as f64).sqrt()
    }

    /// Aggregates records, independently of their order.
    pub fn from_records(value: f64, records: &[RunRecord]) -> Self {
        let mut sorted: Vec<&RunRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.replication);
        let done: Vec<&RunRecord> = sorted.into_iter().filter(|r| r.converged).collect();
        let k = done.len() as f64;
        let mean = |f: &dyn Fn(&RunRecord) -> f64| done.iter().map(|r| f(r)).sum::<f64>() / k;
        let winners: Vec<u64> = done.iter().filter_map(|r| r.winner_origin_weight).collect();
        Self {
            value,
            replications: records.len() as u64,
            converged: done.len() as u64,
            frac_single: mean(&|r| f64::from(u8::from(r.single_currency))),
            mean_currencies: mean(&|r| r.currency_count as f64),
            mean_components: mean(&|r| r.component_count as f64),
            mean_currencies_per_component: mean(&|r| {
                r.currency_count as f64 / r.component_count as f64
            }),
            mean_utility: mean(&|r| r.final_utility as f64),
            mean_winner_weight: (!winners.is_empty())
                .then(|| winners.iter().sum::<u64>() as f64 / winners.len() as f64),
            mean_pop_weight: mean(&|r| r.mean_population_weight),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub records: Vec<RunRecord>,
    pub summary: SweepPoint,
}

/// Runs every replication of `config` in parallel; records come back sorted
/// by replication index.
pub fn run_batch(config: &ExperimentConfig) -> Result<Batch> {
    run_batch_at(config, f64::NAN)
}

fn run_batch_at(config: &ExperimentConfig, value: f64) -> Result<Batch> {
    config.validate()?;
    let records = (0..config.replications)
        .into_par_iter()
        .map(|r| run_one(config, r))
        .collect::<Result<Vec<_>>>()?;
    let summary = SweepPoint::from_records(value, &records);
    Ok(Batch { records, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Link density of a one-community graph.
    Density,
    /// Cross-community link probability of a two-community graph.
    PInter,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Density => "p",
            SweepParam::PInter => "p_inter",
        }
    }

    fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let topology = match (self, config.topology) {
            (SweepParam::Density, Topology::OneCommunity { .. }) => {
                Topology::OneCommunity { p: value }
            }
            (SweepParam::PInter, Topology::TwoCommunity { p_intra, .. }) => {
                Topology::TwoCommunity {
                    p_intra,
                    p_inter: value,
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "cannot sweep `{}` over this topology",
                    self.name()
                )))
            }
        };
        Ok(ExperimentConfig {
            topology,
            master_seed: derive_seed(config.master_seed, &[value.to_bits()]),
            ..config.clone()
        })
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub param: SweepParam,
    pub batches: Vec<Batch>,
}

impl Sweep {
    pub fn points(&self) -> impl Iterator<Item = &SweepPoint> {
        self.batches.iter().map(|b| &b.summary)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for p in self.points() {
            let winner = p
                .mean_winner_weight
                .map(|w| w.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.param.name(),
                p.value,
                p.replications,
                p.converged,
                p.frac_single,
                p.mean_currencies,
                p.mean_components,
                p.mean_utility,
                winner,
                p.mean_pop_weight
            );
        }
        out
    }
}

pub const SWEEP_CSV_HEADER: &str = "param,value,replications,converged,frac_single,mean_currencies,mean_components,mean_utility,mean_winner_weight,mean_pop_weight";

pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Sweep> {
    if values.is_empty() {
        return Err(Error::Config("no sweep values".into()));
    }
    for &v in values {
        check_probability(param.name(), v)?;
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sweep values must be strictly ascending".into(),
        ));
    }
    let batches = values
        .iter()
        .map(|&v| run_batch_at(&param.apply(base, v)?, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { param, batches })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginatorStats {
    /// Single-currency runs contributing.
    pub runs: usize,
    pub mean_winner_weight: f64,
    pub mean_population_weight: f64,
    /// Mean of per-run `winner - population mean` differences and its
    /// standard error.
    pub mean_excess: f64,
    pub excess_se: f64,
}

impl OriginatorStats {
    pub fn z_score(&self) -> f64 {
        self.mean_excess / self.excess_se
    }
}

/// Winner-origin weight against the population mean over converged
/// single-currency runs. `None` when no run qualifies.
pub fn originator_statistics(records: &[RunRecord]) -> Option<OriginatorStats> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| {
            r.winner_origin_weight
                .map(|w| (w as f64, r.mean_population_weight))
        })
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let k = pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(|(w, m)| w - m).collect();
    let mean_excess = diffs.iter().sum::<f64>() / k;
    let var = if pairs.len() > 1 {
        diffs.iter().map(|d| (d - mean_excess).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Some(OriginatorStats {
        runs: pairs.len(),
        mean_winner_weight: pairs.iter().map(|p| p.0).sum::<f64>() / k,
        mean_population_weight: pairs.iter().map(|p| p.1).sum::<f64>() / k,
        mean_excess,
        excess_se: (var / k).sqrt(),
    })
}
