//! Currency competition on random graphs.
//!
//! Agents sit on the vertices of a random graph and repeatedly adopt the
//! currency most used among their neighbours. The crate provides the graph
//! ensembles ([`graph`]), the adoption dynamics ([`dynamics`]), replicated
//! experiment campaigns ([`experiments`]) and the binomial tail analysis of
//! two pre-unified communities ([`theory`]).

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod seed;
pub mod theory;

pub use dynamics::{
    agent_utility, choose_currency, is_equilibrium, neighbor_tally, run_to_equilibrium,
    social_utility, switch_utility_delta, Currency, CurrencyState, Dynamics, RunResult, Schedule,
    StepOutcome, Switch,
};
pub use error::{Error, Result};
pub use experiments::{
    initial_state, originator_statistics, replication_seed, run_batch, run_on_graph, run_one,
    run_one_detailed, sweep, ExperimentConfig, InitialCondition, RunRecord, Sweep, SweepParam,
    SweepPoint, Topology, Weighting,
};
pub use graph::{connected_components, gen_er, gen_two_community, mean_density, Components, Graph};
pub use theory::{
    flip_probability_exact, flip_probability_mc, geometric_rates, union_bound, BoundParams,
    BoundReport, DecayRates, TrialsConvention,
};
