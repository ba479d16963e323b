//! Currency adoption dynamics.
//!
//! Each agent holds a currency and a nonnegative integer weight. An agent
//! pays its neighbour's weight for every trade across differing currencies;
//! when updated it adopts the currency carrying the largest total neighbour
//! weight, keeping its own whenever its own ties for the maximum.
//!
//! With unit weights every switch raises the social utility by at least 2,
//! so sequential schedules can never revisit a state and always reach an
//! equilibrium. Weighted and synchronous dynamics carry no such guarantee
//! and are bounded by a step budget instead.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed::{stream_rng, Stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Currency(pub u32);

impl Currency {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Per-agent currency and weight.
///
/// Currency ids are agent indices, so every id lies in `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CurrencyState {
    currencies: Vec<Currency>,
    weights: Vec<u64>,
}

impl CurrencyState {
    pub fn new(currencies: Vec<Currency>, weights: Vec<u64>) -> Result<Self> {
        let n = currencies.len();
        if n == 0 {
            return Err(Error::TooFewAgents { n, min: 1 });
        }
        if weights.len() != n {
            return Err(Error::StateSizeMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        if let Some(c) = currencies.iter().find(|c| c.index() >= n) {
            return Err(Error::CurrencyOutOfRange { currency: c.0, n });
        }
        Ok(Self {
            currencies,
            weights,
        })
    }

    pub fn unweighted(currencies: Vec<Currency>) -> Result<Self> {
        let n = currencies.len();
        Self::new(currencies, vec![1; n])
    }

    /// Every agent starts with its own currency.
    pub fn distinct(n: usize) -> Self {
        Self {
            currencies: (0..n as u32).map(Currency).collect(),
            weights: vec![1; n],
        }
    }

    /// Each community shares the currency of its lowest-indexed member.
    pub fn unified_communities(g: &Graph) -> Result<Self> {
        let labels = g.communities().ok_or(Error::MissingCommunities)?;
        let mut first = [None::<u32>; 2];
        for (i, &c) in labels.iter().enumerate() {
            first[c as usize].get_or_insert(i as u32);
        }
        let currencies = labels
            .iter()
            .map(|&c| Currency(first[c as usize].expect("label seen")))
            .collect();
        Self::unweighted(currencies)
    }

    pub fn with_weights(self, weights: Vec<u64>) -> Result<Self> {
        Self::new(self.currencies, weights)
    }

    pub fn n(&self) -> usize {
        self.currencies.len()
    }

    #[inline]
    pub fn currency(&self, i: usize) -> Currency {
        self.currencies[i]
    }

    pub fn currencies(&self) -> &[Currency] {
        &self.currencies
    }

    #[inline]
    pub fn weight(&self, i: usize) -> u64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn is_unweighted(&self) -> bool {
        self.weights.iter().all(|&w| w == 1)
    }

    /// Number of distinct currencies in use.
    pub fn currency_count(&self) -> usize {
        let mut seen = vec![false; self.n()];
        self.currencies
            .iter()
            .filter(|c| !std::mem::replace(&mut seen[c.index()], true))
            .count()
    }

    fn set(&mut self, i: usize, c: Currency) {
        self.currencies[i] = c;
    }
}

/// Snapshot format: a `currencies ...` line followed by a `weights ...` line.
impl fmt::Display for CurrencyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "currencies")?;
        for c in &self.currencies {
            write!(f, " {c}")?;
        }
        write!(f, "\nweights")?;
        for w in &self.weights {
            write!(f, " {w}")?;
        }
        writeln!(f)
    }
}

impl FromStr for CurrencyState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut currencies = None;
        let mut weights = None;
        for (idx, line) in s.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(key) = fields.next() else { continue };
            let err = |msg: String| Error::Parse { line: idx + 1, msg };
            let values = fields
                .map(str::parse::<u64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(format!("bad value: {e}")))?;
            let slot = match key {
                "currencies" => &mut currencies,
                "weights" => &mut weights,
                other => return Err(err(format!("unknown key `{other}`"))),
            };
            if slot.replace(values).is_some() {
                return Err(err(format!("duplicate `{key}` line")));
            }
        }
        let currencies = currencies.ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing `currencies` line".into(),
        })?;
        let currencies = currencies
            .into_iter()
            .map(|c| u32::try_from(c).map(Currency))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: format!("currency id: {e}"),
            })?;
        let weights = weights.unwrap_or_else(|| vec![1; currencies.len()]);
        Self::new(currencies, weights)
    }
}

fn check_agent(g: &Graph, st: &CurrencyState, i: usize) -> Result<()> {
    if st.n() != g.n() {
        return Err(Error::StateSizeMismatch {
            expected: g.n(),
            got: st.n(),
        });
    }
    if i >= g.n() {
        return Err(Error::AgentOutOfRange { agent: i, n: g.n() });
    }
    Ok(())
}

/// Utility of agent `i`: minus the weight of neighbours holding another currency.
pub fn agent_utility(g: &Graph, st: &CurrencyState, i: usize) -> Result<i64> {
    check_agent(g, st, i)?;
    Ok(agent_utility_unchecked(g, st, i))
}

fn agent_utility_unchecked(g: &Graph, st: &CurrencyState, i: usize) -> i64 {
    let own = st.currency(i);
    -g.neighbors(i)
        .iter()
        .map(|&j| j as usize)
        .filter(|&j| st.currency(j) != own)
        .map(|j| st.weight(j) as i64)
        .sum::<i64>()
}

/// Sum of all agent utilities. Each discordant edge `{i, j}` costs `w_i + w_j`.
pub fn social_utility(g: &Graph, st: &CurrencyState) -> Result<i64> {
    if st.n() != g.n() {
        return Err(Error::StateSizeMismatch {
            expected: g.n(),
            got: st.n(),
        });
    }
    Ok((0..g.n()).map(|i| agent_utility_unchecked(g, st, i)).sum())
}

/// Total neighbour weight per currency around agent `i`.
pub fn neighbor_tally(g: &Graph, st: &CurrencyState, i: usize) -> Result<BTreeMap<Currency, u64>> {
    check_agent(g, st, i)?;
    let mut tally = BTreeMap::new();
    for &j in g.neighbors(i) {
        let j = j as usize;
        *tally.entry(st.currency(j)).or_insert(0) += st.weight(j);
    }
    Ok(tally)
}

/// Exact change of the social utility if agent `i` moved to `to`.
pub fn switch_utility_delta(g: &Graph, st: &CurrencyState, i: usize, to: Currency) -> Result<i64> {
    check_agent(g, st, i)?;
    if to.index() >= g.n() {
        return Err(Error::CurrencyOutOfRange {
            currency: to.0,
            n: g.n(),
        });
    }
    Ok(switch_delta_unchecked(g, st, i, to))
}

fn switch_delta_unchecked(g: &Graph, st: &CurrencyState, i: usize, to: Currency) -> i64 {
    let from = st.currency(i);
    if from == to {
        return 0;
    }
    let wi = st.weight(i) as i64;
    g.neighbors(i)
        .iter()
        .map(|&j| j as usize)
        .map(|j| {
            let c = st.currency(j);
            let pair = wi + st.weight(j) as i64;
            if c == to {
                pair
            } else if c == from {
                -pair
            } else {
                0
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    pub currency: Currency,
    pub switched: bool,
    /// Whether a random draw among tied maxima was made.
    pub tie_broken: bool,
}

/// Dense neighbour tally reused across updates.
#[derive(Debug, Clone)]
struct Tally {
    mass: Vec<u64>,
    present: Vec<bool>,
    touched: Vec<Currency>,
    best: Vec<Currency>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            mass: vec![0; n],
            present: vec![false; n],
            touched: Vec::new(),
            best: Vec::new(),
        }
    }

    fn fill(&mut self, g: &Graph, st: &CurrencyState, i: usize) {
        for c in self.touched.drain(..) {
            self.mass[c.index()] = 0;
            self.present[c.index()] = false;
        }
        for &j in g.neighbors(i) {
            let j = j as usize;
            let c = st.currency(j);
            if !self.present[c.index()] {
                self.present[c.index()] = true;
                self.touched.push(c);
            }
            self.mass[c.index()] += st.weight(j);
        }
    }

    fn max(&self) -> u64 {
        self.touched
            .iter()
            .map(|c| self.mass[c.index()])
            .max()
            .unwrap_or(0)
    }

    /// True iff `current` falls short of the maximal tally. A currency no
    /// neighbour holds counts as zero, so an all-zero tally never moves anyone.
    fn would_switch(&self, current: Currency) -> bool {
        self.mass[current.index()] < self.max()
    }

    fn decide<R: Rng + ?Sized>(&mut self, current: Currency, ties: &mut R) -> Choice {
        let max = self.max();
        if self.mass[current.index()] >= max {
            return Choice {
                currency: current,
                switched: false,
                tie_broken: false,
            };
        }
        self.best.clear();
        self.best.extend(
            self.touched
                .iter()
                .copied()
                .filter(|c| self.mass[c.index()] == max),
        );
        // Order by id so the draw does not depend on neighbour order.
        self.best.sort_unstable();
        let tie_broken = self.best.len() > 1;
        let currency = if tie_broken {
            self.best[ties.random_range(0..self.best.len())]
        } else {
            self.best[0]
        };
        Choice {
            currency,
            switched: true,
            tie_broken,
        }
    }
}

/// Best response of agent `i`: the most common neighbour currency, keeping
/// the current one when it ties for the maximum, uniform among tied maxima
/// otherwise.
pub fn choose_currency<R: Rng + ?Sized>(
    g: &Graph,
    st: &CurrencyState,
    i: usize,
    ties: &mut R,
) -> Result<Choice> {
    check_agent(g, st, i)?;
    let mut tally = Tally::new(g.n());
    tally.fill(g, st, i);
    Ok(tally.decide(st.currency(i), ties))
}

/// No agent would change its currency. Isolated agents never block.
pub fn is_equilibrium(g: &Graph, st: &CurrencyState) -> bool {
    let mut tally = Tally::new(g.n());
    unstable_agent(g, st, &mut tally).is_none()
}

/// Agents that would switch if updated now.
pub fn unstable_agents(g: &Graph, st: &CurrencyState) -> Vec<usize> {
    let mut tally = Tally::new(g.n());
    (0..g.n())
        .filter(|&i| {
            tally.fill(g, st, i);
            tally.would_switch(st.currency(i))
        })
        .collect()
}

fn unstable_agent(g: &Graph, st: &CurrencyState, tally: &mut Tally) -> Option<usize> {
    (0..g.n()).find(|&i| {
        tally.fill(g, st, i);
        tally.would_switch(st.currency(i))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Schedule {
    /// One uniformly drawn agent per step.
    #[default]
    RandomSequential,
    /// Agents `0, 1, ..., n-1, 0, ...` in turn.
    FixedSequential,
    /// All agents respond to the same state, then commit together.
    Synchronous,
}

impl Schedule {
    pub const ALL: [Schedule; 3] = [
        Schedule::RandomSequential,
        Schedule::FixedSequential,
        Schedule::Synchronous,
    ];

    pub fn is_sequential(self) -> bool {
        !matches!(self, Schedule::Synchronous)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::RandomSequential => "random",
            Schedule::FixedSequential => "fixed",
            Schedule::Synchronous => "synchronous",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random_sequential" | "random-sequential" => Ok(Schedule::RandomSequential),
            "fixed" | "fixed_sequential" | "fixed-sequential" => Ok(Schedule::FixedSequential),
            "synchronous" | "sync" => Ok(Schedule::Synchronous),
            other => Err(Error::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

/// A committed currency change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Switch {
    pub agent: usize,
    pub from: Currency,
    pub to: Currency,
    /// Social utility change, computed locally before committing.
    pub delta: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// One agent was updated; `Some` if it switched.
    Sequential(Option<Switch>),
    /// A synchronous round over all agents.
    Round { switches: usize, tie_broken: bool },
}

impl StepOutcome {
    pub fn switches(&self) -> usize {
        match self {
            StepOutcome::Sequential(s) => usize::from(s.is_some()),
            StepOutcome::Round { switches, .. } => *switches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    /// Elementary agent updates; a synchronous round counts `n`.
    pub steps_executed: u64,
    pub switches: u64,
    /// Social utility initially and after every step that changed the state.
    pub utility_trace: Vec<i64>,
    /// Elementary step count at which each `utility_trace` entry was taken.
    pub trace_steps: Vec<u64>,
    pub final_state: CurrencyState,
    pub converged: bool,
    pub cycle_detected: bool,
}

/// Default step budget, `100 n^2` elementary updates.
pub fn default_max_steps(n: usize) -> u64 {
    100 * (n as u64).pow(2)
}

/// Stepper for one trajectory.
#[derive(Debug, Clone)]
pub struct Dynamics<'g, R = StreamRng> {
    graph: &'g Graph,
    state: CurrencyState,
    schedule: Schedule,
    selection: R,
    ties: R,
    cursor: usize,
    steps: u64,
    switches: u64,
    utility: i64,
    tally: Tally,
    pending: Vec<Currency>,
}

impl<'g> Dynamics<'g, StreamRng> {
    /// Selection and tie-break streams derived from one seed.
    pub fn seeded(
        g: &'g Graph,
        state: CurrencyState,
        schedule: Schedule,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            g,
            state,
            schedule,
            stream_rng(seed, Stream::Selection),
            stream_rng(seed, Stream::TieBreak),
        )
    }
}

impl<'g, R: Rng> Dynamics<'g, R> {
    pub fn new(
        g: &'g Graph,
        state: CurrencyState,
        schedule: Schedule,
        selection: R,
        ties: R,
    ) -> Result<Self> {
        let utility = social_utility(g, &state)?;
        Ok(Self {
            graph: g,
            state,
            schedule,
            selection,
            ties,
            cursor: 0,
            steps: 0,
            switches: 0,
            utility,
            tally: Tally::new(g.n()),
            pending: Vec::new(),
        })
    }

    pub fn state(&self) -> &CurrencyState {
        &self.state
    }

    pub fn into_state(self) -> CurrencyState {
        self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    /// Running social utility.
    pub fn utility(&self) -> i64 {
        self.utility
    }

    pub fn is_equilibrium(&mut self) -> bool {
        unstable_agent(self.graph, &self.state, &mut self.tally).is_none()
    }

    pub fn step(&mut self) -> StepOutcome {
        match self.schedule {
            Schedule::RandomSequential => {
                let i = self.selection.random_range(0..self.graph.n());
                StepOutcome::Sequential(self.update_agent(i))
            }
            Schedule::FixedSequential => {
                let i = self.cursor;
                self.cursor = (self.cursor + 1) % self.graph.n();
                StepOutcome::Sequential(self.update_agent(i))
            }
            Schedule::Synchronous => self.round(),
        }
    }

    fn update_agent(&mut self, i: usize) -> Option<Switch> {
        self.steps += 1;
        self.tally.fill(self.graph, &self.state, i);
        let from = self.state.currency(i);
        let choice = self.tally.decide(from, &mut self.ties);
        if !choice.switched {
            return None;
        }
        let delta = switch_delta_unchecked(self.graph, &self.state, i, choice.currency);
        self.state.set(i, choice.currency);
        self.utility += delta;
        self.switches += 1;
        Some(Switch {
            agent: i,
            from,
            to: choice.currency,
            delta,
        })
    }

    fn round(&mut self) -> StepOutcome {
        let n = self.graph.n();
        let mut tie_broken = false;
        self.pending.clear();
        for i in 0..n {
            self.tally.fill(self.graph, &self.state, i);
            let choice = self.tally.decide(self.state.currency(i), &mut self.ties);
            tie_broken |= choice.tie_broken;
            self.pending.push(choice.currency);
        }
        let mut switches = 0;
        for (i, &c) in self.pending.iter().enumerate() {
            if self.state.currency(i) != c {
                self.state.set(i, c);
                switches += 1;
            }
        }
        self.steps += n as u64;
        self.switches += switches as u64;
        if switches > 0 {
            self.utility =
                social_utility(self.graph, &self.state).expect("sizes checked at construction");
        }
        StepOutcome::Round {
            switches,
            tie_broken,
        }
    }

    pub fn run(self, max_steps: u64) -> RunResult {
        self.run_observed(max_steps, |_, _| {})
    }

    /// Runs until equilibrium, a synchronous cycle, or `max_steps` updates.
    ///
    /// Sequential schedules rescan all agents every `n` updates, so an
    /// equilibrium is detected exactly, at most `n` updates late. A synchronous
    /// round without switches is an equilibrium. A synchronous state equal to
    /// the one two rounds back, reached through two rounds with no random
    /// tie-breaks, repeats forever and is reported as a cycle.
    pub fn run_observed<F>(mut self, max_steps: u64, mut observe: F) -> RunResult
    where
        F: FnMut(&StepOutcome, &CurrencyState),
    {
        let n = self.graph.n() as u64;
        let mut trace = vec![self.utility];
        let mut trace_steps = vec![0];
        let mut converged = self.is_equilibrium();
        let mut cycle_detected = false;
        // State two rounds back, and whether the round leaving it was tie-free.
        let mut two_back: Option<(CurrencyState, bool)> = None;

        while !converged && !cycle_detected && self.steps < max_steps {
            let before = (self.schedule == Schedule::Synchronous).then(|| self.state.clone());
            let outcome = self.step();
            if outcome.switches() > 0 {
                trace.push(self.utility);
                trace_steps.push(self.steps);
            }
            observe(&outcome, &self.state);

            match outcome {
                StepOutcome::Sequential(_) => {
                    if self.steps.is_multiple_of(n) {
                        converged = self.is_equilibrium();
                    }
                }
                StepOutcome::Round {
                    switches,
                    tie_broken,
                } => {
                    if switches == 0 {
                        converged = true;
                        continue;
                    }
                    let before = before.expect("synchronous");
                    if let Some((older, clean)) = &two_back {
                        cycle_detected = *clean && !tie_broken && *older == self.state;
                    }
                    two_back = Some((before, !tie_broken));
                }
            }
        }
        if !converged && !cycle_detected {
            converged = self.is_equilibrium();
        }
        RunResult {
            steps_executed: self.steps,
            switches: self.switches,
            utility_trace: trace,
            trace_steps,
            final_state: self.state,
            converged,
            cycle_detected,
        }
    }
}

/// Runs `initial` to equilibrium under `schedule` with streams derived from `seed`.
pub fn run_to_equilibrium(
    g: &Graph,
    initial: CurrencyState,
    schedule: Schedule,
    seed: u64,
    max_steps: u64,
) -> Result<RunResult> {
    Ok(Dynamics::seeded(g, initial, schedule, seed)?.run(max_steps))
}
