//! Large-N persistence of two pre-unified communities.
//!
//! An agent can only leave its community's currency if it has at least as
//! many cross-community neighbours as same-community ones. With `X_a` the
//! same-community and `X_r` the cross-community neighbour count, this module
//! evaluates `P(X_a <= X_r)` exactly, the tail split at
//! `k_N = floor(p_av * N)`, the closed-form geometric rates and the union
//! bound `N * (rho_a^N + rho_r^N)`.
//!
//! The closed-form rates `((1-p_intra)/(1-p_av))^(1-p_av)` and
//! `(p_inter/p_av)^p_av` decay faster than the binomial tails they are meant
//! to bound, so the tail split generally exceeds `rho_a^N + rho_r^N` at
//! moderate N. [`chernoff_rates`] gives rates `exp(-KL(p_av || p))` that do
//! bound the tails, and [`BoundReport`] carries both.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{check_probability, Error, Result};
use crate::seed::{derive_seed, stream_rng, Stream, StreamRng};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ln(m!) - [(m + 1/2) ln m - m + ln(2 pi)/2], exact for small m.
#[allow(clippy::excessive_precision)]
const STIRLING_ERR: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_219_670_2,
    0.041_340_695_955_409_294_093_822_1,
    0.027_677_925_684_998_339_148_789_29,
    0.020_790_672_103_765_093_111_522_77,
    0.016_644_691_189_821_192_163_194_87,
    0.013_876_128_823_070_747_998_745_73,
    0.011_896_709_945_891_770_095_055_72,
    0.010_411_265_261_972_096_497_478_567,
    0.009_255_462_182_712_732_917_728_637,
    0.008_330_563_433_362_871_256_469_318,
    0.007_573_675_487_951_840_794_972_024,
    0.006_942_840_107_209_529_865_664_152,
    0.006_408_994_188_004_207_068_439_631,
    0.005_951_370_112_758_847_735_624_416,
    0.005_554_733_551_962_801_371_038_690,
];

fn stirling_err(m: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    const S5: f64 = 691.0 / 360_360.0;
    if m < STIRLING_ERR.len() as u64 {
        return STIRLING_ERR[m as usize];
    }
    let x = m as f64;
    let xx = x * x;
    match m {
        501.. => (S0 - S1 / xx) / x,
        81..=500 => (S0 - (S1 - S2 / xx) / xx) / x,
        36..=80 => (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x,
        _ => (S0 - (S1 - (S2 - (S3 - (S4 - S5 / xx) / xx) / xx) / xx) / xx) / x,
    }
}

// Deviance term x ln(x/mu) + mu - x, by series when x is close to mu.
fn deviance(x: f64, mu: f64) -> f64 {
    if (x - mu).abs() < 0.1 * (x + mu) {
        let mut v = (x - mu) / (x + mu);
        let mut s = (x - mu) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1.. {
            ej *= v;
            let next = s + ej / f64::from(2 * j + 1);
            if next == s {
                break;
            }
            s = next;
        }
        s
    } else {
        x * (x / mu).ln() + mu - x
    }
}

// Saddle-point evaluation (Loader's algorithm), accurate to a few ulps in
// relative terms even for n in the hundreds of thousands.
fn pmf_unchecked(n: u64, p: f64, k: u64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let q = 1.0 - p;
    let nf = n as f64;
    if k == 0 {
        return (nf * (-p).ln_1p()).exp();
    }
    if k == n {
        return (nf * p.ln()).exp();
    }
    let kf = k as f64;
    let lc = stirling_err(n)
        - stirling_err(k)
        - stirling_err(n - k)
        - deviance(kf, nf * p)
        - deviance(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `P(X = k)` for `X ~ Binomial(n, p)`, evaluated in log space.
pub fn binom_pmf(n: u64, p: f64, k: u64) -> Result<f64> {
    check_probability("p", p)?;
    if k > n {
        return Err(Error::SuccessesOutOfRange { k: k as i64, n });
    }
    Ok(pmf_unchecked(n, p, k))
}

/// `P(X <= k)`; 0 for `k < 0` and 1 for `k >= n`.
pub fn binom_cdf(n: u64, p: f64, k: i64) -> Result<f64> {
    check_probability("p", p)?;
    if k < 0 {
        return Ok(0.0);
    }
    let k = k as u64;
    if k >= n {
        return Ok(1.0);
    }
    Ok((0..=k)
        .map(|j| pmf_unchecked(n, p, j))
        .collect::<CompensatedSum>()
        .value())
}

/// `P(X > k)`, summed over the upper tail directly so tiny tails keep full
/// relative precision.
pub fn binom_sf(n: u64, p: f64, k: i64) -> Result<f64> {
    check_probability("p", p)?;
    if k < 0 {
        return Ok(1.0);
    }
    let k = k as u64;
    if k >= n {
        return Ok(0.0);
    }
    Ok((k + 1..=n)
        .map(|j| pmf_unchecked(n, p, j))
        .collect::<CompensatedSum>()
        .value())
}

/// How many potential partners each neighbour count is drawn over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TrialsConvention {
    /// Both counts binomial over `N` trials, as in the large-N argument.
    #[default]
    FullN,
    /// The counts realized by agent 0 of an actual two-community graph:
    /// `ceil(N/2) - 1` same-community and `floor(N/2)` cross-community partners.
    ExactHalves,
}

impl TrialsConvention {
    /// `(same-community trials, cross-community trials)`.
    pub fn trials(self, n: u64) -> (u64, u64) {
        match self {
            TrialsConvention::FullN => (n, n),
            TrialsConvention::ExactHalves => (n.div_ceil(2).saturating_sub(1), n / 2),
        }
    }
}

impl std::str::FromStr for TrialsConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "full_n" | "full-n" => Ok(Self::FullN),
            "halves" | "exact_halves" | "exact-halves" => Ok(Self::ExactHalves),
            other => Err(Error::Config(format!(
                "unknown trials convention `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: u64,
    pub p_intra: f64,
    pub p_inter: f64,
    pub convention: TrialsConvention,
}

impl BoundParams {
    pub fn new(n: u64, p_intra: f64, p_inter: f64) -> Result<Self> {
        check_probability("p_intra", p_intra)?;
        check_probability("p_inter", p_inter)?;
        if n == 0 {
            return Err(Error::TooFewAgents { n: 0, min: 1 });
        }
        Ok(Self {
            n,
            p_intra,
            p_inter,
            convention: TrialsConvention::FullN,
        })
    }

    pub fn with_convention(mut self, convention: TrialsConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn p_av(&self) -> f64 {
        (self.p_intra + self.p_inter) / 2.0
    }

    /// `floor(p_av * N)`. Products within round-off of an integer snap to
    /// it, so decimal inputs such as `(0.3 + 0.1) / 2 * 100` give 20.
    pub fn k_n(&self) -> u64 {
        let x = self.p_av() * self.n as f64;
        let nearest = x.round();
        if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
            nearest as u64
        } else {
            x.floor() as u64
        }
    }
}

/// `P(X_a <= X_r)` for independent binomial neighbour counts.
pub fn flip_probability_exact(params: &BoundParams) -> f64 {
    let (trials_a, trials_r) = params.convention.trials(params.n);
    let mut cdf_a = CompensatedSum::default();
    let mut total = CompensatedSum::default();
    for k in 0..=trials_r {
        if k <= trials_a {
            cdf_a.add(pmf_unchecked(trials_a, params.p_intra, k));
        }
        // past trials_a the cdf is 1 up to round-off
        let phi = if k >= trials_a { 1.0 } else { cdf_a.value() };
        total.add(pmf_unchecked(trials_r, params.p_inter, k) * phi);
    }
    total.value()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    pub rho_a: f64,
    pub rho_r: f64,
}

impl DecayRates {
    /// `rho_a^N + rho_r^N`.
    pub fn bound(&self, n: u64) -> f64 {
        self.rho_a.powf(n as f64) + self.rho_r.powf(n as f64)
    }
}

fn check_ordered(p_intra: f64, p_inter: f64) -> Result<()> {
    check_probability("p_intra", p_intra)?;
    check_probability("p_inter", p_inter)?;
    if p_inter < p_intra {
        Ok(())
    } else {
        Err(Error::RatesUndefined { p_intra, p_inter })
    }
}

/// `rho_a = ((1-p_intra)/(1-p_av))^(1-p_av)`, `rho_r = (p_inter/p_av)^p_av`.
pub fn geometric_rates(p_intra: f64, p_inter: f64) -> Result<DecayRates> {
    check_ordered(p_intra, p_inter)?;
    let p_av = (p_intra + p_inter) / 2.0;
    Ok(DecayRates {
        rho_a: ((1.0 - p_intra) / (1.0 - p_av)).powf(1.0 - p_av),
        rho_r: (p_inter / p_av).powf(p_av),
    })
}

/// Kullback-Leibler divergence between Bernoulli(a) and Bernoulli(p).
pub fn bernoulli_kl(a: f64, p: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, p) + term(1.0 - a, 1.0 - p)
}

/// Chernoff rates `exp(-KL(p_av || p_intra))` and `exp(-KL(p_av || p_inter))`;
/// these bound `phi_a(k_N)` and `1 - phi_r(k_N)` for every N.
pub fn chernoff_rates(p_intra: f64, p_inter: f64) -> Result<DecayRates> {
    check_ordered(p_intra, p_inter)?;
    let p_av = (p_intra + p_inter) / 2.0;
    Ok(DecayRates {
        rho_a: (-bernoulli_kl(p_av, p_intra)).exp(),
        rho_r: (-bernoulli_kl(p_av, p_inter)).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub params: BoundParams,
    pub p_av: f64,
    pub k_n: u64,
    pub flip_prob_exact: f64,
    /// `phi_a(k_N) = P(X_a <= k_N)`.
    pub lower_tail_a: f64,
    /// `1 - phi_r(k_N) = P(X_r > k_N)`.
    pub upper_tail_r: f64,
    pub rates: DecayRates,
    /// `rho_a^N + rho_r^N`.
    pub geometric_bound: f64,
    /// `N * (rho_a^N + rho_r^N)`.
    pub union_bound: f64,
    pub chernoff: DecayRates,
    pub chernoff_bound: f64,
}

impl BoundReport {
    pub fn tail_sum(&self) -> f64 {
        self.lower_tail_a + self.upper_tail_r
    }
}

pub fn union_bound(params: &BoundParams) -> Result<BoundReport> {
    let rates = geometric_rates(params.p_intra, params.p_inter)?;
    let chernoff = chernoff_rates(params.p_intra, params.p_inter)?;
    let (trials_a, trials_r) = params.convention.trials(params.n);
    let k_n = params.k_n();
    let geometric_bound = rates.bound(params.n);
    Ok(BoundReport {
        params: *params,
        p_av: params.p_av(),
        k_n,
        flip_prob_exact: flip_probability_exact(params),
        lower_tail_a: binom_cdf(trials_a, params.p_intra, k_n as i64)?,
        upper_tail_r: binom_sf(trials_r, params.p_inter, k_n as i64)?,
        rates,
        geometric_bound,
        union_bound: params.n as f64 * geometric_bound,
        chernoff,
        chernoff_bound: chernoff.bound(params.n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

const MC_SHARD: u64 = 4096;

/// Monte Carlo estimate of `P(X_a <= X_r)` from directly sampled binomial
/// pairs. The budget is split into fixed-size shards with their own derived
/// seeds, so the result does not depend on the number of worker threads.
pub fn flip_probability_mc(params: &BoundParams, samples: u64, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::Config("samples must be at least 1".into()));
    }
    let (trials_a, trials_r) = params.convention.trials(params.n);
    let same = Binomial::new(trials_a, params.p_intra).map_err(|e| Error::Config(e.to_string()))?;
    let cross =
        Binomial::new(trials_r, params.p_inter).map_err(|e| Error::Config(e.to_string()))?;
    let shards = samples.div_ceil(MC_SHARD);
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng: StreamRng = stream_rng(derive_seed(seed, &[shard]), Stream::Sampling);
            let len = MC_SHARD.min(samples - shard * MC_SHARD);
            (0..len)
                .filter(|_| same.sample(&mut rng) <= cross.sample(&mut rng))
                .count() as u64
        })
        .sum();
    let estimate = hits as f64 / samples as f64;
    Ok(McEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / samples as f64).sqrt(),
        samples,
    })
}
