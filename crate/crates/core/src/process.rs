//! The self-repellent walk as a stochastic-approximation process.
//!
//! The empirical measure is kept as positive counts plus their total, so an
//! accepted step is one increment and the step size is `1/(total + 1)`.
//! Fake visits seed the counts and keep every coordinate strictly positive.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::chain::{normalize_distribution, ReversibleKernel};
use crate::error::{Error, Result};
use crate::estimators::{importance_weights, mean_and_se, tvd, RunningEstimator};
use crate::graph::Graph;
use crate::kernel::{row_weights, sample_weighted, Repellence};

/// How the counts are seeded before the first step.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// One fake visit per node.
    UniformFake,
    /// `deg(i)` fake visits at node `i`.
    DegreeFake,
    /// Counts equal to the given distribution, total mass 1.
    Explicit(Vec<f64>),
}

/// Positive visit counts `c` with total `t`; the measure is `x = c / t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    counts: Vec<f64>,
    total: f64,
}

impl EmpiricalMeasure {
    pub fn from_counts(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidDistribution("no states".into()));
        }
        if let Some(i) = counts.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidDistribution(format!("count {i} = {} is not positive", counts[i])));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn x(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c / self.total).collect()
    }

    /// Records one visit to `i`.
    #[inline]
    pub fn increment(&mut self, i: usize) {
        self.counts[i] += 1.0;
        self.total += 1.0;
    }

    fn reset_to(&mut self, x: &[f64], total: f64) {
        for (c, v) in self.counts.iter_mut().zip(x) {
            *c = v * total;
        }
        self.total = total;
    }
}

pub fn init_measure(g: &Graph, mode: &InitMode) -> Result<EmpiricalMeasure> {
    let n = g.node_count();
    match mode {
        InitMode::UniformFake => EmpiricalMeasure::from_counts(vec![1.0; n]),
        InitMode::DegreeFake => EmpiricalMeasure::from_counts(g.degrees()),
        InitMode::Explicit(nu) => {
            let nu = normalize_distribution(nu, n)?;
            Ok(EmpiricalMeasure { counts: nu, total: 1.0 })
        }
    }
}

/// Repellence as a function of the step index `n` (and graph size `N`).
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    /// `min(cap, 1 / (a + exp(-n + b N)))`.
    Sigmoid1 { a: f64, b: f64, cap: f64 },
    /// `n / (a + b n)`.
    Sigmoid2 { a: f64, b: f64 },
    /// Piecewise constant: `(n_start, alpha)` pairs, first start 0, strictly increasing.
    Table(Vec<(u64, f64)>),
}

impl AlphaSchedule {
    /// Default sigmoid-1 shape, saturating at 2.
    pub fn sigmoid1_default() -> Self {
        AlphaSchedule::Sigmoid1 { a: 0.5, b: 0.25, cap: 2.0 }
    }

    #[inline]
    pub fn alpha_at(&self, n: u64, node_count: usize) -> f64 {
        match self {
            AlphaSchedule::Constant(a) => *a,
            AlphaSchedule::Sigmoid1 { a, b, cap } => {
                let e = (-(n as f64) + b * node_count as f64).exp();
                (1.0 / (a + e)).min(*cap)
            }
            AlphaSchedule::Sigmoid2 { a, b } => n as f64 / (a + b * n as f64),
            AlphaSchedule::Table(points) => {
                let idx = points.partition_point(|&(start, _)| start <= n);
                points[idx.saturating_sub(1)].1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            AlphaSchedule::Constant(a) => Repellence::new(*a).map(|_| ()),
            AlphaSchedule::Sigmoid1 { a, b, cap } => {
                if !(a.is_finite() && *a > 0.0 && b.is_finite() && cap.is_finite() && *cap > 0.0) {
                    return bad(format!("sigmoid1 needs a > 0, finite b and cap > 0 (got a={a}, b={b}, cap={cap})"));
                }
                Ok(())
            }
            AlphaSchedule::Sigmoid2 { a, b } => {
                if !(a.is_finite() && *a > 0.0 && b.is_finite() && *b > 0.0) {
                    return bad(format!("sigmoid2 needs a > 0 and b > 0 (got a={a}, b={b})"));
                }
                Ok(())
            }
            AlphaSchedule::Table(points) => {
                if points.first().map(|p| p.0) != Some(0) {
                    return bad("alpha table must start at step 0".into());
                }
                if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return bad("alpha table steps must be strictly increasing".into());
                }
                points.iter().try_for_each(|&(_, a)| Repellence::new(a).map(|_| ()))
            }
        }
    }

    /// Short identifier used in output tables.
    pub fn label(&self) -> String {
        match self {
            AlphaSchedule::Constant(a) => format!("{a}"),
            AlphaSchedule::Sigmoid1 { a, b, cap } => format!("sigmoid1({a},{b},{cap})"),
            AlphaSchedule::Sigmoid2 { a, b } => format!("sigmoid2({a},{b})"),
            AlphaSchedule::Table(points) => {
                let body: Vec<String> = points.iter().map(|(n, a)| format!("{n}:{a}")).collect();
                format!("table({})", body.join(";"))
            }
        }
    }
}

/// Where the iterate goes after leaving the active compact set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RestartPolicy {
    /// Back to the initial measure.
    #[default]
    ReuseInitial,
    /// A fresh flat-Dirichlet draw, mixed toward uniform until it lies in the first set.
    Dirichlet,
}

/// Expanding sets `K_k = {x : 1/(k+M) <= x_i <= 1 - 1/(k+M)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub m: f64,
    pub restart: RestartPolicy,
}

impl Truncation {
    pub fn new(m: f64, restart: RestartPolicy) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Config(format!("truncation M must be positive, got {m}")));
        }
        Ok(Self { m, restart })
    }

    /// Lower and upper coordinate bounds of `K_kappa`.
    pub fn bounds(&self, kappa: u64) -> (f64, f64) {
        let lo = 1.0 / (kappa as f64 + self.m);
        (lo, 1.0 - lo)
    }

    pub fn contains(&self, x: &[f64], kappa: u64) -> bool {
        let (lo, hi) = self.bounds(kappa);
        x.iter().all(|&v| v >= lo && v <= hi)
    }
}

/// State of one walk.
#[derive(Debug, Clone)]
pub struct RunState {
    node: usize,
    start_node: usize,
    measure: EmpiricalMeasure,
    restart_x: Vec<f64>,
    t0: f64,
    n: u64,
    sigma: u64,
    kappa: u64,
    nu: u64,
    min_count: f64,
    max_count: f64,
    weights: Vec<f64>,
}

/// Result of one transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// Node drawn from the kernel.
    pub visited: usize,
    /// The half-step left the active set and the state was restarted.
    pub truncated: bool,
}

impl RunState {
    pub fn new(start_node: usize, measure: EmpiricalMeasure) -> Self {
        let restart_x = measure.x();
        let t0 = measure.total();
        let mut state = Self {
            node: start_node,
            start_node,
            measure,
            restart_x,
            t0,
            n: 0,
            sigma: 0,
            kappa: 0,
            nu: 0,
            min_count: 0.0,
            max_count: 0.0,
            weights: Vec::new(),
        };
        state.refresh_extremes();
        state
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn measure(&self) -> &EmpiricalMeasure {
        &self.measure
    }

    pub fn steps(&self) -> u64 {
        self.n
    }

    /// `(sigma, kappa, nu)`: step-size index, active-set index, steps since the last restart.
    pub fn counters(&self) -> (u64, u64, u64) {
        (self.sigma, self.kappa, self.nu)
    }

    fn refresh_extremes(&mut self) {
        let c = self.measure.counts();
        self.min_count = c.iter().copied().fold(f64::INFINITY, f64::min);
        self.max_count = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }

    #[inline]
    fn draw(&mut self, k: &ReversibleKernel, alpha: f64, u: f64) -> usize {
        let (cols, probs) = k.row(self.node);
        let mu = k.mu();
        let counts = &self.measure.counts;
        let total = row_weights(cols, probs, alpha, |j| counts[j] / mu[j], &mut self.weights);
        sample_weighted(cols, &self.weights, total, u)
    }

    /// Plain update: move, then add one visit.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, k: &ReversibleKernel, alpha: f64, rng: &mut R) -> StepOutcome {
        let u: f64 = rng.random();
        let next = self.draw(k, alpha, u);
        self.measure.increment(next);
        self.node = next;
        self.n += 1;
        self.sigma += 1;
        self.nu += 1;
        StepOutcome { visited: next, truncated: false }
    }

    /// Update with projection onto the expanding compact sets.
    ///
    /// On leaving `K_kappa` the measure restarts per the policy with step-size
    /// index `sigma + 1 - nu`, `kappa` advances, and the walker returns to its
    /// initial node.
    pub fn step_truncated<R: Rng + ?Sized>(
        &mut self,
        k: &ReversibleKernel,
        alpha: f64,
        fam: &Truncation,
        rng: &mut R,
    ) -> StepOutcome {
        let u: f64 = rng.random();
        let next = self.draw(k, alpha, u);
        let old = self.measure.counts[next];
        self.measure.increment(next);
        self.max_count = self.max_count.max(old + 1.0);
        if old == self.min_count {
            self.min_count = self.measure.counts.iter().copied().fold(f64::INFINITY, f64::min);
        }
        self.n += 1;
        let (lo, hi) = fam.bounds(self.kappa);
        let t = self.measure.total;
        if self.min_count / t >= lo && self.max_count / t <= hi {
            self.sigma += 1;
            self.nu += 1;
            self.node = next;
            return StepOutcome { visited: next, truncated: false };
        }
        self.sigma = self.sigma + 1 - self.nu;
        self.kappa += 1;
        self.nu = 0;
        if fam.restart == RestartPolicy::Dirichlet {
            self.restart_x = dirichlet_in_first_set(self.measure.len(), fam, rng);
        }
        let total = self.t0 + self.sigma as f64;
        self.measure.reset_to(&self.restart_x, total);
        self.refresh_extremes();
        self.node = self.start_node;
        StepOutcome { visited: next, truncated: true }
    }
}

/// Flat Dirichlet draw mixed with the uniform point just enough to satisfy the bounds of `K_0`.
fn dirichlet_in_first_set<R: Rng + ?Sized>(n: usize, fam: &Truncation, rng: &mut R) -> Vec<f64> {
    let mut y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = y.iter().sum();
    y.iter_mut().for_each(|v| *v /= s);
    let (lo, hi) = fam.bounds(0);
    let u = 1.0 / n as f64;
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut theta: f64 = 0.0;
    if ymin < lo {
        theta = theta.max((lo - ymin) / (u - ymin));
    }
    if ymax > hi {
        theta = theta.max((ymax - hi) / (ymax - u));
    }
    let theta = (theta * (1.0 + 1e-9)).min(1.0);
    y.iter().map(|v| (1.0 - theta) * v + theta * u).collect()
}

/// Initial node of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartNode {
    /// Uniform over nodes, drawn from the run's generator before the first step.
    #[default]
    Random,
    Fixed(usize),
}

/// Everything needed to reproduce a run apart from its seed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kernel: Arc<ReversibleKernel>,
    /// Observable `g`, one value per node.
    pub observable: Arc<[f64]>,
    pub initial: EmpiricalMeasure,
    pub schedule: AlphaSchedule,
    pub horizon: u64,
    /// Steps at which the state is recorded; 0 and `horizon` are always added.
    pub checkpoints: Vec<u64>,
    pub start: StartNode,
    pub truncation: Option<Truncation>,
    /// Keep the full measure at every checkpoint.
    pub record_measure: bool,
}

impl RunConfig {
    /// Constant-free defaults: random start, no truncation, geometric checkpoints.
    pub fn new(
        kernel: Arc<ReversibleKernel>,
        observable: Arc<[f64]>,
        initial: EmpiricalMeasure,
        schedule: AlphaSchedule,
        horizon: u64,
    ) -> Self {
        Self {
            kernel,
            observable,
            initial,
            schedule,
            horizon,
            checkpoints: geometric_checkpoints(horizon, 1.2),
            start: StartNode::Random,
            truncation: None,
            record_measure: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kernel.n();
        if self.initial.len() != n {
            return Err(Error::Config(format!("initial measure has {} entries for {n} states", self.initial.len())));
        }
        if self.observable.len() != n {
            return Err(Error::Config(format!("observable has {} entries for {n} states", self.observable.len())));
        }
        if let Some(i) = self.observable.iter().position(|g| !g.is_finite()) {
            return Err(Error::Config(format!("observable entry {i} is not finite")));
        }
        if let StartNode::Fixed(i) = self.start {
            if i >= n {
                return Err(Error::NodeOutOfRange { node: i, node_count: n });
            }
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c > self.horizon) {
            return Err(Error::Config(format!("checkpoint {c} beyond horizon {}", self.horizon)));
        }
        self.schedule.validate()?;
        if let Some(fam) = &self.truncation {
            Truncation::new(fam.m, fam.restart)?;
            let (lo, hi) = fam.bounds(0);
            let slack = 1e-12;
            if self.initial.x().iter().any(|&v| v < lo * (1.0 - slack) || v > hi * (1.0 + slack)) {
                return Err(Error::Config(format!(
                    "initial measure lies outside the first truncation set [{lo}, {hi}]"
                )));
            }
            let u = 1.0 / n as f64;
            if fam.restart == RestartPolicy::Dirichlet && !(u >= lo && u <= hi) {
                return Err(Error::Config(format!("no restart point exists for M = {} on {n} states", fam.m)));
            }
        }
        Ok(())
    }

    fn sorted_checkpoints(&self) -> Vec<u64> {
        let mut c = self.checkpoints.clone();
        c.push(0);
        c.push(self.horizon);
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// `0`, rounded powers of `ratio` up to `horizon`, and `horizon` itself.
pub fn geometric_checkpoints(horizon: u64, ratio: f64) -> Vec<u64> {
    let mut out = vec![0];
    let mut v = 1.0f64;
    while v <= horizon as f64 {
        let c = v.round() as u64;
        if c > *out.last().unwrap() {
            out.push(c);
        }
        v *= ratio.max(1.0 + 1e-9);
    }
    if *out.last().unwrap() != horizon {
        out.push(horizon);
    }
    out
}

/// Snapshot of a run at step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub n: u64,
    /// TVD between the measure (fake visits included) and the target.
    pub tvd: f64,
    /// TVD of the visit histogram alone; absent before the first step.
    pub tvd_visits: Option<f64>,
    pub psi: Option<f64>,
    pub psi_hat: Option<f64>,
    pub measure: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationEvent {
    /// Step at which the iterate left the active set.
    pub n: u64,
    /// Active-set index after the restart.
    pub kappa: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub start_node: usize,
    pub checkpoints: Vec<Checkpoint>,
    pub truncations: Vec<TruncationEvent>,
    pub final_measure: Vec<f64>,
}

/// Runs one walk with a generator seeded from `seed`.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<RunRecord> {
    run_with_rng(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Generator for run `index` of an ensemble: stream `index` of the base seed.
pub fn run_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

pub fn run_with_rng<R: Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<RunRecord> {
    cfg.validate()?;
    let k = cfg.kernel.as_ref();
    let n_states = k.n();
    let mu = k.mu();
    let weights = importance_weights(mu)?;
    let g = &cfg.observable;
    let start_node = match cfg.start {
        StartNode::Random => rng.random_range(0..n_states),
        StartNode::Fixed(i) => i,
    };
    let mut state = RunState::new(start_node, cfg.initial.clone());
    let mut est = RunningEstimator::new();
    let mut visits = vec![0u64; n_states];
    let mut truncations = Vec::new();
    let marks = cfg.sorted_checkpoints();
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next_mark = 0;

    let snapshot = |state: &RunState, est: &RunningEstimator, visits: &[u64]| -> Result<Checkpoint> {
        let x = state.measure.x();
        let steps = state.n;
        let tvd_visits = if steps > 0 {
            let h: Vec<f64> = visits.iter().map(|&v| v as f64 / steps as f64).collect();
            Some(tvd(&h, mu)?)
        } else {
            None
        };
        Ok(Checkpoint {
            n: steps,
            tvd: tvd(&x, mu)?,
            tvd_visits,
            psi: est.psi().ok(),
            psi_hat: est.psi_reweighted().ok(),
            measure: cfg.record_measure.then_some(x),
        })
    };

    if marks[0] == 0 {
        checkpoints.push(snapshot(&state, &est, &visits)?);
        next_mark = 1;
    }
    while state.n < cfg.horizon {
        let alpha = cfg.schedule.alpha_at(state.n, n_states);
        let outcome = match &cfg.truncation {
            None => state.step(k, alpha, rng),
            Some(fam) => state.step_truncated(k, alpha, fam, rng),
        };
        let v = outcome.visited;
        visits[v] += 1;
        est.push(g[v], weights[v]);
        if outcome.truncated {
            truncations.push(TruncationEvent { n: state.n, kappa: state.kappa });
        }
        if next_mark < marks.len() && marks[next_mark] == state.n {
            checkpoints.push(snapshot(&state, &est, &visits)?);
            next_mark += 1;
        }
    }
    Ok(RunRecord { start_node, checkpoints, truncations, final_measure: state.measure.x() })
}

/// Ensemble aggregate at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub n: u64,
    pub mean_tvd: f64,
    pub tvd_se: f64,
    pub mean_tvd_visits: Option<f64>,
    /// Mean squared error of `psi` about `sum_i mu_i g_i`.
    pub mse: Option<f64>,
    pub mse_se: Option<f64>,
    pub psi_mean: Option<f64>,
    pub psi_hat_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TruncationSummary {
    pub runs_with_truncation: usize,
    pub total: u64,
    pub max_per_run: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub alpha_label: String,
    pub runs: usize,
    /// `sum_i mu_i g_i`, the limit of `psi`.
    pub truth: f64,
    pub rows: Vec<EnsembleRow>,
    pub truncation: TruncationSummary,
    /// Final measure of each run, in run order.
    pub final_measures: Vec<Vec<f64>>,
}

/// `runs` independent walks on `workers` threads, reduced in run order.
pub fn run_ensemble(cfg: &RunConfig, runs: usize, base_seed: u64, workers: usize) -> Result<EnsembleRecord> {
    if runs == 0 {
        return Err(Error::Config("ensemble needs at least one run".into()));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.clamp(1, runs))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| run_with_rng(cfg, &mut run_rng(base_seed, i)))
            .collect::<Result<_>>()
    })?;
    aggregate(cfg, records)
}

fn aggregate(cfg: &RunConfig, records: Vec<RunRecord>) -> Result<EnsembleRecord> {
    let mu = cfg.kernel.mu();
    let truth: f64 = mu.iter().zip(cfg.observable.iter()).map(|(m, g)| m * g).sum();
    let marks = records[0].checkpoints.len();
    let mut rows = Vec::with_capacity(marks);
    for c in 0..marks {
        let at: Vec<&Checkpoint> = records.iter().map(|r| &r.checkpoints[c]).collect();
        let tvds: Vec<f64> = at.iter().map(|p| p.tvd).collect();
        let (mean_tvd, tvd_se) = mean_and_se(&tvds)?;
        let collect = |f: fn(&Checkpoint) -> Option<f64>| -> Option<Vec<f64>> { at.iter().map(|p| f(p)).collect() };
        let mean = |v: Option<Vec<f64>>| -> Result<Option<f64>> { v.map(|v| mean_and_se(&v).map(|m| m.0)).transpose() };
        let (mse, mse_se) = match collect(|p| p.psi) {
            Some(psis) => {
                let sq: Vec<f64> = psis.iter().map(|p| (p - truth).powi(2)).collect();
                let (m, se) = mean_and_se(&sq)?;
                (Some(m), Some(se))
            }
            None => (None, None),
        };
        rows.push(EnsembleRow {
            n: at[0].n,
            mean_tvd,
            tvd_se,
            mean_tvd_visits: mean(collect(|p| p.tvd_visits))?,
            mse,
            mse_se,
            psi_mean: mean(collect(|p| p.psi))?,
            psi_hat_mean: mean(collect(|p| p.psi_hat))?,
        });
    }
    let per_run: Vec<u64> = records.iter().map(|r| r.truncations.len() as u64).collect();
    let truncation = TruncationSummary {
        runs_with_truncation: per_run.iter().filter(|&&c| c > 0).count(),
        total: per_run.iter().sum(),
        max_per_run: per_run.iter().copied().max().unwrap_or(0),
    };
    Ok(EnsembleRecord {
        alpha_label: cfg.schedule.label(),
        runs: records.len(),
        truth,
        rows,
        truncation,
        final_measures: records.into_iter().map(|r| r.final_measure).collect(),
    })
}
