//! Upper level: scenario aggregation, the full-subsidy closed form, bisection
//! tax search for partial subsidies, the budget/subsidy sweep, and the
//! executable proposition checks on finite lower levels.

use crate::alns::{self, AlnsError, AlnsParams};
use crate::model::{
    evaluate_objective, modal_shift, modal_shift_by_demand, realized_budget, Instance, ModelError, Policy, Solution,
};
use crate::oracle::{self, finite_argmin, FiniteLowerLevel, OracleError};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("budget {budget} exceeds the full-subsidy flow cost {f_full}; no feasible policy")]
    InfeasibleBudget { budget: f64, f_full: f64 },
    #[error("scenario {scenario}: lower level has no feasible solution")]
    ScenarioInfeasible { scenario: usize },
    #[error("scenario {scenario}: {message}")]
    Scenario { scenario: usize, message: String },
    #[error("bracket [{lo}, {hi}] does not change sign: gap {gap_lo} and {gap_hi}")]
    BracketSign { lo: f64, hi: f64, gap_lo: f64, gap_hi: f64 },
    #[error("invalid scenario set: {0}")]
    InvalidScenarios(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Instances sharing network and fleet, with resampled requests.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    instances: Vec<Instance>,
    seeds: Vec<u64>,
}

impl ScenarioSet {
    pub fn new(instances: Vec<Instance>, seeds: Vec<u64>) -> Result<Self, PolicyError> {
        if instances.is_empty() {
            return Err(PolicyError::InvalidScenarios("no scenarios".into()));
        }
        if instances.len() != seeds.len() {
            return Err(PolicyError::InvalidScenarios(format!(
                "{} instances but {} seeds",
                instances.len(),
                seeds.len()
            )));
        }
        let phi = instances[0].phi();
        if instances.iter().any(|i| i.phi() != phi) {
            return Err(PolicyError::InvalidScenarios("phi differs between scenarios".into()));
        }
        Ok(Self { instances, seeds })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn phi(&self) -> f64 {
        self.instances[0].phi()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Scenario `i` runs with seed `seeds[i]`, overriding `params.seed`.
    Alns(AlnsParams),
    Oracle,
}

/// The follower's answer for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub d: f64,
    pub f: f64,
    pub modal_shift: f64,
    pub modal_shift_demand: f64,
    pub vehicles: f64,
    pub max_load: f64,
    pub solution: Option<Solution>,
}

/// Anything that answers a policy with one follower response per scenario.
pub trait LowerLevel: Sync {
    fn n_scenarios(&self) -> usize;
    fn phi(&self) -> f64;
    fn respond(&self, scenario: usize, policy: Policy, warm: Option<&Solution>) -> Result<Response, PolicyError>;
}

/// Routing scenarios answered by ALNS or the exact oracle.
#[derive(Debug, Clone)]
pub struct Routing {
    pub scenarios: ScenarioSet,
    pub solver: Solver,
}

impl Routing {
    pub fn new(scenarios: ScenarioSet, solver: Solver) -> Self {
        Self { scenarios, solver }
    }
}

impl LowerLevel for Routing {
    fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    fn phi(&self) -> f64 {
        self.scenarios.phi()
    }

    fn respond(&self, scenario: usize, policy: Policy, warm: Option<&Solution>) -> Result<Response, PolicyError> {
        let inst = &self.scenarios.instances[scenario];
        let sol = match &self.solver {
            Solver::Alns(params) => {
                let params = AlnsParams {
                    seed: self.scenarios.seeds[scenario],
                    ..params.clone()
                };
                alns::solve(inst, policy, &params, warm)
                    .map(|run| run.best_solution)
                    .map_err(|e| match e {
                        AlnsError::Infeasible { .. } => PolicyError::ScenarioInfeasible { scenario },
                        e => PolicyError::Scenario {
                            scenario,
                            message: e.to_string(),
                        },
                    })?
            }
            Solver::Oracle => oracle::enumerate_optimal(inst, policy).map_err(|e| match e {
                OracleError::Infeasible => PolicyError::ScenarioInfeasible { scenario },
                e => PolicyError::Scenario {
                    scenario,
                    message: e.to_string(),
                },
            })?,
        };
        Ok(Response {
            d: sol.d,
            f: sol.f,
            modal_shift: modal_shift(&sol, inst),
            modal_shift_demand: modal_shift_by_demand(&sol, inst),
            vehicles: sol.n_vehicles_used() as f64,
            max_load: sol.max_load(),
            solution: Some(sol),
        })
    }
}

/// Finite `(d, f)` sets, one per scenario. Modal shift is reported as the
/// share of scenarios whose selection has `f > 0`.
#[derive(Debug, Clone)]
pub struct FiniteScenarios {
    pub sets: Vec<FiniteLowerLevel>,
    pub phi: f64,
}

impl LowerLevel for FiniteScenarios {
    fn n_scenarios(&self) -> usize {
        self.sets.len()
    }

    fn phi(&self) -> f64 {
        self.phi
    }

    fn respond(&self, scenario: usize, policy: Policy, _warm: Option<&Solution>) -> Result<Response, PolicyError> {
        let a = finite_argmin(&self.sets[scenario], policy, self.phi);
        let shift = if a.f > 0.0 { 1.0 } else { 0.0 };
        Ok(Response {
            d: a.d,
            f: a.f,
            modal_shift: shift,
            modal_shift_demand: shift,
            vehicles: 0.0,
            max_load: 0.0,
            solution: None,
        })
    }
}

/// Scenario means for one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub avg_d: f64,
    pub avg_f: f64,
    /// Forwarder cost of the mean `(d, f)`; equal to the mean cost since the
    /// objective is linear.
    pub avg_cost: f64,
    pub realized_budget: f64,
    pub modal_shift: f64,
    pub modal_shift_demand: f64,
    pub n_vehicles_used: f64,
    pub max_load: f64,
}

type Warm = Vec<Option<Solution>>;

fn evaluate_warm(
    ll: &dyn LowerLevel,
    policy: Policy,
    warm: Option<&Warm>,
) -> Result<(PolicyOutcome, Warm), PolicyError> {
    policy.validate()?;
    let n = ll.n_scenarios();
    if n == 0 {
        return Err(PolicyError::InvalidScenarios("no scenarios".into()));
    }
    let responses: Vec<Result<Response, PolicyError>> = (0..n)
        .into_par_iter()
        .map(|i| ll.respond(i, policy, warm.and_then(|w| w[i].as_ref())))
        .collect();
    let responses = responses.into_iter().collect::<Result<Vec<_>, _>>()?;
    let k = n as f64;
    let mean = |g: fn(&Response) -> f64| responses.iter().map(g).sum::<f64>() / k;
    let (avg_d, avg_f) = (mean(|r| r.d), mean(|r| r.f));
    let phi = ll.phi();
    let outcome = PolicyOutcome {
        policy,
        avg_d,
        avg_f,
        avg_cost: evaluate_objective(avg_d, avg_f, policy, phi),
        realized_budget: realized_budget(avg_d, avg_f, policy, phi),
        modal_shift: mean(|r| r.modal_shift),
        modal_shift_demand: mean(|r| r.modal_shift_demand),
        n_vehicles_used: mean(|r| r.vehicles),
        max_load: mean(|r| r.max_load),
    };
    Ok((outcome, responses.into_iter().map(|r| r.solution).collect()))
}

/// Solves every scenario under `policy` (in parallel) and averages.
pub fn evaluate_policy(ll: &dyn LowerLevel, policy: Policy) -> Result<PolicyOutcome, PolicyError> {
    evaluate_warm(ll, policy, None).map(|(o, _)| o)
}

/// Tax that meets budget `b` under full subsidy, given the full-subsidy means.
pub fn closed_form_tax(f_full: f64, d_full: f64, phi: f64, b: f64) -> Result<f64, PolicyError> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(PolicyError::InvalidConfig(format!(
            "budget {b} must be finite and >= 0"
        )));
    }
    if b > f_full + 1e-12 * f_full.max(1.0) {
        return Err(PolicyError::InfeasibleBudget { budget: b, f_full });
    }
    if d_full == 0.0 || phi == 0.0 {
        return Ok(0.0);
    }
    Ok(((f_full - b) / (phi * d_full)).max(0.0))
}

/// Full subsidy with the tax that balances budget `b`, and its outcome.
pub fn optimal_policy(ll: &dyn LowerLevel, b: f64) -> Result<(Policy, PolicyOutcome), PolicyError> {
    let (full, warm) = evaluate_warm(ll, Policy::FULL_SUBSIDY, None)?;
    optimal_from_full(ll, b, &full, &warm)
}

fn optimal_from_full(
    ll: &dyn LowerLevel,
    b: f64,
    full: &PolicyOutcome,
    warm: &Warm,
) -> Result<(Policy, PolicyOutcome), PolicyError> {
    let t = closed_form_tax(full.avg_f, full.avg_d, ll.phi(), b)?;
    let policy = Policy::new(1.0, t)?;
    let (outcome, _) = evaluate_warm(ll, policy, Some(warm))?;
    Ok((policy, outcome))
}

/// Realized budget minus `b` at `(s, t)`.
pub fn budget_gap(ll: &dyn LowerLevel, t: f64, s: f64, b: f64) -> Result<f64, PolicyError> {
    Ok(evaluate_policy(ll, Policy::new(s, t)?)?.realized_budget - b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BisectionConfig {
    pub bracket: [f64; 2],
    /// Budget tolerance; `None` means `1e-3 * max(1, B)`.
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self {
            bracket: [0.0, 5.0],
            epsilon: None,
            max_iterations: 40,
        }
    }
}

impl BisectionConfig {
    pub fn epsilon_for(&self, b: f64) -> f64 {
        self.epsilon.unwrap_or(1e-3 * b.max(1.0))
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let [lo, hi] = self.bracket;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(PolicyError::InvalidConfig(format!(
                "bracket [{lo}, {hi}] must satisfy 0 <= lo < hi"
            )));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return Err(PolicyError::InvalidConfig(format!("epsilon {e} must be > 0")));
            }
        }
        if self.max_iterations < 1 {
            return Err(PolicyError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub lo: f64,
    pub hi: f64,
    pub gap_lo: f64,
    pub gap_hi: f64,
    pub mid: f64,
    pub gap_mid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionResult {
    pub t: f64,
    pub outcome: PolicyOutcome,
    /// Midpoint evaluations.
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<BracketStep>,
}

/// Tax for subsidy `s` whose realized budget is within epsilon of `b`.
pub fn bisection_tax_search(
    ll: &dyn LowerLevel,
    s: f64,
    b: f64,
    cfg: &BisectionConfig,
) -> Result<BisectionResult, PolicyError> {
    bisect(ll, s, b, cfg, None).map(|(r, _)| r)
}

fn bisect(
    ll: &dyn LowerLevel,
    s: f64,
    b: f64,
    cfg: &BisectionConfig,
    warm: Option<&Warm>,
) -> Result<(BisectionResult, Warm), PolicyError> {
    cfg.validate()?;
    let eps = cfg.epsilon_for(b);
    let [mut lo, mut hi] = cfg.bracket;
    let (out_lo, warm) = evaluate_warm(ll, Policy::new(s, lo)?, warm)?;
    let mut gap_lo = out_lo.realized_budget - b;
    let done = |t, outcome, warm, iterations, trace| {
        Ok((
            BisectionResult {
                t,
                outcome,
                iterations,
                converged: true,
                trace,
            },
            warm,
        ))
    };
    if gap_lo.abs() <= eps {
        return done(lo, out_lo, warm, 0, Vec::new());
    }
    let (out_hi, mut warm) = evaluate_warm(ll, Policy::new(s, hi)?, Some(&warm))?;
    let mut gap_hi = out_hi.realized_budget - b;
    if gap_hi.abs() <= eps {
        return done(hi, out_hi, warm, 0, Vec::new());
    }
    if gap_lo.signum() == gap_hi.signum() {
        return Err(PolicyError::BracketSign { lo, hi, gap_lo, gap_hi });
    }
    let mut trace = Vec::new();
    let mut last = out_hi;
    let mut mid = hi;
    for n in 1..=cfg.max_iterations {
        mid = 0.5 * (lo + hi);
        let (out, w) = evaluate_warm(ll, Policy::new(s, mid)?, Some(&warm))?;
        warm = w;
        let gap_mid = out.realized_budget - b;
        trace.push(BracketStep {
            lo,
            hi,
            gap_lo,
            gap_hi,
            mid,
            gap_mid,
        });
        last = out;
        if gap_mid.abs() <= eps {
            return done(mid, out, warm, n, trace);
        }
        if gap_mid.signum() == gap_lo.signum() {
            lo = mid;
            gap_lo = gap_mid;
        } else {
            hi = mid;
            gap_hi = gap_mid;
        }
    }
    log::warn!(
        "bisection at s={s}, B={b} stopped after {} iterations",
        cfg.max_iterations
    );
    Ok((
        BisectionResult {
            t: mid,
            outcome: last,
            iterations: cfg.max_iterations,
            converged: false,
            trace,
        },
        warm,
    ))
}

/// One row of the budget/subsidy trade-off; also the CSV schema for outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub s: f64,
    pub t: f64,
    pub budget: f64,
    pub avg_d: f64,
    pub avg_f: f64,
    pub avg_cost: f64,
    pub realized_budget: f64,
    pub modal_shift: f64,
    pub n_vehicles: f64,
    pub max_load: f64,
}

impl FrontierPoint {
    pub fn from_outcome(budget: f64, o: &PolicyOutcome) -> Self {
        Self {
            s: o.policy.s,
            t: o.policy.t,
            budget,
            avg_d: o.avg_d,
            avg_f: o.avg_f,
            avg_cost: o.avg_cost,
            realized_budget: o.realized_budget,
            modal_shift: o.modal_shift,
            n_vehicles: o.n_vehicles_used,
            max_load: o.max_load,
        }
    }
}

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if points.is_empty() {
        w.write_record([
            "s",
            "t",
            "budget",
            "avg_d",
            "avg_f",
            "avg_cost",
            "realized_budget",
            "modal_shift",
            "n_vehicles",
            "max_load",
        ])?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedPoint {
    pub s: f64,
    pub budget: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub f_full: f64,
    pub d_full: f64,
    /// Ordered by budget level as given, then by ascending `s`.
    pub points: Vec<FrontierPoint>,
    pub omitted: Vec<OmittedPoint>,
}

/// Bisection tax (closed form at `s = 1`) for every budget level and subsidy.
/// Along increasing `s` each solve is warm-started from the previous level.
pub fn pareto_sweep(
    ll: &dyn LowerLevel,
    subsidy_grid: &[f64],
    budget_ratios: &[f64],
    cfg: &BisectionConfig,
) -> Result<Sweep, PolicyError> {
    if subsidy_grid.is_empty() || budget_ratios.is_empty() {
        return Err(PolicyError::InvalidConfig("sweep grids must be nonempty".into()));
    }
    cfg.validate()?;
    let mut grid = subsidy_grid.to_vec();
    if grid.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(PolicyError::InvalidConfig(
            "subsidy grid values must lie in [0, 1]".into(),
        ));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let (full, full_warm) = evaluate_warm(ll, Policy::FULL_SUBSIDY, None)?;
    let mut sweep = Sweep {
        f_full: full.avg_f,
        d_full: full.avg_d,
        points: Vec::new(),
        omitted: Vec::new(),
    };
    for &ratio in budget_ratios {
        let b = ratio * full.avg_f;
        let mut warm: Option<Warm> = None;
        for &s in &grid {
            let res = if s == 1.0 {
                optimal_from_full(ll, b, &full, &full_warm).map(|(_, o)| (o, true, None))
            } else {
                bisect(ll, s, b, cfg, warm.as_ref()).map(|(r, w)| (r.outcome, r.converged, Some(w)))
            };
            match res {
                Ok((o, true, w)) => {
                    sweep.points.push(FrontierPoint::from_outcome(b, &o));
                    if w.is_some() {
                        warm = w;
                    }
                }
                Ok((_, false, _)) => sweep.omitted.push(OmittedPoint {
                    s,
                    budget: b,
                    reason: "bisection did not converge".into(),
                }),
                Err(e @ (PolicyError::BracketSign { .. } | PolicyError::InfeasibleBudget { .. })) => {
                    sweep.omitted.push(OmittedPoint {
                        s,
                        budget: b,
                        reason: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(sweep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    P1,
    P2,
    P3,
    P4,
    P5,
    L1,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::P1,
        Property::P2,
        Property::P3,
        Property::P4,
        Property::P5,
        Property::L1,
    ];

    pub fn statement(self) -> &'static str {
        match self {
            Property::P1 => "d1 < d2 iff C1 > C2 at equal budget",
            Property::P2 => "t1 < t2 implies d1 >= d2 at equal budget",
            Property::P3 => "minimum feasible distance is non-increasing in s",
            Property::P4 => "full subsidy with closed-form tax minimizes distance",
            Property::P5 => "B + C is constant under full subsidy",
            Property::L1 => "d1 < d2 iff f1 > f2 across selections",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub property: Property,
    pub alternatives: Vec<(f64, f64)>,
    pub budgets: Vec<f64>,
    pub policies: Vec<Policy>,
    pub selections: Vec<(f64, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub trials: u64,
    /// Policy draws that fell back to the closed form after rejection sampling.
    pub fallbacks: u64,
    pub tallies: Vec<(Property, Tally)>,
    pub first_counterexample: Option<Counterexample>,
}

impl PropositionReport {
    fn new() -> Self {
        Self {
            tallies: Property::ALL.iter().map(|&p| (p, Tally::default())).collect(),
            ..Default::default()
        }
    }

    pub fn tally(&self, p: Property) -> Tally {
        self.tallies
            .iter()
            .find(|(q, _)| *q == p)
            .map(|(_, t)| *t)
            .unwrap_or_default()
    }

    pub fn violations(&self) -> u64 {
        self.tallies.iter().map(|(_, t)| t.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn merge(&mut self, other: &PropositionReport) {
        if self.tallies.is_empty() {
            *self = Self::new();
        }
        self.trials += other.trials;
        self.fallbacks += other.fallbacks;
        for (p, t) in &other.tallies {
            if let Some((_, mine)) = self.tallies.iter_mut().find(|(q, _)| q == p) {
                mine.checked += t.checked;
                mine.violations += t.violations;
            }
        }
        if self.first_counterexample.is_none() {
            self.first_counterexample = other.first_counterexample.clone();
        }
    }

    fn record(&mut self, p: Property, ok: bool, cx: impl FnOnce() -> Counterexample) {
        let t = &mut self
            .tallies
            .iter_mut()
            .find(|(q, _)| *q == p)
            .expect("all properties tallied")
            .1;
        t.checked += 1;
        if !ok {
            t.violations += 1;
            if self.first_counterexample.is_none() {
                self.first_counterexample = Some(cx());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub trials: usize,
    pub phi: f64,
    /// Subsidy used for the budget-transfer check; anything but 1 is a
    /// deliberate negative control.
    pub p5_subsidy: f64,
    /// Budgets per set for the monotone-distance check.
    pub p3_budgets: usize,
    /// Subsidy grid points for the monotone-distance check.
    pub p3_subsidy_points: usize,
    /// Tax grid resolution for the grid cross-check of the same property.
    pub p3_tax_resolution: f64,
    pub max_draws: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            phi: 1.0,
            p5_subsidy: 1.0,
            p3_budgets: 4,
            p3_subsidy_points: 101,
            p3_tax_resolution: 1e-3,
            max_draws: 50,
        }
    }
}

struct Checker<'a> {
    fll: &'a FiniteLowerLevel,
    phi: f64,
    tol: f64,
    d_full: f64,
    f_full: f64,
}

#[derive(Debug, Clone, Copy)]
struct Pick {
    policy: Policy,
    d: f64,
    f: f64,
    cost: f64,
}

impl<'a> Checker<'a> {
    fn select(&self, policy: Policy) -> Pick {
        let a = finite_argmin(self.fll, policy, self.phi);
        Pick {
            policy,
            d: a.d,
            f: a.f,
            cost: a.cost,
        }
    }

    /// Tax that makes alternative `i` spend exactly `b` at subsidy `s`.
    fn tax_for(&self, i: usize, s: f64, b: f64) -> Option<f64> {
        let (d, f) = self.fll.alternatives()[i];
        if d == 0.0 || self.phi == 0.0 {
            return None;
        }
        let t = (s * f - b) / (self.phi * d);
        (t >= 0.0 && t.is_finite()).then_some(t)
    }

    fn closed_form(&self, b: f64) -> Policy {
        let t = closed_form_tax(self.f_full, self.d_full, self.phi, b).unwrap_or(0.0);
        Policy { s: 1.0, t }
    }

    /// A policy whose own selection spends exactly `b`.
    fn draw(&self, b: f64, rng: &mut impl Rng, max_draws: usize, fallbacks: &mut u64) -> Pick {
        for _ in 0..max_draws {
            let s: f64 = rng.gen();
            let i = rng.gen_range(0..self.fll.len());
            if let Some(t) = self.tax_for(i, s, b) {
                let p = self.select(Policy { s, t });
                if p.d == self.fll.alternatives()[i].0 && p.f == self.fll.alternatives()[i].1 {
                    return p;
                }
            }
        }
        *fallbacks += 1;
        self.select(self.closed_form(b))
    }

    fn lt(&self, a: f64, b: f64) -> bool {
        a < b - self.tol
    }

    fn sign(&self, x: f64) -> i8 {
        if x > self.tol {
            1
        } else if x < -self.tol {
            -1
        } else {
            0
        }
    }

    /// Minimum distance over budget-feasible selections at `(s, b)`.
    fn min_feasible_d(&self, s: f64, b: f64) -> Option<f64> {
        let alts = self.fll.alternatives();
        (0..alts.len())
            .filter_map(|i| {
                let t = self.tax_for(i, s, b)?;
                let p = self.select(Policy { s, t });
                (p.d == alts[i].0 && p.f == alts[i].1).then_some(alts[i].0)
            })
            .reduce(f64::min)
    }

    /// Same, with taxes restricted to a grid of spacing `res`: a grid tax is
    /// accepted when its selection's budget is within one grid step of `b`.
    fn min_feasible_d_grid(&self, s: f64, b: f64, res: f64) -> Option<f64> {
        let alts = self.fll.alternatives();
        let mut best: Option<f64> = None;
        for i in 0..alts.len() {
            let Some(t) = self.tax_for(i, s, b) else { continue };
            let k = (t / res).floor();
            for t in [k * res, (k + 1.0) * res] {
                let p = self.select(Policy { s, t });
                let gap = realized_budget(p.d, p.f, p.policy, self.phi) - b;
                if gap.abs() <= self.phi * p.d * res + self.tol {
                    best = Some(best.map_or(p.d, |x| x.min(p.d)));
                }
            }
        }
        best
    }
}

/// Samples budget-feasible policy pairs on a finite lower level and checks
/// the distance, cost and budget-transfer properties on every trial.
pub fn verify_propositions(fll: &FiniteLowerLevel, cfg: &VerifyConfig, rng: &mut impl Rng) -> PropositionReport {
    let phi = cfg.phi;
    let full = finite_argmin(fll, Policy::FULL_SUBSIDY, phi);
    let scale = fll
        .alternatives()
        .iter()
        .map(|&(d, f)| (phi * d).max(f))
        .fold(1.0, f64::max);
    let ck = Checker {
        fll,
        phi,
        tol: 1e-9 * scale,
        d_full: full.d,
        f_full: full.f,
    };
    let mut rep = PropositionReport::new();
    let alts = fll.alternatives().to_vec();
    let budget = |rng: &mut _| -> f64 {
        if ck.d_full == 0.0 {
            ck.f_full
        } else {
            Rng::gen::<f64>(rng) * ck.f_full
        }
    };
    let cx = |p: Property, budgets: Vec<f64>, picks: &[Pick], detail: String| Counterexample {
        property: p,
        alternatives: alts.clone(),
        budgets,
        policies: picks.iter().map(|x| x.policy).collect(),
        selections: picks.iter().map(|x| (x.d, x.f)).collect(),
        detail,
    };

    for _ in 0..cfg.trials {
        rep.trials += 1;
        let b = budget(rng);
        let mut fb = 0;
        let p1 = ck.draw(b, rng, cfg.max_draws, &mut fb);
        let p2 = ck.draw(b, rng, cfg.max_draws, &mut fb);
        rep.fallbacks += fb;
        let c1 = p1.cost;
        let c2 = p2.cost;

        let ok = ck.sign(p2.d - p1.d) == ck.sign(c1 - c2);
        rep.record(Property::P1, ok, || {
            cx(Property::P1, vec![b], &[p1, p2], format!("C1={c1}, C2={c2}"))
        });

        let (lo, hi) = if p1.policy.t <= p2.policy.t { (p1, p2) } else { (p2, p1) };
        if ck.lt(lo.policy.t, hi.policy.t) || lo.policy.t < hi.policy.t {
            let ok = !ck.lt(lo.d, hi.d);
            rep.record(Property::P2, ok, || cx(Property::P2, vec![b], &[lo, hi], String::new()));
        }

        let ok = ck.sign(p2.d - p1.d) == ck.sign(p1.f - p2.f);
        rep.record(Property::L1, ok, || cx(Property::L1, vec![b], &[p1, p2], String::new()));

        let star = ck.select(ck.closed_form(b));
        let ok = !ck.lt(p1.d, star.d) && !ck.lt(p2.d, star.d);
        rep.record(Property::P4, ok, || {
            cx(
                Property::P4,
                vec![b],
                &[star, p1, p2],
                "closed form listed first".into(),
            )
        });

        let (mut b1, mut b2) = (budget(rng), budget(rng));
        if b1 > b2 {
            std::mem::swap(&mut b1, &mut b2);
        }
        let target = phi * ck.d_full + ck.f_full;
        let picks: Vec<Pick> = [b1, b2]
            .iter()
            .map(|&bb| {
                let t = ck.closed_form(bb).t;
                ck.select(Policy { s: cfg.p5_subsidy, t })
            })
            .collect();
        let sums: Vec<f64> = [b1, b2].iter().zip(&picks).map(|(bb, p)| bb + p.cost).collect();
        let ok = sums.iter().all(|&x| ck.sign(x - target) == 0);
        rep.record(Property::P5, ok, || {
            cx(
                Property::P5,
                vec![b1, b2],
                &picks,
                format!("B+C = {:?}, expected {target}", sums),
            )
        });
    }

    let m = cfg.p3_subsidy_points.max(2);
    for j in 0..cfg.p3_budgets {
        let b = if cfg.p3_budgets == 1 {
            0.0
        } else {
            ck.f_full * j as f64 / (cfg.p3_budgets - 1) as f64
        };
        for grid in [false, true] {
            let mut prev: Option<(f64, f64)> = None;
            for k in 0..m {
                let s = k as f64 / (m - 1) as f64;
                let d = if grid {
                    ck.min_feasible_d_grid(s, b, cfg.p3_tax_resolution)
                } else {
                    ck.min_feasible_d(s, b)
                };
                let Some(d) = d else { continue };
                if let Some((ps, pd)) = prev {
                    let ok = !ck.lt(pd, d);
                    rep.record(Property::P3, ok, || Counterexample {
                        property: Property::P3,
                        alternatives: alts.clone(),
                        budgets: vec![b],
                        policies: Vec::new(),
                        selections: Vec::new(),
                        detail: format!(
                            "{}: d*({ps}) = {pd} < d*({s}) = {d}",
                            if grid { "tax grid" } else { "exact" }
                        ),
                    });
                }
                prev = Some((s, d));
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed(d: f64, f: f64) -> FiniteScenarios {
        FiniteScenarios {
            sets: vec![FiniteLowerLevel::new(vec![(d, f)]).unwrap()],
            phi: 1.0,
        }
    }

    fn example1() -> FiniteScenarios {
        FiniteScenarios {
            sets: vec![FiniteLowerLevel::example1()],
            phi: 1.0,
        }
    }

    #[test]
    fn closed_form_examples() {
        assert!((closed_form_tax(40.0, 100.0, 1.0, 0.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(closed_form_tax(40.0, 100.0, 1.0, 40.0).unwrap(), 0.0);
        assert!(matches!(
            closed_form_tax(40.0, 100.0, 1.0, 41.0),
            Err(PolicyError::InfeasibleBudget { .. })
        ));
        assert_eq!(closed_form_tax(40.0, 0.0, 1.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn optimal_policy_on_fixed_routing() {
        let ll = fixed(100.0, 40.0);
        let (p, o) = optimal_policy(&ll, 10.0).unwrap();
        assert_eq!(p.s, 1.0);
        assert!((p.t - 0.3).abs() < 1e-15);
        assert!((o.realized_budget - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gap_is_linear_without_choice() {
        let ll = fixed(100.0, 40.0);
        for t in [0.0, 0.1, 0.3, 0.7] {
            let g = budget_gap(&ll, t, 1.0, 10.0).unwrap();
            assert!((g - (30.0 - 100.0 * t)).abs() < 1e-12);
        }
        assert!(budget_gap(&ll, 0.2, 0.0, 0.0).unwrap() < 0.0);
        let g = budget_gap(&example1(), 2.0 / 3.0, 0.5, 0.0).unwrap();
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn bisection_linear_root() {
        let cfg = BisectionConfig {
            bracket: [0.0, 1.0],
            epsilon: Some(1e-6),
            max_iterations: 40,
        };
        let r = bisection_tax_search(&fixed(100.0, 40.0), 1.0, 10.0, &cfg).unwrap();
        assert!(r.converged);
        assert!((r.t - 0.3).abs() < 1e-6);
        assert!(r.iterations <= 40);
        for st in &r.trace {
            assert!(st.gap_lo * st.gap_hi < 0.0);
        }
    }

    #[test]
    fn bisection_first_midpoint() {
        // gap(t) = 50 - 100 t, bracket [0, 1]: the first midpoint is the root.
        let cfg = BisectionConfig {
            bracket: [0.0, 1.0],
            epsilon: Some(1e-9),
            max_iterations: 40,
        };
        let r = bisection_tax_search(&fixed(100.0, 50.0), 1.0, 0.0, &cfg).unwrap();
        assert_eq!((r.t, r.iterations), (0.5, 1));
    }

    #[test]
    fn bisection_bracket_errors() {
        let cfg = BisectionConfig {
            bracket: [0.5, 1.0],
            ..Default::default()
        };
        assert!(matches!(
            bisection_tax_search(&fixed(100.0, 40.0), 1.0, 10.0, &cfg),
            Err(PolicyError::BracketSign { .. })
        ));
        let bad = BisectionConfig {
            bracket: [1.0, 1.0],
            ..Default::default()
        };
        assert!(bisection_tax_search(&fixed(100.0, 40.0), 1.0, 10.0, &bad).is_err());
    }

    #[test]
    fn bisection_non_convergence_is_flagged() {
        let cfg = BisectionConfig {
            bracket: [0.0, 1.0],
            epsilon: Some(1e-300),
            max_iterations: 3,
        };
        let r = bisection_tax_search(&fixed(100.0, 40.0), 1.0, 10.0, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn bisection_example1() {
        // Independent scan: finite_argmin on a 1e-4 tax grid. Genuine roots
        // keep the same selection on both sides of the sign change.
        let fll = FiniteLowerLevel::example1();
        let mut roots = Vec::new();
        let mut prev: Option<(f64, f64, (f64, f64))> = None;
        for k in 0..=20000 {
            let t = k as f64 * 1e-4;
            let a = finite_argmin(&fll, Policy { s: 0.5, t }, 1.0);
            let g = 0.5 * a.f - t * a.d;
            if let Some((pt, pg, psel)) = prev {
                if pg > 0.0 && g <= 0.0 && psel == (a.d, a.f) {
                    roots.push((pt, t, psel));
                }
            }
            prev = Some((t, g, (a.d, a.f)));
        }
        assert_eq!(roots.len(), 2);
        let cfg = BisectionConfig {
            bracket: [0.0, 2.0],
            ..Default::default()
        };
        let r = bisection_tax_search(&example1(), 0.5, 0.0, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.outcome.realized_budget.abs() <= 1e-3);
        assert_eq!((r.outcome.avg_d, r.outcome.avg_f), (15.0, 20.0));
        let &(lo, hi, _) = roots.iter().find(|x| x.2 == (15.0, 20.0)).unwrap();
        assert!(r.t >= lo - 1e-3 && r.t <= hi + 1e-3, "{} vs [{lo}, {hi}]", r.t);
    }

    #[test]
    fn averaging() {
        let one = FiniteScenarios {
            sets: vec![FiniteLowerLevel::example1()],
            phi: 1.0,
        };
        let two = FiniteScenarios {
            sets: vec![FiniteLowerLevel::example1(), FiniteLowerLevel::example1()],
            phi: 1.0,
        };
        let p = Policy::new(0.3, 0.2).unwrap();
        assert_eq!(evaluate_policy(&one, p).unwrap(), evaluate_policy(&two, p).unwrap());
        let mixed = FiniteScenarios {
            sets: vec![
                FiniteLowerLevel::new(vec![(10.0, 2.0)]).unwrap(),
                FiniteLowerLevel::new(vec![(30.0, 4.0)]).unwrap(),
            ],
            phi: 2.0,
        };
        let o = evaluate_policy(&mixed, Policy::new(0.5, 0.1).unwrap()).unwrap();
        assert_eq!((o.avg_d, o.avg_f), (20.0, 3.0));
        assert!((o.realized_budget - (1.5 - 0.1 * 2.0 * 20.0)).abs() < 1e-12);
    }

    #[test]
    fn sweep_on_finite_set() {
        let ll = FiniteScenarios {
            sets: vec![FiniteLowerLevel::new(vec![(10.0, 30.0), (14.0, 18.0), (20.0, 9.0), (27.0, 1.0)]).unwrap()],
            phi: 1.0,
        };
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let cfg = BisectionConfig {
            epsilon: Some(1e-9),
            ..Default::default()
        };
        let sw = pareto_sweep(&ll, &grid, &[0.0, 0.25, 0.5], &cfg).unwrap();
        assert!(sw.points.len() + sw.omitted.len() == 33);
        let zero = sw.points.iter().find(|p| p.s == 0.0 && p.budget == 0.0).unwrap();
        assert_eq!((zero.t, zero.avg_d), (0.0, 27.0));
        for &ratio in &[0.0, 0.25, 0.5] {
            let b = ratio * sw.f_full;
            let (pol, o) = optimal_policy(&ll, b).unwrap();
            let last = sw.points.iter().find(|p| p.s == 1.0 && p.budget == b).unwrap();
            assert_eq!((last.t, last.avg_d), (pol.t, o.avg_d));
        }
        let mut csv = Vec::new();
        write_frontier_csv(&sw.points, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("s,t,budget,avg_d,avg_f,avg_cost,realized_budget,modal_shift,n_vehicles,max_load\n"));
    }

    #[test]
    fn example1_propositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = VerifyConfig {
            trials: 10_000,
            ..Default::default()
        };
        let rep = verify_propositions(&FiniteLowerLevel::example1(), &cfg, &mut rng);
        assert!(rep.passed(), "{:?}", rep.first_counterexample);
        for p in Property::ALL {
            assert!(rep.tally(p).checked > 0, "{p} never checked");
        }
    }

    #[test]
    fn singleton_propositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fll = FiniteLowerLevel::new(vec![(10.0, 10.0)]).unwrap();
        let rep = verify_propositions(&fll, &VerifyConfig::default(), &mut rng);
        assert!(rep.passed(), "{:?}", rep.first_counterexample);
    }

    #[test]
    fn mutated_transfer_check_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = VerifyConfig {
            trials: 100,
            p5_subsidy: 0.9,
            ..Default::default()
        };
        let rep = verify_propositions(&FiniteLowerLevel::example1(), &cfg, &mut rng);
        assert!(rep.tally(Property::P5).violations > 0);
        assert_eq!(rep.first_counterexample.unwrap().property, Property::P5);
    }

    #[test]
    fn random_sets_propositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let fll = oracle::random_pareto_set(5, &mut rng);
            let rep = verify_propositions(&fll, &VerifyConfig::default(), &mut rng);
            assert!(rep.passed(), "{:?}", rep.first_counterexample);
        }
    }
}
