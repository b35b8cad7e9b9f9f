//! Ground truth for tests: exact enumeration of the routing problem on tiny
//! instances, and finite lower levels given as explicit `(d, f)` sets.

use crate::alns::{self, AlnsParams};
use crate::model::{
    evaluate_objective, validate_solution, Instance, ModelError, Policy, SlAssignment, Solution, Visit, VisitKind,
    TIME_EPS,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_REQUESTS: usize = 6;
pub const MAX_VEHICLES: usize = 2;
/// Pickup, drop, collect and delivery per request.
const MAX_STOPS: usize = 4 * MAX_REQUESTS;

/// Relative tolerance under which two objective values count as tied.
pub const TIE_TOL: f64 = 1e-12;

const UPPER_BOUND_ITERATIONS: usize = 300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance too large for enumeration: {requests} requests, {vehicles} vehicles (limits {MAX_REQUESTS}, {MAX_VEHICLES})")]
    TooLarge { requests: usize, vehicles: usize },
    #[error("no feasible solution exists")]
    Infeasible,
    #[error("finite lower level: {0}")]
    InvalidSet(String),
    #[error("enumerated solution failed validation: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The feasible lower-level set projected to `(d, f)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteLowerLevel {
    alternatives: Vec<(f64, f64)>,
}

impl FiniteLowerLevel {
    pub fn new(alternatives: Vec<(f64, f64)>) -> Result<Self, OracleError> {
        if alternatives.is_empty() {
            return Err(OracleError::InvalidSet("no alternatives".into()));
        }
        for (i, &(d, f)) in alternatives.iter().enumerate() {
            if !(d >= 0.0 && f >= 0.0 && d.is_finite() && f.is_finite()) {
                return Err(OracleError::InvalidSet(format!(
                    "alternative {i} must be finite and non-negative"
                )));
            }
            if alternatives[..i].contains(&(d, f)) {
                return Err(OracleError::InvalidSet(format!("duplicate alternative ({d}, {f})")));
            }
        }
        Ok(Self { alternatives })
    }

    /// Two routing outcomes, (15, 20) and (20, 5), that swap under small policy changes.
    pub fn example1() -> Self {
        Self::new(vec![(15.0, 20.0), (20.0, 5.0)]).expect("valid")
    }

    pub fn alternatives(&self) -> &[(f64, f64)] {
        &self.alternatives
    }

    pub fn len(&self) -> usize {
        self.alternatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgminResult {
    pub index: usize,
    pub d: f64,
    pub f: f64,
    pub cost: f64,
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// The follower's choice: minimum objective, ties broken by smaller `d`, then
/// smaller `f`, then lower index.
pub fn finite_argmin(fll: &FiniteLowerLevel, policy: Policy, phi: f64) -> ArgminResult {
    let mut best: Option<ArgminResult> = None;
    for (index, &(d, f)) in fll.alternatives.iter().enumerate() {
        let cost = evaluate_objective(d, f, policy, phi);
        let cand = ArgminResult { index, d, f, cost };
        best = Some(match best {
            None => cand,
            Some(b) => {
                let wins = if tied(cost, b.cost) {
                    (d, f) < (b.d, b.f)
                } else {
                    cost < b.cost
                };
                if wins {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.expect("non-empty by construction")
}

/// A random set of `k` mutually non-dominated alternatives: `d` strictly
/// increasing, `f` strictly decreasing, all positive.
pub fn random_pareto_set(k: usize, rng: &mut impl Rng) -> FiniteLowerLevel {
    let mut d = rng.gen_range(5.0..50.0);
    let mut f = rng.gen_range(5.0..50.0) * k as f64;
    let mut alts = Vec::with_capacity(k);
    for _ in 0..k {
        alts.push((d, f));
        d += rng.gen_range(1.0..20.0);
        f -= rng.gen_range(0.5..f / k as f64);
        f = f.max(0.0);
    }
    alts.dedup_by(|a, b| a.1 == b.1);
    FiniteLowerLevel::new(alts).expect("strictly monotone")
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    Unset,
    Road,
    Sl(usize),
}

#[derive(Clone, Copy, Debug)]
struct ReqState {
    mode: Mode,
    dep: Option<usize>,
    picked: bool,
    dropped: bool,
    collected: bool,
    delivered: bool,
    collect_vehicle: usize,
}

impl ReqState {
    fn done(&self) -> bool {
        match self.mode {
            Mode::Unset => false,
            Mode::Road => self.delivered,
            Mode::Sl(_) => self.delivered && self.dropped,
        }
    }
}

#[derive(Clone, Copy)]
struct State {
    v: usize,
    pos: usize,
    time: f64,
    load: f64,
    dist: f64,
    flow: f64,
    n: usize,
    reqs: [ReqState; MAX_REQUESTS],
    /// Stops so far, tagged with their vehicle, in visiting order.
    path: [(usize, Visit); MAX_STOPS],
    len: usize,
}

impl State {
    fn reqs(&self) -> &[ReqState] {
        &self.reqs[..self.n]
    }

    /// Demand already booked on one departure.
    fn rail(&self, inst: &Instance, leg: usize, w: usize) -> f64 {
        self.reqs()
            .iter()
            .enumerate()
            .filter(|(_, q)| q.mode == Mode::Sl(leg) && q.dep == Some(w))
            .map(|(r, _)| inst.requests()[r].demand)
            .sum()
    }

    fn routes(&self, m: usize) -> Vec<Vec<Visit>> {
        let mut out = vec![Vec::new(); m];
        for &(v, x) in &self.path[..self.len] {
            out[v].push(x);
        }
        out
    }
}

struct Best {
    cost: f64,
    d: f64,
    f: f64,
    routes: Vec<Vec<Visit>>,
    modes: Vec<Option<SlAssignment>>,
}

struct Search<'a> {
    inst: &'a Instance,
    policy: Policy,
    wd: f64,
    wf: f64,
    metric: bool,
    /// Legs whose per-departure capacity could bind for some request subset.
    binding: Vec<bool>,
    best: Option<Best>,
    /// Cost of a known feasible solution; only used for pruning.
    upper: f64,
}

impl<'a> Search<'a> {
    fn bound(&self, st: &State) -> f64 {
        if !self.metric {
            return self.wd * st.dist + self.wf * st.flow;
        }
        let inst = self.inst;
        let depot = inst.vehicle_depot(st.v);
        let ret = inst.dist(st.pos, depot);
        // Pickups and deliveries are visited whatever the mode; each costs at
        // least a detour on this route or a round trip from a later depot.
        let mut extra: f64 = 0.0;
        for (r, q) in st.reqs().iter().enumerate() {
            let (p, d) = inst.request_pos(r);
            for (node, open) in [(p, !q.picked), (d, !q.delivered)] {
                if !open {
                    continue;
                }
                let mut c = inst.dist(st.pos, node) + inst.dist(node, depot) - ret;
                for u in st.v + 1..inst.n_vehicles() {
                    c = c.min(2.0 * inst.dist(inst.vehicle_depot(u), node));
                }
                extra = extra.max(c);
            }
        }
        self.wd * (st.dist + ret + extra) + self.wf * st.flow
    }

    fn pruned(&self, st: &State) -> bool {
        let c = self.best.as_ref().map_or(self.upper, |b| b.cost.min(self.upper));
        self.bound(st) > c + 1e-9 * c.abs().max(1.0)
    }

    fn leaf(&mut self, st: &State) {
        if !st.reqs().iter().all(ReqState::done) {
            return;
        }
        // Same summation order as Solution::assemble.
        let mut d = 0.0;
        let routes = st.routes(self.inst.n_vehicles());
        for (v, visits) in routes.iter().enumerate() {
            if visits.is_empty() {
                continue;
            }
            let depot = self.inst.vehicle_depot(v);
            let mut prev = depot;
            let mut route_d = 0.0;
            for x in visits {
                let a = self.assignment(&st.reqs[x.request]);
                let p = self.inst.visit_pos(*x, a);
                route_d += self.inst.dist(prev, p);
                prev = p;
            }
            route_d += self.inst.dist(prev, depot);
            d += route_d;
        }
        let modes: Vec<Option<SlAssignment>> = st.reqs().iter().map(|r| self.assignment(r)).collect();
        let f: f64 = modes
            .iter()
            .enumerate()
            .filter_map(|(r, a)| a.map(|a| self.inst.flow_cost(r, a.leg)))
            .sum();
        let cost = evaluate_objective(d, f, self.policy, self.inst.phi());
        let wins = match &self.best {
            None => true,
            Some(b) => (cost, d, f) < (b.cost, b.d, b.f),
        };
        if wins {
            self.best = Some(Best {
                cost,
                d,
                f,
                routes,
                modes,
            });
        }
    }

    fn assignment(&self, r: &ReqState) -> Option<SlAssignment> {
        match (r.mode, r.dep) {
            (Mode::Sl(leg), Some(departure)) => Some(SlAssignment { leg, departure }),
            _ => None,
        }
    }

    /// Moves to `node`, serving a stop with window `[e, l]`. Returns the
    /// service start, or `None` if the window is missed.
    fn travel(&self, st: &mut State, node: usize, e: f64, l: f64, s: f64) -> Option<f64> {
        let start = (st.time + self.inst.travel_time(st.pos, node)).max(e);
        if start > l + TIME_EPS {
            return None;
        }
        st.dist += self.inst.dist(st.pos, node);
        st.pos = node;
        st.time = start + s;
        Some(start)
    }

    /// On metric instances, every request on board must still reach its next
    /// stop in time.
    fn onboard_reachable(&self, st: &State) -> bool {
        if !self.metric {
            return true;
        }
        let h = self.inst.horizon();
        st.reqs().iter().enumerate().all(|(r, q)| {
            let req = &self.inst.requests()[r];
            let (_, dpos) = self.inst.request_pos(r);
            let target = match q.mode {
                Mode::Road if q.picked && !q.delivered => Some((dpos, req.tw_delivery.latest)),
                Mode::Sl(leg) if q.picked && !q.dropped => {
                    let from = self.inst.leg_pos(leg).0;
                    let l = match q.dep {
                        Some(w) => self.inst.legs()[leg].departures[w] - req.service_time,
                        None => h.latest,
                    };
                    Some((from, l))
                }
                Mode::Sl(_) if q.collected && !q.delivered => Some((dpos, req.tw_delivery.latest)),
                _ => None,
            };
            target.map_or(true, |(node, l)| {
                st.time + self.inst.travel_time(st.pos, node) <= l + TIME_EPS
            })
        })
    }

    fn push(&mut self, mut st: State, r: usize, kind: VisitKind) {
        st.path[st.len] = (st.v, Visit::new(r, kind));
        st.len += 1;
        st.load += self.inst.load_delta(Visit::new(r, kind));
        if st.load > self.inst.fleet().capacity + TIME_EPS {
            return;
        }
        if !self.onboard_reachable(&st) || self.pruned(&st) {
            return;
        }
        self.dfs(st);
    }

    fn dfs(&mut self, st: State) {
        let inst = self.inst;
        let h = inst.horizon();
        let n = inst.n_requests();
        let m = inst.n_vehicles();
        let depot = inst.vehicle_depot(st.v);

        // Close the current route.
        if st.load <= TIME_EPS {
            let back = st.time + inst.travel_time(st.pos, depot);
            if back <= h.latest + TIME_EPS {
                let mut next = st.clone();
                next.dist += inst.dist(st.pos, depot);
                if st.v + 1 == m {
                    self.leaf(&next);
                } else {
                    next.v += 1;
                    next.pos = inst.vehicle_depot(next.v);
                    next.time = h.earliest;
                    next.load = 0.0;
                    if !self.pruned(&next) {
                        self.dfs(next);
                    }
                }
            }
        }

        for r in 0..n {
            let q = st.reqs[r];
            let req = &inst.requests()[r];
            let (ppos, dpos) = inst.request_pos(r);
            let s = req.service_time;
            let demand = req.demand;
            match q.mode {
                Mode::Unset => {
                    // Pickup, road or any leg.
                    let mut base = st.clone();
                    if self
                        .travel(&mut base, ppos, req.tw_pickup.earliest, req.tw_pickup.latest, s)
                        .is_some()
                    {
                        for mode in std::iter::once(Mode::Road).chain((0..inst.legs().len()).map(Mode::Sl)) {
                            let mut next = base.clone();
                            next.reqs[r].mode = mode;
                            next.reqs[r].picked = true;
                            self.push(next, r, VisitKind::Pickup);
                        }
                    }
                    // Collect first; the pickup and drop follow on a later vehicle.
                    if st.v + 1 < m {
                        for leg in 0..inst.legs().len() {
                            self.collect_branches(&st, r, leg, None);
                        }
                    }
                }
                Mode::Road => {
                    if q.picked && !q.delivered {
                        let mut next = st.clone();
                        if self
                            .travel(&mut next, dpos, req.tw_delivery.earliest, req.tw_delivery.latest, s)
                            .is_some()
                        {
                            next.reqs[r].delivered = true;
                            self.push(next, r, VisitKind::Delivery);
                        }
                    }
                }
                Mode::Sl(leg) => {
                    let l = &inst.legs()[leg];
                    let (from, _) = inst.leg_pos(leg);
                    if q.picked && !q.dropped {
                        let mut next = st.clone();
                        let latest = q.dep.map_or(h.latest, |w| (l.departures[w] - s).min(h.latest));
                        let Some(start) = self.travel(&mut next, from, h.earliest, latest, s) else {
                            continue;
                        };
                        next.reqs[r].dropped = true;
                        if q.dep.is_some() {
                            self.push(next, r, VisitKind::Drop);
                            continue;
                        }
                        let ready = start + s;
                        let first = l.departures.partition_point(|&d| d + TIME_EPS < ready);
                        for w in first..l.departures.len() {
                            if st.rail(inst, leg, w) + demand > l.capacity_per_departure + TIME_EPS {
                                continue;
                            }
                            if l.departures[w] + l.travel_time > h.latest + TIME_EPS {
                                break;
                            }
                            let mut b = next.clone();
                            b.reqs[r].dep = Some(w);
                            b.flow += inst.flow_cost(r, leg);
                            self.push(b, r, VisitKind::Drop);
                            // Later departures only delay the collect unless capacity can bind.
                            if !self.binding[leg] {
                                break;
                            }
                        }
                    } else if q.dropped && !q.collected {
                        self.collect_branches(&st, r, leg, q.dep);
                    } else if q.collected && !q.delivered && q.collect_vehicle == st.v {
                        let mut next = st.clone();
                        if self
                            .travel(&mut next, dpos, req.tw_delivery.earliest, req.tw_delivery.latest, s)
                            .is_some()
                        {
                            next.reqs[r].delivered = true;
                            self.push(next, r, VisitKind::Delivery);
                        }
                    } else if q.collected && !q.picked && q.collect_vehicle < st.v {
                        let mut next = st.clone();
                        if self
                            .travel(&mut next, ppos, req.tw_pickup.earliest, req.tw_pickup.latest, s)
                            .is_some()
                        {
                            next.reqs[r].picked = true;
                            self.push(next, r, VisitKind::Pickup);
                        }
                    }
                }
            }
        }
    }

    /// Collect at the destination station; `dep` is known when the drop came
    /// first, otherwise every useful departure is branched.
    fn collect_branches(&mut self, st: &State, r: usize, leg: usize, dep: Option<usize>) {
        let inst = self.inst;
        let h = inst.horizon();
        let l = &inst.legs()[leg];
        let (_, to) = inst.leg_pos(leg);
        let req = &inst.requests()[r];
        let s = req.service_time;
        let demand = req.demand;
        let go = |this: &mut Self, w: usize, fresh: bool| {
            let mut next = st.clone();
            if this
                .travel(&mut next, to, l.departures[w] + l.travel_time, h.latest, s)
                .is_none()
            {
                return;
            }
            let q = &mut next.reqs[r];
            q.collected = true;
            q.collect_vehicle = st.v;
            if fresh {
                q.mode = Mode::Sl(leg);
                q.dep = Some(w);
                next.flow += inst.flow_cost(r, leg);
            }
            this.push(next, r, VisitKind::Collect);
        };
        if let Some(w) = dep {
            go(self, w, false);
            return;
        }
        let arrival = st.time + inst.travel_time(st.pos, to);
        // Without waiting, the latest such departure leaves the drop the most slack.
        let no_wait = l
            .departures
            .partition_point(|&d| d + l.travel_time <= arrival + TIME_EPS);
        let mut ws: Vec<usize> = Vec::new();
        if self.binding[leg] {
            ws.extend(0..no_wait);
        } else if no_wait > 0 {
            ws.push(no_wait - 1);
        }
        ws.extend(no_wait..l.departures.len());
        for w in ws {
            if st.rail(inst, leg, w) + demand > l.capacity_per_departure + TIME_EPS {
                continue;
            }
            if l.departures[w] + l.travel_time > h.latest + TIME_EPS {
                break;
            }
            go(self, w, true);
        }
    }
}

/// Cost of a short heuristic run, or infinity. A valid upper bound on the
/// optimum, so pruning against it never cuts an optimal leaf.
fn heuristic_upper_bound(inst: &Instance, policy: Policy) -> f64 {
    let params = AlnsParams {
        max_iterations: UPPER_BOUND_ITERATIONS,
        ..Default::default()
    };
    alns::solve(inst, policy, &params, None)
        .ok()
        .filter(|run| validate_solution(inst, &run.best_solution).is_ok_and(|r| r.is_feasible()))
        .map_or(f64::INFINITY, |run| run.best_cost)
}

/// Exact minimum of the forwarder objective over all routings, modal choices
/// and departures, for instances within the enumeration limits.
pub fn enumerate_optimal(inst: &Instance, policy: Policy) -> Result<Solution, OracleError> {
    enumerate(inst, policy, None)
}

/// Branch and bound, pruning against `upper` or a heuristic bound.
fn enumerate(inst: &Instance, policy: Policy, upper: Option<f64>) -> Result<Solution, OracleError> {
    policy.validate()?;
    let n = inst.n_requests();
    let m = inst.n_vehicles();
    if n > MAX_REQUESTS || m > MAX_VEHICLES {
        return Err(OracleError::TooLarge {
            requests: n,
            vehicles: m,
        });
    }
    if n == 0 {
        return Ok(Solution::empty(inst));
    }
    if m == 0 {
        return Err(OracleError::Infeasible);
    }
    let total: f64 = inst.requests().iter().map(|r| r.demand).sum();
    let binding = inst
        .legs()
        .iter()
        .map(|l| total > l.capacity_per_departure + TIME_EPS)
        .collect();
    let mut search = Search {
        inst,
        policy,
        wd: policy.distance_weight(inst.phi()),
        wf: policy.flow_weight(),
        metric: !inst.is_matrix_only(),
        binding,
        best: None,
        upper: upper.unwrap_or_else(|| heuristic_upper_bound(inst, policy)),
    };
    let h = inst.horizon();
    let start = State {
        v: 0,
        pos: inst.vehicle_depot(0),
        time: h.earliest,
        load: 0.0,
        dist: 0.0,
        flow: 0.0,
        n,
        reqs: [ReqState {
            mode: Mode::Unset,
            dep: None,
            picked: false,
            dropped: false,
            collected: false,
            delivered: false,
            collect_vehicle: 0,
        }; MAX_REQUESTS],
        path: [(0, Visit::new(0, VisitKind::Pickup)); MAX_STOPS],
        len: 0,
    };
    search.dfs(start);
    let best = search.best.ok_or(OracleError::Infeasible)?;
    let lists: Vec<(usize, Vec<Visit>)> = best
        .routes
        .into_iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .collect();
    let sol = Solution::assemble(inst, &lists, best.modes);
    let report = validate_solution(inst, &sol)?;
    if !report.is_feasible() {
        return Err(OracleError::Internal(format!("{:?}", report.violations)));
    }
    Ok(sol)
}

/// Distinct `(d, f)` outcomes of the exact follower across a policy grid.
pub fn project_finite(inst: &Instance, policy_grid: &[Policy]) -> Result<FiniteLowerLevel, OracleError> {
    let mut alts: Vec<(f64, f64)> = Vec::new();
    for &p in policy_grid {
        let sol = enumerate_optimal(inst, p)?;
        let pair = (sol.d, sol.f);
        if !alts.iter().any(|&(d, f)| tied(d, pair.0) && tied(f, pair.1)) {
            alts.push(pair);
        }
    }
    FiniteLowerLevel::new(alts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fleet, InstanceData, Node, NodeKind, Request, ScheduledLeg, TimeWindow};
    use rand::SeedableRng;

    #[test]
    fn example1_selections() {
        let fll = FiniteLowerLevel::example1();
        let a = finite_argmin(&fll, Policy::new(0.5, 2.0 / 3.0).unwrap(), 1.0);
        assert_eq!((a.index, a.d, a.f), (0, 15.0, 20.0));
        assert!((a.cost - 35.0).abs() < 1e-12);
        let b = finite_argmin(&fll, Policy::new(0.6, 0.15).unwrap(), 1.0);
        assert_eq!((b.index, b.d, b.f), (1, 20.0, 5.0));
    }

    #[test]
    fn singleton_and_ties() {
        let fll = FiniteLowerLevel::new(vec![(10.0, 10.0)]).unwrap();
        assert_eq!(finite_argmin(&fll, Policy::new(0.3, 4.0).unwrap(), 2.0).index, 0);
        // Equal cost under the base policy with phi = 1: smaller d wins.
        let fll = FiniteLowerLevel::new(vec![(12.0, 3.0), (10.0, 5.0)]).unwrap();
        assert_eq!(finite_argmin(&fll, Policy::BASE, 1.0).index, 1);
    }

    #[test]
    fn invalid_sets() {
        assert!(FiniteLowerLevel::new(vec![]).is_err());
        assert!(FiniteLowerLevel::new(vec![(1.0, 2.0), (1.0, 2.0)]).is_err());
        assert!(FiniteLowerLevel::new(vec![(-1.0, 2.0)]).is_err());
    }

    #[test]
    fn random_sets_are_non_dominated() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for k in 3..=8 {
            let s = random_pareto_set(k, &mut rng);
            for w in s.alternatives().windows(2) {
                assert!(w[0].0 < w[1].0 && w[0].1 > w[1].1, "{:?}", s);
            }
        }
    }

    fn node(id: usize, x: f64, y: f64, kind: NodeKind) -> Node {
        Node { id, x, y, kind }
    }

    fn one_request(legs: Vec<ScheduledLeg>, with_stations: bool) -> Instance {
        let mut nodes = vec![
            node(0, 0.0, 0.0, NodeKind::Depot),
            node(1, 3.0, 4.0, NodeKind::Pickup),
            node(2, 3.0, 0.0, NodeKind::Delivery),
        ];
        if with_stations {
            nodes.push(node(3, 3.0, 5.0, NodeKind::Station));
            nodes.push(node(4, 3.0, -1.0, NodeKind::Station));
        }
        Instance::new(InstanceData {
            nodes,
            requests: vec![Request {
                id: 0,
                pickup: 1,
                delivery: 2,
                demand: 1.0,
                tw_pickup: TimeWindow::new(0.0, 100.0),
                tw_delivery: TimeWindow::new(0.0, 100.0),
                service_time: 0.0,
            }],
            legs,
            fleet: Fleet {
                n_vehicles: 1,
                capacity: 5.0,
                speed: 1.0,
                depots: vec![],
            },
            phi: 1.0,
            horizon: [0.0, 200.0],
            dist_matrix: None,
        })
        .unwrap()
    }

    #[test]
    fn zero_requests_gives_empty_solution() {
        let mut data = one_request(vec![], false).into_data();
        data.requests.clear();
        let inst = Instance::new(data).unwrap();
        let sol = enumerate_optimal(&inst, Policy::BASE).unwrap();
        assert!(sol.routes.is_empty());
        assert_eq!(evaluate_objective(sol.d, sol.f, Policy::BASE, 1.0), 0.0);
    }

    #[test]
    fn single_route_cost() {
        // depot -> (3,4) -> (3,0) -> depot = 5 + 4 + 3.
        let inst = one_request(vec![], false);
        let p = Policy::new(0.0, 0.5).unwrap();
        let sol = enumerate_optimal(&inst, p).unwrap();
        assert_eq!(sol.d, 12.0);
        assert!((evaluate_objective(sol.d, sol.f, p, 1.0) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn guard_rails() {
        let mut data = one_request(vec![], false).into_data();
        data.fleet.n_vehicles = 3;
        let inst = Instance::new(data).unwrap();
        assert!(matches!(
            enumerate_optimal(&inst, Policy::BASE),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn single_vehicle_can_use_the_line() {
        // Pickup next to station 3, delivery next to station 4; the line is free
        // under full subsidy but the detour is longer than driving, so the
        // road wins. With a far-away delivery the line wins.
        let leg = ScheduledLeg {
            from_station: 3,
            to_station: 4,
            travel_time: 1.0,
            departures: vec![0.0, 10.0, 20.0],
            capacity_per_departure: 5.0,
            tariff: 1.0,
        };
        let inst = one_request(vec![leg], true);
        let sol = enumerate_optimal(&inst, Policy::FULL_SUBSIDY).unwrap();
        assert!(sol.sl_assignments[0].is_none());
        assert_eq!(sol.d, 12.0);
    }

    #[test]
    fn heuristic_bound_keeps_the_optimum() {
        use crate::instgen::{self, GenSpec};
        for seed in 0..6 {
            let spec = GenSpec {
                n_requests: 3,
                n_stations: 2,
                n_vehicles: Some(2),
                seed,
                ..Default::default()
            };
            let inst = instgen::generate(&spec).unwrap();
            for p in [Policy::BASE, Policy::FULL_SUBSIDY, Policy::new(0.5, 0.4).unwrap()] {
                let a = enumerate_optimal(&inst, p).unwrap();
                let b = enumerate(&inst, p, Some(f64::INFINITY)).unwrap();
                let (ca, cb) = (
                    evaluate_objective(a.d, a.f, p, inst.phi()),
                    evaluate_objective(b.d, b.f, p, inst.phi()),
                );
                assert!((ca - cb).abs() <= 1e-9 * cb.max(1.0), "seed {seed}: {ca} vs {cb}");
            }
        }
    }

    #[test]
    fn projection_without_legs_is_single_pair() {
        let inst = one_request(vec![], false);
        let grid = [Policy::BASE, Policy::FULL_SUBSIDY, Policy::new(0.5, 0.4).unwrap()];
        let fll = project_finite(&inst, &grid).unwrap();
        assert_eq!(fll.alternatives(), &[(12.0, 0.0)]);
        let fll = project_finite(&inst, &grid[..1]).unwrap();
        assert_eq!(fll.len(), 1);
    }
}
