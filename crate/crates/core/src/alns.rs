//! Adaptive Large Neighborhood Search for the pickup-and-delivery problem with
//! scheduled-line transshipment.
//!
//! A request is served either directly (pickup then delivery on one vehicle)
//! or split into two halves around one scheduled leg: pickup then drop at the
//! origin station, and collect at the destination station then delivery. The
//! two halves may ride different vehicles. Once a departure is fixed, the drop
//! and collect stops carry ordinary time windows (`[h0, dep - service]` and
//! `[dep + travel, h1]`), so every route can be checked on its own.
//!
//! Routes cache earliest service starts, latest feasible starts and loads, so
//! a pair insertion is tested in O(1) per position pair.

use crate::model::{
    evaluate_objective, validate_solution, Instance, ModelError, Policy, SlAssignment, Solution, Visit, VisitKind,
    TIME_EPS,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

const EPS: f64 = TIME_EPS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlnsError {
    #[error("no feasible construction; requests {requests:?} could not be served")]
    Infeasible { requests: Vec<usize> },
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("accepted solution failed validation at iteration {iteration}: {detail}")]
    InvariantBroken { iteration: usize, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlnsParams {
    pub max_iterations: usize,
    /// Iterations between adaptive weight updates.
    pub segment_length: usize,
    pub reaction_factor: f64,
    /// Scores for a new global best, an improvement of the current solution,
    /// and an accepted non-improving solution.
    pub scores: [f64; 3],
    pub start_temperature_ratio: f64,
    pub cooling_rate: f64,
    pub removal_fraction_range: [f64; 2],
    pub seed: u64,
    /// Record one trace row per iteration.
    pub trace: bool,
    /// Validate every accepted solution; slow, meant for tests.
    pub check_invariants: bool,
}

impl Default for AlnsParams {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            segment_length: 100,
            reaction_factor: 0.1,
            scores: [33.0, 9.0, 13.0],
            start_temperature_ratio: 0.05,
            cooling_rate: 0.999,
            removal_fraction_range: [0.1, 0.4],
            seed: 0,
            trace: false,
            check_invariants: false,
        }
    }
}

impl AlnsParams {
    pub fn validate(&self) -> Result<(), AlnsError> {
        let bad = |m: &str| Err(AlnsError::InvalidParams(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1");
        }
        if self.segment_length < 1 {
            return bad("segment_length must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.reaction_factor) {
            return bad("reaction_factor must lie in [0, 1]");
        }
        if self.scores.iter().any(|s| !(*s >= 0.0)) {
            return bad("scores must be non-negative");
        }
        if !(self.start_temperature_ratio >= 0.0) {
            return bad("start_temperature_ratio must be non-negative");
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return bad("cooling_rate must lie in (0, 1)");
        }
        let [lo, hi] = self.removal_fraction_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("removal_fraction_range must satisfy 0 <= min <= max <= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub current_cost: f64,
    pub best_cost: f64,
    pub operator_id: String,
    pub accepted: bool,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverRun {
    pub best_solution: Solution,
    pub best_cost: f64,
    pub iterations_run: usize,
    pub trace: Option<Vec<TraceRow>>,
}

pub const DESTROY_OPERATORS: [&str; 5] = ["random", "worst", "related", "sl", "route"];
pub const REPAIR_OPERATORS: [&str; 7] = [
    "greedy",
    "regret2",
    "greedy-noise",
    "regret2-noise",
    "greedy-road",
    "random-order",
    "random-order-road",
];

#[derive(Clone, Copy, Debug)]
struct RepairMode {
    regret: bool,
    allow_sl: bool,
    noise: bool,
    random_order: bool,
}

const fn mode(regret: bool, allow_sl: bool, noise: bool, random_order: bool) -> RepairMode {
    RepairMode {
        regret,
        allow_sl,
        noise,
        random_order,
    }
}

/// Indexed like `REPAIR_OPERATORS`.
const REPAIR_MODES: [RepairMode; 7] = [
    mode(false, true, false, false),
    mode(true, true, false, false),
    mode(false, true, true, false),
    mode(true, true, true, false),
    mode(false, false, false, false),
    mode(false, true, false, true),
    mode(false, false, false, true),
];

/// Relative amplitude of the insertion-cost noise, as a fraction of the
/// largest arc cost.
const NOISE_RATIO: f64 = 0.25;

/// Random perturbation of insertion costs, so repeated repairs of the same
/// partial solution can end up in different routes.
struct Noise {
    rng: ChaCha8Rng,
    amp: f64,
}

impl Noise {
    fn jitter(&mut self, c: f64) -> f64 {
        c + self.amp * self.rng.gen_range(-1.0..=1.0)
    }
}

#[derive(Clone, Copy, Debug)]
struct Weights {
    wd: f64,
    wf: f64,
}

impl Weights {
    fn new(inst: &Instance, policy: Policy) -> Self {
        Self {
            wd: policy.distance_weight(inst.phi()),
            wf: policy.flow_weight(),
        }
    }
}

/// One vehicle's visit sequence with schedule caches.
#[derive(Debug, Clone, Default)]
struct RouteState {
    depot: usize,
    visits: Vec<Visit>,
    pos: Vec<usize>,
    win: Vec<(f64, f64)>,
    svc: Vec<f64>,
    early: Vec<f64>,
    lat: Vec<f64>,
    load: Vec<f64>,
    dist: f64,
    feasible: bool,
}

impl RouteState {
    fn refresh(&mut self, inst: &Instance, modes: &[Option<SlAssignment>], over: Option<(usize, SlAssignment)>) {
        let h = inst.horizon();
        let cap = inst.fleet().capacity;
        let n = self.visits.len();
        self.pos.clear();
        self.win.clear();
        self.svc.clear();
        self.early.clear();
        self.load.clear();
        self.lat.clear();
        self.lat.resize(n, 0.0);
        let mut prev = self.depot;
        let mut t = h.earliest;
        let mut load = 0.0;
        let mut dist = 0.0;
        let mut ok = true;
        for &v in &self.visits {
            let a = match over {
                Some((r, a)) if r == v.request => Some(a),
                _ => modes[v.request],
            };
            let p = inst.visit_pos(v, a);
            let w = inst.visit_window(v, a);
            let s = inst.service_time(v.request);
            dist += inst.dist(prev, p);
            let st = (t + inst.travel_time(prev, p)).max(w.earliest);
            if st > w.latest + EPS {
                ok = false;
            }
            load += inst.load_delta(v);
            if load > cap + EPS || load < -EPS {
                ok = false;
            }
            self.pos.push(p);
            self.win.push((w.earliest, w.latest));
            self.svc.push(s);
            self.early.push(st);
            self.load.push(load);
            t = st + s;
            prev = p;
        }
        if n > 0 {
            dist += inst.dist(prev, self.depot);
            if t + inst.travel_time(prev, self.depot) > h.latest + EPS {
                ok = false;
            }
        }
        let mut next_lat = h.latest;
        let mut next_pos = self.depot;
        for k in (0..n).rev() {
            let l = self.win[k]
                .1
                .min(next_lat - self.svc[k] - inst.travel_time(self.pos[k], next_pos));
            self.lat[k] = l;
            next_lat = l;
            next_pos = self.pos[k];
        }
        self.dist = dist;
        self.feasible = ok;
    }

    fn prev_state(&self, i: usize, h0: f64) -> (usize, f64, f64) {
        if i == 0 {
            (self.depot, h0, 0.0)
        } else {
            (self.pos[i - 1], self.early[i - 1] + self.svc[i - 1], self.load[i - 1])
        }
    }

    fn next_state(&self, j: usize, h1: f64) -> (usize, f64) {
        if j < self.visits.len() {
            (self.pos[j], self.lat[j])
        } else {
            (self.depot, h1)
        }
    }

    /// Distance change when `a` goes before old visit `i` and `b` before old
    /// visit `j` (`i <= j`).
    fn pair_delta(&self, inst: &Instance, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let prev = if i == 0 { self.depot } else { self.pos[i - 1] };
        let (next, _) = self.next_state(j, 0.0);
        if i == j {
            inst.dist(prev, a) + inst.dist(a, b) + inst.dist(b, next) - inst.dist(prev, next)
        } else {
            let first = self.pos[i];
            let before_b = self.pos[j - 1];
            inst.dist(prev, a) + inst.dist(a, first) - inst.dist(prev, first)
                + inst.dist(before_b, b)
                + inst.dist(b, next)
                - inst.dist(before_b, next)
        }
    }

    /// Enumerates feasible insertions of `a` then `b` by forward propagation.
    /// The callback receives `(i, j, distance delta, service start of b)`.
    fn forward_pairs(&self, inst: &Instance, a: Spec, b: Spec, q: f64, mut f: impl FnMut(usize, usize, f64, f64)) {
        let h = inst.horizon();
        let cap = inst.fleet().capacity;
        let n = self.visits.len();
        for i in 0..=n {
            let (prev, prev_dep, load_before) = self.prev_state(i, h.earliest);
            if load_before + q > cap + EPS {
                continue;
            }
            let sa = (prev_dep + inst.travel_time(prev, a.pos)).max(a.e);
            if sa > a.l + EPS {
                continue;
            }
            let mut t = sa + a.s;
            let mut last = a.pos;
            for j in i..=n {
                let (next, next_lat) = self.next_state(j, h.latest);
                let sb = (t + inst.travel_time(last, b.pos)).max(b.e);
                if sb <= b.l + EPS && sb + b.s + inst.travel_time(b.pos, next) <= next_lat + EPS {
                    f(i, j, self.pair_delta(inst, i, j, a.pos, b.pos), sb);
                }
                if j == n || self.load[j] + q > cap + EPS {
                    break;
                }
                let st = (t + inst.travel_time(last, self.pos[j])).max(self.win[j].0);
                if st > self.lat[j] + EPS {
                    break;
                }
                t = st + self.svc[j];
                last = self.pos[j];
            }
        }
    }

    /// Enumerates insertions of `a` then `b` by backward latest-start chains.
    /// `a.e` is ignored; the callback receives `(i, j, distance delta, latest
    /// start of a)`, so the insertion is feasible for any window opening of
    /// `a` up to that value.
    fn backward_pairs(&self, inst: &Instance, a: Spec, b: Spec, q: f64, mut f: impl FnMut(usize, usize, f64, f64)) {
        let h = inst.horizon();
        let cap = inst.fleet().capacity;
        let n = self.visits.len();
        for j in 0..=n {
            let (next, next_lat) = self.next_state(j, h.latest);
            let lat_b = b.l.min(next_lat - b.s - inst.travel_time(b.pos, next));
            if lat_b < b.e - EPS {
                continue;
            }
            let mut after_pos = b.pos;
            let mut after_lat = lat_b;
            let mut i = j;
            loop {
                if i < j {
                    if self.load[i] + q > cap + EPS {
                        break;
                    }
                    let l = self.win[i]
                        .1
                        .min(after_lat - self.svc[i] - inst.travel_time(self.pos[i], after_pos));
                    if l < self.early[i] - EPS {
                        break;
                    }
                    after_pos = self.pos[i];
                    after_lat = l;
                }
                let (prev, prev_dep, load_before) = self.prev_state(i, h.earliest);
                if load_before + q <= cap + EPS {
                    let lat_a = a.l.min(after_lat - a.s - inst.travel_time(a.pos, after_pos));
                    if prev_dep + inst.travel_time(prev, a.pos) <= lat_a + EPS {
                        f(i, j, self.pair_delta(inst, i, j, a.pos, b.pos), lat_a);
                    }
                }
                if i == 0 {
                    break;
                }
                i -= 1;
            }
        }
    }

    fn insert_pair(&mut self, i: usize, j: usize, a: Visit, b: Visit) {
        self.visits.insert(j, b);
        self.visits.insert(i, a);
    }
}

#[derive(Clone, Copy, Debug)]
struct Spec {
    pos: usize,
    e: f64,
    l: f64,
    s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Insertion {
    Road {
        v: usize,
        i: usize,
        j: usize,
    },
    /// For `v1 == v2`, `(i2, j2)` index the route after the first half is in.
    Sl {
        leg: usize,
        dep: usize,
        v1: usize,
        i1: usize,
        j1: usize,
        v2: usize,
        i2: usize,
        j2: usize,
    },
}

#[derive(Clone, Debug)]
struct FirstHalf {
    dep: usize,
    dd: f64,
    i: usize,
    j: usize,
    /// Best same-vehicle completion `(dd2, i2, j2)`, computed on demand.
    same: Option<Option<(f64, usize, usize)>>,
}

#[derive(Clone, Debug)]
struct SecondHalf {
    dd: f64,
    emax: f64,
    i: usize,
    j: usize,
}

#[derive(Clone, Debug, Default)]
struct LegEval {
    first: Vec<FirstHalf>,
    second: Vec<SecondHalf>,
}

impl LegEval {
    fn best_second(&self, thr: f64) -> Option<&SecondHalf> {
        self.second.iter().find(|s| s.emax + EPS >= thr)
    }
}

#[derive(Clone, Debug, Default)]
struct RouteEval {
    road: Option<(f64, usize, usize)>,
    legs: Vec<LegEval>,
}

#[derive(Clone, Copy, Debug)]
struct Choice {
    cost: f64,
    ins: Insertion,
    /// Cost of the best option on a different primary vehicle.
    second_cost: f64,
}

/// A solution under construction: per-vehicle visit sequences, modal
/// assignments and scheduled-line loads. Requests that are not in any route
/// are unserved.
#[derive(Debug, Clone)]
pub struct WorkingSolution {
    routes: Vec<RouteState>,
    modes: Vec<Option<SlAssignment>>,
    served: Vec<bool>,
    rail: Vec<Vec<f64>>,
}

impl WorkingSolution {
    /// All vehicles idle, no request served.
    pub fn empty(inst: &Instance) -> Self {
        let routes = (0..inst.n_vehicles())
            .map(|v| {
                let mut r = RouteState {
                    depot: inst.vehicle_depot(v),
                    ..Default::default()
                };
                r.feasible = true;
                r
            })
            .collect();
        Self {
            routes,
            modes: vec![None; inst.n_requests()],
            served: vec![false; inst.n_requests()],
            rail: inst.legs().iter().map(|l| vec![0.0; l.departures.len()]).collect(),
        }
    }

    /// Rebuilds the working form of a feasible solution.
    pub fn from_solution(inst: &Instance, sol: &Solution) -> Result<Self, AlnsError> {
        let report = validate_solution(inst, sol)?;
        if !report.is_feasible() {
            return Err(AlnsError::InvalidParams(format!(
                "warm start is infeasible: {:?}",
                report.violations.first()
            )));
        }
        let mut ws = Self::empty(inst);
        ws.modes = sol.sl_assignments.clone();
        for route in &sol.routes {
            let visits = &mut ws.routes[route.vehicle].visits;
            for stop in &route.stops {
                if let Some(r) = stop.request {
                    let kind = match stop.kind {
                        crate::model::StopKind::Pickup => VisitKind::Pickup,
                        crate::model::StopKind::Delivery => VisitKind::Delivery,
                        crate::model::StopKind::Drop => VisitKind::Drop,
                        _ => VisitKind::Collect,
                    };
                    visits.push(Visit::new(r, kind));
                }
            }
        }
        for (r, a) in ws.modes.iter().enumerate() {
            if let Some(a) = a {
                ws.rail[a.leg][a.departure] += inst.requests()[r].demand;
            }
        }
        ws.served = vec![true; inst.n_requests()];
        for v in 0..ws.routes.len() {
            ws.refresh(inst, v);
        }
        Ok(ws)
    }

    pub fn to_solution(&self, inst: &Instance) -> Solution {
        let lists: Vec<(usize, Vec<Visit>)> = self
            .routes
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.visits.is_empty())
            .map(|(v, r)| (v, r.visits.clone()))
            .collect();
        Solution::assemble(inst, &lists, self.modes.clone())
    }

    pub fn served(&self) -> Vec<usize> {
        (0..self.served.len()).filter(|&r| self.served[r]).collect()
    }

    pub fn unserved(&self) -> Vec<usize> {
        (0..self.served.len()).filter(|&r| !self.served[r]).collect()
    }

    pub fn assignment(&self, r: usize) -> Option<SlAssignment> {
        self.modes[r]
    }

    /// Vehicle visit sequences, indexed by vehicle.
    pub fn vehicle_visits(&self, v: usize) -> &[Visit] {
        &self.routes[v].visits
    }

    pub fn distance(&self) -> f64 {
        self.routes.iter().map(|r| r.dist).sum()
    }

    pub fn flow(&self, inst: &Instance) -> f64 {
        self.modes
            .iter()
            .enumerate()
            .filter_map(|(r, a)| a.map(|a| inst.flow_cost(r, a.leg)))
            .sum()
    }

    pub fn cost(&self, inst: &Instance, policy: Policy) -> f64 {
        evaluate_objective(self.distance(), self.flow(inst), policy, inst.phi())
    }

    fn refresh(&mut self, inst: &Instance, v: usize) {
        self.routes[v].refresh(inst, &self.modes, None);
    }

    fn routes_of(&self, r: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .routes
            .iter()
            .enumerate()
            .filter(|(_, route)| route.visits.iter().any(|v| v.request == r))
            .map(|(v, _)| v)
            .collect();
        out.dedup();
        out
    }

    /// Removes the requests from their routes; returns the touched vehicles.
    fn remove(&mut self, inst: &Instance, requests: &[usize]) -> Vec<usize> {
        let mut touched = Vec::new();
        for &r in requests {
            if !self.served[r] {
                continue;
            }
            for v in self.routes_of(r) {
                self.routes[v].visits.retain(|x| x.request != r);
                if !touched.contains(&v) {
                    touched.push(v);
                }
            }
            if let Some(a) = self.modes[r].take() {
                self.rail[a.leg][a.departure] -= inst.requests()[r].demand;
            }
            self.served[r] = false;
        }
        touched.sort_unstable();
        for &v in &touched {
            self.refresh(inst, v);
        }
        touched
    }

    /// Removing stops can only break a route when distances violate the
    /// triangle inequality; such routes are emptied.
    fn shed_broken_routes(&mut self, inst: &Instance, removed: &mut Vec<usize>) {
        loop {
            let broken: Vec<usize> = (0..self.routes.len()).filter(|&v| !self.routes[v].feasible).collect();
            if broken.is_empty() {
                return;
            }
            let mut extra: Vec<usize> = broken
                .iter()
                .flat_map(|&v| self.routes[v].visits.iter().map(|x| x.request))
                .collect();
            extra.sort_unstable();
            extra.dedup();
            self.remove(inst, &extra);
            removed.extend(extra);
        }
    }

    /// Moves whole routes to an idle vehicle of another depot when that
    /// shortens them. Returns true if any route moved.
    pub fn relocate_routes(&mut self, inst: &Instance) -> bool {
        let mut moved = false;
        for v in 0..self.routes.len() {
            if self.routes[v].visits.is_empty() {
                continue;
            }
            let mut best: Option<(usize, RouteState)> = None;
            let mut tried: Vec<usize> = vec![self.routes[v].depot];
            for u in 0..self.routes.len() {
                let depot = self.routes[u].depot;
                if !self.routes[u].visits.is_empty() || tried.contains(&depot) {
                    continue;
                }
                tried.push(depot);
                let mut trial = RouteState {
                    depot,
                    visits: self.routes[v].visits.clone(),
                    ..Default::default()
                };
                trial.refresh(inst, &self.modes, None);
                let bound = best.as_ref().map_or(self.routes[v].dist - EPS, |(_, t)| t.dist);
                if trial.feasible && trial.dist < bound {
                    best = Some((u, trial));
                }
            }
            if let Some((u, trial)) = best {
                self.routes[u] = trial;
                let depot = self.routes[v].depot;
                self.routes[v] = RouteState {
                    depot,
                    feasible: true,
                    ..Default::default()
                };
                moved = true;
            }
        }
        moved
    }

    /// Vehicles worth trying for an insertion: every used vehicle plus the
    /// first two idle vehicles of each depot.
    fn candidate_routes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut idle: Vec<(usize, usize)> = Vec::new();
        for (v, r) in self.routes.iter().enumerate() {
            if !r.visits.is_empty() {
                out.push(v);
            } else {
                match idle.iter_mut().find(|(d, _)| *d == r.depot) {
                    Some((_, c)) if *c >= 2 => {}
                    Some((_, c)) => {
                        *c += 1;
                        out.push(v);
                    }
                    None => {
                        idle.push((r.depot, 1));
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    fn earliest_departure(&self, inst: &Instance, leg: usize, ready: f64, q: f64) -> Option<usize> {
        let l = &inst.legs()[leg];
        let start = l.departures.partition_point(|&d| d + EPS < ready);
        (start..l.departures.len()).find(|&w| self.rail[leg][w] + q <= l.capacity_per_departure + EPS)
    }

    fn specs(&self, inst: &Instance, r: usize) -> (Spec, Spec) {
        let req = &inst.requests()[r];
        let (p, d) = inst.request_pos(r);
        let s = req.service_time;
        (
            Spec {
                pos: p,
                e: req.tw_pickup.earliest,
                l: req.tw_pickup.latest,
                s,
            },
            Spec {
                pos: d,
                e: req.tw_delivery.earliest,
                l: req.tw_delivery.latest,
                s,
            },
        )
    }

    fn eval_route(&self, inst: &Instance, r: usize, v: usize, allow_sl: bool) -> RouteEval {
        let route = &self.routes[v];
        let q = inst.requests()[r].demand;
        let (pick, deliv) = self.specs(inst, r);
        let mut road: Option<(f64, usize, usize)> = None;
        route.forward_pairs(inst, pick, deliv, q, |i, j, dd, _| {
            if road.map_or(true, |(b, ..)| dd < b) {
                road = Some((dd, i, j));
            }
        });
        let mut legs = Vec::new();
        if allow_sl {
            let h = inst.horizon();
            let s = pick.s;
            for (l, leg) in inst.legs().iter().enumerate() {
                let (from, to) = inst.leg_pos(l);
                let mut eval = LegEval::default();
                let drop = Spec {
                    pos: from,
                    e: h.earliest,
                    l: h.latest,
                    s,
                };
                route.forward_pairs(inst, pick, drop, q, |i, j, dd, sb| {
                    if let Some(dep) = self.earliest_departure(inst, l, sb + s, q) {
                        if leg.departures[dep] + leg.travel_time > h.latest + EPS {
                            return;
                        }
                        match eval.first.iter_mut().find(|f| f.dep == dep) {
                            Some(f) if dd < f.dd => {
                                f.dd = dd;
                                f.i = i;
                                f.j = j;
                            }
                            Some(_) => {}
                            None => eval.first.push(FirstHalf {
                                dep,
                                dd,
                                i,
                                j,
                                same: None,
                            }),
                        }
                    }
                });
                eval.first.sort_by_key(|f| f.dep);
                let collect = Spec {
                    pos: to,
                    e: h.earliest,
                    l: h.latest,
                    s,
                };
                route.backward_pairs(inst, collect, deliv, q, |i, j, dd, emax| {
                    eval.second.push(SecondHalf { dd, emax, i, j });
                });
                eval.second
                    .sort_by(|a, b| a.dd.total_cmp(&b.dd).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
                // Entries dominated in both cost and latest start are useless.
                let mut best_emax = f64::NEG_INFINITY;
                eval.second.retain(|x| {
                    if x.emax > best_emax {
                        best_emax = x.emax;
                        true
                    } else {
                        false
                    }
                });
                legs.push(eval);
            }
        }
        RouteEval { road, legs }
    }

    /// Best completion of a first half on the same vehicle.
    fn same_vehicle_second(
        &self,
        inst: &Instance,
        r: usize,
        v: usize,
        leg: usize,
        first: &FirstHalf,
    ) -> Option<(f64, usize, usize)> {
        let mut scratch = self.routes[v].clone();
        scratch.insert_pair(
            first.i,
            first.j,
            Visit::new(r, VisitKind::Pickup),
            Visit::new(r, VisitKind::Drop),
        );
        let asg = SlAssignment {
            leg,
            departure: first.dep,
        };
        scratch.refresh(inst, &self.modes, Some((r, asg)));
        if !scratch.feasible {
            return None;
        }
        let h = inst.horizon();
        let l = &inst.legs()[leg];
        let thr = l.departures[first.dep] + l.travel_time;
        let drop_idx = first.j + 1;
        let (_, deliv) = self.specs(inst, r);
        let collect = Spec {
            pos: inst.leg_pos(leg).1,
            e: h.earliest,
            l: h.latest,
            s: deliv.s,
        };
        let mut best: Option<(f64, usize, usize)> = None;
        scratch.backward_pairs(inst, collect, deliv, inst.requests()[r].demand, |i, j, dd, emax| {
            if i > drop_idx && emax + EPS >= thr && best.map_or(true, |(b, bi, bj)| (dd, i, j) < (b, bi, bj)) {
                best = Some((dd, i, j));
            }
        });
        best
    }

    /// Cheapest insertion of request `r` given per-vehicle evaluations.
    fn choose(
        &self,
        inst: &Instance,
        policy: Weights,
        r: usize,
        cands: &[usize],
        evals: &mut [Option<RouteEval>],
        mut noise: Option<&mut Noise>,
    ) -> Option<Choice> {
        let mut jit = |c: f64| noise.as_mut().map_or(c, |n| n.jitter(c));
        let q = inst.requests()[r].demand;
        let mut best: Option<(f64, Insertion)> = None;
        // Best cost per primary vehicle, for regret.
        let mut per_vehicle: Vec<(usize, f64)> = Vec::new();
        let note = |pv: &mut Vec<(usize, f64)>, v: usize, c: f64| match pv.iter_mut().find(|(x, _)| *x == v) {
            Some((_, b)) => {
                if c < *b {
                    *b = c
                }
            }
            None => pv.push((v, c)),
        };
        let better = |best: &Option<(f64, Insertion)>, c: f64| best.as_ref().map_or(true, |(b, _)| c < *b);

        for &v in cands {
            if let Some((dd, i, j)) = evals[v].as_ref().and_then(|e| e.road) {
                let c = jit(policy.wd * dd);
                note(&mut per_vehicle, v, c);
                if better(&best, c) {
                    best = Some((c, Insertion::Road { v, i, j }));
                }
            }
        }
        let n_legs = inst.legs().len();
        for leg in 0..n_legs {
            let l = &inst.legs()[leg];
            let flow = policy.wf * l.tariff * q;
            for &v1 in cands {
                let Some(e1) = evals[v1].as_ref() else { continue };
                let Some(le1) = e1.legs.get(leg) else { continue };
                for f in &le1.first {
                    let thr = l.departures[f.dep] + l.travel_time;
                    for &v2 in cands {
                        if v2 == v1 {
                            continue;
                        }
                        let Some(s) = evals[v2]
                            .as_ref()
                            .and_then(|e| e.legs.get(leg))
                            .and_then(|le| le.best_second(thr))
                        else {
                            continue;
                        };
                        let c = jit(policy.wd * (f.dd + s.dd) + flow);
                        note(&mut per_vehicle, v1, c);
                        if better(&best, c) {
                            best = Some((
                                c,
                                Insertion::Sl {
                                    leg,
                                    dep: f.dep,
                                    v1,
                                    i1: f.i,
                                    j1: f.j,
                                    v2,
                                    i2: s.i,
                                    j2: s.j,
                                },
                            ));
                        }
                    }
                }
            }
        }
        // Same-vehicle splits need a re-evaluated route; only try promising ones.
        let mut same: Vec<(f64, usize, usize, usize)> = Vec::new();
        for leg in 0..n_legs {
            let flow = policy.wf * inst.legs()[leg].tariff * q;
            for &v in cands {
                if let Some(le) = evals[v].as_ref().and_then(|e| e.legs.get(leg)) {
                    for (k, f) in le.first.iter().enumerate() {
                        same.push((policy.wd * f.dd + flow, leg, v, k));
                    }
                }
            }
        }
        same.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.2, a.1, a.3).cmp(&(b.2, b.1, b.3))));
        for (lb, leg, v, k) in same {
            if !better(&best, lb) {
                break;
            }
            let flow = policy.wf * inst.legs()[leg].tariff * q;
            let first = evals[v].as_ref().expect("present").legs[leg].first[k].clone();
            let done = match first.same {
                Some(x) => x,
                None => {
                    let x = self.same_vehicle_second(inst, r, v, leg, &first);
                    evals[v].as_mut().expect("present").legs[leg].first[k].same = Some(x);
                    x
                }
            };
            if let Some((dd2, i2, j2)) = done {
                let c = jit(policy.wd * (first.dd + dd2) + flow);
                note(&mut per_vehicle, v, c);
                if better(&best, c) {
                    best = Some((
                        c,
                        Insertion::Sl {
                            leg,
                            dep: first.dep,
                            v1: v,
                            i1: first.i,
                            j1: first.j,
                            v2: v,
                            i2,
                            j2,
                        },
                    ));
                }
            }
        }
        let (cost, ins) = best?;
        let mut costs: Vec<f64> = per_vehicle.iter().map(|(_, c)| *c).collect();
        costs.sort_by(f64::total_cmp);
        let second_cost = costs.get(1).copied().unwrap_or(f64::INFINITY);
        Some(Choice { cost, ins, second_cost })
    }

    fn apply(&mut self, inst: &Instance, r: usize, ins: Insertion) -> Vec<usize> {
        match ins {
            Insertion::Road { v, i, j } => {
                self.routes[v].insert_pair(
                    i,
                    j,
                    Visit::new(r, VisitKind::Pickup),
                    Visit::new(r, VisitKind::Delivery),
                );
                self.served[r] = true;
                self.refresh(inst, v);
                vec![v]
            }
            Insertion::Sl {
                leg,
                dep,
                v1,
                i1,
                j1,
                v2,
                i2,
                j2,
            } => {
                self.modes[r] = Some(SlAssignment { leg, departure: dep });
                self.rail[leg][dep] += inst.requests()[r].demand;
                self.routes[v1].insert_pair(i1, j1, Visit::new(r, VisitKind::Pickup), Visit::new(r, VisitKind::Drop));
                self.routes[v2].insert_pair(
                    i2,
                    j2,
                    Visit::new(r, VisitKind::Collect),
                    Visit::new(r, VisitKind::Delivery),
                );
                self.served[r] = true;
                self.refresh(inst, v1);
                if v2 != v1 {
                    self.refresh(inst, v2);
                    vec![v1, v2]
                } else {
                    vec![v1]
                }
            }
        }
    }

    /// Inserts one request at its cheapest position. Returns false if no
    /// feasible insertion exists.
    fn insert_best(&mut self, inst: &Instance, policy: Policy, r: usize, allow_sl: bool) -> bool {
        let w = Weights::new(inst, policy);
        let cands = self.candidate_routes();
        let mut evals: Vec<Option<RouteEval>> = vec![None; self.routes.len()];
        for &v in &cands {
            evals[v] = Some(self.eval_route(inst, r, v, allow_sl));
        }
        match self.choose(inst, w, r, &cands, &mut evals, None) {
            Some(c) => {
                self.apply(inst, r, c.ins);
                true
            }
            None => false,
        }
    }
}

/// A feasible scheduled-line insertion of one request.
#[derive(Debug, Clone, PartialEq)]
pub struct SlCandidate {
    pub leg: usize,
    pub departure: usize,
    pub first_vehicle: usize,
    pub second_vehicle: usize,
    /// Objective change of the insertion.
    pub delta: f64,
}

/// All feasible scheduled-line insertions of an unserved request: for every
/// leg and every first-half position, the earliest departure with spare
/// capacity, combined with the cheapest feasible second half on each vehicle.
pub fn sl_insertion_candidates(
    ws: &WorkingSolution,
    inst: &Instance,
    policy: Policy,
    request: usize,
) -> Vec<SlCandidate> {
    if ws.served[request] {
        return Vec::new();
    }
    let w = Weights::new(inst, policy);
    let q = inst.requests()[request].demand;
    let cands = ws.candidate_routes();
    let evals: Vec<(usize, RouteEval)> = cands
        .iter()
        .map(|&v| (v, ws.eval_route(inst, request, v, true)))
        .collect();
    let mut out = Vec::new();
    for (leg, l) in inst.legs().iter().enumerate() {
        let flow = w.wf * l.tariff * q;
        for (v1, e1) in &evals {
            for f in &e1.legs[leg].first {
                let thr = l.departures[f.dep] + l.travel_time;
                for (v2, e2) in &evals {
                    let dd2 = if v1 == v2 {
                        ws.same_vehicle_second(inst, request, *v1, leg, f).map(|x| x.0)
                    } else {
                        e2.legs[leg].best_second(thr).map(|s| s.dd)
                    };
                    if let Some(dd2) = dd2 {
                        out.push(SlCandidate {
                            leg,
                            departure: f.dep,
                            first_vehicle: *v1,
                            second_vehicle: *v2,
                            delta: w.wd * (f.dd + dd2) + flow,
                        });
                    }
                }
            }
        }
    }
    out
}

fn n_served(ws: &WorkingSolution) -> usize {
    ws.served.iter().filter(|&&s| s).count()
}

fn finish_destroy(ws: &mut WorkingSolution, inst: &Instance, mut removed: Vec<usize>) -> Vec<usize> {
    ws.remove(inst, &removed);
    ws.shed_broken_routes(inst, &mut removed);
    removed.sort_unstable();
    removed.dedup();
    removed
}

/// Removes `n_remove` served requests chosen uniformly at random.
pub fn destroy_random(ws: &mut WorkingSolution, inst: &Instance, n_remove: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut served = ws.served();
    served.shuffle(rng);
    served.truncate(n_remove);
    finish_destroy(ws, inst, served)
}

/// Objective saving from removing request `r` alone.
fn removal_saving(ws: &WorkingSolution, inst: &Instance, w: Weights, r: usize) -> f64 {
    let mut saving = 0.0;
    for v in ws.routes_of(r) {
        let route = &ws.routes[v];
        let mut prev = route.depot;
        let mut d = 0.0;
        let mut any = false;
        for (k, x) in route.visits.iter().enumerate() {
            if x.request == r {
                continue;
            }
            d += inst.dist(prev, route.pos[k]);
            prev = route.pos[k];
            any = true;
        }
        if any {
            d += inst.dist(prev, route.depot);
        }
        saving += w.wd * (route.dist - d);
    }
    if let Some(a) = ws.modes[r] {
        saving += w.wf * inst.flow_cost(r, a.leg);
    }
    saving
}

/// Repeatedly removes the request whose removal saves the most. Ties go to
/// the lower request index.
pub fn destroy_worst(ws: &mut WorkingSolution, inst: &Instance, policy: Policy, n_remove: usize) -> Vec<usize> {
    let w = Weights::new(inst, policy);
    let mut removed = Vec::new();
    for _ in 0..n_remove {
        let best = ws
            .served()
            .into_iter()
            .map(|r| (removal_saving(ws, inst, w, r), r))
            .fold(None, |acc: Option<(f64, usize)>, x| match acc {
                Some(a) if a.0 >= x.0 => Some(a),
                _ => Some(x),
            });
        let Some((_, r)) = best else { break };
        ws.remove(inst, &[r]);
        removed.push(r);
    }
    finish_destroy(ws, inst, removed)
}

/// Shaw removal: requests close in space and time to already removed ones.
pub fn destroy_related(ws: &mut WorkingSolution, inst: &Instance, n_remove: usize, rng: &mut impl Rng) -> Vec<usize> {
    const DETERMINISM: i32 = 6;
    let mut pool = ws.served();
    if pool.is_empty() || n_remove == 0 {
        return Vec::new();
    }
    let reqs = inst.requests();
    let relatedness = |a: usize, b: usize| {
        let (pa, da) = inst.request_pos(a);
        let (pb, db) = inst.request_pos(b);
        let ra = &reqs[a];
        let rb = &reqs[b];
        inst.dist(pa, pb)
            + inst.dist(da, db)
            + (ra.tw_pickup.earliest - rb.tw_pickup.earliest).abs()
            + (ra.tw_delivery.earliest - rb.tw_delivery.earliest).abs()
    };
    let first = pool.swap_remove(rng.gen_range(0..pool.len()));
    let mut removed = vec![first];
    while removed.len() < n_remove && !pool.is_empty() {
        let anchor = removed[rng.gen_range(0..removed.len())];
        pool.sort_by(|&a, &b| {
            relatedness(anchor, a)
                .total_cmp(&relatedness(anchor, b))
                .then(a.cmp(&b))
        });
        let y: f64 = rng.gen();
        let idx = ((y.powi(DETERMINISM) * pool.len() as f64) as usize).min(pool.len() - 1);
        removed.push(pool.remove(idx));
    }
    finish_destroy(ws, inst, removed)
}

/// Removes requests from one modal group (scheduled line or road, chosen with
/// equal probability), topping up from the other group if needed.
pub fn destroy_sl(ws: &mut WorkingSolution, inst: &Instance, n_remove: usize, rng: &mut impl Rng) -> Vec<usize> {
    let (mut sl, mut road): (Vec<usize>, Vec<usize>) = ws.served().into_iter().partition(|&r| ws.modes[r].is_some());
    sl.shuffle(rng);
    road.shuffle(rng);
    let (mut primary, secondary) = if rng.gen_bool(0.5) { (sl, road) } else { (road, sl) };
    primary.extend(secondary);
    primary.truncate(n_remove);
    finish_destroy(ws, inst, primary)
}

/// Removes every request on one randomly chosen route, together with any
/// route sharing a split request with it.
pub fn destroy_route(ws: &mut WorkingSolution, inst: &Instance, rng: &mut impl Rng) -> Vec<usize> {
    let used: Vec<usize> = (0..ws.routes.len())
        .filter(|&v| !ws.routes[v].visits.is_empty())
        .collect();
    let Some(&v) = used.choose(rng) else {
        return Vec::new();
    };
    let mut removed: Vec<usize> = ws.routes[v].visits.iter().map(|x| x.request).collect();
    let partners: Vec<usize> = removed
        .iter()
        .filter(|&&r| ws.modes[r].is_some())
        .flat_map(|&r| ws.routes_of(r))
        .collect();
    for u in partners {
        removed.extend(ws.routes[u].visits.iter().map(|x| x.request));
    }
    removed.sort_unstable();
    removed.dedup();
    finish_destroy(ws, inst, removed)
}

/// Requests that could not be reinserted.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("requests {0:?} have no feasible insertion")]
pub struct Uninsertable(pub Vec<usize>);

fn repair(
    ws: &mut WorkingSolution,
    inst: &Instance,
    policy: Policy,
    removed: &[usize],
    mode: RepairMode,
    mut rng: Option<&mut Noise>,
) -> Result<(), Uninsertable> {
    let w = Weights::new(inst, policy);
    let mut pending: Vec<usize> = removed.iter().copied().filter(|&r| !ws.served[r]).collect();
    pending.sort_unstable();
    pending.dedup();
    let nv = ws.routes.len();
    let mut cache: Vec<Vec<Option<RouteEval>>> = vec![vec![None; nv]; pending.len()];
    while !pending.is_empty() {
        let cands = ws.candidate_routes();
        let mut pick: Option<(usize, Choice)> = None;
        let mut failed = Vec::new();
        let only = match rng.as_deref_mut() {
            Some(n) if mode.random_order => Some(n.rng.gen_range(0..pending.len())),
            _ => None,
        };
        for (k, &r) in pending.iter().enumerate() {
            if only.is_some_and(|o| o != k) {
                continue;
            }
            for &v in &cands {
                if cache[k][v].is_none() {
                    cache[k][v] = Some(ws.eval_route(inst, r, v, mode.allow_sl));
                }
            }
            let noise = if mode.noise { rng.as_deref_mut() } else { None };
            let Some(c) = ws.choose(inst, w, r, &cands, &mut cache[k], noise) else {
                failed.push(r);
                continue;
            };
            let better = match &pick {
                None => true,
                Some((_, p)) if mode.regret => {
                    let (ra, rb) = (c.second_cost - c.cost, p.second_cost - p.cost);
                    ra > rb || (ra == rb && c.cost < p.cost)
                }
                Some((_, p)) => c.cost < p.cost,
            };
            if better {
                pick = Some((k, c));
            }
        }
        if !failed.is_empty() {
            return Err(Uninsertable(failed));
        }
        let (k, c) = pick.expect("pending is non-empty");
        let r = pending.remove(k);
        cache.remove(k);
        let touched = ws.apply(inst, r, c.ins);
        let rail_tight = match c.ins {
            Insertion::Sl { leg, dep, .. } => {
                let maxq = pending.iter().map(|&p| inst.requests()[p].demand).fold(0.0, f64::max);
                ws.rail[leg][dep] + maxq > inst.legs()[leg].capacity_per_departure + EPS
            }
            Insertion::Road { .. } => false,
        };
        for row in &mut cache {
            if rail_tight {
                row.iter_mut().for_each(|e| *e = None);
            } else {
                for &v in &touched {
                    row[v] = None;
                }
            }
        }
    }
    Ok(())
}

/// Inserts the removed requests one at a time, always taking the globally
/// cheapest feasible insertion.
pub fn repair_greedy(
    ws: &mut WorkingSolution,
    inst: &Instance,
    policy: Policy,
    removed: &[usize],
) -> Result<(), Uninsertable> {
    repair(ws, inst, policy, removed, REPAIR_MODES[0], None)
}

/// Inserts first the request with the largest gap between its best and
/// second-best vehicle.
pub fn repair_regret2(
    ws: &mut WorkingSolution,
    inst: &Instance,
    policy: Policy,
    removed: &[usize],
) -> Result<(), Uninsertable> {
    repair(ws, inst, policy, removed, REPAIR_MODES[1], None)
}

/// Simulated-annealing acceptance.
pub fn accept(candidate_cost: f64, current_cost: f64, temperature: f64, rng: &mut impl Rng) -> bool {
    if candidate_cost <= current_cost {
        return true;
    }
    if !(temperature > 0.0) {
        return false;
    }
    let p = ((current_cost - candidate_cost) / temperature).exp();
    rng.gen::<f64>() < p
}

/// Roulette weight update `w <- (1 - r) w + r * score / uses`; operators
/// without uses keep their weight.
pub fn update_weights(weights: &mut [f64], scores: &[f64], uses: &[u32], reaction_factor: f64) {
    for ((w, &s), &u) in weights.iter_mut().zip(scores).zip(uses) {
        if u > 0 {
            *w = (1.0 - reaction_factor) * *w + reaction_factor * s / f64::from(u);
        }
        *w = w.max(1e-6);
    }
}

fn roulette(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Greedy best insertion over requests in random order. Tries a road-only
/// construction and a few more orders before giving up.
pub fn construct_initial(inst: &Instance, policy: Policy, rng: &mut impl Rng) -> Result<WorkingSolution, AlnsError> {
    policy.validate()?;
    let n = inst.n_requests();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fewest: Option<Vec<usize>> = None;
    for attempt in 0..6 {
        let allow_sl = attempt != 1;
        if attempt >= 2 {
            order.shuffle(rng);
        }
        let mut ws = WorkingSolution::empty(inst);
        let mut failed = Vec::new();
        for &r in &order {
            if !ws.insert_best(inst, policy, r, allow_sl) {
                failed.push(r);
            }
        }
        if failed.is_empty() {
            return Ok(ws);
        }
        failed.sort_unstable();
        if fewest.as_ref().map_or(true, |f| failed.len() < f.len()) {
            fewest = Some(failed);
        }
        if inst.n_vehicles() == 0 {
            break;
        }
    }
    Err(AlnsError::Infeasible {
        requests: fewest.unwrap_or_default(),
    })
}

/// Runs ALNS from a greedy construction, or from `warm` when it is feasible.
pub fn solve(
    inst: &Instance,
    policy: Policy,
    params: &AlnsParams,
    warm: Option<&Solution>,
) -> Result<SolverRun, AlnsError> {
    params.validate()?;
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = inst.n_requests();
    let initial = match warm.and_then(|s| WorkingSolution::from_solution(inst, s).ok()) {
        Some(ws) => ws,
        None => construct_initial(inst, policy, &mut rng)?,
    };
    if n == 0 {
        let sol = initial.to_solution(inst);
        return Ok(SolverRun {
            best_cost: evaluate_objective(sol.d, sol.f, policy, inst.phi()),
            best_solution: sol,
            iterations_run: 0,
            trace: params.trace.then(Vec::new),
        });
    }

    let mut cur = initial;
    let mut cur_cost = cur.cost(inst, policy);
    let mut best = cur.clone();
    let mut best_cost = cur_cost;
    let mut temperature = if cur_cost > 0.0 {
        params.start_temperature_ratio * cur_cost / std::f64::consts::LN_2
    } else {
        0.0
    };

    let mut dw = [1.0; 5];
    let mut rw = [1.0; 7];
    let mut ds = [0.0; 5];
    let mut rs = [0.0; 7];
    let mut du = [0u32; 5];
    let mut ru = [0u32; 7];
    let wd = Weights::new(inst, policy).wd;
    let max_arc = (0..inst.nodes().len())
        .flat_map(|a| (0..inst.nodes().len()).map(move |b| (a, b)))
        .map(|(a, b)| inst.dist(a, b))
        .fold(0.0, f64::max);
    let mut noise = Noise {
        rng: ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15),
        amp: NOISE_RATIO * wd * max_arc,
    };
    let [fmin, fmax] = params.removal_fraction_range;
    let lo = ((fmin * n as f64).ceil() as usize).max(1);
    let hi = ((fmax * n as f64).ceil() as usize).max(lo);
    let mut trace = params.trace.then(Vec::new);

    for it in 1..=params.max_iterations {
        let d_op = roulette(&dw, &mut rng);
        let r_op = roulette(&rw, &mut rng);
        let k = rng.gen_range(lo..=hi).min(n_served(&cur));
        let mut cand = cur.clone();
        let removed = match d_op {
            0 => destroy_random(&mut cand, inst, k, &mut rng),
            1 => destroy_worst(&mut cand, inst, policy, k),
            2 => destroy_related(&mut cand, inst, k, &mut rng),
            3 => destroy_sl(&mut cand, inst, k, &mut rng),
            _ => destroy_route(&mut cand, inst, &mut rng),
        };
        let repaired = repair(&mut cand, inst, policy, &removed, REPAIR_MODES[r_op], Some(&mut noise)).map(|()| {
            cand.relocate_routes(inst);
        });
        du[d_op] += 1;
        ru[r_op] += 1;
        let mut accepted = false;
        match repaired {
            Ok(()) => {
                let cost = cand.cost(inst, policy);
                let mut score = 0.0;
                if cost < best_cost {
                    score = params.scores[0];
                } else if cost < cur_cost {
                    score = params.scores[1];
                }
                if accept(cost, cur_cost, temperature, &mut rng) {
                    accepted = true;
                    if score == 0.0 && cost != cur_cost {
                        score = params.scores[2];
                    }
                    if params.check_invariants {
                        let report = validate_solution(inst, &cand.to_solution(inst))?;
                        if !report.is_feasible() {
                            return Err(AlnsError::InvariantBroken {
                                iteration: it,
                                detail: format!("{:?}", report.violations),
                            });
                        }
                    }
                    cur = cand;
                    cur_cost = cost;
                    if cost < best_cost {
                        best = cur.clone();
                        best_cost = cost;
                    }
                }
                ds[d_op] += score;
                rs[r_op] += score;
            }
            Err(_) => {
                cur = best.clone();
                cur_cost = best_cost;
            }
        }
        temperature *= params.cooling_rate;
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow {
                iteration: it,
                current_cost: cur_cost,
                best_cost,
                operator_id: format!("{}+{}", DESTROY_OPERATORS[d_op], REPAIR_OPERATORS[r_op]),
                accepted,
            });
        }
        if it % params.segment_length == 0 {
            update_weights(&mut dw, &ds, &du, params.reaction_factor);
            update_weights(&mut rw, &rs, &ru, params.reaction_factor);
            ds = [0.0; 5];
            rs = [0.0; 7];
            du = [0; 5];
            ru = [0; 7];
        }
    }

    let sol = best.to_solution(inst);
    Ok(SolverRun {
        best_cost: evaluate_objective(sol.d, sol.f, policy, inst.phi()),
        best_solution: sol,
        iterations_run: params.max_iterations,
        trace,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Fleet, InstanceData, Node, NodeKind, Request, ScheduledLeg, TimeWindow};

    fn node(id: usize, x: f64, y: f64, kind: NodeKind) -> Node {
        Node { id, x, y, kind }
    }

    fn req(id: usize, p: usize, d: usize, q: f64, tp: [f64; 2], td: [f64; 2]) -> Request {
        Request {
            id,
            pickup: p,
            delivery: d,
            demand: q,
            tw_pickup: TimeWindow::from(tp),
            tw_delivery: TimeWindow::from(td),
            service_time: 0.0,
        }
    }

    /// Two stations 100 apart, each with a depot vehicle; one request from
    /// near station A to near station B. The line is cheap in distance.
    pub(crate) fn sl_instance(departures: Vec<f64>, capacity: f64) -> Instance {
        Instance::new(InstanceData {
            nodes: vec![
                node(0, 0.0, 0.0, NodeKind::Station),
                node(1, 100.0, 0.0, NodeKind::Station),
                node(2, 0.0, 5.0, NodeKind::Pickup),
                node(3, 100.0, 5.0, NodeKind::Delivery),
            ],
            requests: vec![req(0, 2, 3, 5.0, [0.0, 200.0], [0.0, 400.0])],
            legs: vec![ScheduledLeg {
                from_station: 0,
                to_station: 1,
                travel_time: 50.0,
                departures,
                capacity_per_departure: capacity,
                tariff: 4.0,
            }],
            fleet: Fleet {
                n_vehicles: 2,
                capacity: 10.0,
                speed: 1.0,
                depots: vec![],
            },
            phi: 1.0,
            horizon: [0.0, 500.0],
            dist_matrix: None,
        })
        .unwrap()
    }

    fn simple_instance(n_vehicles: usize, demands: &[f64]) -> Instance {
        let mut nodes = vec![node(0, 0.0, 0.0, NodeKind::Depot)];
        let mut requests = Vec::new();
        for (k, &q) in demands.iter().enumerate() {
            let p = 1 + 2 * k;
            nodes.push(node(p, 1.0 + k as f64, 2.0, NodeKind::Pickup));
            nodes.push(node(p + 1, 4.0 + k as f64, 6.0, NodeKind::Delivery));
            requests.push(req(k, p, p + 1, q, [0.0, 100.0], [0.0, 200.0]));
        }
        Instance::new(InstanceData {
            nodes,
            requests,
            legs: vec![],
            fleet: Fleet {
                n_vehicles,
                capacity: 10.0,
                speed: 1.0,
                depots: vec![],
            },
            phi: 1.0,
            horizon: [0.0, 1000.0],
            dist_matrix: None,
        })
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn zero_requests() {
        let inst = simple_instance(1, &[]);
        let run = solve(&inst, Policy::BASE, &AlnsParams::default(), None).unwrap();
        assert!(run.best_solution.routes.is_empty());
        assert_eq!((run.best_solution.d, run.best_solution.f), (0.0, 0.0));
    }

    #[test]
    fn construct_single_route() {
        let inst = simple_instance(1, &[5.0]);
        let ws = construct_initial(&inst, Policy::BASE, &mut rng()).unwrap();
        let kinds: Vec<VisitKind> = ws.vehicle_visits(0).iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![VisitKind::Pickup, VisitKind::Delivery]);
    }

    #[test]
    fn capacity_forces_two_routes() {
        // Pickups of both requests coincide in time, so sequential service is impossible.
        let mut data = simple_instance(2, &[6.0, 6.0]).into_data();
        data.requests[0].tw_pickup = TimeWindow::new(0.0, 3.0);
        data.requests[1].tw_pickup = TimeWindow::new(0.0, 4.0);
        let inst = Instance::new(data).unwrap();
        let sol = construct_initial(&inst, Policy::BASE, &mut rng())
            .unwrap()
            .to_solution(&inst);
        assert_eq!(sol.routes.len(), 2);
    }

    #[test]
    fn zero_vehicles_is_infeasible() {
        let inst = simple_instance(0, &[5.0, 5.0]);
        match construct_initial(&inst, Policy::BASE, &mut rng()) {
            Err(AlnsError::Infeasible { requests }) => assert_eq!(requests, vec![0, 1]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            solve(&inst, Policy::BASE, &AlnsParams::default(), None),
            Err(AlnsError::Infeasible { .. })
        ));
    }

    #[test]
    fn earliest_departure_rule() {
        // Pickup at (0,5), station A at origin: drop arrives at time 10 when the
        // vehicle leaves at 0 and drives 5 + 5. Departures {0, 15, 30}.
        let inst = sl_instance(vec![0.0, 15.0, 30.0], 20.0);
        let ws = WorkingSolution::empty(&inst);
        let c = sl_insertion_candidates(&ws, &inst, Policy::FULL_SUBSIDY, 0);
        assert!(!c.is_empty());
        assert!(c.iter().all(|c| c.departure == 1));
    }

    #[test]
    fn full_departure_is_skipped() {
        let inst = sl_instance(vec![0.0, 15.0, 30.0], 20.0);
        let mut ws = WorkingSolution::empty(&inst);
        ws.rail[0][1] = 18.0;
        let c = sl_insertion_candidates(&ws, &inst, Policy::FULL_SUBSIDY, 0);
        assert!(!c.is_empty());
        assert!(c.iter().all(|c| c.departure == 2));
    }

    #[test]
    fn late_departures_give_no_candidates() {
        // Delivery must start by 60; earliest arrival via the line is 15 + 50 + 5 = 70.
        let mut data = sl_instance(vec![0.0, 15.0, 30.0], 20.0).into_data();
        data.requests[0].tw_delivery = TimeWindow::new(0.0, 60.0);
        let inst = Instance::new(data).unwrap();
        let ws = WorkingSolution::empty(&inst);
        assert!(sl_insertion_candidates(&ws, &inst, Policy::FULL_SUBSIDY, 0).is_empty());
    }

    #[test]
    fn greedy_prefers_line_under_full_subsidy() {
        let inst = sl_instance(vec![0.0, 15.0, 30.0], 20.0);
        let mut ws = WorkingSolution::empty(&inst);
        repair_greedy(&mut ws, &inst, Policy::FULL_SUBSIDY, &[0]).unwrap();
        assert!(ws.assignment(0).is_some());
        // Line: 10 + 10 driven plus 4 * 5 tariff, against about 205 by road.
        let mut ws = WorkingSolution::empty(&inst);
        repair_greedy(&mut ws, &inst, Policy::BASE, &[0]).unwrap();
        assert!(ws.assignment(0).is_some());
        let mut data = inst.into_data();
        data.legs[0].tariff = 100.0;
        let inst = Instance::new(data).unwrap();
        let mut ws = WorkingSolution::empty(&inst);
        repair_greedy(&mut ws, &inst, Policy::BASE, &[0]).unwrap();
        assert!(ws.assignment(0).is_none());
    }

    #[test]
    fn solver_uses_line_under_full_subsidy() {
        let inst = sl_instance(vec![0.0, 15.0, 30.0], 20.0);
        let run = solve(
            &inst,
            Policy::FULL_SUBSIDY,
            &AlnsParams {
                max_iterations: 50,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(run.best_solution.sl_assignments[0].is_some());
        assert!((run.best_cost - inst.phi() * run.best_solution.d).abs() < 1e-12);
    }

    #[test]
    fn single_feasible_position_is_found() {
        // Existing route serves request 0; request 1 must be picked up right
        // after the depot and delivered at the very end.
        let mut data = simple_instance(1, &[2.0, 2.0]).into_data();
        data.requests[1].tw_pickup = TimeWindow::new(0.0, 3.0);
        data.requests[1].tw_delivery = TimeWindow::new(60.0, 200.0);
        data.requests[0].tw_pickup = TimeWindow::new(20.0, 30.0);
        data.requests[0].tw_delivery = TimeWindow::new(20.0, 40.0);
        let inst = Instance::new(data).unwrap();
        let mut ws = WorkingSolution::empty(&inst);
        assert!(ws.insert_best(&inst, Policy::BASE, 0, false));
        let mut feasible = Vec::new();
        ws.routes[0].forward_pairs(&inst, ws.specs(&inst, 1).0, ws.specs(&inst, 1).1, 2.0, |i, j, _, _| {
            feasible.push((i, j))
        });
        assert_eq!(feasible, vec![(0, 2)]);
        repair_greedy(&mut ws, &inst, Policy::BASE, &[1]).unwrap();
        let order: Vec<usize> = ws.vehicle_visits(0).iter().map(|v| v.request).collect();
        assert_eq!(order, vec![1, 0, 0, 1]);
    }

    #[test]
    fn destroy_edge_cases() {
        let inst = simple_instance(3, &[2.0, 3.0, 4.0]);
        let ws0 = construct_initial(&inst, Policy::BASE, &mut rng()).unwrap();
        let mut ws = ws0.clone();
        assert!(destroy_random(&mut ws, &inst, 0, &mut rng()).is_empty());
        assert_eq!(ws.to_solution(&inst), ws0.to_solution(&inst));
        let mut ws = ws0.clone();
        assert_eq!(destroy_related(&mut ws, &inst, 3, &mut rng()), vec![0, 1, 2]);
        assert!(ws.to_solution(&inst).routes.is_empty());
        let mut ws = ws0.clone();
        assert_eq!(destroy_sl(&mut ws, &inst, 3, &mut rng()).len(), 3);
        let mut ws = ws0;
        assert_eq!(destroy_worst(&mut ws, &inst, Policy::BASE, 3).len(), 3);
    }

    #[test]
    fn worst_removal_matches_brute_force() {
        let inst = simple_instance(1, &[2.0, 3.0, 4.0]);
        let ws0 = construct_initial(&inst, Policy::BASE, &mut rng()).unwrap();
        let base = ws0.to_solution(&inst).d;
        let savings: Vec<f64> = (0..3)
            .map(|r| {
                let mut ws = ws0.clone();
                ws.remove(&inst, &[r]);
                base - ws.to_solution(&inst).d
            })
            .collect();
        let expect = (0..3).fold(0, |b, r| if savings[r] > savings[b] { r } else { b });
        let mut ws = ws0;
        assert_eq!(destroy_worst(&mut ws, &inst, Policy::BASE, 1), vec![expect]);
    }

    #[test]
    fn empty_repair_is_identity() {
        let inst = simple_instance(2, &[2.0, 3.0]);
        let ws0 = construct_initial(&inst, Policy::BASE, &mut rng()).unwrap();
        let mut ws = ws0.clone();
        repair_regret2(&mut ws, &inst, Policy::BASE, &[]).unwrap();
        assert_eq!(ws.to_solution(&inst), ws0.to_solution(&inst));
    }

    #[test]
    fn mode_toggles_both_ways() {
        let inst = sl_instance(vec![0.0, 15.0, 30.0], 20.0);
        let mut ws = WorkingSolution::empty(&inst);
        assert!(ws.insert_best(&inst, Policy::BASE, 0, false));
        assert!(ws.assignment(0).is_none());
        let removed = destroy_sl(&mut ws, &inst, 1, &mut rng());
        repair_greedy(&mut ws, &inst, Policy::FULL_SUBSIDY, &removed).unwrap();
        assert!(ws.assignment(0).is_some());
        // An expensive, unsubsidized line moves it back to the road.
        let mut data = inst.into_data();
        data.legs[0].tariff = 100.0;
        let inst2 = Instance::new(data).unwrap();
        let sol = ws.to_solution(&inst2);
        let mut ws = WorkingSolution::from_solution(&inst2, &sol).unwrap();
        let removed = destroy_random(&mut ws, &inst2, 1, &mut rng());
        repair_regret2(&mut ws, &inst2, Policy::BASE, &removed).unwrap();
        assert!(ws.assignment(0).is_none());
    }

    #[test]
    fn acceptance_rule() {
        let mut r = rng();
        assert!(accept(1.0, 2.0, 1.0, &mut r));
        assert!(accept(2.0, 2.0, 1e-300, &mut r));
        assert!((0..1000).all(|_| !accept(2.0, 1.0, 1e-9, &mut r)));
    }

    #[test]
    fn weight_updates() {
        let mut w = [1.0, 2.0];
        update_weights(&mut w, &[10.0, 4.0], &[2, 0], 0.0);
        assert_eq!(w, [1.0, 2.0]);
        update_weights(&mut w, &[10.0, 4.0], &[2, 0], 1.0);
        assert_eq!(w, [5.0, 2.0]);
    }

    #[test]
    fn deterministic_and_valid() {
        let inst = simple_instance(2, &[2.0, 3.0, 4.0, 5.0]);
        let p = AlnsParams {
            max_iterations: 300,
            check_invariants: true,
            trace: true,
            seed: 9,
            ..Default::default()
        };
        let a = solve(&inst, Policy::BASE, &p, None).unwrap();
        let b = solve(&inst, Policy::BASE, &p, None).unwrap();
        assert_eq!(a.best_cost.to_bits(), b.best_cost.to_bits());
        let trace = a.trace.unwrap();
        assert!(trace.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
        let mut buf = Vec::new();
        write_trace_csv(&trace[..2], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,current_cost,best_cost,operator_id,accepted\n"));
    }
}
