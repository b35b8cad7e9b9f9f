//! Domain types of the freight-forwarder routing problem with scheduled-line
//! transshipment, the policy-aware objective, budget accounting, and full
//! feasibility validation of lower-level solutions.
//!
//! Nodes are referenced by their `id` everywhere in the public data model.
//! Requests and legs are referenced by their position in the instance lists.
//! Internally, [`Instance`] resolves ids to dense node positions so that
//! distance lookups are a single index into a flat matrix.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Absolute slack used for all time and load comparisons.
pub const TIME_EPS: f64 = 1e-9;

/// Relative tolerance for the recomputed `d` and `f` totals.
pub const TOTALS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("solution references unknown {what} {id}")]
    UnknownReference { what: &'static str, id: usize },
    #[error("malformed instance json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Depot,
    Pickup,
    Delivery,
    Station,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

/// Closed interval `[earliest, latest]`; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct TimeWindow {
    pub earliest: f64,
    pub latest: f64,
}

impl TimeWindow {
    pub fn new(earliest: f64, latest: f64) -> Self {
        Self { earliest, latest }
    }

    pub fn width(&self) -> f64 {
        self.latest - self.earliest
    }
}

impl From<[f64; 2]> for TimeWindow {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<TimeWindow> for [f64; 2] {
    fn from(w: TimeWindow) -> Self {
        [w.earliest, w.latest]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: usize,
    pub pickup: usize,
    pub delivery: usize,
    pub demand: f64,
    pub tw_pickup: TimeWindow,
    pub tw_delivery: TimeWindow,
    #[serde(default)]
    pub service_time: f64,
}

/// A directed scheduled-line connection between two stations with a fixed
/// timetable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledLeg {
    pub from_station: usize,
    pub to_station: usize,
    pub travel_time: f64,
    pub departures: Vec<f64>,
    pub capacity_per_departure: f64,
    /// Money per freight unit carried on this leg.
    pub tariff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub n_vehicles: usize,
    pub capacity: f64,
    pub speed: f64,
    /// Home depots by node id. Vehicle `v` is based at `depots[v % depots.len()]`.
    /// When empty, all depot-kind nodes are used, or all stations if there are
    /// no depot-kind nodes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depots: Vec<usize>,
}

/// The serializable content of an [`Instance`]. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub nodes: Vec<Node>,
    pub requests: Vec<Request>,
    pub legs: Vec<ScheduledLeg>,
    pub fleet: Fleet,
    pub phi: f64,
    pub horizon: [f64; 2],
    /// Row/column `i` belongs to `nodes[i]`. Euclidean distances are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_matrix: Option<Vec<Vec<f64>>>,
}

/// A validated lower-level problem instance.
#[derive(Debug, Clone)]
pub struct Instance {
    data: InstanceData,
    dist: Vec<f64>,
    n: usize,
    pos_of_id: HashMap<usize, usize>,
    req_pos: Vec<(usize, usize)>,
    leg_pos: Vec<(usize, usize)>,
    vehicle_depot: Vec<usize>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidInstance(msg.into())
}

impl Instance {
    pub fn new(data: InstanceData) -> Result<Self, ModelError> {
        let n = data.nodes.len();
        let mut pos_of_id = HashMap::with_capacity(n);
        for (pos, node) in data.nodes.iter().enumerate() {
            if !node.x.is_finite() || !node.y.is_finite() {
                return Err(invalid(format!("nodes[{pos}]: non-finite coordinates")));
            }
            if pos_of_id.insert(node.id, pos).is_some() {
                return Err(invalid(format!("nodes[{pos}]: duplicate node id {}", node.id)));
            }
        }
        let lookup = |id: usize, ctx: &str| {
            pos_of_id
                .get(&id)
                .copied()
                .ok_or_else(|| invalid(format!("{ctx}: unknown node id {id}")))
        };

        if !(data.phi > 0.0 && data.phi.is_finite()) {
            return Err(invalid("phi must be positive"));
        }
        let [h0, h1] = data.horizon;
        if !(h0.is_finite() && h1.is_finite() && h0 <= h1) {
            return Err(invalid("horizon must satisfy start <= end"));
        }
        let fleet = &data.fleet;
        if !(fleet.capacity > 0.0) {
            return Err(invalid("fleet.capacity must be positive"));
        }
        if !(fleet.speed > 0.0) {
            return Err(invalid("fleet.speed must be positive"));
        }

        let mut req_pos = Vec::with_capacity(data.requests.len());
        let mut req_ids = HashMap::new();
        for (i, r) in data.requests.iter().enumerate() {
            let ctx = format!("requests[{i}]");
            if req_ids.insert(r.id, i).is_some() {
                return Err(invalid(format!("{ctx}: duplicate request id {}", r.id)));
            }
            if !(r.demand > 0.0 && r.demand.is_finite()) {
                return Err(invalid(format!("{ctx}: demand must be positive")));
            }
            if r.pickup == r.delivery {
                return Err(invalid(format!("{ctx}: pickup equals delivery")));
            }
            for (name, w) in [("tw_pickup", r.tw_pickup), ("tw_delivery", r.tw_delivery)] {
                if !(w.earliest <= w.latest) {
                    return Err(invalid(format!("{ctx}: {name} earliest > latest")));
                }
            }
            if !(r.service_time >= 0.0) {
                return Err(invalid(format!("{ctx}: negative service time")));
            }
            req_pos.push((lookup(r.pickup, &ctx)?, lookup(r.delivery, &ctx)?));
        }

        let mut leg_pos = Vec::with_capacity(data.legs.len());
        for (i, leg) in data.legs.iter().enumerate() {
            let ctx = format!("legs[{i}]");
            let a = lookup(leg.from_station, &ctx)?;
            let b = lookup(leg.to_station, &ctx)?;
            if a == b {
                return Err(invalid(format!("{ctx}: leg starts and ends at the same station")));
            }
            for p in [a, b] {
                if data.nodes[p].kind != NodeKind::Station {
                    return Err(invalid(format!("{ctx}: node {} is not a station", data.nodes[p].id)));
                }
            }
            if !(leg.travel_time >= 0.0) {
                return Err(invalid(format!("{ctx}: negative travel time")));
            }
            if !(leg.capacity_per_departure >= 0.0) {
                return Err(invalid(format!("{ctx}: negative capacity")));
            }
            if !(leg.tariff >= 0.0) {
                return Err(invalid(format!("{ctx}: negative tariff")));
            }
            if leg.departures.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(invalid(format!("{ctx}: departures must be strictly increasing")));
            }
            leg_pos.push((a, b));
        }

        let depot_ids: Vec<usize> = if !fleet.depots.is_empty() {
            fleet.depots.clone()
        } else {
            let depots: Vec<usize> = data
                .nodes
                .iter()
                .filter(|n| n.kind == NodeKind::Depot)
                .map(|n| n.id)
                .collect();
            if depots.is_empty() {
                data.nodes
                    .iter()
                    .filter(|n| n.kind == NodeKind::Station)
                    .map(|n| n.id)
                    .collect()
            } else {
                depots
            }
        };
        if fleet.n_vehicles > 0 && depot_ids.is_empty() {
            return Err(invalid("fleet has vehicles but the instance has no depot"));
        }
        let depot_pos = depot_ids
            .iter()
            .map(|&id| lookup(id, "fleet.depots"))
            .collect::<Result<Vec<_>, _>>()?;
        let vehicle_depot = (0..fleet.n_vehicles).map(|v| depot_pos[v % depot_pos.len()]).collect();

        let mut dist = vec![0.0; n * n];
        match &data.dist_matrix {
            Some(m) => {
                if m.len() != n {
                    return Err(invalid(format!("dist_matrix has {} rows, expected {n}", m.len())));
                }
                for (i, row) in m.iter().enumerate() {
                    if row.len() != n {
                        return Err(invalid(format!(
                            "dist_matrix[{i}] has {} entries, expected {n}",
                            row.len()
                        )));
                    }
                    for (j, &v) in row.iter().enumerate() {
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(invalid(format!(
                                "dist_matrix[{i}][{j}] must be finite and non-negative"
                            )));
                        }
                        if i == j && v != 0.0 {
                            return Err(invalid(format!("dist_matrix[{i}][{i}] must be zero")));
                        }
                        dist[i * n + j] = v;
                    }
                }
            }
            None => {
                for (i, a) in data.nodes.iter().enumerate() {
                    for (j, b) in data.nodes.iter().enumerate() {
                        dist[i * n + j] = euclidean(a.x, a.y, b.x, b.y);
                    }
                }
            }
        }

        Ok(Self {
            data,
            dist,
            n,
            pos_of_id,
            req_pos,
            leg_pos,
            vehicle_depot,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let data: InstanceData = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        Self::new(data)
    }

    /// Pretty JSON; parse followed by serialize reproduces the same bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.data).expect("instance data is always serializable")
    }

    pub fn data(&self) -> &InstanceData {
        &self.data
    }

    pub fn into_data(self) -> InstanceData {
        self.data
    }

    pub fn nodes(&self) -> &[Node] {
        &self.data.nodes
    }

    pub fn requests(&self) -> &[Request] {
        &self.data.requests
    }

    pub fn legs(&self) -> &[ScheduledLeg] {
        &self.data.legs
    }

    pub fn fleet(&self) -> &Fleet {
        &self.data.fleet
    }

    pub fn phi(&self) -> f64 {
        self.data.phi
    }

    pub fn horizon(&self) -> TimeWindow {
        TimeWindow::new(self.data.horizon[0], self.data.horizon[1])
    }

    pub fn n_requests(&self) -> usize {
        self.data.requests.len()
    }

    pub fn n_vehicles(&self) -> usize {
        self.data.fleet.n_vehicles
    }

    /// Dense position of a node id.
    pub fn node_pos(&self, id: usize) -> Option<usize> {
        self.pos_of_id.get(&id).copied()
    }

    pub fn node_id(&self, pos: usize) -> usize {
        self.data.nodes[pos].id
    }

    /// Distance between two dense node positions.
    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    /// Travel time between two dense node positions at fleet speed.
    #[inline]
    pub fn travel_time(&self, a: usize, b: usize) -> f64 {
        self.dist(a, b) / self.data.fleet.speed
    }

    /// Distance between two node ids.
    pub fn dist_by_id(&self, a: usize, b: usize) -> Option<f64> {
        Some(self.dist(self.node_pos(a)?, self.node_pos(b)?))
    }

    /// `(pickup, delivery)` node positions of request `r`.
    #[inline]
    pub fn request_pos(&self, r: usize) -> (usize, usize) {
        self.req_pos[r]
    }

    /// `(from, to)` station positions of leg `l`.
    #[inline]
    pub fn leg_pos(&self, l: usize) -> (usize, usize) {
        self.leg_pos[l]
    }

    /// Home depot position of vehicle `v`.
    #[inline]
    pub fn vehicle_depot(&self, v: usize) -> usize {
        self.vehicle_depot[v]
    }

    pub fn is_matrix_only(&self) -> bool {
        self.data.dist_matrix.is_some()
    }

    /// Dense node position where a visit takes place.
    #[inline]
    pub fn visit_pos(&self, visit: Visit, assignment: Option<SlAssignment>) -> usize {
        let (p, d) = self.req_pos[visit.request];
        match visit.kind {
            VisitKind::Pickup => p,
            VisitKind::Delivery => d,
            VisitKind::Drop => self.leg_pos[assignment.expect("drop visit without assignment").leg].0,
            VisitKind::Collect => self.leg_pos[assignment.expect("collect visit without assignment").leg].1,
        }
    }

    /// Service-start window of a visit. Station visits inherit the horizon,
    /// tightened by the assigned departure.
    pub fn visit_window(&self, visit: Visit, assignment: Option<SlAssignment>) -> TimeWindow {
        let r = &self.data.requests[visit.request];
        let h = self.horizon();
        match visit.kind {
            VisitKind::Pickup => r.tw_pickup,
            VisitKind::Delivery => r.tw_delivery,
            VisitKind::Drop => {
                let a = assignment.expect("drop visit without assignment");
                let dep = self.data.legs[a.leg].departures[a.departure];
                TimeWindow::new(h.earliest, (dep - r.service_time).min(h.latest))
            }
            VisitKind::Collect => {
                let a = assignment.expect("collect visit without assignment");
                let leg = &self.data.legs[a.leg];
                TimeWindow::new(
                    (leg.departures[a.departure] + leg.travel_time).max(h.earliest),
                    h.latest,
                )
            }
        }
    }

    /// Change in vehicle load when the visit is served.
    #[inline]
    pub fn load_delta(&self, visit: Visit) -> f64 {
        let q = self.data.requests[visit.request].demand;
        match visit.kind {
            VisitKind::Pickup | VisitKind::Collect => q,
            VisitKind::Delivery | VisitKind::Drop => -q,
        }
    }

    #[inline]
    pub fn service_time(&self, request: usize) -> f64 {
        self.data.requests[request].service_time
    }

    /// Scheduled-line cost of carrying request `r` on leg `l`.
    #[inline]
    pub fn flow_cost(&self, r: usize, l: usize) -> f64 {
        self.data.legs[l].tariff * self.data.requests[r].demand
    }
}

pub fn euclidean(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    (ax - bx).hypot(ay - by)
}

/// The upper-level decision: subsidy fraction `s` and road tax rate `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub s: f64,
    pub t: f64,
}

impl Policy {
    /// No subsidy, no tax.
    pub const BASE: Policy = Policy { s: 0.0, t: 0.0 };
    /// Free scheduled line, no tax.
    pub const FULL_SUBSIDY: Policy = Policy { s: 1.0, t: 0.0 };

    pub fn new(s: f64, t: f64) -> Result<Self, ModelError> {
        let p = Self { s, t };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.s) {
            return Err(ModelError::InvalidPolicy(format!("subsidy {} outside [0, 1]", self.s)));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(ModelError::InvalidPolicy(format!(
                "tax {} must be finite and >= 0",
                self.t
            )));
        }
        Ok(())
    }

    /// Weight of driven distance in the forwarder objective, `(1 + t) * phi`.
    #[inline]
    pub fn distance_weight(&self, phi: f64) -> f64 {
        (1.0 + self.t) * phi
    }

    /// Weight of scheduled-line flow cost in the forwarder objective, `1 - s`.
    #[inline]
    pub fn flow_weight(&self) -> f64 {
        1.0 - self.s
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s={}, t={})", self.s, self.t)
    }
}

/// Forwarder cost `(1 + t) * phi * d + (1 - s) * f`.
#[inline]
pub fn evaluate_objective(d: f64, f: f64, policy: Policy, phi: f64) -> f64 {
    policy.distance_weight(phi) * d + policy.flow_weight() * f
}

/// Authority spending `s * f - t * phi * d`: subsidy paid minus tax collected.
#[inline]
pub fn realized_budget(d: f64, f: f64, policy: Policy, phi: f64) -> f64 {
    policy.s * f - policy.t * phi * d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitKind {
    Pickup,
    Delivery,
    /// Hand-over of the freight to the scheduled line at the origin station.
    Drop,
    /// Take-over of the freight from the scheduled line at the destination station.
    Collect,
}

/// One stop of a request on a vehicle route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Visit {
    pub request: usize,
    pub kind: VisitKind,
}

impl Visit {
    pub fn new(request: usize, kind: VisitKind) -> Self {
        Self { request, kind }
    }
}

/// Scheduled-line assignment of a request: leg index and departure index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlAssignment {
    pub leg: usize,
    pub departure: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Start,
    Pickup,
    Delivery,
    Drop,
    Collect,
    End,
}

impl From<VisitKind> for StopKind {
    fn from(k: VisitKind) -> Self {
        match k {
            VisitKind::Pickup => StopKind::Pickup,
            VisitKind::Delivery => StopKind::Delivery,
            VisitKind::Drop => StopKind::Drop,
            VisitKind::Collect => StopKind::Collect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    /// Node id.
    pub node: usize,
    pub kind: StopKind,
    /// Request index for visit stops, `None` at the depot.
    pub request: Option<usize>,
    pub arrival: f64,
    /// Service start; may be later than `arrival` when waiting for a window.
    pub start: f64,
    pub departure: f64,
    /// Vehicle load after service.
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub vehicle: usize,
    pub stops: Vec<Stop>,
}

impl Route {
    pub fn visits(&self) -> impl Iterator<Item = &Stop> {
        self.stops.iter().filter(|s| s.request.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.visits().next().is_none()
    }

    pub fn max_load(&self) -> f64 {
        self.stops.iter().map(|s| s.load).fold(0.0, f64::max)
    }
}

/// A lower-level solution: vehicle routes, scheduled-line assignments, and
/// the totals `d` (driven distance) and `f` (scheduled-line flow cost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub routes: Vec<Route>,
    /// Indexed by request position.
    pub sl_assignments: Vec<Option<SlAssignment>>,
    pub d: f64,
    pub f: f64,
}

impl Solution {
    /// The empty solution of an instance without requests.
    pub fn empty(inst: &Instance) -> Self {
        Self {
            routes: Vec::new(),
            sl_assignments: vec![None; inst.n_requests()],
            d: 0.0,
            f: 0.0,
        }
    }

    /// Builds routes with earliest-start schedules from visit sequences.
    ///
    /// Times are computed even when a window cannot be met; such solutions
    /// fail [`validate_solution`].
    pub fn assemble(
        inst: &Instance,
        vehicle_visits: &[(usize, Vec<Visit>)],
        sl_assignments: Vec<Option<SlAssignment>>,
    ) -> Self {
        let h = inst.horizon();
        let mut routes = Vec::new();
        let mut d = 0.0;
        for (vehicle, visits) in vehicle_visits {
            if visits.is_empty() {
                continue;
            }
            let depot = inst.vehicle_depot(*vehicle);
            let depot_id = inst.node_id(depot);
            let mut stops = Vec::with_capacity(visits.len() + 2);
            stops.push(Stop {
                node: depot_id,
                kind: StopKind::Start,
                request: None,
                arrival: h.earliest,
                start: h.earliest,
                departure: h.earliest,
                load: 0.0,
            });
            let mut pos = depot;
            let mut time = h.earliest;
            let mut load = 0.0;
            let mut route_d = 0.0;
            for &v in visits {
                let a = sl_assignments[v.request];
                let next = inst.visit_pos(v, a);
                let arrival = time + inst.travel_time(pos, next);
                route_d += inst.dist(pos, next);
                let start = arrival.max(inst.visit_window(v, a).earliest);
                let departure = start + inst.service_time(v.request);
                load += inst.load_delta(v);
                stops.push(Stop {
                    node: inst.node_id(next),
                    kind: v.kind.into(),
                    request: Some(v.request),
                    arrival,
                    start,
                    departure,
                    load,
                });
                pos = next;
                time = departure;
            }
            let arrival = time + inst.travel_time(pos, depot);
            route_d += inst.dist(pos, depot);
            d += route_d;
            stops.push(Stop {
                node: depot_id,
                kind: StopKind::End,
                request: None,
                arrival,
                start: arrival,
                departure: arrival,
                load,
            });
            routes.push(Route {
                vehicle: *vehicle,
                stops,
            });
        }
        let f = flow_total(inst, &sl_assignments);
        Self {
            routes,
            sl_assignments,
            d,
            f,
        }
    }

    pub fn n_vehicles_used(&self) -> usize {
        self.routes.iter().filter(|r| !r.is_empty()).count()
    }

    pub fn max_load(&self) -> f64 {
        self.routes.iter().map(Route::max_load).fold(0.0, f64::max)
    }
}

fn flow_total(inst: &Instance, assignments: &[Option<SlAssignment>]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .filter_map(|(r, a)| a.map(|a| inst.flow_cost(r, a.leg)))
        .sum()
}

/// Share of requests carried on the scheduled line (request count).
pub fn modal_shift(sol: &Solution, inst: &Instance) -> f64 {
    let n = inst.n_requests();
    if n == 0 {
        return 0.0;
    }
    sol.sl_assignments.iter().filter(|a| a.is_some()).count() as f64 / n as f64
}

/// Share of freight demand carried on the scheduled line.
pub fn modal_shift_by_demand(sol: &Solution, inst: &Instance) -> f64 {
    let total: f64 = inst.requests().iter().map(|r| r.demand).sum();
    if total == 0.0 {
        return 0.0;
    }
    let shifted: f64 = sol
        .sl_assignments
        .iter()
        .zip(inst.requests())
        .filter(|(a, _)| a.is_some())
        .map(|(_, r)| r.demand)
        .sum();
    shifted / total
}

pub fn forwarder_cost(sol: &Solution, policy: Policy, phi: f64) -> f64 {
    evaluate_objective(sol.d, sol.f, policy, phi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    Unserved {
        request: usize,
    },
    ServedMoreThanOnce {
        request: usize,
        kind: VisitKind,
    },
    ModeMismatch {
        request: usize,
        detail: String,
    },
    Precedence {
        request: usize,
        detail: String,
    },
    WrongNode {
        vehicle: usize,
        stop: usize,
    },
    DepotMismatch {
        vehicle: usize,
    },
    DuplicateVehicle {
        vehicle: usize,
    },
    LoadMismatch {
        vehicle: usize,
        stop: usize,
        stored: f64,
        expected: f64,
    },
    Capacity {
        vehicle: usize,
        stop: usize,
        load: f64,
    },
    NegativeLoad {
        vehicle: usize,
        stop: usize,
    },
    Timing {
        vehicle: usize,
        stop: usize,
        detail: String,
    },
    TimeWindow {
        vehicle: usize,
        stop: usize,
        start: f64,
        window: [f64; 2],
    },
    DropAfterDeparture {
        request: usize,
        completion: f64,
        departure: f64,
    },
    CollectBeforeArrival {
        request: usize,
        start: f64,
        arrival: f64,
    },
    LineCapacity {
        leg: usize,
        departure: usize,
        load: f64,
        capacity: f64,
    },
    DistanceMismatch {
        stored: f64,
        recomputed: f64,
    },
    FlowMismatch {
        stored: f64,
        recomputed: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    pub recomputed_d: f64,
    pub recomputed_f: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOTALS_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Clone, Copy, Default)]
struct Seen {
    // (vehicle, stop index, service start, departure)
    pickup: Option<(usize, usize, f64, f64)>,
    delivery: Option<(usize, usize, f64, f64)>,
    drop: Option<(usize, usize, f64, f64)>,
    collect: Option<(usize, usize, f64, f64)>,
}

/// Checks every routing, timing, capacity and synchronization constraint of a
/// solution and recomputes its totals.
///
/// Returns an error only for structural problems (unknown node, request, leg,
/// departure or vehicle references). Constraint violations are listed in the
/// report.
pub fn validate_solution(inst: &Instance, sol: &Solution) -> Result<FeasibilityReport, ModelError> {
    let n_req = inst.n_requests();
    if sol.sl_assignments.len() != n_req {
        return Err(ModelError::UnknownReference {
            what: "request",
            id: sol.sl_assignments.len().max(n_req),
        });
    }
    for a in sol.sl_assignments.iter().flatten() {
        let leg = inst
            .legs()
            .get(a.leg)
            .ok_or(ModelError::UnknownReference { what: "leg", id: a.leg })?;
        if a.departure >= leg.departures.len() {
            return Err(ModelError::UnknownReference {
                what: "departure",
                id: a.departure,
            });
        }
    }
    for route in &sol.routes {
        if route.vehicle >= inst.n_vehicles() {
            return Err(ModelError::UnknownReference {
                what: "vehicle",
                id: route.vehicle,
            });
        }
        for stop in &route.stops {
            if inst.node_pos(stop.node).is_none() {
                return Err(ModelError::UnknownReference {
                    what: "node",
                    id: stop.node,
                });
            }
            if let Some(r) = stop.request {
                if r >= n_req {
                    return Err(ModelError::UnknownReference { what: "request", id: r });
                }
            }
        }
    }

    let mut violations = Vec::new();
    let cap = inst.fleet().capacity;
    let h = inst.horizon();
    let mut seen = vec![Seen::default(); n_req];
    let mut vehicles = vec![false; inst.n_vehicles()];
    let mut d = 0.0;

    for route in &sol.routes {
        let v = route.vehicle;
        if std::mem::replace(&mut vehicles[v], true) {
            violations.push(Violation::DuplicateVehicle { vehicle: v });
        }
        let depot = inst.node_id(inst.vehicle_depot(v));
        let stops = &route.stops;
        let well_formed = stops.len() >= 2
            && stops[0].kind == StopKind::Start
            && stops[stops.len() - 1].kind == StopKind::End
            && stops[0].node == depot
            && stops[stops.len() - 1].node == depot
            && stops[1..stops.len() - 1]
                .iter()
                .all(|s| s.request.is_some() && !matches!(s.kind, StopKind::Start | StopKind::End));
        if !well_formed {
            violations.push(Violation::DepotMismatch { vehicle: v });
            continue;
        }
        let mut load = 0.0;
        for (k, stop) in stops.iter().enumerate() {
            let pos = inst.node_pos(stop.node).expect("checked above");
            if k > 0 {
                let prev = &stops[k - 1];
                let prev_pos = inst.node_pos(prev.node).expect("checked above");
                d += inst.dist(prev_pos, pos);
                let earliest_arrival = prev.departure + inst.travel_time(prev_pos, pos);
                if stop.arrival < earliest_arrival - TIME_EPS {
                    violations.push(Violation::Timing {
                        vehicle: v,
                        stop: k,
                        detail: format!("arrival {} before {}", stop.arrival, earliest_arrival),
                    });
                }
            } else if stop.departure < h.earliest - TIME_EPS {
                violations.push(Violation::Timing {
                    vehicle: v,
                    stop: k,
                    detail: "departure before horizon start".into(),
                });
            }
            if stop.start < stop.arrival - TIME_EPS {
                violations.push(Violation::Timing {
                    vehicle: v,
                    stop: k,
                    detail: "service starts before arrival".into(),
                });
            }

            let (window, service) = match (stop.kind, stop.request) {
                (StopKind::Start | StopKind::End, _) => (h, 0.0),
                (kind, Some(r)) => {
                    let visit_kind = match kind {
                        StopKind::Pickup => VisitKind::Pickup,
                        StopKind::Delivery => VisitKind::Delivery,
                        StopKind::Drop => VisitKind::Drop,
                        _ => VisitKind::Collect,
                    };
                    let visit = Visit::new(r, visit_kind);
                    let a = sol.sl_assignments[r];
                    let is_station = matches!(visit_kind, VisitKind::Drop | VisitKind::Collect);
                    if is_station && a.is_none() {
                        violations.push(Violation::ModeMismatch {
                            request: r,
                            detail: "station stop for a road-only request".into(),
                        });
                        continue;
                    }
                    if inst.visit_pos(visit, a) != pos {
                        violations.push(Violation::WrongNode { vehicle: v, stop: k });
                    }
                    let slot = match visit_kind {
                        VisitKind::Pickup => &mut seen[r].pickup,
                        VisitKind::Delivery => &mut seen[r].delivery,
                        VisitKind::Drop => &mut seen[r].drop,
                        VisitKind::Collect => &mut seen[r].collect,
                    };
                    if slot.is_some() {
                        violations.push(Violation::ServedMoreThanOnce {
                            request: r,
                            kind: visit_kind,
                        });
                    }
                    *slot = Some((v, k, stop.start, stop.departure));
                    load += inst.load_delta(visit);
                    // Station stops are checked against the horizon here; the
                    // synchronization rules are checked per request below.
                    let window = if is_station { h } else { inst.visit_window(visit, a) };
                    (window, inst.service_time(r))
                }
                _ => unreachable!("well-formed routes have requests on visit stops"),
            };
            if stop.departure < stop.start + service - TIME_EPS {
                violations.push(Violation::Timing {
                    vehicle: v,
                    stop: k,
                    detail: "departure before service completes".into(),
                });
            }
            let checked_time = if stop.kind == StopKind::End {
                stop.arrival
            } else {
                stop.start
            };
            if checked_time < window.earliest - TIME_EPS || checked_time > window.latest + TIME_EPS {
                violations.push(Violation::TimeWindow {
                    vehicle: v,
                    stop: k,
                    start: checked_time,
                    window: [window.earliest, window.latest],
                });
            }
            if (stop.load - load).abs() > TIME_EPS {
                violations.push(Violation::LoadMismatch {
                    vehicle: v,
                    stop: k,
                    stored: stop.load,
                    expected: load,
                });
            }
            if load > cap + TIME_EPS {
                violations.push(Violation::Capacity {
                    vehicle: v,
                    stop: k,
                    load,
                });
            }
            if load < -TIME_EPS {
                violations.push(Violation::NegativeLoad { vehicle: v, stop: k });
            }
        }
    }

    let mut line_load: Vec<Vec<f64>> = inst.legs().iter().map(|l| vec![0.0; l.departures.len()]).collect();
    for (r, s) in seen.iter().enumerate() {
        let a = sol.sl_assignments[r];
        let ordered = |first: Option<(usize, usize, f64, f64)>,
                       second: Option<(usize, usize, f64, f64)>,
                       what: &str| match (first, second) {
            (Some((v1, k1, ..)), Some((v2, k2, ..))) if v1 != v2 || k1 >= k2 => Some(Violation::Precedence {
                request: r,
                detail: what.to_string(),
            }),
            _ => None,
        };
        match a {
            None => {
                if s.pickup.is_none() || s.delivery.is_none() {
                    violations.push(Violation::Unserved { request: r });
                    continue;
                }
                violations.extend(ordered(
                    s.pickup,
                    s.delivery,
                    "pickup must precede delivery on the same vehicle",
                ));
            }
            Some(a) => {
                if s.pickup.is_none() || s.delivery.is_none() || s.drop.is_none() || s.collect.is_none() {
                    violations.push(Violation::Unserved { request: r });
                    continue;
                }
                violations.extend(ordered(
                    s.pickup,
                    s.drop,
                    "pickup must precede the station drop on the same vehicle",
                ));
                violations.extend(ordered(
                    s.collect,
                    s.delivery,
                    "station collect must precede delivery on the same vehicle",
                ));
                let leg = &inst.legs()[a.leg];
                let dep = leg.departures[a.departure];
                let (_, _, drop_start, _) = s.drop.expect("checked");
                let completion = drop_start + inst.service_time(r);
                if completion > dep + TIME_EPS {
                    violations.push(Violation::DropAfterDeparture {
                        request: r,
                        completion,
                        departure: dep,
                    });
                }
                let (_, _, collect_start, _) = s.collect.expect("checked");
                if collect_start < dep + leg.travel_time - TIME_EPS {
                    violations.push(Violation::CollectBeforeArrival {
                        request: r,
                        start: collect_start,
                        arrival: dep + leg.travel_time,
                    });
                }
                line_load[a.leg][a.departure] += inst.requests()[r].demand;
            }
        }
    }
    for (l, loads) in line_load.iter().enumerate() {
        let capacity = inst.legs()[l].capacity_per_departure;
        for (w, &load) in loads.iter().enumerate() {
            if load > capacity + TIME_EPS {
                violations.push(Violation::LineCapacity {
                    leg: l,
                    departure: w,
                    load,
                    capacity,
                });
            }
        }
    }

    let f = flow_total(inst, &sol.sl_assignments);
    if !close(sol.d, d) {
        violations.push(Violation::DistanceMismatch {
            stored: sol.d,
            recomputed: d,
        });
    }
    if !close(sol.f, f) {
        violations.push(Violation::FlowMismatch {
            stored: sol.f,
            recomputed: f,
        });
    }
    Ok(FeasibilityReport {
        violations,
        recomputed_d: d,
        recomputed_f: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn line_instance(windows: ([f64; 2], [f64; 2])) -> Instance {
        // depot at 0, pickup at 3, delivery at 7 on the x axis.
        Instance::new(InstanceData {
            nodes: vec![
                Node {
                    id: 0,
                    x: 0.0,
                    y: 0.0,
                    kind: NodeKind::Depot,
                },
                Node {
                    id: 1,
                    x: 3.0,
                    y: 0.0,
                    kind: NodeKind::Pickup,
                },
                Node {
                    id: 2,
                    x: 7.0,
                    y: 0.0,
                    kind: NodeKind::Delivery,
                },
            ],
            requests: vec![Request {
                id: 0,
                pickup: 1,
                delivery: 2,
                demand: 5.0,
                tw_pickup: windows.0.into(),
                tw_delivery: windows.1.into(),
                service_time: 1.0,
            }],
            legs: vec![],
            fleet: Fleet {
                n_vehicles: 1,
                capacity: 10.0,
                speed: 1.0,
                depots: vec![],
            },
            phi: 1.0,
            horizon: [0.0, 100.0],
            dist_matrix: None,
        })
        .unwrap()
    }

    fn direct_route(inst: &Instance) -> Solution {
        Solution::assemble(
            inst,
            &[(
                0,
                vec![Visit::new(0, VisitKind::Pickup), Visit::new(0, VisitKind::Delivery)],
            )],
            vec![None],
        )
    }

    #[test]
    fn objective_examples() {
        let p = Policy::new(0.5, 2.0 / 3.0).unwrap();
        assert!((evaluate_objective(15.0, 20.0, p, 1.0) - 35.0).abs() < 1e-12);
        assert_eq!(evaluate_objective(100.0, 40.0, Policy::FULL_SUBSIDY, 1.0), 100.0);
        let p = Policy::new(0.6, 0.15).unwrap();
        assert!((evaluate_objective(20.0, 5.0, p, 1.0) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn budget_examples() {
        let p = Policy::new(0.5, 2.0 / 3.0).unwrap();
        assert!(realized_budget(15.0, 20.0, p, 1.0).abs() < 1e-12);
        let p = Policy::new(0.6, 0.15).unwrap();
        assert!(realized_budget(20.0, 5.0, p, 1.0).abs() < 1e-12);
        assert_eq!(realized_budget(0.0, 0.0, Policy::new(0.3, 1.7).unwrap(), 2.0), 0.0);
    }

    #[test]
    fn policy_domain() {
        assert!(Policy::new(1.1, 0.0).is_err());
        assert!(Policy::new(-0.1, 0.0).is_err());
        assert!(Policy::new(0.5, -1e-9).is_err());
        assert!(Policy::new(1.0, 3.0).is_ok());
    }

    #[test]
    fn empty_solution_on_empty_instance_is_feasible() {
        let mut data = line_instance(([0.0, 10.0], [0.0, 20.0])).into_data();
        data.requests.clear();
        let inst = Instance::new(data).unwrap();
        let report = validate_solution(&inst, &Solution::empty(&inst)).unwrap();
        assert!(report.is_feasible());
        assert_eq!(report.recomputed_d, 0.0);
    }

    #[test]
    fn hand_built_direct_route() {
        // depot(0) -> pickup(3): arrive 3, window [5,10] so start 5, leave 6;
        // -> delivery(7): arrive 10, window [8,20], start 10, leave 11; back at 18.
        let inst = line_instance(([5.0, 10.0], [8.0, 20.0]));
        let sol = direct_route(&inst);
        let stops = &sol.routes[0].stops;
        assert_eq!(stops[1].arrival, 3.0);
        assert_eq!(stops[1].start, 5.0);
        assert_eq!(stops[2].arrival, 10.0);
        assert_eq!(stops[3].arrival, 18.0);
        assert_eq!(sol.d, 14.0);
        let report = validate_solution(&inst, &sol).unwrap();
        assert!(report.is_feasible(), "{:?}", report.violations);
    }

    #[test]
    fn delivery_window_too_early_flags_one_violation() {
        // Earliest achievable delivery start is 10; close the window at 9.
        let inst = line_instance(([5.0, 10.0], [2.0, 9.0]));
        let sol = direct_route(&inst);
        let report = validate_solution(&inst, &sol).unwrap();
        assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
        assert!(matches!(report.violations[0], Violation::TimeWindow { stop: 2, .. }));
    }

    #[test]
    fn unknown_references_are_errors() {
        let inst = line_instance(([0.0, 10.0], [0.0, 20.0]));
        let mut sol = direct_route(&inst);
        sol.routes[0].stops[1].node = 99;
        assert!(matches!(
            validate_solution(&inst, &sol),
            Err(ModelError::UnknownReference { what: "node", id: 99 })
        ));
        let mut sol = direct_route(&inst);
        sol.sl_assignments[0] = Some(SlAssignment { leg: 3, departure: 0 });
        assert!(validate_solution(&inst, &sol).is_err());
    }

    #[test]
    fn tampered_totals_and_missing_requests_are_flagged() {
        let inst = line_instance(([0.0, 10.0], [0.0, 20.0]));
        let mut sol = direct_route(&inst);
        sol.d += 1e-6;
        let report = validate_solution(&inst, &sol).unwrap();
        assert!(matches!(report.violations[..], [Violation::DistanceMismatch { .. }]));

        let mut sol = direct_route(&inst);
        sol.routes.clear();
        sol.d = 0.0;
        let report = validate_solution(&inst, &sol).unwrap();
        assert!(matches!(report.violations[..], [Violation::Unserved { request: 0 }]));
    }

    #[test]
    fn modal_shift_counts() {
        let inst = line_instance(([0.0, 10.0], [0.0, 20.0]));
        let mut sol = Solution::empty(&inst);
        assert_eq!(modal_shift(&sol, &inst), 0.0);
        sol.sl_assignments = vec![Some(SlAssignment { leg: 0, departure: 0 })];
        assert_eq!(modal_shift(&sol, &inst), 1.0);
        assert_eq!(modal_shift_by_demand(&sol, &inst), 1.0);
    }

    #[test]
    fn instance_rejects_bad_data() {
        let good = line_instance(([0.0, 10.0], [0.0, 20.0])).into_data();

        let mut d = good.clone();
        d.requests[0].demand = 0.0;
        assert!(Instance::new(d).is_err());

        let mut d = good.clone();
        d.requests[0].tw_pickup = TimeWindow::new(5.0, 4.0);
        assert!(Instance::new(d).is_err());

        let mut d = good.clone();
        d.requests[0].delivery = 42;
        assert!(Instance::new(d).is_err());

        let mut d = good.clone();
        d.phi = 0.0;
        assert!(Instance::new(d).is_err());

        let mut d = good.clone();
        d.dist_matrix = Some(vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, -1.0], vec![2.0, 1.0, 0.0]]);
        assert!(Instance::new(d).is_err());

        let mut d = good;
        d.nodes[2].id = 1;
        assert!(Instance::new(d).is_err());
    }

    #[test]
    fn explicit_matrix_may_be_asymmetric() {
        let mut d = line_instance(([0.0, 10.0], [0.0, 20.0])).into_data();
        d.dist_matrix = Some(vec![vec![0.0, 1.0, 2.0], vec![1.5, 0.0, 3.0], vec![2.0, 1.0, 0.0]]);
        let inst = Instance::new(d).unwrap();
        assert_eq!(inst.dist_by_id(0, 1), Some(1.0));
        assert_eq!(inst.dist_by_id(1, 0), Some(1.5));
    }
}
