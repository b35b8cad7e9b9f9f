//! Synthetic instances: stations on a line that double as depots, orders
//! sampled around stations, and a scheduled line between every station pair.

use crate::model::{
    euclidean, Fleet, Instance, InstanceData, ModelError, Node, NodeKind, Request, ScheduledLeg, TimeWindow,
};
use crate::policy::ScenarioSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const METRO_SPACING: f64 = 20.0;
pub const RADIUS: f64 = METRO_SPACING / 2.0;
pub const HORIZON: f64 = 480.0;
pub const PHI: f64 = 0.25;
pub const TARIFF_PER_DISTANCE: f64 = 0.1;
pub const TIGHT_WIDTH: f64 = 45.0;
pub const WIDE_WIDTH: f64 = 60.0;
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("request {request}: no directly serviceable sample after {MAX_ATTEMPTS} attempts")]
    ResamplingExhausted { request: usize },
    #[error("scatteredness needs coordinates; the instance uses an explicit distance matrix")]
    MatrixOnly,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geography {
    Intercity,
    Metropolitan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Allocation {
    /// Pickup and delivery have different nearest stations.
    Different,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwClass {
    Tight,
    Wide,
}

impl TwClass {
    pub fn width(self) -> f64 {
        match self {
            TwClass::Tight => TIGHT_WIDTH,
            TwClass::Wide => WIDE_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub geography: Geography,
    pub allocation: Allocation,
    pub tw_class: TwClass,
    pub n_requests: usize,
    pub n_stations: usize,
    pub seed: u64,
    pub frequency_per_hour: u32,
    pub scatteredness_k: f64,
    /// Defaults to one vehicle per request.
    pub n_vehicles: Option<usize>,
    pub vehicle_capacity: f64,
    pub leg_capacity: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            geography: Geography::Intercity,
            allocation: Allocation::Different,
            tw_class: TwClass::Wide,
            n_requests: 25,
            n_stations: 3,
            seed: 0,
            frequency_per_hour: 4,
            scatteredness_k: 1.0,
            n_vehicles: None,
            vehicle_capacity: 25.0,
            leg_capacity: 60.0,
        }
    }
}

impl GenSpec {
    /// Short family label such as `Inter-Diff-W`.
    pub fn family(&self) -> String {
        let g = match self.geography {
            Geography::Intercity => "Inter",
            Geography::Metropolitan => "Metro",
        };
        let a = match self.allocation {
            Allocation::Different => "Diff",
            Allocation::Random => "Rand",
        };
        let w = match self.tw_class {
            TwClass::Tight => "T",
            TwClass::Wide => "W",
        };
        format!("{g}-{a}-{w}")
    }

    fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_string()));
        if self.frequency_per_hour < 1 {
            return bad("frequency_per_hour must be >= 1");
        }
        if self.n_stations < 1 {
            return bad("n_stations must be >= 1");
        }
        if self.allocation == Allocation::Different && self.n_stations < 2 && self.n_requests > 0 {
            return bad("allocation Different needs at least two stations");
        }
        if !(self.scatteredness_k >= 0.0) {
            return bad("scatteredness_k must be >= 0");
        }
        if !(self.vehicle_capacity >= 10.0) {
            return bad("vehicle_capacity must hold the largest demand (10)");
        }
        Ok(())
    }
}

fn spacing(g: Geography) -> f64 {
    match g {
        Geography::Intercity => 2.0 * METRO_SPACING,
        Geography::Metropolitan => METRO_SPACING,
    }
}

fn sample_near(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> (f64, f64) {
    let r = RADIUS * rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    (cx + r * a.cos(), cy + r * a.sin())
}

fn nearest(stations: &[(f64, f64)], x: f64, y: f64) -> usize {
    let mut best = 0;
    for (i, s) in stations.iter().enumerate() {
        if euclidean(x, y, s.0, s.1) < euclidean(x, y, stations[best].0, stations[best].1) {
            best = i;
        }
    }
    best
}

/// Departures every `60 / per_hour` time units from the horizon start.
pub fn departures(horizon: [f64; 2], per_hour: u32) -> Vec<f64> {
    let headway = 60.0 / f64::from(per_hour);
    let mut out = Vec::new();
    let mut hour = 0u32;
    loop {
        let base = horizon[0] + 60.0 * f64::from(hour);
        if base >= horizon[1] {
            return out;
        }
        for k in 0..per_hour {
            let t = base + f64::from(k) * headway;
            if t < horizon[1] {
                out.push(t);
            }
        }
        hour += 1;
    }
}

pub fn generate(spec: &GenSpec) -> Result<Instance, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sp = spacing(spec.geography);
    let stations: Vec<(f64, f64)> = (0..spec.n_stations).map(|i| (i as f64 * sp, 0.0)).collect();
    let mut nodes: Vec<Node> = stations
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Node {
            id: i,
            x,
            y,
            kind: NodeKind::Station,
        })
        .collect();
    let width = spec.tw_class.width();
    let speed = 1.0;
    let mut requests = Vec::with_capacity(spec.n_requests);
    for r in 0..spec.n_requests {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let sa = rng.gen_range(0..stations.len());
            let sb = match spec.allocation {
                Allocation::Different => {
                    let k = rng.gen_range(0..stations.len() - 1);
                    if k >= sa {
                        k + 1
                    } else {
                        k
                    }
                }
                Allocation::Random => rng.gen_range(0..stations.len()),
            };
            let p = sample_near(&mut rng, stations[sa].0, stations[sa].1);
            let d = sample_near(&mut rng, stations[sb].0, stations[sb].1);
            if spec.allocation == Allocation::Different && nearest(&stations, p.0, p.1) == nearest(&stations, d.0, d.1)
            {
                continue;
            }
            let direct = euclidean(p.0, p.1, d.0, d.1) / speed;
            let latest_open = HORIZON - direct - width;
            if latest_open < 0.0 {
                continue;
            }
            let open = rng.gen_range(0.0..=latest_open).floor();
            let tw_p = TimeWindow::new(open, open + width);
            let tw_d = TimeWindow::new((open + direct).ceil(), (open + direct).ceil() + width);
            // Some depot vehicle must serve it directly.
            let ok = stations.iter().any(|s| {
                let arrive = euclidean(s.0, s.1, p.0, p.1) / speed;
                let start_p = arrive.max(tw_p.earliest);
                let start_d = (start_p + direct).max(tw_d.earliest);
                start_p <= tw_p.latest
                    && start_d <= tw_d.latest
                    && start_d + euclidean(d.0, d.1, s.0, s.1) / speed <= HORIZON
            });
            if ok {
                accepted = Some((p, d, tw_p, tw_d));
                break;
            }
        }
        let (p, d, tw_p, tw_d) = accepted.ok_or(GenError::ResamplingExhausted { request: r })?;
        let pid = nodes.len();
        nodes.push(Node {
            id: pid,
            x: p.0,
            y: p.1,
            kind: NodeKind::Pickup,
        });
        nodes.push(Node {
            id: pid + 1,
            x: d.0,
            y: d.1,
            kind: NodeKind::Delivery,
        });
        requests.push(Request {
            id: r,
            pickup: pid,
            delivery: pid + 1,
            demand: f64::from(rng.gen_range(5u8..=10)),
            tw_pickup: tw_p,
            tw_delivery: tw_d,
            service_time: 0.0,
        });
    }
    let horizon = [0.0, HORIZON];
    let deps = departures(horizon, spec.frequency_per_hour);
    let mut legs = Vec::new();
    for (a, sa) in stations.iter().enumerate() {
        for (b, sb) in stations.iter().enumerate() {
            if a == b {
                continue;
            }
            let dist = euclidean(sa.0, sa.1, sb.0, sb.1);
            legs.push(ScheduledLeg {
                from_station: a,
                to_station: b,
                travel_time: dist / speed,
                departures: deps.clone(),
                capacity_per_departure: spec.leg_capacity,
                tariff: TARIFF_PER_DISTANCE * dist,
            });
        }
    }
    let inst = Instance::new(InstanceData {
        nodes,
        requests,
        legs,
        fleet: Fleet {
            n_vehicles: spec.n_vehicles.unwrap_or(spec.n_requests.max(1)),
            capacity: spec.vehicle_capacity,
            speed,
            depots: Vec::new(),
        },
        phi: PHI,
        horizon,
        dist_matrix: None,
    })?;
    apply_scatteredness(&inst, spec.scatteredness_k)
}

/// Scales every coordinate about the station centroid by `k / 2 + 0.5`, and
/// leg travel times and tariffs with it.
pub fn apply_scatteredness(inst: &Instance, k: f64) -> Result<Instance, GenError> {
    if inst.is_matrix_only() {
        return Err(GenError::MatrixOnly);
    }
    if !(k >= 0.0) {
        return Err(GenError::InvalidSpec("scatteredness k must be >= 0".into()));
    }
    let f = k / 2.0 + 0.5;
    let mut data = inst.data().clone();
    let st: Vec<&Node> = data.nodes.iter().filter(|n| n.kind == NodeKind::Station).collect();
    let (cx, cy) = if st.is_empty() {
        (0.0, 0.0)
    } else {
        let n = st.len() as f64;
        (
            st.iter().map(|s| s.x).sum::<f64>() / n,
            st.iter().map(|s| s.y).sum::<f64>() / n,
        )
    };
    for node in &mut data.nodes {
        node.x = f * node.x + (1.0 - f) * cx;
        node.y = f * node.y + (1.0 - f) * cy;
    }
    for leg in &mut data.legs {
        leg.travel_time *= f;
        leg.tariff *= f;
    }
    Ok(Instance::new(data)?)
}

/// Regenerates every leg's timetable at `per_hour` evenly spaced departures.
pub fn set_frequency(inst: &Instance, per_hour: u32) -> Result<Instance, GenError> {
    if per_hour < 1 {
        return Err(GenError::InvalidSpec("frequency must be >= 1 per hour".into()));
    }
    let mut data = inst.data().clone();
    let deps = departures(data.horizon, per_hour);
    for leg in &mut data.legs {
        leg.departures = deps.clone();
    }
    Ok(Instance::new(data)?)
}

/// `n` instances that differ only in their sampled requests; scenario `i`
/// uses seed `spec.seed + i` for both generation and the solver.
pub fn scenario_set(spec: &GenSpec, n: usize) -> Result<ScenarioSet, GenError> {
    if n < 1 {
        return Err(GenError::InvalidSpec(
            "a scenario set needs at least one scenario".into(),
        ));
    }
    let mut instances = Vec::with_capacity(n);
    let mut seeds = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let seed = spec.seed.wrapping_add(i);
        instances.push(generate(&GenSpec { seed, ..spec.clone() })?);
        seeds.push(seed);
    }
    Ok(ScenarioSet::new(instances, seeds).expect("non-empty with equal phi"))
}
