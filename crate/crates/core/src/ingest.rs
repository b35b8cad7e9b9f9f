//! Case-study construction from a pool of real locations with a road
//! distance matrix, plus a small commuter-rail network laid over it.

use crate::model::{
    euclidean, Fleet, Instance, InstanceData, ModelError, Node, NodeKind, Request, ScheduledLeg, TimeWindow,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const N_STATIONS: usize = 5;
pub const N_LEGS: usize = 14;
/// Per-unit tariffs for the rail leg: the two table rows and their doubled
/// readings.
pub const TARIFF_PRESETS: [f64; 4] = [2.0, 2.4, 4.0, 4.8];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("matrix is {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("network config: {0}")]
    Config(String),
    #[error("pool has {available} usable locations, {needed} needed")]
    PoolExhausted { available: usize, needed: usize },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// Locations with pairwise road distances in km.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationPool {
    locations: Vec<Location>,
    dist_matrix: Vec<Vec<f64>>,
}

impl LocationPool {
    pub fn new(locations: Vec<Location>, dist_matrix: Vec<Vec<f64>>) -> Result<Self, IngestError> {
        let n = locations.len();
        let found = dist_matrix.iter().map(Vec::len).sum::<usize>();
        if dist_matrix.len() != n || dist_matrix.iter().any(|r| r.len() != n) {
            return Err(IngestError::Dimension { expected: n * n, found });
        }
        for (i, row) in dist_matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(IngestError::Invalid {
                        line: 0,
                        message: format!("distance ({i}, {j}) = {v} must be finite and >= 0"),
                    });
                }
            }
            if row[i] != 0.0 {
                return Err(IngestError::Invalid {
                    line: 0,
                    message: format!("diagonal entry ({i}, {i}) = {} must be 0", row[i]),
                });
            }
        }
        let mut ids: Vec<usize> = locations.iter().map(|l| l.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(IngestError::Invalid {
                line: 0,
                message: "duplicate location id".into(),
            });
        }
        Ok(Self { locations, dist_matrix })
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist_matrix
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Index of the location closest to `(x, y)` among those `allowed`.
    fn nearest(&self, x: f64, y: f64, allowed: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (i, l) in self.locations.iter().enumerate() {
            if !allowed(i) {
                continue;
            }
            let d = euclidean(x, y, l.x, l.y);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| i)
    }

    /// Pool text form; floats use the shortest representation that reads
    /// back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "n={}", self.len()).unwrap();
        for l in &self.locations {
            writeln!(s, "{} {} {}", l.id, l.x, l.y).unwrap();
        }
        for row in &self.dist_matrix {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        s
    }

    fn from_instance(inst: &Instance) -> Result<Self, IngestError> {
        let n = inst.nodes().len();
        let locations = inst
            .nodes()
            .iter()
            .map(|nd| Location {
                id: nd.id,
                x: nd.x,
                y: nd.y,
            })
            .collect();
        let matrix = (0..n).map(|i| (0..n).map(|j| inst.dist(i, j)).collect()).collect();
        Self::new(locations, matrix)
    }
}

fn perr(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, IngestError> {
    tok.parse()
        .map_err(|_| perr(line, format!("cannot read {what} from '{tok}'")))
}

/// Parses the pool text format, or a JSON instance (text starting with `{`),
/// whose nodes and distances become the pool.
pub fn parse_pool_str(text: &str) -> Result<LocationPool, IngestError> {
    if text.trim_start().starts_with('{') {
        let inst = Instance::from_json(text)?;
        return LocationPool::from_instance(&inst);
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines
        .next()
        .ok_or_else(|| perr(1, "empty file, expected 'n=<count>'"))?;
    let n: usize = header
        .strip_prefix("n=")
        .ok_or_else(|| perr(hl, format!("expected 'n=<count>', found '{header}'")))
        .and_then(|v| number(v.trim(), hl, "location count"))?;
    let mut locations = Vec::with_capacity(n);
    for k in 0..n {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| perr(hl + k + 1, format!("missing location line {} of {n}", k + 1)))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(perr(
                ln,
                format!("expected '<id> <x> <y>', found {} fields", toks.len()),
            ));
        }
        let x: f64 = number(toks[1], ln, "x")?;
        let y: f64 = number(toks[2], ln, "y")?;
        if !x.is_finite() || !y.is_finite() {
            return Err(perr(ln, "non-finite coordinate"));
        }
        locations.push(Location {
            id: number(toks[0], ln, "id")?,
            x,
            y,
        });
    }
    let mut values = Vec::with_capacity(n * n);
    for (ln, l) in lines {
        for tok in l.split_whitespace() {
            let v: f64 = number(tok, ln, "distance")?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(IngestError::Invalid {
                    line: ln,
                    message: format!("distance {v} must be finite and >= 0"),
                });
            }
            let (i, j) = (values.len() / n.max(1), values.len() % n.max(1));
            if i == j && i < n && v != 0.0 {
                return Err(IngestError::Invalid {
                    line: ln,
                    message: format!("diagonal entry ({i}, {i}) = {v} must be 0"),
                });
            }
            values.push(v);
        }
        if values.len() > n * n {
            return Err(perr(ln, format!("more than {} matrix entries", n * n)));
        }
    }
    if values.len() != n * n {
        return Err(IngestError::Dimension {
            expected: n * n,
            found: values.len(),
        });
    }
    let matrix = values.chunks(n.max(1)).map(<[f64]>::to_vec).take(n).collect();
    LocationPool::new(locations, matrix)
}

pub fn parse_pool(path: &Path) -> Result<LocationPool, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
    parse_pool_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationDef {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegDef {
    pub from: String,
    pub to: String,
    /// Minutes; derived from the road distance and `speed_kmh` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_time: Option<f64>,
}

/// Rail network over a pool. Coordinates share the pool's frame; stations
/// and depots snap to the nearest pool location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub version: u32,
    pub stations: Vec<StationDef>,
    pub legs: Vec<LegDef>,
    /// Operator depots; the station centroid is added as one more.
    pub depots: Vec<[f64; 2]>,
    pub headway: f64,
    pub capacity: f64,
    pub tariff: f64,
    pub speed_kmh: f64,
    pub horizon: [f64; 2],
}

impl Default for NetworkConfig {
    /// A part of the Berlin S-Bahn in km east/north of (13.2 E, 52.4 N).
    fn default() -> Self {
        let st = |name: &str, x, y| StationDef {
            name: name.into(),
            x,
            y,
        };
        let stations = vec![
            st("Westkreuz", 5.67, 11.23),
            st("Hauptbahnhof", 11.48, 13.91),
            st("Gesundbrunnen", 12.79, 16.52),
            st("Ostkreuz", 18.27, 11.45),
            st("Suedkreuz", 11.19, 8.37),
        ];
        let pairs = [
            ("Westkreuz", "Hauptbahnhof"),
            ("Hauptbahnhof", "Ostkreuz"),
            ("Westkreuz", "Gesundbrunnen"),
            ("Gesundbrunnen", "Ostkreuz"),
            ("Ostkreuz", "Suedkreuz"),
            ("Suedkreuz", "Westkreuz"),
            ("Gesundbrunnen", "Suedkreuz"),
        ];
        let legs = pairs
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .map(|(a, b)| LegDef {
                from: a.into(),
                to: b.into(),
                travel_time: None,
            })
            .collect();
        Self {
            version: 1,
            stations,
            legs,
            depots: vec![[3.0, 3.0], [26.0, 5.0], [14.0, 25.0]],
            headway: 10.0,
            capacity: 60.0,
            tariff: 2.4,
            speed_kmh: 40.0,
            horizon: [0.0, 480.0],
        }
    }
}

impl NetworkConfig {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        serde_json::from_str(text).map_err(|e| IngestError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let cfg = |m: String| Err(IngestError::Config(m));
        if self.stations.len() != N_STATIONS {
            return cfg(format!("{} stations, expected {N_STATIONS}", self.stations.len()));
        }
        if self.legs.len() != N_LEGS {
            return cfg(format!("{} legs, expected {N_LEGS}", self.legs.len()));
        }
        for l in &self.legs {
            for name in [&l.from, &l.to] {
                if !self.stations.iter().any(|s| &s.name == name) {
                    return cfg(format!("leg references unknown station '{name}'"));
                }
            }
            if l.from == l.to {
                return cfg(format!("leg from '{}' to itself", l.from));
            }
        }
        if !(self.headway > 0.0) || !(self.capacity > 0.0) || !(self.tariff >= 0.0) || !(self.speed_kmh > 0.0) {
            return cfg("headway, capacity and speed must be positive; tariff >= 0".into());
        }
        if !(self.horizon[0] < self.horizon[1]) {
            return cfg("horizon must be increasing".into());
        }
        Ok(())
    }

    pub fn departures(&self) -> Vec<f64> {
        let [h0, h1] = self.horizon;
        (0..)
            .map(|k| h0 + k as f64 * self.headway)
            .take_while(|&t| t < h1)
            .collect()
    }
}

/// Pool positions of stations and depots, and the legs between stations
/// (leg endpoints are pool location ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub stations: Vec<usize>,
    pub depots: Vec<usize>,
    pub legs: Vec<ScheduledLeg>,
}

/// Snaps stations then depots (the configured ones plus the station
/// centroid) to distinct pool locations and builds the 14 directed legs.
pub fn build_sbahn(pool: &LocationPool, cfg: &NetworkConfig) -> Result<Network, IngestError> {
    cfg.validate()?;
    let needed = N_STATIONS + cfg.depots.len() + 1;
    if pool.len() < needed {
        return Err(IngestError::PoolExhausted {
            available: pool.len(),
            needed,
        });
    }
    let mut used: Vec<usize> = Vec::new();
    for s in &cfg.stations {
        let i = pool
            .nearest(s.x, s.y, |i| !used.contains(&i))
            .expect("pool size checked");
        used.push(i);
    }
    let stations = used.clone();
    let k = N_STATIONS as f64;
    let centroid = [
        cfg.stations.iter().map(|s| s.x).sum::<f64>() / k,
        cfg.stations.iter().map(|s| s.y).sum::<f64>() / k,
    ];
    let mut depots = Vec::new();
    for d in cfg.depots.iter().chain(std::iter::once(&centroid)) {
        let i = pool
            .nearest(d[0], d[1], |i| !used.contains(&i))
            .expect("pool size checked");
        used.push(i);
        depots.push(i);
    }
    let pos = |name: &str| stations[cfg.stations.iter().position(|s| s.name == name).expect("validated")];
    let departures = cfg.departures();
    let legs = cfg
        .legs
        .iter()
        .map(|l| {
            let (a, b) = (pos(&l.from), pos(&l.to));
            let km = pool.dist_matrix[a][b];
            ScheduledLeg {
                from_station: pool.locations[a].id,
                to_station: pool.locations[b].id,
                travel_time: l.travel_time.unwrap_or(km / cfg.speed_kmh * 60.0),
                departures: departures.clone(),
                capacity_per_departure: cfg.capacity,
                tariff: cfg.tariff,
            }
        })
        .collect();
    Ok(Network { stations, depots, legs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseConfig {
    pub n_requests: usize,
    pub n_vehicles: usize,
    pub demand: [u32; 2],
    pub window: f64,
    pub vehicle_capacity: f64,
    /// km per minute.
    pub speed: f64,
    pub phi: f64,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            n_requests: 100,
            n_vehicles: 40,
            demand: [5, 10],
            window: 60.0,
            vehicle_capacity: 25.0,
            speed: 1.0,
            phi: 1.24,
        }
    }
}

/// Samples requests from pool locations not used by the network. Node ids
/// are pool ids and distances are copied from the pool matrix.
pub fn sample_case(
    pool: &LocationPool,
    net: &Network,
    horizon: [f64; 2],
    cfg: &CaseConfig,
    seed: u64,
) -> Result<Instance, IngestError> {
    if cfg.demand[0] < 1 || cfg.demand[0] > cfg.demand[1] {
        return Err(IngestError::Config("demand range must satisfy 1 <= lo <= hi".into()));
    }
    if !(cfg.speed > 0.0 && cfg.window >= 0.0) {
        return Err(IngestError::Config("speed must be positive and window >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut free: Vec<usize> = (0..pool.len())
        .filter(|i| !net.stations.contains(i) && !net.depots.contains(i))
        .collect();
    let needed = 2 * cfg.n_requests;
    if free.len() < needed {
        return Err(IngestError::PoolExhausted {
            available: free.len(),
            needed,
        });
    }
    free.shuffle(&mut rng);
    let m = &pool.dist_matrix;
    let mut chosen: Vec<(usize, usize, TimeWindow, TimeWindow, f64)> = Vec::new();
    let mut cursor = 0;
    while chosen.len() < cfg.n_requests {
        if cursor + 2 > free.len() {
            return Err(IngestError::PoolExhausted {
                available: free.len(),
                needed: cursor + 2,
            });
        }
        let (p, d) = (free[cursor], free[cursor + 1]);
        cursor += 2;
        let direct = m[p][d] / cfg.speed;
        let reach = net
            .depots
            .iter()
            .map(|&o| m[o][p] / cfg.speed)
            .fold(f64::INFINITY, f64::min);
        let back = net
            .depots
            .iter()
            .map(|&o| m[d][o] / cfg.speed)
            .fold(f64::INFINITY, f64::min);
        let lo = horizon[0] + reach;
        let hi = horizon[1] - back - direct - cfg.window;
        if hi < lo {
            continue;
        }
        let open = rng.gen_range(lo..=hi).floor().max(horizon[0]);
        let demand = f64::from(rng.gen_range(cfg.demand[0]..=cfg.demand[1]));
        let tw_p = TimeWindow::new(open, open + cfg.window);
        let od = (open + direct).ceil();
        let tw_d = TimeWindow::new(od, od + cfg.window);
        // One depot must serve the request on its own.
        let ok = net.depots.iter().any(|&o| {
            let sp = (horizon[0] + m[o][p] / cfg.speed).max(tw_p.earliest);
            let sd = (sp + direct).max(tw_d.earliest);
            sp <= tw_p.latest && sd <= tw_d.latest && sd + m[d][o] / cfg.speed <= horizon[1]
        });
        if ok {
            chosen.push((p, d, tw_p, tw_d, demand));
        }
    }

    let mut positions: Vec<(usize, NodeKind)> = Vec::new();
    positions.extend(net.depots.iter().map(|&i| (i, NodeKind::Depot)));
    positions.extend(net.stations.iter().map(|&i| (i, NodeKind::Station)));
    for c in &chosen {
        positions.push((c.0, NodeKind::Pickup));
        positions.push((c.1, NodeKind::Delivery));
    }
    let nodes = positions
        .iter()
        .map(|&(i, kind)| {
            let l = &pool.locations[i];
            Node {
                id: l.id,
                x: l.x,
                y: l.y,
                kind,
            }
        })
        .collect();
    let matrix = positions
        .iter()
        .map(|&(i, _)| positions.iter().map(|&(j, _)| m[i][j]).collect())
        .collect();
    let requests = chosen
        .iter()
        .enumerate()
        .map(|(r, &(p, d, tw_pickup, tw_delivery, demand))| Request {
            id: r,
            pickup: pool.locations[p].id,
            delivery: pool.locations[d].id,
            demand,
            tw_pickup,
            tw_delivery,
            service_time: 0.0,
        })
        .collect();
    Ok(Instance::new(InstanceData {
        nodes,
        requests,
        legs: net.legs.clone(),
        fleet: Fleet {
            n_vehicles: cfg.n_vehicles,
            capacity: cfg.vehicle_capacity,
            speed: cfg.speed,
            depots: net.depots.iter().map(|&i| pool.locations[i].id).collect(),
        },
        phi: cfg.phi,
        horizon,
        dist_matrix: Some(matrix),
    })?)
}

/// A city-sized stand-in pool: uniform points in a `side` km square with
/// road distances 1.3 times the straight line, rounded to metres.
pub fn synthetic_pool(n: usize, side: f64, seed: u64) -> LocationPool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locations: Vec<Location> = (0..n)
        .map(|id| Location {
            id,
            x: (rng.gen::<f64>() * side * 1000.0).round() / 1000.0,
            y: (rng.gen::<f64>() * side * 1000.0).round() / 1000.0,
        })
        .collect();
    let matrix = locations
        .iter()
        .map(|a| {
            locations
                .iter()
                .map(|b| (1.3 * euclidean(a.x, a.y, b.x, b.y) * 1000.0).round() / 1000.0)
                .collect()
        })
        .collect();
    LocationPool::new(locations, matrix).expect("non-negative symmetric by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "n=3\n0 0 0\n1 3 4\n2 6 0\n0 5 6\n5 0 5\n6 5 0\n";

    #[test]
    fn toy_pool() {
        let p = parse_pool_str(TOY).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dist_matrix()[0][1], 5.0);
        assert_eq!(p.dist_matrix().len(), 3);
    }

    #[test]
    fn round_trip() {
        let p = synthetic_pool(12, 30.0, 4);
        let text = p.to_text();
        let q = parse_pool_str(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_text());
    }

    #[test]
    fn positioned_errors() {
        let neg = "n=2\n0 0 0\n1 1 1\n0 1\n-1 0\n";
        assert!(matches!(parse_pool_str(neg), Err(IngestError::Invalid { line: 5, .. })));
        let diag = "n=2\n0 0 0\n1 1 1\n0 1\n1 2\n";
        assert!(matches!(
            parse_pool_str(diag),
            Err(IngestError::Invalid { line: 5, .. })
        ));
        let junk = "n=2\n0 0 0\n1 x 1\n";
        assert!(matches!(parse_pool_str(junk), Err(IngestError::Parse { line: 3, .. })));
        let short = "n=2\n0 0 0\n1 1 1\n0 1\n1\n";
        assert_eq!(
            parse_pool_str(short),
            Err(IngestError::Dimension { expected: 4, found: 3 })
        );
        assert!(matches!(
            parse_pool_str("m=2\n"),
            Err(IngestError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn json_instance_as_pool() {
        let inst = crate::instgen::generate(&crate::instgen::GenSpec {
            n_requests: 2,
            ..Default::default()
        })
        .unwrap();
        let p = parse_pool_str(&inst.to_json()).unwrap();
        assert_eq!(p.len(), inst.nodes().len());
        assert_eq!(p.dist_matrix()[0][1], inst.dist(0, 1));
    }

    #[test]
    fn default_network() {
        let pool = synthetic_pool(300, 30.0, 1);
        let net = build_sbahn(&pool, &NetworkConfig::default()).unwrap();
        assert_eq!(net.legs.len(), 14);
        assert_eq!(net.depots.len(), 4);
        for l in &net.legs {
            assert_eq!(l.capacity_per_departure, 60.0);
            assert_eq!(l.tariff, 2.4);
            assert_eq!(l.departures.iter().filter(|&&t| t < 60.0).count(), 6);
        }
    }

    #[test]
    fn network_count_checks() {
        let pool = synthetic_pool(50, 30.0, 1);
        let mut cfg = NetworkConfig::default();
        cfg.legs.pop();
        assert!(matches!(build_sbahn(&pool, &cfg), Err(IngestError::Config(_))));
        let mut cfg = NetworkConfig::default();
        cfg.stations.pop();
        assert!(matches!(build_sbahn(&pool, &cfg), Err(IngestError::Config(_))));
        let json = serde_json::to_string(&NetworkConfig::default()).unwrap();
        assert_eq!(NetworkConfig::from_json(&json).unwrap(), NetworkConfig::default());
    }

    #[test]
    fn case_sampling() {
        let pool = synthetic_pool(400, 30.0, 2);
        let cfg = NetworkConfig::default();
        let net = build_sbahn(&pool, &cfg).unwrap();
        let case = CaseConfig::default();
        let a = sample_case(&pool, &net, cfg.horizon, &case, 9).unwrap();
        let b = sample_case(&pool, &net, cfg.horizon, &case, 9).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.n_requests(), 100);
        assert_eq!(a.n_vehicles(), 40);
        assert_eq!(a.phi(), 1.24);
        assert!(a.requests().iter().all(|r| (5.0..=10.0).contains(&r.demand)));
        assert!(a.requests().iter().all(|r| r.tw_pickup.width() == 60.0));
        // Distances are the pool's, looked up by id.
        let pos: std::collections::HashMap<usize, usize> =
            pool.locations().iter().enumerate().map(|(i, l)| (l.id, i)).collect();
        for x in a.nodes() {
            for y in a.nodes() {
                assert_eq!(
                    a.dist_by_id(x.id, y.id).unwrap(),
                    pool.dist_matrix()[pos[&x.id]][pos[&y.id]]
                );
            }
        }
    }

    #[test]
    fn case_pool_exhausted() {
        let pool = synthetic_pool(30, 30.0, 2);
        let net = build_sbahn(&pool, &NetworkConfig::default()).unwrap();
        assert!(matches!(
            sample_case(&pool, &net, [0.0, 480.0], &CaseConfig::default(), 1),
            Err(IngestError::PoolExhausted { .. })
        ));
    }
}
