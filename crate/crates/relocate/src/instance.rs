//! Problem instances: stations, the metric induced by a weighted graph,
//! start/target car distributions, and the tasks derived from them.
//!
//! An [`Instance`] is immutable after construction and safe to share across
//! concurrent solver runs. The shortest-path metric is computed once and
//! cached; solvers only ever consult distances, never raw edges (the
//! generator being the one exception).

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Index of a station. Index 0 is reserved for the depot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct StationId(pub usize);

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Undirected weighted graph over stations. Edge weights are strictly
/// positive integer lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<(StationId, StationId, u64)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least one node")]
    Empty,
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(StationId, StationId),
    #[error("edge ({0}, {1}) has zero weight")]
    ZeroWeight(StationId, StationId),
    #[error("edge endpoint {0} out of range (node count {1})")]
    NodeOutOfRange(StationId, usize),
    #[error("graph is disconnected: no path from {0} to {1}")]
    Disconnected(StationId, StationId),
}

impl WeightedGraph {
    pub fn new(
        node_count: usize,
        edges: Vec<(StationId, StationId, u64)>,
    ) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Empty);
        }
        for &(u, v, w) in &edges {
            if u.0 >= node_count {
                return Err(GraphError::NodeOutOfRange(u, node_count));
            }
            if v.0 >= node_count {
                return Err(GraphError::NodeOutOfRange(v, node_count));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u, v));
            }
            if w == 0 {
                return Err(GraphError::ZeroWeight(u, v));
            }
        }
        Ok(Self { node_count, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(StationId, StationId, u64)] {
        &self.edges
    }

    /// Neighbor list per node, deduplicated, keeping the cheapest parallel
    /// edge. Sorted by neighbor index so iteration order is deterministic.
    pub fn adjacency(&self) -> Vec<Vec<(StationId, u64)>> {
        let mut adj = vec![std::collections::BTreeMap::new(); self.node_count];
        for &(u, v, w) in &self.edges {
            let e = adj[u.0].entry(v.0).or_insert(w);
            *e = (*e).min(w);
            let e = adj[v.0].entry(u.0).or_insert(w);
            *e = (*e).min(w);
        }
        adj.into_iter()
            .map(|m| m.into_iter().map(|(v, w)| (StationId(v), w)).collect())
            .collect()
    }
}

/// All-pairs shortest-path distances. Symmetric, zero diagonal, strictly
/// positive off the diagonal, and satisfies the triangle inequality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSpace {
    n: usize,
    dist: Vec<u64>,
}

impl MetricSpace {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn dist(&self, from: StationId, to: StationId) -> u64 {
        self.dist[from.0 * self.n + to.0]
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> u64 {
        self.dist.iter().copied().max().unwrap_or(0)
    }
}

/// Computes the shortest-path metric of a connected graph.
///
/// Runs one Dijkstra search per node over the adjacency lists. Fails with
/// [`GraphError::Disconnected`] naming an unreachable pair.
pub fn build_metric(graph: &WeightedGraph) -> Result<MetricSpace, GraphError> {
    let n = graph.node_count();
    let adj = graph.adjacency();
    let mut dist = vec![0u64; n * n];
    for source in 0..n {
        let row = dijkstra(&adj, n, source);
        for (target, d) in row.iter().enumerate() {
            match d {
                Some(d) => dist[source * n + target] = *d,
                None => {
                    return Err(GraphError::Disconnected(
                        StationId(source),
                        StationId(target),
                    ))
                }
            }
        }
    }
    Ok(MetricSpace { n, dist })
}

fn dijkstra(adj: &[Vec<(StationId, u64)>], n: usize, source: usize) -> Vec<Option<u64>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut dist: Vec<Option<u64>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        match dist[u] {
            Some(best) if best <= d => continue,
            _ => dist[u] = Some(d),
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if dist[v.0].is_none_or(|best| nd < best) {
                heap.push(Reverse((nd, v.0)));
            }
        }
    }
    dist
}

/// A relocation task: pick up `x > 0` or deliver `-x` cars at a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub station: StationId,
    pub x: i64,
}

/// A static relocation problem: metric task system plus start/target states,
/// driver count, convoy capacity, and time horizon.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: WeightedGraph,
    pub metric: MetricSpace,
    /// Per-station capacity `cap(v)`.
    pub cap: Vec<u64>,
    /// Cars per station at time 0.
    pub z0: Vec<u64>,
    /// Cars per station required at time T.
    pub zt: Vec<u64>,
    /// Number of convoy drivers.
    pub k: u32,
    /// Convoy capacity (cars per driver).
    pub capacity_l: u32,
    /// Time horizon.
    pub horizon: u32,
    pub depot: StationId,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("state vector has length {found}, expected {expected}")]
    StateLength { expected: usize, found: usize },
    #[error("instance is invalid: {0}")]
    Invalid(InstanceReport),
}

impl Instance {
    /// Builds an instance, computing and caching the metric closure.
    /// Fails if the graph is disconnected or any invariant is violated.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        graph: WeightedGraph,
        cap: Vec<u64>,
        z0: Vec<u64>,
        zt: Vec<u64>,
        k: u32,
        capacity_l: u32,
        horizon: u32,
        depot: StationId,
    ) -> Result<Self, InstanceError> {
        let n = graph.node_count();
        for v in [&cap, &z0, &zt] {
            if v.len() != n {
                return Err(InstanceError::StateLength {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        let metric = build_metric(&graph)?;
        let instance = Self {
            graph,
            metric,
            cap,
            z0,
            zt,
            k,
            capacity_l,
            horizon,
            depot,
        };
        let report = validate_instance(&instance);
        if !report.is_empty() {
            return Err(InstanceError::Invalid(report));
        }
        Ok(instance)
    }

    pub fn station_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn stations(&self) -> impl Iterator<Item = StationId> {
        (0..self.graph.node_count()).map(StationId)
    }

    pub fn dist(&self, from: StationId, to: StationId) -> u64 {
        self.metric.dist(from, to)
    }

    /// Total surplus over all overfull stations (equals the total deficit).
    pub fn total_surplus(&self) -> u64 {
        self.stations()
            .map(|v| self.z0[v.0].saturating_sub(self.zt[v.0]))
            .sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.z0 == self.zt
    }
}

/// One task per station whose start and target counts differ. The task
/// amounts always sum to zero on a valid instance.
pub fn derive_tasks(instance: &Instance) -> Vec<Task> {
    instance
        .stations()
        .filter_map(|v| {
            let x = instance.z0[v.0] as i64 - instance.zt[v.0] as i64;
            (x != 0).then_some(Task { station: v, x })
        })
        .collect()
}

/// A named violation of an instance invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceViolation {
    /// Total cars at time 0 differ from total cars at time T.
    Unbalanced { total_z0: u64, total_zt: u64 },
    /// A station holds more cars than its capacity at time 0 or T.
    CapacityExceeded {
        station: StationId,
        count: u64,
        cap: u64,
    },
    NoDrivers,
    ZeroConvoyCapacity,
    ZeroHorizon,
    DepotOutOfRange { depot: StationId, stations: usize },
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unbalanced { total_z0, total_zt } => write!(
                f,
                "car totals differ: sum z0 = {total_z0}, sum zT = {total_zt}"
            ),
            Self::CapacityExceeded {
                station,
                count,
                cap,
            } => write!(f, "station {station} holds {count} cars, capacity {cap}"),
            Self::NoDrivers => write!(f, "driver count k must be at least 1"),
            Self::ZeroConvoyCapacity => write!(f, "convoy capacity L must be at least 1"),
            Self::ZeroHorizon => write!(f, "time horizon T must be positive"),
            Self::DepotOutOfRange { depot, stations } => {
                write!(f, "depot {depot} out of range for {stations} stations")
            }
        }
    }
}

/// Report listing every violated instance invariant; empty iff well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstanceReport {
    pub violations: Vec<InstanceViolation>,
}

impl InstanceReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for InstanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every instance invariant and reports all violations found.
pub fn validate_instance(instance: &Instance) -> InstanceReport {
    let mut violations = Vec::new();
    let total_z0: u64 = instance.z0.iter().sum();
    let total_zt: u64 = instance.zt.iter().sum();
    if total_z0 != total_zt {
        violations.push(InstanceViolation::Unbalanced { total_z0, total_zt });
    }
    for v in instance.stations() {
        for counts in [&instance.z0, &instance.zt] {
            if counts[v.0] > instance.cap[v.0] {
                violations.push(InstanceViolation::CapacityExceeded {
                    station: v,
                    count: counts[v.0],
                    cap: instance.cap[v.0],
                });
            }
        }
    }
    if instance.k == 0 {
        violations.push(InstanceViolation::NoDrivers);
    }
    if instance.capacity_l == 0 {
        violations.push(InstanceViolation::ZeroConvoyCapacity);
    }
    if instance.horizon == 0 {
        violations.push(InstanceViolation::ZeroHorizon);
    }
    if instance.depot.0 >= instance.station_count() {
        violations.push(InstanceViolation::DepotOutOfRange {
            depot: instance.depot,
            stations: instance.station_count(),
        });
    }
    InstanceReport { violations }
}

// ---------------------------------------------------------------------------
// JSON instance files
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has wrong type: expected {expected}")]
    WrongType {
        field: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Reads the JSON instance format. Unknown fields produce warnings (returned
/// alongside the instance); missing fields are hard errors.
pub fn parse_instance_json(text: &str) -> Result<(Instance, Vec<String>), ParseError> {
    use serde_json::Value;

    let root: Value = serde_json::from_str(text)?;
    let obj = root
        .as_object()
        .ok_or(ParseError::MissingField("stations"))?;

    let known: BTreeSet<&str> = ["stations", "edges", "z0", "zT", "k", "L", "T", "depot"].into();
    let mut warnings = Vec::new();
    for key in obj.keys() {
        if !known.contains(key.as_str()) {
            warnings.push(format!("ignoring unknown field `{key}`"));
        }
    }

    fn get<'v>(
        obj: &'v serde_json::Map<String, Value>,
        field: &'static str,
    ) -> Result<&'v Value, ParseError> {
        obj.get(field).ok_or(ParseError::MissingField(field))
    }
    fn as_u64(value: &Value, field: &str) -> Result<u64, ParseError> {
        value.as_u64().ok_or_else(|| ParseError::WrongType {
            field: field.to_string(),
            expected: "non-negative integer",
        })
    }
    fn as_u64_list(value: &Value, field: &str) -> Result<Vec<u64>, ParseError> {
        value
            .as_array()
            .ok_or_else(|| ParseError::WrongType {
                field: field.to_string(),
                expected: "array of integers",
            })?
            .iter()
            .map(|v| as_u64(v, field))
            .collect()
    }

    let stations_val = get(obj, "stations")?
        .as_array()
        .ok_or_else(|| ParseError::WrongType {
            field: "stations".into(),
            expected: "array of station objects",
        })?;
    let mut cap = vec![0u64; stations_val.len()];
    for (i, st) in stations_val.iter().enumerate() {
        let st = st.as_object().ok_or_else(|| ParseError::WrongType {
            field: format!("stations[{i}]"),
            expected: "object with id and capacity",
        })?;
        for key in st.keys() {
            if key != "id" && key != "capacity" {
                warnings.push(format!("ignoring unknown field `stations[{i}].{key}`"));
            }
        }
        let id = as_u64(
            st.get("id")
                .ok_or(ParseError::MissingField("stations[].id"))?,
            "stations[].id",
        )? as usize;
        let capacity = as_u64(
            st.get("capacity")
                .ok_or(ParseError::MissingField("stations[].capacity"))?,
            "stations[].capacity",
        )?;
        if id >= cap.len() {
            return Err(ParseError::WrongType {
                field: format!("stations[{i}].id"),
                expected: "dense indices 0..n",
            });
        }
        cap[id] = capacity;
    }

    let edges_val = get(obj, "edges")?
        .as_array()
        .ok_or_else(|| ParseError::WrongType {
            field: "edges".into(),
            expected: "array of [u, v, w] triples",
        })?;
    let mut edges = Vec::with_capacity(edges_val.len());
    for (i, e) in edges_val.iter().enumerate() {
        let triple =
            e.as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| ParseError::WrongType {
                    field: format!("edges[{i}]"),
                    expected: "[u, v, w] triple",
                })?;
        let u = as_u64(&triple[0], "edges[].u")? as usize;
        let v = as_u64(&triple[1], "edges[].v")? as usize;
        let w = as_u64(&triple[2], "edges[].w")?;
        edges.push((StationId(u), StationId(v), w));
    }

    let z0 = as_u64_list(get(obj, "z0")?, "z0")?;
    let zt = as_u64_list(get(obj, "zT")?, "zT")?;
    let k = as_u64(get(obj, "k")?, "k")? as u32;
    let capacity_l = as_u64(get(obj, "L")?, "L")? as u32;
    let horizon = as_u64(get(obj, "T")?, "T")? as u32;
    let depot = StationId(as_u64(get(obj, "depot")?, "depot")? as usize);

    let graph = WeightedGraph::new(cap.len(), edges).map_err(InstanceError::from)?;
    let instance = Instance::new(graph, cap, z0, zt, k, capacity_l, horizon, depot)?;
    Ok((instance, warnings))
}

#[derive(Serialize)]
struct StationJson {
    id: usize,
    capacity: u64,
}

#[derive(Serialize)]
struct InstanceJson<'a> {
    stations: Vec<StationJson>,
    edges: Vec<(usize, usize, u64)>,
    z0: &'a [u64],
    #[serde(rename = "zT")]
    zt: &'a [u64],
    k: u32,
    #[serde(rename = "L")]
    capacity_l: u32,
    #[serde(rename = "T")]
    horizon: u32,
    depot: usize,
}

/// Serializes an instance to the JSON file format. Field order is fixed so
/// output is byte-stable.
pub fn instance_to_json(instance: &Instance) -> String {
    let doc = InstanceJson {
        stations: instance
            .stations()
            .map(|v| StationJson {
                id: v.0,
                capacity: instance.cap[v.0],
            })
            .collect(),
        edges: instance
            .graph
            .edges()
            .iter()
            .map(|&(u, v, w)| (u.0, v.0, w))
            .collect(),
        z0: &instance.z0,
        zt: &instance.zt,
        k: instance.k,
        capacity_l: instance.capacity_l,
        horizon: instance.horizon,
        depot: instance.depot.0,
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("instance serialization");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(weights: &[u64]) -> WeightedGraph {
        let edges = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (StationId(i), StationId(i + 1), w))
            .collect();
        WeightedGraph::new(weights.len() + 1, edges).unwrap()
    }

    fn small_instance() -> Instance {
        // depot - a - b line
        let graph = path_graph(&[2, 3]);
        Instance::new(
            graph,
            vec![10, 10, 10],
            vec![0, 3, 0],
            vec![0, 1, 2],
            1,
            2,
            20,
            StationId(0),
        )
        .unwrap()
    }

    #[test]
    fn metric_on_path_graph() {
        let graph = path_graph(&[3, 4]);
        let m = build_metric(&graph).unwrap();
        assert_eq!(m.dist(StationId(0), StationId(2)), 7);
        assert_eq!(m.dist(StationId(2), StationId(0)), 7);
        assert_eq!(m.dist(StationId(1), StationId(1)), 0);
    }

    #[test]
    fn metric_shortcut_dominates_heavy_edge() {
        let graph = WeightedGraph::new(
            3,
            vec![
                (StationId(0), StationId(1), 1),
                (StationId(1), StationId(2), 1),
                (StationId(0), StationId(2), 5),
            ],
        )
        .unwrap();
        let m = build_metric(&graph).unwrap();
        assert_eq!(m.dist(StationId(0), StationId(2)), 2);
    }

    #[test]
    fn disconnected_graph_names_unreachable_pair() {
        let graph = WeightedGraph::new(3, vec![(StationId(0), StationId(1), 1)]).unwrap();
        match build_metric(&graph) {
            Err(GraphError::Disconnected(a, b)) => {
                assert_ne!(a, b);
                assert!(b == StationId(2) || a == StationId(2));
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    /// Independent all-pairs recomputation: Floyd-Warshall on the dense
    /// weight matrix. Deliberately a different algorithm from the
    /// Dijkstra-based production path.
    fn floyd_warshall(graph: &WeightedGraph) -> Vec<Vec<u64>> {
        let n = graph.node_count();
        const INF: u64 = u64::MAX / 4;
        let mut d = vec![vec![INF; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for &(u, v, w) in graph.edges() {
            d[u.0][v.0] = d[u.0][v.0].min(w);
            d[v.0][u.0] = d[v.0][u.0].min(w);
        }
        for mid in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][mid] + d[mid][j] < d[i][j] {
                        d[i][j] = d[i][mid] + d[mid][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn metric_matches_floyd_warshall_on_random_graphs() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..20 {
            let n = 20;
            let mut edges = Vec::new();
            // random spanning tree plus extra edges
            for v in 1..n {
                let u = (next() % v as u64) as usize;
                edges.push((StationId(u), StationId(v), next() % 9 + 1));
            }
            for _ in 0..n {
                let u = (next() % n as u64) as usize;
                let v = (next() % n as u64) as usize;
                if u != v {
                    edges.push((StationId(u), StationId(v), next() % 9 + 1));
                }
            }
            let graph = WeightedGraph::new(n, edges).unwrap();
            let metric = build_metric(&graph).unwrap();
            let oracle = floyd_warshall(&graph);
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(metric.dist(StationId(i), StationId(j)), oracle[i][j]);
                }
            }
        }
    }

    #[test]
    fn metric_triangle_inequality() {
        let instance = small_instance();
        let n = instance.station_count();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let (i, j, l) = (StationId(i), StationId(j), StationId(l));
                    assert!(instance.dist(i, l) <= instance.dist(i, j) + instance.dist(j, l));
                }
            }
        }
    }

    #[test]
    fn tasks_empty_when_balanced() {
        let graph = path_graph(&[1]);
        let instance = Instance::new(
            graph,
            vec![5, 5],
            vec![2, 1],
            vec![2, 1],
            1,
            1,
            5,
            StationId(0),
        )
        .unwrap();
        assert!(derive_tasks(&instance).is_empty());
    }

    #[test]
    fn tasks_forced_by_definition() {
        let graph = path_graph(&[1]);
        let instance = Instance::new(
            graph,
            vec![5, 5],
            vec![3, 0],
            vec![1, 2],
            1,
            2,
            5,
            StationId(0),
        )
        .unwrap();
        let tasks = derive_tasks(&instance);
        assert_eq!(
            tasks,
            vec![
                Task {
                    station: StationId(0),
                    x: 2
                },
                Task {
                    station: StationId(1),
                    x: -2
                },
            ]
        );
        assert_eq!(tasks.iter().map(|t| t.x).sum::<i64>(), 0);
    }

    #[test]
    fn validation_reports_unbalanced_and_capacity() {
        let graph = path_graph(&[1]);
        let metric = build_metric(&graph).unwrap();
        let instance = Instance {
            graph,
            metric,
            cap: vec![1, 5],
            z0: vec![3, 0],
            zt: vec![0, 0],
            k: 1,
            capacity_l: 1,
            horizon: 5,
            depot: StationId(0),
        };
        let report = validate_instance(&instance);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, InstanceViolation::Unbalanced { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, InstanceViolation::CapacityExceeded { .. })));
    }

    #[test]
    fn well_formed_instance_validates_clean() {
        assert!(validate_instance(&small_instance()).is_empty());
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let instance = small_instance();
        let text = instance_to_json(&instance);
        let (parsed, warnings) = parse_instance_json(&text).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(instance_to_json(&parsed), text);
    }

    #[test]
    fn json_unknown_field_warns_missing_field_errors() {
        let instance = small_instance();
        let mut value: serde_json::Value =
            serde_json::from_str(&instance_to_json(&instance)).unwrap();
        value
            .as_object_mut()
            .unwrap()
            .insert("comment".into(), serde_json::json!("hi"));
        let (_, warnings) = parse_instance_json(&value.to_string()).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("comment"));

        value.as_object_mut().unwrap().remove("k");
        match parse_instance_json(&value.to_string()) {
            Err(ParseError::MissingField("k")) => {}
            other => panic!("expected missing-field error, got {other:?}"),
        }
    }
}
