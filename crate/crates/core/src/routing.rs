//! Shortest paths on a city graph that skip hotspot cities.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error("unknown city {0:?}")]
    UnknownCity(String),
    #[error("{0:?} is a hotspot and cannot be an endpoint")]
    HotspotEndpoint(String),
    #[error("invalid edge {a:?}-{b:?}: {reason}")]
    InvalidEdge { a: String, b: String, reason: &'static str },
}

/// Undirected graph with positive km weights and a hotspot set.
#[derive(Debug, Clone, Default)]
pub struct CityGraph {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    hotspot: Vec<bool>,
}

impl CityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Result<Self, RouteError> {
        let mut g = Self::new();
        for (a, b, km) in edges {
            g.add_edge(a, b, km)?;
        }
        Ok(g)
    }

    pub fn add_city(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        self.adjacency.push(Vec::new());
        self.hotspot.push(false);
        i
    }

    pub fn add_edge(&mut self, a: &str, b: &str, km: f64) -> Result<(), RouteError> {
        let invalid = |reason| RouteError::InvalidEdge { a: a.to_string(), b: b.to_string(), reason };
        if a == b {
            return Err(invalid("self-loop"));
        }
        if !(km.is_finite() && km > 0.0) {
            return Err(invalid("weight must be positive"));
        }
        let (ia, ib) = (self.add_city(a), self.add_city(b));
        self.adjacency[ia].push((ib, km));
        self.adjacency[ib].push((ia, km));
        Ok(())
    }

    pub fn city(&self, name: &str) -> Result<usize, RouteError> {
        self.index.get(name).copied().ok_or_else(|| RouteError::UnknownCity(name.to_string()))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn cities(&self) -> impl Iterator<Item = &str> + '_ {
        self.index.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn set_hotspot(&mut self, name: &str, hot: bool) -> Result<(), RouteError> {
        let i = self.city(name)?;
        self.hotspot[i] = hot;
        Ok(())
    }

    pub fn clear_hotspots(&mut self) {
        self.hotspot.iter_mut().for_each(|h| *h = false);
    }

    pub fn is_hotspot(&self, name: &str) -> bool {
        self.index.get(name).is_some_and(|&i| self.hotspot[i])
    }

    pub fn hotspots(&self) -> Vec<&str> {
        self.cities().filter(|c| self.is_hotspot(c)).collect()
    }

    /// Weight of the lightest edge between two cities.
    pub fn edge_weight(&self, a: &str, b: &str) -> Option<f64> {
        let (ia, ib) = (self.city(a).ok()?, self.city(b).ok()?);
        self.adjacency[ia].iter().filter(|(j, _)| *j == ib).map(|(_, w)| *w).min_by(f64::total_cmp)
    }

    pub fn neighbors(&self, name: &str) -> Vec<(&str, f64)> {
        match self.city(name) {
            Ok(i) => self.adjacency[i].iter().map(|&(j, w)| (self.name(j), w)).collect(),
            Err(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Vec<String>,
    pub total_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouteResult {
    Found(Route),
    NoPath,
}

impl RouteResult {
    pub fn route(&self) -> Option<&Route> {
        match self {
            RouteResult::Found(r) => Some(r),
            RouteResult::NoPath => None,
        }
    }
}

struct QueueItem {
    cost: f64,
    rank: usize,
    node: usize,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueItem {}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueItem {
    // Reversed for a min-heap; equal costs pop in name order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.rank.cmp(&self.rank))
    }
}

fn dijkstra(g: &CityGraph, source: usize, dest: usize, avoid_hotspots: bool) -> RouteResult {
    let n = g.len();
    let mut rank = vec![0usize; n];
    for (r, &i) in g.index.values().enumerate() {
        rank[i] = r;
    }
    let mut distance = vec![f64::INFINITY; n];
    let mut last: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut queue = BinaryHeap::new();
    distance[source] = 0.0;
    queue.push(QueueItem { cost: 0.0, rank: rank[source], node: source });

    while let Some(QueueItem { cost, node, .. }) = queue.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == dest {
            break;
        }
        for &(next, w) in &g.adjacency[node] {
            if done[next] || (avoid_hotspots && g.hotspot[next]) {
                continue;
            }
            let tentative = cost + w;
            if tentative < distance[next] {
                distance[next] = tentative;
                last[next] = Some(node);
                queue.push(QueueItem { cost: tentative, rank: rank[next], node: next });
            }
        }
    }

    if distance[dest].is_infinite() {
        return RouteResult::NoPath;
    }
    let mut path = vec![dest];
    let mut cur = dest;
    while let Some(prev) = last[cur] {
        path.push(prev);
        cur = prev;
    }
    path.reverse();
    // Sum along the path rather than trusting the relaxed label.
    let total_km = path
        .windows(2)
        .map(|w| g.adjacency[w[0]].iter().filter(|(j, _)| *j == w[1]).map(|(_, k)| *k).fold(f64::INFINITY, f64::min))
        .fold(0.0, |a, b| a + b);
    RouteResult::Found(Route { path: path.into_iter().map(|i| g.names[i].clone()).collect(), total_km })
}

/// Shortest path through non-hotspot cities only.
pub fn safe_route(g: &CityGraph, source: &str, dest: &str) -> Result<RouteResult, RouteError> {
    let (s, d) = (g.city(source)?, g.city(dest)?);
    for (name, i) in [(source, s), (dest, d)] {
        if g.hotspot[i] {
            return Err(RouteError::HotspotEndpoint(name.to_string()));
        }
    }
    Ok(dijkstra(g, s, d, true))
}

/// Plain shortest path, hotspots ignored.
pub fn baseline_route(g: &CityGraph, source: &str, dest: &str) -> Result<RouteResult, RouteError> {
    let (s, d) = (g.city(source)?, g.city(dest)?);
    Ok(dijkstra(g, s, d, false))
}
