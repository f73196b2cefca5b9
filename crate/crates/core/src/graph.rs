//! Weighted bipartite graphs between participants and items.
//!
//! Participants form one side, items the other; each edge carries a weight
//! in `[−1, 1]`. Indices are 0-based in the API and 1-based in the edge-list
//! file format.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub participant: usize,
    pub item: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct WeightedBipartiteGraph {
    n: usize,
    m: usize,
    /// Per participant, `(item, weight)` sorted by item.
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    m: usize,
    edges: Vec<Edge>,
}

impl TryFrom<GraphRepr> for WeightedBipartiteGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        Self::new(r.n, r.m, r.edges)
    }
}

impl From<WeightedBipartiteGraph> for GraphRepr {
    fn from(g: WeightedBipartiteGraph) -> Self {
        Self { n: g.n, m: g.m, edges: g.edges().collect() }
    }
}

fn check_weight(w: f64) -> Result<f64> {
    if w.is_finite() && (-1.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(Error::InvalidGraph(format!("weight {w} is outside [-1, 1]")))
    }
}

impl WeightedBipartiteGraph {
    pub fn new(n: usize, m: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidGraph("need at least one item".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in edges {
            if e.participant >= n {
                return Err(Error::InvalidGraph(format!("participant {} out of range for n = {n}", e.participant)));
            }
            if e.item >= m {
                return Err(Error::InvalidGraph(format!("item {} out of range for m = {m}", e.item)));
            }
            adjacency[e.participant].push((e.item, check_weight(e.weight)?));
        }
        for (i, row) in adjacency.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {})", w[0].0)));
            }
        }
        Ok(Self { n, m, adjacency })
    }

    /// Builds from `(participant, item, weight)` triples.
    pub fn from_triples(n: usize, m: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(n, m, triples.iter().map(|&(participant, item, weight)| Edge { participant, item, weight }))
    }

    pub fn empty(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, std::iter::empty())
    }

    /// Participant count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Item count.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(participant, row)| row.iter().map(move |&(item, weight)| Edge { participant, item, weight }))
    }

    /// `(item, weight)` pairs of one participant, sorted by item.
    pub fn participant_edges(&self, participant: usize) -> &[(usize, f64)] {
        &self.adjacency[participant]
    }

    pub fn edge_weight(&self, participant: usize, item: usize) -> Option<f64> {
        let row = &self.adjacency[participant];
        row.binary_search_by_key(&item, |&(j, _)| j).ok().map(|k| row[k].1)
    }

    fn check_item(&self, j: usize) -> Result<()> {
        if j >= self.m {
            return Err(Error::InvalidGraph(format!("item {j} out of range for m = {}", self.m)));
        }
        Ok(())
    }

    /// Participants with an edge to item `j`.
    pub fn degree(&self, j: usize) -> Result<usize> {
        self.check_item(j)?;
        Ok(self.degrees()[j])
    }

    /// Sum of edge weights at item `j`.
    pub fn weight(&self, j: usize) -> Result<f64> {
        self.check_item(j)?;
        Ok(self.weights()[j])
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut out = vec![0; self.m];
        for e in self.edges() {
            out[e.item] += 1;
        }
        out
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for e in self.edges() {
            out[e.item] += e.weight;
        }
        out
    }

    /// `(⟨k⟩, ⟨w⟩)` with the `(n+m)(n+m−1)/2` denominator.
    pub fn averages(&self) -> Result<(f64, f64)> {
        let k: Vec<f64> = self.degrees().into_iter().map(|d| d as f64).collect();
        averages_from(self.n, self.m, &k, &self.weights())
    }

    /// Averages normalised by `n·m` instead. For sanity checks only.
    pub fn averages_per_pair(&self) -> Result<(f64, f64)> {
        let k: Vec<f64> = self.degrees().into_iter().map(|d| d as f64).collect();
        averages_per_pair_from(self.n, self.m, &k, &self.weights())
    }

    /// Repeats every participant `copies` times, keeping the items.
    pub fn replicate_participants(&self, copies: usize) -> Result<Self> {
        let n = self.n * copies;
        let adjacency = (0..copies).flat_map(|_| self.adjacency.iter().cloned()).collect();
        let g = Self { n, m: self.m, adjacency };
        Ok(g)
    }

    /// Edge-list text: header `n m`, then one `i j w` line per edge with
    /// 1-based indices.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m);
        for e in self.edges() {
            out.push_str(&format!("{} {} {:?}\n", e.participant + 1, e.item + 1, e.weight));
        }
        out
    }

    /// Parses the edge-list format. Blank lines and `#` comments are skipped.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let (line, header) = lines.next().ok_or_else(|| parse_err(1, "missing `n m` header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(line, format!("header needs 2 fields, got {}", fields.len())));
        }
        let int = |line: usize, s: &str| s.parse::<usize>().map_err(|e| parse_err(line, format!("`{s}`: {e}")));
        let n = int(line, fields[0])?;
        let m = int(line, fields[1])?;
        let mut edges = Vec::new();
        for (line, text) in lines {
            let fields: Vec<&str> = text.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(line, format!("edge needs 3 fields, got {}", fields.len())));
            }
            let i = int(line, fields[0])?;
            let j = int(line, fields[1])?;
            let w = fields[2].parse::<f64>().map_err(|e| parse_err(line, format!("`{}`: {e}", fields[2])))?;
            if i == 0 || j == 0 {
                return Err(parse_err(line, "indices are 1-based".into()));
            }
            edges.push(Edge { participant: i - 1, item: j - 1, weight: w });
        }
        Self::new(n, m, edges).map_err(|e| match e {
            Error::InvalidGraph(msg) => parse_err(0, msg),
            other => other,
        })
    }
}

/// Denominator `(n+m)(n+m−1)/2`.
pub fn pair_count(n: usize, m: usize) -> Result<f64> {
    let t = n + m;
    if t < 2 {
        return Err(Error::InvalidGraph("averages need n + m >= 2".into()));
    }
    Ok(t as f64 * (t as f64 - 1.0) / 2.0)
}

/// `(Σk / D, Σw / D)` with `D = (n+m)(n+m−1)/2`. Shared by the exact and
/// estimated statistics so that both go through one code path.
pub fn averages_from(n: usize, m: usize, degrees: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let d = pair_count(n, m)?;
    Ok((degrees.iter().sum::<f64>() / d, weights.iter().sum::<f64>() / d))
}

pub fn averages_per_pair_from(n: usize, m: usize, degrees: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidGraph("averages need n >= 1".into()));
    }
    let d = (n * m) as f64;
    Ok((degrees.iter().sum::<f64>() / d, weights.iter().sum::<f64>() / d))
}

/// How edges are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeModel {
    /// Every participant has exactly one edge, to a uniformly chosen item.
    OnePerParticipant,
    /// Every participant has exactly one edge, to `item` (0-based).
    SingleItem { item: usize },
    /// Each `(participant, item)` pair is an edge with probability `p`.
    Bernoulli { p: f64 },
    /// Every participant has edges to `k` distinct uniformly chosen items.
    FixedDegree { k: usize },
}

/// How edge weights are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightModel {
    Constant {
        value: f64,
    },
    /// Uniform on `[−1, 1]`.
    Uniform,
    /// Uniform over a finite set, `{0, 0.5, 1}` by default.
    Discrete {
        #[serde(default = "default_levels")]
        values: Vec<f64>,
    },
}

pub fn default_levels() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub m: usize,
    pub edges: EdgeModel,
    pub weights: WeightModel,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidGraph("need at least one item".into()));
        }
        match self.edges {
            EdgeModel::SingleItem { item } if item >= self.m => {
                return Err(Error::InvalidGraph(format!("item {item} out of range for m = {}", self.m)))
            }
            EdgeModel::Bernoulli { p } if !(p.is_finite() && (0.0..=1.0).contains(&p)) => {
                return Err(Error::InvalidGraph(format!("edge probability {p} is outside [0, 1]")))
            }
            EdgeModel::FixedDegree { k } if k > self.m => {
                return Err(Error::InvalidGraph(format!("degree {k} exceeds m = {}", self.m)))
            }
            _ => {}
        }
        match &self.weights {
            WeightModel::Constant { value } => {
                check_weight(*value)?;
            }
            WeightModel::Uniform => {}
            WeightModel::Discrete { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidGraph("discrete weight set is empty".into()));
                }
                for &v in values {
                    check_weight(v)?;
                }
            }
        }
        Ok(())
    }
}

fn draw_weight<R: Rng + ?Sized>(model: &WeightModel, rng: &mut R) -> f64 {
    match model {
        WeightModel::Constant { value } => *value,
        WeightModel::Uniform => rng.random_range(-1.0..=1.0),
        WeightModel::Discrete { values } => values[rng.random_range(0..values.len())],
    }
}

/// Generates a reproducible graph. Participant `i` draws from its own
/// stream, so the graph does not depend on generation order.
pub fn generate_graph(spec: &GraphSpec, seed: u64) -> Result<WeightedBipartiteGraph> {
    spec.validate()?;
    let streams = Streams::new(seed);
    let mut adjacency = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = streams.rng("graph", 0, i as u64);
        let items: Vec<usize> = match spec.edges {
            EdgeModel::OnePerParticipant => vec![rng.random_range(0..spec.m)],
            EdgeModel::SingleItem { item } => vec![item],
            EdgeModel::Bernoulli { p } => (0..spec.m).filter(|_| rng.random_bool(p)).collect(),
            EdgeModel::FixedDegree { k } => {
                let mut v = sample(&mut rng, spec.m, k).into_vec();
                v.sort_unstable();
                v
            }
        };
        let row: Vec<(usize, f64)> = items.into_iter().map(|j| (j, draw_weight(&spec.weights, &mut rng))).collect();
        adjacency.push(row);
    }
    Ok(WeightedBipartiteGraph { n: spec.n, m: spec.m, adjacency })
}

/// Maps weights in `{0, 0.5, 1}` to answers `0, 1, 2`.
pub fn weight_level(w: f64) -> Option<usize> {
    const LEVELS: [f64; 3] = [0.0, 0.5, 1.0];
    LEVELS.iter().position(|&l| l == w)
}

/// Number of participants per item among participants with exactly one edge.
pub fn single_edge_histogram(graph: &WeightedBipartiteGraph) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for i in 0..graph.n() {
        if let [(j, _)] = graph.participant_edges(i) {
            *out.entry(*j).or_insert(0) += 1;
        }
    }
    out
}
