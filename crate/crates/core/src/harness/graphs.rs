//! Random weighted graphs with shortest-distance labels, and the symmetry
//! and triangle templates used to constrain a distance predictor.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formula::{compile, CnfTemplate, CompileOptions, GroupMode};

use super::HarnessError;

/// Probability of each non-tree vertex pair receiving an edge.
pub const EXTRA_EDGE_PROB: f64 = 0.25;
pub const MAX_WEIGHT: u32 = 9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphInstance {
    pub n: usize,
    /// Symmetric; 0 means no edge.
    pub adjacency: Vec<Vec<u32>>,
    pub source: usize,
    pub labels: Vec<u32>,
}

impl GraphInstance {
    /// Adjacency scaled by the maximum weight, row-major.
    pub fn features(&self) -> Vec<f64> {
        features(&self.adjacency)
    }

    /// The same graph with vertices 0 and `k` exchanged.
    pub fn swapped(&self, k: usize) -> Vec<Vec<u32>> {
        swap_vertices(&self.adjacency, 0, k)
    }
}

pub fn features(adj: &[Vec<u32>]) -> Vec<f64> {
    adj.iter()
        .flatten()
        .map(|&w| w as f64 / MAX_WEIGHT as f64)
        .collect()
}

pub fn swap_vertices(adj: &[Vec<u32>], a: usize, b: usize) -> Vec<Vec<u32>> {
    let p = |v: usize| {
        if v == a {
            b
        } else if v == b {
            a
        } else {
            v
        }
    };
    let n = adj.len();
    (0..n)
        .map(|i| (0..n).map(|j| adj[p(i)][p(j)]).collect())
        .collect()
}

pub fn dijkstra(adj: &[Vec<u32>], source: usize) -> Vec<Option<u32>> {
    let n = adj.len();
    let mut dist: Vec<Option<u32>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = Some(0);
    heap.push(Reverse((0u32, source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].is_some_and(|best| d > best) {
            continue;
        }
        for (v, &w) in adj[u].iter().enumerate() {
            if w == 0 {
                continue;
            }
            let nd = d + w;
            if dist[v].is_none_or(|cur| nd < cur) {
                dist[v] = Some(nd);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    dist
}

/// Connected graphs: a random spanning tree plus independent extra edges,
/// weights uniform in `1..=9`, labels from vertex 0.
pub fn gen_graphs(n: usize, count: usize, seed: u64) -> Result<Vec<GraphInstance>, HarnessError> {
    if n < 2 {
        return Err(HarnessError::Config(format!("graphs need at least 2 vertices, got {}", n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut adj = vec![vec![0u32; n]; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for i in 1..n {
            let u = order[rng.gen_range(0..i)];
            let v = order[i];
            let w = rng.gen_range(1..=MAX_WEIGHT);
            adj[u][v] = w;
            adj[v][u] = w;
        }
        for u in 0..n {
            for v in u + 1..n {
                if adj[u][v] == 0 && rng.gen_bool(EXTRA_EDGE_PROB) {
                    let w = rng.gen_range(1..=MAX_WEIGHT);
                    adj[u][v] = w;
                    adj[v][u] = w;
                }
            }
        }
        let labels = dijkstra(&adj, 0)
            .into_iter()
            .map(|d| d.expect("spanning tree keeps the graph connected"))
            .collect();
        out.push(GraphInstance {
            n,
            adjacency: adj,
            source: 0,
            labels,
        });
    }
    Ok(out)
}

/// Constraint for one sample over slot `x` (the graph as given) and slots
/// `s<k>` (the graph with vertices 0 and `k` swapped, so its prediction at
/// index `pi(j)` estimates the distance from `k` to `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathConstraint {
    pub source: String,
    pub template: CnfTemplate,
    /// `(k, j)` pairs: `d(0, j) <= d(0, k) + d(k, j)`.
    pub triples: Vec<(usize, usize)>,
    /// Swap partners whose forward passes the template reads.
    pub sources: BTreeSet<usize>,
}

pub fn slot_name(k: usize) -> String {
    format!("s{}", k)
}

/// Samples `count` distinct `(k, j)` pairs with `k != j`, both nonzero, and
/// builds the triangle atoms plus a symmetry equality for every distinct `k`.
/// Everything goes into one clause group.
pub fn shortest_path_constraints<R: Rng>(
    n: usize,
    count: usize,
    rng: &mut R,
) -> Result<PathConstraint, HarnessError> {
    if n < 3 {
        return Err(HarnessError::Config(format!("triangle constraints need at least 3 vertices, got {}", n)));
    }
    let mut all: Vec<(usize, usize)> = (1..n)
        .flat_map(|k| (1..n).filter(move |&j| j != k).map(move |j| (k, j)))
        .collect();
    all.shuffle(rng);
    all.truncate(count.max(1));
    all.sort_unstable();
    let sources: BTreeSet<usize> = all.iter().map(|&(k, _)| k).collect();
    let swap = |k: usize, v: usize| {
        if v == 0 {
            k
        } else if v == k {
            0
        } else {
            v
        }
    };
    let mut parts = Vec::new();
    for &(k, j) in &all {
        parts.push(format!("x.d[{j}] - x.d[{k}] - {}.d[{}] <= 0", slot_name(k), swap(k, j)));
    }
    for &k in &sources {
        parts.push(format!("x.d[{k}] == {}.d[{}]", slot_name(k), swap(k, 0)));
    }
    let source = parts.join(" & ");
    let opts = CompileOptions {
        grouping: GroupMode::Single,
        ..CompileOptions::default()
    };
    let template = compile(&source, &opts)?;
    Ok(PathConstraint {
        source,
        template,
        triples: all,
        sources,
    })
}

/// Inputs for the slots a constraint reads.
pub fn path_inputs(g: &GraphInstance, c: &PathConstraint) -> BTreeMap<String, Vec<f64>> {
    let mut inputs = BTreeMap::new();
    inputs.insert("x".to_string(), g.features());
    for &k in &c.sources {
        inputs.insert(slot_name(k), features(&g.swapped(k)));
    }
    inputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{ground, TolMode};

    fn bellman_ford(adj: &[Vec<u32>], s: usize) -> Vec<Option<u64>> {
        let n = adj.len();
        let mut d: Vec<Option<u64>> = vec![None; n];
        d[s] = Some(0);
        for _ in 0..n {
            for u in 0..n {
                for v in 0..n {
                    if adj[u][v] > 0 {
                        if let Some(du) = d[u] {
                            let nd = du + adj[u][v] as u64;
                            if d[v].is_none_or(|x| nd < x) {
                                d[v] = Some(nd);
                            }
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn labels_match_bellman_ford() {
        let gs = gen_graphs(8, 200, 17).unwrap();
        for g in &gs {
            let bf = bellman_ford(&g.adjacency, 0);
            let got: Vec<Option<u64>> = g.labels.iter().map(|&d| Some(d as u64)).collect();
            assert_eq!(got, bf);
            for i in 0..g.n {
                assert_eq!(g.adjacency[i][i], 0);
                for j in 0..g.n {
                    assert_eq!(g.adjacency[i][j], g.adjacency[j][i]);
                    assert!(g.adjacency[i][j] <= MAX_WEIGHT);
                }
            }
        }
    }

    #[test]
    fn two_vertices_and_determinism() {
        let g = &gen_graphs(2, 1, 3).unwrap()[0];
        let w = g.adjacency[0][1];
        assert!((1..=9).contains(&w));
        assert_eq!(g.labels, vec![0, w]);
        assert_eq!(gen_graphs(6, 20, 9).unwrap(), gen_graphs(6, 20, 9).unwrap());
        assert!(gen_graphs(1, 1, 0).is_err());
    }

    fn true_outputs(g: &GraphInstance, c: &PathConstraint) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        out.insert("x".into(), g.labels.iter().map(|&d| d as f64).collect());
        for &k in &c.sources {
            let d = dijkstra(&g.swapped(k), 0);
            out.insert(slot_name(k), d.into_iter().map(|v| v.unwrap() as f64).collect());
        }
        out
    }

    #[test]
    fn true_labels_satisfy_every_atom() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in gen_graphs(8, 50, 2).unwrap() {
            let c = shortest_path_constraints(8, 10, &mut rng).unwrap();
            let gr = ground(&c.template, &true_outputs(&g, &c)).unwrap();
            assert!(c.template.eval_bool_with(&gr.values, 0.0, TolMode::All).unwrap(), "{}", c.source);
        }
    }

    #[test]
    fn swapped_prediction_reads_distance_from_k() {
        let g = &gen_graphs(7, 1, 4).unwrap()[0];
        for k in 1..7 {
            let from_k = dijkstra(&g.adjacency, k);
            let swapped = dijkstra(&g.swapped(k), 0);
            for j in 0..7 {
                let pj = if j == 0 { k } else if j == k { 0 } else { j };
                assert_eq!(swapped[pj], from_k[j]);
            }
        }
    }

    #[test]
    fn symmetric_model_has_zero_symmetry_cost() {
        use crate::encoder::CostMatrix;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = &gen_graphs(8, 1, 5).unwrap()[0];
        let c = shortest_path_constraints(8, 10, &mut rng).unwrap();
        // one pass per slot: 1 + distinct sources
        assert_eq!(path_inputs(g, &c).len(), 1 + c.sources.len());
        assert_eq!(c.template.clauses.len(), c.triples.len() + 2 * c.sources.len());
        let outs = true_outputs(g, &c);
        let gr = ground(&c.template, &outs).unwrap();
        let all: Vec<usize> = (0..c.template.clauses.len()).collect();
        let m = CostMatrix::from_grounding(&c.template, &gr, &all).unwrap();
        assert!(m.costs.iter().flatten().all(|&s| s == 0.0));
    }
}
