//! Bipartite matching engine: maximum matching, right-saturated (2-)matchings,
//! and minimum-cost perfect matching.
//!
//! Everything is deterministic: vertices are scanned in ascending index order
//! and ties resolve to the lowest index, so pipelines built on these routines
//! reproduce bit-for-bit from a seed.

use serde::{Deserialize, Serialize};

use crate::seeding::{derive, unit_open};
use crate::{Error, Result};

/// A bipartite graph on `n_left` + `n_right` vertices (0-based indices
/// internally; the JSON wire form is 1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct BipartiteGraph {
    n_left: usize,
    n_right: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n_left: usize,
    n_right: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<RawGraph> for BipartiteGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        let edges = raw
            .edges
            .into_iter()
            .map(|(l, r)| {
                if l == 0 || r == 0 {
                    Err(Error::InvalidGraph("edge indices are 1-based".into()))
                } else {
                    Ok((l - 1, r - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        BipartiteGraph::new(raw.n_left, raw.n_right, edges)
    }
}

impl From<BipartiteGraph> for RawGraph {
    fn from(g: BipartiteGraph) -> Self {
        RawGraph {
            n_left: g.n_left,
            n_right: g.n_right,
            edges: g.edges.into_iter().map(|(l, r)| (l + 1, r + 1)).collect(),
        }
    }
}

impl BipartiteGraph {
    pub fn new(n_left: usize, n_right: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(l, r) in &edges {
            if l >= n_left || r >= n_right {
                return Err(Error::InvalidGraph(format!(
                    "edge ({l}, {r}) out of range for {n_left}x{n_right}"
                )));
            }
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(Error::InvalidGraph("duplicate edges".into()));
        }
        Ok(BipartiteGraph {
            n_left,
            n_right,
            edges,
        })
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Left-to-right adjacency lists, each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_left];
        for &(l, r) in &self.edges {
            adj[l].push(r);
        }
        adj
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// An r-matching: each left vertex used at most `r` times, each right vertex
/// at most once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
    r: usize,
}

impl Matching {
    fn validated(mut pairs: Vec<(usize, usize)>, r: usize, g: &BipartiteGraph) -> Matching {
        pairs.sort_unstable();
        let mut left_deg = vec![0usize; g.n_left];
        let mut right_deg = vec![0usize; g.n_right];
        for &(l, rt) in &pairs {
            assert!(
                g.edges.binary_search(&(l, rt)).is_ok(),
                "matching pair ({l}, {rt}) is not a graph edge"
            );
            left_deg[l] += 1;
            right_deg[rt] += 1;
            assert!(left_deg[l] <= r, "left vertex {l} exceeds multiplicity {r}");
            assert!(right_deg[rt] <= 1, "right vertex {rt} matched twice");
        }
        Matching { pairs, r }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// True when every right vertex of `g` is covered.
    pub fn saturates_right(&self, g: &BipartiteGraph) -> bool {
        self.pairs.len() == g.n_right
    }
}

/// Hopcroft–Karp layered search over the adjacency lists.
fn hopcroft_karp(n_left: usize, n_right: usize, adj: &[Vec<usize>]) -> Vec<(usize, usize)> {
    const NIL: usize = usize::MAX;
    let mut match_l = vec![NIL; n_left];
    let mut match_r = vec![NIL; n_right];
    let mut dist = vec![0u32; n_left];

    loop {
        // BFS from free left vertices builds the layer structure.
        let mut queue = std::collections::VecDeque::new();
        for l in 0..n_left {
            if match_l[l] == NIL {
                dist[l] = 0;
                queue.push_back(l);
            } else {
                dist[l] = u32::MAX;
            }
        }
        let mut found_free = false;
        while let Some(l) = queue.pop_front() {
            for &r in &adj[l] {
                match match_r[r] {
                    NIL => found_free = true,
                    l2 => {
                        if dist[l2] == u32::MAX {
                            dist[l2] = dist[l] + 1;
                            queue.push_back(l2);
                        }
                    }
                }
            }
        }
        if !found_free {
            break;
        }
        // DFS along strictly increasing layers; lowest index first.
        fn try_augment(
            l: usize,
            adj: &[Vec<usize>],
            dist: &mut [u32],
            match_l: &mut [usize],
            match_r: &mut [usize],
        ) -> bool {
            for idx in 0..adj[l].len() {
                let r = adj[l][idx];
                let l2 = match_r[r];
                let ok = if l2 == NIL {
                    true
                } else if dist[l2] == dist[l] + 1 {
                    try_augment(l2, adj, dist, match_l, match_r)
                } else {
                    false
                };
                if ok {
                    match_l[l] = r;
                    match_r[r] = l;
                    return true;
                }
            }
            dist[l] = u32::MAX;
            false
        }
        let mut augmented = false;
        for l in 0..n_left {
            if match_l[l] == NIL && try_augment(l, adj, &mut dist, &mut match_l, &mut match_r) {
                augmented = true;
            }
        }
        if !augmented {
            break;
        }
    }

    (0..n_left)
        .filter(|&l| match_l[l] != NIL)
        .map(|l| (l, match_l[l]))
        .collect()
}

/// Maximum-cardinality matching (multiplicity 1).  The cardinality is unique;
/// the witness is the deterministic lowest-index one.
pub fn max_matching(g: &BipartiteGraph) -> Matching {
    let pairs = hopcroft_karp(g.n_left, g.n_right, &g.adjacency());
    Matching::validated(pairs, 1, g)
}

/// Right-saturated 2-matching via left duplication: two copies of every left
/// vertex, then a maximum matching; exists iff that matching covers all of R.
pub fn right_saturated_2_matching(g: &BipartiteGraph) -> Option<Matching> {
    let adj = g.adjacency();
    let mut dup = Vec::with_capacity(g.n_left * 2);
    for a in &adj {
        dup.push(a.clone());
        dup.push(a.clone());
    }
    let pairs = hopcroft_karp(g.n_left * 2, g.n_right, &dup);
    if pairs.len() != g.n_right {
        return None;
    }
    let mapped = pairs.into_iter().map(|(d, r)| (d / 2, r)).collect();
    Some(Matching::validated(mapped, 2, g))
}

/// Right-saturated matching for graphs whose left vertices all have degree
/// ≤ 1: one exists iff no right vertex is isolated, because edge sets of
/// distinct right vertices are disjoint.  Picks the lowest incident left
/// vertex for each right vertex.
pub fn right_saturated_matching_via_unique_left_degree(
    g: &BipartiteGraph,
) -> Result<Option<Matching>> {
    let mut left_deg = vec![0usize; g.n_left];
    for &(l, _) in &g.edges {
        left_deg[l] += 1;
        if left_deg[l] > 1 {
            return Err(Error::InvalidGraph(format!(
                "left vertex {} has degree ≥ 2",
                l + 1
            )));
        }
    }
    let mut pick = vec![usize::MAX; g.n_right];
    for &(l, r) in &g.edges {
        if pick[r] == usize::MAX {
            pick[r] = l; // edges are sorted, so this is the lowest left index
        }
    }
    if pick.iter().any(|&l| l == usize::MAX) {
        return Ok(None);
    }
    let pairs = pick.into_iter().enumerate().map(|(r, l)| (l, r)).collect();
    Ok(Some(Matching::validated(pairs, 1, g)))
}

/// Minimum-cost perfect matching on a square grid (Hungarian method with
/// potentials, O(n³)).  Returns the assignment `perm[row] = column`.
pub fn min_cost_perfect_matching(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if n == 0 {
        return Err(Error::InvalidGraph("empty cost grid".into()));
    }
    for row in cost {
        if row.len() != n {
            return Err(Error::InvalidGraph("cost grid is not square".into()));
        }
        if row.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGraph("non-finite cost entry".into()));
        }
    }
    // 1-based arrays with column 0 as the sentinel, in the classic
    // potentials-plus-shortest-path formulation.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Unwind the alternating path.
        while j0 != 0 {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Erdős–Rényi bipartite sample: each of the n_left·n_right possible edges is
/// present independently with probability `p`, keyed by `(seed, l, r)`.
pub fn sample_random_bipartite(
    n_left: usize,
    n_right: usize,
    p: f64,
    seed: u64,
) -> Result<BipartiteGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("edge probability {p}")));
    }
    let mut edges = Vec::new();
    for l in 0..n_left {
        let row_seed = derive(seed, l as u64);
        for r in 0..n_right {
            if unit_open(derive(row_seed, r as u64)) < p {
                edges.push((l, r));
            }
        }
    }
    BipartiteGraph::new(n_left, n_right, edges)
}
