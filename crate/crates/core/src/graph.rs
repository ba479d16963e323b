//! Random commercial-link graphs.
//!
//! Graphs are simple and undirected, stored as sorted neighbour lists packed
//! into one contiguous buffer. Two ensembles are provided: the uniform
//! G(n, p) graph and a two-block planted partition where same-block pairs
//! link with `p_intra` and cross-block pairs with `p_inter`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_probability, Error, Result};

/// Community label of an agent in a two-community graph.
pub type Community = u8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    communities: Option<Vec<Community>>,
}

impl Graph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Self-loops, duplicate edges (in either orientation) and endpoints
    /// outside `0..n` are rejected. When `communities` is given it must hold
    /// one label in `{0, 1}` per agent, with `ceil(n/2)` zeros.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        communities: Option<Vec<Community>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::TooFewAgents { n, min: 1 });
        }
        if n > u32::MAX as usize {
            return Err(Error::Config(format!(
                "{n} agents exceed the supported maximum"
            )));
        }
        if let Some(labels) = &communities {
            validate_communities(n, labels)?;
        }
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            for a in [i, j] {
                if a >= n {
                    return Err(Error::AgentOutOfRange { agent: a, n });
                }
            }
            if i == j {
                return Err(Error::Config(format!("self-loop on agent {i}")));
            }
            lists[i].push(j as u32);
            lists[j].push(i as u32);
        }
        for (i, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Config(format!("duplicate edge at agent {i}")));
            }
        }
        Ok(Self::from_sorted_lists(lists, communities))
    }

    fn from_sorted_lists(lists: Vec<Vec<u32>>, communities: Option<Vec<Community>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for list in lists {
            neighbors.extend_from_slice(&list);
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            communities,
        }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Sorted neighbours of agent `i`.
    ///
    /// Panics if `i >= n`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n() && self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn communities(&self) -> Option<&[Community]> {
        self.communities.as_deref()
    }

    pub fn community(&self, i: usize) -> Option<Community> {
        self.communities.as_ref().map(|c| c[i])
    }

    /// Edges as `(i, j)` pairs with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Splits the edges into (same-community, cross-community) counts.
    /// Returns `None` for unlabelled graphs.
    pub fn edge_counts_by_class(&self) -> Option<(usize, usize)> {
        let labels = self.communities.as_ref()?;
        let cross = self
            .edges()
            .filter(|&(i, j)| labels[i] != labels[j])
            .count();
        Some((self.edge_count() - cross, cross))
    }
}

fn validate_communities(n: usize, labels: &[Community]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::StateSizeMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if let Some(bad) = labels.iter().find(|&&c| c > 1) {
        return Err(Error::Config(format!(
            "community label {bad} is not 0 or 1"
        )));
    }
    let zeros = labels.iter().filter(|&&c| c == 0).count();
    if zeros != n.div_ceil(2) {
        return Err(Error::Config(format!(
            "community 0 must hold {} of {n} agents, found {zeros}",
            n.div_ceil(2)
        )));
    }
    Ok(())
}

/// Block labels used by [`gen_two_community`]: the first `ceil(n/2)` agents
/// form community 0.
pub fn block_communities(n: usize) -> Vec<Community> {
    let first = n.div_ceil(2);
    (0..n).map(|i| Community::from(i >= first)).collect()
}

/// Uniform random graph: every pair is linked independently with probability `p`.
pub fn gen_er<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    check_probability("p", p)?;
    if n == 0 {
        return Err(Error::TooFewAgents { n, min: 1 });
    }
    Ok(sample_pairs(n, None, |_, _| p, rng))
}

/// Two-community planted partition.
pub fn gen_two_community<R: Rng + ?Sized>(
    n: usize,
    p_intra: f64,
    p_inter: f64,
    rng: &mut R,
) -> Result<Graph> {
    check_probability("p_intra", p_intra)?;
    check_probability("p_inter", p_inter)?;
    if n < 2 {
        return Err(Error::TooFewAgents { n, min: 2 });
    }
    let labels = block_communities(n);
    let prob = {
        let labels = labels.clone();
        move |i: usize, j: usize| {
            if labels[i] == labels[j] {
                p_intra
            } else {
                p_inter
            }
        }
    };
    Ok(sample_pairs(n, Some(labels), prob, rng))
}

// Pairs are visited in (i, j>i) lexicographic order and each consumes exactly
// one draw, so the realized graph is a pure function of the stream.
fn sample_pairs<R, F>(n: usize, communities: Option<Vec<Community>>, prob: F, rng: &mut R) -> Graph
where
    R: Rng + ?Sized,
    F: Fn(usize, usize) -> f64,
{
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(prob(i, j)) {
                lists[i].push(j as u32);
                lists[j].push(i as u32);
            }
        }
    }
    // i's list receives all lower neighbours (ascending i) before its upper
    // ones (ascending j), so every list is already sorted.
    Graph::from_sorted_lists(lists, communities)
}

/// Large-N mean link density of a two-community graph.
pub fn mean_density(p_intra: f64, p_inter: f64) -> Result<f64> {
    check_probability("p_intra", p_intra)?;
    check_probability("p_inter", p_inter)?;
    Ok((p_intra + p_inter) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component id per agent; ids are numbered by their lowest agent.
    pub labels: Vec<usize>,
    pub count: usize,
}

pub fn connected_components(g: &Graph) -> Components {
    const UNSEEN: usize = usize::MAX;
    let mut labels = vec![UNSEEN; g.n()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for root in 0..g.n() {
        if labels[root] != UNSEEN {
            continue;
        }
        labels[root] = count;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            for &w in g.neighbors(v) {
                let w = w as usize;
                if labels[w] == UNSEEN {
                    labels[w] = count;
                    queue.push_back(w);
                }
            }
        }
        count += 1;
    }
    Components { labels, count }
}

/// Edge-list text format:
///
/// ```text
/// n 4
/// communities 0 0 1 1
/// 0 2
/// 1 3
/// ```
///
/// The `communities` line is optional. Edges are written with `i < j` in
/// lexicographic order.
impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n {}", self.n())?;
        if let Some(labels) = &self.communities {
            write!(f, "communities")?;
            for c in labels {
                write!(f, " {c}")?;
            }
            writeln!(f)?;
        }
        for (i, j) in self.edges() {
            writeln!(f, "{i} {j}")?;
        }
        Ok(())
    }
}

impl FromStr for Graph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .enumerate()
            .map(|(idx, l)| (idx + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

        let (line, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty input".into()))?;
        let n = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["n", v] => v
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("bad agent count: {e}")))?,
            _ => return Err(parse_err(line, "expected `n <N>`".into())),
        };

        let mut communities = None;
        let mut edges = Vec::new();
        for (line, text) in lines {
            let mut fields = text.split_whitespace();
            let first = fields.next().unwrap_or_default();
            if first == "communities" {
                if communities.is_some() || !edges.is_empty() {
                    return Err(parse_err(
                        line,
                        "`communities` must directly follow `n`".into(),
                    ));
                }
                let labels = fields
                    .map(|t| t.parse::<Community>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| parse_err(line, format!("bad community label: {e}")))?;
                communities = Some(labels);
                continue;
            }
            let second = fields
                .next()
                .ok_or_else(|| parse_err(line, "expected `i j`".into()))?;
            if fields.next().is_some() {
                return Err(parse_err(line, "trailing fields".into()));
            }
            let i = first
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("bad endpoint: {e}")))?;
            let j = second
                .parse::<usize>()
                .map_err(|e| parse_err(line, format!("bad endpoint: {e}")))?;
            if i >= j {
                return Err(parse_err(
                    line,
                    format!("edge `{i} {j}` must satisfy i < j"),
                ));
            }
            edges.push((i, j));
        }
        Graph::from_edges(n, &edges, communities)
    }
}
