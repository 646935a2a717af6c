//! Network graphs, BFS connectivity layers and per-tick link realizations.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier; fits the 2-byte id field of the wire format.
pub type NodeId = u16;

/// Corner of a grid that hosts the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corner {
    #[default]
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

/// Undirected graph with a designated gateway.
///
/// Edges are stored canonically as `(u, v)` with `u < v`, sorted. That order
/// is the order in which link realizations consume random draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    gateway: NodeId,
    edges: Vec<(NodeId, NodeId)>,
    // per node: (neighbor, edge index), sorted by neighbor id
    adj: Vec<Vec<(NodeId, usize)>>,
}

impl Topology {
    /// Builds a topology from an edge list. Duplicate edges are merged.
    ///
    /// Connectivity is not checked here; see [`connectivity_layers`].
    pub fn new(node_count: usize, gateway: NodeId, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::invalid("a topology needs at least 2 nodes"));
        }
        if node_count > NodeId::MAX as usize + 1 {
            return Err(Error::invalid(format!("{node_count} nodes do not fit a 2-byte id")));
        }
        if gateway as usize >= node_count {
            return Err(Error::invalid(format!("gateway {gateway} out of range")));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            if u as usize >= node_count || v as usize >= node_count {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut adj = vec![Vec::new(); node_count];
        for (idx, &(u, v)) in canon.iter().enumerate() {
            adj[u as usize].push((v, idx));
            adj[v as usize].push((u, idx));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        if let Some(lonely) = (0..node_count).find(|&i| adj[i].is_empty()) {
            return Err(Error::invalid(format!("node {lonely} has no neighbor")));
        }
        Ok(Topology { gateway, edges: canon, adj })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn gateway(&self) -> NodeId {
        self.gateway
    }

    /// Canonical sorted edge list.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Neighbor ids of `node`, ascending.
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj[node as usize].iter().map(|&(n, _)| n)
    }

    /// Neighbors of `node` with the index of the connecting edge.
    pub fn incident(&self, node: NodeId) -> &[(NodeId, usize)] {
        &self.adj[node as usize]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj[node as usize].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_index(u, v).is_some()
    }

    pub fn edge_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    /// Parses the plain-text edge-list format: a header line `N gateway_id`
    /// followed by one `u v` pair per line. Blank lines and `#` comments are
    /// skipped.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::invalid("edge list is empty"))?;
        let (n, gateway) = parse_pair::<usize, NodeId>(header, 1)?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            edges.push(parse_pair::<NodeId, NodeId>(line, lineno + 1)?);
        }
        Topology::new(n, gateway, &edges)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Topology::from_edge_list(&text)
    }

    /// Renders the topology in the edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.node_count(), self.gateway);
        for (u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

fn parse_pair<A: std::str::FromStr, B: std::str::FromStr>(line: &str, lineno: usize) -> Result<(A, B)> {
    let bad = || Error::invalid(format!("edge list line {lineno}: expected two integers, got {line:?}"));
    let mut it = line.split_whitespace();
    let a = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let b = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if it.next().is_some() {
        return Err(bad());
    }
    Ok((a, b))
}

/// 4-neighbor grid with the gateway in `corner`.
///
/// Ids follow BFS order from the gateway; nodes at equal hop distance are
/// numbered row-major.
pub fn make_grid(rows: usize, cols: usize, corner: Corner) -> Result<Topology> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid dimensions must be positive"));
    }
    if rows * cols < 2 {
        return Err(Error::invalid("a grid needs at least 2 cells"));
    }
    let (gr, gc) = match corner {
        Corner::TopLeft => (0, 0),
        Corner::TopRight => (0, cols - 1),
        Corner::BottomLeft => (rows - 1, 0),
        Corner::BottomRight => (rows - 1, cols - 1),
    };
    // On a grid, BFS distance from a cell is the Manhattan distance.
    let mut cells: Vec<(usize, usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r.abs_diff(gr) + c.abs_diff(gc), r, c)))
        .collect();
    cells.sort_unstable();
    let mut id_of = vec![0 as NodeId; rows * cols];
    for (id, &(_, r, c)) in cells.iter().enumerate() {
        id_of[r * cols + c] = id as NodeId;
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let here = id_of[r * cols + c];
            if c + 1 < cols {
                edges.push((here, id_of[r * cols + c + 1]));
            }
            if r + 1 < rows {
                edges.push((here, id_of[(r + 1) * cols + c]));
            }
        }
    }
    Topology::new(rows * cols, 0, &edges)
}

/// Path graph `0 - 1 - ... - (n-1)` with the gateway at node 0.
pub fn make_line(n: usize) -> Result<Topology> {
    if n < 2 {
        return Err(Error::invalid("a line needs at least 2 nodes"));
    }
    let edges: Vec<_> = (1..n).map(|i| ((i - 1) as NodeId, i as NodeId)).collect();
    Topology::new(n, 0, &edges)
}

/// Star with the gateway (node 0) at the center.
pub fn make_star(leaves: usize) -> Result<Topology> {
    if leaves < 1 {
        return Err(Error::invalid("a star needs at least one leaf"));
    }
    let edges: Vec<_> = (1..=leaves).map(|i| (0, i as NodeId)).collect();
    Topology::new(leaves + 1, 0, &edges)
}

/// BFS hop distance of every node from the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerAssignment {
    layers: Vec<u32>,
    max: u32,
}

impl LayerAssignment {
    /// Layer of `node`; the gateway is layer 0.
    pub fn layer(&self, node: NodeId) -> u32 {
        self.layers[node as usize]
    }

    /// Number of layers `L`.
    pub fn max_layer(&self) -> u32 {
        self.max
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.layers
    }
}

pub fn connectivity_layers(topo: &Topology) -> Result<LayerAssignment> {
    let n = topo.node_count();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[topo.gateway() as usize] = 0;
    queue.push_back(topo.gateway());
    while let Some(u) = queue.pop_front() {
        for v in topo.neighbors(u) {
            if dist[v as usize] == u32::MAX {
                dist[v as usize] = dist[u as usize] + 1;
                queue.push_back(v);
            }
        }
    }
    if let Some(lost) = dist.iter().position(|&d| d == u32::MAX) {
        return Err(Error::UnreachableNode(lost as NodeId));
    }
    let max = dist.iter().copied().max().unwrap_or(0);
    Ok(LayerAssignment { layers: dist, max })
}

/// Which edges carry traffic during one tick, indexed like [`Topology::edges`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkRealization {
    active: Vec<bool>,
}

impl LinkRealization {
    pub fn all_active(topo: &Topology) -> Self {
        LinkRealization { active: vec![true; topo.edges().len()] }
    }

    pub fn is_active(&self, edge: usize) -> bool {
        self.active[edge]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Draws one Bernoulli(`p`) outcome per edge in canonical edge order.
pub fn sample_links<R: Rng + ?Sized>(topo: &Topology, p: f64, rng: &mut R) -> Result<LinkRealization> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("link probability {p} outside [0, 1]")));
    }
    let active = topo.edges().iter().map(|_| rng.random_bool(p)).collect();
    Ok(LinkRealization { active })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_4x4_counts() {
        let g = make_grid(4, 4, Corner::TopLeft).unwrap();
        assert_eq!(g.node_count(), 16);
        assert_eq!(g.edges().len(), 24);
        assert_eq!(g.gateway(), 0);
    }

    #[test]
    fn grid_3x3_layers() {
        let g = make_grid(3, 3, Corner::TopLeft).unwrap();
        let l = connectivity_layers(&g).unwrap();
        assert_eq!(l.max_layer(), 4);
        assert_eq!(&l.as_slice()[1..], &[1, 1, 2, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn grid_minimal_and_invalid() {
        let g = make_grid(1, 2, Corner::TopLeft).unwrap();
        assert_eq!((g.node_count(), g.edges().len()), (2, 1));
        assert!(matches!(make_grid(0, 4, Corner::TopLeft), Err(Error::InvalidArgument(_))));
        assert!(make_grid(1, 1, Corner::TopLeft).is_err());
    }

    #[test]
    fn grid_other_corners_share_shape() {
        for corner in [Corner::TopRight, Corner::BottomLeft, Corner::BottomRight] {
            let g = make_grid(3, 5, corner).unwrap();
            let l = connectivity_layers(&g).unwrap();
            assert_eq!(l.max_layer(), 6);
            assert_eq!(g.edges().len(), 3 * 4 + 2 * 5);
            // ids are non-decreasing in layer
            assert!(l.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn line_shapes() {
        let l16 = make_line(16).unwrap();
        assert_eq!(l16.edges().len(), 15);
        assert_eq!(connectivity_layers(&l16).unwrap().max_layer(), 15);
        let l2 = make_line(2).unwrap();
        assert_eq!(connectivity_layers(&l2).unwrap().layer(1), 1);
        let l5 = make_line(5).unwrap();
        assert_eq!(l5.neighbors(3).collect::<Vec<_>>(), vec![2, 4]);
        assert!(make_line(1).is_err());
    }

    #[test]
    fn line_of_four_layers() {
        let l = connectivity_layers(&make_line(4).unwrap()).unwrap();
        assert_eq!(&l.as_slice()[1..], &[1, 2, 3]);
    }

    #[test]
    fn star_is_one_layer() {
        let l = connectivity_layers(&make_star(5).unwrap()).unwrap();
        assert_eq!(l.max_layer(), 1);
        assert!(l.as_slice()[1..].iter().all(|&x| x == 1));
    }

    #[test]
    fn disconnected_node_is_named() {
        let t = Topology::new(4, 0, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(connectivity_layers(&t), Err(Error::UnreachableNode(2)));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Topology::new(3, 0, &[(0, 0), (1, 2)]).is_err());
        assert!(Topology::new(3, 0, &[(0, 1)]).is_err());
        assert!(Topology::new(3, 5, &[(0, 1), (1, 2)]).is_err());
        assert!(Topology::new(3, 0, &[(0, 1), (1, 7)]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = make_grid(3, 3, Corner::BottomRight).unwrap();
        let text = g.to_edge_list();
        assert_eq!(Topology::from_edge_list(&text).unwrap(), g);
        let parsed = Topology::from_edge_list("# tri\n3 1\n0 1\n1 2 # spoke\n\n2 0\n").unwrap();
        assert_eq!(parsed.gateway(), 1);
        assert_eq!(parsed.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert!(Topology::from_edge_list("").is_err());
        assert!(Topology::from_edge_list("3 0\n0 x\n").is_err());
    }

    #[test]
    fn link_extremes() {
        let g = make_grid(3, 3, Corner::TopLeft).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_links(&g, 1.0, &mut rng).unwrap().active_count(), g.edges().len());
        assert_eq!(sample_links(&g, 0.0, &mut rng).unwrap().active_count(), 0);
        assert!(sample_links(&g, 1.5, &mut rng).is_err());
        assert!(sample_links(&g, -0.1, &mut rng).is_err());
    }

    #[test]
    fn link_fraction_matches_p() {
        let g = make_line(11).unwrap();
        assert_eq!(g.edges().len(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut on = 0usize;
        for _ in 0..10_000 {
            on += sample_links(&g, 0.5, &mut rng).unwrap().active_count();
        }
        let frac = on as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn links_reproducible() {
        let g = make_grid(4, 4, Corner::TopLeft).unwrap();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (0..50).map(|_| sample_links(&g, 0.3, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }
}
