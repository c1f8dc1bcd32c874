//! Finite graphs, nearest-neighbour kernels, restrictions `p_Λ` and the
//! `α`-weights `α(x) = M^{-|x|}` that define the configuration norm.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::scalar::Scalar;

/// Tolerance for row-sum checks on kernels.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    LatticeBox { d: usize, l: usize },
    LatticeTorus { d: usize, l: usize },
    /// Depth truncation of the homogeneous tree of degree `n + 1`.
    Tree { n: usize, depth: usize },
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::LatticeBox { d, l } => write!(f, "lattice-box(d={d},L={l})"),
            Family::LatticeTorus { d, l } => write!(f, "lattice-torus(d={d},L={l})"),
            Family::Tree { n, depth } => write!(f, "tree(n={n},depth={depth})"),
            Family::Custom => write!(f, "custom"),
        }
    }
}

/// Connected, undirected graph with dense vertex indices `0..V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    root: usize,
    dist: Vec<usize>,
    max_degree: usize,
    family: Family,
    labels: Vec<String>,
}

impl Graph {
    pub fn lattice_box(d: usize, l: usize) -> Result<Self> {
        Self::lattice(d, l, false)
    }

    pub fn lattice_torus(d: usize, l: usize) -> Result<Self> {
        Self::lattice(d, l, true)
    }

    fn lattice(d: usize, l: usize, torus: bool) -> Result<Self> {
        if d == 0 || l < 2 {
            return Err(Error::InvalidParameter(format!(
                "lattice needs d >= 1 and L >= 2, got d={d}, L={l}"
            )));
        }
        let v = l
            .checked_pow(d as u32)
            .filter(|&v| v <= 50_000_000)
            .ok_or_else(|| Error::InvalidParameter(format!("lattice L^d too large (L={l}, d={d})")))?;
        let mut adjacency = Vec::with_capacity(v);
        let mut labels = Vec::with_capacity(v);
        for idx in 0..v {
            let coords = lattice_coords(idx, d, l);
            let mut nbrs = Vec::with_capacity(2 * d);
            for (axis, dir) in lattice_directions(d) {
                if let Some(j) = lattice_step(&coords, axis, dir, l, torus) {
                    if !nbrs.contains(&j) {
                        nbrs.push(j);
                    }
                }
            }
            nbrs.sort_unstable();
            adjacency.push(nbrs);
            labels.push(format!(
                "({})",
                coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
            ));
        }
        let root = if torus {
            0
        } else {
            // centre of the box
            (0..d).fold(0, |acc, _| acc * l + l / 2)
        };
        let family = if torus {
            Family::LatticeTorus { d, l }
        } else {
            Family::LatticeBox { d, l }
        };
        Self::assemble(adjacency, root, family, labels)
    }

    /// Homogeneous tree of degree `n + 1` truncated at `depth`. Vertices are
    /// numbered breadth first; the root is 0.
    pub fn tree(n: usize, depth: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("tree needs n >= 2, got {n}")));
        }
        let mut size = 1usize;
        let mut layer = 1usize;
        for k in 1..=depth {
            layer = if k == 1 { n + 1 } else { layer.saturating_mul(n) };
            size = size.saturating_add(layer);
            if size > 50_000_000 {
                return Err(Error::InvalidParameter(format!(
                    "tree(n={n}, depth={depth}) is too large"
                )));
            }
        }
        let mut adjacency = vec![Vec::new()];
        let mut labels = vec![String::from("o")];
        let mut frontier = vec![0usize];
        for k in 1..=depth {
            let mut next = Vec::new();
            for &parent in &frontier {
                let kids = if k == 1 { n + 1 } else { n };
                for c in 0..kids {
                    let id = adjacency.len();
                    adjacency.push(vec![parent]);
                    adjacency[parent].push(id);
                    let label = if parent == 0 {
                        c.to_string()
                    } else {
                        format!("{}.{c}", labels[parent])
                    };
                    labels.push(label);
                    next.push(id);
                }
            }
            frontier = next;
        }
        Self::assemble(adjacency, 0, Family::Tree { n, depth }, labels)
    }

    /// Arbitrary symmetric adjacency. Self-loops are allowed.
    pub fn custom(adjacency: Vec<Vec<usize>>, root: usize) -> Result<Self> {
        let v = adjacency.len();
        if v == 0 || root >= v {
            return Err(Error::InvalidParameter("custom graph needs a root vertex".into()));
        }
        let mut adjacency = adjacency;
        for nbrs in adjacency.iter_mut() {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        for (x, nbrs) in adjacency.iter().enumerate() {
            for &y in nbrs {
                if y >= v || adjacency[y].binary_search(&x).is_err() {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency not symmetric at ({x}, {y})"
                    )));
                }
            }
        }
        let labels = (0..v).map(|i| i.to_string()).collect();
        Self::assemble(adjacency, root, Family::Custom, labels)
    }

    /// Custom graph from an undirected edge list over `0..v`.
    pub fn from_edges(v: usize, edges: &[(usize, usize)], root: usize) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); v];
        for &(a, b) in edges {
            if a >= v || b >= v {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) out of range")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Self::custom(adjacency, root)
    }

    fn assemble(adjacency: Vec<Vec<usize>>, root: usize, family: Family, labels: Vec<String>) -> Result<Self> {
        let dist = bfs_distances(&adjacency, root);
        if dist.contains(&usize::MAX) {
            return Err(Error::Disconnected);
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            adjacency,
            root,
            dist,
            max_degree,
            family,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adjacency[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn are_neighbors(&self, x: usize, y: usize) -> bool {
        self.adjacency[x].binary_search(&y).is_ok()
    }

    /// `|x|`, the graph distance to the root.
    pub fn dist(&self, x: usize) -> usize {
        self.dist[x]
    }

    pub fn distances_from(&self, x: usize) -> Vec<usize> {
        bfs_distances(&self.adjacency, x)
    }

    /// `D`, the maximum degree.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency
            .iter()
            .enumerate()
            .map(|(x, n)| n.iter().filter(|&&y| y >= x).count())
            .sum()
    }
}

fn bfs_distances(adjacency: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adjacency.len()];
    let mut queue = VecDeque::from([src]);
    dist[src] = 0;
    while let Some(x) = queue.pop_front() {
        for &y in &adjacency[x] {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

fn lattice_coords(mut idx: usize, d: usize, l: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for slot in c.iter_mut().rev() {
        *slot = idx % l;
        idx /= l;
    }
    c
}

fn lattice_index(coords: &[usize], l: usize) -> usize {
    coords.iter().fold(0, |acc, &c| acc * l + c)
}

fn lattice_directions(d: usize) -> impl Iterator<Item = (usize, i8)> {
    (0..d).flat_map(|axis| [(axis, 1i8), (axis, -1i8)])
}

fn lattice_step(coords: &[usize], axis: usize, dir: i8, l: usize, torus: bool) -> Option<usize> {
    let c = coords[axis];
    let next = match (dir, torus) {
        (1, true) => (c + 1) % l,
        (_, true) => (c + l - 1) % l,
        (1, false) if c + 1 < l => c + 1,
        (-1, false) if c > 0 => c - 1,
        _ => return None,
    };
    let mut moved = coords.to_vec();
    moved[axis] = next;
    Some(lattice_index(&moved, l))
}

/// Vertex subset `Λ`, stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    mask: Vec<bool>,
    count: usize,
}

impl Region {
    pub fn all(n: usize) -> Self {
        Self {
            mask: vec![true; n],
            count: n,
        }
    }

    pub fn from_vertices(n: usize, vertices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; n];
        for v in vertices {
            if v >= n {
                return Err(Error::InvalidParameter(format!("vertex {v} out of range")));
            }
            mask[v] = true;
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyRegion);
        }
        Ok(Self { mask, count })
    }

    /// Closed ball of the given radius around `center`.
    pub fn ball(graph: &Graph, center: usize, radius: usize) -> Self {
        let dist = graph.distances_from(center);
        let mask: Vec<bool> = dist.iter().map(|&d| d <= radius).collect();
        let count = mask.iter().filter(|&&m| m).count();
        Self { mask, count }
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, x: usize) -> bool {
        self.mask[x]
    }

    pub fn is_full(&self) -> bool {
        self.count == self.mask.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.mask.len() == other.mask.len() && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// `Λ° = {x ∈ Λ : every neighbour of x is in Λ}`.
    pub fn interior(&self, graph: &Graph) -> Vec<usize> {
        self.iter()
            .filter(|&x| graph.neighbors(x).iter().all(|&y| self.contains(y)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Simple,
    /// Outward weight `p` beyond depth 1, `1/(n+1)` from the root and
    /// `1 - n p` inward.
    BiasedTree { p: f64 },
}

/// Nonnegative substochastic nearest-neighbour kernel over a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    graph: Arc<Graph>,
    matrix: SparseMatrix<T>,
    substochastic: bool,
}

impl<T: Scalar> Kernel<T> {
    pub fn build(graph: Arc<Graph>, kind: KernelKind) -> Result<Self> {
        match kind {
            KernelKind::Simple => Ok(Self::simple(graph)),
            KernelKind::BiasedTree { p } => Self::biased_tree(graph, T::lit(p)),
        }
    }

    /// Simple random walk. On lattices every one of the `2d` directions
    /// carries `1/(2d)` (box boundaries lose the missing directions); on
    /// trees every neighbour of an interior vertex carries `1/(n+1)` and
    /// leaves keep only the inward weight.
    pub fn simple(graph: Arc<Graph>) -> Self {
        let n = graph.len();
        let mut rows = Vec::with_capacity(n);
        match graph.family() {
            Family::LatticeBox { d, l } | Family::LatticeTorus { d, l } => {
                let torus = matches!(graph.family(), Family::LatticeTorus { .. });
                let w = T::one() / T::from_count(2 * d as u64);
                for x in 0..n {
                    let coords = lattice_coords(x, d, l);
                    let mut row: Vec<(usize, T)> = Vec::new();
                    for (axis, dir) in lattice_directions(d) {
                        if let Some(y) = lattice_step(&coords, axis, dir, l, torus) {
                            match row.iter_mut().find(|(j, _)| *j == y) {
                                Some(e) => e.1 += w,
                                None => row.push((y, w)),
                            }
                        }
                    }
                    row.sort_by_key(|e| e.0);
                    rows.push(row);
                }
            }
            Family::Tree { n: branching, .. } => {
                let w = T::one() / T::from_count(branching as u64 + 1);
                for x in 0..n {
                    rows.push(graph.neighbors(x).iter().map(|&y| (y, w)).collect());
                }
            }
            Family::Custom => {
                for x in 0..n {
                    let deg = graph.degree(x);
                    let w = T::one() / T::from_count(deg.max(1) as u64);
                    rows.push(graph.neighbors(x).iter().map(|&y| (y, w)).collect());
                }
            }
        }
        Self::assemble(graph, rows)
    }

    pub fn biased_tree(graph: Arc<Graph>, p: T) -> Result<Self> {
        let Family::Tree { n, .. } = graph.family() else {
            return Err(Error::NotATree);
        };
        let nt = T::from_count(n as u64);
        if !(p >= T::zero() && p <= T::one() / nt) {
            return Err(Error::InvalidParameter(format!("biased-tree p = {p} outside [0, 1/{n}]")));
        }
        let root_w = T::one() / (nt + T::one());
        let inward = T::one() - nt * p;
        let rows = (0..graph.len())
            .map(|x| {
                graph
                    .neighbors(x)
                    .iter()
                    .map(|&y| {
                        let w = if x == graph.root() {
                            root_w
                        } else if graph.dist(y) == graph.dist(x) + 1 {
                            p
                        } else {
                            inward
                        };
                        (y, w)
                    })
                    .filter(|&(_, w)| w > T::zero())
                    .collect()
            })
            .collect();
        Ok(Self::assemble(graph, rows))
    }

    /// Explicit weights. `p(x, y) > 0` requires `x ~ y`; rows must sum to at
    /// most one.
    pub fn from_rows(graph: Arc<Graph>, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if rows.len() != graph.len() {
            return Err(Error::Mismatch("kernel rows vs graph size".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            let mut sum = T::zero();
            for &(y, w) in row {
                if w < T::zero() || !w.is_finite() {
                    return Err(Error::InvalidParameter(format!("p({x},{y}) = {w}")));
                }
                if w > T::zero() && (y >= graph.len() || !graph.are_neighbors(x, y)) {
                    return Err(Error::InvalidParameter(format!("p({x},{y}) > 0 but not neighbours")));
                }
                sum += w;
            }
            if sum > T::one() + T::lit(ROW_SUM_TOL) {
                return Err(Error::InvalidParameter(format!("row {x} sums to {sum} > 1")));
            }
        }
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().filter(|&(_, w)| w > T::zero()).collect())
            .collect();
        Ok(Self::assemble(graph, rows))
    }

    fn assemble(graph: Arc<Graph>, rows: Vec<Vec<(usize, T)>>) -> Self {
        let matrix = SparseMatrix::from_rows(rows);
        let tol = T::lit(ROW_SUM_TOL);
        let substochastic = (0..matrix.dim()).any(|x| matrix.row_sum(x) < T::one() - tol);
        Self {
            graph,
            matrix,
            substochastic,
        }
    }

    /// `p_Λ`: entries outside `Λ × Λ` set to zero.
    pub fn restrict(&self, region: &Region) -> Result<Self> {
        if region.is_empty() {
            return Err(Error::EmptyRegion);
        }
        if region.universe() != self.len() {
            return Err(Error::Mismatch("region universe vs kernel size".into()));
        }
        let rows = self
            .matrix
            .rows()
            .iter()
            .enumerate()
            .map(|(x, row)| {
                if region.contains(x) {
                    row.iter().copied().filter(|&(y, _)| region.contains(y)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let mut k = Self::assemble(self.graph.clone(), rows);
        k.substochastic |= self.substochastic;
        Ok(k)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_arc(&self) -> Arc<Graph> {
        self.graph.clone()
    }

    pub fn matrix(&self) -> &SparseMatrix<T> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.dim() == 0
    }

    pub fn p(&self, x: usize, y: usize) -> T {
        self.matrix.get(x, y)
    }

    pub fn row(&self, x: usize) -> &[(usize, T)] {
        self.matrix.row(x)
    }

    pub fn row_sum(&self, x: usize) -> T {
        self.matrix.row_sum(x)
    }

    pub fn is_substochastic(&self) -> bool {
        self.substochastic
    }

    /// Vertices whose row has lost mass.
    pub fn lossy_vertices(&self) -> Vec<usize> {
        let tol = T::lit(ROW_SUM_TOL);
        (0..self.len()).filter(|&x| self.row_sum(x) < T::one() - tol).collect()
    }

    /// `Pᵀ` as a plain sparse matrix (its rows need not be substochastic).
    pub fn transpose_matrix(&self) -> SparseMatrix<T> {
        self.matrix.transpose()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.matrix
            .rows()
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().map(move |&(y, w)| (x, y, w)))
    }
}

/// `α(x) = M^{-|x|}` with `M > (D - 1)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaWeights<T> {
    m: T,
    weights: Vec<T>,
    /// `max_x Σ_y p(x,y) α(y) / (M α(x))` for the simple walk on the graph.
    simple_kernel_ratio: T,
}

impl<T: Scalar> AlphaWeights<T> {
    pub fn new(graph: &Graph, m: T) -> Result<Self> {
        let dm1 = T::from_count(graph.max_degree() as u64) - T::one();
        let bound = dm1 * dm1;
        if !(m > bound) || !m.is_finite() {
            return Err(Error::AlphaBase {
                m: m.as_f64(),
                bound: bound.as_f64(),
            });
        }
        let weights = (0..graph.len())
            .map(|x| m.powi(-(graph.dist(x) as i32)))
            .collect();
        let mut aw = Self {
            m,
            weights,
            simple_kernel_ratio: T::zero(),
        };
        let simple = Kernel::<T>::simple(Arc::new(graph.clone()));
        aw.simple_kernel_ratio = aw.kernel_ratio(&simple);
        Ok(aw)
    }

    /// `M = (D - 1)² + 1`.
    pub fn default_base(graph: &Graph) -> T {
        let dm1 = T::from_count(graph.max_degree() as u64) - T::one();
        dm1 * dm1 + T::one()
    }

    pub fn with_default_base(graph: &Graph) -> Result<Self> {
        Self::new(graph, Self::default_base(graph))
    }

    pub fn base(&self) -> T {
        self.m
    }

    pub fn weight(&self, x: usize) -> T {
        self.weights[x]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn simple_kernel_ratio(&self) -> T {
        self.simple_kernel_ratio
    }

    /// `max_x Σ_y q(x,y) α(y) / (M α(x))`; at most one whenever the
    /// inequality `Σ_y q(x,y) α(y) ≤ M α(x)` holds everywhere.
    pub fn kernel_ratio(&self, kernel: &Kernel<T>) -> T {
        (0..kernel.len())
            .map(|x| {
                let s: T = kernel.row(x).iter().map(|&(y, w)| w * self.weights[y]).sum();
                s / (self.m * self.weights[x])
            })
            .fold(T::zero(), T::max)
    }

    pub fn satisfied_by(&self, kernel: &Kernel<T>) -> bool {
        self.kernel_ratio(kernel) <= T::one() + T::lit(ROW_SUM_TOL)
    }

    /// `‖η‖ = Σ_x η(x) α(x)`.
    pub fn norm(&self, occupancy: &[u32]) -> T {
        occupancy
            .iter()
            .zip(&self.weights)
            .map(|(&n, &a)| T::from_count(n as u64) * a)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(d: usize, l: usize) -> Arc<Graph> {
        Arc::new(Graph::lattice_torus(d, l).unwrap())
    }

    #[test]
    fn cycle_has_degree_two() {
        let g = Graph::lattice_torus(1, 4).unwrap();
        assert_eq!(g.len(), 4);
        assert!((0..4).all(|x| g.degree(x) == 2));
        assert_eq!(g.max_degree(), 2);
        assert_eq!(g.dist(2), 2);
    }

    #[test]
    fn degenerate_and_layered_trees() {
        let g = Graph::tree(2, 0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.degree(0), 0);
        let g = Graph::tree(2, 2).unwrap();
        assert_eq!(g.len(), 10);
        let layers: Vec<usize> = (0..3).map(|k| (0..10).filter(|&x| g.dist(x) == k).count()).collect();
        assert_eq!(layers, vec![1, 3, 6]);
        assert_eq!(g.degree(0), 3);
        for x in 1..4 {
            assert_eq!(g.degree(x), 3);
        }
        for x in 4..10 {
            assert_eq!(g.degree(x), 1);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Graph::lattice_torus(0, 4).is_err());
        assert!(Graph::lattice_box(2, 1).is_err());
        assert!(Graph::tree(1, 3).is_err());
        assert!(Graph::custom(vec![vec![1], vec![]], 0).is_err());
        assert_eq!(Graph::custom(vec![vec![], vec![]], 0).unwrap_err(), Error::Disconnected);
    }

    #[test]
    fn box_root_is_centre_and_boundary_rows_lose_mass() {
        let g = Arc::new(Graph::lattice_box(2, 5).unwrap());
        assert_eq!(g.label(g.root()), "(2,2)");
        let k = Kernel::<f64>::simple(g.clone());
        assert!(k.is_substochastic());
        assert!((k.row_sum(g.root()) - 1.0).abs() < 1e-15);
        assert!((k.row_sum(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn simple_kernel_on_cycle() {
        let k = Kernel::<f64>::simple(torus(1, 4));
        assert_eq!(k.p(0, 1), 0.5);
        assert_eq!(k.p(0, 3), 0.5);
        assert_eq!(k.p(0, 2), 0.0);
        assert!(!k.is_substochastic());
    }

    #[test]
    fn two_site_torus_merges_directions() {
        let k = Kernel::<f64>::simple(torus(1, 2));
        assert_eq!(k.p(0, 1), 1.0);
    }

    #[test]
    fn biased_tree_weights() {
        let g = Arc::new(Graph::tree(2, 3).unwrap());
        let k = Kernel::<f64>::biased_tree(g.clone(), 0.45).unwrap();
        let x = (0..g.len()).find(|&x| g.dist(x) == 2).unwrap();
        for &y in g.neighbors(x) {
            if g.dist(y) == 3 {
                assert_eq!(k.p(x, y), 0.45);
            } else {
                assert!((k.p(x, y) - 0.1).abs() < 1e-15);
            }
        }
        assert!((k.row_sum(x) - 1.0).abs() < 1e-12);
        for &y in g.neighbors(0) {
            assert!((k.p(0, y) - 1.0 / 3.0).abs() < 1e-15);
        }
        // leaves keep only the inward weight
        let leaf = g.len() - 1;
        assert!((k.row_sum(leaf) - 0.1).abs() < 1e-12);
        assert!(k.is_substochastic());
    }

    #[test]
    fn biased_tree_at_uniform_p_is_simple_walk() {
        let g = Arc::new(Graph::tree(2, 4).unwrap());
        let b = Kernel::<f64>::biased_tree(g.clone(), 1.0 / 3.0).unwrap();
        let s = Kernel::<f64>::simple(g);
        for x in 0..b.len() {
            for &(y, w) in s.row(x) {
                assert!((b.p(x, y) - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn biased_tree_errors() {
        let g = Arc::new(Graph::tree(2, 2).unwrap());
        assert!(Kernel::<f64>::biased_tree(g, 0.6).is_err());
        assert_eq!(
            Kernel::<f64>::biased_tree(torus(1, 4), 0.3).unwrap_err(),
            Error::NotATree
        );
    }

    #[test]
    fn restriction_semantics() {
        let g = torus(1, 4);
        let k = Kernel::<f64>::simple(g.clone());
        let all = Region::all(4);
        assert_eq!(k.restrict(&all).unwrap().matrix(), k.matrix());
        let r = Region::from_vertices(4, [0, 1]).unwrap();
        let kr = k.restrict(&r).unwrap();
        assert_eq!(kr.row_sum(0), 0.5);
        assert_eq!(kr.row_sum(1), 0.5);
        assert_eq!(kr.row_sum(2), 0.0);
        assert!(kr.is_substochastic());
        assert_eq!(kr.restrict(&r).unwrap(), kr);
        assert!(Region::from_vertices(4, []).is_err());
    }

    #[test]
    fn interior_of_segment() {
        let g = Graph::lattice_torus(1, 6).unwrap();
        let r = Region::from_vertices(6, [0, 1, 2]).unwrap();
        assert_eq!(r.interior(&g), vec![1]);
    }

    #[test]
    fn alpha_weights_inequality() {
        let g = Graph::lattice_torus(1, 10).unwrap();
        let a = AlphaWeights::<f64>::new(&g, 2.0).unwrap();
        let k = Kernel::<f64>::simple(Arc::new(g.clone()));
        let at_root: f64 = k.row(0).iter().map(|&(y, w)| w * a.weight(y)).sum();
        assert_eq!(at_root, 0.5);
        assert!(at_root <= 2.0 * a.weight(0));
        assert!(a.satisfied_by(&k));

        let t = Graph::tree(2, 3).unwrap();
        assert!(AlphaWeights::<f64>::new(&t, 5.0).is_ok());
        assert!(matches!(AlphaWeights::<f64>::new(&t, 3.0), Err(Error::AlphaBase { .. })));
        assert!(matches!(AlphaWeights::<f64>::new(&t, 4.0), Err(Error::AlphaBase { .. })));
        assert_eq!(AlphaWeights::<f64>::default_base(&t), 5.0);
    }

    #[test]
    fn alpha_norm_of_delta() {
        let g = Graph::tree(2, 2).unwrap();
        let a = AlphaWeights::<f64>::with_default_base(&g).unwrap();
        let mut eta = vec![0u32; g.len()];
        eta[5] = 3;
        assert!((a.norm(&eta) - 3.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn from_rows_rejects_non_neighbours() {
        let g = torus(1, 4);
        let rows = vec![vec![(2, 0.5)], vec![], vec![], vec![]];
        assert!(Kernel::<f64>::from_rows(g.clone(), rows).is_err());
        let rows = vec![vec![(1, 0.7), (3, 0.7)], vec![], vec![], vec![]];
        assert!(Kernel::<f64>::from_rows(g, rows).is_err());
    }
}
