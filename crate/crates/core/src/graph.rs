//! Finite windows of the weighted graphs under study: cubic lattice boxes
//! with an absorbing outer shell, Sierpinski-gasket x Z^2 products, killed
//! graphs and edge subdivisions.
//!
//! Lattice boxes keep their topology implicit (neighbors are coordinate
//! arithmetic); everything else is explicit CSR. The vertex order is always
//! deterministic so that runs are reproducible bit-for-bit.

use serde::Serialize;
use thiserror::Error;

pub type Vertex = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex budget exceeded: window needs {required} vertices, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

/// Per-construction resource limits.
#[derive(Debug, Clone, Copy)]
pub struct BuildBudget {
    pub max_vertices: u64,
}

impl Default for BuildBudget {
    fn default() -> Self {
        // ~64M vertices: a 399^3 box in d=3; refuse anything larger.
        BuildBudget { max_vertices: 64_000_000 }
    }
}

/// Cubic box {-half,...,half}^dim with unit conductances and killing on the
/// outer face that realizes absorption (zero Dirichlet data) just outside.
#[derive(Debug, Clone)]
pub struct LatticeBox {
    pub dim: usize,
    pub half: i32,
    pub side: usize,
}

impl LatticeBox {
    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    #[inline]
    pub fn index_of(&self, coords: &[i32]) -> Vertex {
        debug_assert_eq!(coords.len(), self.dim);
        let mut idx = 0usize;
        for ax in (0..self.dim).rev() {
            debug_assert!(coords[ax].unsigned_abs() as usize <= self.half as usize);
            idx = idx * self.side + (coords[ax] + self.half) as usize;
        }
        idx as Vertex
    }

    #[inline]
    pub fn coords_of(&self, v: Vertex, out: &mut [i32]) {
        let mut rest = v as usize;
        for c in out.iter_mut().take(self.dim) {
            *c = (rest % self.side) as i32 - self.half;
            rest /= self.side;
        }
    }

    /// L1 norm of the coordinates of v (distance to the center), without
    /// allocating.
    #[inline]
    pub fn l1_norm(&self, v: Vertex) -> u32 {
        let mut rest = v as usize;
        let mut norm = 0u32;
        for _ in 0..self.dim {
            let c = (rest % self.side) as i32 - self.half;
            rest /= self.side;
            norm += c.unsigned_abs();
        }
        norm
    }

    /// Number of absorbed (ghost) neighbor slots of v.
    #[inline]
    pub fn kappa_of(&self, v: Vertex) -> f64 {
        let mut rest = v as usize;
        let mut k = 0u32;
        for _ in 0..self.dim {
            let c = rest % self.side;
            rest /= self.side;
            if c == 0 {
                k += 1;
            }
            if c == self.side - 1 {
                k += 1;
            }
        }
        k as f64
    }
}

/// Explicit symmetric adjacency with killing, used for everything that is
/// not a plain box.
#[derive(Debug, Clone)]
pub struct CsrGraph {
    pub offsets: Vec<u32>,
    pub neighbors: Vec<Vertex>,
    pub weights: Vec<f64>,
    pub kappa: Vec<f64>,
    pub coords: Vec<i32>,
    pub coord_dim: usize,
    /// Empty means "all vertices are lattice vertices". Subdivision points
    /// are excluded from volume counts.
    pub non_lattice: Vec<bool>,
}

impl CsrGraph {
    pub fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Builds from an undirected edge list; checks symmetry-free invariants.
    pub fn from_edges(
        n: usize,
        edges: &[(Vertex, Vertex, f64)],
        kappa: Vec<f64>,
        coords: Vec<i32>,
        coord_dim: usize,
    ) -> Result<CsrGraph, GraphError> {
        for &(u, v, w) in edges {
            if u == v {
                return Err(GraphError::Invariant(format!("self-loop at {u}")));
            }
            if !(w > 0.0) {
                return Err(GraphError::Invariant(format!(
                    "edge weight must be positive, got {w} on ({u},{v})"
                )));
            }
            if u as usize >= n || v as usize >= n {
                return Err(GraphError::Invariant("edge endpoint out of range".into()));
            }
        }
        if kappa.iter().any(|&k| !(k >= 0.0)) {
            return Err(GraphError::Invariant("negative killing".into()));
        }
        Ok(Self::from_edges_unchecked(n, edges, kappa, coords, coord_dim))
    }

    /// No invariant checks; lets tests inject corrupted graphs on purpose.
    pub fn from_edges_unchecked(
        n: usize,
        edges: &[(Vertex, Vertex, f64)],
        kappa: Vec<f64>,
        coords: Vec<i32>,
        coord_dim: usize,
    ) -> CsrGraph {
        let mut degree = vec![0u32; n];
        for &(u, v, _) in edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut neighbors = vec![0 as Vertex; offsets[n] as usize];
        let mut weights = vec![0.0; offsets[n] as usize];
        let mut cursor: Vec<u32> = offsets[..n].to_vec();
        for &(u, v, w) in edges {
            neighbors[cursor[u as usize] as usize] = v;
            weights[cursor[u as usize] as usize] = w;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize] as usize] = u;
            weights[cursor[v as usize] as usize] = w;
            cursor[v as usize] += 1;
        }
        // Deterministic neighbor order within each row.
        for v in 0..n {
            let lo = offsets[v] as usize;
            let hi = offsets[v + 1] as usize;
            let mut pairs: Vec<(Vertex, f64)> = neighbors[lo..hi]
                .iter()
                .copied()
                .zip(weights[lo..hi].iter().copied())
                .collect();
            pairs.sort_by_key(|p| p.0);
            for (i, (nb, w)) in pairs.into_iter().enumerate() {
                neighbors[lo + i] = nb;
                weights[lo + i] = w;
            }
        }
        CsrGraph {
            offsets,
            neighbors,
            weights,
            kappa,
            coords,
            coord_dim,
            non_lattice: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Topology {
    Lattice(LatticeBox),
    General(Box<CsrGraph>),
}

#[derive(Debug, Clone)]
pub struct WeightedGraph {
    pub topology: Topology,
}

impl WeightedGraph {
    pub fn n_vertices(&self) -> usize {
        match &self.topology {
            Topology::Lattice(l) => l.n_vertices(),
            Topology::General(g) => g.n_vertices(),
        }
    }

    pub fn coord_dim(&self) -> usize {
        match &self.topology {
            Topology::Lattice(l) => l.dim,
            Topology::General(g) => g.coord_dim,
        }
    }

    pub fn coords_of(&self, v: Vertex, out: &mut [i32]) {
        match &self.topology {
            Topology::Lattice(l) => l.coords_of(v, out),
            Topology::General(g) => {
                let d = g.coord_dim;
                out[..d].copy_from_slice(&g.coords[v as usize * d..(v as usize + 1) * d]);
            }
        }
    }

    #[inline]
    pub fn kappa(&self, v: Vertex) -> f64 {
        match &self.topology {
            Topology::Lattice(l) => l.kappa_of(v),
            Topology::General(g) => g.kappa[v as usize],
        }
    }

    /// Sum of incident conductances.
    pub fn lambda_x(&self, v: Vertex) -> f64 {
        match &self.topology {
            Topology::Lattice(l) => (2 * l.dim) as f64 - l.kappa_of(v),
            Topology::General(g) => {
                let lo = g.offsets[v as usize] as usize;
                let hi = g.offsets[v as usize + 1] as usize;
                g.weights[lo..hi].iter().sum()
            }
        }
    }

    pub fn is_lattice_vertex(&self, v: Vertex) -> bool {
        match &self.topology {
            Topology::Lattice(_) => true,
            Topology::General(g) => g.non_lattice.is_empty() || !g.non_lattice[v as usize],
        }
    }

    pub fn for_each_neighbor<F: FnMut(Vertex, f64)>(&self, v: Vertex, mut f: F) {
        match &self.topology {
            Topology::Lattice(l) => {
                let mut rest = v as usize;
                let mut stride = 1usize;
                for _ in 0..l.dim {
                    let c = rest % l.side;
                    rest /= l.side;
                    if c > 0 {
                        f(v - stride as Vertex, 1.0);
                    }
                    if c + 1 < l.side {
                        f(v + stride as Vertex, 1.0);
                    }
                    stride *= l.side;
                }
            }
            Topology::General(g) => {
                let lo = g.offsets[v as usize] as usize;
                let hi = g.offsets[v as usize + 1] as usize;
                for i in lo..hi {
                    f(g.neighbors[i], g.weights[i]);
                }
            }
        }
    }

    /// Undirected edge count.
    pub fn n_edges(&self) -> usize {
        match &self.topology {
            Topology::Lattice(l) => l.dim * l.side.pow(l.dim as u32 - 1) * (l.side - 1),
            Topology::General(g) => g.neighbors.len() / 2,
        }
    }

    /// Graph distance (exact): L1 for full boxes, BFS otherwise.
    pub fn distance(&self, a: Vertex, b: Vertex) -> u32 {
        match &self.topology {
            Topology::Lattice(l) => {
                let mut ca = vec![0i32; l.dim];
                let mut cb = vec![0i32; l.dim];
                l.coords_of(a, &mut ca);
                l.coords_of(b, &mut cb);
                ca.iter().zip(&cb).map(|(x, y)| x.abs_diff(*y)).sum()
            }
            Topology::General(_) => {
                let mut dist = u32::MAX;
                self.bfs_until(a, |v, d| {
                    if v == b {
                        dist = d;
                        true
                    } else {
                        false
                    }
                });
                dist
            }
        }
    }

    fn bfs_until<F: FnMut(Vertex, u32) -> bool>(&self, start: Vertex, mut stop: F) {
        let n = self.n_vertices();
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[start as usize] = true;
        queue.push_back((start, 0u32));
        while let Some((v, d)) = queue.pop_front() {
            if stop(v, d) {
                return;
            }
            self.for_each_neighbor(v, |u, _| {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    queue.push_back((u, d + 1));
                }
            });
        }
    }

    /// Checks the ellipticity assumption lambda_xy / lambda_x >= c0 together
    /// with weight positivity and symmetric storage.
    pub fn check_ellipticity(&self, c0: f64) -> Result<(), GraphError> {
        match &self.topology {
            Topology::Lattice(l) => {
                let worst = 1.0 / (2 * l.dim) as f64;
                if worst < c0 {
                    return Err(GraphError::Invariant(format!(
                        "lattice ellipticity 1/{} below c0={c0}",
                        2 * l.dim
                    )));
                }
                Ok(())
            }
            Topology::General(g) => {
                for v in 0..g.n_vertices() {
                    let lo = g.offsets[v] as usize;
                    let hi = g.offsets[v + 1] as usize;
                    let lam: f64 = g.weights[lo..hi].iter().sum();
                    for i in lo..hi {
                        if !(g.weights[i] > 0.0) {
                            return Err(GraphError::Invariant(format!(
                                "non-positive weight {} on edge ({v},{})",
                                g.weights[i], g.neighbors[i]
                            )));
                        }
                        if g.weights[i] / lam < c0 {
                            return Err(GraphError::Invariant(format!(
                                "ellipticity {} below c0={c0} at vertex {v}",
                                g.weights[i] / lam
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Total killing must be positive for the window to be transient.
    pub fn total_killing(&self) -> f64 {
        (0..self.n_vertices() as Vertex).map(|v| self.kappa(v)).sum()
    }
}

/// A window is a graph plus the distinguished center and the bookkeeping
/// of how much margin separates the statistics region from absorption.
#[derive(Debug, Clone)]
pub struct Window {
    pub graph: WeightedGraph,
    pub center: Vertex,
    pub interior_radius: u32,
    pub margin_factor: u32,
    /// Deterministic description, embedded in outputs.
    pub id: String,
}

impl Window {
    /// Box window in d dimensions: interior radius r, absorption at L-inf
    /// radius m*r. No lower bound on r beyond >= 1 (build_lattice adds the
    /// published preconditions on top of this).
    pub fn lattice_box(
        dim: usize,
        r: u32,
        m: u32,
        budget: BuildBudget,
    ) -> Result<Window, GraphError> {
        if !(1..=7).contains(&dim) {
            return Err(GraphError::Precondition(format!("dimension {dim} unsupported")));
        }
        if r < 1 || m < 2 {
            return Err(GraphError::Precondition(format!(
                "need r >= 1 and margin factor m >= 2, got r={r}, m={m}"
            )));
        }
        let half = (m * r) as i32;
        let side = (2 * half + 1) as u128;
        let required = side.pow(dim as u32);
        if required > budget.max_vertices as u128 {
            return Err(GraphError::BudgetExceeded { required, budget: budget.max_vertices });
        }
        let lat = LatticeBox { dim, half, side: side as usize };
        let center = lat.index_of(&vec![0i32; dim]);
        Ok(Window {
            graph: WeightedGraph { topology: Topology::Lattice(lat) },
            center,
            interior_radius: r,
            margin_factor: m,
            id: format!("z{dim}-r{r}-m{m}"),
        })
    }

    pub fn half_width(&self) -> u32 {
        self.interior_radius * self.margin_factor
    }

    /// Graph distance from the center, allocation-free on lattice boxes.
    #[inline]
    pub fn distance_to_center(&self, v: Vertex) -> u32 {
        match &self.graph.topology {
            Topology::Lattice(l) => l.l1_norm(v),
            Topology::General(_) => self.graph.distance(self.center, v),
        }
    }

    /// True if v lies on the outermost retained layer (next to absorption).
    pub fn on_boundary_shell(&self, v: Vertex) -> bool {
        self.graph.kappa(v) > 0.0
    }
}

/// Builds the Z^d window of the published operation, with its preconditions.
pub fn build_lattice(
    dim: usize,
    r: u32,
    m: u32,
    budget: BuildBudget,
) -> Result<Window, GraphError> {
    if !(3..=7).contains(&dim) {
        return Err(GraphError::Precondition(format!(
            "build_lattice supports d in 3..=7, got {dim}"
        )));
    }
    if r < 2 {
        return Err(GraphError::Precondition(format!("interior radius must be >= 2, got {r}")));
    }
    if m < 2 {
        return Err(GraphError::Precondition(format!("margin factor must be >= 2, got {m}")));
    }
    Window::lattice_box(dim, r, m, budget)
}

/// Discrete skeleton of the Sierpinski gasket at the given level, in
/// triangular integer coordinates (a, b) (position = a*e1 + b*e2).
pub fn gasket_skeleton(level: u32) -> (Vec<(i32, i32)>, Vec<(usize, usize)>) {
    assert!(level >= 1 && level <= 12);
    // Start from the unit triangle and apply the subdivision map:
    // each triangle of scale s splits into three of scale s/2.
    use std::collections::BTreeMap;
    let scale = 1i32 << level;
    let mut verts: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let intern = |verts: &mut BTreeMap<(i32, i32), usize>, p: (i32, i32)| {
        let next = verts.len();
        *verts.entry(p).or_insert(next)
    };
    // Triangles as (corner, size); subdivide down to size 1.
    let mut stack = vec![((0i32, 0i32), scale)];
    while let Some((c, s)) = stack.pop() {
        if s == 1 {
            let p0 = intern(&mut verts, c);
            let p1 = intern(&mut verts, (c.0 + 1, c.1));
            let p2 = intern(&mut verts, (c.0, c.1 + 1));
            edges.push((p0, p1));
            edges.push((p0, p2));
            edges.push((p1, p2));
        } else {
            let h = s / 2;
            stack.push((c, h));
            stack.push(((c.0 + h, c.1), h));
            stack.push(((c.0, c.1 + h), h));
        }
    }
    edges.sort();
    edges.dedup();
    // Re-index vertices in deterministic (coordinate-sorted) order.
    let mut order: Vec<((i32, i32), usize)> = verts.iter().map(|(k, v)| (*k, *v)).collect();
    order.sort();
    let mut remap = vec![0usize; order.len()];
    for (new_id, (_, old_id)) in order.iter().enumerate() {
        remap[*old_id] = new_id;
    }
    let coords: Vec<(i32, i32)> = order.iter().map(|(c, _)| *c).collect();
    let edges: Vec<(usize, usize)> = edges
        .into_iter()
        .map(|(a, b)| {
            let (x, y) = (remap[a], remap[b]);
            (x.min(y), x.max(y))
        })
        .collect();
    (coords, edges)
}

/// Cartesian product of the gasket skeleton with a Z^2 box of half-width
/// w*m, unit weights, absorbing on the Z^2 faces.
pub fn build_gasket_product(
    level: u32,
    w: u32,
    m: u32,
    budget: BuildBudget,
) -> Result<Window, GraphError> {
    if level < 1 {
        return Err(GraphError::Precondition("gasket level must be >= 1".into()));
    }
    if w < 2 {
        return Err(GraphError::Precondition(format!("Z^2 half-width must be >= 2, got {w}")));
    }
    if m < 2 {
        return Err(GraphError::Precondition(format!("margin factor must be >= 2, got {m}")));
    }
    build_gasket_product_raw(level, w, m, budget)
}

/// Same construction without the w >= 2 precondition (for small examples).
pub fn build_gasket_product_raw(
    level: u32,
    w: u32,
    m: u32,
    budget: BuildBudget,
) -> Result<Window, GraphError> {
    let (gcoords, gedges) = gasket_skeleton(level);
    let ng = gcoords.len();
    let half = (w * m) as i32;
    let side = (2 * half + 1) as usize;
    let required = (ng as u128) * (side as u128).pow(2);
    if required > budget.max_vertices as u128 {
        return Err(GraphError::BudgetExceeded { required, budget: budget.max_vertices });
    }
    let n = ng * side * side;
    // Vertex index = g + ng*( (z1+half) + side*(z2+half) ).
    let vid = |g: usize, z1: i32, z2: i32| -> Vertex {
        (g + ng * ((z1 + half) as usize + side * (z2 + half) as usize)) as Vertex
    };
    let mut edges: Vec<(Vertex, Vertex, f64)> = Vec::new();
    let mut kappa = vec![0.0f64; n];
    let mut coords = vec![0i32; n * 4];
    for z2 in -half..=half {
        for z1 in -half..=half {
            for g in 0..ng {
                let v = vid(g, z1, z2) as usize;
                coords[v * 4] = gcoords[g].0;
                coords[v * 4 + 1] = gcoords[g].1;
                coords[v * 4 + 2] = z1;
                coords[v * 4 + 3] = z2;
                for &(a, b) in &gedges {
                    if a == g {
                        edges.push((vid(a, z1, z2), vid(b, z1, z2), 1.0));
                    }
                }
                if z1 < half {
                    edges.push((vid(g, z1, z2), vid(g, z1 + 1, z2), 1.0));
                } else {
                    kappa[v] += 1.0;
                }
                if z1 == -half {
                    kappa[v] += 1.0;
                }
                if z2 < half {
                    edges.push((vid(g, z1, z2), vid(g, z1, z2 + 1), 1.0));
                } else {
                    kappa[v] += 1.0;
                }
                if z2 == -half {
                    kappa[v] += 1.0;
                }
            }
        }
    }
    let csr = CsrGraph::from_edges(n, &edges, kappa, coords, 4)?;
    // Center: gasket vertex at (0,0), z = (0,0).
    let g0 = gcoords.iter().position(|&c| c == (0, 0)).expect("gasket corner");
    let center = vid(g0, 0, 0);
    Ok(Window {
        graph: WeightedGraph { topology: Topology::General(Box::new(csr)) },
        center,
        interior_radius: w,
        margin_factor: m,
        id: format!("gasket{level}-w{w}-m{m}"),
    })
}

/// Exact metric ball, deterministically ordered by vertex index.
pub fn ball(window: &Window, x: Vertex, r: u32) -> Vec<Vertex> {
    match &window.graph.topology {
        Topology::Lattice(l) => {
            let mut cx = vec![0i32; l.dim];
            l.coords_of(x, &mut cx);
            let mut out = Vec::new();
            // Enumerate the L1 ball by coordinate offsets.
            let mut offs = vec![0i32; l.dim];
            enumerate_l1(&mut offs, 0, r as i32, &mut |off| {
                let mut ok = true;
                let mut c = vec![0i32; l.dim];
                for i in 0..l.dim {
                    c[i] = cx[i] + off[i];
                    if c[i].abs() > l.half {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    out.push(l.index_of(&c));
                }
            });
            out.sort_unstable();
            out
        }
        Topology::General(_) => {
            let mut out = Vec::new();
            let n = window.graph.n_vertices();
            let mut seen = vec![false; n];
            let mut queue = std::collections::VecDeque::new();
            seen[x as usize] = true;
            queue.push_back((x, 0u32));
            while let Some((v, d)) = queue.pop_front() {
                out.push(v);
                if d == r {
                    continue;
                }
                window.graph.for_each_neighbor(v, |u, _| {
                    if !seen[u as usize] {
                        seen[u as usize] = true;
                        queue.push_back((u, d + 1));
                    }
                });
            }
            out.sort_unstable();
            out
        }
    }
}

fn enumerate_l1(offs: &mut [i32], axis: usize, budget: i32, f: &mut impl FnMut(&[i32])) {
    if axis == offs.len() {
        f(offs);
        return;
    }
    for v in -budget..=budget {
        offs[axis] = v;
        enumerate_l1(offs, axis + 1, budget - v.abs(), f);
    }
}

/// Result of killing a vertex set: the surviving graph (center's component),
/// the vertex mapping, and the disconnection diagnostics.
pub struct KilledGraph {
    pub graph: WeightedGraph,
    /// old vertex id -> new id (None if removed / in another component).
    pub vertex_map: Vec<Option<Vertex>>,
    /// The window's center itself was part of the killed set.
    pub center_killed: bool,
    /// Surviving vertices outside the kept component were dropped.
    pub disconnected: bool,
}

/// Removes K and converts edges into K into killing mass on the survivors,
/// keeping the connected component of the window's center (or of the
/// lowest-index survivor if the center itself is killed, with a flag).
pub fn kill_set(window: &Window, kill: &[Vertex]) -> KilledGraph {
    let n = window.graph.n_vertices();
    let mut killed = vec![false; n];
    for &v in kill {
        killed[v as usize] = true;
    }
    let center_killed = killed[window.center as usize];
    // Component of the center (or of the lowest survivor if center killed).
    let mut comp = vec![false; n];
    let start = if center_killed {
        (0..n as Vertex).find(|&v| !killed[v as usize])
    } else {
        Some(window.center)
    };
    if let Some(s) = start {
        let mut queue = std::collections::VecDeque::new();
        comp[s as usize] = true;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            window.graph.for_each_neighbor(v, |u, _| {
                if !killed[u as usize] && !comp[u as usize] {
                    comp[u as usize] = true;
                    queue.push_back(u);
                }
            });
        }
    }
    // Any surviving vertex outside the component means disconnection.
    let disconnected = (0..n).any(|v| !killed[v] && !comp[v]);
    let mut vertex_map: Vec<Option<Vertex>> = vec![None; n];
    let mut new_id = 0 as Vertex;
    for v in 0..n {
        if comp[v] {
            vertex_map[v] = Some(new_id);
            new_id += 1;
        }
    }
    let nn = new_id as usize;
    let d = window.graph.coord_dim();
    let mut coords = vec![0i32; nn * d];
    let mut kappa = vec![0.0f64; nn];
    let mut edges: Vec<(Vertex, Vertex, f64)> = Vec::new();
    let mut cbuf = vec![0i32; d];
    for v in 0..n {
        let Some(nv) = vertex_map[v] else { continue };
        window.graph.coords_of(v as Vertex, &mut cbuf);
        coords[nv as usize * d..(nv as usize + 1) * d].copy_from_slice(&cbuf);
        kappa[nv as usize] = window.graph.kappa(v as Vertex);
        window.graph.for_each_neighbor(v as Vertex, |u, w| {
            match vertex_map[u as usize] {
                Some(nu) => {
                    if nv < nu {
                        edges.push((nv, nu, w));
                    }
                }
                None => {
                    // Edge into the killed set (or a stranded component):
                    // absorbed mass.
                    kappa[nv as usize] += w;
                }
            }
        });
    }
    let csr = CsrGraph::from_edges(nn, &edges, kappa, coords, d).expect("killed graph invariants");
    KilledGraph {
        graph: WeightedGraph { topology: Topology::General(Box::new(csr)) },
        vertex_map,
        center_killed,
        disconnected,
    }
}

/// Splits one edge into k parts; the k-1 new vertices carry weight k*lambda
/// on each sub-edge (cable length is preserved) and are excluded from
/// volume counts.
pub fn subdivide_edge(window: &Window, edge: (Vertex, Vertex), k: u32) -> WeightedGraph {
    assert!(k >= 2, "subdivision needs k >= 2");
    let n = window.graph.n_vertices();
    let d = window.graph.coord_dim();
    let mut edges: Vec<(Vertex, Vertex, f64)> = Vec::new();
    let mut lambda_edge = None;
    let (a, b) = (edge.0.min(edge.1), edge.0.max(edge.1));
    for v in 0..n as Vertex {
        window.graph.for_each_neighbor(v, |u, w| {
            if v < u {
                if (v, u) == (a, b) {
                    lambda_edge = Some(w);
                } else {
                    edges.push((v, u, w));
                }
            }
        });
    }
    let lambda = lambda_edge.expect("edge to subdivide must exist");
    let mut coords = vec![0i32; (n + k as usize - 1) * d];
    let mut cbuf = vec![0i32; d];
    for v in 0..n {
        window.graph.coords_of(v as Vertex, &mut cbuf);
        coords[v * d..(v + 1) * d].copy_from_slice(&cbuf);
    }
    let mut kappa = vec![0.0f64; n + k as usize - 1];
    for v in 0..n {
        kappa[v] = window.graph.kappa(v as Vertex);
    }
    let mut non_lattice = vec![false; n + k as usize - 1];
    // Chain a - m1 - m2 - ... - m_{k-1} - b with weight k*lambda each.
    window.graph.coords_of(a, &mut cbuf);
    let mut prev = a;
    for j in 0..k - 1 {
        let mid = (n + j as usize) as Vertex;
        non_lattice[mid as usize] = true;
        coords[mid as usize * d..(mid as usize + 1) * d].copy_from_slice(&cbuf);
        edges.push((prev, mid, k as f64 * lambda));
        prev = mid;
    }
    edges.push((prev, b, k as f64 * lambda));
    let mut csr = CsrGraph::from_edges(n + k as usize - 1, &edges, kappa, coords, d)
        .expect("subdivided graph invariants");
    csr.non_lattice = non_lattice;
    WeightedGraph { topology: Topology::General(Box::new(csr)) }
}

/// Debug-oriented JSON description; not a performance path.
#[derive(Serialize)]
pub struct GraphDump {
    pub n_vertices: usize,
    pub coord_dim: usize,
    pub vertices: Vec<VertexDump>,
    pub edges: Vec<EdgeDump>,
}

#[derive(Serialize)]
pub struct VertexDump {
    pub id: Vertex,
    pub coords: Vec<i32>,
    pub kappa: f64,
    pub lattice: bool,
}

#[derive(Serialize)]
pub struct EdgeDump {
    pub u: Vertex,
    pub v: Vertex,
    pub weight: f64,
}

pub fn dump_graph(graph: &WeightedGraph) -> GraphDump {
    let n = graph.n_vertices();
    let d = graph.coord_dim();
    let mut cbuf = vec![0i32; d];
    let mut vertices = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for v in 0..n as Vertex {
        graph.coords_of(v, &mut cbuf);
        vertices.push(VertexDump {
            id: v,
            coords: cbuf.clone(),
            kappa: graph.kappa(v),
            lattice: graph.is_lattice_vertex(v),
        });
        graph.for_each_neighbor(v, |u, w| {
            if v < u {
                edges.push(EdgeDump { u: v, v: u, weight: w });
            }
        });
    }
    GraphDump { n_vertices: n, coord_dim: d, vertices, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_counts_and_weights() {
        // (d=3, r=4, m=2) -> 17^3 vertices, lambda_x = 6 at interior vertices.
        let w = build_lattice(3, 4, 2, BuildBudget::default()).unwrap();
        assert_eq!(w.graph.n_vertices(), 17 * 17 * 17);
        assert_eq!(w.graph.lambda_x(w.center), 6.0);
        assert_eq!(w.graph.kappa(w.center), 0.0);
        // Corner vertex: 3 in-box neighbors, kappa 3.
        let corner = 0 as Vertex;
        assert_eq!(w.graph.lambda_x(corner), 3.0);
        assert_eq!(w.graph.kappa(corner), 3.0);
        // lambda_x + kappa = 2d everywhere.
        for v in (0..w.graph.n_vertices() as Vertex).step_by(97) {
            assert_eq!(w.graph.lambda_x(v) + w.graph.kappa(v), 6.0);
        }
    }

    #[test]
    fn lattice_center_neighbors() {
        // (d=3, r=1, m=2): center has 6 neighbors, all weights 1.
        let w = Window::lattice_box(3, 1, 2, BuildBudget::default()).unwrap();
        let mut count = 0;
        w.graph.for_each_neighbor(w.center, |_, wt| {
            assert_eq!(wt, 1.0);
            count += 1;
        });
        assert_eq!(count, 6);
    }

    #[test]
    fn margin_precondition() {
        assert!(matches!(
            build_lattice(3, 4, 1, BuildBudget::default()),
            Err(GraphError::Precondition(_))
        ));
        assert!(matches!(
            build_lattice(3, 1, 2, BuildBudget::default()),
            Err(GraphError::Precondition(_))
        ));
    }

    #[test]
    fn budget_refusal_reports_requirement() {
        let err = build_lattice(5, 16, 4, BuildBudget { max_vertices: 1000 }).unwrap_err();
        match err {
            GraphError::BudgetExceeded { required, budget } => {
                assert_eq!(required, 129u128.pow(5));
                assert_eq!(budget, 1000);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ball_examples() {
        let w = build_lattice(3, 4, 2, BuildBudget::default()).unwrap();
        assert_eq!(ball(&w, w.center, 0), vec![w.center]);
        assert_eq!(ball(&w, w.center, 1).len(), 7);
        // |B(r)| = (4r^3 + 6r^2 + 8r + 3)/3 for the L1 ball in Z^3.
        let b3 = ball(&w, w.center, 3);
        assert_eq!(b3.len(), (4 * 27 + 6 * 9 + 8 * 3 + 3) / 3);
        // Monotone in r.
        let b2 = ball(&w, w.center, 2);
        assert!(b2.iter().all(|v| b3.binary_search(v).is_ok()));
    }

    #[test]
    fn ball_volume_growth_exponent() {
        // Ahlfors regularity on a Z^3 window: |B(r)|/r^3 stays within a
        // narrow constant band and the fitted exponent approaches 3.
        let w = build_lattice(3, 16, 4, BuildBudget::default()).unwrap();
        let rs = [8u32, 12, 16, 24, 32];
        let vols: Vec<f64> = rs.iter().map(|&r| ball(&w, w.center, r).len() as f64).collect();
        let ratios: Vec<f64> = rs.iter().zip(&vols).map(|(&r, &v)| v / (r as f64).powi(3)).collect();
        let rmax = ratios.iter().fold(0.0f64, |a, &b| a.max(b));
        let rmin = ratios.iter().fold(f64::MAX, |a, &b| a.min(b));
        assert!(rmax / rmin < 1.5, "Ahlfors band ratio {}", rmax / rmin);
        let pts: Vec<(f64, f64)> = rs
            .iter()
            .zip(&vols)
            .map(|(&r, &v)| ((r as f64).ln(), v.ln()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 3.0).abs() < 0.15, "alpha-hat {slope}");
    }

    #[test]
    fn gasket_counts() {
        let (v1, e1) = gasket_skeleton(1);
        assert_eq!(v1.len(), 6);
        assert_eq!(e1.len(), 9);
        // Level-2 skeleton has 15 vertices (hand enumeration).
        let (v2, e2) = gasket_skeleton(2);
        assert_eq!(v2.len(), 15);
        assert_eq!(e2.len(), 27);
        // Degrees: corners 2, interior 4.
        let mut deg = vec![0; v2.len()];
        for &(a, b) in &e2 {
            deg[a] += 1;
            deg[b] += 1;
        }
        assert_eq!(*deg.iter().max().unwrap(), 4);
        assert_eq!(deg.iter().filter(|&&d| d == 2).count(), 3);
    }

    #[test]
    fn gasket_product_structure() {
        let w = build_gasket_product_raw(1, 1, 2, BuildBudget::default()).unwrap();
        // vertex count = 6 * (2*1*2+1)^2
        assert_eq!(w.graph.n_vertices(), 6 * 5 * 5);
        // degree of an interior product vertex = gasket degree + 4
        let mut seen_deg = std::collections::BTreeSet::new();
        for v in 0..w.graph.n_vertices() as Vertex {
            if w.graph.kappa(v) == 0.0 {
                let mut deg = 0;
                w.graph.for_each_neighbor(v, |_, _| deg += 1);
                seen_deg.insert(deg);
            }
        }
        assert_eq!(seen_deg, [2 + 4, 4 + 4].into_iter().collect());
    }

    #[test]
    fn kill_set_examples() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        // K = empty set: unchanged graph.
        let kg = kill_set(&w, &[]);
        assert_eq!(kg.graph.n_vertices(), w.graph.n_vertices());
        assert!(!kg.center_killed && !kg.disconnected);
        for v in 0..w.graph.n_vertices() as Vertex {
            assert_eq!(kg.graph.kappa(v), w.graph.kappa(v));
            assert_eq!(kg.graph.lambda_x(v), w.graph.lambda_x(v));
        }
        // K = single neighbor of the center: kappa of center increases by 1.
        let mut nb = None;
        w.graph.for_each_neighbor(w.center, |u, _| {
            if nb.is_none() {
                nb = Some(u);
            }
        });
        let kg = kill_set(&w, &[nb.unwrap()]);
        let new_center = kg.vertex_map[w.center as usize].unwrap();
        assert_eq!(kg.graph.kappa(new_center), 1.0);
        assert_eq!(kg.graph.lambda_x(new_center), 5.0);
    }

    #[test]
    fn kill_set_idempotent_on_union() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let k1: Vec<Vertex> = ball(&w, w.center, 1);
        let mut k2 = vec![w.graph.n_vertices() as Vertex - 1];
        k2.extend_from_slice(&k1[..2]);
        // Killing K1 then K2 equals killing K1 u K2.
        let once = {
            let mut all = k1.clone();
            all.extend_from_slice(&k2);
            all.sort_unstable();
            all.dedup();
            kill_set(&w, &all)
        };
        let first = kill_set(&w, &k1);
        let k2_mapped: Vec<Vertex> =
            k2.iter().filter_map(|&v| first.vertex_map[v as usize]).collect();
        let inner_window = Window {
            graph: first.graph,
            center: first.vertex_map[w.center as usize].unwrap_or(0),
            interior_radius: w.interior_radius,
            margin_factor: w.margin_factor,
            id: "killed".into(),
        };
        let twice = kill_set(&inner_window, &k2_mapped);
        assert_eq!(once.graph.n_vertices(), twice.graph.n_vertices());
        // Same kappa profile on matching coordinates.
        let d = w.graph.coord_dim();
        let key = |g: &WeightedGraph, v: Vertex| {
            let mut c = vec![0i32; d];
            g.coords_of(v, &mut c);
            c
        };
        let mut a: Vec<(Vec<i32>, f64, f64)> = (0..once.graph.n_vertices() as Vertex)
            .map(|v| (key(&once.graph, v), once.graph.kappa(v), once.graph.lambda_x(v)))
            .collect();
        let mut b: Vec<(Vec<i32>, f64, f64)> = (0..twice.graph.n_vertices() as Vertex)
            .map(|v| (key(&twice.graph, v), twice.graph.kappa(v), twice.graph.lambda_x(v)))
            .collect();
        a.sort_by(|x, y| x.0.cmp(&y.0));
        b.sort_by(|x, y| x.0.cmp(&y.0));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - y.1).abs() < 1e-12);
            assert!((x.2 - y.2).abs() < 1e-12);
        }
    }

    #[test]
    fn kill_disconnection_flagged() {
        let w = Window::lattice_box(1, 2, 2, BuildBudget::default()).unwrap();
        // 1d segment of 5 vertices; killing the middle disconnects.
        let kg = kill_set(&w, &[2]);
        assert!(kg.disconnected);
    }

    #[test]
    fn subdivision_weights() {
        let w = Window::lattice_box(3, 1, 2, BuildBudget::default()).unwrap();
        let mut nb = None;
        w.graph.for_each_neighbor(w.center, |u, _| {
            if nb.is_none() {
                nb = Some(u);
            }
        });
        let e = (w.center, nb.unwrap());
        for k in [2u32, 4] {
            let g = subdivide_edge(&w, e, k);
            assert_eq!(g.n_vertices(), w.graph.n_vertices() + k as usize - 1);
            // New vertices carry two incident sub-edges of weight k.
            let first_new = w.graph.n_vertices() as Vertex;
            let mut wts = Vec::new();
            g.for_each_neighbor(first_new, |_, wt| wts.push(wt));
            assert_eq!(wts, vec![k as f64; 2]);
            assert!(!g.is_lattice_vertex(first_new));
            assert!(g.is_lattice_vertex(w.center));
        }
    }

    #[test]
    fn ellipticity_detects_corruption() {
        let edges = vec![(0, 1, 1.0), (1, 2, -0.5)];
        let g = CsrGraph::from_edges_unchecked(3, &edges, vec![1.0, 0.0, 1.0], vec![0; 3], 1);
        let wg = WeightedGraph { topology: Topology::General(Box::new(g)) };
        assert!(wg.check_ellipticity(0.05).is_err());
        assert!(CsrGraph::from_edges(3, &edges, vec![1.0, 0.0, 1.0], vec![0; 3], 1).is_err());
    }
}
