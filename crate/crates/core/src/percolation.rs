//! Level-set percolation of a field sample on the metric graph, realized
//! through independent edge openings: an edge {x,y} with conductance
//! lambda is open at level a with probability
//! 1 - exp(-2 lambda (phi_x - a)_+ (phi_y - a)_+).
//!
//! Per-edge uniforms are a pure function of (seed, replica, edge id), so
//! one replica's openings can be re-evaluated at any level against the
//! same uniforms: levels are coupled monotonically by construction.

use std::collections::VecDeque;

use crate::graph::{Topology, Vertex, Window};
use crate::potential::RegionTable;
use crate::rng::{Purpose, StreamId};

/// Opening probability of one edge. Zero when either endpoint is below
/// the level; always < 1.
#[inline]
pub fn edge_open_probability(phi_x: f64, phi_y: f64, level: f64, lambda: f64) -> f64 {
    let u = phi_x - level;
    let v = phi_y - level;
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    -(-2.0 * lambda * u * v).exp_m1()
}

/// Lazy edge-opening state of one replica. The cached uniform of edge e
/// is indexed_unit_f64(e); recomputing at another level reuses it.
#[derive(Debug, Clone, Copy)]
pub struct EdgeOpening {
    edges: StreamId,
    pub level: f64,
}

impl EdgeOpening {
    pub fn new(seed: u64, replica: u64, level: f64) -> EdgeOpening {
        EdgeOpening { edges: StreamId::new(seed, replica, Purpose::Edges), level }
    }

    /// Same replica uniforms, evaluated at another level.
    pub fn at_level(&self, level: f64) -> EdgeOpening {
        EdgeOpening { edges: self.edges, level }
    }

    #[inline]
    pub fn uniform(&self, edge_id: u64) -> f64 {
        self.edges.indexed_unit_f64(edge_id)
    }

    #[inline]
    pub fn is_open(&self, edge_id: u64, phi_x: f64, phi_y: f64, lambda: f64) -> bool {
        let u = phi_x - self.level;
        let v = phi_y - self.level;
        if u <= 0.0 || v <= 0.0 {
            return false;
        }
        self.uniform(edge_id) < -(-2.0 * lambda * u * v).exp_m1()
    }

    /// Opening for the sign-cluster percolation of {|phi| > 0}: endpoints
    /// must share a sign and the level-0 opening applies to |phi|.
    #[inline]
    pub fn is_open_signed(&self, edge_id: u64, phi_x: f64, phi_y: f64, lambda: f64) -> bool {
        if phi_x * phi_y <= 0.0 {
            return false;
        }
        self.uniform(edge_id) < -(-2.0 * lambda * phi_x.abs() * phi_y.abs()).exp_m1()
    }
}

/// Canonical edge id of a lattice box edge (v, v + stride(axis)).
#[inline]
pub fn lattice_edge_id(dim: usize, v: Vertex, axis: usize) -> u64 {
    v as u64 * dim as u64 + axis as u64
}

/// Canonical edge id on a general graph: the CSR position of the (u -> v)
/// half-edge with u < v.
pub fn csr_edge_id(g: &crate::graph::CsrGraph, u: Vertex, v: Vertex) -> u64 {
    let (a, b) = (u.min(v), u.max(v));
    let lo = g.offsets[a as usize] as usize;
    let hi = g.offsets[a as usize + 1] as usize;
    for j in lo..hi {
        if g.neighbors[j] == b {
            return j as u64;
        }
    }
    unreachable!("edge ({a},{b}) not present");
}

/// Reusable whole-window BFS state.
pub struct PercScratch {
    visited: Vec<bool>,
    queue: VecDeque<Vertex>,
}

impl PercScratch {
    pub fn new(n: usize) -> PercScratch {
        PercScratch { visited: vec![false; n], queue: VecDeque::new() }
    }
}

#[derive(Debug, Clone)]
pub struct OriginCluster {
    /// Lattice vertices only (subdivision points are excluded).
    pub volume: u64,
    /// The cluster touches the absorbing shell: finite-volume surrogate
    /// for "the cluster may be infinite".
    pub censored: bool,
    pub members: Vec<Vertex>,
}

/// BFS cluster of the window center in {phi >= level} under the replica's
/// openings, on the full window.
pub fn cluster_of_origin(
    window: &Window,
    phi: &[f64],
    opening: &EdgeOpening,
    scratch: &mut PercScratch,
) -> OriginCluster {
    cluster_of_vertex(window, phi, opening, scratch, window.center)
}

/// Same, seeded at an arbitrary vertex.
pub fn cluster_of_vertex(
    window: &Window,
    phi: &[f64],
    opening: &EdgeOpening,
    scratch: &mut PercScratch,
    start: Vertex,
) -> OriginCluster {
    let a = opening.level;
    let mut members = Vec::new();
    if phi[start as usize] < a {
        return OriginCluster { volume: 0, censored: false, members };
    }
    let mut censored = false;
    let mut volume = 0u64;
    scratch.queue.clear();
    scratch.visited[start as usize] = true;
    scratch.queue.push_back(start);
    members.push(start);
    match &window.graph.topology {
        Topology::Lattice(l) => {
            let side = l.side;
            let dim = l.dim;
            while let Some(v) = scratch.queue.pop_front() {
                volume += 1;
                let pv = phi[v as usize];
                let mut rest = v as usize;
                let mut stride = 1usize;
                for axis in 0..dim {
                    let c = rest % side;
                    rest /= side;
                    if c == 0 || c == side - 1 {
                        censored = true;
                    }
                    // The edge to the lower neighbor is owned by that
                    // neighbor in the canonical id scheme.
                    if c > 0 {
                        let u = v - stride as Vertex;
                        if !scratch.visited[u as usize]
                            && opening.is_open(
                                lattice_edge_id(dim, u, axis),
                                pv,
                                phi[u as usize],
                                1.0,
                            )
                        {
                            scratch.visited[u as usize] = true;
                            scratch.queue.push_back(u);
                            members.push(u);
                        }
                    }
                    if c + 1 < side {
                        let u = v + stride as Vertex;
                        if !scratch.visited[u as usize]
                            && opening.is_open(
                                lattice_edge_id(dim, v, axis),
                                pv,
                                phi[u as usize],
                                1.0,
                            )
                        {
                            scratch.visited[u as usize] = true;
                            scratch.queue.push_back(u);
                            members.push(u);
                        }
                    }
                    stride *= side;
                }
            }
        }
        Topology::General(g) => {
            while let Some(v) = scratch.queue.pop_front() {
                if window.graph.is_lattice_vertex(v) {
                    volume += 1;
                }
                if window.graph.kappa(v) > 0.0 {
                    censored = true;
                }
                let pv = phi[v as usize];
                let lo = g.offsets[v as usize] as usize;
                let hi = g.offsets[v as usize + 1] as usize;
                for j in lo..hi {
                    let u = g.neighbors[j];
                    if scratch.visited[u as usize] {
                        continue;
                    }
                    let id = if v < u { j as u64 } else { csr_edge_id(g, u, v) };
                    if opening.is_open(id, pv, phi[u as usize], g.weights[j]) {
                        scratch.visited[u as usize] = true;
                        scratch.queue.push_back(u);
                        members.push(u);
                    }
                }
            }
        }
    }
    for &m in &members {
        scratch.visited[m as usize] = false;
    }
    OriginCluster { volume, censored, members }
}

/// Precomputed restriction to a metric ball: vertices, interior edges with
/// canonical ids, distances to the cut center. Built once per window
/// configuration, reused by every replica.
pub struct RegionCut {
    pub center: Vertex,
    pub radius: u32,
    /// Sorted ball vertices.
    pub vertices: Vec<Vertex>,
    /// Window-sized map vertex -> slot (u32::MAX outside).
    pub slot_of: Vec<u32>,
    /// Edges with both endpoints inside, slot-indexed.
    pub edges: Vec<CutEdge>,
    /// Graph distance to the cut center per slot.
    pub dist: Vec<u32>,
    /// Coordinates per slot (coord_dim-flattened), for diameters.
    pub coords: Vec<i32>,
    pub coord_dim: usize,
    /// Slot counts toward cluster volume (lattice vertex).
    pub lattice_slot: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct CutEdge {
    pub a: u32,
    pub b: u32,
    pub id: u64,
    pub lambda: f64,
}

pub fn region_cut(window: &Window, center: Vertex, radius: u32) -> RegionCut {
    let verts = crate::graph::ball(window, center, radius);
    let n = window.graph.n_vertices();
    let mut slot_of = vec![u32::MAX; n];
    for (i, &v) in verts.iter().enumerate() {
        slot_of[v as usize] = i as u32;
    }
    let d = window.graph.coord_dim();
    let mut coords = vec![0i32; verts.len() * d];
    let mut cbuf = vec![0i32; d];
    let mut lattice_slot = vec![false; verts.len()];
    for (i, &v) in verts.iter().enumerate() {
        window.graph.coords_of(v, &mut cbuf);
        coords[i * d..(i + 1) * d].copy_from_slice(&cbuf);
        lattice_slot[i] = window.graph.is_lattice_vertex(v);
    }
    let mut edges = Vec::new();
    for (i, &v) in verts.iter().enumerate() {
        match &window.graph.topology {
            Topology::Lattice(l) => {
                let mut rest = v as usize;
                let mut stride = 1usize;
                for axis in 0..l.dim {
                    let c = rest % l.side;
                    rest /= l.side;
                    if c + 1 < l.side {
                        let u = v + stride as Vertex;
                        let j = slot_of[u as usize];
                        if j != u32::MAX {
                            edges.push(CutEdge {
                                a: i as u32,
                                b: j,
                                id: lattice_edge_id(l.dim, v, axis),
                                lambda: 1.0,
                            });
                        }
                    }
                    stride *= l.side;
                }
            }
            Topology::General(g) => {
                let lo = g.offsets[v as usize] as usize;
                let hi = g.offsets[v as usize + 1] as usize;
                for jj in lo..hi {
                    let u = g.neighbors[jj];
                    if u > v {
                        let j = slot_of[u as usize];
                        if j != u32::MAX {
                            edges.push(CutEdge {
                                a: i as u32,
                                b: j,
                                id: jj as u64,
                                lambda: g.weights[jj],
                            });
                        }
                    }
                }
            }
        }
    }
    let dist: Vec<u32> = verts.iter().map(|&v| window.graph.distance(center, v)).collect();
    RegionCut {
        center,
        radius,
        vertices: verts,
        slot_of,
        edges,
        dist,
        coords,
        coord_dim: d,
        lattice_slot,
    }
}

/// Union-find state reused across replicas.
pub struct LabelScratch {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl LabelScratch {
    pub fn new(slots: usize) -> LabelScratch {
        LabelScratch { parent: vec![0; slots], size: vec![0; slots] }
    }

    #[inline]
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    #[inline]
    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            self.parent[ra as usize] = rb;
            self.size[rb as usize] += self.size[ra as usize];
        } else {
            self.parent[rb as usize] = ra;
            self.size[ra as usize] += self.size[rb as usize];
        }
    }
}

pub const NO_COMPONENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct CompStats {
    /// Lattice-vertex count (the volume functional).
    pub volume: u64,
    /// Smallest member vertex id: the deterministic component identity.
    pub min_vertex: Vertex,
    /// Touches the cut's outer layer (distance = radius).
    pub censored: bool,
    /// Exact L1 diameter of the member coordinates.
    pub l1_diameter: u32,
    pub slots: u32,
}

#[derive(Debug, Clone)]
pub struct ClusterLabeling {
    /// Per-slot component index into `components` (NO_COMPONENT below level).
    pub comp_of: Vec<u32>,
    /// Components ordered by their smallest member vertex.
    pub components: Vec<CompStats>,
}

/// Labels the clusters of {phi >= level} inside the cut, using only edges
/// with both endpoints inside.
pub fn label_clusters(
    cut: &RegionCut,
    phi_slots: &[f64],
    opening: &EdgeOpening,
    scratch: &mut LabelScratch,
) -> ClusterLabeling {
    label_with(
        cut,
        scratch,
        |slot| phi_slots[slot] >= opening.level,
        |e| opening.is_open(e.id, phi_slots[e.a as usize], phi_slots[e.b as usize], e.lambda),
    )
}

/// Labels the sign clusters of {|phi| > 0}: both endpoints share a sign
/// and the level-0 opening of |phi| holds.
pub fn label_sign_clusters(
    cut: &RegionCut,
    phi_slots: &[f64],
    opening: &EdgeOpening,
    scratch: &mut LabelScratch,
) -> ClusterLabeling {
    label_with(
        cut,
        scratch,
        |slot| phi_slots[slot] != 0.0,
        |e| {
            opening.is_open_signed(
                e.id,
                phi_slots[e.a as usize],
                phi_slots[e.b as usize],
                e.lambda,
            )
        },
    )
}

fn label_with<FV, FE>(
    cut: &RegionCut,
    scratch: &mut LabelScratch,
    vertex_in: FV,
    edge_open: FE,
) -> ClusterLabeling
where
    FV: Fn(usize) -> bool,
    FE: Fn(&CutEdge) -> bool,
{
    let m = cut.vertices.len();
    for i in 0..m as u32 {
        scratch.parent[i as usize] = i;
        scratch.size[i as usize] = 1;
    }
    for e in &cut.edges {
        if vertex_in(e.a as usize) && vertex_in(e.b as usize) && edge_open(e) {
            scratch.union(e.a, e.b);
        }
    }
    // Compact component ids in order of smallest member vertex (slots are
    // sorted by vertex, so first-seen roots give that order).
    let mut comp_of = vec![NO_COMPONENT; m];
    let mut components: Vec<CompStats> = Vec::new();
    let mut comp_at_root = vec![NO_COMPONENT; m];
    let d = cut.coord_dim;
    let n_funcs = 1usize << (d.saturating_sub(1));
    // Per-component extremes of the sign-pattern projections, giving the
    // exact L1 diameter max_{x,y} sum |x_i - y_i|.
    let mut mins: Vec<i64> = Vec::new();
    let mut maxs: Vec<i64> = Vec::new();
    for i in 0..m {
        if !vertex_in(i) {
            continue;
        }
        let root = scratch.find(i as u32);
        let cid = if comp_at_root[root as usize] == NO_COMPONENT {
            let cid = components.len() as u32;
            comp_at_root[root as usize] = cid;
            components.push(CompStats {
                volume: 0,
                min_vertex: cut.vertices[i],
                censored: false,
                l1_diameter: 0,
                slots: 0,
            });
            mins.extend(std::iter::repeat(i64::MAX).take(n_funcs));
            maxs.extend(std::iter::repeat(i64::MIN).take(n_funcs));
            cid
        } else {
            comp_at_root[root as usize]
        };
        comp_of[i] = cid;
        let stats = &mut components[cid as usize];
        stats.slots += 1;
        if cut.lattice_slot[i] {
            stats.volume += 1;
        }
        if cut.dist[i] >= cut.radius {
            stats.censored = true;
        }
        let base = cid as usize * n_funcs;
        let coords = &cut.coords[i * d..(i + 1) * d];
        for f in 0..n_funcs {
            let mut val = coords[0] as i64;
            for ax in 1..d {
                let sign = if (f >> (ax - 1)) & 1 == 1 { -1i64 } else { 1 };
                val += sign * coords[ax] as i64;
            }
            mins[base + f] = mins[base + f].min(val);
            maxs[base + f] = maxs[base + f].max(val);
        }
    }
    for (cid, stats) in components.iter_mut().enumerate() {
        let base = cid * n_funcs;
        let mut diam = 0i64;
        for f in 0..n_funcs {
            if maxs[base + f] > mins[base + f] {
                diam = diam.max(maxs[base + f] - mins[base + f]);
            }
        }
        stats.l1_diameter = diam as u32;
    }
    ClusterLabeling { comp_of, components }
}

/// Largest cluster volume in the cut: the M_r^a observable.
pub fn largest_in_ball(labeling: &ClusterLabeling) -> u64 {
    labeling.components.iter().map(|c| c.volume).max().unwrap_or(0)
}

/// The component of `x` reaches graph distance >= r from the cut center
/// (the one-arm event; with r = 0 it degenerates to phi_x >= level).
pub fn one_arm_indicator(cut: &RegionCut, labeling: &ClusterLabeling, x: Vertex) -> bool {
    let slot = cut.slot_of[x as usize];
    if slot == u32::MAX {
        return false;
    }
    let cid = labeling.comp_of[slot as usize];
    cid != NO_COMPONENT && labeling.components[cid as usize].censored
}

#[derive(Debug, Clone)]
pub struct RichSet {
    /// Vertices of B(x,r) whose restricted cluster has capacity >= s.
    pub vertices: Vec<Vertex>,
    /// Capacity per component, aligned with labeling.components.
    pub component_capacity: Vec<f64>,
}

/// The capacity-rich vertex set: per-component capacities are computed
/// once (region Green table) and attributed to every member.
pub fn capacity_rich_set(
    cut: &RegionCut,
    labeling: &ClusterLabeling,
    table: &RegionTable,
    threshold: f64,
) -> Result<RichSet, crate::potential::PotentialError> {
    let mut slots_by_comp: Vec<Vec<u32>> = vec![Vec::new(); labeling.components.len()];
    for (slot, &cid) in labeling.comp_of.iter().enumerate() {
        if cid != NO_COMPONENT {
            let v = cut.vertices[slot];
            let ts = table.slot_of[v as usize];
            assert!(ts != u32::MAX, "cut vertex outside the region table");
            slots_by_comp[cid as usize].push(ts);
        }
    }
    let mut component_capacity = vec![0.0; labeling.components.len()];
    for (cid, slots) in slots_by_comp.iter().enumerate() {
        if slots.is_empty() {
            continue;
        }
        let (_, cap, _) = table.equilibrium_of_slots(slots)?;
        component_capacity[cid] = cap;
    }
    let mut vertices = Vec::new();
    for (slot, &cid) in labeling.comp_of.iter().enumerate() {
        if cid != NO_COMPONENT && component_capacity[cid as usize] >= threshold {
            vertices.push(cut.vertices[slot]);
        }
    }
    Ok(RichSet { vertices, component_capacity })
}

/// Z_r: number of ball vertices whose restricted cluster volume reaches
/// the threshold.
pub fn rich_vertex_count(labeling: &ClusterLabeling, volume_threshold: u64) -> u64 {
    labeling
        .components
        .iter()
        .filter(|c| c.volume >= volume_threshold)
        .map(|c| c.slots as u64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BuildBudget;
    use crate::potential::{green_column, Precision};

    #[test]
    fn open_probability_examples() {
        // 1 - e^{-3} at (1.5, 2.0, a=0.5, lambda=1).
        let p = edge_open_probability(1.5, 2.0, 0.5, 1.0);
        assert!((p - (1.0 - (-3.0f64).exp())).abs() < 1e-12);
        assert!((p - 0.950213).abs() < 1e-6);
        // Zero at the boundary of the level set.
        assert_eq!(edge_open_probability(0.5, 5.0, 0.5, 1.0), 0.0);
        // Weighted form.
        let p = edge_open_probability(1.0, 1.0, 0.0, 2.0);
        assert!((p - (1.0 - (-4.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn subdivision_oracle_pins_weighted_form() {
        // Refining one unit cable into two half-cables of conductance 2
        // must preserve the crossing probability: integrating the midpoint
        // Gaussian N((u+v)/2, 1/4) over both sub-edge openings recovers
        // 1 - exp(-2uv) to quadrature accuracy.
        let integrate = |u0: f64, v0: f64| -> f64 {
            let mean = 0.5 * (u0 + v0);
            let sd = 0.5;
            let lo = (mean - 10.0 * sd).max(0.0);
            let hi = mean + 10.0 * sd;
            let steps = 20_000;
            let h = (hi - lo) / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                let w = lo + i as f64 * h;
                let weight = if i == 0 || i == steps { 0.5 } else { 1.0 };
                let gauss = (-(w - mean) * (w - mean) / (2.0 * sd * sd)).exp()
                    / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let p_left = edge_open_probability(u0, w, 0.0, 2.0);
                let p_right = edge_open_probability(w, v0, 0.0, 2.0);
                acc += weight * gauss * p_left * p_right;
            }
            acc * h
        };
        for &(u0, v0) in &[(0.5, 0.5), (1.0, 2.0), (0.2, 3.0), (1.3, 0.7)] {
            let direct = edge_open_probability(u0, v0, 0.0, 1.0);
            let composed = integrate(u0, v0);
            assert!(
                (direct - composed).abs() < 1e-6,
                "u={u0} v={v0}: {direct} vs {composed}"
            );
        }
    }

    #[test]
    fn two_vertex_connection_matches_gaussian_quadrature() {
        // Two vertices joined by a unit edge, kappa = 1 each: compare the
        // Monte Carlo connection probability at level a with the
        // quadrature of the opening formula over the exact Gaussian law.
        let g = crate::graph::CsrGraph::from_edges(
            2,
            &[(0, 1, 1.0)],
            vec![1.0, 1.0],
            vec![0, 1],
            1,
        )
        .unwrap();
        let w = Window {
            graph: crate::graph::WeightedGraph { topology: Topology::General(Box::new(g)) },
            center: 0,
            interior_radius: 1,
            margin_factor: 2,
            id: "pair".into(),
        };
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let g0 = green_column(&w, &prec, &mut sc, 0).unwrap();
        let (g00, g01) = (g0[0], g0[1]);
        let a = 0.3;
        // Quadrature over the bivariate normal (Cholesky parametrization).
        let l11 = g00.sqrt();
        let l21 = g01 / l11;
        let l22 = (g00 - l21 * l21).sqrt();
        let steps = 1200;
        let lim = 7.0;
        let h = 2.0 * lim / steps as f64;
        let mut p_quad = 0.0;
        for i in 0..steps {
            let z1 = -lim + (i as f64 + 0.5) * h;
            let w1 = (-0.5 * z1 * z1).exp();
            let phi_x = l11 * z1;
            if phi_x <= a {
                continue;
            }
            for j in 0..steps {
                let z2 = -lim + (j as f64 + 0.5) * h;
                let w2 = (-0.5 * z2 * z2).exp();
                let phi_y = l21 * z1 + l22 * z2;
                p_quad += w1 * w2 * edge_open_probability(phi_x, phi_y, a, 1.0);
            }
        }
        p_quad *= h * h / (2.0 * std::f64::consts::PI);
        // Monte Carlo.
        let reps = 100_000u64;
        let mut hits = 0u64;
        let mut scratch = PercScratch::new(2);
        for rep in 0..reps {
            let s = crate::gff::sample(&w, &prec, &mut sc, 31, rep).unwrap();
            let opening = EdgeOpening::new(31, rep, a);
            let c = cluster_of_origin(&w, &s.values, &opening, &mut scratch);
            if c.volume == 2 {
                hits += 1;
            }
        }
        let p_mc = hits as f64 / reps as f64;
        let se = (p_quad * (1.0 - p_quad) / reps as f64).sqrt();
        assert!((p_mc - p_quad).abs() < 4.0 * se, "{p_mc} vs {p_quad} (se {se})");
    }

    fn small_window_and_field(seed: u64, rep: u64) -> (Window, Vec<f64>) {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let s = crate::gff::sample(&w, &prec, &mut sc, seed, rep).unwrap();
        (w, s.values)
    }

    fn gather_slots(cut: &RegionCut, phi: &[f64]) -> Vec<f64> {
        cut.vertices.iter().map(|&v| phi[v as usize]).collect()
    }

    #[test]
    fn labeling_matches_bfs_oracle() {
        // Exhaustive comparison against an independent BFS labeling on a
        // 9^3 window, over several replicas and levels.
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let cut = region_cut(&w, w.center, 4);
        let mut ls = LabelScratch::new(cut.vertices.len());
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        for rep in 0..40u64 {
            let s = crate::gff::sample(&w, &prec, &mut sc, 2, rep).unwrap();
            for &level in &[-0.5, 0.0, 0.4] {
                let opening = EdgeOpening::new(2, rep, level);
                let slots = gather_slots(&cut, &s.values);
                let lab = label_clusters(&cut, &slots, &opening, &mut ls);
                // Oracle: BFS over cut edges.
                let m = cut.vertices.len();
                let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m];
                for e in &cut.edges {
                    if opening.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda)
                    {
                        adj[e.a as usize].push(e.b);
                        adj[e.b as usize].push(e.a);
                    }
                }
                let mut oracle = vec![NO_COMPONENT; m];
                let mut next = 0u32;
                for i in 0..m {
                    if slots[i] < level || oracle[i] != NO_COMPONENT {
                        continue;
                    }
                    let mut stack = vec![i as u32];
                    oracle[i] = next;
                    while let Some(v) = stack.pop() {
                        for &u in &adj[v as usize] {
                            if slots[u as usize] >= level && oracle[u as usize] == NO_COMPONENT
                            {
                                oracle[u as usize] = next;
                                stack.push(u);
                            }
                        }
                    }
                    next += 1;
                }
                assert_eq!(next as usize, lab.components.len());
                for i in 0..m {
                    for j in 0..m {
                        let same_oracle = oracle[i] != NO_COMPONENT && oracle[i] == oracle[j];
                        let same_lab = lab.comp_of[i] != NO_COMPONENT
                            && lab.comp_of[i] == lab.comp_of[j];
                        assert_eq!(same_oracle, same_lab, "pair ({i},{j})");
                    }
                }
                // Volume bookkeeping: total volume = #{phi >= a}.
                let total: u64 = lab.components.iter().map(|c| c.volume).sum();
                let expect = slots.iter().filter(|&&p| p >= level).count() as u64;
                assert_eq!(total, expect);
            }
        }
    }

    #[test]
    fn level_coupling_is_monotone() {
        let (w, phi) = small_window_and_field(3, 11);
        let cut = region_cut(&w, w.center, 4);
        let slots = gather_slots(&cut, &phi);
        let o_low = EdgeOpening::new(3, 11, -0.3);
        let o_high = o_low.at_level(0.4);
        for e in &cut.edges {
            let open_high =
                o_high.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda);
            let open_low =
                o_low.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda);
            // Nested openings: open at the higher level implies open lower.
            assert!(!open_high || open_low);
        }
    }

    #[test]
    fn degenerate_levels() {
        let (w, phi) = small_window_and_field(5, 2);
        let cut = region_cut(&w, w.center, 4);
        let slots = gather_slots(&cut, &phi);
        let mut ls = LabelScratch::new(cut.vertices.len());
        // Level above the maximum: nothing.
        let hi = slots.iter().cloned().fold(f64::MIN, f64::max) + 1.0;
        let lab = label_clusters(&cut, &slots, &EdgeOpening::new(5, 2, hi), &mut ls);
        assert!(lab.components.is_empty());
        assert_eq!(largest_in_ball(&lab), 0);
        // Level far below the minimum: p -> 1, one giant component.
        let lo = slots.iter().cloned().fold(f64::MAX, f64::min) - 60.0;
        let lab = label_clusters(&cut, &slots, &EdgeOpening::new(5, 2, lo), &mut ls);
        assert_eq!(lab.components.len(), 1);
        assert_eq!(lab.components[0].volume, cut.vertices.len() as u64);
        assert!(lab.components[0].censored);
    }

    #[test]
    fn origin_cluster_probability_matches_gaussian_tail() {
        // P(|K^a| >= 1) = P(phi_0 >= a) with variance g(0,0).
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let g00 = green_column(&w, &prec, &mut sc, w.center).unwrap()[w.center as usize];
        let a = 0.25;
        let reps = 100_000u64;
        let mut nonempty = 0u64;
        let mut scratch = PercScratch::new(w.graph.n_vertices());
        for rep in 0..reps {
            let s = crate::gff::sample(&w, &prec, &mut sc, 8, rep).unwrap();
            let opening = EdgeOpening::new(8, rep, a);
            if cluster_of_origin(&w, &s.values, &opening, &mut scratch).volume >= 1 {
                nonempty += 1;
            }
        }
        let p_mc = nonempty as f64 / reps as f64;
        let z = a / g00.sqrt() / std::f64::consts::SQRT_2;
        let p_exact = 0.5 * erfc_simple(z);
        let se = (p_exact * (1.0 - p_exact) / reps as f64).sqrt();
        assert!((p_mc - p_exact).abs() < 4.0 * se, "{p_mc} vs {p_exact}");
    }

    fn erfc_simple(x: f64) -> f64 {
        let steps = 40_000;
        let hi = x + 12.0;
        let h = (hi - x) / steps as f64;
        let f = |t: f64| (-t * t).exp();
        let mut acc = f(x) + f(hi);
        for i in 1..steps {
            acc += f(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn one_arm_basics() {
        let (w, phi) = small_window_and_field(9, 4);
        // r = 0: true iff phi_center >= level.
        let cut0 = region_cut(&w, w.center, 0);
        let slots0 = gather_slots(&cut0, &phi);
        let mut ls0 = LabelScratch::new(1);
        let o = EdgeOpening::new(9, 4, 0.0);
        let lab0 = label_clusters(&cut0, &slots0, &o, &mut ls0);
        assert_eq!(
            one_arm_indicator(&cut0, &lab0, w.center),
            phi[w.center as usize] >= 0.0
        );
        // All open at a very low level: arm reaches the boundary.
        let cut = region_cut(&w, w.center, 3);
        let slots = gather_slots(&cut, &phi);
        let mut ls = LabelScratch::new(cut.vertices.len());
        let o_lo = EdgeOpening::new(9, 4, -60.0);
        let lab = label_clusters(&cut, &slots, &o_lo, &mut ls);
        assert!(one_arm_indicator(&cut, &lab, w.center));
    }

    #[test]
    fn rich_sets_and_counts() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let cut = region_cut(&w, w.center, 3);
        let table =
            crate::potential::RegionTable::build(&w, &prec, &mut sc, &cut.vertices, false)
                .unwrap();
        let mut ls = LabelScratch::new(cut.vertices.len());
        let s = crate::gff::sample(&w, &prec, &mut sc, 12, 3).unwrap();
        let o = EdgeOpening::new(12, 3, 0.0);
        let slots = gather_slots(&cut, &s.values);
        let lab = label_clusters(&cut, &slots, &o, &mut ls);
        // s = 0: all level-set vertices are rich.
        let rich0 = capacity_rich_set(&cut, &lab, &table, 0.0).unwrap();
        let level_count = slots.iter().filter(|&&p| p >= 0.0).count();
        assert_eq!(rich0.vertices.len(), level_count);
        // s above the additive bound: empty.
        let cap_bound: f64 = cut
            .vertices
            .iter()
            .map(|&v| w.graph.lambda_x(v) + w.graph.kappa(v))
            .sum();
        let rich_inf = capacity_rich_set(&cut, &lab, &table, cap_bound + 1.0).unwrap();
        assert!(rich_inf.vertices.is_empty());
        // Z_r with threshold 1 counts the whole level set; a threshold
        // beyond the ball size yields zero.
        assert_eq!(rich_vertex_count(&lab, 1), level_count as u64);
        assert_eq!(rich_vertex_count(&lab, cut.vertices.len() as u64 + 1), 0);
    }

    #[test]
    fn origin_cluster_deterministic_and_censoring() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let mut scratch = PercScratch::new(w.graph.n_vertices());
        let s = crate::gff::sample(&w, &prec, &mut sc, 77, 0).unwrap();
        let o = EdgeOpening::new(77, 0, -40.0);
        let c = cluster_of_origin(&w, &s.values, &o, &mut scratch);
        // Everything open at a very low level: full box, censored.
        assert_eq!(c.volume, w.graph.n_vertices() as u64);
        assert!(c.censored);
        // phi_0 < a: empty cluster.
        let o_hi = EdgeOpening::new(77, 0, s.values[w.center as usize] + 1.0);
        let c = cluster_of_origin(&w, &s.values, &o_hi, &mut scratch);
        assert_eq!(c.volume, 0);
        assert!(!c.censored);
        // Determinism: same seed and replica produce identical members.
        let c1 = cluster_of_origin(&w, &s.values, &EdgeOpening::new(77, 0, 0.0), &mut scratch);
        let c2 = cluster_of_origin(&w, &s.values, &EdgeOpening::new(77, 0, 0.0), &mut scratch);
        assert_eq!(c1.members, c2.members);
    }

    #[test]
    fn restricted_and_full_origin_agree_inside() {
        // When the origin cluster stays strictly inside the cut, the
        // restricted labeling sees the same component.
        let w = Window::lattice_box(3, 4, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let cut = region_cut(&w, w.center, 8);
        let mut ls = LabelScratch::new(cut.vertices.len());
        let mut scratch = PercScratch::new(w.graph.n_vertices());
        let mut checked = 0;
        for rep in 0..200u64 {
            let s = crate::gff::sample(&w, &prec, &mut sc, 15, rep).unwrap();
            let o = EdgeOpening::new(15, rep, 0.0);
            let full = cluster_of_origin(&w, &s.values, &o, &mut scratch);
            if full.volume == 0 {
                continue;
            }
            let max_d = full
                .members
                .iter()
                .map(|&v| w.graph.distance(w.center, v))
                .max()
                .unwrap();
            if max_d >= cut.radius {
                continue;
            }
            let slots = gather_slots(&cut, &s.values);
            let lab = label_clusters(&cut, &slots, &o, &mut ls);
            let cid = lab.comp_of[cut.slot_of[w.center as usize] as usize];
            assert_ne!(cid, NO_COMPONENT);
            assert_eq!(lab.components[cid as usize].volume, full.volume);
            assert!(!lab.components[cid as usize].censored);
            checked += 1;
        }
        assert!(checked > 50, "too few interior clusters: {checked}");
    }

    #[test]
    fn l1_diameter_matches_brute_force() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let cut = region_cut(&w, w.center, 4);
        let mut ls = LabelScratch::new(cut.vertices.len());
        for rep in 0..10u64 {
            let s = crate::gff::sample(&w, &prec, &mut sc, 23, rep).unwrap();
            let o = EdgeOpening::new(23, rep, 0.0);
            let slots = gather_slots(&cut, &s.values);
            let lab = label_clusters(&cut, &slots, &o, &mut ls);
            // Brute-force diameters.
            let d = cut.coord_dim;
            for (cid, comp) in lab.components.iter().enumerate() {
                let members: Vec<usize> = (0..cut.vertices.len())
                    .filter(|&i| lab.comp_of[i] == cid as u32)
                    .collect();
                let mut best = 0u32;
                for (ii, &a) in members.iter().enumerate() {
                    for &b in &members[ii..] {
                        let dist: u32 = (0..d)
                            .map(|ax| {
                                cut.coords[a * d + ax].abs_diff(cut.coords[b * d + ax])
                            })
                            .sum();
                        best = best.max(dist);
                    }
                }
                assert_eq!(comp.l1_diameter, best, "component {cid}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn labeling_partition_is_consistent(seed in 0u64..200) {
            let w = Window::lattice_box(3, 1, 2, BuildBudget::default()).unwrap();
            let prec = Precision::build(&w).unwrap();
            let mut sc = prec.make_scratch();
            let cut = region_cut(&w, w.center, 2);
            let mut ls = LabelScratch::new(cut.vertices.len());
            let s = crate::gff::sample(&w, &prec, &mut sc, seed, 0).unwrap();
            let o = EdgeOpening::new(seed, 0, 0.0);
            let slots: Vec<f64> = cut.vertices.iter().map(|&v| s.values[v as usize]).collect();
            let lab = label_clusters(&cut, &slots, &o, &mut ls);
            // Every open edge joins slots of the same component.
            for e in &cut.edges {
                if o.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda) {
                    proptest::prop_assert_eq!(
                        lab.comp_of[e.a as usize],
                        lab.comp_of[e.b as usize]
                    );
                }
            }
            // Below-level slots carry no component.
            for (i, &p) in slots.iter().enumerate() {
                proptest::prop_assert_eq!(lab.comp_of[i] == NO_COMPONENT, p < 0.0);
            }
        }
    }
}
