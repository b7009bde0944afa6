//! Random interlacements at level u on a window: the trajectories hitting
//! a domain A form a Poisson number with parameter u*cap(A) of independent
//! killed walks started from the normalized equilibrium measure of A.
//! Includes the vacancy check, local uniqueness, the union C_u of sign
//! clusters touched by the interlacement, and the hub construction that
//! grows a large connected set from the maximal-capacity cluster.

use crate::graph::{Vertex, Window};
use crate::percolation::{ClusterLabeling, EdgeOpening, RegionCut, NO_COMPONENT};
use crate::potential::EquilibriumMeasure;
use crate::rng::{Purpose, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Absorbed by the killing measure (shell or explicit kappa).
    Killed,
    /// Stepped outside the prescribed stop set.
    ExitedStopSet,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub start: Vertex,
    /// Visited vertices in order, including the start; for a stopped
    /// trajectory the final vertex is the first one outside the stop set.
    pub path: Vec<Vertex>,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct InterlacementRealization {
    pub level: f64,
    pub domain_capacity: f64,
    pub trajectories: Vec<Trajectory>,
    /// Sorted distinct visited vertices.
    pub footprint: Vec<Vertex>,
}

impl InterlacementRealization {
    /// Vacancy indicator: I^u does not meet the given sorted set.
    pub fn is_vacant(&self, sorted_set: &[Vertex]) -> bool {
        if self.footprint.len() < sorted_set.len() {
            self.footprint.iter().all(|v| sorted_set.binary_search(v).is_err())
        } else {
            sorted_set.iter().all(|v| self.footprint.binary_search(v).is_err())
        }
    }
}

/// Full-trajectory JSON dump for debugging.
pub fn dump_realization(real: &InterlacementRealization) -> serde_json::Value {
    serde_json::json!({
        "level": real.level,
        "domain_capacity": real.domain_capacity,
        "trajectories": real
            .trajectories
            .iter()
            .map(|t| serde_json::json!({
                "start": t.start,
                "path": t.path,
                "termination": match t.termination {
                    Termination::Killed => "killed",
                    Termination::ExitedStopSet => "exited-stop-set",
                },
            }))
            .collect::<Vec<_>>(),
        "footprint": real.footprint,
    })
}

/// Optional spatial restriction of trajectories.
pub enum StopRule<'a> {
    /// Walk until absorbed by killing.
    Absorption,
    /// Stop on first step outside the mask (mask[v] = inside).
    ExitMask(&'a [bool]),
}

/// Samples the trajectories of I^u that hit the domain, started at entry,
/// i.e. the forward parts. Deterministic given (seed, replica, sub).
pub fn sample_interlacement(
    window: &Window,
    eq: &EquilibriumMeasure,
    u: f64,
    stop: StopRule<'_>,
    seed: u64,
    replica: u64,
    sub: u64,
) -> InterlacementRealization {
    assert!(u >= 0.0);
    let mut launch = StreamId::with_sub(seed, replica, Purpose::PointProcess, sub).stream();
    let mut walk = StreamId::with_sub(seed, replica, Purpose::Walks, sub).stream();
    let count = launch.poisson(u * eq.capacity);
    // Cumulative weights for launch-point selection.
    let mut cum = Vec::with_capacity(eq.support.len());
    let mut acc = 0.0;
    for &w in &eq.weight {
        acc += w;
        cum.push(acc);
    }
    let mut trajectories = Vec::with_capacity(count as usize);
    let mut footprint = Vec::new();
    for _ in 0..count {
        let pick = launch.unit_f64() * eq.capacity;
        let idx = cum.partition_point(|&c| c < pick).min(eq.support.len() - 1);
        let start = eq.support[idx];
        let mut path = vec![start];
        let mut v = start;
        let termination = loop {
            let lam = window.graph.lambda_x(v);
            let kap = window.graph.kappa(v);
            let pick = walk.unit_f64() * (lam + kap);
            if pick < kap {
                break Termination::Killed;
            }
            // Neighbor whose cumulative conductance covers the pick.
            let target = pick - kap;
            let mut acc = 0.0;
            let mut next = v;
            window.graph.for_each_neighbor(v, |nb, w| {
                if acc <= target {
                    next = nb;
                }
                acc += w;
            });
            v = next;
            path.push(v);
            if let StopRule::ExitMask(mask) = &stop {
                if !mask[v as usize] {
                    break Termination::ExitedStopSet;
                }
            }
        };
        footprint.extend_from_slice(&path);
        trajectories.push(Trajectory { start, path, termination });
    }
    footprint.sort_unstable();
    footprint.dedup();
    InterlacementRealization {
        level: u,
        domain_capacity: eq.capacity,
        trajectories,
        footprint,
    }
}

/// Local uniqueness: every pair of interlacement points in B(x,r) is
/// connected within the interlacement restricted to B(x,t*r).
/// Connectivity uses the trajectory cables: consecutive path steps with
/// both endpoints inside the larger ball.
pub fn local_uniqueness_indicator(
    window: &Window,
    realization: &InterlacementRealization,
    x: Vertex,
    r: u32,
    t: u32,
) -> bool {
    let big = r * t;
    let inner: Vec<Vertex> = realization
        .footprint
        .iter()
        .copied()
        .filter(|&v| window.graph.distance(x, v) <= r)
        .collect();
    if inner.len() <= 1 {
        return true;
    }
    // Union-find over footprint vertices inside the big ball.
    let mut slot = std::collections::HashMap::new();
    let mut keep = Vec::new();
    for &v in &realization.footprint {
        if window.graph.distance(x, v) <= big {
            slot.insert(v, keep.len() as u32);
            keep.push(v);
        }
    }
    let mut parent: Vec<u32> = (0..keep.len() as u32).collect();
    fn find(parent: &mut [u32], mut a: u32) -> u32 {
        while parent[a as usize] != a {
            let g = parent[parent[a as usize] as usize];
            parent[a as usize] = g;
            a = g;
        }
        a
    }
    for traj in &realization.trajectories {
        for pair in traj.path.windows(2) {
            if let (Some(&sa), Some(&sb)) = (slot.get(&pair[0]), slot.get(&pair[1])) {
                let ra = find(&mut parent, sa);
                let rb = find(&mut parent, sb);
                if ra != rb {
                    parent[ra as usize] = rb;
                }
            }
        }
    }
    let root0 = find(&mut parent, slot[&inner[0]]);
    inner.iter().all(|v| find(&mut parent, slot[v]) == root0)
}

/// The union C_u of sign clusters of {|phi| > 0} meeting the footprint,
/// at the resolution of a region cut: marks which components of the sign
/// labeling are touched.
pub struct SignClusterUnion {
    pub labeling: ClusterLabeling,
    pub touched: Vec<bool>,
    /// Slots of the cut belonging to C_u.
    pub member_slots: Vec<u32>,
}

pub fn build_c_u(
    cut: &RegionCut,
    phi_slots: &[f64],
    opening: &EdgeOpening,
    label_scratch: &mut crate::percolation::LabelScratch,
    realization: &InterlacementRealization,
) -> SignClusterUnion {
    let labeling = crate::percolation::label_sign_clusters(cut, phi_slots, opening, label_scratch);
    let mut touched = vec![false; labeling.components.len()];
    for &v in &realization.footprint {
        let slot = cut.slot_of[v as usize];
        if slot != u32::MAX {
            let cid = labeling.comp_of[slot as usize];
            if cid != NO_COMPONENT {
                touched[cid as usize] = true;
            }
        }
    }
    let mut member_slots = Vec::new();
    for (slot, &cid) in labeling.comp_of.iter().enumerate() {
        if cid != NO_COMPONENT && touched[cid as usize] {
            member_slots.push(slot as u32);
        }
    }
    SignClusterUnion { labeling, touched, member_slots }
}

impl SignClusterUnion {
    /// Volume (lattice vertices) of the largest touched sign cluster:
    /// distinct sign clusters have a.s. disjoint closures, so these are
    /// exactly the connected components of C_u at vertex resolution.
    pub fn largest_component_volume(&self) -> u64 {
        self.labeling
            .components
            .iter()
            .zip(&self.touched)
            .filter(|(_, &t)| t)
            .map(|(c, _)| c.volume)
            .max()
            .unwrap_or(0)
    }

    /// Total lattice-vertex count of C_u inside the cut.
    pub fn total_volume(&self) -> u64 {
        self.labeling
            .components
            .iter()
            .zip(&self.touched)
            .filter(|(_, &t)| t)
            .map(|(c, _)| c.volume)
            .sum()
    }
}

/// The component of the restricted level-0 labeling with maximal capacity
/// (the hub); ties resolve to the smaller component id.
pub fn max_capacity_cluster(
    cut: &RegionCut,
    labeling: &ClusterLabeling,
    table: &crate::potential::RegionTable,
) -> Result<Option<(u32, Vec<Vertex>, f64)>, crate::potential::PotentialError> {
    if labeling.components.is_empty() {
        return Ok(None);
    }
    let rich = crate::percolation::capacity_rich_set(cut, labeling, table, f64::INFINITY)?;
    let mut best: Option<(u32, f64)> = None;
    for (cid, &cap) in rich.component_capacity.iter().enumerate() {
        if best.map(|(_, c)| cap > c).unwrap_or(true) {
            best = Some((cid as u32, cap));
        }
    }
    let (cid, cap) = best.unwrap();
    let members: Vec<Vertex> = labeling
        .comp_of
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == cid)
        .map(|(slot, _)| cut.vertices[slot])
        .collect();
    Ok(Some((cid, members, cap)))
}

#[derive(Debug, Clone)]
pub struct HubResult {
    /// Sorted union: hub cluster + forward trajectory ranges + touched
    /// level-0 clusters.
    pub vertices: Vec<Vertex>,
    pub volume: u64,
    /// Re-labeling certificate: the union is connected through open edges
    /// and trajectory cables.
    pub connected: bool,
}

/// Joins the hub cluster with the forward parts of the trajectories
/// launched from it (already stopped on exiting the enlarged ball) and
/// with every restricted level-0 cluster those trajectories touch.
pub fn hub_construction(
    window: &Window,
    cut: &RegionCut,
    labeling: &ClusterLabeling,
    hub_component: u32,
    opening: &EdgeOpening,
    phi_slots: &[f64],
    realization: &InterlacementRealization,
) -> HubResult {
    let mut verts: Vec<Vertex> = Vec::new();
    for (slot, &cid) in labeling.comp_of.iter().enumerate() {
        if cid == hub_component {
            verts.push(cut.vertices[slot]);
        }
    }
    // Touched clusters.
    let mut touched = vec![false; labeling.components.len()];
    touched[hub_component as usize] = true;
    for &v in &realization.footprint {
        let slot = cut.slot_of[v as usize];
        if slot != u32::MAX {
            let cid = labeling.comp_of[slot as usize];
            if cid != NO_COMPONENT {
                touched[cid as usize] = true;
            }
        }
    }
    for (slot, &cid) in labeling.comp_of.iter().enumerate() {
        if cid != NO_COMPONENT && cid != hub_component && touched[cid as usize] {
            verts.push(cut.vertices[slot]);
        }
    }
    verts.extend_from_slice(&realization.footprint);
    verts.sort_unstable();
    verts.dedup();
    // Connectivity certificate by re-labeling the union.
    let mut slot_map = std::collections::HashMap::new();
    for (i, &v) in verts.iter().enumerate() {
        slot_map.insert(v, i as u32);
    }
    let mut parent: Vec<u32> = (0..verts.len() as u32).collect();
    fn find(parent: &mut [u32], mut a: u32) -> u32 {
        while parent[a as usize] != a {
            let g = parent[parent[a as usize] as usize];
            parent[a as usize] = g;
            a = g;
        }
        a
    }
    let join = |parent: &mut Vec<u32>, a: u32, b: u32| {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            parent[ra as usize] = rb;
        }
    };
    for traj in &realization.trajectories {
        for pair in traj.path.windows(2) {
            if let (Some(&a), Some(&b)) = (slot_map.get(&pair[0]), slot_map.get(&pair[1])) {
                join(&mut parent, a, b);
            }
        }
    }
    // Open edges of the cut between union members.
    for e in &cut.edges {
        let va = cut.vertices[e.a as usize];
        let vb = cut.vertices[e.b as usize];
        if let (Some(&a), Some(&b)) = (slot_map.get(&va), slot_map.get(&vb)) {
            if opening.is_open(e.id, phi_slots[e.a as usize], phi_slots[e.b as usize], e.lambda)
            {
                join(&mut parent, a, b);
            }
        }
    }
    let connected = if verts.is_empty() {
        true
    } else {
        let r0 = find(&mut parent, 0);
        (1..verts.len() as u32).all(|i| find(&mut parent, i) == r0)
    };
    let volume = verts
        .iter()
        .filter(|&&v| window.graph.is_lattice_vertex(v))
        .count() as u64;
    HubResult { vertices: verts, volume, connected }
}
