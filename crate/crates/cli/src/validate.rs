//! Deterministic invariant suites behind the `validate` subcommand:
//! level-coupling monotonicity, BFS-oracle equivalence, the equilibrium
//! identity, the volume-capacity sandwich on sampled clusters, the
//! subdivision oracle, and the ellipticity corruption check.

use gffperc::graph::{ball, BuildBudget, CsrGraph, Topology, WeightedGraph, Window};
use gffperc::percolation::{
    self, edge_open_probability, EdgeOpening, LabelScratch, PercScratch, NO_COMPONENT,
};
use gffperc::potential::{self, Precision, EQUILIBRIUM_TOL};
use gffperc::rng::{Purpose, StreamId};

pub struct SuiteReport {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        coupling_monotonicity(seed),
        bfs_oracle_equivalence(seed),
        equilibrium_identity(seed),
        volume_capacity_sandwich(seed),
        subdivision_oracle(),
        ellipticity_corruption(),
    ]
}

/// Recomputing openings at a < a' from the same cached uniforms yields
/// nested open edge sets and nested origin clusters; zero violations
/// tolerated over 1000 replicas.
pub fn coupling_monotonicity(seed: u64) -> SuiteReport {
    let w = Window::lattice_box(3, 4, 2, BuildBudget::default()).unwrap();
    let prec = Precision::build(&w).unwrap();
    let mut sc = prec.make_scratch();
    let cut = percolation::region_cut(&w, w.center, 6);
    let mut perc = PercScratch::new(w.graph.n_vertices());
    let mut violations = 0u64;
    let levels = [-0.4f64, 0.0, 0.4];
    for rep in 0..1000u64 {
        let s = gffperc::gff::sample(&w, &prec, &mut sc, seed, rep).unwrap();
        let slots: Vec<f64> = cut.vertices.iter().map(|&v| s.values[v as usize]).collect();
        let base = EdgeOpening::new(seed, rep, 0.0);
        for win in levels.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let o_lo = base.at_level(lo);
            let o_hi = base.at_level(hi);
            for e in &cut.edges {
                let open_hi =
                    o_hi.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda);
                let open_lo =
                    o_lo.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda);
                if open_hi && !open_lo {
                    violations += 1;
                }
            }
            // Nested origin clusters.
            let c_hi = percolation::cluster_of_origin(&w, &s.values, &o_hi, &mut perc);
            let c_lo = percolation::cluster_of_origin(&w, &s.values, &o_lo, &mut perc);
            let lo_set: std::collections::HashSet<_> = c_lo.members.iter().collect();
            if !c_hi.members.iter().all(|m| lo_set.contains(m)) {
                violations += 1;
            }
        }
    }
    SuiteReport {
        name: "coupling-monotonicity",
        pass: violations == 0,
        detail: format!("{violations} violations over 1000 replicas x 2 level pairs"),
    }
}

/// Union-find labeling equals an independent BFS labeling, exhaustively,
/// on windows of at most 1000 vertices.
pub fn bfs_oracle_equivalence(seed: u64) -> SuiteReport {
    let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap(); // 9^3 = 729
    let prec = Precision::build(&w).unwrap();
    let mut sc = prec.make_scratch();
    let cut = percolation::region_cut(&w, w.center, 8);
    let mut label = LabelScratch::new(cut.vertices.len());
    let mut mismatches = 0u64;
    let mut replicas = 0u64;
    for rep in 0..150u64 {
        let s = gffperc::gff::sample(&w, &prec, &mut sc, seed ^ 0xb, rep).unwrap();
        let slots: Vec<f64> = cut.vertices.iter().map(|&v| s.values[v as usize]).collect();
        for &level in &[-0.3, 0.0, 0.5] {
            replicas += 1;
            let o = EdgeOpening::new(seed ^ 0xb, rep, level);
            let lab = percolation::label_clusters(&cut, &slots, &o, &mut label);
            // Independent BFS.
            let m = cut.vertices.len();
            let mut adj: Vec<Vec<u32>> = vec![Vec::new(); m];
            for e in &cut.edges {
                if o.is_open(e.id, slots[e.a as usize], slots[e.b as usize], e.lambda) {
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
                        if slots[u as usize] >= level && oracle[u as usize] == NO_COMPONENT {
                            oracle[u as usize] = next;
                            stack.push(u);
                        }
                    }
                }
                next += 1;
            }
            if next as usize != lab.components.len() {
                mismatches += 1;
                continue;
            }
            // Partition equality through the canonical min-vertex anchor.
            let mut anchor_oracle = vec![u32::MAX; next as usize];
            for i in 0..m {
                if oracle[i] != NO_COMPONENT {
                    let a = &mut anchor_oracle[oracle[i] as usize];
                    *a = (*a).min(cut.vertices[i]);
                }
            }
            let ok = (0..m).all(|i| match (oracle[i], lab.comp_of[i]) {
                (NO_COMPONENT, NO_COMPONENT) => true,
                (o_id, l_id) if o_id != NO_COMPONENT && l_id != NO_COMPONENT => {
                    anchor_oracle[o_id as usize] == lab.components[l_id as usize].min_vertex
                }
                _ => false,
            });
            if !ok {
                mismatches += 1;
            }
        }
    }
    SuiteReport {
        name: "bfs-oracle",
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches over {replicas} labelings on 729 vertices"),
    }
}

/// Equilibrium potential = 1 on K within 1e-8 for balls, random sets, and
/// a PCG-tier set.
pub fn equilibrium_identity(seed: u64) -> SuiteReport {
    let w = Window::lattice_box(3, 6, 2, BuildBudget::default()).unwrap();
    let prec = Precision::build(&w).unwrap();
    let mut sc = prec.make_scratch();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for r in [1u32, 3, 5] {
        let k = ball(&w, w.center, r);
        let eq = potential::equilibrium_measure(&w, &prec, &mut sc, &k).unwrap();
        worst = worst.max(eq.max_residual);
        cases += 1;
    }
    // Random sparse sets.
    let mut stream = StreamId::new(seed ^ 0xc, 0, Purpose::Test).stream();
    for _ in 0..5 {
        let n = w.graph.n_vertices() as u64;
        let k: Vec<u32> = (0..50).map(|_| stream.below(n) as u32).collect();
        let eq = potential::equilibrium_measure(&w, &prec, &mut sc, &k).unwrap();
        worst = worst.max(eq.max_residual);
        cases += 1;
    }
    // PCG tier.
    let k = ball(&w, w.center, 10);
    let eq = potential::equilibrium_measure(&w, &prec, &mut sc, &k).unwrap();
    worst = worst.max(eq.max_residual);
    cases += 1;
    SuiteReport {
        name: "equilibrium-identity",
        pass: worst <= EQUILIBRIUM_TOL,
        detail: format!("max residual {worst:.2e} over {cases} sets (tolerance 1e-8)"),
    }
}

/// |K|/v_K <= cap(K) <= boundary-additive bound for every component of
/// every sampled labeling; zero violations tolerated.
pub fn volume_capacity_sandwich(seed: u64) -> SuiteReport {
    let w = Window::lattice_box(3, 4, 2, BuildBudget::default()).unwrap();
    let prec = Precision::build(&w).unwrap();
    let mut sc = prec.make_scratch();
    let cut = percolation::region_cut(&w, w.center, 8);
    let mut label = LabelScratch::new(cut.vertices.len());
    let mut violations = 0u64;
    let mut clusters = 0u64;
    for rep in 0..300u64 {
        let s = gffperc::gff::sample(&w, &prec, &mut sc, seed ^ 0xd, rep).unwrap();
        let slots: Vec<f64> = cut.vertices.iter().map(|&v| s.values[v as usize]).collect();
        let o = EdgeOpening::new(seed ^ 0xd, rep, 0.0);
        let lab = percolation::label_clusters(&cut, &slots, &o, &mut label);
        for (cid, _) in lab.components.iter().enumerate() {
            let members: Vec<u32> = lab
                .comp_of
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == cid as u32)
                .map(|(slot, _)| cut.vertices[slot])
                .collect();
            let bounds = potential::cap_volume_bounds(&w, &prec, &mut sc, &members).unwrap();
            clusters += 1;
            if !bounds.ok {
                violations += 1;
            }
        }
    }
    SuiteReport {
        name: "volume-capacity-sandwich",
        pass: violations == 0,
        detail: format!("{violations} violations over {clusters} sampled clusters"),
    }
}

/// Splitting a unit cable in two preserves the crossing probability: the
/// midpoint-integrated two-hop probability matches 1 - exp(-2uv) within
/// 1e-6 (this pins the conductance factor in the opening formula).
pub fn subdivision_oracle() -> SuiteReport {
    let integrate = |u0: f64, v0: f64| -> f64 {
        let mean = 0.5 * (u0 + v0);
        let sd = 0.5;
        let lo = (mean - 10.0 * sd).max(0.0);
        let hi = mean + 10.0 * sd;
        let steps = 40_000;
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let w = lo + i as f64 * h;
            let weight = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let gauss = (-(w - mean) * (w - mean) / (2.0 * sd * sd)).exp()
                / (sd * (2.0 * std::f64::consts::PI).sqrt());
            acc += weight
                * gauss
                * edge_open_probability(u0, w, 0.0, 2.0)
                * edge_open_probability(w, v0, 0.0, 2.0);
        }
        acc * h
    };
    let mut worst = 0.0f64;
    for &(u0, v0) in &[(0.5, 0.5), (1.0, 2.0), (0.2, 3.0), (1.3, 0.7), (2.5, 2.5)] {
        let direct = edge_open_probability(u0, v0, 0.0, 1.0);
        worst = worst.max((direct - integrate(u0, v0)).abs());
    }
    SuiteReport {
        name: "subdivision-oracle",
        pass: worst < 1e-6,
        detail: format!("max |direct - composed| = {worst:.2e} (tolerance 1e-6)"),
    }
}

/// A corrupted conductance must be caught by the ellipticity check.
pub fn ellipticity_corruption() -> SuiteReport {
    let good = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
    let good_ok = good.graph.check_ellipticity(1.0 / 6.0).is_ok();
    let bad = CsrGraph::from_edges_unchecked(
        3,
        &[(0, 1, 1.0), (1, 2, -0.5)],
        vec![1.0, 0.0, 1.0],
        vec![0; 3],
        1,
    );
    let bad_graph = WeightedGraph { topology: Topology::General(Box::new(bad)) };
    let bad_caught = bad_graph.check_ellipticity(0.05).is_err();
    SuiteReport {
        name: "ellipticity-corruption",
        pass: good_ok && bad_caught,
        detail: format!("clean window ok={good_ok}, corrupted weight caught={bad_caught}"),
    }
}
