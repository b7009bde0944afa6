//! Discrete potential theory on a window: Green functions, harmonic
//! potentials, equilibrium measures and capacities, plus the volume-capacity
//! comparison bounds.
//!
//! The precision operator Q (Q_xx = lambda_x + kappa_x, Q_xy = -lambda_xy)
//! is inverted through one of three backends: the spectral solver for
//! lattice boxes (any size), a dense Cholesky factorization for small
//! general graphs, and plain conjugate gradient (relative residual 1e-10)
//! for large general graphs, where exact sampling is refused.

use std::collections::HashMap;

use thiserror::Error;

use crate::graph::{Topology, Vertex, Window};
use crate::linalg::{self, LinalgError};
use crate::spectral::{BoxSpectral, SpectralScratch};

/// Largest general graph we factor densely.
pub const DENSE_WINDOW_LIMIT: usize = 4096;
/// Largest target set solved by dense Cholesky inside equilibrium_measure;
/// larger sets go through PCG with whole-window solves as the matvec.
pub const DENSE_SET_LIMIT: usize = 2000;
/// Relative residual for iterative solves.
pub const CG_TOL: f64 = 1e-10;
/// Equilibrium-potential identity tolerance.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("recurrent window: total killing is zero, Q is singular")]
    RecurrentWindow,
    #[error("window too large for an exact factorization backend ({n} vertices); \
             iterative solves are available but exact sampling is not")]
    NoExactSampler { n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("equilibrium identity residual {residual:.3e} above tolerance")]
    ResidualTooLarge { residual: f64 },
}

pub enum Backend {
    Spectral(BoxSpectral),
    Dense { l: Vec<f64> },
    /// Jacobi-preconditioned CG on the graph; no factorization held.
    Iterative { diag: Vec<f64> },
}

pub struct Precision {
    pub backend: Backend,
    pub n: usize,
}

pub enum Scratch {
    Spectral(SpectralScratch),
    None,
}

impl Precision {
    pub fn build(window: &Window) -> Result<Precision, PotentialError> {
        let n = window.graph.n_vertices();
        if window.graph.total_killing() <= 0.0 {
            return Err(PotentialError::RecurrentWindow);
        }
        match &window.graph.topology {
            Topology::Lattice(l) => Ok(Precision {
                backend: Backend::Spectral(BoxSpectral::new(l.dim, l.side)),
                n,
            }),
            Topology::General(_) => {
                if n <= DENSE_WINDOW_LIMIT {
                    let mut q = vec![0.0; n * n];
                    for v in 0..n as Vertex {
                        q[v as usize * n + v as usize] =
                            window.graph.lambda_x(v) + window.graph.kappa(v);
                        window.graph.for_each_neighbor(v, |u, w| {
                            q[v as usize * n + u as usize] = -w;
                        });
                    }
                    linalg::cholesky_in_place(&mut q, n, n > 1024).map_err(|e| match e {
                        LinalgError::NotPositiveDefinite(_) => PotentialError::RecurrentWindow,
                        other => PotentialError::Linalg(other),
                    })?;
                    Ok(Precision { backend: Backend::Dense { l: q }, n })
                } else {
                    let diag: Vec<f64> = (0..n as Vertex)
                        .map(|v| window.graph.lambda_x(v) + window.graph.kappa(v))
                        .collect();
                    Ok(Precision { backend: Backend::Iterative { diag }, n })
                }
            }
        }
    }

    pub fn make_scratch(&self) -> Scratch {
        match &self.backend {
            Backend::Spectral(s) => Scratch::Spectral(s.make_scratch()),
            _ => Scratch::None,
        }
    }

    /// Solves Q u = b in place.
    pub fn solve_in_place(
        &self,
        window: &Window,
        data: &mut [f64],
        scratch: &mut Scratch,
    ) -> Result<(), PotentialError> {
        match (&self.backend, scratch) {
            (Backend::Spectral(s), Scratch::Spectral(sc)) => {
                s.solve_in_place(data, sc);
                Ok(())
            }
            (Backend::Dense { l }, _) => {
                linalg::solve_lower(l, self.n, data);
                linalg::solve_lower_transpose(l, self.n, data);
                Ok(())
            }
            (Backend::Iterative { diag }, _) => {
                let b = data.to_vec();
                let mut x = vec![0.0; self.n];
                linalg::pcg(
                    |v, out| apply_q(window, v, out),
                    |r, out| {
                        for i in 0..self.n {
                            out[i] = r[i] / diag[i];
                        }
                    },
                    &b,
                    &mut x,
                    CG_TOL,
                    20 * (self.n as f64).sqrt() as usize + 200,
                )?;
                data.copy_from_slice(&x);
                Ok(())
            }
            _ => unreachable!("scratch kind mismatch"),
        }
    }

    /// g(x, y): cheap per-pair evaluation (quadrature table on lattice
    /// windows, column solves otherwise).
    pub fn green_entry(
        &self,
        window: &Window,
        scratch: &mut Scratch,
        x: Vertex,
        y: Vertex,
    ) -> Result<f64, PotentialError> {
        match &self.backend {
            Backend::Spectral(s) => {
                let (cx, cy) = (lattice_pos(window, x), lattice_pos(window, y));
                Ok(s.green_entry(&cx, &cy))
            }
            _ => {
                let col = green_column(window, self, scratch, y)?;
                Ok(col[x as usize])
            }
        }
    }
}

fn apply_q(window: &Window, v: &[f64], out: &mut [f64]) {
    for x in 0..v.len() {
        let xv = x as Vertex;
        let mut s = (window.graph.lambda_x(xv) + window.graph.kappa(xv)) * v[x];
        window.graph.for_each_neighbor(xv, |u, w| {
            s -= w * v[u as usize];
        });
        out[x] = s;
    }
}

fn lattice_pos(window: &Window, v: Vertex) -> Vec<usize> {
    match &window.graph.topology {
        Topology::Lattice(l) => {
            let mut c = vec![0i32; l.dim];
            l.coords_of(v, &mut c);
            c.iter().map(|&x| (x + l.half) as usize).collect()
        }
        _ => unreachable!("lattice_pos on a general graph"),
    }
}

/// Solves Q u = delta_y: u(x) = g(x, y).
pub fn green_column(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    y: Vertex,
) -> Result<Vec<f64>, PotentialError> {
    let mut col = vec![0.0; prec.n];
    if let (Backend::Spectral(s), Scratch::Spectral(sc)) = (&prec.backend, &mut *scratch) {
        let cy = lattice_pos(window, y);
        s.green_column(&cy, &mut col, sc);
        return Ok(col);
    }
    col[y as usize] = 1.0;
    prec.solve_in_place(window, &mut col, scratch)?;
    Ok(col)
}

/// Nonnegative measure on (the boundary of) K whose Green potential is 1
/// on K; its total mass is the capacity.
#[derive(Debug, Clone)]
pub struct EquilibriumMeasure {
    /// Sorted member vertices of K.
    pub support: Vec<Vertex>,
    /// e_K aligned with `support` (zero, up to tolerance, off the boundary).
    pub weight: Vec<f64>,
    pub capacity: f64,
    /// max_x |sum_y g(x,y) e(y) - 1| over K, with the backend's own g.
    pub max_residual: f64,
    /// K touches the absorbing shell: capacity is inflated by the boundary.
    pub touches_boundary: bool,
}

/// Gathers the dense Green sub-matrix G_{KK}.
pub fn gather_green_matrix(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    set: &[Vertex],
) -> Result<Vec<f64>, PotentialError> {
    let m = set.len();
    let mut g = vec![0.0; m * m];
    match &prec.backend {
        Backend::Spectral(s) => {
            let pos: Vec<Vec<usize>> = set.iter().map(|&v| lattice_pos(window, v)).collect();
            for i in 0..m {
                for j in 0..=i {
                    let val = s.green_entry(&pos[i], &pos[j]);
                    g[i * m + j] = val;
                    g[j * m + i] = val;
                }
            }
        }
        _ => {
            for j in 0..m {
                let col = green_column(window, prec, scratch, set[j])?;
                for i in 0..m {
                    g[i * m + j] = col[set[i] as usize];
                }
            }
            // Symmetrize away solver noise.
            for i in 0..m {
                for j in 0..i {
                    let s = 0.5 * (g[i * m + j] + g[j * m + i]);
                    g[i * m + j] = s;
                    g[j * m + i] = s;
                }
            }
        }
    }
    Ok(g)
}

fn sorted_dedup(set: &[Vertex]) -> Vec<Vertex> {
    let mut k: Vec<Vertex> = set.to_vec();
    k.sort_unstable();
    k.dedup();
    k
}

/// Equilibrium measure of K relative to the window: solves G_{KK} e = 1.
pub fn equilibrium_measure(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    set: &[Vertex],
) -> Result<EquilibriumMeasure, PotentialError> {
    let k = sorted_dedup(set);
    let m = k.len();
    if m == 0 {
        return Ok(EquilibriumMeasure {
            support: k,
            weight: Vec::new(),
            capacity: 0.0,
            max_residual: 0.0,
            touches_boundary: false,
        });
    }
    let touches_boundary = k.iter().any(|&v| window.graph.kappa(v) > 0.0);
    // Whole-window target: h = 1 everywhere, e = kappa exactly.
    if m == prec.n {
        let weight: Vec<f64> = k.iter().map(|&v| window.graph.kappa(v)).collect();
        let capacity = weight.iter().sum();
        return Ok(EquilibriumMeasure {
            support: k,
            weight,
            capacity,
            max_residual: 0.0,
            touches_boundary,
        });
    }
    let use_dense = m <= DENSE_SET_LIMIT || !matches!(prec.backend, Backend::Spectral(_));
    let (weight, max_residual) = if use_dense {
        let g = gather_green_matrix(window, prec, scratch, &k)?;
        let mut l = g.clone();
        linalg::cholesky_in_place(&mut l, m, false)?;
        let mut e = vec![1.0; m];
        linalg::solve_lower(&l, m, &mut e);
        linalg::solve_lower_transpose(&l, m, &mut e);
        let mut resid = 0.0f64;
        let mut pot = vec![0.0; m];
        linalg::sym_matvec(&g, m, &e, &mut pot);
        for p in &pot {
            resid = resid.max((p - 1.0).abs());
        }
        (e, resid)
    } else {
        solve_equilibrium_pcg(window, prec, scratch, &k)?
    };
    if max_residual > EQUILIBRIUM_TOL {
        return Err(PotentialError::ResidualTooLarge { residual: max_residual });
    }
    let capacity = weight.iter().sum();
    Ok(EquilibriumMeasure {
        support: k,
        weight,
        capacity,
        max_residual,
        touches_boundary,
    })
}

/// PCG on G_{KK} e = 1 with whole-window spectral solves as the matvec and
/// Q_{KK} as the preconditioner (G_{KK}^{-1} is the Schur complement of Q
/// onto K, which Q_{KK} approximates well).
fn solve_equilibrium_pcg(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    k: &[Vertex],
) -> Result<(Vec<f64>, f64), PotentialError> {
    let m = k.len();
    let n = prec.n;
    let index_of: HashMap<Vertex, usize> =
        k.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    // K-subgraph structure for the preconditioner.
    let mut qk_diag = vec![0.0; m];
    let mut qk_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (i, &v) in k.iter().enumerate() {
        qk_diag[i] = window.graph.lambda_x(v) + window.graph.kappa(v);
        window.graph.for_each_neighbor(v, |u, w| {
            if let Some(&j) = index_of.get(&u) {
                qk_adj[i].push((j, w));
            }
        });
    }
    let full = std::cell::RefCell::new((vec![0.0; n], scratch));
    let apply_g = |v: &[f64], out: &mut [f64]| {
        let mut borrow = full.borrow_mut();
        let (buf, scr) = &mut *borrow;
        buf.fill(0.0);
        for (i, &vert) in k.iter().enumerate() {
            buf[vert as usize] = v[i];
        }
        prec.solve_in_place(window, buf, scr).expect("window solve");
        for (i, &vert) in k.iter().enumerate() {
            out[i] = buf[vert as usize];
        }
    };
    let apply_qk = |r: &[f64], out: &mut [f64]| {
        for i in 0..m {
            let mut s = qk_diag[i] * r[i];
            for &(j, w) in &qk_adj[i] {
                s -= w * r[j];
            }
            out[i] = s;
        }
    };
    let b = vec![1.0; m];
    let mut e = vec![0.0; m];
    linalg::pcg(apply_g, apply_qk, &b, &mut e, 1e-12, 400)?;
    // Residual of the equilibrium identity.
    let mut pot = vec![0.0; m];
    apply_g(&e, &mut pot);
    let resid = pot.iter().map(|p| (p - 1.0).abs()).fold(0.0f64, f64::max);
    Ok((e, resid))
}

/// cap(K): total equilibrium mass.
pub fn capacity(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    set: &[Vertex],
) -> Result<f64, PotentialError> {
    Ok(equilibrium_measure(window, prec, scratch, set)?.capacity)
}

/// Outer boundary of K: members with an absorbed slot or a neighbor off K.
pub fn outer_boundary(window: &Window, k_sorted: &[Vertex]) -> Vec<Vertex> {
    let mut out = Vec::new();
    for &v in k_sorted {
        if window.graph.kappa(v) > 0.0 {
            out.push(v);
            continue;
        }
        let mut external = false;
        window.graph.for_each_neighbor(v, |u, _| {
            if k_sorted.binary_search(&u).is_err() {
                external = true;
            }
        });
        if external {
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct CapacityBounds {
    /// |K| / v_K with v_K = sup_x sum_y g(x,y): a rigorous lower bound.
    pub lower: f64,
    /// sum over boundary members of lambda_x + kappa_x: an upper bound.
    pub upper: f64,
    pub capacity: f64,
    pub ok: bool,
}

/// The volume-capacity sandwich |K|/v_K <= cap(K) <= sum_{dK}(lambda+kappa).
pub fn cap_volume_bounds(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    set: &[Vertex],
) -> Result<CapacityBounds, PotentialError> {
    let k = sorted_dedup(set);
    let m = k.len();
    if m == 0 {
        return Ok(CapacityBounds { lower: 0.0, upper: 0.0, capacity: 0.0, ok: true });
    }
    let eq = equilibrium_measure(window, prec, scratch, &k)?;
    // v_K = max over K of the potential of the indicator: one window solve.
    let mut buf = vec![0.0; prec.n];
    for &v in &k {
        buf[v as usize] = 1.0;
    }
    prec.solve_in_place(window, &mut buf, scratch)?;
    let v_k = k.iter().map(|&v| buf[v as usize]).fold(0.0f64, f64::max);
    let lower = m as f64 / v_k;
    let upper: f64 = outer_boundary(window, &k)
        .iter()
        .map(|&v| window.graph.lambda_x(v) + window.graph.kappa(v))
        .sum();
    let tol = 1e-7 * (1.0 + eq.capacity.abs());
    let ok = lower <= eq.capacity + tol && eq.capacity <= upper + tol;
    Ok(CapacityBounds { lower, upper, capacity: eq.capacity, ok })
}

/// Certified capacity lower bound |K| / v_K (one window solve), from the
/// variational characterization with the uniform trial measure. Far
/// cheaper than the equilibrium solve on large sets.
pub fn capacity_floor(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    set: &[Vertex],
) -> Result<f64, PotentialError> {
    let k = sorted_dedup(set);
    if k.is_empty() {
        return Ok(0.0);
    }
    let mut buf = vec![0.0; prec.n];
    for &v in &k {
        buf[v as usize] = 1.0;
    }
    prec.solve_in_place(window, &mut buf, scratch)?;
    let v_k = k.iter().map(|&v| buf[v as usize]).fold(0.0f64, f64::max);
    Ok(k.len() as f64 / v_k)
}

/// h_A(x) = P_x(hit A before absorption): 1 on A, Green potential of the
/// equilibrium measure elsewhere.
pub fn harmonic_potential(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    a_set: &[Vertex],
) -> Result<Vec<f64>, PotentialError> {
    let a = sorted_dedup(a_set);
    assert!(!a.is_empty(), "harmonic potential of an empty set");
    if a.len() == prec.n {
        return Ok(vec![1.0; prec.n]);
    }
    let eq = equilibrium_measure(window, prec, scratch, &a)?;
    let mut h = vec![0.0; prec.n];
    for (i, &v) in eq.support.iter().enumerate() {
        h[v as usize] = eq.weight[i];
    }
    prec.solve_in_place(window, &mut h, scratch)?;
    // Clamp the A-values to exactly one (they already match to 1e-8).
    for &v in &eq.support {
        h[v as usize] = 1.0;
    }
    Ok(h)
}

/// Dense Green table on a sub-region (typically a statistics ball) of a
/// lattice window, with an optional Cholesky factor for marginal sampling.
/// Built from analytic Green columns, one per symmetry orbit of the box.
pub struct RegionTable {
    /// Sorted region vertices.
    pub vertices: Vec<Vertex>,
    /// Window-indexed map: position in `vertices`, or u32::MAX.
    pub slot_of: Vec<u32>,
    /// Dense m x m covariance (row-major, symmetric).
    pub g: Vec<f64>,
    /// Lower Cholesky factor of g, if requested.
    pub chol: Option<Vec<f64>>,
}

impl RegionTable {
    pub fn build(
        window: &Window,
        prec: &Precision,
        scratch: &mut Scratch,
        region: &[Vertex],
        with_chol: bool,
    ) -> Result<RegionTable, PotentialError> {
        let verts = sorted_dedup(region);
        let m = verts.len();
        let n = prec.n;
        let mut slot_of = vec![u32::MAX; n];
        for (i, &v) in verts.iter().enumerate() {
            slot_of[v as usize] = i as u32;
        }
        let mut g = vec![0.0; m * m];
        match (&prec.backend, &window.graph.topology) {
            (Backend::Spectral(spec), Topology::Lattice(lat)) => {
                // One analytic column per octahedral orbit, unfolded by
                // g(x, sigma y) = g(sigma^{-1} x, y).
                let dim = lat.dim;
                let mut done = vec![false; m];
                let mut col = vec![0.0; n];
                let mut cy = vec![0i32; dim];
                let mut cx = vec![0i32; dim];
                for j in 0..m {
                    if done[j] {
                        continue;
                    }
                    lat.coords_of(verts[j], &mut cy);
                    let mut canon: Vec<i32> = cy.iter().map(|v| v.abs()).collect();
                    canon.sort_unstable_by(|a, b| b.cmp(a));
                    let pos: Vec<usize> =
                        canon.iter().map(|&c| (c + lat.half) as usize).collect();
                    if let Scratch::Spectral(sc) = scratch {
                        spec.green_column(&pos, &mut col, sc);
                    }
                    // Visit all region columns in the orbit of `canon`.
                    for jj in j..m {
                        if done[jj] {
                            continue;
                        }
                        lat.coords_of(verts[jj], &mut cy);
                        let mut c2: Vec<i32> = cy.iter().map(|v| v.abs()).collect();
                        c2.sort_unstable_by(|a, b| b.cmp(a));
                        if c2 != canon {
                            continue;
                        }
                        // Find sigma with sigma(canon) = cy: assign canon
                        // slots to axes, then signs.
                        let mut perm = vec![usize::MAX; dim];
                        let mut used = vec![false; dim];
                        for (slot, &cv) in canon.iter().enumerate() {
                            for ax in 0..dim {
                                if !used[ax] && cy[ax].abs() == cv {
                                    perm[slot] = ax;
                                    used[ax] = true;
                                    break;
                                }
                            }
                        }
                        let signs: Vec<i32> = (0..dim)
                            .map(|slot| if cy[perm[slot]] < 0 { -1 } else { 1 })
                            .collect();
                        // g(x, sigma canon) = col[sigma^{-1} x].
                        for i in 0..m {
                            lat.coords_of(verts[i], &mut cx);
                            let mut z = vec![0i32; dim];
                            for slot in 0..dim {
                                z[slot] = signs[slot] * cx[perm[slot]];
                            }
                            let zi = lat.index_of(&z);
                            g[i * m + jj] = col[zi as usize];
                        }
                        done[jj] = true;
                    }
                }
            }
            _ => {
                for j in 0..m {
                    let col = green_column(window, prec, scratch, verts[j])?;
                    for i in 0..m {
                        g[i * m + j] = col[verts[i] as usize];
                    }
                }
            }
        }
        // Symmetrize (numerically) and factor.
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (g[i * m + j] + g[j * m + i]);
                g[i * m + j] = s;
                g[j * m + i] = s;
            }
        }
        let chol = if with_chol {
            let mut l = g.clone();
            linalg::cholesky_in_place(&mut l, m, true)?;
            Some(l)
        } else {
            None
        };
        Ok(RegionTable { vertices: verts, slot_of, g, chol })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn green(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.len() + j]
    }

    /// Equilibrium measure of a subset given by region slots; returns
    /// (weights, capacity, residual).
    pub fn equilibrium_of_slots(
        &self,
        slots: &[u32],
    ) -> Result<(Vec<f64>, f64, f64), PotentialError> {
        let m = slots.len();
        let mm = self.len();
        let mut gk = vec![0.0; m * m];
        for (ii, &si) in slots.iter().enumerate() {
            let row = &self.g[si as usize * mm..(si as usize + 1) * mm];
            for (jj, &sj) in slots.iter().enumerate() {
                gk[ii * m + jj] = row[sj as usize];
            }
        }
        let mut l = gk.clone();
        linalg::cholesky_in_place(&mut l, m, false)?;
        let mut e = vec![1.0; m];
        linalg::solve_lower(&l, m, &mut e);
        linalg::solve_lower_transpose(&l, m, &mut e);
        let mut pot = vec![0.0; m];
        linalg::sym_matvec(&gk, m, &e, &mut pot);
        let resid = pot.iter().map(|p| (p - 1.0).abs()).fold(0.0f64, f64::max);
        let cap = e.iter().sum();
        Ok((e, cap, resid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BuildBudget;
    use crate::graph::{ball, CsrGraph, WeightedGraph};
    use crate::rng::{Purpose, StreamId};

    fn synthetic_window(graph: WeightedGraph, center: Vertex) -> Window {
        Window {
            graph,
            center,
            interior_radius: 1,
            margin_factor: 2,
            id: "synthetic".into(),
        }
    }

    #[test]
    fn one_vertex_green() {
        let g = CsrGraph::from_edges(1, &[], vec![2.0], vec![0], 1).unwrap();
        let w = synthetic_window(WeightedGraph { topology: Topology::General(Box::new(g)) }, 0);
        let prec = Precision::build(&w).unwrap();
        let mut scratch = prec.make_scratch();
        let col = green_column(&w, &prec, &mut scratch, 0).unwrap();
        assert!((col[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn recurrent_window_refused() {
        let g = CsrGraph::from_edges(2, &[(0, 1, 1.0)], vec![0.0, 0.0], vec![0, 1], 1).unwrap();
        let w = synthetic_window(WeightedGraph { topology: Topology::General(Box::new(g)) }, 0);
        assert!(matches!(Precision::build(&w), Err(PotentialError::RecurrentWindow)));
    }

    #[test]
    fn green_symmetry_small_window() {
        let w = Window::lattice_box(3, 1, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let a = 3 as Vertex;
        let b = 77 as Vertex;
        let col_a = green_column(&w, &prec, &mut sc, a).unwrap();
        let col_b = green_column(&w, &prec, &mut sc, b).unwrap();
        assert!((col_a[b as usize] - col_b[a as usize]).abs() < 1e-10);
    }

    #[test]
    fn harmonic_identities() {
        let w = Window::lattice_box(3, 1, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        // Whole set: h = 1.
        let all: Vec<Vertex> = (0..w.graph.n_vertices() as Vertex).collect();
        let h = harmonic_potential(&w, &prec, &mut sc, &all).unwrap();
        assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        // Single vertex: h_{y}(x) = g(x,y)/g(y,y).
        let y = w.center;
        let h = harmonic_potential(&w, &prec, &mut sc, &[y]).unwrap();
        let col = green_column(&w, &prec, &mut sc, y).unwrap();
        for x in 0..w.graph.n_vertices() {
            let expect = col[x] / col[y as usize];
            assert!((h[x] - expect).abs() < 1e-9, "x={x}: {} vs {expect}", h[x]);
        }
        // Range check.
        assert!(h.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn harmonic_far_set_below_half() {
        // A small ball seen from far away on a Z^3 window has hitting
        // probability well below 1/2.
        let w = Window::lattice_box(3, 8, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let a = ball(&w, w.center, 2);
        let h = harmonic_potential(&w, &prec, &mut sc, &a).unwrap();
        let lat = match &w.graph.topology {
            Topology::Lattice(l) => l,
            _ => unreachable!(),
        };
        let x = lat.index_of(&[12, 0, 0]);
        assert!(h[x as usize] <= 0.5, "h = {}", h[x as usize]);
    }

    #[test]
    fn equilibrium_examples() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        // cap(empty) = 0.
        assert_eq!(capacity(&w, &prec, &mut sc, &[]).unwrap(), 0.0);
        // cap({x}) * g(x,x) = 1.
        let x = w.center;
        let cap_x = capacity(&w, &prec, &mut sc, &[x]).unwrap();
        let g_xx = green_column(&w, &prec, &mut sc, x).unwrap()[x as usize];
        assert!((cap_x * g_xx - 1.0).abs() < 1e-8);
        // Monotone under inclusion.
        let k1 = ball(&w, w.center, 1);
        let k2 = ball(&w, w.center, 2);
        let c1 = capacity(&w, &prec, &mut sc, &k1).unwrap();
        let c2 = capacity(&w, &prec, &mut sc, &k2).unwrap();
        assert!(cap_x < c1 && c1 < c2);
        // Equilibrium invariants on B(0,2).
        let eq = equilibrium_measure(&w, &prec, &mut sc, &k2).unwrap();
        assert!(eq.max_residual <= EQUILIBRIUM_TOL);
        assert!(eq.weight.iter().all(|&e| e >= -1e-12));
        // Interior members (here only the center) carry no mass.
        let slot = eq.support.binary_search(&w.center).unwrap();
        assert!(eq.weight[slot].abs() < 1e-10);
        // Boundary flag: B(0,2) does not touch the shell of a half=4 box,
        // but B(0,4) does.
        assert!(!eq.touches_boundary);
        let k4 = ball(&w, w.center, 4);
        assert!(equilibrium_measure(&w, &prec, &mut sc, &k4).unwrap().touches_boundary);
    }

    #[test]
    fn capacity_additive_upper_bound() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let k = ball(&w, w.center, 2);
        let cap = capacity(&w, &prec, &mut sc, &k).unwrap();
        let additive: f64 = k
            .iter()
            .map(|&v| w.graph.lambda_x(v) + w.graph.kappa(v))
            .sum();
        assert!(cap <= additive);
    }

    #[test]
    fn cap_volume_sandwich() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        // Singleton: lower bound is exact.
        let b = cap_volume_bounds(&w, &prec, &mut sc, &[w.center]).unwrap();
        assert!(b.ok);
        assert!((b.lower - b.capacity).abs() < 1e-9);
        // Ball: strict sandwich.
        let k = ball(&w, w.center, 2);
        let b = cap_volume_bounds(&w, &prec, &mut sc, &k).unwrap();
        assert!(b.ok);
        assert!(b.lower < b.capacity && b.capacity < b.upper);
    }

    #[test]
    fn pcg_equilibrium_matches_dense_tier() {
        // Force the PCG tier (set larger than DENSE_SET_LIMIT) on a spectral
        // window and compare against the dense route on the same set.
        let w = Window::lattice_box(3, 6, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let k = ball(&w, w.center, 10);
        assert!(k.len() > DENSE_SET_LIMIT);
        let eq = equilibrium_measure(&w, &prec, &mut sc, &k).unwrap();
        let g = gather_green_matrix(&w, &prec, &mut sc, &k).unwrap();
        let m = k.len();
        let mut l = g.clone();
        linalg::cholesky_in_place(&mut l, m, false).unwrap();
        let mut e = vec![1.0; m];
        linalg::solve_lower(&l, m, &mut e);
        linalg::solve_lower_transpose(&l, m, &mut e);
        let cap_dense: f64 = e.iter().sum();
        assert!(
            (eq.capacity - cap_dense).abs() < 1e-6 * cap_dense,
            "pcg {} dense {}",
            eq.capacity,
            cap_dense
        );
        assert!(eq.max_residual <= EQUILIBRIUM_TOL);
    }

    #[test]
    fn ball_capacity_growth_is_linear_in_r() {
        // cap(B(0,r)) ~ r on Z^3 (nu = 1), fitted over r in {4,...,16}.
        let w = Window::lattice_box(3, 16, 4, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let rs = [4u32, 8, 12, 16];
        let mut pts = Vec::new();
        for &r in &rs {
            let k = ball(&w, w.center, r);
            let cap = capacity(&w, &prec, &mut sc, &k).unwrap();
            pts.push(((r as f64).ln(), cap.ln()));
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 1.0).abs() < 0.2, "nu-hat {slope}");
    }

    #[test]
    fn killed_green_monotone() {
        // Green function of G_K is dominated by the Green function of G.
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let kset = ball(&w, w.center, 1);
        let killed = crate::graph::kill_set(&w, &kset);
        let kw = synthetic_window(killed.graph, 0);
        let kprec = Precision::build(&kw).unwrap();
        let mut ksc = kprec.make_scratch();
        let shared: Vec<Vertex> = (0..w.graph.n_vertices() as Vertex)
            .filter(|&v| killed.vertex_map[v as usize].is_some())
            .step_by(7)
            .collect();
        for &y in shared.iter().take(6) {
            let col = green_column(&w, &prec, &mut sc, y).unwrap();
            let ky = killed.vertex_map[y as usize].unwrap();
            let kcol = green_column(&kw, &kprec, &mut ksc, ky).unwrap();
            for &x in &shared {
                let kx = killed.vertex_map[x as usize].unwrap();
                assert!(
                    kcol[kx as usize] <= col[x as usize] + 1e-10,
                    "killed green exceeds free green"
                );
            }
        }
    }

    #[test]
    fn green_occupation_time_monte_carlo() {
        // g(x,y) = E_x[visits to y] / (lambda_y + kappa_y) on a 5^3 window.
        let w = Window::lattice_box(3, 1, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let x = w.center;
        let col = green_column(&w, &prec, &mut sc, x).unwrap();
        let n = w.graph.n_vertices();
        let walks = 200_000usize;
        let mut visits = vec![0u64; n];
        let mut s = StreamId::new(11, 0, Purpose::Walks).stream();
        for _ in 0..walks {
            let mut v = x;
            loop {
                visits[v as usize] += 1;
                let lam = w.graph.lambda_x(v);
                let kap = w.graph.kappa(v);
                let u = s.unit_f64() * (lam + kap);
                if u < kap {
                    break;
                }
                let target = u - kap;
                let mut acc = 0.0;
                let mut chosen = v;
                w.graph.for_each_neighbor(v, |nb, wt| {
                    if acc <= target {
                        chosen = nb;
                    }
                    acc += wt;
                });
                v = chosen;
            }
        }
        for &probe in &[x, 1, 31, 62, 100] {
            let lam_kap = w.graph.lambda_x(probe) + w.graph.kappa(probe);
            let est = visits[probe as usize] as f64 / walks as f64 / lam_kap;
            let se = ((est * lam_kap).max(1e-3) / walks as f64).sqrt() / lam_kap * 2.0;
            let diff = (est - col[probe as usize]).abs();
            assert!(diff < 4.0 * se + 2e-4, "probe {probe}: {est} vs {}", col[probe as usize]);
        }
    }

    #[test]
    fn region_table_matches_columns() {
        let w = Window::lattice_box(3, 2, 2, BuildBudget::default()).unwrap();
        let prec = Precision::build(&w).unwrap();
        let mut sc = prec.make_scratch();
        let region = ball(&w, w.center, 3);
        let table = RegionTable::build(&w, &prec, &mut sc, &region, false).unwrap();
        for (j, &vj) in table.vertices.iter().enumerate().step_by(5) {
            let col = green_column(&w, &prec, &mut sc, vj).unwrap();
            for (i, &vi) in table.vertices.iter().enumerate() {
                assert!(
                    (table.green(i, j) - col[vi as usize]).abs() < 1e-10,
                    "({i},{j}) table {} col {}",
                    table.green(i, j),
                    col[vi as usize]
                );
            }
        }
    }
}
