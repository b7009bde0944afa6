//! Exact sampling of the discrete Gaussian free field on a window
//! (covariance = the window Green function), conditional sampling given
//! values on a set via the strong Markov property, and Cameron-Martin
//! tilted sampling.
//!
//! Determinism: all draws come from the (master seed, replica, Field)
//! stream. The spectral sampler consumes one normal per spectral
//! coefficient in row-major coefficient order; the dense and region
//! samplers consume one normal per vertex in vertex order. Streams are
//! documented so that seeds stay portable.

use crate::graph::{kill_set, Vertex, Window};
use crate::linalg;
use crate::potential::{
    equilibrium_measure, harmonic_potential, Backend, Precision, PotentialError, RegionTable,
    Scratch,
};
use crate::rng::{Purpose, Stream, StreamId};

#[derive(Debug, Clone)]
pub struct TiltRecord {
    pub shift: f64,
    pub target: Vec<Vertex>,
}

/// One realization of the field on a window, with provenance.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
    pub window_id: String,
    pub tilt: Option<TiltRecord>,
}

fn field_stream(seed: u64, replica: u64) -> Stream {
    StreamId::new(seed, replica, Purpose::Field).stream()
}

/// Exact centered sample with covariance Q^{-1}.
pub fn sample(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    seed: u64,
    replica: u64,
) -> Result<FieldSample, PotentialError> {
    let mut stream = field_stream(seed, replica);
    let mut values = vec![0.0; prec.n];
    sample_into(window, prec, scratch, &mut stream, &mut values)?;
    Ok(FieldSample {
        values,
        seed,
        replica,
        window_id: window.id.clone(),
        tilt: None,
    })
}

/// Lower-level entry point reusing caller buffers (the replica hot path).
pub fn sample_into(
    _window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    stream: &mut Stream,
    values: &mut [f64],
) -> Result<(), PotentialError> {
    match (&prec.backend, scratch) {
        (Backend::Spectral(s), Scratch::Spectral(sc)) => {
            s.sample_into(stream, values, sc);
            Ok(())
        }
        (Backend::Dense { l }, _) => {
            stream.fill_normals(values);
            // Q = L L^T, phi = L^{-T} z has covariance Q^{-1}.
            linalg::solve_lower_transpose(l, prec.n, values);
            Ok(())
        }
        (Backend::Iterative { .. }, _) => Err(PotentialError::NoExactSampler { n: prec.n }),
        _ => unreachable!("scratch kind mismatch"),
    }
}

/// Conditional sample given boundary values on K: the field equals the
/// prescribed values on K and (killed field + harmonic extension) off K.
/// Returns the sample on the original window indices together with the
/// flag for K touching the absorbing shell.
pub fn conditional_sample(
    window: &Window,
    k_set: &[Vertex],
    boundary_values: &[f64],
    seed: u64,
    replica: u64,
) -> Result<(FieldSample, bool), PotentialError> {
    assert_eq!(k_set.len(), boundary_values.len());
    assert!(!k_set.is_empty(), "conditioning set must be nonempty");
    assert!(boundary_values.iter().all(|v| v.is_finite()));
    let flagged = k_set.iter().any(|&v| window.graph.kappa(v) > 0.0);
    let killed = kill_set(window, k_set);
    let kw = Window {
        graph: killed.graph,
        center: 0,
        interior_radius: window.interior_radius,
        margin_factor: window.margin_factor,
        id: format!("{}-killed", window.id),
    };
    let kprec = Precision::build(&kw)?;
    let mut ksc = kprec.make_scratch();
    // Killed field on the survivors.
    let mut stream = field_stream(seed, replica);
    let mut killed_field = vec![0.0; kprec.n];
    sample_into(&kw, &kprec, &mut ksc, &mut stream, &mut killed_field)?;
    // Harmonic extension of the boundary data: solve Q_BB u = A_BK v.
    let mut rhs = vec![0.0; kprec.n];
    for (&kv, &val) in k_set.iter().zip(boundary_values) {
        window.graph.for_each_neighbor(kv, |u, w| {
            if let Some(nu) = killed.vertex_map[u as usize] {
                rhs[nu as usize] += w * val;
            }
        });
    }
    kprec.solve_in_place(&kw, &mut rhs, &mut ksc)?;
    // Assemble on original indices; vertices outside the surviving
    // component (only present if K disconnects the window) stay at zero.
    let mut values = vec![0.0; window.graph.n_vertices()];
    for (v, slot) in killed.vertex_map.iter().enumerate() {
        if let Some(nv) = slot {
            values[v] = killed_field[*nv as usize] + rhs[*nv as usize];
        }
    }
    for (&kv, &val) in k_set.iter().zip(boundary_values) {
        values[kv as usize] = val;
    }
    Ok((
        FieldSample {
            values,
            seed,
            replica,
            window_id: window.id.clone(),
            tilt: None,
        },
        flagged || killed.disconnected,
    ))
}

/// phi + b * h_A: the Cameron-Martin shift along the harmonic potential.
pub fn tilted_sample(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    shift: f64,
    a_set: &[Vertex],
    seed: u64,
    replica: u64,
) -> Result<FieldSample, PotentialError> {
    assert!(!a_set.is_empty(), "tilt target must be nonempty");
    let h = harmonic_potential(window, prec, scratch, a_set)?;
    let mut s = sample(window, prec, scratch, seed, replica)?;
    apply_tilt(&mut s, shift, a_set, &h);
    Ok(s)
}

/// Adds b*h to an existing sample and records the tilt.
pub fn apply_tilt(sample: &mut FieldSample, shift: f64, a_set: &[Vertex], h: &[f64]) {
    for (v, hv) in sample.values.iter_mut().zip(h) {
        *v += shift * hv;
    }
    sample.tilt = Some(TiltRecord { shift, target: a_set.to_vec() });
}

/// Lower bound of the change-of-measure inequality: given the tilted
/// probability of an event and the tilt parameters, the untilted
/// probability is at least p_tilt * exp(-(b^2 cap(A) + 2/e) / (2 p_tilt)).
pub fn entropy_lower_bound(p_tilted: f64, shift: f64, cap_a: f64) -> f64 {
    if p_tilted <= 0.0 {
        return 0.0;
    }
    p_tilted
        * (-(shift * shift * cap_a + 2.0 / std::f64::consts::E) / (2.0 * p_tilted)).exp()
}

/// Marginal sampler on a sub-region, exact through the dense Cholesky
/// factor of the region Green matrix. Values are aligned with
/// `table.vertices`; one normal per region vertex, in that order.
pub struct RegionSampler<'t> {
    pub table: &'t RegionTable,
}

impl<'t> RegionSampler<'t> {
    pub fn new(table: &'t RegionTable) -> RegionSampler<'t> {
        assert!(table.chol.is_some(), "region table must be built with a factor");
        RegionSampler { table }
    }

    pub fn sample_into(&self, stream: &mut Stream, scratch: &mut [f64], out: &mut [f64]) {
        let m = self.table.len();
        debug_assert_eq!(out.len(), m);
        debug_assert_eq!(scratch.len(), m);
        stream.fill_normals(scratch);
        let l = self.table.chol.as_ref().unwrap();
        linalg::lower_matvec(l, m, scratch, out);
    }
}

/// Raw-field dump: binary row-major little-endian f64 array next to a
/// JSON sidecar carrying seed, window id and the tilt record.
pub fn dump_field(sample: &FieldSample, path_base: &std::path::Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut bin = std::io::BufWriter::new(std::fs::File::create(
        path_base.with_extension("f64"),
    )?);
    for v in &sample.values {
        bin.write_all(&v.to_le_bytes())?;
    }
    bin.flush()?;
    let sidecar = serde_json::json!({
        "seed": sample.seed,
        "replica": sample.replica,
        "window": sample.window_id,
        "values": sample.values.len(),
        "dtype": "f64-le",
        "tilt": sample.tilt.as_ref().map(|t| serde_json::json!({
            "shift": t.shift,
            "target": t.target,
        })),
    });
    std::fs::write(
        path_base.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )
}

/// E[phi_x | phi_y = v] = v * g(x,y)/g(y,y), for every x.
pub fn single_point_conditional_mean(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    y: Vertex,
    value: f64,
) -> Result<Vec<f64>, PotentialError> {
    let col = crate::potential::green_column(window, prec, scratch, y)?;
    let gyy = col[y as usize];
    Ok(col.iter().map(|&g| value * g / gyy).collect())
}

/// Capacity helper used by tilted-sampling tests.
pub fn capacity_of(
    window: &Window,
    prec: &Precision,
    scratch: &mut Scratch,
    set: &[Vertex],
) -> Result<f64, PotentialError> {
    Ok(equilibrium_measure(window, prec, scratch, set)?.capacity)
}
