//! Counter-based random number generation.
//!
//! Every random quantity in a run is a pure function of
//! `(master seed, replica index, purpose tag, counter)`, so replicas can be
//! generated in any order, on any number of workers, with identical output.
//! The generator is Philox4x32-10; Gaussians come from a 128-layer ziggurat
//! whose draws are consumed in a fixed, documented order (one sequential
//! stream per purpose, values in vertex/coefficient order).

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Stable tags for the independent random streams of one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Gaussian coefficients / field values.
    Field,
    /// Per-edge percolation uniforms (indexed, one block per edge).
    Edges,
    /// Random walk steps of interlacement trajectories.
    Walks,
    /// Poisson counts and launch-point selection.
    PointProcess,
    /// Bootstrap resampling inside estimators.
    Bootstrap,
    /// Anything test-local.
    Test,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Field => 0x11,
            Purpose::Edges => 0x22,
            Purpose::Walks => 0x33,
            Purpose::PointProcess => 0x44,
            Purpose::Bootstrap => 0x55,
            Purpose::Test => 0x66,
        }
    }
}

#[inline(always)]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline(always)]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let p0 = (PHILOX_M0 as u64).wrapping_mul(ctr[0] as u64);
    let p1 = (PHILOX_M1 as u64).wrapping_mul(ctr[2] as u64);
    [
        (p1 >> 32) as u32 ^ ctr[1] ^ key[0],
        p1 as u32,
        (p0 >> 32) as u32 ^ ctr[3] ^ key[1],
        p0 as u32,
    ]
}

/// One Philox4x32-10 block.
#[inline]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for _ in 0..10 {
        ctr = philox_round(ctr, key);
        key[0] = key[0].wrapping_add(PHILOX_W0);
        key[1] = key[1].wrapping_add(PHILOX_W1);
    }
    ctr
}

/// Identifies one logical stream; cheap to construct.
#[derive(Debug, Clone, Copy)]
pub struct StreamId {
    key: [u32; 2],
    sid: u64,
}

impl StreamId {
    pub fn new(master_seed: u64, replica: u64, purpose: Purpose) -> Self {
        let sid = splitmix64(replica ^ splitmix64(purpose.tag()));
        StreamId {
            key: [master_seed as u32, (master_seed >> 32) as u32],
            sid,
        }
    }

    /// Distinct sub-stream for callers that need several independent
    /// streams of the same purpose within one replica.
    pub fn with_sub(master_seed: u64, replica: u64, purpose: Purpose, sub: u64) -> Self {
        let sid = splitmix64(replica ^ splitmix64(purpose.tag() ^ splitmix64(sub | 1 << 63)));
        StreamId {
            key: [master_seed as u32, (master_seed >> 32) as u32],
            sid,
        }
    }

    /// Random block at an explicit index, without any sequential state.
    /// Used for per-edge uniforms: the "cache" of edge uniforms is this
    /// pure function of the edge index.
    #[inline]
    pub fn indexed_u64(&self, index: u64) -> u64 {
        let out = philox4x32(
            [
                index as u32,
                (index >> 32) as u32,
                self.sid as u32,
                (self.sid >> 32) as u32,
            ],
            self.key,
        );
        (out[0] as u64) << 32 | out[1] as u64
    }

    #[inline]
    pub fn indexed_unit_f64(&self, index: u64) -> f64 {
        u64_to_unit_f64(self.indexed_u64(index))
    }

    pub fn stream(&self) -> Stream {
        Stream {
            id: *self,
            ctr: 0,
            buf: [0; 2],
            avail: 0,
        }
    }
}

/// Maps to [0,1) with 53-bit resolution.
#[inline(always)]
pub fn u64_to_unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential view of a stream; counter space is 2^64 blocks of 128 bits.
#[derive(Debug, Clone)]
pub struct Stream {
    id: StreamId,
    ctr: u64,
    buf: [u64; 2],
    avail: u8,
}

impl Stream {
    #[inline(always)]
    fn refill(&mut self) {
        let b = philox4x32(
            [
                self.ctr as u32,
                (self.ctr >> 32) as u32,
                self.id.sid as u32,
                (self.id.sid >> 32) as u32,
            ],
            self.id.key,
        );
        self.ctr = self.ctr.wrapping_add(1);
        self.buf = [
            (b[2] as u64) << 32 | b[3] as u64,
            (b[0] as u64) << 32 | b[1] as u64,
        ];
        self.avail = 2;
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        if self.avail == 0 {
            self.refill();
        }
        self.avail -= 1;
        self.buf[self.avail as usize]
    }

    /// Uniform in [0,1).
    #[inline]
    pub fn unit_f64(&mut self) -> f64 {
        u64_to_unit_f64(self.next_u64())
    }

    /// Uniform in (0,1]; safe to feed into ln().
    #[inline]
    pub fn unit_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential via inversion.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.unit_f64_open().ln()
    }

    /// Standard normal (ziggurat).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        zig_normal(self)
    }

    /// Fills a slice with standard normals, in order.
    pub fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = zig_normal(self);
        }
    }

    /// Poisson(mean) as the number of unit-exponential arrivals before `mean`.
    /// Exact for any mean; cost is O(mean) draws.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean >= 0.0 && mean.is_finite());
        let mut acc = 0.0;
        let mut k = 0u64;
        loop {
            acc += self.exponential();
            if acc > mean {
                return k;
            }
            k += 1;
        }
    }

    /// Uniform index in [0, n).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        // 128-bit multiply rejection-free map; bias < 2^-64, irrelevant here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

// ---------------------------------------------------------------------------
// Ziggurat tables for the standard normal, 128 layers.
// ---------------------------------------------------------------------------

const ZIG_LAYERS: usize = 128;
const ZIG_R: f64 = 3.442619855899;
const ZIG_V: f64 = 9.91256303526217e-3;

/// x[0] = v/f(r) > r is the virtual edge of the base strip; x[1] = r;
/// x[i] decreases to x[128] = 0. y[i] = exp(-x[i]^2/2).
struct ZigTables {
    x: [f64; ZIG_LAYERS + 1],
    y: [f64; ZIG_LAYERS + 1],
}

fn build_zig_tables() -> ZigTables {
    let f = |x: f64| (-0.5 * x * x).exp();
    let mut x = [0.0; ZIG_LAYERS + 1];
    x[0] = ZIG_V / f(ZIG_R);
    x[1] = ZIG_R;
    for i in 2..ZIG_LAYERS {
        let yi = f(x[i - 1]) + ZIG_V / x[i - 1];
        x[i] = (-2.0 * yi.ln()).sqrt();
    }
    x[ZIG_LAYERS] = 0.0;
    // The construction must close: the last strip's top edge reaches f(0)=1.
    let top = f(x[ZIG_LAYERS - 1]) + ZIG_V / x[ZIG_LAYERS - 1];
    assert!((top - 1.0).abs() < 1e-8, "ziggurat table did not close: {top}");
    let mut y = [0.0; ZIG_LAYERS + 1];
    for i in 0..=ZIG_LAYERS {
        y[i] = f(x[i]);
    }
    ZigTables { x, y }
}

fn zig_tables() -> &'static ZigTables {
    use std::sync::OnceLock;
    static TABLES: OnceLock<ZigTables> = OnceLock::new();
    TABLES.get_or_init(build_zig_tables)
}

#[inline]
fn zig_normal(stream: &mut Stream) -> f64 {
    let t = zig_tables();
    loop {
        // Low 7 bits pick the layer, bit 7 the sign, top 53 bits the mantissa.
        let bits = stream.next_u64();
        let i = (bits & 0x7F) as usize;
        let sign = if bits & 0x80 != 0 { -1.0 } else { 1.0 };
        let u = u64_to_unit_f64(bits);
        let x = u * t.x[i];
        if x < t.x[i + 1] {
            return sign * x;
        }
        if i == 0 {
            // Marsaglia tail beyond R.
            loop {
                let xt = stream.exponential() / ZIG_R;
                let yt = stream.exponential();
                if 2.0 * yt >= xt * xt {
                    return sign * (ZIG_R + xt);
                }
            }
        }
        // Wedge between x[i+1] and x[i].
        let yv = t.y[i] + stream.unit_f64() * (t.y[i + 1] - t.y[i]);
        if yv < (-0.5 * x * x).exp() {
            return sign * x;
        }
    }
}
