//! The symmetric ±1 jump process with unit flip rate.
//!
//! Paths are stored as an initial spin plus sorted jump times; everything the
//! functionals need (spin at a time, constant-spin intervals, Stieltjes sums
//! against the path) is evaluated exactly from that representation.

use std::fmt;
use std::ops::Neg;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flip(self) -> Spin {
        -self
    }

    pub fn from_sign(s: i32) -> Result<Spin> {
        match s {
            1 => Ok(Spin::Up),
            -1 => Ok(Spin::Down),
            _ => Err(Error::InvalidArgument(format!("spin must be ±1, got {s}"))),
        }
    }

    /// Block index in spin ⊗ Fock matrices: `+1 → 0`, `−1 → 1`.
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

impl Neg for Spin {
    type Output = Spin;
    fn neg(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Up => "1",
            Spin::Down => "-1",
        })
    }
}

/// Counter-based random stream: `(seed, index)` fully determines the draws.
///
/// Index `i` of an experiment always maps to the same ChaCha stream, so
/// sample `i` is identical whichever worker computes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Derives an independent seed for a named sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over the combined word
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One realization of the jump process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinPath {
    x0: Spin,
    horizon: f64,
    jumps: Vec<f64>,
}

/// A maximal interval `[start, end]` on which the path is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub spin: Spin,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl SpinPath {
    pub fn new(x0: Spin, horizon: f64, jumps: Vec<f64>) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be finite and >= 0, got {horizon}"
            )));
        }
        let mut prev = 0.0;
        for &t in &jumps {
            if !(t > prev && t <= horizon) {
                return Err(Error::InvalidArgument(format!(
                    "jump times must be strictly increasing in (0, {horizon}], got {t} after {prev}"
                )));
            }
            prev = t;
        }
        Ok(Self { x0, horizon, jumps })
    }

    pub fn constant(x0: Spin, horizon: f64) -> Result<Self> {
        Self::new(x0, horizon, Vec::new())
    }

    pub fn x0(&self) -> Spin {
        self.x0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    /// Number of jumps in `(0, t]`.
    pub fn jumps_until(&self, t: f64) -> usize {
        self.jumps.partition_point(|&s| s <= t)
    }

    /// The globally reflected path `−γ`.
    pub fn reflected(&self) -> SpinPath {
        SpinPath {
            x0: -self.x0,
            horizon: self.horizon,
            jumps: self.jumps.clone(),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        Ok(())
    }

    /// Constant-spin segments covering `[0, t]`, in time order.
    ///
    /// A jump exactly at `t` produces no trailing zero-length segment; the
    /// spin at `t` itself is available from [`spin_at`].
    pub fn segments(&self, t: f64) -> Result<Vec<Segment>> {
        self.check_time(t)?;
        let n = self.jumps_until(t);
        let mut out = Vec::with_capacity(n + 1);
        let mut start = 0.0;
        let mut spin = self.x0;
        for &tj in &self.jumps[..n] {
            out.push(Segment {
                start,
                end: tj,
                spin,
            });
            start = tj;
            spin = -spin;
        }
        if start < t || out.is_empty() {
            out.push(Segment { start, end: t, spin });
        }
        Ok(out)
    }
}

/// Samples a path with unit-rate exponential interarrival times.
pub fn sample_path(x0: Spin, horizon: f64, stream: &RngStream) -> Result<SpinPath> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )));
    }
    let mut rng = stream.rng();
    let mut jumps = Vec::new();
    let mut t = 0.0_f64;
    loop {
        let u: f64 = Open01.sample(&mut rng);
        let next = t - u.ln();
        if next > horizon {
            break;
        }
        // an increment below one ulp of t would break strict ordering
        if next > t {
            jumps.push(next);
            t = next;
        }
    }
    Ok(SpinPath { x0, horizon, jumps })
}

/// `p_t(x, y) = ½(1 + e^{−2t}δ_{x,y} − e^{−2t}δ_{x,−y})`.
pub fn transition_prob(t: f64, x: Spin, y: Spin) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let e = (-2.0 * t).exp();
    Ok(if x == y { 0.5 * (1.0 + e) } else { -0.5 * (-2.0 * t).exp_m1() })
}

/// Spin at time `t`, counting a jump at exactly `t` (right-continuity).
pub fn spin_at(path: &SpinPath, t: f64) -> Result<Spin> {
    path.check_time(t)?;
    Ok(if path.jumps_until(t) % 2 == 0 {
        path.x0
    } else {
        -path.x0
    })
}

/// Riemann–Stieltjes integral `∫_0^t f(r) dγ_r` as a sum over jumps in `(0, t]`.
///
/// The `j`-th jump (counted from 1) has increment `2·x0·(−1)^j`.
pub fn stieltjes_spin_integral(path: &SpinPath, f: impl Fn(f64) -> f64, t: f64) -> Result<f64> {
    path.check_time(t)?;
    let n = path.jumps_until(t);
    let mut sum = 0.0;
    let mut after = path.x0.sign();
    for &tj in &path.jumps[..n] {
        after = -after;
        sum += 2.0 * after * f(tj);
    }
    Ok(sum)
}

/// The time shift `γ ↦ γ(· + t)`, restricted to the remaining horizon.
pub fn shift_path(path: &SpinPath, t: f64) -> Result<SpinPath> {
    path.check_time(t)?;
    let x0 = spin_at(path, t)?;
    let k = path.jumps_until(t);
    let jumps = path.jumps[k..]
        .iter()
        .map(|&s| s - t)
        .filter(|&s| s > 0.0)
        .collect();
    Ok(SpinPath {
        x0,
        horizon: path.horizon - t,
        jumps,
    })
}

/// Text form `x0;horizon;t1,t2,...` used for path dumps.
impl fmt::Display for SpinPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};{:e};", self.x0, self.horizon)?;
        for (i, t) in self.jumps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t:e}")?;
        }
        Ok(())
    }
}

impl FromStr for SpinPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed path line `{s}`"));
        let mut parts = s.trim().splitn(3, ';');
        let x0: i32 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let horizon: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let rest = parts.next().ok_or_else(bad)?.trim();
        let jumps = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?
        };
        SpinPath::new(Spin::from_sign(x0)?, horizon, jumps)
    }
}
