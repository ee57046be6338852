//! Monte Carlo estimators for the Feynman–Kac representation of the
//! renormalized semigroup.
//!
//! Path `i` of an experiment is drawn from `RngStream::new(seed, i)`. Paths are
//! processed in fixed chunks of [`CHUNK_SIZE`] and the per-chunk statistics
//! are merged in chunk order, so results are bit-identical for any number of
//! workers. Exponential weights are accumulated relative to the chunk maximum
//! of their logarithm.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{coherent_vector, enumerate_basis, h_ren_matrix, SpinFockVector};
use crate::functionals::{phase_u, u_minus, u_plus};
use crate::grid::{cutoff_family, FormFactor, ModeGrid};
use crate::path::{derive_seed, sample_path, shift_path, spin_at, RngStream, Spin, SpinPath};
use crate::quad::gauss_legendre_on;

pub const CHUNK_SIZE: u64 = 4096;
/// Number of Gauss–Legendre nodes in the time quadrature of the Stieltjes check.
pub const STIELTJES_NODES: usize = 64;
/// Paths used for the per-path cocycle part of [`Engine::semigroup_check`].
pub const COCYCLE_PATHS: u64 = 1000;

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub mean: f64,
    /// Bessel-corrected sample standard deviation over `√n`.
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// `ln(mean)`, kept separately because weights may over/underflow.
    pub log_mean: f64,
    pub metadata: BTreeMap<String, String>,
}

impl EstimatorResult {
    fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    /// `|mean − reference|` in units of `stderr` (0 when both vanish).
    pub fn sigmas_from(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

/// Welford accumulator with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct LinearStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl LinearStats {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn merge(&mut self, o: &LinearStats) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (n1, n2) = (self.n as f64, o.n as f64);
        let n = n1 + n2;
        let d = o.mean - self.mean;
        self.mean += d * n2 / n;
        self.m2 += o.m2 + d * d * n1 * n2 / n;
        self.n += o.n;
    }

    fn scale(&mut self, a: f64) {
        self.mean *= a;
        self.m2 *= a * a;
    }

    pub(crate) fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
    }

    fn result(&self, seed: u64) -> EstimatorResult {
        EstimatorResult {
            mean: self.mean,
            stderr: self.stderr(),
            n_samples: self.n,
            seed,
            log_mean: self.mean.ln(),
            metadata: BTreeMap::new(),
        }
    }
}

/// Statistics of `e^{l}` stored as `e^{shift}` times a [`LinearStats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogStats {
    shift: f64,
    lin: LinearStats,
}

impl LogStats {
    fn empty() -> Self {
        Self {
            shift: f64::NEG_INFINITY,
            lin: LinearStats::default(),
        }
    }

    /// Accumulates a batch of log-values; `−∞` stands for a zero weight.
    pub(crate) fn from_logs(logs: &[f64]) -> Self {
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = if m.is_finite() { m } else { 0.0 };
        let mut lin = LinearStats::default();
        for &l in logs {
            lin.push((l - shift).exp());
        }
        Self { shift, lin }
    }

    pub(crate) fn merge(&mut self, o: &LogStats) {
        if o.lin.n == 0 {
            return;
        }
        if self.lin.n == 0 {
            *self = *o;
            return;
        }
        let m = self.shift.max(o.shift);
        let mut other = o.lin;
        self.lin.scale((self.shift - m).exp());
        other.scale((o.shift - m).exp());
        self.lin.merge(&other);
        self.shift = m;
    }

    fn result(&self, seed: u64) -> EstimatorResult {
        let s = self.shift.exp();
        EstimatorResult {
            mean: self.lin.mean * s,
            stderr: self.lin.stderr() * s,
            n_samples: self.lin.n,
            seed,
            log_mean: self.lin.mean.ln() + self.shift,
            metadata: BTreeMap::new(),
        }
    }
}

fn check_n(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 samples, got {n}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn check_real(values: &[f64], grid: &ModeGrid, what: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// `ln` of the coherent path weight
/// `u_t − ⟨U_t^−, h⟩ − ⟨g, U_t^+⟩ + ⟨g, e^{−tω} h⟩`.
pub fn log_path_weight_coherent(
    path: &SpinPath,
    t: f64,
    grid: &ModeGrid,
    v: &FormFactor,
    g: &[f64],
    h: &[f64],
) -> Result<f64> {
    if !v.is_real() {
        return Err(Error::ComplexInput);
    }
    check_real(g, grid, "g")?;
    check_real(h, grid, "h")?;
    let u = phase_u(path, t, grid, v)?.u;
    if v.is_zero() {
        return Ok(u + free_pairing(grid, g, h, t));
    }
    let plus = u_plus(path, t, grid, v)?.re();
    let minus = u_minus(path, t, grid, v)?.re();
    Ok(u - grid.inner_real(&minus, h) - grid.inner_real(g, &plus) + free_pairing(grid, g, h, t))
}

fn free_pairing(grid: &ModeGrid, g: &[f64], h: &[f64], t: f64) -> f64 {
    grid.weights()
        .iter()
        .zip(grid.omegas())
        .zip(g.iter().zip(h))
        .map(|((&w, &om), (&a, &b))| w * a * b * (-t * om).exp())
        .sum()
}

/// `⟨ε(g), W_t(v)(γ) ε(h)⟩` for real `v`, `g`, `h`.
pub fn path_weight_coherent(
    path: &SpinPath,
    t: f64,
    grid: &ModeGrid,
    v: &FormFactor,
    g: &[f64],
    h: &[f64],
) -> Result<f64> {
    Ok(log_path_weight_coherent(path, t, grid, v, g, h)?.exp())
}

/// `|ln W_{t+s} − ln(W_t ∘ (W_s∘τ_t))|` on coherent vectors, composing the
/// two pieces through their action `W_s ε(h) = e^{u_s − ⟨U_s^−,h⟩} ε(e^{−sω}h − U_s^+)`.
pub fn cocycle_residual(
    path: &SpinPath,
    t: f64,
    s: f64,
    grid: &ModeGrid,
    v: &FormFactor,
    g: &[f64],
    h: &[f64],
) -> Result<f64> {
    let direct = log_path_weight_coherent(path, t + s, grid, v, g, h)?;
    let tail = shift_path(path, t)?;
    let plus = u_plus(&tail, s, grid, v)?.re();
    let minus = u_minus(&tail, s, grid, v)?.re();
    let inner_phase = phase_u(&tail, s, grid, v)?.u - grid.inner_real(&minus, h);
    let moved: Vec<f64> = h
        .iter()
        .zip(grid.omegas())
        .zip(&plus)
        .map(|((&h, &om), &p)| (-s * om).exp() * h - p)
        .collect();
    let outer = log_path_weight_coherent(path, t, grid, v, g, &moved)?;
    Ok((direct - inner_phase - outer).abs())
}

/// Matrix-element request `⟨δ_{x_out} ε(g), e^{−tH} δ_{x_in} ε(h)⟩`-style,
/// read through the Feynman–Kac formula: paths start at `x_in` and the
/// optional indicator selects `X_t = x_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpec {
    pub x_in: Spin,
    pub x_out: Option<Spin>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub t: f64,
}

/// One point of the vacuum-amplitude curve used in a ground-energy fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudePoint {
    pub t: f64,
    pub amplitude: EstimatorResult,
    /// `−ln(amplitude)`.
    pub neg_log: f64,
    /// Propagated `stderr/amplitude`.
    pub neg_log_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundEnergyFit {
    /// Weighted least-squares slope of `−ln amplitude` over the fit window.
    pub energy: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Number of trailing points in the fit window.
    pub fit_points: usize,
    pub chi2: f64,
    pub points: Vec<AmplitudePoint>,
}

/// Weighted straight-line fit of `y` on `x`; returns `(slope, slope_stderr,
/// intercept, chi2)`. Zero sigmas are treated as equal weights.
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64, f64, f64) {
    let floor = sigma
        .iter()
        .copied()
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = sigma
        .iter()
        .map(|&s| {
            if floor.is_finite() {
                1.0 / s.max(floor * 1e-3).powi(2)
            } else {
                1.0
            }
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((x, y), w)| w * (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = if floor.is_finite() { (1.0 / sxx).sqrt() } else { 0.0 };
    (slope, stderr, intercept, chi2)
}

/// Per-path cocycle residual plus a statistical comparison of the MC matrix
/// element at `t + s` with the exact-diagonalization product `E(t)E(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupReport {
    pub max_cocycle_residual: f64,
    pub mc: EstimatorResult,
    pub ed: f64,
    pub sigmas: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormRow {
    pub lambda: f64,
    pub amplitude: EstimatorResult,
    /// `max_paths |u_t(v_Λ) − u_t(v)|`.
    pub max_u_dev: f64,
    pub mean_u_dev: f64,
    /// `‖(v − v_Λ)/ω‖`.
    pub cut_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormSweep {
    /// Amplitude for the uncut form factor on the same paths.
    pub reference: EstimatorResult,
    pub rows: Vec<RenormRow>,
}

/// Two estimators of `E^x[∫_0^t s df(X_s)]`: exact per-path jump sums and a
/// Gauss–Legendre time quadrature of `−E^x[s(f(X_s) − f(−X_s))]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StieltjesReport {
    pub t: f64,
    pub jump: EstimatorResult,
    pub quadrature: EstimatorResult,
    /// Closed form `−(f(x) − f(−x))(1 − e^{−2t}(1 + 2t))/4`.
    pub exact: f64,
    pub difference: f64,
    pub pooled_sigma: f64,
}

impl StieltjesReport {
    pub fn agrees(&self, k: f64) -> bool {
        self.difference <= k * self.pooled_sigma
    }
}

/// Runs estimators on a fixed number of workers.
#[derive(Debug, Clone)]
pub struct Engine {
    workers: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Default for Engine {
    fn default() -> Self {
        Self {
            workers: 0,
            pool: None,
        }
    }
}

impl Engine {
    /// `workers = 0` uses the global rayon pool.
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Ok(Self::default());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Self {
            workers,
            pool: Some(Arc::new(pool)),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Applies `f` to every chunk `[start, end)` of `0..n`, results in chunk
    /// order.
    fn chunks<A, F>(&self, n: u64, f: F) -> Result<Vec<A>>
    where
        A: Send,
        F: Fn(u64, u64) -> Result<A> + Sync + Send,
    {
        let n_chunks = n.div_ceil(CHUNK_SIZE);
        let run = || {
            (0..n_chunks)
                .into_par_iter()
                .map(|c| f(c * CHUNK_SIZE, ((c + 1) * CHUNK_SIZE).min(n)))
                .collect::<Result<Vec<A>>>()
        };
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }

    fn log_mean<F>(&self, n: u64, f: F) -> Result<LogStats>
    where
        F: Fn(u64) -> Result<f64> + Sync + Send,
    {
        let parts = self.chunks(n, |a, b| {
            let logs = (a..b).map(&f).collect::<Result<Vec<f64>>>()?;
            Ok(LogStats::from_logs(&logs))
        })?;
        let mut acc = LogStats::empty();
        for p in &parts {
            acc.merge(p);
        }
        Ok(acc)
    }

    fn linear_mean<F>(&self, n: u64, f: F) -> Result<LinearStats>
    where
        F: Fn(u64) -> Result<f64> + Sync + Send,
    {
        let parts = self.chunks(n, |a, b| {
            let mut s = LinearStats::default();
            for i in a..b {
                s.push(f(i)?);
            }
            Ok(s)
        })?;
        let mut acc = LinearStats::default();
        for p in &parts {
            acc.merge(p);
        }
        Ok(acc)
    }

    /// Per-path values in path order.
    pub fn map_paths<A, F>(&self, n: u64, f: F) -> Result<Vec<A>>
    where
        A: Send,
        F: Fn(u64) -> Result<A> + Sync + Send,
    {
        let parts = self.chunks(n, |a, b| (a..b).map(&f).collect::<Result<Vec<A>>>())?;
        Ok(parts.into_iter().flatten().collect())
    }

    /// Max of a per-path quantity, evaluated on the same streams as the
    /// estimators.
    pub fn max_over_paths<F>(&self, n: u64, f: F) -> Result<f64>
    where
        F: Fn(u64) -> Result<f64> + Sync + Send,
    {
        let parts = self.chunks(n, |a, b| {
            let mut m: f64 = 0.0;
            for i in a..b {
                m = m.max(f(i)?);
            }
            Ok(m)
        })?;
        Ok(parts.into_iter().fold(0.0, f64::max))
    }

    /// Mean of `1{X_t = x_out}·⟨ε(g), W_t ε(h)⟩` under `ℙ^{x_in}`.
    pub fn estimate_amplitude(
        &self,
        spec: &AmplitudeSpec,
        grid: &ModeGrid,
        v: &FormFactor,
        n: u64,
        seed: u64,
    ) -> Result<EstimatorResult> {
        check_n(n)?;
        check_time(spec.t)?;
        if !v.is_real() {
            return Err(Error::ComplexInput);
        }
        check_real(&spec.g, grid, "g")?;
        check_real(&spec.h, grid, "h")?;
        let stats = self.log_mean(n, |i| {
            let path = sample_path(spec.x_in, spec.t, &RngStream::new(seed, i))?;
            if let Some(y) = spec.x_out {
                if spin_at(&path, spec.t)? != y {
                    return Ok(f64::NEG_INFINITY);
                }
            }
            log_path_weight_coherent(&path, spec.t, grid, v, &spec.g, &spec.h)
        })?;
        let out = match spec.x_out {
            Some(y) => y.to_string(),
            None => "sum".into(),
        };
        Ok(stats
            .result(seed)
            .note("op", "amplitude")
            .note("t", spec.t)
            .note("x_in", spec.x_in)
            .note("x_out", out)
            .note("n_modes", grid.len()))
    }

    /// `⟨Ω̂_↓, e^{−tH} Ω̂_↓⟩ = ½ Σ_x E^x[e^{u_t}]`; path `i` starts at `+1` for
    /// even `i` and `−1` for odd `i`.
    pub fn vacuum_amplitude(&self, t: f64, grid: &ModeGrid, v: &FormFactor, n: u64, seed: u64) -> Result<EstimatorResult> {
        check_n(n)?;
        check_time(t)?;
        if v.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: v.len(),
            });
        }
        let stats = self.log_mean(n, |i| {
            let x0 = if i % 2 == 0 { Spin::Up } else { Spin::Down };
            let path = sample_path(x0, t, &RngStream::new(seed, i))?;
            Ok(phase_u(&path, t, grid, v)?.u)
        })?;
        Ok(stats
            .result(seed)
            .note("op", "vacuum")
            .note("t", t)
            .note("n_modes", grid.len()))
    }

    /// Ground-energy estimate from the large-`t` slope of `−ln` of the vacuum
    /// amplitude. Each time point uses an independent seed.
    ///
    /// The finite-`t` bias decays like `e^{−gap·t}`; it is not corrected.
    pub fn ground_energy(
        &self,
        grid: &ModeGrid,
        v: &FormFactor,
        t_grid: &[f64],
        n: u64,
        seed: u64,
    ) -> Result<GroundEnergyFit> {
        if t_grid.len() < 3 {
            return Err(Error::InvalidArgument("ground-energy fit needs at least 3 times".into()));
        }
        if t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        let mut points = Vec::with_capacity(t_grid.len());
        for (i, &t) in t_grid.iter().enumerate() {
            let amp = self.vacuum_amplitude(t, grid, v, n, derive_seed(seed, i as u64))?;
            if amp.mean <= 3.0 * amp.stderr {
                return Err(Error::UnstableEstimate {
                    t,
                    mean: amp.mean,
                    stderr: amp.stderr,
                });
            }
            points.push(AmplitudePoint {
                t,
                neg_log: -amp.log_mean,
                neg_log_stderr: amp.stderr / amp.mean,
                amplitude: amp,
            });
        }
        let k = (points.len().div_ceil(2)).max(3).min(points.len());
        let window = &points[points.len() - k..];
        let x: Vec<f64> = window.iter().map(|p| p.t).collect();
        let y: Vec<f64> = window.iter().map(|p| p.neg_log).collect();
        let s: Vec<f64> = window.iter().map(|p| p.neg_log_stderr).collect();
        let (energy, stderr, intercept, chi2) = weighted_line_fit(&x, &y, &s);
        Ok(GroundEnergyFit {
            energy,
            stderr,
            intercept,
            fit_points: k,
            chi2,
            points,
        })
    }

    /// `amp(t)²/amp(2t)` with independent streams for the two amplitudes and
    /// a delta-method standard error.
    pub fn overlap_ratio(&self, grid: &ModeGrid, v: &FormFactor, t: f64, n: u64, seed: u64) -> Result<EstimatorResult> {
        let num = self.vacuum_amplitude(t, grid, v, n, derive_seed(seed, 1))?;
        let den = self.vacuum_amplitude(2.0 * t, grid, v, n, derive_seed(seed, 2))?;
        if den.mean <= 3.0 * den.stderr {
            return Err(Error::UnstableEstimate {
                t: 2.0 * t,
                mean: den.mean,
                stderr: den.stderr,
            });
        }
        let log_ratio = 2.0 * num.log_mean - den.log_mean;
        let ratio = log_ratio.exp();
        let rel = ((2.0 * num.stderr / num.mean).powi(2) + (den.stderr / den.mean).powi(2)).sqrt();
        Ok(EstimatorResult {
            mean: ratio,
            stderr: ratio * rel,
            n_samples: n,
            seed,
            log_mean: log_ratio,
            metadata: BTreeMap::new(),
        }
        .note("op", "overlap")
        .note("t", t)
        .note("numerator", num.mean)
        .note("numerator_stderr", num.stderr)
        .note("denominator", den.mean)
        .note("denominator_stderr", den.stderr))
    }

    /// Cocycle residual over [`COCYCLE_PATHS`] paths plus the MC-vs-ED
    /// comparison of `⟨δ_{+1} ε(g), e^{−(t+s)H} Σ_y δ_y ε(h)⟩` on a Fock space
    /// with total boson number at most `cap`.
    #[allow(clippy::too_many_arguments)]
    pub fn semigroup_check(
        &self,
        grid: &ModeGrid,
        v: &FormFactor,
        t: f64,
        s: f64,
        g: &[f64],
        h: &[f64],
        n: u64,
        seed: u64,
        cap: usize,
    ) -> Result<SemigroupReport> {
        check_time(t)?;
        check_time(s)?;
        if !v.is_real() {
            return Err(Error::ComplexInput);
        }
        let cocycle_seed = derive_seed(seed, 1);
        let max_cocycle_residual = self.max_over_paths(COCYCLE_PATHS, |i| {
            let x0 = if i % 2 == 0 { Spin::Up } else { Spin::Down };
            let path = sample_path(x0, t + s, &RngStream::new(cocycle_seed, i))?;
            cocycle_residual(&path, t, s, grid, v, g, h)
        })?;

        let spec = AmplitudeSpec {
            x_in: Spin::Up,
            x_out: None,
            g: g.to_vec(),
            h: h.to_vec(),
            t: t + s,
        };
        let mc = self.estimate_amplitude(&spec, grid, v, n, derive_seed(seed, 2))?;

        let space = enumerate_basis(grid.len(), cap)?;
        let hm = h_ren_matrix(v, grid, &space)?;
        let spectrum = hm.spectrum()?;
        let product = spectrum.semigroup(t).mul(&spectrum.semigroup(s));
        let to_c = |x: &[f64]| x.iter().map(|&r| Complex64::new(r, 0.0)).collect::<Vec<_>>();
        let eg = coherent_vector(&to_c(g), grid, &space)?;
        let eh = coherent_vector(&to_c(h), grid, &space)?;
        let bra = SpinFockVector::localized(Spin::Up, &eg.coeffs).flat();
        let ket = SpinFockVector {
            up: eh.coeffs.clone(),
            down: eh.coeffs,
        }
        .flat();
        let ed = bra.dotc(&product.apply(&ket)).re;
        let sigmas = mc.sigmas_from(ed);
        Ok(SemigroupReport {
            max_cocycle_residual,
            mc: mc.note("cap", cap),
            ed,
            sigmas,
        })
    }

    /// Vacuum amplitudes for `v·1{ω ≤ Λ}` on common random numbers, together
    /// with per-path phase deviations from the uncut `v`.
    pub fn renorm_sweep(
        &self,
        grid: &ModeGrid,
        v: &FormFactor,
        lambdas: &[f64],
        t: f64,
        n: u64,
        seed: u64,
    ) -> Result<RenormSweep> {
        check_n(n)?;
        check_time(t)?;
        if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("cutoffs must be non-empty and strictly increasing".into()));
        }
        let cut: Vec<FormFactor> = lambdas
            .iter()
            .map(|&l| cutoff_family(v, grid, l))
            .collect::<Result<_>>()?;
        let m = lambdas.len();

        struct Part {
            reference: LogStats,
            amps: Vec<LogStats>,
            max_dev: Vec<f64>,
            sum_dev: Vec<f64>,
        }

        let parts = self.chunks(n, |a, b| {
            let mut base = Vec::with_capacity((b - a) as usize);
            let mut logs = vec![Vec::with_capacity((b - a) as usize); m];
            let mut max_dev = vec![0.0f64; m];
            let mut sum_dev = vec![0.0f64; m];
            for i in a..b {
                let x0 = if i % 2 == 0 { Spin::Up } else { Spin::Down };
                let path = sample_path(x0, t, &RngStream::new(seed, i))?;
                let u = phase_u(&path, t, grid, v)?.u;
                base.push(u);
                for (j, vl) in cut.iter().enumerate() {
                    let ul = phase_u(&path, t, grid, vl)?.u;
                    let dev = (ul - u).abs();
                    max_dev[j] = max_dev[j].max(dev);
                    sum_dev[j] += dev;
                    logs[j].push(ul);
                }
            }
            Ok(Part {
                reference: LogStats::from_logs(&base),
                amps: logs.iter().map(|l| LogStats::from_logs(l)).collect(),
                max_dev,
                sum_dev,
            })
        })?;

        let mut reference = LogStats::empty();
        let mut amps = vec![LogStats::empty(); m];
        let mut max_dev = vec![0.0f64; m];
        let mut sum_dev = vec![0.0f64; m];
        for p in &parts {
            reference.merge(&p.reference);
            for j in 0..m {
                amps[j].merge(&p.amps[j]);
                max_dev[j] = max_dev[j].max(p.max_dev[j]);
                sum_dev[j] += p.sum_dev[j];
            }
        }
        let rows = (0..m)
            .map(|j| {
                let diff: Vec<Complex64> = v
                    .values()
                    .iter()
                    .zip(cut[j].values())
                    .map(|(a, b)| a - b)
                    .collect();
                RenormRow {
                    lambda: lambdas[j],
                    amplitude: amps[j]
                        .result(seed)
                        .note("op", "renorm-sweep")
                        .note("t", t)
                        .note("lambda", lambdas[j]),
                    max_u_dev: max_dev[j],
                    mean_u_dev: sum_dev[j] / n as f64,
                    cut_norm: grid.weighted_norm(&diff, f64::recip),
                }
            })
            .collect();
        Ok(RenormSweep {
            reference: reference.result(seed).note("op", "renorm-sweep").note("t", t),
            rows,
        })
    }

    /// [`Self::stieltjes_mc_check_with`] for `f(x) = x` started at `+1`.
    pub fn stieltjes_mc_check(&self, t: f64, n: u64, seed: u64) -> Result<StieltjesReport> {
        self.stieltjes_mc_check_with(t, [1.0, -1.0], Spin::Up, n, seed)
    }

    /// `f` is given by its values `[f(+1), f(−1)]`. The two estimators use
    /// independent streams.
    pub fn stieltjes_mc_check_with(&self, t: f64, f: [f64; 2], x: Spin, n: u64, seed: u64) -> Result<StieltjesReport> {
        check_n(n)?;
        check_time(t)?;
        let fv = |s: Spin| f[s.index()];
        let jump_seed = derive_seed(seed, 1);
        let quad_seed = derive_seed(seed, 2);
        let jump = self.linear_mean(n, |i| {
            let path = sample_path(x, t, &RngStream::new(jump_seed, i))?;
            let mut sum = 0.0;
            let mut before = path.x0();
            for &tj in &path.jumps()[..path.jumps_until(t)] {
                let after = before.flip();
                sum += tj * (fv(after) - fv(before));
                before = after;
            }
            Ok(sum)
        })?;
        let (nodes, weights) = gauss_legendre_on(STIELTJES_NODES, 0.0, t);
        let quadrature = self.linear_mean(n, |i| {
            let path = sample_path(x, t, &RngStream::new(quad_seed, i))?;
            let mut sum = 0.0;
            for (&s, &w) in nodes.iter().zip(&weights) {
                let xs = spin_at(&path, s)?;
                sum -= w * s * (fv(xs) - fv(xs.flip()));
            }
            Ok(sum)
        })?;
        let jump = jump.result(jump_seed).note("op", "stieltjes-jump").note("t", t);
        let quadrature = quadrature
            .result(quad_seed)
            .note("op", "stieltjes-quadrature")
            .note("t", t);
        let exact = -(fv(x) - fv(x.flip())) * (1.0 - (-2.0 * t).exp() * (1.0 + 2.0 * t)) / 4.0;
        Ok(StieltjesReport {
            t,
            difference: (jump.mean - quadrature.mean).abs(),
            pooled_sigma: jump.stderr.hypot(quadrature.stderr),
            jump,
            quadrature,
            exact,
        })
    }

    /// Empirical `ℙ^x(X_t = y)`.
    pub fn estimate_transition(&self, t: f64, x: Spin, y: Spin, n: u64, seed: u64) -> Result<EstimatorResult> {
        check_n(n)?;
        check_time(t)?;
        let stats = self.linear_mean(n, |i| {
            let path = sample_path(x, t, &RngStream::new(seed, i))?;
            Ok(if spin_at(&path, t)? == y { 1.0 } else { 0.0 })
        })?;
        Ok(stats
            .result(seed)
            .note("op", "transition")
            .note("t", t)
            .note("x", x)
            .note("y", y))
    }
}
