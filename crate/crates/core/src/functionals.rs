//! Exact per-path evaluation of the field processes `U_t^±(v)` and of the
//! phase process `u_t(v)`.
//!
//! All time integrals are closed-form antiderivatives over the constant-spin
//! segments of a path; there is no time stepping anywhere. The flow and
//! shift identities therefore hold to rounding error and are exposed as
//! residual checks.

use std::ops::Deref;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cutoff_family, FormFactor, ModeGrid};
use crate::path::{shift_path, spin_at, Segment, SpinPath};

/// Below this value of `ω·len` the segment integral uses its `ω → 0` limit.
pub const SMALL_OMEGA_T: f64 = 1e-12;

/// Per-mode complex amplitudes aligned with a [`ModeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVector(pub Vec<Complex64>);

impl ModeVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn max_abs_diff(&self, other: &ModeVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Deref for ModeVector {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// Value of the phase process for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseValue {
    pub u: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `∫_0^len e^{−sω} ds`.
#[inline]
pub(crate) fn segment_integral(omega: f64, len: f64) -> f64 {
    let x = omega * len;
    if x < SMALL_OMEGA_T {
        len
    } else {
        -(-x).exp_m1() / omega
    }
}

/// `∫_0^t e^{−sω} γ_s ds` per unit form factor.
pub(crate) fn plus_kernel(segments: &[Segment], omega: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    for seg in segments {
        acc.add(seg.spin.sign() * (-seg.start * omega).exp() * segment_integral(omega, seg.len()));
    }
    acc.value()
}

/// `∫_0^t e^{−(t−s)ω} γ_s ds` per unit form factor.
pub(crate) fn minus_kernel(segments: &[Segment], t: f64, omega: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    for seg in segments {
        acc.add(seg.spin.sign() * (-(t - seg.end) * omega).exp() * segment_integral(omega, seg.len()));
    }
    acc.value()
}

/// Regular-route phase per unit `weight·|v|²`:
/// `∫_0^t∫_0^s e^{−(s−r)ω} γ_r γ_s dr ds − t/ω`.
///
/// With `L_i` the segment integrals and `A_i = Σ_{j<i} σ_j e^{−(a_i−b_j)ω} L_j`
/// this is `Σ_i L_i (σ_i A_i − 1/ω)`; `A` is carried forward segment by segment.
pub(crate) fn regular_phase_kernel(segments: &[Segment], omega: f64) -> f64 {
    let inv = omega.recip();
    let mut acc = CompensatedSum::default();
    let mut carry = 0.0;
    for seg in segments {
        let len = seg.len();
        let l = segment_integral(omega, len);
        let sigma = seg.spin.sign();
        acc.add(l * (sigma * carry - inv));
        carry = (-len * omega).exp() * carry + sigma * l;
    }
    acc.value()
}

/// UV-route phase per unit `weight·|v|²`:
/// `(1/ω)·[−γ_t K_t + Σ_{jumps T_j ≤ t} (γ_{T_j} − γ_{T_j−}) K_{T_j}]`
/// where `K_s = ∫_0^s e^{−(s−r)ω} γ_r dr` is evaluated exactly at each jump.
pub(crate) fn uv_phase_kernel(segments: &[Segment], spin_t: f64, jump_at_end: bool, omega: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut carry = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        let sigma = seg.spin.sign();
        if i > 0 {
            // jump into this segment: increment 2σ
            acc.add(2.0 * sigma * carry);
        }
        let len = seg.len();
        carry = (-len * omega).exp() * carry + sigma * segment_integral(omega, len);
    }
    if jump_at_end {
        acc.add(2.0 * spin_t * carry);
    }
    acc.add(-spin_t * carry);
    acc.value() / omega
}

struct PathView {
    segments: Vec<Segment>,
    spin_t: f64,
    jump_at_end: bool,
}

fn view(path: &SpinPath, t: f64) -> Result<PathView> {
    let segments = path.segments(t)?;
    let spin_t = spin_at(path, t)?.sign();
    let jump_at_end = path.jumps_until(t) >= segments.len() && t > 0.0;
    Ok(PathView {
        segments,
        spin_t,
        jump_at_end,
    })
}

fn check_len(grid: &ModeGrid, n: usize) -> Result<()> {
    if grid.len() != n {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: n,
        });
    }
    Ok(())
}

/// `U_t^+(v)(γ)(k) = ∫_0^t e^{−sω_k} γ_s v(k) ds`.
pub fn u_plus(path: &SpinPath, t: f64, grid: &ModeGrid, v: &FormFactor) -> Result<ModeVector> {
    check_len(grid, v.len())?;
    let segs = path.segments(t)?;
    Ok(ModeVector(
        grid.omegas()
            .iter()
            .zip(v.values())
            .map(|(&om, &z)| z * plus_kernel(&segs, om))
            .collect(),
    ))
}

/// `U_t^−(v)(γ)(k) = ∫_0^t e^{−(t−s)ω_k} γ_s v(k) ds`.
pub fn u_minus(path: &SpinPath, t: f64, grid: &ModeGrid, v: &FormFactor) -> Result<ModeVector> {
    check_len(grid, v.len())?;
    let segs = path.segments(t)?;
    Ok(ModeVector(
        grid.omegas()
            .iter()
            .zip(v.values())
            .map(|(&om, &z)| z * minus_kernel(&segs, t, om))
            .collect(),
    ))
}

/// The phase integrator `ν(v)(t) = −Σ weight·e^{−tω}|v|²/ω`.
///
/// `t = 0` is finite on a grid; the continuum analogue may diverge there.
pub fn nu_phase(v: &FormFactor, grid: &ModeGrid, t: f64) -> Result<f64> {
    check_len(grid, v.len())?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    Ok(-grid
        .weights()
        .iter()
        .zip(grid.omegas())
        .zip(v.values())
        .map(|((&w, &om), z)| w * (-t * om).exp() * z.norm_sqr() / om)
        .sum::<f64>())
}

/// Phase treating every given value as regular (double-integral route).
pub fn phase_regular(path: &SpinPath, t: f64, grid: &ModeGrid, values: &[Complex64]) -> Result<f64> {
    check_len(grid, values.len())?;
    let segs = path.segments(t)?;
    let mut acc = CompensatedSum::default();
    for ((&w, &om), z) in grid.weights().iter().zip(grid.omegas()).zip(values) {
        let a = w * z.norm_sqr();
        if a != 0.0 {
            acc.add(a * regular_phase_kernel(&segs, om));
        }
    }
    Ok(acc.value())
}

/// Phase treating every given value as UV (Stieltjes route).
pub fn phase_uv(path: &SpinPath, t: f64, grid: &ModeGrid, values: &[Complex64]) -> Result<f64> {
    check_len(grid, values.len())?;
    let pv = view(path, t)?;
    let mut acc = CompensatedSum::default();
    for ((&w, &om), z) in grid.weights().iter().zip(grid.omegas()).zip(values) {
        let a = w * z.norm_sqr();
        if a != 0.0 {
            acc.add(a * uv_phase_kernel(&pv.segments, pv.spin_t, pv.jump_at_end, om));
        }
    }
    Ok(acc.value())
}

/// `u_t(v)(γ) = u_t(v_reg)(γ) + u_t(v_UV)(γ)`, each part by its own route.
pub fn phase_u(path: &SpinPath, t: f64, grid: &ModeGrid, v: &FormFactor) -> Result<PhaseValue> {
    check_len(grid, v.len())?;
    let pv = view(path, t)?;
    let mut acc = CompensatedSum::default();
    for (k, ((&w, &om), z)) in grid
        .weights()
        .iter()
        .zip(grid.omegas())
        .zip(v.values())
        .enumerate()
    {
        let a = w * z.norm_sqr();
        if a == 0.0 {
            continue;
        }
        let kernel = if v.reg_mask()[k] {
            regular_phase_kernel(&pv.segments, om)
        } else {
            uv_phase_kernel(&pv.segments, pv.spin_t, pv.jump_at_end, om)
        };
        acc.add(a * kernel);
    }
    Ok(PhaseValue { u: acc.value() })
}

fn check_split(path: &SpinPath, t: f64, s: f64) -> Result<()> {
    if !(t >= 0.0 && s >= 0.0 && t + s <= path.horizon()) {
        return Err(Error::OutOfRange {
            what: "t + s",
            value: t + s,
            lo: 0.0,
            hi: path.horizon(),
        });
    }
    Ok(())
}

/// Max-norm residuals of the flow equations
/// `U_{t+s}^+ = U_t^+ + e^{−tω} U_s^+∘τ_t` and
/// `U_{t+s}^− = e^{−sω} U_t^− + U_s^−∘τ_t`.
#[allow(non_snake_case)]
pub fn flow_check_U(
    path: &SpinPath,
    t: f64,
    s: f64,
    grid: &ModeGrid,
    v: &FormFactor,
) -> Result<(f64, f64)> {
    check_split(path, t, s)?;
    let shifted = shift_path(path, t)?;
    let plus_full = u_plus(path, t + s, grid, v)?;
    let plus_t = u_plus(path, t, grid, v)?;
    let plus_s = u_plus(&shifted, s, grid, v)?;
    let minus_full = u_minus(path, t + s, grid, v)?;
    let minus_t = u_minus(path, t, grid, v)?;
    let minus_s = u_minus(&shifted, s, grid, v)?;
    let mut res_plus: f64 = 0.0;
    let mut res_minus: f64 = 0.0;
    for (k, &om) in grid.omegas().iter().enumerate() {
        let p = plus_t[k] + plus_s[k] * (-t * om).exp();
        let m = minus_t[k] * (-s * om).exp() + minus_s[k];
        res_plus = res_plus.max((plus_full[k] - p).norm());
        res_minus = res_minus.max((minus_full[k] - m).norm());
    }
    Ok((res_plus, res_minus))
}

/// `|u_{t+s} − u_t − u_s∘τ_t − ⟨U_t^−, U_s^+∘τ_t⟩|`.
pub fn flow_check_u(path: &SpinPath, t: f64, s: f64, grid: &ModeGrid, v: &FormFactor) -> Result<f64> {
    check_split(path, t, s)?;
    let shifted = shift_path(path, t)?;
    let full = phase_u(path, t + s, grid, v)?.u;
    let head = phase_u(path, t, grid, v)?.u;
    let tail = phase_u(&shifted, s, grid, v)?.u;
    let cross = grid
        .inner(&u_minus(path, t, grid, v)?, &u_plus(&shifted, s, grid, v)?)
        .re;
    Ok((full - head - tail - cross).abs())
}

/// `u_t(v·1{ω ≤ Λ})` for each cutoff in an increasing sequence.
pub fn uv_limit_u(
    path: &SpinPath,
    t: f64,
    grid: &ModeGrid,
    v: &FormFactor,
    lambdas: &[f64],
) -> Result<Vec<PhaseValue>> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("cutoffs must be strictly increasing".into()));
    }
    lambdas
        .iter()
        .map(|&lam| phase_u(path, t, grid, &cutoff_family(v, grid, lam)?))
        .collect()
}
