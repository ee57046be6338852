//! Boson one-particle data: a finite quadrature grid standing in for the
//! momentum measure space, the dispersion on it, and form factors with their
//! regular / ultraviolet decomposition.
//!
//! Every downstream quantity is a weighted sum over the grid, so the norms
//! and inner products here are exact identities of the discretized model.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default boundary between the regular and the UV part of a form factor.
pub const DEFAULT_UV_SPLIT: f64 = 1.0;

/// Finite weighted set of boson modes.
///
/// Stored as parallel arrays; all entries are validated at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    labels: Vec<u32>,
    weights: Vec<f64>,
    omegas: Vec<f64>,
}

/// How to build a [`ModeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Explicit `(omega, weight)` pairs.
    Table(Vec<(f64, f64)>),
    /// `n` log-spaced energies in `[omega_min, omega_max]` with trapezoid
    /// weights for the density `omega^density_exponent`.
    LogSpaced {
        omega_min: f64,
        omega_max: f64,
        n: usize,
        density_exponent: f64,
    },
}

impl ModeGrid {
    pub fn new(omegas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if omegas.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: omegas.len(),
                got: weights.len(),
            });
        }
        if omegas.is_empty() {
            return Err(Error::InvalidSpec("grid has no modes".into()));
        }
        for (k, (&w, &m)) in omegas.iter().zip(&weights).enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "mode {k}: omega must be > 0, got {w}"
                )));
            }
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "mode {k}: weight must be > 0, got {m}"
                )));
            }
        }
        let labels = (0..omegas.len() as u32).collect();
        Ok(Self {
            labels,
            weights,
            omegas,
        })
    }

    pub fn single(omega: f64, weight: f64) -> Result<Self> {
        Self::new(vec![omega], vec![weight])
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn max_omega(&self) -> f64 {
        self.omegas.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_omega(&self) -> f64 {
        self.omegas.iter().copied().fold(f64::MAX, f64::min)
    }

    /// `Σ weight · conj(f) · g`, conjugate-linear in the first slot.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(&w, (a, b))| a.conj() * b * w)
            .sum()
    }

    /// Real-data variant of [`ModeGrid::inner`].
    pub fn inner_real(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(&w, (a, b))| w * a * b)
            .sum()
    }

    /// `sqrt(Σ weight · |f|² · scale(ω)²)`.
    pub fn weighted_norm(&self, f: &[Complex64], scale: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.omegas)
            .zip(f)
            .map(|((&w, &om), z)| {
                let s = scale(om);
                w * z.norm_sqr() * s * s
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Builds a grid from an explicit table or a builtin family.
pub fn build_grid(spec: &GridSpec) -> Result<ModeGrid> {
    match spec {
        GridSpec::Table(rows) => {
            let (omegas, weights) = rows.iter().copied().unzip();
            ModeGrid::new(omegas, weights)
        }
        &GridSpec::LogSpaced {
            omega_min,
            omega_max,
            n,
            density_exponent,
        } => {
            if !(omega_min > 0.0 && omega_min.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "omega_min must be > 0, got {omega_min}"
                )));
            }
            if !(omega_max >= omega_min && omega_max.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "omega_max must be >= omega_min, got {omega_max}"
                )));
            }
            if n == 0 {
                return Err(Error::InvalidSpec("n_modes must be >= 1".into()));
            }
            if n == 1 {
                if omega_max != omega_min {
                    return Err(Error::InvalidSpec(
                        "a single-mode log family needs omega_min == omega_max".into(),
                    ));
                }
                return ModeGrid::single(omega_min, omega_min.powf(density_exponent));
            }
            let ratio = omega_max / omega_min;
            let last = (n - 1) as f64;
            let mut omegas: Vec<f64> = (0..n)
                .map(|i| omega_min * ratio.powf(i as f64 / last))
                .collect();
            // pin the endpoints so cutoff comparisons at omega_max are exact
            omegas[0] = omega_min;
            omegas[n - 1] = omega_max;
            if omegas.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::InvalidSpec(
                    "log family with n > 1 needs omega_max > omega_min".into(),
                ));
            }
            let weights = (0..n)
                .map(|i| {
                    let lo = if i == 0 { omegas[0] } else { omegas[i - 1] };
                    let hi = if i == n - 1 { omegas[n - 1] } else { omegas[i + 1] };
                    0.5 * (hi - lo) * omegas[i].powf(density_exponent)
                })
                .collect();
            ModeGrid::new(omegas, weights)
        }
    }
}

/// Per-mode form factor with a disjoint regular / UV split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormFactor {
    values: Vec<Complex64>,
    reg_mask: Vec<bool>,
}

impl FormFactor {
    pub fn new(values: Vec<Complex64>, reg_mask: Vec<bool>) -> Result<Self> {
        if values.len() != reg_mask.len() {
            return Err(Error::LengthMismatch {
                expected: values.len(),
                got: reg_mask.len(),
            });
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite form factor".into()));
        }
        Ok(Self { values, reg_mask })
    }

    /// Real values, every mode marked regular.
    pub fn regular(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            reg_mask: vec![true; values.len()],
        }
    }

    /// Real values, every mode marked UV.
    pub fn ultraviolet(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            reg_mask: vec![false; values.len()],
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); n],
            reg_mask: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn reg_mask(&self) -> &[bool] {
        &self.reg_mask
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Real parts, or [`Error::ComplexInput`] if any imaginary part is nonzero.
    pub fn real_values(&self) -> Result<Vec<f64>> {
        if !self.is_real() {
            return Err(Error::ComplexInput);
        }
        Ok(self.values.iter().map(|z| z.re).collect())
    }

    pub fn regular_part(&self) -> Vec<Complex64> {
        self.masked(true)
    }

    pub fn uv_part(&self) -> Vec<Complex64> {
        self.masked(false)
    }

    fn masked(&self, regular: bool) -> Vec<Complex64> {
        self.values
            .iter()
            .zip(&self.reg_mask)
            .map(|(&z, &r)| if r == regular { z } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    /// Same values, all modes UV.
    pub fn as_ultraviolet(&self) -> Self {
        Self {
            values: self.values.clone(),
            reg_mask: vec![false; self.len()],
        }
    }

    /// Same values, all modes regular.
    pub fn as_regular(&self) -> Self {
        Self {
            values: self.values.clone(),
            reg_mask: vec![true; self.len()],
        }
    }

    /// `α·self + β·other` with the mask of `self`.
    pub fn combine(&self, alpha: f64, other: &FormFactor, beta: f64) -> Result<Self> {
        if other.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * alpha + b * beta)
                .collect(),
            reg_mask: self.reg_mask.clone(),
        })
    }

    fn check_grid(&self, grid: &ModeGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Splits `v` into `v·1{ω ≤ threshold}` (regular) and `v·1{ω > threshold}` (UV).
pub fn split_form_factor(v: &[Complex64], grid: &ModeGrid, threshold: f64) -> Result<FormFactor> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "uv split threshold must be > 0, got {threshold}"
        )));
    }
    if v.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: v.len(),
        });
    }
    let mask = grid.omegas().iter().map(|&om| om <= threshold).collect();
    FormFactor::new(v.to_vec(), mask)
}

/// Real-valued convenience wrapper for [`split_form_factor`].
pub fn split_real(v: &[f64], grid: &ModeGrid, threshold: f64) -> Result<FormFactor> {
    let values: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    split_form_factor(&values, grid, threshold)
}

/// Norms of a form factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBundle {
    /// `‖v‖`
    pub l2: f64,
    /// `‖v/√ω‖`
    pub reg_norm: f64,
    /// `‖v/ω‖`
    pub uv_norm: f64,
    /// `‖v/(√ω+ω)‖`, the norm that controls continuity in `v`.
    pub omega_norm: f64,
}

pub fn norms(v: &FormFactor, grid: &ModeGrid) -> Result<NormBundle> {
    v.check_grid(grid)?;
    let vals = v.values();
    Ok(NormBundle {
        l2: grid.weighted_norm(vals, |_| 1.0),
        reg_norm: grid.weighted_norm(vals, |om| om.sqrt().recip()),
        uv_norm: grid.weighted_norm(vals, f64::recip),
        omega_norm: grid.weighted_norm(vals, |om| (om.sqrt() + om).recip()),
    })
}

/// Moduli of `v` and the per-mode phases `v/|v|` (1 where `v = 0`).
pub fn gauge_to_real(v: &FormFactor) -> (FormFactor, Vec<Complex64>) {
    let mut values = Vec::with_capacity(v.len());
    let mut phases = Vec::with_capacity(v.len());
    for z in v.values() {
        let r = z.norm();
        values.push(Complex64::new(r, 0.0));
        phases.push(if r > 0.0 { z / r } else { Complex64::new(1.0, 0.0) });
    }
    (
        FormFactor {
            values,
            reg_mask: v.reg_mask.clone(),
        },
        phases,
    )
}

/// Inverse of [`gauge_to_real`].
pub fn apply_phases(v: &FormFactor, phases: &[Complex64]) -> Result<FormFactor> {
    if phases.len() != v.len() {
        return Err(Error::LengthMismatch {
            expected: v.len(),
            got: phases.len(),
        });
    }
    FormFactor::new(
        v.values().iter().zip(phases).map(|(a, p)| a * p).collect(),
        v.reg_mask.clone(),
    )
}

/// `v·1{ω ≤ lambda}` with masks unchanged.
pub fn cutoff_family(v: &FormFactor, grid: &ModeGrid, lambda: f64) -> Result<FormFactor> {
    v.check_grid(grid)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff must be > 0, got {lambda}"
        )));
    }
    Ok(FormFactor {
        values: v
            .values
            .iter()
            .zip(grid.omegas())
            .map(|(&z, &om)| if om <= lambda { z } else { Complex64::new(0.0, 0.0) })
            .collect(),
        reg_mask: v.reg_mask.clone(),
    })
}

/// Parses the `omega,weight,re_v,im_v` mode table.
pub fn parse_mode_table(text: &str) -> Result<(ModeGrid, Vec<Complex64>)> {
    let mut omegas = Vec::new();
    let mut weights = Vec::new();
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::InvalidSpec(format!(
                "line {}: expected 4 columns omega,weight,re_v,im_v, got {}",
                lineno + 1,
                cols.len()
            )));
        }
        let mut nums = [0.0; 4];
        for (slot, c) in nums.iter_mut().zip(&cols) {
            *slot = c.parse::<f64>().map_err(|_| {
                Error::InvalidSpec(format!("line {}: cannot parse `{c}`", lineno + 1))
            })?;
        }
        omegas.push(nums[0]);
        weights.push(nums[1]);
        values.push(Complex64::new(nums[2], nums[3]));
    }
    let grid = ModeGrid::new(omegas, weights)?;
    Ok((grid, values))
}

pub fn read_mode_table(path: &Path) -> Result<(ModeGrid, Vec<Complex64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    parse_mode_table(&text)
}

pub fn format_mode_table(grid: &ModeGrid, v: &[Complex64]) -> String {
    let mut out = String::from("# omega,weight,re_v,im_v\n");
    for ((om, w), z) in grid.omegas().iter().zip(grid.weights()).zip(v) {
        let _ = writeln!(out, "{om:e},{w:e},{:e},{:e}", z.re, z.im);
    }
    out
}
