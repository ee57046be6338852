//! Exact-diagonalization oracle on a truncated bosonic Fock space.
//!
//! The basis holds every occupation tuple with total boson number at most
//! `cap`, ordered by total number and then in descending lexicographic order,
//! so the vacuum is index 0 and every low-occupation subspace is a prefix.
//!
//! All operators are built as *compressions* of the exact infinite-dimensional
//! operators: ladder, number and field matrices truncate exactly, and Weyl
//! operators and the dressed generator are computed mode by mode in a padded
//! single-mode space before being cut back to the cap. Spin ⊗ Fock matrices
//! put the `x = +1` block first.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{FormFactor, ModeGrid};
use crate::path::Spin;

pub const DEFAULT_DIM_LIMIT: usize = 20_000;
/// Coherent-vector truncation tails above this are rejected.
pub const TAIL_HARD_LIMIT: f64 = 1e-4;
/// Coherent-vector truncation tails above this are flagged.
pub const TAIL_WARN: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Occupation-number basis with a total-boson cap.
#[derive(Debug, Clone)]
pub struct TruncatedFock {
    n_modes: usize,
    cap: usize,
    basis: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

/// `C(m + cap, cap)` without overflow; saturates at `usize::MAX`.
pub fn fock_dimension(n_modes: usize, cap: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=cap as u128 {
        acc = acc * (n_modes as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

fn push_compositions(total: usize, slots: usize, prefix: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    if slots == 1 {
        prefix.push(total as u16);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first as u16);
        push_compositions(total - first, slots - 1, prefix, out);
        prefix.pop();
    }
}

/// Enumerates the truncated basis, refusing dimensions above `limit`.
pub fn enumerate_basis_with_limit(n_modes: usize, cap: usize, limit: usize) -> Result<TruncatedFock> {
    if n_modes == 0 {
        return Err(Error::InvalidArgument("need at least one mode".into()));
    }
    let dim = fock_dimension(n_modes, cap);
    if dim > limit {
        return Err(Error::TooLarge { dim, limit });
    }
    let mut basis = Vec::with_capacity(dim);
    let mut prefix = Vec::with_capacity(n_modes);
    for total in 0..=cap {
        push_compositions(total, n_modes, &mut prefix, &mut basis);
    }
    debug_assert_eq!(basis.len(), dim);
    let index = basis.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
    Ok(TruncatedFock {
        n_modes,
        cap,
        basis,
        index,
    })
}

pub fn enumerate_basis(n_modes: usize, cap: usize) -> Result<TruncatedFock> {
    enumerate_basis_with_limit(n_modes, cap, DEFAULT_DIM_LIMIT)
}

impl TruncatedFock {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn basis(&self) -> &[Vec<u16>] {
        &self.basis
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Number of basis states with total occupation at most `level`.
    pub fn prefix_dim(&self, level: usize) -> usize {
        fock_dimension(self.n_modes, level.min(self.cap))
    }

    fn check_grid(&self, grid: &ModeGrid) -> Result<()> {
        if grid.len() != self.n_modes {
            return Err(Error::LengthMismatch {
                expected: self.n_modes,
                got: grid.len(),
            });
        }
        Ok(())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.n_modes {
            return Err(Error::LengthMismatch {
                expected: self.n_modes,
                got: n,
            });
        }
        Ok(())
    }

    /// Embeds a single-mode operator, given on occupations `0..=cap`, as
    /// `B ⊗ Id` compressed onto the truncated space.
    fn embed_single_mode(&self, mode: usize, block: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let mut target = vec![0u16; self.n_modes];
        for (col, occ) in self.basis.iter().enumerate() {
            let total: usize = occ.iter().map(|&n| n as usize).sum();
            let n_k = occ[mode] as usize;
            let max_m = self.cap - (total - n_k);
            target.copy_from_slice(occ);
            for m in 0..=max_m {
                let z = block[(m, n_k)];
                if z == ZERO {
                    continue;
                }
                target[mode] = m as u16;
                let row = self.index[&target];
                out[(row, col)] += z;
            }
        }
    }
}

/// Dense operator on the (spin ⊗) Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<Complex64>,
    pub hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(matrix: DMatrix<Complex64>, hermitian: bool) -> Self {
        Self { matrix, hermitian }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim), true)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `max|A − A†|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                r = r.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        r
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max entry difference restricted to the leading `k × k` block.
    pub fn max_abs_diff_leading(&self, other: &OperatorMatrix, k: usize) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                r = r.max((self.matrix[(i, j)] - other.matrix[(i, j)]).norm());
            }
        }
        r
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix::new(self.matrix.adjoint(), self.hermitian)
    }

    pub fn mul(&self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix::new(&self.matrix * &rhs.matrix, false)
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.matrix * v
    }

    /// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
    pub fn spectrum(&self) -> Result<Spectrum> {
        if !self.hermitian {
            return Err(Error::InvalidArgument(
                "spectral calculus needs a hermitian-flagged matrix".into(),
            ));
        }
        let eig = self.matrix.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(self.dim(), order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(self.dim(), self.dim());
        for (c, &i) in order.iter().enumerate() {
            vectors.set_column(c, &eig.eigenvectors.column(i));
        }
        Ok(Spectrum { values, vectors })
    }

    /// Text dump: header `dim,hermitian`, then one row per line with
    /// interleaved `re,im` entries.
    pub fn to_text(&self) -> String {
        let n = self.dim();
        let mut out = format!("{n},{}\n", self.hermitian);
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix[(i, j)];
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:e},{:e}", z.re, z.im);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<OperatorMatrix> {
        let bad = |msg: &str| Error::InvalidArgument(format!("matrix dump: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let (d, h) = header.split_once(',').ok_or_else(|| bad("header"))?;
        let n: usize = d.trim().parse().map_err(|_| bad("dim"))?;
        let hermitian: bool = h.trim().parse().map_err(|_| bad("hermitian flag"))?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let row = lines.next().ok_or_else(|| bad("missing row"))?;
            let nums: Vec<f64> = row
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad("number")))
                .collect::<Result<_>>()?;
            if nums.len() != 2 * n {
                return Err(bad("row length"));
            }
            for j in 0..n {
                m[(i, j)] = Complex64::new(nums[2 * j], nums[2 * j + 1]);
            }
        }
        Ok(OperatorMatrix::new(m, hermitian))
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V·f(Λ)·V†`.
    pub fn function(&self, f: impl Fn(f64) -> f64) -> DMatrix<Complex64> {
        let mut scaled = self.vectors.clone();
        for (c, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(c).scale_mut(s);
        }
        scaled * self.vectors.adjoint()
    }

    /// `e^{−tH}`.
    pub fn semigroup(&self, t: f64) -> OperatorMatrix {
        OperatorMatrix::new(self.function(|lam| (-t * lam).exp()), true)
    }

    /// `⟨a, e^{−tH} b⟩` without forming the full exponential.
    pub fn matrix_element(&self, a: &DVector<Complex64>, b: &DVector<Complex64>, t: f64) -> Complex64 {
        let pa = self.vectors.adjoint() * a;
        let pb = self.vectors.adjoint() * b;
        pa.iter()
            .zip(pb.iter())
            .zip(self.values.iter())
            .map(|((x, y), &lam)| x.conj() * y * (-t * lam).exp())
            .sum()
    }
}

/// Per-mode `(a_i, a_i†)` on the truncated space.
pub fn ladder_matrices(space: &TruncatedFock) -> Vec<(OperatorMatrix, OperatorMatrix)> {
    let d = space.dim();
    (0..space.n_modes)
        .map(|k| {
            let mut a = DMatrix::zeros(d, d);
            let mut lowered = vec![0u16; space.n_modes];
            for (col, occ) in space.basis.iter().enumerate() {
                let n = occ[k];
                if n == 0 {
                    continue;
                }
                lowered.copy_from_slice(occ);
                lowered[k] -= 1;
                let row = space.index[&lowered];
                a[(row, col)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
            let adag = a.adjoint();
            (OperatorMatrix::new(a, false), OperatorMatrix::new(adag, false))
        })
        .collect()
}

/// `a(f) = Σ_k √w_k conj(f_k) a_k`.
pub fn annihilation_matrix(f: &[Complex64], grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    space.check_grid(grid)?;
    space.check_len(f.len())?;
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for (k, (a, _)) in ladder_matrices(space).into_iter().enumerate() {
        let c = f[k].conj() * grid.weights()[k].sqrt();
        if c != ZERO {
            m += a.matrix * c;
        }
    }
    Ok(OperatorMatrix::new(m, false))
}

/// `φ(f) = a(f) + a†(f)`; Hermitian by construction.
pub fn field_matrix(f: &[Complex64], grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    let a = annihilation_matrix(f, grid, space)?;
    let m = &a.matrix + a.matrix.adjoint();
    Ok(OperatorMatrix::new(m, true))
}

/// `dΓ(ω)`: diagonal with entries `Σ n_i ω_i`.
pub fn number_matrix(grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    space.check_grid(grid)?;
    let diag = space.basis.iter().map(|occ| {
        let e: f64 = occ.iter().zip(grid.omegas()).map(|(&n, &om)| n as f64 * om).sum();
        Complex64::new(e, 0.0)
    });
    Ok(OperatorMatrix::new(
        DMatrix::from_diagonal(&DVector::from_iterator(space.dim(), diag)),
        true,
    ))
}

/// `Σ_{n>cap} x^n/n!`, the norm² missing from a truncated coherent vector
/// with `‖f‖² = x`.
pub fn coherent_tail(norm_sq: f64, cap: usize) -> f64 {
    if norm_sq == 0.0 {
        return 0.0;
    }
    let mut term = 1.0;
    for n in 1..=cap + 1 {
        term *= norm_sq / n as f64;
    }
    let mut sum = 0.0;
    let mut n = cap + 1;
    while term > sum * 1e-17 && term > 0.0 {
        sum += term;
        n += 1;
        term *= norm_sq / n as f64;
        if n > cap + 10_000 {
            break;
        }
    }
    sum
}

/// Truncated exponential vector with its tail estimate.
#[derive(Debug, Clone)]
pub struct CoherentVector {
    pub coeffs: DVector<Complex64>,
    /// `e^{‖f‖²} − ‖truncated ε(f)‖²`.
    pub tail: f64,
    /// `tail > TAIL_WARN`.
    pub warning: bool,
}

/// `ε(f)` with components `Π_k (√w_k f_k)^{n_k}/√(n_k!)`.
pub fn coherent_vector(f: &[Complex64], grid: &ModeGrid, space: &TruncatedFock) -> Result<CoherentVector> {
    space.check_grid(grid)?;
    space.check_len(f.len())?;
    let scaled: Vec<Complex64> = f
        .iter()
        .zip(grid.weights())
        .map(|(z, &w)| z * w.sqrt())
        .collect();
    let norm_sq: f64 = scaled.iter().map(|z| z.norm_sqr()).sum();
    let tail = coherent_tail(norm_sq, space.cap);
    if tail > TAIL_HARD_LIMIT {
        return Err(Error::Truncation {
            tail,
            limit: TAIL_HARD_LIMIT,
        });
    }
    // per-mode tables α^n/√n!
    let tables: Vec<Vec<Complex64>> = scaled
        .iter()
        .map(|&alpha| {
            let mut col = Vec::with_capacity(space.cap + 1);
            let mut cur = ONE;
            col.push(cur);
            for n in 1..=space.cap {
                cur = cur * alpha / (n as f64).sqrt();
                col.push(cur);
            }
            col
        })
        .collect();
    let coeffs = DVector::from_iterator(
        space.dim(),
        space.basis.iter().map(|occ| {
            occ.iter()
                .zip(&tables)
                .fold(ONE, |acc, (&n, tab)| acc * tab[n as usize])
        }),
    );
    Ok(CoherentVector {
        coeffs,
        tail,
        warning: tail > TAIL_WARN,
    })
}

fn single_mode_ladder(n: usize) -> DMatrix<Complex64> {
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Single-mode working dimension so that displacement by `alpha` is exact to
/// rounding on occupations `0..keep`.
fn padded_dim(alpha: f64, keep: usize) -> usize {
    if alpha == 0.0 {
        return keep;
    }
    let x = alpha * ((keep as f64).sqrt() + 1.0) + alpha * alpha;
    let mut pad = 10usize;
    let mut log_term = 0.0f64;
    for p in 1..=pad {
        log_term += x.ln() - 0.5 * (p as f64).ln();
    }
    while log_term > -41.0 && pad < 400 {
        pad += 1;
        log_term += x.ln() - 0.5 * (pad as f64).ln();
    }
    keep + pad
}

/// `exp(α a† − ᾱ a)` on occupations `0..dim`, via the Hermitian generator
/// `K = i(α a† − ᾱ a)` so that the exponential is `V e^{−iΛ} V†`.
fn displacement_full(alpha: Complex64, dim: usize) -> DMatrix<Complex64> {
    if alpha == ZERO {
        return DMatrix::identity(dim, dim);
    }
    let a = single_mode_ladder(dim);
    let gen = (a.adjoint() * alpha - &a * alpha.conj()) * I;
    let eig = gen.symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (c, &lam) in eig.eigenvalues.iter().enumerate() {
        let phase = Complex64::new(0.0, -lam).exp();
        for r in 0..dim {
            scaled[(r, c)] *= phase;
        }
    }
    scaled * eig.eigenvectors.adjoint()
}

/// Single-mode displacement compressed to occupations `0..=cap`.
pub fn displacement_block(alpha: Complex64, cap: usize) -> DMatrix<Complex64> {
    let keep = cap + 1;
    let dim = padded_dim(alpha.norm(), keep);
    displacement_full(alpha, dim).view((0, 0), (keep, keep)).into_owned()
}

/// `𝒲(f) = exp(a†(f) − a(f))` compressed onto the truncated space.
///
/// The modes commute, so the Weyl operator factorizes into single-mode
/// displacements by `√w_k f_k`, each computed spectrally in a padded space.
pub fn weyl_matrix(f: &[Complex64], grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    space.check_grid(grid)?;
    space.check_len(f.len())?;
    let blocks: Vec<DMatrix<Complex64>> = f
        .iter()
        .zip(grid.weights())
        .map(|(z, &w)| displacement_block(z * w.sqrt(), space.cap))
        .collect();
    let d = space.dim();
    let m = DMatrix::from_fn(d, d, |r, c| {
        let (row, col) = (&space.basis[r], &space.basis[c]);
        row.iter()
            .zip(col)
            .zip(&blocks)
            .fold(ONE, |acc, ((&i, &j), b)| acc * b[(i as usize, j as usize)])
    });
    Ok(OperatorMatrix::new(m, false))
}

/// `I_t(ω, f) = e^{−t dΓ(ω)} exp(a(−f))`; the second factor is a finite sum
/// because `a(f)` is nilpotent on the truncated space.
pub fn it_matrix(t: f64, f: &[Complex64], grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    let lower = annihilation_matrix(f, grid, space)?.matrix * Complex64::new(-1.0, 0.0);
    let d = space.dim();
    let mut sum = DMatrix::<Complex64>::identity(d, d);
    let mut term = DMatrix::<Complex64>::identity(d, d);
    for k in 1..=space.cap {
        term = &lower * term / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    let number = number_matrix(grid, space)?;
    for r in 0..d {
        let decay = (-t * number.matrix[(r, r)].re).exp();
        sum.row_mut(r).scale_mut(decay);
    }
    Ok(OperatorMatrix::new(sum, false))
}

/// Dressed van Hove generator
/// `h(v,x) = 𝒲(−x v_UV/ω)(dΓ(ω) + xφ(v_reg) + ‖v_reg/√ω‖²)𝒲(x v_UV/ω)`.
///
/// Every term acts on a single mode and the Weyl factors of the other modes
/// cancel, so the conjugation is carried out per mode in a padded space.
pub fn h_dressed(v: &FormFactor, x: Spin, grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    space.check_grid(grid)?;
    space.check_len(v.len())?;
    let vals = v.real_values()?;
    let sx = x.sign();
    let keep = space.cap + 1;
    let d = space.dim();
    let mut h = DMatrix::<Complex64>::zeros(d, d);
    let mut shift = 0.0;
    for k in 0..space.n_modes {
        let (om, w) = (grid.omegas()[k], grid.weights()[k]);
        let (reg, uv) = if v.reg_mask()[k] { (vals[k], 0.0) } else { (0.0, vals[k]) };
        shift += w * reg * reg / om;
        let alpha = sx * w.sqrt() * uv / om;
        let dim = padded_dim(alpha.abs(), keep);
        let a = single_mode_ladder(dim);
        let adag = a.adjoint();
        let coupling = Complex64::new(sx * w.sqrt() * reg, 0.0);
        let inner = &adag * &a * Complex64::new(om, 0.0) + (&a + &adag) * coupling;
        let block = if alpha == 0.0 {
            inner
        } else {
            let dplus = displacement_full(Complex64::new(alpha, 0.0), dim);
            let dminus = displacement_full(Complex64::new(-alpha, 0.0), dim);
            dminus * inner * dplus
        };
        let block = block.view((0, 0), (keep, keep)).into_owned();
        space.embed_single_mode(k, &block, &mut h);
    }
    for r in 0..d {
        h[(r, r)] += Complex64::new(shift, 0.0);
    }
    Ok(OperatorMatrix::new(h, true))
}

fn spin_blocks(up_up: &DMatrix<Complex64>, down_down: &DMatrix<Complex64>, off: Complex64) -> DMatrix<Complex64> {
    let d = up_up.nrows();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(up_up);
    m.view_mut((d, d), (d, d)).copy_from(down_down);
    for r in 0..d {
        m[(r, d + r)] = off;
        m[(d + r, r)] = off.conj();
    }
    m
}

/// `(Hψ)(x) = ψ(x) − ψ(−x) + h(v,x)ψ(x)` on spin ⊗ Fock.
pub fn h_ren_matrix(v: &FormFactor, grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    let d = space.dim();
    let id = DMatrix::<Complex64>::identity(d, d);
    let up = h_dressed(v, Spin::Up, grid, space)?.matrix + &id;
    let down = h_dressed(v, Spin::Down, grid, space)?.matrix + &id;
    Ok(OperatorMatrix::new(spin_blocks(&up, &down, -ONE), true))
}

/// `H_SB = σ_z⊗1 + 1⊗dΓ(ω) + σ_x⊗φ(v) + (1 + ‖v/√ω‖²)` on `C² ⊗ F`, in the
/// `(a, b)` spin basis.
pub fn hsb_matrix(v: &FormFactor, grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    let d = space.dim();
    let vals = v.values();
    let field = field_matrix(vals, grid, space)?.matrix;
    let number = number_matrix(grid, space)?.matrix;
    let shift = 1.0 + grid.weighted_norm(vals, |om| om.sqrt().recip()).powi(2);
    let id = DMatrix::<Complex64>::identity(d, d);
    let diag = &number + &id * Complex64::new(shift, 0.0);
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&(&diag + &id));
    m.view_mut((d, d), (d, d)).copy_from(&(&diag - &id));
    m.view_mut((0, d), (d, d)).copy_from(&field);
    m.view_mut((d, 0), (d, d)).copy_from(&field);
    Ok(OperatorMatrix::new(m, true))
}

/// The spin unitary `(a, b) ↦ (+1: (b+a)/√2, −1: (b−a)/√2)` tensored with
/// the Fock identity.
pub fn spin_unitary(dim: usize) -> OperatorMatrix {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut u = DMatrix::zeros(2 * dim, 2 * dim);
    for r in 0..dim {
        u[(r, r)] = s;
        u[(r, dim + r)] = s;
        u[(dim + r, r)] = -s;
        u[(dim + r, dim + r)] = s;
    }
    OperatorMatrix::new(u, false)
}

/// `U H_SB(v) U†`; equals [`h_ren_matrix`] for real `v`.
pub fn hsb_transformed(v: &FormFactor, grid: &ModeGrid, space: &TruncatedFock) -> Result<OperatorMatrix> {
    let h = hsb_matrix(v, grid, space)?;
    let u = spin_unitary(space.dim());
    let m = &u.matrix * &h.matrix * u.matrix.adjoint();
    Ok(OperatorMatrix::new(m, true))
}

/// `e^{−tH}` by spectral calculus.
pub fn semigroup_ed(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    Ok(h.spectrum()?.semigroup(t))
}

/// Two Fock blocks indexed by spin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinFockVector {
    pub up: DVector<Complex64>,
    pub down: DVector<Complex64>,
}

impl SpinFockVector {
    /// `δ_x ⊗ ψ`.
    pub fn localized(x: Spin, psi: &DVector<Complex64>) -> Self {
        let zero = DVector::zeros(psi.len());
        match x {
            Spin::Up => Self {
                up: psi.clone(),
                down: zero,
            },
            Spin::Down => Self {
                up: zero,
                down: psi.clone(),
            },
        }
    }

    /// Normalized decoupled vacuum `(ε(0), ε(0))/√2`.
    pub fn vacuum(fock_dim: usize) -> Self {
        let mut e = DVector::zeros(fock_dim);
        e[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self {
            up: e.clone(),
            down: e,
        }
    }

    pub fn flat(&self) -> DVector<Complex64> {
        let d = self.up.len();
        DVector::from_iterator(2 * d, self.up.iter().chain(self.down.iter()).copied())
    }

    pub fn from_flat(v: &DVector<Complex64>) -> Result<Self> {
        if v.len() % 2 != 0 {
            return Err(Error::InvalidArgument("spin ⊗ Fock vector has odd length".into()));
        }
        let d = v.len() / 2;
        Ok(Self {
            up: v.rows(0, d).into_owned(),
            down: v.rows(d, d).into_owned(),
        })
    }
}

/// Ground-state data of a spin ⊗ Fock Hamiltonian.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub vector: DVector<Complex64>,
    /// `λ₂ − λ₁`.
    pub gap: f64,
    /// `|⟨ψ₀, Ω̂_↓⟩|` with the normalized decoupled vacuum.
    pub vacuum_overlap: f64,
    /// `gap < 1e−10`.
    pub degenerate: bool,
}

pub const DEGENERACY_TOL: f64 = 1e-10;

pub fn ground_state_ed(h: &OperatorMatrix) -> Result<GroundState> {
    let spec = h.spectrum()?;
    ground_state_from(&spec)
}

pub fn ground_state_from(spec: &Spectrum) -> Result<GroundState> {
    let n = spec.dim();
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(
            "ground-state analysis expects a spin ⊗ Fock matrix".into(),
        ));
    }
    let d = n / 2;
    let omega = SpinFockVector::vacuum(d).flat();
    let mut psi = spec.vectors.column(0).into_owned();
    let ov = psi.dotc(&omega);
    if ov.norm() > 0.0 {
        let phase = ov.conj() / ov.norm();
        psi *= phase.conj();
    }
    let gap = spec.values[1] - spec.values[0];
    Ok(GroundState {
        energy: spec.values[0],
        vector: psi,
        gap,
        vacuum_overlap: ov.norm(),
        degenerate: gap < DEGENERACY_TOL,
    })
}

/// `⟨Ω̂_↓, e^{−tH} Ω̂_↓⟩`.
pub fn vacuum_amplitude_ed(spec: &Spectrum, t: f64) -> f64 {
    let omega = SpinFockVector::vacuum(spec.dim() / 2).flat();
    spec.matrix_element(&omega, &omega, t).re
}

/// `⟨δ_x ε(g), e^{−tH} δ_y ε(h)⟩`, or summed over `y` when `y` is `None`.
pub fn coherent_element_ed(
    spec: &Spectrum,
    x: Spin,
    y: Option<Spin>,
    g: &CoherentVector,
    h: &CoherentVector,
    t: f64,
) -> Complex64 {
    let bra = SpinFockVector::localized(x, &g.coeffs).flat();
    let ket = match y {
        Some(y) => SpinFockVector::localized(y, &h.coeffs).flat(),
        None => SpinFockVector {
            up: h.coeffs.clone(),
            down: h.coeffs.clone(),
        }
        .flat(),
    };
    spec.matrix_element(&bra, &ket, t)
}
