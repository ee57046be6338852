//! Per-path identity sweep over sampled paths: flow equations, the two
//! phase routes, reflection symmetry and the supermultiplicativity bound.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fkf::Engine;
use crate::functionals::{flow_check_U, flow_check_u, phase_regular, phase_u, phase_uv};
use crate::grid::{FormFactor, ModeGrid};
use crate::path::{derive_seed, sample_path, shift_path, RngStream, Spin};

pub const FLOW_U_TOL: f64 = 1e-10;
pub const FLOW_PHASE_TOL: f64 = 1e-9;
pub const ROUTE_TOL: f64 = 1e-9;

/// Maximum residuals over all sampled paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub n_paths: u64,
    pub flow_plus: f64,
    pub flow_minus: f64,
    pub flow_phase: f64,
    /// `|route (a) − route (b)|` for the full form factor.
    pub route_equality: f64,
    /// `|u_t(γ) − u_t(−γ)|`; zero in exact arithmetic and in floating point.
    pub reflection: f64,
    /// `max(u_t + u_s∘τ_t − ‖v/ω‖² − u_{t+s})`; non-positive when the bound
    /// holds. The cross term of the phase flow is at least `−‖v/ω‖²` because
    /// `|U^±| ≤ |v|/ω` pointwise.
    pub supermultiplicativity: f64,
}

impl IdentityReport {
    pub fn passes(&self) -> bool {
        self.flow_plus <= FLOW_U_TOL
            && self.flow_minus <= FLOW_U_TOL
            && self.flow_phase <= FLOW_PHASE_TOL
            && self.route_equality <= ROUTE_TOL
            && self.reflection == 0.0
            && self.supermultiplicativity <= 0.0
    }

    fn merge(&mut self, o: &IdentityReport) {
        self.n_paths += o.n_paths;
        self.flow_plus = self.flow_plus.max(o.flow_plus);
        self.flow_minus = self.flow_minus.max(o.flow_minus);
        self.flow_phase = self.flow_phase.max(o.flow_phase);
        self.route_equality = self.route_equality.max(o.route_equality);
        self.reflection = self.reflection.max(o.reflection);
        self.supermultiplicativity = self.supermultiplicativity.max(o.supermultiplicativity);
    }

    fn empty() -> Self {
        Self {
            n_paths: 0,
            flow_plus: 0.0,
            flow_minus: 0.0,
            flow_phase: 0.0,
            route_equality: 0.0,
            reflection: 0.0,
            supermultiplicativity: f64::NEG_INFINITY,
        }
    }
}

/// Runs every identity on `n_paths` paths over `[0, horizon]`, with split
/// points `t, s` drawn uniformly subject to `t + s ≤ horizon`.
pub fn path_identity_suite(
    engine: &Engine,
    grid: &ModeGrid,
    v: &FormFactor,
    n_paths: u64,
    horizon: f64,
    seed: u64,
) -> Result<IdentityReport> {
    let bound = grid.weighted_norm(v.values(), f64::recip).powi(2);
    let split_seed = derive_seed(seed, 0x5117);
    let per_path = |i: u64| -> Result<IdentityReport> {
        let x0 = if i % 2 == 0 { Spin::Up } else { Spin::Down };
        let path = sample_path(x0, horizon, &RngStream::new(seed, i))?;
        let mut rng = RngStream::new(split_seed, i).rng();
        let t = rng.random::<f64>() * horizon;
        let s = rng.random::<f64>() * (horizon - t);

        let (flow_plus, flow_minus) = flow_check_U(&path, t, s, grid, v)?;
        let flow_phase = flow_check_u(&path, t, s, grid, v)?;
        let a = phase_regular(&path, t + s, grid, v.values())?;
        let b = phase_uv(&path, t + s, grid, v.values())?;
        let u = phase_u(&path, t + s, grid, v)?.u;
        let u_ref = phase_u(&path.reflected(), t + s, grid, v)?.u;

        let tail = shift_path(&path, t)?;
        let head = phase_u(&path, t, grid, v)?.u;
        let rest = phase_u(&tail, s, grid, v)?.u;
        Ok(IdentityReport {
            n_paths: 1,
            flow_plus,
            flow_minus,
            flow_phase,
            route_equality: (a - b).abs(),
            reflection: (u - u_ref).abs(),
            supermultiplicativity: head + rest - bound - u,
        })
    };
    let parts: Vec<IdentityReport> = engine.map_paths(n_paths, per_path)?;
    let mut out = IdentityReport::empty();
    for p in &parts {
        out.merge(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::split_real;

    #[test]
    fn suite_passes_on_small_grid() {
        let g = ModeGrid::new(vec![0.2, 0.9, 3.0, 12.0], vec![1.0, 0.7, 0.4, 0.2]).unwrap();
        let v = split_real(&[0.5, 0.8, 1.0, 1.2], &g, 1.0).unwrap();
        let rep = path_identity_suite(&Engine::default(), &g, &v, 200, 4.0, 3).unwrap();
        assert_eq!(rep.n_paths, 200);
        assert!(rep.passes(), "{rep:?}");
    }
}
