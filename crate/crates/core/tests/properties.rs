use num_complex::Complex64;
use proptest::prelude::*;

use spinfk::fkf::Engine;
use spinfk::fock::{coherent_vector, enumerate_basis, ground_state_from, h_ren_matrix, weyl_matrix};
use spinfk::functionals::{phase_regular, phase_u, phase_uv, u_minus, u_plus};
use spinfk::grid::{
    apply_phases, cutoff_family, gauge_to_real, norms, split_form_factor, split_real, FormFactor, ModeGrid,
};
use spinfk::path::{
    sample_path, shift_path, spin_at, transition_prob, RngStream, Spin, SpinPath,
};

fn grid_strategy(max_modes: usize) -> impl Strategy<Value = ModeGrid> {
    prop::collection::vec((0.05f64..30.0, 0.05f64..2.0), 1..=max_modes).prop_map(|pairs| {
        let (om, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        ModeGrid::new(om, w).unwrap()
    })
}

fn grid_and_values(max_modes: usize) -> impl Strategy<Value = (ModeGrid, Vec<f64>)> {
    grid_strategy(max_modes).prop_flat_map(|g| {
        let n = g.len();
        (Just(g), prop::collection::vec(-2.0f64..2.0, n))
    })
}

fn random_path(seed: u64, index: u64, horizon: f64) -> SpinPath {
    let x0 = if index % 2 == 0 { Spin::Up } else { Spin::Down };
    sample_path(x0, horizon, &RngStream::new(seed, index)).unwrap()
}

fn real_ff(values: &[f64], grid: &ModeGrid, split: f64) -> FormFactor {
    spinfk::grid::split_real(values, grid, split).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_parts_recombine_and_are_orthogonal((g, vals) in grid_and_values(8), split in 0.1f64..20.0) {
        let c: Vec<Complex64> = vals.iter().map(|&x| Complex64::new(x, -0.5 * x)).collect();
        let ff = split_form_factor(&c, &g, split).unwrap();
        let (reg, uv) = (ff.regular_part(), ff.uv_part());
        for k in 0..g.len() {
            prop_assert_eq!(reg[k] + uv[k], c[k]);
            prop_assert_eq!(reg[k] * uv[k], Complex64::new(0.0, 0.0));
            prop_assert_eq!(ff.reg_mask()[k], g.omegas()[k] <= split);
        }
    }

    #[test]
    fn cutoff_norms_are_monotone((g, vals) in grid_and_values(8), l1 in 0.05f64..40.0, l2 in 0.05f64..40.0) {
        let ff = real_ff(&vals, &g, 1.0);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = norms(&cutoff_family(&ff, &g, lo).unwrap(), &g).unwrap();
        let b = norms(&cutoff_family(&ff, &g, hi).unwrap(), &g).unwrap();
        prop_assert!(a.l2 <= b.l2 && a.uv_norm <= b.uv_norm && a.reg_norm <= b.reg_norm);
        let all = cutoff_family(&ff, &g, g.max_omega()).unwrap();
        prop_assert_eq!(all.values(), ff.values());
    }

    #[test]
    fn gauge_preserves_norms((g, vals) in grid_and_values(6), phases in prop::collection::vec(0.0f64..6.28, 6)) {
        let c: Vec<Complex64> = vals.iter().zip(&phases).map(|(&r, &p)| Complex64::from_polar(r, p)).collect();
        let ff = split_form_factor(&c, &g, 1.0).unwrap();
        let (real, ph) = gauge_to_real(&ff);
        prop_assert!(real.is_real());
        let (a, b) = (norms(&ff, &g).unwrap(), norms(&real, &g).unwrap());
        prop_assert!((a.l2 - b.l2).abs() <= 1e-12 * a.l2.max(1.0));
        prop_assert!((a.uv_norm - b.uv_norm).abs() <= 1e-12 * a.uv_norm.max(1.0));
        let back = apply_phases(&real, &ph).unwrap();
        for (x, y) in back.values().iter().zip(ff.values()) {
            prop_assert!((x - y).norm() <= 1e-14 * y.norm().max(1.0));
        }
        // the phase only sees |v|²
        let p = random_path(1, 0, 2.0);
        let u1 = phase_u(&p, 1.5, &g, &ff).unwrap().u;
        let u2 = phase_u(&p, 1.5, &g, &real).unwrap().u;
        prop_assert!((u1 - u2).abs() <= 1e-12 * u1.abs().max(1.0));
    }

    #[test]
    fn chapman_kolmogorov(t in 0.0f64..5.0, s in 0.0f64..5.0) {
        for x in Spin::BOTH {
            for y in Spin::BOTH {
                let lhs = transition_prob(t + s, x, y).unwrap();
                let rhs: f64 = Spin::BOTH
                    .iter()
                    .map(|&z| transition_prob(t, x, z).unwrap() * transition_prob(s, z, y).unwrap())
                    .sum();
                prop_assert!((lhs - rhs).abs() <= 1e-14);
            }
            let total: f64 = Spin::BOTH.iter().map(|&y| transition_prob(t, x, y).unwrap()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn shifts_compose(seed in any::<u64>(), a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let p = random_path(seed, 3, 4.5);
        let ab = shift_path(&shift_path(&p, a).unwrap(), b).unwrap();
        let direct = shift_path(&p, a + b).unwrap();
        prop_assert_eq!(ab.x0(), direct.x0());
        prop_assert!((ab.horizon() - direct.horizon()).abs() <= 1e-12);
        prop_assert_eq!(ab.jumps().len(), direct.jumps().len());
        for (x, y) in ab.jumps().iter().zip(direct.jumps()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let r = 0.3 * p.horizon();
        let shifted = shift_path(&p, a).unwrap();
        if r <= shifted.horizon() {
            prop_assert_eq!(spin_at(&shifted, r).unwrap(), spin_at(&p, a + r).unwrap());
        }
    }

    #[test]
    fn u_is_linear_and_bounded((g, vals) in grid_and_values(6), seed in any::<u64>(), t in 0.0f64..3.0, alpha in -2.0f64..2.0) {
        let p = random_path(seed, 0, 3.0);
        let v = real_ff(&vals, &g, 1.0);
        let w = real_ff(&vals.iter().map(|x| x * x - 0.5).collect::<Vec<_>>(), &g, 1.0);
        let comb = v.combine(alpha, &w, 1.0).unwrap();
        for f in [u_plus, u_minus] {
            let (a, b, c) = (f(&p, t, &g, &v).unwrap(), f(&p, t, &g, &w).unwrap(), f(&p, t, &g, &comb).unwrap());
            for k in 0..g.len() {
                let want = a[k] * alpha + b[k];
                prop_assert!((c[k] - want).norm() <= 1e-12 * (1.0 + want.norm()));
                let bound = v.values()[k].norm() / g.omegas()[k];
                prop_assert!(a[k].norm() <= bound * (1.0 + 1e-12) + 1e-300);
            }
        }
    }

    #[test]
    fn phase_routes_agree_and_reflect((g, vals) in grid_and_values(6), seed in any::<u64>(), t in 0.0f64..4.0) {
        let p = random_path(seed, 1, 4.0);
        let c: Vec<Complex64> = vals.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let a = phase_regular(&p, t, &g, &c).unwrap();
        let b = phase_uv(&p, t, &g, &c).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
        let v = real_ff(&vals, &g, 1.0);
        prop_assert_eq!(phase_u(&p, t, &g, &v).unwrap().u, phase_u(&p.reflected(), t, &g, &v).unwrap().u);
    }

    #[test]
    fn per_path_supermultiplicativity((g, vals) in grid_and_values(6), seed in any::<u64>(), t in 0.0f64..2.0, s in 0.0f64..2.0) {
        let uv = FormFactor::ultraviolet(&vals);
        let p = random_path(seed, 2, 4.0);
        let bound = norms(&uv, &g).unwrap().uv_norm.powi(2);
        let full = phase_u(&p, t + s, &g, &uv).unwrap().u;
        let head = phase_u(&p, t, &g, &uv).unwrap().u;
        let tail = phase_u(&shift_path(&p, t).unwrap(), s, &g, &uv).unwrap().u;
        prop_assert!(full >= head + tail - bound - 1e-10 * bound.max(1.0));
    }

    #[test]
    fn time_derivatives_of_u(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let g = ModeGrid::new(vec![0.4, 1.3, 5.0], vec![1.0, 0.5, 0.2]).unwrap();
        let v = FormFactor::regular(&[0.7, -0.4, 1.1]);
        let p = random_path(seed, 4, 3.0);
        let t = frac * 3.0;
        let h = 1e-5;
        let near_jump = p.jumps().iter().any(|&j| (j - t).abs() < 4.0 * h);
        prop_assume!(!near_jump);
        let gam = spin_at(&p, t).unwrap().sign();
        let (pp, pm) = (u_plus(&p, t + h, &g, &v).unwrap(), u_plus(&p, t - h, &g, &v).unwrap());
        let (mp, mm) = (u_minus(&p, t + h, &g, &v).unwrap(), u_minus(&p, t - h, &g, &v).unwrap());
        let m0 = u_minus(&p, t, &g, &v).unwrap();
        for k in 0..3 {
            let om = g.omegas()[k];
            let vk = v.values()[k];
            let d_plus = (pp[k] - pm[k]) / (2.0 * h);
            prop_assert!((d_plus - vk * gam * (-t * om).exp()).norm() <= 1e-6);
            let d_minus = (mp[k] - mm[k]) / (2.0 * h);
            prop_assert!((d_minus - (vk * gam - m0[k] * om)).norm() <= 1e-6);
        }
        // du/dt = Σ w v (γ_t U_t^− − v/ω)
        let du = (phase_u(&p, t + h, &g, &v).unwrap().u - phase_u(&p, t - h, &g, &v).unwrap().u) / (2.0 * h);
        let expect: f64 = (0..3)
            .map(|k| {
                let (w, om, vk) = (g.weights()[k], g.omegas()[k], v.values()[k].re);
                w * vk * (gam * m0[k].re - vk / om)
            })
            .sum();
        prop_assert!((du - expect).abs() <= 1e-6);
    }

    #[test]
    fn path_dump_roundtrip(seed in any::<u64>(), horizon in 0.0f64..6.0) {
        let p = random_path(seed, 7, horizon);
        let back: SpinPath = p.to_string().parse().unwrap();
        prop_assert_eq!(back, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weyl_relation_on_low_block(f in prop::collection::vec((-0.4f64..0.4, -0.4f64..0.4), 2), h in prop::collection::vec((-0.4f64..0.4, -0.4f64..0.4), 2)) {
        let g = ModeGrid::new(vec![0.8, 2.2], vec![1.0, 0.6]).unwrap();
        let space = enumerate_basis(2, 18).unwrap();
        let f: Vec<Complex64> = f.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
        let h: Vec<Complex64> = h.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
        let sum: Vec<Complex64> = f.iter().zip(&h).map(|(a, b)| a + b).collect();
        let wf = weyl_matrix(&f, &g, &space).unwrap();
        let wh = weyl_matrix(&h, &g, &space).unwrap();
        let ws = weyl_matrix(&sum, &g, &space).unwrap();
        let phase = Complex64::new(0.0, -g.inner(&f, &h).im).exp();
        let low = space.prefix_dim(3);
        let lhs = wf.mul(&wh);
        for r in 0..low {
            for c in 0..low {
                prop_assert!((lhs.matrix[(r, c)] - ws.matrix[(r, c)] * phase).norm() <= 1e-8);
            }
        }
        // 𝒲(f) ε(0) = e^{−‖f‖²/2} ε(f), compared on the low block
        let e0 = coherent_vector(&[Complex64::new(0.0, 0.0); 2], &g, &space).unwrap();
        let ef = coherent_vector(&f, &g, &space).unwrap();
        let moved = wf.apply(&e0.coeffs);
        let norm = (-0.5 * g.inner(&f, &f).re).exp();
        for r in 0..low {
            prop_assert!((moved[r] - ef.coeffs[r] * norm).norm() <= 1e-8);
        }
    }
}

#[test]
fn markov_property_of_sampled_paths() {
    // joint law of (X_t, X_{t+s}) factorizes through the transition function
    let (t, s, n) = (0.4, 0.7, 40_000u64);
    let mut counts = [[0u64; 2]; 2];
    for i in 0..n {
        let p = sample_path(Spin::Up, t + s, &RngStream::new(77, i)).unwrap();
        let a = spin_at(&p, t).unwrap().index();
        let b = spin_at(&p, t + s).unwrap().index();
        counts[a][b] += 1;
    }
    for z in Spin::BOTH {
        for y in Spin::BOTH {
            let p = transition_prob(t, Spin::Up, z).unwrap() * transition_prob(s, z, y).unwrap();
            let emp = counts[z.index()][y.index()] as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((emp - p).abs() <= 3.5 * sigma, "z={z} y={y}: {emp} vs {p}");
        }
    }
}

#[test]
fn vacuum_amplitude_is_continuous_in_v() {
    // common random numbers: amplitude changes are O(‖δv‖)
    let g = ModeGrid::new(vec![0.5, 1.5, 4.0], vec![1.0, 0.5, 0.25]).unwrap();
    let base = [0.6, 0.5, 0.8];
    let e = Engine::default();
    let a0 = e
        .vacuum_amplitude(1.0, &g, &real_ff(&base, &g, 1.0), 4000, 12)
        .unwrap()
        .mean;
    let mut prev = f64::INFINITY;
    for eps in [1e-1, 1e-2, 1e-3] {
        let moved: Vec<f64> = base.iter().map(|x| x + eps).collect();
        let a = e
            .vacuum_amplitude(1.0, &g, &real_ff(&moved, &g, 1.0), 4000, 12)
            .unwrap()
            .mean;
        let ratio = (a - a0).abs() / eps;
        assert!(ratio < 10.0);
        assert!((a - a0).abs() < prev);
        prev = (a - a0).abs();
    }
}

#[test]
fn free_vacuum_amplitude_is_normalized() {
    let g = ModeGrid::single(1.0, 1.0).unwrap();
    let e = Engine::default();
    for t in [0.0, 0.5, 2.0, 5.0] {
        let r = e.vacuum_amplitude(t, &g, &FormFactor::zero(1), 100, 1).unwrap();
        assert!(r.mean > 0.0 && r.mean <= 1.0);
    }
}

#[test]
fn positive_weights_and_supermultiplicative_means() {
    let g = ModeGrid::new(vec![2.0, 6.0, 15.0], vec![1.0, 0.8, 0.5]).unwrap();
    let uv = FormFactor::ultraviolet(&[1.0, 1.5, 2.0]);
    let e = Engine::default();
    let bound = norms(&uv, &g).unwrap().uv_norm.powi(2).exp();
    let a = e.vacuum_amplitude(1.0, &g, &uv, 20_000, 3).unwrap();
    let b = e.vacuum_amplitude(2.0, &g, &uv, 20_000, 4).unwrap();
    assert!(a.mean > 0.0 && b.mean > 0.0);
    let rhs = bound * a.mean * a.mean;
    let sigma = (b.stderr.powi(2) + (2.0 * bound * a.mean * a.stderr).powi(2)).sqrt();
    assert!(b.mean <= rhs + 3.0 * sigma);
    for i in 0..200 {
        let p = random_path(9, i, 1.0);
        assert!(phase_u(&p, 1.0, &g, &uv).unwrap().u.exp() > 0.0);
    }
}

#[test]
fn ground_energy_orders_like_ed_across_couplings() {
    let g = ModeGrid::single(1.0, 1.0).unwrap();
    let space = enumerate_basis(1, 14).unwrap();
    let e = Engine::default();
    let ts = [2.0, 3.0, 4.0, 5.0];
    let mut ed = Vec::new();
    let mut mc = Vec::new();
    for c in [0.2, 0.6, 1.0] {
        let v = split_real(&[c], &g, 1.0).unwrap();
        let spec = h_ren_matrix(&v, &g, &space).unwrap().spectrum().unwrap();
        ed.push(ground_state_from(&spec).unwrap().energy);
        let fit = e.ground_energy(&g, &v, &ts, 50_000, 77).unwrap();
        mc.push((fit.energy, fit.stderr));
    }
    for k in 1..ed.len() {
        let ed_up = ed[k] > ed[k - 1];
        let gap = mc[k].0 - mc[k - 1].0;
        let sigma = mc[k].1.hypot(mc[k - 1].1);
        assert_eq!(ed_up, gap > 0.0, "ED {ed:?} MC {mc:?}");
        assert!(gap.abs() > 3.0 * sigma, "ED {ed:?} MC {mc:?}");
    }
}
