//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::time::{Duration, Instant};

use num_complex::Complex64;

use spinfk::checks::{path_identity_suite, IdentityReport, FLOW_PHASE_TOL, FLOW_U_TOL, ROUTE_TOL};
use spinfk::fkf::{AmplitudeSpec, Engine, EstimatorResult};
use spinfk::fock::{
    coherent_element_ed, coherent_vector, enumerate_basis, ground_state_from, h_dressed, h_ren_matrix,
    hsb_transformed, it_matrix, vacuum_amplitude_ed, Spectrum,
};
use spinfk::functionals::{phase_u, u_minus, u_plus};
use spinfk::grid::{build_grid, norms, split_real, FormFactor, GridSpec, ModeGrid};
use spinfk::path::{sample_path, spin_at, transition_prob, RngStream, Spin, SpinPath};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: Vec<(u32, &str, u64, fn() -> Check)> = vec![
        (1, "per-path identity suite", 30, criterion_identities),
        (2, "quadrature oracles for U+, U-, u_t", 60, criterion_quadrature),
        (3, "Markov-chain law and Stieltjes generator", 60, criterion_markov),
        (4, "MC vs ED amplitudes, one mode", 120, criterion_amplitudes),
        (5, "renormalized Hamiltonian consistency", 30, criterion_hamiltonian),
        (6, "ground-state suite", 180, criterion_ground_state),
        (7, "UV cutoff convergence sweep", 120, criterion_renorm),
        (8, "determinism across worker counts", 60, criterion_determinism),
    ];
    let mut failed = 0;
    for (id, title, limit, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.2}s of {limit}s", elapsed.as_secs_f64());
        println!(
            "{} [{id}] {title}: {detail} ({timing})",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

fn five_mode_grid() -> ModeGrid {
    build_grid(&GridSpec::LogSpaced {
        omega_min: 0.2,
        omega_max: 20.0,
        n: 5,
        density_exponent: 2.0,
    })
    .unwrap()
}

const FIVE_MODE_V: [f64; 5] = [0.6, 0.8, 1.0, 1.2, 1.5];

fn describe(r: &IdentityReport) -> String {
    format!(
        "flowU+ {:.1e} flowU- {:.1e} flow_u {:.1e} routes {:.1e} reflect {:.1e} supermult {:.2}",
        r.flow_plus, r.flow_minus, r.flow_phase, r.route_equality, r.reflection, r.supermultiplicativity
    )
}

fn criterion_identities() -> Check {
    let g = five_mode_grid();
    let e = Engine::default();
    let regular = FormFactor::regular(&FIVE_MODE_V);
    let mixed = split_real(&FIVE_MODE_V, &g, 1.0).unwrap();
    let uv = FormFactor::ultraviolet(&FIVE_MODE_V);
    let mut msgs = Vec::new();
    let mut ok = true;
    for (name, v, need_bound) in [("regular", &regular, false), ("mixed", &mixed, false), ("uv", &uv, true)] {
        let r = path_identity_suite(&e, &g, v, 2000, 4.0, 20).map_err(|e| e.to_string())?;
        let exact = r.flow_plus <= FLOW_U_TOL
            && r.flow_minus <= FLOW_U_TOL
            && r.flow_phase <= FLOW_PHASE_TOL
            && r.route_equality <= ROUTE_TOL
            && r.reflection == 0.0
            && r.n_paths >= 1000;
        ok &= exact && (!need_bound || r.supermultiplicativity <= 0.0);
        msgs.push(format!("{name}: {}", describe(&r)));
    }
    ensure(ok, msgs.join("; "))
}

// Gauss–Kronrod 7/15 nodes on [−1, 1], non-negative half.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (val, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return val;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, 0.5 * tol, depth - 1) + adaptive(f, m, b, 0.5 * tol, depth - 1)
}

/// Integral over `[0, t]` split at the path's jump times.
fn piecewise(path: &SpinPath, t: f64, f: &dyn Fn(f64) -> f64, tol: f64) -> f64 {
    let mut breaks = vec![0.0];
    breaks.extend(path.jumps().iter().copied().filter(|&j| j < t));
    breaks.push(t);
    breaks.windows(2).map(|w| adaptive(f, w[0], w[1], tol, 40)).sum()
}

fn gamma(path: &SpinPath, s: f64) -> f64 {
    spin_at(path, s).unwrap().sign()
}

fn criterion_quadrature() -> Check {
    let g = five_mode_grid();
    let v = split_real(&FIVE_MODE_V, &g, 1.0).unwrap();
    let vals: Vec<f64> = v.real_values().unwrap();
    let tol = 1e-12;
    let (mut dp, mut dm, mut da, mut db) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..100u64 {
        let horizon = 3.0;
        let path = sample_path(if i % 2 == 0 { Spin::Up } else { Spin::Down }, horizon, &RngStream::new(31, i)).unwrap();
        let t = horizon * (0.1 + 0.9 * ((i as f64 * 0.618_033_988_75) % 1.0));
        let plus = u_plus(&path, t, &g, &v).unwrap();
        let minus = u_minus(&path, t, &g, &v).unwrap();
        let u = phase_u(&path, t, &g, &v).unwrap().u;
        let mut u_nested = 0.0;
        for k in 0..g.len() {
            let (om, w, vk) = (g.omegas()[k], g.weights()[k], vals[k]);
            let qp = vk * piecewise(&path, t, &|s| (-s * om).exp() * gamma(&path, s), tol);
            let qm = vk * piecewise(&path, t, &|s| (-(t - s) * om).exp() * gamma(&path, s), tol);
            dp = dp.max((plus[k].re - qp).abs());
            dm = dm.max((minus[k].re - qm).abs());
            // ∫_0^t γ_s ⟨U_s^−, v⟩ ds − t‖v/√ω‖², inner integral also by quadrature
            let inner = |s: f64| piecewise(&path, s, &|r| (-(s - r) * om).exp() * gamma(&path, r), tol * 1e-2);
            u_nested += w * vk * vk * piecewise(&path, t, &|s| gamma(&path, s) * inner(s), tol) - t * w * vk * vk / om;
        }
        // u_t = ∫_0^t (γ_0 ν(s) + Σ_{r ≤ s} ν(s − r) Δγ_r) γ_s ds
        let nu = |s: f64| -> f64 {
            (0..g.len())
                .map(|k| -g.weights()[k] * vals[k] * vals[k] * (-s * g.omegas()[k]).exp() / g.omegas()[k])
                .sum()
        };
        let integrand = |s: f64| {
            let mut inner = path.x0().sign() * nu(s);
            let mut after = path.x0().sign();
            for &r in &path.jumps()[..path.jumps_until(s)] {
                after = -after;
                inner += nu(s - r) * 2.0 * after;
            }
            inner * gamma(&path, s)
        };
        let u_def = piecewise(&path, t, &integrand, tol);
        da = da.max((u - u_nested).abs());
        db = db.max((u - u_def).abs());
    }
    let msg = format!("max |U+ - quad| {dp:.1e}, |U- - quad| {dm:.1e}, |u - nested quad| {da:.1e}, |u - defining quad| {db:.1e}");
    ensure(dp <= 1e-8 && dm <= 1e-8 && da <= 1e-8 && db <= 1e-8, msg)
}

fn criterion_markov() -> Check {
    let e = Engine::default();
    let n = 100_000u64;
    let z = 2.576;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (j, &t) in [0.25, 1.0, 3.0].iter().enumerate() {
        for x in Spin::BOTH {
            for y in Spin::BOTH {
                let r = e
                    .estimate_transition(t, x, y, n, 1000 + j as u64 * 2 + x.index() as u64)
                    .map_err(|e| e.to_string())?;
                let p = transition_prob(t, x, y).unwrap();
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                let dev = (r.mean - p).abs() / sigma;
                worst = worst.max(dev);
                ok &= dev <= z;
            }
        }
    }
    let st = e.stieltjes_mc_check(1.0, n, 77).map_err(|e| e.to_string())?;
    let st_sigmas = st.difference / st.pooled_sigma;
    ok &= st.agrees(3.0);
    ensure(
        ok,
        format!(
            "worst transition deviation {worst:.2} sigma (99% CI = {z}); Stieltjes jump {:.5} vs quadrature {:.5} ({st_sigmas:.2} pooled sigma, exact {:.5})",
            st.jump.mean, st.quadrature.mean, st.exact
        ),
    )
}

fn criterion_amplitudes() -> Check {
    let g = ModeGrid::single(1.0, 1.0).unwrap();
    let v = FormFactor::regular(&[0.5]);
    let space = enumerate_basis(1, 10).unwrap();
    let spectrum = h_ren_matrix(&v, &g, &space).unwrap().spectrum().unwrap();
    let e = Engine::default();
    let n = 100_000;
    let cases = [(Spin::Up, Spin::Up, 0.3, 0.4), (Spin::Up, Spin::Down, -0.2, 0.5)];
    let mut worst_sigma: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut record = |mc: &EstimatorResult, ed: f64| {
        worst_sigma = worst_sigma.max(mc.sigmas_from(ed));
        worst_rel = worst_rel.max(mc.stderr / mc.mean.abs());
    };
    for (i, &t) in [0.5, 1.0, 2.0].iter().enumerate() {
        let amp = e.vacuum_amplitude(t, &g, &v, n, 400 + i as u64).map_err(|e| e.to_string())?;
        record(&amp, vacuum_amplitude_ed(&spectrum, t));
        for (j, &(x, y, gv, hv)) in cases.iter().enumerate() {
            let spec = AmplitudeSpec {
                x_in: x,
                x_out: Some(y),
                g: vec![gv],
                h: vec![hv],
                t,
            };
            let mc = e
                .estimate_amplitude(&spec, &g, &v, n, 500 + 10 * i as u64 + j as u64)
                .map_err(|e| e.to_string())?;
            let eg = coherent_vector(&[Complex64::new(gv, 0.0)], &g, &space).unwrap();
            let eh = coherent_vector(&[Complex64::new(hv, 0.0)], &g, &space).unwrap();
            record(&mc, coherent_element_ed(&spectrum, x, Some(y), &eg, &eh, t).re);
        }
    }
    ensure(
        worst_sigma <= 3.0 && worst_rel <= 0.01,
        format!("9 amplitudes, worst |MC - ED| {worst_sigma:.2} sigma, worst stderr/mean {worst_rel:.2e}"),
    )
}

fn criterion_hamiltonian() -> Check {
    let g = ModeGrid::new(vec![0.4, 1.1, 2.5], vec![1.0, 0.7, 0.4]).unwrap();
    let vals = [0.5, 0.7, 0.9];
    let space = enumerate_basis(3, 8).unwrap();
    let reg = FormFactor::regular(&vals);
    let conj = hsb_transformed(&reg, &g, &space)
        .unwrap()
        .max_abs_diff(&h_ren_matrix(&reg, &g, &space).unwrap());

    let mut split = 0.0f64;
    let variants = [
        reg.clone(),
        split_real(&vals, &g, 1.0).unwrap(),
        split_real(&vals, &g, 2.0).unwrap(),
        FormFactor::ultraviolet(&vals),
    ];
    for x in Spin::BOTH {
        let base = h_dressed(&variants[0], x, &g, &space).unwrap();
        for other in &variants[1..] {
            split = split.max(base.max_abs_diff(&h_dressed(other, x, &g, &space).unwrap()));
        }
    }

    let big = enumerate_basis(3, 14).unwrap();
    let to_c = |x: &[f64]| x.iter().map(|&r| Complex64::new(r, 0.0)).collect::<Vec<_>>();
    let f = to_c(&[0.3, -0.2, 0.25]);
    let h = to_c(&[0.2, 0.35, -0.1]);
    let t = 0.7;
    let it = it_matrix(t, &f, &g, &big).unwrap();
    let eh = coherent_vector(&h, &g, &big).unwrap();
    let decayed: Vec<Complex64> = h.iter().zip(g.omegas()).map(|(z, om)| z * (-t * om).exp()).collect();
    let ed = coherent_vector(&decayed, &g, &big).unwrap();
    let fwd = (it.apply(&eh.coeffs) - ed.coeffs.clone() * (-g.inner(&f, &h)).exp())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let moved: Vec<Complex64> = decayed.iter().zip(&f).map(|(a, b)| a - b).collect();
    let em = coherent_vector(&moved, &g, &big).unwrap();
    let adj = (it.adjoint().apply(&eh.coeffs) - em.coeffs)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    ensure(
        conj <= 1e-10 && split <= 1e-8 && fwd <= 1e-8 && adj <= 1e-8,
        format!("|U H_SB U* - H_ren| {conj:.1e}, split independence {split:.1e}, I_t {fwd:.1e}, I_t* {adj:.1e}"),
    )
}

fn finite_t_overlap(spec: &Spectrum, t: f64) -> f64 {
    vacuum_amplitude_ed(spec, t).powi(2) / vacuum_amplitude_ed(spec, 2.0 * t)
}

fn criterion_ground_state() -> Check {
    let models: Vec<(&str, ModeGrid, Vec<f64>, usize)> = vec![
        ("1-mode", ModeGrid::single(1.0, 1.0).unwrap(), vec![0.5], 12),
        ("2-mode", ModeGrid::new(vec![0.5, 2.0], vec![1.0, 1.0]).unwrap(), vec![0.3, 0.6], 12),
        ("3-mode", ModeGrid::new(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]).unwrap(), vec![0.4, 0.4, 0.4], 9),
    ];
    let e = Engine::default();
    let mut ok = true;
    let mut msgs = Vec::new();
    for (i, (name, g, vals, cap)) in models.iter().enumerate() {
        let v = split_real(vals, g, 1.0).unwrap();
        let space = enumerate_basis(g.len(), *cap).unwrap();
        let spec = h_ren_matrix(&v, g, &space).unwrap().spectrum().unwrap();
        let gs = ground_state_from(&spec).unwrap();
        let bound = (-norms(&v, g).unwrap().uv_norm.powi(2)).exp();
        let overlap2 = gs.vacuum_overlap.powi(2);
        let t = 4.0;
        let mc = e.overlap_ratio(g, &v, t, 100_000, 900 + i as u64).map_err(|e| e.to_string())?;
        let ed_t = finite_t_overlap(&spec, t);
        let sig = mc.sigmas_from(ed_t);
        let good = gs.gap > 0.0 && !gs.degenerate && overlap2 >= bound && sig <= 3.0;
        ok &= good;
        msgs.push(format!(
            "{name}: gap {:.3}, |<psi0,Omega>|^2 {overlap2:.5} >= {bound:.5}, MC ratio {:.5}+-{:.5} vs ED(t=4) {ed_t:.5} ({sig:.2} sigma, limit {overlap2:.5})",
            gs.gap, mc.mean, mc.stderr
        ));
    }
    ensure(ok, msgs.join("; "))
}

fn criterion_renorm() -> Check {
    let g = build_grid(&GridSpec::LogSpaced {
        omega_min: 1.0,
        omega_max: 1e4,
        n: 40,
        density_exponent: 0.0,
    })
    .unwrap();
    let v = split_real(&[1.0; 40], &g, 1.0).unwrap();
    let lambdas = [10.0, 1e2, 1e3, 1e4];
    let sweep = Engine::default()
        .renorm_sweep(&g, &v, &lambdas, 1.0, 100_000, 4242)
        .map_err(|e| e.to_string())?;
    let devs: Vec<f64> = sweep.rows.iter().map(|r| r.max_u_dev).collect();
    let amps: Vec<f64> = sweep.rows.iter().map(|r| r.amplitude.mean).collect();
    let deltas: Vec<f64> = amps.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let monotone = devs.windows(2).all(|w| w[1] < w[0]);
    let cauchy = deltas.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| {
            if r.cut_norm > 0.0 {
                format!("{:.2}", r.max_u_dev / r.cut_norm)
            } else {
                "-".into()
            }
        })
        .collect();
    ensure(
        monotone && cauchy && devs[3] < 1e-3,
        format!(
            "max|du| {:?}, amplitudes {:?}, |dA| {:?}, dev/||(v-v_L)/w|| [{}]",
            devs.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>(),
            amps.iter().map(|d| format!("{d:.5}")).collect::<Vec<_>>(),
            deltas.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>(),
            ratios.join(", ")
        ),
    )
}

fn criterion_determinism() -> Check {
    let g = five_mode_grid();
    let v = split_real(&FIVE_MODE_V, &g, 1.0).unwrap();
    let n = 50_000;
    let spec = AmplitudeSpec {
        x_in: Spin::Down,
        x_out: Some(Spin::Up),
        g: vec![0.1; 5],
        h: vec![-0.1; 5],
        t: 1.5,
    };
    let run = |workers: usize| -> Result<String, spinfk::Error> {
        let e = Engine::new(workers)?;
        let a = e.vacuum_amplitude(2.0, &g, &v, n, 5)?;
        let b = e.estimate_amplitude(&spec, &g, &v, n, 6)?;
        let c = e.overlap_ratio(&g, &v, 1.0, n, 7)?;
        let d = e.renorm_sweep(&g, &v, &[1.0, 5.0, 20.0], 1.0, n, 8)?;
        let s = e.stieltjes_mc_check(1.0, n, 9)?;
        let r = path_identity_suite(&e, &g, &v, 2000, 3.0, 10)?;
        // bit patterns, so that -0.0/0.0 or NaN differences are not masked
        let bits = |x: &EstimatorResult| format!("{:x}/{:x}", x.mean.to_bits(), x.stderr.to_bits());
        let mut out = vec![bits(&a), bits(&b), bits(&c), bits(&s.jump), bits(&s.quadrature)];
        out.extend(d.rows.iter().map(|r| format!("{}/{:x}", bits(&r.amplitude), r.max_u_dev.to_bits())));
        out.push(format!("{:x}", r.flow_phase.to_bits()));
        Ok(out.join(","))
    };
    let one = run(1).map_err(|e| e.to_string())?;
    let two = run(2).map_err(|e| e.to_string())?;
    let eight = run(8).map_err(|e| e.to_string())?;
    ensure(
        one == two && two == eight,
        format!("6 estimators, n = {n}: 1/2/8 workers {}", if one == two && two == eight { "bit-identical" } else { "differ" }),
    )
}
