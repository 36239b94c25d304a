//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the console.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lindkz::bloch::{qubit_density, qubit_trace_distance, to_bloch, from_bloch, trace_distance};
use lindkz::correlate::{corr_zz, correlation_profile, pair_correlators};
use lindkz::ising::{defect_sweep, momentum_grid, run_quench, IsingParams, ModeEnsemble};
use lindkz::liouville::{assemble, spectrum, JumpChannel, QubitHamiltonian};
use lindkz::lz::{kz_predict, lz_matrix, lz_sweep, simulate_excitation, LzParams};
use lindkz::oracle::{dense_evolve, ising_oracle_run, kink_density, mode_bloch_vectors, zz_correlation, DenseLindbladSystem};
use lindkz::propagate::{integrate_vec, OdeOptions, TimeDependentSystem, Tolerances};
use lindkz::scaling::{fit_power_law, geomspace};
use lindkz::{BlochVector, DensityMatrix, GellMannBasis};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tight() -> Tolerances {
    Tolerances::new(1e-10, 1e-12).unwrap()
}

fn closed_lz_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (g, v) in [(0.5, 0.4), (1.0, 1.0), (0.25, 1.0)] {
        let w = 100.0 * f64::max(g, 1.0) / v;
        let p = LzParams::with_window(v, g, 0.0, -w, w).unwrap();
        let d = simulate_excitation(&p, tight()).unwrap().excitation;
        let exact = (-PI * g * g / v).exp();
        worst = worst.max((d - exact).abs());
        parts.push(format!("(g={g}, v={v}): {d:.5} vs {exact:.5}"));
    }
    outcome(worst <= 2e-3, format!("max |D − P_LZ| = {worst:.2e} (≤ 2e-3); {}", parts.join(", ")))
}

fn liouvillian_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut entry_err: f64 = 0.0;
    let mut eig_err: f64 = 0.0;
    for _ in 0..100 {
        let (v, g, kappa, t) =
            (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.0..1.0), rng.gen_range(-3.0..3.0));
        let p = LzParams::new(v, g, kappa).unwrap();
        let x = v * t;
        let want = Matrix3::new(
            -kappa * x * x,
            -x,
            kappa * g * x,
            x,
            -kappa * (x * x + g * g),
            -g,
            kappa * g * x,
            g,
            -kappa * g * g,
        ) * 2.0;
        let h = QubitHamiltonian::new(x, g);
        let sys = assemble(&h, &[JumpChannel::from_hamiltonian(&h, kappa).unwrap()]);
        for m in [lz_matrix(&p, t), sys.m] {
            for (a, b) in m.iter().zip(want.iter()) {
                entry_err = entry_err.max((a - b).abs() / b.abs().max(1.0));
            }
        }
        let e2 = x * x + g * g;
        let e = e2.sqrt();
        let closed = [C::new(0.0, 0.0), C::new(-2.0 * kappa * e2, 2.0 * e), C::new(-2.0 * kappa * e2, -2.0 * e)];
        let num = spectrum(&sys).unwrap().eigenvalues;
        for z in closed {
            let d = num.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            eig_err = eig_err.max(d);
        }
    }
    outcome(
        entry_err <= 1e-14 && eig_err <= 1e-10,
        format!("M entrywise (relative to max(1,|M_ij|)) {entry_err:.1e} (≤ 1e-14); eigenvalues {eig_err:.1e} (≤ 1e-10); 100 draws"),
    )
}

fn random_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let r = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if r.norm() <= 1.0 {
            return r;
        }
    }
}

fn trace_distance_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pair_err: f64 = 0.0;
    for _ in 0..1000 {
        let (a, b) = (random_ball(&mut rng), random_ball(&mut rng));
        let full = trace_distance(
            &DensityMatrix::new(qubit_density(&a)).unwrap(),
            &DensityMatrix::new(qubit_density(&b)).unwrap(),
        )
        .unwrap();
        pair_err = pair_err.max((full - (a - b).norm() / 2.0).abs()).max((full - qubit_trace_distance(&a, &b)).abs());
    }

    // Single-qubit dense reference: LZ with L = H, then a frozen dephasing
    // stage at t_end that removes coherences in the final eigenbasis.
    let (v, g, kappa, w) = (0.4, 0.5, 0.4, 20.0);
    let ham = move |t: f64| {
        let m = QubitHamiltonian::new(v * t, g).matrix();
        DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
    };
    let axis = |t: f64| Vector3::new(g, 0.0, v * t).normalize();
    let sys = DenseLindbladSystem::energy_dephasing(2, ham, kappa).unwrap();
    let rho0 = DensityMatrix::new(qubit_density(&axis(-w))).unwrap();
    let quench = dense_evolve(&sys, &rho0, &[-w, w], tight()).unwrap();
    let frozen = DenseLindbladSystem::energy_dephasing(2, move |_| ham(w), kappa).unwrap();
    let relaxed = dense_evolve(&frozen, &quench.states[1], &[0.0, 2.0], tight()).unwrap();
    let rho = &relaxed.states[1];
    let target = DensityMatrix::new(qubit_density(&axis(w))).unwrap();
    let d = trace_distance(rho, &target).unwrap();
    let p0 = (target.matrix() * rho.matrix()).trace().re;
    let law_err = (d - (1.0 - p0)).abs();
    let bloch = simulate_excitation(&LzParams::with_window(v, g, kappa, -w, w).unwrap(), tight()).unwrap().excitation;
    let bloch_err = (bloch - (1.0 - p0)).abs();
    outcome(
        pair_err <= 1e-12 && law_err <= 1e-8 && bloch_err <= 1e-8,
        format!(
            "1000 pairs {pair_err:.1e} (≤ 1e-12); class-I oracle |D − (1 − p₀)| = {law_err:.1e}, Bloch vs oracle {bloch_err:.1e} (≤ 1e-8)"
        ),
    )
}

fn ai_predictor() -> Outcome {
    let g = 0.5;
    let grid: Vec<f64> = (0..15).map(|i| 0.1 + 0.1 * i as f64).collect();
    let rows = lz_sweep(g, &grid, &[0.1, 0.4], (-10.0, 10.0), Tolerances::default()).unwrap();
    let rel = |r: &lindkz::lz::SweepRow| (r.d_kz - r.d_numeric).abs() / r.d_numeric;
    let worst = rows.iter().map(rel).fold(0.0, f64::max);
    let at_one = |k: f64| rows.iter().find(|r| r.kappa == k && (r.g2_over_v - 1.0).abs() < 1e-9).map(rel).unwrap();
    let (a1, a4) = (at_one(0.1), at_one(0.4));
    outcome(
        worst <= 0.15 && a4 <= a1,
        format!(
            "max relative deviation {:.1}% (≤ 15%); at g²/v = 1: κ=0.1 {:.1}%, κ=0.4 {:.1}% (need κ=0.4 ≤ κ=0.1)",
            100.0 * worst,
            100.0 * a1,
            100.0 * a4
        ),
    )
}

fn table_one() -> (Outcome, Vec<lindkz::ising::ScalingPoint>) {
    let kappas = [0.0, 0.05, 0.1, 0.4, 0.8];
    let reference = [-0.500, -0.504, -0.523, -0.541, -0.544];
    let taus = geomspace(10.0, 320.0, 6);
    let base = IsingParams::new(512, 10.0, 0.0).unwrap();
    let points = defect_sweep(&base, &kappas, &taus).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut prefactor = 0.0;
    for (&k, &mu_p) in kappas.iter().zip(&reference) {
        let (t, n): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.kappa == k).map(|p| (p.tau_q, p.n_d)).unzip();
        let fit = fit_power_law(&t, &n, None).unwrap();
        ok &= (fit.mu - mu_p).abs() <= 0.01;
        if k == 0.0 {
            prefactor = fit.prefactor();
        }
        parts.push(format!("κ={k}: {:.4} ({mu_p})", fit.mu));
    }
    let want = 1.0 / (2.0 * PI * 2f64.sqrt());
    let pre_ok = ((prefactor - want) / want).abs() <= 0.10;
    (
        outcome(ok && pre_ok, format!("μ {} within ±0.01; κ=0 prefactor {prefactor:.4} vs {want:.4} (±10%)", parts.join(", "))),
        points,
    )
}

struct OracleCase {
    n: usize,
    kappa: f64,
    ensemble: ModeEnsemble,
    table: lindkz::correlate::CorrelatorTable,
    rho: DensityMatrix,
    modes_nd: f64,
}

fn oracle_cases() -> Vec<OracleCase> {
    let mut out = Vec::new();
    for n in [4, 6] {
        for kappa in [0.0, 0.2] {
            let p = IsingParams { rtol: 1e-10, atol: 1e-12, ..IsingParams::new(n, 5.0, kappa).unwrap() };
            let (ensemble, res) = run_quench(&p).unwrap();
            let table = pair_correlators(&ensemble, 3.min(n / 2));
            let run = ising_oracle_run(n, 5.0, kappa, p.g_start, &[p.g_end], tight()).unwrap();
            out.push(OracleCase { n, kappa, ensemble, table, rho: run.states[0].clone(), modes_nd: res.n_d });
        }
    }
    out
}

fn oracle_equivalence(cases: &[OracleCase]) -> Outcome {
    let mut nd_err: f64 = 0.0;
    let mut occ_err: f64 = 0.0;
    for c in cases {
        let dense_nd = kink_density(&c.rho, c.n).unwrap();
        nd_err = nd_err.max((dense_nd - c.modes_nd).abs());
        let dense = mode_bloch_vectors(&c.rho, c.n).unwrap();
        assert_eq!(momentum_grid(c.n).unwrap(), c.ensemble.momenta);
        for (a, b) in dense.iter().zip(&c.ensemble.bloch) {
            occ_err = occ_err.max((0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max));
        }
    }
    outcome(
        nd_err <= 1e-6 && occ_err <= 1e-6,
        format!("N ∈ {{4,6}}, κ ∈ {{0,0.2}}, τ_Q = 5: n_D {nd_err:.1e}, mode Bloch vectors {occ_err:.1e} (≤ 1e-6)"),
    )
}

fn xi_at(tau_q: f64, kappa: f64, n: usize, r_max: usize) -> (Option<f64>, Vec<usize>) {
    let p = IsingParams::new(n, tau_q, kappa).unwrap();
    let (ens, _) = run_quench(&p).unwrap();
    let prof = correlation_profile(&pair_correlators(&ens, r_max), r_max).unwrap();
    (prof.xi, prof.minima)
}

fn correlators(cases: &[OracleCase]) -> Outcome {
    let mut errs = Vec::new();
    for c in cases.iter().filter(|c| c.n == 6) {
        let mut worst: f64 = 0.0;
        for r in 1..=3 {
            let modes = corr_zz(&c.table, r).unwrap();
            let dense = zz_correlation(&c.rho, c.n, r).unwrap().abs();
            worst = worst.max((modes - dense).abs());
        }
        errs.push((c.kappa, worst));
    }
    let corr_ok = errs.iter().all(|(_, e)| *e <= 1e-6);
    let (xi20, m20) = xi_at(20.0, 0.0, 1024, 200);
    let (xi80, m80) = xi_at(80.0, 0.0, 1024, 200);
    let (xi20k, m20k) = xi_at(20.0, 0.4, 1024, 200);
    let ratio = match (xi20, xi80) {
        (Some(a), Some(b)) => b / a,
        _ => f64::NAN,
    };
    let ratio_ok = (ratio / 2.0 - 1.0).abs() <= 0.15;
    let order_ok = matches!((xi20k, xi20), (Some(a), Some(b)) if a <= b);
    let fmt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.1}"));
    outcome(
        corr_ok && ratio_ok && order_ok,
        format!(
            "N=6 |C_R| R≤3: {} (≤ 1e-6); ξ(80)/ξ(20) = {ratio:.3} (2 ± 15%) from minima {m80:?} / {m20:?}; ξ(κ=0.4) = {} (minima {m20k:?}) vs ξ(0) = {}",
            errs.iter().map(|(k, e)| format!("κ={k} {e:.1e}")).collect::<Vec<_>>().join(", "),
            fmt(xi20k),
            fmt(xi20)
        ),
    )
}

fn properties(points: &[lindkz::ising::ScalingPoint]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fails = Vec::new();
    let opts = OdeOptions::default();

    // Unital dephasing never increases |R|; closed systems conserve it.
    let mut growth: f64 = 0.0;
    let mut closed_drift: f64 = 0.0;
    let mut max_re: f64 = f64::NEG_INFINITY;
    for _ in 0..50 {
        let h = QubitHamiltonian::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let ch = JumpChannel::hermitian(n, rng.gen_range(0.0..1.0)).unwrap();
        let r0 = random_ball(&mut rng);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
        let sys = TimeDependentSystem::constant(assemble(&h, &[ch]), 0.0, 5.0);
        let tr = integrate_vec(&sys, r0, &opts, &times).unwrap();
        let norms: Vec<f64> = tr.sample_vectors().map(|(_, r)| r.norm()).collect();
        for w in norms.windows(2) {
            growth = growth.max(w[1] - w[0]);
        }
        let closed = TimeDependentSystem::constant(assemble(&h, &[]), 0.0, 20.0);
        let u = r0.normalize();
        closed_drift = closed_drift.max((integrate_vec(&closed, u, &opts, &[]).unwrap().final_vector().norm() - 1.0).abs());

        let c = |rng: &mut ChaCha8Rng| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let general = JumpChannel::new(c(&mut rng), c(&mut rng), c(&mut rng), c(&mut rng), rng.gen_range(0.0..2.0)).unwrap();
        let sys = assemble(&h, &[general]);
        if let Ok(sp) = spectrum(&sys) {
            let scale = sys.m.norm().max(1.0);
            max_re = max_re.max(sp.eigenvalues.iter().map(|z| z.re / scale).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    if growth > 1e-10 {
        fails.push(format!("norm growth {growth:.1e}"));
    }
    if closed_drift > 1e-8 {
        fails.push(format!("closed drift {closed_drift:.1e}"));
    }
    if max_re > 1e-10 {
        fails.push(format!("Re μ {max_re:.1e}"));
    }

    // Bloch round trip in D = 2..4.
    let mut round: f64 = 0.0;
    for d in 2..=4 {
        let basis = GellMannBasis::new(d);
        for _ in 0..50 {
            let psi: Vec<C> = (0..d).map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let mixed = DensityMatrix::pure(&psi).matrix() * C::new(0.7, 0.0)
                + DMatrix::identity(d, d) * C::new(0.3 / d as f64, 0.0);
            let rho = DensityMatrix::new(mixed).unwrap();
            let r = to_bloch(&rho, &basis).unwrap();
            let back = from_bloch(&BlochVector::new(r.components().to_vec()).unwrap(), &basis).unwrap();
            round = round.max((back.matrix() - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    if round > 1e-12 {
        fails.push(format!("round trip {round:.1e}"));
    }

    // A state on the frozen steady axis stays there.
    let mut transparency: f64 = 0.0;
    for _ in 0..20 {
        let p = LzParams::new(rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.0..0.5)).unwrap();
        let t = rng.gen_range(-5.0..5.0);
        let frozen = lindkz::lz::lz_system(&p).frozen(t, 10.0);
        let r0 = p.steady_axis(t) * rng.gen_range(0.2..1.0);
        let r1 = integrate_vec(&frozen, r0, &opts, &[]).unwrap().final_vector();
        transparency = transparency.max((r1 - r0).norm());
    }
    if transparency > opts.tol.atol {
        fails.push(format!("steady axis moved {transparency:.1e}"));
    }

    // t̂ grows with κ; n_D grows with κ at every τ_Q.
    let mut prev = 0.0;
    for k in [0.0, 0.1, 0.2, 0.4] {
        let t = kz_predict(&LzParams::new(0.4, 0.5, k).unwrap()).unwrap().t_hat;
        if t <= prev {
            fails.push(format!("t̂ not increasing at κ = {k}"));
        }
        prev = t;
    }
    let mut taus: Vec<f64> = points.iter().map(|p| p.tau_q).collect();
    taus.dedup();
    for t in taus {
        let series: Vec<f64> = points.iter().filter(|p| p.tau_q == t).map(|p| p.n_d).collect();
        if series.windows(2).any(|w| w[1] <= w[0]) {
            fails.push(format!("n_D not increasing in κ at τ_Q = {t}"));
        }
    }
    outcome(
        fails.is_empty(),
        format!(
            "norm growth {growth:.1e}, closed drift {closed_drift:.1e}, max Re μ/‖M‖ {max_re:.1e}, round trip {round:.1e}, axis drift {transparency:.1e}{}",
            if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }
        ),
    )
}

fn report(id: u32, name: &str, started: Instant, o: &Outcome, failed: &mut u32) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {id} [{name}] ({:.1}s): {}", started.elapsed().as_secs_f64(), o.detail);
    if !o.pass {
        *failed += 1;
    }
}

fn main() -> ExitCode {
    // libtest flags (e.g. --nocapture, filters) are accepted and ignored.
    let mut failed = 0;
    let s = Instant::now();
    report(1, "closed Landau-Zener formula", s, &closed_lz_formula(), &mut failed);
    let s = Instant::now();
    report(2, "Liouvillian closed forms", s, &liouvillian_closed_forms(), &mut failed);
    let s = Instant::now();
    report(3, "trace-distance law", s, &trace_distance_law(), &mut failed);
    let s = Instant::now();
    report(4, "adiabatic-impulse predictor", s, &ai_predictor(), &mut failed);
    let s = Instant::now();
    let (t1, points) = table_one();
    report(5, "defect-density exponents", s, &t1, &mut failed);
    let s = Instant::now();
    let cases = oracle_cases();
    report(6, "mode decomposition vs dense chain", s, &oracle_equivalence(&cases), &mut failed);
    let s = Instant::now();
    report(7, "correlators and oscillation length", s, &correlators(&cases), &mut failed);
    let s = Instant::now();
    report(8, "property suites", s, &properties(&points), &mut failed);
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
