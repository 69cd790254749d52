//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are always shown.
//! `QHD_ACCEPTANCE=1,4,9` restricts the run to the listed criteria.
//!
//! Two criteria are known to fail and are reported without aborting the run; see
//! `KNOWN_FAILURES`. Any other failure makes the target exit non-zero.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use qhd_core::experiments::{
    initial_from_config, make_initial, preset_balance, preset_decay, preset_inequalities, preset_relaxation,
    InitialDataSpec,
};
use qhd_core::io::{parse_config, read_config, RunConfig};
use qhd_core::madelung::{extract_hydro, lift_wavefunction, polar_defect};
use qhd_core::qdd::run_qdd;
use qhd_core::sl::{picard_solve, run_sl};
use qhd_core::spectral::{dealias, gradient, integrate, laplacian, solve_poisson};
use qhd_core::{Field, PressureLaw, QDDParams, QddStatus, RealField, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose failure is understood and recorded in the README.
///
/// 6: the log-H² inequality with constants ⅓, ⅔, ⅓ does not hold for genuinely planar
///    densities; only the weaker constants ¼, ½, ¼ do (reported alongside).
/// 10: the sup of the τ²-remainders is dominated by the initial layer of ill-prepared
///    data, where `τ²·dG/dt'` is O(1) for every τ.
const KNOWN_FAILURES: &[usize] = &[6, 10];

const DELTA: f64 = 0.25;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> RunConfig {
    read_config(&configs().join(name)).unwrap()
}

fn law() -> PressureLaw {
    PressureLaw::new(1, 1.0)
}

fn grid64() -> TorusGrid {
    TorusGrid::square(64).unwrap()
}

fn max_diff(a: &RealField, b: &RealField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2_diff(a: &RealField, b: &RealField) -> f64 {
    a.zip_map(b, |x, y| (x - y).powi(2)).mean().sqrt()
}

/// Random trigonometric polynomial with `|j|∞ ≤ band`, unit sup norm, plus a random mean unless `zero_mean`.
fn random_field(grid: &TorusGrid, band: i64, rng: &mut ChaCha8Rng, zero_mean: bool) -> RealField {
    let mut terms = Vec::new();
    for j1 in -band..=band {
        for j2 in 0..=band {
            if j2 == 0 && j1 <= 0 {
                continue;
            }
            terms.push((j1 as f64, j2 as f64, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
    }
    let c0 = if zero_mean { 0.0 } else { rng.gen_range(-0.5..0.5) };
    let f = RealField::from_fn(grid, |x, y| {
        terms
            .iter()
            .map(|&(j1, j2, a, b)| {
                let th = 2.0 * PI * (j1 * x + j2 * y);
                a * th.cos() + b * th.sin()
            })
            .sum::<f64>()
    });
    let scale = f.max_abs();
    f.map(|u| c0 + u / scale)
}

fn spectral_substrate() -> Outcome {
    let grid = grid64();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut poisson, mut parseval, mut deriv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let band = rng.gen_range(1..20);
        let rhs = random_field(&grid, band, &mut rng, true);
        let v = solve_poisson(&rhs).unwrap();
        poisson = poisson.max(max_diff(&laplacian(&v).map(|x| -x), &rhs));

        let band = rng.gen_range(1..31);
        let f = random_field(&grid, band, &mut rng, false);
        let lhs = integrate(&f.map(|x| x * x));
        let rhs: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum();
        parseval = parseval.max((lhs - rhs).abs() / lhs);

        let (j1, j2): (i64, i64) = (rng.gen_range(-31..32), rng.gen_range(-31..32));
        let (amp, phase): (f64, f64) = (rng.gen_range(0.1..10.0), rng.gen_range(0.0..2.0 * PI));
        let (k1, k2) = (2.0 * PI * j1 as f64, 2.0 * PI * j2 as f64);
        let th = move |x: f64, y: f64| k1 * x + k2 * y + phase;
        let f = RealField::from_fn(&grid, |x, y| amp * th(x, y).cos());
        let [gx, gy] = gradient(&f);
        let ex = RealField::from_fn(&grid, |x, y| -amp * k1 * th(x, y).sin());
        let ey = RealField::from_fn(&grid, |x, y| -amp * k2 * th(x, y).sin());
        let el = f.map(|u| -(k1 * k1 + k2 * k2) * u);
        let gscale = amp * (1.0 + k1.abs() + k2.abs());
        let lscale = amp * (1.0 + k1 * k1 + k2 * k2);
        deriv = deriv
            .max(max_diff(&gx, &ex) / gscale)
            .max(max_diff(&gy, &ey) / gscale)
            .max(max_diff(&laplacian(&f), &el) / lscale);
    }
    outcome(
        poisson < 1e-12 && parseval < 1e-12 && deriv < 1e-12,
        format!("poisson {poisson:.2e}, parseval {parseval:.2e}, single-mode {deriv:.2e} (100 cases each)"),
    )
}

fn madelung_roundtrip() -> Outcome {
    let grid = grid64();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut round, mut polar) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let spec = InitialDataSpec {
            velocity_amplitude: rng.gen_range(0.0..1.0),
            ..InitialDataSpec::random(1.0, DELTA, rng.gen_range(0.05..0.7), 3, rng.gen())
        };
        let state = make_initial(&spec, &grid, &law()).unwrap().state;
        let w = lift_wavefunction(&state, rng.gen_range(-20.0..20.0), DELTA).unwrap();
        let back = extract_hydro(&w, &law(), DELTA).unwrap();
        round = round
            .max(l2_diff(&back.rho, &state.rho))
            .max(l2_diff(&back.v[0], &state.v[0]))
            .max(l2_diff(&back.v[1], &state.v[1]));
        polar = polar.max(dealias(&polar_defect(&w)).max_abs());
    }
    outcome(round < 1e-8 && polar < 1e-8, format!("roundtrip L2 {round:.2e}, polar identity {polar:.2e} (50 states)"))
}

fn mass_conservation() -> Outcome {
    let cfg = config("default.toml");
    let mut worst = 0.0f64;
    let specs = [
        initial_from_config(&cfg).unwrap().1,
        make_initial(
            &InitialDataSpec { velocity_amplitude: 0.3, ..InitialDataSpec::random(1.0, DELTA, 0.4, 3, 11) },
            &grid64(),
            &law(),
        )
        .unwrap(),
    ];
    for init in &specs {
        let mut p = cfg.sl_params();
        p.t_end = 2.0;
        let traj = run_sl(&init.wave, &p).unwrap();
        if !traj.completed() {
            return outcome(false, format!("run aborted: {:?}", traj.status));
        }
        worst = worst.max(qhd_core::experiments::mass_drift(&traj));
    }
    outcome(worst < 1e-10, format!("relative mass drift {worst:.2e} over T = 2 (two damped runs)"))
}

fn energy_balance(balance: &qhd_core::experiments::BalanceReport) -> Outcome {
    let ratio = row(balance, "energy_residual_ratio");
    let cfg = config("balance.toml");
    let (_, init) = initial_from_config(&cfg).unwrap();
    let mut p = cfg.sl_params();
    p.tau = f64::INFINITY;
    p.t_end = 1.0;
    p.dt = 1e-4;
    let traj = run_sl(&init.wave, &p).unwrap();
    let e0 = traj.e0();
    let drift = traj.records.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max);
    outcome(
        ratio <= 0.35 && drift <= 1e-6 && traj.completed(),
        format!("r(dt/2)/r(dt) = {ratio:.4}, Hamiltonian energy drift {drift:.2e} over T = 1"),
    )
}

fn row(rep: &qhd_core::experiments::BalanceReport, name: &str) -> f64 {
    rep.rows.iter().find(|r| r.name == name).unwrap().value
}

fn gcp_and_entropy(balance: &qhd_core::experiments::BalanceReport) -> Outcome {
    let gcp = row(balance, "gcp_order");
    let ent = row(balance, "entropy_order");
    let viol = row(balance, "entropy_estimate_violation");
    outcome(
        gcp >= 0.9 && ent >= 0.9 && viol <= 1e-4,
        format!("GCP order {gcp:.3}, entropy order {ent:.3}, estimate violation {viol:.2e}"),
    )
}

fn inequalities() -> Outcome {
    let rep = preset_inequalities(&config("inequalities.toml")).unwrap();
    let rc = rep.resolution_change();
    let violations = rep.log_h2.iter().filter(|&&(l, r)| l > r + 1e-10 * r.abs().max(1.0)).count();
    outcome(
        rep.passed(),
        format!(
            "log-H2 holds {} ({violations}/{} violations, worst lhs/rhs {:.6}; planar constants hold {}), scale defects {:.1e}/{:.1e}, resolution change {:.2e}/{:.2e}",
            rep.log_h2_holds(),
            rep.log_h2.len(),
            rep.log_h2_worst_ratio(),
            rep.log_h2_planar_holds(),
            rep.scale_defect[0],
            rep.scale_defect[1],
            rc[0],
            rc[1]
        ),
    )
}

fn picard() -> Outcome {
    let cfg = config("default.toml");
    let (_, init) = initial_from_config(&cfg).unwrap();
    let p = cfg.sl_params();
    let t_star = p.tau / 8.0;
    let tol = 1e-10;
    let res = picard_solve(&init.wave, &p, t_star, 100, tol).unwrap();
    let q = res.contraction_factors().into_iter().fold(0.0, f64::max);
    let mut direct = p.clone();
    direct.t_end = t_star;
    let traj = run_sl(&init.wave, &direct).unwrap();
    let gap = res
        .states
        .last()
        .unwrap()
        .psi
        .values()
        .iter()
        .zip(traj.final_state.psi.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    outcome(
        res.converged && q < 1.0 && gap <= 1e-9,
        format!("{} iterations, max d_(m+1)/d_m = {q:.3e}, fixed point vs integrator {gap:.2e}", res.iterations),
    )
}

fn decay() -> Outcome {
    let rep = preset_decay(&config("decay.toml")).unwrap();
    let rise = rep.tail_increase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        !rep.degenerate && rep.passed(),
        format!("tail slope {:.4}, r2 {:.6}, largest tail increase of H/E/I {rise:.2e}", rep.slope, rep.r_squared),
    )
}

fn qdd_solver() -> Outcome {
    let grid = grid64();
    let constant = RealField::constant(&grid, 1.0);
    let traj = run_qdd(&constant, &QDDParams::new(law(), DELTA, 1e-4, 0.01)).unwrap();
    let fixed = traj.final_state == constant;

    let rho0 = RealField::from_fn(&grid, |x, _| 1.0 + 1e-4 * (2.0 * PI * x).cos());
    let t_end = 1e-3;
    let mut p = QDDParams::new(law(), DELTA, 1e-7, t_end);
    p.monitor_every = 1000;
    let traj = run_qdd(&rho0, &p).unwrap();
    let d0 = traj.records.first().unwrap().deviation;
    let d1 = traj.records.last().unwrap().deviation;
    let rate = (d1 / d0).ln() / t_end;
    let lambda = -(4.0 * PI.powi(4) + 4.0 * PI * PI + 1.0);
    let rel = (rate - lambda).abs() / lambda.abs();

    let rho = make_initial(&InitialDataSpec::random(1.0, DELTA, 0.5, 4, 3), &grid, &law()).unwrap().state.rho;
    let mut p = QDDParams::new(law(), DELTA, 1e-5, 0.05);
    p.monitor_every = 10;
    let traj = run_qdd(&rho, &p).unwrap();
    let rise = traj.max_entropy_increase();
    let done = traj.status == QddStatus::Completed;
    outcome(
        fixed && rel <= 0.01 && rise <= 1e-8 && done,
        format!("constant exact {fixed}, rate {rate:.3} vs {lambda:.3} (rel {rel:.2e}), largest H increase {rise:.2e}"),
    )
}

fn relaxation() -> Outcome {
    let rep = preset_relaxation(&config("relax.toml")).unwrap();
    let slope = |f: &Option<qhd_core::RateFit>| f.as_ref().map_or(f64::NAN, |f| f.slope);
    let post = rep.remainder_fits_from(qhd_core::relaxation::MOMENTUM_WINDOW_START);
    let errs: Vec<String> = rep.per_tau.iter().map(|r| format!("{:.3e}", r.sup_error)).collect();
    let pass = rep.completed().len() == rep.taus.len()
        && rep.errors_strictly_decreasing()
        && rep.rate_in_band()
        && rep.sandwich_holds()
        && rep.remainders_in_band();
    outcome(
        pass,
        format!(
            "sup errors [{}] decreasing {}, rate {:.3}, sandwich {}, remainder exponents {:.3}/{:.3} (difference {:.3}; after t' = 0.1: {:.3}/{:.3})",
            errs.join(", "),
            rep.errors_strictly_decreasing(),
            slope(&rep.fit),
            rep.sandwich_holds(),
            slope(&rep.remainder_fits[0]),
            slope(&rep.remainder_fits[1]),
            slope(&rep.remainder_fits[2]),
            slope(&post[0]),
            slope(&post[1]),
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

/// Config text with the given `[integrator]` keys replaced.
fn with_integrator(name: &str, keys: &[(&str, &str)]) -> String {
    let text = std::fs::read_to_string(configs().join(name)).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        if !keys.iter().any(|(k, _)| line.starts_with(&format!("{k} ="))) {
            out.push_str(line);
            out.push('\n');
        }
        if line.trim() == "[integrator]" {
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
    }
    parse_config(&out).unwrap();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, text: String| {
        let p = tmp.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    // Long horizons add nothing to a reproducibility check, so the SL, QDD and sweep runs are shortened.
    let short = write("short.toml", with_integrator("default.toml", &[("t_end", "0.05")]));
    let sweep = write("sweep.toml", with_integrator("relax.toml", &[("t_prime_end", "0.002")]));
    let suites: [(&str, PathBuf); 6] = [
        ("run-sl", short.clone()),
        ("run-qdd", short),
        ("relax-sweep", sweep),
        ("check-inequalities", configs().join("inequalities.toml")),
        ("decay", configs().join("decay.toml")),
        ("balance", configs().join("balance.toml")),
    ];
    let mut mismatched = Vec::new();
    for (sub, cfg) in &suites {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = tmp.path().join(format!("{sub}-{k}"));
            let res = Command::new(env!("CARGO_BIN_EXE_qhd"))
                .args([sub, "--quiet", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            runs.push((res.status.code(), res.stdout, dir_bytes(&out)));
        }
        if runs[0] != runs[1] || runs[0].2.is_empty() {
            mismatched.push(*sub);
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} suites byte-identical across two invocations", suites.len())
        } else {
            format!("outputs differ for {}", mismatched.join(", "))
        },
    )
}

fn selected() -> Vec<usize> {
    match std::env::var("QHD_ACCEPTANCE") {
        Ok(s) if !s.trim().is_empty() => {
            s.split(',').map(|t| t.trim().parse().expect("QHD_ACCEPTANCE: integers")).collect()
        }
        _ => (1..=11).collect(),
    }
}

fn main() {
    // libtest flags such as `--nocapture` are accepted and ignored.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let want = selected();
    let on = |k: usize| want.contains(&k);
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();

    std::thread::scope(|s| {
        // The sweep dominates the runtime, so it overlaps with everything else.
        let sweep = on(10).then(|| {
            s.spawn(|| {
                let t = Instant::now();
                (relaxation(), t.elapsed().as_secs_f64())
            })
        });
        let timed = |f: &dyn Fn() -> Outcome| {
            let t = Instant::now();
            let o = f();
            (o, t.elapsed().as_secs_f64())
        };
        let mut run = |k: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
            if on(k) {
                let (o, secs) = timed(f);
                report(k, name, &o, secs);
                results.push((k, name, o, secs));
            }
        };
        run(1, "spectral substrate", &spectral_substrate);
        run(2, "Madelung roundtrip", &madelung_roundtrip);
        run(3, "mass conservation", &mass_conservation);
        let balance = (on(4) || on(5)).then(|| preset_balance(&config("balance.toml")).unwrap());
        if let Some(b) = &balance {
            run(4, "energy balance", &|| energy_balance(b));
            run(5, "GCP and entropy balance", &|| gcp_and_entropy(b));
        }
        run(6, "functional inequalities", &inequalities);
        run(7, "Picard contraction", &picard);
        run(8, "exponential decay", &decay);
        run(9, "QDD solver", &qdd_solver);
        run(11, "determinism", &determinism);
        if let Some(h) = sweep {
            let (o, secs) = h.join().unwrap();
            report(10, "relaxation limit", &o, secs);
            results.push((10, "relaxation limit", o, secs));
        }
    });

    results.sort_by_key(|r| r.0);
    println!("\nsummary ({:.0} s)", start.elapsed().as_secs_f64());
    let mut unexpected = Vec::new();
    for (k, name, o, _) in &results {
        let tag = match (o.pass, KNOWN_FAILURES.contains(k)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(*k);
                "FAIL"
            }
        };
        println!("criterion {k:>2} {tag}: {name}");
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn report(k: usize, name: &str, o: &Outcome, secs: f64) {
    println!("criterion {k:>2} {}: {name}: {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}
