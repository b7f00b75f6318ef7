//! End-to-end acceptance checks. Each criterion prints exactly one
//! PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;

use lindlab_core::algebra::expm::expm;
use lindlab_core::algebra::{
    hermiticity_defect, hs_inner, identity, operator_norm, trace_norm, vectorize,
};
use lindlab_core::diagnostics::{
    self, LrOutcome, MixingOutcome, ModelFamily, ObservablePlan,
};
use lindlab_core::evolution::{fixed_point, EvolutionError};
use lindlab_core::glauber::{GlauberModel, RatePerturbation, RateRule, SpinState};
use lindlab_core::lattice::Lattice;
use lindlab_core::liouvillian::{translation_matrix, Liouvillian};
use lindlab_core::presets::{self, Preset};
use lindlab_core::scalar::C;
use lindlab_core::stability;

struct Criterion {
    label: &'static str,
    run: fn() -> Result<(), String>,
}

fn main() {
    let criteria = [
        Criterion {
            label: "criterion 1 (analytic mixing oracle)",
            run: c1_analytic_oracle,
        },
        Criterion {
            label: "criterion 2 (fixed-point correctness)",
            run: c2_fixed_points,
        },
        Criterion {
            label: "criterion 3 (stability sweep verdicts)",
            run: c3_stability_cli,
        },
        Criterion {
            label: "criterion 4 (Duhamel identity)",
            run: c4_duhamel,
        },
        Criterion {
            label: "criterion 5 (propagation structure)",
            run: c5_lieb_robinson,
        },
        Criterion {
            label: "criterion 6 (size-independent envelope)",
            run: c6_envelope,
        },
        Criterion {
            label: "criterion 7 (classical stability)",
            run: c7_glauber,
        },
        Criterion {
            label: "criterion 8 (global/local contrast)",
            run: c8_counterexample,
        },
        Criterion {
            label: "criterion 9 (structural invariants)",
            run: c9_invariants,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        match (c.run)() {
            Ok(()) => println!("{}: PASS ({:.1}s)", c.label, start.elapsed().as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("{}: FAIL — {e}", c.label);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// 1. Depolarizing chain, L in 3..=7, A = sigma_z at the origin: the curve
//    must equal e^{-2 gamma t} to 1e-8 and the fitted rate must sit
//    within 2% of 2 gamma with |delta| < 0.05, in under a minute.
fn c1_analytic_oracle() -> Result<(), String> {
    let start = Instant::now();
    let gamma = 1.0;
    let family = ModelFamily::new(presets::depolarizing_term::<f64>(gamma), 1);
    let sizes: Vec<usize> = (3..=7).collect();
    let times: Vec<f64> = (0..=12).map(|i| i as f64 * 0.25).collect();
    let curves = diagnostics::convergence_curve(&ObservablePlan::SigmaZOrigin, &family, &sizes, &times)
        .map_err(|e| e.to_string())?;
    for curve in &curves {
        for (t, v) in curve.times.iter().zip(&curve.values) {
            let exact = (-2.0 * gamma * t).exp();
            check(
                (v - exact).abs() <= 1e-8,
                format!("L={} t={t}: |{v} - {exact}| > 1e-8", curve.size),
            )?;
        }
    }
    let fit = match diagnostics::fit_rapid_mixing(&curves).map_err(|e| e.to_string())? {
        MixingOutcome::RapidlyMixing(f) => f,
        MixingOutcome::NotRapidlyMixing { slope } => {
            return Err(format!("reported non-mixing, slope {slope}"));
        }
    };
    check(
        (fit.gamma - 2.0 * gamma).abs() <= 0.02 * 2.0 * gamma,
        format!("gamma {} not within 2% of {}", fit.gamma, 2.0 * gamma),
    )?;
    check(fit.delta.abs() < 0.05, format!("|delta| = {}", fit.delta))?;
    check(
        start.elapsed().as_secs() < 60,
        format!("took {:?}", start.elapsed()),
    )
}

// 2. Fixed points: maximally mixed for depolarizing, degenerate for
//    dephasing, classical Gibbs weights for the Glauber embedding.
fn c2_fixed_points() -> Result<(), String> {
    let l = 4usize;
    let dim = 1usize << l;
    let lat = Lattice::new(1, l).map_err(|e| e.to_string())?;

    let liou = Liouvillian::new(lat, presets::depolarizing_term::<f64>(0.8));
    let fp = fixed_point(&liou.assemble().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mixed = identity::<f64>(dim).scale(1.0 / dim as f64);
    let dist = trace_norm(&(&fp.rho - &mixed)).map_err(|e| e.to_string())?;
    check(dist <= 1e-10, format!("depolarizing trace distance {dist}"))?;

    let deph = Liouvillian::new(lat, presets::dephasing_term::<f64>(0.8));
    match fixed_point(&deph.assemble().map_err(|e| e.to_string())?) {
        Err(EvolutionError::DegenerateFixedPoint(k)) => check(k > 1, "kernel must exceed 1")?,
        other => return Err(format!("dephasing gave {other:?}")),
    }

    let model = GlauberModel::new(lat, 1.0, 0.0, 0.3, RateRule::HeatBath)
        .map_err(|e| e.to_string())?;
    let gliou = Liouvillian::new(lat, model.embedded_term::<f64>().map_err(|e| e.to_string())?);
    let gfp = fixed_point(&gliou.assemble().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let gibbs = model.gibbs().map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (s, &w) in gibbs.iter().enumerate() {
        worst = worst.max((gfp.rho[(s, s)].re - w).abs());
    }
    check(worst <= 1e-8, format!("Gibbs mismatch {worst}"))
}

// 3. The stability sweep through the real binary: depolarizing +
//    Hamiltonian perturbation over L in 3..=7 must exit 0 with
//    theorem_consistent=true (C_X flat within 20%, epsilon-linear within
//    5%); the dephasing preset must exit 2 with a degenerate verdict.
fn c3_stability_cli() -> Result<(), String> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = tmp.path().join("stability.toml");
    std::fs::write(
        &cfg_path,
        r#"
[lattice]
dimension = 1
size = 3

[model]
name = "depolarizing"
gamma = 1.0

[perturbation]
kind = "hamiltonian-x"
eps = 0.01

[grid]
sizes = [3, 4, 5, 6, 7]
strengths = [0.001, 0.01, 0.1]
times = { start = 0.0, stop = 3.0, points = 13 }
"#,
    )
    .map_err(|e| e.to_string())?;
    let out_dir = tmp.path().join("runs");
    let output = Command::new(env!("CARGO_BIN_EXE_lindlab"))
        .args(["--out-dir"])
        .arg(&out_dir)
        .arg("stability")
        .arg(&cfg_path)
        .output()
        .map_err(|e| e.to_string())?;
    check(
        output.status.code() == Some(0),
        format!(
            "exit {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ),
    )?;
    let run_dir = String::from_utf8_lossy(&output.stdout).trim().to_string();
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(std::path::Path::new(&run_dir).join("summary.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    check(
        summary["theorem_consistent"] == serde_json::Value::Bool(true),
        format!("summary: {summary}"),
    )?;
    let flat = summary["flatness"].as_f64().unwrap_or(f64::NAN);
    let lin = summary["linearity_spread"].as_f64().unwrap_or(f64::NAN);
    check(flat <= 0.2, format!("flatness {flat}"))?;
    check(lin <= 0.05, format!("linearity spread {lin}"))?;

    let status = Command::new(env!("CARGO_BIN_EXE_lindlab"))
        .args(["--out-dir"])
        .arg(&out_dir)
        .args(["stability", "--preset", "dephasing"])
        .status()
        .map_err(|e| e.to_string())?;
    check(
        status.code() == Some(2),
        format!("dephasing run exited {:?}, expected 2", status.code()),
    )?;
    check(
        start.elapsed().as_secs() < 1800,
        format!("took {:?}", start.elapsed()),
    )
}

// 4. Dense Duhamel decomposition at L=3 with 64-node quadrature.
fn c4_duhamel() -> Result<(), String> {
    let lat = Lattice::new(1, 3).map_err(|e| e.to_string())?;
    let base = Liouvillian::new(lat, presets::depolarizing_term::<f64>(1.0));
    let perturbed = base
        .perturbed(presets::hamiltonian_x_perturbation(0.05))
        .map_err(|e| e.to_string())?;
    let op = ObservablePlan::SigmaZOrigin
        .place(lat)
        .map_err(|e| e.to_string())?;
    let resid = stability::duhamel_check(&op, &base, &perturbed, 1.5)
        .map_err(|e| e.to_string())?;
    check(resid <= 1e-6, format!("residual {resid}"))
}

// 5. Propagation: product models give exactly zero probes at d >= 1; the
//    interacting chain at L=8 admits a dominating fit with mu > 0
//    covering every sample; the localization error decreases in the
//    radius and vanishes at saturation.
fn c5_lieb_robinson() -> Result<(), String> {
    let times: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();

    // product model: sigma_z observable never spreads
    let lat6 = Lattice::new(1, 6).map_err(|e| e.to_string())?;
    let prod = Liouvillian::new(lat6, presets::depolarizing_term::<f64>(1.0));
    let opz = ObservablePlan::SigmaZOrigin
        .place(lat6)
        .map_err(|e| e.to_string())?;
    let table = diagnostics::lr_probe(&opz, &prod, &[1, 2, 3], &times)
        .map_err(|e| e.to_string())?;
    for row in &table.values {
        for &v in row {
            check(v == 0.0, format!("product-model probe {v} != 0"))?;
        }
    }

    // interacting chain at L=8
    let lat8 = Lattice::new(1, 8).map_err(|e| e.to_string())?;
    let inter = Liouvillian::new(lat8, presets::depolarizing_ising_term::<f64>(1.0, 0.5));
    let opx = ObservablePlan::SigmaXOrigin
        .place(lat8)
        .map_err(|e| e.to_string())?;
    let table = diagnostics::lr_probe(&opx, &inter, &[0, 1, 2, 3, 4], &times)
        .map_err(|e| e.to_string())?;
    let fit = match diagnostics::fit_lr(&table).map_err(|e| e.to_string())? {
        LrOutcome::Finite(f) => f,
        LrOutcome::InfiniteDecay => return Err("interacting model reported no spreading".into()),
    };
    check(fit.mu > 0.0, format!("mu = {}", fit.mu))?;
    let mut covered = 0usize;
    let mut total = 0usize;
    for (di, &d) in table.distances.iter().enumerate() {
        for (ti, &t) in table.times.iter().enumerate() {
            let y = table.values[di][ti];
            if y > 0.0 && t > 0.0 {
                total += 1;
                let bound = fit.k * ((fit.v * t).exp() - 1.0) * (-fit.mu * d as f64).exp();
                if bound >= y * (1.0 - 1e-9) {
                    covered += 1;
                }
            }
        }
    }
    check(
        covered == total,
        format!("bound covers {covered}/{total} samples"),
    )?;

    // localization error decreasing, exactly zero at saturation
    let t_probe = 1.5;
    let mut prev = f64::INFINITY;
    for s in 0..=4usize {
        let err =
            diagnostics::localized_error(&opx, &inter, s, t_probe).map_err(|e| e.to_string())?;
        check(
            err <= prev * (1.0 + 1e-9),
            format!("localized error grew at s={s}: {err} > {prev}"),
        )?;
        prev = err;
        if s == 4 {
            check(err == 0.0, format!("saturation error {err} != 0"))?;
        }
    }
    Ok(())
}

// 6. The decay envelope recomputed from two ambient sizes must agree
//    pointwise to 1e-6 on the shared time grid.
fn c6_envelope() -> Result<(), String> {
    let times: Vec<f64> = (0..=8).map(|i| i as f64 * 0.5).collect();
    let slopes = [0.5];
    let run = |l: usize| -> Result<diagnostics::DecayEnvelope, String> {
        let lat = Lattice::new(1, l).map_err(|e| e.to_string())?;
        let liou = Liouvillian::new(lat, presets::depolarizing_ising_term::<f64>(1.0, 0.5));
        let op = ObservablePlan::SigmaXOrigin
            .place(lat)
            .map_err(|e| e.to_string())?;
        diagnostics::decay_envelope(&op, &liou, &times, &slopes).map_err(|e| e.to_string())
    };
    let e8 = run(8)?;
    let e10 = run(10)?;
    check(!e8.times.is_empty(), "empty shared grid")?;
    check(
        e10.times.len() >= e8.times.len(),
        "larger torus serves fewer times",
    )?;
    for i in 0..e8.times.len() {
        check(
            (e8.times[i] - e10.times[i]).abs() == 0.0,
            "grid mismatch",
        )?;
        let d = (e8.delta[i] - e10.delta[i]).abs();
        check(
            d <= 1e-6,
            format!("t={}: |{} - {}| = {d}", e8.times[i], e8.delta[i], e10.delta[i]),
        )?;
    }
    Ok(())
}

// 7. Classical stability: heat-bath chain at beta=0.2 under a
//    detailed-balance-breaking rate perturbation (eps=0.05). The exact
//    magnetization deviation must be flat in L within 20%, and a KMC run
//    at L=16 must agree with the exact deviation within 3 standard errors.
fn c7_glauber() -> Result<(), String> {
    let times: Vec<f64> = (1..=8).map(|i| i as f64 * 0.5).collect();
    let pert = RatePerturbation::FlipUpBias { eps: 0.05 };
    let deviation = |l: usize| -> Result<Vec<f64>, String> {
        let lat = Lattice::new(1, l).map_err(|e| e.to_string())?;
        let model =
            GlauberModel::new(lat, 1.0, 0.0, 0.2, RateRule::HeatBath).map_err(|e| e.to_string())?;
        let tilted = model.perturb_rates(pert).map_err(|e| e.to_string())?;
        let m0 = model
            .exact_magnetization(SpinState::AllUp, &times)
            .map_err(|e| e.to_string())?;
        let m1 = tilted
            .exact_magnetization(SpinState::AllUp, &times)
            .map_err(|e| e.to_string())?;
        Ok(m0.iter().zip(&m1).map(|(a, b)| (a - b).abs()).collect())
    };
    let sup = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max);
    let d4 = deviation(4)?;
    let d6 = deviation(6)?;
    let d8 = deviation(8)?;
    let d_ref = sup(&d8);
    check(d_ref > 0.0, "perturbation left the dynamics unchanged")?;
    for (l, d) in [(4usize, sup(&d4)), (6, sup(&d6))] {
        check(
            (d - d_ref).abs() / d_ref <= 0.2,
            format!("deviation at L={l} is {d} vs {d_ref} at L=8"),
        )?;
    }

    // KMC at L=16 against the (size-flat) exact deviation curve
    let lat16 = Lattice::new(1, 16).map_err(|e| e.to_string())?;
    let model =
        GlauberModel::new(lat16, 1.0, 0.0, 0.2, RateRule::HeatBath).map_err(|e| e.to_string())?;
    let tilted = model.perturb_rates(pert).map_err(|e| e.to_string())?;
    let chains = 4000;
    let c0 = model.kmc_magnetization(SpinState::AllUp, &times, chains, 11);
    let c1 = tilted.kmc_magnetization(SpinState::AllUp, &times, chains, 12);
    for (ti, &t) in times.iter().enumerate() {
        let dev_kmc = (c0.mean[ti] - c1.mean[ti]).abs();
        let se = (c0.stderr[ti].powi(2) + c1.stderr[ti].powi(2)).sqrt();
        check(
            (dev_kmc - d8[ti]).abs() <= 3.0 * se,
            format!(
                "t={t}: KMC deviation {dev_kmc} vs exact {} exceeds 3 SE ({se})",
                d8[ti]
            ),
        )?;
    }
    Ok(())
}

// 8. The degenerate counterexample: the global trace distance between the
//    product fixed points grows toward 2 with N while every single-site
//    deviation stays at exactly 2 eps.
fn c8_counterexample() -> Result<(), String> {
    let eps = 0.1;
    let mut prev = 0.0f64;
    for n in 1..=60usize {
        let r = stability::counterexample_degenerate(eps, n);
        check(
            r.global_trace_distance >= prev,
            format!("distance not monotone at N={n}"),
        )?;
        prev = r.global_trace_distance;
        check(
            (r.local_deviation - 2.0 * eps).abs() <= 1e-14,
            format!("local deviation {} != 2 eps", r.local_deviation),
        )?;
    }
    check(prev > 1.99, format!("distance saturates at {prev}"))?;

    // closed forms against the explicit construction at small N
    for n in 1..=6usize {
        let closed = stability::counterexample_degenerate(eps, n);
        let (dist, local) =
            stability::counterexample_explicit(eps, n).map_err(|e| e.to_string())?;
        check(
            (dist - closed.global_trace_distance).abs() <= 1e-10,
            format!(
                "N={n}: explicit distance {dist} vs closed form {}",
                closed.global_trace_distance
            ),
        )?;
        check(
            (local - closed.local_deviation).abs() <= 1e-10,
            format!("N={n}: explicit local deviation {local}"),
        )?;
    }
    Ok(())
}

// 9. Structural invariants across every preset: unitality,
//    contractivity, the semigroup law, Heisenberg/Schroedinger duality,
//    Hermiticity preservation and translation covariance.
fn c9_invariants() -> Result<(), String> {
    let l = 3usize;
    let lat = Lattice::new(1, l).map_err(|e| e.to_string())?;
    let dim = 1usize << l;
    let a = DMatrix::<C<f64>>::from_fn(dim, dim, |i, j| {
        C::new(
            ((3 * i + 5 * j + 1) % 11) as f64 / 11.0 - 0.5,
            ((7 * i + 2 * j) % 13) as f64 / 13.0 - 0.5,
        )
    });
    let a = (&a + a.adjoint()).scale(0.5);
    let mut rho = &a * a.adjoint() + identity::<f64>(dim).scale(0.1);
    let tr = rho.diagonal().iter().map(|c| c.re).sum::<f64>();
    rho.scale_mut(1.0 / tr);

    for name in Preset::names() {
        let preset = Preset::from_name(name).unwrap();
        let liou = Liouvillian::new(lat, preset.term::<f64>().map_err(|e| e.to_string())?);
        let g = liou.assemble().map_err(|e| e.to_string())?;
        let gd = g.to_dense();
        let t = 0.7;
        let et = expm(&gd.scale(t));

        // unitality
        let img = g.apply_matrix(&identity::<f64>(dim));
        let worst = img.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        check(worst <= 1e-10, format!("{name}: G(1) = {worst}"))?;

        // contractivity + Hermiticity preservation
        let at = lindlab_core::algebra::devectorize((&et * vectorize(&a)).as_slice())
            .map_err(|e| e.to_string())?;
        let (n0, n1) = (
            operator_norm(&a).map_err(|e| e.to_string())?,
            operator_norm(&at).map_err(|e| e.to_string())?,
        );
        check(n1 <= n0 * (1.0 + 1e-8), format!("{name}: {n0} -> {n1}"))?;
        check(
            hermiticity_defect(&at) <= 1e-9,
            format!("{name}: Hermiticity defect {}", hermiticity_defect(&at)),
        )?;

        // semigroup
        let split = expm(&gd.scale(0.3)) * expm(&gd.scale(0.4));
        let sg = (&et - &split).iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        check(sg <= 1e-9, format!("{name}: semigroup defect {sg}"))?;

        // duality
        let es = expm(&g.adjoint().to_dense().scale(t));
        let lhs = hs_inner(&at, &rho);
        let rhs = hs_inner(
            &a,
            &lindlab_core::algebra::devectorize((&es * vectorize(&rho)).as_slice())
                .map_err(|e| e.to_string())?,
        );
        check(
            (lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()),
            format!("{name}: duality {lhs} vs {rhs}"),
        )?;

        // translation covariance
        let tau = translation_matrix::<f64>(&lat, &[1]);
        let cov_lhs = &tau * &at * tau.adjoint();
        let shifted = &tau * &a * tau.adjoint();
        let cov_rhs = lindlab_core::algebra::devectorize((&et * vectorize(&shifted)).as_slice())
            .map_err(|e| e.to_string())?;
        let cd = (&cov_lhs - &cov_rhs)
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        check(cd <= 1e-9, format!("{name}: covariance defect {cd}"))?;
    }
    Ok(())
}
