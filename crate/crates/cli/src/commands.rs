//! The experiment pipelines behind each subcommand.

use std::path::PathBuf;

use serde_json::json;

use lindlab_core::algebra::operator_norm;
use lindlab_core::diagnostics::{
    self, DiagnosticsError, LrOutcome, MixingOutcome, ModelFamily,
};
use lindlab_core::evolution::{
    fixed_point, infinite_time_limit, steady_expectation, EvolutionEngine, EvolutionError,
};
use lindlab_core::glauber::SpinState;
use lindlab_core::io::{IoError, PerturbationConfig};
use lindlab_core::liouvillian::{LiouvillianError, Perturbation, PerturbationTerm};
use lindlab_core::presets;
use lindlab_core::stability::{self, StabilityError};

use crate::config::ExperimentConfig;
use crate::store::{fmt, ResultStore, StoreError};
use crate::RunOutcome;

pub struct Context {
    pub out_dir: PathBuf,
    pub tolerance: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Liouvillian(#[from] LiouvillianError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Glauber(#[from] lindlab_core::glauber::GlauberError),
    #[error(transparent)]
    Algebra(#[from] lindlab_core::algebra::AlgebraError),
    #[error("{0}")]
    Config(String),
}

/// A degenerate fixed point anywhere in the error chain is a hypothesis
/// failure (exit 2), not a software error.
fn degenerate_kernel(e: &CommandError) -> Option<usize> {
    fn from_evolution(e: &EvolutionError) -> Option<usize> {
        match e {
            EvolutionError::DegenerateFixedPoint(k) => Some(*k),
            _ => None,
        }
    }
    fn from_diagnostics(e: &DiagnosticsError) -> Option<usize> {
        match e {
            DiagnosticsError::Evolution(inner) => from_evolution(inner),
            _ => None,
        }
    }
    match e {
        CommandError::Evolution(inner) => from_evolution(inner),
        CommandError::Diagnostics(inner) => from_diagnostics(inner),
        CommandError::Stability(StabilityError::Evolution(inner)) => from_evolution(inner),
        CommandError::Stability(StabilityError::Diagnostics(inner)) => from_diagnostics(inner),
        CommandError::Glauber(lindlab_core::glauber::GlauberError::Evolution(inner)) => {
            from_evolution(inner)
        }
        _ => None,
    }
}

/// Write the hypothesis-failure summary and close the run with exit 2.
fn hypothesis_exit(
    mut store: ResultStore,
    verdict: &str,
    detail: serde_json::Value,
) -> Result<RunOutcome, CommandError> {
    store.log(&format!("hypothesis failure: {verdict}"))?;
    store.write_summary(&json!({ "verdict": verdict, "detail": detail }))?;
    let dir = store.finish()?;
    println!("{}", dir.display());
    Ok(RunOutcome::hypothesis(verdict.to_string()))
}

fn reject_diagnostics(cfg: &ExperimentConfig) -> Result<(), CommandError> {
    let diags = cfg.diagnostics();
    if diags.is_empty() {
        Ok(())
    } else {
        Err(CommandError::Config(diags.join("; ")))
    }
}

pub fn evolve(ctx: &Context, cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    reject_diagnostics(cfg)?;
    let mut store = ResultStore::create(&ctx.out_dir, "evolve", &cfg.canonical_toml())?;
    let liou = cfg.model_config().build()?;
    let op = cfg.observable.plan().place(*liou.lattice())?;
    let times = cfg.grid.times.build();
    store.log(&format!(
        "assembling generator on {} sites",
        liou.lattice().num_sites()
    ))?;
    let g = liou.assemble()?;
    let fp = match fixed_point(&g) {
        Ok(fp) => fp,
        Err(EvolutionError::DegenerateFixedPoint(k)) => {
            return hypothesis_exit(
                store,
                "DegenerateFixedPoint",
                json!({ "kernel_dim": k }),
            );
        }
        Err(e) => return Err(e.into()),
    };
    store.log(&format!(
        "fixed point found (kernel residual {:.3e})",
        fp.residual
    ))?;
    let a = op.embed()?.matrix().clone();
    let a_inf = infinite_time_limit(&a, &fp);
    let engine = EvolutionEngine::new(g);
    let states = engine.evolve_grid(&a, &times)?;
    let mut rows = Vec::with_capacity(times.len());
    for (t, at) in times.iter().zip(&states) {
        let dist = operator_norm(&(at - &a_inf))?;
        let expect = steady_expectation(at, &fp).re;
        rows.push(vec![fmt(*t), fmt(dist), fmt(expect)]);
    }
    store.write_csv(
        "curve.csv",
        &["t", "distance_to_fixed_point", "expectation"],
        rows,
    )?;
    let final_dist = {
        let last = states.last().expect("non-empty grid");
        operator_norm(&(last - &a_inf))?
    };
    store.write_summary(&json!({
        "verdict": "ok",
        "fixed_point": {
            "kernel_dim": fp.kernel_dim,
            "residual": fp.residual,
            "certification": format!("{:?}", fp.certification),
        },
        "final_distance": final_dist,
        "converged": final_dist <= ctx.tolerance,
        "tolerance": ctx.tolerance,
    }))?;
    let dir = store.finish()?;
    println!("{}", dir.display());
    Ok(RunOutcome::ok())
}

pub fn mixing(ctx: &Context, cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    reject_diagnostics(cfg)?;
    let mut store = ResultStore::create(&ctx.out_dir, "mixing", &cfg.canonical_toml())?;
    let family = ModelFamily::new(cfg.model.term()?, cfg.lattice.dimension);
    let plan = cfg.observable.plan();
    let sizes = cfg.sizes();
    let times = cfg.grid.times.build();
    store.log(&format!("sweeping sizes {sizes:?}"))?;
    let curves = match diagnostics::convergence_curve(&plan, &family, &sizes, &times) {
        Ok(c) => c,
        Err(e) => {
            let e: CommandError = e.into();
            if let Some(k) = degenerate_kernel(&e) {
                return hypothesis_exit(
                    store,
                    "DegenerateFixedPoint",
                    json!({ "kernel_dim": k }),
                );
            }
            return Err(e);
        }
    };
    let mut rows = Vec::new();
    for curve in &curves {
        for (t, v) in curve.times.iter().zip(&curve.values) {
            rows.push(vec![curve.size.to_string(), fmt(*t), fmt(*v)]);
        }
    }
    store.write_csv("mixing_curves.csv", &["size", "t", "value"], rows)?;
    let outcome = diagnostics::fit_rapid_mixing(&curves)?;
    match &outcome {
        MixingOutcome::RapidlyMixing(fit) => {
            store.log(&format!(
                "rapidly mixing: gamma={:.6} delta={:.6} c={:.6}",
                fit.gamma, fit.delta, fit.c
            ))?;
            store.write_summary(&json!({ "verdict": "ok", "fit": fit }))?;
            let dir = store.finish()?;
            println!("{}", dir.display());
            Ok(RunOutcome::ok())
        }
        MixingOutcome::NotRapidlyMixing { slope } => hypothesis_exit(
            store,
            "NotRapidlyMixing",
            json!({ "worst_log_slope": slope }),
        ),
    }
}

pub fn lr(ctx: &Context, cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    reject_diagnostics(cfg)?;
    let mut store = ResultStore::create(&ctx.out_dir, "lr", &cfg.canonical_toml())?;
    let liou = cfg.model_config().build()?;
    let op = cfg.observable.plan().place(*liou.lattice())?;
    let distances = cfg.distances();
    let times = cfg.grid.times.build();
    store.log(&format!("probing distances {distances:?}"))?;
    let table = diagnostics::lr_probe(&op, &liou, &distances, &times)?;
    let mut rows = Vec::new();
    for (di, &d) in table.distances.iter().enumerate() {
        for (ti, &t) in table.times.iter().enumerate() {
            rows.push(vec![d.to_string(), fmt(t), fmt(table.values[di][ti])]);
        }
    }
    store.write_csv("lr_table.csv", &["distance", "t", "value"], rows)?;
    let outcome = diagnostics::fit_lr(&table)?;

    // localization error at the final time as a function of the radius
    let t_end = *times.last().expect("non-empty grid");
    let mut loc_rows = Vec::new();
    for &s in &distances {
        let err = diagnostics::localized_error(&op, &liou, s, t_end)?;
        loc_rows.push(vec![s.to_string(), fmt(t_end), fmt(err)]);
    }
    store.write_csv("localized_error.csv", &["s", "t", "value"], loc_rows)?;

    let summary = match &outcome {
        LrOutcome::Finite(fit) => json!({ "verdict": "ok", "fit": fit }),
        LrOutcome::InfiniteDecay => json!({
            "verdict": "ok",
            "fit": "infinite-decay",
            "note": "all probes vanish: the observable never spreads",
        }),
    };
    store.write_summary(&summary)?;
    let dir = store.finish()?;
    println!("{}", dir.display());
    Ok(RunOutcome::ok())
}

pub fn envelope(ctx: &Context, cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    reject_diagnostics(cfg)?;
    let mut store = ResultStore::create(&ctx.out_dir, "envelope", &cfg.canonical_toml())?;
    let liou = cfg.model_config().build()?;
    let op = cfg.observable.plan().place(*liou.lattice())?;
    let times = cfg.grid.times.build();
    let slopes = cfg.slopes();
    store.log(&format!("schedule slopes {slopes:?}"))?;
    let env = match diagnostics::decay_envelope(&op, &liou, &times, &slopes) {
        Ok(env) => env,
        Err(e) => {
            let e: CommandError = e.into();
            if let Some(k) = degenerate_kernel(&e) {
                return hypothesis_exit(
                    store,
                    "DegenerateFixedPoint",
                    json!({ "kernel_dim": k }),
                );
            }
            return Err(e);
        }
    };
    let mut rows = Vec::new();
    for i in 0..env.times.len() {
        rows.push(vec![
            fmt(env.times[i]),
            fmt(env.delta[i]),
            fmt(env.term_local[i]),
            fmt(env.term_mixing[i]),
            fmt(env.chosen_slope[i]),
        ]);
    }
    store.write_csv(
        "envelope.csv",
        &["t", "delta", "term_local", "term_mixing", "chosen_slope"],
        rows,
    )?;
    store.write_summary(&json!({
        "verdict": "ok",
        "exponent": env.exponent,
        "meets_polynomial_decay": env.meets_polynomial_decay(cfg.lattice.dimension),
        "slopes": env.slopes,
    }))?;
    let dir = store.finish()?;
    println!("{}", dir.display());
    Ok(RunOutcome::ok())
}

/// Perturbation template scaled to a sweep strength.
fn perturbation_family(
    cfg: &ExperimentConfig,
) -> impl Fn(f64) -> Result<Perturbation<f64>, LiouvillianError> + Sync {
    let base = cfg
        .perturbation
        .unwrap_or(PerturbationConfig::HamiltonianX { eps: 0.0 });
    move |eps: f64| match base {
        PerturbationConfig::HamiltonianX { .. } => Ok(presets::hamiltonian_x_perturbation(eps)),
        PerturbationConfig::DepolarizingRate { gamma, .. } => {
            Ok(presets::depolarizing_rate_perturbation(gamma, eps))
        }
        PerturbationConfig::RawFlip { .. } => {
            let sx = lindlab_core::algebra::sigma_x::<f64>();
            let id = lindlab_core::algebra::identity::<f64>(2);
            let map = sx.kronecker(&sx.conjugate()) - id.kronecker(&id);
            Perturbation::new(PerturbationTerm::RawUnital(map), vec![vec![0]], eps)
        }
    }
}

pub fn stability(ctx: &Context, cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    reject_diagnostics(cfg)?;
    let mut store = ResultStore::create(&ctx.out_dir, "stability", &cfg.canonical_toml())?;
    let family = ModelFamily::new(cfg.model.term()?, cfg.lattice.dimension);
    let plan = cfg.observable.plan();
    let sizes = cfg.sizes();
    let strengths = if cfg.grid.strengths.is_empty() {
        vec![1e-3, 1e-2, 1e-1]
    } else {
        cfg.grid.strengths.clone()
    };
    let times = cfg.grid.times.build();

    // theorem hypothesis: the unperturbed model must have a unique fixed
    // point; check it at the smallest size before paying for the sweep
    let l0 = *sizes.iter().min().expect("non-empty sizes");
    store.log(&format!("hypothesis check at L={l0}"))?;
    match fixed_point(&family.at(l0)?.assemble()?) {
        Ok(_) => {}
        Err(EvolutionError::DegenerateFixedPoint(k)) => {
            return hypothesis_exit(
                store,
                "DegenerateFixedPoint",
                json!({ "kernel_dim": k, "size": l0 }),
            );
        }
        Err(e) => return Err(e.into()),
    }

    let pert = perturbation_family(cfg);
    store.log(&format!(
        "sweeping sizes {sizes:?} x strengths {strengths:?}"
    ))?;
    let report = stability::stability_sweep(&plan, &family, &pert, &sizes, &strengths, &times)?;
    let mut rows = Vec::new();
    for (li, &l) in report.sizes.iter().enumerate() {
        for (ei, &e) in report.strengths.iter().enumerate() {
            for (ti, &t) in report.times.iter().enumerate() {
                rows.push(vec![
                    l.to_string(),
                    fmt(e),
                    fmt(t),
                    fmt(report.dev[li][ei][ti]),
                ]);
            }
        }
    }
    store.write_csv(
        "deviations.csv",
        &["size", "strength", "t", "deviation"],
        rows,
    )?;

    // footnote contrast: global vs local deviation of the degenerate
    // counterexample at the first sweep strength
    let eps_ce = strengths[0];
    let ce_rows: Vec<Vec<String>> = (1..=12)
        .map(|n| {
            let r = stability::counterexample_degenerate(eps_ce, n);
            vec![
                n.to_string(),
                fmt(r.global_trace_distance),
                fmt(r.local_deviation),
            ]
        })
        .collect();
    store.write_csv(
        "counterexample.csv",
        &["n", "global_trace_distance", "local_deviation"],
        ce_rows,
    )?;

    let consistent =
        report.theorem_consistent(cfg.verdict.flatness_tol, cfg.verdict.linearity_tol);
    store.log(&format!(
        "C_X={:.6} flatness={:.4} linearity_spread={:.4} consistent={consistent}",
        report.c_x, report.flatness, report.linearity_spread
    ))?;
    store.write_summary(&json!({
        "verdict": "ok",
        "c_x": report.c_x,
        "c_x_per_size": report.c_x_per_size,
        "observable_norm": report.observable_norm,
        "flatness": report.flatness,
        "linearity_slope": report.linearity_slope,
        "linearity_spread": report.linearity_spread,
        "flatness_tol": cfg.verdict.flatness_tol,
        "linearity_tol": cfg.verdict.linearity_tol,
        "theorem_consistent": consistent,
        "counterexample_eps": eps_ce,
    }))?;
    let dir = store.finish()?;
    println!("{}", dir.display());
    Ok(RunOutcome::ok())
}

pub fn glauber(ctx: &Context, cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    reject_diagnostics(cfg)?;
    let mut store = ResultStore::create(&ctx.out_dir, "glauber", &cfg.canonical_toml())?;
    let base = cfg.model_config().glauber()?.ok_or_else(|| {
        CommandError::Config("the glauber command requires the glauber-ising preset".into())
    })?;
    let sizes = cfg.sizes();
    let times = cfg.grid.times.build();
    let pert_cfg = cfg.rate_perturbation;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut sup_dev: Vec<(usize, f64)> = Vec::new();
    for &l in &sizes {
        let lattice = lindlab_core::Lattice::new(cfg.lattice.dimension, l)
            .map_err(|e| CommandError::Config(e.to_string()))?;
        let model = base.resized(lattice);
        let tilde = match pert_cfg {
            Some(p) => model.perturb_rates(p.build())?,
            None => model.clone(),
        };
        store.log(&format!("exact curves at L={l}"))?;
        let m0 = model.exact_magnetization(SpinState::AllUp, &times)?;
        let m1 = tilde.exact_magnetization(SpinState::AllUp, &times)?;
        let mut worst = 0.0f64;
        for ((t, a), b) in times.iter().zip(&m0).zip(&m1) {
            worst = worst.max((a - b).abs());
            rows.push(vec![
                l.to_string(),
                fmt(*t),
                "exact".into(),
                fmt(*a),
                fmt(*b),
                fmt(0.0),
            ]);
        }
        sup_dev.push((l, worst));
    }

    let mut kmc_summary = serde_json::Value::Null;
    if let Some(kmc) = cfg.kmc {
        let lattice = lindlab_core::Lattice::new(cfg.lattice.dimension, kmc.size)
            .map_err(|e| CommandError::Config(e.to_string()))?;
        let model = base.resized(lattice);
        let tilde = match pert_cfg {
            Some(p) => model.perturb_rates(p.build())?,
            None => model.clone(),
        };
        store.log(&format!(
            "kmc at L={} with {} chains (seed {})",
            kmc.size, kmc.chains, cfg.seed
        ))?;
        let c0 = model.kmc_magnetization(SpinState::AllUp, &times, kmc.chains, cfg.seed);
        let c1 = tilde.kmc_magnetization(SpinState::AllUp, &times, kmc.chains, cfg.seed ^ 1);
        let mut worst = 0.0f64;
        let mut worst_se = 0.0f64;
        for (ti, &t) in times.iter().enumerate() {
            let dev = (c0.mean[ti] - c1.mean[ti]).abs();
            let se = (c0.stderr[ti].powi(2) + c1.stderr[ti].powi(2)).sqrt();
            if dev > worst {
                worst = dev;
                worst_se = se;
            }
            rows.push(vec![
                kmc.size.to_string(),
                fmt(t),
                "kmc".into(),
                fmt(c0.mean[ti]),
                fmt(c1.mean[ti]),
                fmt(c1.stderr[ti]),
            ]);
        }
        kmc_summary = json!({
            "size": kmc.size,
            "chains": kmc.chains,
            "sup_deviation": worst,
            "stderr_at_sup": worst_se,
        });
    }

    store.write_csv(
        "magnetization.csv",
        &["size", "t", "engine", "base", "perturbed", "stderr"],
        rows,
    )?;

    // flatness of the deviation against the largest exact size
    let flatness = match sup_dev.last() {
        Some(&(_, d_ref)) if d_ref > ctx.tolerance => sup_dev
            .iter()
            .map(|&(_, d)| (d - d_ref).abs() / d_ref)
            .fold(0.0f64, f64::max),
        _ => 0.0,
    };
    let defect_model = match pert_cfg {
        Some(p) => base.perturb_rates(p.build())?,
        None => base.clone(),
    };
    store.write_summary(&json!({
        "verdict": "ok",
        "sup_deviation_per_size": sup_dev
            .iter()
            .map(|&(l, d)| json!({ "size": l, "sup_deviation": d }))
            .collect::<Vec<_>>(),
        "deviation_flatness": flatness,
        "detailed_balance_defect": defect_model.detailed_balance_defect()?,
        "kmc": kmc_summary,
        "seed": cfg.seed,
    }))?;
    let dir = store.finish()?;
    println!("{}", dir.display());
    Ok(RunOutcome::ok())
}
