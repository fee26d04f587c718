use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use funreg_core::{
    cv_select, fit_ws, precompute, rmise, save_oracle, score_table_csv, simulate, CvConfig,
    FittedModel, FunctionalDataset, KernelSpec, PenaltyConfig, PredictionRequest, ScenarioKind,
    SimulationScenario,
};

use crate::config::Settings;

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn scenario_from(settings: &Settings) -> Result<SimulationScenario> {
    let kind_name = settings.require("scenario")?;
    let kind = ScenarioKind::from_name(kind_name)
        .ok_or_else(|| anyhow!("unknown scenario '{kind_name}' (use A or B)"))?;
    Ok(SimulationScenario {
        kind,
        q: settings.require_usize("q")?,
        kappa: settings.require_f64("kappa")?,
        p: settings.usize_or("p", 0)?,
        seed: settings.u64_or("seed", 0)?,
    })
}

fn grid_sizes(settings: &Settings) -> Result<(usize, usize)> {
    if let Some(n) = settings.get_usize("n")? {
        return Ok((n, n));
    }
    Ok((
        settings.require_usize("n1")?,
        settings.require_usize("n2")?,
    ))
}

/// Train size T plus the study's test share `max(1, floor(T/2))`.
fn split_sizes(t_train: usize) -> (usize, usize) {
    let t_test = (t_train / 2).max(1);
    (t_train, t_test)
}

pub fn cmd_simulate(settings: &Settings) -> Result<()> {
    let scenario = scenario_from(settings)?;
    let (n1, n2) = grid_sizes(settings)?;
    let t_train = settings.require_usize("t")?;
    let (t_train, t_test) = split_sizes(t_train);
    let (all, oracle) = simulate(&scenario, n1, n2, t_train + t_test)?;
    let (train, test) = all.split_at(t_train)?;
    let out = settings.out_dir();
    ensure_out_dir(&out)?;
    let train_path = out.join("train.csv");
    let test_path = out.join("test.csv");
    let oracle_path = out.join("oracle.txt");
    train.save_csv(&train_path)?;
    test.save_csv(&test_path)?;
    save_oracle(&oracle, t_train, &oracle_path)?;
    println!("wrote {}", train_path.display());
    println!("wrote {}", test_path.display());
    println!("wrote {}", oracle_path.display());
    Ok(())
}

fn penalty_from(settings: &Settings) -> Result<PenaltyConfig> {
    Ok(PenaltyConfig::new(
        settings.require_f64("lambda1")?,
        settings.f64_or("lambda2", 0.0)?,
        settings.f64_or("lambda3", 0.0)?,
    )
    .with_tolerance(
        settings.f64_or("epsilon", PenaltyConfig::DEFAULT_EPSILON)?,
        settings.usize_or("l_max", PenaltyConfig::DEFAULT_L_MAX)?,
    ))
}

pub fn cmd_fit(settings: &Settings) -> Result<()> {
    let dataset = FunctionalDataset::load_csv(settings.path("data")?)?;
    let cfg = penalty_from(settings)?;
    let ws = precompute(&dataset, KernelSpec::bernoulli_w22())?;
    let fitted = fit_ws(&ws, &cfg)?;
    if !fitted.converged {
        eprintln!(
            "warning: class=convergence converged=false iterations={}",
            fitted.iterations
        );
    }
    let out = settings.out_dir();
    ensure_out_dir(&out)?;
    let model_path = out.join("model.txt");
    FittedModel::from_fit(&ws, &fitted, &cfg).save(&model_path)?;
    println!("wrote {}", model_path.display());
    println!(
        "fit: converged={} iterations={} objective={}",
        fitted.converged,
        fitted.iterations,
        fmt_f64(*fitted.objective_trace.last().unwrap())
    );
    Ok(())
}

pub fn cmd_predict(settings: &Settings) -> Result<()> {
    let model = FittedModel::load(settings.path("model")?)?;
    let dataset = FunctionalDataset::load_csv(settings.path("data")?)?;
    let target_points = match settings.get("targets") {
        None => model.y_grid.points().to_vec(),
        Some(list) => list
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("bad target point '{tok}'"))
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    let req = PredictionRequest {
        x_new: dataset.x().clone(),
        z_new: dataset.z().clone(),
        target_points: target_points.clone(),
    };
    let predicted = model.predict(&req)?;
    let out = settings.out_dir();
    ensure_out_dir(&out)?;
    let path = out.join("predictions.csv");
    let mut text = String::from("#targets: ");
    text.push_str(
        &target_points
            .iter()
            .map(|&v| fmt_f64(v))
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push('\n');
    for t in 0..predicted.ncols() {
        let row: Vec<String> = predicted.column(t).iter().map(|&v| fmt_f64(v)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// `lambda3_grid = auto` (the default for p > 0) anchors the group penalty
/// to the training data's group-kill bound, the usual scale for lasso grids.
fn auto_lambda3_grid(train: &FunctionalDataset) -> Result<Vec<f64>> {
    let ws = precompute(train, KernelSpec::bernoulli_w22())?;
    let lmax = funreg_core::group_lasso_lambda_max(&ws);
    Ok([0.05, 0.1, 0.2].iter().map(|a| a * lmax).collect())
}

fn cv_config_from(settings: &Settings, train: &FunctionalDataset) -> Result<CvConfig> {
    let p = train.p();
    let lambda1_grid = settings.grid_or("lambda1_grid", funreg_core::preset_fof_lambda1())?;
    let l2_default = if p == 0 {
        vec![0.0]
    } else {
        vec![1e-8, 1e-6, 1e-4]
    };
    let lambda3_grid = match settings.get("lambda3_grid") {
        None if p == 0 => vec![0.0],
        None | Some("auto") => auto_lambda3_grid(train)?,
        Some(_) => settings.grid_or("lambda3_grid", vec![0.0])?,
    };
    let mut cv = CvConfig::new(
        settings.usize_or("folds", 5)?,
        lambda1_grid,
        settings.grid_or("lambda2_grid", l2_default)?,
        lambda3_grid,
        settings.u64_or("seed", 0)?,
    );
    cv.epsilon = settings.f64_or("epsilon", PenaltyConfig::DEFAULT_EPSILON)?;
    cv.l_max = settings.usize_or("l_max", PenaltyConfig::DEFAULT_L_MAX)?;
    Ok(cv)
}

pub fn cmd_cv(settings: &Settings) -> Result<()> {
    let dataset = FunctionalDataset::load_csv(settings.path("data")?)?;
    let cv = cv_config_from(settings, &dataset)?;
    let (selected, rows) = cv_select(&dataset, KernelSpec::bernoulli_w22(), &cv)?;
    let out = settings.out_dir();
    ensure_out_dir(&out)?;
    let scores_path = out.join("cv_scores.csv");
    std::fs::write(&scores_path, score_table_csv(&rows))?;
    let selection_path = out.join("cv_selection.txt");
    let best_mean = rows
        .iter()
        .filter(|r| {
            r.lambda1 == selected.lambda1
                && r.lambda2 == selected.lambda2
                && r.lambda3 == selected.lambda3
        })
        .map(|r| r.mean_score)
        .next()
        .unwrap_or(f64::NAN);
    let mut report = String::from("#funreg-cv: v1\n");
    report.push_str(&format!(
        "#lambda: {},{},{}\n",
        fmt_f64(selected.lambda1),
        fmt_f64(selected.lambda2),
        fmt_f64(selected.lambda3)
    ));
    report.push_str(&format!("#mean_score: {}\n", fmt_f64(best_mean)));
    report.push_str(&format!("#folds: {}\n", cv.folds));
    report.push_str(&format!("#seed: {}\n", cv.seed));
    report.push_str(&format!("#grid_points: {}\n", rows.len()));
    std::fs::write(&selection_path, report)?;
    println!("wrote {}", scores_path.display());
    println!("wrote {}", selection_path.display());
    println!(
        "cv: lambda1={} lambda2={} lambda3={} mean_score={}",
        fmt_f64(selected.lambda1),
        fmt_f64(selected.lambda2),
        fmt_f64(selected.lambda3),
        fmt_f64(best_mean)
    );
    Ok(())
}

/// Published average RMISE (x100) of the RKHS estimator for the study cells,
/// used for side-by-side comparison in bench output. Never asserted against.
fn published_reference(kind: ScenarioKind, n: usize, t: usize, q: usize, p: usize, kappa: f64) -> Option<f64> {
    let kappa_key = if (kappa - 0.5).abs() < 1e-12 {
        0
    } else if (kappa - 1.0).abs() < 1e-12 {
        1
    } else if (kappa - 2.0).abs() < 1e-12 {
        2
    } else {
        return None;
    };
    let cell = (kind, n, t, q, p, kappa_key);
    let value = match cell {
        (ScenarioKind::Exponential, 5, 50, 5, 0, 0) => 15.98,
        (ScenarioKind::Exponential, 5, 50, 5, 0, 1) => 9.14,
        (ScenarioKind::Exponential, 5, 50, 5, 0, 2) => 4.99,
        (ScenarioKind::Exponential, 20, 100, 20, 0, 0) => 10.61,
        (ScenarioKind::Exponential, 20, 100, 20, 0, 1) => 5.89,
        (ScenarioKind::Exponential, 20, 100, 20, 0, 2) => 3.60,
        (ScenarioKind::Exponential, 40, 200, 50, 0, 0) => 7.37,
        (ScenarioKind::Exponential, 40, 200, 50, 0, 1) => 3.98,
        (ScenarioKind::Exponential, 40, 200, 50, 0, 2) => 2.34,
        (ScenarioKind::Random, 5, 50, 5, 0, 0) => 20.86,
        (ScenarioKind::Random, 5, 50, 5, 0, 1) => 10.42,
        (ScenarioKind::Random, 5, 50, 5, 0, 2) => 5.21,
        (ScenarioKind::Random, 20, 100, 20, 0, 0) => 37.41,
        (ScenarioKind::Random, 20, 100, 20, 0, 1) => 18.39,
        (ScenarioKind::Random, 20, 100, 20, 0, 2) => 9.19,
        (ScenarioKind::Random, 40, 200, 50, 0, 0) => 39.22,
        (ScenarioKind::Random, 40, 200, 50, 0, 1) => 20.75,
        (ScenarioKind::Random, 40, 200, 50, 0, 2) => 12.59,
        (ScenarioKind::Exponential, 5, 50, 5, 3, 0) => 17.16,
        (ScenarioKind::Exponential, 5, 50, 5, 3, 1) => 9.43,
        (ScenarioKind::Exponential, 5, 50, 5, 3, 2) => 5.03,
        (ScenarioKind::Exponential, 20, 100, 20, 3, 0) => 11.25,
        (ScenarioKind::Exponential, 20, 100, 20, 3, 1) => 5.95,
        (ScenarioKind::Exponential, 20, 100, 20, 3, 2) => 3.38,
        (ScenarioKind::Exponential, 40, 200, 50, 3, 0) => 8.50,
        (ScenarioKind::Exponential, 40, 200, 50, 3, 1) => 4.36,
        (ScenarioKind::Exponential, 40, 200, 50, 3, 2) => 2.33,
        (ScenarioKind::Random, 5, 50, 5, 3, 0) => 14.81,
        (ScenarioKind::Random, 5, 50, 5, 3, 1) => 7.42,
        (ScenarioKind::Random, 5, 50, 5, 3, 2) => 3.72,
        (ScenarioKind::Random, 20, 100, 20, 3, 0) => 23.95,
        (ScenarioKind::Random, 20, 100, 20, 3, 1) => 11.83,
        (ScenarioKind::Random, 20, 100, 20, 3, 2) => 5.92,
        (ScenarioKind::Random, 40, 200, 50, 3, 0) => 27.52,
        (ScenarioKind::Random, 40, 200, 50, 3, 1) => 14.23,
        (ScenarioKind::Random, 40, 200, 50, 3, 2) => 8.20,
        _ => return None,
    };
    Some(value)
}

/// One bench replicate: simulate, cross-validate, fit, predict the held-out
/// half, and score RMISE against the oracle.
pub fn bench_replicate(
    scenario: &SimulationScenario,
    n1: usize,
    n2: usize,
    t_train: usize,
    settings: &Settings,
) -> Result<(f64, u128)> {
    let start = Instant::now();
    let (t_train, t_test) = split_sizes(t_train);
    let (all, oracle) = simulate(scenario, n1, n2, t_train + t_test)?;
    let (train, test) = all.split_at(t_train)?;
    let mut cv = cv_config_from(settings, &train)?;
    cv.seed = scenario.seed;
    let (selected, _) = cv_select(&train, KernelSpec::bernoulli_w22(), &cv)?;
    let ws = precompute(&train, KernelSpec::bernoulli_w22())?;
    let fitted = fit_ws(&ws, &selected)?;
    let req = PredictionRequest {
        x_new: test.x().clone(),
        z_new: test.z().clone(),
        target_points: test.y_grid().points().to_vec(),
    };
    let predicted = funreg_core::predict(&ws, &fitted, &req)?;
    let oracles = oracle.signal_matrix(t_train, test.z(), test.y_grid().points())?;
    let score = rmise(&predicted, &oracles, test.y_grid())? * 100.0;
    Ok((score, start.elapsed().as_millis()))
}

pub fn cmd_bench(settings: &Settings) -> Result<()> {
    let scenario = scenario_from(settings)?;
    let (n1, n2) = grid_sizes(settings)?;
    if n1 != n2 {
        bail!("bench uses a common grid size; set n rather than n1/n2");
    }
    let t_train = settings.require_usize("t")?;
    let replicates = settings.require_usize("replicates")?;
    if replicates == 0 {
        bail!("replicates must be at least 1");
    }
    let parallel = settings.bool_or("parallel", false)?;
    let seed_base = scenario.seed;

    let run = |r: usize| -> Result<(u64, f64, u128)> {
        let seed = seed_base + r as u64;
        let mut sc = scenario;
        sc.seed = seed;
        let (score, ms) = bench_replicate(&sc, n1, n2, t_train, settings)?;
        Ok((seed, score, ms))
    };
    let results: Vec<(u64, f64, u128)> = if parallel {
        (0..replicates)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..replicates).map(run).collect::<Result<Vec<_>>>()?
    };

    let out = settings.out_dir();
    ensure_out_dir(&out)?;
    let path = out.join("bench.csv");
    let mut text = String::new();
    if let Some(reference) =
        published_reference(scenario.kind, n1, t_train, scenario.q, scenario.p, scenario.kappa)
    {
        text.push_str(&format!("#published_rkhs_rmise_x100: {reference}\n"));
    }
    text.push_str("scenario,n,T,q,p,kappa,seed,rmise_x100,runtime_ms\n");
    let prefix = format!(
        "{},{},{},{},{},{}",
        scenario.kind.name(),
        n1,
        t_train,
        scenario.q,
        scenario.p,
        fmt_f64(scenario.kappa)
    );
    for (seed, score, ms) in &results {
        text.push_str(&format!("{prefix},{seed},{},{ms}\n", fmt_f64(*score)));
    }
    let mean = results.iter().map(|(_, s, _)| s).sum::<f64>() / results.len() as f64;
    let mean_ms = results.iter().map(|(_, _, m)| m).sum::<u128>() / results.len() as u128;
    text.push_str(&format!("{prefix},avg,{},{mean_ms}\n", fmt_f64(mean)));
    std::fs::write(&path, text)?;
    println!("wrote {}", path.display());
    println!("bench: replicates={replicates} rmise_x100_avg={}", fmt_f64(mean));
    Ok(())
}
