//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; pass a substring to run a subset.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{grid_projection, mean_residual, random_cut_box, random_feasible, reference_loop, three_player_game, two_player_game, vector};
use delayed_md::delay::{DelayKind, DelayMode, DelayModel};
use delayed_md::estimator::EstimatorKind;
use delayed_md::games::{solve_critical_point, ThermalGame, ThermalGameSpec};
use delayed_md::geometry::{prox_step, MirrorStructure};
use delayed_md::runner::{replicate, run, Reference, RunConfig, Summary};
use delayed_md::schedules::{
    validate_params, ScheduleParams, DELAY_BUDGET, EXPONENT_SUM, STEP_DOMINATES_RADIUS, STEP_EXPONENT_RANGE,
};
use delayed_md::GameModel;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn reference(game: &dyn GameModel) -> Reference {
    let cp = solve_critical_point(game, 1e-13, 2_000_000).expect("oracle converges");
    Reference { profile: cp.profile, potential: cp.potential }
}

fn thermal() -> ThermalGame {
    ThermalGame::new(ThermalGameSpec::default_instance(0), None).expect("default instance builds")
}

/// Starvation count and staleness bounds over many seeded delay traces of
/// both kinds, checked from the consumption log of full runs.
fn starvation_bounds() -> Outcome {
    let game = two_player_game();
    let horizon = 10_000u64;
    let mut violations = Vec::new();
    let mut traces = 0;
    for seed in 0..100u64 {
        let bounded = DelayModel::bounded_uniform(1.0 + (seed * 37 % 200) as f64);
        let growing = DelayModel {
            kind: DelayKind::HomogeneousSublinear,
            mode: DelayMode::Deterministic,
            offset: (seed % 7) as f64,
            exponent: 0.05 + 0.009 * seed as f64,
            coefficient: 0.5 + 0.5 * (seed % 10) as f64,
        };
        for model in [bounded, growing] {
            let mut cfg = RunConfig::new(model, ScheduleParams::residual_default(), horizon);
            cfg.seed = seed;
            cfg.stride = horizon;
            cfg.record_history = true;
            let out = run(&game, &cfg).map_err(|e| e.to_string())?;
            traces += 1;
            for log in &out.history.unwrap().consumed {
                let mut starved = 0u64;
                for k in 1..=horizon {
                    match log[k as usize - 1] {
                        None => starved += 1,
                        Some(s) => {
                            if (s as f64) + model.bound(s) + 1.0 < k as f64 {
                                violations.push(format!("seed {seed} {model:?}: k={k} consumed {s}"));
                            }
                        }
                    }
                    let cap = (k as f64).min(model.bound(k).ceil() + 1.0);
                    if starved as f64 > cap {
                        violations.push(format!("seed {seed} {model:?}: k={k} starved {starved} > {cap}"));
                    }
                }
            }
            if out.stats.starvation_bound_violations + out.stats.lag_bound_violations > 0 {
                violations.push(format!("seed {seed}: runtime checks flagged {model:?}"));
            }
        }
    }
    if violations.is_empty() {
        Ok(format!("{traces} traces x {horizon} iterations, 0 violations"))
    } else {
        Err(format!("{} violations, first: {}", violations.len(), violations[0]))
    }
}

fn zero_delay_equivalence() -> Outcome {
    let game = two_player_game();
    let schedule = ScheduleParams::residual_default();
    let mut cfg = RunConfig::new(DelayModel::zero(), schedule, 1_000);
    cfg.seed = 2024;
    cfg.record_history = true;
    let actions = run(&game, &cfg).map_err(|e| e.to_string())?.history.unwrap().actions;
    let expected = reference_loop(&game, &schedule, 2024, 1_000);
    match actions.iter().zip(&expected).position(|(a, b)| a != b) {
        None if actions.len() == expected.len() => Ok(format!("{} iterates bit-identical", actions.len())),
        None => Err(format!("length {} vs {}", actions.len(), expected.len())),
        Some(k) => Err(format!("first difference at X_{}", k + 1)),
    }
}

fn estimator_bias() -> Outcome {
    let game = three_player_game();
    let player = 0;
    let x = vec![vector(&[0.6, -0.5]), vector(&[-0.4, 0.7]), vector(&[0.3, 0.5])];
    let truth = game.player_gradient(player, &x).unwrap();
    // Shrinking toward the ball center moves the evaluation point by
    // (δ/r)(p − x), which for a quadratic game shifts the gradient by
    // (δ/r)·[M(p − x)]_i; allow twice that slope.
    let shift: Vec<DVector<f64>> = (0..3)
        .map(|i| {
            let b = game.interior_ball(i);
            (&b.center - &x[i]) / b.radius
        })
        .collect();
    let slope = (game.pseudo_gradient(&shift).unwrap()[player].clone()
        - game.player_gradient(player, &vec![DVector::zeros(2); 3]).unwrap())
    .norm();
    let c = 2.0 * slope;
    let gap = |delta: f64| (mean_residual(&game, &x, player, delta, 100_000) - &truth).norm();
    let (wide, narrow) = (gap(0.1), gap(0.05));
    let ratio = narrow / wide;
    let detail = format!("gap(0.1)={wide:.4e} gap(0.05)={narrow:.4e} ratio={ratio:.3} c={c:.3}");
    if wide <= c * 0.1 && narrow <= c * 0.05 && (0.3..=0.8).contains(&ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bounded_estimates() -> Outcome {
    let game = thermal();
    let burn_in = 100;
    let mut details = Vec::new();
    let mut ok = true;
    for (name, delays) in [
        ("zero", DelayModel::zero()),
        ("k^0.1", DelayModel::power_law(1.0, 0.1)),
        ("5k^0.5", DelayModel::power_law(5.0, 0.5)),
    ] {
        let mut maxima = Vec::new();
        for horizon in [1_000u64, 10_000, 100_000] {
            let cfg = RunConfig::new(delays, ScheduleParams::residual_default(), horizon);
            let out = run(&game, &cfg).map_err(|e| e.to_string())?;
            let peak = out.trace[burn_in..].iter().map(|r| r.ghat_norm).fold(0.0, f64::max);
            if !peak.is_finite() {
                return Err(format!("{name}: non-finite estimate"));
            }
            maxima.push(peak);
        }
        ok &= maxima.windows(2).all(|w| w[1] <= w[0]);
        details.push(format!("{name}: {:.3}/{:.3}/{:.3}", maxima[0], maxima[1], maxima[2]));
    }
    let detail = format!("running max after {burn_in}: {}", details.join(", "));
    if ok { Ok(detail) } else { Err(detail) }
}

fn quadratic_convergence() -> Outcome {
    let game = three_player_game();
    let mut cfg = RunConfig::new(DelayModel::bounded_uniform(50.0), ScheduleParams::residual_default(), 50_000);
    cfg.reference = Some(reference(&game));
    cfg.stride = 1_000;
    cfg.replications = 8;
    let rep = replicate(&game, &cfg).map_err(|e| e.to_string())?;
    let at = |k: u64| rep.aggregate.iter().find(|r| r.iteration == k).unwrap().rel_dist.median;
    let (early, late) = (at(1_000), at(50_000));
    let detail = format!("median rel_dist {early:.4e} at k=1e3 -> {late:.4e} at K=5e4 ({:.1}%)", 100.0 * late / early);
    if late < 0.2 * early { Ok(detail) } else { Err(detail) }
}

fn delay_sweep_ordering() -> Outcome {
    let game = thermal();
    let reference = reference(&game);
    let horizon = 100_000;
    let scenarios = [
        ("d=1e3", DelayModel::bounded_uniform(1_000.0)),
        ("k^0.1", DelayModel::power_law(1.0, 0.1)),
        ("5k^0.5", DelayModel::power_law(5.0, 0.5)),
        ("5k^0.75", DelayModel::power_law(5.0, 0.75)),
        ("5k^0.99", DelayModel::power_law(5.0, 0.99)),
    ];
    let mut gaps = Vec::new();
    for (name, delays) in scenarios {
        let mut cfg = RunConfig::new(delays, ScheduleParams::residual_default(), horizon);
        cfg.reference = Some(reference.clone());
        cfg.stride = horizon;
        cfg.replications = 8;
        let rep = replicate(&game, &cfg).map_err(|e| e.to_string())?;
        gaps.push((name, rep.aggregate.last().unwrap().potential_gap.median));
    }
    let detail = gaps.iter().map(|(n, g)| format!("{n}={g:.4e}")).collect::<Vec<_>>().join(" ");
    let mild: Vec<f64> = gaps[..3].iter().map(|g| g.1).collect();
    let worst_mild = mild.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_mild = mild.iter().copied().fold(f64::INFINITY, f64::min);
    let ordered = gaps[3..].iter().all(|g| g.1 > worst_mild);
    let close = best_mild > 0.0 && worst_mild / best_mild <= 3.0;
    if ordered && close { Ok(detail) } else { Err(detail) }
}

fn variance_comparison() -> Outcome {
    let game = thermal();
    let reference = reference(&game);
    let horizon = 10_000;
    let mut finals = Vec::new();
    for (estimator, schedule) in [
        (EstimatorKind::Residual, ScheduleParams::residual_default()),
        (EstimatorKind::SinglePoint, ScheduleParams::single_point_default()),
    ] {
        let mut cfg = RunConfig::new(DelayModel::bounded_uniform(1_000.0), schedule, horizon);
        cfg.estimator = estimator;
        cfg.reference = Some(reference.clone());
        cfg.stride = horizon;
        cfg.replications = 8;
        let rep = replicate(&game, &cfg).map_err(|e| e.to_string())?;
        let last: Vec<f64> = rep.runs.iter().map(|r| r.trace.last().unwrap().rel_dist).collect();
        finals.push(Summary::of(&last));
    }
    let (res, single) = (finals[0], finals[1]);
    let detail = format!(
        "residual median {:.4} IQR {:.4}; single-point median {:.4} IQR {:.4}",
        res.median,
        res.iqr(),
        single.median,
        single.iqr()
    );
    if res.iqr() < single.iqr() && res.median <= single.median { Ok(detail) } else { Err(detail) }
}

fn validator_truth_table() -> Outcome {
    let exps = |ag: f64, ad: f64| ScheduleParams {
        step_exponent: ag,
        radius_exponent: ad,
        ..ScheduleParams::residual_default()
    };
    let base = validate_params(&ScheduleParams::residual_default(), 0.5, None);
    if !base.is_valid() {
        return Err(format!("default schedule rejected:\n{base}"));
    }
    let rows = [
        (STEP_EXPONENT_RANGE, exps(0.4, 0.6), 0.5),
        (STEP_DOMINATES_RADIUS, exps(0.9, 0.9), 0.5),
        (EXPONENT_SUM, exps(0.6, 0.3), 0.0),
        (DELAY_BUDGET, exps(0.9, 0.6), 2.0 * 0.9 - 1.0),
    ];
    for (name, params, ad) in rows {
        let report = validate_params(&params, ad, None);
        if report.check(name).is_none_or(|c| c.passed) {
            return Err(format!("{name} not flagged"));
        }
    }
    Ok("defaults pass all four conditions; each violation flagged by name".into())
}

fn geometry_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let set = random_cut_box(&mut rng);
        let z = vector(&[rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]);
        let p = set.project(&z).map_err(|e| e.to_string())?;
        worst = worst.max((p - grid_projection(&set, &z)).norm());
    }
    let mut infeasible = 0;
    for _ in 0..2_000 {
        let set = random_cut_box(&mut rng);
        let x = set.project(&vector(&[rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])).unwrap();
        let y = vector(&[rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
        let out = prox_step(MirrorStructure::Euclidean, &set, &x, &y).map_err(|e| e.to_string())?;
        if !set.contains(&out, 1e-9) {
            infeasible += 1;
        }
    }
    let game = thermal();
    let h = 1e-6;
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let x = random_feasible(&game, &mut rng);
        for i in 0..game.num_players() {
            let g = game.player_gradient(i, &x).unwrap();
            for t in 0..x[i].len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i][t] += h;
                xm[i][t] -= h;
                let fd = (game.potential(&xp).unwrap() - game.potential(&xm).unwrap()) / (2.0 * h);
                worst_rel = worst_rel.max((fd - g[t]).abs() / g[t].abs().max(1.0));
            }
        }
    }
    let detail = format!(
        "projection gap {worst:.2e} (50 cases); {infeasible}/2000 infeasible prox outputs; gradient identity {worst_rel:.2e}"
    );
    if worst < 1e-3 && infeasible == 0 && worst_rel < 1e-5 { Ok(detail) } else { Err(detail) }
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("starvation-bounds", starvation_bounds),
        ("zero-delay-equivalence", zero_delay_equivalence),
        ("estimator-bias", estimator_bias),
        ("bounded-estimates", bounded_estimates),
        ("quadratic-convergence", quadratic_convergence),
        ("delay-sweep-ordering", delay_sweep_ordering),
        ("variance-comparison", variance_comparison),
        ("validator-truth-table", validator_truth_table),
        ("geometry-suite", geometry_suite),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
