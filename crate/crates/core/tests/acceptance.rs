//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Set
//! `ACCEPTANCE_ONLY=1,4` to run a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use rlsp_core::continuous::{ContinuousEnv, EnvName, Scripted};
use rlsp_core::deep::{compute_grad, DeepRlspConfig, EpochRecord, ObservedStateSet, TabularBackend};
use rlsp_core::harness::{
    discriminator_similarity, gridworld_parity_suite, method_rng, prepare_task, random_baseline, run_method,
    DiscriminatorConfig, Method, PreparedTask, Profile, ProfileSettings,
};
use rlsp_core::models::TabularInverse;
use rlsp_core::nn::{
    check_gradients, ApproximatorConfig, EncoderDecoder, MixtureDensity, MixtureDensityHead, Mlp,
    Normalizer, Regressor,
};
use rlsp_core::planning::{boltzmann_policy, mceirl_trajectory_gradient, rollout, soft_value_iteration_for};
use rlsp_core::rlsp::{brute_force_state_gradient, exact_state_gradient};
use rlsp_core::tabular::{FeatureMap, RewardParams, TabularMdp};
use rlsp_core::util::{mean_and_stderr, seeded_rng, SimRng};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    id: usize,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn report(id: usize, passed: bool, detail: String, start: Instant) -> Outcome {
    let o = Outcome {
        id,
        passed,
        detail,
        elapsed: start.elapsed(),
    };
    print_line(&o);
    o
}

fn print_line(o: &Outcome) {
    println!(
        "criterion {:>2}: {} ({:.1}s) {}",
        o.id,
        if o.passed { "PASS" } else { "FAIL" },
        o.elapsed.as_secs_f64(),
        o.detail
    );
}

/// Random MDP with sparse stochastic rows, a random initial distribution and
/// Gaussian features.
fn random_mdp(rng: &mut SimRng, ns: usize, na: usize, horizon: usize, dim: usize) -> (TabularMdp, FeatureMap) {
    let rows = (0..ns * na)
        .map(|_| {
            let k = rng.random_range(1..=ns.min(3));
            let w: Vec<(usize, f64)> = (0..k).map(|_| (rng.random_range(0..ns), rng.random::<f64>() + 0.05)).collect();
            let total: f64 = w.iter().map(|x| x.1).sum();
            w.into_iter().map(|(s, p)| (s, p / total)).collect()
        })
        .collect();
    let init: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = init.iter().sum();
    let init = init.into_iter().map(|p| p / total).collect();
    let mdp = TabularMdp::new(ns, na, rows, init, horizon).unwrap();
    let features = FeatureMap::from_rows(
        (0..ns)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
            .collect(),
    )
    .unwrap();
    (mdp, features)
}

fn random_theta(rng: &mut SimRng, dim: usize) -> RewardParams {
    RewardParams::new((0..dim).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(101);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    while tested < 60 {
        let ns = rng.random_range(1..=5);
        let na = rng.random_range(1..=3);
        let t = rng.random_range(1..=4);
        let (mdp, features) = random_mdp(&mut rng, ns, na, t, 3);
        let theta = random_theta(&mut rng, 3);
        let s0 = rng.random_range(0..ns);
        let (Ok(exact), Ok(brute)) = (
            exact_state_gradient(&mdp, &features, &theta, s0, t, true),
            brute_force_state_gradient(&mdp, &features, &theta, s0, t, true),
        ) else {
            // s0 unreachable in t steps: both must agree that it is
            assert!(exact_state_gradient(&mdp, &features, &theta, s0, t, true).is_err());
            continue;
        };
        worst = worst.max(max_abs_diff(&exact, &brute));
        tested += 1;
    }
    let passed = worst < 1e-8 && start.elapsed() < Duration::from_secs(60);
    report(1, passed, format!("{tested} random MDPs, max |exact - brute force| = {worst:.2e} (tol 1e-8)"), start)
}

/// 4-state stochastic MDP and reward used by criteria 2 and 3.
fn four_state_problem() -> (TabularMdp, FeatureMap, RewardParams, usize) {
    let mdp = TabularMdp::new(
        4,
        2,
        vec![
            vec![(0, 0.7), (1, 0.3)],
            vec![(2, 0.8), (0, 0.2)],
            vec![(1, 0.6), (2, 0.4)],
            vec![(3, 0.5), (0, 0.5)],
            vec![(2, 0.9), (3, 0.1)],
            vec![(3, 0.7), (1, 0.3)],
            vec![(3, 0.6), (0, 0.4)],
            vec![(2, 0.5), (1, 0.5)],
        ],
        vec![0.4, 0.3, 0.2, 0.1],
        3,
    )
    .unwrap();
    let features = FeatureMap::from_rows(vec![
        vec![1.0, 0.0, 0.2],
        vec![0.0, 1.0, 0.5],
        vec![0.3, 0.3, 1.0],
        vec![0.8, -0.4, 0.0],
    ])
    .unwrap();
    let theta = RewardParams::new(vec![0.6, -0.3, 0.9]).unwrap();
    (mdp, features, theta, 2)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (mdp, features, theta, s0) = four_state_problem();
    let t = mdp.horizon();
    let exact = exact_state_gradient(&mdp, &features, &theta, s0, t, false).unwrap();
    let policy = boltzmann_policy(&soft_value_iteration_for(&mdp, &features, &theta, t).unwrap());
    let inverse = TabularInverse::exact(&mdp, &policy);
    let backend = TabularBackend::with_models(mdp, features, policy, inverse);
    let obs = ObservedStateSet::new(vec![s0]).unwrap();
    let mut rng = seeded_rng(202);

    let est = compute_grad(&obs, &backend, t, 10_000, &mut rng, None).unwrap();
    let z_max = est
        .grad
        .iter()
        .zip(&exact)
        .zip(&est.stderr)
        .map(|((g, e), se)| (g - e).abs() / se)
        .fold(0.0, f64::max);

    // root-mean-square error over repetitions, fitted on log-log
    let sizes = [100usize, 300, 1000, 3000, 10_000];
    let reps = 30;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in &sizes {
        let mse: f64 = (0..reps)
            .map(|_| {
                let g = compute_grad(&obs, &backend, t, n, &mut rng, None).unwrap().grad;
                g.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / reps as f64;
        xs.push((n as f64).ln());
        ys.push(mse.sqrt().ln());
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let passed = z_max < 3.0 && (slope + 0.5).abs() <= 0.1 && start.elapsed() < Duration::from_secs(120);
    report(
        2,
        passed,
        format!("max |error|/stderr = {z_max:.2} (tol 3), log-log slope = {slope:.3} (target -0.5 +/- 0.1)"),
        start,
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (mdp, features, theta, _) = four_state_problem();
    let t = mdp.horizon();
    let policy = boltzmann_policy(&soft_value_iteration_for(&mdp, &features, &theta, t).unwrap());
    let mut rng = seeded_rng(303);
    let n = 10_000;
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rlsp_core::util::sample_index(mdp.initial_dist(), &mut rng);
        let tau = rollout(&mdp, &policy, s, t, &mut rng).unwrap();
        let with = mceirl_trajectory_gradient(&mdp, &features, &theta, &tau, true).unwrap();
        let without = mceirl_trajectory_gradient(&mdp, &features, &theta, &tau, false).unwrap();
        terms.push(with.iter().zip(&without).map(|(a, b)| a - b).collect());
    }
    let dim = features.dim();
    let (mut mean, mut se) = (vec![0.0; dim], vec![0.0; dim]);
    for i in 0..dim {
        let col: Vec<f64> = terms.iter().map(|c| c[i]).collect();
        (mean[i], se[i]) = mean_and_stderr(&col);
    }
    let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    let se_norm = se.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nonzero = terms.iter().any(|c| c.iter().any(|x| x.abs() > 1e-9));
    let passed = nonzero && norm < 3.0 * se_norm && start.elapsed() < Duration::from_secs(60);
    report(
        3,
        passed,
        format!("|mean correction| = {norm:.2e}, 3 standard errors = {:.2e}", 3.0 * se_norm),
        start,
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cases = gridworld_parity_suite(0).unwrap();
    let mut detail = Vec::new();
    for c in &cases {
        detail.push(format!(
            "{}: exact={} deep={} af={}{}",
            c.case,
            c.exact,
            c.deep,
            c.average_features,
            if c.passed() { String::new() } else { format!(" [{}]", c.failures.join("; ")) }
        ));
    }
    let passed = cases.iter().all(|c| c.passed()) && start.elapsed() < Duration::from_secs(600);
    report(4, passed, detail.join(" | "), start)
}

fn gaussian(rows: usize, cols: usize, rng: &mut SimRng) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (mut reg, mut dens, mut enc) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..10 {
        let mut rng = seeded_rng(600 + seed);
        let act = ApproximatorConfig::regressor_desk().activation;
        let mut r = Regressor::untrained(Mlp::new(&[4, 32, 32, 3], act, &mut rng).unwrap());
        let probe = (gaussian(16, 4, &mut rng), gaussian(16, 3, &mut rng));
        reg = reg.max(check_gradients(&mut r, &probe, seed).unwrap());

        let head = MixtureDensityHead::default();
        let net = Mlp::new(&[3, 32, 32, head.components * 3], act, &mut rng).unwrap();
        let mut d = MixtureDensity::untrained(net, head, 2).unwrap();
        let probe = (gaussian(16, 3, &mut rng), gaussian(16, 2, &mut rng));
        dens = dens.max(check_gradients(&mut d, &probe, seed).unwrap());

        let latent = 3;
        let mut e = EncoderDecoder {
            encoder: Mlp::new(&[5, 32, 2 * latent], act, &mut rng).unwrap(),
            decoder: Mlp::new(&[latent, 32, 5], act, &mut rng).unwrap(),
            latent_dim: latent,
            kl_weight: 0.001,
            input_norm: Normalizer::identity(5),
            final_objective: f64::NAN,
            final_recon: f64::NAN,
        };
        let probe = (gaussian(16, 5, &mut rng), gaussian(16, latent, &mut rng));
        enc = enc.max(check_gradients(&mut e, &probe, seed).unwrap());
    }
    let worst = reg.max(dens).max(enc);
    let passed = worst < 1e-3 && start.elapsed() < Duration::from_secs(60);
    report(
        6,
        passed,
        format!("max relative error over 10 seeds: regressor {reg:.1e}, density {dens:.1e}, encoder {enc:.1e} (tol 1e-3)"),
        start,
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let env = ContinuousEnv::new(EnvName::RunnerForward);
    let cfg = DiscriminatorConfig::default();
    let same = discriminator_similarity(&Scripted::Random, &Scripted::Random, &env, &cfg).unwrap();
    let worst_same = same.mean.iter().map(|a| (a - 0.5).abs()).fold(0.0, f64::max);
    let apart = discriminator_similarity(&Scripted::Constant(1.0), &Scripted::Constant(-1.0), &env, &cfg).unwrap();
    let at_100 = apart.steps.iter().position(|&s| s >= 100).map(|k| apart.mean[k]).unwrap_or(f64::NAN);
    let passed = worst_same <= 0.05 && at_100 > 0.95;
    report(
        10,
        passed,
        format!("self max |acc - 0.5| = {worst_same:.3} (tol 0.05); separated accuracy at step 100 = {at_100:.3} (> 0.95)"),
        start,
    )
}

struct PendulumRun {
    deep: f64,
    deep_prior: f64,
    af: f64,
    logs: Vec<Vec<EpochRecord>>,
    audits: Vec<(usize, usize)>,
}

fn deep_cfg(settings: &ProfileSettings, seed: u64, prior_weighting: bool) -> DeepRlspConfig {
    DeepRlspConfig {
        seed,
        prior_weighting,
        ..settings.deep.clone()
    }
}

fn run(task: &PreparedTask, method: Method, settings: &ProfileSettings, seed: u64, prior: bool) -> rlsp_core::harness::MethodOutcome {
    let mut rng = method_rng(seed, method, prior);
    run_method(task, method, settings, &deep_cfg(settings, seed, prior), &mut rng).unwrap()
}

fn pendulum_seed(seed: u64) -> PendulumRun {
    let settings = ProfileSettings::new(Profile::Desk, EnvName::Pendulum);
    let task = prepare_task(EnvName::Pendulum, 10, &settings, &mut seeded_rng(seed)).unwrap();
    let af = run(&task, Method::AverageFeatures, &settings, seed, false);
    let deep = run(&task, Method::DeepRlsp, &settings, seed, false);
    let prior = run(&task, Method::DeepRlsp, &settings, seed, true);
    println!(
        "  pendulum seed {seed}: expert {:.1}, average_features {:.1}, deep_rlsp {:.1}, deep_rlsp+prior {:.1}",
        task.expert_eval.mean, af.eval.mean, deep.eval.mean, prior.eval.mean
    );
    let audits = [&deep, &prior]
        .iter()
        .map(|o| {
            let a = o.audit.as_ref().expect("deep runs audit their replay");
            (a.checked, a.passed)
        })
        .collect();
    PendulumRun {
        deep: deep.eval.mean,
        deep_prior: prior.eval.mean,
        af: af.eval.mean,
        logs: vec![deep.log, prior.log],
        audits,
    }
}

/// Mean over seeds of (expert, average_features, deep_rlsp) returns on a runner task.
fn runner_means(env: EnvName) -> (f64, f64, f64) {
    let settings = ProfileSettings::new(Profile::Desk, env);
    let (mut ex, mut af, mut deep) = (Vec::new(), Vec::new(), Vec::new());
    for seed in SEEDS {
        let task = prepare_task(env, 10, &settings, &mut seeded_rng(seed)).unwrap();
        let a = run(&task, Method::AverageFeatures, &settings, seed, false);
        let d = run(&task, Method::DeepRlsp, &settings, seed, false);
        println!(
            "  {env} seed {seed}: expert {:.1}, average_features {:.1}, deep_rlsp {:.1}",
            task.expert_eval.mean, a.eval.mean, d.eval.mean
        );
        ex.push(task.expert_eval.mean);
        af.push(a.eval.mean);
        deep.push(d.eval.mean);
    }
    let m = |v: &[f64]| mean_and_stderr(v).0;
    (m(&ex), m(&af), m(&deep))
}

/// Independent replay of the curriculum rule over an epoch log.
fn curriculum_violation(log: &[EpochRecord]) -> Option<String> {
    let (threshold, max_steps, max_t) = (2.0, 10, 10);
    let (mut t, mut steps) = (1, 1);
    for (i, r) in log.iter().enumerate() {
        if r.horizon_t != t || r.steps_at_t != steps {
            return Some(format!(
                "epoch {i}: logged (T={}, step={}), expected (T={t}, step={steps})",
                r.horizon_t, r.steps_at_t
            ));
        }
        let advance = r.grad_norm < threshold || steps >= max_steps;
        if advance && t == max_t {
            return (i + 1 != log.len()).then(|| format!("run continued after finishing T={max_t} at epoch {i}"));
        }
        (t, steps) = if advance { (t + 1, 1) } else { (t, steps + 1) };
    }
    Some(format!("log ended at T={t} without finishing T={max_t}"))
}

fn continuous_criteria() -> Vec<Outcome> {
    let start = Instant::now();
    let random = random_baseline(&ContinuousEnv::new(EnvName::Pendulum), 100, &mut seeded_rng(500))
        .unwrap()
        .mean;
    println!("  pendulum random baseline {random:.2}");
    let runs: Vec<PendulumRun> = SEEDS.iter().map(|&s| pendulum_seed(s)).collect();
    let pendulum_time = start.elapsed();
    let (deep, deep_se) = mean_and_stderr(&runs.iter().map(|r| r.deep).collect::<Vec<_>>());
    let (af, af_se) = mean_and_stderr(&runs.iter().map(|r| r.af).collect::<Vec<_>>());
    let (prior, _) = mean_and_stderr(&runs.iter().map(|r| r.deep_prior).collect::<Vec<_>>());

    let runner_start = Instant::now();
    let runners: Vec<(EnvName, (f64, f64, f64))> = [EnvName::RunnerForward, EnvName::RunnerBackward]
        .into_iter()
        .map(|e| (e, runner_means(e)))
        .collect();
    // the prior-weighted runs belong to criterion 9, so they are not billed here
    let c5_time = pendulum_time.mul_f64(2.0 / 3.0) + runner_start.elapsed();

    let mut out = Vec::new();
    let pend_ok = deep >= 5.0 * random && af <= 2.0 * random && deep - deep_se > af + af_se;
    let runner_ok = runners.iter().all(|(_, (ex, a, d))| *a >= 0.5 * ex && *d >= 0.5 * ex);
    let runner_detail: Vec<String> = runners
        .iter()
        .map(|(e, (ex, a, d))| format!("{e}: expert {ex:.1}, af {a:.1}, deep {d:.1} (need >= {:.1})", 0.5 * ex))
        .collect();
    out.push(Outcome {
        id: 5,
        passed: pend_ok && runner_ok && c5_time < Duration::from_secs(1800),
        detail: format!(
            "pendulum: deep {deep:.1} ({deep_se:.1}) >= {:.1}, af {af:.1} ({af_se:.1}) <= {:.1}; {}; ~{:.0}s of 1800s",
            5.0 * random,
            2.0 * random,
            runner_detail.join("; "),
            c5_time.as_secs_f64()
        ),
        elapsed: c5_time,
    });

    let (checked, passed) = runs
        .iter()
        .flat_map(|r| &r.audits)
        .fold((0, 0), |acc, (c, p)| (acc.0 + c, acc.1 + p));
    out.push(Outcome {
        id: 7,
        passed: checked > 0 && checked == passed,
        detail: format!("{passed}/{checked} audited replay transitions reproduced exactly over 6 pendulum runs"),
        elapsed: Duration::ZERO,
    });

    let violations: Vec<String> = runs.iter().flat_map(|r| &r.logs).filter_map(|l| curriculum_violation(l)).collect();
    let epochs: Vec<usize> = runs.iter().flat_map(|r| &r.logs).map(|l| l.len()).collect();
    out.push(Outcome {
        id: 8,
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            format!("6 logged runs follow the curriculum and finish T=10 (epochs {epochs:?})")
        } else {
            violations.join("; ")
        },
        elapsed: Duration::ZERO,
    });

    out.push(Outcome {
        id: 9,
        passed: deep >= 5.0 * random && prior >= 5.0 * random,
        detail: format!("deep {deep:.1} without, {prior:.1} with prior weighting (need >= {:.1})", 5.0 * random),
        elapsed: pendulum_time.mul_f64(1.0 / 3.0),
    });
    for o in &out {
        print_line(o);
    }
    out
}

/// Runs `f`, turning a panic into a FAIL line for each of `ids`.
fn guarded(ids: &[usize], f: impl FnOnce() -> Vec<Outcome>) -> Vec<Outcome> {
    let start = Instant::now();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(out) => out,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            ids.iter().map(|&id| report(id, false, format!("aborted: {msg}"), start)).collect()
        }
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |ids: &[usize]| only.as_ref().is_none_or(|o| ids.iter().any(|i| o.contains(i)));
    // libtest flags such as --nocapture may be passed through; they are ignored
    let mut results = Vec::new();
    let singles: [(usize, fn() -> Outcome); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (6, criterion_6),
        (10, criterion_10),
        (4, criterion_4),
    ];
    for (id, f) in singles {
        if wanted(&[id]) {
            results.extend(guarded(&[id], || vec![f()]));
        }
    }
    if wanted(&[5, 7, 8, 9]) {
        results.extend(guarded(&[5, 7, 8, 9], continuous_criteria));
    }
    results.sort_by_key(|o| o.id);
    println!("\nacceptance summary");
    for o in &results {
        print_line(o);
    }
    if results.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
