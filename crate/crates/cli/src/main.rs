use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rlsp_core::continuous::{evaluate_policy, ContinuousEnv, Controller, EnvName, Scripted};
use rlsp_core::harness::{
    dataset_source, discriminator_similarity, gridworld_parity_suite, run_experiment, train_expert,
    train_state_encoder, DiscriminatorConfig, ExperimentConfig, Method, Profile, ProfileSettings, SEED_ENV_VAR,
};
use rlsp_core::models::{collect_dataset, train_inverse_dynamics, DatasetSource, InteractionDataset};
use rlsp_core::nn::checkpoint::{write_mlp, write_normalizer};
use rlsp_core::util::seeded_rng;

/// Reward inference from observed states: experiments and tooling.
#[derive(Parser, Debug)]
#[command(name = "rlsp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact RLSP, Deep RLSP and AverageFeatures on the five gridworld cases.
    GridworldParity {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one experiment from flags or a TOML config file.
    Run {
        /// TOML file with the ExperimentConfig fields; flags are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Gridworld case or continuous environment name.
        #[arg(long, required_unless_present = "config")]
        env: Option<String>,
        /// rlsp_exact, deep_rlsp, average_features or waypoints.
        #[arg(long, required_unless_present = "config")]
        method: Option<String>,
        /// Number of observed states sampled from expert rollouts.
        #[arg(long, default_value_t = 1)]
        states: usize,
        /// Comma-separated seeds. Overridden by the RLSP_SEED variable.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// desk or paper.
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Directory for CSV / JSONL reports and epoch logs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learning curves of a classifier separating two policies' trajectories.
    Discriminate {
        #[arg(long)]
        env: String,
        /// random, balancer, constant:<value> or expert.
        #[arg(long)]
        policy_a: String,
        #[arg(long)]
        policy_b: String,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// CSV file for the curves; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect an interaction dataset as JSONL.
    CollectData {
        #[arg(long)]
        env: String,
        /// random-rollouts or expert-mixed; defaults to the one used by `run`.
        #[arg(long)]
        source: Option<String>,
        #[arg(long, default_value_t = 200)]
        rollouts: usize,
        #[arg(long, default_value_t = 100)]
        rollout_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the state encoder and inverse dynamics on a dataset and write checkpoints.
    TrainModels {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy on the true reward.
    Eval {
        #[arg(long)]
        env: String,
        /// random, balancer, constant:<value> or expert.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GridworldParity { seed } => gridworld_parity(seed),
        Command::Run {
            config,
            env,
            method,
            states,
            seeds,
            profile,
            out,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => {
                    let method: Method = method.expect("required by clap").parse()?;
                    let mut cfg = ExperimentConfig::new(&env.expect("required by clap"), method);
                    cfg.num_observed_states = states;
                    cfg.seeds = seeds;
                    cfg.profile = profile.parse()?;
                    cfg.output_dir = out;
                    cfg
                }
            };
            run(&cfg)
        }
        Command::Discriminate {
            env,
            policy_a,
            policy_b,
            seeds,
            steps,
            out,
        } => {
            let env = ContinuousEnv::new(env.parse()?);
            let a = build_policy(&env, &policy_a, 0)?;
            let b = build_policy(&env, &policy_b, 1)?;
            let cfg = DiscriminatorConfig {
                seeds: (0..seeds).collect(),
                train_steps: steps,
                ..DiscriminatorConfig::default()
            };
            let curves = discriminator_similarity(a.as_ref(), b.as_ref(), &env, &cfg)?;
            match out {
                Some(path) => curves.write_csv(BufWriter::new(File::create(&path)?))?,
                None => curves.write_csv(std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::CollectData {
            env,
            source,
            rollouts,
            rollout_len,
            seed,
            out,
        } => {
            let name: EnvName = env.parse()?;
            let source = match source.as_deref() {
                None => dataset_source(name),
                Some("random-rollouts") => DatasetSource::RandomRollouts,
                Some("expert-mixed") => DatasetSource::ExpertMixed,
                Some(other) => bail!("unknown dataset source '{other}'"),
            };
            let env = ContinuousEnv::new(name);
            let ds = collect_dataset(&env, source, rollouts, rollout_len, &mut seeded_rng(seed))?;
            let mut w = BufWriter::new(File::create(&out)?);
            ds.write_jsonl(&mut w)?;
            w.flush()?;
            println!("{} transitions written to {}", ds.len(), out.display());
            Ok(())
        }
        Command::TrainModels { data, profile, out } => train_models(&data, profile.parse()?, &out),
        Command::Eval {
            env,
            policy,
            episodes,
            seed,
        } => {
            let env = ContinuousEnv::new(env.parse()?);
            let p = build_policy(&env, &policy, seed)?;
            let r = evaluate_policy(&env, p.as_ref(), episodes, &mut seeded_rng(seed))?;
            println!("{} {policy}: return {:.2} ({:.2}) over {episodes} episodes", env.name(), r.mean, r.stderr);
            Ok(())
        }
    }
}

fn gridworld_parity(seed: u64) -> Result<()> {
    let cases = gridworld_parity_suite(seed)?;
    let mut ok = true;
    for c in &cases {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<10} exact={} deep={} average_features={}",
            c.case.as_str(),
            c.exact,
            c.deep,
            c.average_features
        );
        for f in &c.failures {
            println!("     {f}");
        }
        ok &= c.passed();
    }
    if !ok {
        bail!("gridworld parity failed");
    }
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    if std::env::var(SEED_ENV_VAR).is_ok() {
        log::info!("{SEED_ENV_VAR} overrides the configured seeds");
    }
    let report = run_experiment(cfg)?;
    for s in &report.seeds {
        match &s.error {
            Some(e) => println!("seed {}: failed: {e}", s.seed),
            None => {
                let label = s.behavior_label.as_deref().map(|l| format!(" [{l}]")).unwrap_or_default();
                println!("seed {}: return {:.2} ({:.2}){label}", s.seed, s.return_mean, s.return_stderr);
            }
        }
    }
    println!(
        "{} {} states={}: mean {:.2} ({:.2}){}",
        report.env,
        report.method,
        report.num_observed_states,
        report.mean,
        report.stderr,
        if report.partial { " PARTIAL" } else { "" }
    );
    for a in &report.artifacts {
        println!("wrote {}", a.display());
    }
    Ok(())
}

/// Parses a policy spec. `expert` trains soft Q-learning on the true reward.
fn build_policy(env: &ContinuousEnv, spec: &str, seed: u64) -> Result<Box<dyn Controller>> {
    Ok(match spec {
        "random" => Box::new(Scripted::Random),
        "balancer" if env.name() == EnvName::Pendulum => Box::new(Scripted::Balancer),
        "balancer" => bail!("the balancer is only defined for the pendulum"),
        "expert" => {
            let settings = ProfileSettings::new(Profile::Desk, env.name());
            Box::new(train_expert(env, &settings, &mut seeded_rng(seed))?.0)
        }
        other => match other.strip_prefix("constant:") {
            Some(v) => Box::new(Scripted::Constant(v.parse().with_context(|| format!("bad constant '{v}'"))?)),
            None => bail!("unknown policy '{other}'"),
        },
    })
}

fn train_models(data: &Path, profile: Profile, out: &Path) -> Result<()> {
    let file = BufReader::new(File::open(data).with_context(|| format!("opening {}", data.display()))?);
    // the header names the environment, so peek at it before the full parse
    let header: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(data)?
            .lines()
            .next()
            .context("empty dataset file")?,
    )?;
    let name: EnvName = header["env"].as_str().context("dataset header has no env")?.parse()?;
    let env = ContinuousEnv::new(name);
    let ds = InteractionDataset::read_jsonl(file, &env)?;
    let settings = ProfileSettings::new(profile, name);
    let encoder = train_state_encoder(&env, &ds, &settings)?;
    let inv = train_inverse_dynamics(&env, &ds, &settings.inverse_dynamics)?;
    std::fs::create_dir_all(out)?;
    let save = |file: &str, f: &dyn Fn(&mut BufWriter<File>) -> rlsp_core::error::Result<()>| -> Result<()> {
        let mut w = BufWriter::new(File::create(out.join(file))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    };
    save("encoder.mlp", &|w| write_mlp(&encoder.encoder, w))?;
    save("decoder.mlp", &|w| write_mlp(&encoder.decoder, w))?;
    save("encoder_input.nrm", &|w| write_normalizer(&encoder.input_norm, w))?;
    save("inverse_dynamics.mlp", &|w| write_mlp(&inv.model().net, w))?;
    save("inverse_dynamics_input.nrm", &|w| write_normalizer(&inv.model().input_norm, w))?;
    save("inverse_dynamics_target.nrm", &|w| write_normalizer(&inv.model().target_norm, w))?;
    println!(
        "{}: {} transitions, encoder recon {:.4}, inverse dynamics loss {:.4}; checkpoints in {}",
        name,
        ds.len(),
        encoder.final_recon,
        inv.model().final_loss,
        out.display()
    );
    Ok(())
}
