//! Command-line front end.
//!
//! Exit codes: 0 success (or feasible audit), 1 error, 2 infeasible audit.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{generate_random_mdp, load_summaries, read_json, read_text, write_text, Experiment, GeneratorParams,
    HarnessError, Metric};
use crate::feasibility::{audit_action_only, audit_reward_only, verify_combined_feasible, AuditVerdict};
use crate::mdp::{MdpSpec, Policy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "poisonlab", version, about = "Poisoning attacks on episodic tabular RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AuditMode {
    Reward,
    Action,
    Combined,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (T, seed) pair of an experiment config
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with this single seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decide whether a constrained attack can teach a target policy
    Audit {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long = "target-policy")]
        target_policy: PathBuf,
        #[arg(long, value_enum)]
        mode: AuditMode,
    },
    /// Fit log-log cost exponents over a simulate output directory
    Scaling {
        #[arg(long)]
        inputs: PathBuf,
    },
    /// Generate a random benchmark MDP
    GenMdp {
        /// Generator parameters: a JSON file, or inline JSON
        #[arg(long)]
        params: String,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the designated target policy
        #[arg(long = "target-out")]
        target_out: Option<PathBuf>,
        /// Overrides the generator seed
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command) -> Result<i32, HarnessError> {
    match command {
        Command::Simulate { config, seed } => simulate(&config, seed),
        Command::Audit { mdp, target_policy, mode } => audit(&mdp, &target_policy, mode),
        Command::Scaling { inputs } => scaling(&inputs),
        Command::GenMdp { params, out, target_out, seed } => gen_mdp(&params, &out, target_out.as_deref(), seed),
    }
}

fn simulate(config: &Path, seed: Option<u64>) -> Result<i32, HarnessError> {
    let mut exp = Experiment::load(config)?;
    if let Some(seed) = seed {
        exp.seeds = vec![seed];
    }
    let summaries = exp.run_and_write()?;
    for s in &summaries {
        println!(
            "T={} seed={} contamination={:.6} reward_manip={} action_manip={} match_fraction={:.4} regret={:.4}",
            s.episodes,
            s.seed,
            s.ledger.contamination_amount,
            s.ledger.reward_manipulations,
            s.ledger.action_manipulations,
            s.ledger.match_fraction(),
            s.final_regret
        );
    }
    println!("wrote {} runs to {}", summaries.len(), exp.output_dir.display());
    Ok(EXIT_OK)
}

fn verdict_json(mode: AuditMode, v: &AuditVerdict) -> serde_json::Value {
    json!({
        "mode": format!("{mode:?}").to_lowercase(),
        "feasible": v.feasible,
        "witness": v.witness,
        "min_gap": v.min_gap,
    })
}

fn audit(mdp: &Path, target: &Path, mode: AuditMode) -> Result<i32, HarnessError> {
    let spec = MdpSpec::load(mdp)?;
    let target: Policy = read_json(target)?;
    let verdict = match mode {
        AuditMode::Reward => audit_reward_only(&spec, &target),
        AuditMode::Action => audit_action_only(&spec, &target),
        AuditMode::Combined => verify_combined_feasible(&spec, &target),
    }
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&verdict_json(mode, &verdict)).expect("json"));
    Ok(if verdict.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn scaling(inputs: &Path) -> Result<i32, HarnessError> {
    let runs = load_summaries(inputs)?;
    let mut fits = Vec::new();
    for metric in Metric::ALL {
        match super::fit_scaling(&runs, metric) {
            Ok(fit) => fits.push(serde_json::to_value(&fit).expect("json")),
            Err(super::scaling::ScalingError::NothingFittable(name)) => {
                log::warn!("{name}: no fittable series");
                fits.push(json!({ "metric": name, "unfittable": true }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let text = serde_json::to_string_pretty(&fits).expect("json");
    write_text(&inputs.join("scaling.json"), &text)?;
    println!("{text}");
    Ok(EXIT_OK)
}

fn gen_mdp(params: &str, out: &Path, target_out: Option<&Path>, seed: Option<u64>) -> Result<i32, HarnessError> {
    let text = if params.trim_start().starts_with('{') { params.to_string() } else { read_text(Path::new(params))? };
    let mut params: GeneratorParams = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: "--params".into(),
        source,
    })?;
    if let Some(seed) = seed {
        params.seed = seed;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (spec, target) = generate_random_mdp(&params, &mut rng)?;
    write_text(out, &spec.to_json())?;
    if let Some(path) = target_out {
        write_text(path, &serde_json::to_string(&target).expect("json"))?;
    }
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}
