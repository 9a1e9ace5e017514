use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sepacvae::corpus::{
    count_one_to_many, extract_single_turn, filter_by_token_list, generate_synthetic_corpus, read_corpus_file,
    strip_eos, terminate, tokenize, write_pair_file, Branching, FilterMode, SyntheticConfig, PAD,
};
use sepacvae::par::Execution;
use sepacvae::runner::{
    analyze_latent, evaluate, load_checkpoint, reference_embeddings_for, respond, train, Checkpoint, Dataset,
    EvalContext, RunConfig, Split,
};
use sepacvae::theory::{theory_csv, verify_minimizers};
use sepacvae::Error;

#[derive(Parser)]
#[command(name = "sepacvae", version, about = "Self-separated conditional VAE for dialogue generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn multi-turn dialogues (TAB-separated utterances per line) into pairs.
    PrepareData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Whitespace-separated list of allowed tokens.
        #[arg(long)]
        allowed: Option<PathBuf>,
        /// Replace disallowed tokens with <unk> instead of dropping the pair.
        #[arg(long)]
        replace_unk: bool,
    },
    /// Write the synthetic one-to-many corpus, labels and word vectors.
    GenSynthetic {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 667)]
        contexts: usize,
        /// Responses per context.
        #[arg(long, default_value_t = 3)]
        branching: usize,
        /// Draw responses per context uniformly from `branching..=branching_max`.
        #[arg(long)]
        branching_max: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        sharing: f64,
        #[arg(long, default_value_t = 256)]
        vocab: usize,
        #[arg(long, default_value_t = 32)]
        embedding_dim: usize,
    },
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a checkpoint on a split and write the report and generations.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "valid")]
        split: String,
        #[command(flatten)]
        config: OverrideArgs,
    },
    /// Respond to one context.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        context: String,
        /// Force this group instead of test-time selection.
        #[arg(long)]
        group: Option<usize>,
    },
    /// Compare the closed-form and numerical KL minimizers.
    VerifyTheory {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Write the per-instance table as CSV.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Joint-vector geometry, latent export and perturbation probe.
    AnalyzeLatent {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "valid")]
        split: String,
        #[arg(long, default_value_t = 20)]
        probe_pairs: usize,
        #[arg(long, default_value_t = 1.0)]
        probe_scale: f64,
        #[command(flatten)]
        config: OverrideArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OverrideArgs {
    /// Override a setting stored in the checkpoint, e.g. `--set output=runs/x`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn apply_overrides(cfg: &mut RunConfig, overrides: &[String]) -> Result<(), Error> {
    for kv in overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn open_checkpoint(path: &Path, overrides: &[String]) -> Result<(Checkpoint, Dataset), Error> {
    let mut ckpt = load_checkpoint(path)?;
    apply_overrides(&mut ckpt.config, overrides)?;
    let data = Dataset::load(&ckpt.config)?;
    Ok((ckpt, data))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

enum Outcome {
    Done,
    ToleranceViolated,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::PrepareData {
            input,
            output,
            allowed,
            replace_unk,
        } => {
            let dialogues = read_corpus_file(&input)?;
            let mut pairs: Vec<_> = dialogues.iter().flat_map(|d| extract_single_turn(d)).collect();
            if let Some(list) = allowed {
                let text = fs::read_to_string(&list).map_err(|e| Error::io(&list, e))?;
                let allowed: HashSet<String> = tokenize(&text).into_iter().collect();
                let mode = if replace_unk {
                    FilterMode::ReplaceWithUnk
                } else {
                    FilterMode::DropPair
                };
                let out = filter_by_token_list(pairs, &allowed, mode)?;
                log::info!("{} pairs affected by the token filter", out.dropped);
                pairs = out.pairs;
            }
            write_pair_file(&output, &pairs)?;
            println!("{}", to_json(&count_one_to_many(&pairs))?);
        }
        Command::GenSynthetic {
            output,
            seed,
            contexts,
            branching,
            branching_max,
            sharing,
            vocab,
            embedding_dim,
        } => {
            let branching = match branching_max {
                Some(max) => Branching::Uniform { min: branching, max },
                None => Branching::Fixed(branching),
            };
            let cfg = SyntheticConfig {
                seed,
                n_contexts: contexts,
                branching,
                sharing,
                vocab_size: vocab,
                embedding_dim,
                ..SyntheticConfig::default()
            };
            let corpus = generate_synthetic_corpus(&cfg)?;
            corpus.write(&output)?;
            println!("{}", to_json(&corpus.stats)?);
        }
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            let data = Dataset::load(&cfg)?;
            write_text(&cfg.output.join("config.txt"), &cfg.to_text())?;
            let out = train(&cfg, &data)?;
            println!("{}", to_json(&out.state)?);
            eprintln!("best checkpoint: {}", out.checkpoint.display());
        }
        Command::Evaluate {
            checkpoint,
            split,
            config,
        } => {
            let split: Split = split.parse()?;
            let (ckpt, data) = open_checkpoint(&checkpoint, &config.overrides)?;
            let eval = evaluate(&ckpt, &data, split)?;
            eval.write(&ckpt.config.output)?;
            println!("{}", to_json(&eval.report)?);
        }
        Command::Generate {
            checkpoint,
            context,
            group,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let cfg = &ckpt.config;
            let ids: Vec<usize> = ckpt.vocab.encode(&context).into_iter().filter(|&t| t != PAD).collect();
            let tokens = terminate(ids, cfg.max_len);
            let emb = reference_embeddings_for(cfg, &ckpt.vocab)?;
            let ctx = EvalContext {
                cfg,
                model: &ckpt.model,
                clusters: ckpt.clusters.as_ref(),
            };
            let (response, chosen) = respond(ctx, &emb, &tokens, group)?;
            let text = ckpt.vocab.decode(strip_eos(&response));
            println!("{text}\t{}", chosen.map_or(-1, |k| k as i64));
        }
        Command::VerifyTheory {
            instances,
            seed,
            tolerance,
            output,
            sequential,
        } => {
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let rows = verify_minimizers(instances, seed, exec)?;
            if let Some(path) = output {
                write_text(&path, &theory_csv(&rows))?;
            }
            let worst = rows.iter().map(|r| r.abs_delta).fold(0.0, f64::max);
            println!("instances {instances}, max |delta| {worst:e}, tolerance {tolerance:e}");
            if worst.is_nan() || worst > tolerance {
                return Ok(Outcome::ToleranceViolated);
            }
        }
        Command::AnalyzeLatent {
            checkpoint,
            split,
            probe_pairs,
            probe_scale,
            config,
        } => {
            let split: Split = split.parse()?;
            let (ckpt, data) = open_checkpoint(&checkpoint, &config.overrides)?;
            let ctx = EvalContext {
                cfg: &ckpt.config,
                model: &ckpt.model,
                clusters: ckpt.clusters.as_ref(),
            };
            let analysis = analyze_latent(ctx, &data, split, probe_pairs, probe_scale)?;
            analysis
                .write(&ckpt.config.output, split)
                .with_context(|| format!("writing analysis into {}", ckpt.config.output.display()))?;
            println!(
                "mean inner {:?}, mean inter {:?}, probe changed fraction {}",
                analysis.geometry.mean_inner, analysis.geometry.mean_inter, analysis.probe.changed_fraction
            );
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceViolated) => {
            eprintln!("error: tolerance violated");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(2, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
