use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graphcloak::checkpoint::{load_checkpoint, save_checkpoint};
use graphcloak::config::{resolve_data_root, ExperimentConfig};
use graphcloak::harness::{attack_space, Harness, VICTIM_INIT_STREAM};
use graphcloak::manifest::CloakManifest;
use graphcloak::tu::{dataset_name_in, load_tu_dataset, read_dataset, write_dataset, FeaturePolicy, DEFAULT_DEGREE_CAP};
use graphcloak_core::cloak::{cloak, Method};
use graphcloak_core::defense::{adversarial_train, robust_spec, AttackConfig};
use graphcloak_core::gnn::{Arch, GnnModel, ModelSpec};
use graphcloak_core::graph::{dataset_stats, split_dataset};
use graphcloak_core::train::{evaluate, train, TrainConfig};
use graphcloak_core::{seeded_rng, seeded_stream};

#[derive(Parser)]
#[command(name = "graphcloak", version, about = "Make graph classification datasets unlearnable and measure the effect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cloak the training split of a TU dataset.
    Cloak(CloakArgs),
    /// Train a model on a dataset directory written by `cloak`.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset directory.
    Eval(EvalArgs),
    /// Run the experiments of a config file.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Features {
    NodeLabels,
    DegreeOnehot,
}

#[derive(Args)]
struct CloakArgs {
    /// Dataset name; files are read from `<data-root>/<name>/`.
    #[arg(long)]
    dataset: String,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to $GRAPHCLOAK_DATA, then `./data`.
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "node-labels")]
    features: Features,
    #[arg(long, default_value_t = DEFAULT_DEGREE_CAP)]
    degree_cap: usize,
    #[arg(long, default_value_t = 5000)]
    n_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    poison_rate: f64,
    #[arg(long, value_parser = parse_arch, default_value = "gcn")]
    surrogate: Arch,
    /// Re-perturb every poisoned graph with the final surrogate.
    #[arg(long)]
    final_pass: bool,
    /// Recompute the gradient after every edge flip.
    #[arg(long)]
    exact: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    split: Vec<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding one dataset and its meta sidecar.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_arch, default_value = "gcn")]
    arch: Arch,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Train the Soft Median GCN at this temperature.
    #[arg(long)]
    soft_median: Option<f64>,
    /// Adversarial training in the attack space matching this method.
    #[arg(long, value_parser = parse_method)]
    adversarial: Option<Method>,
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitPart {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitPart,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("expected one of emins, eminf, subinj, random, emaxs; got {s:?}"))
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    Arch::parse(s).ok_or_else(|| format!("expected one of gcn, gin, sage; got {s:?}"))
}

fn load_dir(dir: &Path) -> Result<graphcloak_core::GraphDataset> {
    let name = dataset_name_in(dir)?;
    Ok(read_dataset(dir, &name)?)
}

fn run_cloak(a: CloakArgs) -> Result<()> {
    let [train_f, val_f, test_f] = <[f64; 3]>::try_from(a.split.as_slice()).map_err(|_| anyhow!("--split takes three fractions"))?;
    let policy = match a.features {
        Features::NodeLabels => FeaturePolicy::NodeLabels,
        Features::DegreeOnehot => FeaturePolicy::DegreeOneHot { cap: a.degree_cap },
    };
    let root = resolve_data_root(a.data_root.as_deref()).join(&a.dataset);
    let ds = load_tu_dataset(&root, &a.dataset, policy)?;
    let split = split_dataset(&ds, [train_f, val_f, test_f], &mut seeded_rng(a.seed))?;
    let mut cfg = ExperimentConfig::new(&a.dataset, vec![a.method]);
    cfg.beta = a.beta;
    cfg.n_steps = a.n_steps;
    cfg.surrogate = a.surrogate;
    cfg.final_pass = a.final_pass;
    cfg.exact = a.exact;
    let job = cfg.job(a.method, a.seed, a.poison_rate);
    let outcome = cloak(&split, &job)?;
    let surrogate_sha = match &outcome.surrogate {
        Some(m) => Some(save_checkpoint(m, &a.out.join("surrogate.json"))?),
        None => None,
    };
    write_dataset(&outcome.dataset, &a.out)?;
    let manifest = CloakManifest::new(&job, &outcome, surrogate_sha);
    manifest.write(&a.out)?;
    let stats = dataset_stats(&outcome.dataset, Some(&split))?;
    let poisoned = outcome.usage.iter().filter(|u| u.poisoned).count();
    println!(
        "{}: {} cloaked {poisoned}/{} training graphs, ΔE {:+.2}%, Δρ {:+.2}%, usage {:?}",
        a.dataset,
        a.method,
        outcome.usage.len(),
        stats.delta_edges_pct.unwrap_or(0.0),
        stats.delta_density_pct.unwrap_or(0.0),
        manifest.usage_histogram()
    );
    println!("written to {}", a.out.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let ds = load_dir(&a.dataset)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        lr: a.lr.unwrap_or(defaults.lr),
        max_epochs: a.epochs.unwrap_or(defaults.max_epochs),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        seed: a.seed,
        ..defaults
    };
    let spec = match a.soft_median {
        Some(t) => {
            if a.arch != Arch::Gcn {
                bail!("--soft-median needs --arch gcn");
            }
            robust_spec(ds.feature_dim, ds.class_count, t)?
        }
        None => ModelSpec::new(a.arch, ds.feature_dim, ds.class_count),
    };
    let model = GnnModel::new(spec, &mut seeded_stream(a.seed, VICTIM_INIT_STREAM))?;
    let (model, history) = match a.adversarial {
        Some(m) => {
            let attack = AttackConfig {
                beta: a.beta,
                ..AttackConfig::new(attack_space(m))
            };
            adversarial_train(model, &ds, &cfg, &attack)?
        }
        None => train(model, &ds, &cfg)?,
    };
    let best = &history.epochs[history.best_epoch];
    let digest = save_checkpoint(&model, &a.out)?;
    println!(
        "{} epochs, best epoch {} (val loss {:.4}, val acc {:.2}%), checkpoint {} sha256 {digest}",
        history.epochs.len(),
        history.best_epoch,
        best.val_loss,
        100.0 * best.val_acc,
        a.out.display()
    );
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let ds = load_dir(&a.dataset)?;
    let indices: Vec<usize> = match (a.split, &ds.split) {
        (SplitPart::All, _) => (0..ds.len()).collect(),
        (_, None) => bail!("dataset has no split; use --split all"),
        (SplitPart::Train, Some(s)) => s.train.clone(),
        (SplitPart::Val, Some(s)) => s.val.clone(),
        (SplitPart::Test, Some(s)) => s.test.clone(),
    };
    let acc = evaluate(&model, &ds.subset(&indices))?;
    println!("accuracy {:.2}% on {} graphs", 100.0 * acc, indices.len());
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    let mut harness = Harness::new(cfg).context("preparing the sweep")?;
    harness.on_row(|r| {
        eprintln!(
            "{} {} src={} victim={} p={} seed={}: clean {:.2} cloaked {:.2} drop {:+.2}",
            r.experiment, r.method, r.source, r.victim, r.poison_rate, r.seed, r.clean_acc, r.cloaked_acc, r.drop
        )
    });
    let (report, written) = harness.run_configured()?;
    for a in &report.aggregates {
        println!(
            "{:<12} {:<7} {:<3} {:<16} p={:<4} clean {:6.2} ± {:<5.2} cloaked {:6.2} ± {:<5.2} drop {:+6.2}",
            a.experiment,
            a.method,
            a.source,
            a.victim,
            a.poison_rate,
            a.clean_acc.mean,
            a.clean_acc.std.unwrap_or(0.0),
            a.cloaked_acc.mean,
            a.cloaked_acc.std.unwrap_or(0.0),
            a.drop.mean
        );
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Cloak(a) => run_cloak(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Sweep(a) => run_sweep(a),
    }
}
