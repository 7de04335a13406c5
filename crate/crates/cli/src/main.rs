use std::collections::HashMap;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dare_core::augment::ThresholdPolicy;
use dare_core::corpus;
use dare_core::eval;
use dare_core::experiment::{
    self, BaseMode, ExperimentConfig, GeneratorSpec, Inputs, Pipeline, PositiveCount, RunReport, DEFAULT_RATIOS,
};
use dare_core::external::{self, ServeConfig};
use dare_core::synth::{self, TaskSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dare", version, about = "Generative data augmentation for imbalanced relation extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate a pipeline over every seed (optionally against a second pipeline).
    Run(ExperimentArgs),
    /// DARE against balanced bagging for increasing numbers of training positives.
    ImbalanceCurve {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Comma-separated positive counts, ascending; `all` uses every positive.
        #[arg(long, value_delimiter = ',', default_value = "50,250,500,1000,all")]
        counts: Vec<String>,
    },
    /// DARE at several synthetic-to-gold ratios over one pool per seed.
    RatioStudy {
        #[command(flatten)]
        args: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// DARE with a vanilla generator base against one fitted on the in-domain corpus.
    GeneratorStudy(ExperimentArgs),
    /// Build and save the synthetic pool only.
    Generate {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Destination of the pool JSON.
        #[arg(long)]
        out: PathBuf,
        /// Use an unfitted (uniform) generator base.
        #[arg(long)]
        vanilla: bool,
    },
    /// McNemar's test between two prediction files on shared gold labels.
    Mcnemar {
        /// JSON lines with `id` and `label` fields.
        a: PathBuf,
        b: PathBuf,
        /// Gold split (JSON lines with `id` and `label`), e.g. a dataset's test.jsonl.
        #[arg(long)]
        gold: PathBuf,
    },
    /// Load a dataset directory and report problems and label counts.
    Validate {
        dataset: PathBuf,
    },
    /// Serve the built-in generator over the dare-gen/1 protocol on stdin/stdout.
    ServeGenerator {
        #[arg(long, default_value_t = dare_core::generator::DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = dare_core::generator::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = dare_core::generator::DEFAULT_LAMBDA)]
        lambda: f64,
    },
    /// Write a synthetic fixture dataset (and in-domain corpus) to a directory.
    MakeFixture {
        #[arg(long, value_parser = ["imbalance", "cdr", "ddi"], default_value = "imbalance")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training positives for the imbalance task.
        #[arg(long, default_value_t = 50)]
        positives: usize,
        /// Training negatives for the imbalance task.
        #[arg(long, default_value_t = 2000)]
        negatives: usize,
        /// In-domain sentences written to in_domain.txt.
        #[arg(long, default_value_t = 5000)]
        in_domain: usize,
    },
}

/// Flags mirroring `ExperimentConfig`; each one overrides the config file.
#[derive(Args, Default)]
struct ExperimentArgs {
    /// JSON or TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (dataset.json plus train/dev/test JSON lines).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// In-domain sentences, one whitespace-tokenised sentence per line.
    #[arg(long)]
    base_corpus: Option<PathBuf>,
    /// dare | balanced_bagging | class_weighting | gold_only
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    compare_with: Option<String>,
    /// Command line of an external dare-gen/1 generator (default: built-in).
    #[arg(long)]
    generator_command: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    pool_multiplier: Option<f64>,
    #[arg(long)]
    dare_members: Option<usize>,
    #[arg(long)]
    baseline_members: Option<usize>,
    #[arg(long)]
    gold_only_members: Option<usize>,
    /// per-member | shared
    #[arg(long)]
    threshold_policy: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    min_tokens: Option<usize>,
    #[arg(long)]
    lm_order: Option<usize>,
    #[arg(long)]
    lm_alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn pipeline(s: &str) -> Result<Pipeline> {
    Pipeline::parse(s).with_context(|| format!("unknown pipeline {s:?}"))
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        if self.dataset.is_some() {
            c.dataset = self.dataset.clone();
        }
        if self.base_corpus.is_some() {
            c.base_corpus = self.base_corpus.clone();
        }
        if self.output_dir.is_some() {
            c.output_dir = self.output_dir.clone();
        }
        set!(c.pipeline, self.pipeline.as_deref().map(pipeline).transpose()?);
        if let Some(p) = &self.compare_with {
            c.compare_with = Some(pipeline(p)?);
        }
        if let Some(cmd) = &self.generator_command {
            c.generator = GeneratorSpec::External(cmd.clone());
        }
        if let Some(p) = &self.threshold_policy {
            c.threshold_policy = match p.as_str() {
                "per-member" | "per_member" => ThresholdPolicy::PerMember,
                "shared" => ThresholdPolicy::Shared,
                other => bail!("unknown threshold policy {other:?}"),
            };
        }
        set!(c.timeout_secs, self.timeout_secs);
        set!(c.seeds, self.seeds.clone());
        set!(c.ratio, self.ratio);
        set!(c.pool_multiplier, self.pool_multiplier);
        set!(c.dare_members, self.dare_members);
        set!(c.baseline_members, self.baseline_members);
        set!(c.gold_only_members, self.gold_only_members);
        set!(c.generator_params.temperature, self.temperature);
        set!(c.generator_params.top_k, self.top_k);
        set!(c.generator_params.max_tokens, self.max_tokens);
        set!(c.generator_params.min_tokens, self.min_tokens);
        set!(c.lm.order, self.lm_order);
        set!(c.lm.alpha, self.lm_alpha);
        set!(c.lm.lambda, self.lambda);
        set!(c.classifier.epochs, self.epochs);
        set!(c.classifier.learning_rate, self.learning_rate);
        set!(c.classifier.feature_dim, self.feature_dim);
        set!(c.dev_fraction, self.dev_fraction);
        c.validate()?;
        Ok(c)
    }
}

fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.clone().unwrap_or_else(|| PathBuf::from("dare-output"))
}

fn write_predictions(dir: &Path, inputs: &Inputs, report: &RunReport) -> Result<()> {
    for p in &report.pipelines {
        for run in &p.runs {
            let path = dir.join(format!("predictions-{}-seed{}.jsonl", p.pipeline.name(), run.seed));
            let body: String = inputs
                .dataset
                .test
                .iter()
                .zip(&run.predictions)
                .map(|(inst, label)| json!({"id": inst.id, "label": label}).to_string() + "\n")
                .collect();
            std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn announce(table: &str, written: &[PathBuf]) {
    print!("{table}");
    for p in written {
        log::info!("wrote {}", p.display());
    }
}

/// Reads `id -> label` from JSON lines.
fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: invalid JSON", path.display(), n + 1))?;
        let field = |k: &str| {
            v.get(k)
                .and_then(|x| x.as_str())
                .map(str::to_owned)
                .with_context(|| format!("{}:{}: missing string field {k:?}", path.display(), n + 1))
        };
        out.push((field("id")?, field("label")?));
    }
    Ok(out)
}

fn mcnemar(a: &Path, b: &Path, gold: &Path) -> Result<()> {
    let gold = read_labels(gold)?;
    let lookup = |path: &Path| -> Result<HashMap<String, String>> {
        let map: HashMap<String, String> = read_labels(path)?.into_iter().collect();
        Ok(map)
    };
    let (pa, pb) = (lookup(a)?, lookup(b)?);
    let mut xs = Vec::with_capacity(gold.len());
    let mut ys = Vec::with_capacity(gold.len());
    let mut gs = Vec::with_capacity(gold.len());
    for (id, label) in &gold {
        let x = pa.get(id).with_context(|| format!("{} has no prediction for {id}", a.display()))?;
        let y = pb.get(id).with_context(|| format!("{} has no prediction for {id}", b.display()))?;
        xs.push(x.as_str());
        ys.push(y.as_str());
        gs.push(label.as_str());
    }
    let r = eval::mcnemar(&xs, &ys, &gs)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}

fn validate(dir: &Path) -> Result<()> {
    let d = corpus::load_dataset_dir(dir)?;
    for (name, split) in [("train", &d.train), ("dev", &d.dev), ("test", &d.test)] {
        let c = d.counts(split);
        println!("{name:<5} {:>7} instances, {:>6} positive", c.total, c.positive);
    }
    let p = corpus::partition_by_class(&d.train, &d.schema);
    for (label, n) in p.sizes() {
        println!("train {label}: {n}");
    }
    println!("train {}: {}", d.schema.null_label(), p.null_count);
    if d.dev.is_empty() {
        println!("no dev split: runs will hold out a dev fraction of train");
    }
    Ok(())
}

fn make_fixture(kind: &str, out: &Path, seed: u64, positives: usize, negatives: usize, in_domain: usize) -> Result<()> {
    let (dataset, base) = match kind {
        "imbalance" => {
            let t = synth::imbalance_task(&TaskSpec {
                train_positives: positives,
                train_negatives: negatives,
                in_domain,
                seed,
                ..TaskSpec::default()
            });
            (t.dataset, t.in_domain)
        }
        "cdr" => {
            let d = synth::cdr_shaped(500, 1000, seed);
            let base = synth::in_domain_sentences(&d.schema, in_domain, seed);
            (d, base)
        }
        _ => {
            let d = synth::ddi_shaped(1000, 2000, seed);
            let base = synth::in_domain_sentences(&d.schema, in_domain, seed);
            (d, base)
        }
    };
    corpus::write_dataset(out, &dataset)?;
    if !base.is_empty() {
        experiment::write_token_lines(&out.join("in_domain.txt"), &base)?;
    }
    println!("wrote {} ({} train, {} dev, {} test)", out.display(), dataset.train.len(), dataset.dev.len(), dataset.test.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.config()?;
            let inputs = Inputs::load(&config)?;
            let report = experiment::cmd_run(&inputs, &config)?;
            let dir = output_dir(&config);
            let written = experiment::write_report(&dir, "run", &report, &report.to_table(), &report.to_csv())?;
            write_predictions(&dir, &inputs, &report)?;
            announce(&report.to_table(), &written);
        }
        Command::ImbalanceCurve { args, counts } => {
            let config = args.config()?;
            let counts = counts
                .iter()
                .map(|c| PositiveCount::parse(c).with_context(|| format!("invalid positive count {c:?}")))
                .collect::<Result<Vec<_>>>()?;
            let inputs = Inputs::load(&config)?;
            let report = experiment::cmd_imbalance_curve(&inputs, &config, &counts)?;
            let written =
                experiment::write_report(&output_dir(&config), "imbalance_curve", &report, &report.to_table(), &report.to_csv())?;
            announce(&report.to_table(), &written);
        }
        Command::RatioStudy { args, ratios } => {
            let config = args.config()?;
            let ratios = ratios.unwrap_or_else(|| DEFAULT_RATIOS.to_vec());
            let inputs = Inputs::load(&config)?;
            let report = experiment::cmd_ratio_study(&inputs, &config, &ratios)?;
            let written =
                experiment::write_report(&output_dir(&config), "ratio_study", &report, &report.to_table(), &report.to_csv())?;
            announce(&report.to_table(), &written);
        }
        Command::GeneratorStudy(args) => {
            let config = args.config()?;
            let inputs = Inputs::load(&config)?;
            let report = experiment::cmd_generator_study(&inputs, &config)?;
            let written = experiment::write_report(
                &output_dir(&config),
                "generator_study",
                &report,
                &report.to_table(),
                &report.to_csv(),
            )?;
            announce(&report.to_table(), &written);
        }
        Command::Generate { args, out, vanilla } => {
            let config = args.config()?;
            let inputs = Inputs::load(&config)?;
            let mode = if vanilla { BaseMode::Vanilla } else { BaseMode::Fitted };
            let pool = experiment::make_pool(&inputs.dataset, inputs.base_corpus.as_deref(), &config, mode, config.seeds[0])?;
            pool.save(&out)?;
            let summary = experiment::PoolSummary::of(&pool);
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Mcnemar { a, b, gold } => mcnemar(&a, &b, &gold)?,
        Command::Validate { dataset } => validate(&dataset)?,
        Command::ServeGenerator { order, alpha, lambda } => {
            let stdin = io::stdin();
            external::serve(stdin.lock(), io::stdout().lock(), ServeConfig { order, alpha, lambda })?;
        }
        Command::MakeFixture { kind, out, seed, positives, negatives, in_domain } => {
            make_fixture(&kind, &out, seed, positives, negatives, in_domain)?
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
