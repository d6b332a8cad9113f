//! The `omnivat` command line.
//!
//! Every command resolves its settings as flag > `--config` file > default.
//! Exit codes: 0 ok, 2 config, 3 missing input, 4 incompatible inputs,
//! 5 internal invariant failure.

pub mod ablate;
pub mod check;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{load_embeddings, save_embeddings, synth_suite, Domain, DomainSuite, SynthConfig};
use crate::dtg::Generator;
use crate::error::{Error, Result};
use crate::model::{checkpoint, evaluate, parse_pairs, summarize, train_model, Model, TrainConfig, Variant};
use crate::par::Execution;

use self::ablate::{run_ablation, SeedData};
use self::check::{render, run_suites, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_INCOMPATIBLE: i32 = 4;
pub const EXIT_INVARIANT: i32 = 5;

/// Keys that only shape the synthetic suite.
pub const SYNTH_KEYS: [&str; 7] =
    ["per_class", "heldout_per_class", "targets", "shift", "prototype_scale", "noise_var", "language_per_class"];

/// Training settings plus synthetic-suite settings. `seed`, `dim` and
/// `classes` drive both.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let synth = SynthConfig { classes: train.classes, dim: train.dim, seed: train.seed, ..SynthConfig::default() };
        Self { train, synth }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.trim().parse().map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
        }
        let s = &mut self.synth;
        match key {
            "per_class" => s.per_class = parse(key, value)?,
            "heldout_per_class" => s.heldout_per_class = parse(key, value)?,
            "targets" => s.targets = parse(key, value)?,
            "shift" => s.shift = parse(key, value)?,
            "prototype_scale" => s.prototype_scale = parse(key, value)?,
            "noise_var" => s.noise_var = parse(key, value)?,
            "language_per_class" => s.language_per_class = parse(key, value)?,
            _ => {
                self.train.set(key, value)?;
                self.synth.seed = self.train.seed;
                self.synth.dim = self.train.dim;
                self.synth.classes = self.train.classes;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let mut out = self.train.to_text();
        for (k, v) in SYNTH_KEYS.iter().zip([
            s.per_class.to_string(),
            s.heldout_per_class.to_string(),
            s.targets.to_string(),
            s.shift.to_string(),
            s.prototype_scale.to_string(),
            s.noise_var.to_string(),
            s.language_per_class.to_string(),
        ]) {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    /// Applies file pairs, then flag pairs, over the defaults.
    pub fn resolve(file: Option<&str>, flags: &[(&str, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(text) = file {
            for (k, v) in parse_pairs(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        cfg.train.validate()?;
        cfg.synth.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "omnivat", version, about = "Visual-tactile single-domain generalization on embedding suites")]
struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic suite as OVEM files.
    Synth {
        #[command(flatten)]
        settings: Settings,
        /// Output directory.
        #[arg(long, default_value = "suite")]
        out: PathBuf,
    },
    /// Train on a source OVEM file.
    Train {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        source: PathBuf,
        /// Checkpoint path.
        #[arg(long, default_value = "model.ovat")]
        out: PathBuf,
        /// Also write the JSON-lines log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a checkpoint on one or more OVEM domains.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        targets: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites.
    Check {
        #[arg(long)]
        dfrft_only: bool,
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_fault: f64,
    },
    /// Compare variants and tree generators.
    Ablate {
        #[command(flatten)]
        settings: Settings,
        /// Source OVEM file; a synthetic suite is used when absent.
        #[arg(long, requires = "targets")]
        source: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        targets: Vec<PathBuf>,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        generators: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved settings as key=value lines.
    Config {
        #[command(flatten)]
        settings: Settings,
    },
}

#[derive(Debug, Default, Args)]
struct Settings {
    /// key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    expansion: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// A float for a learnable start, or `fixed:<p>`.
    #[arg(long, allow_hyphen_values = true)]
    order: Option<String>,
    #[arg(long)]
    generator: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Scale attention logits before the softmax.
    #[arg(long)]
    standard_attn_scale: bool,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    heldout_per_class: Option<usize>,
    #[arg(long)]
    targets_count: Option<usize>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
}

impl Settings {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        put("seed", self.seed.map(|v| v.to_string()));
        put("dim", self.dim.map(|v| v.to_string()));
        put("expansion", self.expansion.map(|v| v.to_string()));
        put("depth", self.depth.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("order", self.order.clone());
        put("generator", self.generator.clone());
        put("variant", self.variant.clone());
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("batch", self.batch.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("momentum", self.momentum.map(|v| v.to_string()));
        put("clip_norm", self.clip_norm.map(|v| v.to_string()));
        put("standard_attn_scale", self.standard_attn_scale.then(|| "true".to_string()));
        put("classes", self.classes.map(|v| v.to_string()));
        put("per_class", self.per_class.map(|v| v.to_string()));
        put("heldout_per_class", self.heldout_per_class.map(|v| v.to_string()));
        put("targets", self.targets_count.map(|v| v.to_string()));
        put("shift", self.shift.map(|v| v.to_string()));
        put("noise_var", self.noise_var.map(|v| v.to_string()));
        out
    }

    fn resolve(&self) -> Result<RunConfig> {
        let text = match &self.config {
            Some(path) => Some(read_input(path).and_then(|b| {
                String::from_utf8(b).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))
            })?),
            None => None,
        };
        RunConfig::resolve(text.as_deref(), &self.pairs())
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_MISSING,
        Error::Incompatible(_) | Error::Format { .. } | Error::IncompleteSample(_) => EXIT_INCOMPATIBLE,
        Error::Dimension(_)
        | Error::Asymmetric(_)
        | Error::IterationLimit(_)
        | Error::Degenerate(_)
        | Error::UnsupportedOp(_) => EXIT_INVARIANT,
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Loads one OVEM domain, checking width and category range.
pub fn load_domain(path: &Path, dim: usize, classes: usize) -> Result<Domain> {
    read_input(path)?;
    let (file_dim, records) = load_embeddings(path)?;
    if file_dim != dim {
        return Err(Error::Incompatible(format!("{}: width {file_dim}, expected {dim}", path.display())));
    }
    Domain::from_records(dim, classes, &records).map_err(|e| match e {
        Error::Config(m) | Error::Dimension(m) => Error::Incompatible(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// File stem used as the domain name in reports.
pub fn domain_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Files written by `synth`, in order.
pub fn write_suite(suite: &DomainSuite, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, domain: &Domain| -> Result<()> {
        let path = dir.join(name);
        save_embeddings(&path, suite.dim, &domain.to_records())?;
        written.push(path);
        Ok(())
    };
    put("source.ovem".into(), &suite.source)?;
    put("source_heldout.ovem".into(), &suite.source_heldout)?;
    for (k, t) in suite.targets.iter().enumerate() {
        put(format!("target_{}.ovem", k + 1), t)?;
    }
    Ok(written)
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("json: {e}")))?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => writeln!(out, "{text}")?,
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &Option<Vec<String>>, all: &[T]) -> Result<Vec<T>>
where
    T: Copy,
{
    match items {
        None => Ok(all.to_vec()),
        Some(v) => v.iter().map(|s| s.parse()).collect(),
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Synth { settings, out: dir } => {
            let cfg = settings.resolve()?;
            let suite = synth_suite(&cfg.synth)?;
            for path in write_suite(&suite, &dir)? {
                writeln!(out, "{}", path.display())?;
            }
        }
        Command::Train { settings, source, out: ckpt, log } => {
            let cfg = settings.resolve()?;
            let domain = load_domain(&source, cfg.train.dim, cfg.train.classes)?;
            let mut lines = String::new();
            let mut io_err = None;
            let outcome = train_model(Model::new(cfg.train)?, &domain, |e| {
                let line = serde_json::to_string(e).expect("plain struct");
                if let Err(err) = writeln!(out, "{line}") {
                    io_err.get_or_insert(err);
                }
                lines.push_str(&line);
                lines.push('\n');
            })?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            if let Some(path) = log {
                fs::write(path, lines)?;
            }
            checkpoint::save(&outcome.model, &ckpt)?;
        }
        Command::Eval { checkpoint: ckpt, targets, out: path } => {
            if targets.is_empty() {
                return Err(Error::Config("eval needs at least one target file".into()));
            }
            read_input(&ckpt)?;
            let model = checkpoint::load(&ckpt)?;
            let reports = targets
                .iter()
                .map(|t| {
                    let d = load_domain(t, model.config.dim, model.config.classes)?;
                    evaluate(&model, &d, &domain_name(t), exec)
                })
                .collect::<Result<Vec<_>>>()?;
            emit_json(&summarize(reports)?, path.as_deref(), out)?;
        }
        Command::Check { dfrft_only, inject_fault } => {
            let rows = run_suites(dfrft_only, Fault { eigenvalue_shift: inject_fault }, exec)?;
            write!(out, "{}", render(&rows))?;
            let failed = rows.iter().filter(|r| !r.pass).count();
            writeln!(out, "{} checks, {failed} failed", rows.len())?;
            if failed > 0 {
                return Ok(EXIT_INVARIANT);
            }
        }
        Command::Ablate { settings, source, targets, seeds, variants, generators, out: path } => {
            let cfg = settings.resolve()?;
            if seeds == 0 {
                return Err(Error::Config("--seeds must be at least 1".into()));
            }
            let variants = parse_list(&variants, &Variant::ALL)?;
            let generators = parse_list(&generators, &Generator::ALL)?;
            let (dim, classes) = (cfg.train.dim, cfg.train.classes);
            let data = (cfg.train.seed..cfg.train.seed + seeds)
                .map(|seed| -> Result<SeedData> {
                    match &source {
                        Some(src) => Ok(SeedData {
                            seed,
                            source: load_domain(src, dim, classes)?,
                            targets: targets
                                .iter()
                                .map(|t| Ok((domain_name(t), load_domain(t, dim, classes)?)))
                                .collect::<Result<_>>()?,
                        }),
                        None => {
                            let suite = synth_suite(&SynthConfig { seed, ..cfg.synth.clone() })?;
                            Ok(SeedData::from_suite(seed, suite))
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let report = run_ablation(&cfg.train, &data, &variants, &generators, exec)?;
            emit_json(&report, path.as_deref(), out)?;
        }
        Command::Config { settings } => {
            write!(out, "{}", settings.resolve()?.to_text())?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
