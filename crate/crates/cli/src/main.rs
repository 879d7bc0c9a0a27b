mod args;
mod config;
mod eval;
mod explain;
mod fit;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use glassbench::featurize::represent;
use glassbench::sim::{simulate, Kind};
use glassbench::store::{load_dataset, save_dataset, write_artifact, ArtifactKind, ArtifactRef, Payload, WriteOptions};
use serde::Serialize;

use args::{Cli, Command, FeaturizeArgs, Global, SimulateArgs};
use config::{FeaturizeConfig, SimulateConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    Usage(String),
    Run(glassbench::Error),
}

impl From<glassbench::Error> for CliError {
    fn from(e: glassbench::Error) -> Self {
        CliError::Run(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Global settings shared by every command.
pub struct Ctx {
    pub global: Global,
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    command: &'a str,
    threads: usize,
    deterministic: bool,
    settings: &'a T,
}

impl Ctx {
    pub fn write_options(&self) -> WriteOptions {
        WriteOptions { overwrite: self.global.overwrite, created_unix: self.global.deterministic.then_some(0) }
    }

    pub fn target(&self, folder: &str, default_name: &str) -> PathBuf {
        self.global.out.join(folder).join(self.global.name.as_deref().unwrap_or(default_name))
    }

    /// The manifest's configuration document for `settings`.
    pub fn record<'a, T: Serialize>(&self, command: &'a str, settings: &'a T) -> impl Serialize + 'a {
        RunRecord { command, threads: self.global.threads, deterministic: self.global.deterministic, settings }
    }

    /// Print `config` when `--print-config` is set; true means stop here.
    pub fn print_config<T: Serialize>(&self, config: &T) -> CliResult<bool> {
        if self.global.print_config {
            let text = toml::to_string(config).map_err(|e| CliError::Run(e.into()))?;
            print!("{text}");
        }
        Ok(self.global.print_config)
    }

    pub fn write<T: Serialize>(&self, dir: &std::path::Path, kind: ArtifactKind, command: &str, settings: &T, seed: u64, payload: &Payload, upstream: &[ArtifactRef]) -> CliResult<ArtifactRef> {
        let r = write_artifact(dir, kind, &self.record(command, settings), seed, payload, upstream, self.write_options()).map_err(existing_hint)?;
        announce(&r);
        Ok(r)
    }
}

pub fn existing_hint(e: glassbench::Error) -> CliError {
    match e {
        glassbench::Error::AlreadyExists(p) => CliError::Usage(format!("{} already exists; pass --overwrite or --name", p.display())),
        other => CliError::Run(other),
    }
}

pub fn announce(r: &ArtifactRef) {
    println!("{} artifact: {}", r.kind, r.path.display());
    println!("content hash: {}", r.hash);
}

/// Short name of an artifact directory.
pub fn stem(path: &std::path::Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "artifact".into())
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> CliResult {
    let mut cfg: SimulateConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(n) = a.n {
        cfg.sim.n_subjects = n;
    }
    if let Some(t) = a.timepoints {
        cfg.sim.n_timepoints = t;
    }
    if let Some(d) = a.species {
        cfg.sim.n_species = d;
    }
    if let Some(k) = a.communities {
        cfg.sim.n_communities = k;
    }
    if let Some(f) = a.format {
        cfg.format = f;
    }
    if let Some(s) = ctx.global.seed {
        cfg.sim.seed = s;
    }
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    cfg.sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = simulate(&cfg.sim)?;
    let dir = ctx.target("datasets", &format!("sim-n{}-seed{}", cfg.sim.n_subjects, cfg.sim.seed));
    let r = save_dataset(&ds, &dir, cfg.format, ctx.write_options()).map_err(existing_hint)?;
    announce(&r);
    let truth = ds.truth.as_ref().expect("simulated data has ground truth");
    let counts = truth.dictionary.kind_counts();
    println!(
        "subjects: {} (train {}, val {})  K={} T={} D={}",
        ds.n_subjects(),
        ds.train_indices().len(),
        ds.val_indices().len(),
        truth.dictionary.n_communities(),
        ds.n_timepoints(),
        ds.n_species()
    );
    println!("class balance: {:.1}% disease", 100.0 * ds.disease_fraction());
    let kinds: Vec<String> = Kind::ALL.iter().map(|k| format!("{} {}", k.as_str(), counts[k.index()])).collect();
    println!("kind counts: {}", kinds.join(", "));
    Ok(())
}

fn cmd_featurize(ctx: &Ctx, a: &FeaturizeArgs) -> CliResult {
    let mut cfg: FeaturizeConfig = config::load(ctx.global.config.as_deref())?;
    if let Some(r) = a.representation {
        cfg.representation = r;
    }
    if a.no_standardize {
        cfg.standardize = false;
    }
    if ctx.print_config(&cfg)? {
        return Ok(());
    }
    let (ds, art) = load_dataset(&a.dataset)?;
    let fm = represent::<f64>(&ds, cfg.representation, cfg.standardize)?;
    let mut csv = String::from("subject");
    for n in &fm.feature_names {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for (i, row) in fm.values.rows().into_iter().enumerate() {
        csv.push_str(&i.to_string());
        for v in row {
            csv.push(',');
            csv.push_str(&v.to_string());
        }
        csv.push('\n');
    }
    let mut p = Payload::new();
    p.add("features.csv", csv);
    if let Some(s) = &fm.standardization {
        p.add("standardization.json", serde_json::to_vec(s).map_err(|e| CliError::Run(e.into()))?);
    }
    let dir = ctx.target("features", &format!("{}-{}", stem(&art.path), cfg.representation.as_str()));
    ctx.write(&dir, ArtifactKind::Report, "featurize", &cfg, ds.config.seed, &p, &[art.reference()])?;
    println!("features: {} x {}", fm.n_rows(), fm.n_features());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx { global: cli.global };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Featurize(a) => cmd_featurize(&ctx, a),
        Command::Fit(a) => fit::cmd_fit(&ctx, a),
        Command::Explain(a) => explain::cmd_explain(&ctx, a),
        Command::Eval(e) => eval::cmd_eval(&ctx, e),
        Command::Report(a) => report::cmd_report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
