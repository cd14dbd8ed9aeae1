//! `frfnet` command-line interface.
//!
//! Every command reads the run configuration, works inside the output
//! directory and appends a timestamped line to `run.log` there. All other
//! outputs are deterministic given the configuration and seed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::container::{self, Container, SCHEMA_DATASET};
use crate::damage::{
    self, estimate_severity, evaluate, localize, BasisPair, DamageSystem, RivetVector, SeverityEstimate, Task,
};
use crate::error::{exit_code, Error, Result, StageExt};
use crate::mlp::EpochRecord;
use crate::panel::{DamageKind, DamageScenario};
use crate::pipeline;

pub const DATASET_FILE: &str = "dataset.frfd";
pub const ACCEL_BASIS_FILE: &str = "basis_accel.frfd";
pub const STRAIN_BASIS_FILE: &str = "basis_strain.frfd";
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Parser)]
#[command(name = "frfnet", version, about = "FRF fingerprints and neural-network damage identification")]
pub struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Progress messages on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every scenario and write the log-magnitude dataset.
    Simulate,
    /// Fit accelerance and strain bases on the training split.
    FitPca,
    /// Train one task network.
    Train {
        /// `localize` or `severity:<crack|hole_expansion|added_mass>`.
        #[arg(long)]
        task: Task,
    },
    /// Apply trained networks to one FRF container.
    Infer {
        /// Model container; repeat to chain localization and severity.
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        frf: PathBuf,
        /// Localization threshold; the configured one when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        /// Directory holding the basis files; the first model's directory
        /// when omitted.
        #[arg(long)]
        bases: Option<PathBuf>,
    },
    /// Evaluate trained networks on the test split.
    Evaluate,
    /// Run the whole pipeline in memory and write the summary.
    Reproduce,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitPca => "fit-pca",
            Command::Train { .. } => "train",
            Command::Infer { .. } => "infer",
            Command::Evaluate => "evaluate",
            Command::Reproduce => "reproduce",
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    verbose: bool,
}

impl Ctx {
    fn note(&self, msg: &str) {
        if self.verbose {
            eprintln!("frfnet: {msg}");
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit_code::CONFIG } else { exit_code::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => exit_code::SUCCESS,
        Err(e) => {
            eprintln!("frfnet: error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let ctx = Ctx {
        out: cfg.out_dir.clone(),
        cfg,
        verbose: cli.verbose,
    };
    let name = cli.command.name();
    let started = Instant::now();
    let result = match cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::FitPca => cmd_fit_pca(&ctx),
        Command::Train { task } => cmd_train(&ctx, task),
        Command::Infer {
            model,
            frf,
            threshold,
            bases,
        } => cmd_infer(&ctx, &model, &frf, threshold, bases.as_deref()),
        Command::Evaluate => cmd_evaluate(&ctx),
        Command::Reproduce => cmd_reproduce(&ctx),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error(exit {})", e.exit_code()),
    };
    append_log(&ctx, name, &status, started.elapsed().as_millis());
    result
}

fn append_log(ctx: &Ctx, command: &str, status: &str, millis: u128) {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let line = format!(
        "unix_time={secs} command={command} seed={} status={status} elapsed_ms={millis}\n",
        ctx.cfg.master_seed
    );
    if let Ok(mut f) = fs::OpenOptions::new().create(true).append(true).open(ctx.path(LOG_FILE)) {
        let _ = f.write_all(line.as_bytes());
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "mse", "objective"])?;
    for (i, r) in history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{:e}", r.mse), format!("{:e}", r.objective)])?;
    }
    w.flush()?;
    Ok(())
}

fn model_file(task: Task) -> String {
    format!("model_{}.frfd", task.slug())
}

fn history_file(task: Task) -> String {
    format!("history_{}.csv", task.slug())
}

/// Held-out scenarios written as FRF containers for `infer`: the first test
/// scenario of each kind.
fn sample_scenarios(scenarios: &[DamageScenario], test: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for &i in test {
        if !seen.contains(&scenarios[i].kind) {
            seen.push(scenarios[i].kind);
            out.push(i);
        }
    }
    out
}

fn cmd_simulate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let panel = pipeline::load_panel(cfg)?;
    let scenarios = cfg.scenarios.scenarios();
    ctx.note(&format!("simulating {} scenarios", scenarios.len()));
    let meas = damage::simulate(&panel, &scenarios, &cfg.signal, cfg.master_seed).stage("simulate")?;
    let split = damage::split_indices(
        scenarios.len(),
        cfg.scenarios.train_fraction,
        cfg.scenarios.val_fraction,
        crate::seeds::derive(cfg.master_seed, crate::seeds::Stage::Split, 0),
    )?;
    let extra = json!({ "master_seed": cfg.master_seed, "signal": cfg.signal });
    container::dataset_to_container(&meas, &split, extra)?.write(&ctx.path(DATASET_FILE))?;
    write_json(&ctx.path("scenarios.json"), &json!({ "scenarios": scenarios, "split": split }))?;
    for i in sample_scenarios(&scenarios, &split.test) {
        let frf = damage::measure_scenario(&panel, &scenarios[i], &cfg.signal, cfg.master_seed, i as u64)?;
        let s = &scenarios[i];
        let name = match s.rivets.first() {
            Some(r) => format!("frf_{}_rivet{r:02}.frfd", s.kind.as_str()),
            None => format!("frf_{}.frfd", s.kind.as_str()),
        };
        container::write_frf(&ctx.path(&name), &frf)?;
    }
    ctx.note("dataset written");
    Ok(())
}

fn load_dataset(ctx: &Ctx) -> Result<(damage::Measurements, damage::Split)> {
    let c = Container::read_schema(&ctx.path(DATASET_FILE), SCHEMA_DATASET).stage("load dataset")?;
    container::dataset_from_container(&c).stage("load dataset")
}

fn load_bases(dir: &Path) -> Result<BasisPair> {
    Ok(BasisPair {
        accel: container::read_basis(&dir.join(ACCEL_BASIS_FILE)).stage("load basis")?,
        strain: container::read_basis(&dir.join(STRAIN_BASIS_FILE)).stage("load basis")?,
    })
}

fn cmd_fit_pca(ctx: &Ctx) -> Result<()> {
    let (meas, split) = load_dataset(ctx)?;
    ctx.note(&format!("fitting bases on {} training scenarios", split.train.len()));
    let bases = damage::fit_bases(&meas, &split.train, &ctx.cfg.pca)?;
    container::write_basis(&ctx.path(ACCEL_BASIS_FILE), &bases.accel)?;
    container::write_basis(&ctx.path(STRAIN_BASIS_FILE), &bases.strain)?;
    let k_a = ctx.cfg.pca.accel_components;
    let k_s = ctx.cfg.pca.strain_components;
    write_json(
        &ctx.path("pca.json"),
        &json!({
            "basis_id": bases.id(),
            "fingerprint_len": bases.fingerprint_len(),
            "accel_variance_explained": bases.accel.group_variance_explained(k_a)?,
            "strain_variance_explained": bases.strain.group_variance_explained(k_s)?,
            "degenerate": bases.accel.degenerate() || bases.strain.degenerate(),
        }),
    )?;
    Ok(())
}

fn load_fingerprinted(ctx: &Ctx) -> Result<damage::Dataset> {
    let (meas, split) = load_dataset(ctx)?;
    let bases = load_bases(&ctx.out)?;
    let fingerprints = damage::fingerprints(&meas, &bases)?;
    Ok(damage::Dataset {
        measurements: meas,
        split,
        bases,
        fingerprints,
        warnings: Vec::new(),
    })
}

fn cmd_train(ctx: &Ctx, task: Task) -> Result<()> {
    let ds = load_fingerprinted(ctx)?;
    ctx.note(&format!("training {task}"));
    let (model, history) = pipeline::train_one(&ctx.cfg, &ds, task)?;
    container::write_model(&ctx.path(&model_file(task)), &model)?;
    write_history(&ctx.path(&history_file(task)), &history)?;
    ctx.note(&format!(
        "{task}: lambda {:e}, validation mse {:.6}",
        model.metadata.lambda, model.metadata.val_mse
    ));
    Ok(())
}

#[derive(Debug, Serialize)]
struct InferReport {
    frf: String,
    basis_id: String,
    localization: Option<RivetVector>,
    severity: Vec<SeverityEstimate>,
}

fn cmd_infer(
    ctx: &Ctx,
    models: &[PathBuf],
    frf_path: &Path,
    threshold: Option<f64>,
    bases_dir: Option<&Path>,
) -> Result<()> {
    let threshold = threshold.unwrap_or(ctx.cfg.localize.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let dir = match bases_dir {
        Some(d) => d.to_path_buf(),
        None => models[0].parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    let bases = load_bases(&dir)?;
    let frf = container::read_frf(frf_path).stage("load frf")?;
    let feature = bases.project(&frf).stage("projection")?;
    let mut report = InferReport {
        frf: frf_path.display().to_string(),
        basis_id: feature.basis_id.clone(),
        localization: None,
        severity: Vec::new(),
    };
    for path in models {
        let model = container::read_model(path).stage("load model")?;
        match model.task {
            Task::Localize => report.localization = Some(localize(&feature, &model, threshold).stage("infer")?),
            Task::Severity(kind) => {
                report.severity.push(estimate_severity(&feature, &model, kind).stage("infer")?);
            }
        }
    }
    if let Some(rv) = &report.localization {
        let top = rv.ranked.first().copied();
        for s in &mut report.severity {
            s.rivet = rv.flagged().first().copied().or(top);
        }
    }
    let text = infer_text(&report);
    print!("{text}");
    write_json(&ctx.path("prediction.json"), &report)?;
    Ok(())
}

fn infer_text(r: &InferReport) -> String {
    let mut s = format!("frf {}\n", r.frf);
    if let Some(rv) = &r.localization {
        let flagged = rv.flagged();
        s.push_str(&format!("flagged rivets ({}): {:?}\n", flagged.len(), flagged));
        let top: Vec<String> = rv
            .top_k(3)
            .iter()
            .map(|&i| format!("{i}:{:.3}", rv.scores[i]))
            .collect();
        s.push_str(&format!("top scores: {}\n", top.join(" ")));
    }
    for e in &r.severity {
        s.push_str(&format!("{} severity: {:.4} {}\n", e.kind, e.value, e.kind.unit()));
    }
    s
}

fn cmd_evaluate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let ds = load_fingerprinted(ctx)?;
    let panel = pipeline::load_panel(cfg)?;
    let localizer = container::read_model(&ctx.path(&model_file(Task::Localize))).stage("load model")?;
    let mut severity = BTreeMap::new();
    for kind in DamageKind::DAMAGED {
        let p = ctx.path(&model_file(Task::Severity(kind)));
        if p.exists() {
            severity.insert(kind, container::read_model(&p).stage("load model")?);
        }
    }
    let system = DamageSystem {
        localizer,
        severity,
        threshold: cfg.localize.threshold,
    };
    let report = evaluate(
        &system,
        &ds.fingerprints,
        ds.scenarios(),
        &ds.split.test,
        &panel.rivet_neighbours(),
    )
    .stage("evaluate")?;
    write_json(&ctx.path("evaluation.json"), &report)?;
    fs::write(ctx.path("evaluation.txt"), report.to_text())?;
    report.write_csv(fs::File::create(ctx.path("records.csv"))?)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_reproduce(ctx: &Ctx) -> Result<()> {
    ctx.note("running the full pipeline");
    let out = pipeline::run(&ctx.cfg)?;
    container::write_basis(&ctx.path(ACCEL_BASIS_FILE), &out.dataset.bases.accel)?;
    container::write_basis(&ctx.path(STRAIN_BASIS_FILE), &out.dataset.bases.strain)?;
    container::write_model(&ctx.path(&model_file(Task::Localize)), &out.system.localizer)?;
    for (kind, m) in &out.system.severity {
        container::write_model(&ctx.path(&model_file(Task::Severity(*kind))), m)?;
    }
    for (task, h) in &out.histories {
        write_history(&ctx.path(&history_file(*task)), h)?;
    }
    write_json(&ctx.path("summary.json"), &out.summary)?;
    let text = out.summary.to_text();
    fs::write(ctx.path("summary.txt"), &text)?;
    out.summary
        .evaluation
        .write_csv(fs::File::create(ctx.path("records.csv"))?)?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("frfnet").chain(args.iter().copied()))
    }

    #[test]
    fn global_flags_after_the_subcommand() {
        let cli = parse(&["train", "--task", "severity:crack", "--seed", "5", "--out", "x"]).unwrap();
        assert_eq!(cli.seed, Some(5));
        assert_eq!(cli.out.as_deref(), Some(Path::new("x")));
        match cli.command {
            Command::Train { task } => assert_eq!(task, Task::Severity(DamageKind::Crack)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infer_needs_a_model_and_an_frf() {
        assert!(parse(&["infer", "--frf", "a.frfd"]).is_err());
        assert!(parse(&["infer", "--model", "m.frfd"]).is_err());
        let cli = parse(&["infer", "--model", "a", "--model", "b", "--frf", "f", "--threshold", "0.3"]).unwrap();
        match cli.command {
            Command::Infer { model, threshold, .. } => {
                assert_eq!(model.len(), 2);
                assert_eq!(threshold, Some(0.3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_arguments_exit_with_config_code() {
        assert_eq!(main_with(["frfnet", "train", "--task", "severity:rust"]), exit_code::CONFIG);
        assert_eq!(main_with(["frfnet"]), exit_code::CONFIG);
    }
}
