//! End-to-end run: simulate, fit bases, train every task network, evaluate
//! on the held-out split and probe a few extra scenarios.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::damage::{
    self, build_dataset, estimate_severity, evaluate, localize, probe_key, train_task, Dataset,
    DamageSystem, EvaluationReport, Task, TaskData, TaskModel,
};
use crate::error::{Result, StageExt};
use crate::mlp::EpochRecord;
use crate::panel::{build_panel, DamageKind, DamageScenario, PanelModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub lambda: f64,
    pub epochs: usize,
    pub final_train_mse: f64,
    pub val_mse: f64,
    pub candidate_val_mses: Vec<Option<f64>>,
}

impl TaskSummary {
    fn of(model: &TaskModel) -> Self {
        let m = &model.metadata;
        Self {
            lambda: m.lambda,
            epochs: m.epochs,
            final_train_mse: m.final_train_mse,
            val_mse: m.val_mse,
            candidate_val_mses: m.candidates.iter().map(|c| c.val_mse).collect(),
        }
    }
}

/// Crack severity predicted along a sweep at one rivet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCheck {
    pub rivet: usize,
    pub crack_mm: Vec<f64>,
    pub predicted_mm: Vec<f64>,
    pub steps: usize,
    pub nondecreasing_steps: usize,
}

/// One held-out crack, localized and sized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCheck {
    pub rivet: usize,
    pub crack_mm: f64,
    pub predicted_mm: f64,
    pub rel_err_pct: f64,
    pub flagged: Vec<usize>,
    pub top2: Vec<usize>,
}

/// Severity predictions on healthy test scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthyBand {
    pub smallest_trained: f64,
    pub predictions: Vec<f64>,
    pub below_smallest: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub master_seed: u64,
    pub n_scenarios: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_bins: usize,
    pub basis_id: String,
    pub fingerprint_len: usize,
    pub n_accel_components: usize,
    pub n_strain_components: usize,
    /// Variance fraction captured by the kept components, per channel group.
    pub accel_variance_explained: Vec<f64>,
    pub strain_variance_explained: Vec<f64>,
    pub localization: TaskSummary,
    pub severity: BTreeMap<DamageKind, TaskSummary>,
    pub healthy_test_scenarios: usize,
    pub healthy_test_clean: usize,
    pub healthy_severity: BTreeMap<DamageKind, HealthyBand>,
    pub sweep: SweepCheck,
    pub example: ExampleCheck,
    pub warnings: Vec<String>,
    pub evaluation: EvaluationReport,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let mut s = String::new();
        let mut row = |label: String, value: String| {
            let _ = writeln!(s, "{label:<36}{value}");
        };
        row("master seed".into(), self.master_seed.to_string());
        row(
            "scenarios".into(),
            format!(
                "{} (train {}, val {}, test {})",
                self.n_scenarios, self.n_train, self.n_val, self.n_test
            ),
        );
        row("frequency bins".into(), self.n_bins.to_string());
        row(
            "fingerprint length".into(),
            format!(
                "{} ({} accelerance + {} strain)",
                self.fingerprint_len, self.n_accel_components, self.n_strain_components
            ),
        );
        for (label, v) in [
            ("accelerance variance kept", &self.accel_variance_explained),
            ("strain variance kept", &self.strain_variance_explained),
        ] {
            row(label.into(), format!("mean {:.4}, min {:.4}", mean(v), min(v)));
        }
        row(
            "localization network".into(),
            format!(
                "lambda {:e}, val mse {:.6}, train mse {:.6}",
                self.localization.lambda, self.localization.val_mse, self.localization.final_train_mse
            ),
        );
        for (k, t) in &self.severity {
            row(
                format!("severity network {k}"),
                format!("lambda {:e}, val mse {:.6}", t.lambda, t.val_mse),
            );
        }
        for line in self.evaluation.to_text().lines() {
            let _ = writeln!(s, "{line}");
        }
        let mut row = |label: String, value: String| {
            let _ = writeln!(s, "{label:<36}{value}");
        };
        row(
            "healthy test cases clean".into(),
            format!("{} of {}", self.healthy_test_clean, self.healthy_test_scenarios),
        );
        for (k, b) in &self.healthy_severity {
            row(
                format!("healthy {k} estimate"),
                format!(
                    "{} of {} below {}",
                    b.below_smallest,
                    b.predictions.len(),
                    b.smallest_trained
                ),
            );
        }
        row(
            format!("crack sweep at rivet {}", self.sweep.rivet),
            format!(
                "{} of {} steps non-decreasing",
                self.sweep.nondecreasing_steps, self.sweep.steps
            ),
        );
        row(
            format!("example crack {} mm at rivet {}", self.example.crack_mm, self.example.rivet),
            format!(
                "top2 {:?}, predicted {:.3} mm ({:.1}% error)",
                self.example.top2, self.example.predicted_mm, self.example.rel_err_pct
            ),
        );
        for w in &self.warnings {
            row("warning".into(), w.clone());
        }
        s
    }
}

pub struct PipelineOutput {
    pub panel: PanelModel,
    pub dataset: Dataset,
    pub system: DamageSystem,
    pub histories: BTreeMap<Task, Vec<EpochRecord>>,
    pub summary: Summary,
}

pub fn load_panel(cfg: &RunConfig) -> Result<PanelModel> {
    build_panel(&cfg.panel_config()?).stage("panel")
}

pub fn dataset(cfg: &RunConfig, panel: &PanelModel) -> Result<Dataset> {
    let g = &cfg.scenarios;
    build_dataset(
        panel,
        &g.scenarios(),
        &cfg.signal,
        &cfg.pca,
        g.train_fraction,
        g.val_fraction,
        cfg.master_seed,
    )
}

/// Every task the configuration trains, localization first.
pub fn tasks() -> Vec<Task> {
    std::iter::once(Task::Localize)
        .chain(DamageKind::DAMAGED.iter().map(|&k| Task::Severity(k)))
        .collect()
}

pub fn train_one(cfg: &RunConfig, ds: &Dataset, task: Task) -> Result<(TaskModel, Vec<EpochRecord>)> {
    let data = TaskData::new(task, &ds.fingerprints, ds.scenarios(), &ds.split)?;
    let params = match task {
        Task::Localize => &cfg.localize,
        Task::Severity(_) => &cfg.severity,
    };
    train_task(&data, params, cfg.master_seed).stage("training")
}

pub fn train_system(cfg: &RunConfig, ds: &Dataset) -> Result<(DamageSystem, BTreeMap<Task, Vec<EpochRecord>>)> {
    let mut histories = BTreeMap::new();
    let (localizer, h) = train_one(cfg, ds, Task::Localize)?;
    histories.insert(Task::Localize, h);
    let mut severity = BTreeMap::new();
    for kind in DamageKind::DAMAGED {
        if !ds.scenarios().iter().any(|s| s.kind == kind) {
            continue;
        }
        let (m, h) = train_one(cfg, ds, Task::Severity(kind))?;
        histories.insert(Task::Severity(kind), h);
        severity.insert(kind, m);
    }
    Ok((
        DamageSystem {
            localizer,
            severity,
            threshold: cfg.localize.threshold,
        },
        histories,
    ))
}

fn probe(cfg: &RunConfig, panel: &PanelModel, ds: &Dataset, scenario: &DamageScenario, index: u64) -> Result<crate::pca::FeatureVector> {
    let frf = damage::measure_scenario(panel, scenario, &cfg.signal, cfg.master_seed, probe_key(cfg.master_seed, index))?;
    ds.bases.project(&frf)
}

/// Summary of a trained system on the dataset's test split plus the probe
/// scenarios.
pub fn summarize(cfg: &RunConfig, panel: &PanelModel, ds: &Dataset, system: &DamageSystem) -> Result<Summary> {
    let neighbours = panel.rivet_neighbours();
    let scenarios = ds.scenarios();
    let evaluation = evaluate(system, &ds.fingerprints, scenarios, &ds.split.test, &neighbours).stage("evaluation")?;

    let healthy_test: Vec<usize> = ds
        .split
        .test
        .iter()
        .copied()
        .filter(|&i| scenarios[i].kind == DamageKind::Healthy)
        .collect();
    let healthy_test_clean = evaluation
        .records
        .iter()
        .filter(|r| r.kind == DamageKind::Healthy && r.flagged.is_empty())
        .count();
    let mut healthy_severity = BTreeMap::new();
    for (&kind, model) in &system.severity {
        let smallest_trained = cfg.scenarios.levels(kind).iter().copied().fold(f64::INFINITY, f64::min);
        let predictions = healthy_test
            .iter()
            .map(|&i| estimate_severity(&ds.fingerprints[i], model, kind).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        let below_smallest = predictions.iter().filter(|&&p| p < smallest_trained).count();
        healthy_severity.insert(
            kind,
            HealthyBand {
                smallest_trained,
                predictions,
                below_smallest,
            },
        );
    }

    let checks = &cfg.checks;
    let mut predicted_mm = Vec::new();
    if let Some(model) = system.severity.get(&DamageKind::Crack) {
        for (j, &mm) in checks.sweep_crack_mm.iter().enumerate() {
            let f = probe(cfg, panel, ds, &DamageScenario::crack(checks.sweep_rivet, mm), j as u64)?;
            predicted_mm.push(estimate_severity(&f, model, DamageKind::Crack)?.value);
        }
    }
    let steps = predicted_mm.len().saturating_sub(1);
    let nondecreasing_steps = predicted_mm.windows(2).filter(|w| w[1] >= w[0]).count();
    let sweep = SweepCheck {
        rivet: checks.sweep_rivet,
        crack_mm: checks.sweep_crack_mm.clone(),
        predicted_mm,
        steps,
        nondecreasing_steps,
    };

    let example_scenario = DamageScenario::crack(checks.example_rivet, checks.example_crack_mm);
    let f = probe(cfg, panel, ds, &example_scenario, 1_000)?;
    let rv = localize(&f, &system.localizer, system.threshold)?;
    let predicted = match system.severity.get(&DamageKind::Crack) {
        Some(model) => estimate_severity(&f, model, DamageKind::Crack)?.value,
        None => f64::NAN,
    };
    let example = ExampleCheck {
        rivet: checks.example_rivet,
        crack_mm: checks.example_crack_mm,
        predicted_mm: predicted,
        rel_err_pct: 100.0 * (predicted - checks.example_crack_mm).abs() / checks.example_crack_mm,
        flagged: rv.flagged(),
        top2: rv.top_k(2).to_vec(),
    };

    let variance = |b: &crate::pca::PcaBasis, k: usize| b.group_variance_explained(k);
    Ok(Summary {
        master_seed: cfg.master_seed,
        n_scenarios: scenarios.len(),
        n_train: ds.split.train.len(),
        n_val: ds.split.val.len(),
        n_test: ds.split.test.len(),
        n_bins: cfg.signal.n_bins,
        basis_id: ds.bases.id(),
        fingerprint_len: ds.bases.fingerprint_len(),
        n_accel_components: ds.bases.accel.n_components(),
        n_strain_components: ds.bases.strain.n_components(),
        accel_variance_explained: variance(&ds.bases.accel, cfg.pca.accel_components)?,
        strain_variance_explained: variance(&ds.bases.strain, cfg.pca.strain_components)?,
        localization: TaskSummary::of(&system.localizer),
        severity: system.severity.iter().map(|(k, m)| (*k, TaskSummary::of(m))).collect(),
        healthy_test_scenarios: healthy_test.len(),
        healthy_test_clean,
        healthy_severity,
        sweep,
        example,
        warnings: ds.warnings.clone(),
        evaluation,
    })
}

/// Whole pipeline in memory.
pub fn run(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let panel = load_panel(cfg)?;
    let dataset = dataset(cfg, &panel)?;
    let (system, histories) = train_system(cfg, &dataset)?;
    let summary = summarize(cfg, &panel, &dataset, &system)?;
    Ok(PipelineOutput {
        panel,
        dataset,
        system,
        histories,
        summary,
    })
}
