//! Damage identification: scenario measurement, fingerprint datasets, task
//! networks and their evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{NetworkParams, PcaParams, SignalParams};
use crate::error::{Error, Result, StageExt};
use crate::mlp::{self, Activation, EpochRecord, MlpNetwork, TrainParams, TrainingSet};
use crate::panel::{analytic_frf, apply_damage, DamageKind, DamageScenario, PanelModel, N_RIVETS};
use crate::pca::{self, basis_pair_id, FeatureVector, PcaBasis};
use crate::seeds::{self, Stage};
use crate::signal::{measure_frf, ChannelKind, FrequencyGrid, FrfMatrix, MeasurementSpec};

/// Scenario indices per partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random partition with `floor(train·n)` training and `floor(val·n)`
/// validation scenarios; the rest are test scenarios.
pub fn split_indices(n: usize, train_fraction: f64, val_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction)
        || !(0.0..=1.0).contains(&val_fraction)
        || train_fraction + val_fraction > 1.0
    {
        return Err(Error::InvalidInput(format!(
            "split fractions {train_fraction} + {val_fraction} exceed 1"
        )));
    }
    // The epsilon keeps products such as 0.7 * 340 from flooring one short.
    let n_train = (train_fraction * n as f64 + 1e-9).floor() as usize;
    let n_val = (val_fraction * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 {
        return Err(Error::InvalidInput(format!("{n} scenarios leave no training set")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeds::rng(seed));
    let part = |range: std::ops::Range<usize>| {
        let mut v = perm[range].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Split {
        train: part(0..n_train),
        val: part(n_train..n_train + n_val),
        test: part(n_train + n_val..n),
    })
}

/// Key under which probe measurements draw their seeds, disjoint from the
/// scenario indices of a dataset.
pub fn probe_key(master_seed: u64, index: u64) -> u64 {
    (1u64 << 63) | (seeds::derive(master_seed, Stage::Sweep, index) >> 1)
}

/// Simulated H1 estimate of one damage scenario. `key` selects the
/// excitation and noise streams.
pub fn measure_scenario(
    panel: &PanelModel,
    scenario: &DamageScenario,
    signal: &SignalParams,
    master_seed: u64,
    key: u64,
) -> Result<FrfMatrix> {
    let damaged = apply_damage(panel, scenario).stage("damage")?;
    let modes = damaged.modal_solve(damaged.n_modes).stage("modal analysis")?;
    let grid = FrequencyGrid::new(signal.f_max_hz, signal.n_bins)?;
    let frf = analytic_frf(&modes, &damaged.sensor_layout, &grid).stage("frf synthesis")?;
    let spec = MeasurementSpec {
        n_records: signal.n_records,
        sigma_n: signal.sigma,
        snr_db: if signal.snr_db == f64::INFINITY {
            None
        } else {
            Some(signal.snr_db)
        },
    };
    measure_frf(
        &frf,
        &spec,
        |r| seeds::derive2(master_seed, Stage::Excitation, key, r),
        |r| seeds::derive2(master_seed, Stage::MeasurementNoise, key, r),
    )
    .stage("frf estimation")
}

/// Log-magnitude features of every scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub scenarios: Vec<DamageScenario>,
    /// Full grid including DC.
    pub freq_bins: Vec<f64>,
    pub channel_kinds: Vec<ChannelKind>,
    /// `[scenario][channel][bin]`, DC excluded.
    pub log_magnitude: Vec<Vec<Vec<f64>>>,
}

impl Measurements {
    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn bins_per_channel(&self) -> usize {
        self.freq_bins.len().saturating_sub(1)
    }

    pub fn block_channels(&self, kind: ChannelKind) -> Vec<usize> {
        self.channel_kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_healthy(&self) -> bool {
        self.scenarios.iter().any(|s| s.kind == DamageKind::Healthy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.log_magnitude.len() != self.scenarios.len() {
            return Err(Error::Dimension(format!(
                "{} feature sets for {} scenarios",
                self.log_magnitude.len(),
                self.scenarios.len()
            )));
        }
        let bins = self.bins_per_channel();
        for (i, rows) in self.log_magnitude.iter().enumerate() {
            if rows.len() != self.channel_kinds.len() || rows.iter().any(|r| r.len() != bins) {
                return Err(Error::Dimension(format!("scenario {i} has a malformed feature set")));
            }
        }
        Ok(())
    }
}

/// Measures every scenario; scenario `i` draws from seed key `i`.
pub fn simulate(
    panel: &PanelModel,
    scenarios: &[DamageScenario],
    signal: &SignalParams,
    master_seed: u64,
) -> Result<Measurements> {
    signal.validate()?;
    let grid = FrequencyGrid::new(signal.f_max_hz, signal.n_bins)?;
    let mut log_magnitude = Vec::with_capacity(scenarios.len());
    let mut kinds = panel.sensor_layout.channel_kinds();
    for (i, scenario) in scenarios.iter().enumerate() {
        let frf = measure_scenario(panel, scenario, signal, master_seed, i as u64)?;
        kinds = frf.channel_kinds().to_vec();
        log_magnitude.push((0..frf.n_channels()).map(|c| pca::log_magnitude(&frf, c)).collect());
    }
    Ok(Measurements {
        scenarios: scenarios.to_vec(),
        freq_bins: grid.frequencies(),
        channel_kinds: kinds,
        log_magnitude,
    })
}

/// Accelerance and strain bases used together.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair {
    pub accel: PcaBasis,
    pub strain: PcaBasis,
}

impl BasisPair {
    pub fn id(&self) -> String {
        basis_pair_id(&self.accel, &self.strain)
    }

    pub fn fingerprint_len(&self) -> usize {
        self.accel.n_components() + self.strain.n_components()
    }

    pub fn project(&self, frf: &FrfMatrix) -> Result<FeatureVector> {
        pca::project(frf, &self.accel, &self.strain)
    }

    /// Projects log-magnitude rows of all channels.
    pub fn project_rows(&self, rows: &[Vec<f64>], kinds: &[ChannelKind]) -> Result<FeatureVector> {
        if rows.len() != kinds.len() {
            return Err(Error::Dimension("channel kinds do not match feature rows".into()));
        }
        let pick = |kind| -> Vec<Vec<f64>> {
            rows.iter()
                .zip(kinds)
                .filter(|(_, k)| **k == kind)
                .map(|(r, _)| r.clone())
                .collect()
        };
        pca::project_features(
            &pick(ChannelKind::Accelerance),
            &pick(ChannelKind::Strain),
            &self.accel,
            &self.strain,
        )
    }
}

/// Fits both bases on the training scenarios only.
pub fn fit_bases(meas: &Measurements, train: &[usize], params: &PcaParams) -> Result<BasisPair> {
    meas.validate()?;
    let fit = |kind: ChannelKind, n_keep: usize| {
        let channels = meas.block_channels(kind);
        pca::fit_basis_with(
            train.len(),
            channels.len(),
            meas.bins_per_channel(),
            kind,
            n_keep,
            params.layout,
            |s, c| meas.log_magnitude[train[s]][channels[c]].as_slice(),
        )
    };
    Ok(BasisPair {
        accel: fit(ChannelKind::Accelerance, params.accel_components).stage("pca")?,
        strain: fit(ChannelKind::Strain, params.strain_components).stage("pca")?,
    })
}

pub fn fingerprints(meas: &Measurements, bases: &BasisPair) -> Result<Vec<FeatureVector>> {
    meas.log_magnitude
        .iter()
        .map(|rows| bases.project_rows(rows, &meas.channel_kinds))
        .collect::<Result<_>>()
        .stage("projection")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub measurements: Measurements,
    pub split: Split,
    pub bases: BasisPair,
    pub fingerprints: Vec<FeatureVector>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn scenarios(&self) -> &[DamageScenario] {
        &self.measurements.scenarios
    }
}

/// Measures, splits, fits the bases on the training split and projects
/// every scenario.
pub fn build_dataset(
    panel: &PanelModel,
    scenarios: &[DamageScenario],
    signal: &SignalParams,
    pca_params: &PcaParams,
    train_fraction: f64,
    val_fraction: f64,
    master_seed: u64,
) -> Result<Dataset> {
    let measurements = simulate(panel, scenarios, signal, master_seed)?;
    let split = split_indices(
        scenarios.len(),
        train_fraction,
        val_fraction,
        seeds::derive(master_seed, Stage::Split, 0),
    )?;
    let bases = fit_bases(&measurements, &split.train, pca_params)?;
    let fingerprints = fingerprints(&measurements, &bases)?;
    let mut warnings = Vec::new();
    if !measurements.has_healthy() {
        warnings.push("scenario list contains no healthy case".into());
    }
    if bases.accel.degenerate() || bases.strain.degenerate() {
        warnings.push("degenerate PCA basis (zero-variance directions kept)".into());
    }
    Ok(Dataset {
        measurements,
        split,
        bases,
        fingerprints,
        warnings,
    })
}

/// 34-element indicator with a 1 at every damaged rivet.
pub fn localization_target(scenario: &DamageScenario) -> Vec<f64> {
    let mut t = vec![0.0; N_RIVETS];
    if scenario.kind != DamageKind::Healthy {
        for (&r, &s) in scenario.rivets.iter().zip(&scenario.severity) {
            if s > 0.0 {
                t[r] = 1.0;
            }
        }
    }
    t
}

/// Rivets whose entry is set.
pub fn decode_rivets(bits: &[bool]) -> Vec<usize> {
    bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
}

/// Largest severity in a scenario.
pub fn scenario_severity(scenario: &DamageScenario) -> f64 {
    scenario.severity.iter().copied().fold(0.0, f64::max)
}

/// What a task network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Localize,
    Severity(DamageKind),
}

impl Task {
    /// Numeric tag mixed into the training seed keys.
    pub fn code(self) -> u64 {
        match self {
            Task::Localize => 0,
            Task::Severity(DamageKind::Healthy) => 4,
            Task::Severity(DamageKind::Crack) => 1,
            Task::Severity(DamageKind::HoleExpansion) => 2,
            Task::Severity(DamageKind::AddedMass) => 3,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            Task::Localize => N_RIVETS,
            Task::Severity(_) => 1,
        }
    }

    pub fn output_activation(self) -> Activation {
        match self {
            Task::Localize => Activation::Sigmoid,
            Task::Severity(_) => Activation::Linear,
        }
    }

    /// Scenarios a task trains and is evaluated on.
    pub fn admits(self, scenario: &DamageScenario) -> bool {
        match self {
            Task::Localize => true,
            Task::Severity(kind) => scenario.kind == kind,
        }
    }

    pub fn target(self, scenario: &DamageScenario) -> Vec<f64> {
        match self {
            Task::Localize => localization_target(scenario),
            Task::Severity(_) => vec![scenario_severity(scenario)],
        }
    }

    /// File-name friendly form.
    pub fn slug(self) -> String {
        match self {
            Task::Localize => "localize".into(),
            Task::Severity(k) => format!("severity_{}", k.as_str()),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Localize => f.write_str("localize"),
            Task::Severity(k) => write!(f, "severity:{k}"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "localize" {
            return Ok(Task::Localize);
        }
        if let Some(kind) = s.strip_prefix("severity:") {
            return match DamageKind::parse(kind) {
                Some(k) if k != DamageKind::Healthy => Ok(Task::Severity(k)),
                _ => Err(Error::Config(format!("unknown damage kind {kind:?}"))),
            };
        }
        Err(Error::Config(format!(
            "task must be localize or severity:<crack|hole_expansion|added_mass>, got {s:?}"
        )))
    }
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Task {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-component affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; constant components get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidInput("cannot standardize an empty set".into()));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension("rows differ in length".into()));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "vector of length {} for {}-component statistics",
                x.len(),
                self.dim()
            )));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// One trained candidate network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub lambda: f64,
    pub restart: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub epochs: usize,
    pub train_mse: Option<f64>,
    /// `None` when training diverged.
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub sizes: Vec<usize>,
    pub alpha: f64,
    pub max_epochs: usize,
    pub lambda: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub epochs: usize,
    pub final_train_mse: f64,
    pub val_mse: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub candidates: Vec<Candidate>,
}

/// Network plus everything needed to apply it to raw fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub task: Task,
    pub network: MlpNetwork,
    pub input_stats: Standardizer,
    /// Severity networks regress standardized targets.
    pub target_stats: Option<Standardizer>,
    pub basis_id: String,
    pub metadata: TrainingMetadata,
}

impl TaskModel {
    pub fn validate(&self) -> Result<()> {
        if self.network.output_dim() != self.task.output_dim() {
            return Err(Error::Dimension(format!(
                "{} network has {} outputs",
                self.task,
                self.network.output_dim()
            )));
        }
        if self.input_stats.dim() != self.network.input_dim() {
            return Err(Error::Dimension("input statistics do not match the network".into()));
        }
        match (&self.task, &self.target_stats) {
            (Task::Severity(_), Some(t)) if t.dim() == 1 => Ok(()),
            (Task::Localize, None) => Ok(()),
            _ => Err(Error::InvalidInput("target statistics do not match the task".into())),
        }
    }

    fn check_feature(&self, feature: &FeatureVector) -> Result<()> {
        if feature.basis_id != self.basis_id {
            return Err(Error::BasisMismatch {
                expected: self.basis_id.clone(),
                found: feature.basis_id.clone(),
            });
        }
        Ok(())
    }

    /// Raw network output in target units.
    pub fn predict(&self, feature: &FeatureVector) -> Result<Vec<f64>> {
        self.check_feature(feature)?;
        let x = self.input_stats.apply(&feature.values)?;
        let y = self.network.predict(&x)?;
        Ok(match &self.target_stats {
            Some(t) => t.invert(&y),
            None => y,
        })
    }
}

/// Standardized training data for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub task: Task,
    pub train: TrainingSet,
    pub val: Option<TrainingSet>,
    pub input_stats: Standardizer,
    pub target_stats: Option<Standardizer>,
    pub basis_id: String,
}

impl TaskData {
    pub fn new(
        task: Task,
        features: &[FeatureVector],
        scenarios: &[DamageScenario],
        split: &Split,
    ) -> Result<Self> {
        if features.len() != scenarios.len() {
            return Err(Error::Dimension(format!(
                "{} fingerprints for {} scenarios",
                features.len(),
                scenarios.len()
            )));
        }
        let basis_id = features
            .first()
            .map(|f| f.basis_id.clone())
            .ok_or_else(|| Error::InvalidInput("no fingerprints".into()))?;
        if features.iter().any(|f| f.basis_id != basis_id) {
            return Err(Error::BasisMismatch {
                expected: basis_id,
                found: "mixed".into(),
            });
        }
        let pick = |idx: &[usize]| -> Vec<usize> {
            idx.iter().copied().filter(|&i| task.admits(&scenarios[i])).collect()
        };
        let train_idx = pick(&split.train);
        let val_idx = pick(&split.val);
        if train_idx.is_empty() {
            return Err(Error::InvalidInput(format!("no training scenarios for {task}")));
        }
        let raw_x = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| features[i].values.clone()).collect() };
        let raw_y = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| task.target(&scenarios[i])).collect() };
        let input_stats = Standardizer::fit(&raw_x(&train_idx))?;
        let target_stats = match task {
            Task::Localize => None,
            Task::Severity(_) => Some(Standardizer::fit(&raw_y(&train_idx))?),
        };
        let make = |idx: &[usize]| -> Result<TrainingSet> {
            let x = raw_x(idx)
                .iter()
                .map(|v| input_stats.apply(v))
                .collect::<Result<Vec<_>>>()?;
            let y = raw_y(idx)
                .iter()
                .map(|v| match &target_stats {
                    Some(t) => t.apply(v),
                    None => Ok(v.clone()),
                })
                .collect::<Result<Vec<_>>>()?;
            TrainingSet::new(x, y)
        };
        let train = make(&train_idx)?;
        let val = if val_idx.is_empty() { None } else { Some(make(&val_idx)?) };
        Ok(Self {
            task,
            train,
            val,
            input_stats,
            target_stats,
            basis_id,
        })
    }

    pub fn sizes(&self, hidden: &[usize]) -> Vec<usize> {
        let mut s = vec![self.train.input_dim()];
        s.extend_from_slice(hidden);
        s.push(self.task.output_dim());
        s
    }
}

/// Result of training several restarts at one weight-decay strength.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub best: Option<(MlpNetwork, Vec<EpochRecord>, usize)>,
    pub candidates: Vec<Candidate>,
}

impl Ensemble {
    /// Validation MSE of every restart that converged.
    pub fn restart_mses(&self) -> Vec<f64> {
        self.candidates.iter().filter_map(|c| c.val_mse).collect()
    }
}

/// Trains `n_restarts` networks with distinct initializations and keeps the
/// one with the lowest validation MSE (training MSE when there is no
/// validation set).
pub fn ensemble_retrain(
    data: &TaskData,
    params: &NetworkParams,
    lambda: f64,
    n_restarts: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    if n_restarts == 0 {
        return Err(Error::InvalidInput("n_restarts must be at least 1".into()));
    }
    let sizes = data.sizes(&params.hidden);
    let mut candidates = Vec::with_capacity(n_restarts);
    let mut best: Option<(MlpNetwork, Vec<EpochRecord>, usize)> = None;
    let mut best_mse = f64::INFINITY;
    for restart in 0..n_restarts {
        let key = (data.task.code() << 32) | restart as u64;
        let init_seed = seeds::derive(master_seed, Stage::NetworkInit, key);
        let shuffle_seed = seeds::derive(master_seed, Stage::Shuffle, key);
        let net = MlpNetwork::init(&sizes, Activation::Sigmoid, data.task.output_activation(), init_seed, None)?;
        let tp = TrainParams {
            alpha: params.alpha,
            max_epochs: params.max_epochs,
            target_mse: params.target_mse,
            l2_lambda: lambda,
            shuffle_seed,
            init_seed,
            init_scale: None,
        };
        let mut cand = Candidate {
            lambda,
            restart,
            init_seed,
            shuffle_seed,
            epochs: 0,
            train_mse: None,
            val_mse: None,
        };
        match mlp::train_regularized(net, &data.train, &tp) {
            Ok((net, history)) => {
                let train_mse = history.last().map_or(f64::NAN, |r| r.mse);
                let val_mse = match &data.val {
                    Some(v) => net.mse(v)?,
                    None => train_mse,
                };
                cand.epochs = history.len();
                cand.train_mse = Some(train_mse);
                cand.val_mse = Some(val_mse);
                if val_mse < best_mse {
                    best_mse = val_mse;
                    best = Some((net, history, restart));
                }
            }
            Err(Error::Diverged { epoch, .. }) => cand.epochs = epoch,
            Err(e) => return Err(e),
        }
        candidates.push(cand);
    }
    Ok(Ensemble { best, candidates })
}

/// Trains one task over the weight-decay grid and restarts; the candidate
/// with the lowest validation MSE wins.
pub fn train_task(
    data: &TaskData,
    params: &NetworkParams,
    master_seed: u64,
) -> Result<(TaskModel, Vec<EpochRecord>)> {
    let grid: Vec<f64> = if params.lambda_grid.is_empty() {
        vec![0.0]
    } else {
        params.lambda_grid.clone()
    };
    let mut all = Vec::new();
    let mut best: Option<(MlpNetwork, Vec<EpochRecord>, Candidate)> = None;
    for &lambda in &grid {
        let ens = ensemble_retrain(data, params, lambda, params.restarts, master_seed)?;
        if let Some((net, history, restart)) = ens.best {
            let cand = ens.candidates[restart].clone();
            let better = best
                .as_ref()
                .is_none_or(|(_, _, b)| cand.val_mse < b.val_mse);
            if better {
                best = Some((net, history, cand));
            }
        }
        all.extend(ens.candidates);
    }
    let (network, history, chosen) = best.ok_or(Error::Diverged {
        epoch: params.max_epochs,
        mse: f64::INFINITY,
    })?;
    let metadata = TrainingMetadata {
        sizes: network.sizes(),
        alpha: params.alpha,
        max_epochs: params.max_epochs,
        lambda: chosen.lambda,
        init_seed: chosen.init_seed,
        shuffle_seed: chosen.shuffle_seed,
        epochs: chosen.epochs,
        final_train_mse: chosen.train_mse.unwrap_or(f64::NAN),
        val_mse: chosen.val_mse.unwrap_or(f64::NAN),
        n_train: data.train.len(),
        n_val: data.val.as_ref().map_or(0, TrainingSet::len),
        candidates: all,
    };
    let model = TaskModel {
        task: data.task,
        network,
        input_stats: data.input_stats.clone(),
        target_stats: data.target_stats.clone(),
        basis_id: data.basis_id.clone(),
        metadata,
    };
    Ok((model, history))
}

/// Thresholded localization output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RivetVector {
    pub scores: Vec<f64>,
    pub binary: Vec<bool>,
    pub threshold: f64,
    /// Rivet indices by descending score.
    pub ranked: Vec<usize>,
}

impl RivetVector {
    pub fn from_scores(scores: Vec<f64>, threshold: f64) -> Result<Self> {
        if scores.len() != N_RIVETS {
            return Err(Error::Dimension(format!(
                "{} rivet scores, expected {N_RIVETS}",
                scores.len()
            )));
        }
        let binary = scores.iter().map(|&s| s >= threshold).collect();
        let mut ranked: Vec<usize> = (0..N_RIVETS).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Ok(Self {
            scores,
            binary,
            threshold,
            ranked,
        })
    }

    pub fn flagged(&self) -> Vec<usize> {
        decode_rivets(&self.binary)
    }

    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.ranked[..k.min(self.ranked.len())]
    }
}

pub fn localize(feature: &FeatureVector, model: &TaskModel, threshold: f64) -> Result<RivetVector> {
    if model.task != Task::Localize {
        return Err(Error::InvalidInput(format!("{} model used for localization", model.task)));
    }
    RivetVector::from_scores(model.predict(feature)?, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityEstimate {
    pub kind: DamageKind,
    /// Clamped at 0; mm, fraction or kg.
    pub value: f64,
    pub raw: f64,
    pub rivet: Option<usize>,
}

pub fn clamp_severity(raw: f64) -> f64 {
    raw.max(0.0)
}

pub fn estimate_severity(feature: &FeatureVector, model: &TaskModel, kind: DamageKind) -> Result<SeverityEstimate> {
    if model.task != Task::Severity(kind) {
        return Err(Error::InvalidInput(format!(
            "{} model asked for {kind} severity",
            model.task
        )));
    }
    let raw = model.predict(feature)?[0];
    if !raw.is_finite() {
        return Err(Error::InvalidInput("non-finite severity prediction".into()));
    }
    Ok(SeverityEstimate {
        kind,
        value: clamp_severity(raw),
        raw,
        rivet: None,
    })
}

/// Localization network plus one severity network per damage kind.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageSystem {
    pub localizer: TaskModel,
    pub severity: BTreeMap<DamageKind, TaskModel>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario_id: usize,
    pub kind: DamageKind,
    pub true_rivets: Vec<usize>,
    pub scores: Vec<f64>,
    pub flagged: Vec<usize>,
    pub bit_errors: usize,
    pub hit: bool,
    pub severity_true: Option<f64>,
    pub severity_pred: Option<f64>,
}

impl ScenarioRecord {
    pub fn severity_rel_err(&self) -> Option<f64> {
        match (self.severity_true, self.severity_pred) {
            (Some(t), Some(p)) if t > 0.0 => Some((p - t).abs() / t),
            _ => None,
        }
    }
}

/// Whether every true rivet, or a rivet adjacent to it, is flagged; for a
/// healthy case, whether nothing is flagged.
pub fn localization_hit(true_rivets: &[usize], flagged: &[usize], neighbours: &[Vec<usize>]) -> bool {
    if true_rivets.is_empty() {
        return flagged.is_empty();
    }
    true_rivets.iter().all(|&r| {
        flagged.contains(&r) || neighbours.get(r).is_some_and(|n| n.iter().any(|x| flagged.contains(x)))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_scenarios: usize,
    pub threshold: f64,
    pub misclassification_pct: f64,
    pub localization_hit_rate: f64,
    pub severity_mean_rel_err_pct: BTreeMap<DamageKind, f64>,
    pub records: Vec<ScenarioRecord>,
}

impl EvaluationReport {
    pub fn from_records(records: Vec<ScenarioRecord>, threshold: f64) -> Self {
        let n = records.len();
        let bits: usize = records.iter().map(|r| r.bit_errors).sum();
        let hits = records.iter().filter(|r| r.hit).count();
        let mut per_kind: BTreeMap<DamageKind, (f64, usize)> = BTreeMap::new();
        for r in &records {
            if let Some(e) = r.severity_rel_err() {
                let slot = per_kind.entry(r.kind).or_default();
                slot.0 += e;
                slot.1 += 1;
            }
        }
        let pct = |num: f64, den: usize| if den == 0 { 0.0 } else { 100.0 * num / den as f64 };
        Self {
            n_scenarios: n,
            threshold,
            misclassification_pct: pct(bits as f64, N_RIVETS * n),
            localization_hit_rate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            severity_mean_rel_err_pct: per_kind.into_iter().map(|(k, (s, c))| (k, pct(s, c))).collect(),
            records,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut row = |label: String, value: String| {
            s.push_str(&format!("{label:<36}{value}\n"));
        };
        row("scenarios evaluated".into(), self.n_scenarios.to_string());
        row("threshold".into(), format!("{:.3}", self.threshold));
        row("misclassification (%)".into(), format!("{:.3}", self.misclassification_pct));
        row("hit rate (adjacent credit)".into(), format!("{:.4}", self.localization_hit_rate));
        for (k, v) in &self.severity_mean_rel_err_pct {
            row(format!("severity error {k} (%)"), format!("{v:.3}"));
        }
        s
    }

    /// One row per scenario; scores as `score_00`..`score_33`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "scenario_id",
            "kind",
            "true_rivets",
            "flagged",
            "bit_errors",
            "hit",
            "severity_true",
            "severity_pred",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..N_RIVETS).map(|i| format!("score_{i:02}")));
        out.write_record(&header)?;
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        for r in &self.records {
            let mut row = vec![
                r.scenario_id.to_string(),
                r.kind.as_str().to_string(),
                join(&r.true_rivets),
                join(&r.flagged),
                r.bit_errors.to_string(),
                r.hit.to_string(),
                opt(r.severity_true),
                opt(r.severity_pred),
            ];
            row.extend(r.scores.iter().map(|s| format!("{s:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the system on the listed scenarios.
pub fn evaluate(
    system: &DamageSystem,
    features: &[FeatureVector],
    scenarios: &[DamageScenario],
    indices: &[usize],
    neighbours: &[Vec<usize>],
) -> Result<EvaluationReport> {
    let mut records = Vec::with_capacity(indices.len());
    for &i in indices {
        let scenario = &scenarios[i];
        let feature = &features[i];
        let rv = localize(feature, &system.localizer, system.threshold)?;
        let truth: Vec<bool> = localization_target(scenario).iter().map(|&t| t > 0.5).collect();
        let true_rivets = decode_rivets(&truth);
        let flagged = rv.flagged();
        let bit_errors = truth.iter().zip(&rv.binary).filter(|(a, b)| a != b).count();
        let (severity_true, severity_pred) = match system.severity.get(&scenario.kind) {
            Some(model) if scenario.kind != DamageKind::Healthy => {
                let est = estimate_severity(feature, model, scenario.kind)?;
                (Some(scenario_severity(scenario)), Some(est.value))
            }
            _ => (None, None),
        };
        records.push(ScenarioRecord {
            scenario_id: i,
            kind: scenario.kind,
            hit: localization_hit(&true_rivets, &flagged, neighbours),
            true_rivets,
            scores: rv.scores,
            flagged,
            bit_errors,
            severity_true,
            severity_pred,
        });
    }
    Ok(EvaluationReport::from_records(records, system.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_follow_fractions() {
        let s = split_indices(340, 0.7, 0.15, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (238, 51, 51));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..340).collect::<Vec<_>>());
        assert_eq!(s, split_indices(340, 0.7, 0.15, 3).unwrap());
    }

    #[test]
    fn targets_encode_rivets() {
        assert!(localization_target(&DamageScenario::healthy()).iter().all(|&v| v == 0.0));
        let t = localization_target(&DamageScenario::crack(7, 5.0));
        assert_eq!(t.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(t[7], 1.0);
    }

    #[test]
    fn task_parsing() {
        assert_eq!("localize".parse::<Task>().unwrap(), Task::Localize);
        assert_eq!("severity:crack".parse::<Task>().unwrap(), Task::Severity(DamageKind::Crack));
        assert_eq!("severity:hole".parse::<Task>().unwrap(), Task::Severity(DamageKind::HoleExpansion));
        assert!("severity:healthy".parse::<Task>().is_err());
        assert!("classify".parse::<Task>().is_err());
        let t = Task::Severity(DamageKind::AddedMass);
        assert_eq!(t.to_string().parse::<Task>().unwrap(), t);
    }

    #[test]
    fn standardizer_round_trip() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.std[1], 1.0);
        let z = s.apply(&[3.0, 5.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        let back = s.invert(&s.apply(&[1.0, 2.0]).unwrap());
        assert!((back[0] - 1.0).abs() < 1e-15 && back[1] == 2.0);
    }

    #[test]
    fn rivet_vector_threshold() {
        let mut scores = vec![0.1; N_RIVETS];
        scores[7] = 0.9;
        scores[8] = 0.6;
        let rv = RivetVector::from_scores(scores.clone(), 0.5).unwrap();
        assert_eq!(rv.flagged(), vec![7, 8]);
        assert_eq!(rv.top_k(2), &[7, 8]);
        assert!(RivetVector::from_scores(vec![0.0; 3], 0.5).is_err());
        assert!(RivetVector::from_scores(scores, 0.95).unwrap().flagged().is_empty());
    }

    #[test]
    fn hit_rules() {
        let nb: Vec<Vec<usize>> = (0..N_RIVETS)
            .map(|i| {
                let mut v = Vec::new();
                if i % 17 != 0 {
                    v.push(i - 1);
                }
                if i % 17 != 16 {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        assert!(localization_hit(&[], &[], &nb));
        assert!(!localization_hit(&[], &[3], &nb));
        assert!(localization_hit(&[7], &[8], &nb));
        assert!(!localization_hit(&[16], &[17], &nb));
        assert!(!localization_hit(&[7], &[], &nb));
    }

    #[test]
    fn report_arithmetic() {
        let rec = |bits, hit| ScenarioRecord {
            scenario_id: 0,
            kind: DamageKind::Crack,
            true_rivets: vec![0],
            scores: vec![0.0; N_RIVETS],
            flagged: vec![],
            bit_errors: bits,
            hit,
            severity_true: Some(10.0),
            severity_pred: Some(12.0),
        };
        let mut records: Vec<_> = (0..10).map(|_| rec(0, true)).collect();
        records[3] = rec(1, false);
        let r = EvaluationReport::from_records(records, 0.5);
        assert!((r.misclassification_pct - 100.0 / 340.0).abs() < 1e-12);
        assert!((r.localization_hit_rate - 0.9).abs() < 1e-12);
        assert!((r.severity_mean_rel_err_pct[&DamageKind::Crack] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn severity_clamps_at_zero() {
        assert_eq!(clamp_severity(-0.3), 0.0);
        assert_eq!(clamp_severity(1.2), 1.2);
    }
}
