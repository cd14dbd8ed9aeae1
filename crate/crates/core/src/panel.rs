//! Lumped-parameter surrogate of a riveted stiffened panel.
//!
//! The skin is a `columns x rows` grid of transverse point masses joined to
//! their four neighbours by springs and grounded along its edges. Each
//! stiffener is a chain of point masses above one skin row, connected to the
//! skin by one rivet spring per column. Damage acts on rivet springs (crack,
//! hole expansion) or on the two masses a rivet joins (added mass).
//!
//! DOF numbering: skin node `(col, row)` is `row * columns + col`; stiffener
//! node `(line, col)` is `columns * rows + line * columns + col`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, jacobi_eigen, Matrix};
use crate::signal::{ChannelKind, FrequencyGrid, FrfMatrix};

/// Number of rivet sites on the panel.
pub const N_RIVETS: usize = 34;
pub const N_ACCEL_CHANNELS: usize = 12;
pub const N_STRAIN_CHANNELS: usize = 4;
/// Crack length at which a rivet joint would carry no load.
pub const CRACK_REFERENCE_MM: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelerometerSpec {
    pub name: String,
    pub x: String,
    pub y: String,
    pub z: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    pub name: String,
    pub from: String,
    pub to: String,
    pub length_m: f64,
}

/// Panel description as read from a TOML key-value file.
///
/// Node addresses are strings: `"plate:<col>:<row>"` for skin nodes and
/// `"stiffener:<line>:<col>"` for stiffener nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    pub columns: usize,
    pub rows: usize,
    pub plate_node_mass_kg: f64,
    pub plate_spring_n_per_m: f64,
    /// Ground spring at every node of the first and last column.
    pub edge_spring_n_per_m: f64,
    /// Ground spring at every node of the first and last row.
    pub side_spring_n_per_m: f64,
    /// Amplitude of the fixed sinusoidal mass pattern that breaks the grid's
    /// mirror symmetries. 0 gives a uniform panel.
    pub mass_variation: f64,
    pub stiffener_rows: Vec<usize>,
    pub stiffener_node_mass_kg: f64,
    pub stiffener_spring_n_per_m: f64,
    pub rivet_stiffness_n_per_m: f64,
    pub damping_ratio: f64,
    pub n_modes: usize,
    pub force_node: String,
    pub accelerometers: Vec<AccelerometerSpec>,
    pub strain_gauges: Vec<GaugeSpec>,
}

impl Default for PanelConfig {
    fn default() -> Self {
        let acc = |name: &str, x: &str, y: &str, z: &str| AccelerometerSpec {
            name: name.into(),
            x: x.into(),
            y: y.into(),
            z: z.into(),
        };
        let gauge = |name: &str, from: &str, to: &str, length_m: f64| GaugeSpec {
            name: name.into(),
            from: from.into(),
            to: to.into(),
            length_m,
        };
        Self {
            columns: 17,
            rows: 5,
            plate_node_mass_kg: 0.05,
            plate_spring_n_per_m: 8.0e5,
            edge_spring_n_per_m: 4.0e5,
            side_spring_n_per_m: 1.0e5,
            mass_variation: 0.15,
            stiffener_rows: vec![1, 3],
            stiffener_node_mass_kg: 0.03,
            stiffener_spring_n_per_m: 4.0e6,
            rivet_stiffness_n_per_m: 6.0e5,
            damping_ratio: 0.01,
            n_modes: 30,
            force_node: "plate:5:2".into(),
            accelerometers: vec![
                acc("A1", "plate:2:0", "plate:2:1", "stiffener:0:2"),
                acc("A2", "plate:7:4", "plate:7:3", "stiffener:1:7"),
                acc("A3", "plate:12:2", "plate:11:1", "stiffener:0:11"),
                acc("A4", "plate:15:4", "plate:14:3", "stiffener:1:14"),
            ],
            strain_gauges: vec![
                gauge("G1", "plate:4:1", "plate:4:2", 0.05),
                gauge("G2", "plate:9:3", "plate:9:2", 0.05),
                gauge("G3", "plate:13:0", "plate:13:1", 0.05),
                gauge("G4", "stiffener:0:5", "stiffener:1:5", 0.1),
            ],
        }
    }
}

impl PanelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("panel config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read panel config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("panel config serializes")
    }

    fn plate_dof(&self, col: usize, row: usize) -> usize {
        row * self.columns + col
    }

    fn stiffener_dof(&self, line: usize, col: usize) -> usize {
        self.columns * self.rows + line * self.columns + col
    }

    fn n_dof(&self) -> usize {
        self.columns * (self.rows + self.stiffener_rows.len())
    }

    /// Resolves a node address to its DOF index.
    pub fn resolve_node(&self, address: &str) -> Result<usize> {
        let bad = || Error::Config(format!("bad node address {address:?}"));
        let mut parts = address.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let a: usize = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let b: usize = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        if parts.next().is_some() {
            return Err(bad());
        }
        match kind.trim() {
            "plate" => {
                if a >= self.columns || b >= self.rows {
                    return Err(Error::Config(format!(
                        "node {address:?} lies outside the {}x{} skin grid",
                        self.columns, self.rows
                    )));
                }
                Ok(self.plate_dof(a, b))
            }
            "stiffener" => {
                if a >= self.stiffener_rows.len() || b >= self.columns {
                    return Err(Error::Config(format!(
                        "node {address:?} references an absent stiffener node"
                    )));
                }
                Ok(self.stiffener_dof(a, b))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelChannel {
    pub dof: usize,
    /// Unit name and axis, e.g. `"A1.z"`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainChannel {
    pub dof_a: usize,
    pub dof_b: usize,
    pub gauge_length_m: f64,
    pub label: String,
}

/// Measurement layout: tri-axial accelerometer channels, uniaxial strain
/// gauges and the excitation point.
///
/// The surrogate only carries transverse motion, so the three axis channels
/// of one accelerometer unit sit on three neighbouring DOFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub accel_channels: Vec<AccelChannel>,
    pub strain_channels: Vec<StrainChannel>,
    pub force_dof: usize,
}

impl SensorLayout {
    pub fn n_channels(&self) -> usize {
        self.accel_channels.len() + self.strain_channels.len()
    }

    pub fn channel_kinds(&self) -> Vec<ChannelKind> {
        let mut kinds = vec![ChannelKind::Accelerance; self.accel_channels.len()];
        kinds.extend(std::iter::repeat_n(ChannelKind::Strain, self.strain_channels.len()));
        kinds
    }

    pub fn labels(&self) -> Vec<String> {
        self.accel_channels
            .iter()
            .map(|c| c.label.clone())
            .chain(self.strain_channels.iter().map(|c| c.label.clone()))
            .collect()
    }

    pub fn validate(&self, n_dof: usize) -> Result<()> {
        if self.accel_channels.len() != N_ACCEL_CHANNELS
            || self.strain_channels.len() != N_STRAIN_CHANNELS
        {
            return Err(Error::Config(format!(
                "sensor layout needs {N_ACCEL_CHANNELS} accelerometer and {N_STRAIN_CHANNELS} strain channels, got {} and {}",
                self.accel_channels.len(),
                self.strain_channels.len()
            )));
        }
        let dofs = self
            .accel_channels
            .iter()
            .map(|c| c.dof)
            .chain(self.strain_channels.iter().flat_map(|c| [c.dof_a, c.dof_b]))
            .chain(std::iter::once(self.force_dof));
        for dof in dofs {
            if dof >= n_dof {
                return Err(Error::Config(format!(
                    "sensor references dof {dof} but the model has {n_dof}"
                )));
            }
        }
        for c in &self.strain_channels {
            if !(c.gauge_length_m > 0.0) {
                return Err(Error::Config(format!(
                    "gauge {} has non-positive length",
                    c.label
                )));
            }
            if c.dof_a == c.dof_b {
                return Err(Error::Config(format!("gauge {} spans one dof", c.label)));
            }
        }
        Ok(())
    }
}

/// One rivet joint between a skin node and a stiffener node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RivetJoint {
    pub plate_dof: usize,
    pub stiffener_dof: usize,
    pub stiffness_n_per_m: f64,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelModel {
    pub n_dof: usize,
    pub mass_matrix: Matrix,
    pub stiffness_matrix: Matrix,
    pub rivet_map: Vec<RivetJoint>,
    pub damping_ratio: f64,
    pub sensor_layout: SensorLayout,
    pub n_modes: usize,
}

fn stamp_spring(k: &mut Matrix, a: usize, b: usize, stiffness: f64) {
    k[(a, a)] += stiffness;
    k[(b, b)] += stiffness;
    k[(a, b)] -= stiffness;
    k[(b, a)] -= stiffness;
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

/// Assembles the surrogate panel. Deterministic in `config`.
pub fn build_panel(config: &PanelConfig) -> Result<PanelModel> {
    check_positive("plate_node_mass_kg", config.plate_node_mass_kg)?;
    check_positive("stiffener_node_mass_kg", config.stiffener_node_mass_kg)?;
    check_positive("plate_spring_n_per_m", config.plate_spring_n_per_m)?;
    check_positive("stiffener_spring_n_per_m", config.stiffener_spring_n_per_m)?;
    check_positive("rivet_stiffness_n_per_m", config.rivet_stiffness_n_per_m)?;
    check_positive("edge_spring_n_per_m", config.edge_spring_n_per_m)?;
    if !(config.side_spring_n_per_m >= 0.0) {
        return Err(Error::Config("side_spring_n_per_m must be non-negative".into()));
    }
    if !(0.0..1.0).contains(&config.mass_variation) {
        return Err(Error::Config("mass_variation must lie in [0, 1)".into()));
    }
    if config.columns < 2 || config.rows < 2 {
        return Err(Error::Config("skin grid needs at least 2x2 nodes".into()));
    }
    let n_rivets = config.columns * config.stiffener_rows.len();
    if n_rivets != N_RIVETS {
        return Err(Error::Config(format!(
            "panel must carry exactly {N_RIVETS} rivet sites, config gives {n_rivets}"
        )));
    }
    let mut seen_rows = config.stiffener_rows.clone();
    seen_rows.sort_unstable();
    seen_rows.dedup();
    if seen_rows.len() != config.stiffener_rows.len()
        || seen_rows.iter().any(|&r| r >= config.rows)
    {
        return Err(Error::Config("stiffener rows must be distinct skin rows".into()));
    }
    if !(config.damping_ratio > 0.0 && config.damping_ratio < 0.2) {
        return Err(Error::Config(format!(
            "damping_ratio must lie in (0, 0.2), got {}",
            config.damping_ratio
        )));
    }

    let n_dof = config.n_dof();
    if config.n_modes == 0 || config.n_modes > n_dof {
        return Err(Error::Config(format!(
            "n_modes must lie in 1..={n_dof}, got {}",
            config.n_modes
        )));
    }

    let mut mass = vec![0.0; n_dof];
    let mut k = Matrix::zeros(n_dof, n_dof);
    let v = config.mass_variation;
    for row in 0..config.rows {
        for col in 0..config.columns {
            let phase = 1.7 * col as f64 + 2.3 * row as f64 + 0.5;
            mass[config.plate_dof(col, row)] = config.plate_node_mass_kg * (1.0 + v * phase.sin());
        }
    }
    for row in 0..config.rows {
        for col in 0..config.columns {
            let here = config.plate_dof(col, row);
            if col + 1 < config.columns {
                stamp_spring(&mut k, here, config.plate_dof(col + 1, row), config.plate_spring_n_per_m);
            }
            if row + 1 < config.rows {
                stamp_spring(&mut k, here, config.plate_dof(col, row + 1), config.plate_spring_n_per_m);
            }
        }
    }
    for row in 0..config.rows {
        for col in [0, config.columns - 1] {
            let d = config.plate_dof(col, row);
            k[(d, d)] += config.edge_spring_n_per_m;
        }
    }
    for col in 0..config.columns {
        for row in [0, config.rows - 1] {
            let d = config.plate_dof(col, row);
            k[(d, d)] += config.side_spring_n_per_m;
        }
    }

    let mut rivet_map = Vec::with_capacity(N_RIVETS);
    for (line, &row) in config.stiffener_rows.iter().enumerate() {
        for col in 0..config.columns {
            let s = config.stiffener_dof(line, col);
            let phase = 1.3 * col as f64 + line as f64;
            mass[s] = config.stiffener_node_mass_kg * (1.0 + 0.5 * v * phase.cos());
            if col + 1 < config.columns {
                stamp_spring(&mut k, s, config.stiffener_dof(line, col + 1), config.stiffener_spring_n_per_m);
            }
            let p = config.plate_dof(col, row);
            stamp_spring(&mut k, p, s, config.rivet_stiffness_n_per_m);
            rivet_map.push(RivetJoint {
                plate_dof: p,
                stiffener_dof: s,
                stiffness_n_per_m: config.rivet_stiffness_n_per_m,
                line,
                column: col,
            });
        }
    }

    let mut accel_channels = Vec::with_capacity(N_ACCEL_CHANNELS);
    for unit in &config.accelerometers {
        for (axis, address) in [("x", &unit.x), ("y", &unit.y), ("z", &unit.z)] {
            accel_channels.push(AccelChannel {
                dof: config.resolve_node(address)?,
                label: format!("{}.{axis}", unit.name),
            });
        }
    }
    let strain_channels = config
        .strain_gauges
        .iter()
        .map(|g| {
            Ok(StrainChannel {
                dof_a: config.resolve_node(&g.from)?,
                dof_b: config.resolve_node(&g.to)?,
                gauge_length_m: g.length_m,
                label: g.name.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sensor_layout = SensorLayout {
        accel_channels,
        strain_channels,
        force_dof: config.resolve_node(&config.force_node)?,
    };

    let model = PanelModel {
        n_dof,
        mass_matrix: Matrix::from_diagonal(&mass),
        stiffness_matrix: k,
        rivet_map,
        damping_ratio: config.damping_ratio,
        sensor_layout,
        n_modes: config.n_modes,
    };
    model.validate()?;
    Ok(model)
}

impl PanelModel {
    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<()> {
        let m = &self.mass_matrix;
        let k = &self.stiffness_matrix;
        if m.rows() != self.n_dof || !m.is_square() || k.rows() != self.n_dof || !k.is_square() {
            return Err(Error::Dimension("mass/stiffness size differs from n_dof".into()));
        }
        if !m.is_symmetric(1e-12) || !k.is_symmetric(1e-12) {
            return Err(Error::InvalidInput("mass and stiffness must be symmetric".into()));
        }
        cholesky(m)?;
        if self.rivet_map.len() != N_RIVETS {
            return Err(Error::InvalidInput(format!(
                "rivet map has {} entries, expected {N_RIVETS}",
                self.rivet_map.len()
            )));
        }
        let mut pairs: Vec<(usize, usize)> = self
            .rivet_map
            .iter()
            .map(|r| (r.plate_dof.min(r.stiffener_dof), r.plate_dof.max(r.stiffener_dof)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.len() != N_RIVETS || pairs.iter().any(|&(a, b)| a == b || b >= self.n_dof) {
            return Err(Error::InvalidInput("rivet dof pairs must be distinct and valid".into()));
        }
        if !(self.damping_ratio > 0.0 && self.damping_ratio < 0.2) {
            return Err(Error::InvalidInput("damping ratio outside (0, 0.2)".into()));
        }
        self.sensor_layout.validate(self.n_dof)
    }

    /// Rivets on the same stiffener line in neighbouring columns.
    pub fn rivets_adjacent(&self, a: usize, b: usize) -> bool {
        match (self.rivet_map.get(a), self.rivet_map.get(b)) {
            (Some(x), Some(y)) => x.line == y.line && x.column.abs_diff(y.column) == 1,
            _ => false,
        }
    }

    /// Adjacency table for every rivet, used by the evaluation metrics.
    pub fn rivet_neighbours(&self) -> Vec<Vec<usize>> {
        (0..self.rivet_map.len())
            .map(|a| {
                (0..self.rivet_map.len())
                    .filter(|&b| self.rivets_adjacent(a, b))
                    .collect()
            })
            .collect()
    }

    pub fn modal_solve(&self, n_modes: usize) -> Result<ModalBasis> {
        ModalBasis::solve(
            &self.mass_matrix,
            &self.stiffness_matrix,
            n_modes,
            self.damping_ratio,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageKind {
    Healthy,
    Crack,
    HoleExpansion,
    AddedMass,
}

impl DamageKind {
    pub const DAMAGED: [DamageKind; 3] = [
        DamageKind::Crack,
        DamageKind::HoleExpansion,
        DamageKind::AddedMass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DamageKind::Healthy => "healthy",
            DamageKind::Crack => "crack",
            DamageKind::HoleExpansion => "hole_expansion",
            DamageKind::AddedMass => "added_mass",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            DamageKind::Healthy => "",
            DamageKind::Crack => "mm",
            DamageKind::HoleExpansion => "fraction",
            DamageKind::AddedMass => "kg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "healthy" => Some(DamageKind::Healthy),
            "crack" => Some(DamageKind::Crack),
            "hole_expansion" | "hole" => Some(DamageKind::HoleExpansion),
            "added_mass" | "mass" => Some(DamageKind::AddedMass),
            _ => None,
        }
    }
}

impl std::fmt::Display for DamageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Damage applied at one or more rivet sites.
///
/// Severity units: crack length in mm, stiffness-loss fraction for hole
/// expansion, kg for added mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageScenario {
    pub kind: DamageKind,
    pub rivets: Vec<usize>,
    pub severity: Vec<f64>,
}

impl DamageScenario {
    pub fn healthy() -> Self {
        Self {
            kind: DamageKind::Healthy,
            rivets: Vec::new(),
            severity: Vec::new(),
        }
    }

    pub fn single(kind: DamageKind, rivet: usize, severity: f64) -> Self {
        Self {
            kind,
            rivets: vec![rivet],
            severity: vec![severity],
        }
    }

    pub fn crack(rivet: usize, length_mm: f64) -> Self {
        Self::single(DamageKind::Crack, rivet, length_mm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rivets.len() != self.severity.len() {
            return Err(Error::InvalidInput(
                "severity list length must equal rivet list length".into(),
            ));
        }
        if self.kind == DamageKind::Healthy && !self.rivets.is_empty() {
            return Err(Error::InvalidInput("healthy scenario lists rivets".into()));
        }
        for (&r, &s) in self.rivets.iter().zip(&self.severity) {
            if r >= N_RIVETS {
                return Err(Error::InvalidInput(format!(
                    "rivet index {r} out of range 0..{N_RIVETS}"
                )));
            }
            if !s.is_finite() {
                return Err(Error::InvalidInput("severity must be finite".into()));
            }
            let ok = match self.kind {
                DamageKind::Healthy => true,
                DamageKind::Crack => (0.0..CRACK_REFERENCE_MM).contains(&s),
                DamageKind::HoleExpansion => (0.0..1.0).contains(&s),
                DamageKind::AddedMass => s >= 0.0,
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "{} severity {s} out of range at rivet {r}",
                    self.kind
                )));
            }
        }
        Ok(())
    }
}

/// Returns a damaged copy of `model`. Severity 0 leaves the model
/// bit-identical.
pub fn apply_damage(model: &PanelModel, scenario: &DamageScenario) -> Result<PanelModel> {
    scenario.validate()?;
    let mut out = model.clone();
    for (&r, &s) in scenario.rivets.iter().zip(&scenario.severity) {
        if s == 0.0 {
            continue;
        }
        let joint = &mut out.rivet_map[r];
        let (a, b) = (joint.plate_dof, joint.stiffener_dof);
        match scenario.kind {
            DamageKind::Healthy => {}
            DamageKind::Crack | DamageKind::HoleExpansion => {
                let factor = if scenario.kind == DamageKind::Crack {
                    1.0 - s / CRACK_REFERENCE_MM
                } else {
                    1.0 - s
                };
                let old = joint.stiffness_n_per_m;
                let new = old * factor;
                joint.stiffness_n_per_m = new;
                stamp_spring(&mut out.stiffness_matrix, a, b, new - old);
            }
            DamageKind::AddedMass => {
                out.mass_matrix[(a, a)] += 0.5 * s;
                out.mass_matrix[(b, b)] += 0.5 * s;
            }
        }
    }
    Ok(out)
}

/// Lowest modes of the pencil `(K, M)`, mass-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    /// Ascending, Hz.
    pub natural_frequencies_hz: Vec<f64>,
    /// `ω_r²` in rad²/s², ascending.
    pub eigenvalues: Vec<f64>,
    /// `n_dof x n_modes`, column `r` is mode `r`.
    pub mode_shapes: Matrix,
    pub damping_ratio: f64,
}

impl ModalBasis {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Solves `K φ = λ M φ` through the Cholesky-reduced standard problem
    /// `L⁻¹ K L⁻ᵀ y = λ y`, `φ = L⁻ᵀ y`.
    pub fn solve(mass: &Matrix, stiffness: &Matrix, n_modes: usize, damping_ratio: f64) -> Result<Self> {
        let n = mass.rows();
        if !mass.is_square() || stiffness.rows() != n || !stiffness.is_square() {
            return Err(Error::Dimension("mass and stiffness must be square and equal-sized".into()));
        }
        if n_modes == 0 || n_modes > n {
            return Err(Error::InvalidInput(format!(
                "n_modes must lie in 1..={n}, got {n_modes}"
            )));
        }
        let l = cholesky(mass)?;
        let x = forward_substitute(&l, stiffness);
        let reduced = forward_substitute(&l, &x.transpose());
        let eig = jacobi_eigen(&reduced)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]));
        let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);

        let mut eigenvalues = Vec::with_capacity(n_modes);
        let mut shapes = Matrix::zeros(n, n_modes);
        for (col, &idx) in order.iter().take(n_modes).enumerate() {
            let mut lam = eig.values[idx];
            if lam < 0.0 {
                if lam < -1e-10 * scale {
                    return Err(Error::InvalidInput(format!(
                        "stiffness matrix is indefinite (eigenvalue {lam:e})"
                    )));
                }
                lam = 0.0;
            }
            eigenvalues.push(lam);
            let phi = back_substitute_transpose(&l, eig.vectors_t.row(idx));
            let sign = sign_of_largest(&phi);
            for (i, v) in phi.iter().enumerate() {
                shapes[(i, col)] = sign * v;
            }
        }
        let natural_frequencies_hz = eigenvalues
            .iter()
            .map(|l| l.sqrt() / (2.0 * std::f64::consts::PI))
            .collect();
        Ok(Self {
            natural_frequencies_hz,
            eigenvalues,
            mode_shapes: shapes,
            damping_ratio,
        })
    }

    /// Receptance `H_qp(ω)` by modal superposition.
    pub fn receptance(&self, q: usize, p: usize, omega: f64) -> Complex64 {
        let zeta = self.damping_ratio;
        (0..self.n_modes())
            .map(|r| {
                let wr2 = self.eigenvalues[r];
                let wr = wr2.sqrt();
                let num = self.mode_shapes[(q, r)] * self.mode_shapes[(p, r)];
                num / Complex64::new(wr2 - omega * omega, 2.0 * zeta * wr * omega)
            })
            .sum()
    }
}

fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `L⁻¹ B` for lower-triangular `L`.
fn forward_substitute(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            if lik == 0.0 {
                continue;
            }
            for j in 0..b.cols() {
                let v = x[(k, j)];
                x[(i, j)] -= lik * v;
            }
        }
        let d = l[(i, i)];
        for v in x.row_mut(i) {
            *v /= d;
        }
    }
    x
}

/// `L⁻ᵀ y` for lower-triangular `L`.
fn back_substitute_transpose(l: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut x = y.to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// FRFs at the layout's channels for unit force at `layout.force_dof`.
///
/// Accelerance channels return `-ω² H_qp`; strain channels return
/// `(H_q1,p - H_q2,p) / gauge_length`.
pub fn analytic_frf(basis: &ModalBasis, layout: &SensorLayout, grid: &FrequencyGrid) -> Result<FrfMatrix> {
    if basis.n_modes() == 0 {
        return Err(Error::InvalidInput("empty modal basis".into()));
    }
    let n_dof = basis.mode_shapes.rows();
    layout.validate_dofs(n_dof)?;
    let p = layout.force_dof;
    let shapes = &basis.mode_shapes;
    let n_modes = basis.n_modes();

    // Modal participation of each channel: numerator of every modal term.
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(layout.n_channels());
    for ch in &layout.accel_channels {
        coeffs.push((0..n_modes).map(|r| shapes[(ch.dof, r)] * shapes[(p, r)]).collect());
    }
    for ch in &layout.strain_channels {
        coeffs.push(
            (0..n_modes)
                .map(|r| (shapes[(ch.dof_a, r)] - shapes[(ch.dof_b, r)]) * shapes[(p, r)] / ch.gauge_length_m)
                .collect(),
        );
    }

    let freqs = grid.frequencies();
    let n_bins = freqs.len();
    let n_accel = layout.accel_channels.len();
    let zeta = basis.damping_ratio;
    let omega_r: Vec<f64> = basis.eigenvalues.iter().map(|l| l.sqrt()).collect();
    let mut values = vec![Complex64::new(0.0, 0.0); coeffs.len() * n_bins];
    let mut inv_den = vec![Complex64::new(0.0, 0.0); n_modes];
    for (k, f) in freqs.iter().enumerate() {
        let w = 2.0 * std::f64::consts::PI * f;
        for r in 0..n_modes {
            inv_den[r] = Complex64::new(basis.eigenvalues[r] - w * w, 2.0 * zeta * omega_r[r] * w).inv();
        }
        for (c, coeff) in coeffs.iter().enumerate() {
            let h: Complex64 = coeff.iter().zip(&inv_den).map(|(a, d)| d * a).sum();
            values[c * n_bins + k] = if c < n_accel { h * (-w * w) } else { h };
        }
    }
    FrfMatrix::new(values, freqs, layout.channel_kinds(), 0)
}

impl SensorLayout {
    fn validate_dofs(&self, n_dof: usize) -> Result<()> {
        let bad = self
            .accel_channels
            .iter()
            .map(|c| c.dof)
            .chain(self.strain_channels.iter().flat_map(|c| [c.dof_a, c.dof_b]))
            .chain(std::iter::once(self.force_dof))
            .any(|d| d >= n_dof);
        if bad {
            Err(Error::Dimension(format!("sensor dof outside 0..{n_dof}")))
        } else {
            Ok(())
        }
    }
}
