//! Principal component analysis of log-magnitude FRF fingerprints.
//!
//! Each channel's feature row is `log10 |H(f_k)|` for every bin except DC
//! (where accelerance vanishes). Bases are fitted per channel by default:
//! 7 components for each of the 12 accelerance channels and 4 for each of
//! the 4 strain channels give the 84 + 16 = 100 element fingerprint.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi_eigen, Matrix};
use crate::signal::{ChannelKind, FrfMatrix};

/// Smallest magnitude admitted into the log transform.
pub const LOG_FLOOR: f64 = 1e-300;
/// Relative eigenvalue below which a direction is treated as null.
const NULL_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`; largest-magnitude entry positive.
    pub vectors: Matrix,
}

/// Sample covariance with divisor `n - 1`.
pub fn covariance(data: &Matrix) -> Result<Matrix> {
    let n = data.rows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let p = data.cols();
    let mean = column_means(data);
    let mut centered = data.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = Matrix::zeros(p, p);
    for i in 0..n {
        let row = centered.row(i);
        for a in 0..p {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..p {
                cov[(a, b)] += ra * row[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

fn column_means(data: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; data.cols()];
    for i in 0..data.rows() {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    let n = data.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations, eigenvalues
/// sorted descending.
pub fn eig_sym(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::Dimension("eig_sym needs a square matrix".into()));
    }
    if !a.is_symmetric(1e-10) {
        return Err(Error::InvalidInput("eig_sym needs a symmetric matrix".into()));
    }
    let raw = jacobi_eigen(a)?;
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw.values[y].total_cmp(&raw.values[x]));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &idx) in order.iter().enumerate() {
        values.push(raw.values[idx]);
        let v = raw.vectors_t.row(idx);
        let sign = largest_entry_sign(v);
        for (i, x) in v.iter().enumerate() {
            vectors[(i, col)] = sign * x;
        }
    }
    Ok(SymEigen { values, vectors })
}

fn largest_entry_sign(v: &[f64]) -> f64 {
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

/// Mean, leading components and variance spectrum of one data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxes {
    pub mean: Vec<f64>,
    /// `n_features x n_keep`, orthonormal columns.
    pub components: Matrix,
    /// Every variance the fit resolved, descending, clamped at 0.
    pub eigenvalues: Vec<f64>,
    pub degenerate: bool,
}

impl PrincipalAxes {
    /// Fits on `data` (`n_samples x n_features`).
    ///
    /// When features outnumber samples the `n x n` Gram matrix is
    /// decomposed instead of the `p x p` covariance; both share their
    /// nonzero spectrum and the components follow as `Xᵀu / √((n-1)μ)`.
    pub fn fit(data: &Matrix, n_keep: usize) -> Result<Self> {
        let n = data.rows();
        let p = data.cols();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "PCA needs at least 2 samples, got {n}"
            )));
        }
        if n_keep == 0 || n_keep > p {
            return Err(Error::InvalidInput(format!(
                "n_keep must lie in 1..={p}, got {n_keep}"
            )));
        }
        let mean = column_means(data);
        let mut centered = data.clone();
        for i in 0..n {
            for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
                *v -= m;
            }
        }

        let (components, eigenvalues) = if p <= n || n_keep >= n {
            let eig = eig_sym(&covariance(data)?)?;
            let mut comps = Matrix::zeros(p, n_keep);
            for i in 0..p {
                for j in 0..n_keep {
                    comps[(i, j)] = eig.vectors[(i, j)];
                }
            }
            (comps, eig.values)
        } else {
            gram_route(&centered, n_keep)?
        };
        let eigenvalues: Vec<f64> = eigenvalues.into_iter().map(|v| v.max(0.0)).collect();
        let top = eigenvalues.first().copied().unwrap_or(0.0);
        let degenerate = top <= 0.0
            || eigenvalues
                .iter()
                .take(n_keep)
                .any(|&v| v <= NULL_EIGENVALUE * top);
        Ok(Self {
            mean,
            components,
            eigenvalues,
            degenerate,
        })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn n_keep(&self) -> usize {
        self.components.cols()
    }

    /// Scores of one sample: `(x - mean)ᵀ components`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension(format!(
                "sample has {} features, basis expects {}",
                x.len(),
                self.n_features()
            )));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = vec![0.0; self.n_keep()];
        for (i, c) in centered.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.components.row(i)) {
                *o += c * w;
            }
        }
        Ok(out)
    }

    /// `components · scores`, in centered coordinates.
    pub fn reconstruct_centered(&self, scores: &[f64]) -> Vec<f64> {
        (0..self.n_features())
            .map(|i| dot(self.components.row(i), scores))
            .collect()
    }

    pub fn variance_explained(&self, k: usize) -> Result<f64> {
        variance_fraction(&self.eigenvalues, k)
    }
}

fn variance_fraction(eigenvalues: &[f64], k: usize) -> Result<f64> {
    if k > eigenvalues.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the {} stored eigenvalues",
            eigenvalues.len()
        )));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Ok(1.0);
    }
    if k == eigenvalues.len() {
        return Ok(1.0);
    }
    let head: f64 = eigenvalues[..k].iter().sum();
    Ok((head / total).clamp(0.0, 1.0))
}

fn gram_route(centered: &Matrix, n_keep: usize) -> Result<(Matrix, Vec<f64>)> {
    let n = centered.rows();
    let p = centered.cols();
    let denom = (n - 1) as f64;
    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(centered.row(i), centered.row(j)) / denom;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = eig_sym(&gram)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);

    // Columns accumulated as rows of `basis_t` for contiguous access.
    let mut basis_t: Vec<Vec<f64>> = Vec::with_capacity(n_keep);
    for j in 0..n_keep {
        let mu = eig.values[j];
        let mut v = vec![0.0; p];
        if mu > NULL_EIGENVALUE * top && mu > 0.0 {
            let scale = 1.0 / (denom * mu).sqrt();
            for i in 0..n {
                let u = eig.vectors[(i, j)] * scale;
                if u == 0.0 {
                    continue;
                }
                for (acc, x) in v.iter_mut().zip(centered.row(i)) {
                    *acc += u * x;
                }
            }
        }
        basis_t.push(v);
    }
    orthonormalize(&mut basis_t);
    let mut comps = Matrix::zeros(p, n_keep);
    for (j, v) in basis_t.iter().enumerate() {
        let sign = largest_entry_sign(v);
        for (i, x) in v.iter().enumerate() {
            comps[(i, j)] = sign * x;
        }
    }
    Ok((comps, eig.values))
}

/// Modified Gram-Schmidt; null vectors are completed from the canonical
/// basis.
fn orthonormalize(vectors: &mut [Vec<f64>]) {
    let p = vectors.first().map_or(0, Vec::len);
    let mut next_axis = 0;
    for j in 0..vectors.len() {
        let (done, rest) = vectors.split_at_mut(j);
        let v = &mut rest[0];
        let mut attempts = 0;
        loop {
            for u in done.iter() {
                let d = dot(u, v);
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= d * b;
                }
            }
            let norm = dot(v, v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                break;
            }
            v.iter_mut().for_each(|x| *x = 0.0);
            v[next_axis % p] = 1.0;
            next_axis += 1;
            attempts += 1;
            if attempts > p {
                break;
            }
        }
    }
}

/// How channels of a block are grouped for decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaLayout {
    /// One basis per channel, `n_keep` components each.
    PerChannel,
    /// One basis over the concatenated block, `n_keep` components total.
    Stacked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaGroup {
    /// Positions within the block, not global channel indices.
    pub channels: Vec<usize>,
    pub axes: PrincipalAxes,
}

/// Fitted basis for one channel block.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub block: ChannelKind,
    pub layout: PcaLayout,
    pub n_channels: usize,
    /// Feature length per channel (`n_bins - 1`).
    pub bins_per_channel: usize,
    pub groups: Vec<PcaGroup>,
    pub basis_id: String,
}

impl PcaBasis {
    pub fn from_groups(
        block: ChannelKind,
        layout: PcaLayout,
        n_channels: usize,
        bins_per_channel: usize,
        groups: Vec<PcaGroup>,
    ) -> Self {
        let mut basis = Self {
            block,
            layout,
            n_channels,
            bins_per_channel,
            groups,
            basis_id: String::new(),
        };
        basis.basis_id = basis.compute_id();
        basis
    }

    /// SHA-256 over layout metadata, means, components and eigenvalues.
    pub fn compute_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"frfnet-pca-v1\0");
        h.update(self.block.as_str().as_bytes());
        h.update([0u8]);
        h.update(match self.layout {
            PcaLayout::PerChannel => b"per_channel".as_slice(),
            PcaLayout::Stacked => b"stacked".as_slice(),
        });
        h.update((self.n_channels as u64).to_le_bytes());
        h.update((self.bins_per_channel as u64).to_le_bytes());
        for g in &self.groups {
            h.update((g.channels.len() as u64).to_le_bytes());
            for &c in &g.channels {
                h.update((c as u64).to_le_bytes());
            }
            h.update((g.axes.n_keep() as u64).to_le_bytes());
            for v in g.axes.mean.iter().chain(g.axes.components.as_slice()).chain(&g.axes.eigenvalues) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn n_components(&self) -> usize {
        self.groups.iter().map(|g| g.axes.n_keep()).sum()
    }

    pub fn degenerate(&self) -> bool {
        self.groups.iter().any(|g| g.axes.degenerate)
    }

    /// Projects one sample given per-channel log-magnitude rows of this
    /// block.
    pub fn project_channels(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rows.len() != self.n_channels {
            return Err(Error::Dimension(format!(
                "{} channels supplied to a {}-channel {} basis",
                rows.len(),
                self.n_channels,
                self.block.as_str()
            )));
        }
        let mut out = Vec::with_capacity(self.n_components());
        for g in &self.groups {
            let x: Vec<f64> = g.channels.iter().flat_map(|&c| rows[c].iter().copied()).collect();
            out.extend(g.axes.project(&x)?);
        }
        Ok(out)
    }

    /// Fraction of total variance in the first `k` components of each
    /// group, aggregated over groups.
    pub fn variance_explained(&self, k: usize) -> Result<f64> {
        let mut head = 0.0;
        let mut total = 0.0;
        for g in &self.groups {
            if k > g.axes.eigenvalues.len() {
                return Err(Error::InvalidInput(format!(
                    "k = {k} exceeds the {} stored eigenvalues",
                    g.axes.eigenvalues.len()
                )));
            }
            head += g.axes.eigenvalues[..k].iter().sum::<f64>();
            total += g.axes.eigenvalues.iter().sum::<f64>();
        }
        if total <= 0.0 {
            return Ok(1.0);
        }
        Ok((head / total).clamp(0.0, 1.0))
    }

    /// Per-group variance fractions.
    pub fn group_variance_explained(&self, k: usize) -> Result<Vec<f64>> {
        self.groups.iter().map(|g| g.axes.variance_explained(k)).collect()
    }
}

/// `variance_explained` for a whole basis; `k` counts components per group.
pub fn variance_explained(basis: &PcaBasis, k: usize) -> Result<f64> {
    basis.variance_explained(k)
}

/// `log10 |H|` of one channel, DC bin excluded.
pub fn log_magnitude(frf: &FrfMatrix, channel: usize) -> Vec<f64> {
    frf.channel(channel)[1..]
        .iter()
        .map(|h| h.norm().max(LOG_FLOOR).log10())
        .collect()
}

/// Log-magnitude rows for every channel of `block`, in storage order.
pub fn block_features(frf: &FrfMatrix, block: ChannelKind) -> Vec<Vec<f64>> {
    frf.channels_of(block)
        .into_iter()
        .map(|c| log_magnitude(frf, c))
        .collect()
}

/// Fits a block basis from FRFs.
pub fn fit_basis(
    training: &[FrfMatrix],
    block: ChannelKind,
    n_keep: usize,
    layout: PcaLayout,
) -> Result<PcaBasis> {
    let samples: Vec<Vec<Vec<f64>>> = training.iter().map(|f| block_features(f, block)).collect();
    fit_basis_from_features(&samples, block, n_keep, layout)
}

/// Fits a block basis from precomputed features, indexed
/// `[sample][channel][bin]`.
pub fn fit_basis_from_features(
    samples: &[Vec<Vec<f64>>],
    block: ChannelKind,
    n_keep: usize,
    layout: PcaLayout,
) -> Result<PcaBasis> {
    let n_channels = samples.first().map_or(0, Vec::len);
    let bins = samples.first().and_then(|s| s.first()).map_or(0, Vec::len);
    if samples
        .iter()
        .any(|s| s.len() != n_channels || s.iter().any(|c| c.len() != bins))
    {
        return Err(Error::Dimension("training FRFs differ in shape".into()));
    }
    fit_basis_with(samples.len(), n_channels, bins, block, n_keep, layout, |s, c| {
        samples[s][c].as_slice()
    })
}

/// Fits a block basis where `row(sample, channel)` yields that channel's
/// feature row (length `bins`).
pub fn fit_basis_with<'a>(
    n_samples: usize,
    n_channels: usize,
    bins: usize,
    block: ChannelKind,
    n_keep: usize,
    layout: PcaLayout,
    row: impl Fn(usize, usize) -> &'a [f64],
) -> Result<PcaBasis> {
    if n_samples < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 training FRFs, got {n_samples}"
        )));
    }
    if n_channels == 0 || bins == 0 {
        return Err(Error::InvalidInput(format!("no {} features", block.as_str())));
    }
    let group_channels: Vec<Vec<usize>> = match layout {
        PcaLayout::PerChannel => (0..n_channels).map(|c| vec![c]).collect(),
        PcaLayout::Stacked => vec![(0..n_channels).collect()],
    };
    let mut groups = Vec::with_capacity(group_channels.len());
    for channels in group_channels {
        let width = channels.len() * bins;
        let mut data = Matrix::zeros(n_samples, width);
        for i in 0..n_samples {
            let dst = data.row_mut(i);
            for (slot, &c) in channels.iter().enumerate() {
                let src = row(i, c);
                if src.len() != bins {
                    return Err(Error::Dimension(format!(
                        "feature row of length {} where {bins} expected",
                        src.len()
                    )));
                }
                dst[slot * bins..(slot + 1) * bins].copy_from_slice(src);
            }
        }
        let axes = PrincipalAxes::fit(&data, n_keep)?;
        groups.push(PcaGroup { channels, axes });
    }
    Ok(PcaBasis::from_groups(block, layout, n_channels, bins, groups))
}

/// Fixed-length damage fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Identifier of the accelerance/strain basis pair.
    pub basis_id: String,
    pub n_accel: usize,
    pub n_strain: usize,
}

pub fn basis_pair_id(accel: &PcaBasis, strain: &PcaBasis) -> String {
    let mut h = Sha256::new();
    h.update(accel.basis_id.as_bytes());
    h.update(b":");
    h.update(strain.basis_id.as_bytes());
    hex::encode(h.finalize())
}

/// `[accelerance projections ‖ strain projections]`.
pub fn project(frf: &FrfMatrix, accel: &PcaBasis, strain: &PcaBasis) -> Result<FeatureVector> {
    if accel.block != ChannelKind::Accelerance || strain.block != ChannelKind::Strain {
        return Err(Error::InvalidInput("basis blocks swapped".into()));
    }
    if frf.n_bins() != accel.bins_per_channel + 1 || frf.n_bins() != strain.bins_per_channel + 1 {
        return Err(Error::Dimension(format!(
            "FRF has {} bins, bases expect {}",
            frf.n_bins(),
            accel.bins_per_channel + 1
        )));
    }
    project_features(
        &block_features(frf, ChannelKind::Accelerance),
        &block_features(frf, ChannelKind::Strain),
        accel,
        strain,
    )
}

pub fn project_features(
    accel_rows: &[Vec<f64>],
    strain_rows: &[Vec<f64>],
    accel: &PcaBasis,
    strain: &PcaBasis,
) -> Result<FeatureVector> {
    let mut values = accel.project_channels(accel_rows)?;
    let n_accel = values.len();
    values.extend(strain.project_channels(strain_rows)?);
    let n_strain = values.len() - n_accel;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("fingerprint has non-finite entries".into()));
    }
    Ok(FeatureVector {
        values,
        basis_id: basis_pair_id(accel, strain),
        n_accel,
        n_strain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_columns_have_zero_covariance() {
        let data = Matrix::from_rows(&[vec![1.0, 5.0], vec![1.0, 5.0], vec![1.0, 5.0]]).unwrap();
        let c = covariance(&data).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_covariance() {
        let data = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let c = covariance(&data).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_sample_rejected() {
        let data = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(covariance(&data).is_err());
    }

    #[test]
    fn diagonal_eigenpairs() {
        let e = eig_sym(&Matrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert_eq!(e.vectors.column(0), vec![0.0, 1.0]);
        assert_eq!(e.vectors.column(1), vec![1.0, 0.0]);
    }

    #[test]
    fn sign_convention() {
        let a = Matrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let e = eig_sym(&a).unwrap();
        for j in 0..2 {
            let col = e.vectors.column(j);
            let big = col.iter().fold(0.0_f64, |m, &v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn variance_fraction_arithmetic() {
        assert_eq!(variance_fraction(&[3.0, 1.0], 1).unwrap(), 0.75);
        assert_eq!(variance_fraction(&[3.0, 1.0], 2).unwrap(), 1.0);
        assert_eq!(variance_fraction(&[0.0, 0.0], 1).unwrap(), 1.0);
        assert!(variance_fraction(&[3.0, 1.0], 3).is_err());
    }

    #[test]
    fn identical_training_set_is_degenerate() {
        let rows = vec![vec![vec![0.5, 1.0, 2.0]]; 4];
        let b = fit_basis_from_features(&rows, ChannelKind::Accelerance, 2, PcaLayout::PerChannel).unwrap();
        assert!(b.degenerate());
        assert!(b.groups[0].axes.eigenvalues.iter().all(|&v| v == 0.0));
        assert_eq!(b.variance_explained(1).unwrap(), 1.0);
    }

    #[test]
    fn gram_route_components_are_orthonormal() {
        // 6 samples, 40 features: forces the dual path.
        let data: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..40).map(|j| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.1 * j as f64 * i as f64).collect())
            .collect();
        let m = Matrix::from_rows(&data).unwrap();
        let axes = PrincipalAxes::fit(&m, 4).unwrap();
        let g = axes.components.transpose().matmul(&axes.components).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - expected).abs() < 1e-10);
            }
        }
        // Same leading variances as the covariance route.
        let cov = eig_sym(&covariance(&m).unwrap()).unwrap();
        for k in 0..4 {
            assert!((axes.eigenvalues[k] - cov.values[k]).abs() < 1e-9 * cov.values[0]);
        }
    }
}
