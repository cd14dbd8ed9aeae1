use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a measurement channel records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Acceleration per unit force.
    Accelerance,
    /// Strain per unit force.
    Strain,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Accelerance => "accelerance",
            ChannelKind::Strain => "strain",
        }
    }
}

/// Uniform frequency grid `f_k = k * f_max / (n_bins - 1)`, `k = 0..n_bins`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_max_hz: f64,
    pub n_bins: usize,
}

impl FrequencyGrid {
    pub fn new(f_max_hz: f64, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidInput(format!(
                "frequency grid needs at least 2 bins, got {n_bins}"
            )));
        }
        if !(f_max_hz > 0.0) || !f_max_hz.is_finite() {
            return Err(Error::InvalidInput(format!(
                "f_max must be positive, got {f_max_hz}"
            )));
        }
        Ok(Self { f_max_hz, n_bins })
    }

    pub fn spacing_hz(&self) -> f64 {
        self.f_max_hz / (self.n_bins - 1) as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let df = self.spacing_hz();
        (0..self.n_bins).map(|k| k as f64 * df).collect()
    }

    /// Length of a time record whose one-sided FFT bins `0..n_bins` coincide
    /// with this grid.
    pub fn record_len(&self) -> usize {
        2 * self.n_bins
    }

    /// Sample interval of such a record.
    pub fn record_dt(&self) -> f64 {
        1.0 / (self.record_len() as f64 * self.spacing_hz())
    }
}

/// Complex FRF samples, channels x frequency bins, stored row-major.
///
/// Channel order is fixed: every accelerance channel precedes every strain
/// channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrfMatrix {
    values: Vec<Complex64>,
    freq_bins: Vec<f64>,
    channel_kinds: Vec<ChannelKind>,
    n_averages: usize,
}

impl FrfMatrix {
    pub fn new(
        values: Vec<Complex64>,
        freq_bins: Vec<f64>,
        channel_kinds: Vec<ChannelKind>,
        n_averages: usize,
    ) -> Result<Self> {
        let n_bins = freq_bins.len();
        if n_bins < 2 {
            return Err(Error::InvalidInput("FRF needs at least 2 bins".into()));
        }
        if channel_kinds.is_empty() {
            return Err(Error::InvalidInput("FRF needs at least one channel".into()));
        }
        if values.len() != channel_kinds.len() * n_bins {
            return Err(Error::Dimension(format!(
                "{} FRF values for {} channels x {} bins",
                values.len(),
                channel_kinds.len(),
                n_bins
            )));
        }
        if channel_kinds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(
                "accelerance channels must precede strain channels".into(),
            ));
        }
        let df = freq_bins[1] - freq_bins[0];
        if !(df > 0.0) {
            return Err(Error::InvalidInput("frequency bins must ascend".into()));
        }
        let scale = freq_bins[n_bins - 1].abs().max(df);
        for (k, f) in freq_bins.iter().enumerate() {
            let expected = freq_bins[0] + k as f64 * df;
            if (f - expected).abs() > 1e-12 * scale.max(1.0) * (k as f64).max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "frequency bins are not uniform at bin {k}"
                )));
            }
        }
        Ok(Self {
            values,
            freq_bins,
            channel_kinds,
            n_averages,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channel_kinds.len()
    }

    pub fn n_bins(&self) -> usize {
        self.freq_bins.len()
    }

    pub fn n_averages(&self) -> usize {
        self.n_averages
    }

    pub fn freq_bins(&self) -> &[f64] {
        &self.freq_bins
    }

    pub fn channel_kinds(&self) -> &[ChannelKind] {
        &self.channel_kinds
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.n_bins();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, channel: usize, bin: usize) -> Complex64 {
        self.values[channel * self.n_bins() + bin]
    }

    /// Indices of the channels of one kind, in storage order.
    pub fn channels_of(&self, kind: ChannelKind) -> Vec<usize> {
        self.channel_kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == kind)
            .map(|(i, _)| i)
            .collect()
    }
}
