//! Excitation, response synthesis and FRF estimation.
//!
//! Time records have length `2 * n_bins` and sample interval
//! `1 / (2 * n_bins * df)`, so the one-sided FFT bins `0..n_bins` of a record
//! land exactly on the FRF grid. The Nyquist bin carries no response.

mod fft;
mod frf;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use fft::FftPlan;
pub use frf::{ChannelKind, FrequencyGrid, FrfMatrix};

use crate::error::{Error, Result};
use crate::seeds;

/// Default number of excitation records averaged per FRF estimate.
pub const DEFAULT_RECORDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub samples: Vec<f64>,
    pub dt: f64,
    /// Seed of the generator that produced the samples, if any.
    pub seed: Option<u64>,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        let s = Self {
            samples,
            dt,
            seed: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() || !self.samples.len().is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "signal length must be a power of two, got {}",
                self.samples.len()
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Mean square value.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Zero-mean Gaussian white noise with standard deviation `sigma`.
pub fn gen_white_noise(n_samples: usize, sigma: f64, dt: f64, seed: u64) -> Result<TimeSignal> {
    if n_samples == 0 || !n_samples.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "noise length must be a power of two, got {n_samples}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let mut rng = seeds::rng(seed);
    let samples = (0..n_samples)
        .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>();
    let mut s = TimeSignal::new(samples, dt)?;
    s.seed = Some(seed);
    Ok(s)
}

pub fn fft_forward(signal: &TimeSignal) -> Result<Vec<Complex64>> {
    signal.validate()?;
    let plan = FftPlan::new(signal.len())?;
    let mut buf: Vec<Complex64> = signal.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan.forward_in_place(&mut buf)?;
    Ok(buf)
}

/// Inverse transform; keeps the real part.
pub fn fft_inverse(spectrum: &[Complex64], dt: f64) -> Result<TimeSignal> {
    let plan = FftPlan::new(spectrum.len())?;
    let mut buf = spectrum.to_vec();
    plan.inverse_in_place(&mut buf)?;
    TimeSignal::new(buf.into_iter().map(|c| c.re).collect(), dt)
}

/// Multi-channel response record, one time signal per FRF channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub channels: Vec<TimeSignal>,
    pub kinds: Vec<ChannelKind>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

fn check_alignment(frf: &FrfMatrix, input: &TimeSignal) -> Result<()> {
    let n_bins = frf.n_bins();
    if input.len() != 2 * n_bins {
        return Err(Error::Dimension(format!(
            "input of {} samples does not match an FRF of {n_bins} bins (need {})",
            input.len(),
            2 * n_bins
        )));
    }
    let df = frf.freq_bins()[1] - frf.freq_bins()[0];
    let record_df = 1.0 / (input.len() as f64 * input.dt);
    if ((record_df - df) / df).abs() > 1e-9 || frf.freq_bins()[0] != 0.0 {
        return Err(Error::InvalidInput(format!(
            "record resolution {record_df} Hz does not match FRF spacing {df} Hz"
        )));
    }
    Ok(())
}

/// Passes `input` through `frf` in the frequency domain and optionally adds
/// Gaussian measurement noise at the requested per-channel SNR.
pub fn simulate_response(frf: &FrfMatrix, input: &TimeSignal, noise: Option<NoiseSpec>) -> Result<ResponseRecord> {
    input.validate()?;
    check_alignment(frf, input)?;
    let n = input.len();
    let n_bins = frf.n_bins();
    let plan = FftPlan::new(n)?;
    let mut x: Vec<Complex64> = input.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward_in_place(&mut x)?;

    let mut noise_rng = noise.map(|ns| seeds::rng(ns.seed));
    let mut channels = Vec::with_capacity(frf.n_channels());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..frf.n_channels() {
        let h = frf.channel(c);
        buf[0] = h[0] * x[0];
        for k in 1..n_bins {
            buf[k] = h[k] * x[k];
            buf[n - k] = h[k].conj() * x[n - k];
        }
        buf[n_bins] = Complex64::new(0.0, 0.0);
        plan.inverse_in_place(&mut buf)?;
        let mut y: Vec<f64> = buf.iter().map(|v| v.re).collect();
        if let (Some(spec), Some(rng)) = (noise, noise_rng.as_mut()) {
            let p = mean_square(&y);
            let std = (p / 10f64.powf(spec.snr_db / 10.0)).sqrt();
            for v in y.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *v += std * e;
            }
        }
        channels.push(TimeSignal {
            samples: y,
            dt: input.dt,
            seed: noise.map(|s| s.seed),
        });
    }
    Ok(ResponseRecord {
        channels,
        kinds: frf.channel_kinds().to_vec(),
    })
}

/// H1 estimate `Σ conj(X) Y / Σ |X|²`, summed over records in order.
pub fn estimate_frf(inputs: &[TimeSignal], outputs: &[ResponseRecord]) -> Result<FrfMatrix> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("at least one record pair is required".into()));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::Dimension(format!(
            "{} input records but {} output records",
            inputs.len(),
            outputs.len()
        )));
    }
    let n = inputs[0].len();
    let dt = inputs[0].dt;
    let kinds = outputs[0].kinds.clone();
    let n_channels = kinds.len();
    for (x, y) in inputs.iter().zip(outputs) {
        x.validate()?;
        if x.len() != n || x.dt != dt {
            return Err(Error::Dimension("records differ in length or dt".into()));
        }
        if y.kinds != kinds || y.channels.len() != n_channels {
            return Err(Error::Dimension("output records differ in channel layout".into()));
        }
        if y.channels.iter().any(|c| c.len() != n || c.dt != dt) {
            return Err(Error::Dimension("output channel differs in length or dt".into()));
        }
    }
    if n < 4 {
        return Err(Error::InvalidInput("records need at least 4 samples".into()));
    }
    let n_bins = n / 2;
    let plan = FftPlan::new(n)?;
    let mut sxx = vec![0.0; n_bins];
    let mut sxy = vec![Complex64::new(0.0, 0.0); n_channels * n_bins];
    let mut xb = vec![Complex64::new(0.0, 0.0); n];
    let mut yb = vec![Complex64::new(0.0, 0.0); n];
    for (x, y) in inputs.iter().zip(outputs) {
        for (b, &v) in xb.iter_mut().zip(&x.samples) {
            *b = Complex64::new(v, 0.0);
        }
        plan.forward_in_place(&mut xb)?;
        for k in 0..n_bins {
            sxx[k] += xb[k].norm_sqr();
        }
        for (c, ch) in y.channels.iter().enumerate() {
            for (b, &v) in yb.iter_mut().zip(&ch.samples) {
                *b = Complex64::new(v, 0.0);
            }
            plan.forward_in_place(&mut yb)?;
            let acc = &mut sxy[c * n_bins..(c + 1) * n_bins];
            for k in 0..n_bins {
                acc[k] += xb[k].conj() * yb[k];
            }
        }
    }
    let df = 1.0 / (n as f64 * dt);
    for (k, &s) in sxx.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::DeadBin {
                bin: k,
                freq_hz: k as f64 * df,
            });
        }
    }
    for c in 0..n_channels {
        for k in 0..n_bins {
            sxy[c * n_bins + k] /= sxx[k];
        }
    }
    let freqs = (0..n_bins).map(|k| k as f64 * df).collect();
    FrfMatrix::new(sxy, freqs, kinds, inputs.len())
}

/// Settings for one simulated FRF measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSpec {
    pub n_records: usize,
    pub sigma_n: f64,
    /// `None` gives noiseless outputs.
    pub snr_db: Option<f64>,
}

/// Excites `frf` with `n_records` white-noise records, adds measurement noise
/// and returns the H1 estimate. Record `r` uses the excitation seed
/// `excitation_seed(r)` and noise seed `noise_seed(r)`.
pub fn measure_frf(
    frf: &FrfMatrix,
    spec: &MeasurementSpec,
    excitation_seed: impl Fn(u64) -> u64,
    noise_seed: impl Fn(u64) -> u64,
) -> Result<FrfMatrix> {
    if spec.n_records == 0 {
        return Err(Error::InvalidInput("n_records must be at least 1".into()));
    }
    let n = 2 * frf.n_bins();
    let dt = 1.0 / (n as f64 * (frf.freq_bins()[1] - frf.freq_bins()[0]));
    let mut inputs = Vec::with_capacity(spec.n_records);
    let mut outputs = Vec::with_capacity(spec.n_records);
    for r in 0..spec.n_records as u64 {
        let x = gen_white_noise(n, spec.sigma_n, dt, excitation_seed(r))?;
        let noise = spec.snr_db.map(|snr_db| NoiseSpec {
            snr_db,
            seed: noise_seed(r),
        });
        outputs.push(simulate_response(frf, &x, noise)?);
        inputs.push(x);
    }
    estimate_frf(&inputs, &outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_seeded() {
        let a = gen_white_noise(256, 1.0, 1e-3, 9).unwrap();
        let b = gen_white_noise(256, 1.0, 1e-3, 9).unwrap();
        let c = gen_white_noise(256, 1.0, 1e-3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
        assert!(gen_white_noise(100, 1.0, 1e-3, 1).is_err());
        assert!(gen_white_noise(128, 0.0, 1e-3, 1).is_err());
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut x = vec![0.0; 32];
        x[0] = 1.0;
        let spec = fft_forward(&TimeSignal::new(x, 1.0).unwrap()).unwrap();
        for v in spec {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip() {
        let x = gen_white_noise(1024, 2.0, 1.0, 3).unwrap();
        let back = fft_inverse(&fft_forward(&x).unwrap(), 1.0).unwrap();
        let err = x.samples.iter().zip(&back.samples).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10);
    }

    #[test]
    fn all_zero_input_reports_dead_bin() {
        let grid = FrequencyGrid::new(100.0, 8).unwrap();
        let frf = FrfMatrix::new(
            vec![Complex64::new(1.0, 0.0); 8],
            grid.frequencies(),
            vec![ChannelKind::Accelerance],
            0,
        )
        .unwrap();
        let x = TimeSignal::new(vec![0.0; 16], grid.record_dt()).unwrap();
        let y = simulate_response(&frf, &x, Some(NoiseSpec { snr_db: 20.0, seed: 1 })).unwrap();
        assert!(y.channels[0].samples.iter().all(|&v| v == 0.0));
        assert!(matches!(
            estimate_frf(&[x], &[y]),
            Err(Error::DeadBin { bin: 0, .. })
        ));
    }

    #[test]
    fn misaligned_record_rejected() {
        let grid = FrequencyGrid::new(100.0, 8).unwrap();
        let frf = FrfMatrix::new(
            vec![Complex64::new(1.0, 0.0); 8],
            grid.frequencies(),
            vec![ChannelKind::Accelerance],
            0,
        )
        .unwrap();
        let short = TimeSignal::new(vec![1.0; 8], grid.record_dt()).unwrap();
        assert!(simulate_response(&frf, &short, None).is_err());
        let slow = TimeSignal::new(vec![1.0; 16], 2.0 * grid.record_dt()).unwrap();
        assert!(simulate_response(&frf, &slow, None).is_err());
    }
}
