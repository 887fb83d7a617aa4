//! Phase-insensitive motion energies and bank feature vectors.
//!
//! Each bank entry is a quadrature pair of kernels with carrier phases `0`
//! and `-π/2`. The pair is applied as a causal receptive field: the weight
//! at kernel offset `(x, y, t)` multiplies the input pixel at spatial offset
//! `(x, y)` from the output location, `t` frames in the past. With this
//! convention a filter of direction `θ` prefers patterns translating along
//! `(cos θ, sin θ)`.

use std::f64::consts::{FRAC_PI_2, TAU};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::convolve::{self, ConvolutionOptions, SpectralPlan};
use crate::error::{Error, Result};
use crate::kernel::{default_support, sample_kernel, EnvelopeMode, FilterParams, KernelSupport};
use crate::volume::Volume;

/// Carrier phase of the first kernel of every quadrature pair.
pub const BASE_PHASE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EnergyNormalization {
    /// Raw sum of squared responses.
    #[default]
    None,
    /// Sum divided by the number of voxels `W·H·T`.
    PerVoxel,
}

impl EnergyNormalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyNormalization::None => "none",
            EnergyNormalization::PerVoxel => "per-voxel",
        }
    }
}

impl std::str::FromStr for EnergyNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(EnergyNormalization::None),
            "per-voxel" | "per_voxel" | "pervoxel" => Ok(EnergyNormalization::PerVoxel),
            other => Err(Error::invalid_parameter(format!(
                "unknown normalization '{other}' (expected none|per-voxel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SupportPolicy {
    /// Per-filter truncation from [`default_support`].
    #[default]
    Default,
    Fixed(KernelSupport),
}

impl SupportPolicy {
    pub fn support_for(&self, params: &FilterParams) -> KernelSupport {
        match self {
            SupportPolicy::Default => default_support(params),
            SupportPolicy::Fixed(s) => *s,
        }
    }
}

/// Grid of speeds and directions defining one filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct BankConfig {
    speeds: Vec<f64>,
    directions: Vec<f64>,
    envelope: EnvelopeMode,
    support: SupportPolicy,
    normalization: EnergyNormalization,
}

impl BankConfig {
    pub fn new(speeds: Vec<f64>, directions: Vec<f64>, envelope: EnvelopeMode) -> Result<Self> {
        if speeds.is_empty() || directions.is_empty() {
            return Err(Error::invalid_parameter(
                "bank needs at least one speed and one direction",
            ));
        }
        if speeds.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_parameter("speeds must be finite and non-negative"));
        }
        if speeds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid_parameter("speeds must be strictly increasing"));
        }
        if directions.iter().any(|d| !(0.0..TAU).contains(d)) {
            return Err(Error::invalid_parameter("directions must lie in [0, 2π)"));
        }
        if directions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid_parameter("directions must be strictly increasing"));
        }
        Ok(BankConfig {
            speeds,
            directions,
            envelope,
            support: SupportPolicy::Default,
            normalization: EnergyNormalization::None,
        })
    }

    pub fn with_support(mut self, support: SupportPolicy) -> Self {
        self.support = support;
        self
    }

    pub fn with_normalization(mut self, normalization: EnergyNormalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn envelope(&self) -> EnvelopeMode {
        self.envelope
    }

    pub fn support(&self) -> SupportPolicy {
        self.support
    }

    pub fn normalization(&self) -> EnergyNormalization {
        self.normalization
    }

    /// Number of features, `|V|·|Θ|`.
    pub fn len(&self) -> usize {
        self.speeds.len() * self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Feature index of `(speed i, direction j)`: row-major over speed.
    pub fn index(&self, speed: usize, direction: usize) -> usize {
        speed * self.directions.len() + direction
    }

    /// `(speed, direction)` of every entry in feature order.
    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.speeds
            .iter()
            .flat_map(move |&v| self.directions.iter().map(move |&d| (v, d)))
    }

    pub fn filter_params(&self) -> Result<Vec<FilterParams>> {
        self.grid()
            .map(|(v, d)| FilterParams::derive(v, d, BASE_PHASE, self.envelope))
            .collect()
    }

    /// Column names, `v=<speed>;theta=<radians>`, in feature order.
    pub fn column_labels(&self) -> Vec<String> {
        self.grid().map(|(v, d)| format!("v={v};theta={d}")).collect()
    }

    /// Canonical text form; two banks produce comparable features iff
    /// their descriptions are equal.
    pub fn describe(&self) -> String {
        let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let support = match self.support {
            SupportPolicy::Default => "default".to_string(),
            SupportPolicy::Fixed(s) => format!("{}x{}", s.spatial_halfwidth, s.temporal_length),
        };
        format!(
            "speeds=[{}];directions=[{}];envelope={};support={};normalize={};phase={}",
            join(&self.speeds),
            join(&self.directions),
            self.envelope,
            support,
            self.normalization.as_str(),
            BASE_PHASE
        )
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_of(&self.describe())
    }
}

/// Short stable hash (16 hex digits of SHA-256) of a canonical description.
pub fn fingerprint_of(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Expands `min..=max` in increments of `step`, e.g. `0.5..=2.0` by `0.25`.
/// Values are rounded to 12 decimals so the grid prints cleanly.
pub fn speed_range(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) || min < 0.0 || step <= 0.0 || max < min {
        return Err(Error::invalid_parameter(format!(
            "invalid speed range {min}..{max} step {step}"
        )));
    }
    let span = (max - min) / step;
    let count = span.round();
    if (span - count).abs() > 1e-6 {
        return Err(Error::invalid_parameter(format!(
            "speed range {min}..{max} is not a whole number of {step} steps"
        )));
    }
    Ok((0..=count as usize)
        .map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// `count` directions `2πk/count`, `k = 0..count`.
pub fn evenly_spaced_directions(count: usize) -> Vec<f64> {
    (0..count).map(|k| TAU * k as f64 / count as f64).collect()
}

/// Energies of one video under one bank, in the bank's feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    fingerprint: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, fingerprint: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_input("feature values must be finite and non-negative"));
        }
        Ok(FeatureVector {
            values,
            fingerprint: fingerprint.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The two receptive-field kernels (phases `φ` and `φ - π/2`) of one filter.
pub fn quadrature_kernels(params: &FilterParams, support: KernelSupport) -> Result<(Volume, Volume)> {
    let even = sample_kernel(params, support)?;
    let odd = sample_kernel(&params.with_phase(params.phase - FRAC_PI_2), support)?;
    Ok((even.mirrored_spatial(), odd.mirrored_spatial()))
}

/// `R = √(r₀² + r₁²)` using the default support for `params`.
pub fn quadrature_response(video: &Volume, params: &FilterParams, opts: ConvolutionOptions) -> Result<Volume> {
    quadrature_response_with_support(video, params, default_support(params), opts)
}

pub fn quadrature_response_with_support(
    video: &Volume,
    params: &FilterParams,
    support: KernelSupport,
    opts: ConvolutionOptions,
) -> Result<Volume> {
    let (even, odd) = quadrature_kernels(params, support)?;
    let responses = convolve::convolve_bank(video, &[even, odd], opts)?;
    let magnitude = ndarray::Zip::from(responses[0].array())
        .and(responses[1].array())
        .map_collect(|a, b| a.hypot(*b));
    Ok(Volume::from_array_unchecked(magnitude, crate::Origin::ZERO))
}

/// `Σ R²` over every voxel.
pub fn energy(response: &Volume) -> f64 {
    response.values().map(|r| r * r).sum()
}

/// Quadrature energy of `video` under each filter, computed without
/// materializing the magnitude volumes. Results follow the input order.
pub fn filter_energies(
    video: &Volume,
    filters: &[(FilterParams, KernelSupport)],
    opts: ConvolutionOptions,
) -> Result<Vec<f64>> {
    if filters.is_empty() {
        return Err(Error::invalid_input("no filters given"));
    }
    let pairs: Vec<(Volume, Volume)> = filters
        .par_iter()
        .map(|(p, s)| quadrature_kernels(p, *s))
        .collect::<Result<_>>()?;
    let largest = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let spectral = match opts.backend {
        convolve::Backend::Direct => false,
        convolve::Backend::Spectral => true,
        convolve::Backend::Auto => largest.saturating_mul(video.len()) > convolve::AUTO_SPECTRAL_THRESHOLD,
    };
    if spectral {
        let plan = SpectralPlan::new(video, pairs.iter().map(|(k, _)| k))?;
        pairs
            .par_iter()
            .map(|(even, odd)| {
                let (r0, r1) = plan.convolve_pair(even, Some(odd))?;
                Ok(energy(&r0) + energy(&r1.expect("paired convolution")))
            })
            .collect()
    } else {
        pairs
            .par_iter()
            .map(|(even, odd)| Ok(energy(&convolve::direct(video, even)?) + energy(&convolve::direct(video, odd)?)))
            .collect()
    }
}

pub fn extract_features(video: &Volume, bank: &BankConfig, opts: ConvolutionOptions) -> Result<FeatureVector> {
    let filters: Vec<(FilterParams, KernelSupport)> = bank
        .filter_params()?
        .into_iter()
        .map(|p| (p, bank.support.support_for(&p)))
        .collect();
    let mut values = filter_energies(video, &filters, opts)?;
    if bank.normalization == EnergyNormalization::PerVoxel {
        let n = video.len() as f64;
        values.iter_mut().for_each(|e| *e /= n);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("energy overflowed"));
    }
    FeatureVector::new(values, bank.fingerprint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convolve::Backend;
    use crate::volume::{Extent, Origin};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn energy_examples() {
        let zero = Volume::zeros(Extent::new(3, 3, 3)).unwrap();
        assert_eq!(energy(&zero), 0.0);
        let ones = Volume::from_fn(Extent::new(2, 2, 2), Origin::ZERO, |_, _, _| 1.0).unwrap();
        assert_eq!(energy(&ones), 8.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let vol = Volume::from_vec(Extent::new(5, 4, 3), raw.clone(), Origin::ZERO).unwrap();
        let mut oracle = 0.0;
        for v in &raw {
            oracle += v * v;
        }
        assert!((energy(&vol) - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn grid_expansion() {
        assert_eq!(
            speed_range(0.5, 2.0, 0.25).unwrap(),
            vec![0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
        );
        let low = speed_range(0.1, 1.5, 0.1).unwrap();
        assert_eq!(low.len(), 15);
        assert_eq!(low[2], 0.3);
        assert!(speed_range(0.5, 0.6, 0.25).is_err());
        assert!(speed_range(1.0, 0.5, 0.25).is_err());
        assert_eq!(evenly_spaced_directions(4).len(), 4);
    }

    #[test]
    fn bank_validation_and_order() {
        assert!(BankConfig::new(vec![1.0, 0.5], vec![0.0], EnvelopeMode::Moving).is_err());
        assert!(BankConfig::new(vec![1.0], vec![TAU], EnvelopeMode::Moving).is_err());
        assert!(BankConfig::new(vec![], vec![0.0], EnvelopeMode::Moving).is_err());
        let bank = BankConfig::new(vec![0.5, 1.0], evenly_spaced_directions(4), EnvelopeMode::Moving).unwrap();
        assert_eq!(bank.len(), 8);
        assert_eq!(bank.index(1, 2), 6);
        let grid: Vec<_> = bank.grid().collect();
        assert_eq!(grid[6], (1.0, std::f64::consts::PI));
        assert_eq!(bank.column_labels()[0], "v=0.5;theta=0");
    }

    #[test]
    fn fingerprint_tracks_configuration() {
        let a = BankConfig::new(vec![1.0], vec![0.0], EnvelopeMode::Moving).unwrap();
        let b = BankConfig::new(vec![1.0], vec![0.0], EnvelopeMode::Stationary).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(
            a.fingerprint(),
            a.clone()
                .with_normalization(EnergyNormalization::PerVoxel)
                .fingerprint()
        );
    }

    #[test]
    fn zero_video_gives_zero_features() {
        let video = Volume::zeros(Extent::new(16, 16, 6)).unwrap();
        let params = FilterParams::derive(1.0, 0.0, 0.0, EnvelopeMode::Moving).unwrap();
        let r = quadrature_response(&video, &params, ConvolutionOptions::default()).unwrap();
        assert!(r.values().all(|v| v == 0.0));
        let bank = BankConfig::new(vec![0.5, 1.0], evenly_spaced_directions(4), EnvelopeMode::Moving).unwrap();
        let f = extract_features(&video, &bank, ConvolutionOptions::default()).unwrap();
        assert_eq!(f.values(), &[0.0; 8]);
    }

    #[test]
    fn single_filter_bank_equals_energy_of_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let video = Volume::from_fn(Extent::new(20, 18, 8), Origin::ZERO, |_, _, _| {
            rng.random_range(0.0..1.0)
        })
        .unwrap();
        let bank = BankConfig::new(vec![1.0], vec![0.5], EnvelopeMode::Moving).unwrap();
        for backend in [Backend::Direct, Backend::Spectral] {
            let opts = ConvolutionOptions::with_backend(backend);
            let f = extract_features(&video, &bank, opts).unwrap();
            let params = FilterParams::derive(1.0, 0.5, 0.0, EnvelopeMode::Moving).unwrap();
            let e = energy(&quadrature_response(&video, &params, opts).unwrap());
            assert_eq!(f.len(), 1);
            assert!((f.values()[0] - e).abs() <= 1e-9 * e);
        }
    }

    #[test]
    fn per_voxel_normalization_divides_by_voxels() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let video = Volume::from_fn(Extent::new(12, 10, 6), Origin::ZERO, |_, _, _| {
            rng.random_range(0.0..1.0)
        })
        .unwrap();
        let bank = BankConfig::new(vec![0.5], vec![0.0, 1.0], EnvelopeMode::Moving).unwrap();
        let raw = extract_features(&video, &bank, ConvolutionOptions::default()).unwrap();
        let norm = extract_features(
            &video,
            &bank.clone().with_normalization(EnergyNormalization::PerVoxel),
            ConvolutionOptions::default(),
        )
        .unwrap();
        for (a, b) in raw.values().iter().zip(norm.values()) {
            assert!((a / 720.0 - b).abs() <= 1e-15 * a);
        }
    }

    fn random_video(seed: u64, extent: Extent) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..extent.voxels()).map(|_| rng.random_range(0.0..1.0)).collect();
        Volume::from_vec(extent, values, Origin::ZERO).unwrap()
    }

    #[test]
    fn bank_backends_agree() {
        let video = random_video(5, Extent::new(32, 32, 16));
        let bank = BankConfig::new(vec![1.0, 2.0], evenly_spaced_directions(8), EnvelopeMode::Moving).unwrap();
        let direct = extract_features(&video, &bank, ConvolutionOptions::with_backend(Backend::Direct)).unwrap();
        let spectral = extract_features(&video, &bank, ConvolutionOptions::with_backend(Backend::Spectral)).unwrap();
        assert_eq!(direct.len(), 16);
        for (a, b) in direct.values().iter().zip(spectral.values()) {
            assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn matched_grating_gives_flat_phase_free_magnitude() {
        use crate::stimuli::{render, StimulusKind, StimulusSpec};
        let extent = Extent::new(48, 48, 24);
        for (v, theta) in [(1.0, std::f64::consts::FRAC_PI_4), (2.0, 0.0)] {
            let params = FilterParams::derive(v, theta, 0.0, EnvelopeMode::Moving).unwrap();
            let response = |phase: f64| {
                let mut spec = StimulusSpec::grating(theta, v, params.wavelength).with_extent(extent);
                spec.kind = StimulusKind::Grating {
                    wavelength: params.wavelength,
                    phase,
                };
                quadrature_response(&render(&spec).unwrap(), &params, ConvolutionOptions::default()).unwrap()
            };
            let (r, shifted) = (response(0.0), response(std::f64::consts::FRAC_PI_2));
            let s = default_support(&params);
            let h = s.spatial_halfwidth;
            for y in h..extent.height - h {
                for x in h..extent.width - h {
                    let series: Vec<f64> = (s.temporal_length - 1..extent.frames).map(|t| r.get(x, y, t)).collect();
                    let mean = series.iter().sum::<f64>() / series.len() as f64;
                    let sd = (series.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / series.len() as f64).sqrt();
                    assert!(sd / mean < 0.05, "v={v}: cv {}", sd / mean);
                    for t in s.temporal_length - 1..extent.frames {
                        let rel = (shifted.get(x, y, t) - r.get(x, y, t)).abs() / r.get(x, y, t);
                        assert!(rel < 0.01, "v={v}: {rel}");
                    }
                }
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn energy_scales_with_square_of_contrast(seed in 0u64..1000, c in -20.0f64..20.0) {
            proptest::prop_assume!(c.abs() > 1e-3);
            let video = random_video(seed, Extent::new(12, 10, 6));
            let bank = BankConfig::new(vec![0.5, 1.5], evenly_spaced_directions(4), EnvelopeMode::Moving).unwrap();
            let base = extract_features(&video, &bank, ConvolutionOptions::default()).unwrap();
            let scaled = extract_features(&video.scaled(c).unwrap(), &bank, ConvolutionOptions::default()).unwrap();
            for (a, b) in base.values().iter().zip(scaled.values()) {
                proptest::prop_assert!((b - c * c * a).abs() <= 1e-9 * c * c * a);
            }
        }
    }
}
