//! Discrete 3D spatiotemporal Gabor kernels.
//!
//! A kernel is the product of three factors evaluated on an integer grid:
//!
//! * an elliptical spatial Gaussian whose center drifts along the rotated
//!   `x̄` axis at the envelope speed (`x̄ + v_c·t`),
//! * a cosine carrier with phase `(2π/λ)(x̄ + v·t) + φ`,
//! * a temporal Gaussian centered at `mu_t` frames.
//!
//! `x̄ = x cosθ + y sinθ`, `ȳ = -x sinθ + y cosθ`. The wavelength follows the
//! speed through `λ = 2√(1 + v²)` and the spatial scale follows the wavelength
//! through `σ = 0.56·λ` unless overridden.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::volume::{Extent, Origin, Volume};

/// Base wavelength of a static (`v = 0`) filter, in pixels.
pub const BASE_WAVELENGTH: f64 = 2.0;
/// Spatial aspect ratio of the envelope.
pub const DEFAULT_ASPECT_RATIO: f64 = 0.5;
/// Temporal Gaussian mean, frames.
pub const DEFAULT_TEMPORAL_MEAN: f64 = 1.75;
/// Temporal Gaussian standard deviation, frames.
pub const DEFAULT_TEMPORAL_STD: f64 = 2.75;
/// `σ/λ` for a one-octave spatial frequency bandwidth.
pub const SIGMA_PER_WAVELENGTH: f64 = 0.56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvelopeMode {
    /// Envelope center fixed (`v_c = 0`).
    Stationary,
    /// Envelope center drifts with the carrier (`v_c = v`).
    Moving,
}

impl EnvelopeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvelopeMode::Stationary => "stationary",
            EnvelopeMode::Moving => "moving",
        }
    }
}

impl std::str::FromStr for EnvelopeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stationary" => Ok(EnvelopeMode::Stationary),
            "moving" => Ok(EnvelopeMode::Moving),
            other => Err(Error::invalid_parameter(format!(
                "unknown envelope mode '{other}' (expected stationary|moving)"
            ))),
        }
    }
}

impl std::fmt::Display for EnvelopeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full parameter set of one spatiotemporal Gabor filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Carrier (phase) speed, pixels/frame.
    pub speed: f64,
    /// Motion direction and spatial orientation, radians in `[0, 2π)`.
    pub direction: f64,
    /// Carrier phase offset, radians in `[-π, π]`.
    pub phase: f64,
    /// Speed of the envelope center, pixels/frame.
    pub envelope_speed: f64,
    pub aspect_ratio: f64,
    pub sigma: f64,
    pub wavelength: f64,
    pub temporal_mean: f64,
    pub temporal_std: f64,
}

/// `λ = 2√(1 + v²)`.
pub fn wavelength_for_speed(speed: f64) -> f64 {
    BASE_WAVELENGTH * (1.0 + speed * speed).sqrt()
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_direction(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

fn wrap_phase(phi: f64) -> f64 {
    if (-PI..=PI).contains(&phi) {
        phi
    } else {
        (phi + PI).rem_euclid(TAU) - PI
    }
}

impl FilterParams {
    /// Builds a filter from speed, direction and phase using the fixed
    /// relations for wavelength, aspect ratio, temporal window and σ.
    pub fn derive(speed: f64, direction: f64, phase: f64, envelope: EnvelopeMode) -> Result<Self> {
        if !speed.is_finite() || speed < 0.0 {
            return Err(Error::invalid_parameter(format!(
                "speed must be finite and non-negative, got {speed}"
            )));
        }
        if !direction.is_finite() || !phase.is_finite() {
            return Err(Error::invalid_parameter("direction and phase must be finite"));
        }
        let wavelength = wavelength_for_speed(speed);
        let params = FilterParams {
            speed,
            direction: normalize_direction(direction),
            phase: wrap_phase(phase),
            envelope_speed: match envelope {
                EnvelopeMode::Stationary => 0.0,
                EnvelopeMode::Moving => speed,
            },
            aspect_ratio: DEFAULT_ASPECT_RATIO,
            sigma: SIGMA_PER_WAVELENGTH * wavelength,
            wavelength,
            temporal_mean: DEFAULT_TEMPORAL_MEAN,
            temporal_std: DEFAULT_TEMPORAL_STD,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.sigma = sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = wrap_phase(phase);
        self
    }

    pub fn envelope_mode(&self) -> EnvelopeMode {
        if self.envelope_speed == 0.0 && self.speed != 0.0 {
            EnvelopeMode::Stationary
        } else {
            EnvelopeMode::Moving
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("aspect ratio", self.aspect_ratio),
            ("sigma", self.sigma),
            ("wavelength", self.wavelength),
            ("temporal std", self.temporal_std),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid_parameter(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        for (name, value) in [("speed", self.speed), ("envelope speed", self.envelope_speed)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid_parameter(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        if !(0.0..TAU).contains(&self.direction) {
            return Err(Error::invalid_parameter(format!(
                "direction {} outside [0, 2π)",
                self.direction
            )));
        }
        if !(-PI..=PI).contains(&self.phase) {
            return Err(Error::invalid_parameter(format!(
                "phase {} outside [-π, π]",
                self.phase
            )));
        }
        if !self.temporal_mean.is_finite() {
            return Err(Error::invalid_parameter("temporal mean must be finite"));
        }
        Ok(())
    }

    /// Upper bound on `|g|`: the product of both Gaussian normalization constants.
    pub fn amplitude_bound(&self) -> f64 {
        self.spatial_norm() * self.temporal_norm()
    }

    fn spatial_norm(&self) -> f64 {
        self.aspect_ratio / (TAU * self.sigma * self.sigma)
    }

    fn temporal_norm(&self) -> f64 {
        1.0 / (TAU * self.temporal_std).sqrt()
    }

    /// Evaluates the continuous kernel at `(x, y, t)`.
    pub fn evaluate(&self, x: f64, y: f64, t: f64) -> f64 {
        let (sin, cos) = self.direction.sin_cos();
        let xr = x * cos + y * sin;
        let yr = -x * sin + y * cos;
        let shifted = xr + self.envelope_speed * t;
        let two_sigma_sq = 2.0 * self.sigma * self.sigma;
        let spatial =
            self.spatial_norm() * (-(shifted * shifted + self.aspect_ratio.powi(2) * yr * yr) / two_sigma_sq).exp();
        let carrier = (TAU / self.wavelength * (xr + self.speed * t) + self.phase).cos();
        let dt = t - self.temporal_mean;
        let temporal = self.temporal_norm() * (-(dt * dt) / (2.0 * self.temporal_std * self.temporal_std)).exp();
        spatial * carrier * temporal
    }
}

/// Grid extent of a sampled kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelSupport {
    /// The grid spans `-h..=h` in both `x` and `y`.
    pub spatial_halfwidth: usize,
    /// The grid spans `t = 0..temporal_length`.
    pub temporal_length: usize,
}

impl KernelSupport {
    pub fn new(spatial_halfwidth: usize, temporal_length: usize) -> Result<Self> {
        if spatial_halfwidth < 1 || temporal_length < 1 {
            return Err(Error::invalid_parameter(format!(
                "kernel support must be positive, got halfwidth {spatial_halfwidth}, length {temporal_length}"
            )));
        }
        Ok(KernelSupport {
            spatial_halfwidth,
            temporal_length,
        })
    }

    pub fn side(&self) -> usize {
        2 * self.spatial_halfwidth + 1
    }

    pub fn extent(&self) -> Extent {
        Extent::new(self.side(), self.side(), self.temporal_length)
    }
}

/// Truncation at `3σ/min(1, γ)` spatially and `μ_t + 2.5τ` temporally.
pub fn default_support(params: &FilterParams) -> KernelSupport {
    let spatial = (3.0 * params.sigma / params.aspect_ratio.min(1.0)).ceil();
    let temporal = (params.temporal_mean + 2.5 * params.temporal_std).ceil() + 1.0;
    KernelSupport {
        spatial_halfwidth: (spatial as usize).max(1),
        temporal_length: (temporal.max(1.0)) as usize,
    }
}

/// Samples the kernel at integer `(x, y, t)` with `x, y ∈ [-h, h]` and
/// `t ∈ [0, T)`. The returned volume's origin is `(h, h, 0)`.
pub fn sample_kernel(params: &FilterParams, support: KernelSupport) -> Result<Volume> {
    params.validate()?;
    if support.spatial_halfwidth < 1 || support.temporal_length < 1 {
        return Err(Error::invalid_parameter("kernel support must be positive"));
    }
    let h = support.spatial_halfwidth as i64;
    let mut overflow = false;
    let volume = Volume::from_fn(support.extent(), Origin::new(h, h, 0), |ix, iy, it| {
        let value = params.evaluate((ix as i64 - h) as f64, (iy as i64 - h) as f64, it as f64);
        overflow |= !value.is_finite();
        if value.is_finite() {
            value
        } else {
            0.0
        }
    })?;
    if overflow {
        return Err(Error::numeric("kernel evaluation produced a non-finite value"));
    }
    Ok(volume)
}
