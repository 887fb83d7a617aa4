//! Synthetic moving bars, edges and drifting gratings, and the tuning
//! curves measured on them.
//!
//! Patterns translate along `(cos θ, sin θ)` at `speed` pixels/frame with
//! `x` to the right and `y` down. Bars and edges are centered on the frame
//! midpoint at the middle frame and enter/exit the frame without
//! wraparound. Their profiles are box-filtered across each pixel so
//! sub-pixel positions blend linearly between neighboring pixels.

use std::f64::consts::TAU;

use crate::convolve::ConvolutionOptions;
use crate::error::{Error, Result};
use crate::features::filter_energies;
use crate::kernel::{default_support, normalize_direction, EnvelopeMode, FilterParams};
use crate::volume::{Extent, Origin, Volume};

pub const DEFAULT_BAR_WIDTH: f64 = 2.0;
pub const DEFAULT_EXTENT: Extent = Extent {
    width: 64,
    height: 64,
    frames: 16,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgePolarity {
    /// Foreground fills the half-plane the edge has already swept.
    BrightBehind,
    /// Foreground fills the half-plane ahead of the edge.
    BrightAhead,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StimulusKind {
    Bar {
        width: f64,
    },
    Edge {
        polarity: EdgePolarity,
    },
    /// Sinusoid oscillating between background and foreground levels.
    Grating {
        wavelength: f64,
        phase: f64,
    },
}

impl StimulusKind {
    pub fn name(&self) -> &'static str {
        match self {
            StimulusKind::Bar { .. } => "bar",
            StimulusKind::Edge { .. } => "edge",
            StimulusKind::Grating { .. } => "grating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusSpec {
    pub kind: StimulusKind,
    /// Motion direction, radians.
    pub direction: f64,
    /// Pixels per frame.
    pub speed: f64,
    pub extent: Extent,
    pub foreground: f64,
    pub background: f64,
}

impl StimulusSpec {
    /// White 2-pixel bar on black, 64×64×16.
    pub fn bar(direction: f64, speed: f64) -> Self {
        StimulusSpec {
            kind: StimulusKind::Bar {
                width: DEFAULT_BAR_WIDTH,
            },
            direction,
            speed,
            extent: DEFAULT_EXTENT,
            foreground: 1.0,
            background: 0.0,
        }
    }

    pub fn edge(direction: f64, speed: f64) -> Self {
        StimulusSpec {
            kind: StimulusKind::Edge {
                polarity: EdgePolarity::BrightBehind,
            },
            ..StimulusSpec::bar(direction, speed)
        }
    }

    /// Zero-mean unit-amplitude grating (`cos`, levels ±1).
    pub fn grating(direction: f64, speed: f64, wavelength: f64) -> Self {
        StimulusSpec {
            kind: StimulusKind::Grating { wavelength, phase: 0.0 },
            foreground: 1.0,
            background: -1.0,
            ..StimulusSpec::bar(direction, speed)
        }
    }

    pub fn with_extent(mut self, extent: Extent) -> Self {
        self.extent = extent;
        self
    }

    pub fn with_levels(mut self, foreground: f64, background: f64) -> Self {
        self.foreground = foreground;
        self.background = background;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent.voxels() == 0 {
            return Err(Error::invalid_parameter("stimulus extent must be positive"));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::invalid_parameter(format!(
                "stimulus speed {} must be ≥ 0",
                self.speed
            )));
        }
        if !self.direction.is_finite() || !self.foreground.is_finite() || !self.background.is_finite() {
            return Err(Error::invalid_parameter("stimulus direction and levels must be finite"));
        }
        match self.kind {
            StimulusKind::Bar { width } if !(width.is_finite() && width > 0.0) => {
                Err(Error::invalid_parameter(format!("bar width {width} must be positive")))
            }
            StimulusKind::Grating { wavelength, phase }
                if !(wavelength >= 2.0 && wavelength.is_finite()) || !phase.is_finite() =>
            {
                Err(Error::invalid_parameter(format!(
                    "grating wavelength {wavelength} must be at least 2 pixels"
                )))
            }
            _ => Ok(()),
        }
    }

    /// One-line `key=value` summary used in output metadata.
    pub fn describe(&self) -> String {
        let geometry = match self.kind {
            StimulusKind::Bar { width } => format!("width={width}"),
            StimulusKind::Edge { polarity } => format!("polarity={polarity:?}"),
            StimulusKind::Grating { wavelength, phase } => format!("wavelength={wavelength};phase={phase}"),
        };
        format!(
            "kind={};direction={};speed={};{};extent={}x{}x{};foreground={};background={}",
            self.kind.name(),
            self.direction,
            self.speed,
            geometry,
            self.extent.width,
            self.extent.height,
            self.extent.frames,
            self.foreground,
            self.background
        )
    }
}

/// Length of `[a, b] ∩ [lo, hi]`.
fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

pub fn render(spec: &StimulusSpec) -> Result<Volume> {
    spec.validate()?;
    let Extent { width, height, frames } = spec.extent;
    let (sin, cos) = spec.direction.sin_cos();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let mid = (frames as f64 - 1.0) / 2.0;
    let (fg, bg) = (spec.foreground, spec.background);

    Volume::from_fn(spec.extent, Origin::ZERO, |x, y, t| {
        let (x, y, t) = (x as f64, y as f64, t as f64);
        match spec.kind {
            StimulusKind::Bar { width } => {
                let s = (x - cx) * cos + (y - cy) * sin - spec.speed * (t - mid);
                let cover = overlap(s - 0.5, s + 0.5, -width / 2.0, width / 2.0).min(1.0);
                bg + (fg - bg) * cover
            }
            StimulusKind::Edge { polarity } => {
                let s = (x - cx) * cos + (y - cy) * sin - spec.speed * (t - mid);
                let behind = (0.5 - s).clamp(0.0, 1.0);
                let cover = match polarity {
                    EdgePolarity::BrightBehind => behind,
                    EdgePolarity::BrightAhead => 1.0 - behind,
                };
                bg + (fg - bg) * cover
            }
            StimulusKind::Grating { wavelength, phase } => {
                let u = x * cos + y * sin;
                let c = (TAU / wavelength * (u - spec.speed * t) + phase).cos();
                0.5 * (fg + bg) + 0.5 * (fg - bg) * c
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TuningAxis {
    Direction,
    Speed,
}

impl TuningAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            TuningAxis::Direction => "direction",
            TuningAxis::Speed => "speed",
        }
    }
}

/// Filter energy as a function of one filter parameter for a fixed stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    pub axis: TuningAxis,
    /// `(parameter value, energy)`, parameter strictly increasing.
    pub samples: Vec<(f64, f64)>,
}

impl TuningCurve {
    /// Parameter value with the largest energy (first one on ties).
    pub fn argmax(&self) -> f64 {
        self.samples
            .iter()
            .fold(None::<(f64, f64)>, |best, &(p, e)| match best {
                Some((_, be)) if be >= e => best,
                _ => Some((p, e)),
            })
            .map(|(p, _)| p)
            .unwrap_or(f64::NAN)
    }

    /// Peak energy over mean energy; larger means more selective.
    pub fn peak_to_mean(&self) -> f64 {
        let peak = self.samples.iter().map(|s| s.1).fold(0.0, f64::max);
        let mean = self.samples.iter().map(|s| s.1).sum::<f64>() / self.samples.len() as f64;
        peak / mean
    }
}

fn check_increasing(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid_parameter(format!("{what} list is empty")));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid_parameter(format!(
            "{what} values must be strictly increasing"
        )));
    }
    Ok(())
}

fn tuning(
    axis: TuningAxis,
    values: &[f64],
    spec: &StimulusSpec,
    params: impl Fn(f64) -> Result<FilterParams>,
    opts: ConvolutionOptions,
) -> Result<TuningCurve> {
    let video = render(spec)?;
    let filters = values
        .iter()
        .map(|&v| params(v).map(|p| (p, default_support(&p))))
        .collect::<Result<Vec<_>>>()?;
    let energies = filter_energies(&video, &filters, opts)?;
    Ok(TuningCurve {
        axis,
        samples: values.iter().copied().zip(energies).collect(),
    })
}

/// Energy of filters at `filter_speed` over `directions` for a moving bar.
pub fn direction_tuning(
    filter_speed: f64,
    directions: &[f64],
    spec: &StimulusSpec,
    envelope: EnvelopeMode,
    opts: ConvolutionOptions,
) -> Result<TuningCurve> {
    if !matches!(spec.kind, StimulusKind::Bar { .. }) {
        return Err(Error::invalid_parameter("direction tuning expects a bar stimulus"));
    }
    check_increasing(directions, "direction")?;
    tuning(
        TuningAxis::Direction,
        directions,
        spec,
        |d| FilterParams::derive(filter_speed, d, 0.0, envelope),
        opts,
    )
}

/// Energy of filters at `filter_direction` over `speeds` for a moving edge.
pub fn speed_tuning(
    filter_direction: f64,
    speeds: &[f64],
    spec: &StimulusSpec,
    envelope: EnvelopeMode,
    opts: ConvolutionOptions,
) -> Result<TuningCurve> {
    if !matches!(spec.kind, StimulusKind::Edge { .. }) {
        return Err(Error::invalid_parameter("speed tuning expects an edge stimulus"));
    }
    check_increasing(speeds, "speed")?;
    tuning(
        TuningAxis::Speed,
        speeds,
        spec,
        |v| FilterParams::derive(v, normalize_direction(filter_direction), 0.0, envelope),
        opts,
    )
}
