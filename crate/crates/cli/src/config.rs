//! Run configuration: defaults, then a `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use stgabor::classify::Metric;
use stgabor::convolve::Backend;
use stgabor::features::{evenly_spaced_directions, speed_range, BankConfig, EnergyNormalization};
use stgabor::kernel::EnvelopeMode;

use crate::CliError;

pub const CONFIG_HELP: &str = "\
CONFIG FILE
  One `key = value` per line; blank lines and lines starting with `#` are
  ignored. Command-line flags override file values, which override defaults.

  speeds      = 0.5:2.0:0.25      (min:max:step) or 0.1,0.2,0.4 (list)
  directions  = 8                 (4 or 8, evenly spaced over [0, 2π))
  envelope    = moving            (moving | stationary)
  normalize   = none              (none | per-voxel)
  backend     = auto              (auto | direct | spectral)
  manifest    = videos.csv
  out         = features.csv
  features    = features.csv
  confusion   = confusion.csv
  folds       = 10
  seed        = 0
  metric      = euclidean         (euclidean | manhattan)
  zscore      = false
  jobs        = 4
  crop        = X,Y,W,H
  frames      = START:COUNT";

#[derive(Debug, Clone, PartialEq)]
pub enum SpeedSpec {
    Range { min: f64, max: f64, step: f64 },
    List(Vec<f64>),
}

impl SpeedSpec {
    pub fn expand(&self) -> Result<Vec<f64>, CliError> {
        match self {
            SpeedSpec::Range { min, max, step } => Ok(speed_range(*min, *max, *step)?),
            SpeedSpec::List(v) => Ok(v.clone()),
        }
    }
}

impl std::str::FromStr for SpeedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let number = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("'{p}' is not a number"));
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("speed range '{s}' must be min:max:step"));
            }
            Ok(SpeedSpec::Range {
                min: number(parts[0])?,
                max: number(parts[1])?,
                step: number(parts[2])?,
            })
        } else {
            Ok(SpeedSpec::List(s.split(',').map(number).collect::<Result<_, _>>()?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl std::str::FromStr for Crop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| format!("crop '{s}' must be X,Y,W,H")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [x, y, width, height] => Ok(Crop { x, y, width, height }),
            _ => Err(format!("crop '{s}' must be X,Y,W,H")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameWindow {
    pub start: usize,
    pub count: usize,
}

impl std::str::FromStr for FrameWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("frames '{s}' must be START:COUNT"))?;
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("frames '{s}' must be START:COUNT"))
        };
        Ok(FrameWindow {
            start: parse(a)?,
            count: parse(b)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub speeds: SpeedSpec,
    pub directions: usize,
    pub envelope: EnvelopeMode,
    pub normalize: EnergyNormalization,
    pub backend: Backend,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub confusion: Option<PathBuf>,
    pub folds: usize,
    pub seed: u64,
    pub metric: Metric,
    pub zscore: bool,
    pub jobs: Option<usize>,
    pub crop: Option<Crop>,
    pub frames: Option<FrameWindow>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            speeds: SpeedSpec::Range {
                min: 0.5,
                max: 2.0,
                step: 0.25,
            },
            directions: 8,
            envelope: EnvelopeMode::Moving,
            normalize: EnergyNormalization::None,
            backend: Backend::Auto,
            manifest: None,
            out: None,
            features: None,
            confusion: None,
            folds: 10,
            seed: 0,
            metric: Metric::Euclidean,
            zscore: false,
            jobs: None,
            crop: None,
            frames: None,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("'{other}' is not a boolean")),
    }
}

/// Parses a config file into `key -> (line, value)`.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, (usize, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, (usize, String)>, String> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        map.insert(key.trim().to_ascii_lowercase(), (n + 1, value.trim().to_string()));
    }
    Ok(map)
}

impl RunConfig {
    pub fn apply_file(&mut self, entries: &BTreeMap<String, (usize, String)>) -> Result<(), CliError> {
        for (key, (line, value)) in entries {
            self.set(key, value)
                .map_err(|e| CliError::Usage(format!("config line {line}: {key}: {e}")))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let err = |e: stgabor::Error| e.to_string();
        match key {
            "speeds" => self.speeds = value.parse()?,
            "directions" => self.directions = value.parse().map_err(|_| format!("'{value}' is not a count"))?,
            "envelope" => self.envelope = value.parse().map_err(err)?,
            "normalize" => self.normalize = value.parse().map_err(err)?,
            "backend" => self.backend = value.parse().map_err(err)?,
            "manifest" => self.manifest = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "features" => self.features = Some(value.into()),
            "confusion" => self.confusion = Some(value.into()),
            "folds" => self.folds = value.parse().map_err(|_| format!("'{value}' is not a count"))?,
            "seed" => self.seed = value.parse().map_err(|_| format!("'{value}' is not a seed"))?,
            "metric" => self.metric = value.parse().map_err(err)?,
            "zscore" => self.zscore = parse_bool(value)?,
            "jobs" => self.jobs = Some(value.parse().map_err(|_| format!("'{value}' is not a count"))?),
            "crop" => self.crop = Some(value.parse()?),
            "frames" => self.frames = Some(value.parse()?),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Bank grid; the direction count must be 4 or 8.
    pub fn bank(&self) -> Result<BankConfig, CliError> {
        if !matches!(self.directions, 4 | 8) {
            return Err(CliError::Usage(format!(
                "direction count must be 4 or 8, got {}",
                self.directions
            )));
        }
        let bank = BankConfig::new(
            self.speeds.expand()?,
            evenly_spaced_directions(self.directions),
            self.envelope,
        )?;
        Ok(bank.with_normalization(self.normalize))
    }
}
