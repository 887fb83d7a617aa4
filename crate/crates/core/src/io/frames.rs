//! Numbered image sequences (PGM/PPM/PNG) as grayscale volumes.

use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::volume::{Extent, Origin, Volume};

/// Rec.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const FRAME_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

/// Frames `directory/pattern` for indices `start .. start + count`.
///
/// `pattern` contains one index placeholder: `%d`, a zero-padded `%0Nd`,
/// or a run of `#` characters (one per digit).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequenceSource {
    pub directory: PathBuf,
    pub pattern: String,
    pub start: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    Printf { pad: usize },
    Hashes { pad: usize },
}

fn parse_pattern(pattern: &str) -> Result<(String, Placeholder, String)> {
    if let Some(pos) = pattern.find('%') {
        let rest = &pattern[pos + 1..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if rest[digits.len()..].starts_with('d') {
            let pad = digits.trim_start_matches('0').parse().unwrap_or(0);
            let suffix = rest[digits.len() + 1..].to_string();
            return Ok((pattern[..pos].to_string(), Placeholder::Printf { pad }, suffix));
        }
    }
    if let Some(pos) = pattern.find('#') {
        let pad = pattern[pos..].chars().take_while(|&c| c == '#').count();
        return Ok((
            pattern[..pos].to_string(),
            Placeholder::Hashes { pad },
            pattern[pos + pad..].to_string(),
        ));
    }
    Err(Error::invalid_parameter(format!(
        "frame pattern '{pattern}' has no index placeholder (%d, %04d or ####)"
    )))
}

impl FrameSequenceSource {
    pub fn new(directory: impl Into<PathBuf>, pattern: impl Into<String>, start: usize, count: usize) -> Result<Self> {
        let pattern = pattern.into();
        parse_pattern(&pattern)?;
        if count == 0 {
            return Err(Error::InvalidExtent("frame count must be at least 1".into()));
        }
        Ok(FrameSequenceSource {
            directory: directory.into(),
            pattern,
            start,
            count,
        })
    }

    pub fn frame_path(&self, index: usize) -> PathBuf {
        let (prefix, placeholder, suffix) = parse_pattern(&self.pattern).expect("pattern validated");
        let pad = match placeholder {
            Placeholder::Printf { pad } | Placeholder::Hashes { pad } => pad,
        };
        self.directory.join(format!("{prefix}{index:0pad$}{suffix}"))
    }

    /// Scans `directory` for one numbered sequence of image files. Every
    /// index between the smallest and largest found must be present.
    pub fn discover(directory: impl AsRef<Path>) -> Result<Self> {
        let directory = directory.as_ref();
        let mut found: Vec<(String, String, String, usize)> = Vec::new();
        for entry in std::fs::read_dir(directory)? {
            let path = entry?.path();
            let ext = match path.extension().and_then(|e| e.to_str()) {
                Some(e) if FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()) => e.to_string(),
                _ => continue,
            };
            let stem = match path.file_stem().and_then(|s| s.to_str()) {
                Some(s) => s,
                None => continue,
            };
            let prefix = stem.trim_end_matches(|c: char| c.is_ascii_digit());
            let digits = &stem[prefix.len()..];
            if digits.is_empty() {
                continue;
            }
            let index = digits
                .parse()
                .map_err(|_| Error::invalid_input(format!("frame index too large in {}", path.display())))?;
            found.push((prefix.to_string(), ext, digits.to_string(), index));
        }
        let (prefix, ext) = match found.first() {
            Some((p, e, _, _)) => (p.clone(), e.clone()),
            None => {
                return Err(Error::invalid_input(format!(
                    "no numbered frames found in {}",
                    directory.display()
                )))
            }
        };
        if found.iter().any(|(p, e, _, _)| *p != prefix || *e != ext) {
            return Err(Error::InconsistentFrames(format!(
                "{} holds more than one frame sequence",
                directory.display()
            )));
        }
        let width = found[0].2.len();
        let padded =
            found.iter().all(|(_, _, d, _)| d.len() == width) && found.iter().any(|(_, _, d, _)| d.starts_with('0'));
        let pattern = if padded {
            format!("{prefix}%0{width}d.{ext}")
        } else {
            format!("{prefix}%d.{ext}")
        };
        let mut indices: Vec<usize> = found.iter().map(|f| f.3).collect();
        indices.sort_unstable();
        let start = indices[0];
        let count = indices[indices.len() - 1] - start + 1;
        let source = FrameSequenceSource::new(directory, pattern, start, count)?;
        for (expected, &actual) in (start..).zip(&indices) {
            if expected != actual {
                return Err(Error::MissingFrame {
                    index: expected,
                    path: source.frame_path(expected),
                });
            }
        }
        Ok(source)
    }
}

/// Grayscale intensities in `[0, 1]`, row-major.
fn luma(image: &DynamicImage) -> Vec<f64> {
    let weigh =
        |r: f64, g: f64, b: f64| (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0);
    match image {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| weigh(p.0[0] as f64 / 255.0, p.0[1] as f64 / 255.0, p.0[2] as f64 / 255.0))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| weigh(p.0[0] as f64 / 255.0, p.0[1] as f64 / 255.0, p.0[2] as f64 / 255.0))
            .collect(),
        other => {
            let rgb = other.to_rgb16();
            rgb.pixels()
                .map(|p| {
                    weigh(
                        p.0[0] as f64 / 65535.0,
                        p.0[1] as f64 / 65535.0,
                        p.0[2] as f64 / 65535.0,
                    )
                })
                .collect()
        }
    }
}

/// Loads every frame of `source` into a `W×H×count` volume with values in `[0, 1]`.
pub fn load_video(source: &FrameSequenceSource) -> Result<Volume> {
    let mut values = Vec::new();
    let mut dims: Option<(u32, u32)> = None;
    for index in source.start..source.start + source.count {
        let path = source.frame_path(index);
        if !path.is_file() {
            return Err(Error::MissingFrame { index, path });
        }
        let image = image::open(&path)?;
        let frame_dims = (image.width(), image.height());
        match dims {
            None => dims = Some(frame_dims),
            Some(d) if d != frame_dims => {
                return Err(Error::InconsistentFrames(format!(
                    "frame {index} is {}x{}, earlier frames are {}x{}",
                    frame_dims.0, frame_dims.1, d.0, d.1
                )))
            }
            Some(_) => {}
        }
        values.extend(luma(&image));
    }
    let (w, h) = dims.expect("at least one frame");
    Volume::from_vec(Extent::new(w as usize, h as usize, source.count), values, Origin::ZERO)
}

/// Writes each frame as an 8-bit grayscale image (format from the pattern's
/// extension), clamping to `[0, 1]`.
pub fn save_frames(volume: &Volume, directory: impl AsRef<Path>, pattern: &str) -> Result<FrameSequenceSource> {
    let directory = directory.as_ref();
    std::fs::create_dir_all(directory)?;
    let source = FrameSequenceSource::new(directory, pattern, 0, volume.frames())?;
    let (w, h) = (volume.width() as u32, volume.height() as u32);
    for t in 0..volume.frames() {
        let pixels: Vec<u8> = volume
            .frame_rows(t)
            .into_iter()
            .flatten()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let buf = image::GrayImage::from_raw(w, h, pixels).expect("buffer sized to frame");
        buf.save(source.frame_path(t))?;
    }
    Ok(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{load_volume, save_volume};
    use image::{GrayImage, Luma, Rgb, RgbImage};

    #[test]
    fn pattern_placeholders() {
        let s = FrameSequenceSource::new("/d", "f_%04d.png", 0, 1).unwrap();
        assert_eq!(s.frame_path(7), PathBuf::from("/d/f_0007.png"));
        let s = FrameSequenceSource::new("/d", "f%d.pgm", 0, 1).unwrap();
        assert_eq!(s.frame_path(12), PathBuf::from("/d/f12.pgm"));
        let s = FrameSequenceSource::new("/d", "img###.png", 0, 1).unwrap();
        assert_eq!(s.frame_path(5), PathBuf::from("/d/img005.png"));
        assert!(FrameSequenceSource::new("/d", "static.png", 0, 1).is_err());
        assert!(FrameSequenceSource::new("/d", "%d.png", 0, 0).is_err());
    }

    #[test]
    fn white_frames_load_as_ones() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            GrayImage::from_pixel(2, 2, Luma([255u8]))
                .save(dir.path().join(format!("f{i}.pgm")))
                .unwrap();
        }
        let source = FrameSequenceSource::new(dir.path(), "f%d.pgm", 0, 3).unwrap();
        let v = load_video(&source).unwrap();
        assert_eq!(v.extent(), Extent::new(2, 2, 3));
        assert!(v.values().all(|x| x == 1.0));
    }

    #[test]
    fn red_frame_luma() {
        let dir = tempfile::tempdir().unwrap();
        RgbImage::from_pixel(3, 2, Rgb([255u8, 0, 0]))
            .save(dir.path().join("c0.png"))
            .unwrap();
        let source = FrameSequenceSource::new(dir.path(), "c%d.png", 0, 1).unwrap();
        let v = load_video(&source).unwrap();
        assert!(v.values().all(|x| x == 0.299));
    }

    #[test]
    fn gaps_and_mismatched_frames() {
        let dir = tempfile::tempdir().unwrap();
        for i in [0, 1, 3] {
            GrayImage::from_pixel(4, 4, Luma([10u8]))
                .save(dir.path().join(format!("f{i:03}.png")))
                .unwrap();
        }
        let source = FrameSequenceSource::new(dir.path(), "f%03d.png", 0, 4).unwrap();
        match load_video(&source) {
            Err(Error::MissingFrame { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected missing frame, got {other:?}"),
        }
        match FrameSequenceSource::discover(dir.path()) {
            Err(Error::MissingFrame { index, path }) => {
                assert_eq!(index, 2);
                assert!(path.ends_with("f002.png"));
            }
            other => panic!("expected missing frame, got {other:?}"),
        }

        GrayImage::from_pixel(5, 4, Luma([10u8]))
            .save(dir.path().join("f002.png"))
            .unwrap();
        assert!(matches!(load_video(&source), Err(Error::InconsistentFrames(_))));
    }

    #[test]
    fn pgm_sequence_round_trips_through_native_format() {
        let dir = tempfile::tempdir().unwrap();
        let original = Volume::from_fn(Extent::new(6, 5, 4), Origin::ZERO, |x, y, t| {
            ((x * 37 + y * 11 + t * 5) % 256) as f64 / 255.0
        })
        .unwrap();
        save_frames(&original, dir.path().join("seq"), "frame_%04d.pgm").unwrap();
        let source = FrameSequenceSource::discover(dir.path().join("seq")).unwrap();
        assert_eq!(source.pattern, "frame_%04d.pgm");
        assert_eq!(source.count, 4);
        let loaded = load_video(&source).unwrap();
        assert_eq!(loaded, original);

        let native = dir.path().join("v.stv");
        save_volume(&loaded, &native).unwrap();
        let back = load_volume(&native).unwrap();
        let a: Vec<u64> = back.values().map(f64::to_bits).collect();
        let b: Vec<u64> = loaded.values().map(f64::to_bits).collect();
        assert_eq!(a, b);
    }
}
