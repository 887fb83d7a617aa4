use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use stgabor::classify::{cross_validate_with, CvOptions};
use stgabor::convolve::{self, ConvolutionOptions};
use stgabor::features::{
    evenly_spaced_directions, extract_features, fingerprint_of, quadrature_kernels, quadrature_response_with_support,
};
use stgabor::io::{
    append_feature_rows, load_video, load_volume, read_feature_csv, save_volume, write_feature_csv, FeatureRow,
    FeatureTable, FrameSequenceSource,
};
use stgabor::kernel::{default_support, sample_kernel, EnvelopeMode, FilterParams};
use stgabor::stimuli::{direction_tuning, speed_tuning, StimulusSpec};
use stgabor::{Extent, Volume};

use crate::config::{Crop, FrameWindow, RunConfig};
use crate::{Axis, BankArgs, ClassifyArgs, CliError, ConvolveArgs, ExtractArgs, FilterArgs, KernelArgs, TuneArgs};

fn apply_bank_flags(cfg: &mut RunConfig, a: &BankArgs) -> Result<(), CliError> {
    let usage = |e: stgabor::Error| CliError::Usage(e.to_string());
    if let Some(s) = &a.speeds {
        cfg.speeds = s.clone();
    }
    if let Some(d) = a.directions {
        cfg.directions = d;
    }
    if let Some(e) = &a.envelope {
        cfg.envelope = e.parse().map_err(usage)?;
    }
    if let Some(n) = &a.normalize {
        cfg.normalize = n.parse().map_err(usage)?;
    }
    if let Some(b) = &a.backend {
        cfg.backend = b.parse().map_err(usage)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// As written in the manifest; used as the row key.
    pub path: String,
    pub label: String,
    pub resolved: PathBuf,
}

/// Reads a `path,label` manifest. A first line of `path,label` is taken as a
/// header. Relative paths resolve against the manifest's directory.
pub fn read_manifest(manifest: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let file = File::open(manifest)
        .map_err(|e| CliError::Data(format!("cannot open manifest {}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut entries = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let line_of = |pos: Option<&csv::Position>| pos.map(|p| p.line()).unwrap_or(n as u64 + 1);
        let record = record
            .map_err(|e| CliError::Data(format!("{}: line {}: {e}", manifest.display(), line_of(e.position()))))?;
        let line = line_of(record.position());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 || record[0].is_empty() || record[1].is_empty() {
            return Err(CliError::Data(format!(
                "{}: line {line}: expected `path,label`",
                manifest.display()
            )));
        }
        if entries.is_empty() && record[0].eq_ignore_ascii_case("path") && record[1].eq_ignore_ascii_case("label") {
            continue;
        }
        entries.push(ManifestEntry {
            path: record[0].to_string(),
            label: record[1].to_string(),
            resolved: base.join(&record[0]),
        });
    }
    if entries.is_empty() {
        return Err(CliError::Data(format!(
            "{}: manifest lists no videos",
            manifest.display()
        )));
    }
    Ok(entries)
}

/// Loads a `.stv` volume or a directory of numbered frames, then applies
/// the optional temporal window and spatial crop.
pub fn load_input(path: &Path, crop: Option<Crop>, frames: Option<FrameWindow>) -> stgabor::Result<Volume> {
    let mut video = if path.is_dir() {
        let mut source = FrameSequenceSource::discover(path)?;
        if let Some(w) = frames {
            if w.count == 0 || w.start + w.count > source.count {
                return Err(stgabor::Error::InvalidExtent(format!(
                    "frames {}:{} outside the {} available",
                    w.start, w.count, source.count
                )));
            }
            source.start += w.start;
            source.count = w.count;
        }
        load_video(&source)?
    } else {
        let v = load_volume(path)?;
        match frames {
            Some(w) => v.crop(0, 0, w.start, Extent::new(v.width(), v.height(), w.count))?,
            None => v,
        }
    };
    if let Some(c) = crop {
        video = video.crop(c.x, c.y, 0, Extent::new(c.width, c.height, video.frames()))?;
    }
    Ok(video)
}

pub fn extract(mut cfg: RunConfig, a: ExtractArgs) -> Result<(), CliError> {
    apply_bank_flags(&mut cfg, &a.bank)?;
    if a.manifest.is_some() {
        cfg.manifest = a.manifest;
    }
    if a.out.is_some() {
        cfg.out = a.out;
    }
    if a.crop.is_some() {
        cfg.crop = a.crop;
    }
    if a.frames.is_some() {
        cfg.frames = a.frames;
    }
    let manifest = cfg
        .manifest
        .clone()
        .ok_or_else(|| CliError::Usage("--manifest is required".into()))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let bank = cfg.bank()?;
    let entries = read_manifest(&manifest)?;

    let existing = if out.exists() {
        let table = read_feature_csv(&out)?;
        if table.fingerprint == bank.fingerprint() {
            Some(table)
        } else if a.force {
            warn!(
                "{}: fingerprint {} differs, starting over",
                out.display(),
                table.fingerprint
            );
            None
        } else {
            return Err(CliError::Data(format!(
                "{} was written by a different bank (fingerprint {}, expected {}); use --force to overwrite",
                out.display(),
                table.fingerprint,
                bank.fingerprint()
            )));
        }
    } else {
        None
    };
    let table = match existing {
        Some(t) => t,
        None => {
            let t = FeatureTable::new(&bank);
            write_feature_csv(&out, &t)?;
            t
        }
    };

    let mut seen = std::collections::HashSet::new();
    let pending: Vec<&ManifestEntry> = entries
        .iter()
        .filter(|e| !table.contains(&e.path) && seen.insert(e.path.as_str()))
        .collect();
    info!(
        "{} videos in manifest, {} already extracted, {} to do ({} filters)",
        entries.len(),
        entries.len() - pending.len(),
        pending.len(),
        bank.len()
    );

    let opts = ConvolutionOptions::with_backend(cfg.backend);
    let batch = cfg.jobs.unwrap_or_else(rayon::current_num_threads).max(1);
    let mut failures = Vec::new();
    for chunk in pending.chunks(batch) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|e| {
                load_input(&e.resolved, cfg.crop, cfg.frames)
                    .and_then(|video| extract_features(&video, &bank, opts))
                    .map(|f| FeatureRow {
                        path: e.path.clone(),
                        label: e.label.clone(),
                        values: f.values().to_vec(),
                    })
            })
            .collect();
        let mut rows = Vec::new();
        for (e, r) in chunk.iter().zip(results) {
            match r {
                Ok(row) => {
                    info!("{}: done", e.path);
                    rows.push(row);
                }
                Err(err) => {
                    warn!("{}: {err}", e.path);
                    failures.push((e.path.clone(), err));
                }
            }
        }
        if !rows.is_empty() {
            append_feature_rows(&out, &rows)?;
        }
    }
    if failures.is_empty() {
        return Ok(());
    }
    for (path, err) in &failures {
        eprintln!("failed: {path}: {err}");
    }
    let msg = format!("{} of {} videos failed", failures.len(), pending.len());
    if failures.iter().all(|(_, e)| e.is_numeric()) {
        Err(CliError::Numeric(msg))
    } else {
        Err(CliError::Data(msg))
    }
}

pub fn classify(mut cfg: RunConfig, a: ClassifyArgs) -> Result<(), CliError> {
    if a.features.is_some() {
        cfg.features = a.features;
    }
    if let Some(f) = a.folds {
        cfg.folds = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = &a.metric {
        cfg.metric = m.parse().map_err(|e: stgabor::Error| CliError::Usage(e.to_string()))?;
    }
    cfg.zscore |= a.zscore;
    if a.confusion.is_some() {
        cfg.confusion = a.confusion;
    }
    let features = cfg
        .features
        .clone()
        .ok_or_else(|| CliError::Usage("--features is required".into()))?;
    let table = read_feature_csv(&features)?;
    let data = table.to_dataset()?;
    let report = cross_validate_with(
        &data,
        CvOptions {
            folds: cfg.folds,
            seed: cfg.seed,
            metric: cfg.metric,
            zscore: cfg.zscore,
        },
    )?;
    println!("{}", report.table_entry());
    info!(
        "{} videos, {} classes, {}-fold{}, seed {}, {}",
        data.len(),
        report.classes.len(),
        cfg.folds,
        if report.stratified { " stratified" } else { "" },
        cfg.seed,
        cfg.metric.as_str()
    );
    if let Some(path) = &cfg.confusion {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "# fingerprint={}", table.fingerprint)?;
        writeln!(f, "# seed={}", cfg.seed)?;
        writeln!(f, "# folds={}", cfg.folds)?;
        writeln!(f, "# metric={}", cfg.metric.as_str())?;
        writeln!(f, "# zscore={}", cfg.zscore)?;
        writeln!(f, "# accuracy={}", report.table_entry())?;
        f.write_all(report.confusion_csv().as_bytes())?;
        f.flush()?;
    }
    Ok(())
}

fn parse_extent(s: &str) -> Result<Extent, CliError> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("extent '{s}' must be WxHxT")))?;
    match parts[..] {
        [w, h, t] => Ok(Extent::new(w, h, t)),
        _ => Err(CliError::Usage(format!("extent '{s}' must be WxHxT"))),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

pub fn tune(mut cfg: RunConfig, a: TuneArgs) -> Result<(), CliError> {
    apply_bank_flags(&mut cfg, &a.bank)?;
    let extent = parse_extent(&a.extent)?;
    let opts = ConvolutionOptions::with_backend(cfg.backend);
    let (spec, fixed, curve) = match a.axis {
        Axis::Direction => {
            let spec = StimulusSpec::bar(a.stimulus_direction, a.stimulus_speed).with_extent(extent);
            let values = match a.values {
                Some(v) => v,
                None => evenly_spaced_directions(cfg.directions),
            };
            let curve = direction_tuning(a.filter_speed, &values, &spec, cfg.envelope, opts)?;
            (spec, format!("filter_speed={}", a.filter_speed), curve)
        }
        Axis::Speed => {
            let spec = StimulusSpec::edge(a.stimulus_direction, a.stimulus_speed).with_extent(extent);
            let values = match a.values {
                Some(v) => v,
                None => cfg.speeds.expand()?,
            };
            let curve = speed_tuning(a.filter_direction, &values, &spec, cfg.envelope, opts)?;
            (spec, format!("filter_direction={}", a.filter_direction), curve)
        }
    };
    let filters = format!(
        "axis={};{fixed};envelope={};values=[{}]",
        curve.axis.as_str(),
        cfg.envelope,
        curve
            .samples
            .iter()
            .map(|s| s.0.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    let mut f = output(a.out.as_deref())?;
    writeln!(f, "# stimulus={}", spec.describe())?;
    writeln!(f, "# filters={filters}")?;
    writeln!(
        f,
        "# fingerprint={}",
        fingerprint_of(&format!("{}|{filters}", spec.describe()))
    )?;
    writeln!(f, "{},energy", curve.axis.as_str())?;
    for (p, e) in &curve.samples {
        writeln!(f, "{p},{e:e}")?;
    }
    f.flush()?;
    Ok(())
}

fn filter_params(a: &FilterArgs) -> Result<FilterParams, CliError> {
    let envelope: EnvelopeMode = a
        .envelope
        .parse()
        .map_err(|e: stgabor::Error| CliError::Usage(e.to_string()))?;
    let p = FilterParams::derive(a.speed, a.theta, a.phi, envelope)?;
    Ok(match a.sigma {
        Some(s) => p.with_sigma(s)?,
        None => p,
    })
}

fn describe_params(p: &FilterParams) -> String {
    format!(
        "speed={};direction={};phase={};envelope_speed={};aspect_ratio={};sigma={};wavelength={};temporal_mean={};temporal_std={}",
        p.speed,
        p.direction,
        p.phase,
        p.envelope_speed,
        p.aspect_ratio,
        p.sigma,
        p.wavelength,
        p.temporal_mean,
        p.temporal_std
    )
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

fn write_meta(out: &Path, lines: &[(&str, String)]) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(meta_path(out))?);
    for (k, v) in lines {
        writeln!(f, "{k}={v}")?;
    }
    f.flush()?;
    Ok(())
}

pub fn kernel(a: KernelArgs) -> Result<(), CliError> {
    let params = filter_params(&a.filter)?;
    let support = default_support(&params);
    let k = sample_kernel(&params, support)?;
    let described = describe_params(&params);
    if let Some(out) = &a.out {
        save_volume(&k, out)?;
        let o = k.origin();
        write_meta(
            out,
            &[
                ("kind", "kernel".into()),
                ("params", described.clone()),
                (
                    "support",
                    format!("{}x{}", support.spatial_halfwidth, support.temporal_length),
                ),
                ("origin", format!("{},{},{}", o.x, o.y, o.t)),
                ("fingerprint", fingerprint_of(&described)),
            ],
        )?;
    }
    if a.out.is_none() || a.slices.is_some() {
        let mut f = output(a.slices.as_deref())?;
        writeln!(f, "# {described}")?;
        writeln!(f, "# fingerprint={}", fingerprint_of(&described))?;
        for t in 0..k.frames() {
            writeln!(f, "# frame {t}")?;
            for row in k.frame_rows(t) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
                writeln!(f, "{}", line.join(" "))?;
            }
        }
        f.flush()?;
    }
    Ok(())
}

fn filtered(cfg: &RunConfig, a: &ConvolveArgs) -> Result<Volume, CliError> {
    let params = filter_params(&a.filter)?;
    let backend = match &a.backend {
        Some(b) => b.parse().map_err(|e: stgabor::Error| CliError::Usage(e.to_string()))?,
        None => cfg.backend,
    };
    let opts = ConvolutionOptions::with_backend(backend);
    let video = load_input(&a.input, cfg.crop, cfg.frames)?;
    let support = default_support(&params);
    Ok(if a.quadrature {
        quadrature_response_with_support(&video, &params, support, opts)?
    } else {
        let (even, _) = quadrature_kernels(&params, support)?;
        convolve::convolve(&video, &even, opts)?
    })
}

pub fn convolve(cfg: RunConfig, a: ConvolveArgs) -> Result<(), CliError> {
    let response = filtered(&cfg, &a)?;
    save_volume(&response, &a.out)?;
    let described = describe_params(&filter_params(&a.filter)?);
    write_meta(
        &a.out,
        &[
            (
                "kind",
                if a.quadrature {
                    "quadrature_magnitude"
                } else {
                    "response"
                }
                .into(),
            ),
            ("input", a.input.display().to_string()),
            ("params", described.clone()),
            ("fingerprint", fingerprint_of(&described)),
        ],
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_header_comments_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "path,label\n# note\na.stv,water\n\"b c.stv\", fire\n").unwrap();
        let e = read_manifest(&m).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].path, "b c.stv");
        assert_eq!(e[1].label, "fire");
        assert_eq!(e[0].resolved, dir.path().join("a.stv"));
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.csv");
        std::fs::write(&m, "a.stv,water\nb.stv\n").unwrap();
        match read_manifest(&m) {
            Err(CliError::Data(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
        std::fs::write(&m, "path,label\n").unwrap();
        assert!(matches!(read_manifest(&m), Err(CliError::Data(_))));
    }

    #[test]
    fn meta_sits_next_to_output() {
        assert_eq!(meta_path(Path::new("out/k.stv")), PathBuf::from("out/k.stv.meta"));
    }
}
