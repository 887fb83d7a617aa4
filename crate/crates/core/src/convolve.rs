//! Zero-padded, same-extent 3D convolution with a direct and a spectral backend.
//!
//! For a kernel `K` with origin `o` the output is
//!
//! ```text
//! r(x, y, t) = Σ K[i, j, k] · I(x - (i - o.x), y - (j - o.y), t - (k - o.t))
//! ```
//!
//! with `I` taken as zero outside the video. A unit impulse at the kernel
//! origin therefore reproduces the video exactly.

use std::borrow::Cow;

use ndarray::{Array3, ArrayView3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{next_fast_len, Fft3};
use crate::volume::{Origin, Volume};

/// `auto` switches to the spectral backend once
/// `kernel voxels × video voxels` exceeds this many multiply-adds.
pub const AUTO_SPECTRAL_THRESHOLD: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Backend {
    Direct,
    Spectral,
    #[default]
    Auto,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Backend::Direct),
            "spectral" | "fft" => Ok(Backend::Spectral),
            "auto" => Ok(Backend::Auto),
            other => Err(Error::invalid_parameter(format!(
                "unknown backend '{other}' (expected direct|spectral|auto)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Boundary {
    #[default]
    ZeroPad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OutputExtent {
    #[default]
    SameAsInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ConvolutionOptions {
    pub backend: Backend,
    pub boundary: Boundary,
    pub output_extent: OutputExtent,
}

impl ConvolutionOptions {
    pub fn with_backend(backend: Backend) -> Self {
        ConvolutionOptions {
            backend,
            ..Default::default()
        }
    }

    fn use_spectral(&self, video_voxels: usize, kernel_voxels: usize) -> bool {
        match self.backend {
            Backend::Direct => false,
            Backend::Spectral => true,
            Backend::Auto => kernel_voxels.saturating_mul(video_voxels) > AUTO_SPECTRAL_THRESHOLD,
        }
    }
}

pub fn convolve(video: &Volume, kernel: &Volume, opts: ConvolutionOptions) -> Result<Volume> {
    if opts.use_spectral(video.len(), kernel.len()) {
        let plan = SpectralPlan::new(video, [kernel])?;
        plan.convolve(kernel)
    } else {
        direct(video, kernel)
    }
}

/// Convolves one video with every kernel. The spectral path transforms the
/// video once and evaluates kernels two at a time through the real and
/// imaginary parts of one complex product.
pub fn convolve_bank(video: &Volume, kernels: &[Volume], opts: ConvolutionOptions) -> Result<Vec<Volume>> {
    if kernels.is_empty() {
        return Err(Error::invalid_input("kernel bank is empty"));
    }
    let largest = kernels.iter().map(Volume::len).max().unwrap_or(0);
    if opts.use_spectral(video.len(), largest) {
        let plan = SpectralPlan::new(video, kernels)?;
        let pairs: Vec<Result<(Volume, Option<Volume>)>> = kernels
            .par_chunks(2)
            .map(|pair| plan.convolve_pair(&pair[0], pair.get(1)))
            .collect();
        let mut out = Vec::with_capacity(kernels.len());
        for pair in pairs {
            let (a, b) = pair?;
            out.push(a);
            out.extend(b);
        }
        Ok(out)
    } else {
        kernels.par_iter().map(|k| direct(video, k)).collect()
    }
}

fn check_finite(data: &Array3<f64>) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric("convolution produced a non-finite value"))
    }
}

/// Spatial-domain convolution. Each output frame is computed independently;
/// the per-voxel summation order is fixed by the kernel tap order.
pub fn direct(video: &Volume, kernel: &Volume) -> Result<Volume> {
    let vdata = standard(video.array());
    let kdata = standard(kernel.array());
    let (vt, vh, vw) = vdata.dim();
    let (kt, kh, kw) = kdata.dim();
    let o = kernel.origin();
    let vs = vdata.as_slice().expect("standard layout");
    let ks = kdata.as_slice().expect("standard layout");

    let mut out = Array3::<f64>::zeros((vt, vh, vw));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(t, mut plane)| {
            let plane = plane.as_slice_mut().expect("standard layout");
            for k in 0..kt {
                let st = t as i64 + o.t - k as i64;
                if st < 0 || st >= vt as i64 {
                    continue;
                }
                let vplane = &vs[st as usize * vh * vw..(st as usize + 1) * vh * vw];
                for j in 0..kh {
                    for y in 0..vh {
                        let sy = y as i64 + o.y - j as i64;
                        if sy < 0 || sy >= vh as i64 {
                            continue;
                        }
                        let vrow = &vplane[sy as usize * vw..(sy as usize + 1) * vw];
                        let orow = &mut plane[y * vw..(y + 1) * vw];
                        for i in 0..kw {
                            let w = ks[(k * kh + j) * kw + i];
                            if w == 0.0 {
                                continue;
                            }
                            let d = o.x - i as i64;
                            let x0 = (-d).max(0) as usize;
                            let x1 = (vw as i64 - d).min(vw as i64);
                            if x1 <= x0 as i64 {
                                continue;
                            }
                            let x1 = x1 as usize;
                            let src = &vrow[(x0 as i64 + d) as usize..(x1 as i64 + d) as usize];
                            for (dst, s) in orow[x0..x1].iter_mut().zip(src) {
                                *dst += w * s;
                            }
                        }
                    }
                }
            }
        });
    check_finite(&out)?;
    Ok(Volume::from_array_unchecked(out, Origin::ZERO))
}

fn standard(a: &Array3<f64>) -> Cow<'_, Array3<f64>> {
    if a.is_standard_layout() {
        Cow::Borrowed(a)
    } else {
        Cow::Owned(a.as_standard_layout().into_owned())
    }
}

/// Cached forward transform of one video, padded to hold the linear
/// convolution with any kernel up to a fixed size.
pub struct SpectralPlan {
    fft: Fft3,
    video_shape: [usize; 3],
    max_kernel_shape: [usize; 3],
    spectrum: Array3<Complex64>,
}

impl SpectralPlan {
    /// Prepares a plan that accepts any kernel no larger than the largest of `kernels`.
    pub fn new<'a>(video: &Volume, kernels: impl IntoIterator<Item = &'a Volume>) -> Result<Self> {
        let mut max_kernel_shape = [1usize; 3];
        for k in kernels {
            let (t, h, w) = k.array().dim();
            max_kernel_shape = [
                max_kernel_shape[0].max(t),
                max_kernel_shape[1].max(h),
                max_kernel_shape[2].max(w),
            ];
        }
        let (t, h, w) = video.array().dim();
        let video_shape = [t, h, w];
        let padded = [0, 1, 2].map(|a| next_fast_len(video_shape[a] + max_kernel_shape[a] - 1));
        let fft = Fft3::new(padded);
        let mut spectrum = Array3::<Complex64>::zeros(padded);
        spectrum
            .slice_mut(ndarray::s![..t, ..h, ..w])
            .zip_mut_with(video.array(), |dst, &v| *dst = Complex64::new(v, 0.0));
        fft.forward(&mut spectrum);
        Ok(SpectralPlan {
            fft,
            video_shape,
            max_kernel_shape,
            spectrum,
        })
    }

    pub fn convolve(&self, kernel: &Volume) -> Result<Volume> {
        Ok(self.convolve_pair(kernel, None)?.0)
    }

    /// Convolves with `a` (real part) and optionally `b` (imaginary part) in
    /// one complex pass.
    pub fn convolve_pair(&self, a: &Volume, b: Option<&Volume>) -> Result<(Volume, Option<Volume>)> {
        let full = self.full_product(a, b)?;
        let first = self.crop(&full, a.origin(), |z| z.re);
        let second = b.map(|b| self.crop(&full, b.origin(), |z| z.im));
        check_finite(first.array())?;
        if let Some(s) = &second {
            check_finite(s.array())?;
        }
        Ok((first, second))
    }

    fn full_product(&self, a: &Volume, b: Option<&Volume>) -> Result<Array3<Complex64>> {
        for k in std::iter::once(a).chain(b) {
            let (t, h, w) = k.array().dim();
            if t > self.max_kernel_shape[0] || h > self.max_kernel_shape[1] || w > self.max_kernel_shape[2] {
                return Err(Error::invalid_input(format!(
                    "kernel {w}x{h}x{t} exceeds the plan's padding"
                )));
            }
        }
        let mut buf = Array3::<Complex64>::zeros(self.fft.shape());
        place(&mut buf, a.array().view(), |dst, v| dst.re = v);
        if let Some(b) = b {
            place(&mut buf, b.array().view(), |dst, v| dst.im = v);
        }
        self.fft.forward(&mut buf);
        ndarray::Zip::from(&mut buf)
            .and(&self.spectrum)
            .par_for_each(|k, &v| *k *= v);
        self.fft.inverse(&mut buf);
        Ok(buf)
    }

    fn crop(&self, full: &Array3<Complex64>, origin: Origin, part: impl Fn(&Complex64) -> f64) -> Volume {
        let [t, h, w] = self.video_shape;
        let (ot, oy, ox) = (origin.t as usize, origin.y as usize, origin.x as usize);
        let view = full.slice(ndarray::s![ot..ot + t, oy..oy + h, ox..ox + w]);
        Volume::from_array_unchecked(view.map(part), Origin::ZERO)
    }
}

fn place(buf: &mut Array3<Complex64>, kernel: ArrayView3<f64>, set: impl Fn(&mut Complex64, f64)) {
    let (t, h, w) = kernel.dim();
    buf.slice_mut(ndarray::s![..t, ..h, ..w])
        .zip_mut_with(&kernel, |dst, &v| set(dst, v));
}
