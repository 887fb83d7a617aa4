//! Dense `(x, y, t)` scalar grids used for videos, kernels and responses.
//!
//! Storage is an `Array3<f64>` with shape `[T, H, W]`, so `x` is the
//! fastest-varying (contiguous) axis. All public accessors take `(x, y, t)`.

use ndarray::Array3;

use crate::error::{Error, Result};

/// Integer coordinate of the grid point that represents `(x=0, y=0, t=0)`.
///
/// Videos use the zero origin. Kernels are centered spatially and causal in
/// time, so a kernel with half-width `h` has origin `(h, h, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Origin {
    pub x: i64,
    pub y: i64,
    pub t: i64,
}

impl Origin {
    pub const ZERO: Origin = Origin { x: 0, y: 0, t: 0 };

    pub fn new(x: i64, y: i64, t: i64) -> Self {
        Origin { x, y, t }
    }
}

/// Width, height and frame count of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Extent {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl Extent {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        Extent { width, height, frames }
    }

    pub fn voxels(&self) -> usize {
        self.width * self.height * self.frames
    }

    fn shape(&self) -> [usize; 3] {
        [self.frames, self.height, self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Array3<f64>,
    origin: Origin,
}

impl Volume {
    /// Wraps an array of shape `[T, H, W]`. Rejects empty extents and
    /// non-finite values.
    pub fn from_array(data: Array3<f64>, origin: Origin) -> Result<Self> {
        if data.is_empty() {
            let (t, h, w) = data.dim();
            return Err(Error::InvalidExtent(format!(
                "volume extent {w}x{h}x{t} has an empty axis"
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("volume contains non-finite value {bad}")));
        }
        Ok(Volume { data, origin })
    }

    /// Builds a volume from values laid out with `x` fastest, then `y`, then `t`.
    pub fn from_vec(extent: Extent, values: Vec<f64>, origin: Origin) -> Result<Self> {
        if extent.voxels() == 0 {
            return Err(Error::InvalidExtent(format!(
                "volume extent {}x{}x{} has an empty axis",
                extent.width, extent.height, extent.frames
            )));
        }
        if values.len() != extent.voxels() {
            return Err(Error::invalid_input(format!(
                "expected {} values for extent {}x{}x{}, got {}",
                extent.voxels(),
                extent.width,
                extent.height,
                extent.frames,
                values.len()
            )));
        }
        let data = Array3::from_shape_vec(extent.shape(), values).map_err(|e| Error::invalid_input(e.to_string()))?;
        Volume::from_array(data, origin)
    }

    pub fn zeros(extent: Extent) -> Result<Self> {
        Volume::from_fn(extent, Origin::ZERO, |_, _, _| 0.0)
    }

    /// Evaluates `f(x, y, t)` at every grid index (not origin-relative).
    pub fn from_fn(extent: Extent, origin: Origin, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        if extent.voxels() == 0 {
            return Err(Error::InvalidExtent(format!(
                "volume extent {}x{}x{} has an empty axis",
                extent.width, extent.height, extent.frames
            )));
        }
        let data = Array3::from_shape_fn(extent.shape(), |(t, y, x)| f(x, y, t));
        Volume::from_array(data, origin)
    }

    pub(crate) fn from_array_unchecked(data: Array3<f64>, origin: Origin) -> Self {
        debug_assert!(!data.is_empty());
        Volume { data, origin }
    }

    pub fn extent(&self) -> Extent {
        let (t, h, w) = self.data.dim();
        Extent::new(w, h, t)
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: volumes never have an empty axis.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[[t, y, x]]
    }

    /// Shape `[T, H, W]` view of the samples.
    pub fn array(&self) -> &Array3<f64> {
        &self.data
    }

    /// Samples in `x`-fastest order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.iter().copied().collect()
    }

    /// One frame as rows of samples (`rows[y][x]`).
    pub fn frame_rows(&self, t: usize) -> Vec<Vec<f64>> {
        let plane = self.data.index_axis(ndarray::Axis(0), t);
        plane.outer_iter().map(|row| row.to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Result<Volume> {
        Volume::from_array(self.data.mapv(|v| v * factor), self.origin)
    }

    /// Mirrors the volume in `x` and `y` about its origin: the returned
    /// volume holds `v(-x, -y, t)`.
    pub fn mirrored_spatial(&self) -> Volume {
        let (_, h, w) = self.data.dim();
        let mut data = self.data.clone();
        data.invert_axis(ndarray::Axis(1));
        data.invert_axis(ndarray::Axis(2));
        let origin = Origin::new(
            w as i64 - 1 - self.origin.x,
            h as i64 - 1 - self.origin.y,
            self.origin.t,
        );
        Volume {
            data: data.as_standard_layout().into_owned(),
            origin,
        }
    }

    /// Sub-volume `[x0, x0+w) x [y0, y0+h) x [t0, t0+frames)`; origin reset to zero.
    pub fn crop(&self, x0: usize, y0: usize, t0: usize, extent: Extent) -> Result<Volume> {
        let (t, h, w) = self.data.dim();
        if extent.voxels() == 0 || x0 + extent.width > w || y0 + extent.height > h || t0 + extent.frames > t {
            return Err(Error::invalid_parameter(format!(
                "crop {}x{}x{} at ({x0},{y0},{t0}) exceeds volume {w}x{h}x{t}",
                extent.width, extent.height, extent.frames
            )));
        }
        let view = self.data.slice(ndarray::s![
            t0..t0 + extent.frames,
            y0..y0 + extent.height,
            x0..x0 + extent.width
        ]);
        Ok(Volume::from_array_unchecked(view.to_owned(), Origin::ZERO))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(
            Volume::zeros(Extent::new(0, 2, 2)),
            Err(Error::InvalidExtent(_))
        ));
        let bad = Volume::from_vec(Extent::new(1, 1, 2), vec![0.0, f64::NAN], Origin::ZERO);
        assert!(matches!(bad, Err(Error::Numeric(_))));
    }

    #[test]
    fn indexing_is_x_fastest() {
        let v = Volume::from_vec(Extent::new(3, 2, 2), (0..12).map(f64::from).collect(), Origin::ZERO).unwrap();
        assert_eq!(v.get(1, 0, 0), 1.0);
        assert_eq!(v.get(0, 1, 0), 3.0);
        assert_eq!(v.get(0, 0, 1), 6.0);
        assert_eq!(v.get(2, 1, 1), 11.0);
    }

    #[test]
    fn mirror_flips_about_origin() {
        let v = Volume::from_fn(Extent::new(3, 3, 2), Origin::new(1, 1, 0), |x, y, t| {
            (x + 10 * y + 100 * t) as f64
        })
        .unwrap();
        let m = v.mirrored_spatial();
        assert_eq!(m.origin(), Origin::new(1, 1, 0));
        assert_eq!(m.get(0, 0, 1), v.get(2, 2, 1));
        assert_eq!(m.get(2, 1, 0), v.get(0, 1, 0));
    }
}
