//! Separable 3D FFT over `[T, H, W]` complex arrays.

use std::sync::Arc;

use ndarray::{Array3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest `m >= n` whose only prime factors are 2, 3, 5 and 7.
pub(crate) fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

pub(crate) struct Fft3 {
    shape: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub(crate) fn new(shape: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.map(|n| planner.plan_fft_forward(n));
        let inverse = shape.map(|n| planner.plan_fft_inverse(n));
        Fft3 {
            shape,
            forward,
            inverse,
        }
    }

    pub(crate) fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub(crate) fn forward(&self, data: &mut Array3<Complex64>) {
        debug_assert_eq!(data.shape(), &self.shape);
        for axis in [2, 1, 0] {
            transform_axis(data, axis, &self.forward[axis]);
        }
    }

    /// Inverse transform including the `1/N` normalization.
    pub(crate) fn inverse(&self, data: &mut Array3<Complex64>) {
        debug_assert_eq!(data.shape(), &self.shape);
        for axis in [0, 1, 2] {
            transform_axis(data, axis, &self.inverse[axis]);
        }
        let scale = 1.0 / data.len() as f64;
        data.par_mapv_inplace(|z| z * scale);
    }
}

fn transform_axis(data: &mut Array3<Complex64>, axis: usize, plan: &Arc<dyn Fft<f64>>) {
    let n = data.len_of(Axis(axis));
    if n == 1 {
        return;
    }
    let scratch_len = plan.get_inplace_scratch_len();
    Zip::from(data.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
        let mut scratch = vec![Complex64::default(); scratch_len];
        match lane.as_slice_mut() {
            Some(slice) => plan.process_with_scratch(slice, &mut scratch),
            None => {
                let mut buf: Vec<Complex64> = lane.iter().copied().collect();
                plan.process_with_scratch(&mut buf, &mut scratch);
                lane.iter_mut().zip(buf).for_each(|(dst, src)| *dst = src);
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_lengths() {
        assert_eq!(next_fast_len(1), 1);
        assert_eq!(next_fast_len(11), 12);
        assert_eq!(next_fast_len(84), 84);
        assert_eq!(next_fast_len(97), 98);
    }

    #[test]
    fn round_trip_and_dc() {
        let shape = [3, 4, 5];
        let fft = Fft3::new(shape);
        let orig = Array3::from_shape_fn(shape, |(t, y, x)| {
            Complex64::new((t * 20 + y * 5 + x) as f64, 0.5 * x as f64)
        });
        let mut data = orig.clone();
        fft.forward(&mut data);
        let sum: Complex64 = orig.iter().sum();
        assert!((data[[0, 0, 0]] - sum).norm() < 1e-9);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
