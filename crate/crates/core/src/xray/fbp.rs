use std::f64::consts::PI;

use num_complex::Complex;
use rustfft::FftPlanner;

use super::{Image, Projector, Sinogram};
use crate::error::Result;
use crate::scalar::Real;

/// Apodization of the ramp filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RampWindow {
    #[default]
    None,
    Hann,
}

/// Frequency response of the band-limited ramp on `len` zero-padded bins,
/// built as the DFT of the spatial Ram-Lak kernel at detector spacing `ds`.
fn ramp_response(len: usize, ds: f64, window: RampWindow) -> Vec<Complex<f64>> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 1.0 / (4.0 * ds * ds);
    for k in 1..=len / 2 {
        if k % 2 == 1 {
            let v = -1.0 / (PI * PI * (k * k) as f64 * ds * ds);
            kernel[k].re = v;
            kernel[len - k].re = v;
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut kernel);
    for (k, h) in kernel.iter_mut().enumerate() {
        // the kernel is real and even, so its response is real
        let mut v = h.re * ds;
        if window == RampWindow::Hann {
            let f = k.min(len - k) as f64 / len as f64;
            v *= 0.5 + 0.5 * (2.0 * PI * f).cos();
        }
        *h = Complex::new(v, 0.0);
    }
    kernel
}

/// Ramp-filters every projection row (physical units, detector spacing `ds`).
pub fn ramp_filter<T: Real>(m: &Sinogram<T>, ds: f64, window: RampWindow) -> Sinogram<T> {
    let nd = m.num_detectors();
    let len = (2 * nd).next_power_of_two();
    let response = ramp_response(len, ds, window);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = Sinogram::zeros(m.num_angles(), nd);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for a in 0..m.num_angles() {
        buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(m.row(a)) {
            b.re = v.to_f64_lossy();
        }
        fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&response) {
            *b *= h.re;
        }
        inv.process(&mut buf);
        let row = &mut out.as_mut_slice()[a * nd..(a + 1) * nd];
        for (o, b) in row.iter_mut().zip(&buf) {
            *o = T::lit(b.re / len as f64);
        }
    }
    out
}

/// Filtered backprojection of a sinogram measured by `projector`.
///
/// The sinogram is taken in the projector's (possibly normalized) units; the
/// result is in image intensity units.
pub fn fbp<T: Real>(m: &Sinogram<T>, projector: &Projector<T>, window: RampWindow) -> Result<Image<T>> {
    let g = projector.geometry();
    let filtered = ramp_filter(m, g.detector_pitch, window);
    let back = projector.adjoint(&filtered)?;
    // undo the scale on the data and on the backprojector; the raw adjoint
    // carries one pixel pitch per unit of backprojected value
    let s = projector.scale().to_f64_lossy();
    let k = g.angle_step() / (g.pixel_pitch * s * s);
    Ok(back.scaled(T::lit(k)))
}
