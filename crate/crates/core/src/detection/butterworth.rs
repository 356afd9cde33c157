//! Digital Butterworth band-pass design as cascaded biquads, and zero-phase
//! application.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Biquad = [f64; 5];

/// Band-pass of prototype order `order` between `low_hz` and `high_hz`,
/// designed by the bilinear transform with pre-warped edges.
pub fn design_bandpass(order: usize, low_hz: f64, high_hz: f64, rate: f64) -> Result<Vec<Biquad>> {
    let nyquist = rate / 2.0;
    if order == 0 || !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::Config(format!(
            "band-pass [{low_hz}, {high_hz}] Hz of order {order} is infeasible at {rate} Hz"
        )));
    }
    let fs2 = 2.0 * rate;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / rate).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;

    // Analog low-pass prototype poles on the left half of the unit circle.
    let n = order as f64;
    let mut poles = Vec::with_capacity(2 * order);
    for i in 0..order {
        let m = -(n - 1.0) + 2.0 * i as f64;
        let p = -Complex64::from_polar(1.0, std::f64::consts::PI * m / (2.0 * n));
        // Low-pass to band-pass: each pole splits into two.
        let p = p * (bw / 2.0);
        let root = (p * p - w0 * w0).sqrt();
        poles.push(p + root);
        poles.push(p - root);
    }
    // Prototype gain 1 becomes bw^order; `order` zeros sit at s = 0.
    let mut gain = bw.powi(order as i32);
    let mut digital = Vec::with_capacity(poles.len());
    let mut denom = Complex64::new(1.0, 0.0);
    for p in &poles {
        digital.push((fs2 + p) / (fs2 - p));
        denom *= fs2 - p;
    }
    // Zeros at s = 0 contribute fs2 each to the numerator product.
    gain *= (Complex64::new(fs2.powi(order as i32), 0.0) / denom).re;

    // Conjugate pole pairs; each section gets one zero at z = 1 and one at z = -1.
    let mut upper: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > 1e-12 * p.norm()).collect();
    let mut real: Vec<f64> = digital.iter().filter(|p| p.im.abs() <= 1e-12 * p.norm()).map(|p| p.re).collect();
    if upper.len() * 2 + real.len() != digital.len() || real.len() % 2 != 0 {
        return Err(Error::Config("band-pass design produced unpaired poles".into()));
    }
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);
    let mut sections: Vec<Biquad> = upper
        .iter()
        .map(|p| [1.0, 0.0, -1.0, -2.0 * p.re, p.norm_sqr()])
        .collect();
    for pair in real.chunks(2) {
        sections.push([1.0, 0.0, -1.0, -(pair[0] + pair[1]), pair[0] * pair[1]]);
    }
    let per = gain.abs().powf(1.0 / sections.len() as f64);
    for (i, s) in sections.iter_mut().enumerate() {
        let g = if i == 0 { per * gain.signum() } else { per };
        s[0] *= g;
        s[1] *= g;
        s[2] *= g;
    }
    Ok(sections)
}

/// Complex response of the cascade at `freq_hz`.
pub fn frequency_response(sections: &[Biquad], freq_hz: f64, rate: f64) -> Complex64 {
    let z1 = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * freq_hz / rate);
    let z2 = z1 * z1;
    sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
        acc * (s[0] + s[1] * z1 + s[2] * z2) / (1.0 + s[3] * z1 + s[4] * z2)
    })
}

fn dc_gain(s: &Biquad) -> f64 {
    (s[0] + s[1] + s[2]) / (1.0 + s[3] + s[4])
}

/// Filters `x` through the cascade in transposed direct form II, starting
/// each section from the steady state of a constant input equal to `x[0]`.
fn cascade(sections: &[Biquad], x: &mut [f64]) {
    let mut level = x[0];
    for s in sections {
        let g = dc_gain(s);
        let y0 = g * level;
        let mut z1 = s[2] * level - s[4] * y0;
        let mut z0 = s[1] * level - s[3] * y0 + z1;
        for v in x.iter_mut() {
            let input = *v;
            let y = s[0] * input + z0;
            z0 = s[1] * input - s[3] * y + z1;
            z1 = s[2] * input - s[4] * y;
            *v = y;
        }
        level = y0;
    }
}

/// Padding on each side, in multiples of the signal length, so the start-up
/// transient of the narrowest band has died out before the data begins.
const PAD_LENGTHS: usize = 3;

/// Forward-backward filtering, giving zero phase and the squared magnitude
/// response. Each end is extended with period-shifted copies of the signal
/// (`x[t ± period]`), which continues a repetitive signal without the kinks
/// that reflection introduces.
pub fn filtfilt(sections: &[Biquad], x: &[f64], period: usize) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let p = period.clamp(1, n);
    let pad = PAD_LENGTHS * n;
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for j in (1..=pad).rev() {
        ext.push(x[j.div_ceil(p) * p - j]);
    }
    ext.extend_from_slice(x);
    for j in 1..=pad {
        ext.push(x[n - 1 + j - j.div_ceil(p) * p]);
    }
    cascade(sections, &mut ext);
    ext.reverse();
    cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_peaks_inside_the_band() {
        let rate = 30.0;
        let s = design_bandpass(4, 0.2, 0.5, rate).unwrap();
        assert_eq!(s.len(), 4);
        let centre = frequency_response(&s, (0.2f64 * 0.5).sqrt(), rate).norm();
        assert!((centre - 1.0).abs() < 1e-4, "{centre}");
        // Edges of a Butterworth band are at -3 dB.
        for f in [0.2, 0.5] {
            let g = frequency_response(&s, f, rate).norm();
            assert!((g - 0.5f64.sqrt()).abs() < 1e-6, "{f}: {g}");
        }
        assert!(frequency_response(&s, 0.0, rate).norm() < 1e-9);
        assert!(frequency_response(&s, 14.99, rate).norm() < 1e-6);
    }

    #[test]
    fn direct_evaluation_of_sections_matches_the_impulse_response() {
        // Frequency response oracle: DFT of the (long) impulse response.
        let rate = 100.0;
        let s = design_bandpass(4, 5.0, 9.0, rate).unwrap();
        let n = 4000;
        let mut h = vec![0.0; n];
        h[0] = 1.0;
        // Zero initial state: prepend a zero so the steady state is zero.
        let mut padded = vec![0.0];
        padded.extend_from_slice(&h);
        cascade(&s, &mut padded);
        let h = &padded[1..];
        for f in [2.0, 5.0, 7.0, 9.0, 20.0] {
            let w = 2.0 * std::f64::consts::PI * f / rate;
            let dft: Complex64 = h.iter().enumerate().map(|(t, v)| Complex64::from_polar(*v, -w * t as f64)).sum();
            let r = frequency_response(&s, f, rate);
            assert!((dft - r).norm() < 1e-8, "{f}: {dft} vs {r}");
        }
    }

    #[test]
    fn infeasible_bands_are_rejected() {
        assert!(design_bandpass(4, 0.0, 1.0, 30.0).is_err());
        assert!(design_bandpass(4, 2.0, 1.0, 30.0).is_err());
        assert!(design_bandpass(4, 1.0, 15.0, 30.0).is_err());
    }
}
