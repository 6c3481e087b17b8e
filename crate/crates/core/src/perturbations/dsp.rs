use std::f64::consts::PI;

use realfft::RealFftPlanner;

use crate::audio::{mean_power, Complex64};
use crate::error::{Error, Result};

/// One second-order section `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Biquad = [f64; 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterBand {
    Lowpass,
    Highpass,
}

/// Digital Butterworth filter of even `order` as second-order sections,
/// designed by the bilinear transform with pre-warping. `cutoff` is a
/// fraction of Nyquist in (0, 1).
pub fn butterworth(order: usize, cutoff: f64, band: FilterBand) -> Result<Vec<Biquad>> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::InvalidConfig(format!("Butterworth order {order} must be even")));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidConfig(format!("cutoff {cutoff} outside (0, 1)")));
    }
    // bilinear transform with fs = 2
    let fs2 = 4.0;
    let warped = fs2 * (PI * cutoff / 2.0).tan();
    let n = order as f64;
    let mut sections = Vec::with_capacity(order / 2);
    for k in 0..order / 2 {
        // upper-half-plane prototype pole
        let theta = PI * (2.0 * k as f64 + 1.0 + n) / (2.0 * n);
        let proto = Complex64::new(theta.cos(), theta.sin());
        let analog = match band {
            FilterBand::Lowpass => proto * warped,
            FilterBand::Highpass => Complex64::new(warped, 0.0) / proto,
        };
        let z = (Complex64::new(fs2, 0.0) + analog) / (Complex64::new(fs2, 0.0) - analog);
        let (a1, a2) = (-2.0 * z.re, z.norm_sqr());
        let (b1, probe) = match band {
            FilterBand::Lowpass => (2.0, 1.0),
            FilterBand::Highpass => (-2.0, -1.0),
        };
        // unit gain at DC (lowpass) or Nyquist (highpass)
        let num = 1.0 + b1 * probe + 1.0;
        let den = 1.0 + a1 * probe + a2;
        let g = den / num;
        sections.push([g, g * b1, g, a1, a2]);
    }
    Ok(sections)
}

/// Causal cascade filtering, transposed direct form II, zero initial state.
pub fn sosfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &[b0, b1, b2, a1, a2] in sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let input = *v;
            let out = b0 * input + z1;
            z1 = b1 * input - a1 * out + z2;
            z2 = b2 * input - a2 * out;
            *v = out;
        }
    }
    y
}

/// Uniform mid-rise quantizer with `levels` cells over [-1, 1].
pub fn quantize(x: &[f64], levels: usize) -> Vec<f64> {
    let step = 2.0 / levels as f64;
    let top = (levels - 1) as f64;
    x.iter()
        .map(|&v| {
            let idx = ((v + 1.0) / step).floor().clamp(0.0, top);
            -1.0 + (idx + 0.5) * step
        })
        .collect()
}

/// Normalised Gaussian kernel of `len` taps with sigma `len / 6`.
pub fn gaussian_kernel(len: usize) -> Vec<f64> {
    let sigma = len as f64 / 6.0;
    let center = (len as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - center;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// "Same"-length convolution with edge replication.
pub fn convolve_same_edge(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let offset = (kernel.len() as isize - 1) / 2;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, &k)| {
                    let idx = (i + j as isize - offset).clamp(0, n - 1);
                    k * x[idx as usize]
                })
                .sum()
        })
        .collect()
}

pub const ECHO_DECAY: f64 = 0.5;

/// `x + 0.5 x[n - delay]`, scaled down to unit peak if it overshoots.
pub fn echo(x: &[f64], delay: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    for i in delay..x.len() {
        y[i] += ECHO_DECAY * x[i - delay];
    }
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        y.iter_mut().for_each(|v| *v /= peak);
    }
    y
}

/// Scale `noise` so that adding it to `signal` gives exactly `snr_db`.
pub fn scale_to_snr(signal: &[f64], noise: &[f64], snr_db: f64) -> Result<Vec<f64>> {
    let ps = mean_power(signal);
    if ps == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let pn = mean_power(noise);
    if pn == 0.0 {
        return Err(Error::InvalidConfig("noise source is silent".into()));
    }
    let gain = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(signal.iter().zip(noise).map(|(s, n)| s + gain * n).collect())
}

/// 1/f-shaped noise: white noise with its spectrum scaled by `1/sqrt(f)`.
pub fn pink_from_white(white: &[f64]) -> Vec<f64> {
    let n = white.len();
    if n < 2 {
        return white.to_vec();
    }
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = white.to_vec();
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).expect("sized by planner");
    spec[0] = Complex64::new(0.0, 0.0);
    for (k, z) in spec.iter_mut().enumerate().skip(1) {
        *z /= (k as f64).sqrt();
    }
    if n % 2 == 0 {
        let last = spec.len() - 1;
        spec[last].im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out).expect("sized by planner");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() < tol, "sample {i}: {x} vs {y}");
        }
    }

    // scipy.signal.sosfilt(butter(6, wn, btype, output="sos"), unit impulse)
    const LOW_025: [f64; 24] = [
        1.05164679630761039e-03, 9.44224223236044512e-03, 3.95490066723265740e-02,
        1.03205077831467540e-01, 1.88780062309870128e-01, 2.56737626527497043e-01,
        2.65007504444870423e-01, 2.01291697376966644e-01, 9.25835487581565530e-02,
        -1.31159927126036219e-02, -7.56966543485537990e-02, -8.23134000493467854e-02,
        -4.80768122107699258e-02, -2.11234635416594155e-03, 2.99445190475162333e-02,
        3.70631912585147744e-02, 2.36888368840172912e-02, 2.84383196265471832e-03,
        -1.28671370749030671e-02, -1.72992415580819799e-02, -1.17813881776924270e-02,
        -2.14070893693698184e-03, 5.56939037606254787e-03, 8.13010735292223410e-03,
    ];
    const HIGH_010: [f64; 24] = [
        5.43297737226649646e-01, -6.58946539036165291e-01, -2.47561457809088503e-01,
        -4.72180348268508299e-03, 1.17706008092500813e-01, 1.58561197163471834e-01,
        1.48394345191072752e-01, 1.10466819302553421e-01, 6.17382974003363796e-02,
        1.38341584792271190e-02, -2.60181733316267455e-02, -5.40970976569459666e-02,
        -6.93534768942443702e-02, -7.26507921998593709e-02, -6.60923832545863843e-02,
        -5.24468107974152831e-02, -3.46787066489350065e-02, -1.55879986470153341e-02,
        2.44445064713277177e-03, 1.76115120590735370e-02, 2.87457234676420544e-02,
        3.53108077717583096e-02, 3.73353272117145640e-02, 3.53060094979538996e-02,
    ];
    const LOW_050: [f64; 24] = [
        2.95882236386607531e-02, 1.77529341831964532e-01, 4.20812712537642297e-01,
        4.53700620519601139e-01, 1.13180049213701436e-01, -1.95585547406464610e-01,
        -1.06539820216989323e-01, 9.99828996689332561e-02, 6.91936795097654600e-02,
        -5.62149364556146364e-02, -4.18430288115352877e-02, 3.26425952308457765e-02,
        2.48258194571570265e-02, -1.91413637265703158e-02, -1.46496427178982765e-02,
        1.12568238580213597e-02, 8.63113772085816362e-03, -6.62560849248540733e-03,
        -5.08288834764856080e-03, 3.90070126741301352e-03, 2.99292121685642513e-03,
        -2.29662880861898015e-03, -1.76223230061023795e-03, 1.35222205815051059e-03,
    ];

    #[test]
    fn butterworth_impulse_responses_match_reference() {
        let cases: [(f64, FilterBand, &[f64; 24]); 3] = [
            (0.25, FilterBand::Lowpass, &LOW_025),
            (0.1, FilterBand::Highpass, &HIGH_010),
            (0.5, FilterBand::Lowpass, &LOW_050),
        ];
        for (wn, band, want) in cases {
            let sos = butterworth(6, wn, band).unwrap();
            assert_eq!(sos.len(), 3);
            assert_close(&sosfilt(&sos, &impulse(24)), want, 1e-12);
        }
    }

    #[test]
    fn quantizer_cells() {
        let q = quantize(&[-1.0, -0.01, 0.01, 0.99, 1.0, 3.0], 4);
        assert_eq!(q, vec![-0.75, -0.25, 0.25, 0.75, 0.75, 0.75]);
    }

    #[test]
    fn gaussian_kernel_is_symmetric_and_normalised() {
        for len in [6, 7, 22] {
            let k = gaussian_kernel(len);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..len {
                assert!((k[i] - k[len - 1 - i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn smoothing_keeps_constants() {
        let y = convolve_same_edge(&[0.3; 50], &gaussian_kernel(10));
        assert_close(&y, &[0.3; 50], 1e-12);
    }

    #[test]
    fn echo_adds_delayed_copy() {
        let y = echo(&[0.2, 0.0, 0.0, 0.4], 2);
        assert_close(&y, &[0.2, 0.0, 0.1, 0.4], 1e-15);
        let loud = echo(&[0.9, 0.9], 1);
        assert!((loud[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pink_noise_tilts_down() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::Seed(4).rng();
        let white: Vec<f64> = (0..8192).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pink = pink_from_white(&white);
        assert_eq!(pink.len(), white.len());
        let p = crate::audio::StftParams::default();
        let cf = crate::audio::stft_complex(&pink, &p).unwrap();
        let band = |lo: usize, hi: usize| -> f64 {
            (0..cf.frames)
                .map(|f| cf.frame(f)[lo..hi].iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                / (hi - lo) as f64
        };
        // 1/f power: an octave band around bin 8 carries ~16x the per-bin power of bin 128
        let ratio = band(6, 12) / band(96, 192);
        assert!(ratio > 8.0 && ratio < 32.0, "{ratio}");
    }
}
