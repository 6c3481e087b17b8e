use audiomark_core::audio::{speech_like, white_noise, SynthVoice, Waveform};
use audiomark_core::metrics::{log_spectral_distance, proxy_from_distance, quality_proxy, QUALITY_D0};
use audiomark_core::perturbations::scale_to_snr;
use audiomark_core::Seed;

const CLIPS: u64 = 50;

fn corpus() -> Vec<Waveform> {
    (0..CLIPS)
        .map(|i| {
            let seed = Seed(100).derive_index(i);
            speech_like(seed, SynthVoice::random(seed.derive("voice")), 1.0, 16000).unwrap()
        })
        .collect()
}

fn noisy(s: &Waveform, i: u64, snr_db: f64) -> Waveform {
    let noise = white_noise(Seed(i).derive("noise"), s.len(), s.sample_rate(), 1.0).unwrap();
    s.with_samples(scale_to_snr(s.samples(), noise.samples(), snr_db).unwrap()).unwrap()
}

/// Mean distance of 20 dB white noise over the corpus; `D0 = D20 / ln 2`
/// puts that distance at a proxy score of exactly 3.
#[test]
fn proxy_calibration() {
    let clips = corpus();
    let d20: f64 = clips
        .iter()
        .enumerate()
        .map(|(i, s)| log_spectral_distance(s, &noisy(s, i as u64, 20.0)).unwrap())
        .sum::<f64>()
        / clips.len() as f64;
    let d0 = d20 / std::f64::consts::LN_2;
    eprintln!("D20 = {d20:.4}, D0 = {d0:.4}");
    assert!((QUALITY_D0 - d0).abs() < 0.005, "D0 should be {d0:.4}");
    assert!((proxy_from_distance(d20) - 3.0).abs() < 2e-3);
}

#[test]
fn silence_scores_low() {
    for s in corpus().iter().take(10) {
        let zero = Waveform::zeros(s.len(), s.sample_rate()).unwrap();
        let q = quality_proxy(s, &zero).unwrap();
        assert!(q.proxy_moslike < 1.5, "{}", q.proxy_moslike);
    }
}

#[test]
fn monotone_in_noise_power() {
    for (i, s) in corpus().iter().take(10).enumerate() {
        let scores: Vec<f64> = [0.0, 10.0, 20.0, 30.0, 40.0, 60.0]
            .iter()
            .map(|&snr| quality_proxy(s, &noisy(s, i as u64, snr)).unwrap().proxy_moslike)
            .collect();
        assert!(scores.windows(2).all(|w| w[1] >= w[0]), "{scores:?}");
    }
}
