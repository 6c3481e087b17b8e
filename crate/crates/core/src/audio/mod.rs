//! Audio value types, STFT/ISTFT, WAV I/O and resampling.

mod resample;
mod stft;
mod synth;
mod waveform;
mod wav;

pub use resample::{resample, resample_ratio};
pub use stft::{
    hann, istft, istft_complex, stft, stft_backward, stft_complex, ComplexFrames, Spectrogram,
    StftParams, WindowKind,
};
pub use synth::{speech_like, white_noise, SynthVoice, SYNTH_RMS};
pub use waveform::Waveform;
pub(crate) use stft::polar;
pub(crate) use waveform::mean_power;
pub use wav::{pcm16_round_trip, read_wav, write_wav};

pub use realfft::num_complex::Complex64;
