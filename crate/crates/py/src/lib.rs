//! Python bindings: schemes, perturbations, metrics, the white-box
//! attack and the no-box benchmark.
//!
//! Audio crosses the boundary as lists of floats at a given sample
//! rate; payloads as `0`/`1` strings. Built-in scheme keys and
//! perturbation seeds are derived from `seed` exactly as the CLI does.

use std::path::PathBuf;

use audiomark_core::audio::Waveform;
use audiomark_core::harness::{
    emit_report, generate_synthetic_corpus, run_nobox, RunConfig, RunContext, ReportFormat, ThresholdMode,
    SAMPLE_RATE,
};
use audiomark_core::metrics;
use audiomark_core::perturbations::{PerturbationKind, PerturbationSpec, Perturber};
use audiomark_core::schemes::{build_scheme, SchemeConfig, SchemeKind, WatermarkBits, WatermarkScheme};
use audiomark_core::whitebox::{whitebox_forge, whitebox_remove, WhiteboxConfig};
use audiomark_core::{Error, Seed};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(audiomark, AudiomarkError, PyException);

fn py_err(e: Error) -> PyErr {
    AudiomarkError::new_err(e.to_string())
}

fn waveform(samples: Vec<f64>, sample_rate: u32) -> PyResult<Waveform> {
    Waveform::new(samples, sample_rate).map_err(py_err)
}

fn scheme(name: &str, seed: u64, tau: Option<f64>) -> PyResult<Box<dyn WatermarkScheme>> {
    let kind = SchemeKind::parse(name).map_err(py_err)?;
    let mut cfg = SchemeConfig::builtin(kind, Seed(seed).derive("scheme")).map_err(py_err)?;
    if let Some(t) = tau {
        cfg = cfg.with_threshold(t);
    }
    cfg.validate().map_err(py_err)?;
    build_scheme(&cfg).map_err(py_err)
}

fn bits(s: &str, expected: usize) -> PyResult<WatermarkBits> {
    let w: WatermarkBits = s.parse().map_err(py_err)?;
    if w.len() != expected {
        return Err(py_err(Error::InvalidBits(format!(
            "payload has {} bits, the scheme expects {expected}",
            w.len()
        ))));
    }
    Ok(w)
}

/// One synthetic speech-like clip of the benchmark corpus.
#[pyfunction]
#[pyo3(signature = (seed, index, duration=1.0))]
fn synthetic_clip(seed: u64, index: usize, duration: f64) -> PyResult<Vec<f64>> {
    let w = audiomark_core::harness::synthetic_clip(Seed(seed), index, duration).map_err(py_err)?;
    Ok(w.into_samples())
}

/// Random payload of `n` bits.
#[pyfunction]
#[pyo3(signature = (n=16, seed=0))]
fn random_bits(n: usize, seed: u64) -> PyResult<String> {
    Ok(WatermarkBits::random(n, Seed(seed)).map_err(py_err)?.to_string())
}

/// Embed `payload` with a built-in scheme.
#[pyfunction]
#[pyo3(signature = (samples, payload, scheme_name="spread_spectrum", seed=0, sample_rate=SAMPLE_RATE))]
fn embed(py: Python<'_>, samples: Vec<f64>, payload: &str, scheme_name: &str, seed: u64, sample_rate: u32) -> PyResult<Vec<f64>> {
    let s = scheme(scheme_name, seed, None)?;
    let w = bits(payload, s.payload_bits())?;
    let x = waveform(samples, sample_rate)?;
    let out = py.detach(|| s.embed(&x, &w)).map_err(py_err)?;
    Ok(out.into_samples())
}

/// Detector decision and score. `payload` may be omitted for the
/// probability scheme.
#[pyfunction]
#[pyo3(signature = (samples, payload=None, scheme_name="spread_spectrum", seed=0, tau=None, sample_rate=SAMPLE_RATE))]
fn detect(
    samples: Vec<f64>,
    payload: Option<&str>,
    scheme_name: &str,
    seed: u64,
    tau: Option<f64>,
    sample_rate: u32,
) -> PyResult<(bool, Option<f64>)> {
    let s = scheme(scheme_name, seed, tau)?;
    let w = payload.map(|p| bits(p, s.payload_bits())).transpose()?;
    if w.is_none() && !s.rule().is_probability() {
        return Err(py_err(Error::InvalidBits(format!(
            "scheme `{}` needs the expected payload",
            s.name()
        ))));
    }
    let x = waveform(samples, sample_rate)?;
    let o = s.decode(&x, w.as_ref()).map_err(py_err)?;
    Ok((o.decision, o.score))
}

/// Apply one perturbation at its key parameter.
#[pyfunction]
#[pyo3(signature = (samples, kind, param, seed=0, sample_rate=SAMPLE_RATE, noise_corpus=None))]
fn perturb(
    py: Python<'_>,
    samples: Vec<f64>,
    kind: &str,
    param: f64,
    seed: u64,
    sample_rate: u32,
    noise_corpus: Option<PathBuf>,
) -> PyResult<Vec<f64>> {
    let kind = PerturbationKind::parse(kind).map_err(py_err)?;
    let mut spec = PerturbationSpec::new(kind, param, Seed(seed).derive("perturb"));
    spec.noise_corpus = noise_corpus;
    let x = waveform(samples, sample_rate)?;
    let perturber = Perturber::from_env().map_err(py_err)?;
    let out = py.detach(|| perturber.apply(&spec, &x)).map_err(py_err)?;
    Ok(out.into_samples())
}

#[pyfunction]
#[pyo3(signature = (reference, perturbed, sample_rate=SAMPLE_RATE))]
fn snr(reference: Vec<f64>, perturbed: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    metrics::snr(&waveform(reference, sample_rate)?, &waveform(perturbed, sample_rate)?).map_err(py_err)
}

#[pyfunction]
fn bitwise_accuracy(a: &str, b: &str) -> PyResult<f64> {
    let a: WatermarkBits = a.parse().map_err(py_err)?;
    let b: WatermarkBits = b.parse().map_err(py_err)?;
    metrics::bitwise_accuracy(&a, &b).map_err(py_err)
}

/// Welch's two-tailed t-test: `(t, df, p)`.
#[pyfunction]
fn welch_ttest(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let w = metrics::welch_ttest(&a, &b).map_err(py_err)?;
    Ok((w.t, w.df, w.p_value))
}

/// SNR-constrained white-box removal or forgery.
#[pyfunction]
#[pyo3(signature = (samples, payload, goal="removal", scheme_name="spread_spectrum", snr_budget=20.0, iterations=1000, seed=0, sample_rate=SAMPLE_RATE))]
#[allow(clippy::too_many_arguments)]
fn whitebox_attack<'py>(
    py: Python<'py>,
    samples: Vec<f64>,
    payload: &str,
    goal: &str,
    scheme_name: &str,
    snr_budget: f64,
    iterations: usize,
    seed: u64,
    sample_rate: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let s = scheme(scheme_name, seed, None)?;
    let w = bits(payload, s.payload_bits())?;
    let x = waveform(samples, sample_rate)?;
    let cfg = WhiteboxConfig {
        iterations,
        ..WhiteboxConfig::default().with_budget(snr_budget)
    };
    let r = match goal {
        "removal" => py.detach(|| whitebox_remove(&x, &w, s.as_ref(), &cfg)),
        "forgery" => py.detach(|| whitebox_forge(&x, &w, s.as_ref(), &cfg)),
        other => return Err(py_err(Error::InvalidConfig(format!("unknown goal `{other}`")))),
    }
    .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("success", r.success)?;
    d.set_item("snr", r.final_snr)?;
    d.set_item("samples", r.perturbed.into_samples())?;
    Ok(d)
}

/// No-box benchmark on a fresh synthetic corpus under `out`; writes the
/// report files and returns the overall rows.
#[pyfunction]
#[pyo3(signature = (out, seed=0, clips=200, duration=1.0, kinds=None, calibrate=true))]
fn run_bench<'py>(
    py: Python<'py>,
    out: PathBuf,
    seed: u64,
    clips: usize,
    duration: f64,
    kinds: Option<Vec<String>>,
    calibrate: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = RunConfig::table3(Seed(seed));
    if let Some(kinds) = kinds {
        let kinds: Vec<PerturbationKind> = kinds
            .iter()
            .map(|k| PerturbationKind::parse(k))
            .collect::<Result<_, _>>()
            .map_err(py_err)?;
        cfg.grid.retain(|e| kinds.contains(&e.kind));
    }
    if !calibrate {
        cfg.threshold = ThresholdMode::Fixed;
    }
    let report = py
        .detach(|| {
            let corpus = generate_synthetic_corpus(out.join("corpus"), clips, duration, Seed(seed))?;
            let report = run_nobox(&cfg, &corpus, &RunContext::from_env()?)?;
            emit_report(&report, &out, &ReportFormat::ALL)?;
            Ok(report)
        })
        .map_err(py_err)?;
    report
        .rows
        .iter()
        .filter(|r| r.group == "overall")
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("scheme", &r.scheme)?;
            d.set_item("condition", &r.condition)?;
            d.set_item("param", r.param)?;
            d.set_item("n", r.n)?;
            d.set_item("fnr", r.fnr)?;
            d.set_item("fpr", r.fpr)?;
            d.set_item("mean_snr_db", r.mean_snr_db)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn audiomark(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AudiomarkError", m.py().get_type::<AudiomarkError>())?;
    m.add("SAMPLE_RATE", SAMPLE_RATE)?;
    m.add_function(wrap_pyfunction!(synthetic_clip, m)?)?;
    m.add_function(wrap_pyfunction!(random_bits, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(snr, m)?)?;
    m.add_function(wrap_pyfunction!(bitwise_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(welch_ttest, m)?)?;
    m.add_function(wrap_pyfunction!(whitebox_attack, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
