//! Subprocess-backed schemes speaking a line-delimited JSON protocol.
//!
//! Each call spawns the configured command, writes one request line to
//! its stdin and reads one response line from its stdout:
//!
//! ```text
//! -> {"op":"embed","wav_path":"/tmp/in.wav","out_path":"/tmp/out.wav","bits":"0101..."}
//! <- {"ok":true}
//! -> {"op":"decode","wav_path":"/tmp/in.wav"}
//! <- {"ok":true,"bits":"0101...","prob":0.93}
//! <- {"ok":false,"error":"model not found"}
//! ```

use serde::{Deserialize, Serialize};

use super::{DecisionRule, DetectionOutcome, SchemeConfig, SchemeKind, WatermarkBits, WatermarkScheme};
use crate::audio::{read_wav, write_wav, Waveform};
use crate::error::{Error, Result};
use crate::metrics::bitwise_accuracy;
use crate::subprocess::run_shell;

#[derive(Debug, Serialize)]
struct Request<'a> {
    op: &'a str,
    wav_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Response {
    ok: bool,
    #[serde(default)]
    bits: Option<String>,
    #[serde(default)]
    prob: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

/// Environment variable holding the command for scheme `name`.
pub fn scheme_env_var(name: &str) -> String {
    let suffix: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("AUDIOMARK_SCHEME_{suffix}")
}

#[derive(Debug)]
pub struct ExternalScheme {
    cfg: SchemeConfig,
    command: String,
}

impl ExternalScheme {
    /// Uses the configured command, falling back to `AUDIOMARK_SCHEME_<NAME>`.
    pub fn new(cfg: SchemeConfig) -> Result<Self> {
        if cfg.kind != SchemeKind::External {
            return Err(Error::InvalidConfig(format!(
                "scheme `{}` is not external",
                cfg.name
            )));
        }
        cfg.validate()?;
        let spec = cfg.external.as_ref().expect("validated");
        let command = if spec.command.trim().is_empty() {
            std::env::var(scheme_env_var(&cfg.name)).map_err(|_| {
                Error::InvalidConfig(format!(
                    "no command for external scheme `{}`; set {}",
                    cfg.name,
                    scheme_env_var(&cfg.name)
                ))
            })?
        } else {
            spec.command.clone()
        };
        Ok(ExternalScheme { cfg, command })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn call(&self, req: &Request<'_>) -> Result<Response> {
        let mut line = serde_json::to_vec(req)?;
        line.push(b'\n');
        let timeout = self.cfg.external.as_ref().expect("validated").timeout();
        let stdout = run_shell(&self.command, &line, timeout).map_err(|e| Error::Adapter {
            message: e.message(),
            stderr: e.stderr(),
        })?;
        let text = String::from_utf8_lossy(&stdout);
        let first = text
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::Protocol("empty response".into()))?;
        let resp: Response = serde_json::from_str(first)
            .map_err(|e| Error::Protocol(format!("malformed response `{first}`: {e}")))?;
        if !resp.ok {
            return Err(Error::Adapter {
                message: resp.error.unwrap_or_else(|| "adapter reported failure".into()),
                stderr: String::new(),
            });
        }
        Ok(resp)
    }

    fn outcome(&self, resp: Response, truth: Option<&WatermarkBits>) -> Result<DetectionOutcome> {
        let rule = self.cfg.rule();
        let decoded = match resp.bits.as_deref() {
            Some(b) => Some(
                b.parse::<WatermarkBits>()
                    .map_err(|e| Error::Protocol(format!("bad bits in response: {e}")))?,
            ),
            None => None,
        };
        let sync = self.cfg.sync_bits.as_ref();
        let (payload_offset, sync_matched) = match (rule, &decoded, sync) {
            (DecisionRule::SyncAndBitwiseAccuracy, None, _) => (0, Some(false)),
            (DecisionRule::SyncAndBitwiseAccuracy, Some(d), Some(s)) => {
                let matched = d.len() == s.len() + self.cfg.payload_bits
                    && d.slice(0, s.len())? == *s;
                (s.len(), Some(matched))
            }
            // the adapter reports bits only once its own sync search succeeds
            (DecisionRule::SyncAndBitwiseAccuracy, Some(_), None) => (0, Some(true)),
            _ => (0, None),
        };
        let score = match rule {
            DecisionRule::Probability => Some(resp.prob.ok_or_else(|| {
                Error::Protocol("probability detector response lacks `prob`".into())
            })?),
            _ => match (truth, &decoded) {
                (None, _) => None,
                (Some(_), None) => Some(0.0),
                (Some(_), Some(_)) if sync_matched == Some(false) => Some(0.0),
                (Some(w), Some(d)) => {
                    let payload = if payload_offset > 0 {
                        d.slice(payload_offset, d.len())?
                    } else {
                        d.clone()
                    };
                    Some(bitwise_accuracy(&payload, w)?)
                }
            },
        };
        let decoded = match decoded {
            Some(d) => d,
            None => WatermarkBits::new(vec![false; self.cfg.payload_bits])?,
        };
        let soft_bits = decoded.iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        let mut out = DetectionOutcome {
            decoded,
            soft_bits,
            score,
            decision: false,
            sync_matched,
            payload_offset,
        };
        out.decision = rule.decide(&out, self.cfg.threshold);
        Ok(out)
    }
}

fn path_string(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

impl WatermarkScheme for ExternalScheme {
    fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    fn embed(&self, s: &Waveform, w: &WatermarkBits) -> Result<Waveform> {
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("in.wav");
        let output = dir.path().join("out.wav");
        write_wav(&input, s)?;
        self.call(&Request {
            op: "embed",
            wav_path: path_string(&input),
            out_path: Some(path_string(&output)),
            bits: Some(w.to_string()),
        })?;
        let out = read_wav(&output).map_err(|e| Error::Protocol(format!("embed output: {e}")))?;
        if out.len() != s.len() || out.sample_rate() != s.sample_rate() {
            return Err(Error::Protocol(format!(
                "embed changed the clip shape: {} samples at {} Hz, expected {} at {} Hz",
                out.len(),
                out.sample_rate(),
                s.len(),
                s.sample_rate()
            )));
        }
        Ok(out)
    }

    fn decode(&self, s: &Waveform, truth: Option<&WatermarkBits>) -> Result<DetectionOutcome> {
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("in.wav");
        write_wav(&input, s)?;
        let resp = self.call(&Request {
            op: "decode",
            wav_path: path_string(&input),
            out_path: None,
            bits: None,
        })?;
        self.outcome(resp, truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::ExternalSpec;

    fn scheme(command: &str, rule: DecisionRule, tau: f64) -> ExternalScheme {
        let spec = ExternalSpec {
            command: command.into(),
            rule,
            timeout_secs: 5.0,
        };
        ExternalScheme::new(SchemeConfig::external("stub", spec, 4, tau)).unwrap()
    }

    fn clip() -> Waveform {
        Waveform::new((0..1600).map(|i| (i as f64 * 0.05).sin() * 0.3).collect(), 16000).unwrap()
    }

    #[test]
    fn constant_decoder() {
        let s = scheme(
            r#"echo '{"ok":true,"bits":"1100"}'"#,
            DecisionRule::BitwiseAccuracy,
            0.75,
        );
        let w: WatermarkBits = "1101".parse().unwrap();
        let o = s.decode(&clip(), Some(&w)).unwrap();
        assert_eq!(o.score, Some(0.75));
        assert!(o.decision);
    }

    #[test]
    fn probability_response() {
        let s = scheme(
            r#"echo '{"ok":true,"prob":0.4}'"#,
            DecisionRule::Probability,
            0.5,
        );
        let o = s.decode(&clip(), None).unwrap();
        assert_eq!(o.score, Some(0.4));
        assert!(!o.decision);
    }

    #[test]
    fn missing_bits_fail_sync_gate() {
        let s = scheme(r#"echo '{"ok":true}'"#, DecisionRule::SyncAndBitwiseAccuracy, 0.0);
        let w: WatermarkBits = "1101".parse().unwrap();
        let o = s.decode(&clip(), Some(&w)).unwrap();
        assert_eq!(o.sync_matched, Some(false));
        assert!(!o.decision);
    }

    #[test]
    fn error_paths() {
        let w: WatermarkBits = "1101".parse().unwrap();
        let bad = scheme("echo not json", DecisionRule::BitwiseAccuracy, 0.5);
        assert!(matches!(bad.decode(&clip(), Some(&w)), Err(Error::Protocol(_))));
        let failing = scheme("echo boom >&2; exit 1", DecisionRule::BitwiseAccuracy, 0.5);
        match failing.decode(&clip(), Some(&w)) {
            Err(Error::Adapter { stderr, .. }) => assert_eq!(stderr.trim(), "boom"),
            other => panic!("{other:?}"),
        }
        let refusing = scheme(
            r#"echo '{"ok":false,"error":"no model"}'"#,
            DecisionRule::BitwiseAccuracy,
            0.5,
        );
        assert!(matches!(refusing.decode(&clip(), Some(&w)), Err(Error::Adapter { .. })));
    }

    #[test]
    fn timeout_is_an_adapter_error() {
        let spec = ExternalSpec {
            command: "sleep 5".into(),
            rule: DecisionRule::BitwiseAccuracy,
            timeout_secs: 0.2,
        };
        let s = ExternalScheme::new(SchemeConfig::external("slow", spec, 4, 0.5)).unwrap();
        let w: WatermarkBits = "1101".parse().unwrap();
        assert!(matches!(s.decode(&clip(), Some(&w)), Err(Error::Adapter { .. })));
    }

    #[test]
    fn env_var_name() {
        assert_eq!(scheme_env_var("audio-seal"), "AUDIOMARK_SCHEME_AUDIO_SEAL");
    }
}
