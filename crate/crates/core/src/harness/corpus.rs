//! Corpus manifests and the synthetic speech corpus.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, speech_like, write_wav, SynthVoice, Waveform};
use crate::error::{Error, Result};
use crate::Seed;

pub const SAMPLE_RATE: u32 = 16_000;

/// Pseudo-language tags cycled by the synthetic corpus.
pub const SYNTH_LANGUAGES: usize = 5;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Sex {
    pub const ALL: [Sex; 3] = [Sex::Male, Sex::Female, Sex::Unknown];

    pub fn label(&self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBand {
    Teens,
    Twenties,
    Thirties,
    Forties,
    #[default]
    Unknown,
}

impl AgeBand {
    pub const ALL: [AgeBand; 5] = [
        AgeBand::Teens,
        AgeBand::Twenties,
        AgeBand::Thirties,
        AgeBand::Forties,
        AgeBand::Unknown,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AgeBand::Teens => "teens",
            AgeBand::Twenties => "twenties",
            AgeBand::Thirties => "thirties",
            AgeBand::Forties => "forties",
            AgeBand::Unknown => "unknown",
        }
    }
}

/// Demographic attribute a report can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Sex,
    Age,
    Language,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Sex, Attribute::Age, Attribute::Language];

    pub fn label(&self) -> &'static str {
        match self {
            Attribute::Sex => "sex",
            Attribute::Age => "age",
            Attribute::Language => "language",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown attribute `{s}`")))
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn unknown_language() -> String {
    "unknown".into()
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default = "unknown_language")]
    pub language: String,
    #[serde(default)]
    pub sex: Sex,
    #[serde(default)]
    pub age: AgeBand,
    /// Embedding-strength offset in dB applied when this clip is
    /// watermarked; lets a corpus carry less headroom for some clips.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub embed_offset_db: f64,
}

impl ManifestEntry {
    /// Value of `attr`, as used in group labels.
    pub fn attribute(&self, attr: Attribute) -> &str {
        match attr {
            Attribute::Sex => self.sex.label(),
            Attribute::Age => self.age.label(),
            Attribute::Language => &self.language,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    /// File the manifest was loaded from or saved to.
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        CorpusManifest {
            entries,
            source: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Read a JSON Lines manifest. Relative paths resolve against the
    /// manifest's directory and must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let reader = BufReader::new(fs::File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut e: ManifestEntry = serde_json::from_str(&line).map_err(|err| Error::Manifest {
                line: i + 1,
                reason: err.to_string(),
            })?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            if !e.path.is_file() {
                return Err(Error::Manifest {
                    line: i + 1,
                    reason: format!("{} does not exist", e.path.display()),
                });
            }
            if e.language.is_empty() {
                return Err(Error::Manifest {
                    line: i + 1,
                    reason: "empty language tag".into(),
                });
            }
            entries.push(e);
        }
        Ok(CorpusManifest {
            entries,
            source: Some(path.to_path_buf()),
        })
    }

    /// Write one entry per line; paths under the manifest's directory are
    /// stored relative to it.
    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut out = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            let mut e = e.clone();
            if let Ok(rel) = e.path.strip_prefix(&base) {
                e.path = rel.to_path_buf();
            }
            serde_json::to_writer(&mut out, &e)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        self.source = Some(path.to_path_buf());
        Ok(())
    }

    pub fn load_clips(&self) -> Result<Vec<Waveform>> {
        self.entries.iter().map(|e| read_wav(&e.path)).collect()
    }

    /// Copy with `offset_db` added to the embedding offset of every clip
    /// labelled `sex`.
    pub fn with_headroom_offset(&self, sex: Sex, offset_db: f64) -> Self {
        let mut m = self.clone();
        for e in m.entries.iter_mut().filter(|e| e.sex == sex) {
            e.embed_offset_db += offset_db;
        }
        m
    }
}

/// Labels of the `i`-th synthetic clip: sex cycles fastest, then age,
/// then language, so any 8 consecutive clips cover every (sex, age) cell.
pub fn synthetic_labels(i: usize) -> (Sex, AgeBand, String) {
    let sex = if i % 2 == 0 { Sex::Male } else { Sex::Female };
    let age = AgeBand::ALL[(i / 2) % 4];
    let lang = format!("lang{}", (i / 8) % SYNTH_LANGUAGES);
    (sex, age, lang)
}

/// The `i`-th synthetic clip, without touching the disk.
pub fn synthetic_clip(seed: Seed, i: usize, duration_s: f64) -> Result<Waveform> {
    let clip_seed = seed.derive("corpus").derive_index(i as u64);
    speech_like(clip_seed, SynthVoice::random(clip_seed.derive("voice")), duration_s, SAMPLE_RATE)
}

/// Write `n_clips` speech-like WAVs and their manifest into `dir`.
///
/// Voices are drawn independently of the labels, so the corpus carries
/// no real group differences.
pub fn generate_synthetic_corpus(
    dir: impl AsRef<Path>,
    n_clips: usize,
    duration_s: f64,
    seed: Seed,
) -> Result<CorpusManifest> {
    if n_clips == 0 {
        return Err(Error::InvalidConfig("n_clips must be >= 1".into()));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidConfig(format!("invalid clip duration {duration_s}")));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(n_clips);
    for i in 0..n_clips {
        let path = dir.join(format!("clip_{i:04}.wav"));
        write_wav(&path, &synthetic_clip(seed, i, duration_s)?)?;
        let (sex, age, language) = synthetic_labels(i);
        entries.push(ManifestEntry {
            path,
            language,
            sex,
            age,
            embed_offset_db: 0.0,
        });
    }
    let mut m = CorpusManifest::new(entries);
    m.save(dir.join(MANIFEST_FILE))?;
    Ok(m)
}
