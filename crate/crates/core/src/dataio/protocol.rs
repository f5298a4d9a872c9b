use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ground-truth label of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Bonafide,
    Spoof,
}

impl Key {
    /// Class index used by the classifiers: bonafide is class 0.
    pub fn class_index(self) -> usize {
        match self {
            Key::Bonafide => 0,
            Key::Spoof => 1,
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Key::Bonafide => "bonafide",
            Key::Spoof => "spoof",
        })
    }
}

impl FromStr for Key {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "bonafide" => Ok(Key::Bonafide),
            "spoof" => Ok(Key::Spoof),
            _ => Err(format!("unknown key `{s}` (expected bonafide or spoof)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Dev,
    Eval,
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "eval" => Ok(Partition::Eval),
            _ => Err(Error::config(format!("unknown partition `{s}`"))),
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Eval => "eval",
        })
    }
}

/// One protocol line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub speaker_id: String,
    pub utt_id: String,
    /// Recording environment (physical access only).
    pub env_id: Option<String>,
    /// Attack identifier; absent exactly when the trial is bonafide.
    pub attack_id: Option<String>,
    pub key: Key,
}

impl TrialRecord {
    /// Group label used for example generation: the attack id for spoofed
    /// trials, `bonafide` otherwise.
    pub fn class_label(&self) -> &str {
        self.attack_id.as_deref().unwrap_or("bonafide")
    }
}

impl fmt::Display for TrialRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.speaker_id,
            self.utt_id,
            self.env_id.as_deref().unwrap_or("-"),
            self.attack_id.as_deref().unwrap_or("-"),
            self.key
        )
    }
}

/// A parsed protocol file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSet {
    pub records: Vec<TrialRecord>,
    pub partition: Partition,
}

impl ProtocolSet {
    /// Build a set from records, enforcing the record invariants.
    pub fn new(records: Vec<TrialRecord>, partition: Partition) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            check_record(r).map_err(|msg| Error::Parse { line: i + 1, msg })?;
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate utterance id `{}`", r.utt_id),
                });
            }
        }
        Ok(Self { records, partition })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.speaker_id.as_str()).collect()
    }

    /// Distinct attack ids in sorted order.
    pub fn attacks(&self) -> BTreeSet<&str> {
        self.records
            .iter()
            .filter_map(|r| r.attack_id.as_deref())
            .collect()
    }

    pub fn get(&self, utt_id: &str) -> Option<&TrialRecord> {
        self.records.iter().find(|r| r.utt_id == utt_id)
    }

    /// Keep only the records accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&TrialRecord) -> bool) -> ProtocolSet {
        ProtocolSet {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            partition: self.partition,
        }
    }

    /// Location of an utterance's audio under `root`.
    pub fn audio_path(root: &Path, utt_id: &str) -> PathBuf {
        root.join(format!("{utt_id}.wav"))
    }

    /// Utterances whose audio file is missing under `root`.
    pub fn missing_audio(&self, root: &Path) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| !Self::audio_path(root, &r.utt_id).is_file())
            .map(|r| r.utt_id.as_str())
            .collect()
    }

    /// Render back to protocol text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

fn check_record(r: &TrialRecord) -> std::result::Result<(), String> {
    match (r.key, &r.attack_id) {
        (Key::Bonafide, Some(a)) => Err(format!(
            "utterance `{}` is bonafide but names attack `{a}`",
            r.utt_id
        )),
        (Key::Spoof, None) => Err(format!(
            "utterance `{}` is spoof but has no attack id",
            r.utt_id
        )),
        _ => Ok(()),
    }
}

fn optional(field: &str) -> Option<String> {
    (field != "-").then(|| field.to_string())
}

/// Parse protocol text: one `speaker utt env attack key` line per trial,
/// `-` for absent fields. Blank lines are ignored.
pub fn parse_protocol(text: &str, partition: Partition) -> Result<ProtocolSet> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let key: Key = fields[4]
            .parse()
            .map_err(|msg| Error::Parse { line: line_no, msg })?;
        let record = TrialRecord {
            speaker_id: fields[0].to_string(),
            utt_id: fields[1].to_string(),
            env_id: optional(fields[2]),
            attack_id: optional(fields[3]),
            key,
        };
        check_record(&record).map_err(|msg| Error::Parse { line: line_no, msg })?;
        if !seen.insert(record.utt_id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate utterance id `{}`", record.utt_id),
            });
        }
        records.push(record);
    }
    Ok(ProtocolSet { records, partition })
}

/// Read and parse a protocol file.
pub fn read_protocol(path: &Path, partition: Partition) -> Result<ProtocolSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    parse_protocol(&text, partition).map_err(|e| e.at(path))
}
