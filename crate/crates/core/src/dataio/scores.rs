use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Countermeasure scores keyed by utterance id; higher means more bonafide.
///
/// Insertion order is kept so score files follow protocol order.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    entries: Vec<(String, f64)>,
    index: HashMap<String, usize>,
}

impl ScoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a score, rejecting duplicates and non-finite values.
    pub fn insert(&mut self, utt_id: impl Into<String>, score: f64) -> Result<()> {
        let utt_id = utt_id.into();
        if !score.is_finite() {
            return Err(Error::data(format!("score for `{utt_id}` is not finite")));
        }
        if self.index.contains_key(&utt_id) {
            return Err(Error::data(format!("duplicate utterance id `{utt_id}`")));
        }
        self.index.insert(utt_id.clone(), self.entries.len());
        self.entries.push((utt_id, score));
        Ok(())
    }

    pub fn get(&self, utt_id: &str) -> Option<f64> {
        self.index.get(utt_id).map(|&i| self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(u, s)| (u.as_str(), *s))
    }

    pub fn contains(&self, utt_id: &str) -> bool {
        self.index.contains_key(utt_id)
    }
}

impl PartialEq for ScoreSet {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|(u, s)| other.get(u) == Some(s))
    }
}

impl FromIterator<(String, f64)> for ScoreSet {
    /// Later duplicates and non-finite scores are dropped.
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut set = ScoreSet::new();
        for (u, s) in iter {
            let _ = set.insert(u, s);
        }
        set
    }
}

/// Write one `utt_id score` line per entry.
pub fn write_scores(s: &ScoreSet, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(s.len() * 24);
    for (u, v) in s.iter() {
        // `{}` prints the shortest decimal that parses back to the same f64
        writeln!(out, "{u} {v}").expect("writing to a String");
    }
    std::fs::write(path, out).map_err(|e| Error::from(e).at(path))
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    parse_scores(&text).map_err(|e| e.at(path))
}

pub(crate) fn parse_scores(text: &str) -> Result<ScoreSet> {
    let mut set = ScoreSet::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let line_no = i + 1;
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `utt_id score`, found {} fields", fields.len()),
            });
        }
        let score: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("`{}` is not a number", fields[1]),
        })?;
        set.insert(fields[0], score).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        let mut s = ScoreSet::new();
        s.insert("u1", 1.25).unwrap();
        write_scores(&s, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "u1 1.25\n");
        assert_eq!(read_scores(&path).unwrap(), s);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        write_scores(&ScoreSet::new(), &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert!(read_scores(&path).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_number_and_duplicates() {
        assert!(matches!(parse_scores("u1 a.b"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_scores("u1 1\nu1 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        let mut s = ScoreSet::new();
        assert!(s.insert("u", f64::NAN).is_err());
    }

    #[test]
    fn equality_ignores_order() {
        let mut a = ScoreSet::new();
        a.insert("x", 1.0).unwrap();
        a.insert("y", 2.0).unwrap();
        let mut b = ScoreSet::new();
        b.insert("y", 2.0).unwrap();
        b.insert("x", 1.0).unwrap();
        assert_eq!(a, b);
    }

    proptest::proptest! {
        #[test]
        fn file_round_trip_is_exact(values in proptest::collection::vec(-1e12f64..1e12, 0..40)) {
            let set: ScoreSet = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (format!("utt{i}"), v))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.txt");
            write_scores(&set, &path).unwrap();
            let back = read_scores(&path).unwrap();
            proptest::prop_assert_eq!(back, set);
        }
    }
}
