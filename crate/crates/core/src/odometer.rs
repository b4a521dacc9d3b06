//! Cumulative privacy loss per dataset, with an append-only journal.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize, Serializer};

use crate::amount::PrivacyAmount;
use crate::error::{Error, Result};
use crate::search::{Algorithm, EpsilonGrid};

/// One answered query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub query_id: String,
    #[serde(serialize_with = "epsilon_string")]
    pub eps: PrivacyAmount,
    pub delta: PrivacyAmount,
    pub alg: Algorithm,
    pub ts: String,
    /// Running ε total after this entry.
    #[serde(serialize_with = "epsilon_string")]
    pub eps_c: PrivacyAmount,
}

fn epsilon_string<S: Serializer>(a: &PrivacyAmount, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&a.render_epsilon())
}

/// `Σεᵢ` when `δ_g ≥ Σδᵢ`, otherwise unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompBound {
    Finite(PrivacyAmount),
    Infinite,
}

impl Serialize for CompBound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CompBound::Finite(a) => s.serialize_str(&a.render_epsilon()),
            CompBound::Infinite => s.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for CompBound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "infinity" {
            Ok(CompBound::Infinite)
        } else {
            s.parse().map(CompBound::Finite).map_err(serde::de::Error::custom)
        }
    }
}

impl CompBound {
    pub fn to_f64(self) -> f64 {
        match self {
            CompBound::Finite(a) => a.to_f64(),
            CompBound::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OdometerState {
    dataset_id: String,
    entries: Vec<JournalEntry>,
    #[serde(serialize_with = "epsilon_string")]
    eps_c: PrivacyAmount,
    delta_sum: PrivacyAmount,
    delta_g: PrivacyAmount,
}

impl OdometerState {
    pub fn new(dataset_id: impl Into<String>, delta_g: PrivacyAmount) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            entries: Vec::new(),
            eps_c: PrivacyAmount::ZERO,
            delta_sum: PrivacyAmount::ZERO,
            delta_g,
        }
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn entries(&self) -> &[JournalEntry] {
        &self.entries
    }

    pub fn eps_c(&self) -> PrivacyAmount {
        self.eps_c
    }

    pub fn delta_sum(&self) -> PrivacyAmount {
        self.delta_sum
    }

    pub fn delta_g(&self) -> PrivacyAmount {
        self.delta_g
    }

    pub fn set_delta_g(&mut self, delta_g: PrivacyAmount) {
        self.delta_g = delta_g;
    }

    /// Candidates strictly greater than `eps_c`.
    pub fn truncate_grid(&self, grid: &EpsilonGrid) -> EpsilonGrid {
        grid.retain_above(self.eps_c)
    }

    pub fn comp_bound(&self) -> CompBound {
        if self.delta_g >= self.delta_sum {
            CompBound::Finite(self.eps_c)
        } else {
            CompBound::Infinite
        }
    }

    fn next_entry(
        &self,
        query_id: &str,
        eps: PrivacyAmount,
        delta: PrivacyAmount,
        alg: Algorithm,
        ts: String,
    ) -> Result<JournalEntry> {
        if eps.is_zero() {
            return Err(Error::InvalidParameter("a charge must have epsilon > 0".into()));
        }
        if self.entries.iter().any(|e| e.query_id == query_id) {
            return Err(Error::DuplicateQueryId(query_id.to_string()));
        }
        Ok(JournalEntry {
            query_id: query_id.to_string(),
            eps,
            delta,
            alg,
            ts,
            eps_c: self.eps_c.checked_add(eps)?,
        })
    }

    fn push(&mut self, entry: JournalEntry) -> Result<()> {
        self.delta_sum = self.delta_sum.checked_add(entry.delta)?;
        self.eps_c = entry.eps_c;
        self.entries.push(entry);
        Ok(())
    }

    /// Appends a charge without persisting it.
    pub fn charge(
        &mut self,
        query_id: &str,
        eps: PrivacyAmount,
        delta: PrivacyAmount,
        alg: Algorithm,
    ) -> Result<&JournalEntry> {
        let entry = self.next_entry(query_id, eps, delta, alg, now())?;
        self.push(entry)?;
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Rebuilds a state from journal entries, checking each running total.
    pub fn replay(
        dataset_id: impl Into<String>,
        delta_g: PrivacyAmount,
        entries: impl IntoIterator<Item = JournalEntry>,
    ) -> Result<Self> {
        let mut state = Self::new(dataset_id, delta_g);
        for (i, e) in entries.into_iter().enumerate() {
            let expected = state
                .next_entry(&e.query_id, e.eps, e.delta, e.alg, e.ts.clone())
                .map_err(|err| Error::CorruptJournal(format!("entry {}: {err}", i + 1)))?;
            if expected != e {
                return Err(Error::CorruptJournal(format!(
                    "entry {}: running total {} does not match the fold {}",
                    i + 1,
                    e.eps_c.render_epsilon(),
                    expected.eps_c.render_epsilon()
                )));
            }
            state.push(e)?;
        }
        Ok(state)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Odometer state plus an optional JSON-lines journal. Each charge is
/// written and synced before it is applied in memory.
#[derive(Debug)]
pub struct Odometer {
    state: OdometerState,
    journal: Option<(PathBuf, File)>,
}

impl Odometer {
    pub fn in_memory(dataset_id: impl Into<String>, delta_g: PrivacyAmount) -> Self {
        Self {
            state: OdometerState::new(dataset_id, delta_g),
            journal: None,
        }
    }

    /// Opens or creates the journal at `path` and replays it. A torn final
    /// line without a newline is discarded.
    pub fn open(path: impl AsRef<Path>, dataset_id: impl Into<String>, delta_g: PrivacyAmount) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut entries = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        let mut line_no = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            line_no += 1;
            if !line.ends_with('\n') {
                break;
            }
            let entry: JournalEntry = serde_json::from_str(line.trim_end())
                .map_err(|e| Error::CorruptJournal(format!("line {line_no}: {e}")))?;
            entries.push(entry);
            good_len += read as u64;
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let state = OdometerState::replay(dataset_id, delta_g, entries)?;
        Ok(Self {
            state,
            journal: Some((path, file)),
        })
    }

    pub fn state(&self) -> &OdometerState {
        &self.state
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn set_delta_g(&mut self, delta_g: PrivacyAmount) {
        self.state.set_delta_g(delta_g);
    }

    pub fn charge(
        &mut self,
        query_id: &str,
        eps: PrivacyAmount,
        delta: PrivacyAmount,
        alg: Algorithm,
    ) -> Result<JournalEntry> {
        let entry = self.state.next_entry(query_id, eps, delta, alg, now())?;
        if let Some((_, file)) = &mut self.journal {
            let mut line = serde_json::to_vec(&entry)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.state.push(entry.clone())?;
        Ok(entry)
    }
}
