//! Note and diagnosis loading, cohort construction and corpus statistics.
//!
//! Input files follow the MIMIC-III `NOTEEVENTS` / `DIAGNOSES_ICD` CSV
//! schema. Text fields may span several lines (RFC-4180 quoting).

mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::icd9::{binarize, GroupId, GroupingTable, Icd9Code, Icd9Error, LabelVector, GROUP_COUNT};

pub use synthetic::{generate_synthetic, pseudo_words, SyntheticConfig, SyntheticData};

/// Notes with fewer whitespace-separated words than this are dropped.
pub const DEFAULT_MIN_WORDS: usize = 15;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: missing required column {column}")]
    MissingColumn { path: String, column: &'static str },
    #[error("{path}: row {row} (line {line}): {message}")]
    BadRow {
        path: String,
        row: u64,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("diagnosis code for admission {hadm_id}: {source}")]
    Code { hadm_id: u64, source: Icd9Error },
    #[error("cohort is empty after filtering ({0})")]
    EmptyCohort(FilterCounts),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynthetic(String),
}

/// One clinical note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub row_id: u64,
    pub subject_id: u64,
    pub hadm_id: u64,
    pub category: String,
    /// Note sub-type (e.g. "Physician Resident Progress"); empty if the column is absent.
    pub description: String,
    pub is_error: bool,
    pub text: String,
}

impl Note {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    pub fn admission(&self) -> (u64, u64) {
        (self.subject_id, self.hadm_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisRecord {
    pub subject_id: u64,
    pub hadm_id: u64,
    pub icd9_code: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiagnosisTable {
    pub records: Vec<DiagnosisRecord>,
    /// Rows skipped because ICD9_CODE was blank.
    pub blank_codes: usize,
}

struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Columns {
            index: headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_ascii_uppercase(), i))
                .collect(),
        }
    }

    fn require(&self, path: &Path, column: &'static str) -> Result<usize, IngestError> {
        self.index
            .get(column)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn {
                path: path.display().to_string(),
                column,
            })
    }

    fn optional(&self, column: &str) -> Option<usize> {
        self.index.get(column).copied()
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<File>, Columns), IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|source| IngestError::Csv {
        path: path.display().to_string(),
        source,
    })?;
    let columns = Columns::new(headers);
    Ok((reader, columns))
}

struct RowContext<'a> {
    path: &'a Path,
    row: u64,
    line: u64,
}

impl RowContext<'_> {
    fn error(&self, message: impl Into<String>) -> IngestError {
        IngestError::BadRow {
            path: self.path.display().to_string(),
            row: self.row,
            line: self.line,
            message: message.into(),
        }
    }

    fn integer(&self, record: &csv::StringRecord, col: usize, name: &str) -> Result<Option<u64>, IngestError> {
        let raw = record.get(col).unwrap_or("").trim();
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse::<u64>()
            .map(Some)
            .map_err(|_| self.error(format!("{name} is not an integer: {raw:?}")))
    }
}

fn read_record(
    reader: &mut csv::Reader<File>,
    record: &mut csv::StringRecord,
    path: &Path,
    row: u64,
) -> Result<bool, IngestError> {
    reader.read_record(record).map_err(|e| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        IngestError::BadRow {
            path: path.display().to_string(),
            row,
            line,
            message: e.to_string(),
        }
    })
}

/// Reads notes whose CATEGORY (trimmed) is in `categories`. An empty filter
/// keeps every category. Rows without a HADM_ID cannot be tied to an
/// admission and are skipped. The result is ordered by ROW_ID.
pub fn load_notes(path: &Path, categories: &BTreeSet<String>) -> Result<Vec<Note>, IngestError> {
    let (mut reader, cols) = open_csv(path)?;
    let c_row = cols.require(path, "ROW_ID")?;
    let c_subject = cols.require(path, "SUBJECT_ID")?;
    let c_hadm = cols.require(path, "HADM_ID")?;
    let c_category = cols.require(path, "CATEGORY")?;
    let c_error = cols.require(path, "ISERROR")?;
    let c_text = cols.require(path, "TEXT")?;
    let c_description = cols.optional("DESCRIPTION");
    let wanted: BTreeSet<&str> = categories.iter().map(|c| c.trim()).collect();

    let mut notes = Vec::new();
    let mut missing_admission = 0usize;
    let mut record = csv::StringRecord::new();
    let mut row = 0u64;
    loop {
        row += 1;
        if !read_record(&mut reader, &mut record, path, row)? {
            break;
        }
        let ctx = RowContext {
            path,
            row,
            line: record.position().map(|p| p.line()).unwrap_or(0),
        };
        let category = record.get(c_category).unwrap_or("").trim();
        if !wanted.is_empty() && !wanted.contains(category) {
            continue;
        }
        let row_id = ctx
            .integer(&record, c_row, "ROW_ID")?
            .ok_or_else(|| ctx.error("ROW_ID is empty"))?;
        let subject_id = ctx
            .integer(&record, c_subject, "SUBJECT_ID")?
            .ok_or_else(|| ctx.error("SUBJECT_ID is empty"))?;
        let hadm_id = match ctx.integer(&record, c_hadm, "HADM_ID")? {
            Some(h) if h > 0 => h,
            _ => {
                missing_admission += 1;
                continue;
            }
        };
        let is_error = match record.get(c_error).unwrap_or("").trim() {
            "" | "0" => false,
            "1" => true,
            other => return Err(ctx.error(format!("ISERROR must be empty, 0 or 1, found {other:?}"))),
        };
        notes.push(Note {
            row_id,
            subject_id,
            hadm_id,
            category: category.to_string(),
            description: c_description
                .and_then(|c| record.get(c))
                .unwrap_or("")
                .trim()
                .to_string(),
            is_error,
            text: record.get(c_text).unwrap_or("").to_string(),
        });
    }
    if missing_admission > 0 {
        log::warn!("{}: skipped {missing_admission} notes without HADM_ID", path.display());
    }
    notes.sort_by_key(|n| n.row_id);
    Ok(notes)
}

pub fn load_diagnoses(path: &Path) -> Result<DiagnosisTable, IngestError> {
    let (mut reader, cols) = open_csv(path)?;
    let c_subject = cols.require(path, "SUBJECT_ID")?;
    let c_hadm = cols.require(path, "HADM_ID")?;
    let c_code = cols.require(path, "ICD9_CODE")?;

    let mut table = DiagnosisTable::default();
    let mut record = csv::StringRecord::new();
    let mut row = 0u64;
    loop {
        row += 1;
        if !read_record(&mut reader, &mut record, path, row)? {
            break;
        }
        let ctx = RowContext {
            path,
            row,
            line: record.position().map(|p| p.line()).unwrap_or(0),
        };
        let code = record.get(c_code).unwrap_or("").trim();
        if code.is_empty() {
            table.blank_codes += 1;
            continue;
        }
        let subject_id = ctx
            .integer(&record, c_subject, "SUBJECT_ID")?
            .ok_or_else(|| ctx.error("SUBJECT_ID is empty"))?;
        let hadm_id = ctx
            .integer(&record, c_hadm, "HADM_ID")?
            .ok_or_else(|| ctx.error("HADM_ID is empty"))?;
        table.records.push(DiagnosisRecord {
            subject_id,
            hadm_id,
            icd9_code: code.to_string(),
        });
    }
    if table.blank_codes > 0 {
        log::warn!(
            "{}: skipped {} rows with blank ICD9_CODE",
            path.display(),
            table.blank_codes
        );
    }
    Ok(table)
}

/// How many notes each cohort filter removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub input: usize,
    pub error_removed: usize,
    pub short_removed: usize,
    pub no_diagnosis_removed: usize,
    pub kept: usize,
}

impl std::fmt::Display for FilterCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "input {}, error-flagged {}, short {}, without diagnoses {}, kept {}",
            self.input, self.error_removed, self.short_removed, self.no_diagnosis_removed, self.kept
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub min_words: usize,
    pub filters: FilterCounts,
    /// Distinct ICD9 codes over the admissions that kept at least one note.
    pub unique_codes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub note: Note,
    pub labels: LabelVector,
}

/// Filtered notes joined to admission-level group labels, ordered by ROW_ID.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    entries: Vec<LabeledEntry>,
    provenance: Provenance,
}

impl LabeledCorpus {
    pub fn entries(&self) -> &[LabeledEntry] {
        &self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.entries.iter().map(|e| &e.note)
    }

    pub fn labels(&self) -> impl Iterator<Item = &LabelVector> {
        self.entries.iter().map(|e| &e.labels)
    }

    /// SHA-256 over row ids, admission ids and labels, in corpus order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.note.row_id.to_le_bytes());
            h.update(e.note.subject_id.to_le_bytes());
            h.update(e.note.hadm_id.to_le_bytes());
            h.update(e.labels.bits());
        }
        hex::encode(h.finalize())
    }
}

/// Applies the cohort filters in order (error flag, word count, missing
/// diagnoses) and labels every surviving note with the union of groups
/// diagnosed in its admission.
pub fn build_cohort(
    notes: Vec<Note>,
    diagnoses: &[DiagnosisRecord],
    grouping: &GroupingTable,
    min_words: usize,
) -> Result<LabeledCorpus, IngestError> {
    let mut admissions: HashMap<(u64, u64), (BTreeSet<GroupId>, Vec<&str>)> = HashMap::new();
    for d in diagnoses {
        let code = Icd9Code::parse(&d.icd9_code).map_err(|source| IngestError::Code {
            hadm_id: d.hadm_id,
            source,
        })?;
        let group = grouping.group_of(&code).map_err(|source| IngestError::Code {
            hadm_id: d.hadm_id,
            source,
        })?;
        let slot = admissions.entry((d.subject_id, d.hadm_id)).or_default();
        slot.0.insert(group);
        slot.1.push(&d.icd9_code);
    }

    let mut counts = FilterCounts {
        input: notes.len(),
        ..FilterCounts::default()
    };
    let mut entries = Vec::with_capacity(notes.len());
    let mut used_codes: HashSet<&str> = HashSet::new();
    for note in notes {
        if note.is_error {
            counts.error_removed += 1;
            continue;
        }
        if note.word_count() < min_words {
            counts.short_removed += 1;
            continue;
        }
        let Some((groups, codes)) = admissions.get(&note.admission()) else {
            counts.no_diagnosis_removed += 1;
            continue;
        };
        used_codes.extend(codes.iter().map(|c| c.trim()));
        entries.push(LabeledEntry {
            labels: binarize(groups.iter().copied()),
            note,
        });
    }
    counts.kept = entries.len();
    if entries.is_empty() {
        return Err(IngestError::EmptyCohort(counts));
    }
    entries.sort_by_key(|e| e.note.row_id);
    log::info!("cohort: {counts}");
    Ok(LabeledCorpus {
        entries,
        provenance: Provenance {
            source: String::new(),
            min_words,
            filters: counts,
            unique_codes: used_codes.len(),
        },
    })
}

impl LabeledCorpus {
    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.provenance.source = source.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub note_count: usize,
    pub unique_word_count: usize,
    pub max_note_words: usize,
    pub min_note_words: usize,
    pub mean_note_words: f64,
    pub unique_disease_count: usize,
    pub group_count: usize,
    /// Note sub-types by descending frequency.
    pub note_types: Vec<(String, usize)>,
}

/// Word counts use raw whitespace tokens; unique words are case-folded.
pub fn corpus_stats(corpus: &LabeledCorpus) -> Result<CorpusStats, IngestError> {
    if corpus.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let mut vocabulary: HashSet<String> = HashSet::new();
    let (mut min, mut max, mut total) = (usize::MAX, 0usize, 0usize);
    let mut types: BTreeMap<&str, usize> = BTreeMap::new();
    for note in corpus.notes() {
        let mut words = 0;
        for w in note.text.split_whitespace() {
            words += 1;
            vocabulary.insert(w.to_lowercase());
        }
        min = min.min(words);
        max = max.max(words);
        total += words;
        *types.entry(note.description.as_str()).or_default() += 1;
    }
    let mut note_types: Vec<(String, usize)> = types.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    note_types.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(CorpusStats {
        note_count: corpus.len(),
        unique_word_count: vocabulary.len(),
        max_note_words: max,
        min_note_words: min,
        mean_note_words: total as f64 / corpus.len() as f64,
        unique_disease_count: corpus.provenance.unique_codes,
        group_count: GROUP_COUNT,
        note_types,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn physician() -> BTreeSet<String> {
        ["Physician".to_string()].into()
    }

    fn note(row_id: u64, hadm_id: u64, words: usize, is_error: bool) -> Note {
        Note {
            row_id,
            subject_id: hadm_id / 10,
            hadm_id,
            category: "Physician".into(),
            description: "Intensivist Note".into(),
            is_error,
            text: (0..words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        }
    }

    fn dx(hadm_id: u64, code: &str) -> DiagnosisRecord {
        DiagnosisRecord {
            subject_id: hadm_id / 10,
            hadm_id,
            icd9_code: code.into(),
        }
    }

    const NOTES: &str = "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,DESCRIPTION,ISERROR,TEXT\n\
1,2,100,Physician ,Intensivist Note,,\"line one\nline two, with comma\"\n\
2,2,100,Nursing,Nursing Progress,,\"nursing text\"\n\
3,3,101,Physician ,Physician Resident Progress,1,plain\n";

    #[test]
    fn loads_filtered_categories_with_multiline_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "notes.csv", NOTES);
        let notes = load_notes(&p, &physician()).unwrap();
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[0].text, "line one\nline two, with comma");
        assert!(!notes[0].is_error);
        assert!(notes[1].is_error);
        assert_eq!(notes[0].description, "Intensivist Note");
        assert_eq!(load_notes(&p, &BTreeSet::new()).unwrap().len(), 3);
    }

    #[test]
    fn header_only_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "empty.csv", "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,ISERROR,TEXT\n");
        assert!(load_notes(&p, &physician()).unwrap().is_empty());
        let p = write(
            &dir,
            "notext.csv",
            "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,ISERROR\n1,2,3,Physician,\n",
        );
        assert!(matches!(
            load_notes(&p, &physician()),
            Err(IngestError::MissingColumn { column: "TEXT", .. })
        ));
        assert!(matches!(
            load_notes(&dir.path().join("absent.csv"), &physician()),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn bad_rows_report_their_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "bad.csv",
            "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,ISERROR,TEXT\n1,2,3,Physician,,ok\nx,2,3,Physician,,bad\n",
        );
        match load_notes(&p, &physician()) {
            Err(IngestError::BadRow { row: 2, line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let p = write(
            &dir,
            "flag.csv",
            "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,ISERROR,TEXT\n1,2,3,Physician,yes,ok\n",
        );
        assert!(matches!(
            load_notes(&p, &physician()),
            Err(IngestError::BadRow { row: 1, .. })
        ));
        let p = write(
            &dir,
            "ragged.csv",
            "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,ISERROR,TEXT\n1,2,3\n",
        );
        assert!(matches!(
            load_notes(&p, &physician()),
            Err(IngestError::BadRow { row: 1, .. })
        ));
    }

    #[test]
    fn diagnoses_skip_blank_codes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "dx.csv",
            "ROW_ID,SUBJECT_ID,HADM_ID,SEQ_NUM,ICD9_CODE\n1,2,100,1,4280\n2,2,100,2,\n3,2,100,3,486\n4,3,101,1,V3000\n5,3,101,2,E8782\n6,4,102,1,0389\n",
        );
        let t = load_diagnoses(&p).unwrap();
        assert_eq!(t.records.len(), 5);
        assert_eq!(t.blank_codes, 1);
        assert_eq!(t.records[0], dx(100, "4280").with_subject(2));
        let p = write(&dir, "nocode.csv", "SUBJECT_ID,HADM_ID\n1,2\n");
        assert!(matches!(
            load_diagnoses(&p),
            Err(IngestError::MissingColumn {
                column: "ICD9_CODE",
                ..
            })
        ));
    }

    impl DiagnosisRecord {
        fn with_subject(mut self, s: u64) -> Self {
            self.subject_id = s;
            self
        }
    }

    #[test]
    fn cohort_filters_and_labels() {
        let t = GroupingTable::standard();
        let notes = vec![
            note(1, 100, 20, false),
            note(2, 100, 14, false),
            note(3, 100, 15, true),
            note(4, 110, 30, false),
            note(5, 120, 16, false),
        ];
        let dx = vec![dx(100, "4280"), dx(100, "486"), dx(110, "V3000")];
        let c = build_cohort(notes, &dx, &t, DEFAULT_MIN_WORDS).unwrap();
        let f = c.provenance().filters;
        assert_eq!(
            f,
            FilterCounts {
                input: 5,
                error_removed: 1,
                short_removed: 1,
                no_diagnosis_removed: 1,
                kept: 2
            }
        );
        assert_eq!(
            f.input,
            f.kept + f.error_removed + f.short_removed + f.no_diagnosis_removed
        );
        let ones: Vec<usize> = c.entries()[0].labels.positives().map(|g| g.get()).collect();
        assert_eq!(ones, vec![8, 9]);
        assert_eq!(c.provenance().unique_codes, 3);

        let again = build_cohort(c.notes().cloned().collect(), &dx, &t, DEFAULT_MIN_WORDS).unwrap();
        assert_eq!(again.entries(), c.entries());
    }

    #[test]
    fn empty_cohort_is_an_error() {
        let t = GroupingTable::standard();
        let r = build_cohort(vec![note(1, 100, 3, false)], &[dx(100, "4280")], &t, 15);
        assert!(matches!(r, Err(IngestError::EmptyCohort(_))));
        let r = build_cohort(vec![note(1, 100, 20, false)], &[dx(100, "X99")], &t, 15);
        assert!(matches!(r, Err(IngestError::Code { hadm_id: 100, .. })));
    }

    #[test]
    fn stats_by_hand() {
        let t = GroupingTable::standard();
        let mut a = note(1, 100, 15, false);
        a.text = "Alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron".into();
        let mut b = a.clone();
        b.row_id = 2;
        b.text = format!("{} ALPHA extra", a.text);
        let c = build_cohort(vec![a.clone(), b], &[dx(100, "4280")], &t, 15).unwrap();
        let s = corpus_stats(&c).unwrap();
        assert_eq!(s.note_count, 2);
        assert_eq!(s.unique_word_count, 16);
        assert_eq!((s.min_note_words, s.max_note_words), (15, 17));
        assert_eq!(s.mean_note_words, 16.0);
        assert_eq!(s.unique_disease_count, 1);
        assert_eq!(s.group_count, 20);
        assert_eq!(s.note_types, vec![("Intensivist Note".to_string(), 2)]);

        let single = build_cohort(vec![a], &[dx(100, "4280")], &t, 15).unwrap();
        let s = corpus_stats(&single).unwrap();
        assert_eq!(s.min_note_words, s.max_note_words);
        assert_eq!(s.mean_note_words, s.min_note_words as f64);
    }
}
