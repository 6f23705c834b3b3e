//! Tab-separated file contracts for notes, labels, concept annotations and
//! preprocessed documents.
//!
//! * notes: `patient_id \t category \t order_key \t text`, header row required,
//!   newlines inside `text` escaped as `\n`.
//! * labels: `patient_id \t task_name \t label`.
//! * concepts: `patient_id \t cui \t assertion \t count`.
//!
//! Labels and concepts files may start with a header row; it is recognised
//! by its first column being `patient_id`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::concepts::{Assertion, ConceptAnnotation};
use super::PatientDocument;
use crate::error::{Error, Result};

pub const NOTES_HEADER: &str = "patient_id\tcategory\torder_key\ttext";
pub const LABELS_HEADER: &str = "patient_id\ttask_name\tlabel";
pub const CONCEPTS_HEADER: &str = "patient_id\tcui\tassertion\tcount";

#[derive(Debug, Clone, PartialEq)]
pub struct NoteRecord {
    pub patient_id: String,
    pub category: String,
    pub order_key: i64,
    pub text: String,
}

impl NoteRecord {
    /// A note with no text carries no information but is still a note.
    pub fn is_degenerate(&self) -> bool {
        self.text.trim().is_empty()
    }
}

/// Ingested notes grouped per patient, in chronological order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoteCorpus {
    pub patients: BTreeMap<String, Vec<String>>,
    /// `(patient_id, order_key)` of retained notes with empty text.
    pub degenerate_notes: Vec<(String, i64)>,
}

impl NoteCorpus {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_notes(&self) -> usize {
        self.patients.values().map(Vec::len).sum()
    }

    pub fn average_notes_per_patient(&self) -> f64 {
        if self.patients.is_empty() {
            0.0
        } else {
            self.n_notes() as f64 / self.n_patients() as f64
        }
    }
}

pub fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Lines with 1-based line numbers, skipping blank lines and an optional
/// header.
fn data_lines<'a>(
    content: &'a str,
    header_required: bool,
    path: &Path,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .peekable();
    match lines.peek() {
        Some((_, first)) if first.split('\t').next() == Some("patient_id") => {
            lines.next();
        }
        _ if header_required => {
            return Err(parse_error(path, 1, "missing header row"));
        }
        _ => {}
    }
    Ok(lines.filter(|(_, l)| !l.trim().is_empty()))
}

pub fn read_note_records(path: &Path) -> Result<Vec<NoteRecord>> {
    let content = read_text(path)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in data_lines(&content, true, path)? {
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let patient_id = fields[0].trim();
        if patient_id.is_empty() {
            return Err(parse_error(path, line_no, "empty patient_id"));
        }
        let order_key: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid order_key {:?}", fields[2])))?;
        if !seen.insert((patient_id.to_owned(), order_key)) {
            return Err(Error::DuplicateNote {
                patient_id: patient_id.to_owned(),
                order_key,
                line: line_no,
            });
        }
        records.push(NoteRecord {
            patient_id: patient_id.to_owned(),
            category: fields[1].trim().to_owned(),
            order_key,
            text: unescape_text(fields[3]),
        });
    }
    Ok(records)
}

/// Reads the notes file, drops notes in `excluded_categories`, and groups the
/// rest per patient sorted by `order_key`. Patients left without notes are
/// removed.
pub fn ingest_notes(path: &Path, excluded_categories: &HashSet<String>) -> Result<NoteCorpus> {
    Ok(group_notes(read_note_records(path)?, excluded_categories))
}

/// In-memory counterpart of [`ingest_notes`].
pub fn group_notes(mut records: Vec<NoteRecord>, excluded_categories: &HashSet<String>) -> NoteCorpus {
    records.retain(|r| !excluded_categories.contains(&r.category));
    records.sort_by(|a, b| {
        a.patient_id
            .cmp(&b.patient_id)
            .then(a.order_key.cmp(&b.order_key))
    });
    let mut corpus = NoteCorpus::default();
    for r in records {
        if r.is_degenerate() {
            corpus
                .degenerate_notes
                .push((r.patient_id.clone(), r.order_key));
        }
        corpus.patients.entry(r.patient_id).or_default().push(r.text);
    }
    corpus
}

pub fn write_notes(path: &Path, records: &[NoteRecord]) -> Result<()> {
    let mut out = String::from(NOTES_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.patient_id,
            r.category,
            r.order_key,
            escape_text(&r.text)
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Task name → patient id → label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable {
    pub tasks: BTreeMap<String, BTreeMap<String, String>>,
}

impl LabelTable {
    pub fn labels_for(&self, patient_id: &str) -> BTreeMap<String, String> {
        self.tasks
            .iter()
            .filter_map(|(task, m)| m.get(patient_id).map(|l| (task.clone(), l.clone())))
            .collect()
    }

    pub fn task(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.tasks.get(name)
    }

    pub fn insert(&mut self, patient_id: &str, task: &str, label: &str) {
        self.tasks
            .entry(task.to_owned())
            .or_default()
            .insert(patient_id.to_owned(), label.to_owned());
    }
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let content = read_text(path)?;
    let mut table = LabelTable::default();
    for (line_no, line) in data_lines(&content, false, path)? {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_error(
                path,
                line_no,
                "expected 3 non-empty fields: patient_id, task_name, label",
            ));
        }
        let previous = table
            .tasks
            .entry(fields[1].to_owned())
            .or_default()
            .insert(fields[0].to_owned(), fields[2].to_owned());
        if previous.is_some() {
            return Err(parse_error(
                path,
                line_no,
                format!("duplicate label for patient {} task {}", fields[0], fields[1]),
            ));
        }
    }
    Ok(table)
}

pub fn write_labels(path: &Path, table: &LabelTable) -> Result<()> {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for (task, m) in &table.tasks {
        for (pid, label) in m {
            let _ = writeln!(out, "{pid}\t{task}\t{label}");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_concepts(path: &Path) -> Result<Vec<ConceptAnnotation>> {
    let content = read_text(path)?;
    let mut out = Vec::new();
    for (line_no, line) in data_lines(&content, false, path)? {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_error(
                path,
                line_no,
                "expected 4 fields: patient_id, cui, assertion, count",
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_error(path, line_no, "empty patient_id or cui"));
        }
        let assertion: Assertion = fields[2]
            .parse()
            .map_err(|e: Error| parse_error(path, line_no, e.to_string()))?;
        let count: u64 = fields[3]
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| parse_error(path, line_no, format!("invalid count {:?}", fields[3])))?;
        out.push(ConceptAnnotation {
            patient_id: fields[0].to_owned(),
            cui: fields[1].to_owned(),
            assertion,
            count,
        });
    }
    Ok(out)
}

pub fn write_concepts(path: &Path, annotations: &[ConceptAnnotation]) -> Result<()> {
    let mut out = String::from(CONCEPTS_HEADER);
    out.push('\n');
    for a in annotations {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", a.patient_id, a.cui, a.assertion, a.count);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Preprocessed documents: `patient_id \t space-joined tokens`. Labels are
/// not stored here.
pub fn write_documents(path: &Path, docs: &[PatientDocument]) -> Result<()> {
    let mut out = String::new();
    for d in docs {
        let _ = writeln!(out, "{}\t{}", d.patient_id, d.tokens.join(" "));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_documents(path: &Path) -> Result<Vec<PatientDocument>> {
    let content = read_text(path)?;
    let mut docs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (pid, tokens) = line
            .split_once('\t')
            .ok_or_else(|| parse_error(path, i + 1, "expected patient_id \\t tokens"))?;
        docs.push(PatientDocument {
            patient_id: pid.to_owned(),
            tokens: tokens.split_whitespace().map(str::to_owned).collect(),
            labels: BTreeMap::new(),
        });
    }
    Ok(docs)
}
