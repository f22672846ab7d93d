//! The four subcommands. Machine outputs go to files only; progress and
//! per-note problems go to the log.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ehrtwin::evaluation::{evaluate_corpus, EvaluationReport, GoldAnnotations};
use ehrtwin::exec;
use ehrtwin::fhir::TwinBundle;
use ehrtwin::synthesizer::{load_tables, split_corpus, synthesize_with, SkippedItem, SyntheticCase};
use ehrtwin::ClinicalNote;

use crate::config::PipelineConfig;

pub const NOTES_DIR: &str = "notes";
pub const GOLD_DIR: &str = "gold";
pub const REFERENCE_DIR: &str = "reference";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub notes: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub skipped: Vec<SkippedItem>,
    pub warnings: Vec<String>,
}

/// Keeps file names portable whatever the identifier contains.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// `.json` files hold a serialized note; `.txt` files are raw text whose
/// stem serves as both note id and patient id.
pub fn read_note(path: &Path) -> Result<Option<ClinicalNote>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(Some(read_json(path)?)),
        Some("txt") => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            Ok(Some(ClinicalNote::new(stem, stem, text)))
        }
        _ => Ok(None),
    }
}

/// Unreadable notes are logged and skipped.
pub fn read_notes(dir: &Path) -> Result<Vec<ClinicalNote>> {
    let mut notes = Vec::new();
    for path in sorted_files(dir)? {
        match read_note(&path) {
            Ok(Some(n)) => notes.push(n),
            Ok(None) => {}
            Err(e) => log::error!("file={} stage=read error={e:#}", path.display()),
        }
    }
    notes.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    Ok(notes)
}

pub fn synthesize(tables: &Path, cfg: &PipelineConfig) -> Result<Manifest> {
    let load = load_tables(tables)?;
    for w in &load.warnings {
        log::warn!("stage=synthesize {w}");
    }
    let index = cfg.index()?;
    let templates = cfg.templates()?;
    let pipeline = cfg.pipeline()?;
    let opts = pipeline.assembly_options().clone();
    let results = exec::map(cfg.mode, &load.records, |r| synthesize_with(r, &templates, &index, &opts));

    let mut cases: Vec<SyntheticCase> = Vec::new();
    let mut skipped = Vec::new();
    for (record, result) in load.records.iter().zip(results) {
        match result {
            Ok(s) => {
                for item in &s.skipped {
                    log::warn!("patient={} stage=synthesize skipped={} reason={}", item.patient_id, item.item, item.reason);
                }
                skipped.extend(s.skipped);
                cases.push(s.case);
            }
            Err(e) => log::warn!("patient={} stage=synthesize error={e}", record.patient_id),
        }
    }
    let split = split_corpus(&cases, cfg.split, cfg.seed)?;

    let out = &cfg.out;
    for sub in [NOTES_DIR, GOLD_DIR, REFERENCE_DIR] {
        fs::create_dir_all(out.join(sub))?;
    }
    for case in &cases {
        let stem = file_stem(&case.note.note_id);
        write_json(&out.join(NOTES_DIR).join(format!("{stem}.json")), &case.note)?;
        write_json(&out.join(GOLD_DIR).join(format!("{stem}.json")), &case.gold)?;
        write_json(&out.join(REFERENCE_DIR).join(format!("{stem}.json")), &case.reference)?;
        log::info!(
            "note={} stage=synthesize mentions={} relations={} resources={}",
            case.note.note_id,
            case.gold.mentions.len(),
            case.gold.relations.len(),
            case.reference.entry.len()
        );
    }
    let manifest = Manifest {
        seed: split.seed,
        ratios: split.ratios,
        notes: cases.len(),
        train: split.train,
        validation: split.validation,
        test: split.test,
        skipped,
        warnings: load.warnings,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Writes `<note_id>.annotations.json` per note. Returns the number written.
pub fn extract(notes_dir: &Path, cfg: &PipelineConfig) -> Result<usize> {
    let notes = read_notes(notes_dir)?;
    let pipeline = cfg.pipeline()?;
    let analyses = pipeline.analyze_all(&notes, cfg.mode);
    fs::create_dir_all(&cfg.out)?;
    let mut written = 0;
    for a in &analyses {
        let path = cfg.out.join(format!("{}.annotations.json", file_stem(&a.note_id)));
        match write_json(&path, a) {
            Ok(()) => written += 1,
            Err(e) => log::error!("note={} stage=extract error={e:#}", a.note_id),
        }
    }
    Ok(written)
}

/// Writes `twin_<patient>.json` and `issues_<patient>.json` per patient.
pub fn twin(notes_dir: &Path, cfg: &PipelineConfig) -> Result<usize> {
    let notes = read_notes(notes_dir)?;
    let pipeline = cfg.pipeline()?;
    fs::create_dir_all(&cfg.out)?;
    let mut written = 0;
    for result in pipeline.twins(&notes, cfg.mode) {
        let out = match result {
            Ok(o) => o,
            Err(e) => {
                log::error!("stage=twin error={e}");
                continue;
            }
        };
        let stem = file_stem(&out.patient_id);
        fs::write(cfg.out.join(format!("twin_{stem}.json")), out.bundle.to_json())?;
        write_json(&cfg.out.join(format!("issues_{stem}.json")), &out.issues)?;
        written += 1;
    }
    Ok(written)
}

/// Loads a synthesized corpus: every note in `notes/` with its gold file
/// and reference bundle.
pub fn load_corpus(dir: &Path) -> Result<Vec<SyntheticCase>> {
    let notes_dir = dir.join(NOTES_DIR);
    if !notes_dir.is_dir() {
        bail!("{} has no {NOTES_DIR}/ directory", dir.display());
    }
    let mut cases = Vec::new();
    for note in read_notes(&notes_dir)? {
        let stem = file_stem(&note.note_id);
        let gold: GoldAnnotations = read_json(&dir.join(GOLD_DIR).join(format!("{stem}.json")))?;
        let reference: TwinBundle = read_json(&dir.join(REFERENCE_DIR).join(format!("{stem}.json")))?;
        cases.push(SyntheticCase { note, gold, reference });
    }
    Ok(cases)
}

pub fn evaluate(corpus: &Path, cfg: &PipelineConfig) -> Result<EvaluationReport> {
    let cases = load_corpus(corpus)?;
    let pipeline = cfg.pipeline()?;
    let report = evaluate_corpus(&cases, &pipeline, cfg.mode)?;
    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join(REPORT_FILE), &report)?;
    let summary = format!("{}\n{}\n", EvaluationReport::SUMMARY_HEADER, report.summary_row());
    fs::write(cfg.out.join(SUMMARY_FILE), summary)?;
    log::info!(
        "stage=evaluate notes={} patients={} ner_f1={:.4} completeness={:.4} interop={:.4}",
        report.notes,
        report.patients,
        report.ner_f1,
        report.semantic_completeness,
        report.interoperability
    );
    Ok(report)
}
