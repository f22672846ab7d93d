//! Reader for the three structured input tables.
//!
//! | file                | columns                                       |
//! |---------------------|-----------------------------------------------|
//! | `diagnoses.csv`     | patient_id, code, description, [system]       |
//! | `prescriptions.csv` | patient_id, drug, dose, frequency             |
//! | `labevents.csv`     | patient_id, test, value, unit, timestamp      |
//!
//! All files carry a header row. `labevents.csv` is optional. When the
//! diagnosis `system` column is absent or blank the system is inferred from
//! the code shape: a leading letter means ICD-10, all digits means SNOMED CT.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::terminology::CodeSystem;

use super::{Diagnosis, LabEvent, Prescription, StructuredRecord, SynthError};

pub const DIAGNOSES_FILE: &str = "diagnoses.csv";
pub const PRESCRIPTIONS_FILE: &str = "prescriptions.csv";
pub const LABEVENTS_FILE: &str = "labevents.csv";

#[derive(Debug, Deserialize)]
struct DiagnosisRow {
    patient_id: String,
    code: String,
    description: String,
    #[serde(default)]
    system: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PrescriptionRow {
    patient_id: String,
    drug: String,
    #[serde(default)]
    dose: String,
    #[serde(default)]
    frequency: String,
}

#[derive(Debug, Deserialize)]
struct LabRow {
    patient_id: String,
    test: String,
    #[serde(default)]
    value: String,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    timestamp: String,
}

/// Records ordered by patient id, plus non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableLoad {
    pub records: Vec<StructuredRecord>,
    pub warnings: Vec<String>,
}

pub fn infer_system(code: &str) -> Option<CodeSystem> {
    let first = code.trim().chars().next()?;
    if first.is_ascii_alphabetic() {
        Some(CodeSystem::Icd10)
    } else if code.trim().chars().all(|c| c.is_ascii_digit()) {
        Some(CodeSystem::Snomed)
    } else {
        None
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(file: &str, text: &str) -> Result<Vec<T>, SynthError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for result in reader.deserialize() {
        let row: T = result.map_err(|e| SynthError::Table {
            file: file.to_string(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn blank_patient(file: &str, line: usize) -> SynthError {
    SynthError::Table {
        file: file.to_string(),
        line,
        message: "empty patient_id".to_string(),
    }
}

/// Parses the three tables from strings. `labevents` may be absent.
pub fn parse_tables(
    diagnoses: &str,
    prescriptions: &str,
    labevents: Option<&str>,
) -> Result<Vec<StructuredRecord>, SynthError> {
    let mut records: BTreeMap<String, StructuredRecord> = BTreeMap::new();
    fn record<'a>(records: &'a mut BTreeMap<String, StructuredRecord>, pid: &str) -> &'a mut StructuredRecord {
        records
            .entry(pid.to_string())
            .or_insert_with(|| StructuredRecord::new(pid))
    }

    for (i, row) in read_rows::<DiagnosisRow>(DIAGNOSES_FILE, diagnoses)?.into_iter().enumerate() {
        if row.patient_id.is_empty() {
            return Err(blank_patient(DIAGNOSES_FILE, i + 2));
        }
        let system = match row.system.as_deref().filter(|s| !s.is_empty()) {
            Some(tag) => tag.parse().ok(),
            None => infer_system(&row.code),
        }
        .ok_or_else(|| SynthError::Table {
            file: DIAGNOSES_FILE.to_string(),
            line: i + 2,
            message: format!("cannot determine code system for `{}`", row.code),
        })?;
        record(&mut records, &row.patient_id).diagnoses.push(Diagnosis {
            system,
            code: row.code,
            description: row.description,
        });
    }
    for (i, row) in read_rows::<PrescriptionRow>(PRESCRIPTIONS_FILE, prescriptions)?
        .into_iter()
        .enumerate()
    {
        if row.patient_id.is_empty() {
            return Err(blank_patient(PRESCRIPTIONS_FILE, i + 2));
        }
        record(&mut records, &row.patient_id).medications.push(Prescription {
            drug: row.drug,
            dose: row.dose,
            frequency: row.frequency,
        });
    }
    if let Some(text) = labevents {
        for (i, row) in read_rows::<LabRow>(LABEVENTS_FILE, text)?.into_iter().enumerate() {
            if row.patient_id.is_empty() {
                return Err(blank_patient(LABEVENTS_FILE, i + 2));
            }
            record(&mut records, &row.patient_id).labs.push(LabEvent {
                test: row.test,
                value: row.value,
                unit: row.unit,
                timestamp: row.timestamp,
            });
        }
    }
    Ok(records.into_values().collect())
}

fn read_file(path: &Path) -> Result<String, SynthError> {
    fs::read_to_string(path).map_err(|e| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads the tables from a directory. A missing `labevents.csv` is a
/// warning; the other two are required.
pub fn load_tables(dir: impl AsRef<Path>) -> Result<TableLoad, SynthError> {
    let dir = dir.as_ref();
    let required = |name: &str| -> Result<String, SynthError> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(SynthError::MissingTable(path.display().to_string()));
        }
        read_file(&path)
    };
    let diagnoses = required(DIAGNOSES_FILE)?;
    let prescriptions = required(PRESCRIPTIONS_FILE)?;
    let lab_path = dir.join(LABEVENTS_FILE);
    let mut warnings = Vec::new();
    let labs = if lab_path.is_file() {
        Some(read_file(&lab_path)?)
    } else {
        warnings.push(format!("{} not found; notes will carry no lab sentences", lab_path.display()));
        None
    };
    let records = parse_tables(&diagnoses, &prescriptions, labs.as_deref())?;
    Ok(TableLoad { records, warnings })
}
