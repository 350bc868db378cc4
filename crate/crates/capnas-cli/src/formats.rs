//! On-disk formats: search-space JSON, architecture JSON and the
//! line-delimited benchmark format (header line plus one record per line).
//! Saving a loaded canonical file reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use capnas_core::archspace::{ArchitectureSpec, DimValue, SearchSpaceDef, SpaceError};

use crate::benchio::{BenchError, BenchmarkRecord};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
pub const ARCH_SCHEMA_VERSION: u32 = 1;

/// First line of a benchmark file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkHeader {
    pub schema_version: u32,
    /// Name of the search space every record belongs to.
    pub space: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

/// Loaded benchmark file: header plus validated records.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkFile {
    pub header: BenchmarkHeader,
    pub records: Vec<BenchmarkRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    num_layers: usize,
    #[serde(default)]
    globals: BTreeMap<String, DimValue>,
    layers: Vec<BTreeMap<String, DimValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_config: Option<BTreeMap<String, DimValue>>,
    metrics: BTreeMap<String, f64>,
}

/// Architecture file: one JSON document.
#[derive(Debug, Serialize, Deserialize)]
struct ArchFile {
    schema_version: u32,
    #[serde(flatten)]
    arch: ArchitectureSpec,
}

fn io_err(path: &Path, source: std::io::Error) -> BenchError {
    BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads and validates a search-space definition.
pub fn load_space(path: &Path) -> Result<SearchSpaceDef, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let space: SearchSpaceDef = serde_json::from_str(&text).map_err(|e| BenchError::Malformed {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    space.validate()?;
    Ok(space)
}

pub fn save_space(path: &Path, space: &SearchSpaceDef) -> Result<(), BenchError> {
    let mut text = serde_json::to_string_pretty(space).expect("space serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Loads an architecture file and validates it against `space`.
pub fn load_arch(path: &Path, space: &SearchSpaceDef) -> Result<ArchitectureSpec, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ArchFile = serde_json::from_str(&text).map_err(|e| BenchError::Malformed {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.schema_version != ARCH_SCHEMA_VERSION {
        return Err(BenchError::UnsupportedSchema {
            version: file.schema_version,
        });
    }
    space.validate_arch(&file.arch).map_err(|e| BenchError::InvalidArch {
        path: path.display().to_string(),
        line: 1,
        source: e,
    })?;
    Ok(file.arch)
}

pub fn save_arch(path: &Path, arch: &ArchitectureSpec) -> Result<(), BenchError> {
    let file = ArchFile {
        schema_version: ARCH_SCHEMA_VERSION,
        arch: arch.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("arch serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Normalizes a metric name to a lowercase identifier.
pub fn normalize_metric_name(name: &str) -> Result<String, BenchError> {
    let lowered = name.trim().to_ascii_lowercase();
    let valid = !lowered.is_empty()
        && lowered.chars().next().unwrap().is_ascii_lowercase()
        && lowered
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    if !valid {
        return Err(BenchError::BadMetricName {
            name: name.to_string(),
        });
    }
    Ok(lowered)
}

/// Parses a benchmark file, validating every record against `space`.
/// An empty file loads as an empty record list.
pub fn load_benchmark_file(path: &Path, space: &SearchSpaceDef) -> Result<BenchmarkFile, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();

    let header: BenchmarkHeader = match lines.next() {
        None => {
            return Ok(BenchmarkFile {
                header: BenchmarkHeader {
                    schema_version: BENCH_SCHEMA_VERSION,
                    space: space.name.clone(),
                    manifest: None,
                },
                records: Vec::new(),
            })
        }
        Some((_, first)) => serde_json::from_str(first).map_err(|e| BenchError::Malformed {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?,
    };
    if header.schema_version != BENCH_SCHEMA_VERSION {
        return Err(BenchError::UnsupportedSchema {
            version: header.schema_version,
        });
    }
    if header.space != space.name {
        return Err(BenchError::SpaceNameMismatch {
            file_space: header.space.clone(),
            space: space.name.clone(),
        });
    }

    let mut seen = std::collections::BTreeSet::new();
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(line).map_err(|e| BenchError::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(parsed.id.clone()) {
            return Err(BenchError::DuplicateId {
                path: path.display().to_string(),
                line: line_no,
                id: parsed.id.clone(),
            });
        }
        if parsed.metrics.is_empty() {
            return Err(BenchError::Malformed {
                path: path.display().to_string(),
                line: line_no,
                message: "record carries no metrics".to_string(),
            });
        }
        let mut metrics = BTreeMap::new();
        for (name, value) in parsed.metrics {
            if value.is_nan() {
                return Err(BenchError::Malformed {
                    path: path.display().to_string(),
                    line: line_no,
                    message: format!("metric `{name}` is NaN"),
                });
            }
            metrics.insert(normalize_metric_name(&name)?, value);
        }
        let arch = ArchitectureSpec {
            id: parsed.id,
            space: header.space.clone(),
            num_layers: parsed.num_layers,
            globals: parsed.globals,
            layers: parsed.layers,
            embedding_config: parsed.embedding_config,
        };
        space
            .validate_arch(&arch)
            .map_err(|e: SpaceError| BenchError::InvalidArch {
                path: path.display().to_string(),
                line: line_no,
                source: e,
            })?;
        records.push(BenchmarkRecord { arch, metrics });
    }
    Ok(BenchmarkFile { header, records })
}

/// Convenience wrapper returning only the records.
pub fn load_benchmark(path: &Path, space: &SearchSpaceDef) -> Result<Vec<BenchmarkRecord>, BenchError> {
    Ok(load_benchmark_file(path, space)?.records)
}

/// Writes a benchmark file in the canonical byte layout.
pub fn save_benchmark_file(path: &Path, file: &BenchmarkFile) -> Result<(), BenchError> {
    let mut out = Vec::new();
    write_benchmark(&mut out, file).map_err(|e| io_err(path, e))?;
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn write_benchmark<W: Write>(mut w: W, file: &BenchmarkFile) -> std::io::Result<()> {
    writeln!(w, "{}", serde_json::to_string(&file.header).expect("header serializes"))?;
    for record in &file.records {
        let line = RecordLine {
            id: record.arch.id.clone(),
            num_layers: record.arch.num_layers,
            globals: record.arch.globals.clone(),
            layers: record.arch.layers.clone(),
            embedding_config: record.arch.embedding_config.clone(),
            metrics: record.metrics.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("record serializes"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchio::synth_benchmark;
    use crate::templates;
    use capnas_core::capacity::WeightInitPolicy;

    #[test]
    fn benchmark_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let space = templates::template("toy").unwrap();
        let policy = WeightInitPolicy::default_with_seed(1);
        let records = synth_benchmark(&space, 12, 0.3, 0.0, 7, &policy).unwrap();
        let file = BenchmarkFile {
            header: BenchmarkHeader {
                schema_version: BENCH_SCHEMA_VERSION,
                space: space.name.clone(),
                manifest: Some("m0000000000000000".to_string()),
            },
            records,
        };
        let path = dir.path().join("bench.jsonl");
        save_benchmark_file(&path, &file).unwrap();
        let bytes_a = fs::read(&path).unwrap();

        let loaded = load_benchmark_file(&path, &space).unwrap();
        assert_eq!(loaded, file);
        let path_b = dir.path().join("again.jsonl");
        save_benchmark_file(&path_b, &loaded).unwrap();
        let bytes_b = fs::read(&path_b).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn empty_file_loads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        let space = templates::template("toy").unwrap();
        let records = load_benchmark(&path, &space).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let space = templates::template("toy").unwrap();
        let path = dir.path().join("bad.jsonl");
        let header = serde_json::to_string(&BenchmarkHeader {
            schema_version: BENCH_SCHEMA_VERSION,
            space: space.name.clone(),
            manifest: None,
        })
        .unwrap();
        fs::write(&path, format!("{header}\nnot json\n")).unwrap();
        match load_benchmark(&path, &space) {
            Err(BenchError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let space = templates::template("toy").unwrap();
        let policy = WeightInitPolicy::default_with_seed(1);
        let records = synth_benchmark(&space, 10, 0.3, 0.0, 7, &policy).unwrap();
        let mut file = BenchmarkFile {
            header: BenchmarkHeader {
                schema_version: BENCH_SCHEMA_VERSION,
                space: space.name.clone(),
                manifest: None,
            },
            records,
        };
        file.records.push(file.records[0].clone());
        let path = dir.path().join("dup.jsonl");
        save_benchmark_file(&path, &file).unwrap();
        assert!(matches!(
            load_benchmark(&path, &space),
            Err(BenchError::DuplicateId { .. })
        ));
    }

    #[test]
    fn space_and_arch_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let space = templates::template("gpt2").unwrap();
        let path = dir.path().join("space.json");
        save_space(&path, &space).unwrap();
        let loaded = load_space(&path).unwrap();
        assert_eq!(loaded, space);

        let arch = space.sample_architecture(3);
        let apath = dir.path().join("arch.json");
        save_arch(&apath, &arch).unwrap();
        let loaded = load_arch(&apath, &space).unwrap();
        assert_eq!(loaded, arch);
    }

    #[test]
    fn metric_names_normalized() {
        assert_eq!(normalize_metric_name(" GLUE_Score ").unwrap(), "glue_score");
        assert!(normalize_metric_name("9bad").is_err());
        assert!(normalize_metric_name("has space").is_err());
        assert!(normalize_metric_name("").is_err());
    }
}
