use std::path::{Path, PathBuf};

use regex::Regex;

use super::{CorpusError, RirRecord, Split};
use crate::dsp::read_wav;

/// Everything before the last underscore of the file stem.
pub const DEFAULT_GROUP_PATTERN: &str = r"^(.*)_[^_]*$";

const TARGET_RATE: f64 = 16000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub records: Vec<RirRecord>,
    /// Files that could not be decoded, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| CorpusError::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CorpusError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Group key from a file stem: capture group 1 if the pattern has one,
/// else the whole match; the stem itself when nothing matches.
fn group_key(stem: &str, pattern: &Regex) -> String {
    match pattern.captures(stem) {
        Some(c) => c
            .get(1)
            .or_else(|| c.get(0))
            .map(|m| m.as_str())
            .filter(|s| !s.is_empty())
            .unwrap_or(stem)
            .to_string(),
        None => stem.to_string(),
    }
}

/// One record per readable WAV under `dir` (recursive, sorted by path).
/// Undecodable files are skipped and reported. Durations are those after
/// conversion to 16 kHz.
pub fn ingest_rirs(dir: &Path, pattern: &Regex) -> Result<IngestReport, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::io(dir, "not a readable directory"));
    }
    let files = wav_files(dir)?;
    if files.is_empty() {
        return Err(CorpusError::NoFilesFound(dir.to_path_buf()));
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for path in files {
        match read_wav(&path) {
            Ok(clip) => {
                let rel = path.strip_prefix(dir).unwrap_or(&path);
                let id = rel.with_extension("").to_string_lossy().replace('\\', "/");
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                let resampled =
                    (clip.len() as f64 * TARGET_RATE / clip.sample_rate() as f64).round();
                records.push(RirRecord {
                    id,
                    group_key: group_key(&stem, pattern),
                    path: path.clone(),
                    split: Split::Train,
                    duration_s: resampled / TARGET_RATE,
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push((path, e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(CorpusError::NoFilesFound(dir.to_path_buf()));
    }
    Ok(IngestReport { records, skipped })
}

/// A dry clip and the split it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DryFile {
    pub path: PathBuf,
    pub split: Split,
}

/// Dry clips under `dir`. If `train/`, `val/` or `test/` subdirectories
/// exist, their contents go to those splits; otherwise every file is
/// training material.
pub fn collect_dry_files(dir: &Path) -> Result<Vec<DryFile>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::io(dir, "not a readable directory"));
    }
    let split_dirs: Vec<(Split, PathBuf)> = Split::USABLE
        .iter()
        .map(|&s| (s, dir.join(s.name())))
        .filter(|(_, p)| p.is_dir())
        .collect();
    let mut out = Vec::new();
    if split_dirs.is_empty() {
        for path in wav_files(dir)? {
            out.push(DryFile {
                path,
                split: Split::Train,
            });
        }
    } else {
        for (split, d) in split_dirs {
            for path in wav_files(&d)? {
                out.push(DryFile { path, split });
            }
        }
    }
    if out.is_empty() {
        return Err(CorpusError::NoFilesFound(dir.to_path_buf()));
    }
    Ok(out)
}
