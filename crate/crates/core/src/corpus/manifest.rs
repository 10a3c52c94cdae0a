use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest, PairRecord, RirRecord, SplitCounts, SynthConfig};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Counts(SplitCounts),
    Synth(SynthConfig),
    Rir(RirRecord),
    Pair(PairRecord),
}

/// Writes a `{"version":1}` header line followed by one JSON object per
/// line: split counts, the synthesis config if any, RIRs, then pairs.
pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    let json = |r: serde_json::Result<String>| r.map_err(|e| CorpusError::io(path, e));
    let mut lines = vec![
        json(serde_json::to_string(&Header {
            version: manifest.version,
        }))?,
        json(serde_json::to_string(&Line::Counts(manifest.split_counts)))?,
    ];
    if let Some(s) = manifest.synth {
        lines.push(json(serde_json::to_string(&Line::Synth(s)))?);
    }
    for r in &manifest.rirs {
        lines.push(json(serde_json::to_string(&Line::Rir(r.clone())))?);
    }
    for p in &manifest.pairs {
        lines.push(json(serde_json::to_string(&Line::Pair(p.clone())))?);
    }
    let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, msg: String| CorpusError::Parse { line, msg };

    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| CorpusError::io(path, e))?,
        None => return Err(parse_err(1, "empty manifest".into())),
    };
    let header: Header = serde_json::from_str(&header).map_err(|e| parse_err(1, e.to_string()))?;
    if header.version != MANIFEST_VERSION {
        return Err(CorpusError::VersionMismatch {
            found: header.version,
            expected: MANIFEST_VERSION,
        });
    }

    let mut m = CorpusManifest {
        version: header.version,
        rirs: Vec::new(),
        pairs: Vec::new(),
        split_counts: SplitCounts::default(),
        synth: None,
    };
    let mut counts = None;
    for (i, line) in lines {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line).map_err(|e| parse_err(i + 1, e.to_string()))? {
            Line::Counts(c) => counts = Some(c),
            Line::Synth(s) => m.synth = Some(s),
            Line::Rir(r) => m.rirs.push(r),
            Line::Pair(p) => m.pairs.push(p),
        }
    }
    let actual = SplitCounts::of(&m.rirs);
    if counts.is_some_and(|c| c != actual) {
        return Err(parse_err(2, "split counts disagree with the RIR records".into()));
    }
    m.split_counts = actual;
    Ok(m)
}
