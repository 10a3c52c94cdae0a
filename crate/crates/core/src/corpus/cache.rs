//! Binary example cache: a 32-byte header (`DRVB`, format version, then the
//! `[T×F]`, `[R×F]` and `[T×F]` shapes as u32 pairs) followed by the input,
//! dry target, RIR target and reverberant target as little-endian f32, and
//! finally the four normalization scales.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{CorpusError, NormScales, TrainingExample};

pub const CACHE_MAGIC: &[u8; 4] = b"DRVB";
pub const CACHE_VERSION: u32 = 1;
pub const CACHE_HEADER_LEN: usize = 32;

/// Cache file for pair `index`, stored beside the manifest.
pub fn cache_path(manifest_path: &Path, index: usize) -> PathBuf {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    dir.join(format!("pair_{index:05}.drvb"))
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<(), CorpusError> {
    let v = u32::try_from(v).map_err(|_| CorpusError::Invalid(format!("extent {v} exceeds u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_example(path: &Path, ex: &TrainingExample) -> Result<(), CorpusError> {
    let (t, f) = ex.input_logmag.dim();
    let (r, rf) = ex.rir_target_mag.dim();
    if ex.dry_target_logmag.dim() != (t, f) || ex.reverb_target_mag.dim() != (t, f) || rf != f {
        return Err(CorpusError::Invalid("example arrays disagree in shape".into()));
    }
    let floats = 3 * t * f + r * f + 4;
    let mut buf = Vec::with_capacity(CACHE_HEADER_LEN + 4 * floats);
    buf.extend_from_slice(CACHE_MAGIC);
    put_u32(&mut buf, CACHE_VERSION as usize)?;
    for (a, b) in [(t, f), (r, f), (t, f)] {
        put_u32(&mut buf, a)?;
        put_u32(&mut buf, b)?;
    }
    let arrays = [
        &ex.input_logmag,
        &ex.dry_target_logmag,
        &ex.rir_target_mag,
        &ex.reverb_target_mag,
    ];
    for a in arrays {
        for &v in a.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let s = ex.scales;
    for v in [s.input, s.dry, s.rir, s.reverb] {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

pub fn read_example(path: &Path) -> Result<TrainingExample, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let bad = |msg: &str| CorpusError::Parse {
        line: 0,
        msg: format!("{}: {msg}", path.display()),
    };
    if bytes.len() < CACHE_HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let version = word(1) as u32;
    if version != CACHE_VERSION {
        return Err(CorpusError::VersionMismatch {
            found: version,
            expected: CACHE_VERSION,
        });
    }
    let shapes = [(word(2), word(3)), (word(4), word(5)), (word(6), word(7))];
    let (t, f) = shapes[0];
    if shapes[2] != (t, f) || shapes[1].1 != f {
        return Err(bad("inconsistent shapes"));
    }
    let r = shapes[1].0;
    let floats = 3 * t * f + r * f + 4;
    if bytes.len() != CACHE_HEADER_LEN + 4 * floats {
        return Err(bad("payload length does not match header"));
    }
    let mut values = bytes[CACHE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let mut take = |rows: usize, cols: usize| {
        Array2::from_shape_vec((rows, cols), values.by_ref().take(rows * cols).collect()).expect("sized")
    };
    let input_logmag = take(t, f);
    let dry_target_logmag = take(t, f);
    let rir_target_mag = take(r, f);
    let reverb_target_mag = take(t, f);
    let sc = take(1, 4);
    Ok(TrainingExample {
        input_logmag,
        dry_target_logmag,
        rir_target_mag,
        reverb_target_mag,
        scales: NormScales {
            input: sc[[0, 0]],
            dry: sc[[0, 1]],
            rir: sc[[0, 2]],
            reverb: sc[[0, 3]],
        },
    })
}
