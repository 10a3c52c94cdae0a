use rand::{Rng, RngCore};

use super::{CorpusError, CorpusManifest, DryFile, PairRecord, Split};
use crate::rng;

/// Pairs every dry clip with `rirs_per_dry` RIRs drawn uniformly (with
/// replacement) from the RIRs of the clip's own split.
pub fn make_pairs(
    dry: &[DryFile],
    manifest: &CorpusManifest,
    rirs_per_dry: usize,
    seed: u64,
) -> Result<Vec<PairRecord>, CorpusError> {
    if rirs_per_dry == 0 {
        return Err(CorpusError::Invalid("rirs-per-dry must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, "pairs");
    let pools: Vec<(Split, Vec<&str>)> = Split::USABLE
        .iter()
        .map(|&s| (s, manifest.rirs_in(s).map(|r| r.id.as_str()).collect()))
        .collect();
    let mut pairs = Vec::with_capacity(dry.len() * rirs_per_dry);
    for d in dry {
        let pool = &pools
            .iter()
            .find(|(s, _)| *s == d.split)
            .ok_or(CorpusError::EmptySplit(d.split))?
            .1;
        if pool.is_empty() {
            return Err(CorpusError::EmptySplit(d.split));
        }
        for _ in 0..rirs_per_dry {
            let rir = pool[rng.gen_range(0..pool.len())];
            pairs.push(PairRecord {
                dry_path: d.path.clone(),
                rir_id: rir.to_string(),
                seed: rng.next_u64(),
                split: d.split,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RirRecord;
    use std::path::PathBuf;

    fn manifest() -> CorpusManifest {
        let rirs = (0..30)
            .map(|i| RirRecord {
                id: format!("r{i}"),
                path: PathBuf::from(format!("r{i}.wav")),
                group_key: format!("g{}", i / 3),
                split: if i < 20 { Split::Train } else { Split::Val },
                duration_s: 1.0,
            })
            .collect();
        CorpusManifest::new(rirs)
    }

    fn dry(n: usize, split: Split) -> Vec<DryFile> {
        (0..n)
            .map(|i| DryFile {
                path: PathBuf::from(format!("d{i}.wav")),
                split,
            })
            .collect()
    }

    #[test]
    fn counts_determinism_and_split_provenance() {
        let m = manifest();
        let d = dry(3, Split::Train);
        let a = make_pairs(&d, &m, 2, 1).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, make_pairs(&d, &m, 2, 1).unwrap());
        for p in &a {
            assert_eq!(m.rir(&p.rir_id).unwrap().split, Split::Train);
        }
        let d = dry(10, Split::Train);
        let a = make_pairs(&d, &m, 1, 1).unwrap();
        let b = make_pairs(&d, &m, 1, 2).unwrap();
        let differing = a.iter().zip(&b).filter(|(x, y)| x.rir_id != y.rir_id).count();
        assert!(differing >= 5, "{differing}");
    }

    #[test]
    fn empty_split() {
        let m = manifest();
        assert!(matches!(
            make_pairs(&dry(1, Split::Test), &m, 1, 0),
            Err(CorpusError::EmptySplit(Split::Test))
        ));
        assert!(make_pairs(&dry(1, Split::Train), &m, 0, 0).is_err());
    }
}
