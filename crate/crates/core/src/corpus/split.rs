use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{CorpusError, CorpusManifest, RirRecord, Split};
use crate::rng;

/// Reshuffles of the small groups tried before giving up on exact
/// validation/test counts.
const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOptions {
    pub val: usize,
    pub test: usize,
    /// Records kept per group; the rest are discarded.
    pub cap: usize,
    /// Groups with more retained records than this always go to train.
    pub big_group: usize,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            val: 200,
            test: 200,
            cap: 100,
            big_group: 20,
            seed: 0,
        }
    }
}

/// Assigns whole groups to train/val/test.
///
/// Groups are capped (random surplus discarded), large groups go to train,
/// and the remaining groups are taken in shuffled order, each going whole
/// to the held-out split with the largest deficit that can still take it,
/// or to train when neither can.
pub fn split_groups(records: &[RirRecord], opts: &SplitOptions) -> Result<CorpusManifest, CorpusError> {
    if opts.cap == 0 {
        return Err(CorpusError::Invalid("cap must be positive".into()));
    }
    let mut rng = rng::stream(opts.seed, "split");

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.group_key.is_empty() {
            return Err(CorpusError::Invalid(format!("record {} has an empty group key", r.id)));
        }
        groups.entry(&r.group_key).or_default().push(i);
    }

    let mut split = vec![Split::Train; records.len()];
    let mut retained: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (key, members) in &groups {
        let mut members = members.clone();
        if members.len() > opts.cap {
            members.shuffle(&mut rng);
            for &i in &members[opts.cap..] {
                split[i] = Split::Discarded;
            }
            members.truncate(opts.cap);
            members.sort_unstable();
        }
        retained.insert(key, members);
    }

    let total: usize = retained.values().map(Vec::len).sum();
    if total < opts.val + opts.test {
        return Err(CorpusError::InsufficientData(format!(
            "{total} retained RIRs cannot cover {} validation + {} test",
            opts.val, opts.test
        )));
    }

    let small: Vec<&str> = retained
        .iter()
        .filter(|(_, m)| m.len() <= opts.big_group)
        .map(|(k, _)| *k)
        .collect();

    let mut order = small.clone();
    let mut found = None;
    for _ in 0..MAX_ATTEMPTS {
        order.shuffle(&mut rng);
        let mut deficit = [opts.val, opts.test];
        let mut assignment = Vec::with_capacity(order.len());
        for key in &order {
            let size = retained[key].len();
            let choice = [0usize, 1]
                .into_iter()
                .filter(|&s| deficit[s] >= size && deficit[s] > 0)
                .max_by_key(|&s| (deficit[s], usize::MAX - s));
            match choice {
                Some(s) => {
                    deficit[s] -= size;
                    assignment.push((*key, if s == 0 { Split::Val } else { Split::Test }));
                }
                None => assignment.push((*key, Split::Train)),
            }
        }
        if deficit == [0, 0] {
            found = Some(assignment);
            break;
        }
    }
    let assignment = found.ok_or_else(|| {
        CorpusError::InsufficientData(format!(
            "group sizes do not allow exactly {} validation and {} test RIRs",
            opts.val, opts.test
        ))
    })?;
    for (key, s) in assignment {
        for &i in &retained[key] {
            split[i] = s;
        }
    }

    let rirs = records
        .iter()
        .zip(split)
        .map(|(r, s)| RirRecord {
            split: s,
            ..r.clone()
        })
        .collect();
    Ok(CorpusManifest::new(rirs))
}
