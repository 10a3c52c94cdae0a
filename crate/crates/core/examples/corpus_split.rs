//! Group-aware train/val/test split of an in-memory RIR inventory.

use std::collections::BTreeMap;

use dereverb::corpus::{split_groups, RirRecord, Split, SplitOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two large rooms, a medium one and many small ones
    let mut sizes = vec![("hall", 140), ("church", 60), ("studio", 25)];
    let small: Vec<String> = (0..60).map(|i| format!("office{i:02}")).collect();
    sizes.extend(small.iter().map(|s| (s.as_str(), 10)));

    let mut records = Vec::new();
    for (group, n) in &sizes {
        for i in 0..*n {
            records.push(RirRecord {
                id: format!("{group}_mic{i}"),
                path: format!("{group}_mic{i}.wav").into(),
                group_key: group.to_string(),
                split: Split::Train,
                duration_s: 1.0,
            });
        }
    }

    let manifest = split_groups(&records, &SplitOptions::default())?;
    for split in [Split::Train, Split::Val, Split::Test, Split::Discarded] {
        println!("{:<9} {:>4}", split.name(), manifest.split_counts.get(split));
    }

    let mut placement: BTreeMap<&str, BTreeMap<Split, usize>> = BTreeMap::new();
    for r in &manifest.rirs {
        *placement.entry(&r.group_key).or_default().entry(r.split).or_default() += 1;
    }
    for group in ["hall", "church", "studio", "office00", "office01"] {
        println!("{group:<9} {:?}", placement[group]);
    }
    Ok(())
}
