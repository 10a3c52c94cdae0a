//! Library-level run from WAV folders to an evaluation report.

use dereverb::corpus::{
    cache_path, collect_dry_files, ingest_rirs, make_pairs, read_example, save_manifest, split_groups,
    synthesize_example, write_example, Split, SplitOptions, SynthConfig, DEFAULT_GROUP_PATTERN,
};
use dereverb::eval::evaluate;
use dereverb::models::{ModelKind, Scale};
use dereverb::synthetic::{write_rir_corpus, write_split_dry_corpus};
use dereverb::trainer::{load_checkpoint, resume, save_checkpoint, train, Dataset, TrainConfig};
use rand::SeedableRng;
use regex::Regex;

#[test]
fn folders_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let groups: Vec<(String, usize)> = (0..8).map(|g| (format!("room{g}"), 2)).collect();
    write_rir_corpus(&dir.path().join("rirs"), &groups, 16000, &mut rng).unwrap();
    write_split_dry_corpus(&dir.path().join("dry"), [3, 2, 2], 0.5, 16000, &mut rng).unwrap();

    let report = ingest_rirs(&dir.path().join("rirs"), &Regex::new(DEFAULT_GROUP_PATTERN).unwrap()).unwrap();
    assert_eq!(report.records.len(), 16);
    assert!(report.skipped.is_empty());
    let opts = SplitOptions {
        val: 4,
        test: 4,
        seed: 1,
        ..SplitOptions::default()
    };
    let mut manifest = split_groups(&report.records, &opts).unwrap();
    assert_eq!(manifest.split_counts.get(Split::Val), 4);

    let dry = collect_dry_files(&dir.path().join("dry")).unwrap();
    manifest.pairs = make_pairs(&dry, &manifest, 2, 1).unwrap();
    assert_eq!(manifest.pairs.len(), 14);
    for p in &manifest.pairs {
        assert_eq!(manifest.rir(&p.rir_id).unwrap().split, p.split);
    }

    let cfg = SynthConfig::tiny();
    manifest.synth = Some(cfg);
    let path = dir.path().join("synth").join("manifest.jsonl");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    save_manifest(&manifest, &path).unwrap();
    for (i, p) in manifest.pairs.iter().enumerate() {
        let ex = synthesize_example(p, &manifest, &cfg).unwrap();
        assert_eq!(ex.input_logmag.dim(), (cfg.frames(), cfg.bins()));
        write_example(&cache_path(&path, i), &ex).unwrap();
        // the cache stores f32
        let back = read_example(&cache_path(&path, i)).unwrap();
        for (a, b) in back.input_logmag.iter().zip(&ex.input_logmag) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(back.rir_target_mag.dim(), ex.rir_target_mag.dim());
    }

    let data = Dataset::from_manifest(&path).unwrap();
    assert_eq!((data.train.len(), data.val.len(), data.test.len()), (6, 4, 4));
    let config = TrainConfig {
        kind: ModelKind::Joint,
        scale: Scale::Tiny,
        epochs: 2,
        lr: 1e-3,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let first = train(&config, &data).unwrap();
    let ckpt_path = dir.path().join("model.ckpt");
    save_checkpoint(&first.checkpoint, &ckpt_path).unwrap();
    let loaded = load_checkpoint(&ckpt_path).unwrap();
    assert_eq!(loaded.epoch, 2);

    let more = resume(loaded, &config, &data).unwrap();
    assert_eq!(more.checkpoint.epoch, 4);
    assert_eq!(more.log.last().unwrap().epoch, 4);

    let report = evaluate(&more.checkpoint, &path, Split::Test).unwrap();
    for metric in ["lsd", "dry_mse", "rir_mse", "edc_mse", "l_rec"] {
        let m = report.mean(metric).unwrap_or_else(|| panic!("no {metric}"));
        assert!(m.is_finite() && m >= 0.0, "{metric} = {m}");
    }
}
