use std::path::Path;

use dereverb::cli::{run, EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE};
use dereverb::corpus::{load_manifest, Split, CACHE_MAGIC};
use dereverb::synthetic::{write_rir_corpus, write_split_dry_corpus};
use rand::SeedableRng;

fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("dereverb").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 30 RIRs in 10 groups of three, two dry clips per split.
fn corpus(root: &Path) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let groups: Vec<(String, usize)> = (0..10).map(|g| (format!("room{g}"), 3)).collect();
    write_rir_corpus(&root.join("rirs"), &groups, 16000, &mut rng).unwrap();
    write_split_dry_corpus(&root.join("dry"), [2, 2, 2], 0.5, 16000, &mut rng).unwrap();
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    corpus(root);
    let prep = root.join("prep.jsonl");
    let (code, out) = cli(&[
        "prepare", "--rir-dir", s(&root.join("rirs")), "--val", "6", "--test", "6", "--seed", "3", "--out", s(&prep),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.starts_with("prepare config: {"));
    assert!(out.contains("train 18, val 6, test 6, discarded 0"), "{out}");

    let synth = root.join("synth");
    let (code, out) = cli(&[
        "synth", "--manifest", s(&prep), "--dry-dir", s(&root.join("dry")), "--rirs-per-dry", "3", "--seed", "5",
        "--out-dir", s(&synth), "--preset", "tiny",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let manifest_path = synth.join("manifest.jsonl");
    let m = load_manifest(&manifest_path).unwrap();
    assert_eq!(m.pairs.len(), 18);
    let cached = std::fs::read(synth.join("pair_00000.drvb")).unwrap();
    assert_eq!(&cached[..4], CACHE_MAGIC);

    let run_dir = root.join("run");
    let (code, out) = cli(&[
        "train", "--manifest", s(&manifest_path), "--model", "joint", "--scale", "tiny", "--epochs", "2", "--lr", "1e-3",
        "--batch", "2", "--weights", "1,0,0", "--out", s(&run_dir),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("epoch 2 val"), "{out}");
    let log = std::fs::read_to_string(run_dir.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    let ckpt = run_dir.join("model.ckpt");

    let report = root.join("report.csv");
    let (code, out) = cli(&[
        "eval", "--ckpt", s(&ckpt), "--manifest", s(&manifest_path), "--split", "test", "--report", s(&report),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("example_id,metric,value\n"));
    assert!(csv.contains("\nlsd,"));

    let (code, _) = cli(&[
        "eval", "--ckpt", s(&ckpt), "--manifest", s(&manifest_path), "--split", "discarded", "--report", s(&report),
    ]);
    assert_eq!(code, EXIT_DATA);

    let (code, out) = cli(&["info", "--ckpt", s(&ckpt)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("epoch 2") && out.contains("model: joint"), "{out}");

    let (code, out) = cli(&[
        "train", "--manifest", s(&manifest_path), "--model", "rir", "--scale", "tiny", "--epochs", "1", "--out",
        s(&root.join("rir_run")),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(m.pair_indices(Split::Val).len(), 6);
}

#[test]
fn insufficient_rirs_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let (code, _) = cli(&["prepare", "--rir-dir", s(&dir.path().join("rirs")), "--out", s(&dir.path().join("m.jsonl"))]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&["--help"]).0, EXIT_OK);
    assert_eq!(cli(&["train", "--help"]).0, EXIT_OK);
    assert_eq!(cli(&["prepare", "--rir-dir", "x", "--out", "y", "--frobnicate"]).0, EXIT_USAGE);
    assert_eq!(cli(&["train", "--manifest", "m", "--out", "o", "--epochs", "0"]).0, EXIT_USAGE);
    assert_eq!(cli(&["train", "--manifest", "m", "--out", "o", "--weights", "1,2"]).0, EXIT_USAGE);
    assert_eq!(cli(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(cli(&["prepare", "--rir-dir", "/definitely/missing", "--out", "/tmp/m.jsonl"]).0, EXIT_IO);
}

#[test]
fn info_paper_rir_lists_seven_layers() {
    let (code, out) = cli(&["info", "--model", "rir", "--scale", "paper"]);
    assert_eq!(code, EXIT_OK);
    for l in 0..7 {
        assert!(out.contains(&format!("conv{l}:")), "{out}");
    }
    assert!(out.contains("frames 187 -> 1"));
}

#[test]
fn paper_dry_gru_has_380_per_direction() {
    let (_, out) = cli(&["info", "--model", "dry-gru", "--scale", "paper"]);
    assert!(out.contains("hidden 380 per direction, width 760"), "{out}");
}

#[test]
fn gradcheck_all_tiny_models() {
    let (code, out) = cli(&["gradcheck", "--model", "all", "--seed", "1"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert_eq!(out.lines().filter(|l| l.contains("max rel err")).count(), 5);
}
