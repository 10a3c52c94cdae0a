//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use dereverb::cli;
use dereverb::corpus::{split_groups, synthesize_from_clips, RirRecord, Split, SplitOptions, SynthConfig};
use dereverb::dsp::{convolve_direct, convolve_fft, frame_count, istft, log_magnitude, magnitude, stft, AudioClip};
use dereverb::eval::{t60_estimate, DEFAULT_HOP_S};
use dereverb::models::{
    check_model_gradients, reconstruct_reverb, ModelConfig, ModelKind, RirEstimatorConfig, Scale,
};
use dereverb::nn::{grad_check, GruParams, Padding, ParamStore, Tape, Tensor, DEFAULT_EPS};
use dereverb::synthetic::{speech_like, write_rir_corpus, write_split_dry_corpus};
use dereverb::trainer::{Dataset, TrainConfig, Trainer};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: Vec<usize>, lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.gen_range(lo..hi))
}

// 1

fn shape_closure() -> Outcome {
    let mut r = rng(1);
    let clip = speech_like(5.0, 0.1, 16000, &mut r);
    let spec = stft(&clip, 512, 256).map_err(|e| e.to_string())?;
    let logmag = log_magnitude(&magnitude(&spec).mag, 1e-5);
    ensure(logmag.dim() == (313, 257), || format!("log-STFT {:?}", logmag.dim()))?;

    let config = RirEstimatorConfig::paper();
    let chain = config.extents();
    ensure(chain == [313, 305, 292, 266, 240, 214, 187, 1], || format!("extent chain {chain:?}"))?;

    let store = ParamStore::init(&config.param_specs(), &mut r);
    let mut tape = Tape::inference();
    let p = store.bind(&mut tape);
    let x = tape.constant(Tensor::new(vec![313, 257], logmag.iter().copied().collect()).unwrap());
    let start = Instant::now();
    let y = config.forward(&mut tape, &p, x).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure(tape.shape(y) == [126, 257], || format!("RIR estimate {:?}", tape.shape(y)))?;
    ensure(tape.value(y).all_finite(), || "non-finite RIR estimate".into())?;
    ensure(took < Duration::from_secs(1), || format!("forward took {:.2} s", took.as_secs_f64()))?;
    Ok(format!(
        "313x257 -> 126x257, chain 313>305>292>266>240>214>187>1, forward {:.0} ms",
        took.as_secs_f64() * 1e3
    ))
}

// 2

fn layer_check(name: &str, params: &[Tensor], f: impl Fn(&mut Tape, &[dereverb::nn::Var]) -> Result<dereverb::nn::Var, dereverb::nn::NnError>) -> Result<f64, String> {
    let report = grad_check(params, DEFAULT_EPS, None, f).map_err(|e| format!("{name}: {e}"))?;
    ensure(report.max_rel_err < 1e-5 && report.checked > 0, || {
        format!("{name}: max rel err {:e} ({:?})", report.max_rel_err, report.worst)
    })?;
    Ok(report.max_rel_err)
}

fn gradient_suite() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;

    let x = random_tensor(vec![7, 6, 2], -1.0, 1.0, &mut r);
    let target = random_tensor(vec![4, 3, 3], -1.0, 1.0, &mut r);
    let k = random_tensor(vec![3, 2, 2, 3], -0.5, 0.5, &mut r);
    let b = random_tensor(vec![3], -0.5, 0.5, &mut r);
    worst = worst.max(layer_check("conv2d", &[x.clone(), k, b], |t, p| {
        let y = t.conv2d(p[0], p[1], Some(p[2]), (2, 2), Padding::Same)?;
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);

    // unit stride with long time kernels takes the FFT forward route
    let long = random_tensor(vec![20, 3, 2], -1.0, 1.0, &mut r);
    let kv = random_tensor(vec![9, 1, 2, 3], -0.5, 0.5, &mut r);
    let bv = random_tensor(vec![3], -0.5, 0.5, &mut r);
    let target_v = random_tensor(vec![12, 3, 3], -1.0, 1.0, &mut r);
    worst = worst.max(layer_check("conv2d valid", &[long, kv, bv], |t, p| {
        let y = t.conv2d(p[0], p[1], Some(p[2]), (1, 1), Padding::Valid)?;
        let tv = t.constant(target_v.clone());
        t.mse(y, tv)
    })?);

    let kt = random_tensor(vec![4, 3, 3, 2], -0.5, 0.5, &mut r);
    let target = random_tensor(vec![16, 13, 3], -1.0, 1.0, &mut r);
    worst = worst.max(layer_check("conv2d_transposed", &[x.clone(), kt], |t, p| {
        let y = t.conv2d_transposed(p[0], p[1], None, (2, 2))?;
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);

    let away = |r: &mut ChaCha8Rng| {
        let m = r.gen_range(0.1..2.0);
        if r.gen_bool(0.5) {
            m
        } else {
            -m
        }
    };
    let a = Tensor::from_fn(vec![5, 4], |_| away(&mut r));
    let target = random_tensor(vec![5, 4], -1.0, 1.0, &mut r);
    worst = worst.max(layer_check("elu", &[a.clone()], |t, p| {
        let y = t.elu(p[0]);
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);
    worst = worst.max(layer_check("relu", &[a], |t, p| {
        let y = t.relu(p[0]);
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);

    let (din, h) = (4, 3);
    let gru = |r: &mut ChaCha8Rng| {
        vec![
            random_tensor(vec![din, 3 * h], -0.6, 0.6, r),
            random_tensor(vec![h, 3 * h], -0.6, 0.6, r),
            random_tensor(vec![3 * h], -0.3, 0.3, r),
        ]
    };
    let mut cell = vec![random_tensor(vec![din], -1.0, 1.0, &mut r), random_tensor(vec![h], -1.0, 1.0, &mut r)];
    cell.extend(gru(&mut r));
    let target = random_tensor(vec![h], -1.0, 1.0, &mut r);
    worst = worst.max(layer_check("gru_cell", &cell, |t, p| {
        let y = t.gru_cell(p[0], p[1], GruParams { w: p[2], u: p[3], b: p[4] })?;
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);

    let mut bi = vec![random_tensor(vec![5, din], -1.0, 1.0, &mut r)];
    bi.extend(gru(&mut r));
    bi.extend(gru(&mut r));
    let target = random_tensor(vec![5, 2 * h], -1.0, 1.0, &mut r);
    worst = worst.max(layer_check("bigru", &bi, |t, p| {
        let y = t.bigru_layer(
            p[0],
            GruParams { w: p[1], u: p[2], b: p[3] },
            GruParams { w: p[4], u: p[5], b: p[6] },
        )?;
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);

    let lin = vec![
        random_tensor(vec![6, 5], -1.0, 1.0, &mut r),
        random_tensor(vec![5, 3], -1.0, 1.0, &mut r),
        random_tensor(vec![3], -1.0, 1.0, &mut r),
    ];
    let target = random_tensor(vec![6, 3], -1.0, 1.0, &mut r);
    worst = worst.max(layer_check("linear", &lin, |t, p| {
        let y = t.linear(p[0], p[1], p[2])?;
        let tv = t.constant(target.clone());
        t.mse(y, tv)
    })?);

    let pair = vec![random_tensor(vec![4, 5], -1.0, 1.0, &mut r), random_tensor(vec![4, 5], -1.0, 1.0, &mut r)];
    worst = worst.max(layer_check("mse", &pair, |t, p| t.mse(p[0], p[1]))?);

    for kind in ModelKind::ALL {
        let report = check_model_gradients(&ModelConfig::preset(kind, Scale::Tiny), 11, None).map_err(|e| e.to_string())?;
        ensure(report.max_rel_err < 1e-5, || format!("{kind}: max rel err {:e}", report.max_rel_err))?;
        worst = worst.max(report.max_rel_err);
    }
    Ok(format!("9 layer cases + 4 tiny models, max rel err {worst:.2e}"))
}

// 3

fn dsp_oracles() -> Outcome {
    let mut r = rng(3);
    let mut conv_worst: f64 = 0.0;
    for _ in 0..50 {
        let nx = r.gen_range(1..3000);
        let nh = r.gen_range(1..1500);
        let x: Vec<f64> = (0..nx).map(|_| r.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..nh).map(|_| r.gen_range(-1.0..1.0)).collect();
        let d = convolve_direct(&x, &h);
        let f = convolve_fft(&x, &h);
        ensure(d.len() == f.len(), || format!("length {} vs {}", d.len(), f.len()))?;
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let err = d.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        conv_worst = conv_worst.max(err);
    }
    ensure(conv_worst < 1e-9, || format!("convolution rel err {conv_worst:e}"))?;

    let mut istft_worst: f64 = 0.0;
    for len in [512, 1000, 4097, 80000] {
        let x: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
        let clip = AudioClip::new(x.clone(), 16000).unwrap();
        let spec = stft(&clip, 512, 256).map_err(|e| e.to_string())?;
        ensure(spec.frames() == frame_count(len, 256), || "frame count".into())?;
        let back = istft(&spec, Some(len)).map_err(|e| e.to_string())?;
        let err = back.samples().iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        istft_worst = istft_worst.max(err);
    }
    ensure(istft_worst < 1e-6, || format!("istft(stft(x)) err {istft_worst:e}"))?;

    let cfg = SynthConfig::default();
    let dry = speech_like(5.5, 0.2, 16000, &mut r);
    let mut delta = vec![0.0; 8000];
    delta[0] = 1.0;
    let ex = synthesize_from_clips(&dry, &AudioClip::new(delta, 16000).unwrap(), &cfg).map_err(|e| e.to_string())?;
    let synth_err = ex
        .input_logmag
        .iter()
        .zip(&ex.dry_target_logmag)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(synth_err < 1e-6, || format!("delta synthesis err {synth_err:e}"))?;
    Ok(format!(
        "convolution {conv_worst:.1e}, istft {istft_worst:.1e}, delta synthesis {synth_err:.1e}"
    ))
}

// 4

fn naive_reconstruction(rir: &Array2<f64>, dry: &Array2<f64>) -> Array2<f64> {
    let (t, f) = dry.dim();
    let mut out = Array2::zeros((t, f));
    for fi in 0..f {
        for ti in 0..t {
            let mut acc = 0.0;
            for tau in 0..rir.nrows() {
                if tau <= ti {
                    acc += rir[[tau, fi]] * dry[[ti - tau, fi]];
                }
            }
            out[[ti, fi]] = acc;
        }
    }
    out
}

fn reconstruction_oracle() -> Outcome {
    let mut r = rng(4);
    let dry = Array2::from_shape_fn((20, 7), |_| r.gen_range(0.0..1.0));
    for shift in [0usize, 1, 5] {
        let mut rir = Array2::zeros((6, 7));
        rir.row_mut(shift).fill(1.0);
        let out = reconstruct_reverb(&rir, &dry).map_err(|e| e.to_string())?;
        for ((t, f), &v) in out.indexed_iter() {
            let want = if t >= shift { dry[[t - shift, f]] } else { 0.0 };
            ensure(v == want, || format!("delta at {shift}: out[{t},{f}] = {v}, want {want}"))?;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (t, f, rl) = (r.gen_range(1..40), r.gen_range(1..12), r.gen_range(1..50));
        let rir = Array2::from_shape_fn((rl, f), |_| r.gen_range(0.0..1.0));
        let dry = Array2::from_shape_fn((t, f), |_| r.gen_range(0.0..1.0));
        let got = reconstruct_reverb(&rir, &dry).map_err(|e| e.to_string())?;
        let want = naive_reconstruction(&rir, &dry);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    ensure(worst < 1e-12, || format!("naive loop err {worst:e}"))?;
    Ok(format!("delta identity/shift exact, 20 random cases err {worst:.1e}"))
}

// 5

fn split_records() -> Vec<RirRecord> {
    let mut r = rng(5);
    let mut sizes = vec![150usize, 120, 60, 30];
    let mut small: Vec<usize> = (0..76).map(|_| r.gen_range(1..=14)).collect();
    small[0] = 1;
    let target = 900 - sizes.iter().sum::<usize>();
    while small.iter().sum::<usize>() != target {
        let i = r.gen_range(0..small.len());
        if small.iter().sum::<usize>() < target && small[i] < 20 {
            small[i] += 1;
        } else if small.iter().sum::<usize>() > target && small[i] > 1 {
            small[i] -= 1;
        }
    }
    sizes.extend(small);
    let mut records = Vec::new();
    for (g, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            records.push(RirRecord {
                id: format!("g{g:02}_m{i:03}"),
                path: format!("g{g:02}_m{i:03}.wav").into(),
                group_key: format!("g{g:02}"),
                split: Split::Train,
                duration_s: 1.0,
            });
        }
    }
    records
}

fn split_invariants() -> Outcome {
    let records = split_records();
    ensure(records.len() == 900, || format!("{} records", records.len()))?;
    let opts = SplitOptions {
        seed: 17,
        ..SplitOptions::default()
    };
    let m = split_groups(&records, &opts).map_err(|e| e.to_string())?;
    let mut groups: std::collections::BTreeMap<&str, Vec<Split>> = Default::default();
    for rec in &m.rirs {
        groups.entry(&rec.group_key).or_default().push(rec.split);
    }
    ensure(groups.len() == 80, || format!("{} groups", groups.len()))?;
    for (g, splits) in &groups {
        let kept: Vec<Split> = splits.iter().copied().filter(|&s| s != Split::Discarded).collect();
        ensure(kept.windows(2).all(|w| w[0] == w[1]), || format!("group {g} straddles splits"))?;
        ensure(kept.len() <= 100, || format!("group {g} keeps {}", kept.len()))?;
        if kept.len() > 20 {
            ensure(kept[0] == Split::Train, || format!("group {g} of {} is in {}", kept.len(), kept[0]))?;
        }
    }
    let c = &m.split_counts;
    ensure(c.get(Split::Val) == 200 && c.get(Split::Test) == 200, || {
        format!("val {}, test {}", c.get(Split::Val), c.get(Split::Test))
    })?;
    Ok(format!(
        "train {}, val 200, test 200, discarded {}",
        c.get(Split::Train),
        c.get(Split::Discarded)
    ))
}

// 6

/// Losses of the tiny joint model before and after 500 Adam steps on one
/// example.
fn overfit_run(seed: u64) -> Result<(dereverb::models::LossValues, dereverb::models::LossValues), String> {
    let data = Dataset::synthetic_tiny(1, 0, seed);
    let config = TrainConfig {
        kind: ModelKind::Joint,
        scale: Scale::Tiny,
        epochs: 500,
        batch_size: 1,
        lr: 1e-3,
        seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config).map_err(|e| e.to_string())?;
    let ex = &data.train[0];
    let before = trainer.model().evaluate_loss(&ex.input, &ex.targets).map_err(|e| e.to_string())?;
    trainer.run(&data, None).map_err(|e| e.to_string())?;
    let after = trainer.model().evaluate_loss(&ex.input, &ex.targets).map_err(|e| e.to_string())?;
    Ok((before, after))
}

fn overfit_ok(before: &dereverb::models::LossValues, after: &dereverb::models::LossValues) -> bool {
    after.total <= 0.1 * before.total
        && after.l_dry <= 0.5 * before.l_dry
        && after.l_rir <= 0.5 * before.l_rir
        && after.l_rec <= 0.5 * before.l_rec
}

const OVERFIT_SEED: u64 = 0;

fn overfit_smoke() -> Outcome {
    let (before, after) = overfit_run(OVERFIT_SEED)?;
    let drop = |b: f64, a: f64| 100.0 * (1.0 - a / b);
    let summary = format!(
        "seed {OVERFIT_SEED}: total -{:.1}%, dry -{:.1}%, rir -{:.1}%, rec -{:.1}%",
        drop(before.total, after.total),
        drop(before.l_dry, after.l_dry),
        drop(before.l_rir, after.l_rir),
        drop(before.l_rec, after.l_rec)
    );
    let passing = (0..30).filter(|&s| overfit_run(s).map(|(b, a)| overfit_ok(&b, &a)).unwrap_or(false)).count();
    let summary = format!("{summary}; {passing}/30 seeds meet every threshold");
    if overfit_ok(&before, &after) {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// 7

fn pipeline(inputs: &Path, out: &Path) -> Result<(), String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let prep = out.join("prepared.jsonl");
    let synth = out.join("synth");
    let train = out.join("train");
    let steps: Vec<Vec<String>> = vec![
        vec!["prepare".into(), "--rir-dir".into(), s(&inputs.join("rirs")), "--val".into(), "3".into(), "--test".into(), "3".into(), "--seed".into(), "7".into(), "--out".into(), s(&prep)],
        vec!["synth".into(), "--manifest".into(), s(&prep), "--dry-dir".into(), s(&inputs.join("dry")), "--rirs-per-dry".into(), "2".into(), "--seed".into(), "7".into(), "--out-dir".into(), s(&synth), "--preset".into(), "tiny".into()],
        vec!["train".into(), "--manifest".into(), s(&synth.join("manifest.jsonl")), "--model".into(), "joint".into(), "--scale".into(), "tiny".into(), "--epochs".into(), "3".into(), "--lr".into(), "1e-3".into(), "--batch".into(), "2".into(), "--seed".into(), "7".into(), "--checkpoint-every".into(), "1".into(), "--out".into(), s(&train)],
    ];
    for args in steps {
        let mut sink = Vec::new();
        let code = cli::run(std::iter::once("dereverb".to_string()).chain(args.iter().cloned()), &mut sink);
        if code != 0 {
            return Err(format!("{} exited {code}: {}", args[0], String::from_utf8_lossy(&sink)));
        }
    }
    Ok(())
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let inputs = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(7);
    let groups: Vec<(String, usize)> = (0..10).map(|g| (format!("room{g}"), 3)).collect();
    write_rir_corpus(&inputs.path().join("rirs"), &groups, 16000, &mut r).map_err(|e| e.to_string())?;
    write_split_dry_corpus(&inputs.path().join("dry"), [4, 0, 0], 0.5, 16000, &mut r).map_err(|e| e.to_string())?;

    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(inputs.path(), a.path())?;
    pipeline(inputs.path(), b.path())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let names: Vec<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    let caches = names.iter().filter(|n| n.ends_with(".drvb")).count();
    ensure(caches == 8, || format!("{caches} cached examples"))?;
    for want in ["prepared.jsonl", "synth/manifest.jsonl", "train/model.ckpt", "train/log.csv"] {
        ensure(names.contains(&want), || format!("missing {want}"))?;
    }
    ensure(ta.len() == tb.len(), || "different file sets".into())?;
    for ((na, da), (nb, db)) in ta.iter().zip(&tb) {
        ensure(na == nb && da == db, || format!("{na} differs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", ta.len()))
}

// 8

fn t60_closed_form() -> Outcome {
    let mut parts = Vec::new();
    for (slope, want) in [(-1.0, 0.96), (-0.5, 1.92)] {
        let edc: Vec<f64> = (0..200).map(|t| (slope * t as f64).max(-120.0)).collect();
        let got = t60_estimate(&edc, DEFAULT_HOP_S).map_err(|e| e.to_string())?;
        ensure(((got - want) / want).abs() < 0.02, || format!("slope {slope}: {got} s, want {want} s"))?;
        parts.push(format!("{slope} dB/frame -> {got:.3} s"));
    }
    Ok(parts.join(", "))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "shape closure", budget: Duration::from_secs(1), run: shape_closure },
        Criterion { id: 2, name: "gradient suite", budget: Duration::from_secs(120), run: gradient_suite },
        Criterion { id: 3, name: "DSP oracles", budget: Duration::from_secs(60), run: dsp_oracles },
        Criterion { id: 4, name: "reconstruction oracle", budget: Duration::from_secs(30), run: reconstruction_oracle },
        Criterion { id: 5, name: "split invariants", budget: Duration::from_secs(5), run: split_invariants },
        Criterion { id: 6, name: "overfit smoke test", budget: Duration::from_secs(180), run: overfit_smoke },
        Criterion { id: 7, name: "determinism", budget: Duration::from_secs(300), run: determinism },
        Criterion { id: 8, name: "T60 closed form", budget: Duration::from_secs(1), run: t60_closed_form },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; took {:.2} s, budget {} s", took.as_secs_f64(), c.budget.as_secs())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "[{}] {} {} ({:.2} s): {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            took.as_secs_f64(),
            detail
        );
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
