//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the report is always
//! printed.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};

use evc_core::augment::{pro_aug_seeded, AugmentOp, AugmentParams};
use evc_core::checks::{self, CheckResult};
use evc_core::f0::{estimate_f0, F0Params};
use evc_core::metrics::{aligned_pcc, eecs, word_error_rate};
use evc_core::nn::loss::{loss_triplet, TRIPLET_MARGIN};
use evc_core::rng::Rng;
use evc_core::signal::{write_wav, Waveform};
use evc_core::units::{dedup, expand, kmeans_assign, kmeans_fit};
use evc_core::{Contour, ContourKind};

const SEED: u64 = 20240917;
const SR: u32 = 16000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn from_checks(results: &[CheckResult]) -> Outcome {
    let pass = results.iter().all(|r| r.pass);
    let detail = results
        .iter()
        .map(|r| {
            format!(
                "{} n={} max_err={:.3e} tol={:.0e}",
                r.check, r.instances, r.max_error, r.tolerance
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn within(o: Outcome, elapsed: Duration, limit: Option<Duration>) -> Outcome {
    match limit {
        Some(l) if elapsed > l => outcome(
            false,
            format!("{} (took {elapsed:.2?}, limit {l:?})", o.detail),
        ),
        _ => o,
    }
}

fn tone(freq: f64, secs: f64) -> Vec<f64> {
    let n = (secs * SR as f64) as usize;
    (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SR as f64).sin())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn savgol() -> Outcome {
    from_checks(&[
        checks::check_savgol_polynomials(),
        checks::check_savgol_oracle(100, SEED),
    ])
}

fn gradients() -> Outcome {
    from_checks(&checks::gradient_suite(SEED)[..3])
}

fn grl() -> Outcome {
    from_checks(&[checks::check_grl_contract(50, SEED)])
}

fn dtw() -> Outcome {
    from_checks(&[checks::check_dtw_oracle(1000, SEED)])
}

fn f0_accuracy() -> Outcome {
    let p = F0Params::default();
    let mut worst_median: f64 = 0.0;
    for freq in [100.0, 150.0, 220.0, 330.0, 440.0] {
        let w = Waveform::new(tone(freq, 2.0), SR).unwrap();
        let (f0, vuv) = estimate_f0(&w, &p).unwrap();
        let errs: Vec<f64> = f0
            .values
            .iter()
            .zip(vuv.iter())
            .filter(|(_, v)| *v)
            .map(|(f, _)| (f - freq).abs() / freq)
            .collect();
        if errs.is_empty() {
            return outcome(false, format!("{freq} Hz tone has no voiced frames"));
        }
        worst_median = worst_median.max(median(errs));
    }

    // Ground truth: a frame is voiced when its centre lies inside the tone.
    let (mut correct, mut total) = (0usize, 0usize);
    for freq in [100.0, 150.0, 220.0, 330.0, 440.0] {
        let layouts: [&[(bool, f64)]; 3] = [
            &[(true, 1.0), (false, 1.0)],
            &[(false, 0.7), (true, 1.2), (false, 0.5)],
            &[(true, 0.6), (false, 0.4), (true, 0.8)],
        ];
        for layout in layouts {
            let mut samples = Vec::new();
            let mut truth = Vec::new();
            for &(voiced, secs) in layout {
                let seg = if voiced {
                    tone(freq, secs)
                } else {
                    vec![0.0; (secs * SR as f64) as usize]
                };
                truth.extend(std::iter::repeat_n(voiced, seg.len()));
                samples.extend(seg);
            }
            let w = Waveform::new(samples, SR).unwrap();
            let (_, vuv) = estimate_f0(&w, &p).unwrap();
            for (t, v) in vuv.iter().enumerate() {
                let centre = t * p.hop_size + p.frame_length / 2;
                total += 1;
                correct += usize::from(truth[centre.min(truth.len() - 1)] == v);
            }
        }
    }
    let acc = correct as f64 / total as f64;
    outcome(
        worst_median < 0.02 && acc > 0.95,
        format!(
            "worst median F0 error {:.4}% (< 2%); VUV accuracy {:.2}% over {total} frames (> 95%)",
            worst_median * 100.0,
            acc * 100.0
        ),
    )
}

fn augmentation() -> Outcome {
    let params = AugmentParams::default();
    let mut shifts = 0;
    let mut rng = Rng::seeded(SEED);
    for seed in 0..1000u64 {
        let len = 20 + rng.below(300) as usize;
        let phase = rng.uniform_range(0.0, 6.0);
        let f0 = Contour::new(
            ContourKind::F0,
            256,
            (0..len)
                .map(|t| 200.0 + 40.0 * (t as f64 * 0.07 + phase).sin() + 5.0 * rng.normal())
                .collect(),
        );
        let e = Contour::new(
            ContourKind::Energy,
            256,
            (0..len)
                .map(|t| -2.0 + (t as f64 * 0.05).cos() + 0.3 * rng.normal())
                .collect(),
        );
        let (fa, ea, op) = pro_aug_seeded(&f0, &e, &params, seed).unwrap();
        if fa.len() != len || ea.len() != len {
            return outcome(
                false,
                format!("seed {seed}: length {len} became {}/{}", fa.len(), ea.len()),
            );
        }
        for (orig, aug) in [(&f0, &fa), (&e, &ea)] {
            let lo = orig.values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = orig
                .values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if aug.values.iter().any(|&v| v < lo - 1e-12 || v > hi + 1e-12) {
                return outcome(
                    false,
                    format!("seed {seed}: values left the input envelope"),
                );
            }
        }
        let (fb, eb, op_b) = pro_aug_seeded(&f0, &e, &params, seed).unwrap();
        let same_bits =
            |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        if op != op_b || !same_bits(&fa.values, &fb.values) || !same_bits(&ea.values, &eb.values) {
            return outcome(false, format!("seed {seed}: not reproducible"));
        }
        if let AugmentOp::Shift { frames } = op {
            if !(-15..=15).contains(&frames) {
                return outcome(false, format!("seed {seed}: shift {frames} out of range"));
            }
            shifts += 1;
        }
    }
    let freq = shifts as f64 / 1000.0;
    outcome(
        (0.48..=0.52).contains(&freq),
        format!(
            "1000 draws; shift frequency {freq:.3}, warp frequency {:.3} (each in [0.48, 0.52])",
            1.0 - freq
        ),
    )
}

fn units() -> Outcome {
    let mut rng = Rng::seeded(SEED);
    for i in 0..10_000 {
        let len = rng.below(200) as usize;
        let alphabet = 1 + rng.below(6);
        let seq: Vec<u32> = (0..len).map(|_| rng.below(alphabet) as u32).collect();
        if expand(&dedup(&seq)).unwrap() != seq {
            return outcome(false, format!("sequence {i}: expand(dedup(x)) != x"));
        }
    }

    let k = 5;
    let dim = 8;
    let per = 40;
    let mut fits = 0;
    let mut monotone = true;
    let mut recovered = true;
    for trial in 0..10u64 {
        let mut x = Array2::zeros((k * per, dim));
        let mut labels = Vec::new();
        for c in 0..k {
            for j in 0..per {
                let row = c * per + j;
                for d in 0..dim {
                    let centre = if d == c { 50.0 } else { 0.0 };
                    x[[row, d]] = centre + 0.5 * rng.normal();
                }
                labels.push(c);
            }
        }
        let fit = kmeans_fit(x.view(), k, trial, 100).unwrap();
        fits += 1;
        monotone &= fit.inertia.windows(2).all(|w| w[1] <= w[0]);
        let assigned = kmeans_assign(x.view(), &fit.codebook).unwrap();
        // Recovery means a bijection between true clusters and units.
        let mut map = vec![None; k];
        for (&l, &u) in labels.iter().zip(&assigned) {
            match map[l] {
                None => map[l] = Some(u),
                Some(m) if m != u => recovered = false,
                _ => {}
            }
        }
        let mut used: Vec<_> = map.iter().flatten().collect();
        used.sort();
        used.dedup();
        recovered &= used.len() == k;

        let random = Array2::from_shape_fn((300, 3), |_| rng.normal());
        let fit = kmeans_fit(random.view(), 7, trial, 100).unwrap();
        fits += 1;
        monotone &= fit.inertia.windows(2).all(|w| w[1] <= w[0]);
    }
    outcome(
        monotone && recovered,
        format!("10000 roundtrips ok; inertia monotone on {fits} fits: {monotone}; blob recovery on 10 seeds: {recovered}"),
    )
}

fn metrics() -> Outcome {
    let mut rng = Rng::seeded(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = 2 + rng.below(80) as usize;
        let mut a: Vec<f64> = (0..len).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        if a.iter().all(|&v| v == a[0]) {
            a[0] += 1.0;
        }
        worst = worst.max((aligned_pcc(&a, &a, false).unwrap() - 1.0).abs());
    }
    let pcc_ok = worst <= 1e-12;

    let r = "the quick brown fox jumps over the lazy dog";
    // Rates are percentages.
    let one_edit = 100.0 / 9.0;
    let wer_cases = [
        (word_error_rate(r, r).unwrap(), 0.0),
        (word_error_rate(r, "").unwrap(), 100.0),
        (
            word_error_rate(r, "the quick brown cat jumps over the lazy dog").unwrap(),
            one_edit,
        ),
        (
            word_error_rate(r, "the quick brown fox jumps over lazy dog").unwrap(),
            one_edit,
        ),
        (
            word_error_rate(r, "the quick brown fox jumps over the very lazy dog").unwrap(),
            one_edit,
        ),
    ];
    let wer_ok = wer_cases
        .iter()
        .all(|(got, want)| (got - want).abs() < 1e-12);

    let mut scale_err: f64 = 0.0;
    for _ in 0..100 {
        let a = Array1::from_shape_fn(32, |_| rng.normal());
        let b = Array1::from_shape_fn(32, |_| rng.normal());
        let c = rng.uniform_range(1e-3, 1e3);
        let base = eecs(a.view(), b.view()).unwrap();
        scale_err = scale_err.max((eecs((&a * c).view(), b.view()).unwrap() - base).abs());
        scale_err = scale_err.max((eecs(a.view(), (&b * c).view()).unwrap() - base).abs());
    }
    let eecs_ok = scale_err <= 1e-12;
    outcome(
        pcc_ok && wer_ok && eecs_ok,
        format!("aligned_pcc(a,a) max |r-1| {worst:.1e}; WER canonical cases {}; eecs scale error {scale_err:.1e}", if wer_ok { "ok" } else { "FAILED" }),
    )
}

fn run_evc(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_evc"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "evc {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

/// Every file under `dir` with its contents, sorted by relative path.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let wavs: Vec<String> = (0..5).map(|i| format!("utt{i}.wav")).collect();
    for (i, name) in wavs.iter().enumerate() {
        let base = 110.0 + 45.0 * i as f64;
        let n = SR as usize * 3 / 2;
        let mut phase = 0.0;
        let samples: Vec<f64> = (0..n)
            .map(|t| {
                let secs = t as f64 / SR as f64;
                if (0.6..0.8).contains(&secs) {
                    return 0.0;
                }
                phase += 2.0 * std::f64::consts::PI * base * (1.0 + 0.05 * (6.0 * secs).sin())
                    / SR as f64;
                (0.3 + 0.2 * secs) * phase.sin()
            })
            .collect();
        write_wav(dir.join(name), &Waveform::new(samples, SR).unwrap())
            .map_err(|e| e.to_string())?;
    }
    let mut logs = Vec::new();
    let mut args: Vec<&str> = vec!["extract"];
    args.extend(wavs.iter().map(String::as_str));
    args.extend(["-o", "ext"]);
    logs.push(run_evc(dir, &args)?);

    let ext: Vec<String> = (0..5).map(|i| format!("ext/utt{i}.json")).collect();
    let mut args: Vec<&str> = vec!["smooth", "--window", "7", "--order", "3"];
    args.extend(ext.iter().map(String::as_str));
    args.extend(["-o", "smooth"]);
    logs.push(run_evc(dir, &args)?);

    let sm: Vec<String> = (0..5).map(|i| format!("smooth/utt{i}.json")).collect();
    let mut args: Vec<&str> = vec!["augment", "--seed", "1234", "--jobs", "3"];
    args.extend(sm.iter().map(String::as_str));
    args.extend(["-o", "aug"]);
    logs.push(run_evc(dir, &args)?);

    let pairs: String = (0..5)
        .map(|i| format!("ext/utt{i}.json\taug/utt{i}.json\n"))
        .collect();
    fs::write(dir.join("pairs.tsv"), pairs).map_err(|e| e.to_string())?;
    run_evc(dir, &["eval", "--pairs", "pairs.tsv", "-o", "eval.jsonl"])?;

    fs::write(dir.join("stdout.log"), logs.concat()).map_err(|e| e.to_string())?;
    Ok(snapshot(dir))
}

fn determinism() -> Outcome {
    let runs: Result<Vec<_>, String> = (0..2)
        .map(|_| {
            let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
            pipeline_run(tmp.path())
        })
        .collect();
    match runs {
        Err(e) => outcome(false, e),
        Ok(runs) => {
            let (a, b) = (&runs[0], &runs[1]);
            let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
            let differing: Vec<&str> = a
                .iter()
                .zip(b)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.as_str())
                .collect();
            outcome(
                a.len() == b.len()
                    && differing.is_empty()
                    && names.iter().any(|n| n.starts_with("aug")),
                format!(
                    "{} files compared, {} differ {differing:?}",
                    a.len(),
                    differing.len()
                ),
            )
        }
    }
}

fn triplet_degenerate() -> Outcome {
    let mut rng = Rng::seeded(SEED);
    let mut bad = Vec::new();
    for _ in 0..100 {
        let a = Array2::from_shape_fn((1, 16), |_| rng.normal());
        let l = loss_triplet(a.view(), a.view(), a.view(), TRIPLET_MARGIN).unwrap();
        if l.value != 0.3 {
            bad.push(l.value);
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "100 equal-embedding triplets; {} differ from 0.3 {bad:?}",
            bad.len()
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 10] = [
        (
            "savgol exactness and least-squares oracle",
            savgol,
            Some(Duration::from_secs(5)),
        ),
        ("gradient suite", gradients, Some(Duration::from_secs(30))),
        ("GRL contract", grl, None),
        ("DTW exhaustive oracle", dtw, Some(Duration::from_secs(60))),
        ("F0 accuracy and VUV", f0_accuracy, None),
        ("augmentation invariants", augmentation, None),
        ("units roundtrip and k-means", units, None),
        ("metrics", metrics, None),
        (
            "end-to-end CLI determinism",
            determinism,
            Some(Duration::from_secs(60)),
        ),
        ("triplet degenerate value", triplet_degenerate, None),
    ];
    let mut failures = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let o = within(o, elapsed, *limit);
        failures += usize::from(!o.pass);
        println!(
            "criterion {:>2} {} [{name}] ({elapsed:.2?}): {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
