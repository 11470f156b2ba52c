use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use evc_core::augment::{pro_aug_seeded, AugmentParams};
use evc_core::checks;
use evc_core::f0::{estimate_f0, F0Params};
use evc_core::formats::{
    load_features, write_contour_csv, AugmentRecord, BundleMeta, CodebookFile, ProsodyBundle,
    UnitFile, BUNDLE_SCHEMA,
};
use evc_core::metrics::{aligned_pcc, character_error_rate, eecs, word_error_rate, MetricReport};
use evc_core::rng::derive_seed;
use evc_core::savgol::{savgol_filter, savgol_smooth, SavgolParams};
use evc_core::signal::{frame_energy, load_wav, mel_spectrogram, FrameParams};
use evc_core::units::{
    dedup, expand, kmeans_assign, kmeans_fit, Codebook, DedupResult, DEFAULT_VOCAB,
};

use crate::config::{Config, CountRange, Range};
use crate::{
    AugmentArgs, CheckArgs, Cli, Command, EvalArgs, ExtractArgs, SmoothArgs, SmoothingFlags,
    UnitsCommand,
};

const DEFAULT_SAMPLE_RATE: u32 = 16000;
const DEFAULT_MAX_ITERS: usize = 100;

struct Context_ {
    config: Config,
    seed: Option<u64>,
    jobs: usize,
}

impl Context_ {
    fn master_seed(&self) -> Result<u64> {
        let seed = match self.seed {
            Some(s) => Some(s),
            None => self.config.get::<u64>("seed")?,
        };
        Ok(match seed {
            Some(s) => s,
            None => rand::random(),
        })
    }

    fn smoothing(&self, flags: &SmoothingFlags) -> Result<SavgolParams> {
        let d = SavgolParams::default();
        let p = SavgolParams {
            window: self.config.resolve(flags.window, "window", d.window)?,
            order: self.config.resolve(flags.order, "order", d.order)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Apply `f` to every item on the worker pool; results keep input order.
    fn fan_out<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(usize, &T) -> Result<R> + Sync,
    ) -> Result<Vec<Result<R>>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .context("building worker pool")?;
        Ok(pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| f(i, item))
                .collect()
        }))
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let jobs = config.resolve(cli.jobs, "jobs", 1usize)?;
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let ctx = Context_ {
        config,
        seed: cli.seed,
        jobs,
    };
    match cli.command {
        Command::Extract(a) => extract(&ctx, a),
        Command::Smooth(a) => smooth(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Units(u) => units(&ctx, u),
        Command::Eval(a) => eval(&ctx, a),
        Command::Check(a) => check(&ctx, a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// One input writes to `out` directly unless `out` is a directory; several
/// inputs write `<out>/<stem>.json`.
fn plan_outputs(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if inputs.len() == 1 && !out.is_dir() {
        return Ok(vec![out.to_path_buf()]);
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut seen = HashSet::new();
    inputs
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .ok_or_else(|| anyhow!("input {} has no file name", p.display()))?
                .to_string_lossy()
                .into_owned();
            if !seen.insert(stem.clone()) {
                bail!("two inputs share the stem '{stem}'");
            }
            Ok(out.join(format!("{stem}.json")))
        })
        .collect()
}

/// Print one summary line per item in input order; exit 2 if any failed.
fn report<R: Serialize>(inputs: &[PathBuf], results: Vec<Result<R>>) -> ExitCode {
    let mut failed = false;
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok(summary) => println!(
                "{}",
                json!({"input": input.display().to_string(), "ok": true, "result": summary})
            ),
            Err(e) => {
                failed = true;
                eprintln!("error: {}: {e:#}", input.display());
                println!(
                    "{}",
                    json!({"input": input.display().to_string(), "ok": false, "error": format!("{e:#}")})
                );
            }
        }
    }
    if failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn smoothed_durations(d: &DedupResult, p: SavgolParams) -> Result<Option<Vec<f64>>> {
    if d.counts.is_empty() {
        return Ok(None);
    }
    let counts: Vec<f64> = d.counts.iter().map(|&c| c as f64).collect();
    Ok(Some(savgol_filter(&counts, p)?))
}

fn extract(ctx: &Context_, a: ExtractArgs) -> Result<ExitCode> {
    if !a.units.is_empty() && a.units.len() != a.inputs.len() {
        bail!(
            "--units must be given once per input ({} inputs, {} unit files)",
            a.inputs.len(),
            a.units.len()
        );
    }
    let sample_rate = ctx
        .config
        .resolve(a.sample_rate, "sample_rate", DEFAULT_SAMPLE_RATE)?;
    let d = F0Params::default();
    let f0_params = F0Params {
        f0_min: ctx.config.resolve(a.f0_min, "f0_min", d.f0_min)?,
        f0_max: ctx.config.resolve(a.f0_max, "f0_max", d.f0_max)?,
        periodicity_threshold: ctx.config.resolve(
            a.threshold,
            "threshold",
            d.periodicity_threshold,
        )?,
        ..d
    };
    let smoothing = ctx.smoothing(&a.smoothing)?;
    for input in &a.inputs {
        if !input.is_file() {
            bail!("input {} does not exist", input.display());
        }
    }
    let outputs = plan_outputs(&a.inputs, &a.out)?;
    if let Some(dir) = &a.csv_dir {
        fs::create_dir_all(dir)?;
    }

    let results = ctx.fan_out(&a.inputs, |i, input| {
        let w = load_wav(input).with_context(|| format!("loading {}", input.display()))?;
        if w.sample_rate != sample_rate {
            bail!(
                "{} is {} Hz; expected {sample_rate} Hz (no resampling)",
                input.display(),
                w.sample_rate
            );
        }
        let frame = FrameParams::default();
        let energy = frame_energy(&mel_spectrogram(&w, &frame)?);
        let (f0, vuv) = estimate_f0(
            &w,
            &F0Params {
                hop_size: frame.hop_size,
                frame_length: frame.window_size,
                ..f0_params
            },
        )?;
        let f0_smooth = savgol_smooth(&f0, smoothing)?;
        let energy_smooth = savgol_smooth(&energy, smoothing)?;
        let durations = match a.units.get(i) {
            Some(path) => Some(dedup(&read_json::<UnitFile>(path)?.units)),
            None => None,
        };
        let durations_smooth = match &durations {
            Some(d) => smoothed_durations(d, smoothing)?,
            None => None,
        };
        let bundle = ProsodyBundle {
            schema: BUNDLE_SCHEMA,
            meta: BundleMeta {
                source: file_name(input),
                sample_rate: w.sample_rate,
                hop: frame.hop_size,
                smoothing,
                augment: None,
            },
            f0: f0.values,
            f0_smooth: f0_smooth.values,
            energy: energy.values,
            energy_smooth: energy_smooth.values,
            vuv,
            durations,
            durations_smooth,
            f0_aug: None,
            energy_aug: None,
        };
        bundle.validate()?;
        bundle.save(&outputs[i])?;
        if let Some(dir) = &a.csv_dir {
            let stem = input.file_stem().unwrap_or_default().to_string_lossy();
            write_contour_csv(
                fs::File::create(dir.join(format!("{stem}.f0.csv")))?,
                &bundle.f0_contour(),
            )?;
            write_contour_csv(
                fs::File::create(dir.join(format!("{stem}.energy.csv")))?,
                &bundle.energy_contour(),
            )?;
        }
        Ok(json!({
            "output": outputs[i].display().to_string(),
            "frames": bundle.f0.len(),
            "voiced": bundle.vuv.voiced_count(),
        }))
    })?;
    Ok(report(&a.inputs, results))
}

fn smooth(ctx: &Context_, a: SmoothArgs) -> Result<ExitCode> {
    let smoothing = ctx.smoothing(&a.smoothing)?;
    let outputs = plan_outputs(&a.inputs, &a.out)?;
    let results = ctx.fan_out(&a.inputs, |i, input| {
        let mut b =
            ProsodyBundle::load(input).with_context(|| format!("loading {}", input.display()))?;
        b.f0_smooth = savgol_smooth(&b.f0_contour(), smoothing)?.values;
        b.energy_smooth = savgol_smooth(&b.energy_contour(), smoothing)?.values;
        b.durations_smooth = match &b.durations {
            Some(d) => smoothed_durations(d, smoothing)?,
            None => None,
        };
        // Augmented contours derive from the old smoothing.
        b.f0_aug = None;
        b.energy_aug = None;
        b.meta.augment = None;
        b.meta.smoothing = smoothing;
        b.save(&outputs[i])?;
        Ok(json!({"output": outputs[i].display().to_string(), "frames": b.f0.len()}))
    })?;
    Ok(report(&a.inputs, results))
}

fn augment(ctx: &Context_, a: AugmentArgs) -> Result<ExitCode> {
    let d = AugmentParams::default();
    let Range(slo, shi) = ctx.config.resolve(
        a.shift_range,
        "shift_range",
        Range(d.shift_range.0, d.shift_range.1),
    )?;
    let CountRange(nlo, nhi) = ctx.config.resolve(
        a.segments,
        "segments",
        CountRange(d.n_segments_range.0, d.n_segments_range.1),
    )?;
    let Range(klo, khi) = ctx.config.resolve(
        a.scale_range,
        "scale_range",
        Range(d.scale_range.0, d.scale_range.1),
    )?;
    let params = AugmentParams {
        shift_range: (slo, shi),
        n_segments_range: (nlo, nhi),
        scale_range: (klo, khi),
    };
    params.validate()?;
    let master = ctx.master_seed()?;
    let outputs = plan_outputs(&a.inputs, &a.out)?;
    let results = ctx.fan_out(&a.inputs, |i, input| {
        let mut b =
            ProsodyBundle::load(input).with_context(|| format!("loading {}", input.display()))?;
        let seed = derive_seed(master, i as u64);
        let (f0_aug, energy_aug, op) = pro_aug_seeded(
            &b.f0_smooth_contour(),
            &b.energy_smooth_contour(),
            &params,
            seed,
        )?;
        b.f0_aug = Some(f0_aug.values);
        b.energy_aug = Some(energy_aug.values);
        b.meta.augment = Some(AugmentRecord { seed, op });
        b.save(&outputs[i])?;
        Ok(json!({"output": outputs[i].display().to_string(), "seed": seed}))
    })?;
    Ok(report(&a.inputs, results))
}

fn units(ctx: &Context_, cmd: UnitsCommand) -> Result<ExitCode> {
    match cmd {
        UnitsCommand::Fit {
            features,
            k,
            max_iters,
            out,
        } => {
            let k = ctx.config.resolve(k, "k", DEFAULT_VOCAB)?;
            let max_iters = ctx
                .config
                .resolve(max_iters, "max_iters", DEFAULT_MAX_ITERS)?;
            let seed = ctx.master_seed()?;
            let x = load_features(&features)
                .with_context(|| format!("loading {}", features.display()))?;
            let fit = kmeans_fit(x.view(), k, seed, max_iters)?;
            write_json(&out, &CodebookFile::from(&fit.codebook))?;
            println!(
                "{}",
                json!({
                    "k": k,
                    "seed": seed,
                    "iterations": fit.inertia.len() - 1,
                    "converged": fit.converged,
                    "inertia": fit.inertia.last(),
                })
            );
        }
        UnitsCommand::Encode {
            features,
            codebook,
            out,
        } => {
            let x = load_features(&features)
                .with_context(|| format!("loading {}", features.display()))?;
            let cb = Codebook::try_from(read_json::<CodebookFile>(&codebook)?)?;
            let units = kmeans_assign(x.view(), &cb)?;
            println!("{}", json!({"frames": units.len()}));
            write_json(&out, &UnitFile { units })?;
        }
        UnitsCommand::Dedup { units, out } => {
            let u: UnitFile = read_json(&units)?;
            let d = dedup(&u.units);
            println!(
                "{}",
                json!({"frames": u.units.len(), "unique": d.unique_units.len()})
            );
            write_json(&out, &d)?;
        }
        UnitsCommand::Expand { dedup: path, out } => {
            let d: DedupResult = read_json(&path)?;
            let units = expand(&d)?;
            println!("{}", json!({"frames": units.len()}));
            write_json(&out, &UnitFile { units })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Embeddings as a JSON array or whitespace/comma separated numbers.
fn read_embedding(path: &Path) -> Result<Array1<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values: Vec<f64> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        text.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| anyhow!("{}: '{s}': {e}", path.display()))
            })
            .collect::<Result<_>>()?
    };
    Ok(Array1::from(values))
}

struct PairInputs {
    reference: PathBuf,
    hyp: PathBuf,
    texts: Option<(PathBuf, PathBuf)>,
    embeddings: Option<(PathBuf, PathBuf)>,
}

fn optional_pair(
    a: Option<PathBuf>,
    b: Option<PathBuf>,
    what: &str,
) -> Result<Option<(PathBuf, PathBuf)>> {
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some((a, b))),
        (None, None) => Ok(None),
        _ => bail!("{what} must be given for both reference and hypothesis"),
    }
}

fn metric_or_null(name: &str, r: evc_core::Result<f64>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{name}: {e}; reporting null");
            None
        }
    }
}

fn evaluate(p: &PairInputs) -> Result<MetricReport> {
    let r = ProsodyBundle::load(&p.reference)
        .with_context(|| format!("loading {}", p.reference.display()))?;
    let h = ProsodyBundle::load(&p.hyp).with_context(|| format!("loading {}", p.hyp.display()))?;
    let mut report = MetricReport {
        f0_pcc: metric_or_null("f0_pcc", aligned_pcc(&r.f0, &h.f0, true)),
        e_pcc: metric_or_null("e_pcc", aligned_pcc(&r.energy, &h.energy, false)),
        ..MetricReport::default()
    };
    if let Some((rt, ht)) = &p.texts {
        let rt = fs::read_to_string(rt).with_context(|| format!("reading {}", rt.display()))?;
        let ht = fs::read_to_string(ht).with_context(|| format!("reading {}", ht.display()))?;
        report.wer = Some(word_error_rate(&rt, &ht)?);
        report.cer = Some(character_error_rate(&rt, &ht)?);
    }
    if let Some((re, he)) = &p.embeddings {
        let (re, he) = (read_embedding(re)?, read_embedding(he)?);
        report.eecs = metric_or_null("eecs", eecs(re.view(), he.view()));
    }
    Ok(report)
}

fn parse_pairs(path: &Path) -> Result<Vec<PairInputs>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<PathBuf> = line.split('\t').map(|s| base.join(s.trim())).collect();
        let entry = match f.len() {
            2 => PairInputs {
                reference: f[0].clone(),
                hyp: f[1].clone(),
                texts: None,
                embeddings: None,
            },
            4 => PairInputs {
                reference: f[0].clone(),
                hyp: f[1].clone(),
                texts: Some((f[2].clone(), f[3].clone())),
                embeddings: None,
            },
            6 => PairInputs {
                reference: f[0].clone(),
                hyp: f[1].clone(),
                texts: Some((f[2].clone(), f[3].clone())),
                embeddings: Some((f[4].clone(), f[5].clone())),
            },
            n => bail!(
                "{} line {}: expected 2, 4 or 6 tab-separated fields, got {n}",
                path.display(),
                i + 1
            ),
        };
        out.push(entry);
    }
    Ok(out)
}

fn eval(ctx: &Context_, a: EvalArgs) -> Result<ExitCode> {
    let emit = |text: String| -> Result<()> {
        match &a.out {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    };
    if let Some(pairs_path) = &a.pairs {
        let pairs = parse_pairs(pairs_path)?;
        let results = ctx.fan_out(&pairs, |_, p| evaluate(p))?;
        let mut text = String::new();
        let mut reports = Vec::new();
        for (p, r) in pairs.iter().zip(results) {
            let r = r?;
            let mut line = serde_json::to_value(&r)?;
            line["ref"] = json!(p.reference.display().to_string());
            line["hyp"] = json!(p.hyp.display().to_string());
            text.push_str(&serde_json::to_string(&line)?);
            text.push('\n');
            reports.push(r);
        }
        let mut summary = serde_json::to_value(MetricReport::mean(&reports))?;
        summary["summary"] = json!(true);
        summary["pairs"] = json!(reports.len());
        text.push_str(&serde_json::to_string(&summary)?);
        text.push('\n');
        emit(text)?;
    } else {
        let p = PairInputs {
            reference: a.reference.clone().expect("required by clap"),
            hyp: a.hyp.clone().expect("required by clap"),
            texts: optional_pair(
                a.ref_text.clone(),
                a.hyp_text.clone(),
                "--ref-text/--hyp-text",
            )?,
            embeddings: optional_pair(a.ref_emb.clone(), a.hyp_emb.clone(), "--ref-emb/--hyp-emb")?,
        };
        let report = evaluate(&p)?;
        emit(serde_json::to_string(&report)? + "\n")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn check(ctx: &Context_, a: CheckArgs) -> Result<ExitCode> {
    let (grads, oracles) = if !a.grads && !a.oracles {
        (true, true)
    } else {
        (a.grads, a.oracles)
    };
    let seed = ctx.config.resolve(ctx.seed, "seed", 0u64)?;
    let mut results = Vec::new();
    if grads {
        results.extend(checks::gradient_suite(seed));
    }
    if oracles {
        results.extend(checks::oracle_suite(seed));
    }
    let mut all_pass = true;
    for r in &results {
        println!("{}", serde_json::to_string(r)?);
        all_pass &= r.pass;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
