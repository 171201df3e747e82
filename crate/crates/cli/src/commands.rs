use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use saunet::data::{crop_back, pad_tensor, raster, save_manifest, DatasetManifest, ManifestEntry, PadOffsets, Split};
use saunet::metrics::{Aggregation, MetricAccumulator, MetricReport};
use saunet::model::{load_checkpoint, peek_header, predict_binary, ArchitectureSpec, Network, Variant};
use saunet::optim::{Trainer, TrainingOutcome, FINAL_CHECKPOINT};
use saunet::verify::{layer_suite, network_check, primitive_suite, CheckOutcome};
use saunet::{DType, Error, Scalar};

use crate::args::{CountArgs, EvalArgs, GradcheckArgs, Precision, Preset, PredictArgs, SynthArgs, TrainArgs};
use crate::config::{data_source, eval_settings, DataSource, EvalSettings, RunConfig};
use crate::dataset::{test_set, training_sets, TestItem};

pub const REPORT: &str = "report.json";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TSV: &str = "ablation.tsv";

/// Reference totals: (variant, total, trainable, non-trainable).
pub const REFERENCE_COUNTS: [(Variant, usize, usize, usize); 5] = [
    (Variant::UNet18, 535_793, 535_793, 0),
    (Variant::UNetSA, 535_891, 535_891, 0),
    (Variant::SDUNet, 535_793, 535_793, 0),
    (Variant::Backbone, 538_609, 537_201, 1_408),
    (Variant::SAUNet, 538_707, 537_299, 1_408),
];

fn aggregation(e: &EvalSettings) -> Aggregation {
    if e.per_image {
        Aggregation::PerImage
    } else {
        Aggregation::Pooled
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, serde::Serialize)]
struct TrainSummary {
    variant: Variant,
    initial_train_loss: f64,
    final_train_loss: f64,
    best_epoch: usize,
    epochs: usize,
}

fn train_typed<T: Scalar>(cfg: &RunConfig, out_dir: &Path) -> anyhow::Result<(Network<T>, TrainingOutcome)> {
    let training = cfg.training.clone().expect("training config");
    let (train, val) = training_sets::<T>(&cfg.data, cfg.seed)?;
    eprintln!(
        "{}: {} training / {} validation images, {} epochs",
        cfg.architecture.variant,
        train.len(),
        val.len(),
        training.epochs
    );
    let mut net = Network::<T>::new(cfg.architecture.clone(), cfg.seed)?;
    let trainer = Trainer {
        config: training,
        out_dir: Some(out_dir.to_path_buf()),
        threshold: cfg.eval.threshold,
        aggregation: aggregation(&cfg.eval),
    };
    let start = Instant::now();
    let outcome = trainer.run_with(&mut net, &train, &val, |r| {
        let val = r.val_loss.map_or_else(String::new, |v| format!("  val loss {v:.5}"));
        let auc = r
            .val_metrics
            .and_then(|m| m.auc)
            .map_or_else(String::new, |a| format!("  val AUC {a:.4}"));
        eprintln!("epoch {:>4}  lr {:.0e}  train loss {:.5}{val}{auc}", r.epoch, r.lr, r.train_loss);
    })?;
    eprintln!("trained in {:.1}s", start.elapsed().as_secs_f64());
    write_json(
        &out_dir.join("summary.json"),
        &TrainSummary {
            variant: cfg.architecture.variant,
            initial_train_loss: outcome.initial_train_loss,
            final_train_loss: outcome.final_train_loss(),
            best_epoch: outcome.best_epoch,
            epochs: outcome.epochs.len(),
        },
    )?;
    Ok((net, outcome))
}

pub fn train(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve("train", args)?;
    cfg.write(&cfg.out_dir)?;
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(&cfg, &cfg.out_dir).map(|_| ()),
        Precision::F64 => train_typed::<f64>(&cfg, &cfg.out_dir).map(|_| ()),
    }
}

/// Scores `items` at their original resolution; optionally writes
/// probability maps and overlays under `out_dir`.
fn score<T: Scalar>(
    net: &Network<T>,
    items: &[TestItem<T>],
    settings: &EvalSettings,
    images_dir: Option<&Path>,
) -> anyhow::Result<MetricReport> {
    let mut acc = MetricAccumulator::new(settings.threshold, aggregation(settings))?;
    for item in items {
        let p = &item.padded;
        let x = p.image.reshape([1, 3, p.height(), p.width()])?;
        let prob = net.infer(&x)?.detach();
        let prob = crop_back(&prob.reshape([1, p.height(), p.width()])?, &item.offsets)?;
        let region = if settings.use_fov { item.original.fov.as_ref() } else { None };
        acc.add(&prob, &item.original.mask, region)?;
        if let Some(dir) = images_dir {
            let name = item.original.id.replace(['/', '#'], "_");
            raster::write_gray(&dir.join("probabilities").join(format!("{name}.png")), &prob)?;
            let pred = predict_binary(&prob, settings.threshold)?;
            raster::write_overlay(&dir.join("overlays").join(format!("{name}.png")), &item.original.image, &pred)?;
        }
    }
    Ok(acc.finish())
}

fn print_metrics(label: &str, m: &MetricReport) {
    println!("{:<12} {}", "", MetricReport::COLUMNS.map(|c| format!("{c:>8}")).join(""));
    println!("{label:<12} {}", m.values().map(|v| format!("{:>8}", fmt_metric(v))).join(""));
}

#[derive(Debug, serde::Serialize)]
struct EvalReport {
    variant: Variant,
    checkpoint: PathBuf,
    images: usize,
    aggregation: Aggregation,
    threshold: f64,
    metrics: MetricReport,
}

fn eval_typed<T: Scalar>(args: &EvalArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (net, _) = load_checkpoint::<T>(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let items = test_set::<T>(&cfg.data, args.seed)?;
    let dir = (!args.no_overlays).then_some(args.out_dir.as_path());
    let metrics = score(&net, &items, &cfg.eval, dir)?;
    print_metrics(net.spec().variant.label(), &metrics);
    write_json(
        &args.out_dir.join(REPORT),
        &EvalReport {
            variant: net.spec().variant,
            checkpoint: args.checkpoint.clone(),
            images: items.len(),
            aggregation: aggregation(&cfg.eval),
            threshold: cfg.eval.threshold,
            metrics,
        },
    )
}

pub fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let header = peek_header(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    if let Some(v) = args.variant {
        if v != header.spec.variant {
            return Err(Error::SpecMismatch(format!("checkpoint holds {}, expected {v}", header.spec.variant)).into());
        }
    }
    let cfg = RunConfig {
        command: "eval".into(),
        data: data_source(&args.data, Preset::Drive)?,
        architecture: header.spec.clone(),
        training: None,
        checkpoint: Some(args.checkpoint.clone()),
        eval: eval_settings(&args.eval),
        precision: match header.dtype {
            DType::F32 => Precision::F32,
            DType::F64 => Precision::F64,
        },
        seed: args.seed,
        out_dir: args.out_dir.clone(),
    };
    cfg.write(&args.out_dir)?;
    match header.dtype {
        DType::F32 => eval_typed::<f32>(args, &cfg),
        DType::F64 => eval_typed::<f64>(args, &cfg),
    }
}

fn predict_typed<T: Scalar>(args: &PredictArgs) -> anyhow::Result<()> {
    let (net, _) = load_checkpoint::<T>(&args.checkpoint)?;
    let m = net.spec().size_multiple();
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for input in &args.inputs {
        let image = raster::read_rgb::<T>(input)?;
        let (h, w) = (image.dims()[1], image.dims()[2]);
        let off = PadOffsets::centered(h, w, (h.div_ceil(m) * m, w.div_ceil(m) * m))?;
        let padded = pad_tensor(&image, &off)?;
        let (ph, pw) = (padded.dims()[1], padded.dims()[2]);
        let prob = net.infer(&padded.reshape([1, 3, ph, pw])?)?.detach();
        let prob = crop_back(&prob.reshape([1, ph, pw])?, &off)?;
        let pred = predict_binary(&prob, args.threshold)?;
        let stem = input.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        raster::write_gray(&args.out_dir.join(format!("{stem}_prob.png")), &prob)?;
        raster::write_gray(&args.out_dir.join(format!("{stem}_mask.png")), &pred)?;
        raster::write_overlay(&args.out_dir.join(format!("{stem}_overlay.png")), &image, &pred)?;
        println!("{} -> {}", input.display(), args.out_dir.join(format!("{stem}_mask.png")).display());
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> anyhow::Result<()> {
    match peek_header(&args.checkpoint)?.dtype {
        DType::F32 => predict_typed::<f32>(args),
        DType::F64 => predict_typed::<f64>(args),
    }
}

pub fn count_params(args: &CountArgs) -> anyhow::Result<()> {
    if args.verify_table4 {
        let mut failures = Vec::new();
        for (variant, total, trainable, frozen) in REFERENCE_COUNTS {
            let r = Network::<f32>::new(ArchitectureSpec::new(variant), 0)?.count_params();
            let ok = (r.total, r.trainable, r.non_trainable) == (total, trainable, frozen);
            println!(
                "{} {:<11} total {:>7} trainable {:>7} non-trainable {:>5} (expected {total} / {trainable} / {frozen})",
                if ok { "ok  " } else { "FAIL" },
                variant.label(),
                r.total,
                r.trainable,
                r.non_trainable
            );
            if !ok {
                failures.push(variant.label());
            }
        }
        if !failures.is_empty() {
            return Err(Error::Verification(format!("parameter counts differ for {}", failures.join(", "))).into());
        }
        return Ok(());
    }
    let net = Network::<f32>::new(ArchitectureSpec::new(args.variant).with_base_channels(args.base_channels), 0)?;
    let report = net.count_params();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{}", args.variant.label());
        println!("{report}");
    }
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct AblationRow {
    variant: Variant,
    label: &'static str,
    metrics: MetricReport,
    initial_train_loss: f64,
    final_train_loss: f64,
}

fn ablate_typed<T: Scalar>(cfg: &RunConfig) -> anyhow::Result<()> {
    let items = test_set::<T>(&cfg.data, cfg.seed)?;
    let mut rows = Vec::new();
    for variant in Variant::LADDER {
        let mut vcfg = cfg.clone();
        vcfg.architecture.variant = variant;
        let dir = cfg.out_dir.join(variant.slug());
        vcfg.out_dir = dir.clone();
        vcfg.command = "train".into();
        vcfg.write(&dir)?;
        let (_, outcome) = train_typed::<T>(&vcfg, &dir)?;
        // score the final weights, as a plain train + eval would
        let (net, _) = load_checkpoint::<T>(dir.join(FINAL_CHECKPOINT))?;
        let metrics = score(&net, &items, &cfg.eval, None)?;
        rows.push(AblationRow {
            variant,
            label: variant.label(),
            metrics,
            initial_train_loss: outcome.initial_train_loss,
            final_train_loss: outcome.final_train_loss(),
        });
    }
    println!("{:<12} {}", "Method", MetricReport::COLUMNS.map(|c| format!("{c:>8}")).join(""));
    let mut tsv = format!("method\t{}\n", MetricReport::COLUMNS.join("\t"));
    for r in &rows {
        println!("{:<12} {}", r.label, r.metrics.values().map(|v| format!("{:>8}", fmt_metric(v))).join(""));
        tsv.push_str(&format!("{}\t{}\n", r.label, r.metrics.values().map(fmt_metric).join("\t")));
    }
    write_json(&cfg.out_dir.join(ABLATION_JSON), &rows)?;
    std::fs::write(cfg.out_dir.join(ABLATION_TSV), tsv).context("writing ablation table")?;
    Ok(())
}

pub fn ablate(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve("ablate", args)?;
    cfg.write(&cfg.out_dir)?;
    match cfg.precision {
        Precision::F32 => ablate_typed::<f32>(&cfg),
        Precision::F64 => ablate_typed::<f64>(&cfg),
    }
}

fn report_line(o: &CheckOutcome) -> bool {
    let ok = o.passed();
    println!(
        "{} {:<34} max rel error {:.3e} (tol {:.0e})",
        if ok { "ok  " } else { "FAIL" },
        o.name,
        o.report.max_rel_error(),
        o.report.tol
    );
    ok
}

pub fn gradcheck(args: &GradcheckArgs) -> anyhow::Result<()> {
    let mut outcomes = primitive_suite(args.seed)?;
    outcomes.extend(layer_suite(args.seed)?);
    let mut failed: Vec<String> = outcomes.iter().filter(|o| !report_line(o)).map(|o| o.name.clone()).collect();
    if !args.skip_network {
        let start = Instant::now();
        let o = network_check(args.seed, args.base_channels, args.size, args.limit)?;
        if !report_line(&o) {
            failed.push(o.name.clone());
        }
        eprintln!("end-to-end check took {:.1}s", start.elapsed().as_secs_f64());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Verification(format!("gradient check failed for {}", failed.join(", "))).into())
    }
}

pub fn synth_data(args: &SynthArgs) -> anyhow::Result<()> {
    let source = DataSource::Synthetic {
        train: args.train,
        val: 0,
        test: 0,
        size: args.size,
    };
    let (train, _) = training_sets::<f32>(&source, args.seed)?;
    let test: Vec<_> = if args.test == 0 {
        Vec::new()
    } else {
        let source = DataSource::Synthetic {
            train: 0,
            val: 0,
            test: args.test,
            size: args.size,
        };
        test_set::<f32>(&source, args.seed)?.into_iter().map(|t| t.original).collect()
    };
    let mut entries = Vec::new();
    for (split, set) in [(Split::Train, &train), (Split::Test, &test)] {
        for s in set {
            let image = PathBuf::from("images").join(format!("{}.png", s.id));
            let mask = PathBuf::from("masks").join(format!("{}.png", s.id));
            raster::write_rgb(&args.out_dir.join(&image), &s.image)?;
            raster::write_gray(&args.out_dir.join(&mask), &s.mask)?;
            entries.push(ManifestEntry {
                id: s.id.clone(),
                image,
                mask,
                fov: None,
                split,
            });
        }
    }
    let pad = args.size.div_ceil(16) * 16;
    let manifest = DatasetManifest {
        name: "synthetic".into(),
        pad_target: (pad, pad),
        entries,
        root: args.out_dir.clone(),
    };
    let path = args.out_dir.join("manifest.jsonl");
    save_manifest(&path, &manifest)?;
    println!("wrote {} samples to {}", manifest.entries.len(), path.display());
    Ok(())
}

