//! Command implementations behind the CLI surface.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flora_core::data::{load_idx, synth_blobs, Dataset};
use flora_core::gauss::derive_seed;
use flora_core::lora_dynamics::Variant;
use flora_core::model::MlpModel;
use flora_core::optim::{Mode, Optimizer, OptimizerConfig};
use flora_core::pilot::{final_accuracies, run_pilot, PilotConfig, PilotRecord};
use flora_core::verify::{run_all, VerifyOptions};

use crate::config::{canonical_config, parse_usize_list, FileConfig};
use crate::svg::{line_plot, Series};
use crate::{CliError, MemreportArgs, PilotArgs, TrainArgs, VerifyArgs};
use crate::{EXIT_OK, EXIT_VERIFY_FAILED};

const FMNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

// ---------------------------------------------------------------- pilot

pub fn cmd_pilot(args: &PilotArgs) -> Result<i32, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = file.resolve(args.seed, "seed", 1u64)?;
    let layers_raw = file.resolve(args.layers.clone(), "layers", "784,768,768,10".to_string())?;
    let layers = parse_layers(&layers_raw)?;
    let mut cfg = PilotConfig::new(seed);
    cfg.eta = file.resolve(args.eta, "eta", 0.01)?;
    cfg.rank = file.resolve(args.rank, "rank", 8)?;
    cfg.epochs = file.resolve(args.epochs, "epochs", 3)?;
    cfg.batch = file.resolve(args.batch, "batch", 32)?;
    cfg.eval_every = file.resolve(args.eval_every, "eval_every", 25)?;
    cfg.patch_layer = file.resolve(args.patch_layer, "patch_layer", 1)?;
    cfg.layers = layers;
    if cfg.rank == 0 || cfg.batch == 0 || cfg.epochs == 0 || cfg.eval_every == 0 {
        return Err(CliError::Usage(
            "rank, batch, epochs, eval_every must be >= 1".to_string(),
        ));
    }

    let synthetic = file.resolve_flag(args.synthetic, "synthetic")?;
    let train_per_class = file.resolve(args.train_per_class, "train_per_class", 400)?;
    let eval_per_class = file.resolve(args.eval_per_class, "eval_per_class", 100)?;
    let out_dir = file.resolve(args.out_dir.clone(), "out_dir", PathBuf::from("."))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Env(format!("cannot create {}: {e}", out_dir.display())))?;

    let (train, eval, source) = load_training_data(
        synthetic,
        args.data_dir.as_deref(),
        &file,
        &cfg.layers,
        seed,
        train_per_class,
        eval_per_class,
    )?;

    println!(
        "pilot: {} train / {} eval examples ({source}), eta={} rank={} seed={}",
        train.len(),
        eval.len(),
        cfg.eta,
        cfg.rank,
        seed
    );
    let started = Instant::now();
    let records = run_pilot(&cfg, &train, &eval).map_err(CliError::Core)?;
    let elapsed = started.elapsed();

    let csv_path = out_dir.join("pilot_curves.csv");
    std::fs::write(&csv_path, pilot_csv(&records))?;
    let svg_path = out_dir.join("pilot.svg");
    std::fs::write(&svg_path, pilot_svg(&records))?;

    println!("final eval accuracy (%):");
    for (variant, acc) in final_accuracies(&records) {
        println!("  {:<8} {acc:.2}", variant.name());
    }
    println!(
        "wrote {} and {} in {:.1}s",
        csv_path.display(),
        svg_path.display(),
        elapsed.as_secs_f64()
    );
    Ok(EXIT_OK)
}

pub fn pilot_csv(records: &[PilotRecord]) -> String {
    let mut out = String::from("variant,step,loss,accuracy\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.4}",
            r.variant.name(),
            r.step,
            r.loss,
            r.accuracy
        );
    }
    out
}

fn pilot_svg(records: &[PilotRecord]) -> String {
    let series: Vec<Series> = Variant::ALL
        .iter()
        .map(|&v| {
            let pts: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| (r.step as f64, r.accuracy))
                .collect();
            Series {
                label: v.name().to_string(),
                points: thin(&pts, 400),
            }
        })
        .collect();
    line_plot(
        "pilot: eval accuracy by update rule",
        "step",
        "accuracy (%)",
        &series,
    )
}

fn thin(points: &[(f64, f64)], cap: usize) -> Vec<(f64, f64)> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(cap);
    let mut out: Vec<(f64, f64)> = points.iter().copied().step_by(stride).collect();
    if out.last() != points.last() {
        out.push(*points.last().expect("nonempty"));
    }
    out
}

/// Synthetic or IDX-backed train/eval pair. Synthetic data is generated as
/// one class-major pool and split per class so train and eval share the
/// same cluster centers.
#[allow(clippy::too_many_arguments)]
pub fn load_training_data(
    synthetic: bool,
    data_dir: Option<&Path>,
    file: &FileConfig,
    layers: &[usize],
    seed: u64,
    train_per_class: usize,
    eval_per_class: usize,
) -> Result<(Dataset, Dataset, String), CliError> {
    if synthetic {
        let dim = layers[0];
        let classes = *layers.last().expect("validated");
        if train_per_class == 0 || eval_per_class == 0 {
            return Err(CliError::Usage(
                "train_per_class and eval_per_class must be >= 1".to_string(),
            ));
        }
        let per_class = train_per_class + eval_per_class;
        let pool = synth_blobs(derive_seed(seed, 900, 0), per_class, dim, classes);
        let mut train_idx = Vec::new();
        let mut eval_idx = Vec::new();
        for c in 0..classes {
            let base = c * per_class;
            train_idx.extend(base..base + train_per_class);
            eval_idx.extend(base + train_per_class..base + per_class);
        }
        return Ok((
            pool.subset(&train_idx),
            pool.subset(&eval_idx),
            "synthetic".to_string(),
        ));
    }

    let dir = resolve_data_dir(data_dir, file);
    let mut sets = Vec::new();
    for (img, lbl) in FMNIST_FILES {
        let img_path = find_idx_file(&dir, img).ok_or_else(|| missing_data(&dir, img))?;
        let lbl_path = find_idx_file(&dir, lbl).ok_or_else(|| missing_data(&dir, lbl))?;
        let ds = load_idx(&img_path, &lbl_path).map_err(|e| CliError::Env(e.to_string()))?;
        sets.push(ds);
    }
    let eval = sets.pop().expect("two sets");
    let train = sets.pop().expect("two sets");
    if train.feature_dim() != layers[0] || eval.n_classes() != *layers.last().expect("validated") {
        return Err(CliError::Usage(format!(
            "layers {layers:?} do not match dataset (dim {}, {} classes)",
            train.feature_dim(),
            train.n_classes()
        )));
    }
    Ok((train, eval, format!("idx files under {}", dir.display())))
}

fn resolve_data_dir(flag: Option<&Path>, file: &FileConfig) -> PathBuf {
    if let Some(d) = flag {
        return d.to_path_buf();
    }
    if let Some(d) = file.get("data_dir") {
        return PathBuf::from(d);
    }
    if let Ok(d) = std::env::var("FLORA_DATA_DIR") {
        return PathBuf::from(d);
    }
    PathBuf::from("data")
}

fn find_idx_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    for name in [format!("{stem}.gz"), stem.to_string()] {
        let p = dir.join(name);
        if p.is_file() {
            return Some(p);
        }
    }
    None
}

fn missing_data(dir: &Path, stem: &str) -> CliError {
    CliError::Env(format!(
        "dataset file {stem}[.gz] not found under {} (set FLORA_DATA_DIR / --data-dir, or pass --synthetic)",
        dir.display()
    ))
}

fn parse_layers(raw: &str) -> Result<Vec<usize>, CliError> {
    let layers = parse_usize_list(raw, "layers")?;
    if layers.len() < 2 || layers.contains(&0) {
        return Err(CliError::Usage(format!(
            "layers must name at least input and output dims, all positive, got {raw:?}"
        )));
    }
    Ok(layers)
}

// ---------------------------------------------------------------- verify

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    let opts = VerifyOptions {
        seed: args.seed.unwrap_or(0),
        steps: args.steps,
        only: args.only.clone(),
        disable_momentum_transfer: matches!(
            args.inject_fault.as_deref(),
            Some("momentum-no-transfer")
        ),
    };
    if let Some(fault) = args.inject_fault.as_deref() {
        if fault != "momentum-no-transfer" {
            return Err(CliError::Usage(format!(
                "unknown fault {fault:?}; available: momentum-no-transfer"
            )));
        }
    }
    if let Some(only) = &opts.only {
        if !flora_core::verify::CHECK_NAMES.contains(&only.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown check {only:?}; available: {}",
                flora_core::verify::CHECK_NAMES.join(", ")
            )));
        }
    }

    let started = Instant::now();
    let checks = run_all(&opts).map_err(CliError::Core)?;
    println!("{:<22} {:<6} detail", "check", "result");
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "{:<22} {:<6} {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        );
        if !c.passed {
            failed.push(c.name);
        }
    }
    println!(
        "{} checks in {:.1}s (seed {})",
        checks.len(),
        started.elapsed().as_secs_f64(),
        opts.seed
    );
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        println!("FAILED: {} (seed {})", failed.join(", "), opts.seed);
        Ok(EXIT_VERIFY_FAILED)
    }
}

// ---------------------------------------------------------------- memreport

pub fn cmd_memreport(args: &MemreportArgs) -> Result<i32, CliError> {
    let layers = parse_layers(args.layers.as_deref().unwrap_or("784,768,768,10"))?;
    let ranks = parse_usize_list(args.ranks.as_deref().unwrap_or("8,32,128,256"), "ranks")?;
    if ranks.contains(&0) {
        return Err(CliError::Usage("ranks must be positive".to_string()));
    }
    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Env(format!("cannot create {}: {e}", out_dir.display())))?;

    let model = MlpModel::zeroed(&layers).map_err(CliError::Core)?;
    let groups = model.param_groups();
    let modes = [
        Mode::Sgd,
        Mode::SgdNaiveMomentum,
        Mode::SgdFloraMomentum,
        Mode::AccumNaive,
        Mode::AccumFlora,
        Mode::LoraAdapter,
    ];

    let mut csv = String::from(
        "rank,mode,group,param_scalars,state_scalars,adapter_param_scalars,seed_words,compression_ratio\n",
    );
    println!("layers {layers:?}");
    println!(
        "{:<6} {:<20} {:>14} {:>16} {:>12}",
        "rank", "mode", "state_scalars", "adapter_scalars", "ratio"
    );
    for &rank in &ranks {
        let mut naive_state = None;
        for mode in modes {
            let mut cfg = OptimizerConfig::new(mode, 0.01);
            cfg.rank = rank;
            cfg.beta = 0.9;
            let opt = Optimizer::new(groups.clone(), cfg).map_err(CliError::Core)?;
            let report = opt.memory_report();
            for e in &report.entries {
                let ratio = e
                    .compression_ratio
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{rank},{},{},{},{},{},{},{ratio}",
                    mode.name(),
                    e.id,
                    e.param_scalars,
                    e.state_scalars,
                    e.adapter_param_scalars,
                    e.seed_words
                );
            }
            let total_state = report.total_state_scalars();
            let _ = writeln!(
                csv,
                "{rank},{},total,{},{},{},{},",
                mode.name(),
                report.total_param_scalars(),
                total_state,
                report.total_adapter_scalars(),
                report.total_seed_words()
            );
            if mode == Mode::SgdNaiveMomentum {
                naive_state = Some(total_state);
            }
            let ratio_str = match naive_state {
                Some(naive) if total_state > 0 => {
                    format!("{:.2}", naive as f64 / total_state as f64)
                }
                _ => "-".to_string(),
            };
            println!(
                "{rank:<6} {:<20} {:>14} {:>16} {:>12}",
                mode.name(),
                total_state,
                report.total_adapter_scalars(),
                ratio_str
            );
        }
    }
    let path = out_dir.join("memreport.csv");
    std::fs::write(&path, csv)?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- train

pub fn cmd_train(args: &TrainArgs) -> Result<i32, CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mode_raw = file.resolve(args.mode.clone(), "mode", "sgd".to_string())?;
    let mode = Mode::parse(&mode_raw)
        .ok_or_else(|| CliError::Usage(format!("unknown mode {mode_raw:?}")))?;
    let seed = file.resolve(args.seed, "seed", 1u64)?;
    let layers = parse_layers(&file.resolve(
        args.layers.clone(),
        "layers",
        "784,768,768,10".to_string(),
    )?)?;
    let eta = file.resolve(args.eta, "eta", 0.01)?;
    let rank = file.resolve(args.rank, "rank", 8)?;
    let tau = file.resolve(args.tau, "tau", 16)?;
    let beta = file.resolve(args.beta, "beta", 0.9)?;
    let epochs = file.resolve(args.epochs, "epochs", 1)?;
    let batch = file.resolve(args.batch, "batch", 32)?;
    let eval_every = file.resolve(args.eval_every, "eval_every", 25)?;
    let freeze_a = file.resolve_flag(args.freeze_a, "freeze_a")?;
    let kappa_raw = file.resolve(args.kappa.clone(), "kappa", "1000".to_string())?;
    let kappas = parse_usize_list(&kappa_raw, "kappa")?;
    if kappas.contains(&0) {
        return Err(CliError::Usage("kappa values must be positive".to_string()));
    }
    if batch == 0 || epochs == 0 || eval_every == 0 {
        return Err(CliError::Usage(
            "batch, epochs, eval_every must be >= 1".to_string(),
        ));
    }
    let synthetic = file.resolve_flag(args.synthetic, "synthetic")?;
    let train_per_class = file.resolve(args.train_per_class, "train_per_class", 200)?;
    let eval_per_class = file.resolve(args.eval_per_class, "eval_per_class", 50)?;
    let out_dir = file.resolve(args.out_dir.clone(), "out_dir", PathBuf::from("."))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Env(format!("cannot create {}: {e}", out_dir.display())))?;

    let (train, eval, source) = load_training_data(
        synthetic,
        args.data_dir.as_deref(),
        &file,
        &layers,
        seed,
        train_per_class,
        eval_per_class,
    )?;

    let config_pairs: Vec<(String, String)> = vec![
        ("mode".to_string(), mode.name().to_string()),
        ("eta".to_string(), format!("{eta}")),
        ("rank".to_string(), format!("{rank}")),
        ("tau".to_string(), format!("{tau}")),
        ("kappa".to_string(), kappa_raw.clone()),
        ("beta".to_string(), format!("{beta}")),
        ("seed".to_string(), format!("{seed}")),
        (
            "layers".to_string(),
            layers
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("epochs".to_string(), format!("{epochs}")),
        ("batch".to_string(), format!("{batch}")),
        ("eval_every".to_string(), format!("{eval_every}")),
        ("freeze_a".to_string(), format!("{freeze_a}")),
        ("source".to_string(), source.clone()),
    ];
    let (canonical, hash) = canonical_config(&config_pairs);

    let mut base_cfg = OptimizerConfig::new(mode, eta);
    base_cfg.rank = rank;
    base_cfg.tau = tau;
    base_cfg.beta = beta;
    base_cfg.run_seed = seed;
    base_cfg.lora_freeze_a = freeze_a;

    let mut body = String::new();
    let mut last_report = None;
    if kappas.len() == 1 {
        base_cfg.kappa = Some(kappas[0] as u64);
        let run = train_once(
            &layers, base_cfg, &train, &eval, seed, epochs, batch, eval_every,
        )
        .map_err(CliError::Core)?;
        body.push_str("step,loss,accuracy\n");
        for (step, loss, acc) in &run.records {
            let _ = writeln!(body, "{step},{loss:.6},{acc:.4}");
        }
        match run.diverged_at {
            Some(step) => println!(
                "mode {} on {source}: diverged at step {step} (non-finite activations)",
                mode.name()
            ),
            None => println!(
                "mode {} on {source}: final loss {:.4}, accuracy {:.2}% ({} steps)",
                mode.name(),
                run.final_loss,
                run.final_accuracy,
                run.records.len()
            ),
        }
        last_report = Some(run.report);
    } else {
        body.push_str("kappa,steps,final_loss,final_accuracy\n");
        for &kappa in &kappas {
            let mut cfg = base_cfg;
            cfg.kappa = Some(kappa as u64);
            let run = train_once(&layers, cfg, &train, &eval, seed, epochs, batch, eval_every)
                .map_err(CliError::Core)?;
            let _ = writeln!(
                body,
                "{kappa},{},{:.6},{:.4}",
                run.records.len(),
                run.final_loss,
                run.final_accuracy
            );
            match run.diverged_at {
                Some(step) => println!("kappa {kappa:>6}: diverged at step {step}, accuracy 0.00%"),
                None => println!(
                    "kappa {kappa:>6}: final loss {:.4}, accuracy {:.2}%",
                    run.final_loss, run.final_accuracy
                ),
            }
            last_report = Some(run.report);
        }
    }

    let mut csv = String::new();
    for line in canonical.lines() {
        let _ = writeln!(csv, "# {line}");
    }
    let _ = writeln!(csv, "# config_hash={hash}");
    csv.push_str(&body);
    let run_path = out_dir.join(format!("run_{hash}.csv"));
    std::fs::write(&run_path, csv)?;

    if let Some(report) = last_report {
        let mut mem = String::from(
            "group,param_scalars,state_scalars,adapter_param_scalars,seed_words,compression_ratio\n",
        );
        for e in &report.entries {
            let ratio = e
                .compression_ratio
                .map(|r| format!("{r:.4}"))
                .unwrap_or_default();
            let _ = writeln!(
                mem,
                "{},{},{},{},{},{ratio}",
                e.id, e.param_scalars, e.state_scalars, e.adapter_param_scalars, e.seed_words
            );
        }
        let mem_path = out_dir.join("memreport.csv");
        std::fs::write(&mem_path, mem)?;
        println!("wrote {} and {}", run_path.display(), mem_path.display());
    }
    Ok(EXIT_OK)
}

pub struct TrainRun {
    pub records: Vec<(usize, f64, f64)>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// Step at which activations went non-finite, if training blew up
    /// (e.g. momentum transfer at kappa=1 compounds variance every step).
    pub diverged_at: Option<usize>,
    pub report: flora_core::optim::MemoryReport,
}

#[allow(clippy::too_many_arguments)]
pub fn train_once(
    layers: &[usize],
    cfg: OptimizerConfig,
    train: &Dataset,
    eval: &Dataset,
    seed: u64,
    epochs: usize,
    batch: usize,
    eval_every: usize,
) -> flora_core::Result<TrainRun> {
    let mut model = MlpModel::new(layers, derive_seed(seed, 901, 0))?;
    let mut opt = Optimizer::new(model.param_groups(), cfg)?;
    let total_steps = train.len().div_ceil(batch) * epochs;
    let mut records = Vec::new();
    let mut accuracy = model.accuracy(eval, None)?;
    let mut step = 0usize;
    let mut final_loss = f64::NAN;
    let mut diverged_at = None;
    'outer: for epoch in 0..epochs {
        let order = train.shuffled_indices(derive_seed(seed, 902, epoch as u64));
        for chunk in order.chunks(batch) {
            let (x, labels) = train.batch(chunk);
            let stepped = model
                .forward_backward(&x, &labels)
                .and_then(|(loss, grads)| {
                    let deltas = opt.apply_gradients(&grads)?;
                    model.apply_deltas(&deltas)?;
                    Ok(loss)
                });
            let loss = match stepped {
                Ok(loss) => loss,
                Err(flora_core::Error::Data(_)) => {
                    diverged_at = Some(step + 1);
                    final_loss = f64::INFINITY;
                    break 'outer;
                }
                Err(other) => return Err(other),
            };
            step += 1;
            if step.is_multiple_of(eval_every) || step == total_steps {
                accuracy = match model.accuracy(eval, None) {
                    Ok(acc) => acc,
                    Err(flora_core::Error::Data(_)) => {
                        diverged_at = Some(step);
                        final_loss = f64::INFINITY;
                        break 'outer;
                    }
                    Err(other) => return Err(other),
                };
            }
            records.push((step, loss, accuracy));
            final_loss = loss;
        }
    }
    let final_accuracy = if diverged_at.is_some() { 0.0 } else { accuracy };
    let report = opt.memory_report();
    Ok(TrainRun {
        records,
        final_loss,
        final_accuracy,
        diverged_at,
        report,
    })
}
