//! End-to-end checks of the command surface: files, schemas, exit codes.

use std::path::Path;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["flora"];
    full.extend_from_slice(args);
    flora_cli::run(full)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn tiny_pilot_args(out_dir: &Path, extra: &[&str]) -> Vec<String> {
    let mut args = vec![
        "pilot".to_string(),
        "--synthetic".to_string(),
        "--layers".to_string(),
        "16,12,12,4".to_string(),
        "--train-per-class".to_string(),
        "30".to_string(),
        "--eval-per-class".to_string(),
        "10".to_string(),
        "--epochs".to_string(),
        "2".to_string(),
        "--eval-every".to_string(),
        "4".to_string(),
        "--seed".to_string(),
        "1".to_string(),
        "--out-dir".to_string(),
        out_dir.display().to_string(),
    ];
    args.extend(extra.iter().map(ToString::to_string));
    args
}

fn run_strings(args: &[String]) -> i32 {
    let mut full = vec!["flora".to_string()];
    full.extend_from_slice(args);
    flora_cli::run(full)
}

#[test]
fn pilot_writes_curves_for_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_strings(&tiny_pilot_args(dir.path(), &[])), 0);
    let csv = read(&dir.path().join("pilot_curves.csv"));
    assert!(csv.starts_with("variant,step,loss,accuracy\n"));
    for variant in ["full_sgd", "lora", "lora_b", "rp", "rrp"] {
        assert!(
            csv.contains(&format!("\n{variant},1,")),
            "missing curve for {variant}"
        );
    }
    let svg = read(&dir.path().join("pilot.svg"));
    assert_eq!(svg.matches("<polyline").count(), 5);
}

#[test]
fn pilot_is_byte_identical_across_runs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    assert_eq!(run_strings(&tiny_pilot_args(dir_a.path(), &[])), 0);
    assert_eq!(run_strings(&tiny_pilot_args(dir_b.path(), &[])), 0);
    let a = std::fs::read(dir_a.path().join("pilot_curves.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("pilot_curves.csv")).unwrap();
    assert_eq!(a, b, "pilot CSVs must be byte-identical for equal seeds");
    let sa = std::fs::read(dir_a.path().join("pilot.svg")).unwrap();
    let sb = std::fs::read(dir_b.path().join("pilot.svg")).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn pilot_with_zero_eta_has_flat_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run_strings(&tiny_pilot_args(dir.path(), &["--eta", "0"])),
        0
    );
    let csv = read(&dir.path().join("pilot_curves.csv"));
    let mut per_variant: std::collections::BTreeMap<&str, Vec<&str>> = Default::default();
    for line in csv.lines().skip(1) {
        let mut cols = line.split(',');
        let variant = cols.next().unwrap();
        let acc = cols.nth(2).unwrap();
        per_variant.entry(variant).or_default().push(acc);
    }
    assert_eq!(per_variant.len(), 5);
    for (variant, accs) in per_variant {
        assert!(
            accs.iter().all(|&a| a == accs[0]),
            "{variant} accuracy moved with eta=0"
        );
    }
}

#[test]
fn pilot_without_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "pilot",
        "--data-dir",
        dir.path().join("nope").to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn invalid_flags_exit_64() {
    assert_eq!(run(&["pilot", "--no-such-flag"]), 64);
    assert_eq!(run(&["nonsense"]), 64);
    assert_eq!(run(&["memreport", "--layers", "0,10"]), 64);
    assert_eq!(run(&["memreport", "--ranks", "8,x"]), 64);
    assert_eq!(run(&["train", "--mode", "warp-drive"]), 64);
    assert_eq!(run(&["verify", "--only", "no_such_check"]), 64);
    assert_eq!(run(&["verify", "--inject-fault", "no-such-fault"]), 64);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["pilot", "--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
}

#[test]
fn memreport_square_matrix_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "memreport",
        "--layers",
        "768,768",
        "--ranks",
        "8,32,128,256,768",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = read(&dir.path().join("memreport.csv"));
    let ratio_for = |rank: &str| -> f64 {
        csv.lines()
            .find(|l| l.starts_with(&format!("{rank},sgd_flora_momentum,w0,")))
            .unwrap_or_else(|| panic!("no flora row for rank {rank}"))
            .rsplit(',')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(ratio_for("8"), 96.0);
    assert_eq!(ratio_for("32"), 24.0);
    assert_eq!(ratio_for("128"), 6.0);
    assert_eq!(ratio_for("256"), 3.0);
    assert_eq!(ratio_for("768"), 1.0);

    // Bias vectors never get a compression ratio: always naive.
    for line in csv.lines().filter(|l| l.contains(",b0,")) {
        assert!(
            line.ends_with(','),
            "vector param row should have empty ratio: {line}"
        );
    }
    // The naive momentum buffer for the vector matches its length.
    let bias_row = csv
        .lines()
        .find(|l| l.starts_with("8,sgd_flora_momentum,b0,"))
        .unwrap();
    let cols: Vec<&str> = bias_row.split(',').collect();
    assert_eq!(cols[3], "768");
    assert_eq!(cols[4], "768");
}

#[test]
fn train_sgd_has_zero_state_and_writes_run_record() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "train",
        "--mode",
        "sgd",
        "--synthetic",
        "--layers",
        "16,12,4",
        "--train-per-class",
        "20",
        "--eval-per-class",
        "10",
        "--epochs",
        "1",
        "--eval-every",
        "5",
        "--seed",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let run_file = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("run_"))
        .expect("run_<hash>.csv written");
    let contents = read(&run_file.path());
    assert!(contents.contains("# mode=sgd\n"));
    assert!(contents.contains("# config_hash="));
    assert!(contents.contains("step,loss,accuracy\n"));

    let mem = read(&dir.path().join("memreport.csv"));
    for line in mem.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(
            cols[2], "0",
            "sgd mode must hold no optimizer state: {line}"
        );
    }
}

#[test]
fn train_accum_flora_honors_tau() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "train",
        "--mode",
        "accum_flora",
        "--tau",
        "16",
        "--synthetic",
        "--layers",
        "24,16,4",
        "--rank",
        "4",
        "--train-per-class",
        "128",
        "--eval-per-class",
        "8",
        "--epochs",
        "1",
        "--batch",
        "4",
        "--eval-every",
        "32",
        "--seed",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let run_file = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("run_"))
        .unwrap();
    let contents = read(&run_file.path());
    assert!(contents.contains("# tau=16\n"));
    assert!(contents.contains("# mode=accum_flora\n"));
}

#[test]
fn kappa_sweep_emits_one_row_per_value_and_interior_is_not_worst() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "train",
        "--mode",
        "sgd_flora_momentum",
        "--synthetic",
        "--layers",
        "128,96,96,10",
        "--train-per-class",
        "200",
        "--eval-per-class",
        "50",
        "--epochs",
        "10",
        "--eval-every",
        "100",
        "--kappa",
        "1,10,100,1000,10000",
        "--seed",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let run_file = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("run_"))
        .unwrap();
    let contents = read(&run_file.path());
    let rows: Vec<(u64, f64)> = contents
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("kappa"))
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[0].parse().unwrap(), cols[3].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 5, "one row per kappa: {contents}");

    let accs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let worst = accs.iter().cloned().fold(f64::INFINITY, f64::min);
    let best = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(
        accs[0], worst,
        "kappa=1 must be (one of) the worst: {accs:?}"
    );
    let best_idx = accs.iter().position(|&a| a == best).unwrap();
    assert!(
        best_idx > 0 && best_idx < accs.len() - 1,
        "best kappa should be interior: {accs:?}"
    );
}

#[test]
fn config_file_feeds_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        "synthetic=true\nlayers=16,12,4\ntrain_per_class=20\neval_per_class=10\nepochs=1\neval_every=5\nseed=9\nmode=sgd\n",
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let code = run(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out-dir",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let run_file = std::fs::read_dir(&out_a)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("run_"))
        .unwrap();
    let contents = read(&run_file.path());
    assert!(contents.contains("# seed=9\n"), "file config should apply");

    let out_b = dir.path().join("b");
    let code = run(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "11",
        "--out-dir",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let run_file = std::fs::read_dir(&out_b)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("run_"))
        .unwrap();
    let contents = read(&run_file.path());
    assert!(
        contents.contains("# seed=11\n"),
        "flag must override file config"
    );
}

#[test]
fn verify_only_runs_single_check() {
    assert_eq!(run(&["verify", "--only", "theorem1", "--steps", "10"]), 0);
    assert_eq!(run(&["verify", "--only", "grad_check"]), 0);
}

#[test]
fn verify_fault_injection_fails_the_suite() {
    let code = run(&[
        "verify",
        "--only",
        "momentum_transfer",
        "--inject-fault",
        "momentum-no-transfer",
    ]);
    assert_eq!(code, 1);
    assert_eq!(run(&["verify", "--only", "momentum_transfer"]), 0);
}
