//! End-to-end checks of the `lil` binary: flag handling, exit codes, file
//! outputs, and determinism of every command.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lil() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lil"))
}

fn run(args: &[&str]) -> Output {
    lil().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_rings_config(dir: &Path, epochs: usize) -> PathBuf {
    let path = dir.join("rings-tiny.json");
    let text = format!(
        r#"{{
  "dataset": {{"rings": {{"n_per_ring": 20, "noise_variance": 0.0, "seed": 7, "split_fraction": 0.8}}}},
  "network": {{"layer_widths": [3, 8, 8], "num_classes_per_level": [2]}},
  "train": {{
    "weights": {{"alpha": 1.0, "beta": 1.0}},
    "epochs": {epochs},
    "batch_size": null,
    "adam": {{"learning_rate": 0.001, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8}},
    "seed": 42,
    "hierarchy_plan": [0],
    "global_isometry": false
  }}
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn gen_data_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "gen-data".to_string(),
            "--kind".into(),
            "torus".into(),
            "--n".into(),
            "200".into(),
            "--noise".into(),
            "0.001".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let a = lil().args(args(&out_a)).output().unwrap();
    assert_success(&a);
    let b = lil().args(args(&out_b)).output().unwrap();
    assert_success(&b);
    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    assert_eq!(
        bytes_a, bytes_b,
        "same flags and seed must give identical CSVs"
    );

    let header = String::from_utf8_lossy(&bytes_a);
    let first_line = header.lines().next().unwrap();
    assert_eq!(first_line, "x_0,x_1,x_2,label_0,label_1,split");
    assert_eq!(header.lines().count(), 201);

    // bad input: n = 0 exits 2
    let bad = run(&[
        "gen-data",
        "--kind",
        "rings",
        "--n",
        "0",
        "--out",
        "/tmp/x.csv",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    // unknown kind exits 2
    let bad2 = run(&["gen-data", "--kind", "moons", "--out", "/tmp/x.csv"]);
    assert_eq!(bad2.status.code(), Some(2));
}

#[test]
fn train_attack_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_rings_config(dir.path(), 40);
    let model = dir.path().join("model.json");

    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(model.exists());
    assert!(dir.path().join("model.report.json").exists());
    assert!(dir.path().join("model.losses.csv").exists());
    assert!(dir.path().join("model.meta.json").exists());

    let losses = std::fs::read_to_string(dir.path().join("model.losses.csv")).unwrap();
    assert_eq!(
        losses.lines().next().unwrap(),
        "epoch,batch,block,loss_total,loss_cse,loss_iso"
    );
    // 40 epochs, full batch, one block
    assert_eq!(losses.lines().count(), 41);

    // dataset CSV for attack/report input
    let data = dir.path().join("rings.csv");
    let gen = run(&[
        "gen-data",
        "--kind",
        "rings",
        "--n",
        "20",
        "--noise",
        "0",
        "--seed",
        "7",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_success(&gen);

    let sweep_out = dir.path().join("sweep.csv");
    let atk = run(&[
        "attack",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "pgd",
        "--sweep",
        "0.01",
        "0.5",
        "4",
        "--ball",
        "0.5",
        "--steps",
        "3",
        "--split",
        "test",
        "--batch",
        "8",
        "--out",
        sweep_out.to_str().unwrap(),
    ]);
    assert_success(&atk);
    let sweep = std::fs::read_to_string(&sweep_out).unwrap();
    assert!(sweep.contains("# ball=0.5 steps=3"), "{sweep}");
    let data_lines: Vec<&str> = sweep.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        data_lines[0],
        "beta,attack,epsilon,robust_accuracy,n_samples"
    );
    assert_eq!(data_lines.len(), 5);

    // explicit epsilons including 0: the zero row reproduces clean test
    // accuracy (the CSV was generated with the same seed and split as the
    // training config, so the subsets coincide)
    let eps_out = dir.path().join("eps.csv");
    let atk0 = run(&[
        "attack",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "fgsm",
        "--epsilons",
        "0,0.2",
        "--split",
        "test",
        "--batch",
        "8",
        "--out",
        eps_out.to_str().unwrap(),
    ]);
    assert_success(&atk0);
    let eps_csv = std::fs::read_to_string(&eps_out).unwrap();
    let zero_row = eps_csv
        .lines()
        .find(|l| !l.starts_with('#') && l.starts_with("1,fgsm,0,"))
        .expect("zero-epsilon row present");
    let zero_acc: f64 = zero_row.split(',').nth(3).unwrap().parse().unwrap();
    let report_json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("model.report.json")).unwrap(),
    )
    .unwrap();
    let clean_acc = report_json["test_accuracy"][0].as_f64().unwrap();
    assert_eq!(zero_acc, clean_acc);

    let report_dir = dir.path().join("report");
    let rep = run(&[
        "report",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--bins",
        "10",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_success(&rep);
    assert!(report_dir.join("accuracy.csv").exists());
    assert!(report_dir.join("isometry_level_0.csv").exists());
    assert!(report_dir.join("histograms_level_0.csv").exists());
    let emb = std::fs::read_to_string(report_dir.join("embeddings_level_0.csv")).unwrap();
    assert!(emb.lines().next().unwrap().ends_with("label"));
    assert_eq!(emb.lines().count(), 1 + 8); // header + test rows
    let iso = std::fs::read_to_string(report_dir.join("isometry_level_0.csv")).unwrap();
    assert_eq!(
        iso.lines().next().unwrap(),
        "class,pearson_r,mean_abs_residual,empirical_K,n_pairs"
    );

    // identity diagnostic: correlations exactly 1
    let diag_dir = dir.path().join("diag");
    let diag = run(&[
        "report",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--identity-diagnostic",
        "--out",
        diag_dir.to_str().unwrap(),
    ]);
    assert_success(&diag);
    let iso = std::fs::read_to_string(diag_dir.join("isometry_level_0.csv")).unwrap();
    for line in iso.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1], "1", "identity diagnostic pearson: {line}");
    }
}

#[test]
fn train_run_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_rings_config(dir.path(), 15);
    let model_a = dir.path().join("a.json");
    let model_b = dir.path().join("b.json");
    for model in [&model_a, &model_b] {
        let out = run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    assert_eq!(
        std::fs::read(&model_a).unwrap(),
        std::fs::read(&model_b).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.losses.csv")).unwrap(),
        std::fs::read(dir.path().join("b.losses.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.report.json")).unwrap(),
        std::fs::read(dir.path().join("b.report.json")).unwrap()
    );
}

#[test]
fn beta_sweep_trains_one_model_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let text = r#"{
  "dataset": {"rings": {"n_per_ring": 10, "noise_variance": 0.0, "seed": 7, "split_fraction": 1.0}},
  "network": {"layer_widths": [3, 6, 6], "num_classes_per_level": [2]},
  "train": {"weights": {"alpha": 1.0, "beta": 0.0}, "epochs": 3, "seed": 1},
  "beta_sweep": [0.0, 0.5]
}"#;
    std::fs::write(&path, text).unwrap();
    let model = dir.path().join("m.json");
    let out = run(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(dir.path().join("m-beta0.json").exists());
    assert!(dir.path().join("m-beta0.5.json").exists());

    // --beta override collapses the sweep to a single model
    let single = dir.path().join("single.json");
    let out = run(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--beta",
        "0.25",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert_success(&out);
    assert!(single.exists());
}

#[test]
fn attack_defaults_from_config_section_and_output_dir_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let cfg_path = dir.path().join("exp.json");
    let text = format!(
        r#"{{
  "dataset": {{"rings": {{"n_per_ring": 15, "noise_variance": 0.0, "seed": 7, "split_fraction": 0.8}}}},
  "network": {{"layer_widths": [3, 6, 6], "num_classes_per_level": [2]}},
  "train": {{"weights": {{"alpha": 1.0, "beta": 0.5}}, "epochs": 10, "seed": 4}},
  "attack": {{"kind": "pgd", "sweep_lo": 0.05, "sweep_hi": 0.5, "sweep_n": 3, "ball": 0.3, "steps": 2}},
  "output_dir": "{}"
}}"#,
        out_dir.display()
    );
    std::fs::write(&cfg_path, text).unwrap();

    // no --out: the config's output_dir supplies the checkpoint location
    let out = run(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_success(&out);
    let model = out_dir.join("model.json");
    assert!(model.exists());

    let data = dir.path().join("rings.csv");
    assert_success(&run(&[
        "gen-data",
        "--kind",
        "rings",
        "--n",
        "15",
        "--noise",
        "0",
        "--seed",
        "7",
        "--out",
        data.to_str().unwrap(),
    ]));

    // no --kind/--sweep/--ball/--steps: all come from the attack section
    let sweep_out = dir.path().join("sweep.csv");
    assert_success(&run(&[
        "attack",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--split",
        "test",
        "--out",
        sweep_out.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(&sweep_out).unwrap();
    assert!(csv.contains("# attack=pgd"), "{csv}");
    assert!(csv.contains("# ball=0.3 steps=2"), "{csv}");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4); // header + 3 rows

    // a flag still overrides the section
    let sweep_out2 = dir.path().join("sweep2.csv");
    assert_success(&run(&[
        "attack",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--kind",
        "fgsm",
        "--split",
        "test",
        "--out",
        sweep_out2.to_str().unwrap(),
    ]));
    let csv2 = std::fs::read_to_string(&sweep_out2).unwrap();
    assert!(csv2.contains("# attack=fgsm"), "{csv2}");

    // neither --out nor output_dir: validation error
    let bare_cfg = dir.path().join("bare.json");
    std::fs::write(
        &bare_cfg,
        r#"{"dataset": {"rings": {"n_per_ring": 5, "noise_variance": 0, "seed": 1}},
            "network": {"layer_widths": [3, 4], "num_classes_per_level": [2]},
            "train": {"weights": {"alpha": 1, "beta": 0}, "epochs": 1, "seed": 1}}"#,
    )
    .unwrap();
    let out = run(&["train", "--config", bare_cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_for_bad_configs_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();

    // unknown key in config -> 2
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(
        &bad_cfg,
        r#"{"dataset": {"rings": {"n_per_ring": 5, "noise_variance": 0, "seed": 1}},
            "network": {"layer_widths": [3, 4], "num_classes_per_level": [2]},
            "train": {"weights": {"alpha": 1, "beta": 0}, "epochs": 1, "seed": 1},
            "unknown_key": 1}"#,
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        bad_cfg.to_str().unwrap(),
        "--out",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // missing model file -> 4 (I/O)
    let out = run(&[
        "attack",
        "--model",
        dir.path().join("nope.json").to_str().unwrap(),
        "--data",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--kind",
        "fgsm",
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));

    // clap usage error -> 2
    let out = run(&["attack", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // help -> 0
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn mnist_pipeline_on_synthetic_idx_files() {
    // fabricate a tiny valid IDX pair so the loader path is exercised
    // without the real dataset
    let dir = tempfile::tempdir().unwrap();
    let n = 64usize;
    let mut images = Vec::new();
    images.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    images.extend_from_slice(&28u32.to_be_bytes());
    let mut labels = Vec::new();
    labels.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        let class = (i % 2) as u8;
        labels.push(class);
        for p in 0..784u32 {
            // two blurry class templates
            let v = if (p / 98) % 2 == class as u32 {
                200
            } else {
                30
            };
            images.push(v + (i % 17) as u8);
        }
    }
    for name in ["train", "t10k"] {
        std::fs::write(
            dir.path().join(format!("{name}-images-idx3-ubyte")),
            &images,
        )
        .unwrap();
        std::fs::write(
            dir.path().join(format!("{name}-labels-idx1-ubyte")),
            &labels,
        )
        .unwrap();
    }

    let cfg_path = dir.path().join("mnist-tiny.json");
    let text = format!(
        r#"{{
  "dataset": {{"mnist": {{
    "train_images": "{d}/train-images-idx3-ubyte",
    "train_labels": "{d}/train-labels-idx1-ubyte",
    "test_images": "{d}/t10k-images-idx3-ubyte",
    "test_labels": "{d}/t10k-labels-idx1-ubyte",
    "subsample": 32
  }}}},
  "network": {{"layer_widths": [784, 16, 16], "num_classes_per_level": [10]}},
  "train": {{"weights": {{"alpha": 1.0, "beta": 0.01}}, "epochs": 2,
             "batch_size": 16, "seed": 3}}
}}"#,
        d = dir.path().display()
    );
    std::fs::write(&cfg_path, text).unwrap();
    let model = dir.path().join("mnist-model.json");
    let out = run(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_success(&out);

    // attack reads the t10k pair from the directory
    let sweep_out = dir.path().join("mnist-sweep.csv");
    let out = run(&[
        "attack",
        "--model",
        model.to_str().unwrap(),
        "--data",
        dir.path().to_str().unwrap(),
        "--kind",
        "fgsm",
        "--sweep",
        "0.1",
        "0.5",
        "3",
        "--samples",
        "32",
        "--out",
        sweep_out.to_str().unwrap(),
    ]);
    assert_success(&out);
    let text = std::fs::read_to_string(&sweep_out).unwrap();
    assert!(text.contains("# clip_min=0 clip_max=1"), "{text}");
}
