//! End-to-end checks of the installed binary: argument handling, exit
//! codes, and output files.

use std::path::Path;
use std::process::{Command, Output};

fn pairlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const QUICK: &str = "\
data.synth.classes = 3
data.synth.per_class = 8
data.synth.dim = 6
data.synth.noise = 0.2
batch.classes = 2
batch.m = 3
model.embed_dim = 4
train.epochs = 4
";

#[test]
fn train_succeeds_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quick.cfg", QUICK);
    let out_a = dir.path().join("a.txt");
    let out_b = dir.path().join("b.txt");
    let run_a = pairlab(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(
        run_a.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&run_a.stderr)
    );
    let run_b = pairlab(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(run_b.status.success());
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "reruns must be byte-identical"
    );
    let text = std::fs::read_to_string(&out_a).unwrap();
    assert!(text.contains("seed = 3"), "--seed must override the config");
    assert!(text.contains("[recall]"));
}

#[test]
fn train_writes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quick.cfg", QUICK);
    let run = pairlab(&["train", "--config", &cfg, "--seed", "1"]);
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("# pairlab train result"));
}

#[test]
fn unknown_method_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "method = flux_capacitor\n");
    let run = pairlab(&["train", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(1));
    let stderr = String::from_utf8(run.stderr).unwrap();
    assert!(stderr.contains("flux_capacitor"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "hp.allpha = 2\n");
    let run = pairlab(&["train", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("hp.allpha"));
}

#[test]
fn missing_config_file_exits_with_usage_error() {
    let run = pairlab(&["train", "--config", "/nonexistent/path.cfg"]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn corrupted_gradient_hook_exits_with_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "corrupt.cfg", "gradcheck.corrupt = true\n");
    let out = dir.path().join("report.txt");
    let run = pairlab(&[
        "gradcheck",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2), "verification failures exit 2");
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("passed = false"));
    assert!(text.contains("failed"));
    assert!(
        text.contains("binlifted\t-\t-\tskipped: gradient-defined method"),
        "gradient-defined methods are reported as skipped"
    );
}

#[test]
fn gradcheck_passes_cleanly_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.txt");
    let run = pairlab(&["gradcheck", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(
        run.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("passed = true"));
}

#[test]
fn dump_weights_supports_all_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in ["s", "p", "n"] {
        let cfg = write_config(
            dir.path(),
            &format!("{scenario}.cfg"),
            &format!("sweep.scenario = {scenario}\n"),
        );
        let out = dir.path().join(format!("{scenario}.txt"));
        let run = pairlab(&[
            "dump-weights",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(run.status.success());
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains("[table]"));
        assert!(text.contains("\tms\n") || text.contains("\tms"));
    }
}

#[test]
fn help_exits_zero() {
    let run = pairlab(&["--help"]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stdout).contains("train"));
}

#[test]
fn file_dataset_round_trips_through_training() {
    let dir = tempfile::tempdir().unwrap();
    // Two interleaved classes in 3 dimensions, 8 samples each.
    let mut lines = String::new();
    for i in 0..8 {
        let t = i as f64 * 0.2;
        lines.push_str(&format!("0,{},{},0.1\n", 1.0 + t * 0.01, t * 0.02));
        lines.push_str(&format!("1,{},{},0.9\n", -1.0 - t * 0.01, t * 0.02));
    }
    let data_path = dir.path().join("features.csv");
    std::fs::write(&data_path, &lines).unwrap();
    let cfg = write_config(
        dir.path(),
        "file.cfg",
        &format!(
            "data.file = {}\nbatch.classes = 2\nbatch.m = 2\nmodel.embed_dim = 2\ntrain.epochs = 3\n",
            data_path.display()
        ),
    );
    let out = dir.path().join("result.txt");
    let run = pairlab(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("data.file ="));
}

#[test]
fn query_gallery_mode_trains_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut q = String::new();
    let mut g = String::new();
    for i in 0..6 {
        let t = i as f64 * 0.1;
        q.push_str(&format!("0,{},0.2\n", 1.0 + t));
        q.push_str(&format!("1,{},-0.8\n", -1.0 - t));
        g.push_str(&format!("0,{},0.25\n", 1.1 + t));
        g.push_str(&format!("1,{},-0.75\n", -1.1 - t));
    }
    let qp = dir.path().join("query.csv");
    let gp = dir.path().join("gallery.csv");
    std::fs::write(&qp, q).unwrap();
    std::fs::write(&gp, g).unwrap();
    let cfg = write_config(
        dir.path(),
        "two.cfg",
        &format!(
            "data.query = {}\ndata.gallery = {}\nbatch.classes = 2\nbatch.m = 2\nmodel.embed_dim = 2\ntrain.epochs = 2\n",
            qp.display(),
            gp.display()
        ),
    );
    let out = dir.path().join("result.txt");
    let run = pairlab(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "6",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("data.gallery ="));
    assert!(text.contains("[recall]"));
}
