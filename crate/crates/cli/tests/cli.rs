//! Black-box behavior of the `xray` binary: exit codes, file formats, and
//! determinism of outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn xray() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xray"))
}

fn run(args: &[&str]) -> Output {
    xray().args(args).output().expect("binary runs")
}

fn write_three_column(dir: &Path) -> PathBuf {
    let path = dir.join("three.mtx");
    std::fs::write(
        &path,
        "%%MatrixMarket matrix coordinate real general\n\
         2 3 4\n1 1 1.0\n2 2 1.0\n1 3 0.6\n2 3 0.4\n",
    )
    .unwrap();
    path
}

#[test]
fn factorize_three_column_example() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_three_column(dir.path());
    let anchors = dir.path().join("anchors.tsv");
    let h = dir.path().join("h.mtx");
    let out = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--rank",
        "2",
        "--variant",
        "max",
        "--out-anchors",
        anchors.to_str().unwrap(),
        "--out-h",
        h.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(&anchors).unwrap();
    assert_eq!(report, "1\t1\t\n2\t2\t\n");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("residual 0.000000e0"), "stderr: {stderr}");
    assert!(stderr.lines().any(|l| l.starts_with("total,")));
    // re-read H and verify it reproduces the data exactly: X = X_A H
    let h_mat = xray_core::read_coordinate_matrix(&h).unwrap();
    assert_eq!((h_mat.n_rows(), h_mat.n_cols()), (2, 3));
    let x_cols = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.4]];
    let anchor_cols = [0usize, 1]; // columns 1 and 2, 1-based, per report
    let mut residual = 0.0f64;
    for j in 0..3 {
        for row in 0..2 {
            let mut fit = 0.0;
            for (i, &a) in anchor_cols.iter().enumerate() {
                fit += x_cols[a][row] * h_mat.get(i, j);
            }
            residual += (x_cols[j][row] - fit).powi(2);
        }
    }
    assert!(residual <= 1e-20, "reread H leaves residual {residual}");
}

#[test]
fn factorize_flag_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_three_column(dir.path());
    let out = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--rank",
        "0",
        "--out-anchors",
        "a",
        "--out-h",
        "h",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank must be >= 1"));

    // unknown flag: clap exits 2
    let out = run(&["factorize", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));

    // missing rank and auto-rank
    let out = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--out-anchors",
        "a",
        "--out-h",
        "h",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn factorize_compute_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mtx");
    std::fs::write(&bad, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n")
        .unwrap();
    let out = run(&[
        "factorize",
        "--input",
        bad.to_str().unwrap(),
        "--rank",
        "1",
        "--out-anchors",
        dir.path().join("a").to_str().unwrap(),
        "--out-h",
        dir.path().join("h").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("read-input"), "stage missing: {stderr}");

    // rank above the column count is a compute-stage rejection
    let input = write_three_column(dir.path());
    let out = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--rank",
        "9",
        "--out-anchors",
        dir.path().join("a").to_str().unwrap(),
        "--out-h",
        dir.path().join("h").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("factorize"));
}

#[test]
fn auto_rank_stops_early() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_three_column(dir.path());
    let anchors = dir.path().join("anchors.tsv");
    let out = run(&[
        "factorize",
        "--input",
        input.to_str().unwrap(),
        "--auto-rank",
        "1e-6",
        "--variant",
        "max",
        "--out-anchors",
        anchors.to_str().unwrap(),
        "--out-h",
        dir.path().join("h.mtx").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = std::fs::read_to_string(&anchors).unwrap();
    assert_eq!(report.lines().count(), 2, "cone needs exactly 2 anchors");
}

#[test]
fn ingest_then_factorize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let triples = dir.path().join("corpus.tsv");
    std::fs::write(
        &triples,
        "# toy corpus\n\
         d1\talpha\t3\nd1\tbeta\t1\n\
         d2\tbeta\t2\nd2\tgamma\t1\n\
         d3\talpha\t1\nd3\tgamma\t4\n\
         d4\tdelta\t2\nd4\talpha\t1\n",
    )
    .unwrap();
    let matrix = dir.path().join("X.mtx");
    let vocab = dir.path().join("vocab.tsv");
    let out = run(&[
        "ingest",
        "--triples",
        triples.to_str().unwrap(),
        "--min-df",
        "1",
        "--max-df-frac",
        "1.0",
        "--out",
        matrix.to_str().unwrap(),
        "--out-vocab",
        vocab.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let vocab_text = std::fs::read_to_string(&vocab).unwrap();
    assert_eq!(vocab_text, "1\talpha\n2\tbeta\n3\tdelta\n4\tgamma\n");

    let anchors = dir.path().join("anchors.tsv");
    let out = run(&[
        "factorize",
        "--input",
        matrix.to_str().unwrap(),
        "--rank",
        "2",
        "--vocab",
        vocab.to_str().unwrap(),
        "--out-anchors",
        anchors.to_str().unwrap(),
        "--out-h",
        dir.path().join("h.mtx").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(&anchors).unwrap();
    for line in report.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3);
        assert!(
            ["alpha", "beta", "delta", "gamma"].contains(&fields[2]),
            "anchor label missing: {line}"
        );
    }
}

#[test]
fn ingest_empty_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let triples = dir.path().join("empty.tsv");
    std::fs::write(&triples, "").unwrap();
    let out = run(&[
        "ingest",
        "--triples",
        triples.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--out-vocab",
        dir.path().join("v").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_zero_trials_exits_2_and_seeded_sweeps_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("runs.csv");
    let out = run(&[
        "sweep", "--trials", "0", "--out", out_csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--m".into(), "30".into(),
            "--r".into(), "4".into(),
            "--n".into(), "20".into(),
            "--deltas".into(), "0,0.4".into(),
            "--trials".into(), "2".into(),
            "--variants".into(), "max,rand".into(),
            "--seed".into(), "7".into(),
            "--out".into(), out.to_string_lossy().into_owned(),
        ]
    };
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    assert!(xray().args(args(&first)).output().unwrap().status.success());
    assert!(xray().args(args(&second)).output().unwrap().status.success());

    // identical modulo the wall-clock column
    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&first), strip(&second));

    // aggregate files are byte-identical
    let agg_a = dir.path().join("a.agg.csv");
    let agg_b = dir.path().join("b.agg.csv");
    assert_eq!(
        std::fs::read(&agg_a).unwrap(),
        std::fs::read(&agg_b).unwrap()
    );
    let agg = std::fs::read_to_string(&agg_a).unwrap();
    assert!(agg.starts_with("delta,criterion,mean_recovery,std_recovery\n"));
    assert!(agg.contains("\n0,max,1.000000,0.000000"));
}

#[test]
fn gram_stats_reports_shape() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_three_column(dir.path());
    let out = run(&["gram-stats", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rows,2"));
    assert!(stdout.contains("cols,3"));
    assert!(stdout.contains("nnz_x,4"));
    assert!(stdout.contains("dense_stored,true"));
}

#[test]
fn help_documents_flags() {
    for sub in ["factorize", "sweep", "ingest", "gram-stats"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--help"));
        match sub {
            "factorize" => {
                for flag in [
                    "--input", "--rank", "--auto-rank", "--variant", "--normalize", "--seed",
                    "--threads", "--tol", "--max-cycles", "--refine-iters", "--out-anchors",
                    "--out-h",
                ] {
                    assert!(text.contains(flag), "{sub} help missing {flag}");
                }
            }
            "sweep" => {
                for flag in ["--m", "--r", "--n", "--deltas", "--trials", "--variants", "--seed", "--out"] {
                    assert!(text.contains(flag), "{sub} help missing {flag}");
                }
            }
            "ingest" => {
                for flag in ["--triples", "--min-df", "--max-df-frac", "--out", "--out-vocab"] {
                    assert!(text.contains(flag), "{sub} help missing {flag}");
                }
            }
            _ => {
                assert!(text.contains("--input"));
            }
        }
    }
}
