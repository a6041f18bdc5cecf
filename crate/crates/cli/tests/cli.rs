use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use shortsim::synth::{generate, SynthConfig};

fn shortsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shortsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = shortsim(args);
    assert!(
        out.status.success(),
        "shortsim {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns its single stderr line.
fn fails(args: &[&str]) -> String {
    let out = shortsim(args);
    assert!(
        !out.status.success(),
        "shortsim {} unexpectedly succeeded",
        args.join(" ")
    );
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(
        stderr.trim_end().lines().count(),
        1,
        "multi-line error: {stderr:?}"
    );
    assert!(stderr.starts_with("error: "), "{stderr:?}");
    stderr.trim_end().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn toy(name: &str) -> String {
    format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn words(prefix: &str, n: usize) -> String {
    (0..n)
        .map(|i| format!("{prefix}{}", (b'a' + i as u8) as char))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Two tiny orthogonal embeddings and a df table over their words.
fn separable_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let emb = write(dir, "emb.txt", "2 2\nx 1 0\ny 0 1\n");
    let df = write(dir, "df.tsv", "#docs\t4\nx\t2\ny\t2\n");
    let couples = write(
        dir,
        "couples.tsv",
        "1\tx x\tx x\n1\ty y\ty y\n1\tx y\tx y\n0\tx x\ty y\n0\ty y\tx x\n0\tx x\ty y\n",
    );
    (emb, df, couples)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn extract_writes_requested_counts() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let corpus = format!(
        "{}\n{}\n\n{}\n{}\n",
        words("a", 22) + " " + &words("b", 22),
        words("c", 22) + " " + &words("d", 22),
        words("e", 22) + " " + &words("f", 22),
        words("g", 22) + " " + &words("h", 22),
    );
    let corpus = write(d, "corpus.txt", &corpus);
    let vocab: Vec<String> = ["a", "b", "c", "d", "e", "f", "g", "h"]
        .iter()
        .flat_map(|pre| {
            words(pre, 22)
                .split(' ')
                .map(String::from)
                .collect::<Vec<_>>()
        })
        .collect();
    let emb_text = format!(
        "{} 1\n{}",
        vocab.len(),
        vocab
            .iter()
            .map(|w| format!("{w} 0.5\n"))
            .collect::<String>()
    );
    let emb = write(d, "emb.txt", &emb_text);
    let out = d.join("out");
    let stdout = ok(&[
        "extract",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--n-words",
        "20",
        "--max-pairs",
        "2",
        "--seed",
        "4",
        "--out",
        p(&out),
    ]);
    assert_eq!(stdout, "pairs\t2\nnonpairs\t2\n");
    let text = fs::read_to_string(out.join("couples.tsv")).unwrap();
    let labels: Vec<&str> = text.lines().map(|l| &l[..1]).collect();
    assert_eq!(labels, ["1", "1", "0", "0"]);
    assert!(text
        .lines()
        .all(|l| l.split('\t').skip(1).all(|f| f.split(' ').count() == 20)));
}

#[test]
fn extract_is_deterministic_and_splits() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&[
            "extract",
            "--corpus",
            &toy("corpus.txt"),
            "--embeddings",
            &toy("embeddings.txt"),
            "--n-words",
            "20",
            "--split",
            "0.6,0.2,0.2",
            "--seed",
            seed,
            "--out",
            p(&out),
        ]);
        out
    };
    let (a, b, c) = (run("a", "8"), run("b", "8"), run("c", "9"));
    for file in ["couples.tsv", "train.tsv", "test.tsv", "validation.tsv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    assert_ne!(
        fs::read(a.join("train.tsv")).unwrap(),
        fs::read(c.join("train.tsv")).unwrap()
    );
    let lines = |f: &str| fs::read_to_string(a.join(f)).unwrap().lines().count();
    assert_eq!(
        (
            lines("train.tsv"),
            lines("test.tsv"),
            lines("validation.tsv")
        ),
        (240, 80, 80)
    );
}

#[test]
fn extract_needs_two_articles() {
    let dir = TempDir::new().unwrap();
    let corpus = write(
        dir.path(),
        "corpus.txt",
        &format!("{}\n{}\n", words("a", 25), words("a", 25)),
    );
    let emb = write(
        dir.path(),
        "emb.txt",
        &format!(
            "25 1\n{}",
            words("a", 25)
                .split(' ')
                .map(|w| format!("{w} 1\n"))
                .collect::<String>()
        ),
    );
    let err = fails(&[
        "extract",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--n-words",
        "10",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert!(err.contains("non-pair") || err.contains("nonpair"), "{err}");
    let err = fails(&[
        "extract",
        "--corpus",
        "missing.txt",
        "--embeddings",
        p(&emb),
        "--n-words",
        "10",
        "--out",
        "o",
    ]);
    assert!(err.contains("missing.txt"), "{err}");
}

#[test]
fn df_counts_paragraphs() {
    let dir = TempDir::new().unwrap();
    let corpus = write(
        dir.path(),
        "corpus.txt",
        "The cat, the cat.\nA dog\n\nThe end 42\n",
    );
    let stdout = ok(&[
        "df",
        "--corpus",
        p(&corpus),
        "--out",
        p(&dir.path().join("df")),
    ]);
    assert_eq!(stdout, "documents\t3\nwords\t6\n");
    let text = fs::read_to_string(dir.path().join("df/df.tsv")).unwrap();
    assert_eq!(
        text,
        "#docs\t3\n0\t1\na\t1\ncat\t1\ndog\t1\nend\t1\nthe\t2\n"
    );
}

#[test]
fn evaluate_separable_and_fan_out() {
    let dir = TempDir::new().unwrap();
    let (emb, df, couples) = separable_fixture(dir.path());
    let out = dir.path().join("eval");
    let stdout = ok(&[
        "evaluate",
        "--couples",
        p(&couples),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--method",
        "mean,max",
        "--distance",
        "cosine",
        "--out",
        p(&out),
    ]);
    assert_eq!(stdout.lines().count(), 2);
    let mean = read_json(&out.join("mean_cosine.json"));
    assert_eq!(mean["split_error"], 0.0);
    assert_eq!(mean["n_pairs"], 3);
    assert_eq!(mean["n_nonpairs"], 3);
    assert!(out.join("max_cosine.json").is_file());
    let hist = fs::read_to_string(out.join("mean_cosine.hist.csv")).unwrap();
    assert_eq!(
        hist.lines().next(),
        Some("bin_left,bin_right,count_pairs,count_nonpairs")
    );
    assert_eq!(hist.lines().count(), 101);
}

#[test]
fn tfidf_is_scored_with_cosine_only() {
    let dir = TempDir::new().unwrap();
    let (emb, df, couples) = separable_fixture(dir.path());
    let out = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--couples",
        p(&couples),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--method",
        "tfidf,mean",
        "--distance",
        "euclidean,braycurtis",
        "--out",
        p(&out),
    ]);
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "mean_braycurtis.json",
            "mean_euclidean.json",
            "tfidf_cosine.json"
        ]
    );
    assert_eq!(
        read_json(&out.join("tfidf_cosine.json"))["distance"],
        "cosine"
    );
}

#[test]
fn select_and_report_on_same_file_equals_in_sample() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&[
        "extract",
        "--corpus",
        &toy("corpus.txt"),
        "--embeddings",
        &toy("embeddings.txt"),
        "--n-words",
        "20",
        "--out",
        p(&d.join("ex")),
    ]);
    ok(&[
        "df",
        "--corpus",
        &toy("corpus.txt"),
        "--out",
        p(&d.join("df")),
    ]);
    let couples = d.join("ex/couples.tsv");
    let df = d.join("df/df.tsv");
    let emb = toy("embeddings.txt");
    let base = |extra: &[&str], out: &Path| {
        let mut args = vec![
            "evaluate",
            "--embeddings",
            &emb,
            "--df",
            p(&df),
            "--method",
            "mean,minmax_concat",
            "--distance",
            "euclidean,cosine",
            "--out",
            p(out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
    };
    base(&["--couples", p(&couples)], &d.join("in"));
    base(
        &["--select-on", p(&couples), "--report-on", p(&couples)],
        &d.join("both"),
    );
    for name in [
        "mean_euclidean",
        "mean_cosine",
        "minmax_concat_euclidean",
        "minmax_concat_cosine",
    ] {
        for ext in ["json", "hist.csv"] {
            let file = format!("{name}.{ext}");
            assert_eq!(
                fs::read(d.join("in").join(&file)).unwrap(),
                fs::read(d.join("both").join(&file)).unwrap()
            );
        }
    }
}

#[test]
fn evaluate_rejects_bad_names_and_inputs() {
    let dir = TempDir::new().unwrap();
    let (emb, df, couples) = separable_fixture(dir.path());
    let out = dir.path().join("eval");
    let run = |method: &str, distance: &str| {
        fails(&[
            "evaluate",
            "--couples",
            p(&couples),
            "--embeddings",
            p(&emb),
            "--df",
            p(&df),
            "--method",
            method,
            "--distance",
            distance,
            "--out",
            p(&out),
        ])
    };
    let err = run("median", "cosine");
    assert!(
        err.contains("median") && err.contains("minmax_top_idf") && err.contains("tfidf"),
        "{err}"
    );
    let err = run("mean", "manhattan");
    assert!(
        err.contains("manhattan") && err.contains("squared_euclidean"),
        "{err}"
    );
    let err = run("mean_importance", "cosine");
    assert!(err.contains("factors"), "{err}");
    let err = fails(&[
        "evaluate",
        "--select-on",
        p(&couples),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--out",
        p(&out),
    ]);
    assert!(err.contains("--report-on"), "{err}");
}

#[test]
fn train_writes_factors_and_trace() {
    let dir = TempDir::new().unwrap();
    let (emb, df, couples) = separable_fixture(dir.path());
    let out = dir.path().join("train");
    ok(&[
        "train",
        "--couples",
        p(&couples),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--batch-size",
        "4",
        "--epochs",
        "2",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    let factors = read_json(&out.join("factors.json"));
    assert_eq!(factors["n_words"], 2);
    assert_eq!(factors["factors"].as_array().unwrap().len(), 2);
    assert_eq!(factors["config"]["batch_size"], 4);
    assert_eq!(factors["config"]["seed"], 3);
    let trace = fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("batch,objective"));
    assert_eq!(trace.lines().count(), 1 + 4);

    let zero = dir.path().join("zero");
    ok(&[
        "train",
        "--couples",
        p(&couples),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--epochs",
        "0",
        "--out",
        p(&zero),
    ]);
    let factors = read_json(&zero.join("factors.json"));
    assert!(factors["factors"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v == 0.5));
}

#[test]
fn train_rejects_mixed_lengths_with_line_number() {
    let dir = TempDir::new().unwrap();
    let (emb, df, _) = separable_fixture(dir.path());
    let mixed = write(dir.path(), "mixed.tsv", "1\tx x\tx x\n\n0\tx y x\ty x y\n");
    let err = fails(&[
        "train",
        "--couples",
        p(&mixed),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert!(err.contains("line 3"), "{err}");
    let err = fails(&[
        "train",
        "--couples",
        p(&mixed),
        "--embeddings",
        p(&emb),
        "--df",
        p(&df),
        "--momentum",
        "1.5",
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert!(err.contains("momentum"), "{err}");
}

#[test]
fn loss_trace_trends_down_on_synthetic_data() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = generate(&SynthConfig {
        topics: 200,
        paragraphs_per_topic: 15,
        seed: 5,
        ..SynthConfig::default()
    });
    let mut text = Vec::new();
    data.corpus.write(&mut text).unwrap();
    let corpus = d.join("corpus.txt");
    fs::write(&corpus, text).unwrap();
    let emb = d.join("emb.txt");
    data.embeddings
        .write_text(fs::File::create(&emb).unwrap())
        .unwrap();

    ok(&[
        "extract",
        "--corpus",
        p(&corpus),
        "--embeddings",
        p(&emb),
        "--n-words",
        "20",
        "--out",
        p(&d.join("ex")),
    ]);
    ok(&["df", "--corpus", p(&corpus), "--out", p(&d.join("df"))]);
    ok(&[
        "train",
        "--couples",
        p(&d.join("ex/couples.tsv")),
        "--embeddings",
        p(&emb),
        "--df",
        p(&d.join("df/df.tsv")),
        "--epochs",
        "2",
        "--out",
        p(&d.join("tr")),
    ]);
    let trace: Vec<f64> = fs::read_to_string(d.join("tr/loss_trace.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(trace.len(), 120);
    let windows: Vec<f64> = trace
        .chunks(10)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    // least-squares slope of the window means
    let n = windows.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = windows.iter().sum::<f64>() / n;
    let slope: f64 = windows
        .iter()
        .enumerate()
        .map(|(i, y)| (i as f64 - mx) * (y - my))
        .sum();
    assert!(
        slope < 0.0,
        "windowed objective not trending down: {windows:?}"
    );
    assert!(
        windows[windows.len() - 1] < 0.75 * windows[0],
        "{windows:?}"
    );
}

fn report_json(dir: &Path, name: &str, method: &str, errors: u64) -> PathBuf {
    let v = serde_json::json!({
        "method": method,
        "distance": "euclidean",
        "split_threshold": 0.25,
        "split_error": errors as f64 / 200.0,
        "js_divergence": 0.3,
        "n_pairs": 100,
        "n_nonpairs": 100,
        "n_errors": errors,
    });
    write(dir, name, &v.to_string())
}

fn report_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("report.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn report_ranks_and_tests() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let a = report_json(d, "a.json", "mean", 40);
    let b = report_json(d, "b.json", "mean_importance", 25);
    let out = d.join("two");
    ok(&["report", p(&a), p(&b), "--out", p(&out)]);
    let rows = report_rows(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "mean_importance");
    assert_eq!(rows[0][8], "");
    let pv: f64 = rows[1][8].parse().unwrap();
    assert!(pv > 0.0 && pv < 0.01, "{pv}");
    let txt = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(txt.lines().count(), 3);

    let out = d.join("one");
    ok(&["report", p(&a), "--out", p(&out)]);
    let rows = report_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][8], "");

    let c = report_json(d, "c.json", "max", 40);
    let out = d.join("tie");
    ok(&["report", p(&a), p(&c), "--out", p(&out)]);
    let pv: f64 = report_rows(&out)[1][8].parse().unwrap();
    assert!(pv > 0.99, "{pv}");
}

#[test]
fn report_names_malformed_input() {
    let dir = TempDir::new().unwrap();
    let good = report_json(dir.path(), "good.json", "mean", 10);
    let bad = write(dir.path(), "broken.json", "{\"method\": \"mean\"}");
    let err = fails(&[
        "report",
        p(&good),
        p(&bad),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert!(err.contains("broken.json"), "{err}");
    let err = fails(&["report", "nowhere.json", "--out", p(&dir.path().join("o"))]);
    assert!(err.contains("nowhere.json"), "{err}");
}

#[test]
fn usage_errors_are_single_line() {
    let err = fails(&["train", "--bogus"]);
    assert!(err.contains("--bogus"), "{err}");
    fails(&["frobnicate"]);
}
