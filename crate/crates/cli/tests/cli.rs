use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfx"))
        .args(args)
        .output()
        .expect("spawn cfx")
}

fn ok(args: &[&str]) -> String {
    let out = cfx(args);
    assert!(
        out.status.success(),
        "cfx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cfx(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const POSITIVE: &[&str] = &[
    "I wish I had gone to the show",
    "If I had known I would have called",
    "I would have stayed if it had rained",
    "I wish the food were warmer",
    "If she were here she would laugh",
];
const NEGATIVE: &[&str] = &[
    "The market closed higher on Monday",
    "We went to the show last night",
    "The food was warm and tasty",
    "She called her brother yesterday",
    "Rain is expected this weekend",
    "Shares fell after the report",
    "The team won the final game",
    "He reads a book every week",
];

/// Task-1 CSV with `n` rows, about one in five positive.
fn task1(dir: &Path, name: &str, n: usize) -> PathBuf {
    let mut s = String::from("sentence_id,gold_label,sentence\n");
    for i in 0..n {
        let (label, text) = if i % 5 == 0 {
            (1, POSITIVE[(i / 5) % POSITIVE.len()])
        } else {
            (0, NEGATIVE[i % NEGATIVE.len()])
        };
        s.push_str(&format!("{i},{label},\"{text} {}\"\n", i % 7));
    }
    let path = dir.join(name);
    fs::write(&path, s).unwrap();
    path
}

fn count_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn split_sizes_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    let data = task1(dir.path(), "train.csv", 100);
    let args = ["split", "--in", p(&data), "--ratio", "0.75", "--seed", "7"];
    ok(&args);
    let train = dir.path().join("train.train.csv");
    let val = dir.path().join("train.val.csv");
    let (nt, nv) = (count_rows(&train), count_rows(&val));
    assert!((74..=76).contains(&nt), "train rows {nt}");
    assert_eq!(nt + nv, 100);
    let first = (fs::read(&train).unwrap(), fs::read(&val).unwrap());
    ok(&args);
    assert_eq!(first, (fs::read(&train).unwrap(), fs::read(&val).unwrap()));

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("train.split.json")).unwrap())
            .unwrap();
    assert_eq!(meta["run_config"]["seed"], "7");
    assert_eq!(meta["train"], nt);

    ok(&["split", "--in", p(&data), "--seed", "8"]);
    assert_ne!(first.0, fs::read(&train).unwrap());
}

#[test]
fn split_task2_is_detected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("spans.csv");
    let mut s = String::from(
        "sentence_id,sentence,antecedent_startid,antecedent_endid,consequent_startid,consequent_endid\n",
    );
    for i in 0..8 {
        s.push_str(&format!("{i},I wish it were so,2,15,-1,-1\n"));
    }
    fs::write(&path, s).unwrap();
    ok(&["split", "--in", p(&path), "--ratio", "0.5"]);
    let train = fs::read_to_string(dir.path().join("spans.train.csv")).unwrap();
    assert!(train.starts_with("sentence_id,sentence,antecedent_startid"));
    assert_eq!(count_rows(&dir.path().join("spans.val.csv")), 4);
}

#[test]
fn forms_reports_four_buckets() {
    let dir = TempDir::new().unwrap();
    let data = task1(dir.path(), "d.csv", 40);
    let out = dir.path().join("forms.json");
    let stdout = ok(&["forms", "--in", p(&data), "--out", p(&out)]);
    for name in ["if-modal", "modal-if", "wish", "other"] {
        assert!(stdout.contains(name), "{stdout}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    let total: u64 = ["if-modal", "modal-if", "wish", "other"]
        .iter()
        .map(|f| report["forms"][f]["total"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 40);
    // positives cycle through POSITIVE: indices 0, 3 and 0 again are wish sentences
    assert_eq!(report["forms"]["wish"]["positive"], 3);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["split"]), 2);
    assert_eq!(
        code(&["eval", "--task", "3", "--gold", "a", "--pred", "b"]),
        2
    );

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,text\n1,hello\n").unwrap();
    assert_eq!(code(&["split", "--in", p(&bad)]), 1);
    assert_eq!(
        code(&["forms", "--in", p(&dir.path().join("missing.csv"))]),
        1
    );

    let data = task1(dir.path(), "d.csv", 20);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "seed = 3\nratoi = 0.5\n").unwrap();
    let out = cfx(&["--config", p(&cfg), "split", "--in", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ratoi"));

    // embeddings may come from the config, so this is checked after parsing
    let model = dir.path().join("m.json");
    assert_eq!(
        code(&[
            "train-cnn",
            "--train",
            p(&data),
            "--val",
            p(&data),
            "--out",
            p(&model)
        ]),
        2
    );
}

#[test]
fn help_lists_every_subcommand() {
    let help = ok(&["--help"]);
    for sub in [
        "split",
        "forms",
        "featurize",
        "train-linear",
        "train-cnn",
        "train-crf",
        "predict",
        "ensemble",
        "extract-spans",
        "eval",
    ] {
        assert!(help.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn linear_round_trip_with_config() {
    let dir = TempDir::new().unwrap();
    let train = task1(dir.path(), "train.csv", 60);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# linear run\nc = 4\nepochs = 15\nseed = 11\nchannels = word\n",
    )
    .unwrap();
    let model = dir.path().join("linear.json");
    let args = [
        "--config",
        p(&cfg),
        "train-linear",
        "--train",
        p(&train),
        "--epochs",
        "30",
        "--out",
        p(&model),
    ];
    ok(&args);
    let first = fs::read(&model).unwrap();
    ok(&args);
    assert_eq!(
        first,
        fs::read(&model).unwrap(),
        "model bytes differ on rerun"
    );

    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["format"], "cfx-linear");
    assert_eq!(json["run_config"]["c"], "4");
    assert_eq!(json["run_config"]["epochs"], "30");
    assert_eq!(json["run_config"]["seed"], "11");
    assert_eq!(json["settings"]["train"]["epochs"], 30);

    let pred = dir.path().join("pred.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--in",
        p(&train),
        "--out",
        p(&pred),
    ]);
    let text = fs::read_to_string(&pred).unwrap();
    assert!(text.starts_with("id,label\n"), "{text}");
    assert_eq!(count_rows(&pred), 60);

    let report = dir.path().join("report.json");
    let table = ok(&[
        "eval",
        "--task",
        "1",
        "--gold",
        p(&train),
        "--pred",
        p(&pred),
        "--out",
        p(&report),
    ]);
    assert!(table.contains("precision"));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["format"], "cfx-metrics");
    assert!(r["classification"]["f1"].as_f64().unwrap() > 0.9, "{r}");
}

#[test]
fn per_form_and_ensemble() {
    let dir = TempDir::new().unwrap();
    let train = task1(dir.path(), "train.csv", 60);
    let per_form = dir.path().join("pf.json");
    ok(&[
        "train-linear",
        "--per-form",
        "--train",
        p(&train),
        "--out",
        p(&per_form),
    ]);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(&per_form).unwrap()).unwrap();
    assert_eq!(json["format"], "cfx-per-form");

    let linear = dir.path().join("lin.json");
    ok(&[
        "train-linear",
        "--train",
        p(&train),
        "--balance",
        "oversample",
        "--loss",
        "logistic",
        "--out",
        p(&linear),
    ]);

    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&[
        "predict",
        "--model",
        p(&per_form),
        "--in",
        p(&train),
        "--out",
        p(&a),
    ]);
    ok(&[
        "predict",
        "--model",
        p(&linear),
        "--in",
        p(&train),
        "--out",
        p(&b),
    ]);

    let all_neg = dir.path().join("neg.csv");
    let mut s = String::from("id,label\n");
    for i in 0..60 {
        s.push_str(&format!("{i},0\n"));
    }
    fs::write(&all_neg, s).unwrap();

    let members = format!("{},{},{}", p(&a), p(&b), p(&all_neg));
    let strict = dir.path().join("strict.csv");
    let lenient = dir.path().join("lenient.csv");
    ok(&[
        "ensemble",
        "--models",
        &members,
        "--threshold",
        "1",
        "--out",
        p(&strict),
    ]);
    ok(&["ensemble", "--models", &members, "--out", p(&lenient)]);
    let positives = |path: &Path| {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .filter(|l| l.ends_with(",1"))
            .count()
    };
    assert_eq!(positives(&strict), 0);
    assert!(positives(&lenient) >= positives(&a).max(positives(&b)));

    let short = dir.path().join("short.csv");
    fs::write(&short, "id,label\n0,1\n").unwrap();
    let mismatched = format!("{},{}", p(&a), p(&short));
    assert_eq!(
        code(&["ensemble", "--models", &mismatched, "--out", p(&strict)]),
        1
    );
    assert_eq!(
        code(&[
            "ensemble",
            "--models",
            &members,
            "--threshold",
            "0",
            "--out",
            p(&strict)
        ]),
        1
    );
}

#[test]
fn featurize_writes_vectorizer_and_matrix() {
    let dir = TempDir::new().unwrap();
    let data = task1(dir.path(), "d.csv", 10);
    let vec_path = dir.path().join("vec.json");
    let matrix = dir.path().join("x.jsonl");
    ok(&[
        "featurize",
        "--in",
        p(&data),
        "--weighting",
        "tfidf",
        "--ngram-max",
        "1",
        "--keep-stopwords",
        "false",
        "--out",
        p(&vec_path),
        "--matrix",
        p(&matrix),
    ]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&vec_path).unwrap()).unwrap();
    assert_eq!(v["config"]["weighting"], "tfidf");
    assert_eq!(v["run_config"]["keep_stopwords"], "false");
    let rows: Vec<serde_json::Value> = fs::read_to_string(&matrix)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0]["id"], "0");
    assert!(!rows[0]["features"].as_array().unwrap().is_empty());

    // pos features without parses is a data error
    assert_eq!(
        code(&[
            "featurize",
            "--in",
            p(&data),
            "--channels",
            "word,pos",
            "--out",
            p(&vec_path)
        ]),
        1
    );
}

type Range = (i64, i64);

const SPAN_ROWS: &[(&str, Range, Range)] = &[
    ("I would go if it rained", (11, 22), (0, 9)),
    ("I wish it were sunny", (7, 19), (-1, -1)),
    ("She would smile if he came", (15, 25), (0, 15)),
    ("I wish we had won", (7, 16), (-1, -1)),
    ("We would win if they left", (14, 24), (0, 13)),
];

fn task2(dir: &Path) -> PathBuf {
    let mut s = String::from(
        "sentence_id,sentence,antecedent_startid,antecedent_endid,consequent_startid,consequent_endid\n",
    );
    for (i, (text, a, c)) in SPAN_ROWS.iter().enumerate() {
        s.push_str(&format!("s{i},{text},{},{},{},{}\n", a.0, a.1, c.0, c.1));
    }
    let path = dir.join("spans.csv");
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn crf_round_trip_and_heuristic() {
    let dir = TempDir::new().unwrap();
    let data = task2(dir.path());
    let model = dir.path().join("crf.json");
    ok(&[
        "train-crf",
        "--train",
        p(&data),
        "--crf-epochs",
        "40",
        "--out",
        p(&model),
    ]);
    let first = fs::read(&model).unwrap();
    ok(&[
        "train-crf",
        "--train",
        p(&data),
        "--crf-epochs",
        "40",
        "--out",
        p(&model),
    ]);
    assert_eq!(first, fs::read(&model).unwrap());

    let pred = dir.path().join("pred.csv");
    ok(&[
        "extract-spans",
        "--model",
        p(&model),
        "--in",
        p(&data),
        "--out",
        p(&pred),
    ]);
    let report = dir.path().join("r.json");
    ok(&[
        "eval",
        "--task",
        "2",
        "--gold",
        p(&data),
        "--pred",
        p(&pred),
        "--out",
        p(&report),
    ]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert!(r["spans"]["f1"].as_f64().unwrap() > 0.5, "{r}");

    // the dependency rule takes over the antecedent when a parse is given
    let input = dir.path().join("fig.csv");
    fs::write(
        &input,
        "sentence_id,sentence\nfig,If I were at DreamWorks Animation\n",
    )
    .unwrap();
    let conllu = dir.path().join("fig.conllu");
    fs::write(
        &conllu,
        "# sent_id = fig\n\
         1\tIf\tif\tSCONJ\tIN\t_\t3\tmark\t_\t_\n\
         2\tI\tI\tPRON\tPRP\t_\t3\tnsubj\t_\t_\n\
         3\twere\tbe\tAUX\tVBD\t_\t0\tROOT\t_\t_\n\
         4\tat\tat\tADP\tIN\t_\t3\tprep\t_\t_\n\
         5\tDreamWorks\tDreamWorks\tPROPN\tNNP\t_\t6\tcompound\t_\t_\n\
         6\tAnimation\tAnimation\tPROPN\tNNP\t_\t4\tpobj\t_\t_\n\n",
    )
    .unwrap();
    let out = dir.path().join("fig.pred.csv");
    ok(&[
        "extract-spans",
        "--model",
        p(&model),
        "--in",
        p(&input),
        "--conllu",
        p(&conllu),
        "--out",
        p(&out),
    ]);
    let line = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_string();
    assert!(
        line.starts_with("fig,If I were at DreamWorks Animation,0,32,"),
        "{line}"
    );
}

#[test]
fn cnn_train_and_predict() {
    let dir = TempDir::new().unwrap();
    let train = task1(dir.path(), "train.csv", 30);
    let val = task1(dir.path(), "val.csv", 15);
    let emb = dir.path().join("emb.txt");
    fs::write(
        &emb,
        "wish 1.0 0.0 0.5\nif 0.0 1.0 0.5\nwould -0.5 0.5 1.0\nthe 0.1 0.1 0.1\nmarket 0.2 -0.3 0.0\n",
    )
    .unwrap();
    let model = dir.path().join("cnn.json");
    let args = [
        "--seed",
        "5",
        "train-cnn",
        "--embeddings",
        p(&emb),
        "--train",
        p(&train),
        "--val",
        p(&val),
        "--kernel-sizes",
        "1,2",
        "--filters",
        "4",
        "--max-len",
        "16",
        "--epochs",
        "3",
        "--batch-size",
        "8",
        "--out",
        p(&model),
    ];
    let stdout = ok(&args);
    assert!(stdout.contains("best epoch"), "{stdout}");
    let first = fs::read(&model).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(&model).unwrap());

    let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(json["format"], "cfx-cnn");
    assert_eq!(json["run_config"]["kernel_sizes"], "1,2");

    let pred = dir.path().join("pred.csv");
    assert_eq!(
        code(&[
            "predict",
            "--model",
            p(&model),
            "--in",
            p(&val),
            "--out",
            p(&pred)
        ]),
        2
    );
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--in",
        p(&val),
        "--embeddings",
        p(&emb),
        "--out",
        p(&pred),
    ]);
    assert_eq!(count_rows(&pred), 15);
}
