//! End-to-end tests of the `hcf` binary. Every subcommand runs as a real
//! process inside a scratch directory, and wherever an artifact makes a
//! checkable claim — determinism, round-tripping, agreement with the
//! library running the same computation — the claim is checked byte for
//! byte, not eyeballed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hcf_core::fm::{Direction, FmModel, Variant};
use hcf_core::pipelines::{recommend, run_dissemination, DismParams, RecoParams};
use hcf_core::synth::{GroundTruth, ResponseOracle};
use hcf_core::train::{train, TrainConfig};
use serde_json::Value;

fn hcf(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hcf"));
    cmd.current_dir(dir);
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawning the hcf binary");
    assert!(
        output.status.success(),
        "command unexpectedly failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_err(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawning the hcf binary");
    assert!(
        !output.status.success(),
        "command unexpectedly succeeded\nstdout:\n{}",
        String::from_utf8_lossy(&output.stdout)
    );
    output
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is UTF-8")
}

fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn json_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
        .lines()
        .map(|line| serde_json::from_str(line).expect("well-formed JSON line"))
        .collect()
}

/// A dataset small enough that datagen + train stay well under a second.
const SMALL_CONFIG: &str = "[gen]\n\
                            n_users = 120\n\
                            n_items = 60\n\
                            events_per_user = 12\n\
                            \n\
                            [train]\n\
                            epochs = 6\n";

fn write_small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, SMALL_CONFIG).unwrap();
    path
}

fn small_train_config() -> TrainConfig {
    TrainConfig { epochs: 6, ..TrainConfig::default() }
}

/// `datagen --seed 9` into `dir/data`, using the small config.
fn datagen_small(dir: &Path) -> Output {
    write_small_config(dir);
    run_ok(hcf(dir).args([
        "datagen",
        "--config",
        "config.toml",
        "--seed",
        "9",
        "--out",
        "data",
    ]))
}

/// `train --seed 11` on the small dataset; returns the model file name.
fn train_small(dir: &Path, direction: &str, out: &str) -> Output {
    run_ok(hcf(dir).args([
        "train",
        "--config",
        "config.toml",
        "--seed",
        "11",
        "--direction",
        direction,
        "--data",
        "data/events.csv",
        "--out",
        out,
    ]))
}

#[test]
fn datagen_reruns_bit_identically_and_its_log_reingests() {
    // Same seed and flags from two different working directories: every
    // artifact, the manifest included, must come out byte-identical.
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut first_stdout = String::new();
    for dir in [a.path(), b.path()] {
        let out = datagen_small(dir);
        first_stdout = stdout_of(&out);
    }
    for name in ["data/events.csv", "data/truth.json", "data/manifest.json"] {
        assert_eq!(
            read_bytes(&a.path().join(name)),
            read_bytes(&b.path().join(name)),
            "{name} differs between identical seeded runs"
        );
    }

    // The summary line carries a sane negative share: both reaction
    // classes must be present in volume, give or take generator noise.
    let tail = first_stdout
        .split("negative rate ")
        .nth(1)
        .expect("datagen summary names the negative rate");
    let rate: f64 = tail[..tail.find(')').unwrap()].parse().unwrap();
    assert!((0.2..0.6).contains(&rate), "negative rate {rate} is implausible");

    // The manifest records what produced the artifacts.
    let manifest: Value =
        serde_json::from_slice(&read_bytes(&a.path().join("data/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "datagen");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["gen"]["n_users"], 120);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    assert!(manifest["tool_version"].is_string());

    // The generated log re-ingests, across formats, to the same store.
    let out = run_ok(hcf(a.path()).args([
        "ingest",
        "--data",
        "data/events.csv",
        "--out",
        "normalized.jsonl",
    ]));
    assert!(
        stdout_of(&out).starts_with("normalized data/events.csv -> normalized.jsonl"),
        "{}",
        stdout_of(&out)
    );
    let from_csv = hcf_core::io::load_events(&a.path().join("data/events.csv")).unwrap();
    let from_jsonl = hcf_core::io::load_events(&a.path().join("normalized.jsonl")).unwrap();
    assert_eq!(from_csv.events(), from_jsonl.events());
    assert_eq!(from_csv.n_users(), from_jsonl.n_users());
    assert_eq!(from_csv.n_items(), from_jsonl.n_items());
}

#[test]
fn train_matches_the_library_and_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    datagen_small(dir.path());
    let first = train_small(dir.path(), "reco", "model.json");
    train_small(dir.path(), "reco", "model_again.json");
    assert_eq!(
        read_bytes(&dir.path().join("model.json")),
        read_bytes(&dir.path().join("model_again.json")),
        "reruns with equal seeds must serialize identical models"
    );

    // The binary's model is the library's model, byte for byte.
    let store = hcf_core::io::load_events(&dir.path().join("data/events.csv")).unwrap();
    let (mirror, report) = train(
        &store,
        Variant::Hcf,
        Direction::Recommendation,
        &small_train_config(),
        11,
    )
    .unwrap();
    let mirror_path = dir.path().join("mirror.json");
    mirror.save(&mirror_path).unwrap();
    assert_eq!(read_bytes(&dir.path().join("model.json")), read_bytes(&mirror_path));

    // The progress log prints the real per-epoch losses.
    let text = stdout_of(&first);
    for (epoch, loss) in report.epoch_loss.iter().enumerate() {
        let line = format!("epoch {:>3}/{} loss {:.6}", epoch + 1, 6, loss);
        assert!(text.contains(&line), "missing {line:?} in:\n{text}");
    }
    assert!(text.contains("variant hcf, direction reco"), "{text}");

    let manifest: Value =
        serde_json::from_slice(&read_bytes(&dir.path().join("model.json.manifest.json")))
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["train"]["epochs"], 6);
    assert_eq!(manifest["inputs"]["data"], "data/events.csv");
}

#[test]
fn recommend_serves_known_users_and_reports_unknown_ones() {
    let dir = tempfile::tempdir().unwrap();
    datagen_small(dir.path());
    train_small(dir.path(), "reco", "model.json");

    let out = run_ok(hcf(dir.path()).args([
        "recommend",
        "--data",
        "data/events.csv",
        "--model",
        "model.json",
        "--out",
        "recs.jsonl",
        "--user",
        "u40",
        "--user",
        "nobody",
        "--top-n",
        "3",
    ]));
    assert!(stdout_of(&out).contains("served 1/2 users"), "{}", stdout_of(&out));

    let lines = json_lines(&dir.path().join("recs.jsonl"));
    assert_eq!(lines.len(), 2, "one record per requested user");
    assert_eq!(lines[0]["user"], "u40");
    assert!(lines[0].get("error").is_none());
    let items = lines[0]["items"].as_array().unwrap();
    assert_eq!(items.len(), 3);
    assert_eq!(lines[1]["user"], "nobody");
    assert_eq!(lines[1]["error"], "unknown user key");
    assert!(lines[1].get("items").is_none());

    // The served list is exactly what the library computes.
    let store = hcf_core::io::load_events(&dir.path().join("data/events.csv")).unwrap();
    let model = FmModel::load(&dir.path().join("model.json")).unwrap();
    let mut params = RecoParams { top_n: 3, ..RecoParams::default() };
    params.candidates.use_heterogeneous = model.variant == Variant::Hcf;
    let target = store.lookup_user("u40").unwrap();
    let rec = recommend(&store, &model, target, &params).unwrap();
    assert_eq!(rec.items.len(), items.len());
    for (json, ranked) in items.iter().zip(&rec.items) {
        assert_eq!(json["item"], store.key_of(ranked.id).unwrap());
        assert_eq!(
            json["score"].as_f64().unwrap().to_bits(),
            ranked.score.to_bits(),
            "scores must round-trip through JSON bit-exactly"
        );
    }

    // Nothing served at all is an error, but the error record still lands.
    let err = run_err(hcf(dir.path()).args([
        "recommend",
        "--data",
        "data/events.csv",
        "--model",
        "model.json",
        "--out",
        "recs_none.jsonl",
        "--user",
        "ghost",
    ]));
    assert!(
        stderr_of(&err).contains("no requested user exists"),
        "{}",
        stderr_of(&err)
    );
    let lines = json_lines(&dir.path().join("recs_none.jsonl"));
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["error"], "unknown user key");
}

#[test]
fn recommend_top_n_flag_beats_file_beats_default() {
    let dir = tempfile::tempdir().unwrap();
    datagen_small(dir.path());
    train_small(dir.path(), "reco", "model.json");
    fs::write(dir.path().join("reco.toml"), "top_n = 2\n").unwrap();

    let list_len = |out_name: &str, extra: &[&str]| {
        let mut args = vec![
            "recommend",
            "--data",
            "data/events.csv",
            "--model",
            "model.json",
            "--user",
            "u40",
            "--out",
            out_name,
        ];
        args.extend_from_slice(extra);
        run_ok(hcf(dir.path()).args(&args));
        json_lines(&dir.path().join(out_name))[0]["items"]
            .as_array()
            .unwrap()
            .len()
    };

    // Flag wins over the file, the file wins over the built-in default.
    assert_eq!(list_len("flag.jsonl", &["--config", "reco.toml", "--top-n", "1"]), 1);
    assert_eq!(list_len("file.jsonl", &["--config", "reco.toml"]), 2);

    let store = hcf_core::io::load_events(&dir.path().join("data/events.csv")).unwrap();
    let model = FmModel::load(&dir.path().join("model.json")).unwrap();
    let mut params = RecoParams::default();
    params.candidates.use_heterogeneous = model.variant == Variant::Hcf;
    let rec = recommend(&store, &model, store.lookup_user("u40").unwrap(), &params).unwrap();
    assert_eq!(list_len("default.jsonl", &[]), rec.items.len());
}

#[test]
fn disseminate_matches_the_library_loop_and_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    datagen_small(dir.path());
    train_small(dir.path(), "dism", "dmodel.json");

    let spread = |out_name: &str, iterations: &str| {
        run_ok(hcf(dir.path()).args([
            "disseminate",
            "--data",
            "data/events.csv",
            "--model",
            "dmodel.json",
            "--truth",
            "data/truth.json",
            "--out",
            out_name,
            "--item",
            "i0",
            "--iterations",
            iterations,
            "--cohort",
            "4",
            "--seed",
            "5",
        ]))
    };
    let first = spread("spread.jsonl", "3");
    spread("spread_again.jsonl", "3");
    assert_eq!(
        read_bytes(&dir.path().join("spread.jsonl")),
        read_bytes(&dir.path().join("spread_again.jsonl")),
        "seeded reruns must log identical exposure trails"
    );

    // Mirror the loop in-process: same store, model, oracle, and knobs.
    let store = hcf_core::io::load_events(&dir.path().join("data/events.csv")).unwrap();
    let model = FmModel::load(&dir.path().join("dmodel.json")).unwrap();
    let truth = GroundTruth::load(&dir.path().join("data/truth.json")).unwrap();
    let oracle = ResponseOracle::new(&truth, 5);
    let mut params = DismParams { max_iterations: 3, initial_cohort: 4, ..DismParams::default() };
    params.candidates.use_heterogeneous = model.variant == Variant::Hcf;
    let item = store.lookup_item("i0").unwrap();
    let run = run_dissemination(&store, &model, item, &params, |cohort| {
        cohort
            .iter()
            .map(|&user| {
                let key = store.key_of(user).unwrap();
                (user, oracle.respond(key, "i0").unwrap())
            })
            .collect()
    })
    .unwrap();
    assert_eq!(run.records.len(), 3, "nothing should stall on this store");

    let logged: Vec<String> = fs::read_to_string(dir.path().join("spread.jsonl"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    let expected: Vec<String> =
        run.records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    assert_eq!(logged, expected);
    assert!(
        stdout_of(&first)
            .contains(&format!("dissemination of \"i0\": {} iterations", run.records.len())),
        "{}",
        stdout_of(&first)
    );

    // Zero rounds is a legal, empty run.
    spread("spread_empty.jsonl", "0");
    assert_eq!(fs::read_to_string(dir.path().join("spread_empty.jsonl")).unwrap(), "");
}

#[test]
fn evaluate_reports_exact_parity_when_training_data_has_no_negatives() {
    // Positives on the even (u+i) grid plus one lone negative; a 0.5
    // holdout rounds half away from zero, so that negative always lands
    // in the test split and the training remainder is purely positive.
    // With nothing for the signed variant's extra features to see, the
    // two variants must collapse to the same model and the report must
    // say exactly 100%.
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::new();
    for u in 0..6 {
        for i in 0..3 {
            if (u + i) % 2 == 0 {
                csv.push_str(&format!("u{u},i{i},1\n"));
            }
        }
    }
    csv.push_str("u0,i2,-1\n");
    fs::write(dir.path().join("events.csv"), csv).unwrap();
    fs::write(
        dir.path().join("eval.toml"),
        "[train]\nepochs = 3\n\n[eval]\nholdout_fraction = 0.5\n",
    )
    .unwrap();

    let out = run_ok(hcf(dir.path()).args([
        "evaluate",
        "--config",
        "eval.toml",
        "--seed",
        "4",
        "--data",
        "events.csv",
        "--out",
        "report.json",
        "--scenario",
        "reco-all",
    ]));
    assert!(stdout_of(&out).contains("100.0%"), "{}", stdout_of(&out));

    let reports: Vec<Value> =
        serde_json::from_slice(&read_bytes(&dir.path().join("report.json"))).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["scenario"], "reco-all");
    assert_eq!(reports[0]["relative_pct"].as_f64().unwrap(), 100.0);
    assert_eq!(reports[0]["auc_ccf"], reports[0]["auc_hcf"]);
}

#[test]
fn evaluate_names_the_scenario_it_cannot_build() {
    // Eight events per user: nobody is below the freshness cutoff, so
    // the new-user scenario has nothing to hold out.
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::new();
    for u in 0..6 {
        for i in 0..8 {
            let polarity = if (u * 8 + i) % 5 == 0 { -1 } else { 1 };
            csv.push_str(&format!("u{u},i{i},{polarity}\n"));
        }
    }
    fs::write(dir.path().join("events.csv"), csv).unwrap();

    let err = run_err(hcf(dir.path()).args([
        "evaluate",
        "--data",
        "events.csv",
        "--out",
        "report.json",
        "--scenario",
        "reco-new",
    ]));
    let text = stderr_of(&err);
    assert!(text.contains("scenario reco-new infeasible"), "{text}");
}

#[test]
fn data_dir_env_anchors_relative_paths() {
    let root = tempfile::tempdir().unwrap();
    let cwd = tempfile::tempdir().unwrap();
    fs::write(root.path().join("events.csv"), "a,x,1\na,y,-1\nb,x,1\n").unwrap();

    run_ok(
        hcf(cwd.path())
            .env("HCF_DATA_DIR", root.path())
            .args(["ingest", "--data", "events.csv", "--out", "normalized.csv"]),
    );
    assert!(root.path().join("normalized.csv").exists());
    assert!(root.path().join("normalized.csv.manifest.json").exists());
    assert!(
        !cwd.path().join("normalized.csv").exists(),
        "output must land under the data root, not the working directory"
    );
}
